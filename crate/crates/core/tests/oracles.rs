mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topobench::extract::{classify, segment, ExtractParams};
use topobench::fixtures;
use topobench::metrics::{detect_phases, fit_three_segments};
use topobench::plangen::{generate_dataset, GenParams, EMPTY};
use topobench::qualify::Contacts;

#[test]
fn extractor_matches_four_adjacency_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let (w, h) = (rng.random_range(4..40), rng.random_range(4..40));
        let labels = common::random_label_map(&mut rng, w, h);
        assert_eq!(
            common::pipeline_adjacency(&labels, w, h, 1, 1),
            common::oracle_adjacency(&labels, w, h),
            "{w}x{h} map"
        );
    }
}

#[test]
fn segments_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = ExtractParams { min_area_fraction: 1e-9, ..ExtractParams::default() };
    for _ in 0..100 {
        let labels = common::random_label_map(&mut rng, 24, 24);
        let oracle = common::components(&labels, 24, 24);
        let map = classify(&common::paint(&labels, 24, 24), &fixtures::rgb_palette());
        let regions = segment(&map, &params);
        let n_oracle = oracle.iter().flatten().max().map_or(0, |m| m + 1);
        assert_eq!(regions.len(), n_oracle);
        for r in &regions {
            let id = oracle[r.pixels[0] as usize];
            assert!(r.pixels.iter().all(|&p| oracle[p as usize] == id));
            assert_eq!(r.pixels.len(), oracle.iter().filter(|&&c| c == id).count());
            assert_eq!(Some(r.label), labels[r.pixels[0] as usize]);
        }
    }
}

#[test]
fn small_regions_are_dropped_at_the_area_threshold() {
    // 20x20 = 400 px, threshold 0.01 -> 4 px; a 2x2 island survives, a 1x3 strip does not
    let mut labels = vec![Some(1); 400];
    for (x, y) in [(3, 3), (4, 3), (3, 4), (4, 4)] {
        labels[y * 20 + x] = Some(2);
    }
    for x in 10..13 {
        labels[10 * 20 + x] = Some(3);
    }
    let params = ExtractParams { min_area_fraction: 0.01, ..ExtractParams::default() };
    let map = classify(&common::paint(&labels, 20, 20), &fixtures::rgb_palette());
    let kept: Vec<u32> = segment(&map, &params).iter().map(|r| r.label).collect();
    assert_eq!(kept, vec![1, 2]);
}

#[test]
fn knot_search_matches_direct_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(6..30);
        let mut epoch = rng.random_range(0..5);
        let series: Vec<(u32, f64)> = (0..n)
            .map(|_| {
                epoch += rng.random_range(1..4);
                (epoch, rng.random_range(-3.0..3.0))
            })
            .collect();
        let fit = fit_three_segments(&series).unwrap();
        let fits = common::brute_force_fits(&series);
        let best = fits.iter().map(|f| f.2).fold(f64::INFINITY, f64::min);
        let at_choice = fits.iter().find(|f| (f.0, f.1) == (fit.b1, fit.b2)).unwrap().2;
        let scale = series.iter().map(|p| p.1 * p.1).sum::<f64>();
        assert!(at_choice <= best + 1e-9 * scale, "chose {:?} with {at_choice}, best {best}", (fit.b1, fit.b2));
        assert!((fit.sse - at_choice).abs() <= 1e-8 * scale.max(1.0), "{} vs {at_choice}", fit.sse);
    }
}

#[test]
fn exact_three_piece_line_is_recovered() {
    for (b1, b2) in [(3, 100), (10, 11), (2, 199), (50, 150)] {
        let s = common::hinge_series(1..=200, b1 as f64, b2 as f64);
        let p = detect_phases(&s).unwrap();
        assert_eq!((p.early_end, p.middle_end), (b1, b2));
        assert_eq!(common::oracle_breaks(&s), (b1, b2));
    }
}

#[test]
fn logistic_breaks_are_frozen() {
    let s = common::logistic_series();
    assert_eq!(common::oracle_breaks(&s), (15, 37));
    let p = detect_phases(&s).unwrap();
    assert_eq!((p.early_end, p.middle_end), (15, 37));
}

#[test]
fn generated_plans_pass_the_cell_scan() {
    let g = fixtures::case_house();
    for name in fixtures::BOUNDARY_NAMES {
        let boundary = fixtures::boundary_by_name(name).unwrap();
        let params = GenParams { seed: 31, ..GenParams::default() };
        let plans = generate_dataset(&g, &boundary, &params, 15).unwrap().plans;
        for plan in &plans {
            let contacts = Contacts::of(plan);
            for &(a, b) in &g.edges {
                let (side, corner) = common::cell_contacts(plan, a, b);
                assert!(side >= 2, "{name} seed {}: {a}-{b} has {side} sides", plan.seed);
                assert_eq!((side, corner), (contacts.side(a, b), contacts.corner(a, b)));
            }
            for (i, &c) in plan.cells.iter().enumerate() {
                assert!(boundary.mask[i] || c == EMPTY, "{name}: cell {i} outside the site");
            }
            let (w, h) = (plan.width, plan.height);
            let open = (0..w * h).any(|i| {
                let (x, y) = (i % w, i / w);
                plan.cells[i] == g.entrance_id as i32
                    && (x == 0
                        || y == 0
                        || x == w - 1
                        || y == h - 1
                        || !boundary.mask[i - 1]
                        || !boundary.mask[i + 1]
                        || !boundary.mask[i - w]
                        || !boundary.mask[i + w])
            });
            assert!(open, "{name}: entrance enclosed");
        }
    }
}

#[test]
fn hand_built_fixtures_have_the_intended_contacts() {
    let base = common::qualified_fixture();
    let g = fixtures::case_house();
    for &(a, b) in &g.edges {
        assert_eq!(common::cell_contacts(&base, a, b).0, 4, "{a}-{b}");
    }
    assert_eq!(common::cell_contacts(&common::enclosed_entrance_fixture(), 1, 4).0, 8);
    assert_eq!(common::cell_contacts(&common::adjacency_gap_fixture(), 3, 9), (0, 0));
    assert_eq!(common::cell_contacts(&common::point_contact_fixture(), 6, 12), (1, 1));
}
