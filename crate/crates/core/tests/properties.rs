mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use topobench::extract::{
    adjacencies, classify, extract_report, region_overlaps, segment, AdjacencyReport, ExtractParams, PixelClass,
};
use topobench::fixtures;
use topobench::metrics::{
    epoch_metrics, format_loss_log, parse_loss_log, parse_loss_log_document, total_losses, LossRecord,
    MetricsConfig,
};
use topobench::qualify::check_plan;
use topobench::raster::{compose_pair, degrade, outline_mask, render_target, split_pair, ColorMode, RasterImage};
use topobench::topology::{grey_profile, Rgb, RoomSpec, TopologyGraph};

fn milli(max: u32) -> impl Strategy<Value = f64> {
    (0..=max).prop_map(|k| k as f64 / 1000.0)
}

fn loss_record() -> impl Strategy<Value = LossRecord> {
    (
        (1u32..600, 0u64..10_000_000, milli(99_999), milli(9_999)),
        (milli(9_999), milli(99_999), milli(9_999), milli(9_999)),
        prop::collection::vec(("[A-Z][A-Za-z_]{0,6}", milli(9_999)), 0..3),
    )
        .prop_map(|((epoch, iters, time_s, data_s), (g_gan, g_l1, d_real, d_fake), extras)| LossRecord {
            epoch,
            iters,
            time_s,
            data_s,
            g_gan,
            g_l1,
            d_real,
            d_fake,
            extras: extras
                .into_iter()
                .filter(|(k, _)| !["G_GAN", "G_L1", "D_real", "D_fake"].contains(&k.as_str()))
                .collect(),
        })
}

fn text_line() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 =:.]{0,40}"
}

proptest! {
    #[test]
    fn loss_records_round_trip(records in prop::collection::vec(loss_record(), 0..40)) {
        let text = format_loss_log(&records);
        prop_assert_eq!(parse_loss_log(&text).unwrap(), records);
    }

    #[test]
    fn loss_documents_round_trip_byte_exact(
        lines in prop::collection::vec(prop_oneof![loss_record().prop_map(Ok), text_line().prop_map(Err)], 0..30),
        trailing in any::<bool>(),
    ) {
        let rendered: Vec<String> = lines
            .iter()
            .map(|l| match l {
                Ok(r) => format_loss_log(std::slice::from_ref(r)).trim_end_matches('\n').to_string(),
                Err(t) => t.clone(),
            })
            .collect();
        let mut text = rendered.join("\n");
        if trailing && !text.is_empty() {
            text.push('\n');
        }
        prop_assert_eq!(parse_loss_log_document(&text).unwrap().to_text(), text);
    }

    #[test]
    fn totals_follow_the_loss_definitions(r in loss_record(), lambda in 1u32..500) {
        let config = MetricsConfig { lambda_l1: lambda as f64, ..MetricsConfig::default() };
        let (g, d) = total_losses(&r, &config);
        prop_assert_eq!(g, r.g_gan + lambda as f64 * r.g_l1);
        prop_assert_eq!(d, r.d_real + r.d_fake);
    }
}

fn report(id: String, core_found: usize, total: usize) -> AdjacencyReport {
    AdjacencyReport {
        image_id: id,
        mode: ColorMode::Rgb,
        regions: vec![],
        adjacency: vec![],
        core_found,
        core_total: 11,
        extra: total - core_found,
        total_adjacencies: total,
        unlabeled_fraction: 0.0,
        grey_pairs: vec![],
        error: None,
    }
}

fn reports() -> impl Strategy<Value = Vec<AdjacencyReport>> {
    prop::collection::btree_map((1u32..6, 0usize..40), (0usize..=11, 0usize..10), 1..60).prop_map(|m| {
        m.into_iter()
            .map(|((e, i), (found, extra))| report(format!("epoch{e:03}/{i:06}_fake_B.png"), found, found + extra))
            .collect()
    })
}

proptest! {
    #[test]
    fn epoch_metrics_ignore_input_order(
        (original, shuffled) in reports().prop_flat_map(|r| (Just(r.clone()), Just(r).prop_shuffle())),
        sample_size in 1usize..12,
        seed in any::<u64>(),
    ) {
        let g = fixtures::case_house();
        let config = MetricsConfig { sample_size, seed, ..MetricsConfig::default() };
        let a = epoch_metrics(&original, &g, &config).unwrap();
        let b = epoch_metrics(&shuffled, &g, &config).unwrap();
        prop_assert_eq!(&a, &b);
        for m in &a {
            prop_assert!(m.n_samples <= sample_size);
            prop_assert!((0.0..=1.0).contains(&m.core_recall));
        }
    }
}

fn random_graph() -> impl Strategy<Value = TopologyGraph> {
    (2u32..15)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<u32>> = (2..=n).map(|k| (1..k).boxed()).collect();
            (Just(n), parents, prop::collection::vec(1u8..=5, n as usize))
        })
        .prop_map(|(n, parents, levels)| TopologyGraph {
            rooms: (1..=n)
                .map(|id| RoomSpec {
                    id,
                    name: format!("room {id}"),
                    grey_level: levels[id as usize - 1],
                    rgb: Rgb([id as u8 * 15, 0, 0]),
                    area_weight: 1.0,
                })
                .collect(),
            edges: parents.iter().enumerate().map(|(k, &p)| (p, k as u32 + 2)).collect(),
            entrance_id: 1,
        })
}

proptest! {
    #[test]
    fn grey_profile_counts_every_edge_once(g in random_graph()) {
        prop_assert_eq!(grey_profile(&g).total(), g.edges.len());
    }

    #[test]
    fn grey_profile_ignores_room_ids(
        (g, perm) in random_graph().prop_flat_map(|g| {
            let ids: Vec<u32> = (1..=g.rooms.len() as u32).collect();
            (Just(g), Just(ids).prop_shuffle())
        }),
    ) {
        let map = |id: u32| perm[id as usize - 1];
        let relabeled = TopologyGraph {
            rooms: g.rooms.iter().map(|r| RoomSpec { id: map(r.id), ..r.clone() }).collect(),
            edges: g.edges.iter().map(|&(a, b)| (map(b), map(a))).collect(),
            entrance_id: map(g.entrance_id),
        };
        prop_assert_eq!(grey_profile(&relabeled), grey_profile(&g));
    }
}

fn label_map(seed: u64) -> (Vec<Option<u32>>, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (24, 20);
    (common::random_label_map(&mut rng, w, h), w, h)
}

fn adjacency_of(img: &RasterImage, palette: &topobench::topology::Palette, params: &ExtractParams) -> Vec<(u32, u32, usize)> {
    let regions = segment(&classify(img, palette), params);
    adjacencies(&regions, img.width, img.height, params)
        .into_iter()
        .map(|(p, n)| (p.lo(), p.hi(), n))
        .collect()
}

fn transpose(img: &RasterImage) -> RasterImage {
    let mut out = RasterImage::filled(img.height, img.width, Rgb([0, 0, 0]));
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(y, x, img.get(x, y));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_ignores_palette_order_and_transposition(
        seed in any::<u64>(),
        order in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(),
        radius in 1usize..4,
        min_overlap in 1usize..6,
    ) {
        let (labels, w, h) = label_map(seed);
        let img = common::paint(&labels, w, h);
        let palette = fixtures::rgb_palette();
        let mut shuffled = palette.clone();
        shuffled.entries = order.iter().map(|&k| palette.entries[k]).collect();
        let params = ExtractParams { min_area_fraction: 0.002, dilation_radius: radius, min_overlap };
        let base = adjacency_of(&img, &palette, &params);
        prop_assert_eq!(&adjacency_of(&img, &shuffled, &params), &base);
        prop_assert_eq!(&adjacency_of(&transpose(&img), &palette, &params), &base);
    }

    #[test]
    fn larger_dilation_never_loses_overlap(seed in any::<u64>(), radius in 1usize..5) {
        let (labels, w, h) = label_map(seed);
        let params = ExtractParams { min_area_fraction: 1e-9, ..ExtractParams::default() };
        let regions = segment(&classify(&common::paint(&labels, w, h), &fixtures::rgb_palette()), &params);
        let small = region_overlaps(&regions, w, h, radius);
        let large = region_overlaps(&regions, w, h, radius + 1);
        for (pair, n) in &small {
            prop_assert!(large.get(pair).copied().unwrap_or(0) >= *n, "{:?}", pair);
        }
    }

    #[test]
    fn stricter_contact_only_adds_reasons(seed in any::<u64>(), w in 8usize..24, h in 8usize..24, m in 1usize..5) {
        let plan = common::random_plan(&mut ChaCha8Rng::seed_from_u64(seed), w, h);
        let g = fixtures::case_house();
        let loose = check_plan(&plan, &g, m).unwrap();
        let strict = check_plan(&plan, &g, m + 1).unwrap();
        for r in &loose.reasons {
            prop_assert!(strict.reasons.contains(r), "{:?} lost at {}", r, m + 1);
        }
        prop_assert!(loose.is_qualified() || !strict.is_qualified());
    }

    #[test]
    fn pristine_renders_classify_fully(seed in any::<u64>(), w in 6usize..20, h in 6usize..20, scale in 1usize..5, grey in any::<bool>()) {
        let plan = common::random_plan(&mut ChaCha8Rng::seed_from_u64(seed), w, h);
        let g = fixtures::case_house();
        let (mode, palette) = if grey {
            (ColorMode::Grey, fixtures::grey_palette())
        } else {
            (ColorMode::Rgb, fixtures::rgb_palette())
        };
        let img = render_target(&plan, &g, mode, &palette, scale).unwrap();
        let map = classify(&img, &palette);
        prop_assert_eq!(map.unlabeled_fraction(), 0.0);
        for (i, on) in outline_mask(&plan.boundary(), scale).into_iter().enumerate() {
            prop_assert_eq!(map.classes[i] == PixelClass::Boundary, on);
        }
        let report = extract_report("x", &img, &palette, &g, mode, &ExtractParams::default()).unwrap();
        prop_assert!(report.core_found <= report.core_total);
    }

    #[test]
    fn degradation_is_deterministic(seed in any::<u64>(), level in 0.0f64..=1.0, stream in any::<u64>()) {
        let plan = common::random_plan(&mut ChaCha8Rng::seed_from_u64(seed), 12, 12);
        let img = render_target(&plan, &fixtures::case_house(), ColorMode::Rgb, &fixtures::rgb_palette(), 3).unwrap();
        prop_assert_eq!(degrade(&img, level, stream), degrade(&img, level, stream));
        prop_assert_eq!(degrade(&img, 0.0, stream), img);
    }

    #[test]
    fn split_undoes_compose(w in 1usize..30, h in 1usize..30, a in any::<[u8; 3]>(), b in any::<[u8; 3]>(), seed in any::<u64>()) {
        let mut left = RasterImage::filled(w, h, Rgb(a));
        let right = RasterImage::filled(w, h, Rgb(b));
        let x = (seed as usize) % w;
        let y = (seed as usize / 7) % h;
        left.set(x, y, Rgb(b));
        let (l, r) = split_pair(&compose_pair(&left, &right).unwrap());
        prop_assert_eq!(l, left);
        prop_assert_eq!(r, right);
    }
}
