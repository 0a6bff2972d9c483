//! C interface to topobench.
//!
//! Objects are opaque heap handles created by `tb_*_new`/`tb_*_from_*` style calls and
//! released with the matching `tb_*_free`. Every fallible call returns a [`TbStatus`];
//! on failure `tb_last_error()` describes the problem until the next call on the same
//! thread. Strings handed out by the library must be released with `tb_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use topobench::extract::{extract_report, AdjacencyReport, ExtractParams};
use topobench::fixtures;
use topobench::metrics::{parse_loss_log, total_losses, MetricsConfig};
use topobench::plangen::{generate_plan, FloorPlan, GenError, GenParams};
use topobench::qualify::{check_plan, DEFAULT_MIN_CONTACT};
use topobench::raster::{degrade, render_target, ColorMode, RasterImage};
use topobench::topology::{grey_profile, validate_graph, TopologyGraph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    GenerationFailed = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbColorMode {
    Grey = 0,
    Rgb = 1,
}

impl From<TbColorMode> for ColorMode {
    fn from(m: TbColorMode) -> Self {
        match m {
            TbColorMode::Grey => ColorMode::Grey,
            TbColorMode::Rgb => ColorMode::Rgb,
        }
    }
}

pub struct TbGraph(TopologyGraph);
pub struct TbPlan(FloorPlan);
pub struct TbImage(RasterImage);
pub struct TbReport(AdjacencyReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TbStatus, String);

type Outcome<T> = Result<T, Failure>;

fn fail<T>(status: TbStatus, msg: impl Into<String>) -> Outcome<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Outcome<()>) -> TbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return fail(TbStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(TbStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| Failure(TbStatus::NullPointer, format!("{name} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return fail(TbStatus::NullPointer, "output pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Outcome<()> {
    if out.is_null() {
        return fail(TbStatus::NullPointer, "output pointer is null");
    }
    *out = CString::new(s).expect("json has no nul").into_raw();
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return fail(TbStatus::NullPointer, "output pointer is null");
    }
    *out = value;
    Ok(())
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn tb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The bundled 12-room case-house graph.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_graph_case_house(out: *mut *mut TbGraph) -> TbStatus {
    guard(|| put(out, TbGraph(fixtures::case_house())))
}

/// Parses and validates a graph from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_graph_from_json(json: *const c_char, out: *mut *mut TbGraph) -> TbStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let graph = TopologyGraph::from_json(text).or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        if let Err(vs) = validate_graph(&graph) {
            let msg = vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return fail(TbStatus::InvalidInput, msg);
        }
        put(out, TbGraph(graph))
    })
}

/// # Safety
/// `graph` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_graph_free(graph: *mut TbGraph) {
    free_box(graph)
}

/// # Safety
/// `graph` must be a live handle; the output pointers must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tb_graph_counts(graph: *const TbGraph, rooms: *mut usize, edges: *mut usize) -> TbStatus {
    guard(|| {
        let g = &ref_arg(graph, "graph")?.0;
        put_value(rooms, g.rooms.len())?;
        put_value(edges, g.edges.len())
    })
}

/// Grey-level pair counts as a JSON object such as `{"1-3":1,"2-3":2}`.
///
/// # Safety
/// `graph` must be a live handle and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_graph_grey_profile_json(graph: *const TbGraph, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let g = &ref_arg(graph, "graph")?.0;
        let profile = grey_profile(g);
        let map: serde_json::Map<String, serde_json::Value> =
            profile.counts.iter().map(|(p, n)| (p.to_string(), (*n).into())).collect();
        put_string(out, serde_json::Value::Object(map).to_string())
    })
}

/// Generates one qualified plan on a bundled boundary (`rect`, `notch_corner`,
/// `notch_side`). Zero `density` or `max_adjacency_distance` selects the default.
///
/// # Safety
/// `graph` must be a live handle, `boundary` a nul-terminated string and `out` valid for
/// writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_generate_plan(
    graph: *const TbGraph,
    boundary: *const c_char,
    density: u32,
    max_adjacency_distance: u32,
    seed: u64,
    out: *mut *mut TbPlan,
) -> TbStatus {
    guard(|| {
        let g = &ref_arg(graph, "graph")?.0;
        let name = str_arg(boundary, "boundary")?;
        let Some(site) = fixtures::boundary_by_name(name) else {
            return fail(TbStatus::InvalidInput, format!("unknown boundary {name:?}"));
        };
        let defaults = GenParams::default();
        let params = GenParams {
            density: if density == 0 { defaults.density } else { density },
            max_adjacency_distance: if max_adjacency_distance == 0 {
                defaults.max_adjacency_distance
            } else {
                max_adjacency_distance
            },
            seed,
            ..defaults
        };
        match generate_plan(g, &site, &params) {
            Ok(plan) => put(out, TbPlan(plan)),
            Err(e @ GenError::GenerationFailed { .. }) => fail(TbStatus::GenerationFailed, e.to_string()),
            Err(e) => fail(TbStatus::InvalidInput, e.to_string()),
        }
    })
}

/// # Safety
/// `json` must be a nul-terminated string and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_plan_from_json(json: *const c_char, out: *mut *mut TbPlan) -> TbStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let plan: FloorPlan = serde_json::from_str(text).or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        put(out, TbPlan(plan))
    })
}

/// # Safety
/// `plan` must be a live handle and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_plan_to_json(plan: *const TbPlan, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        put_string(out, serde_json::to_string(p).expect("plan serializes"))
    })
}

/// # Safety
/// `plan` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_plan_free(plan: *mut TbPlan) {
    free_box(plan)
}

/// Writes 1 to `qualified` if the plan passes the recheck rules, else 0. The reasons are
/// written as JSON to `reasons_json` when it is not null.
///
/// # Safety
/// `plan` and `graph` must be live handles and `qualified` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tb_plan_qualify(
    plan: *const TbPlan,
    graph: *const TbGraph,
    qualified: *mut i32,
    reasons_json: *mut *mut c_char,
) -> TbStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        let g = &ref_arg(graph, "graph")?.0;
        let result = check_plan(p, g, DEFAULT_MIN_CONTACT).or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        put_value(qualified, result.is_qualified() as i32)?;
        if !reasons_json.is_null() {
            put_string(reasons_json, serde_json::to_string(&result.reasons).expect("reasons serialize"))?;
        }
        Ok(())
    })
}

/// Renders the plan with the bundled palette for `mode`. Zero `scale` means 4.
///
/// # Safety
/// `plan` and `graph` must be live handles and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_render_target(
    plan: *const TbPlan,
    graph: *const TbGraph,
    mode: TbColorMode,
    scale: usize,
    out: *mut *mut TbImage,
) -> TbStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        let g = &ref_arg(graph, "graph")?.0;
        let mode = ColorMode::from(mode);
        let palette = match mode {
            ColorMode::Grey => fixtures::grey_palette(),
            ColorMode::Rgb => fixtures::rgb_palette(),
        };
        let scale = if scale == 0 { topobench::raster::DEFAULT_SCALE } else { scale };
        let img = render_target(p, g, mode, &palette, scale).or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        put(out, TbImage(img))
    })
}

/// Degraded copy of `image`; `level` 0 returns an identical image.
///
/// # Safety
/// `image` must be a live handle and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_image_degrade(
    image: *const TbImage,
    level: f64,
    stream: u64,
    out: *mut *mut TbImage,
) -> TbStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.0;
        if !(0.0..=1.0).contains(&level) {
            return fail(TbStatus::InvalidInput, format!("level {level} outside [0, 1]"));
        }
        put(out, TbImage(degrade(img, level, stream)))
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_image_read_png(path: *const c_char, out: *mut *mut TbImage) -> TbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let img = RasterImage::read_png(Path::new(path)).or_else(|e| fail(TbStatus::Io, e.to_string()))?;
        put(out, TbImage(img))
    })
}

/// # Safety
/// `image` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tb_image_write_png(image: *const TbImage, path: *const c_char) -> TbStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.0;
        let path = str_arg(path, "path")?;
        img.write_png(Path::new(path)).or_else(|e| fail(TbStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `image` must be a live handle; the output pointers must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tb_image_size(image: *const TbImage, width: *mut usize, height: *mut usize) -> TbStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.0;
        put_value(width, img.width)?;
        put_value(height, img.height)
    })
}

/// # Safety
/// `image` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_image_free(image: *mut TbImage) {
    free_box(image)
}

/// Adjacency report for one image with the default extraction parameters and the bundled
/// palette for `mode`.
///
/// # Safety
/// `image` and `graph` must be live handles, `image_id` null or a nul-terminated string,
/// and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_extract(
    image: *const TbImage,
    graph: *const TbGraph,
    mode: TbColorMode,
    image_id: *const c_char,
    out: *mut *mut TbReport,
) -> TbStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.0;
        let g = &ref_arg(graph, "graph")?.0;
        let id = if image_id.is_null() { "" } else { str_arg(image_id, "image_id")? };
        let mode = ColorMode::from(mode);
        let palette = match mode {
            ColorMode::Grey => fixtures::grey_palette(),
            ColorMode::Rgb => fixtures::rgb_palette(),
        };
        let report = extract_report(id, img, &palette, g, mode, &ExtractParams::default())
            .or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        put(out, TbReport(report))
    })
}

/// # Safety
/// `report` must be a live handle; the output pointers must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tb_report_counts(
    report: *const TbReport,
    core_found: *mut usize,
    core_total: *mut usize,
    total_adjacencies: *mut usize,
) -> TbStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.0;
        put_value(core_found, r.core_found)?;
        put_value(core_total, r.core_total)?;
        put_value(total_adjacencies, r.total_adjacencies)
    })
}

/// # Safety
/// `report` must be a live handle and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_report_to_json(report: *const TbReport, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.0;
        put_string(out, serde_json::to_string(r).expect("report serializes"))
    })
}

/// # Safety
/// `report` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_report_free(report: *mut TbReport) {
    free_box(report)
}

/// Generator and discriminator totals of one loss record.
///
/// # Safety
/// The output pointers must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tb_total_losses(
    g_gan: f64,
    g_l1: f64,
    d_real: f64,
    d_fake: f64,
    lambda_l1: f64,
    generator_total: *mut f64,
    discriminator_total: *mut f64,
) -> TbStatus {
    guard(|| {
        let config = MetricsConfig { lambda_l1, ..MetricsConfig::default() };
        let record = topobench::metrics::LossRecord {
            epoch: 1,
            iters: 0,
            time_s: 0.0,
            data_s: 0.0,
            g_gan,
            g_l1,
            d_real,
            d_fake,
            extras: vec![],
        };
        let (g, d) = total_losses(&record, &config);
        put_value(generator_total, g)?;
        put_value(discriminator_total, d)
    })
}

/// Parses a pix2pix loss log and returns its records as a JSON array.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_parse_loss_log_json(text: *const c_char, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let records = parse_loss_log(text).or_else(|e| fail(TbStatus::InvalidInput, e.to_string()))?;
        put_string(out, serde_json::to_string(&records).expect("records serialize"))
    })
}
