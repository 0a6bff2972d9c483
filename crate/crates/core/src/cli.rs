//! The `topobench` command line.
//!
//! Settings come from flags, then an optional TOML file (`--config`), then defaults.
//! The seed falls back to `TOPOBENCH_SEED` when neither a flag nor the file sets it.
//! Every subcommand prints one JSON document on stdout and logs to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::extract::{batch_extract_with, reports_to_csv, reports_to_jsonl, AdjacencyReport, ExtractParams, DEFAULT_IMAGE_FILTER};
use crate::fixtures;
use crate::metrics::{
    detect_phases, emit_report, epoch_losses, epoch_of, epoch_metrics, mean_total_adjacencies, parse_loss_log,
    turning_points, EpochLosses, EpochMetrics, LossRecord, MetricsConfig, MetricsError, PhaseSegmentation,
    ReportInputs,
};
use crate::plangen::{dominant_reason, generate_dataset, histogram_summary, pre_evaluate, FloorPlan, GenError, GenParams, SiteBoundary};
use crate::qualify::{check_plan, DEFAULT_MIN_CONTACT};
use crate::raster::{
    compose_pair, degrade, degrade_stream, pair_file_name, render_source, render_target, split_pair, ColorMode,
    DegradeSchedule, RasterImage, SourceKind, DEFAULT_SCALE,
};
use crate::topology::{validate_graph, Palette, TopologyGraph};

pub const SEED_ENV: &str = "TOPOBENCH_SEED";
pub const PRE_EVALUATE_TRIALS: usize = 20;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("no file name matches the epoch pattern: {0}")]
    NoMatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Io(_) => 4,
            CliError::NoMatch(_) => 5,
        }
    }
}

fn io_err(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what}: {e}"))
}

fn metrics_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::OutputUnwritable { .. } => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `dataset/{train,val}/NNNNNN.png`, source left and target right.
    #[default]
    Composed,
    /// `dataset/A/{train,val}` sources and `dataset/B/{train,val}` targets.
    Split,
}

/// Contents of a `--config` file. Relative paths are resolved against the file's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub graph: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    pub boundary: Option<String>,
    pub output: Option<PathBuf>,
    pub mode: ColorMode,
    pub source: SourceKind,
    pub layout: Layout,
    pub scale: usize,
    pub count: usize,
    pub val_fraction: f64,
    pub gen: GenParams,
    pub extract: ExtractParams,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            jobs: None,
            graph: None,
            palette: None,
            boundary: None,
            output: None,
            mode: ColorMode::Rgb,
            source: SourceKind::Boundary,
            layout: Layout::Composed,
            scale: DEFAULT_SCALE,
            count: 2500,
            val_fraction: 0.1,
            gen: GenParams::default(),
            extract: ExtractParams::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.graph, &mut cfg.palette, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(b) = &mut cfg.boundary {
            if fixtures::boundary_by_name(b).is_none() && Path::new(b.as_str()).is_relative() {
                *b = base.join(&*b).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "topobench", version, about = "Topology-preserving floor-plan datasets and adjacency learning-rate evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML settings file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed. Falls back to the config file, then TOPOBENCH_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Topology graph JSON (default: bundled case house).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Palette JSON (default: bundled palette for the mode).
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ColorMode>,
    /// Pixels per grid cell.
    #[arg(long)]
    pub scale: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct GenArgs {
    /// Fixture name (rect, notch_corner, notch_side), boundary JSON or monochrome PNG.
    #[arg(long)]
    pub boundary: Option<String>,
    #[arg(long)]
    pub density: Option<u32>,
    #[arg(long)]
    pub max_adjacency_distance: Option<u32>,
    #[arg(long)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Args, Default)]
pub struct ExtractArgs {
    #[arg(long)]
    pub min_area_fraction: Option<f64>,
    #[arg(long)]
    pub dilation_radius: Option<usize>,
    #[arg(long)]
    pub min_overlap: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct MetricsArgs {
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    /// Pattern with named groups `epoch` and `sample`.
    #[arg(long)]
    pub epoch_regex: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired dataset and its manifest.
    Gen {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_enum)]
        source: Option<SourceKind>,
        #[arg(long, value_enum)]
        layout: Option<Layout>,
        /// Fraction of pairs placed in `val`.
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recheck plans (JSON or JSON lines) against the graph.
    Qualify {
        plans: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MIN_CONTACT)]
        min_contact: usize,
    },
    /// Render plans to PNG.
    Render {
        plans: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum)]
        source: Option<SourceKind>,
        #[arg(long, value_enum)]
        layout: Option<Layout>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a fake-epoch image tree by degrading target renders.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Use the plans of an existing `gen` output instead of generating new ones.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        /// Number of epochs with levels evenly spaced from 1 down to 0.
        #[arg(long, default_value_t = 20, conflicts_with = "levels")]
        epochs: usize,
        /// Explicit comma-separated degradation levels, one per epoch.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract adjacency reports from a directory of images.
    Extract {
        images: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        extract: ExtractArgs,
        /// Images are composed pairs; evaluate the right half.
        #[arg(long)]
        pairs: bool,
        /// Report file, `.csv` or `.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning-rate curves, phases and loss curves for a fake-epoch tree.
    Evaluate {
        images: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        metrics: MetricsArgs,
        #[arg(long)]
        loss_log: Option<PathBuf>,
        /// A `gen` output whose target renders give the dataset-mean reference line.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss tables and charts from a pix2pix loss log.
    Losscurve {
        loss_log: PathBuf,
        #[arg(long)]
        lambda_l1: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Settings after merging flags, file and defaults.
struct Resolved {
    cfg: RunConfig,
    seed: u64,
}

impl Resolved {
    fn new(global: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = match &global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a u64")))?),
            Err(_) => None,
        };
        let seed = global.seed.or(cfg.seed).or(env_seed).unwrap_or(0);
        cfg.seed = Some(seed);
        cfg.gen.seed = seed;
        cfg.metrics.seed = seed;
        if global.jobs.is_some() {
            cfg.jobs = global.jobs;
        }
        Ok(Resolved { cfg, seed })
    }

    fn apply_input(&mut self, a: &InputArgs) {
        set(&mut self.cfg.graph, a.graph.clone());
        set(&mut self.cfg.palette, a.palette.clone());
        over(&mut self.cfg.mode, a.mode);
        over(&mut self.cfg.scale, a.scale);
    }

    fn apply_gen(&mut self, a: &GenArgs) {
        set(&mut self.cfg.boundary, a.boundary.clone());
        over(&mut self.cfg.gen.density, a.density);
        over(&mut self.cfg.gen.max_adjacency_distance, a.max_adjacency_distance);
        over(&mut self.cfg.gen.max_retries, a.max_retries);
    }

    fn apply_extract(&mut self, a: &ExtractArgs) {
        over(&mut self.cfg.extract.min_area_fraction, a.min_area_fraction);
        over(&mut self.cfg.extract.dilation_radius, a.dilation_radius);
        over(&mut self.cfg.extract.min_overlap, a.min_overlap);
    }

    fn apply_metrics(&mut self, a: &MetricsArgs) {
        over(&mut self.cfg.metrics.sample_size, a.sample_size);
        over(&mut self.cfg.metrics.lambda_l1, a.lambda_l1);
        if let Some(r) = &a.epoch_regex {
            self.cfg.metrics.epoch_regex = r.clone();
        }
    }

    fn output(&self, flag: &Option<PathBuf>, default: &str) -> PathBuf {
        flag.clone().or_else(|| self.cfg.output.clone()).unwrap_or_else(|| PathBuf::from(default))
    }

    fn graph(&self) -> Result<TopologyGraph, CliError> {
        let graph = match &self.cfg.graph {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("graph {}: {e}", p.display())))?;
                TopologyGraph::from_json(&text).map_err(|e| CliError::Config(format!("graph {}: {e}", p.display())))?
            }
            None => fixtures::case_house(),
        };
        validate_graph(&graph).map_err(|vs| {
            CliError::Config(format!(
                "invalid graph: {}",
                vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
            ))
        })?;
        Ok(graph)
    }

    fn palette(&self) -> Result<Palette, CliError> {
        match &self.cfg.palette {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("palette {}: {e}", p.display())))?;
                Palette::from_json(&text).map_err(|e| CliError::Config(format!("palette {}: {e}", p.display())))
            }
            None => Ok(match self.cfg.mode {
                ColorMode::Rgb => fixtures::rgb_palette(),
                ColorMode::Grey => fixtures::grey_palette(),
            }),
        }
    }

    fn boundary(&self) -> Result<SiteBoundary, CliError> {
        let name = self.cfg.boundary.as_deref().unwrap_or("rect");
        load_boundary(name)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.cfg.jobs {
            if n == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))
    }
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn over<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// A fixture name, a JSON boundary, or a PNG where non-white pixels are inside.
pub fn load_boundary(spec: &str) -> Result<SiteBoundary, CliError> {
    if let Some(b) = fixtures::boundary_by_name(spec) {
        return Ok(b);
    }
    let path = Path::new(spec);
    let boundary = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        let img = RasterImage::read_png(path).map_err(|e| CliError::Config(format!("boundary {spec}: {e}")))?;
        SiteBoundary::from_image(&img)
    } else {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("boundary {spec}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("boundary {spec}: {e}")))?
    };
    boundary.validate().map_err(|e| CliError::Config(format!("boundary {spec}: {e}")))?;
    Ok(boundary)
}

/// Reads a single plan JSON or a JSON-lines file of plans.
pub fn load_plans(path: &Path) -> Result<Vec<FloorPlan>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path.display(), e))?;
    if let Ok(plan) = serde_json::from_str::<FloorPlan>(&text) {
        return Ok(vec![plan]);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Config(format!("{} plan {i}: {e}", path.display())))
        })
        .collect()
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir.display(), e))?;
    }
    fs::write(path, body).map_err(|e| io_err(path.display(), e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_file(path, serde_json::to_string_pretty(value).expect("json") + "\n")
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its JSON summary.
pub fn execute(cli: Cli) -> Result<Value, CliError> {
    let mut r = Resolved::new(&cli.global)?;
    match cli.command {
        Command::Gen { input, gen, count, source, layout, val_fraction, out } => {
            r.apply_input(&input);
            r.apply_gen(&gen);
            over(&mut r.cfg.count, count);
            over(&mut r.cfg.source, source);
            over(&mut r.cfg.layout, layout);
            over(&mut r.cfg.val_fraction, val_fraction);
            let out = r.output(&out, "topobench-out");
            r.pool()?.install(|| cmd_gen(&r, &out))
        }
        Command::Qualify { plans, graph, min_contact } => {
            set(&mut r.cfg.graph, Some(graph).flatten());
            cmd_qualify(&r, &plans, min_contact)
        }
        Command::Render { plans, input, source, layout, out } => {
            r.apply_input(&input);
            over(&mut r.cfg.source, source);
            over(&mut r.cfg.layout, layout);
            let out = r.output(&out, "renders");
            r.pool()?.install(|| cmd_render(&r, &plans, &out))
        }
        Command::Simulate { input, gen, dataset, count, epochs, levels, out } => {
            r.apply_input(&input);
            r.apply_gen(&gen);
            let schedule = match levels {
                Some(levels) => DegradeSchedule { levels, seed: r.seed },
                None => DegradeSchedule::linear(epochs, r.seed),
            };
            let count = count.unwrap_or(50);
            let out = r.output(&out, "simulated");
            r.pool()?.install(|| cmd_simulate(&r, dataset.as_deref(), count, &schedule, &out))
        }
        Command::Extract { images, input, extract, pairs, out } => {
            r.apply_input(&input);
            r.apply_extract(&extract);
            r.pool()?.install(|| cmd_extract(&r, &images, pairs, out.as_deref()))
        }
        Command::Evaluate { images, input, extract, metrics, loss_log, dataset, out } => {
            r.apply_input(&input);
            r.apply_extract(&extract);
            r.apply_metrics(&metrics);
            let out = r.output(&out, "report");
            r.pool()?.install(|| cmd_evaluate(&r, &images, loss_log.as_deref(), dataset.as_deref(), &out))
        }
        Command::Losscurve { loss_log, lambda_l1, out } => {
            over(&mut r.cfg.metrics.lambda_l1, lambda_l1);
            let out = r.output(&out, "report");
            cmd_losscurve(&r, &loss_log, &out)
        }
    }
}

fn gen_error(e: GenError) -> CliError {
    match e {
        GenError::GenerationFailed { .. } => CliError::Generation(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Images for one plan: the composed pair, or the source and target separately.
fn render_plan(
    plan: &FloorPlan,
    graph: &TopologyGraph,
    palette: &Palette,
    cfg: &RunConfig,
) -> Result<(RasterImage, RasterImage), CliError> {
    let target = render_target(plan, graph, cfg.mode, palette, cfg.scale).map_err(|e| CliError::Config(e.to_string()))?;
    let source = render_source(plan, cfg.source, palette, cfg.scale);
    Ok((source, target))
}

fn write_rendered(
    root: &Path,
    split: &str,
    index: usize,
    source: &RasterImage,
    target: &RasterImage,
    layout: Layout,
) -> Result<Vec<PathBuf>, CliError> {
    let name = pair_file_name(index);
    let write = |path: PathBuf, img: &RasterImage| -> Result<PathBuf, CliError> {
        img.write_png(&path).map_err(|e| io_err(path.display(), e))?;
        Ok(path)
    };
    match layout {
        Layout::Composed => {
            let pair = compose_pair(source, target).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(vec![write(root.join(split).join(&name), &pair)?])
        }
        Layout::Split => Ok(vec![
            write(root.join("A").join(split).join(&name), source)?,
            write(root.join("B").join(split).join(&name), target)?,
        ]),
    }
}

fn split_of(index: usize, count: usize, val_fraction: f64) -> &'static str {
    let val = ((count as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
    if index >= count - val.min(count) {
        "val"
    } else {
        "train"
    }
}

fn cmd_gen(r: &Resolved, out: &Path) -> Result<Value, CliError> {
    let cfg = &r.cfg;
    let graph = r.graph()?;
    let palette = r.palette()?;
    let boundary = r.boundary()?;
    cfg.gen.validate().map_err(gen_error)?;
    if cfg.scale == 0 {
        return Err(CliError::Config("scale must be at least 1".into()));
    }

    let pre = pre_evaluate(&graph, &boundary, &cfg.gen, PRE_EVALUATE_TRIALS).map_err(gen_error)?;
    info!("pre-evaluation yield {:.2} over {} trials", pre.yield_rate, pre.trials);
    if pre.qualified == 0 {
        let dominant = dominant_reason(&pre.reasons).map(|d| d.to_string()).unwrap_or_default();
        return Err(CliError::Generation(format!(
            "pre-evaluation yield 0 over {} trials; dominant reason {dominant} ({})",
            pre.trials,
            histogram_summary(&pre.reasons)
        )));
    }

    let dataset = generate_dataset(&graph, &boundary, &cfg.gen, cfg.count).map_err(gen_error)?;
    info!("generated {} plans in {} attempts", dataset.plans.len(), dataset.stats.attempts);

    let root = out.join("dataset");
    let count = dataset.plans.len();
    let entries: Vec<Value> = dataset
        .plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let qualification = check_plan(plan, &graph, DEFAULT_MIN_CONTACT).map_err(|e| CliError::Config(e.to_string()))?;
            let (source, target) = render_plan(plan, &graph, &palette, cfg)?;
            let split = split_of(i, count, cfg.val_fraction);
            let files = write_rendered(&root, split, i, &source, &target, cfg.layout)?;
            let files: Vec<String> = files
                .iter()
                .map(|f| f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/"))
                .collect();
            Ok(json!({
                "index": i,
                "split": split,
                "seed": plan.seed,
                "attempt": plan.attempt,
                "files": files,
                "qualification": qualification,
            }))
        })
        .collect::<Result<_, CliError>>()?;

    let plans_jsonl: String = dataset
        .plans
        .iter()
        .map(|p| serde_json::to_string(p).expect("plan json") + "\n")
        .collect();
    write_file(&out.join("plans.jsonl"), plans_jsonl)?;

    let qualified = entries
        .iter()
        .filter(|e| e["qualification"]["verdict"] == "Qualified")
        .count();
    let manifest = json!({
        "seed": r.seed,
        "graph_id": graph.fingerprint(),
        "mode": cfg.mode,
        "source": cfg.source,
        "layout": cfg.layout,
        "scale": cfg.scale,
        "boundary": cfg.boundary.as_deref().unwrap_or("rect"),
        "params": cfg.gen,
        "count": count,
        "qualified": qualified,
        "pre_evaluation": pre,
        "stats": dataset.stats,
        "plans": entries,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(json!({
        "command": "gen",
        "seed": r.seed,
        "out": out,
        "count": count,
        "qualified": qualified,
        "attempts": dataset.stats.attempts,
        "pre_evaluation_yield": pre.yield_rate,
        "rejections": dataset.stats.rejections,
        "wall_time_s": dataset.stats.wall_time_s,
    }))
}

fn cmd_qualify(r: &Resolved, plans: &Path, min_contact: usize) -> Result<Value, CliError> {
    let graph = r.graph()?;
    let plans = load_plans(plans)?;
    let results: Vec<Value> = plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = check_plan(p, &graph, min_contact).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(json!({ "index": i, "seed": p.seed, "verdict": q.verdict, "reasons": q.reasons }))
        })
        .collect::<Result<_, CliError>>()?;
    let qualified = results.iter().filter(|v| v["verdict"] == "Qualified").count();
    Ok(json!({
        "command": "qualify",
        "seed": r.seed,
        "plans": results.len(),
        "qualified": qualified,
        "results": results,
    }))
}

fn cmd_render(r: &Resolved, plans: &Path, out: &Path) -> Result<Value, CliError> {
    let graph = r.graph()?;
    let palette = r.palette()?;
    let plans = load_plans(plans)?;
    let files: Vec<PathBuf> = plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (source, target) = render_plan(p, &graph, &palette, &r.cfg)?;
            write_rendered(out, "", i, &source, &target, r.cfg.layout)
        })
        .collect::<Result<Vec<_>, CliError>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(json!({ "command": "render", "seed": r.seed, "out": out, "files": files.len() }))
}

/// Target renders degraded per epoch, written as `fake_epochs/epochEEE/NNNNNN_fake_B.png`.
pub fn simulate_tree(
    plans: &[FloorPlan],
    graph: &TopologyGraph,
    palette: &Palette,
    mode: ColorMode,
    scale: usize,
    schedule: &DegradeSchedule,
    out: &Path,
) -> Result<usize, CliError> {
    let targets: Vec<RasterImage> = plans
        .par_iter()
        .map(|p| render_target(p, graph, mode, palette, scale).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..schedule.levels.len()).flat_map(|e| (0..targets.len()).map(move |i| (e, i))).collect();
    jobs.par_iter()
        .map(|&(e, i)| {
            let img = degrade(&targets[i], schedule.levels[e], degrade_stream(schedule.seed, e, i));
            let path = out.join("fake_epochs").join(format!("epoch{:03}", e + 1)).join(format!("{i:06}_fake_B.png"));
            img.write_png(&path).map_err(|err| io_err(path.display(), err))
        })
        .collect::<Result<Vec<()>, _>>()?;
    Ok(jobs.len())
}

fn cmd_simulate(
    r: &Resolved,
    dataset: Option<&Path>,
    count: usize,
    schedule: &DegradeSchedule,
    out: &Path,
) -> Result<Value, CliError> {
    if !schedule.is_valid() {
        return Err(CliError::Config("degradation levels must lie in [0, 1]".into()));
    }
    let graph = r.graph()?;
    let palette = r.palette()?;
    let plans = match dataset {
        Some(dir) => {
            let mut plans = load_plans(&dir.join("plans.jsonl"))?;
            plans.truncate(count);
            plans
        }
        None => {
            let boundary = r.boundary()?;
            r.cfg.gen.validate().map_err(gen_error)?;
            generate_dataset(&graph, &boundary, &r.cfg.gen, count).map_err(gen_error)?.plans
        }
    };
    let images = simulate_tree(&plans, &graph, &palette, r.cfg.mode, r.cfg.scale, schedule, out)?;
    let summary = json!({
        "command": "simulate",
        "seed": r.seed,
        "out": out,
        "plans": plans.len(),
        "epochs": schedule.levels.len(),
        "levels": schedule.levels,
        "images": images,
    });
    write_json(&out.join("simulate.json"), &summary)?;
    Ok(summary)
}

fn extract_dir(r: &Resolved, dir: &Path, pairs: bool) -> Result<Vec<AdjacencyReport>, CliError> {
    use crate::extract::ExtractError;
    let graph = r.graph()?;
    let palette = r.palette()?;
    let filter = Regex::new(DEFAULT_IMAGE_FILTER).expect("filter regex");
    let prepare = move |img: RasterImage| if pairs { split_pair(&img).1 } else { img };
    batch_extract_with(dir, &palette, &graph, r.cfg.mode, &r.cfg.extract, &filter, prepare).map_err(|e| match e {
        ExtractError::DirectoryUnreadable { .. } => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    })
}

fn cmd_extract(r: &Resolved, images: &Path, pairs: bool, out: Option<&Path>) -> Result<Value, CliError> {
    let reports = extract_dir(r, images, pairs)?;
    if let Some(out) = out {
        let body = if out.extension().is_some_and(|e| e == "csv") {
            reports_to_csv(&reports)
        } else {
            reports_to_jsonl(&reports)
        };
        write_file(out, body)?;
    }
    let n = reports.len();
    let full = reports.iter().filter(|r| r.error.is_none() && r.core_found == r.core_total).count();
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    let mean_recall = if n == 0 { 0.0 } else { reports.iter().map(|r| r.core_recall()).sum::<f64>() / n as f64 };
    Ok(json!({
        "command": "extract",
        "seed": r.seed,
        "images": n,
        "full_recall": full,
        "failed": failed,
        "mean_core_recall": mean_recall,
        "mean_total_adjacencies": mean_total_adjacencies(&reports),
    }))
}

/// Target renders of a `gen` output, using its manifest to find them.
fn dataset_mean(r: &Resolved, dataset: &Path) -> Result<Option<f64>, CliError> {
    let manifest_path = dataset.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(manifest_path.display(), e))?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let (dir, pairs) = match manifest["layout"].as_str() {
        Some("split") => (dataset.join("dataset").join("B"), false),
        _ => (dataset.join("dataset"), true),
    };
    Ok(mean_total_adjacencies(&extract_dir(r, &dir, pairs)?))
}

fn loss_curves(per_epoch: &[EpochLosses]) -> Vec<(&'static str, Vec<(u32, f64)>)> {
    let curve = |f: fn(&EpochLosses) -> f64| per_epoch.iter().map(|e| (e.epoch, f(e))).collect::<Vec<_>>();
    vec![
        ("G_GAN", curve(|e| e.g_gan)),
        ("G_L1", curve(|e| e.g_l1)),
        ("D_real", curve(|e| e.d_real)),
        ("D_fake", curve(|e| e.d_fake)),
        ("D_total", curve(|e| e.d_total)),
    ]
}

fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path.display(), e))?;
    parse_loss_log(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_evaluate(
    r: &Resolved,
    images: &Path,
    loss_log: Option<&Path>,
    dataset: Option<&Path>,
    out: &Path,
) -> Result<Value, CliError> {
    let graph = r.graph()?;
    let config = &r.cfg.metrics;
    let pattern = config.epoch_pattern().map_err(metrics_err)?;
    let reports = extract_dir(r, images, false)?;
    let (matched, unmatched): (Vec<AdjacencyReport>, Vec<AdjacencyReport>) =
        reports.into_iter().partition(|rep| epoch_of(&pattern, &rep.image_id).is_some());
    if matched.is_empty() && !unmatched.is_empty() {
        return Err(CliError::NoMatch(format!("{} images, first {:?}", unmatched.len(), unmatched[0].image_id)));
    }
    if !unmatched.is_empty() {
        warn!("ignoring {} images whose names do not match the epoch pattern", unmatched.len());
    }
    let epochs: Vec<EpochMetrics> = epoch_metrics(&matched, &graph, config).map_err(metrics_err)?;

    let records = match loss_log {
        Some(p) if !p.exists() => {
            warn!("loss log {} not found, writing learning-rate outputs only", p.display());
            vec![]
        }
        Some(p) => read_loss_log(p)?,
        None => vec![],
    };
    let per_epoch = epoch_losses(&records, config);
    let recall: Vec<(u32, f64)> = epochs.iter().map(|e| (e.epoch, e.core_recall)).collect();
    let segmentation = match detect_phases(&recall) {
        Ok(mut seg) => {
            let totals: Vec<(u32, f64)> = epochs.iter().map(|e| (e.epoch, e.mean_total_adjacencies)).collect();
            let mut curves = vec![("core_recall", recall.clone()), ("total_adjacencies", totals)];
            curves.extend(loss_curves(&per_epoch));
            seg.turning_points = turning_points(curves);
            Some(seg)
        }
        Err(e) => {
            warn!("no phase segmentation: {e}");
            None
        }
    };
    let dataset_mean = match dataset {
        Some(d) => dataset_mean(r, d)?,
        None => None,
    };

    let inputs = ReportInputs {
        records: &records,
        epochs: &epochs,
        segmentation: segmentation.as_ref(),
        dataset_mean,
        config,
    };
    let bundle = emit_report(&inputs, out).map_err(metrics_err)?;
    write_file(&out.join("reports.csv"), reports_to_csv(&matched))?;
    Ok(json!({
        "command": "evaluate",
        "seed": r.seed,
        "images": matched.len(),
        "ignored": unmatched.len(),
        "loss_records": records.len(),
        "dataset_mean": dataset_mean,
        "epochs": epochs,
        "segmentation": segmentation,
        "files": bundle.files,
    }))
}

fn cmd_losscurve(r: &Resolved, loss_log: &Path, out: &Path) -> Result<Value, CliError> {
    let config = &r.cfg.metrics;
    config.validate().map_err(metrics_err)?;
    let records = read_loss_log(loss_log)?;
    let per_epoch = epoch_losses(&records, config);
    let curves = loss_curves(&per_epoch);
    let segmentation: Option<PhaseSegmentation> = detect_phases(&curves[0].1).ok().map(|mut s| {
        s.turning_points = turning_points(curves.clone());
        s
    });
    let inputs = ReportInputs {
        records: &records,
        epochs: &[],
        segmentation: segmentation.as_ref(),
        dataset_mean: None,
        config,
    };
    let bundle = emit_report(&inputs, out).map_err(metrics_err)?;
    let totals: BTreeMap<u32, (f64, f64)> = per_epoch.iter().map(|e| (e.epoch, (e.g_total, e.d_total))).collect();
    Ok(json!({
        "command": "losscurve",
        "seed": r.seed,
        "records": records.len(),
        "epochs": per_epoch.len(),
        "final_totals": totals.values().last(),
        "segmentation": segmentation,
        "files": bundle.files,
    }))
}
