//! Command implementations behind the `ffdreg` binary.
//!
//! Settings resolve as command-line flags over a TOML config file over
//! built-in defaults. Exit codes: 0 on success, 1 for an invalid
//! configuration, 2 when an input cannot be read.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse2fine::{plan_levels, run_coarse_to_fine, Algorithm, BudgetScope, LevelPlan, RunSettings};
use crate::decision::{Metrics, RegistrationResult, SolutionMetrics};
use crate::evolution::VariationConfig;
use crate::ffd::{forward_map, frame_offset, warp_backward, ControlMesh, PixelCoord};
use crate::image::{build_pyramid, quantize, read_image, write_png, write_rgb_png, GrayImage};
use crate::moea::write_front_csv;
use crate::synthbench::{build_case, mede, paper_grid, rmse, CaseManifest, DeformationKind};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "ffdreg", version, about = "FFD registration with evolutionary search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic wavy cases and a manifest.
    Synth(SynthArgs),
    /// Register one template/target pair, once per seed.
    Register(RegisterArgs),
    /// Run every case x algorithm x seed of a manifest.
    Bench(BenchArgs),
    /// Score an existing mesh JSON against images.
    Eval(EvalArgs),
}

/// Flags shared by the optimisation commands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Algorithms, comma separated (`register` takes exactly one).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub algo: Vec<Algorithm>,
    /// Objective groups for nsga2/nsga3 (1, 2 or 4); ga always uses 1.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Finest lattice as `NXxNY`, e.g. `7x7`.
    #[arg(long, value_parser = parse_lattice)]
    pub lattice: Option<[usize; 2]>,
    /// Finest-level decision range: genes live in `[-range, range]`.
    #[arg(long)]
    pub range: Option<f64>,
    /// Pyramid levels, coarsest first; 1 disables coarse-to-fine.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Evaluations per level (or in total, see `--budget-scope`).
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub budget_scope: Option<BudgetScope>,
    /// Target sampling stride for the objectives.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-level population snapshots and front logs.
    #[arg(long)]
    pub dump_levels: bool,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Fill the `wall_ms` CSV column (breaks byte-identical reruns).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Existing manifest to materialise instead of the default grid.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Base images for the default grid; `procedural:<seed>` generates one.
    #[arg(long, value_delimiter = ',')]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Ground-truth mesh JSON, enables MEDE.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Case manifest JSON.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Mesh JSON as written by `register`.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

fn parse_lattice(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

/// Fully resolved run settings; the TOML file uses the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithms: Vec<Algorithm>,
    /// `None` picks 1 for ga and 2 otherwise.
    pub groups: Option<usize>,
    pub lattice: [usize; 2],
    pub range: f64,
    pub levels: usize,
    pub budget: usize,
    pub budget_scope: BudgetScope,
    pub stride: usize,
    pub population: usize,
    pub variation: VariationConfig,
    pub reference_points: Option<usize>,
    pub seeds: Vec<u64>,
    pub template: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub gt_mesh: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub images: Vec<String>,
    pub out: PathBuf,
    pub dump_levels: bool,
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Nsga2],
            groups: None,
            lattice: [7, 7],
            range: 5.0,
            levels: 3,
            budget: 10_000,
            budget_scope: BudgetScope::PerLevel,
            stride: 5,
            population: 100,
            variation: VariationConfig::default(),
            reference_points: None,
            seeds: vec![0, 1, 2, 3, 4],
            template: None,
            target: None,
            gt_mesh: None,
            manifest: None,
            images: Vec::new(),
            out: PathBuf::from("out"),
            dump_levels: false,
            timing: false,
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file named by the flags, then the flags.
    pub fn resolve(flags: &RunFlags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn apply(&mut self, f: &RunFlags) {
        if !f.seed.is_empty() {
            self.seeds = f.seed.clone();
        }
        if !f.algo.is_empty() {
            self.algorithms = f.algo.clone();
        }
        macro_rules! take {
            ($($field:ident <- $flag:ident),*) => {
                $(if let Some(v) = f.$flag.clone() { self.$field = v; })*
            };
        }
        take!(lattice <- lattice, range <- range, levels <- levels, budget <- budget,
              budget_scope <- budget_scope, stride <- stride, population <- population, out <- out);
        if f.groups.is_some() {
            self.groups = f.groups;
        }
        self.dump_levels |= f.dump_levels;
        self.timing |= f.timing;
    }

    /// Group count used for `algorithm`.
    pub fn groups_for(&self, algorithm: Algorithm) -> usize {
        match (algorithm, self.groups) {
            (Algorithm::Ga, _) => 1,
            (_, Some(g)) => g,
            (_, None) => 2,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        for &a in &self.algorithms {
            match (a, self.groups) {
                (Algorithm::Ga, Some(g)) if g != 1 && self.algorithms.len() == 1 => {
                    return bad(format!("ga requires 1 group, got {g}"));
                }
                (Algorithm::Nsga2 | Algorithm::Nsga3, Some(g)) if g < 2 => {
                    return bad(format!("{a} requires at least 2 groups, got {g}"));
                }
                _ => {}
            }
        }
        if let Some(g) = self.groups {
            if ![1, 2, 4].contains(&g) {
                return bad(format!("groups must be 1, 2 or 4, got {g}"));
            }
        }
        if self.lattice.iter().any(|&n| n < 4) {
            return bad(format!("lattice {}x{} needs at least 4 points per axis", self.lattice[0], self.lattice[1]));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return bad(format!("range must be positive, got {}", self.range));
        }
        if self.levels == 0 || self.stride == 0 {
            return bad("levels and stride must be at least 1".into());
        }
        if self.population < 2 {
            return bad(format!("population {} must be at least 2", self.population));
        }
        let per_level = match self.budget_scope {
            BudgetScope::PerLevel => self.budget,
            BudgetScope::Total => self.budget / self.levels,
        };
        if per_level < self.population {
            return bad(format!(
                "budget of {per_level} evaluations per level is below the population size {}",
                self.population
            ));
        }
        Ok(())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            population_size: self.population,
            stride: self.stride,
            variation: self.variation.clone(),
            reference_points: self.reference_points,
            record_fronts: self.dump_levels,
        }
    }
}

/// Failure categories mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) | CliError::Run(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Register(a) => cmd_register(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn load_image(path: &Path) -> CliResult<GrayImage> {
    read_image(path).map_err(|e| CliError::Input(format!("cannot read image {}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("malformed {what} {}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(())
}

/// Appends wall-clock information, the only non-deterministic output.
fn append_log(dir: &Path, lines: &[String]) -> CliResult<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))
        .map_err(Error::from)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for l in lines {
        writeln!(f, "[{stamp}] {l}").map_err(Error::from)?;
    }
    Ok(())
}

/// One CSV row. `seed` holds a seed or an aggregate label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub image: String,
    pub kind: Option<DeformationKind>,
    pub lattice: String,
    pub range: f64,
    pub algo: Algorithm,
    pub groups: usize,
    pub seed: String,
    pub solution: String,
    pub rmse: f64,
    pub mede: Option<f64>,
    pub wall_ms: Option<u64>,
}

/// Min, max and mean rows for every `(image, kind, lattice, range, algo,
/// groups, solution)` key, in first-appearance order.
pub fn aggregate_rows(rows: &[MetricRow], stats: &[&str]) -> Vec<MetricRow> {
    let key = |r: &MetricRow| (r.image.clone(), r.kind, r.lattice.clone(), r.range.to_bits(), r.algo, r.groups, r.solution.clone());
    let mut keys = Vec::new();
    for r in rows {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }
    let mut out = Vec::new();
    for k in keys {
        let group: Vec<&MetricRow> = rows.iter().filter(|r| key(r) == k).collect();
        let rmses: Vec<f64> = group.iter().map(|r| r.rmse).collect();
        let medes: Option<Vec<f64>> = group.iter().map(|r| r.mede).collect();
        for &stat in stats {
            let reduce = |v: &[f64]| match stat {
                "min" => v.iter().copied().fold(f64::INFINITY, f64::min),
                "max" => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => v.iter().sum::<f64>() / v.len() as f64,
            };
            let first = group[0];
            out.push(MetricRow {
                seed: stat.to_string(),
                rmse: reduce(&rmses),
                mede: medes.as_deref().map(reduce),
                wall_ms: None,
                ..first.clone()
            });
        }
    }
    out
}

pub fn write_rows(rows: &[MetricRow], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::moea::csv_err)?;
    for r in rows {
        w.serialize(r).map_err(crate::moea::csv_err)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// A template/target pair prepared for optimisation.
pub struct Problem {
    pub plans: Vec<LevelPlan>,
}

impl Problem {
    pub fn new(template: &GrayImage, target: &GrayImage, cfg: &RunConfig) -> CliResult<Self> {
        let tp = build_pyramid(template, cfg.levels).map_err(|e| CliError::Config(e.to_string()))?;
        let gp = build_pyramid(target, cfg.levels).map_err(|e| CliError::Config(e.to_string()))?;
        let plans = plan_levels(
            (cfg.lattice[0], cfg.lattice[1]),
            cfg.levels,
            &tp,
            &gp,
            cfg.range,
            cfg.budget,
            cfg.budget_scope,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { plans })
    }

    pub fn finest(&self) -> &LevelPlan {
        self.plans.last().expect("at least one level")
    }

    /// Runs one seed and fills in the metrics on the finest level.
    pub fn solve(
        &self,
        algorithm: Algorithm,
        groups: usize,
        seed: u64,
        settings: &RunSettings,
        gt: Option<&ControlMesh>,
    ) -> CliResult<(RegistrationResult, u64)> {
        let start = Instant::now();
        let mut result = run_coarse_to_fine(algorithm, &self.plans, groups, seed, settings)?;
        let wall = start.elapsed().as_millis() as u64;
        let f = self.finest();
        let score = |mesh: &ControlMesh| -> CliResult<SolutionMetrics> {
            Ok(SolutionMetrics {
                rmse: rmse(mesh, &f.template, &f.target)?,
                mede: gt.map(|g| mede(mesh, g)).transpose()?,
            })
        };
        result.metrics = Some(Metrics {
            best: score(&result.best_mesh())?,
            post_processed: score(&result.post_processed_mesh())?,
        });
        Ok((result, wall))
    }
}

/// Rows for one run: the best solution, plus the post-processed one for
/// multi-objective algorithms.
fn result_rows(r: &RegistrationResult, base: &MetricRow, wall: Option<u64>) -> Vec<MetricRow> {
    let m = r.metrics.as_ref().expect("metrics filled");
    let mut rows = vec![MetricRow {
        seed: r.seed.to_string(),
        solution: "best".into(),
        rmse: m.best.rmse,
        mede: m.best.mede,
        wall_ms: wall,
        ..base.clone()
    }];
    if r.algorithm != Algorithm::Ga {
        rows.push(MetricRow {
            solution: "post".into(),
            rmse: m.post_processed.rmse,
            mede: m.post_processed.mede,
            ..rows[0].clone()
        });
    }
    rows
}

fn dump_levels(r: &RegistrationResult, dir: &Path) -> CliResult<()> {
    let levels = dir.join("levels");
    fs::create_dir_all(&levels).map_err(Error::from)?;
    for snap in &r.per_level_history {
        write_json(snap, &levels.join(format!("level-{}.json", snap.level)))?;
        let f = fs::File::create(levels.join(format!("level-{}-fronts.csv", snap.level))).map_err(Error::from)?;
        write_front_csv(&snap.fronts, std::io::BufWriter::new(f))?;
    }
    Ok(())
}

/// Deformed template, 50/50 overlay and mesh drawing for one mesh.
pub fn write_visuals(template: &GrayImage, target: &GrayImage, mesh: &ControlMesh, dir: &Path, stem: &str) -> CliResult<()> {
    let (w, h) = (target.width(), target.height());
    let warped = warp_backward(template, mesh, w, h)?;
    write_png(&warped.image, dir.join(format!("{stem}_deformed.png")))?;
    let overlay = GrayImage::from_fn(w, h, |x, y| {
        let k = y * w + x;
        if warped.mask[k] {
            0.5 * target.get(x, y) + 0.5 * warped.image.get(x, y)
        } else {
            target.get(x, y)
        }
    })?;
    write_png(&overlay, dir.join(format!("{stem}_overlay.png")))?;
    write_rgb_png(w, h, render_mesh(target, mesh), dir.join(format!("{stem}_mesh.png")))?;
    Ok(())
}

/// Target (dimmed) with the deformed lattice lines in red and the displaced
/// control points in yellow.
pub fn render_mesh(target: &GrayImage, mesh: &ControlMesh) -> Vec<u8> {
    let (w, h) = (target.width(), target.height());
    let mut rgb: Vec<u8> = target.data().iter().flat_map(|&v| [quantize(0.6 * v); 3]).collect();
    let mut put = |p: PixelCoord, c: [u8; 3]| {
        let (x, y) = (p.x.round(), p.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            let k = 3 * (y as usize * w + x as usize);
            rgb[k..k + 3].copy_from_slice(&c);
        }
    };
    let cfg = mesh.config();
    let o = frame_offset(cfg, w, h);
    let (tw, th) = (cfg.image_w as f64, cfg.image_h as f64);
    let map = |x: f64, y: f64| forward_map(mesh, o, PixelCoord::new(x.min(tw - 1e-6), y.min(th - 1e-6))).ok();
    let red = [230, 40, 40];
    for j in 0..cfg.n_y {
        let y = cfg.point_position(0, j).y;
        if (0.0..th).contains(&y) {
            let mut x = 0.0;
            while x < tw {
                if let Some(p) = map(x, y) {
                    put(p, red);
                }
                x += 0.5;
            }
        }
    }
    for i in 0..cfg.n_x {
        let x = cfg.point_position(i, 0).x;
        if (0.0..tw).contains(&x) {
            let mut y = 0.0;
            while y < th {
                if let Some(p) = map(x, y) {
                    put(p, red);
                }
                y += 0.5;
            }
        }
    }
    for j in 0..cfg.n_y {
        for i in 0..cfg.n_x {
            let r = cfg.point_position(i, j);
            if let Some(p) = map(r.x, r.y).filter(|_| r.x >= 0.0 && r.y >= 0.0 && r.x < tw && r.y < th) {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        put(p + PixelCoord::new(dx as f64, dy as f64), [250, 220, 30]);
                    }
                }
            }
        }
    }
    rgb
}

fn file_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_register(args: &RegisterArgs) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(&args.run)?;
    if args.template.is_some() {
        cfg.template = args.template.clone();
    }
    if args.target.is_some() {
        cfg.target = args.target.clone();
    }
    if args.gt.is_some() {
        cfg.gt_mesh = args.gt.clone();
    }
    cfg.validate()?;
    let [algorithm] = cfg.algorithms[..] else {
        return Err(CliError::Config("register takes exactly one algorithm".into()));
    };
    let groups = cfg.groups_for(algorithm);
    let tpath = cfg.template.clone().ok_or_else(|| CliError::Config("--template is required".into()))?;
    let gpath = cfg.target.clone().ok_or_else(|| CliError::Config("--target is required".into()))?;
    let template = load_image(&tpath)?;
    let target = load_image(&gpath)?;
    let gt: Option<ControlMesh> = cfg.gt_mesh.as_deref().map(|p| load_json(p, "mesh")).transpose()?;
    let problem = Problem::new(&template, &target, &cfg)?;
    prepare_out_dir(&cfg.out, args.run.force)?;
    write_json(&cfg, &cfg.out.join("config.json"))?;

    let settings = cfg.settings();
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| problem.solve(algorithm, groups, seed, &settings, gt.as_ref()))
        .collect::<CliResult<Vec<_>>>()?;

    let base = MetricRow {
        image: file_label(&tpath),
        kind: None,
        lattice: format!("{}x{}", cfg.lattice[0], cfg.lattice[1]),
        range: cfg.range,
        algo: algorithm,
        groups,
        seed: String::new(),
        solution: String::new(),
        rmse: 0.0,
        mede: None,
        wall_ms: None,
    };
    let mut rows = Vec::new();
    let mut log = Vec::new();
    for (result, wall) in &runs {
        let dir = cfg.out.join(format!("seed-{}", result.seed));
        fs::create_dir_all(&dir).map_err(Error::from)?;
        write_json(result, &dir.join("result.json"))?;
        write_json(&result.best_mesh(), &dir.join("best_mesh.json"))?;
        write_visuals(&template, &target, &result.best_mesh(), &dir, "best")?;
        if algorithm != Algorithm::Ga {
            write_json(&result.post_processed_mesh(), &dir.join("post_mesh.json"))?;
            write_visuals(&template, &target, &result.post_processed_mesh(), &dir, "post")?;
        }
        if cfg.dump_levels {
            dump_levels(result, &dir)?;
        }
        rows.extend(result_rows(result, &base, cfg.timing.then_some(*wall)));
        log.push(format!("register {algorithm} groups={groups} seed={} wall_ms={wall}", result.seed));
    }
    rows.extend(aggregate_rows(&rows, &["min", "max", "mean"]));
    write_rows(&rows, &cfg.out.join("metrics.csv"))?;
    append_log(&cfg.out, &log)?;
    Ok(())
}

fn load_manifest(cfg: &RunConfig) -> CliResult<CaseManifest> {
    match &cfg.manifest {
        Some(p) => load_json(p, "manifest"),
        None => {
            let images = if cfg.images.is_empty() {
                (0..5).map(|k| format!("procedural:{k}")).collect()
            } else {
                cfg.images.clone()
            };
            Ok(CaseManifest {
                base_size: 400,
                template_size: 160,
                cases: paper_grid(&images),
            })
        }
    }
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(&args.run)?;
    if args.manifest.is_some() {
        cfg.manifest = args.manifest.clone();
    }
    if !args.images.is_empty() {
        cfg.images = args.images.clone();
    }
    let manifest = load_manifest(&cfg)?;
    prepare_out_dir(&cfg.out, args.run.force)?;
    write_json(&manifest, &cfg.out.join("manifest.json"))?;
    for (k, spec) in manifest.cases.iter().enumerate() {
        let case = build_case(spec, &manifest).map_err(|e| match e {
            Error::Io(_) | Error::Image(_) | Error::InvalidImage(_) | Error::Pgm(_) => {
                CliError::Input(format!("case {k} ({}): {e}", spec.image))
            }
            other => CliError::Config(format!("case {k}: {other}")),
        })?;
        let dir = cfg.out.join(format!(
            "case-{k:02}-{}-{}-{}-r{}",
            spec.image_label(),
            spec.kind,
            spec.lattice_label(),
            spec.range
        ));
        fs::create_dir_all(&dir).map_err(Error::from)?;
        write_png(&case.template, dir.join("template.png"))?;
        write_png(&case.target, dir.join("target.png"))?;
        write_json(&case.gt_mesh, &dir.join("gt_mesh.json"))?;
    }
    Ok(())
}

/// Runs the whole manifest and returns its per-seed rows in a stable order.
pub fn run_bench(cfg: &RunConfig, manifest: &CaseManifest, results_dir: Option<&Path>) -> CliResult<(Vec<MetricRow>, Vec<String>)> {
    let settings = cfg.settings();
    let mut rows = Vec::new();
    let mut log = Vec::new();
    for (k, spec) in manifest.cases.iter().enumerate() {
        let case = build_case(spec, manifest).map_err(|e| match e {
            Error::Io(_) | Error::Image(_) | Error::InvalidImage(_) | Error::Pgm(_) => {
                CliError::Input(format!("case {k} ({}): {e}", spec.image))
            }
            other => CliError::Config(format!("case {k}: {other}")),
        })?;
        let case_cfg = RunConfig {
            lattice: [spec.lattice.0, spec.lattice.1],
            range: spec.range,
            ..cfg.clone()
        };
        let problem = Problem::new(&case.template, &case.target, &case_cfg)?;
        for &algorithm in &cfg.algorithms {
            let groups = cfg.groups_for(algorithm);
            let runs = cfg
                .seeds
                .par_iter()
                .map(|&seed| problem.solve(algorithm, groups, seed, &settings, Some(&case.gt_mesh)))
                .collect::<CliResult<Vec<_>>>()?;
            let base = MetricRow {
                image: spec.image_label(),
                kind: Some(spec.kind),
                lattice: spec.lattice_label(),
                range: spec.range,
                algo: algorithm,
                groups,
                seed: String::new(),
                solution: String::new(),
                rmse: 0.0,
                mede: None,
                wall_ms: None,
            };
            for (result, wall) in &runs {
                rows.extend(result_rows(result, &base, cfg.timing.then_some(*wall)));
                log.push(format!(
                    "bench case={k} {algorithm} groups={groups} seed={} wall_ms={wall}",
                    result.seed
                ));
                if let Some(dir) = results_dir {
                    let sub = dir.join(format!("case-{k:02}-{algorithm}-seed{}", result.seed));
                    fs::create_dir_all(&sub).map_err(Error::from)?;
                    write_json(result, &sub.join("result.json"))?;
                    dump_levels(result, &sub)?;
                }
            }
        }
    }
    Ok((rows, log))
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let mut cfg = RunConfig::resolve(&args.run)?;
    if args.manifest.is_some() {
        cfg.manifest = args.manifest.clone();
    }
    cfg.validate()?;
    let manifest = load_manifest(&cfg)?;
    prepare_out_dir(&cfg.out, args.run.force)?;
    write_json(&cfg, &cfg.out.join("config.json"))?;
    let results_dir = cfg.dump_levels.then(|| cfg.out.join("results"));
    let (rows, log) = run_bench(&cfg, &manifest, results_dir.as_deref())?;
    let mut bench = rows.clone();
    bench.extend(aggregate_rows(&rows, &["mean"]));
    write_rows(&bench, &cfg.out.join("bench.csv"))?;
    write_rows(&aggregate_rows(&rows, &["min", "max", "mean"]), &cfg.out.join("summary.csv"))?;
    append_log(&cfg.out, &log)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mesh: ControlMesh = load_json(&args.mesh, "mesh")?;
    let template = load_image(&args.template)?;
    let target = load_image(&args.target)?;
    let gt: Option<ControlMesh> = args.gt.as_deref().map(|p| load_json(p, "mesh")).transpose()?;
    let r = rmse(&mesh, &template, &target)?;
    let m = gt.map(|g| mede(&mesh, &g)).transpose()?;
    println!("rmse,mede");
    println!("{r},{}", m.map(|v| v.to_string()).unwrap_or_default());
    Ok(())
}
