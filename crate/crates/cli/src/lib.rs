//! Flag and config-file handling for the `poolsel` binary, and the commands
//! it dispatches to.
//!
//! Every flag may also be set in a TOML file passed with `--config`; keys are
//! the flag names with `_` instead of `-`, plus an `[endpoint]` table for the
//! remote source. Flags win over the file, the file wins over defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use poolsel_core::benchlab::{bootstrap_experiment, grade_outcomes, BenchConfig, ExperimentResult, GridPoint, SolverGrade, WscpOracle};
use poolsel_core::gensource::{ComponentSource, ProblemSpec, RemoteConfig, SyntheticConfig};
use poolsel_core::pipeline::{self, Artifacts, PipelineConfig, RunSummary, SchemaKind, Stage};
use poolsel_core::{EmConfig, ExecLimits, Penalty, Runner, SelectionConfig};

pub const DEFAULT_POOL_SIZE: usize = 50;
pub const DEFAULT_REPS: usize = 200;
pub const DEFAULT_GRID: &str = "1,5,20,50";

#[derive(Debug, Parser)]
#[command(name = "poolsel", version, about = "Pick a trustworthy solver out of a pool of generated candidates")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, test, filter, characterize and select in one pass.
    Run(Flags),
    /// Bootstrap selection quality over precomputed results.
    Bench(Flags),
    /// Run a single stage against the artifacts already in the output directory.
    Stage {
        #[arg(value_enum)]
        stage: StageArg,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Generate,
    Evaluate,
    Filter,
    Characterize,
    Select,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Generate => Stage::Generate,
            StageArg::Evaluate => Stage::Evaluate,
            StageArg::Filter => Stage::Filter,
            StageArg::Characterize => Stage::Characterize,
            StageArg::Select => Stage::Select,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Remote,
    Fixtures,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaArg {
    Json,
    Wscp,
}

impl From<SchemaArg> for SchemaKind {
    fn from(s: SchemaArg) -> Self {
        match s {
            SchemaArg::Json => SchemaKind::Json,
            SchemaArg::Wscp => SchemaKind::Wscp,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_solvers: Option<usize>,
    #[arg(long)]
    pub n_instances: Option<usize>,
    #[arg(long)]
    pub n_tests: Option<usize>,
    /// Where components come from.
    #[arg(long, value_enum)]
    pub source: Option<SourceKind>,
    /// Directory with `solvers/`, `instances/` and `tests/` subdirectories.
    #[arg(long, value_name = "DIR")]
    pub fixtures_dir: Option<PathBuf>,
    /// TOML or JSON problem description; defaults to K-robust weighted set cover.
    #[arg(long, value_name = "FILE")]
    pub problem: Option<PathBuf>,
    /// Structural check applied to instances before solving.
    #[arg(long, value_enum)]
    pub instance_schema: Option<SchemaArg>,
    /// Command that executes components, e.g. `python3 runner.py`.
    #[arg(long, value_name = "CMD")]
    pub runner: Option<String>,
    /// Seconds.
    #[arg(long)]
    pub solver_timeout: Option<f64>,
    /// Seconds.
    #[arg(long)]
    pub test_timeout: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `auto` or a number.
    #[arg(long)]
    pub p_miss: Option<String>,
    /// `auto` or a number.
    #[arg(long)]
    pub p_fail: Option<String>,
    /// Share of optimal solvers in synthetic pools.
    #[arg(long)]
    pub optimal_fraction: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated grid points, each `N_S` or `N_SxN_IxN_T`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Bench CSV path; defaults to `<out>/results/bench.csv`.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub endpoint_model: Option<String>,
    #[arg(long)]
    pub endpoint_temperature: Option<f64>,
    /// Environment variable holding the endpoint's bearer token.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Requests in flight at once.
    #[arg(long)]
    pub endpoint_max_concurrency: Option<usize>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub endpoint_timeout: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PenaltyValue {
    Number(f64),
    Text(String),
}

impl PenaltyValue {
    fn into_text(self) -> String {
        match self {
            PenaltyValue::Number(v) => v.to_string(),
            PenaltyValue::Text(s) => s,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GridValue {
    Sizes(Vec<usize>),
    Text(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointFile {
    url: Option<String>,
    model: Option<String>,
    temperature: Option<f64>,
    api_key_env: Option<String>,
    max_concurrency: Option<usize>,
    timeout: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    n_solvers: Option<usize>,
    n_instances: Option<usize>,
    n_tests: Option<usize>,
    source: Option<SourceKind>,
    fixtures_dir: Option<PathBuf>,
    problem: Option<PathBuf>,
    instance_schema: Option<SchemaArg>,
    runner: Option<String>,
    solver_timeout: Option<f64>,
    test_timeout: Option<f64>,
    workers: Option<usize>,
    max_iters: Option<usize>,
    p_miss: Option<PenaltyValue>,
    p_fail: Option<PenaltyValue>,
    optimal_fraction: Option<f64>,
    reps: Option<usize>,
    grid: Option<GridValue>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    #[serde(default)]
    endpoint: EndpointFile,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Folds the file under `flags`.
    fn merge(self, f: &Flags) -> Flags {
        let e = self.endpoint;
        let grid = self.grid.map(|g| match g {
            GridValue::Sizes(v) => v.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            GridValue::Text(s) => s,
        });
        Flags {
            seed: f.seed.or(self.seed),
            n_solvers: f.n_solvers.or(self.n_solvers),
            n_instances: f.n_instances.or(self.n_instances),
            n_tests: f.n_tests.or(self.n_tests),
            source: f.source.or(self.source),
            fixtures_dir: f.fixtures_dir.clone().or(self.fixtures_dir),
            problem: f.problem.clone().or(self.problem),
            instance_schema: f.instance_schema.or(self.instance_schema),
            runner: f.runner.clone().or(self.runner),
            solver_timeout: f.solver_timeout.or(self.solver_timeout),
            test_timeout: f.test_timeout.or(self.test_timeout),
            workers: f.workers.or(self.workers),
            max_iters: f.max_iters.or(self.max_iters),
            p_miss: f.p_miss.clone().or(self.p_miss.map(PenaltyValue::into_text)),
            p_fail: f.p_fail.clone().or(self.p_fail.map(PenaltyValue::into_text)),
            optimal_fraction: f.optimal_fraction.or(self.optimal_fraction),
            reps: f.reps.or(self.reps),
            grid: f.grid.clone().or(grid),
            out: f.out.clone().or(self.out),
            csv: f.csv.clone().or(self.csv),
            endpoint_url: f.endpoint_url.clone().or(e.url),
            endpoint_model: f.endpoint_model.clone().or(e.model),
            endpoint_temperature: f.endpoint_temperature.or(e.temperature),
            api_key_env: f.api_key_env.clone().or(e.api_key_env),
            endpoint_max_concurrency: f.endpoint_max_concurrency.or(e.max_concurrency),
            endpoint_timeout: f.endpoint_timeout.or(e.timeout),
        }
    }
}

/// One bench grid entry; missing instance and test counts fall back to
/// `--n-instances`/`--n-tests`, then to the precomputed cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridEntry {
    pub n_solvers: usize,
    pub n_instances: Option<usize>,
    pub n_tests: Option<usize>,
}

pub fn parse_grid(text: &str) -> Result<Vec<GridEntry>> {
    let num = |s: &str| -> Result<usize> {
        let v: usize = s.trim().parse().with_context(|| format!("bad grid size {s:?}"))?;
        if v == 0 {
            bail!("grid sizes must be positive");
        }
        Ok(v)
    };
    let entries = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split('x').collect();
            Ok(match parts.as_slice() {
                [s] => GridEntry { n_solvers: num(s)?, n_instances: None, n_tests: None },
                [s, i, t] => GridEntry { n_solvers: num(s)?, n_instances: Some(num(i)?), n_tests: Some(num(t)?) },
                _ => bail!("grid point {item:?} is neither N nor NxNxN"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        bail!("empty grid");
    }
    Ok(entries)
}

/// Everything a command needs, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    pub reps: usize,
    pub grid: Vec<GridEntry>,
    pub workers: Option<usize>,
    pub csv: PathBuf,
    /// Instance and test counts given explicitly, as opposed to defaulted.
    pub explicit_sizes: (Option<usize>, Option<usize>),
}

impl Settings {
    pub fn artifacts(&self) -> Artifacts {
        Artifacts::new(&self.out)
    }
}

fn count_entries(dir: &Path) -> Result<usize> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut n = 0;
    for e in entries {
        let e = e?;
        if e.file_type()?.is_file() && !e.file_name().to_string_lossy().starts_with('.') {
            n += 1;
        }
    }
    Ok(n)
}

fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading problem {}", path.display()))?;
    let spec: ProblemSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing problem {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing problem {}", path.display()))?
    };
    spec.validate()?;
    Ok(spec)
}

fn penalty(text: Option<&str>) -> Result<Penalty> {
    Ok(match text {
        Some(t) => t.parse()?,
        None => Penalty::Auto,
    })
}

fn duration(secs: Option<f64>, default: Duration, name: &str) -> Result<Duration> {
    match secs {
        None => Ok(default),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Duration::from_secs_f64(s)),
        Some(s) => bail!("{name} must be a positive number of seconds, got {s}"),
    }
}

/// Merges `flags` with the optional config file and fills in defaults.
pub fn resolve(flags: &Flags, config: Option<&Path>) -> Result<Settings> {
    let f = match config {
        Some(path) => FileConfig::load(path)?.merge(flags),
        None => flags.clone(),
    };

    let source_kind = f.source.unwrap_or(if f.fixtures_dir.is_some() {
        SourceKind::Fixtures
    } else if f.endpoint_url.is_some() {
        SourceKind::Remote
    } else {
        SourceKind::Synthetic
    });
    let mut sizes = (f.n_solvers, f.n_instances, f.n_tests);
    let source = match source_kind {
        SourceKind::Synthetic => {
            let optimal_fraction = f.optimal_fraction.unwrap_or(SyntheticConfig::default().optimal_fraction);
            ComponentSource::Synthetic(SyntheticConfig { optimal_fraction })
        }
        SourceKind::Fixtures => {
            let dir = f
                .fixtures_dir
                .clone()
                .ok_or_else(|| anyhow!("--source fixtures needs --fixtures-dir"))?;
            sizes.0 = Some(match sizes.0 {
                Some(n) => n,
                None => count_entries(&dir.join("solvers"))?,
            });
            sizes.1 = Some(match sizes.1 {
                Some(n) => n,
                None => count_entries(&dir.join("instances"))?,
            });
            sizes.2 = Some(match sizes.2 {
                Some(n) => n,
                None => count_entries(&dir.join("tests"))?,
            });
            ComponentSource::Fixtures { dir }
        }
        SourceKind::Remote => {
            let url = f.endpoint_url.clone().ok_or_else(|| anyhow!("--source remote needs an endpoint url"))?;
            let model = f.endpoint_model.clone().ok_or_else(|| anyhow!("--source remote needs an endpoint model"))?;
            let mut cfg = RemoteConfig::new(url, model);
            if let Some(t) = f.endpoint_temperature {
                cfg.temperature = t;
            }
            cfg.api_key_env = f.api_key_env.clone();
            if let Some(n) = f.endpoint_max_concurrency {
                cfg.max_concurrency = n;
            }
            cfg.timeout = duration(f.endpoint_timeout, cfg.timeout, "--endpoint-timeout")?;
            ComponentSource::Remote(cfg)
        }
    };

    let runner = match (&f.runner, &source) {
        (Some(cmd), _) => Some(Runner::from_command_line(cmd)?),
        (None, ComponentSource::Fixtures { dir }) if dir.join("runner.py").is_file() => Some(Runner {
            program: "python3".into(),
            args: vec![dir.join("runner.py").to_string_lossy().into_owned()],
        }),
        _ => None,
    };

    let problem = match &f.problem {
        Some(path) => load_problem(path)?,
        None => poolsel_core::wscp::problem_spec(),
    };
    let instance_schema = match f.instance_schema {
        Some(s) => s.into(),
        None if f.problem.is_none() => SchemaKind::Wscp,
        None => SchemaKind::Json,
    };

    let mut exec = ExecLimits::default();
    exec.solver_timeout = duration(f.solver_timeout, exec.solver_timeout, "--solver-timeout")?;
    exec.test_timeout = duration(f.test_timeout, exec.test_timeout, "--test-timeout")?;
    if let Some(w) = f.workers {
        exec.max_workers = w;
    }
    exec.validate()?;

    let mut em = EmConfig::default();
    if let Some(m) = f.max_iters {
        em.max_iters = m;
    }
    em.validate()?;

    let selection = SelectionConfig {
        p_miss: penalty(f.p_miss.as_deref())?,
        p_fail: penalty(f.p_fail.as_deref())?,
        sense: problem.sense,
    };
    let out = f.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let csv = f.csv.clone().unwrap_or_else(|| Artifacts::new(&out).dir.join("bench.csv"));
    let reps = f.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        bail!("--reps must be positive");
    }

    Ok(Settings {
        pipeline: PipelineConfig {
            problem,
            source,
            n_solvers: sizes.0.unwrap_or(DEFAULT_POOL_SIZE),
            n_instances: sizes.1.unwrap_or(DEFAULT_POOL_SIZE),
            n_tests: sizes.2.unwrap_or(DEFAULT_POOL_SIZE),
            seed: f.seed.unwrap_or(0),
            exec,
            runner,
            instance_schema,
            em,
            selection,
        },
        out,
        reps,
        grid: parse_grid(f.grid.as_deref().unwrap_or(DEFAULT_GRID))?,
        workers: f.workers,
        csv,
        explicit_sizes: (f.n_instances, f.n_tests),
    })
}

pub fn cmd_run(s: &Settings) -> Result<RunSummary> {
    Ok(pipeline::run(&s.pipeline, &s.out)?)
}

pub fn cmd_stage(stage: Stage, s: &Settings) -> Result<()> {
    Ok(pipeline::run_stage(stage, &s.pipeline, &s.out)?)
}

/// Solver grades for the precomputed cube: the ground truth of synthetic
/// pools, otherwise the recorded outcomes checked against the set cover oracle.
pub fn bench_grades(s: &Settings, pools: &pipeline::PoolsArtifact, raw: &poolsel_core::RawResults) -> Result<Vec<SolverGrade>> {
    if let Some(g) = pools.synthetic_grades() {
        return Ok(g);
    }
    if s.pipeline.instance_schema != SchemaKind::Wscp {
        bail!("no reference oracle for this problem; bench needs synthetic pools or set cover instances");
    }
    let (_, ni, _) = raw.sizes();
    (0..raw.sizes().0)
        .map(|k| {
            let outcomes: Vec<_> = (0..ni).map(|i| raw.pair(k, i).clone()).collect();
            Ok(grade_outcomes(&outcomes, &pools.pools.instances, &WscpOracle)?)
        })
        .collect()
}

pub fn cmd_bench(s: &Settings) -> Result<ExperimentResult> {
    let art = s.artifacts();
    for path in [art.pools(), art.raw()] {
        if !path.is_file() {
            bail!(
                "no precomputed results at {}; run `poolsel run` or the generate and evaluate stages first",
                path.display()
            );
        }
    }
    let pools = art.read_pools()?;
    let raw = art.read_raw()?;
    if raw.ids != pools.pools.ids() {
        bail!("{} and {} describe different pools", art.pools().display(), art.raw().display());
    }
    let grades = bench_grades(s, &pools, &raw)?;
    let (_, ni, nt) = raw.sizes();
    let grid: Vec<GridPoint> = s
        .grid
        .iter()
        .map(|e| {
            GridPoint::new(
                e.n_solvers,
                e.n_instances.or(s.explicit_sizes.0).unwrap_or(ni),
                e.n_tests.or(s.explicit_sizes.1).unwrap_or(nt),
            )
        })
        .collect();
    let cfg = BenchConfig {
        em: s.pipeline.em.clone(),
        selection: SelectionConfig { sense: s.pipeline.problem.sense, ..s.pipeline.selection },
        workers: s.workers,
    };
    let result = bootstrap_experiment(&raw, &grades, &grid, s.reps, s.pipeline.seed, &cfg)?;
    if let Some(dir) = s.csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    result.save_csv(&s.csv)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_entries() {
        let g = parse_grid("1, 5,20x10x4").unwrap();
        assert_eq!(g[0], GridEntry { n_solvers: 1, n_instances: None, n_tests: None });
        assert_eq!(g[2], GridEntry { n_solvers: 20, n_instances: Some(10), n_tests: Some(4) });
        for bad in ["", "0", "3x4", "a", "1,,x"] {
            assert!(parse_grid(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn synthetic_is_the_default_source() {
        let s = resolve(&Flags::default(), None).unwrap();
        assert!(matches!(s.pipeline.source, ComponentSource::Synthetic(_)));
        assert_eq!(s.pipeline.n_solvers, DEFAULT_POOL_SIZE);
        assert_eq!(s.pipeline.instance_schema, SchemaKind::Wscp);
        assert_eq!(s.grid.len(), 4);
        assert!(s.pipeline.runner.is_none());
    }

    #[test]
    fn fixture_sizes_default_to_directory_counts() {
        let dir = tempfile::tempdir().unwrap();
        for (sub, n) in [("solvers", 2), ("instances", 3), ("tests", 1)] {
            fs::create_dir(dir.path().join(sub)).unwrap();
            for k in 0..n {
                fs::write(dir.path().join(sub).join(format!("{k}.txt")), "x").unwrap();
            }
            fs::write(dir.path().join(sub).join(".hidden"), "x").unwrap();
        }
        let flags = Flags { fixtures_dir: Some(dir.path().into()), n_tests: Some(4), ..Flags::default() };
        let s = resolve(&flags, None).unwrap();
        assert_eq!((s.pipeline.n_solvers, s.pipeline.n_instances, s.pipeline.n_tests), (2, 3, 4));
        assert!(s.pipeline.runner.is_none());
    }

    #[test]
    fn timeouts_must_be_positive() {
        let flags = Flags { solver_timeout: Some(0.0), ..Flags::default() };
        assert!(resolve(&flags, None).is_err());
    }
}
