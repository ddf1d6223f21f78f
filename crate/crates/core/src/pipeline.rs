//! End-to-end runs and the on-disk artifacts exchanged between stages.
//!
//! Stages read and write plain JSON documents under `<out>/results/`, each
//! carrying a `schema_version`:
//!
//! | stage        | writes                                 |
//! |--------------|----------------------------------------|
//! | generate     | `pools.json`                           |
//! | evaluate     | `raw.jsonl`                            |
//! | filter       | `filtered.json`                        |
//! | characterize | `theta.json`                           |
//! | select       | `selection.json`, `selected_solver.*`  |
//!
//! Nothing time- or host-dependent is written, so identical inputs give
//! byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::benchlab::{gen_synthetic_ensemble, SolverGrade, TrueEnsembleSpec};
use crate::domain::{ObservationSet, PairOutcome, PoolIds, Pools, RawResults, SelectionReport, TripleOutcome};
use crate::em::{build_observations, fit_em, EmConfig, EmDiagnostics};
use crate::exec::{cross_evaluate, AnyJson, ExecLimits, Harness, Runner, WscpSchema};
use crate::filter::{collect_noninterpretable, solve_filter, FilterSolution};
use crate::gensource::{fetch_components, render_prompts, ComponentSource, ProblemSpec};
use crate::select::{select, SelectionConfig};
use crate::{Error, ModelParams, Posteriors, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    /// Any JSON document is a structurally valid instance.
    #[default]
    Json,
    /// K-robust weighted set cover documents only.
    Wscp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub problem: ProblemSpec,
    pub source: ComponentSource,
    pub n_solvers: usize,
    pub n_instances: usize,
    pub n_tests: usize,
    pub seed: u64,
    pub exec: ExecLimits,
    /// Required unless the source is synthetic.
    pub runner: Option<Runner>,
    pub instance_schema: SchemaKind,
    pub em: EmConfig,
    pub selection: SelectionConfig,
}

impl PipelineConfig {
    fn harness(&self) -> Result<Harness> {
        let runner = self
            .runner
            .clone()
            .ok_or_else(|| Error::InvalidInput("a runner command is required to execute components".into()))?;
        let h = Harness::new(runner, self.exec.clone())?;
        Ok(match self.instance_schema {
            SchemaKind::Json => h.with_schema(AnyJson),
            SchemaKind::Wscp => h.with_schema(WscpSchema),
        })
    }

    fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            sense: self.problem.sense,
            ..self.selection
        }
    }
}

/// `pools.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolsArtifact {
    pub schema_version: u32,
    pub seed: u64,
    pub pools: Pools,
    /// Ground truth behind synthetic pools.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<TrueEnsembleSpec>,
}

impl PoolsArtifact {
    /// Ground-truth grades, available for synthetic pools only.
    pub fn synthetic_grades(&self) -> Option<Vec<SolverGrade>> {
        self.synthetic
            .as_ref()
            .map(|s| s.solvers.iter().map(|t| t.quality.into()).collect())
    }
}

/// First line of `raw.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawHeader {
    schema_version: u32,
    #[serde(flatten)]
    ids: PoolIds,
}

/// One `(solver, instance)` cell of `raw.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    solver: String,
    instance: String,
    outcome: PairOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tests: Option<Vec<TripleOutcome>>,
}

/// `filtered.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredArtifact {
    pub schema_version: u32,
    pub solution: FilterSolution,
    pub retained: PoolIds,
    pub bad_triples: usize,
}

/// `theta.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaArtifact {
    pub schema_version: u32,
    pub params: ModelParams,
    pub posteriors: Posteriors,
    pub diagnostics: EmDiagnostics,
}

/// `selection.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub schema_version: u32,
    pub config: SelectionConfig,
    pub report: SelectionReport,
    pub selected_file: String,
}

/// Locations of the artifacts under an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(out: &Path) -> Self {
        Self { dir: out.join("results") }
    }

    pub fn pools(&self) -> PathBuf {
        self.dir.join("pools.json")
    }

    pub fn raw(&self) -> PathBuf {
        self.dir.join("raw.jsonl")
    }

    pub fn filtered(&self) -> PathBuf {
        self.dir.join("filtered.json")
    }

    pub fn theta(&self) -> PathBuf {
        self.dir.join("theta.json")
    }

    pub fn selection(&self) -> PathBuf {
        self.dir.join("selection.json")
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        self.ensure_dir()?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
        let text = fs::read(path).map_err(|e| missing(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&text)?;
        check_version(&value, path)?;
        Ok(serde_json::from_value(value)?)
    }

    pub fn write_pools(&self, a: &PoolsArtifact) -> Result<()> {
        self.write_json(&self.pools(), a)
    }

    pub fn read_pools(&self) -> Result<PoolsArtifact> {
        Self::read_json(&self.pools())
    }

    pub fn write_raw(&self, raw: &RawResults) -> Result<()> {
        self.ensure_dir()?;
        let mut w = BufWriter::new(fs::File::create(self.raw())?);
        let header = RawHeader { schema_version: SCHEMA_VERSION, ids: raw.ids.clone() };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let (ns, ni, _) = raw.sizes();
        for s in 0..ns {
            for i in 0..ni {
                let rec = CellRecord {
                    solver: raw.ids.solvers[s].clone(),
                    instance: raw.ids.instances[i].clone(),
                    outcome: raw.pair(s, i).clone(),
                    tests: raw.executed_triples(s, i).map(<[_]>::to_vec),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_raw(&self) -> Result<RawResults> {
        let path = self.raw();
        let file = fs::File::open(&path).map_err(|e| missing(&path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("{} is empty", path.display())))??;
        let header_value: serde_json::Value = serde_json::from_str(&first)?;
        check_version(&header_value, &path)?;
        let header: RawHeader = serde_json::from_value(header_value)?;
        let (ns, ni, _) = header.ids.sizes();
        let mut pairs = Vec::with_capacity(ns * ni);
        let mut triples = Vec::with_capacity(ns * ni);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CellRecord = serde_json::from_str(&line)?;
            let (s, i) = (k / ni.max(1), k % ni.max(1));
            if s >= ns || rec.solver != header.ids.solvers[s] || rec.instance != header.ids.instances[i] {
                return Err(Error::InvalidInput(format!("{}: cell {k} is out of order", path.display())));
            }
            pairs.push(rec.outcome);
            triples.push(rec.tests);
        }
        RawResults::new(header.ids, pairs, triples)
    }

    pub fn write_filtered(&self, a: &FilteredArtifact) -> Result<()> {
        self.write_json(&self.filtered(), a)
    }

    pub fn read_filtered(&self) -> Result<FilteredArtifact> {
        Self::read_json(&self.filtered())
    }

    pub fn write_theta(&self, a: &ThetaArtifact) -> Result<()> {
        self.write_json(&self.theta(), a)
    }

    pub fn read_theta(&self) -> Result<ThetaArtifact> {
        Self::read_json(&self.theta())
    }

    pub fn write_selection(&self, a: &SelectionArtifact) -> Result<()> {
        self.write_json(&self.selection(), a)
    }

    pub fn read_selection(&self) -> Result<SelectionArtifact> {
        Self::read_json(&self.selection())
    }
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::InvalidInput(format!("missing artifact {}; run the preceding stage first", path.display()))
    } else {
        Error::Io(e)
    }
}

fn check_version(value: &serde_json::Value, path: &Path) -> Result<()> {
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(()),
        other => Err(Error::InvalidInput(format!(
            "{} has schema_version {other:?}, expected {SCHEMA_VERSION}",
            path.display()
        ))),
    }
}

/// Generation stage.
pub fn generate(cfg: &PipelineConfig) -> Result<PoolsArtifact> {
    let batch = render_prompts(&cfg.problem, cfg.n_solvers, cfg.n_instances, cfg.n_tests, cfg.seed)?;
    let pools = fetch_components(&cfg.source, &batch)?;
    let synthetic = match &cfg.source {
        ComponentSource::Synthetic(s) => Some(s.spec(&batch)?),
        _ => None,
    };
    Ok(PoolsArtifact { schema_version: SCHEMA_VERSION, seed: cfg.seed, pools, synthetic })
}

/// Testing stage: child-process cross-evaluation, or the generative model
/// for synthetic pools.
pub fn evaluate(cfg: &PipelineConfig, pools: &PoolsArtifact) -> Result<RawResults> {
    match &pools.synthetic {
        Some(spec) => {
            let (mut raw, _) = gen_synthetic_ensemble(spec)?;
            raw.ids = pools.pools.ids();
            Ok(raw)
        }
        None => cross_evaluate(&pools.pools, &cfg.harness()?),
    }
}

/// Filtering stage.
pub fn filter(raw: &RawResults) -> Result<FilteredArtifact> {
    let bad = collect_noninterpretable(raw);
    let solution = solve_filter(&bad)?;
    Ok(FilteredArtifact {
        schema_version: SCHEMA_VERSION,
        retained: solution.retained_ids(&raw.ids),
        bad_triples: bad.len(),
        solution,
    })
}

/// Characterization stage.
pub fn characterize(raw: &RawResults, filtered: &FilteredArtifact, em: &EmConfig) -> Result<(ObservationSet, ThetaArtifact)> {
    let obs = build_observations(raw, &filtered.solution)?;
    let fit = fit_em(&obs, em)?;
    let theta = ThetaArtifact {
        schema_version: SCHEMA_VERSION,
        params: fit.params,
        posteriors: fit.posteriors,
        diagnostics: fit.diagnostics,
    };
    Ok((obs, theta))
}

/// Selection stage. Returns the artifact and the chosen solver's file name.
pub fn choose(
    cfg: &PipelineConfig,
    pools: &PoolsArtifact,
    obs: &ObservationSet,
    theta: &ThetaArtifact,
) -> Result<SelectionArtifact> {
    let sel_cfg = cfg.selection_config();
    let report = select(&theta.params, &theta.posteriors, obs, &sel_cfg)?;
    let solver = pools
        .pools
        .solver(&report.chosen)
        .ok_or_else(|| Error::Inconsistent(format!("chosen solver {} is not in the pool", report.chosen)))?;
    let ext = solver.extension.as_deref().unwrap_or("txt");
    Ok(SelectionArtifact {
        schema_version: SCHEMA_VERSION,
        config: sel_cfg,
        selected_file: format!("selected_solver.{ext}"),
        report,
    })
}

/// Runs one named stage against the artifacts in `out`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let art = Artifacts::new(out);
    match stage {
        Stage::Generate => art.write_pools(&generate(cfg)?),
        Stage::Evaluate => {
            let pools = art.read_pools()?;
            art.write_raw(&evaluate(cfg, &pools)?)
        }
        Stage::Filter => art.write_filtered(&filter(&art.read_raw()?)?),
        Stage::Characterize => {
            let (_, theta) = characterize(&art.read_raw()?, &art.read_filtered()?, &cfg.em)?;
            art.write_theta(&theta)
        }
        Stage::Select => {
            let pools = art.read_pools()?;
            let raw = art.read_raw()?;
            let filtered = art.read_filtered()?;
            let theta = art.read_theta()?;
            let obs = build_observations(&raw, &filtered.solution)?;
            write_selection(&art, &pools, &choose(cfg, &pools, &obs, &theta)?)
        }
    }
}

fn write_selection(art: &Artifacts, pools: &PoolsArtifact, sel: &SelectionArtifact) -> Result<()> {
    art.write_selection(sel)?;
    let solver = pools.pools.solver(&sel.report.chosen).expect("checked by choose");
    for entry in fs::read_dir(&art.dir)? {
        let path = entry?.path();
        if path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("selected_solver.")) {
            fs::remove_file(path)?;
        }
    }
    fs::write(art.dir.join(&sel.selected_file), &solver.payload)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Evaluate,
    Filter,
    Characterize,
    Select,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Generate, Stage::Evaluate, Stage::Filter, Stage::Characterize, Stage::Select];
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generate" => Stage::Generate,
            "evaluate" => Stage::Evaluate,
            "filter" => Stage::Filter,
            "characterize" => Stage::Characterize,
            "select" => Stage::Select,
            _ => return Err(Error::InvalidInput(format!("unknown stage {s:?}"))),
        })
    }
}

/// Summary of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub selection: SelectionArtifact,
    pub filtered: FilteredArtifact,
    pub iterations: usize,
}

/// Generation → testing → filtering → characterization → selection, writing
/// every artifact under `out`.
pub fn run(cfg: &PipelineConfig, out: &Path) -> Result<RunSummary> {
    let art = Artifacts::new(out);
    let pools = generate(cfg)?;
    art.write_pools(&pools)?;
    let raw = evaluate(cfg, &pools)?;
    art.write_raw(&raw)?;
    let filtered = filter(&raw)?;
    art.write_filtered(&filtered)?;
    let (obs, theta) = characterize(&raw, &filtered, &cfg.em)?;
    art.write_theta(&theta)?;
    let selection = choose(cfg, &pools, &obs, &theta)?;
    write_selection(&art, &pools, &selection)?;
    Ok(RunSummary { iterations: theta.diagnostics.iterations, selection, filtered })
}
