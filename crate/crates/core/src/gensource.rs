//! Component pools from a remote completion endpoint, a fixture directory or
//! the synthetic generator.
//!
//! A failed generation never shrinks a pool: it becomes a placeholder
//! component that the harness classifies as non-compiling and the filter
//! then removes.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::benchlab::TrueEnsembleSpec;
use crate::domain::{Component, ComponentKind, Origin, Pools};
use crate::select::Sense;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub description: String,
    pub input_format: String,
    pub output_format: String,
    pub sense: Sense,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, text) in [
            ("description", &self.description),
            ("input_format", &self.input_format),
            ("output_format", &self.output_format),
        ] {
            if text.trim().is_empty() {
                return Err(Error::InvalidInput(format!("problem {name} is empty")));
            }
        }
        Ok(())
    }
}

/// How an instance prompt asks for its instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceVariant {
    Feasible,
    Infeasible,
    Random,
}

const VARIANTS: [InstanceVariant; 3] = [InstanceVariant::Feasible, InstanceVariant::Infeasible, InstanceVariant::Random];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: ComponentKind,
    pub index: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<InstanceVariant>,
    pub text: String,
}

impl Prompt {
    pub fn component_id(&self) -> String {
        format!("{}-{:03}", self.kind, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBatch {
    pub seed: u64,
    pub solver_prompts: Vec<Prompt>,
    pub instance_prompts: Vec<Prompt>,
    pub test_prompts: Vec<Prompt>,
}

impl PromptBatch {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.solver_prompts.len(), self.instance_prompts.len(), self.test_prompts.len())
    }

    pub fn len(&self) -> usize {
        let (s, i, t) = self.sizes();
        s + i + t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Prompt> {
        self.solver_prompts.iter().chain(&self.instance_prompts).chain(&self.test_prompts)
    }
}

const REPORT_CONTRACT: &str = r#"`solve(instance)` must return a dict with keys
  "status": one of "OPTIMAL", "TIME_LIMIT", "INFEASIBLE";
  "objective": a finite number (omit when INFEASIBLE);
  "solution": any JSON value describing the solution (omit when INFEASIBLE).
The program is run as `runner solve <file>` with `{"instance": <instance>}` on
standard input and must print that dict as a single JSON line."#;

const TEST_CONTRACT: &str = r#"`check(instance, solution, objective)` must return a bool. The program is run
as `runner test <file>` with `{"instance": ..., "solution": ..., "objective": ...}`
on standard input and must print exactly `true` or `false`."#;

fn solver_prompt(spec: &ProblemSpec, seed: u64) -> String {
    format!(
        "You are writing a solver for the following optimization problem ({sense}).\n\n\
         {desc}\n\nInput format:\n{inp}\n\nOutput format:\n{out}\n\n\
         Write a self-contained Python module defining {contract}\n\
         Return the best solution found within the time limit. Random seed: {seed}.\n\
         Answer with a single fenced code block.",
        sense = sense_word(spec.sense),
        desc = spec.description,
        inp = spec.input_format,
        out = spec.output_format,
        contract = REPORT_CONTRACT,
    )
}

fn instance_prompt(spec: &ProblemSpec, variant: InstanceVariant, seed: u64) -> String {
    let ask = match variant {
        InstanceVariant::Feasible => "a feasible instance (one that admits at least one feasible solution)",
        InstanceVariant::Infeasible => "an infeasible instance (one that admits no feasible solution)",
        InstanceVariant::Random => "a random instance",
    };
    format!(
        "Generate {ask} of the following optimization problem, small enough to be solved exactly in seconds.\n\n\
         {desc}\n\nInput format:\n{inp}\n\n\
         Answer with a single fenced code block containing only the instance as JSON. Random seed: {seed}.",
        desc = spec.description,
        inp = spec.input_format,
    )
}

fn test_prompt(spec: &ProblemSpec, seed: u64) -> String {
    format!(
        "Write a validity test for solutions of the following optimization problem.\n\n\
         {desc}\n\nInput format:\n{inp}\n\nOutput format:\n{out}\n\n\
         The test receives an instance, a solution and the objective value reported for it. \
         It returns true iff the solution is feasible and its true objective value matches the reported objective.\n\
         Write a self-contained Python module defining {contract}\n\
         Random seed: {seed}. Answer with a single fenced code block.",
        desc = spec.description,
        inp = spec.input_format,
        out = spec.output_format,
        contract = TEST_CONTRACT,
    )
}

fn sense_word(sense: Sense) -> &'static str {
    match sense {
        Sense::Minimize => "minimization",
        Sense::Maximize => "maximization",
    }
}

/// Builds the `n_s + n_i + n_t` prompts of one generation batch. Every prompt
/// gets a distinct seed derived from `seed`; instance prompts cycle through
/// feasible, infeasible and random phrasings.
pub fn render_prompts(spec: &ProblemSpec, n_s: usize, n_i: usize, n_t: usize, seed: u64) -> Result<PromptBatch> {
    spec.validate()?;
    if n_s == 0 || n_i == 0 || n_t == 0 {
        return Err(Error::InvalidInput("pool sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut next_seed = move || loop {
        let s: u64 = rng.random();
        if used.insert(s) {
            return s;
        }
    };
    let solver_prompts = (0..n_s)
        .map(|index| {
            let seed = next_seed();
            Prompt { kind: ComponentKind::Solver, index, seed, variant: None, text: solver_prompt(spec, seed) }
        })
        .collect();
    let instance_prompts = (0..n_i)
        .map(|index| {
            let seed = next_seed();
            let variant = VARIANTS[index % VARIANTS.len()];
            Prompt {
                kind: ComponentKind::Instance,
                index,
                seed,
                variant: Some(variant),
                text: instance_prompt(spec, variant, seed),
            }
        })
        .collect();
    let test_prompts = (0..n_t)
        .map(|index| {
            let seed = next_seed();
            Prompt { kind: ComponentKind::Test, index, seed, variant: None, text: test_prompt(spec, seed) }
        })
        .collect();
    Ok(PromptBatch { seed, solver_prompts, instance_prompts, test_prompts })
}

/// Body of the first fenced code block, without its language tag.
pub fn extract_code_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let close = body.find("```")?;
    let code = &body[..close];
    (!code.trim().is_empty()).then_some(code)
}

fn default_extension(kind: ComponentKind) -> &'static str {
    match kind {
        ComponentKind::Instance => "json",
        _ => "py",
    }
}

/// Chat-completions endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    #[serde(default = "RemoteConfig::default_temperature")]
    pub temperature: f64,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "RemoteConfig::default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "RemoteConfig::default_timeout", with = "secs")]
    pub timeout: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl RemoteConfig {
    fn default_temperature() -> f64 {
        0.7
    }

    fn default_concurrency() -> usize {
        16
    }

    fn default_timeout() -> Duration {
        Duration::from_secs(120)
    }

    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            temperature: Self::default_temperature(),
            api_key_env: None,
            max_concurrency: Self::default_concurrency(),
            timeout: Self::default_timeout(),
        }
    }
}

/// Synthetic pools: descriptor components backed by a reference ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub optimal_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { optimal_fraction: 0.2 }
    }
}

impl SyntheticConfig {
    pub fn spec(&self, batch: &PromptBatch) -> Result<TrueEnsembleSpec> {
        let (ns, ni, nt) = batch.sizes();
        TrueEnsembleSpec::reference(ns, ni, nt, self.optimal_fraction, batch.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComponentSource {
    Remote(RemoteConfig),
    Fixtures { dir: PathBuf },
    Synthetic(SyntheticConfig),
}

/// Produces one pool per kind, sized as requested by `batch`.
pub fn fetch_components(source: &ComponentSource, batch: &PromptBatch) -> Result<Pools> {
    match source {
        ComponentSource::Remote(cfg) => fetch_remote(cfg, batch),
        ComponentSource::Fixtures { dir } => load_fixtures(dir, batch),
        ComponentSource::Synthetic(cfg) => synthetic_pools(cfg, batch),
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::InvalidInput(format!("fixture directory {} is missing", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')));
    files.sort();
    Ok(files)
}

/// Fixture layout: `solvers/`, `instances/`, `tests/`, kind given by directory.
///
/// With exactly as many files as requested, every file is used in name
/// order. Fewer requested: a seeded subset, kept in name order. More
/// requested: every file, then seeded draws with replacement whose ids get a
/// `#k` suffix.
pub fn load_fixtures(root: &Path, batch: &PromptBatch) -> Result<Pools> {
    let (ns, ni, nt) = batch.sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    let mut load = |kind: ComponentKind, want: usize| -> Result<Vec<Component>> {
        let files = list_dir(&root.join(kind.dir_name()))?;
        if files.is_empty() {
            return Err(Error::EmptyPool(kind.dir_name()));
        }
        let picks: Vec<usize> = if want <= files.len() {
            let mut idx = rand::seq::index::sample(&mut rng, files.len(), want).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..files.len())
                .chain((files.len()..want).map(|_| rng.random_range(0..files.len())))
                .collect()
        };
        picks
            .into_iter()
            .enumerate()
            .map(|(k, f)| {
                let path = &files[f];
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let id = if k < files.len() || want <= files.len() { name } else { format!("{name}#{k}") };
                let payload = fs::read(path)?;
                let mut c = Component::new(id, kind, payload, Origin::Fixture)?;
                if let Some(ext) = path.extension() {
                    c = c.with_extension(ext.to_string_lossy());
                }
                Ok(c.with_seed_tag(f as u64))
            })
            .collect()
    };
    Ok(Pools {
        solvers: load(ComponentKind::Solver, ns)?,
        instances: load(ComponentKind::Instance, ni)?,
        tests: load(ComponentKind::Test, nt)?,
    })
}

fn synthetic_pools(cfg: &SyntheticConfig, batch: &PromptBatch) -> Result<Pools> {
    let spec = cfg.spec(batch)?;
    let describe = |p: &Prompt, extra: Value| -> Result<Component> {
        let doc = json!({ "synthetic": p.kind.to_string(), "index": p.index, "detail": extra });
        Ok(Component::new(format!("s{}", p.index), p.kind, doc.to_string(), Origin::Synthetic)?
            .with_seed_tag(p.seed)
            .with_extension("json"))
    };
    let rename = |c: Component, prefix: &str| Component { id: format!("{prefix}{}", &c.id[1..]), ..c };
    Ok(Pools {
        solvers: batch
            .solver_prompts
            .iter()
            .map(|p| describe(p, serde_json::to_value(&spec.solvers[p.index])?))
            .collect::<Result<_>>()?,
        instances: batch
            .instance_prompts
            .iter()
            .map(|p| describe(p, Value::Null).map(|c| rename(c, "i")))
            .collect::<Result<_>>()?,
        tests: batch
            .test_prompts
            .iter()
            .map(|p| describe(p, Value::Null).map(|c| rename(c, "t")))
            .collect::<Result<_>>()?,
    })
}

fn fetch_remote(cfg: &RemoteConfig, batch: &PromptBatch) -> Result<Pools> {
    if cfg.max_concurrency == 0 {
        return Err(Error::InvalidInput("max_concurrency must be positive".into()));
    }
    let api_key = match &cfg.api_key_env {
        Some(var) => Some(std::env::var(var).map_err(|_| Error::InvalidInput(format!("environment variable {var} is not set")))?),
        None => None,
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_concurrency)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;

    let prompts: Vec<&Prompt> = batch.iter().collect();
    let components: Vec<Component> = pool.install(|| {
        prompts
            .par_iter()
            .map(|p| {
                let id = p.component_id();
                let ext = default_extension(p.kind);
                let made = complete(&client, cfg, api_key.as_deref(), &p.text).and_then(|text| {
                    let code = extract_code_block(&text)
                        .ok_or_else(|| Error::InvalidInput("completion has no fenced code block".into()))?;
                    Component::new(id.clone(), p.kind, code, Origin::Remote)
                });
                match made {
                    Ok(c) => c.with_seed_tag(p.seed).with_extension(ext),
                    Err(e) => {
                        log::warn!("generation of {id} failed: {e}");
                        Component::placeholder(id, p.kind, Origin::Remote, &e.to_string())
                            .with_seed_tag(p.seed)
                            .with_extension(ext)
                    }
                }
            })
            .collect()
    });
    let (ns, ni, _) = batch.sizes();
    let mut it = components.into_iter();
    Ok(Pools {
        solvers: it.by_ref().take(ns).collect(),
        instances: it.by_ref().take(ni).collect(),
        tests: it.collect(),
    })
}

fn complete(client: &reqwest::blocking::Client, cfg: &RemoteConfig, api_key: Option<&str>, prompt: &str) -> Result<String> {
    let body = json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [{ "role": "user", "content": prompt }],
    });
    let mut req = client.post(&cfg.url).json(&body);
    if let Some(key) = api_key {
        req = req.bearer_auth(key);
    }
    let resp = req
        .send()
        .and_then(|r| r.error_for_status())
        .map_err(|e| Error::Transport(e.to_string()))?;
    let doc: Value = resp.json().map_err(|e| Error::Transport(e.to_string()))?;
    doc.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()))
}
