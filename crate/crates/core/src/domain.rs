//! Shared value types for every pipeline stage, plus report parsing.
//!
//! Everything here is an immutable value once constructed. The
//! cross-evaluation cube is stored densely, indexed by the position of each
//! component in its pool, so that lookups during filtering and inference are
//! plain array reads.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

/// Which of the three generated pools a component belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Solver,
    Instance,
    Test,
}

impl ComponentKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            ComponentKind::Solver => "solvers",
            ComponentKind::Instance => "instances",
            ComponentKind::Test => "tests",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ComponentKind::Solver => "solver",
            ComponentKind::Instance => "instance",
            ComponentKind::Test => "test",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Remote,
    Fixture,
    Synthetic,
}

/// One generated artifact: a solver script, an instance document or a test
/// script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub kind: ComponentKind,
    /// Script source or instance document, UTF-8 in practice but treated as bytes.
    #[serde(with = "payload_serde")]
    pub payload: Vec<u8>,
    pub origin: Origin,
    /// Generation seed; meaningful for instances.
    pub seed_tag: u64,
    /// File extension used when the payload is written to disk (`py`, `json`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension: Option<String>,
}

/// Payload prefix marking a component whose generation failed. The harness
/// classifies such components as non-compiling without launching them.
pub const PLACEHOLDER_MARKER: &str = "#!poolsel-placeholder";

impl Component {
    pub fn new(
        id: impl Into<String>,
        kind: ComponentKind,
        payload: impl Into<Vec<u8>>,
        origin: Origin,
    ) -> Result<Self> {
        let payload = payload.into();
        if payload.is_empty() {
            return Err(Error::InvalidInput("component payload is empty".into()));
        }
        Ok(Self {
            id: id.into(),
            kind,
            payload,
            origin,
            seed_tag: 0,
            extension: None,
        })
    }

    pub fn with_seed_tag(mut self, seed_tag: u64) -> Self {
        self.seed_tag = seed_tag;
        self
    }

    pub fn with_extension(mut self, ext: impl Into<String>) -> Self {
        self.extension = Some(ext.into());
        self
    }

    /// A stand-in for a component that could not be generated.
    pub fn placeholder(id: impl Into<String>, kind: ComponentKind, origin: Origin, reason: &str) -> Self {
        let reason = reason.replace('\n', " ");
        Self {
            id: id.into(),
            kind,
            payload: format!("{PLACEHOLDER_MARKER} {reason}\n").into_bytes(),
            origin,
            seed_tag: 0,
            extension: None,
        }
    }

    pub fn is_placeholder(&self) -> bool {
        self.payload.starts_with(PLACEHOLDER_MARKER.as_bytes())
    }
}

mod payload_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    // Payloads are stored as strings; every source produces UTF-8 text.
    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

/// The three component pools produced by a generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub solvers: Vec<Component>,
    pub instances: Vec<Component>,
    pub tests: Vec<Component>,
}

impl Pools {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.solvers.len(), self.instances.len(), self.tests.len())
    }

    pub fn ids(&self) -> PoolIds {
        PoolIds {
            solvers: self.solvers.iter().map(|c| c.id.clone()).collect(),
            instances: self.instances.iter().map(|c| c.id.clone()).collect(),
            tests: self.tests.iter().map(|c| c.id.clone()).collect(),
        }
    }

    pub fn solver(&self, id: &str) -> Option<&Component> {
        self.solvers.iter().find(|c| c.id == id)
    }
}

/// Ordered identifiers of the three pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolIds {
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    pub tests: Vec<String>,
}

impl PoolIds {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.solvers.len(), self.instances.len(), self.tests.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

impl SolveStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "OPTIMAL" => Some(SolveStatus::Optimal),
            "TIME_LIMIT" => Some(SolveStatus::TimeLimit),
            "INFEASIBLE" => Some(SolveStatus::Infeasible),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::TimeLimit => "TIME_LIMIT",
            SolveStatus::Infeasible => "INFEASIBLE",
        }
    }
}

/// Structured result of running a solver on one instance.
///
/// Only constructible through [`SolveReport::infeasible`] and
/// [`SolveReport::with_solution`], which enforce that an objective and a
/// solution are present exactly when the status is not `Infeasible`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReportRepr", into = "ReportRepr")]
pub struct SolveReport {
    status: SolveStatus,
    incumbent: Option<(f64, Value)>,
}

impl SolveReport {
    pub fn infeasible() -> Self {
        Self {
            status: SolveStatus::Infeasible,
            incumbent: None,
        }
    }

    pub fn with_solution(status: SolveStatus, objective: f64, solution: Value) -> Result<Self> {
        if status == SolveStatus::Infeasible {
            return Err(Error::InvalidInput("an infeasible report carries no solution".into()));
        }
        if !objective.is_finite() {
            return Err(Error::InvalidInput(format!("objective {objective} is not finite")));
        }
        Ok(Self {
            status,
            incumbent: Some((objective, solution)),
        })
    }

    pub fn status(&self) -> SolveStatus {
        self.status
    }

    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|(z, _)| *z)
    }

    pub fn solution(&self) -> Option<&Value> {
        self.incumbent.as_ref().map(|(_, x)| x)
    }

    pub fn has_solution(&self) -> bool {
        self.incumbent.is_some()
    }

    /// Serializes into the single-line report document.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(default, deserialize_with = "present", skip_serializing_if = "Option::is_none")]
    solution: Option<Value>,
}

// Distinguishes `"solution": null` (present) from a missing key.
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

impl TryFrom<ReportRepr> for SolveReport {
    type Error = String;

    fn try_from(r: ReportRepr) -> std::result::Result<Self, String> {
        let status = SolveStatus::parse(&r.status).ok_or_else(|| format!("unknown status {:?}", r.status))?;
        match (status, r.objective, r.solution) {
            (SolveStatus::Infeasible, None, None) => Ok(SolveReport::infeasible()),
            (SolveStatus::Infeasible, _, _) => Err("infeasible report carries an incumbent".into()),
            (s, Some(z), Some(x)) => SolveReport::with_solution(s, z, x).map_err(|e| e.to_string()),
            _ => Err("report with a solution status lacks objective or solution".into()),
        }
    }
}

impl From<SolveReport> for ReportRepr {
    fn from(r: SolveReport) -> Self {
        let (objective, solution) = match r.incumbent {
            Some((z, x)) => (Some(z), Some(x)),
            None => (None, None),
        };
        ReportRepr {
            status: r.status.as_str().to_string(),
            objective,
            solution,
        }
    }
}

/// Why a pair or triple could not be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    CompileError,
    RuntimeError,
    Timeout,
    MalformedReport,
}

/// Decodes a solver's output. Total: anything that is not a consistent report
/// is `Err(MalformedReport)`.
pub fn parse_report(raw: &[u8]) -> std::result::Result<SolveReport, FailureReason> {
    let text = std::str::from_utf8(raw).map_err(|_| FailureReason::MalformedReport)?;
    let text = text.trim();
    if text.is_empty() || text.lines().count() != 1 {
        return Err(FailureReason::MalformedReport);
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(_)) => {}
        _ => return Err(FailureReason::MalformedReport),
    }
    serde_json::from_str::<SolveReport>(text).map_err(|_| FailureReason::MalformedReport)
}

/// Outcome of executing one solver on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub interpretable: bool,
    /// Whether the report contains a solution. Meaningless when not interpretable.
    pub r: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SolveReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReason>,
}

impl PairOutcome {
    pub fn failed(reason: FailureReason) -> Self {
        Self {
            interpretable: false,
            r: false,
            report: None,
            z: None,
            failure: Some(reason),
        }
    }

    pub fn reported(report: SolveReport) -> Self {
        let z = report.objective();
        Self {
            interpretable: true,
            r: report.has_solution(),
            report: Some(report),
            z,
            failure: None,
        }
    }

    pub fn has_solution(&self) -> bool {
        self.interpretable && self.r
    }
}

/// Outcome of running one test on the solution of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleOutcome {
    pub interpretable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl TripleOutcome {
    pub const NO_SOLUTION: TripleOutcome = TripleOutcome {
        interpretable: true,
        pass: None,
    };
    pub const BROKEN: TripleOutcome = TripleOutcome {
        interpretable: false,
        pass: None,
    };

    pub fn verdict(pass: bool) -> Self {
        Self {
            interpretable: true,
            pass: Some(pass),
        }
    }
}

/// The full cross-evaluation cube over `S̄ × Ī × T̄`.
///
/// Pairs are dense (`s * n_instances + i`). Triples are stored only for
/// pairs that reported a solution; every other triple is implied by its pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResults {
    pub ids: PoolIds,
    pairs: Vec<PairOutcome>,
    triples: Vec<Option<Vec<TripleOutcome>>>,
}

impl RawResults {
    /// Builds the cube, checking completeness and that triples exist exactly
    /// for pairs with a solution.
    pub fn new(ids: PoolIds, pairs: Vec<PairOutcome>, triples: Vec<Option<Vec<TripleOutcome>>>) -> Result<Self> {
        let (ns, ni, nt) = ids.sizes();
        if pairs.len() != ns * ni || triples.len() != ns * ni {
            return Err(Error::InvalidInput(format!(
                "cube has {} pairs / {} triple rows, expected {}",
                pairs.len(),
                triples.len(),
                ns * ni
            )));
        }
        for (k, (p, t)) in pairs.iter().zip(&triples).enumerate() {
            match (p.has_solution(), t) {
                (true, Some(row)) if row.len() == nt => {}
                (false, None) => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "triples for pair #{k} do not match its outcome"
                    )))
                }
            }
        }
        Ok(Self { ids, pairs, triples })
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        self.ids.sizes()
    }

    pub fn pair(&self, s: usize, i: usize) -> &PairOutcome {
        &self.pairs[s * self.ids.instances.len() + i]
    }

    /// Triple outcome as the testing step defines it; `None` when the pair
    /// itself is not interpretable (no test was run).
    pub fn triple(&self, s: usize, i: usize, t: usize) -> Option<TripleOutcome> {
        let k = s * self.ids.instances.len() + i;
        let pair = &self.pairs[k];
        if !pair.interpretable {
            return None;
        }
        match &self.triples[k] {
            Some(row) => Some(row[t]),
            None => Some(TripleOutcome::NO_SOLUTION),
        }
    }

    pub fn executed_triples(&self, s: usize, i: usize) -> Option<&[TripleOutcome]> {
        self.triples[s * self.ids.instances.len() + i].as_deref()
    }

    pub fn pairs(&self) -> &[PairOutcome] {
        &self.pairs
    }

    /// Number of triples actually executed.
    pub fn triple_count(&self) -> usize {
        self.triples.iter().flatten().map(Vec::len).sum()
    }

    /// Sub-cube over the given pool indices. Indices may repeat; repeated
    /// components become distinct rows with `#k` suffixed ids.
    pub fn resample(&self, solvers: &[usize], instances: &[usize], tests: &[usize]) -> RawResults {
        fn relabel(src: &[String], idx: &[usize]) -> Vec<String> {
            idx.iter().enumerate().map(|(k, &j)| format!("{}#{k}", src[j])).collect()
        }
        let ids = PoolIds {
            solvers: relabel(&self.ids.solvers, solvers),
            instances: relabel(&self.ids.instances, instances),
            tests: relabel(&self.ids.tests, tests),
        };
        let mut pairs = Vec::with_capacity(solvers.len() * instances.len());
        let mut triples = Vec::with_capacity(solvers.len() * instances.len());
        for &s in solvers {
            for &i in instances {
                pairs.push(self.pair(s, i).clone());
                triples.push(
                    self.executed_triples(s, i)
                        .map(|row| tests.iter().map(|&t| row[t]).collect()),
                );
            }
        }
        RawResults { ids, pairs, triples }
    }
}

/// Observations restricted to the filtered cube: report indicators, test pass
/// counts and reported objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    pub tests: Vec<String>,
    /// `r[s * n_instances + i]`
    pub r: Vec<bool>,
    /// Passed-test count; meaningful only where `r` is set.
    pub c: Vec<u32>,
    /// Reported objective; meaningful only where `r` is set.
    pub z: Vec<f64>,
}

impl ObservationSet {
    pub fn n_solvers(&self) -> usize {
        self.solvers.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_tests(&self) -> u32 {
        self.tests.len() as u32
    }

    #[inline]
    pub fn idx(&self, s: usize, i: usize) -> usize {
        s * self.instances.len() + i
    }

    /// Copy with every objective negated, turning a maximization problem
    /// into a minimization one.
    pub fn negated(&self) -> ObservationSet {
        let mut out = self.clone();
        for z in &mut out.z {
            *z = -*z;
        }
        out
    }

    /// Cube with instances reordered by `perm` (new position k holds old instance `perm[k]`).
    pub fn permute_instances(&self, perm: &[usize]) -> ObservationSet {
        let ni = self.n_instances();
        let mut out = self.clone();
        out.instances = perm.iter().map(|&j| self.instances[j].clone()).collect();
        for s in 0..self.n_solvers() {
            for (k, &j) in perm.iter().enumerate() {
                out.r[s * ni + k] = self.r[s * ni + j];
                out.c[s * ni + k] = self.c[s * ni + j];
                out.z[s * ni + k] = self.z[s * ni + j];
            }
        }
        out
    }
}

/// Model parameters θ of the latent-class model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
    pub prior_a: f64,
    pub prior_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_prior: Option<(f64, f64)>,
}

impl ModelParams {
    pub fn n_solvers(&self) -> usize {
        self.alpha.len()
    }

    /// Mean pass rate of tests on valid solutions.
    pub fn true_positive_rate(&self) -> f64 {
        self.a1 / (self.a1 + self.b1)
    }

    /// Mean pass rate of tests on invalid solutions.
    pub fn false_positive_rate(&self) -> f64 {
        self.a0 / (self.a0 + self.b0)
    }
}

/// Posterior quantities produced by the E-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    /// P(f_i = 1 | data) per instance.
    pub q: Vec<f64>,
    /// P(f_{s,i} = 1 | f_i = 1, data), dense `s * n_instances + i`; zero where r = 0.
    pub w: Vec<f64>,
    /// Log-posterior of the parameters that produced these posteriors.
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMetrics {
    pub id: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub g: f64,
    pub pareto: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub solvers: Vec<SolverMetrics>,
    pub z_max: f64,
    pub p_miss: f64,
    pub p_fail: f64,
    pub chosen: String,
    pub chosen_index: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn parses_conforming_report() {
        let r = parse_report(br#"{"status":"OPTIMAL","objective":4.0,"solution":[0,2]}"#).unwrap();
        assert_eq!(r.status(), SolveStatus::Optimal);
        assert_eq!(r.objective(), Some(4.0));
        assert_eq!(r.solution(), Some(&json!([0, 2])));
    }

    #[test]
    fn missing_status_is_malformed() {
        assert_eq!(parse_report(br#"{"objective":4.0}"#), Err(FailureReason::MalformedReport));
    }

    #[test]
    fn infeasible_with_solution_is_malformed() {
        assert_eq!(
            parse_report(br#"{"status":"INFEASIBLE","solution":[1]}"#),
            Err(FailureReason::MalformedReport)
        );
        assert_eq!(
            parse_report(br#"{"status":"INFEASIBLE","objective":3}"#),
            Err(FailureReason::MalformedReport)
        );
        assert!(parse_report(br#"{"status":"INFEASIBLE"}"#).is_ok());
    }

    #[test]
    fn rejects_unknown_status_and_non_objects() {
        for raw in [
            &br#"{"status":"optimal","objective":1,"solution":1}"#[..],
            br#"{"status":"FEASIBLE","objective":1,"solution":1}"#,
            br#"[1,2]"#,
            b"",
            b"\xff\xfe",
            b"{\"status\":\"INFEASIBLE\"}\n{\"status\":\"INFEASIBLE\"}",
        ] {
            assert_eq!(parse_report(raw), Err(FailureReason::MalformedReport), "{raw:?}");
        }
    }

    #[test]
    fn time_limit_requires_incumbent() {
        assert!(parse_report(br#"{"status":"TIME_LIMIT"}"#).is_err());
        let r = parse_report(br#"{"status":"TIME_LIMIT","objective":2.5,"solution":null}"#).unwrap();
        assert_eq!(r.solution(), Some(&Value::Null));
    }

    #[test]
    fn non_finite_objective_is_malformed() {
        // JSON has no NaN literal; overflowing numbers decode to infinity.
        assert!(parse_report(br#"{"status":"OPTIMAL","objective":1e999,"solution":1}"#).is_err());
        assert!(SolveReport::with_solution(SolveStatus::Optimal, f64::NAN, Value::Null).is_err());
    }

    #[test]
    fn resample_duplicates_rows() {
        let ids = PoolIds {
            solvers: vec!["s0".into(), "s1".into()],
            instances: vec!["i0".into()],
            tests: vec!["t0".into(), "t1".into()],
        };
        let rep = SolveReport::with_solution(SolveStatus::Optimal, 1.0, json!(1)).unwrap();
        let pairs = vec![PairOutcome::reported(rep), PairOutcome::failed(FailureReason::Timeout)];
        let triples = vec![Some(vec![TripleOutcome::verdict(true), TripleOutcome::verdict(false)]), None];
        let raw = RawResults::new(ids, pairs, triples).unwrap();
        let sub = raw.resample(&[0, 0, 1], &[0], &[1, 1]);
        assert_eq!(sub.sizes(), (3, 1, 2));
        assert_eq!(sub.ids.solvers, vec!["s0#0", "s0#1", "s1#2"]);
        assert_eq!(sub.triple(1, 0, 0), Some(TripleOutcome::verdict(false)));
        assert_eq!(sub.triple(2, 0, 1), None);
    }

    fn arb_report() -> impl Strategy<Value = SolveReport> {
        let value = prop_oneof![
            Just(Value::Null),
            any::<i64>().prop_map(|v| json!(v)),
            prop::collection::vec(0u32..50, 0..6).prop_map(|v| json!(v)),
            "[a-z]{0,8}".prop_map(|s| json!({ "tag": s })),
        ];
        prop_oneof![
            Just(SolveReport::infeasible()),
            (prop_oneof![Just(SolveStatus::Optimal), Just(SolveStatus::TimeLimit)], -1e12f64..1e12, value)
                .prop_map(|(s, z, x)| SolveReport::with_solution(s, z, x).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn report_round_trips(r in arb_report()) {
            prop_assert_eq!(parse_report(r.to_line().as_bytes()), Ok(r));
        }

        #[test]
        fn parse_is_deterministic(raw in prop::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(parse_report(&raw), parse_report(&raw));
        }
    }
}
