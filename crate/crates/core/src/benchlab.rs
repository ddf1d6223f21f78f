//! Synthetic ground-truth cubes, solver grading and the bootstrap experiment.
//!
//! Every random draw comes from a ChaCha8 stream. Ensembles use the stream
//! seeded by `spec.seed`; bootstrap repetition `k` of grid point `g` uses the
//! master seed with stream id `(g << 32) | k`, so results do not depend on
//! how repetitions are scheduled across workers.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{Component, PairOutcome, PoolIds, RawResults, SolveReport, SolveStatus, TripleOutcome};
use crate::em::{build_observations, fit_em, EmConfig};
use crate::exec::Harness;
use crate::filter::{collect_noninterpretable, solve_filter};
use crate::select::{select, SelectionConfig};
use crate::wscp::{self, WscpInstance};
use crate::{Error, Result};

/// Relative tolerance for matching a reported objective against ground truth.
pub const OPTIMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Optimal,
    Suboptimal,
    Broken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSolver {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub quality: Quality,
    /// Added to the true optimum on every valid report.
    pub objective_bias: f64,
}

impl TrueSolver {
    pub fn perfect(quality: Quality, objective_bias: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
            quality,
            objective_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEnsembleSpec {
    pub lambda: f64,
    pub solvers: Vec<TrueSolver>,
    /// `(a0, b0, a1, b1)` of the per-solution test pass probability.
    pub shapes: (f64, f64, f64, f64),
    pub n_instances: usize,
    pub n_tests: usize,
    pub seed: u64,
}

impl TrueEnsembleSpec {
    /// The reference noise setting used by the recovery and selection
    /// experiments.
    ///
    /// * λ = 0.6; tests pass valid solutions with probability ~ Beta(9, 1)
    ///   and invalid ones with probability ~ Beta(2, 6).
    /// * `round(optimal_fraction · n_solvers)` solvers are optimal, 30 % are
    ///   suboptimal, the rest broken. Optimal and suboptimal solvers never
    ///   err (α = β = 0, γ = 1); suboptimal ones add a bias ~ U(2, 20).
    /// * Broken solvers draw α, β ~ U(0.05, 0.4), γ ~ U(0.4, 0.9) and a bias
    ///   ~ U(0, 20).
    ///
    /// Tiers are shuffled so that pool position carries no information.
    pub fn reference(n_solvers: usize, n_instances: usize, n_tests: usize, optimal_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&optimal_fraction) {
            return Err(Error::InvalidInput(format!("optimal fraction {optimal_fraction} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5017e5);
        let n_opt = (optimal_fraction * n_solvers as f64).round() as usize;
        let n_sub = ((0.3 * n_solvers as f64).round() as usize).min(n_solvers - n_opt);
        let mut solvers: Vec<TrueSolver> = (0..n_solvers)
            .map(|k| {
                if k < n_opt {
                    TrueSolver::perfect(Quality::Optimal, 0.0)
                } else if k < n_opt + n_sub {
                    TrueSolver::perfect(Quality::Suboptimal, rng.random_range(2.0..20.0))
                } else {
                    TrueSolver {
                        alpha: rng.random_range(0.05..0.4),
                        beta: rng.random_range(0.05..0.4),
                        gamma: rng.random_range(0.4..0.9),
                        quality: Quality::Broken,
                        objective_bias: rng.random_range(0.0..20.0),
                    }
                }
            })
            .collect();
        solvers.shuffle(&mut rng);
        let spec = Self {
            lambda: 0.6,
            solvers,
            shapes: (2.0, 6.0, 9.0, 1.0),
            n_instances,
            n_tests,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let (a0, b0, a1, b1) = self.shapes;
        let ok = prob(self.lambda)
            && !self.solvers.is_empty()
            && self.n_instances > 0
            && self.n_tests > 0
            && [a0, b0, a1, b1].into_iter().all(|v| v > 0.0 && v.is_finite())
            && self.solvers.iter().all(|s| {
                prob(s.alpha) && prob(s.beta) && prob(s.gamma) && s.objective_bias >= 0.0 && s.objective_bias.is_finite()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("invalid ensemble settings".into()))
        }
    }
}

/// Ground-truth quality of a solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverGrade {
    pub feasible: bool,
    pub optimal: bool,
}

impl From<Quality> for SolverGrade {
    fn from(q: Quality) -> Self {
        SolverGrade {
            feasible: q != Quality::Broken,
            optimal: q == Quality::Optimal,
        }
    }
}

/// Latent labels behind a synthetic cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub feasible: Vec<bool>,
    /// Solution validity, dense `s * n_instances + i`; false where nothing was reported.
    pub valid: Vec<bool>,
    pub optimum: Vec<f64>,
    pub grades: Vec<SolverGrade>,
}

/// Samples a fully interpretable cube from the generative model of `spec`.
pub fn gen_synthetic_ensemble(spec: &TrueEnsembleSpec) -> Result<(RawResults, GroundTruth)> {
    spec.validate()?;
    let (ns, ni, nt) = (spec.solvers.len(), spec.n_instances, spec.n_tests);
    let (a0, b0, a1, b1) = spec.shapes;
    let pass0 = Beta::new(a0, b0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let pass1 = Beta::new(a1, b1).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let optimum: Vec<f64> = (0..ni).map(|_| rng.random_range(1.0..100.0)).collect();
    let feasible: Vec<bool> = (0..ni).map(|_| rng.random_bool(spec.lambda)).collect();
    let mut pairs = Vec::with_capacity(ns * ni);
    let mut triples = Vec::with_capacity(ns * ni);
    let mut valid = Vec::with_capacity(ns * ni);
    for sv in &spec.solvers {
        for i in 0..ni {
            let reports = if feasible[i] { !rng.random_bool(sv.beta) } else { rng.random_bool(sv.alpha) };
            if !reports {
                pairs.push(PairOutcome::reported(SolveReport::infeasible()));
                triples.push(None);
                valid.push(false);
                continue;
            }
            let ok = feasible[i] && rng.random_bool(sv.gamma);
            let p = if ok { pass1.sample(&mut rng) } else { pass0.sample(&mut rng) };
            let row = (0..nt).map(|_| TripleOutcome::verdict(rng.random_bool(p))).collect();
            // invalid solutions typically claim a better objective than is attainable
            let z = if ok {
                optimum[i] + sv.objective_bias
            } else {
                optimum[i] * rng.random_range(0.5..1.0)
            };
            let report = SolveReport::with_solution(SolveStatus::Optimal, z, Value::Null)?;
            pairs.push(PairOutcome::reported(report));
            triples.push(Some(row));
            valid.push(ok);
        }
    }
    let ids = PoolIds {
        solvers: (0..ns).map(|k| format!("s{k}")).collect(),
        instances: (0..ni).map(|k| format!("i{k}")).collect(),
        tests: (0..nt).map(|k| format!("t{k}")).collect(),
    };
    let results = RawResults::new(ids, pairs, triples)?;
    let truth = GroundTruth {
        feasible,
        valid,
        optimum,
        grades: spec.solvers.iter().map(|s| s.quality.into()).collect(),
    };
    Ok((results, truth))
}

/// Exact reference solver for grading.
pub trait ReferenceOracle: Sync {
    fn solve(&self, instance: &Component) -> Result<SolveReport>;
    /// True objective of `solution` on `instance`, or `None` if it violates a constraint.
    fn check(&self, instance: &Component, solution: &Value) -> Result<Option<f64>>;
}

/// Exhaustive oracle for K-robust weighted set cover.
#[derive(Debug, Clone, Copy, Default)]
pub struct WscpOracle;

impl ReferenceOracle for WscpOracle {
    fn solve(&self, instance: &Component) -> Result<SolveReport> {
        wscp::oracle_solve(&WscpInstance::decode(&instance.payload)?)
    }

    fn check(&self, instance: &Component, solution: &Value) -> Result<Option<f64>> {
        Ok(WscpInstance::decode(&instance.payload)?.evaluate_value(solution))
    }
}

fn matches(reported: f64, truth: f64) -> bool {
    (reported - truth).abs() <= OPTIMALITY_TOL * truth.abs().max(1.0)
}

/// Grades already-collected outcomes of one solver, `outcomes[k]` being its
/// result on `instances[k]`.
///
/// Feasible: every run was interpretable and every reported solution
/// satisfies the constraints. Optimal: feasible, and on every instance the
/// oracle solves the solver reports a solution whose claimed and actual
/// objectives both match the optimum.
pub fn grade_outcomes(outcomes: &[PairOutcome], instances: &[Component], oracle: &dyn ReferenceOracle) -> Result<SolverGrade> {
    if outcomes.len() != instances.len() {
        return Err(Error::InvalidInput("one outcome per instance expected".into()));
    }
    let mut feasible = true;
    let mut optimal = true;
    for (out, inst) in outcomes.iter().zip(instances) {
        let truth = oracle.solve(inst)?;
        if !out.interpretable {
            return Ok(SolverGrade { feasible: false, optimal: false });
        }
        let report = out.report.as_ref().filter(|r| r.has_solution());
        match (report, truth.objective()) {
            (Some(rep), best) => {
                let solution = rep.solution().unwrap_or(&Value::Null);
                let Some(actual) = oracle.check(inst, solution)? else {
                    feasible = false;
                    continue;
                };
                let claimed = rep.objective().unwrap_or(f64::NAN);
                optimal &= best.is_some_and(|b| matches(claimed, b) && matches(actual, b));
            }
            (None, Some(_)) => optimal = false,
            (None, None) => {}
        }
    }
    Ok(SolverGrade { feasible, optimal: feasible && optimal })
}

/// Runs `solver` on every instance through `harness` and grades the outcomes.
pub fn grade_solver(
    solver: &Component,
    instances: &[Component],
    harness: &Harness,
    oracle: &dyn ReferenceOracle,
) -> Result<SolverGrade> {
    let outcomes: Vec<PairOutcome> = instances.iter().map(|i| harness.evaluate_pair(solver, i)).collect();
    grade_outcomes(&outcomes, instances, oracle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_solvers: usize,
    pub n_instances: usize,
    pub n_tests: usize,
}

impl GridPoint {
    pub fn new(n_solvers: usize, n_instances: usize, n_tests: usize) -> Self {
        Self { n_solvers, n_instances, n_tests }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchConfig {
    pub em: EmConfig,
    pub selection: SelectionConfig,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

/// What one bootstrap repetition produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepOutcome {
    /// Pool index of the chosen solver; `None` when nothing could be selected.
    pub chosen: Option<usize>,
    pub feasible: bool,
    pub optimal: bool,
    /// The sampled solvers include an optimal one.
    pub optimum_sampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n_solvers: usize,
    pub n_instances: usize,
    pub n_tests: usize,
    pub reps: usize,
    pub feasibility_rate: f64,
    pub optimality_rate: f64,
    pub perfect_selection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<GridRow>,
    /// Per grid point, the outcome of every repetition in order.
    #[serde(skip)]
    pub outcomes: Vec<Vec<RepOutcome>>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// One resample → filter → fit → select pass. Empty filtered cubes and cubes
/// without any report count as infeasible outcomes.
pub fn run_rep(
    results: &RawResults,
    grades: &[SolverGrade],
    point: GridPoint,
    rng: &mut impl Rng,
    cfg: &BenchConfig,
) -> Result<RepOutcome> {
    let (ns, ni, nt) = results.sizes();
    let draw = |rng: &mut dyn rand::RngCore, n: usize, k: usize| (0..k).map(|_| rng.random_range(0..n)).collect::<Vec<_>>();
    let s_idx = draw(rng, ns, point.n_solvers);
    let i_idx = draw(rng, ni, point.n_instances);
    let t_idx = draw(rng, nt, point.n_tests);
    let optimum_sampled = s_idx.iter().any(|&s| grades[s].optimal);
    let fail = RepOutcome { chosen: None, feasible: false, optimal: false, optimum_sampled };

    let sub = results.resample(&s_idx, &i_idx, &t_idx);
    let filtered = match solve_filter(&collect_noninterpretable(&sub)) {
        Ok(f) => f,
        Err(Error::EmptySelection) => return Ok(fail),
        Err(e) => return Err(e),
    };
    let obs = build_observations(&sub, &filtered)?;
    let fit = fit_em(&obs, &cfg.em)?;
    let report = match select(&fit.params, &fit.posteriors, &obs, &cfg.selection) {
        Ok(r) => r,
        Err(Error::NoReports) => return Ok(fail),
        Err(e) => return Err(e),
    };
    let chosen = s_idx[filtered.solvers[report.chosen_index]];
    Ok(RepOutcome {
        chosen: Some(chosen),
        feasible: grades[chosen].feasible,
        optimal: grades[chosen].optimal,
        optimum_sampled,
    })
}

/// Repeats [`run_rep`] `reps` times at every grid point over a precomputed cube.
pub fn bootstrap_experiment(
    results: &RawResults,
    grades: &[SolverGrade],
    grid: &[GridPoint],
    reps: usize,
    seed: u64,
    cfg: &BenchConfig,
) -> Result<ExperimentResult> {
    let (ns, ni, nt) = results.sizes();
    if grades.len() != ns {
        return Err(Error::InvalidInput(format!("{} grades for {ns} solvers", grades.len())));
    }
    if ns == 0 || ni == 0 || nt == 0 {
        return Err(Error::EmptyPool("precomputed results"));
    }
    if reps == 0 || grid.iter().any(|p| p.n_solvers == 0 || p.n_instances == 0 || p.n_tests == 0) {
        return Err(Error::InvalidInput("repetitions and grid sizes must be positive".into()));
    }
    cfg.em.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut rows = Vec::with_capacity(grid.len());
    let mut outcomes = Vec::with_capacity(grid.len());
    for (g, &point) in grid.iter().enumerate() {
        let outs: Vec<RepOutcome> = pool.install(|| {
            (0..reps)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((g as u64) << 32) | k as u64);
                    run_rep(results, grades, point, &mut rng, cfg)
                })
                .collect::<Result<_>>()
        })?;
        let rate = |f: fn(&RepOutcome) -> bool| outs.iter().filter(|o| f(o)).count() as f64 / reps as f64;
        rows.push(GridRow {
            n_solvers: point.n_solvers,
            n_instances: point.n_instances,
            n_tests: point.n_tests,
            reps,
            feasibility_rate: rate(|o| o.feasible),
            optimality_rate: rate(|o| o.optimal),
            perfect_selection_rate: rate(|o| o.optimum_sampled),
        });
        outcomes.push(outs);
    }
    Ok(ExperimentResult { reps, seed, rows, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ComponentKind, FailureReason, Origin};
    use serde_json::json;

    fn spec(lambda: f64, solvers: Vec<TrueSolver>, ni: usize, seed: u64) -> TrueEnsembleSpec {
        TrueEnsembleSpec {
            lambda,
            solvers,
            shapes: (2.0, 6.0, 9.0, 1.0),
            n_instances: ni,
            n_tests: 4,
            seed,
        }
    }

    #[test]
    fn perfect_world_reports_everything() {
        let s = spec(1.0, vec![TrueSolver::perfect(Quality::Optimal, 0.0); 3], 20, 1);
        let (res, truth) = gen_synthetic_ensemble(&s).unwrap();
        assert!(res.pairs().iter().all(|p| p.has_solution()));
        assert!(truth.valid.iter().all(|&v| v));
        assert!(truth.feasible.iter().all(|&f| f));
    }

    #[test]
    fn feasible_fraction_follows_lambda() {
        let s = spec(0.5, vec![TrueSolver::perfect(Quality::Optimal, 0.0)], 10_000, 3);
        let (_, truth) = gen_synthetic_ensemble(&s).unwrap();
        let frac = truth.feasible.iter().filter(|&&f| f).count() as f64 / 1e4;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn broken_solvers_are_never_optimal() {
        let s = TrueEnsembleSpec::reference(40, 10, 4, 0.25, 9).unwrap();
        let (_, truth) = gen_synthetic_ensemble(&s).unwrap();
        for (sv, g) in s.solvers.iter().zip(&truth.grades) {
            assert_eq!(g.optimal, sv.quality == Quality::Optimal);
            assert_eq!(g.feasible, sv.quality != Quality::Broken);
        }
        assert_eq!(truth.grades.iter().filter(|g| g.optimal).count(), 10);
    }

    #[test]
    fn ensembles_are_seed_deterministic() {
        let s = TrueEnsembleSpec::reference(5, 6, 3, 0.2, 4).unwrap();
        assert_eq!(gen_synthetic_ensemble(&s).unwrap(), gen_synthetic_ensemble(&s).unwrap());
        let mut t = s.clone();
        t.seed = 5;
        assert_ne!(gen_synthetic_ensemble(&s).unwrap().0, gen_synthetic_ensemble(&t).unwrap().0);
    }

    fn wscp_component(id: &str, doc: Value) -> Component {
        Component::new(id, ComponentKind::Instance, doc.to_string(), Origin::Fixture).unwrap()
    }

    fn greedy_trap() -> Component {
        wscp_component(
            "trap",
            json!({
                "emitters": [
                    {"x": 1.5, "y": 0.0, "r": 0.6, "cost": 1.8},
                    {"x": 0.5, "y": 0.0, "r": 0.6, "cost": 2.0},
                    {"x": 2.5, "y": 0.0, "r": 0.6, "cost": 2.0}
                ],
                "clients": [{"x": 0.0, "y": 0.0}, {"x": 1.0, "y": 0.0}, {"x": 2.0, "y": 0.0}, {"x": 3.0, "y": 0.0}],
                "K": 0
            }),
        )
    }

    fn impossible() -> Component {
        wscp_component(
            "far",
            json!({"emitters": [{"x": 0.0, "y": 0.0, "r": 1.0, "cost": 1.0}], "clients": [{"x": 5.0, "y": 5.0}], "K": 0}),
        )
    }

    fn run(f: fn(&WscpInstance) -> Result<SolveReport>, insts: &[Component]) -> Vec<PairOutcome> {
        insts
            .iter()
            .map(|c| PairOutcome::reported(f(&WscpInstance::decode(&c.payload).unwrap()).unwrap()))
            .collect()
    }

    #[test]
    fn exact_solver_grades_optimal() {
        let insts = [greedy_trap(), impossible()];
        let g = grade_outcomes(&run(wscp::oracle_solve, &insts), &insts, &WscpOracle).unwrap();
        assert_eq!(g, SolverGrade { feasible: true, optimal: true });
    }

    #[test]
    fn greedy_is_feasible_but_not_optimal() {
        let insts = [greedy_trap()];
        let g = grade_outcomes(&run(wscp::greedy_solve, &insts), &insts, &WscpOracle).unwrap();
        assert_eq!(g, SolverGrade { feasible: true, optimal: false });
    }

    #[test]
    fn over_reporting_is_infeasible() {
        let insts = [impossible()];
        let rep = SolveReport::with_solution(SolveStatus::Optimal, 1.0, json!([0])).unwrap();
        let g = grade_outcomes(&[PairOutcome::reported(rep)], &insts, &WscpOracle).unwrap();
        assert_eq!(g, SolverGrade { feasible: false, optimal: false });
    }

    #[test]
    fn silence_and_crashes() {
        let insts = [greedy_trap()];
        let silent = grade_outcomes(&[PairOutcome::reported(SolveReport::infeasible())], &insts, &WscpOracle).unwrap();
        assert_eq!(silent, SolverGrade { feasible: true, optimal: false });
        let crash = grade_outcomes(&[PairOutcome::failed(FailureReason::RuntimeError)], &insts, &WscpOracle).unwrap();
        assert_eq!(crash, SolverGrade { feasible: false, optimal: false });
    }

    #[test]
    fn misreported_objective_is_not_optimal() {
        let insts = [greedy_trap()];
        let rep = SolveReport::with_solution(SolveStatus::Optimal, 3.5, json!([1, 2])).unwrap();
        let g = grade_outcomes(&[PairOutcome::reported(rep)], &insts, &WscpOracle).unwrap();
        assert_eq!(g, SolverGrade { feasible: true, optimal: false });
    }

    #[test]
    fn oracle_failure_aborts() {
        let bad = wscp_component("bad", json!({"nope": 1}));
        let out = [PairOutcome::reported(SolveReport::infeasible())];
        assert!(grade_outcomes(&out, &[bad], &WscpOracle).is_err());
    }

    fn small_bench(opt_frac: f64, reps: usize, seed: u64) -> ExperimentResult {
        let s = TrueEnsembleSpec::reference(10, 20, 6, opt_frac, 2).unwrap();
        let (res, truth) = gen_synthetic_ensemble(&s).unwrap();
        let grid = [GridPoint::new(1, 8, 4), GridPoint::new(5, 8, 4)];
        let cfg = BenchConfig { workers: Some(3), ..Default::default() };
        bootstrap_experiment(&res, &truth.grades, &grid, reps, seed, &cfg).unwrap()
    }

    #[test]
    fn all_optimal_pool_always_succeeds() {
        let r = small_bench(1.0, 20, 1);
        for row in &r.rows {
            assert_eq!((row.optimality_rate, row.perfect_selection_rate), (1.0, 1.0));
        }
    }

    #[test]
    fn bootstrap_is_deterministic_and_bounded() {
        let a = small_bench(0.3, 30, 8);
        let b = small_bench(0.3, 30, 8);
        assert_eq!(a, b);
        assert_eq!(a.outcomes, b.outcomes);
        for row in &a.rows {
            assert!(row.optimality_rate <= row.perfect_selection_rate);
            assert!(row.optimality_rate <= row.feasibility_rate);
        }
    }

    #[test]
    fn csv_layout() {
        let r = small_bench(0.5, 4, 3);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n_solvers,n_instances,n_tests,reps,feasibility_rate,optimality_rate,perfect_selection_rate"
        );
        assert_eq!(lines.count(), 2);
    }
}
