//! Latent-class characterization of solvers and tests by EM.
//!
//! Each instance is feasible with probability λ. A solver reports a solution
//! on an infeasible instance with probability α, fails to report on a
//! feasible one with probability β, and a solution it reports on a feasible
//! instance is valid with probability γ. Solutions on infeasible instances
//! are never valid. The number of passed tests `C` given validity follows a
//! Beta-Binomial with shapes `(a1, b1)` for valid and `(a0, b0)` for invalid
//! solutions, with a `Beta(prior_a, prior_b)` prior on `a1 / (a1 + b1)` that
//! pins the "valid" class to the one tests mostly accept.

mod shapes;

use serde::{Deserialize, Serialize};

pub use shapes::{log_beta_binomial, log_beta_density, log_mean_prior, ShapeObjective, SHAPE_MAX, SHAPE_MIN};

use crate::domain::{ModelParams, ObservationSet, Posteriors, RawResults};
use crate::filter::FilterSolution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub lambda0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
    /// `(a0, b0, a1, b1)`
    pub shapes0: (f64, f64, f64, f64),
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            lambda0: 0.5,
            alpha0: 0.1,
            beta0: 0.1,
            gamma0: 0.8,
            shapes0: (1.0, 3.0, 8.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative change of the log-posterior below which the fit has converged.
    pub tol: f64,
    pub clamp_eps: f64,
    pub prior_a: f64,
    pub prior_b: f64,
    /// Weak `Beta(a, b)` prior on the invalid-class pass rate `a0 / (a0 + b0)`.
    /// Keeps that class from collapsing onto "every test passes" when it
    /// carries almost no posterior weight.
    pub invalid_prior: Option<(f64, f64)>,
    pub init: InitSpec,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-8,
            clamp_eps: 1e-6,
            prior_a: 20.0,
            prior_b: 2.0,
            invalid_prior: Some((1.0, 2.0)),
            init: InitSpec::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let i = &self.init;
        let prob = |p: f64| p > 0.0 && p < 1.0;
        let ok = self.max_iters >= 1
            && self.tol > 0.0
            && self.clamp_eps > 0.0
            && self.clamp_eps < 0.5
            && self.prior_a > self.prior_b
            && self.prior_b > 0.0
            && self.invalid_prior.is_none_or(|(a, b)| a > 0.0 && b > 0.0)
            && [i.lambda0, i.alpha0, i.beta0, i.gamma0].into_iter().all(prob)
            && [i.shapes0.0, i.shapes0.1, i.shapes0.2, i.shapes0.3].into_iter().all(|s| s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid EM configuration: {self:?}")))
        }
    }

    /// θ₀ for `n_solvers` solvers.
    pub fn initial_params(&self, n_solvers: usize) -> ModelParams {
        let i = &self.init;
        ModelParams {
            lambda: i.lambda0,
            alpha: vec![i.alpha0; n_solvers],
            beta: vec![i.beta0; n_solvers],
            gamma: vec![i.gamma0; n_solvers],
            a0: i.shapes0.0,
            b0: i.shapes0.1,
            a1: i.shapes0.2,
            b1: i.shapes0.3,
            prior_a: self.prior_a,
            prior_b: self.prior_b,
            invalid_prior: self.invalid_prior,
        }
    }
}

/// Restricts the raw cube to the retained components.
pub fn build_observations(results: &RawResults, filtered: &FilterSolution) -> Result<ObservationSet> {
    if filtered.solvers.is_empty() || filtered.instances.is_empty() || filtered.tests.is_empty() {
        return Err(Error::EmptySelection);
    }
    let ids = &results.ids;
    let (ns, ni) = (filtered.solvers.len(), filtered.instances.len());
    let mut obs = ObservationSet {
        solvers: filtered.solvers.iter().map(|&s| ids.solvers[s].clone()).collect(),
        instances: filtered.instances.iter().map(|&i| ids.instances[i].clone()).collect(),
        tests: filtered.tests.iter().map(|&t| ids.tests[t].clone()).collect(),
        r: vec![false; ns * ni],
        c: vec![0; ns * ni],
        z: vec![0.0; ns * ni],
    };
    for (a, &s) in filtered.solvers.iter().enumerate() {
        for (b, &i) in filtered.instances.iter().enumerate() {
            let pair = results.pair(s, i);
            if !pair.interpretable {
                return Err(Error::Inconsistent(format!(
                    "retained pair ({}, {}) is not interpretable",
                    ids.solvers[s], ids.instances[i]
                )));
            }
            if !pair.r {
                continue;
            }
            let row = results
                .executed_triples(s, i)
                .ok_or_else(|| Error::Inconsistent("reported pair has no test outcomes".into()))?;
            let mut passed = 0;
            for &t in &filtered.tests {
                match row[t].pass {
                    Some(p) if row[t].interpretable => passed += p as u32,
                    _ => {
                        return Err(Error::Inconsistent(format!(
                            "retained triple ({}, {}, {}) is not interpretable",
                            ids.solvers[s], ids.instances[i], ids.tests[t]
                        )))
                    }
                }
            }
            let k = a * ni + b;
            obs.r[k] = true;
            obs.c[k] = passed;
            obs.z[k] = pair
                .z
                .ok_or_else(|| Error::Inconsistent("reported pair has no objective".into()))?;
        }
    }
    Ok(obs)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Posterior of the latent classes under `theta`, and the log-posterior of `theta`.
pub fn e_step(theta: &ModelParams, obs: &ObservationSet) -> Posteriors {
    let (ns, ni, nt) = (obs.n_solvers(), obs.n_instances(), obs.n_tests());
    let bb1 = shapes::log_pmf_table(nt, theta.a1, theta.b1);
    let bb0 = shapes::log_pmf_table(nt, theta.a0, theta.b0);
    let ln = |p: f64| p.ln();
    // per-solver logs, hoisted out of the instance loop
    let lg: Vec<[f64; 6]> = (0..ns)
        .map(|s| {
            [
                ln(theta.alpha[s]),
                ln(1.0 - theta.alpha[s]),
                ln(theta.beta[s]),
                ln(1.0 - theta.beta[s]),
                ln(theta.gamma[s]),
                ln(1.0 - theta.gamma[s]),
            ]
        })
        .collect();

    let mut q = vec![0.0; ni];
    let mut w = vec![0.0; ns * ni];
    let mut loglik = 0.0;
    for i in 0..ni {
        let (mut l1, mut l0) = (0.0, 0.0);
        for s in 0..ns {
            let k = obs.idx(s, i);
            let [la, l1a, lb, l1b, lgm, l1g] = lg[s];
            if obs.r[k] {
                let c = obs.c[k] as usize;
                let valid = lgm + bb1[c];
                let invalid = l1g + bb0[c];
                let mix = log_sum_exp(valid, invalid);
                w[k] = (valid - mix).exp();
                l1 += l1b + mix;
                l0 += la + bb0[c];
            } else {
                l1 += lb;
                l0 += l1a;
            }
        }
        let feas = theta.lambda.ln() + l1;
        let infeas = (1.0 - theta.lambda).ln() + l0;
        let norm = log_sum_exp(feas, infeas);
        q[i] = (feas - norm).exp().clamp(0.0, 1.0);
        loglik += norm;
    }
    loglik += log_mean_prior(theta.a1, theta.b1, theta.prior_a, theta.prior_b);
    if let Some((pa, pb)) = theta.invalid_prior {
        loglik += log_mean_prior(theta.a0, theta.b0, pa, pb);
    }
    Posteriors { q, w, loglik }
}

/// Maximizes the expected complete-data log-posterior given the posteriors.
/// Ratios with a zero denominator keep their value from `prev`.
pub fn m_step(post: &Posteriors, obs: &ObservationSet, prev: &ModelParams, cfg: &EmConfig) -> ModelParams {
    let (ns, ni, nt) = (obs.n_solvers(), obs.n_instances(), obs.n_tests());
    let eps = cfg.clamp_eps;
    let clamp = |p: f64| p.clamp(eps, 1.0 - eps);
    let ratio = |num: f64, den: f64, old: f64| if den > 0.0 { clamp(num / den) } else { old };

    let mut theta = prev.clone();
    theta.prior_a = cfg.prior_a;
    theta.prior_b = cfg.prior_b;
    theta.invalid_prior = cfg.invalid_prior;
    theta.lambda = clamp(post.q.iter().sum::<f64>() / ni as f64);

    let mut w1 = vec![0.0; nt as usize + 1];
    let mut w0 = vec![0.0; nt as usize + 1];
    for s in 0..ns {
        let (mut infeas, mut infeas_rep) = (0.0, 0.0);
        let (mut feas, mut feas_miss) = (0.0, 0.0);
        let (mut feas_rep, mut feas_valid) = (0.0, 0.0);
        for i in 0..ni {
            let k = obs.idx(s, i);
            let q = post.q[i];
            infeas += 1.0 - q;
            feas += q;
            if obs.r[k] {
                let wk = post.w[k];
                infeas_rep += 1.0 - q;
                feas_rep += q;
                feas_valid += q * wk;
                let c = obs.c[k] as usize;
                w1[c] += q * wk;
                w0[c] += (1.0 - q) + q * (1.0 - wk);
            } else {
                feas_miss += q;
            }
        }
        theta.alpha[s] = ratio(infeas_rep, infeas, prev.alpha[s]);
        theta.beta[s] = ratio(feas_miss, feas, prev.beta[s]);
        if nt > 0 {
            theta.gamma[s] = ratio(feas_valid, feas_rep, prev.gamma[s]);
        }
    }

    if nt > 0 {
        let fit = |weights: Vec<f64>, prior, old: (f64, f64)| {
            let obj = ShapeObjective { n: nt, weights, prior };
            if obj.total_weight() > 0.0 {
                obj.maximize(old)
            } else {
                old
            }
        };
        (theta.a1, theta.b1) = fit(w1, Some((cfg.prior_a, cfg.prior_b)), (prev.a1, prev.b1));
        (theta.a0, theta.b0) = fit(w0, cfg.invalid_prior, (prev.a0, prev.b0));
    }
    theta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    /// Number of parameter updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub final_loglik: f64,
    /// Log-posterior of θ₀, θ₁, ... (length `iterations + 1`).
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub params: ModelParams,
    pub posteriors: Posteriors,
    pub diagnostics: EmDiagnostics,
}

/// Alternates E- and M-steps from `cfg.init` until the relative change of
/// the log-posterior drops below `cfg.tol` or `cfg.max_iters` updates ran.
pub fn fit_em(obs: &ObservationSet, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if obs.n_solvers() == 0 || obs.n_instances() == 0 {
        return Err(Error::EmptyPool("observations"));
    }
    let mut theta = cfg.initial_params(obs.n_solvers());
    let mut post = e_step(&theta, obs);
    let mut trace = vec![post.loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = m_step(&post, obs, &theta, cfg);
        let next_post = e_step(&next, obs);
        iterations += 1;
        let change = (next_post.loglik - post.loglik).abs() / post.loglik.abs().max(1.0);
        trace.push(next_post.loglik);
        theta = next;
        post = next_post;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        params: theta,
        diagnostics: EmDiagnostics {
            iterations,
            converged,
            final_loglik: post.loglik,
            loglik_trace: trace,
        },
        posteriors: post,
    })
}
