//! Solver scoring, Pareto front and final choice.

use serde::{Deserialize, Serialize};

use crate::domain::{ModelParams, ObservationSet, Posteriors, SelectionReport, SolverMetrics};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A penalty value, or `Auto` for ten times the largest absolute reported objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    Auto,
    Value(f64),
}

impl Penalty {
    pub fn resolve(self, z_max: f64) -> f64 {
        match self {
            Penalty::Auto => 10.0 * z_max,
            Penalty::Value(v) => v,
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Penalty::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Penalty::Value(v)),
            _ => Err(Error::InvalidInput(format!("penalty must be `auto` or a finite number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub p_miss: Penalty,
    pub p_fail: Penalty,
    pub sense: Sense,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            p_miss: Penalty::Auto,
            p_fail: Penalty::Auto,
            sense: Sense::Minimize,
        }
    }
}

/// Posterior-weighted expected objective per solver over its valid reports,
/// and the largest absolute reported objective. Solvers with no posterior
/// weight get `Z_max`.
pub fn estimate_z(post: &Posteriors, obs: &ObservationSet) -> Result<(Vec<f64>, f64)> {
    let (ns, ni) = (obs.n_solvers(), obs.n_instances());
    let z_max = obs
        .r
        .iter()
        .zip(&obs.z)
        .filter(|(r, _)| **r)
        .map(|(_, z)| z.abs())
        .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))))
        .ok_or(Error::NoReports)?;
    let z = (0..ns)
        .map(|s| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..ni {
                let k = obs.idx(s, i);
                if obs.r[k] {
                    let wt = post.q[i] * post.w[k];
                    num += wt * obs.z[k];
                    den += wt;
                }
            }
            if den > 0.0 {
                num / den
            } else {
                z_max
            }
        })
        .collect();
    Ok((z, z_max))
}

/// Expected penalized objective of solver `s`.
pub fn scalarized_score(theta: &ModelParams, s: usize, z_s: f64, p_miss: f64, p_fail: f64) -> f64 {
    let (l, a, b, g) = (theta.lambda, theta.alpha[s], theta.beta[s], theta.gamma[s]);
    l * (1.0 - b) * g * z_s + l * b * p_miss + ((1.0 - l) * a + l * (1.0 - b) * (1.0 - g)) * p_fail
}

/// Non-dominated points, all coordinates minimized.
pub fn pareto_front(points: &[[f64; 4]]) -> Vec<bool> {
    let dominates = |p: &[f64; 4], q: &[f64; 4]| {
        p.iter().zip(q).all(|(a, b)| a <= b) && p.iter().zip(q).any(|(a, b)| a < b)
    };
    points
        .iter()
        .map(|q| !points.iter().any(|p| dominates(p, q)))
        .collect()
}

/// Scores every solver and picks the minimizer of the scalarized objective;
/// ties go to the lower `α + β`, then to the lower index.
pub fn select(theta: &ModelParams, post: &Posteriors, obs: &ObservationSet, cfg: &SelectionConfig) -> Result<SelectionReport> {
    let negated;
    let obs = match cfg.sense {
        Sense::Minimize => obs,
        Sense::Maximize => {
            negated = obs.negated();
            &negated
        }
    };
    let (z, z_max) = estimate_z(post, obs)?;
    let p_miss = cfg.p_miss.resolve(z_max);
    let p_fail = cfg.p_fail.resolve(z_max);
    let ns = obs.n_solvers();
    let g: Vec<f64> = (0..ns).map(|s| scalarized_score(theta, s, z[s], p_miss, p_fail)).collect();
    let points: Vec<[f64; 4]> = (0..ns)
        .map(|s| [theta.alpha[s], theta.beta[s], 1.0 - theta.gamma[s], z[s]])
        .collect();
    let front = pareto_front(&points);

    let chosen = (0..ns)
        .min_by(|&a, &b| {
            g[a].total_cmp(&g[b])
                .then((theta.alpha[a] + theta.beta[a]).total_cmp(&(theta.alpha[b] + theta.beta[b])))
                .then(a.cmp(&b))
        })
        .ok_or(Error::EmptyPool("solvers"))?;

    Ok(SelectionReport {
        solvers: (0..ns)
            .map(|s| SolverMetrics {
                id: obs.solvers[s].clone(),
                alpha: theta.alpha[s],
                beta: theta.beta[s],
                gamma: theta.gamma[s],
                z: z[s],
                g: g[s],
                pareto: front[s],
            })
            .collect(),
        z_max,
        p_miss,
        p_fail,
        chosen: obs.solvers[chosen].clone(),
        chosen_index: chosen,
    })
}
