//! K-robust weighted set cover: the problem domain of the fixture corpus.
//!
//! Every client must lie within range of at least `K + 1` selected emitters.
//! A solution is the list of selected emitter indices; its objective is the
//! sum of their costs.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::SolveReport;
use crate::gensource::ProblemSpec;
use crate::select::Sense;
use crate::{Error, Result, SolveStatus};

/// Slack on the coverage predicate so that solvers and the oracle agree on
/// clients sitting exactly on a range boundary.
pub const COVER_SLACK: f64 = 1e-9;

/// Largest instance the exhaustive oracle accepts.
pub const ORACLE_MAX_EMITTERS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WscpInstance {
    pub emitters: Vec<Emitter>,
    pub clients: Vec<Client>,
    #[serde(rename = "K")]
    pub k: u32,
}

impl WscpInstance {
    /// Decodes and validates an instance document.
    pub fn decode(payload: &[u8]) -> Result<Self> {
        let inst: WscpInstance = serde_json::from_slice(payload)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        for (j, e) in self.emitters.iter().enumerate() {
            let finite = [e.x, e.y, e.r, e.cost].iter().all(|v| v.is_finite());
            if !finite || e.r <= 0.0 || e.cost <= 0.0 {
                return Err(Error::InvalidInput(format!("emitter {j} has a non-positive radius or cost")));
            }
        }
        if self.clients.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(Error::InvalidInput("client coordinates must be finite".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("instance serialization is infallible")
    }

    pub fn covers(&self, emitter: usize, client: usize) -> bool {
        let e = &self.emitters[emitter];
        let c = &self.clients[client];
        (e.x - c.x).hypot(e.y - c.y) <= e.r + COVER_SLACK
    }

    /// Per-client bitmask of covering emitters (instances up to 64 emitters).
    fn cover_masks(&self) -> Vec<u64> {
        (0..self.clients.len())
            .map(|c| {
                (0..self.emitters.len())
                    .filter(|&e| self.covers(e, c))
                    .fold(0u64, |m, e| m | (1 << e))
            })
            .collect()
    }

    /// Objective of a selection if it is feasible, `None` otherwise.
    pub fn evaluate(&self, selected: &[usize]) -> Option<f64> {
        let mut seen = vec![false; self.emitters.len()];
        for &e in selected {
            if e >= self.emitters.len() || seen[e] {
                return None;
            }
            seen[e] = true;
        }
        let need = self.k as usize + 1;
        for c in 0..self.clients.len() {
            if selected.iter().filter(|&&e| self.covers(e, c)).count() < need {
                return None;
            }
        }
        Some(selected.iter().map(|&e| self.emitters[e].cost).sum())
    }

    /// Decodes a solution value (array of emitter indices) and evaluates it.
    pub fn evaluate_value(&self, solution: &Value) -> Option<f64> {
        let arr = solution.as_array()?;
        let idx: Option<Vec<usize>> = arr.iter().map(|v| v.as_u64().map(|u| u as usize)).collect();
        self.evaluate(&idx?)
    }
}

/// Problem statement used for prompts when no other is configured.
pub fn problem_spec() -> ProblemSpec {
    ProblemSpec {
        description: "K-robust weighted set cover. Emitters sit at points of the plane, each with a \
                      coverage radius and a positive cost. Select a subset of emitters of minimum total \
                      cost such that every client lies within Euclidean distance `r` of at least K + 1 \
                      selected emitters, so that coverage survives any K emitter failures."
            .into(),
        input_format: r#"{"emitters": [{"x": float, "y": float, "r": float, "cost": float}], "clients": [{"x": float, "y": float}], "K": int}"#.into(),
        output_format: "A list of selected emitter indices (0-based); the objective is their total cost.".into(),
        sense: Sense::Minimize,
    }
}

/// Exact minimum-cost K-robust cover by exhaustive subset enumeration.
pub fn oracle_solve(inst: &WscpInstance) -> Result<SolveReport> {
    let m = inst.emitters.len();
    if m > ORACLE_MAX_EMITTERS {
        return Err(Error::Oracle(format!("{m} emitters exceed the oracle cap of {ORACLE_MAX_EMITTERS}")));
    }
    let masks = inst.cover_masks();
    let need = inst.k + 1;
    let mut best: Option<(f64, u64)> = None;
    for sel in 0u64..(1u64 << m) {
        if masks.iter().any(|&cm| (cm & sel).count_ones() < need) {
            continue;
        }
        let cost: f64 = (0..m).filter(|e| sel >> e & 1 == 1).map(|e| inst.emitters[e].cost).sum();
        if best.is_none_or(|(b, _)| cost < b) {
            best = Some((cost, sel));
        }
    }
    Ok(match best {
        None => SolveReport::infeasible(),
        Some((cost, sel)) => {
            let chosen: Vec<usize> = (0..m).filter(|e| sel >> e & 1 == 1).collect();
            SolveReport::with_solution(SolveStatus::Optimal, cost, json!(chosen))?
        }
    })
}

/// Cost-effectiveness greedy: repeatedly select the emitter with the lowest
/// cost per unit of still-missing coverage. Not exact.
pub fn greedy_solve(inst: &WscpInstance) -> Result<SolveReport> {
    let m = inst.emitters.len();
    let need = inst.k as usize + 1;
    let mut missing: Vec<usize> = vec![need; inst.clients.len()];
    let mut chosen = Vec::new();
    let mut used = vec![false; m];
    while missing.iter().any(|&d| d > 0) {
        let mut pick: Option<(f64, usize)> = None;
        for e in (0..m).filter(|&e| !used[e]) {
            let gain = (0..inst.clients.len())
                .filter(|&c| missing[c] > 0 && inst.covers(e, c))
                .count();
            if gain == 0 {
                continue;
            }
            let ratio = inst.emitters[e].cost / gain as f64;
            if pick.is_none_or(|(r, _)| ratio < r) {
                pick = Some((ratio, e));
            }
        }
        let Some((_, e)) = pick else {
            return Ok(SolveReport::infeasible());
        };
        used[e] = true;
        chosen.push(e);
        for (c, d) in missing.iter_mut().enumerate() {
            if *d > 0 && inst.covers(e, c) {
                *d -= 1;
            }
        }
    }
    chosen.sort_unstable();
    let cost = chosen.iter().map(|&e| inst.emitters[e].cost).sum();
    SolveReport::with_solution(SolveStatus::Optimal, cost, json!(chosen))
}
