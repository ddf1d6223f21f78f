//! Beta-Binomial log-mass and weighted maximum-likelihood fitting of its
//! shape parameters.

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Shape parameters are kept inside this box.
pub const SHAPE_MIN: f64 = 1e-3;
pub const SHAPE_MAX: f64 = 1e5;

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn ln_choose(n: u32, c: u32) -> f64 {
    let c = c.min(n - c);
    (0..c).map(|j| ((n - j) as f64 / (j + 1) as f64).ln()).sum()
}

/// `out[k] = ln(x (x+1) ... (x+k-1))` for `k = 0..=n`.
///
/// Counts are small integers, so Beta-function ratios reduce to rising
/// factorials. Summing their logs avoids subtracting log-gammas of order
/// `1e6` when shapes sit near [`SHAPE_MAX`].
fn ln_rising(x: f64, n: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..n {
        acc += (x + j as f64).ln();
        out.push(acc);
    }
    out
}

fn check_shapes(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!("beta-binomial shapes must be positive, got ({a}, {b})")));
    }
    Ok(())
}

/// `ln P(C = c)` for `C ~ BetaBinomial(n, a, b)`.
pub fn log_beta_binomial(c: u32, n: u32, a: f64, b: f64) -> Result<f64> {
    check_shapes(a, b)?;
    if c > n {
        return Err(Error::InvalidInput(format!("count {c} exceeds trials {n}")));
    }
    let (ra, rb, rab) = (ln_rising(a, c), ln_rising(b, n - c), ln_rising(a + b, n));
    Ok(ln_choose(n, c) + ra[c as usize] + rb[(n - c) as usize] - rab[n as usize])
}

/// Table of `ln P(C = c)` for `c = 0..=n`. Shapes must be valid.
pub(crate) fn log_pmf_table(n: u32, a: f64, b: f64) -> Vec<f64> {
    let (ra, rb, rab) = (ln_rising(a, n), ln_rising(b, n), ln_rising(a + b, n));
    let n_us = n as usize;
    (0..=n)
        .map(|c| ln_choose(n, c) + ra[c as usize] + rb[n_us - c as usize] - rab[n_us])
        .collect()
}

/// Log density of `Beta(pa, pb)` at `mu`.
pub fn log_beta_density(mu: f64, pa: f64, pb: f64) -> f64 {
    (pa - 1.0) * mu.ln() + (pb - 1.0) * (1.0 - mu).ln() - ln_beta(pa, pb)
}

/// Log density of `Beta(pa, pb)` at `a / (a + b)`, without forming `1 - mu`.
pub fn log_mean_prior(a: f64, b: f64, pa: f64, pb: f64) -> f64 {
    let s = a + b;
    (pa - 1.0) * (a / s).ln() + (pb - 1.0) * (b / s).ln() - ln_beta(pa, pb)
}

/// Weighted Beta-Binomial objective over counts `0..=n`, with an optional
/// Beta prior on the mean `a / (a + b)`.
#[derive(Debug, Clone)]
pub struct ShapeObjective {
    pub n: u32,
    /// `weights[c]` is the total weight of observations with count `c`.
    pub weights: Vec<f64>,
    pub prior: Option<(f64, f64)>,
}

impl ShapeObjective {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Objective value, dropping the shape-independent binomial coefficients.
    pub fn value(&self, a: f64, b: f64) -> f64 {
        let n = self.n as usize;
        let (ra, rb, rab) = (ln_rising(a, self.n), ln_rising(b, self.n), ln_rising(a + b, self.n));
        let mut v = 0.0;
        for (c, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                v += w * (ra[c] + rb[n - c] - rab[n]);
            }
        }
        if let Some((pa, pb)) = self.prior {
            v += log_mean_prior(a, b, pa, pb);
        }
        v
    }

    /// Gradient with respect to `(ln a, ln b)`.
    fn grad_log(&self, a: f64, b: f64) -> [f64; 2] {
        let n = self.n as usize;
        // partial sums of 1 / (x + j)
        let recip = |x: f64| {
            let mut out = vec![0.0; n + 1];
            for j in 0..n {
                out[j + 1] = out[j] + 1.0 / (x + j as f64);
            }
            out
        };
        let (da, db, dab) = (recip(a), recip(b), recip(a + b));
        let (mut ga, mut gb) = (0.0, 0.0);
        for (c, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                ga += w * (da[c] - dab[n]);
                gb += w * (db[n - c] - dab[n]);
            }
        }
        if let Some((pa, pb)) = self.prior {
            // d/da and d/db of (pa-1) ln a + (pb-1) ln b - (pa+pb-2) ln(a+b)
            let s = a + b;
            ga += (pa - 1.0) / a - (pa + pb - 2.0) / s;
            gb += (pb - 1.0) / b - (pa + pb - 2.0) / s;
        }
        [ga * a, gb * b]
    }

    /// Method-of-moments starting point.
    pub fn moments_start(&self) -> (f64, f64) {
        let total = self.total_weight();
        let n = self.n as f64;
        if total <= 0.0 || self.n == 0 {
            return (1.0, 1.0);
        }
        let mean: f64 = self.weights.iter().enumerate().map(|(c, w)| w * c as f64).sum::<f64>() / total;
        let var: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(c, w)| w * (c as f64 - mean).powi(2))
            .sum::<f64>()
            / total;
        let p = (mean / n).clamp(1e-3, 1.0 - 1e-3);
        let rho = if self.n > 1 {
            ((var / (n * p * (1.0 - p)) - 1.0) / (n - 1.0)).clamp(1e-4, 1.0 - 1e-4)
        } else {
            1.0 / 3.0
        };
        let s = 1.0 / rho - 1.0;
        clamp_shapes(p * s, (1.0 - p) * s)
    }

    /// Maximizes the objective. Never returns a point worse than `prev`.
    pub fn maximize(&self, prev: (f64, f64)) -> (f64, f64) {
        let prev = clamp_shapes(prev.0, prev.1);
        let prev_val = self.value(prev.0, prev.1);
        let mut best = (prev, prev_val);
        let mut converged = false;
        for start in [prev, self.moments_start()] {
            let (pt, ok) = self.quasi_newton(start);
            converged |= ok;
            let v = self.value(pt.0, pt.1);
            if v > best.1 {
                best = (pt, v);
            }
        }
        if !converged {
            let (pt, v) = self.grid_search();
            if v > best.1 {
                best = (pt, v);
            }
        }
        best.0
    }

    /// Projected BFGS ascent in log coordinates with backtracking.
    fn quasi_newton(&self, start: (f64, f64)) -> ((f64, f64), bool) {
        let (lo, hi) = (SHAPE_MIN.ln(), SHAPE_MAX.ln());
        let proj = |x: [f64; 2]| [x[0].clamp(lo, hi), x[1].clamp(lo, hi)];
        let f = |x: [f64; 2]| self.value(x[0].exp(), x[1].exp());
        let g = |x: [f64; 2]| self.grad_log(x[0].exp(), x[1].exp());

        let mut x = proj([start.0.ln(), start.1.ln()]);
        let mut fx = f(x);
        let mut gx = g(x);
        // inverse Hessian approximation of the negated objective
        let mut h = [[1.0, 0.0], [0.0, 1.0]];
        let scale = 1.0 + self.total_weight();
        for _ in 0..200 {
            let gnorm = gx[0].hypot(gx[1]);
            if gnorm <= 1e-9 * scale {
                return ((x[0].exp(), x[1].exp()), true);
            }
            let mut d = [h[0][0] * gx[0] + h[0][1] * gx[1], h[1][0] * gx[0] + h[1][1] * gx[1]];
            if d[0] * gx[0] + d[1] * gx[1] <= 0.0 {
                h = [[1.0, 0.0], [0.0, 1.0]];
                d = gx;
            }
            let dn = d[0].hypot(d[1]);
            if dn > 5.0 {
                d = [d[0] * 5.0 / dn, d[1] * 5.0 / dn];
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let xn = proj([x[0] + t * d[0], x[1] + t * d[1]]);
                let fxn = f(xn);
                let moved = [xn[0] - x[0], xn[1] - x[1]];
                let decrease = 1e-4 * (moved[0] * gx[0] + moved[1] * gx[1]);
                if fxn.is_finite() && fxn >= fx + decrease.max(0.0) {
                    accepted = Some((xn, fxn));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fxn)) = accepted else {
                // no ascent direction left inside the box
                let at_bound = x.iter().any(|&v| v <= lo + 1e-12 || v >= hi - 1e-12);
                return ((x[0].exp(), x[1].exp()), at_bound);
            };
            let gn = g(xn);
            let s = [xn[0] - x[0], xn[1] - x[1]];
            // BFGS on the negated objective: y = -(gn - gx)
            let y = [gx[0] - gn[0], gx[1] - gn[1]];
            let sy = s[0] * y[0] + s[1] * y[1];
            if sy > 1e-12 {
                let rho = 1.0 / sy;
                let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
                let yhy = y[0] * hy[0] + y[1] * hy[1];
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
            let small_step = s[0].hypot(s[1]) < 1e-12;
            let small_gain = (fxn - fx).abs() <= 1e-14 * fx.abs().max(1.0);
            x = xn;
            fx = fxn;
            gx = gn;
            if small_step || small_gain {
                let at_bound = x.iter().any(|&v| v <= lo + 1e-9 || v >= hi - 1e-9);
                let flat = gx[0].hypot(gx[1]) <= 1e-5 * scale;
                return ((x[0].exp(), x[1].exp()), at_bound || flat);
            }
        }
        ((x[0].exp(), x[1].exp()), false)
    }

    /// Coarse log-spaced grid over the box, followed by one refinement pass.
    pub fn grid_search(&self) -> ((f64, f64), f64) {
        let (lo, hi) = (SHAPE_MIN.ln(), SHAPE_MAX.ln());
        let mut best = ((1.0, 1.0), f64::NEG_INFINITY);
        let mut center = None;
        for (steps, span) in [(41usize, hi - lo), (41, (hi - lo) / 10.0)] {
            let (ca, cb) = center.unwrap_or(((lo + hi) / 2.0, (lo + hi) / 2.0));
            for i in 0..steps {
                for j in 0..steps {
                    let u = (ca - span / 2.0 + span * i as f64 / (steps - 1) as f64).clamp(lo, hi);
                    let v = (cb - span / 2.0 + span * j as f64 / (steps - 1) as f64).clamp(lo, hi);
                    let val = self.value(u.exp(), v.exp());
                    if val > best.1 {
                        best = ((u.exp(), v.exp()), val);
                    }
                }
            }
            center = Some((best.0 .0.ln(), best.0 .1.ln()));
        }
        best
    }
}

pub(crate) fn clamp_shapes(a: f64, b: f64) -> (f64, f64) {
    (a.clamp(SHAPE_MIN, SHAPE_MAX), b.clamp(SHAPE_MIN, SHAPE_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_trial_has_unit_mass() {
        assert_eq!(log_beta_binomial(0, 0, 2.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn uniform_shapes_give_uniform_mass() {
        for n in [1u32, 4, 17] {
            for c in 0..=n {
                assert_relative_eq!(
                    log_beta_binomial(c, n, 1.0, 1.0).unwrap(),
                    (1.0 / (n as f64 + 1.0)).ln(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn closed_form_value() {
        // 3 * B(4,2) / B(2,1) = 3 * (1/20) / (1/2) = 0.3
        assert_relative_eq!(log_beta_binomial(2, 3, 2.0, 1.0).unwrap(), 0.3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(log_beta_binomial(0, 1, 0.0, 1.0).is_err());
        assert!(log_beta_binomial(0, 1, 1.0, -2.0).is_err());
        assert!(log_beta_binomial(2, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn mass_sums_to_one() {
        let total: f64 = log_pmf_table(12, 0.7, 3.2).iter().map(|l| l.exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let obj = ShapeObjective {
            n: 5,
            weights: vec![0.3, 0.0, 1.2, 0.5, 2.0, 4.0],
            prior: Some((20.0, 2.0)),
        };
        let (a, b) = (2.3, 0.8);
        let g = obj.grad_log(a, b);
        let h = 1e-6;
        let fu = |u: f64, v: f64| obj.value(u.exp(), v.exp());
        let (u, v) = (a.ln(), b.ln());
        let du = (fu(u + h, v) - fu(u - h, v)) / (2.0 * h);
        let dv = (fu(u, v + h) - fu(u, v - h)) / (2.0 * h);
        assert_relative_eq!(g[0], du, epsilon = 1e-6);
        assert_relative_eq!(g[1], dv, epsilon = 1e-6);
    }

    #[test]
    fn weighted_fit_favours_high_pass_rate() {
        // C=5 of 5 with weight .9, C=1 of 5 with weight .1, plus the default prior
        let obj = ShapeObjective {
            n: 5,
            weights: vec![0.0, 0.1, 0.0, 0.0, 0.0, 0.9],
            prior: Some((20.0, 2.0)),
        };
        let (a, b) = obj.maximize((1.0, 1.0));
        assert!(a / (a + b) > 0.8, "mean {}", a / (a + b));
        // independent check: the optimizer is at least as good as a fine grid
        let ((ga, gb), gv) = obj.grid_search();
        assert!(obj.value(a, b) >= gv - 1e-6, "grid found ({ga}, {gb}) with {gv}");
    }

    #[test]
    fn maximize_never_worse_than_previous() {
        let obj = ShapeObjective {
            n: 8,
            weights: vec![1.0, 2.0, 0.5, 0.0, 0.0, 0.1, 0.0, 3.0, 4.0],
            prior: None,
        };
        for prev in [(0.01, 0.01), (50.0, 2.0), (1.0, 1.0), (3.0, 90.0)] {
            let (a, b) = obj.maximize(prev);
            assert!(obj.value(a, b) >= obj.value(prev.0, prev.1) - 1e-12);
        }
    }
}
