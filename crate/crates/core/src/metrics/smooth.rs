//! Softplus-smoothed auxiliary function used inside the optimizer.
//!
//! `F_τ(α) = α + Σ_s softplus_τ(sign·f_s - α) / t` with `t = (1-β)m`.
//! Softplus overestimates ReLU by at most `τ·ln 2` per term, so `F_τ ≥ F`
//! pointwise and both are convex in `α`.

use super::{RiskConvention, RiskSpec};

/// Beyond this many `τ` the softplus equals its asymptote to f64 precision.
const SATURATION: f64 = 40.0;

pub fn softplus(z: f64, tau: f64) -> f64 {
    let u = z / tau;
    if u > SATURATION {
        z
    } else if u < -SATURATION {
        0.0
    } else {
        z.max(0.0) + tau * (-u.abs()).exp().ln_1p()
    }
}

/// Derivative of [`softplus`] in `z`.
pub fn sigmoid(z: f64, tau: f64) -> f64 {
    let u = z / tau;
    if u > SATURATION {
        1.0
    } else if u < -SATURATION {
        0.0
    } else if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Value and derivatives of the smoothed auxiliary function at one `α`.
#[derive(Debug, Clone)]
pub struct SmoothedTail {
    pub alpha: f64,
    pub value: f64,
    /// `∂F_τ/∂α`.
    pub d_alpha: f64,
    /// `∂F_τ/∂f_s` for each scenario.
    pub d_roi: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TailSmoother {
    pub beta: f64,
    pub convention: RiskConvention,
    pub tau: f64,
}

impl TailSmoother {
    pub fn new(spec: &RiskSpec, tau: f64) -> Self {
        Self { beta: spec.beta, convention: spec.convention, tau }
    }

    fn mass(&self, m: usize) -> f64 {
        (1.0 - self.beta) * m as f64
    }

    pub fn value(&self, roi: &[f64], alpha: f64) -> f64 {
        let sign = self.convention.sign();
        let sum: f64 = roi.iter().map(|f| softplus(sign * f - alpha, self.tau)).sum();
        alpha + sum / self.mass(roi.len())
    }

    /// `∂F_τ/∂α` and `∂²F_τ/∂α²`.
    fn alpha_derivatives(&self, roi: &[f64], alpha: f64) -> (f64, f64) {
        let sign = self.convention.sign();
        let (mut s1, mut s2) = (0.0, 0.0);
        for f in roi {
            let g = sigmoid(sign * f - alpha, self.tau);
            s1 += g;
            s2 += g * (1.0 - g);
        }
        let t = self.mass(roi.len());
        (1.0 - s1 / t, s2 / (t * self.tau))
    }

    pub fn at(&self, roi: &[f64], alpha: f64) -> SmoothedTail {
        let sign = self.convention.sign();
        let t = self.mass(roi.len());
        let mut sum = 0.0;
        let mut sig_total = 0.0;
        let mut d_roi = Vec::with_capacity(roi.len());
        for f in roi {
            let z = sign * f - alpha;
            sum += softplus(z, self.tau);
            let g = sigmoid(z, self.tau);
            sig_total += g;
            d_roi.push(sign * g / t);
        }
        SmoothedTail { alpha, value: alpha + sum / t, d_alpha: 1.0 - sig_total / t, d_roi }
    }

    /// Minimizer of `F_τ` over `α`, found by safeguarded Newton started at
    /// the exact (unsmoothed) quantile.
    pub fn argmin(&self, roi: &[f64]) -> f64 {
        let sign = self.convention.sign();
        let mut z: Vec<f64> = roi.iter().map(|f| sign * f).collect();
        z.sort_by(|a, b| b.total_cmp(a));
        let t = self.mass(roi.len());
        let k = (t.floor() as usize).min(z.len() - 1);
        let pad = SATURATION * self.tau;
        let mut lo = z[z.len() - 1] - pad;
        let mut hi = z[0] + pad;
        let mut alpha = z[k];
        for _ in 0..200 {
            let (d1, d2) = self.alpha_derivatives(roi, alpha);
            if d1 == 0.0 {
                return alpha;
            }
            if d1 < 0.0 {
                lo = alpha;
            } else {
                hi = alpha;
            }
            let newton = if d2 > 0.0 { alpha - d1 / d2 } else { f64::NAN };
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - alpha).abs() <= 4.0 * f64::EPSILON * (1.0 + alpha.abs()) || hi - lo <= f64::EPSILON * (1.0 + alpha.abs()) {
                return next;
            }
            alpha = next;
        }
        alpha
    }

    pub fn minimum(&self, roi: &[f64]) -> SmoothedTail {
        let alpha = self.argmin(roi);
        self.at(roi, alpha)
    }
}
