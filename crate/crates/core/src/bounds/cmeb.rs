//! Conjugate-mixture empirical-Bernstein (CM-EB) confidence sequences.
//!
//! For values `Z_t` in `[0, 1]` with predictable predictions `Zhat_t` and
//! `V_t = sum (Z_t - Zhat_t)^2`, the mixture
//!
//! ```text
//! M_t(S) = integral q(lambda) exp(lambda * S - psi_E(lambda) * V_t) dlambda,
//! psi_E(lambda) = -ln(1 - lambda) - lambda,
//! ```
//!
//! evaluated at `S = sum (Z_t - E Z_t)` is a nonnegative supermartingale, so
//! `S_t < u(V_t)` for all `t` with probability at least `1 - delta_t`, where
//! `u(V) = sup { S : M(S, V) < 1 / delta_t }`. Dividing by `t` gives the
//! one-sided radius of a lower confidence sequence on the running mean.
//!
//! `q` is uniform on `(0, lambda_max]`. The integral is computed in log
//! space with a fixed Gauss–Legendre rule, so large `S` or `V` never
//! overflow while root finding.

use serde::{Deserialize, Serialize};

use super::quadrature::GaussLegendre;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSequenceSpec {
    pub delta_t: f64,
    /// Upper end of the uniform mixing density's support.
    pub lambda_max: f64,
    pub quadrature_nodes: usize,
    /// Absolute tolerance on the radius `u(V)`.
    pub root_tol: f64,
    /// Bracket growth limit: the upper bracket starts at `max(1, V)` and may
    /// double at most this many times.
    pub max_doublings: u32,
    /// Prediction used for the first value of the variance process.
    pub initial_prediction: f64,
}

impl Default for ConfidenceSequenceSpec {
    fn default() -> Self {
        Self {
            delta_t: 0.2,
            lambda_max: 0.95,
            quadrature_nodes: 200,
            root_tol: 1e-6,
            max_doublings: 64,
            initial_prediction: 0.5,
        }
    }
}

impl ConfidenceSequenceSpec {
    pub fn with_delta(mut self, delta_t: f64) -> Self {
        self.delta_t = delta_t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t > 0.0 && self.delta_t < 1.0) {
            return Err(Error::Parameter(format!(
                "delta_t = {} must lie in (0, 1)",
                self.delta_t
            )));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max < 1.0) {
            return Err(Error::Parameter(format!(
                "lambda_max = {} must lie in (0, 1)",
                self.lambda_max
            )));
        }
        if self.quadrature_nodes < 16 {
            return Err(Error::Parameter(format!(
                "quadrature_nodes = {} must be >= 16",
                self.quadrature_nodes
            )));
        }
        if !(self.root_tol > 0.0 && self.root_tol.is_finite()) {
            return Err(Error::Parameter(format!(
                "root_tol = {} must be > 0",
                self.root_tol
            )));
        }
        if !(0.0..=1.0).contains(&self.initial_prediction) {
            return Err(Error::Parameter(format!(
                "initial_prediction = {} must lie in [0, 1]",
                self.initial_prediction
            )));
        }
        Ok(())
    }
}

/// `psi_E(lambda) = -ln(1 - lambda) - lambda` on `[0, 1)`.
pub fn psi_e(lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Range(format!(
            "psi_E is defined on [0, 1), got {lambda}"
        )));
    }
    Ok(-(-lambda).ln_1p() - lambda)
}

/// Precomputed quadrature for one [`ConfidenceSequenceSpec`].
#[derive(Debug, Clone)]
pub struct CmEb {
    spec: ConfidenceSequenceSpec,
    lambdas: Vec<f64>,
    log_weights: Vec<f64>,
    psis: Vec<f64>,
    log_threshold: f64,
}

impl CmEb {
    pub fn new(spec: ConfidenceSequenceSpec) -> Result<Self> {
        spec.validate()?;
        let rule = GaussLegendre::new(spec.quadrature_nodes);
        let (lambdas, weights) = rule.on_interval(0.0, spec.lambda_max);
        // uniform density 1 / lambda_max folded into the weights
        let log_weights = weights.iter().map(|w| (w / spec.lambda_max).ln()).collect();
        let psis = lambdas
            .iter()
            .map(|&l| psi_e(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            lambdas,
            log_weights,
            psis,
            log_threshold: -spec.delta_t.ln(),
        })
    }

    pub fn spec(&self) -> &ConfidenceSequenceSpec {
        &self.spec
    }

    /// `ln M(S, V)` and its derivative in `S`.
    fn log_mixture_with_slope(&self, s: f64, v: f64) -> (f64, f64) {
        let mut max_exp = f64::NEG_INFINITY;
        for i in 0..self.lambdas.len() {
            let e = self.log_weights[i] + self.lambdas[i] * s - self.psis[i] * v;
            if e > max_exp {
                max_exp = e;
            }
        }
        let mut total = 0.0;
        let mut slope = 0.0;
        for i in 0..self.lambdas.len() {
            let w = (self.log_weights[i] + self.lambdas[i] * s - self.psis[i] * v - max_exp).exp();
            total += w;
            slope += w * self.lambdas[i];
        }
        (max_exp + total.ln(), slope / total)
    }

    pub fn log_mixture(&self, s: f64, v: f64) -> f64 {
        self.log_mixture_with_slope(s, v).0
    }

    /// The mixture integral `M(S, V)`.
    pub fn mixture_integral(&self, s: f64, v: f64) -> Result<f64> {
        if !s.is_finite() || !(v.is_finite() && v >= 0.0) {
            return Err(Error::Range(format!(
                "mixture integral needs finite S and V >= 0, got S = {s}, V = {v}"
            )));
        }
        let value = self.log_mixture(s, v).exp();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numeric(format!(
                "mixture integral overflowed at S = {s}, V = {v}"
            )))
        }
    }

    /// `u(V)`: the boundary where the mixture crosses `1 / delta_t`.
    ///
    /// The returned value `u` satisfies `M(u, V) >= 1 / delta_t` and
    /// `M(u - root_tol, V) < 1 / delta_t`. The bracket is grown by doubling
    /// from `max(1, V)` and refined by Newton steps on the convex function
    /// `ln M(., V)`, falling back to bisection when a step leaves the bracket.
    pub fn radius(&self, v: f64) -> Result<f64> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Range(format!(
                "variance process V = {v} must be finite and >= 0"
            )));
        }
        let tol = self.spec.root_tol;
        let f = |s: f64| {
            let (l, d) = self.log_mixture_with_slope(s, v);
            (l - self.log_threshold, d)
        };

        // M(0, V) <= 1 < 1 / delta_t
        let mut lo = 0.0;
        let mut hi = v.max(1.0);
        let (mut f_hi, mut d_hi) = f(hi);
        let mut doublings = 0;
        while f_hi < 0.0 {
            if doublings >= self.spec.max_doublings {
                return Err(Error::Numeric(format!(
                    "radius bracket exceeded S = {hi} after {doublings} doublings (V = {v})"
                )));
            }
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            (f_hi, d_hi) = f(hi);
        }

        for _ in 0..500 {
            if hi - lo <= tol {
                return Ok(hi);
            }
            let step = f_hi / d_hi;
            let candidate = if step < 0.5 * tol {
                // Newton has converged onto hi: certify the bracket width
                hi - tol
            } else {
                hi - step
            };
            let candidate = if candidate > lo && candidate < hi {
                candidate
            } else {
                0.5 * (lo + hi)
            };
            let (fc, dc) = f(candidate);
            if fc >= 0.0 {
                hi = candidate;
                f_hi = fc;
                d_hi = dc;
            } else {
                lo = candidate;
            }
        }
        Err(Error::Numeric(format!(
            "radius root finding did not converge (V = {v})"
        )))
    }
}

/// One-shot form of [`CmEb::mixture_integral`].
pub fn mixture_integral(s: f64, v: f64, spec: &ConfidenceSequenceSpec) -> Result<f64> {
    CmEb::new(*spec)?.mixture_integral(s, v)
}

/// One-shot form of [`CmEb::radius`].
pub fn cm_eb_radius(v: f64, spec: &ConfidenceSequenceSpec) -> Result<f64> {
    CmEb::new(*spec)?.radius(v)
}
