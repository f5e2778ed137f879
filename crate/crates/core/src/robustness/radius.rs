//! Ambiguity-set radii `θ(N, β)` that make the out-of-sample guarantee hold
//! with probability at least `1 − β`.
//!
//! `c1`, `c2` are concentration constants that depend on the unknown tail
//! of the true distribution. They are configuration knobs; the defaults of
//! one are placeholders, not calibrated values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    pub n_samples: usize,
    pub beta: f64,
    /// Number of stages with independent data; 1 under stationarity.
    pub horizon: usize,
    /// Disturbance dimension.
    pub k: usize,
    pub c1: f64,
    pub c2: f64,
    /// Light-tail exponent, `q > 2`.
    pub q: f64,
    /// Half-diameter of the support (compact case only).
    pub zeta: f64,
}

impl Default for RadiusParams {
    fn default() -> Self {
        Self { n_samples: 10, beta: 0.05, horizon: 1, k: 1, c1: 1.0, c2: 1.0, q: 3.0, zeta: 1.0 }
    }
}

impl RadiusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidRisk(self.beta));
        }
        if self.n_samples == 0 || self.horizon == 0 || self.k == 0 {
            return Err(Error::InvalidParameter("N, T and k must be positive".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter("c1 and c2 must be positive".into()));
        }
        if !(self.q > 2.0) {
            return Err(Error::InvalidParameter(format!("tail exponent q={} must exceed 2", self.q)));
        }
        Ok(())
    }

    /// `c = log(c1 / (1 − (1−β)^{1/T})) / (N c2)`.
    pub fn rate(&self) -> Result<f64> {
        self.validate()?;
        // 1 − (1−β)^{1/T} without cancellation
        let per_stage = -((-self.beta).ln_1p() / self.horizon as f64).exp_m1();
        let c = (self.c1 / per_stage).ln() / (self.n_samples as f64 * self.c2);
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c1={} too small for beta={} (rate {c} not positive)",
                self.c1, self.beta
            )));
        }
        Ok(c)
    }
}

/// Root `s ∈ (0, ∞)` of `s / ln(2 + 1/s) = target`; the left side is
/// strictly increasing in `s`.
pub fn solve_log_boundary(target: f64) -> f64 {
    let g = |s: f64| s / (2.0 + 1.0 / s).ln();
    let mut hi = 1.0;
    while g(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Branch threshold on `c` below which the `k = 4` transcendental branch
/// keeps the squared radius at most one.
pub fn k4_threshold() -> f64 {
    1.0 / 3f64.ln().powi(2)
}

fn light_tail_from_rate(c: f64, k: usize, q: f64) -> f64 {
    if c > 1.0 {
        c.powf(1.0 / q)
    } else if k < 4 {
        c.powf(0.25)
    } else if k > 4 {
        c.powf(1.0 / k as f64)
    } else if c <= k4_threshold() {
        solve_log_boundary(c.sqrt()).sqrt()
    } else {
        // Between 1/(ln 3)² and 1 neither concentration regime applies below
        // a unit squared radius; any radius above one does.
        1.0
    }
}

/// Radius for light-tailed true distributions.
pub fn radius_light_tail(params: &RadiusParams) -> Result<f64> {
    let c = params.rate()?;
    Ok(light_tail_from_rate(c, params.k, params.q))
}

/// Radius for the stationary (average-cost) setting: the light-tail radius
/// with the horizon collapsed to one stage.
pub fn radius_infinite_horizon(params: &RadiusParams) -> Result<f64> {
    radius_light_tail(&RadiusParams { horizon: 1, ..*params })
}

/// Radius for compactly supported true distributions.
pub fn radius_compact(params: &RadiusParams) -> Result<f64> {
    if !(params.zeta > 0.0) {
        return Err(Error::InvalidParameter(format!("support half-diameter {} must be positive", params.zeta)));
    }
    let c = params.rate()?;
    let zeta = params.zeta;
    Ok(match params.k {
        k if k < 4 => c.powf(0.25) * zeta,
        k if k > 4 => c.powf(1.0 / k as f64) * zeta,
        _ => zeta * solve_log_boundary(c.sqrt()).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadiusRegime {
    LightTail,
    Compact,
    Stationary,
}

pub fn radius(params: &RadiusParams, regime: RadiusRegime) -> Result<f64> {
    match regime {
        RadiusRegime::LightTail => radius_light_tail(params),
        RadiusRegime::Compact => radius_compact(params),
        RadiusRegime::Stationary => radius_infinite_horizon(params),
    }
}

/// Tabulates `θ` over sample counts and checks it never grows with `N`.
pub fn radius_sensitivity(params: &RadiusParams, regime: RadiusRegime, ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    let table = sorted
        .iter()
        .map(|&n| radius(&RadiusParams { n_samples: n, ..*params }, regime).map(|t| (n, t)))
        .collect::<Result<Vec<_>>>()?;
    for pair in table.windows(2) {
        if pair[1].1 > pair[0].1 * (1.0 + 1e-12) {
            return Err(Error::MonotonicityViolation(format!(
                "theta({}) = {} exceeds theta({}) = {}",
                pair[1].0, pair[1].1, pair[0].0, pair[0].1
            )));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_horizon_reduces_to_log_over_beta() {
        let p = RadiusParams { n_samples: 7, beta: 0.1, horizon: 1, c1: 2.0, c2: 0.5, ..Default::default() };
        let expected = (2.0f64 / 0.1).ln() / (7.0 * 0.5);
        assert!((p.rate().unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn continuity_at_unit_rate() {
        let beta = 0.05;
        let p = RadiusParams {
            n_samples: 1,
            beta,
            horizon: 1,
            c1: std::f64::consts::E * beta,
            c2: 1.0,
            q: 4.0,
            k: 2,
            zeta: 1.0,
        };
        let c = p.rate().unwrap();
        assert!((c - 1.0).abs() < 1e-14);
        assert!((radius_light_tail(&p).unwrap() - 1.0).abs() < 1e-12);
        assert!((c.powf(0.25) - c.powf(1.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn compact_radius_examples() {
        // c = 1e-4: choose c2 so that log(c1/β)/(N c2) = 1e-4.
        let beta: f64 = 0.05;
        let c2 = (1.0 / beta).ln() / 1e-4;
        let p = RadiusParams { n_samples: 1, beta, horizon: 1, k: 2, c1: 1.0, c2, q: 3.0, zeta: 1.0 };
        assert!((radius_compact(&p).unwrap() - 0.1).abs() < 1e-12);
        let doubled = RadiusParams { zeta: 2.0, ..p };
        assert!((radius_compact(&doubled).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn k4_root_satisfies_boundary_equation() {
        for &target in &[1e-6, 1e-3, 0.1, 0.5, 0.9] {
            let s = solve_log_boundary(target);
            assert!((s / (2.0 + 1.0 / s).ln() - target).abs() <= 1e-10, "target {target}");
        }
    }

    #[test]
    fn invalid_risk() {
        let p = RadiusParams { beta: 1.0, ..Default::default() };
        assert!(matches!(radius_light_tail(&p), Err(Error::InvalidRisk(_))));
    }

    #[test]
    fn sensitivity_is_nonincreasing() {
        let p = RadiusParams { k: 3, ..Default::default() };
        let table = radius_sensitivity(&p, RadiusRegime::LightTail, &[1, 10, 100, 1000]).unwrap();
        assert_eq!(table.len(), 4);
        assert!(table.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}
