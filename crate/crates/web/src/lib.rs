//! Browser bindings for three interactive views of a scalar minimax LQ
//! problem: Riccati coefficients against the penalty, the penalty-tuning
//! objective, and the ambiguity radius against the sample count.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page can show them inline.

// `!(x >= 0.0)` rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use minimax_lq::finite_horizon::{solve_finite, solve_finite_lqg, EmpiricalSchedule};
use minimax_lq::robustness::{radius, RadiusParams, RadiusRegime};
use minimax_lq::tuning::{find_lambda_hat_finite, finite_objective, geometric_grid, optimize_lambda_finite};
use minimax_lq::{CostSpec, EmpiricalDistribution, Horizon, LinearSystem};
use nalgebra::DVector;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SEARCH_TOL: f64 = 1e-6;
const CURVE_POINTS: usize = 60;
const PENALTY_CURVES: usize = 6;
const MAX_HORIZON: u32 = 500;
const MAX_SAMPLE_COUNT: f64 = 1e4;

/// Scalar problem description shared by the Riccati and tuning views.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct ScalarProblem {
    a: f64,
    b: f64,
    xi: f64,
    q: f64,
    r: f64,
    qf: f64,
    horizon: u32,
    samples: Vec<f64>,
}

#[wasm_bindgen]
impl ScalarProblem {
    /// `samples` is a comma- or space-separated list of disturbance
    /// observations.
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: f64, b: f64, xi: f64, q: f64, r: f64, qf: f64, horizon: u32, samples: &str) -> ScalarProblem {
        let samples = samples
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .filter_map(|s| s.parse().ok())
            .collect();
        ScalarProblem { a, b, xi, q, r, qf, horizon, samples }
    }
}

impl ScalarProblem {
    fn build(&self) -> Result<(LinearSystem, CostSpec, EmpiricalSchedule), String> {
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(format!("horizon must be between 1 and {MAX_HORIZON}"));
        }
        if self.samples.is_empty() {
            return Err("enter at least one sample".into());
        }
        let sys = LinearSystem::scalar(self.a, self.b, self.xi);
        let cost = CostSpec::scalar(self.q, self.r, self.qf, Horizon::Finite(self.horizon as usize));
        let emp = EmpiricalDistribution::new(self.samples.iter().map(|w| DVector::from_element(1, *w)).collect())
            .map_err(|e| e.to_string())?;
        Ok((sys, cost, EmpiricalSchedule::from(emp)))
    }
}

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn riccati_curves(p: &ScalarProblem) -> Result<Value, String> {
    let (sys, cost, sched) = p.build()?;
    let horizon = p.horizon as usize;
    let lambda_hat = find_lambda_hat_finite(&sys, &cost, &sched, horizon, SEARCH_TOL).map_err(|e| e.to_string())?;
    let curves = geometric_grid(lambda_hat * 1.05, lambda_hat * 100.0, PENALTY_CURVES)
        .into_iter()
        .map(|lambda| {
            let sol = solve_finite(&sys, &cost, &sched, lambda).map_err(|e| e.to_string())?;
            Ok(json!({ "lambda": lambda, "p": sol.values.iter().map(|v| v.p[(0, 0)]).collect::<Vec<_>>() }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let lqg = solve_finite_lqg(&sys, &cost, &sched).map_err(|e| e.to_string())?;
    Ok(json!({
        "lambda_hat": lambda_hat,
        "curves": curves,
        "lqg": lqg.values.iter().map(|v| v.p[(0, 0)]).collect::<Vec<_>>(),
    }))
}

/// `P_t` for `t = 0..=T` at penalties spread geometrically above the
/// threshold `λ̂`, plus the LQG recursion for comparison.
#[wasm_bindgen]
pub fn riccati_vs_lambda(problem: &ScalarProblem) -> String {
    respond(riccati_curves(problem))
}

fn tuning(p: &ScalarProblem, x0: f64, theta: f64) -> Result<Value, String> {
    if !(theta >= 0.0) {
        return Err("the radius must be nonnegative".into());
    }
    let (sys, cost, sched) = p.build()?;
    let x0 = DVector::from_element(1, x0);
    let horizon = p.horizon as usize;
    let tuned =
        optimize_lambda_finite(&sys, &cost, &sched, horizon, &x0, theta, SEARCH_TOL).map_err(|e| e.to_string())?;
    let hi = (tuned.lambda_star * 10.0).min(tuned.lambda_hat * 1e4).max(tuned.lambda_hat * 10.0);
    let curve = geometric_grid(tuned.lambda_hat * (1.0 + 1e-3), hi, CURVE_POINTS)
        .into_iter()
        .filter_map(|lambda| finite_objective(&sys, &cost, &sched, &x0, theta, lambda).ok())
        .map(|e| json!({ "lambda": e.lambda, "objective": e.objective }))
        .collect::<Vec<_>>();
    Ok(json!({
        "lambda_hat": tuned.lambda_hat,
        "lambda_star": tuned.lambda_star,
        "bound": tuned.upper_bound,
        "monotone_tail": tuned.monotone_tail,
        "curve": curve,
    }))
}

/// Guaranteed-cost objective `λθ² + V₀(x₀; λ)/T` over `λ`, with the tuned
/// minimizer.
#[wasm_bindgen]
pub fn tuning_curve(problem: &ScalarProblem, x0: f64, theta: f64) -> String {
    respond(tuning(problem, x0, theta))
}

fn radius_points(beta: f64, k: u32, horizon: u32, c1: f64, c2: f64, regime: &str) -> Result<Value, String> {
    let regime = match regime {
        "light_tail" => RadiusRegime::LightTail,
        "compact" => RadiusRegime::Compact,
        "stationary" => RadiusRegime::Stationary,
        other => return Err(format!("unknown regime '{other}'")),
    };
    let base = RadiusParams { beta, k: k as usize, horizon: horizon as usize, c1, c2, ..RadiusParams::default() };
    let mut ns: Vec<usize> =
        geometric_grid(1.0, MAX_SAMPLE_COUNT, CURVE_POINTS).iter().map(|n| n.round() as usize).collect();
    ns.dedup();
    let points = ns
        .into_iter()
        .map(|n| {
            radius(&RadiusParams { n_samples: n, ..base }, regime)
                .map(|theta| json!({ "n": n, "theta": theta }))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "points": points }))
}

/// Radius `θ(N)` for `N` from 1 to 10⁴.
#[wasm_bindgen]
pub fn radius_curve(beta: f64, k: u32, horizon: u32, c1: f64, c2: f64, regime: &str) -> String {
    respond(radius_points(beta, k, horizon, c1, c2, regime))
}
