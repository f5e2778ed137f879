//! Penalty selection: the smallest admissible penalties and the convex
//! search for the `λ` that minimizes the guaranteed-cost bound
//! `λθ² + V(x; λ)` (finite horizon) or `λθ² + ρ(λ)` (average cost).

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_horizon::{phi, solve_finite, EmpiricalSchedule};
use crate::infinite_horizon::{is_stabilizable, phi_is_psd, solve_are_fixed_point, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::psd_sqrt;
use crate::model::{CostSpec, EmpiricalDistribution, Horizon, LinearSystem};

/// Upper end of the finite-horizon threshold bracket and of the `λ*` search.
pub const LAMBDA_CAP: f64 = 1e9;
/// Largest penalty tried by the infinite-horizon threshold sweeps.
pub const LAMBDA_SWEEP_MAX: f64 = 1e12;
pub const GOLDEN_MAX_ITER: usize = 200;
const AUDIT_PROBES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaProfile {
    /// Finite-horizon threshold for every horizon at once, i.e. the
    /// supremum over `T`; equals `lambda_hat2`.
    pub lambda_hat: f64,
    /// Infimum of `λ` with `Φ ⪰ 0` and `(A, Φ^{1/2})` stabilizable.
    pub lambda_hat1: f64,
    /// Infimum of `λ` keeping `λI − ΞᵀP_tΞ ≻ 0` along the whole iteration.
    pub lambda_hat2: f64,
    pub lambda_hat_inf: f64,
    pub search_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub lambda: f64,
    pub objective: f64,
    /// Penalty margin `λ − λ_max(ΞᵀPΞ)` of the solve behind this point.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPenalty {
    pub lambda_star: f64,
    /// Objective value at `lambda_star`.
    pub upper_bound: f64,
    pub theta: f64,
    /// Threshold the search domain starts above.
    pub lambda_hat: f64,
    /// Set when the objective never increased up to [`LAMBDA_CAP`], in
    /// which case `lambda_star` sits at the cap.
    pub monotone_tail: bool,
    pub evaluations: Vec<Evaluation>,
}

/// Bisection on a predicate that is false at `lo` and true at `hi`.
/// Afterwards the predicate is re-probed on a geometric grid on both sides
/// of the bracket; any success below or failure above is reported as a
/// monotonicity violation.
fn bisect_threshold(mut pred: impl FnMut(f64) -> bool, lo0: f64, hi0: f64, tol: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    for i in 1..=AUDIT_PROBES {
        let f = i as f64 / (AUDIT_PROBES + 1) as f64;
        let above = hi * (hi0 / hi).powf(f);
        if above > hi && !pred(above) {
            return Err(Error::MonotonicityViolation(format!("predicate fails at {above:e} above threshold {hi:e}")));
        }
        let below = lo0 + (lo - lo0) * f;
        if below < lo && pred(below) {
            return Err(Error::MonotonicityViolation(format!("predicate holds at {below:e} below threshold {lo:e}")));
        }
    }
    Ok((lo, hi))
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")))
    }
}

/// Smallest `λ` (to within `tol`) for which the `T`-stage recursion keeps
/// `λI − ΞᵀP_tΞ ≻ 0` at every stage.
pub fn find_lambda_hat_finite(
    sys: &LinearSystem,
    cost: &CostSpec,
    schedule: &EmpiricalSchedule,
    horizon: usize,
    tol: f64,
) -> Result<f64> {
    check_tol(tol)?;
    let cost = cost.clone().with_horizon(Horizon::Finite(horizon));
    let pred = |lambda: f64| solve_finite(sys, &cost, schedule, lambda).is_ok();
    if pred(tol) {
        return Ok(tol);
    }
    if !pred(LAMBDA_CAP) {
        return Err(Error::BracketFailure(format!("recursion fails even at lambda = {LAMBDA_CAP:e}")));
    }
    let (lo, hi) = bisect_threshold(pred, tol, LAMBDA_CAP, tol)?;
    Ok(0.5 * (lo + hi))
}

/// Descending decade sweep from [`LAMBDA_SWEEP_MAX`] to the first failure,
/// then bisection inside that decade. Returns `None` when the predicate
/// already fails at the top.
fn sweep_threshold(mut pred: impl FnMut(f64) -> bool, tol: f64) -> Result<Option<f64>> {
    if !pred(LAMBDA_SWEEP_MAX) {
        return Ok(None);
    }
    let mut hi = LAMBDA_SWEEP_MAX;
    loop {
        let next = hi / 10.0;
        if next <= tol {
            if pred(tol) {
                return Ok(Some(tol));
            }
            let (lo, hi) = bisect_threshold(&mut pred, tol, hi, tol)?;
            return Ok(Some(0.5 * (lo + hi)));
        }
        if !pred(next) {
            let (lo, hi) = bisect_threshold(&mut pred, next, hi, tol)?;
            return Ok(Some(0.5 * (lo + hi)));
        }
        hi = next;
    }
}

fn phi_admissible(sys: &LinearSystem, cost: &CostSpec, lambda: f64) -> bool {
    let Ok(phi_m) = phi(sys, &cost.r, lambda) else { return false };
    phi_is_psd(&phi_m) && is_stabilizable(&sys.a, &psd_sqrt(&phi_m))
}

pub fn find_lambda_profile_infinite(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    tol: f64,
) -> Result<LambdaProfile> {
    check_tol(tol)?;
    let lambda_hat1 = sweep_threshold(|l| phi_admissible(sys, cost, l), tol)?.ok_or_else(|| {
        Error::AssumptionViolated(format!("(A, Phi^1/2) not stabilizable even at lambda = {LAMBDA_SWEEP_MAX:e}"))
    })?;
    let lambda_hat2 =
        sweep_threshold(|l| solve_are_fixed_point(sys, cost, emp, l, DEFAULT_MAX_ITER, DEFAULT_TOL).is_ok(), tol)?
            .ok_or(Error::Lambda2Infinite { lambda_max: LAMBDA_SWEEP_MAX })?;
    Ok(LambdaProfile {
        lambda_hat: lambda_hat2,
        lambda_hat1,
        lambda_hat2,
        lambda_hat_inf: lambda_hat1.max(lambda_hat2),
        search_tol: tol,
    })
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
/// Returns the best point seen.
pub fn golden_section(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Shared driver for both tuning problems: bracket by doubling from the
/// domain start until the objective increases, then golden section.
fn tune(
    mut eval: impl FnMut(f64) -> Result<Evaluation>,
    lambda_hat: f64,
    theta: f64,
    tol: f64,
) -> Result<TunedPenalty> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {theta} must be nonnegative")));
    }
    check_tol(tol)?;
    let mut evaluations = Vec::new();
    let mut f = |lambda: f64| -> Result<f64> {
        let e = eval(lambda)?;
        evaluations.push(e);
        Ok(e.objective)
    };
    let a = lambda_hat + tol;
    if a >= LAMBDA_CAP {
        return Err(Error::BracketFailure(format!("threshold {lambda_hat:e} is above the search cap {LAMBDA_CAP:e}")));
    }
    let increases = |lo: f64, hi: f64| hi > lo + 1e-12 * (1.0 + lo.abs());
    let mut h = (2.0 * a).max(a + 1.0).min(LAMBDA_CAP);
    let mut fh = f(h)?;
    let mut hi = None;
    while h < LAMBDA_CAP {
        let h2 = (2.0 * h).min(LAMBDA_CAP);
        let f2 = f(h2)?;
        if increases(fh, f2) {
            hi = Some(h2);
            break;
        }
        h = h2;
        fh = f2;
    }
    let (lambda_star, upper_bound, monotone_tail) = match hi {
        Some(hi) => {
            let (x, fx) = golden_section(&mut f, a, hi, tol, GOLDEN_MAX_ITER)?;
            (x, fx, false)
        }
        None => {
            let fa = f(a)?;
            if increases(fa, fh) {
                let (x, fx) = golden_section(&mut f, a, LAMBDA_CAP, tol, GOLDEN_MAX_ITER)?;
                (x, fx, false)
            } else {
                (LAMBDA_CAP, fh, true)
            }
        }
    };
    Ok(TunedPenalty { lambda_star, upper_bound, theta, lambda_hat, monotone_tail, evaluations })
}

/// `λθ² + V_0(x0; λ)/T` with its penalty margin.
pub fn finite_objective(
    sys: &LinearSystem,
    cost: &CostSpec,
    schedule: &EmpiricalSchedule,
    x0: &DVector<f64>,
    theta: f64,
    lambda: f64,
) -> Result<Evaluation> {
    let sol = solve_finite(sys, cost, schedule, lambda)?;
    Ok(Evaluation { lambda, objective: lambda * theta * theta + sol.average_value(x0), margin: sol.assumption_margin })
}

/// `λθ² + ρ(λ)` with its penalty margin.
pub fn infinite_objective(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    theta: f64,
    lambda: f64,
) -> Result<Evaluation> {
    let sol = solve_are_fixed_point(sys, cost, emp, lambda, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let margin = crate::finite_horizon::penalty_margin(&sol.p, &sys.xi, lambda);
    Ok(Evaluation { lambda, objective: lambda * theta * theta + sol.rho, margin })
}

#[allow(clippy::too_many_arguments)]
pub fn optimize_lambda_finite(
    sys: &LinearSystem,
    cost: &CostSpec,
    schedule: &EmpiricalSchedule,
    horizon: usize,
    x0: &DVector<f64>,
    theta: f64,
    tol: f64,
) -> Result<TunedPenalty> {
    let lambda_hat = find_lambda_hat_finite(sys, cost, schedule, horizon, tol)?;
    let cost = cost.clone().with_horizon(Horizon::Finite(horizon));
    tune(|l| finite_objective(sys, &cost, schedule, x0, theta, l), lambda_hat, theta, tol)
}

pub fn optimize_lambda_infinite(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    theta: f64,
    tol: f64,
) -> Result<TunedPenalty> {
    let profile = find_lambda_profile_infinite(sys, cost, emp, tol)?;
    tune(|l| infinite_objective(sys, cost, emp, theta, l), profile.lambda_hat_inf, theta, tol)
}

/// Evaluates an objective on a grid of penalties, in parallel when the
/// `parallel` feature is on. Output order follows `lambdas`.
pub fn objective_curve(lambdas: &[f64], eval: impl Fn(f64) -> Result<Evaluation> + Sync) -> Result<Vec<Evaluation>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        lambdas.par_iter().map(|&l| eval(l)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        lambdas.iter().map(|&l| eval(l)).collect()
    }
}

/// `n` points spaced geometrically on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// Largest violation of midpoint convexity `f((a+b)/2) ≤ (f(a)+f(b))/2`
/// over consecutive triples of an evenly spaced curve, or over all pairs
/// whose midpoint is also on the curve.
pub fn convexity_defect(curve: &[Evaluation]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..curve.len() {
        for j in (i + 2..curve.len()).step_by(2) {
            let m = (i + j) / 2;
            let mid = 0.5 * (curve[i].lambda + curve[j].lambda);
            if (curve[m].lambda - mid).abs() <= 1e-12 * mid.abs().max(1.0) {
                worst = worst.max(curve[m].objective - 0.5 * (curve[i].objective + curve[j].objective));
            }
        }
    }
    worst
}

/// Largest increase between consecutive points of a curve sorted by `λ`.
pub fn monotonicity_defect(curve: &[Evaluation]) -> f64 {
    curve.windows(2).map(|w| w[1].objective - w[0].objective).fold(0.0, f64::max)
}

/// CSV with header `lambda,objective,margin`.
pub fn evaluations_csv(evals: &[Evaluation]) -> String {
    let mut out = String::from("lambda,objective,margin\n");
    for e in evals {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", e.lambda, e.objective, e.margin);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn scalar_emp(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(v.iter().map(|&x| DVector::from_element(1, x)).collect()).unwrap()
    }

    #[test]
    fn one_step_threshold_is_max_eigenvalue() {
        let sys = LinearSystem::scalar(1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(1));
        let tol = 1e-8;
        let l = find_lambda_hat_finite(&sys, &cost, &scalar_emp(&[0.0]).into(), 1, tol).unwrap();
        assert!((l - 1.0).abs() <= tol, "{l}");
    }

    #[test]
    fn no_disturbance_threshold_is_lower_bound() {
        let sys = LinearSystem::scalar(1.0, 1.0, 0.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(4));
        assert_eq!(find_lambda_hat_finite(&sys, &cost, &scalar_emp(&[0.0]).into(), 4, 1e-6).unwrap(), 1e-6);
        let prof = find_lambda_profile_infinite(&sys, &cost, &scalar_emp(&[0.0]), 1e-6).unwrap();
        assert_eq!(prof.lambda_hat1, 1e-6);
        assert_eq!(prof.lambda_hat2, 1e-6);
    }

    #[test]
    fn scalar_profile() {
        let sys = LinearSystem::scalar(1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Infinite);
        let tol = 1e-7;
        let prof = find_lambda_profile_infinite(&sys, &cost, &scalar_emp(&[0.0]), tol).unwrap();
        assert!((prof.lambda_hat1 - 1.0).abs() <= tol);
        assert_eq!(prof.lambda_hat_inf, prof.lambda_hat1.max(prof.lambda_hat2));
        let ok =
            |l: f64| solve_are_fixed_point(&sys, &cost, &scalar_emp(&[0.0]), l, DEFAULT_MAX_ITER, DEFAULT_TOL).is_ok();
        assert!(ok(prof.lambda_hat_inf * 1.01));
        assert!(!ok(prof.lambda_hat_inf * 0.99));
    }

    #[test]
    fn unmatched_disturbance_has_no_admissible_penalty() {
        // Ξ pushes the unactuated state, so Φ = diag(1, −1/λ) for every λ
        let sys = LinearSystem::new(
            DMatrix::from_diagonal_element(2, 2, 0.5),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let cost = CostSpec::stationary(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        let emp = EmpiricalDistribution::new(vec![DVector::from_element(1, 0.1)]).unwrap();
        let err = find_lambda_profile_infinite(&sys, &cost, &emp, 1e-6).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolated(_)), "{err}");
    }

    #[test]
    fn threshold_above_cap_is_rejected() {
        let eval = |l: f64| Ok(Evaluation { lambda: l, objective: 1.0 / l, margin: 1.0 });
        let err = tune(eval, 2.0 * LAMBDA_CAP, 0.1, 1e-6).unwrap_err();
        assert!(matches!(err, Error::BracketFailure(_)), "{err}");
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let (x, fx) = golden_section(|x| Ok((x - 1.3).powi(2)), 0.0, 5.0, 1e-10, 200).unwrap();
        assert!((x - 1.3).abs() < 1e-9);
        assert!(fx < 1e-18);
    }

    #[test]
    fn zero_radius_gives_monotone_tail() {
        let sys = LinearSystem::scalar(1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(5));
        let x0 = DVector::from_element(1, 1.0);
        let tuned = optimize_lambda_finite(&sys, &cost, &scalar_emp(&[0.1, -0.3]).into(), 5, &x0, 0.0, 1e-6).unwrap();
        assert!(tuned.monotone_tail);
        assert_eq!(tuned.lambda_star, LAMBDA_CAP);
    }

    #[test]
    fn large_radius_pushes_to_threshold() {
        let sys = LinearSystem::scalar(1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(5));
        let x0 = DVector::from_element(1, 1.0);
        let sched = scalar_emp(&[0.1, -0.3]).into();
        let tuned = optimize_lambda_finite(&sys, &cost, &sched, 5, &x0, 1e3, 1e-6).unwrap();
        let small = optimize_lambda_finite(&sys, &cost, &sched, 5, &x0, 0.1, 1e-6).unwrap();
        assert!(!tuned.monotone_tail);
        assert!(tuned.lambda_star - tuned.lambda_hat < 1e-2);
        assert!(small.lambda_star > tuned.lambda_star);
    }

    #[test]
    fn csv_layout() {
        let csv = evaluations_csv(&[Evaluation { lambda: 2.0, objective: 0.5, margin: 1.0 }]);
        assert_eq!(csv.lines().next().unwrap(), "lambda,objective,margin");
        assert_eq!(csv.lines().count(), 2);
    }
}
