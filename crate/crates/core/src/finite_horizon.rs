//! Backward Riccati recursion for the Wasserstein-penalized minimax problem,
//! the standard LQG recursion it generalizes, and the worst-case
//! distribution / disturbance maps.
//!
//! The value function at every stage is quadratic,
//! `V_t(x) = xᵀ P_t x + 2 r_tᵀ x + z_t`, and the optimal input is affine,
//! `u = K_t x + L_t`. The opponent answers each empirical sample `ŵ⁽ⁱ⁾` with
//! a single shifted point, so worst-case distributions stay uniform on `N`
//! atoms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{identity, max_sym_eig, quad, solve, solve_vec, symmetrize};
use crate::model::{AffinePolicy, CostSpec, DiscreteDistribution, EmpiricalDistribution, Horizon, LinearSystem};

/// Relative definiteness margin required of `λI − ΞᵀPΞ`.
pub const TOL_PD: f64 = 1e-9;

/// Coefficients of `V(x) = xᵀPx + 2rᵀx + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    pub p: DMatrix<f64>,
    pub r: DVector<f64>,
    pub z: f64,
}

impl ValueParams {
    pub fn zero(n: usize) -> Self {
        Self { p: DMatrix::zeros(n, n), r: DVector::zeros(n), z: 0.0 }
    }

    pub fn terminal(cost: &CostSpec) -> Self {
        let n = cost.qf.nrows();
        Self { p: cost.qf.clone(), r: DVector::zeros(n), z: 0.0 }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        quad(x, &self.p) + 2.0 * self.r.dot(x) + self.z
    }
}

/// Empirical data per stage, or one distribution reused at every stage
/// (i.i.d. disturbances).
#[derive(Debug, Clone, PartialEq)]
pub enum EmpiricalSchedule {
    Stationary(EmpiricalDistribution),
    PerStage(Vec<EmpiricalDistribution>),
}

impl EmpiricalSchedule {
    pub fn at(&self, t: usize) -> &EmpiricalDistribution {
        match self {
            Self::Stationary(e) => e,
            Self::PerStage(v) => &v[t.min(v.len() - 1)],
        }
    }

    fn check(&self, horizon: usize, k: usize) -> Result<()> {
        let dims_ok = match self {
            Self::Stationary(e) => e.dim() == k,
            Self::PerStage(v) => {
                if v.len() != horizon {
                    return Err(Error::DimensionMismatch(format!(
                        "{} per-stage distributions for horizon {horizon}",
                        v.len()
                    )));
                }
                v.iter().all(|e| e.dim() == k)
            }
        };
        if dims_ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("samples must live in R^{k}")))
        }
    }
}

impl From<EmpiricalDistribution> for EmpiricalSchedule {
    fn from(e: EmpiricalDistribution) -> Self {
        Self::Stationary(e)
    }
}

/// Value parameters for `t = 0..=T` and policies for `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution {
    pub values: Vec<ValueParams>,
    pub policies: Vec<AffinePolicy>,
    /// `f64::INFINITY` for the plain LQG recursion.
    pub lambda: f64,
    /// `min_t (λ − λ_max(ΞᵀP_tΞ))` over `t = 1..=T`.
    pub assumption_margin: f64,
}

impl FiniteSolution {
    pub fn horizon(&self) -> usize {
        self.policies.len()
    }

    /// Total optimal cost-to-go `V_0(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.values[0].eval(x)
    }

    /// `V(x; λ) = V_0(x) / T`.
    pub fn average_value(&self, x: &DVector<f64>) -> f64 {
        self.value(x) / self.horizon() as f64
    }
}

/// `λ − λ_max(ΞᵀPΞ)`, the smallest eigenvalue of `λI − ΞᵀPΞ`.
pub fn penalty_margin(p: &DMatrix<f64>, xi: &DMatrix<f64>, lambda: f64) -> f64 {
    if lambda.is_infinite() {
        return f64::INFINITY;
    }
    lambda - max_sym_eig(&(xi.transpose() * p * xi))
}

pub(crate) fn check_penalty(p: &DMatrix<f64>, xi: &DMatrix<f64>, lambda: f64, stage: usize) -> Result<f64> {
    let margin = penalty_margin(p, xi, lambda);
    if margin.is_infinite() || margin > TOL_PD * (1.0 + lambda) {
        Ok(margin)
    } else {
        Err(Error::PenaltyTooSmall { stage, margin })
    }
}

/// `R⁻¹ M` via Cholesky; `R` must be positive definite.
pub(crate) fn r_solve(r: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = r.clone().cholesky().ok_or_else(|| Error::AssumptionViolated("R not PD".into()))?;
    Ok(chol.solve(m))
}

/// `Φ = B R⁻¹ Bᵀ − ΞΞᵀ/λ`.
pub fn phi(sys: &LinearSystem, r: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let brb = &sys.b * r_solve(r, &sys.b.transpose())?;
    let pen =
        if lambda.is_infinite() { DMatrix::zeros(sys.n(), sys.n()) } else { &sys.xi * sys.xi.transpose() / lambda };
    Ok(symmetrize(&(brb - pen)))
}

/// One Bellman backup given the next-stage value, with every intermediate
/// the policy, worst case and constant term need.
pub(crate) struct Backup {
    pub value: ValueParams,
    pub policy: AffinePolicy,
}

pub(crate) fn backup(
    next: &ValueParams,
    sys: &LinearSystem,
    cost: &CostSpec,
    phi_m: &DMatrix<f64>,
    emp: &EmpiricalDistribution,
    lambda: f64,
) -> Result<Backup> {
    let n = sys.n();
    let p = &next.p;
    // M = I + PΦ
    let m = identity(n) + p * phi_m;
    let minv_pa = solve(&m, &(p * &sys.a), "I + P Phi")?;
    let p_new = symmetrize(&(&cost.q + sys.a.transpose() * &minv_pa));
    let y = p * &sys.xi * emp.mean() + &next.r;
    let minv_y = solve_vec(&m, &y, "I + P Phi")?;
    let r_new = sys.a.transpose() * &minv_y;
    let rinv_bt = r_solve(&cost.r, &sys.b.transpose())?;
    let gain = -&rinv_bt * &minv_pa;
    let offset = -&rinv_bt * &minv_y;
    let z_new = next.z + z_increment(next, sys, phi_m, emp, lambda)?;
    Ok(Backup { value: ValueParams { p: p_new, r: r_new, z: z_new }, policy: AffinePolicy { gain, offset } })
}

/// Constant-term increment `z_t − z_{t+1}` of the penalized recursion. At
/// the steady state this is the average cost `ρ`.
pub(crate) fn z_increment(
    next: &ValueParams,
    sys: &LinearSystem,
    phi_m: &DMatrix<f64>,
    emp: &EmpiricalDistribution,
    lambda: f64,
) -> Result<f64> {
    let (n, k) = (sys.n(), sys.k());
    let p = &next.p;
    let r = &next.r;
    let xi = &sys.xi;
    let inv_lambda = if lambda.is_infinite() { 0.0 } else { 1.0 / lambda };
    let xtpx = xi.transpose() * p * xi;
    // tr[(I − ΞᵀPΞ/λ)⁻¹ ΞᵀPΞ Σ]
    let t1 = solve(&(identity(k) - &xtpx * inv_lambda), &(&xtpx * emp.second_moment()), "I - Xi'P Xi/lambda")?.trace();
    // w̄ᵀΞᵀ[(I+PΦ)⁻¹ − (I − PΞΞᵀ/λ)⁻¹] PΞw̄
    let xw = xi * emp.mean();
    let pxw = p * &xw;
    let m = identity(n) + p * phi_m;
    let a1 = solve_vec(&m, &pxw, "I + P Phi")?;
    let a2 = solve_vec(&(identity(n) - p * xi * xi.transpose() * inv_lambda), &pxw, "I - P Xi Xi'/lambda")?;
    let t2 = xw.dot(&(a1 - a2));
    // (2w̄ᵀΞᵀ − rᵀΦ)(I+PΦ)⁻¹ r
    let minv_r = solve_vec(&m, r, "I + P Phi")?;
    let t3 = (&xw * 2.0 - phi_m * r).dot(&minv_r);
    Ok(t1 + t2 + t3)
}

/// Single backward step of the penalized Riccati recursion.
///
/// Fails with `PenaltyTooSmall` unless `λI − ΞᵀP_{t+1}Ξ ≻ 0`.
pub fn riccati_step(
    next: &ValueParams,
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
) -> Result<(ValueParams, AffinePolicy)> {
    check_dims(next, sys, cost, emp)?;
    check_penalty(&next.p, &sys.xi, lambda, 1)?;
    let phi_m = phi(sys, &cost.r, lambda)?;
    let b = backup(next, sys, cost, &phi_m, emp, lambda)?;
    Ok((b.value, b.policy))
}

fn check_dims(next: &ValueParams, sys: &LinearSystem, cost: &CostSpec, emp: &EmpiricalDistribution) -> Result<()> {
    let n = sys.n();
    if next.p.nrows() != n || next.p.ncols() != n || next.r.len() != n {
        return Err(Error::DimensionMismatch(format!("value parameters do not match n={n}")));
    }
    if cost.q.nrows() != n || cost.r.nrows() != sys.m() {
        return Err(Error::DimensionMismatch("cost weights do not match the system".into()));
    }
    if emp.dim() != sys.k() {
        return Err(Error::DimensionMismatch(format!("samples in R^{}, Xi has k={}", emp.dim(), sys.k())));
    }
    Ok(())
}

/// One step of the standard LQG recursion, written in the textbook
/// `R + BᵀPB` form so it stays an independent check on [`riccati_step`].
pub fn lqg_riccati_step(
    next: &ValueParams,
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
) -> Result<(ValueParams, AffinePolicy)> {
    check_dims(next, sys, cost, emp)?;
    let p = &next.p;
    let r = &next.r;
    let (a, b, xi) = (&sys.a, &sys.b, &sys.xi);
    let s = symmetrize(&(&cost.r + b.transpose() * p * b));
    let bt = b.transpose();
    let gain = -solve(&s, &(&bt * p * a), "R + B'PB")?;
    let g = p * xi * emp.mean();
    let y = &g + r;
    let offset = -solve_vec(&s, &(&bt * &y), "R + B'PB")?;
    let p_new = symmetrize(&(&cost.q + a.transpose() * p * (a + b * &gain)));
    let r_new = a.transpose() * (&y + p * b * &offset);
    let bg = &bt * &g;
    let btr = &bt * r;
    let sinv_bg = solve_vec(&s, &bg, "R + B'PB")?;
    let sinv_btr = solve_vec(&s, &btr, "R + B'PB")?;
    let xw = xi * emp.mean();
    let t1 = (xi.transpose() * p * xi * emp.second_moment()).trace();
    let t2 = -bg.dot(&sinv_bg);
    let t3 = 2.0 * xw.dot(&(r - p * b * &sinv_btr)) - btr.dot(&sinv_btr);
    Ok((ValueParams { p: p_new, r: r_new, z: next.z + t1 + t2 + t3 }, AffinePolicy { gain, offset }))
}

fn finite_horizon_of(cost: &CostSpec) -> Result<usize> {
    match cost.horizon {
        Horizon::Finite(t) if t > 0 => Ok(t),
        _ => Err(Error::InvalidParameter("finite-horizon solve needs a positive finite horizon".into())),
    }
}

/// Full backward pass from `P_T = Q_f`, `r_T = 0`, `z_T = 0`.
///
/// Fails with `PenaltyTooSmall { stage }` at the first stage (counting
/// backwards from `T`) where `λI − ΞᵀP_tΞ` loses definiteness.
pub fn solve_finite(
    sys: &LinearSystem,
    cost: &CostSpec,
    schedule: &EmpiricalSchedule,
    lambda: f64,
) -> Result<FiniteSolution> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("penalty {lambda} must be positive")));
    }
    let horizon = finite_horizon_of(cost)?;
    schedule.check(horizon, sys.k())?;
    let terminal = ValueParams::terminal(cost);
    check_dims(&terminal, sys, cost, schedule.at(0))?;
    let phi_m = phi(sys, &cost.r, lambda)?;
    let mut values = vec![terminal];
    let mut policies = Vec::with_capacity(horizon);
    let mut margin = f64::INFINITY;
    for t in (0..horizon).rev() {
        let next = values.last().expect("nonempty");
        margin = margin.min(check_penalty(&next.p, &sys.xi, lambda, t + 1)?);
        let b = backup(next, sys, cost, &phi_m, schedule.at(t), lambda)?;
        values.push(b.value);
        policies.push(b.policy);
    }
    values.reverse();
    policies.reverse();
    Ok(FiniteSolution { values, policies, lambda, assumption_margin: margin })
}

/// The same backward pass with the standard LQG recursion (`λ = ∞`).
pub fn solve_finite_lqg(sys: &LinearSystem, cost: &CostSpec, schedule: &EmpiricalSchedule) -> Result<FiniteSolution> {
    let horizon = finite_horizon_of(cost)?;
    schedule.check(horizon, sys.k())?;
    let mut values = vec![ValueParams::terminal(cost)];
    let mut policies = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (v, pol) = lqg_riccati_step(values.last().expect("nonempty"), sys, cost, schedule.at(t))?;
        values.push(v);
        policies.push(pol);
    }
    values.reverse();
    policies.reverse();
    Ok(FiniteSolution { values, policies, lambda: f64::INFINITY, assumption_margin: f64::INFINITY })
}

/// Maximizers `w⁽ⁱ⁾ = (λI − ΞᵀPΞ)⁻¹(ΞᵀP(Ax + Bu) + Ξᵀr + λŵ⁽ⁱ⁾)` of the
/// per-sample inner problems against the next-stage value `next`.
pub fn best_responses(
    next: &ValueParams,
    sys: &LinearSystem,
    emp: &EmpiricalDistribution,
    lambda: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if lambda.is_infinite() {
        return Ok(emp.support().to_vec());
    }
    check_penalty(&next.p, &sys.xi, lambda, 0)?;
    let xt = sys.xi.transpose();
    let s = DMatrix::identity(sys.k(), sys.k()) * lambda - &xt * &next.p * &sys.xi;
    let base = &xt * &next.p * (&sys.a * x + &sys.b * u) + &xt * &next.r;
    let rhs = DMatrix::from_fn(sys.k(), emp.len(), |i, j| base[i] + lambda * emp.support()[j][i]);
    let sol = solve(&s, &rhs, "lambda I - Xi'P Xi")?;
    Ok(sol.column_iter().map(|c| c.into_owned()).collect())
}

/// Objective of the stage min-max problem at `(x, u, w⁽¹⁾..w⁽ᴺ⁾)`:
/// `xᵀQx + uᵀRu + (1/N) Σ [V_next(Ax + Bu + Ξw⁽ⁱ⁾) − λ‖ŵ⁽ⁱ⁾ − w⁽ⁱ⁾‖²]`.
#[allow(clippy::too_many_arguments)]
pub fn stage_objective(
    next: &ValueParams,
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ws: &[DVector<f64>],
) -> f64 {
    let y = &sys.a * x + &sys.b * u;
    let inner: f64 = ws
        .iter()
        .zip(emp.support())
        .map(|(w, wh)| next.eval(&(&y + &sys.xi * w)) - lambda * (wh - w).norm_squared())
        .sum::<f64>()
        / emp.len() as f64;
    quad(x, &cost.q) + quad(u, &cost.r) + inner
}

/// Support of the worst-case distribution at stage `t` and state `x`.
pub fn worst_case_distribution(
    t: usize,
    x: &DVector<f64>,
    sol: &FiniteSolution,
    sys: &LinearSystem,
    emp: &EmpiricalDistribution,
) -> Result<DiscreteDistribution> {
    if t >= sol.horizon() {
        return Err(Error::InvalidParameter(format!("stage {t} beyond horizon {}", sol.horizon())));
    }
    let u = sol.policies[t].apply(x);
    let pts = best_responses(&sol.values[t + 1], sys, emp, sol.lambda, x, &u)?;
    DiscreteDistribution::uniform(pts)
}

/// Pointwise worst-case disturbance of the H∞ game,
/// `(λI − ΞᵀP_{t+1}Ξ)⁻¹ ΞᵀP_{t+1}(A + BK_t)x`.
pub fn hinf_worst_disturbance(
    t: usize,
    x: &DVector<f64>,
    sol: &FiniteSolution,
    sys: &LinearSystem,
) -> Result<DVector<f64>> {
    if t >= sol.horizon() {
        return Err(Error::InvalidParameter(format!("stage {t} beyond horizon {}", sol.horizon())));
    }
    hinf_disturbance(&sol.values[t + 1].p, &sol.policies[t].gain, sys, sol.lambda, x)
}

pub(crate) fn hinf_disturbance(
    p: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    sys: &LinearSystem,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if lambda.is_infinite() {
        return Ok(DVector::zeros(sys.k()));
    }
    check_penalty(p, &sys.xi, lambda, 0)?;
    let xt = sys.xi.transpose();
    let s = DMatrix::identity(sys.k(), sys.k()) * lambda - &xt * p * &sys.xi;
    solve_vec(&s, &(&xt * p * (&sys.a + &sys.b * gain) * x), "lambda I - Xi'P Xi")
}

/// Offsets `(λI − ΞᵀPΞ)⁻¹(ΞᵀP B L + Ξᵀr + λŵ⁽ⁱ⁾)` separating each worst-case
/// support point from the H∞ disturbance at stage `t`.
pub fn hinf_shift(
    t: usize,
    sol: &FiniteSolution,
    sys: &LinearSystem,
    emp: &EmpiricalDistribution,
) -> Result<Vec<DVector<f64>>> {
    let next = &sol.values[t + 1];
    let lambda = sol.lambda;
    check_penalty(&next.p, &sys.xi, lambda, t + 1)?;
    let xt = sys.xi.transpose();
    let s = DMatrix::identity(sys.k(), sys.k()) * lambda - &xt * &next.p * &sys.xi;
    let base = &xt * &next.p * &sys.b * &sol.policies[t].offset + &xt * &next.r;
    emp.support().iter().map(|wh| solve_vec(&s, &(&base + wh * lambda), "lambda I - Xi'P Xi")).collect()
}
