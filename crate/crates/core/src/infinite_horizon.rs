//! Average-cost (infinite-horizon) problem: the algebraic Riccati equation
//! `P = Q + Aᵀ(I + PΦ)⁻¹PA`, solved by fixed-point iteration and by the
//! stable invariant subspace of the symplectic matrix, plus the steady
//! policy, average cost `ρ`, Bellman residual and stability certificates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_horizon::{
    best_responses, check_penalty, hinf_disturbance, penalty_margin, phi, r_solve, stage_objective, z_increment,
    ValueParams,
};
use crate::linalg::{
    complex_eigenvalues, cond2, controllability_matrix, identity, max_sym_eig, min_sym_eig, psd_sqrt, quad,
    range_split, rank, solve, solve_vec, spectral_radius, symmetrize,
};
use crate::model::{AffinePolicy, CostSpec, DiscreteDistribution, EmpiricalDistribution, LinearSystem};

pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-12;
/// Cap on the extra contraction steps taken after the stopping rule fires.
const POLISH_MAX_ITER: usize = 1000;
/// Relative SVD threshold for the Kalman rank tests.
pub const KALMAN_TOL: f64 = 1e-8;
/// Condition-number ceiling on `A` for the eigenvector route.
pub const MAX_COND_A: f64 = 1e10;
/// Largest penalty tried by the attenuation-level search.
pub const LAMBDA_MAX: f64 = 1e12;
const IMAG_TOL: f64 = 1e-8;
const CLUSTER_TOL: f64 = 1e-6;
const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    FixedPoint,
    Eigen,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub p: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Optimal average cost.
    pub rho: f64,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// `f64::INFINITY` for the LQG solution.
    pub lambda: f64,
    /// `ρ(A + BK)`.
    pub closed_loop_spectral_radius: f64,
    /// `ρ((I + ΦP)⁻¹A)`, the gain of the mean state under the worst case.
    pub mean_state_gain_radius: f64,
    pub method: SolveMethod,
    /// Fixed-point iterations used; zero for the eigen route.
    pub iterations: usize,
}

impl SteadySolution {
    pub fn policy(&self) -> AffinePolicy {
        AffinePolicy { gain: self.gain.clone(), offset: self.offset.clone() }
    }

    /// Relative value `h(x) = xᵀPx + 2rᵀx`.
    pub fn bias(&self, x: &DVector<f64>) -> f64 {
        quad(x, &self.p) + 2.0 * self.r.dot(x)
    }

    pub(crate) fn value_params(&self) -> ValueParams {
        ValueParams { p: self.p.clone(), r: self.r.clone(), z: 0.0 }
    }

    /// Assembles the steady quantities from a candidate ARE solution `p`:
    /// `r_ss = [I − Aᵀ(I+PΦ)⁻¹]⁻¹Aᵀ(I+PΦ)⁻¹PΞw̄`, the policy, `ρ` and the
    /// two spectral radii.
    pub fn from_p(
        p: DMatrix<f64>,
        sys: &LinearSystem,
        cost: &CostSpec,
        emp: &EmpiricalDistribution,
        lambda: f64,
        method: SolveMethod,
        iterations: usize,
    ) -> Result<Self> {
        let n = sys.n();
        let phi_m = phi(sys, &cost.r, lambda)?;
        let minv = solve(&(identity(n) + &p * &phi_m), &identity(n), "I + P Phi")?;
        let g = sys.a.transpose() * &minv;
        let pxw = &p * &sys.xi * emp.mean();
        let r = solve_vec(&(identity(n) - &g), &(&g * &pxw), "I - A'(I + P Phi)^-1")?;
        let rinv_bt = r_solve(&cost.r, &sys.b.transpose())?;
        let gain = -&rinv_bt * &minv * &p * &sys.a;
        let offset = -&rinv_bt * &minv * (&pxw + &r);
        let rho = z_increment(&ValueParams { p: p.clone(), r: r.clone(), z: 0.0 }, sys, &phi_m, emp, lambda)?;
        let closed_loop_spectral_radius = spectral_radius(&(&sys.a + &sys.b * &gain));
        let abar = solve(&(identity(n) + &phi_m * &p), &sys.a, "I + Phi P")?;
        Ok(Self {
            p,
            r,
            rho,
            gain,
            offset,
            lambda,
            closed_loop_spectral_radius,
            mean_state_gain_radius: spectral_radius(&abar),
            method,
            iterations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCertificate {
    pub phi_min_eig: f64,
    /// `Φ ⪰ 0` up to [`PHI_PSD_TOL`] relative to its largest eigenvalue.
    pub phi_psd: bool,
    /// `(A, Φ^{1/2})` stabilizable.
    pub stabilizable: bool,
    /// `(A, Q^{1/2})` observable.
    pub observable: bool,
    /// `λ − λ_max(ΞᵀQΞ)`. Every Riccati iterate started from `Q` dominates
    /// `Q`, so a nonpositive value rules the penalty out immediately.
    pub penalty_margin: f64,
}

impl AssumptionCertificate {
    pub fn holds(&self) -> bool {
        self.phi_psd && self.stabilizable && self.observable && self.penalty_margin > 0.0
    }
}

/// Relative tolerance for `Φ ⪰ 0`. When `range(Ξ)` leaves `range(B)`, `Φ`
/// has a negative eigenvalue of order `1/λ` for every finite `λ`; a looser
/// tolerance would let that pass once `λ` is large enough.
pub const PHI_PSD_TOL: f64 = 1e-14;

pub fn phi_is_psd(phi_m: &DMatrix<f64>) -> bool {
    min_sym_eig(phi_m) >= -PHI_PSD_TOL * (1.0 + max_sym_eig(phi_m).abs())
}

/// Stabilizability of `(a, g)` via the Kalman decomposition: the modes
/// outside the controllable subspace must be strictly stable.
pub fn is_stabilizable(a: &DMatrix<f64>, g: &DMatrix<f64>) -> bool {
    let (_, uncontrollable) = range_split(&controllability_matrix(a, g), KALMAN_TOL);
    if uncontrollable.ncols() == 0 {
        return true;
    }
    spectral_radius(&(uncontrollable.transpose() * a * &uncontrollable)) < 1.0
}

/// Observability of `(a, c)` via the rank of the observability matrix.
pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    rank(&controllability_matrix(&a.transpose(), &c.transpose()), KALMAN_TOL) == a.nrows()
}

pub fn check_assumptions(sys: &LinearSystem, cost: &CostSpec, lambda: f64) -> Result<AssumptionCertificate> {
    let phi_m = phi(sys, &cost.r, lambda)?;
    Ok(AssumptionCertificate {
        phi_min_eig: min_sym_eig(&phi_m),
        phi_psd: phi_is_psd(&phi_m),
        stabilizable: is_stabilizable(&sys.a, &psd_sqrt(&phi_m)),
        observable: is_observable(&sys.a, &psd_sqrt(&cost.q)),
        penalty_margin: penalty_margin(&cost.q, &sys.xi, lambda),
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("penalty {lambda} must be positive")))
    }
}

/// Iterates the Riccati map from `P = Q_f` until the relative step drops
/// below `tol`.
pub fn solve_are_fixed_point(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SteadySolution> {
    solve_are_fixed_point_from(sys, cost, emp, lambda, &cost.qf, max_iter, tol)
}

/// [`solve_are_fixed_point`] from an arbitrary PSD starting point.
pub fn solve_are_fixed_point_from(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
    p0: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<SteadySolution> {
    check_lambda(lambda)?;
    let (p, iterations) = fixed_point_iterate(sys, cost, lambda, p0, max_iter, tol)?;
    SteadySolution::from_p(p, sys, cost, emp, lambda, SolveMethod::FixedPoint, iterations)
}

fn fixed_point_iterate(
    sys: &LinearSystem,
    cost: &CostSpec,
    lambda: f64,
    p0: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(DMatrix<f64>, usize)> {
    let n = sys.n();
    if p0.nrows() != n || p0.ncols() != n {
        return Err(Error::DimensionMismatch(format!("initial P must be {n}x{n}")));
    }
    let phi_m = phi(sys, &cost.r, lambda)?;
    let at = sys.a.transpose();
    let map = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        Ok(symmetrize(&(&cost.q + &at * solve(&(identity(n) + p * &phi_m), &(p * &sys.a), "I + P Phi")?)))
    };
    let mut p = symmetrize(p0);
    for it in 1..=max_iter {
        check_penalty(&p, &sys.xi, lambda, it)?;
        let next = map(&p)?;
        let mut step = (&next - &p).norm();
        p = next;
        if !p.norm().is_finite() || p.norm() > 1e15 {
            return Err(Error::NoConvergence { max_iter: it });
        }
        if step <= tol * (1.0 + p.norm()) {
            // The stopping rule bounds the step, not the error; keep
            // contracting until rounding stalls the iteration.
            let mut extra = 0;
            while extra < POLISH_MAX_ITER && step > 0.0 {
                let next = map(&p)?;
                let next_step = (&next - &p).norm();
                if next_step >= step {
                    break;
                }
                p = next;
                step = next_step;
                extra += 1;
            }
            check_penalty(&p, &sys.xi, lambda, it + extra + 1)?;
            return Ok((p, it + extra));
        }
    }
    Err(Error::NoConvergence { max_iter })
}

/// Largest Frobenius distance between fixed-point limits started from
/// `Q_f`, `0` and `10·I`.
pub fn initialization_spread(
    sys: &LinearSystem,
    cost: &CostSpec,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<f64> {
    let n = sys.n();
    let starts = [cost.qf.clone(), DMatrix::zeros(n, n), identity(n) * 10.0];
    let limits = starts
        .iter()
        .map(|p0| fixed_point_iterate(sys, cost, lambda, p0, max_iter, tol).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    Ok(limits.iter().map(|p| (p - &limits[0]).norm()).fold(0.0, f64::max))
}

/// `H = [[A + ΦA⁻ᵀQ, −ΦA⁻ᵀ], [−A⁻ᵀQ, A⁻ᵀ]]`, whose stable invariant
/// subspace `[U₁; U₂]` gives `P = U₂U₁⁻¹`.
pub fn symplectic_matrix(sys: &LinearSystem, cost: &CostSpec, lambda: f64) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let cond = cond2(&sys.a);
    if !(cond < MAX_COND_A) {
        return Err(Error::SingularA { cond });
    }
    let phi_m = phi(sys, &cost.r, lambda)?;
    let a_it = solve(&sys.a.transpose(), &identity(n), "A'")?;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(&sys.a + &phi_m * &a_it * &cost.q));
    h.view_mut((0, n), (n, n)).copy_from(&(-&phi_m * &a_it));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&a_it * &cost.q));
    h.view_mut((n, n), (n, n)).copy_from(&a_it);
    Ok(h)
}

/// Largest relative distance from `1/γ` to the spectrum of `H`, over all
/// eigenvalues `γ`. Zero for an exactly symplectic spectrum.
pub fn symplectic_pairing_defect(sys: &LinearSystem, cost: &CostSpec, lambda: f64) -> Result<f64> {
    let eig = complex_eigenvalues(&symplectic_matrix(sys, cost, lambda)?);
    Ok(eig
        .iter()
        .map(|g| {
            let inv = Complex64::new(1.0, 0.0) / g;
            eig.iter().map(|h| (h - inv).norm()).fold(f64::INFINITY, f64::min) / (1.0 + inv.norm())
        })
        .fold(0.0, f64::max))
}

/// Stable eigenvalues of `h` grouped into clusters of numerically equal
/// values, as `(center, multiplicity)`.
fn stable_clusters(eig: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut stable: Vec<Complex64> = eig.iter().copied().filter(|g| g.norm() < 1.0).collect();
    stable.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut clusters: Vec<(Complex64, usize, Complex64)> = Vec::new();
    for g in stable {
        match clusters.iter_mut().find(|(c, _, _)| (c - g).norm() <= CLUSTER_TOL * (1.0 + g.norm())) {
            Some((_, count, sum)) => {
                *count += 1;
                *sum += g;
            }
            None => clusters.push((g, 1, g)),
        }
    }
    clusters.into_iter().map(|(_, count, sum)| (sum / count as f64, count)).collect()
}

fn stable_subspace_p(h: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let eig = complex_eigenvalues(h);
    let stable = eig.iter().filter(|g| g.norm() < 1.0).count();
    if stable != n {
        return Err(Error::UnstableSubspaceDefect { stable, expected: n });
    }
    let hc: DMatrix<Complex64> = h.map(|v| Complex64::new(v, 0.0));
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for (center, mult) in stable_clusters(&eig) {
        let shifted = &hc - DMatrix::<Complex64>::identity(2 * n, 2 * n) * center;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        columns.extend(idx.iter().take(mult).map(|&i| v_t.row(i).adjoint()));
    }
    let u = DMatrix::from_columns(&columns);
    let u1 = u.rows(0, n).into_owned();
    let u2 = u.rows(n, n).into_owned();
    let sv = u1.singular_values();
    let cond = if sv.min() == 0.0 { f64::INFINITY } else { sv.max() / sv.min() };
    if !(cond < crate::linalg::MAX_COND) {
        return Err(Error::IllConditionedU1 { cond });
    }
    let pt = u1.transpose().lu().solve(&u2.transpose()).ok_or(Error::IllConditionedU1 { cond: f64::INFINITY })?;
    let pc = pt.transpose();
    let re = pc.map(|z| z.re);
    let imag_norm = pc.map(|z| z.im).norm();
    if imag_norm > IMAG_TOL * (1.0 + re.norm()) {
        return Err(Error::ComplexResidue { imag_norm });
    }
    Ok(symmetrize(&re))
}

/// Stabilizing ARE solution from the stable eigenvectors of the
/// symplectic matrix. Needs a numerically nonsingular `A`.
pub fn solve_are_eigen(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
) -> Result<SteadySolution> {
    check_lambda(lambda)?;
    let h = symplectic_matrix(sys, cost, lambda)?;
    let p = stable_subspace_p(&h, sys.n())?;
    check_penalty(&p, &sys.xi, lambda, 0)?;
    SteadySolution::from_p(p, sys, cost, emp, lambda, SolveMethod::Eigen, 0)
}

/// Runs both solvers (concurrently with the `parallel` feature). The
/// eigen route is skipped for numerically singular `A`; when both succeed
/// they must agree to `1e-6` relative.
pub fn solve_steady(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
) -> Result<SteadySolution> {
    let fixed = || solve_are_fixed_point(sys, cost, emp, lambda, DEFAULT_MAX_ITER, DEFAULT_TOL);
    let eigen = || solve_are_eigen(sys, cost, emp, lambda);
    #[cfg(feature = "parallel")]
    let (fp, ev) = rayon::join(fixed, eigen);
    #[cfg(not(feature = "parallel"))]
    let (fp, ev) = (fixed(), eigen());
    let mut fp = fp?;
    match ev {
        Ok(ev) => {
            let gap = (&ev.p - &fp.p).norm();
            if gap > AGREEMENT_TOL * (1.0 + fp.p.norm()) {
                return Err(Error::AssumptionViolated(format!(
                    "fixed-point and eigen ARE solutions differ by {gap:.3e}"
                )));
            }
            fp.method = SolveMethod::Both;
            Ok(fp)
        }
        Err(Error::SingularA { .. }) => Ok(fp),
        Err(e) => Err(e),
    }
}

/// Steady solution of the standard LQG problem (`λ = ∞`), by iterating
/// `P ← Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn solve_are_lqg(
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    max_iter: usize,
    tol: f64,
) -> Result<SteadySolution> {
    let n = sys.n();
    let (a, b, xi) = (&sys.a, &sys.b, &sys.xi);
    let bt = b.transpose();
    let mut p = cost.qf.clone();
    let mut converged = None;
    for it in 1..=max_iter {
        let s = symmetrize(&(&cost.r + &bt * &p * b));
        let gain = -solve(&s, &(&bt * &p * a), "R + B'PB")?;
        let next = symmetrize(&(&cost.q + a.transpose() * &p * (a + b * &gain)));
        let step = (&next - &p).norm();
        p = next;
        if step <= tol * (1.0 + p.norm()) {
            converged = Some(it);
            break;
        }
    }
    let iterations = converged.ok_or(Error::NoConvergence { max_iter })?;
    let s = symmetrize(&(&cost.r + &bt * &p * b));
    let sinv_bt = solve(&s, &bt, "R + B'PB")?;
    let gain = -&sinv_bt * &p * a;
    // r = Aᵀ(I − PBS⁻¹Bᵀ)(PΞw̄ + r)
    let g = a.transpose() * (identity(n) - &p * b * &sinv_bt);
    let pxw = &p * xi * emp.mean();
    let r = solve_vec(&(identity(n) - &g), &(&g * &pxw), "I - A'(I - PBS^-1B')")?;
    let offset = -&sinv_bt * (&pxw + &r);
    let vp = ValueParams { p: p.clone(), r: r.clone(), z: 0.0 };
    let (stepped, _) = crate::finite_horizon::lqg_riccati_step(&vp, sys, cost, emp)?;
    let closed = spectral_radius(&(a + b * &gain));
    Ok(SteadySolution {
        p,
        r,
        rho: stepped.z,
        gain,
        offset,
        lambda: f64::INFINITY,
        closed_loop_spectral_radius: closed,
        mean_state_gain_radius: closed,
        method: SolveMethod::FixedPoint,
        iterations,
    })
}

/// Uniform worst-case distribution at state `x` under the steady policy.
pub fn steady_worst_case_distribution(
    x: &DVector<f64>,
    sol: &SteadySolution,
    sys: &LinearSystem,
    emp: &EmpiricalDistribution,
) -> Result<DiscreteDistribution> {
    let u = &sol.gain * x + &sol.offset;
    let pts = best_responses(&sol.value_params(), sys, emp, sol.lambda, x, &u)?;
    DiscreteDistribution::uniform(pts)
}

/// Pointwise H∞ worst-case disturbance `(λI − ΞᵀPΞ)⁻¹ΞᵀP(A + BK)x`.
pub fn steady_hinf_disturbance(x: &DVector<f64>, sol: &SteadySolution, sys: &LinearSystem) -> Result<DVector<f64>> {
    hinf_disturbance(&sol.p, &sol.gain, sys, sol.lambda, x)
}

/// Largest `|ρ + h(x) − [xᵀQx + min-max stage value]|` over `xs`, with
/// the stage problem evaluated at the closed-form saddle point.
pub fn bellman_residual(
    sol: &SteadySolution,
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
    lambda: f64,
    xs: &[DVector<f64>],
) -> Result<f64> {
    let h = sol.value_params();
    let mut worst: f64 = 0.0;
    for x in xs {
        let u = &sol.gain * x + &sol.offset;
        let ws = best_responses(&h, sys, emp, lambda, x, &u)?;
        let rhs = stage_objective(&h, sys, cost, emp, lambda, x, &u, &ws);
        worst = worst.max((sol.rho + sol.bias(x) - rhs).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub closed_loop_spectral_radius: f64,
    pub mean_state_gain_radius: f64,
    /// Limit of the expected state under the worst-case distribution.
    pub mean_state_limit: DVector<f64>,
}

impl StabilityCertificate {
    pub fn stable(&self) -> bool {
        self.closed_loop_spectral_radius < 1.0 && self.mean_state_gain_radius < 1.0
    }
}

/// Spectral radii plus the mean-state limit
/// `[I − (I+ΦP)⁻¹A]⁻¹[I − Φ(I + PΦ − Aᵀ)⁻¹P]Ξw̄`.
pub fn stability_certificates(
    sol: &SteadySolution,
    sys: &LinearSystem,
    cost: &CostSpec,
    emp: &EmpiricalDistribution,
) -> Result<StabilityCertificate> {
    let n = sys.n();
    let phi_m = phi(sys, &cost.r, sol.lambda)?;
    let p = &sol.p;
    let abar = solve(&(identity(n) + &phi_m * p), &sys.a, "I + Phi P")?;
    let inner = solve(&(identity(n) + p * &phi_m - sys.a.transpose()), p, "I + P Phi - A'")?;
    let rhs = (identity(n) - &phi_m * inner) * &sys.xi * emp.mean();
    let mean_state_limit = solve_vec(&(identity(n) - &abar), &rhs, "I - (I + Phi P)^-1 A")?;
    Ok(StabilityCertificate {
        closed_loop_spectral_radius: spectral_radius(&(&sys.a + &sys.b * &sol.gain)),
        mean_state_gain_radius: spectral_radius(&abar),
        mean_state_limit,
    })
}

/// Smallest penalty (within `tol`) for which the fixed-point ARE iteration
/// succeeds with a positive margin: the closed-loop H∞ attenuation level.
pub fn hinf_attenuation_level(sys: &LinearSystem, cost: &CostSpec, tol: f64) -> Result<f64> {
    hinf_attenuation_level_with(sys, cost, tol, DEFAULT_MAX_ITER)
}

pub fn hinf_attenuation_level_with(sys: &LinearSystem, cost: &CostSpec, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let ok = |lambda: f64| fixed_point_iterate(sys, cost, lambda, &cost.qf, max_iter, DEFAULT_TOL).is_ok();
    let mut lo = tol;
    if ok(lo) {
        return Ok(lo);
    }
    let mut hi = 1.0f64.max(2.0 * tol);
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_MAX {
            return Err(Error::NoFiniteLevel { lambda_max: LAMBDA_MAX });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Horizon;

    fn zero_emp() -> EmpiricalDistribution {
        EmpiricalDistribution::zero(1)
    }

    fn unit_scalar() -> (LinearSystem, CostSpec) {
        (LinearSystem::scalar(1.0, 1.0, 1.0), CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Infinite))
    }

    #[test]
    fn scalar_fixed_point_root() {
        let (sys, cost) = unit_scalar();
        let sol = solve_are_fixed_point(&sys, &cost, &zero_emp(), 10.0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let p = sol.p[(0, 0)];
        // 0.9 p² − 0.9 p − 1 = 0
        let root = (0.9 + (0.81f64 + 3.6).sqrt()) / 1.8;
        assert!((p - root).abs() < 1e-10);
        assert!((1.0 + p / (1.0 + 0.9 * p) - p).abs() < 1e-10);
        assert_eq!(sol.r[0], 0.0);
        assert_eq!(sol.offset[0], 0.0);
    }

    #[test]
    fn scalar_eigen_agrees() {
        let (sys, cost) = unit_scalar();
        let fp = solve_are_fixed_point(&sys, &cost, &zero_emp(), 10.0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let ev = solve_are_eigen(&sys, &cost, &zero_emp(), 10.0).unwrap();
        assert!((fp.p[(0, 0)] - ev.p[(0, 0)]).abs() < 1e-8);
        assert_eq!(solve_steady(&sys, &cost, &zero_emp(), 10.0).unwrap().method, SolveMethod::Both);
    }

    #[test]
    fn no_disturbance_is_lqr() {
        let sys = LinearSystem::scalar(1.2, 1.0, 0.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Infinite);
        let emp = EmpiricalDistribution::new(vec![DVector::from_element(1, 0.4)]).unwrap();
        let sol = solve_are_fixed_point(&sys, &cost, &emp, 3.0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        // p = 1 + a² p / (1 + p)
        let a2: f64 = 1.44;
        let lqr = (a2 + (a2 * a2 + 4.0).sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - lqr).abs() < 1e-10);
        assert_eq!(sol.rho, 0.0);
        assert_eq!(sol.r[0], 0.0);
    }

    #[test]
    fn kalman_tests() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        assert!(is_stabilizable(&a, &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))));
        assert!(!is_stabilizable(&a, &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]))));
        assert!(is_stabilizable(&a, &identity(2)));
        assert!(is_observable(&a, &identity(2)));
        assert!(!is_observable(&a, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])));
    }

    #[test]
    fn certificate_flags_negative_phi() {
        let (sys, cost) = unit_scalar();
        let cert = check_assumptions(&sys, &cost, 0.5).unwrap();
        assert!(cert.phi_min_eig < 0.0);
        assert!(!cert.holds());
        let full = LinearSystem::new(identity(2) * 3.0, identity(2), DMatrix::zeros(2, 1)).unwrap();
        let c2 = CostSpec::stationary(identity(2), identity(2)).unwrap();
        let cert = check_assumptions(&full, &c2, 1.0).unwrap();
        assert!((cert.phi_min_eig - 1.0).abs() < 1e-14 && cert.stabilizable);
    }

    #[test]
    fn bellman_residual_at_origin_and_perturbed() {
        let (sys, cost) = unit_scalar();
        let emp =
            EmpiricalDistribution::new(vec![DVector::from_element(1, 0.3), DVector::from_element(1, -0.1)]).unwrap();
        let sol = solve_are_fixed_point(&sys, &cost, &emp, 10.0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let xs: Vec<_> = [-2.0, 0.0, 0.7, 3.0].iter().map(|&v| DVector::from_element(1, v)).collect();
        assert!(bellman_residual(&sol, &sys, &cost, &emp, 10.0, &xs).unwrap() <= 1e-10 * (1.0 + sol.rho.abs()));
        let mut bad = sol.clone();
        bad.p += identity(1) * 0.1;
        assert!(bellman_residual(&bad, &sys, &cost, &emp, 10.0, &xs).unwrap() > 1e-3);
    }

    #[test]
    fn attenuation_level_brackets_scalar_root() {
        let (sys, cost) = unit_scalar();
        let tol = 1e-6;
        let level = hinf_attenuation_level(&sys, &cost, tol).unwrap();
        // λ = 1/2 + √(1/4 + λ/(λ−1)) at the critical point
        let f = |l: f64| l - 0.5 - (0.25 + l / (l - 1.0)).sqrt();
        let (mut lo, mut hi) = (1.0 + 1e-9, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((level - lo).abs() <= 2.0 * tol, "{level} vs {lo}");
        let ok = |l: f64| solve_are_fixed_point(&sys, &cost, &zero_emp(), l, DEFAULT_MAX_ITER, DEFAULT_TOL).is_ok();
        assert!(ok(level + tol));
        assert!(!ok(level - 2.0 * tol));
    }

    #[test]
    fn attenuation_level_without_disturbance() {
        let sys = LinearSystem::scalar(1.0, 1.0, 0.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Infinite);
        assert_eq!(hinf_attenuation_level(&sys, &cost, 1e-6).unwrap(), 1e-6);
    }

    #[test]
    fn singular_a_is_rejected_by_eigen_route() {
        let sys = LinearSystem::scalar(0.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Infinite);
        assert!(matches!(solve_are_eigen(&sys, &cost, &zero_emp(), 10.0), Err(Error::SingularA { .. })));
        assert_eq!(solve_steady(&sys, &cost, &zero_emp(), 10.0).unwrap().method, SolveMethod::FixedPoint);
    }
}
