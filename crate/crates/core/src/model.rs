//! Problem data: plant, cost, empirical and discrete distributions, affine
//! policies, plus the exact stage-cost evaluators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad, sym_eigenvalues, symmetrize};
use crate::robustness::wasserstein2;

/// Relative symmetry tolerance applied to every cost matrix on ingestion.
pub const TOL_SYM: f64 = 1e-9;

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} has non-finite entries")))
    }
}

/// Plant `x_{t+1} = A x_t + B u_t + Ξ w_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub xi: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, xi: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("B is {}x{}, expected {n}xm", b.nrows(), b.ncols())));
        }
        if xi.nrows() != n || xi.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("Xi is {}x{}, expected {n}xk", xi.nrows(), xi.ncols())));
        }
        check_finite("A", &a)?;
        check_finite("B", &b)?;
        check_finite("Xi", &xi)?;
        Ok(Self { a, b, xi })
    }

    /// Scalar plant, handy for examples and tests.
    pub fn scalar(a: f64, b: f64, xi: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), DMatrix::from_element(1, 1, xi))
            .expect("scalar system is always consistent")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn k(&self) -> usize {
        self.xi.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.xi * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// Quadratic cost weights. Matrices are symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub horizon: Horizon,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, horizon: Horizon) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r), ("Qf", &qf)] {
            if m.nrows() != m.ncols() {
                return Err(Error::DimensionMismatch(format!("{name} is {}x{}", m.nrows(), m.ncols())));
            }
            check_finite(name, m)?;
        }
        if q.nrows() != qf.nrows() {
            return Err(Error::DimensionMismatch("Q and Qf differ in size".into()));
        }
        if let Horizon::Finite(0) = horizon {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(Self { q: symmetrize(&q), r: symmetrize(&r), qf: symmetrize(&qf), horizon })
    }

    /// `Q_f = Q`, the default for steady-state problems.
    pub fn stationary(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        Self::new(q.clone(), r, q, Horizon::Infinite)
    }

    pub fn scalar(q: f64, r: f64, qf: f64, horizon: Horizon) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DMatrix::from_element(1, 1, qf),
            horizon,
        )
        .expect("scalar cost is always consistent")
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Uniform empirical distribution over `N` samples with cached moments.
///
/// `second_moment` is the raw moment `E[w wᵀ]`, not the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    support: Vec<DVector<f64>>,
    mean: DVector<f64>,
    second_moment: DMatrix<f64>,
}

impl EmpiricalDistribution {
    pub fn new(support: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = support.first() else {
            return Err(Error::InvalidParameter("empirical distribution needs N >= 1 samples".into()));
        };
        let k = first.len();
        if k == 0 {
            return Err(Error::DimensionMismatch("samples have dimension 0".into()));
        }
        for (i, w) in support.iter().enumerate() {
            if w.len() != k {
                return Err(Error::DimensionMismatch(format!("sample {i} has dimension {}, expected {k}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
            }
        }
        let n = support.len() as f64;
        let mean = support.iter().fold(DVector::zeros(k), |acc, w| acc + w) / n;
        let second_moment = support.iter().fold(DMatrix::zeros(k, k), |acc, w| acc + w * w.transpose()) / n;
        Ok(Self { support, mean, second_moment })
    }

    /// Single zero atom in `R^k`; the empirical data of a pure H∞ problem.
    pub fn zero(k: usize) -> Self {
        Self::new(vec![DVector::zeros(k)]).expect("k > 0")
    }

    pub fn support(&self) -> &[DVector<f64>] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn second_moment(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    pub fn to_discrete(&self) -> DiscreteDistribution {
        DiscreteDistribution::uniform(self.support.clone()).expect("validated support")
    }
}

/// Finitely supported distribution with explicit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub support: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub const WEIGHT_TOL: f64 = 1e-9;

    pub fn new(support: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} support points with {} weights",
                support.len(),
                weights.len()
            )));
        }
        let k = support[0].len();
        if support.iter().any(|w| w.len() != k) {
            return Err(Error::DimensionMismatch("support points differ in dimension".into()));
        }
        if support.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("support point is not finite".into()));
        }
        if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > Self::WEIGHT_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        Ok(Self { support, weights })
    }

    pub fn uniform(support: Vec<DVector<f64>>) -> Result<Self> {
        let n = support.len().max(1);
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn dirac(w: DVector<f64>) -> Self {
        Self::new(vec![w], vec![1.0]).expect("single atom")
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.support.iter().zip(&self.weights).fold(DVector::zeros(self.dim()), |acc, (w, p)| acc + w * *p)
    }

    pub fn is_uniform(&self) -> bool {
        let p = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - p).abs() <= 1e-15)
    }
}

/// `u = K x + L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffinePolicy {
    pub fn new(gain: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if gain.nrows() != offset.len() {
            return Err(Error::DimensionMismatch(format!(
                "gain is {}x{}, offset has {} entries",
                gain.nrows(),
                gain.ncols(),
                offset.len()
            )));
        }
        Ok(Self { gain, offset })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FindingKind {
    DimensionMismatch,
    NotSymmetric,
    NotPsd,
    NotPd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    /// Smallest eigenvalue of Q, R, Qf (after symmetrization).
    pub min_eigenvalues: Vec<(String, f64)>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }

    fn push(&mut self, kind: FindingKind, message: String) {
        self.findings.push(Finding { kind, message });
    }
}

/// Collects every consistency problem instead of stopping at the first.
pub fn validate_problem(sys: &LinearSystem, cost: &CostSpec, emp: &EmpiricalDistribution) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, m, k) = (sys.n(), sys.m(), sys.k());
    if cost.q.nrows() != n {
        report.push(FindingKind::DimensionMismatch, format!("Q is {0}x{0}, system has n={n}", cost.q.nrows()));
    }
    if cost.qf.nrows() != n {
        report.push(FindingKind::DimensionMismatch, format!("Qf is {0}x{0}, system has n={n}", cost.qf.nrows()));
    }
    if cost.r.nrows() != m {
        report.push(FindingKind::DimensionMismatch, format!("R is {0}x{0}, system has m={m}", cost.r.nrows()));
    }
    if emp.dim() != k {
        report.push(FindingKind::DimensionMismatch, format!("samples live in R^{}, Xi has k={k} columns", emp.dim()));
    }
    for (name, mat, strict) in [("Q", &cost.q, false), ("R", &cost.r, true), ("Qf", &cost.qf, false)] {
        let scale = mat.norm().max(1.0);
        let asym = (mat - mat.transpose()).norm();
        if asym > TOL_SYM * scale {
            report.push(FindingKind::NotSymmetric, format!("{name} asymmetry {asym:.3e}"));
        }
        let min = sym_eigenvalues(mat).first().copied().unwrap_or(0.0);
        report.min_eigenvalues.push((name.to_string(), min));
        if strict {
            if min <= TOL_SYM * scale {
                report.push(FindingKind::NotPd, format!("{name} not PD (min eigenvalue {min:.3e})"));
            }
        } else if min < -TOL_SYM * scale {
            report.push(FindingKind::NotPsd, format!("{name} not PSD (min eigenvalue {min:.3e})"));
        }
    }
    report
}

/// `xᵀQx + uᵀRu`.
pub fn stage_cost(x: &DVector<f64>, u: &DVector<f64>, cost: &CostSpec) -> Result<f64> {
    if x.len() != cost.q.nrows() || u.len() != cost.r.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "stage cost with x in R^{}, u in R^{}; Q is {}x{}, R is {}x{}",
            x.len(),
            u.len(),
            cost.q.nrows(),
            cost.q.nrows(),
            cost.r.nrows(),
            cost.r.nrows()
        )));
    }
    Ok(quad(x, &cost.q) + quad(u, &cost.r))
}

/// `xᵀ Q_f x`.
pub fn terminal_cost(x: &DVector<f64>, cost: &CostSpec) -> Result<f64> {
    if x.len() != cost.qf.nrows() {
        return Err(Error::DimensionMismatch(format!("terminal cost with x in R^{}", x.len())));
    }
    Ok(quad(x, &cost.qf))
}

/// `xᵀQx + uᵀRu − λ W₂(μ, ν)²` with the exact transport distance.
pub fn penalized_stage_cost(
    x: &DVector<f64>,
    u: &DVector<f64>,
    mu: &DiscreteDistribution,
    emp: &EmpiricalDistribution,
    lambda: f64,
    cost: &CostSpec,
) -> Result<f64> {
    let w2 = wasserstein2(mu, &emp.to_discrete())?;
    Ok(stage_cost(x, u, cost)? - lambda * w2 * w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state() -> (LinearSystem, CostSpec, EmpiricalDistribution) {
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let cost = CostSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            Horizon::Finite(5),
        )
        .unwrap();
        let emp =
            EmpiricalDistribution::new(vec![DVector::from_element(1, 0.1), DVector::from_element(1, -0.2)]).unwrap();
        (sys, cost, emp)
    }

    #[test]
    fn valid_problem_reports_ok() {
        let (sys, cost, emp) = two_state();
        assert!(validate_problem(&sys, &cost, &emp).ok());
    }

    #[test]
    fn singular_r_is_flagged() {
        let (sys, mut cost, emp) = two_state();
        cost.r = DMatrix::zeros(1, 1);
        let report = validate_problem(&sys, &cost, &emp);
        assert!(report.has(FindingKind::NotPd));
        assert!(report.findings.iter().any(|f| f.message.contains("R not PD")));
    }

    #[test]
    fn sample_dimension_mismatch_is_flagged() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::zeros(2, 3)).unwrap();
        let cost = CostSpec::stationary(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let emp = EmpiricalDistribution::new(vec![DVector::zeros(2)]).unwrap();
        assert!(validate_problem(&sys, &cost, &emp).has(FindingKind::DimensionMismatch));
    }

    #[test]
    fn inconsistent_system_is_rejected() {
        assert!(LinearSystem::new(DMatrix::identity(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn stage_cost_examples() {
        let cost = CostSpec::scalar(1.0, 2.0, 1.0, Horizon::Finite(1));
        let z = DVector::zeros(1);
        assert_eq!(stage_cost(&z, &z, &cost).unwrap(), 0.0);
        let x = DVector::from_element(1, 3.0);
        let u = DVector::from_element(1, 1.0);
        assert_eq!(stage_cost(&x, &u, &cost).unwrap(), 11.0);
        assert!(stage_cost(&DVector::zeros(2), &u, &cost).is_err());
    }

    #[test]
    fn penalized_cost_at_empirical_equals_stage_cost() {
        let (_, cost, emp) = two_state();
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let u = DVector::from_element(1, 0.5);
        let plain = stage_cost(&x, &u, &cost).unwrap();
        let pen = penalized_stage_cost(&x, &u, &emp.to_discrete(), &emp, 4.0, &cost).unwrap();
        assert!((plain - pen).abs() < 1e-12);
    }

    #[test]
    fn penalized_cost_single_atom() {
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(1));
        let emp = EmpiricalDistribution::new(vec![DVector::from_element(1, 0.5)]).unwrap();
        let mu = DiscreteDistribution::dirac(DVector::from_element(1, 2.0));
        let x = DVector::from_element(1, 1.0);
        let u = DVector::from_element(1, 1.0);
        let v = penalized_stage_cost(&x, &u, &mu, &emp, 3.0, &cost).unwrap();
        assert!((v - (2.0 - 3.0 * 1.5 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn penalized_cost_matches_permutation_brute_force() {
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(1));
        let pts = [0.3, -1.2, 2.0];
        let emp = EmpiricalDistribution::new(pts.iter().map(|&v| DVector::from_element(1, v)).collect()).unwrap();
        let mu_pts = [1.9, 0.1, -1.0];
        let mu = DiscreteDistribution::uniform(mu_pts.iter().map(|&v| DVector::from_element(1, v)).collect()).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| (mu_pts[i] - pts[p[i]]).powi(2)).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        let x = DVector::from_element(1, 0.7);
        let u = DVector::from_element(1, -0.4);
        let v = penalized_stage_cost(&x, &u, &mu, &emp, 2.5, &cost).unwrap();
        assert!((v - (0.49 + 0.16 - 2.5 * best)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stage_cost_matches_elementwise_sum(
            xs in proptest::collection::vec(-10.0f64..10.0, 3),
            us in proptest::collection::vec(-10.0f64..10.0, 2),
            qs in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let g = DMatrix::from_row_slice(3, 3, &qs);
            let q = &g * g.transpose();
            let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
            let cost = CostSpec::new(q.clone(), r.clone(), q.clone(), Horizon::Infinite).unwrap();
            let x = DVector::from_vec(xs.clone());
            let u = DVector::from_vec(us.clone());
            let mut oracle = 0.0;
            for i in 0..3 { for j in 0..3 { oracle += xs[i] * q[(i, j)] * xs[j]; } }
            for i in 0..2 { for j in 0..2 { oracle += us[i] * r[(i, j)] * us[j]; } }
            let v = stage_cost(&x, &u, &cost).unwrap();
            prop_assert!((v - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
            prop_assert!(v >= -1e-12);
        }

        #[test]
        fn cached_moments_match_recomputation(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 1..8)
        ) {
            let support: Vec<_> = pts.iter().map(|p| DVector::from_vec(p.clone())).collect();
            let emp = EmpiricalDistribution::new(support.clone()).unwrap();
            let n = support.len() as f64;
            for i in 0..2 {
                let m: f64 = pts.iter().map(|p| p[i]).sum::<f64>() / n;
                prop_assert!((emp.mean()[i] - m).abs() <= 1e-12);
                for j in 0..2 {
                    let s: f64 = pts.iter().map(|p| p[i] * p[j]).sum::<f64>() / n;
                    prop_assert!((emp.second_moment()[(i, j)] - s).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn stage_cost_nonnegative_on_random_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let cost =
            CostSpec::new(&g * g.transpose(), DMatrix::identity(2, 2), DMatrix::identity(3, 3), Horizon::Infinite)
                .unwrap();
        for _ in 0..1000 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-100.0..100.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-100.0..100.0));
            assert!(stage_cost(&x, &u, &cost).unwrap() >= -1e-9);
        }
    }
}
