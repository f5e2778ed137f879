//! Closed-loop rollouts with pluggable disturbance policies, Monte-Carlo
//! cost and reliability estimation, and trajectory metrics.
//!
//! Every run draws from its own ChaCha8 stream, `seed` selecting the key
//! and the run index selecting the stream, so results do not depend on how
//! runs are scheduled across threads. Reductions use pairwise summation in
//! run order for the same reason.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_horizon::{best_responses, hinf_disturbance, solve_finite, FiniteSolution, ValueParams};
use crate::infinite_horizon::SteadySolution;
use crate::linalg::{psd_sqrt, quad, symmetrize};
use crate::model::{AffinePolicy, CostSpec, EmpiricalDistribution, Horizon, LinearSystem};
use crate::tuning::optimize_lambda_finite;

/// Any state entry beyond this magnitude aborts the rollout.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Default settling band, as a fraction of the initial deviation.
pub const SETTLING_THRESHOLD: f64 = 0.03;

/// Random generator for run `run` of an experiment seeded with `seed`.
pub fn rng_for(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Summation by recursive halving; the result depends only on the order
/// of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Disturbance law of the true (data-generating) process.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueDistribution {
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64>, factor: DMatrix<f64> },
    Uniform(EmpiricalDistribution),
}

impl TrueDistribution {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch("covariance does not match mean".into()));
        }
        let cov = symmetrize(&cov);
        let factor = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => psd_sqrt(&cov),
        };
        Ok(Self::Gaussian { mean, cov, factor })
    }

    /// `N(mean·𝟙, std²·I)` in `R^k`.
    pub fn isotropic(k: usize, mean: f64, std: f64) -> Self {
        let cov = DMatrix::identity(k, k) * (std * std);
        Self::Gaussian { mean: DVector::from_element(k, mean), factor: DMatrix::identity(k, k) * std, cov }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Uniform(e) => e.dim(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::Uniform(e) => e.mean().clone(),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::Gaussian { cov, .. } => cov.clone(),
            Self::Uniform(e) => {
                let m = e.mean();
                e.second_moment() - m * m.transpose()
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            Self::Gaussian { mean, factor, .. } => {
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                mean + factor * z
            }
            Self::Uniform(e) => e.support()[rng.random_range(0..e.len())].clone(),
        }
    }

    pub fn draw_empirical(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::new((0..n).map(|_| self.sample(rng)).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ControlPolicy<'a> {
    TimeVarying(&'a [AffinePolicy]),
    Stationary(&'a AffinePolicy),
}

impl<'a> ControlPolicy<'a> {
    fn at(&self, t: usize) -> Result<&'a AffinePolicy> {
        match self {
            Self::TimeVarying(ps) => {
                ps.get(t).ok_or_else(|| Error::InvalidParameter(format!("no policy for stage {t} (have {})", ps.len())))
            }
            Self::Stationary(p) => Ok(p),
        }
    }
}

impl<'a> From<&'a FiniteSolution> for ControlPolicy<'a> {
    fn from(sol: &'a FiniteSolution) -> Self {
        Self::TimeVarying(&sol.policies)
    }
}

/// Maps `(t, x)` to the support points of a distribution-valued policy,
/// one per empirical sample and matched to it by index.
pub type SupportMap<'a> = &'a (dyn Fn(usize, &DVector<f64>) -> Result<Vec<DVector<f64>>> + Sync);

#[derive(Clone, Copy)]
pub enum DisturbancePolicy<'a> {
    /// i.i.d. draws from the true distribution.
    Sampler(&'a TrueDistribution),
    /// i.i.d. draws from the empirical distribution.
    Empirical(&'a EmpiricalDistribution),
    /// Worst-case distribution of a finite-horizon solution, evaluated at
    /// the current state.
    WorstCaseFinite {
        sol: &'a FiniteSolution,
        emp: &'a EmpiricalDistribution,
    },
    WorstCaseSteady {
        sol: &'a SteadySolution,
        emp: &'a EmpiricalDistribution,
    },
    HinfFinite(&'a FiniteSolution),
    HinfSteady(&'a SteadySolution),
    /// Uniform distribution on `map(t, x)`, charged `λ` times the
    /// per-sample transport cost to the empirical support.
    Transport {
        map: SupportMap<'a>,
        emp: &'a EmpiricalDistribution,
        lambda: f64,
    },
    FixedSequence(&'a [DVector<f64>]),
}

/// Moved support points, the samples they were moved from, and the penalty λ.
type Support<'a> = (Vec<DVector<f64>>, &'a EmpiricalDistribution, f64);

impl<'a> DisturbancePolicy<'a> {
    fn support(&self, t: usize, x: &DVector<f64>, sys: &LinearSystem) -> Result<Option<Support<'a>>> {
        Ok(match *self {
            Self::WorstCaseFinite { sol, emp } => {
                let pol =
                    sol.policies.get(t).ok_or_else(|| Error::InvalidParameter(format!("stage {t} beyond horizon")))?;
                let u = pol.apply(x);
                Some((best_responses(&sol.values[t + 1], sys, emp, sol.lambda, x, &u)?, emp, sol.lambda))
            }
            Self::WorstCaseSteady { sol, emp } => {
                let u = &sol.gain * x + &sol.offset;
                let h = ValueParams { p: sol.p.clone(), r: sol.r.clone(), z: 0.0 };
                Some((best_responses(&h, sys, emp, sol.lambda, x, &u)?, emp, sol.lambda))
            }
            Self::Transport { map, emp, lambda } => Some((map(t, x)?, emp, lambda)),
            _ => None,
        })
    }

    /// Disturbance for stage `t` at state `x`, plus the transport penalty
    /// booked against it.
    fn draw(
        &self,
        t: usize,
        x: &DVector<f64>,
        sys: &LinearSystem,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, f64)> {
        if let Some((pts, emp, lambda)) = self.support(t, x, sys)? {
            let penalty = if lambda.is_infinite() {
                0.0
            } else {
                let moved: Vec<f64> = pts.iter().zip(emp.support()).map(|(w, wh)| (w - wh).norm_squared()).collect();
                lambda * pairwise_sum(&moved) / pts.len() as f64
            };
            let i = rng.random_range(0..pts.len());
            return Ok((pts[i].clone(), penalty));
        }
        let w = match *self {
            Self::Sampler(d) => d.sample(rng),
            Self::Empirical(e) => e.support()[rng.random_range(0..e.len())].clone(),
            Self::HinfFinite(sol) => {
                let pol =
                    sol.policies.get(t).ok_or_else(|| Error::InvalidParameter(format!("stage {t} beyond horizon")))?;
                hinf_disturbance(&sol.values[t + 1].p, &pol.gain, sys, sol.lambda, x)?
            }
            Self::HinfSteady(sol) => hinf_disturbance(&sol.p, &sol.gain, sys, sol.lambda, x)?,
            Self::FixedSequence(seq) => seq
                .get(t)
                .cloned()
                .ok_or_else(|| Error::InvalidParameter(format!("fixed sequence has no entry for stage {t}")))?,
            _ => unreachable!("transport policies handled above"),
        };
        Ok((w, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    /// `x_tᵀQx_t + u_tᵀRu_t` for each stage.
    pub per_stage_costs: Vec<f64>,
    /// `x_Tᵀ Q_f x_T` for finite-horizon costs, zero otherwise.
    pub terminal_cost: f64,
    pub total_cost: f64,
    /// `total_cost` minus the booked transport penalties.
    pub penalized_cost: f64,
}

/// Closed-loop trajectory for `horizon` stages on run stream 0 of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    dist: DisturbancePolicy<'_>,
    x0: &DVector<f64>,
    horizon: usize,
    seed: u64,
) -> Result<RolloutResult> {
    rollout_with_rng(sys, cost, control, dist, x0, horizon, &mut rng_for(seed, 0))
}

pub fn rollout_with_rng(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    dist: DisturbancePolicy<'_>,
    x0: &DVector<f64>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutResult> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!("initial state in R^{}, system has n={}", x0.len(), sys.n())));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut disturbances = Vec::with_capacity(horizon);
    let mut per_stage_costs = Vec::with_capacity(horizon);
    let mut penalties = Vec::with_capacity(horizon);
    states.push(x0.clone());
    for t in 0..horizon {
        let x = &states[t];
        let u = control.at(t)?.apply(x);
        let (w, pen) = dist.draw(t, x, sys, rng)?;
        if w.len() != sys.k() {
            return Err(Error::DimensionMismatch(format!("disturbance in R^{}, system has k={}", w.len(), sys.k())));
        }
        per_stage_costs.push(quad(x, &cost.q) + quad(&u, &cost.r));
        let next = sys.step(x, &u, &w);
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::NonFiniteState { run: 0, step: t + 1 });
        }
        penalties.push(pen);
        inputs.push(u);
        disturbances.push(w);
        states.push(next);
    }
    let terminal_cost = match cost.horizon {
        Horizon::Finite(_) => quad(&states[horizon], &cost.qf),
        Horizon::Infinite => 0.0,
    };
    let total_cost = pairwise_sum(&per_stage_costs) + terminal_cost;
    let penalized_cost = total_cost - pairwise_sum(&penalties);
    Ok(RolloutResult { states, inputs, disturbances, per_stage_costs, terminal_cost, total_cost, penalized_cost })
}

/// Runs `f(run)` for every run index, in parallel with the `parallel`
/// feature, returning results in run order.
pub fn for_each_run<T: Send>(n_runs: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_runs).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_runs).map(f).collect()
    }
}

/// `n_runs` independent rollouts; run `i` uses stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_runs(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    dist: DisturbancePolicy<'_>,
    x0: &DVector<f64>,
    horizon: usize,
    n_runs: usize,
    seed: u64,
) -> Result<Vec<RolloutResult>> {
    for_each_run(n_runs, |run| {
        rollout_with_rng(sys, cost, control, dist, x0, horizon, &mut rng_for(seed, run as u64)).map_err(|e| match e {
            Error::NonFiniteState { step, .. } => Error::NonFiniteState { run, step },
            other => other,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_runs`; zero for a single run.
    pub std_error: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        Self { mean, std_error, n_runs: n, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Total,
    /// Cost minus booked transport penalties.
    Penalized,
}

/// Monte-Carlo estimate of the per-stage average cost `total_cost / T`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_cost(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    dist: DisturbancePolicy<'_>,
    x0: &DVector<f64>,
    horizon: usize,
    n_runs: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    estimate(sys, cost, control, dist, x0, horizon, n_runs, seed, CostKind::Total)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    dist: DisturbancePolicy<'_>,
    x0: &DVector<f64>,
    horizon: usize,
    n_runs: usize,
    seed: u64,
    kind: CostKind,
) -> Result<MonteCarloEstimate> {
    if n_runs == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("need at least one run and one stage".into()));
    }
    let per_run = for_each_run(n_runs, |run| {
        let r = rollout_with_rng(sys, cost, control, dist, x0, horizon, &mut rng_for(seed, run as u64)).map_err(
            |e| match e {
                Error::NonFiniteState { step, .. } => Error::NonFiniteState { run, step },
                other => other,
            },
        )?;
        let c = match kind {
            CostKind::Total => r.total_cost,
            CostKind::Penalized => r.penalized_cost,
        };
        Ok(c / horizon as f64)
    })?;
    Ok(MonteCarloEstimate::from_samples(&per_run, seed))
}

/// Exact `E[total cost] / T` for i.i.d. disturbances with the given mean
/// and covariance, by propagating the state mean and covariance.
pub fn expected_cost_exact(
    sys: &LinearSystem,
    cost: &CostSpec,
    control: ControlPolicy<'_>,
    w_mean: &DVector<f64>,
    w_cov: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let mut mu = x0.clone();
    let mut sigma = DMatrix::zeros(sys.n(), sys.n());
    let noise = &sys.xi * w_cov * sys.xi.transpose();
    let drift = &sys.xi * w_mean;
    let mut stages = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let pol = control.at(t)?;
        let u = pol.apply(&mu);
        stages.push(
            quad(&mu, &cost.q)
                + (&cost.q * &sigma).trace()
                + quad(&u, &cost.r)
                + (pol.gain.transpose() * &cost.r * &pol.gain * &sigma).trace(),
        );
        let acl = &sys.a + &sys.b * &pol.gain;
        mu = &sys.a * &mu + &sys.b * u + &drift;
        sigma = symmetrize(&(&acl * sigma * acl.transpose() + &noise));
    }
    let terminal = match cost.horizon {
        Horizon::Finite(_) => quad(&mu, &cost.qf) + (&cost.qf * &sigma).trace(),
        Horizon::Infinite => 0.0,
    };
    Ok((pairwise_sum(&stages) + terminal) / horizon as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTrial {
    pub lambda_star: f64,
    /// `λ*θ² + V(x0; λ*)`.
    pub bound: f64,
    /// Exact expected cost of the synthesized policy under the truth.
    pub out_of_sample: f64,
}

impl ReliabilityTrial {
    pub fn passes(&self) -> bool {
        self.out_of_sample <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub theta: f64,
    pub beta: f64,
    /// Fraction of trials whose out-of-sample cost respects the bound.
    pub reliability: f64,
    /// `reliability ≥ 1 − β`.
    pub meets_target: bool,
    pub trials: Vec<ReliabilityTrial>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReliabilitySetup<'a> {
    pub sys: &'a LinearSystem,
    pub cost: &'a CostSpec,
    pub truth: &'a TrueDistribution,
    pub x0: &'a DVector<f64>,
    pub n_samples: usize,
    pub horizon: usize,
    pub tune_tol: f64,
}

/// Fraction of trials in which a policy synthesized from `N` fresh samples
/// (with `λ*` re-tuned for those samples) meets its own guaranteed-cost
/// bound under the true distribution. Trial `i` draws its samples from
/// stream `i` of `seed`, so sweeps over `θ` share the same data sets.
pub fn estimate_reliability(
    setup: &ReliabilitySetup<'_>,
    theta: f64,
    beta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<ReliabilityReport> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidRisk(beta));
    }
    if n_trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let w_mean = setup.truth.mean();
    let w_cov = setup.truth.covariance();
    let cost = setup.cost.clone().with_horizon(Horizon::Finite(setup.horizon));
    let trials = for_each_run(n_trials, |trial| {
        let emp = setup.truth.draw_empirical(setup.n_samples, &mut rng_for(seed, trial as u64))?;
        let sched = emp.into();
        let tuned = optimize_lambda_finite(setup.sys, &cost, &sched, setup.horizon, setup.x0, theta, setup.tune_tol)?;
        let sol = solve_finite(setup.sys, &cost, &sched, tuned.lambda_star)?;
        let out = expected_cost_exact(setup.sys, &cost, (&sol).into(), &w_mean, &w_cov, setup.x0, setup.horizon)?;
        Ok(ReliabilityTrial { lambda_star: tuned.lambda_star, bound: tuned.upper_bound, out_of_sample: out })
    })?;
    let passes = trials.iter().filter(|t| t.passes()).count();
    let reliability = passes as f64 / n_trials as f64;
    Ok(ReliabilityReport { theta, beta, reliability, meets_target: reliability >= 1.0 - beta, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SettlingTime {
    Settled(f64),
    /// The trace is still outside the band at the final sample.
    NeverSettles {
        horizon: f64,
    },
}

impl SettlingTime {
    pub fn seconds(&self) -> f64 {
        match *self {
            Self::Settled(s) => s,
            Self::NeverSettles { horizon } => horizon,
        }
    }

    pub fn settled(&self) -> bool {
        matches!(self, Self::Settled(_))
    }
}

/// Time after which `|trace|` stays within `threshold · reference` for the
/// rest of the trace: one step past the last violation.
pub fn settling_time(trace: &[f64], reference: f64, threshold: f64, dt: f64) -> SettlingTime {
    let band = threshold * reference;
    match trace.iter().rposition(|v| v.abs() > band) {
        None => SettlingTime::Settled(0.0),
        Some(last) if last + 1 == trace.len() => SettlingTime::NeverSettles { horizon: trace.len() as f64 * dt },
        Some(last) => SettlingTime::Settled((last + 1) as f64 * dt),
    }
}

/// Settling time of each listed state component, with the band measured
/// against the largest initial deviation among those components.
pub fn component_settling_times(
    states: &[DVector<f64>],
    components: &[usize],
    threshold: f64,
    dt: f64,
) -> Result<Vec<SettlingTime>> {
    let first = states.first().ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    if let Some(&c) = components.iter().find(|&&c| c >= first.len()) {
        return Err(Error::InvalidParameter(format!("component {c} outside state of size {}", first.len())));
    }
    let reference = components.iter().map(|&c| first[c].abs()).fold(0.0, f64::max);
    Ok(components
        .iter()
        .map(|&c| {
            let trace: Vec<f64> = states.iter().map(|x| x[c]).collect();
            settling_time(&trace, reference, threshold, dt)
        })
        .collect())
}

/// Mean of `‖u_t‖²` over the first `window` inputs.
pub fn control_energy(inputs: &[DVector<f64>], window: usize) -> Result<f64> {
    if window == 0 || window > inputs.len() {
        return Err(Error::InvalidParameter(format!("window {window} outside 1..={}", inputs.len())));
    }
    let sq: Vec<f64> = inputs[..window].iter().map(|u| u.norm_squared()).collect();
    Ok(pairwise_sum(&sq) / window as f64)
}

/// Componentwise mean of a family of equally long vector sequences.
pub fn mean_sequence(runs: &[&[DVector<f64>]]) -> Vec<DVector<f64>> {
    let Some(first) = runs.first() else { return Vec::new() };
    (0..first.len())
        .map(|t| {
            DVector::from_fn(first[t].len(), |i, _| {
                let col: Vec<f64> = runs.iter().map(|r| r[t][i]).collect();
                pairwise_sum(&col) / runs.len() as f64
            })
        })
        .collect()
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// CSV with columns `t`, `x0..`, `u0..`, `w0..`, `stage_cost`; the final
/// row carries the terminal state with empty input columns.
pub fn trajectory_csv(r: &RolloutResult) -> String {
    let n = r.states.first().map_or(0, |x| x.len());
    let m = r.inputs.first().map_or(0, |u| u.len());
    let k = r.disturbances.first().map_or(0, |w| w.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..k).map(|i| format!("w{i}")));
    header.push("stage_cost".into());
    let mut out = header.join(",");
    out.push('\n');
    for (t, x) in r.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| format!("{v:.16e}")));
        match (r.inputs.get(t), r.disturbances.get(t), r.per_stage_costs.get(t)) {
            (Some(u), Some(w), Some(c)) => {
                row.extend(u.iter().map(|v| format!("{v:.16e}")));
                row.extend(w.iter().map(|v| format!("{v:.16e}")));
                row.push(format!("{c:.16e}"));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), m + k + 1)),
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_horizon::solve_finite_lqg;

    #[test]
    fn zero_sequence_from_origin_stays_at_origin() {
        let sys = LinearSystem::scalar(1.1, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(5));
        let pol = AffinePolicy { gain: DMatrix::from_element(1, 1, -0.5), offset: DVector::zeros(1) };
        let zeros = vec![DVector::zeros(1); 5];
        let r = rollout(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            DisturbancePolicy::FixedSequence(&zeros),
            &DVector::zeros(1),
            5,
            1,
        )
        .unwrap();
        assert!(r.states.iter().all(|x| x[0] == 0.0));
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn deterministic_rollout_matches_lqr_value() {
        let sys = LinearSystem::scalar(1.2, 1.0, 0.0);
        let cost = CostSpec::scalar(1.0, 0.5, 2.0, Horizon::Finite(8));
        let emp = EmpiricalDistribution::zero(1);
        let sol = solve_finite_lqg(&sys, &cost, &emp.clone().into()).unwrap();
        let x0 = DVector::from_element(1, 1.5);
        let r = rollout(&sys, &cost, (&sol).into(), DisturbancePolicy::Empirical(&emp), &x0, 8, 3).unwrap();
        assert!((r.total_cost - sol.value(&x0)).abs() < 1e-10 * (1.0 + r.total_cost));
        let stage_sum: f64 = r.per_stage_costs.iter().sum();
        assert!((r.total_cost - stage_sum - r.terminal_cost).abs() < 1e-10);
    }

    #[test]
    fn replay_is_bit_identical_and_recursion_holds() {
        let sys = LinearSystem::scalar(0.9, 0.4, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(20));
        let truth = TrueDistribution::isotropic(1, 0.1, 0.5);
        let pol = AffinePolicy { gain: DMatrix::from_element(1, 1, -0.3), offset: DVector::zeros(1) };
        let x0 = DVector::from_element(1, 1.0);
        let a = rollout(&sys, &cost, ControlPolicy::Stationary(&pol), DisturbancePolicy::Sampler(&truth), &x0, 20, 9)
            .unwrap();
        let b = rollout(&sys, &cost, ControlPolicy::Stationary(&pol), DisturbancePolicy::Sampler(&truth), &x0, 20, 9)
            .unwrap();
        assert_eq!(a, b);
        for t in 0..20 {
            assert_eq!(a.states[t + 1], sys.step(&a.states[t], &a.inputs[t], &a.disturbances[t]));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let sys = LinearSystem::scalar(10.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(50));
        let pol = AffinePolicy { gain: DMatrix::zeros(1, 1), offset: DVector::zeros(1) };
        let zeros = vec![DVector::zeros(1); 50];
        let err = rollout(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            DisturbancePolicy::FixedSequence(&zeros),
            &DVector::from_element(1, 1.0),
            50,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { step: 13, .. }));
    }

    #[test]
    fn deterministic_estimate_has_zero_error() {
        let sys = LinearSystem::scalar(0.5, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(4));
        let pol = AffinePolicy { gain: DMatrix::zeros(1, 1), offset: DVector::zeros(1) };
        let zeros = vec![DVector::zeros(1); 4];
        let est = estimate_cost(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            DisturbancePolicy::FixedSequence(&zeros),
            &DVector::from_element(1, 1.0),
            4,
            5,
            0,
        )
        .unwrap();
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn exact_expected_cost_matches_monte_carlo() {
        let sys = LinearSystem::scalar(0.9, 0.5, 1.0);
        let cost = CostSpec::scalar(1.0, 0.2, 1.0, Horizon::Finite(10));
        let truth = TrueDistribution::isotropic(1, 0.2, 0.3);
        let pol = AffinePolicy { gain: DMatrix::from_element(1, 1, -0.8), offset: DVector::from_element(1, 0.1) };
        let x0 = DVector::from_element(1, 1.0);
        let exact = expected_cost_exact(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            &truth.mean(),
            &truth.covariance(),
            &x0,
            10,
        )
        .unwrap();
        let mc = estimate_cost(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            DisturbancePolicy::Sampler(&truth),
            &x0,
            10,
            20_000,
            4,
        )
        .unwrap();
        assert!((mc.mean - exact).abs() <= 4.0 * mc.std_error, "{} vs {} ± {}", mc.mean, exact, mc.std_error);
    }

    #[test]
    fn settling_examples() {
        assert_eq!(settling_time(&[0.0; 10], 1.0, 0.03, 0.1), SettlingTime::Settled(0.0));
        let decay: Vec<f64> = (0..40).map(|t| 0.74f64.powi(t)).collect();
        // 0.74^11 ≈ 0.0364 > 0.03 and 0.74^12 ≈ 0.0270
        match settling_time(&decay, 1.0, 0.03, 0.1) {
            SettlingTime::Settled(s) => assert!((s - 1.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let bounce = [1.0, 0.01, 0.5, 0.01, 0.01];
        assert_eq!(settling_time(&bounce, 1.0, 0.03, 1.0), SettlingTime::Settled(3.0));
        assert!(!settling_time(&[1.0, 1.0], 1.0, 0.03, 1.0).settled());
    }

    #[test]
    fn energy_examples() {
        assert_eq!(control_energy(&vec![DVector::zeros(2); 50], 50).unwrap(), 0.0);
        let u = vec![DVector::from_vec(vec![2.0, 0.0]); 50];
        assert!((control_energy(&u, 50).unwrap() - 4.0).abs() < 1e-15);
        assert!(control_energy(&u, 51).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn csv_shape() {
        let sys = LinearSystem::scalar(0.5, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0, 1.0, Horizon::Finite(3));
        let pol = AffinePolicy { gain: DMatrix::zeros(1, 1), offset: DVector::zeros(1) };
        let zeros = vec![DVector::zeros(1); 3];
        let r = rollout(
            &sys,
            &cost,
            ControlPolicy::Stationary(&pol),
            DisturbancePolicy::FixedSequence(&zeros),
            &DVector::from_element(1, 1.0),
            3,
            0,
        )
        .unwrap();
        let csv = trajectory_csv(&r);
        assert_eq!(csv.lines().next().unwrap(), "t,x0,u0,w0,stage_cost");
        assert_eq!(csv.lines().count(), 5);
    }
}
