//! Frequency-regulation experiment: a minimax controller and an LQG
//! controller both face the worst-case disturbance policy of the minimax
//! solution, and their frequency settling times are compared.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{discretize, GridModel};
use crate::error::{Error, Result};
use crate::finite_horizon::{solve_finite, solve_finite_lqg, EmpiricalSchedule};
use crate::model::{CostSpec, EmpiricalDistribution, Horizon, LinearSystem};
use crate::simulator::{
    component_settling_times, control_energy, for_each_run, quantile, rng_for, rollout_with_rng, settling_time,
    ControlPolicy, DisturbancePolicy, SettlingTime, TrueDistribution, SETTLING_THRESHOLD,
};
use crate::tuning::optimize_lambda_finite;

/// Stream of the demo seed used to draw the empirical samples; rollouts
/// use streams `0..n_runs`.
pub const SAMPLE_STREAM: u64 = u64::MAX;
/// Mixed into the seed for bootstrap resampling, one stream per resample.
const BOOTSTRAP_KEY: u64 = 0x9e37_79b9_7f4a_7c15;
const BOOTSTRAP_RESAMPLES: usize = 1000;
const ENERGY_WINDOW: usize = 50;
pub const DEMO_HORIZON: usize = 150;
pub const DEMO_SAMPLE_MEAN: f64 = 0.02;
pub const DEMO_SAMPLE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoScenario {
    pub grid: GridModel,
    pub sys: LinearSystem,
    pub cost: CostSpec,
    pub truth: TrueDistribution,
    pub emp: EmpiricalDistribution,
    pub x0: DVector<f64>,
    pub theta: f64,
    pub horizon: usize,
}

/// Discretized network with `xᵀQx = ½Δδᵀ(I − 𝟙𝟙ᵀ/n)Δδ + ½ΔωᵀΔω`, `R = I`,
/// `T = 150`, `N` samples from `N(0.02·𝟙, 0.1²I)` and the last machine's
/// rotor speed perturbed by one.
pub fn demo_scenario(grid: &GridModel, theta: f64, n_samples: usize, seed: u64) -> Result<DemoScenario> {
    let n = grid.n_gen();
    let sys = discretize(grid)?;
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    let projector = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    q.view_mut((0, 0), (n, n)).copy_from(&(projector * 0.5));
    q.view_mut((n, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * 0.5));
    let cost = CostSpec::new(q.clone(), DMatrix::identity(n, n), q, Horizon::Finite(DEMO_HORIZON))?;
    let truth = TrueDistribution::isotropic(n, DEMO_SAMPLE_MEAN, DEMO_SAMPLE_STD);
    let emp = truth.draw_empirical(n_samples, &mut rng_for(seed, SAMPLE_STREAM))?;
    let mut x0 = DVector::zeros(2 * n);
    x0[2 * n - 1] = 1.0;
    Ok(DemoScenario { grid: grid.clone(), sys, cost, truth, emp, x0, theta, horizon: DEMO_HORIZON })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    /// Settling time of the mean rotor speed of each machine.
    pub settling: Vec<SettlingTime>,
    /// Average of `settling` in seconds, never-settling machines counted
    /// at the horizon.
    pub average_settling: f64,
    /// Mean of `Σ_{t<50} ‖u_t‖² / 50` across runs.
    pub energy: f64,
    /// Mean rotor-speed deviations, one row per time step.
    pub mean_frequency: Vec<Vec<f64>>,
    /// 5/25/50/75/95 % quantiles across runs of the perturbed machine's
    /// rotor speed at each time step.
    pub perturbed_bands: Vec<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDemoReport {
    pub theta: f64,
    pub lambda_hat: f64,
    pub lambda_star: f64,
    pub bound: f64,
    pub n_runs: usize,
    pub minimax: ControllerSummary,
    pub lqg: ControllerSummary,
    /// Bootstrap 95 % upper bound on `avg(minimax) − avg(LQG)`, resampling
    /// run indices jointly for both controllers.
    pub difference_upper95: f64,
    /// The upper bound is below zero.
    pub minimax_faster: bool,
}

/// Rotor-speed traces with one column per run, each column laid out
/// `[t][machine]`.
struct Traces {
    data: DMatrix<f64>,
    steps: usize,
    machines: usize,
}

impl Traces {
    /// Weighted mean over runs, laid out `[t][machine]`.
    fn mean(&self, weights: &DVector<f64>) -> DVector<f64> {
        &self.data * weights
    }

    fn average_settling(&self, weights: &DVector<f64>, reference: f64, dt: f64) -> f64 {
        let mean = self.mean(weights);
        (0..self.machines)
            .map(|g| {
                let trace: Vec<f64> = (0..self.steps).map(|t| mean[t * self.machines + g]).collect();
                settling_time(&trace, reference, SETTLING_THRESHOLD, dt).seconds()
            })
            .sum::<f64>()
            / self.machines as f64
    }
}

fn run_controller(
    sc: &DemoScenario,
    control: ControlPolicy<'_>,
    worst: DisturbancePolicy<'_>,
    n_runs: usize,
    seed: u64,
) -> Result<(ControllerSummary, Traces)> {
    let n = sc.grid.n_gen();
    let dt = sc.grid.dt;
    let runs = for_each_run(n_runs, |run| {
        let r = rollout_with_rng(&sc.sys, &sc.cost, control, worst, &sc.x0, sc.horizon, &mut rng_for(seed, run as u64))
            .map_err(|e| match e {
                Error::NonFiniteState { step, .. } => Error::NonFiniteState { run, step },
                other => other,
            })?;
        let omega: Vec<f64> = r.states.iter().flat_map(|x| x.rows(n, n).iter().copied().collect::<Vec<_>>()).collect();
        Ok((omega, control_energy(&r.inputs, ENERGY_WINDOW.min(sc.horizon))?))
    })?;
    let steps = sc.horizon + 1;
    let energies: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let traces = Traces {
        data: DMatrix::from_iterator(steps * n, n_runs, runs.into_iter().flat_map(|r| r.0)),
        steps,
        machines: n,
    };
    let mean = traces.mean(&DVector::from_element(n_runs, 1.0 / n_runs as f64));
    let mean_frequency: Vec<Vec<f64>> = (0..steps).map(|t| mean.rows(t * n, n).iter().copied().collect()).collect();
    let mean_states: Vec<DVector<f64>> = mean_frequency.iter().map(|row| DVector::from_vec(row.clone())).collect();
    let settling = component_settling_times(&mean_states, &(0..n).collect::<Vec<_>>(), SETTLING_THRESHOLD, dt)?;
    let average_settling = settling.iter().map(|s| s.seconds()).sum::<f64>() / n as f64;
    let perturbed = n - 1;
    let perturbed_bands = (0..steps)
        .map(|t| {
            let mut col: Vec<f64> = traces.data.row(t * n + perturbed).iter().copied().collect();
            col.sort_by(|a, b| a.total_cmp(b));
            [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&col, q))
        })
        .collect();
    let energy = crate::simulator::pairwise_sum(&energies) / n_runs as f64;
    Ok((ControllerSummary { settling, average_settling, energy, mean_frequency, perturbed_bands }, traces))
}

/// Tunes `λ*` for the scenario's radius, then simulates both controllers
/// for `n_runs` paired runs (run `i` uses stream `i` of `seed` for both).
pub fn run_grid_demo(sc: &DemoScenario, n_runs: usize, seed: u64, tune_tol: f64) -> Result<GridDemoReport> {
    if n_runs < 2 {
        return Err(Error::InvalidParameter("the grid demo needs at least two runs".into()));
    }
    let sched = EmpiricalSchedule::Stationary(sc.emp.clone());
    let tuned = optimize_lambda_finite(&sc.sys, &sc.cost, &sched, sc.horizon, &sc.x0, sc.theta, tune_tol)?;
    let minimax = solve_finite(&sc.sys, &sc.cost, &sched, tuned.lambda_star)?;
    let lqg = solve_finite_lqg(&sc.sys, &sc.cost, &sched)?;
    let worst = DisturbancePolicy::WorstCaseFinite { sol: &minimax, emp: &sc.emp };
    let (mm_summary, mm_traces) = run_controller(sc, (&minimax).into(), worst, n_runs, seed)?;
    let (lqg_summary, lqg_traces) = run_controller(sc, (&lqg).into(), worst, n_runs, seed)?;

    let n = sc.grid.n_gen();
    let reference = sc.x0.rows(n, n).amax();
    let dt = sc.grid.dt;
    let diffs = for_each_run(BOOTSTRAP_RESAMPLES, |b| {
        let mut rng = rng_for(seed ^ BOOTSTRAP_KEY, b as u64);
        let mut weights = DVector::zeros(n_runs);
        for _ in 0..n_runs {
            weights[rng.random_range(0..n_runs)] += 1.0 / n_runs as f64;
        }
        Ok(mm_traces.average_settling(&weights, reference, dt) - lqg_traces.average_settling(&weights, reference, dt))
    })?;
    let mut sorted = diffs;
    sorted.sort_by(|a, b| a.total_cmp(b));
    let difference_upper95 = quantile(&sorted, 0.95);
    Ok(GridDemoReport {
        theta: sc.theta,
        lambda_hat: tuned.lambda_hat,
        lambda_star: tuned.lambda_star,
        bound: tuned.upper_bound,
        n_runs,
        minimax: mm_summary,
        lqg: lqg_summary,
        difference_upper95,
        minimax_faster: difference_upper95 < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::super::synthetic_ten_machine;
    use super::*;

    #[test]
    fn angle_block_annihilates_uniform_shift() {
        let grid = synthetic_ten_machine().to_model().unwrap();
        let sc = demo_scenario(&grid, 0.5, 10, 1).unwrap();
        let mut shift = DVector::zeros(20);
        shift.rows_mut(0, 10).fill(1.0);
        assert!((&sc.cost.q * shift).amax() < 1e-15);
        assert_eq!(sc.x0[19], 1.0);
        assert_eq!(sc.emp.len(), 10);
        assert_eq!((sc.sys.n(), sc.sys.m(), sc.sys.k()), (20, 10, 10));
    }

    #[test]
    fn samples_center_on_the_stated_mean() {
        let grid = synthetic_ten_machine().to_model().unwrap();
        let sc = demo_scenario(&grid, 0.5, 10, 7).unwrap();
        // 100 scalar draws with std 0.1: the pooled mean has std 0.01
        let pooled = sc.emp.mean().mean();
        assert!((pooled - DEMO_SAMPLE_MEAN).abs() < 4.0 * 0.01, "{pooled}");
    }
}
