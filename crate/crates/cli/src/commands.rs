//! Subcommand implementations. Each returns its artifacts in memory;
//! writing and manifests are handled by [`crate::output`].

use std::fmt::Write as _;
use std::path::PathBuf;

use minimax_lq::finite_horizon::{solve_finite, EmpiricalSchedule, FiniteSolution};
use minimax_lq::infinite_horizon::{check_assumptions, solve_steady, stability_certificates, SteadySolution};
use minimax_lq::io::{fmt_f64, write_finite, write_steady};
use minimax_lq::powergrid::{
    demo_scenario, run_grid_demo, synthetic_ten_machine, ControllerSummary, DemoScenario, DEMO_HORIZON,
};
use minimax_lq::robustness::{radius_sensitivity, RadiusParams};
use minimax_lq::simulator::{
    component_settling_times, estimate_reliability, mean_sequence, quantile, simulate_runs, ControlPolicy,
    DisturbancePolicy, MonteCarloEstimate, ReliabilitySetup, RolloutResult, SETTLING_THRESHOLD,
};
use minimax_lq::tuning::{optimize_lambda_finite, optimize_lambda_infinite, TunedPenalty};
use minimax_lq::{AffinePolicy, CostSpec, Horizon};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::Artifact;
use crate::scenario::{DisturbanceMode, Penalty, Scenario, GRID_SAMPLE_COUNT, GRID_SAMPLE_SEED};
use crate::{CliError, Command, RunArgs};

const DEFAULT_SIM_RUNS: usize = 100;
const DEFAULT_TRIALS: usize = 200;
const DEFAULT_GRID_RUNS: usize = 1000;
const DEFAULT_GRID_SEED: u64 = 7;
const DEFAULT_GRID_THETA: f64 = 0.5;
const BAND_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Seed the empirical samples were drawn with, if they were drawn.
    pub samples: Option<u64>,
    /// Seed of the Monte-Carlo streams, if the command simulates.
    pub simulation: Option<u64>,
}

pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub seeds: Seeds,
    pub scenario_sha256: Option<String>,
    pub out_dir: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn json_artifact(name: &str, value: &Value) -> Artifact {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    Artifact::new(name, text)
}

/// JSON has no infinity; infinite penalties are written as `null`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn run(command: Command, args: &RunArgs) -> Result<RunOutput, CliError> {
    if args.disturbance.is_some() && command != Command::Simulate {
        return Err(usage("--disturbance only applies to simulate"));
    }
    if args.lambda.is_some() && !args.theta.is_empty() && !matches!(command, Command::Tune | Command::Reliability) {
        return Err(usage("give either --lambda or --theta, not both"));
    }
    let scenario = args.scenario.as_deref().map(Scenario::from_path).transpose()?;
    let scenario_sha256 = scenario.as_ref().map(|s| s.sha256.clone());
    let out_dir = scenario.as_ref().and_then(|s| s.out_dir.clone());
    let ctx = Ctx { args, scenario };
    let (artifacts, seeds) = match command {
        Command::SolveFinite => cmd_solve_finite(&ctx)?,
        Command::SolveInfinite => cmd_solve_infinite(&ctx)?,
        Command::Tune => cmd_tune(&ctx)?,
        Command::Radius => cmd_radius(&ctx)?,
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Reliability => cmd_reliability(&ctx)?,
        Command::GridDemo => cmd_grid_demo(&ctx)?,
    };
    Ok(RunOutput { artifacts, seeds, scenario_sha256, out_dir })
}

struct Ctx<'a> {
    args: &'a RunArgs,
    scenario: Option<Scenario>,
}

type Produced = (Vec<Artifact>, Seeds);

impl Ctx<'_> {
    fn scenario(&self) -> Result<&Scenario, CliError> {
        self.scenario.as_ref().ok_or_else(|| usage("this subcommand needs --scenario"))
    }

    fn sample_seeds(&self) -> Seeds {
        Seeds { samples: self.scenario.as_ref().and_then(|s| s.sample_seed), simulation: None }
    }

    /// Penalty mode after command-line overrides.
    fn penalty(&self) -> Result<Penalty, CliError> {
        match (self.args.lambda, self.args.theta.as_slice()) {
            (Some(l), []) => Ok(Penalty::Fixed(l)),
            (None, [t]) => Ok(Penalty::Tune { theta: *t }),
            (None, []) => {
                self.scenario()?.penalty.ok_or_else(|| usage("no penalty: set [penalty] or pass --lambda/--theta"))
            }
            (None, _) => Err(usage("this subcommand takes a single --theta")),
            (Some(_), _) => Err(usage("give either --lambda or --theta, not both")),
        }
    }

    /// Radii for sweeps: the command line list, else the scenario's.
    fn thetas(&self) -> Result<Vec<f64>, CliError> {
        if !self.args.theta.is_empty() {
            return Ok(self.args.theta.clone());
        }
        match self.scenario()?.penalty {
            Some(Penalty::Tune { theta }) => Ok(vec![theta]),
            _ => Err(usage("no radius: set [penalty] theta or pass --theta")),
        }
    }

    fn beta(&self) -> Result<f64, CliError> {
        Ok(self.args.beta.unwrap_or(self.scenario()?.beta))
    }

    fn finite_horizon(&self) -> Result<usize, CliError> {
        match (self.args.horizon, self.scenario()?.cost.horizon) {
            (Some(0), _) => Err(usage("--horizon must be positive")),
            (Some(t), _) | (None, Horizon::Finite(t)) => Ok(t),
            (None, Horizon::Infinite) => Err(usage("needs a finite horizon: set [cost] horizon or pass --horizon")),
        }
    }

    /// Finite horizon when one is configured, `None` for the stationary
    /// problem.
    fn horizon(&self) -> Result<Option<usize>, CliError> {
        match (self.args.horizon, self.scenario()?.cost.horizon) {
            (None, Horizon::Infinite) => Ok(None),
            _ => self.finite_horizon().map(Some),
        }
    }
}

fn tuned_json(t: &TunedPenalty) -> Value {
    json!({
        "theta": t.theta,
        "lambda_star": num(t.lambda_star),
        "upper_bound": num(t.upper_bound),
        "lambda_hat": num(t.lambda_hat),
        "monotone_tail": t.monotone_tail,
        "evaluations": t.evaluations.len(),
    })
}

fn warn_monotone_tail(t: &TunedPenalty) {
    if t.monotone_tail {
        eprintln!(
            "warning: MonotoneTail: objective still decreasing at lambda={:e} for theta={}; lambda* sits at the cap",
            t.lambda_star, t.theta
        );
    }
}

fn policy_row(out: &mut String, prefix: &str, pol: &AffinePolicy) {
    for i in 0..pol.gain.nrows() {
        let mut fields = vec![format!("{prefix}{i}")];
        fields.extend(pol.gain.row(i).iter().map(|v| fmt_f64(*v)));
        fields.push(fmt_f64(pol.offset[i]));
        let _ = writeln!(out, "{}", fields.join(","));
    }
}

fn policy_header(first: &str, n: usize) -> String {
    let mut cols = vec![first.to_string()];
    cols.extend((0..n).map(|j| format!("K_{j}")));
    cols.push("L".into());
    cols.join(",") + "\n"
}

fn finite_policy_csv(sol: &FiniteSolution, n: usize) -> String {
    let mut out = policy_header("t,row", n);
    for (t, pol) in sol.policies.iter().enumerate() {
        policy_row(&mut out, &format!("{t},"), pol);
    }
    out
}

fn steady_policy_csv(sol: &SteadySolution, n: usize) -> String {
    let mut out = policy_header("row", n);
    policy_row(&mut out, "", &sol.policy());
    out
}

/// Solves the finite-horizon problem at the configured penalty, tuning
/// first when asked to.
fn finite_solution(ctx: &Ctx<'_>, horizon: usize) -> Result<(FiniteSolution, Option<TunedPenalty>), CliError> {
    let sc = ctx.scenario()?;
    let cost = sc.cost.clone().with_horizon(Horizon::Finite(horizon));
    let sched = EmpiricalSchedule::Stationary(sc.emp.clone());
    let (lambda, tuned) = match ctx.penalty()? {
        Penalty::Fixed(l) => (l, None),
        Penalty::Tune { theta } => {
            let t = optimize_lambda_finite(&sc.sys, &cost, &sched, horizon, &sc.x0, theta, sc.tune_tol)?;
            warn_monotone_tail(&t);
            (t.lambda_star, Some(t))
        }
    };
    Ok((solve_finite(&sc.sys, &cost, &sched, lambda)?, tuned))
}

fn steady_cost(sc: &Scenario) -> CostSpec {
    sc.cost.clone().with_horizon(Horizon::Infinite)
}

fn steady_solution(ctx: &Ctx<'_>) -> Result<(SteadySolution, Option<TunedPenalty>, Value), CliError> {
    let sc = ctx.scenario()?;
    let cost = steady_cost(sc);
    let (lambda, tuned) = match ctx.penalty()? {
        Penalty::Fixed(l) => (l, None),
        Penalty::Tune { theta } => {
            let t = optimize_lambda_infinite(&sc.sys, &cost, &sc.emp, theta, sc.tune_tol)?;
            warn_monotone_tail(&t);
            (t.lambda_star, Some(t))
        }
    };
    let cert = check_assumptions(&sc.sys, &cost, lambda)?;
    if !cert.holds() {
        return Err(CliError::Core(minimax_lq::Error::AssumptionViolated(format!(
            "lambda={lambda}: min eig(Phi)={:.3e}, stabilizable={}, observable={}, penalty margin={:.3e}",
            cert.phi_min_eig, cert.stabilizable, cert.observable, cert.penalty_margin
        ))));
    }
    let sol = solve_steady(&sc.sys, &cost, &sc.emp, lambda)?;
    let stab = stability_certificates(&sol, &sc.sys, &cost, &sc.emp)?;
    let cert_json = json!({
        "assumptions": {
            "phi_min_eig": cert.phi_min_eig,
            "phi_psd": cert.phi_psd,
            "stabilizable": cert.stabilizable,
            "observable": cert.observable,
            "penalty_margin": num(cert.penalty_margin),
        },
        "stability": {
            "closed_loop_spectral_radius": stab.closed_loop_spectral_radius,
            "mean_state_gain_radius": stab.mean_state_gain_radius,
            "mean_state_limit": stab.mean_state_limit.iter().copied().collect::<Vec<f64>>(),
            "stable": stab.stable(),
        },
    });
    Ok((sol, tuned, cert_json))
}

fn cmd_solve_finite(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    let sc = ctx.scenario()?;
    let horizon = ctx.finite_horizon()?;
    let (sol, tuned) = finite_solution(ctx, horizon)?;
    let cert = json!({
        "lambda": num(sol.lambda),
        "horizon": horizon,
        "assumption_margin": num(sol.assumption_margin),
        "value_at_x0": sol.value(&sc.x0),
        "tuned": tuned.as_ref().map(tuned_json),
    });
    let mut artifacts = vec![
        Artifact::new("solution.txt", write_finite(&sol)),
        Artifact::new("policy.csv", finite_policy_csv(&sol, sc.sys.n())),
        json_artifact("certificate.json", &cert),
    ];
    if let Some(t) = &tuned {
        artifacts.push(Artifact::new("tune.csv", evaluations_csv(&[t])));
    }
    Ok((artifacts, ctx.sample_seeds()))
}

fn cmd_solve_infinite(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    let sc = ctx.scenario()?;
    if ctx.args.horizon.is_some() {
        return Err(usage("solve-infinite does not take --horizon"));
    }
    let (sol, tuned, mut cert) = steady_solution(ctx)?;
    cert["lambda"] = num(sol.lambda);
    cert["rho"] = json!(sol.rho);
    cert["method"] = json!(sol.method);
    cert["iterations"] = json!(sol.iterations);
    cert["tuned"] = tuned.as_ref().map_or(Value::Null, tuned_json);
    let mut artifacts = vec![
        Artifact::new("solution.txt", write_steady(&sol)),
        Artifact::new("policy.csv", steady_policy_csv(&sol, sc.sys.n())),
        json_artifact("certificate.json", &cert),
    ];
    if let Some(t) = &tuned {
        artifacts.push(Artifact::new("tune.csv", evaluations_csv(&[t])));
    }
    Ok((artifacts, ctx.sample_seeds()))
}

fn evaluations_csv(tuned: &[&TunedPenalty]) -> String {
    let mut out = String::from("theta,lambda,objective,margin\n");
    for t in tuned {
        for e in &t.evaluations {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(t.theta),
                fmt_f64(e.lambda),
                fmt_f64(e.objective),
                fmt_f64(e.margin)
            );
        }
    }
    out
}

fn cmd_tune(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    if ctx.args.lambda.is_some() {
        return Err(usage("tune searches the penalty; --lambda does not apply"));
    }
    let sc = ctx.scenario()?;
    let thetas = ctx.thetas()?;
    let horizon = ctx.horizon()?;
    let tuned = thetas
        .iter()
        .map(|&theta| {
            let t = match horizon {
                Some(h) => {
                    let cost = sc.cost.clone().with_horizon(Horizon::Finite(h));
                    let sched = EmpiricalSchedule::Stationary(sc.emp.clone());
                    optimize_lambda_finite(&sc.sys, &cost, &sched, h, &sc.x0, theta, sc.tune_tol)?
                }
                None => optimize_lambda_infinite(&sc.sys, &steady_cost(sc), &sc.emp, theta, sc.tune_tol)?,
            };
            warn_monotone_tail(&t);
            Ok(t)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = String::from("theta,lambda_star,upper_bound,lambda_hat,monotone_tail\n");
    for t in &tuned {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            fmt_f64(t.theta),
            fmt_f64(t.lambda_star),
            fmt_f64(t.upper_bound),
            fmt_f64(t.lambda_hat),
            t.monotone_tail
        );
    }
    let refs: Vec<&TunedPenalty> = tuned.iter().collect();
    let artifacts = vec![Artifact::new("tuned.csv", table), Artifact::new("evaluations.csv", evaluations_csv(&refs))];
    Ok((artifacts, ctx.sample_seeds()))
}

fn cmd_radius(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    let sc = ctx.scenario()?;
    let params =
        RadiusParams { beta: ctx.beta()?, horizon: ctx.args.horizon.unwrap_or(sc.radius.horizon), ..sc.radius };
    let mut ns = sc.n_values.clone();
    if !ns.contains(&sc.emp.len()) {
        ns.push(sc.emp.len());
    }
    let table = radius_sensitivity(&params, sc.regime, &ns)?;
    let mut out = String::from("N,T,beta,theta\n");
    for (n, theta) in table {
        let _ = writeln!(out, "{n},{},{},{}", params.horizon, fmt_f64(params.beta), fmt_f64(theta));
    }
    Ok((vec![Artifact::new("radius.csv", out)], ctx.sample_seeds()))
}

fn estimates_csv(rows: &[(&str, MonteCarloEstimate)]) -> String {
    let mut out = String::from("cost,mean,std_error,n_runs,seed\n");
    for (name, e) in rows {
        let _ = writeln!(out, "{name},{},{},{},{}", fmt_f64(e.mean), fmt_f64(e.std_error), e.n_runs, e.seed);
    }
    out
}

/// Per-step quantiles of every state component across runs.
fn bands_csv(runs: &[RolloutResult]) -> String {
    let mut out = String::from("t,component,q05,q25,q50,q75,q95\n");
    let steps = runs[0].states.len();
    let n = runs[0].states[0].len();
    for t in 0..steps {
        for c in 0..n {
            let mut col: Vec<f64> = runs.iter().map(|r| r.states[t][c]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let qs: Vec<String> = BAND_LEVELS.iter().map(|&q| fmt_f64(quantile(&col, q))).collect();
            let _ = writeln!(out, "{t},{c},{}", qs.join(","));
        }
    }
    out
}

fn cmd_simulate(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    let sc = ctx.scenario()?;
    let mode = match &ctx.args.disturbance {
        Some(s) => DisturbanceMode::parse(s)?,
        None => sc.disturbance,
    };
    let runs = ctx.args.runs.or(sc.runs).unwrap_or(DEFAULT_SIM_RUNS);
    let seed = ctx.args.seed.or(sc.seed).unwrap_or(0);
    if runs == 0 {
        return Err(usage("--runs must be positive"));
    }
    let finite;
    let steady;
    let stationary_policy;
    let horizon = ctx.horizon()?;
    let sim_cost = sc.cost.clone().with_horizon(horizon.map_or(Horizon::Infinite, Horizon::Finite));
    let (control, worst, hinf, steps, lambda) = match horizon {
        Some(h) => {
            finite = finite_solution(ctx, h)?.0;
            (
                ControlPolicy::from(&finite),
                DisturbancePolicy::WorstCaseFinite { sol: &finite, emp: &sc.emp },
                DisturbancePolicy::HinfFinite(&finite),
                h,
                finite.lambda,
            )
        }
        None => {
            steady = steady_solution(ctx)?.0;
            stationary_policy = steady.policy();
            (
                ControlPolicy::Stationary(&stationary_policy),
                DisturbancePolicy::WorstCaseSteady { sol: &steady, emp: &sc.emp },
                DisturbancePolicy::HinfSteady(&steady),
                sc.steps,
                steady.lambda,
            )
        }
    };
    let dist = match mode {
        DisturbanceMode::WorstCase => worst,
        DisturbanceMode::Empirical => DisturbancePolicy::Empirical(&sc.emp),
        DisturbanceMode::Hinf => hinf,
        DisturbanceMode::Truth => DisturbancePolicy::Sampler(
            sc.truth
                .as_ref()
                .ok_or_else(|| usage("truth mode needs a Gaussian [samples] spec or a [truth] section"))?,
        ),
    };
    let rollouts = simulate_runs(&sc.sys, &sim_cost, control, dist, &sc.x0, steps, runs, seed)?;
    let per_stage =
        |f: fn(&RolloutResult) -> f64| -> Vec<f64> { rollouts.iter().map(|r| f(r) / steps as f64).collect() };
    let total = MonteCarloEstimate::from_samples(&per_stage(|r| r.total_cost), seed);
    let penalized = MonteCarloEstimate::from_samples(&per_stage(|r| r.penalized_cost), seed);
    let mut artifacts = vec![
        Artifact::new("estimates.csv", estimates_csv(&[("total", total), ("penalized", penalized)])),
        Artifact::new("bands.csv", bands_csv(&rollouts)),
    ];
    let mut summary = json!({
        "disturbance": mode.name(),
        "runs": runs,
        "seed": seed,
        "steps": steps,
        "lambda": num(lambda),
        "total": { "mean": total.mean, "std_error": total.std_error },
        "penalized": { "mean": penalized.mean, "std_error": penalized.std_error },
    });
    if let Some(grid) = &sc.grid {
        let n_gen = grid.n_gen();
        let traces: Vec<&[DVector<f64>]> = rollouts.iter().map(|r| r.states.as_slice()).collect();
        let mean = mean_sequence(&traces);
        let speeds: Vec<usize> = (n_gen..2 * n_gen).collect();
        let settling = component_settling_times(&mean, &speeds, SETTLING_THRESHOLD, grid.dt)?;
        let mut table = String::from("generator,settling_s,settled\n");
        for (g, s) in settling.iter().enumerate() {
            let _ = writeln!(table, "{g},{},{}", fmt_f64(s.seconds()), s.settled());
        }
        let average = settling.iter().map(|s| s.seconds()).sum::<f64>() / n_gen as f64;
        summary["average_settling_s"] = json!(average);
        artifacts.push(Artifact::new("settling.csv", table));
    }
    artifacts.push(json_artifact("summary.json", &summary));
    Ok((artifacts, Seeds { simulation: Some(seed), ..ctx.sample_seeds() }))
}

fn cmd_reliability(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    if ctx.args.lambda.is_some() {
        return Err(usage("reliability re-tunes the penalty per trial; --lambda does not apply"));
    }
    let sc = ctx.scenario()?;
    let truth =
        sc.truth.as_ref().ok_or_else(|| usage("reliability needs a Gaussian [samples] spec or a [truth] section"))?;
    let thetas = ctx.thetas()?;
    let beta = ctx.beta()?;
    let horizon = ctx.finite_horizon()?;
    let trials = ctx.args.runs.or(sc.runs).unwrap_or(DEFAULT_TRIALS);
    let seed = ctx.args.seed.or(sc.seed).unwrap_or(0);
    let setup = ReliabilitySetup {
        sys: &sc.sys,
        cost: &sc.cost,
        truth,
        x0: &sc.x0,
        n_samples: sc.emp.len(),
        horizon,
        tune_tol: sc.tune_tol,
    };
    let mut summary = String::from("theta,beta,reliability,meets_target,trials\n");
    let mut detail = String::from("theta,trial,lambda_star,bound,out_of_sample\n");
    for &theta in &thetas {
        let report = estimate_reliability(&setup, theta, beta, trials, seed)?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            fmt_f64(theta),
            fmt_f64(beta),
            fmt_f64(report.reliability),
            report.meets_target,
            trials
        );
        for (i, t) in report.trials.iter().enumerate() {
            let _ = writeln!(
                detail,
                "{},{i},{},{},{}",
                fmt_f64(theta),
                fmt_f64(t.lambda_star),
                fmt_f64(t.bound),
                fmt_f64(t.out_of_sample)
            );
        }
    }
    let artifacts = vec![Artifact::new("reliability.csv", summary), Artifact::new("trials.csv", detail)];
    Ok((artifacts, Seeds { simulation: Some(seed), ..ctx.sample_seeds() }))
}

fn controller_json(s: &ControllerSummary) -> Value {
    json!({
        "average_settling_s": s.average_settling,
        "energy": s.energy,
        "settled": s.settling.iter().filter(|t| t.settled()).count(),
    })
}

fn cmd_grid_demo(ctx: &Ctx<'_>) -> Result<Produced, CliError> {
    if ctx.args.lambda.is_some() || ctx.args.beta.is_some() {
        return Err(usage("grid-demo tunes its own penalty; --lambda and --beta do not apply"));
    }
    let theta = match ctx.args.theta.as_slice() {
        [] => match ctx.scenario.as_ref().and_then(|s| s.penalty) {
            Some(Penalty::Tune { theta }) => theta,
            _ => DEFAULT_GRID_THETA,
        },
        [t] => *t,
        _ => return Err(usage("grid-demo takes a single --theta")),
    };
    let (demo, sample_seed) = match &ctx.scenario {
        None => {
            let grid = synthetic_ten_machine().to_model()?;
            (demo_scenario(&grid, theta, GRID_SAMPLE_COUNT, GRID_SAMPLE_SEED)?, GRID_SAMPLE_SEED)
        }
        Some(sc) => {
            let grid = sc.grid.clone().ok_or_else(|| usage("grid-demo needs a scenario with [system] grid"))?;
            let truth = sc.truth.clone().ok_or_else(|| usage("grid-demo needs a Gaussian sample law"))?;
            let horizon = match (ctx.args.horizon, sc.cost.horizon) {
                (Some(t), _) | (None, Horizon::Finite(t)) => t,
                (None, Horizon::Infinite) => DEMO_HORIZON,
            };
            let demo = DemoScenario {
                grid,
                sys: sc.sys.clone(),
                cost: sc.cost.clone().with_horizon(Horizon::Finite(horizon)),
                truth,
                emp: sc.emp.clone(),
                x0: sc.x0.clone(),
                theta,
                horizon,
            };
            (demo, sc.sample_seed.unwrap_or(GRID_SAMPLE_SEED))
        }
    };
    let runs = ctx.args.runs.or(ctx.scenario.as_ref().and_then(|s| s.runs)).unwrap_or(DEFAULT_GRID_RUNS);
    let seed = ctx.args.seed.or(ctx.scenario.as_ref().and_then(|s| s.seed)).unwrap_or(DEFAULT_GRID_SEED);
    let tol = ctx.scenario.as_ref().map_or(crate::scenario::DEFAULT_TUNE_TOL, |s| s.tune_tol);
    let report = run_grid_demo(&demo, runs, seed, tol)?;

    let mut settling = String::from("generator,minimax_s,minimax_settled,lqg_s,lqg_settled\n");
    for (g, (a, b)) in report.minimax.settling.iter().zip(&report.lqg.settling).enumerate() {
        let _ =
            writeln!(settling, "{g},{},{},{},{}", fmt_f64(a.seconds()), a.settled(), fmt_f64(b.seconds()), b.settled());
    }
    let n_gen = demo.grid.n_gen();
    let mut header = vec!["t".to_string(), "controller".to_string()];
    header.extend((0..n_gen).map(|g| format!("omega_{g}")));
    let mut frequency = header.join(",") + "\n";
    let mut bands = String::from("t,controller,q05,q25,q50,q75,q95\n");
    for (name, s) in [("minimax", &report.minimax), ("lqg", &report.lqg)] {
        for (t, row) in s.mean_frequency.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(frequency, "{t},{name},{}", vals.join(","));
        }
        for (t, qs) in s.perturbed_bands.iter().enumerate() {
            let vals: Vec<String> = qs.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(bands, "{t},{name},{}", vals.join(","));
        }
    }
    let summary = json!({
        "theta": report.theta,
        "lambda_hat": report.lambda_hat,
        "lambda_star": report.lambda_star,
        "bound": report.bound,
        "runs": report.n_runs,
        "seed": seed,
        "minimax": controller_json(&report.minimax),
        "lqg": controller_json(&report.lqg),
        "difference_upper95_s": report.difference_upper95,
        "minimax_faster": report.minimax_faster,
    });
    println!(
        "average settling: minimax {:.2} s, LQG {:.2} s; 95% upper bound on the difference {:.3} s",
        report.minimax.average_settling, report.lqg.average_settling, report.difference_upper95
    );
    let artifacts = vec![
        Artifact::new("settling.csv", settling),
        Artifact::new("mean_frequency.csv", frequency),
        Artifact::new("bands.csv", bands),
        json_artifact("summary.json", &summary),
    ];
    Ok((artifacts, Seeds { samples: Some(sample_seed), simulation: Some(seed) }))
}
