use minimax_lq::io::{read_finite, read_steady, write_finite, write_steady};
use minimax_lq::powergrid::{discretize, parse_grid, synthetic_ten_machine, write_grid, SYNTHETIC10};
use minimax_lq::simulator::{estimate, ControlPolicy, CostKind, DisturbancePolicy};
use minimax_lq::tuning::optimize_lambda_finite;
use minimax_lq::{
    infinite_horizon::solve_steady, solve_finite, CostSpec, EmpiricalDistribution, EmpiricalSchedule, Horizon,
    LinearSystem,
};
use nalgebra::{DMatrix, DVector};

fn double_integrator() -> (LinearSystem, CostSpec, EmpiricalDistribution) {
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.005, 0.1]),
        DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
    )
    .unwrap();
    let cost = CostSpec::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1) * 0.1,
        DMatrix::identity(2, 2),
        Horizon::Finite(30),
    )
    .unwrap();
    let emp = EmpiricalDistribution::new([0.4, -0.3, 0.1, 0.7].iter().map(|&w| DVector::from_element(1, w)).collect())
        .unwrap();
    (sys, cost, emp)
}

#[test]
fn game_value_matches_penalized_cost_under_the_saddle_pair() {
    let (sys, cost, emp) = double_integrator();
    let sched = EmpiricalSchedule::from(emp.clone());
    let x0 = DVector::from_row_slice(&[1.0, -0.5]);
    let sol = solve_finite(&sys, &cost, &sched, 2.0).unwrap();
    let worst = DisturbancePolicy::WorstCaseFinite { sol: &sol, emp: &emp };
    let est = estimate(&sys, &cost, (&sol).into(), worst, &x0, 30, 4000, 3, CostKind::Penalized).unwrap();
    let value = sol.average_value(&x0);
    assert!((est.mean - value).abs() <= 4.0 * est.std_error, "{} vs {value} (se {})", est.mean, est.std_error);
}

#[test]
fn tuned_bound_dominates_the_nominal_cost() {
    let (sys, cost, emp) = double_integrator();
    let sched = EmpiricalSchedule::from(emp.clone());
    let x0 = DVector::from_row_slice(&[1.0, 0.0]);
    let tuned = optimize_lambda_finite(&sys, &cost, &sched, 30, &x0, 0.2, 1e-6).unwrap();
    let sol = solve_finite(&sys, &cost, &sched, tuned.lambda_star).unwrap();
    let nominal = estimate(
        &sys,
        &cost,
        ControlPolicy::from(&sol),
        DisturbancePolicy::Empirical(&emp),
        &x0,
        30,
        2000,
        9,
        CostKind::Total,
    )
    .unwrap();
    assert!(tuned.lambda_star > tuned.lambda_hat);
    assert!(nominal.mean + 4.0 * nominal.std_error < tuned.upper_bound, "{nominal:?} vs {}", tuned.upper_bound);
}

#[test]
fn solution_dumps_round_trip_through_text() {
    let (sys, cost, emp) = double_integrator();
    let sol = solve_finite(&sys, &cost, &emp.clone().into(), 1.5).unwrap();
    let back = read_finite(&write_finite(&sol)).unwrap();
    assert_eq!(back.values, sol.values);
    assert_eq!(back.policies, sol.policies);

    let steady = solve_steady(&sys, &cost.clone().with_horizon(Horizon::Infinite), &emp, 1.5).unwrap();
    let back = read_steady(&write_steady(&steady)).unwrap();
    assert_eq!(back.p, steady.p);
    assert_eq!(back.rho, steady.rho);
}

#[test]
fn bundled_grid_survives_a_write_parse_cycle() {
    let data = parse_grid(SYNTHETIC10).unwrap();
    assert_eq!(data, synthetic_ten_machine());
    let reparsed = parse_grid(&write_grid(&data)).unwrap();
    assert_eq!(reparsed, data);
    let a = discretize(&data.to_model().unwrap()).unwrap();
    let b = discretize(&reparsed.to_model().unwrap()).unwrap();
    assert_eq!(a, b);
}
