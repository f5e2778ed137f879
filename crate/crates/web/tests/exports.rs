use minimax_lq_web::{radius_curve, riccati_vs_lambda, tuning_curve, ScalarProblem};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("exports return JSON")
}

fn problem() -> ScalarProblem {
    ScalarProblem::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 20, "0.3, -0.1 0.2")
}

#[test]
fn riccati_curves_decrease_towards_lqg() {
    let v = parse(&riccati_vs_lambda(&problem()));
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 6);
    let p0: Vec<f64> = curves.iter().map(|c| c["p"][0].as_f64().unwrap()).collect();
    // a larger penalty weakens the opponent, so P_0 falls towards the LQG value
    assert!(p0.windows(2).all(|w| w[1] <= w[0]), "{p0:?}");
    let lqg0 = v["lqg"][0].as_f64().unwrap();
    assert!(p0.iter().all(|p| *p >= lqg0 - 1e-12));
    assert_eq!(curves[0]["p"].as_array().unwrap().len(), 21);
}

#[test]
fn tuning_minimizer_beats_the_curve() {
    let v = parse(&tuning_curve(&problem(), 1.0, 0.2));
    let bound = v["bound"].as_f64().unwrap();
    let curve = v["curve"].as_array().unwrap();
    assert!(!curve.is_empty());
    let lowest = curve.iter().map(|e| e["objective"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert!(bound <= lowest + 1e-6 * (1.0 + lowest.abs()), "{bound} vs {lowest}");
    assert!(v["lambda_star"].as_f64().unwrap() > v["lambda_hat"].as_f64().unwrap());
}

#[test]
fn radius_shrinks_with_samples() {
    let v = parse(&radius_curve(0.05, 1, 1, 1.0, 1.0, "light_tail"));
    let thetas: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["theta"].as_f64().unwrap()).collect();
    assert!(thetas.len() > 10);
    assert!(thetas.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn errors_are_reported_as_json() {
    let empty = ScalarProblem::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 20, " , ");
    assert!(parse(&riccati_vs_lambda(&empty))["error"].is_string());
    assert!(parse(&tuning_curve(&problem(), 1.0, -1.0))["error"].is_string());
    assert!(parse(&radius_curve(1.5, 1, 1, 1.0, 1.0, "light_tail"))["error"].is_string());
    assert!(parse(&radius_curve(0.05, 1, 1, 1.0, 1.0, "heavy"))["error"].is_string());
}
