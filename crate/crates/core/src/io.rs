//! Plain-text solution dumps for cross-language comparison.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), so a
//! dump read back reproduces the solution bit for bit. Matrices carry
//! their dimensions on the header line and follow row-major, one row per
//! line. Infinite penalties are written `inf`.
//!
//! ```text
//! # minimax-lq solution dump
//! kind finite
//! lambda 1.2000000000000000e0
//! assumption_margin 3.0000000000000000e-1
//! horizon 2
//! stage 0
//! P 1 1
//! 1.5000000000000000e0
//! r 1
//! 0.0000000000000000e0
//! z 4.0000000000000000e-1
//! K 1 1
//! -5.0000000000000000e-1
//! L 1
//! 0.0000000000000000e0
//! stage 1
//! ...
//! stage 2
//! P 1 1
//! ...
//! z 0.0000000000000000e0
//! ```
//!
//! The last stage carries the terminal value only. Steady-state dumps use
//! `kind steady` followed by `lambda`, `rho`, `method`, `iterations`,
//! `closed_loop_spectral_radius`, `mean_state_gain_radius`, `P`, `r`, `K`
//! and `L`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::finite_horizon::{FiniteSolution, ValueParams};
use crate::infinite_horizon::{SolveMethod, SteadySolution};
use crate::model::AffinePolicy;

const HEADER: &str = "# minimax-lq solution dump";

/// Formats a float with 17 significant digits. Negative zero is written
/// as zero.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v + 0.0)
}

fn push_scalar(out: &mut String, key: &str, v: f64) {
    let _ = writeln!(out, "{key} {}", fmt_f64(v));
}

fn push_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{key} {} {}", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn push_vector(out: &mut String, key: &str, v: &DVector<f64>) {
    let _ = writeln!(out, "{key} {}", v.len());
    let line: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    let _ = writeln!(out, "{}", line.join(" "));
}

pub fn write_finite(sol: &FiniteSolution) -> String {
    let mut out = format!("{HEADER}\nkind finite\n");
    push_scalar(&mut out, "lambda", sol.lambda);
    push_scalar(&mut out, "assumption_margin", sol.assumption_margin);
    let _ = writeln!(out, "horizon {}", sol.horizon());
    for (t, v) in sol.values.iter().enumerate() {
        let _ = writeln!(out, "stage {t}");
        push_matrix(&mut out, "P", &v.p);
        push_vector(&mut out, "r", &v.r);
        push_scalar(&mut out, "z", v.z);
        if let Some(pol) = sol.policies.get(t) {
            push_matrix(&mut out, "K", &pol.gain);
            push_vector(&mut out, "L", &pol.offset);
        }
    }
    out
}

fn method_name(m: SolveMethod) -> &'static str {
    match m {
        SolveMethod::FixedPoint => "fixed_point",
        SolveMethod::Eigen => "eigen",
        SolveMethod::Both => "both",
    }
}

pub fn write_steady(sol: &SteadySolution) -> String {
    let mut out = format!("{HEADER}\nkind steady\n");
    push_scalar(&mut out, "lambda", sol.lambda);
    push_scalar(&mut out, "rho", sol.rho);
    let _ = writeln!(out, "method {}", method_name(sol.method));
    let _ = writeln!(out, "iterations {}", sol.iterations);
    push_scalar(&mut out, "closed_loop_spectral_radius", sol.closed_loop_spectral_radius);
    push_scalar(&mut out, "mean_state_gain_radius", sol.mean_state_gain_radius);
    push_matrix(&mut out, "P", &sol.p);
    push_vector(&mut out, "r", &sol.r);
    push_matrix(&mut out, "K", &sol.gain);
    push_vector(&mut out, "L", &sol.offset);
    out
}

type NumberedLines<'a> = std::iter::Filter<std::iter::Enumerate<std::str::Lines<'a>>, fn(&(usize, &str)) -> bool>;

/// Line cursor over a dump, skipping comments and blank lines.
struct Reader<'a> {
    lines: std::iter::Peekable<NumberedLines<'a>>,
}

fn meaningful(entry: &(usize, &str)) -> bool {
    let t = entry.1.trim();
    !t.is_empty() && !t.starts_with('#')
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadDataFile(msg.into())
}

fn parse_f64(line_no: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(format!("line {line_no}: '{s}' is not a number")))
}

fn parse_usize(line_no: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(format!("line {line_no}: '{s}' is not a count")))
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate().filter(meaningful as fn(&(usize, &str)) -> bool).peekable() }
    }

    fn next_line(&mut self) -> Result<(usize, Vec<&'a str>)> {
        let (idx, line) = self.lines.next().ok_or_else(|| bad("unexpected end of dump"))?;
        Ok((idx + 1, line.split_whitespace().collect()))
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.lines.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    /// Reads `key v₁ … v_arity` and returns the values.
    fn keyed(&mut self, key: &str, arity: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line_no, fields) = self.next_line()?;
        match fields.split_first() {
            Some((k, rest)) if *k == key && rest.len() == arity => Ok((line_no, rest.to_vec())),
            _ => Err(bad(format!("line {line_no}: expected '{key}' with {arity} value(s)"))),
        }
    }

    fn scalar(&mut self, key: &str) -> Result<f64> {
        let (line_no, v) = self.keyed(key, 1)?;
        parse_f64(line_no, v[0])
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (line_no, v) = self.keyed(key, 1)?;
        parse_usize(line_no, v[0])
    }

    fn word(&mut self, key: &str) -> Result<&'a str> {
        Ok(self.keyed(key, 1)?.1[0])
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>> {
        let (line_no, fields) = self.next_line()?;
        if fields.len() != len {
            return Err(bad(format!("line {line_no}: expected {len} values, found {}", fields.len())));
        }
        fields.iter().map(|f| parse_f64(line_no, f)).collect()
    }

    fn matrix(&mut self, key: &str) -> Result<DMatrix<f64>> {
        let (line_no, dims) = self.keyed(key, 2)?;
        let (rows, cols) = (parse_usize(line_no, dims[0])?, parse_usize(line_no, dims[1])?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, key: &str) -> Result<DVector<f64>> {
        let len = self.count(key)?;
        // a zero-length vector is written as an empty line, which the
        // cursor skips
        if len == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(DVector::from_vec(self.row(len)?))
    }

    fn finish(&mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some((idx, _)) => Err(bad(format!("line {}: trailing content", idx + 1))),
        }
    }
}

fn expect_kind(reader: &mut Reader<'_>, kind: &str) -> Result<()> {
    let found = reader.word("kind")?;
    if found != kind {
        return Err(bad(format!("expected a {kind} dump, found kind '{found}'")));
    }
    Ok(())
}

pub fn read_finite(text: &str) -> Result<FiniteSolution> {
    let mut rd = Reader::new(text);
    expect_kind(&mut rd, "finite")?;
    let lambda = rd.scalar("lambda")?;
    let assumption_margin = rd.scalar("assumption_margin")?;
    let horizon = rd.count("horizon")?;
    let mut values = Vec::with_capacity(horizon + 1);
    let mut policies = Vec::with_capacity(horizon);
    for t in 0..=horizon {
        let stage = rd.count("stage")?;
        if stage != t {
            return Err(bad(format!("stage {stage} out of order, expected {t}")));
        }
        let p = rd.matrix("P")?;
        let r = rd.vector("r")?;
        let z = rd.scalar("z")?;
        values.push(ValueParams { p, r, z });
        if t < horizon || rd.peek_key() == Some("K") {
            policies.push(AffinePolicy { gain: rd.matrix("K")?, offset: rd.vector("L")? });
        }
    }
    rd.finish()?;
    if policies.len() != horizon {
        return Err(bad("terminal stage must not carry a policy"));
    }
    Ok(FiniteSolution { values, policies, lambda, assumption_margin })
}

pub fn read_steady(text: &str) -> Result<SteadySolution> {
    let mut rd = Reader::new(text);
    expect_kind(&mut rd, "steady")?;
    let lambda = rd.scalar("lambda")?;
    let rho = rd.scalar("rho")?;
    let method = match rd.word("method")? {
        "fixed_point" => SolveMethod::FixedPoint,
        "eigen" => SolveMethod::Eigen,
        "both" => SolveMethod::Both,
        other => return Err(bad(format!("unknown method '{other}'"))),
    };
    let iterations = rd.count("iterations")?;
    let closed_loop_spectral_radius = rd.scalar("closed_loop_spectral_radius")?;
    let mean_state_gain_radius = rd.scalar("mean_state_gain_radius")?;
    let p = rd.matrix("P")?;
    let r = rd.vector("r")?;
    let gain = rd.matrix("K")?;
    let offset = rd.vector("L")?;
    rd.finish()?;
    Ok(SteadySolution {
        p,
        r,
        rho,
        gain,
        offset,
        lambda,
        closed_loop_spectral_radius,
        mean_state_gain_radius,
        method,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_horizon::{solve_finite, solve_finite_lqg, EmpiricalSchedule};
    use crate::infinite_horizon::solve_steady;
    use crate::model::{CostSpec, EmpiricalDistribution, Horizon, LinearSystem};

    fn problem() -> (LinearSystem, CostSpec, EmpiricalDistribution) {
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.05, 0.1]),
        )
        .unwrap();
        let cost = CostSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            Horizon::Finite(4),
        )
        .unwrap();
        let emp =
            EmpiricalDistribution::new(vec![DVector::from_element(1, 0.3), DVector::from_element(1, -0.1)]).unwrap();
        (sys, cost, emp)
    }

    #[test]
    fn finite_round_trip_is_exact() {
        let (sys, cost, emp) = problem();
        let sol = solve_finite(&sys, &cost, &EmpiricalSchedule::from(emp), 5.0).unwrap();
        let text = write_finite(&sol);
        assert_eq!(read_finite(&text).unwrap(), sol);
        assert_eq!(write_finite(&read_finite(&text).unwrap()), text);
    }

    #[test]
    fn infinite_penalty_round_trips() {
        let (sys, cost, emp) = problem();
        let sol = solve_finite_lqg(&sys, &cost, &EmpiricalSchedule::from(emp)).unwrap();
        let back = read_finite(&write_finite(&sol)).unwrap();
        assert!(back.lambda.is_infinite());
        assert_eq!(back, sol);
    }

    #[test]
    fn steady_round_trip_is_exact() {
        let (sys, cost, emp) = problem();
        let cost = cost.with_horizon(Horizon::Infinite);
        let sol = solve_steady(&sys, &cost, &emp, 5.0).unwrap();
        assert_eq!(read_steady(&write_steady(&sol)).unwrap(), sol);
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let (sys, cost, emp) = problem();
        let sol = solve_finite(&sys, &cost, &EmpiricalSchedule::from(emp), 5.0).unwrap();
        let text = write_finite(&sol);
        assert!(read_steady(&text).is_err());
        let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_finite(&cut), Err(Error::BadDataFile(_))));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
    }
}
