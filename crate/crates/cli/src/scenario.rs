//! TOML scenario files. The grammar is documented in `docs/scenario.md`.

use std::path::{Path, PathBuf};

use minimax_lq::powergrid::{demo_scenario, parse_grid, sha256_hex, synthetic_ten_machine, GridModel, SAMPLE_STREAM};
use minimax_lq::robustness::{RadiusParams, RadiusRegime};
use minimax_lq::simulator::{rng_for, TrueDistribution};
use minimax_lq::{CostSpec, EmpiricalDistribution, Horizon, LinearSystem};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::CliError;

/// Sample count and seed used when a grid scenario gives no samples.
pub const GRID_SAMPLE_COUNT: usize = 10;
pub const GRID_SAMPLE_SEED: u64 = 2024;
pub const DEFAULT_TUNE_TOL: f64 = 1e-6;
pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_STEPS: usize = 1000;

/// A matrix written as a bare number (1×1) or a list of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Mat {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl Mat {
    fn build(&self, name: &str) -> Result<DMatrix<f64>, CliError> {
        match self {
            Mat::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            Mat::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
                    return Err(CliError::Usage(format!("{name} must be a nonempty list of equal-length rows")));
                }
                Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
            }
        }
    }
}

/// A vector written as a bare number (broadcast to the needed length) or a
/// list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Vector {
    Scalar(f64),
    List(Vec<f64>),
}

impl Vector {
    fn build(&self, name: &str, len: usize) -> Result<DVector<f64>, CliError> {
        match self {
            Vector::Scalar(v) => Ok(DVector::from_element(len, *v)),
            Vector::List(xs) if xs.len() == len => Ok(DVector::from_column_slice(xs)),
            Vector::List(xs) => Err(CliError::Usage(format!("{name} has {} entries, expected {len}", xs.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum HorizonSpec {
    Steps(usize),
    Word(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(rename = "A")]
    a: Option<Mat>,
    #[serde(rename = "B")]
    b: Option<Mat>,
    #[serde(rename = "Xi")]
    xi: Option<Mat>,
    grid: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    #[serde(rename = "Q")]
    q: Mat,
    #[serde(rename = "R")]
    r: Mat,
    #[serde(rename = "Qf")]
    qf: Option<Mat>,
    horizon: HorizonSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianSection {
    mean: Option<Vector>,
    std: Option<f64>,
    cov: Option<Mat>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplesSection {
    points: Option<Vec<Vec<f64>>>,
    mean: Option<Vector>,
    std: Option<f64>,
    cov: Option<Mat>,
    count: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PenaltySection {
    lambda: Option<f64>,
    theta: Option<f64>,
    beta: Option<f64>,
    tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadiusSection {
    c1: Option<f64>,
    c2: Option<f64>,
    q: Option<f64>,
    zeta: Option<f64>,
    regime: Option<String>,
    n_values: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    x0: Option<Vector>,
    runs: Option<usize>,
    seed: Option<u64>,
    steps: Option<usize>,
    disturbance: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    system: SystemSection,
    cost: Option<CostSection>,
    samples: Option<SamplesSection>,
    truth: Option<GaussianSection>,
    penalty: Option<PenaltySection>,
    #[serde(default)]
    radius: RadiusSection,
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Fixed(f64),
    Tune { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceMode {
    WorstCase,
    Empirical,
    Truth,
    Hinf,
}

impl DisturbanceMode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "worst_case" | "worst-case" => Ok(Self::WorstCase),
            "empirical" => Ok(Self::Empirical),
            "truth" => Ok(Self::Truth),
            "hinf" => Ok(Self::Hinf),
            other => Err(CliError::Usage(format!(
                "unknown disturbance mode '{other}' (expected worst_case, empirical, truth or hinf)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::WorstCase => "worst_case",
            Self::Empirical => "empirical",
            Self::Truth => "truth",
            Self::Hinf => "hinf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sys: LinearSystem,
    pub cost: CostSpec,
    pub emp: EmpiricalDistribution,
    pub truth: Option<TrueDistribution>,
    pub penalty: Option<Penalty>,
    pub beta: f64,
    pub tune_tol: f64,
    pub radius: RadiusParams,
    pub regime: RadiusRegime,
    pub n_values: Vec<usize>,
    pub x0: DVector<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub sample_seed: Option<u64>,
    pub steps: usize,
    pub disturbance: DisturbanceMode,
    pub grid: Option<GridModel>,
    pub out_dir: Option<PathBuf>,
    /// Hex sha256 of the scenario file bytes.
    pub sha256: String,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_grid(spec: &str, base: &Path) -> Result<GridModel, CliError> {
    let data = if spec == "synthetic10" {
        synthetic_ten_machine()
    } else {
        let path = base.join(spec);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("cannot read grid file {}: {e}", path.display())))?;
        parse_grid(&text)?
    };
    Ok(data.to_model()?)
}

fn gaussian(
    mean: Option<&Vector>,
    std: Option<f64>,
    cov: Option<&Mat>,
    k: usize,
) -> Result<TrueDistribution, CliError> {
    let mean = mean.map_or(Ok(DVector::zeros(k)), |m| m.build("mean", k))?;
    let cov = match (std, cov) {
        (Some(s), None) => DMatrix::identity(k, k) * (s * s),
        (None, Some(c)) => c.build("cov")?,
        _ => return Err(usage("a Gaussian needs exactly one of 'std' or 'cov'")),
    };
    Ok(TrueDistribution::gaussian(mean, cov)?)
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read scenario {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| usage("scenario is not valid UTF-8"))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, sha256_hex(&bytes))
    }

    pub fn parse(text: &str, base: &Path, sha256: String) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| usage(format!("malformed scenario: {e}")))?;
        let sys_sec = &file.system;
        let inline = [&sys_sec.a, &sys_sec.b, &sys_sec.xi].iter().filter(|m| m.is_some()).count();
        let (sys, grid, grid_defaults) = match (&sys_sec.grid, inline) {
            (Some(spec), 0) => {
                let grid = load_grid(spec, base)?;
                let demo = demo_scenario(&grid, 0.0, GRID_SAMPLE_COUNT, GRID_SAMPLE_SEED)?;
                (demo.sys.clone(), Some(grid), Some(demo))
            }
            (None, 3) => {
                let get = |m: &Option<Mat>, name: &str| m.as_ref().expect("counted").build(name);
                let sys = LinearSystem::new(get(&sys_sec.a, "A")?, get(&sys_sec.b, "B")?, get(&sys_sec.xi, "Xi")?)?;
                (sys, None, None)
            }
            _ => return Err(usage("[system] needs either 'grid' or all of 'A', 'B', 'Xi'")),
        };
        let (n, k) = (sys.n(), sys.k());

        let cost = match (&file.cost, &grid_defaults) {
            (Some(c), _) => {
                let q = c.q.build("Q")?;
                let qf = c.qf.as_ref().map_or(Ok(q.clone()), |m| m.build("Qf"))?;
                let horizon = match &c.horizon {
                    HorizonSpec::Steps(0) => return Err(usage("horizon must be positive")),
                    HorizonSpec::Steps(t) => Horizon::Finite(*t),
                    HorizonSpec::Word(w) if w == "infinite" => Horizon::Infinite,
                    HorizonSpec::Word(w) => {
                        return Err(usage(format!("horizon '{w}' is neither a count nor \"infinite\"")))
                    }
                };
                CostSpec::new(q, c.r.build("R")?, qf, horizon)?
            }
            (None, Some(demo)) => demo.cost.clone(),
            (None, None) => return Err(usage("missing [cost] section")),
        };

        let mut truth = None;
        let mut sample_seed = None;
        let emp = match (&file.samples, &grid_defaults) {
            (Some(s), _) => match &s.points {
                Some(points) => {
                    if s.mean.is_some() || s.std.is_some() || s.cov.is_some() || s.count.is_some() || s.seed.is_some() {
                        return Err(usage("[samples] takes either 'points' or a Gaussian spec, not both"));
                    }
                    EmpiricalDistribution::new(points.iter().map(|p| DVector::from_column_slice(p)).collect())?
                }
                None => {
                    let dist = gaussian(s.mean.as_ref(), s.std, s.cov.as_ref(), k)?;
                    let count = s.count.ok_or_else(|| usage("[samples] Gaussian spec needs 'count'"))?;
                    let seed = s.seed.ok_or_else(|| usage("[samples] Gaussian spec needs 'seed'"))?;
                    let emp = dist.draw_empirical(count, &mut rng_for(seed, SAMPLE_STREAM))?;
                    truth = Some(dist);
                    sample_seed = Some(seed);
                    emp
                }
            },
            (None, Some(demo)) => {
                truth = Some(demo.truth.clone());
                sample_seed = Some(GRID_SAMPLE_SEED);
                demo.emp.clone()
            }
            (None, None) => return Err(usage("missing [samples] section")),
        };
        if emp.dim() != k {
            return Err(usage(format!("samples live in R^{}, but Xi has {k} columns", emp.dim())));
        }
        if let Some(t) = &file.truth {
            truth = Some(gaussian(t.mean.as_ref(), t.std, t.cov.as_ref(), k)?);
        }

        let (penalty, beta, tune_tol) = match &file.penalty {
            None => (None, DEFAULT_BETA, DEFAULT_TUNE_TOL),
            Some(p) => {
                let mode = match (p.lambda, p.theta) {
                    (Some(l), None) => Some(Penalty::Fixed(l)),
                    (None, Some(t)) => Some(Penalty::Tune { theta: t }),
                    (None, None) => None,
                    (Some(_), Some(_)) => return Err(usage("[penalty] takes 'lambda' or 'theta', not both")),
                };
                (mode, p.beta.unwrap_or(DEFAULT_BETA), p.tol.unwrap_or(DEFAULT_TUNE_TOL))
            }
        };

        let rs = &file.radius;
        let defaults = RadiusParams::default();
        let radius = RadiusParams {
            n_samples: emp.len(),
            beta,
            horizon: match cost.horizon {
                Horizon::Finite(t) => t,
                Horizon::Infinite => 1,
            },
            k,
            c1: rs.c1.unwrap_or(defaults.c1),
            c2: rs.c2.unwrap_or(defaults.c2),
            q: rs.q.unwrap_or(defaults.q),
            zeta: rs.zeta.unwrap_or(defaults.zeta),
        };
        let regime = match rs.regime.as_deref() {
            None | Some("light_tail") => RadiusRegime::LightTail,
            Some("compact") => RadiusRegime::Compact,
            Some("stationary") => RadiusRegime::Stationary,
            Some(other) => return Err(usage(format!("unknown radius regime '{other}'"))),
        };
        let n_values = rs.n_values.clone().unwrap_or_else(|| vec![5, 10, 20, 50, 100, 200, 500, 1000]);

        let sim = &file.simulation;
        let x0 = match (&sim.x0, &grid_defaults) {
            (Some(v), _) => v.build("x0", n)?,
            (None, Some(demo)) => demo.x0.clone(),
            (None, None) => DVector::zeros(n),
        };
        let disturbance = DisturbanceMode::parse(sim.disturbance.as_deref().unwrap_or("worst_case"))?;

        Ok(Self {
            sys,
            cost,
            emp,
            truth,
            penalty,
            beta,
            tune_tol,
            radius,
            regime,
            n_values,
            x0,
            runs: sim.runs,
            seed: sim.seed,
            sample_seed,
            steps: sim.steps.unwrap_or(DEFAULT_STEPS),
            disturbance,
            grid,
            out_dir: file.output.dir.clone(),
            sha256,
        })
    }
}
