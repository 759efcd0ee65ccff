//! Adaptive and uniform refinement loops and empirical convergence rates.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::estimator::{estimate, exact_errors, EstimateBreakdown, EstimatorOptions, ExactErrors};
use crate::mesh::{build_initial_mesh, DomainSpec, Triangulation};
use crate::operators::Variant;
use crate::problem::{cooks, lame_from_young_poisson, lshape, manufactured_polynomial, mesh_file_benchmark, smooth_square, Material, ProblemData};
use crate::system::{assemble, nodal_average, post_process, solve, DofMap, HhoFunction, PostProcessed, SolveStats};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Cooks,
    Lshape,
    Square,
    Mesh(PathBuf),
    /// Polynomial exact solution of the given degree on the unit square.
    Polynomial(u32),
}

impl Benchmark {
    pub fn name(&self) -> String {
        match self {
            Self::Cooks => "cooks".into(),
            Self::Lshape => "lshape".into(),
            Self::Square => "square".into(),
            Self::Mesh(p) => format!("mesh={}", p.display()),
            Self::Polynomial(d) => format!("polynomial={d}"),
        }
    }

    pub fn domain(&self) -> DomainSpec {
        match self {
            Self::Cooks => DomainSpec::Cooks,
            Self::Lshape => DomainSpec::LShape,
            Self::Square | Self::Polynomial(_) => DomainSpec::UnitSquare,
            Self::Mesh(p) => DomainSpec::File(p.clone()),
        }
    }

    pub fn problem(&self, lambda: f64, mu: f64) -> ProblemData {
        let material = Material::Homogeneous { lambda, mu };
        match self {
            Self::Cooks => cooks(material),
            Self::Lshape => lshape(lambda, mu),
            Self::Square => smooth_square(lambda, mu),
            Self::Mesh(_) => mesh_file_benchmark(material),
            Self::Polynomial(d) => manufactured_polynomial(*d, lambda, mu),
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cooks" => Ok(Self::Cooks),
            "lshape" => Ok(Self::Lshape),
            "square" => Ok(Self::Square),
            _ => {
                if let Some(path) = s.strip_prefix("mesh=").filter(|p| !p.is_empty()) {
                    Ok(Self::Mesh(path.into()))
                } else if let Some(d) = s.strip_prefix("polynomial=").and_then(|d| d.parse().ok()) {
                    Ok(Self::Polynomial(d))
                } else {
                    Err(Error::InvalidConfig(format!("unknown benchmark `{s}`")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialSpec {
    YoungPoisson { e: f64, nu: f64 },
    Lame { lambda: f64, mu: f64 },
}

impl MaterialSpec {
    pub fn lame(&self) -> Result<(f64, f64)> {
        match *self {
            Self::YoungPoisson { e, nu } => lame_from_young_poisson(e, nu),
            Self::Lame { lambda, mu } => {
                if mu > 0.0 && lambda >= 0.0 && mu.is_finite() && lambda.is_finite() {
                    Ok((lambda, mu))
                } else {
                    Err(Error::InvalidMaterial(format!("λ = {lambda}, μ = {mu}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Adaptive,
    Uniform,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub k: usize,
    pub variant: Variant,
    pub material: MaterialSpec,
    pub mode: Mode,
    pub theta: f64,
    pub max_ndof: usize,
    pub max_levels: usize,
    pub max_wall_time: Option<Duration>,
    /// The loop stops once `η̃ ≤ eta_tolerance · ‖σ_h‖`.
    pub eta_tolerance: f64,
    #[serde(skip)]
    pub estimator: EstimatorOptions,
}

impl RunConfig {
    pub fn new(benchmark: Benchmark, k: usize, mode: Mode) -> Self {
        Self {
            benchmark,
            k,
            variant: Variant::Classic,
            material: MaterialSpec::YoungPoisson { e: 1e5, nu: 0.4999 },
            mode,
            theta: 0.5,
            max_ndof: 200_000,
            max_levels: 40,
            max_wall_time: None,
            eta_tolerance: 1e-10,
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 5 {
            return Err(Error::UnsupportedDegree(self.k));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidConfig(format!("θ = {} is outside (0, 1]", self.theta)));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidConfig("at least one level is required".into()));
        }
        self.material.lame()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimes {
    pub solve: f64,
    pub estimate: f64,
    pub refine: f64,
}

/// Quantities of one level of a run.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub ndof: usize,
    pub n_elements: usize,
    /// `η̃`, which equals `η` for homogeneous Dirichlet data.
    pub eta: f64,
    pub eta_homogeneous: f64,
    pub err_sigma: Option<f64>,
    pub err_l2: Option<f64>,
    pub err_best: Option<f64>,
    /// `‖σ‖` of the exact solution.
    pub sigma_norm: Option<f64>,
    pub eff_index: Option<f64>,
    pub osc_f: f64,
    pub osc_g: f64,
    pub osc_dirichlet: f64,
    pub backward_error: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone)]
pub struct ConvergenceHistory {
    pub config: RunConfig,
    pub levels: Vec<LevelRecord>,
    pub final_mesh: Triangulation,
}

/// Everything computed on one mesh.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub solution: HhoFunction,
    pub post: PostProcessed,
    pub estimate: EstimateBreakdown,
    pub errors: Option<ExactErrors>,
    pub stats: SolveStats,
    pub times: PhaseTimes,
}

/// Solves, post-processes and estimates on a fixed mesh.
pub fn solve_level(
    mesh: &Triangulation,
    problem: &ProblemData,
    k: usize,
    variant: Variant,
    options: EstimatorOptions,
) -> Result<LevelSolution> {
    let t0 = Instant::now();
    let system = assemble(mesh, problem, k, variant, true)?;
    let (solution, stats) = solve(&system)?;
    let post = post_process(mesh, problem, &solution)?;
    let solve_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let averaged = nodal_average(&post.potential, mesh, &*problem.u_d.value)?;
    let estimate = estimate(mesh, problem, &post, &averaged, options)?;
    let errors = match problem.exact {
        Some(_) => Some(exact_errors(mesh, problem, &post)?),
        None => None,
    };
    Ok(LevelSolution {
        solution,
        post,
        estimate,
        errors,
        stats,
        times: PhaseTimes {
            solve: solve_time,
            estimate: t1.elapsed().as_secs_f64(),
            refine: 0.0,
        },
    })
}

/// Minimal set carrying a `θ`-fraction of the total indicator: the shortest
/// prefix of the elements sorted by decreasing indicator, ties by id.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicators.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for t in order {
        marked.push(t);
        sum += indicators[t];
        if sum >= goal {
            break;
        }
    }
    marked
}

/// Runs SOLVE, ESTIMATE, MARK, REFINE until a stop criterion holds.
pub fn run_afem(config: &RunConfig) -> Result<ConvergenceHistory> {
    config.validate()?;
    let (lambda, mu) = config.material.lame()?;
    let problem = config.benchmark.problem(lambda, mu);
    let mut mesh = build_initial_mesh(&config.benchmark.domain())?;
    let start = Instant::now();
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut refine_time = 0.0;

    for level in 0..config.max_levels {
        let ndof = DofMap::new(&mesh, &problem, config.k, config.variant)?.ndof();
        if level > 0 && ndof > config.max_ndof {
            break;
        }
        let LevelSolution {
            post,
            estimate: est,
            errors,
            stats,
            times,
            ..
        } = solve_level(&mesh, &problem, config.k, config.variant, config.estimator)?;
        let eta = est.eta_tilde();
        levels.push(LevelRecord {
            level,
            ndof,
            n_elements: mesh.n_elements(),
            eta,
            eta_homogeneous: est.eta(),
            err_sigma: errors.map(|e| e.stress),
            err_l2: errors.map(|e| e.displacement_l2),
            err_best: errors.map(|e| e.stress_best),
            sigma_norm: errors.map(|e| e.stress_norm),
            eff_index: errors.and_then(|e| (e.stress > 0.0).then(|| eta / e.stress)),
            osc_f: est.osc_f,
            osc_g: est.osc_g,
            osc_dirichlet: est.osc_dirichlet,
            backward_error: stats.backward_error,
            h_min: mesh.h_min(),
            h_max: mesh.h_max(),
            times: PhaseTimes {
                refine: refine_time,
                ..times
            },
        });

        if level + 1 == config.max_levels || ndof >= config.max_ndof || eta <= config.eta_tolerance * post.stress.l2_norm() {
            break;
        }
        if config.max_wall_time.is_some_and(|limit| start.elapsed() >= limit) {
            break;
        }
        let t2 = Instant::now();
        mesh = match config.mode {
            Mode::Uniform => mesh.uniform_refine(),
            Mode::Adaptive => {
                let marked = doerfler_mark(&est.indicators, config.theta);
                if marked.is_empty() {
                    break;
                }
                mesh.refine_nvb(&marked)
            }
        };
        refine_time = t2.elapsed().as_secs_f64();
    }

    Ok(ConvergenceHistory {
        config: config.clone(),
        levels,
        final_mesh: mesh,
    })
}

/// Rate `−log(q_{ℓ+1}/q_ℓ) / log(n_{ℓ+1}/n_ℓ)` between consecutive levels;
/// `None` where a quantity is missing or nonpositive.
pub fn step_rates(ndof: &[f64], q: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for i in 1..ndof.len() {
        let rate = match (q[i - 1], q[i]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 && ndof[i] != ndof[i - 1] => Some(-(b / a).ln() / (ndof[i] / ndof[i - 1]).ln()),
            _ => None,
        };
        out.push(rate);
    }
    out
}

/// Negative least-squares slope of `log q` against `log ndof` over the last
/// `m` levels with positive values.
pub fn least_squares_rate(ndof: &[f64], q: &[Option<f64>], m: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ndof
        .iter()
        .zip(q)
        .filter_map(|(&n, &v)| v.filter(|&v| v > 0.0 && n > 0.0).map(|v| (n.ln(), v.ln())))
        .collect();
    if pts.len() < 2 || m < 2 {
        return None;
    }
    let pts = &pts[pts.len().saturating_sub(m)..];
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Empirical rates of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Rates {
    pub eta: Vec<Option<f64>>,
    pub err_sigma: Vec<Option<f64>>,
    pub err_l2: Vec<Option<f64>>,
    pub eta_fit: Option<f64>,
    pub err_sigma_fit: Option<f64>,
    pub err_l2_fit: Option<f64>,
    /// Number of trailing levels in the least-squares fits.
    pub window: usize,
}

/// Consecutive-level rates and least-squares rates over the last `m` levels.
pub fn compute_rates(history: &ConvergenceHistory, m: usize) -> Rates {
    let ndof: Vec<f64> = history.levels.iter().map(|l| l.ndof as f64).collect();
    let eta: Vec<Option<f64>> = history.levels.iter().map(|l| Some(l.eta)).collect();
    let sigma: Vec<Option<f64>> = history.levels.iter().map(|l| l.err_sigma).collect();
    let l2: Vec<Option<f64>> = history.levels.iter().map(|l| l.err_l2).collect();
    Rates {
        eta: step_rates(&ndof, &eta),
        err_sigma: step_rates(&ndof, &sigma),
        err_l2: step_rates(&ndof, &l2),
        eta_fit: least_squares_rate(&ndof, &eta, m),
        err_sigma_fit: least_squares_rate(&ndof, &sigma, m),
        err_l2_fit: least_squares_rate(&ndof, &l2, m),
        window: m,
    }
}
