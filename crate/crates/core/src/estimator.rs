//! Residual a posteriori error estimator and exact error norms.

use nalgebra::{Matrix2, Vector2};

use crate::approximation::{oscillation_dirichlet, oscillation_neumann, oscillation_volume, PiecewisePolyField};
use crate::basis::dim_p;
use crate::mesh::{SideKind, Triangulation};
use crate::problem::ProblemData;
use crate::quadrature::{quad_rule, DomainKind, MAX_DEGREE};
use crate::system::{ConformingField, PostProcessed};
use crate::{Error, Point, Result};

/// How the jump term of an interior side enters the element indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpAssignment {
    /// Half to each neighbour, so the indicators sum to the global estimator.
    #[default]
    Halved,
    /// The full term to both neighbours.
    Full,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EstimatorOptions {
    pub jumps: JumpAssignment,
}

/// Element contributions and global totals of the estimator.
#[derive(Debug, Clone)]
pub struct EstimateBreakdown {
    /// `‖h_T(f + div σ_h)‖²_{L²(T)}`.
    pub volume: Vec<f64>,
    /// `μ_T² ‖ε(𝒜u_h) − ε_h u_h‖²_{L²(T)}`.
    pub strain_average: Vec<f64>,
    /// Share of `Σ_F h_F ‖[σ_h]_F ν_F‖²_{L²(F)}` over interior sides.
    pub jump: Vec<f64>,
    /// `Σ_F h_F ‖g − σ_h ν_F‖²_{L²(F)}` over Neumann sides of `T`.
    pub neumann: Vec<f64>,
    /// Share of `μ₁² osc(u_D, 𝓕_D)²`.
    pub dirichlet: Vec<f64>,
    /// `η²(T)`, the sum of all five contributions.
    pub indicators: Vec<f64>,
    /// `η²` without the Dirichlet oscillation.
    pub eta_squared: f64,
    /// `η̃² = η² + μ₁² osc(u_D, 𝓕_D)²`.
    pub eta_tilde_squared: f64,
    pub osc_f: f64,
    pub osc_g: f64,
    pub osc_dirichlet: f64,
}

impl EstimateBreakdown {
    pub fn eta(&self) -> f64 {
        self.eta_squared.sqrt()
    }

    pub fn eta_tilde(&self) -> f64 {
        self.eta_tilde_squared.sqrt()
    }
}

fn quadrature_degree(k: usize) -> usize {
    (2 * (k + 1) + 2).min(MAX_DEGREE)
}

fn segment_points(a: Point, b: Point, degree: usize) -> Vec<(Point, f64)> {
    let rule = quad_rule(DomainKind::Segment, degree.min(MAX_DEGREE)).expect("degree clamped to table");
    rule.on_segment(a, b).map(|(_, x, w)| (x, w)).collect()
}

fn divergence(field: &PiecewisePolyField, t: usize, x: Point) -> Vector2<f64> {
    let (_, dx, dy) = field.eval_with_grad(t, x);
    Vector2::new(dx[0] + dy[1], dx[2] + dy[3])
}

fn symmetric_gradient(field: &PiecewisePolyField, t: usize, x: Point) -> Matrix2<f64> {
    let (_, dx, dy) = field.eval_with_grad(t, x);
    let off = 0.5 * (dy[0] + dx[1]);
    Matrix2::new(dx[0], off, off, dy[1])
}

/// Evaluates the estimator with `v = 𝒜u_h` in the strain term.
pub fn estimate(
    mesh: &Triangulation,
    problem: &ProblemData,
    post: &PostProcessed,
    averaged: &ConformingField,
    options: EstimatorOptions,
) -> Result<EstimateBreakdown> {
    let k = post.stress.degree();
    let nt = mesh.n_elements();
    let q = quadrature_degree(k);
    let tri = quad_rule(DomainKind::Triangle, q)?;
    let sigma = &post.stress;

    let mut volume = vec![0.0; nt];
    let mut strain_average = vec![0.0; nt];
    for t in 0..nt {
        let verts = mesh.element_vertices(t);
        let h = mesh.geometry(t).diameter;
        let (_, mu) = problem.material.on_element(mesh, t);
        let (mut vol, mut st) = (0.0, 0.0);
        for (x, w) in tri.on_triangle(&verts) {
            vol += w * ((problem.f)(x) + divergence(sigma, t, x)).norm_squared();
            st += w * (symmetric_gradient(&averaged.field, t, x) - post.strain.eval_matrix(t, x)).norm_squared();
        }
        volume[t] = h * h * vol;
        strain_average[t] = mu * mu * st;
    }

    let mut jump = vec![0.0; nt];
    let mut neumann = vec![0.0; nt];
    let mut jump_total = 0.0;
    for side in mesh.sides() {
        let [a, b] = side.vertices.map(|i| mesh.vertices()[i]);
        let nu = side.normal;
        match side.kind {
            SideKind::Interior => {
                let minus = side.minus.expect("interior sides have two neighbours");
                let mut sum = 0.0;
                for (x, w) in segment_points(a, b, q) {
                    let d = (sigma.eval_matrix(side.plus, x) - sigma.eval_matrix(minus, x)) * nu;
                    sum += w * d.norm_squared();
                }
                let term = side.length * sum;
                jump_total += term;
                let share = match options.jumps {
                    JumpAssignment::Halved => 0.5 * term,
                    JumpAssignment::Full => term,
                };
                jump[side.plus] += share;
                jump[minus] += share;
            }
            SideKind::Neumann => {
                let mut sum = 0.0;
                for (x, w) in segment_points(a, b, q) {
                    sum += w * ((problem.g)(x, nu) - sigma.eval_matrix(side.plus, x) * nu).norm_squared();
                }
                neumann[side.plus] += side.length * sum;
            }
            SideKind::Dirichlet => {}
        }
    }

    let (_, mu_max) = problem.material.mu_bounds(mesh);
    let osc_ud = oscillation_dirichlet(&*problem.u_d.value, &*problem.u_d.gradient, mesh, k);
    let dirichlet: Vec<f64> = osc_ud.iter().map(|o| mu_max * mu_max * o).collect();

    let indicators: Vec<f64> = (0..nt)
        .map(|t| volume[t] + strain_average[t] + jump[t] + neumann[t] + dirichlet[t])
        .collect();
    let eta_squared = volume.iter().sum::<f64>() + strain_average.iter().sum::<f64>() + jump_total + neumann.iter().sum::<f64>();
    let eta_tilde_squared = eta_squared + dirichlet.iter().sum::<f64>();

    let osc_f = oscillation_volume(&*problem.f, mesh, k)?.iter().sum::<f64>().sqrt();
    let osc_g = oscillation_neumann(&*problem.g, mesh, k).iter().sum::<f64>().sqrt();
    let osc_dirichlet = osc_ud.iter().sum::<f64>().sqrt();

    Ok(EstimateBreakdown {
        volume,
        strain_average,
        jump,
        neumann,
        dirichlet,
        indicators,
        eta_squared,
        eta_tilde_squared,
        osc_f,
        osc_g,
        osc_dirichlet,
    })
}

/// `Σ_{F ∈ 𝓕(Ω)} h_F ‖[σ_h]_F ν_F‖²_{L²(F)}` from an element loop in which
/// every element integrates its own trace against its neighbour's.
pub fn jump_term_by_elements(mesh: &Triangulation, sigma: &PiecewisePolyField) -> f64 {
    let q = quadrature_degree(sigma.degree());
    let mut total = 0.0;
    for t in 0..mesh.n_elements() {
        for s in mesh.element_sides(t) {
            let side = mesh.side(s);
            let Some(minus) = side.minus else { continue };
            let other = if side.plus == t { minus } else { side.plus };
            let [a, b] = side.vertices.map(|i| mesh.vertices()[i]);
            let nu = side.normal * mesh.orientation(t, s);
            let mut sum = 0.0;
            for (x, w) in segment_points(a, b, q) {
                let d = (sigma.eval_matrix(t, x) - sigma.eval_matrix(other, x)) * nu;
                sum += w * d.norm_squared();
            }
            total += 0.5 * side.length * sum;
        }
    }
    total
}

/// Exact error norms of a discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactErrors {
    /// `‖σ − σ_h‖`.
    pub stress: f64,
    /// `‖Π_𝒯 u − u_𝒯‖` with the projection onto the cell space.
    pub displacement_l2: f64,
    /// `‖(1 − Π_𝒯^k) σ‖`.
    pub stress_best: f64,
    /// `‖σ‖`.
    pub stress_norm: f64,
}

/// Levels of geometric subdivision toward a singular vertex.
const SINGULAR_LEVELS: usize = 3;

/// Quadrature points and weights on element `t`, graded toward `singular`
/// when it is a vertex of the element.
pub fn element_quadrature(mesh: &Triangulation, t: usize, degree: usize, singular: Option<Point>) -> Result<Vec<(Point, f64)>> {
    let rule = quad_rule(DomainKind::Triangle, degree.min(MAX_DEGREE))?;
    let verts = mesh.element_vertices(t);
    let corner = singular.and_then(|p| {
        let tol = 1e-12 * mesh.geometry(t).diameter;
        verts.iter().position(|v| (v - p).norm() <= tol)
    });
    let Some(i) = corner else {
        return Ok(rule.on_triangle(&verts).collect());
    };
    let mut pieces = Vec::new();
    let mut current = [verts[i], verts[(i + 1) % 3], verts[(i + 2) % 3]];
    for _ in 0..SINGULAR_LEVELS {
        let [p, a, b] = current;
        let (pa, pb, ab) = ((p + a) / 2.0, (p + b) / 2.0, (a + b) / 2.0);
        pieces.push([pa, a, ab]);
        pieces.push([pb, ab, b]);
        pieces.push([pa, ab, pb]);
        current = [p, pa, pb];
    }
    pieces.push(current);
    let mut out = Vec::new();
    for tri in &pieces {
        out.extend(rule.on_triangle(tri));
    }
    Ok(out)
}

/// Computes `‖σ − σ_h‖`, `‖Π_𝒯 u − u_𝒯‖` and `‖(1 − Π_𝒯^k)σ‖`.
pub fn exact_errors(mesh: &Triangulation, problem: &ProblemData, post: &PostProcessed) -> Result<ExactErrors> {
    let exact = problem.exact.as_ref().ok_or(Error::MissingExactSolution)?;
    let k = post.stress.degree();
    let kc = post.cell.degree();
    let degree = (2 * (k + 2) + 4).max(20);
    let (mut stress, mut l2, mut best, mut norm) = (0.0, 0.0, 0.0, 0.0);
    let (nk, nc) = (dim_p(k), dim_p(kc));
    for t in 0..mesh.n_elements() {
        let points = element_quadrature(mesh, t, degree, exact.singular_point)?;
        let basis = &post.stress.bases()[t];
        let mut sig_coef = [0.0f64; 4].map(|_| vec![0.0; nk]);
        let mut u_coef = [vec![0.0; nc], vec![0.0; nc]];
        let mut values = Vec::with_capacity(points.len());
        for &(x, w) in &points {
            let phi = basis.eval(x);
            let s = (exact.stress)(x);
            let u = (exact.displacement)(x);
            let sv = [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]];
            for c in 0..4 {
                for m in 0..nk {
                    sig_coef[c][m] += w * sv[c] * phi[m];
                }
            }
            for c in 0..2 {
                for m in 0..nc {
                    u_coef[c][m] += w * u[c] * phi[m];
                }
            }
            values.push((phi, s));
        }
        let cell = post.cell.block(t);
        for (c, coef) in u_coef.iter().enumerate() {
            l2 += (0..nc).map(|m| (coef[m] - cell[c * nc + m]).powi(2)).sum::<f64>();
        }
        for (&(x, w), (phi, s)) in points.iter().zip(&values) {
            let sh = post.stress.eval_matrix(t, x);
            stress += w * (s - sh).norm_squared();
            norm += w * s.norm_squared();
            let sv = [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]];
            for c in 0..4 {
                let p: f64 = (0..nk).map(|m| sig_coef[c][m] * phi[m]).sum();
                best += w * (sv[c] - p).powi(2);
            }
        }
    }
    Ok(ExactErrors {
        stress: stress.sqrt(),
        displacement_l2: l2.sqrt(),
        stress_best: best.sqrt(),
        stress_norm: norm.sqrt(),
    })
}
