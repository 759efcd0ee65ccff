//! Material law, loads, boundary data and exact solutions of the benchmarks.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::mesh::{SideKind, Triangulation};
use crate::{Error, Point, Result};

pub type VectorField = Arc<dyn Fn(Point) -> Vector2<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> Matrix2<f64> + Send + Sync>;
/// Traction `g(x, ν)` given the point and the outward unit normal.
pub type Traction = Arc<dyn Fn(Point, Point) -> Vector2<f64> + Send + Sync>;

/// First root of `α sin(2ω) + sin(2ωα) = 0` for `ω = 3π/4`.
pub const LSHAPE_ALPHA: f64 = 0.544483736782;
pub const LSHAPE_OMEGA: f64 = 3.0 * PI / 4.0;

/// The exponent recomputed by bisection on `(0.5, 0.6)`.
pub fn lshape_exponent() -> f64 {
    let f = |a: f64| a * (2.0 * LSHAPE_OMEGA).sin() + (2.0 * LSHAPE_OMEGA * a).sin();
    let (mut lo, mut hi) = (0.5, 0.6);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lamé parameters `(λ, μ)` from Young's modulus and Poisson ratio.
pub fn lame_from_young_poisson(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e > 0.0) {
        return Err(Error::InvalidMaterial(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::InvalidMaterial(format!("Poisson ratio must lie in (-1, 1/2), got {nu}")));
    }
    Ok((e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu))))
}

/// `ℂτ = 2μτ + λ tr(τ) I`.
pub fn apply_elasticity_tensor(tau: &Matrix2<f64>, lambda: f64, mu: f64) -> Matrix2<f64> {
    2.0 * mu * tau + Matrix2::identity() * (lambda * tau.trace())
}

/// `ℂ⁻¹σ = σ/(2μ) − λ tr(σ) I / (2μ(2μ + 2λ))`.
pub fn inverse_elasticity_tensor(sigma: &Matrix2<f64>, lambda: f64, mu: f64) -> Matrix2<f64> {
    sigma / (2.0 * mu) - Matrix2::identity() * (lambda * sigma.trace() / (2.0 * mu * (2.0 * mu + 2.0 * lambda)))
}

pub fn sym(m: &Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (m + m.transpose())
}

/// Isotropic material with Lamé parameters that are constant or vary from
/// element to element.
#[derive(Clone)]
pub enum Material {
    Homogeneous { lambda: f64, mu: f64 },
    /// `(λ, μ)` as a function of position, sampled at element centroids.
    Piecewise(Arc<dyn Fn(Point) -> (f64, f64) + Send + Sync>),
}

impl fmt::Debug for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Material::Homogeneous { lambda, mu } => write!(f, "Homogeneous {{ lambda: {lambda}, mu: {mu} }}"),
            Material::Piecewise(_) => write!(f, "Piecewise(..)"),
        }
    }
}

impl Material {
    pub fn from_young_poisson(e: f64, nu: f64) -> Result<Self> {
        let (lambda, mu) = lame_from_young_poisson(e, nu)?;
        Ok(Material::Homogeneous { lambda, mu })
    }

    pub fn lame(&self, x: Point) -> (f64, f64) {
        match self {
            Material::Homogeneous { lambda, mu } => (*lambda, *mu),
            Material::Piecewise(f) => f(x),
        }
    }

    /// `(λ|_T, μ|_T)` for element `t`.
    pub fn on_element(&self, mesh: &Triangulation, t: usize) -> (f64, f64) {
        self.lame(mesh.geometry(t).centroid)
    }

    /// `(μ₀, μ₁)`, the extreme values of `μ` over the mesh.
    pub fn mu_bounds(&self, mesh: &Triangulation) -> (f64, f64) {
        (0..mesh.n_elements())
            .map(|t| self.on_element(mesh, t).1)
            .fold((f64::INFINITY, 0.0), |(lo, hi), m| (lo.min(m), hi.max(m)))
    }

    /// Checks `λ ≥ 0` and `μ > 0` on every element; without a Neumann part
    /// the parameters must be global constants.
    pub fn validate(&self, mesh: &Triangulation) -> Result<()> {
        let params: Vec<(f64, f64)> = (0..mesh.n_elements()).map(|t| self.on_element(mesh, t)).collect();
        if let Some((t, (l, m))) = params.iter().enumerate().find(|(_, (l, m))| !(*l >= 0.0 && *m > 0.0)) {
            return Err(Error::InvalidMaterial(format!("element {t}: lambda = {l}, mu = {m}")));
        }
        let has_neumann = mesh.sides().iter().any(|s| s.kind == SideKind::Neumann);
        if !has_neumann && params.iter().any(|p| *p != params[0]) {
            return Err(Error::InvalidMaterial(
                "Lamé parameters must be constant when the whole boundary is Dirichlet".into(),
            ));
        }
        Ok(())
    }
}

/// Dirichlet datum with its Jacobian, used for tangential derivatives.
#[derive(Clone)]
pub struct DirichletDatum {
    pub value: VectorField,
    pub gradient: MatrixField,
}

impl DirichletDatum {
    pub fn zero() -> Self {
        Self {
            value: Arc::new(|_| Vector2::zeros()),
            gradient: Arc::new(|_| Matrix2::zeros()),
        }
    }
}

/// Exact displacement, its Jacobian `∂_j u_i` and the stress `σ = ℂε(u)`.
#[derive(Clone)]
pub struct ExactSolution {
    pub displacement: VectorField,
    pub gradient: MatrixField,
    pub stress: MatrixField,
    /// Point where the stress is singular, if any.
    pub singular_point: Option<Point>,
}

/// Data of the elasticity problem `−div ℂε(u) = f` with `u = u_D` on `Γ_D`
/// and `σν = g` on `Γ_N`.
#[derive(Clone)]
pub struct ProblemData {
    pub name: String,
    pub material: Material,
    pub f: VectorField,
    pub g: Traction,
    pub u_d: DirichletDatum,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("name", &self.name)
            .field("material", &self.material)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

/// Cook's membrane: clamped on the left, unit vertical shear on the right.
pub fn cooks(material: Material) -> ProblemData {
    ProblemData {
        name: "cooks".into(),
        material,
        f: Arc::new(|_| Vector2::zeros()),
        g: Arc::new(|x, _| if x.x > 48.0 - 1e-9 { Vector2::new(0.0, 1.0) } else { Vector2::zeros() }),
        u_d: DirichletDatum::zero(),
        exact: None,
    }
}

/// Benchmark for meshes read from file: unit downward body force, traction
/// free Neumann part, clamped Dirichlet part.
pub fn mesh_file_benchmark(material: Material) -> ProblemData {
    ProblemData {
        name: "mesh".into(),
        material,
        f: Arc::new(|_| Vector2::new(0.0, -1.0)),
        g: Arc::new(|_, _| Vector2::zeros()),
        u_d: DirichletDatum::zero(),
        exact: None,
    }
}

fn lshape_profile(phi: f64, lambda: f64, mu: f64) -> [f64; 4] {
    let a = LSHAPE_ALPHA;
    let w = LSHAPE_OMEGA;
    let c1 = -((a + 1.0) * w).cos() / ((a - 1.0) * w).cos();
    let c2 = 2.0 * (lambda + 2.0 * mu) / (lambda + mu);
    let (sp, cp) = ((a + 1.0) * phi).sin_cos();
    let (sm, cm) = ((a - 1.0) * phi).sin_cos();
    let ar = -(a + 1.0) * cp + (c2 - a - 1.0) * c1 * cm;
    let bphi = (a + 1.0) * sp + (c2 + a - 1.0) * c1 * sm;
    let dar = (a + 1.0).powi(2) * sp - (c2 - a - 1.0) * c1 * (a - 1.0) * sm;
    let dbphi = (a + 1.0).powi(2) * cp + (c2 + a - 1.0) * c1 * (a - 1.0) * cm;
    [ar, bphi, dar, dbphi]
}

/// Displacement and Jacobian of the L-shape solution at `x ≠ 0`.
pub fn lshape_displacement(x: Point, lambda: f64, mu: f64) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let phi = x.y.atan2(x.x);
    let [ar, bphi, dar, dbphi] = lshape_profile(phi, lambda, mu);
    let a = LSHAPE_ALPHA;
    let (s, c) = phi.sin_cos();
    let q = Matrix2::new(c, -s, s, c);
    let scale = r.powf(a) / (2.0 * mu);
    let u = q * Vector2::new(scale * ar, scale * bphi);
    let polar = Matrix2::new(a * ar, dar - bphi, a * bphi, dbphi + ar) * (scale / r);
    Ok((u, q * polar * q.transpose()))
}

/// Displacement and stress of the L-shape solution at `x ≠ 0`.
pub fn lshape_exact(x: Point, lambda: f64, mu: f64) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let (u, grad) = lshape_displacement(x, lambda, mu)?;
    Ok((u, apply_elasticity_tensor(&sym(&grad), lambda, mu)))
}

/// The L-shape benchmark: no loads, inhomogeneous Dirichlet data from the
/// singular exact solution.
pub fn lshape(lambda: f64, mu: f64) -> ProblemData {
    debug_assert!((lshape_exponent() - LSHAPE_ALPHA).abs() < 1e-11);
    let u: VectorField = Arc::new(move |x| lshape_displacement(x, lambda, mu).map(|p| p.0).unwrap_or_else(|_| Vector2::zeros()));
    let grad: MatrixField =
        Arc::new(move |x| lshape_displacement(x, lambda, mu).map(|p| p.1).unwrap_or_else(|_| Matrix2::from_element(f64::NAN)));
    let stress: MatrixField =
        Arc::new(move |x| lshape_exact(x, lambda, mu).map(|p| p.1).unwrap_or_else(|_| Matrix2::from_element(f64::NAN)));
    ProblemData {
        name: "lshape".into(),
        material: Material::Homogeneous { lambda, mu },
        f: Arc::new(|_| Vector2::zeros()),
        g: Arc::new(|_, _| Vector2::zeros()),
        u_d: DirichletDatum {
            value: u.clone(),
            gradient: grad.clone(),
        },
        exact: Some(ExactSolution {
            displacement: u,
            gradient: grad,
            stress,
            singular_point: Some(Point::zeros()),
        }),
    }
}

/// Bivariate polynomial as a list of monomials `c x^a y^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    pub terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn eval(&self, x: Point) -> f64 {
        self.terms.iter().map(|&(a, b, c)| c * x.x.powi(a as i32) * x.y.powi(b as i32)).sum()
    }

    pub fn dx(&self) -> Poly2 {
        Poly2 {
            terms: self.terms.iter().filter(|t| t.0 > 0).map(|&(a, b, c)| (a - 1, b, c * a as f64)).collect(),
        }
    }

    pub fn dy(&self) -> Poly2 {
        Poly2 {
            terms: self.terms.iter().filter(|t| t.1 > 0).map(|&(a, b, c)| (a, b - 1, c * b as f64)).collect(),
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|t| t.2 != 0.0).map(|t| t.0 + t.1).max().unwrap_or(0)
    }
}

/// Vector polynomial `u = (u₁, u₂)` of total degree `d`. Degrees 1 and 2 give
/// `(x, −y)` and `(x², xy)`; higher degrees use fixed dense coefficients.
pub fn manufactured_displacement(d: u32) -> [Poly2; 2] {
    match d {
        0 => [Poly2 { terms: vec![(0, 0, 1.0)] }, Poly2 { terms: vec![(0, 0, -0.5)] }],
        1 => [Poly2 { terms: vec![(1, 0, 1.0)] }, Poly2 { terms: vec![(0, 1, -1.0)] }],
        2 => [Poly2 { terms: vec![(2, 0, 1.0)] }, Poly2 { terms: vec![(1, 1, 1.0)] }],
        _ => {
            let mut u1 = Vec::new();
            let mut u2 = Vec::new();
            for total in 0..=d {
                for b in 0..=total {
                    let a = total - b;
                    let s = f64::from(3 * a + 5 * b + 1);
                    u1.push((a, b, (0.7 * s).sin() / f64::from(total + 1)));
                    u2.push((a, b, (1.3 * s + 0.4).cos() / f64::from(total + 1)));
                }
            }
            [Poly2 { terms: u1 }, Poly2 { terms: u2 }]
        }
    }
}

/// Problem with the polynomial exact solution of degree `d`, homogeneous
/// material, and loads computed from `u`.
pub fn manufactured_polynomial(d: u32, lambda: f64, mu: f64) -> ProblemData {
    let u = manufactured_displacement(d);
    let du = [[u[0].dx(), u[0].dy()], [u[1].dx(), u[1].dy()]];
    let h = [
        [du[0][0].dx(), du[0][0].dy(), du[0][1].dy()],
        [du[1][0].dx(), du[1][0].dy(), du[1][1].dy()],
    ];
    let disp: VectorField = {
        let u = u.clone();
        Arc::new(move |x| Vector2::new(u[0].eval(x), u[1].eval(x)))
    };
    let grad: MatrixField = {
        let du = du.clone();
        Arc::new(move |x| Matrix2::new(du[0][0].eval(x), du[0][1].eval(x), du[1][0].eval(x), du[1][1].eval(x)))
    };
    let stress: MatrixField = {
        let grad = grad.clone();
        Arc::new(move |x| apply_elasticity_tensor(&sym(&grad(x)), lambda, mu))
    };
    // −div σ = −(μ Δu + (λ + μ) ∇ div u)
    let f: VectorField = Arc::new(move |x| {
        let [[a_xx, a_xy, a_yy], [b_xx, b_xy, b_yy]] = h.clone().map(|r| r.map(|p| p.eval(x)));
        let lap = Vector2::new(a_xx + a_yy, b_xx + b_yy);
        let grad_div = Vector2::new(a_xx + b_xy, a_xy + b_yy);
        -(mu * lap + (lambda + mu) * grad_div)
    });
    let g: Traction = {
        let stress = stress.clone();
        Arc::new(move |x, nu| stress(x) * nu)
    };
    ProblemData {
        name: format!("polynomial-{d}"),
        material: Material::Homogeneous { lambda, mu },
        f,
        g,
        u_d: DirichletDatum {
            value: disp.clone(),
            gradient: grad.clone(),
        },
        exact: Some(ExactSolution {
            displacement: disp,
            gradient: grad,
            stress,
            singular_point: None,
        }),
    }
}

/// Smooth solution `u = (s, s)` with `s = sin(πx) sin(πy)`, vanishing on the
/// boundary of the unit square.
pub fn smooth_square(lambda: f64, mu: f64) -> ProblemData {
    let disp: VectorField = Arc::new(|x| {
        let s = (PI * x.x).sin() * (PI * x.y).sin();
        Vector2::new(s, s)
    });
    let grad: MatrixField = Arc::new(|x| {
        let sx = PI * (PI * x.x).cos() * (PI * x.y).sin();
        let sy = PI * (PI * x.x).sin() * (PI * x.y).cos();
        Matrix2::new(sx, sy, sx, sy)
    });
    let stress: MatrixField = {
        let grad = grad.clone();
        Arc::new(move |x| apply_elasticity_tensor(&sym(&grad(x)), lambda, mu))
    };
    let f: VectorField = Arc::new(move |x| {
        let s = (PI * x.x).sin() * (PI * x.y).sin();
        let sxy = PI * PI * (PI * x.x).cos() * (PI * x.y).cos();
        let sxx = -PI * PI * s;
        let lap = -2.0 * PI * PI * s;
        let grad_div = Vector2::new(sxx + sxy, sxy + sxx);
        -(mu * Vector2::new(lap, lap) + (lambda + mu) * grad_div)
    });
    let g: Traction = {
        let stress = stress.clone();
        Arc::new(move |x, nu| stress(x) * nu)
    };
    ProblemData {
        name: "square".into(),
        material: Material::Homogeneous { lambda, mu },
        f,
        g,
        u_d: DirichletDatum {
            value: disp.clone(),
            gradient: grad.clone(),
        },
        exact: Some(ExactSolution {
            displacement: disp,
            gradient: grad,
            stress,
            singular_point: None,
        }),
    }
}
