//! Piecewise polynomial fields, L² projections and data oscillations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::basis::{dim_p, CellBasis, FaceBasis};
use crate::mesh::{SideKind, Triangulation};
use crate::quadrature::{self, gauss_lobatto_nodes};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    /// 2×2 matrices, stored row-major as four scalar blocks.
    Matrix,
}

impl Rank {
    pub const fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 2,
            Rank::Matrix => 4,
        }
    }
}

/// Orthonormal cell bases of one degree for every element of a mesh.
pub fn cell_bases(mesh: &Triangulation, degree: usize) -> Result<Arc<[CellBasis]>> {
    (0..mesh.n_elements())
        .map(|t| CellBasis::orthonormal(&mesh.element_vertices(t), degree).map_err(|_| Error::DegenerateElement(t)))
        .collect()
}

/// Legendre basis on side `s`, parametrized from its first to its second vertex.
pub fn face_basis(mesh: &Triangulation, s: usize, degree: usize) -> FaceBasis {
    let [a, b] = mesh.side(s).vertices;
    FaceBasis::new(mesh.vertices()[a], mesh.vertices()[b], degree)
}

/// A field in `P_degree(𝒯)` of the given rank. Each element block holds the
/// coefficients of every component in turn against the element's cell basis.
#[derive(Debug, Clone)]
pub struct PiecewisePolyField {
    degree: usize,
    rank: Rank,
    bases: Arc<[CellBasis]>,
    coeffs: Vec<f64>,
}

impl PiecewisePolyField {
    pub fn new(degree: usize, rank: Rank, bases: Arc<[CellBasis]>, coeffs: Vec<f64>) -> Self {
        assert!(bases.iter().all(|b| b.degree() >= degree), "bases must contain P_degree");
        assert_eq!(coeffs.len(), bases.len() * rank.components() * dim_p(degree));
        Self {
            degree,
            rank,
            bases,
            coeffs,
        }
    }

    pub fn zeros(degree: usize, rank: Rank, bases: Arc<[CellBasis]>) -> Self {
        let n = bases.len() * rank.components() * dim_p(degree);
        Self::new(degree, rank, bases, vec![0.0; n])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn bases(&self) -> &Arc<[CellBasis]> {
        &self.bases
    }

    pub fn n_elements(&self) -> usize {
        self.bases.len()
    }

    pub fn block_size(&self) -> usize {
        self.rank.components() * dim_p(self.degree)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn block(&self, t: usize) -> &[f64] {
        let n = self.block_size();
        &self.coeffs[t * n..(t + 1) * n]
    }

    pub fn block_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.block_size();
        &mut self.coeffs[t * n..(t + 1) * n]
    }

    /// Component values at `x` in element `t`.
    pub fn eval(&self, t: usize, x: Point) -> Vec<f64> {
        let phi = self.bases[t].eval(x);
        self.combine(t, &phi)
    }

    /// Component values and first derivatives `(value, ∂x, ∂y)`.
    pub fn eval_with_grad(&self, t: usize, x: Point) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let e = self.bases[t].eval_with_grad(x);
        (self.combine(t, &e.value), self.combine(t, &e.dx), self.combine(t, &e.dy))
    }

    fn combine(&self, t: usize, phi: &DVector<f64>) -> Vec<f64> {
        let n = dim_p(self.degree);
        self.block(t)
            .chunks(n)
            .map(|c| c.iter().zip(phi.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn eval_vector(&self, t: usize, x: Point) -> Vector2<f64> {
        debug_assert_eq!(self.rank, Rank::Vector);
        let v = self.eval(t, x);
        Vector2::new(v[0], v[1])
    }

    pub fn eval_matrix(&self, t: usize, x: Point) -> Matrix2<f64> {
        debug_assert_eq!(self.rank, Rank::Matrix);
        let v = self.eval(t, x);
        Matrix2::new(v[0], v[1], v[2], v[3])
    }

    /// Squared L² norm on element `t`; exact because the bases are orthonormal.
    pub fn norm_squared_on(&self, t: usize) -> f64 {
        self.block(t).iter().map(|c| c * c).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// L² projection onto a lower degree, obtained by truncation.
    pub fn truncate(&self, degree: usize) -> Self {
        assert!(degree <= self.degree);
        let (n_old, n_new) = (dim_p(self.degree), dim_p(degree));
        let coeffs = self
            .coeffs
            .chunks(n_old)
            .flat_map(|c| c[..n_new].iter().copied())
            .collect();
        Self::new(degree, self.rank, self.bases.clone(), coeffs)
    }
}

/// Coefficients of `Π_T^degree f` for an `N`-component field, component by
/// component, against the first `dim P_degree` functions of `basis`.
pub fn l2_project_cell<const N: usize>(
    f: impl Fn(Point) -> [f64; N],
    basis: &CellBasis,
    vertices: &[Point; 3],
    degree: usize,
    quad_degree: usize,
) -> Vec<f64> {
    let n = dim_p(degree);
    let mut out = vec![0.0; N * n];
    for (x, w) in quadrature::triangle(quad_degree.max(2 * degree)).on_triangle(vertices) {
        let phi = basis.eval(x);
        let v = f(x);
        for c in 0..N {
            for i in 0..n {
                out[c * n + i] += w * v[c] * phi[i];
            }
        }
    }
    out
}

/// Coefficients of `Π_F^degree g` against a Legendre face basis.
pub fn l2_project_face<const N: usize>(g: impl Fn(Point) -> [f64; N], basis: &FaceBasis, quad_degree: usize) -> Vec<f64> {
    let n = basis.dim();
    let (a, b) = basis.endpoints();
    let mut out = vec![0.0; N * n];
    for (t, x, w) in quadrature::segment(quad_degree.max(2 * basis.degree())).on_segment(a, b) {
        let psi = basis.eval(t);
        let v = g(x);
        for c in 0..N {
            for i in 0..n {
                out[c * n + i] += w * v[c] * psi[i];
            }
        }
    }
    out
}

/// `‖(1 − Π_T^k) f‖²_{L²(T)}` for a vector field on one element.
fn cell_residual_squared(f: &dyn Fn(Point) -> Vector2<f64>, vertices: &[Point; 3], k: usize, quad: usize) -> Result<f64> {
    let basis = CellBasis::orthonormal(vertices, k)?;
    let coef = l2_project_cell(|x| f(x).into(), &basis, vertices, k, quad);
    let n = dim_p(k);
    let mut sum = 0.0;
    for (x, w) in quadrature::triangle(quad).on_triangle(vertices) {
        let phi = basis.eval(x);
        let v = f(x);
        for c in 0..2 {
            let p: f64 = (0..n).map(|i| coef[c * n + i] * phi[i]).sum();
            sum += w * (v[c] - p).powi(2);
        }
    }
    Ok(sum)
}

/// Per-element contributions `h_T² ‖(1 − Π_T^k) f‖²_{L²(T)}` to `osc(f, 𝒯)²`.
pub fn oscillation_volume(f: &dyn Fn(Point) -> Vector2<f64>, mesh: &Triangulation, k: usize) -> Result<Vec<f64>> {
    let quad = 2 * (k + 1) + 2;
    (0..mesh.n_elements())
        .map(|t| {
            let h = mesh.geometry(t).diameter;
            cell_residual_squared(f, &mesh.element_vertices(t), k, quad)
                .map(|r| h * h * r)
                .map_err(|_| Error::DegenerateElement(t))
        })
        .collect()
}

/// Per-element contributions `h_F ‖(1 − Π_F^k) g‖²_{L²(F)}` to
/// `osc(g, 𝓕_N)²`, summed over the Neumann sides of each element. The
/// traction receives the point and the outward unit normal.
pub fn oscillation_neumann(g: &dyn Fn(Point, Point) -> Vector2<f64>, mesh: &Triangulation, k: usize) -> Vec<f64> {
    let quad = 2 * (k + 1) + 2;
    let mut out = vec![0.0; mesh.n_elements()];
    for (s, side) in mesh.sides().iter().enumerate() {
        if side.kind != SideKind::Neumann {
            continue;
        }
        let fb = face_basis(mesh, s, k);
        let nu = side.normal;
        let coef = l2_project_face(|x| g(x, nu).into(), &fb, quad);
        let (a, b) = fb.endpoints();
        let n = fb.dim();
        let mut sum = 0.0;
        for (t, x, w) in quadrature::segment(quad).on_segment(a, b) {
            let psi = fb.eval(t);
            let v = g(x, nu);
            for c in 0..2 {
                let p: f64 = (0..n).map(|i| coef[c * n + i] * psi[i]).sum();
                sum += w * (v[c] - p).powi(2);
            }
        }
        out[side.plus] += side.length * sum;
    }
    out
}

/// Per-element contributions `h_F ‖∂_s(u_D − I_D u_D)‖²_{L²(F)}` to
/// `osc(u_D, 𝓕_D)²`, where `I_D` interpolates at the `k + 2` Gauss–Lobatto
/// points of each Dirichlet side. `grad` is the Jacobian of `u_D`.
pub fn oscillation_dirichlet(
    u_d: &dyn Fn(Point) -> Vector2<f64>,
    grad: &dyn Fn(Point) -> Matrix2<f64>,
    mesh: &Triangulation,
    k: usize,
) -> Vec<f64> {
    let quad = 2 * (k + 1) + 4;
    let nodes: Vec<f64> = gauss_lobatto_nodes(k + 2).iter().map(|s| 0.5 * (s + 1.0)).collect();
    let mut out = vec![0.0; mesh.n_elements()];
    for (s, side) in mesh.sides().iter().enumerate() {
        if side.kind != SideKind::Dirichlet {
            continue;
        }
        let fb = face_basis(mesh, s, k + 1);
        let (a, b) = fb.endpoints();
        let tangent = (b - a) / fb.length();
        let n = fb.dim();
        let vander = DMatrix::from_fn(n, n, |i, j| fb.eval(nodes[i])[j]);
        let lu = vander.lu();
        let mut coef = [DVector::zeros(n), DVector::zeros(n)];
        for (c, cf) in coef.iter_mut().enumerate() {
            let rhs = DVector::from_fn(n, |i, _| u_d(a + (b - a) * nodes[i])[c]);
            *cf = lu.solve(&rhs).expect("Lobatto Vandermonde matrices are invertible");
        }
        let mut sum = 0.0;
        for (t, x, w) in quadrature::segment(quad).on_segment(a, b) {
            let dpsi = fb.eval_derivative(t);
            let ds = grad(x) * tangent;
            for c in 0..2 {
                sum += w * (ds[c] - coef[c].dot(&dpsi)).powi(2);
            }
        }
        out[side.plus] += side.length * sum;
    }
    out
}
