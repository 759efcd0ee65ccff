//! Polynomial bases on triangles and segments.
//!
//! Cell bases are scaled monomials `((x - x_T)/h_T)^a ((y - y_T)/h_T)^b`,
//! ordered by total degree and orthonormalized in `L²(T)` by a Cholesky
//! factor of their Gram matrix. The transformation is lower triangular, so
//! the first `dim P_p` functions of a degree-`q` basis span `P_p(T)` for every
//! `p ≤ q`. Face bases are scaled Legendre polynomials, orthonormal in `L²(F)`.

use nalgebra::{DMatrix, DVector};

use crate::quadrature;
use crate::{Error, Point, Result};

/// Dimension of `P_k` in two variables.
pub const fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Exponents `(a, b)` of the monomials up to total degree `k`, in basis order.
pub fn exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_p(k));
    for d in 0..=k {
        for b in 0..=d {
            out.push((d - b, b));
        }
    }
    out
}

/// Values, gradients and second derivatives of a basis at one point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub value: DVector<f64>,
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
}

/// Hierarchical polynomial basis of `P_degree(T)`.
#[derive(Debug, Clone)]
pub struct CellBasis {
    degree: usize,
    center: Point,
    scale: f64,
    exps: Vec<(usize, usize)>,
    /// row `i` holds the monomial coefficients of basis function `i`
    transform: DMatrix<f64>,
}

impl CellBasis {
    /// Plain scaled monomials.
    pub fn monomial(center: Point, scale: f64, degree: usize) -> Self {
        let n = dim_p(degree);
        Self {
            degree,
            center,
            scale,
            exps: exponents(degree),
            transform: DMatrix::identity(n, n),
        }
    }

    /// Basis orthonormal in `L²(T)` for the triangle with vertices `v`.
    pub fn orthonormal(v: &[Point; 3], degree: usize) -> Result<Self> {
        let center = (v[0] + v[1] + v[2]) / 3.0;
        let scale = (v[1] - v[0]).norm().max((v[2] - v[1]).norm()).max((v[0] - v[2]).norm());
        let mono = Self::monomial(center, scale, degree);
        let n = mono.dim();
        let mut gram = DMatrix::zeros(n, n);
        let mut m = vec![0.0; n];
        for (x, w) in quadrature::triangle(2 * degree).on_triangle(v) {
            mono.monomials_into(x, &mut m);
            for i in 0..n {
                for j in 0..=i {
                    gram[(i, j)] += w * m[i] * m[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[(j, i)] = gram[(i, j)];
            }
        }
        let chol = gram.cholesky().ok_or(Error::DegenerateElement(usize::MAX))?;
        let l = chol.l();
        let transform = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Error::DegenerateElement(usize::MAX))?;
        Ok(Self { transform, ..mono })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn monomials_into(&self, x: Point, out: &mut [f64]) {
        let z = (x - self.center) / self.scale;
        let (px, py) = powers(z, self.degree);
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            *o = px[a] * py[b];
        }
    }

    fn apply(&self, m: &[f64]) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(n, |i, _| (0..=i).map(|j| self.transform[(i, j)] * m[j]).sum())
    }

    /// Basis values at `x`.
    pub fn eval(&self, x: Point) -> DVector<f64> {
        let mut m = vec![0.0; self.dim()];
        self.monomials_into(x, &mut m);
        self.apply(&m)
    }

    /// Basis values and first derivatives at `x`.
    pub fn eval_with_grad(&self, x: Point) -> BasisEval {
        let z = (x - self.center) / self.scale;
        let (px, py) = powers(z, self.degree);
        let n = self.dim();
        let (mut m, mut mx, mut my) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (i, &(a, b)) in self.exps.iter().enumerate() {
            m[i] = px[a] * py[b];
            if a > 0 {
                mx[i] = a as f64 * px[a - 1] * py[b] / self.scale;
            }
            if b > 0 {
                my[i] = b as f64 * px[a] * py[b - 1] / self.scale;
            }
        }
        BasisEval {
            value: self.apply(&m),
            dx: self.apply(&mx),
            dy: self.apply(&my),
        }
    }

    /// Second derivatives `(∂xx, ∂xy, ∂yy)` of every basis function at `x`.
    pub fn hessian(&self, x: Point) -> [DVector<f64>; 3] {
        let z = (x - self.center) / self.scale;
        let (px, py) = powers(z, self.degree);
        let n = self.dim();
        let s2 = self.scale * self.scale;
        let (mut mxx, mut mxy, mut myy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (i, &(a, b)) in self.exps.iter().enumerate() {
            if a > 1 {
                mxx[i] = (a * (a - 1)) as f64 * px[a - 2] * py[b] / s2;
            }
            if a > 0 && b > 0 {
                mxy[i] = (a * b) as f64 * px[a - 1] * py[b - 1] / s2;
            }
            if b > 1 {
                myy[i] = (b * (b - 1)) as f64 * px[a] * py[b - 2] / s2;
            }
        }
        [self.apply(&mxx), self.apply(&mxy), self.apply(&myy)]
    }
}

fn powers(z: Point, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut px = vec![1.0; k + 1];
    let mut py = vec![1.0; k + 1];
    for i in 1..=k {
        px[i] = px[i - 1] * z.x;
        py[i] = py[i - 1] * z.y;
    }
    (px, py)
}

/// Legendre basis of `P_degree(F)` on the segment `F = [a, b]`, orthonormal
/// in `L²(F)`.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    degree: usize,
    a: Point,
    b: Point,
    length: f64,
}

impl FaceBasis {
    pub fn new(a: Point, b: Point, degree: usize) -> Self {
        Self {
            degree,
            a,
            b,
            length: (b - a).norm(),
        }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn endpoints(&self) -> (Point, Point) {
        (self.a, self.b)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Parameter `t ∈ [0, 1]` of the orthogonal projection of `x` onto the
    /// segment line.
    pub fn parameter(&self, x: Point) -> f64 {
        let d = self.b - self.a;
        (x - self.a).dot(&d) / d.norm_squared()
    }

    /// Basis values at parameter `t`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let s = 2.0 * t - 1.0;
        let n = self.dim();
        let mut p = DVector::zeros(n);
        p[0] = 1.0;
        if n > 1 {
            p[1] = s;
        }
        for j in 2..n {
            p[j] = ((2 * j - 1) as f64 * s * p[j - 1] - (j - 1) as f64 * p[j - 2]) / j as f64;
        }
        for j in 0..n {
            p[j] *= ((2 * j + 1) as f64 / self.length).sqrt();
        }
        p
    }

    /// Derivatives of the basis with respect to arc length at parameter `t`.
    pub fn eval_derivative(&self, t: f64) -> DVector<f64> {
        let s = 2.0 * t - 1.0;
        let n = self.dim();
        let mut p = vec![0.0; n];
        let mut dp = DVector::zeros(n);
        p[0] = 1.0;
        if n > 1 {
            p[1] = s;
            dp[1] = 1.0;
        }
        for j in 2..n {
            p[j] = ((2 * j - 1) as f64 * s * p[j - 1] - (j - 1) as f64 * p[j - 2]) / j as f64;
            dp[j] = dp[j - 2] + (2 * j - 1) as f64 * p[j - 1];
        }
        // ds/darc = 2 / |F|
        for j in 0..n {
            dp[j] *= ((2 * j + 1) as f64 / self.length).sqrt() * 2.0 / self.length;
        }
        dp
    }
}
