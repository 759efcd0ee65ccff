//! Gauss quadrature on segments and triangles.
//!
//! Segment rules are Gauss–Legendre rules on the unit interval. Triangle
//! rules are collapsed (Duffy) tensor products of Gauss–Legendre rules on
//! the reference triangle `{(0,0), (1,0), (0,1)}`; all weights are positive.

use std::sync::OnceLock;

use crate::{Error, Point, Result};

/// Highest polynomial degree for which rules are tabulated.
pub const MAX_DEGREE: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Triangle,
    Segment,
}

/// Reference quadrature rule.
///
/// Triangle points are reference coordinates `(ξ, η)` with weights summing
/// to 1/2. Segment points carry the parameter `t ∈ [0, 1]` in the first slot
/// with weights summing to 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub domain: DomainKind,
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points and weights on the triangle with the given vertices.
    /// The weights sum to the triangle area.
    pub fn on_triangle<'a>(&'a self, v: &'a [Point; 3]) -> impl Iterator<Item = (Point, f64)> + 'a {
        debug_assert_eq!(self.domain, DomainKind::Triangle);
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let jac = (e1.x * e2.y - e1.y * e2.x).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, w)| (v[0] + e1 * p[0] + e2 * p[1], w * jac))
    }

    /// Parameters, physical points and weights on the segment `[a, b]`.
    /// The weights sum to the segment length.
    pub fn on_segment(&self, a: Point, b: Point) -> impl Iterator<Item = (f64, Point, f64)> + '_ {
        debug_assert_eq!(self.domain, DomainKind::Segment);
        let len = (b - a).norm();
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, w)| (p[0], a + (b - a) * p[0], w * len))
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Gauss–Lobatto nodes on `[-1, 1]`: the endpoints and the roots of
/// `P'_{n-1}`, in increasing order. Requires `n >= 2`.
pub fn gauss_lobatto_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 2, "Gauss–Lobatto rules need at least two nodes");
    let m = n - 1;
    let mut x = vec![0.0; n];
    x[0] = -1.0;
    x[m] = 1.0;
    for i in 1..m {
        let mut z = -(std::f64::consts::PI * i as f64 / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, z);
            let d2p = (2.0 * z * dp - (m * (m + 1)) as f64 * p) / (1.0 - z * z);
            let dz = dp / d2p;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
    }
    x
}

fn segment_rule(degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    QuadratureRule {
        domain: DomainKind::Segment,
        degree,
        points: x.iter().map(|&xi| [0.5 * (xi + 1.0), 0.0]).collect(),
        weights: w.iter().map(|wi| 0.5 * wi).collect(),
    }
}

fn triangle_rule(degree: usize) -> QuadratureRule {
    if degree <= 1 {
        return QuadratureRule {
            domain: DomainKind::Triangle,
            degree,
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
        };
    }
    // the Jacobian 1 - ξ raises the degree in ξ by one
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let t: Vec<f64> = x.iter().map(|xi| 0.5 * (xi + 1.0)).collect();
    let wt: Vec<f64> = w.iter().map(|wi| 0.5 * wi).collect();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push([t[i], t[j] * (1.0 - t[i])]);
            weights.push(wt[i] * wt[j] * (1.0 - t[i]));
        }
    }
    QuadratureRule {
        domain: DomainKind::Triangle,
        degree,
        points,
        weights,
    }
}

/// Quadrature rule on the given reference domain, exact for polynomials of
/// total degree `degree`.
pub fn quad_rule(domain: DomainKind, degree: usize) -> Result<&'static QuadratureRule> {
    static TRIANGLE: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    static SEGMENT: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedQuadrature(degree));
    }
    let table = match domain {
        DomainKind::Triangle => TRIANGLE.get_or_init(|| (0..=MAX_DEGREE).map(triangle_rule).collect()),
        DomainKind::Segment => SEGMENT.get_or_init(|| (0..=MAX_DEGREE).map(segment_rule).collect()),
    };
    Ok(&table[degree])
}

/// Triangle rule for a degree that is known to be supported.
pub(crate) fn triangle(degree: usize) -> &'static QuadratureRule {
    quad_rule(DomainKind::Triangle, degree.min(MAX_DEGREE)).expect("degree clamped to table")
}

/// Segment rule for a degree that is known to be supported.
pub(crate) fn segment(degree: usize) -> &'static QuadratureRule {
    quad_rule(DomainKind::Segment, degree.min(MAX_DEGREE)).expect("degree clamped to table")
}
