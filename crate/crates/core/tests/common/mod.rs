#![allow(dead_code)]

use hho_core::mesh::{build_initial_mesh, DomainSpec, Triangulation};
use hho_core::problem::Poly2;
use hho_core::Point;
use nalgebra::{DVector, Matrix2, Vector2};
use rand::Rng;

/// Vector polynomial with exact derivatives.
#[derive(Clone, Debug)]
pub struct VecPoly {
    pub u: [Poly2; 2],
}

impl VecPoly {
    pub fn random(degree: u32, rng: &mut impl Rng) -> Self {
        let comp = |rng: &mut dyn rand::RngCore| {
            let mut terms = Vec::new();
            for total in 0..=degree {
                for b in 0..=total {
                    terms.push((total - b, b, rng.gen_range(-1.0..1.0)));
                }
            }
            Poly2 { terms }
        };
        Self {
            u: [comp(rng), comp(rng)],
        }
    }

    /// Rigid-body motion `a + b(−y, x)`.
    pub fn rigid(a: [f64; 2], b: f64) -> Self {
        Self {
            u: [
                Poly2 {
                    terms: vec![(0, 0, a[0]), (0, 1, -b)],
                },
                Poly2 {
                    terms: vec![(0, 0, a[1]), (1, 0, b)],
                },
            ],
        }
    }

    pub fn eval(&self, x: Point) -> Vector2<f64> {
        Vector2::new(self.u[0].eval(x), self.u[1].eval(x))
    }

    pub fn grad(&self, x: Point) -> Matrix2<f64> {
        Matrix2::new(
            self.u[0].dx().eval(x),
            self.u[0].dy().eval(x),
            self.u[1].dx().eval(x),
            self.u[1].dy().eval(x),
        )
    }

    pub fn strain(&self, x: Point) -> Matrix2<f64> {
        let g = self.grad(x);
        0.5 * (g + g.transpose())
    }

    pub fn div(&self, x: Point) -> f64 {
        self.u[0].dx().eval(x) + self.u[1].dy().eval(x)
    }
}

/// Three meshes of different shapes and scales.
pub fn test_meshes() -> Vec<Triangulation> {
    vec![
        build_initial_mesh(&DomainSpec::UnitSquare).unwrap().refine_nvb(&[0]),
        build_initial_mesh(&DomainSpec::LShape).unwrap().uniform_refine(),
        build_initial_mesh(&DomainSpec::Cooks).unwrap().uniform_refine(),
    ]
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Value of `Σ c_i B_i(x)` over the first `c.len()` basis values.
pub fn combine(values: &DVector<f64>, c: &[f64]) -> f64 {
    c.iter().zip(values.iter()).map(|(a, b)| a * b).sum()
}

pub fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-300)
}
