//! Self-checks of the discretization that can be run outside the test
//! harness: operator identities, stabilization properties and patch tests.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::Serialize;

use crate::afem::solve_level;
use crate::approximation::l2_project_cell;
use crate::basis::dim_p;
use crate::estimator::EstimatorOptions;
use crate::mesh::{build_initial_mesh, DomainSpec, Triangulation};
use crate::operators::{LocalOperators, Variant};
use crate::problem::{manufactured_polynomial, Poly2};
use crate::quadrature::{quad_rule, DomainKind};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Operators,
    Stabilization,
    Patch,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Operators, Suite::Stabilization, Suite::Patch];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::Stabilization => "stabilization",
            Suite::Patch => "patch",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite '{s}'")))
    }
}

/// Outcome of one check: the worst measured value against its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

/// Runs `suite` for every degree in `ks`.
pub fn run_suite(suite: Suite, ks: &[usize]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &k in ks {
        match suite {
            Suite::Operators => out.extend(operator_checks(k)?),
            Suite::Stabilization => out.extend(stabilization_checks(k)?),
            Suite::Patch => out.extend(patch_checks(k)?),
        }
    }
    Ok(out)
}

/// Three meshes of different shape and scale.
pub fn sample_meshes() -> Result<Vec<Triangulation>> {
    Ok(vec![
        build_initial_mesh(&DomainSpec::UnitSquare)?.refine_nvb(&[0]),
        build_initial_mesh(&DomainSpec::LShape)?.uniform_refine(),
        build_initial_mesh(&DomainSpec::Cooks)?.uniform_refine(),
    ])
}

/// Deterministic vector polynomial of total degree `degree`.
fn sample_poly(degree: usize, seed: usize) -> [Poly2; 2] {
    let mut comps = [Vec::new(), Vec::new()];
    let mut i = 0usize;
    for total in 0..=degree as u32 {
        for b in 0..=total {
            for (c, terms) in comps.iter_mut().enumerate() {
                let s = (7 * i + 3 * c + 11 * seed) as f64;
                terms.push((total - b, b, (1.37 * s + 0.3).sin()));
            }
            i += 1;
        }
    }
    let [u, v] = comps;
    [Poly2 { terms: u }, Poly2 { terms: v }]
}

struct SamplePoly {
    u: [Poly2; 2],
    du: [[Poly2; 2]; 2],
}

impl SamplePoly {
    fn new(degree: usize, seed: usize) -> Self {
        let u = sample_poly(degree, seed);
        let du = [[u[0].dx(), u[0].dy()], [u[1].dx(), u[1].dy()]];
        Self { u, du }
    }

    fn eval(&self, x: Point) -> Vector2<f64> {
        Vector2::new(self.u[0].eval(x), self.u[1].eval(x))
    }

    fn strain(&self, x: Point) -> Matrix2<f64> {
        let g = Matrix2::from_fn(|i, j| self.du[i][j].eval(x));
        0.5 * (g + g.transpose())
    }
}

fn combine(values: &DVector<f64>, c: &[f64]) -> f64 {
    c.iter().zip(values.iter()).map(|(a, b)| a * b).sum()
}

fn elements(mesh: &Triangulation) -> [usize; 3] {
    let n = mesh.n_elements();
    [0, n / 2, n - 1]
}

/// Symmetric gradient of `e_c B_m` for all basis functions `B_m`.
fn eps_basis(e: &crate::basis::BasisEval, c: usize, m: usize) -> Matrix2<f64> {
    let gm = [e.dx[m], e.dy[m]];
    let mut out = Matrix2::zeros();
    for j in 0..2 {
        out[(c, j)] += 0.5 * gm[j];
        out[(j, c)] += 0.5 * gm[j];
    }
    out
}

fn potential_grad(ops: &LocalOperators, rv: &DVector<f64>, e: &crate::basis::BasisEval) -> (Vector2<f64>, Matrix2<f64>) {
    let n1 = dim_p(ops.layout.k + 1);
    let mut u = Vector2::zeros();
    let mut g = Matrix2::zeros();
    for c in 0..2 {
        let blk = &rv.as_slice()[c * n1..(c + 1) * n1];
        u[c] = combine(&e.value, blk);
        g[(c, 0)] = combine(&e.dx, blk);
        g[(c, 1)] = combine(&e.dy, blk);
    }
    (u, g)
}

fn cell_value(ops: &LocalOperators, v: &DVector<f64>, x: Point) -> Vector2<f64> {
    let l = &ops.layout;
    let phi = ops.basis.eval(x);
    Vector2::from_fn(|c, _| combine(&phi, &v.as_slice()[l.cell(c, 0)..l.cell(c, 0) + l.n_cell]))
}

fn face_value(ops: &LocalOperators, v: &DVector<f64>, i: usize, s: f64) -> Vector2<f64> {
    let l = &ops.layout;
    let psi = ops.face_bases[i].eval(s);
    Vector2::from_fn(|c, _| combine(&psi, &v.as_slice()[l.face(i, c, 0)..l.face(i, c, 0) + l.n_face]))
}

/// Relative residual of the defining identity of the potential
/// reconstruction, tested against all of `P_{k+1}(T)²`, together with the
/// relative mismatch of its mean and rotation moments.
fn potential_residuals(mesh: &Triangulation, t: usize, ops: &LocalOperators, v: &DVector<f64>) -> Result<(f64, f64)> {
    let k = ops.layout.k;
    let n1 = dim_p(k + 1);
    let verts = mesh.element_vertices(t);
    let geo = mesh.geometry(t);
    let rv = ops.potential(v);
    let mut lhs = vec![0.0; 2 * n1];
    let mut rhs = vec![0.0; 2 * n1];
    let (mut mean_r, mut mean_t, mut rot_r, mut scale) = (Vector2::zeros(), Vector2::zeros(), 0.0, 0.0);
    for (x, w) in quad_rule(DomainKind::Triangle, 2 * k + 4)?.on_triangle(&verts) {
        let e = ops.basis.eval_with_grad(x);
        let (u, grad) = potential_grad(ops, &rv, &e);
        let eps_r = 0.5 * (grad + grad.transpose());
        let [hxx, hxy, hyy] = ops.basis.hessian(x);
        let vt = cell_value(ops, v, x);
        mean_r += w * u;
        mean_t += w * vt;
        rot_r += w * 0.5 * (grad[(0, 1)] - grad[(1, 0)]);
        scale += w * u.norm();
        for c in 0..2 {
            for m in 0..n1 {
                lhs[c * n1 + m] += w * eps_r.dot(&eps_basis(&e, c, m));
                // div ε(e_c B) = ½(e_c ΔB + ∇∂_c B)
                let hess = Matrix2::new(hxx[m], hxy[m], hxy[m], hyy[m]);
                let mut div = 0.5 * hess.column(c).into_owned();
                div[c] += 0.5 * (hxx[m] + hyy[m]);
                rhs[c * n1 + m] -= w * vt.dot(&div);
            }
        }
    }
    let mut rot_f = 0.0;
    for i in 0..3 {
        let (a, b) = ops.face_bases[i].endpoints();
        let nu = geo.normals[i];
        for (s, x, w) in quad_rule(DomainKind::Segment, 2 * k + 4)?.on_segment(a, b) {
            let vf = face_value(ops, v, i, s);
            rot_f += w * 0.5 * (vf[0] * nu[1] - vf[1] * nu[0]);
            let e = ops.basis.eval_with_grad(x);
            for c in 0..2 {
                for m in 0..n1 {
                    rhs[c * n1 + m] += w * vf.dot(&(eps_basis(&e, c, m) * nu));
                }
            }
        }
    }
    let s = lhs.iter().chain(&rhs).fold(0.0f64, |a, b| a.max(b.abs()));
    let identity = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / s;
    let moments = ((mean_r - mean_t).norm() / scale).max((rot_r - rot_f).abs() / (scale / geo.diameter + rot_r.abs()));
    Ok((identity, moments))
}

/// Relative distance of `ε_h I v` from `Π^k ε(v)` for `v` of degree `k + 2`.
fn commuting_residual(mesh: &Triangulation, t: usize, ops: &LocalOperators, v: &SamplePoly) -> f64 {
    let k = ops.layout.k;
    let verts = mesh.element_vertices(t);
    let eps_h = ops.strain(&ops.interpolate(&|x| v.eval(x), &verts));
    let proj = l2_project_cell(
        |x| {
            let e = v.strain(x);
            [e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]]
        },
        &ops.basis,
        &verts,
        k,
        2 * k + 4,
    );
    let scale = proj.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    (eps_h - DVector::from_vec(proj)).amax() / scale
}

/// Relative size of `(ε(v − 𝓡Iv), ε(φ))` over `φ ∈ P_{k+1}(T)²`.
fn orthogonality_residual(mesh: &Triangulation, t: usize, ops: &LocalOperators, v: &SamplePoly) -> Result<f64> {
    let k = ops.layout.k;
    let n1 = dim_p(k + 1);
    let verts = mesh.element_vertices(t);
    let rv = ops.potential(&ops.interpolate(&|x| v.eval(x), &verts));
    let mut ip = vec![0.0; 2 * n1];
    let mut scale = 0.0f64;
    for (x, w) in quad_rule(DomainKind::Triangle, 2 * k + 6)?.on_triangle(&verts) {
        let e = ops.basis.eval_with_grad(x);
        let (_, g) = potential_grad(ops, &rv, &e);
        let diff = v.strain(x) - 0.5 * (g + g.transpose());
        for c in 0..2 {
            for m in 0..n1 {
                let ep = eps_basis(&e, c, m);
                ip[c * n1 + m] += w * diff.dot(&ep);
                scale = scale.max(w * v.strain(x).norm() * ep.norm());
            }
        }
    }
    Ok(ip.iter().fold(0.0f64, |a, b| a.max(b.abs())) / scale)
}

fn operator_checks(k: usize) -> Result<Vec<Check>> {
    let meshes = sample_meshes()?;
    let (mut commuting, mut identity, mut moments, mut orthogonality) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut seed = 0;
    for mesh in &meshes {
        for t in elements(mesh) {
            for variant in Variant::ALL {
                let ops = LocalOperators::build(mesh, t, k, variant, 1.3, 0.7)?;
                seed += 1;
                commuting = commuting.max(commuting_residual(mesh, t, &ops, &SamplePoly::new(k + 2, seed)));
                let v = DVector::from_fn(ops.size(), |i, _| ((i + 13 * seed) as f64 * 0.731).sin());
                let (a, b) = potential_residuals(mesh, t, &ops, &v)?;
                identity = identity.max(a);
                moments = moments.max(b);
            }
            let ops = LocalOperators::build(mesh, t, k, Variant::Classic, 1.3, 0.7)?;
            orthogonality = orthogonality.max(orthogonality_residual(mesh, t, &ops, &SamplePoly::new(k + 3, seed))?);
        }
    }
    let check = |name: &str, value, tolerance| Check {
        suite: Suite::Operators,
        name: format!("{name} k={k}"),
        value,
        tolerance,
    };
    Ok(vec![
        check("commuting strain", commuting, 1e-11),
        check("potential identity", identity, 1e-11),
        check("potential moments", moments, 1e-11),
        check("elliptic orthogonality", orthogonality, 1e-10),
    ])
}

/// Extreme values of `s̃(v, v) / s(v, v)` over `v` outside the kernel of `s`,
/// and the size of `s̃` on that kernel relative to `‖s̃‖`.
pub fn stabilization_ratio_band(classic: &DMatrix<f64>, tilde: &DMatrix<f64>) -> (f64, f64, f64) {
    let eig = SymmetricEigen::new(classic.clone());
    let top = eig.eigenvalues.max();
    let tol = 1e-10 * top;
    let range: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let kernel: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    let w = DMatrix::from_fn(classic.nrows(), range.len(), |r, j| {
        eig.eigenvectors[(r, range[j])] / eig.eigenvalues[range[j]].sqrt()
    });
    let ratios = SymmetricEigen::new(w.transpose() * tilde * &w).eigenvalues;
    let z = eig.eigenvectors.select_columns(&kernel);
    let leak = (tilde * &z).amax() / tilde.amax();
    (ratios.min(), ratios.max(), leak)
}

fn stabilization_checks(k: usize) -> Result<Vec<Check>> {
    let mut kernel = Vec::new();
    let meshes = sample_meshes()?;
    for variant in Variant::ALL {
        let mut worst = 0.0f64;
        let mut seed = 0;
        for mesh in &meshes {
            for t in elements(mesh) {
                let ops = LocalOperators::build(mesh, t, k, variant, 1.3, 0.7)?;
                seed += 1;
                let v = SamplePoly::new(k + 1, seed);
                let iv = ops.interpolate(&|x| v.eval(x), &mesh.element_vertices(t));
                worst = worst.max((&ops.s * &iv).amax() / (ops.s.amax() * iv.amax()));
            }
        }
        kernel.push(Check {
            suite: Suite::Stabilization,
            name: format!("kernel {variant} k={k}"),
            value: worst,
            tolerance: 1e-11,
        });
    }

    let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut band = 0.0f64;
    let mut leak = 0.0f64;
    for spec in [DomainSpec::LShape, DomainSpec::Cooks] {
        let mut mesh = build_initial_mesh(&spec)?;
        let (mut lows, mut highs) = (Vec::new(), Vec::new());
        for _ in 0..4 {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for t in 0..mesh.n_elements() {
                let c = LocalOperators::build(&mesh, t, k, Variant::Classic, 1.0, 1.0)?;
                let s = LocalOperators::build(&mesh, t, k, Variant::Tilde, 1.0, 1.0)?;
                let (a, b, l) = stabilization_ratio_band(&c.s, &s.s);
                lo = lo.min(a);
                hi = hi.max(b);
                leak = leak.max(l);
            }
            lows.push(lo);
            highs.push(hi);
            mesh = mesh.uniform_refine();
        }
        band = if lows.iter().all(|&l| l > 0.0) { band.max(spread(&lows)).max(spread(&highs)) } else { f64::INFINITY };
    }
    kernel.push(Check {
        suite: Suite::Stabilization,
        name: format!("equivalence band spread k={k}"),
        value: band,
        tolerance: 2.0,
    });
    kernel.push(Check {
        suite: Suite::Stabilization,
        name: format!("common kernel k={k}"),
        value: leak,
        tolerance: 1e-9,
    });
    Ok(kernel)
}

fn patch_checks(k: usize) -> Result<Vec<Check>> {
    let mesh = build_initial_mesh(&DomainSpec::UnitSquare)?.uniform_refine().uniform_refine();
    let mut out = Vec::new();
    for variant in [Variant::Classic, Variant::Hdg] {
        let (mut err, mut eta) = (0.0f64, 0.0f64);
        for d in 0..=(k as u32 + 1) {
            let problem = manufactured_polynomial(d, 2.0, 0.9);
            let level = solve_level(&mesh, &problem, k, variant, EstimatorOptions::default())?;
            let errors = level.errors.ok_or(Error::MissingExactSolution)?;
            if errors.stress_norm > 0.0 {
                err = err.max(errors.stress / errors.stress_norm);
                eta = eta.max(level.estimate.eta() / errors.stress_norm);
            } else {
                err = err.max(errors.stress);
                eta = eta.max(level.estimate.eta());
            }
        }
        out.push(Check {
            suite: Suite::Patch,
            name: format!("stress error {variant} k={k}"),
            value: err,
            tolerance: 1e-9,
        });
        out.push(Check {
            suite: Suite::Patch,
            name: format!("estimator {variant} k={k}"),
            value: eta,
            tolerance: 1e-8,
        });
    }
    Ok(out)
}
