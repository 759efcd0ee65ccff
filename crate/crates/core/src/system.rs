//! Global unknowns, assembly, static condensation, solution and
//! post-processing of the discrete problem.

use std::collections::HashMap;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side as FaerSide};
use nalgebra::{DMatrix, DVector, Vector2};

use crate::approximation::{cell_bases, face_basis, l2_project_cell, l2_project_face, PiecewisePolyField, Rank};
use crate::basis::{dim_p, CellBasis};
use crate::mesh::{SideKind, Triangulation};
use crate::operators::{LocalOperators, Variant};
use crate::problem::ProblemData;
use crate::{Error, Point, Result};

/// Numbering of the global unknowns.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub k: usize,
    pub variant: Variant,
    /// `dim P_{k_cell}`, the size of one cell component block.
    pub n_cell: usize,
    /// `k + 1`, the size of one face component block.
    pub n_face: usize,
    pub n_elements: usize,
    /// Free-face index of every side, `None` on Dirichlet sides.
    pub face_index: Vec<Option<usize>>,
    pub n_free_faces: usize,
    /// `Π_F^k u_D` on Dirichlet sides, empty elsewhere.
    pub dirichlet_values: Vec<Vec<f64>>,
}

impl DofMap {
    pub fn new(mesh: &Triangulation, problem: &ProblemData, k: usize, variant: Variant) -> Result<Self> {
        if k == 0 {
            return Err(Error::UnsupportedDegree(k));
        }
        let mut face_index = Vec::with_capacity(mesh.n_sides());
        let mut dirichlet_values = Vec::with_capacity(mesh.n_sides());
        let mut n_free = 0;
        for (s, side) in mesh.sides().iter().enumerate() {
            if side.kind == SideKind::Dirichlet {
                face_index.push(None);
                let fb = face_basis(mesh, s, k);
                let u_d = &problem.u_d.value;
                dirichlet_values.push(l2_project_face(|x| u_d(x).into(), &fb, 2 * (k + 1) + 2));
            } else {
                face_index.push(Some(n_free));
                n_free += 1;
                dirichlet_values.push(Vec::new());
            }
        }
        Ok(Self {
            k,
            variant,
            n_cell: dim_p(variant.cell_degree(k)),
            n_face: k + 1,
            n_elements: mesh.n_elements(),
            face_index,
            n_free_faces: n_free,
            dirichlet_values,
        })
    }

    pub fn cell_block(&self) -> usize {
        2 * self.n_cell
    }

    pub fn face_block(&self) -> usize {
        2 * self.n_face
    }

    pub fn n_cell_dofs(&self) -> usize {
        self.n_elements * self.cell_block()
    }

    pub fn n_face_dofs(&self) -> usize {
        self.n_free_faces * self.face_block()
    }

    /// Number of unknowns of `V_h`.
    pub fn ndof(&self) -> usize {
        self.n_cell_dofs() + self.n_face_dofs()
    }
}

/// A discrete function `v_h = (v_𝒯, v_𝓕)`. Face blocks are stored for every
/// side; Dirichlet blocks hold the prescribed values.
#[derive(Debug, Clone)]
pub struct HhoFunction {
    pub dofs: Arc<DofMap>,
    pub cells: Vec<f64>,
    pub faces: Vec<f64>,
}

impl HhoFunction {
    pub fn zeros(dofs: Arc<DofMap>, n_sides: usize) -> Self {
        let cells = vec![0.0; dofs.n_cell_dofs()];
        let faces = vec![0.0; n_sides * dofs.face_block()];
        Self { dofs, cells, faces }
    }

    /// `I v` with the Dirichlet blocks replaced by the prescribed values.
    pub fn interpolate(mesh: &Triangulation, dofs: Arc<DofMap>, v: &dyn Fn(Point) -> Vector2<f64>) -> Result<Self> {
        let bases = cell_bases(mesh, dofs.k + 1)?;
        let mut out = Self::zeros(dofs.clone(), mesh.n_sides());
        let quad = 2 * (dofs.k + 1) + 2;
        let kc = dofs.variant.cell_degree(dofs.k);
        let cb = dofs.cell_block();
        for t in 0..mesh.n_elements() {
            let c = l2_project_cell(|x| v(x).into(), &bases[t], &mesh.element_vertices(t), kc, quad);
            out.cells[t * cb..(t + 1) * cb].copy_from_slice(&c);
        }
        let fbk = dofs.face_block();
        for s in 0..mesh.n_sides() {
            let f = if dofs.face_index[s].is_some() {
                l2_project_face(|x| v(x).into(), &face_basis(mesh, s, dofs.k), quad)
            } else {
                dofs.dirichlet_values[s].clone()
            };
            out.faces[s * fbk..(s + 1) * fbk].copy_from_slice(&f);
        }
        Ok(out)
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        let n = self.dofs.cell_block();
        &self.cells[t * n..(t + 1) * n]
    }

    pub fn face(&self, s: usize) -> &[f64] {
        let n = self.dofs.face_block();
        &self.faces[s * n..(s + 1) * n]
    }

    /// Restriction to element `t` in the local layout.
    pub fn local(&self, mesh: &Triangulation, t: usize) -> DVector<f64> {
        let cb = self.dofs.cell_block();
        let fbk = self.dofs.face_block();
        let mut v = DVector::zeros(cb + 3 * fbk);
        v.rows_mut(0, cb).copy_from_slice(self.cell(t));
        for (i, s) in mesh.element_sides(t).into_iter().enumerate() {
            v.rows_mut(cb + i * fbk, fbk).copy_from_slice(self.face(s));
        }
        v
    }

    /// Coefficients of the free unknowns: cells first, then free faces.
    pub fn free_vector(&self) -> Vec<f64> {
        let mut out = self.cells.clone();
        let fbk = self.dofs.face_block();
        for (s, idx) in self.dofs.face_index.iter().enumerate() {
            if idx.is_some() {
                out.extend_from_slice(&self.faces[s * fbk..(s + 1) * fbk]);
            }
        }
        out
    }
}

/// Data to recover the cell unknowns of one element after a condensed solve:
/// `u_c = A_cc⁻¹ b_c − A_cc⁻¹ A_cf u_f`.
#[derive(Debug, Clone)]
struct Recovery {
    inv_b: DVector<f64>,
    inv_acf: DMatrix<f64>,
    /// Global face unknown of each local free-face column.
    face_globals: Vec<usize>,
}

/// Assembled symmetric positive definite system.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    pub condensed: bool,
    pub dofs: Arc<DofMap>,
    n_sides: usize,
    recovery: Vec<Recovery>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = &self.matrix;
        let (cp, ri, val) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
        let mut y = vec![0.0; x.len()];
        for j in 0..x.len() {
            let xj = x[j];
            for p in cp[j]..cp[j + 1] {
                y[ri[p]] += val[p] * xj;
            }
        }
        y
    }

    /// `max_j Σ_i |a_ij|`, which equals the row-sum norm by symmetry.
    pub fn norm_inf(&self) -> f64 {
        let a = &self.matrix;
        let cp = a.symbolic().col_ptr();
        (0..self.dim())
            .map(|j| a.val()[cp[j]..cp[j + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let a = &self.matrix;
        let (cp, ri, val) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
        let mut entries = HashMap::with_capacity(val.len());
        for j in 0..self.dim() {
            for p in cp[j]..cp[j + 1] {
                entries.insert((ri[p], j), val[p]);
            }
        }
        entries
            .iter()
            .map(|(&(i, j), v)| (v - entries.get(&(j, i)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Normwise backward error `‖b − Ax‖ / (‖A‖‖x‖ + ‖b‖)` in the max norm.
    pub fn backward_error(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r = ax.iter().zip(&self.rhs).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
        let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bn = self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = self.norm_inf() * xn + bn;
        if denom == 0.0 {
            0.0
        } else {
            r / denom
        }
    }
}

/// Local right-hand side `((f, v_T), (g, v_F)_{Γ_N})` of element `t`.
fn local_rhs(mesh: &Triangulation, problem: &ProblemData, ops: &LocalOperators, t: usize) -> DVector<f64> {
    let l = &ops.layout;
    let quad = 2 * (l.k + 1) + 2;
    let mut b = DVector::zeros(l.size());
    let f = &problem.f;
    let cell = l2_project_cell(|x| f(x).into(), &ops.basis, &mesh.element_vertices(t), l.variant.cell_degree(l.k), quad);
    b.rows_mut(0, l.cell_size()).copy_from_slice(&cell);
    for (i, s) in l.sides.into_iter().enumerate() {
        let side = mesh.side(s);
        if side.kind == SideKind::Neumann {
            let nu = side.normal;
            let g = &problem.g;
            let face = l2_project_face(|x| g(x, nu).into(), &ops.face_bases[i], quad);
            b.rows_mut(l.face_offset(i), l.face_size()).copy_from_slice(&face);
        }
    }
    b
}

/// Assembles `a_h(u_h, v_h) = (f, v_𝒯) + (g, v_𝓕)_{Γ_N}` with the Dirichlet
/// blocks moved to the right side. With `condense`, cell unknowns are
/// eliminated element by element and the system acts on face unknowns only.
pub fn assemble(mesh: &Triangulation, problem: &ProblemData, k: usize, variant: Variant, condense: bool) -> Result<LinearSystem> {
    problem.material.validate(mesh)?;
    let dofs = Arc::new(DofMap::new(mesh, problem, k, variant)?);
    let cb = dofs.cell_block();
    let fbk = dofs.face_block();
    let n_cells_total = dofs.n_cell_dofs();
    let dim = if condense { dofs.n_face_dofs() } else { dofs.ndof() };
    let face_base = if condense { 0 } else { n_cells_total };

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; dim];
    let mut recovery = Vec::with_capacity(if condense { mesh.n_elements() } else { 0 });

    for t in 0..mesh.n_elements() {
        let (lambda, mu) = problem.material.on_element(mesh, t);
        let ops = LocalOperators::build(mesh, t, k, variant, lambda, mu)?;
        let l = &ops.layout;
        let mut b = local_rhs(mesh, problem, &ops, t);

        let mut known = DVector::zeros(l.size());
        let mut free_faces = Vec::new();
        let mut face_globals = Vec::new();
        for (i, s) in l.sides.into_iter().enumerate() {
            match dofs.face_index[s] {
                None => known.rows_mut(l.face_offset(i), fbk).copy_from_slice(&dofs.dirichlet_values[s]),
                Some(f) => {
                    for j in 0..fbk {
                        free_faces.push(l.face_offset(i) + j);
                        face_globals.push(face_base + f * fbk + j);
                    }
                }
            }
        }
        b -= &ops.a * &known;

        if condense {
            let nf = free_faces.len();
            let acc = ops.a.view((0, 0), (cb, cb)).into_owned();
            let acf = DMatrix::from_fn(cb, nf, |i, j| ops.a[(i, free_faces[j])]);
            let aff = DMatrix::from_fn(nf, nf, |i, j| ops.a[(free_faces[i], free_faces[j])]);
            let bc = b.rows(0, cb).into_owned();
            let bf = DVector::from_fn(nf, |i, _| b[free_faces[i]]);
            let chol = acc.cholesky().ok_or(Error::NotPositiveDefinite)?;
            let inv_acf = chol.solve(&acf);
            let inv_b = chol.solve(&bc);
            let schur = aff - acf.transpose() * &inv_acf;
            let schur = 0.5 * (&schur + schur.transpose());
            let bs = bf - acf.transpose() * &inv_b;
            for i in 0..nf {
                rhs[face_globals[i]] += bs[i];
                for j in 0..nf {
                    triplets.push(Triplet::new(face_globals[i], face_globals[j], schur[(i, j)]));
                }
            }
            recovery.push(Recovery {
                inv_b,
                inv_acf,
                face_globals,
            });
        } else {
            let mut locals: Vec<usize> = (0..cb).collect();
            let mut globals: Vec<usize> = (t * cb..(t + 1) * cb).collect();
            locals.extend_from_slice(&free_faces);
            globals.extend_from_slice(&face_globals);
            for (i, &li) in locals.iter().enumerate() {
                rhs[globals[i]] += b[li];
                for (j, &lj) in locals.iter().enumerate() {
                    triplets.push(Triplet::new(globals[i], globals[j], ops.a[(li, lj)]));
                }
            }
        }
    }

    let matrix = SparseColMat::try_new_from_triplets(dim, dim, &triplets)
        .map_err(|e| Error::InvalidConfig(format!("sparse assembly failed: {e:?}")))?;
    Ok(LinearSystem {
        matrix,
        rhs,
        condensed: condense,
        dofs,
        n_sides: mesh.n_sides(),
        recovery,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Sparse Cholesky factorization with iterative refinement.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { max_iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub backward_error: f64,
    pub iterations: usize,
}

/// Target normwise backward error of the linear solve.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// Solves with the sparse Cholesky factorization.
pub fn solve(system: &LinearSystem) -> Result<(HhoFunction, SolveStats)> {
    solve_with(system, SolverKind::Direct)
}

pub fn solve_with(system: &LinearSystem, kind: SolverKind) -> Result<(HhoFunction, SolveStats)> {
    let n = system.dim();
    let (x, stats) = if n == 0 {
        (Vec::new(), SolveStats { backward_error: 0.0, iterations: 0 })
    } else {
        match kind {
            SolverKind::Direct => solve_direct(system)?,
            SolverKind::ConjugateGradient { max_iterations } => solve_cg(system, max_iterations)?,
        }
    };
    Ok((expand(system, &x), stats))
}

fn solve_direct(system: &LinearSystem) -> Result<(Vec<f64>, SolveStats)> {
    let n = system.dim();
    let llt = system.matrix.sp_cholesky(FaerSide::Lower).map_err(|_| Error::NotPositiveDefinite)?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| system.rhs[i]);
    let sol = llt.solve(&b);
    let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let mut be = system.backward_error(&x);
    let mut iterations = 0;
    while be > SOLVER_TOLERANCE && iterations < 3 {
        let ax = system.apply(&x);
        let r = Mat::<f64>::from_fn(n, 1, |i, _| system.rhs[i] - ax[i]);
        let d = llt.solve(&r);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += d[(i, 0)];
        }
        iterations += 1;
        be = system.backward_error(&x);
    }
    if !be.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((x, SolveStats { backward_error: be, iterations }))
}

fn solve_cg(system: &LinearSystem, max_iterations: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = system.dim();
    let a = &system.matrix;
    let (cp, ri, val) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
    let mut diag = vec![0.0; n];
    for j in 0..n {
        for p in cp[j]..cp[j + 1] {
            if ri[p] == j {
                diag[j] += val[p];
            }
        }
    }
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let b = &system.rhs;
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iterations {
        if it % 10 == 0 {
            let be = system.backward_error(&x);
            if be <= SOLVER_TOLERANCE {
                return Ok((x, SolveStats { backward_error: be, iterations: it }));
            }
        }
        let ap = system.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let be = system.backward_error(&x);
    if be <= SOLVER_TOLERANCE {
        Ok((x, SolveStats { backward_error: be, iterations: max_iterations }))
    } else {
        Err(Error::NoConvergence {
            iterations: max_iterations,
            residual: be,
        })
    }
}

/// Expands a solution vector to a full discrete function.
fn expand(system: &LinearSystem, x: &[f64]) -> HhoFunction {
    let dofs = system.dofs.clone();
    let mut u = HhoFunction::zeros(dofs.clone(), system.n_sides);
    let fbk = dofs.face_block();
    let face_base = if system.condensed { 0 } else { dofs.n_cell_dofs() };
    for (s, idx) in dofs.face_index.iter().enumerate() {
        let blk = &mut u.faces[s * fbk..(s + 1) * fbk];
        match idx {
            Some(f) => blk.copy_from_slice(&x[face_base + f * fbk..face_base + (f + 1) * fbk]),
            None => blk.copy_from_slice(&dofs.dirichlet_values[s]),
        }
    }
    let cb = dofs.cell_block();
    if system.condensed {
        for (t, rec) in system.recovery.iter().enumerate() {
            let uf = DVector::from_fn(rec.face_globals.len(), |i, _| x[rec.face_globals[i]]);
            let uc = &rec.inv_b - &rec.inv_acf * uf;
            u.cells[t * cb..(t + 1) * cb].copy_from_slice(uc.as_slice());
        }
    } else {
        u.cells.copy_from_slice(&x[..dofs.n_cell_dofs()]);
    }
    u
}

/// Post-processed fields of a discrete solution.
#[derive(Debug, Clone)]
pub struct PostProcessed {
    /// `σ_h = ℂε_h u_h ∈ P_k(𝒯; 𝕊)`.
    pub stress: PiecewisePolyField,
    /// `ε_h u_h`.
    pub strain: PiecewisePolyField,
    /// `𝓡u_h ∈ P_{k+1}(𝒯)²`.
    pub potential: PiecewisePolyField,
    /// Cell component `u_𝒯`.
    pub cell: PiecewisePolyField,
}

/// Computes `σ_h`, `ε_h u_h`, `𝓡u_h` and `u_𝒯` element by element.
pub fn post_process(mesh: &Triangulation, problem: &ProblemData, u: &HhoFunction) -> Result<PostProcessed> {
    let k = u.dofs.k;
    let variant = u.dofs.variant;
    let bases = cell_bases(mesh, k + 1)?;
    let mut stress = PiecewisePolyField::zeros(k, Rank::Matrix, bases.clone());
    let mut strain = PiecewisePolyField::zeros(k, Rank::Matrix, bases.clone());
    let mut potential = PiecewisePolyField::zeros(k + 1, Rank::Vector, bases.clone());
    let cell = PiecewisePolyField::new(variant.cell_degree(k), Rank::Vector, bases, u.cells.clone());
    for t in 0..mesh.n_elements() {
        let (lambda, mu) = problem.material.on_element(mesh, t);
        let ops = LocalOperators::build(mesh, t, k, variant, lambda, mu)?;
        let v = u.local(mesh, t);
        stress.block_mut(t).copy_from_slice(ops.stress(&v).as_slice());
        strain.block_mut(t).copy_from_slice(ops.strain(&v).as_slice());
        potential.block_mut(t).copy_from_slice(ops.potential(&v).as_slice());
    }
    Ok(PostProcessed {
        stress,
        strain,
        potential,
        cell,
    })
}

/// Discrete stress `σ_h`.
pub fn discrete_stress(mesh: &Triangulation, problem: &ProblemData, u: &HhoFunction) -> Result<PiecewisePolyField> {
    Ok(post_process(mesh, problem, u)?.stress)
}

/// Potential reconstruction `𝓡u_h`.
pub fn potential_field(mesh: &Triangulation, problem: &ProblemData, u: &HhoFunction) -> Result<PiecewisePolyField> {
    Ok(post_process(mesh, problem, u)?.potential)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Vertex(usize),
    /// Edge `(a, b)` with `a < b` and the lattice position counted from `a`.
    Edge(usize, usize, usize),
    Interior(usize, usize, usize),
}

/// Continuous piecewise `P_{k+1}` field given by its Lagrange nodal values.
#[derive(Debug, Clone)]
pub struct ConformingField {
    pub degree: usize,
    pub nodes: Vec<Point>,
    pub values: Vec<Vector2<f64>>,
    pub dirichlet: Vec<bool>,
    /// Global node of every local lattice point, in lattice order.
    pub element_nodes: Vec<Vec<usize>>,
    /// The same field as coefficients against the element bases.
    pub field: PiecewisePolyField,
}

/// Lattice points `(i, j)` of `P_p` on a triangle; the barycentric weight of
/// vertex 0 is `p − i − j`, of vertex 1 `i`, of vertex 2 `j`.
fn lattice(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_p(p));
    for j in 0..=p {
        for i in 0..=(p - j) {
            out.push((i, j));
        }
    }
    out
}

/// Averages `𝓡u_h` at the Lagrange nodes of `S^{k+1}(𝒯)`; nodes on the
/// Dirichlet boundary take the values of `u_D`.
pub fn nodal_average(
    potential: &PiecewisePolyField,
    mesh: &Triangulation,
    u_d: &dyn Fn(Point) -> Vector2<f64>,
) -> Result<ConformingField> {
    let p = potential.degree();
    let pts = lattice(p);
    let mut index: HashMap<NodeKey, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut sums: Vec<Vector2<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut element_nodes = Vec::with_capacity(mesh.n_elements());

    for t in 0..mesh.n_elements() {
        let tri = mesh.triangles()[t];
        let v = mesh.element_vertices(t);
        let mut local = Vec::with_capacity(pts.len());
        for &(i, j) in &pts {
            let w = [p - i - j, i, j];
            let x = (v[0] * w[0] as f64 + v[1] * w[1] as f64 + v[2] * w[2] as f64) / p as f64;
            let nonzero: Vec<usize> = (0..3).filter(|&a| w[a] > 0).collect();
            let key = match nonzero[..] {
                [a] => NodeKey::Vertex(tri[a]),
                [a, b] => {
                    let (va, vb) = (tri[a], tri[b]);
                    if va < vb {
                        NodeKey::Edge(va, vb, w[b])
                    } else {
                        NodeKey::Edge(vb, va, w[a])
                    }
                }
                _ => NodeKey::Interior(t, i, j),
            };
            let id = *index.entry(key).or_insert_with(|| {
                nodes.push(x);
                sums.push(Vector2::zeros());
                counts.push(0);
                nodes.len() - 1
            });
            sums[id] += potential.eval_vector(t, x);
            counts[id] += 1;
            local.push(id);
        }
        element_nodes.push(local);
    }

    let mut dirichlet = vec![false; nodes.len()];
    for (key, &id) in &index {
        let on_dirichlet = |a: usize, b: usize| {
            mesh.sides()
                .iter()
                .any(|s| s.kind == SideKind::Dirichlet && (s.vertices == [a, b] || s.vertices == [b, a]))
        };
        dirichlet[id] = match *key {
            NodeKey::Vertex(v) => mesh
                .sides()
                .iter()
                .any(|s| s.kind == SideKind::Dirichlet && s.vertices.contains(&v)),
            NodeKey::Edge(a, b, _) => on_dirichlet(a, b),
            NodeKey::Interior(..) => false,
        };
    }

    let values: Vec<Vector2<f64>> = (0..nodes.len())
        .map(|id| {
            if dirichlet[id] {
                u_d(nodes[id])
            } else {
                sums[id] / counts[id] as f64
            }
        })
        .collect();

    let mut field = PiecewisePolyField::zeros(p, Rank::Vector, potential.bases().clone());
    let n = dim_p(p);
    for t in 0..mesh.n_elements() {
        let basis: &CellBasis = &potential.bases()[t];
        let ids = &element_nodes[t];
        let vander = DMatrix::from_fn(n, n, |a, m| basis.eval(nodes[ids[a]])[m]);
        let lu = vander.lu();
        let blk = field.block_mut(t);
        for c in 0..2 {
            let rhs = DVector::from_fn(n, |a, _| values[ids[a]][c]);
            let coef = lu.solve(&rhs).ok_or(Error::DegenerateElement(t))?;
            blk[c * n..(c + 1) * n].copy_from_slice(coef.as_slice());
        }
    }

    Ok(ConformingField {
        degree: p,
        nodes,
        values,
        dirichlet,
        element_nodes,
        field,
    })
}
