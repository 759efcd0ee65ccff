//! Element-local HHO reconstructions, stabilizations and stiffness.
//!
//! Local unknowns are ordered as the cell block (first component, then
//! second) followed by the three face blocks in local side order, each again
//! split by component. Cell unknowns use the first functions of the element's
//! orthonormal basis of `P_{k+1}(T)`; face unknowns use the Legendre basis of
//! the global side orientation, so both neighbours of a side share it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approximation::{face_basis, l2_project_cell, l2_project_face};
use crate::basis::{dim_p, CellBasis, FaceBasis};
use crate::mesh::{SideKind, Triangulation};
use crate::quadrature;
use crate::{Error, Point, Result};

/// Stabilization and space variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Equal-order space with the classical HHO stabilization.
    Classic,
    /// Equal-order space with the stabilization weighting cell and face
    /// differences separately.
    Tilde,
    /// Cell unknowns of degree `k + 1` with the Lehrenfeld–Schöberl
    /// stabilization.
    Hdg,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Classic, Variant::Tilde, Variant::Hdg];

    /// Polynomial degree of the cell unknowns.
    pub fn cell_degree(self, k: usize) -> usize {
        match self {
            Variant::Hdg => k + 1,
            _ => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::Tilde => "tilde",
            Variant::Hdg => "hdg",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(Variant::Classic),
            "tilde" => Ok(Variant::Tilde),
            "hdg" => Ok(Variant::Hdg),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// Sizes and offsets of the local unknowns of one element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDofLayout {
    pub element: usize,
    pub k: usize,
    pub variant: Variant,
    /// `dim P_{k_cell}(T)`, the size of one cell component block.
    pub n_cell: usize,
    /// `k + 1`, the size of one face component block.
    pub n_face: usize,
    pub sides: [usize; 3],
    pub dirichlet: [bool; 3],
}

impl LocalDofLayout {
    pub fn new(mesh: &Triangulation, t: usize, k: usize, variant: Variant) -> Result<Self> {
        if k == 0 {
            return Err(Error::UnsupportedDegree(k));
        }
        let sides = mesh.element_sides(t);
        Ok(Self {
            element: t,
            k,
            variant,
            n_cell: dim_p(variant.cell_degree(k)),
            n_face: k + 1,
            sides,
            dirichlet: sides.map(|s| mesh.side(s).kind == SideKind::Dirichlet),
        })
    }

    pub fn cell_size(&self) -> usize {
        2 * self.n_cell
    }

    pub fn face_size(&self) -> usize {
        2 * self.n_face
    }

    pub fn size(&self) -> usize {
        self.cell_size() + 3 * self.face_size()
    }

    /// Index of cell unknown `n` of component `c`.
    pub fn cell(&self, c: usize, n: usize) -> usize {
        c * self.n_cell + n
    }

    /// Offset of the block of local face `i`.
    pub fn face_offset(&self, i: usize) -> usize {
        self.cell_size() + i * self.face_size()
    }

    /// Index of face unknown `j` of component `c` on local face `i`.
    pub fn face(&self, i: usize, c: usize, j: usize) -> usize {
        self.face_offset(i) + c * self.n_face + j
    }
}

/// Local operator matrices of one element. All polynomial outputs are
/// coefficients against the element's orthonormal basis `basis`.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub layout: LocalDofLayout,
    pub basis: CellBasis,
    pub face_bases: [FaceBasis; 3],
    /// Local unknowns to `𝓡v ∈ P_{k+1}(T)²`, one block of `dim P_{k+1}` per component.
    pub r: DMatrix<f64>,
    /// Local unknowns to `𝒢v ∈ P_k(T)^{2×2}`, blocks ordered 11, 12, 21, 22.
    pub g: DMatrix<f64>,
    /// `ε_h v = sym(𝒢v)`, same block layout as `g`.
    pub eps: DMatrix<f64>,
    /// Unweighted stabilization `s_T`.
    pub s: DMatrix<f64>,
    /// Local stiffness `(ℂε_h·, ε_h·)_{L²(T)} + μ|_T s_T`.
    pub a: DMatrix<f64>,
    /// Local matrix of `‖·‖_h²`.
    pub h_norm: DMatrix<f64>,
    /// Strain energy matrix `(ε(φ), ε(ψ))` on `P_{k+1}(T)²`.
    pub strain_energy: DMatrix<f64>,
    pub lambda: f64,
    pub mu: f64,
}

impl LocalOperators {
    /// Builds every local operator of element `t`.
    pub fn build(mesh: &Triangulation, t: usize, k: usize, variant: Variant, lambda: f64, mu: f64) -> Result<Self> {
        let layout = LocalDofLayout::new(mesh, t, k, variant)?;
        let verts = mesh.element_vertices(t);
        let geo = mesh.geometry(t);
        let basis = CellBasis::orthonormal(&verts, k + 1).map_err(|_| Error::DegenerateElement(t))?;
        let face_bases = layout.sides.map(|s| face_basis(mesh, s, k));

        let n1 = dim_p(k + 1);
        let nk = dim_p(k);
        let nc = layout.n_cell;
        let nf = layout.n_face;
        let ndof = layout.size();
        let quad = 2 * k + 2;

        // cell integrals: dd[b][d][m, n] = ∫ ∂_b B_m ∂_d B_n, bd[b][m, n] = ∫ B_m ∂_b B_n
        let mut dd = [[DMatrix::zeros(n1, n1), DMatrix::zeros(n1, n1)], [DMatrix::zeros(n1, n1), DMatrix::zeros(n1, n1)]];
        let mut bd = [DMatrix::zeros(n1, n1), DMatrix::zeros(n1, n1)];
        let mut mean_grad = [DVector::zeros(n1), DVector::zeros(n1)];
        for (x, w) in quadrature::triangle(quad).on_triangle(&verts) {
            let e = basis.eval_with_grad(x);
            let grads = [&e.dx, &e.dy];
            for b in 0..2 {
                mean_grad[b].axpy(w, grads[b], 1.0);
                for d in 0..2 {
                    dd[b][d].ger(w, grads[b], grads[d], 1.0);
                }
                bd[b].ger(w, &e.value, grads[b], 1.0);
            }
        }

        // K[(c,m),(d,n)] = ½(δ_cd ∇B_m·∇B_n + ∂_d B_m ∂_c B_n)
        let mut kmat = DMatrix::zeros(2 * n1, 2 * n1);
        for c in 0..2 {
            for d in 0..2 {
                let mut blk = dd[d][c].clone();
                if c == d {
                    blk += &dd[0][0] + &dd[1][1];
                }
                kmat.view_mut((c * n1, d * n1), (n1, n1)).copy_from(&(0.5 * blk));
            }
        }

        let mut rhs = DMatrix::zeros(2 * n1 + 3, ndof);
        for c in 0..2 {
            for d in 0..2 {
                for n in 0..nc {
                    for m in 0..n1 {
                        rhs[(c * n1 + m, layout.cell(d, n))] = kmat[(c * n1 + m, d * n1 + n)];
                    }
                }
            }
        }

        let mut g = DMatrix::zeros(4 * nk, ndof);
        for a in 0..2 {
            for b in 0..2 {
                for m in 0..nk {
                    for n in 0..nc {
                        g[((2 * a + b) * nk + m, layout.cell(a, n))] += bd[b][(m, n)];
                    }
                }
            }
        }

        let mut pf = Vec::with_capacity(3);
        let mut h_norm = DMatrix::zeros(ndof, ndof);
        for c in 0..2 {
            for d in 0..2 {
                for m in 0..nc {
                    for n in 0..nc {
                        h_norm[(layout.cell(c, m), layout.cell(d, n))] = kmat[(c * n1 + m, d * n1 + n)];
                    }
                }
            }
        }

        // rotation moment row of the constraints, right side
        let rot = 2 * n1 + 2;
        for i in 0..3 {
            let fb = &face_bases[i];
            let nu = geo.normals[i];
            let h_f = fb.length();
            let (pa, pb) = fb.endpoints();
            let mut p = DMatrix::zeros(nf, n1);
            let mut bb = DMatrix::zeros(n1, n1);
            for (s, x, w) in quadrature::segment(quad).on_segment(pa, pb) {
                let psi = fb.eval(s);
                let e = basis.eval_with_grad(x);
                p.ger(w, &psi, &e.value, 1.0);
                bb.ger(w, &e.value, &e.value, 1.0);
                for c in 0..2 {
                    for m in 0..n1 {
                        let dn = e.dx[m] * nu.x + e.dy[m] * nu.y;
                        let gm = [e.dx[m], e.dy[m]];
                        for d in 0..2 {
                            let en = 0.5 * (if c == d { dn } else { 0.0 } + gm[d] * nu[c]);
                            let row = c * n1 + m;
                            for j in 0..nf {
                                rhs[(row, layout.face(i, d, j))] += w * psi[j] * en;
                            }
                            for n in 0..nc {
                                rhs[(row, layout.cell(d, n))] -= w * e.value[n] * en;
                            }
                        }
                    }
                }
            }
            // ∫_F ψ_0 = sqrt(h_F) and ∫_F ψ_j = 0 for j > 0
            rhs[(rot, layout.face(i, 0, 0))] += 0.5 * nu.y * h_f.sqrt();
            rhs[(rot, layout.face(i, 1, 0))] -= 0.5 * nu.x * h_f.sqrt();

            for a in 0..2 {
                for b in 0..2 {
                    for m in 0..nk {
                        let row = (2 * a + b) * nk + m;
                        for j in 0..nf {
                            g[(row, layout.face(i, a, j))] += nu[b] * p[(j, m)];
                        }
                        for n in 0..nc {
                            g[(row, layout.cell(a, n))] -= nu[b] * bb[(m, n)];
                        }
                    }
                }
            }

            // ‖v_F − v_T‖²_{L²(F)} / h_F
            for c in 0..2 {
                for j in 0..nf {
                    h_norm[(layout.face(i, c, j), layout.face(i, c, j))] += 1.0 / h_f;
                    for n in 0..nc {
                        let v = p[(j, n)] / h_f;
                        h_norm[(layout.face(i, c, j), layout.cell(c, n))] -= v;
                        h_norm[(layout.cell(c, n), layout.face(i, c, j))] -= v;
                    }
                }
                for m in 0..nc {
                    for n in 0..nc {
                        h_norm[(layout.cell(c, m), layout.cell(c, n))] += bb[(m, n)] / h_f;
                    }
                }
            }
            pf.push(p);
        }

        // constraints: ∫𝓡v = ∫v_T (first coefficient, B_0 constant) and the rotation moment
        let scale = kmat.amax().max(f64::MIN_POSITIVE);
        let mut lhs = DMatrix::zeros(2 * n1 + 3, 2 * n1 + 3);
        lhs.view_mut((0, 0), (2 * n1, 2 * n1)).copy_from(&kmat);
        let mut set_constraint = |row: usize, col: usize, v: f64| {
            lhs[(row, col)] = scale * v;
            lhs[(col, row)] = scale * v;
        };
        set_constraint(2 * n1, 0, 1.0);
        set_constraint(2 * n1 + 1, n1, 1.0);
        for m in 0..n1 {
            set_constraint(rot, m, 0.5 * mean_grad[1][m]);
            set_constraint(rot, n1 + m, -0.5 * mean_grad[0][m]);
        }
        for c in 0..2 {
            rhs[(2 * n1 + c, layout.cell(c, 0))] = scale;
        }
        for j in 0..ndof {
            rhs[(rot, j)] *= scale;
        }
        let sol = lhs.lu().solve(&rhs).ok_or(Error::DegenerateElement(t))?;
        let r = sol.rows(0, 2 * n1).into_owned();

        let mut eps = g.clone();
        for m in 0..nk {
            let sym = 0.5 * (g.row(nk + m) + g.row(2 * nk + m));
            eps.set_row(nk + m, &sym);
            eps.set_row(2 * nk + m, &sym);
        }

        let s = stabilization(&layout, &r, &pf, &face_bases, geo.diameter)?;

        let mut a = 2.0 * mu * eps.transpose() * &eps;
        let tr = eps.rows(0, nk) + eps.rows(3 * nk, nk);
        a += lambda * tr.transpose() * &tr;
        a += mu * &s;
        let a = 0.5 * (&a + a.transpose());

        Ok(Self {
            layout,
            basis,
            face_bases,
            r,
            g,
            eps,
            s,
            a,
            h_norm,
            strain_energy: kmat,
            lambda,
            mu,
        })
    }

    pub fn size(&self) -> usize {
        self.layout.size()
    }

    /// Coefficients of `𝓡v`.
    pub fn potential(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.r * v
    }

    /// Coefficients of `ε_h v`.
    pub fn strain(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.eps * v
    }

    /// Coefficients of `σ_h = ℂε_h v`.
    pub fn stress(&self, v: &DVector<f64>) -> DVector<f64> {
        let nk = dim_p(self.layout.k);
        let e = self.strain(v);
        let mut out = 2.0 * self.mu * &e;
        for m in 0..nk {
            let tr = self.lambda * (e[m] + e[3 * nk + m]);
            out[m] += tr;
            out[3 * nk + m] += tr;
        }
        out
    }

    /// Local interpolation `(Π_T^{k_cell} v, Π_F^k v)`.
    pub fn interpolate(&self, v: &dyn Fn(Point) -> nalgebra::Vector2<f64>, verts: &[Point; 3]) -> DVector<f64> {
        let l = &self.layout;
        let quad = 2 * (l.k + 1) + 2;
        let mut out = DVector::zeros(l.size());
        let cell = l2_project_cell(|x| v(x).into(), &self.basis, verts, l.variant.cell_degree(l.k), quad);
        out.rows_mut(0, l.cell_size()).copy_from_slice(&cell);
        for (i, fb) in self.face_bases.iter().enumerate() {
            let face = l2_project_face(|x| v(x).into(), fb, quad);
            out.rows_mut(l.face_offset(i), l.face_size()).copy_from_slice(&face);
        }
        out
    }
}

/// Unweighted local stabilization of the given variant.
fn stabilization(
    layout: &LocalDofLayout,
    r: &DMatrix<f64>,
    pf: &[DMatrix<f64>],
    face_bases: &[FaceBasis; 3],
    h_t: f64,
) -> Result<DMatrix<f64>> {
    let k = layout.k;
    let n1 = dim_p(k + 1);
    let nk = dim_p(k);
    let nc = layout.n_cell;
    let nf = layout.n_face;
    let ndof = layout.size();
    if (layout.variant == Variant::Hdg) != (nc == n1) {
        return Err(Error::VariantMismatch(layout.variant.name()));
    }

    // δ_TF = Π_F^k(v_F − 𝓡v)
    let delta_tf: Vec<DMatrix<f64>> = (0..3)
        .map(|i| {
            let mut d = DMatrix::zeros(2 * nf, ndof);
            for c in 0..2 {
                for j in 0..nf {
                    d[(c * nf + j, layout.face(i, c, j))] += 1.0;
                }
                let proj = &pf[i] * r.rows(c * n1, n1);
                let mut blk = d.rows_mut(c * nf, nf);
                blk -= proj;
            }
            d
        })
        .collect();

    let mut s = DMatrix::zeros(ndof, ndof);
    match layout.variant {
        Variant::Classic | Variant::Tilde => {
            // δ_T = Π_T^k(v_T − 𝓡v)
            let mut delta_t = DMatrix::zeros(2 * nk, ndof);
            for c in 0..2 {
                for m in 0..nk {
                    delta_t[(c * nk + m, layout.cell(c, m))] += 1.0;
                }
                let mut blk = delta_t.rows_mut(c * nk, nk);
                blk -= r.rows(c * n1, nk);
            }
            for i in 0..3 {
                let h_f = face_bases[i].length();
                if layout.variant == Variant::Classic {
                    let mut diff = delta_tf[i].clone();
                    for c in 0..2 {
                        let trace = pf[i].columns(0, nk) * delta_t.rows(c * nk, nk);
                        let mut blk = diff.rows_mut(c * nf, nf);
                        blk -= trace;
                    }
                    s += diff.transpose() * &diff / h_f;
                } else {
                    s += delta_tf[i].transpose() * &delta_tf[i] / h_f;
                }
            }
            if layout.variant == Variant::Tilde {
                s += delta_t.transpose() * &delta_t / (h_t * h_t);
            }
        }
        Variant::Hdg => {
            // Π_F^k(v_F − v_T)
            for i in 0..3 {
                let h_f = face_bases[i].length();
                let mut diff = DMatrix::zeros(2 * nf, ndof);
                for c in 0..2 {
                    for j in 0..nf {
                        diff[(c * nf + j, layout.face(i, c, j))] += 1.0;
                        for n in 0..nc {
                            diff[(c * nf + j, layout.cell(c, n))] -= pf[i][(j, n)];
                        }
                    }
                }
                s += diff.transpose() * &diff / h_f;
            }
        }
    }
    Ok(0.5 * (&s + s.transpose()))
}

/// `(‖v‖_h, |v|_s, |v|_ŝ, ‖v‖_{a_h})` summed over elements from local
/// restrictions `v_T` of a discrete function.
pub fn hho_norms<'a>(locals: impl IntoIterator<Item = (&'a LocalOperators, &'a DVector<f64>)>) -> (f64, f64, f64, f64) {
    let (mut h, mut s, mut shat, mut a) = (0.0, 0.0, 0.0, 0.0);
    for (ops, v) in locals {
        h += v.dot(&(&ops.h_norm * v));
        let sv = v.dot(&(&ops.s * v));
        s += ops.mu * sv;
        shat += sv;
        a += v.dot(&(&ops.a * v));
    }
    (h.max(0.0).sqrt(), s.max(0.0).sqrt(), shat.max(0.0).sqrt(), a.max(0.0).sqrt())
}
