mod common;

use std::sync::Arc;

use hho_core::approximation::{cell_bases, PiecewisePolyField, Rank};
use hho_core::basis::dim_p;
use hho_core::mesh::{build_initial_mesh, DomainSpec, SideKind, Triangulation};
use hho_core::operators::Variant;
use hho_core::problem::{manufactured_polynomial, smooth_square, DirichletDatum, Material, ProblemData};
use hho_core::quadrature::{quad_rule, DomainKind};
use hho_core::system::{assemble, nodal_average, post_process, solve, solve_with, DofMap, HhoFunction, SolverKind};
use hho_core::Point;
use nalgebra::{Matrix2, Vector2};

fn square() -> Triangulation {
    build_initial_mesh(&DomainSpec::UnitSquare).unwrap()
}

fn lshape() -> Triangulation {
    build_initial_mesh(&DomainSpec::LShape).unwrap().uniform_refine()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `∫_Ω |σ − τ_h|²` by quadrature.
fn stress_error(mesh: &Triangulation, sigma: &dyn Fn(Point) -> Matrix2<f64>, field: &PiecewisePolyField) -> (f64, f64) {
    let rule = quad_rule(DomainKind::Triangle, 16).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for t in 0..mesh.n_elements() {
        let v = mesh.element_vertices(t);
        for (x, w) in rule.on_triangle(&v) {
            let s = sigma(x);
            err += w * (s - field.eval_matrix(t, x)).norm_squared();
            norm += w * s.norm_squared();
        }
    }
    (err.sqrt(), norm.sqrt())
}

#[test]
fn dof_count_matches_blocks() {
    let mesh = lshape();
    let problem = manufactured_polynomial(1, 1.0, 1.0);
    for variant in Variant::ALL {
        for k in 1..=3 {
            let dofs = DofMap::new(&mesh, &problem, k, variant).unwrap();
            let free = mesh.sides().iter().filter(|s| s.kind != SideKind::Dirichlet).count();
            let n_cell = dim_p(variant.cell_degree(k));
            assert_eq!(dofs.n_free_faces, free);
            assert_eq!(dofs.ndof(), 2 * n_cell * mesh.n_elements() + 2 * (k + 1) * free);
            for (s, side) in mesh.sides().iter().enumerate() {
                assert_eq!(dofs.face_index[s].is_none(), side.kind == SideKind::Dirichlet);
            }
        }
    }
}

#[test]
fn zero_data_gives_zero_solution() {
    let mesh = lshape();
    let problem = ProblemData {
        name: "zero".into(),
        material: Material::Homogeneous { lambda: 3.0, mu: 1.0 },
        f: Arc::new(|_| Vector2::zeros()),
        g: Arc::new(|_, _| Vector2::zeros()),
        u_d: DirichletDatum::zero(),
        exact: None,
    };
    for condense in [false, true] {
        let sys = assemble(&mesh, &problem, 2, Variant::Classic, condense).unwrap();
        assert_eq!(max_abs(&sys.rhs), 0.0);
        let (u, _) = solve(&sys).unwrap();
        assert_eq!(max_abs(&u.cells), 0.0);
        assert_eq!(max_abs(&u.faces), 0.0);
        let post = post_process(&mesh, &problem, &u).unwrap();
        assert_eq!(max_abs(post.stress.coefficients()), 0.0);
        assert_eq!(max_abs(post.potential.coefficients()), 0.0);
    }
}

#[test]
fn assembled_matrix_is_exactly_symmetric() {
    let mesh = lshape();
    let problem = manufactured_polynomial(3, 2.0, 0.7);
    for variant in Variant::ALL {
        for condense in [false, true] {
            let sys = assemble(&mesh, &problem, 2, variant, condense).unwrap();
            assert_eq!(sys.asymmetry(), 0.0, "{variant} condense={condense}");
        }
    }
}

#[test]
fn patch_test_reproduces_interpolant() {
    for mesh in [square().uniform_refine(), lshape()] {
        for variant in Variant::ALL {
            for k in 1..=3 {
                for d in 0..=(k as u32 + 1) {
                    let problem = manufactured_polynomial(d, 1.5, 0.8);
                    let sys = assemble(&mesh, &problem, k, variant, true).unwrap();
                    let (u, stats) = solve(&sys).unwrap();
                    assert!(stats.backward_error <= 1e-12);
                    let exact = problem.exact.as_ref().unwrap();
                    let iu = HhoFunction::interpolate(&mesh, u.dofs.clone(), &*exact.displacement).unwrap();
                    let scale = max_abs(&iu.free_vector()).max(1.0);
                    let diff = max_diff(&u.free_vector(), &iu.free_vector());
                    assert!(diff <= 1e-10 * scale, "{variant} k={k} d={d}: {diff:e}");

                    let post = post_process(&mesh, &problem, &u).unwrap();
                    let (err, norm) = stress_error(&mesh, &*exact.stress, &post.stress);
                    assert!(err <= 1e-9 * norm.max(1.0), "{variant} k={k} d={d}: stress {err:e}");
                    let rule = quad_rule(DomainKind::Triangle, 12).unwrap();
                    for t in 0..mesh.n_elements() {
                        for (x, _) in rule.on_triangle(&mesh.element_vertices(t)) {
                            let r = post.potential.eval_vector(t, x);
                            assert!((r - (exact.displacement)(x)).norm() <= 1e-9 * scale);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn dirichlet_blocks_hold_face_projection() {
    let mesh = square().uniform_refine();
    let problem = manufactured_polynomial(2, 1.0, 1.0);
    let sys = assemble(&mesh, &problem, 1, Variant::Classic, true).unwrap();
    let (u, _) = solve(&sys).unwrap();
    let disp = problem.exact.as_ref().unwrap().displacement.clone();
    let iu = HhoFunction::interpolate(&mesh, u.dofs.clone(), &*disp).unwrap();
    for (s, side) in mesh.sides().iter().enumerate() {
        if side.kind == SideKind::Dirichlet {
            assert_eq!(u.face(s), &u.dofs.dirichlet_values[s][..]);
            assert!(max_diff(u.face(s), iu.face(s)) <= 1e-13);
        }
    }
}

#[test]
fn condensed_and_full_paths_agree() {
    let mesh = lshape();
    let problem = smooth_square(5.0, 1.0);
    for variant in Variant::ALL {
        for k in 1..=3 {
            let full = solve(&assemble(&mesh, &problem, k, variant, false).unwrap()).unwrap().0;
            let cond = solve(&assemble(&mesh, &problem, k, variant, true).unwrap()).unwrap().0;
            let scale = max_abs(&full.free_vector());
            let diff = max_diff(&full.free_vector(), &cond.free_vector());
            assert!(diff <= 1e-10 * scale, "{variant} k={k}: {diff:e}");
        }
    }
}

#[test]
fn conjugate_gradients_match_direct_solve() {
    let mesh = square().uniform_refine().uniform_refine();
    let problem = smooth_square(1.0, 1.0);
    let sys = assemble(&mesh, &problem, 2, Variant::Hdg, true).unwrap();
    let (direct, _) = solve(&sys).unwrap();
    let (cg, stats) = solve_with(&sys, SolverKind::ConjugateGradient { max_iterations: 20_000 }).unwrap();
    assert!(stats.backward_error <= 1e-12);
    let scale = max_abs(&direct.free_vector());
    assert!(max_diff(&direct.free_vector(), &cg.free_vector()) <= 1e-8 * scale);
}

#[test]
fn cooks_solution_is_nontrivial() {
    let mesh = build_initial_mesh(&DomainSpec::Cooks).unwrap();
    let problem = hho_core::problem::cooks(Material::from_young_poisson(1e5, 0.4999).unwrap());
    let sys = assemble(&mesh, &problem, 1, Variant::Classic, true).unwrap();
    let (u, _) = solve(&sys).unwrap();
    assert!(u.cells.iter().chain(&u.faces).all(|v| v.is_finite()));
    let x = sys.apply(&u.free_vector()[u.dofs.n_cell_dofs()..]);
    let energy: f64 = x.iter().zip(&u.free_vector()[u.dofs.n_cell_dofs()..]).map(|(a, b)| a * b).sum();
    assert!(energy > 0.0);
}

#[test]
fn stress_is_independent_of_lambda_for_deviatoric_solutions() {
    let mesh = lshape();
    let make = |lambda: f64| {
        let mut p = manufactured_polynomial(2, lambda, 1.0);
        // u = (x², −2xy) is divergence free
        let disp: hho_core::problem::VectorField = Arc::new(|x: Point| Vector2::new(x.x * x.x, -2.0 * x.x * x.y));
        let grad: hho_core::problem::MatrixField = Arc::new(|x: Point| Matrix2::new(2.0 * x.x, 0.0, -2.0 * x.y, -2.0 * x.x));
        let g2 = grad.clone();
        p.f = Arc::new(|_| Vector2::new(-2.0, 0.0));
        p.g = Arc::new(move |x, nu| {
            let e = 0.5 * (g2(x) + g2(x).transpose());
            2.0 * e * nu
        });
        p.u_d = DirichletDatum { value: disp, gradient: grad };
        p.exact = None;
        p
    };
    let mut stresses = Vec::new();
    for lambda in [0.0, 1e6] {
        let p = make(lambda);
        let (u, _) = solve(&assemble(&mesh, &p, 1, Variant::Classic, true).unwrap()).unwrap();
        stresses.push(post_process(&mesh, &p, &u).unwrap().stress);
    }
    let scale = max_abs(stresses[0].coefficients());
    let diff = max_diff(stresses[0].coefficients(), stresses[1].coefficients());
    assert!(diff <= 1e-8 * scale, "{diff:e}");
}

/// Conforming P1 hat function of vertex `v` times the unit vector `e_c`.
fn hat(mesh: &Triangulation, t: usize, v: usize, x: Point) -> (f64, Vector2<f64>) {
    let tri = mesh.triangles()[t];
    let p = mesh.element_vertices(t);
    let i = tri.iter().position(|&w| w == v).unwrap();
    let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
    let cross = |u: Vector2<f64>, w: Vector2<f64>| u.x * w.y - u.y * w.x;
    let area2 = cross(b - a, c - a);
    let value = cross(b - x, c - x) / area2;
    let d = c - b;
    (value, Vector2::new(-d.y, d.x) / area2)
}

#[test]
fn discrete_galerkin_orthogonality() {
    let mesh = lshape().uniform_refine();
    let (lambda, mu) = (4.0, 1.3);
    let problem = ProblemData {
        name: "affine".into(),
        material: Material::Homogeneous { lambda, mu },
        f: Arc::new(|x| Vector2::new(1.0 + x.y, -0.5 * x.x)),
        g: Arc::new(|x, _| Vector2::new(x.x - x.y, 0.3)),
        u_d: DirichletDatum::zero(),
        exact: None,
    };
    let dirichlet_vertex = |v: usize| {
        mesh.sides()
            .iter()
            .any(|s| s.kind == SideKind::Dirichlet && s.vertices.contains(&v))
    };
    let tri_rule = quad_rule(DomainKind::Triangle, 8).unwrap();
    let seg_rule = quad_rule(DomainKind::Segment, 8).unwrap();
    for variant in Variant::ALL {
        for k in 1..=2 {
            let (u, _) = solve(&assemble(&mesh, &problem, k, variant, true).unwrap()).unwrap();
            let sigma = post_process(&mesh, &problem, &u).unwrap().stress;
            for v in (0..mesh.vertices().len()).filter(|&v| !dirichlet_vertex(v)) {
                for c in 0..2 {
                    let (mut res, mut scale) = (0.0, 0.0);
                    for t in (0..mesh.n_elements()).filter(|&t| mesh.triangles()[t].contains(&v)) {
                        for (x, w) in tri_rule.on_triangle(&mesh.element_vertices(t)) {
                            let (phi, grad) = hat(&mesh, t, v, x);
                            let s = sigma.eval_matrix(t, x);
                            let a = w * (s[(c, 0)] * grad.x + s[(c, 1)] * grad.y);
                            let b = w * (problem.f)(x)[c] * phi;
                            res += a - b;
                            scale += a.abs() + b.abs();
                        }
                        for s in mesh.element_sides(t) {
                            let side = mesh.side(s);
                            if side.kind != SideKind::Neumann || side.plus != t {
                                continue;
                            }
                            let [p0, p1] = side.vertices.map(|i| mesh.vertices()[i]);
                            for (_, x, w) in seg_rule.on_segment(p0, p1) {
                                let (phi, _) = hat(&mesh, t, v, x);
                                let b = w * (problem.g)(x, side.normal)[c] * phi;
                                res -= b;
                                scale += b.abs();
                            }
                        }
                    }
                    assert!(res.abs() <= 1e-10 * scale, "{variant} k={k} vertex {v}: {res:e}");
                }
            }
        }
    }
}

#[test]
fn trace_identity_for_pure_dirichlet_problem() {
    let mesh = square().uniform_refine().uniform_refine();
    let problem = smooth_square(3.0, 1.0);
    let sigma = problem.exact.as_ref().unwrap().stress.clone();
    let rule = quad_rule(DomainKind::Triangle, 20).unwrap();
    for variant in Variant::ALL {
        for k in 1..=3 {
            let (u, _) = solve(&assemble(&mesh, &problem, k, variant, true).unwrap()).unwrap();
            let sh = post_process(&mesh, &problem, &u).unwrap().stress;
            let (mut diff, mut scale) = (0.0, 0.0);
            for t in 0..mesh.n_elements() {
                for (x, w) in rule.on_triangle(&mesh.element_vertices(t)) {
                    let tr = sigma(x).trace();
                    diff += w * (tr - sh.eval_matrix(t, x).trace());
                    scale += w * tr.abs();
                }
            }
            assert!(diff.abs() <= 1e-9 * scale, "{variant} k={k}: {diff:e}");
        }
    }
}

#[test]
fn averaging_takes_two_sided_means() {
    let mesh = square();
    let bases = cell_bases(&mesh, 2).unwrap();
    let n = dim_p(2);
    let mut field = PiecewisePolyField::zeros(2, Rank::Vector, bases.clone());
    for (t, value) in [(0usize, 1.0), (1, 3.0)] {
        let b0 = bases[t].eval(mesh.geometry(t).centroid)[0];
        let blk = field.block_mut(t);
        blk[0] = value / b0;
        blk[n] = -value / b0;
    }
    let avg = nodal_average(&field, &mesh, &|_| Vector2::new(7.0, 7.0)).unwrap();
    let interior = mesh.sides().iter().find(|s| s.kind == SideKind::Interior).unwrap();
    let mid = interior.midpoint(&mesh);
    let mut found = false;
    for (id, x) in avg.nodes.iter().enumerate() {
        if avg.dirichlet[id] {
            assert_eq!(avg.values[id], Vector2::new(7.0, 7.0));
        } else {
            assert!((x - mid).norm() < 1e-14);
            assert!((avg.values[id] - Vector2::new(2.0, -2.0)).norm() < 1e-12);
            found = true;
        }
    }
    assert!(found);
    assert_eq!(avg.nodes.len(), 9);
}

#[test]
fn averaging_preserves_continuous_fields() {
    let mesh = lshape();
    let problem = manufactured_polynomial(3, 1.0, 1.0);
    let (u, _) = solve(&assemble(&mesh, &problem, 2, Variant::Classic, true).unwrap()).unwrap();
    let post = post_process(&mesh, &problem, &u).unwrap();
    let disp = problem.exact.as_ref().unwrap().displacement.clone();
    let avg = nodal_average(&post.potential, &mesh, &*disp).unwrap();
    let scale = max_abs(post.potential.coefficients());
    let diff = max_diff(avg.field.coefficients(), post.potential.coefficients());
    assert!(diff <= 1e-9 * scale, "{diff:e}");
    let rule = quad_rule(DomainKind::Triangle, 6).unwrap();
    for t in 0..mesh.n_elements() {
        for (x, _) in rule.on_triangle(&mesh.element_vertices(t)) {
            assert!((avg.field.eval_vector(t, x) - disp(x)).norm() <= 1e-9 * scale);
        }
    }
}

#[test]
fn averaged_field_is_continuous() {
    let mesh = lshape();
    let problem = smooth_square(2.0, 1.0);
    let (u, _) = solve(&assemble(&mesh, &problem, 2, Variant::Tilde, true).unwrap()).unwrap();
    let post = post_process(&mesh, &problem, &u).unwrap();
    let avg = nodal_average(&post.potential, &mesh, &*problem.u_d.value).unwrap();
    for side in mesh.sides() {
        let Some(minus) = side.minus else { continue };
        let [a, b] = side.vertices.map(|i| mesh.vertices()[i]);
        for s in [0.1, 0.37, 0.8] {
            let x = a + (b - a) * s;
            let d = avg.field.eval_vector(side.plus, x) - avg.field.eval_vector(minus, x);
            assert!(d.norm() < 1e-11);
        }
    }
}
