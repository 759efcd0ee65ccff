//! Conforming triangulations of polygonal domains and newest-vertex bisection.
//!
//! Triangles are stored as vertex triples `[v0, v1, v2]` in counterclockwise
//! order; the refinement edge is `(v1, v2)`, opposite the newest vertex `v0`.
//! Local side `i` of a triangle is the edge opposite its vertex `i`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryLabel {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// An edge of the triangulation.
#[derive(Debug, Clone)]
pub struct Side {
    /// Endpoints, oriented counterclockwise with respect to `plus`.
    pub vertices: [usize; 2],
    pub kind: SideKind,
    /// Fixed unit normal `ν_F`, equal to the outward normal of `plus`.
    pub normal: Point,
    /// Element `T₊` with `ν_{T₊}|_F = ν_F`.
    pub plus: usize,
    /// Element `T₋` for interior sides.
    pub minus: Option<usize>,
    /// Length `h_F`.
    pub length: f64,
}

impl Side {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }

    pub fn midpoint(&self, mesh: &Triangulation) -> Point {
        0.5 * (mesh.vertices[self.vertices[0]] + mesh.vertices[self.vertices[1]])
    }
}

#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Diameter `h_T` (longest edge).
    pub diameter: f64,
    pub area: f64,
    pub centroid: Point,
    /// Outward unit normal on local side `i`.
    pub normals: [Point; 3],
}

/// A conforming triangulation with boundary labels and side topology.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    generation: Vec<u32>,
    labels: BTreeMap<(usize, usize), BoundaryLabel>,
    sides: Vec<Side>,
    element_sides: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
}

/// Named benchmark domains and mesh files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainSpec {
    /// Cook's membrane: tapered panel clamped on the left.
    Cooks,
    /// Rotated L-shaped domain with the reentrant corner at the origin.
    LShape,
    /// Unit square with Dirichlet conditions on the whole boundary.
    UnitSquare,
    /// Mesh file in the ASCII `hho-mesh 1` format.
    File(std::path::PathBuf),
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Local side `i` of `tri`, counterclockwise.
fn local_side(tri: &[usize; 3], i: usize) -> [usize; 2] {
    [tri[(i + 1) % 3], tri[(i + 2) % 3]]
}

impl Triangulation {
    /// Builds a triangulation from raw lists. Clockwise triangles are
    /// reoriented by swapping `v1` and `v2`, which keeps the refinement edge.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<([usize; 2], BoundaryLabel)>,
    ) -> Result<Self> {
        let generation = vec![0; triangles.len()];
        let mut labels = BTreeMap::new();
        for (e, label) in boundary {
            if e[0] == e[1] {
                return Err(Error::InconsistentLabels(format!("degenerate boundary edge {e:?}")));
            }
            if let Some(old) = labels.insert(edge_key(e[0], e[1]), label) {
                if old != label {
                    return Err(Error::InconsistentLabels(format!("edge {e:?} labeled twice")));
                }
            }
        }
        Self::from_parts(vertices, triangles, generation, labels)
    }

    fn from_parts(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        labels: BTreeMap<(usize, usize), BoundaryLabel>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::NonConforming("no triangles".into()));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::NonConforming(format!("triangle {t} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let det = cross(b - a, c - a);
            let scale = (b - a).norm_squared().max((c - a).norm_squared());
            if det.abs() <= 1e-14 * scale {
                return Err(Error::DegenerateElement(t));
            }
            if det < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut sides: Vec<Side> = Vec::with_capacity(triangles.len() * 3 / 2 + 2);
        let mut element_sides = Vec::with_capacity(triangles.len());
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        for (t, tri) in triangles.iter().enumerate() {
            let mut ids = [0; 3];
            for (i, id) in ids.iter_mut().enumerate() {
                let [a, b] = local_side(tri, i);
                let key = edge_key(a, b);
                match lookup.get(&key) {
                    Some(&s) => {
                        let side = &mut sides[s];
                        if side.minus.is_some() || side.vertices == [a, b] {
                            return Err(Error::NonConforming(format!(
                                "edge ({a}, {b}) is shared by more than two triangles or inconsistently oriented"
                            )));
                        }
                        side.minus = Some(t);
                        *id = s;
                    }
                    None => {
                        let d = vertices[b] - vertices[a];
                        let length = d.norm();
                        lookup.insert(key, sides.len());
                        *id = sides.len();
                        sides.push(Side {
                            vertices: [a, b],
                            kind: SideKind::Interior,
                            normal: Point::new(d.y, -d.x) / length,
                            plus: t,
                            minus: None,
                            length,
                        });
                    }
                }
            }
            element_sides.push(ids);
        }

        let mut has_dirichlet = false;
        for side in sides.iter_mut() {
            let key = edge_key(side.vertices[0], side.vertices[1]);
            match (side.minus, labels.get(&key)) {
                (Some(_), None) => {}
                (Some(_), Some(_)) => {
                    return Err(Error::InconsistentLabels(format!("interior edge {key:?} carries a boundary label")));
                }
                (None, None) => {
                    return Err(Error::InconsistentLabels(format!("boundary edge {key:?} has no label")));
                }
                (None, Some(BoundaryLabel::Dirichlet)) => {
                    side.kind = SideKind::Dirichlet;
                    has_dirichlet = true;
                }
                (None, Some(BoundaryLabel::Neumann)) => side.kind = SideKind::Neumann,
            }
        }
        if let Some(key) = labels.keys().find(|k| !lookup.contains_key(k)) {
            return Err(Error::InconsistentLabels(format!("labeled edge {key:?} is not a mesh edge")));
        }
        if !has_dirichlet {
            return Err(Error::InconsistentLabels("the Dirichlet boundary is empty".into()));
        }

        let geometry = triangles
            .iter()
            .map(|tri| {
                let p = tri.map(|v| vertices[v]);
                let mut normals = [Point::zeros(); 3];
                let mut diameter: f64 = 0.0;
                for (i, n) in normals.iter_mut().enumerate() {
                    let d = p[(i + 2) % 3] - p[(i + 1) % 3];
                    diameter = diameter.max(d.norm());
                    *n = Point::new(d.y, -d.x) / d.norm();
                }
                ElementGeometry {
                    diameter,
                    area: 0.5 * cross(p[1] - p[0], p[2] - p[0]),
                    centroid: (p[0] + p[1] + p[2]) / 3.0,
                    normals,
                }
            })
            .collect();

        Ok(Self {
            vertices,
            triangles,
            generation,
            labels,
            sides,
            element_sides,
            geometry,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn side(&self, s: usize) -> &Side {
        &self.sides[s]
    }

    /// Global side ids of the local sides of element `t`.
    pub fn element_sides(&self, t: usize) -> [usize; 3] {
        self.element_sides[t]
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_sides(&self) -> usize {
        self.sides.len()
    }

    /// Vertex coordinates of element `t`.
    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Boundary edges with their labels.
    pub fn boundary_edges(&self) -> impl Iterator<Item = ([usize; 2], BoundaryLabel)> + '_ {
        self.labels.iter().map(|(&(a, b), &l)| ([a, b], l))
    }

    /// Maximal element diameter `h_max`.
    pub fn h_max(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(f64::INFINITY, f64::min)
    }

    /// Smallest interior angle of element `t` in radians.
    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.element_vertices(t);
        (0..3)
            .map(|i| {
                let a = p[(i + 1) % 3] - p[i];
                let b = p[(i + 2) % 3] - p[i];
                (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Elements sharing a side with `t`.
    pub fn neighbors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.element_sides[t].into_iter().filter_map(move |s| {
            let side = &self.sides[s];
            match side.minus {
                Some(m) if side.plus == t => Some(m),
                Some(_) => Some(side.plus),
                None => None,
            }
        })
    }

    /// Elements of the side patch `ω(F)`.
    pub fn side_patch(&self, s: usize) -> Vec<usize> {
        let side = &self.sides[s];
        std::iter::once(side.plus).chain(side.minus).collect()
    }

    /// Elements of the vertex patch `Ω(T)`: all elements touching `t`.
    pub fn element_patch(&self, t: usize) -> Vec<usize> {
        let verts = self.triangles[t];
        (0..self.n_elements())
            .filter(|&u| self.triangles[u].iter().any(|v| verts.contains(v)))
            .collect()
    }

    /// Sign of the local normal of element `t` on side `s` relative to `ν_F`.
    pub fn orientation(&self, t: usize, s: usize) -> f64 {
        if self.sides[s].plus == t {
            1.0
        } else {
            -1.0
        }
    }

    pub fn area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Same triangulation with boundary labels reassigned by `classify`,
    /// called with the endpoints of every boundary edge.
    pub fn relabel(&self, classify: impl Fn(Point, Point) -> BoundaryLabel) -> Result<Self> {
        let labels = self
            .labels
            .keys()
            .map(|&(a, b)| ((a, b), classify(self.vertices[a], self.vertices[b])))
            .collect();
        Self::from_parts(self.vertices.clone(), self.triangles.clone(), self.generation.clone(), labels)
    }

    /// Newest-vertex bisection of the marked elements with conforming
    /// closure. Every marked element is bisected twice, so all three of its
    /// edges are halved.
    pub fn refine_nvb(&self, marked: &[usize]) -> Triangulation {
        if marked.is_empty() {
            return self.clone();
        }
        let mut edge_marked = vec![false; self.sides.len()];
        let mut queue = Vec::new();
        for &t in marked {
            for s in self.element_sides[t] {
                if !edge_marked[s] {
                    edge_marked[s] = true;
                    queue.extend(self.side_patch(s));
                }
            }
        }
        // closure: a triangle with any marked edge needs its refinement edge
        while let Some(t) = queue.pop() {
            let ref_edge = self.element_sides[t][0];
            if !edge_marked[ref_edge] && self.element_sides[t].iter().any(|&s| edge_marked[s]) {
                edge_marked[ref_edge] = true;
                queue.extend(self.side_patch(ref_edge));
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        for (s, side) in self.sides.iter().enumerate() {
            if edge_marked[s] {
                let [a, b] = side.vertices;
                midpoint.insert(edge_key(a, b), vertices.len());
                vertices.push(0.5 * (self.vertices[a] + self.vertices[b]));
            }
        }

        let mut triangles = Vec::with_capacity(self.triangles.len() + 3 * midpoint.len());
        let mut generation = Vec::with_capacity(triangles.capacity());
        for (t, tri) in self.triangles.iter().enumerate() {
            bisect(*tri, self.generation[t], &midpoint, &mut triangles, &mut generation);
        }

        let mut labels = BTreeMap::new();
        for (&(a, b), &label) in &self.labels {
            match midpoint.get(&(a, b)) {
                Some(&m) => {
                    labels.insert(edge_key(a, m), label);
                    labels.insert(edge_key(m, b), label);
                }
                None => {
                    labels.insert((a, b), label);
                }
            }
        }
        Self::from_parts(vertices, triangles, generation, labels)
            .expect("bisection of a valid triangulation is valid")
    }

    /// Uniform refinement: every element is bisected twice, giving four
    /// children per element.
    pub fn uniform_refine(&self) -> Triangulation {
        let all: Vec<usize> = (0..self.n_elements()).collect();
        self.refine_nvb(&all)
    }

    /// Reads a mesh in the `hho-mesh 1` format.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::MalformedMesh(msg.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some("hho-mesh 1") {
            return Err(bad("missing `hho-mesh 1` header"));
        }
        let counts: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing counts line"))?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad("counts must be integers")))
            .collect::<Result<_>>()?;
        let [nv, nt, nb] = counts[..] else {
            return Err(bad("counts line must hold three integers"));
        };
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let line = lines.next().ok_or_else(|| bad(&format!("missing vertex {i}")))?;
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad(&format!("vertex {i}: expected two numbers"))))
                .collect::<Result<_>>()?;
            let [x, y] = xy[..] else {
                return Err(bad(&format!("vertex {i}: expected two numbers")));
            };
            vertices.push(Point::new(x, y));
        }
        let mut triangles = Vec::with_capacity(nt);
        for i in 0..nt {
            let line = lines.next().ok_or_else(|| bad(&format!("missing triangle {i}")))?;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad(&format!("triangle {i}: expected three indices"))))
                .collect::<Result<_>>()?;
            let [a, b, c] = v[..] else {
                return Err(bad(&format!("triangle {i}: expected three indices")));
            };
            triangles.push([a, b, c]);
        }
        let mut boundary = Vec::with_capacity(nb);
        for i in 0..nb {
            let line = lines.next().ok_or_else(|| bad(&format!("missing boundary edge {i}")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [a, b, label] = parts[..] else {
                return Err(bad(&format!("boundary edge {i}: expected `va vb label`")));
            };
            let a = a.parse().map_err(|_| bad(&format!("boundary edge {i}: bad index")))?;
            let b = b.parse().map_err(|_| bad(&format!("boundary edge {i}: bad index")))?;
            let label = match label {
                "D" => BoundaryLabel::Dirichlet,
                "N" => BoundaryLabel::Neumann,
                other => return Err(bad(&format!("boundary edge {i}: unknown label `{other}`"))),
            };
            boundary.push(([a, b], label));
        }
        if lines.next().is_some() {
            return Err(bad("trailing content after boundary edges"));
        }
        Self::new(vertices, triangles, boundary)
    }

    /// Serializes in the `hho-mesh 1` format.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "hho-mesh 1");
        let _ = writeln!(out, "{} {} {}", self.vertices.len(), self.triangles.len(), self.labels.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v.x, v.y);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for (&(a, b), &l) in &self.labels {
            let l = match l {
                BoundaryLabel::Dirichlet => "D",
                BoundaryLabel::Neumann => "N",
            };
            let _ = writeln!(out, "{a} {b} {l}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }
}

fn bisect(
    tri: [usize; 3],
    gen: u32,
    midpoint: &HashMap<(usize, usize), usize>,
    out: &mut Vec<[usize; 3]>,
    generation: &mut Vec<u32>,
) {
    match midpoint.get(&edge_key(tri[1], tri[2])) {
        Some(&m) => {
            bisect([m, tri[0], tri[1]], gen + 1, midpoint, out, generation);
            bisect([m, tri[2], tri[0]], gen + 1, midpoint, out, generation);
        }
        None => {
            out.push(tri);
            generation.push(gen);
        }
    }
}

/// Rotates each triangle so that its longest edge becomes the refinement
/// edge. Ties go to the edge with the lexicographically smallest sorted
/// vertex pair.
fn longest_edge_first(vertices: &[Point], triangles: &mut [[usize; 3]]) {
    for tri in triangles.iter_mut() {
        let best = (0..3)
            .max_by(|&i, &j| {
                let [a, b] = local_side(tri, i);
                let [c, d] = local_side(tri, j);
                let li = (vertices[a] - vertices[b]).norm();
                let lj = (vertices[c] - vertices[d]).norm();
                li.partial_cmp(&lj)
                    .unwrap()
                    .then_with(|| edge_key(c, d).cmp(&edge_key(a, b)))
            })
            .unwrap();
        tri.rotate_left(best);
    }
}

/// Initial triangulation of a benchmark domain or mesh file.
pub fn build_initial_mesh(spec: &DomainSpec) -> Result<Triangulation> {
    use BoundaryLabel::{Dirichlet as D, Neumann as N};
    let (vertices, mut triangles, boundary) = match spec {
        DomainSpec::File(path) => return Triangulation::read(path),
        DomainSpec::Cooks => (
            vec![
                Point::new(0.0, 0.0),
                Point::new(48.0, 44.0),
                Point::new(48.0, 60.0),
                Point::new(0.0, 44.0),
            ],
            vec![[0, 1, 3], [3, 1, 2]],
            vec![([0, 1], N), ([1, 2], N), ([2, 3], N), ([3, 0], D)],
        ),
        DomainSpec::UnitSquare => (
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![([0, 1], D), ([1, 2], D), ([2, 3], D), ([3, 0], D)],
        ),
        DomainSpec::LShape => (
            // six right isosceles triangles around the reentrant corner;
            // (1, 1) splits the edge from (2, 0) to (0, 2)
            vec![
                Point::new(0.0, 0.0),
                Point::new(-1.0, -1.0),
                Point::new(0.0, -2.0),
                Point::new(1.0, -1.0),
                Point::new(2.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 2.0),
                Point::new(-1.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 7]],
            vec![
                ([0, 1], N),
                ([1, 2], D),
                ([2, 3], D),
                ([3, 4], D),
                ([4, 5], D),
                ([5, 6], D),
                ([6, 7], D),
                ([7, 0], N),
            ],
        ),
    };
    longest_edge_first(&vertices, &mut triangles);
    Triangulation::new(vertices, triangles, boundary)
}
