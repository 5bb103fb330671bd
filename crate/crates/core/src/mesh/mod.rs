//! Uniform periodic triangulations of the unit square.
//!
//! The square is cut into `n x n` cells and every cell is split along its
//! lower-left to upper-right diagonal. Vertices on the faces `x = 1` and
//! `y = 1` are identified with their images on `x = 0` and `y = 0`, so the
//! mesh lives on the flat torus.

mod quadrature;

pub use quadrature::{quad_rule, QuadRule, MAX_QUAD_DEGREE};

use thiserror::Error;

/// Tolerance used when snapping coordinates onto the periodic cell `[0,1)^2`.
pub const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("triangle index {index} out of range for a mesh with {count} triangles")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("no quadrature rule of degree {0} is implemented")]
    UnsupportedDegree(usize),
}

/// Affine geometry of one triangle, with vertex coordinates unwrapped so that
/// the triangle is a genuine (non-wrapped) simplex in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// Physical coordinates of the three vertices (counterclockwise).
    pub vertices: [[f64; 2]; 3],
    /// Columns are the physical images of the reference edge vectors.
    pub jacobian: [[f64; 2]; 2],
    pub area: f64,
    /// Constant gradients of the three barycentric coordinate functions.
    pub grad_bary: [[f64; 2]; 3],
}

impl ElementGeometry {
    fn from_vertices(vertices: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = vertices;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // Rows of J^{-1} are the gradients of lambda_1 and lambda_2.
        let g1 = [j[1][1] / det, -j[0][1] / det];
        let g2 = [-j[1][0] / det, j[0][0] / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        ElementGeometry {
            vertices,
            jacobian: j,
            area: 0.5 * det,
            grad_bary: [g0, g1, g2],
        }
    }

    /// Maps reference coordinates `(xi, eta)` on `{(0,0),(1,0),(0,1)}` to the
    /// physical triangle.
    pub fn map(&self, reference: [f64; 2]) -> [f64; 2] {
        let a = self.vertices[0];
        let j = &self.jacobian;
        [
            a[0] + j[0][0] * reference[0] + j[0][1] * reference[1],
            a[1] + j[1][0] * reference[0] + j[1][1] * reference[1],
        ]
    }

    /// Barycentric coordinates of a physical point (not necessarily inside).
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let a = self.vertices[0];
        let d = [p[0] - a[0], p[1] - a[1]];
        let l1 = self.grad_bary[1][0] * d[0] + self.grad_bary[1][1] * d[1];
        let l2 = self.grad_bary[2][0] * d[0] + self.grad_bary[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Criss-cross triangulation of the unit torus.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTriMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
}

/// Wraps a coordinate into `[0, 1)`, snapping values within [`SNAP_TOL`] of
/// an integer onto it.
pub fn normalize_coordinate(x: f64) -> f64 {
    let mut r = x - x.floor();
    if !(SNAP_TOL..=1.0 - SNAP_TOL).contains(&r) {
        r = 0.0;
    }
    r
}

impl PeriodicTriMesh {
    pub fn build_uniform(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidArgument(
                "subdivisions per axis must be at least 1".into(),
            ));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let vid = |i: usize, j: usize| (i % n) * n + (j % n);
        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut geometry = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                let p = |di: usize, dj: usize| [(i + di) as f64 * h, (j + dj) as f64 * h];
                // lower triangle, then upper triangle of cell (i, j)
                triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                geometry.push(ElementGeometry::from_vertices([p(0, 0), p(1, 0), p(1, 1)]));
                triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                geometry.push(ElementGeometry::from_vertices([p(0, 0), p(1, 1), p(0, 1)]));
            }
        }
        Ok(PeriodicTriMesh {
            n,
            vertices,
            triangles,
            geometry,
        })
    }

    /// Uniform refinement: the mesh with twice as many subdivisions per axis.
    pub fn refine(&self) -> Self {
        Self::build_uniform(2 * self.n).expect("2n is positive")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Unique periodic vertices in `[0,1)^2`, indexed by `i * n + j` for the
    /// vertex at `(i/n, j/n)`.
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_geometry(&self, t: usize) -> Result<&ElementGeometry, MeshError> {
        self.geometry.get(t).ok_or(MeshError::IndexOutOfRange {
            index: t,
            count: self.triangles.len(),
        })
    }

    pub(crate) fn geometries(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    /// Integer lattice indices `(i, j)` of the lower-left corner of the cell
    /// that owns triangle `t`.
    pub fn cell_of(&self, t: usize) -> (usize, usize) {
        let c = t / 2;
        (c / self.n, c % self.n)
    }

    /// Finds a triangle containing the (periodically wrapped) point `p` and
    /// returns it with the point expressed in that triangle's unwrapped frame.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 2]) {
        let n = self.n as f64;
        let x = normalize_coordinate(p[0]);
        let y = normalize_coordinate(p[1]);
        let i = ((x * n).floor() as usize).min(self.n - 1);
        let j = ((y * n).floor() as usize).min(self.n - 1);
        let lx = x * n - i as f64;
        let ly = y * n - j as f64;
        let t = 2 * (i * self.n + j) + usize::from(ly > lx);
        (t, [x, y])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    fn edge_incidence(mesh: &PeriodicTriMesh) -> HashMap<(usize, usize), usize> {
        // Geometric edges keyed by their normalized midpoint on the 2n lattice.
        let n2 = 2 * mesh.n() as i64;
        let mut count = HashMap::new();
        for g in mesh.geometries() {
            for (a, b) in [(1, 2), (2, 0), (0, 1)] {
                let mx = ((g.vertices[a][0] + g.vertices[b][0]) * mesh.n() as f64).round() as i64;
                let my = ((g.vertices[a][1] + g.vertices[b][1]) * mesh.n() as f64).round() as i64;
                let key = (mx.rem_euclid(n2) as usize, my.rem_euclid(n2) as usize);
                *count.entry(key).or_insert(0) += 1;
            }
        }
        count
    }

    #[test]
    fn smallest_mesh() {
        let m = PeriodicTriMesh::build_uniform(1).unwrap();
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.num_vertices(), 1);
        let area: f64 = (0..2).map(|t| m.element_geometry(t).unwrap().area).sum();
        assert!((area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            PeriodicTriMesh::build_uniform(0),
            Err(MeshError::InvalidArgument(_))
        ));
    }

    #[test]
    fn vertex_identification_by_enumeration() {
        let m = PeriodicTriMesh::build_uniform(2).unwrap();
        assert_eq!(m.num_triangles(), 8);
        // Enumerate all lattice points of the closed square and identify them.
        let mut unique = BTreeSet::new();
        for i in 0..=2 {
            for j in 0..=2 {
                let x = normalize_coordinate(i as f64 / 2.0);
                let y = normalize_coordinate(j as f64 / 2.0);
                unique.insert(((x * 1e6) as i64, (y * 1e6) as i64));
            }
        }
        assert_eq!(unique.len(), 4);
        assert_eq!(m.num_vertices(), 4);
    }

    #[test]
    fn every_edge_shared_twice() {
        for n in [1, 2, 4, 7] {
            let m = PeriodicTriMesh::build_uniform(n).unwrap();
            let inc = edge_incidence(&m);
            assert_eq!(inc.len(), 3 * n * n);
            assert!(inc.values().all(|&c| c == 2), "n = {n}");
        }
    }

    #[test]
    fn areas_and_orientation() {
        for n in [1, 3, 4, 16] {
            let m = PeriodicTriMesh::build_uniform(n).unwrap();
            assert_eq!(m.num_triangles(), 2 * n * n);
            assert_eq!(m.num_vertices(), n * n);
            let mut total = 0.0;
            for t in 0..m.num_triangles() {
                let g = m.element_geometry(t).unwrap();
                assert!(g.area > 0.0);
                assert!((g.area - 1.0 / (2.0 * (n * n) as f64)).abs() < 1e-15);
                total += g.area;
            }
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn geometry_of_a_triangle() {
        let m = PeriodicTriMesh::build_uniform(2).unwrap();
        for t in 0..m.num_triangles() {
            let g = m.element_geometry(t).unwrap();
            assert!((g.area - 0.125).abs() < 1e-15);
            let s = [
                g.grad_bary.iter().map(|v| v[0]).sum::<f64>(),
                g.grad_bary.iter().map(|v| v[1]).sum::<f64>(),
            ];
            assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
            let refs = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
            for (k, r) in refs.iter().enumerate() {
                let p = g.map(*r);
                assert!((p[0] - g.vertices[k][0]).abs() < 1e-15);
                assert!((p[1] - g.vertices[k][1]).abs() < 1e-15);
                // unwrapped vertex matches the periodic vertex after wrapping
                let v = m.vertices()[m.triangles()[t][k]];
                assert!((normalize_coordinate(p[0]) - v[0]).abs() < 1e-14);
                assert!((normalize_coordinate(p[1]) - v[1]).abs() < 1e-14);
            }
        }
        assert!(matches!(
            m.element_geometry(8),
            Err(MeshError::IndexOutOfRange { index: 8, count: 8 })
        ));
    }

    #[test]
    fn refinement_is_nested() {
        let coarse = PeriodicTriMesh::build_uniform(2).unwrap();
        let fine = coarse.refine();
        assert_eq!(fine.n(), 4);
        assert_eq!(fine.num_triangles(), 32);
        let key = |p: &[f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let fine_set: BTreeSet<_> = fine.vertices().iter().map(key).collect();
        assert!(coarse.vertices().iter().all(|p| fine_set.contains(&key(p))));
        let twice = PeriodicTriMesh::build_uniform(1).unwrap().refine().refine();
        assert_eq!(twice.n(), 4);
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = PeriodicTriMesh::build_uniform(4).unwrap();
        for p in [[0.1, 0.05], [0.1, 0.2], [0.99, 0.999], [1.3, -0.2], [0.25, 0.25]] {
            let (t, q) = m.locate(p);
            let lam = m.element_geometry(t).unwrap().barycentric(q);
            assert!(lam.iter().all(|&l| l > -1e-12), "{p:?} -> {lam:?}");
        }
    }
}
