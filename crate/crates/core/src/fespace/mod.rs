//! Periodic continuous Lagrange spaces on a [`PeriodicTriMesh`].
//!
//! Degrees of freedom are numbered vertices first, then edge midpoints, each
//! group in lexicographic order of the normalized `(x, y)` coordinate. The
//! vector P2 space stacks the x-component block before the y-component block.

pub mod basis;

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{quad_rule, PeriodicTriMesh, QuadRule};

/// Quadrature degree used for all integrals unless stated otherwise.
pub const DEFAULT_QUAD_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeError {
    #[error("function spaces do not match: {0}")]
    SpaceMismatch(String),
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    P1,
    /// P1 constrained to zero mean. Shares the DOF map of [`Family::P1`]; the
    /// constraint is carried by whoever produces the coefficients.
    P1MeanFree,
    P2,
    P2Vector,
}

impl Family {
    pub fn order(self) -> usize {
        match self {
            Family::P1 | Family::P1MeanFree => 1,
            Family::P2 | Family::P2Vector => 2,
        }
    }

    pub fn components(self) -> usize {
        if self == Family::P2Vector {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<PeriodicTriMesh>,
    family: Family,
    scalar_dofs: usize,
    /// Scalar local-to-global map, `basis::count(order)` entries per triangle.
    element_dofs: Vec<usize>,
    /// Coordinates in `[0,1)^2` of each scalar node.
    nodes: Vec<[f64; 2]>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<PeriodicTriMesh>, family: Family) -> Self {
        let n = mesh.n();
        let nv = n * n;
        let (element_dofs, nodes) = match family.order() {
            1 => {
                let dofs = mesh.triangles().iter().flatten().copied().collect();
                (dofs, mesh.vertices().to_vec())
            }
            _ => {
                // Midpoints live on the lattice of spacing 1/(2n); a point
                // (X, Y) there is a midpoint iff X or Y is odd.
                let m = 2 * n;
                let mut lattice = vec![usize::MAX; m * m];
                let mut nodes = mesh.vertices().to_vec();
                for x in 0..m {
                    for y in 0..m {
                        if x % 2 == 1 || y % 2 == 1 {
                            lattice[x * m + y] = nodes.len();
                            nodes.push([x as f64 / m as f64, y as f64 / m as f64]);
                        }
                    }
                }
                let mut dofs = Vec::with_capacity(6 * mesh.num_triangles());
                for (t, tri) in mesh.triangles().iter().enumerate() {
                    dofs.extend_from_slice(tri);
                    let g = mesh.geometries()[t];
                    for (a, b) in basis::P2_EDGES {
                        let mx = ((g.vertices[a][0] + g.vertices[b][0]) * n as f64).round() as usize;
                        let my = ((g.vertices[a][1] + g.vertices[b][1]) * n as f64).round() as usize;
                        dofs.push(lattice[(mx % m) * m + (my % m)]);
                    }
                }
                debug_assert_eq!(nodes.len(), 4 * nv);
                (dofs, nodes)
            }
        };
        FunctionSpace {
            scalar_dofs: nodes.len(),
            mesh,
            family,
            element_dofs,
            nodes,
        }
    }

    pub fn mesh(&self) -> &Arc<PeriodicTriMesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.family.order()
    }

    pub fn components(&self) -> usize {
        self.family.components()
    }

    pub fn dof_count(&self) -> usize {
        self.scalar_dofs * self.components()
    }

    /// DOFs per component.
    pub fn scalar_dof_count(&self) -> usize {
        self.scalar_dofs
    }

    pub fn local_scalar_dofs(&self) -> usize {
        basis::count(self.order())
    }

    /// Scalar global DOFs of triangle `t`; component `c` of a vector space
    /// adds `c * scalar_dof_count()`.
    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let k = self.local_scalar_dofs();
        &self.element_dofs[t * k..(t + 1) * k]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub(crate) fn same_as(&self, other: &FunctionSpace) -> bool {
        self.family == other.family && self.mesh.n() == other.mesh.n()
    }

    pub fn tabulate(&self, rule: &QuadRule) -> Tabulation {
        Tabulation::new(&self.mesh, self.order(), rule)
    }

    pub fn zero(self: &Arc<Self>) -> FeFunction {
        FeFunction {
            space: Arc::clone(self),
            coeffs: vec![0.0; self.dof_count()],
        }
    }

    /// Nodal interpolation of a scalar closure. For the mean-free family the
    /// mean of the interpolant is subtracted afterwards.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn([f64; 2]) -> f64) -> FeFunction {
        assert_eq!(self.components(), 1, "use interpolate_vector for vector spaces");
        let coeffs = self.nodes.iter().map(|&p| f(p)).collect();
        let mut out = FeFunction {
            space: Arc::clone(self),
            coeffs,
        };
        if self.family == Family::P1MeanFree {
            let mean = out.integrate();
            out.coeffs.iter_mut().for_each(|c| *c -= mean);
        }
        out
    }

    pub fn interpolate_vector(self: &Arc<Self>, f: impl Fn([f64; 2]) -> [f64; 2]) -> FeFunction {
        assert_eq!(self.components(), 2, "use interpolate for scalar spaces");
        let mut coeffs = vec![0.0; self.dof_count()];
        for (i, &p) in self.nodes.iter().enumerate() {
            let v = f(p);
            coeffs[i] = v[0];
            coeffs[self.scalar_dofs + i] = v[1];
        }
        FeFunction {
            space: Arc::clone(self),
            coeffs,
        }
    }

    /// `∫ q_i` for every scalar basis function `q_i`.
    pub fn basis_integrals(&self, rule: &QuadRule) -> Vec<f64> {
        let tab = self.tabulate(rule);
        let mut out = vec![0.0; self.scalar_dofs];
        for t in 0..self.mesh.num_triangles() {
            let dofs = self.element_dofs(t);
            for q in 0..tab.num_points() {
                let w = tab.weight(t, q);
                for (a, &d) in dofs.iter().enumerate() {
                    out[d] += w * tab.value(q, a);
                }
            }
        }
        out
    }
}

/// Basis values and physical gradients at every quadrature point of every
/// triangle.
#[derive(Debug, Clone)]
pub struct Tabulation {
    nq: usize,
    nb: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
    weights: Vec<f64>,
    points: Vec<[f64; 2]>,
}

impl Tabulation {
    fn new(mesh: &PeriodicTriMesh, order: usize, rule: &QuadRule) -> Self {
        let nq = rule.len();
        let nb = basis::count(order);
        let mut values = vec![0.0; nq * nb];
        for (q, lam) in rule.points.iter().enumerate() {
            basis::values(order, *lam, &mut values[q * nb..(q + 1) * nb]);
        }
        let ne = mesh.num_triangles();
        let mut grads = vec![[0.0; 2]; ne * nq * nb];
        let mut weights = vec![0.0; ne * nq];
        let mut points = vec![[0.0; 2]; ne * nq];
        for (t, g) in mesh.geometries().iter().enumerate() {
            for (q, lam) in rule.points.iter().enumerate() {
                let k = t * nq + q;
                basis::gradients(order, *lam, &g.grad_bary, &mut grads[k * nb..(k + 1) * nb]);
                weights[k] = rule.weights[q] * 2.0 * g.area;
                points[k] = g.map([lam[1], lam[2]]);
            }
        }
        Tabulation {
            nq,
            nb,
            values,
            grads,
            weights,
            points,
        }
    }

    pub fn num_points(&self) -> usize {
        self.nq
    }

    pub fn num_basis(&self) -> usize {
        self.nb
    }

    /// Value of local basis `a` at quadrature point `q` (same on all triangles).
    #[inline]
    pub fn value(&self, q: usize, a: usize) -> f64 {
        self.values[q * self.nb + a]
    }

    #[inline]
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.nb..(q + 1) * self.nb]
    }

    #[inline]
    pub fn grads(&self, t: usize, q: usize) -> &[[f64; 2]] {
        let k = t * self.nq + q;
        &self.grads[k * self.nb..(k + 1) * self.nb]
    }

    /// Physical quadrature weight.
    #[inline]
    pub fn weight(&self, t: usize, q: usize) -> f64 {
        self.weights[t * self.nq + q]
    }

    /// Physical (unwrapped) coordinates of the quadrature point.
    #[inline]
    pub fn point(&self, t: usize, q: usize) -> [f64; 2] {
        self.points[t * self.nq + q]
    }
}

/// A finite element function: coefficients tagged with their space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
}

impl Norms {
    /// Squared full H1 norm.
    pub fn h1_squared(&self) -> f64 {
        self.l2 * self.l2 + self.h1_semi * self.h1_semi
    }
}

impl FeFunction {
    pub fn from_coefficients(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<Self, FeError> {
        if coeffs.len() != space.dof_count() {
            return Err(FeError::LengthMismatch {
                got: coeffs.len(),
                expected: space.dof_count(),
            });
        }
        Ok(FeFunction { space, coeffs })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coeffs
    }

    /// Component `c` evaluated at an arbitrary point (wrapped periodically).
    pub fn evaluate_component(&self, p: [f64; 2], c: usize) -> f64 {
        let space = &*self.space;
        let mesh = space.mesh();
        let (t, q) = mesh.locate(p);
        let lam = mesh.geometries()[t].barycentric(q);
        let mut phi = [0.0; 6];
        basis::values(space.order(), lam, &mut phi);
        let off = c * space.scalar_dofs;
        space
            .element_dofs(t)
            .iter()
            .zip(&phi)
            .map(|(&d, v)| self.coeffs[off + d] * v)
            .sum()
    }

    pub fn evaluate(&self, p: [f64; 2]) -> f64 {
        self.evaluate_component(p, 0)
    }

    pub fn evaluate_vector(&self, p: [f64; 2]) -> [f64; 2] {
        [self.evaluate_component(p, 0), self.evaluate_component(p, 1)]
    }

    /// `⟨f, 1⟩` per component, summed.
    pub fn integrate(&self) -> f64 {
        let rule = quad_rule(DEFAULT_QUAD_DEGREE).expect("default rule exists");
        let tab = self.space.tabulate(&rule);
        let space = &*self.space;
        let mut sum = 0.0;
        for c in 0..space.components() {
            let off = c * space.scalar_dofs;
            for t in 0..space.mesh.num_triangles() {
                let dofs = space.element_dofs(t);
                for q in 0..tab.num_points() {
                    let v: f64 = dofs
                        .iter()
                        .zip(tab.values(q))
                        .map(|(&d, b)| self.coeffs[off + d] * b)
                        .sum();
                    sum += tab.weight(t, q) * v;
                }
            }
        }
        sum
    }

    pub fn norms(&self) -> Norms {
        let rule = quad_rule(DEFAULT_QUAD_DEGREE).expect("default rule exists");
        self.norms_with_rule(&rule)
    }

    pub fn norms_with_rule(&self, rule: &QuadRule) -> Norms {
        let space = &*self.space;
        let tab = space.tabulate(rule);
        let (mut l2, mut h1) = (0.0, 0.0);
        for c in 0..space.components() {
            let off = c * space.scalar_dofs;
            for t in 0..space.mesh.num_triangles() {
                let dofs = space.element_dofs(t);
                for q in 0..tab.num_points() {
                    let w = tab.weight(t, q);
                    let mut v = 0.0;
                    let mut g = [0.0; 2];
                    for (a, &d) in dofs.iter().enumerate() {
                        let x = self.coeffs[off + d];
                        v += x * tab.value(q, a);
                        let gr = tab.grads(t, q)[a];
                        g[0] += x * gr[0];
                        g[1] += x * gr[1];
                    }
                    l2 += w * v * v;
                    h1 += w * (g[0] * g[0] + g[1] * g[1]);
                }
            }
        }
        Norms {
            l2: l2.sqrt(),
            h1_semi: h1.sqrt(),
        }
    }

    /// Exact embedding into the space of the same family on the refined mesh.
    pub fn prolong(&self, fine: &Arc<FunctionSpace>) -> Result<FeFunction, FeError> {
        let coarse = &*self.space;
        if fine.family != coarse.family {
            return Err(FeError::SpaceMismatch(format!(
                "family {:?} cannot be prolonged into {:?}",
                coarse.family, fine.family
            )));
        }
        if fine.mesh.n() != 2 * coarse.mesh.n() {
            return Err(FeError::SpaceMismatch(format!(
                "fine mesh has n = {}, expected {}",
                fine.mesh.n(),
                2 * coarse.mesh.n()
            )));
        }
        let mut coeffs = vec![0.0; fine.dof_count()];
        for c in 0..coarse.components() {
            for (i, &p) in fine.nodes.iter().enumerate() {
                coeffs[c * fine.scalar_dofs + i] = self.evaluate_component(p, c);
            }
        }
        Ok(FeFunction {
            space: Arc::clone(fine),
            coeffs,
        })
    }

    /// `self - other` on a common space.
    pub fn difference(&self, other: &FeFunction) -> Result<FeFunction, FeError> {
        if !self.space.same_as(&other.space) {
            return Err(FeError::SpaceMismatch("difference of unrelated spaces".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(FeFunction {
            space: Arc::clone(&self.space),
            coeffs,
        })
    }
}

/// Skew-symmetric convective form
/// `c_skw(u, v, w) = ½⟨(u·∇)v, w⟩ − ½⟨(u·∇)w, v⟩` on P2 vector fields.
pub fn c_skw(u: &FeFunction, v: &FeFunction, w: &FeFunction) -> Result<f64, FeError> {
    let space = &**u.space();
    if space.family() != Family::P2Vector {
        return Err(FeError::SpaceMismatch("c_skw needs P2 vector fields".into()));
    }
    if !space.same_as(v.space()) || !space.same_as(w.space()) {
        return Err(FeError::SpaceMismatch("c_skw arguments live on different spaces".into()));
    }
    let rule = quad_rule(DEFAULT_QUAD_DEGREE).expect("default rule exists");
    let tab = space.tabulate(&rule);
    let ns = space.scalar_dof_count();
    // value and gradient (row = component) at a point
    let eval = |f: &FeFunction, t: usize, q: usize| {
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (a, &d) in space.element_dofs(t).iter().enumerate() {
            let g = tab.grads(t, q)[a];
            let b = tab.value(q, a);
            for c in 0..2 {
                let x = f.coefficients()[c * ns + d];
                val[c] += x * b;
                grad[c][0] += x * g[0];
                grad[c][1] += x * g[1];
            }
        }
        (val, grad)
    };
    let mut sum = 0.0;
    for t in 0..space.mesh().num_triangles() {
        for q in 0..tab.num_points() {
            let (uu, _) = eval(u, t, q);
            let (vv, gv) = eval(v, t, q);
            let (ww, gw) = eval(w, t, q);
            let mut s = 0.0;
            for k in 0..2 {
                let dv = gv[k][0] * uu[0] + gv[k][1] * uu[1];
                let dw = gw[k][0] * uu[0] + gw[k][1] * uu[1];
                s += dv * ww[k] - dw * vv[k];
            }
            sum += 0.5 * tab.weight(t, q) * s;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests;
