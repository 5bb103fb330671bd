//! Quadrature rules on the reference triangle `{(0,0), (1,0), (0,1)}`.
//!
//! Degrees 1 and 2 use the classical centroid and three-point rules. Higher
//! degrees use the collapsed (Duffy) tensor product of Gauss-Legendre rules,
//! which has strictly positive weights and all points in the interior.

use super::MeshError;

/// Highest degree for which [`quad_rule`] returns a rule.
pub const MAX_QUAD_DEGREE: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    /// Barycentric coordinates `(l0, l1, l2)` of each point; the reference
    /// coordinates are `(l1, l2)`.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integrates `f(x, y)` over the reference triangle.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_m and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn collapsed_rule(degree: usize) -> QuadRule {
    let m = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (xi, wi) in x.iter().zip(&w) {
        let u = 0.5 * (xi + 1.0);
        for (xj, wj) in x.iter().zip(&w) {
            let v = 0.5 * (xj + 1.0);
            let px = u;
            let py = (1.0 - u) * v;
            points.push([1.0 - px - py, px, py]);
            weights.push(0.25 * wi * wj * (1.0 - u));
        }
    }
    QuadRule {
        points,
        weights,
        degree: 2 * m - 2,
    }
}

/// Returns a rule exact for all bivariate polynomials of total degree at most
/// `degree`.
pub fn quad_rule(degree: usize) -> Result<QuadRule, MeshError> {
    match degree {
        0 | 1 => Ok(QuadRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            degree: 1,
        }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(QuadRule {
                points: vec![[a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 6.0; 3],
                degree: 2,
            })
        }
        d if d <= MAX_QUAD_DEGREE => Ok(collapsed_rule(d)),
        d => Err(MeshError::UnsupportedDegree(d)),
    }
}
