//! Linear solves with the scheme Jacobian without factoring its dense border.
//!
//! The Jacobian has the bordered form
//!
//! ```text
//! J = [ A   b ]    b = q on the divergence rows,
//!     [ cᵀ  0 ]    c = q on the pressure columns,
//! ```
//!
//! with `q_i = ∫ q_i`. The divergence rows of `A` sum to the derivative of
//! `∫ div u = 0` and its pressure columns sum to zero, since a constant
//! pressure does no work on a periodic domain. Hence the multiplier step is
//! `Σ r_div / Σ q`; the remaining system is solved with one divergence row
//! replaced by a pressure pin, and the pressure constant is restored from the
//! mean row. A dense row in `A` would fill the whole pressure block in the
//! column structure the sparse LU is bounded by.

use crate::la::{LinalgError, LinearSolver, LuSolver, SparseMatrix, TripletBuilder};

use super::Layout;

/// Marks a stored entry of the full Jacobian that the reduced matrix drops.
const DROPPED: usize = usize::MAX;

#[derive(Debug)]
pub(crate) struct SaddleSolver {
    layout: Layout,
    q: Vec<f64>,
    q_sum: f64,
    /// Reduced matrix and the position of every full Jacobian entry in it.
    reduced: Option<(SparseMatrix, SparseMatrix, Vec<usize>)>,
    lu: LuSolver,
}

impl SaddleSolver {
    pub(crate) fn new(layout: Layout, q: Vec<f64>) -> Self {
        let q_sum = q.iter().sum();
        SaddleSolver {
            layout,
            q,
            q_sum,
            reduced: None,
            lu: LuSolver::new(),
        }
    }

    /// Row and column of the pressure pin.
    fn pin(&self) -> usize {
        self.layout.pi().start
    }

    fn build_map(&self, full: &SparseMatrix) -> Result<(SparseMatrix, Vec<usize>), LinalgError> {
        let m = self.layout.multiplier();
        let pin = self.pin();
        let (ptr, rows) = (full.col_ptr(), full.row_indices());
        let keep = |i: usize, j: usize| i < m && j < m && (i != pin || j == pin);
        let mut b = TripletBuilder::with_capacity(m, m, rows.len());
        for j in 0..m {
            for &i in &rows[ptr[j]..ptr[j + 1]] {
                if keep(i, j) {
                    b.push(i, j, 0.0);
                }
            }
        }
        b.push(pin, pin, 0.0);
        let reduced = b.build()?;
        let mut map = vec![DROPPED; rows.len()];
        for j in 0..m {
            for (idx, &i) in rows.iter().enumerate().take(ptr[j + 1]).skip(ptr[j]) {
                if keep(i, j) {
                    map[idx] = reduced.position(i, j).expect("entry pushed above");
                }
            }
        }
        Ok((reduced, map))
    }
}

impl LinearSolver for SaddleSolver {
    fn factor(&mut self, full: &SparseMatrix) -> Result<(), LinalgError> {
        let n = self.layout.len();
        if full.nrows() != n || full.ncols() != n {
            return Err(LinalgError::Dimension(format!(
                "expected a {n}x{n} Jacobian, got {}x{}",
                full.nrows(),
                full.ncols()
            )));
        }
        let cached = matches!(&self.reduced, Some((pattern, _, _)) if pattern.same_pattern(full));
        if !cached {
            let (reduced, map) = self.build_map(full)?;
            let mut pattern = full.clone();
            pattern.values_mut().fill(0.0);
            self.reduced = Some((pattern, reduced, map));
        }
        let pin = self.pin();
        let (_, reduced, map) = self.reduced.as_mut().expect("set above");
        let pin_pos = reduced.position(pin, pin).expect("pin is stored");
        let vals = reduced.values_mut();
        vals.fill(0.0);
        for (&to, &v) in map.iter().zip(full.values()) {
            if to != DROPPED {
                vals[to] = v;
            }
        }
        vals[pin_pos] = 1.0;
        self.lu.factor(reduced)
    }

    fn solve_factored(&self, r: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let m = self.layout.multiplier();
        if r.len() != m + 1 {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has length {}, expected {}",
                r.len(),
                m + 1
            )));
        }
        let pis = self.layout.pi();
        let dl = r[pis.clone()].iter().sum::<f64>() / self.q_sum;
        let mut rhs = r[..m].to_vec();
        for (i, q) in pis.clone().zip(&self.q) {
            rhs[i] -= q * dl;
        }
        rhs[self.pin()] = 0.0;
        let mut dx = self.lu.solve_factored(&rhs)?;
        let mean: f64 = pis.clone().zip(&self.q).map(|(i, q)| q * dx[i]).sum();
        let shift = (r[m] - mean) / self.q_sum;
        for v in &mut dx[pis] {
            *v += shift;
        }
        dx.push(dl);
        Ok(dx)
    }

    fn is_factored(&self) -> bool {
        self.lu.is_factored()
    }
}
