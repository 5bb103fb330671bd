//! Sparse matrices, a direct sparse LU solve and a damped Newton driver.
//!
//! Factorizations are delegated to `faer`'s supernodal LU with partial
//! pivoting. The symbolic analysis is cached across solves with an identical
//! sparsity pattern, which is the common case inside Newton and across time
//! steps.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::lu::simplicial;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use thiserror::Error;

/// Relative residual `‖Ax − b‖ / max(1, ‖b‖)` accepted from a direct solve.
pub const SOLVE_RESIDUAL_BOUND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("LU factorization failed: no usable pivot at elimination step {pivot}")]
    FactorizationFailure { pivot: usize },
    #[error("Newton did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Real sparse matrix in compressed column storage; duplicates are summed on
/// construction.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

/// Accumulates `(row, col, value)` entries before compression.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    /// Adds an entry. Explicit zeros are kept so that the pattern depends only
    /// on which entries were pushed.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push(Triplet::new(row, col, value));
    }

    pub fn build(self) -> Result<SparseMatrix, LinalgError> {
        if let Some(t) = self
            .entries
            .iter()
            .find(|t| t.row >= self.nrows || t.col >= self.ncols)
        {
            return Err(LinalgError::Dimension(format!(
                "entry ({}, {}) outside a {}x{} matrix",
                t.row, t.col, self.nrows, self.ncols
            )));
        }
        let inner = SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .map_err(|e| LinalgError::Dimension(format!("{e:?}")))?;
        Ok(SparseMatrix { inner })
    }
}

impl SparseMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, entries.len());
        for &(i, j, v) in entries {
            b.push(i, j, v);
        }
        b.build()
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
            .expect("diagonal entries are in range")
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = self.inner.row_idx_of_col_raw(j);
        let vals = self.inner.val_of_col(j);
        rows.iter()
            .zip(vals)
            .filter(|(r, _)| **r == i)
            .map(|(_, v)| *v)
            .sum()
    }

    /// Stored entries of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.inner
            .row_idx_of_col_raw(j)
            .iter()
            .copied()
            .zip(self.inner.val_of_col(j).iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = vec![0.0; self.nrows()];
        for (j, xj) in x.iter().enumerate() {
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// Multiplies every row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, scale: &[f64]) {
        assert_eq!(scale.len(), self.nrows());
        let ncols = self.ncols();
        for j in 0..ncols {
            let rows: Vec<usize> = self.inner.row_idx_of_col_raw(j).to_vec();
            for (v, i) in self.inner.val_of_col_mut(j).iter_mut().zip(rows) {
                *v *= scale[i];
            }
        }
    }

    /// Offset of entry `(i, j)` in [`SparseMatrix::values_mut`], if stored.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let s = self.inner.symbolic();
        let start = s.col_ptr()[j];
        let rows = &s.row_idx()[start..s.col_ptr()[j + 1]];
        rows.binary_search(&i).ok().map(|k| start + k)
    }

    /// Column pointers of the compressed storage (length `ncols + 1`).
    pub fn col_ptr(&self) -> &[usize] {
        self.inner.symbolic().col_ptr()
    }

    /// Row index of every stored entry, sorted within each column.
    pub fn row_indices(&self) -> &[usize] {
        self.inner.symbolic().row_idx()
    }

    /// Stored values in column-major order.
    pub fn values(&self) -> &[f64] {
        self.inner.val()
    }

    /// Stored values in column-major order; the pattern is left untouched.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.inner.val_mut()
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        let (a, b) = (self.inner.symbolic(), other.inner.symbolic());
        a.nrows() == b.nrows()
            && a.ncols() == b.ncols()
            && a.col_ptr() == b.col_ptr()
            && a.row_idx() == b.row_idx()
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A linear solver that factors a matrix once and then solves for any number
/// of right-hand sides.
pub trait LinearSolver {
    /// Factors `a`, replacing the previous factorization.
    fn factor(&mut self, a: &SparseMatrix) -> Result<(), LinalgError>;
    /// Solves with the current factorization.
    fn solve_factored(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError>;
    fn is_factored(&self) -> bool;
}

/// Direct sparse solver that reuses the symbolic factorization while the
/// sparsity pattern does not change.
#[derive(Default)]
pub struct LuSolver {
    symbolic: Option<SymbolicLu<usize>>,
    /// The factored matrix (kept for the pattern test and the residual check)
    /// and its numeric factors.
    factored: Option<(SparseMatrix, Option<Lu<usize, f64>>)>,
}

impl std::fmt::Debug for LuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuSolver")
            .field("has_symbolic", &self.symbolic.is_some())
            .field("is_factored", &self.is_factored())
            .finish()
    }
}

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factors `a` and solves `a x = b`.
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.factor(a)?;
        self.solve_factored(b)
    }
}

impl LinearSolver for LuSolver {
    fn factor(&mut self, a: &SparseMatrix) -> Result<(), LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let reuse = self.symbolic.is_some() && matches!(&self.factored, Some((p, _)) if p.same_pattern(a));
        if !reuse {
            self.factored = None;
            self.symbolic = Some(
                SymbolicLu::try_new(a.inner.symbolic()).map_err(|_| LinalgError::FactorizationFailure { pivot: 0 })?,
            );
        }
        let symbolic = self.symbolic.clone().expect("set above");
        // a failed factorization is reported when solving, with the pivot located
        let lu = Lu::try_new_with_symbolic(symbolic, a.inner.as_ref()).ok();
        let failed = lu.is_none();
        self.factored = Some((a.clone(), lu));
        if failed {
            return Err(locate_bad_pivot(a));
        }
        Ok(())
    }

    fn solve_factored(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let Some((a, lu)) = &self.factored else {
            return Err(LinalgError::Dimension("solve before factorization".to_string()));
        };
        let n = a.nrows();
        if b.len() != n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has length {}, expected {n}",
                b.len()
            )));
        }
        let Some(lu) = lu else {
            return Err(locate_bad_pivot(a));
        };
        let rhs = Col::<f64>::from_fn(n, |i| b[i]);
        let sol = lu.solve(&rhs);
        let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        let ax = a.mul_vec(&x);
        let res = norm2(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
        if !res.is_finite() || res > SOLVE_RESIDUAL_BOUND * norm2(b).max(1.0) {
            return Err(locate_bad_pivot(a));
        }
        Ok(x)
    }

    fn is_factored(&self) -> bool {
        matches!(&self.factored, Some((_, Some(_))))
    }
}

/// Refactors with a plain left-looking LU (natural column order) and reports
/// the elimination step with the smallest pivot relative to the matrix scale.
fn locate_bad_pivot(a: &SparseMatrix) -> LinalgError {
    let n = a.nrows();
    let fwd: Vec<usize> = (0..n).collect();
    let inv = fwd.clone();
    let col_perm = faer::perm::PermRef::new_checked(&fwd, &inv, n);
    let mut row_perm = vec![0usize; n];
    let mut row_perm_inv = vec![0usize; n];
    let mut lu = simplicial::SimplicialLu::<usize, f64>::new();
    let mut mem = MemBuffer::new(simplicial::factorize_simplicial_numeric_lu_scratch::<usize, f64>(n, n));
    let stack = MemStack::new(&mut mem);
    if let Err(faer::sparse::linalg::LuError::SymbolicSingular { index }) =
        simplicial::factorize_simplicial_numeric_lu(
            &mut row_perm,
            &mut row_perm_inv,
            &mut lu,
            a.inner.as_ref(),
            col_perm,
            stack,
        )
    {
        return LinalgError::FactorizationFailure { pivot: index };
    }
    let u = lu.u_factor_unsorted();
    let mut worst = (0, f64::INFINITY);
    for j in 0..n {
        let d = u
            .row_idx_of_col_raw(j)
            .iter()
            .zip(u.val_of_col(j))
            .find(|(r, _)| **r == j)
            .map_or(0.0, |(_, v)| v.abs());
        if !(d >= worst.1) {
            worst = (j, d);
        }
    }
    LinalgError::FactorizationFailure { pivot: worst.0 }
}

/// One-shot sparse solve of `A x = b`.
pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    LuSolver::new().solve(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    /// Always take the full Newton step.
    None,
    /// Halve the step (at most [`MAX_HALVINGS`] times) while the residual norm
    /// does not decrease.
    Halving,
}

pub const MAX_HALVINGS: usize = 8;

/// When the Newton driver assembles and factors a new Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianUpdate {
    /// At every iterate (full Newton).
    EveryIteration,
    /// Keep the last factorization, also across calls, while each step with it
    /// reduces the residual norm at least by the factor `ratio`; refactor at
    /// the current iterate otherwise. The converged root is the same, only
    /// the iteration path differs.
    Lagged { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Absolute tolerance on the Euclidean norm of the residual vector.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: Damping,
    pub jacobian: JacobianUpdate,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tolerance: 1e-12,
            max_iterations: 25,
            damping: Damping::Halving,
            jacobian: JacobianUpdate::EveryIteration,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), LinalgError> {
        let ratio_ok = match self.jacobian {
            JacobianUpdate::EveryIteration => true,
            JacobianUpdate::Lagged { ratio } => ratio > 0.0 && ratio < 1.0,
        };
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !ratio_ok {
            return Err(LinalgError::Dimension(format!(
                "Newton needs tolerance > 0 and at least one iteration, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    /// Accepted steps, with fresh or kept factorizations.
    pub iterations: usize,
    pub factorizations: usize,
    pub residual_norm: f64,
}

/// Damped Newton iteration for `r(x) = 0` with a fresh solver.
pub fn newton<E, R, J>(
    residual: R,
    jacobian: J,
    x0: Vec<f64>,
    settings: &NewtonSettings,
) -> Result<NewtonOutcome, E>
where
    E: From<LinalgError>,
    R: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    J: FnMut(&[f64]) -> Result<SparseMatrix, E>,
{
    newton_with_solver(residual, jacobian, x0, settings, &mut LuSolver::new())
}

/// Like [`newton`] but with a caller-owned solver, whose symbolic analysis
/// and (under [`JacobianUpdate::Lagged`]) factorization carry over between
/// calls.
///
/// A residual evaluation that fails at a trial point of the line search is
/// treated as an increase of the residual; a failure at an accepted iterate is
/// returned to the caller.
pub fn newton_with_solver<E, R, J, S>(
    mut residual: R,
    mut jacobian: J,
    x0: Vec<f64>,
    settings: &NewtonSettings,
    solver: &mut S,
) -> Result<NewtonOutcome, E>
where
    E: From<LinalgError>,
    R: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    J: FnMut(&[f64]) -> Result<SparseMatrix, E>,
    S: LinearSolver,
{
    settings.validate()?;
    let lagged = match settings.jacobian {
        JacobianUpdate::EveryIteration => None,
        JacobianUpdate::Lagged { ratio } => Some(ratio),
    };
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut rnorm = norm2(&r);
    let mut iterations = 0;
    let mut factorizations = 0;
    let mut keep = lagged.is_some() && solver.is_factored();
    while rnorm > settings.tolerance || !rnorm.is_finite() {
        if iterations == settings.max_iterations {
            return Err(LinalgError::NoConvergence {
                iterations,
                residual: rnorm,
            }
            .into());
        }
        if let (true, Some(ratio)) = (keep, lagged) {
            // undamped step with the kept factorization, accepted only if it
            // contracts well enough
            if let Ok(dx) = solver.solve_factored(&r) {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi - di).collect();
                if let Ok(rt) = residual(&trial) {
                    let nt = norm2(&rt);
                    if nt.is_finite() && (nt <= ratio * rnorm || nt <= settings.tolerance) {
                        x = trial;
                        r = rt;
                        rnorm = nt;
                        iterations += 1;
                        continue;
                    }
                }
            }
            keep = false;
            continue;
        }
        let jac = jacobian(&x)?;
        solver.factor(&jac)?;
        factorizations += 1;
        let dx = solver.solve_factored(&r)?;
        iterations += 1;
        keep = lagged.is_some();
        let mut step = 1.0;
        let mut halvings = 0;
        let mut last_err = None;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi - step * di).collect();
            match residual(&trial) {
                Ok(rt) => {
                    let nt = norm2(&rt);
                    let accept = settings.damping == Damping::None
                        || nt < rnorm
                        || nt <= settings.tolerance
                        || halvings == MAX_HALVINGS;
                    if accept && nt.is_finite() {
                        x = trial;
                        r = rt;
                        rnorm = nt;
                        break;
                    }
                }
                Err(e) => {
                    if settings.damping == Damping::None || halvings == MAX_HALVINGS {
                        return Err(e);
                    }
                    last_err = Some(e);
                }
            }
            if halvings == MAX_HALVINGS {
                return Err(last_err.unwrap_or_else(|| {
                    LinalgError::NoConvergence {
                        iterations,
                        residual: rnorm,
                    }
                    .into()
                }));
            }
            step *= 0.5;
            halvings += 1;
        }
    }
    Ok(NewtonOutcome {
        x,
        iterations,
        factorizations,
        residual_norm: rnorm,
    })
}
