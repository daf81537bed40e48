//! Dense linear-algebra primitives shared by the rest of the crate: angles
//! between component vectors, row Gram matrices and their determinants,
//! projection of rows to the unit sphere, and the orthogonal decomposition of
//! one row against the span of the others.
//!
//! Conventions: components are the *rows* of a `K x D` matrix, and the Gram
//! matrix is the `K x K` matrix of row inner products. Determinants are taken
//! of that Gram matrix, so for unit-norm rows the value lies in `[0, 1]` and
//! vanishes exactly when the rows are linearly dependent.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{MarError, Result};

/// Rows whose norm deviates from 1 by more than this fail unit-norm checks.
pub const UNIT_TOL: f64 = 1e-12;
/// Residual norms below this are treated as linear dependence.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// A set of `K` component vectors stored as the rows of a dense `K x D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatrix {
    data: Array2<f64>,
}

impl ComponentMatrix {
    /// Wraps a dense matrix. Requires at least one row, one column, and all
    /// entries finite.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (k, d) = data.dim();
        if k == 0 || d == 0 {
            return Err(MarError::InvalidArgument(format!(
                "component matrix must be non-empty, got {k}x{d}"
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MarError::InvalidArgument(
                "component matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(MarError::InvalidArgument("no rows given".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(MarError::ShapeMismatch("rows have unequal lengths".into()));
        }
        let mut data = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                data[[i, j]] = x;
            }
        }
        Self::new(data)
    }

    /// Number of components (rows).
    pub fn k(&self) -> usize {
        self.data.nrows()
    }

    /// Ambient dimension (columns).
    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// True when every row norm is within [`UNIT_TOL`] of 1.
    pub fn has_unit_rows(&self) -> bool {
        (0..self.k()).all(|i| {
            let n = row_norm(&self.data, i);
            (n - 1.0).abs() <= UNIT_TOL
        })
    }

    pub(crate) fn require_unit_rows(&self) -> Result<()> {
        for i in 0..self.k() {
            let n = row_norm(&self.data, i);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(MarError::InvalidArgument(format!(
                    "row {i} has norm {n:.17e}, expected unit norm"
                )));
            }
        }
        Ok(())
    }
}

/// Orthogonal decomposition of row `i` against the span of the remaining rows:
/// `a_i = parallel_part + residual_norm * residual_dir`, with `residual_dir`
/// a unit vector orthogonal to every other row and `residual_dir . a_i > 0`.
#[derive(Debug, Clone)]
pub struct OrthDecomposition {
    pub parallel_part: Array1<f64>,
    pub residual_norm: f64,
    pub residual_dir: Array1<f64>,
}

fn row_norm(m: &Array2<f64>, i: usize) -> f64 {
    m.row(i).dot(&m.row(i)).sqrt()
}

fn check_vector(name: &str, v: ArrayView1<'_, f64>) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MarError::InvalidArgument(format!(
            "{name} contains non-finite entries"
        )));
    }
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return Err(MarError::InvalidArgument(format!("{name} has zero norm")));
    }
    Ok(n)
}

/// Non-obtuse angle between two vectors: `arccos(|x.y| / (|x||y|))`, in
/// `[0, pi/2]`. Insensitive to scaling and to negation of either argument.
pub fn non_obtuse_angle(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MarError::ShapeMismatch(format!(
            "angle between vectors of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nx = check_vector("first vector", x)?;
    let ny = check_vector("second vector", y)?;
    // Clamp absorbs rounding that would push the cosine outside [0, 1].
    let c = (x.dot(&y).abs() / (nx * ny)).clamp(0.0, 1.0);
    Ok(c.acos())
}

/// Orientation-sensitive angle between two vectors, in `[0, pi]`.
pub fn vector_angle(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MarError::ShapeMismatch(format!(
            "angle between vectors of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nx = check_vector("first vector", x)?;
    let ny = check_vector("second vector", y)?;
    let c = (x.dot(&y) / (nx * ny)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// The `K x K` Gram matrix of row inner products. Symmetric by construction.
pub fn row_gram(a: &ComponentMatrix) -> Array2<f64> {
    let k = a.k();
    let mut g = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let v = a.row(i).dot(&a.row(j));
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

fn to_dmatrix(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Determinant of a symmetric positive semidefinite matrix via Cholesky, with
/// an LU fallback. Values driven negative by rounding (or by a Cholesky
/// failure on a dependent set) are reported as 0.
pub(crate) fn psd_det(g: &Array2<f64>) -> f64 {
    let m = to_dmatrix(g);
    let det = match m.clone().cholesky() {
        Some(chol) => {
            let diag = chol.l_dirty().diagonal();
            let mut d = 1.0;
            for x in diag.iter() {
                d *= x * x;
            }
            d
        }
        None => m.lu().determinant(),
    };
    if det < 0.0 {
        0.0
    } else {
        det
    }
}

/// Determinant of the row Gram matrix of `a`. In `[0, 1]` for unit-norm rows;
/// 0 when the rows are linearly dependent (within numerical tolerance).
pub fn gram_det(a: &ComponentMatrix) -> f64 {
    psd_det(&row_gram(a))
}

/// Solves `G x = rhs` for a symmetric positive definite `G` (one column per
/// right-hand side). Fails when `G` is not positive definite.
pub(crate) fn solve_spd(g: &Array2<f64>, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    let gm = to_dmatrix(g);
    let rm = to_dmatrix(rhs);
    let chol = gm
        .cholesky()
        .ok_or_else(|| MarError::DependentRows("Gram matrix is not positive definite".into()))?;
    let sol = chol.solve(&rm);
    let mut out = Array2::zeros((rhs.nrows(), rhs.ncols()));
    for i in 0..rhs.nrows() {
        for j in 0..rhs.ncols() {
            out[[i, j]] = sol[(i, j)];
        }
    }
    Ok(out)
}

/// Divides each row by its Euclidean norm. Idempotent up to rounding.
pub fn project_rows_unit(a: &ComponentMatrix) -> Result<ComponentMatrix> {
    let mut data = a.data().clone();
    for i in 0..a.k() {
        let n = row_norm(&data, i);
        if n <= UNIT_TOL {
            return Err(MarError::DegenerateRow { index: i, norm: n });
        }
        let mut row = data.row_mut(i);
        row.mapv_inplace(|x| x / n);
    }
    ComponentMatrix::new(data)
}

/// Decomposes row `i` into its least-squares projection onto the span of the
/// remaining rows plus an orthogonal residual.
pub fn orth_decompose(a: &ComponentMatrix, i: usize) -> Result<OrthDecomposition> {
    let k = a.k();
    let d = a.d();
    if i >= k {
        return Err(MarError::InvalidArgument(format!(
            "row index {i} out of range for {k} rows"
        )));
    }
    let ai = a.row(i).to_owned();
    let parallel_part = if k == 1 {
        Array1::zeros(d)
    } else {
        // Normal equations over the remaining rows: (B B^T) alpha = B a_i.
        let mut others = Array2::zeros((k - 1, d));
        let mut r = 0;
        for j in 0..k {
            if j != i {
                others.row_mut(r).assign(&a.row(j));
                r += 1;
            }
        }
        let others = ComponentMatrix::new(others)?;
        let g = row_gram(&others);
        let mut b = Array2::zeros((k - 1, 1));
        for j in 0..k - 1 {
            b[[j, 0]] = others.row(j).dot(&ai);
        }
        let alpha = solve_spd(&g, &b)
            .map_err(|_| MarError::DependentRows("rows other than the decomposed one".into()))?;
        let mut x = Array1::zeros(d);
        for j in 0..k - 1 {
            x.scaled_add(alpha[[j, 0]], &others.row(j));
        }
        x
    };
    let residual = &ai - &parallel_part;
    let l = residual.dot(&residual).sqrt();
    if l < DEPENDENCE_TOL {
        return Err(MarError::DependentRows(format!(
            "row {i} lies in the span of the remaining rows (residual {l:.3e})"
        )));
    }
    Ok(OrthDecomposition {
        parallel_part,
        residual_norm: l,
        residual_dir: residual.mapv(|x| x / l),
    })
}
