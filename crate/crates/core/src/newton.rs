//! Dense linear algebra used by the Newton iterations: an equilibrated LU
//! factorization with a conditioning check, a regularized least-squares step
//! for rank-deficient systems, and a finite-difference Jacobian with column
//! grouping.

use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Columns whose perturbations can be evaluated in a single residual call,
/// and for every structurally nonzero row the column it sees from each group.
pub(crate) struct ColumnGroups {
    pub groups: Vec<Vec<usize>>,
    /// `(row, [column per group])`; rows not listed are not differenced.
    pub rows: Vec<(usize, Vec<Option<usize>>)>,
}

/// Pivot ratio below which a factorization is treated as singular.
const SINGULAR_RATIO: f64 = 1e-13;

/// `R J C` with `R`, `C` diagonal row/column scalings.
pub(crate) struct Factorization {
    lu: LU<f64, Dyn, Dyn>,
    row_scale: DVector<f64>,
    col_scale: DVector<f64>,
}

impl Factorization {
    /// Returns `None` when the matrix is (numerically) singular.
    pub fn new(mut j: DMatrix<f64>) -> Option<Self> {
        let (nr, nc) = j.shape();
        if nr != nc || j.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut row_scale = DVector::from_element(nr, 1.0);
        for r in 0..nr {
            let m = j.row(r).amax();
            if m == 0.0 {
                return None;
            }
            row_scale[r] = 1.0 / m;
            j.row_mut(r).scale_mut(1.0 / m);
        }
        let mut col_scale = DVector::from_element(nc, 1.0);
        for c in 0..nc {
            let m = j.column(c).amax();
            if m == 0.0 {
                return None;
            }
            col_scale[c] = 1.0 / m;
            j.column_mut(c).scale_mut(1.0 / m);
        }
        let lu = j.lu();
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        let (lo, hi) = (diag.min(), diag.max());
        if !(lo > SINGULAR_RATIO * hi) {
            return None;
        }
        Some(Self {
            lu,
            row_scale,
            col_scale,
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let scaled = rhs.component_mul(&self.row_scale);
        let y = self.lu.solve(&scaled)?;
        let x = y.component_mul(&self.col_scale);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Levenberg-Marquardt step `(JᵀJ + μ I) δ = -Jᵀ g` on the column-scaled
/// system; used when `J` is rank deficient.
pub(crate) fn least_squares_step(j: &DMatrix<f64>, g: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let nc = j.ncols();
    let mut col_scale = DVector::from_element(nc, 1.0);
    let mut js = j.clone();
    for c in 0..nc {
        let m = js.column(c).amax();
        if m > 0.0 {
            col_scale[c] = 1.0 / m;
            js.column_mut(c).scale_mut(1.0 / m);
        }
    }
    let mut normal = js.transpose() * &js;
    for i in 0..nc {
        normal[(i, i)] += mu;
    }
    let rhs = -(js.transpose() * g);
    let y = normal.cholesky()?.solve(&rhs);
    let x = y.component_mul(&col_scale);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Forward-difference Jacobian of `eval` at `u` for the rows listed in
/// `groups.rows`, writing into `out` (other entries untouched). `base` is
/// `eval(u)`; `h[j]` is the perturbation of column `j`.
pub(crate) fn grouped_fd_jacobian<F, E>(
    u: &DVector<f64>,
    base: &DVector<f64>,
    h: &[f64],
    groups: &ColumnGroups,
    mut eval: F,
    out: &mut DMatrix<f64>,
) -> Result<(), E>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let mut up = u.clone();
    for (g, cols) in groups.groups.iter().enumerate() {
        if cols.is_empty() {
            continue;
        }
        for &c in cols {
            up[c] = u[c] + h[c];
        }
        let perturbed = eval(&up)?;
        for &c in cols {
            up[c] = u[c];
        }
        for (row, row_cols) in &groups.rows {
            if let Some(c) = row_cols[g] {
                out[(*row, c)] = (perturbed[*row] - base[*row]) / h[c];
            }
        }
    }
    Ok(())
}
