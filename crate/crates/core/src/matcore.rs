//! Dense symmetric-matrix algebra used by the LMI builders and the certificate checks.
//!
//! Matrices here are small (a few dozen rows at most), so every routine is dense
//! and O(s³). Symmetric eigenvalues come from nalgebra's tridiagonal QR
//! (`SymmetricEigen`); general eigenvalues come from its real Schur form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative asymmetry above which construction refuses the input.
pub const ASYMMETRY_ALARM: f64 = 1e-12;

/// Condition-number cap for the pivot block of a Schur complement.
pub const SCHUR_CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix side must be at least 1")]
    Empty,
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("block ({row},{col}) has shape {got_rows}x{got_cols}, layout expects {want_rows}x{want_cols}")]
    BlockShape {
        row: usize,
        col: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("block grid is not symmetric at ({row},{col})")]
    AsymmetricGrid { row: usize, col: usize },
    #[error("block grid has {got} rows/cols, layout declares {want}")]
    GridSize { got: usize, want: usize },
    #[error("layout rows and columns differ; symmetric assembly needs equal partitions")]
    LayoutMismatch,
    #[error("split {split} is outside 1..{side}")]
    BadSplit { split: usize, side: usize },
    #[error("pivot block is singular or ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
}

/// Dense symmetric matrix; symmetry is exact after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
}

impl SymMatrix {
    /// Accepts a numerically symmetric matrix and averages it with its transpose.
    ///
    /// Rejects inputs whose asymmetry exceeds [`ASYMMETRY_ALARM`] relative to the
    /// largest entry.
    pub fn new(m: DMatrix<f64>) -> Result<Self, MatError> {
        check_square(&m)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MatError::NonFinite);
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax() / scale;
        if asym > ASYMMETRY_ALARM {
            return Err(MatError::Asymmetric(asym));
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages `(m + mᵀ)/2` without the asymmetry alarm. Used for computed
    /// products whose asymmetry is pure round-off.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square() && m.nrows() > 0, "symmetrize needs a non-empty square matrix");
        let entries = (&m + m.transpose()) * 0.5;
        Self { entries }
    }

    pub fn identity(side: usize) -> Self {
        Self::symmetrize(DMatrix::identity(side, side))
    }

    pub fn zeros(side: usize) -> Self {
        Self::symmetrize(DMatrix::zeros(side, side))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::symmetrize(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn side(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        Self::symmetrize(&self.entries + &other.entries)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        Self::symmetrize(&self.entries * c)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &SymMatrix) -> SymMatrix {
        Self::symmetrize(&self.entries + &other.entries * c)
    }

    pub fn eigen(&self) -> EigenReport {
        symmetric_eigen(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigen(self).min_eig
    }

    /// Principal square root of a positive semidefinite matrix.
    pub fn sqrt_psd(&self, margin: f64) -> Result<SymMatrix, MatError> {
        let eig = SymmetricEigen::new(self.entries.clone());
        let min = eig.eigenvalues.min();
        if min <= margin {
            return Err(MatError::NotPositiveDefinite(min));
        }
        let root = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.sqrt()));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
        Ok(Self::symmetrize(m))
    }

    /// Inverse through the eigendecomposition; refuses condition numbers above `cap`.
    pub fn inverse(&self, cap: f64) -> Result<SymMatrix, MatError> {
        let eig = SymmetricEigen::new(self.entries.clone());
        let cond = condition_from_eigs(eig.eigenvalues.as_slice());
        if !(cond <= cap) {
            return Err(MatError::IllConditioned(cond));
        }
        let inv = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| 1.0 / v));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        Ok(Self::symmetrize(m))
    }

    /// `vᵀ S v`
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.entries * v))
    }
}

impl From<SymMatrix> for DMatrix<f64> {
    fn from(s: SymMatrix) -> Self {
        s.entries
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<(), MatError> {
    if !m.is_square() {
        return Err(MatError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(MatError::Empty);
    }
    Ok(())
}

/// Row/column partition of a block matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub row_sizes: Vec<usize>,
    pub col_sizes: Vec<usize>,
}

impl BlockLayout {
    pub fn symmetric(sizes: &[usize]) -> Self {
        Self { row_sizes: sizes.to_vec(), col_sizes: sizes.to_vec() }
    }

    pub fn side(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    /// Offset of block row `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.row_sizes[..i].iter().sum()
    }
}

/// One cell of a block grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Zero,
    Dense(DMatrix<f64>),
}

impl Block {
    pub fn is_zero(&self) -> bool {
        matches!(self, Block::Zero)
    }
}

/// Places blocks onto a symmetric grid and returns the dense matrix.
///
/// Zero sizes in the layout are allowed (empty partitions), but the total side
/// must be positive.
pub fn assemble_blocks(layout: &BlockLayout, blocks: &[Vec<Block>]) -> Result<SymMatrix, MatError> {
    if layout.row_sizes != layout.col_sizes {
        return Err(MatError::LayoutMismatch);
    }
    let k = layout.row_sizes.len();
    if blocks.len() != k {
        return Err(MatError::GridSize { got: blocks.len(), want: k });
    }
    let side = layout.side();
    if side == 0 {
        return Err(MatError::Empty);
    }
    let mut out = DMatrix::<f64>::zeros(side, side);
    for (i, row) in blocks.iter().enumerate() {
        if row.len() != k {
            return Err(MatError::GridSize { got: row.len(), want: k });
        }
        let (ri, ro) = (layout.row_sizes[i], layout.offset(i));
        for (j, blk) in row.iter().enumerate() {
            let (cj, co) = (layout.col_sizes[j], layout.offset(j));
            if let Block::Dense(b) = blk {
                if b.nrows() != ri || b.ncols() != cj {
                    return Err(MatError::BlockShape {
                        row: i,
                        col: j,
                        got_rows: b.nrows(),
                        got_cols: b.ncols(),
                        want_rows: ri,
                        want_cols: cj,
                    });
                }
                out.view_mut((ro, co), (ri, cj)).copy_from(b);
            }
        }
    }
    // Grid symmetry: block(j,i) must equal block(i,j)ᵀ.
    for i in 0..k {
        for j in (i + 1)..k {
            let upper = &blocks[i][j];
            let lower = &blocks[j][i];
            let ok = match (upper, lower) {
                (Block::Zero, Block::Zero) => true,
                (Block::Dense(u), Block::Zero) | (Block::Zero, Block::Dense(u)) => u.amax() == 0.0,
                (Block::Dense(u), Block::Dense(l)) => {
                    let scale = u.amax().max(1.0);
                    (u - l.transpose()).amax() <= ASYMMETRY_ALARM * scale
                }
            };
            if !ok {
                return Err(MatError::AsymmetricGrid { row: i, col: j });
            }
        }
    }
    for (i, row) in blocks.iter().enumerate() {
        if let Block::Dense(b) = &row[i] {
            let scale = b.amax().max(1.0);
            if (b - b.transpose()).amax() > ASYMMETRY_ALARM * scale {
                return Err(MatError::AsymmetricGrid { row: i, col: i });
            }
        }
    }
    Ok(SymMatrix::symmetrize(out))
}

/// Eigenvalue summary of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Sorted ascending for symmetric input; sorted moduli for general input.
    pub eigenvalues: Vec<f64>,
    pub min_eig: f64,
    pub spectral_radius: f64,
}

pub fn symmetric_eigen(s: &SymMatrix) -> EigenReport {
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(s.entries.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let min_eig = eigenvalues[0];
    let spectral_radius = eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    EigenReport { eigenvalues, min_eig, spectral_radius }
}

/// Eigenvalue moduli of a general square matrix.
pub fn general_eigen(a: &DMatrix<f64>) -> Result<EigenReport, MatError> {
    check_square(a)?;
    let eigs = a.clone().complex_eigenvalues();
    let mut moduli: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    let real_min = eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let spectral_radius = *moduli.last().unwrap_or(&0.0);
    Ok(EigenReport { eigenvalues: moduli, min_eig: real_min, spectral_radius })
}

/// True iff the smallest eigenvalue is at least `-tol`.
pub fn is_psd(s: &SymMatrix, tol: f64) -> bool {
    s.min_eigenvalue() >= -tol
}

/// Largest eigenvalue modulus of a square matrix.
///
/// # Panics
/// Panics on non-square input.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    general_eigen(a).expect("spectral_radius needs a square matrix").spectral_radius
}

/// Ratio of largest to smallest eigenvalue modulus (infinite when singular).
pub fn condition_from_eigs(eigs: &[f64]) -> f64 {
    let max = eigs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eigs.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// 2-norm condition number of a general square matrix, via singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Schur complement `S11 − S12·S22⁻¹·S12ᵀ` of the trailing block starting at `split`.
pub fn schur_complement(s: &SymMatrix, split: usize) -> Result<SymMatrix, MatError> {
    let side = s.side();
    if split == 0 || split >= side {
        return Err(MatError::BadSplit { split, side });
    }
    let m = s.as_matrix();
    let s11 = m.view((0, 0), (split, split)).into_owned();
    let s12 = m.view((0, split), (split, side - split)).into_owned();
    let s22 = SymMatrix::symmetrize(m.view((split, split), (side - split, side - split)).into_owned());
    let inv = s22.inverse(SCHUR_CONDITION_CAP)?;
    let out = s11 - &s12 * inv.as_matrix() * s12.transpose();
    Ok(SymMatrix::symmetrize(out))
}

/// Moore–Penrose pseudoinverse with relative singular-value cutoff
/// `σ_max · max(rows, cols) · rel_tol`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * (r.max(c) as f64) * rel_tol;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cutoff && sv > 0.0 {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / sv;
        }
    }
    out
}

/// Numerical rank with the same cutoff rule as [`pseudo_inverse`].
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    let cutoff = max * (r.max(c) as f64) * rel_tol;
    sv.iter().filter(|&&v| v > cutoff).count()
}

/// Orthonormal basis (as columns) of `{v : vᵀ a = 0}`, using the same cutoff
/// rule as [`numerical_rank`].
pub fn left_null_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 {
        return DMatrix::zeros(0, 0);
    }
    if cols == 0 {
        return DMatrix::identity(rows, rows);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let max = svd.singular_values.max();
    let cutoff = max * (rows.max(cols) as f64) * rel_tol;
    let range: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| max > 0.0 && sv > cutoff)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    // Complement of the range through the projector I − U Uᵀ, whose eigenvalues
    // are 0 or 1 and therefore well separated.
    let mut proj = DMatrix::<f64>::identity(rows, rows);
    for c in &range {
        proj -= c * c.transpose();
    }
    let eig = SymmetricEigen::new((&proj + proj.transpose()) * 0.5);
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &lam)| lam > 0.5)
        .map(|(k, _)| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn assemble_scalar_grid() {
        let layout = BlockLayout::symmetric(&[1, 1]);
        let grid = vec![
            vec![Block::Dense(m(1, 1, &[2.0])), Block::Dense(m(1, 1, &[1.0]))],
            vec![Block::Dense(m(1, 1, &[1.0])), Block::Dense(m(1, 1, &[1.0]))],
        ];
        let s = assemble_blocks(&layout, &grid).unwrap();
        assert_eq!(s.as_matrix(), &m(2, 2, &[2.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn assemble_identity() {
        let s = assemble_blocks(&BlockLayout::symmetric(&[2]), &[vec![Block::Dense(DMatrix::identity(2, 2))]]).unwrap();
        assert_eq!(s, SymMatrix::identity(2));
    }

    #[test]
    fn assemble_off_diagonal_forces_symmetry() {
        let b = m(2, 1, &[3.0, 4.0]);
        let grid = vec![
            vec![Block::Zero, Block::Dense(b.clone())],
            vec![Block::Dense(b.transpose()), Block::Zero],
        ];
        let s = assemble_blocks(&BlockLayout::symmetric(&[2, 1]), &grid).unwrap();
        assert_eq!(s.get(0, 2), 3.0);
        assert_eq!(s.get(2, 0), 3.0);
        assert_eq!(s.get(1, 2), 4.0);
    }

    #[test]
    fn assemble_rejects_bad_shape_and_asymmetry() {
        let grid = vec![vec![Block::Dense(DMatrix::identity(3, 3))]];
        assert!(matches!(
            assemble_blocks(&BlockLayout::symmetric(&[2]), &grid),
            Err(MatError::BlockShape { .. })
        ));
        let grid = vec![
            vec![Block::Zero, Block::Dense(m(1, 1, &[1.0]))],
            vec![Block::Dense(m(1, 1, &[2.0])), Block::Zero],
        ];
        assert!(matches!(
            assemble_blocks(&BlockLayout::symmetric(&[1, 1]), &grid),
            Err(MatError::AsymmetricGrid { .. })
        ));
    }

    #[test]
    fn construction_rejects_asymmetric() {
        assert!(matches!(SymMatrix::new(m(2, 2, &[1.0, 0.5, 0.4, 1.0])), Err(MatError::Asymmetric(_))));
        assert!(SymMatrix::new(m(2, 2, &[1.0, 0.5, 0.5 + 1e-15, 1.0])).is_ok());
        assert!(matches!(SymMatrix::new(m(2, 3, &[0.0; 6])), Err(MatError::NotSquare { .. })));
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&SymMatrix::identity(3), 0.0));
        assert!(!is_psd(&SymMatrix::from_diagonal(&[1.0, -1.0]), 0.0));
        // eigenvalues (3 ± √5)/2, both positive
        let s = SymMatrix::new(m(2, 2, &[2.0, 1.0, 1.0, 1.0])).unwrap();
        let eig = s.eigen();
        assert!(close(eig.eigenvalues[0], (3.0 - 5f64.sqrt()) / 2.0, 1e-14));
        assert!(close(eig.eigenvalues[1], (3.0 + 5f64.sqrt()) / 2.0, 1e-14));
        assert!(is_psd(&s, 0.0));
    }

    #[test]
    fn schur_examples() {
        let s = SymMatrix::new(m(2, 2, &[2.0, 1.0, 1.0, 1.0])).unwrap();
        let c = schur_complement(&s, 1).unwrap();
        assert!(close(c.get(0, 0), 1.0, 1e-15));

        let a = m(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let mut bd = DMatrix::zeros(3, 3);
        bd.view_mut((0, 0), (2, 2)).copy_from(&a);
        bd[(2, 2)] = 5.0;
        let c = schur_complement(&SymMatrix::new(bd).unwrap(), 2).unwrap();
        assert_eq!(c.as_matrix(), &a);

        let s = SymMatrix::new(m(2, 2, &[4.0, 2.0, 2.0, 2.0])).unwrap();
        let c = schur_complement(&s, 1).unwrap();
        assert!(close(c.get(0, 0), 2.0, 1e-15));
        // eigenvalues of [[4,2],[2,2]] are 3 ± √5, both positive
        assert!(close(s.min_eigenvalue(), 3.0 - 5f64.sqrt(), 1e-14));
        assert_eq!(is_psd(&s, 0.0), is_psd(&c, 0.0));
    }

    #[test]
    fn schur_rejects_singular_pivot() {
        let s = SymMatrix::new(m(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(schur_complement(&s, 1), Err(MatError::IllConditioned(_))));
        assert!(matches!(schur_complement(&s, 0), Err(MatError::BadSplit { .. })));
    }

    #[test]
    fn spectral_radius_examples() {
        assert!(close(spectral_radius(&DMatrix::identity(2, 2)), 1.0, 1e-15));
        // complex pair: modulus √det
        let a1 = m(2, 2, &[1.0, 0.1, -0.510_684_3, 0.690_231_7]);
        let det: f64 = 0.690_231_7 + 0.051_068_43;
        assert!(close(spectral_radius(&a1), det.sqrt(), 1e-12));
        assert!(close(spectral_radius(&a1), 0.8610, 1e-3));
        // real pair: quadratic formula
        let a2 = m(2, 2, &[1.0, 0.1, -0.510_684_3, -0.299_768_3]);
        let (tr, det): (f64, f64) = (1.0 - 0.299_768_3, -0.299_768_3 + 0.051_068_43);
        let top = (tr + (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!(close(spectral_radius(&a2), top, 1e-12));
        assert!(close(spectral_radius(&a2), 0.9595, 1e-3));
    }

    #[test]
    fn rank_and_pinv() {
        let a = m(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&a, 1e-12), 1);
        let p = pseudo_inverse(&a, 1e-12);
        assert!((&a * &p * &a - &a).amax() < 1e-12);
        let null = left_null_basis(&a, 1e-12);
        assert_eq!(null.ncols(), 1);
        assert!((null.transpose() * &a).amax() < 1e-12);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 4), 1e-12), 0);
    }

    #[test]
    fn sqrt_and_inverse() {
        let s = SymMatrix::new(m(2, 2, &[4.0, 1.0, 1.0, 3.0])).unwrap();
        let r = s.sqrt_psd(0.0).unwrap();
        assert!((r.as_matrix() * r.as_matrix() - s.as_matrix()).amax() < 1e-13);
        let inv = s.inverse(1e12).unwrap();
        assert!((inv.as_matrix() * s.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-13);
        assert!(SymMatrix::from_diagonal(&[1.0, -1.0]).sqrt_psd(0.0).is_err());
    }
}
