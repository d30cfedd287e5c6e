//! Affine block LMIs for nominal, polytopic and Lur'e synthesis, plus the
//! stand-alone Finsler and ellipsoid-containment checks.
//!
//! Decision variables are `N = Nᵀ` (n×n), `L` (m×n) and the scalars `α, η, ε`.
//! Every block is stored as a constant matrix plus one coefficient matrix per
//! scalar coordinate that appears in it, so evaluation at any point is a sum of
//! scaled matrices and affinity holds by construction.
//!
//! Block shapes, with `Ψ = Q̂N + R̂L`, `Q̂ = [Q^½; 0]`, `R̂ = [0; R^½]`:
//!
//! * `ellip`: `[[1, x0ᵀ], [x0, N]]`
//! * `stab` (nominal/polytopic, rows `n, n, m, n, n+m`): `N − ηI` in the corner,
//!   `N`, `L` coupling rows 2–3 to row 4, `[[N, Ψᵀ], [Ψ, αI]]` at the bottom
//!   right, plus `ε·d dᵀ` with `d = [X₊; −X₋; −U₋; 0; 0]`.
//! * `stab` (Lur'e, rows `n, n, m, p, p, n, n+m`): as above with the sector rows
//!   `[[0, αI], [αI, αI]]` and `−½βHN` coupling, data `d = [X₊; −X₋; −U₋; −W₋; 0; 0; 0]`.
//! * `stab2`: `[[N, Ψᵀ], [Ψ, αI]]`, or `[[N, −½NHᵀβᵀ, Ψᵀ], [·, αI, 0], [·, 0, αI]]`.
//! * `con_i`: `[[1, d_i L + c_i N], [·, N]]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datalab::{DataError, Dataset};
use crate::matcore::{self, assemble_blocks, Block, BlockLayout, MatError, SymMatrix};

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weight {name} must be symmetric positive definite: {source}")]
    Weight { name: &'static str, source: MatError },
    #[error("invalid constraint: {0}")]
    Constraint(String),
    #[error("Lur'e problem needs W_minus in the dataset")]
    MissingW,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Quadratic cost weights and their stacked square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub q: SymMatrix,
    pub r: SymMatrix,
    /// `[Q^½; 0]`, (n+m)×n
    pub q_hat: DMatrix<f64>,
    /// `[0; R^½]`, (n+m)×m
    pub r_hat: DMatrix<f64>,
}

impl Weights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, LmiError> {
        let q = SymMatrix::new(q).map_err(|source| LmiError::Weight { name: "Q", source })?;
        let r = SymMatrix::new(r).map_err(|source| LmiError::Weight { name: "R", source })?;
        let q_half = q.sqrt_psd(1e-12).map_err(|source| LmiError::Weight { name: "Q", source })?;
        let r_half = r.sqrt_psd(1e-12).map_err(|source| LmiError::Weight { name: "R", source })?;
        let (n, m) = (q.side(), r.side());
        let mut q_hat = DMatrix::zeros(n + m, n);
        q_hat.rows_mut(0, n).copy_from(q_half.as_matrix());
        let mut r_hat = DMatrix::zeros(n + m, m);
        r_hat.rows_mut(n, m).copy_from(r_half.as_matrix());
        Ok(Self { q, r, q_hat, r_hat })
    }

    pub fn n(&self) -> usize {
        self.q.side()
    }

    pub fn m(&self) -> usize {
        self.r.side()
    }

    /// Same weights multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, LmiError> {
        Self::new(self.q.as_matrix() * c, self.r.as_matrix() * c)
    }

    /// `xᵀQx + uᵀRu`
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.q.quad_form(x) + self.r.quad_form(u)
    }
}

/// `Ψ = Q̂N + R̂L`
pub fn psi(n_mat: &DMatrix<f64>, l: &DMatrix<f64>, w: &Weights) -> DMatrix<f64> {
    &w.q_hat * n_mat + &w.r_hat * l
}

/// One row of `c_i x + d_i u ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRows {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintRows {
    pub fn empty(n: usize, m: usize) -> Self {
        Self { n, m, rows: vec![] }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn c(&self, i: usize) -> RowDVector<f64> {
        RowDVector::from_row_slice(&self.rows[i].c)
    }

    pub fn d(&self, i: usize) -> RowDVector<f64> {
        RowDVector::from_row_slice(&self.rows[i].d)
    }

    /// `c_i + d_i K`
    pub fn combined(&self, i: usize, k: &DMatrix<f64>) -> RowDVector<f64> {
        self.c(i) + self.d(i) * k
    }

    /// `1 − (c_i x + d_i u)` for every row.
    pub fn margins(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<f64> {
        (0..self.len()).map(|i| 1.0 - (self.c(i) * x)[0] - (self.d(i) * u)[0]).collect()
    }
}

/// Stacks state rows (n̄×n) over input rows (m̄×m), padding each with zeros.
pub fn make_constraint_rows(state_rows: &DMatrix<f64>, input_rows: &DMatrix<f64>) -> Result<ConstraintRows, LmiError> {
    let (n, m) = (state_rows.ncols(), input_rows.ncols());
    if state_rows.iter().chain(input_rows.iter()).any(|v| !v.is_finite()) {
        return Err(LmiError::Constraint("constraint rows must be finite".into()));
    }
    let mut rows = Vec::with_capacity(state_rows.nrows() + input_rows.nrows());
    for i in 0..state_rows.nrows() {
        rows.push(ConstraintRow { c: state_rows.row(i).iter().copied().collect(), d: vec![0.0; m] });
    }
    for i in 0..input_rows.nrows() {
        rows.push(ConstraintRow { c: vec![0.0; n], d: input_rows.row(i).iter().copied().collect() });
    }
    Ok(ConstraintRows { n, m, rows })
}

/// `lower ≤ v[index] ≤ upper`; both bounds finite and nonzero, origin strictly inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
}

impl BoxBound {
    pub fn symmetric(index: usize, half_width: f64) -> Self {
        Self { index, lower: -half_width, upper: half_width }
    }
}

fn box_faces(b: &BoxBound, dim: usize, what: &str) -> Result<[DVector<f64>; 2], LmiError> {
    if b.index >= dim {
        return Err(LmiError::Constraint(format!("{what} index {} out of range (dimension {dim})", b.index)));
    }
    if !(b.upper.is_finite() && b.lower.is_finite()) || b.upper == 0.0 || b.lower == 0.0 {
        return Err(LmiError::Constraint(format!("{what}[{}] bounds must be finite and nonzero to normalize to c·v <= 1", b.index)));
    }
    if !(b.lower < 0.0 && b.upper > 0.0) {
        return Err(LmiError::Constraint(format!("{what}[{}] box [{}, {}] must contain the origin strictly", b.index, b.lower, b.upper)));
    }
    let mut up = DVector::zeros(dim);
    up[b.index] = 1.0 / b.upper;
    let mut lo = DVector::zeros(dim);
    lo[b.index] = 1.0 / b.lower;
    Ok([up, lo])
}

/// Converts per-coordinate boxes into normalized rows (two faces per box).
pub fn box_constraint_rows(n: usize, m: usize, state: &[BoxBound], input: &[BoxBound]) -> Result<ConstraintRows, LmiError> {
    let mut srows = Vec::new();
    for b in state {
        srows.extend(box_faces(b, n, "x")?);
    }
    let mut irows = Vec::new();
    for b in input {
        irows.extend(box_faces(b, m, "u")?);
    }
    let to_mat = |rows: Vec<DVector<f64>>, dim: usize| {
        if rows.is_empty() {
            DMatrix::zeros(0, dim)
        } else {
            DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>())
        }
    };
    make_constraint_rows(&to_mat(srows, n), &to_mat(irows, m))
}

/// Problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nominal,
    Polytopic,
    Lure,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Polytopic => "polytopic",
            Mode::Lure => "lure",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nominal" => Ok(Mode::Nominal),
            "polytopic" => Ok(Mode::Polytopic),
            "lure" => Ok(Mode::Lure),
            other => Err(format!("unknown mode {other:?} (expected nominal, polytopic or lure)")),
        }
    }
}

/// A scalar decision coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    /// `N[i][j]` with `i <= j`; also sets `N[j][i]`.
    N(usize, usize),
    L(usize, usize),
    Alpha,
    Eta,
    Epsilon(usize),
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coord::N(i, j) => write!(f, "N[{i},{j}]"),
            Coord::L(i, j) => write!(f, "L[{i},{j}]"),
            Coord::Alpha => write!(f, "alpha"),
            Coord::Eta => write!(f, "eta"),
            Coord::Epsilon(0) => write!(f, "epsilon"),
            Coord::Epsilon(k) => write!(f, "epsilon[{k}]"),
        }
    }
}

/// Ordered list of scalar coordinates: N's upper triangle, L row-major, α, η, ε.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub n: usize,
    pub m: usize,
    pub coords: Vec<Coord>,
}

impl VarLayout {
    pub fn new(n: usize, m: usize, epsilons: usize) -> Self {
        let mut coords = Vec::new();
        for i in 0..n {
            for j in i..n {
                coords.push(Coord::N(i, j));
            }
        }
        for i in 0..m {
            for j in 0..n {
                coords.push(Coord::L(i, j));
            }
        }
        coords.push(Coord::Alpha);
        coords.push(Coord::Eta);
        coords.extend((0..epsilons.max(1)).map(Coord::Epsilon));
        Self { n, m, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn index_of(&self, c: Coord) -> Option<usize> {
        self.coords.iter().position(|&x| x == c)
    }

    pub fn alpha(&self) -> usize {
        self.n * (self.n + 1) / 2 + self.m * self.n
    }

    pub fn eta(&self) -> usize {
        self.alpha() + 1
    }

    pub fn epsilon(&self, k: usize) -> usize {
        self.alpha() + 2 + k
    }

    pub fn epsilon_count(&self) -> usize {
        self.len() - self.alpha() - 2
    }

    /// Indices of the coordinates that must stay strictly positive.
    pub fn positive_coords(&self) -> Vec<usize> {
        (self.alpha()..self.len()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.coords.iter().map(|c| c.to_string()).collect()
    }

    pub fn to_point(&self, y: &[f64]) -> DecisionPoint {
        assert_eq!(y.len(), self.len(), "coordinate vector length");
        let mut n_mat = DMatrix::zeros(self.n, self.n);
        let mut l = DMatrix::zeros(self.m, self.n);
        let mut point = DecisionPoint { n_mat: DMatrix::zeros(0, 0), l: DMatrix::zeros(0, 0), alpha: 0.0, eta: 0.0, epsilon: vec![] };
        for (c, &v) in self.coords.iter().zip(y) {
            match *c {
                Coord::N(i, j) => {
                    n_mat[(i, j)] = v;
                    n_mat[(j, i)] = v;
                }
                Coord::L(i, j) => l[(i, j)] = v,
                Coord::Alpha => point.alpha = v,
                Coord::Eta => point.eta = v,
                Coord::Epsilon(_) => point.epsilon.push(v),
            }
        }
        point.n_mat = n_mat;
        point.l = l;
        point
    }

    pub fn from_point(&self, p: &DecisionPoint) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| match *c {
                Coord::N(i, j) => 0.5 * (p.n_mat[(i, j)] + p.n_mat[(j, i)]),
                Coord::L(i, j) => p.l[(i, j)],
                Coord::Alpha => p.alpha,
                Coord::Eta => p.eta,
                Coord::Epsilon(k) => p.epsilon.get(k).or(p.epsilon.first()).copied().unwrap_or(0.0),
            })
            .collect()
    }
}

/// Values of the decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    #[serde(with = "mat_serde")]
    pub n_mat: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub l: DMatrix<f64>,
    pub alpha: f64,
    pub eta: f64,
    /// One entry when ε is shared, one per vertex otherwise.
    pub epsilon: Vec<f64>,
}

pub(crate) mod mat_serde {
    use crate::io::MatrixRecord;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixRecord::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rec = MatrixRecord::deserialize(d)?;
        rec.to_matrix("matrix").map_err(serde::de::Error::custom)
    }
}

/// Affine matrix expression `C + Σ y_k F_k`.
#[derive(Debug, Clone)]
struct Affine {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl Affine {
    fn constant(m: DMatrix<f64>) -> Self {
        Self { constant: m, terms: BTreeMap::new() }
    }

    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    fn var_n(layout: &VarLayout) -> Self {
        let n = layout.n;
        let mut e = Self::constant(DMatrix::zeros(n, n));
        for (k, c) in layout.coords.iter().enumerate() {
            if let Coord::N(i, j) = *c {
                let mut f = DMatrix::zeros(n, n);
                f[(i, j)] = 1.0;
                f[(j, i)] = 1.0;
                e.terms.insert(k, f);
            }
        }
        e
    }

    fn var_l(layout: &VarLayout) -> Self {
        let (m, n) = (layout.m, layout.n);
        let mut e = Self::constant(DMatrix::zeros(m, n));
        for (k, c) in layout.coords.iter().enumerate() {
            if let Coord::L(i, j) = *c {
                let mut f = DMatrix::zeros(m, n);
                f[(i, j)] = 1.0;
                e.terms.insert(k, f);
            }
        }
        e
    }

    /// `y_k · I_size`
    fn scalar_identity(k: usize, size: usize, coef: f64) -> Self {
        let mut e = Self::constant(DMatrix::zeros(size, size));
        e.terms.insert(k, DMatrix::identity(size, size) * coef);
        e
    }

    fn add(mut self, other: &Affine) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine shape mismatch");
        self.constant += &other.constant;
        for (k, f) in &other.terms {
            *self.terms.entry(*k).or_insert_with(|| DMatrix::zeros(f.nrows(), f.ncols())) += f;
        }
        self
    }

    fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        Self { constant: m * &self.constant, terms: self.terms.iter().map(|(k, f)| (*k, m * f)).collect() }
    }

    fn scale(&self, c: f64) -> Self {
        Self { constant: &self.constant * c, terms: self.terms.iter().map(|(k, f)| (*k, f * c)).collect() }
    }
}

/// A symmetric block constraint `constant + Σ y_k coeff_k ≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlock {
    pub name: String,
    pub sizes: Vec<usize>,
    pub constant: SymMatrix,
    /// Nonzero coefficients only, ordered by coordinate index.
    pub coeffs: Vec<(usize, SymMatrix)>,
    /// Written as `≻ 0`; the solver realizes it with a positive margin.
    pub strict: bool,
}

impl AffineBlock {
    pub fn side(&self) -> usize {
        self.constant.side()
    }

    pub fn coefficient(&self, k: usize) -> Option<&SymMatrix> {
        self.coeffs.iter().find(|(i, _)| *i == k).map(|(_, m)| m)
    }

    pub fn evaluate(&self, y: &[f64]) -> SymMatrix {
        let mut m = self.constant.as_matrix().clone();
        for (k, f) in &self.coeffs {
            m += f.as_matrix() * y[*k];
        }
        SymMatrix::symmetrize(m)
    }
}

/// Grid of affine cells; only cells with `i <= j` are set, the rest mirror.
struct GridBuilder {
    sizes: Vec<usize>,
    cells: BTreeMap<(usize, usize), Affine>,
}

impl GridBuilder {
    fn new(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), cells: BTreeMap::new() }
    }

    fn set(&mut self, i: usize, j: usize, e: Affine) {
        assert!(i <= j, "set upper-triangular cells only");
        assert_eq!(e.shape(), (self.sizes[i], self.sizes[j]), "cell ({i},{j}) shape");
        self.cells.insert((i, j), e);
    }

    fn assemble(&self, pick: impl Fn(&Affine) -> Option<DMatrix<f64>>) -> Result<SymMatrix, MatError> {
        let k = self.sizes.len();
        let mut grid = vec![vec![Block::Zero; k]; k];
        for (&(i, j), e) in &self.cells {
            if let Some(m) = pick(e) {
                grid[j][i] = Block::Dense(m.transpose());
                grid[i][j] = Block::Dense(m);
            }
        }
        assemble_blocks(&BlockLayout::symmetric(&self.sizes), &grid)
    }

    fn finish(self, name: &str, data: Option<(usize, &DMatrix<f64>)>) -> Result<AffineBlock, LmiError> {
        let constant = self.assemble(|e| Some(e.constant.clone()))?;
        let mut keys: Vec<usize> = self.cells.values().flat_map(|e| e.terms.keys().copied()).collect();
        if let Some((k, _)) = data {
            keys.push(k);
        }
        keys.sort_unstable();
        keys.dedup();
        let side = constant.side();
        let mut coeffs = Vec::new();
        for k in keys {
            let mut m = self.assemble(|e| e.terms.get(&k).cloned())?.into_matrix();
            if let Some((dk, stack)) = data {
                if dk == k {
                    let outer = stack * stack.transpose();
                    let r = outer.nrows();
                    assert!(r <= side, "data stack taller than block");
                    let mut view = m.view_mut((0, 0), (r, r));
                    view += &outer;
                }
            }
            let sym = SymMatrix::symmetrize(m);
            if sym.as_matrix().amax() > 0.0 {
                coeffs.push((k, sym));
            }
        }
        Ok(AffineBlock { name: name.to_string(), sizes: self.sizes, constant, coeffs, strict: true })
    }
}

/// Problem dimensions recorded for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Experiment length per dataset.
    pub t: Vec<usize>,
    pub r: usize,
    pub zeta: usize,
}

/// `min α` subject to every block `≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub layout: VarLayout,
    pub blocks: Vec<AffineBlock>,
    pub mode: Mode,
    pub dims: Dims,
}

impl LmiProblem {
    pub fn num_coords(&self) -> usize {
        self.layout.len()
    }

    /// Objective coordinate (α).
    pub fn objective(&self) -> usize {
        self.layout.alpha()
    }

    pub fn block(&self, name: &str) -> Option<&AffineBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_sides(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.side()).collect()
    }

    pub fn evaluate(&self, y: &[f64]) -> Vec<(String, SymMatrix)> {
        self.blocks.iter().map(|b| (b.name.clone(), b.evaluate(y))).collect()
    }

    pub fn evaluate_point(&self, p: &DecisionPoint) -> Vec<(String, SymMatrix)> {
        self.evaluate(&self.layout.from_point(p))
    }

    /// Stable textual listing of every block: name, side, constant matrix and
    /// the nonzero coefficient matrices keyed by coordinate name.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let d = &self.dims;
        let _ = writeln!(out, "lmi-problem mode={} n={} m={} p={} r={} zeta={} T={:?}", self.mode.as_str(), d.n, d.m, d.p, d.r, d.zeta, d.t);
        let _ = writeln!(out, "coords {}: {}", self.layout.len(), self.layout.names().join(" "));
        let _ = writeln!(out, "objective: {}", self.layout.coords[self.objective()]);
        for b in &self.blocks {
            let _ = writeln!(out, "block {} side={} partition={:?}{}", b.name, b.side(), b.sizes, if b.strict { " strict" } else { "" });
            let _ = writeln!(out, "  CONST");
            write_matrix(&mut out, b.constant.as_matrix());
            for (k, f) in &b.coeffs {
                let _ = writeln!(out, "  {}", self.layout.coords[*k]);
                write_matrix(&mut out, f.as_matrix());
            }
        }
        out
    }
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)] + 0.0)).collect();
        let _ = writeln!(out, "    {}", row.join(" "));
    }
}

/// Pieces shared by every mode: variables, Ψ and the non-data blocks.
struct Common {
    layout: VarLayout,
    n_var: Affine,
    l_var: Affine,
    psi: Affine,
}

impl Common {
    fn new(n: usize, m: usize, epsilons: usize, weights: &Weights) -> Self {
        let layout = VarLayout::new(n, m, epsilons);
        let n_var = Affine::var_n(&layout);
        let l_var = Affine::var_l(&layout);
        let psi = n_var.left_mul(&weights.q_hat).add(&l_var.left_mul(&weights.r_hat));
        Self { layout, n_var, l_var, psi }
    }

    fn alpha_i(&self, size: usize) -> Affine {
        Affine::scalar_identity(self.layout.alpha(), size, 1.0)
    }

    fn ellip(&self, x0: &DVector<f64>) -> Result<AffineBlock, LmiError> {
        let n = self.layout.n;
        let mut g = GridBuilder::new(&[1, n]);
        g.set(0, 0, Affine::constant(DMatrix::from_element(1, 1, 1.0)));
        g.set(0, 1, Affine::constant(DMatrix::from_row_slice(1, x0.len(), x0.as_slice())));
        g.set(1, 1, self.n_var.clone());
        g.finish("ellip", None)
    }

    fn stab2_nominal(&self) -> Result<AffineBlock, LmiError> {
        let (n, m) = (self.layout.n, self.layout.m);
        let mut g = GridBuilder::new(&[n, n + m]);
        g.set(0, 0, self.n_var.clone());
        g.set(0, 1, transpose(&self.psi));
        g.set(1, 1, self.alpha_i(n + m));
        g.finish("stab2", None)
    }

    /// Top corner `N − ηI`.
    fn corner(&self) -> Affine {
        self.n_var.clone().add(&Affine::scalar_identity(self.layout.eta(), self.layout.n, -1.0))
    }

    fn constraint_blocks(&self, rows: &ConstraintRows) -> Result<Vec<AffineBlock>, LmiError> {
        let n = self.layout.n;
        (0..rows.len())
            .map(|i| {
                let row = self.l_var.left_mul(&DMatrix::from_row_slice(1, rows.m, &rows.rows[i].d)).add(
                    &self.n_var.left_mul(&DMatrix::from_row_slice(1, rows.n, &rows.rows[i].c)),
                );
                let mut g = GridBuilder::new(&[1, n]);
                g.set(0, 0, Affine::constant(DMatrix::from_element(1, 1, 1.0)));
                g.set(0, 1, row);
                g.set(1, 1, self.n_var.clone());
                g.finish(&format!("con_{}", i + 1), None)
            })
            .collect()
    }

    fn stab_nominal(&self, name: &str, data: &DMatrix<f64>, eps_k: usize) -> Result<AffineBlock, LmiError> {
        let (n, m) = (self.layout.n, self.layout.m);
        let mut g = GridBuilder::new(&[n, n, m, n, n + m]);
        g.set(0, 0, self.corner());
        g.set(1, 3, self.n_var.clone());
        g.set(2, 3, self.l_var.clone());
        g.set(3, 3, self.n_var.clone());
        g.set(3, 4, transpose(&self.psi));
        g.set(4, 4, self.alpha_i(n + m));
        g.finish(name, Some((self.layout.epsilon(eps_k), data)))
    }
}

fn transpose(e: &Affine) -> Affine {
    Affine { constant: e.constant.transpose(), terms: e.terms.iter().map(|(k, f)| (*k, f.transpose())).collect() }
}

fn check_dims(d: &Dataset, w: &Weights, rows: &ConstraintRows, x0: &DVector<f64>) -> Result<(), LmiError> {
    let (n, m) = (d.n(), d.m());
    if w.n() != n || w.m() != m {
        return Err(LmiError::Dimension(format!("weights are for (n, m) = ({}, {}), data have ({n}, {m})", w.n(), w.m())));
    }
    if rows.n != n || rows.m != m || rows.rows.iter().any(|r| r.c.len() != n || r.d.len() != m) {
        return Err(LmiError::Dimension(format!("constraint rows do not match (n, m) = ({n}, {m})")));
    }
    if x0.len() != n {
        return Err(LmiError::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if d.t() == 0 {
        return Err(LmiError::Data(DataError::Empty(0)));
    }
    Ok(())
}

/// Nominal problem: data-driven stabilization plus cost bound and constraints.
pub fn build_nominal(d: &Dataset, w: &Weights, rows: &ConstraintRows, x0: &DVector<f64>) -> Result<LmiProblem, LmiError> {
    let mut p = build_polytopic(std::slice::from_ref(d), w, rows, x0, false)?;
    p.mode = Mode::Nominal;
    Ok(p)
}

/// Polytopic problem: one data-driven stability block per vertex dataset, all
/// sharing the decision variables. With `per_vertex_epsilon` each block gets
/// its own ε.
pub fn build_polytopic(
    datasets: &[Dataset],
    w: &Weights,
    rows: &ConstraintRows,
    x0: &DVector<f64>,
    per_vertex_epsilon: bool,
) -> Result<LmiProblem, LmiError> {
    let first = datasets.first().ok_or_else(|| LmiError::Dimension("at least one vertex dataset is required".into()))?;
    let (n, m) = (first.n(), first.m());
    for (j, d) in datasets.iter().enumerate() {
        if d.n() != n || d.m() != m {
            return Err(LmiError::Dimension(format!("vertex dataset {j} has (n, m) = ({}, {}), expected ({n}, {m})", d.n(), d.m())));
        }
        check_dims(d, w, rows, x0)?;
    }
    let zeta = datasets.len();
    let eps_count = if per_vertex_epsilon { zeta } else { 1 };
    let c = Common::new(n, m, eps_count, w);
    let mut blocks = vec![c.ellip(x0)?];
    for (j, d) in datasets.iter().enumerate() {
        let name = if zeta == 1 { "stab".to_string() } else { format!("stab_{}", j + 1) };
        let eps_k = if per_vertex_epsilon { j } else { 0 };
        blocks.push(c.stab_nominal(&name, &d.data_stack(false)?, eps_k)?);
    }
    blocks.push(c.stab2_nominal()?);
    blocks.extend(c.constraint_blocks(rows)?);
    Ok(LmiProblem {
        layout: c.layout,
        blocks,
        mode: Mode::Polytopic,
        dims: Dims { n, m, p: 0, t: datasets.iter().map(Dataset::t).collect(), r: rows.len(), zeta },
    })
}

/// Lur'e problem with the sector multiplier rows.
pub fn build_lure(
    d: &Dataset,
    w: &Weights,
    rows: &ConstraintRows,
    x0: &DVector<f64>,
    h: &DMatrix<f64>,
    beta: &DMatrix<f64>,
) -> Result<LmiProblem, LmiError> {
    check_dims(d, w, rows, x0)?;
    let wm = d.w_minus.as_ref().ok_or(LmiError::MissingW)?;
    let (n, m, p) = (d.n(), d.m(), wm.nrows());
    if h.shape() != (p, n) {
        return Err(LmiError::Dimension(format!("H is {:?}, expected ({p}, {n})", h.shape())));
    }
    if beta.shape() != (p, p) {
        return Err(LmiError::Dimension(format!("beta is {:?}, expected ({p}, {p})", beta.shape())));
    }
    let c = Common::new(n, m, 1, w);
    // −½βHN, p×n
    let sector = c.n_var.left_mul(&(beta * h)).scale(-0.5);

    let mut g = GridBuilder::new(&[n, n, m, p, p, n, n + m]);
    g.set(0, 0, c.corner());
    g.set(1, 5, c.n_var.clone());
    g.set(2, 5, c.l_var.clone());
    g.set(3, 4, c.alpha_i(p));
    g.set(4, 4, c.alpha_i(p));
    g.set(4, 5, sector.clone());
    g.set(5, 5, c.n_var.clone());
    g.set(5, 6, transpose(&c.psi));
    g.set(6, 6, c.alpha_i(n + m));
    let stab = g.finish("stab", Some((c.layout.epsilon(0), &d.data_stack(true)?)))?;

    let mut g = GridBuilder::new(&[n, p, n + m]);
    g.set(0, 0, c.n_var.clone());
    g.set(0, 1, transpose(&sector));
    g.set(0, 2, transpose(&c.psi));
    g.set(1, 1, c.alpha_i(p));
    g.set(2, 2, c.alpha_i(n + m));
    let stab2 = g.finish("stab2", None)?;

    let mut blocks = vec![c.ellip(x0)?, stab, stab2];
    blocks.extend(c.constraint_blocks(rows)?);
    Ok(LmiProblem { layout: c.layout, blocks, mode: Mode::Lure, dims: Dims { n, m, p, t: vec![d.t()], r: rows.len(), zeta: 1 } })
}

/// Pair `(M, Ξ)` of equal side with the row split `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinslerPair {
    pub m: SymMatrix,
    pub xi: SymMatrix,
    pub split: usize,
}

impl FinslerPair {
    pub fn new(m: SymMatrix, xi: SymMatrix, split: usize) -> Result<Self, LmiError> {
        if m.side() != xi.side() || split == 0 || split > m.side() {
            return Err(LmiError::Dimension(format!("M side {}, Ξ side {}, split {split}", m.side(), xi.side())));
        }
        Ok(Self { m, xi, split })
    }

    /// `[I; Z]ᵀ S [I; Z]` for a (side−k)×k matrix `Z`.
    pub fn restrict(s: &SymMatrix, split: usize, z: &DMatrix<f64>) -> SymMatrix {
        let side = s.side();
        let mut basis = DMatrix::zeros(side, split);
        basis.view_mut((0, 0), (split, split)).fill_with_identity();
        basis.view_mut((split, 0), (side - split, split)).copy_from(z);
        SymMatrix::symmetrize(basis.transpose() * s.as_matrix() * basis)
    }
}

/// True iff `M − εΞ ⪰ 0` (within `tol`), which certifies `[I;Z]ᵀM[I;Z] ⪰ 0`
/// on the data variety `[I;Z]ᵀΞ[I;Z] = 0`.
pub fn finsler_check(fp: &FinslerPair, epsilon: f64, tol: f64) -> bool {
    matcore::is_psd(&fp.m.axpy(-epsilon, &fp.xi), tol)
}

/// Per-row ellipsoid containment margins `1 − w_i αP⁻¹ w_iᵀ`, `w_i = c_i + d_i K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    pub margins: Vec<f64>,
    pub contained: Vec<bool>,
    pub all: bool,
}

pub fn ellipsoid_contained(p: &SymMatrix, alpha: f64, rows: &ConstraintRows, k: &DMatrix<f64>, tol: f64) -> Result<Containment, LmiError> {
    let n = p.side();
    if rows.n != n || k.shape() != (rows.m, n) {
        return Err(LmiError::Dimension(format!("P is {n}x{n}, K is {:?}, rows are for ({}, {})", k.shape(), rows.n, rows.m)));
    }
    let min = p.min_eigenvalue();
    if min <= 0.0 {
        return Err(LmiError::Mat(MatError::NotPositiveDefinite(min)));
    }
    let p_inv = p.inverse(f64::INFINITY)?;
    let margins: Vec<f64> = (0..rows.len())
        .map(|i| {
            let wi = rows.combined(i, k);
            1.0 - alpha * (&wi * p_inv.as_matrix() * wi.transpose())[0]
        })
        .collect();
    let contained: Vec<bool> = margins.iter().map(|&mg| mg >= -tol).collect();
    let all = contained.iter().all(|&c| c);
    Ok(Containment { margins, contained, all })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_dataset(x: &[f64], u: &[f64]) -> Dataset {
        Dataset::new(DMatrix::from_row_slice(1, u.len(), u), DMatrix::from_row_slice(1, x.len(), x), None).unwrap()
    }

    fn two_state_dataset(t: usize) -> Dataset {
        use crate::datalab::{run_experiment, uniform_inputs};
        use crate::plants::{LtiPlant, Plant};
        let plant = Plant::Lti(LtiPlant::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.99]), DMatrix::from_row_slice(2, 1, &[0.0, 0.787])).unwrap());
        run_experiment(&plant, &DVector::from_row_slice(&[0.95, 0.0]), &uniform_inputs(&[1.0], t, 5), false).unwrap()
    }

    #[test]
    fn weights_roots() {
        let w = Weights::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), DMatrix::from_element(1, 1, 0.01)).unwrap();
        assert!((w.q_hat.transpose() * &w.q_hat - w.q.as_matrix()).amax() < 1e-10);
        assert!((w.r_hat.transpose() * &w.r_hat - w.r.as_matrix()).amax() < 1e-10);
        assert_eq!((w.q_hat.transpose() * &w.r_hat).amax(), 0.0);
        assert!(Weights::new(DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    #[test]
    fn psi_examples() {
        let w = Weights::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 7.0)).unwrap();
        let p = psi(&DMatrix::identity(2, 2), &DMatrix::zeros(1, 2), &w);
        assert_eq!(p, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));

        let w = Weights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let p = psi(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1), &w);
        assert_eq!(p, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));

        let w = Weights::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 0.01)).unwrap();
        let p = psi(&DMatrix::identity(2, 2), &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &w);
        let want = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.1, 0.1]);
        assert!((p - want).amax() < 1e-15);
    }

    #[test]
    fn constraint_row_examples() {
        let rows = box_constraint_rows(2, 1, &[], &[BoxBound::symmetric(0, 1.0)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.rows[0], ConstraintRow { c: vec![0.0, 0.0], d: vec![1.0] });
        assert_eq!(rows.rows[1], ConstraintRow { c: vec![0.0, 0.0], d: vec![-1.0] });

        let half_pi = std::f64::consts::FRAC_PI_2;
        let rows = box_constraint_rows(4, 1, &[BoxBound::symmetric(0, half_pi), BoxBound::symmetric(2, half_pi)], &[]).unwrap();
        assert_eq!(rows.len(), 4);
        let two_over_pi = 2.0 / std::f64::consts::PI;
        assert!((rows.rows[0].c[0] - two_over_pi).abs() < 1e-15);
        assert!((rows.rows[1].c[0] + two_over_pi).abs() < 1e-15);
        assert!((rows.rows[2].c[2] - two_over_pi).abs() < 1e-15);
        assert!(rows.rows.iter().all(|r| r.d == vec![0.0]));

        let rows = make_constraint_rows(&DMatrix::zeros(0, 2), &DMatrix::zeros(0, 1)).unwrap();
        assert!(rows.is_empty());

        assert!(box_constraint_rows(1, 1, &[], &[BoxBound { index: 0, lower: -1.0, upper: 0.0 }]).is_err());
        assert!(box_constraint_rows(1, 1, &[], &[BoxBound { index: 0, lower: -1.0, upper: f64::INFINITY }]).is_err());
        assert!(box_constraint_rows(1, 1, &[], &[BoxBound { index: 0, lower: 0.5, upper: 1.0 }]).is_err());
        // asymmetric box normalizes each face by its own bound
        let rows = box_constraint_rows(1, 1, &[BoxBound { index: 0, lower: -4.0, upper: 2.0 }], &[]).unwrap();
        assert_eq!(rows.rows[0].c, vec![0.5]);
        assert_eq!(rows.rows[1].c, vec![-0.25]);
    }

    #[test]
    fn nominal_block_sides_and_counts() {
        let d = two_state_dataset(10);
        let w = Weights::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 0.01)).unwrap();
        let rows = box_constraint_rows(2, 1, &[], &[BoxBound::symmetric(0, 1.0)]).unwrap();
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let p = build_nominal(&d, &w, &rows, &x0).unwrap();
        assert_eq!(p.block_sides(), vec![3, 10, 5, 3, 3]);
        assert_eq!(p.num_coords(), 8);
        let names: Vec<&str> = p.blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, ["ellip", "stab", "stab2", "con_1", "con_2"]);

        let long = build_nominal(&two_state_dataset(1000), &w, &rows, &x0).unwrap();
        assert_eq!(long.layout, p.layout);
        assert_eq!(long.block_sides(), p.block_sides());
    }

    #[test]
    fn zero_data_evaluation_matches_printed_pattern() {
        // n = m = 1, zero data: the stab block at N = 1, L = 0, α = η = ε = 1
        let d = scalar_dataset(&[0.0, 0.0], &[0.0]);
        let w = Weights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let rows = ConstraintRows::empty(1, 1);
        let p = build_nominal(&d, &w, &rows, &DVector::from_element(1, 0.0)).unwrap();
        let point = DecisionPoint { n_mat: DMatrix::identity(1, 1), l: DMatrix::zeros(1, 1), alpha: 1.0, eta: 1.0, epsilon: vec![1.0] };
        let stab = &p.evaluate_point(&point)[1].1;
        // rows: N−η, 0, 0, N, Ψ = [1; 0]
        let want = DMatrix::from_row_slice(
            6,
            6,
            &[
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let grid = vec![
            vec![Block::Zero, Block::Zero, Block::Zero, Block::Zero, Block::Zero],
            vec![Block::Zero, Block::Zero, Block::Zero, Block::Dense(DMatrix::identity(1, 1)), Block::Zero],
            vec![Block::Zero, Block::Zero, Block::Zero, Block::Dense(DMatrix::zeros(1, 1)), Block::Zero],
            vec![
                Block::Zero,
                Block::Dense(DMatrix::identity(1, 1)),
                Block::Dense(DMatrix::zeros(1, 1)),
                Block::Dense(DMatrix::identity(1, 1)),
                Block::Dense(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
            ],
            vec![Block::Zero, Block::Zero, Block::Zero, Block::Dense(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])), Block::Dense(DMatrix::identity(2, 2))],
        ];
        let printed = assemble_blocks(&BlockLayout::symmetric(&[1, 1, 1, 1, 2]), &grid).unwrap();
        assert_eq!(stab.as_matrix(), &want);
        assert_eq!(stab, &printed);
    }

    #[test]
    fn data_term_enters_only_through_epsilon() {
        let d = two_state_dataset(6);
        let w = Weights::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 0.01)).unwrap();
        let p = build_nominal(&d, &w, &ConstraintRows::empty(2, 1), &DVector::zeros(2)).unwrap();
        let stab = p.block("stab").unwrap();
        let eps = stab.coefficient(p.layout.epsilon(0)).unwrap();
        let stack = d.data_stack(false).unwrap();
        let outer = &stack * stack.transpose();
        assert!((eps.as_matrix().view((0, 0), (5, 5)) - &outer).amax() < 1e-12);
        assert_eq!(eps.as_matrix().rows(5, 5).amax(), 0.0);
        for (k, _) in &stab.coeffs {
            if *k != p.layout.epsilon(0) {
                assert!(stab.coefficient(*k).unwrap().as_matrix().view((0, 0), (5, 5)).iter().zip(outer.iter()).all(|(a, _)| a.abs() <= 1.0));
            }
        }
        assert_eq!(stab.constant.as_matrix().amax(), 0.0);
    }

    #[test]
    fn polytopic_counts_and_reduction() {
        let w = Weights::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 0.01)).unwrap();
        let rows = box_constraint_rows(2, 1, &[], &[BoxBound::symmetric(0, 1.0)]).unwrap();
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let (d1, d2) = (two_state_dataset(10), two_state_dataset(7));
        let p = build_polytopic(&[d1.clone(), d2], &w, &rows, &x0, false).unwrap();
        assert_eq!(p.blocks.len(), 6);
        assert_eq!(p.block_sides(), vec![3, 10, 10, 5, 3, 3]);
        assert_eq!(p.num_coords(), 8);
        let single = build_polytopic(std::slice::from_ref(&d1), &w, &rows, &x0, false).unwrap();
        let nominal = build_nominal(&d1, &w, &rows, &x0).unwrap();
        assert_eq!(single.blocks, nominal.blocks);
        let per_vertex = build_polytopic(&[d1.clone(), d1], &w, &rows, &x0, true).unwrap();
        assert_eq!(per_vertex.num_coords(), 9);
    }

    #[test]
    fn lure_sides_and_counts() {
        let d = Dataset::new(DMatrix::zeros(1, 50), DMatrix::zeros(4, 51), Some(DMatrix::zeros(1, 50))).unwrap();
        let w = Weights::new(DMatrix::identity(4, 4) * 0.1, DMatrix::from_element(1, 1, 0.1)).unwrap();
        let rows = box_constraint_rows(4, 1, &[BoxBound::symmetric(0, 1.5), BoxBound::symmetric(2, 1.5)], &[BoxBound::symmetric(0, 2.0)]).unwrap();
        let h = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]);
        let p = build_lure(&d, &w, &rows, &DVector::zeros(4), &h, &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(p.block_sides(), vec![5, 20, 10, 5, 5, 5, 5, 5, 5]);
        assert_eq!(p.num_coords(), 17);
        let no_w = Dataset::new(DMatrix::zeros(1, 50), DMatrix::zeros(4, 51), None).unwrap();
        assert!(matches!(build_lure(&no_w, &w, &rows, &DVector::zeros(4), &h, &DMatrix::from_element(1, 1, 2.0)), Err(LmiError::MissingW)));
    }

    #[test]
    fn finsler_examples() {
        let fp = FinslerPair::new(SymMatrix::identity(2), SymMatrix::zeros(2), 1).unwrap();
        assert!(finsler_check(&fp, 3.0, 0.0));
        let fp = FinslerPair::new(SymMatrix::from_diagonal(&[1.0, -1.0]), SymMatrix::from_diagonal(&[0.0, -1.0]), 1).unwrap();
        assert!(finsler_check(&fp, 1.0, 0.0));
        let fp = FinslerPair::new(SymMatrix::from_diagonal(&[1.0, -1.0]), SymMatrix::zeros(2), 1).unwrap();
        assert!([0.0, 1.0, 1e6, -1e6].iter().all(|&e| !finsler_check(&fp, e, 0.0)));
    }

    #[test]
    fn containment_examples() {
        let rows = make_constraint_rows(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &DMatrix::zeros(0, 1)).unwrap();
        let k = DMatrix::zeros(1, 2);
        let c = ellipsoid_contained(&SymMatrix::identity(2), 1.0, &rows, &k, 0.0).unwrap();
        assert!(c.margins[0].abs() < 1e-15 && c.all);
        let c = ellipsoid_contained(&SymMatrix::identity(2), 4.0, &rows, &k, 0.0).unwrap();
        assert!((c.margins[0] + 3.0).abs() < 1e-15 && !c.all);
        let c = ellipsoid_contained(&SymMatrix::from_diagonal(&[4.0, 1.0]), 1.0, &rows, &k, 0.0).unwrap();
        assert!((c.margins[0] - 0.75).abs() < 1e-15);
        assert!(ellipsoid_contained(&SymMatrix::from_diagonal(&[1.0, -1.0]), 1.0, &rows, &k, 0.0).is_err());
    }

    #[test]
    fn layout_point_round_trip() {
        let layout = VarLayout::new(3, 2, 1);
        assert_eq!(layout.len(), 6 + 6 + 3);
        let y: Vec<f64> = (0..layout.len()).map(|i| i as f64 + 0.5).collect();
        let p = layout.to_point(&y);
        assert_eq!(p.n_mat, p.n_mat.transpose());
        assert_eq!(layout.from_point(&p), y);
        assert_eq!(layout.coords[layout.alpha()], Coord::Alpha);
        assert_eq!(layout.names()[layout.eta()], "eta");
    }
}
