//! Open-loop experiments and the data matrices built from them.
//!
//! A [`Dataset`] holds `U₋` (m×T), `X` (n×(T+1)) and, for Lur'e runs, `W₋`
//! (p×T) with `W₋[:,k] = γ(H x(k))`. [`ConsistentSet`] describes every system
//! that reproduces the recorded trajectory exactly: a least-norm particular
//! solution plus the left null space of the regressor `Z = [X₋; U₋(; W₋)]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError, MatrixRecord};
use crate::matcore;
use crate::plants::{Nonlinearity, Plant, PlantError};

/// Relative singular-value cutoff for rank and pseudoinverse decisions.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Largest state magnitude an open-loop run may reach before it counts as overflow.
const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("open-loop run overflowed at step {step}")]
    Overflow { step: usize },
    #[error("dataset needs T >= 1 (got T = {0})")]
    Empty(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("W_minus is absent but an E matrix was supplied")]
    MissingW,
    #[error("data are not consistent with any system (particular-solution residual {0:.3e})")]
    Inconsistent(f64),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Generating nonlinearity of a Lur'e experiment, kept alongside the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LureRecord {
    pub h: DMatrix<f64>,
    pub gamma: Nonlinearity,
    pub beta: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u_minus: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub w_minus: Option<DMatrix<f64>>,
    pub seed: Option<u64>,
    pub provenance: String,
    /// Vertex index for per-vertex polytopic experiments.
    pub vertex: Option<usize>,
    pub lure: Option<LureRecord>,
}

impl Dataset {
    pub fn new(u_minus: DMatrix<f64>, x: DMatrix<f64>, w_minus: Option<DMatrix<f64>>) -> Result<Self, DataError> {
        let d = Self { u_minus, x, w_minus, seed: None, provenance: String::new(), vertex: None, lure: None };
        d.validate()?;
        Ok(d)
    }

    pub fn t(&self) -> usize {
        self.u_minus.ncols()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_minus.nrows()
    }

    pub fn p(&self) -> usize {
        self.w_minus.as_ref().map_or(0, |w| w.nrows())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let t = self.t();
        if self.x.ncols() != t + 1 {
            return Err(DataError::Dimension(format!("X has {} columns, expected T+1 = {}", self.x.ncols(), t + 1)));
        }
        if self.x.nrows() == 0 || self.u_minus.nrows() == 0 {
            return Err(DataError::Dimension("n and m must be at least 1".into()));
        }
        if let Some(w) = &self.w_minus {
            if w.ncols() != t || w.nrows() == 0 {
                return Err(DataError::Dimension(format!("W_minus is {}x{}, expected px{t}", w.nrows(), w.ncols())));
            }
        }
        if self.x.iter().chain(self.u_minus.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite entries".into()));
        }
        if let (Some(rec), Some(w)) = (&self.lure, &self.w_minus) {
            if rec.h.nrows() != w.nrows() || rec.h.ncols() != self.n() {
                return Err(DataError::Dimension("recorded H does not match (p, n)".into()));
            }
            for k in 0..t {
                let z = &rec.h * self.x.column(k);
                for (i, &zi) in z.iter().enumerate() {
                    let g = rec.gamma.eval(zi)?;
                    if (g - w[(i, k)]).abs() > 1e-12 * g.abs().max(1.0) {
                        return Err(DataError::Invalid(format!("W_minus[{i},{k}] = {} but γ(Hx) = {g}", w[(i, k)])));
                    }
                }
            }
        }
        Ok(())
    }

    /// Regressor `[X₋; U₋]`, with `W₋` appended when `include_w` and present.
    pub fn regressor(&self, include_w: bool) -> Result<DMatrix<f64>, DataError> {
        let s = shift_split(self)?;
        let w = if include_w { self.w_minus.as_ref() } else { None };
        let rows = self.n() + self.m() + w.map_or(0, |w| w.nrows());
        let mut z = DMatrix::zeros(rows, self.t());
        z.rows_mut(0, self.n()).copy_from(&s.x_minus);
        z.rows_mut(self.n(), self.m()).copy_from(&self.u_minus);
        if let Some(w) = w {
            z.rows_mut(self.n() + self.m(), w.nrows()).copy_from(w);
        }
        Ok(z)
    }

    /// Stacked data vector `[X₊; −X₋; −U₋(; −W₋)]` whose outer product enters
    /// the data-dependent LMI blocks.
    pub fn data_stack(&self, include_w: bool) -> Result<DMatrix<f64>, DataError> {
        let s = shift_split(self)?;
        let z = self.regressor(include_w)?;
        let mut d = DMatrix::zeros(self.n() + z.nrows(), self.t());
        d.rows_mut(0, self.n()).copy_from(&s.x_plus);
        d.rows_mut(self.n(), z.nrows()).copy_from(&(-z));
        Ok(d)
    }
}

/// `X₋ = X[:, 0..T]`, `X₊ = X[:, 1..=T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedData {
    pub x_minus: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
}

pub fn shift_split(d: &Dataset) -> Result<ShiftedData, DataError> {
    let t = d.x.ncols().saturating_sub(1);
    if t == 0 {
        return Err(DataError::Empty(t));
    }
    Ok(ShiftedData { x_minus: d.x.columns(0, t).into_owned(), x_plus: d.x.columns(1, t).into_owned() })
}

/// Steps `plant` from `x0` under `inputs` (m×T). `W₋` is recorded only for Lur'e
/// plants and only when `record_w` is set.
pub fn run_experiment(plant: &Plant, x0: &DVector<f64>, inputs: &DMatrix<f64>, record_w: bool) -> Result<Dataset, DataError> {
    let (n, m) = (plant.n(), plant.m());
    if x0.len() != n {
        return Err(DataError::Dimension(format!("x0 has length {}, plant has n = {n}", x0.len())));
    }
    if inputs.nrows() != m {
        return Err(DataError::Dimension(format!("inputs have {} rows, plant has m = {m}", inputs.nrows())));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Invalid("inputs must be finite".into()));
    }
    let t = inputs.ncols();
    let plant = plant.resolved()?;
    let lure = match (&plant, record_w) {
        (Plant::Lure(l), true) => Some(l),
        _ => None,
    };
    let mut x = DMatrix::zeros(n, t + 1);
    x.set_column(0, x0);
    let mut w = lure.map(|l| DMatrix::zeros(l.p(), t));
    for k in 0..t {
        let xk: DVector<f64> = x.column(k).into_owned();
        if let (Some(l), Some(w)) = (lure, w.as_mut()) {
            w.set_column(k, &l.nonlinear_term(&xk)?);
        }
        let next = plant.step(&xk, &inputs.column(k).into_owned())?;
        if next.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(DataError::Overflow { step: k + 1 });
        }
        x.set_column(k + 1, &next);
    }
    Ok(Dataset {
        u_minus: inputs.clone(),
        x,
        w_minus: w,
        seed: None,
        provenance: format!("open-loop run of {} plant, T = {t}", plant.kind()),
        vertex: None,
        lure: lure.map(|l| LureRecord { h: l.h.clone(), gamma: l.gamma.clone(), beta: l.beta.clone() }),
    })
}

/// Seeded i.i.d. uniform inputs, channel `i` drawn from `[-bounds[i], bounds[i]]`.
pub fn uniform_inputs(bounds: &[f64], t: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DMatrix::zeros(bounds.len(), t);
    for k in 0..t {
        for (i, &b) in bounds.iter().enumerate() {
            u[(i, k)] = if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 };
        }
    }
    u
}

/// Frobenius norm of `X₊ − A X₋ − B U₋ (− E W₋)`.
pub fn consistency_residual(d: &Dataset, a: &DMatrix<f64>, b: &DMatrix<f64>, e: Option<&DMatrix<f64>>) -> Result<f64, DataError> {
    let s = shift_split(d)?;
    let (n, m) = (d.n(), d.m());
    if a.shape() != (n, n) || b.shape() != (n, m) {
        return Err(DataError::Dimension(format!("A {:?} / B {:?} do not match n = {n}, m = {m}", a.shape(), b.shape())));
    }
    let mut r = &s.x_plus - a * &s.x_minus - b * &d.u_minus;
    if let Some(e) = e {
        let w = d.w_minus.as_ref().ok_or(DataError::MissingW)?;
        if e.shape() != (n, w.nrows()) {
            return Err(DataError::Dimension(format!("E {:?} does not match (n, p) = ({n}, {})", e.shape(), w.nrows())));
        }
        r -= e * w;
    }
    Ok(r.norm())
}

/// Numerical rank of the regressor (W₋ included when present).
pub fn regressor_rank(d: &Dataset) -> Result<usize, DataError> {
    regressor_rank_with(d, RANK_REL_TOL)
}

pub fn regressor_rank_with(d: &Dataset, rel_tol: f64) -> Result<usize, DataError> {
    Ok(matcore::numerical_rank(&d.regressor(true)?, rel_tol))
}

/// System matrices split out of a stacked `[A B (E)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: Option<DMatrix<f64>>,
}

/// All systems consistent with a noise-free dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentSet {
    /// Least-norm `[A B (E)] = X₊ Z⁺`.
    pub particular: DMatrix<f64>,
    /// Orthonormal columns spanning `{v : vᵀ Z = 0}`.
    pub nullbasis: DMatrix<f64>,
    pub regressor_rank: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl ConsistentSet {
    pub fn is_unique(&self) -> bool {
        self.nullbasis.ncols() == 0
    }

    /// `particular + C · Vᵀ` for an n×k coefficient matrix `C`.
    pub fn member(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        if self.is_unique() {
            return self.particular.clone();
        }
        &self.particular + coeffs * self.nullbasis.transpose()
    }

    pub fn split(&self, stacked: &DMatrix<f64>) -> SystemMatrices {
        let (n, m, p) = (self.n, self.m, self.p);
        SystemMatrices {
            a: stacked.columns(0, n).into_owned(),
            b: stacked.columns(n, m).into_owned(),
            e: (p > 0).then(|| stacked.columns(n + m, p).into_owned()),
        }
    }

    pub fn particular_system(&self) -> SystemMatrices {
        self.split(&self.particular)
    }

    /// Random member with null-space coefficients uniform in `[-scale, scale]`.
    pub fn sample<R: Rng>(&self, rng: &mut R, scale: f64) -> SystemMatrices {
        let k = self.nullbasis.ncols();
        let coeffs = DMatrix::from_fn(self.n, k, |_, _| rng.gen_range(-scale..=scale));
        self.split(&self.member(&coeffs))
    }

    /// `count` seeded samples; the particular solution is always first.
    pub fn samples(&self, count: usize, seed: u64, scale: f64) -> Vec<SystemMatrices> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![self.particular_system()];
        if !self.is_unique() {
            while out.len() < count {
                out.push(self.sample(&mut rng, scale));
            }
        }
        out
    }
}

/// Builds Σ_D (or Σ_DW with `lure`) for a noise-free dataset.
pub fn consistent_set(d: &Dataset, lure: bool) -> Result<ConsistentSet, DataError> {
    if lure && d.w_minus.is_none() {
        return Err(DataError::MissingW);
    }
    let s = shift_split(d)?;
    let z = d.regressor(lure)?;
    let pinv = matcore::pseudo_inverse(&z, RANK_REL_TOL);
    let particular = &s.x_plus * pinv;
    let resid = (&particular * &z - &s.x_plus).norm();
    let scale = s.x_plus.norm().max(1.0);
    if resid > 1e-6 * scale {
        return Err(DataError::Inconsistent(resid));
    }
    let nullbasis = matcore::left_null_basis(&z, RANK_REL_TOL);
    Ok(ConsistentSet {
        particular,
        regressor_rank: z.nrows() - nullbasis.ncols(),
        nullbasis,
        n: d.n(),
        m: d.m(),
        p: if lure { d.p() } else { 0 },
    })
}

/// On-disk dataset (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: Option<u64>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<usize>,
    pub u_minus: MatrixRecord,
    pub x: MatrixRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_minus: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Nonlinearity>,
}

impl DatasetFile {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            n: d.n(),
            m: d.m(),
            p: d.p(),
            t: d.t(),
            seed: d.seed,
            provenance: d.provenance.clone(),
            vertex: d.vertex,
            u_minus: (&d.u_minus).into(),
            x: (&d.x).into(),
            w_minus: d.w_minus.as_ref().map(Into::into),
            h: d.lure.as_ref().map(|l| (&l.h).into()),
            beta: d.lure.as_ref().map(|l| (&l.beta).into()),
            nonlinearity: d.lure.as_ref().map(|l| l.gamma.clone()),
        }
    }

    pub fn into_dataset(self) -> Result<Dataset, DataError> {
        let lure = match (self.h, self.nonlinearity, self.beta) {
            (Some(h), Some(gamma), Some(beta)) => Some(LureRecord { h: h.to_matrix("h")?, gamma, beta: beta.to_matrix("beta")? }),
            (None, None, None) => None,
            _ => return Err(DataError::Invalid("h, beta and nonlinearity must be given together".into())),
        };
        let d = Dataset {
            u_minus: self.u_minus.to_matrix("u_minus")?,
            x: self.x.to_matrix("x")?,
            w_minus: self.w_minus.map(|w| w.to_matrix("w_minus")).transpose()?,
            seed: self.seed,
            provenance: self.provenance,
            vertex: self.vertex,
            lure,
        };
        d.validate()?;
        if d.n() != self.n || d.m() != self.m || d.p() != self.p || d.t() != self.t {
            return Err(DataError::Dimension(format!(
                "header (n, m, p, T) = ({}, {}, {}, {}) disagrees with matrices ({}, {}, {}, {})",
                self.n,
                self.m,
                self.p,
                self.t,
                d.n(),
                d.m(),
                d.p(),
                d.t()
            )));
        }
        Ok(d)
    }
}

pub fn dataset_to_json(d: &Dataset) -> String {
    io::to_json(&DatasetFile::from_dataset(d))
}

pub fn dataset_from_json(text: &str, origin: &str) -> Result<Dataset, DataError> {
    let file: DatasetFile = io::from_json(text, origin)?;
    file.into_dataset()
}

/// Columnar trace: `k, u entries, x entries, w entries`, one row per step.
/// The final row (k = T) has empty input and `w` fields.
pub fn trace_csv(d: &Dataset) -> String {
    let (n, m, p, t) = (d.n(), d.m(), d.p(), d.t());
    let mut header = vec!["k".to_string()];
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..p).map(|i| format!("w{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..=t {
        let mut row = vec![k.to_string()];
        for i in 0..m {
            row.push(if k < t { io::fmt_f64(d.u_minus[(i, k)]) } else { String::new() });
        }
        for i in 0..n {
            row.push(io::fmt_f64(d.x[(i, k)]));
        }
        if let Some(w) = &d.w_minus {
            for i in 0..p {
                row.push(if k < t { io::fmt_f64(w[(i, k)]) } else { String::new() });
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
