//! Conic lowering of [`LmiProblem`]s and a dense primal-dual interior-point
//! solver.
//!
//! A [`ConicProgram`] is `min cᵀy` subject to `F_b(y) = F_b0 + Σ y_i F_bi ⪰ 0`
//! for every block and `y_i ≥ lb_i` where a bound is given. The solver works on
//! the equivalent standard pair
//!
//! ```text
//!   (P)  min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0
//!   (D)  max bᵀy     s.t. Z = C − Σ y_i A_i ⪰ 0
//! ```
//!
//! with `C = F0`, `A_i = −F_i`, `b = −c`, using the HKM search direction with a
//! Mehrotra predictor-corrector. Every variable is boxed to `|y_i| ≤ R` so both
//! sides have interior points. A phase-one program `min s` s.t. `F(y) + sI ⪰ 0`
//! decides feasibility before the objective is optimized.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{DecisionPoint, LmiProblem};
use crate::matcore::SymMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SdpError {
    #[error("ill-formed conic program: {0}")]
    Malformed(String),
    #[error("invalid solver settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    /// Relative strictness margin for `≻ 0` blocks.
    pub delta: f64,
    /// Box radius `R` applied to every variable.
    pub box_radius: f64,
    /// Upper bound on `ε·‖ε-coefficient‖₂` for the data multipliers.
    pub multiplier_cap: f64,
    /// Whiten data blocks by a congruence built from their ε coefficient.
    pub precondition: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-8, max_iters: 200, delta: 1e-6, box_radius: 1e6, multiplier_cap: 1e6, precondition: true }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SdpError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.feas_tol) || !ok(self.gap_tol) {
            return Err(SdpError::Settings(format!("tolerances must be positive (feas_tol {}, gap_tol {})", self.feas_tol, self.gap_tol)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(SdpError::Settings(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if !ok(self.box_radius) {
            return Err(SdpError::Settings(format!("box radius must be positive, got {}", self.box_radius)));
        }
        if !(self.multiplier_cap > 0.0) {
            return Err(SdpError::Settings(format!("multiplier cap must be positive, got {}", self.multiplier_cap)));
        }
        if self.max_iters == 0 {
            return Err(SdpError::Settings("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub constant: SymMatrix,
    pub coeffs: Vec<(usize, SymMatrix)>,
    /// `T` when the block is stored as `Tᵀ F(y) T`.
    pub congruence: Option<DMatrix<f64>>,
}

impl PsdBlock {
    pub fn side(&self) -> usize {
        self.constant.side()
    }

    pub fn evaluate(&self, y: &[f64]) -> SymMatrix {
        let mut m = self.constant.as_matrix().clone();
        for (k, f) in &self.coeffs {
            m += f.as_matrix() * y[*k];
        }
        SymMatrix::symmetrize(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub psd_blocks: Vec<PsdBlock>,
    pub scalar_bounds: Vec<Option<f64>>,
    pub upper_bounds: Vec<Option<f64>>,
}

impl ConicProgram {
    /// Program with unnamed variables `y0, y1, …`, no blocks and no bounds.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { num_vars: n, var_names: (0..n).map(|i| format!("y{i}")).collect(), objective, psd_blocks: vec![], scalar_bounds: vec![None; n], upper_bounds: vec![None; n] }
    }

    pub fn add_block(&mut self, name: &str, constant: DMatrix<f64>, coeffs: Vec<(usize, DMatrix<f64>)>) {
        self.psd_blocks.push(PsdBlock {
            name: name.to_string(),
            constant: SymMatrix::symmetrize(constant),
            coeffs: coeffs.into_iter().map(|(k, m)| (k, SymMatrix::symmetrize(m))).collect(),
            congruence: None,
        });
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if [self.objective.len(), self.scalar_bounds.len(), self.upper_bounds.len(), self.var_names.len()].iter().any(|&l| l != self.num_vars) {
            return Err(SdpError::Malformed("objective, bounds and names must have one entry per variable".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(SdpError::Malformed("objective must be finite".into()));
        }
        for (k, (lb, ub)) in self.scalar_bounds.iter().zip(&self.upper_bounds).enumerate() {
            if lb.is_some_and(|v| !v.is_finite()) || ub.is_some_and(|v| !v.is_finite()) {
                return Err(SdpError::Malformed(format!("bounds on variable {k} must be finite")));
            }
        }
        for b in &self.psd_blocks {
            let side = b.side();
            if side == 0 {
                return Err(SdpError::Malformed(format!("block {} is empty", b.name)));
            }
            for (k, f) in &b.coeffs {
                if *k >= self.num_vars {
                    return Err(SdpError::Malformed(format!("block {} references variable {k} of {}", b.name, self.num_vars)));
                }
                if f.side() != side {
                    return Err(SdpError::Malformed(format!("block {}: coefficient of variable {k} has side {}, expected {side}", b.name, f.side())));
                }
            }
            if b.constant.as_matrix().iter().chain(b.coeffs.iter().flat_map(|(_, f)| f.as_matrix().iter())).any(|v| !v.is_finite()) {
                return Err(SdpError::Malformed(format!("block {} has non-finite entries", b.name)));
            }
        }
        Ok(())
    }

    /// Sparse triplet listing.
    ///
    /// One line per nonzero upper-triangular entry: `block row col var value`,
    /// with `var` either a variable index or `CONST`. Rows and columns are
    /// zero-based. Header lines start with `#`; `objective`, `bound` and
    /// `upper` lines carry the linear objective and the scalar bounds.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# conic program: min c'y s.t. sum_k y_k F_k + F_CONST >= 0 per block");
        let _ = writeln!(out, "# vars {} blocks {}", self.num_vars, self.psd_blocks.len());
        for (i, name) in self.var_names.iter().enumerate() {
            let _ = writeln!(out, "# var {i} {name}");
        }
        for (b, blk) in self.psd_blocks.iter().enumerate() {
            let _ = writeln!(out, "# block {b} {} side {}", blk.name, blk.side());
        }
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(out, "objective {i} {c:?}");
            }
        }
        for (i, lb) in self.scalar_bounds.iter().enumerate() {
            if let Some(lb) = lb {
                let _ = writeln!(out, "bound {i} {lb:?}");
            }
        }
        for (i, ub) in self.upper_bounds.iter().enumerate() {
            if let Some(ub) = ub {
                let _ = writeln!(out, "upper {i} {ub:?}");
            }
        }
        for (b, blk) in self.psd_blocks.iter().enumerate() {
            let mut emit = |tag: &str, m: &SymMatrix| {
                for i in 0..m.side() {
                    for j in i..m.side() {
                        let v = m.get(i, j);
                        if v != 0.0 {
                            let _ = writeln!(out, "{b} {i} {j} {tag} {v:?}");
                        }
                    }
                }
            };
            emit("CONST", &blk.constant);
            for (k, f) in &blk.coeffs {
                emit(&k.to_string(), f);
            }
        }
        out
    }
}

/// Lowers an LMI problem: one variable per coordinate, `≻ 0` blocks shifted by
/// `δ_b = delta · max(1, ‖constant‖_max)`, `α, η, ε ≥ delta`, objective `α`.
///
/// With `precondition`, each block carrying a data term `ε·ddᵀ` is replaced by
/// `Tᵀ(F − δ_b I)T` with `T = U·diag(λ_i^{-1/2} or 1)` from the eigenpairs of
/// `ddᵀ`. The congruence is invertible, so the feasible set is unchanged, while
/// the data term becomes a projector and ε acts evenly on every data direction.
pub fn lower(p: &LmiProblem, s: &SolverSettings) -> ConicProgram {
    let nv = p.num_coords();
    let mut objective = vec![0.0; nv];
    objective[p.objective()] = 1.0;
    let eps_coords: Vec<usize> = (0..p.layout.epsilon_count()).map(|j| p.layout.epsilon(j)).collect();
    let psd_blocks: Vec<PsdBlock> = p
        .blocks
        .iter()
        .map(|b| {
            let margin = if b.strict { block_margin(b.constant.as_matrix(), s.delta) } else { 0.0 };
            let constant = b.constant.axpy(-margin, &SymMatrix::identity(b.side()));
            let blk = PsdBlock { name: b.name.clone(), constant, coeffs: b.coeffs.clone(), congruence: None };
            let data = eps_coords.iter().find_map(|&k| b.coefficient(k));
            match data {
                Some(f) if s.precondition => whiten(blk, f.as_matrix()),
                _ => blk,
            }
        })
        .collect();
    let mut scalar_bounds = vec![None; nv];
    for k in p.layout.positive_coords() {
        scalar_bounds[k] = Some(s.delta);
    }
    let mut upper_bounds = vec![None; nv];
    for &k in &eps_coords {
        let scale = psd_blocks
            .iter()
            .filter_map(|b: &PsdBlock| b.coeffs.iter().find(|(i, _)| *i == k))
            .map(|(_, f)| spectral_norm(f.as_matrix()))
            .fold(0.0, f64::max);
        if scale > 0.0 {
            upper_bounds[k] = Some((s.multiplier_cap / scale).max(2.0 * s.delta));
        }
    }
    ConicProgram { num_vars: nv, var_names: p.layout.names(), objective, psd_blocks, scalar_bounds, upper_bounds }
}

fn whiten(blk: PsdBlock, data: &DMatrix<f64>) -> PsdBlock {
    let eig = nalgebra::SymmetricEigen::new(sym(data));
    let top = eig.eigenvalues.amax();
    if top <= 0.0 {
        return blk;
    }
    let scales = eig.eigenvalues.map(|l| if l > 1e-12 * top { 1.0 / l.sqrt() } else { 1.0 });
    let t = &eig.eigenvectors * DMatrix::from_diagonal(&scales);
    let apply = |m: &SymMatrix| SymMatrix::symmetrize(t.transpose() * m.as_matrix() * &t);
    PsdBlock {
        name: blk.name,
        constant: apply(&blk.constant),
        coeffs: blk.coeffs.iter().map(|(k, f)| (*k, apply(f))).collect(),
        congruence: Some(t),
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(sym(m)).eigenvalues.amax()
}

/// Strictness margin applied to a block with the given constant part.
pub fn block_margin(constant: &DMatrix<f64>, delta: f64) -> f64 {
    delta * constant.amax().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResidual {
    pub name: String,
    pub min_eig: f64,
    /// Rounding floor of the evaluation, added to the check tolerance.
    #[serde(default)]
    pub allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub objective_value: f64,
    /// Minimum eigenvalue of every block at `point`, bounds included as 1×1 blocks.
    pub residuals: Vec<BlockResidual>,
    /// Relative duality gap of the last iterate.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Optimal phase-one value `s*`; feasible iff `s* ≤ feas_tol`.
    pub phase_one_value: f64,
    pub iterations: [usize; 2],
    pub message: String,
}

impl Solution {
    pub fn worst_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.min_eig).fold(f64::INFINITY, f64::min)
    }
}

/// Block in standard form: `Z = C − Σ y_i A_i`.
#[derive(Debug, Clone)]
struct StdBlock {
    c: DMatrix<f64>,
    a: Vec<(usize, DMatrix<f64>)>,
}

impl StdBlock {
    fn side(&self) -> usize {
        self.c.nrows()
    }

    fn slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut z = self.c.clone();
        for (k, a) in &self.a {
            z -= a * y[*k];
        }
        z
    }
}

#[derive(Debug, Clone)]
struct StdProgram {
    b: DVector<f64>,
    blocks: Vec<StdBlock>,
}

#[derive(Debug, Clone)]
struct IpmResult {
    converged: bool,
    early: Option<Early>,
    /// `⟨C, X⟩`
    pobj: f64,
    rp_l1: f64,
    failed: Option<String>,
    y: DVector<f64>,
    gap: f64,
    pinf: f64,
    dinf: f64,
    iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Early {
    Feasible,
    Infeasible,
}

/// Per-iterate view handed to an early-stop rule.
struct Iterate<'a> {
    y: &'a DVector<f64>,
    pobj: f64,
    /// `‖b − 𝒜(X)‖₁`
    rp_l1: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn fro(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    nalgebra::SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest `t` with `X + tΔX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let w = match l.solve_lower_triangular(dx) {
        Some(w) => w,
        None => return 0.0,
    };
    let w = match l.solve_lower_triangular(&w.transpose()) {
        Some(w) => w,
        None => return 0.0,
    };
    let lam = min_sym_eig(&w);
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn ipm(sp: &StdProgram, s: &SolverSettings, early: &dyn Fn(&Iterate) -> Option<Early>) -> IpmResult {
    let m = sp.b.len();
    let n_total: usize = sp.blocks.iter().map(StdBlock::side).sum();
    let bnorm = sp.b.norm();

    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(sp.blocks.len());
    let mut zs: Vec<DMatrix<f64>> = Vec::with_capacity(sp.blocks.len());
    for blk in &sp.blocks {
        let n = blk.side() as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut zeta = 10f64.max(n.sqrt()).max(fro(&blk.c));
        for (k, a) in &blk.a {
            let an = fro(a);
            xi = xi.max(n * (1.0 + sp.b[*k].abs()) / (1.0 + an));
            zeta = zeta.max(an);
        }
        xs.push(DMatrix::identity(blk.side(), blk.side()) * xi);
        zs.push(DMatrix::identity(blk.side(), blk.side()) * zeta);
    }
    let mut y = DVector::zeros(m);
    let cnorms: Vec<f64> = sp.blocks.iter().map(|b| fro(&b.c)).collect();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for blk in &sp.blocks {
        for (ki, ai) in &blk.a {
            for (kj, aj) in &blk.a {
                gram[(*ki, *kj)] += ai.dot(aj);
            }
        }
    }
    let gram = nalgebra::Cholesky::new(gram);

    let mut res = IpmResult { converged: false, early: None, pobj: 0.0, rp_l1: f64::INFINITY, failed: None, y: y.clone(), gap: f64::INFINITY, pinf: f64::INFINITY, dinf: f64::INFINITY, iters: 0 };
    let mut stalls = 0;

    for iter in 0..=s.max_iters {
        // residuals
        let mut ax = DVector::zeros(m);
        let mut rds = Vec::with_capacity(sp.blocks.len());
        let mut pobj = 0.0;
        let mut xz = 0.0;
        let mut dinf: f64 = 0.0;
        for (bi, blk) in sp.blocks.iter().enumerate() {
            for (k, a) in &blk.a {
                ax[*k] += a.dot(&xs[bi]);
            }
            let rd = blk.slack(&y) - &zs[bi];
            dinf = dinf.max(fro(&rd) / (1.0 + cnorms[bi]));
            rds.push(rd);
            pobj += blk.c.dot(&xs[bi]);
            xz += xs[bi].dot(&zs[bi]);
        }
        let rp = &sp.b - &ax;
        let dobj = sp.b.dot(&y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let mu = xz / n_total as f64;
        res = IpmResult { converged: false, early: None, pobj, rp_l1: rp.lp_norm(1), failed: None, y: y.clone(), gap, pinf, dinf, iters: iter };

        if let Some(e) = early(&Iterate { y: &y, pobj, rp_l1: rp.lp_norm(1) }) {
            res.early = Some(e);
            return res;
        }
        let slack_ok = sp.blocks.iter().all(|b| min_sym_eig(&b.slack(&y)) >= -s.feas_tol);
        if pinf <= s.feas_tol && dinf <= s.feas_tol && gap <= s.gap_tol && slack_ok {
            res.converged = true;
            return res;
        }
        if iter == s.max_iters {
            return res;
        }

        // factorizations
        let mut zinvs = Vec::with_capacity(sp.blocks.len());
        let mut xchols = Vec::with_capacity(sp.blocks.len());
        let mut zchols = Vec::with_capacity(sp.blocks.len());
        for bi in 0..sp.blocks.len() {
            let (Some(cx), Some(cz)) = (nalgebra::Cholesky::new(sym(&xs[bi])), nalgebra::Cholesky::new(sym(&zs[bi]))) else {
                res.failed = Some(format!("iterate lost positive definiteness at iteration {iter}"));
                return res;
            };
            zinvs.push(sym(&cz.inverse()));
            xchols.push(cx);
            zchols.push(cz);
        }

        // Schur complement M_ij = tr(A_i X A_j Z⁻¹)
        let mut mm = DMatrix::<f64>::zeros(m, m);
        for (bi, blk) in sp.blocks.iter().enumerate() {
            let gs: Vec<DMatrix<f64>> = blk.a.iter().map(|(_, a)| &xs[bi] * a * &zinvs[bi]).collect();
            for (ii, (ki, _)) in blk.a.iter().enumerate() {
                for (kj, aj) in &blk.a {
                    mm[(*ki, *kj)] += aj.dot(&gs[ii]);
                }
            }
        }
        let mm = sym(&mm);
        let scale = mm.diagonal().amax().max(1e-300);
        let chol = nalgebra::Cholesky::new(mm.clone()).or_else(|| nalgebra::Cholesky::new(&mm + DMatrix::identity(m, m) * (1e-13 * scale)));
        let Some(chol) = chol else {
            res.failed = Some(format!("Schur complement not positive definite at iteration {iter}"));
            return res;
        };

        // direction for a given complementarity target H_b = σμZ⁻¹ − X − corr_b Z⁻¹
        let direction = |hs: &[DMatrix<f64>]| {
            let mut rhs = rp.clone();
            for (bi, blk) in sp.blocks.iter().enumerate() {
                let xrz = &xs[bi] * &rds[bi] * &zinvs[bi];
                for (k, a) in &blk.a {
                    rhs[*k] += a.dot(&xrz) - a.dot(&hs[bi]);
                }
            }
            let mut dy = chol.solve(&rhs);
            for _ in 0..2 {
                let r = &rhs - &mm * &dy;
                dy += chol.solve(&r);
            }
            let mut dxs = Vec::with_capacity(sp.blocks.len());
            let mut dzs = Vec::with_capacity(sp.blocks.len());
            for (bi, blk) in sp.blocks.iter().enumerate() {
                let mut dz = rds[bi].clone();
                for (k, a) in &blk.a {
                    dz -= a * dy[*k];
                }
                let dz = sym(&dz);
                let dx = sym(&(&hs[bi] - &xs[bi] * &dz * &zinvs[bi]));
                dxs.push(dx);
                dzs.push(dz);
            }
            (dy, dxs, dzs)
        };
        let steps = |dxs: &[DMatrix<f64>], dzs: &[DMatrix<f64>]| {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for bi in 0..sp.blocks.len() {
                ap = ap.min(max_step(&xchols[bi], &dxs[bi]));
                ad = ad.min(max_step(&zchols[bi], &dzs[bi]));
            }
            (ap, ad)
        };

        // predictor
        let hs: Vec<DMatrix<f64>> = xs.iter().map(|x| -x).collect();
        let (_, dxa, dza) = direction(&hs);
        let (apa, ada) = steps(&dxa, &dza);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mut xz_aff = 0.0;
        for bi in 0..sp.blocks.len() {
            xz_aff += (&xs[bi] + &dxa[bi] * apa).dot(&(&zs[bi] + &dza[bi] * ada));
        }
        let mu_aff = xz_aff / n_total as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).min(1.0) } else { 0.0 };
        let sigma = if pinf > 1e3 * s.feas_tol || dinf > 1e3 * s.feas_tol { sigma.max(0.1 * (1.0 - apa.min(ada))) } else { sigma };

        // corrector
        let hs: Vec<DMatrix<f64>> = (0..sp.blocks.len())
            .map(|bi| &zinvs[bi] * (sigma * mu) - &xs[bi] - &dxa[bi] * &dza[bi] * &zinvs[bi])
            .collect();
        let (dy, dxs, dzs) = direction(&hs);
        let (ap, ad) = steps(&dxs, &dzs);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || dy.iter().any(|v| !v.is_finite()) {
            res.failed = Some(format!("non-finite search direction at iteration {iter}"));
            return res;
        }
        if ap.max(ad) < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                res.failed = Some(format!("step length collapsed at iteration {iter}"));
                return res;
            }
        } else {
            stalls = 0;
        }
        for bi in 0..sp.blocks.len() {
            xs[bi] = sym(&(&xs[bi] + &dxs[bi] * ap));
            zs[bi] = sym(&(&zs[bi] + &dzs[bi] * ad));
        }
        y += dy * ad;
        if let Some(g) = &gram {
            project_primal(sp, g, &mut xs, bnorm);
        }
    }
    res
}

/// Least-norm correction of `X` onto `𝒜(X) = b`, kept only if every block
/// stays positive definite. Used once the residual is already small, where
/// rounding in the Newton step dominates it.
fn project_primal(sp: &StdProgram, gram: &nalgebra::Cholesky<f64, nalgebra::Dyn>, xs: &mut [DMatrix<f64>], bnorm: f64) {
    let mut rp = sp.b.clone();
    for (bi, blk) in sp.blocks.iter().enumerate() {
        for (k, a) in &blk.a {
            rp[*k] -= a.dot(&xs[bi]);
        }
    }
    if rp.norm() > 1e-4 * (1.0 + bnorm) {
        return;
    }
    let w = gram.solve(&rp);
    let mut out = Vec::with_capacity(xs.len());
    for (bi, blk) in sp.blocks.iter().enumerate() {
        let mut x = xs[bi].clone();
        for (k, a) in &blk.a {
            x += a * w[*k];
        }
        if nalgebra::Cholesky::new(x.clone()).is_none() {
            return;
        }
        out.push(x);
    }
    xs.clone_from_slice(&out);
}

fn std_blocks(cp: &ConicProgram, extra: Option<usize>) -> Vec<(String, StdBlock)> {
    let mut out = Vec::new();
    for b in &cp.psd_blocks {
        let mut a: Vec<(usize, DMatrix<f64>)> = b.coeffs.iter().map(|(k, f)| (*k, -f.as_matrix())).collect();
        if let Some(sk) = extra {
            a.push((sk, -DMatrix::identity(b.side(), b.side())));
        }
        out.push((b.name.clone(), StdBlock { c: b.constant.as_matrix().clone(), a }));
    }
    for (k, lb) in cp.scalar_bounds.iter().enumerate() {
        if let Some(lb) = lb {
            let mut a = vec![(k, DMatrix::from_element(1, 1, -1.0))];
            if let Some(sk) = extra {
                a.push((sk, DMatrix::from_element(1, 1, -1.0)));
            }
            out.push((format!("{}>={lb:e}", cp.var_names[k]), StdBlock { c: DMatrix::from_element(1, 1, -lb), a }));
        }
    }
    for (k, ub) in cp.upper_bounds.iter().enumerate() {
        if let Some(ub) = ub {
            out.push((format!("{}<={ub:e}", cp.var_names[k]), StdBlock { c: DMatrix::from_element(1, 1, *ub), a: vec![(k, DMatrix::from_element(1, 1, 1.0))] }));
        }
    }
    out
}

fn box_blocks(nv: usize, radius: f64) -> Vec<StdBlock> {
    let mut out = Vec::with_capacity(2 * nv);
    for k in 0..nv {
        out.push(StdBlock { c: DMatrix::from_element(1, 1, radius), a: vec![(k, DMatrix::from_element(1, 1, 1.0))] });
        out.push(StdBlock { c: DMatrix::from_element(1, 1, radius), a: vec![(k, DMatrix::from_element(1, 1, -1.0))] });
    }
    out
}

fn residuals(named: &[(String, StdBlock)], y: &DVector<f64>) -> Vec<BlockResidual> {
    named.iter().map(|(name, b)| BlockResidual { name: name.clone(), min_eig: min_sym_eig(&b.slack(y)), allowance: 0.0 }).collect()
}

/// Solves `cp`. Deterministic; never panics on numerical trouble, which is
/// reported through [`Solution::status`].
pub fn solve(cp: &ConicProgram, s: &SolverSettings) -> Result<Solution, SdpError> {
    cp.validate()?;
    s.validate()?;
    let nv = cp.num_vars;
    let radius = s.box_radius;

    // phase one: min s  s.t.  F(y) + sI ⪰ 0, y ≥ lb − s, y ≤ ub, |y| ≤ R, −1 ≤ s ≤ R.
    // Stops as soon as an iterate is strictly feasible for the original
    // constraints, or the dual bound s* ≥ −⟨C, X⟩ − R‖r_p‖₁ proves infeasibility.
    let named = std_blocks(cp, None);
    let named1 = std_blocks(cp, Some(nv));
    let mut blocks1: Vec<StdBlock> = named1.iter().map(|(_, b)| b.clone()).collect();
    blocks1.extend(box_blocks(nv, radius));
    blocks1.push(StdBlock { c: DMatrix::from_element(1, 1, 1.0), a: vec![(nv, DMatrix::from_element(1, 1, -1.0))] });
    blocks1.push(StdBlock { c: DMatrix::from_element(1, 1, radius), a: vec![(nv, DMatrix::from_element(1, 1, 1.0))] });
    let mut b1 = DVector::zeros(nv + 1);
    b1[nv] = -1.0;
    let strict = |it: &Iterate| {
        let y = it.y.rows(0, nv).into_owned();
        if named.iter().all(|(_, b)| min_sym_eig(&b.slack(&y)) > 0.0) {
            return Some(Early::Feasible);
        }
        // every phase-one point has |y_i| ≤ R, so bᵀy ≤ ⟨C, X⟩ + R‖r_p‖₁
        let bound = -it.pobj - radius * it.rp_l1;
        (bound > s.feas_tol).then_some(Early::Infeasible)
    };
    let r1 = ipm(&StdProgram { b: b1, blocks: blocks1 }, s, &strict);

    let y1 = r1.y.rows(0, nv).into_owned();
    let res1 = residuals(&named, &y1);
    let phase_one_value = -res1.iter().map(|r| r.min_eig).fold(f64::INFINITY, f64::min);

    let mut sol = Solution {
        status: SolveStatus::Infeasible,
        point: y1.as_slice().to_vec(),
        objective_value: cp.objective.iter().zip(y1.iter()).map(|(c, v)| c * v).sum(),
        residuals: res1,
        gap: r1.gap,
        primal_infeasibility: r1.pinf,
        dual_infeasibility: r1.dinf,
        phase_one_value,
        iterations: [r1.iters, 0],
        message: String::new(),
    };
    match (r1.early, r1.converged) {
        (Some(Early::Feasible), _) => {}
        (Some(Early::Infeasible), _) => {
            sol.message = format!("phase one dual bound s* >= {:.3e} > feas_tol {:.1e}", -r1.pobj - radius * r1.rp_l1, s.feas_tol);
            return Ok(sol);
        }
        (None, true) if phase_one_value > s.feas_tol => {
            sol.message = format!("phase one optimum s* = {phase_one_value:.3e} > feas_tol {:.1e}", s.feas_tol);
            return Ok(sol);
        }
        (None, true) => {}
        (None, false) => {
            sol.status = if r1.failed.is_some() { SolveStatus::NumericalFailure } else { SolveStatus::MaxIters };
            sol.message = format!("phase one did not converge: {}", r1.failed.unwrap_or_else(|| "iteration limit".into()));
            return Ok(sol);
        }
    }

    // phase two
    let mut blocks2: Vec<StdBlock> = named.iter().map(|(_, b)| b.clone()).collect();
    blocks2.extend(box_blocks(nv, radius));
    let b2 = -DVector::from_column_slice(&cp.objective);
    let r2 = ipm(&StdProgram { b: b2, blocks: blocks2 }, s, &|_| None);
    let y = r2.y.clone();
    sol.point = y.as_slice().to_vec();
    sol.objective_value = cp.objective.iter().zip(y.iter()).map(|(c, v)| c * v).sum();
    sol.residuals = residuals(&named, &y);
    sol.gap = r2.gap;
    sol.primal_infeasibility = r2.pinf;
    sol.dual_infeasibility = r2.dinf;
    sol.iterations[1] = r2.iters;
    let at_box = (0..nv).any(|k| cp.objective[k] != 0.0 && y[k].abs() >= 0.999 * radius);
    sol.status = if at_box {
        sol.message = format!("objective variable reached the box |y| <= {radius:e}");
        SolveStatus::Unbounded
    } else if r2.converged {
        SolveStatus::Optimal
    } else if let Some(msg) = r2.failed {
        sol.message = msg;
        SolveStatus::NumericalFailure
    } else {
        sol.message = "iteration limit reached".into();
        SolveStatus::MaxIters
    };
    Ok(sol)
}

/// Named minimum eigenvalues of every block of `p` at `point`, without margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub blocks: Vec<BlockResidual>,
    pub tol: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn worst(&self) -> Option<&BlockResidual> {
        self.blocks.iter().min_by(|a, b| a.min_eig.total_cmp(&b.min_eig))
    }
}

/// Re-evaluates every block and the sign of `α, η, ε` at `point`.
///
/// A block passes when its smallest eigenvalue is at least `-(tol + a)`,
/// where `a = 10·side·ε_mach·(‖C‖ + Σ|y_k|‖F_k‖)` is the rounding error of
/// forming and factoring it. `a` is negligible unless the terms are huge.
pub fn check_solution(p: &LmiProblem, point: &DecisionPoint, tol: f64) -> CheckReport {
    let y = p.layout.from_point(point);
    let mut blocks: Vec<BlockResidual> = p
        .blocks
        .iter()
        .map(|b| {
            let magnitude = b.constant.as_matrix().norm() + b.coeffs.iter().map(|(k, f)| y[*k].abs() * f.as_matrix().norm()).sum::<f64>();
            let allowance = 10.0 * b.side() as f64 * f64::EPSILON * magnitude;
            BlockResidual { name: b.name.clone(), min_eig: b.evaluate(&y).min_eigenvalue(), allowance }
        })
        .collect();
    for k in p.layout.positive_coords() {
        blocks.push(BlockResidual { name: p.layout.coords[k].to_string(), min_eig: y[k], allowance: 0.0 });
    }
    let pass = blocks.iter().all(|b| b.min_eig >= -(tol + b.allowance));
    CheckReport { blocks, tol, pass }
}
