//! Closed-loop simulation under `u = Kx` with cost, Lyapunov and constraint logs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::io::fmt_f64;
use crate::lmi::{ConstraintRows, Weights};
use crate::plants::{Plant, PlantError};

pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 1e-3;
const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("state diverged at step {step} (|x|_inf = {norm:e})")]
    Divergence { step: usize, norm: f64 },
    #[error("plant step {step}: {source}")]
    Plant { step: usize, source: PlantError },
}

/// Online re-synthesis hook: given `x(k)`, return a fresh gain or `None` to keep the old one.
pub type Resolver<'a> = dyn FnMut(&DVector<f64>) -> Option<DMatrix<f64>> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// n×(steps+1)
    pub states: Vec<Vec<f64>>,
    /// m×steps
    pub inputs: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    /// `x(k)ᵀ P x(k)` for k = 0..=steps, empty without P.
    pub lyapunov: Vec<f64>,
    /// Per step, per row: `1 − (c_i x + d_i u)`.
    pub constraint_margins: Vec<Vec<f64>>,
    /// `γ(Hx)ᵀ(βHx − γ(Hx))` per step for Lur'e plants.
    pub sector_residuals: Vec<f64>,
    pub total_cost: f64,
    pub converged: bool,
    pub convergence_step: Option<usize>,
    pub threshold: f64,
    /// Steps where an online re-solve failed and the previous gain was kept.
    pub resolve_failures: Vec<usize>,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.states[k])
    }

    pub fn min_margin(&self) -> f64 {
        self.constraint_margins.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_input_abs(&self) -> f64 {
        self.inputs.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest `V(k+1) − V(k) + ℓ(k)`; `None` without a Lyapunov log.
    pub fn worst_decrease(&self) -> Option<f64> {
        if self.lyapunov.is_empty() {
            return None;
        }
        Some((0..self.steps()).map(|k| self.lyapunov[k + 1] - self.lyapunov[k] + self.stage_costs[k]).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Columnar export: `k, x…, u…, V, stage, min_margin`. The final row has
    /// the terminal state and empty input/cost fields.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("k");
        (0..n).for_each(|i| out.push_str(&format!(",x{i}")));
        (0..m).for_each(|i| out.push_str(&format!(",u{i}")));
        out.push_str(",V,stage,min_margin\n");
        for (k, x) in self.states.iter().enumerate() {
            let _ = write!(out, "{k}");
            for v in x {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            let running = k < self.steps();
            for i in 0..m {
                out.push(',');
                if running {
                    out.push_str(&fmt_f64(self.inputs[k][i]));
                }
            }
            out.push(',');
            if let Some(v) = self.lyapunov.get(k) {
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            if running {
                out.push_str(&fmt_f64(self.stage_costs[k]));
            }
            out.push(',');
            if let Some(mg) = self.constraint_margins.get(k).filter(|r| !r.is_empty()) {
                out.push_str(&fmt_f64(mg.iter().copied().fold(f64::INFINITY, f64::min)));
            }
            out.push('\n');
        }
        out
    }
}

/// Simulates with the default convergence threshold.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    plant: &Plant,
    k: &DMatrix<f64>,
    x0: &DVector<f64>,
    steps: usize,
    weights: &Weights,
    rows: &ConstraintRows,
    p: Option<&DMatrix<f64>>,
    resolve: Option<&mut Resolver<'_>>,
) -> Result<SimResult, SimError> {
    simulate_with_threshold(plant, k, x0, steps, weights, rows, p, resolve, DEFAULT_CONVERGENCE_THRESHOLD)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_with_threshold(
    plant: &Plant,
    k: &DMatrix<f64>,
    x0: &DVector<f64>,
    steps: usize,
    weights: &Weights,
    rows: &ConstraintRows,
    p: Option<&DMatrix<f64>>,
    mut resolve: Option<&mut Resolver<'_>>,
    threshold: f64,
) -> Result<SimResult, SimError> {
    let (n, m) = (plant.n(), plant.m());
    if steps == 0 {
        return Err(SimError::NoSteps);
    }
    if k.shape() != (m, n) {
        return Err(SimError::Dimension(format!("K is {}x{}, plant needs {m}x{n}", k.nrows(), k.ncols())));
    }
    if x0.len() != n {
        return Err(SimError::Dimension(format!("x0 has length {}, plant has n = {n}", x0.len())));
    }
    if weights.n() != n || weights.m() != m {
        return Err(SimError::Dimension(format!("weights are for ({}, {}), plant is ({n}, {m})", weights.n(), weights.m())));
    }
    if !rows.is_empty() && (rows.n != n || rows.m != m) {
        return Err(SimError::Dimension(format!("constraint rows are for ({}, {}), plant is ({n}, {m})", rows.n, rows.m)));
    }
    if let Some(p) = p {
        if p.shape() != (n, n) {
            return Err(SimError::Dimension(format!("P is {}x{}, expected {n}x{n}", p.nrows(), p.ncols())));
        }
    }
    let plant = plant.resolved().map_err(|source| SimError::Plant { step: 0, source })?;
    let lure = match &plant {
        Plant::Lure(l) => Some(l),
        _ => None,
    };
    let quad = |p: &DMatrix<f64>, x: &DVector<f64>| x.dot(&(p * x));

    let mut gain = k.clone();
    let mut x = x0.clone();
    let mut res = SimResult {
        states: vec![x.as_slice().to_vec()],
        inputs: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        lyapunov: p.map(|p| vec![quad(p, &x)]).unwrap_or_default(),
        constraint_margins: Vec::with_capacity(steps),
        sector_residuals: Vec::new(),
        total_cost: 0.0,
        converged: false,
        convergence_step: None,
        threshold,
        resolve_failures: Vec::new(),
    };
    for step in 0..steps {
        if step > 0 {
            if let Some(r) = resolve.as_deref_mut() {
                match r(&x) {
                    Some(g) if g.shape() == (m, n) => gain = g,
                    _ => res.resolve_failures.push(step),
                }
            }
        }
        let u = &gain * &x;
        res.stage_costs.push(weights.stage_cost(&x, &u));
        res.constraint_margins.push(if rows.is_empty() { Vec::new() } else { rows.margins(&x, &u) });
        if let Some(l) = lure {
            let z = &l.h * &x;
            let g = l.nonlinear_term(&x).map_err(|source| SimError::Plant { step, source })?;
            res.sector_residuals.push(g.dot(&(&l.beta * z - &g)));
        }
        let next = plant.step(&x, &u).map_err(|source| SimError::Plant { step, source })?;
        let norm = next.amax();
        if !norm.is_finite() || norm > OVERFLOW_LIMIT {
            return Err(SimError::Divergence { step: step + 1, norm });
        }
        res.inputs.push(u.as_slice().to_vec());
        x = next;
        res.states.push(x.as_slice().to_vec());
        if let Some(p) = p {
            res.lyapunov.push(quad(p, &x));
        }
    }
    res.total_cost = res.stage_costs.iter().sum();
    res.convergence_step = res.states.iter().position(|s| s.iter().all(|v| v.abs() < threshold));
    res.converged = res.convergence_step.is_some();
    Ok(res)
}

/// `J` plus a geometric bound on the cost beyond the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub total: f64,
    /// Largest ratio `ℓ(k+1)/ℓ(k)` after convergence.
    pub decay: Option<f64>,
    /// `ℓ(k_c) / (1 − decay)`; `None` when not converged or not contracting.
    pub tail_bound: Option<f64>,
}

pub fn accumulated_cost(sr: &SimResult) -> CostSummary {
    let total = sr.total_cost;
    let Some(kc) = sr.convergence_step.filter(|_| sr.converged) else {
        return CostSummary { total, decay: None, tail_bound: None };
    };
    let tail = &sr.stage_costs[kc.min(sr.stage_costs.len())..];
    let decay = tail
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let decay = match (decay, tail.iter().all(|&c| c == 0.0)) {
        (_, true) => Some(0.0),
        (d, false) => d,
    };
    let at_kc = tail.first().copied().unwrap_or(0.0);
    let tail_bound = decay.filter(|&d| d < 1.0).map(|d| at_kc / (1.0 - d));
    CostSummary { total, decay, tail_bound }
}

/// `J ≤ α(1 + 1e−6) + 1e−9`, with slack `α − J`.
pub fn check_against_bound(sr: &SimResult, alpha: f64) -> (bool, f64) {
    let j = sr.total_cost;
    (j <= alpha * (1.0 + 1e-6) + 1e-9, alpha - j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{box_constraint_rows, BoxBound};
    use crate::plants::{LtiPlant, LurePlant, Nonlinearity, PolytopicPlant};

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn sec61_mixture() -> Plant {
        let b = mat(2, 1, &[0.0, 0.787]);
        let v1 = LtiPlant::new(mat(2, 2, &[1.0, 0.1, 0.0, 0.99]), b.clone()).unwrap();
        let v2 = LtiPlant::new(mat(2, 2, &[1.0, 0.1, 0.0, 0.0]), b).unwrap();
        Plant::Polytopic(PolytopicPlant::new(vec![v1, v2], vec![0.85, 0.15]).unwrap())
    }

    fn w61() -> Weights {
        Weights::new(DMatrix::identity(2, 2), mat(1, 1, &[0.01])).unwrap()
    }

    #[test]
    fn first_step_of_the_mixture_example() {
        let k = mat(1, 2, &[-0.6489, -0.3809]);
        let rows = box_constraint_rows(2, 1, &[], &[BoxBound::symmetric(0, 1.0)]).unwrap();
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let sr = simulate(&sec61_mixture(), &k, &x0, 1, &w61(), &rows, None, None).unwrap();
        assert!((sr.inputs[0][0] + 0.616455).abs() < 1e-4);
        assert!((sr.states[1][0] - 0.95).abs() < 1e-12);
        assert!((sr.states[1][1] + 0.4852).abs() < 1e-4);
        assert!((sr.stage_costs[0] - 0.9063).abs() < 1e-4);
        assert_eq!(sr.to_csv().lines().count(), 3);
    }

    #[test]
    fn deadbeat_open_loop() {
        let plant = Plant::Lti(LtiPlant::new(DMatrix::zeros(2, 2), mat(2, 1, &[0.0, 1.0])).unwrap());
        let x0 = DVector::from_row_slice(&[0.3, -0.4]);
        let w = w61();
        let sr = simulate(&plant, &DMatrix::zeros(1, 2), &x0, 3, &w, &ConstraintRows::empty(2, 1), None, None).unwrap();
        assert_eq!(sr.states[1], vec![0.0, 0.0]);
        assert!((sr.total_cost - 0.25).abs() < 1e-15);
        assert_eq!(sr.convergence_step, Some(1));
        let c = accumulated_cost(&sr);
        assert_eq!(c.tail_bound, Some(0.0));
    }

    #[test]
    fn doubling_q_doubles_cost() {
        let plant = sec61_mixture();
        let k = mat(1, 2, &[-0.6489, -0.3809]);
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let rows = ConstraintRows::empty(2, 1);
        let w = Weights::new(DMatrix::identity(2, 2), mat(1, 1, &[0.01])).unwrap();
        let a = simulate(&plant, &k, &x0, 50, &w, &rows, None, None).unwrap();
        let b = simulate(&plant, &k, &x0, 50, &w.scaled(2.0).unwrap(), &rows, None, None).unwrap();
        for (x, y) in a.stage_costs.iter().zip(&b.stage_costs) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn segments_reproduce_single_run() {
        let plant = sec61_mixture();
        let k = mat(1, 2, &[-0.6489, -0.3809]);
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let rows = ConstraintRows::empty(2, 1);
        let full = simulate(&plant, &k, &x0, 30, &w61(), &rows, None, None).unwrap();
        let first = simulate(&plant, &k, &x0, 12, &w61(), &rows, None, None).unwrap();
        let second = simulate(&plant, &k, &first.state(12), 18, &w61(), &rows, None, None).unwrap();
        assert_eq!(full.states[12..], second.states[..]);
    }

    #[test]
    fn unstable_loop_reports_divergence() {
        let plant = Plant::Lti(LtiPlant::new(mat(1, 1, &[10.0]), mat(1, 1, &[1.0])).unwrap());
        let err = simulate(&plant, &DMatrix::zeros(1, 1), &DVector::from_element(1, 1.0), 500, &Weights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap(), &ConstraintRows::empty(1, 1), None, None).unwrap_err();
        assert!(matches!(err, SimError::Divergence { step, .. } if step > 100));
    }

    #[test]
    fn shape_errors() {
        let plant = sec61_mixture();
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let rows = ConstraintRows::empty(2, 1);
        assert!(matches!(simulate(&plant, &DMatrix::zeros(1, 3), &x0, 1, &w61(), &rows, None, None), Err(SimError::Dimension(_))));
        assert!(matches!(simulate(&plant, &DMatrix::zeros(1, 2), &x0, 0, &w61(), &rows, None, None), Err(SimError::NoSteps)));
    }

    #[test]
    fn lure_reference_gain_converges_within_constraints() {
        let a = mat(4, 4, &[1.0, 0.02, 0.0, 0.0, -0.972, 0.975, 0.972, 0.0, 0.0, 0.0, 1.0, 0.02, 0.39, 0.0, -0.334, 1.0]);
        let b = mat(4, 1, &[0.0, 0.432, 0.0, 0.0]);
        let e = mat(4, 1, &[0.0, 0.0, 0.0, -0.0666]);
        let h = mat(1, 4, &[0.0, 0.0, 1.0, 0.0]);
        let plant = Plant::Lure(LurePlant::new(a, b, e, h, Nonlinearity::SinPlusId, mat(1, 1, &[2.0])).unwrap());
        let k = mat(1, 4, &[-1.0342, -0.1949, -0.4329, -0.2236]);
        let hp = std::f64::consts::FRAC_PI_2;
        let rows = box_constraint_rows(4, 1, &[BoxBound::symmetric(0, hp), BoxBound::symmetric(2, hp)], &[BoxBound::symmetric(0, 2.0)]).unwrap();
        let w = Weights::new(DMatrix::from_diagonal(&DVector::from_row_slice(&[0.1, 0.01, 0.1, 0.01])), mat(1, 1, &[0.1])).unwrap();
        let x0 = DVector::from_row_slice(&[1.1, 0.2, 0.0, 0.0]);
        let sr = simulate(&plant, &k, &x0, 1000, &w, &rows, None, None).unwrap();
        assert!(sr.converged);
        assert!(sr.min_margin() >= 0.0);
        assert!(sr.sector_residuals.iter().all(|&s| s >= -1e-12));
    }

    #[test]
    fn failed_resolves_keep_the_gain() {
        let plant = sec61_mixture();
        let k = mat(1, 2, &[-0.6489, -0.3809]);
        let x0 = DVector::from_row_slice(&[0.95, 0.0]);
        let rows = ConstraintRows::empty(2, 1);
        let base = simulate(&plant, &k, &x0, 5, &w61(), &rows, None, None).unwrap();
        let mut never = |_: &DVector<f64>| None;
        let sr = simulate(&plant, &k, &x0, 5, &w61(), &rows, None, Some(&mut never)).unwrap();
        assert_eq!(sr.resolve_failures, vec![1, 2, 3, 4]);
        assert_eq!(sr.states, base.states);
    }

    #[test]
    fn bound_check_edges() {
        let mut sr = simulate(&sec61_mixture(), &DMatrix::zeros(1, 2), &DVector::zeros(2), 2, &w61(), &ConstraintRows::empty(2, 1), None, None).unwrap();
        assert_eq!(check_against_bound(&sr, 1.0), (true, 1.0));
        assert_eq!(accumulated_cost(&sr).total, 0.0);
        sr.total_cost = 2.5;
        assert!(check_against_bound(&sr, 2.5).0);
        assert!(!check_against_bound(&sr, 2.0).0);
    }
}
