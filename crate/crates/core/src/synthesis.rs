//! End-to-end synthesis: build the LMI problem, solve it, recover `(K, P, α)`
//! and check every certificate against sampled consistent systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datalab::{consistent_set, ConsistentSet, DataError, Dataset, LureRecord, SystemMatrices};
use crate::io::MatrixRecord;
use crate::lmi::{self, ConstraintRows, DecisionPoint, LmiError, LmiProblem, Mode, Weights};
use crate::matcore::{self, SymMatrix};
use crate::plants::{default_sector_grid, sector_check, LtiPlant, LurePlant, Plant, PlantError};
use crate::sdp::{self, BlockResidual, SdpError, SolveStatus, Solution, SolverSettings};
use crate::simloop::{self, SimError};

/// Largest accepted condition number of `N`.
pub const MAX_N_CONDITION: f64 = 1e10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("informativity not established: {0}")]
    NotInformative(String),
    #[error("solver returned {status}: {message}")]
    Solver { status: &'static str, message: String },
    #[error("N is near-singular (condition {0:.3e})")]
    SingularN(f64),
    #[error("sector condition fails at z = {z} (product {product:.3e})")]
    Sector { z: f64, product: f64 },
    #[error("Lur'e synthesis needs recorded W_minus")]
    MissingW,
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub solver: SolverSettings,
    /// Tolerance for re-checking the raw LMI blocks at the returned point.
    pub check_tol: f64,
    /// Multiplier caps tried in order when the solver fails numerically.
    pub cap_ladder: Vec<f64>,
    pub per_vertex_epsilon: bool,
    pub verify: VerifyOptions,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let solver = SolverSettings::default();
        let cap = solver.multiplier_cap;
        Self { solver, check_tol: 1e-6, cap_ladder: vec![cap, cap / 10.0, cap / 100.0], per_vertex_epsilon: false, verify: VerifyOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    /// Consistent systems sampled per dataset (the particular solution counts).
    pub samples: usize,
    pub seed: u64,
    /// Null-space coefficients are drawn from `[-scale, scale]`.
    pub sample_scale: f64,
    /// Required stability margin: radius `< 1 − radius_margin`.
    pub radius_margin: f64,
    pub sim_steps: usize,
    /// Random vertex mixtures simulated in polytopic mode.
    pub mixtures: usize,
    /// Lyapunov decrease tolerance relative to α.
    pub lyapunov_rel_tol: f64,
    pub constraint_tol: f64,
    pub sector_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0x5eed,
            sample_scale: 1.0,
            radius_margin: 1e-4,
            sim_steps: 2000,
            mixtures: 10,
            lyapunov_rel_tol: 1e-8,
            constraint_tol: 1e-8,
            sector_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    #[serde(with = "mat")]
    pub k: DMatrix<f64>,
    #[serde(with = "mat")]
    pub p: DMatrix<f64>,
    pub alpha: f64,
    pub raw: DecisionPoint,
    pub mode: Mode,
    pub x0: Vec<f64>,
}

mod mat {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixRecord::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        MatrixRecord::deserialize(d)?.to_matrix("matrix").map_err(serde::de::Error::custom)
    }
}

impl Controller {
    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    /// `max |K·N − L| / max(1, |L|)` and the same for `P·N − αI`.
    pub fn recovery_residuals(&self) -> (f64, f64) {
        let n = &self.raw.n_mat;
        let kn = (&self.k * n - &self.raw.l).amax() / self.raw.l.amax().max(1.0);
        let pn = (&self.p * n - DMatrix::identity(n.nrows(), n.nrows()) * self.alpha).amax() / self.alpha.max(1.0);
        (kn, pn)
    }
}

/// `K = L N⁻¹`, `P = α N⁻¹` (symmetrized).
pub fn recover_gain(dp: &DecisionPoint) -> Result<(DMatrix<f64>, DMatrix<f64>), SynthError> {
    let cond = matcore::condition_number(&dp.n_mat);
    if !(cond <= MAX_N_CONDITION) {
        return Err(SynthError::SingularN(cond));
    }
    let n_inv = SymMatrix::symmetrize(dp.n_mat.clone()).inverse(f64::INFINITY).map_err(|_| SynthError::SingularN(cond))?;
    let k = &dp.l * n_inv.as_matrix();
    let p = SymMatrix::symmetrize(n_inv.as_matrix() * dp.alpha).into_matrix();
    Ok((k, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusEntry {
    pub source: String,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCheck {
    pub source: String,
    pub steps: usize,
    pub cost: f64,
    pub cost_ok: bool,
    /// Largest `V(k+1) − V(k) + ℓ(k)`.
    pub worst_decrease: Option<f64>,
    pub lyapunov_ok: bool,
    /// Largest `V(k+1) − V(k)`; nonpositive means the ellipsoid is invariant.
    pub worst_v_increase: Option<f64>,
    pub min_constraint_margin: f64,
    pub sector_min: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lmi_residuals: Vec<BlockResidual>,
    pub lmi_ok: bool,
    pub vertex_radii: Vec<RadiusEntry>,
    pub max_radius: f64,
    pub radii_ok: bool,
    pub ellipsoid_margins: Vec<f64>,
    pub ellipsoid_ok: bool,
    /// `x0ᵀ P x0 / α`.
    pub x0_level: f64,
    pub simulations: Vec<SimCheck>,
    pub lyapunov_ok: bool,
    pub cost_bound_ok: bool,
    pub constraints_ok: bool,
    pub sector_ok: Option<bool>,
    pub notes: Vec<String>,
    pub pass: bool,
}

/// Everything a synthesis run produces.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub controller: Controller,
    pub report: CertificateReport,
    pub problem: LmiProblem,
    pub solution: Solution,
    pub cap_used: f64,
    pub consistent: Vec<ConsistentSet>,
}

/// What the verifier simulates on besides the sampled consistent systems.
#[derive(Debug, Clone, Copy)]
pub struct VerifyContext<'a> {
    pub weights: &'a Weights,
    pub rows: &'a ConstraintRows,
    pub lure: Option<&'a LureRecord>,
}

pub fn synthesize_nominal(d: &Dataset, w: &Weights, rows: &ConstraintRows, x0: &DVector<f64>, s: &SynthSettings) -> Result<Synthesis, SynthError> {
    let problem = lmi::build_nominal(d, w, rows, x0)?;
    let sets = vec![consistent_set(d, false)?];
    run(problem, sets, VerifyContext { weights: w, rows, lure: None }, x0, s)
}

pub fn synthesize_polytopic(datasets: &[Dataset], w: &Weights, rows: &ConstraintRows, x0: &DVector<f64>, s: &SynthSettings) -> Result<Synthesis, SynthError> {
    let problem = lmi::build_polytopic(datasets, w, rows, x0, s.per_vertex_epsilon)?;
    let sets = datasets.iter().map(|d| consistent_set(d, false)).collect::<Result<Vec<_>, _>>()?;
    run(problem, sets, VerifyContext { weights: w, rows, lure: None }, x0, s)
}

pub fn synthesize_lure(
    d: &Dataset,
    w: &Weights,
    rows: &ConstraintRows,
    x0: &DVector<f64>,
    h: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    s: &SynthSettings,
) -> Result<Synthesis, SynthError> {
    if d.w_minus.is_none() {
        return Err(SynthError::MissingW);
    }
    let record = d.lure.as_ref().map(|r| LureRecord { h: h.clone(), gamma: r.gamma.clone(), beta: beta.clone() });
    if let Some(r) = &record {
        let slope = (0..beta.nrows()).map(|i| beta[(i, i)]).fold(f64::INFINITY, f64::min);
        let rep = sector_check(&r.gamma, slope, &default_sector_grid());
        if let Some(z) = rep.violating_z {
            return Err(SynthError::Sector { z, product: rep.min_product });
        }
    }
    let problem = lmi::build_lure(d, w, rows, x0, h, beta)?;
    let sets = vec![consistent_set(d, true)?];
    run(problem, sets, VerifyContext { weights: w, rows, lure: record.as_ref() }, x0, s)
}

/// Solves with each cap of the ladder until one returns optimal.
pub fn solve_problem(problem: &LmiProblem, s: &SynthSettings) -> Result<(Solution, f64), SynthError> {
    let ladder = if s.cap_ladder.is_empty() { vec![s.solver.multiplier_cap] } else { s.cap_ladder.clone() };
    let mut last = None;
    for cap in ladder {
        let settings = SolverSettings { multiplier_cap: cap, ..s.solver };
        let sol = sdp::solve(&sdp::lower(problem, &settings), &settings)?;
        match sol.status {
            SolveStatus::Optimal => return Ok((sol, cap)),
            SolveStatus::Infeasible => {
                return Err(SynthError::NotInformative(format!(
                    "LMI problem infeasible (phase-one violation {:.3e}); {}",
                    sol.phase_one_value, sol.message
                )))
            }
            SolveStatus::Unbounded => return Err(SynthError::Solver { status: sol.status.as_str(), message: sol.message }),
            SolveStatus::MaxIters | SolveStatus::NumericalFailure => last = Some(sol),
        }
    }
    let sol = last.expect("ladder is nonempty");
    Err(SynthError::Solver { status: sol.status.as_str(), message: sol.message })
}

fn run(problem: LmiProblem, sets: Vec<ConsistentSet>, ctx: VerifyContext<'_>, x0: &DVector<f64>, s: &SynthSettings) -> Result<Synthesis, SynthError> {
    let (solution, cap_used) = solve_problem(&problem, s)?;
    let raw = problem.layout.to_point(&solution.point);
    let check = sdp::check_solution(&problem, &raw, s.check_tol);
    if !check.pass {
        let worst = check.worst().map(|b| format!("{} min eig {:.3e}", b.name, b.min_eig)).unwrap_or_default();
        return Err(SynthError::Solver { status: "numerical_failure", message: format!("solver point fails the LMI re-check at tol {:.1e} ({worst})", s.check_tol) });
    }
    let (k, p) = recover_gain(&raw)?;
    let controller = Controller { k, p, alpha: raw.alpha, raw, mode: problem.mode, x0: x0.as_slice().to_vec() };
    let report = verify_certificate(&controller, &problem, &sets, ctx, &s.verify);
    Ok(Synthesis { controller, report, problem, solution, cap_used, consistent: sets })
}

fn plant_for(sys: &SystemMatrices, lure: Option<&LureRecord>) -> Result<Plant, PlantError> {
    match (lure, &sys.e) {
        (Some(r), Some(e)) => Ok(Plant::Lure(LurePlant::new(sys.a.clone(), sys.b.clone(), e.clone(), r.h.clone(), r.gamma.clone(), r.beta.clone())?)),
        _ => Ok(Plant::Lti(LtiPlant::new(sys.a.clone(), sys.b.clone())?)),
    }
}

fn sampled_systems(sets: &[ConsistentSet], opts: &VerifyOptions) -> Vec<(String, SystemMatrices)> {
    let mut out = Vec::new();
    for (j, cs) in sets.iter().enumerate() {
        for (i, sys) in cs.samples(opts.samples, opts.seed.wrapping_add(j as u64), opts.sample_scale).into_iter().enumerate() {
            let tag = if sets.len() > 1 { format!("vertex{}/sample{i}", j + 1) } else { format!("sample{i}") };
            out.push((tag, sys));
        }
    }
    if sets.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d1);
        let parts: Vec<SystemMatrices> = sets.iter().map(|c| c.particular_system()).collect();
        for i in 0..opts.mixtures {
            let raw: Vec<f64> = parts.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            let mut a = DMatrix::zeros(parts[0].a.nrows(), parts[0].a.ncols());
            let mut b = DMatrix::zeros(parts[0].b.nrows(), parts[0].b.ncols());
            for (lam, sys) in raw.iter().zip(&parts) {
                a += &sys.a * (lam / total);
                b += &sys.b * (lam / total);
            }
            out.push((format!("mixture{i}"), SystemMatrices { a, b, e: None }));
        }
    }
    out
}

fn simulate_check(source: String, plant: &Plant, ctrl: &Controller, ctx: VerifyContext<'_>, opts: &VerifyOptions) -> SimCheck {
    let mut chk = SimCheck {
        source,
        steps: opts.sim_steps,
        cost: f64::NAN,
        cost_ok: false,
        worst_decrease: None,
        lyapunov_ok: false,
        worst_v_increase: None,
        min_constraint_margin: f64::NAN,
        sector_min: None,
        converged: false,
        error: None,
    };
    match simloop::simulate(plant, &ctrl.k, &ctrl.x0(), opts.sim_steps, ctx.weights, ctx.rows, Some(&ctrl.p), None) {
        Ok(sr) => {
            let tol = opts.lyapunov_rel_tol * ctrl.alpha;
            chk.cost = sr.total_cost;
            chk.cost_ok = simloop::check_against_bound(&sr, ctrl.alpha).0;
            chk.worst_decrease = sr.worst_decrease();
            chk.lyapunov_ok = chk.worst_decrease.is_some_and(|d| d <= tol);
            chk.worst_v_increase = sr.lyapunov.windows(2).map(|w| w[1] - w[0]).reduce(f64::max);
            chk.min_constraint_margin = sr.min_margin();
            chk.sector_min = sr.sector_residuals.iter().copied().reduce(f64::min);
            chk.converged = sr.converged;
        }
        Err(e @ SimError::Divergence { .. }) | Err(e @ SimError::Plant { .. }) => chk.error = Some(e.to_string()),
        Err(e) => chk.error = Some(e.to_string()),
    }
    chk
}

/// Re-checks a controller against the LMI problem, the sampled consistent
/// systems of every dataset, the constraint rows and closed-loop simulations.
pub fn verify_certificate(ctrl: &Controller, problem: &LmiProblem, sets: &[ConsistentSet], ctx: VerifyContext<'_>, opts: &VerifyOptions) -> CertificateReport {
    let mut notes = Vec::new();
    let check = sdp::check_solution(problem, &ctrl.raw, 0.0);
    let lmi_ok = check.pass;

    let systems = sampled_systems(sets, opts);
    let vertex_radii: Vec<RadiusEntry> =
        systems.iter().map(|(src, sys)| RadiusEntry { source: src.clone(), radius: matcore::spectral_radius(&(&sys.a + &sys.b * &ctrl.k)) }).collect();
    let max_radius = vertex_radii.iter().map(|r| r.radius).fold(0.0, f64::max);
    let radii_ok = max_radius < 1.0 - opts.radius_margin;
    if sets.iter().any(|c| !c.is_unique()) {
        notes.push(format!("data are not full rank; {} consistent systems sampled per dataset", opts.samples));
    }

    let (ellipsoid_margins, ellipsoid_ok) = match lmi::ellipsoid_contained(&SymMatrix::symmetrize(ctrl.p.clone()), ctrl.alpha, ctx.rows, &ctrl.k, 0.0) {
        Ok(c) => (c.margins, c.all),
        Err(e) => {
            notes.push(format!("ellipsoid check failed: {e}"));
            (Vec::new(), false)
        }
    };
    let x0 = ctrl.x0();
    let x0_level = x0.dot(&(&ctrl.p * &x0)) / ctrl.alpha;

    let lure = if problem.mode == Mode::Lure { ctx.lure } else { None };
    if problem.mode == Mode::Lure && lure.is_none() {
        notes.push("no nonlinearity on record; closed-loop simulations skipped".into());
    }
    let simulations: Vec<SimCheck> = if problem.mode == Mode::Lure && lure.is_none() {
        Vec::new()
    } else {
        systems
            .iter()
            .map(|(src, sys)| match plant_for(sys, lure) {
                Ok(plant) => simulate_check(src.clone(), &plant, ctrl, ctx, opts),
                Err(e) => SimCheck {
                    source: src.clone(),
                    steps: 0,
                    cost: f64::NAN,
                    cost_ok: false,
                    worst_decrease: None,
                    lyapunov_ok: false,
                    worst_v_increase: None,
                    min_constraint_margin: f64::NAN,
                    sector_min: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    };
    let lyapunov_ok = simulations.iter().all(|c| c.lyapunov_ok);
    let cost_bound_ok = simulations.iter().all(|c| c.cost_ok);
    let constraints_ok = simulations.iter().all(|c| c.min_constraint_margin >= -opts.constraint_tol || c.min_constraint_margin.is_infinite());
    let sector_ok = lure.map(|_| simulations.iter().all(|c| c.sector_min.is_some_and(|s| s >= -opts.sector_tol)));
    for c in simulations.iter().filter(|c| c.error.is_some()) {
        notes.push(format!("{}: {}", c.source, c.error.as_deref().unwrap_or_default()));
    }
    let pass = lmi_ok && radii_ok && ellipsoid_ok && lyapunov_ok && cost_bound_ok && constraints_ok && sector_ok != Some(false);
    CertificateReport {
        lmi_residuals: check.blocks,
        lmi_ok,
        vertex_radii,
        max_radius,
        radii_ok,
        ellipsoid_margins,
        ellipsoid_ok,
        x0_level,
        simulations,
        lyapunov_ok,
        cost_bound_ok,
        constraints_ok,
        sector_ok,
        notes,
        pass,
    }
}

/// Verifier-only path for an externally supplied gain: closed-loop radii over
/// the given systems (no Lyapunov matrix, so no cost or decrease checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub radii: Vec<RadiusEntry>,
    pub max_radius: f64,
    pub stable: bool,
}

pub fn verify_gain(k: &DMatrix<f64>, systems: &[(String, SystemMatrices)], radius_margin: f64) -> GainReport {
    let radii: Vec<RadiusEntry> = systems.iter().map(|(s, sys)| RadiusEntry { source: s.clone(), radius: matcore::spectral_radius(&(&sys.a + &sys.b * k)) }).collect();
    let max_radius = radii.iter().map(|r| r.radius).fold(0.0, f64::max);
    GainReport { stable: max_radius < 1.0 - radius_margin, radii, max_radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalab::{run_experiment, uniform_inputs};
    use crate::lmi::{box_constraint_rows, BoxBound};

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn point(n_mat: DMatrix<f64>, l: DMatrix<f64>, alpha: f64) -> DecisionPoint {
        DecisionPoint { n_mat, l, alpha, eta: 1.0, epsilon: vec![1.0] }
    }

    #[test]
    fn recover_identity_and_scaling() {
        let (k, p) = recover_gain(&point(DMatrix::identity(2, 2), mat(1, 2, &[1.0, 2.0]), 3.0)).unwrap();
        assert_eq!(k, mat(1, 2, &[1.0, 2.0]));
        assert_eq!(p, DMatrix::identity(2, 2) * 3.0);
        let (k, p) = recover_gain(&point(DMatrix::identity(2, 2) * 2.0, mat(1, 2, &[2.0, 2.0]), 4.0)).unwrap();
        assert!((k - mat(1, 2, &[1.0, 1.0])).amax() < 1e-15);
        assert!((p - DMatrix::identity(2, 2) * 2.0).amax() < 1e-15);
    }

    #[test]
    fn recover_rejects_singular_n() {
        let err = recover_gain(&point(mat(2, 2, &[1.0, 0.0, 0.0, 1e-12]), mat(1, 2, &[1.0, 0.0]), 1.0)).unwrap_err();
        assert!(matches!(err, SynthError::SingularN(c) if c > 1e10));
    }

    #[test]
    fn recover_residual_identity_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let n_mat = &g * g.transpose() + DMatrix::identity(3, 3) * 0.1;
            let l = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-2.0..2.0));
            let dp = point(n_mat.clone(), l.clone(), 2.5);
            let (k, p) = recover_gain(&dp).unwrap();
            assert!((&k * &n_mat - &l).amax() < 1e-9);
            assert!((&p * &n_mat - DMatrix::identity(3, 3) * 2.5).amax() < 1e-9);
        }
    }

    fn scalar(t: usize, seed: u64) -> (Dataset, Weights, ConstraintRows, DVector<f64>) {
        let plant = Plant::Lti(LtiPlant::new(mat(1, 1, &[0.5]), mat(1, 1, &[1.0])).unwrap());
        let x0 = DVector::from_element(1, 0.5);
        let d = run_experiment(&plant, &x0, &uniform_inputs(&[1.0], t, seed), false).unwrap();
        let w = Weights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let rows = box_constraint_rows(1, 1, &[], &[BoxBound::symmetric(0, 10.0)]).unwrap();
        (d, w, rows, x0)
    }

    #[test]
    fn scalar_plant_is_stabilized() {
        let (d, w, rows, x0) = scalar(5, 11);
        let syn = synthesize_nominal(&d, &w, &rows, &x0, &SynthSettings::default()).unwrap();
        let k = syn.controller.k[(0, 0)];
        assert!((0.5 + k).abs() < 1.0, "K = {k}");
        assert!(syn.report.pass, "{:#?}", syn.report);
        let (kn, pn) = syn.controller.recovery_residuals();
        assert!(kn < 1e-7 && pn < 1e-7);
    }

    #[test]
    fn zero_data_is_not_informative() {
        let (mut d, w, rows, x0) = scalar(5, 11);
        d.x.fill(0.0);
        d.u_minus.fill(0.0);
        let err = synthesize_nominal(&d, &w, &rows, &x0, &SynthSettings::default()).unwrap_err();
        assert!(err.to_string().contains("informativity not established"), "{err}");
    }

    #[test]
    fn one_vertex_polytope_matches_nominal() {
        let (d, w, rows, x0) = scalar(8, 4);
        let s = SynthSettings::default();
        let a = synthesize_nominal(&d, &w, &rows, &x0, &s).unwrap();
        let b = synthesize_polytopic(std::slice::from_ref(&d), &w, &rows, &x0, &s).unwrap();
        assert!((&a.controller.k - &b.controller.k).amax() < 1e-9);
        assert!((a.controller.alpha - b.controller.alpha).abs() < 1e-9);
    }

    #[test]
    fn perturbed_gain_fails_verification() {
        let (d, w, rows, x0) = scalar(5, 11);
        let s = SynthSettings::default();
        let syn = synthesize_nominal(&d, &w, &rows, &x0, &s).unwrap();
        let mut bad = syn.controller.clone();
        bad.k[(0, 0)] += 1.5;
        let ctx = VerifyContext { weights: &w, rows: &rows, lure: None };
        let rep = verify_certificate(&bad, &syn.problem, &syn.consistent, ctx, &s.verify);
        assert!(!rep.radii_ok || !rep.lyapunov_ok);
        assert!(!rep.pass);
    }

    #[test]
    fn open_loop_stable_zero_gain() {
        let sys = SystemMatrices { a: mat(1, 1, &[0.5]), b: mat(1, 1, &[1.0]), e: None };
        let rep = verify_gain(&DMatrix::zeros(1, 1), &[("plant".into(), sys)], 1e-4);
        assert!(rep.stable && (rep.max_radius - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lure_without_w_is_rejected() {
        let (d, w, rows, x0) = scalar(5, 1);
        let err = synthesize_lure(&d, &w, &rows, &x0, &mat(1, 1, &[1.0]), &mat(1, 1, &[2.0]), &SynthSettings::default()).unwrap_err();
        assert!(matches!(err, SynthError::MissingW));
    }
}
