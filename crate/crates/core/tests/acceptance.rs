//! Acceptance suite: one line per criterion with verdict and runtime.

use std::f64::consts::FRAC_PI_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ddmpc_core::cli::main_with_args;
use ddmpc_core::config::{preset_plant, ControllerFile};
use ddmpc_core::datalab::{consistency_residual, consistent_set, run_experiment, uniform_inputs, Dataset};
use ddmpc_core::io;
use ddmpc_core::lmi::{box_constraint_rows, build_nominal, ellipsoid_contained, finsler_check, BoxBound, ConstraintRow, ConstraintRows, FinslerPair, LmiProblem, Weights};
use ddmpc_core::matcore::{is_psd, schur_complement, spectral_radius, SymMatrix};
use ddmpc_core::plants::{LtiPlant, Plant};
use ddmpc_core::sdp::{self, check_solution, ConicProgram, SolveStatus, SolverSettings};
use ddmpc_core::simloop::simulate;
use ddmpc_core::synthesis::{solve_problem, synthesize_nominal, SynthError, SynthSettings};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn example_one() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    (mat(2, 2, &[1.0, 0.1, 0.0, 0.99]), mat(2, 2, &[1.0, 0.1, 0.0, 0.0]), mat(2, 1, &[0.0, 0.787]))
}

fn criterion_1() -> Outcome {
    let (a1, a2, b) = example_one();
    let k = mat(1, 2, &[-0.6489, -0.3809]);
    let r1 = spectral_radius(&(&a1 + &b * &k));
    let r2 = spectral_radius(&(&a2 + &b * &k));
    let detail = format!("radii {r1:.5}, {r2:.5}");
    ensure((r1 - 0.8610).abs() <= 1e-3 && (r2 - 0.9595).abs() <= 1e-3, detail.clone())?;
    Ok(detail)
}

fn repro(example: &str) -> Result<(tempfile::TempDir, ControllerFile), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join(example);
    let code = main_with_args(["ddmpc", "repro", example, "--out", out.to_str().unwrap()]);
    ensure(code == 0, format!("repro {example} exited with {code}"))?;
    let path = out.join("controller.json");
    let file: ControllerFile = io::from_json(&io::read_text(&path).map_err(|e| e.to_string())?, "controller.json").map_err(|e| e.to_string())?;
    ensure(file.solver_status == "optimal", format!("solver status {}", file.solver_status))?;
    Ok((dir, file))
}

fn criterion_2() -> Outcome {
    let (_dir, file) = repro("one")?;
    let c = &file.controller;
    let (a1, a2, b) = example_one();
    let radii = [spectral_radius(&(&a1 + &b * &c.k)), spectral_radius(&(&a2 + &b * &c.k))];
    ensure(radii.iter().all(|&r| r < 1.0 - 1e-4), format!("vertex radii {radii:?}"))?;
    let plant = preset_plant("one_mixture.toml").map_err(|e| e.to_string())?;
    let w = file.config.weights().map_err(|e| e.to_string())?;
    let rows = file.config.rows(2, 1).map_err(|e| e.to_string())?;
    let x0 = DVector::from_row_slice(&[0.95, 0.0]);
    let sr = simulate(&plant, &c.k, &x0, 2000, &w, &rows, Some(&c.p), None).map_err(|e| e.to_string())?;
    let umax = sr.max_input_abs();
    ensure(umax <= 1.0 + 1e-8, format!("max |u| = {umax}"))?;
    let kc = sr.convergence_step.ok_or("no convergence within 2000 steps")?;
    ensure(sr.total_cost <= c.alpha * (1.0 + 1e-6), format!("J = {} > alpha = {}", sr.total_cost, c.alpha))?;
    Ok(format!("alpha {:.4}, K {:?}, radii {:.4}/{:.4}, max |u| {umax:.4}, converged at {kc}, J {:.4}", c.alpha, c.k.as_slice(), radii[0], radii[1], sr.total_cost))
}

fn criterion_3() -> Outcome {
    let (_dir, file) = repro("two")?;
    let c = &file.controller;
    let plant = preset_plant("two_plant.toml").map_err(|e| e.to_string())?;
    let w = file.config.weights().map_err(|e| e.to_string())?;
    let rows = file.config.rows(4, 1).map_err(|e| e.to_string())?;
    let x0 = DVector::from_row_slice(&[1.1, 0.2, 0.0, 0.0]);
    let sr = simulate(&plant, &c.k, &x0, 2000, &w, &rows, Some(&c.p), None).map_err(|e| e.to_string())?;
    let umax = sr.max_input_abs();
    ensure(umax <= 2.0, format!("max |u| = {umax}"))?;
    let xmax = sr.states.iter().map(|x| x[0].abs().max(x[2].abs())).fold(0.0, f64::max);
    ensure(xmax <= FRAC_PI_2, format!("max |x1|,|x3| = {xmax}"))?;
    let worst = sr.worst_decrease().ok_or("no Lyapunov log")?;
    ensure(worst <= 1e-8 * c.alpha, format!("Lyapunov decrease violated by {worst:e}"))?;
    let sector = sr.sector_residuals.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(sector >= -1e-12, format!("sector residual {sector:e}"))?;
    ensure(sr.converged, "closed loop did not converge")?;
    Ok(format!("alpha {:.4}, K {:?}, max |u| {umax:.4}, max |x1|,|x3| {xmax:.4}, worst dV+l {worst:.2e}, min sector {sector:.2e}", c.alpha, c.k.as_slice()))
}

fn scalar_setup(t: usize) -> (Dataset, Weights, ConstraintRows, DVector<f64>) {
    let plant = Plant::Lti(LtiPlant::new(mat(1, 1, &[0.5]), mat(1, 1, &[1.0])).unwrap());
    let x0 = DVector::from_element(1, 0.5);
    let d = run_experiment(&plant, &x0, &uniform_inputs(&[1.0], t, 1), false).unwrap();
    let w = Weights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
    let rows = box_constraint_rows(1, 1, &[], &[BoxBound::symmetric(0, 10.0)]).unwrap();
    (d, w, rows, x0)
}

fn criterion_4() -> Outcome {
    let mut shapes = Vec::new();
    let mut alphas = Vec::new();
    for t in [10, 100, 1000] {
        let (d, w, rows, x0) = scalar_setup(t);
        let p = build_nominal(&d, &w, &rows, &x0).map_err(|e| e.to_string())?;
        shapes.push((p.num_coords(), p.block_sides()));
        let syn = synthesize_nominal(&d, &w, &rows, &x0, &SynthSettings::default()).map_err(|e| format!("T = {t}: {e}"))?;
        alphas.push(syn.controller.alpha);
    }
    ensure(shapes.windows(2).all(|s| s[0] == s[1]), format!("shapes differ: {shapes:?}"))?;
    let diffs = [(alphas[0] - alphas[1]).abs(), (alphas[0] - alphas[2]).abs(), (alphas[1] - alphas[2]).abs()];
    Ok(format!("{} vars, sides {:?}; alpha {:.6?}; |differences| {}", shapes[0].0, shapes[0].1, alphas, diffs.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", ")))
}

/// Rank-deficient experiment: zero input, feedback-generated input, or T < n + m.
fn deficient_dataset(i: usize, rng: &mut ChaCha8Rng) -> (Dataset, DMatrix<f64>, DMatrix<f64>) {
    let n = if i < 25 { 1 } else { 2 };
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.2..1.2));
    let b = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.2..1.5));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let kind = i % 3;
    let t = match kind {
        2 => rng.gen_range(1..=n),
        _ => rng.gen_range(3..=8),
    };
    let f = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-0.8..0.8));
    let mut x = DMatrix::zeros(n, t + 1);
    let mut u = DMatrix::zeros(1, t);
    x.set_column(0, &x0);
    for k in 0..t {
        let xk: DVector<f64> = x.column(k).into_owned();
        let uk = match kind {
            0 => 0.0,
            1 => (&f * &xk)[0],
            _ => rng.gen_range(-1.0..1.0),
        };
        u[(0, k)] = uk;
        let next = &a * &xk + &b * uk;
        x.set_column(k + 1, &next);
    }
    (Dataset::new(u, x, None).unwrap(), a, b)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_resid: f64 = 0.0;
    let (mut feasible, mut not_informative, mut other) = (0, 0, 0);
    let mut worst_radius: f64 = 0.0;
    for i in 0..50 {
        let (d, a, b) = deficient_dataset(i, &mut rng);
        let n = d.n();
        let cs = consistent_set(&d, false).map_err(|e| e.to_string())?;
        ensure(cs.regressor_rank < n + 1, format!("dataset {i} has full rank"))?;
        ensure(consistency_residual(&d, &a, &b, None).unwrap() < 1e-9, format!("dataset {i}: generator inconsistent"))?;
        for sys in cs.samples(20, 100 + i as u64, 1.0) {
            let r = consistency_residual(&d, &sys.a, &sys.b, None).map_err(|e| e.to_string())?;
            worst_resid = worst_resid.max(r);
        }
        let w = Weights::new(DMatrix::identity(n, n), DMatrix::identity(1, 1)).unwrap();
        let rows = box_constraint_rows(n, 1, &[], &[BoxBound::symmetric(0, 10.0)]).unwrap();
        let x0 = DVector::from_element(n, 0.5);
        match synthesize_nominal(&d, &w, &rows, &x0, &SynthSettings::default()) {
            Ok(syn) => {
                feasible += 1;
                for sys in cs.samples(20, 500 + i as u64, 1.0) {
                    let r = spectral_radius(&(&sys.a + &sys.b * &syn.controller.k));
                    worst_radius = worst_radius.max(r);
                }
            }
            Err(SynthError::NotInformative(_)) => not_informative += 1,
            Err(_) => other += 1,
        }
    }
    ensure(worst_resid < 1e-9, format!("sampled member residual {worst_resid:e}"))?;
    ensure(feasible == 0 || worst_radius < 1.0 - 1e-4, format!("a feasible synthesis leaves a sampled member at radius {worst_radius}"))?;
    Ok(format!(
        "max member residual {worst_resid:.2e}; syntheses: {feasible} feasible (max sampled radius {worst_radius:.4}), {not_informative} not informative, {other} solver/recovery failures"
    ))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut disagreements = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let g = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let p = SymMatrix::symmetrize(&g * g.transpose() + DMatrix::identity(2, 2) * 0.2);
        let alpha = rng.gen_range(0.2..3.0);
        let m = 1;
        let k = DMatrix::from_fn(m, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rows: Vec<ConstraintRow> = (0..rng.gen_range(1..=3))
            .map(|_| ConstraintRow { c: vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)], d: vec![rng.gen_range(-1.0..1.0)] })
            .collect();
        let rows = ConstraintRows { n: 2, m, rows };
        let verdict = ellipsoid_contained(&p, alpha, &rows, &k, 0.0).map_err(|e| e.to_string())?;
        // Boundary points x = sqrt(α) P^{-1/2} (cos θ, sin θ).
        let root = p.sqrt_psd(0.0).map_err(|e| e.to_string())?.inverse(f64::INFINITY).map_err(|e| e.to_string())?;
        let phase: f64 = rng.gen_range(0.0..1.0);
        let samples = 100_000;
        for (i, margin) in verdict.margins.iter().enumerate() {
            let wi = rows.combined(i, &k);
            let dir = (&wi * root.as_matrix() * alpha.sqrt()).transpose();
            let worst = (0..samples)
                .map(|s| {
                    let th = std::f64::consts::TAU * (s as f64 + phase) / samples as f64;
                    dir[0] * th.cos() + dir[1] * th.sin()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if margin.abs() > 1e-6 {
                checked += 1;
                let sampled_inside = worst <= 1.0;
                if sampled_inside != (*margin >= 0.0) {
                    disagreements += 1;
                }
            }
        }
    }
    ensure(disagreements == 0, format!("{disagreements} disagreements"))?;
    Ok(format!("{checked} rows compared, 0 disagreements"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut psd, mut mismatches) = (0, 0);
    for _ in 0..500 {
        let side = rng.gen_range(2..=6);
        let split = rng.gen_range(1..side);
        let g = DMatrix::from_fn(side, side, |_, _| rng.gen_range(-1.0..1.0));
        let shift = rng.gen_range(-0.6..0.6);
        let mut s = &g * g.transpose() + DMatrix::identity(side, side) * shift;
        let k2 = side - split;
        let s22 = s.view((split, split), (k2, k2)).into_owned();
        let lift = (0.01 - SymMatrix::symmetrize(s22).min_eigenvalue()).max(0.0) + rng.gen_range(0.001..0.5);
        for i in split..side {
            s[(i, i)] += lift;
        }
        let s = SymMatrix::symmetrize(s);
        let full = is_psd(&s, 1e-9);
        let sc = schur_complement(&s, split).map_err(|e| e.to_string())?;
        let s22 = SymMatrix::symmetrize(s.as_matrix().view((split, split), (k2, k2)).into_owned());
        let via = is_psd(&s22, 1e-9) && is_psd(&sc, 1e-9);
        psd += full as usize;
        mismatches += (full != via) as usize;
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches"))?;
    Ok(format!("500 matrices ({psd} PSD), 0 mismatches"))
}

fn one(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn criterion_8() -> Outcome {
    let s = SolverSettings::default();
    let mut cp = ConicProgram::new(vec![1.0]);
    cp.add_block("lyap", one(-1.0), vec![(0, one(0.75))]);
    cp.scalar_bounds[0] = Some(0.0);
    let sol = sdp::solve(&cp, &s).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal && (sol.point[0] - 4.0 / 3.0).abs() < 1e-6, format!("lyapunov: {:?} p = {}", sol.status, sol.point[0]))?;
    let lyap = sol.point[0];

    let mut cp = ConicProgram::new(vec![1.0]);
    cp.add_block("diag", DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, -1.0])), vec![(0, DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.0])))]);
    let sol = sdp::solve(&cp, &s).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Infeasible, format!("diag(t, -1): {:?}", sol.status))?;

    let mut problems: Vec<(String, LmiProblem)> = Vec::new();
    for t in [10, 100, 1000] {
        let (d, w, rows, x0) = scalar_setup(t);
        problems.push((format!("scalar T={t}"), build_nominal(&d, &w, &rows, &x0).unwrap()));
    }
    let (a1, a2, b) = example_one();
    let x0 = DVector::from_row_slice(&[0.95, 0.0]);
    let ds: Vec<Dataset> = [a1, a2]
        .iter()
        .enumerate()
        .map(|(j, a)| run_experiment(&Plant::Lti(LtiPlant::new(a.clone(), b.clone()).unwrap()), &x0, &uniform_inputs(&[1.0], 10, 1 + j as u64), false).unwrap())
        .collect();
    let w = Weights::new(DMatrix::identity(2, 2), one(0.01)).unwrap();
    let rows = box_constraint_rows(2, 1, &[], &[BoxBound::symmetric(0, 1.0)]).unwrap();
    problems.push(("polytopic".into(), ddmpc_core::lmi::build_polytopic(&ds, &w, &rows, &x0, false).unwrap()));
    problems.push(("polytopic per-vertex eps".into(), ddmpc_core::lmi::build_polytopic(&ds, &w, &rows, &x0, true).unwrap()));
    let mut optimal = 0;
    let ss = SynthSettings::default();
    for (name, p) in &problems {
        let Ok((sol, _)) = solve_problem(p, &ss) else { continue };
        optimal += 1;
        let rep = check_solution(p, &p.layout.to_point(&sol.point), 10.0 * ss.solver.feas_tol);
        let worst = rep.worst().map(|b| (b.name.clone(), b.min_eig));
        ensure(rep.pass, format!("{name}: check_solution fails ({worst:?})"))?;
    }
    ensure(optimal == problems.len(), format!("only {optimal}/{} problems solved", problems.len()))?;
    Ok(format!("p* = {lyap:.9}; diag(t, -1) infeasible; {optimal} optimal LMI points re-checked at 10 feas_tol"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = f64::INFINITY;
    let mut members = 0;
    for i in 0..50 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let t = rng.gen_range(1..=2 * (n + m));
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let plant = Plant::Lti(LtiPlant::new(a, b).unwrap());
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let d = run_experiment(&plant, &x0, &uniform_inputs(&vec![1.0; m], t, 900 + i), false).map_err(|e| e.to_string())?;
        let stack = d.data_stack(false).map_err(|e| e.to_string())?;
        let xi = SymMatrix::symmetrize(-(&stack * stack.transpose()));
        let side = 2 * n + m;
        let g = DMatrix::from_fn(side, rng.gen_range(1..=side), |_, _| rng.gen_range(-1.0..1.0));
        let s = SymMatrix::symmetrize(&g * g.transpose());
        let eps = rng.gen_range(0.1..10.0);
        let mm = s.axpy(eps, &xi);
        let fp = FinslerPair::new(mm, xi, n).map_err(|e| e.to_string())?;
        ensure(finsler_check(&fp, eps, 1e-9), format!("instance {i}: M - eps Xi not PSD"))?;
        let cs = consistent_set(&d, false).map_err(|e| e.to_string())?;
        for sys in cs.samples(20, 1000 + i, 1.0) {
            let mut z = DMatrix::zeros(n + m, n);
            z.view_mut((0, 0), (n, n)).copy_from(&sys.a.transpose());
            z.view_mut((n, 0), (m, n)).copy_from(&sys.b.transpose());
            let r = FinslerPair::restrict(&fp.m, n, &z).min_eigenvalue();
            worst = worst.min(r);
            members += 1;
        }
    }
    ensure(worst >= -1e-7, format!("restricted form min eig {worst:e}"))?;
    Ok(format!("50 instances, {members} sampled members, min restricted eigenvalue {worst:.3e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("example one reference-gain radii", criterion_1, Some(Duration::from_secs(1))),
        ("example one end-to-end", criterion_2, Some(Duration::from_secs(30))),
        ("example two end-to-end", criterion_3, Some(Duration::from_secs(60))),
        ("problem size independent of T", criterion_4, None),
        ("consistent-set soundness", criterion_5, None),
        ("ellipsoid containment oracle", criterion_6, None),
        ("Schur/PSD agreement", criterion_7, None),
        ("SDP contract", criterion_8, None),
        ("Finsler direction", criterion_9, None),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let res = match (res, budget) {
            (Ok(_), Some(b)) if took > *b => Err(format!("runtime {took:.2?} exceeds {b:?}")),
            (r, _) => r,
        };
        let (verdict, detail) = match &res {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => ("FAIL", e.clone()),
        };
        failed += res.is_err() as usize;
        println!("acceptance criterion {}: {verdict} ({:.3}s) {name}: {detail}", i + 1, took.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
