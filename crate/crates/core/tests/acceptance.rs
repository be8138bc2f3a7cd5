//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! Tests share one lock so wall-clock budgets are measured without
//! contention from the others.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use majorminor::major::oracle::{affine_family_search, frozen_minor_value, solve_lq_oracle, MajorControl, OracleSetup};
use majorminor::major::{evaluate_J0, gradient_pairing, optimize_u0, solve_adjoints, AdjointOptions, OptimizeOptions};
use majorminor::model::checks::check_lions_kernels;
use majorminor::model::{h1_stationarity, LawSummary};
use majorminor::pde::{fp_forward_with, hjb_backward_with, Environment};
use majorminor::simulate::{empirical_consistency, iid_sampling_rate};
use majorminor::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    // Written to the raw handle so the line survives libtest output capture.
    let line = format!("acceptance {id:>2} {name:<28} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
    assert!(pass, "acceptance {id} ({name}) failed: {detail}");
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const X0_INIT: f64 = 1.5;

fn benchmark_grids(steps: usize) -> Grids {
    Grids::new(StateGrid::reference(), TimeGrid::new(1.0, steps).unwrap())
}

fn omega(grids: &Grids) -> JointLaw {
    JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0).unwrap()
}

fn coupled_equilibrium(model: &LqModel, grids: &Grids, u0: &[f64], tol: f64, max_iter: usize) -> EquilibriumSolution {
    let opts = EquilibriumOptions {
        tol,
        damping: 0.5,
        max_iter,
    };
    solve_fixed_point(model, &MajorPath::Integrated { initial: X0_INIT }, u0, &omega(grids), grids, &opts, None).unwrap()
}

fn oracle_setup(params: LqParams, grids: &Grids) -> OracleSetup {
    let w = omega(grids);
    let h = grids.state.spacing();
    let mean0: f64 = grids.state.nodes().zip(w.density()).map(|(x, m)| h * m * x).sum();
    let var0 = grids.state.nodes().zip(w.density()).map(|(x, m)| h * m * (x - mean0).powi(2)).sum();
    OracleSetup {
        params,
        time: grids.time,
        x0_init: X0_INIT,
        mean0,
        var0,
        refine: 20,
    }
}

fn frozen_env(grids: &Grids) -> Environment {
    let n = grids.time.steps();
    Environment::new(vec![0.0; n + 1], vec![0.0; n], vec![LawSummary::from_slice(&[0.0, 0.0]); n + 1], &grids.time).unwrap()
}

/// W2 between a cell-uniform grid density and a Gaussian, by direct
/// quadrature of the quantile difference.
fn w2_to_gaussian(grid: &StateGrid, m: &[f64], mean: f64, var: f64) -> f64 {
    let normal = Normal::new(mean, var.sqrt()).unwrap();
    let h = grid.spacing();
    let total: f64 = m.iter().sum::<f64>() * h;
    let k = 20_000;
    let (mut i, mut below, mut acc) = (0usize, 0.0, 0.0);
    for j in 0..k {
        let s = (j as f64 + 0.5) / k as f64 * total;
        while i + 1 < m.len() && below + m[i] * h < s {
            below += m[i] * h;
            i += 1;
        }
        let q = grid.node(i) - 0.5 * h + (s - below) / m[i];
        acc += (q - normal.inverse_cdf(s / total)).powi(2);
    }
    (acc / k as f64).sqrt()
}

/// Linear drift `a·x` and constant volatility with no control: exact law is Gaussian.
fn gaussian_fp_run(a: f64, sigma1: f64, horizon: f64, nodes: usize) -> (f64, f64, f64) {
    let state = StateGrid::new(-6.0, 6.0, nodes).unwrap();
    let h = state.spacing();
    let steps = (horizon / (0.1 * h)).round() as usize;
    let grids = Grids::new(state, TimeGrid::new(horizon, steps).unwrap());
    let model = LqModel::new(LqParams {
        a,
        c: 0.0,
        d: 0.0,
        e: 0.0,
        sigma1,
        ..LqParams::default()
    })
    .unwrap();
    let start = omega(&grids);
    let fb = vec![vec![0.0; nodes]; steps + 1];
    let path = fp_forward_with(&model, &frozen_env(&grids), &fb, start.density(), &grids).unwrap();
    let mean = (a * horizon).exp();
    let var = if a == 0.0 {
        0.25 + sigma1 * sigma1 * horizon
    } else {
        let decay = (2.0 * a * horizon).exp();
        0.25 * decay + sigma1 * sigma1 / (-2.0 * a) * (1.0 - decay)
    };
    let m = &path.m[steps];
    let mu = path.mean(steps);
    let num_var: f64 = state.nodes().zip(m).map(|(x, v)| (x - mu).powi(2) * v * h).sum();
    (w2_to_gaussian(&state, m, mean, var), (num_var - var).abs(), var)
}

#[test]
fn fp_mass_conservation() {
    let _g = serial();
    let grids = benchmark_grids(2000);
    let model = LqModel::benchmark();
    let start = Instant::now();
    let eq = coupled_equilibrium(&model, &grids, &vec![0.0; 2000], 1e-4, 200);
    let wall = start.elapsed().as_secs_f64();
    let defect = eq.density.mass_defect.iter().copied().fold(0.0, f64::max);
    let clipped = eq.density.clipped_mass;
    let steps = eq.density.mass_defect.len();
    report(
        1,
        "fp-mass-conservation",
        steps == 2000 && defect <= 1e-10 && clipped <= 1e-6 && wall <= 10.0,
        format!("steps {steps}, max |mass-1| {defect:.2e}, clipped {clipped:.2e}, wall {wall:.2}s"),
    );
}

#[test]
fn fp_analytic_oracles() {
    let _g = serial();
    let start = Instant::now();
    let nodes = [61, 121, 241];
    let heat: Vec<_> = nodes.iter().map(|n| gaussian_fp_run(0.0, 0.5, 1.0, *n)).collect();
    let ou: Vec<_> = nodes.iter().map(|n| gaussian_fp_run(-1.0, 0.5, 4.0, *n)).collect();
    let orders = |e: &[(f64, f64, f64)]| [(e[0].0 / e[1].0).log2(), (e[1].0 / e[2].0).log2()];
    let (heat_order, ou_order) = (orders(&heat), orders(&ou));
    let heat_var_err = heat[2].1;
    let ou_w2 = ou[2].0;
    let wall = start.elapsed().as_secs_f64();
    let pass = heat_var_err <= 2e-2
        && ou_w2 <= 2e-2
        && heat_order.iter().chain(&ou_order).all(|p| *p >= 0.9)
        && wall <= 60.0;
    report(
        2,
        "fp-analytic-oracles",
        pass,
        format!(
            "heat variance error {heat_var_err:.2e} (W2 orders {:.2}, {:.2}); OU W2 {ou_w2:.2e} vs stationary variance {:.4} (orders {:.2}, {:.2}); wall {wall:.1}s",
            heat_order[0], heat_order[1], ou[2].2, ou_order[0], ou_order[1]
        ),
    );
}

#[test]
fn hjb_riccati_oracle() {
    let _g = serial();
    let grids = benchmark_grids(1000);
    let params = LqParams::default();
    let model = LqModel::new(params).unwrap();
    let env = frozen_env(&grids);
    let value = hjb_backward_with(&model, &env, &grids).unwrap();
    let (p, s) = frozen_minor_value(&params, &grids.time, 10).unwrap();
    let density = fp_forward_with(&model, &env, &value.feedback, omega(&grids).density(), &grids).unwrap();
    let (mut err, mut stat) = (0.0f64, 0.0f64);
    for n in 0..=grids.time.steps() {
        for (i, x) in grids.state.nodes().enumerate() {
            if density.m[n][i] > 1e-6 {
                err = err.max((value.psi[n][i] - 0.5 * p[n] * x * x - s[n]).abs());
                stat = stat.max(h1_stationarity(&model, env.minor(n, x), value.dpsi[n][i], value.feedback[n][i]).abs());
            }
        }
    }
    report(
        3,
        "hjb-riccati-oracle",
        err <= 1e-3 && stat <= 1e-5,
        format!("sup value error {err:.2e}, stationarity residual {stat:.2e} on the support"),
    );
}

#[test]
fn equilibrium_fixed_point() {
    let _g = serial();
    let grids = benchmark_grids(1000);
    let model = LqModel::benchmark();
    let u0 = vec![0.0; 1000];
    let eq = coupled_equilibrium(&model, &grids, &u0, 1e-4, 50);
    let br = best_response_map(&model, &eq.pi_path, &eq.x0, &eq.u0, &omega(&grids), &grids).unwrap();
    let recheck = sup_w2(&br.pi_path, &eq.pi_path);
    let oracle = solve_lq_oracle(&oracle_setup(*model.params(), &grids), MajorControl::Path(&u0)).unwrap();
    let mean_err = sup_abs_diff(&eq.mean_state(), &oracle.x_bar);
    report(
        4,
        "equilibrium-fixed-point",
        eq.converged && eq.iterations <= 50 && eq.final_residual() <= 1e-4 && recheck <= 1e-4 && mean_err <= 2e-3,
        format!(
            "{} iterations, residual {:.2e}, re-applied {recheck:.2e}, mean-state error {mean_err:.2e}",
            eq.iterations,
            eq.final_residual()
        ),
    );
}

use majorminor::equilibrium::sup_w2;

#[test]
fn adjoint_gradient_identity() {
    let _g = serial();
    let start = Instant::now();
    let grids = benchmark_grids(500);
    let model = LqModel::benchmark();
    let w = omega(&grids);
    let opts = EquilibriumOptions {
        tol: 1e-12,
        damping: 0.5,
        max_iter: 2000,
    };
    let major = MajorPath::Integrated { initial: X0_INIT };
    let u0: Vec<f64> = (0..500).map(|n| 0.2 * (3.0 * grids.time.time(n)).sin()).collect();
    let j0 = |u: &[f64], warm: &[JointLaw]| {
        let eq = solve_fixed_point(&model, &major, u, &w, &grids, &opts, Some(warm.to_vec())).unwrap();
        evaluate_J0(&model, &eq.x0, u, &eq.pi_path, &grids.time).unwrap()
    };
    let eq = solve_fixed_point(&model, &major, &u0, &w, &grids, &opts, None).unwrap();
    let bundle = solve_adjoints(&model, &eq, &AdjointOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let theta: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| u0.iter().zip(&theta).map(|(u, t)| u + s * t).collect::<Vec<f64>>();
        let fd = (j0(&shifted(eps), &eq.pi_path) - j0(&shifted(-eps), &eq.pi_path)) / (2.0 * eps);
        let an = gradient_pairing(&bundle.stationarity, &theta, &grids.time);
        worst = worst.max((fd - an).abs() / fd.abs());
    }
    let wall = start.elapsed().as_secs_f64();
    report(
        5,
        "adjoint-gradient-identity",
        worst <= 1e-3 && wall <= 300.0,
        format!("5 directions, worst relative error {worst:.2e}, wall {wall:.1}s"),
    );
}

#[test]
fn decoupled_degeneracy() {
    let _g = serial();
    let grids = benchmark_grids(1000);
    let params = LqParams::decoupled();
    let model = LqModel::new(params).unwrap();
    let u0: Vec<f64> = (0..1000).map(|n| 0.3 * (2.0 * grids.time.time(n)).cos() - 0.1).collect();
    let eq = coupled_equilibrium(&model, &grids, &u0, 1e-10, 200);
    let bundle = solve_adjoints(&model, &eq, &AdjointOptions::default()).unwrap();
    let sup_q = bundle.q.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let sup_r = bundle.r.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);

    // Major state and costate recursions of the decoupled problem.
    let dt = grids.time.dt();
    let mut x0 = vec![X0_INIT; 1001];
    for n in 0..1000 {
        x0[n + 1] = x0[n] + dt * (params.a0 * x0[n] + params.b0 * u0[n]);
    }
    let mut p = vec![params.gamma0 * x0[1000]; 1001];
    for n in (0..1000).rev() {
        p[n] = dt * x0[n] + (1.0 + dt * params.a0) * p[n + 1];
    }
    let p_err = sup_abs_diff(&bundle.p, &p);

    // Continuous costate ODE, RK4 against the interpolated state path.
    let x_at = |t: f64| {
        let s = (t / dt).min(999.999_999);
        let n = s.floor() as usize;
        x0[n] + (s - n as f64) * (x0[n + 1] - x0[n])
    };
    let rhs = |t: f64, p: f64| -(x_at(t) + params.a0 * p);
    let mut pc = vec![params.gamma0 * x0[1000]; 1001];
    for n in (0..1000).rev() {
        let (t, y) = (grids.time.time(n + 1), pc[n + 1]);
        let k1 = rhs(t, y);
        let k2 = rhs(t - 0.5 * dt, y - 0.5 * dt * k1);
        let k3 = rhs(t - 0.5 * dt, y - 0.5 * dt * k2);
        let k4 = rhs(t - dt, y - dt * k3);
        pc[n] = y - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let ode_gap = sup_abs_diff(&bundle.p, &pc);
    report(
        6,
        "decoupled-degeneracy",
        sup_q <= 1e-10 && sup_r <= 1e-10 && p_err <= 1e-5 && ode_gap <= 5.0 * dt,
        format!("sup|q| {sup_q:.1e}, sup|r| {sup_r:.1e}, p vs recursion {p_err:.1e}, p vs ODE {ode_gap:.1e}"),
    );
}

#[test]
fn major_optimization() {
    let _g = serial();
    let grids = benchmark_grids(1000);
    let w = omega(&grids);
    let opts = OptimizeOptions {
        x0_init: X0_INIT,
        ..OptimizeOptions::default()
    };
    let monotone = |h: &[f64]| h.windows(2).all(|p| p[1] < p[0]);

    let dec = LqModel::new(LqParams::decoupled()).unwrap();
    let d = optimize_u0(&dec, &w, &grids, &opts).unwrap();
    let oracle = solve_lq_oracle(&oracle_setup(LqParams::decoupled(), &grids), MajorControl::RiccatiFeedback).unwrap();
    let u_err = sup_abs_diff(&d.u0, &oracle.u0[..1000]);
    let gap = (d.j0() - oracle.j0).abs();

    let cpl = LqModel::benchmark();
    let c = optimize_u0(&cpl, &w, &grids, &opts).unwrap();
    let (_, search) =
        affine_family_search(&oracle_setup(LqParams::default(), &grids), [0.0, 0.0, -1.0], [2.0, 2.0, 2.0], 9, 6, 0.35).unwrap();
    let rel = (c.j0() - search) / search.abs();
    report(
        7,
        "major-optimization",
        u_err <= 5e-3 && gap <= 1e-3 && rel <= 1e-2 && monotone(&d.j0_history) && monotone(&c.j0_history),
        format!(
            "decoupled u0 error {u_err:.2e}, J0 gap {gap:.2e}; coupled J0 {:.6} vs affine search {search:.6} ({:+.2}%), {} outer iterations",
            c.j0(),
            100.0 * rel,
            c.outer_iterations
        ),
    );
}

#[test]
fn propagation_of_chaos() {
    let _g = serial();
    let grids = benchmark_grids(1000);
    let model = LqModel::benchmark();
    let eq = coupled_equilibrium(&model, &grids, &vec![0.0; 1000], 1e-8, 200);
    let rows = empirical_consistency(&model, &eq, &[50, 200, 800], 20, 1000).unwrap();
    let med: Vec<f64> = rows.iter().map(|r| r.median_w2).collect();
    let (_, slope) = iid_sampling_rate(&eq.pi_path[1000], &[50, 200, 800, 3200], 20, 5).unwrap();
    let pass = med.windows(2).all(|p| p[1] <= p[0]) && med[2] <= 0.5 * med[0] && (-0.7..=-0.3).contains(&slope);
    report(
        8,
        "propagation-of-chaos",
        pass,
        format!("median W2 {:.4} / {:.4} / {:.4} for N = 50 / 200 / 800, iid slope {slope:.3}", med[0], med[1], med[2]),
    );
}

#[test]
fn lions_oracle_agreement() {
    let _g = serial();
    let reports = check_lions_kernels(&LqModel::benchmark(), 256, 1e-5, 1e-4, 5, 7);
    let worst = reports.iter().map(|r| r.worst_error).fold(0.0, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    report(
        9,
        "lions-oracle-agreement",
        !reports.is_empty() && failed.is_empty() && worst <= 1e-4,
        format!("{} kernels, worst relative error {worst:.2e}, failing {failed:?}", reports.len()),
    );
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn determinism() {
    let _g = serial();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.ini");
    std::fs::write(
        &config,
        "[grid]\nnodes = 121\nsteps = 500\n[major]\nouter_max_iter = 3\n[simulation]\nn_agents = 300\nn_paths = 2\nn_list = 20,80\nseeds = 4\n",
    )
    .unwrap();
    let commands = ["solve-equilibrium", "optimize-major", "simulate", "lq-oracle", "verify"];
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for cmd in commands {
        let outs: Vec<_> = (0..2)
            .map(|k| {
                let out = tmp.path().join(format!("{cmd}-{k}"));
                let status = Command::new(env!("CARGO_BIN_EXE_majorminor"))
                    .args([cmd, "--quiet", "--seed", "11", "--config"])
                    .arg(&config)
                    .arg("--out")
                    .arg(&out)
                    .output()
                    .unwrap()
                    .status;
                (status.code(), if out.exists() { csv_files(&out) } else { Vec::new() })
            })
            .collect();
        compared += outs[0].1.len();
        if outs[0] != outs[1] {
            mismatched.push(cmd);
        }
    }
    report(
        10,
        "determinism",
        mismatched.is_empty() && compared > 0,
        format!("{compared} CSV artifacts compared across {} commands, mismatched {mismatched:?}", commands.len()),
    );
}
