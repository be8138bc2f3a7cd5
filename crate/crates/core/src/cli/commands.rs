use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::cli::config::{RunConfig, X0Mode};
use crate::cli::{EXIT_NOT_CONVERGED, EXIT_OK};
use crate::equilibrium::{solve_fixed_point, EquilibriumOptions, EquilibriumSolution, IterationRecord, MajorPath};
use crate::error::{Error, Result};
use crate::grid::{control_at, Grids, StateGrid, TimeGrid};
use crate::major::adjoint::AdjointOptions;
use crate::major::optimize::{optimize_u0, OptimizeOptions};
use crate::major::oracle::{solve_lq_oracle, LqOracle, MajorControl, OracleSetup};
use crate::measure::{fmt17, mean_control, mean_state, JointLaw};
use crate::model::{catalog, GameModel};
use crate::pde::write_value_csv;
use crate::simulate::{empirical_consistency, mc_cost, simulate_population, write_consistency_csv, Cost, SimConfig};

/// Everything a command needs, built from a validated config.
pub struct Setup {
    pub model: Box<dyn GameModel>,
    pub grids: Grids,
    pub omega: JointLaw,
    pub u0: Vec<f64>,
    pub major: MajorPath,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = catalog::by_name(&cfg.model.name, cfg.model.params)?;
        let g = &cfg.grid;
        let grids = Grids::new(StateGrid::new(g.x_min, g.x_max, g.nodes)?, TimeGrid::new(g.horizon, g.steps)?);
        let omega = JointLaw::gaussian(grids.state, cfg.model.mean0, cfg.model.std0, |_| 0.0)?;
        let major = match cfg.equilibrium.x0_mode {
            X0Mode::Fixed => MajorPath::Fixed(vec![cfg.model.x0_init; g.steps + 1]),
            X0Mode::Integrated => MajorPath::Integrated {
                initial: cfg.model.x0_init,
            },
        };
        Ok(Self {
            model,
            grids,
            omega,
            u0: vec![cfg.equilibrium.u0; g.steps],
            major,
        })
    }

    pub fn equilibrium_options(cfg: &RunConfig) -> EquilibriumOptions {
        EquilibriumOptions {
            tol: cfg.equilibrium.tol,
            damping: cfg.equilibrium.damping,
            max_iter: cfg.equilibrium.max_iter,
        }
    }

    pub fn solve(&self, cfg: &RunConfig) -> Result<EquilibriumSolution> {
        solve_fixed_point(
            self.model.as_ref(),
            &self.major,
            &self.u0,
            &self.omega,
            &self.grids,
            &Self::equilibrium_options(cfg),
            None,
        )
    }
}

/// Time indices that get a slice file: every `every`-th plus the last.
pub fn slice_indices(steps: usize, every: usize) -> Vec<usize> {
    (0..=steps).filter(|n| n % every == 0 || *n == steps).collect()
}

fn slice_name(prefix: &str, n: usize, steps: usize) -> String {
    let width = steps.to_string().len().max(4);
    format!("{prefix}_{n:0width$}.csv")
}

/// Writes `header` and one line per row.
pub fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(",")
}

fn write_manifest(dir: &Path, cfg: &RunConfig, command: &str, status: &str, started: Instant) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
    writeln!(out, "tool = majorminor {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "command = {command}")?;
    writeln!(out, "seed = {}", cfg.simulation.seed)?;
    writeln!(out, "status = {status}")?;
    writeln!(out, "wall_time_s = {:.3}", started.elapsed().as_secs_f64())?;
    writeln!(out, "threads = {}", rayon::current_num_threads())?;
    writeln!(out, "\n# Normalized configuration; rerun with `--config` on this block.")?;
    write!(out, "{}", cfg.to_normalized())?;
    out.flush()?;
    Ok(())
}

fn write_iteration_log(dir: &Path, records: &[IterationRecord]) -> Result<()> {
    write_rows(
        &dir.join("iterations.log"),
        "iter,residual,wall_time",
        records
            .iter()
            .map(|r| format!("{},{},{:.6}", r.iter, fmt17(r.residual), r.wall_time)),
    )
}

/// Law, value and summary-path artifacts of an equilibrium.
pub fn write_equilibrium(dir: &Path, cfg: &RunConfig, eq: &EquilibriumSolution) -> Result<()> {
    let grids = eq.density.grids;
    let steps = grids.time.steps();
    for n in slice_indices(steps, cfg.output.slice_every) {
        eq.pi_path[n].write_csv(&dir.join(slice_name("law", n, steps)))?;
        write_value_csv(&dir.join(slice_name("value", n, steps)), &grids.state, &eq.value.psi[n], &eq.value.dpsi[n])?;
    }
    write_rows(
        &dir.join("residuals.csv"),
        "iter,residual",
        eq.residual_history.iter().enumerate().map(|(i, r)| format!("{i},{}", fmt17(*r))),
    )?;
    write_iteration_log(dir, &eq.records)?;
    write_rows(
        &dir.join("paths.csv"),
        "t,x0,u0,mean_state,mean_control",
        (0..=steps).map(|n| {
            let law = &eq.pi_path[n];
            join(&[grids.time.time(n), eq.x0[n], control_at(&eq.u0, n), mean_state(law), mean_control(law)])
        }),
    )
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(())
}

pub fn solve_equilibrium(cfg: &RunConfig, quiet: bool) -> Result<i32> {
    let started = Instant::now();
    let setup = Setup::new(cfg)?;
    prepare(cfg)?;
    let eq = setup.solve(cfg)?;
    write_equilibrium(&cfg.output.dir, cfg, &eq)?;
    let status = if eq.converged { "converged" } else { "not-converged" };
    write_manifest(&cfg.output.dir, cfg, "solve-equilibrium", status, started)?;
    if !quiet {
        println!(
            "{status} after {} iterations, residual {:e}",
            eq.iterations,
            eq.final_residual()
        );
    }
    Ok(if eq.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn optimize_major(cfg: &RunConfig, quiet: bool) -> Result<i32> {
    let started = Instant::now();
    let setup = Setup::new(cfg)?;
    prepare(cfg)?;
    let options = OptimizeOptions {
        outer_tol: cfg.major.outer_tol,
        outer_max_iter: cfg.major.outer_max_iter,
        step: cfg.major.step,
        max_halvings: cfg.major.max_halvings,
        x0_init: cfg.model.x0_init,
        u0_init: Some(setup.u0.clone()),
        equilibrium: Setup::equilibrium_options(cfg),
        adjoint: AdjointOptions {
            tol: cfg.major.inner_tol,
            max_iter: cfg.major.inner_max_iter,
            damping: 1.0,
        },
    };
    let opt = optimize_u0(setup.model.as_ref(), &setup.omega, &setup.grids, &options)?;
    let dir = &cfg.output.dir;
    let time = setup.grids.time;
    let steps = time.steps();
    write_equilibrium(dir, cfg, &opt.eq)?;
    let b = &opt.bundle;
    write_rows(
        &dir.join("control.csv"),
        "t,u0,residual,p",
        (0..steps).map(|n| join(&[time.time(n), opt.u0[n], b.stationarity[n], b.p[n]])),
    )?;
    write_rows(
        &dir.join("costate.csv"),
        "t,p",
        (0..=steps).map(|n| join(&[time.time(n), b.p[n]])),
    )?;
    write_rows(
        &dir.join("j0_history.csv"),
        "iter,j0,residual",
        opt.j0_history
            .iter()
            .zip(&opt.residual_history)
            .enumerate()
            .map(|(i, (j, r))| format!("{i},{},{}", fmt17(*j), fmt17(*r))),
    )?;
    for n in slice_indices(steps, cfg.output.slice_every) {
        write_rows(
            &dir.join(slice_name("adjoint", n, steps)),
            "x,q,r",
            setup
                .grids
                .state
                .nodes()
                .enumerate()
                .map(|(i, x)| join(&[x, b.q[n][i], b.r[n][i]])),
        )?;
    }
    let done = opt.converged || cfg.major.outer_max_iter == 0;
    let status = if opt.converged { "converged" } else if done { "baseline" } else { "not-converged" };
    write_manifest(dir, cfg, "optimize-major", status, started)?;
    if !quiet {
        println!(
            "{status}: J0 = {:.10e} after {} outer iterations (residual {:e})",
            opt.j0(),
            opt.outer_iterations,
            opt.residual_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(if done { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn simulate(cfg: &RunConfig, quiet: bool) -> Result<i32> {
    let started = Instant::now();
    let setup = Setup::new(cfg)?;
    prepare(cfg)?;
    let eq = setup.solve(cfg)?;
    let dir = &cfg.output.dir;
    write_equilibrium(dir, cfg, &eq)?;
    let s = &cfg.simulation;
    let dt_sim = if s.dt_sim > 0.0 { s.dt_sim } else { setup.grids.time.dt() };
    let sim_cfg = SimConfig {
        n_agents: s.n_agents,
        n_paths: s.n_paths,
        seed: s.seed,
        dt_sim,
        horizon: setup.grids.time.horizon(),
        interaction: s.interaction,
        record_every: s.record_every,
    };
    let model = setup.model.as_ref();
    let traj = simulate_population(model, &eq.value.feedback, &eq.pi_path, &eq.x0, &eq.u0, &setup.grids, &sim_cfg)?;
    traj.write_csv(&dir.join("trajectories.csv"))?;
    let (j0, se0) = mc_cost(&traj, Cost::Major);
    let (j1, se1) = mc_cost(&traj, Cost::Minor);
    write_rows(
        &dir.join("costs.csv"),
        "cost,estimate,se",
        [format!("J0,{},{}", fmt17(j0), fmt17(se0)), format!("J1,{},{}", fmt17(j1), fmt17(se1))],
    )?;
    let rows = if setup.grids.time.steps() % 2 == 0 {
        empirical_consistency(model, &eq, &s.n_list, s.seeds, s.seed)?
    } else {
        log::warn!("odd number of time steps; skipping the consistency table");
        Vec::new()
    };
    write_consistency_csv(&dir.join("consistency.csv"), &rows)?;
    let status = if eq.converged { "converged" } else { "not-converged" };
    write_manifest(dir, cfg, "simulate", status, started)?;
    if !quiet {
        println!("J0 = {j0:.6e} ± {se0:.1e}, J1 = {j1:.6e} ± {se1:.1e}");
        for r in &rows {
            println!("N = {:>6}: median W2 {:.4e} (IQR {:.2e})", r.n, r.median_w2, r.iqr);
        }
    }
    Ok(if eq.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Oracle setup matching the discretized initial law of `setup`.
pub fn oracle_setup(cfg: &RunConfig, setup: &Setup) -> OracleSetup {
    let mean0 = mean_state(&setup.omega);
    let h = setup.grids.state.spacing();
    let var0 = setup
        .grids
        .state
        .nodes()
        .zip(setup.omega.density())
        .map(|(x, m)| h * m * (x - mean0).powi(2))
        .sum();
    OracleSetup {
        params: cfg.model.params,
        time: setup.grids.time,
        x0_init: cfg.model.x0_init,
        mean0,
        var0,
        refine: 20,
    }
}

fn write_oracle(path: &Path, o: &LqOracle) -> Result<()> {
    write_rows(
        path,
        "t,P,phi,s,p0,x_bar,u_bar,var,x0,u0",
        (0..o.t.len()).map(|n| join(&[o.t[n], o.p[n], o.phi[n], o.s[n], o.p0[n], o.x_bar[n], o.u_bar[n], o.var[n], o.x0[n], o.u0[n]])),
    )
}

pub fn lq_oracle(cfg: &RunConfig, quiet: bool) -> Result<i32> {
    let started = Instant::now();
    if cfg.model.name != "lq" {
        return Err(Error::InvalidParameters(format!(
            "the oracle covers the `lq` model only (config selects `{}`)",
            cfg.model.name
        )));
    }
    if cfg.equilibrium.x0_mode == X0Mode::Fixed {
        log::warn!("the oracle integrates the major state; x0_mode = fixed is ignored");
    }
    let setup = Setup::new(cfg)?;
    prepare(cfg)?;
    let os = oracle_setup(cfg, &setup);
    let given = solve_lq_oracle(&os, MajorControl::Path(&setup.u0))?;
    let riccati = solve_lq_oracle(&os, MajorControl::RiccatiFeedback)?;
    let dir = &cfg.output.dir;
    write_oracle(&dir.join("oracle.csv"), &given)?;
    write_oracle(&dir.join("oracle_riccati.csv"), &riccati)?;
    write_rows(
        &dir.join("oracle_summary.csv"),
        "control,j0,j1,shooting_residual",
        [("given", &given), ("riccati", &riccati)]
            .iter()
            .map(|(name, o)| format!("{name},{}", join(&[o.j0, o.j1, o.shooting_residual]))),
    )?;
    write_manifest(dir, cfg, "lq-oracle", "ok", started)?;
    if !quiet {
        println!("oracle J0 = {:.10e} (given u0), {:.10e} (Riccati feedback)", given.j0, riccati.j0);
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_include_both_ends() {
        assert_eq!(slice_indices(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(slice_indices(3, 1), vec![0, 1, 2, 3]);
        assert_eq!(slice_name("law", 7, 1000), "law_0007.csv");
        assert_eq!(slice_name("law", 7, 20000), "law_00007.csv");
    }
}
