//! Cross-module invariant suite behind `majorminor verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cli::commands::Setup;
use crate::cli::config::RunConfig;
use crate::cli::{EXIT_OK, EXIT_VERIFY_FAILED};
use crate::equilibrium::{best_response_map, solve_fixed_point, sup_w2, EquilibriumOptions, EquilibriumSolution, MajorPath};
use crate::error::Result;
use crate::grid::StateGrid;
use crate::major::adjoint::{evaluate_J0, gradient_pairing, solve_adjoints, AdjointOptions};
use crate::measure::{w2_1d, JointLaw};
use crate::model::checks::{check_lions_kernels, check_partials, growth_spot_check, lipschitz_spot_check};
use crate::simulate::empirical_consistency;

/// Grids coarser than this only get the grid-independent checks.
pub const MIN_RESOLVED_NODES: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<Outcome>) -> Self {
        r.unwrap_or_else(|e| Self::new(name, false, format!("error: {e}")))
    }
}

fn random_law(rng: &mut ChaCha8Rng, grid: StateGrid) -> Result<JointLaw> {
    let (m1, m2) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let (s1, s2) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let w = rng.random_range(0.1..0.9);
    let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
    let density = grid.sample(|x| {
        w * (-0.5 * ((x - m1) / s1).powi(2)).exp() / s1 + (1.0 - w) * (-0.5 * ((x - m2) / s2).powi(2)).exp() / s2
    });
    JointLaw::normalized(grid, density, grid.sample(|x| a * x + b))
}

pub fn w2_axioms(seed: u64) -> Result<Outcome> {
    let grid = StateGrid::new(-4.0, 4.0, 161)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b, c) = (random_law(&mut rng, grid)?, random_law(&mut rng, grid)?, random_law(&mut rng, grid)?);
        let (ab, ba, bc, ac) = (w2_1d(&a, &b), w2_1d(&b, &a), w2_1d(&b, &c), w2_1d(&a, &c));
        worst = worst
            .max(w2_1d(&a, &a))
            .max((ab - ba).abs())
            .max(ac - ab - bc)
            .max(if ab > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(Outcome::new("w2-metric-axioms", worst <= 1e-12, format!("worst violation {worst:.3e}")))
}

pub fn lions_oracle(setup: &Setup, seed: u64) -> Outcome {
    let reports = check_lions_kernels(setup.model.as_ref(), 256, 1e-5, 1e-4, 3, seed);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let worst = reports.iter().map(|r| r.worst_error).fold(0.0, f64::max);
    let detail = if failed.is_empty() {
        format!("{} kernels, worst relative error {worst:.3e}", reports.len())
    } else {
        format!("mismatched kernels: {}", failed.join(", "))
    };
    Outcome::new("lions-oracle", failed.is_empty(), detail)
}

pub fn partials(setup: &Setup, seed: u64) -> Outcome {
    let reports = check_partials(setup.model.as_ref(), 20, 1e-6, seed);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let detail = if failed.is_empty() {
        format!("{} partials", reports.len())
    } else {
        format!("mismatched partials: {}", failed.join(", "))
    };
    Outcome::new("partial-derivatives", failed.is_empty(), detail)
}

pub fn declared_bounds(setup: &Setup, seed: u64) -> Outcome {
    let m = setup.model.as_ref();
    let lip = lipschitz_spot_check(m, 1000, seed);
    let growth = growth_spot_check(m, 1000, seed + 1);
    let ok = lip.is_none_or(|r| r <= 1.0) && growth.is_none_or(|r| r <= 1.0);
    let show = |r: Option<f64>| r.map_or("undeclared".to_string(), |v| format!("{v:.3}"));
    Outcome::new(
        "lipschitz-growth",
        ok,
        format!("worst ratio to declared constant: lipschitz {}, growth {}", show(lip), show(growth)),
    )
}

pub fn fp_mass(eq: &EquilibriumSolution) -> Outcome {
    let defect = eq.density.mass_defect.iter().copied().fold(0.0, f64::max);
    let clipped = eq.density.clipped_mass;
    Outcome::new(
        "fp-mass",
        defect <= 1e-10 && clipped <= 1e-6,
        format!("max mass defect {defect:.3e}, clipped {clipped:.3e}"),
    )
}

pub fn fixed_point_certificate(setup: &Setup, eq: &EquilibriumSolution, tol: f64) -> Result<Outcome> {
    let br = best_response_map(setup.model.as_ref(), &eq.pi_path, &eq.x0, &eq.u0, &setup.omega, &setup.grids)?;
    let change = sup_w2(&br.pi_path, &eq.pi_path);
    Ok(Outcome::new(
        "equilibrium-certificate",
        eq.converged && change <= tol,
        format!("converged = {}, re-applied change {change:.3e}", eq.converged),
    ))
}

/// Central differences of `J0` against the adjoint pairing along random directions.
pub fn adjoint_gradient(setup: &Setup, cfg: &RunConfig, directions: usize, seed: u64) -> Result<Outcome> {
    let model = setup.model.as_ref();
    let major = MajorPath::Integrated {
        initial: cfg.model.x0_init,
    };
    let opts = EquilibriumOptions {
        tol: 1e-12,
        damping: cfg.equilibrium.damping,
        max_iter: 20 * cfg.equilibrium.max_iter.max(50),
    };
    let solve = |u: &[f64], warm: Option<Vec<JointLaw>>| -> Result<(f64, EquilibriumSolution)> {
        let eq = solve_fixed_point(model, &major, u, &setup.omega, &setup.grids, &opts, warm)?;
        Ok((evaluate_J0(model, &eq.x0, u, &eq.pi_path, &setup.grids.time)?, eq))
    };
    let (_, eq) = solve(&setup.u0, None)?;
    let bundle = solve_adjoints(
        model,
        &eq,
        &AdjointOptions {
            tol: cfg.major.inner_tol,
            max_iter: cfg.major.inner_max_iter,
            damping: 1.0,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let theta: Vec<f64> = (0..setup.u0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| setup.u0.iter().zip(&theta).map(|(u, t)| u + s * t).collect::<Vec<f64>>();
        let (jp, _) = solve(&shifted(eps), Some(eq.pi_path.clone()))?;
        let (jm, _) = solve(&shifted(-eps), Some(eq.pi_path.clone()))?;
        let fd = (jp - jm) / (2.0 * eps);
        let an = gradient_pairing(&bundle.stationarity, &theta, &setup.grids.time);
        worst = worst.max((fd - an).abs() / fd.abs().max(1e-12));
    }
    Ok(Outcome::new(
        "adjoint-gradient",
        worst <= 1e-3,
        format!("{directions} directions, worst relative error {worst:.3e}"),
    ))
}

pub fn n_player_halving(setup: &Setup, cfg: &RunConfig, eq: &EquilibriumSolution) -> Result<Outcome> {
    let s = &cfg.simulation;
    let rows = empirical_consistency(setup.model.as_ref(), eq, &s.n_list, s.seeds, s.seed)?;
    let medians: Vec<f64> = rows.iter().map(|r| r.median_w2).collect();
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let halved = match (medians.first(), medians.last()) {
        (Some(a), Some(b)) if medians.len() > 1 => *b <= 0.5 * a,
        _ => false,
    };
    Ok(Outcome::new(
        "n-player-halving",
        monotone && halved,
        format!("median W2 {medians:.4?} for N = {:?}", s.n_list),
    ))
}

/// Runs every check, reporting each; returns the outcomes in order.
pub fn suite(cfg: &RunConfig) -> Result<Vec<Outcome>> {
    let setup = Setup::new(cfg)?;
    let seed = cfg.simulation.seed;
    let mut out = vec![
        Outcome::from_result("w2-metric-axioms", w2_axioms(seed)),
        lions_oracle(&setup, seed),
        partials(&setup, seed),
        declared_bounds(&setup, seed),
    ];
    if cfg.grid.nodes < MIN_RESOLVED_NODES {
        log::warn!(
            "grid has {} nodes (< {MIN_RESOLVED_NODES}); too coarse to resolve the PDE checks, running grid-independent checks only",
            cfg.grid.nodes
        );
        println!(
            "warning: {} grid nodes is below the resolution floor of {MIN_RESOLVED_NODES}; PDE, adjoint and simulation checks skipped",
            cfg.grid.nodes
        );
        return Ok(out);
    }
    match setup.solve(cfg) {
        Ok(eq) => {
            out.push(fp_mass(&eq));
            out.push(Outcome::from_result(
                "equilibrium-certificate",
                fixed_point_certificate(&setup, &eq, cfg.equilibrium.tol),
            ));
            out.push(Outcome::from_result("adjoint-gradient", adjoint_gradient(&setup, cfg, 2, seed)));
            out.push(Outcome::from_result("n-player-halving", n_player_halving(&setup, cfg, &eq)));
        }
        Err(e) => out.push(Outcome::new("equilibrium-solve", false, format!("error: {e}"))),
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, _quiet: bool) -> Result<i32> {
    let outcomes = suite(cfg)?;
    for o in &outcomes {
        println!("{} {:<24} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    match outcomes.iter().find(|o| !o.passed) {
        Some(first) => {
            eprintln!("verification failed: first failing check `{}`", first.name);
            Ok(EXIT_VERIFY_FAILED)
        }
        None => Ok(EXIT_OK),
    }
}
