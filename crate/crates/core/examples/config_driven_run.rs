// Builds a run configuration from text, inspects its normalized form and
// drives the same pipeline the command line tool uses.

use majorminor::cli::config::RunConfig;
use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, MajorPath, StateGrid, TimeGrid};

const CONFIG: &str = "
# coarse, fast variant of the benchmark
[grid]
nodes = 101
steps = 400
[model]
rho = 0.0
eta = 0.0
[equilibrium]
damping = 0.7
tol = 1e-7
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::parse(CONFIG)?;
    cfg.validate()?;
    println!("normalized configuration:\n{}", cfg.to_normalized());
    let model = majorminor::model::catalog::by_name(&cfg.model.name, cfg.model.params)?;
    let g = &cfg.grid;
    let grids = Grids::new(StateGrid::new(g.x_min, g.x_max, g.nodes)?, TimeGrid::new(g.horizon, g.steps)?);
    let omega = JointLaw::gaussian(grids.state, cfg.model.mean0, cfg.model.std0, |_| 0.0)?;
    let eq = solve_fixed_point(
        model.as_ref(),
        &MajorPath::Integrated {
            initial: cfg.model.x0_init,
        },
        &vec![cfg.equilibrium.u0; g.steps],
        &omega,
        &grids,
        &EquilibriumOptions {
            tol: cfg.equilibrium.tol,
            damping: cfg.equilibrium.damping,
            max_iter: cfg.equilibrium.max_iter,
        },
        None,
    )?;
    println!(
        "{}: converged = {} in {} iterations, terminal mean {:+.5}",
        model.name(),
        eq.converged,
        eq.iterations,
        eq.density.mean(g.steps)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
