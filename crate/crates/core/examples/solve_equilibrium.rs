// Solves the benchmark major-minor equilibrium on a modest grid and prints
// the Picard residuals and a few slices of the mean path.

use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, LqModel, MajorPath, StateGrid, TimeGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grids = Grids::new(StateGrid::new(-5.0, 5.0, 121)?, TimeGrid::new(1.0, 500)?);
    let model = LqModel::benchmark();
    let omega = JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0)?;
    let opts = EquilibriumOptions {
        tol: 1e-8,
        damping: 0.5,
        max_iter: 200,
    };
    let eq = solve_fixed_point(
        &model,
        &MajorPath::Integrated { initial: 1.5 },
        &vec![0.0; grids.time.steps()],
        &omega,
        &grids,
        &opts,
        None,
    )?;
    println!("converged = {} after {} iterations", eq.converged, eq.iterations);
    for (k, r) in eq.residual_history.iter().enumerate().step_by(4) {
        println!("  iter {k:3}  sup W2 change {r:.3e}");
    }
    let mean = eq.mean_state();
    for n in [0, 125, 250, 375, 500] {
        println!("t = {:.2}  mean state {:+.5}  major state {:+.5}", grids.time.time(n), mean[n], eq.x0[n]);
    }
    if !eq.converged {
        return Err("equilibrium did not converge".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
