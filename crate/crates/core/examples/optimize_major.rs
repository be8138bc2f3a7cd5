// Optimizes the major player's open-loop control with the adjoint gradient
// and compares the result with the Riccati optimum of the decoupled game.

use majorminor::major::oracle::{solve_lq_oracle, MajorControl, OracleSetup};
use majorminor::major::{optimize_u0, OptimizeOptions};
use majorminor::{Grids, JointLaw, LqModel, LqParams, StateGrid, TimeGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grids = Grids::new(StateGrid::new(-5.0, 5.0, 121)?, TimeGrid::new(1.0, 500)?);
    let params = LqParams::decoupled();
    let model = LqModel::new(params)?;
    let omega = JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0)?;
    let opts = OptimizeOptions {
        x0_init: 1.5,
        outer_max_iter: 100,
        ..OptimizeOptions::default()
    };
    let opt = optimize_u0(&model, &omega, &grids, &opts)?;
    for (k, (j, r)) in opt.j0_history.iter().zip(&opt.residual_history).enumerate() {
        println!("outer {k:2}: J0 = {j:.8}, stationarity {r:.2e}");
    }
    let oracle = solve_lq_oracle(
        &OracleSetup {
            params,
            time: grids.time,
            x0_init: 1.5,
            mean0: 1.0,
            var0: 0.25,
            refine: 20,
        },
        MajorControl::RiccatiFeedback,
    )?;
    let gap = opt.u0.iter().zip(&oracle.u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("J0 adjoint descent {:.6}, Riccati {:.6}; sup |u0 gap| {gap:.2e}", opt.j0(), oracle.j0);
    if !opt.converged || gap > 5e-3 {
        return Err(format!("optimizer missed the Riccati control by {gap:.2e}").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
