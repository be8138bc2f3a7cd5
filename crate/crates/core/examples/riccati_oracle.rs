// Compares the PDE equilibrium of the linear-quadratic benchmark with the
// Riccati/moment ODE solution, which is exact for this model.

use majorminor::major::oracle::{solve_lq_oracle, MajorControl, OracleSetup};
use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, LqModel, MajorPath, StateGrid, TimeGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let steps = 500;
    let grids = Grids::new(StateGrid::reference(), TimeGrid::new(1.0, steps)?);
    let model = LqModel::benchmark();
    let omega = JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0)?;
    let u0: Vec<f64> = (0..steps).map(|n| 0.3 * grids.time.time(n)).collect();
    let eq = solve_fixed_point(
        &model,
        &MajorPath::Integrated { initial: 1.5 },
        &u0,
        &omega,
        &grids,
        &EquilibriumOptions {
            tol: 1e-9,
            damping: 0.5,
            max_iter: 300,
        },
        None,
    )?;

    let h = grids.state.spacing();
    let m0 = omega.density();
    let mean0: f64 = grids.state.nodes().zip(m0).map(|(x, m)| h * m * x).sum();
    let var0: f64 = grids.state.nodes().zip(m0).map(|(x, m)| h * m * (x - mean0).powi(2)).sum();
    let oracle = solve_lq_oracle(
        &OracleSetup {
            params: *model.params(),
            time: grids.time,
            x0_init: 1.5,
            mean0,
            var0,
            refine: 20,
        },
        MajorControl::Path(&u0),
    )?;

    let mean = eq.mean_state();
    let gap = mean.iter().zip(&oracle.x_bar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let x0_gap = eq.x0.iter().zip(&oracle.x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{:>6} {:>12} {:>12}", "t", "PDE mean", "ODE mean");
    for n in (0..=steps).step_by(100) {
        println!("{:6.2} {:12.6} {:12.6}", grids.time.time(n), mean[n], oracle.x_bar[n]);
    }
    println!("sup |mean gap| = {gap:.2e}, sup |major gap| = {x0_gap:.2e}");
    println!("oracle costs: J0 = {:.6}, J1 = {:.6}", oracle.j0, oracle.j1);
    if gap > 2e-3 || x0_gap > 2e-3 {
        return Err(format!("PDE and oracle disagree ({gap:.2e}, {x0_gap:.2e})").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
