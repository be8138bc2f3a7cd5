// Checks the adjoint gradient of the major cost against central finite
// differences of the full equilibrium map along a random direction.

use majorminor::major::{evaluate_J0, gradient_pairing, solve_adjoints, AdjointOptions};
use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, LqModel, MajorPath, StateGrid, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let steps = 200;
    let grids = Grids::new(StateGrid::new(-4.0, 4.0, 81)?, TimeGrid::new(1.0, steps)?);
    let model = LqModel::benchmark();
    let omega = JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0)?;
    let major = MajorPath::Integrated { initial: 1.5 };
    let opts = EquilibriumOptions {
        tol: 1e-12,
        damping: 0.5,
        max_iter: 2000,
    };
    let u0: Vec<f64> = (0..steps).map(|n| 0.2 * (3.0 * grids.time.time(n)).sin()).collect();
    let cost = |u: &[f64]| -> Result<f64, Box<dyn std::error::Error>> {
        let eq = solve_fixed_point(&model, &major, u, &omega, &grids, &opts, None)?;
        Ok(evaluate_J0(&model, &eq.x0, u, &eq.pi_path, &grids.time)?)
    };
    let eq = solve_fixed_point(&model, &major, &u0, &omega, &grids, &opts, None)?;
    let bundle = solve_adjoints(&model, &eq, &AdjointOptions::default())?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let theta: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let analytic = gradient_pairing(&bundle.stationarity, &theta, &grids.time);
    for eps in [1e-2, 1e-3, 1e-4] {
        let shifted = |s: f64| u0.iter().zip(&theta).map(|(u, t)| u + s * t).collect::<Vec<f64>>();
        let fd = (cost(&shifted(eps))? - cost(&shifted(-eps))?) / (2.0 * eps);
        println!("eps {eps:.0e}: finite difference {fd:+.9}, adjoint {analytic:+.9}, rel err {:.2e}", (fd - analytic).abs() / fd.abs());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
