// Simulates a finite population under the equilibrium feedback, both with
// the limiting law held fixed and with agents interacting through their own
// empirical law, and compares Monte Carlo costs with the PDE quadrature.

use majorminor::pde::evaluate_J1;
use majorminor::simulate::{mc_cost, simulate_population, Cost, Interaction, SimConfig};
use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, LqModel, MajorPath, StateGrid, TimeGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let steps = 500;
    let grids = Grids::new(StateGrid::new(-5.0, 5.0, 201)?, TimeGrid::new(1.0, steps)?);
    let model = LqModel::benchmark();
    let omega = JointLaw::gaussian(grids.state, 1.0, 0.5, |_| 0.0)?;
    let eq = solve_fixed_point(
        &model,
        &MajorPath::Integrated { initial: 1.5 },
        &vec![0.0; steps],
        &omega,
        &grids,
        &EquilibriumOptions {
            tol: 1e-8,
            damping: 0.5,
            max_iter: 200,
        },
        None,
    )?;
    let env = eq.environment(&model)?;
    let feedback: Vec<Vec<f64>> = eq.pi_path.iter().map(|l| l.feedback().to_vec()).collect();
    let j1 = evaluate_J1(&model, &eq.density, &env, &feedback)?;
    println!("PDE quadrature J1 = {j1:.5}");
    for interaction in [Interaction::MeanField, Interaction::Empirical] {
        let cfg = SimConfig {
            interaction,
            record_every: 100,
            ..SimConfig::new(2000, 42, 2e-3, 1.0)
        };
        let traj = simulate_population(&model, &feedback, &eq.pi_path, &eq.x0, &eq.u0, &grids, &cfg)?;
        let (c1, s1) = mc_cost(&traj, Cost::Minor);
        let (c0, _) = mc_cost(&traj, Cost::Major);
        println!("{interaction:?}: minor cost {c1:.5} ± {s1:.5}, major cost {c0:.5}, clamped {:.1e}", traj.clamp_fraction);
        for (k, t) in traj.times.iter().enumerate() {
            let xs = &traj.paths[0].states[k];
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            println!("  t = {t:.2}: population mean {mean:+.4}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
