// Measures how fast finite populations approach the mean field law: the
// median W2 distance between the empirical and limiting laws for growing N,
// next to the rate of plain iid sampling from the same law.

use majorminor::simulate::{empirical_consistency, iid_sampling_rate};
use majorminor::{solve_fixed_point, EquilibriumOptions, Grids, JointLaw, LqModel, MajorPath, StateGrid, TimeGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let steps = 250;
    let grids = Grids::new(StateGrid::new(-5.0, 5.0, 121)?, TimeGrid::new(1.0, steps)?);
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
    let n_list = [25, 100, 400];
    let rows = empirical_consistency(&model, &eq, &n_list, 5, 2024)?;
    let (iid, slope) = iid_sampling_rate(&eq.pi_path[steps], &n_list, 5, 2024)?;
    println!("{:>5} {:>12} {:>10} {:>12}", "N", "median W2", "IQR", "iid W2");
    for (r, s) in rows.iter().zip(&iid) {
        println!("{:5} {:12.5} {:10.5} {:12.5}", r.n, r.median_w2, r.iqr, s.median_w2);
    }
    println!("iid log-log slope {slope:.3}");
    if rows.last().map(|r| r.median_w2) >= rows.first().map(|r| r.median_w2) {
        return Err("empirical laws did not approach the limit".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
