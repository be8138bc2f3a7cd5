// Joint state-control laws: Wasserstein distances between grid laws and
// particle clouds, and the finite-difference Lions derivative oracle.

use majorminor::measure::{grid_to_empirical, lions_fd_oracle, mean_state, second_moment, w2_1d};
use majorminor::{EmpiricalJointLaw, JointLaw, StateGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grid = StateGrid::new(-6.0, 6.0, 481)?;
    let a = JointLaw::gaussian(grid, 0.0, 1.0, |x| -0.5 * x)?;
    let b = JointLaw::gaussian(grid, 1.0, 1.0, |x| -0.5 * x)?;
    let c = JointLaw::gaussian(grid, 0.0, 0.5, |x| x)?;
    println!("W2(a, b) = {:.5}  (pure shift of 1)", w2_1d(&a, &b));
    println!("W2(a, c) = {:.5}", w2_1d(&a, &c));
    println!("W2(b, c) = {:.5}", w2_1d(&b, &c));

    for n in [100, 1000, 10000] {
        let cloud = grid_to_empirical(&a, n, 7)?;
        println!("N = {n:5}: W2(cloud, a) = {:.4}", w2_1d(&cloud, &a));
    }

    // The lift derivative of F = (E x)² + E[x² + u²] is 2·E x + 2x in the
    // state direction and 2u in the control direction.
    let emp = EmpiricalJointLaw::uniform(&[-1.0, 0.5, 2.0], &[0.2, -0.4, 1.0])?;
    let f = |e: &EmpiricalJointLaw| mean_state(e).powi(2) + second_moment(e);
    let mx = mean_state(&emp);
    for (i, p) in emp.particles().iter().enumerate() {
        let dx = lions_fd_oracle(&f, &emp, i, (1.0, 0.0), 1e-5)?;
        let du = lions_fd_oracle(&f, &emp, i, (0.0, 1.0), 1e-5)?;
        println!(
            "particle {i}: d/dx {dx:+.6} (exact {:+.6}), d/du {du:+.6} (exact {:+.6})",
            2.0 * mx + 2.0 * p.state,
            2.0 * p.control
        );
        if (dx - 2.0 * mx - 2.0 * p.state).abs() > 1e-6 || (du - 2.0 * p.control).abs() > 1e-6 {
            return Err("Lions oracle disagrees with the exact derivative".into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
