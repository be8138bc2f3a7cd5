// A user-defined game: mean-reverting minors with a quartic control
// penalty, herding toward the population mean and a major player that
// pays for its distance to the crowd. No closed-form argmin is supplied,
// so the Hamiltonian is minimized numerically.

use majorminor::model::{KernelValue, MajorPoint, MinorPoint, Moments};
use majorminor::{solve_fixed_point, EquilibriumOptions, GameModel, Grids, JointLaw, MajorPath, StateGrid, TimeGrid};

struct Herding {
    pull: f64,
}

impl GameModel for Herding {
    fn name(&self) -> &str {
        "herding"
    }
    fn moment_count(&self) -> usize {
        1
    }
    fn moment_feature(&self, _k: usize, x: f64, _u: f64) -> KernelValue {
        KernelValue {
            value: x,
            d_state: 1.0,
            d_control: 0.0,
        }
    }
    fn g0(&self, _at: MajorPoint, u0: f64) -> f64 {
        u0
    }
    fn f0(&self, at: MajorPoint, u0: f64) -> f64 {
        0.5 * u0 * u0 + 0.5 * (at.x0 - at.law.get(0)).powi(2)
    }
    fn h0(&self, _at: MajorPoint) -> f64 {
        0.0
    }
    fn g1(&self, at: MinorPoint, u1: f64) -> f64 {
        -0.5 * at.x + u1
    }
    fn f1(&self, at: MinorPoint, u1: f64) -> f64 {
        0.5 * u1 * u1 + 0.25 * u1.powi(4) + 0.5 * self.pull * (at.x - at.law.get(0)).powi(2) + 0.1 * (at.x - at.x0).powi(2)
    }
    fn h1(&self, at: MinorPoint) -> f64 {
        0.5 * (at.x - at.law.get(0)).powi(2)
    }
    fn sigma1(&self, _x: f64) -> f64 {
        0.4
    }
    fn g1_u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        1.0
    }
    fn f1_u1(&self, _at: MinorPoint, u1: f64) -> f64 {
        u1 + u1.powi(3)
    }
    fn f1_x0(&self, at: MinorPoint, _u1: f64) -> f64 {
        -0.2 * (at.x - at.x0)
    }
    fn f0_x0(&self, at: MajorPoint, _u0: f64) -> f64 {
        at.x0 - at.law.get(0)
    }
    fn f0_u0(&self, _at: MajorPoint, u0: f64) -> f64 {
        u0
    }
    fn g0_u0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        1.0
    }
    fn f0_dlaw(&self, at: MajorPoint, _u0: f64) -> Moments {
        Moments::from_elem(at.law.get(0) - at.x0, 1)
    }
    fn f1_dlaw(&self, at: MinorPoint, _u1: f64) -> Moments {
        Moments::from_elem(self.pull * (at.law.get(0) - at.x), 1)
    }
    fn h1_dlaw(&self, at: MinorPoint) -> Moments {
        Moments::from_elem(at.law.get(0) - at.x, 1)
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grids = Grids::new(StateGrid::new(-4.0, 4.0, 81)?, TimeGrid::new(1.0, 200)?);
    let omega = JointLaw::gaussian(grids.state, -1.0, 0.6, |_| 0.0)?;
    let opts = EquilibriumOptions {
        tol: 1e-7,
        damping: 0.6,
        max_iter: 200,
    };
    for pull in [0.0, 1.0, 3.0] {
        let model = Herding { pull };
        let eq = solve_fixed_point(&model, &MajorPath::Integrated { initial: 1.0 }, &vec![0.2; 200], &omega, &grids, &opts, None)?;
        let end = eq.density.m.len() - 1;
        let h = grids.state.spacing();
        let mean = eq.density.mean(end);
        let var: f64 = grids.state.nodes().zip(&eq.density.m[end]).map(|(x, m)| h * m * (x - mean).powi(2)).sum();
        println!(
            "pull {pull:.1}: {} iterations, terminal mean {mean:+.4}, terminal variance {var:.4}",
            eq.iterations
        );
        if !eq.converged {
            return Err("custom model equilibrium did not converge".into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
