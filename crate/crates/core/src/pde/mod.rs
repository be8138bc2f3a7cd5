//! Finite-difference solvers for the forward Fokker-Planck equation of the
//! minor population and the backward HJB equation of the representative
//! agent, in the frozen-common-noise regime.
//!
//! Time indices run `0..=Nt`. The major control is piecewise constant, one
//! value per interval (see [`crate::grid::control_at`]); major states and laws
//! have one entry per time node.

mod fokker_planck;
mod hjb;
pub mod operators;

use std::path::Path;

pub use fokker_planck::{fp_forward, fp_forward_with, fp_velocities, FpStepper};
pub use hjb::{hjb_backward, hjb_backward_with, hjb_residual, HjbStepper};
pub use operators::{apply_a1, apply_a1_star, diffusion_coefficients};

use crate::error::{Error, Result};
use crate::grid::{control_at, Grids, StateGrid, TimeGrid};
use crate::measure::{fmt17, JointLaw};
use crate::model::{GameModel, LawSummary, MajorPoint, MinorPoint};

/// Major paths and the law summaries seen by the coefficients, per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub summaries: Vec<LawSummary>,
}

impl Environment {
    pub fn new(x0: Vec<f64>, u0: Vec<f64>, summaries: Vec<LawSummary>, time: &TimeGrid) -> Result<Self> {
        let n = time.steps();
        if x0.len() != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "major state path needs {} entries (got {})",
                n + 1,
                x0.len()
            )));
        }
        if u0.len() != n {
            return Err(Error::InvalidArgument(format!(
                "major control path needs {n} entries, one per interval (got {})",
                u0.len()
            )));
        }
        if summaries.len() != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "law path needs {} slices (got {})",
                n + 1,
                summaries.len()
            )));
        }
        if let Some(i) = x0.iter().chain(&u0).position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite major path entry {i}")));
        }
        Ok(Self { x0, u0, summaries })
    }

    /// Summarizes each slice of `pi_path` with the model's moments.
    pub fn from_laws<M: GameModel + ?Sized>(
        model: &M,
        pi_path: &[JointLaw],
        x0: &[f64],
        u0: &[f64],
        time: &TimeGrid,
    ) -> Result<Self> {
        let summaries = pi_path.iter().map(|law| model.summarize(law)).collect();
        Self::new(x0.to_vec(), u0.to_vec(), summaries, time)
    }

    pub fn u0_at(&self, n: usize) -> f64 {
        control_at(&self.u0, n)
    }

    pub fn minor(&self, n: usize, x: f64) -> MinorPoint<'_> {
        MinorPoint::new(x, self.x0[n], self.u0_at(n), &self.summaries[n])
    }

    pub fn major(&self, n: usize) -> MajorPoint<'_> {
        MajorPoint::new(self.x0[n], &self.summaries[n])
    }
}

/// Density per time node, with per-step conservation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPath {
    pub grids: Grids,
    pub m: Vec<Vec<f64>>,
    /// `|h·Σm − 1|` after each step, before any clipping.
    pub mass_defect: Vec<f64>,
    /// Total mass removed by positivity clipping over the run.
    pub clipped_mass: f64,
}

impl DensityPath {
    pub fn slice(&self, n: usize) -> &[f64] {
        &self.m[n]
    }

    pub fn mass(&self, n: usize) -> f64 {
        self.m[n].iter().sum::<f64>() * self.grids.state.spacing()
    }

    pub fn mean(&self, n: usize) -> f64 {
        let h = self.grids.state.spacing();
        self.grids.state.nodes().zip(&self.m[n]).map(|(x, m)| x * m * h).sum()
    }

    /// Largest density at either end node over the run; a truncation check.
    pub fn boundary_density(&self) -> f64 {
        self.m
            .iter()
            .map(|s| s[0].max(s[s.len() - 1]))
            .fold(0.0, f64::max)
    }

    /// Pairs each density slice with a feedback slice into a law path.
    pub fn to_laws(&self, feedback: &[Vec<f64>]) -> Result<Vec<JointLaw>> {
        self.m
            .iter()
            .zip(feedback)
            .map(|(m, u)| JointLaw::normalized(self.grids.state, m.clone(), u.clone()))
            .collect()
    }
}

/// Value field, its stored spatial gradient and the induced optimal feedback.
///
/// `dpsi[n] = D·Ψ^{n+1}` for `n < Nt` is the gradient the Hamiltonian saw
/// when stepping from `t_{n+1}` to `t_n`, and `feedback[n]` minimizes it;
/// `dpsi[Nt] = D·Ψ^{Nt}`. The martingale field of the backward equation is
/// identically zero in this regime and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePath {
    pub grids: Grids,
    pub psi: Vec<Vec<f64>>,
    pub dpsi: Vec<Vec<f64>>,
    pub feedback: Vec<Vec<f64>>,
}

/// `J1 = Σ_n dt·Σ_i h·m_i^n·f1(x_i, ·, û_i^n) + Σ_i h·m_i^N·h1(x_i, ·)`.
#[allow(non_snake_case)]
pub fn evaluate_J1<M: GameModel + ?Sized>(
    model: &M,
    density: &DensityPath,
    env: &Environment,
    feedback: &[Vec<f64>],
) -> Result<f64> {
    let g = density.grids.state;
    let t = density.grids.time;
    let (h, dt, big_n) = (g.spacing(), t.dt(), t.steps());
    let mut running = 0.0;
    for n in 0..big_n {
        let mut acc = 0.0;
        for (i, x) in g.nodes().enumerate() {
            acc += density.m[n][i] * model.f1(env.minor(n, x), feedback[n][i]);
        }
        running += dt * h * acc;
    }
    let terminal: f64 = g
        .nodes()
        .enumerate()
        .map(|(i, x)| h * density.m[big_n][i] * model.h1(env.minor(big_n, x)))
        .sum();
    crate::error::finite(running + terminal, "J1", || "quadrature".into())
}

/// Writes `x,psi,dpsi` rows.
pub fn write_value_csv(path: &Path, grid: &StateGrid, psi: &[f64], dpsi: &[f64]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,psi,dpsi")?;
    for ((x, p), d) in grid.nodes().zip(psi).zip(dpsi) {
        writeln!(out, "{},{},{}", fmt17(x), fmt17(*p), fmt17(*d))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn environment_validates_lengths() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        let s = vec![LawSummary::default(); 5];
        assert!(Environment::new(vec![0.0; 5], vec![0.0; 4], s.clone(), &t).is_ok());
        assert!(Environment::new(vec![0.0; 4], vec![0.0; 4], s.clone(), &t).is_err());
        assert!(Environment::new(vec![0.0; 5], vec![0.0; 5], s, &t).is_err());
    }

    struct UnitCost;

    impl GameModel for UnitCost {
        fn g0(&self, _: MajorPoint, _: f64) -> f64 {
            0.0
        }
        fn f0(&self, _: MajorPoint, _: f64) -> f64 {
            0.0
        }
        fn h0(&self, _: MajorPoint) -> f64 {
            0.0
        }
        fn g1(&self, _: MinorPoint, _: f64) -> f64 {
            0.0
        }
        fn f1(&self, _: MinorPoint, _: f64) -> f64 {
            1.0
        }
        fn h1(&self, _: MinorPoint) -> f64 {
            0.0
        }
        fn sigma1(&self, _: f64) -> f64 {
            0.3
        }
    }

    #[test]
    fn unit_running_cost_integrates_to_horizon() {
        let grids = Grids::new(StateGrid::new(-3.0, 3.0, 61).unwrap(), TimeGrid::new(2.0, 50).unwrap());
        let omega = JointLaw::gaussian(grids.state, 0.0, 0.5, |_| 0.0).unwrap();
        let fb = vec![vec![0.0; 61]; 51];
        let env = Environment::new(vec![0.0; 51], vec![0.0; 50], vec![LawSummary::default(); 51], &grids.time).unwrap();
        let dens = fp_forward_with(&UnitCost, &env, &fb, omega.density(), &grids).unwrap();
        assert!((evaluate_J1(&UnitCost, &dens, &env, &fb).unwrap() - 2.0).abs() < 1e-12);
    }
}
