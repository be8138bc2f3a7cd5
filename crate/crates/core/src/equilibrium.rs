//! Mean-field fixed point: the law path `Π*` reproduced by the optimal
//! feedback it induces, found by damped Picard iteration on `(m, û)`.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{control_at, Grids};
use crate::measure::{w2_1d, JointLaw};
use crate::model::{GameModel, MajorPoint, MinorPoint};
use crate::pde::{fp_forward_with, hjb_backward_with, DensityPath, Environment, FpStepper, ValuePath};

/// How the major state path is obtained during the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum MajorPath {
    /// Fixed, one entry per time node.
    Fixed(Vec<f64>),
    /// Integrated with explicit Euler, `x0_{n+1} = x0_n + dt·g0(x0_n, Π_n, u0_n)`,
    /// from the current law iterate before every best response.
    Integrated { initial: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOptions {
    /// Sup-over-time joint W2 tolerance.
    pub tol: f64,
    /// Mixing weight `α ∈ (0, 1]` of the best response.
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            damping: 0.5,
            max_iter: 200,
        }
    }
}

impl EquilibriumOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive (got {})", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1] (got {})", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    /// Seconds since the solve started.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    /// The last best response; its slices pair `density.m[n]` with `value.feedback[n]`.
    pub pi_path: Vec<JointLaw>,
    pub density: DensityPath,
    pub value: ValuePath,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Number of damped updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
}

impl EquilibriumSolution {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Environment seen by the coefficients at the returned law path.
    pub fn environment<M: GameModel + ?Sized>(&self, model: &M) -> Result<Environment> {
        Environment::from_laws(model, &self.pi_path, &self.x0, &self.u0, &self.density.grids.time)
    }

    pub fn mean_state(&self) -> Vec<f64> {
        (0..self.density.m.len()).map(|n| self.density.mean(n)).collect()
    }
}

/// Output of one application of the best-response map.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub pi_path: Vec<JointLaw>,
    pub density: DensityPath,
    pub value: ValuePath,
}

/// One application of `M`: backward HJB in the environment of `pi_path`,
/// forward FP under the resulting feedback, assembled into a new law path.
pub fn best_response_map<M: GameModel + ?Sized>(
    model: &M,
    pi_path: &[JointLaw],
    x0_path: &[f64],
    u0_path: &[f64],
    omega: &JointLaw,
    grids: &Grids,
) -> Result<BestResponse> {
    let env = Environment::from_laws(model, pi_path, x0_path, u0_path, &grids.time)?;
    best_response_in(model, &env, omega, grids)
}

pub fn best_response_in<M: GameModel + ?Sized>(
    model: &M,
    env: &Environment,
    omega: &JointLaw,
    grids: &Grids,
) -> Result<BestResponse> {
    let value = hjb_backward_with(model, env, grids)?;
    let density = fp_forward_with(model, env, &value.feedback, omega.density(), grids)?;
    let pi_path = density.to_laws(&value.feedback)?;
    Ok(BestResponse { pi_path, density, value })
}

/// `sup_n W2(a_n, b_n)`.
pub fn sup_w2(a: &[JointLaw], b: &[JointLaw]) -> f64 {
    a.par_iter()
        .zip(b.par_iter())
        .map(|(x, y)| w2_1d(x, y))
        .reduce(|| 0.0, f64::max)
}

/// Major path implied by a law path (integrated mode) or the fixed path.
pub fn major_states<M: GameModel + ?Sized>(
    model: &M,
    major: &MajorPath,
    pi_path: &[JointLaw],
    u0_path: &[f64],
    grids: &Grids,
) -> Result<Vec<f64>> {
    match major {
        MajorPath::Fixed(x0) => {
            if x0.len() != grids.time.steps() + 1 {
                return Err(Error::InvalidArgument(format!(
                    "major state path needs {} entries (got {})",
                    grids.time.steps() + 1,
                    x0.len()
                )));
            }
            Ok(x0.clone())
        }
        MajorPath::Integrated { initial } => {
            let dt = grids.time.dt();
            let mut x0 = Vec::with_capacity(pi_path.len());
            x0.push(*initial);
            for n in 0..grids.time.steps() {
                let s = model.summarize(&pi_path[n]);
                let g = model.g0(MajorPoint::new(x0[n], &s), control_at(u0_path, n));
                x0.push(crate::error::finite(x0[n] + dt * g, "g0", || format!("t_index={n}"))?);
            }
            Ok(x0)
        }
    }
}

/// Initial law path: `ω` carried forward with the feedback `u1 ≡ 0`, each
/// step seeing the law of the current slice. In integrated mode the major
/// state is carried along.
pub fn initial_guess<M: GameModel + ?Sized>(
    model: &M,
    major: &MajorPath,
    u0_path: &[f64],
    omega: &JointLaw,
    grids: &Grids,
) -> Result<Vec<JointLaw>> {
    let stepper = FpStepper::new(model, grids)?;
    let steps = grids.time.steps();
    let zeros = vec![0.0; grids.state.len()];
    let dt = grids.time.dt();
    let mut laws = Vec::with_capacity(steps + 1);
    let mut m = omega.density().to_vec();
    let mut x0 = match major {
        MajorPath::Fixed(p) => p[0],
        MajorPath::Integrated { initial } => *initial,
    };
    for n in 0..=steps {
        let law = JointLaw::normalized(grids.state, m.clone(), zeros.clone())?;
        if n == steps {
            laws.push(law);
            break;
        }
        let s = model.summarize(&law);
        let u0 = control_at(u0_path, n);
        if let MajorPath::Fixed(p) = major {
            x0 = p[n];
        }
        let v: Vec<f64> = grids
            .state
            .nodes()
            .map(|x| model.g1(MinorPoint::new(x, x0, u0, &s), 0.0))
            .collect();
        m = stepper.step(&m, &v, n)?.0;
        if let MajorPath::Integrated { .. } = major {
            x0 += dt * model.g0(MajorPoint::new(x0, &s), u0);
        }
        laws.push(law);
    }
    Ok(laws)
}

fn mix(current: &[JointLaw], response: &[JointLaw], alpha: f64) -> Result<Vec<JointLaw>> {
    current
        .iter()
        .zip(response)
        .map(|(a, b)| {
            let m = a.density().iter().zip(b.density()).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
            let u = a.feedback().iter().zip(b.feedback()).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
            JointLaw::normalized(*a.grid(), m, u)
        })
        .collect()
}

/// Damped Picard iteration for the fixed point `M(Π) = Π`.
///
/// Each round computes the best response to the current iterate and its
/// sup-over-time W2 distance to it; the iteration stops when that residual is
/// at most `tol` (with `iterations` counting the damped updates made so far)
/// or after `max_iter` updates. Non-convergence is reported, not an error.
/// `warm_start` replaces the default initial guess.
pub fn solve_fixed_point<M: GameModel + ?Sized>(
    model: &M,
    major: &MajorPath,
    u0_path: &[f64],
    omega: &JointLaw,
    grids: &Grids,
    options: &EquilibriumOptions,
    warm_start: Option<Vec<JointLaw>>,
) -> Result<EquilibriumSolution> {
    options.validate()?;
    if u0_path.len() != grids.time.steps() {
        return Err(Error::InvalidArgument(format!(
            "major control path needs {} entries (got {})",
            grids.time.steps(),
            u0_path.len()
        )));
    }
    if omega.grid() != &grids.state {
        return Err(Error::InvalidArgument("initial law lives on a different grid".into()));
    }
    let start = Instant::now();
    let mut pi = match warm_start {
        Some(w) if w.len() == grids.time.steps() + 1 => w,
        Some(w) => {
            return Err(Error::InvalidArgument(format!(
                "warm start has {} slices, expected {}",
                w.len(),
                grids.time.steps() + 1
            )))
        }
        None => initial_guess(model, major, u0_path, omega, grids)?,
    };
    let mut history = Vec::new();
    let mut records = Vec::new();
    let mut iterations = 0;
    loop {
        let x0 = major_states(model, major, &pi, u0_path, grids)?;
        let env = Environment::from_laws(model, &pi, &x0, u0_path, &grids.time)?;
        let br = best_response_in(model, &env, omega, grids)?;
        let residual = sup_w2(&br.pi_path, &pi);
        let wall_time = start.elapsed().as_secs_f64();
        log::info!("{iterations},{residual:e},{wall_time:.3}");
        history.push(residual);
        records.push(IterationRecord {
            iter: iterations,
            residual,
            wall_time,
        });
        let converged = residual <= options.tol;
        if converged || iterations >= options.max_iter || !residual.is_finite() {
            if !converged {
                log::warn!("fixed point not reached after {iterations} updates (residual {residual:e})");
            }
            return Ok(EquilibriumSolution {
                pi_path: br.pi_path,
                density: br.density,
                value: br.value,
                x0,
                u0: u0_path.to_vec(),
                residual_history: history,
                iterations,
                converged,
                records,
            });
        }
        pi = mix(&pi, &br.pi_path, options.damping)?;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{StateGrid, TimeGrid};
    use crate::model::lq::{LqModel, LqParams};

    fn grids(steps: usize) -> Grids {
        Grids::new(StateGrid::reference(), TimeGrid::new(1.0, steps).unwrap())
    }

    fn omega(g: &Grids) -> JointLaw {
        JointLaw::gaussian(g.state, 1.0, 0.5, |_| 0.0).unwrap()
    }

    #[test]
    fn decoupled_model_converges_in_one_update() {
        let g = grids(500);
        let m = LqModel::new(LqParams::decoupled()).unwrap();
        let opts = EquilibriumOptions {
            tol: 1e-10,
            damping: 1.0,
            max_iter: 10,
        };
        let sol = solve_fixed_point(&m, &MajorPath::Fixed(vec![1.5; 501]), &vec![0.0; 500], &omega(&g), &g, &opts, None).unwrap();
        assert!(sol.converged, "{:?}", sol.residual_history);
        assert_eq!(sol.iterations, 1);
        assert!(sol.final_residual() <= 1e-10);
    }

    #[test]
    fn loose_tolerance_returns_immediately() {
        let g = grids(500);
        let m = LqModel::benchmark();
        let opts = EquilibriumOptions {
            tol: 1e3,
            damping: 0.5,
            max_iter: 10,
        };
        let sol = solve_fixed_point(&m, &MajorPath::Fixed(vec![1.5; 501]), &vec![0.0; 500], &omega(&g), &g, &opts, None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn forced_non_convergence_is_reported() {
        let g = grids(500);
        let m = LqModel::benchmark();
        let opts = EquilibriumOptions {
            tol: 1e-12,
            damping: 0.5,
            max_iter: 1,
        };
        let sol = solve_fixed_point(&m, &MajorPath::Fixed(vec![1.5; 501]), &vec![0.0; 500], &omega(&g), &g, &opts, None).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.residual_history.len(), 2);
    }

    #[test]
    fn best_response_ignores_law_without_coupling() {
        let g = grids(500);
        let m = LqModel::new(LqParams::decoupled()).unwrap();
        let w = omega(&g);
        let a = vec![w.clone(); 501];
        let b = vec![JointLaw::gaussian(g.state, -1.0, 0.3, |x| x).unwrap(); 501];
        let x0 = vec![1.0; 501];
        let u0 = vec![0.2; 500];
        let ra = best_response_map(&m, &a, &x0, &u0, &w, &g).unwrap();
        let rb = best_response_map(&m, &b, &x0, &u0, &w, &g).unwrap();
        assert!(sup_w2(&ra.pi_path, &rb.pi_path) <= 1e-12);
    }

    #[test]
    fn solution_is_self_consistent() {
        let g = grids(500);
        let m = LqModel::benchmark();
        let sol = solve_fixed_point(
            &m,
            &MajorPath::Integrated { initial: 1.5 },
            &vec![0.0; 500],
            &omega(&g),
            &g,
            &EquilibriumOptions::default(),
            None,
        )
        .unwrap();
        assert!(sol.converged);
        for n in [0, 250, 500] {
            let law = &sol.pi_path[n];
            let h = g.state.spacing();
            let dm = law.density().iter().zip(&sol.density.m[n]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dm <= 1e-9 / h);
            assert_eq!(law.feedback(), &sol.value.feedback[n][..]);
        }
    }
}
