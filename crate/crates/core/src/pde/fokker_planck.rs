use crate::error::{finite, Error, Result};
use crate::grid::Grids;
use crate::measure::JointLaw;
use crate::model::GameModel;
use crate::pde::operators::{diffusion_coefficients, fp_implicit_matrix, TridiagonalLu};
use crate::pde::{DensityPath, Environment};

/// Drift `v_i = g1(x_i, x0_n, u0_n, Π_n, û_i)` at every node.
pub fn fp_velocities<M: GameModel + ?Sized>(
    model: &M,
    env: &Environment,
    feedback: &[f64],
    n: usize,
    grids: &Grids,
) -> Result<Vec<f64>> {
    grids
        .state
        .nodes()
        .zip(feedback)
        .map(|(x, &u)| finite(model.g1(env.minor(n, x), u), "g1", || format!("x={x}, t_index={n}, u1={u}")))
        .collect()
}

/// One explicit upwind advection step followed by an implicit diffusion step,
/// `B·m^{n+1} = m^n − (dt/h)·(F_{i+1/2} − F_{i−1/2})` with
/// `F_{i+1/2} = v_i⁺·m_i + v_{i+1}⁻·m_{i+1}`, zero flux through both ends and
/// `B = I − dt·L`.
#[derive(Debug, Clone)]
pub struct FpStepper {
    lu: TridiagonalLu,
    h: f64,
    dt: f64,
}

impl FpStepper {
    pub fn new<M: GameModel + ?Sized>(model: &M, grids: &Grids) -> Result<Self> {
        let a1 = diffusion_coefficients(&grids.state, |x| model.sigma1(x));
        let (h, dt) = (grids.state.spacing(), grids.time.dt());
        Ok(Self {
            lu: fp_implicit_matrix(&a1, h, dt).factor()?,
            h,
            dt,
        })
    }

    pub fn lu(&self) -> &TridiagonalLu {
        &self.lu
    }

    /// Advective Courant number `max|v|·dt/h`.
    pub fn courant(&self, v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |c, x| c.max(x.abs())) * self.dt / self.h
    }

    /// Advective update `m − (dt/h)·ΔF`, before diffusion.
    pub fn advect(&self, m: &[f64], v: &[f64]) -> Vec<f64> {
        let n = m.len();
        let c = self.dt / self.h;
        let mut out = m.to_vec();
        for f in 0..n - 1 {
            let flux = v[f].max(0.0) * m[f] + v[f + 1].min(0.0) * m[f + 1];
            out[f] -= c * flux;
            out[f + 1] += c * flux;
        }
        out
    }

    /// Transpose of the advective update at `(m, v)` applied to `r`: returns
    /// `Aᵀ(v)·r` and the gradient of `⟨r, A(v)·m⟩` with respect to `v`.
    pub fn advect_adjoint(&self, m: &[f64], v: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = m.len();
        let c = self.dt / self.h;
        let mut bar_m = r.to_vec();
        let mut bar_v = vec![0.0; n];
        for f in 0..n - 1 {
            let jump = c * (r[f + 1] - r[f]);
            bar_m[f] += v[f].max(0.0) * jump;
            bar_m[f + 1] += v[f + 1].min(0.0) * jump;
            if v[f] > 0.0 {
                bar_v[f] += m[f] * jump;
            }
            if v[f + 1] < 0.0 {
                bar_v[f + 1] += m[f + 1] * jump;
            }
        }
        (bar_m, bar_v)
    }

    /// Advances one step; returns the new density, its mass defect before
    /// clipping, and the clipped mass.
    pub fn step(&self, m: &[f64], v: &[f64], step: usize) -> Result<(Vec<f64>, f64, f64)> {
        let courant = self.courant(v);
        if courant > 1.0 {
            return Err(Error::StepSize { step, courant });
        }
        let mut next = self.lu.solve(&self.advect(m, v));
        let mass: f64 = next.iter().sum::<f64>() * self.h;
        let mut clipped = 0.0;
        for value in next.iter_mut() {
            if *value < 0.0 {
                clipped -= *value * self.h;
                *value = 0.0;
            }
        }
        if clipped > 0.0 {
            let remaining = mass + clipped;
            let scale = mass / remaining;
            next.iter_mut().for_each(|v| *v *= scale);
            log::debug!("step {step}: clipped mass {clipped:e}");
        }
        Ok((next, (mass - 1.0).abs(), clipped))
    }
}

/// Forward FP sweep with a given feedback path (one slice per time node;
/// slice `n` drives the step `t_n → t_{n+1}`).
pub fn fp_forward_with<M: GameModel + ?Sized>(
    model: &M,
    env: &Environment,
    feedback: &[Vec<f64>],
    omega: &[f64],
    grids: &Grids,
) -> Result<DensityPath> {
    let steps = grids.time.steps();
    if feedback.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "feedback path needs at least {steps} slices (got {})",
            feedback.len()
        )));
    }
    if omega.len() != grids.state.len() {
        return Err(Error::InvalidArgument("initial density does not match the grid".into()));
    }
    let stepper = FpStepper::new(model, grids)?;
    let mut m = Vec::with_capacity(steps + 1);
    let mut mass_defect = Vec::with_capacity(steps);
    let mut clipped_mass = 0.0;
    m.push(omega.to_vec());
    for n in 0..steps {
        let v = fp_velocities(model, env, &feedback[n], n, grids)?;
        let (next, defect, clipped) = stepper.step(&m[n], &v, n)?;
        mass_defect.push(defect);
        clipped_mass += clipped;
        m.push(next);
    }
    if clipped_mass > 0.0 {
        log::info!("positivity clipping removed {clipped_mass:e} mass in total");
    }
    Ok(DensityPath {
        grids: *grids,
        m,
        mass_defect,
        clipped_mass,
    })
}

/// Forward FP sweep driven by the feedback fields stored in `pi_path`.
pub fn fp_forward<M: GameModel + ?Sized>(
    model: &M,
    pi_path: &[JointLaw],
    x0_path: &[f64],
    u0_path: &[f64],
    omega: &JointLaw,
    grids: &Grids,
) -> Result<DensityPath> {
    let env = Environment::from_laws(model, pi_path, x0_path, u0_path, &grids.time)?;
    let feedback: Vec<Vec<f64>> = pi_path.iter().map(|l| l.feedback().to_vec()).collect();
    fp_forward_with(model, &env, &feedback, omega.density(), grids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{StateGrid, TimeGrid};
    use crate::model::lq::{LqModel, LqParams};
    use crate::model::LawSummary;

    fn frozen_env(grids: &Grids, x0: f64) -> Environment {
        let n = grids.time.steps();
        Environment::new(vec![x0; n + 1], vec![0.0; n], vec![LawSummary::from_slice(&[0.0, 0.0]); n + 1], &grids.time).unwrap()
    }

    fn transport(a: f64, c: f64, sigma1: f64) -> LqModel {
        LqModel::new(LqParams {
            a,
            c,
            sigma1,
            d: 0.0,
            e: 0.0,
            ..LqParams::default()
        })
        .unwrap()
    }

    #[test]
    fn pure_transport_shifts_mean() {
        let grids = Grids::new(StateGrid::reference(), TimeGrid::new(0.5, 500).unwrap());
        let model = transport(0.0, 1.0, 0.0);
        let omega = JointLaw::gaussian(grids.state, 0.0, 0.5, |_| 0.0).unwrap();
        let fb = vec![vec![0.0; grids.state.len()]; 501];
        let path = fp_forward_with(&model, &frozen_env(&grids, 1.0), &fb, omega.density(), &grids).unwrap();
        assert!((path.mean(500) - 0.5).abs() <= grids.state.spacing());
        assert!(path.mass_defect.iter().all(|d| *d < 1e-12));
        assert_eq!(path.clipped_mass, 0.0);
    }

    #[test]
    fn courant_violation_is_reported() {
        let grids = Grids::new(StateGrid::reference(), TimeGrid::new(1.0, 10).unwrap());
        let model = transport(0.0, 1.0, 0.0);
        let omega = JointLaw::gaussian(grids.state, 0.0, 0.5, |_| 0.0).unwrap();
        let fb = vec![vec![0.0; grids.state.len()]; 11];
        let err = fp_forward_with(&model, &frozen_env(&grids, 1.0), &fb, omega.density(), &grids).unwrap_err();
        assert!(matches!(err, Error::StepSize { step: 0, .. }));
    }

    #[test]
    fn diffusion_only_grows_variance_linearly() {
        let grids = Grids::new(StateGrid::reference(), TimeGrid::new(0.5, 500).unwrap());
        let model = transport(0.0, 0.0, std::f64::consts::SQRT_2);
        let omega = JointLaw::gaussian(grids.state, 0.0, 0.5, |_| 0.0).unwrap();
        let fb = vec![vec![0.0; grids.state.len()]; 501];
        let path = fp_forward_with(&model, &frozen_env(&grids, 0.0), &fb, omega.density(), &grids).unwrap();
        let h = grids.state.spacing();
        let var: f64 = grids.state.nodes().zip(&path.m[500]).map(|(x, m)| x * x * m * h).sum();
        assert!((var - 1.25).abs() < 2e-2, "{var}");
    }

    fn wavy(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| a * (0.37 * i as f64 + b).sin()).collect()
    }

    #[test]
    fn advect_adjoint_is_the_transpose() {
        let grids = Grids::new(StateGrid::new(-2.0, 2.0, 41).unwrap(), TimeGrid::new(1.0, 100).unwrap());
        let stepper = FpStepper::new(&transport(0.0, 0.0, 0.5), &grids).unwrap();
        let (m, v, r) = (wavy(41, 1.0, 0.1).iter().map(|x| x.abs()).collect::<Vec<_>>(), wavy(41, 2.0, 1.3), wavy(41, 1.0, 2.9));
        let am = stepper.advect(&m, &v);
        let (atr, _) = stepper.advect_adjoint(&m, &v, &r);
        let lhs: f64 = r.iter().zip(&am).map(|(a, b)| a * b).sum();
        let rhs: f64 = atr.iter().zip(&m).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn advect_adjoint_velocity_gradient_matches_differences() {
        let grids = Grids::new(StateGrid::new(-2.0, 2.0, 41).unwrap(), TimeGrid::new(1.0, 100).unwrap());
        let stepper = FpStepper::new(&transport(0.0, 0.0, 0.5), &grids).unwrap();
        let m: Vec<f64> = wavy(41, 1.0, 0.4).iter().map(|x| x.abs() + 0.1).collect();
        let (v, r) = (wavy(41, 2.0, 0.7), wavy(41, 1.0, 1.9));
        let pair = |v: &[f64]| -> f64 { r.iter().zip(&stepper.advect(&m, v)).map(|(a, b)| a * b).sum() };
        let (_, grad) = stepper.advect_adjoint(&m, &v, &r);
        let eps = 1e-6;
        for i in [0, 7, 20, 33, 40] {
            if v[i].abs() < 10.0 * eps {
                continue;
            }
            let (mut up, mut dn) = (v.clone(), v.clone());
            up[i] += eps;
            dn[i] -= eps;
            let fd = (pair(&up) - pair(&dn)) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-7, "node {i}: {fd} vs {}", grad[i]);
        }
    }
}
