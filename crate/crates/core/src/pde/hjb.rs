use crate::error::{Error, Result};
use crate::grid::Grids;
use crate::measure::JointLaw;
use crate::model::{minimize_h1, GameModel};
use crate::pde::operators::{diffusion_coefficients, gradient_matrix, hjb_implicit_matrix, Tridiagonal, TridiagonalLu};
use crate::pde::{Environment, ValuePath};

/// One backward step `C·Ψ^n = Ψ^{n+1} + dt·H1(x, x0_n, u0_n, Π_n, D·Ψ^{n+1})`
/// with `C = I − dt·diag(a1)·D²` (identity rows at the ends).
#[derive(Debug, Clone)]
pub struct HjbStepper {
    c: Tridiagonal,
    lu: TridiagonalLu,
    d: Tridiagonal,
    dt: f64,
}

/// Hamiltonian data produced by one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbStep {
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub feedback: Vec<f64>,
}

impl HjbStepper {
    pub fn new<M: GameModel + ?Sized>(model: &M, grids: &Grids) -> Result<Self> {
        let g = &grids.state;
        if g.len() < 3 {
            return Err(Error::InvalidArgument(format!("HJB solver needs at least 3 nodes (got {})", g.len())));
        }
        let a1 = diffusion_coefficients(g, |x| model.sigma1(x));
        let (h, dt) = (g.spacing(), grids.time.dt());
        let c = hjb_implicit_matrix(&a1, h, dt);
        Ok(Self {
            lu: c.factor()?,
            c,
            d: gradient_matrix(g.len(), h),
            dt,
        })
    }

    pub fn implicit_matrix(&self) -> &Tridiagonal {
        &self.c
    }

    pub fn lu(&self) -> &TridiagonalLu {
        &self.lu
    }

    pub fn gradient(&self) -> &Tridiagonal {
        &self.d
    }

    /// Hamiltonian values and minimizers at time index `n` for gradient `zeta`.
    pub fn hamiltonian<M: GameModel + ?Sized>(
        &self,
        model: &M,
        env: &Environment,
        grids: &Grids,
        n: usize,
        zeta: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut values = Vec::with_capacity(zeta.len());
        let mut controls = Vec::with_capacity(zeta.len());
        for (x, &q) in grids.state.nodes().zip(zeta) {
            let h = minimize_h1(model, env.minor(n, x), q).map_err(|e| match e {
                Error::Evaluation { function, location } => Error::Evaluation {
                    function,
                    location: format!("{location}, t_index={n}"),
                },
                other => other,
            })?;
            values.push(h.value);
            controls.push(h.control);
        }
        Ok((values, controls))
    }

    pub fn step<M: GameModel + ?Sized>(
        &self,
        model: &M,
        env: &Environment,
        grids: &Grids,
        n: usize,
        psi_next: &[f64],
    ) -> Result<HjbStep> {
        let zeta = self.d.apply(psi_next);
        let (h1, feedback) = self.hamiltonian(model, env, grids, n, &zeta)?;
        let rhs: Vec<f64> = psi_next.iter().zip(&h1).map(|(p, h)| p + self.dt * h).collect();
        Ok(HjbStep {
            psi: self.lu.solve(&rhs),
            dpsi: zeta,
            feedback,
        })
    }
}

/// Backward HJB sweep for the given environment.
pub fn hjb_backward_with<M: GameModel + ?Sized>(model: &M, env: &Environment, grids: &Grids) -> Result<ValuePath> {
    let steps = grids.time.steps();
    let stepper = HjbStepper::new(model, grids)?;
    let terminal: Vec<f64> = grids.state.nodes().map(|x| model.h1(env.minor(steps, x))).collect();
    if let Some(i) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::eval("h1", format!("x={}, t_index={steps}", grids.state.node(i))));
    }
    let mut psi = vec![Vec::new(); steps + 1];
    let mut dpsi = vec![Vec::new(); steps + 1];
    let mut feedback = vec![Vec::new(); steps + 1];
    let zeta_t = stepper.d.apply(&terminal);
    let (_, fb_t) = stepper.hamiltonian(model, env, grids, steps, &zeta_t)?;
    psi[steps] = terminal;
    dpsi[steps] = zeta_t;
    feedback[steps] = fb_t;
    for n in (0..steps).rev() {
        let s = stepper.step(model, env, grids, n, &psi[n + 1])?;
        psi[n] = s.psi;
        dpsi[n] = s.dpsi;
        feedback[n] = s.feedback;
    }
    Ok(ValuePath {
        grids: *grids,
        psi,
        dpsi,
        feedback,
    })
}

/// Backward HJB sweep with the law argument taken from `pi_path`.
pub fn hjb_backward<M: GameModel + ?Sized>(
    model: &M,
    pi_path: &[JointLaw],
    x0_path: &[f64],
    u0_path: &[f64],
    grids: &Grids,
) -> Result<ValuePath> {
    let env = Environment::from_laws(model, pi_path, x0_path, u0_path, &grids.time)?;
    hjb_backward_with(model, &env, grids)
}

/// Sup-norm residual of the discrete backward equation over all interior
/// time steps, recomputed independently of the sweep.
pub fn hjb_residual<M: GameModel + ?Sized>(model: &M, env: &Environment, value: &ValuePath) -> Result<f64> {
    let grids = value.grids;
    let stepper = HjbStepper::new(model, &grids)?;
    let dt = grids.time.dt();
    let mut worst = 0.0f64;
    for n in 0..grids.time.steps() {
        let zeta = stepper.d.apply(&value.psi[n + 1]);
        let (h1, _) = stepper.hamiltonian(model, env, &grids, n, &zeta)?;
        let c_psi = stepper.c.apply(&value.psi[n]);
        for i in 0..c_psi.len() {
            let r = (c_psi[i] - value.psi[n + 1][i]) / dt - h1[i];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}
