//! Linear-quadratic benchmark.
//!
//! Minor: `dx = (a·x + b·u1 + c·x0 + d·ū + e·u0) dt + σ1 dW1`, running cost
//! `½u1² + ½(x − ρ·x̄ − η·x0)²`, terminal cost `½γ1·x²`.
//!
//! Major: `dx0 = (a0·x0 + b0·u0 + c0·x̄) dt`, running cost
//! `½u0² + ½(x0 − κ·x̄)²`, terminal cost `½γ0·x0²`.
//!
//! `x̄` and `ū` are the state and control means of the joint law, i.e. the
//! moments with features `φ_0 = x` and `φ_1 = u`.

use smallvec::smallvec;

use crate::error::{Error, Result};
use crate::model::{GameModel, KernelValue, MajorPoint, MinorPoint, Moments};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub sigma1: f64,
    pub rho: f64,
    pub eta: f64,
    pub gamma1: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub kappa: f64,
    pub gamma0: f64,
}

impl Default for LqParams {
    /// The coupled benchmark instance.
    fn default() -> Self {
        Self {
            a: -0.2,
            b: 1.0,
            c: 0.3,
            d: 0.2,
            e: 0.2,
            sigma1: 0.5,
            rho: 0.5,
            eta: 0.4,
            gamma1: 0.5,
            a0: 0.1,
            b0: 1.0,
            c0: 0.3,
            kappa: 0.5,
            gamma0: 1.1,
        }
    }
}

impl LqParams {
    pub const NAMES: [&'static str; 14] = [
        "a", "b", "c", "d", "e", "sigma1", "rho", "eta", "gamma1", "a0", "b0", "c0", "kappa", "gamma0",
    ];

    /// Benchmark with every law coupling and every major-to-minor coupling removed.
    pub fn decoupled() -> Self {
        Self {
            c: 0.0,
            d: 0.0,
            e: 0.0,
            rho: 0.0,
            eta: 0.0,
            c0: 0.0,
            kappa: 0.0,
            ..Self::default()
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "a" => self.a,
            "b" => self.b,
            "c" => self.c,
            "d" => self.d,
            "e" => self.e,
            "sigma1" => self.sigma1,
            "rho" => self.rho,
            "eta" => self.eta,
            "gamma1" => self.gamma1,
            "a0" => self.a0,
            "b0" => self.b0,
            "c0" => self.c0,
            "kappa" => self.kappa,
            "gamma0" => self.gamma0,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "a" => &mut self.a,
            "b" => &mut self.b,
            "c" => &mut self.c,
            "d" => &mut self.d,
            "e" => &mut self.e,
            "sigma1" => &mut self.sigma1,
            "rho" => &mut self.rho,
            "eta" => &mut self.eta,
            "gamma1" => &mut self.gamma1,
            "a0" => &mut self.a0,
            "b0" => &mut self.b0,
            "c0" => &mut self.c0,
            "kappa" => &mut self.kappa,
            "gamma0" => &mut self.gamma0,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn validate(&self) -> Result<()> {
        for name in Self::NAMES {
            let v = self.get(name).expect("known name");
            if !v.is_finite() {
                return Err(Error::InvalidParameters(format!("{name} = {v} is not finite")));
            }
        }
        if self.b == 0.0 {
            return Err(Error::InvalidParameters("b = 0 leaves the minor agent uncontrollable".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqModel {
    params: LqParams,
}

impl LqModel {
    pub fn new(params: LqParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn benchmark() -> Self {
        Self {
            params: LqParams::default(),
        }
    }

    pub fn params(&self) -> &LqParams {
        &self.params
    }

    fn minor_gap(&self, at: &MinorPoint) -> f64 {
        at.x - self.params.rho * at.law.get(0) - self.params.eta * at.x0
    }

    fn major_gap(&self, at: &MajorPoint) -> f64 {
        at.x0 - self.params.kappa * at.law.get(0)
    }
}

fn moments(s0: f64, s1: f64) -> Moments {
    smallvec![s0, s1]
}

impl GameModel for LqModel {
    fn name(&self) -> &str {
        "lq"
    }

    fn moment_count(&self) -> usize {
        2
    }

    fn moment_feature(&self, k: usize, x: f64, u: f64) -> KernelValue {
        match k {
            0 => KernelValue {
                value: x,
                d_state: 1.0,
                d_control: 0.0,
            },
            1 => KernelValue {
                value: u,
                d_state: 0.0,
                d_control: 1.0,
            },
            _ => KernelValue::default(),
        }
    }

    fn g0(&self, at: MajorPoint, u0: f64) -> f64 {
        let p = &self.params;
        p.a0 * at.x0 + p.b0 * u0 + p.c0 * at.law.get(0)
    }

    fn f0(&self, at: MajorPoint, u0: f64) -> f64 {
        0.5 * u0 * u0 + 0.5 * self.major_gap(&at).powi(2)
    }

    fn h0(&self, at: MajorPoint) -> f64 {
        0.5 * self.params.gamma0 * at.x0 * at.x0
    }

    fn g1(&self, at: MinorPoint, u1: f64) -> f64 {
        let p = &self.params;
        p.a * at.x + p.b * u1 + p.c * at.x0 + p.d * at.law.get(1) + p.e * at.u0
    }

    fn f1(&self, at: MinorPoint, u1: f64) -> f64 {
        0.5 * u1 * u1 + 0.5 * self.minor_gap(&at).powi(2)
    }

    fn h1(&self, at: MinorPoint) -> f64 {
        0.5 * self.params.gamma1 * at.x * at.x
    }

    fn sigma1(&self, _x: f64) -> f64 {
        self.params.sigma1
    }

    fn g0_x0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        self.params.a0
    }

    fn g0_u0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        self.params.b0
    }

    fn f0_x0(&self, at: MajorPoint, _u0: f64) -> f64 {
        self.major_gap(&at)
    }

    fn f0_u0(&self, _at: MajorPoint, u0: f64) -> f64 {
        u0
    }

    fn h0_x0(&self, at: MajorPoint) -> f64 {
        self.params.gamma0 * at.x0
    }

    fn g1_x0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        self.params.c
    }

    fn g1_u0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        self.params.e
    }

    fn g1_u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        self.params.b
    }

    fn f1_x0(&self, at: MinorPoint, _u1: f64) -> f64 {
        -self.params.eta * self.minor_gap(&at)
    }

    fn f1_u1(&self, _at: MinorPoint, u1: f64) -> f64 {
        u1
    }

    fn f1_u1u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        1.0
    }

    fn g1_u1u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }

    fn f1_u1x0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }

    fn g1_u1x0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }

    fn f1_u1u0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }

    fn g1_u1u0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }

    fn g0_dlaw(&self, _at: MajorPoint, _u0: f64) -> Moments {
        moments(self.params.c0, 0.0)
    }

    fn f0_dlaw(&self, at: MajorPoint, _u0: f64) -> Moments {
        moments(-self.params.kappa * self.major_gap(&at), 0.0)
    }

    fn g1_dlaw(&self, _at: MinorPoint, _u1: f64) -> Moments {
        moments(0.0, self.params.d)
    }

    fn f1_dlaw(&self, at: MinorPoint, _u1: f64) -> Moments {
        moments(-self.params.rho * self.minor_gap(&at), 0.0)
    }

    fn h1_argmin_closed_form(&self, _at: MinorPoint, q: f64) -> Option<f64> {
        Some(-self.params.b * q)
    }

    fn h0_argmin_closed_form(&self, _at: MajorPoint, p: f64) -> Option<f64> {
        Some(-self.params.b0 * p)
    }

    fn lipschitz_g1(&self) -> Option<f64> {
        let p = &self.params;
        Some([p.a, p.b, p.c, p.d, p.e].iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    fn growth_f1(&self) -> Option<f64> {
        let p = &self.params;
        Some(1.5f64.max(1.5 * p.rho * p.rho).max(1.5 * p.eta * p.eta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LawSummary;

    #[test]
    fn rejects_uncontrollable_minor() {
        assert!(LqModel::new(LqParams { b: 0.0, ..LqParams::default() }).is_err());
        assert!(LqModel::new(LqParams { rho: f64::NAN, ..LqParams::default() }).is_err());
    }

    #[test]
    fn zero_couplings_reduce_to_standalone_problem() {
        let m = LqModel::new(LqParams {
            c: 0.0,
            d: 0.0,
            e: 0.0,
            rho: 0.0,
            eta: 0.0,
            ..LqParams::default()
        })
        .unwrap();
        let law = LawSummary::from_slice(&[3.0, -2.0]);
        let at = MinorPoint::new(1.5, 4.0, 7.0, &law);
        let p = m.params();
        assert_eq!(m.g1(at, 0.5), p.a * 1.5 + p.b * 0.5);
        assert_eq!(m.f1(at, 0.5), 0.5 * 0.25 + 0.5 * 2.25);
    }

    #[test]
    fn parameter_lookup_round_trips() {
        let mut p = LqParams::default();
        for (k, name) in LqParams::NAMES.iter().enumerate() {
            assert!(p.set(name, k as f64 + 0.5));
        }
        for (k, name) in LqParams::NAMES.iter().enumerate() {
            assert_eq!(p.get(name), Some(k as f64 + 0.5));
        }
        assert!(!p.set("zeta", 1.0));
    }

    #[test]
    fn decoupled_instance_has_no_cross_terms() {
        let m = LqModel::new(LqParams::decoupled()).unwrap();
        let law = LawSummary::from_slice(&[1.0, 1.0]);
        let at = MinorPoint::new(0.3, 2.0, 1.0, &law);
        assert_eq!(m.g1_x0(at, 0.0), 0.0);
        assert_eq!(m.g1_dlaw(at, 0.0).as_slice(), &[0.0, 0.0]);
        assert_eq!(m.g0_dlaw(MajorPoint::new(1.0, &law), 0.0).as_slice(), &[0.0, 0.0]);
    }
}
