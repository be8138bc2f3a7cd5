//! Named models available to the command line, including fixtures used to
//! exercise the verification suite.

use crate::error::{Error, Result};
use crate::model::lq::{LqModel, LqParams};
use crate::model::{ControlBox, GameModel, KernelValue, MajorPoint, MinorPoint, Moments};

pub const MODEL_NAMES: [&str; 3] = ["lq", "zero-cost", "lq-broken-kernel"];

pub fn by_name(name: &str, params: LqParams) -> Result<Box<dyn GameModel>> {
    let base = LqModel::new(params)?;
    Ok(match name {
        "lq" => Box::new(base),
        "zero-cost" => Box::new(ZeroCost(base)),
        "lq-broken-kernel" => Box::new(BrokenKernel(base)),
        other => {
            return Err(Error::InvalidParameters(format!(
                "unknown model `{other}` (known: {})",
                MODEL_NAMES.join(", ")
            )))
        }
    })
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*) -> $ret:ty;)*) => {
        $(fn $name(&self, $($arg: $ty),*) -> $ret { self.0.$name($($arg),*) })*
    };
}

macro_rules! forward_minor {
    () => {
        forward! {
            minor_box() -> ControlBox;
            major_box() -> ControlBox;
            moment_count() -> usize;
            moment_feature(k: usize, x: f64, u: f64) -> KernelValue;
            g0(at: MajorPoint, u0: f64) -> f64;
            g0_x0(at: MajorPoint, u0: f64) -> f64;
            g0_u0(at: MajorPoint, u0: f64) -> f64;
            g0_dlaw(at: MajorPoint, u0: f64) -> Moments;
            sigma0(x0: f64) -> f64;
            g1(at: MinorPoint, u1: f64) -> f64;
            f1(at: MinorPoint, u1: f64) -> f64;
            h1(at: MinorPoint) -> f64;
            sigma1(x: f64) -> f64;
            g1_x0(at: MinorPoint, u1: f64) -> f64;
            g1_u0(at: MinorPoint, u1: f64) -> f64;
            g1_u1(at: MinorPoint, u1: f64) -> f64;
            f1_x0(at: MinorPoint, u1: f64) -> f64;
            f1_u0(at: MinorPoint, u1: f64) -> f64;
            f1_u1(at: MinorPoint, u1: f64) -> f64;
            h1_x0(at: MinorPoint) -> f64;
            h1_u0(at: MinorPoint) -> f64;
            f1_u1u1(at: MinorPoint, u1: f64) -> f64;
            g1_u1u1(at: MinorPoint, u1: f64) -> f64;
            f1_u1x0(at: MinorPoint, u1: f64) -> f64;
            g1_u1x0(at: MinorPoint, u1: f64) -> f64;
            f1_u1u0(at: MinorPoint, u1: f64) -> f64;
            g1_u1u0(at: MinorPoint, u1: f64) -> f64;
            f1_dlaw(at: MinorPoint, u1: f64) -> Moments;
            h1_dlaw(at: MinorPoint) -> Moments;
            f1_u1_dlaw(at: MinorPoint, u1: f64) -> Moments;
            g1_u1_dlaw(at: MinorPoint, u1: f64) -> Moments;
            h1_argmin_closed_form(at: MinorPoint, q: f64) -> Option<f64>;
            lipschitz_g1() -> Option<f64>;
            growth_f1() -> Option<f64>;
        }
    };
}

/// LQ dynamics and minor costs with the major player's costs removed.
#[derive(Debug, Clone, Copy)]
pub struct ZeroCost(pub LqModel);

impl GameModel for ZeroCost {
    fn name(&self) -> &str {
        "zero-cost"
    }

    forward_minor!();
    forward! {
        g1_dlaw(at: MinorPoint, u1: f64) -> Moments;
    }

    fn f0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        0.0
    }

    fn h0(&self, _at: MajorPoint) -> f64 {
        0.0
    }
}

/// LQ benchmark whose `g1` law kernel is deliberately mis-scaled by 1.5.
#[derive(Debug, Clone, Copy)]
pub struct BrokenKernel(pub LqModel);

impl GameModel for BrokenKernel {
    fn name(&self) -> &str {
        "lq-broken-kernel"
    }

    forward_minor!();
    forward! {
        f0(at: MajorPoint, u0: f64) -> f64;
        h0(at: MajorPoint) -> f64;
        f0_x0(at: MajorPoint, u0: f64) -> f64;
        f0_u0(at: MajorPoint, u0: f64) -> f64;
        h0_x0(at: MajorPoint) -> f64;
        f0_dlaw(at: MajorPoint, u0: f64) -> Moments;
        h0_dlaw(at: MajorPoint) -> Moments;
        h0_argmin_closed_form(at: MajorPoint, p: f64) -> Option<f64>;
    }

    fn g1_dlaw(&self, at: MinorPoint, u1: f64) -> Moments {
        self.0.g1_dlaw(at, u1).iter().map(|c| 1.5 * c).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LawSummary;

    #[test]
    fn registry_resolves_known_names() {
        for name in MODEL_NAMES {
            assert_eq!(by_name(name, LqParams::default()).unwrap().name(), name);
        }
        assert!(by_name("nope", LqParams::default()).is_err());
    }

    #[test]
    fn zero_cost_model_has_no_major_cost() {
        let m = by_name("zero-cost", LqParams::default()).unwrap();
        let law = LawSummary::from_slice(&[1.0, 2.0]);
        let at = MajorPoint::new(3.0, &law);
        assert_eq!(m.f0(at, 1.0) + m.h0(at), 0.0);
        assert_eq!(m.f0_x0(at, 1.0), 0.0);
    }

    #[test]
    fn broken_kernel_differs_only_in_g1_kernel() {
        let good = LqModel::benchmark();
        let bad = BrokenKernel(good);
        let law = LawSummary::from_slice(&[0.3, 0.1]);
        let at = MinorPoint::new(0.5, 1.0, 0.2, &law);
        assert_eq!(good.g1(at, 0.4), bad.g1(at, 0.4));
        assert_eq!(bad.g1_dlaw(at, 0.4)[1], 1.5 * good.g1_dlaw(at, 0.4)[1]);
    }
}
