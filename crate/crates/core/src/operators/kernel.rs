//! Stationary covariance kernels.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Isotropic scalar covariance `C(x - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScalarKernel {
    /// `exp(-|r|^2 / 2 sigma^2)`
    Gaussian { sigma: f64 },
    /// `exp(-|r| / L)`, continuous but not differentiable at the origin.
    Exponential { corr_length: f64 },
}

impl ScalarKernel {
    pub fn validate(&self) -> Result<()> {
        let p = match *self {
            ScalarKernel::Gaussian { sigma } => sigma,
            ScalarKernel::Exponential { corr_length } => corr_length,
        };
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidCovariance(format!("length scale must be positive, got {p}")));
        }
        Ok(())
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        let r2: f64 = r.iter().map(|x| x * x).sum();
        match *self {
            ScalarKernel::Gaussian { sigma } => (-0.5 * r2 / (sigma * sigma)).exp(),
            ScalarKernel::Exponential { corr_length } => (-r2.sqrt() / corr_length).exp(),
        }
    }

    pub fn at_zero(&self) -> f64 {
        1.0
    }
}

/// Longitudinal correlation profile `f(x)` of an isotropic flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowProfile {
    /// `exp(-x^2 / 2 l^2)`
    Gaussian,
    /// `exp(-x / l)`; has a kink at the origin and is rejected by
    /// [`IsotropicFlowKernel::new`].
    Exponential,
}

impl FlowProfile {
    /// `(f, f', f'')` at radius `x >= 0` for scale `l`.
    pub fn derivatives(self, x: f64, l: f64) -> (f64, f64, f64) {
        match self {
            FlowProfile::Gaussian => {
                let f = (-0.5 * x * x / (l * l)).exp();
                (f, -x / (l * l) * f, (x * x / l.powi(4) - 1.0 / (l * l)) * f)
            }
            FlowProfile::Exponential => {
                let f = (-x / l).exp();
                (f, -f / l, f / (l * l))
            }
        }
    }
}

/// Covariance of a homogeneous isotropic incompressible flow:
///
/// `C_{mu nu}(r) = (2E/3) f(x) delta_{mu nu} + (E/3) x f'(x) (delta_{mu nu} - r_mu r_nu / x^2)`,
/// `x = |r|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicFlowKernel {
    pub energy: f64,
    pub taylor_scale: f64,
    pub profile: FlowProfile,
}

impl IsotropicFlowKernel {
    /// Validates the profile: `f(0) = 1`, `f'(0) = 0` and
    /// `|f(x) - 1 + x^2/2l^2| <= (x/l)^4` for `x <= 0.01 l`.
    pub fn new(energy: f64, taylor_scale: f64, profile: FlowProfile) -> Result<Self> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::InvalidCovariance(format!("energy must be positive, got {energy}")));
        }
        if !(taylor_scale.is_finite() && taylor_scale > 0.0) {
            return Err(Error::InvalidCovariance(format!("Taylor scale must be positive, got {taylor_scale}")));
        }
        let l = taylor_scale;
        let (f0, fp0, _) = profile.derivatives(0.0, l);
        if (f0 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidCovariance(format!("profile has f(0) = {f0}, expected 1")));
        }
        if fp0.abs() > 1e-10 {
            return Err(Error::InvalidCovariance(format!(
                "profile has f'(0) = {fp0}; the flow kernel needs a twice differentiable profile"
            )));
        }
        for k in 1..=10 {
            let x = 1e-3 * k as f64 * l;
            let (f, _, _) = profile.derivatives(x, l);
            let rem = (f - 1.0 + 0.5 * (x / l).powi(2)).abs();
            if rem > (x / l).powi(4) {
                return Err(Error::InvalidCovariance(format!(
                    "profile departs from 1 - x^2/2l^2 near the origin (remainder {rem:e} at x = {x})"
                )));
            }
        }
        Ok(IsotropicFlowKernel { energy, taylor_scale, profile })
    }

    pub fn gaussian(energy: f64, taylor_scale: f64) -> Result<Self> {
        IsotropicFlowKernel::new(energy, taylor_scale, FlowProfile::Gaussian)
    }

    pub fn profile(&self, x: f64) -> (f64, f64, f64) {
        self.profile.derivatives(x, self.taylor_scale)
    }

    /// 3x3 covariance block at separation `r`.
    pub fn block(&self, r: &[f64]) -> [[f64; 3]; 3] {
        let e = self.energy;
        let x2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let x = x2.sqrt();
        let (f, fp, _) = self.profile(x);
        let mut c = [[0.0; 3]; 3];
        let diag = 2.0 * e / 3.0 * f;
        for (mu, row) in c.iter_mut().enumerate() {
            row[mu] = diag;
        }
        if x > 0.0 {
            let g = e / 3.0 * x * fp;
            for mu in 0..3 {
                for nu in 0..3 {
                    let delta = if mu == nu { 1.0 } else { 0.0 };
                    c[mu][nu] += g * (delta - r[mu] * r[nu] / x2);
                }
            }
        }
        c
    }

    pub fn entry(&self, r: &[f64], mu: usize, nu: usize) -> f64 {
        self.block(r)[mu][nu]
    }
}

/// Any supported kernel, as selected in run configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Scalar(ScalarKernel),
    Flow(IsotropicFlowKernel),
}

impl Kernel {
    pub fn components(&self) -> usize {
        match self {
            Kernel::Scalar(_) => 1,
            Kernel::Flow(_) => 3,
        }
    }

    /// Covariance between component `a` at `x` and component `b` at `y`,
    /// with `r = x - y`.
    pub fn entry(&self, r: &[f64], a: usize, b: usize) -> f64 {
        match self {
            Kernel::Scalar(k) => k.eval(r),
            Kernel::Flow(k) => k.entry(r, a, b),
        }
    }

    /// `Σ_m C_mm(0)`, the pointwise variance summed over components.
    pub fn trace_at_zero(&self) -> f64 {
        match self {
            Kernel::Scalar(k) => k.at_zero(),
            Kernel::Flow(k) => 2.0 * k.energy,
        }
    }
}

impl From<ScalarKernel> for Kernel {
    fn from(k: ScalarKernel) -> Self {
        Kernel::Scalar(k)
    }
}

impl From<IsotropicFlowKernel> for Kernel {
    fn from(k: IsotropicFlowKernel) -> Self {
        Kernel::Flow(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coincident_points_give_isotropic_block() {
        let k = IsotropicFlowKernel::gaussian(3.0, 1.0).unwrap();
        let b = k.block(&[0.0, 0.0, 0.0]);
        for mu in 0..3 {
            for nu in 0..3 {
                assert_eq!(b[mu][nu], if mu == nu { 2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn longitudinal_and_transverse_entries() {
        let k = IsotropicFlowKernel::gaussian(3.0, 1.0).unwrap();
        let b = k.block(&[1.0, 0.0, 0.0]);
        let f1 = (-0.5f64).exp();
        assert_relative_eq!(b[0][0], 2.0 * f1, max_relative = 1e-15);
        assert_relative_eq!(b[0][0], 1.2130613194252668, max_relative = 1e-15);
        // Transverse: (2E/3) f + (E/3) x f'(x) with f'(1) = -f(1).
        assert_relative_eq!(b[1][1], 2.0 * f1 - f1, max_relative = 1e-15);
        assert_eq!(b[0][1], 0.0);
    }

    #[test]
    fn kernel_is_even_and_symmetric() {
        let k = IsotropicFlowKernel::gaussian(1.7, 0.6).unwrap();
        let r = [0.3, -0.2, 0.5];
        let neg = [-0.3, 0.2, -0.5];
        let (a, b) = (k.block(&r), k.block(&neg));
        for mu in 0..3 {
            for nu in 0..3 {
                assert_eq!(a[mu][nu], b[mu][nu]);
                assert_eq!(a[mu][nu], a[nu][mu]);
            }
        }
    }

    #[test]
    fn kinked_profile_is_rejected() {
        assert!(matches!(
            IsotropicFlowKernel::new(1.0, 1.0, FlowProfile::Exponential),
            Err(Error::InvalidCovariance(_))
        ));
        assert!(IsotropicFlowKernel::gaussian(0.0, 1.0).is_err());
        assert!(IsotropicFlowKernel::gaussian(1.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_profile_derivatives() {
        let (f, fp, fpp) = FlowProfile::Gaussian.derivatives(1.0, 1.0);
        assert_relative_eq!(fp, -f, max_relative = 1e-15);
        assert!(fpp.abs() < 1e-16);
        // Central difference oracle for f' and f'' at an arbitrary radius.
        let (x, l, h) = (0.7, 1.3, 1e-4);
        let val = |x: f64| FlowProfile::Gaussian.derivatives(x, l).0;
        let (_, fp, fpp) = FlowProfile::Gaussian.derivatives(x, l);
        assert_relative_eq!(fp, (val(x + h) - val(x - h)) / (2.0 * h), max_relative = 1e-7);
        assert_relative_eq!(fpp, (val(x + h) - 2.0 * val(x) + val(x - h)) / (h * h), max_relative = 1e-5);
    }

    #[test]
    fn scalar_kernels() {
        let g = ScalarKernel::Gaussian { sigma: 2.0 };
        assert_relative_eq!(g.eval(&[2.0]), (-0.5f64).exp());
        let e = ScalarKernel::Exponential { corr_length: 0.5 };
        assert_relative_eq!(e.eval(&[0.3, 0.4]), (-1.0f64).exp());
        assert!(ScalarKernel::Gaussian { sigma: 0.0 }.validate().is_err());
    }
}
