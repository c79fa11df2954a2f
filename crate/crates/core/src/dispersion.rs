//! Linear dispersion `ω² = k² + νk⁴` on signed branches and the derived
//! envelope coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::TaylorNonlinearity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub nu: f64,
    pub nonlinearity: TaylorNonlinearity,
}

impl PhysicalParams {
    pub fn new(nu: f64, nonlinearity: TaylorNonlinearity) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::param("nu", format!("{nu} must be positive")));
        }
        Ok(PhysicalParams { nu, nonlinearity })
    }

    pub fn g130(&self) -> f64 {
        self.nonlinearity.g130()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionBranch {
    pub k: i32,
    pub omega: f64,
    /// Signed group velocity `dω/dk` along the branch.
    pub vg: f64,
    /// `d²ω/dk²` along the branch.
    pub curvature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlsCoefficients {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl NlsCoefficients {
    pub fn conj(self) -> Self {
        NlsCoefficients { alpha: -self.alpha, delta: -self.delta, gamma: -self.gamma }
    }
}

/// Unsigned frequency `|k| √(1 + νk²)` for a real wavenumber.
pub fn frequency(k: f64, nu: f64) -> f64 {
    (k * k + nu * k.powi(4)).sqrt()
}

/// `−ω² + k² + νk⁴`, the symbol of the linear operator on `e^{i(kx − ωt)}`.
pub fn linear_symbol(k: f64, omega: f64, nu: f64) -> f64 {
    -omega * omega + k * k + nu * k.powi(4)
}

pub fn branch(k: i32, sign: i32, params: &PhysicalParams) -> Result<DispersionBranch> {
    if k == 0 {
        return Err(Error::ZeroWavenumber);
    }
    if sign != 1 && sign != -1 {
        return Err(Error::param("sign", format!("{sign} is not ±1")));
    }
    let nu = params.nu;
    let kf = k as f64;
    let omega = sign as f64 * kf * (1.0 + nu * kf * kf).sqrt();
    let slope = kf + 2.0 * nu * kf.powi(3);
    let vg = slope / omega;
    let curvature = (1.0 + 6.0 * nu * kf * kf) / omega - slope * slope / omega.powi(3);
    Ok(DispersionBranch { k, omega, vg, curvature })
}

pub fn nls_coefficients(b: &DispersionBranch, params: &PhysicalParams) -> NlsCoefficients {
    NlsCoefficients {
        alpha: 0.5 * b.curvature,
        delta: 0.5 / b.omega,
        gamma: 1.5 * params.g130() / b.omega,
    }
}

/// Largest `|(ω′² − 1 − 6νk²) + ω ω″|` over the given wavenumbers and both branches.
pub fn check_omega_identity(k_values: &[i32], params: &PhysicalParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &k in k_values {
        for sign in [1, -1] {
            let b = branch(k, sign, params)?;
            let kf = k as f64;
            let lhs = b.vg * b.vg - 1.0 - 6.0 * params.nu * kf * kf;
            worst = worst.max((lhs + b.omega * b.curvature).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(nu: f64, g: f64) -> PhysicalParams {
        PhysicalParams::new(nu, TaylorNonlinearity::cubic(2, g)).unwrap()
    }

    #[test]
    fn unit_carrier_values() {
        let p = params(1.0, 1.0);
        let b = branch(1, 1, &p).unwrap();
        assert!((b.omega - 1.4142135624).abs() < 1e-10);
        // Central difference of the unsigned frequency.
        let h = 1e-5;
        let fd = (frequency(1.0 + h, 1.0) - frequency(1.0 - h, 1.0)) / (2.0 * h);
        assert!((b.vg - fd).abs() < 1e-8);
        assert!((b.vg - 2.1213203436).abs() < 1e-10);
        let m = branch(1, -1, &p).unwrap();
        assert_eq!(m.omega, -b.omega);
        assert_eq!(m.vg, -b.vg);
    }

    #[test]
    fn coefficients() {
        let p = params(1.0, 1.0);
        let b = branch(1, 1, &p).unwrap();
        let c = nls_coefficients(&b, &p);
        assert!((c.delta - 0.3535533906).abs() < 1e-10);
        let h = 1e-4;
        let fd2 = (frequency(1.0 + h, 1.0) - 2.0 * frequency(1.0, 1.0) + frequency(1.0 - h, 1.0)) / (h * h);
        assert!((c.alpha - 0.5 * fd2).abs() < 1e-6);
        assert!((c.alpha - 0.8838834765).abs() < 1e-10);
        assert!((c.delta * b.omega - 0.5).abs() < 1e-15);
        let m = nls_coefficients(&branch(1, -1, &p).unwrap(), &p);
        assert_eq!(m, c.conj());
        assert_eq!(nls_coefficients(&b, &params(1.0, 0.0)).gamma, 0.0);
    }

    #[test]
    fn identity_and_errors() {
        assert!(check_omega_identity(&[1, 2, 3], &params(1.0, 0.0)).unwrap() < 1e-10);
        assert!(check_omega_identity(&[1, 2, 3, 4, 5], &params(0.5, 0.0)).unwrap() < 1e-10);
        assert!(matches!(branch(0, 1, &params(1.0, 0.0)), Err(Error::ZeroWavenumber)));
        assert!(PhysicalParams::new(0.0, TaylorNonlinearity::zero(2)).is_err());
    }
}
