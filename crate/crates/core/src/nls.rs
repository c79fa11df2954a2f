//! Split-step integration of `i w_θ + α w_σσ + δ Δ_η w + γ |w|² w = 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::{nls_coefficients, DispersionBranch, NlsCoefficients, PhysicalParams};
use crate::error::{Error, Result};
use crate::spectral::{forward_complex, inverse_complex, ComplexField, Grid};

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub theta: f64,
    pub w: ComplexField,
    pub coeffs: NlsCoefficients,
    pub branch: DispersionBranch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationSample {
    pub theta: f64,
    pub mass: f64,
    pub hamiltonian: f64,
}

/// `w(0) = ½φ + (i / 2ω) ψ` on the branch `b`.
pub fn initial_envelope(
    phi: &ComplexField,
    psi: &ComplexField,
    b: &DispersionBranch,
    params: &PhysicalParams,
) -> Result<Envelope> {
    phi.grid.ensure_same(&psi.grid, "initial envelope")?;
    let c = Complex64::new(0.0, 0.5 / b.omega);
    let values = phi.values.iter().zip(&psi.values).map(|(p, q)| 0.5 * p + c * q).collect();
    Ok(Envelope {
        theta: 0.0,
        w: ComplexField::new(phi.grid.clone(), values)?,
        coeffs: nls_coefficients(b, params),
        branch: *b,
    })
}

/// `ακ_σ² + δ|κ_η|²` for every stored mode.
fn dispersion_symbol(grid: &Grid, coeffs: &NlsCoefficients) -> Vec<f64> {
    let k = grid.wavenumbers3();
    let mut out = vec![0.0; grid.len()];
    grid.for_each_index(|flat, idx| {
        let mut s = coeffs.alpha * k[0][idx[0]].powi(2);
        for a in 1..grid.dims() {
            s += coeffs.delta * k[a][idx[a]].powi(2);
        }
        out[flat] = s;
    });
    out
}

/// Reusable split-step integrator for one envelope.
pub struct NlsStepper {
    symbol: Vec<f64>,
    dtheta: f64,
    half: Vec<Complex64>,
}

impl NlsStepper {
    pub fn new(grid: &Grid, coeffs: &NlsCoefficients, dtheta: f64) -> Result<Self> {
        if !(dtheta.is_finite() && dtheta > 0.0) {
            return Err(Error::param("dtheta", format!("{dtheta} must be positive")));
        }
        let symbol = dispersion_symbol(grid, coeffs);
        let half = Self::multipliers(&symbol, 0.5 * dtheta);
        Ok(NlsStepper { symbol, dtheta, half })
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    fn multipliers(symbol: &[f64], h: f64) -> Vec<Complex64> {
        symbol.iter().map(|s| Complex64::from_polar(1.0, -s * h)).collect()
    }

    fn linear(w: &mut ComplexField, mult: &[Complex64]) {
        let mut spec = forward_complex(w);
        spec.modes.iter_mut().zip(mult).for_each(|(a, m)| *a *= m);
        *w = inverse_complex(&spec);
    }

    /// Advances by `h`, which may differ from the configured step.
    pub fn step_by(&self, e: &mut Envelope, h: f64) -> Result<()> {
        let owned;
        let half = if h == self.dtheta {
            &self.half
        } else {
            owned = Self::multipliers(&self.symbol, 0.5 * h);
            &owned
        };
        Self::linear(&mut e.w, half);
        let g = e.coeffs.gamma;
        if g != 0.0 {
            for v in e.w.values.iter_mut() {
                *v *= Complex64::from_polar(1.0, g * v.norm_sqr() * h);
            }
        }
        Self::linear(&mut e.w, half);
        e.theta += h;
        if !e.w.is_finite() {
            return Err(Error::BlowUp { time: e.theta });
        }
        Ok(())
    }

    /// Fixed steps to `theta_end`, the last one shortened.
    pub fn advance_to(&self, e: &mut Envelope, theta_end: f64) -> Result<()> {
        if theta_end < e.theta {
            return Err(Error::param("theta_end", format!("{theta_end} precedes θ = {}", e.theta)));
        }
        let tol = 1e-12 * self.dtheta;
        while theta_end - e.theta > tol {
            let h = self.dtheta.min(theta_end - e.theta);
            self.step_by(e, h)?;
        }
        e.theta = theta_end.max(e.theta);
        Ok(())
    }
}

pub fn nls_step(e: &Envelope, dtheta: f64) -> Result<Envelope> {
    let st = NlsStepper::new(&e.w.grid, &e.coeffs, dtheta)?;
    let mut out = e.clone();
    st.step_by(&mut out, dtheta)?;
    Ok(out)
}

pub fn solve_nls(e: &Envelope, theta_end: f64, dtheta: f64) -> Result<Envelope> {
    Ok(solve_nls_logged(e, theta_end, dtheta, 0)?.0)
}

/// As [`solve_nls`], also recording mass and Hamiltonian every `stride` steps
/// (and at both ends). `stride = 0` disables the log.
pub fn solve_nls_logged(
    e: &Envelope,
    theta_end: f64,
    dtheta: f64,
    stride: usize,
) -> Result<(Envelope, Vec<ConservationSample>)> {
    if theta_end < e.theta {
        return Err(Error::param("theta_end", format!("{theta_end} precedes θ = {}", e.theta)));
    }
    let mut out = e.clone();
    let mut log = Vec::new();
    if theta_end == e.theta {
        return Ok((out, log));
    }
    let st = NlsStepper::new(&e.w.grid, &e.coeffs, dtheta)?;
    let sample = |e: &Envelope| ConservationSample { theta: e.theta, mass: mass(e), hamiltonian: hamiltonian(e) };
    if stride > 0 {
        log.push(sample(&out));
    }
    let tol = 1e-12 * dtheta;
    let mut n = 0usize;
    while theta_end - out.theta > tol {
        let h = dtheta.min(theta_end - out.theta);
        st.step_by(&mut out, h)?;
        n += 1;
        if stride > 0 && n % stride == 0 {
            log.push(sample(&out));
        }
    }
    out.theta = theta_end;
    if stride > 0 && n % stride != 0 {
        log.push(sample(&out));
    }
    Ok((out, log))
}

pub fn mass(e: &Envelope) -> f64 {
    e.w.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * e.w.grid.cell_volume()
}

pub fn hamiltonian(e: &Envelope) -> f64 {
    let grid = &e.w.grid;
    let symbol = dispersion_symbol(grid, &e.coeffs);
    let spec = forward_complex(&e.w);
    let quadratic: f64 = spec.modes.iter().zip(&symbol).map(|(c, s)| s * c.norm_sqr()).sum::<f64>() * grid.volume();
    let quartic: f64 = e.w.values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * grid.cell_volume();
    quadratic - 0.5 * e.coeffs.gamma * quartic
}

/// `−α w_σσ − δ Δ_η w − γ|w|² w`, the variational derivative of the Hamiltonian
/// with respect to `conj(w)`.
pub fn hamiltonian_gradient(e: &Envelope) -> ComplexField {
    let grid = &e.w.grid;
    let symbol = dispersion_symbol(grid, &e.coeffs);
    let mut spec = forward_complex(&e.w);
    spec.modes.iter_mut().zip(&symbol).for_each(|(c, s)| *c *= s);
    let mut out = inverse_complex(&spec);
    for (o, w) in out.values.iter_mut().zip(&e.w.values) {
        *o -= e.coeffs.gamma * w.norm_sqr() * w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::branch;
    use crate::nonlinearity::TaylorNonlinearity;
    use std::f64::consts::PI;

    fn params(g: f64) -> PhysicalParams {
        PhysicalParams::new(1.0, TaylorNonlinearity::cubic(2, g)).unwrap()
    }

    fn slow() -> Grid {
        Grid::new(vec![40.0, 40.0], vec![64, 32]).unwrap()
    }

    fn gaussian(grid: &Grid) -> ComplexField {
        ComplexField::from_fn(grid, |x| Complex64::new((-(x[0] * x[0] + x[1] * x[1]) / 16.0).exp(), 0.0))
    }

    #[test]
    fn branch_split_reconstructs_data() {
        let p = params(1.0);
        let g = slow();
        let phi = gaussian(&g);
        let psi = ComplexField::from_fn(&g, |x| Complex64::new(0.3, -0.2) * (-(x[0] * x[0]) / 9.0).exp());
        let bp = branch(1, 1, &p).unwrap();
        let bm = branch(1, -1, &p).unwrap();
        let wp = initial_envelope(&phi, &psi, &bp, &p).unwrap();
        let wm = initial_envelope(&phi, &psi, &bm, &p).unwrap();
        let i_omega = Complex64::new(0.0, bp.omega);
        for j in 0..g.len() {
            assert!((wp.w.values[j] + wm.w.values[j] - phi.values[j]).norm() < 1e-14);
            let back = -i_omega * (wp.w.values[j] - wm.w.values[j]);
            assert!((back - psi.values[j]).norm() < 1e-14);
        }
        let zero = ComplexField::zeros(&g);
        let half = initial_envelope(&phi, &zero, &bp, &p).unwrap();
        assert!(half.w.values.iter().zip(&phi.values).all(|(a, b)| (a - 0.5 * b).norm() == 0.0));
    }

    #[test]
    fn plane_wave_closed_form() {
        let p = params(1.0);
        let b = branch(1, 1, &p).unwrap();
        let g = slow();
        let a = Complex64::new(0.6, 0.3);
        let c = ComplexField::from_fn(&g, |_| a);
        let e = initial_envelope(&c.clone(), &ComplexField::zeros(&g), &b, &p).unwrap();
        let e = Envelope { w: c, ..e };
        let out = solve_nls(&e, 1.0, 1e-3).unwrap();
        let gamma = e.coeffs.gamma;
        let exact = a * Complex64::from_polar(1.0, gamma * a.norm_sqr() * 1.0);
        assert!(out.w.values.iter().all(|v| (v - exact).norm() < 1e-10));
    }

    #[test]
    fn linear_mode_rotates() {
        let p = params(0.0);
        let b = branch(1, 1, &p).unwrap();
        let g = slow();
        let kx = 2.0 * PI * 3.0 / 40.0;
        let ky = 2.0 * PI * 2.0 / 40.0;
        let w = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, kx * x[0] + ky * x[1]));
        let e = Envelope { theta: 0.0, w: w.clone(), coeffs: nls_coefficients(&b, &p), branch: b };
        let out = solve_nls(&e, 0.37, 0.01).unwrap();
        let rate = e.coeffs.alpha * kx * kx + e.coeffs.delta * ky * ky;
        let rot = Complex64::from_polar(1.0, -rate * 0.37);
        for (o, v) in out.w.values.iter().zip(&w.values) {
            assert!((o - v * rot).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_and_zero_invariants() {
        let p = params(1.0);
        let b = branch(1, 1, &p).unwrap();
        let g = slow();
        let e = initial_envelope(&gaussian(&g), &ComplexField::zeros(&g), &b, &p).unwrap();
        assert_eq!(solve_nls(&e, 0.0, 1e-3).unwrap(), e);
        let z = Envelope { w: ComplexField::zeros(&g), ..e.clone() };
        assert_eq!(mass(&z), 0.0);
        assert_eq!(hamiltonian(&z), 0.0);
        let a = Complex64::new(0.5, 0.5);
        let c = Envelope { w: ComplexField::from_fn(&g, |_| a), ..e };
        assert!((mass(&c) - a.norm_sqr() * 1600.0).abs() < 1e-10);
    }

    #[test]
    fn conjugate_branch_mirrors_trajectory() {
        let p = params(1.0);
        let b = branch(1, 1, &p).unwrap();
        let g = slow();
        let w0 = ComplexField::from_fn(&g, |x| {
            Complex64::new(1.0, 0.4 * x[0] / 4.0) * (-(x[0] * x[0] + x[1] * x[1]) / 16.0).exp()
        });
        let e = Envelope { theta: 0.0, w: w0.clone(), coeffs: nls_coefficients(&b, &p), branch: b };
        let m = Envelope { theta: 0.0, w: w0.conj(), coeffs: e.coeffs.conj(), branch: branch(1, -1, &p).unwrap() };
        let a = solve_nls(&e, 0.3, 1e-3).unwrap();
        let c = solve_nls(&m, 0.3, 1e-3).unwrap();
        for (x, y) in a.w.values.iter().zip(&c.w.values) {
            assert!((x.conj() - y).norm() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_gradient_matches_finite_differences() {
        let p = params(1.0);
        let b = branch(1, 1, &p).unwrap();
        let g = Grid::new(vec![20.0, 20.0], vec![16, 16]).unwrap();
        let w = ComplexField::from_fn(&g, |x| {
            Complex64::new(1.0, 0.5 * x[1] / 3.0) * (-(x[0] * x[0] + x[1] * x[1]) / 10.0).exp()
        });
        let e = Envelope { theta: 0.0, w, coeffs: nls_coefficients(&b, &p), branch: b };
        let grad = hamiltonian_gradient(&e);
        let h = 1e-6;
        let dv = g.cell_volume();
        for j in [0, 37, 100, 136, 200] {
            let mut d = [0.0; 2];
            for (part, dir) in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)].iter().enumerate() {
                let mut plus = e.clone();
                plus.w.values[j] += h * dir;
                let mut minus = e.clone();
                minus.w.values[j] -= h * dir;
                d[part] = (hamiltonian(&plus) - hamiltonian(&minus)) / (2.0 * h);
            }
            let fd = Complex64::new(d[0], d[1]) / (2.0 * dv);
            let scale = grad.max_abs();
            assert!((fd - grad.values[j]).norm() < 1e-5 * scale, "point {j}: {fd} vs {}", grad.values[j]);
        }
    }
}
