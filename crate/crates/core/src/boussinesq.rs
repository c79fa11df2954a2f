//! Full Boussinesq Cauchy problem on a periodic box:
//! `u_tt − Δu + ν(∂_x⁴ + Σ ∂_{y_j}⁴)u + div g(∇u) = 0`.
//!
//! The linear part is advanced exactly mode by mode; the flux divergence
//! enters through a Strang-split kick on `u_t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::PhysicalParams;
use crate::error::{Error, Result};
use crate::nonlinearity::TaylorNonlinearity;
use crate::spectral::{
    forward_transform, inverse_transform, Grid, RealField, SpectralField,
};

/// Relative boundary magnitude below which a profile counts as decayed.
pub const DECAY_TOL: f64 = 1e-10;

/// Analytic envelope families evaluated in slow variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    /// `amplitude · exp(−|r − center|² / width²) · e^{i phase}`
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · sech(|r − center| / width) · e^{i phase}`
    Sech {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    Zero,
}

impl Profile {
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Profile::Gaussian { amplitude, width, center: vec![], phase: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Gaussian { amplitude, .. } | Profile::Sech { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            Profile::Zero => Ok(()),
            Profile::Gaussian { amplitude, width, center, phase }
            | Profile::Sech { amplitude, width, center, phase } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::param(format!("{name}.width"), format!("{width} must be positive")));
                }
                if !amplitude.is_finite() || !phase.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::param(name, "non-finite profile parameter"));
                }
                Ok(())
            }
        }
    }

    fn radius2(center: &[f64], width: f64, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(a, &xa)| {
                let d = xa - center.get(a).copied().unwrap_or(0.0);
                d * d
            })
            .sum::<f64>()
            / (width * width)
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        match self {
            Profile::Zero => Complex64::new(0.0, 0.0),
            Profile::Gaussian { amplitude, width, center, phase } => {
                Complex64::from_polar(amplitude * (-Self::radius2(center, *width, x)).exp(), *phase)
            }
            Profile::Sech { amplitude, width, center, phase } => {
                let r = Self::radius2(center, *width, x).sqrt();
                Complex64::from_polar(amplitude / r.cosh(), *phase)
            }
        }
    }

    /// Complex samples on `grid`.
    pub fn sample(&self, grid: &Grid) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        if self.is_zero() {
            return out;
        }
        let coords: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.coordinates(a)).collect();
        let mut x = vec![0.0; grid.dims()];
        grid.for_each_index(|flat, idx| {
            for a in 0..x.len() {
                x[a] = coords[a][idx[a]];
            }
            out[flat] = self.evaluate(&x);
        });
        out
    }

    /// Largest boundary magnitude relative to the interior peak; zero for a
    /// vanishing profile.
    pub fn boundary_ratio(&self, grid: &Grid) -> f64 {
        let values = self.sample(grid);
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        grid.for_each_index(|flat, idx| {
            if idx[..grid.dims()].contains(&0) {
                edge = edge.max(values[flat].norm());
            }
        });
        edge / peak
    }
}

/// Plane-wave initial data `ε Σ Λ_k e^{ikx}` with `ψ₀ ≡ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierData {
    pub eps: f64,
    pub phi0: Profile,
    pub phi1: Profile,
    pub psi1: Profile,
    pub params: PhysicalParams,
}

impl CarrierData {
    /// Checks ε, the profile parameters and their decay inside `slow_grid`.
    pub fn validate(&self, slow_grid: &Grid) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps", format!("{} outside (0, 1)", self.eps)));
        }
        for (name, p) in [("phi0", &self.phi0), ("phi1", &self.phi1), ("psi1", &self.psi1)] {
            p.validate(name)?;
            let ratio = p.boundary_ratio(slow_grid);
            if ratio > DECAY_TOL {
                return Err(Error::param(
                    name,
                    format!("profile has not decayed at the slow-box edge (ratio {ratio:.2e})"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoussinesqState {
    pub t: f64,
    pub u: RealField,
    pub ut: RealField,
}

impl BoussinesqState {
    pub fn new(t: f64, u: RealField, ut: RealField) -> Result<Self> {
        u.grid.ensure_same(&ut.grid, "state fields")?;
        if !(u.is_finite() && ut.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        Ok(BoussinesqState { t, u, ut })
    }

    pub fn grid(&self) -> &Grid {
        &self.u.grid
    }
}

/// Fails unless the fast-axis period is a whole number of carrier wavelengths.
pub fn check_commensurate(grid: &Grid) -> Result<()> {
    let l = grid.lengths()[0];
    let periods = l / (2.0 * PI);
    let nearest = periods.round().max(1.0);
    if (periods - nearest).abs() > 1e-9 * nearest {
        return Err(Error::Incommensurate { length: l, required: 2.0 * PI * nearest });
    }
    Ok(())
}

/// `u = ε[φ₀ + 2Re(φ₁ e^{ix})]`, `u_t = ε 2Re(ψ₁ e^{ix})`, profiles taken at `(εx, εȳ)`.
pub fn init_from_plane_waves(c: &CarrierData, grid: &Grid) -> Result<BoussinesqState> {
    check_commensurate(grid)?;
    let eps = c.eps;
    let slow = grid.scaled(eps)?;
    let phi0 = c.phi0.sample(&slow);
    let phi1 = c.phi1.sample(&slow);
    let psi1 = c.psi1.sample(&slow);
    let x = grid.coordinates(0);
    let carrier: Vec<Complex64> = x.iter().map(|&xj| Complex64::from_polar(1.0, xj)).collect();
    let mut u = vec![0.0; grid.len()];
    let mut ut = vec![0.0; grid.len()];
    grid.for_each_index(|flat, idx| {
        let e = carrier[idx[0]];
        u[flat] = eps * (phi0[flat].re + 2.0 * (phi1[flat] * e).re);
        ut[flat] = eps * 2.0 * (psi1[flat] * e).re;
    });
    BoussinesqState::new(0.0, RealField::new(grid.clone(), u)?, RealField::new(grid.clone(), ut)?)
}

/// Linear frequency `λ ≥ 0` of every stored mode.
pub fn mode_frequencies(grid: &Grid, nu: f64) -> Vec<f64> {
    let k = grid.wavenumbers3();
    let mut out = vec![0.0; grid.len()];
    grid.for_each_index(|flat, idx| {
        let mut l2 = 0.0;
        for a in 0..grid.dims() {
            let ka = k[a][idx[a]];
            l2 += ka * ka + nu * ka.powi(4);
        }
        out[flat] = l2.sqrt();
    });
    out
}

pub fn suggest_dt(grid: &Grid, params: &PhysicalParams) -> f64 {
    let lmax = mode_frequencies(grid, params.nu).into_iter().fold(0.0, f64::max);
    if lmax == 0.0 {
        f64::INFINITY
    } else {
        0.5 / lmax
    }
}

/// Per-mode 2×2 rotation for a fixed step.
struct Rotation {
    dt: f64,
    cos: Vec<f64>,
    /// `sin(λdt)/λ`, or `dt` when `λ = 0`
    sinc: Vec<f64>,
    /// `λ sin(λdt)`
    lsin: Vec<f64>,
}

impl Rotation {
    fn new(lambda: &[f64], dt: f64) -> Self {
        let mut cos = Vec::with_capacity(lambda.len());
        let mut sinc = Vec::with_capacity(lambda.len());
        let mut lsin = Vec::with_capacity(lambda.len());
        for &l in lambda {
            let (s, c) = (l * dt).sin_cos();
            cos.push(c);
            sinc.push(if l == 0.0 { dt } else { s / l });
            lsin.push(l * s);
        }
        Rotation { dt, cos, sinc, lsin }
    }

    fn apply(&self, u: &mut [Complex64], ut: &mut [Complex64]) {
        for i in 0..u.len() {
            let (a, b) = (u[i], ut[i]);
            u[i] = self.cos[i] * a + self.sinc[i] * b;
            ut[i] = -self.lsin[i] * a + self.cos[i] * b;
        }
    }
}

/// Exact flow of the linear part over `dt` (any sign).
pub fn linear_propagator(s: &BoussinesqState, dt: f64, params: &PhysicalParams) -> Result<BoussinesqState> {
    let grid = s.grid();
    let lambda = mode_frequencies(grid, params.nu);
    let mut u = forward_transform(&s.u);
    let mut ut = forward_transform(&s.ut);
    Rotation::new(&lambda, dt).apply(&mut u.modes, &mut ut.modes);
    BoussinesqState::new(s.t + dt, inverse_transform(&u)?, inverse_transform(&ut)?)
}

/// `‖u_t‖² + ‖∇u‖² + ν‖∂_x²u‖² + ν Σ ‖∂_{y_j}²u‖²`, the invariant of the linear flow.
pub fn linear_energy(s: &BoussinesqState, params: &PhysicalParams) -> f64 {
    let grid = s.grid();
    let lambda = mode_frequencies(grid, params.nu);
    let u = forward_transform(&s.u);
    let ut = forward_transform(&s.ut);
    let sum: f64 = (0..grid.len())
        .map(|i| ut.modes[i].norm_sqr() + lambda[i] * lambda[i] * u.modes[i].norm_sqr())
        .sum();
    sum * grid.volume()
}

/// Callback fired after every `stride` steps with a snapshot of the state.
pub struct Observer<'a> {
    pub stride: usize,
    pub callback: Box<dyn FnMut(&BoussinesqState) + 'a>,
}

/// Strang-split integrator holding the state in spectral form.
pub struct Stepper {
    t: f64,
    u: SpectralField,
    ut: SpectralField,
    lambda: Vec<f64>,
    dt: f64,
    half: Rotation,
    nonlinearity: TaylorNonlinearity,
    steps: usize,
}

impl Stepper {
    pub fn new(s: &BoussinesqState, dt: f64, nonlinearity: &TaylorNonlinearity, params: &PhysicalParams) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("{dt} must be positive")));
        }
        if nonlinearity.dims() != s.grid().dims() {
            return Err(Error::GridMismatch(format!(
                "nonlinearity has {} components but the grid has {} axes",
                nonlinearity.dims(),
                s.grid().dims()
            )));
        }
        let lambda = mode_frequencies(s.grid(), params.nu);
        let half = Rotation::new(&lambda, 0.5 * dt);
        Ok(Stepper {
            t: s.t,
            u: forward_transform(&s.u),
            ut: forward_transform(&s.ut),
            lambda,
            dt,
            half,
            nonlinearity: nonlinearity.clone(),
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn spectra(&self) -> (&SpectralField, &SpectralField) {
        (&self.u, &self.ut)
    }

    fn step_with(&mut self, dt: f64) -> Result<()> {
        let partial;
        let half = if dt == self.dt {
            &self.half
        } else {
            partial = Rotation::new(&self.lambda, 0.5 * dt);
            &partial
        };
        debug_assert!((half.dt - 0.5 * dt).abs() <= 1e-15 * dt.abs());
        half.apply(&mut self.u.modes, &mut self.ut.modes);
        if !self.nonlinearity.is_zero() {
            let div = self.nonlinearity.divergence_spectral(&self.u)?;
            self.ut.modes.iter_mut().zip(&div.modes).for_each(|(a, b)| *a -= dt * b);
        }
        half.apply(&mut self.u.modes, &mut self.ut.modes);
        self.t += dt;
        self.steps += 1;
        let finite = |m: &[Complex64]| m.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !(finite(&self.u.modes) && finite(&self.ut.modes)) {
            return Err(Error::BlowUp { time: self.t });
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_with(self.dt)
    }

    /// Fixed steps up to `t_end`, the last one shortened to land exactly.
    pub fn advance_to(&mut self, t_end: f64, observers: &mut [Observer<'_>]) -> Result<()> {
        if t_end < self.t {
            return Err(Error::param("t_end", format!("{t_end} precedes the current time {}", self.t)));
        }
        let tol = 1e-12 * self.dt.max(t_end.abs() * 1e-3);
        while t_end - self.t > tol {
            let h = self.dt.min(t_end - self.t);
            self.step_with(h)?;
            if !observers.is_empty() {
                let fire: Vec<usize> = (0..observers.len())
                    .filter(|&i| observers[i].stride > 0 && self.steps % observers[i].stride == 0)
                    .collect();
                if !fire.is_empty() {
                    let snap = self.snapshot()?;
                    for i in fire {
                        (observers[i].callback)(&snap);
                    }
                }
            }
        }
        self.t = t_end.max(self.t);
        Ok(())
    }

    pub fn snapshot(&self) -> Result<BoussinesqState> {
        BoussinesqState::new(self.t, inverse_transform(&self.u)?, inverse_transform(&self.ut)?)
    }
}

/// One Strang step: half linear flow, kick `u_t ← u_t − dt·div g(∇u)`, half linear flow.
pub fn step(
    s: &BoussinesqState,
    dt: f64,
    nonlinearity: &TaylorNonlinearity,
    params: &PhysicalParams,
) -> Result<BoussinesqState> {
    let mut st = Stepper::new(s, dt, nonlinearity, params)?;
    st.step()?;
    st.snapshot()
}

pub fn solve_until(
    s: &BoussinesqState,
    t_end: f64,
    dt: f64,
    nonlinearity: &TaylorNonlinearity,
    params: &PhysicalParams,
    observers: &mut [Observer<'_>],
) -> Result<BoussinesqState> {
    if t_end == s.t {
        return Ok(s.clone());
    }
    let mut st = Stepper::new(s, dt, nonlinearity, params)?;
    st.advance_to(t_end, observers)?;
    st.snapshot()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::forward_complex;

    fn params(nu: f64) -> PhysicalParams {
        PhysicalParams::new(nu, TaylorNonlinearity::zero(2)).unwrap()
    }

    fn carrier(eps: f64, phi0: Profile, phi1: Profile, psi1: Profile) -> CarrierData {
        CarrierData { eps, phi0, phi1, psi1, params: params(1.0) }
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let g = Grid::new(vec![2.0 * PI * 8.0, 10.0], vec![32, 8]).unwrap();
        let s = init_from_plane_waves(&carrier(0.1, Profile::Zero, Profile::Zero, Profile::Zero), &g).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.ut.max_abs(), 0.0);
    }

    #[test]
    fn incommensurate_box_names_fix() {
        let g = Grid::new(vec![50.0, 10.0], vec![32, 8]).unwrap();
        let err = init_from_plane_waves(&carrier(0.1, Profile::Zero, Profile::Zero, Profile::Zero), &g).unwrap_err();
        assert!(err.to_string().contains("50.26"));
        match err {
            Error::Incommensurate { required, .. } => assert!((required - 16.0 * PI).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn carrier_amplitude_and_projection() {
        let eps = 0.1;
        let g = Grid::new(vec![2.0 * PI * 64.0, 2.0 * PI * 16.0], vec![512, 32]).unwrap();
        let c = carrier(eps, Profile::Zero, Profile::gaussian(1.3, 4.0), Profile::Zero);
        let s = init_from_plane_waves(&c, &g).unwrap();
        assert!((s.u.max_abs() - 2.0 * eps * 1.3).abs() < 1e-3);

        // Shift the k = 1 carrier to the origin and low-pass.
        let x = g.coordinates(0);
        let mut shifted = s.u.to_complex();
        g.for_each_index(|flat, idx| shifted.values[flat] *= Complex64::from_polar(1.0, -x[idx[0]]));
        let mut spec = forward_complex(&shifted);
        let kx = g.wavenumbers(0);
        g.for_each_index(|flat, idx| {
            if kx[idx[0]].abs() > 0.5 {
                spec.modes[flat] = Complex64::new(0.0, 0.0);
            }
        });
        let env = crate::spectral::inverse_complex(&spec);
        let slow = g.scaled(eps).unwrap();
        let expect = c.phi1.sample(&slow);
        for (a, b) in env.values.iter().zip(&expect) {
            assert!((a - eps * b).norm() < 1e-10);
        }
    }

    #[test]
    fn linear_propagator_properties() {
        let p = params(1.0);
        let g = Grid::new(vec![2.0 * PI, 2.0 * PI], vec![16, 8]).unwrap();
        let u = RealField::from_fn(&g, |x| x[0].cos());
        let s = BoussinesqState::new(0.0, u.clone(), RealField::zeros(&g)).unwrap();
        assert!(linear_propagator(&s, 0.0, &p).unwrap().u.sub(&u).unwrap().max_abs() < 1e-15);
        let t = 1.7;
        let out = linear_propagator(&s, t, &p).unwrap();
        let expect = u.clone().scale((2f64.sqrt() * t).cos());
        assert!(out.u.sub(&expect).unwrap().max_abs() < 1e-13);

        let mixed = BoussinesqState::new(
            0.0,
            RealField::from_fn(&g, |x| (x[0] + 2.0 * x[1]).sin() + 0.3),
            RealField::from_fn(&g, |x| (3.0 * x[0]).cos() * x[1].sin() + 0.1),
        )
        .unwrap();
        let e0 = linear_energy(&mixed, &p);
        let moved = linear_propagator(&mixed, 3.3, &p).unwrap();
        assert!((linear_energy(&moved, &p) - e0).abs() < 1e-12 * e0);
        let back = linear_propagator(&moved, -3.3, &p).unwrap();
        assert!(back.u.sub(&mixed.u).unwrap().max_abs() < 1e-12);
        assert!(back.ut.sub(&mixed.ut).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn suggested_dt_monotone() {
        let p = params(1.0);
        let g1 = Grid::new(vec![2.0 * PI * 32.0, 10.0], vec![64, 8]).unwrap();
        let g2 = Grid::new(vec![2.0 * PI * 32.0, 10.0], vec![128, 8]).unwrap();
        let d1 = suggest_dt(&g1, &p);
        let d2 = suggest_dt(&g2, &p);
        assert!(d1.is_finite() && d1 > 0.0);
        assert!(d2 < d1);
        assert!(suggest_dt(&g1, &params(4.0)) < d1);
    }

    #[test]
    fn solve_until_identity_when_no_time_passes() {
        let p = params(1.0);
        let g = Grid::new(vec![2.0 * PI, 3.0], vec![8, 8]).unwrap();
        let s = BoussinesqState::new(0.5, RealField::from_fn(&g, |x| x[0].sin()), RealField::zeros(&g)).unwrap();
        let out = solve_until(&s, 0.5, 0.01, &TaylorNonlinearity::cubic(2, 1.0), &p, &mut []).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn observers_fire_on_stride() {
        let p = params(1.0);
        let g = Grid::new(vec![2.0 * PI, 3.0], vec![8, 8]).unwrap();
        let s = BoussinesqState::new(0.0, RealField::from_fn(&g, |x| x[0].sin()), RealField::zeros(&g)).unwrap();
        let mut times = Vec::new();
        {
            let mut obs = [Observer { stride: 3, callback: Box::new(|st: &BoussinesqState| times.push(st.t)) }];
            solve_until(&s, 1.0, 0.1, &TaylorNonlinearity::zero(2), &p, &mut obs).unwrap();
        }
        assert_eq!(times.len(), 3);
        assert!((times[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn profile_decay() {
        let slow = Grid::new(vec![40.0, 40.0], vec![64, 32]).unwrap();
        assert!(Profile::gaussian(1.0, 4.0).boundary_ratio(&slow) < DECAY_TOL);
        assert!(Profile::gaussian(1.0, 10.0).boundary_ratio(&slow) > DECAY_TOL);
        let c = carrier(0.2, Profile::gaussian(1.0, 10.0), Profile::Zero, Profile::Zero);
        assert!(c.validate(&slow).is_err());
        let c = carrier(0.2, Profile::gaussian(1.0, 4.0), Profile::Zero, Profile::Zero);
        assert!(c.validate(&slow).is_ok());
    }
}
