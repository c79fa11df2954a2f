//! Three-term multiple-scales approximation of the Boussinesq solution.
//!
//! With `τ = εt`, `θ = ε²t` and, per branch `b = ±`, the characteristic
//! coordinate `σ_b = ξ − ω′_b τ` (signed group velocity), the composed field is
//!
//! ```text
//! u ≈ ε [v₀ + 2Re Σ_b A_b e^{i(x − ω_b t)}]
//!   + ε² 2Re Σ_b v¹_b e^{i(x − ω_b t)}
//!   + ε³ 2Re Σ_h (S_h / D_h) e^{i(k_h x − Ω_h t)}
//! ```
//!
//! where `A_b = w_b(σ_b, η, θ)` solves the envelope equation on branch `b`,
//!
//! ```text
//! v¹_b = φ_b(σ_b, η) + 2iγ_b A_b ∫₀^τ |w_{−b}|²(σ_b + 2ω′_b μ, η, θ) dμ,
//! φ_b  = −ω′_b ∂_ξψ₁ / (2ω₁²),
//! ```
//!
//! and the last sum runs over the six non-resonant harmonics of the cubic
//! source `S = −g₁₃₀ ∂_x (∂_x u)³` evaluated on the leading carrier pair, with
//! `D_h = −Ω_h² + k_h² + νk_h⁴`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boussinesq::{mode_frequencies, CarrierData};
use crate::dispersion::{branch, linear_symbol, nls_coefficients, DispersionBranch, NlsCoefficients, PhysicalParams};
use crate::error::{Error, Result};
use crate::nls::{initial_envelope, mass, hamiltonian, ConservationSample, Envelope, NlsStepper};
use crate::nonlinearity::TaylorNonlinearity;
use crate::spectral::{
    forward_complex, forward_transform, inverse_complex, resample, shifted_quadrature, spectral_derivative,
    ComplexField, Grid, RealField, SpectralField,
};
use crate::wave::wave_spectra;

/// Denominators smaller than this are treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeOptions {
    /// Envelope time step.
    pub dtheta: f64,
    /// Largest slow time `θ` that may be requested.
    pub horizon: f64,
    /// Store every `snapshot_stride`-th envelope step.
    pub snapshot_stride: usize,
    /// Trapezoid nodes for the cross-phase integral.
    pub mu_nodes: usize,
    /// Zero the envelope coefficients (pure transport).
    #[serde(default)]
    pub freeze: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions { dtheta: 1e-3, horizon: 0.5, snapshot_stride: 10, mu_nodes: 32768, freeze: false }
    }
}

impl EnvelopeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dtheta.is_finite() && self.dtheta > 0.0) {
            return Err(Error::config("composer.dtheta", "must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::config("composer.horizon", "must be non-negative"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::config("composer.snapshot_stride", "must be at least 1"));
        }
        if self.mu_nodes < 2 {
            return Err(Error::config("composer.mu_nodes", format!("{} nodes; at least 2 required", self.mu_nodes)));
        }
        Ok(())
    }
}

/// One carrier harmonic `value · e^{i(k x − Ω t)}` with `Ω = omega_multiple · ω₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonic {
    pub k: i32,
    pub omega_multiple: i32,
    pub value: Complex64,
}

impl Harmonic {
    pub fn is_resonant(&self) -> bool {
        self.k.abs() == 1 && self.omega_multiple.abs() == 1
    }
}

/// Harmonics with `k > 0` of `−g ∂_x (∂_x v)³` for
/// `v = 2Re(a e^{i(x − ω₁t)} + b e^{i(x + ω₁t)})`. The `k < 0` harmonics are
/// the conjugates.
pub fn cubic_source_harmonics(a: Complex64, b: Complex64, g: f64) -> [Harmonic; 8] {
    let h = |k, m, value| Harmonic { k, omega_multiple: m, value };
    let (aa, bb) = (a.norm_sqr(), b.norm_sqr());
    [
        h(1, 1, 3.0 * g * (aa + 2.0 * bb) * a),
        h(1, -1, 3.0 * g * (bb + 2.0 * aa) * b),
        h(3, 3, -3.0 * g * a * a * a),
        h(3, 1, -9.0 * g * a * a * b),
        h(3, -1, -9.0 * g * a * b * b),
        h(3, -3, -3.0 * g * b * b * b),
        h(1, 3, 3.0 * g * a * a * b.conj()),
        h(1, -3, 3.0 * g * b * b * a.conj()),
    ]
}

/// `(k, Ω, −Ω² + k² + νk⁴)` for the non-resonant harmonics with `k > 0`.
pub fn second_correction_denominators(params: &PhysicalParams) -> Result<Vec<(i32, f64, f64)>> {
    let w1 = branch(1, 1, params)?.omega;
    cubic_source_harmonics(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0)
        .iter()
        .filter(|h| !h.is_resonant())
        .map(|h| {
            let omega = h.omega_multiple as f64 * w1;
            let d = linear_symbol(h.k as f64, omega, params.nu);
            if d.abs() < RESONANCE_TOL {
                Err(Error::Resonance { k: h.k, omega, value: d })
            } else {
                Ok((h.k, omega, d))
            }
        })
        .collect()
}

/// Zero-harmonic data, both carrier envelopes and their stored trajectories.
#[derive(Clone, Debug)]
pub struct EnvelopeSet {
    pub eps: f64,
    pub params: PhysicalParams,
    pub slow_grid: Grid,
    pub options: EnvelopeOptions,
    pub branches: [DispersionBranch; 2],
    pub coeffs: [NlsCoefficients; 2],
    phi0: SpectralField,
    dpsi1: SpectralField,
    snapshots: [Vec<Envelope>; 2],
    spacing: f64,
}

pub fn build_envelopes(c: &CarrierData, slow_grid: &Grid, options: &EnvelopeOptions) -> Result<EnvelopeSet> {
    c.validate(slow_grid)?;
    options.validate()?;
    let params = &c.params;
    let sample = |p: &crate::boussinesq::Profile| ComplexField::new(slow_grid.clone(), p.sample(slow_grid));
    let phi0 = forward_transform(&sample(&c.phi0)?.re());
    let phi1 = sample(&c.phi1)?;
    let psi1 = sample(&c.psi1)?;
    let dpsi1 = spectral_derivative(&forward_complex(&psi1), 0, 1)?;

    let branches = [branch(1, 1, params)?, branch(1, -1, params)?];
    let mut coeffs = [nls_coefficients(&branches[0], params), nls_coefficients(&branches[1], params)];
    if options.freeze {
        coeffs = [NlsCoefficients { alpha: 0.0, delta: 0.0, gamma: 0.0 }; 2];
    }
    let spacing = options.dtheta * options.snapshot_stride as f64;
    let mut snapshots: [Vec<Envelope>; 2] = [Vec::new(), Vec::new()];
    for (i, b) in branches.iter().enumerate() {
        let mut e = initial_envelope(&phi1, &psi1, b, params)?;
        e.coeffs = coeffs[i];
        let stepper = NlsStepper::new(slow_grid, &coeffs[i], options.dtheta)?;
        snapshots[i].push(e.clone());
        let mut j = 1usize;
        while (j as f64 - 1.0) * spacing < options.horizon {
            stepper.advance_to(&mut e, j as f64 * spacing)?;
            snapshots[i].push(e.clone());
            j += 1;
        }
    }
    Ok(EnvelopeSet {
        eps: c.eps,
        params: params.clone(),
        slow_grid: slow_grid.clone(),
        options: options.clone(),
        branches,
        coeffs,
        phi0,
        dpsi1,
        snapshots,
        spacing,
    })
}

impl EnvelopeSet {
    pub fn omega1(&self) -> f64 {
        self.branches[0].omega
    }

    /// Envelope of branch `b` (0 for `+ω`, 1 for `−ω`) at slow time `theta`.
    pub fn envelope_at(&self, b: usize, theta: f64) -> Result<Envelope> {
        let horizon = self.options.horizon;
        if theta > horizon * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Horizon { requested: theta, horizon });
        }
        let snaps = &self.snapshots[b];
        let j = ((theta / self.spacing).floor().max(0.0) as usize).min(snaps.len() - 1);
        let mut e = snaps[j].clone();
        let stepper = NlsStepper::new(&self.slow_grid, &self.coeffs[b], self.options.dtheta)?;
        if theta >= e.theta {
            stepper.advance_to(&mut e, theta)?;
        } else {
            let back = theta - e.theta;
            stepper.step_by(&mut e, back)?;
        }
        Ok(e)
    }

    pub fn envelopes_at(&self, theta: f64) -> Result<[Envelope; 2]> {
        Ok([self.envelope_at(0, theta)?, self.envelope_at(1, theta)?])
    }

    /// Mass and Hamiltonian along the stored trajectory of branch `b`.
    pub fn conservation_log(&self, b: usize) -> Vec<ConservationSample> {
        self.snapshots[b]
            .iter()
            .map(|e| ConservationSample { theta: e.theta, mass: mass(e), hamiltonian: hamiltonian(e) })
            .collect()
    }

    /// Stored envelope spectra of branch `b` with their slow times.
    pub fn envelope_spectra(&self, b: usize) -> Vec<(f64, SpectralField)> {
        self.snapshots[b].iter().map(|e| (e.theta, forward_complex(&e.w))).collect()
    }

    pub fn phi0_spectrum(&self) -> &SpectralField {
        &self.phi0
    }

    fn check_fast_grid(&self, fast: &Grid) -> Result<()> {
        let slow = &self.slow_grid;
        let ok = fast.dims() == slow.dims()
            && fast
                .lengths()
                .iter()
                .zip(slow.lengths())
                .all(|(lf, ls)| (lf * self.eps - ls).abs() <= 1e-9 * ls);
        if !ok {
            return Err(Error::GridMismatch(format!(
                "fast grid {:?} does not cover the slow box {:?} at ε = {}",
                fast.lengths(),
                slow.lengths(),
                self.eps
            )));
        }
        Ok(())
    }
}

/// Leading carrier amplitudes sampled on the fast grid at one instant.
struct Slice<'a> {
    set: &'a EnvelopeSet,
    fast: &'a Grid,
    t: f64,
    tau: f64,
    envelopes: [Envelope; 2],
    amplitudes: [ComplexField; 2],
}

impl<'a> Slice<'a> {
    fn new(set: &'a EnvelopeSet, fast: &'a Grid, t: f64, envelopes: [Envelope; 2]) -> Result<Self> {
        set.check_fast_grid(fast)?;
        let tau = set.eps * t;
        let mut amplitudes = Vec::with_capacity(2);
        for (b, e) in envelopes.iter().enumerate() {
            let spec = forward_complex(&e.w);
            amplitudes.push(resample(&spec, fast, &set.shift(b, tau))?);
        }
        let amplitudes: [ComplexField; 2] = amplitudes.try_into().expect("two branches");
        Ok(Slice { set, fast, t, tau, envelopes, amplitudes })
    }

    /// `e^{i(k x − m ω₁ t)}` along the fast axis.
    fn carrier(&self, k: i32, m: i32) -> Vec<Complex64> {
        let w1 = self.set.omega1();
        self.fast
            .coordinates(0)
            .iter()
            .map(|&x| Complex64::from_polar(1.0, k as f64 * x - m as f64 * w1 * self.t))
            .collect()
    }

    /// `2Re Σ fields[i] · carriers[i]`
    fn real_sum(&self, terms: &[(&[Complex64], Vec<Complex64>)]) -> RealField {
        let mut out = vec![0.0; self.fast.len()];
        self.fast.for_each_index(|flat, idx| {
            out[flat] = 2.0 * terms.iter().map(|(f, c)| (f[flat] * c[idx[0]]).re).sum::<f64>();
        });
        RealField { grid: self.fast.clone(), values: out }
    }

    fn v0(&self) -> Result<RealField> {
        let (v, _) = wave_spectra(&self.set.phi0, self.tau);
        Ok(resample(&v, self.fast, &vec![0.0; self.fast.dims()])?.re())
    }

    fn leading(&self) -> Result<RealField> {
        let zero = self.v0()?;
        let carriers = [self.carrier(1, 1), self.carrier(1, -1)];
        let osc = self.real_sum(&[
            (&self.amplitudes[0].values, carriers[0].clone()),
            (&self.amplitudes[1].values, carriers[1].clone()),
        ]);
        zero.add(&osc)
    }

    fn first(&self) -> Result<RealField> {
        let set = self.set;
        let w1 = set.omega1();
        let mut parts = Vec::with_capacity(2);
        for b in 0..2 {
            let vg = set.branches[b].vg;
            let shift = set.shift(b, self.tau);
            let phi_b = set.dpsi1.clone().scale(Complex64::new(-vg / (2.0 * w1 * w1), 0.0));
            let mut v1 = resample(&phi_b, self.fast, &shift)?;
            let gamma = set.coeffs[b].gamma;
            if gamma != 0.0 && self.tau != 0.0 {
                let integral = self.cross_phase_integral(b)?;
                let c = Complex64::new(0.0, 2.0 * gamma);
                for ((v, a), i) in v1.values.iter_mut().zip(&self.amplitudes[b].values).zip(&integral.values) {
                    *v += c * a * i.re;
                }
            }
            parts.push(v1);
        }
        Ok(self.real_sum(&[
            (&parts[0].values, self.carrier(1, 1)),
            (&parts[1].values, self.carrier(1, -1)),
        ]))
    }

    /// `∫₀^τ |w_{−b}|²(σ_b + 2ω′_b μ) dμ` on the fast grid.
    fn cross_phase_integral(&self, b: usize) -> Result<ComplexField> {
        let set = self.set;
        let other = &self.envelopes[1 - b];
        let fine_points: Vec<usize> = set.slow_grid.points().iter().map(|n| 2 * n).collect();
        let fine = set.slow_grid.with_points(fine_points)?;
        let zero_shift = vec![0.0; fine.dims()];
        let up = resample(&forward_complex(&other.w), &fine, &zero_shift)?;
        let density = ComplexField {
            grid: fine.clone(),
            values: up.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect(),
        };
        let n = set.options.mu_nodes;
        let h = self.tau / (n - 1) as f64;
        let vg = set.branches[b].vg;
        let shifts: Vec<f64> = (0..n).map(|q| 2.0 * vg * h * q as f64).collect();
        let mut weights = vec![h; n];
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        let integral = shifted_quadrature(&forward_complex(&density), 0, &shifts, &weights)?;
        resample(&integral, self.fast, &set.shift(b, self.tau))
    }

    fn second(&self) -> Result<RealField> {
        let set = self.set;
        let g = set.params.g130();
        if g == 0.0 {
            return Ok(RealField::zeros(self.fast));
        }
        let denominators = second_correction_denominators(&set.params)?;
        let len = self.fast.len();
        let mut fields: Vec<(i32, i32, Vec<Complex64>)> = Vec::new();
        for h in cubic_source_harmonics(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), g) {
            if !h.is_resonant() {
                fields.push((h.k, h.omega_multiple, vec![Complex64::new(0.0, 0.0); len]));
            }
        }
        let (a, b) = (&self.amplitudes[0].values, &self.amplitudes[1].values);
        for i in 0..len {
            let hs = cubic_source_harmonics(a[i], b[i], g);
            for (f, h) in fields.iter_mut().zip(hs.iter().filter(|h| !h.is_resonant())) {
                f.2[i] = h.value;
            }
        }
        let terms: Vec<(Vec<Complex64>, Vec<Complex64>)> = fields
            .into_iter()
            .zip(&denominators)
            .map(|((k, m, mut vals), (_, _, d))| {
                vals.iter_mut().for_each(|v| *v /= d);
                (vals, self.carrier(k, m))
            })
            .collect();
        let refs: Vec<(&[Complex64], Vec<Complex64>)> =
            terms.iter().map(|(v, c)| (v.as_slice(), c.clone())).collect();
        Ok(self.real_sum(&refs))
    }
}

impl EnvelopeSet {
    fn shift(&self, b: usize, tau: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.slow_grid.dims()];
        s[0] = -self.branches[b].vg * tau;
        s
    }

    fn slice<'a>(&'a self, t: f64, fast: &'a Grid) -> Result<Slice<'a>> {
        if t < 0.0 {
            return Err(Error::param("t", format!("{t} is negative")));
        }
        let envelopes = self.envelopes_at(self.eps * self.eps * t)?;
        Slice::new(self, fast, t, envelopes)
    }
}

/// `ε [v₀ + 2Re Σ_b A_b e^{i(x − ω_b t)}]`
pub fn leading_term(es: &EnvelopeSet, t: f64, fast_grid: &Grid) -> Result<RealField> {
    Ok(es.slice(t, fast_grid)?.leading()?.scale(es.eps))
}

/// `ε² 2Re Σ_b v¹_b e^{i(x − ω_b t)}`
pub fn first_correction(es: &EnvelopeSet, t: f64, fast_grid: &Grid) -> Result<RealField> {
    Ok(es.slice(t, fast_grid)?.first()?.scale(es.eps * es.eps))
}

/// `ε³ 2Re Σ_h (S_h / D_h) e^{i(k_h x − Ω_h t)}`
pub fn second_correction(es: &EnvelopeSet, t: f64, fast_grid: &Grid) -> Result<RealField> {
    Ok(es.slice(t, fast_grid)?.second()?.scale(es.eps.powi(3)))
}

fn check_terms(terms: usize) -> Result<()> {
    if (1..=3).contains(&terms) {
        Ok(())
    } else {
        Err(Error::param("terms", format!("{terms} outside 1..=3")))
    }
}

fn compose_slice(slice: &Slice<'_>, terms: usize) -> Result<RealField> {
    let eps = slice.set.eps;
    let mut u = slice.leading()?.scale(eps);
    if terms >= 2 {
        u = u.add(&slice.first()?.scale(eps * eps))?;
    }
    if terms >= 3 {
        u = u.add(&slice.second()?.scale(eps.powi(3)))?;
    }
    Ok(u)
}

/// Sum of the first `terms` orders of the approximation.
pub fn compose_fas(es: &EnvelopeSet, t: f64, fast_grid: &Grid, terms: usize) -> Result<RealField> {
    check_terms(terms)?;
    compose_slice(&es.slice(t, fast_grid)?, terms)
}

/// Evaluator bound to one envelope set, grid and truncation.
pub struct FasBundle<'a> {
    pub set: &'a EnvelopeSet,
    pub grid: Grid,
    pub terms: usize,
}

impl<'a> FasBundle<'a> {
    pub fn new(set: &'a EnvelopeSet, grid: Grid, terms: usize) -> Result<Self> {
        check_terms(terms)?;
        set.check_fast_grid(&grid)?;
        Ok(FasBundle { set, grid, terms })
    }

    /// Each order separately, unscaled by powers of ε, up to `terms`.
    pub fn orders(&self, t: f64) -> Result<Vec<RealField>> {
        let s = self.set.slice(t, &self.grid)?;
        let mut out = vec![s.leading()?];
        if self.terms >= 2 {
            out.push(s.first()?);
        }
        if self.terms >= 3 {
            out.push(s.second()?);
        }
        Ok(out)
    }

    /// Every truncation `1..=terms` at one instant.
    pub fn truncations(&self, t: f64) -> Result<Vec<RealField>> {
        let eps = self.set.eps;
        let mut acc: Option<RealField> = None;
        let mut out = Vec::new();
        for (n, order) in self.orders(t)?.into_iter().enumerate() {
            let scaled = order.scale(eps.powi(n as i32 + 1));
            let next = match acc {
                None => scaled,
                Some(prev) => prev.add(&scaled)?,
            };
            out.push(next.clone());
            acc = Some(next);
        }
        Ok(out)
    }

    pub fn evaluate(&self, t: f64) -> Result<RealField> {
        compose_fas(self.set, t, &self.grid, self.terms)
    }
}

/// Default finite-difference step in `t`: `10⁻⁴` of the carrier period.
pub fn default_time_step(params: &PhysicalParams) -> Result<f64> {
    Ok(1e-4 * 2.0 * std::f64::consts::PI / branch(1, 1, params)?.omega)
}

/// Pointwise residual of the Boussinesq equation on the composed field:
/// `∂_t² u − Δu + ν(∂_x⁴ + Σ∂_y⁴)u + div g(∇u)`, with `∂_t²` by central
/// differences of step `h_t`.
pub fn fas_residual(
    es: &EnvelopeSet,
    t: f64,
    fast_grid: &Grid,
    terms: usize,
    nonlinearity: &TaylorNonlinearity,
    h_t: f64,
) -> Result<RealField> {
    check_terms(terms)?;
    if !(h_t.is_finite() && h_t > 0.0) {
        return Err(Error::param("h_t", format!("{h_t} must be positive")));
    }
    let eps2 = es.eps * es.eps;
    let centre = es.envelopes_at(eps2 * t)?;
    // Both neighbours are single steps off the centre so the second
    // difference sees one smooth path.
    let offset = |h: f64| -> Result<[Envelope; 2]> {
        let mut pair = centre.clone();
        for (b, e) in pair.iter_mut().enumerate() {
            let stepper = NlsStepper::new(&es.slow_grid, &es.coeffs[b], es.options.dtheta)?;
            stepper.step_by(e, eps2 * h)?;
        }
        Ok(pair)
    };
    let plus = offset(h_t)?;
    let minus = offset(-h_t)?;
    let u = compose_slice(&Slice::new(es, fast_grid, t, centre)?, terms)?;
    let up = compose_slice(&Slice::new(es, fast_grid, t + h_t, plus)?, terms)?;
    let um = compose_slice(&Slice::new(es, fast_grid, t - h_t, minus)?, terms)?;

    let lambda = mode_frequencies(fast_grid, es.params.nu);
    let spec = forward_transform(&u);
    let mut linear = spec.clone();
    linear.modes.iter_mut().zip(&lambda).for_each(|(c, l)| *c *= l * l);
    if !nonlinearity.is_zero() {
        let div = nonlinearity.divergence_spectral(&spec)?;
        linear.modes.iter_mut().zip(&div.modes).for_each(|(a, b)| *a += b);
    }
    let spatial = inverse_complex(&linear);
    let inv_h2 = 1.0 / (h_t * h_t);
    let values = (0..u.values.len())
        .map(|i| (up.values[i] - 2.0 * u.values[i] + um.values[i]) * inv_h2 + spatial.values[i].re)
        .collect();
    RealField::new(fast_grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boussinesq::{init_from_plane_waves, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(eps: f64, g: f64, phi0: Profile, phi1: Profile, psi1: Profile, opts: EnvelopeOptions) -> (EnvelopeSet, Grid) {
        let params = PhysicalParams::new(1.0, TaylorNonlinearity::cubic(2, g)).unwrap();
        let periods = (40.0 / (2.0 * PI * eps)).round();
        let fast = Grid::new(vec![2.0 * PI * periods, 40.0 / eps], vec![256, 64]).unwrap();
        let slow = Grid::new(fast.lengths().iter().map(|l| l * eps).collect(), vec![64, 32]).unwrap();
        let c = CarrierData { eps, phi0, phi1, psi1, params };
        (build_envelopes(&c, &slow, &opts).unwrap(), fast)
    }

    fn g4() -> Profile {
        Profile::gaussian(1.0, 4.0)
    }

    #[test]
    fn source_harmonics_match_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w1 = 2f64.sqrt();
        for _ in 0..20 {
            let a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let g = rng.random_range(-2.0..2.0);
            let x: f64 = rng.random_range(-10.0..10.0);
            let t: f64 = rng.random_range(-10.0..10.0);
            let ea = Complex64::from_polar(1.0, x - w1 * t);
            let eb = Complex64::from_polar(1.0, x + w1 * t);
            let i = Complex64::new(0.0, 1.0);
            let vx = 2.0 * (i * (a * ea + b * eb)).re;
            let vxx = 2.0 * (-(a * ea + b * eb)).re;
            let brute = -g * 3.0 * vx * vx * vxx;
            let sum: f64 = cubic_source_harmonics(a, b, g)
                .iter()
                .map(|h| 2.0 * (h.value * Complex64::from_polar(1.0, h.k as f64 * x - h.omega_multiple as f64 * w1 * t)).re)
                .sum();
            assert!((brute - sum).abs() < 1e-12 * (1.0 + brute.abs()), "{brute} vs {sum}");
        }
    }

    #[test]
    fn denominators_are_non_resonant() {
        for nu in [0.5, 1.0, 2.0] {
            let p = PhysicalParams::new(nu, TaylorNonlinearity::zero(2)).unwrap();
            let d = second_correction_denominators(&p).unwrap();
            assert_eq!(d.len(), 6);
            for (k, omega, v) in d {
                assert!(v.abs() > 1e-9);
                let expect = match (k, (omega.abs() / frequency1(nu)).round() as i32) {
                    (3, 1) => 8.0 + 80.0 * nu,
                    (3, 3) => 72.0 * nu,
                    (1, 3) => -8.0 - 8.0 * nu,
                    other => panic!("unexpected harmonic {other:?}"),
                };
                assert!((v - expect).abs() < 1e-10);
            }
        }
    }

    fn frequency1(nu: f64) -> f64 {
        (1.0 + nu).sqrt()
    }

    #[test]
    fn leading_term_reproduces_initial_data() {
        let (set, fast) = setup(0.25, 1.0, g4(), g4(), g4(), EnvelopeOptions::default());
        let c = CarrierData { eps: 0.25, phi0: g4(), phi1: g4(), psi1: g4(), params: set.params.clone() };
        let init = init_from_plane_waves(&c, &fast).unwrap();
        let lead = leading_term(&set, 0.0, &fast).unwrap();
        assert!(lead.sub(&init.u).unwrap().max_abs() < 1e-10);
        let two = compose_fas(&set, 0.0, &fast, 2).unwrap();
        assert!(two.sub(&init.u).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn zero_data_and_zero_envelopes() {
        let (set, fast) = setup(0.25, 1.0, Profile::Zero, Profile::Zero, Profile::Zero, EnvelopeOptions::default());
        for terms in 1..=3 {
            assert_eq!(compose_fas(&set, 3.0, &fast, terms).unwrap().max_abs(), 0.0);
        }
        let r = fas_residual(&set, 3.0, &fast, 3, &set.params.nonlinearity, 1e-3).unwrap();
        assert_eq!(r.max_abs(), 0.0);

        let (set, fast) = setup(0.25, 1.0, g4(), Profile::Zero, Profile::Zero, EnvelopeOptions::default());
        let t = 5.0;
        let lead = leading_term(&set, t, &fast).unwrap();
        let slow_wave = crate::wave::solve_wave(&set.phi0_spectrum_real(), 0.25 * t).unwrap();
        let expect = resample(&forward_transform(&slow_wave.v0), &fast, &[0.0, 0.0]).unwrap().re().scale(0.25);
        assert!(lead.sub(&expect).unwrap().max_abs() < 1e-13);
    }

    impl EnvelopeSet {
        fn phi0_spectrum_real(&self) -> RealField {
            crate::spectral::inverse_transform(&self.phi0).unwrap()
        }
    }

    #[test]
    fn frozen_envelopes_translate() {
        let opts = EnvelopeOptions { freeze: true, ..EnvelopeOptions::default() };
        let eps = 0.25;
        let (set, fast) = setup(eps, 1.0, Profile::Zero, g4(), Profile::Zero, opts);
        let t = 7.3;
        let lead = leading_term(&set, t, &fast).unwrap();
        let a = set.envelope_at(0, 0.0).unwrap();
        let vg = set.branches[0].vg;
        let w1 = set.omega1();
        let x = fast.coordinates(0);
        let spec = forward_complex(&a.w);
        let sa = resample(&spec, &fast, &[-vg * eps * t, 0.0]).unwrap();
        let sb = resample(&spec, &fast, &[vg * eps * t, 0.0]).unwrap();
        let mut expect = RealField::zeros(&fast);
        fast.for_each_index(|flat, idx| {
            let ca = Complex64::from_polar(1.0, x[idx[0]] - w1 * t);
            let cb = Complex64::from_polar(1.0, x[idx[0]] + w1 * t);
            expect.values[flat] = eps * 2.0 * (sa.values[flat] * ca + sb.values[flat] * cb).re;
        });
        assert!(lead.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn first_correction_initial_value_and_zero_source() {
        let (set, fast) = setup(0.25, 0.0, Profile::Zero, g4(), Profile::Zero, EnvelopeOptions::default());
        assert!(first_correction(&set, 7.0, &fast).unwrap().max_abs() < 1e-15);

        let (set, fast) = setup(0.25, 1.0, Profile::Zero, g4(), g4(), EnvelopeOptions::default());
        let v1 = first_correction(&set, 0.0, &fast).unwrap();
        // At τ = 0 the two branch corrections cancel.
        assert!(v1.max_abs() < 1e-15);
    }

    #[test]
    fn quadrature_matches_exact_fourier_integral() {
        let opts = EnvelopeOptions { mu_nodes: 4097, ..EnvelopeOptions::default() };
        let (set, fast) = setup(0.25, 1.0, Profile::Zero, g4(), g4(), opts);
        let t = 6.0;
        let slice = set.slice(t, &fast).unwrap();
        let got = slice.cross_phase_integral(0).unwrap();

        // Exact: multiply each mode of |w₋|² by ∫₀^τ e^{iκ 2ω′ μ} dμ.
        let fine = set.slow_grid.with_points(vec![128, 64]).unwrap();
        let up = resample(&forward_complex(&slice.envelopes[1].w), &fine, &[0.0, 0.0]).unwrap();
        let dens = ComplexField { grid: fine.clone(), values: up.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect() };
        let mut spec = forward_complex(&dens);
        let kx = fine.wavenumbers(0);
        let tau = set.eps * t;
        let c = 2.0 * set.branches[0].vg;
        fine.for_each_index(|flat, idx| {
            let k = kx[idx[0]];
            let f = if k == 0.0 {
                Complex64::new(tau, 0.0)
            } else if fine.is_nyquist(0, idx[0]) {
                Complex64::new((k * c * tau).sin() / (k * c), 0.0)
            } else {
                (Complex64::from_polar(1.0, k * c * tau) - 1.0) / Complex64::new(0.0, k * c)
            };
            spec.modes[flat] *= f;
        });
        let exact = resample(&spec, &fast, &set.shift(0, tau)).unwrap();
        let scale = exact.max_abs();
        let err = got.values.iter().zip(&exact.values).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err < 1e-6 * scale, "quadrature error {err}");
    }

    #[test]
    fn quadrature_refinement_converges() {
        let (coarse, fast) = setup(0.25, 1.0, Profile::Zero, g4(), g4(), EnvelopeOptions::default());
        let opts = EnvelopeOptions { mu_nodes: 2 * coarse.options.mu_nodes, ..EnvelopeOptions::default() };
        let (fine, _) = setup(0.25, 1.0, Profile::Zero, g4(), g4(), opts);
        let t = 8.0;
        let a = first_correction(&coarse, t, &fast).unwrap();
        let b = first_correction(&fine, t, &fast).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn second_correction_vanishes_without_cubic() {
        let (set, fast) = setup(0.25, 0.0, g4(), g4(), g4(), EnvelopeOptions::default());
        assert_eq!(second_correction(&set, 4.0, &fast).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn truncations_are_prefixes() {
        let (set, fast) = setup(0.25, 1.0, g4(), g4(), g4(), EnvelopeOptions::default());
        let bundle = FasBundle::new(&set, fast.clone(), 3).unwrap();
        let t = 3.0;
        let tr = bundle.truncations(t).unwrap();
        for (n, u) in tr.iter().enumerate() {
            assert_eq!(*u, compose_fas(&set, t, &fast, n + 1).unwrap());
        }
        let one = FasBundle::new(&set, fast.clone(), 1).unwrap();
        assert_eq!(one.evaluate(t).unwrap(), leading_term(&set, t, &fast).unwrap());
        assert!(compose_fas(&set, t, &fast, 4).is_err());
    }

    #[test]
    fn horizon_is_enforced() {
        let opts = EnvelopeOptions { horizon: 0.1, ..EnvelopeOptions::default() };
        let (set, fast) = setup(0.25, 1.0, g4(), g4(), g4(), opts);
        assert!(leading_term(&set, 0.1 / 0.0625, &fast).is_ok());
        assert!(matches!(leading_term(&set, 0.2 / 0.0625, &fast), Err(Error::Horizon { .. })));
    }

    #[test]
    fn stored_path_matches_direct_solve() {
        let (set, _) = setup(0.25, 1.0, Profile::Zero, g4(), g4(), EnvelopeOptions::default());
        let theta = 0.1234;
        let e = set.envelope_at(0, theta).unwrap();
        let start = set.envelope_at(0, 0.0).unwrap();
        let direct = crate::nls::solve_nls(&start, theta, set.options.dtheta).unwrap();
        let err = e.w.values.iter().zip(&direct.w.values).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err < 1e-13);
    }

    #[test]
    fn rejects_too_few_nodes() {
        let params = PhysicalParams::new(1.0, TaylorNonlinearity::cubic(2, 1.0)).unwrap();
        let slow = Grid::new(vec![40.0, 40.0], vec![64, 32]).unwrap();
        let c = CarrierData { eps: 0.25, phi0: g4(), phi1: g4(), psi1: g4(), params };
        let opts = EnvelopeOptions { mu_nodes: 1, ..EnvelopeOptions::default() };
        assert!(matches!(build_envelopes(&c, &slow, &opts), Err(Error::Config { .. })));
    }
}
