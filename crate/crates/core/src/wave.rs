//! Zero-harmonic amplitude: `v_ττ − Δv = 0`, `v(0) = φ₀`, `v_τ(0) = 0`,
//! solved exactly on the slow grid.

use crate::spectral::{forward_transform, inverse_transform, Grid, RealField, SpectralField};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub tau: f64,
    pub v0: RealField,
    pub v0_tau: RealField,
}

/// `|κ|` for every stored mode.
pub fn wave_frequencies(grid: &Grid) -> Vec<f64> {
    let k = grid.wavenumbers3();
    let mut out = vec![0.0; grid.len()];
    grid.for_each_index(|flat, idx| {
        out[flat] = (0..grid.dims()).map(|a| k[a][idx[a]].powi(2)).sum::<f64>().sqrt();
    });
    out
}

/// Spectra of `v₀(τ)` and `∂_τ v₀(τ)` from the initial spectrum.
pub fn wave_spectra(phi0: &SpectralField, tau: f64) -> (SpectralField, SpectralField) {
    let kappa = wave_frequencies(&phi0.grid);
    let mut v = phi0.clone();
    let mut vt = phi0.clone();
    for (i, &k) in kappa.iter().enumerate() {
        let (s, c) = (k * tau).sin_cos();
        v.modes[i] *= c;
        vt.modes[i] *= -k * s;
    }
    (v, vt)
}

pub fn solve_wave(phi0: &RealField, tau: f64) -> Result<WaveState> {
    let (v, vt) = wave_spectra(&forward_transform(phi0), tau);
    Ok(WaveState { tau, v0: inverse_transform(&v)?, v0_tau: inverse_transform(&vt)? })
}

/// `‖∂_τ v₀‖² + ‖∇v₀‖²` by spectral quadrature.
pub fn wave_energy(s: &WaveState) -> f64 {
    let grid = &s.v0.grid;
    let kappa = wave_frequencies(grid);
    let v = forward_transform(&s.v0);
    let vt = forward_transform(&s.v0_tau);
    let sum: f64 = (0..grid.len())
        .map(|i| vt.modes[i].norm_sqr() + kappa[i] * kappa[i] * v.modes[i].norm_sqr())
        .sum();
    sum * grid.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sample_shifted;
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid, w: f64) -> RealField {
        RealField::from_fn(grid, |x| (-x.iter().map(|v| v * v).sum::<f64>() / (w * w)).exp())
    }

    #[test]
    fn initial_time_is_identity() {
        let g = Grid::new(vec![40.0, 40.0], vec![64, 32]).unwrap();
        let f = gaussian(&g, 4.0);
        let s = solve_wave(&f, 0.0).unwrap();
        assert!(s.v0.sub(&f).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn eigenmode_oscillates() {
        let g = Grid::new(vec![2.0 * PI, 2.0 * PI], vec![8, 8]).unwrap();
        let f = RealField::from_fn(&g, |x| x[1].cos());
        let s = solve_wave(&f, 0.9).unwrap();
        assert!(s.v0.sub(&f.clone().scale(0.9f64.cos())).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn dalembert_on_one_axis() {
        let g = Grid::new(vec![80.0], vec![256]).unwrap();
        let f = gaussian(&g, 4.0);
        let spec = forward_transform(&f);
        for tau in [3.0, 17.5] {
            let s = solve_wave(&f, tau).unwrap();
            let l = sample_shifted(&spec, &[-tau]).unwrap();
            let r = sample_shifted(&spec, &[tau]).unwrap();
            let half = l.add(&r).unwrap().scale(0.5);
            assert!(s.v0.sub(&half).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn energy_conserved_and_zero_mean() {
        let g = Grid::new(vec![40.0, 40.0], vec![64, 32]).unwrap();
        let f = gaussian(&g, 4.0).add(&RealField::from_fn(&g, |_| 0.25)).unwrap();
        let s0 = solve_wave(&f, 0.0).unwrap();
        let e0 = wave_energy(&s0);
        let grad: f64 = {
            let k = wave_frequencies(&g);
            let h = forward_transform(&f);
            h.modes.iter().zip(&k).map(|(c, k)| k * k * c.norm_sqr()).sum::<f64>() * g.volume()
        };
        assert!((e0 - grad).abs() < 1e-12 * grad);
        for tau in [1.0, 10.0, 100.0] {
            let s = solve_wave(&f, tau).unwrap();
            assert!((wave_energy(&s) - e0).abs() < 1e-12 * e0);
            assert!((s.v0.mean() - f.mean()).abs() < 1e-14);
        }
        let z = solve_wave(&RealField::zeros(&g), 5.0).unwrap();
        assert_eq!(wave_energy(&z), 0.0);
    }
}
