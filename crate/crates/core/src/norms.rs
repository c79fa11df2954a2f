//! Exponentially weighted sup-norms of Fourier coefficients, measured
//! convolution constants, and decay-rate (analyticity band) estimates.
//!
//! The weight of a mode with wavenumber `κ` is `s^p e^{βs}` where
//! `s = 1 + |κ₀| + |κ_⊥|` (`κ_⊥` the Euclidean norm of the remaining
//! components). The extended variant splits the first two axes:
//! `s = 1 + |κ₀| + |κ₁| + |κ_⊥|`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{forward_raw, inverse_raw, Grid, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    pub beta: f64,
    pub p: f64,
}

impl WeightParams {
    /// `p ≥ axes + 1` where `axes` counts every independent index of the norm.
    pub fn validate(&self, axes: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::param("beta", format!("{} must be positive", self.beta)));
        }
        let min = axes as f64 + 1.0;
        if !(self.p.is_finite() && self.p >= min) {
            return Err(Error::param("p", format!("{} below the minimum {min}", self.p)));
        }
        Ok(())
    }

    pub fn weight(&self, s: f64) -> f64 {
        s.powf(self.p) * (self.beta * s).exp()
    }
}

/// `1 + |κ₀| + |κ_⊥|` for every stored mode, or the extended variant.
fn shell_coordinates(grid: &Grid, extended: bool) -> Vec<f64> {
    let k = grid.wavenumbers3();
    let mut out = vec![0.0; grid.len()];
    let split = if extended { 2 } else { 1 };
    grid.for_each_index(|flat, idx| {
        let mut s = 1.0;
        for a in 0..split.min(grid.dims()) {
            s += k[a][idx[a]].abs();
        }
        let rest: f64 = (split..grid.dims()).map(|a| k[a][idx[a]].powi(2)).sum();
        out[flat] = s + rest.sqrt();
    });
    out
}

fn sup_weighted(modes: &[Complex64], shells: &[f64], wp: &WeightParams) -> f64 {
    modes.iter().zip(shells).fold(0.0, |m, (c, &s)| m.max(wp.weight(s) * c.norm()))
}

pub fn weighted_norm(f: &SpectralField, wp: &WeightParams) -> f64 {
    sup_weighted(&f.modes, &shell_coordinates(&f.grid, false), wp)
}

/// Norm with the first two indices weighted separately.
pub fn weighted_norm_extended(f: &SpectralField, wp: &WeightParams) -> f64 {
    sup_weighted(&f.modes, &shell_coordinates(&f.grid, true), wp)
}

/// Square block of integer modes `[-half_width, half_width]^dims`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dims: usize,
    pub half_width: usize,
}

impl Lattice {
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn index_to_modes(&self, mut flat: usize) -> Vec<i64> {
        let side = self.side();
        let mut m = vec![0i64; self.dims];
        for a in (0..self.dims).rev() {
            m[a] = (flat % side) as i64 - self.half_width as i64;
            flat /= side;
        }
        m
    }

    fn shells(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| 1.0 + self.index_to_modes(i).iter().map(|m| m.abs() as f64).sum::<f64>())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.dims > 3 || self.half_width == 0 {
            return Err(Error::param("lattice", format!("{self:?} is not a usable lattice")));
        }
        Ok(())
    }
}

/// Coefficients on a [`Lattice`] with the sup weight `(1 + Σ|m_a|)^p e^{β(1 + Σ|m_a|)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    pub lattice: Lattice,
    pub values: Vec<Complex64>,
}

impl LatticeField {
    pub fn norm(&self, wp: &WeightParams) -> f64 {
        sup_weighted(&self.values, &self.lattice.shells(), wp)
    }

    pub fn sub(&self, other: &LatticeField) -> LatticeField {
        LatticeField {
            lattice: self.lattice,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    /// Truncated convolution `Σ_{m₁} U(m − m₁) V(m₁)` restricted to the lattice.
    pub fn convolve(&self, other: &LatticeField) -> LatticeField {
        let lat = self.lattice;
        let side = lat.side() as i64;
        let h = lat.half_width as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); lat.len()];
        let modes: Vec<Vec<i64>> = (0..lat.len()).map(|i| lat.index_to_modes(i)).collect();
        let flat = |m: &[i64]| -> Option<usize> {
            let mut f = 0i64;
            for &x in m {
                if x.abs() > h {
                    return None;
                }
                f = f * side + x + h;
            }
            Some(f as usize)
        };
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let m = &modes[i];
            let mut diff = vec![0i64; m.len()];
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, m1) in modes.iter().enumerate() {
                let v = other.values[j];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for a in 0..m.len() {
                    diff[a] = m[a] - m1[a];
                }
                if let Some(k) = flat(&diff) {
                    acc += self.values[k] * v;
                }
            }
            *o = acc;
        });
        LatticeField { lattice: lat, values: out }
    }

    /// `(⋆U)^j`
    pub fn power(&self, j: usize) -> LatticeField {
        let mut acc = self.clone();
        for _ in 1..j {
            acc = acc.convolve(self);
        }
        acc
    }

    /// `U = r e^{iφ} scale / ρ` with `r ~ U[0, 1]`, `φ ~ U[0, 2π)`.
    pub fn random(lattice: Lattice, wp: &WeightParams, scale: f64, rng: &mut ChaCha8Rng) -> LatticeField {
        let values = lattice
            .shells()
            .iter()
            .map(|&s| {
                let r: f64 = rng.random_range(0.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                Complex64::from_polar(scale * r / wp.weight(s), phi)
            })
            .collect();
        LatticeField { lattice, values }
    }

    /// `1 / ρ`, the extremal field of unit norm.
    pub fn extremal(lattice: Lattice, wp: &WeightParams) -> LatticeField {
        let values = lattice.shells().iter().map(|&s| Complex64::new(1.0 / wp.weight(s), 0.0)).collect();
        LatticeField { lattice, values }
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionStats {
    /// Largest observed `‖U⋆V‖ / (‖U‖‖V‖)`.
    pub m0: f64,
    pub trials_used: usize,
    pub skipped: usize,
}

fn ratio(u: &LatticeField, v: &LatticeField, wp: &WeightParams) -> Option<f64> {
    let denom = u.norm(wp) * v.norm(wp);
    if denom == 0.0 {
        None
    } else {
        Some(u.convolve(v).norm(wp) / denom)
    }
}

/// Largest bilinear ratio over the supplied pairs. Zero pairs are skipped.
pub fn convolution_ratio_max(pairs: &[(LatticeField, LatticeField)], wp: &WeightParams) -> ConvolutionStats {
    let ratios: Vec<Option<f64>> = pairs.par_iter().map(|(u, v)| ratio(u, v, wp)).collect();
    let used: Vec<f64> = ratios.iter().flatten().copied().collect();
    ConvolutionStats {
        m0: used.iter().copied().fold(0.0, f64::max),
        trials_used: used.len(),
        skipped: ratios.len() - used.len(),
    }
}

/// Measured convolution constant over seeded random pairs plus the extremal
/// pair `U = V = 1/ρ`, which attains the operator norm on a finite lattice.
pub fn convolution_constant(lattice: Lattice, trials: usize, wp: &WeightParams, seed: u64) -> Result<ConvolutionStats> {
    lattice.validate()?;
    wp.validate(lattice.dims)?;
    if trials == 0 {
        return Err(Error::param("trials", "at least one trial required"));
    }
    let mut pairs: Vec<(LatticeField, LatticeField)> = (0..trials)
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let u = LatticeField::random(lattice, wp, 1.0, &mut rng);
            let v = LatticeField::random(lattice, wp, 1.0, &mut rng);
            (u, v)
        })
        .collect();
    let e = LatticeField::extremal(lattice, wp);
    pairs.push((e.clone(), e));
    Ok(convolution_ratio_max(&pairs, wp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Largest observed left side divided by the bound.
    pub worst_ratio: f64,
    pub violations: usize,
    pub trials: usize,
}

const ROUNDOFF: f64 = 1e-12;

/// `‖(⋆U)^j‖ ≤ M₀^{j−1}‖U‖^j` and `‖(⋆U)^j − (⋆V)^j‖ ≤ j (M₀M₁)^{j−1} ‖U − V‖`
/// over random `U, V` with norms at most `m1`.
pub fn power_constant(
    lattice: Lattice,
    j: usize,
    trials: usize,
    wp: &WeightParams,
    seed: u64,
    m0: f64,
    m1: f64,
) -> Result<BoundCheck> {
    lattice.validate()?;
    if !(1..=4).contains(&j) {
        return Err(Error::param("j", format!("{j} outside 1..=4")));
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let u = LatticeField::random(lattice, wp, m1, &mut rng);
            let v = LatticeField::random(lattice, wp, m1, &mut rng);
            let (pu, pv) = (u.power(j), v.power(j));
            let bound = m0.powi(j as i32 - 1) * u.norm(wp).powi(j as i32);
            let power = if bound == 0.0 { 0.0 } else { pu.norm(wp) / bound };
            let lip_bound = j as f64 * (m0 * m1).powi(j as i32 - 1) * u.sub(&v).norm(wp);
            let lip = if lip_bound == 0.0 { 0.0 } else { pu.sub(&pv).norm(wp) / lip_bound };
            power.max(lip)
        })
        .collect();
    Ok(BoundCheck {
        worst_ratio: ratios.iter().copied().fold(0.0, f64::max),
        violations: ratios.iter().filter(|&&r| r > 1.0 + ROUNDOFF).count(),
        trials,
    })
}

/// `‖U⋆U − V⋆V‖ ≤ 2 M₀ M₁ ‖U − V‖` for random `U, V` with norms at most `m1`.
pub fn lipschitz_check(lattice: Lattice, trials: usize, wp: &WeightParams, seed: u64, m0: f64, m1: f64) -> Result<BoundCheck> {
    lattice.validate()?;
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let u = LatticeField::random(lattice, wp, m1, &mut rng);
            let v = LatticeField::random(lattice, wp, m1, &mut rng);
            let lhs = u.convolve(&u).sub(&v.convolve(&v)).norm(wp);
            let rhs = 2.0 * m0 * m1 * u.sub(&v).norm(wp);
            if rhs == 0.0 {
                0.0
            } else {
                lhs / rhs
            }
        })
        .collect();
    Ok(BoundCheck {
        worst_ratio: ratios.iter().copied().fold(0.0, f64::max),
        violations: ratios.iter().filter(|&&r| r > 1.0 + ROUNDOFF).count(),
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCheck {
    pub taus: Vec<f64>,
    /// Largest `‖U‖ / (‖V‖‖W‖)` over the trials at each `τ`.
    pub ratios: Vec<f64>,
    pub max_over_min: f64,
}

/// `sin(m ζ τ) / (m ζ)`, with its limit `τ` at `m = 0`.
pub fn transport_kernel(m: f64, zeta: f64, tau: f64) -> f64 {
    if m == 0.0 {
        tau
    } else {
        (m * zeta * tau).sin() / (m * zeta)
    }
}

/// Weighted ratio of `U = V ⋆ (W · sin(m₁ζτ)/(m₁ζ))` against `‖V‖‖W‖` on the
/// continuous-wavenumber lattice of `grid` (physical wavenumbers), with the
/// convolution integral approximated by a zero-padded Riemann sum.
pub fn transport_bilinear_check(
    grid: &Grid,
    trials: usize,
    zeta: f64,
    taus: &[f64],
    wp: &WeightParams,
    seed: u64,
) -> Result<TransportCheck> {
    if zeta == 0.0 || !zeta.is_finite() {
        return Err(Error::param("zeta", "must be a nonzero finite speed"));
    }
    if trials == 0 || taus.is_empty() {
        return Err(Error::param("trials", "need at least one trial and one τ"));
    }
    let shells = shell_coordinates(grid, false);
    let padded = Grid::new(grid.lengths().to_vec(), grid.points().iter().map(|n| 2 * n).collect())?;
    let kx = grid.wavenumbers(0);
    let measure: f64 = grid.lengths().iter().map(|l| 2.0 * PI / l).product();

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut draw = || -> Vec<Complex64> {
                shells.iter().map(|&s| Complex64::new(rng.random_range(0.0..1.0) / wp.weight(s), 0.0)).collect()
            };
            let v = draw();
            let w = draw();
            let nv = sup_weighted(&v, &shells, wp);
            let nw = sup_weighted(&w, &shells, wp);
            taus.iter()
                .map(|&tau| {
                    let mut kernel = w.clone();
                    grid.for_each_index(|flat, idx| kernel[flat] *= transport_kernel(kx[idx[0]], zeta, tau));
                    let u = linear_convolution(grid, &padded, &v, &kernel);
                    let nu = sup_weighted(&u, &shells, wp) * measure;
                    if nv * nw == 0.0 {
                        0.0
                    } else {
                        nu / (nv * nw)
                    }
                })
                .collect()
        })
        .collect();
    let ratios: Vec<f64> = (0..taus.len())
        .map(|t| per_trial.iter().map(|r| r[t]).fold(0.0, f64::max))
        .collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TransportCheck { taus: taus.to_vec(), ratios, max_over_min: max / min })
}

/// Centred linear convolution of two mode arrays stored in FFT order,
/// evaluated through a doubled grid so nothing wraps around.
fn linear_convolution(grid: &Grid, padded: &Grid, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let embed = |src: &[Complex64]| {
        let mut out = SpectralField::zeros(padded);
        let mut m = vec![0i64; grid.dims()];
        grid.for_each_index(|flat, idx| {
            for (ax, slot) in m.iter_mut().enumerate() {
                *slot = grid.signed_index(ax, idx[ax]);
            }
            let t = out.flat_index(&m);
            out.modes[t] = src[flat];
        });
        out
    };
    let pa = inverse_raw(&embed(a));
    let pb = inverse_raw(&embed(b));
    let prod: Vec<Complex64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let conv = forward_raw(padded, prod);
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut m = vec![0i64; grid.dims()];
    grid.for_each_index(|flat, idx| {
        for (ax, slot) in m.iter_mut().enumerate() {
            *slot = grid.signed_index(ax, idx[ax]);
        }
        out[flat] = conv.modes[conv.flat_index(&m)];
    });
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub beta_hat: f64,
    pub r2: f64,
    pub valid: bool,
    pub modes_used: usize,
}

/// Magnitudes fitted lie between these fractions of the peak.
pub const BAND_WINDOW: (f64, f64) = (1e-12, 1e-3);
pub const BAND_MIN_MODES: usize = 8;
pub const BAND_MIN_R2: f64 = 0.9;

/// Least-squares line `y = a + b x`, returning `(a, b, r²)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (a, b, r2)
}

/// Exponential decay rate of the shell-maximum coefficient magnitude.
/// Returns an invalid estimate when fewer than [`BAND_MIN_MODES`] shells fall in the window.
pub fn estimate_band(f: &SpectralField) -> BandEstimate {
    let shells = shell_coordinates(&f.grid, false);
    let peak = f.max_abs();
    let invalid = BandEstimate { beta_hat: 0.0, r2: 0.0, valid: false, modes_used: 0 };
    if peak == 0.0 {
        return invalid;
    }
    // Shells are bins of the coarsest wavenumber spacing, so that anisotropic
    // grids still collect several modes per shell; on an integer lattice the
    // bins are the exact shells.
    let spacing = f.grid.lengths().iter().map(|l| 2.0 * PI / l).fold(0.0, f64::max);
    let mut shell_max: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (c, &s) in f.modes.iter().zip(&shells) {
        let key = ((s - 1.0) / spacing).round() as i64;
        let e = shell_max.entry(key).or_insert((1.0 + key as f64 * spacing, 0.0));
        e.1 = e.1.max(c.norm());
    }
    let (lo, hi) = (BAND_WINDOW.0 * peak, BAND_WINDOW.1 * peak);
    let (x, y): (Vec<f64>, Vec<f64>) = shell_max
        .values()
        .filter(|(_, m)| *m >= lo && *m <= hi)
        .map(|&(s, m)| (s, m.ln()))
        .unzip();
    let keep = decay_floor_cut(&y);
    let (x, y) = (&x[..keep], &y[..keep]);
    if x.len() < BAND_MIN_MODES {
        return BandEstimate { modes_used: x.len(), ..invalid };
    }
    let (_, slope, r2) = linear_fit(x, y);
    let span = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let beta_hat = -slope;
    BandEstimate {
        beta_hat,
        r2,
        valid: r2 >= BAND_MIN_R2 && span >= 10f64.ln() && beta_hat.is_finite(),
        modes_used: x.len(),
    }
}

/// Number of leading shells to keep: the sequence is cut where the decay
/// stalls on a truncation floor, i.e. two successive log-decrements fall
/// below a fifth of the median decrement so far.
fn decay_floor_cut(y: &[f64]) -> usize {
    let d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let slow = |i: usize, med: f64| d.get(i).is_none_or(|&v| v > 0.2 * med);
    for i in 3..d.len() {
        let mut prior = d[..i].to_vec();
        prior.sort_by(f64::total_cmp);
        let med = prior[prior.len() / 2];
        if med < 0.0 && slow(i, med) && slow(i + 1, med) {
            return i + 1;
        }
    }
    y.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandShrink {
    pub beta0: f64,
    pub beta1: f64,
    pub r2: f64,
    /// Whether every fitted value stayed positive over the sampled range.
    pub stayed_positive: bool,
    pub estimates: Vec<(f64, BandEstimate)>,
}

/// Fits `β̂ = β₀ − β₁ x` over the valid estimates, `x` being the supplied
/// slow time of each spectrum (typically `ε²t`).
pub fn band_shrink_report(states: &[(f64, SpectralField)]) -> Result<BandShrink> {
    let estimates: Vec<(f64, BandEstimate)> = states.iter().map(|(x, f)| (*x, estimate_band(f))).collect();
    let valid: Vec<&(f64, BandEstimate)> = estimates.iter().filter(|(_, e)| e.valid).collect();
    if valid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} valid band estimates; at least 3 required",
            valid.len()
        )));
    }
    let x: Vec<f64> = valid.iter().map(|(x, _)| *x).collect();
    let y: Vec<f64> = valid.iter().map(|(_, e)| e.beta_hat).collect();
    let (beta0, slope, r2) = linear_fit(&x, &y);
    let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stayed_positive = y.iter().all(|&b| b > 0.0) && beta0 + slope * xmax > 0.0;
    Ok(BandShrink { beta0, beta1: -slope, r2, stayed_positive, estimates })
}
