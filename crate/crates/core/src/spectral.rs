//! Periodic tensor-product grids, discrete Fourier transforms and the
//! spectral operators built on them.
//!
//! Coordinates are centred: axis `a` samples `x_j = -L_a/2 + j L_a/N_a`.
//! Coefficients follow `f(x) = Σ_m F_m exp(i 2π m·x / L)` with signed mode
//! indices `m ∈ [-N/2, N/2)`, so the forward transform is the grid average
//! of `f exp(-i 2π m·x / L)`. The Nyquist mode `m = -N/2` is interpreted as
//! the symmetric cosine `cos(π N x / L)` by every operator in this module.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a spectrum is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lengths: Vec<f64>,
    points: Vec<usize>,
}

impl Grid {
    pub fn new(lengths: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if lengths.len() != points.len() {
            return Err(Error::InvalidGrid(format!(
                "{} lengths given for {} axes",
                lengths.len(),
                points.len()
            )));
        }
        if points.is_empty() || points.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension {} outside 1..=3",
                points.len()
            )));
        }
        for (a, (&l, &n)) in lengths.iter().zip(&points).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {a}: period {l} must be positive")));
            }
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: {n} points (need an even count >= 4)"
                )));
            }
        }
        Ok(Grid { lengths, points })
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Same sampling with every period multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Grid> {
        Grid::new(self.lengths.iter().map(|l| l * factor).collect(), self.points.clone())
    }

    pub fn with_points(&self, points: Vec<usize>) -> Result<Grid> {
        Grid::new(self.lengths.clone(), points)
    }

    /// Shape padded to three axes with trailing ones.
    pub(crate) fn shape3(&self) -> [usize; 3] {
        let mut s = [1; 3];
        s[..self.dims()].copy_from_slice(&self.points);
        s
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let (l, n) = (self.lengths[axis], self.points[axis]);
        (0..n).map(|j| -0.5 * l + j as f64 * l / n as f64).collect()
    }

    /// Signed mode index of storage position `j` on `axis`.
    pub fn signed_index(&self, axis: usize, j: usize) -> i64 {
        let n = self.points[axis];
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    pub fn is_nyquist(&self, axis: usize, j: usize) -> bool {
        j == self.points[axis] / 2
    }

    /// Physical wavenumbers `2π m / L` for every storage position on `axis`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let l = self.lengths[axis];
        (0..self.points[axis])
            .map(|j| 2.0 * PI * self.signed_index(axis, j) as f64 / l)
            .collect()
    }

    /// Wavenumbers for all axes, padded to three axes with `[0.0]`.
    pub(crate) fn wavenumbers3(&self) -> [Vec<f64>; 3] {
        let mut out = [vec![0.0], vec![0.0], vec![0.0]];
        for (a, slot) in out.iter_mut().enumerate().take(self.dims()) {
            *slot = self.wavenumbers(a);
        }
        out
    }

    /// Calls `f(flat, [i0, i1, i2])` for every storage position in row-major order.
    pub(crate) fn for_each_index(&self, mut f: impl FnMut(usize, [usize; 3])) {
        let [n0, n1, n2] = self.shape3();
        let mut flat = 0;
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    f(flat, [i0, i1, i2]);
                    flat += 1;
                }
            }
        }
    }

    /// Flat position of the mode with negated signed indices.
    pub(crate) fn mirror_index(&self, idx: [usize; 3]) -> usize {
        let s = self.shape3();
        let m = |j: usize, n: usize| if j == 0 { 0 } else { n - j };
        (m(idx[0], s[0]) * s[1] + m(idx[1], s[1])) * s[2] + m(idx[2], s[2])
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub modes: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(RealField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        RealField { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    /// Samples `f(x)` where `x` holds the coordinates of each point.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let coords: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.coordinates(a)).collect();
        let mut values = vec![0.0; grid.len()];
        let mut x = vec![0.0; grid.dims()];
        grid.for_each_index(|flat, idx| {
            for a in 0..x.len() {
                x[a] = coords[a][idx[a]];
            }
            values[flat] = f(&x);
        });
        RealField { grid: grid.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }

    pub fn add(&self, other: &RealField) -> Result<RealField> {
        self.grid.ensure_same(&other.grid, "field sum")?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(RealField { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.grid.ensure_same(&other.grid, "field difference")?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(RealField { grid: self.grid.clone(), values })
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ComplexField { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let coords: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.coordinates(a)).collect();
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut x = vec![0.0; grid.dims()];
        grid.for_each_index(|flat, idx| {
            for a in 0..x.len() {
                x[a] = coords[a][idx[a]];
            }
            values[flat] = f(&x);
        });
        ComplexField { grid: grid.clone(), values }
    }

    pub fn conj(&self) -> ComplexField {
        ComplexField { grid: self.grid.clone(), values: self.values.iter().map(|v| v.conj()).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn re(&self) -> RealField {
        RealField { grid: self.grid.clone(), values: self.values.iter().map(|v| v.re).collect() }
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField { grid: grid.clone(), modes: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Builds a spectrum from a function of the signed mode indices.
    pub fn from_modes(grid: &Grid, mut f: impl FnMut(&[i64]) -> Complex64) -> Self {
        let mut modes = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut m = vec![0i64; grid.dims()];
        grid.for_each_index(|flat, idx| {
            for a in 0..m.len() {
                m[a] = grid.signed_index(a, idx[a]);
            }
            modes[flat] = f(&m);
        });
        SpectralField { grid: grid.clone(), modes }
    }

    /// Coefficient of the mode with signed indices `m`.
    pub fn mode(&self, m: &[i64]) -> Complex64 {
        self.modes[self.flat_index(m)]
    }

    pub fn flat_index(&self, m: &[i64]) -> usize {
        let s = self.grid.shape3();
        let mut flat = 0;
        for a in 0..3 {
            let n = s[a] as i64;
            let j = if a < m.len() { m[a].rem_euclid(n) } else { 0 };
            flat = flat * s[a] + j as usize;
        }
        flat
    }

    pub fn scale(mut self, c: Complex64) -> Self {
        self.modes.iter_mut().for_each(|v| *v *= c);
        self
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.ensure_same(&other.grid, "spectrum sum")?;
        let modes = self.modes.iter().zip(&other.modes).map(|(a, b)| a + b).collect();
        Ok(SpectralField { grid: self.grid.clone(), modes })
    }

    pub fn max_abs(&self) -> f64 {
        self.modes.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest `|F(m) - conj F(-m)|`, relative to the largest coefficient.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        self.grid.for_each_index(|flat, idx| {
            let mirror = self.grid.mirror_index(idx);
            worst = worst.max((self.modes[flat] - self.modes[mirror].conj()).norm());
        });
        worst / scale
    }

    /// Replaces the spectrum by its Hermitian part, `(F(m) + conj F(-m)) / 2`.
    pub fn symmetrize(&mut self) {
        let src = self.modes.clone();
        self.grid.for_each_index(|flat, idx| {
            let mirror = self.grid.mirror_index(idx);
            self.modes[flat] = 0.5 * (src[flat] + src[mirror].conj());
        });
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    // Plans are cached by the planner; the lock only guards plan creation.
    thread_local! {
        static LOCAL: std::cell::RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
            std::cell::RefCell::new(HashMap::new());
    }
    let key = (n, direction == FftDirection::Forward);
    LOCAL.with(|cache| {
        cache
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| {
                planner().lock().expect("fft planner poisoned").plan_fft(n, direction)
            })
            .clone()
    })
}

/// Unnormalized in-place multidimensional DFT over storage indices.
fn fft_nd(grid: &Grid, data: &mut [Complex64], direction: FftDirection) {
    let shape = grid.shape3();
    let total = data.len();
    let mut scratch = Vec::new();
    let mut lines: Vec<Complex64> = Vec::new();
    for axis in 0..grid.dims() {
        let n = shape[axis];
        let fft = plan(n, direction);
        let needed = fft.get_inplace_scratch_len();
        if scratch.len() < needed {
            scratch.resize(needed, Complex64::new(0.0, 0.0));
        }
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch[..needed]);
            continue;
        }
        let outer = total / (n * stride);
        lines.resize(total, Complex64::new(0.0, 0.0));
        let mut line = 0;
        for o in 0..outer {
            let base = o * n * stride;
            for r in 0..stride {
                let dst = &mut lines[line * n..(line + 1) * n];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = data[base + j * stride + r];
                }
                line += 1;
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch[..needed]);
        let mut line = 0;
        for o in 0..outer {
            let base = o * n * stride;
            for r in 0..stride {
                let src = &lines[line * n..(line + 1) * n];
                for (j, s) in src.iter().enumerate() {
                    data[base + j * stride + r] = *s;
                }
                line += 1;
            }
        }
    }
}

/// Multiplies by `(-1)^(Σ j_a)`, the phase of the centred coordinate origin.
fn apply_centering(grid: &Grid, data: &mut [Complex64]) {
    grid.for_each_index(|flat, idx| {
        if (idx[0] + idx[1] + idx[2]) % 2 == 1 {
            data[flat] = -data[flat];
        }
    });
}

pub(crate) fn forward_raw(grid: &Grid, mut data: Vec<Complex64>) -> SpectralField {
    fft_nd(grid, &mut data, FftDirection::Forward);
    let inv_n = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|v| *v *= inv_n);
    apply_centering(grid, &mut data);
    SpectralField { grid: grid.clone(), modes: data }
}

pub(crate) fn inverse_raw(spec: &SpectralField) -> Vec<Complex64> {
    let mut data = spec.modes.clone();
    apply_centering(&spec.grid, &mut data);
    fft_nd(&spec.grid, &mut data, FftDirection::Inverse);
    data
}

pub fn forward_transform(f: &RealField) -> SpectralField {
    let data = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_raw(&f.grid, data)
}

pub fn forward_complex(f: &ComplexField) -> SpectralField {
    forward_raw(&f.grid, f.values.clone())
}

/// Inverse transform onto a real field; fails for non-Hermitian spectra.
pub fn inverse_transform(spec: &SpectralField) -> Result<RealField> {
    let asymmetry = spec.hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NonHermitian { asymmetry });
    }
    let data = inverse_raw(spec);
    Ok(RealField { grid: spec.grid.clone(), values: data.iter().map(|v| v.re).collect() })
}

pub fn inverse_complex(spec: &SpectralField) -> ComplexField {
    ComplexField { grid: spec.grid.clone(), values: inverse_raw(spec) }
}

/// `(i κ_axis)^order` applied mode by mode. Odd derivatives annihilate the
/// Nyquist mode, which is a cosine on the grid.
pub fn spectral_derivative(spec: &SpectralField, axis: usize, order: u32) -> Result<SpectralField> {
    let grid = &spec.grid;
    if axis >= grid.dims() {
        return Err(Error::param("axis", format!("axis {axis} on a {}-d grid", grid.dims())));
    }
    let kappa = grid.wavenumbers(axis);
    let factors: Vec<Complex64> = kappa
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            if grid.is_nyquist(axis, j) && order % 2 == 1 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k).powu(order)
            }
        })
        .collect();
    let mut out = spec.clone();
    out.grid.clone().for_each_index(|flat, idx| out.modes[flat] *= factors[idx[axis]]);
    Ok(out)
}

/// Largest retained `|m_a|` under the two-thirds rule.
pub fn dealias_cutoff(n: usize) -> i64 {
    (n / 3) as i64
}

/// Zeroes every mode with `|m_a| > N_a / 3` on some axis.
pub fn dealias(spec: &SpectralField) -> SpectralField {
    let mut out = spec.clone();
    dealias_in_place(&mut out);
    out
}

pub(crate) fn dealias_in_place(spec: &mut SpectralField) {
    let grid = spec.grid.clone();
    let keep: Vec<Vec<bool>> = (0..3)
        .map(|a| {
            if a < grid.dims() {
                let cut = dealias_cutoff(grid.points()[a]);
                (0..grid.points()[a]).map(|j| grid.signed_index(a, j).abs() <= cut).collect()
            } else {
                vec![true]
            }
        })
        .collect();
    grid.for_each_index(|flat, idx| {
        if !(keep[0][idx[0]] && keep[1][idx[1]] && keep[2][idx[2]]) {
            spec.modes[flat] = Complex64::new(0.0, 0.0);
        }
    });
}

/// Per-axis factors that translate the trigonometric interpolant by `shift`,
/// i.e. evaluate `f(x + shift)`.
fn translation_factors(grid: &Grid, axis: usize, shift: f64) -> Vec<Complex64> {
    let l = grid.lengths()[axis];
    let n = grid.points()[axis];
    (0..n)
        .map(|j| {
            if grid.is_nyquist(axis, j) {
                Complex64::new((PI * n as f64 * shift / l).cos(), 0.0)
            } else {
                let m = grid.signed_index(axis, j) as f64;
                Complex64::from_polar(1.0, 2.0 * PI * m * shift / l)
            }
        })
        .collect()
}

/// Spectrum of `f(x + shift)`.
pub fn translate(spec: &SpectralField, shift: &[f64]) -> Result<SpectralField> {
    let grid = &spec.grid;
    if shift.len() != grid.dims() {
        return Err(Error::param("shift", format!("{} offsets for a {}-d grid", shift.len(), grid.dims())));
    }
    let factors: Vec<Vec<Complex64>> = (0..3)
        .map(|a| {
            if a < grid.dims() {
                translation_factors(grid, a, shift[a])
            } else {
                vec![Complex64::new(1.0, 0.0)]
            }
        })
        .collect();
    let mut out = spec.clone();
    grid.for_each_index(|flat, idx| {
        out.modes[flat] *= factors[0][idx[0]] * factors[1][idx[1]] * factors[2][idx[2]];
    });
    Ok(out)
}

/// Real samples of the interpolant at the grid points translated by `shift`.
pub fn sample_shifted(spec: &SpectralField, shift: &[f64]) -> Result<RealField> {
    inverse_transform(&translate(spec, shift)?)
}

pub fn sample_shifted_complex(spec: &SpectralField, shift: &[f64]) -> Result<ComplexField> {
    Ok(inverse_complex(&translate(spec, shift)?))
}

/// Evaluates the interpolant of `spec` on a finer grid covering the same
/// periodic cell in rescaled coordinates: target point `x` maps to source
/// coordinate `x · L_src / L_tgt + shift`. Requires `N_tgt >= N_src` on every
/// axis; the source Nyquist mode is split symmetrically.
pub fn resample(spec: &SpectralField, target: &Grid, shift: &[f64]) -> Result<ComplexField> {
    let src = &spec.grid;
    if target.dims() != src.dims() {
        return Err(Error::GridMismatch(format!(
            "resample from {}-d to {}-d grid",
            src.dims(),
            target.dims()
        )));
    }
    for a in 0..src.dims() {
        if target.points()[a] < src.points()[a] {
            return Err(Error::GridMismatch(format!(
                "axis {a}: cannot resample {} points onto {}",
                src.points()[a],
                target.points()[a]
            )));
        }
    }
    let moved = translate(spec, shift)?;
    let mut padded = SpectralField::zeros(target);
    let mut tgt_m = vec![0i64; src.dims()];
    let mut src_m = vec![0i64; src.dims()];
    src.for_each_index(|flat, idx| {
        let value = moved.modes[flat];
        if value == Complex64::new(0.0, 0.0) {
            return;
        }
        // Each Nyquist axis splits the coefficient over ±N/2.
        let nyq: Vec<usize> = (0..src.dims()).filter(|&a| src.is_nyquist(a, idx[a])).collect();
        for a in 0..src.dims() {
            src_m[a] = src.signed_index(a, idx[a]);
        }
        let copies = 1usize << nyq.len();
        let weight = 1.0 / copies as f64;
        for mask in 0..copies {
            tgt_m.copy_from_slice(&src_m);
            for (bit, &a) in nyq.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    tgt_m[a] = -src_m[a];
                }
            }
            let t = padded.flat_index(&tgt_m);
            padded.modes[t] += value * weight;
        }
    });
    Ok(inverse_complex(&padded))
}

/// Weighted sum `Σ_q weights[q] · f(x + shifts[q])` evaluated through one
/// inverse transform. The shifts act along `axis` only.
pub fn shifted_quadrature(
    spec: &SpectralField,
    axis: usize,
    shifts: &[f64],
    weights: &[f64],
) -> Result<SpectralField> {
    let grid = &spec.grid;
    if axis >= grid.dims() {
        return Err(Error::param("axis", format!("axis {axis} on a {}-d grid", grid.dims())));
    }
    if shifts.len() != weights.len() {
        return Err(Error::param("weights", "one weight per shift required"));
    }
    let n = grid.points()[axis];
    let mut mult = vec![Complex64::new(0.0, 0.0); n];
    for (&s, &w) in shifts.iter().zip(weights) {
        for (j, f) in translation_factors(grid, axis, s).into_iter().enumerate() {
            mult[j] += w * f;
        }
    }
    let mut out = spec.clone();
    grid.for_each_index(|flat, idx| out.modes[flat] *= mult[idx[axis]]);
    Ok(out)
}
