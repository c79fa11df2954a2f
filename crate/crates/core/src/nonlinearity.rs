//! Polynomial flux `g(∇u)` through cubic order and the divergence term of
//! the Boussinesq equation.
//!
//! With `v = ∂_x u` and `w_i = ∂_{y_i} u` each component reads
//!
//! ```text
//! g_j = Σ_i [g02_ji w_i² + g21_ji v² w_i + g12_ji v w_i² + g03_ji w_i³] + g30_j v³
//! ```
//!
//! Matrices are stored row `j` (one per component, `n` rows) by column `i`
//! (one per transverse axis, `n - 1` columns). Empty matrices mean zero.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    dealias_in_place, forward_raw, inverse_complex, inverse_transform, spectral_derivative,
    forward_transform, Grid, RealField, SpectralField,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorNonlinearity {
    pub g30: Vec<f64>,
    #[serde(default)]
    pub g02: Vec<Vec<f64>>,
    #[serde(default)]
    pub g21: Vec<Vec<f64>>,
    #[serde(default)]
    pub g12: Vec<Vec<f64>>,
    #[serde(default)]
    pub g03: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub coefficient: String,
    pub value: f64,
    pub reason: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.coefficient, self.value, self.reason)
    }
}

impl TaylorNonlinearity {
    pub fn zero(dims: usize) -> Self {
        TaylorNonlinearity { g30: vec![0.0; dims], g02: vec![], g21: vec![], g12: vec![], g03: vec![] }
    }

    /// Only the longitudinal cubic `g_1 = g130 v³`.
    pub fn cubic(dims: usize, g130: f64) -> Self {
        let mut t = Self::zero(dims);
        t.g30[0] = g130;
        t
    }

    pub fn dims(&self) -> usize {
        self.g30.len()
    }

    pub fn g130(&self) -> f64 {
        self.g30.first().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        let zero_mat = |m: &Vec<Vec<f64>>| m.iter().flatten().all(|&c| c == 0.0);
        self.g30.iter().all(|&c| c == 0.0)
            && zero_mat(&self.g02)
            && zero_mat(&self.g21)
            && zero_mat(&self.g12)
            && zero_mat(&self.g03)
    }

    fn matrices(&self) -> [(&'static str, &Vec<Vec<f64>>); 4] {
        [("g02", &self.g02), ("g21", &self.g21), ("g12", &self.g12), ("g03", &self.g03)]
    }

    /// Checks shapes, finiteness and the vanishing of `g30[j]` for `j >= 2`.
    /// Names use one-based indices.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = self.structural_violations();
        for (j, &c) in self.g30.iter().enumerate().skip(1) {
            if c != 0.0 {
                out.push(Violation {
                    coefficient: format!("g30[{}]", j + 1),
                    value: c,
                    reason: "transverse cubic coefficients must vanish",
                });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Like [`validate`](Self::validate) but tolerates nonzero `g30[j]`, `j >= 2`.
    pub fn validate_permissive(&self) -> std::result::Result<(), Vec<Violation>> {
        let out = self.structural_violations();
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub fn check(&self, strict: bool) -> Result<()> {
        let r = if strict { self.validate() } else { self.validate_permissive() };
        r.map_err(Error::Nonlinearity)
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let n = self.dims();
        let mut out = Vec::new();
        if n == 0 {
            out.push(Violation { coefficient: "g30".into(), value: f64::NAN, reason: "needs one entry per axis" });
            return out;
        }
        for (j, &c) in self.g30.iter().enumerate() {
            if !c.is_finite() {
                out.push(Violation { coefficient: format!("g30[{}]", j + 1), value: c, reason: "not finite" });
            }
        }
        for (name, m) in self.matrices() {
            if m.is_empty() {
                continue;
            }
            if m.len() != n || m.iter().any(|row| row.len() != n - 1) {
                out.push(Violation {
                    coefficient: name.into(),
                    value: f64::NAN,
                    reason: "matrix must have one row per axis and one column per transverse axis",
                });
                continue;
            }
            for (j, row) in m.iter().enumerate() {
                for (i, &c) in row.iter().enumerate() {
                    if !c.is_finite() {
                        out.push(Violation {
                            coefficient: format!("{name}[{}][{}]", j + 1, i + 2),
                            value: c,
                            reason: "not finite",
                        });
                    }
                }
            }
        }
        out
    }

    fn coef(m: &[Vec<f64>], j: usize, i: usize) -> f64 {
        m.get(j).and_then(|row| row.get(i)).copied().unwrap_or(0.0)
    }

    /// Pointwise flux for `v = ∂_x u` and transverse gradient `wbar`.
    pub fn evaluate_g(&self, v: f64, wbar: &[f64]) -> Vec<f64> {
        (0..self.dims())
            .map(|j| {
                let mut g = self.g30[j] * v * v * v;
                for (i, &w) in wbar.iter().enumerate() {
                    g += Self::coef(&self.g02, j, i) * w * w
                        + Self::coef(&self.g21, j, i) * v * v * w
                        + Self::coef(&self.g12, j, i) * v * w * w
                        + Self::coef(&self.g03, j, i) * w * w * w;
                }
                g
            })
            .collect()
    }

    /// `Σ_j ∂_j g_j(∇u)` on the grid of `u`.
    pub fn divergence_term(&self, u: &RealField) -> Result<RealField> {
        let spec = self.divergence_spectral(&forward_transform(u))?;
        inverse_transform(&spec)
    }

    /// Spectrum of the divergence term given the spectrum of `u`. Products are
    /// dealiased after every pairwise multiplication.
    pub(crate) fn divergence_spectral(&self, u: &SpectralField) -> Result<SpectralField> {
        let grid = &u.grid;
        let n = self.dims();
        if grid.dims() != n {
            return Err(Error::GridMismatch(format!(
                "nonlinearity has {n} components but the grid has {} axes",
                grid.dims()
            )));
        }
        let mut out = SpectralField::zeros(grid);
        if self.is_zero() {
            return Ok(out);
        }

        let gradient = |axis: usize| -> Result<Vec<f64>> {
            let mut d = spectral_derivative(u, axis, 1)?;
            dealias_in_place(&mut d);
            Ok(inverse_complex(&d).values.iter().map(|c| c.re).collect())
        };
        let column_used = |m: &[Vec<f64>], i: usize| (0..n).any(|j| Self::coef(m, j, i) != 0.0);

        let v = gradient(0)?;
        let needs_v2 = self.g30.iter().any(|&c| c != 0.0) || (0..n - 1).any(|i| column_used(&self.g21, i));
        let v2 = if needs_v2 { Some(dealiased_product(grid, &v, &v)) } else { None };

        // Flux spectra, one per component.
        let mut flux = vec![SpectralField::zeros(grid); n];
        let mut accumulate = |coefs: &dyn Fn(usize) -> f64, monomial: &SpectralField| {
            for (j, g) in flux.iter_mut().enumerate() {
                let c = coefs(j);
                if c != 0.0 {
                    g.modes.iter_mut().zip(&monomial.modes).for_each(|(a, b)| *a += c * b);
                }
            }
        };

        if let Some((v2_phys, _)) = &v2 {
            if self.g30.iter().any(|&c| c != 0.0) {
                let v3 = dealiased_product(grid, v2_phys, &v).1;
                accumulate(&|j| self.g30[j], &v3);
            }
        }
        for i in 0..n - 1 {
            let uses_w = column_used(&self.g02, i)
                || column_used(&self.g21, i)
                || column_used(&self.g12, i)
                || column_used(&self.g03, i);
            if !uses_w {
                continue;
            }
            let w = gradient(i + 1)?;
            let needs_w2 = column_used(&self.g02, i) || column_used(&self.g12, i) || column_used(&self.g03, i);
            let w2 = if needs_w2 { Some(dealiased_product(grid, &w, &w)) } else { None };
            if let Some((w2_phys, w2_spec)) = &w2 {
                if column_used(&self.g02, i) {
                    accumulate(&|j| Self::coef(&self.g02, j, i), w2_spec);
                }
                if column_used(&self.g12, i) {
                    let m = dealiased_product(grid, &v, w2_phys).1;
                    accumulate(&|j| Self::coef(&self.g12, j, i), &m);
                }
                if column_used(&self.g03, i) {
                    let m = dealiased_product(grid, w2_phys, &w).1;
                    accumulate(&|j| Self::coef(&self.g03, j, i), &m);
                }
            }
            if column_used(&self.g21, i) {
                let v2_phys = &v2.as_ref().expect("v² computed when g21 is used").0;
                let m = dealiased_product(grid, v2_phys, &w).1;
                accumulate(&|j| Self::coef(&self.g21, j, i), &m);
            }
        }

        for (j, g) in flux.iter().enumerate() {
            let d = spectral_derivative(g, j, 1)?;
            out.modes.iter_mut().zip(&d.modes).for_each(|(a, b)| *a += b);
        }
        dealias_in_place(&mut out);
        Ok(out)
    }
}

/// Pointwise product followed by the two-thirds filter. Returns the filtered
/// product in physical and spectral form.
fn dealiased_product(grid: &Grid, a: &[f64], b: &[f64]) -> (Vec<f64>, SpectralField) {
    let data = a.iter().zip(b).map(|(x, y)| Complex64::new(x * y, 0.0)).collect();
    let mut spec = forward_raw(grid, data);
    dealias_in_place(&mut spec);
    let phys = inverse_complex(&spec).values.iter().map(|c| c.re).collect();
    (phys, spec)
}
