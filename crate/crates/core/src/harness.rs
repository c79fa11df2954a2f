//! ε-sweeps comparing the full solver against the composed approximation,
//! order fits and the equation-residual order test.

use std::f64::consts::PI;
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::boussinesq::{init_from_plane_waves, suggest_dt, CarrierData, Stepper};
use crate::composer::{build_envelopes, fas_residual, EnvelopeSet, FasBundle};
use crate::config::Config;
use crate::dispersion::{branch, PhysicalParams};
use crate::error::{Error, Result};
use crate::nls::{hamiltonian, mass};
use crate::norms::{
    band_shrink_report, convolution_constant, estimate_band, linear_fit, lipschitz_check, power_constant,
    transport_bilinear_check, BandShrink, BoundCheck, ConvolutionStats, Lattice, TransportCheck,
};
use crate::spectral::{forward_complex, Grid, RealField};

/// Errors at or below this are treated as exact zeros by [`fit_order`].
pub const DEGENERATE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub sup: f64,
    pub l2: f64,
}

/// `max|a − b|` and `(Σ|a − b|² dV)^{1/2}`.
pub fn compare_fields(a: &RealField, b: &RealField) -> Result<FieldDiff> {
    a.grid.ensure_same(&b.grid, "compared fields")?;
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        sup = sup.max(d);
        sq += d * d;
    }
    Ok(FieldDiff { sup, l2: (sq * a.grid.cell_volume()).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Ok,
    /// `r² <` the configured minimum; excluded from pass/fail.
    Unreliable,
    /// Every error vanished; there is no order to fit.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% confidence interval of the slope.
    pub slope_ci: [f64; 2],
    pub eps_range: [f64; 2],
    pub points: usize,
    pub dropped: usize,
    pub status: FitStatus,
}

impl OrderFit {
    /// `None` when the fit cannot decide (unreliable or degenerate).
    pub fn within(&self, window: [f64; 2]) -> Option<bool> {
        match self.status {
            FitStatus::Ok => Some(self.slope >= window[0] && self.slope <= window[1]),
            _ => None,
        }
    }
}

/// Least squares of `ln error` against `ln ε`. Non-positive errors are dropped.
pub fn fit_order(pairs: &[(f64, f64)], min_r2: f64) -> Result<OrderFit> {
    if !pairs.is_empty() && pairs.iter().all(|&(_, e)| e.abs() <= DEGENERATE_FLOOR) {
        let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        return Ok(OrderFit {
            slope: 0.0,
            intercept: 0.0,
            r2: 0.0,
            slope_ci: [0.0, 0.0],
            eps_range: [lo, hi],
            points: pairs.len(),
            dropped: 0,
            status: FitStatus::Degenerate,
        });
    }
    let kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(eps, e)| e > 0.0 && eps > 0.0 && e.is_finite()).collect();
    let dropped = pairs.len() - kept.len();
    if dropped > 0 {
        log::warn!("fit_order: dropped {dropped} non-positive error(s)");
    }
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable (ε, error) pairs; at least 3 required", kept.len())));
    }
    let x: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope, r2) = linear_fit(&x, &y);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let half = match StudentsT::new(0.0, 1.0, n - 2.0) {
        Ok(t) if n > 2.0 => t.inverse_cdf(0.975) * se,
        _ => f64::INFINITY,
    };
    let half = if half.is_finite() { half } else { 0.0 };
    Ok(OrderFit {
        slope,
        intercept,
        r2,
        slope_ci: [slope - half, slope + half],
        eps_range: [
            kept.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            kept.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        ],
        points: kept.len(),
        dropped,
        status: if r2 < min_r2 { FitStatus::Unreliable } else { FitStatus::Ok },
    })
}

/// Grids and initial data for one amplitude.
#[derive(Clone, Debug)]
pub struct EpsSetup {
    pub eps: f64,
    pub fast: Grid,
    pub slow: Grid,
    pub carrier: CarrierData,
    pub t_end: f64,
    pub dt: f64,
}

/// Fast box `L/ε` with the x-period rounded to whole wavelengths; the slow
/// box is `ε` times the fast one.
pub fn setup_for_eps(cfg: &Config, eps: f64) -> Result<EpsSetup> {
    let g = &cfg.grid;
    let periods = (g.slow_lengths[0] / (2.0 * PI * eps)).round().max(1.0);
    let mut lengths = vec![2.0 * PI * periods];
    let mut points = vec![(g.points_per_wavelength * periods as usize).next_power_of_two()];
    for a in 1..g.dims {
        lengths.push(g.slow_lengths[a] / eps);
        points.push(g.transverse_points);
    }
    let fast = Grid::new(lengths, points)?;
    let slow = Grid::new(fast.lengths().iter().map(|l| l * eps).collect(), g.slow_points.clone())?;
    let params = cfg.physical_params()?;
    let carrier = CarrierData {
        eps,
        phi0: cfg.envelopes.phi0.clone(),
        phi1: cfg.envelopes.phi1.clone(),
        psi1: cfg.envelopes.psi1.clone(),
        params: params.clone(),
    };
    carrier.validate(&slow)?;
    let dt = cfg.boussinesq_solver.dt_factor / 0.5 * suggest_dt(&fast, &params);
    Ok(EpsSetup { eps, fast, slow, carrier, t_end: cfg.experiment.horizon / (eps * eps), dt })
}

/// `0` followed by `points` geometric times from `start·t_end` to `t_end`.
pub fn schedule(t_end: f64, points: usize, start: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    for i in 0..points {
        let frac = if points == 1 { 1.0 } else { start.powf(1.0 - i as f64 / (points - 1) as f64) };
        let t = if i + 1 == points { t_end } else { t_end * frac };
        if t > *out.last().unwrap() {
            out.push(t);
        }
    }
    out
}

pub fn residual_step(cfg: &Config, params: &PhysicalParams) -> Result<f64> {
    Ok(cfg.composer.time_step_fraction * 2.0 * PI / branch(1, 1, params)?.omega)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Sup-norm error of the truncations with 1, 2, 3 terms.
    pub err_sup: [f64; 3],
    pub err_l2: [f64; 3],
    pub residual_sup: Option<f64>,
    pub mass_drift: f64,
    pub ham_drift: f64,
    pub beta_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub t_end: f64,
    pub fast_points: Vec<usize>,
    pub fast_lengths: Vec<f64>,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub band: Option<BandShrink>,
    pub failure: Option<String>,
}

impl EpsRecord {
    /// Largest sup-norm error over the schedule for `terms`.
    pub fn sup_error(&self, terms: usize) -> f64 {
        self.samples.iter().map(|s| s.err_sup[terms - 1]).fold(0.0, f64::max)
    }

    pub fn l2_error(&self, terms: usize) -> f64 {
        self.samples.iter().map(|s| s.err_l2[terms - 1]).fold(0.0, f64::max)
    }

    pub fn residual(&self) -> Option<f64> {
        let r: Vec<f64> = self.samples.iter().filter_map(|s| s.residual_sup).collect();
        (!r.is_empty()).then(|| r.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
}

impl Provenance {
    pub fn of(cfg: &Config) -> Self {
        Provenance { config_hash: cfg.hash(), code_version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    /// What was fitted, e.g. `err_sup_terms1`.
    pub quantity: String,
    /// `sup` or `l2`.
    pub norm: String,
    pub fit: Option<OrderFit>,
    /// Why `fit` is missing.
    pub note: Option<String>,
    pub window: Option<[f64; 2]>,
    /// `None` when the fit was skipped, unreliable or degenerate.
    pub passed: Option<bool>,
}

impl NamedFit {
    fn build(quantity: &str, norm: &str, pairs: &[(f64, f64)], window: Option<[f64; 2]>, min_r2: f64) -> NamedFit {
        match fit_order(pairs, min_r2) {
            Ok(fit) => {
                let passed = window.and_then(|w| fit.within(w));
                NamedFit { quantity: quantity.into(), norm: norm.into(), fit: Some(fit), note: None, window, passed }
            }
            Err(e) => NamedFit {
                quantity: quantity.into(),
                norm: norm.into(),
                fit: None,
                note: Some(e.to_string()),
                window,
                passed: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub provenance: Provenance,
    pub records: Vec<EpsRecord>,
    pub fits: Vec<NamedFit>,
}

impl ReductionReport {
    pub fn fit(&self, quantity: &str) -> Option<&NamedFit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }

    pub fn failures(&self) -> Vec<(f64, &str)> {
        self.records.iter().filter_map(|r| r.failure.as_deref().map(|f| (r.eps, f))).collect()
    }

    /// Degenerate fits count as passing; skipped or unreliable ones do not decide.
    pub fn passed(&self) -> Option<bool> {
        let decided: Vec<bool> = self
            .fits
            .iter()
            .filter(|f| f.window.is_some())
            .filter_map(|f| match (&f.fit, f.passed) {
                (_, Some(p)) => Some(p),
                (Some(fit), None) if fit.status == FitStatus::Degenerate => Some(true),
                _ => None,
            })
            .collect();
        (!decided.is_empty()).then(|| decided.iter().all(|&p| p))
    }
}

fn relative_drift(now: f64, start: f64) -> f64 {
    let d = (now - start).abs();
    if start == 0.0 {
        d
    } else {
        d / start.abs()
    }
}

/// Runs one amplitude: full solver against the composed approximation on the schedule.
pub fn run_single(cfg: &Config, eps: f64) -> EpsRecord {
    let started = Instant::now();
    let mut record = EpsRecord {
        eps,
        t_end: cfg.experiment.horizon / (eps * eps),
        fast_points: vec![],
        fast_lengths: vec![],
        dt: 0.0,
        samples: vec![],
        band: None,
        failure: None,
    };
    if let Err(e) = run_single_into(cfg, eps, &mut record) {
        log::error!("eps = {eps}: {e}");
        record.failure = Some(e.to_string());
    }
    log::info!("eps = {eps} finished in {:.1} s", started.elapsed().as_secs_f64());
    record
}

fn run_single_into(cfg: &Config, eps: f64, record: &mut EpsRecord) -> Result<()> {
    let setup = setup_for_eps(cfg, eps)?;
    record.fast_points = setup.fast.points().to_vec();
    record.fast_lengths = setup.fast.lengths().to_vec();
    record.dt = setup.dt;
    let params = &setup.carrier.params;
    let envelopes = build_envelopes(&setup.carrier, &setup.slow, &cfg.envelope_options())?;
    let bundle = FasBundle::new(&envelopes, setup.fast.clone(), 3)?;
    let h_t = residual_step(cfg, params)?;
    let initial = envelopes.envelope_at(0, 0.0)?;
    let (m0, h0) = (mass(&initial), hamiltonian(&initial));

    let state = init_from_plane_waves(&setup.carrier, &setup.fast)?;
    let mut stepper = Stepper::new(&state, setup.dt, &params.nonlinearity, params)?;
    for t in schedule(setup.t_end, cfg.harness.schedule_points, cfg.harness.schedule_start) {
        stepper.advance_to(t, &mut [])?;
        let u = stepper.snapshot()?.u;
        let truncations = bundle.truncations(t)?;
        let mut err_sup = [0.0; 3];
        let mut err_l2 = [0.0; 3];
        for (i, approx) in truncations.iter().enumerate() {
            let d = compare_fields(&u, approx)?;
            err_sup[i] = d.sup;
            err_l2[i] = d.l2;
        }
        let residual_sup = if cfg.harness.record_residual {
            Some(fas_residual(&envelopes, t, &setup.fast, 3, &params.nonlinearity, h_t)?.max_abs())
        } else {
            None
        };
        let env = envelopes.envelope_at(0, eps * eps * t)?;
        let band = estimate_band(&forward_complex(&env.w));
        record.samples.push(Sample {
            t,
            err_sup,
            err_l2,
            residual_sup,
            mass_drift: relative_drift(mass(&env), m0),
            ham_drift: relative_drift(hamiltonian(&env), h0),
            beta_hat: band.valid.then_some(band.beta_hat),
        });
        log::debug!("eps = {eps}, t = {t:.3}: err_sup = {err_sup:?}");
    }
    record.band = envelope_band(&envelopes).ok();
    Ok(())
}

/// Band shrink of the `+ω` envelope against its slow time `θ = ε²t`.
pub fn envelope_band(set: &EnvelopeSet) -> Result<BandShrink> {
    band_shrink_report(&set.envelope_spectra(0))
}

/// Worker count: the config value, else `BNLS_WORKERS`, else the machine's parallelism.
pub fn resolve_workers(cfg: &Config) -> usize {
    if cfg.experiment.workers > 0 {
        return cfg.experiment.workers;
    }
    std::env::var("BNLS_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `job` for every ε on a bounded pool and returns the results in
/// `eps_list` order; completed results are handed to the caller's thread
/// over a channel as they finish.
fn sweep<T: Send>(cfg: &Config, job: impl Fn(f64) -> T + Sync) -> Result<Vec<T>> {
    let eps_list = &cfg.experiment.eps_list;
    let workers = resolve_workers(cfg).min(eps_list.len()).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("experiment.workers", e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, T)>();
    let mut slots: Vec<Option<T>> = (0..eps_list.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let job = &job;
        scope.spawn(move || {
            pool.scope(|s| {
                for (i, &eps) in eps_list.iter().enumerate() {
                    let tx = tx.clone();
                    s.spawn(move |_| {
                        let _ = tx.send((i, job(eps)));
                    });
                }
            });
        });
        for (i, out) in rx {
            log::info!("received result for eps = {}", eps_list[i]);
            slots[i] = Some(out);
        }
    });
    Ok(slots.into_iter().map(|s| s.expect("every job reports")).collect())
}

pub fn run_reduction_experiment(cfg: &Config) -> Result<ReductionReport> {
    cfg.validate()?;
    let records = sweep(cfg, |eps| run_single(cfg, eps))?;
    let h = &cfg.harness;
    let ok: Vec<&EpsRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let mut fits = Vec::new();
    for terms in 1..=3 {
        let window = (terms == 1).then_some(h.order_window);
        let sup: Vec<(f64, f64)> = ok.iter().map(|r| (r.eps, r.sup_error(terms))).collect();
        fits.push(NamedFit::build(&format!("err_sup_terms{terms}"), "sup", &sup, window, h.min_r2));
        let l2: Vec<(f64, f64)> = ok.iter().map(|r| (r.eps, r.l2_error(terms))).collect();
        fits.push(NamedFit::build(&format!("err_l2_terms{terms}"), "l2", &l2, None, h.min_r2));
    }
    let residual: Vec<(f64, f64)> = ok.iter().filter_map(|r| r.residual().map(|v| (r.eps, v))).collect();
    if !residual.is_empty() {
        fits.push(NamedFit::build("residual_sup_terms3", "sup", &residual, None, h.min_r2));
    }
    Ok(ReductionReport { provenance: Provenance::of(cfg), records, fits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub eps: f64,
    /// `(t, sup-norm residual)` over the latest schedule times.
    pub residuals: Vec<(f64, f64)>,
    /// Sup-norm mismatch of the two-term approximation and its time
    /// derivative against the initial data.
    pub initial_mismatch: f64,
    pub failure: Option<String>,
}

impl ResidualRecord {
    pub fn sup(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub provenance: Provenance,
    pub terms: usize,
    pub records: Vec<ResidualRecord>,
    pub residual_fit: NamedFit,
    pub mismatch_fit: NamedFit,
}

fn residual_single(cfg: &Config, eps: f64, terms: usize) -> ResidualRecord {
    let mut rec = ResidualRecord { eps, residuals: vec![], initial_mismatch: 0.0, failure: None };
    let run = |rec: &mut ResidualRecord| -> Result<()> {
        let setup = setup_for_eps(cfg, eps)?;
        let params = &setup.carrier.params;
        let envelopes = build_envelopes(&setup.carrier, &setup.slow, &cfg.envelope_options())?;
        let h_t = residual_step(cfg, params)?;
        let times = schedule(setup.t_end, cfg.harness.schedule_points, cfg.harness.schedule_start);
        // The residual oscillates with the carrier; sweep one period back from each time.
        let phases = cfg.harness.residual_phases;
        let period = 2.0 * PI / envelopes.omega1();
        for &t in &times[times.len() - cfg.harness.residual_points..] {
            let mut worst: f64 = 0.0;
            for j in 0..phases {
                let s = t - period * j as f64 / phases as f64;
                if s < 2.0 * h_t {
                    break;
                }
                let r = fas_residual(&envelopes, s, &setup.fast, terms, &params.nonlinearity, h_t)?;
                worst = worst.max(r.max_abs());
            }
            rec.residuals.push((t, worst));
        }
        rec.initial_mismatch = initial_mismatch(&envelopes, &setup, h_t)?;
        Ok(())
    };
    let started = Instant::now();
    if let Err(e) = run(&mut rec) {
        log::error!("eps = {eps}: {e}");
        rec.failure = Some(e.to_string());
    }
    log::info!("residual eps = {eps} finished in {:.1} s", started.elapsed().as_secs_f64());
    rec
}

/// `max(‖u_FAS(0) − u(0)‖_∞, ‖∂_t u_FAS(0) − u_t(0)‖_∞)` for the two-term approximation.
pub fn initial_mismatch(set: &EnvelopeSet, setup: &EpsSetup, h_t: f64) -> Result<f64> {
    let bundle = FasBundle::new(set, setup.fast.clone(), 2)?;
    let state = init_from_plane_waves(&setup.carrier, &setup.fast)?;
    let u0 = bundle.evaluate(0.0)?;
    // One-sided second-order difference: the composer starts at t = 0.
    let u1 = bundle.evaluate(h_t)?;
    let u2 = bundle.evaluate(2.0 * h_t)?;
    let ut = u1.scale(4.0).sub(&u0.clone().scale(3.0))?.sub(&u2)?.scale(0.5 / h_t);
    Ok(compare_fields(&u0, &state.u)?.sup.max(compare_fields(&ut, &state.ut)?.sup))
}

pub fn fas_residual_experiment(cfg: &Config, terms: usize) -> Result<ResidualReport> {
    cfg.validate()?;
    if !(1..=3).contains(&terms) {
        return Err(Error::param("terms", format!("{terms} outside 1..=3")));
    }
    let records = sweep(cfg, |eps| residual_single(cfg, eps, terms))?;
    let ok: Vec<&ResidualRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let h = &cfg.harness;
    let window = match terms {
        3 => Some(h.residual_window),
        1 => Some(h.leading_residual_window),
        _ => None,
    };
    let pairs: Vec<(f64, f64)> = ok.iter().map(|r| (r.eps, r.sup())).collect();
    let residual_fit = NamedFit::build(&format!("residual_sup_terms{terms}"), "sup", &pairs, window, h.min_r2);
    let mism: Vec<(f64, f64)> = ok.iter().map(|r| (r.eps, r.initial_mismatch)).collect();
    let mismatch_fit = NamedFit::build("initial_mismatch_terms2", "sup", &mism, None, h.min_r2);
    Ok(ResidualReport { provenance: Provenance::of(cfg), terms, records, residual_fit, mismatch_fit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeRun {
    pub half_width: usize,
    pub convolution: ConvolutionStats,
    /// Power and power-Lipschitz bounds for `j = 1..=max_power`.
    pub powers: Vec<BoundCheck>,
    pub lipschitz: BoundCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormsReport {
    pub provenance: Provenance,
    pub runs: Vec<LatticeRun>,
    /// `(max M₀ − min M₀) / min M₀` across the lattice sizes.
    pub m0_variation: f64,
    pub transport: TransportCheck,
}

impl NormsReport {
    pub fn violations(&self) -> usize {
        self.runs
            .iter()
            .map(|r| r.lipschitz.violations + r.powers.iter().map(|p| p.violations).sum::<usize>())
            .sum()
    }
}

/// Measured convolution constants, bound checks and the transport ratio.
pub fn norms_experiment(cfg: &Config) -> Result<NormsReport> {
    cfg.validate()?;
    let n = &cfg.weighted_norms;
    let wp = n.weights();
    let seed = cfg.experiment.seed;
    let mut runs = Vec::new();
    for &hw in &n.half_widths {
        let lattice = Lattice { dims: n.lattice_dims, half_width: hw };
        let convolution = convolution_constant(lattice, n.trials, &wp, seed)?;
        let powers = (1..=n.max_power)
            .map(|j| power_constant(lattice, j, n.trials, &wp, seed ^ 0x5eed, convolution.m0, n.m1))
            .collect::<Result<Vec<_>>>()?;
        let lipschitz = lipschitz_check(lattice, n.trials, &wp, seed ^ 0x1195, convolution.m0, n.m1)?;
        log::info!("lattice half width {hw}: M0 = {:.6}", convolution.m0);
        runs.push(LatticeRun { half_width: hw, convolution, powers, lipschitz });
    }
    let m0: Vec<f64> = runs.iter().map(|r| r.convolution.m0).collect();
    let lo = m0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lengths = vec![2.0 * PI * n.transport_periods];
    lengths.extend(std::iter::repeat_n(2.0 * PI, n.transport_points.len() - 1));
    let grid = Grid::new(lengths, n.transport_points.clone())?;
    let transport = transport_bilinear_check(&grid, n.transport_trials, n.zeta, &n.taus, &wp, seed)?;
    Ok(NormsReport { provenance: Provenance::of(cfg), runs, m0_variation: (hi - lo) / lo, transport })
}
