//! Classical approximation of the field: `psi(x) = f_0(x) + sum_{i != 0} a_i f_i(x)`
//! with ordinary random amplitudes held fixed for one experiment.
//!
//! Sample `j` of an ensemble draws from `trial_rng(seed, j)`. Samples are
//! processed in fixed-size chunks, and the chunks are reduced in index order,
//! so results do not depend on the thread count.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{overlap_matrix, BasisSet, Lattice, ModelError, Subvolume};
use crate::moments::trial_rng;

/// Agreement threshold for the mean laws, in standard errors.
pub const SE_SIGMAS: f64 = 5.0;
pub const MIN_SAMPLES: usize = 1000;
const CHUNK: usize = 1024;
const HISTOGRAM_BINS: usize = 20;
/// Used in place of a standard error that is exactly zero (no fluctuations).
const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("the basis must be complete")]
    Incomplete,
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} fluctuation amplitudes, got {got}")]
    AmplitudeCount { expected: usize, got: usize },
    #[error("unknown amplitude model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeModel {
    /// Real and imaginary parts independent normal with variance 1/4.
    Gaussian,
    /// `|a| = 1/sqrt(2)` with a uniform phase.
    FixedMagnitude,
    /// Every amplitude is zero. This is a degenerate hook for tests.
    Vanishing,
}

impl AmplitudeModel {
    /// `<a* a>`.
    pub fn second_moment(self) -> f64 {
        match self {
            Self::Gaussian | Self::FixedMagnitude => 0.5,
            Self::Vanishing => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::FixedMagnitude => "fixed-magnitude",
            Self::Vanishing => "vanishing",
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        match self {
            Self::Gaussian => {
                let normal = Normal::new(0.0, 0.5).expect("valid normal");
                Complex64::new(normal.sample(rng), normal.sample(rng))
            }
            Self::FixedMagnitude => {
                let phase = Uniform::new(0.0, TAU).expect("valid range").sample(rng);
                Complex64::from_polar(FRAC_1_SQRT_2, phase)
            }
            Self::Vanishing => Complex64::new(0.0, 0.0),
        }
    }
}

impl fmt::Display for AmplitudeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AmplitudeModel {
    type Err = StochasticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "complex-gaussian" => Ok(Self::Gaussian),
            "fixed-magnitude" | "fixed" | "phase" => Ok(Self::FixedMagnitude),
            "vanishing" | "zero" => Ok(Self::Vanishing),
            other => Err(StochasticError::UnknownModel(other.to_string())),
        }
    }
}

/// Known vacuum power in `v`: `s * sum_{i != 0} sum_{x in v} |f_i(x)|^2`,
/// where `s = <a* a>`.
pub fn background(basis: &BasisSet, v: &Subvolume, model: AmplitudeModel) -> f64 {
    let modes = basis.modes();
    let power: f64 = (1..basis.n_modes())
        .map(|i| {
            v.sites()
                .iter()
                .map(|&x| modes[(i, x)].norm_sqr())
                .sum::<f64>()
        })
        .sum();
    model.second_moment() * power
}

/// Per-site vacuum power `s * sum_{i != 0} |f_i(x)|^2`.
fn site_background(basis: &BasisSet, model: AmplitudeModel) -> Vec<f64> {
    let modes = basis.modes();
    (0..basis.n_sites())
        .map(|x| {
            let p: f64 = (1..basis.n_modes()).map(|i| modes[(i, x)].norm_sqr()).sum();
            model.second_moment() * p
        })
        .collect()
}

/// `|f_0(x)|^2 + s * sum_{i != 0} |f_i(x)|^2`.
pub fn expected_density(basis: &BasisSet, model: AmplitudeModel) -> Vec<f64> {
    let f0 = basis.occupied();
    site_background(basis, model)
        .into_iter()
        .enumerate()
        .map(|(x, b)| f0[x].norm_sqr() + b)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRealization {
    /// `a_0 = 1` followed by the fluctuation amplitudes.
    pub amplitudes: Vec<Complex64>,
    pub density: Vec<f64>,
    /// Raw `N_v` per requested subvolume.
    pub counts: Vec<f64>,
    /// `N_v - background(v)`.
    pub subtracted: Vec<f64>,
}

impl DensityRealization {
    /// Builds a realization from the `n_modes - 1` fluctuation amplitudes.
    /// The occupied mode always enters with amplitude exactly 1.
    pub fn from_fluctuations(
        basis: &BasisSet,
        fluctuations: &[Complex64],
        model: AmplitudeModel,
        subvolumes: &[Subvolume],
    ) -> Result<Self, StochasticError> {
        let expected = basis.n_modes() - 1;
        if fluctuations.len() != expected {
            return Err(StochasticError::AmplitudeCount {
                expected,
                got: fluctuations.len(),
            });
        }
        let mut amplitudes = Vec::with_capacity(basis.n_modes());
        amplitudes.push(Complex64::new(1.0, 0.0));
        amplitudes.extend_from_slice(fluctuations);
        let density = density_of(basis, &amplitudes);
        let counts: Vec<f64> = subvolumes
            .iter()
            .map(|v| v.sites().iter().map(|&x| density[x]).sum())
            .collect();
        let subtracted = subvolumes
            .iter()
            .zip(&counts)
            .map(|(v, n)| n - background(basis, v, model))
            .collect();
        Ok(Self {
            amplitudes,
            density,
            counts,
            subtracted,
        })
    }

    pub fn to_csv(&self) -> String {
        density_csv(&self.density)
    }
}

fn density_of(basis: &BasisSet, amplitudes: &[Complex64]) -> Vec<f64> {
    let modes = basis.modes();
    (0..basis.n_sites())
        .map(|x| {
            amplitudes
                .iter()
                .enumerate()
                .map(|(i, a)| a * modes[(i, x)])
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect()
}

fn draw_fluctuations<R: Rng + ?Sized>(
    n: usize,
    model: AmplitudeModel,
    rng: &mut R,
) -> Vec<Complex64> {
    (0..n).map(|_| model.draw(rng)).collect()
}

/// One realization drawn from stream 0 of `seed`. This is the same draw as
/// sample 0 of an ensemble with that seed.
pub fn sample_realization(
    basis: &BasisSet,
    model: AmplitudeModel,
    subvolumes: &[Subvolume],
    seed: u64,
) -> Result<DensityRealization, StochasticError> {
    if !basis.is_complete() {
        return Err(StochasticError::Incomplete);
    }
    let mut rng = trial_rng(seed, 0);
    let a = draw_fluctuations(basis.n_modes() - 1, model, &mut rng);
    DensityRealization::from_fluctuations(basis, &a, model, subvolumes)
}

/// `site,density` rows.
pub fn density_csv(density: &[f64]) -> String {
    let mut s = String::from("site,density\n");
    for (x, d) in density.iter().enumerate() {
        let _ = writeln!(s, "{x},{d:?}");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizationMetrics {
    pub argmax: usize,
    pub ipr: f64,
    /// Largest share of the positive part of the background-subtracted
    /// density held by one site.
    pub top1_fraction: f64,
}

pub fn realization_metrics(density: &[f64], site_background: &[f64]) -> RealizationMetrics {
    let mut argmax = 0;
    for (x, &d) in density.iter().enumerate() {
        if d > density[argmax] {
            argmax = x;
        }
    }
    let total: f64 = density.iter().sum();
    let ipr = if total > 0.0 {
        density.iter().map(|d| d * d).sum::<f64>() / (total * total)
    } else {
        0.0
    };
    let positive: Vec<f64> = density
        .iter()
        .zip(site_background)
        .map(|(d, b)| (d - b).max(0.0))
        .collect();
    let mass: f64 = positive.iter().sum();
    let top1_fraction = if mass > 0.0 {
        positive.iter().copied().fold(0.0, f64::max) / mass
    } else {
        0.0
    };
    RealizationMetrics {
        argmax,
        ipr,
        top1_fraction,
    }
}

/// Metrics for a single realization; the background is that of `model`.
pub fn localization_metrics(
    basis: &BasisSet,
    realization: &DensityRealization,
    model: AmplitudeModel,
) -> RealizationMetrics {
    realization_metrics(&realization.density, &site_background(basis, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = bins.max(1);
        let mut counts = vec![0; bins];
        if values.is_empty() {
            return Self {
                lo: 0.0,
                hi: 0.0,
                counts,
            };
        }
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = if width > 0.0 {
                ((v - lo) / width) as usize
            } else {
                0
            };
            counts[b.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub histogram: Histogram,
}

impl CountStats {
    fn of(values: &[f64]) -> Self {
        let (mean, variance) = mean_var(values);
        Self {
            mean,
            variance,
            std_error: (variance / values.len() as f64).sqrt(),
            histogram: Histogram::of(values, HISTOGRAM_BINS),
        }
    }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, if n > 1.0 { ss / (n - 1.0) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteStat {
    pub site: usize,
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
    /// `|mean - expected| / std_error`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLocalization {
    pub argmax_histogram: Vec<u64>,
    /// `n_samples * |f_0(x)|^2`.
    pub argmax_expected: Vec<f64>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    /// Argmax hits on sites where `f_0` vanishes.
    pub hits_outside_support: u64,
    pub mean_ipr: f64,
    pub mean_top1_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub model: AmplitudeModel,
    pub seed: u64,
    pub n_samples: usize,
    pub n_sites: usize,
    pub n_modes: usize,
    pub subvolume: Vec<usize>,
    pub m: f64,
    pub background: f64,
    pub sites: Vec<SiteStat>,
    /// Mean of `|a_i|^2` over samples and fluctuation modes.
    pub amplitude_power: f64,
    pub amplitude_power_std_error: f64,
    pub raw: CountStats,
    pub subtracted: CountStats,
    pub subtracted_z: f64,
    pub max_density_z: f64,
    pub density_pass: bool,
    pub subtracted_pass: bool,
    pub localization: EnsembleLocalization,
}

impl EnsembleSummary {
    pub fn pass(&self) -> bool {
        self.density_pass && self.subtracted_pass
    }

    pub fn mean_density(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.mean).collect()
    }
}

#[derive(Debug, Clone)]
struct Chunk {
    density_sum: Vec<f64>,
    density_sq: Vec<f64>,
    power_per_sample: Vec<f64>,
    counts: Vec<f64>,
    metrics: Vec<RealizationMetrics>,
}

fn run_chunk(
    basis: &BasisSet,
    model: AmplitudeModel,
    v: &Subvolume,
    bg_sites: &[f64],
    seed: u64,
    range: std::ops::Range<usize>,
) -> Chunk {
    let n = basis.n_sites();
    let len = range.len();
    let mut chunk = Chunk {
        density_sum: vec![0.0; n],
        density_sq: vec![0.0; n],
        power_per_sample: Vec::with_capacity(len),
        counts: Vec::with_capacity(len),
        metrics: Vec::with_capacity(len),
    };
    let mut amplitudes = vec![Complex64::new(1.0, 0.0); basis.n_modes()];
    for j in range {
        let mut rng = trial_rng(seed, j as u64);
        for a in amplitudes.iter_mut().skip(1) {
            *a = model.draw(&mut rng);
        }
        let density = density_of(basis, &amplitudes);
        for (x, d) in density.iter().enumerate() {
            chunk.density_sum[x] += d;
            chunk.density_sq[x] += d * d;
        }
        let fluct = (amplitudes.len() - 1).max(1) as f64;
        chunk
            .power_per_sample
            .push(amplitudes.iter().skip(1).map(|a| a.norm_sqr()).sum::<f64>() / fluct);
        chunk
            .counts
            .push(v.sites().iter().map(|&x| density[x]).sum());
        chunk.metrics.push(realization_metrics(&density, bg_sites));
    }
    chunk
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff.abs() <= EXACT_TOL {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Ensemble mean laws and localization metrics over `n_samples` draws.
pub fn ensemble_statistics(
    basis: &BasisSet,
    model: AmplitudeModel,
    v: &Subvolume,
    n_samples: usize,
    seed: u64,
) -> Result<EnsembleSummary, StochasticError> {
    if !basis.is_complete() {
        return Err(StochasticError::Incomplete);
    }
    if n_samples < MIN_SAMPLES {
        return Err(StochasticError::TooFewSamples(n_samples));
    }
    let n = basis.n_sites();
    let bg_sites = site_background(basis, model);
    let chunks: Vec<Chunk> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n_samples);
            run_chunk(basis, model, v, &bg_sites, seed, range)
        })
        .collect();

    let mut density_sum = vec![0.0; n];
    let mut density_sq = vec![0.0; n];
    let mut power = Vec::with_capacity(n_samples);
    let mut counts = Vec::with_capacity(n_samples);
    let mut metrics = Vec::with_capacity(n_samples);
    for chunk in chunks {
        for x in 0..n {
            density_sum[x] += chunk.density_sum[x];
            density_sq[x] += chunk.density_sq[x];
        }
        power.extend(chunk.power_per_sample);
        counts.extend(chunk.counts);
        metrics.extend(chunk.metrics);
    }

    let ns = n_samples as f64;
    let expected = expected_density(basis, model);
    let sites: Vec<SiteStat> = (0..n)
        .map(|x| {
            let mean = density_sum[x] / ns;
            let var = ((density_sq[x] - ns * mean * mean) / (ns - 1.0)).max(0.0);
            let std_error = (var / ns).sqrt();
            let z = z_score(mean - expected[x], std_error);
            SiteStat {
                site: x,
                mean,
                std_error,
                expected: expected[x],
                z,
            }
        })
        .collect();
    let max_density_z = sites.iter().map(|s| s.z).fold(0.0, f64::max);

    let m = overlap_matrix(basis, v).m();
    let bg = background(basis, v, model);
    let raw = CountStats::of(&counts);
    let subtracted_values: Vec<f64> = counts.iter().map(|c| c - bg).collect();
    let subtracted = CountStats::of(&subtracted_values);
    let subtracted_z = z_score(subtracted.mean - m, subtracted.std_error);
    let (amplitude_power, power_var) = mean_var(&power);

    let localization = ensemble_localization(basis, &metrics);

    Ok(EnsembleSummary {
        model,
        seed,
        n_samples,
        n_sites: n,
        n_modes: basis.n_modes(),
        subvolume: v.sites().to_vec(),
        m,
        background: bg,
        sites,
        amplitude_power,
        amplitude_power_std_error: (power_var / ns).sqrt(),
        raw,
        subtracted,
        subtracted_z,
        max_density_z,
        density_pass: max_density_z <= SE_SIGMAS,
        subtracted_pass: subtracted_z <= SE_SIGMAS,
        localization,
    })
}

fn ensemble_localization(basis: &BasisSet, metrics: &[RealizationMetrics]) -> EnsembleLocalization {
    let n = basis.n_sites();
    let ns = metrics.len() as f64;
    let mut argmax_histogram = vec![0u64; n];
    for r in metrics {
        argmax_histogram[r.argmax] += 1;
    }
    let argmax_expected: Vec<f64> = basis.occupied().iter().map(|z| ns * z.norm_sqr()).collect();
    let mut chi_square = 0.0;
    let mut support = 0;
    let mut hits_outside_support = 0;
    for (o, e) in argmax_histogram.iter().zip(&argmax_expected) {
        if *e > EXACT_TOL {
            chi_square += (*o as f64 - e).powi(2) / e;
            support += 1;
        } else {
            hits_outside_support += o;
        }
    }
    EnsembleLocalization {
        argmax_histogram,
        argmax_expected,
        chi_square,
        degrees_of_freedom: support.max(1) - 1,
        hits_outside_support,
        mean_ipr: metrics.iter().map(|r| r.ipr).sum::<f64>() / ns,
        mean_top1_fraction: metrics.iter().map(|r| r.top1_fraction).sum::<f64>() / ns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IprPoint {
    pub n_modes: usize,
    pub mean_ipr: f64,
    pub mean_top1_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IprTrend {
    pub model: AmplitudeModel,
    pub seed: u64,
    pub points: Vec<IprPoint>,
    pub trend: Trend,
}

/// Gaussian packet of width `n / 16` (at least one site), centred on the lattice.
pub fn wave_packet(n: usize) -> Vec<Complex64> {
    let centre = (n as f64 - 1.0) / 2.0;
    let width = (n as f64 / 16.0).max(1.0);
    let raw: Vec<f64> = (0..n)
        .map(|x| (-((x as f64 - centre) / width).powi(2) / 2.0).exp())
        .collect();
    let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
    raw.into_iter()
        .map(|r| Complex64::new(r / norm, 0.0))
        .collect()
}

/// Mean IPR of realizations for a wave packet on lattices of each size
/// (`n_modes = n_sites`, complete basis).
pub fn ipr_trend(
    model: AmplitudeModel,
    sizes: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<IprTrend, StochasticError> {
    let points = sizes
        .iter()
        .map(|&n| {
            let lattice = Lattice::new(n)?;
            let basis = BasisSet::build(lattice, &wave_packet(n))?;
            let s = ensemble_statistics(&basis, model, &Subvolume::all(lattice), n_samples, seed)?;
            Ok(IprPoint {
                n_modes: n,
                mean_ipr: s.localization.mean_ipr,
                mean_top1_fraction: s.localization.mean_top1_fraction,
            })
        })
        .collect::<Result<Vec<_>, StochasticError>>()?;
    let steps: Vec<f64> = points
        .windows(2)
        .map(|w| w[1].mean_ipr - w[0].mean_ipr)
        .collect();
    let trend = if steps.iter().all(|d| *d > 0.0) {
        Trend::Increasing
    } else if steps.iter().all(|d| *d < 0.0) {
        Trend::Decreasing
    } else {
        Trend::Mixed
    };
    Ok(IprTrend {
        model,
        seed,
        points,
        trend,
    })
}
