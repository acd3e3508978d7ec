//! Moment suites: random instances, symbolic moments evaluated at the
//! instance's `m`, and the same moments from the Fock-space oracle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{moment_expression, AlgebraError, MPolynomial, Statistics};
use crate::model::{
    overlap_matrix, BasisSet, Lattice, ModelError, OverlapMatrix, Subvolume, SubvolumeSpec,
};
use crate::oracle::{number_operator, vacuum_moments, FockSpace, OracleError};

/// Allowed gap between an oracle moment and `m` for the two-point law.
pub const BERNOULLI_TOL: f64 = 1e-9;

/// Symbolic and oracle values must agree to this.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MomentsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Random generator for trial `trial` of a run with master seed `seed`:
/// ChaCha8 keyed by the master seed, one stream per trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n_sites: usize,
    pub n_modes: usize,
    pub subvolume: Vec<usize>,
    pub m: f64,
    pub seed: u64,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub k: usize,
    pub symbolic: f64,
    pub oracle: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub instance: Instance,
    pub stats: Statistics,
    pub complete_basis: bool,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max)
    }

    pub fn oracle_moments(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.oracle).collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliCheck {
    pub pass: bool,
    pub max_deviation: f64,
}

/// A distribution supported on {0, 1} with mean `m` has every moment equal
/// to `m`; check the oracle moments against that.
pub fn bernoulli_check(report: &MomentReport) -> BernoulliCheck {
    let m = report.instance.m;
    let max_deviation = report
        .rows
        .iter()
        .map(|r| (r.oracle - m).abs())
        .fold(0.0, f64::max);
    BernoulliCheck {
        pass: max_deviation < BERNOULLI_TOL,
        max_deviation,
    }
}

/// Boson cutoff used for moments up to `k_max`.
pub fn moment_cutoff(k_max: usize) -> usize {
    k_max.max(1)
}

/// Oracle moments `<0|N_v^k|0>`, `k = 1..=k_max`.
pub fn oracle_moments(
    overlap: &OverlapMatrix,
    stats: Statistics,
    k_max: usize,
    cutoff: usize,
) -> Result<Vec<f64>, MomentsError> {
    let fock = FockSpace::build(stats, overlap.dim(), cutoff)?;
    let n_v = number_operator(&fock, overlap)?;
    Ok(vacuum_moments(&fock, &n_v, k_max))
}

/// Symbolic polynomials for `k = 1..=k_max`.
pub fn symbolic_moments(stats: Statistics, k_max: usize) -> Result<Vec<MPolynomial>, MomentsError> {
    (1..=k_max)
        .map(|k| moment_expression(k, stats).map_err(Into::into))
        .collect()
}

/// Report for one explicit instance.
pub fn instance_report(
    basis: &BasisSet,
    v: &Subvolume,
    stats: Statistics,
    polys: &[MPolynomial],
    seed: u64,
    trial: usize,
) -> Result<MomentReport, MomentsError> {
    let overlap = overlap_matrix(basis, v);
    let instance = Instance {
        n_sites: basis.n_sites(),
        n_modes: basis.n_modes(),
        subvolume: v.sites().to_vec(),
        m: overlap.m(),
        seed,
        trial,
    };
    overlap_report(&overlap, instance, basis.is_complete(), stats, polys)
}

/// Report for any overlap-like matrix (a subvolume overlap or a filtered
/// projector); `instance.m` is overwritten with `V_00`.
pub fn overlap_report(
    overlap: &OverlapMatrix,
    mut instance: Instance,
    complete_basis: bool,
    stats: Statistics,
    polys: &[MPolynomial],
) -> Result<MomentReport, MomentsError> {
    let k_max = polys.len();
    let oracle = oracle_moments(overlap, stats, k_max, moment_cutoff(k_max))?;
    let m = overlap.m();
    instance.m = m;
    let rows = polys
        .iter()
        .zip(oracle)
        .enumerate()
        .map(|(n, (poly, oracle))| {
            let symbolic = poly.eval(m);
            MomentRow {
                k: n + 1,
                symbolic,
                oracle,
                abs_diff: (symbolic - oracle).abs(),
            }
        })
        .collect();
    Ok(MomentReport {
        instance,
        stats,
        complete_basis,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub stats: Statistics,
    pub n_sites: usize,
    pub k_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub subvolume: SubvolumeSpec,
    /// Delete this unoccupied basis row before computing (closure test).
    pub drop_row: Option<usize>,
}

impl SuiteConfig {
    pub fn new(stats: Statistics, n_sites: usize, k_max: usize, trials: usize, seed: u64) -> Self {
        Self {
            stats,
            n_sites,
            k_max,
            trials,
            seed,
            subvolume: SubvolumeSpec::Random,
            drop_row: None,
        }
    }
}

/// Random basis and subvolume for one trial.
pub fn trial_instance(
    lattice: Lattice,
    spec: &SubvolumeSpec,
    drop_row: Option<usize>,
    seed: u64,
    trial: usize,
) -> Result<(BasisSet, Subvolume), MomentsError> {
    let mut rng = trial_rng(seed, trial as u64);
    let basis = BasisSet::random(lattice, &mut rng);
    let v = spec.resolve(lattice, &mut rng)?;
    let basis = match drop_row {
        Some(row) => basis.without_row(row)?,
        None => basis,
    };
    Ok((basis, v))
}

/// One report per trial, ordered by trial index. Trials run in parallel and
/// each draws from its own stream of the master seed, so the output does
/// not depend on scheduling.
pub fn run_moment_suite(config: &SuiteConfig) -> Result<Vec<MomentReport>, MomentsError> {
    if config.k_max == 0 || config.trials == 0 {
        return Err(MomentsError::Config(
            "k_max and trials must be positive".into(),
        ));
    }
    let lattice = Lattice::new(config.n_sites)?;
    let modes = config.n_sites - usize::from(config.drop_row.is_some());
    // fail fast on the Fock budget before spawning trials
    FockSpace::build(config.stats, modes, moment_cutoff(config.k_max))?;
    let polys = symbolic_moments(config.stats, config.k_max)?;
    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let (basis, v) = trial_instance(
                lattice,
                &config.subvolume,
                config.drop_row,
                config.seed,
                trial,
            )?;
            instance_report(&basis, &v, config.stats, &polys, config.seed, trial)
        })
        .collect()
}

/// `x` with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.*e}", digits - 1)
    }
}

/// Human-readable table, one row per (trial, k).
pub fn format_table(reports: &[MomentReport]) -> String {
    let mut rows: Vec<[String; 7]> = vec![[
        "trial".into(),
        "m".into(),
        "k".into(),
        "symbolic".into(),
        "oracle".into(),
        "|diff|".into(),
        "bernoulli".into(),
    ]];
    for r in reports {
        let check = bernoulli_check(r);
        for row in &r.rows {
            rows.push([
                r.instance.trial.to_string(),
                fmt_sig(r.instance.m, 6),
                row.k.to_string(),
                fmt_sig(row.symbolic, 6),
                fmt_sig(row.oracle, 6),
                fmt_sig(row.abs_diff, 6),
                if check.pass {
                    "pass".into()
                } else {
                    "fail".into()
                },
            ]);
        }
    }
    align(&rows)
}

pub(crate) fn align<const N: usize>(rows: &[[String; N]]) -> String {
    let mut widths = [0usize; N];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// Symbolic and oracle moment sequences of one flavor on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlavorSequence {
    pub stats: Statistics,
    pub polynomials: BTreeMap<usize, String>,
    pub report: MomentReport,
}

/// Symbolic polynomials of one flavor together with a cross-checked oracle
/// report on a random instance.
pub fn flavor_sequence(
    stats: Statistics,
    n_sites: usize,
    k_max: usize,
    seed: u64,
) -> Result<FlavorSequence, MomentsError> {
    let polys = symbolic_moments(stats, k_max)?;
    let lattice = Lattice::new(n_sites)?;
    let (basis, v) = trial_instance(lattice, &SubvolumeSpec::Random, None, seed, 0)?;
    let report = instance_report(&basis, &v, stats, &polys, seed, 0)?;
    let polynomials = polys
        .iter()
        .enumerate()
        .map(|(n, p)| (n + 1, p.to_string()))
        .collect();
    Ok(FlavorSequence {
        stats,
        polynomials,
        report,
    })
}
