//! Measurement as filtering: the field is projected onto one eigenfunction
//! `g_n` of an observable, `psi_n = b_0† f_0n + sum_{i != 0} b_i f_in` with
//! `f_in = <g_n, f_i>`, and the detected amount of matter is `psi_n† psi_n`.
//!
//! `psi_n† psi_n` has the same shape as the subvolume count with the overlap
//! replaced by the rank-one projector `V'_pq = conj(f_pn) f_qn`, so the
//! oracle and the symbolic moments apply unchanged.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Statistics;
use crate::model::{
    completeness_residual, orthonormality_residual, random_unitary, BasisSet, Lattice, ModelError,
    OverlapMatrix, BASIS_TOL,
};
use crate::moments::{overlap_report, symbolic_moments, Instance, MomentReport, MomentsError};

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("basis has {basis} sites, observable has {observable}")]
    LatticeMismatch { basis: usize, observable: usize },
    #[error("eigenfunctions are not a complete orthonormal set (residual {0:.3e})")]
    NotComplete(f64),
    #[error("expected {expected} eigenvalues, got {got}")]
    EigenvalueCount { expected: usize, got: usize },
    #[error("eigenvalue {0} is repeated")]
    Degenerate(f64),
    #[error("outcome {outcome} out of range for {n} outcomes")]
    OutcomeOutOfRange { outcome: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

/// Nondegenerate observable: a complete orthonormal eigenbasis (rows) and
/// its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    lattice: Lattice,
    eigenbasis: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
}

impl Observable {
    pub fn new(
        lattice: Lattice,
        eigenbasis: DMatrix<Complex64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self, MeasurementError> {
        let n = lattice.n_sites();
        if eigenbasis.nrows() != n || eigenbasis.ncols() != n {
            return Err(MeasurementError::LatticeMismatch {
                basis: n,
                observable: eigenbasis.ncols(),
            });
        }
        let residual = orthonormality_residual(&eigenbasis).max(completeness_residual(&eigenbasis));
        if residual > BASIS_TOL {
            return Err(MeasurementError::NotComplete(residual));
        }
        if eigenvalues.len() != n {
            return Err(MeasurementError::EigenvalueCount {
                expected: n,
                got: eigenvalues.len(),
            });
        }
        let mut sorted = eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(MeasurementError::Degenerate(w[0]));
        }
        Ok(Self {
            lattice,
            eigenbasis,
            eigenvalues,
        })
    }

    /// Position: eigenfunctions are the site indicators, eigenvalue = site.
    pub fn position(lattice: Lattice) -> Self {
        let n = lattice.n_sites();
        Self {
            lattice,
            eigenbasis: DMatrix::identity(n, n),
            eigenvalues: (0..n).map(|x| x as f64).collect(),
        }
    }

    /// An observable diagonal in the given complete basis, eigenvalue `p`
    /// for row `p`.
    pub fn diagonal_in(basis: &BasisSet) -> Result<Self, MeasurementError> {
        let eigenvalues = (0..basis.n_modes()).map(|p| p as f64).collect();
        Self::new(basis.lattice(), basis.modes().clone(), eigenvalues)
    }

    /// Random eigenbasis (Haar-like unitary) with eigenvalues `0..n`.
    pub fn random<R: Rng + ?Sized>(lattice: Lattice, rng: &mut R) -> Self {
        let n = lattice.n_sites();
        let mut eigenbasis = random_unitary(n, rng).transpose();
        // one Gram-Schmidt sweep removes QR rounding beyond the tolerance
        crate::model::gram_schmidt_rows(&mut eigenbasis).expect("unitary rows are independent");
        Self {
            lattice,
            eigenbasis,
            eigenvalues: (0..n).map(|k| k as f64).collect(),
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn eigenbasis(&self) -> &DMatrix<Complex64> {
        &self.eigenbasis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// `f_in = <g_n, f_i>` for every basis mode `i` (rows) and outcome `n`
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub f_in: DMatrix<Complex64>,
    pub eigenvalues: Vec<f64>,
    n_sites: usize,
    complete_basis: bool,
}

impl FilterCoefficients {
    pub fn n_modes(&self) -> usize {
        self.f_in.nrows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.f_in.ncols()
    }

    pub fn column_norm(&self, n: usize) -> f64 {
        self.f_in.column(n).iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max_n |sum_i |f_in|^2 - 1|`.
    pub fn column_norm_residual(&self) -> f64 {
        (0..self.n_outcomes())
            .map(|n| (self.column_norm(n) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn filter_coefficients(
    basis: &BasisSet,
    obs: &Observable,
) -> Result<FilterCoefficients, MeasurementError> {
    if basis.n_sites() != obs.lattice().n_sites() {
        return Err(MeasurementError::LatticeMismatch {
            basis: basis.n_sites(),
            observable: obs.lattice().n_sites(),
        });
    }
    // f_in = sum_x conj(g_n(x)) f_i(x)
    let f_in = basis.modes() * obs.eigenbasis().adjoint();
    Ok(FilterCoefficients {
        f_in,
        eigenvalues: obs.eigenvalues().to_vec(),
        n_sites: basis.n_sites(),
        complete_basis: basis.is_complete(),
    })
}

/// `V'_pq = sum_{n in outcomes} conj(f_pn) f_qn`. For the position
/// observable this is exactly the subvolume overlap of the outcome set.
pub fn filtered_overlap(
    fc: &FilterCoefficients,
    outcomes: &[usize],
) -> Result<OverlapMatrix, MeasurementError> {
    let dim = fc.n_modes();
    for &n in outcomes {
        if n >= fc.n_outcomes() {
            return Err(MeasurementError::OutcomeOutOfRange {
                outcome: n,
                n: fc.n_outcomes(),
            });
        }
    }
    let entries = DMatrix::from_fn(dim, dim, |p, q| {
        outcomes
            .iter()
            .map(|&n| fc.f_in[(p, n)].conj() * fc.f_in[(q, n)])
            .sum()
    });
    Ok(OverlapMatrix::from_entries(entries)?)
}

/// Moments of `psi_n† psi_n` from the oracle, next to the symbolic
/// polynomials evaluated at `|f_0n|^2`.
pub fn filtered_moments(
    fc: &FilterCoefficients,
    n: usize,
    k_max: usize,
    stats: Statistics,
) -> Result<MomentReport, MeasurementError> {
    let overlap = filtered_overlap(fc, &[n])?;
    let polys = symbolic_moments(stats, k_max)?;
    let instance = Instance {
        n_sites: fc.n_sites,
        n_modes: fc.n_modes(),
        subvolume: vec![n],
        m: 0.0,
        seed: 0,
        trial: n,
    };
    Ok(overlap_report(
        &overlap,
        instance,
        fc.complete_basis,
        stats,
        &polys,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub n: usize,
    pub eigenvalue: f64,
    pub probability: f64,
}

/// `p_n = |f_0n|^2` for every outcome.
pub fn outcome_distribution(fc: &FilterCoefficients) -> Vec<Outcome> {
    (0..fc.n_outcomes())
        .map(|n| Outcome {
            n,
            eigenvalue: fc.eigenvalues[n],
            probability: fc.f_in[(0, n)].norm_sqr(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub outcome: Outcome,
    pub moments: Vec<f64>,
}

/// Outcome distribution with the oracle's filtered moments per outcome.
pub fn outcome_table(
    fc: &FilterCoefficients,
    k_max: usize,
    stats: Statistics,
) -> Result<Vec<OutcomeRow>, MeasurementError> {
    outcome_distribution(fc)
        .into_iter()
        .map(|outcome| {
            let report = filtered_moments(fc, outcome.n, k_max, stats)?;
            Ok(OutcomeRow {
                outcome,
                moments: report.oracle_moments(),
            })
        })
        .collect()
}

/// CSV with columns `n,eigenvalue,probability,moment_1..moment_k`.
pub fn outcome_table_csv(rows: &[OutcomeRow]) -> String {
    let k_max = rows.first().map_or(0, |r| r.moments.len());
    let mut s = String::from("n,eigenvalue,probability");
    for k in 1..=k_max {
        let _ = write!(s, ",moment_{k}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{:?},{:?}",
            r.outcome.n, r.outcome.eigenvalue, r.outcome.probability
        );
        for m in &r.moments {
            let _ = write!(s, ",{m:?}");
        }
        s.push('\n');
    }
    s
}
