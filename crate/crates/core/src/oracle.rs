//! Brute-force matrix representation of the mode algebra on a finite Fock
//! space.
//!
//! Occupation-number states are indexed lexicographically with mode 0 most
//! significant, so index 0 is the vacuum. Every ladder operator maps a basis
//! state to at most one basis state, which makes operator products cheap
//! ([`MonomialOp`]). Fermion signs follow the usual Jordan-Wigner string
//! `(-1)^{sum_{q<p} n_q}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{OpKind, Statistics};
use crate::model::OverlapMatrix;

pub const MAX_FERMION_MODES: usize = 14;
pub const MAX_BOSON_DIM: usize = 20_000;

/// Eigenvalues closer than this are one atom.
pub const MERGE_TOL: f64 = 1e-9;
/// Atoms lighter than this are roundoff and are dropped. Truncated coherent
/// spectra carry genuine atoms far below 1e-12, so this sits at the noise floor.
pub const WEIGHT_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("Fock space too large: {0}")]
    Budget(String),
    #[error("overlap matrix is {got}x{got}, Fock space has {expected} modes")]
    Dimension { expected: usize, got: usize },
    #[error("overlap matrix is not Hermitian (residual {0:.3e})")]
    NonHermitian(f64),
    #[error("mode {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
}

/// Operator with at most one nonzero entry per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialOp {
    columns: Vec<Option<(usize, f64)>>,
}

impl MonomialOp {
    pub fn identity(dim: usize) -> Self {
        Self {
            columns: (0..dim).map(|j| Some((j, 1.0))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Image of basis state `j`.
    pub fn column(&self, j: usize) -> Option<(usize, f64)> {
        self.columns[j]
    }

    /// `self * other` (apply `other` first).
    pub fn compose(&self, other: &MonomialOp) -> MonomialOp {
        let columns = other
            .columns
            .iter()
            .map(|entry| {
                let (mid, a) = (*entry)?;
                let (row, b) = self.columns[mid]?;
                Some((row, a * b))
            })
            .collect();
        MonomialOp { columns }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (j, entry) in self.columns.iter().enumerate() {
            if let Some((row, val)) = entry {
                out[*row] += v[j] * *val;
            }
        }
        out
    }

    fn to_map(&self) -> Vec<BTreeMap<usize, f64>> {
        self.columns
            .iter()
            .map(|e| e.iter().map(|&(r, v)| (r, v)).collect())
            .collect()
    }
}

/// Max entry of `a*b + sign*b*a - delta*I` over the given input columns.
fn relation_residual(
    a: &MonomialOp,
    b: &MonomialOp,
    sign: f64,
    delta: f64,
    columns: &[usize],
) -> f64 {
    let ab = a.compose(b).to_map();
    let ba = b.compose(a).to_map();
    let mut worst: f64 = 0.0;
    for &j in columns {
        let mut col: BTreeMap<usize, f64> = ab[j].clone();
        for (&r, &v) in &ba[j] {
            *col.entry(r).or_insert(0.0) += sign * v;
        }
        *col.entry(j).or_insert(0.0) -= delta;
        worst = col.values().fold(worst, |w, v| w.max(v.abs()));
    }
    worst
}

#[derive(Debug, Clone)]
pub struct FockSpace {
    stats: Statistics,
    n_modes: usize,
    cutoff: usize,
    /// Modes with an actual tensor factor (all of them, except mode 0 in
    /// the coherent flavor).
    first_physical: usize,
    radix: usize,
    dim: usize,
    annihilators: Vec<MonomialOp>,
    creators: Vec<MonomialOp>,
}

impl FockSpace {
    /// `cutoff` is the maximum occupation per boson mode and is ignored for
    /// fermions.
    pub fn build(stats: Statistics, n_modes: usize, cutoff: usize) -> Result<Self, OracleError> {
        if n_modes == 0 {
            return Err(OracleError::Budget("no modes".into()));
        }
        let (first_physical, radix) = match stats {
            Statistics::Fermion => {
                if n_modes > MAX_FERMION_MODES {
                    return Err(OracleError::Budget(format!(
                        "{n_modes} fermion modes exceeds {MAX_FERMION_MODES}"
                    )));
                }
                (0, 2)
            }
            Statistics::Boson => (0, cutoff + 1),
            Statistics::Coherent => (1, cutoff + 1),
        };
        if stats != Statistics::Fermion && cutoff == 0 {
            return Err(OracleError::Budget(
                "boson cutoff must be at least 1".into(),
            ));
        }
        let physical = n_modes - first_physical;
        let dim = (0..physical).try_fold(1usize, |d, _| d.checked_mul(radix));
        let dim = match dim {
            Some(d) if stats == Statistics::Fermion || d <= MAX_BOSON_DIM => d,
            _ => {
                return Err(OracleError::Budget(format!(
                    "{radix}^{physical} states exceeds {MAX_BOSON_DIM}"
                )))
            }
        };
        let mut space = Self {
            stats,
            n_modes,
            cutoff,
            first_physical,
            radix,
            dim,
            annihilators: Vec::with_capacity(n_modes),
            creators: Vec::with_capacity(n_modes),
        };
        for p in 0..n_modes {
            let (a, c) = space.ladder_pair(p);
            space.annihilators.push(a);
            space.creators.push(c);
        }
        Ok(space)
    }

    pub fn stats(&self) -> Statistics {
        self.stats
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Occupation of every mode in basis state `index` (mode 0 first;
    /// a scalar mode reports 0).
    pub fn occupations(&self, index: usize) -> Vec<usize> {
        let physical = self.n_modes - self.first_physical;
        let mut occ = vec![0; self.n_modes];
        let mut rest = index;
        for slot in (0..physical).rev() {
            occ[self.first_physical + slot] = rest % self.radix;
            rest /= self.radix;
        }
        occ
    }

    fn stride(&self, mode: usize) -> usize {
        let physical = self.n_modes - self.first_physical;
        let slot = mode - self.first_physical;
        self.radix.pow((physical - 1 - slot) as u32)
    }

    fn ladder_pair(&self, mode: usize) -> (MonomialOp, MonomialOp) {
        if mode < self.first_physical {
            return (
                MonomialOp::identity(self.dim),
                MonomialOp::identity(self.dim),
            );
        }
        let stride = self.stride(mode);
        let mut down = vec![None; self.dim];
        let mut up = vec![None; self.dim];
        for (j, (down_j, up_j)) in down.iter_mut().zip(up.iter_mut()).enumerate() {
            let occ = self.occupations(j);
            let n = occ[mode];
            match self.stats {
                Statistics::Fermion => {
                    let parity: usize = occ[..mode].iter().sum();
                    let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
                    if n == 1 {
                        *down_j = Some((j - stride, sign));
                    } else {
                        *up_j = Some((j + stride, sign));
                    }
                }
                Statistics::Boson | Statistics::Coherent => {
                    if n > 0 {
                        *down_j = Some((j - stride, (n as f64).sqrt()));
                    }
                    if n < self.cutoff {
                        *up_j = Some((j + stride, ((n + 1) as f64).sqrt()));
                    }
                }
            }
        }
        (MonomialOp { columns: down }, MonomialOp { columns: up })
    }

    pub fn annihilator(&self, mode: usize) -> &MonomialOp {
        &self.annihilators[mode]
    }

    pub fn creator(&self, mode: usize) -> &MonomialOp {
        &self.creators[mode]
    }

    pub fn ladder(&self, kind: OpKind, mode: usize) -> &MonomialOp {
        match kind {
            OpKind::Create => self.creator(mode),
            OpKind::Annihilate => self.annihilator(mode),
        }
    }

    pub fn vacuum(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Largest violation of the (anti)commutation relations among the
    /// physical modes. Boson relations are checked only on input states
    /// strictly below the cutoff in every mode.
    pub fn algebra_residual(&self) -> f64 {
        let sign = match self.stats {
            Statistics::Fermion => 1.0,
            _ => -1.0,
        };
        let columns: Vec<usize> = (0..self.dim)
            .filter(|&j| {
                self.stats == Statistics::Fermion
                    || self.occupations(j).iter().all(|&n| n < self.cutoff)
            })
            .collect();
        let mut worst: f64 = 0.0;
        for p in self.first_physical..self.n_modes {
            for q in self.first_physical..self.n_modes {
                let delta = if p == q { 1.0 } else { 0.0 };
                worst = worst.max(relation_residual(
                    &self.annihilators[p],
                    &self.creators[q],
                    sign,
                    delta,
                    &columns,
                ));
                worst = worst.max(relation_residual(
                    &self.annihilators[p],
                    &self.annihilators[q],
                    sign,
                    0.0,
                    &columns,
                ));
            }
        }
        worst
    }

    /// `<0| O_1 O_2 ... O_L |0>` for a string of ladder operators on
    /// concrete modes.
    pub fn string_vev(&self, ops: &[(OpKind, usize)]) -> Result<f64, OracleError> {
        let mut v = self.vacuum();
        for &(kind, mode) in ops.iter().rev() {
            if mode >= self.n_modes {
                return Err(OracleError::ModeOutOfRange {
                    mode,
                    n_modes: self.n_modes,
                });
            }
            v = self.ladder(kind, mode).apply(&v);
        }
        Ok(v[0].re)
    }
}

/// Boson cutoff at which truncation cannot affect `<0| string |0>` for a
/// string of `len` ladder operators.
pub fn safe_cutoff(len: usize) -> usize {
    (len / 2).max(1)
}

/// Row-major sparse complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.rows[r]
            .iter()
            .find(|&&(col, _)| col == c)
            .map(|&(_, v)| v)
            .unwrap_or_default()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                d[(r, c)] += v;
            }
        }
        d
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst
    }
}

fn hermitian_residual(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Tolerance for accepting an overlap matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// `N_v = sum_pq V_pq O_p† O_q` with `O_0 = b_0†` and `O_q = b_q` otherwise:
/// the occupied mode enters the field through its creation operator.
pub fn number_operator(fock: &FockSpace, v: &OverlapMatrix) -> Result<SparseMatrix, OracleError> {
    let entries = v.entries();
    if entries.nrows() != fock.n_modes() {
        return Err(OracleError::Dimension {
            expected: fock.n_modes(),
            got: entries.nrows(),
        });
    }
    let residual = hermitian_residual(entries);
    if residual > HERMITIAN_TOL {
        return Err(OracleError::NonHermitian(residual));
    }
    // O_q is b_0† for q = 0 and b_q otherwise
    let field = |q: usize| {
        if q == 0 {
            fock.creator(0)
        } else {
            fock.annihilator(q)
        }
    };
    let mut acc: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); fock.dim()];
    for p in 0..fock.n_modes() {
        // O_p† is b_0 for p = 0 and b_p† otherwise
        let adj = if p == 0 {
            fock.annihilator(0)
        } else {
            fock.creator(p)
        };
        for q in 0..fock.n_modes() {
            let vpq = entries[(p, q)];
            if vpq == Complex64::new(0.0, 0.0) {
                continue;
            }
            let product = adj.compose(field(q));
            for j in 0..fock.dim() {
                if let Some((r, val)) = product.column(j) {
                    *acc[r].entry(j).or_default() += vpq * val;
                }
            }
        }
    }
    let rows = acc
        .into_iter()
        .map(|row| row.into_iter().filter(|(_, v)| v.norm() > 0.0).collect())
        .collect();
    Ok(SparseMatrix {
        dim: fock.dim(),
        rows,
    })
}

/// `<0| N^k |0>` by repeated application to the vacuum.
pub fn vacuum_moment(fock: &FockSpace, n_v: &SparseMatrix, k: usize) -> f64 {
    vacuum_moments(fock, n_v, k).last().copied().unwrap_or(1.0)
}

/// `<0| N^j |0>` for `j = 1..=k_max`.
pub fn vacuum_moments(fock: &FockSpace, n_v: &SparseMatrix, k_max: usize) -> Vec<f64> {
    let mut v = fock.vacuum();
    let mut out = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        v = n_v.matvec(&v);
        out.push(v[0].re);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub eigenvalue: f64,
    pub weight: f64,
}

/// Distribution of an observable in the vacuum: eigenvalues with the
/// squared norm of the vacuum's projection onto each eigenspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDistribution {
    pub atoms: Vec<Atom>,
}

impl SpectralDistribution {
    /// Sort, merge near-duplicate eigenvalues and drop negligible weights.
    fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom> = Vec::new();
        for (eigenvalue, weight) in pairs {
            match atoms.last_mut() {
                Some(last) if (eigenvalue - last.eigenvalue).abs() < MERGE_TOL => {
                    let total = last.weight + weight;
                    if total > 0.0 {
                        last.eigenvalue =
                            (last.eigenvalue * last.weight + eigenvalue * weight) / total;
                    }
                    last.weight = total;
                }
                _ => atoms.push(Atom { eigenvalue, weight }),
            }
        }
        atoms.retain(|a| a.weight > WEIGHT_FLOOR);
        Self { atoms }
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.eigenvalue.powi(k as i32) * a.weight)
            .sum()
    }

    /// Distance from the two-point law `{(0, 1-m), (1, m)}`: the worst of
    /// any atom's distance to {0, 1} and the weight mismatch at 0 and at 1.
    pub fn bernoulli_deviation(&self, m: f64) -> f64 {
        let near = |x: f64| -> f64 {
            self.atoms
                .iter()
                .filter(|a| (a.eigenvalue - x).abs() < 1e-6)
                .map(|a| a.weight)
                .sum()
        };
        let off_support = self
            .atoms
            .iter()
            .map(|a| a.eigenvalue.abs().min((a.eigenvalue - 1.0).abs()))
            .fold(0.0, f64::max);
        off_support
            .max((near(0.0) - (1.0 - m)).abs())
            .max((near(1.0) - m).abs())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eigenvalue,weight\n");
        for a in &self.atoms {
            let _ = writeln!(s, "{:?},{:?}", a.eigenvalue, a.weight);
        }
        s
    }
}

/// Vacuum spectral measure of a Hermitian `N` from Lanczos iteration with
/// full reorthogonalization, started at the vacuum. The Krylov space of the
/// vacuum contains exactly the eigenspaces the vacuum overlaps, so the
/// tridiagonal eigenpairs give the atoms and the squared first components
/// their weights.
pub fn spectral_distribution(fock: &FockSpace, n_v: &SparseMatrix) -> SpectralDistribution {
    let dim = n_v.dim();
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let mut basis: Vec<Vec<Complex64>> = vec![fock.vacuum()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale: f64 = 1.0;
    loop {
        let q = basis.last().expect("nonempty");
        let mut w = n_v.matvec(q);
        let alpha = dot(q, &w).re;
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        for _pass in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if beta < 1e-12 * scale || basis.len() == dim {
            break;
        }
        scale = scale.max(beta);
        betas.push(beta);
        for wi in &mut w {
            *wi /= beta;
        }
        basis.push(w);
    }
    let n = alphas.len();
    let t = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let pairs = (0..n)
        .map(|c| (eig.eigenvalues[c], eig.eigenvectors[(0, c)].powi(2)))
        .collect();
    SpectralDistribution::from_pairs(pairs)
}

/// Same measure from a full dense Hermitian eigendecomposition. Only for
/// small spaces; used to cross-check [`spectral_distribution`].
pub fn spectral_distribution_dense(n_v: &SparseMatrix) -> SpectralDistribution {
    let eig = SymmetricEigen::new(n_v.to_dense());
    let pairs = (0..n_v.dim())
        .map(|c| (eig.eigenvalues[c], eig.eigenvectors[(0, c)].norm_sqr()))
        .collect();
    SpectralDistribution::from_pairs(pairs)
}

/// Moment table as CSV with columns `k,moment`.
pub fn moments_csv(moments: &[f64]) -> String {
    let mut s = String::from("k,moment\n");
    for (k, m) in moments.iter().enumerate() {
        let _ = writeln!(s, "{},{:?}", k + 1, m);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{overlap_matrix, BasisSet, Lattice, Subvolume};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_fermion_mode() {
        let f = FockSpace::build(Statistics::Fermion, 1, 0).unwrap();
        assert_eq!(f.dim(), 2);
        assert_eq!(f.annihilator(0).column(0), None);
        assert_eq!(f.annihilator(0).column(1), Some((0, 1.0)));
        assert_eq!(f.creator(0).column(0), Some((1, 1.0)));
    }

    #[test]
    fn fermion_relations_exact() {
        let f = FockSpace::build(Statistics::Fermion, 3, 0).unwrap();
        assert_eq!(f.dim(), 8);
        assert_eq!(f.algebra_residual(), 0.0);
    }

    #[test]
    fn boson_relations_below_cutoff() {
        let f = FockSpace::build(Statistics::Boson, 2, 3).unwrap();
        assert_eq!(f.dim(), 16);
        assert!(f.algebra_residual() < 1e-12);
        let c = FockSpace::build(Statistics::Coherent, 3, 2).unwrap();
        assert_eq!(c.dim(), 9);
        assert!(c.algebra_residual() < 1e-12);
    }

    #[test]
    fn budgets() {
        assert!(FockSpace::build(Statistics::Fermion, 15, 0).is_err());
        assert!(FockSpace::build(Statistics::Boson, 8, 3).is_err());
        assert!(FockSpace::build(Statistics::Boson, 7, 3).is_ok());
    }

    #[test]
    fn occupations_are_lexicographic() {
        let f = FockSpace::build(Statistics::Fermion, 3, 0).unwrap();
        assert_eq!(f.occupations(0), vec![0, 0, 0]);
        assert_eq!(f.occupations(1), vec![0, 0, 1]);
        assert_eq!(f.occupations(4), vec![1, 0, 0]);
    }

    fn instance(n: usize, seed: u64) -> (BasisSet, Subvolume) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = Lattice::new(n).unwrap();
        (
            BasisSet::random(lat, &mut rng),
            Subvolume::random(lat, &mut rng),
        )
    }

    #[test]
    fn number_operator_edge_cases() {
        let (basis, _) = instance(4, 1);
        let f = FockSpace::build(Statistics::Fermion, 4, 0).unwrap();
        let empty = number_operator(&f, &overlap_matrix(&basis, &Subvolume::empty())).unwrap();
        assert_eq!(empty.nnz(), 0);
        let all = Subvolume::all(basis.lattice());
        let full = number_operator(&f, &overlap_matrix(&basis, &all)).unwrap();
        assert!((vacuum_moment(&f, &full, 1) - 1.0).abs() < 1e-14);
        assert!(full.hermiticity_residual() < 1e-14);
    }

    #[test]
    fn first_moment_is_m() {
        let (basis, v) = instance(6, 2);
        let ov = overlap_matrix(&basis, &v);
        let f = FockSpace::build(Statistics::Fermion, 6, 0).unwrap();
        let n = number_operator(&f, &ov).unwrap();
        assert!((vacuum_moment(&f, &n, 1) - ov.m()).abs() < 1e-12);
        assert!((vacuum_moment(&f, &n, 2) - ov.m()).abs() < 1e-12);
        assert!((vacuum_moment(&f, &n, 3) - ov.m()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_overlaps() {
        let f = FockSpace::build(Statistics::Fermion, 3, 0).unwrap();
        let mut e = DMatrix::<Complex64>::zeros(3, 3);
        e[(0, 1)] = Complex64::new(1.0, 0.0);
        let bad = OverlapMatrix::from_entries(e).unwrap();
        assert!(matches!(
            number_operator(&f, &bad),
            Err(OracleError::NonHermitian(_))
        ));
        let small = OverlapMatrix::from_entries(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            number_operator(&f, &small),
            Err(OracleError::Dimension { .. })
        ));
    }

    #[test]
    fn two_point_spectrum() {
        let (basis, v) = instance(7, 3);
        let ov = overlap_matrix(&basis, &v);
        let f = FockSpace::build(Statistics::Fermion, 7, 0).unwrap();
        let n = number_operator(&f, &ov).unwrap();
        let s = spectral_distribution(&f, &n);
        assert_eq!(s.atoms.len(), 2);
        assert!(s.atoms[0].eigenvalue.abs() < 1e-9);
        assert!((s.atoms[0].weight - (1.0 - ov.m())).abs() < 1e-9);
        assert!((s.atoms[1].eigenvalue - 1.0).abs() < 1e-9);
        assert!((s.atoms[1].weight - ov.m()).abs() < 1e-9);
        let dense = spectral_distribution_dense(&n);
        assert_eq!(dense.atoms.len(), 2);
        for (a, b) in s.atoms.iter().zip(&dense.atoms) {
            assert!((a.eigenvalue - b.eigenvalue).abs() < 1e-9);
            assert!((a.weight - b.weight).abs() < 1e-9);
        }
    }

    #[test]
    fn full_volume_single_atom() {
        let (basis, _) = instance(5, 4);
        let f = FockSpace::build(Statistics::Fermion, 5, 0).unwrap();
        let all = Subvolume::all(basis.lattice());
        let n = number_operator(&f, &overlap_matrix(&basis, &all)).unwrap();
        let s = spectral_distribution(&f, &n);
        assert_eq!(s.atoms.len(), 1);
        assert!((s.atoms[0].eigenvalue - 1.0).abs() < 1e-12);
        assert!((s.atoms[0].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_basis_leaves_two_point_law() {
        let (basis, v) = instance(6, 5);
        let cut = basis.without_row(2).unwrap();
        let ov = overlap_matrix(&cut, &v);
        let f = FockSpace::build(Statistics::Fermion, 5, 0).unwrap();
        let n = number_operator(&f, &ov).unwrap();
        let s = spectral_distribution(&f, &n);
        assert!(s.bernoulli_deviation(ov.m()) > 1e-6);
        assert!((s.total_weight() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn string_vev_matches_hand_values() {
        let f = FockSpace::build(Statistics::Fermion, 3, 0).unwrap();
        // <0| b_1 b_2 b_2† b_1† |0> = 1
        let ops = [
            (OpKind::Annihilate, 1),
            (OpKind::Annihilate, 2),
            (OpKind::Create, 2),
            (OpKind::Create, 1),
        ];
        assert_eq!(f.string_vev(&ops).unwrap(), 1.0);
        // <0| b_1 b_2 b_1† b_2† |0> = -1
        let swapped = [
            (OpKind::Annihilate, 1),
            (OpKind::Annihilate, 2),
            (OpKind::Create, 1),
            (OpKind::Create, 2),
        ];
        assert_eq!(f.string_vev(&swapped).unwrap(), -1.0);
        let b = FockSpace::build(Statistics::Boson, 1, 2).unwrap();
        let two = [
            (OpKind::Annihilate, 0),
            (OpKind::Annihilate, 0),
            (OpKind::Create, 0),
            (OpKind::Create, 0),
        ];
        assert!((b.string_vev(&two).unwrap() - 2.0).abs() < 1e-12);
    }
}
