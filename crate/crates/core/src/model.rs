//! Finite lattice, orthonormal mode bases, subvolumes and overlap matrices.
//!
//! Space is a 1-D lattice with unit weight per site, so the inner product is
//! `<f, g> = sum_x conj(f(x)) g(x)` and the closure relation of a complete
//! basis holds exactly (up to rounding).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality / completeness tolerance for basis sets.
pub const BASIS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("lattice needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("site index {index} out of range for {n_sites} sites")]
    SiteOutOfRange { index: usize, n_sites: usize },
    #[error("duplicate site index {0} in subvolume")]
    DuplicateSite(usize),
    #[error("mode rows are not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("cannot remove row {0}")]
    BadRow(usize),
    #[error("invalid basis document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    n_sites: usize,
}

impl Lattice {
    pub fn new(n_sites: usize) -> Result<Self, ModelError> {
        if n_sites < 2 {
            return Err(ModelError::TooFewSites(n_sites));
        }
        Ok(Self { n_sites })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
}

/// Orthonormal set of mode functions on a lattice. Row `p` holds `f_p` at
/// every site; row 0 is the occupied mode `f_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    lattice: Lattice,
    modes: DMatrix<Complex64>,
}

/// Discrete Fourier family `e^{2 pi i k x / n} / sqrt(n)`, one mode per row.
pub fn fourier_modes(n: usize) -> DMatrix<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, x| {
        let phase = 2.0 * std::f64::consts::PI * ((k * x) % n) as f64 / n as f64;
        Complex64::from_polar(norm, phase)
    })
}

fn row_dot(a: &DMatrix<Complex64>, p: usize, b: &DMatrix<Complex64>, q: usize) -> Complex64 {
    a.row(p)
        .iter()
        .zip(b.row(q).iter())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

fn row_norm(a: &DMatrix<Complex64>, p: usize) -> f64 {
    a.row(p).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Max entrywise deviation of `A A^dagger` from the identity.
pub(crate) fn orthonormality_residual(modes: &DMatrix<Complex64>) -> f64 {
    let gram = modes * modes.adjoint();
    let mut worst: f64 = 0.0;
    for p in 0..gram.nrows() {
        for q in 0..gram.ncols() {
            let target = if p == q { 1.0 } else { 0.0 };
            worst = worst.max((gram[(p, q)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Max entrywise deviation of `A^dagger A` (sum over modes) from the identity.
pub(crate) fn completeness_residual(modes: &DMatrix<Complex64>) -> f64 {
    let n = modes.ncols();
    let mut worst: f64 = 0.0;
    for z in 0..n {
        for x in 0..n {
            let s: Complex64 = (0..modes.nrows())
                .map(|p| modes[(p, z)].conj() * modes[(p, x)])
                .sum();
            let target = if z == x { 1.0 } else { 0.0 };
            worst = worst.max((s - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Modified Gram-Schmidt with one reorthogonalization pass, in place.
/// Fails if a row collapses to (numerically) zero.
pub(crate) fn gram_schmidt_rows(modes: &mut DMatrix<Complex64>) -> Result<(), ModelError> {
    for p in 0..modes.nrows() {
        for _pass in 0..2 {
            for q in 0..p {
                let c = row_dot(modes, q, modes, p);
                for x in 0..modes.ncols() {
                    let v = modes[(q, x)];
                    modes[(p, x)] -= c * v;
                }
            }
        }
        let norm = row_norm(modes, p);
        if norm < 1e-10 {
            return Err(ModelError::Degenerate("linearly dependent rows"));
        }
        for x in 0..modes.ncols() {
            modes[(p, x)] /= norm;
        }
    }
    Ok(())
}

impl BasisSet {
    /// Orthonormal completion of `f0`: seed with the discrete Fourier family,
    /// replace the member of maximal overlap with `f0`, move it to row 0 and
    /// re-orthonormalize the rest against it.
    pub fn build(lattice: Lattice, f0: &[Complex64]) -> Result<Self, ModelError> {
        let n = lattice.n_sites();
        if f0.len() != n {
            return Err(ModelError::Dimension {
                expected: n,
                got: f0.len(),
            });
        }
        let norm = f0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(ModelError::Degenerate("zero occupied-mode vector"));
        }
        let seed = fourier_modes(n);
        let overlaps: Vec<f64> = (0..n)
            .map(|k| {
                seed.row(k)
                    .iter()
                    .zip(f0)
                    .map(|(s, f)| s.conj() * f)
                    .sum::<Complex64>()
                    .norm()
            })
            .collect();
        let replaced =
            overlaps
                .iter()
                .enumerate()
                .fold(0, |best, (k, &o)| if o > overlaps[best] { k } else { best });

        let mut modes = DMatrix::zeros(n, n);
        for x in 0..n {
            modes[(0, x)] = f0[x] / norm;
        }
        for (row, k) in (1..).zip((0..n).filter(|&k| k != replaced)) {
            for x in 0..n {
                modes[(row, x)] = seed[(k, x)];
            }
        }
        gram_schmidt_rows(&mut modes)?;
        Ok(Self { lattice, modes })
    }

    /// Wrap an explicit mode matrix (rows are modes). Rows must be
    /// orthonormal; fewer rows than sites gives an incomplete basis.
    pub fn from_modes(lattice: Lattice, modes: DMatrix<Complex64>) -> Result<Self, ModelError> {
        if modes.ncols() != lattice.n_sites() {
            return Err(ModelError::Dimension {
                expected: lattice.n_sites(),
                got: modes.ncols(),
            });
        }
        if modes.nrows() == 0 || modes.nrows() > lattice.n_sites() {
            return Err(ModelError::Dimension {
                expected: lattice.n_sites(),
                got: modes.nrows(),
            });
        }
        let residual = orthonormality_residual(&modes);
        if residual > BASIS_TOL {
            return Err(ModelError::NotOrthonormal(residual));
        }
        Ok(Self { lattice, modes })
    }

    /// Random normalized `f0` (complex Gaussian entries) and its completion.
    pub fn random<R: Rng + ?Sized>(lattice: Lattice, rng: &mut R) -> Self {
        loop {
            let f0 = random_state(lattice.n_sites(), rng);
            if let Ok(basis) = Self::build(lattice, &f0) {
                return basis;
            }
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn modes(&self) -> &DMatrix<Complex64> {
        &self.modes
    }

    pub fn mode(&self, p: usize) -> Vec<Complex64> {
        self.modes.row(p).iter().copied().collect()
    }

    pub fn occupied(&self) -> Vec<Complex64> {
        self.mode(0)
    }

    pub fn is_complete(&self) -> bool {
        self.n_modes() == self.n_sites()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.modes)
    }

    /// Copy of the basis with mode `row` deleted. The occupied row cannot
    /// be removed.
    pub fn without_row(&self, row: usize) -> Result<Self, ModelError> {
        if row == 0 || row >= self.n_modes() {
            return Err(ModelError::BadRow(row));
        }
        let modes = self.modes.clone().remove_row(row);
        Ok(Self {
            lattice: self.lattice,
            modes,
        })
    }

    /// Replace rows `1..M` by `U` applied to them, for a unitary `U` of size
    /// `M - 1`. Row 0 is untouched, so this is another orthonormal
    /// completion of the same `f0`.
    pub fn rotate_unoccupied(&self, unitary: &DMatrix<Complex64>) -> Result<Self, ModelError> {
        let rest = self.n_modes() - 1;
        if unitary.nrows() != rest || unitary.ncols() != rest {
            return Err(ModelError::Dimension {
                expected: rest,
                got: unitary.nrows(),
            });
        }
        let tail = self.modes.rows(1, rest).into_owned();
        let rotated = unitary * tail;
        let mut modes = self.modes.clone();
        modes.rows_mut(1, rest).copy_from(&rotated);
        Self::from_modes(self.lattice, modes)
    }

    /// JSON document `{"n_sites", "modes": [[re, im], ...] row-major, "subvolume"}`.
    pub fn to_document(&self, subvolume: &Subvolume) -> BasisDocument {
        let mut modes = Vec::with_capacity(self.modes.len());
        for p in 0..self.n_modes() {
            for x in 0..self.n_sites() {
                let z = self.modes[(p, x)];
                modes.push([z.re, z.im]);
            }
        }
        BasisDocument {
            n_sites: self.n_sites(),
            modes,
            subvolume: subvolume.sites().to_vec(),
        }
    }

    pub fn from_document(doc: &BasisDocument) -> Result<(Self, Subvolume), ModelError> {
        let lattice = Lattice::new(doc.n_sites)?;
        let n = doc.n_sites;
        if doc.modes.is_empty() || !doc.modes.len().is_multiple_of(n) {
            return Err(ModelError::Document(format!(
                "{} mode entries is not a multiple of {} sites",
                doc.modes.len(),
                n
            )));
        }
        let rows = doc.modes.len() / n;
        let modes = DMatrix::from_fn(rows, n, |p, x| {
            let [re, im] = doc.modes[p * n + x];
            Complex64::new(re, im)
        });
        let basis = Self::from_modes(lattice, modes)?;
        let subvolume = Subvolume::new(lattice, doc.subvolume.clone())?;
        Ok((basis, subvolume))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub n_sites: usize,
    pub modes: Vec<[f64; 2]>,
    pub subvolume: Vec<usize>,
}

/// Normalized vector with independent standard complex Gaussian entries.
pub fn random_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

/// Haar-ish random unitary: QR of a complex Gaussian matrix with the phases
/// of `R`'s diagonal folded back into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// A set of lattice sites, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subvolume {
    sites: Vec<usize>,
}

impl Subvolume {
    pub fn new(lattice: Lattice, mut sites: Vec<usize>) -> Result<Self, ModelError> {
        sites.sort_unstable();
        for w in sites.windows(2) {
            if w[0] == w[1] {
                return Err(ModelError::DuplicateSite(w[0]));
            }
        }
        if let Some(&last) = sites.last() {
            if last >= lattice.n_sites() {
                return Err(ModelError::SiteOutOfRange {
                    index: last,
                    n_sites: lattice.n_sites(),
                });
            }
        }
        Ok(Self { sites })
    }

    pub fn all(lattice: Lattice) -> Self {
        Self {
            sites: (0..lattice.n_sites()).collect(),
        }
    }

    pub fn empty() -> Self {
        Self { sites: Vec::new() }
    }

    /// Each site included independently with probability one half.
    pub fn random<R: Rng + ?Sized>(lattice: Lattice, rng: &mut R) -> Self {
        Self {
            sites: (0..lattice.n_sites())
                .filter(|_| rng.random_bool(0.5))
                .collect(),
        }
    }

    /// Uniformly random subset of exactly `k` sites.
    pub fn random_of_size<R: Rng + ?Sized>(
        lattice: Lattice,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if k > lattice.n_sites() {
            return Err(ModelError::SiteOutOfRange {
                index: k,
                n_sites: lattice.n_sites(),
            });
        }
        let mut sites = rand::seq::index::sample(rng, lattice.n_sites(), k).into_vec();
        sites.sort_unstable();
        Ok(Self { sites })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }
}

/// Textual subvolume description: `all`, `none`, `a-b` (inclusive range),
/// `a,b,c`, `random:k` (exactly `k` random sites) or `random` (each site
/// with probability one half).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubvolumeSpec {
    All,
    None,
    Range(usize, usize),
    List(Vec<usize>),
    RandomOfSize(usize),
    Random,
}

impl SubvolumeSpec {
    pub fn resolve<R: Rng + ?Sized>(
        &self,
        lattice: Lattice,
        rng: &mut R,
    ) -> Result<Subvolume, ModelError> {
        match self {
            Self::All => Ok(Subvolume::all(lattice)),
            Self::None => Ok(Subvolume::empty()),
            Self::Range(a, b) => Subvolume::new(lattice, (*a..=*b).collect()),
            Self::List(sites) => Subvolume::new(lattice, sites.clone()),
            Self::RandomOfSize(k) => Subvolume::random_of_size(lattice, *k, rng),
            Self::Random => Ok(Subvolume::random(lattice, rng)),
        }
    }
}

impl std::str::FromStr for SubvolumeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad site index {t:?}"))
        };
        match s {
            "all" => return Ok(Self::All),
            "none" => return Ok(Self::None),
            "random" => return Ok(Self::Random),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("random:") {
            return Ok(Self::RandomOfSize(num(k)?));
        }
        if let Some((a, b)) = s.split_once('-') {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty range {s:?}"));
            }
            return Ok(Self::Range(a, b));
        }
        s.split(',')
            .map(num)
            .collect::<Result<Vec<_>, _>>()
            .map(Self::List)
    }
}

impl std::fmt::Display for SubvolumeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::All => write!(f, "all"),
            Self::None => write!(f, "none"),
            Self::Range(a, b) => write!(f, "{a}-{b}"),
            Self::List(sites) => {
                let parts: Vec<String> = sites.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
            Self::RandomOfSize(k) => write!(f, "random:{k}"),
            Self::Random => write!(f, "random"),
        }
    }
}

/// Subvolume Gram matrix `V_pq = sum_{x in v} conj(f_p(x)) f_q(x)`.
///
/// For a complete basis this is the projection onto the subvolume written in
/// the mode basis, so it is Hermitian and idempotent and `m = V_00` is the
/// probability of finding the occupied mode inside `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    entries: DMatrix<Complex64>,
}

impl OverlapMatrix {
    pub fn new(basis: &BasisSet, v: &Subvolume) -> Self {
        let dim = basis.n_modes();
        let modes = basis.modes();
        let entries = DMatrix::from_fn(dim, dim, |p, q| {
            v.sites()
                .iter()
                .map(|&x| modes[(p, x)].conj() * modes[(q, x)])
                .sum()
        });
        Self { entries }
    }

    /// Wrap arbitrary entries; used for filtered projectors which play the
    /// same role as a subvolume overlap.
    pub fn from_entries(entries: DMatrix<Complex64>) -> Result<Self, ModelError> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(ModelError::Dimension {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.entries[(p, q)]
    }

    pub fn m(&self) -> f64 {
        self.entries[(0, 0)].re
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.entries - self.entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn idempotency_residual(&self) -> f64 {
        (&self.entries * &self.entries - &self.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub fn overlap_matrix(basis: &BasisSet, v: &Subvolume) -> OverlapMatrix {
    OverlapMatrix::new(basis, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub residual: f64,
    /// Set when the basis has fewer modes than sites; the residual then
    /// measures how far the closure relation fails.
    pub incomplete: bool,
}

/// `max_{z,x} |sum_p conj(f_p(z)) f_p(x) - delta_zx|`.
pub fn closure_residual(basis: &BasisSet) -> Closure {
    Closure {
        residual: completeness_residual(basis.modes()),
        incomplete: !basis.is_complete(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn two_site_completion_is_forced() {
        let lat = Lattice::new(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let basis = BasisSet::build(lat, &[c(h), c(h)]).unwrap();
        let m = basis.modes();
        assert!((m[(0, 0)] - c(h)).norm() < 1e-15);
        assert!((m[(0, 1)] - c(h)).norm() < 1e-15);
        // second row is (1, -1)/sqrt 2 up to a global phase
        let ratio = m[(1, 1)] / m[(1, 0)];
        assert!((ratio - c(-1.0)).norm() < 1e-14);
        assert!((m[(1, 0)].norm() - h).abs() < 1e-15);
        assert!(closure_residual(&basis).residual < 1e-15);

        let v = Subvolume::new(lat, vec![0]).unwrap();
        let ov = overlap_matrix(&basis, &v);
        for p in 0..2 {
            for q in 0..2 {
                assert!((ov.get(p, q).norm() - 0.5).abs() < 1e-15);
            }
        }
        assert!((ov.m() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn indicator_f0_stays_position_member() {
        let lat = Lattice::new(8).unwrap();
        let mut f0 = vec![c(0.0); 8];
        f0[3] = c(1.0);
        let basis = BasisSet::build(lat, &f0).unwrap();
        assert_eq!(basis.occupied(), f0);
        assert!(closure_residual(&basis).residual < 1e-12);
    }

    #[test]
    fn random_f0_orthonormal_and_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lat = Lattice::new(12).unwrap();
        let f0 = random_state(12, &mut rng);
        let basis = BasisSet::build(lat, &f0).unwrap();
        assert!(basis.orthonormality_residual() < 1e-12);
        assert!(closure_residual(&basis).residual < 1e-12);
        for (x, f) in f0.iter().enumerate() {
            assert!((basis.modes()[(0, x)] - f).norm() < 1e-14);
        }
    }

    #[test]
    fn unnormalized_input_is_renormalized() {
        let lat = Lattice::new(4).unwrap();
        let basis = BasisSet::build(lat, &[c(2.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!((basis.modes()[(0, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        let lat = Lattice::new(4).unwrap();
        assert!(matches!(
            BasisSet::build(lat, &[c(0.0); 4]),
            Err(ModelError::Degenerate(_))
        ));
        assert_eq!(Lattice::new(1), Err(ModelError::TooFewSites(1)));
    }

    #[test]
    fn fourier_family_is_unitary() {
        let lat = Lattice::new(16).unwrap();
        let basis = BasisSet::from_modes(lat, fourier_modes(16)).unwrap();
        assert!(closure_residual(&basis).residual < 1e-12);
        assert!(!closure_residual(&basis).incomplete);
    }

    #[test]
    fn deleted_row_residual_is_its_peak_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = BasisSet::random(Lattice::new(9).unwrap(), &mut rng);
        let cut = basis.without_row(4).unwrap();
        let deleted = basis.mode(4);
        let expected = deleted.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let closure = closure_residual(&cut);
        assert!(closure.incomplete);
        assert!((closure.residual - expected).abs() < 1e-12);
        assert_eq!(basis.without_row(0), Err(ModelError::BadRow(0)));
    }

    #[test]
    fn overlap_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lat = Lattice::new(7).unwrap();
        let basis = BasisSet::random(lat, &mut rng);
        let full = overlap_matrix(&basis, &Subvolume::all(lat));
        let id = DMatrix::<Complex64>::identity(7, 7);
        assert!((full.entries() - id).iter().all(|z| z.norm() < 1e-12));
        assert!((full.m() - 1.0).abs() < 1e-12);
        let none = overlap_matrix(&basis, &Subvolume::empty());
        assert!(none
            .entries()
            .iter()
            .all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_eq!(none.m(), 0.0);
    }

    #[test]
    fn subvolume_validation() {
        let lat = Lattice::new(4).unwrap();
        assert_eq!(
            Subvolume::new(lat, vec![1, 1]),
            Err(ModelError::DuplicateSite(1))
        );
        assert!(matches!(
            Subvolume::new(lat, vec![4]),
            Err(ModelError::SiteOutOfRange { .. })
        ));
        assert_eq!(Subvolume::new(lat, vec![3, 0]).unwrap().sites(), &[0, 3]);
    }

    #[test]
    fn subvolume_spec_grammar() {
        let lat = Lattice::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let parse = |s: &str| s.parse::<SubvolumeSpec>().unwrap();
        assert_eq!(parse("all").resolve(lat, &mut rng).unwrap().len(), 10);
        assert!(parse("none").resolve(lat, &mut rng).unwrap().is_empty());
        assert_eq!(
            parse("0-4").resolve(lat, &mut rng).unwrap().sites(),
            &[0, 1, 2, 3, 4]
        );
        assert_eq!(
            parse("0,3,7").resolve(lat, &mut rng).unwrap().sites(),
            &[0, 3, 7]
        );
        assert_eq!(parse("random:4").resolve(lat, &mut rng).unwrap().len(), 4);
        assert_eq!(parse("random:4").to_string(), "random:4");
        assert!("4-1".parse::<SubvolumeSpec>().is_err());
        assert!("x".parse::<SubvolumeSpec>().is_err());
        assert!(parse("0-10").resolve(lat, &mut rng).is_err());
    }

    #[test]
    fn document_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lat = Lattice::new(5).unwrap();
        let basis = BasisSet::random(lat, &mut rng);
        let v = Subvolume::new(lat, vec![0, 2]).unwrap();
        let json = serde_json::to_string(&basis.to_document(&v)).unwrap();
        let doc: BasisDocument = serde_json::from_str(&json).unwrap();
        let (back, back_v) = BasisSet::from_document(&doc).unwrap();
        assert_eq!(back, basis);
        assert_eq!(back_v, v);
    }
}
