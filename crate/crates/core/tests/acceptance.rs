//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Reference values are computed here independently of the
//! code under test wherever possible (direct sums over lattice sites, hand
//! pinned integer tables).

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

use corpuscle::algebra::{
    moment_expression, table1_report, vacuum_expectation, Expression, MPolynomial, ModeIndex, Op,
    OpKind, Statistics, Term,
};
use corpuscle::measurement::{
    filter_coefficients, filtered_moments, outcome_distribution, Observable,
};
use corpuscle::model::{overlap_matrix, BasisSet, Lattice, Subvolume, SubvolumeSpec};
use corpuscle::moments::{oracle_moments, symbolic_moments, trial_instance, trial_rng};
use corpuscle::oracle::{number_operator, safe_cutoff, spectral_distribution, FockSpace};
use corpuscle::stochastic::{ensemble_statistics, AmplitudeModel};

const MOMENT_TOL: f64 = 1e-10;
const ATOM_TOL: f64 = 1e-9;
const CLOSURE_GAP: f64 = 1e-3;
const NORM_TOL: f64 = 1e-12;
const EXTENDED_TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// `m = sum_{x in v} |f_0(x)|^2`, straight from the lattice.
fn direct_m(basis: &BasisSet, v: &Subvolume) -> f64 {
    let f0 = basis.occupied();
    v.sites().iter().map(|&x| f0[x].norm_sqr()).sum()
}

fn instance(n: usize, seed: u64, trial: usize, drop_row: Option<usize>) -> (BasisSet, Subvolume) {
    trial_instance(
        Lattice::new(n).unwrap(),
        &SubvolumeSpec::Random,
        drop_row,
        seed,
        trial,
    )
    .unwrap()
}

fn c1_moment_theorem() -> Verdict {
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let (basis, v) = instance(10, 101, trial, None);
        let m = direct_m(&basis, &v);
        let moments =
            oracle_moments(&overlap_matrix(&basis, &v), Statistics::Fermion, 4, 4).unwrap();
        for x in moments {
            worst = worst.max((x - m).abs());
        }
    }
    let m_poly = MPolynomial::from_coeffs(&[(1, 1)]);
    let symbolic_exact =
        (1..=4).all(|k| moment_expression(k, Statistics::Fermion).unwrap() == m_poly);
    verdict(
        worst <= MOMENT_TOL && symbolic_exact,
        format!("50 instances, max |<N^k> - m| = {worst:.2e}, symbolic k=1..4 exactly m: {symbolic_exact}"),
    )
}

fn c2_table() -> Verdict {
    // (terms like, count, coefficients of m, m², m³, m⁴)
    let expected: [(&str, usize, [i64; 4]); 5] = [
        ("b_n b_n† b_n b_n† b_n b_n† b_n b_n†", 1, [0, 0, 0, 1]),
        ("b_n b_i b_i† b_n† b_n b_n† b_n b_n†", 3, [0, 0, 3, -3]),
        ("b_n b_i b_i† b_j b_j† b_n† b_n b_n†", 2, [0, 2, -4, 2]),
        ("b_n b_i b_i† b_n† b_n b_j b_j† b_n†", 1, [0, 1, -2, 1]),
        ("b_n b_i b_i† b_j b_j† b_k b_k† b_n†", 1, [1, -3, 3, -1]),
    ];
    let report = table1_report();
    let mut mismatches = Vec::new();
    if report.classes.len() != expected.len() {
        mismatches.push(format!("{} classes", report.classes.len()));
    }
    for (row, (class, (pattern, count, coeffs))) in report.classes.iter().zip(expected).enumerate()
    {
        let poly = MPolynomial::from_coeffs(
            &coeffs
                .iter()
                .enumerate()
                .map(|(p, &c)| (p as u32 + 1, c))
                .collect::<Vec<_>>(),
        );
        if class.pattern != pattern || class.count != count || class.polynomial != poly {
            mismatches.push(format!("row {}", row + 1));
        }
    }
    let total_ok = report.total == MPolynomial::from_coeffs(&[(1, 1)]);
    if !total_ok {
        mismatches.push("total".into());
    }
    let counts: Vec<usize> = report.classes.iter().map(|c| c.count).collect();
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!(
                "counts {counts:?}, all rows exact, total = {}",
                report.total
            )
        } else {
            format!("mismatch in {}", mismatches.join(", "))
        },
    )
}

fn c3_bimodality() -> Verdict {
    let mut worst = 0.0f64;
    let mut atom_counts = Vec::new();
    for trial in 0..20 {
        let (basis, v) = instance(10, 303, trial, None);
        let m = direct_m(&basis, &v);
        let fock = FockSpace::build(Statistics::Fermion, 10, 1).unwrap();
        let n_v = number_operator(&fock, &overlap_matrix(&basis, &v)).unwrap();
        let dist = spectral_distribution(&fock, &n_v);
        atom_counts.push(dist.atoms.len());
        let dev = if dist.atoms.len() == 2 {
            let (a0, a1) = (dist.atoms[0], dist.atoms[1]);
            [
                a0.eigenvalue.abs(),
                (a0.weight - (1.0 - m)).abs(),
                (a1.eigenvalue - 1.0).abs(),
                (a1.weight - m).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        worst = worst.max(dev);
    }
    let two = atom_counts.iter().all(|&c| c == 2);
    verdict(
        two && worst <= ATOM_TOL,
        format!("20 instances, two atoms each: {two}, max atom deviation = {worst:.2e}"),
    )
}

fn c4_closure() -> Verdict {
    let mut weakest = f64::INFINITY;
    for trial in 0..5 {
        let (basis, v) = instance(10, 404, trial, Some(1));
        let m = direct_m(&basis, &v);
        let overlap = overlap_matrix(&basis, &v);
        let moments = oracle_moments(&overlap, Statistics::Fermion, 4, 4).unwrap();
        let moment_gap = moments.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
        let fock = FockSpace::build(Statistics::Fermion, basis.n_modes(), 1).unwrap();
        let n_v = number_operator(&fock, &overlap).unwrap();
        let spectral_gap = spectral_distribution(&fock, &n_v).bernoulli_deviation(m);
        weakest = weakest.min(moment_gap.max(spectral_gap));
    }
    verdict(
        weakest > CLOSURE_GAP,
        format!("row 1 deleted, 5 instances, smallest worst-case deviation = {weakest:.3e}"),
    )
}

fn random_string<R: Rng>(rng: &mut R, n_modes: usize) -> Vec<(OpKind, usize)> {
    let len = rng.random_range(0..=8usize);
    let kind = |c: bool| {
        if c {
            OpKind::Create
        } else {
            OpKind::Annihilate
        }
    };
    if rng.random_bool(0.5) {
        (0..len)
            .map(|_| (kind(rng.random_bool(0.5)), rng.random_range(0..n_modes)))
            .collect()
    } else {
        // balanced strings: each mode created as often as annihilated
        let mut ops: Vec<(OpKind, usize)> = (0..len / 2)
            .flat_map(|_| {
                let mode = rng.random_range(0..n_modes);
                [(OpKind::Create, mode), (OpKind::Annihilate, mode)]
            })
            .collect();
        ops.shuffle(rng);
        ops
    }
}

fn symbolic_vev(ops: &[(OpKind, usize)], stats: Statistics) -> Option<f64> {
    let term = Term::new(
        ops.iter()
            .map(|&(kind, mode)| {
                let i = ModeIndex::fixed(mode as u32);
                match kind {
                    OpKind::Create => Op::create(i),
                    OpKind::Annihilate => Op::annihilate(i),
                }
            })
            .collect(),
    );
    let value = vacuum_expectation(&Expression::from_terms([term], stats), stats).scalar_value()?;
    if value.im != num_rational::Ratio::from_integer(0) {
        return None;
    }
    value.re.to_f64()
}

fn c5_strings() -> Verdict {
    let mut rng = trial_rng(505, 0);
    let mut spaces: HashMap<(Statistics, usize, usize), FockSpace> = HashMap::new();
    let (mut fermion_bad, mut boson_worst, mut nonzero, mut unresolved) = (0, 0.0f64, 0, 0);
    for _ in 0..500 {
        let n_modes = rng.random_range(1..=5usize);
        let ops = random_string(&mut rng, n_modes);
        for stats in [Statistics::Fermion, Statistics::Boson] {
            let cutoff = if stats == Statistics::Boson {
                safe_cutoff(ops.len())
            } else {
                1
            };
            let fock = spaces
                .entry((stats, n_modes, cutoff))
                .or_insert_with(|| FockSpace::build(stats, n_modes, cutoff).unwrap());
            let oracle = fock.string_vev(&ops).unwrap();
            let Some(symbolic) = symbolic_vev(&ops, stats) else {
                unresolved += 1;
                continue;
            };
            if oracle != 0.0 {
                nonzero += 1;
            }
            match stats {
                Statistics::Fermion => fermion_bad += usize::from(symbolic != oracle),
                _ => boson_worst = boson_worst.max((symbolic - oracle).abs()),
            }
        }
    }
    verdict(
        fermion_bad == 0 && boson_worst <= MOMENT_TOL && unresolved == 0,
        format!(
            "500 strings x 2 flavors ({nonzero} nonzero), fermion mismatches = {fermion_bad}, \
             boson max diff = {boson_worst:.2e}, unresolved = {unresolved}"
        ),
    )
}

fn c6_measurement() -> Verdict {
    let lattice = Lattice::new(8).unwrap();
    let (mut norm, mut first, mut spread, mut total) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..20 {
        let mut rng = trial_rng(606, trial);
        let basis = BasisSet::random(lattice, &mut rng);
        let obs = Observable::random(lattice, &mut rng);
        let fc = filter_coefficients(&basis, &obs).unwrap();
        // column norms and probabilities from explicit inner products
        let f0 = basis.occupied();
        for n in 0..8 {
            let g: Vec<Complex64> = obs.eigenbasis().row(n).iter().copied().collect();
            let inner =
                |f: &[Complex64]| -> Complex64 { g.iter().zip(f).map(|(a, b)| a.conj() * b).sum() };
            let col: f64 = (0..8)
                .map(|i| {
                    inner(&basis.modes().row(i).iter().copied().collect::<Vec<_>>()).norm_sqr()
                })
                .sum();
            norm = norm.max((col - 1.0).abs());
            let p = inner(&f0).norm_sqr();
            let report = filtered_moments(&fc, n, 4, Statistics::Fermion).unwrap();
            let oracle = report.oracle_moments();
            first = first.max((oracle[0] - p).abs());
            let lo = oracle.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            spread = spread.max(hi - lo);
        }
        let sum: f64 = outcome_distribution(&fc)
            .iter()
            .map(|o| o.probability)
            .sum();
        total = total.max((sum - 1.0).abs());
    }
    verdict(
        norm <= NORM_TOL && first <= NORM_TOL && spread <= MOMENT_TOL && total <= NORM_TOL,
        format!(
            "20 observables, column norm err = {norm:.2e}, first moment err = {first:.2e}, \
             k=1..4 spread = {spread:.2e}, |sum p - 1| = {total:.2e}"
        ),
    )
}

fn c7_extended() -> Verdict {
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let (basis, v) = instance(10, 707, trial, None);
        let m = direct_m(&basis, &v);
        let moments =
            oracle_moments(&overlap_matrix(&basis, &v), Statistics::Fermion, 6, 6).unwrap();
        worst = worst
            .max((moments[4] - m).abs())
            .max((moments[5] - m).abs());
    }
    verdict(
        worst <= EXTENDED_TOL,
        format!("10 instances, max |<N^5>, <N^6> - m| = {worst:.2e}"),
    )
}

fn c8_stochastic() -> Verdict {
    let lattice = Lattice::new(32).unwrap();
    let mut rng = trial_rng(808, u64::MAX);
    let basis = BasisSet::random(lattice, &mut rng);
    let v = Subvolume::random(lattice, &mut rng);
    let mut parts = Vec::new();
    let mut pass = true;
    for model in [AmplitudeModel::Gaussian, AmplitudeModel::FixedMagnitude] {
        let s = ensemble_statistics(&basis, model, &v, 100_000, 808).unwrap();
        // closed form from the lattice directly: |f_0|^2 + (1 - |f_0|^2) / 2
        let f0 = basis.occupied();
        let closed_ok = s.sites.iter().all(|site| {
            (site.expected - (f0[site.site].norm_sqr() + 0.5 * (1.0 - f0[site.site].norm_sqr())))
                .abs()
                < 1e-12
        });
        let m_ok = (s.m - direct_m(&basis, &v)).abs() < 1e-12;
        pass &= s.density_pass && s.subtracted_pass && closed_ok && m_ok;
        parts.push(format!(
            "{model}: max site z = {:.2}, subtracted z = {:.2}",
            s.max_density_z, s.subtracted_z
        ));
    }
    verdict(pass, format!("1e5 samples, n = 32; {}", parts.join("; ")))
}

fn poly(coeffs: &[i64]) -> MPolynomial {
    MPolynomial::from_coeffs(
        &coeffs
            .iter()
            .enumerate()
            .map(|(p, &c)| (p as u32 + 1, c))
            .collect::<Vec<_>>(),
    )
}

fn c9_flavors() -> Verdict {
    let golden: Value = serde_json::from_str(include_str!("golden/flavor_moments.json"))
        .expect("golden file parses");
    // reference raw moments for k = 1..3
    let bernoulli = [poly(&[1]), poly(&[1]), poly(&[1])];
    let poisson = [poly(&[1]), poly(&[1, 1]), poly(&[1, 3, 1])];
    let bose_einstein = [poly(&[1]), poly(&[1, 2]), poly(&[1, 6, 6])];

    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    let mut seqs = Vec::new();
    for stats in [Statistics::Fermion, Statistics::Boson, Statistics::Coherent] {
        let polys = symbolic_moments(stats, 6).unwrap();
        let entry = &golden["flavors"][stats.name()];
        for (k, p) in polys.iter().enumerate() {
            let coeffs: Vec<i64> = entry["moments"][(k + 1).to_string()]["coefficients"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_i64).collect())
                .unwrap_or_default();
            if *p != poly(&coeffs) {
                problems.push(format!("{stats} k={} differs from golden", k + 1));
            }
        }
        for (label, reference) in [
            ("bernoulli", &bernoulli),
            ("poisson", &poisson),
            ("bose_einstein", &bose_einstein),
        ] {
            let matches = polys[..3] == reference[..];
            if entry[format!("matches_{label}")].as_bool() != Some(matches) {
                problems.push(format!("{stats} {label} flag"));
            }
        }
        if stats != Statistics::Fermion {
            for trial in 0..10 {
                let (basis, v) = instance(6, 909, trial, None);
                let m = direct_m(&basis, &v);
                let oracle = oracle_moments(&overlap_matrix(&basis, &v), stats, 3, 3).unwrap();
                for (p, x) in polys.iter().zip(&oracle) {
                    worst = worst.max((p.eval(m) - x).abs());
                }
            }
            seqs.push(format!("{stats}: {}, {}, {}", polys[0], polys[1], polys[2]));
        }
    }
    if worst > MOMENT_TOL {
        problems.push(format!("oracle diff {worst:.2e}"));
    }
    verdict(
        problems.is_empty(),
        format!(
            "symbolic vs oracle max diff = {worst:.2e}; {}; neither matches Poisson or Bose-Einstein{}",
            seqs.join("; "),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(", ")) }
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, fn() -> Verdict, u64);
    let criteria: [Criterion; 9] = [
        (1, "moment theorem", c1_moment_theorem, 30),
        (2, "fourth-moment table", c2_table, 5),
        (3, "bimodality", c3_bimodality, 30),
        (4, "closure sensitivity", c4_closure, 30),
        (5, "symbolic vs oracle strings", c5_strings, 60),
        (6, "measurement filtering", c6_measurement, 20),
        (7, "extended moments k=5,6", c7_extended, 10),
        (8, "stochastic mean laws", c8_stochastic, 60),
        (9, "boson and coherent flavors", c9_flavors, 30),
    ];
    let mut failed = 0;
    for (id, name, run, limit) in criteria {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {id} [{name}]: {} ({}; {:.2} s of {limit} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
