//! `corpuscle`: reproducible runs of every experiment in the library.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 usage or
//! configuration error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use corpuscle::algebra::{table1_report, ClassReport, Statistics};
use corpuscle::measurement::{
    filter_coefficients, filtered_moments, outcome_table, outcome_table_csv, Observable,
};
use corpuscle::model::{overlap_matrix, BasisSet, Lattice, Subvolume, SubvolumeSpec};
use corpuscle::moments::{
    bernoulli_check, fmt_sig, format_table, run_moment_suite, trial_instance, trial_rng,
    SuiteConfig, AGREEMENT_TOL, BERNOULLI_TOL,
};
use corpuscle::oracle::{number_operator, spectral_distribution, FockSpace};
use corpuscle::stochastic::{
    ensemble_statistics, ipr_trend, sample_realization, AmplitudeModel, SE_SIGMAS,
};

/// Stream of the master seed reserved for drawing the instance itself, so
/// that it never coincides with a per-sample stream.
const SETUP_STREAM: u64 = u64::MAX;
const NORM_TOL: f64 = 1e-12;
const IPR_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Parser, Debug)]
#[command(
    name = "corpuscle",
    version,
    about = "Vacuum moments of a localized particle field"
)]
struct Cli {
    #[command(flatten)]
    out: OutputArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Size of the worker pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Symbolic and oracle moments over random instances.
    Moments(MomentsArgs),
    /// Term classes of the fourth fermion moment.
    Table1,
    /// Vacuum spectral distribution of the subvolume count.
    Spectrum(SpectrumArgs),
    /// Outcome probabilities and filtered moments for an observable.
    Measure(MeasureArgs),
    /// Monte Carlo ensemble of the classical random-amplitude field.
    Mc(McArgs),
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[arg(long, default_value_t = Statistics::Fermion)]
    stats: Statistics,
    #[arg(long, default_value_t = 10)]
    sites: usize,
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// all | none | a-b | a,b,c | random:k | random
    #[arg(long, default_value = "random")]
    subvolume: SubvolumeSpec,
    /// Delete this unoccupied basis row (closure test).
    #[arg(long)]
    drop_row: Option<usize>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, default_value_t = Statistics::Fermion)]
    stats: Statistics,
    #[arg(long, default_value_t = 10)]
    sites: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long, default_value = "random")]
    subvolume: SubvolumeSpec,
    #[arg(long)]
    drop_row: Option<usize>,
    /// Per-mode occupation cutoff for bosons.
    #[arg(long, default_value_t = 2)]
    cutoff: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ObservableKind {
    /// Site indicators: the basis coefficients themselves.
    Position,
    /// The particle's own mode basis (`f_in = I`).
    Identity,
    Random,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[arg(long, default_value_t = Statistics::Fermion)]
    stats: Statistics,
    #[arg(long, default_value_t = 8)]
    sites: usize,
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    #[arg(long, value_enum, default_value_t = ObservableKind::Random)]
    observable: ObservableKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, default_value = "gaussian")]
    model: AmplitudeModel,
    #[arg(long, default_value_t = 32)]
    sites: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "random")]
    subvolume: SubvolumeSpec,
    /// Write the density of sample 0 as `site,density` CSV.
    #[arg(long)]
    density_csv: Option<PathBuf>,
    /// Also report mean IPR on lattices of 8, 16, 32 and 64 sites.
    #[arg(long)]
    ipr_trend: bool,
}

/// Rendered output plus whether every check passed.
struct Outcome {
    text: String,
    pass: bool,
}

type CmdResult = Result<Outcome, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.out.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let format = cli.out.format;
    let result = match &cli.command {
        Command::Moments(a) => cmd_moments(a, format),
        Command::Table1 => cmd_table1(format),
        Command::Spectrum(a) => cmd_spectrum(a, format),
        Command::Measure(a) => cmd_measure(a, format),
        Command::Mc(a) => cmd_mc(a, format),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match &cli.out.output {
        Some(path) => fs::write(path, &outcome.text),
        None => io::stdout().write_all(outcome.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("check failed");
        ExitCode::from(1)
    }
}

/// Parameter echo: a JSON object for `json`, a `#` comment line otherwise.
fn header(params: &Value, format: Format) -> String {
    match format {
        Format::Json => params.to_string(),
        Format::Csv | Format::Table => {
            let fields: Vec<String> = params
                .as_object()
                .expect("header is an object")
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}={s}"),
                    other => format!("{k}={other}"),
                })
                .collect();
            format!("# {}", fields.join(" "))
        }
    }
}

fn pass_word(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_moments(a: &MomentsArgs, format: Format) -> CmdResult {
    let cfg = SuiteConfig {
        subvolume: a.subvolume.clone(),
        drop_row: a.drop_row,
        ..SuiteConfig::new(a.stats, a.sites, a.kmax, a.trials, a.seed)
    };
    let reports = run_moment_suite(&cfg)?;
    // the Bernoulli law is the fermion claim; other flavors only need the
    // symbolic and oracle values to agree
    let check_bernoulli = a.stats == Statistics::Fermion;
    let pass = reports.iter().all(|r| {
        r.max_abs_diff() <= AGREEMENT_TOL && (!check_bernoulli || bernoulli_check(r).pass)
    });
    let params = json!({
        "command": "moments",
        "stats": a.stats.name(),
        "sites": a.sites,
        "kmax": a.kmax,
        "trials": a.trials,
        "seed": a.seed,
        "subvolume": a.subvolume.to_string(),
        "drop_row": a.drop_row,
    });
    let mut text = header(&params, format);
    text.push('\n');
    match format {
        Format::Json => {
            for r in &reports {
                text.push_str(&r.to_json_line());
                text.push('\n');
            }
            let _ = writeln!(text, "{}", json!({ "pass": pass }));
        }
        Format::Csv => {
            text.push_str("trial,m,k,symbolic,oracle,abs_diff\n");
            for r in &reports {
                for row in &r.rows {
                    let _ = writeln!(
                        text,
                        "{},{:?},{},{:?},{:?},{:?}",
                        r.instance.trial,
                        r.instance.m,
                        row.k,
                        row.symbolic,
                        row.oracle,
                        row.abs_diff
                    );
                }
            }
        }
        Format::Table => {
            text.push_str(&format_table(&reports));
            let _ = writeln!(text, "{}", pass_word(pass));
        }
    }
    Ok(Outcome { text, pass })
}

fn cmd_table1(format: Format) -> CmdResult {
    let report = table1_report();
    let pass = report.matches_table1();
    let params = json!({ "command": "table1" });
    let mut text = header(&params, format);
    text.push('\n');
    let row = |poly| {
        ClassReport::integer_row(poly, report.order)
            .map(|c| c.iter().map(i64::to_string).collect::<Vec<_>>())
            .unwrap_or_default()
    };
    match format {
        Format::Json => {
            let _ = writeln!(text, "{}", json!({ "report": report, "pass": pass }));
        }
        Format::Csv => {
            text.push_str("pattern,count,m,m2,m3,m4\n");
            for c in &report.classes {
                let _ = writeln!(
                    text,
                    "{},{},{}",
                    c.pattern,
                    c.count,
                    row(&c.polynomial).join(",")
                );
            }
            let _ = writeln!(text, "total,,{}", row(&report.total).join(","));
        }
        Format::Table => {
            let _ = writeln!(
                text,
                "{:<40} {:>5} {:>4} {:>4} {:>4} {:>4}",
                "terms like", "count", "m", "m²", "m³", "m⁴"
            );
            for c in &report.classes {
                let r = row(&c.polynomial);
                let _ = writeln!(
                    text,
                    "{:<40} {:>5} {:>4} {:>4} {:>4} {:>4}",
                    c.pattern, c.count, r[0], r[1], r[2], r[3]
                );
            }
            let r = row(&report.total);
            let _ = writeln!(
                text,
                "{:<40} {:>5} {:>4} {:>4} {:>4} {:>4}",
                "total", "", r[0], r[1], r[2], r[3]
            );
            let _ = writeln!(text, "{}", pass_word(pass));
        }
    }
    Ok(Outcome { text, pass })
}

fn cmd_spectrum(a: &SpectrumArgs, format: Format) -> CmdResult {
    let lattice = Lattice::new(a.sites)?;
    let (basis, v) = trial_instance(lattice, &a.subvolume, a.drop_row, a.seed, a.trial)?;
    let overlap = overlap_matrix(&basis, &v);
    let fock = FockSpace::build(a.stats, basis.n_modes(), a.cutoff)?;
    let n_v = number_operator(&fock, &overlap)?;
    let dist = spectral_distribution(&fock, &n_v);
    let m = overlap.m();
    let deviation = dist.bernoulli_deviation(m);
    let checked = a.stats == Statistics::Fermion;
    let pass = !checked || deviation <= BERNOULLI_TOL;
    let params = json!({
        "command": "spectrum",
        "stats": a.stats.name(),
        "sites": a.sites,
        "seed": a.seed,
        "trial": a.trial,
        "subvolume": a.subvolume.to_string(),
        "drop_row": a.drop_row,
        "cutoff": a.cutoff,
    });
    let mut text = header(&params, format);
    text.push('\n');
    match format {
        Format::Json => {
            let doc = json!({
                "m": m,
                "complete_basis": basis.is_complete(),
                "bernoulli_deviation": deviation,
                "atoms": dist.atoms,
                "pass": pass,
            });
            let _ = writeln!(text, "{doc}");
        }
        Format::Csv => text.push_str(&dist.to_csv()),
        Format::Table => {
            let _ = writeln!(text, "m = {}", fmt_sig(m, 6));
            let _ = writeln!(text, "{:>12}  {:>12}", "eigenvalue", "weight");
            for atom in &dist.atoms {
                let _ = writeln!(
                    text,
                    "{:>12}  {:>12}",
                    fmt_sig(atom.eigenvalue, 6),
                    fmt_sig(atom.weight, 6)
                );
            }
            let _ = writeln!(text, "bernoulli deviation = {}", fmt_sig(deviation, 6));
            let _ = writeln!(text, "{}", pass_word(pass));
        }
    }
    Ok(Outcome { text, pass })
}

fn cmd_measure(a: &MeasureArgs, format: Format) -> CmdResult {
    let lattice = Lattice::new(a.sites)?;
    let mut rng = trial_rng(a.seed, SETUP_STREAM);
    let basis = BasisSet::random(lattice, &mut rng);
    let obs = match a.observable {
        ObservableKind::Position => Observable::position(lattice),
        ObservableKind::Identity => Observable::diagonal_in(&basis)?,
        ObservableKind::Random => Observable::random(lattice, &mut rng),
    };
    let fc = filter_coefficients(&basis, &obs)?;
    let rows = outcome_table(&fc, a.kmax, a.stats)?;

    let norm_residual = fc.column_norm_residual();
    let total: f64 = rows.iter().map(|r| r.outcome.probability).sum();
    let first_moment_residual = rows
        .iter()
        .map(|r| (r.moments[0] - r.outcome.probability).abs())
        .fold(0.0, f64::max);
    let mut agreement = 0.0f64;
    let mut spread = 0.0f64;
    for r in &rows {
        let report = filtered_moments(&fc, r.outcome.n, a.kmax, a.stats)?;
        agreement = agreement.max(report.max_abs_diff());
        let lo = r.moments.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.moments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
    }
    let equal_required = a.stats == Statistics::Fermion;
    let pass = norm_residual <= NORM_TOL
        && (total - 1.0).abs() <= NORM_TOL
        && first_moment_residual <= NORM_TOL
        && agreement <= AGREEMENT_TOL
        && (!equal_required || spread <= AGREEMENT_TOL);

    let params = json!({
        "command": "measure",
        "stats": a.stats.name(),
        "sites": a.sites,
        "kmax": a.kmax,
        "observable": format!("{:?}", a.observable).to_lowercase(),
        "seed": a.seed,
    });
    let mut text = header(&params, format);
    text.push('\n');
    let checks = json!({
        "column_norm_residual": norm_residual,
        "probability_sum": total,
        "first_moment_residual": first_moment_residual,
        "symbolic_oracle_max_diff": agreement,
        "moment_spread": spread,
        "pass": pass,
    });
    match format {
        Format::Json => {
            let _ = writeln!(text, "{}", json!({ "outcomes": rows, "checks": checks }));
        }
        Format::Csv => text.push_str(&outcome_table_csv(&rows)),
        Format::Table => {
            let _ = write!(text, "{:>3}  {:>10}  {:>12}", "n", "eigenvalue", "p");
            for k in 1..=a.kmax {
                let _ = write!(text, "  {:>12}", format!("<N^{k}>"));
            }
            text.push('\n');
            for r in &rows {
                let _ = write!(
                    text,
                    "{:>3}  {:>10}  {:>12}",
                    r.outcome.n,
                    fmt_sig(r.outcome.eigenvalue, 6),
                    fmt_sig(r.outcome.probability, 6)
                );
                for m in &r.moments {
                    let _ = write!(text, "  {:>12}", fmt_sig(*m, 6));
                }
                text.push('\n');
            }
            let _ = writeln!(text, "sum p = {}", fmt_sig(total, 6));
            let _ = writeln!(text, "moment spread = {}", fmt_sig(spread, 6));
            let _ = writeln!(text, "{}", pass_word(pass));
        }
    }
    Ok(Outcome { text, pass })
}

fn cmd_mc(a: &McArgs, format: Format) -> CmdResult {
    let lattice = Lattice::new(a.sites)?;
    let mut rng = trial_rng(a.seed, SETUP_STREAM);
    let basis = BasisSet::random(lattice, &mut rng);
    let v = a.subvolume.resolve(lattice, &mut rng)?;
    let summary = ensemble_statistics(&basis, a.model, &v, a.samples, a.seed)?;
    if let Some(path) = &a.density_csv {
        let r = sample_realization(&basis, a.model, &[Subvolume::all(lattice)], a.seed)?;
        fs::write(path, r.to_csv())?;
    }
    let trend = if a.ipr_trend {
        Some(ipr_trend(a.model, &IPR_SIZES, a.samples, a.seed)?)
    } else {
        None
    };
    let pass = summary.pass();
    let params = json!({
        "command": "mc",
        "model": a.model.name(),
        "sites": a.sites,
        "samples": a.samples,
        "seed": a.seed,
        "subvolume": a.subvolume.to_string(),
        "sigmas": SE_SIGMAS,
    });
    let mut text = header(&params, format);
    text.push('\n');
    match format {
        Format::Json => {
            let doc = json!({ "summary": summary, "ipr_trend": trend, "pass": pass });
            let _ = writeln!(text, "{doc}");
        }
        Format::Csv => {
            text.push_str("site,mean,std_error,expected,z\n");
            for s in &summary.sites {
                let _ = writeln!(
                    text,
                    "{},{:?},{:?},{:?},{:?}",
                    s.site, s.mean, s.std_error, s.expected, s.z
                );
            }
        }
        Format::Table => {
            let loc = &summary.localization;
            let lines = [
                ("m", fmt_sig(summary.m, 6)),
                ("background", fmt_sig(summary.background, 6)),
                ("mean raw N_v", fmt_sig(summary.raw.mean, 6)),
                ("mean subtracted N_v", fmt_sig(summary.subtracted.mean, 6)),
                (
                    "subtracted N_v std error",
                    fmt_sig(summary.subtracted.std_error, 6),
                ),
                ("subtracted z", fmt_sig(summary.subtracted_z, 6)),
                ("max site density z", fmt_sig(summary.max_density_z, 6)),
                ("mean |a|^2", fmt_sig(summary.amplitude_power, 6)),
                ("mean IPR", fmt_sig(loc.mean_ipr, 6)),
                ("mean top-1 fraction", fmt_sig(loc.mean_top1_fraction, 6)),
                (
                    "argmax chi-square",
                    format!(
                        "{} (dof {})",
                        fmt_sig(loc.chi_square, 6),
                        loc.degrees_of_freedom
                    ),
                ),
            ];
            for (k, v) in lines {
                let _ = writeln!(text, "{k:<26} {v}");
            }
            if let Some(t) = &trend {
                for p in &t.points {
                    let _ = writeln!(
                        text,
                        "IPR at {:>2} modes{:<10} {}",
                        p.n_modes,
                        "",
                        fmt_sig(p.mean_ipr, 6)
                    );
                }
                let _ = writeln!(text, "{:<26} {:?}", "IPR trend", t.trend);
            }
            let _ = writeln!(text, "{}", pass_word(pass));
        }
    }
    Ok(Outcome { text, pass })
}
