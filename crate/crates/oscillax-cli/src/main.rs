use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use oscillax::evolve::{marginal_sequence, EvolveError, Sequence, Window};
use oscillax::fixtures::named;
use oscillax::model::{model_to_json, parse_model_json, OscillatingModel};
use oscillax::numeric::fmt17;
use oscillax::regimes::{predict, RegimeError};
use oscillax::switching::{build_q, default_aggregate, power_iterate, renewal_sequence, SwitchingError, WeightSpec};
use oscillax::verify::{
    asymptotics_suite, convergence_suite, identity_suite_exact, identity_suite_float, simulate, FitError, VerifyError,
};

#[derive(Parser)]
#[command(name = "oscillax", version, about = "Numerical laboratory for oscillating random walks on Z")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, global = true, env = "OSCILLAX_OUT", default_value = ".")]
    out: PathBuf,
    /// Half-width of the computational window.
    #[arg(long, global = true)]
    window: Option<i64>,
    /// Horizon N.
    #[arg(long, short = 'n', global = true)]
    horizon: Option<usize>,
    /// Seed for simulation.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exact rational arithmetic (needs rational model input).
    #[arg(long, global = true)]
    rational: bool,
    /// Polynomial weight exponent delta in 1 + |x|^(1 + delta).
    #[arg(long, global = true, default_value_t = 0.5)]
    weight_delta: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Regime report.
    Classify { model: PathBuf },
    /// Sequence P_x[X_n = y] as CSV.
    Evolve {
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        from: i64,
        #[arg(long, allow_hyphen_values = true)]
        to: i64,
    },
    /// Switching kernels Q_n and renewal operators T_n on the arrival set.
    Kernel { model: PathBuf },
    /// Spectral data of the aggregate switching kernel.
    Spectrum { model: PathBuf },
    /// Verification suites; exit 1 on failure.
    Verify {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Monte Carlo sampling of the walk.
    Simulate {
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0)]
        from: i64,
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
    },
    /// Writes the shipped FIX-* model files.
    Fixtures,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Identities,
    Convergence,
    Asymptotics,
    All,
}

/// Leak allowed before `evolve` reports a window that is too small.
const EVOLVE_BUDGET: f64 = 1e-10;

#[derive(serde::Serialize)]
struct SpectrumReport {
    rho_psi: f64,
    residual: f64,
    defect_max: f64,
    markovian: bool,
    gap: f64,
    window: (i64, i64),
    #[serde(rename = "H")]
    h: Vec<f64>,
    nu: Option<Vec<(i64, f64)>>,
}

enum Failure {
    Invalid(anyhow::Error),
    Numeric(anyhow::Error),
    Verification(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if is_numeric(&e) {
            Failure::Numeric(e)
        } else {
            Failure::Invalid(e)
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

fn is_numeric(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<EvolveError>(), Some(EvolveError::WindowTooSmall { .. }))
            || matches!(c.downcast_ref::<SwitchingError>(), Some(SwitchingError::NoConvergence { .. }))
            || matches!(c.downcast_ref::<RegimeError>(), Some(RegimeError::PlateauNotReached(_)))
            || matches!(c.downcast_ref::<VerifyError>(), Some(VerifyError::Fit(_) | VerifyError::PlateauNotReached(_)))
            || c.downcast_ref::<FitError>().is_some()
    })
}

fn load(path: &Path) -> anyhow::Result<OscillatingModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn window_for(common: &Common, model: &OscillatingModel, default: Window) -> anyhow::Result<Window> {
    match common.window {
        Some(w) => Ok(Window::symmetric(w, model)?),
        None => Ok(default),
    }
}

fn write(out: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let p = out.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
}

fn write_json(out: &Path, name: &str, v: &impl serde::Serialize) -> anyhow::Result<()> {
    write(out, name, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish_csv(out: &Path, name: &str, w: csv::Writer<Vec<u8>>) -> anyhow::Result<()> {
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write(out, name, &String::from_utf8(bytes)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned())
}

fn require_exact(common: &Common, model: &OscillatingModel) -> anyhow::Result<()> {
    if common.rational && !(model.left.is_exact() && model.origin.is_exact() && model.right.is_exact()) {
        anyhow::bail!("--rational needs a model with rational probabilities");
    }
    Ok(())
}

fn evolve_csv<T: oscillax::evolve::Scalar>(seq: &Sequence<T>, exact: bool) -> anyhow::Result<csv::Writer<Vec<u8>>>
where
    T: std::fmt::Display,
{
    let mut w = csv_writer();
    if exact {
        w.write_record(["n", "value", "leak", "value_exact"])?;
    } else {
        w.write_record(["n", "value", "leak"])?;
    }
    for n in 1..seq.values.len() {
        let mut rec = vec![n.to_string(), fmt17(seq.values[n].to_f64()), fmt17(seq.leak[n].to_f64())];
        if exact {
            rec.push(seq.values[n].to_string());
        }
        w.write_record(&rec)?;
    }
    Ok(w)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    if let Some(k) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Invalid(anyhow::anyhow!("{e}")))?;
    }
    if c.horizon == Some(0) {
        return Err(Failure::Invalid(anyhow::anyhow!("horizon must be at least 1")));
    }
    match &cli.command {
        Command::Classify { model } => {
            let m = load(model)?;
            let r = predict(&m).map_err(anyhow::Error::from)?;
            write_json(&c.out, &format!("{}.classify.json", stem(model)), &r)?;
        }
        Command::Evolve { model, from, to } => {
            let m = load(model)?;
            require_exact(c, &m)?;
            let n = c.horizon.unwrap_or(1024);
            let w = window_for(c, &m, Window::default_for(&m, n))?;
            let name = format!("{}.evolve.csv", stem(model));
            let writer = if c.rational {
                let s = marginal_sequence::<BigRational>(&m, *from, *to, n, w, EVOLVE_BUDGET)
                    .map_err(anyhow::Error::from)?;
                evolve_csv(&s, true)?
            } else {
                let s = marginal_sequence::<f64>(&m, *from, *to, n, w, EVOLVE_BUDGET).map_err(anyhow::Error::from)?;
                evolve_csv(&s, false)?
            };
            finish_csv(&c.out, &name, writer)?;
        }
        Command::Kernel { model } => {
            let m = load(model)?;
            let n = c.horizon.unwrap_or(256);
            let w = window_for(c, &m, Window::default_for(&m, n))?;
            let arrivals = m.arrival_set();
            let q = build_q::<f64>(&m, n, w, &arrivals).map_err(anyhow::Error::from)?;
            let t = renewal_sequence(&q, n);
            let mut wr = csv_writer();
            wr.write_record(["n", "x", "y", "Qn", "Tn"])?;
            for k in 0..=n {
                for &x in &arrivals {
                    for &y in &arrivals {
                        wr.write_record([
                            k.to_string(),
                            x.to_string(),
                            y.to_string(),
                            fmt17(q.q.get(k, x, y)),
                            fmt17(t.get(k, x, y)),
                        ])?;
                    }
                }
            }
            finish_csv(&c.out, &format!("{}.kernel.csv", stem(model)), wr)?;
        }
        Command::Spectrum { model } => {
            let m = load(model)?;
            let w = window_for(c, &m, Window { lo: -64, hi: 64 })?;
            let q = default_aggregate(&m).map_err(anyhow::Error::from)?;
            let s =
                power_iterate(&q, w, WeightSpec::Polynomial { delta: c.weight_delta }).map_err(anyhow::Error::from)?;
            let report = SpectrumReport {
                rho_psi: s.rho_psi,
                residual: s.residual,
                defect_max: s.max_defect(),
                markovian: s.markovian,
                gap: s.gap,
                window: (s.window.lo, s.window.hi),
                h: s.h.clone(),
                nu: s.nu.clone(),
            };
            write_json(&c.out, &format!("{}.spectrum.json", stem(model)), &report)?;
        }
        Command::Verify { model, suite } => {
            let m = load(model)?;
            require_exact(c, &m)?;
            let mut report = serde_json::Map::new();
            let mut failed = Vec::new();
            if matches!(suite, Suite::Identities | Suite::All) {
                let n = c.horizon.unwrap_or(40);
                let w = window_for(c, &m, Window::symmetric(64, &m).map_err(anyhow::Error::from)?)?;
                let exact = m.left.is_exact() && m.origin.is_exact() && m.right.is_exact();
                let r = if exact { identity_suite_exact(&m, n, w) } else { identity_suite_float(&m, n, w, 2f64.ln()) }
                    .map_err(anyhow::Error::from)?;
                if !r.passed {
                    failed.push("identities");
                }
                report.insert("identities".into(), serde_json::to_value(&r).unwrap());
            }
            if matches!(suite, Suite::Convergence | Suite::All) {
                let n = c.horizon.unwrap_or(4096);
                let w = window_for(c, &m, Window::default_for(&m, n))?;
                match convergence_suite(&m, n, w) {
                    Ok(r) => {
                        let g = r.gouezel_final();
                        if !(0.9..=1.1).contains(&g) {
                            failed.push("convergence");
                        }
                        report.insert("convergence".into(), serde_json::to_value(&r).unwrap());
                    }
                    Err(VerifyError::Unsupported(case)) if *suite == Suite::All => {
                        report.insert(
                            "convergence".into(),
                            serde_json::json!({ "skipped": format!("not applicable to {case}") }),
                        );
                    }
                    Err(e) => return Err(anyhow::Error::from(e).into()),
                }
            }
            if matches!(suite, Suite::Asymptotics | Suite::All) {
                let n = c.horizon.unwrap_or(4096);
                let r = asymptotics_suite(&m, 0, 0, n).map_err(anyhow::Error::from)?;
                if !r.passed {
                    failed.push("asymptotics");
                }
                report.insert("asymptotics".into(), serde_json::to_value(&r).unwrap());
            }
            report.insert("passed".into(), serde_json::json!(failed.is_empty()));
            write_json(&c.out, &format!("{}.verify.json", stem(model)), &report)?;
            if !failed.is_empty() {
                return Err(Failure::Verification(failed.join(", ")));
            }
        }
        Command::Simulate { model, from, paths } => {
            let m = load(model)?;
            let n = c.horizon.unwrap_or(64);
            let r = simulate(&m, *from, n, *paths, c.seed);
            write_json(&c.out, &format!("{}.simulate.json", stem(model)), &r)?;
            let mut wr = csv_writer();
            wr.write_record(["n", "y", "hits", "empirical"])?;
            for (k, counts) in &r.counts {
                for (y, h) in counts {
                    wr.write_record([k.to_string(), y.to_string(), h.to_string(), fmt17(r.empirical(*k, *y))])?;
                }
            }
            finish_csv(&c.out, &format!("{}.simulate.csv", stem(model)), wr)?;
        }
        Command::Fixtures => {
            for (name, m) in named() {
                write_json(&c.out, &format!("{name}.json"), &model_to_json(&m))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(which)) => {
            eprintln!("verification failed: {which}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}
