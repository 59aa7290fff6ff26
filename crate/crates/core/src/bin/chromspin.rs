use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use chromspin::dynamics::{build_generator, Dephasing, DriveSet, QuantumState, Rates};
use chromspin::fitting::{fit_with_guesses, roundtrip_suite, FitData, FitModel, ModelId};
use chromspin::params::{load_config, RunConfig, CONFIG_ENV, DEFAULT_SEED};
use chromspin::sequences::{run_protocol, ProtocolId, ProtocolSpec};
use chromspin::suite::{reference_suite, run_check, suite_table};
use chromspin::Error;

#[derive(Parser)]
#[command(name = "chromspin", version, about = "Optical spin simulator for Cr4+ ensembles in SiC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol and write the sweep.
    Simulate {
        /// JSON config; falls back to $CHROMSPIN_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent. A `<out>.meta.json` sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed (default 0xC0FFEE2026).
        #[arg(long)]
        seed: Option<u64>,
        /// Protocol id, replacing the configured one with its default sweep.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Fit a model to x,y[,sigma] CSV data and write a JSON report.
    Fit {
        /// CSV file with a header row.
        data: PathBuf,
        #[arg(long)]
        model: String,
        /// Modulation components of eseem_model.
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every reference check and write the summary table.
    #[command(name = "paper-suite")]
    PaperSuite {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for summary.md and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Quick internal consistency checks.
    Selftest,
}

enum Fail {
    Usage(String),
    Run(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Run(e)
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Run(Error::Io(e))
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::Run(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn resolve_config(path: Option<PathBuf>, required: bool) -> Result<RunConfig, Fail> {
    let path = path.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(load_config(&read(&p)?)?),
        None if required => Err(Fail::Usage(format!("--config is required (or set {CONFIG_ENV})"))),
        None => Ok(RunConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Fail> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn simulate(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    protocol: Option<String>,
    format: Format,
) -> Result<(), Fail> {
    let mut cfg = resolve_config(config, true)?;
    if let Some(s) = seed {
        cfg.detection.rng_seed = s;
    }
    if let Some(p) = protocol {
        let id = ProtocolId::from_str(&p).map_err(|e| Fail::Usage(e.to_string()))?;
        if id != cfg.protocol.id {
            let mut spec = ProtocolSpec::new(id);
            spec.settings = cfg.protocol.settings.clone();
            cfg.protocol = spec;
        }
    }
    cfg.validate()?;
    let r = run_protocol(&cfg)?;
    let text = match format {
        Format::Csv => r.to_csv(),
        Format::Json => serde_json::to_string_pretty(&r).expect("sweep serializes") + "\n",
    };
    emit(out.as_deref(), &text)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "protocol": cfg.protocol.id.as_str(),
        "seed": r.seed,
        "config_hash": r.config_hash,
        "config": cfg,
    });
    match out {
        Some(p) => fs::write(sidecar(&p), serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?,
        None => eprintln!("seed={} config_hash={}", r.seed, r.config_hash),
    }
    Ok(())
}

fn fit(data: PathBuf, model: String, components: usize, out: Option<PathBuf>) -> Result<(), Fail> {
    let id = ModelId::from_str(&model).map_err(|e| Fail::Usage(e.to_string()))?;
    let (d, defaulted) = FitData::from_csv(&read(&data)?)?;
    if defaulted {
        eprintln!("warning: no sigma column, using sqrt(max(y, 1))");
    }
    let m = if id == ModelId::EseemModel {
        FitModel::eseem(components, Default::default())
    } else {
        FitModel::new(id)
    };
    let r = fit_with_guesses(&m, &d, &m.default_start())?;
    if !r.converged {
        eprintln!("warning: fit stopped after {} iterations without converging", r.iterations);
    }
    emit(out.as_deref(), &(r.to_json() + "\n"))
}

fn paper_suite(config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Fail> {
    let mut cfg = resolve_config(config, false)?;
    if let Some(s) = seed {
        cfg.detection.rng_seed = s;
    }
    let rows = reference_suite(&cfg);
    for r in &rows {
        println!("{}", r.line());
    }
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("summary.md"), suite_table(&rows))?;
        let doc = json!({
            "seed": cfg.detection.rng_seed,
            "config_hash": cfg.hash(),
            "rows": rows,
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc).expect("rows serialize") + "\n")?;
    }
    let errors: Vec<_> = rows.iter().filter_map(|r| r.error.as_ref().map(|e| (r.id, e))).collect();
    for (id, e) in &errors {
        eprintln!("error: check={id} {e}");
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Fail::Run(Error::Numerical(format!("{} check(s) raised errors", errors.len()))))
    }
}

fn selftest() -> Result<(), Fail> {
    let mut ok = true;
    let mut report = |name: &str, pass: bool, what: String| {
        ok &= pass;
        println!("{} {name}: {what}", if pass { "PASS" } else { "FAIL" });
    };

    let cfg = RunConfig::default();
    let rates = Rates::new(&cfg.defect, cfg.temperature_k, Dephasing::Inhomogeneous)?;
    let g = build_generator(&rates, &DriveSet::pump([cfg.defect.pump_rate_per_us; 3], 1.0), &[0.0; 3])?;
    let step = g.propagator(1.0);
    let mut s = QuantumState::thermal();
    for _ in 0..1000 {
        s = QuantumState::from_vec(&(step * s.to_vec()));
    }
    let tr = (s.trace().re - 1.0).abs();
    report("trace", tr < 1e-9, format!("{tr:.1e} after 1000 steps"));
    report("positivity", s.min_eigenvalue() >= -1e-9, format!("min eigenvalue {:.1e}", s.min_eigenvalue()));

    let mut rabi = cfg.clone();
    rabi.protocol = ProtocolSpec::new(ProtocolId::Rabi);
    let a = run_protocol(&rabi)?.to_csv();
    let b = run_protocol(&rabi)?.to_csv();
    report("determinism", a == b, "two seeded Rabi runs give identical CSV".into());

    let rt = roundtrip_suite(5, DEFAULT_SEED)?;
    let worst = rt.iter().map(|r| r.successes).min().unwrap_or(0);
    report("round trip", worst == 5, format!("worst model {worst}/5"));

    let row = run_check(11, &cfg);
    report("scalars", row.passed, row.measured);
    if ok {
        Ok(())
    } else {
        Err(Fail::Run(Error::Numerical("self test failed".into())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            protocol,
            format,
        } => simulate(config, out, seed, protocol, format),
        Command::Fit {
            data,
            model,
            components,
            out,
        } => fit(data, model, components, out),
        Command::PaperSuite { config, out, seed } => paper_suite(config, out, seed),
        Command::Selftest => selftest(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: kind=usage msg={msg}");
            ExitCode::from(2)
        }
        Err(Fail::Run(e)) => {
            eprintln!("error: kind={} msg={e}", e.kind());
            ExitCode::from(1)
        }
    }
}
