//! Command line front end.
//!
//! Exit codes: 0 success (or every requested verdict verified), 1
//! configuration error, 2 a requested verdict failed, 3 a requested verdict
//! is undecidable, 4 a module error during a run.

use crate::config::{ExperimentDecl, ExperimentKind, OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::hypotheses::check_hypotheses;
use crate::lab;
use crate::noise::{uniform_grid, NoiseModel};
use crate::sde::Integrator;
use crate::yw::{Modulus, YwSequence};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_UNDECIDABLE: i32 = 3;
pub const EXIT_MODULE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "jumpsde", version, about = "Jump SDE simulation and hypothesis checks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides `threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the hypotheses for one system.
    Check {
        /// System name; defaults to `check.system`.
        system: Option<String>,
        /// Verdict ids gating the exit code (repeatable).
        #[arg(long = "theorem")]
        theorems: Vec<String>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Simulate paths.
    Simulate(ExperimentArg),
    /// Shared-noise coupling of two initial values.
    Couple(ExperimentArg),
    /// Cauchy refinement study.
    Converge(ExperimentArg),
    /// Phase scan over (alpha, p).
    Scan(ExperimentArg),
    /// Branching system with immigration.
    Cbi(ExperimentArg),
    /// Second-moment bound check.
    Moment(ExperimentArg),
    /// Print the Yamada–Watanabe levels of a modulus.
    Yw {
        /// `power:0.5[:scale]`, `linear:slope` or `log-osgood:scale`.
        #[arg(long)]
        modulus: String,
        #[arg(long, default_value_t = 5)]
        levels: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArg {
    /// Experiment name; all experiments of this kind when omitted.
    #[arg(long)]
    pub experiment: Option<String>,
}

/// Parses `args` and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_MODULE,
            }
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<(RunConfig, PathBuf)> {
    let path = global.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = global.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = global.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        cfg.threads = Some(t);
    }
    if let Some(f) = global.format {
        cfg.format = f.into();
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&global.out, &cfg.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    Ok((cfg, out))
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Yw { modulus, levels } => run_yw(modulus, *levels, cli.global.out.as_deref()),
        Command::Check { system, theorems, json } => {
            let (cfg, _) = load_config(&cli.global)?;
            let name = system
                .clone()
                .or_else(|| cfg.check.as_ref().map(|c| c.system.clone()))
                .ok_or_else(|| Error::Config("no system given and no [check] section".into()))?;
            let requested: Option<Vec<String>> = if !theorems.is_empty() {
                Some(theorems.clone())
            } else {
                cfg.check.as_ref().filter(|c| c.system == name).and_then(|c| c.theorems.clone())
            };
            let (sys, nu0, nu1) = cfg.system(&name)?;
            let report = pool(cfg.threads)?.install(|| check_hypotheses(&sys, nu0.as_ref(), nu1.as_ref()));
            if *json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render_text());
            }
            let code = report.exit_code(requested.as_deref());
            if let Some(ids) = &requested {
                eprintln!("requested verdicts: {}", ids.join(", "));
            }
            Ok(code)
        }
        Command::Simulate(a) => run_kind(cli, ExperimentKind::Simulate, a),
        Command::Couple(a) => run_kind(cli, ExperimentKind::Couple, a),
        Command::Converge(a) => run_kind(cli, ExperimentKind::Converge, a),
        Command::Scan(a) => run_kind(cli, ExperimentKind::Scan, a),
        Command::Cbi(a) => run_kind(cli, ExperimentKind::Cbi, a),
        Command::Moment(a) => run_kind(cli, ExperimentKind::Moment, a),
    }
}

fn run_yw(modulus: &str, levels: usize, out: Option<&Path>) -> Result<i32> {
    let m = Modulus::parse(modulus)?;
    let seq = YwSequence::new(m, levels)?;
    for k in 0..=levels {
        println!("a_{k} = {:.12e}", seq.level(k));
    }
    if let Some(dir) = out {
        let mut w = OutputWriter::new(dir, "yw")?;
        let levels: Vec<f64> = (0..=levels).map(|k| seq.level(k)).collect();
        w.json("levels.json", &serde_json::json!({ "modulus": seq.modulus, "levels": levels }))?;
        w.finish(&serde_json::json!({ "modulus": modulus }), None)?;
    }
    Ok(EXIT_OK)
}

fn run_kind(cli: &Cli, kind: ExperimentKind, arg: &ExperimentArg) -> Result<i32> {
    let (cfg, out) = load_config(&cli.global)?;
    let selected: Vec<&ExperimentDecl> = cfg
        .experiments
        .iter()
        .filter(|e| e.kind == kind && arg.experiment.as_ref().is_none_or(|n| &e.name == n))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(match &arg.experiment {
            Some(n) => format!("no {} experiment named {n:?}", kind.name()),
            None => format!("the configuration has no {} experiments", kind.name()),
        }));
    }
    let pool = pool(cfg.threads)?;
    for e in selected {
        pool.install(|| run_experiment(&cfg, e, &out))?;
        eprintln!("{}: wrote {}", e.name, out.join(&e.name).display());
    }
    Ok(EXIT_OK)
}

/// Collects output files with their hashes and writes the manifest.
struct OutputWriter {
    dir: PathBuf,
    files: Vec<(String, String)>,
    kind: String,
}

impl OutputWriter {
    fn new(dir: &Path, kind: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputWriter { dir: dir.to_path_buf(), files: vec![], kind: kind.to_string() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(self, extra: &serde_json::Value, cfg: Option<&RunConfig>) -> Result<()> {
        let files: Vec<serde_json::Value> = self.files.iter().map(|(n, h)| serde_json::json!({ "file": n, "sha256": h })).collect();
        let manifest = serde_json::json!({
            "kind": self.kind,
            "config_sha256": cfg.map(RunConfig::hash),
            "master_seed": cfg.map(|c| c.master_seed),
            "versions": {
                "jumpsde": env!("CARGO_PKG_VERSION"),
                "noise_format": crate::noise::FORMAT_VERSION,
            },
            "parameters": extra,
            "files": files,
        });
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(self.dir.join("manifest.json"), s)?;
        Ok(())
    }
}

fn run_experiment(cfg: &RunConfig, e: &ExperimentDecl, out: &Path) -> Result<()> {
    let mut w = OutputWriter::new(&out.join(&e.name), e.kind.name())?;
    let fmt = cfg.format;
    let spec = cfg.experiment_spec(e)?;
    match e.kind {
        ExperimentKind::Simulate => {
            let model = NoiseModel::new(&spec.noise, spec.base_cells)?;
            let integ = Integrator::new(Arc::new(spec.system.clone()), Arc::clone(&model))?;
            let grid = uniform_grid(spec.horizon(), spec.base_cells);
            let noise = model.sample(&grid, spec.first_stream)?;
            let path = integ.simulate(spec.x0, &noise, spec.mode)?;
            if fmt.csv() {
                w.write("path.csv", path.csv().as_bytes())?;
            }
            if fmt.json() {
                w.json("path.json", &path)?;
            }
            if spec.paths > 1 {
                let summary = lab::run_ensemble(&spec)?;
                if fmt.csv() {
                    w.write("summary.csv", summary.csv().as_bytes())?;
                }
                if fmt.json() {
                    w.json("summary.json", &summary)?;
                }
            }
        }
        ExperimentKind::Couple => {
            let r = lab::couple(&spec, e.x0, e.x0_b.expect("validated"))?;
            if fmt.csv() {
                w.write("difference.csv", r.diff_csv().as_bytes())?;
            }
            if fmt.json() {
                w.json("coupling.json", &r)?;
            }
        }
        ExperimentKind::Converge => {
            let r = lab::cauchy_refinement_study(&spec)?;
            if fmt.csv() {
                w.write("cauchy.csv", r.cauchy_csv().as_bytes())?;
            }
            if fmt.json() {
                w.json("cauchy.json", &r)?;
            }
        }
        ExperimentKind::Scan => {
            let t = cfg.scan_template(e)?;
            let r = lab::phase_scan(e.alphas.as_deref().unwrap_or(&[]), e.exponents.as_deref().unwrap_or(&[]), &t)?;
            if fmt.csv() {
                w.write("scan.csv", r.csv().as_bytes())?;
                w.write("scan.dat", r.dat().as_bytes())?;
            }
            if fmt.json() {
                w.json("scan.json", &r)?;
            }
        }
        ExperimentKind::Cbi => {
            let (params, alpha, nu1) = cfg.cbi_parts(&e.system)?;
            if !crate::hypotheses::corollary_inequality(params.q, alpha) {
                eprintln!("warning: 1/q + 1/alpha < 1; non-negativity and uniqueness are not covered");
            }
            let r = lab::cbi_experiment(params, alpha, nu1, e.x0, &spec)?;
            if fmt.csv() {
                w.write("summary.csv", r.summary.csv().as_bytes())?;
            }
            if fmt.json() {
                w.json("cbi.json", &r)?;
            }
        }
        ExperimentKind::Moment => {
            let r = lab::moment_bound_experiment(&spec)?;
            if fmt.csv() {
                w.write("moment.csv", r.csv().as_bytes())?;
            }
            if fmt.json() {
                w.json("moment.json", &r)?;
            }
        }
    }
    w.finish(&serde_json::to_value(e)?, Some(cfg))
}
