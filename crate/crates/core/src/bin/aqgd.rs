use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use aqgd_core::harness::{
    fit_gaps, quantile_rows, run_experiment, run_repeats, sweep, verify_suite, write_plot_files, write_quantiles,
    ExperimentConfig, ExperimentOutcome, HarnessError,
};
use aqgd_core::lqr::{optimal_policy, random_stable_instance_with};
use aqgd_core::optimize::read_csv;

#[derive(Parser)]
#[command(name = "aqgd", version, about = "Adaptively quantized gradient descent experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the run seed (and, for gen-instance, the instance seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; subcommands print to stdout when it is absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of seeded repetitions for `run`.
    #[arg(long, global = true, default_value_t = 1)]
    repeats: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a random Schur-stable LQR instance in the system text format.
    GenInstance {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Spectral radius of the generated A.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 5.0)]
        q_scale: f64,
        #[arg(long, default_value_t = 5.0)]
        r_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
    },
    /// Runs the experiment described by a `key = value` config file.
    Run { config: PathBuf },
    /// Runs a config at every point of a grid, e.g. `--axis bits=4,8,12`.
    Sweep {
        config: PathBuf,
        #[arg(long = "axis", required = true, value_parser = parse_axis)]
        axes: Vec<(String, Vec<String>)>,
    },
    /// Fits the log-linear rate of a trace CSV over `[from, to)`.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value_t = 0)]
        from: usize,
        #[arg(long)]
        to: Option<usize>,
    },
    /// Runs the invariant suite.
    Verify,
}

fn parse_axis(s: &str) -> Result<(String, Vec<String>), String> {
    let (key, values) = s.split_once('=').ok_or("expected key=v1,v2,...")?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(format!("axis `{key}` has no values"));
    }
    Ok((key.trim().to_string(), values))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_config(path: &Path, global: &Global) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_text(&text)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = Some(out.clone());
    }
    // Relative system paths resolve against the config file.
    if let (Some(sys), Some(dir)) = (&cfg.system, path.parent()) {
        if sys.is_relative() && !sys.exists() {
            cfg.system = Some(dir.join(sys));
        }
    }
    Ok(cfg)
}

fn gen_instance(global: &Global, cmd: &Command) -> Result<i32, HarnessError> {
    let Command::GenInstance {
        n,
        m,
        rho,
        q_scale,
        r_scale,
        noise_scale,
    } = *cmd
    else {
        unreachable!()
    };
    if n == 0 || m == 0 || !(0.0..1.0).contains(&rho) {
        return Err(HarnessError::Config("need n, m ≥ 1 and 0 ≤ rho < 1".into()));
    }
    let seed = global.seed.unwrap_or(0);
    let sys = random_stable_instance_with(n, m, seed, rho, q_scale, r_scale, noise_scale);
    match optimal_policy(&sys, 1e-12) {
        Ok(opt) => info!("instance seed {seed}: optimal cost {:e}", opt.cost),
        Err(e) => warn!("no optimal policy: {e}"),
    }
    emit(global.out.as_deref(), &sys.to_text())?;
    Ok(0)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn status(out: &ExperimentOutcome) -> i32 {
    if out.summary.violations == 0 {
        0
    } else {
        warn!(
            "{} invariant violations: {}",
            out.summary.violations, out.summary.invariants
        );
        2
    }
}

fn run_single(cfg: &ExperimentConfig) -> Result<i32, HarnessError> {
    let out = match run_experiment(cfg) {
        Ok(o) => o,
        Err(HarnessError::Divergence { detail, partial }) => {
            if let (Some(trace), Some(path)) = (&partial, &cfg.out) {
                fs::write(path, trace.to_csv_string())?;
                info!("partial trace written to {}", path.display());
            }
            return Err(HarnessError::Divergence { detail, partial });
        }
        Err(e) => return Err(e),
    };
    match &cfg.out {
        Some(path) => {
            out.write(path)?;
            let dir = path
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let stem = path
                .file_stem()
                .map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
            write_plot_files(dir, &[(stem, &out.trace)])?;
            info!("trace written to {}", path.display());
        }
        None => print!("{}", out.summary.to_text()),
    }
    Ok(status(&out))
}

fn run_many(cfg: &ExperimentConfig, count: usize) -> Result<i32, HarnessError> {
    let outs = run_repeats(cfg, count)?;
    let gaps: Vec<Vec<f64>> = outs.iter().map(|o| o.trace.gaps()).collect();
    let rows = quantile_rows(&gaps);
    match &cfg.out {
        Some(path) => {
            let dir = path
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let mut plots = Vec::with_capacity(outs.len());
            for o in &outs {
                let p = with_suffix(path, &format!("_seed{}.csv", o.config.seed));
                o.write(&p)?;
                plots.push((format!("{}", p.file_stem().unwrap().to_string_lossy()), &o.trace));
            }
            fs::create_dir_all(dir)?;
            write_quantiles(&with_suffix(path, "_quantiles.csv"), &rows)?;
            write_plot_files(dir, &plots)?;
        }
        None => {
            for o in &outs {
                println!(
                    "seed {}: final gap {:e}, violations {}",
                    o.config.seed, o.summary.final_gap, o.summary.violations
                );
            }
            if let Some(last) = rows.last() {
                println!(
                    "final median gap {:e} (min {:e}, max {:e})",
                    last.median, last.min, last.max
                );
            }
        }
    }
    Ok(outs.iter().map(status).max().unwrap_or(0))
}

fn run_cmd(global: &Global, config: &Path) -> Result<i32, HarnessError> {
    let cfg = load_config(config, global)?;
    match global.repeats {
        0 => Err(HarnessError::Config("--repeats must be at least 1".into())),
        1 => run_single(&cfg),
        n => run_many(&cfg, n),
    }
}

fn sweep_cmd(global: &Global, config: &Path, axes: &[(String, Vec<String>)]) -> Result<i32, HarnessError> {
    let base = load_config(config, global)?;
    let points = sweep(&base, axes)?;
    let mut table = String::new();
    for (k, _) in axes {
        write!(table, "{k},").unwrap();
    }
    table.push_str("exit_code,final_gap,rate_slope,total_bits,violations,error\n");
    for p in &points {
        for (_, v) in &p.assignments {
            write!(table, "{v},").unwrap();
        }
        match &p.result {
            Ok(s) => {
                let slope = s.rate.map_or_else(String::new, |r| format!("{:e}", r.slope));
                writeln!(
                    table,
                    "{},{:e},{slope},{},{},",
                    p.exit_code, s.final_gap, s.total_bits, s.violations
                )
                .unwrap();
            }
            Err(e) => writeln!(table, "{},,,,,\"{}\"", p.exit_code, e.replace('"', "'")).unwrap(),
        }
    }
    emit(global.out.as_deref(), &table)?;
    Ok(points.iter().map(|p| p.exit_code).max().unwrap_or(0))
}

fn fit_cmd(global: &Global, csv: &Path, from: usize, to: Option<usize>) -> Result<i32, HarnessError> {
    let records = read_csv(BufReader::new(fs::File::open(csv)?))?;
    let gaps: Vec<f64> = records.iter().map(|r| r.f_gap).collect();
    let fit = fit_gaps(&gaps, from..to.unwrap_or(gaps.len()))?;
    let text = format!(
        "slope = {:e}\nfactor = {:e}\nr_squared = {}\nwindow = {}..{}\npoints = {}\n",
        fit.slope,
        fit.slope.exp(),
        fit.r_squared,
        fit.window.0,
        fit.window.1,
        fit.points
    );
    emit(global.out.as_deref(), &text)?;
    Ok(0)
}

fn verify_cmd(global: &Global) -> Result<i32, HarnessError> {
    let checks = verify_suite(global.seed.unwrap_or(0));
    let mut text = String::new();
    for c in &checks {
        writeln!(
            text,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )
        .unwrap();
    }
    emit(global.out.as_deref(), &text)?;
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 2 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        cmd @ Command::GenInstance { .. } => gen_instance(&cli.global, cmd),
        Command::Run { config } => run_cmd(&cli.global, config),
        Command::Sweep { config, axes } => sweep_cmd(&cli.global, config, axes),
        Command::Fit { csv, from, to } => fit_cmd(&cli.global, csv, *from, *to),
        Command::Verify => verify_cmd(&cli.global),
    };
    let code = result.unwrap_or_else(|e| {
        let _ = io::Write::flush(&mut io::stdout());
        eprintln!("aqgd: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
