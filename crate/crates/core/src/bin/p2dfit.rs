//! Command-line surface: simulate cycling protocols, generate synthetic
//! data, analyze identifiability, and run the staged identification
//! pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use p2dfit::config::{ModelKind, RunConfig};
use p2dfit::error::{Error, Result};
use p2dfit::fit::{self, DataSet, PipelineConfig, ScenarioKind};
use p2dfit::params::{self, group, ScalingTransform};
use p2dfit::protocol::{build_model, Driver, ProtocolStep, StepKind, TempSignal};

#[derive(Parser)]
#[command(name = "p2dfit", version, about = "Normalized P2D cell models and grouped-parameter identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; compiled-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the synthetic-data RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel objective evaluations (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Verbose logging.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol on one model and write trace CSVs.
    Simulate {
        /// Forward model: spm_eq | spm | p2d | p2dt.
        #[arg(long, default_value = "p2d")]
        model: String,
    },
    /// Generate the synthetic cycling data set.
    Synth,
    /// Identifiability analysis: exponent matrix, rank, scaling families,
    /// and a numeric equivalence check.
    Identifiability,
    /// Run the staged identification pipeline on a data file.
    Identify {
        /// Cycling data CSV (time_s,current_A,voltage_V,temperature_K).
        #[arg(long)]
        data: PathBuf,
        /// Start from the nominal parameters perturbed by the configured
        /// factor (for synthetic-recovery runs).
        #[arg(long)]
        perturb: bool,
        /// Run the warm-started low-current P2D refinement after stage 4.
        #[arg(long)]
        refine: bool,
    },
    /// Print the default configuration as TOML.
    Config,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::config(format!("parameter file `{}` does not exist", path.display())));
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, model: &str) -> Result<()> {
    let kind: ModelKind = model.parse()?;
    let grouped = group(&cfg.cell)?;
    let trace = fit::simulate_configured_protocol(cfg, &grouped, kind)?;

    std::fs::create_dir_all(out)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let trace_path = out.join("trace.csv");
    std::fs::write(&trace_path, &buf)?;

    // Per-panel plot data, mirroring the current/voltage/temperature figure
    // layout.
    let panels: [(&str, &str, fn(&p2dfit::protocol::TraceRecord) -> f64); 3] = [
        ("current", "time_s,current_A", |r| r.current_a),
        ("voltage", "time_s,voltage_V", |r| r.voltage_v),
        ("temperature", "time_s,temperature_K", |r| r.temp_k),
    ];
    for (name, header, pick) in panels {
        let mut s = String::with_capacity(trace.len() * 24);
        s.push_str(header);
        s.push('\n');
        for r in &trace.records {
            s.push_str(&format!("{},{}\n", r.t, pick(r)));
        }
        write_file(out, &format!("panel_{name}.csv"), &s)?;
    }
    println!("wrote {} ({} records) and 3 plot panels to {}", trace_path.display(), trace.len(), out.display());
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let grouped = group(&cfg.cell)?;
    let (data, comments) = fit::generate_synthetic(cfg, &grouped)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &comments)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("synthetic.csv");
    std::fs::write(&path, &buf)?;
    println!("wrote {} ({} samples, seed {})", path.display(), data.samples.len(), cfg.synth.seed);
    Ok(())
}

fn cmd_identifiability(cfg: &RunConfig) -> Result<()> {
    let m = params::ident::identifiability_matrix();
    println!("Electrolyte-phase grouping system log(theta_group) = M log(theta_phys):\n");
    println!("{m}");
    let b = cfg.cell.b;
    println!("rank(M) at b = {b}: {}", m.rank(b));
    let dirs = params::ident::nullspace_scalings(&m, b);
    if dirs.is_empty() {
        println!("globally identifiable (no scaling freedom)");
    } else {
        println!("nullspace dimension {} — scaling families:", dirs.len());
        for (i, d) in dirs.iter().enumerate() {
            let terms: Vec<String> = d
                .col_labels
                .iter()
                .zip(&d.exponents)
                .filter(|(_, e)| **e != 0.0)
                .map(|(l, e)| format!("{l}^{e}"))
                .collect();
            println!("  family {}: {}", i + 1, terms.join(" * "));
        }
    }

    let solid = params::ident::solid_phase_matrix();
    println!("\nSolid-phase system:\n\n{solid}");
    for d in &params::ident::nullspace_scalings(&solid, b) {
        let terms: Vec<String> =
            d.col_labels.iter().zip(&d.exponents).map(|(l, e)| format!("{l}^{e}")).collect();
        println!("scaling family: {}", terms.join(" * "));
    }

    // Numeric confirmation: a solid scaling with mu = 3 leaves the grouped
    // set and a short P2D voltage trace unchanged.
    let phys = cfg.cell;
    let s = ScalingTransform::new(3.0, 1.0, 1.0)?;
    let scaled = params::apply_scaling(&phys, &s)?;
    let g0 = group(&phys)?;
    let g1 = group(&scaled)?;
    println!("\nNumeric confirmation (mu = 3 solid scaling):");
    println!("  max relative grouped difference: {:.3e}", g0.max_relative_difference(&g1));
    let steps = vec![ProtocolStep {
        kind: StepKind::CurrentControl { current_a: cfg.cell.i_ref },
        time_limit_s: Some(10.0 * cfg.solver.dt_high_s),
        v_cutoff: None,
        i_cutoff_a: None,
    }];
    let driver = Driver::from_config(cfg, TempSignal::Constant(cfg.cell.t_ref))?;
    let mut m0 = build_model(ModelKind::P2d, &g0, cfg)?;
    let mut m1 = build_model(ModelKind::P2d, &g1, cfg)?;
    let t0 = driver.run_protocol(m0.as_mut(), &steps)?;
    let t1 = driver.run_protocol(m1.as_mut(), &steps)?;
    let max_dv = t0
        .records
        .iter()
        .zip(&t1.records)
        .map(|(a, b)| (a.voltage_v - b.voltage_v).abs())
        .fold(0.0f64, f64::max);
    println!("  max |dv| over a 10-step 1C P2D trace: {max_dv:.3e} V");
    Ok(())
}

fn cmd_identify(cfg: &RunConfig, out: &Path, data_path: &Path, perturb: bool, refine: bool) -> Result<()> {
    let text = std::fs::read_to_string(data_path)
        .map_err(|e| Error::config(format!("cannot read data file `{}`: {e}", data_path.display())))?;
    let data = DataSet::from_csv(&text, cfg.cell.i_ref)?;
    let nominal = group(&cfg.cell)?;
    let start = if perturb { perturbed_start(&nominal, cfg.fit.perturbation) } else { nominal };
    let pipeline =
        PipelineConfig { stages: ScenarioKind::STAGES.to_vec(), refine: refine || cfg.fit.refine };
    let report = fit::staged_pipeline(&data, &start, cfg, &pipeline);

    let table = report.table();
    print!("{table}");
    write_file(out, "report.txt", &table)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(out, "report.json", &json)?;
    let mut theta_txt = String::new();
    for (k, v) in report.grouped.main_entries() {
        theta_txt.push_str(&format!("{k} = {v}\n"));
    }
    write_file(out, "theta_star.txt", &theta_txt)?;

    if let Some(failure) = &report.failure {
        return Err(Error::Pipeline { stage: "pipeline".into(), reason: failure.clone() });
    }
    Ok(())
}

/// Alternating ±factor perturbation of the 13 fitted grouped parameters.
fn perturbed_start(nominal: &params::GroupedParameterSet, factor: f64) -> params::GroupedParameterSet {
    let mut start = *nominal;
    let mut up = true;
    for sc in ScenarioKind::STAGES {
        for p in fit::stage_subset(sc) {
            let v = p.extract(nominal);
            let f = if up { 1.0 + factor } else { 1.0 - factor };
            p.apply(v * f, &mut start, nominal);
            up = !up;
        }
    }
    start
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let level = if cli.common.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).init();
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Simulate { model } => cmd_simulate(&cfg, &cli.common.out, model),
        Command::Synth => cmd_synth(&cfg, &cli.common.out),
        Command::Identifiability => cmd_identifiability(&cfg),
        Command::Identify { data, perturb, refine } => {
            cmd_identify(&cfg, &cli.common.out, data, *perturb, *refine)
        }
        Command::Config => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
