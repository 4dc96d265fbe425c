use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rominv::inversion::{KktSolver, Weighting};
use rominv::sensitivity::Output;
use rominv_harness::config::ExperimentConfig;
use rominv_harness::error::{io_err, Result};
use rominv_harness::io::{fmt_num, write_json, Table};
use rominv_harness::scenario::{self, SCENARIOS};

#[derive(Parser)]
#[command(name = "rominv", version, about = "Reduced-order-model resistivity inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate 1D data for a phantom (decimated series plus transfer values).
    Synthesize {
        /// Keep every k-th sample in data.csv.
        #[arg(long, default_value_t = 1000)]
        stride: usize,
    },
    /// Invert 1D data, synthesized from --phantom or read from --data.
    Invert1d {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Invert 2D data synthesized on the fine grid from --phantom.
    Invert2d,
    /// Optimal grid nodes of the reference medium.
    Grids {
        #[arg(long, default_value_t = 5)]
        m: usize,
    },
    /// Condition numbers of the Padé systems for m = 2..6.
    Condnum,
    /// Sensitivity maps of one 2D source at the constant medium.
    Sensmap,
    /// Run a named scenario.
    Scenario {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        name: String,
    },
}

#[derive(Args)]
struct Flags {
    /// JSON config file; its keys override the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    phantom: Option<String>,
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    m0: Option<usize>,
    #[arg(long, global = true)]
    m0_2d: Option<usize>,
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    shift: Option<f64>,
    #[arg(long, global = true)]
    n_gn: Option<usize>,
    #[arg(long, global = true)]
    fine_n: Option<usize>,
    #[arg(long, global = true)]
    coarse_n: Option<usize>,
    #[arg(long, global = true)]
    reference_n: Option<usize>,
    /// Misfit-adaptive weights instead of the plain H1 seminorm.
    #[arg(long, global = true)]
    adaptive: bool,
    #[arg(long, global = true)]
    c_phi: Option<f64>,
    /// Singular components dropped from the 1D KKT solve.
    #[arg(long, global = true)]
    discard: Option<usize>,
    /// Fit (log θ, log c) instead of the continued-fraction coefficients.
    #[arg(long, global = true)]
    pole_residue: bool,
    #[arg(long, global = true)]
    save_iterates: bool,
    #[arg(long, global = true)]
    no_cache: bool,
    /// Skip the unit-medium calibration of the 2D target.
    #[arg(long, global = true)]
    no_calibration: bool,
}

fn build_config(flags: &Flags, scenario: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        scenario: scenario.into(),
        ..Default::default()
    };
    if let Some(d) = &flags.out_dir {
        cfg.cache_dir = Some(d.join("cache"));
        cfg.out_dir = d.clone();
    }
    if let Some(v) = &flags.phantom {
        cfg.phantom = v.clone();
    }
    cfg.noise = flags.noise.unwrap_or(cfg.noise);
    cfg.seed = flags.seed.unwrap_or(cfg.seed);
    cfg.m0 = flags.m0.unwrap_or(cfg.m0);
    cfg.m0_2d = flags.m0_2d.unwrap_or(cfg.m0_2d);
    if let Some(v) = &flags.family {
        cfg.family = v.clone();
    }
    cfg.shift = flags.shift.unwrap_or(cfg.shift);
    cfg.n_gn = flags.n_gn.or(cfg.n_gn);
    cfg.fine_n = flags.fine_n.unwrap_or(cfg.fine_n);
    cfg.coarse_n = flags.coarse_n.unwrap_or(cfg.coarse_n);
    cfg.reference_n = flags.reference_n.unwrap_or(cfg.reference_n);
    if flags.adaptive || flags.c_phi.is_some() {
        cfg.weighting = Some(Weighting::Adaptive { c_phi: flags.c_phi });
    }
    if let Some(k) = flags.discard {
        cfg.solver = KktSolver::TruncatedSvd { discard: k };
    }
    if flags.pole_residue {
        cfg.output = Output::LogPoleResidue;
    }
    cfg.save_iterates = flags.save_iterates;
    if flags.no_calibration {
        cfg.calibrate_2d = false;
    }
    if flags.no_cache {
        cfg.cache_dir = None;
    }
    if let Some(path) = &flags.config {
        let text = std::fs::read(path).map_err(io_err(path))?;
        cfg = cfg.merge_json(&serde_json::from_slice(&text)?)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let scenario_name = match &cli.command {
        Command::Scenario { name } => name.clone(),
        Command::Invert1d { .. } => "1d-inversion".into(),
        Command::Invert2d => String::new(),
        Command::Grids { .. } => "grids".into(),
        Command::Condnum => "table-ratcond".into(),
        Command::Sensmap => "2d-sensitivity".into(),
        Command::Synthesize { .. } => "synthesize".into(),
    };
    let mut cfg = build_config(&cli.flags, &scenario_name)?;
    let manifest = match cli.command {
        Command::Scenario { .. } | Command::Condnum | Command::Sensmap => scenario::run_scenario(&cfg)?,
        Command::Invert1d { data: None } => scenario::run_scenario(&cfg)?,
        Command::Invert2d => {
            cfg.scenario = format!("2d-{}", cfg.phantom);
            scenario::run_scenario(&cfg)?
        }
        Command::Invert1d { data: Some(path) } => {
            let d = scenario::read_series(&path)?;
            let run = scenario::invert_data_1d(&cfg, &cfg.phantom, &d, &scenario::inversion_config_1d(&cfg, &cfg.phantom))?;
            let mut t = Table::new(&["x", "r"]);
            for (x, r) in run.grid.edge_positions().iter().zip(run.result.r.values()) {
                t.push_numbers(&[*x, *r])?;
            }
            let out = cfg.out_dir.join("invert1d").join("reconstruction.csv");
            t.write(&out)?;
            println!("m = {}, wrote {}", run.result.m, out.display());
            return Ok(());
        }
        Command::Grids { m } => {
            let cache = rominv_harness::cache::ReferenceCache::new(cfg.cache_dir.clone());
            let family = rominv::rational::NodeFamily::by_name(&cfg.family, m)?;
            let g = cache.get(&family, cfg.reference_n)?;
            let mut t = Table::new(&["j", "node_primary", "node_dual"]);
            for j in 0..m {
                t.push(vec![(j + 1).to_string(), fmt_num(g.primary[j]), fmt_num(g.dual[j])])?;
            }
            let out = cfg.out_dir.join("grids").join(format!("{}-m{m}.csv", cfg.family));
            t.write(&out)?;
            println!("wrote {}", out.display());
            return Ok(());
        }
        Command::Synthesize { stride } => {
            let dir = cfg.out_dir.join("synthesize");
            for f in scenario::synthesize_files(&cfg, stride, &dir)? {
                println!("wrote {}", f.display());
            }
            write_json(&dir.join("config.json"), &cfg)?;
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
