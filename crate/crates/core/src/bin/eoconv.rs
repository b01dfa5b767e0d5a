use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use eo_converter::config::{Format, RunConfig, OUTPUT_DIR_ENV};
use eo_converter::geometry::Preset;
use eo_converter::grid::build_grid;
use eo_converter::optics::match_fsr;
use eo_converter::pipeline::{
    emit_table1, injected_table1, reference_table1, run_pipeline, run_pipeline_cached, FieldCache, Table1,
};
use eo_converter::report;
use eo_converter::sweep::{optimize_scalar, sweep, Objective, Sampling, SweepSpec};

#[derive(Parser, Debug)]
#[command(name = "eoconv", version, about = "Electro-optic microwave-to-optical converter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for report files.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,

    /// Format printed to standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Worker threads for sweeps and multi-geometry runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// More log output (repeat for debug detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline for one configuration.
    Run {
        config: PathBuf,
        /// Also write the solved potential and optical fields.
        #[arg(long)]
        persist_fields: bool,
    },
    /// Parameter sweep, optionally refined to an optimum.
    Sweep(SweepArgs),
    /// Geometry comparison table for the four reference designs.
    Table1 {
        /// Use the reference coupling rates instead of solving the fields.
        #[arg(long)]
        inject_g0: bool,
    },
    /// Ring radius whose free spectral range equals the microwave frequency.
    MatchFsr {
        config: PathBuf,
        /// Radius search interval, µm.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 40.0])]
        bounds_um: Vec<f64>,
        /// Relative tolerance on the FSR.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Validate a configuration without solving.
    Check { config: PathBuf },
}

#[derive(Args, Debug)]
struct SweepArgs {
    config: PathBuf,
    /// Configuration key to vary, e.g. geometry.electrode_gap_um.
    #[arg(long)]
    param: Option<String>,
    /// Range `lo,hi` in the key's unit.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(f64))]
    range: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    /// Smallest admissible electrode gap, µm.
    #[arg(long)]
    min_gap_um: Option<f64>,
    /// Refine the best sample by golden-section search.
    #[arg(long)]
    optimize: bool,
}

fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Option<PathBuf> {
    cli.output_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.directory.clone()))
}

fn load(path: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn print_table(t: &Table1, format: Format) -> Result<()> {
    match format {
        Format::Text => print!("{}", t.to_text()),
        Format::Csv => print!("{}", t.to_csv()),
        Format::Json => println!("{}", serde_json::to_string_pretty(t)?),
    }
    Ok(())
}

fn pair(v: &[f64], flag: &str) -> Result<(f64, f64)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => bail!(eo_converter::Error::Config(format!("{flag} takes two comma-separated values"))),
    }
}

fn sweep_spec(args: &SweepArgs, cfg: &RunConfig) -> Result<SweepSpec> {
    let range = args.range.as_deref().map(|r| pair(r, "--range")).transpose()?;
    let mut spec = match (&args.param, &cfg.sweep) {
        (Some(p), _) => {
            let Some((lo, hi)) = range else {
                bail!(eo_converter::Error::Config("--range is required with --param".into()))
            };
            SweepSpec {
                parameter: p.clone(),
                lo,
                hi,
                points: args.points.unwrap_or(7),
                sampling: Sampling::default(),
                objective: Objective::default(),
                min_gap_um: None,
            }
        }
        (None, Some(s)) => s.clone(),
        (None, None) => bail!(eo_converter::Error::Config(
            "no sweep given: pass --param/--range or add a [sweep] section".into()
        )),
    };
    if let Some(r) = range {
        (spec.lo, spec.hi) = r;
    }
    if let Some(n) = args.points {
        spec.points = n;
    }
    if let Some(s) = args.sampling {
        spec.sampling = s;
    }
    if let Some(o) = args.objective {
        spec.objective = o;
    }
    if args.min_gap_um.is_some() {
        spec.min_gap_um = args.min_gap_um;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Check { config } => {
            let cfg = load(config)?;
            let geometry = cfg.build_geometry()?;
            let grid = build_grid(&geometry, &cfg.materials()?, cfg.resolution())?;
            println!(
                "{}: valid ({} × {} cells, {} polarization, {})",
                config.display(),
                grid.n_rho(),
                grid.n_z(),
                cfg.polarization(),
                &cfg.content_hash()[..12]
            );
        }
        Command::Run { config, persist_fields } => {
            let cfg = load(config)?;
            let (r, fields) = run_pipeline_cached(&cfg, None)?;
            print!("{}", report::render(&r, cli.format));
            if cli.format == Format::Json {
                println!();
            }
            if let Some(dir) = output_dir(cli, Some(&cfg)) {
                let persist = *persist_fields || cfg.output.persist_fields;
                let written = report::write_run(&dir, &r, &cfg.output.formats, persist.then_some(&*fields))?;
                for p in written {
                    info!("wrote {}", p.display());
                }
            }
        }
        Command::Sweep(args) => {
            let cfg = load(&args.config)?;
            let spec = sweep_spec(args, &cfg)?;
            let cache = FieldCache::new();
            let result = if args.optimize {
                let o = optimize_scalar(&cfg, &spec, cli.jobs, &cache)?;
                print!("{}", report::sweep_to_text(&o.sweep));
                println!(
                    "optimum: {} = {:.6e}, objective {:.6e} {}{}",
                    spec.parameter,
                    o.optimum.value,
                    o.optimum.objective,
                    spec.objective.unit(),
                    if o.optimum.flat {
                        " (flat objective)"
                    } else if !o.optimum.unimodal {
                        " (not unimodal: best sample)"
                    } else {
                        ""
                    }
                );
                o.sweep
            } else {
                let s = sweep(&cfg, &spec, cli.jobs, &cache)?;
                match cli.format {
                    Format::Text => print!("{}", report::sweep_to_text(&s)),
                    Format::Csv => print!("{}", s.to_csv()),
                    Format::Json => println!("{}", serde_json::to_string_pretty(&s)?),
                }
                s
            };
            if let Some(dir) = output_dir(cli, Some(&cfg)) {
                report::write_sweep(&dir, &result)?;
            }
        }
        Command::Table1 { inject_g0 } => {
            let table = if *inject_g0 {
                injected_table1()?
            } else {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build()?;
                let reports = pool.install(|| {
                    Preset::ALL
                        .par_iter()
                        .map(|p| run_pipeline(&RunConfig::preset(*p)))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                emit_table1(&reports)?
            };
            print_table(&table, cli.format)?;
            if cli.format == Format::Text {
                println!("\nreference values");
                print!("{}", reference_table1().to_text());
            }
            if let Some(dir) = output_dir(cli, None) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("table1.csv"), table.to_csv())?;
            }
        }
        Command::MatchFsr { config, bounds_um, tolerance } => {
            let cfg = load(config)?;
            let geometry = cfg.build_geometry()?;
            let bounds = pair(bounds_um, "--bounds-um")?;
            let r = match_fsr(
                &geometry,
                &cfg.materials()?,
                cfg.resolution(),
                cfg.converter.omega_b(),
                cfg.polarization(),
                cfg.converter.omega_target(),
                (bounds.0 * 1e-6, bounds.1 * 1e-6),
                *tolerance,
                &cfg.optical_settings(),
            )
            .context("FSR matching")?;
            println!("ring radius for FSR = {} GHz: {:.6} um", cfg.converter.microwave_frequency_ghz, r * 1e6);
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e
        .chain()
        .find_map(|c| c.downcast_ref::<eo_converter::Error>())
        .is_some_and(|e| e.is_config_error());
    if config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
