//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bp::reconstruct_bp;
use crate::config::{parse_scenario, ExperimentConfig};
use crate::error::{Error, Result};
use crate::forward::simulate_echo;
use crate::io;
use crate::lab::{angular_sampling_bound, grating_lobe_spacing, grating_lobe_spacing_approx, measure_metrics_within, nyquist_spacing, StudyConfig};
use crate::rma::{reconstruct_rma, ImageVolume, Method};

pub const ECHO_FILE: &str = "echo.txt";

#[derive(Debug, Parser)]
#[command(name = "cylmimo", version, about = "Cylindrical MIMO near-field imaging experiments")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the echo of the configured scene.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Echo sidecar path (default: <output dir>/echo.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Image an echo file with RMA or backprojection.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured method.
        #[arg(long)]
        method: Option<Method>,
        /// Echo sidecar path (default: <output dir>/echo.txt).
        #[arg(long)]
        echo: Option<PathBuf>,
    },
    /// 1-D beam pattern of one comparison scenario as CSV.
    Beampattern {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured scenario.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampling and grating-lobe design quantities.
    Design(DesignArgs),
    /// Metrics of all nine comparison scenarios as CSV.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolution, PSLR and grating-lobe offset of a profile CSV.
    Metrics {
        #[arg(long)]
        profile: PathBuf,
        /// Select rows of a peak-profile CSV by its axis column.
        #[arg(long)]
        axis: Option<String>,
        /// Half-width around the peak searched for the PSLR (m).
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("band").required(true).args(["wavelength", "freq_hz"])))]
pub struct DesignArgs {
    /// Wavelength λ0 (m).
    #[arg(long)]
    pub wavelength: Option<f64>,
    /// Frequency (Hz), alternative to --wavelength.
    #[arg(long)]
    pub freq_hz: Option<f64>,
    /// Range R0 from aperture to target centre (m).
    #[arg(long)]
    pub r0: f64,
    /// Aperture length L (m).
    #[arg(long)]
    pub length: f64,
    /// Target extent D (m).
    #[arg(long, default_value_t = 0.0)]
    pub target_extent: f64,
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().map_err(|e| Error::invalid(format!("cannot start workers: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, out } => cmd_simulate(&ExperimentConfig::load(config)?, out.as_deref()).map(|_| ()),
        Command::Reconstruct { config, method, echo } => {
            let cfg = ExperimentConfig::load(config)?;
            let paths = cmd_reconstruct(&cfg, *method, echo.as_deref())?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Beampattern { config, scenario, out } => {
            let cfg = optional_config(config.as_deref())?;
            let (study, default) = cfg.as_ref().map_or((StudyConfig::default(), None), |c| (c.study, Some(c.scenario)));
            let s = match (scenario, default) {
                (Some(slug), _) => parse_scenario(slug)?,
                (None, Some(s)) => s,
                (None, None) => parse_scenario("mimo_rma_filtered")?,
            };
            let p = study.pattern(s, &study.profile_grid()?)?;
            emit(out.as_deref(), &io::pattern_csv(&p))
        }
        Command::Design(args) => emit(None, &cmd_design(args)?),
        Command::Compare { config, out } => {
            let study = optional_config(config.as_deref())?.map_or_else(StudyConfig::default, |c| c.study);
            emit(out.as_deref(), &cmd_compare(&study)?)
        }
        Command::Metrics { profile, axis, window, out } => {
            let p = io::read_profile_csv(profile, axis.as_deref())?;
            let m = measure_metrics_within(&p, *window)?;
            emit(out.as_deref(), &format!("{}\n{}\n", io::metrics_header(), io::metrics_fields(&m)))
        }
    }
}

fn optional_config(path: Option<&Path>) -> Result<Option<ExperimentConfig>> {
    path.map(ExperimentConfig::load).transpose()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            create_parent(p)?;
            fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn create_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

/// Writes the echo sidecar and payload; returns the sidecar path.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let im = cfg.imaging()?;
    let scene = cfg.load_scene()?;
    let mut e = simulate_echo(&scene, &im.layout, &im.freqs)?;
    if let Some(n) = im.noise {
        e = e.with_noise(n.snr_db, n.seed)?;
    }
    let path = out.map_or_else(|| cfg.output_dir.join(ECHO_FILE), Path::to_path_buf);
    create_parent(&path)?;
    io::write_echo(&path, &e, &cfg.hash)?;
    Ok(path)
}

/// Reconstructs and writes the image, projection and profiles; returns the written paths.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, method: Option<Method>, echo: Option<&Path>) -> Result<Vec<PathBuf>> {
    let im = cfg.imaging()?;
    let echo = echo.map_or_else(|| cfg.output_dir.join(ECHO_FILE), Path::to_path_buf);
    let (e, _) = io::read_echo(&echo)?;
    if e.layout() != &im.layout {
        return Err(Error::invalid(format!("echo {} was recorded with a different array layout", echo.display())));
    }
    if e.freqs() != &im.freqs {
        return Err(Error::invalid(format!("echo {} was recorded with a different frequency grid", echo.display())));
    }
    let method = method.unwrap_or(im.method);
    let img: ImageVolume = match method {
        Method::Rma => reconstruct_rma(&e, &im.layout, &im.rma)?,
        Method::Bp => reconstruct_bp(&e, &im.layout, &im.rma.grid)?,
    }
    .with_config_hash(cfg.hash.clone());

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("image_{method}");
    let sidecar = dir.join(format!("{stem}.txt"));
    let mip = dir.join(format!("{stem}_mip.pgm"));
    let profiles = dir.join(format!("{stem}_profiles.csv"));
    io::write_image(&sidecar, &img)?;
    fs::write(&mip, io::mip_pgm(&img)).map_err(|e| Error::io(&mip, e))?;
    fs::write(&profiles, io::peak_profiles_csv(&img)).map_err(|e| Error::io(&profiles, e))?;
    Ok(vec![sidecar, mip, profiles])
}

/// `quantity,value` rows; grating-lobe and angular rows need D > 0.
pub fn cmd_design(a: &DesignArgs) -> Result<String> {
    let lambda = match (a.wavelength, a.freq_hz) {
        (Some(l), None) => l,
        (None, Some(f)) if f > 0.0 => crate::geometry::C0 / f,
        (None, Some(f)) => return Err(Error::invalid(format!("frequency must be positive, got {f}"))),
        _ => return Err(Error::invalid("give exactly one of --wavelength and --freq-hz")),
    };
    let mut s = String::from("quantity,value\n");
    let _ = writeln!(s, "wavelength_m,{lambda:.6e}");
    let _ = writeln!(s, "nyquist_spacing_m,{:.6e}", nyquist_spacing(lambda, a.r0, a.length, a.target_extent)?);
    if a.target_extent > 0.0 {
        let _ = writeln!(s, "angular_interval_max_rad,{:.6e}", angular_sampling_bound(lambda, a.target_extent)?);
        if a.target_extent <= a.length {
            let _ = writeln!(s, "grating_lobe_spacing_m,{:.6e}", grating_lobe_spacing(lambda, a.r0, a.length, a.target_extent)?);
        }
        let _ = writeln!(s, "grating_lobe_spacing_approx_m,{:.6e}", grating_lobe_spacing_approx(lambda, a.r0, a.target_extent)?);
    }
    Ok(s)
}

/// `row,scenario,resolution_m,pslr_db,grating_lobe_offset_m` for all nine scenarios.
pub fn cmd_compare(study: &StudyConfig) -> Result<String> {
    let mut s = format!("row,scenario,{}\n", io::metrics_header());
    for (i, (sc, m)) in crate::lab::compare_scenarios(study)?.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, sc.slug(), io::metrics_fields(m));
    }
    Ok(s)
}
