use clap::{Args, Parser, Subcommand};
use lattice_spectra::embedded::{Construction, Sign};
use lattice_spectra::green::{GreenMethod, Side};
use lattice_spectra::lattice::LatticeName;
use lattice_spectra::perturbation::{PerturbationSpec, SiteRef};
use lattice_spectra::thresholds::ThresholdMode;
use lattice_spectra_cli::config::{ExperimentConfig, Format, LatticeBlock, OutputBlock, SourceEntry, Suite, Task};
use lattice_spectra_cli::{run, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Spectral and scattering computations for periodic lattice operators.
#[derive(Parser)]
#[command(name = "lattice-spectra", version)]
struct Cli {
    /// JSON experiment configuration; used when no subcommand is given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (standard output when absent).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Output format: json or csv.
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
    /// Seed for random trial points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Record wall time per stage in the report.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct LatticeArgs {
    /// Catalog lattice name.
    #[arg(long, value_parser = parse_lattice)]
    lattice: LatticeName,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

#[derive(Args, Clone, Default)]
struct GreenArgs {
    /// Real energy for boundary values.
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,
    /// Complex spectral parameter `re,im`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    z: Option<[f64; 2]>,
    /// `+` or `-`.
    #[arg(long, allow_hyphen_values = true)]
    side: Option<Side>,
    /// offspectrum, eps_extrapolation or pv_delta.
    #[arg(long)]
    method: Option<GreenMethod>,
    /// Torus grid per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Band ranges, spectrum intervals and flat bands.
    Bands {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Density of states at the given energies.
    Dos {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Comma-separated energies.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
        energies: Vec<f64>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Fermi-surface mesh at one energy.
    Fermi {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Threshold and exceptional sets.
    Thresholds {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// catalog or numeric.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ThresholdMode>,
    },
    /// Free Green function table `G(n)` for `|n|_∞ <= radius`.
    Green {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        green: GreenArgs,
        #[arg(long)]
        radius: Option<i64>,
    },
    /// Perturbed resolvent applied to a source.
    Resolve {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        green: GreenArgs,
        /// JSON perturbation document.
        #[arg(long)]
        perturbation: Option<PathBuf>,
        /// Source entries `band:n1;n2[:re[:im]]`, comma-separated.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', value_parser = parse_source)]
        source: Vec<SourceEntry>,
        /// Evaluation sites `band:n1;n2`, comma-separated.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', value_parser = parse_site)]
        eval: Vec<SiteRef>,
    },
    /// Point-spectrum scan or an explicit eigenvalue construction.
    Eigs {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long)]
        perturbation: Option<PathBuf>,
        /// Scan interval `lo,hi`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
        interval: Option<[f64; 2]>,
        #[arg(long)]
        samples: Option<usize>,
        /// ladder, graphite, kagome-hexagon or subdivision-plaquette.
        #[arg(long)]
        construction: Option<Construction>,
        #[arg(long, allow_hyphen_values = true)]
        energy: Option<f64>,
        /// `+` or `-`.
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<Sign>,
        #[arg(long)]
        window: Option<usize>,
        /// Potential on the support of a compact construction.
        #[arg(long, allow_hyphen_values = true)]
        value: Option<f64>,
    },
    /// Scattering matrix on the Fermi surface.
    Scatter {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long)]
        perturbation: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Run acceptance criteria.
    Verify {
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
        /// all, spectrum, identities, resolvent or scattering.
        #[arg(long, value_parser = parse_suite)]
        suite: Option<Suite>,
        /// Multiplier of the principal-value surface term (fault injection).
        #[arg(long, allow_hyphen_values = true)]
        surface_sign: Option<f64>,
        /// Factor applied to channel-mesh resolutions.
        #[arg(long)]
        resolution_scale: Option<f64>,
    },
}

fn parse_lattice(s: &str) -> Result<LatticeName, String> {
    s.parse().map_err(|e: lattice_spectra::Error| e.to_string())
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    parse_json(s)
}

fn parse_mode(s: &str) -> Result<ThresholdMode, String> {
    parse_json(s)
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    parse_json(s)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    <[f64; 2]>::try_from(v).map_err(|_| format!("expected two comma-separated numbers, got `{s}`"))
}

fn parse_site(s: &str) -> Result<SiteRef, String> {
    let (band, n) = s.split_once(':').ok_or_else(|| format!("expected `band:n1;n2`, got `{s}`"))?;
    let band = band.parse::<usize>().map_err(|e| e.to_string())?;
    let site = n.split(';').map(|k| k.trim().parse::<i64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    Ok(SiteRef { band, site })
}

fn parse_source(s: &str) -> Result<SourceEntry, String> {
    let mut parts = s.splitn(3, ':');
    let band = parts.next().unwrap_or_default();
    let n = parts.next().ok_or_else(|| format!("expected `band:n1;n2[:re[:im]]`, got `{s}`"))?;
    let site = parse_site(&format!("{band}:{n}"))?;
    let (re, im) = match parts.next() {
        None => (1.0, 0.0),
        Some(v) => match v.split_once(':') {
            Some((a, b)) => (a.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?, b.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?),
            None => (v.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?, 0.0),
        },
    };
    Ok(SourceEntry { band: site.band, site: site.site, re, im })
}

fn read_perturbation(path: &Option<PathBuf>) -> Result<Option<PerturbationSpec>, CliError> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map(Some).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", p.display())))
        }
    }
}

fn with_lattice(task: Task, l: &LatticeArgs) -> ExperimentConfig {
    ExperimentConfig::new(task, Some(LatticeBlock { name: l.lattice, dim: l.dim }))
}

fn apply_green(cfg: &mut ExperimentConfig, g: &GreenArgs) {
    let p = &mut cfg.params;
    p.energy = g.energy;
    p.z = g.z;
    p.side = g.side;
    p.method = g.method;
    p.grid = g.grid;
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&cli.command, &cli.config) {
        (None, None) => return Err(CliError::ConfigInvalid("give a subcommand or --config".into())),
        (Some(_), Some(_)) => return Err(CliError::ConfigInvalid("--config and a subcommand are exclusive".into())),
        (None, Some(path)) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        (Some(cmd), None) => from_command(cmd)?,
    };
    let out = &mut cfg.output;
    *out = OutputBlock {
        path: cli.output.clone().or(out.path.take()),
        format: cli.format.unwrap_or(out.format),
        timings: cli.timings || out.timings,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn from_command(cmd: &Command) -> Result<ExperimentConfig, CliError> {
    Ok(match cmd {
        Command::Bands { lattice, grid } => {
            let mut c = with_lattice(Task::Bands, lattice);
            c.params.grid = *grid;
            c
        }
        Command::Dos { lattice, energies, resolution } => {
            let mut c = with_lattice(Task::Dos, lattice);
            c.params.energies = energies.clone();
            c.params.resolution = *resolution;
            c
        }
        Command::Fermi { lattice, energy, resolution } => {
            let mut c = with_lattice(Task::Fermi, lattice);
            c.params.energy = Some(*energy);
            c.params.resolution = *resolution;
            c
        }
        Command::Thresholds { lattice, mode } => {
            let mut c = with_lattice(Task::Thresholds, lattice);
            c.params.mode = *mode;
            c
        }
        Command::Green { lattice, green, radius } => {
            let mut c = with_lattice(Task::Green, lattice);
            apply_green(&mut c, green);
            c.params.radius = *radius;
            c
        }
        Command::Resolve { lattice, green, perturbation, source, eval } => {
            let mut c = with_lattice(Task::Resolve, lattice);
            apply_green(&mut c, green);
            c.perturbation = read_perturbation(perturbation)?;
            c.params.source = source.clone();
            c.params.eval = eval.clone();
            c
        }
        Command::Eigs { lattice, perturbation, interval, samples, construction, energy, sign, window, value } => {
            let mut c = with_lattice(Task::Eigs, lattice);
            c.perturbation = read_perturbation(perturbation)?;
            let p = &mut c.params;
            p.interval = *interval;
            p.samples = *samples;
            p.construction = *construction;
            p.energy = *energy;
            p.sign = *sign;
            p.window = *window;
            p.value = *value;
            c
        }
        Command::Scatter { lattice, perturbation, energy, resolution } => {
            let mut c = with_lattice(Task::Scatter, lattice);
            c.perturbation = read_perturbation(perturbation)?;
            c.params.energy = Some(*energy);
            c.params.resolution = *resolution;
            c
        }
        Command::Verify { criteria, suite, surface_sign, resolution_scale } => {
            let mut c = ExperimentConfig::new(Task::Verify, None);
            let p = &mut c.params;
            p.criteria = criteria.clone();
            p.suite = *suite;
            p.surface_sign = *surface_sign;
            p.resolution_scale = *resolution_scale;
            c
        }
    })
}

/// Size the global thread pool from `LATTICE_SPECTRA_THREADS`.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LATTICE_SPECTRA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::ConfigInvalid(format!("LATTICE_SPECTRA_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::ConfigInvalid(e.to_string()))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = build_config(cli)?;
    let report = run(&cfg)?;
    for s in &report.stages {
        eprintln!("[{}] {:.3} s", s.stage, s.seconds);
    }
    if let Some(text) = report.emit()? {
        print!("{text}");
    }
    if report.passed == Some(false) {
        let failed: Vec<String> = report.assertions.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
        return Err(CliError::Assertion(format!("criteria failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
