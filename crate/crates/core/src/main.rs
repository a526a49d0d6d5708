use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use limitrd::estimators::{
    bandwidth_sweep, default_delta_grid, linspace, miscoding_rd_test, rd_gap, treatment_effect_curve,
    write_curve_csv, write_estimates_csv, write_gaps_csv, BootstrapOptions, CurveOptions, DEFAULT_BANDWIDTHS,
    DEFAULT_MASS_FLOOR,
};
use limitrd::io::{load_panel, write_panel_csv};
use limitrd::montecarlo::{
    run_study, sample_size_sweep, write_replications_csv, write_summary_csv, write_sweep_csv, McConfig,
};
use limitrd::synth::{generate_panel, inject_anomalies, AnomalySpec, SynthConfig};
use limitrd::validator::{validate_panel, wrong_year_flags, ValidateOptions, DEFAULT_BIN_WIDTH};
use limitrd::{Error, EventCalendar, EventPanel, ModelSpec, Outcome, Result};

#[derive(Parser)]
#[command(
    name = "limitrd",
    version,
    about = "Event studies at the conforming loan limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel with planted effects.
    Synth(SynthArgs),
    /// Lint a panel; exits with status 1 when an error-level finding exists.
    Validate(ValidateArgs),
    /// Event-study regressions over one or more bandwidths.
    Estimate(EstimateArgs),
    /// Treatment-effect curve over a log-distance grid.
    Curve(CurveArgs),
    /// Gap in the treatment effect at the limit.
    RdGap(RdGapArgs),
    /// Discontinuity test for the wrong-treatment-year flag.
    MiscodingTest(MiscodingArgs),
    /// Monte Carlo study of classification schemes.
    Mc(McArgs),
}

#[derive(Args)]
struct PanelArgs {
    /// Panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Event calendar JSON.
    #[arg(long)]
    calendar: PathBuf,
}

impl PanelArgs {
    fn load(&self) -> Result<EventPanel> {
        let source = BufReader::new(File::open(&self.panel)?);
        let calendar = File::open(&self.calendar)?;
        load_panel(source, calendar)
    }
}

#[derive(Args)]
struct SpecArgs {
    /// Model spec JSON; overrides `--outcome`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "approved")]
    outcome: Outcome,
}

impl SpecArgs {
    fn load(&self) -> Result<ModelSpec> {
        let spec = match &self.spec {
            Some(p) => serde_json::from_slice(&fs::read(p)?)?,
            None => ModelSpec::new(self.outcome),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Anomalies to inject after generation.
    #[arg(long)]
    anomalies: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    calendar_out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, default_value_t = 4)]
    window: i32,
    #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
    reference_time: i32,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// Authoritative calendar for the coverage check.
    #[arg(long)]
    reference_calendar: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    spec: SpecArgs,
    /// Comma-separated bandwidths; defaults to the standard sweep.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Vec<f64>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Cluster-bootstrap draws; 0 disables the bootstrap.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BootstrapArgs {
    fn options(&self) -> Option<BootstrapOptions> {
        (self.bootstrap > 0).then_some(BootstrapOptions {
            draws: self.bootstrap,
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0.01)]
    bandwidth: f64,
    /// Grid points on [-0.1, 0.1]; ignored when `--deltas` is given.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MASS_FLOOR)]
    mass_floor: f64,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RdGapArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0.01)]
    bandwidth: f64,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MiscodingArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Comma-separated polynomial orders.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    poly_orders: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Study config JSON; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the replication count.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config: SynthConfig = serde_json::from_slice(&fs::read(&args.config)?)?;
    let mut panel = generate_panel(&config)?;
    if let Some(p) = &args.anomalies {
        let spec: AnomalySpec = serde_json::from_slice(&fs::read(p)?)?;
        panel = inject_anomalies(&panel, &spec)?;
    }
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_panel_csv(&panel, &mut out)?;
    out.flush()?;
    fs::write(&args.calendar_out, panel.calendar().to_json()? + "\n")?;
    log::info!("wrote {} records to {}", panel.len(), args.out.display());
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<bool> {
    let panel = args.panel.load()?;
    let reference_calendar = match &args.reference_calendar {
        Some(p) => Some(EventCalendar::from_json(&fs::read(p)?)?),
        None => None,
    };
    let options = ValidateOptions {
        window: args.window,
        reference_time: args.reference_time,
        bin_width: args.bin_width,
        reference_calendar,
    };
    let report = validate_panel(&panel, &options)?;
    if let Some(p) = &args.report {
        fs::write(p, report.to_json()? + "\n")?;
    }
    print!("{}", report.summary_text());
    Ok(!report.has_errors())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let panel = args.panel.load()?;
    let spec = args.spec.load()?;
    let bandwidths = if args.bandwidths.is_empty() {
        DEFAULT_BANDWIDTHS.to_vec()
    } else {
        args.bandwidths.clone()
    };
    let sets = bandwidth_sweep(&panel, &spec, &bandwidths)?;
    let mut out = output(args.out.as_deref())?;
    write_estimates_csv(&sets, &mut out)?;
    out.flush()?;
    if let Some(p) = &args.json {
        write_json(p, &sets)?;
    }
    Ok(())
}

fn curve(args: &CurveArgs) -> Result<()> {
    let panel = args.panel.load()?;
    let spec = args.spec.load()?;
    let grid = if !args.deltas.is_empty() {
        args.deltas.clone()
    } else if let Some(n) = args.points {
        linspace(-0.1, 0.1, n)
    } else {
        default_delta_grid()
    };
    let options = CurveOptions {
        mass_floor: args.mass_floor,
        bootstrap: args.bootstrap.options(),
    };
    let points = treatment_effect_curve(&panel, &spec, &grid, args.bandwidth, &options)?;
    let mut out = output(args.out.as_deref())?;
    write_curve_csv(&points, &mut out)?;
    out.flush()?;
    Ok(())
}

fn gap(args: &RdGapArgs) -> Result<()> {
    let panel = args.panel.load()?;
    let spec = args.spec.load()?;
    let gaps = rd_gap(&panel, &spec, args.bandwidth, args.bootstrap.options())?;
    let mut out = output(args.out.as_deref())?;
    write_gaps_csv(&gaps, &mut out)?;
    out.flush()?;
    Ok(())
}

fn miscoding(args: &MiscodingArgs) -> Result<()> {
    let panel = args.panel.load()?;
    let flags = wrong_year_flags(&panel);
    let sets = args
        .poly_orders
        .iter()
        .map(|&p| miscoding_rd_test(&panel, &flags, p))
        .collect::<Result<Vec<_>>>()?;
    let mut out = output(args.out.as_deref())?;
    write_estimates_csv(&sets, &mut out)?;
    out.flush()?;
    if let Some(p) = &args.json {
        write_json(p, &sets)?;
    }
    Ok(())
}

fn monte_carlo(args: &McArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => serde_json::from_slice::<McConfig>(&fs::read(p)?)?,
        None => McConfig::default(),
    };
    if let Some(s) = args.replications {
        config.replications = s;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;

    let mut studies = Vec::new();
    for scenario in &config.scenarios {
        let study = run_study(&config.params(scenario), config.replications)?;
        let path = dir.join(format!("replications_{}.csv", scenario.name));
        let mut f = BufWriter::new(File::create(path)?);
        write_replications_csv(&scenario.name, &study, &mut f)?;
        f.flush()?;
        studies.push((scenario.name.clone(), study));
    }
    let mut f = BufWriter::new(File::create(dir.join("summary.csv"))?);
    write_summary_csv(config.seed, &studies, &mut f)?;
    f.flush()?;

    if let Some(grid) = &config.n_grid {
        let s = config.sweep_replications.unwrap_or(config.replications);
        let mut rows = Vec::new();
        for scenario in &config.scenarios {
            for row in sample_size_sweep(&config.params(scenario), grid, s)? {
                rows.push((scenario.name.clone(), row));
            }
        }
        let mut f = BufWriter::new(File::create(dir.join("sweep.csv"))?);
        write_sweep_csv(config.seed, &rows, &mut f)?;
        f.flush()?;
    }
    write_json(&dir.join("config.json"), &config)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Validate(a) => validate(a),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Curve(a) => curve(a).map(|_| true),
        Command::RdGap(a) => gap(a).map(|_| true),
        Command::MiscodingTest(a) => miscoding(a).map(|_| true),
        Command::Mc(a) => monte_carlo(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Io(_) = e {
                return ExitCode::from(3);
            }
            ExitCode::from(2)
        }
    }
}
