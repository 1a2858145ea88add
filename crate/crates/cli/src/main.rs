//! `l1trend`: fit the adaptive ℓ1 trend filter to a CSV series, generate
//! synthetic fixtures, and check the optimality of a saved fit.

mod config;
mod error;
mod input;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use l1trend::solver::kkt_report;
use l1trend::{
    generate, ols_init, AdaptiveWeights, Grid, LambdaGrid, PreparedSignal, Signal, SolverConfig, SyntheticSpec,
};

use config::{BlockBound, RunConfig};
use error::{exit_code, CliError, Result};
use input::{read_series, ColumnSelector, InputRequest};
use output::SelectedFit;

#[derive(Parser)]
#[command(name = "l1trend", version, about = "Adaptive l1 trend filter for time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a series and write the decomposition, events and model selection.
    Fit(Box<FitArgs>),
    /// Write a synthetic series with known components.
    Synth(SynthArgs),
    /// Check the optimality conditions of a fit written by `fit`.
    Check(CheckArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV file.
    #[arg(short, long, required_unless_present = "manifest")]
    input: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier fit.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(short, long)]
    output: PathBuf,

    /// Value column, by header name or zero-based index [default: last non-time column].
    #[arg(long)]
    value_column: Option<ColumnSelector>,
    /// Timestamp column; carried along but not used in the fit.
    #[arg(long)]
    time_column: Option<ColumnSelector>,
    /// Treat the first row as a header [default: detected].
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    delimiter: Option<char>,

    /// Angular frequencies in radians per sample.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["periods", "period_min"])]
    omega: Option<Vec<f64>>,
    /// Periods in samples per cycle.
    #[arg(long, value_delimiter = ',', conflicts_with = "period_min")]
    periods: Option<Vec<f64>>,
    /// Evenly spaced periods: smallest period.
    #[arg(long, requires_all = ["period_max", "period_count"])]
    period_min: Option<f64>,
    #[arg(long, requires = "period_min")]
    period_max: Option<f64>,
    #[arg(long, requires = "period_min")]
    period_count: Option<usize>,

    /// Number of λ values per γ [default: 50].
    #[arg(long, conflicts_with = "lambdas")]
    lambda_count: Option<usize>,
    /// Smallest λ as a fraction of λ_max [default: 1e-4].
    #[arg(long, conflicts_with = "lambdas")]
    lambda_min_ratio: Option<f64>,
    /// Explicit λ values shared by every γ.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Adaptive-weight exponents [default: 0,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Extended BIC parameter in [0, 1] [default: 1].
    #[arg(long)]
    ebic_xi: Option<f64>,
    /// Convergence tolerance [default: 1e-7].
    #[arg(long)]
    tol: Option<f64>,
    /// Pass limit per grid point [default: 10000].
    #[arg(long)]
    max_cycles: Option<usize>,
    /// Fit the raw series instead of subtracting its mean first.
    #[arg(long)]
    no_center: bool,
    /// Per-block bounds as BLOCK=LOWER:UPPER, e.g. `step=0:`. Repeatable.
    #[arg(long = "bound")]
    bounds: Vec<BlockBound>,
    /// Fit the γ paths in parallel.
    #[arg(long)]
    parallel: bool,
}

impl FitArgs {
    fn has_settings(&self) -> bool {
        self.input.is_some()
            || self.value_column.is_some()
            || self.time_column.is_some()
            || self.header
            || self.no_header
            || self.delimiter.is_some()
            || self.omega.is_some()
            || self.periods.is_some()
            || self.period_min.is_some()
            || self.lambda_count.is_some()
            || self.lambda_min_ratio.is_some()
            || self.lambdas.is_some()
            || self.gammas.is_some()
            || self.ebic_xi.is_some()
            || self.tol.is_some()
            || self.max_cycles.is_some()
            || self.no_center
            || !self.bounds.is_empty()
            || self.parallel
    }

    fn omega(&self) -> Result<Vec<f64>> {
        if let Some(omega) = &self.omega {
            let mut omega = omega.clone();
            omega.sort_by(f64::total_cmp);
            return Ok(omega);
        }
        if let Some(periods) = &self.periods {
            return Ok(l1trend::omega_from_periods(periods)?);
        }
        if let (Some(min), Some(max), Some(count)) = (self.period_min, self.period_max, self.period_count) {
            return Ok(l1trend::omega_from_periods(&l1trend::period_range(min, max, count)?)?);
        }
        Ok(Vec::new())
    }

    fn grid(&self) -> Grid {
        let default = Grid::default();
        let lambdas = match (&self.lambdas, &default.lambdas) {
            (Some(values), _) => LambdaGrid::Explicit(values.clone()),
            (None, LambdaGrid::Auto { count, min_ratio }) => LambdaGrid::Auto {
                count: self.lambda_count.unwrap_or(*count),
                min_ratio: self.lambda_min_ratio.unwrap_or(*min_ratio),
            },
            (None, explicit) => explicit.clone(),
        };
        Grid {
            lambdas,
            gammas: self.gammas.clone().unwrap_or(default.gammas),
        }
    }

    fn solver(&self) -> SolverConfig {
        let default = SolverConfig::default();
        SolverConfig {
            tol: self.tol.unwrap_or(default.tol),
            max_cycles: self.max_cycles.unwrap_or(default.max_cycles),
            center_signal: !self.no_center,
            parallel: self.parallel,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Start from a named scenario.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Series length; required without a preset.
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Slope change J:M, adding M·max(t−J, 0). Repeatable.
    #[arg(long = "slope", value_parser = parse_pair)]
    slopes: Vec<(usize, f64)>,
    /// Level shift T:M, adding M from sample T on. Repeatable.
    #[arg(long = "step", value_parser = parse_pair)]
    steps: Vec<(usize, f64)>,
    /// Spike T:M at sample T. Repeatable.
    #[arg(long = "spike", value_parser = parse_pair)]
    spikes: Vec<(usize, f64)>,
    /// Sinusoid OMEGA:A:B, adding A·sin(ωt) + B·cos(ωt). Repeatable.
    #[arg(long = "sinusoid", value_parser = parse_triple)]
    sinusoids: Vec<(f64, f64, f64)>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Descending line, two losses and a reflection.
    Otdr,
    /// Daily cycle with a shutdown.
    Wind,
}

#[derive(Args)]
struct CheckArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    run: PathBuf,
    /// Coefficient table to check instead of the run's own.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// Allowed violation, scaled by 1 + λ.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected INDEX:VALUE, got `{s}`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad index `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad value `{b}`"))?;
    Ok((a, b))
}

fn parse_triple(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [w, a, b] = parts[..] else {
        return Err(format!("expected OMEGA:A:B, got `{s}`"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number `{v}`"));
    Ok((num(w)?, num(a)?, num(b)?))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_input(config: &RunConfig) -> Result<Signal> {
    let layout = &config.layout;
    let value = ColumnSelector::Index(layout.value_column);
    let time = layout.time_column.map(ColumnSelector::Index);
    let (signal, _) = read_series(
        &config.input,
        &InputRequest {
            delimiter: layout.delimiter,
            header: Some(layout.header),
            value: Some(&value),
            time: time.as_ref(),
        },
    )?;
    Ok(signal)
}

fn resolve_fit(args: &FitArgs) -> Result<(RunConfig, Signal)> {
    if let Some(manifest) = &args.manifest {
        if args.has_settings() {
            return Err(CliError::Usage(
                "--manifest cannot be combined with input or fit settings".into(),
            ));
        }
        let config = RunConfig::load(manifest)?;
        let signal = load_input(&config)?;
        return Ok((config, signal));
    }
    let input = args.input.as_ref().expect("clap requires input");
    let header = match (args.header, args.no_header) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    };
    let (signal, layout) = read_series(
        input,
        &InputRequest {
            delimiter: args.delimiter.unwrap_or(','),
            header,
            value: args.value_column.as_ref(),
            time: args.time_column.as_ref(),
        },
    )?;
    let input = std::fs::canonicalize(input).map_err(|source| CliError::Read {
        path: input.clone(),
        source,
    })?;
    let config = RunConfig {
        input,
        layout,
        omega: args.omega()?,
        grid: args.grid(),
        ebic_xi: args.ebic_xi.unwrap_or(1.0),
        solver: args.solver(),
        bounds: args.bounds.clone(),
    };
    config.validate()?;
    Ok((config, signal))
}

fn fit(args: FitArgs) -> Result<()> {
    let (config, signal) = resolve_fit(&args)?;
    let spec = config.dictionary(signal.len())?;
    let out = l1trend::run(&spec, &signal, &config.grid, &config.solver, config.ebic_xi)?;
    create_dir(&args.output)?;
    output::write_fit_outputs(&args.output, &spec, &signal, &out.selection, &out.decomposition)?;
    output::write_text(&args.output.join("manifest.json"), &config.to_json())?;

    let (lambda, gamma) = out.selection.best;
    eprintln!(
        "n={} p={} selected lambda={lambda:.4e} gamma={gamma} with {} active columns, {} events",
        spec.n(),
        spec.p(),
        out.selection.best_fit.n_active,
        out.decomposition.events.len()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match (args.preset, args.n) {
        (Some(Preset::Otdr), _) => SyntheticSpec::otdr_like(args.seed),
        (Some(Preset::Wind), _) => SyntheticSpec::wind_like(args.seed),
        (None, Some(n)) => SyntheticSpec::new(n),
        (None, None) => return Err(CliError::Usage("give --preset or --n".into())),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    spec.seed = args.seed;
    if let Some(noise) = args.noise {
        spec.noise_sigma = noise;
    }
    spec.slopes.extend(args.slopes);
    spec.steps.extend(args.steps);
    spec.spikes.extend(args.spikes);
    spec.sinusoids.extend(args.sinusoids);
    let (signal, truth) = generate(&spec)?;

    create_dir(&args.output)?;
    output::write_table(
        &args.output.join("signal.csv"),
        &["t", "value"],
        signal
            .values()
            .iter()
            .enumerate()
            .map(|(t, v)| vec![t.to_string(), v.to_string()]),
    )?;
    output::write_table(
        &args.output.join("truth.csv"),
        &["t", "clean", "x", "w", "u", "s"],
        (0..spec.n).map(|t| {
            [truth.fitted[t], truth.x[t], truth.w[t], truth.u[t], truth.s[t]]
                .iter()
                .fold(vec![t.to_string()], |mut row, v| {
                    row.push(v.to_string());
                    row
                })
        }),
    )?;
    output::write_table(
        &args.output.join("truth_events.csv"),
        &output::EVENTS_HEADER,
        truth.events.iter().map(output::event_row),
    )?;
    output::write_json(&args.output.join("synth.json"), &spec)
}

fn check(args: CheckArgs) -> Result<bool> {
    let config = RunConfig::load(&args.run.join("manifest.json"))?;
    let selected_path = args.run.join("selected.json");
    let text = std::fs::read_to_string(&selected_path).map_err(|source| CliError::Read {
        path: selected_path.clone(),
        source,
    })?;
    let selected: SelectedFit = serde_json::from_str(&text).map_err(|e| CliError::Data {
        path: selected_path,
        message: e.to_string(),
    })?;
    let signal = load_input(&config)?;
    let spec = config.dictionary(signal.len())?;
    let coef_path = args.coefficients.unwrap_or_else(|| args.run.join("coefficients.csv"));
    let coefficients = output::read_coefficients(&coef_path, &spec)?;

    let prepared = PreparedSignal::new(&spec, &signal, config.solver.center_signal)?;
    let weights = AdaptiveWeights::new(ols_init(&spec, &prepared), selected.gamma)?.weights();
    let theta = coefficients.to_dense(&spec);
    let report = kkt_report(&spec, &prepared, &weights, selected.lambda, &theta)?;
    let limit = args.tolerance * (1.0 + selected.lambda);
    let ok = report.max_violation() < limit;
    println!("lambda\t{}", selected.lambda);
    println!("gamma\t{}", selected.gamma);
    println!("active_violation\t{:e}", report.active);
    println!("inactive_violation\t{:e}", report.inactive);
    println!("limit\t{limit:e}");
    println!("status\t{}", if ok { "ok" } else { "violated" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => fit(*args).map(|_| true),
        Command::Synth(args) => synth(args).map(|_| true),
        Command::Check(args) => check(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("l1trend: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
