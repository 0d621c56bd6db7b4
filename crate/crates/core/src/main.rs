use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jsdrazor::categorical::CountVector;
use jsdrazor::error::Error;
use jsdrazor::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use jsdrazor::model::{example_model, loglinear_default, LoglinearVariant, ParametricModel};
use jsdrazor::razor::{score_models, Criterion, ScoreOptions};
use jsdrazor::validate::{validate_theory, ValidateOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

#[derive(Parser)]
#[command(name = "jsdrazor", version, about = "Model choice for categorical simulators with the JSD razor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML/JSON config or a preset name
    /// (nested_multilogit, loglinear, nfds).
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// 100 replicates and the full BOLFI budget.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the replicate count.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Run the property checks and print one line per check.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score candidate models on observed counts with SIC-JSD.
    Score {
        /// Candidate model (M0, M1, M2, two_param, saturated, or a model
        /// named in --config). Repeat for several candidates.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// CSV file with one count vector per row.
        #[arg(long)]
        counts: PathBuf,
        /// Custom experiment config providing extra model definitions.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also compute SIC.
        #[arg(long)]
        sic: bool,
        /// Also compute the refined penalty score.
        #[arg(long)]
        refined: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset config as TOML.
    Preset {
        name: String,
        #[arg(long)]
        paper_scale: bool,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn load_config(spec: &str, paper_scale: bool) -> Result<ExperimentConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        let mut cfg = ExperimentConfig::from_path(path)?;
        if paper_scale {
            cfg.paper_scale();
        }
        return Ok(cfg);
    }
    match spec.parse::<ExperimentKind>() {
        Ok(kind) => ExperimentConfig::preset(kind, paper_scale),
        Err(_) => Err(Error::Config(format!("'{spec}' is neither a config file nor a preset name"))),
    }
}

fn builtin_model(name: &str) -> Option<Result<ParametricModel, Error>> {
    Some(match name {
        "M0" => example_model(0),
        "M1" => example_model(1),
        "M2" => example_model(2),
        "two_param" => loglinear_default(LoglinearVariant::TwoParam),
        "saturated" => loglinear_default(LoglinearVariant::Saturated),
        _ => return None,
    })
}

fn read_counts(path: &Path) -> Result<Vec<CountVector>, Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).flexible(true).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<u64>, _> = rec.iter().map(|s| s.trim().parse::<u64>()).collect();
        match parsed {
            Ok(v) => rows.push(CountVector::new(v)),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no count rows", path.display())));
    }
    Ok(rows)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(config: &str, seed: Option<u64>, paper_scale: bool, jobs: usize, out: Option<PathBuf>, replicates: Option<usize>) -> ExitCode {
    let mut cfg = match load_config(config, paper_scale) {
        Ok(c) => c,
        Err(Error::Io(msg)) => return fail(&Error::Config(msg)),
        Err(e) => return fail(&e),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Err(e) = cfg.validate() {
        return fail(&e);
    }
    let output = match run_experiment(&cfg, jobs.max(1)) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    if let Err(e) = output.write_to(&cfg.output_dir) {
        return fail(&e);
    }
    for row in &output.rates {
        let rates: Vec<String> = row.rates.iter().map(|r| format!("{r:.2}")).collect();
        println!("{} {} n={} {}: {}", row.true_model, row.condition_label, row.n_obs, row.criterion.as_str(), rates.join(" "));
    }
    println!("wrote {}", cfg.output_dir.display());
    ExitCode::SUCCESS
}

fn validate(seed: u64, out: Option<PathBuf>) -> ExitCode {
    let opts = ValidateOptions { seed, ..Default::default() };
    let report = match validate_theory(&opts) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for line in report.lines() {
        println!("{line}");
    }
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(&p, text) {
            return fail(&e.into());
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    }
}

#[allow(clippy::too_many_arguments)]
fn score(
    names: &[String],
    counts: &Path,
    config: Option<&Path>,
    seed: u64,
    with_sic: bool,
    with_refined: bool,
    out: Option<&Path>,
) -> ExitCode {
    let custom = match config.map(ExperimentConfig::from_path).transpose() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let mut models = Vec::with_capacity(names.len());
    for name in names {
        let from_cfg = custom.as_ref().and_then(|c| c.models.iter().find(|m| &m.name == name)).map(|s| s.build());
        let m = match from_cfg.or_else(|| builtin_model(name)) {
            Some(Ok(m)) => m,
            Some(Err(e)) => return fail(&e),
            None => return fail(&Error::Config(format!("unknown model '{name}'"))),
        };
        models.push(m);
    }
    let rows = match read_counts(counts) {
        Ok(r) => r,
        Err(Error::Io(msg)) => return fail(&Error::Config(msg)),
        Err(e) => return fail(&e),
    };
    let opts = ScoreOptions { with_sic, with_refined, primary: Some(Criterion::SicJsd), ..Default::default() };
    let mut reports = Vec::with_capacity(rows.len());
    for c in &rows {
        match score_models(&models, c, &opts, seed) {
            Ok(r) => reports.push(r),
            Err(e) => return fail(&e),
        }
    }
    let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
    match write_or_print(out, &text) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, paper_scale, jobs, out, replicates } => {
            run(&config, seed, paper_scale, jobs, out, replicates)
        }
        Command::Validate { seed, out } => validate(seed, out),
        Command::Score { models, counts, config, seed, sic, refined, out } => {
            score(&models, &counts, config.as_deref(), seed, sic, refined, out.as_deref())
        }
        Command::Preset { name, paper_scale } => {
            let cfg = name
                .parse::<ExperimentKind>()
                .and_then(|k| ExperimentConfig::preset(k, paper_scale));
            match cfg {
                Ok(c) => {
                    print!("{}", c.to_toml_string());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
