use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uamut::analysis::{analyze, AnalysisInput};
use uamut::io::{parse_ground_truth, parse_records, validate_run_set, write_ground_truth, write_records};
use uamut::report::{compare_suites, correlate, Format, Report};
use uamut::scores::ScoreKey;
use uamut::simulator::{
    simulate_grid, simulate_mutant_runs, simulate_scene, EffectCoefficients, EffectParams, Scene,
    SceneSpec,
};
use uamut::suite::parse_suite_map;
use uamut::{AnalysisConfig, Error, GroundTruth, MutationConfig, Operator, RunOutput};

#[derive(Parser)]
#[command(name = "uamut", version, about = "Uncertainty-aware mutation analysis for object detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every (model, image) pair has exactly the expected runs.
    Validate(ValidateArgs),
    /// Generate synthetic records for an original model and a mutant grid.
    Simulate(SimulateArgs),
    /// Compute mutation scores for every mutant and test suite.
    Analyze(AnalyzeArgs),
    /// Kruskal-Wallis comparison of test suites on per-mutant scores.
    CompareSuites(CompareArgs),
    /// Correlate scores with mutation ratios over an operator's grid.
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file with analysis settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Expected runs per (model, image).
    #[arg(long)]
    runs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<AnalysisConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => AnalysisConfig::from_config_str(&read_text(path)?)?,
            None => AnalysisConfig::default(),
        };
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(t) = self.iou_threshold {
            cfg.iou_threshold = t;
        }
        if let Some(n) = self.runs {
            cfg.n_runs = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format, default_value = "canonical")]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    Mcd,
    Mcb,
    All,
    /// One effect-free mutant, `mcd:0.10`, whose output equals the original.
    Identity,
}

#[derive(Args)]
struct SimulateArgs {
    /// Record file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the scene's ground truth here.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Write the image to suite mapping here (with `--suite`).
    #[arg(long)]
    suites: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    runs: u32,
    /// Images per suite.
    #[arg(long, default_value_t = 100)]
    images: usize,
    /// Objects per image as MIN-MAX, when no `--suite` is given.
    #[arg(long, value_parser = parse_range, default_value = "1-5")]
    objects: (usize, usize),
    /// A suite as LABEL:MIN-MAX objects per image; repeat for several suites.
    #[arg(long = "suite", value_parser = parse_suite_spec)]
    suite_specs: Vec<(String, (usize, usize))>,
    #[arg(long, value_enum, default_value = "mcd")]
    grid: GridChoice,
    #[arg(long, default_value_t = 5)]
    classes: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    /// Keep only images on which the original model passes against this ground truth.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// `image_id,suite` mapping file.
    #[arg(long)]
    suites: Option<PathBuf>,
    /// Estimate the kill-test null rate from the original model's own runs.
    #[arg(long)]
    calibrate_p0: bool,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Canonical report written by `analyze`.
    #[arg(long)]
    report: PathBuf,
    /// Comma-separated score keys; all keys when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_key)]
    keys: Vec<ScoreKey>,
    /// Significance level; the report's alpha when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_parser = parse_operator)]
    operator: Operator,
    #[arg(long, value_delimiter = ',', value_parser = parse_key)]
    keys: Vec<ScoreKey>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_operator(s: &str) -> Result<Operator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_key(s: &str) -> Result<ScoreKey, String> {
    ScoreKey::from_name(s).ok_or_else(|| format!("unknown score key {s:?}"))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected MIN-MAX, got {s:?}");
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let lo: usize = a.trim().parse().map_err(|_| bad())?;
    let hi: usize = b.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_suite_spec(s: &str) -> Result<(String, (usize, usize)), String> {
    let (label, range) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LABEL:MIN-MAX, got {s:?}"))?;
    if label.is_empty() || label.contains(',') {
        return Err(format!("invalid suite label {label:?}"));
    }
    Ok((label.to_string(), parse_range(range)?))
}

struct CliError {
    code: u8,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { 2 } else { 1 };
        let mut message = e.to_string();
        if let Error::RunSet(report) = &e {
            for d in &report.defects {
                message.push_str("\n  ");
                message.push_str(&serde_json::to_string(d).unwrap_or_default());
            }
        }
        CliError { code, message }
    }
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| input_error(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| input_error(path, e))
}

fn with_path<T>(path: &Path, r: uamut::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<RunOutput>, CliError> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(with_path(p, parse_records(open(p)?))?);
    }
    Ok(all)
}

fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, CliError> {
    with_path(path, parse_ground_truth(open(path)?))
}

fn load_report(path: &Path) -> Result<Report, CliError> {
    let text = read_text(path)?;
    Report::from_canonical(&text).map_err(|e| input_error(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError {
        code: 1,
        message: e.to_string(),
    };
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_err),
    }
}

fn keys_or_all(keys: &[ScoreKey]) -> Vec<ScoreKey> {
    if keys.is_empty() {
        ScoreKey::all().collect()
    } else {
        keys.to_vec()
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let records = load_records(&args.records)?;
    let report = validate_run_set(&records, cfg.n_runs);
    let text = match args.output.format {
        Format::Table | Format::Csv => {
            let mut s = format!(
                "{} model(s), {} image(s), {} run(s) expected: {}\n",
                report.models,
                report.images,
                report.n_runs,
                if report.complete { "complete" } else { "INCOMPLETE" }
            );
            for d in &report.defects {
                s.push_str(&format!("defect  {}\n", serde_json::to_string(d).unwrap_or_default()));
            }
            for w in &report.warnings {
                s.push_str(&format!("warning {}\n", serde_json::to_string(w).unwrap_or_default()));
            }
            s
        }
        Format::Canonical => {
            let mut s = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            s.push('\n');
            s
        }
    };
    emit(&args.output.out, &text)?;
    if report.complete {
        Ok(())
    } else {
        Err(CliError {
            code: 2,
            message: format!("{} defect(s) found", report.defects.len()),
        })
    }
}

fn simulated_grid(choice: GridChoice) -> Vec<MutationConfig> {
    match choice {
        GridChoice::Mcd => MutationConfig::mcd_grid(),
        GridChoice::Mcb => MutationConfig::mcb_grid(),
        GridChoice::All => {
            let mut g = MutationConfig::mcd_grid();
            g.extend(MutationConfig::mcb_grid());
            g
        }
        GridChoice::Identity => Vec::new(),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.runs < 2 {
        return Err(CliError {
            code: 2,
            message: "--runs must be at least 2".into(),
        });
    }
    let specs: Vec<(Option<String>, (usize, usize))> = if args.suite_specs.is_empty() {
        vec![(None, args.objects)]
    } else {
        args.suite_specs
            .iter()
            .map(|(l, r)| (Some(l.clone()), *r))
            .collect()
    };
    let mut records = Vec::new();
    let mut gt = Vec::new();
    let mut suite_map: BTreeMap<String, String> = BTreeMap::new();
    for (label, range) in &specs {
        let spec = SceneSpec {
            n_images: args.images,
            objects_per_image: *range,
            num_classes: args.classes,
            image_prefix: label.clone().unwrap_or_else(|| "img".into()),
            seed: args.seed,
            ..SceneSpec::default()
        };
        let scene: Scene = simulate_scene(&spec);
        let grid = simulated_grid(args.grid);
        records.extend(simulate_grid(&scene, &grid, &EffectCoefficients::default(), args.runs, args.seed));
        if let GridChoice::Identity = args.grid {
            let id = MutationConfig::mcd(0.10)?.model_id();
            records.extend(simulate_mutant_runs(&scene, &id, &EffectParams::none(), args.runs, args.seed));
        }
        gt.extend(scene.ground_truth());
        if let Some(label) = label {
            for img in &scene.images {
                suite_map.insert(img.image_id.clone(), label.clone());
            }
        }
    }

    let mut w = create(&args.out)?;
    write_records(&mut w, &records)?;
    w.flush().map_err(Error::from)?;
    if let Some(path) = &args.ground_truth {
        let mut w = create(path)?;
        write_ground_truth(&mut w, &gt)?;
        w.flush().map_err(Error::from)?;
    }
    if let Some(path) = &args.suites {
        let mut text = String::from("# image_id,suite\n");
        for (img, label) in &suite_map {
            text.push_str(&format!("{img},{label}\n"));
        }
        emit(&Some(path.clone()), &text)?;
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let records = load_records(&args.records)?;
    let gt = args.ground_truth.as_deref().map(load_ground_truth).transpose()?;
    let suites = match &args.suites {
        Some(p) => Some(with_path(p, parse_suite_map(open(p)?))?),
        None => None,
    };
    let input = AnalysisInput {
        records: &records,
        ground_truth: gt.as_deref(),
        suites: suites.as_ref(),
        calibrate_null_p: args.calibrate_p0,
    };
    let report = analyze(&input, &cfg)?;
    emit(&args.output.out, &report.render(args.output.format))
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let report = load_report(&args.report)?;
    let alpha = args.alpha.unwrap_or(report.config.alpha);
    let cmp = compare_suites(&report, &keys_or_all(&args.keys), alpha)?;
    emit(&args.output.out, &cmp.render(args.output.format))
}

fn cmd_correlate(args: &CorrelateArgs) -> Result<(), CliError> {
    let report = load_report(&args.report)?;
    let alpha = args.alpha.unwrap_or(report.config.alpha);
    let c = correlate(&report, args.operator, &keys_or_all(&args.keys), alpha)?;
    emit(&args.output.out, &c.render(args.output.format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::CompareSuites(a) => cmd_compare(a),
        Command::Correlate(a) => cmd_correlate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uamut: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
