use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trust_core::bench::{render_table, run_benchmark, BenchSpec, ModelKind};
use trust_core::data::{
    format_f64, generate_synthetic, load_csv, load_csv_features, save_csv, SyntheticFamily, SyntheticSpec,
};
use trust_core::explain::{
    ale_csv, ale_curve, ale_svg, explanation_report, importance_csv, importance_report, importance_svg,
    local_explanation, path_svg, render_tree, ImportanceConfig, ImportancePlot, TreeFormat, DEFAULT_ALE_BINS,
};
use trust_core::llm::{build_prompt, chat_loop, ChatOptions, HttpTransport, LlmConfig, DEFAULT_PERSONA};
use trust_core::robust::BreachDirection;
use trust_core::tree::{grow, TrustModel};
use trust_core::{Result, TrustError};

#[derive(Parser)]
#[command(name = "trust", version, about = "Linear model trees with relaxed-Lasso leaves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV file and save it as JSON
    Train(TrainArgs),
    /// Predict every row of a CSV file
    Predict(PredictArgs),
    /// Explain the prediction for one row
    Explain(ExplainArgs),
    /// Ghost-variable importance with null bands
    Importance(ImportanceArgs),
    /// Accumulated local effects of one numeric feature
    Ale(AleArgs),
    /// Draw the fitted tree
    Tree(TreeArgs),
    /// Generate a synthetic dataset
    Synth(SynthArgs),
    /// Cross-validated benchmark from a JSON spec
    Bench(BenchArgs),
    /// Discuss one prediction with a chat-completion endpoint
    Chat(ChatArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Trust,
    Cart,
    Lasso,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Response column
    #[arg(long, default_value = "y")]
    target: String,
    /// Model file to write
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    max_leaves: usize,
    #[arg(long, default_value_t = 123)]
    seed: u64,
    /// Folds for the leaf-level cross-validation
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    #[arg(long, value_enum, default_value = "trust")]
    mode: Mode,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (standard output when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add OOD distance, flag and range-breach columns
    #[arg(long)]
    check_ood: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Zero-based row index
    #[arg(long)]
    row: usize,
    /// Report file (standard output when absent)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Root-to-leaf path diagram
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled data, usually the training set
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value_t = 123)]
    seed: u64,
    /// Output CSV (standard output when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bar chart with null bands
    #[arg(long)]
    svg: Option<PathBuf>,
    /// basic, signed or none
    #[arg(long, default_value = "signed")]
    plot: String,
}

#[derive(Args)]
struct AleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Feature name
    #[arg(long)]
    feature: String,
    #[arg(long, default_value_t = DEFAULT_ALE_BINS)]
    bins: usize,
    /// Output CSV (standard output when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    model: PathBuf,
    /// text or svg
    #[arg(long, default_value = "text")]
    format: String,
    /// Output file (standard output when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// correlated, friedman, max, sparse or steps
    #[arg(long)]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    noise_sd: f64,
    #[arg(long, default_value_t = 123)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON benchmark spec
    #[arg(long)]
    spec: PathBuf,
    /// Also write the full-precision results CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChatArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    row: usize,
    #[arg(long, default_value = DEFAULT_PERSONA)]
    persona: String,
    /// Print the prompt and answer with canned replies; nothing is sent
    #[arg(long)]
    dry_run: bool,
    /// Chat-completion URL (the key is read from TRUST_LLM_API_KEY)
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the endpoint
    #[arg(long, default_value = "default")]
    llm_model: String,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
    /// Transcript file
    #[arg(long, default_value = "chat_transcript.txt")]
    transcript: PathBuf,
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| TrustError::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(content.as_bytes())
                .map_err(|e| TrustError::io("<stdout>", e))
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| TrustError::io(path, e))
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_csv(&a.data, &a.target)?;
    let kind = match a.mode {
        Mode::Trust => ModelKind::Trust,
        Mode::Cart => ModelKind::CartMode,
        Mode::Lasso => ModelKind::LassoMode,
    };
    let mut config = kind.config(a.seed);
    config.cv_folds = a.cv_folds;
    if !matches!(a.mode, Mode::Lasso) {
        config.max_leaves = a.max_leaves;
    }
    let model = grow(&data, &config)?;
    model.save(&a.out)?;
    println!(
        "trained on {} rows: {} leaves, depth {}, t = {}",
        data.n_rows,
        model.n_leaves(),
        model.depth(),
        format_f64(model.t)
    );
    Ok(())
}

fn breach_text(model: &TrustModel, b: &[trust_core::robust::Breach]) -> String {
    b.iter()
        .map(|b| {
            let dir = match b.direction {
                BreachDirection::Above => "above",
                BreachDirection::Below => "below",
            };
            format!(
                "{}:{dir}:{}%",
                model.schema.features[b.feature].name,
                format_f64(b.breach_pct)
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = TrustModel::load(&a.model)?;
    let data = load_csv_features(&a.data, Some(&model.schema.target_name))?;
    let preds = model.predict(&data, a.check_ood)?;
    let mut out = String::from(if a.check_ood {
        "prediction,ood_distance,ood_flag,breaches\n"
    } else {
        "prediction\n"
    });
    for p in &preds {
        match &p.ood {
            Some(o) if a.check_ood => {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    format_f64(p.value),
                    format_f64(o.distance),
                    o.is_ood,
                    breach_text(&model, &o.breaches)
                );
            }
            _ => {
                let _ = writeln!(out, "{}", format_f64(p.value));
            }
        }
    }
    let flagged = preds
        .iter()
        .filter(|p| p.ood.as_ref().is_some_and(|o| o.is_ood))
        .count();
    if flagged > 0 {
        log::warn!("{flagged} of {} rows are out of distribution", preds.len());
    }
    write_output(a.out.as_deref(), &out)
}

fn load_model_and_data(model: &Path, data: &Path) -> Result<(TrustModel, trust_core::data::Dataset)> {
    let model = TrustModel::load(model)?;
    let data = load_csv_features(data, Some(&model.schema.target_name))?;
    Ok((model, data))
}

fn explain(a: ExplainArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.model, &a.data)?;
    let e = local_explanation(&model, &data, a.row)?;
    if let Some(svg) = &a.svg {
        write_file(svg, &path_svg(&e))?;
    }
    write_output(a.report.as_deref(), &explanation_report(&model, &e))
}

fn importance(a: ImportanceArgs) -> Result<()> {
    let plot: ImportancePlot = a.plot.parse()?;
    let model = TrustModel::load(&a.model)?;
    let data = load_csv(&a.data, &model.schema.target_name)?;
    let cfg = ImportanceConfig {
        replications: a.replications,
        seed: a.seed,
        ..ImportanceConfig::default()
    };
    let report = importance_report(&model, &data, &cfg)?;
    if let Some(path) = &a.svg {
        if let Some(svg) = importance_svg(&report, plot) {
            write_file(path, &svg)?;
        }
    }
    write_output(a.out.as_deref(), &importance_csv(&report))
}

fn ale(a: AleArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.model, &a.data)?;
    let j = model
        .schema
        .features
        .iter()
        .position(|f| f.name == a.feature)
        .ok_or_else(|| TrustError::SchemaMismatch(format!("model has no feature `{}`", a.feature)))?;
    let curve = ale_curve(&model, &data, j, a.bins)?;
    if let Some(svg) = &a.svg {
        write_file(svg, &ale_svg(&curve))?;
    }
    write_output(a.out.as_deref(), &ale_csv(&curve))
}

fn tree(a: TreeArgs) -> Result<()> {
    let format: TreeFormat = a.format.parse()?;
    let model = TrustModel::load(&a.model)?;
    write_output(a.out.as_deref(), &render_tree(&model, format))
}

fn synth(a: SynthArgs) -> Result<()> {
    let family: SyntheticFamily = a.family.parse()?;
    let d = generate_synthetic(&SyntheticSpec {
        family,
        n: a.n,
        noise_sd: a.noise_sd,
        seed: a.seed,
    })?;
    save_csv(&d, &a.out)
}

fn bench(a: BenchArgs) -> Result<()> {
    let spec = BenchSpec::load(&a.spec)?;
    let result = run_benchmark(&spec)?;
    let (csv, text) = render_table(&result);
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => write_output(None, &format!("{csv}\n"))?,
    }
    write_output(None, &text)
}

fn chat(a: ChatArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.model, &a.data)?;
    let e = local_explanation(&model, &data, a.row)?;
    let endpoint = match (&a.endpoint, a.dry_run) {
        (Some(u), _) => u.clone(),
        (None, true) => String::new(),
        (None, false) => {
            return Err(TrustError::InvalidArgument(
                "--endpoint is required unless --dry-run is set".into(),
            ))
        }
    };
    let mut config = LlmConfig::from_env(endpoint, a.llm_model);
    config.persona = a.persona;
    config.temperature = a.temperature;
    if config.api_key.is_none() && !a.dry_run {
        log::warn!("TRUST_LLM_API_KEY is not set; sending requests without authorization");
    }
    let seed = build_prompt(&e, &model, &config.persona);
    let opts = ChatOptions {
        dry_run: a.dry_run,
        transcript_path: Some(&a.transcript),
        ..ChatOptions::default()
    };
    let stdin = io::stdin();
    let outcome = chat_loop(
        &config,
        seed,
        &mut HttpTransport,
        &mut stdin.lock(),
        &mut io::stdout(),
        &opts,
    );
    eprintln!("transcript saved to {}", a.transcript.display());
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Explain(a) => explain(a),
        Command::Importance(a) => importance(a),
        Command::Ale(a) => ale(a),
        Command::Tree(a) => tree(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::Chat(a) => chat(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
