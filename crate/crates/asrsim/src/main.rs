//! Command-line surface for the toolkit: align/score transcripts, build and
//! inspect confusion models, inject noise, validate injection, score DST
//! predictions, or run the whole pipeline from one config file.
//!
//! Exit codes: 0 success, 2 usage errors, 3 parse/I-O errors, 4 validation
//! failures. Errors go to stderr, data to stdout.

use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use asrsim::align::{align, AlignConfig, Alignment, EditKind};
use asrsim::confusion::{build_model, ConfusionModel, ModelMeta, TokenOutcome};
use asrsim::corpus::{self, Dialogue, DialogueFormat, TranscriptPair};
use asrsim::dsteval;
use asrsim::inject::{inject_corpus, inject_slot_values, validate_injection, InjectMode, InjectionConfig};
use asrsim::metrics::{score_corpus, ErrorReport};
use asrsim::textnorm::{self, Token, NORMALIZER_VERSION};
use asrsim::Error;

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "asrsim", version, about = "ASR error measurement, confusion modeling, and noise injection")]
struct Cli {
    /// Worker threads for parallel stages (env: ASRSIM_JOBS; default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Human,
    Structured,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightPreset {
    /// All edits cost 1
    Unit,
    /// NIST sclite weighting: substitution 4, insertion 3, deletion 3
    Sclite,
}

impl WeightPreset {
    fn config(self) -> AlignConfig {
        match self {
            WeightPreset::Unit => AlignConfig::unit(),
            WeightPreset::Sclite => AlignConfig::sclite(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorpusFormat {
    Native,
    Multiwoz21,
}

impl From<CorpusFormat> for DialogueFormat {
    fn from(f: CorpusFormat) -> Self {
        match f {
            CorpusFormat::Native => DialogueFormat::Native,
            CorpusFormat::Multiwoz21 => DialogueFormat::MultiWoz21,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Align transcript pairs and print per-pair edit operations
    Align(AlignArgs),
    /// Score transcript pairs: insertion/deletion/substitution rates, WER, SER
    Score(ScoreArgs),
    /// Build a confusion model from transcript pairs
    ModelBuild(ModelBuildArgs),
    /// Print the confusion profile of one token
    ModelInspect(ModelInspectArgs),
    /// Inject model errors into a dialogue corpus
    Inject(InjectArgs),
    /// Re-measure error rates of a noisy corpus against its clean counterpart
    Validate(ValidateArgs),
    /// Score dialogue-state predictions with Joint Goal Accuracy
    Jga(JgaArgs),
    /// Run align, model-build, inject, and validate from one config file
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct AlignArgs {
    /// Transcript pair file (JSONL with id/ref/hyp), or - for stdin
    #[arg(long)]
    pairs: String,
    #[arg(long, value_enum, default_value_t = WeightPreset::Unit)]
    weights: WeightPreset,
}

#[derive(Args)]
struct ScoreArgs {
    /// Transcript pair file, or - for stdin
    #[arg(long)]
    pairs: String,
    #[arg(long, value_enum, default_value_t = WeightPreset::Unit)]
    weights: WeightPreset,
}

#[derive(Args)]
struct ModelBuildArgs {
    #[arg(long)]
    pairs: String,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Source corpus identifier recorded in model metadata
    #[arg(long, default_value = "")]
    source: String,
    #[arg(long, value_enum, default_value_t = WeightPreset::Unit)]
    weights: WeightPreset,
}

#[derive(Args)]
struct ModelInspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Token to inspect
    token: String,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Native)]
    corpus_format: CorpusFormat,
    #[arg(long)]
    model: PathBuf,
    /// Output corpus file (native format)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
    mode: ModeArg,
    /// Injection log output file (JSONL)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Perturb this fraction of target-slot value occurrences instead of
    /// running whole-turn injection
    #[arg(long, default_value_t = 0.0)]
    slot_fraction: f64,
    /// Comma-separated target slot names, e.g. hotel-name,train-departure
    #[arg(long, value_delimiter = ',')]
    slots: Vec<String>,
    /// Also inject into system turns
    #[arg(long)]
    include_system_turns: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Stochastic,
    Quota,
}

impl From<ModeArg> for InjectMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stochastic => InjectMode::Stochastic,
            ModeArg::Quota => InjectMode::Quota,
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Native)]
    clean_format: CorpusFormat,
    #[arg(long)]
    noisy: PathBuf,
}

#[derive(Args)]
struct JgaArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Native)]
    gold_format: CorpusFormat,
    /// Prediction file (JSONL with dialogue_id/turn_index/slots)
    #[arg(long)]
    predictions: PathBuf,
    /// Compare values verbatim instead of lowercased with collapsed whitespace
    #[arg(long)]
    no_normalize_values: bool,
    /// Print one line per scored turn
    #[arg(long)]
    per_turn: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config file's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

/// Pipeline config: flags override file values.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    version: u32,
    pairs: PathBuf,
    corpus: PathBuf,
    #[serde(default = "default_corpus_format")]
    corpus_format: String,
    model_out: PathBuf,
    noisy_out: PathBuf,
    log_out: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default)]
    slot_fraction: f64,
    #[serde(default)]
    target_slots: Vec<String>,
    #[serde(default)]
    include_system_turns: bool,
    #[serde(default)]
    source: String,
}

fn default_corpus_format() -> String {
    "native".into()
}

fn default_mode() -> String {
    "stochastic".into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| std::env::var("ASRSIM_JOBS").ok().and_then(|v| v.parse().ok()));
    if let Some(jobs) = jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("asrsim: failed to configure worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("asrsim: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Io { .. } | Error::Format { .. } | Error::DuplicateId(_) => {
            EXIT_PARSE
        }
        _ => EXIT_VALIDATION,
    }
}

fn run(cli: Cli) -> asrsim::Result<()> {
    match cli.command {
        Command::Align(args) => cmd_align(args, cli.format),
        Command::Score(args) => cmd_score(args, cli.format),
        Command::ModelBuild(args) => cmd_model_build(args),
        Command::ModelInspect(args) => cmd_model_inspect(args, cli.format),
        Command::Inject(args) => cmd_inject(args, cli.format),
        Command::Validate(args) => cmd_validate(args, cli.format),
        Command::Jga(args) => cmd_jga(args, cli.format),
        Command::Pipeline(args) => cmd_pipeline(args, cli.format),
    }
}

fn read_pairs_arg(spec: &str) -> asrsim::Result<Vec<TranscriptPair>> {
    if spec == "-" {
        let stdin = std::io::stdin();
        if stdin.is_terminal() {
            eprintln!("asrsim: reading transcript pairs from stdin");
        }
        corpus::read_pairs_from(stdin.lock())
    } else {
        corpus::read_pairs(Path::new(spec))
    }
}

fn align_pairs(
    pairs: &[TranscriptPair],
    cfg: AlignConfig,
) -> Vec<(Vec<Token>, Vec<Token>, Alignment)> {
    pairs
        .par_iter()
        .map(|pair| {
            let reference = textnorm::tokenize_reference(&pair.ref_text);
            let hypothesis = textnorm::tokenize_hypothesis(&pair.hyp_text);
            let alignment = align(&reference, &hypothesis, cfg);
            (reference, hypothesis, alignment)
        })
        .collect()
}

fn cmd_align(args: AlignArgs, format: OutputFormat) -> asrsim::Result<()> {
    let pairs = read_pairs_arg(&args.pairs)?;
    let aligned = align_pairs(&pairs, args.weights.config());
    for (pair, (reference, hypothesis, alignment)) in pairs.iter().zip(&aligned) {
        match format {
            OutputFormat::Structured => {
                let record = serde_json::json!({
                    "id": pair.id,
                    "cost": alignment.cost,
                    "ops": alignment.ops,
                });
                println!("{record}");
            }
            OutputFormat::Human => {
                let ops: String = alignment
                    .ops
                    .iter()
                    .map(|op| match op.kind {
                        EditKind::Match => 'C',
                        EditKind::Substitute => 'S',
                        EditKind::Delete => 'D',
                        EditKind::Insert => 'I',
                    })
                    .collect();
                println!(
                    "{}\tcost={}\t{}\tref={}\thyp={}",
                    pair.id,
                    alignment.cost,
                    ops,
                    textnorm::join(reference),
                    textnorm::join(hypothesis)
                );
            }
        }
    }
    Ok(())
}

fn report_json(report: &ErrorReport) -> serde_json::Value {
    serde_json::json!({
        "n_ref_words": report.n_ref_words,
        "n_sentences": report.n_sentences,
        "n_error_sentences": report.n_error_sentences,
        "insertions": report.insertions,
        "deletions": report.deletions,
        "substitutions": report.substitutions,
        "ins_rate": report.ins_rate(),
        "del_rate": report.del_rate(),
        "sub_rate": report.sub_rate(),
        "wer": report.wer(),
        "ser": report.ser(),
    })
}

fn print_report(report: &ErrorReport, format: OutputFormat) {
    match format {
        OutputFormat::Human => println!("{report}"),
        OutputFormat::Structured => println!("{}", report_json(report)),
    }
}

fn cmd_score(args: ScoreArgs, format: OutputFormat) -> asrsim::Result<()> {
    let pairs = read_pairs_arg(&args.pairs)?;
    let aligned = align_pairs(&pairs, args.weights.config());
    let report = score_corpus(aligned.iter().map(|(_, _, a)| a));
    print_report(&report, format);
    Ok(())
}

fn build_model_from_pairs(
    pairs: &[TranscriptPair],
    weights: AlignConfig,
    source: &str,
) -> asrsim::Result<ConfusionModel> {
    let aligned = align_pairs(pairs, weights);
    let meta = ModelMeta {
        source: source.to_string(),
        normalizer: NORMALIZER_VERSION.to_string(),
        params: [
            ("n_pairs".to_string(), pairs.len().to_string()),
            (
                "align_weights".to_string(),
                format!("{}/{}/{}", weights.sub_weight, weights.ins_weight, weights.del_weight),
            ),
        ]
        .into_iter()
        .collect(),
    };
    build_model(&aligned, meta)
}

fn cmd_model_build(args: ModelBuildArgs) -> asrsim::Result<()> {
    let pairs = read_pairs_arg(&args.pairs)?;
    let model = build_model_from_pairs(&pairs, args.weights.config(), &args.source)?;
    model.save(&args.out)?;
    eprintln!(
        "asrsim: wrote model with {} token profiles and {} insertion anchors to {}",
        model.profiles.len(),
        model.insertion_profiles.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_model_inspect(args: ModelInspectArgs, format: OutputFormat) -> asrsim::Result<()> {
    let model = ConfusionModel::load(&args.model)?;
    let token = args.token.to_lowercase();
    let Some(profile) = model.query(&token) else {
        return Err(Error::Config(format!("no profile for token {token:?}")));
    };
    match format {
        OutputFormat::Structured => {
            println!("{}", serde_json::to_string(profile).expect("profile serialization"));
        }
        OutputFormat::Human => {
            let pct = |count: u64| 100.0 * count as f64 / profile.total as f64;
            let correct = profile
                .outcomes
                .get(&TokenOutcome::Correct)
                .copied()
                .unwrap_or(0);
            println!(
                "'{token}' ({} occurrences): correctly recognized in {:.1}% of the cases",
                profile.total,
                pct(correct)
            );
            for (outcome, &count) in &profile.outcomes {
                match outcome {
                    TokenOutcome::Correct => {}
                    TokenOutcome::SubstitutedBy { target } => {
                        println!("  confused with '{}' ({:.1}%)", target.join(" "), pct(count));
                    }
                    TokenOutcome::Deleted => {
                        println!("  deleted ({:.1}%)", pct(count));
                    }
                }
            }
            if let Some(ins) = model.insertion_profile(&token) {
                for (seq, &count) in &ins.insertions {
                    println!(
                        "  followed by inserted '{}' ({:.1}% of anchors)",
                        seq.join(" "),
                        100.0 * count as f64 / ins.anchor_total as f64
                    );
                }
            }
        }
    }
    Ok(())
}

fn injection_config(args: &InjectArgs) -> InjectionConfig {
    InjectionConfig {
        seed: args.seed,
        mode: args.mode.into(),
        slot_noise_fraction: args.slot_fraction,
        target_slots: args.slots.iter().cloned().collect::<BTreeSet<_>>(),
        user_turns_only: !args.include_system_turns,
    }
}

fn run_injection(
    dialogues: &[Dialogue],
    model: &ConfusionModel,
    cfg: &InjectionConfig,
    out: &Path,
    log_path: Option<&Path>,
    format: OutputFormat,
) -> asrsim::Result<()> {
    let (noisy, log) = if cfg.slot_noise_fraction > 0.0 {
        inject_slot_values(dialogues, model, cfg)?
    } else {
        inject_corpus(dialogues, model, cfg)?
    };
    for warning in &log.warnings {
        eprintln!("asrsim: warning: {warning}");
    }
    corpus::write_dialogues(&noisy, out)?;
    if let Some(log_path) = log_path {
        log.save(log_path)?;
    }
    match format {
        OutputFormat::Structured => {
            println!(
                "{}",
                serde_json::json!({
                    "dialogues": noisy.len(),
                    "rewrites": log.records.len(),
                    "warnings": log.warnings,
                })
            );
        }
        OutputFormat::Human => {
            eprintln!(
                "asrsim: injected {} rewrites into {} dialogues -> {}",
                log.records.len(),
                noisy.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn cmd_inject(args: InjectArgs, format: OutputFormat) -> asrsim::Result<()> {
    let dialogues = corpus::read_dialogues(&args.corpus, args.corpus_format.into())?;
    let model = ConfusionModel::load(&args.model)?;
    let cfg = injection_config(&args);
    run_injection(&dialogues, &model, &cfg, &args.out, args.log.as_deref(), format)
}

fn cmd_validate(args: ValidateArgs, format: OutputFormat) -> asrsim::Result<()> {
    let clean = corpus::read_dialogues(&args.clean, args.clean_format.into())?;
    let noisy = corpus::read_dialogues(&args.noisy, DialogueFormat::Native)?;
    let report = validate_injection(&clean, &noisy)?;
    print_report(&report, format);
    Ok(())
}

fn cmd_jga(args: JgaArgs, format: OutputFormat) -> asrsim::Result<()> {
    let gold = corpus::read_dialogues(&args.gold, args.gold_format.into())?;
    let predictions = dsteval::read_predictions(&args.predictions)?;
    let report = dsteval::joint_goal_accuracy(&gold, &predictions, !args.no_normalize_values)?;
    match format {
        OutputFormat::Structured => {
            let mut value = serde_json::json!({
                "n_turns": report.n_turns,
                "n_exact": report.n_exact,
                "jga": report.jga(),
            });
            if args.per_turn {
                value["per_turn"] = serde_json::to_value(&report.per_turn).expect("per-turn");
            }
            println!("{value}");
        }
        OutputFormat::Human => {
            match report.jga() {
                Some(jga) => println!("JGA {jga:.2} ({}/{} turns exact)", report.n_exact, report.n_turns),
                None => println!("JGA n/a (no annotated turns)"),
            }
            if args.per_turn {
                for turn in &report.per_turn {
                    println!(
                        "{}\t{}\t{}",
                        turn.dialogue_id,
                        turn.turn_index,
                        if turn.matched { "match" } else { "miss" }
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs, format: OutputFormat) -> asrsim::Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let config: PipelineConfig =
        toml::from_str(&text).map_err(|e| Error::format(&args.config, e.to_string()))?;
    if config.version != 1 {
        return Err(Error::Config(format!(
            "unsupported pipeline config version {}",
            config.version
        )));
    }
    let corpus_format: DialogueFormat = config.corpus_format.parse()?;
    let mode: InjectMode = match args.mode {
        Some(m) => m.into(),
        None => match config.mode.as_str() {
            "stochastic" => InjectMode::Stochastic,
            "quota" => InjectMode::Quota,
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        },
    };

    let pairs = corpus::read_pairs(&config.pairs)?;
    let model = build_model_from_pairs(&pairs, AlignConfig::unit(), &config.source)?;
    model.save(&config.model_out)?;

    let dialogues = corpus::read_dialogues(&config.corpus, corpus_format)?;
    let cfg = InjectionConfig {
        seed: args.seed.unwrap_or(config.seed),
        mode,
        slot_noise_fraction: config.slot_fraction,
        target_slots: config.target_slots.iter().cloned().collect(),
        user_turns_only: !config.include_system_turns,
    };
    run_injection(
        &dialogues,
        &model,
        &cfg,
        &config.noisy_out,
        config.log_out.as_deref(),
        format,
    )?;

    let noisy = corpus::read_dialogues(&config.noisy_out, DialogueFormat::Native)?;
    let report = validate_injection(&dialogues, &noisy)?;
    print_report(&report, format);
    Ok(())
}
