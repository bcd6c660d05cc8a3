use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use scc_core::codeform::LexMode;
use scc_core::corpus::{clean, ingest, split, stats, Split, SplitRatios};
use scc_core::eval::{
    aggregate_ratings, export_questionnaire, format_ratings, sample_size, unblind, LabelMap, RatingRecord,
    SampleSizeParams,
};
use scc_core::promptgen::{CapStyle, DemoOrder, PromptMode};
use scc_core::retrieval::Strategy;
use scc_core::semantic::{fit_whitening, load_embeddings, load_whitening, save_embeddings, save_whitening, EmbeddingMatrix};

use crate::config::Config;
use crate::embed::{import_embeddings, EmbedClient, HashingEmbedder};
use crate::error::{CliError, CliResult};
use crate::io::{read_corpus, read_json, read_jsonl, write_atomic, write_corpus, write_json, write_jsonl};
use crate::manifest::{rerun, run_pipeline, verify, RunManifest, MANIFEST_FILE};
use crate::stages::{
    ablate, build_index, empty_sets, evaluate_outputs, format_ablation, generate, make_gateway, render_prompts,
    resolve_cache_dir, resolve_demos, retrieve_all, reuse_top1, split_refs, AblationInput, DemoLine,
    GatewaySpec, PromptRecord,
};

#[derive(Parser, Debug)]
#[command(name = "scc", version, about = "Retrieval-augmented comment generation for smart-contract code")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate raw JSON lines into a corpus file.
    Ingest(IngestArgs),
    /// Remove duplicated, template and short comments.
    Clean(CleanArgs),
    /// Assign train/validation/test splits.
    Split(SplitArgs),
    /// Per-split counts and average lengths.
    Stats(StatsArgs),
    /// Produce an SCEB embedding file.
    Embed(EmbedArgs),
    /// Fit or apply the whitening transform.
    #[command(subcommand)]
    Whiten(WhitenCommand),
    /// Select demonstrations for each query.
    Retrieve(RetrieveArgs),
    /// Render prompts from demonstrations.
    Prompt(PromptArgs),
    /// Query the LLM backend for every prompt.
    Generate(GenerateArgs),
    /// Score generations against ground truth and baselines.
    Evaluate(EvaluateArgs),
    /// Shot-count sweep and strategy comparison.
    Ablate(AblateArgs),
    /// Sample size for a finite population.
    SampleSize(SampleSizeArgs),
    /// Human-study questionnaire export and rating aggregation.
    #[command(subcommand)]
    Questionnaire(QuestionnaireCommand),
    /// Run every stage and write a manifest.
    Pipeline(PipelineArgs),
    /// Check recorded output digests.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Write rejected lines here as JSON.
    #[arg(long)]
    pub rejected: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Removal report (JSON lines).
    #[arg(long)]
    pub removed: Option<PathBuf>,
    #[arg(long)]
    pub dup_code_threshold: Option<usize>,
    #[arg(long)]
    pub template_freq_threshold: Option<usize>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long, value_parser = ["comment", "code"])]
    pub min_words_target: Option<String>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Train,validation,test proportions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Only embed this split.
    #[arg(long)]
    pub split: Option<Split>,
    /// Embedding service base URL.
    #[arg(long, conflicts_with_all = ["import", "hashing"])]
    pub service: Option<String>,
    /// Existing SCEB file or `{id, vector}` JSON lines.
    #[arg(long, conflicts_with = "hashing")]
    pub import: Option<PathBuf>,
    /// Offline feature-hashing embedder.
    #[arg(long)]
    pub hashing: bool,
    /// Embedding width D.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub max_input_length: Option<usize>,
    #[arg(long, value_parser = ["cls", "mean", "first_last_avg"])]
    pub pooling: Option<String>,
    /// Send code verbatim instead of subtokens.
    #[arg(long)]
    pub raw_text: bool,
}

#[derive(Subcommand, Debug)]
pub enum WhitenCommand {
    /// Fit on the train rows (or every row without --corpus).
    Fit {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Output dimension d.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Write whitened vectors as a d-dimensional SCEB file.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.replace('-', "_").parse()
}

#[derive(Args, Debug, Default)]
pub struct SelectionFlags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// full, random, no-whitening or semantic-only.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub lex_mode: Option<LexModeArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LexModeArg {
    Subtoken,
    Raw,
}

impl SelectionFlags {
    fn apply(&self, cfg: &mut Config) -> CliResult<()> {
        let s = &mut cfg.selection;
        if let Some(v) = self.n {
            s.top_n = v;
        }
        if let Some(v) = self.k {
            s.k = v;
        }
        if let Some(v) = self.lambda {
            s.lambda = v;
        }
        if let Some(v) = self.strategy {
            s.strategy = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.lex_mode {
            s.lex_mode = match v {
                LexModeArg::Subtoken => LexMode::Subtoken,
                LexModeArg::Raw => LexMode::Raw,
            };
        }
        s.retrieval().validate()?;
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Split whose pairs act as queries.
    #[arg(long, default_value = "test")]
    pub queries: Split,
    #[command(flatten)]
    pub selection: SelectionFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Zero,
    One,
    Few,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Zero => PromptMode::Zero,
            ModeArg::One => PromptMode::One,
            ModeArg::Few => PromptMode::Few,
        }
    }
}

#[derive(Args, Debug)]
pub struct PromptArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Demonstrations from `retrieve`; optional for zero-shot.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Token budget; least similar demonstrations are dropped to fit.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Layout file with {INSTRUCTION}, {DEMOS}, {QUERY}, {CAP}.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Put the most similar demonstration first instead of last.
    #[arg(long)]
    pub most_similar_first: bool,
    /// Render the best comment itself in the cap line.
    #[arg(long)]
    pub literal_cap: bool,
    /// Query split used for zero-shot without --demos.
    #[arg(long, default_value = "test")]
    pub queries: Split,
}

#[derive(Args, Debug, Default)]
pub struct LlmFlags {
    #[arg(long, value_parser = ["remote", "mock", "replay"])]
    pub backend: Option<String>,
    #[arg(long, value_parser = ["echo_top1", "fixed", "truncate_ground_truth"])]
    pub mock: Option<String>,
    #[arg(long)]
    pub fixed_text: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

impl LlmFlags {
    fn apply(&self, cfg: &mut Config) -> CliResult<()> {
        let l = &mut cfg.llm;
        if let Some(v) = &self.backend {
            l.backend = v.clone();
        }
        if let Some(v) = &self.mock {
            l.mock = v.clone();
        }
        if let Some(v) = &self.fixed_text {
            l.fixed_text = v.clone();
        }
        if let Some(v) = &self.cache_dir {
            l.cache_dir = Some(v.clone());
        }
        if let Some(v) = &self.llm_model {
            l.model = v.clone();
        }
        if let Some(v) = &self.base_url {
            l.base_url = v.clone();
        }
        if let Some(v) = self.concurrency {
            l.concurrency = v;
        }
        if let Some(v) = self.temperature {
            l.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            l.max_tokens = v;
        }
        cfg.validate()
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Demonstration order the prompts were rendered with (for echo_top1).
    #[arg(long)]
    pub most_similar_first: bool,
    #[command(flatten)]
    pub llm: LlmFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Against {
    GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    ReuseTop1,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub generations: PathBuf,
    #[arg(long, value_enum, default_value = "ground-truth")]
    pub against: Against,
    /// Built-in baselines; reuse-top1 needs --demos from the full strategy.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub baselines: Vec<BaselineArg>,
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Extra baseline as NAME=generations.jsonl.
    #[arg(long = "baseline-file")]
    pub baseline_files: Vec<String>,
    #[arg(long, default_value = "sccllm")]
    pub name: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub queries: Split,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,5")]
    pub shots: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "full,random,no_whitening,semantic_only")]
    pub strategies: Vec<Strategy>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub queries: Split,
    #[command(flatten)]
    pub selection: SelectionFlags,
    #[command(flatten)]
    pub llm: LlmFlags,
}

#[derive(Args, Debug)]
pub struct SampleSizeArgs {
    #[arg(long)]
    pub size: u64,
    #[arg(long, default_value_t = 0.05)]
    pub e: f64,
    #[arg(long, default_value_t = 1.96)]
    pub z: f64,
}

#[derive(Subcommand, Debug)]
pub enum QuestionnaireCommand {
    /// Blinded review forms plus the slot-to-approach key.
    Export {
        #[arg(long)]
        corpus: PathBuf,
        /// NAME=generations.jsonl, repeatable.
        #[arg(long = "approach", required = true)]
        approaches: Vec<String>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "test")]
        queries: Split,
    },
    /// Unblind ratings and average them per approach.
    Aggregate {
        /// JSON lines of {item_id, approach (slot), similarity, naturalness, informativeness}.
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Raw corpus file; taken from --manifest when re-running.
    #[arg(long, required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub workdir: PathBuf,
    /// Re-run a recorded manifest instead of the current config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = ["remote", "mock", "replay"])]
    pub backend: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding the outputs; defaults to the manifest's directory.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
}

fn emit(out: &mut dyn Write, value: serde_json::Value) -> CliResult<()> {
    writeln!(out, "{value}").map_err(|e| CliError::data(format!("stdout: {e}")))
}

fn warn(value: serde_json::Value) {
    eprintln!("{value}");
}

fn load_matrix(path: &Path) -> CliResult<EmbeddingMatrix> {
    load_embeddings(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_generations(path: &Path) -> CliResult<HashMap<String, String>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        text: String,
    }
    let rows: Vec<Line> = read_jsonl(path)?;
    let mut map = HashMap::with_capacity(rows.len());
    for r in rows {
        if map.insert(r.id.clone(), r.text).is_some() {
            return Err(CliError::data(format!("{}: duplicate id {:?}", path.display(), r.id)));
        }
    }
    Ok(map)
}

fn named_file(spec: &str) -> CliResult<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(CliError::usage(format!("expected NAME=PATH, got {spec:?}"))),
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => {
            let f = std::fs::File::open(&a.input).map_err(|e| CliError::io(&a.input, e))?;
            let ingested = ingest(std::io::BufReader::new(f))?;
            for e in &ingested.errors {
                warn(serde_json::json!({"warning": "rejected", "line": e.line, "message": e.message}));
            }
            write_corpus(&a.output, &ingested.corpus)?;
            if let Some(p) = &a.rejected {
                write_jsonl(p, &ingested.errors)?;
            }
            emit(
                out,
                serde_json::json!({"records": ingested.corpus.len(), "rejected": ingested.errors.len()}),
            )
        }
        Command::Clean(a) => {
            let c = &mut cfg.corpus;
            if let Some(v) = a.dup_code_threshold {
                c.dup_code_threshold = v;
            }
            if let Some(v) = a.template_freq_threshold {
                c.template_freq_threshold = v;
            }
            if let Some(v) = a.min_words {
                c.min_words = v;
            }
            if let Some(v) = a.min_words_target {
                c.min_words_target = v;
            }
            let corpus = read_corpus(&a.input)?;
            let (cleaned, report) = clean(&corpus, &cfg.corpus.clean()?)?;
            write_corpus(&a.output, &cleaned)?;
            if let Some(p) = &a.removed {
                write_jsonl(p, &report.removed)?;
            }
            let mut by_rule: BTreeMap<String, usize> = BTreeMap::new();
            for r in &report.removed {
                let rule = serde_json::to_value(r.rule).expect("rule serializes");
                *by_rule.entry(rule.as_str().unwrap_or_default().to_string()).or_default() += 1;
            }
            emit(out, serde_json::json!({"kept": cleaned.len(), "removed": by_rule}))
        }
        Command::Split(a) => {
            let ratios = match a.ratios.as_deref() {
                Some([t, v, s]) => SplitRatios::new(*t, *v, *s)?,
                Some(_) => return Err(CliError::usage("--ratios takes three values")),
                None => cfg.corpus.ratios()?,
            };
            let seed = a.seed.unwrap_or(cfg.corpus.split_seed);
            let corpus = read_corpus(&a.input)?;
            let tagged = split(&corpus, ratios, seed)?;
            write_corpus(&a.output, &tagged)?;
            let s = stats(&tagged);
            emit(
                out,
                serde_json::json!({"train": s.train.count, "validation": s.validation.count, "test": s.test.count, "seed": seed}),
            )
        }
        Command::Stats(a) => {
            let corpus = read_corpus(&a.input)?;
            emit(out, serde_json::to_value(stats(&corpus)).expect("stats serialize"))
        }
        Command::Embed(a) => {
            let s = &mut cfg.selection;
            if let Some(v) = a.dim {
                s.embed_dim = v;
            }
            if let Some(v) = a.max_input_length {
                s.max_input_length = v;
            }
            let corpus = read_corpus(&a.input_path())?;
            let pairs: Vec<_> = match a.split {
                Some(sp) => split_refs(&corpus, sp),
                None => corpus.iter().collect(),
            };
            if pairs.is_empty() {
                return Err(CliError::data("nothing to embed"));
            }
            let provider = if a.hashing {
                "hashing"
            } else if a.service.is_some() {
                "service"
            } else if a.import.is_some() {
                "import"
            } else {
                cfg.embed.provider.as_str()
            };
            let m = match provider {
                "import" => import_embeddings(a.import.as_deref().expect("checked"), &pairs)?,
                "hashing" => HashingEmbedder::new(cfg.selection.embed_dim, cfg.selection.max_input_length)?
                    .embed_pairs(pairs.iter().copied())?,
                _ => {
                    let url = a.service.clone().unwrap_or_else(|| cfg.embed.service_url.clone());
                    let pooling = a.pooling.clone().unwrap_or_else(|| cfg.embed.pooling.clone());
                    EmbedClient::new(&url, &pooling, cfg.selection.max_input_length, cfg.embed.batch_size)?
                        .embed_pairs(&pairs, a.raw_text || cfg.embed.raw_text, cfg.selection.embed_dim)?
                }
            };
            let mut buf = Vec::new();
            scc_core::semantic::format::write_embeddings(&m, &mut buf)?;
            write_atomic(&a.output, &buf)?;
            emit(out, serde_json::json!({"rows": m.len(), "dim": m.dim(), "provider": provider}))
        }
        Command::Whiten(WhitenCommand::Fit {
            embeddings,
            corpus,
            output,
            dim,
        }) => {
            let d = dim.unwrap_or(cfg.selection.whitened_dim);
            let m = load_matrix(&embeddings)?;
            let model = match corpus {
                Some(c) => crate::stages::fit_on_train(&read_corpus(&c)?, &m, d)?,
                None => fit_whitening(&m, d)?,
            };
            save_whitening(&model, &output)?;
            emit(
                out,
                serde_json::json!({"input_dim": model.input_dim(), "output_dim": model.output_dim(), "rows": model.source_count()}),
            )
        }
        Command::Whiten(WhitenCommand::Apply {
            model,
            embeddings,
            output,
        }) => {
            let model = load_whitening(&model)?;
            let w = model.apply_matrix(&load_matrix(&embeddings)?)?;
            save_embeddings(&w, &output)?;
            emit(out, serde_json::json!({"rows": w.len(), "dim": w.dim()}))
        }
        Command::Retrieve(a) => {
            a.selection.apply(&mut cfg)?;
            let corpus = read_corpus(&a.corpus)?;
            let embeddings = load_matrix(&a.embeddings)?;
            let model = load_whitening(&a.model)?;
            let index = build_index(&corpus, &embeddings, model, cfg.selection.lex_mode)?;
            let queries = split_refs(&corpus, a.queries);
            if queries.is_empty() {
                return Err(CliError::data(format!("corpus has no {} pairs to query", a.queries)));
            }
            let config = cfg.selection.retrieval();
            let sets = retrieve_all(&index, &queries, &embeddings, &config)?;
            let mut short = 0;
            for s in sets.iter().filter(|s| s.short) {
                short += 1;
                warn(serde_json::json!({"warning": "short_result", "query_id": s.query_id, "found": s.len(), "k": config.k}));
            }
            let lines: Vec<String> = sets.iter().map(|s| s.export_line()).collect();
            write_atomic(&a.output, (lines.join("\n") + "\n").as_bytes())?;
            emit(
                out,
                serde_json::json!({"queries": sets.len(), "short": short, "strategy": config.strategy, "seed": config.seed}),
            )
        }
        Command::Prompt(a) => {
            let p = &mut cfg.prompt;
            if let Some(m) = a.mode {
                p.mode = m.into();
            }
            if a.budget.is_some() {
                p.budget = a.budget;
            }
            if a.layout.is_some() {
                p.layout_file = a.layout.clone();
            }
            if a.most_similar_first {
                p.order = DemoOrder::MostSimilarFirst;
            }
            if a.literal_cap {
                p.cap_style = CapStyle::Literal;
            }
            let corpus = read_corpus(&a.corpus)?;
            let sets = match (&a.demos, cfg.prompt.mode) {
                (Some(d), _) => resolve_demos(read_jsonl::<DemoLine>(d)?, &corpus)?,
                (None, PromptMode::Zero) => empty_sets(&split_refs(&corpus, a.queries)),
                (None, _) => return Err(CliError::usage("--demos is required for one- and few-shot prompts")),
            };
            let prompts = render_prompts(&corpus, &sets, &cfg.prompt.template()?, cfg.prompt.mode, cfg.prompt.budget)?;
            let dropped: usize = prompts.iter().map(|p| p.prompt.dropped_ids.len()).sum();
            write_jsonl(&a.output, &prompts)?;
            emit(out, serde_json::json!({"prompts": prompts.len(), "dropped_demos": dropped}))
        }
        Command::Generate(a) => {
            a.llm.apply(&mut cfg)?;
            if a.most_similar_first {
                cfg.prompt.order = DemoOrder::MostSimilarFirst;
            }
            let corpus = read_corpus(&a.corpus)?;
            let prompts: Vec<PromptRecord> = read_jsonl(&a.prompts)?;
            let gateway = make_gateway(GatewaySpec {
                llm: &cfg.llm,
                cache_dir: resolve_cache_dir(cfg.llm.cache_dir.as_ref(), None),
                order: cfg.prompt.order,
                ground_truth: corpus.iter().map(|p| (p.id.clone(), p.comment.clone())).collect(),
            })?;
            let (gens, stats) = generate(&gateway, &prompts, &cfg.llm)?;
            write_jsonl(&a.output, &gens)?;
            emit(out, serde_json::to_value(stats).expect("stats serialize"))
        }
        Command::Evaluate(a) => {
            let Against::GroundTruth = a.against;
            let corpus = read_corpus(&a.corpus)?;
            let queries = split_refs(&corpus, a.queries);
            let outputs = read_generations(&a.generations)?;
            let mut baselines = BTreeMap::new();
            if a.baselines.contains(&BaselineArg::ReuseTop1) {
                let demos = a
                    .demos
                    .as_ref()
                    .ok_or_else(|| CliError::usage("--baselines reuse-top1 needs --demos"))?;
                let sets = resolve_demos(read_jsonl::<DemoLine>(demos)?, &corpus)?;
                baselines.insert("reuse_top1".to_string(), reuse_top1(&sets)?);
            }
            for spec in &a.baseline_files {
                let (name, path) = named_file(spec)?;
                baselines.insert(name, read_generations(&path)?);
            }
            let report = evaluate_outputs(&queries, &a.name, &outputs, &baselines)?;
            if let Some(p) = &a.output {
                write_json(p, &report)?;
            }
            let mut summary = serde_json::json!({
                "approach": report.approach,
                "n": report.report.n,
                "bleu4": report.report.bleu4,
                "rouge1": report.report.rouge1,
                "rouge2": report.report.rouge2,
                "rougeL": report.report.rouge_l,
            });
            for (name, cmp) in &report.baselines {
                summary[name] = serde_json::json!({
                    "bleu4": cmp.report.bleu4,
                    "rouge1": cmp.report.rouge1,
                    "rouge2": cmp.report.rouge2,
                    "rougeL": cmp.report.rouge_l,
                    "wilcoxon": cmp.wilcoxon,
                });
            }
            emit(out, summary)
        }
        Command::Ablate(a) => {
            a.selection.apply(&mut cfg)?;
            a.llm.apply(&mut cfg)?;
            let corpus = read_corpus(&a.corpus)?;
            let embeddings = load_matrix(&a.embeddings)?;
            let index = build_index(&corpus, &embeddings, load_whitening(&a.model)?, cfg.selection.lex_mode)?;
            let queries = split_refs(&corpus, a.queries);
            if queries.is_empty() {
                return Err(CliError::data(format!("corpus has no {} pairs to query", a.queries)));
            }
            if let Some(&s) = a.shots.iter().find(|&&s| s > index.len()) {
                return Err(CliError::usage(format!("{s} shots exceed the {} training pairs", index.len())));
            }
            let gateway = make_gateway(GatewaySpec {
                llm: &cfg.llm,
                cache_dir: resolve_cache_dir(cfg.llm.cache_dir.as_ref(), None),
                order: cfg.prompt.order,
                ground_truth: queries.iter().map(|q| (q.id.clone(), q.comment.clone())).collect(),
            })?;
            let report = ablate(
                &AblationInput {
                    corpus: &corpus,
                    index: &index,
                    queries: &queries,
                    embeddings: &embeddings,
                    config: &cfg.selection.retrieval(),
                    template: &cfg.prompt.template()?,
                    gateway: &gateway,
                    llm: &cfg.llm,
                },
                &a.shots,
                &a.strategies,
            )?;
            if let Some(p) = &a.output {
                write_json(p, &report)?;
            }
            write!(out, "{}", format_ablation(&report)).map_err(|e| CliError::data(format!("stdout: {e}")))
        }
        Command::SampleSize(a) => {
            let n = sample_size(SampleSizeParams {
                size: a.size,
                e: a.e,
                z: a.z,
            })?;
            writeln!(out, "{n}").map_err(|e| CliError::data(format!("stdout: {e}")))
        }
        Command::Questionnaire(QuestionnaireCommand::Export {
            corpus,
            approaches,
            count,
            seed,
            output,
            labels,
            queries,
        }) => {
            let corpus = read_corpus(&corpus)?;
            let test: Vec<_> = split_refs(&corpus, queries).into_iter().cloned().collect();
            let mut outputs = BTreeMap::new();
            for spec in &approaches {
                let (name, path) = named_file(spec)?;
                outputs.insert(name, read_generations(&path)?);
            }
            let q = export_questionnaire(&test, &outputs, count, seed)?;
            write_json(&output, &q.forms)?;
            write_json(&labels, &q.labels)?;
            emit(out, serde_json::json!({"items": q.forms.len(), "approaches": outputs.len(), "seed": seed}))
        }
        Command::Questionnaire(QuestionnaireCommand::Aggregate {
            ratings,
            labels,
            output,
        }) => {
            let records: Vec<RatingRecord> = read_jsonl(&ratings)?;
            let labels: LabelMap = read_json(&labels)?;
            let summary = aggregate_ratings(&unblind(&records, &labels)?)?;
            if let Some(p) = &output {
                write_json(p, &summary)?;
            }
            write!(out, "{}", format_ratings(&summary)).map_err(|e| CliError::data(format!("stdout: {e}")))
        }
        Command::Pipeline(a) => {
            let manifest = match &a.manifest {
                Some(m) => {
                    let old = RunManifest::load(m)?;
                    let new = rerun(&old, &a.workdir, a.backend.as_deref())?;
                    let reproduced = old.output_digests() == new.output_digests();
                    emit(
                        out,
                        serde_json::json!({"workdir": a.workdir, "stages": new.stages.len(), "reproduced": reproduced}),
                    )?;
                    if !reproduced {
                        return Err(CliError::data("re-run outputs differ from the recorded manifest"));
                    }
                    return Ok(());
                }
                None => {
                    if let Some(b) = &a.backend {
                        cfg.llm.backend = b.clone();
                    }
                    if let Some(s) = a.seed {
                        cfg.corpus.split_seed = s;
                        cfg.selection.seed = s;
                    }
                    let input = a.input.as_ref().expect("required by clap");
                    run_pipeline(&cfg, input, &a.workdir)?
                }
            };
            let report: serde_json::Value = read_json(&a.workdir.join("report.json"))?;
            emit(
                out,
                serde_json::json!({
                    "manifest": a.workdir.join(MANIFEST_FILE),
                    "stages": manifest.stages.len(),
                    "bleu4": report["report"]["bleu4"],
                    "rouge1": report["report"]["rouge1"],
                    "rouge2": report["report"]["rouge2"],
                    "rougeL": report["report"]["rougeL"],
                }),
            )
        }
        Command::Verify(a) => {
            let manifest = RunManifest::load(&a.manifest)?;
            let dir = a
                .workdir
                .clone()
                .or_else(|| a.manifest.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            let mismatches = verify(&manifest, &dir);
            emit(
                out,
                serde_json::json!({"checked": manifest.output_digests().len(), "mismatches": mismatches}),
            )?;
            if mismatches.is_empty() {
                Ok(())
            } else {
                Err(CliError::data(format!("{} outputs differ from the manifest", mismatches.len())))
            }
        }
    }
}

impl EmbedArgs {
    fn input_path(&self) -> PathBuf {
        self.corpus.clone()
    }
}

/// Parses `args` (including the program name) and runs the command.
/// `--help` and `--version` print to `out` and succeed.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                return write!(out, "{}", e.render()).map_err(|e| CliError::data(format!("stdout: {e}")));
            }
            let msg = e.render().to_string();
            let body = msg.split("\n\nUsage:").next().unwrap_or_default();
            let body = body.trim().trim_start_matches("error: ");
            return Err(CliError::usage(body.split_whitespace().collect::<Vec<_>>().join(" ")));
        }
    };
    execute(cli, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn strategies_accept_both_spellings() {
        assert_eq!(parse_strategy("semantic-only").unwrap(), Strategy::SemanticOnly);
        assert_eq!(parse_strategy("no_whitening").unwrap(), Strategy::NoWhitening);
        assert!(parse_strategy("best").is_err());
    }

    #[test]
    fn named_file_needs_both_halves() {
        assert_eq!(named_file("a=b.jsonl").unwrap(), ("a".to_string(), PathBuf::from("b.jsonl")));
        assert!(named_file("=b").is_err());
        assert!(named_file("plain").is_err());
    }
}
