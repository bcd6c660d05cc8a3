//! Pipeline stages as plain functions over in-memory data. Commands wrap these
//! with file I/O; the pipeline and ablation runners call them directly.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use scc_core::codeform::LexMode;
use scc_core::corpus::{CodeCommentPair, Corpus, Split};
use scc_core::eval::{evaluate, wilcoxon_signed_rank, Metric, MetricReport, WilcoxonResult};
use scc_core::promptgen::{enforce_budget, DemoOrder, PromptMode, PromptTemplate, RenderedPrompt};
use scc_core::retrieval::{Demonstration, DemonstrationSet, RetrievalConfig, RetrievalIndex, Strategy};
use scc_core::semantic::{fit_whitening, EmbeddingMatrix, WhiteningModel};
use scc_llm::{
    Backend, Cache, DemoPosition, Gateway, HttpTransport, LlmRequest, MockBackend, MockBehavior, RemoteBackend, Usage,
};

use crate::config::LlmConfig;
use crate::error::{CliError, CliResult};
use crate::io::sha256_hex;

pub const CACHE_DIR_ENV: &str = "SCC_CACHE_DIR";

pub fn split_refs(corpus: &Corpus, split: Split) -> Vec<&CodeCommentPair> {
    corpus.split_pairs(split).collect()
}

fn require_split(corpus: &Corpus, split: Split) -> CliResult<Vec<&CodeCommentPair>> {
    let pairs = split_refs(corpus, split);
    if pairs.is_empty() {
        return Err(CliError::data(format!("corpus has no {split} pairs (run split first)")));
    }
    Ok(pairs)
}

/// Fits the whitening model on the train rows of `embeddings`.
pub fn fit_on_train(corpus: &Corpus, embeddings: &EmbeddingMatrix, dim: usize) -> CliResult<WhiteningModel> {
    let train = require_split(corpus, Split::Train)?;
    let rows = embeddings
        .select(train.iter().map(|p| p.id.as_str()))
        .map_err(|id| CliError::data(format!("no embedding for train pair {id:?}")))?;
    Ok(fit_whitening(&rows, dim)?)
}

pub fn build_index(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    model: WhiteningModel,
    lex_mode: LexMode,
) -> CliResult<RetrievalIndex> {
    let train = require_split(corpus, Split::Train)?;
    Ok(RetrievalIndex::build(train, embeddings, model, lex_mode)?)
}

pub fn retrieve_all(
    index: &RetrievalIndex,
    queries: &[&CodeCommentPair],
    embeddings: &EmbeddingMatrix,
    config: &RetrievalConfig,
) -> CliResult<Vec<DemonstrationSet>> {
    queries
        .iter()
        .map(|q| {
            let v = embeddings
                .get(&q.id)
                .ok_or_else(|| CliError::data(format!("no embedding for query {:?}", q.id)))?;
            Ok(index.retrieve(q, v, config)?)
        })
        .collect()
}

/// Exported demonstration line, without code or comment bodies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRef {
    pub id: String,
    pub semantic_distance: f64,
    pub mixed_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoLine {
    pub query_id: String,
    pub entries: Vec<DemoRef>,
    pub short: bool,
}

/// Rebuilds full demonstration sets from exported lines using `corpus` for bodies.
pub fn resolve_demos(lines: Vec<DemoLine>, corpus: &Corpus) -> CliResult<Vec<DemonstrationSet>> {
    lines
        .into_iter()
        .map(|line| {
            let entries = line
                .entries
                .into_iter()
                .map(|e| {
                    let p = corpus
                        .get(&e.id)
                        .ok_or_else(|| CliError::data(format!("demonstration {:?} is not in the corpus", e.id)))?;
                    Ok(Demonstration {
                        id: e.id,
                        code: p.code.clone(),
                        comment: p.comment.clone(),
                        semantic_distance: e.semantic_distance,
                        mixed_score: e.mixed_score,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(DemonstrationSet {
                query_id: line.query_id,
                entries,
                short: line.short,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub query_id: String,
    #[serde(flatten)]
    pub prompt: RenderedPrompt,
}

pub fn render_prompts(
    corpus: &Corpus,
    sets: &[DemonstrationSet],
    template: &PromptTemplate,
    mode: PromptMode,
    budget: Option<usize>,
) -> CliResult<Vec<PromptRecord>> {
    sets.iter()
        .map(|set| {
            let q = corpus
                .get(&set.query_id)
                .ok_or_else(|| CliError::data(format!("query {:?} is not in the corpus", set.query_id)))?;
            let prompt = enforce_budget(template, &q.code, set, mode, budget.unwrap_or(usize::MAX))
                .map_err(|e| CliError::data(format!("query {:?}: {e}", set.query_id)))?;
            Ok(PromptRecord {
                query_id: set.query_id.clone(),
                prompt,
            })
        })
        .collect()
}

/// Zero-shot needs no retrieval; these empty sets carry only the query ids.
pub fn empty_sets(queries: &[&CodeCommentPair]) -> Vec<DemonstrationSet> {
    queries
        .iter()
        .map(|q| DemonstrationSet {
            query_id: q.id.clone(),
            entries: Vec::new(),
            short: false,
        })
        .collect()
}

/// Resolved LLM settings plus what the mock behaviours need from the run.
pub struct GatewaySpec<'a> {
    pub llm: &'a LlmConfig,
    pub cache_dir: Option<PathBuf>,
    pub order: DemoOrder,
    pub ground_truth: HashMap<String, String>,
}

/// Cache directory: explicit setting, then `SCC_CACHE_DIR`, then `fallback`.
pub fn resolve_cache_dir(configured: Option<&PathBuf>, fallback: Option<PathBuf>) -> Option<PathBuf> {
    configured
        .cloned()
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
        .or(fallback)
}

pub fn make_gateway(spec: GatewaySpec<'_>) -> CliResult<Gateway> {
    let llm = spec.llm;
    let cache = spec.cache_dir.map(Cache::open).transpose()?;
    let backend = match llm.backend.as_str() {
        "mock" => {
            let behavior = match llm.mock.as_str() {
                "echo_top1" => MockBehavior::EchoTop1(match spec.order {
                    DemoOrder::MostSimilarLast => DemoPosition::Last,
                    DemoOrder::MostSimilarFirst => DemoPosition::First,
                }),
                "fixed" => MockBehavior::Fixed(llm.fixed_text.clone()),
                "truncate_ground_truth" => MockBehavior::TruncateGroundTruth(spec.ground_truth),
                other => {
                    return Err(CliError::usage(format!(
                        "unknown mock behaviour {other:?} (expected echo_top1, fixed or truncate_ground_truth)"
                    )))
                }
            };
            Backend::Mock(MockBackend::new(behavior))
        }
        "replay" => {
            if cache.is_none() {
                return Err(CliError::usage(format!(
                    "replay backend needs a cache directory (--cache-dir or {CACHE_DIR_ENV})"
                )));
            }
            Backend::Replay
        }
        "remote" => {
            let transport = HttpTransport::from_env(&llm.base_url, Duration::from_secs(llm.timeout_secs))?;
            Backend::Remote(RemoteBackend::new(Box::new(transport)).with_concurrency(llm.concurrency))
        }
        other => return Err(CliError::usage(format!("unknown backend {other:?}"))),
    };
    Ok(Gateway::new(backend, cache)?)
}

/// One generated comment. Backend and cache status are reported separately
/// so that replaying a run reproduces this record byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub id: String,
    pub text: String,
    pub usage: Usage,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub requests: usize,
    pub cache_hits: usize,
    pub backend: String,
}

pub fn generate(
    gateway: &Gateway,
    prompts: &[PromptRecord],
    llm: &LlmConfig,
) -> CliResult<(Vec<Generation>, GenerationStats)> {
    let reqs: Vec<LlmRequest> = prompts
        .iter()
        .map(|p| LlmRequest {
            model: llm.model.clone(),
            prompt: p.prompt.text.clone(),
            temperature: llm.temperature,
            max_tokens: llm.max_tokens,
            tag: p.query_id.clone(),
        })
        .collect();
    let mut stats = GenerationStats {
        requests: reqs.len(),
        cache_hits: 0,
        backend: gateway.backend_label(),
    };
    let mut out = Vec::with_capacity(reqs.len());
    for (req, res) in reqs.iter().zip(gateway.complete_all(&reqs, llm.concurrency.max(1))) {
        let r = res.map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("query {:?}: {}", req.tag, err.message);
            err
        })?;
        stats.cache_hits += r.cache_hit as usize;
        out.push(Generation {
            id: req.tag.clone(),
            text: r.text,
            usage: r.usage,
        });
    }
    Ok((out, stats))
}

/// Comment of each query's best demonstration. Expects full-strategy sets.
pub fn reuse_top1(sets: &[DemonstrationSet]) -> CliResult<HashMap<String, String>> {
    sets.iter()
        .map(|s| {
            let top = s
                .entries
                .first()
                .ok_or_else(|| CliError::data(format!("query {:?} has no demonstrations", s.query_id)))?;
            Ok((s.query_id.clone(), top.comment.clone()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WilcoxonOutcome {
    Ok(WilcoxonResult),
    /// Test not applicable, e.g. every difference is zero.
    Undefined { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub report: MetricReport,
    /// Keyed by metric name; the approach's per-sample scores against this baseline's.
    pub wilcoxon: BTreeMap<String, WilcoxonOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub approach: String,
    pub report: MetricReport,
    pub baselines: BTreeMap<String, BaselineComparison>,
}

fn score(queries: &[&CodeCommentPair], outputs: &HashMap<String, String>, name: &str) -> CliResult<MetricReport> {
    let mut ids = Vec::with_capacity(queries.len());
    let mut cands = Vec::with_capacity(queries.len());
    let mut refs = Vec::with_capacity(queries.len());
    for q in queries {
        let c = outputs
            .get(&q.id)
            .ok_or_else(|| CliError::data(format!("{name} has no output for {:?}", q.id)))?;
        ids.push(q.id.clone());
        cands.push(c.clone());
        refs.push(q.comment.clone());
    }
    Ok(evaluate(&ids, &cands, &refs)?)
}

/// Scores `outputs` and every baseline against the ground-truth comments of
/// `queries`, with a Wilcoxon test per metric for each baseline.
pub fn evaluate_outputs(
    queries: &[&CodeCommentPair],
    approach: &str,
    outputs: &HashMap<String, String>,
    baselines: &BTreeMap<String, HashMap<String, String>>,
) -> CliResult<EvaluationReport> {
    if queries.is_empty() {
        return Err(CliError::data("no queries to evaluate"));
    }
    let report = score(queries, outputs, approach)?;
    let mut out = BTreeMap::new();
    for (name, texts) in baselines {
        let base = score(queries, texts, name)?;
        let wilcoxon = Metric::ALL
            .iter()
            .map(|&m| {
                let outcome = match wilcoxon_signed_rank(&report.samples(m), &base.samples(m)) {
                    Ok(r) => WilcoxonOutcome::Ok(r),
                    Err(e) => WilcoxonOutcome::Undefined { error: e.to_string() },
                };
                (m.name().to_string(), outcome)
            })
            .collect();
        out.insert(name.clone(), BaselineComparison { report: base, wilcoxon });
    }
    Ok(EvaluationReport {
        approach: approach.to_string(),
        report,
        baselines: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub shots: usize,
    pub strategy: Strategy,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    /// SHA-256 of the sorted multiset of every demonstration id used.
    pub demo_multiset: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Shot-count sweep with the configured strategy.
    pub shots: Vec<AblationRow>,
    /// Strategy comparison at the configured `k`.
    pub strategies: Vec<AblationRow>,
}

pub struct AblationInput<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a RetrievalIndex,
    pub queries: &'a [&'a CodeCommentPair],
    pub embeddings: &'a EmbeddingMatrix,
    pub config: &'a RetrievalConfig,
    pub template: &'a PromptTemplate,
    pub gateway: &'a Gateway,
    pub llm: &'a LlmConfig,
}

pub fn demo_multiset(sets: &[DemonstrationSet]) -> Vec<String> {
    let mut ids: Vec<String> = sets.iter().flat_map(|s| s.entries.iter().map(|e| e.id.clone())).collect();
    ids.sort();
    ids
}

fn ablation_row(input: &AblationInput<'_>, shots: usize, strategy: Strategy) -> CliResult<AblationRow> {
    let sets = if shots == 0 {
        empty_sets(input.queries)
    } else {
        let config = RetrievalConfig {
            k: shots,
            n: input.config.n.max(shots),
            strategy,
            ..input.config.clone()
        };
        retrieve_all(input.index, input.queries, input.embeddings, &config)?
    };
    let prompts = render_prompts(input.corpus, &sets, input.template, PromptMode::for_shots(shots), None)?;
    let (gens, _) = generate(input.gateway, &prompts, input.llm)?;
    let outputs: HashMap<String, String> = gens.into_iter().map(|g| (g.id, g.text)).collect();
    let r = score(input.queries, &outputs, "ablation")?;
    Ok(AblationRow {
        shots,
        strategy,
        bleu4: r.bleu4,
        rouge1: r.rouge1,
        rouge2: r.rouge2,
        rouge_l: r.rouge_l,
        demo_multiset: sha256_hex(demo_multiset(&sets).join("\n").as_bytes()),
    })
}

pub fn ablate(input: &AblationInput<'_>, shots: &[usize], strategies: &[Strategy]) -> CliResult<AblationReport> {
    let shot_rows = shots
        .iter()
        .map(|&s| ablation_row(input, s, input.config.strategy))
        .collect::<CliResult<_>>()?;
    let strategy_rows = strategies
        .iter()
        .map(|&st| ablation_row(input, input.config.k, st))
        .collect::<CliResult<_>>()?;
    Ok(AblationReport {
        shots: shot_rows,
        strategies: strategy_rows,
    })
}

/// Plain-text table: one row per setting, four metrics each.
pub fn format_ablation(report: &AblationReport) -> String {
    fn table(out: &mut String, title: &str, rows: &[AblationRow], label: &dyn Fn(&AblationRow) -> String) {
        out.push_str(&format!(
            "{title:<16}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L"
        ));
        for r in rows {
            out.push_str(&format!(
                "{:<16}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7.2}\n",
                label(r),
                r.bleu4,
                r.rouge1,
                r.rouge2,
                r.rouge_l
            ));
        }
    }
    let mut out = String::new();
    table(&mut out, "shots", &report.shots, &|r| match r.shots {
        0 => "zero-shot".to_string(),
        1 => "one-shot".to_string(),
        n => format!("{n}-shot"),
    });
    out.push('\n');
    table(&mut out, "strategy", &report.strategies, &|r| r.strategy.to_string());
    out
}
