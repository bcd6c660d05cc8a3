//! End-to-end pipeline with a run manifest recording the configuration, input
//! and output digests, seeds and timings.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scc_core::corpus::{clean, ingest, split, stats, Split};
use scc_core::semantic::{save_embeddings, save_whitening, EmbeddingMatrix};

use crate::config::Config;
use crate::embed::{EmbedClient, HashingEmbedder};
use crate::error::{CliError, CliResult};
use crate::io::{file_digest, write_corpus, write_json, write_jsonl};
use crate::stages::{
    build_index, evaluate_outputs, fit_on_train, generate, make_gateway, render_prompts, resolve_cache_dir,
    retrieve_all, reuse_top1, split_refs, GatewaySpec,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub started_at: String,
    pub finished_at: String,
    /// File name (relative to the work directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub notes: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub selection: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: Config,
    pub seeds: Seeds,
    pub inputs: BTreeMap<String, InputRecord>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// Every stage output with its digest.
    pub fn output_digests(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        crate::io::read_json(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Recorder<'a> {
    workdir: &'a Path,
    stages: Vec<StageRecord>,
}

impl Recorder<'_> {
    fn stage<T>(
        &mut self,
        name: &str,
        files: &[&str],
        body: impl FnOnce(&Path) -> CliResult<(T, serde_json::Value)>,
    ) -> CliResult<T> {
        let started_at = now();
        let (value, notes) = body(self.workdir)?;
        let outputs = files
            .iter()
            .map(|f| Ok((f.to_string(), file_digest(&self.workdir.join(f))?)))
            .collect::<CliResult<_>>()?;
        self.stages.push(StageRecord {
            name: name.to_string(),
            started_at,
            finished_at: now(),
            outputs,
            notes,
        });
        Ok(value)
    }
}

fn embed_all(config: &Config, pairs: &[&scc_core::corpus::CodeCommentPair]) -> CliResult<EmbeddingMatrix> {
    let s = &config.selection;
    match config.embed.provider.as_str() {
        "hashing" => HashingEmbedder::new(s.embed_dim, s.max_input_length)?.embed_pairs(pairs.iter().copied()),
        "service" => {
            let e = &config.embed;
            EmbedClient::new(&e.service_url, &e.pooling, s.max_input_length, e.batch_size)?.embed_pairs(
                pairs,
                e.raw_text,
                s.embed_dim,
            )
        }
        other => Err(CliError::usage(format!("unknown embed provider {other:?}"))),
    }
}

/// Runs ingest through evaluate on `input`, writing every intermediate file
/// and `manifest.json` into `workdir`. The LLM cache directory is resolved
/// once and stored in the manifest's config so a replay run finds it.
pub fn run_pipeline(config: &Config, input: &Path, workdir: &Path) -> CliResult<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(workdir).map_err(|e| CliError::io(workdir, e))?;
    let started_at = now();
    let workdir_abs = std::fs::canonicalize(workdir).map_err(|e| CliError::io(workdir, e))?;
    let mut config = config.clone();
    config.llm.cache_dir = resolve_cache_dir(config.llm.cache_dir.as_ref(), Some(workdir_abs.join("llm-cache")));

    let input_abs = std::fs::canonicalize(input).map_err(|e| CliError::io(input, e))?;
    let inputs = BTreeMap::from([(
        "corpus".to_string(),
        InputRecord {
            sha256: file_digest(&input_abs)?,
            path: input_abs.clone(),
        },
    )]);
    let mut rec = Recorder {
        workdir,
        stages: Vec::new(),
    };

    let corpus = rec.stage("ingest", &["corpus.jsonl", "rejected.jsonl"], |w| {
        let f = std::fs::File::open(&input_abs).map_err(|e| CliError::io(&input_abs, e))?;
        let ingested = ingest(std::io::BufReader::new(f))?;
        write_corpus(&w.join("corpus.jsonl"), &ingested.corpus)?;
        write_jsonl(&w.join("rejected.jsonl"), &ingested.errors)?;
        let notes = serde_json::json!({"records": ingested.corpus.len(), "rejected": ingested.errors.len()});
        Ok((ingested.corpus, notes))
    })?;

    let cleaned = rec.stage("clean", &["cleaned.jsonl", "removed.jsonl"], |w| {
        let (cleaned, report) = clean(&corpus, &config.corpus.clean()?)?;
        write_corpus(&w.join("cleaned.jsonl"), &cleaned)?;
        write_jsonl(&w.join("removed.jsonl"), &report.removed)?;
        let notes = serde_json::json!({"kept": cleaned.len(), "removed": report.removed.len()});
        Ok((cleaned, notes))
    })?;

    let corpus = rec.stage("split", &["split.jsonl", "stats.json"], |w| {
        let tagged = split(&cleaned, config.corpus.ratios()?, config.corpus.split_seed)?;
        write_corpus(&w.join("split.jsonl"), &tagged)?;
        write_json(&w.join("stats.json"), &stats(&tagged))?;
        Ok((tagged, serde_json::Value::Null))
    })?;

    let embeddings = rec.stage("embed", &["embeddings.sceb"], |w| {
        let all: Vec<_> = corpus.iter().collect();
        let m = embed_all(&config, &all)?;
        save_embeddings(&m, w.join("embeddings.sceb"))?;
        Ok((m, serde_json::json!({"provider": config.embed.provider, "rows": all.len()})))
    })?;

    let model = rec.stage("whiten", &["whitening.scwh"], |w| {
        let m = fit_on_train(&corpus, &embeddings, config.selection.whitened_dim)?;
        save_whitening(&m, w.join("whitening.scwh"))?;
        Ok((m, serde_json::Value::Null))
    })?;

    let queries = split_refs(&corpus, Split::Test);
    let sets = rec.stage("retrieve", &["demos.jsonl"], |w| {
        let index = build_index(&corpus, &embeddings, model, config.selection.lex_mode)?;
        let sets = retrieve_all(&index, &queries, &embeddings, &config.selection.retrieval())?;
        let lines: Vec<String> = sets.iter().map(|s| s.export_line()).collect();
        crate::io::write_atomic(&w.join("demos.jsonl"), (lines.join("\n") + "\n").as_bytes())?;
        let short: Vec<&str> = sets.iter().filter(|s| s.short).map(|s| s.query_id.as_str()).collect();
        let notes = serde_json::json!({"queries": queries.len(), "short": short});
        Ok((sets, notes))
    })?;

    let prompts = rec.stage("prompt", &["prompts.jsonl"], |w| {
        let template = config.prompt.template()?;
        let prompts = render_prompts(&corpus, &sets, &template, config.prompt.mode, config.prompt.budget)?;
        write_jsonl(&w.join("prompts.jsonl"), &prompts)?;
        Ok((prompts, serde_json::Value::Null))
    })?;

    let generations = rec.stage("generate", &["generations.jsonl"], |w| {
        let gateway = make_gateway(GatewaySpec {
            llm: &config.llm,
            cache_dir: config.llm.cache_dir.clone(),
            order: config.prompt.order,
            ground_truth: queries.iter().map(|q| (q.id.clone(), q.comment.clone())).collect(),
        })?;
        let (gens, stats) = generate(&gateway, &prompts, &config.llm)?;
        write_jsonl(&w.join("generations.jsonl"), &gens)?;
        Ok((gens, serde_json::to_value(stats).expect("stats serialize")))
    })?;

    rec.stage("evaluate", &["report.json"], |w| {
        let outputs: HashMap<String, String> = generations.iter().map(|g| (g.id.clone(), g.text.clone())).collect();
        let baselines = BTreeMap::from([("reuse_top1".to_string(), reuse_top1(&sets)?)]);
        let report = evaluate_outputs(&queries, "sccllm", &outputs, &baselines)?;
        write_json(&w.join("report.json"), &report)?;
        Ok(((), serde_json::Value::Null))
    })?;

    let manifest = RunManifest {
        tool: "scc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: now(),
        seeds: Seeds {
            split: config.corpus.split_seed,
            selection: config.selection.seed,
        },
        config,
        inputs,
        stages: rec.stages,
    };
    write_json(&workdir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Re-runs a recorded pipeline into `workdir`, optionally switching the LLM
/// backend (typically to `replay`). Fails if the input file changed.
pub fn rerun(manifest: &RunManifest, workdir: &Path, backend: Option<&str>) -> CliResult<RunManifest> {
    let input = manifest
        .inputs
        .get("corpus")
        .ok_or_else(|| CliError::data("manifest records no corpus input"))?;
    let digest = file_digest(&input.path)?;
    if digest != input.sha256 {
        return Err(CliError::data(format!(
            "input {} changed since the recorded run",
            input.path.display()
        )));
    }
    let mut config = manifest.config.clone();
    if let Some(b) = backend {
        config.llm.backend = b.to_string();
    }
    run_pipeline(&config, &input.path, workdir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub file: String,
    pub expected: String,
    /// `None` when the file is missing.
    pub found: Option<String>,
}

/// Recomputes the digest of every recorded output under `workdir`.
pub fn verify(manifest: &RunManifest, workdir: &Path) -> Vec<Mismatch> {
    manifest
        .output_digests()
        .into_iter()
        .filter_map(|(file, expected)| {
            let found = file_digest(&workdir.join(&file)).ok();
            (found.as_deref() != Some(expected.as_str())).then_some(Mismatch { file, expected, found })
        })
        .collect()
}
