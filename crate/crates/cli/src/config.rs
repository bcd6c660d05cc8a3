//! TOML run configuration. Selection keys follow the hyper-parameter names
//! (`max_input_length`, `D`, `d`, `lambda`, `top_n`, `k`); command-line flags
//! override whatever the file sets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scc_core::codeform::LexMode;
use scc_core::corpus::{CleanConfig, SplitRatios, WordFilterTarget};
use scc_core::promptgen::{CapStyle, DemoOrder, PromptMode, PromptTemplate};
use scc_core::retrieval::{RetrievalConfig, Strategy};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub selection: SelectionConfig,
    pub corpus: CorpusConfig,
    pub embed: EmbedConfig,
    pub prompt: PromptConfig,
    pub llm: LlmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub max_input_length: usize,
    #[serde(rename = "D")]
    pub embed_dim: usize,
    #[serde(rename = "d")]
    pub whitened_dim: usize,
    pub lambda: f64,
    pub top_n: usize,
    pub k: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub lex_mode: LexMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            max_input_length: 256,
            embed_dim: 768,
            whitened_dim: 256,
            lambda: 0.7,
            top_n: 10,
            k: 5,
            strategy: Strategy::Full,
            seed: 0,
            lex_mode: LexMode::Subtoken,
        }
    }
}

impl SelectionConfig {
    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            n: self.top_n,
            k: self.k,
            lambda: self.lambda,
            strategy: self.strategy,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub dup_code_threshold: usize,
    pub template_freq_threshold: usize,
    pub min_words: usize,
    /// "comment" or "code".
    pub min_words_target: String,
    pub split: [f64; 3],
    pub split_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let c = CleanConfig::default();
        let r = SplitRatios::default();
        CorpusConfig {
            dup_code_threshold: c.dup_code_threshold,
            template_freq_threshold: c.template_freq_threshold,
            min_words: c.min_words,
            min_words_target: "comment".into(),
            split: [r.train, r.validation, r.test],
            split_seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn clean(&self) -> CliResult<CleanConfig> {
        let min_words_target = match self.min_words_target.as_str() {
            "comment" => WordFilterTarget::Comment,
            "code" => WordFilterTarget::Code,
            other => {
                return Err(CliError::usage(format!(
                    "unknown min_words_target {other:?} (expected comment or code)"
                )))
            }
        };
        Ok(CleanConfig {
            dup_code_threshold: self.dup_code_threshold,
            template_freq_threshold: self.template_freq_threshold,
            min_words: self.min_words,
            min_words_target,
        })
    }

    pub fn ratios(&self) -> CliResult<SplitRatios> {
        let [a, b, c] = self.split;
        Ok(SplitRatios::new(a, b, c)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// "hashing" or "service".
    pub provider: String,
    pub service_url: String,
    pub pooling: String,
    /// Send code verbatim instead of the subtoken-split sequence.
    pub raw_text: bool,
    pub batch_size: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            provider: "hashing".into(),
            service_url: "http://127.0.0.1:8000".into(),
            pooling: "first_last_avg".into(),
            raw_text: false,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub budget: Option<usize>,
    pub order: DemoOrder,
    pub cap_style: CapStyle,
    pub layout_file: Option<PathBuf>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            mode: PromptMode::Few,
            budget: None,
            order: DemoOrder::MostSimilarLast,
            cap_style: CapStyle::WordCount,
            layout_file: None,
        }
    }
}

impl PromptConfig {
    pub fn template(&self) -> CliResult<PromptTemplate> {
        let base = match &self.layout_file {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default(),
        };
        Ok(PromptTemplate {
            order: self.order,
            cap_style: self.cap_style,
            ..base
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// "remote", "mock" or "replay".
    pub backend: String,
    /// Mock behaviour: "echo_top1", "fixed" or "truncate_ground_truth".
    pub mock: String,
    pub fixed_text: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_url: String,
    pub concurrency: usize,
    pub timeout_secs: u64,
    /// Falls back to `SCC_CACHE_DIR`, then `<workdir>/llm-cache`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: "mock".into(),
            mock: "echo_top1".into(),
            fixed_text: "ok".into(),
            model: scc_llm::DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_tokens: scc_llm::DEFAULT_MAX_TOKENS,
            base_url: scc_llm::HttpTransport::DEFAULT_BASE_URL.into(),
            concurrency: scc_llm::RemoteBackend::DEFAULT_CONCURRENCY,
            timeout_secs: 60,
            cache_dir: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> CliResult<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::usage(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `path` if given, otherwise defaults.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Config> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        let s = &self.selection;
        if s.whitened_dim == 0 || s.whitened_dim > s.embed_dim {
            return Err(CliError::usage(format!(
                "need 1 <= d <= D, got d={} D={}",
                s.whitened_dim, s.embed_dim
            )));
        }
        if s.max_input_length == 0 {
            return Err(CliError::usage("max_input_length must be positive"));
        }
        s.retrieval().validate()?;
        self.corpus.clean()?;
        self.corpus.ratios()?;
        if !["hashing", "service"].contains(&self.embed.provider.as_str()) {
            return Err(CliError::usage(format!(
                "unknown embed provider {:?} (expected hashing or service)",
                self.embed.provider
            )));
        }
        if !(1..=64).contains(&self.embed.batch_size) {
            return Err(CliError::usage("embed batch_size must lie in 1..=64"));
        }
        if !["remote", "mock", "replay"].contains(&self.llm.backend.as_str()) {
            return Err(CliError::usage(format!(
                "unknown llm backend {:?} (expected remote, mock or replay)",
                self.llm.backend
            )));
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return Err(CliError::usage("temperature must lie in [0, 2]"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        let c = Config::default();
        assert_eq!(c.selection.max_input_length, 256);
        assert_eq!(c.selection.embed_dim, 768);
        assert_eq!(c.selection.whitened_dim, 256);
        assert_eq!(c.selection.lambda, 0.7);
        assert_eq!(c.selection.top_n, 10);
        assert_eq!(c.selection.k, 5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parses_partial_files() {
        let c = Config::parse("[selection]\nD = 64\nd = 32\nlambda = 0.5\n\n[llm]\nbackend = \"replay\"\n").unwrap();
        assert_eq!(c.selection.embed_dim, 64);
        assert_eq!(c.selection.whitened_dim, 32);
        assert_eq!(c.selection.lambda, 0.5);
        assert_eq!(c.selection.k, 5);
        assert_eq!(c.llm.backend, "replay");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[selection]\nunknown = 1\n",
            "[selection]\nd = 1000\n",
            "[selection]\nk = 11\n",
            "[selection]\nlambda = 1.5\n",
            "[corpus]\nsplit = [0.5, 0.5, 0.5]\n",
            "[llm]\nbackend = \"carrier-pigeon\"\n",
            "[embed]\nprovider = \"magic\"\n",
            "[selection]\nstrategy = \"best\"\n",
        ] {
            let err = Config::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }
}
