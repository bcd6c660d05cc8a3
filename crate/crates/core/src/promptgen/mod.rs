//! Prompt rendering: an instruction header, `#`-commented demonstrations, then
//! the query code followed by a length cap.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{Demonstration, DemonstrationSet};

pub const INSTRUCTION: &str = "To generate a short summarization in one sentence for smart contract code.";
pub const ANNOUNCEMENT: &str = "To alleviate the difficulty of this task, we will give you top-{K} examples. Please learn from them.";
/// Cap used when there is no retrieved comment to measure.
pub const ZERO_SHOT_CAP_WORDS: usize = 15;
pub const DEFAULT_LAYOUT: &str = "{INSTRUCTION}\n\n{DEMOS}{QUERY}\n{CAP}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{mode} prompt needs at least one demonstration")]
    MissingDemos { mode: PromptMode },
    #[error("budget of {budget} tokens is below the {required} needed for the header and query alone")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("cannot read template: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Zero,
    One,
    #[default]
    Few,
}

impl PromptMode {
    /// Mode that uses `shots` demonstrations.
    pub fn for_shots(shots: usize) -> Self {
        match shots {
            0 => PromptMode::Zero,
            1 => PromptMode::One,
            _ => PromptMode::Few,
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::Zero => "zero-shot",
            PromptMode::One => "one-shot",
            PromptMode::Few => "few-shot",
        })
    }
}

/// Where the best demonstration sits relative to the query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrder {
    #[default]
    MostSimilarLast,
    MostSimilarFirst,
}

/// How the length cap is phrased.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapStyle {
    /// "The length should not exceed N words", N = words in the best comment.
    #[default]
    WordCount,
    /// "The length should not exceed <best comment>".
    Literal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    /// Appended to the instruction when demonstrations are present; `{K}` is
    /// replaced by their count.
    pub announcement: String,
    /// Overall layout with `{INSTRUCTION}`, `{DEMOS}`, `{QUERY}`, `{CAP}` and
    /// optionally `{K}`.
    pub layout: String,
    pub order: DemoOrder,
    pub cap_style: CapStyle,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction: INSTRUCTION.to_owned(),
            announcement: ANNOUNCEMENT.to_owned(),
            layout: DEFAULT_LAYOUT.to_owned(),
            order: DemoOrder::default(),
            cap_style: CapStyle::default(),
        }
    }
}

impl PromptTemplate {
    /// Default template with a custom layout.
    pub fn with_layout(layout: impl Into<String>) -> Result<Self, PromptError> {
        let layout = layout.into();
        for name in ["{DEMOS}", "{QUERY}", "{CAP}"] {
            if !layout.contains(name) {
                return Err(PromptError::MissingPlaceholder(name));
            }
        }
        Ok(Self {
            layout,
            ..Self::default()
        })
    }

    /// Reads a UTF-8 layout file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::with_layout(std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub demo_count: usize,
    pub length_cap_words: usize,
    pub estimated_tokens: usize,
    /// Ids of the included demonstrations in prompt order.
    pub demo_ids: Vec<String>,
    /// Ids removed to meet the token budget, least similar first.
    pub dropped_ids: Vec<String>,
}

/// `ceil(words * 1.3)`.
pub fn estimate_tokens(text: &str) -> usize {
    (text.split_whitespace().count() * 13).div_ceil(10)
}

/// Renders the prompt for `query_code` with no budget.
///
/// `demos` must be ordered most similar first (as retrieval returns them).
/// One-shot keeps only the first demonstration.
pub fn build_prompt(
    template: &PromptTemplate,
    query_code: &str,
    demos: &DemonstrationSet,
    mode: PromptMode,
) -> Result<RenderedPrompt, PromptError> {
    enforce_budget(template, query_code, demos, mode, usize::MAX)
}

/// Renders the prompt, dropping the least similar demonstrations until the
/// estimated token count fits `budget`.
pub fn enforce_budget(
    template: &PromptTemplate,
    query_code: &str,
    demos: &DemonstrationSet,
    mode: PromptMode,
    budget: usize,
) -> Result<RenderedPrompt, PromptError> {
    let selected: &[Demonstration] = match mode {
        PromptMode::Zero => &[],
        PromptMode::One => demos.entries.get(..1).unwrap_or(&[]),
        PromptMode::Few => &demos.entries,
    };
    if mode != PromptMode::Zero && selected.is_empty() {
        return Err(PromptError::MissingDemos { mode });
    }

    let cap = match (selected.first(), template.cap_style) {
        (None, _) => Cap {
            words: ZERO_SHOT_CAP_WORDS,
            text: format!("{ZERO_SHOT_CAP_WORDS} words"),
        },
        (Some(best), CapStyle::WordCount) => {
            let words = best.comment.split_whitespace().count();
            Cap {
                words,
                text: format!("{words} words"),
            }
        }
        (Some(best), CapStyle::Literal) => Cap {
            words: best.comment.split_whitespace().count(),
            text: best.comment.split_whitespace().collect::<Vec<_>>().join(" "),
        },
    };

    let mut kept = selected.len();
    loop {
        let prompt = render(template, query_code, &selected[..kept], &cap);
        if prompt.estimated_tokens <= budget {
            return Ok(RenderedPrompt {
                dropped_ids: selected[kept..].iter().rev().map(|d| d.id.clone()).collect(),
                ..prompt
            });
        }
        if kept == 0 {
            return Err(PromptError::BudgetTooSmall {
                budget,
                required: prompt.estimated_tokens,
            });
        }
        kept -= 1;
    }
}

struct Cap {
    words: usize,
    text: String,
}

fn render(template: &PromptTemplate, query_code: &str, demos: &[Demonstration], cap: &Cap) -> RenderedPrompt {
    let k = demos.len().to_string();
    let mut instruction = template.instruction.clone();
    if !demos.is_empty() && !template.announcement.is_empty() {
        instruction.push(' ');
        instruction.push_str(&template.announcement.replace("{K}", &k));
    }

    let ordered: Vec<&Demonstration> = match template.order {
        DemoOrder::MostSimilarFirst => demos.iter().collect(),
        DemoOrder::MostSimilarLast => demos.iter().rev().collect(),
    };
    let mut blocks = String::new();
    for demo in &ordered {
        blocks.push_str(&demo_block(demo));
    }
    let cap_line = format!("The length should not exceed {}", cap.text);
    let query = query_code.trim_end_matches(['\n', '\r']);

    let text = substitute(&template.layout, |name| match name {
        "INSTRUCTION" => Some(instruction.as_str()),
        "DEMOS" => Some(blocks.as_str()),
        "QUERY" => Some(query),
        "CAP" => Some(cap_line.as_str()),
        "K" => Some(k.as_str()),
        _ => None,
    });

    RenderedPrompt {
        estimated_tokens: estimate_tokens(&text),
        text,
        demo_count: demos.len(),
        length_cap_words: cap.words,
        demo_ids: ordered.iter().map(|d| d.id.clone()).collect(),
        dropped_ids: Vec::new(),
    }
}

/// Every comment line prefixed with `# `, then the code verbatim, then a blank line.
fn demo_block(demo: &Demonstration) -> String {
    let mut out = String::new();
    for line in demo.comment.lines() {
        out.push_str("# ");
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str(demo.code.trim_end_matches(['\n', '\r']));
    out.push_str("\n\n");
    out
}

/// Single left-to-right pass, so placeholder-like text inside substituted
/// code is left alone.
fn substitute<'a>(layout: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
    let mut out = String::with_capacity(layout.len());
    let mut rest = layout;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| lookup(&after[..close]).map(|v| (close, v))) {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
