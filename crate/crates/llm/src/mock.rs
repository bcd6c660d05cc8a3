use std::collections::HashMap;

use crate::{LlmError, LlmRequest};

const CAP_PREFIX: &str = "The length should not exceed ";

/// Where the most similar demonstration sits in the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DemoPosition {
    #[default]
    Last,
    First,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Echo the comment of the most similar demonstration.
    EchoTop1(DemoPosition),
    Fixed(String),
    /// Ground truth keyed by request tag, cut to the prompt's word cap.
    TruncateGroundTruth(HashMap<String, String>),
}

impl MockBehavior {
    pub fn name(&self) -> &'static str {
        match self {
            MockBehavior::EchoTop1(_) => "echo_top1",
            MockBehavior::Fixed(_) => "fixed",
            MockBehavior::TruncateGroundTruth(_) => "truncate_ground_truth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    behavior: MockBehavior,
}

impl MockBackend {
    pub fn new(behavior: MockBehavior) -> Self {
        MockBackend { behavior }
    }

    pub fn behavior(&self) -> &MockBehavior {
        &self.behavior
    }

    pub fn respond(&self, req: &LlmRequest) -> Result<String, LlmError> {
        match &self.behavior {
            MockBehavior::Fixed(s) => Ok(s.clone()),
            MockBehavior::EchoTop1(pos) => {
                let blocks = demo_comments(&req.prompt);
                let pick = match pos {
                    DemoPosition::Last => blocks.last(),
                    DemoPosition::First => blocks.first(),
                };
                Ok(pick.cloned().unwrap_or_default())
            }
            MockBehavior::TruncateGroundTruth(truth) => {
                let gt = truth
                    .get(&req.tag)
                    .ok_or_else(|| LlmError::Mock(format!("no ground truth for tag {:?}", req.tag)))?;
                Ok(match word_cap(&req.prompt) {
                    Some(n) => gt.split_whitespace().take(n).collect::<Vec<_>>().join(" "),
                    None => gt.clone(),
                })
            }
        }
    }
}

/// Comment texts of the demonstration blocks, in prompt order. A block is a
/// maximal run of lines starting with "#"; its lines are joined with newlines.
pub fn demo_comments(prompt: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Option<Vec<&str>> = None;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            cur.get_or_insert_with(Vec::new).push(rest.strip_prefix(' ').unwrap_or(rest));
        } else if let Some(block) = cur.take() {
            out.push(block.join("\n"));
        }
    }
    if let Some(block) = cur {
        out.push(block.join("\n"));
    }
    out
}

/// Word cap from the last cap line: "... exceed N words" gives N, the literal
/// style gives the word count of the quoted comment.
pub fn word_cap(prompt: &str) -> Option<usize> {
    let line = prompt.lines().rev().find(|l| l.contains(CAP_PREFIX))?;
    let rest = &line[line.find(CAP_PREFIX)? + CAP_PREFIX.len()..];
    let words: Vec<&str> = rest.split_whitespace().collect();
    match words.as_slice() {
        [n, w, ..] if w.trim_end_matches('.') == "words" => n.parse().ok(),
        _ => Some(words.len()),
    }
}
