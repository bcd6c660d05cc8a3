use serde::{Deserialize, Serialize};

use super::lexer::{is_keyword, tokenize_lenient, TokenKind};
use super::parser::{parse, Node};

/// Structural token sequence for one snippet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SbtSequence {
    pub tokens: Vec<String>,
    /// Set when the snippet did not parse and the keyword/punctuation
    /// fallback produced `tokens`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

impl SbtSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Linearizes `code` by pre-order traversal of its syntax tree.
///
/// Every interior node contributes its kind name (and operator, if any);
/// identifiers, literals, type names and specifiers contribute their text.
/// No bracket tokens are emitted. Code that does not parse falls back to
/// [`degraded_sbt`].
///
/// ```
/// use scc_core::codeform::to_sbt;
/// let sbt = to_sbt("function f() public {}");
/// assert_eq!(sbt.tokens, ["FunctionDefinition", "f", "ParameterList", "public", "Block"]);
/// ```
pub fn to_sbt(code: &str) -> SbtSequence {
    match parse(code) {
        Ok(nodes) => {
            let mut tokens = Vec::new();
            for node in &nodes {
                linearize(node, &mut tokens);
            }
            SbtSequence { tokens, degraded: false }
        }
        Err(_) => degraded_sbt(code),
    }
}

fn linearize(node: &Node, out: &mut Vec<String>) {
    match (&node.value, node.children.is_empty()) {
        (Some(value), true) => out.push(value.clone()),
        (value, _) => {
            out.push(node.kind.name().to_owned());
            if let Some(v) = value {
                out.push(v.clone());
            }
            for child in &node.children {
                linearize(child, out);
            }
        }
    }
}

/// Keywords in source order plus punctuation mapped to coarse classes.
/// Identifiers and literals are dropped.
pub fn degraded_sbt(code: &str) -> SbtSequence {
    let tokens = tokenize_lenient(code)
        .into_iter()
        .filter_map(|tok| match tok.kind {
            TokenKind::Word if is_keyword(&tok.text) => Some(tok.text),
            TokenKind::Punct => Some(punct_class(&tok.text).to_owned()),
            _ => None,
        })
        .collect();
    SbtSequence { tokens, degraded: true }
}

fn punct_class(p: &str) -> &'static str {
    match p {
        "(" | "[" | "{" => "OPEN",
        ")" | "]" | "}" => "CLOSE",
        ";" | "," => "SEP",
        "+" | "-" | "*" | "/" | "%" | "**" | "++" | "--" | "&" | "|" | "^" | "~" | "<<" | ">>" | ">>>" => "ARITH",
        "==" | "!=" | "<" | ">" | "<=" | ">=" => "CMP",
        "&&" | "||" | "!" => "LOGIC",
        "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "|=" | "&=" | "^=" | "<<=" | ">>=" | ">>>=" | ":=" => "ASSIGN",
        "." => "DOT",
        _ => "PUNCT",
    }
}
