//! Solidity tokenizer.
//!
//! Comments and whitespace are discarded. The strict entry point rejects
//! unterminated strings or comments and stray characters; the lenient one
//! skips them so that any input yields some token stream.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifiers and keywords.
    Word,
    Number,
    Str,
    HexStr,
    Punct,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset in the source.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

impl std::error::Error for LexError {}

// Longest first so that greedy matching works.
const PUNCTUATION: &[&str] = &[
    ">>>=", ">>>", "<<=", ">>=", "**", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=",
    "%=", "|=", "&=", "^=", "<<", ">>", "=>", "->", ":=", "(", ")", "[", "]", "{", "}", ";", ",", ".", "?", ":",
    "=", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^", "<", ">", "@",
];

const KEYWORDS: &[&str] = &[
    "abstract", "anonymous", "assembly", "break", "calldata", "catch", "constant", "constructor", "continue",
    "contract", "delete", "do", "else", "emit", "enum", "event", "external", "fallback", "false", "for",
    "function", "if", "immutable", "import", "indexed", "interface", "internal", "is", "library", "mapping",
    "memory", "modifier", "new", "override", "payable", "pragma", "private", "public", "pure", "receive",
    "return", "returns", "revert", "storage", "struct", "throw", "true", "try", "unchecked", "using", "var",
    "view", "virtual", "while", "error", "type",
];

/// True for Solidity keywords and elementary type names.
pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word) || is_elementary_type(word)
}

/// `address`, `bool`, `string`, `bytes`, `byte`, `int<N>`, `uint<N>`, `bytes<N>`,
/// `fixed<M>x<N>` and `ufixed<M>x<N>`.
pub fn is_elementary_type(word: &str) -> bool {
    match word {
        "address" | "bool" | "string" | "bytes" | "byte" | "int" | "uint" | "fixed" | "ufixed" => return true,
        _ => {}
    }
    let sized = |prefix: &str, valid: &dyn Fn(u32) -> bool| {
        word.strip_prefix(prefix)
            .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) && !rest.starts_with('0'))
            .and_then(|rest| rest.parse::<u32>().ok())
            .is_some_and(valid)
    };
    if sized("uint", &|n| n % 8 == 0 && (8..=256).contains(&n))
        || sized("int", &|n| n % 8 == 0 && (8..=256).contains(&n))
        || sized("bytes", &|n| (1..=32).contains(&n))
    {
        return true;
    }
    let fixed = word.strip_prefix("ufixed").or_else(|| word.strip_prefix("fixed"));
    fixed.is_some_and(|rest| {
        let mut parts = rest.splitn(2, 'x');
        let (m, n) = (parts.next(), parts.next());
        matches!((m.and_then(|m| m.parse::<u32>().ok()), n.and_then(|n| n.parse::<u32>().ok())),
            (Some(m), Some(n)) if m % 8 == 0 && (8..=256).contains(&m) && n <= 80)
    })
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    lenient: bool,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn err(&self, offset: usize, message: &str) -> LexError {
        LexError {
            offset,
            message: message.to_owned(),
        }
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with("//") {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else if let Some(body) = trimmed.strip_prefix("/*") {
                match body.find("*/") {
                    Some(end) => self.pos += end + 4,
                    None if self.lenient => self.pos = self.src.len(),
                    None => return Err(self.err(self.pos, "unterminated block comment")),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn string(&mut self, quote: char) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += quote.len_utf8();
        let mut escaped = false;
        for (i, c) in self.rest().char_indices() {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == quote {
                self.pos += i + c.len_utf8();
                return Ok(());
            } else if c == '\n' {
                break;
            }
        }
        if self.lenient {
            self.pos = self.src[self.pos..]
                .find('\n')
                .map_or(self.src.len(), |i| self.pos + i);
            Ok(())
        } else {
            Err(self.err(start, "unterminated string literal"))
        }
    }

    fn number(&mut self) {
        let rest = self.rest();
        let len = if rest.starts_with("0x") || rest.starts_with("0X") {
            2 + rest[2..]
                .find(|c: char| !(c.is_ascii_hexdigit() || c == '_'))
                .unwrap_or(rest.len() - 2)
        } else {
            let bytes = rest.as_bytes();
            let mut i = 0;
            let mut seen_dot = false;
            let mut seen_exp = false;
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_digit() || b == b'_' {
                    i += 1;
                } else if b == b'.' && !seen_dot && !seen_exp && bytes.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
                    seen_dot = true;
                    i += 1;
                } else if (b == b'e' || b == b'E') && !seen_exp {
                    let mut j = i + 1;
                    if bytes.get(j) == Some(&b'-') {
                        j += 1;
                    }
                    if bytes.get(j).is_some_and(|n| n.is_ascii_digit()) {
                        seen_exp = true;
                        i = j;
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
            i
        };
        self.pos += len;
    }

    fn next_token(&mut self) -> Result<Option<Token>, LexError> {
        loop {
            self.skip_trivia()?;
            let Some(c) = self.peek() else {
                return Ok(None);
            };
            let start = self.pos;
            let rest = self.rest();

            let kind = if (rest.starts_with("hex\"") || rest.starts_with("hex'"))
                || (rest.starts_with("unicode\"") || rest.starts_with("unicode'"))
            {
                let prefix = if rest.starts_with("hex") { 3 } else { 7 };
                let quote = rest[prefix..].chars().next().unwrap_or('"');
                self.pos += prefix;
                self.string(quote)?;
                if prefix == 3 {
                    TokenKind::HexStr
                } else {
                    TokenKind::Str
                }
            } else if is_ident_start(c) {
                self.pos += rest.find(|c| !is_ident_continue(c)).unwrap_or(rest.len());
                TokenKind::Word
            } else if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
                self.number();
                TokenKind::Number
            } else if c == '"' || c == '\'' {
                self.string(c)?;
                TokenKind::Str
            } else if let Some(p) = PUNCTUATION.iter().find(|p| rest.starts_with(**p)) {
                self.pos += p.len();
                TokenKind::Punct
            } else if self.lenient {
                self.pos += c.len_utf8();
                continue;
            } else {
                return Err(self.err(start, &format!("unexpected character {c:?}")));
            };

            return Ok(Some(Token {
                kind,
                text: self.src[start..self.pos].to_owned(),
                offset: start,
            }));
        }
    }
}

/// Tokenizes `src`, failing on malformed input.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lexer = Lexer {
        src,
        pos: 0,
        lenient: false,
    };
    let mut out = Vec::new();
    while let Some(tok) = lexer.next_token()? {
        out.push(tok);
    }
    Ok(out)
}

/// Tokenizes `src`, skipping anything that does not lex.
pub fn tokenize_lenient(src: &str) -> Vec<Token> {
    let mut lexer = Lexer {
        src,
        pos: 0,
        lenient: true,
    };
    let mut out = Vec::new();
    while let Ok(Some(tok)) = lexer.next_token() {
        out.push(tok);
    }
    out
}
