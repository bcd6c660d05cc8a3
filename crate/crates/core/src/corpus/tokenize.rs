use serde::{Deserialize, Serialize};

/// Lowercase identifier subtokens of a code snippet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

/// Splits code into CamelCase / snake_case subtokens.
///
/// Boundaries: any non-alphanumeric character (underscore included), a
/// lower-to-upper hump, the end of an uppercase run followed by a capitalised
/// word (`ERCToken` -> `erc`, `token`), and letter/digit transitions.
///
/// ```
/// use scc_core::corpus::tokenize_identifiers;
/// let t = tokenize_identifiers("safe_math.add(a1)");
/// assert_eq!(t.tokens(), ["safe", "math", "add", "a", "1"]);
/// ```
pub fn tokenize_identifiers(code: &str) -> TokenSequence {
    let mut out = Vec::new();
    let mut word: Vec<char> = Vec::new();
    for c in code.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else if !word.is_empty() {
            split_word(&word, &mut out);
            word.clear();
        }
    }
    if !word.is_empty() {
        split_word(&word, &mut out);
    }
    TokenSequence(out)
}

fn split_word(word: &[char], out: &mut Vec<String>) {
    let mut start = 0;
    for i in 1..word.len() {
        let (prev, cur) = (word[i - 1], word[i]);
        let boundary = prev.is_numeric() != cur.is_numeric()
            || (prev.is_lowercase() && cur.is_uppercase())
            || (prev.is_uppercase() && cur.is_uppercase() && word.get(i + 1).is_some_and(|n| n.is_lowercase()));
        if boundary {
            out.push(word[start..i].iter().flat_map(|c| c.to_lowercase()).collect());
            start = i;
        }
    }
    out.push(word[start..].iter().flat_map(|c| c.to_lowercase()).collect());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize_identifiers(s).0
    }

    #[test]
    fn camel_hump() {
        assert_eq!(toks("transferFrom"), ["transfer", "from"]);
    }

    #[test]
    fn separators_and_digits() {
        assert_eq!(toks("safe_math.add(a1)"), ["safe", "math", "add", "a", "1"]);
        assert_eq!(toks("uint256 _value"), ["uint", "256", "value"]);
    }

    #[test]
    fn acronyms() {
        assert_eq!(toks("ERC20Token"), ["erc", "20", "token"]);
        assert_eq!(toks("onlyOwnerOrDAO"), ["only", "owner", "or", "dao"]);
        assert_eq!(toks("IERC721Receiver"), ["ierc", "721", "receiver"]);
    }

    #[test]
    fn trivial_inputs() {
        assert_eq!(toks("x"), ["x"]);
        assert!(toks("").is_empty());
        assert!(toks("{}();").is_empty());
    }
}
