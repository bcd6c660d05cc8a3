use fancy_regex::Regex;
use proptest::prelude::*;
use scc_core::codeform::{
    lexical_set, lexical_similarity, levenshtein, mixed_score, mixed_score_from_parts, sequence_similarity,
    syntactic_similarity, to_sbt, LexSet,
};
use scc_core::corpus::tokenize_identifiers;

/// Textbook recursive definition, exponential but exact.
fn lev_oracle(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                lev_oracle(ra, rb)
            } else {
                1 + lev_oracle(ra, b).min(lev_oracle(a, rb)).min(lev_oracle(ra, rb))
            }
        }
    }
}

fn all_sequences(max_len: usize, alphabet: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &c in alphabet {
                let mut s: Vec<u8> = seq.clone();
                s.push(c);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn levenshtein_matches_exhaustive_oracle() {
    let seqs = all_sequences(4, b"abc");
    assert_eq!(seqs.len(), 1 + 3 + 9 + 27 + 81);
    for a in &seqs {
        for b in &seqs {
            assert_eq!(levenshtein(a, b), lev_oracle(a, b), "{a:?} vs {b:?}");
        }
    }
    assert_eq!(levenshtein(&["a", "b", "c"], &["a", "b", "d"]), 1);
}

fn tokens() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..=12)
}

proptest! {
    #[test]
    fn levenshtein_bounds(a in tokens(), b in tokens()) {
        let d = levenshtein(&a, &b);
        prop_assert!(a.len().abs_diff(b.len()) <= d);
        prop_assert!(d <= a.len().max(b.len()));
        prop_assert_eq!(d == 0, a == b);
        prop_assert_eq!(d, levenshtein(&b, &a));
    }

    #[test]
    fn levenshtein_triangle(a in tokens(), b in tokens(), c in tokens()) {
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn sequence_similarity_range(a in tokens(), b in tokens()) {
        let s = sequence_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, sequence_similarity(&b, &a));
        if !a.is_empty() && !b.is_empty() {
            prop_assert!(s > 0.0);
        }
        prop_assert_eq!(s == 1.0, a == b);
    }

    #[test]
    fn mixed_score_monotone(lex in 0.0f64..=1.0, syn in 0.0f64..=1.0, bump in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
        let base = mixed_score_from_parts(lex, syn, lambda).unwrap();
        let more_lex = mixed_score_from_parts((lex + bump).min(1.0), syn, lambda).unwrap();
        let more_syn = mixed_score_from_parts(lex, (syn + bump).min(1.0), lambda).unwrap();
        prop_assert!(more_lex >= base - 1e-15);
        prop_assert!(more_syn >= base - 1e-15);
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&base));
    }

    /// Identifier splitting agrees with an independent regex formulation.
    #[test]
    fn identifier_split_matches_regex(s in "[A-Za-z0-9_ .(){};]{0,30}") {
        let re = Regex::new(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+").unwrap();
        let mut expected = Vec::new();
        for word in s.split(|c: char| !c.is_ascii_alphanumeric()) {
            for m in re.find_iter(word) {
                expected.push(m.unwrap().as_str().to_lowercase());
            }
        }
        prop_assert_eq!(tokenize_identifiers(&s).0, expected);
    }
}

#[test]
fn worked_similarity_values() {
    // Lengths 3 and 3 with one substitution.
    let s = sequence_similarity(&["a", "b", "c"], &["a", "b", "d"]);
    assert!((s - 5.0 / 6.0).abs() < 1e-12);
    // Disjoint lengths 2 and 4: lev is 4.
    let s = sequence_similarity(&["a", "b"], &["c", "d", "e", "f"]);
    assert_eq!(levenshtein(&["a", "b"], &["c", "d", "e", "f"]), 4);
    assert!((s - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(sequence_similarity::<&str>(&[], &[]), 1.0);
    assert_eq!(sequence_similarity(&[], &["a"]), 0.0);
    let five = ["a", "b", "c", "d", "e"];
    assert_eq!(sequence_similarity(&five, &five), 1.0);

    assert!((mixed_score_from_parts(0.5, 0.9, 0.7).unwrap() - 0.62).abs() < 1e-12);
}

#[test]
fn lambda_zero_is_syntactic() {
    let a = "function f(uint a) public returns (uint) { return a * 2; }";
    let b = "function g(uint b) external view returns (uint) { return b + 1; }";
    assert_eq!(mixed_score(a, b, 0.0).unwrap(), syntactic_similarity(a, b));
    assert_eq!(mixed_score(a, b, 1.0).unwrap(), lexical_similarity(a, b));
    assert!(mixed_score(a, b, 1.1).is_err());
}

#[test]
fn lexical_set_examples() {
    let set = |v: &[&str]| LexSet(v.iter().map(|s| s.to_string()).collect());
    assert_eq!(lexical_set("a a b"), set(&["a", "b"]));
    assert_eq!(lexical_set(""), set(&[]));
    assert_eq!(lexical_set("transferFrom transfer"), set(&["transfer", "from"]));
    assert!((set(&["a", "b"]).jaccard(&set(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(set(&["a"]).jaccard(&set(&["b"])), 0.0);
    assert_eq!(set(&[]).jaccard(&set(&[])), 1.0);
    assert_eq!(set(&["x", "y"]).jaccard(&set(&["y", "x"])), 1.0);
}

#[test]
fn identifier_only_difference() {
    let f = to_sbt("function f() public {}");
    let g = to_sbt("function g() public {}");
    assert!(!f.degraded && !g.degraded);
    assert_eq!(f.len(), g.len());
    let diffs: Vec<usize> = (0..f.len()).filter(|&i| f.tokens[i] != g.tokens[i]).collect();
    assert_eq!(diffs.len(), 1);
    assert_eq!(f.tokens[diffs[0]], "f");
    assert_eq!(g.tokens[diffs[0]], "g");
}

const SAMPLES: &[&str] = &[
    "function balanceOf(address who) public view returns (uint256) { return balances[who]; }",
    "modifier onlyOwner() { require(msg.sender == owner); _; }",
    "function transfer(address to, uint value) public returns (bool ok) { require(balances[msg.sender] >= value); balances[msg.sender] -= value; balances[to] += value; emit Transfer(msg.sender, to, value); return true; }",
    "function() external payable { deposit(); }",
    "constructor() public { owner = msg.sender; }",
    "function f(uint[] memory xs) internal pure returns (uint s) { for (uint i; i < xs.length; ++i) s += xs[i]; }",
];

#[test]
fn self_similarity_and_reformatting() {
    for src in SAMPLES {
        let sbt = to_sbt(src);
        assert!(!sbt.degraded, "{src}");
        assert!(!sbt.is_empty());
        assert_eq!(syntactic_similarity(src, src), 1.0);
        assert_eq!(mixed_score(src, src, 0.7).unwrap(), 1.0);

        // Spread tokens over lines and add comments.
        let reformatted = src
            .replace("{ ", "{\n    // body\n    ")
            .replace("; ", ";\n    ")
            .replace(", ", " ,  ");
        assert_eq!(to_sbt(&reformatted), sbt, "{reformatted}");
        assert_eq!(to_sbt(src), sbt);
    }
}

#[test]
fn similarities_are_symmetric() {
    for a in SAMPLES {
        for b in SAMPLES {
            assert_eq!(syntactic_similarity(a, b), syntactic_similarity(b, a));
            assert_eq!(lexical_similarity(a, b), lexical_similarity(b, a));
            assert_eq!(mixed_score(a, b, 0.7).unwrap(), mixed_score(b, a, 0.7).unwrap());
        }
    }
}

#[test]
fn fragments_degrade_gracefully() {
    let sbt = to_sbt("if (x > 0) { y = x; } else");
    assert!(sbt.degraded);
    assert!(sbt.tokens.contains(&"if".to_string()));
    assert!(sbt.tokens.contains(&"CMP".to_string()));
    assert_eq!(syntactic_similarity("if (x > 0) {", "if (x > 0) {"), 1.0);
}
