use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scc_core::codeform::{mixed_score, LexMode};
use scc_core::corpus::CodeCommentPair;
use scc_core::retrieval::{RetrievalConfig, RetrievalIndex, Strategy};
use scc_core::semantic::{fit_whitening, EmbeddingMatrix, VectorIndex};

const DIM: usize = 8;

fn synthetic_code(i: usize) -> String {
    let verbs = ["transfer", "approve", "mint", "burn", "lock", "stake", "vote"];
    let nouns = ["Tokens", "Owner", "Reward", "Balance", "Share"];
    let stmts = [
        "balances[to] += amount;",
        "total -= amount; emit Burn(msg.sender, amount);",
        "if (amount > limit) { revert(); }",
        "for (uint i = 0; i < amount; i++) { counter += i; }",
        "require(to != address(0)); allowed[msg.sender][to] = amount;",
    ];
    format!(
        "function {}{}(address to, uint256 amount) public {{ require(amount > {}); {} }}",
        verbs[i % verbs.len()],
        nouns[(i / 3) % nouns.len()],
        i % 4,
        stmts[(i * 7) % stmts.len()]
    )
}

struct Fixture {
    pairs: Vec<CodeCommentPair>,
    embeddings: EmbeddingMatrix,
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<CodeCommentPair> = (0..n)
        .map(|i| CodeCommentPair::new(format!("p{i:03}"), synthetic_code(i), format!("comment for pair {i}")))
        .collect();
    let rows = pairs
        .iter()
        .map(|p| (p.id.clone(), (0..DIM).map(|_| rng.gen_range(-3.0f32..3.0)).collect()))
        .collect();
    Fixture {
        pairs,
        embeddings: EmbeddingMatrix::from_rows(rows).unwrap(),
    }
}

fn index(f: &Fixture, d: usize) -> RetrievalIndex {
    let model = fit_whitening(&f.embeddings, d).unwrap();
    RetrievalIndex::build(&f.pairs, &f.embeddings, model, LexMode::Subtoken).unwrap()
}

fn query(id: &str, code: &str, rng: &mut ChaCha8Rng) -> (CodeCommentPair, Vec<f32>) {
    (
        CodeCommentPair::new(id, code, "unused"),
        (0..DIM).map(|_| rng.gen_range(-3.0f32..3.0)).collect(),
    )
}

/// Scores every training pair by whitened distance, takes the exact top n,
/// reranks by mixed score and keeps k.
fn oracle(
    f: &Fixture,
    idx: &RetrievalIndex,
    q: &CodeCommentPair,
    q_emb: &[f32],
    n: usize,
    k: usize,
) -> Vec<(String, f64)> {
    let model = idx.model();
    let qv = model.apply(q_emb).unwrap().0;
    let mut all: Vec<(f64, &CodeCommentPair)> = f
        .pairs
        .iter()
        .filter(|p| p.id != q.id)
        .map(|p| {
            let v = model.apply(f.embeddings.get(&p.id).unwrap()).unwrap().0;
            let d: f64 = v.iter().zip(&qv).map(|(a, b)| (a - b).powi(2)).sum();
            (d, p)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.id.cmp(&b.1.id)));
    all.truncate(n);
    let mut reranked: Vec<(String, f64)> = all
        .iter()
        .map(|(_, p)| (p.id.clone(), mixed_score(&q.code, &p.code, 0.7).unwrap()))
        .collect();
    reranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    reranked.truncate(k);
    reranked
}

#[test]
fn full_strategy_matches_brute_force_oracle() {
    let f = fixture(50, 1);
    let idx = index(&f, 6);
    let cfg = RetrievalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..20 {
        let (q, emb) = query(&format!("q{i}"), &synthetic_code(i * 3 + 1), &mut rng);
        let got = idx.retrieve(&q, &emb, &cfg).unwrap();
        let want = oracle(&f, &idx, &q, &emb, 10, 5);
        let got_pairs: Vec<(String, f64)> = got.entries.iter().map(|e| (e.id.clone(), e.mixed_score)).collect();
        assert_eq!(got_pairs.len(), want.len());
        for (g, w) in got_pairs.iter().zip(&want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-12);
        }
        assert!(!got.short);
        assert!(got.entries.windows(2).all(|w| w[0].mixed_score >= w[1].mixed_score));
    }
}

#[test]
fn entries_come_from_stage_one() {
    let f = fixture(50, 2);
    let idx = index(&f, 6);
    let model = idx.model().clone();
    let whitened = VectorIndex::whitened(&f.embeddings, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10 {
        let (q, emb) = query(&format!("q{i}"), &synthetic_code(i), &mut rng);
        let stage1: Vec<String> = whitened
            .top_n(&model.apply(&emb).unwrap(), 10)
            .unwrap()
            .into_iter()
            .map(|n| n.id)
            .collect();
        let full = idx.retrieve(&q, &emb, &RetrievalConfig::default()).unwrap();
        assert!(full.entries.iter().all(|e| stage1.contains(&e.id)));

        let sem = idx
            .retrieve_ablate(&q, &emb, &RetrievalConfig::default(), Strategy::SemanticOnly)
            .unwrap();
        assert_eq!(sem.ids(), stage1[..5].iter().map(String::as_str).collect::<Vec<_>>());
        assert!(sem.entries.windows(2).all(|w| w[0].semantic_distance <= w[1].semantic_distance));
    }
}

#[test]
fn identical_train_pair_ranks_first() {
    let f = fixture(30, 3);
    let idx = index(&f, 6);
    let target = &f.pairs[7];
    let q = CodeCommentPair::new("query", target.code.clone(), "x");
    let emb = f.embeddings.get(&target.id).unwrap().to_vec();
    let set = idx.retrieve(&q, &emb, &RetrievalConfig::default()).unwrap();
    assert_eq!(set.entries[0].id, target.id);
    assert_eq!(set.entries[0].mixed_score, 1.0);
    assert_eq!(
        idx.reuse_top1(&q, &emb, &RetrievalConfig::default()).unwrap(),
        target.comment
    );
}

#[test]
fn query_id_is_excluded() {
    let f = fixture(30, 4);
    let idx = index(&f, 6);
    for p in &f.pairs {
        let emb = f.embeddings.get(&p.id).unwrap();
        for s in Strategy::ALL {
            let set = idx.retrieve_ablate(p, emb, &RetrievalConfig::default(), s).unwrap();
            assert!(set.entries.iter().all(|e| e.id != p.id));
            assert_eq!(set.len(), 5);
        }
    }
}

#[test]
fn short_pool_is_flagged() {
    let f = fixture(3, 5);
    let idx = index(&f, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (q, emb) = query("q", "function x() {}", &mut rng);
    for s in Strategy::ALL {
        let set = idx.retrieve_ablate(&q, &emb, &RetrievalConfig::default(), s).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.short);
    }
}

#[test]
fn invariant_under_pool_permutation() {
    let f = fixture(40, 6);
    let idx = index(&f, 6);
    let mut shuffled_pairs = f.pairs.clone();
    shuffled_pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    let rows = shuffled_pairs
        .iter()
        .map(|p| (p.id.clone(), f.embeddings.get(&p.id).unwrap().to_vec()))
        .collect();
    let g = Fixture {
        pairs: shuffled_pairs,
        embeddings: EmbeddingMatrix::from_rows(rows).unwrap(),
    };
    let idx2 = index(&g, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..10 {
        let (q, emb) = query(&format!("q{i}"), &synthetic_code(i + 2), &mut rng);
        for s in Strategy::ALL {
            let cfg = RetrievalConfig { seed: 11, ..Default::default() };
            let a = idx.retrieve_ablate(&q, &emb, &cfg, s).unwrap();
            let b = idx2.retrieve_ablate(&q, &emb, &cfg, s).unwrap();
            assert_eq!(a.ids(), b.ids(), "{s}");
            for (x, y) in a.entries.iter().zip(&b.entries) {
                assert!((x.semantic_distance - y.semantic_distance).abs() < 1e-6 * (1.0 + x.semantic_distance));
                assert_eq!(x.mixed_score, y.mixed_score);
            }
        }
    }
}

#[test]
fn ranking_invariant_under_scaling() {
    let f = fixture(40, 9);
    let idx = index(&f, 6);
    let scale = 3.5f32;
    let scaled = Fixture {
        pairs: f.pairs.clone(),
        embeddings: EmbeddingMatrix::new(
            f.embeddings.ids().to_vec(),
            DIM,
            f.embeddings.data().iter().map(|v| v * scale).collect(),
        )
        .unwrap(),
    };
    let idx2 = index(&scaled, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..10 {
        let (q, emb) = query(&format!("q{i}"), &synthetic_code(i), &mut rng);
        let emb2: Vec<f32> = emb.iter().map(|v| v * scale).collect();
        let a = idx.retrieve(&q, &emb, &RetrievalConfig::default()).unwrap();
        let b = idx2.retrieve(&q, &emb2, &RetrievalConfig::default()).unwrap();
        assert_eq!(a.ids(), b.ids());
    }
}

#[test]
fn smaller_k_is_a_prefix() {
    let f = fixture(50, 12);
    let idx = index(&f, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..10 {
        let (q, emb) = query(&format!("q{i}"), &synthetic_code(i * 5), &mut rng);
        for s in [Strategy::Full, Strategy::NoWhitening, Strategy::SemanticOnly] {
            let five = idx.retrieve_ablate(&q, &emb, &RetrievalConfig::default(), s).unwrap();
            for k in 1..5 {
                let cfg = RetrievalConfig { k, ..Default::default() };
                let fewer = idx.retrieve_ablate(&q, &emb, &cfg, s).unwrap();
                assert_eq!(fewer.ids(), five.ids()[..k].to_vec());
            }
        }
    }
}

#[test]
fn no_whitening_equals_full_on_prewhitened_data() {
    // Whiten once and treat the result as raw input: it then has zero mean and
    // identity covariance, so refitting yields a distance-preserving map.
    let f = fixture(50, 14);
    let first = fit_whitening(&f.embeddings, DIM).unwrap();
    let white = Fixture {
        pairs: f.pairs.clone(),
        embeddings: first.apply_matrix(&f.embeddings).unwrap(),
    };
    let idx = index(&white, DIM);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for i in 0..15 {
        let (q, raw) = query(&format!("q{i}"), &synthetic_code(i + 1), &mut rng);
        let emb: Vec<f32> = first.apply(&raw).unwrap().0.iter().map(|&v| v as f32).collect();
        let full = idx.retrieve(&q, &emb, &RetrievalConfig::default()).unwrap();
        let raw_stage = idx
            .retrieve_ablate(&q, &emb, &RetrievalConfig::default(), Strategy::NoWhitening)
            .unwrap();
        assert_eq!(full.ids(), raw_stage.ids());
        for (a, b) in full.entries.iter().zip(&raw_stage.entries) {
            assert!((a.semantic_distance - b.semantic_distance).abs() < 1e-3 * (1.0 + a.semantic_distance));
        }
    }
}

#[test]
fn random_strategy_is_seeded() {
    let f = fixture(50, 16);
    let idx = index(&f, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (q, emb) = query("q", &synthetic_code(4), &mut rng);
    let cfg = RetrievalConfig { seed: 42, strategy: Strategy::Random, ..Default::default() };
    let a = idx.retrieve(&q, &emb, &cfg).unwrap();
    let b = idx.retrieve(&q, &emb, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    let mut ids = a.ids();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5);

    let distinct: std::collections::BTreeSet<Vec<String>> = (0..10)
        .map(|seed| {
            let cfg = RetrievalConfig { seed, ..cfg.clone() };
            idx.retrieve(&q, &emb, &cfg).unwrap().ids().into_iter().map(String::from).collect()
        })
        .collect();
    assert!(distinct.len() > 1);
}

#[test]
fn reuse_top1_breaks_ties_by_id() {
    let code = "function ping() public { emit Ping(); }";
    let pairs = vec![
        CodeCommentPair::new("b", code, "comment b"),
        CodeCommentPair::new("a", code, "comment a"),
        CodeCommentPair::new("c", "function other(uint x) { y = x; }", "comment c"),
    ];
    let emb = EmbeddingMatrix::from_rows(vec![
        ("b".into(), vec![1.0, 0.0]),
        ("a".into(), vec![1.0, 0.0]),
        ("c".into(), vec![0.0, 1.0]),
    ])
    .unwrap();
    let model = fit_whitening(&emb, 1).unwrap();
    let idx = RetrievalIndex::build(&pairs, &emb, model, LexMode::Subtoken).unwrap();
    let q = CodeCommentPair::new("q", code, "");
    let cfg = RetrievalConfig { n: 3, k: 2, ..Default::default() };
    assert_eq!(idx.reuse_top1(&q, &[1.0, 0.0], &cfg).unwrap(), "comment a");
    let set = idx.retrieve(&q, &[1.0, 0.0], &cfg).unwrap();
    assert_eq!(set.ids(), ["a", "b"]);
    assert_eq!(set.entries[0].comment, idx.reuse_top1(&q, &[1.0, 0.0], &cfg).unwrap());
}

#[test]
fn missing_embedding_and_bad_config() {
    let f = fixture(10, 18);
    let model = fit_whitening(&f.embeddings, 4).unwrap();
    let mut pairs = f.pairs.clone();
    pairs.push(CodeCommentPair::new("orphan", "function o() {}", "no vector"));
    assert!(RetrievalIndex::build(&pairs, &f.embeddings, model, LexMode::Subtoken).is_err());

    let idx = index(&f, 4);
    let q = CodeCommentPair::new("q", "function q() {}", "");
    let bad = RetrievalConfig { k: 0, ..Default::default() };
    assert!(idx.retrieve(&q, &[0.0; DIM], &bad).is_err());
    assert!(idx.retrieve(&q, &[0.0; 3], &RetrievalConfig::default()).is_err());
}

#[test]
fn export_line_shape() {
    let f = fixture(12, 19);
    let idx = index(&f, 4);
    let q = CodeCommentPair::new("q", "function q() {}", "");
    let set = idx.retrieve(&q, &[0.5; DIM], &RetrievalConfig::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&set.export_line()).unwrap();
    assert_eq!(v["query_id"], "q");
    assert_eq!(v["entries"].as_array().unwrap().len(), 5);
    let first = &v["entries"][0];
    assert!(first["id"].is_string() && first["semantic_distance"].is_number() && first["mixed_score"].is_number());
    assert!(first.get("code").is_none());
    assert_eq!(v["short"], false);
}
