use std::collections::HashMap;

use panza_core::ingest::{split_dataset, Email, Split};
use panza_core::metrics::{bleu, kl_divergence, mauve, rouge_l_f1, tokenize, MauveParams, TokenSeq};
use panza_core::raft::{assemble_prompt, PromptAssembly};
use panza_core::rag::VectorStore;
use proptest::prelude::*;

/// Counts n-grams by linear search over previously seen grams.
fn naive_counts(tokens: &[String], n: usize) -> Vec<(Vec<String>, usize)> {
    let mut out: Vec<(Vec<String>, usize)> = Vec::new();
    if tokens.len() < n {
        return out;
    }
    for i in 0..=tokens.len() - n {
        let gram = tokens[i..i + n].to_vec();
        match out.iter_mut().find(|(g, _)| *g == gram) {
            Some((_, c)) => *c += 1,
            None => out.push((gram, 1)),
        }
    }
    out
}

fn naive_bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let rc = naive_counts(r, n);
        let cc = naive_counts(c, n);
        let total: usize = cc.iter().map(|(_, k)| k).sum();
        let matched: usize = cc
            .iter()
            .map(|(g, k)| (*k).min(rc.iter().find(|(h, _)| h == g).map_or(0, |(_, m)| *m)))
            .sum();
        if matched == 0 || total == 0 {
            return 0.0;
        }
        product *= matched as f64 / total as f64;
    }
    let (cl, rl) = (c.len() as f64, r.len() as f64);
    let bp = if cl < rl { (1.0 - rl / cl).exp() } else { 1.0 };
    (bp * product.powf(0.25)).clamp(0.0, 1.0)
}

/// Memoized recursion from the front; a different formulation from the
/// tabulated LCS under test.
fn naive_lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo.get(&(i, j)) {
            return *v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn naive_rouge(c: &[String], r: &[String]) -> f64 {
    let l = naive_lcs(c, r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

fn tokens(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from), 0..=max)
}

fn store_with(vectors: &[Vec<f32>]) -> VectorStore {
    let mut s = VectorStore::new(vectors[0].len());
    for (i, v) in vectors.iter().enumerate() {
        s.insert(&format!("doc-{:04}", i), "", v.clone()).unwrap();
    }
    s
}

fn brute_force(store: &VectorStore, q: &[f32], n: usize, t: f64) -> Vec<(String, f64)> {
    let qn = q.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = store
        .docs()
        .iter()
        .map(|d| {
            let dot: f64 = q.iter().zip(&d.vector).map(|(a, b)| *a as f64 * *b as f64).sum();
            let dn = d.vector.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            (d.email_id.clone(), (dot / (qn * dn)).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(n);
    all.retain(|(_, s)| *s >= t);
    all
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    // Small integer coordinates make exact ties common.
    prop::collection::vec(-3i8..=3, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| *x != 0))
        .prop_map(|v| v.into_iter().map(f32::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bleu_matches_naive_oracle(c in tokens(30), r in tokens(30)) {
        let got = bleu(&TokenSeq::from_tokens(c.clone()), &TokenSeq::from_tokens(r.clone()));
        prop_assert_eq!(got.to_bits(), naive_bleu(&c, &r).to_bits());
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn rouge_matches_naive_oracle_and_is_symmetric(c in tokens(30), r in tokens(30)) {
        let (ct, rt) = (TokenSeq::from_tokens(c.clone()), TokenSeq::from_tokens(r.clone()));
        let got = rouge_l_f1(&ct, &rt);
        prop_assert_eq!(got.to_bits(), naive_rouge(&c, &r).to_bits());
        prop_assert_eq!(got, rouge_l_f1(&rt, &ct));
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn self_scores_are_one(x in tokens(30)) {
        let t = TokenSeq::from_tokens(x.clone());
        if !x.is_empty() {
            prop_assert_eq!(rouge_l_f1(&t, &t), 1.0);
        }
        if x.len() >= 4 {
            prop_assert_eq!(bleu(&t, &t), 1.0);
        }
    }

    #[test]
    fn tokenizer_output_is_canonical(text in "\\PC{0,60}") {
        let t = tokenize(&text);
        for tok in t.as_slice() {
            prop_assert!(!tok.is_empty());
            prop_assert!(!tok.chars().any(char::is_whitespace));
            prop_assert!(!tok.chars().any(panza_core::metrics::is_punctuation));
        }
        prop_assert_eq!(tokenize(&text), t);
    }

    #[test]
    fn kl_is_gibbs(raw_p in prop::collection::vec(0.0f64..1.0, 1..20), seed in any::<u64>()) {
        let n = raw_p.len();
        let raw_q: Vec<f64> = (0..n).map(|i| ((seed >> (i % 60)) & 0xff) as f64 + 1.0).collect();
        let norm = |v: &[f64]| {
            let v: Vec<f64> = v.iter().map(|x| x + 1e-9).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (norm(&raw_p), norm(&raw_q));
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p), 0.0);
    }

    #[test]
    fn retrieve_equals_brute_force(
        vectors in prop::collection::vec(nonzero_vec(4), 1..120),
        q in nonzero_vec(4),
        n in 1usize..6,
        t in prop::sample::select(vec![-1.0, 0.0, 0.2, 0.5, 0.9, 1.0]),
    ) {
        let store = store_with(&vectors);
        let hits = store.retrieve_by_vector(&q, n, t, None).unwrap();
        let got: Vec<(String, f64)> = hits.into_iter().map(|h| (h.email_id, h.similarity)).collect();
        prop_assert_eq!(got, brute_force(&store, &q, n, t));
    }

    #[test]
    fn retrieval_is_monotone(
        vectors in prop::collection::vec(nonzero_vec(3), 1..60),
        q in nonzero_vec(3),
        n in 1usize..5,
        t in -1.0f64..1.0,
        dt in 0.0f64..1.0,
    ) {
        let store = store_with(&vectors);
        let count = |n, t| store.retrieve_by_vector(&q, n, t, None).unwrap().len();
        prop_assert!(count(n, t + dt) <= count(n, t));
        prop_assert!(count(n + 1, t) >= count(n, t));
    }

    #[test]
    fn split_conserves_and_is_deterministic(n in 2usize..300, f in 0.05f64..0.95, seed in any::<u64>()) {
        let corpus: Vec<Email> = (0..n).map(|i| Email {
            id: format!("e{i}"),
            subject: String::new(),
            body: format!("body {i}"),
            sent_at: None,
            split: Split::Unassigned,
        }).collect();
        let train = (n as f64 * f).floor() as usize;
        prop_assume!(train > 0 && train < n);
        let a = split_dataset(corpus.clone(), f, seed).unwrap();
        let b = split_dataset(corpus, f, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.iter().filter(|e| e.split == Split::Train).count(), train);
        prop_assert_eq!(a.iter().filter(|e| e.split == Split::Test).count(), n - train);
    }

    #[test]
    fn prompt_round_trips(
        sys in "[A-Za-z .!]{1,40}",
        user in "[A-Za-z .]{0,40}",
        rag in prop::option::of("[A-Za-z\n-]{1,40}"),
        instr in "[A-Za-z .\n]{1,40}",
    ) {
        let a = PromptAssembly { system_preamble: sys.clone(), user_preamble: user.clone(), rag_block: rag, instruction: instr };
        let rendered = assemble_prompt(&a);
        let back = PromptAssembly::parse(&rendered, &sys, &user).unwrap();
        prop_assert_eq!(assemble_prompt(&back), rendered);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mauve_ignores_input_order(seed in any::<u64>(), rot_p in 0usize..40, rot_q in 0usize..40) {
        let gen = |offset: f32, n: usize| -> Vec<Vec<f32>> {
            (0..n).map(|i| {
                let x = ((seed.wrapping_add(i as u64 * 2654435761)) % 1000) as f32 / 100.0;
                vec![x + offset, (i % 7) as f32, x * 0.5]
            }).collect()
        };
        let p = gen(0.0, 40);
        let q = gen(1.5, 40);
        let params = MauveParams { k: Some(4), ..MauveParams::with_seed(seed) };
        let base = mauve(&p, &q, &params).unwrap();
        let mut p2 = p.clone();
        p2.rotate_left(rot_p);
        p2.reverse();
        let mut q2 = q.clone();
        q2.rotate_left(rot_q);
        let moved = mauve(&p2, &q2, &params).unwrap();
        prop_assert_eq!(base.score, moved.score);
        prop_assert_eq!(&base.p_histogram, &moved.p_histogram);
        prop_assert!((0.0..=1.0).contains(&base.score));
    }

    #[test]
    fn retrieve_equals_brute_force_at_full_size(
        vectors in prop::collection::vec(nonzero_vec(8), 1000),
        q in nonzero_vec(8),
        n in 1usize..10,
        t in -0.5f64..0.9,
    ) {
        let store = store_with(&vectors);
        let got: Vec<(String, f64)> = store
            .retrieve_by_vector(&q, n, t, None)
            .unwrap()
            .into_iter()
            .map(|h| (h.email_id, h.similarity))
            .collect();
        prop_assert_eq!(got, brute_force(&store, &q, n, t));
    }
}
