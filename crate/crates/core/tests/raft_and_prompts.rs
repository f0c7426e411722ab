use std::path::PathBuf;

use panza_core::instruct::{build_summarization_prompt, InstructionPair};
use panza_core::prompts::{name_preamble, EXAMPLE_USER_PREAMBLE, SYSTEM_PREAMBLE};
use panza_core::raft::{
    assemble_prompt, emit_trainer_config, emit_training_set, rag_draw, Preambles, PromptAssembly, RaftError,
    RaftParams, TrainerConfig, TrainingMethod,
};
use panza_core::rag::{build_rag_preamble, RagHit, VectorStore};
use panza_core::stub::HashEmbedder;

fn golden(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", name].iter().collect();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn hit(id: &str, body: &str) -> RagHit {
    RagHit {
        email_id: id.into(),
        similarity: 0.5,
        body: body.into(),
    }
}

#[test]
fn golden_templates() {
    assert_eq!(build_summarization_prompt("{email}"), golden("summarization.txt"));
    assert_eq!(SYSTEM_PREAMBLE, golden("system_preamble.txt"));
    assert!(SYSTEM_PREAMBLE.ends_with("\"Sorry, but I don't get it.\""));
    assert_eq!(EXAMPLE_USER_PREAMBLE, golden("user_preamble.txt"));
    assert_eq!(name_preamble("David", "Smith"), "My name is David Smith");
    let rag = build_rag_preamble(&[hit("1", "<email_1 content>"), hit("2", "<email_2 content>")]);
    assert_eq!(rag, golden("rag_block.txt"));
    assert_eq!(rag.matches("\n---\n").count(), 2);
}

#[test]
fn golden_generation_prompts() {
    let instruction = "Write an email to Peter to tell him my new address.";
    let with_rag = assemble_prompt(&PromptAssembly {
        system_preamble: SYSTEM_PREAMBLE.into(),
        user_preamble: EXAMPLE_USER_PREAMBLE.into(),
        rag_block: Some(golden("rag_block.txt")),
        instruction: instruction.into(),
    });
    assert_eq!(with_rag, golden("generation_with_rag.txt"));
    let without = assemble_prompt(&PromptAssembly {
        system_preamble: SYSTEM_PREAMBLE.into(),
        user_preamble: name_preamble("David", "Smith"),
        rag_block: None,
        instruction: instruction.into(),
    });
    assert_eq!(without, golden("generation_without_rag.txt"));
    assert!(without.contains("Smith\n\nInstruction: "));
}

#[test]
fn summarization_prompt_is_literal() {
    let p = build_summarization_prompt("Hi Bob {x}");
    assert!(p.ends_with("start with Instruction:\nHere is the email text:\nHi Bob {x}"));
    assert_eq!(p, build_summarization_prompt("Hi Bob {x}"));
}

/// Bodies drawn from two topics so retrieval finds neighbours.
fn corpus(n: usize) -> (Vec<InstructionPair>, VectorStore) {
    let topics = ["budget forecast quarterly numbers", "hiking trip weekend mountains"];
    let pairs: Vec<InstructionPair> = (0..n)
        .map(|i| InstructionPair {
            email_id: format!("msg-{i:06}"),
            instruction: format!("Write about the {} item {i}", topics[i % 2]),
            email_body: format!("Hi, notes on the {} for item {i}. Cheers", topics[i % 2]),
        })
        .collect();
    let e = HashEmbedder::default();
    let mut store = VectorStore::new(e.dim);
    for p in &pairs {
        store.insert(&p.email_id, &p.email_body, e.embed_sync(&p.email_body)).unwrap();
    }
    (pairs, store)
}

fn run(pairs: &[InstructionPair], store: &VectorStore, params: RaftParams) -> Result<String, RaftError> {
    let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
    let (examples, manifest) = rt.block_on(emit_training_set(
        pairs,
        store,
        &HashEmbedder::default(),
        &params,
        &Preambles::default(),
    ))?;
    assert_eq!(examples.len(), pairs.len());
    assert_eq!(manifest.with_rag + manifest.without_rag, manifest.total);
    for (ex, pair) in examples.iter().zip(pairs) {
        assert_eq!(ex.email_id, pair.email_id);
        assert_eq!(ex.completion, pair.email_body);
        assert!(!ex.rag_ids.contains(&ex.email_id), "leak in {}", ex.email_id);
        assert_eq!(ex.rag_included, !ex.rag_ids.is_empty());
        assert!(ex.rag_ids.len() <= params.n_rag);
        let parsed = PromptAssembly::parse(&ex.prompt, SYSTEM_PREAMBLE, "").unwrap();
        assert_eq!(parsed.rag_block.is_some(), ex.rag_included);
        assert_eq!(assemble_prompt(&parsed), ex.prompt);
        assert_eq!(parsed.instruction, pair.instruction);
    }
    Ok(String::from_utf8(panza_core::jsonl::to_bytes(&examples)).unwrap())
}

#[test]
fn boundary_probabilities() {
    let (pairs, store) = corpus(40);
    let none = run(&pairs, &store, RaftParams { p_rag: 0.0, ..Default::default() }).unwrap();
    assert!(!none.contains("\"rag_included\":true"));
    let all = run(&pairs, &store, RaftParams { p_rag: 1.0, t_rag: -1.0, ..Default::default() }).unwrap();
    assert!(!all.contains("\"rag_included\":false"));
}

#[test]
fn emission_is_deterministic_and_seeded_per_example() {
    let (pairs, store) = corpus(60);
    let params = RaftParams { seed: 11, ..Default::default() };
    let a = run(&pairs, &store, params).unwrap();
    assert_eq!(a, run(&pairs, &store, params).unwrap());
    assert_ne!(a, run(&pairs, &store, RaftParams { seed: 12, ..params }).unwrap());

    // Dropping one pair leaves every other draw untouched.
    let draws: Vec<bool> = pairs.iter().map(|p| rag_draw(11, &p.email_id) < 0.55).collect();
    let fewer: Vec<bool> = pairs[1..].iter().map(|p| rag_draw(11, &p.email_id) < 0.55).collect();
    assert_eq!(&draws[1..], &fewer[..]);
}

#[test]
fn pairs_missing_from_store_are_rejected() {
    let (mut pairs, store) = corpus(10);
    pairs.push(InstructionPair {
        email_id: "msg-999999".into(),
        instruction: "x".into(),
        email_body: "y".into(),
    });
    assert!(matches!(
        run(&pairs, &store, RaftParams::default()),
        Err(RaftError::StoreMismatch(id)) if id == "msg-999999"
    ));
    assert!(matches!(
        run(&pairs[..2], &store, RaftParams { p_rag: 1.5, ..Default::default() }),
        Err(RaftError::Invalid(_))
    ));
}

#[test]
fn trainer_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trainer.toml");
    emit_trainer_config(&TrainerConfig::defaults(TrainingMethod::Fft), &out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let table: toml::Table = text.parse().unwrap();
    assert_eq!(table["method"].as_str(), Some("fft"));
    assert_eq!(table["epochs"].as_integer(), Some(3));
    assert_eq!(table["batch_size"].as_integer(), Some(8));
    assert_eq!(table["learning_rate"].as_float(), Some(1e-5));

    let rosa = TrainerConfig::defaults(TrainingMethod::Rosa);
    assert_eq!((rosa.epochs, rosa.batch_size, rosa.learning_rate), (5, 8, 1e-5));
    let bad = TrainerConfig { epochs: 0, ..rosa };
    assert!(emit_trainer_config(&bad, &out).is_err());
    let bad = TrainerConfig { learning_rate: 0.0, ..rosa };
    assert!(bad.validate().is_err());
}
