//! Training-set emission: prompt assembly, retrieval-augmented fine-tuning
//! (RAFT) context injection and the external trainer's configuration file.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use crate::backend::Embedder;
use crate::instruct::InstructionPair;
use crate::prompts;
use crate::rag::{build_rag_preamble, RagError, VectorStore};

const INSTRUCTION_PREFIX: &str = "Instruction: ";

/// Parts of a generation prompt.
///
/// Rendered as: system preamble, blank line, user preamble, blank line,
/// optional RAG block followed by a blank line, then `Instruction: ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptAssembly {
    pub system_preamble: String,
    pub user_preamble: String,
    pub rag_block: Option<String>,
    pub instruction: String,
}

impl PromptAssembly {
    /// Recovers the parts of a prompt rendered with the given preambles.
    pub fn parse(prompt: &str, system_preamble: &str, user_preamble: &str) -> Option<Self> {
        let rest = prompt
            .strip_prefix(system_preamble)?
            .strip_prefix("\n\n")?
            .strip_prefix(user_preamble)?
            .strip_prefix("\n\n")?;
        let (rag_block, instruction) = match rest.strip_prefix(INSTRUCTION_PREFIX) {
            Some(instr) => (None, instr),
            _ => {
                let split = rest.rfind(&format!("\n{INSTRUCTION_PREFIX}"))?;
                let rag = &rest[..split];
                (Some(rag.to_string()), &rest[split + 1 + INSTRUCTION_PREFIX.len()..])
            }
        };
        Some(Self {
            system_preamble: system_preamble.to_string(),
            user_preamble: user_preamble.to_string(),
            rag_block,
            instruction: instruction.to_string(),
        })
    }
}

/// Renders the prompt. An empty `rag_block` is treated as absent.
pub fn assemble_prompt(a: &PromptAssembly) -> String {
    let mut out = String::with_capacity(
        a.system_preamble.len()
            + a.user_preamble.len()
            + a.rag_block.as_ref().map_or(0, String::len)
            + a.instruction.len()
            + 24,
    );
    out.push_str(&a.system_preamble);
    out.push_str("\n\n");
    out.push_str(&a.user_preamble);
    out.push_str("\n\n");
    if let Some(rag) = a.rag_block.as_deref().filter(|r| !r.is_empty()) {
        out.push_str(rag);
        out.push_str(if rag.ends_with('\n') { "\n" } else { "\n\n" });
    }
    out.push_str(INSTRUCTION_PREFIX);
    out.push_str(&a.instruction);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaftParams {
    /// Probability of including retrieved emails in a training prompt.
    pub p_rag: f64,
    pub n_rag: usize,
    pub t_rag: f64,
    pub seed: u64,
}

pub const TRAIN_N_RAG: usize = 2;
pub const INFERENCE_N_RAG: usize = 3;
pub const DEFAULT_P_RAG: f64 = 0.55;
pub const DEFAULT_T_RAG: f64 = 0.2;

impl Default for RaftParams {
    fn default() -> Self {
        Self {
            p_rag: DEFAULT_P_RAG,
            n_rag: TRAIN_N_RAG,
            t_rag: DEFAULT_T_RAG,
            seed: 0,
        }
    }
}

impl RaftParams {
    pub fn validate(&self) -> Result<(), RaftError> {
        if !(0.0..=1.0).contains(&self.p_rag) {
            return Err(RaftError::Invalid(format!("p_rag {} outside [0, 1]", self.p_rag)));
        }
        if self.n_rag == 0 {
            return Err(RaftError::Invalid("n_rag must be positive".into()));
        }
        if self.t_rag.is_nan() {
            return Err(RaftError::Invalid("t_rag is NaN".into()));
        }
        Ok(())
    }
}

/// Uniform `[0, 1)` draw for one example, seeded by `(seed, email_id)` so it
/// does not depend on the example's position in the file.
pub fn rag_draw(seed: u64, email_id: &str) -> f64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(email_id.as_bytes())
        .finalize();
    let stream_seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
    ChaCha8Rng::seed_from_u64(stream_seed).random::<f64>()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub email_id: String,
    pub prompt: String,
    pub completion: String,
    pub rag_included: bool,
    pub rag_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preambles {
    pub system: String,
    pub user: String,
}

impl Default for Preambles {
    fn default() -> Self {
        Self {
            system: prompts::SYSTEM_PREAMBLE.to_string(),
            user: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftManifest {
    pub total: usize,
    pub with_rag: usize,
    pub without_rag: usize,
    /// Examples whose draw selected retrieval, including those where no
    /// stored email cleared the threshold.
    pub rag_drawn: usize,
    pub params: RaftParams,
    pub preambles: Preambles,
}

#[derive(Debug, thiserror::Error)]
pub enum RaftError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("pair {0} is not in the store; the store must be built from the same train split")]
    StoreMismatch(String),
    #[error("example {0} retrieved its own email")]
    Leakage(String),
    #[error("retrieval failed: {0}")]
    Rag(#[from] RagError),
    #[error("could not write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Builds one training example per pair. With probability `p_rag` the
/// instruction is used as a retrieval query (excluding the pair's own email)
/// and the hits are rendered into the prompt.
pub async fn emit_training_set<E: Embedder>(
    pairs: &[InstructionPair],
    store: &VectorStore,
    embedder: &E,
    params: &RaftParams,
    preambles: &Preambles,
) -> Result<(Vec<TrainingExample>, RaftManifest), RaftError> {
    params.validate()?;
    let stored: HashSet<&str> = store.docs().iter().map(|d| d.email_id.as_str()).collect();
    if let Some(p) = pairs.iter().find(|p| !stored.contains(p.email_id.as_str())) {
        return Err(RaftError::StoreMismatch(p.email_id.clone()));
    }

    let mut examples = Vec::with_capacity(pairs.len());
    let mut rag_drawn = 0;
    for pair in pairs {
        let mut rag_block = None;
        let mut rag_ids = Vec::new();
        if rag_draw(params.seed, &pair.email_id) < params.p_rag {
            rag_drawn += 1;
            let hits = store
                .retrieve(embedder, &pair.instruction, params.n_rag, params.t_rag, Some(&pair.email_id))
                .await?;
            if !hits.is_empty() {
                rag_ids = hits.iter().map(|h| h.email_id.clone()).collect();
                rag_block = Some(build_rag_preamble(&hits));
            }
        }
        if rag_ids.contains(&pair.email_id) {
            return Err(RaftError::Leakage(pair.email_id.clone()));
        }
        let prompt = assemble_prompt(&PromptAssembly {
            system_preamble: preambles.system.clone(),
            user_preamble: preambles.user.clone(),
            rag_block,
            instruction: pair.instruction.clone(),
        });
        examples.push(TrainingExample {
            email_id: pair.email_id.clone(),
            prompt,
            completion: pair.email_body.clone(),
            rag_included: !rag_ids.is_empty(),
            rag_ids,
        });
    }
    let with_rag = examples.iter().filter(|e| e.rag_included).count();
    let manifest = RaftManifest {
        total: examples.len(),
        with_rag,
        without_rag: examples.len() - with_rag,
        rag_drawn,
        params: *params,
        preambles: preambles.clone(),
    };
    info!(total = manifest.total, with_rag, "training set emitted");
    Ok((examples, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMethod {
    Fft,
    Rosa,
    Lora,
}

/// Hyperparameters handed to the external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub method: TrainingMethod,
    pub learning_rate: f64,
    pub epochs: i64,
    pub batch_size: i64,
}

impl TrainerConfig {
    pub fn defaults(method: TrainingMethod) -> Self {
        Self {
            method,
            learning_rate: 1e-5,
            epochs: if method == TrainingMethod::Fft { 3 } else { 5 },
            batch_size: 8,
        }
    }

    pub fn validate(&self) -> Result<(), RaftError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RaftError::Invalid(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.epochs <= 0 {
            return Err(RaftError::Invalid(format!("epochs {} must be positive", self.epochs)));
        }
        if self.batch_size <= 0 {
            return Err(RaftError::Invalid(format!("batch_size {} must be positive", self.batch_size)));
        }
        Ok(())
    }

    /// Flat `key = value` TOML rendering.
    pub fn to_toml(&self) -> Result<String, RaftError> {
        self.validate()?;
        toml::to_string(self).map_err(|e| RaftError::Invalid(e.to_string()))
    }
}

pub fn emit_trainer_config(cfg: &TrainerConfig, out: &Path) -> Result<(), RaftError> {
    let text = cfg.to_toml()?;
    std::fs::write(out, text).map_err(|source| RaftError::Io {
        path: out.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(rag: Option<&str>) -> PromptAssembly {
        PromptAssembly {
            system_preamble: prompts::SYSTEM_PREAMBLE.into(),
            user_preamble: "My name is Jane Doe".into(),
            rag_block: rag.map(Into::into),
            instruction: "Write to Cheryl.".into(),
        }
    }

    #[test]
    fn no_rag_has_single_gap() {
        let p = assemble_prompt(&parts(None));
        assert!(p.ends_with("My name is Jane Doe\n\nInstruction: Write to Cheryl."));
        assert_eq!(assemble_prompt(&parts(Some(""))), p);
        assert!(p.contains("\"Sorry, but I don't get it.\"\n\nMy name"));
    }

    #[test]
    fn rag_sits_between_user_preamble_and_instruction() {
        let rag = prompts::rag_block(["Hi"]);
        let p = assemble_prompt(&parts(Some(&rag)));
        let u = p.find("My name is Jane Doe").unwrap();
        let r = p.find("EMAIL CONTENT:").unwrap();
        let i = p.find("Instruction: Write").unwrap();
        assert!(u < r && r < i);
        assert!(p.contains("Hi\n\n---\n\nInstruction: Write to Cheryl."));
    }

    #[test]
    fn parse_inverts_assembly() {
        let rag = prompts::rag_block(["a", "b"]);
        for a in [parts(None), parts(Some(&rag)), parts(Some("custom block"))] {
            let p = assemble_prompt(&a);
            let back = PromptAssembly::parse(&p, &a.system_preamble, &a.user_preamble).unwrap();
            assert_eq!(assemble_prompt(&back), p);
        }
        assert!(PromptAssembly::parse("nope", "sys", "user").is_none());
    }

    #[test]
    fn draws_are_stable_and_uniform_range() {
        let a = rag_draw(1, "msg-000001");
        assert_eq!(a, rag_draw(1, "msg-000001"));
        assert_ne!(a, rag_draw(2, "msg-000001"));
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn trainer_defaults() {
        let fft = TrainerConfig::defaults(TrainingMethod::Fft);
        assert_eq!(fft.epochs, 3);
        let rosa = TrainerConfig::defaults(TrainingMethod::Rosa);
        assert_eq!((rosa.learning_rate, rosa.batch_size, rosa.epochs), (1e-5, 8, 5));
        let lora = TrainerConfig::defaults(TrainingMethod::Lora);
        assert_eq!(lora.epochs, 5);
    }

    #[test]
    fn trainer_validation() {
        let mut c = TrainerConfig::defaults(TrainingMethod::Rosa);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainerConfig::defaults(TrainingMethod::Rosa);
        c.learning_rate = 0.0;
        assert!(c.to_toml().is_err());
    }

    #[test]
    fn trainer_toml_is_flat() {
        let text = TrainerConfig::defaults(TrainingMethod::Fft).to_toml().unwrap();
        let parsed: toml::Table = text.parse().unwrap();
        assert_eq!(parsed["method"].as_str(), Some("fft"));
        assert_eq!(parsed["epochs"].as_integer(), Some(3));
        assert_eq!(parsed["batch_size"].as_integer(), Some(8));
        assert_eq!(parsed["learning_rate"].as_float(), Some(1e-5));
        assert!(parsed.values().all(|v| !v.is_table()));
    }

    #[test]
    fn params_validation() {
        assert!(RaftParams::default().validate().is_ok());
        assert!(RaftParams { p_rag: 1.5, ..Default::default() }.validate().is_err());
        assert!(RaftParams { n_rag: 0, ..Default::default() }.validate().is_err());
    }
}
