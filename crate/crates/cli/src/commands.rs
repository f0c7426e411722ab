use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use panza_core::backend::BackendClient;
use panza_core::gateway::{self, GatewayConfig, GatewayError};
use panza_core::ingest::{self, CleaningRules, Email, IngestError, Split};
use panza_core::instruct::{self, GoldenInstruction, InstructError, InstructionPair, PairFailure};
use panza_core::jsonl::{self, JsonlError};
use panza_core::manifest::{config_hash, manifest_path, RunManifest, RunStatus};
use panza_core::metrics::{self, Candidate, MauveParams, MetricsError};
use panza_core::raft::{self, Preambles, RaftError, RaftParams, TrainerConfig, TrainingMethod};
use panza_core::rag::{self, RagError, VectorStore};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::config::PanzaConfig;
use crate::{CliError, Shutdown};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cli: Cli, shutdown: Option<Shutdown>) -> Result<()> {
    let cfg = PanzaConfig::discover(cli.config.as_deref())?;
    let ctx = Ctx { cfg, json: cli.json };
    match cli.command {
        Command::Ingest(a) => ctx.ingest(a),
        Command::Split(a) => ctx.split(a),
        Command::Summarize(a) => ctx.summarize(a),
        Command::Index(a) => ctx.index(a),
        Command::EmitTrain(a) => ctx.emit_train(a),
        Command::Serve(a) => ctx.serve(a, shutdown),
        Command::Eval(a) => ctx.eval(a),
        Command::StyleMatrix(a) => ctx.style_matrix(a),
    }
}

struct Ctx {
    cfg: PanzaConfig,
    json: bool,
}

/// Collects what a run read, wrote and counted, then writes the manifest.
struct Run {
    command: &'static str,
    started_at: DateTime<Utc>,
    parameters: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: BTreeMap<String, u64>,
}

impl Run {
    fn new(command: &'static str, parameters: Value, inputs: &[&Path]) -> Result<Self> {
        for p in inputs {
            if !p.exists() {
                return Err(CliError::Validation(format!("input {} does not exist", p.display())));
            }
        }
        Ok(Self {
            command,
            started_at: Utc::now(),
            parameters,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        })
    }

    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n as u64);
    }

    /// Writes the manifest next to `anchor` and prints the summary.
    fn finish(self, anchor: &Path, status: RunStatus, json: bool) -> Result<()> {
        self.finish_at(&manifest_path(anchor), status, json)
    }

    fn finish_at(self, path: &Path, status: RunStatus, json: bool) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: config_hash(&self.parameters),
            parameters: self.parameters,
            input_paths: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            output_paths: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            started_at: self.started_at,
            finished_at: Utc::now(),
            status,
            counts: self.counts,
        };
        manifest.write_atomic(path).map_err(|e| runtime(path.display(), e))?;
        if json {
            let summary = json!({
                "command": manifest.command,
                "status": manifest.status,
                "counts": manifest.counts,
                "outputs": manifest.output_paths,
                "manifest": path.display().to_string(),
            });
            println!("{summary}");
        } else {
            let mut line = format!("{}:", manifest.command);
            for (k, v) in &manifest.counts {
                line.push_str(&format!(" {k}={v}"));
            }
            if !manifest.output_paths.is_empty() {
                line.push_str(&format!(" -> {}", manifest.output_paths.join(", ")));
            }
            println!("{line}");
        }
        Ok(())
    }
}

fn runtime(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{what}: {e}"))
}

fn tokio_rt() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| runtime("tokio runtime", e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read_file(path).map_err(|e| match e {
        JsonlError::Json { .. } => CliError::Validation(e.to_string()),
        JsonlError::Io { .. } => CliError::Runtime(e.to_string()),
    })
}

fn write_jsonl<T: Serialize>(run: &mut Run, path: &Path, items: &[T]) -> Result<()> {
    jsonl::write_file(path, items).map_err(|e| CliError::Runtime(e.to_string()))?;
    run.outputs.push(path.to_path_buf());
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(run: &mut Run, path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime(path.display(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| runtime(path.display(), e))?;
    run.outputs.push(path.to_path_buf());
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    gateway::read_preamble(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn client(cfg: panza_core::LlmEndpointConfig) -> Result<BackendClient> {
    BackendClient::new(cfg).map_err(|e| CliError::Validation(e.to_string()))
}

fn ingest_error(e: IngestError) -> CliError {
    match e {
        IngestError::AnonymizationLeak { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn rag_error(e: RagError) -> CliError {
    match e {
        RagError::Backend(_) | RagError::Io { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::Embedding(_) => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn split_counts(run: &mut Run, corpus: &[Email]) {
    let n = |s| corpus.iter().filter(|e| e.split == s).count();
    run.count("train", n(Split::Train));
    run.count("test", n(Split::Test));
    run.count("unassigned", n(Split::Unassigned));
}

fn mauve_params(seed: u64, k: Option<usize>, scale: Option<f64>, grid: Option<usize>) -> MauveParams {
    let mut p = MauveParams::with_seed(seed);
    p.k = k;
    if let Some(c) = scale {
        p.scale = c;
    }
    if let Some(g) = grid {
        p.grid_size = g;
    }
    p
}

impl Ctx {
    fn ingest(&self, a: IngestArgs) -> Result<()> {
        let rules: CleaningRules = match &a.rules {
            None => CleaningRules::default(),
            Some(p) if p.extension().is_some_and(|e| e == "toml") => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
            }
            Some(p) => read_json(p)?,
        };
        let compiled = rules.compile().map_err(ingest_error)?;
        let mut inputs = vec![a.input.as_path()];
        inputs.extend(a.rules.as_deref());
        let mut run = Run::new("ingest", json!({ "rules": rules }), &inputs)?;

        let bytes = std::fs::read(&a.input).map_err(|e| runtime(a.input.display(), e))?;
        let parsed = ingest::parse_archive(&bytes).map_err(ingest_error)?;
        run.count("parsed", parsed.parsed_count());
        run.count("skipped", parsed.skipped.len());
        let (corpus, report) = ingest::clean_corpus(parsed.emails, &compiled).map_err(ingest_error)?;
        run.count("kept", report.kept);
        run.count("dropped_empty", report.dropped_empty);
        run.count("dropped_short", report.dropped_short);
        run.count("dropped_duplicate", report.dropped_duplicate);

        write_jsonl(&mut run, &a.out, &corpus)?;
        write_jsonl(&mut run, &sibling(&a.out, ".skipped.jsonl"), &parsed.skipped)?;
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn split(&self, a: SplitArgs) -> Result<()> {
        let params = json!({ "train_fraction": a.train_fraction, "seed": a.seed });
        let mut run = Run::new("split", params, &[&a.corpus])?;
        let corpus: Vec<Email> = read_jsonl(&a.corpus)?;
        ingest::check_unique_ids(&corpus).map_err(ingest_error)?;
        let corpus = ingest::split_dataset(corpus, a.train_fraction, a.seed).map_err(ingest_error)?;
        split_counts(&mut run, &corpus);
        write_jsonl(&mut run, &a.out, &corpus)?;
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn summarize(&self, a: SummarizeArgs) -> Result<()> {
        let backend = self.cfg.backend_with(&a.backend)?;
        let generation = self.cfg.generation_with(&a.generation)?;
        let split = match a.split {
            SplitChoice::Train => Split::Train,
            SplitChoice::Test => Split::Test,
        };
        let params = json!({
            "split": split,
            "model": backend.model_name,
            "generation": generation,
        });
        let mut run = Run::new("summarize", params, &[&a.corpus])?;
        let corpus: Vec<Email> = read_jsonl(&a.corpus)?;
        let client = client(backend)?;
        let outcome = tokio_rt()?
            .block_on(instruct::build_pairs_for_split(&client, &corpus, split, &generation))
            .map_err(|e| match e {
                InstructError::NotSplit(_) => CliError::Validation(e.to_string()),
                _ => CliError::Runtime(e.to_string()),
            })?;
        run.count("pairs", outcome.pairs.len());
        run.count("failures", outcome.failures.len());
        write_jsonl::<InstructionPair>(&mut run, &a.out, &outcome.pairs)?;
        write_jsonl::<PairFailure>(&mut run, &sibling(&a.out, ".failures.jsonl"), &outcome.failures)?;
        let status = if outcome.failures.is_empty() {
            RunStatus::Success
        } else {
            RunStatus::SoftFailure
        };
        run.finish(&a.out, status, self.json)
    }

    fn index(&self, a: IndexArgs) -> Result<()> {
        let backend = self.cfg.backend_with(&a.backend)?;
        let params = json!({ "embedding_model": backend.embedding_model() });
        let mut run = Run::new("index", params, &[&a.corpus])?;
        let corpus: Vec<Email> = read_jsonl(&a.corpus)?;
        if let Some(e) = corpus.iter().find(|e| e.split == Split::Unassigned) {
            return Err(CliError::Validation(format!("email {} has no split; run `panza split` first", e.id)));
        }
        let client = client(backend)?;
        let store = tokio_rt()?.block_on(rag::index(&corpus, &client)).map_err(rag_error)?;
        // Test emails must never reach the store.
        if let Some(e) = corpus.iter().find(|e| e.split == Split::Test && store.contains(&e.id)) {
            return Err(CliError::Runtime(format!("test email {} entered the store", e.id)));
        }
        store.save(&a.out).map_err(rag_error)?;
        run.outputs.push(a.out.clone());
        run.outputs.push(rag::sidecar_path(&a.out));
        run.count("documents", store.len());
        run.count("dimension", store.dim());
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn emit_train(&self, a: EmitTrainArgs) -> Result<()> {
        let backend = self.cfg.backend_with(&a.backend)?;
        let preambles = Preambles {
            system: match &a.system_preamble {
                Some(p) => read_text(p)?,
                None => Preambles::default().system,
            },
            user: match &a.user_preamble {
                Some(p) => read_text(p)?,
                None => String::new(),
            },
        };
        let raft_params = RaftParams {
            p_rag: a.p_rag,
            n_rag: a.n_rag,
            t_rag: a.t_rag,
            seed: a.seed,
        };
        raft_params.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let method = match a.method {
            MethodChoice::Fft => TrainingMethod::Fft,
            MethodChoice::Rosa => TrainingMethod::Rosa,
            MethodChoice::Lora => TrainingMethod::Lora,
        };
        let mut trainer = TrainerConfig::defaults(method);
        if let Some(v) = a.learning_rate {
            trainer.learning_rate = v;
        }
        if let Some(v) = a.epochs {
            trainer.epochs = v;
        }
        if let Some(v) = a.batch_size {
            trainer.batch_size = v;
        }
        trainer.validate().map_err(|e| CliError::Validation(e.to_string()))?;

        let params = json!({
            "raft": raft_params,
            "preambles": preambles,
            "trainer": trainer,
            "embedding_model": backend.embedding_model(),
        });
        let mut inputs = vec![a.pairs.as_path(), a.store.as_path()];
        inputs.extend(a.system_preamble.as_deref());
        inputs.extend(a.user_preamble.as_deref());
        let mut run = Run::new("emit-train", params, &inputs)?;

        let pairs: Vec<InstructionPair> = read_jsonl(&a.pairs)?;
        let store = VectorStore::load(&a.store).map_err(rag_error)?;
        let client = client(backend)?;
        let (examples, manifest) = tokio_rt()?
            .block_on(raft::emit_training_set(&pairs, &store, &client, &raft_params, &preambles))
            .map_err(|e| match e {
                RaftError::Invalid(_) | RaftError::StoreMismatch(_) => CliError::Validation(e.to_string()),
                RaftError::Rag(r) => rag_error(r),
                _ => CliError::Runtime(e.to_string()),
            })?;
        run.count("total", manifest.total);
        run.count("with_rag", manifest.with_rag);
        run.count("without_rag", manifest.without_rag);
        run.count("rag_drawn", manifest.rag_drawn);
        write_jsonl(&mut run, &a.out, &examples)?;

        let trainer_path = a.trainer_config.clone().unwrap_or_else(|| sibling(&a.out, ".trainer.toml"));
        raft::emit_trainer_config(&trainer, &trainer_path).map_err(|e| CliError::Runtime(e.to_string()))?;
        run.outputs.push(trainer_path);
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn serve(&self, a: ServeArgs, shutdown: Option<Shutdown>) -> Result<()> {
        let s = &self.cfg.serve;
        let defaults = GatewayConfig::default();
        let cfg = GatewayConfig {
            backend: self.cfg.backend_with(&a.backend)?,
            generation: self.cfg.generation_with(&a.generation)?,
            user_preamble_path: a
                .user_preamble
                .clone()
                .or_else(|| s.user_preamble_path.clone())
                .ok_or_else(|| CliError::Validation("serve needs --user-preamble (or serve.user_preamble_path)".into()))?,
            system_preamble_path: a.system_preamble.clone().or_else(|| s.system_preamble_path.clone()),
            rag_store_path: a.store.clone().or_else(|| s.rag_store_path.clone()),
            n_rag: a.n_rag.or(s.n_rag).unwrap_or(defaults.n_rag),
            t_rag: a.t_rag.or(s.t_rag).unwrap_or(defaults.t_rag),
            listen_address: a.listen.or(s.listen_address).unwrap_or(defaults.listen_address),
            cors_origin: a.cors_origin.clone().or_else(|| s.cors_origin.clone()),
        };
        let params = serde_json::to_value(&cfg).map_err(|e| runtime("config", e))?;
        let mut inputs = vec![cfg.user_preamble_path.as_path()];
        inputs.extend(cfg.system_preamble_path.as_deref());
        inputs.extend(cfg.rag_store_path.as_deref());
        let run = Run::new("serve", params, &inputs)?;

        let stop: Shutdown = match shutdown {
            Some(s) => s,
            None => Box::pin(async {
                let _ = tokio::signal::ctrl_c().await;
            }),
        };
        tokio_rt()?.block_on(gateway::serve(&cfg, stop)).map_err(|e| match e {
            GatewayError::Config(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        })?;
        match &a.manifest {
            Some(path) => run.finish_at(path, RunStatus::Success, self.json),
            None => Ok(()),
        }
    }

    fn eval(&self, a: EvalArgs) -> Result<()> {
        match (&a.candidates, &a.golden) {
            (Some(_), None) => self.eval_emails(a),
            (None, Some(_)) => self.eval_summaries(a),
            _ => Err(CliError::Validation(
                "eval needs either --candidates with --corpus, or --golden with --pairs".into(),
            )),
        }
    }

    fn eval_emails(&self, a: EvalArgs) -> Result<()> {
        let (candidates_path, corpus_path) = (a.candidates.clone().unwrap(), a.corpus.clone().unwrap());
        let seed = a
            .seed
            .ok_or_else(|| CliError::Validation("--seed is required when scoring emails".into()))?;
        let backend = self.cfg.backend_with(&a.backend)?;
        let mauve = mauve_params(seed, a.mauve_k, a.mauve_scale, a.mauve_grid);
        let params = json!({ "mauve": mauve, "embedding_model": backend.embedding_model() });
        let mut run = Run::new("eval", params, &[&candidates_path, &corpus_path])?;
        let candidates: Vec<Candidate> = read_jsonl(&candidates_path)?;
        let corpus: Vec<Email> = read_jsonl(&corpus_path)?;
        let references: Vec<Email> = corpus.into_iter().filter(|e| e.split == Split::Test).collect();
        let client = client(backend)?;
        let report = tokio_rt()?
            .block_on(metrics::evaluate(&candidates, &references, &client, &mauve))
            .map_err(metrics_error)?;
        run.count("candidates", candidates.len());
        run.count("references", references.len());
        run.count("mauve_k", report.mauve_k);
        write_json(&mut run, &a.out, &report)?;
        if !self.json {
            println!(
                "mean BLEU {:.4}  mean ROUGE-L {:.4}  MAUVE {:.4}{}",
                report.mean_bleu,
                report.mean_rouge,
                report.mauve,
                if report.plausible { "  (plausible band)" } else { "" }
            );
        }
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn eval_summaries(&self, a: EvalArgs) -> Result<()> {
        let (golden_path, pairs_path) = (a.golden.clone().unwrap(), a.pairs.clone().unwrap());
        let mut run = Run::new("eval", json!({ "mode": "summaries" }), &[&golden_path, &pairs_path])?;
        let golden: Vec<GoldenInstruction> = read_jsonl(&golden_path)?;
        let pairs: Vec<InstructionPair> = read_jsonl(&pairs_path)?;
        let report = instruct::evaluate_summaries(&golden, &pairs).map_err(|e| CliError::Validation(e.to_string()))?;
        run.count("scored", report.per_pair.len());
        write_json(&mut run, &a.out, &report)?;
        run.finish(&a.out, RunStatus::Success, self.json)
    }

    fn style_matrix(&self, a: StyleMatrixArgs) -> Result<()> {
        let backend = self.cfg.backend_with(&a.backend)?;
        let m = &a.mauve;
        let mauve = mauve_params(m.seed, m.mauve_k, m.mauve_scale, m.mauve_grid);
        let params = json!({ "mauve": mauve, "embedding_model": backend.embedding_model() });
        let mut run = Run::new("style-matrix", params, &[&a.generations, &a.references])?;
        let generations: BTreeMap<String, BTreeMap<String, Vec<String>>> = read_json(&a.generations)?;
        let references: BTreeMap<String, Vec<String>> = read_json(&a.references)?;
        let client = client(backend)?;
        let matrix = tokio_rt()?
            .block_on(metrics::style_matrix(&generations, &references, &client, &mauve))
            .map_err(metrics_error)?;
        run.count("users", matrix.users.len());
        run.count("diagonal_dominant", matrix.diagonal_dominant as usize);
        write_json(&mut run, &a.out, &matrix)?;
        if let Some(csv) = &a.csv {
            std::fs::write(csv, matrix.to_csv()).map_err(|e| runtime(csv.display(), e))?;
            run.outputs.push(csv.clone());
        }
        run.finish(&a.out, RunStatus::Success, self.json)
    }
}
