use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use madeon::datasets::{build_vocabulary, load_corpus, save_corpus, CorpusRecord};
use madeon::tokenizer::{
    kmeans_fit, read_features, save_codebook, save_subword, save_vocabulary, vq_assign_all,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::OutDir;
use crate::{usage, ConfigArgs, Outcome};

#[derive(Args)]
pub struct TokenizeArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Binary feature dump to quantize with k-means.
    #[arg(long, conflicts_with = "corpus")]
    features: Option<PathBuf>,
    /// Corpus whose `text` fields are attached to quantized features by id.
    #[arg(long, requires = "features")]
    transcripts: Option<PathBuf>,
    /// Corpus of raw cluster ids to learn subword vocabularies from.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Number of k-means clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    speech_vocab: Option<usize>,
    #[arg(long)]
    text_vocab: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Serialize)]
struct Effective<'a> {
    features: &'a Option<PathBuf>,
    transcripts: &'a Option<PathBuf>,
    corpus: &'a Option<PathBuf>,
    run: &'a RunConfig,
}

pub fn run(args: TokenizeArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load(args.common.config.as_deref(), &args.common.overrides())?;
    let data = &mut cfg.data;
    if let Some(k) = args.clusters {
        data.clusters = k;
    }
    if let Some(v) = args.speech_vocab {
        data.speech_vocab = v;
    }
    if let Some(v) = args.text_vocab {
        data.text_vocab = v;
    }
    let corpus_path = args.corpus.clone().or_else(|| data.train.clone());
    if args.features.is_none() && corpus_path.is_none() {
        return Err(usage("tokenize needs --features or --corpus"));
    }
    if data.clusters == 0 || data.kmeans_iters == 0 {
        return Err(usage("data.clusters and data.kmeans_iters must be at least 1"));
    }
    let out = OutDir::prepare(&args.out, args.force)?;
    out.write_json(
        "config.json",
        &Effective {
            features: &args.features,
            transcripts: &args.transcripts,
            corpus: &corpus_path,
            run: &cfg,
        },
    )?;

    let records = match &args.features {
        Some(path) => {
            let feats = read_features(path).with_context(|| format!("reading {}", path.display()))?;
            if feats.is_empty() {
                return Err(usage(format!("{}: no feature records", path.display())));
            }
            let dim = feats[0].dim;
            if let Some(bad) = feats.iter().find(|r| r.dim != dim) {
                return Err(usage(format!("record {} has dimension {} but expected {dim}", bad.id, bad.dim)));
            }
            let points: Vec<f64> = feats.iter().flat_map(|r| r.data.iter().map(|&v| f64::from(v))).collect();
            let fit = kmeans_fit(&points, dim, cfg.data.clusters, cfg.data.kmeans_iters, cfg.train.seed)?;
            save_codebook(&out.file("codebook.json"), &fit.codebook)?;
            println!(
                "codebook: k={} dim={dim} distortion={:.6} converged={}",
                fit.codebook.k,
                fit.distortion.last().copied().unwrap_or(f64::NAN),
                fit.converged
            );
            let texts: HashMap<String, String> = match &args.transcripts {
                Some(p) => load_corpus(p)?.into_iter().map(|r| (r.id, r.text)).collect(),
                None => HashMap::new(),
            };
            let mut records = Vec::with_capacity(feats.len());
            for r in &feats {
                let points: Vec<f64> = r.data.iter().map(|&v| f64::from(v)).collect();
                records.push(CorpusRecord {
                    id: r.id.clone(),
                    speech_ids: vq_assign_all(&points, &fit.codebook)?,
                    text: texts.get(&r.id).cloned().unwrap_or_default(),
                });
            }
            save_corpus(&out.file("corpus.jsonl"), &records)?;
            records
        }
        None => {
            let path = corpus_path.expect("checked above");
            load_corpus(&path)?
        }
    };
    if records.is_empty() {
        return Err(usage("corpus is empty"));
    }
    if records.iter().all(|r| r.text.is_empty()) {
        println!("no transcripts; skipping subword vocabularies");
        return Ok(Outcome::Success);
    }
    let vocab = build_vocabulary(&records, cfg.data.speech_vocab, cfg.data.text_vocab)?;
    save_subword(&out.file("speech.subword.json"), &vocab.speech)?;
    save_subword(&out.file("text.subword.json"), &vocab.text)?;
    save_vocabulary(&out.file("vocab.json"), &vocab)?;
    println!(
        "vocabulary: {} ids ({} speech, {} text) fingerprint {}",
        vocab.size(),
        vocab.speech.vocab_size(),
        vocab.text.vocab_size(),
        vocab.fingerprint()
    );
    Ok(Outcome::Success)
}
