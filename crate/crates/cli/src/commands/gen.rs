use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use madeon::datasets::{gen_synthetic_asr, save_corpus, CorpusRecord, SyntheticAsrConfig};
use madeon::tokenizer::{write_features, FeatureRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::output::OutDir;
use crate::{usage, Outcome};

#[derive(Subcommand)]
pub enum GenCommand {
    /// Synthetic speech-token corpus with train/valid/test splits.
    Asr(AsrArgs),
    /// Feature dump drawn around a few well-separated centers.
    Features(FeatureArgs),
}

#[derive(Args)]
pub struct AsrArgs {
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_valid: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    #[arg(long, default_value_t = 10)]
    text_min: usize,
    #[arg(long, default_value_t = 30)]
    text_max: usize,
    #[arg(long, default_value_t = 0.1)]
    p_noise: f64,
    #[arg(long, default_value_t = 32)]
    clusters: usize,
    #[arg(long, default_value_t = 3)]
    max_rep: usize,
    /// Characters to draw transcripts from.
    #[arg(long, default_value = "abcdefghijklmnopqrstuvwxyz")]
    alphabet: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct FeatureArgs {
    /// Number of centers.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    utterances: usize,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    /// Standard deviation of frames around their center.
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

pub fn run(cmd: GenCommand) -> Result<Outcome> {
    match cmd {
        GenCommand::Asr(a) => gen_asr(a),
        GenCommand::Features(a) => gen_features(a),
    }
}

fn gen_asr(a: AsrArgs) -> Result<Outcome> {
    let base = SyntheticAsrConfig {
        n: a.n_train,
        text_len: (a.text_min, a.text_max),
        alphabet: a.alphabet.chars().collect(),
        n_clusters: a.clusters,
        max_rep: a.max_rep,
        p_noise: a.p_noise,
        seed: a.seed,
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let out = OutDir::prepare(&a.out, a.force)?;
    out.write_json(
        "config.json",
        &json!({
            "n_train": a.n_train, "n_valid": a.n_valid, "n_test": a.n_test,
            "text_min": a.text_min, "text_max": a.text_max, "p_noise": a.p_noise,
            "clusters": a.clusters, "max_rep": a.max_rep, "alphabet": a.alphabet, "seed": a.seed,
        }),
    )?;
    for (k, (name, n)) in [("train", a.n_train), ("valid", a.n_valid), ("test", a.n_test)]
        .into_iter()
        .enumerate()
    {
        let cfg = SyntheticAsrConfig {
            n,
            seed: a.seed.wrapping_add(k as u64 * 0x9e37_79b9),
            ..base.clone()
        };
        let records: Vec<CorpusRecord> = gen_synthetic_asr(&cfg)?
            .into_iter()
            .map(|r| {
                let mut rec = CorpusRecord::from(r);
                rec.id = format!("{name}-{}", rec.id);
                rec
            })
            .collect();
        save_corpus(&out.file(&format!("{name}.jsonl")), &records)?;
    }
    println!("wrote {} / {} / {} utterances to {}", a.n_train, a.n_valid, a.n_test, out.path.display());
    Ok(Outcome::Success)
}

fn gen_features(a: FeatureArgs) -> Result<Outcome> {
    if a.k == 0 || a.dim == 0 || a.utterances == 0 || a.frames == 0 {
        return Err(usage("--k, --dim, --utterances and --frames must be at least 1"));
    }
    let noise = Normal::new(0.0, a.spread).map_err(|e| usage(format!("--spread: {e}")))?;
    let out = OutDir::prepare(&a.out, a.force)?;
    out.write_json(
        "config.json",
        &json!({
            "k": a.k, "dim": a.dim, "utterances": a.utterances,
            "frames": a.frames, "spread": a.spread, "seed": a.seed,
        }),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    // Center c sits at 10·c along every axis.
    let centers: Vec<Vec<f64>> = (0..a.k).map(|c| vec![10.0 * c as f64; a.dim]).collect();
    let mut records = Vec::with_capacity(a.utterances);
    for u in 0..a.utterances {
        let mut data = Vec::with_capacity(a.frames * a.dim);
        for _ in 0..a.frames {
            let c = rng.gen_range(0..a.k);
            data.extend(centers[c].iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
        }
        records.push(FeatureRecord {
            id: format!("utt{u:04}"),
            frames: a.frames,
            dim: a.dim,
            data,
        });
    }
    write_features(&out.file("features.bin"), &records)?;
    out.write_json("centers.json", &centers)?;
    println!("wrote {} utterances around {} centers", a.utterances, a.k);
    Ok(Outcome::Success)
}
