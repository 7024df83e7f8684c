use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use madeon::model::{beam_search, greedy_decode, load_checkpoint};
use madeon::tokenizer::load_vocabulary;

use super::train::encode_corpus;
use crate::config::RunConfig;
use crate::output::{write_transcripts, OutDir};
use crate::{usage, Outcome};

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Utterances to transcribe; their `text` becomes `refs.tsv`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    beam: Option<usize>,
    /// Greedy search instead of beam search.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

pub fn run(args: DecodeArgs) -> Result<Outcome> {
    let overrides = crate::config::Overrides {
        beam: args.beam,
        max_len: args.max_len,
        ..Default::default()
    };
    let mut cfg = RunConfig::load(args.config.as_deref(), &overrides)?;
    cfg.decode.greedy |= args.greedy;
    if let Some(v) = args.vocab {
        cfg.data.vocab = Some(v);
    }
    cfg.validate_decode()?;
    let vocab_path = cfg.data.vocab.clone().ok_or_else(|| usage("no vocabulary (--vocab or data.vocab)"))?;
    let vocab = load_vocabulary(&vocab_path)?;
    let (model, meta) = load_checkpoint(&args.checkpoint)?;
    let fingerprint = vocab.fingerprint();
    match meta.get("vocab_fingerprint") {
        Some(f) if *f == fingerprint => {}
        Some(f) => {
            return Err(usage(format!(
                "checkpoint was trained with vocabulary {f} but {} is {fingerprint}",
                vocab_path.display()
            )))
        }
        None => return Err(usage("checkpoint records no vocabulary fingerprint")),
    }
    if model.vocab_size() != vocab.size() {
        return Err(usage(format!(
            "checkpoint has {} output ids but the vocabulary has {}",
            model.vocab_size(),
            vocab.size()
        )));
    }
    cfg.model = model.config().clone();
    let utterances = encode_corpus(&args.corpus, &vocab)?;
    let out = OutDir::prepare(&args.out, args.force)?;
    out.write_json("config.json", &cfg)?;

    let candidates = vocab.decode_candidates();
    let d = &cfg.decode;
    let mut hyps = Vec::with_capacity(utterances.len());
    let mut refs = Vec::with_capacity(utterances.len());
    for (id, seq) in &utterances {
        let best = if d.greedy {
            greedy_decode(&model, seq.prefix(), &candidates, d.max_len)?
        } else {
            beam_search(&model, seq.prefix(), &candidates, d.beam, d.max_len, d.length_penalty)?
                .into_iter()
                .next()
                .expect("beam search returns at least one hypothesis")
        };
        hyps.push((id.clone(), vocab.decode_text(&best.tokens)?));
        refs.push((id.clone(), vocab.decode_text(seq.text())?));
    }
    write_transcripts(&out.file("hyps.tsv"), &hyps)?;
    write_transcripts(&out.file("refs.tsv"), &refs)?;
    println!("decoded {} utterances into {}", hyps.len(), out.file("hyps.tsv").display());
    Ok(Outcome::Success)
}
