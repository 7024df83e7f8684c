use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use madeon::datasets::{encode_record, load_corpus};
use madeon::model::{ComposedSequence, Model};
use madeon::tokenizer::{load_vocabulary, Vocabulary};
use madeon::training::{RunOutput, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::output::OutDir;
use crate::{usage, ConfigArgs, Outcome};

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Training corpus (overrides `data.train`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Validation corpus (overrides `data.valid`).
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Vocabulary produced by `tokenize` (overrides `data.vocab`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

pub fn encode_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<(String, ComposedSequence)>> {
    load_corpus(path)
        .with_context(|| format!("loading {}", path.display()))?
        .into_iter()
        .map(|r| {
            let seq = encode_record(&r, vocab).with_context(|| format!("{}: utterance {}", path.display(), r.id))?;
            Ok((r.id, seq))
        })
        .collect()
}

pub fn run(args: TrainArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load(args.common.config.as_deref(), &args.common.overrides())?;
    if let Some(p) = args.corpus {
        cfg.data.train = Some(p);
    }
    if let Some(p) = args.valid {
        cfg.data.valid = Some(p);
    }
    if let Some(p) = args.vocab {
        cfg.data.vocab = Some(p);
    }
    let train_path = cfg.data.train.clone().ok_or_else(|| usage("no training corpus (--corpus or data.train)"))?;
    let vocab_path = cfg.data.vocab.clone().ok_or_else(|| usage("no vocabulary (--vocab or data.vocab)"))?;
    let vocab = load_vocabulary(&vocab_path)?;
    match cfg.model.vocab_size {
        0 => cfg.model.vocab_size = vocab.size(),
        n if n != vocab.size() => {
            return Err(usage(format!(
                "model.vocab_size is {n} but {} has {} ids",
                vocab_path.display(),
                vocab.size()
            )))
        }
        _ => {}
    }
    cfg.model.validate().map_err(|e| usage(e.to_string()))?;
    cfg.validate_train()?;

    let train: Vec<ComposedSequence> = encode_corpus(&train_path, &vocab)?.into_iter().map(|(_, s)| s).collect();
    if train.is_empty() {
        return Err(usage(format!("{} is empty", train_path.display())));
    }
    let valid: Vec<ComposedSequence> = match &cfg.data.valid {
        Some(p) => encode_corpus(p, &vocab)?.into_iter().map(|(_, s)| s).collect(),
        None => Vec::new(),
    };
    if let Some(too_long) = train.iter().chain(&valid).find(|s| s.len() > cfg.model.max_seq_len) {
        return Err(usage(format!(
            "a sequence of length {} exceeds model.max_seq_len {}",
            too_long.len(),
            cfg.model.max_seq_len
        )));
    }

    let out = OutDir::prepare(&args.out, args.force)?;
    out.write_json("config.json", &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let model: Model<f32> = Model::new(cfg.model.clone(), &mut rng)?;
    println!(
        "training {} parameters ({}/{}) on {} utterances",
        madeon::Parameters::num_parameters(&model),
        cfg.model.ssm_variant,
        cfg.model.prefix_mode,
        train.len()
    );
    let meta = [
        ("vocab_fingerprint".to_string(), vocab.fingerprint()),
        ("seed".to_string(), cfg.train.seed.to_string()),
    ]
    .into();
    let run_output = RunOutput {
        dir: out.path.clone(),
        meta,
    };
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let report = trainer.run(&train, &valid, Some(&run_output))?;
    if let Some(last) = report.steps.last() {
        println!("step {} loss {:.6} token_acc {:.4}", last.step, last.loss, last.token_acc);
    }
    if let Some(best) = report.best {
        println!("best valid step {} loss {:.6} token_acc {:.4}", best.step, best.loss, best.token_acc);
    }
    Ok(Outcome::Success)
}
