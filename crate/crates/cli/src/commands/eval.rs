use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use madeon::eval::{cer, chars, position_profile, wer, words, ErrorProfile};
use serde::Serialize;

use crate::output::{read_transcripts, OutDir};
use crate::{usage, Outcome};

#[derive(Args)]
pub struct EvalArgs {
    /// Reference transcripts, `id<TAB>text` per line.
    #[arg(long)]
    refs: PathBuf,
    /// Hypotheses in the same layout; missing ids score as empty.
    #[arg(long)]
    hyps: PathBuf,
    /// Relative-position buckets for the error profile.
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    /// Tokens the position profile is computed over.
    #[arg(long, value_enum, default_value_t = Unit::Word)]
    unit: Unit,
    /// Print the profile as a text bar chart.
    #[arg(long)]
    chart: bool,
    /// Exit with status 1 when WER exceeds this value.
    #[arg(long)]
    max_wer: Option<f64>,
    #[arg(long)]
    max_cer: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Unit {
    Word,
    Char,
}

#[derive(Serialize)]
struct Report {
    utterances: usize,
    wer: f64,
    cer: f64,
    unit: Unit,
    buckets: usize,
    profile: Vec<f64>,
}

pub fn run(args: EvalArgs) -> Result<Outcome> {
    if args.buckets == 0 {
        return Err(usage("--buckets must be at least 1"));
    }
    let refs = read_transcripts(&args.refs)?;
    let hyp_rows = read_transcripts(&args.hyps)?;
    if refs.is_empty() {
        return Err(usage(format!("{} has no references", args.refs.display())));
    }
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for (id, text) in &hyp_rows {
        if by_id.insert(id, text).is_some() {
            return Err(usage(format!("duplicate hypothesis id {id}")));
        }
    }
    let known: std::collections::HashSet<&str> = refs.iter().map(|(id, _)| id.as_str()).collect();
    if let Some((id, _)) = hyp_rows.iter().find(|(id, _)| !known.contains(id.as_str())) {
        return Err(usage(format!("hypothesis {id} has no reference")));
    }
    let ref_texts: Vec<&str> = refs.iter().map(|(_, t)| t.as_str()).collect();
    let hyp_texts: Vec<&str> = refs.iter().map(|(id, _)| by_id.get(id.as_str()).copied().unwrap_or("")).collect();

    let w = wer(&ref_texts, &hyp_texts)?;
    let c = cer(&ref_texts, &hyp_texts)?;
    let profile: ErrorProfile = match args.unit {
        Unit::Word => {
            let r: Vec<Vec<&str>> = ref_texts.iter().map(|s| words(s)).collect();
            let h: Vec<Vec<&str>> = hyp_texts.iter().map(|s| words(s)).collect();
            position_profile(&r, &h, args.buckets)?
        }
        Unit::Char => {
            let r: Vec<Vec<char>> = ref_texts.iter().map(|s| chars(s)).collect();
            let h: Vec<Vec<char>> = hyp_texts.iter().map(|s| chars(s)).collect();
            position_profile(&r, &h, args.buckets)?
        }
    };
    println!("utterances\t{}", refs.len());
    println!("wer\t{w:.6}");
    println!("cer\t{c:.6}");
    print!("{}", profile.to_table());
    if args.chart {
        print!("{}", profile.to_chart(40));
    }
    if let Some(dir) = &args.out {
        let out = OutDir::prepare(dir, args.force)?;
        let report = Report {
            utterances: refs.len(),
            wer: w,
            cer: c,
            unit: args.unit,
            buckets: args.buckets,
            profile: profile.normalized(),
        };
        out.write_json(
            "config.json",
            &serde_json::json!({
                "refs": args.refs,
                "hyps": args.hyps,
                "buckets": args.buckets,
                "unit": args.unit,
                "max_wer": args.max_wer,
                "max_cer": args.max_cer,
            }),
        )?;
        out.write_json("report.json", &report)?;
        out.write("profile.tsv", profile.to_table())?;
    }
    let over = |limit: Option<f64>, value: f64| limit.is_some_and(|l| value > l);
    if over(args.max_wer, w) || over(args.max_cer, c) {
        eprintln!("error rate above threshold");
        return Ok(Outcome::CheckFailed);
    }
    Ok(Outcome::Success)
}
