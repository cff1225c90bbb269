use std::path::PathBuf;

use clap::Args;
use mapn::data::{ingest_external, Corpus, Split};
use mapn::{Error, Result};

use crate::SplitArg;

#[derive(Args)]
pub struct IngestArgs {
    /// Directory of .png / .pgm images.
    source: PathBuf,
    /// Corpus directory to add to.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long, value_enum)]
    split: SplitArg,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
}

pub fn run(args: &IngestArgs) -> Result<()> {
    let split: Split = args.split.into();
    let report = ingest_external(&args.source, args.height, args.width)?;
    for (path, e) in &report.errors {
        eprintln!("skipped {}: {e}", path.display());
    }
    if report.slices.is_empty() {
        return Err(Error::Data(format!("no usable images in {}", args.source.display())));
    }
    let mut corpus = Corpus::open_or_create(&args.corpus, args.height, args.width)?;
    let start = corpus
        .manifest
        .entries
        .iter()
        .filter(|e| e.label == args.label && e.split == split)
        .map(|e| e.index + 1)
        .max()
        .unwrap_or(0);
    for (k, (path, img)) in report.slices.iter().enumerate() {
        corpus.add(img, &args.label, split, start + k, None, Some(path.display().to_string()))?;
    }
    corpus.save_manifest()?;
    println!(
        "added {} {} {split} slices to {} ({} skipped)",
        report.slices.len(),
        args.label,
        args.corpus.display(),
        report.errors.len()
    );
    Ok(())
}
