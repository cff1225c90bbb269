use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mapn::config::ExperimentConfig;
use mapn::data::{write_grayscale, Split};
use mapn::kspace::zero_filled;
use mapn::metrics::{error_map, learner_weight_summary, write_weight_csv};
use mapn::models::Checkpoint;
use mapn::training::{build_dataset, Trainer, BEST_CKPT, CONFIG_FILE, LAST_CKPT};
use mapn::{Error, Result};

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Best,
    Last,
}

#[derive(Args)]
pub struct FiguresArgs {
    run: PathBuf,
    #[arg(long, value_enum, default_value = "best")]
    checkpoint: Which,
    /// Validation slice shown per anatomy.
    #[arg(long, default_value_t = 0)]
    slice: usize,
    /// Error maps saturate at this value (images scaled to [0, 1]).
    #[arg(long, default_value_t = 0.1)]
    clip: f64,
    /// Output directory (default: `<run>/figures`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn run(args: &FiguresArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.run.join(CONFIG_FILE))?;
    let ckpt = Checkpoint::load(&args.run.join(match args.checkpoint {
        Which::Best => BEST_CKPT,
        Which::Last => LAST_CKPT,
    }))?;
    let dataset = build_dataset(&config)?;
    let mut trainer = Trainer::new(&config, &dataset)?;
    trainer.network.load_records(&ckpt.records)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("figures"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;
    let (h, w) = (config.data.height, config.data.width);

    for a in 0..trainer.val.len() {
        let label = trainer.val[a].anatomy.label.clone();
        let recon = trainer.reconstruct(a, Split::Val)?;
        let data = &trainer.val[a];
        let i = args.slice;
        if i >= data.len() {
            return Err(Error::Config(format!("slice: {label} has {} validation slices", data.len())));
        }
        let target = data.targets[i].magnitude();
        let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let images = [
            ("target", target.clone()),
            ("zero_filled", zero_filled(&data.measured[i])?.magnitude()),
            ("recon", recon[i].magnitude()),
        ];
        for (name, img) in &images {
            write_grayscale(&out.join(format!("{label}_{name}.png")), h, w, img, lo, hi, false)?;
            if *name != "target" {
                let err = error_map(img, &target, args.clip)?;
                write_grayscale(&out.join(format!("{label}_{name}_error.png")), h, w, &err, 0.0, args.clip, false)?;
            }
        }
    }

    let rows = learner_weight_summary(&trainer.network);
    if rows.is_empty() {
        eprintln!("note: {} has no anatomy-specific learners; the weight summary is empty", config.model.pn);
    }
    write_weight_csv(&rows, create(&out.join("weights.csv"))?)?;
    println!("figures written to {}", out.display());
    Ok(())
}
