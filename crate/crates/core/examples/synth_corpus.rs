//! Generates the synthetic corpus, saves it, and shows one video: its
//! events, sentences and the localizer's candidates.
//!
//! ```text
//! cargo run --release --example synth_corpus -- [out_dir]
//! ```

use std::path::PathBuf;

use mft::config::RunConfig;
use mft::corpus::{save_dataset, synth_generate, Split};
use mft::localize::tiou;
use mft::pipeline::Localizer;

fn main() -> mft::Result<()> {
    let cfg = RunConfig::desk();
    let ds = synth_generate(&cfg.synth())?;
    let [train, tuning, eval] = ds.split_counts();
    println!("{} videos ({train} train, {tuning} tuning, {eval} eval), vocabulary {}", ds.videos.len(), ds.vocab.len());

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        let manifest = save_dataset(&dir, &ds, cfg.fps)?;
        println!("saved to {}", manifest.display());
    }

    let train_videos = ds.split(Split::Train);
    let localizer = Localizer::train(&train_videos, &cfg.scorer(), cfg.watershed())?;
    let video = &ds.split(Split::Eval)[0];
    println!("\n{} ({} frames)", video.id, video.frames());
    for e in &video.gt_events {
        println!("  [{:>3}, {:>3})  {}", e.span.start, e.span.end, ds.vocab.decode(&e.sentence));
    }
    println!("candidates:");
    for c in localizer.candidates(video)? {
        let best = video.gt_events.iter().map(|e| tiou(c.span, e.span)).fold(0.0, f64::max);
        println!("  [{:>3}, {:>3})  score {:.2}  best tIoU {best:.2}", c.span.start, c.span.end, c.score);
    }
    Ok(())
}
