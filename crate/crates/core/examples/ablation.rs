//! Trains the whole pipeline on a synthetic corpus and prints the ablation
//! table: XE vs SCST captioner, S1/S2/S3 sequence schemes, and a
//! visual-only selector.
//!
//! ```text
//! cargo run --release --example ablation -- [key=value ...]
//! ```
//! Keys are `RunConfig` fields, e.g. `seed=3 xe_epochs=10`.

use mft::config::RunConfig;
use mft::corpus::synth_generate;
use mft::experiment::run_ablation;

fn main() -> mft::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFT_LOG_LEVEL", "info")).init();
    let base = RunConfig {
        synth_videos: 300,
        synth_val_videos: 100,
        ..RunConfig::desk()
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = base.with_overrides(args.iter().map(String::as_str))?;
    let ds = synth_generate(&cfg.synth())?;
    let report = run_ablation(&cfg, &ds)?;

    let c = report.train_candidates;
    println!(
        "train candidates/video {:.1}, positives/video {:.2}, localized {:.3}",
        c.mean_candidates, c.mean_positives, c.localized
    );
    println!(
        "XE teacher-forced accuracy: train {:.4}, eval {:.4}",
        report.xe_accuracy, report.xe_eval_accuracy
    );
    println!(
        "GT-event CIDEr: XE {:.4}, SCST {:.4}",
        report.gt_event_cider_xe,
        report.gt_event_cider_scst.unwrap_or(f64::NAN)
    );
    println!("{:<22} {:>8} {:>6} {:>6} {:>6} {:>6}", "variant", "CIDEr", "P", "R", "F1", "sent");
    for v in &report.variants {
        println!(
            "{:<22} {:>8.4} {:>6.3} {:>6.3} {:>6.3} {:>6.2}",
            v.name, v.cider, v.selection.precision, v.selection.recall, v.selection.f1, v.mean_sentences
        );
    }
    Ok(())
}
