//! Trains the pipeline (XE captioner, S3 selector) and walks through
//! progressive generation for one eval video: every visited candidate with
//! its selection probability, and the sentence written when it was taken.
//!
//! ```text
//! cargo run --release --example progressive_generation
//! ```

use mft::caption::DecodeMode;
use mft::config::RunConfig;
use mft::corpus::synth_generate;
use mft::experiment::Prepared;
use mft::select::run_progressive;
use mft::train::train_selector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mft::Result<()> {
    let cfg = RunConfig {
        scst_epochs: 0,
        ..RunConfig::desk()
    };
    let ds = synth_generate(&cfg.synth())?;
    let prep = Prepared::new(&cfg, &ds)?;
    let captioner = prep.captioner();
    let dim = ds.feature_dim().unwrap_or(0);
    let selector = train_selector(cfg.new_selector(dim), captioner, &prep.train, &prep.train_labels, &cfg.selector_training())?.net;

    let video = &prep.eval[0];
    let candidates = prep.localizer.candidates(video)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let run = run_progressive(&candidates, &video.features, &selector, captioner, &cfg.selection(), DecodeMode::Greedy, &mut rng)?;

    println!("{}: {} candidates, δ = {}", video.id, candidates.len(), cfg.delta);
    let mut taken = run.selected.iter().zip(&run.paragraph.sentences).peekable();
    for (i, (c, p)) in candidates.iter().zip(&run.probs).enumerate() {
        let sentence = match taken.peek() {
            Some((&k, s)) if k == i => {
                let text = ds.vocab.decode(s.words());
                taken.next();
                text
            }
            _ => String::new(),
        };
        println!("  [{:>3}, {:>3})  p {p:.2}  {sentence}", c.span.start, c.span.end);
    }
    println!("ground truth:");
    for e in &video.gt_events {
        println!("  [{:>3}, {:>3})  {}", e.span.start, e.span.end, ds.vocab.decode(&e.sentence));
    }
    Ok(())
}
