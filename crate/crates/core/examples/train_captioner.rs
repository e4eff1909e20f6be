//! XE training of the caption network on the desk-scale corpus, then a
//! short SCST phase, with teacher-forced accuracy and GT-event CIDEr-D
//! after each.
//!
//! ```text
//! cargo run --release --example train_captioner -- [key=value ...]
//! ```

use mft::config::RunConfig;
use mft::corpus::{synth_generate, Split};
use mft::pipeline::{gt_event_paragraphs, paragraph_cider};
use mft::train::{scst_train, teacher_forced_accuracy, train_captioner_xe};

fn main() -> mft::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFT_LOG_LEVEL", "info")).init();
    let base = RunConfig {
        scst_epochs: 5,
        ..RunConfig::desk()
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = base.with_overrides(args.iter().map(String::as_str))?;
    let ds = synth_generate(&cfg.synth())?;
    let (train, tuning, eval) = (ds.split(Split::Train), ds.split(Split::Tuning), ds.split(Split::Eval));

    let net = cfg.new_captioner(ds.vocab.len(), ds.feature_dim().unwrap_or(0))?;
    let xe = train_captioner_xe(net, &train, &tuning, &cfg.xe())?;
    let cider = |net| -> mft::Result<f64> { paragraph_cider(&eval, &gt_event_paragraphs(net, &eval)?) };
    println!(
        "XE:   token accuracy {:.3} (eval {:.3}), GT-event CIDEr-D {:.4}",
        teacher_forced_accuracy(&xe.net, &train)?,
        teacher_forced_accuracy(&xe.net, &eval)?,
        cider(&xe.net)?
    );

    let scst = scst_train(xe.net.clone(), &train, &tuning, &cfg.scst())?;
    println!("SCST: GT-event CIDEr-D {:.4}, best epoch {}", cider(&scst.net)?, scst.best_epoch);

    let video = &eval[0];
    let para = &gt_event_paragraphs(&scst.net, std::slice::from_ref(video))?[0];
    for (s, e) in para.sentences.iter().zip(&video.gt_events) {
        println!("  {:<45} | {}", ds.vocab.decode(s.words()), ds.vocab.decode(&e.sentence));
    }
    Ok(())
}
