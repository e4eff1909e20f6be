//! Scores a few hand-written paragraphs and prints the report table, plus
//! the repetition and diversity metrics on their own.
//!
//! ```text
//! cargo run --example metrics_report
//! ```

use mft::caption::Vocabulary;
use mft::metrics::report::{evaluate, EvalItem};
use mft::metrics::{re_score, self_bleu};

fn main() -> mft::Result<()> {
    let generated = [
        ("v1", vec!["a man is riding a bike", "then a man is riding a bike"]),
        ("v2", vec!["a dog runs across the yard", "the dog jumps over a fence"]),
    ];
    let references = [
        ("v1", vec!["a man is riding a bike on the road", "then he falls off the bike"]),
        ("v2", vec!["a dog runs across the yard", "the dog jumps over the fence"]),
    ];
    let all = generated.iter().chain(&references).flat_map(|(_, s)| s.iter());
    let vocab = Vocabulary::from_words(all.flat_map(|s| s.split(' ')));

    let items: Vec<EvalItem> = generated
        .iter()
        .zip(&references)
        .map(|((id, hyp), (_, refs))| EvalItem {
            id: id.to_string(),
            hypothesis: hyp.iter().map(|s| vocab.encode(s)).collect(),
            // One reference paragraph per video.
            references: vec![refs.iter().map(|s| vocab.encode(s)).collect()],
        })
        .collect();
    print!("{}", evaluate(&items)?.to_text("hand"));

    for (id, hyp) in &generated {
        let sentences: Vec<_> = hyp.iter().map(|s| vocab.encode(s)).collect();
        let joined: Vec<_> = sentences.concat();
        println!("{id}: RE {:.3}, Self-BLEU {:.3}", re_score(&joined, 4), self_bleu(&sentences));
    }
    Ok(())
}
