//! Reads dense-captioning annotations (seconds-based timestamps, one
//! sentence per event), converts them to frame spans, and joins them with
//! feature matrices into records.
//!
//! ```text
//! cargo run --example annotation_ingest
//! ```

use mft::caption::Vocabulary;
use mft::corpus::{parse_annotations, record_from_annotation, Split};
use mft::numcore::Matrix;

const ANNOTATIONS: &str = r#"{
  "v_001": {"duration": 24.0, "timestamps": [[0.0, 9.5], [8.0, 24.0]],
            "sentences": ["A man ties his shoes.", "He then runs down the street."]},
  "v_002": {"duration": 12.0, "timestamps": [[2.0, 11.0]],
            "sentences": ["Two kids play catch in the park."]}
}"#;

fn main() -> mft::Result<()> {
    let fps = 0.5;
    let videos = parse_annotations(ANNOTATIONS, fps)?;
    let vocab = Vocabulary::build(videos.iter().flat_map(|v| v.sentences.iter().map(Vec::as_slice)), 1);
    println!("vocabulary: {} words", vocab.len());
    for ann in &videos {
        let features = Matrix::zeros(ann.frames, 4);
        let record = record_from_annotation(ann, features, &vocab, Split::Train)?;
        println!("{} ({} s → {} frames at {fps} fps)", record.id, ann.duration, record.frames());
        for e in &record.gt_events {
            println!("  [{:>2}, {:>2})  {}", e.span.start, e.span.end, vocab.decode(&e.sentence));
        }
    }
    Ok(())
}
