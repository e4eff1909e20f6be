//! Watershed grouping of a hand-made frame score curve: each flooding level
//! contributes the maximal runs above it, so nested candidates appear
//! around the two bumps.
//!
//! ```text
//! cargo run --example watershed
//! ```

use mft::localize::{watershed_group, WatershedConfig};

fn main() -> mft::Result<()> {
    let scores = [
        0.1, 0.2, 0.4, 0.8, 0.95, 0.92, 0.6, 0.85, 0.9, 0.5, 0.2, 0.1, 0.1, 0.35, 0.75, 0.8, 0.72, 0.3, 0.1,
    ];
    let cfg = WatershedConfig {
        min_duration: 2,
        ..WatershedConfig::default()
    };
    let bar: String = scores.iter().map(|&s| char::from(b" .:-=+*#%@"[(s * 9.99) as usize])).collect();
    println!("scores  |{bar}|");
    for p in watershed_group(&scores, &cfg)? {
        let mut line = vec![' '; scores.len()];
        line[p.span.start..p.span.end].fill('=');
        println!("{:>7.3} |{}| [{}, {})", p.score, line.into_iter().collect::<String>(), p.span.start, p.span.end);
    }
    Ok(())
}
