use super::bleu::bleu;
use crate::Token;

/// Mean BLEU@4 of each sentence against its sibling sentences.
///
/// Paragraphs with fewer than two sentences score 0. An empty sentence
/// contributes 0.
pub fn self_bleu<S: AsRef<[Token]>>(sentences: &[S]) -> f64 {
    if sentences.len() < 2 {
        return 0.0;
    }
    let total: f64 = (0..sentences.len())
        .map(|i| {
            let hyp = sentences[i].as_ref();
            if hyp.is_empty() {
                return 0.0;
            }
            let others: Vec<&[Token]> = sentences
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| s.as_ref())
                .collect();
            bleu(hyp, &others, 4).map(|b| b[3]).unwrap_or(0.0)
        })
        .sum();
    total / sentences.len() as f64
}
