use crate::Token;

pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_len(a: &[Token], b: &[Token]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure, `(1+β²)PR / (R + β²P)`.
pub fn rouge_l_single(hyp: &[Token], reference: &[Token]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(hyp, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / hyp.len() as f64;
    let r = lcs / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Best [`rouge_l_single`] over the references.
pub fn rouge_l<R: AsRef<[Token]>>(hyp: &[Token], refs: &[R]) -> f64 {
    refs.iter()
        .map(|r| rouge_l_single(hyp, r.as_ref()))
        .fold(0.0, f64::max)
}
