//! Brute-force metric oracles and random instances shared by the
//! integration tests. The oracles work on plain window lists and linear
//! scans, independent of the library's n-gram multisets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Tok = u32;

pub fn windows(s: &[Tok], n: usize) -> Vec<Vec<Tok>> {
    if n == 0 || s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn occurrences(list: &[Vec<Tok>], g: &[Tok]) -> usize {
    list.iter().filter(|w| w.as_slice() == g).count()
}

fn distinct(list: &[Vec<Tok>]) -> Vec<Vec<Tok>> {
    let mut out: Vec<Vec<Tok>> = Vec::new();
    for w in list {
        if !out.contains(w) {
            out.push(w.clone());
        }
    }
    out
}

fn clipped_matches(hyp: &[Tok], refs: &[Vec<Tok>], n: usize) -> (usize, usize) {
    let hw = windows(hyp, n);
    let rws: Vec<Vec<Vec<Tok>>> = refs.iter().map(|r| windows(r, n)).collect();
    let mut m = 0;
    for g in distinct(&hw) {
        let best = rws.iter().map(|rw| occurrences(rw, &g)).max().unwrap_or(0);
        m += occurrences(&hw, &g).min(best);
    }
    (m, hw.len())
}

fn closest(hyp_len: usize, refs: &[Vec<Tok>]) -> usize {
    let mut best = usize::MAX;
    let mut best_diff = usize::MAX;
    for r in refs {
        let d = r.len().abs_diff(hyp_len);
        if d < best_diff || (d == best_diff && r.len() < best) {
            best = r.len();
            best_diff = d;
        }
    }
    best
}

fn bp(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

fn geometric(ps: &[f64], k: usize, bp: f64) -> f64 {
    if ps[..k].iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    bp * (ps[..k].iter().map(|p| p.ln()).sum::<f64>() / k as f64).exp()
}

/// Sentence BLEU@1..4 with a 1e-9 numerator floor.
pub fn bleu(hyp: &[Tok], refs: &[Vec<Tok>]) -> [f64; 4] {
    let ps: Vec<f64> = (1..=4)
        .map(|n| {
            let (m, t) = clipped_matches(hyp, refs, n);
            (m as f64).max(1e-9) / t.max(1) as f64
        })
        .collect();
    let b = bp(hyp.len(), closest(hyp.len(), refs));
    [1, 2, 3, 4].map(|k| geometric(&ps, k, b))
}

/// Corpus BLEU@1..4 from summed counts, unsmoothed.
pub fn corpus_bleu(hyps: &[Vec<Tok>], refs: &[Vec<Vec<Tok>>]) -> [f64; 4] {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    let (mut c, mut r) = (0, 0);
    for (h, rs) in hyps.iter().zip(refs) {
        for n in 1..=4 {
            let (mm, tt) = clipped_matches(h, rs, n);
            m[n - 1] += mm;
            t[n - 1] += tt;
        }
        c += h.len();
        r += closest(h.len(), rs);
    }
    let ps: Vec<f64> = (0..4).map(|k| if t[k] == 0 { 0.0 } else { m[k] as f64 / t[k] as f64 }).collect();
    let b = bp(c, r);
    [1, 2, 3, 4].map(|k| geometric(&ps, k, b))
}

fn lcs_memo(a: &[Tok], b: &[Tok], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(v) = memo[i][j] {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + lcs_memo(a, b, i + 1, j + 1, memo)
    } else {
        lcs_memo(a, b, i + 1, j, memo).max(lcs_memo(a, b, i, j + 1, memo))
    };
    memo[i][j] = Some(v);
    v
}

pub fn lcs(a: &[Tok], b: &[Tok]) -> usize {
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    lcs_memo(a, b, 0, 0, &mut memo)
}

pub fn rouge_l(hyp: &[Tok], refs: &[Vec<Tok>]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let mut best = 0.0f64;
    for r in refs {
        if hyp.is_empty() || r.is_empty() {
            continue;
        }
        let l = lcs(hyp, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / hyp.len() as f64;
        let rc = l / r.len() as f64;
        best = best.max((1.0 + beta2) * p * rc / (rc + beta2 * p));
    }
    best
}

pub fn self_bleu(sentences: &[Vec<Tok>]) -> f64 {
    if sentences.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..sentences.len() {
        if sentences[i].is_empty() {
            continue;
        }
        let others: Vec<Vec<Tok>> = (0..sentences.len()).filter(|&j| j != i).map(|j| sentences[j].clone()).collect();
        total += bleu(&sentences[i], &others)[3];
    }
    total / sentences.len() as f64
}

pub fn re(tokens: &[Tok]) -> f64 {
    let w = windows(tokens, 4);
    if w.is_empty() {
        return 0.0;
    }
    let repeats: usize = distinct(&w).iter().map(|g| occurrences(&w, g) - 1).sum();
    repeats as f64 / w.len() as f64
}

/// CIDEr-D on the 0..10 scale, averaged over items. Document frequency of a
/// gram = number of items whose references contain it anywhere;
/// idf = ln((N + 1) / max(df, 1)).
pub fn cider_d(hyps: &[Vec<Tok>], refs: &[Vec<Vec<Tok>>]) -> f64 {
    let n_docs = refs.len() as f64;
    let df = |g: &[Tok]| -> f64 {
        refs.iter()
            .filter(|rs| rs.iter().any(|r| occurrences(&windows(r, g.len()), g) > 0))
            .count()
            .max(1) as f64
    };
    let idf = |g: &[Tok]| ((n_docs + 1.0) / df(g)).ln();
    let vector = |s: &[Tok], n: usize| -> Vec<(Vec<Tok>, f64)> {
        let w = windows(s, n);
        distinct(&w).into_iter().map(|g| {
            let v = occurrences(&w, &g) as f64 * idf(&g);
            (g, v)
        }).collect()
    };
    let norm = |v: &[(Vec<Tok>, f64)]| v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (h, rs) in hyps.iter().zip(refs) {
        let mut item = 0.0;
        for r in rs {
            let d = h.len() as f64 - r.len() as f64;
            let pen = (-d * d / 72.0).exp();
            let mut s = 0.0;
            for n in 1..=4 {
                let hv = vector(h, n);
                let rv = vector(r, n);
                let mut val = 0.0;
                for (g, x) in &hv {
                    if let Some((_, y)) = rv.iter().find(|(gg, _)| gg == g) {
                        val += x.min(*y) * y;
                    }
                }
                let (nh, nr) = (norm(&hv), norm(&rv));
                if nh != 0.0 && nr != 0.0 {
                    val /= nh * nr;
                }
                s += val * pen;
            }
            item += 10.0 * s / 4.0;
        }
        total += item / rs.len() as f64;
    }
    total / hyps.len() as f64
}

/// A random sentence of 1..=12 tokens over an 8-word vocabulary.
pub fn random_sentence(rng: &mut ChaCha8Rng) -> Vec<Tok> {
    let len = rng.gen_range(1..=12);
    (0..len).map(|_| rng.gen_range(0..8)).collect()
}

/// One seeded instance: a hypothesis with 1..=3 references, all drawn
/// from a small pool so that n-grams overlap often.
pub struct Instance {
    pub hyp: Vec<Tok>,
    pub refs: Vec<Vec<Tok>>,
    pub paragraph: Vec<Vec<Tok>>,
}

pub fn instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let hyp = random_sentence(&mut rng);
            let refs = (0..rng.gen_range(1..=3))
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        // Near copy of the hypothesis.
                        let mut r = hyp.clone();
                        let k = rng.gen_range(0..r.len());
                        r[k] = rng.gen_range(0..8);
                        r
                    } else {
                        random_sentence(&mut rng)
                    }
                })
                .collect();
            let paragraph = (0..rng.gen_range(1..=4)).map(|_| random_sentence(&mut rng)).collect();
            Instance { hyp, refs, paragraph }
        })
        .collect()
}

/// Largest absolute difference between every library metric and its oracle
/// over `instances(50, seed)`, by metric name.
pub fn metric_oracle_gaps(seed: u64) -> Vec<(&'static str, f64)> {
    use mft::metrics;
    let cases = instances(50, seed);
    let mut gaps = vec![
        ("BLEU@1-4", 0.0f64),
        ("corpus BLEU@1-4", 0.0),
        ("Rouge-L", 0.0),
        ("Self-BLEU", 0.0),
        ("RE", 0.0),
        ("CIDEr-D", 0.0),
    ];
    let mut bump = |k: usize, a: f64, b: f64| gaps[k].1 = gaps[k].1.max((a - b).abs());
    for c in &cases {
        let lib = metrics::bleu(&c.hyp, &c.refs, 4).unwrap();
        let ora = bleu(&c.hyp, &c.refs);
        for k in 0..4 {
            bump(0, lib[k], ora[k]);
        }
        bump(2, metrics::rouge_l(&c.hyp, &c.refs), rouge_l(&c.hyp, &c.refs));
        bump(3, metrics::self_bleu(&c.paragraph), self_bleu(&c.paragraph));
        let joined: Vec<Tok> = c.paragraph.iter().flatten().copied().collect();
        bump(4, metrics::re_score(&joined, 4), re(&joined));
        bump(4, metrics::re_score(&c.hyp, 4), re(&c.hyp));
    }
    let hyps: Vec<Vec<Tok>> = cases.iter().map(|c| c.hyp.clone()).collect();
    let refs: Vec<Vec<Vec<Tok>>> = cases.iter().map(|c| c.refs.clone()).collect();
    let lib = metrics::corpus_bleu(&hyps, &refs, 4).unwrap();
    let ora = corpus_bleu(&hyps, &refs);
    for k in 0..4 {
        bump(1, lib[k], ora[k]);
    }
    // Corpus-level CIDEr-D over growing prefixes, so document frequencies
    // vary, plus every instance as its own one-document corpus.
    for end in [2, 5, 17, 50] {
        bump(5, metrics::cider(&hyps[..end], &refs[..end]).unwrap(), cider_d(&hyps[..end], &refs[..end]));
    }
    for c in &cases {
        let one = [c.refs.clone()];
        bump(5, metrics::cider(&[c.hyp.clone()], &one).unwrap(), cider_d(&[c.hyp.clone()], &one));
    }
    gaps
}

/// Runs two SCST epochs from a captioner whose sampled and greedy decodes
/// always agree (saturated gates, a dominant `<eos>` row), so every
/// advantage is zero. Returns (skipped steps, parameters changed).
pub fn zero_advantage_scst() -> (usize, bool) {
    use mft::caption::{CaptionNet, CaptionShape, EOS};
    use mft::corpus::{synth_generate, SynthConfig};
    use mft::train::{scst_train, ScstConfig};

    let ds = synth_generate(&SynthConfig { n_videos: 4, val_videos: 0, ..Default::default() }).unwrap();
    let shape = CaptionShape {
        vocab_size: ds.vocab.len(),
        feature_dim: 16,
        embed_size: 4,
        hidden_size: 6,
        attention_size: 3,
    };
    let mut net = CaptionNet::new(shape, 3, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    net.zero_params();
    net.lstm_bias_mut().as_mut_slice().fill(10.0);
    let ws = net.output_weights_mut();
    let cols = ws.cols();
    ws.as_mut_slice()[EOS as usize * cols..][..cols].fill(100.0);
    let before = net.store.clone();
    let cfg = ScstConfig { epochs: 2, lr: 0.1, min_events_per_batch: 4, ..Default::default() };
    let out = scst_train(net, &ds.videos, &[], &cfg).unwrap();
    let changed = before.iter().zip(out.net.store.iter()).any(|((_, a), (_, b))| a.value != b.value);
    (out.skipped_steps, changed)
}
