//! Event selection: an LSTM walks the chronological candidate list and emits
//! a keep-probability per candidate from its visual feature, its temporal
//! range mask and the decoder state of the last sentence generated. The
//! progressive driver interleaves those decisions with sentence decoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::caption::{CaptionNet, DecodeMode, DecoderState, Paragraph};
use crate::error::{MftError, Result};
use crate::localize::{CandidateEvent, Span};
use crate::numcore::matrix::{dot, sigmoid};
use crate::numcore::{lstm_cell_forward, LstmParams, Matrix, NodeId, ParamId, ParamStore, Tape};

pub const DEFAULT_RANGE_BINS: usize = 32;
pub const DEFAULT_DELTA: f64 = 0.3;
pub const DEFAULT_MAX_CANDIDATES: usize = 100;

/// Bin `i` of `R` is set iff `[i/R, (i+1)/R)` overlaps `[start, end) / total`.
pub fn range_feature(span: Span, total_frames: usize, bins: usize) -> Result<Vec<f64>> {
    if total_frames == 0 {
        return Err(MftError::contract("range feature of a zero-length video"));
    }
    if bins == 0 {
        return Err(MftError::contract("range feature needs at least one bin"));
    }
    if span.is_empty() || span.end > total_frames {
        return Err(MftError::contract(format!(
            "span [{}, {}) outside video of {total_frames} frames",
            span.start, span.end
        )));
    }
    Ok((0..bins)
        .map(|i| {
            let overlaps = i * total_frames < span.end * bins && (i + 1) * total_frames > span.start * bins;
            if overlaps {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub delta: f64,
    pub max_candidates: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            delta: DEFAULT_DELTA,
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MftError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_candidates == 0 {
            return Err(MftError::Config("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// Which inputs the selector sees; disabled inputs are fed as zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorInputs {
    pub visual: bool,
    pub range: bool,
    pub caption: bool,
}

impl Default for SelectorInputs {
    fn default() -> Self {
        SelectorInputs {
            visual: true,
            range: true,
            caption: true,
        }
    }
}

impl SelectorInputs {
    pub const VISUAL_ONLY: SelectorInputs = SelectorInputs {
        visual: true,
        range: false,
        caption: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectShape {
    pub feature_dim: usize,
    pub range_bins: usize,
    pub caption_dim: usize,
    pub hidden_size: usize,
}

impl SelectShape {
    pub fn input_size(&self) -> usize {
        self.feature_dim + self.range_bins + self.caption_dim
    }
}

/// Selector recurrent state.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionStep {
    pub h: Vec<f64>,
    pub p: f64,
    pub y: bool,
}

#[derive(Clone, Debug)]
pub struct SelectionNet {
    pub store: ParamStore,
    lstm: LstmParams,
    w_p: ParamId,
    shape: SelectShape,
    pub inputs: SelectorInputs,
}

const PREFIX: &str = "select";

impl SelectionNet {
    pub fn new<R: Rng + ?Sized>(shape: SelectShape, inputs: SelectorInputs, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let lstm = LstmParams::init(
            &mut store,
            &format!("{PREFIX}.lstm"),
            shape.input_size(),
            shape.hidden_size,
            rng,
        );
        let w_p = store.add(format!("{PREFIX}.w_p"), Matrix::xavier(1, shape.hidden_size, rng));
        SelectionNet {
            store,
            lstm,
            w_p,
            shape,
            inputs,
        }
    }

    /// Re-attaches to a loaded store. The split of the LSTM input between
    /// visual, range and caption parts is not recorded in the weights, so
    /// `range_bins` and `caption_dim` come from the caller.
    pub fn from_store(
        store: ParamStore,
        range_bins: usize,
        caption_dim: usize,
        inputs: SelectorInputs,
    ) -> Result<Self> {
        let lstm = LstmParams::bind(&store, &format!("{PREFIX}.lstm"))?;
        let feature_dim = lstm
            .input_size
            .checked_sub(range_bins + caption_dim)
            .ok_or_else(|| MftError::contract("selector input narrower than range + caption"))?;
        let w_p = store.require(&format!("{PREFIX}.w_p"), 1, lstm.hidden_size)?;
        Ok(SelectionNet {
            shape: SelectShape {
                feature_dim,
                range_bins,
                caption_dim,
                hidden_size: lstm.hidden_size,
            },
            store,
            lstm,
            w_p,
            inputs,
        })
    }

    pub fn shape(&self) -> SelectShape {
        self.shape
    }

    pub fn zero_state(&self) -> SelectorState {
        SelectorState {
            h: vec![0.0; self.shape.hidden_size],
            c: vec![0.0; self.shape.hidden_size],
        }
    }

    pub fn zero_params(&mut self) {
        for (_, p) in self.store.iter_mut() {
            p.value.fill(0.0);
        }
    }

    pub fn w_p_mut(&mut self) -> &mut Matrix {
        &mut self.store.get_mut(self.w_p).value
    }

    pub fn lstm_bias_mut(&mut self) -> &mut Matrix {
        &mut self.store.get_mut(self.lstm.bias).value
    }

    /// Input-to-gate weight columns that read the caption feature.
    pub fn zero_caption_weights(&mut self) {
        let start = self.shape.feature_dim + self.shape.range_bins;
        let w = &mut self.store.get_mut(self.lstm.w_input).value;
        for r in 0..w.rows() {
            for col in start..w.cols() {
                w.set(r, col, 0.0);
            }
        }
    }

    /// `[v; r; c]` with disabled parts zeroed.
    pub fn assemble_input(&self, v: &[f64], r: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let s = self.shape;
        if v.len() != s.feature_dim || r.len() != s.range_bins || c.len() != s.caption_dim {
            return Err(MftError::contract(format!(
                "selector expects v:{} r:{} c:{}, got v:{} r:{} c:{}",
                s.feature_dim,
                s.range_bins,
                s.caption_dim,
                v.len(),
                r.len(),
                c.len()
            )));
        }
        let mut x = Vec::with_capacity(s.input_size());
        let mut part = |on: bool, src: &[f64]| {
            if on {
                x.extend_from_slice(src);
            } else {
                x.extend(std::iter::repeat_n(0.0, src.len()));
            }
        };
        part(self.inputs.visual, v);
        part(self.inputs.range, r);
        part(self.inputs.caption, c);
        Ok(x)
    }

    /// `h_t = LSTM(h_{t-1}, [v; r; c])`, `p = σ(w_pᵀ h_t)`, `y = p > δ`.
    pub fn select_step(
        &self,
        state: &SelectorState,
        v: &[f64],
        r: &[f64],
        c: &[f64],
        delta: f64,
    ) -> Result<(SelectionStep, SelectorState)> {
        let x = self.assemble_input(v, r, c)?;
        let (h, cell, _) = lstm_cell_forward(&x, &state.h, &state.c, &self.lstm, &self.store)?;
        let p = sigmoid(dot(self.store.value(self.w_p).as_slice(), &h));
        let next = SelectorState { h: h.clone(), c: cell };
        Ok((SelectionStep { h, p, y: p > delta }, next))
    }

    /// Tape version of one step on a pre-assembled input; returns
    /// `(h, cell, logit)`.
    pub fn tape_step(
        &self,
        tape: &mut Tape,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let (h2, c2) = tape.lstm(&self.store, &self.lstm, x, h, c)?;
        let logit = tape.matvec(&self.store, self.w_p, h2)?;
        Ok((h2, c2, logit))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressStatus {
    Selected,
    /// Nothing cleared δ; the single most probable candidate was used.
    Fallback,
    NoCandidates,
}

#[derive(Clone, Debug)]
pub struct Progressive {
    pub status: ProgressStatus,
    pub selected: Vec<usize>,
    pub paragraph: Paragraph,
    /// Final decoder state of each generated sentence.
    pub states: Vec<DecoderState>,
    /// `p_t` for every visited candidate.
    pub probs: Vec<f64>,
}

/// Walks `candidates` in order; each positive decision decodes a sentence
/// for that candidate (continuing the decoder state of the previous one) and
/// feeds the sentence's final hidden state back as the caption feature.
#[allow(clippy::too_many_arguments)]
pub fn run_progressive<R: Rng + ?Sized>(
    candidates: &[CandidateEvent],
    features: &Matrix,
    selector: &SelectionNet,
    captioner: &CaptionNet,
    cfg: &SelectionConfig,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Progressive> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Ok(Progressive {
            status: ProgressStatus::NoCandidates,
            selected: Vec::new(),
            paragraph: Paragraph::default(),
            states: Vec::new(),
            probs: Vec::new(),
        });
    }
    if selector.shape.caption_dim != captioner.hidden_size() {
        return Err(MftError::contract(format!(
            "selector caption input {} != decoder hidden size {}",
            selector.shape.caption_dim,
            captioner.hidden_size()
        )));
    }
    let candidates = &candidates[..candidates.len().min(cfg.max_candidates)];
    let frames = features.rows();
    let mut sel_state = selector.zero_state();
    let mut dec_state = captioner.zero_state();
    let mut caption_feature = vec![0.0; selector.shape.caption_dim];
    let mut out = Progressive {
        status: ProgressStatus::Selected,
        selected: Vec::new(),
        paragraph: Paragraph::default(),
        states: Vec::new(),
        probs: Vec::with_capacity(candidates.len()),
    };
    for (t, cand) in candidates.iter().enumerate() {
        let r = range_feature(cand.span, frames, selector.shape.range_bins)?;
        let (step, next) = selector.select_step(&sel_state, &cand.visual, &r, &caption_feature, cfg.delta)?;
        sel_state = next;
        out.probs.push(step.p);
        if step.y {
            let ctx = captioner.prepare_span(features, cand.span)?;
            let (sentence, state) = captioner.decode_sentence(&ctx, &dec_state, mode, rng)?;
            caption_feature = state.h.clone();
            dec_state = state.clone();
            out.selected.push(t);
            out.paragraph.sentences.push(sentence);
            out.paragraph.spans.push(cand.span);
            out.states.push(state);
        }
    }
    if out.selected.is_empty() {
        let best = out
            .probs
            .iter()
            .enumerate()
            .fold(0, |b, (k, &p)| if p > out.probs[b] { k } else { b });
        let span = candidates[best].span;
        let ctx = captioner.prepare_span(features, span)?;
        let (sentence, state) =
            captioner.decode_sentence(&ctx, &captioner.zero_state(), mode, rng)?;
        out.status = ProgressStatus::Fallback;
        out.selected.push(best);
        out.paragraph.sentences.push(sentence);
        out.paragraph.spans.push(span);
        out.states.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::CaptionShape;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask(bits: &str) -> Vec<f64> {
        bits.chars().map(|c| if c == '1' { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn range_feature_examples() {
        assert_eq!(range_feature(Span { start: 0, end: 8 }, 8, 8).unwrap(), mask("11111111"));
        assert_eq!(range_feature(Span { start: 0, end: 50 }, 100, 8).unwrap(), mask("11110000"));
        assert_eq!(range_feature(Span { start: 3, end: 5 }, 8, 8).unwrap(), mask("00011000"));
        assert!(range_feature(Span { start: 0, end: 1 }, 0, 8).is_err());
    }

    fn nets(seed: u64) -> (SelectionNet, CaptionNet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = CaptionNet::new(
            CaptionShape {
                vocab_size: 8,
                feature_dim: 3,
                embed_size: 4,
                hidden_size: 5,
                attention_size: 3,
            },
            3,
            5,
            &mut rng,
        )
        .unwrap();
        let sel = SelectionNet::new(
            SelectShape {
                feature_dim: 3,
                range_bins: 4,
                caption_dim: 5,
                hidden_size: 6,
            },
            SelectorInputs::default(),
            &mut rng,
        );
        (sel, cap)
    }

    fn candidates(features: &Matrix, spans: &[(usize, usize)]) -> Vec<CandidateEvent> {
        spans
            .iter()
            .map(|&(s, e)| {
                let span = Span { start: s, end: e };
                CandidateEvent {
                    span,
                    score: 1.0,
                    visual: crate::localize::pool_span(features, span).unwrap(),
                }
            })
            .collect()
    }

    fn frames(seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(20, 3, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_params_select_everything() {
        let (mut sel, mut cap) = nets(1);
        sel.zero_params();
        cap.zero_params();
        let f = frames(2);
        let cands = candidates(&f, &[(0, 3), (2, 6), (5, 9), (10, 14), (15, 20)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SelectionConfig::default();
        let out = run_progressive(&cands, &f, &sel, &cap, &cfg, DecodeMode::Greedy, &mut rng).unwrap();
        assert_eq!(out.selected, vec![0, 1, 2, 3, 4]);
        assert_eq!(out.paragraph.len(), 5);
        assert!(out.probs.iter().all(|p| *p == 0.5));

        let (step, _) = sel
            .select_step(&sel.zero_state(), &[0.0; 3], &[0.0; 4], &[0.0; 5], 0.6)
            .unwrap();
        assert_eq!((step.p, step.y), (0.5, false));
    }

    #[test]
    fn forced_negative_falls_back_to_one_sentence() {
        let (mut sel, cap) = nets(3);
        sel.zero_params();
        // saturated gates make h a fixed positive vector; w_p < 0 then keeps p tiny
        let hs = 6;
        let b = sel.lstm_bias_mut();
        for k in 0..hs {
            b.set(k, 0, 20.0);
            b.set(2 * hs + k, 0, 20.0);
            b.set(3 * hs + k, 0, 20.0);
        }
        sel.w_p_mut().fill(-5.0);
        let f = frames(4);
        let cands = candidates(&f, &[(0, 4), (4, 8), (9, 15)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_progressive(&cands, &f, &sel, &cap, &SelectionConfig::default(), DecodeMode::Greedy, &mut rng)
            .unwrap();
        assert_eq!(out.status, ProgressStatus::Fallback);
        assert_eq!(out.paragraph.len(), 1);
        assert_eq!(out.selected, vec![0]);
        assert!(out.probs.iter().all(|p| *p < 0.3));
    }

    #[test]
    fn empty_candidates_have_distinct_status() {
        let (sel, cap) = nets(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_progressive(&[], &frames(1), &sel, &cap, &SelectionConfig::default(), DecodeMode::Greedy, &mut rng)
            .unwrap();
        assert_eq!(out.status, ProgressStatus::NoCandidates);
        assert!(out.paragraph.is_empty());
    }

    #[test]
    fn step_matches_hand_unrolled_oracle() {
        let (sel, _) = nets(7);
        let v = [0.3, -0.2, 0.8];
        let r = [1.0, 1.0, 0.0, 0.0];
        let c = [0.1, 0.0, -0.4, 0.2, 0.05];
        let st = SelectorState {
            h: vec![0.1, -0.1, 0.2, 0.0, 0.3, -0.2],
            c: vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.1],
        };
        let (step, _) = sel.select_step(&st, &v, &r, &c, 0.3).unwrap();

        let x: Vec<f64> = v.iter().chain(&r).chain(&c).copied().collect();
        let wx = sel.store.value(sel.lstm.w_input);
        let wh = sel.store.value(sel.lstm.w_hidden);
        let b = sel.store.value(sel.lstm.bias);
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let hs = 6;
        let z = |row: usize| {
            (0..12).map(|j| wx.get(row, j) * x[j]).sum::<f64>()
                + (0..hs).map(|j| wh.get(row, j) * st.h[j]).sum::<f64>()
                + b.get(row, 0)
        };
        let mut logit = 0.0;
        for k in 0..hs {
            let cell = sig(z(hs + k)) * st.c[k] + sig(z(k)) * z(2 * hs + k).tanh();
            let h = sig(z(3 * hs + k)) * cell.tanh();
            assert_abs_diff_eq!(step.h[k], h, epsilon = 1e-12);
            logit += sel.store.value(sel.w_p).get(0, k) * h;
        }
        assert_abs_diff_eq!(step.p, sig(logit), epsilon = 1e-12);
        assert_eq!(step.y, step.p > 0.3);
    }

    #[test]
    fn caption_input_conditioning_is_live_and_can_be_cut() {
        let (mut sel, _) = nets(9);
        let v = [0.3, -0.2, 0.8];
        let r = [0.0, 1.0, 1.0, 0.0];
        let p = |sel: &SelectionNet, c: &[f64]| {
            sel.select_step(&sel.zero_state(), &v, &r, c, 0.3).unwrap().0.p
        };
        let c1 = [0.5, -0.5, 0.2, 0.9, -0.1];
        assert_ne!(p(&sel, &[0.0; 5]), p(&sel, &c1));
        sel.zero_caption_weights();
        assert_eq!(p(&sel, &[0.0; 5]), p(&sel, &c1));
    }

    #[test]
    fn disabled_inputs_are_zeroed() {
        let (mut sel, _) = nets(11);
        sel.inputs = SelectorInputs::VISUAL_ONLY;
        let x = sel.assemble_input(&[1.0, 2.0, 3.0], &[1.0; 4], &[1.0; 5]).unwrap();
        assert_eq!(&x[..3], &[1.0, 2.0, 3.0]);
        assert!(x[3..].iter().all(|v| *v == 0.0));
        assert!(sel.assemble_input(&[1.0], &[1.0; 4], &[1.0; 5]).is_err());
    }
}
