//! Finite-difference checks of both networks' backward passes on small
//! random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caption::{CaptionNet, CaptionShape, DecoderState, SubsegmentFeatures, EOS};
use crate::error::Result;
use crate::numcore::{grad_check, GradCheckReport, NodeId, Objective, ParamStore, Tape};
use crate::select::{SelectShape, SelectionNet, SelectorInputs};
use crate::Token;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSetup {
    pub feature_dim: usize,
    pub range_bins: usize,
    pub hidden_size: usize,
    pub vocab_size: usize,
    pub subsegments: usize,
    /// Sentences in the caption objective; each is followed by the next from
    /// the state it ended in, so the carry-over path is checked too.
    pub sentences: usize,
    pub sentence_len: usize,
    /// Steps in the selector objective.
    pub steps: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        GradCheckSetup {
            feature_dim: 8,
            range_bins: 8,
            hidden_size: 16,
            vocab_size: 20,
            subsegments: 4,
            sentences: 2,
            sentence_len: 4,
            steps: 5,
            eps: 1e-4,
            tolerance: 1e-4,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkCheck {
    pub network: String,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkGradCheck {
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub networks: Vec<NetworkCheck>,
}

impl NetworkGradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    /// One line per parameter (its worst entry), then the verdict.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.networks {
            for p in &n.report.per_param {
                out.push_str(&format!(
                    "{:<9} {:<24} worst[{:>4}] analytic {:>+.6e} numeric {:>+.6e} rel {:.3e}\n",
                    n.network, p.name, p.worst_index, p.analytic, p.numeric, p.rel_error
                ));
            }
        }
        out.push_str(&format!(
            "max relative error {:.3e} (tolerance {:.0e}): {}\n",
            self.max_rel_error,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs the net's tape forward pass against whatever store it is handed, so
/// the checker can perturb entries in place.
struct NetObjective<N, F> {
    net: N,
    forward: F,
    set_store: fn(&mut N, &ParamStore),
}

impl<N: Clone, F: Fn(&N, &mut Tape) -> Result<NodeId>> NetObjective<N, F> {
    fn run(&self, params: &ParamStore) -> Result<(Tape, NodeId)> {
        let mut net = self.net.clone();
        (self.set_store)(&mut net, params);
        let mut tape = Tape::new();
        let loss = (self.forward)(&net, &mut tape)?;
        Ok((tape, loss))
    }
}

impl<N: Clone, F: Fn(&N, &mut Tape) -> Result<NodeId>> Objective for NetObjective<N, F> {
    fn loss(&self, params: &ParamStore) -> Result<f64> {
        let (tape, loss) = self.run(params)?;
        Ok(tape.scalar(loss))
    }

    fn accumulate_gradient(&self, params: &mut ParamStore) -> Result<f64> {
        let (tape, loss) = self.run(params)?;
        tape.backward(loss, params)?;
        Ok(tape.scalar(loss))
    }
}

fn copy_values(dst: &mut ParamStore, src: &ParamStore) {
    for ((_, d), (_, s)) in dst.iter_mut().zip(src.iter()) {
        d.value.clone_from(&s.value);
    }
}

/// Teacher-forced paragraph loss of a random caption net.
pub fn check_captioner(setup: &GradCheckSetup) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let shape = CaptionShape {
        vocab_size: setup.vocab_size,
        feature_dim: setup.feature_dim,
        embed_size: setup.hidden_size / 2,
        hidden_size: setup.hidden_size,
        attention_size: setup.hidden_size / 2,
    };
    let net = CaptionNet::new(shape, setup.subsegments, setup.sentence_len + 1, &mut rng)?;
    let events: Vec<SubsegmentFeatures> = (0..setup.sentences)
        .map(|_| SubsegmentFeatures {
            d: (0..setup.subsegments).map(|_| random_vec(&mut rng, setup.feature_dim)).collect(),
        })
        .collect();
    let targets: Vec<Vec<Token>> = (0..setup.sentences)
        .map(|_| {
            let mut t: Vec<Token> = (0..setup.sentence_len)
                .map(|_| rng.gen_range(EOS + 1..setup.vocab_size as Token))
                .collect();
            t.push(EOS);
            t
        })
        .collect();
    let weights: Vec<f64> = (0..setup.sentences).map(|_| rng.gen_range(0.5..1.5)).collect();
    let init = DecoderState {
        h: random_vec(&mut rng, setup.hidden_size),
        c: random_vec(&mut rng, setup.hidden_size),
    };
    let mut store = net.store.clone();
    let obj = NetObjective {
        net,
        forward: move |n: &CaptionNet, tape: &mut Tape| {
            Ok(n.tape_paragraph(tape, &events, &targets, &weights, &init)?.0)
        },
        set_store: |n: &mut CaptionNet, s: &ParamStore| copy_values(&mut n.store, s),
    };
    grad_check(&obj, &mut store, setup.eps)
}

/// Per-step sigmoid cross-entropy of a random selection net over a short
/// sequence with random visual, range and caption inputs.
pub fn check_selector(setup: &GradCheckSetup) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0x005e_1ec7);
    let shape = SelectShape {
        feature_dim: setup.feature_dim,
        range_bins: setup.range_bins,
        caption_dim: setup.hidden_size,
        hidden_size: setup.hidden_size,
    };
    let net = SelectionNet::new(shape, SelectorInputs::default(), &mut rng);
    let mut inputs = Vec::with_capacity(setup.steps);
    for _ in 0..setup.steps {
        let v = random_vec(&mut rng, shape.feature_dim);
        let r: Vec<f64> = (0..shape.range_bins).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let c = random_vec(&mut rng, shape.caption_dim);
        inputs.push((net.assemble_input(&v, &r, &c)?, rng.gen_bool(0.5)));
    }
    let mut store = net.store.clone();
    let obj = NetObjective {
        net,
        forward: move |n: &SelectionNet, tape: &mut Tape| {
            let mut h = tape.zeros(shape.hidden_size);
            let mut c = tape.zeros(shape.hidden_size);
            let mut losses = Vec::with_capacity(inputs.len());
            for (x, label) in &inputs {
                let x = tape.input(x.clone());
                let (h2, c2, logit) = n.tape_step(tape, x, h, c)?;
                losses.push(tape.sigmoid_bce(logit, if *label { 1.0 } else { 0.0 }, 1.0)?);
                h = h2;
                c = c2;
            }
            tape.sum(&losses)
        },
        set_store: |n: &mut SelectionNet, s: &ParamStore| copy_values(&mut n.store, s),
    };
    grad_check(&obj, &mut store, setup.eps)
}

pub fn check_networks(setup: &GradCheckSetup) -> Result<NetworkGradCheck> {
    let networks = vec![
        NetworkCheck {
            network: "caption".into(),
            report: check_captioner(setup)?,
        },
        NetworkCheck {
            network: "select".into(),
            report: check_selector(setup)?,
        },
    ];
    let max_rel_error = networks.iter().map(|n| n.report.max_rel_error).fold(0.0, f64::max);
    Ok(NetworkGradCheck {
        tolerance: setup.tolerance,
        max_rel_error,
        networks,
    })
}
