//! Captioner training (teacher-forced cross-entropy, then self-critical
//! policy gradient with sentence- and paragraph-level CIDEr-D rewards) and
//! supervised selector training over candidate sequences.

pub mod log;
pub mod scst;
pub mod selector;
pub mod sequences;
pub mod xe;

pub use log::{LogRow, TrainLog, LOG_HEADER};
pub use scst::{scst_train, ScstConfig, ScstOutcome};
pub use selector::{evaluate_selector, train_selector, SelectorOutcome, SelectorTrainConfig};
pub use sequences::{make_training_sequences, Scheme, TrainingSequence, DEFAULT_SEQ_LEN};
pub use xe::{caption_samples, teacher_forced_accuracy, train_captioner_xe, CaptionSample, XeConfig, XeOutcome};

use crate::error::Result;
use crate::numcore::ParamStore;
use crate::pipeline::par_map;

/// Computes each item's gradient contribution in parallel into its own
/// zeroed copy of `store`, then adds them into `store` in item order, so the
/// result does not depend on the thread count.
pub(crate) fn accumulate_parallel<T: Sync, S: Send>(
    store: &mut ParamStore,
    items: &[T],
    f: impl Fn(&T, &mut ParamStore) -> Result<S> + Sync,
) -> Result<Vec<S>> {
    let mut template = store.clone();
    template.zero_grads();
    let template = &template;
    let results = par_map(items, |item| {
        let mut buf = template.clone();
        let s = f(item, &mut buf)?;
        Ok((s, buf))
    })?;
    let mut out = Vec::with_capacity(results.len());
    for (s, buf) in results {
        for ((_, dst), (_, src)) in store.iter_mut().zip(buf.iter()) {
            for (d, g) in dst.grad.as_mut_slice().iter_mut().zip(src.grad.as_slice()) {
                *d += g;
            }
        }
        out.push(s);
    }
    Ok(out)
}
