//! Standard LSTM cell with a hand-derived backward pass.
//!
//! Gate pre-activations are `z = W_x x + W_h h_prev + b`, split into four
//! blocks of `hidden_size` rows in the order (input, forget, cell, output):
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use super::matrix::{axpy, sigmoid};
use super::params::{LstmParams, ParamStore};
use crate::error::{MftError, Result};

/// Intermediates kept from the forward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub struct LstmGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
    store: &ParamStore,
) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
    let hs = p.hidden_size;
    if x.len() != p.input_size || h_prev.len() != hs || c_prev.len() != hs {
        return Err(MftError::contract(format!(
            "lstm cell expects x:{} h:{hs} c:{hs}, got x:{} h:{} c:{}",
            p.input_size,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut z = store.value(p.w_input).matvec_unchecked(x);
    let zh = store.value(p.w_hidden).matvec_unchecked(h_prev);
    axpy(&mut z, 1.0, &zh);
    axpy(&mut z, 1.0, store.value(p.bias).as_slice());

    let input_gate: Vec<f64> = z[..hs].iter().map(|&v| sigmoid(v)).collect();
    let forget_gate: Vec<f64> = z[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
    let candidate: Vec<f64> = z[2 * hs..3 * hs].iter().map(|v| v.tanh()).collect();
    let output_gate: Vec<f64> = z[3 * hs..].iter().map(|&v| sigmoid(v)).collect();

    let c: Vec<f64> = (0..hs)
        .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hs).map(|k| output_gate[k] * tanh_c[k]).collect();

    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        input_gate,
        forget_gate,
        candidate,
        output_gate,
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Accumulates parameter gradients into `store` and returns input gradients.
pub fn lstm_cell_backward(
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    p: &LstmParams,
    store: &mut ParamStore,
) -> LstmGrads {
    let hs = p.hidden_size;
    let mut dz = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for k in 0..hs {
        let (i, f, g, o) = (
            cache.input_gate[k],
            cache.forget_gate[k],
            cache.candidate[k],
            cache.output_gate[k],
        );
        let tc = cache.tanh_c[k];
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc_total * g * i * (1.0 - i);
        dz[hs + k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * hs + k] = dc_total * i * (1.0 - g * g);
        dz[3 * hs + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc_total * f;
    }
    let dx = store.value(p.w_input).matvec_transposed(&dz);
    let dh_prev = store.value(p.w_hidden).matvec_transposed(&dz);
    store.get_mut(p.w_input).grad.add_outer(&dz, &cache.x);
    store.get_mut(p.w_hidden).grad.add_outer(&dz, &cache.h_prev);
    axpy(store.get_mut(p.bias).grad.as_mut_slice(), 1.0, &dz);
    LstmGrads {
        dx,
        dh_prev,
        dc_prev,
    }
}
