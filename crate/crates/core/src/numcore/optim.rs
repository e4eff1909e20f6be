use super::matrix::Matrix;
use super::params::ParamStore;

/// Per-parameter optimizer buffers.
#[derive(Clone, Debug, Default)]
pub struct OptimState {
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    velocity: Vec<Matrix>,
    step: u64,
}

impl OptimState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn ensure(buffers: &mut Vec<Matrix>, store: &ParamStore) {
        if buffers.len() != store.len() {
            *buffers = store
                .iter()
                .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment update; zeroes gradients afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimState, lr: f64) {
    adam_step_with(store, state, lr, AdamConfig::default())
}

pub fn adam_step_with(store: &mut ParamStore, state: &mut OptimState, lr: f64, cfg: AdamConfig) {
    OptimState::ensure(&mut state.first_moment, store);
    OptimState::ensure(&mut state.second_moment, store);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (k, (_, p)) in store.iter_mut().enumerate() {
        let m = state.first_moment[k].as_mut_slice();
        let v = state.second_moment[k].as_mut_slice();
        let grad = p.grad.as_slice();
        let value = p.value.as_mut_slice();
        for j in 0..value.len() {
            let g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            value[j] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    store.zero_grads();
}

/// `v <- momentum * v + grad + weight_decay * p; p <- p - lr * v`; zeroes gradients.
pub fn sgd_momentum_step(
    store: &mut ParamStore,
    state: &mut OptimState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    OptimState::ensure(&mut state.velocity, store);
    state.step += 1;
    for (k, (_, p)) in store.iter_mut().enumerate() {
        let vel = state.velocity[k].as_mut_slice();
        let grad = p.grad.as_slice();
        let value = p.value.as_mut_slice();
        for j in 0..value.len() {
            vel[j] = momentum * vel[j] + grad[j] + weight_decay * value[j];
            value[j] -= lr * vel[j];
        }
    }
    store.zero_grads();
}
