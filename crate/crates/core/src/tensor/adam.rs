use crate::error::TensorError;
use crate::params::ModelParams;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one entry per parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { first_moment: zeros.clone(), second_moment: zeros, step_count: 0 }
    }
}

/// One bias-corrected Adam update applied in place.
///
/// `grads` must hold a tensor for every trainable parameter, under the same name and shape.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    config: AdamConfig,
) -> Result<(), TensorError> {
    if state.first_moment.len() != params.len() {
        *state = AdamState::new(params);
    }
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(TensorError::NonFiniteGradient { name: name.to_string() });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for (i, (name, p)) in params.iter_mut().enumerate() {
        if !ModelParams::is_trainable(name) {
            continue;
        }
        let g = grads.get(name).ok_or_else(|| TensorError::UnknownParameter { name: name.to_string() })?;
        if g.shape() != p.shape() {
            return Err(TensorError::Shape {
                op: "adam_step",
                detail: format!("gradient for `{}` has shape {:?}, parameter {:?}", name, g.shape(), p.shape()),
            });
        }
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gv = gv as f64;
            let m_new = config.beta1 * *mv as f64 + (1.0 - config.beta1) * gv;
            let v_new = config.beta2 * *vv as f64 + (1.0 - config.beta2) * gv * gv;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let m_hat = m_new / bc1;
            let v_hat = v_new / bc2;
            *pv = (*pv as f64 - lr * m_hat / (v_hat.sqrt() + config.eps)) as f32;
        }
    }
    Ok(())
}
