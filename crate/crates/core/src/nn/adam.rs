use super::{Gradients, Layer, Mlp};
use crate::error::{Error, Result};

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Layer>,
    pub second_moment: Vec<Layer>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty added to the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let zeros: Vec<Layer> = net
            .layers()
            .iter()
            .map(|l| Layer::zeros(l.weights.ncols(), l.weights.nrows()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.first_moment.len() == net.layers().len()
            && self.first_moment.iter().zip(net.layers()).all(|(m, l)| {
                m.weights.shape() == l.weights.shape() && m.bias.len() == l.bias.len()
            })
    }
}

#[derive(Clone, Copy)]
struct Hyper {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    c1: f64,
    c2: f64,
}

fn update(param: &mut f64, grad: f64, m: &mut f64, v: &mut f64, h: Hyper) {
    let g = grad + h.weight_decay * *param;
    *m = h.beta1 * *m + (1.0 - h.beta1) * g;
    *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
    let m_hat = *m / h.c1;
    let v_hat = *v / h.c2;
    *param -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
}

/// One descent step on `net` along the loss gradients `grads`.
pub fn adam_step(state: &mut AdamState, net: &mut Mlp, grads: &Gradients) -> Result<()> {
    if !state.matches(net) || grads.layers.len() != net.layers().len() {
        return Err(Error::Dimension("optimizer state does not match network".into()));
    }
    for (g, l) in grads.layers.iter().zip(net.layers()) {
        if g.weights.shape() != l.weights.shape() || g.bias.len() != l.bias.len() {
            return Err(Error::Dimension("gradient does not match network".into()));
        }
    }
    state.step_count += 1;
    let h = Hyper {
        learning_rate: state.learning_rate,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
        weight_decay: state.weight_decay,
        c1: 1.0 - state.beta1.powi(state.step_count as i32),
        c2: 1.0 - state.beta2.powi(state.step_count as i32),
    };
    let AdamState { first_moment, second_moment, .. } = state;
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut first_moment[l], &mut second_moment[l], &grads.layers[l]);
        for i in 0..layer.weights.len() {
            update(&mut layer.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i], h);
        }
        for i in 0..layer.bias.len() {
            update(&mut layer.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i], h);
        }
    }
    Ok(())
}
