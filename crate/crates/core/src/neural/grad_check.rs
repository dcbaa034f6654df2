use super::dist::{log_prob_grad, log_softmax, softmax};
use super::mlp::PolicyNet;
use crate::error::Result;
use crate::memory::JointAction;

/// Scalar losses whose analytic gradients can be checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckLoss {
    /// Log-probability of a fixed environment action.
    EnvLogProb(usize),
    /// Log-probability of a fixed memory action (1-based).
    MemLogProb(usize),
    /// Joint log-probability of both heads.
    JointLogProb(JointAction),
    /// Squared error of the value head against a target.
    ValueMse(f64),
}

fn loss(net: &PolicyNet, x: &[f64], l: CheckLoss) -> Result<f64> {
    let f = net.forward(x)?;
    Ok(match l {
        CheckLoss::EnvLogProb(a) => log_softmax(&f.env_logits)[a],
        CheckLoss::MemLogProb(m) => log_softmax(&f.mem_logits)[m - 1],
        CheckLoss::JointLogProb(j) => log_softmax(&f.env_logits)[j.env_action] + log_softmax(&f.mem_logits)[j.mem_action - 1],
        CheckLoss::ValueMse(target) => (f.value - target).powi(2),
    })
}

/// Analytic gradient of `l` at input `x`.
pub fn analytic_gradient(net: &PolicyNet, x: &[f64], l: CheckLoss) -> Result<Vec<f64>> {
    let f = net.forward(x)?;
    let s = net.shape();
    let mut ge = vec![0.0; s.env_out];
    let mut gm = vec![0.0; s.mem_out];
    let mut gv = 0.0;
    match l {
        CheckLoss::EnvLogProb(a) => ge = log_prob_grad(&softmax(&f.env_logits), a),
        CheckLoss::MemLogProb(m) => gm = log_prob_grad(&softmax(&f.mem_logits), m - 1),
        CheckLoss::JointLogProb(j) => {
            ge = log_prob_grad(&softmax(&f.env_logits), j.env_action);
            gm = log_prob_grad(&softmax(&f.mem_logits), j.mem_action - 1);
        }
        CheckLoss::ValueMse(target) => gv = 2.0 * (f.value - target),
    }
    let mut grad = vec![0.0; net.num_params()];
    net.backward(&f, &ge, &gm, gv, &mut grad);
    Ok(grad)
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `1e-5`, over all parameters.
pub fn grad_check(net: &PolicyNet, x: &[f64], l: CheckLoss) -> Result<f64> {
    const H: f64 = 1e-5;
    let analytic = analytic_gradient(net, x, l)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let p = net.params()[i];
        probe.params_mut()[i] = p + H;
        let up = loss(&probe, x, l)?;
        probe.params_mut()[i] = p - H;
        let dn = loss(&probe, x, l)?;
        probe.params_mut()[i] = p;
        let n = (up - dn) / (2.0 * H);
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
    }
    Ok(worst)
}
