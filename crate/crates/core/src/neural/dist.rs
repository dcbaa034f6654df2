use crate::memory::JointAction;
use crate::rng::RngStream;
use crate::tabular::argmax;

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Gradient of the entropy with respect to the logits.
pub fn entropy_grad(probs: &[f64]) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

/// Gradient of `log softmax(logits)[a]` with respect to the logits.
pub fn log_prob_grad(probs: &[f64], a: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| f64::from(u8::from(j == a)) - p)
        .collect()
}

/// Draws the two heads independently; memory actions are 1-based.
pub fn sample_action(env_logits: &[f64], mem_logits: &[f64], rng: &mut RngStream) -> JointAction {
    let env_action = rng.categorical(&softmax(env_logits));
    let mem = rng.categorical(&softmax(mem_logits));
    JointAction {
        env_action,
        mem_action: mem + 1,
    }
}

/// The most probable action of each head.
pub fn mode_action(env_logits: &[f64], mem_logits: &[f64]) -> JointAction {
    JointAction {
        env_action: argmax(env_logits),
        mem_action: argmax(mem_logits) + 1,
    }
}

/// Log-probability of a joint action under independent heads.
pub fn joint_log_prob(env_logits: &[f64], mem_logits: &[f64], j: JointAction) -> f64 {
    log_softmax(env_logits)[j.env_action] + log_softmax(mem_logits)[j.mem_action - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..10)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn entropy_is_bounded(z in prop::collection::vec(-20.0f64..20.0, 1..10)) {
            let h = entropy(&softmax(&z));
            prop_assert!(h >= -1e-12 && h <= (z.len() as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn saturated_logit_dominates() {
        let mut rng = RngStream::new(0);
        let env = [0.0, 60.0, 0.0, 0.0];
        let hits = (0..10_000).filter(|_| sample_action(&env, &[0.0], &mut rng).env_action == 1).count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn uniform_logits_give_uniform_joint_frequencies() {
        let mut rng = RngStream::new(1);
        let n = 40_000;
        let mut counts = [[0usize; 3]; 4];
        for _ in 0..n {
            let j = sample_action(&[0.0; 4], &[0.0; 3], &mut rng);
            counts[j.env_action][j.mem_action - 1] += 1;
        }
        let expect = n as f64 / 12.0;
        let sd = (expect * (1.0 - 1.0 / 12.0)).sqrt();
        let mut chi2 = 0.0;
        for row in counts {
            for c in row {
                assert!((c as f64 - expect).abs() < 4.0 * sd);
                chi2 += (c as f64 - expect).powi(2) / expect;
            }
        }
        // 11 degrees of freedom, 0.1% critical value
        assert!(chi2 < 31.26, "chi2 = {chi2}");
    }

    #[test]
    fn heads_are_independent() {
        let mut rng = RngStream::new(2);
        let env = [0.3, -0.5, 1.0];
        let mem = [0.8, -0.2];
        let n = 100_000;
        let mut joint = [[0.0f64; 2]; 3];
        for _ in 0..n {
            let j = sample_action(&env, &mem, &mut rng);
            joint[j.env_action][j.mem_action - 1] += 1.0;
        }
        let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..2).map(|c| joint.iter().map(|r| r[c]).sum()).collect();
        let mut g = 0.0;
        for (r, row) in joint.iter().enumerate() {
            for (c, &o) in row.iter().enumerate() {
                let e = rows[r] * cols[c] / n as f64;
                g += 2.0 * o * (o / e).ln();
            }
        }
        // (3-1)(2-1) = 2 degrees of freedom, 1% critical value
        assert!(g < 9.21, "G = {g}");
    }

    #[test]
    fn gradients_of_log_prob_and_entropy() {
        let z = [0.2, -1.0, 0.7];
        let h = 1e-6;
        for a in 0..3 {
            let g = log_prob_grad(&softmax(&z), a);
            for j in 0..3 {
                let mut up = z;
                let mut dn = z;
                up[j] += h;
                dn[j] -= h;
                let fd = (log_softmax(&up)[a] - log_softmax(&dn)[a]) / (2.0 * h);
                assert_abs_diff_eq!(g[j], fd, epsilon = 1e-8);
            }
        }
        let g = entropy_grad(&softmax(&z));
        for j in 0..3 {
            let mut up = z;
            let mut dn = z;
            up[j] += h;
            dn[j] -= h;
            let fd = (entropy(&softmax(&up)) - entropy(&softmax(&dn))) / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn mode_and_joint_log_prob() {
        let j = mode_action(&[0.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!((j.env_action, j.mem_action), (1, 3));
        let lp = joint_log_prob(&[0.0, 0.0], &[0.0, 0.0, 0.0], j);
        assert_abs_diff_eq!(lp, -(6.0f64).ln(), epsilon = 1e-12);
    }
}
