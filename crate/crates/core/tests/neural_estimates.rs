use adastack::envs::{make_passive_tmaze, TMazeConfig};
use adastack::memory::MemoryMode;
use adastack::neural::{grad_check, sample_episode, CheckLoss, NeuralAgent, PolicyNet, StackEncoder};
use adastack::oracle::{Oracle, TMazeModel, UniformPolicy};
use adastack::{JointAction, Mode, RngStream};

const GAMMA: f64 = 0.99;

#[test]
fn monte_carlo_returns_are_unbiased() {
    let mut rng = RngStream::new(0);
    let mut agent = NeuralAgent::new(StackEncoder::OneHot { alphabet: 4 }, 2, MemoryMode::AdaptiveStack, 4, &[16, 16, 16], &mut rng).unwrap();
    agent.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let mut env = make_passive_tmaze(TMazeConfig::passive(1, Mode::Episodic)).unwrap();
    let mut a = RngStream::new(1);
    let mut e = RngStream::new(2);
    let n = 10_000;
    let returns: Vec<f64> = (0..n)
        .map(|_| sample_episode(&agent, &mut env, &mut a, &mut e).unwrap().discounted_return(GAMMA))
        .collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let oracle = Oracle::new(&TMazeModel::passive(1), GAMMA).unwrap();
    let uniform = UniformPolicy {
        num_env_actions: 4,
        num_mem_actions: 2,
    };
    let v = oracle.evaluate(&uniform, 2).unwrap().start_value();
    assert!((mean - v).abs() < 3.0 * se, "mean {mean}, oracle {v}, se {se}");
}

#[test]
fn gradients_of_a_three_layer_network() {
    for seed in 0..3 {
        let mut rng = RngStream::new(seed);
        let net = PolicyNet::new(
            adastack::neural::NetShape {
                input: 8,
                hidden: vec![32; 3],
                env_out: 4,
                mem_out: 2,
            },
            &mut rng,
        )
        .unwrap();
        let mut x = vec![0.0; 8];
        x[rng.below(4)] = 1.0;
        x[4 + rng.below(4)] = 1.0;
        let losses = [
            CheckLoss::EnvLogProb(1),
            CheckLoss::MemLogProb(2),
            CheckLoss::JointLogProb(JointAction {
                env_action: 0,
                mem_action: 1,
            }),
            CheckLoss::ValueMse(-0.3),
        ];
        for l in losses {
            assert!(grad_check(&net, &x, l).unwrap() < 1e-4, "seed {seed} {l:?}");
        }
    }
}
