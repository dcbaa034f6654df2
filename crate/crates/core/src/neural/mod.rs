//! Dual-head policy networks over the memory stack.
//!
//! The network reads the concatenated slot encodings of a stack and emits
//! logits for the environment action, logits for the memory action and a
//! state value. Gradients are derived by hand; [`grad_check`] compares them
//! against finite differences.
//!
//! Two trainers are provided: [`train_reinforce`] (Monte Carlo policy
//! gradient with an entropy bonus, episodic only) and [`train_ppo`]
//! (clipped surrogate with generalized advantage estimates). Both treat
//! the pair of actions as one joint action whose log-probability is the
//! sum of the two heads.

mod agent;
mod dist;
mod gae;
mod grad_check;
mod mlp;
mod optim;
mod ppo;
mod reinforce;

pub use agent::{encoder_for, Decision, NeuralAgent, MAGIC};
pub use dist::{entropy, joint_log_prob, log_softmax, mode_action, sample_action, softmax};
pub use gae::gae;
pub use grad_check::{analytic_gradient, grad_check, CheckLoss};
pub use mlp::{Forward, NetShape, PolicyNet, StackEncoder};
pub use optim::{clip_grad_norm, Adam};
pub use ppo::{ppo_loss_grad, ppo_update, train_ppo, LossParts, PpoConfig, Rollout};
pub use reinforce::{mean_entropy, reinforce_gradient, reinforce_update, sample_episode, train_reinforce, Episode, EpisodeStep, ReinforceConfig};
