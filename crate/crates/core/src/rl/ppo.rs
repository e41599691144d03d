//! Clipped-surrogate PPO with GAE and Adam over whole-episode sequences.

use crate::config::PpoConfig;
use crate::error::{Error, Result};
use crate::policy::network::{LstmState, OutputGrad, PolicyNetwork, StepInput};
use crate::policy::Transition;

/// One episode's decisions and rewards, aligned index by index.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub rewards: Vec<f64>,
}

impl Rollout {
    pub fn new(transitions: Vec<Transition>, rewards: Vec<f64>) -> Result<Self> {
        if transitions.len() != rewards.len() {
            return Err(Error::DimensionMismatch {
                expected: (transitions.len(), 1),
                actual: (rewards.len(), 1),
            });
        }
        Ok(Self {
            transitions,
            rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.value).collect()
    }
}

/// Generalised advantage estimates and returns (`advantage + value`).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub transitions: usize,
}

/// Loss of one batch and its gradient with respect to every parameter.
/// Advantages and returns are per transition, flattened in batch order.
pub fn ppo_loss_and_grad(
    net: &PolicyNetwork,
    batch: &[Rollout],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    grad: &mut [f64],
) -> Result<PpoStats> {
    let total: usize = batch.iter().map(Rollout::len).sum();
    if total == 0 {
        return Err(Error::EmptyInput("PPO batch"));
    }
    let scale = 1.0 / total as f64;
    let mut stats = PpoStats {
        transitions: total,
        ..Default::default()
    };
    let mut k = 0;
    for (ep, rollout) in batch.iter().enumerate() {
        let inputs: Vec<StepInput> = rollout.transitions.iter().map(Transition::input).collect();
        let (outs, cache) = net.forward_sequence(&inputs, &LstmState::default())?;
        let mut grads = Vec::with_capacity(outs.len());
        for (t, (out, tr)) in outs.iter().zip(&rollout.transitions).enumerate() {
            let (a, ret) = (advantages[k], returns[k]);
            k += 1;
            let logp = out.log_prob(tr.u);
            let ratio = (logp - tr.log_prob).exp();
            let lo = 1.0 - cfg.clip_epsilon;
            let hi = 1.0 + cfg.clip_epsilon;
            let unclipped = ratio * a;
            let clipped = ratio.clamp(lo, hi) * a;
            let surrogate = unclipped.min(clipped);
            let entropy = out.entropy();
            let value_err = out.value - ret;
            let loss_terms = [-surrogate, 0.5 * value_err * value_err, entropy];
            if !loss_terms.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss at episode {ep} step {t}: ratio={ratio} advantage={a} return={ret} \
                     value={} mean={:?} log_std={:?} u={:?} old_logp={}",
                    out.value, out.mean, out.log_std, tr.u, tr.log_prob
                )));
            }
            stats.policy_loss -= surrogate * scale;
            stats.value_loss += 0.5 * value_err * value_err * scale;
            stats.entropy += entropy * scale;
            stats.approx_kl += (tr.log_prob - logp) * scale;
            // the clipped branch is active (zero gradient) when it is the
            // strictly smaller term
            let active = unclipped <= clipped;
            if !active {
                stats.clip_fraction += scale;
            }
            let dlogp = if active { -a * ratio * scale } else { 0.0 };
            let mut g = OutputGrad {
                value: cfg.value_coeff * value_err * scale,
                ..Default::default()
            };
            for i in 0..2 {
                let sigma = out.log_std[i].exp();
                let z = (tr.u[i] - out.mean[i]) / sigma;
                g.mean[i] = dlogp * z / sigma;
                g.log_std[i] = dlogp * (z * z - 1.0) - cfg.entropy_coeff * scale;
            }
            grads.push(g);
        }
        net.backward_sequence(&cache, &grads, grad);
    }
    Ok(stats)
}

/// Holds Adam moments between updates.
#[derive(Clone, Debug)]
pub struct PpoTrainer {
    pub cfg: PpoConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl PpoTrainer {
    pub fn new(cfg: PpoConfig, param_count: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// Advantages (normalised) and returns for a batch.
    pub fn targets(&self, batch: &[Rollout]) -> (Vec<f64>, Vec<f64>) {
        let mut adv = Vec::new();
        let mut ret = Vec::new();
        for r in batch {
            // every episode end is treated as terminal
            let (a, rt) = gae(
                &r.rewards,
                &r.values(),
                0.0,
                self.cfg.gamma,
                self.cfg.gae_lambda,
            );
            adv.extend(a);
            ret.extend(rt);
        }
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std > 1e-8 {
            adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
        }
        (adv, ret)
    }

    /// Runs `epochs_per_batch` full-batch gradient steps. Returns statistics
    /// averaged over epochs.
    pub fn update(&mut self, net: &mut PolicyNetwork, batch: &[Rollout]) -> Result<PpoStats> {
        self.cfg.validate()?;
        let (adv, ret) = self.targets(batch);
        let mut grad = vec![0.0; net.param_count()];
        let mut avg = PpoStats::default();
        let epochs = self.cfg.epochs_per_batch as f64;
        for _ in 0..self.cfg.epochs_per_batch {
            grad.fill(0.0);
            let s = ppo_loss_and_grad(net, batch, &adv, &ret, &self.cfg, &mut grad)?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("gradient norm {norm}")));
            }
            if norm > self.cfg.max_grad_norm && self.cfg.max_grad_norm > 0.0 {
                let k = self.cfg.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
            self.adam_step(net.params_mut(), &grad);
            avg.policy_loss += s.policy_loss / epochs;
            avg.value_loss += s.value_loss / epochs;
            avg.entropy += s.entropy / epochs;
            avg.approx_kl += s.approx_kl / epochs;
            avg.clip_fraction += s.clip_fraction / epochs;
            avg.grad_norm += norm / epochs;
            avg.transitions = s.transitions;
        }
        Ok(avg)
    }

    fn adam_step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let lr = self.cfg.learning_rate;
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}
