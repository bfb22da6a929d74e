//! Advantage actor-critic with separate actor and critic networks.
//!
//! The discrete head emits lateral (3) and longitudinal (4) logits whose
//! joint log-probability is the sum of the two log-softmaxes. The Gaussian
//! head emits means for two pre-squash actions with state-independent
//! log standard deviations; actions are the tanh of the sample.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};

pub const LAT_N: usize = 3;
pub const LON_N: usize = 4;
pub const CONT_N: usize = 2;
/// Floor on the Gaussian log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A2cConfig {
    pub gamma: f64,
    pub n_steps: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub hidden: [usize; 2],
    pub log_std_init: f64,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_steps: 5,
            learning_rate: 7e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            hidden: [64, 64],
            log_std_init: 0.0,
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", "must be in (0, 1]"));
        }
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be > 0"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden", "layer widths must be >= 1"));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(Error::param("max_grad_norm", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Discrete,
    Gaussian,
}

/// Action taken in a transition, as needed to score it under the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampledAction {
    Discrete {
        lat: usize,
        lon: usize,
    },
    /// Pre-squash Gaussian sample.
    Gaussian {
        u: [f64; CONT_N],
    },
}

/// One scored sample for the loss: the advantage is a fixed input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: SampledAction,
    pub ret: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: SampledAction,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub loss: LossTerms,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

fn categorical_entropy(logp: &[f64]) -> f64 {
    -logp.iter().map(|l| l.exp() * l).sum::<f64>()
}

/// Joint log-probability of `(lat, lon)` under the two logit heads.
pub fn joint_log_prob(lat_logits: &[f64], lon_logits: &[f64], lat: usize, lon: usize) -> f64 {
    log_softmax(lat_logits)[lat] + log_softmax(lon_logits)[lon]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub head: HeadKind,
    pub actor: Mlp,
    pub critic: Mlp,
    /// Gaussian head only.
    pub log_std: Vec<f64>,
}

impl ActorCritic {
    pub fn new(head: HeadKind, obs_dim: usize, cfg: &A2cConfig, rng: &mut impl Rng) -> Self {
        let [h1, h2] = cfg.hidden;
        let out = match head {
            HeadKind::Discrete => LAT_N + LON_N,
            HeadKind::Gaussian => CONT_N,
        };
        let g = 2f64.sqrt();
        Self {
            head,
            actor: Mlp::init(&[obs_dim, h1, h2, out], g, 0.01, rng),
            critic: Mlp::init(&[obs_dim, h1, h2, 1], g, 1.0, rng),
            log_std: match head {
                HeadKind::Discrete => Vec::new(),
                HeadKind::Gaussian => vec![cfg.log_std_init; CONT_N],
            },
        }
    }

    /// All-zero weights (uniform heads, zero value).
    pub fn zeros(head: HeadKind, obs_dim: usize, cfg: &A2cConfig) -> Self {
        let [h1, h2] = cfg.hidden;
        let out = match head {
            HeadKind::Discrete => LAT_N + LON_N,
            HeadKind::Gaussian => CONT_N,
        };
        Self {
            head,
            actor: Mlp::zeros(&[obs_dim, h1, h2, out]),
            critic: Mlp::zeros(&[obs_dim, h1, h2, 1]),
            log_std: match head {
                HeadKind::Discrete => Vec::new(),
                HeadKind::Gaussian => vec![0.0; CONT_N],
            },
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.actor.params.len() + self.critic.params.len() + self.log_std.len()
    }

    /// Flat view order: actor, critic, log_std.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.actor.params);
        v.extend_from_slice(&self.critic.params);
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.actor.params.len());
        let (c, s) = rest.split_at(self.critic.params.len());
        self.actor.params.copy_from_slice(a);
        self.critic.params.copy_from_slice(c);
        self.log_std.copy_from_slice(s);
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let all = self
            .actor
            .params
            .iter_mut()
            .chain(self.critic.params.iter_mut())
            .chain(self.log_std.iter_mut());
        for (i, p) in all.enumerate() {
            f(i, p);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor
            .params
            .iter()
            .chain(&self.critic.params)
            .chain(&self.log_std)
            .all(|x| x.is_finite())
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.predict(obs)[0]
    }

    /// Discrete head: `(lateral logits, longitudinal logits, value)`.
    pub fn forward_discrete(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let out = self.actor.predict(obs);
        (
            out[..LAT_N].to_vec(),
            out[LAT_N..].to_vec(),
            self.value(obs),
        )
    }

    /// Gaussian head: `(means, effective log-stds, value)`.
    pub fn forward_gaussian(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        (
            self.actor.predict(obs),
            self.effective_log_std(),
            self.value(obs),
        )
    }

    pub fn effective_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.max(LOG_STD_MIN)).collect()
    }

    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> SampledAction {
        match self.head {
            HeadKind::Discrete => {
                let out = self.actor.predict(obs);
                SampledAction::Discrete {
                    lat: sample_categorical(&softmax(&out[..LAT_N]), rng),
                    lon: sample_categorical(&softmax(&out[LAT_N..]), rng),
                }
            }
            HeadKind::Gaussian => {
                let mean = self.actor.predict(obs);
                let ls = self.effective_log_std();
                let mut u = [0.0; CONT_N];
                for k in 0..CONT_N {
                    let eps: f64 = StandardNormal.sample(rng);
                    u[k] = mean[k] + ls[k].exp() * eps;
                }
                SampledAction::Gaussian { u }
            }
        }
    }

    /// Most likely action: per-head argmax, or the Gaussian mean.
    pub fn greedy(&self, obs: &[f64]) -> SampledAction {
        let out = self.actor.predict(obs);
        match self.head {
            HeadKind::Discrete => SampledAction::Discrete {
                lat: argmax(&out[..LAT_N]),
                lon: argmax(&out[LAT_N..]),
            },
            HeadKind::Gaussian => SampledAction::Gaussian {
                u: [out[0], out[1]],
            },
        }
    }

    /// Loss over `batch` and its gradient in flat-parameter order:
    /// `mean(-A·log π) + c_v·mean((R - V)²) - c_e·mean(H)`.
    pub fn loss_and_grad(&self, batch: &[Sample], cfg: &A2cConfig) -> (LossTerms, Vec<f64>) {
        let n_a = self.actor.params.len();
        let n_c = self.critic.params.len();
        let mut grad = vec![0.0; self.param_count()];
        let mut terms = LossTerms::default();
        if batch.is_empty() {
            return (terms, grad);
        }
        let inv = 1.0 / batch.len() as f64;
        let mut ca = MlpCache::default();
        let mut cc = MlpCache::default();
        let ls_raw = self.log_std.clone();
        let ls = self.effective_log_std();

        for s in batch {
            self.actor.forward(&s.obs, &mut ca);
            self.critic.forward(&s.obs, &mut cc);
            let out = ca.output().to_vec();
            let v = cc.output()[0];

            let mut d_out = vec![0.0; out.len()];
            match (self.head, s.action) {
                (HeadKind::Discrete, SampledAction::Discrete { lat, lon }) => {
                    for (range, idx) in [(0..LAT_N, lat), (LAT_N..LAT_N + LON_N, lon)] {
                        let z = &out[range.clone()];
                        let logp = log_softmax(z);
                        let h = categorical_entropy(&logp);
                        terms.policy_loss -= s.advantage * logp[idx] * inv;
                        terms.entropy += h * inv;
                        for (k, lp) in logp.iter().enumerate() {
                            let p = lp.exp();
                            let onehot = if k == idx { 1.0 } else { 0.0 };
                            // d(-A log p_idx)/dz_k = -A (1[k=idx] - p_k)
                            // d(-c_e H)/dz_k = c_e p_k (log p_k + H)
                            d_out[range.start + k] += inv
                                * (-s.advantage * (onehot - p) + cfg.entropy_coef * p * (lp + h));
                        }
                    }
                }
                (HeadKind::Gaussian, SampledAction::Gaussian { u }) => {
                    for k in 0..CONT_N {
                        let sigma = ls[k].exp();
                        let zk = (u[k] - out[k]) / sigma;
                        let logp = -0.5 * zk * zk - ls[k] - 0.5 * (2.0 * PI).ln();
                        let h = ls[k] + 0.5 * (1.0 + (2.0 * PI).ln());
                        terms.policy_loss -= s.advantage * logp * inv;
                        terms.entropy += h * inv;
                        // d log p / d mean = z / sigma
                        d_out[k] += inv * (-s.advantage * zk / sigma);
                        if ls_raw[k] > LOG_STD_MIN {
                            // d log p / d ls = z^2 - 1, d H / d ls = 1
                            grad[n_a + n_c + k] +=
                                inv * (-s.advantage * (zk * zk - 1.0) - cfg.entropy_coef);
                        }
                    }
                }
                _ => panic!("action kind does not match the policy head"),
            }
            self.actor.backward(&ca, &d_out, &mut grad[..n_a]);

            let err = s.ret - v;
            terms.value_loss += err * err * inv;
            let d_v = [-2.0 * cfg.value_coef * err * inv];
            self.critic.backward(&cc, &d_v, &mut grad[n_a..n_a + n_c]);
        }
        terms.total = terms.policy_loss + cfg.value_coef * terms.value_loss
            - cfg.entropy_coef * terms.entropy;
        (terms, grad)
    }

    pub fn loss(&self, batch: &[Sample], cfg: &A2cConfig) -> f64 {
        self.loss_and_grad(batch, cfg).0.total
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in z.iter().enumerate() {
        if *x > z[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if r < acc {
            return i;
        }
    }
    p.len() - 1
}

/// `n`-step bootstrapped returns; `bootstrap` is `V(s_n)` when the last
/// transition did not end its episode.
pub fn n_step_returns(rollout: &[Transition], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rollout.len()];
    let mut r = bootstrap;
    for (i, t) in rollout.iter().enumerate().rev() {
        r = if t.done {
            t.reward
        } else {
            t.reward + gamma * r
        };
        out[i] = r;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize) -> Self {
        Self {
            square_avg: vec![0.0; n],
        }
    }
}

/// One A2C step on a contiguous rollout from a single environment.
pub fn a2c_update(
    model: &mut ActorCritic,
    opt: &mut RmsProp,
    rollout: &[Transition],
    last_obs: Option<&[f64]>,
    cfg: &A2cConfig,
) -> Result<UpdateDiagnostics> {
    if rollout.is_empty() {
        return Ok(UpdateDiagnostics::default());
    }
    let bootstrap = match (rollout.last().map(|t| t.done), last_obs) {
        (Some(false), Some(o)) => model.value(o),
        _ => 0.0,
    };
    let returns = n_step_returns(rollout, bootstrap, cfg.gamma);
    let batch: Vec<Sample> = rollout
        .iter()
        .zip(&returns)
        .map(|(t, &ret)| Sample {
            obs: t.obs.clone(),
            action: t.action,
            ret,
            advantage: ret - model.value(&t.obs),
        })
        .collect();
    let (loss, mut grad) = model.loss_and_grad(&batch, cfg);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !loss.total.is_finite() || !grad_norm.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "policy {} value {} entropy {} grad_norm {} returns {:?}",
            loss.policy_loss, loss.value_loss, loss.entropy, grad_norm, returns
        )));
    }
    if grad_norm > cfg.max_grad_norm {
        let k = cfg.max_grad_norm / grad_norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    let (alpha, eps, lr) = (cfg.rms_alpha, cfg.rms_eps, cfg.learning_rate);
    let sq = &mut opt.square_avg;
    model.for_each_param_mut(|i, p| {
        sq[i] = alpha * sq[i] + (1.0 - alpha) * grad[i] * grad[i];
        *p -= lr * grad[i] / (sq[i].sqrt() + eps);
    });
    Ok(UpdateDiagnostics { loss, grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_uniform_heads() {
        let cfg = A2cConfig::default();
        let m = ActorCritic::zeros(HeadKind::Discrete, 4, &cfg);
        let (lat, lon, v) = m.forward_discrete(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(v, 0.0);
        assert!(softmax(&lat).iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert!(softmax(&lon).iter().all(|p| (p - 0.25).abs() < 1e-15));
        let s = Sample {
            obs: vec![0.0; 4],
            action: SampledAction::Discrete { lat: 0, lon: 0 },
            ret: 0.0,
            advantage: 0.0,
        };
        let (t, _) = m.loss_and_grad(&[s], &cfg);
        assert!((t.entropy - (3f64.ln() + 4f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_has_no_policy_gradient_term() {
        let cfg = A2cConfig {
            entropy_coef: 0.0,
            ..A2cConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = ActorCritic::new(HeadKind::Discrete, 4, &cfg, &mut rng);
        let batch: Vec<Sample> = (0..5)
            .map(|i| Sample {
                obs: vec![0.1 * i as f64, -0.2, 0.3, 0.5],
                action: SampledAction::Discrete {
                    lat: i % 3,
                    lon: i % 4,
                },
                ret: 0.7,
                advantage: 0.0,
            })
            .collect();
        let (t, g) = m.loss_and_grad(&batch, &cfg);
        assert_eq!(t.policy_loss, 0.0);
        assert!(g[..m.actor.params.len()].iter().all(|x| *x == 0.0));
        assert!(g[m.actor.params.len()..].iter().any(|x| *x != 0.0));
    }

    #[test]
    fn returns_bootstrap_and_cut_at_done() {
        let t = |r: f64, done: bool| Transition {
            obs: vec![],
            action: SampledAction::Discrete { lat: 0, lon: 0 },
            reward: r,
            done,
        };
        let r = n_step_returns(&[t(0.0, false), t(1.0, true), t(0.0, false)], 2.0, 0.5);
        assert_eq!(r, vec![0.5, 1.0, 1.0]);
    }

    #[test]
    fn log_std_floor_stops_gradient() {
        let cfg = A2cConfig::default();
        let mut m = ActorCritic::zeros(HeadKind::Gaussian, 3, &cfg);
        m.log_std = vec![-50.0, 0.0];
        assert_eq!(m.effective_log_std(), vec![LOG_STD_MIN, 0.0]);
        let s = Sample {
            obs: vec![0.0; 3],
            action: SampledAction::Gaussian { u: [0.0, 0.0] },
            ret: 0.0,
            advantage: 1.0,
        };
        let (t, g) = m.loss_and_grad(&[s], &cfg);
        assert!(t.entropy.is_finite());
        let n = m.actor.params.len() + m.critic.params.len();
        assert_eq!(g[n], 0.0);
        assert_ne!(g[n + 1], 0.0);
    }
}
