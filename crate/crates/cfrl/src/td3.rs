//! Twin Delayed DDPG.
//!
//! The trainer behind both the baseline policy and the counterfactual
//! generator: twin critics trained against the min of two smoothed target
//! critics, an actor updated every `policy_delay` iterations by the
//! deterministic policy gradient, and Polyak-averaged target networks.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvScheduler, EnvSpec, EnvState, Environment};
use crate::error::{io_at, Error, Result};
use crate::nn::{soft_update, Adam, Grads, Mlp, OutputMap};
use crate::seed::{stream_rng, substream};

/// One stored environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self { data: Vec::new(), capacity, next: 0, inserted: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Total insertions ever, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Uniform i.i.d. sample (with replacement) over current contents.
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Vec<Transition> {
        (0..n).map(|_| self.data[rng.random_range(0..self.data.len())].clone()).collect()
    }
}

/// TD3 hyperparameters. Noise scales (`explore_sigma`, `target_sigma`,
/// `target_clip`) are fractions of each action dimension's range, so one
/// setting works across environments with different action boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Hyper {
    pub gamma: f64,
    /// Soft-update rate for target networks.
    pub eta: f64,
    /// Actor (and target) update period in critic iterations.
    pub policy_delay: u64,
    pub explore_sigma: f64,
    pub target_sigma: f64,
    pub target_clip: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Gradient iterations per `update` call.
    pub gradient_steps: usize,
    pub buffer_capacity: usize,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
    /// Random-action transitions collected before learning starts.
    pub warmup: usize,
    /// L2 penalty on the actor's output-layer pre-activations. Keeps the
    /// squashed policy head out of the flat tails of its tanh, where the
    /// critic's gradient vanishes and the actor would freeze at an action
    /// bound no matter what the critic has since learned.
    pub actor_preact_l2: f64,
    /// Environment steps between `update` calls in `train_baseline`.
    pub update_every: usize,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            eta: 0.005,
            policy_delay: 2,
            explore_sigma: 0.1,
            target_sigma: 0.2,
            target_clip: 0.5,
            batch_size: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gradient_steps: 1,
            buffer_capacity: 200_000,
            hidden: vec![256, 256],
            warmup: 1000,
            actor_preact_l2: 0.01,
            update_every: 1,
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.eta)
            && self.policy_delay >= 1
            && self.explore_sigma >= 0.0
            && self.target_sigma >= 0.0
            && self.target_clip >= 0.0
            && self.batch_size >= 1
            && self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && self.buffer_capacity >= 1
            && !self.hidden.is_empty()
            && self.hidden.iter().all(|&h| h >= 1)
            && self.actor_preact_l2 >= 0.0
            && self.update_every >= 1;
        if !ok {
            return Err(Error::Config("invalid TD3 hyperparameters".into()));
        }
        Ok(())
    }
}

/// Losses from one `update` call.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Mean critic MSE over the iterations performed.
    pub critic_loss: f64,
    /// Mean actor objective (negated Q) over actor iterations, if any ran.
    pub actor_loss: Option<f64>,
    pub iterations: usize,
    /// True when the buffer was too small and nothing happened.
    pub skipped: bool,
}

/// Row appended to the training-loss CSV.
#[derive(Debug, Clone)]
pub struct LossRow {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

pub struct Td3Agent {
    spec: EnvSpec,
    hyper: Td3Hyper,
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target_actor: Mlp,
    target_critic1: Mlp,
    target_critic2: Mlp,
    opt_actor: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    pub buffer: ReplayBuffer,
    update_count: u64,
    rng: ChaCha12Rng,
}

impl Td3Agent {
    pub fn new(spec: &EnvSpec, hyper: Td3Hyper, seed: u64) -> Result<Self> {
        spec.validate()?;
        hyper.validate()?;
        let mut rng = stream_rng(seed, "td3-init", 0);
        let mut actor_sizes = vec![spec.state_dim];
        actor_sizes.extend(&hyper.hidden);
        actor_sizes.push(spec.action_dim);
        let actor = Mlp::new(
            &actor_sizes,
            OutputMap::Bounded { low: spec.action_low.clone(), high: spec.action_high.clone() },
            &mut rng,
        )?;
        let mut critic_sizes = vec![spec.state_dim + spec.action_dim];
        critic_sizes.extend(&hyper.hidden);
        critic_sizes.push(1);
        let critic1 = Mlp::new(&critic_sizes, OutputMap::Identity, &mut rng)?;
        let critic2 = Mlp::new(&critic_sizes, OutputMap::Identity, &mut rng)?;
        let (opt_actor, opt_critic1, opt_critic2) =
            (Adam::for_mlp(&actor), Adam::for_mlp(&critic1), Adam::for_mlp(&critic2));
        Ok(Self {
            spec: spec.clone(),
            target_actor: actor.clone(),
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            actor,
            critic1,
            critic2,
            opt_actor,
            opt_critic1,
            opt_critic2,
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            hyper,
            update_count: 0,
            rng: stream_rng(seed, "td3-noise", 0),
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn hyper(&self) -> &Td3Hyper {
        &self.hyper
    }

    pub fn set_hyper(&mut self, hyper: Td3Hyper) -> Result<()> {
        hyper.validate()?;
        self.hyper = hyper;
        Ok(())
    }

    /// Immutable snapshot of the current policy.
    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    /// Q-value of the first online critic (diagnostics).
    pub fn q1(&self, s: &[f64], a: &[f64]) -> f64 {
        self.critic1.forward(&concat(s, a))[0]
    }

    /// Policy action. With `explore`, adds Gaussian noise scaled to the
    /// action range, then clips into the bounds; otherwise returns the
    /// deterministic policy output exactly.
    pub fn select_action(&mut self, s: &[f64], explore: bool) -> Vec<f64> {
        let mut a = self.actor.forward(s);
        if explore && self.hyper.explore_sigma > 0.0 {
            for ((ai, low), high) in a.iter_mut().zip(&self.spec.action_low).zip(&self.spec.action_high) {
                let std = self.hyper.explore_sigma * (high - low);
                let noise = Normal::new(0.0, std).expect("validated sigma").sample(&mut self.rng);
                *ai = (*ai + noise).clamp(*low, *high);
            }
        }
        a
    }

    /// TD targets `y = r + gamma * (1 - done) * min_j Q'_j(s', a~)` with
    /// target-policy smoothing on `a~`.
    pub fn compute_target(&mut self, batch: &[Transition]) -> Vec<f64> {
        let h = &self.hyper;
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return t.r;
                }
                let mut a = self.target_actor.forward(&t.s_next);
                for ((ai, low), high) in
                    a.iter_mut().zip(&self.spec.action_low).zip(&self.spec.action_high)
                {
                    let range = high - low;
                    if h.target_sigma > 0.0 {
                        let eps = Normal::new(0.0, h.target_sigma * range)
                            .expect("validated sigma")
                            .sample(&mut self.rng)
                            .clamp(-h.target_clip * range, h.target_clip * range);
                        *ai += eps;
                    }
                    *ai = ai.clamp(*low, *high);
                }
                let sa = concat(&t.s_next, &a);
                let q = self.target_critic1.forward(&sa)[0].min(self.target_critic2.forward(&sa)[0]);
                t.r + h.gamma * q
            })
            .collect()
    }

    /// One critic-only gradient iteration on a caller-supplied batch:
    /// computes targets, regresses both critics toward them, and returns the
    /// mean squared error before the step. Used inside [`Td3Agent::update`]
    /// and directly by diagnostics that need a frozen batch.
    pub fn update_critics(&mut self, batch: &[Transition]) -> f64 {
        let mut g1 = self.critic1.zero_grads();
        let mut g2 = self.critic2.zero_grads();
        self.critic_iteration(batch, &mut g1, &mut g2)
    }

    fn critic_iteration(&mut self, batch: &[Transition], g1: &mut Grads, g2: &mut Grads) -> f64 {
        let inv_n = 1.0 / batch.len() as f64;
        let targets = self.compute_target(batch);
        g1.zero();
        g2.zero();
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(&targets) {
            let sa = concat(&t.s, &t.a);
            for (critic, grads) in [(&self.critic1, &mut *g1), (&self.critic2, &mut *g2)] {
                let trace = critic.forward_trace(&sa);
                let err = trace.output()[0] - y;
                loss += err * err * inv_n * 0.5; // average the two critics
                critic.backward(&trace, &[2.0 * err * inv_n], grads);
            }
        }
        self.opt_critic1.step(&mut self.critic1, g1, self.hyper.critic_lr);
        self.opt_critic2.step(&mut self.critic2, g2, self.hyper.critic_lr);
        loss
    }

    /// Run `gradient_steps` TD3 iterations. Each iteration updates both
    /// critics toward the targets; every `policy_delay`-th iteration also
    /// updates the actor and soft-updates all three target networks.
    pub fn update(&mut self) -> UpdateReport {
        if self.buffer.len() < self.hyper.batch_size {
            log::warn!(
                "skipping update: buffer {} < batch size {}",
                self.buffer.len(),
                self.hyper.batch_size
            );
            return UpdateReport { critic_loss: 0.0, actor_loss: None, iterations: 0, skipped: true };
        }
        let n = self.hyper.batch_size;
        let inv_n = 1.0 / n as f64;
        let mut critic_loss_sum = 0.0;
        let mut actor_loss_sum = 0.0;
        let mut actor_iters = 0usize;
        let mut g1 = self.critic1.zero_grads();
        let mut g2 = self.critic2.zero_grads();
        let mut ga = self.actor.zero_grads();
        // Parameter gradients of the critic during the actor step are
        // discarded; only the input gradient is used.
        let mut scratch = self.critic1.zero_grads();

        for _ in 0..self.hyper.gradient_steps {
            let batch = self.buffer.sample(&mut self.rng, n);
            critic_loss_sum += self.critic_iteration(&batch, &mut g1, &mut g2);
            self.update_count += 1;

            if self.update_count % self.hyper.policy_delay == 0 {
                ga.zero();
                let mut obj = 0.0;
                let kappa = self.hyper.actor_preact_l2;
                for t in &batch {
                    let atrace = self.actor.forward_trace(&t.s);
                    let sa = concat(&t.s, atrace.output());
                    let ctrace = self.critic1.forward_trace(&sa);
                    obj -= ctrace.output()[0] * inv_n;
                    // d(-Q)/da, chained into the actor. Maximizing Q means
                    // descending on -Q.
                    let dsa = self.critic1.backward(&ctrace, &[-inv_n], &mut scratch);
                    self.actor.backward(&atrace, &dsa[self.spec.state_dim..], &mut ga);
                    if kappa > 0.0 {
                        // Saturation guard: kappa/2 * ||z||^2 on the output
                        // pre-activations, injected below the tanh so the
                        // pull survives where d(action)/dz is ~ 0.
                        let z = self.actor.output_preactivations(&atrace);
                        let gz: Vec<f64> = z.iter().map(|zi| kappa * zi * inv_n).collect();
                        obj += 0.5 * kappa * z.iter().map(|zi| zi * zi).sum::<f64>() * inv_n;
                        self.actor.backward_preact(&atrace, &gz, &mut ga);
                    }
                }
                self.opt_actor.step(&mut self.actor, &ga, self.hyper.actor_lr);
                soft_update(&mut self.target_actor, &self.actor, self.hyper.eta);
                soft_update(&mut self.target_critic1, &self.critic1, self.hyper.eta);
                soft_update(&mut self.target_critic2, &self.critic2, self.hyper.eta);
                actor_loss_sum += obj;
                actor_iters += 1;
            }
        }
        UpdateReport {
            critic_loss: critic_loss_sum / self.hyper.gradient_steps as f64,
            actor_loss: (actor_iters > 0).then(|| actor_loss_sum / actor_iters as f64),
            iterations: self.hyper.gradient_steps,
            skipped: false,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: 1,
            spec: self.spec.clone(),
            hyper: self.hyper.clone(),
            actor: self.actor.clone(),
            critic1: self.critic1.clone(),
            critic2: self.critic2.clone(),
            target_actor: self.target_actor.clone(),
            target_critic1: self.target_critic1.clone(),
            target_critic2: self.target_critic2.clone(),
            opt_actor: self.opt_actor.clone(),
            opt_critic1: self.opt_critic1.clone(),
            opt_critic2: self.opt_critic2.clone(),
            update_count: self.update_count,
        };
        let file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_at(path, e))?);
        serde_json::to_writer(file, &ckpt)?;
        Ok(())
    }

    /// Load a checkpoint. The replay buffer starts empty and the noise
    /// stream is reseeded from `seed`.
    pub fn load(path: &std::path::Path, seed: u64) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| io_at(path, e))?);
        let ckpt: Checkpoint = serde_json::from_reader(file)?;
        if ckpt.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        ckpt.spec.validate()?;
        ckpt.hyper.validate()?;
        Ok(Self {
            buffer: ReplayBuffer::new(ckpt.hyper.buffer_capacity),
            spec: ckpt.spec,
            hyper: ckpt.hyper,
            actor: ckpt.actor,
            critic1: ckpt.critic1,
            critic2: ckpt.critic2,
            target_actor: ckpt.target_actor,
            target_critic1: ckpt.target_critic1,
            target_critic2: ckpt.target_critic2,
            opt_actor: ckpt.opt_actor,
            opt_critic1: ckpt.opt_critic1,
            opt_critic2: ckpt.opt_critic2,
            update_count: ckpt.update_count,
            rng: stream_rng(seed, "td3-noise", 1),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    spec: EnvSpec,
    hyper: Td3Hyper,
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target_actor: Mlp,
    target_critic1: Mlp,
    target_critic2: Mlp,
    opt_actor: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    update_count: u64,
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.len() + a.len());
    v.extend_from_slice(s);
    v.extend_from_slice(a);
    v
}

/// Standard online TD3 over a (possibly multi-variant) scheduler: collect
/// one transition per step from the active variant, then update on the
/// configured cadence. Episodes pause while other variants take their round
/// and resume when the rotation returns.
pub fn train_baseline(
    sched: &mut EnvScheduler,
    hyper: Td3Hyper,
    seed: u64,
    total_steps: usize,
    mut on_loss: impl FnMut(LossRow),
) -> Result<Td3Agent> {
    let spec = sched.env(0).spec().clone();
    for i in 1..sched.len() {
        let other = sched.env(i).spec();
        if other.state_dim != spec.state_dim || other.action_dim != spec.action_dim {
            return Err(Error::Config("scheduler variants must share state/action dims".into()));
        }
    }
    let mut agent = Td3Agent::new(&spec, hyper, substream(seed, "agent", 0))?;
    let mut action_rng = stream_rng(seed, "warmup-actions", 0);
    let mut episode_counter = 0u64;
    let new_episode = |sched: &mut EnvScheduler, idx: usize, counter: &mut u64| -> EnvState {
        let s = sched.env_mut(idx).reset(substream(seed, "episode", *counter));
        *counter += 1;
        s
    };

    // Per-variant cursor: current state and steps taken in its episode.
    let mut cursors: Vec<Option<(EnvState, usize)>> = (0..sched.len()).map(|_| None).collect();

    for step in 0..total_steps {
        let idx = sched.next_step();
        let (state, ep_len) = match cursors[idx].take() {
            Some(c) => c,
            None => (new_episode(sched, idx, &mut episode_counter), 0),
        };
        let action = if agent.buffer.len() < agent.hyper.warmup {
            let spec = sched.env(idx).spec();
            spec.action_low
                .iter()
                .zip(&spec.action_high)
                .map(|(l, h)| action_rng.random_range(*l..*h))
                .collect()
        } else {
            agent.select_action(&state.observable, true)
        };
        let result = sched.env_mut(idx).step(&action)?;
        agent.buffer.push(Transition {
            s: state.observable,
            a: action,
            r: result.reward,
            s_next: result.next_state.observable.clone(),
            done: result.done,
        });
        let horizon = sched.env(idx).spec().horizon;
        cursors[idx] = if result.done || ep_len + 1 >= horizon {
            None
        } else {
            Some((result.next_state, ep_len + 1))
        };

        if agent.buffer.len() >= agent.hyper.warmup && (step + 1) % agent.hyper.update_every == 0 {
            let report = agent.update();
            if !report.skipped {
                if !report.critic_loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "critic loss became non-finite at step {step}"
                    )));
                }
                on_loss(LossRow {
                    step: step + 1,
                    critic_loss: report.critic_loss,
                    actor_loss: report.actor_loss,
                });
            }
        }
    }
    Ok(agent)
}

/// Mean undiscounted episode return of the deterministic policy.
pub fn evaluate_policy(
    agent: &mut Td3Agent,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for ep in 0..episodes {
        let mut state = env.reset(substream(seed, "eval-episode", ep as u64));
        for _ in 0..env.spec().horizon {
            let action = agent.select_action(&state.observable, false);
            let r = env.step(&action)?;
            total += r.reward;
            state = r.next_state;
            if r.done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}
