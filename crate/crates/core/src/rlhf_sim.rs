//! One-step bandit model of RLHF policy updates: advantage-driven logit
//! updates, a KL-regularized variant and a clipped-ratio (PPO-style) rule.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_float;
use crate::rng::seeded;
use crate::syntactic::{entropy_bits, softmax};

const SAMPLING_STREAM: u64 = 0x5151;
const PROB_SUM_TOL: f64 = 1e-9;

pub const JEEPITI: &str = "Jeepiti";
pub const CHATS_AND_GIGGLES: &str = "Chats and Giggles";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTask {
    pub actions: Vec<String>,
    /// Reward per action, aligned with `actions`.
    pub rewards: Vec<f64>,
    pub gamma: f64,
}

impl BanditTask {
    pub fn new(actions: &[(&str, f64)], gamma: f64) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::invalid("a bandit task needs at least 2 actions"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma {gamma} outside [0,1]")));
        }
        if actions.iter().any(|(_, r)| !r.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        let names: Vec<String> = actions.iter().map(|(a, _)| a.to_string()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::invalid("duplicate action names"));
        }
        Ok(BanditTask {
            actions: names,
            rewards: actions.iter().map(|(_, r)| *r).collect(),
            gamma,
        })
    }

    /// Two chatbot names rewarded 1.0 and 0.4.
    pub fn chatbot_names() -> Self {
        Self::new(&[(JEEPITI, 1.0), (CHATS_AND_GIGGLES, 0.4)], 1.0).expect("valid task")
    }

    pub fn index_of(&self, action: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::invalid(format!("unknown action {action:?}")))
    }

    pub fn reward(&self, action: &str) -> Result<f64> {
        Ok(self.rewards[self.index_of(action)?])
    }

    fn best_action(&self) -> usize {
        argmax(&self.rewards)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub actions: Vec<String>,
    pub logits: Vec<f64>,
    pub value_estimate: f64,
}

impl PolicyState {
    /// Zero logits and a zero value estimate.
    pub fn uniform(actions: &[String]) -> Self {
        PolicyState {
            actions: actions.to_vec(),
            logits: vec![0.0; actions.len()],
            value_estimate: 0.0,
        }
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn prob(&self, action: &str) -> Result<f64> {
        let i = self.index_of(action)?;
        Ok(self.probs()[i])
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.probs())
    }

    fn index_of(&self, action: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::invalid(format!("unknown action {action:?}")))
    }
}

/// `(reward + gamma * v_next) - v_current`.
pub fn advantage(reward: f64, gamma: f64, v_next: f64, v_current: f64) -> f64 {
    (reward + gamma * v_next) - v_current
}

/// Adds `adv` to the logit of `action`.
pub fn naive_policy_update(policy: &PolicyState, action: &str, adv: f64) -> Result<PolicyState> {
    let i = policy.index_of(action)?;
    let mut next = policy.clone();
    next.logits[i] += adv;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueRule {
    /// The value estimate becomes the last reward.
    #[default]
    LastReward,
    /// `v <- v + alpha * (reward - v)`.
    Ema { alpha: f64 },
}

pub fn value_update(policy: &PolicyState, reward: f64) -> PolicyState {
    value_update_with(policy, reward, ValueRule::LastReward)
}

pub fn value_update_with(policy: &PolicyState, reward: f64, rule: ValueRule) -> PolicyState {
    let mut next = policy.clone();
    next.value_estimate = match rule {
        ValueRule::LastReward => reward,
        ValueRule::Ema { alpha } => policy.value_estimate + alpha * (reward - policy.value_estimate),
    };
    next
}

/// `sum p (ln p - ln q)` in nats, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi < 0.0 || qi < 0.0 || !pi.is_finite() || !qi.is_finite() {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::Numerical("infinite divergence".into()));
        }
        kl += pi * (pi.ln() - qi.ln());
    }
    Ok(kl.max(0.0))
}

/// `r_combined - beta * KL(pi || pi0)`.
pub fn kl_penalized_reward(r_combined: f64, pi: &[f64], pi0: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be non-negative")));
    }
    Ok(r_combined - beta * kl_divergence(pi, pi0)?)
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn ppo_clip_objective(ratio: f64, adv: f64, epsilon: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    /// Add the advantage to the chosen action's logit.
    Naive,
    /// Several ascent steps on the clipped surrogate for the sampled action.
    /// Each step adds `lr * adv * ratio` to the chosen logit until the
    /// clipped branch becomes active, where the surrogate's gradient is zero.
    PpoClip { epsilon: f64, lr: f64, epochs: usize },
    /// Reward shaped by `-beta * ln(pi(a) / pi_ref(a))`, the per-sample
    /// estimator of `beta * KL(pi || pi_ref)`, evaluated at the updated
    /// policy. `reference` defaults to the initial policy.
    KlPenalty {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
    },
}

impl UpdateRule {
    pub fn ppo(epsilon: f64) -> Self {
        UpdateRule::PpoClip {
            epsilon,
            lr: 1.0,
            epochs: 4,
        }
    }

    pub fn kl(beta: f64) -> Self {
        UpdateRule::KlPenalty { beta, reference: None }
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        match self {
            UpdateRule::Naive => Ok(()),
            UpdateRule::PpoClip { epsilon, lr, epochs } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::invalid(format!("epsilon {epsilon} outside (0,1)")));
                }
                if !(*lr > 0.0 && lr.is_finite()) || *epochs == 0 {
                    return Err(Error::invalid("lr must be positive and epochs at least 1"));
                }
                Ok(())
            }
            UpdateRule::KlPenalty { beta, reference } => {
                if !(*beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::invalid(format!("beta {beta} must be non-negative")));
                }
                if let Some(r) = reference {
                    if r.len() != n_actions || r.iter().any(|p| !(*p > 0.0)) {
                        return Err(Error::invalid("reference policy must be strictly positive over all actions"));
                    }
                    if (r.iter().sum::<f64>() - 1.0).abs() > PROB_SUM_TOL {
                        return Err(Error::invalid("reference policy must sum to 1"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Naive => "naive",
            UpdateRule::PpoClip { .. } => "ppo_clip",
            UpdateRule::KlPenalty { .. } => "kl_penalty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    /// Sample from the current policy.
    #[default]
    Sample,
    /// Most probable action; ties go to the higher reward, then the earlier action.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub t: usize,
    pub action: String,
    pub reward: f64,
    /// Reward after shaping (equal to `reward` except under the KL rule).
    pub shaped_reward: f64,
    pub advantage: f64,
    /// Value estimate after the step.
    pub value: f64,
    /// Policy after the step, aligned with the task's actions.
    pub probs: Vec<f64>,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub actions: Vec<String>,
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub initial_value: f64,
    pub initial_probs: Vec<f64>,
    pub entries: Vec<TrajectoryEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TrajectoryLog {
    fn new(policy: &PolicyState, rule: &str, seed: Option<u64>) -> Self {
        TrajectoryLog {
            actions: policy.actions.clone(),
            rule: rule.to_string(),
            seed,
            initial_value: policy.value_estimate,
            initial_probs: policy.probs(),
            entries: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Probability of `action` at t = 0, 1, ..., n.
    pub fn prob_series(&self, action: &str) -> Result<Vec<f64>> {
        let i = self
            .actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::invalid(format!("unknown action {action:?}")))?;
        Ok(std::iter::once(self.initial_probs[i])
            .chain(self.entries.iter().map(|e| e.probs[i]))
            .collect())
    }

    pub fn advantages(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.advantage).collect()
    }

    pub fn entropy_series(&self) -> Vec<f64> {
        std::iter::once(entropy_bits(&self.initial_probs))
            .chain(self.entries.iter().map(|e| e.entropy_bits))
            .collect()
    }

    pub fn final_probs(&self) -> &[f64] {
        self.entries.last().map_or(&self.initial_probs, |e| &e.probs)
    }

    /// Columns: t, action, reward, shaped_reward, advantage, value, one
    /// `p_<action>` per action, entropy_bits. Row t=0 is the initial state.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header: Vec<String> = ["t", "action", "reward", "shaped_reward", "advantage", "value"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.actions.iter().map(|a| format!("p_{a}")));
        header.push("entropy_bits".into());
        w.write_record(&header).map_err(csv_err)?;

        let mut row = vec!["0".to_string(), String::new(), String::new(), String::new(), String::new()];
        row.push(fmt_float(self.initial_value));
        row.extend(self.initial_probs.iter().map(|p| fmt_float(*p)));
        row.push(fmt_float(entropy_bits(&self.initial_probs)));
        w.write_record(&row).map_err(csv_err)?;
        for e in &self.entries {
            let mut row = vec![
                e.t.to_string(),
                e.action.clone(),
                fmt_float(e.reward),
                fmt_float(e.shaped_reward),
                fmt_float(e.advantage),
                fmt_float(e.value),
            ];
            row.extend(e.probs.iter().map(|p| fmt_float(*p)));
            row.push(fmt_float(e.entropy_bits));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL || probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical(format!("policy probabilities sum to {s}")));
    }
    Ok(())
}

/// One advantage/update/value step. Returns the new policy and the log entry.
fn step(
    task: &BanditTask,
    policy: &PolicyState,
    a: usize,
    rule: &UpdateRule,
    reference: &[f64],
    value_rule: ValueRule,
    t: usize,
) -> Result<(PolicyState, TrajectoryEntry)> {
    let reward = task.rewards[a];
    let action = &task.actions[a];
    let (next, shaped, adv) = match rule {
        UpdateRule::Naive => {
            let adv = advantage(reward, task.gamma, 0.0, policy.value_estimate);
            (naive_policy_update(policy, action, adv)?, reward, adv)
        }
        UpdateRule::PpoClip { epsilon, lr, epochs } => {
            let adv = advantage(reward, task.gamma, 0.0, policy.value_estimate);
            let old = policy.probs()[a];
            let mut next = policy.clone();
            for _ in 0..*epochs {
                let ratio = next.probs()[a] / old;
                let clipped = (adv > 0.0 && ratio > 1.0 + epsilon) || (adv < 0.0 && ratio < 1.0 - epsilon);
                if clipped {
                    break;
                }
                next.logits[a] += lr * adv * ratio;
            }
            (next, reward, adv)
        }
        UpdateRule::KlPenalty { beta, .. } => {
            let adv = kl_implicit_step(policy, a, reward, *beta, reference[a], task.gamma)?;
            let next = naive_policy_update(policy, action, adv)?;
            let shaped = reward - beta * (next.probs()[a].ln() - reference[a].ln());
            (next, shaped, adv)
        }
    };
    let next = value_update_with(&next, shaped, value_rule);
    let probs = next.probs();
    check_probs(&probs)?;
    let entry = TrajectoryEntry {
        t,
        action: action.clone(),
        reward,
        shaped_reward: shaped,
        advantage: adv,
        value: next.value_estimate,
        entropy_bits: entropy_bits(&probs),
        probs,
    };
    Ok((next, entry))
}

/// Solves `d = r - beta * ln(pi_d(a) / ref_a) - v` for the logit step `d`,
/// where `pi_d` is the policy after adding `d` to logit `a`. The left side
/// minus the right is strictly increasing in `d`, so bisection finds the
/// unique root. Evaluating the penalty at the updated policy keeps large
/// `beta` from overshooting.
fn kl_implicit_step(policy: &PolicyState, a: usize, reward: f64, beta: f64, ref_a: f64, gamma: f64) -> Result<f64> {
    let v = policy.value_estimate;
    let target = advantage(reward, gamma, 0.0, v);
    if beta == 0.0 {
        return Ok(target);
    }
    let log_pi = |d: f64| {
        let mut l = policy.logits.clone();
        l[a] += d;
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + l.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        l[a] - lse
    };
    let f = |d: f64| d - target + beta * (log_pi(d) - ref_a.ln());
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut guard = 0;
    while f(lo) > 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numerical("kl step bracket not found".into()));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numerical("kl step bracket not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The fixed four-step chatbot-name trajectory: Jeepiti, Chats and Giggles
/// twice, then Jeepiti, from uniform logits and a zero value estimate.
pub fn run_table1() -> TrajectoryLog {
    let task = BanditTask::chatbot_names();
    let mut policy = PolicyState::uniform(&task.actions);
    let mut log = TrajectoryLog::new(&policy, "naive", None);
    let sequence = [0usize, 1, 1, 0];
    for (t, &a) in sequence.iter().enumerate() {
        let (next, entry) = step(&task, &policy, a, &UpdateRule::Naive, &[], ValueRule::LastReward, t + 1)
            .expect("two-action table steps are well defined");
        policy = next;
        log.entries.push(entry);
    }
    let final_p = log.entries[3].probs[0];
    log.notes.push(
        "Chats and Giggles is rewarded 0.4 at every step; a reward of 0.8 for it would contradict the advantages (0.4 + 0) - 1 = -0.6 and (0.4 + 0) - 0.4 = 0".into(),
    );
    log.notes.push(format!(
        "t=4: P(Jeepiti) = e^1.6 / (e^1.6 + e^-0.6) = {final_p:.4}; the often-quoted 0.93 does not follow from the logged advantages"
    ));
    log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub value_rule: ValueRule,
    pub selection: ActionSelection,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            value_rule: ValueRule::LastReward,
            selection: ActionSelection::Sample,
        }
    }
}

/// Runs `steps` sampled updates from uniform logits and a zero value estimate.
pub fn simulate(task: &BanditTask, rule: &UpdateRule, steps: usize, seed: u64) -> Result<TrajectoryLog> {
    simulate_with(task, rule, steps, seed, &SimOptions::default())
}

pub fn simulate_with(
    task: &BanditTask,
    rule: &UpdateRule,
    steps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<TrajectoryLog> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    rule.validate(task.actions.len())?;
    let mut policy = PolicyState::uniform(&task.actions);
    let reference = match rule {
        UpdateRule::KlPenalty { reference: Some(r), .. } => r.clone(),
        _ => policy.probs(),
    };
    let mut rng = seeded(seed, SAMPLING_STREAM);
    let mut log = TrajectoryLog::new(&policy, rule.name(), Some(seed));
    for t in 1..=steps {
        let probs = policy.probs();
        let a = match opts.selection {
            ActionSelection::Sample => sample_index(&probs, rng.random::<f64>()),
            ActionSelection::Greedy => greedy_index(&probs, &task.rewards),
        };
        let (next, entry) = step(task, &policy, a, rule, &reference, opts.value_rule, t)?;
        policy = next;
        log.entries.push(entry);
    }
    Ok(log)
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn greedy_index(probs: &[f64], rewards: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] || (probs[i] == probs[best] && rewards[i] > rewards[best]) {
            best = i;
        }
    }
    best
}

/// Summary of a many-seed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rule: String,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// Final probability of the highest-reward action, per seed.
    pub final_best_prob: Vec<f64>,
    pub final_entropy_bits: Vec<f64>,
    /// KL(final || reference) in nats, per seed.
    pub final_kl_to_reference: Vec<f64>,
}

/// Runs `simulate` for each seed on its own thread.
pub fn sweep(task: &BanditTask, rule: &UpdateRule, steps: usize, seeds: &[u64]) -> Result<(SweepSummary, Vec<TrajectoryLog>)> {
    let logs: Vec<Result<TrajectoryLog>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| s.spawn(move || simulate(task, rule, steps, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    });
    let logs = logs.into_iter().collect::<Result<Vec<_>>>()?;
    let best = task.best_action();
    let reference = match rule {
        UpdateRule::KlPenalty { reference: Some(r), .. } => r.clone(),
        _ => PolicyState::uniform(&task.actions).probs(),
    };
    let summary = SweepSummary {
        rule: rule.name().to_string(),
        steps,
        seeds: seeds.to_vec(),
        final_best_prob: logs.iter().map(|l| l.final_probs()[best]).collect(),
        final_entropy_bits: logs.iter().map(|l| entropy_bits(l.final_probs())).collect(),
        final_kl_to_reference: logs
            .iter()
            .map(|l| kl_divergence(l.final_probs(), &reference))
            .collect::<Result<_>>()?,
    };
    Ok((summary, logs))
}
