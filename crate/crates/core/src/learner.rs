//! Tabular learners driven by a softmax behaviour policy.
//!
//! Every algorithm updates only the visited pair:
//!
//! - risk-sensitive: `Q(s,a) += α·(u(TD) − x0)`;
//! - expected utility: `Q(s,a) += α·(u(r) − x0 + γ·max Q(s′,·) − Q(s,a))`;
//! - standard: `Q(s,a) += α·TD`,
//!
//! with `TD = r + γ·max Q(s′,·) − Q(s,a)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{sample_transition, Mdp, MdpError, Transition};
use crate::par::{map_slice, Exec};
use crate::solver::{q_bounds_from, QTable};
use crate::valuation::{truncate, Shortfall, Utility, ValuationError};
use crate::{rng_from_seed, SimRng};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("non-finite {what} at step {step}")]
    Numeric { step: usize, what: &'static str },
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rsql,
    RsqlTruncated,
    Eu,
    StandardQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `α = 1/N(s,a)`, counting the current visit.
    InverseVisit,
    Constant { alpha: f64 },
}

impl Schedule {
    #[inline]
    pub fn alpha(&self, visits: u64) -> f64 {
        match self {
            Schedule::InverseVisit => 1.0 / visits as f64,
            Schedule::Constant { alpha } => *alpha,
        }
    }
}

/// Inputs of the truncated variant. Missing values default to the MDP's reward bound and the
/// grid-estimated slope.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub r_bar: Option<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub shortfall: Shortfall,
    pub gamma: f64,
    pub schedule: Schedule,
    pub beta: f64,
    pub steps: usize,
    pub seed: u64,
    pub start_state: usize,
    pub truncation: TruncationSpec,
    /// Clamp every updated entry into the `Q*` bounds.
    pub clamp_q: bool,
    pub q_init: f64,
    pub record_trace: bool,
    /// Store a copy of `Q` every this many steps when tracing.
    pub snapshot_every: Option<usize>,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, shortfall: Shortfall, gamma: f64) -> Self {
        Self {
            algorithm,
            shortfall,
            gamma,
            schedule: Schedule::InverseVisit,
            beta: 1.0,
            steps: 10_000,
            seed: 0,
            start_state: 0,
            truncation: TruncationSpec::default(),
            clamp_q: false,
            q_init: 0.0,
            record_trace: false,
            snapshot_every: None,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LearnError::Config(format!("γ must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(LearnError::Config(format!("β must be finite and ≥ 0, got {}", self.beta)));
        }
        if let Schedule::Constant { alpha } = self.schedule {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(LearnError::Config(format!("constant α must lie in (0, 1], got {alpha}")));
            }
        }
        if !self.q_init.is_finite() {
            return Err(LearnError::Config("initial Q must be finite".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(LearnError::Config("snapshot interval must be positive".into()));
        }
        Ok(())
    }
}

/// The per-transition update, with any truncation already applied to the utility.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRule {
    RiskSensitive { utility: Utility, x0: f64 },
    ExpectedUtility { utility: Utility, x0: f64 },
    Standard,
}

impl UpdateRule {
    /// Builds the rule for `cfg`, truncating the utility for [`Algorithm::RsqlTruncated`].
    pub fn for_config(cfg: &LearnerConfig, mdp: &Mdp) -> Result<Self, LearnError> {
        let sf = &cfg.shortfall;
        Ok(match cfg.algorithm {
            Algorithm::Rsql => UpdateRule::RiskSensitive { utility: sf.utility().clone(), x0: sf.acceptance_level() },
            Algorithm::RsqlTruncated => {
                let r_bar = cfg.truncation.r_bar.unwrap_or_else(|| mdp.reward_bound().0);
                let utility = truncate(sf.utility(), sf.acceptance_level(), r_bar, cfg.gamma, cfg.truncation.slope)?;
                UpdateRule::RiskSensitive { utility, x0: sf.acceptance_level() }
            }
            Algorithm::Eu => UpdateRule::ExpectedUtility { utility: sf.utility().clone(), x0: sf.acceptance_level() },
            Algorithm::StandardQ => UpdateRule::Standard,
        })
    }

    /// Applies one update to `q` and returns `(TD, applied change)`.
    #[inline]
    pub fn apply(&self, q: &mut QTable, tr: &Transition, gamma: f64, alpha: f64) -> (f64, f64) {
        let current = q.get(tr.state, tr.action);
        let target = gamma * q.max(tr.next_state);
        let td = tr.reward + target - current;
        let delta = match self {
            UpdateRule::RiskSensitive { utility, x0 } => alpha * (utility.value(td) - x0),
            UpdateRule::ExpectedUtility { utility, x0 } => alpha * (utility.value(tr.reward) - x0 + target - current),
            UpdateRule::Standard => alpha * td,
        };
        q.set(tr.state, tr.action, current + delta);
        (td, delta)
    }
}

/// `r + γ·max_a Q(s′, a) − Q(s, a)`.
pub fn td_error(q: &QTable, tr: &Transition, gamma: f64) -> Result<f64, LearnError> {
    check_pair(q, tr)?;
    Ok(tr.reward + gamma * q.max(tr.next_state) - q.get(tr.state, tr.action))
}

fn check_pair(q: &QTable, tr: &Transition) -> Result<(), LearnError> {
    if tr.state >= q.n_states() || tr.next_state >= q.n_states() {
        return Err(MdpError::StateOutOfRange(tr.state.max(tr.next_state)).into());
    }
    if !q.actions(tr.state).contains(&tr.action) {
        return Err(MdpError::Inadmissible { state: tr.state, action: tr.action }.into());
    }
    Ok(())
}

/// One risk-sensitive update with `α` taken from the schedule and `N`, counting this visit.
pub fn rsql_step(
    q: &mut QTable,
    tr: &Transition,
    utility: &Utility,
    x0: f64,
    gamma: f64,
    alpha: f64,
) -> Result<f64, LearnError> {
    check_pair(q, tr)?;
    let rule = UpdateRule::RiskSensitive { utility: utility.clone(), x0 };
    finite(rule.apply(q, tr, gamma, alpha), tr.t)
}

pub fn eu_step(
    q: &mut QTable,
    tr: &Transition,
    utility: &Utility,
    x0: f64,
    gamma: f64,
    alpha: f64,
) -> Result<f64, LearnError> {
    check_pair(q, tr)?;
    let rule = UpdateRule::ExpectedUtility { utility: utility.clone(), x0 };
    finite(rule.apply(q, tr, gamma, alpha), tr.t)
}

pub fn standard_step(q: &mut QTable, tr: &Transition, gamma: f64, alpha: f64) -> Result<f64, LearnError> {
    check_pair(q, tr)?;
    finite(UpdateRule::Standard.apply(q, tr, gamma, alpha), tr.t)
}

fn finite((td, delta): (f64, f64), step: usize) -> Result<f64, LearnError> {
    if !td.is_finite() {
        Err(LearnError::Numeric { step, what: "TD error" })
    } else if !delta.is_finite() {
        Err(LearnError::Numeric { step, what: "Q update" })
    } else {
        Ok(delta)
    }
}

/// Softmax probabilities of row `s` in admissible-action order, computed after subtracting the
/// row maximum.
pub fn softmax_probs(q: &QTable, s: usize, beta: f64, out: &mut Vec<f64>) {
    let acts = q.actions(s);
    let m = q.max(s);
    out.clear();
    out.extend(acts.iter().map(|&a| (beta * (q.get(s, a) - m)).exp()));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
}

/// `ln p(a | s)` under the softmax policy.
pub fn softmax_log_prob(q: &QTable, s: usize, a: usize, beta: f64) -> f64 {
    let m = q.max(s);
    let z: f64 = q.actions(s).iter().map(|&b| (beta * (q.get(s, b) - m)).exp()).sum();
    beta * (q.get(s, a) - m) - z.ln()
}

pub fn softmax_action<R: Rng + ?Sized>(q: &QTable, s: usize, beta: f64, rng: &mut R) -> usize {
    let mut buf = Vec::with_capacity(q.actions(s).len());
    softmax_action_buf(q, s, beta, rng, &mut buf)
}

fn softmax_action_buf<R: Rng + ?Sized>(q: &QTable, s: usize, beta: f64, rng: &mut R, buf: &mut Vec<f64>) -> usize {
    softmax_probs(q, s, beta, buf);
    let acts = q.actions(s);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in buf.iter().enumerate() {
        acc += p;
        if u < acc {
            return acts[i];
        }
    }
    acts[buf.iter().rposition(|&p| p > 0.0).unwrap_or(acts.len() - 1)]
}

/// Visit counts `N(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounts {
    n_actions: usize,
    counts: Vec<u64>,
    admissible: Vec<Vec<usize>>,
}

impl VisitCounts {
    pub fn new(mdp: &Mdp) -> Self {
        Self {
            n_actions: mdp.n_actions(),
            counts: vec![0; mdp.n_states() * mdp.n_actions()],
            admissible: (0..mdp.n_states()).map(|s| mdp.actions(s).to_vec()).collect(),
        }
    }

    /// Increments `N(s, a)` and returns the new count.
    #[inline]
    pub fn visit(&mut self, s: usize, a: usize) -> u64 {
        let c = &mut self.counts[s * self.n_actions + a];
        *c += 1;
        *c
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.admissible
            .iter()
            .enumerate()
            .flat_map(move |(s, acts)| acts.iter().map(move |&a| (s, a, self.get(s, a))))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub transitions: Vec<Transition>,
    pub td: Vec<f64>,
    pub update: Vec<f64>,
    /// `(step, Q after that many steps)`.
    pub snapshots: Vec<(usize, QTable)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub q: QTable,
    pub counts: VisitCounts,
    pub trace: Option<RunTrace>,
}

/// Runs `cfg.steps` iterations of act, sample, update, count from `cfg.start_state`.
pub fn run(mdp: &Mdp, cfg: &LearnerConfig) -> Result<RunOutput, LearnError> {
    cfg.validate()?;
    if cfg.start_state >= mdp.n_states() {
        return Err(MdpError::StateOutOfRange(cfg.start_state).into());
    }
    let rule = UpdateRule::for_config(cfg, mdp)?;
    let bounds = cfg.clamp_q.then(|| {
        let r_bar = cfg.truncation.r_bar.unwrap_or_else(|| mdp.reward_bound().0);
        q_bounds_from(r_bar, cfg.shortfall.reference_root(), cfg.gamma, false)
    });
    let mut rng: SimRng = rng_from_seed(cfg.seed);
    let mut q = QTable::filled(mdp, cfg.q_init);
    let mut counts = VisitCounts::new(mdp);
    let mut trace = cfg.record_trace.then(RunTrace::default);
    let mut buf = Vec::with_capacity(mdp.n_actions());
    let mut s = cfg.start_state;
    for t in 0..cfg.steps {
        let a = softmax_action_buf(&q, s, cfg.beta, &mut rng, &mut buf);
        let tr = sample_transition(mdp, s, a, t, &mut rng)?;
        let n = counts.visit(s, a);
        let (td, mut delta) = rule.apply(&mut q, &tr, cfg.gamma, cfg.schedule.alpha(n));
        finite((td, delta), t)?;
        if let Some(b) = bounds {
            let before = q.get(s, a) - delta;
            let clamped = q.get(s, a).clamp(b.lo, b.hi);
            q.set(s, a, clamped);
            delta = clamped - before;
        }
        if let Some(tc) = trace.as_mut() {
            tc.transitions.push(tr);
            tc.td.push(td);
            tc.update.push(delta);
            if cfg.snapshot_every.is_some_and(|k| (t + 1) % k == 0) {
                tc.snapshots.push((t + 1, q.clone()));
            }
        }
        s = tr.next_state;
    }
    Ok(RunOutput { q, counts, trace })
}

/// Runs `cfg` once per seed, in seed order.
pub fn run_seeds(mdp: &Mdp, cfg: &LearnerConfig, seeds: &[u64], exec: Exec) -> Vec<Result<RunOutput, LearnError>> {
    map_slice(seeds, exec, |&seed| run(mdp, &LearnerConfig { seed, ..cfg.clone() }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationReport {
    pub counts: Vec<(usize, usize, u64)>,
    pub min_count: u64,
    /// Admissible pairs never visited.
    pub starved: Vec<(usize, usize)>,
}

pub fn exploration_report(counts: &VisitCounts) -> ExplorationReport {
    let all: Vec<_> = counts.pairs().collect();
    ExplorationReport {
        min_count: all.iter().map(|c| c.2).min().unwrap_or(0),
        starved: all.iter().filter(|c| c.2 == 0).map(|c| (c.0, c.1)).collect(),
        counts: all,
    }
}
