//! Finite Markov decision processes with random rewards.

mod definition;
mod game;
mod trajectory;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::valuation::FiniteDistribution;

pub use definition::{MdpDefinition, PairDefinition};
pub use game::{
    build_investment_game, exact_path_statistics, path_of, path_statistics, GamePath,
    InvestmentGameConfig, PathStatistics, StateMixture, GAME_ACTIONS, GAME_PATHS, GAME_STATES,
};
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryRecord};

/// Tolerance on transition rows and mixture weights.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP:\n{}", format_issues(.0))]
    Invalid(Vec<MdpIssue>),
    #[error("action {action} is not admissible in state {state}")]
    Inadmissible { state: usize, action: usize },
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("trajectory I/O: {0}")]
    Io(String),
}

fn format_issues(issues: &[MdpIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

/// One invariant violation, located by state and action where applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpIssue {
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub message: String,
}

impl fmt::Display for MdpIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.state, self.action) {
            (Some(s), Some(a)) => write!(f, "(s={s}, a={a}): {}", self.message),
            (Some(s), None) => write!(f, "(s={s}): {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

/// Reward distribution of one state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardModel {
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    GaussianMixture { components: Vec<MixtureComponent> },
}

impl RewardModel {
    pub fn point(value: f64) -> Self {
        RewardModel::Discrete { values: vec![value], probs: vec![1.0] }
    }

    pub fn mean(&self) -> f64 {
        match self {
            RewardModel::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            RewardModel::GaussianMixture { components } => components.iter().map(|c| c.weight * c.mean).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        match self {
            RewardModel::Discrete { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| p * (v - m) * (v - m)).sum()
            }
            RewardModel::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * (c.std * c.std + (c.mean - m) * (c.mean - m)))
                .sum(),
        }
    }

    /// Largest absolute reward, and whether it is an approximation (`max|mean| + 6·std`
    /// for unbounded Gaussian components).
    pub fn bound(&self) -> (f64, bool) {
        match self {
            RewardModel::Discrete { values, .. } => (values.iter().fold(0.0, |m, v| m.max(v.abs())), false),
            RewardModel::GaussianMixture { components } => {
                let approx = components.iter().any(|c| c.std > 0.0);
                let b = components.iter().fold(0.0f64, |m, c| m.max(c.mean.abs() + 6.0 * c.std));
                (b, approx)
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, RewardModel::Discrete { .. })
    }

    /// Support and probabilities for finite-support models.
    pub fn distribution(&self) -> Option<(&[f64], &[f64])> {
        match self {
            RewardModel::Discrete { values, probs } => Some((values, probs)),
            RewardModel::GaussianMixture { .. } => None,
        }
    }

    /// Replaces each Gaussian component by `quantiles` equally weighted points at the
    /// midpoint quantiles `(i + ½)/quantiles`. Discrete models are returned unchanged.
    pub fn discretize(&self, quantiles: usize) -> RewardModel {
        use statrs::distribution::{ContinuousCDF, Normal};
        match self {
            RewardModel::Discrete { .. } => self.clone(),
            RewardModel::GaussianMixture { components } => {
                let q = quantiles.max(1);
                let standard = Normal::standard();
                let z: Vec<f64> =
                    (0..q).map(|i| standard.inverse_cdf((i as f64 + 0.5) / q as f64)).collect();
                let mut values = Vec::new();
                let mut probs = Vec::new();
                for c in components {
                    if c.std == 0.0 {
                        values.push(c.mean);
                        probs.push(c.weight);
                    } else {
                        for zi in &z {
                            values.push(c.mean + c.std * zi);
                            probs.push(c.weight / q as f64);
                        }
                    }
                }
                RewardModel::Discrete { values, probs }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardModel::Discrete { values, probs } => values[pick(probs, rng.random::<f64>())],
            RewardModel::GaussianMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                chosen.mean + chosen.std * z
            }
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            RewardModel::Discrete { values, probs } => {
                if let Err(e) = FiniteDistribution::from_parts(values.clone(), probs.clone()) {
                    out.push(format!("reward {e}"));
                }
            }
            RewardModel::GaussianMixture { components } => {
                if components.is_empty() {
                    out.push("reward mixture has no components".into());
                }
                for c in components {
                    if !(c.std >= 0.0 && c.std.is_finite()) {
                        out.push(format!("reward mixture std {} must be finite and ≥ 0", c.std));
                    }
                    if !(c.weight >= 0.0 && c.weight.is_finite()) {
                        out.push(format!("reward mixture weight {} must be ≥ 0", c.weight));
                    }
                    if !c.mean.is_finite() {
                        out.push(format!("reward mixture mean {} must be finite", c.mean));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    out.push(format!("reward mixture weights sum to {total}"));
                }
            }
        }
        out
    }
}

/// Inverse-CDF index for a uniform draw `u` over `probs`.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the draw above the cumulative sum; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Dynamics of one admissible state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub next: Vec<(usize, f64)>,
    pub reward: RewardModel,
}

/// One observed step `(t, s, a, r, s′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A validated finite MDP. Immutable; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    admissible: Vec<Vec<usize>>,
    pairs: Vec<Option<PairModel>>,
}

impl Mdp {
    pub fn new(def: &MdpDefinition) -> Result<Self, MdpError> {
        validate(def)?;
        let mut pairs = vec![None; def.n_states * def.n_actions];
        let mut admissible = vec![Vec::new(); def.n_states];
        for p in &def.pairs {
            pairs[p.state * def.n_actions + p.action] = Some(PairModel {
                next: p.next_states.iter().copied().zip(p.next_probs.iter().copied()).collect(),
                reward: p.reward.clone(),
            });
            admissible[p.state].push(p.action);
        }
        admissible.iter_mut().for_each(|a| a.sort_unstable());
        Ok(Self { n_states: def.n_states, n_actions: def.n_actions, gamma: def.gamma, admissible, pairs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same dynamics with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, MdpError> {
        let mut def = self.definition();
        def.gamma = gamma;
        Mdp::new(&def)
    }

    /// Admissible actions of `s` in increasing id order.
    pub fn actions(&self, s: usize) -> &[usize] {
        &self.admissible[s]
    }

    pub fn is_admissible(&self, s: usize, a: usize) -> bool {
        s < self.n_states && a < self.n_actions && self.pairs[s * self.n_actions + a].is_some()
    }

    pub fn pair(&self, s: usize, a: usize) -> Option<&PairModel> {
        if s < self.n_states && a < self.n_actions {
            self.pairs[s * self.n_actions + a].as_ref()
        } else {
            None
        }
    }

    /// Iterates over the admissible pairs `K` in state-major order.
    pub fn admissible_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_states).flat_map(move |s| self.admissible[s].iter().map(move |&a| (s, a)))
    }

    pub fn n_pairs(&self) -> usize {
        self.admissible.iter().map(Vec::len).sum()
    }

    pub fn all_rewards_discrete(&self) -> bool {
        self.pairs.iter().flatten().all(|p| p.reward.is_discrete())
    }

    /// `R̄ = sup |r|` over all pairs, and whether any pair only bounds it approximately.
    pub fn reward_bound(&self) -> (f64, bool) {
        self.pairs.iter().flatten().fold((0.0, false), |(b, approx), p| {
            let (pb, pa) = p.reward.bound();
            (b.max(pb), approx || pa)
        })
    }

    /// Copy with every Gaussian-mixture reward quantized to finite support.
    pub fn discretized(&self, quantiles: usize) -> Mdp {
        let mut out = self.clone();
        for p in out.pairs.iter_mut().flatten() {
            p.reward = p.reward.discretize(quantiles);
        }
        out
    }

    pub fn definition(&self) -> MdpDefinition {
        let pairs = self
            .admissible_pairs()
            .map(|(s, a)| {
                let p = self.pair(s, a).expect("admissible");
                PairDefinition {
                    state: s,
                    action: a,
                    next_states: p.next.iter().map(|n| n.0).collect(),
                    next_probs: p.next.iter().map(|n| n.1).collect(),
                    reward: p.reward.clone(),
                }
            })
            .collect();
        MdpDefinition { n_states: self.n_states, n_actions: self.n_actions, gamma: self.gamma, pairs }
    }
}

/// Collects every invariant violation of a definition.
pub fn validate(def: &MdpDefinition) -> Result<(), MdpError> {
    let issues = def.issues();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(MdpError::Invalid(issues))
    }
}

/// Draws `s′ ~ P(·|s, a)` and then `r` from the pair's reward model.
pub fn sample_transition<R: Rng + ?Sized>(
    mdp: &Mdp,
    s: usize,
    a: usize,
    t: usize,
    rng: &mut R,
) -> Result<Transition, MdpError> {
    let pair = mdp.pair(s, a).ok_or(MdpError::Inadmissible { state: s, action: a })?;
    let u: f64 = rng.random();
    let mut next_state = pair.next[pair.next.len() - 1].0;
    let mut acc = 0.0;
    for &(sn, p) in &pair.next {
        acc += p;
        if u < acc {
            next_state = sn;
            break;
        }
    }
    let reward = pair.reward.sample(rng);
    Ok(Transition { t, state: s, action: a, reward, next_state })
}

/// Behaviour used by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    /// Uniform over the admissible actions.
    Uniform,
    /// The same action everywhere.
    Constant(usize),
    /// One action per state.
    Deterministic(Vec<usize>),
}

impl SimPolicy {
    pub fn choose<R: Rng + ?Sized>(&self, mdp: &Mdp, s: usize, rng: &mut R) -> Result<usize, MdpError> {
        let a = match self {
            SimPolicy::Uniform => {
                let acts = mdp.actions(s);
                acts[rng.random_range(0..acts.len())]
            }
            SimPolicy::Constant(a) => *a,
            SimPolicy::Deterministic(table) => *table.get(s).ok_or(MdpError::StateOutOfRange(s))?,
        };
        if mdp.is_admissible(s, a) {
            Ok(a)
        } else {
            Err(MdpError::Inadmissible { state: s, action: a })
        }
    }
}

/// Runs `steps` transitions from `start` under `policy`.
pub fn simulate<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &SimPolicy,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Transition>, MdpError> {
    if start >= mdp.n_states() {
        return Err(MdpError::StateOutOfRange(start));
    }
    let mut s = start;
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let a = policy.choose(mdp, s, rng)?;
        let tr = sample_transition(mdp, s, a, t, rng)?;
        s = tr.next_state;
        out.push(tr);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    pub(crate) fn two_state() -> MdpDefinition {
        MdpDefinition {
            n_states: 2,
            n_actions: 2,
            gamma: 0.9,
            pairs: vec![
                PairDefinition::new(0, 0, vec![(0, 0.3), (1, 0.7)], RewardModel::point(1.0)),
                PairDefinition::new(
                    0,
                    1,
                    vec![(1, 1.0)],
                    RewardModel::Discrete { values: vec![-1.0, 2.0], probs: vec![0.5, 0.5] },
                ),
                PairDefinition::new(
                    1,
                    0,
                    vec![(0, 1.0)],
                    RewardModel::GaussianMixture {
                        components: vec![
                            MixtureComponent { mean: 1.0, std: 2.0, weight: 0.25 },
                            MixtureComponent { mean: -3.0, std: 0.5, weight: 0.75 },
                        ],
                    },
                ),
            ],
        }
    }

    #[test]
    fn well_formed_mdp_validates() {
        assert!(validate(&two_state()).is_ok());
        let m = Mdp::new(&two_state()).unwrap();
        assert_eq!(m.actions(0), &[0, 1]);
        assert_eq!(m.actions(1), &[0]);
        assert_eq!(m.n_pairs(), 3);
        assert!(!m.is_admissible(1, 1));
    }

    #[test]
    fn bad_row_is_located() {
        let mut d = two_state();
        d.pairs[0].next_probs = vec![0.3, 0.6];
        let Err(MdpError::Invalid(issues)) = validate(&d) else { panic!() };
        assert_eq!(issues.len(), 1);
        assert_eq!((issues[0].state, issues[0].action), (Some(0), Some(0)));
        assert!(issues[0].to_string().contains("(s=0, a=0)"));
    }

    #[test]
    fn negative_std_and_missing_actions_are_reported() {
        let mut d = two_state();
        if let RewardModel::GaussianMixture { components } = &mut d.pairs[2].reward {
            components[0].std = -1.0;
        }
        d.pairs.truncate(2);
        d.pairs.push(PairDefinition::new(
            0,
            0,
            vec![(1, 1.0)],
            RewardModel::GaussianMixture { components: vec![MixtureComponent { mean: 0.0, std: -1.0, weight: 1.0 }] },
        ));
        let Err(MdpError::Invalid(issues)) = validate(&d) else { panic!() };
        let text: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("std")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("duplicate")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("(s=1)") && t.contains("no admissible")), "{text:?}");
    }

    #[test]
    fn deterministic_transition() {
        let d = MdpDefinition {
            n_states: 1,
            n_actions: 1,
            gamma: 0.5,
            pairs: vec![PairDefinition::new(0, 0, vec![(0, 1.0)], RewardModel::point(1.0))],
        };
        let m = Mdp::new(&d).unwrap();
        let tr = sample_transition(&m, 0, 0, 7, &mut rng_from_seed(1)).unwrap();
        assert_eq!(tr, Transition { t: 7, state: 0, action: 0, reward: 1.0, next_state: 0 });
        assert!(matches!(
            sample_transition(&m, 0, 1, 0, &mut rng_from_seed(1)),
            Err(MdpError::Inadmissible { .. })
        ));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let m = Mdp::new(&two_state()).unwrap();
        let a = simulate(&m, &SimPolicy::Uniform, 0, 50, &mut rng_from_seed(9)).unwrap();
        let b = simulate(&m, &SimPolicy::Uniform, 0, 50, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_moments_and_bound() {
        let r = RewardModel::GaussianMixture {
            components: vec![
                MixtureComponent { mean: 1.0, std: 2.0, weight: 0.25 },
                MixtureComponent { mean: -3.0, std: 0.5, weight: 0.75 },
            ],
        };
        assert!((r.mean() + 2.0).abs() < 1e-15);
        // 0.25·(4 + 9) + 0.75·(0.25 + 1)
        assert!((r.variance() - 4.1875).abs() < 1e-12);
        assert_eq!(r.bound(), (13.0, true));
        let d = r.discretize(41);
        assert!((d.mean() - r.mean()).abs() < 1e-12);
        assert!(d.variance() < r.variance() && d.variance() > 0.95 * r.variance());
    }

    #[test]
    fn pick_handles_rounding_tail() {
        assert_eq!(pick(&[0.5, 0.5, 0.0], 0.999_999_999_999_999_9), 1);
        assert_eq!(pick(&[0.2, 0.8], 0.1), 0);
    }
}
