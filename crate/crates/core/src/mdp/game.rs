//! The 7-state, 4-action sequential investment game.
//!
//! State ids are 0-based: the start state is 0, its risk-seeking successor 1 and its
//! risk-averse successor 2; states 3–6 are the third-decision states of paths 1–4. Investing
//! 2 or 3 follows the risk-seeking edge, 0 or 1 the risk-averse edge, and every third
//! decision returns to state 0. The reward for investing `a` is `a` times a price change drawn
//! from the state's two-component Gaussian mixture.
//!
//! The default mixture parameters are hand-calibrated rather than measured. They are chosen
//! so that the per-path expected totals under the uniform-consistent-action policy are 90,
//! 31, 52.25 and −9.75, with a component std of 5.

use serde::{Deserialize, Serialize};

use super::{Mdp, MdpDefinition, MdpError, MdpIssue, MixtureComponent, PairDefinition, RewardModel, ROW_TOLERANCE};
use crate::par::{map_range, Exec};
use crate::{substream, SimRng};

pub const GAME_STATES: usize = 7;
pub const GAME_ACTIONS: usize = 4;

/// State sequences of paths 1–4.
pub const GAME_PATHS: [[usize; 3]; 4] = [[0, 1, 3], [0, 1, 4], [0, 2, 5], [0, 2, 6]];

/// Index 0–3 of a path in [`GAME_PATHS`].
pub type GamePath = usize;

/// Two-component price-change mixture of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMixture {
    pub means: [f64; 2],
    pub probs: [f64; 2],
}

impl StateMixture {
    pub fn mean(&self) -> f64 {
        self.means[0] * self.probs[0] + self.means[1] * self.probs[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestmentGameConfig {
    #[serde(default = "default_states")]
    pub states: Vec<StateMixture>,
    /// Shared standard deviation of every mixture component.
    #[serde(default = "default_std")]
    pub std: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Rounds of three decisions in one session.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
}

fn default_states() -> Vec<StateMixture> {
    let m = |a: f64, pa: f64, b: f64| StateMixture { means: [a, b], probs: [pa, 1.0 - pa] };
    vec![
        m(-6.0, 0.5, 10.0),
        m(41.0, 0.8, -9.0),
        m(17.0, 0.5, 12.0),
        m(10.0, 0.5, 0.0),
        m(12.0, 0.6, -0.5),
        m(12.0, 0.5, 8.0),
        m(-16.0, 0.75, 0.0),
    ]
}

fn default_std() -> f64 {
    5.0
}

fn default_gamma() -> f64 {
    0.9
}

fn default_rounds() -> usize {
    80
}

impl Default for InvestmentGameConfig {
    fn default() -> Self {
        Self {
            states: default_states(),
            std: default_std(),
            gamma: default_gamma(),
            rounds: default_rounds(),
        }
    }
}

impl InvestmentGameConfig {
    pub fn issues(&self) -> Vec<MdpIssue> {
        let mut out = Vec::new();
        if self.states.len() != GAME_STATES {
            out.push(MdpIssue {
                state: None,
                action: None,
                message: format!("expected {GAME_STATES} state mixtures, got {}", self.states.len()),
            });
        }
        for (s, st) in self.states.iter().enumerate() {
            let total = st.probs[0] + st.probs[1];
            if st.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > ROW_TOLERANCE {
                out.push(MdpIssue {
                    state: Some(s),
                    action: None,
                    message: format!("component probabilities {:?} must be ≥ 0 and sum to 1", st.probs),
                });
            }
            if st.means.iter().any(|m| !m.is_finite()) {
                out.push(MdpIssue { state: Some(s), action: None, message: "non-finite component mean".into() });
            }
        }
        if !(self.std.is_finite() && self.std >= 0.0) {
            out.push(MdpIssue { state: None, action: None, message: format!("std {} must be ≥ 0", self.std) });
        }
        out
    }
}

fn successor(s: usize, a: usize) -> usize {
    let risk_seeking = a >= 2;
    match (s, risk_seeking) {
        (0, true) => 1,
        (0, false) => 2,
        (1, true) => 3,
        (1, false) => 4,
        (2, true) => 5,
        (2, false) => 6,
        _ => 0,
    }
}

pub fn build_investment_game(cfg: &InvestmentGameConfig) -> Result<Mdp, MdpError> {
    let issues = cfg.issues();
    if !issues.is_empty() {
        return Err(MdpError::Invalid(issues));
    }
    let mut pairs = Vec::with_capacity(GAME_STATES * GAME_ACTIONS);
    for (s, st) in cfg.states.iter().enumerate() {
        for a in 0..GAME_ACTIONS {
            let scale = a as f64;
            let components = (0..2)
                .map(|k| MixtureComponent { mean: scale * st.means[k], std: scale * cfg.std, weight: st.probs[k] })
                .collect();
            pairs.push(PairDefinition::new(
                s,
                a,
                vec![(successor(s, a), 1.0)],
                RewardModel::GaussianMixture { components },
            ));
        }
    }
    Mdp::new(&MdpDefinition { n_states: GAME_STATES, n_actions: GAME_ACTIONS, gamma: cfg.gamma, pairs })
}

/// Path index of a three-state sequence.
pub fn path_of(states: [usize; 3]) -> Option<GamePath> {
    GAME_PATHS.iter().position(|p| *p == states)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStatistics {
    /// 1-based path label.
    pub path: usize,
    pub rounds: usize,
    pub frequency: f64,
    pub ev: f64,
    pub std: f64,
    pub std_error: f64,
    pub exact_ev: f64,
    pub exact_std: f64,
}

fn check_game_shape(mdp: &Mdp) -> Result<(), MdpError> {
    let ok = mdp.n_states() == GAME_STATES
        && mdp.n_actions() == GAME_ACTIONS
        && mdp.admissible_pairs().all(|(s, a)| {
            let p = mdp.pair(s, a).expect("admissible");
            p.next.len() == 1 && p.next[0].0 == successor(s, a)
        });
    if ok {
        Ok(())
    } else {
        Err(MdpError::Invalid(vec![MdpIssue {
            state: None,
            action: None,
            message: "not an investment-game topology".into(),
        }]))
    }
}

/// Actions at `s` that move to `next`.
fn consistent_actions(mdp: &Mdp, s: usize, next: usize) -> Vec<usize> {
    mdp.actions(s).iter().copied().filter(|&a| mdp.pair(s, a).is_some_and(|p| p.next[0].0 == next)).collect()
}

/// Per-path mean and std of the round total by enumerating every consistent action sequence
/// (equally likely) with analytic per-pair reward moments.
pub fn exact_path_statistics(mdp: &Mdp) -> Result<[(f64, f64); 4], MdpError> {
    check_game_shape(mdp)?;
    let mut out = [(0.0, 0.0); 4];
    for (k, path) in GAME_PATHS.iter().enumerate() {
        let steps = [
            consistent_actions(mdp, path[0], path[1]),
            consistent_actions(mdp, path[1], path[2]),
            mdp.actions(path[2]).to_vec(),
        ];
        let mut n = 0.0;
        let mut sum_mean = 0.0;
        let mut sum_second = 0.0;
        for &a0 in &steps[0] {
            for &a1 in &steps[1] {
                for &a2 in &steps[2] {
                    let rewards = [(path[0], a0), (path[1], a1), (path[2], a2)]
                        .map(|(s, a)| &mdp.pair(s, a).expect("admissible").reward);
                    let mu: f64 = rewards.iter().map(|r| r.mean()).sum();
                    let var: f64 = rewards.iter().map(|r| r.variance()).sum();
                    n += 1.0;
                    sum_mean += mu;
                    sum_second += var + mu * mu;
                }
            }
        }
        let ev = sum_mean / n;
        out[k] = (ev, (sum_second / n - ev * ev).max(0.0).sqrt());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

const ROUNDS_PER_CHUNK: usize = 4096;

/// Monte-Carlo round totals per path under the uniform random policy.
///
/// Conditioned on the realised path, a uniform policy picks every consistent action sequence
/// with equal probability, so grouping rounds by path yields the per-path statistics directly.
/// Rounds are split into fixed-size chunks with their own seeded streams; the result does not
/// depend on `exec`.
pub fn path_statistics(mdp: &Mdp, n_rounds: usize, seed: u64, exec: Exec) -> Result<Vec<PathStatistics>, MdpError> {
    use rand::Rng;
    check_game_shape(mdp)?;
    if n_rounds == 0 {
        return Err(MdpError::Invalid(vec![MdpIssue {
            state: None,
            action: None,
            message: "path statistics need at least one round".into(),
        }]));
    }
    let exact = exact_path_statistics(mdp)?;
    let n_chunks = n_rounds.div_ceil(ROUNDS_PER_CHUNK);
    let partial = map_range(n_chunks, exec, |c| {
        let mut rng: SimRng = substream(seed, c as u64);
        let rounds = ROUNDS_PER_CHUNK.min(n_rounds - c * ROUNDS_PER_CHUNK);
        let mut acc = [Moments::default(); 4];
        for _ in 0..rounds {
            let mut s = 0;
            let mut states = [0usize; 3];
            let mut total = 0.0;
            for slot in &mut states {
                *slot = s;
                let acts = mdp.actions(s);
                let a = acts[rng.random_range(0..acts.len())];
                let p = mdp.pair(s, a).expect("admissible");
                total += p.reward.sample(&mut rng);
                s = p.next[0].0;
            }
            let k = path_of(states).expect("game topology yields one of four paths");
            acc[k].push(total);
        }
        acc
    });
    let merged = partial.into_iter().fold([Moments::default(); 4], |mut a, b| {
        for k in 0..4 {
            a[k] = a[k].merge(b[k]);
        }
        a
    });
    Ok(merged
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let var = if m.n > 1 { m.m2 / (m.n - 1) as f64 } else { 0.0 };
            let std = var.sqrt();
            PathStatistics {
                path: k + 1,
                rounds: m.n,
                frequency: m.n as f64 / n_rounds as f64,
                ev: m.mean,
                std,
                std_error: if m.n > 0 { std / (m.n as f64).sqrt() } else { f64::NAN },
                exact_ev: exact[k].0,
                exact_std: exact[k].1,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_transition, simulate, SimPolicy};
    use crate::rng_from_seed;

    #[test]
    fn default_game_is_valid() {
        let m = build_investment_game(&InvestmentGameConfig::default()).unwrap();
        assert_eq!(m.n_states(), 7);
        assert_eq!(m.n_pairs(), 28);
    }

    #[test]
    fn topology_and_reset() {
        let m = build_investment_game(&InvestmentGameConfig::default()).unwrap();
        let mut rng = rng_from_seed(3);
        let tr = simulate(&m, &SimPolicy::Uniform, 0, 3000, &mut rng).unwrap();
        for round in tr.chunks(3) {
            assert_eq!(round[0].state, 0);
            assert_eq!(round[2].next_state, 0);
            assert!(path_of([round[0].state, round[1].state, round[2].state]).is_some());
        }
        // every state reachable from 0 within 3 steps under some deterministic choice
        let reach: Vec<usize> = GAME_PATHS.iter().flatten().copied().collect();
        for s in 0..7 {
            assert!(reach.contains(&s));
        }
    }

    #[test]
    fn zero_investment_pays_nothing() {
        let m = build_investment_game(&InvestmentGameConfig::default()).unwrap();
        let mut rng = rng_from_seed(5);
        for s in 0..7 {
            for _ in 0..100 {
                let tr = sample_transition(&m, s, 0, 0, &mut rng).unwrap();
                assert_eq!(tr.reward, 0.0);
                assert_eq!(tr.next_state, successor(s, 0));
            }
        }
    }

    #[test]
    fn exact_default_path_values() {
        let m = build_investment_game(&InvestmentGameConfig::default()).unwrap();
        let e = exact_path_statistics(&m).unwrap();
        let evs = [90.0, 31.0, 52.25, -9.75];
        for k in 0..4 {
            assert!((e[k].0 - evs[k]).abs() < 1e-12, "path {} ev {}", k + 1, e[k].0);
        }
    }

    #[test]
    fn ev_is_linear_in_means() {
        let cfg = InvestmentGameConfig::default();
        let mut doubled = cfg.clone();
        for st in &mut doubled.states {
            st.means = st.means.map(|m| 2.0 * m);
        }
        let a = exact_path_statistics(&build_investment_game(&cfg).unwrap()).unwrap();
        let b = exact_path_statistics(&build_investment_game(&doubled).unwrap()).unwrap();
        for k in 0..4 {
            assert!((b[k].0 - 2.0 * a[k].0).abs() < 1e-10);
        }
    }

    #[test]
    fn point_reward_variant_has_no_spread() {
        let mut cfg = InvestmentGameConfig { std: 0.0, ..Default::default() };
        for st in &mut cfg.states {
            st.means = [st.mean(), st.mean()];
        }
        let m = build_investment_game(&cfg).unwrap();
        let mut rng = rng_from_seed(2);
        // constant investment of 1: rewards equal the state mean, path totals are fixed
        let tr = simulate(&m, &SimPolicy::Constant(1), 0, 300, &mut rng).unwrap();
        let totals: Vec<f64> = tr.chunks(3).map(|r| r.iter().map(|t| t.reward).sum()).collect();
        assert!(totals.iter().all(|t| (t - totals[0]).abs() < 1e-12));
    }

    #[test]
    fn monte_carlo_is_mode_independent() {
        let m = build_investment_game(&InvestmentGameConfig::default()).unwrap();
        let a = path_statistics(&m, 10_000, 4, Exec::Sequential).unwrap();
        let b = path_statistics(&m, 10_000, 4, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let total: usize = a.iter().map(|p| p.rounds).sum();
        assert_eq!(total, 10_000);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = InvestmentGameConfig::default();
        cfg.states[2].probs = [0.5, 0.6];
        assert!(build_investment_game(&cfg).is_err());
        let cfg = InvestmentGameConfig { std: -1.0, ..Default::default() };
        assert!(build_investment_game(&cfg).is_err());
    }
}
