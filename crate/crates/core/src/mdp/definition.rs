use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{MdpIssue, RewardModel, ROW_TOLERANCE};

/// File form of an MDP.
///
/// ```toml
/// n_states = 1
/// n_actions = 1
/// gamma = 0.5
///
/// [[pair]]
/// state = 0
/// action = 0
/// next_states = [0]
/// next_probs = [1.0]
/// reward = { kind = "discrete", values = [1.0], probs = [1.0] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDefinition {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    #[serde(rename = "pair", default)]
    pub pairs: Vec<PairDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDefinition {
    pub state: usize,
    pub action: usize,
    pub next_states: Vec<usize>,
    pub next_probs: Vec<f64>,
    pub reward: RewardModel,
}

impl PairDefinition {
    pub fn new(state: usize, action: usize, next: Vec<(usize, f64)>, reward: RewardModel) -> Self {
        let (next_states, next_probs) = next.into_iter().unzip();
        Self { state, action, next_states, next_probs, reward }
    }
}

impl MdpDefinition {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("MDP definitions always serialize")
    }

    pub(super) fn issues(&self) -> Vec<MdpIssue> {
        let mut out = Vec::new();
        let global = |m: String| MdpIssue { state: None, action: None, message: m };
        if self.n_states == 0 || self.n_actions == 0 {
            out.push(global("need at least one state and one action".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            out.push(global(format!("discount {} outside [0, 1)", self.gamma)));
        }
        let mut seen = HashSet::new();
        let mut has_action = vec![false; self.n_states];
        for p in &self.pairs {
            let at = |m: String| MdpIssue { state: Some(p.state), action: Some(p.action), message: m };
            if p.state >= self.n_states || p.action >= self.n_actions {
                out.push(at("state or action out of range".into()));
                continue;
            }
            if !seen.insert((p.state, p.action)) {
                out.push(at("duplicate state-action pair".into()));
            }
            has_action[p.state] = true;
            if p.next_states.is_empty() || p.next_states.len() != p.next_probs.len() {
                out.push(at(format!(
                    "{} next states but {} probabilities",
                    p.next_states.len(),
                    p.next_probs.len()
                )));
            }
            if let Some(sn) = p.next_states.iter().find(|&&sn| sn >= self.n_states) {
                out.push(at(format!("next state {sn} out of range")));
            }
            if let Some(q) = p.next_probs.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
                out.push(at(format!("invalid transition probability {q}")));
            }
            let total: f64 = p.next_probs.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                out.push(at(format!("transition row sums to {total}")));
            }
            out.extend(p.reward.issues().into_iter().map(at));
        }
        for (s, ok) in has_action.iter().enumerate() {
            if !ok {
                out.push(MdpIssue { state: Some(s), action: None, message: "no admissible action".into() });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_doc_example() {
        let text = r#"
n_states = 1
n_actions = 1
gamma = 0.5

[[pair]]
state = 0
action = 0
next_states = [0]
next_probs = [1.0]
reward = { kind = "discrete", values = [1.0], probs = [1.0] }
"#;
        let d = MdpDefinition::from_toml(text).unwrap();
        assert_eq!(d.pairs.len(), 1);
        assert!(d.issues().is_empty());
        let back = MdpDefinition::from_toml(&d.to_toml()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(MdpDefinition::from_toml("n_states = 1\nn_actions = 1\ngamma = 0.5\nfoo = 2\n").is_err());
    }
}
