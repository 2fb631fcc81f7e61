#![allow(dead_code)]

use rand::Rng;
use riskrl::mdp::{Mdp, MdpDefinition, PairDefinition, RewardModel};
use riskrl::SimRng;

pub fn fixture(name: &str) -> Mdp {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    Mdp::new(&MdpDefinition::from_toml(&text).unwrap()).unwrap()
}

fn simplex(rng: &mut SimRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let z: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / z).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    p
}

/// Every pair admissible; 1–3 successors and 1–3 reward outcomes in `[−r_max, r_max]`.
pub fn random_mdp(rng: &mut SimRng, n_states: usize, n_actions: usize, gamma: f64, r_max: f64) -> Mdp {
    let mut pairs = Vec::new();
    for s in 0..n_states {
        for a in 0..n_actions {
            let k = rng.random_range(1..=n_states.min(3));
            let mut next: Vec<usize> = (0..n_states).collect();
            for i in 0..k {
                let j = rng.random_range(i..n_states);
                next.swap(i, j);
            }
            next.truncate(k);
            let probs = simplex(rng, k);
            let m = rng.random_range(1..=3);
            let values: Vec<f64> = (0..m).map(|_| rng.random_range(-r_max..=r_max)).collect();
            let rp = simplex(rng, m);
            pairs.push(PairDefinition::new(
                s,
                a,
                next.into_iter().zip(probs).collect(),
                RewardModel::Discrete { values, probs: rp },
            ));
        }
    }
    Mdp::new(&MdpDefinition { n_states, n_actions, gamma, pairs }).unwrap()
}

/// Classical expected-value value iteration, iterated until the step stops shrinking.
pub fn classical_values(mdp: &Mdp) -> Vec<f64> {
    let g = mdp.gamma();
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| {
                mdp.actions(s)
                    .iter()
                    .map(|&a| {
                        let p = mdp.pair(s, a).unwrap();
                        p.reward.mean() + g * p.next.iter().map(|&(sn, q)| q * v[sn]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let step = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if step < 1e-15 {
            break;
        }
    }
    v
}
