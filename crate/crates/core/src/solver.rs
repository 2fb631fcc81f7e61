//! Risk-sensitive value iteration over finite-support MDPs.
//!
//! `Q(s, a)` is the shortfall of `r + γ·V(s′)` under the joint law of the next state and the
//! reward, and `V(s) = max_a Q(s, a)`.

use thiserror::Error;

use crate::mdp::Mdp;
use crate::par::{map_range, Exec};
use crate::valuation::{slope_bounds, SlopeBounds, Shortfall, ValuationError};

pub type ValueFunction = Vec<f64>;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("value iteration did not converge after {iterations} iterations (last step {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

/// Dense Q-values over the admissible pairs of an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    admissible: Vec<Vec<usize>>,
}

impl QTable {
    pub fn zeros(mdp: &Mdp) -> Self {
        Self::filled(mdp, 0.0)
    }

    pub fn filled(mdp: &Mdp, value: f64) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            values: vec![value; mdp.n_states() * mdp.n_actions()],
            admissible: (0..mdp.n_states()).map(|s| mdp.actions(s).to_vec()).collect(),
        }
    }

    /// Table with explicit rows; row `s` holds `(action, value)` pairs.
    pub fn from_rows(n_actions: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_states = rows.len();
        let mut values = vec![0.0; n_states * n_actions];
        let mut admissible = Vec::with_capacity(n_states);
        for (s, row) in rows.into_iter().enumerate() {
            let mut acts: Vec<usize> = row.iter().map(|r| r.0).collect();
            acts.sort_unstable();
            for (a, q) in row {
                values[s * n_actions + a] = q;
            }
            admissible.push(acts);
        }
        Self { n_states, n_actions, values, admissible }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn actions(&self, s: usize) -> &[usize] {
        &self.admissible[s]
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.n_actions + a] = q;
    }

    /// Largest value in row `s`.
    pub fn max(&self, s: usize) -> f64 {
        self.admissible[s].iter().map(|&a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximizing action of row `s`; ties go to the lowest action id.
    pub fn argmax(&self, s: usize) -> usize {
        let mut best = self.admissible[s][0];
        for &a in &self.admissible[s][1..] {
            if self.get(s, a) > self.get(s, best) {
                best = a;
            }
        }
        best
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_states).flat_map(move |s| self.admissible[s].iter().map(move |&a| (s, a, self.get(s, a))))
    }

    /// Sup-norm distance over admissible pairs.
    pub fn distance(&self, other: &QTable) -> f64 {
        self.pairs().map(|(s, a, q)| (q - other.get(s, a)).abs()).fold(0.0, f64::max)
    }

    pub fn state_values(&self) -> ValueFunction {
        (0..self.n_states).map(|s| self.max(s)).collect()
    }
}

/// Sup-norm distance between two value functions.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Below this many admissible pairs a sweep stays on the calling thread.
const PARALLEL_MIN_PAIRS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target sup-norm distance to `V*`.
    pub tol: f64,
    pub max_iter: usize,
    /// Bracket width for each shortfall root. `None` derives it from `tol` and `γ`.
    pub root_tol: Option<f64>,
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, root_tol: None, exec: Exec::default() }
    }
}

impl SolveOptions {
    fn root_tol(&self, gamma: f64) -> f64 {
        self.root_tol.unwrap_or((1e-3 * self.tol * (1.0 - gamma)).max(1e-15))
    }
}

fn require_discrete(mdp: &Mdp) -> Result<(), SolverError> {
    if mdp.all_rewards_discrete() {
        Ok(())
    } else {
        Err(SolverError::Unsupported(
            "value iteration needs finite-support rewards; discretize Gaussian mixtures first".into(),
        ))
    }
}

fn pair_value(
    mdp: &Mdp,
    sf: &Shortfall,
    v: &[f64],
    s: usize,
    a: usize,
    root_tol: f64,
    buf: &mut (Vec<f64>, Vec<f64>),
) -> Result<f64, SolverError> {
    let pair = mdp.pair(s, a).expect("admissible pair");
    let (rv, rp) = pair.reward.distribution().expect("checked discrete");
    let gamma = mdp.gamma();
    buf.0.clear();
    buf.1.clear();
    for &(sn, pn) in &pair.next {
        for (&r, &pr) in rv.iter().zip(rp) {
            buf.0.push(r + gamma * v[sn]);
            buf.1.push(pn * pr);
        }
    }
    Ok(sf.value_of(&buf.0, &buf.1, root_tol)?)
}

fn q_backup_inner(mdp: &Mdp, sf: &Shortfall, v: &[f64], root_tol: f64, exec: Exec) -> Result<QTable, SolverError> {
    let exec = if mdp.n_pairs() < PARALLEL_MIN_PAIRS { Exec::Sequential } else { exec };
    let rows = map_range(mdp.n_states(), exec, |s| {
        let mut buf = (Vec::new(), Vec::new());
        mdp.actions(s)
            .iter()
            .map(|&a| pair_value(mdp, sf, v, s, a, root_tol, &mut buf).map(|q| (a, q)))
            .collect::<Result<Vec<_>, _>>()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(QTable::from_rows(mdp.n_actions(), rows))
}

/// `Q(s, a) = U_{s,a}(R + γV)` for every admissible pair.
pub fn q_backup(mdp: &Mdp, sf: &Shortfall, v: &[f64], root_tol: f64) -> Result<QTable, SolverError> {
    require_discrete(mdp)?;
    check_len(mdp, v)?;
    q_backup_inner(mdp, sf, v, root_tol, Exec::Sequential)
}

fn check_len(mdp: &Mdp, v: &[f64]) -> Result<(), SolverError> {
    if v.len() == mdp.n_states() {
        Ok(())
    } else {
        Err(SolverError::InvalidArgument(format!("value function has {} entries for {} states", v.len(), mdp.n_states())))
    }
}

/// One application of the risk-sensitive Bellman operator.
pub fn bellman_backup(mdp: &Mdp, sf: &Shortfall, v: &[f64], root_tol: f64) -> Result<ValueFunction, SolverError> {
    Ok(q_backup(mdp, sf, v, root_tol)?.state_values())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub v: ValueFunction,
    pub q: QTable,
    pub iterations: usize,
    /// Sup-norm step of the last sweep.
    pub residual: f64,
}

/// Value iteration from `V = 0` with default options apart from `tol` and `max_iter`.
pub fn value_iteration(mdp: &Mdp, sf: &Shortfall, tol: f64, max_iter: usize) -> Result<Solution, SolverError> {
    value_iteration_with(mdp, sf, &SolveOptions { tol, max_iter, ..Default::default() })
}

/// Iterates the Bellman operator until the step is at most `tol·(1−γ)/γ`, which bounds the
/// distance to `V*` by `tol`, then extracts `Q*` with one more backup.
pub fn value_iteration_with(mdp: &Mdp, sf: &Shortfall, opts: &SolveOptions) -> Result<Solution, SolverError> {
    require_discrete(mdp)?;
    if !(opts.tol > 0.0) {
        return Err(SolverError::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let gamma = mdp.gamma();
    let root_tol = opts.root_tol(gamma);
    let threshold = if gamma == 0.0 { f64::INFINITY } else { opts.tol * (1.0 - gamma) / gamma };
    let mut v = vec![0.0; mdp.n_states()];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = q_backup_inner(mdp, sf, &v, root_tol, opts.exec)?.state_values();
        residual = sup_distance(&next, &v);
        v = next;
        if residual <= threshold {
            let q = q_backup_inner(mdp, sf, &v, root_tol, opts.exec)?;
            return Ok(Solution { v: q.state_values(), q, iterations: it, residual });
        }
    }
    Err(SolverError::NonConvergence { iterations: opts.max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QBounds {
    pub lo: f64,
    pub hi: f64,
    /// Set when `R̄` was estimated from unbounded Gaussian components.
    pub approximate: bool,
}

/// `(−R̄ − y0)/(1−γ) ≤ Q* ≤ (R̄ − y0)/(1−γ)`.
pub fn q_bounds(mdp: &Mdp, sf: &Shortfall) -> QBounds {
    let (r_bar, approximate) = mdp.reward_bound();
    q_bounds_from(r_bar, sf.reference_root(), mdp.gamma(), approximate)
}

pub fn q_bounds_from(r_bar: f64, y0: f64, gamma: f64, approximate: bool) -> QBounds {
    let scale = 1.0 / (1.0 - gamma);
    QBounds { lo: (-r_bar - y0) * scale, hi: (r_bar - y0) * scale, approximate }
}

/// Slope bounds of the utility over the interval TD errors can reach at the optimum.
pub fn check_utility(mdp: &Mdp, sf: &Shortfall, grid_n: usize) -> Result<SlopeBounds, SolverError> {
    let (r_bar, _) = mdp.reward_bound();
    let half = (2.0 * r_bar / (1.0 - mdp.gamma())).max(1e-9);
    let y0 = sf.reference_root();
    Ok(slope_bounds(sf.utility(), y0 - half, y0 + half, grid_n)?)
}

/// Per-state argmax with the lowest-id tie rule.
pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| q.argmax(s)).collect()
}

/// Stage values of the `horizon`-step problem: entry `t` is the optimal value with
/// `horizon − t` further decisions after the current one, so entry 0 takes `horizon + 1`
/// backups from a zero terminal value.
pub fn finite_horizon_values(
    mdp: &Mdp,
    sf: &Shortfall,
    horizon: usize,
    root_tol: f64,
) -> Result<Vec<ValueFunction>, SolverError> {
    require_discrete(mdp)?;
    let mut stages = Vec::with_capacity(horizon + 1);
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..=horizon {
        v = q_backup_inner(mdp, sf, &v, root_tol, Exec::Sequential)?.state_values();
        stages.push(v.clone());
    }
    stages.reverse();
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpDefinition, PairDefinition, RewardModel};
    use crate::valuation::Utility;

    fn loop_mdp(reward: RewardModel) -> Mdp {
        Mdp::new(&MdpDefinition {
            n_states: 1,
            n_actions: 1,
            gamma: 0.5,
            pairs: vec![PairDefinition::new(0, 0, vec![(0, 1.0)], reward)],
        })
        .unwrap()
    }

    #[test]
    fn single_backup_and_geometric_value() {
        let m = loop_mdp(RewardModel::point(1.0));
        let sf = Shortfall::risk_neutral();
        assert_eq!(bellman_backup(&m, &sf, &[0.0], 1e-12).unwrap(), vec![1.0]);
        let sol = value_iteration(&m, &sf, 1e-10, 1000).unwrap();
        assert!((sol.v[0] - 2.0).abs() <= 1e-10);
        assert!((sol.q.get(0, 0) - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn deterministic_reward_is_risk_free() {
        let m = loop_mdp(RewardModel::point(1.0));
        let sf = Shortfall::new(Utility::Entropic { lambda: 1.0 }, 1.0).unwrap();
        assert_eq!(sf.reference_root(), 0.0);
        assert!((bellman_backup(&m, &sf, &[0.0], 1e-12).unwrap()[0] - 1.0).abs() < 1e-12);
        let sol = value_iteration(&m, &sf, 1e-10, 1000).unwrap();
        assert!((sol.v[0] - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn bounds_substitution() {
        let b = q_bounds_from(3.0, 0.0, 0.5, false);
        assert_eq!((b.lo, b.hi), (-6.0, 6.0));
        let b = q_bounds_from(0.0, 1.0, 0.5, false);
        assert_eq!((b.lo, b.hi), (-2.0, -2.0));
    }

    #[test]
    fn argmax_rule() {
        let q = QTable::from_rows(4, vec![vec![(0, 1.0), (1, 3.0), (2, 2.0), (3, 0.0)], vec![(0, 2.0), (1, 2.0)]]);
        assert_eq!(greedy_policy(&q), vec![1, 0]);
        assert_eq!(q.max(0), 3.0);
    }

    #[test]
    fn gaussian_rewards_are_rejected() {
        let m = crate::mdp::build_investment_game(&Default::default()).unwrap();
        let sf = Shortfall::risk_neutral();
        assert!(matches!(value_iteration(&m, &sf, 1e-6, 10), Err(SolverError::Unsupported(_))));
        assert!(q_bounds(&m, &sf).approximate);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let m = loop_mdp(RewardModel::point(1.0));
        let Err(SolverError::NonConvergence { iterations, residual }) =
            value_iteration(&m, &Shortfall::risk_neutral(), 1e-12, 3)
        else {
            panic!()
        };
        assert_eq!(iterations, 3);
        assert!(residual > 0.1);
    }

    #[test]
    fn horizon_zero_is_one_backup() {
        let m = loop_mdp(RewardModel::Discrete { values: vec![2.0, 0.0], probs: vec![0.5, 0.5] });
        let sf = Shortfall::new(Utility::Exponential { lambda: -1.0 }, 0.0).unwrap();
        let stages = finite_horizon_values(&m, &sf, 0, 1e-13).unwrap();
        // centralized value of {2, 0} under 1 − e^{−x}: 1 − ln cosh 1
        assert_eq!(stages.len(), 1);
        assert!((stages[0][0] - (1.0 - 1f64.cosh().ln())).abs() < 1e-10);
    }
}
