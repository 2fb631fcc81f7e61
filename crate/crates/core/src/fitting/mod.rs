//! Maximum-likelihood fits of learning models to recorded choices, with BIC comparison.
//!
//! A fit replays a subject's own transitions through a model's update rule and scores each
//! recorded action by its softmax probability before that trial's update.

mod model;
mod nelder_mead;

use thiserror::Error;

use crate::learner::{softmax_action, softmax_log_prob};
use crate::mdp::{sample_transition, Mdp, MdpError, TrajectoryRecord, Transition};
use crate::par::{map_range, Exec};
use crate::solver::QTable;
use crate::valuation::{Shortfall, Utility, ValuationError};
use crate::{rng_from_seed, SimRng};

pub use model::{halton, halton_starts, ModelKind, ModelParams, ParamBounds};
pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("subject {0} has no trials")]
    Empty(String),
    #[error("non-finite log-likelihood at trial {trial}")]
    Numeric { trial: usize },
    #[error("invalid subject data: {0}")]
    Data(String),
    #[error("{0}")]
    Params(String),
    #[error("every start failed: {0}")]
    AllStartsFailed(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

/// One subject's recorded trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub id: String,
    pub transitions: Vec<Transition>,
}

impl SubjectData {
    pub fn new(id: impl Into<String>, transitions: Vec<Transition>) -> Self {
        Self { id: id.into(), transitions }
    }

    pub fn from_records(id: impl Into<String>, records: &[TrajectoryRecord]) -> Self {
        Self::new(id, records.iter().map(|r| r.transition).collect())
    }

    pub fn n_trials(&self) -> usize {
        self.transitions.len()
    }

    /// Checks temporal order and admissibility in `mdp`.
    pub fn validate(&self, mdp: &Mdp) -> Result<(), FitError> {
        for (i, t) in self.transitions.iter().enumerate() {
            if i > 0 && t.t <= self.transitions[i - 1].t {
                return Err(FitError::Data(format!("{}: trial {i} is out of temporal order", self.id)));
            }
            if t.next_state >= mdp.n_states() {
                return Err(MdpError::StateOutOfRange(t.next_state).into());
            }
            if !mdp.is_admissible(t.state, t.action) {
                return Err(MdpError::Inadmissible { state: t.state, action: t.action }.into());
            }
        }
        Ok(())
    }
}

/// Log-likelihood of the recorded actions, and optionally each trial's choice probability.
fn replay(
    mdp: &Mdp,
    data: &SubjectData,
    model: ModelKind,
    p: &ModelParams,
    mut probs: Option<&mut Vec<f64>>,
) -> Result<f64, FitError> {
    let (rule, alpha) = p.update_rule(model);
    let mut q = QTable::zeros(mdp);
    let mut total = 0.0;
    for (i, tr) in data.transitions.iter().enumerate() {
        let lp = softmax_log_prob(&q, tr.state, tr.action, p.beta);
        if !lp.is_finite() {
            return Err(FitError::Numeric { trial: i });
        }
        total += lp;
        if let Some(out) = probs.as_deref_mut() {
            out.push(lp.exp());
        }
        let (td, delta) = rule.apply(&mut q, tr, p.gamma, alpha);
        if !(td.is_finite() && delta.is_finite()) {
            return Err(FitError::Numeric { trial: i });
        }
    }
    Ok(total)
}

/// `Σ_t ln p(a_t | s_t, θ)` over the subject's trials.
pub fn replay_log_likelihood(mdp: &Mdp, data: &SubjectData, model: ModelKind, p: &ModelParams) -> Result<f64, FitError> {
    p.validate(model).map_err(FitError::Params)?;
    data.validate(mdp)?;
    replay(mdp, data, model, p, None)
}

/// Per-trial probability of the recorded action.
pub fn trial_probabilities(
    mdp: &Mdp,
    data: &SubjectData,
    model: ModelKind,
    p: &ModelParams,
) -> Result<Vec<f64>, FitError> {
    p.validate(model).map_err(FitError::Params)?;
    data.validate(mdp)?;
    let mut out = Vec::with_capacity(data.n_trials());
    replay(mdp, data, model, p, Some(&mut out))?;
    Ok(out)
}

/// `B = −2L + k·ln n`.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + k as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub bounds: ParamBounds,
    pub optimizer: NelderMeadOptions,
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: 16, bounds: ParamBounds::default(), optimizer: NelderMeadOptions::default(), exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub subject: String,
    pub model: ModelKind,
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub bic: f64,
    /// `B − B` of the standard Q-learning fit, when one was made.
    pub delta_bic: Option<f64>,
    pub n_trials: usize,
    /// Probability of each recorded action at the fitted parameters.
    pub probs: Vec<f64>,
    pub starts: usize,
    pub failed_starts: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.model.n_params()
    }
}

/// Multi-start bounded maximum likelihood. `baseline` adds one start at the given parameters;
/// the result is never worse than that start.
pub fn fit(
    mdp: &Mdp,
    data: &SubjectData,
    model: ModelKind,
    baseline: Option<&ModelParams>,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    if data.n_trials() == 0 {
        return Err(FitError::Empty(data.id.clone()));
    }
    data.validate(mdp)?;
    let b = opts.bounds;
    let mut starts = halton_starts(model, opts.starts);
    if let Some(p) = baseline {
        starts.push(b.encode(model, p));
    }
    if starts.is_empty() {
        return Err(FitError::AllStartsFailed("no start points".into()));
    }
    let objective = |z: &[f64]| match replay(mdp, data, model, &b.decode(model, z), None) {
        Ok(l) => -l,
        Err(_) => f64::INFINITY,
    };
    let runs = map_range(starts.len(), opts.exec, |i| minimize(objective, &starts[i], &opts.optimizer));
    let failed_starts = runs.iter().filter(|r| !r.f.is_finite()).count();
    // earliest start wins ties so the choice is independent of scheduling
    let best = runs
        .iter()
        .filter(|r| r.f.is_finite())
        .fold(None::<&NelderMeadResult>, |acc, r| match acc {
            Some(a) if a.f <= r.f => Some(a),
            _ => Some(r),
        })
        .ok_or_else(|| FitError::AllStartsFailed(format!("{} starts, all non-finite", runs.len())))?;
    let params = b.decode(model, &best.x);
    let mut probs = Vec::with_capacity(data.n_trials());
    let log_likelihood = replay(mdp, data, model, &params, Some(&mut probs))?;
    Ok(FitResult {
        subject: data.id.clone(),
        model,
        params,
        log_likelihood,
        bic: bic(log_likelihood, model.n_params(), data.n_trials()),
        delta_bic: None,
        n_trials: data.n_trials(),
        probs,
        starts: starts.len(),
        failed_starts,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        converged: best.converged,
    })
}

/// Fits standard Q-learning first, then every other model in `models` with the nested start
/// derived from it, and fills `delta_bic` against the standard fit. Output follows `models`.
pub fn compare_models(
    mdp: &Mdp,
    data: &SubjectData,
    models: &[ModelKind],
    opts: &FitOptions,
) -> Result<Vec<FitResult>, FitError> {
    let base = fit(mdp, data, ModelKind::StandardQ, None, opts)?;
    let bp = base.params;
    let mut out = Vec::with_capacity(models.len());
    for &m in models {
        let mut r = match m {
            ModelKind::StandardQ => base.clone(),
            ModelKind::Rsql => fit(mdp, data, m, Some(&ModelParams::rsql(bp.beta, bp.gamma, bp.alpha, 1.0, bp.alpha, 1.0)), opts)?,
            ModelKind::Eu => fit(mdp, data, m, Some(&ModelParams::eu(bp.alpha, bp.beta, bp.gamma, 1.0, 1.0, 1.0, 1.0)), opts)?,
        };
        r.delta_bic = Some(r.bic - base.bic);
        out.push(r);
    }
    Ok(out)
}

/// Generates `n_trials` choices of a softmax agent following `model` with parameters `p`.
pub fn simulate_subject(
    mdp: &Mdp,
    model: ModelKind,
    p: &ModelParams,
    n_trials: usize,
    start_state: usize,
    seed: u64,
) -> Result<SubjectData, FitError> {
    p.validate(model).map_err(FitError::Params)?;
    if start_state >= mdp.n_states() {
        return Err(MdpError::StateOutOfRange(start_state).into());
    }
    let (rule, alpha) = p.update_rule(model);
    let mut rng: SimRng = rng_from_seed(seed);
    let mut q = QTable::zeros(mdp);
    let mut s = start_state;
    let mut transitions = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let a = softmax_action(&q, s, p.beta, &mut rng);
        let tr = sample_transition(mdp, s, a, t, &mut rng)?;
        let (td, delta) = rule.apply(&mut q, &tr, p.gamma, alpha);
        if !(td.is_finite() && delta.is_finite()) {
            return Err(FitError::Numeric { trial: t });
        }
        s = tr.next_state;
        transitions.push(tr);
    }
    Ok(SubjectData::new(format!("synthetic-{seed}"), transitions))
}

/// Root `m` of `(1/N)·Σ u(r_i − m) = 0`.
pub fn empirical_subjective_mean(rewards: &[f64], u: &Utility, tol: f64) -> Result<f64, FitError> {
    if rewards.is_empty() {
        return Err(FitError::Data("no rewards".into()));
    }
    let sf = Shortfall::new(u.clone(), 0.0)?;
    let probs = vec![1.0 / rewards.len() as f64; rewards.len()];
    Ok(sf.value_of(rewards, &probs, tol)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectiveAnalysis {
    pub m_sub: f64,
    pub m_emp: f64,
    /// `(m_sub − m_emp)/(max r − min r)`; positive means reward probabilities are overestimated.
    pub delta_p: f64,
}

pub fn normalized_subjective_probability(rewards: &[f64], u: &Utility, tol: f64) -> Result<SubjectiveAnalysis, FitError> {
    let m_sub = empirical_subjective_mean(rewards, u, tol)?;
    let m_emp = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let (lo, hi) = rewards.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    if hi <= lo {
        return Err(FitError::Data("normalized subjective probability needs two distinct rewards".into()));
    }
    Ok(SubjectiveAnalysis { m_sub, m_emp, delta_p: (m_sub - m_emp) / (hi - lo) })
}
