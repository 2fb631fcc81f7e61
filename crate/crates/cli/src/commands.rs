use std::fs::File;
use std::path::Path;

use anyhow::Context;
use riskrl::fitting::{compare_models, normalized_subjective_probability, simulate_subject, FitOptions, ModelKind, SubjectData};
use riskrl::learner::{exploration_report, run, LearnError, LearnerConfig};
use riskrl::mdp::{
    path_statistics, read_trajectory, simulate, write_trajectory, MdpError, SimPolicy, TrajectoryRecord,
};
use riskrl::par::Exec;
use riskrl::solver::{greedy_policy, value_iteration_with, QTable, SolveOptions};
use riskrl::valuation::{subjective_probability, Shortfall};
use riskrl::{format_float, rng_from_seed};

use crate::config::{
    invalid, resolve, CurvesConfig, FitConfig, LearnConfig, PolicySpec, SimulateConfig, SolveConfig,
};

/// Inputs shared by every command.
pub struct Ctx<'a> {
    /// Directory of the config file.
    pub base: &'a Path,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub exec: Exec,
}

fn csv_writer(dir: &Path, name: &str, header: &[&str]) -> anyhow::Result<csv::Writer<File>> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

fn write_q(out: &Path, q: &QTable) -> anyhow::Result<()> {
    let mut w = csv_writer(out, "q.csv", &["state", "action", "q"])?;
    for (s, a, v) in q.pairs() {
        w.write_record([s.to_string(), a.to_string(), format_float(v)])?;
    }
    Ok(w.flush()?)
}

/// Validation problems are config errors; everything else is a runtime failure.
fn learn_error(e: LearnError) -> anyhow::Error {
    match e {
        LearnError::Config(_) | LearnError::Mdp(MdpError::StateOutOfRange(_)) | LearnError::Valuation(_) => invalid(e),
        other => other.into(),
    }
}

pub fn solve(cfg: &SolveConfig, ctx: &Ctx) -> anyhow::Result<()> {
    let mdp = cfg.mdp.discrete(&cfg.mdp.load(ctx.base)?);
    let sf = cfg.shortfall.build()?;
    let opts =
        SolveOptions { tol: cfg.solve.tol, max_iter: cfg.solve.max_iter, root_tol: cfg.solve.root_tol, exec: ctx.exec };
    let sol = value_iteration_with(&mdp, &sf, &opts)?;
    let mut w = csv_writer(ctx.out, "v.csv", &["state", "v"])?;
    for (s, v) in sol.v.iter().enumerate() {
        w.write_record([s.to_string(), format_float(*v)])?;
    }
    w.flush()?;
    write_q(ctx.out, &sol.q)?;
    let mut w = csv_writer(ctx.out, "policy.csv", &["state", "action"])?;
    for (s, a) in greedy_policy(&sol.q).into_iter().enumerate() {
        w.write_record([s.to_string(), a.to_string()])?;
    }
    w.flush()?;
    eprintln!("value iteration converged in {} sweeps (last step {:.3e})", sol.iterations, sol.residual);
    Ok(())
}

pub fn learn(cfg: &LearnConfig, ctx: &Ctx) -> anyhow::Result<()> {
    let mdp = cfg.mdp.load(ctx.base)?;
    let l = &cfg.learner;
    let gamma = l.gamma.unwrap_or(mdp.gamma());
    let seed = ctx.seed.or(cfg.seed).unwrap_or(0);
    let lc = LearnerConfig {
        algorithm: l.algorithm,
        shortfall: cfg.shortfall.build()?,
        gamma,
        schedule: l.schedule,
        beta: l.beta,
        steps: l.steps,
        seed,
        start_state: l.start_state,
        truncation: l.truncation,
        clamp_q: l.clamp_q,
        q_init: l.q_init,
        record_trace: l.trace,
        snapshot_every: None,
    };
    let out = run(&mdp, &lc).map_err(learn_error)?;
    write_q(ctx.out, &out.q)?;
    let mut w = csv_writer(ctx.out, "counts.csv", &["state", "action", "count"])?;
    for (s, a, n) in out.counts.pairs() {
        w.write_record([s.to_string(), a.to_string(), n.to_string()])?;
    }
    w.flush()?;
    if let Some(trace) = &out.trace {
        let mut w =
            csv_writer(ctx.out, "trace.csv", &["t", "state", "action", "reward", "next_state", "td", "update"])?;
        for ((tr, td), up) in trace.transitions.iter().zip(&trace.td).zip(&trace.update) {
            w.write_record([
                tr.t.to_string(),
                tr.state.to_string(),
                tr.action.to_string(),
                format_float(tr.reward),
                tr.next_state.to_string(),
                format_float(*td),
                format_float(*up),
            ])?;
        }
        w.flush()?;
    }
    let gap = if l.oracle {
        let exact = cfg.mdp.discrete(&mdp.with_gamma(gamma).map_err(invalid)?);
        let opts = SolveOptions { tol: l.oracle_tol, exec: ctx.exec, ..Default::default() };
        let star = value_iteration_with(&exact, &lc.shortfall, &opts)?;
        format_float(out.q.distance(&star.q))
    } else {
        String::new()
    };
    let report = exploration_report(&out.counts);
    let mut w = csv_writer(ctx.out, "summary.csv", &["seed", "steps", "min_count", "starved", "gap"])?;
    w.write_record([seed.to_string(), l.steps.to_string(), report.min_count.to_string(), report.starved.len().to_string(), gap])?;
    Ok(w.flush()?)
}

pub fn simulate_cmd(cfg: &SimulateConfig, ctx: &Ctx) -> anyhow::Result<()> {
    let mdp = cfg.mdp.load(ctx.base)?;
    let sim = &cfg.simulate;
    let seed = ctx.seed.or(cfg.seed).unwrap_or(0);
    if sim.start_state >= mdp.n_states() {
        return Err(invalid(format!("start_state {} out of range", sim.start_state)));
    }
    let transitions = match &sim.agent {
        Some(agent) => {
            let p = agent.params();
            p.validate(agent.model).map_err(invalid)?;
            simulate_subject(&mdp, agent.model, &p, sim.steps, sim.start_state, seed)?.transitions
        }
        None => {
            let policy = match &sim.policy {
                PolicySpec::Uniform {} => SimPolicy::Uniform,
                PolicySpec::Constant { action } => SimPolicy::Constant(*action),
                PolicySpec::Deterministic { actions } => SimPolicy::Deterministic(actions.clone()),
            };
            // check the policy everywhere up front so a bad action is a config error
            for s in 0..mdp.n_states() {
                if !mdp.actions(s).is_empty() {
                    policy.choose(&mdp, s, &mut rng_from_seed(0)).map_err(invalid)?;
                }
            }
            simulate(&mdp, &policy, sim.start_state, sim.steps, &mut rng_from_seed(seed))?
        }
    };
    let records = TrajectoryRecord::number_rounds(&transitions, sim.start_state);
    let path = ctx.out.join("trajectory.csv");
    write_trajectory(File::create(&path).with_context(|| format!("creating {}", path.display()))?, &records)?;

    if let Some(rounds) = sim.path_rounds {
        if !cfg.mdp.is_game() {
            return Err(invalid("path_rounds needs the investment game (`[mdp] game = {...}`)"));
        }
        let stats = path_statistics(&mdp, rounds, seed, ctx.exec).map_err(invalid)?;
        let mut w = csv_writer(
            ctx.out,
            "path_stats.csv",
            &["path", "rounds", "frequency", "ev", "std", "std_error", "exact_ev", "exact_std"],
        )?;
        for s in stats {
            w.write_record([
                s.path.to_string(),
                s.rounds.to_string(),
                format_float(s.frequency),
                format_float(s.ev),
                format_float(s.std),
                format_float(s.std_error),
                format_float(s.exact_ev),
                format_float(s.exact_std),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

const FIT_HEADER: [&str; 14] = [
    "subject", "model", "L", "B", "dB", "beta", "gamma", "k_plus", "l_plus", "k_minus", "l_minus", "alpha", "converged",
    "error",
];

fn load_subject(id: String, path: &Path) -> anyhow::Result<SubjectData> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SubjectData::from_records(id, &read_trajectory(file)?))
}

pub fn fit_cmd(cfg: &FitConfig, ctx: &Ctx) -> anyhow::Result<()> {
    let mdp = cfg.mdp.load(ctx.base)?;
    let f = &cfg.fit;
    if f.models.is_empty() {
        return Err(invalid("[fit] models is empty"));
    }
    let analysis_model = f.analysis_model.or_else(|| {
        [ModelKind::Rsql, ModelKind::Eu].into_iter().find(|m| f.models.contains(m))
    });
    let opts = FitOptions { starts: f.starts, bounds: f.bounds, optimizer: f.optimizer, exec: ctx.exec };
    let mut fits = csv_writer(ctx.out, "fit.csv", &FIT_HEADER)?;
    let mut analysis = csv_writer(ctx.out, "analysis.csv", &["subject", "m_sub", "m_emp", "dp"])?;
    let mut failures = 0;
    for subject in &f.subjects {
        let id = subject.id();
        let result = load_subject(id.clone(), &resolve(ctx.base, subject.file())).and_then(|data| {
            let results = compare_models(&mdp, &data, &f.models, &opts)?;
            Ok((data, results))
        });
        let (data, results) = match result {
            Ok(r) => r,
            Err(e) => {
                failures += 1;
                eprintln!("subject {id}: {e:#}");
                let mut row = vec![id];
                row.extend(std::iter::repeat_n(String::new(), FIT_HEADER.len() - 3));
                row.extend(["false".to_string(), format!("{e:#}")]);
                fits.write_record(&row)?;
                continue;
            }
        };
        for r in &results {
            let p = r.params;
            fits.write_record([
                r.subject.clone(),
                r.model.name().to_string(),
                format_float(r.log_likelihood),
                format_float(r.bic),
                r.delta_bic.map(format_float).unwrap_or_default(),
                format_float(p.beta),
                format_float(p.gamma),
                format_float(p.k_plus),
                format_float(p.l_plus),
                format_float(p.k_minus),
                format_float(p.l_minus),
                format_float(p.alpha),
                r.converged.to_string(),
                String::new(),
            ])?;
        }
        if let Some(r) = analysis_model.and_then(|m| results.iter().find(|r| r.model == m)) {
            let rewards: Vec<f64> = data.transitions.iter().map(|t| t.reward).collect();
            match normalized_subjective_probability(&rewards, &r.params.utility(), 1e-12) {
                Ok(a) => analysis.write_record([
                    r.subject.clone(),
                    format_float(a.m_sub),
                    format_float(a.m_emp),
                    format_float(a.delta_p),
                ])?,
                Err(e) => eprintln!("subject {}: no subjective-probability analysis: {e}", r.subject),
            }
        }
    }
    fits.flush()?;
    analysis.flush()?;
    if failures > 0 {
        eprintln!("{failures} of {} subjects failed; see the error column of fit.csv", f.subjects.len());
    }
    Ok(())
}

pub fn curves(cfg: &CurvesConfig, ctx: &Ctx) -> anyhow::Result<()> {
    let c = &cfg.curves;
    if c.x_points < 2 || c.x_max <= c.x_min || c.p_points == 0 || !(c.tol > 0.0) {
        return Err(invalid("[curves] needs x_points ≥ 2, x_max > x_min, p_points ≥ 1 and tol > 0"));
    }
    let shortfalls = c
        .utility
        .iter()
        .map(|n| Shortfall::new(n.utility.clone(), c.x0).map_err(|e| invalid(format!("curve {}: {e}", n.name))))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut w = csv_writer(ctx.out, "utility.csv", &["name", "x", "value"])?;
    for n in &c.utility {
        for i in 0..c.x_points {
            let x = c.x_min + (c.x_max - c.x_min) * i as f64 / (c.x_points - 1) as f64;
            w.write_record([n.name.clone(), format_float(x), format_float(n.utility.value(x))])?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(ctx.out, "wp.csv", &["name", "p", "w"])?;
    for (n, sf) in c.utility.iter().zip(&shortfalls) {
        for i in 1..=c.p_points {
            let p = i as f64 / (c.p_points + 1) as f64;
            let wp = subjective_probability(c.x1, c.x2, p, sf, c.tol)?;
            w.write_record([n.name.clone(), format_float(p), format_float(wp)])?;
        }
    }
    Ok(w.flush()?)
}
