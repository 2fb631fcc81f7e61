//! TOML schema shared by every subcommand. Unknown keys are errors; relative paths are
//! resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use riskrl::fitting::{ModelKind, ModelParams, NelderMeadOptions, ParamBounds};
use riskrl::learner::{Algorithm, Schedule, TruncationSpec};
use riskrl::mdp::{build_investment_game, InvestmentGameConfig, Mdp, MdpDefinition};
use riskrl::valuation::{Shortfall, Utility};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Invalid input: bad config, missing file or failed validation. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl fmt::Display) -> anyhow::Error {
    ConfigError(msg.to_string()).into()
}

pub fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Where the MDP comes from: exactly one of `file` or `game`.
///
/// ```toml
/// [mdp]
/// file = "three_state.toml"
/// # or
/// game = {}            # investment game, fields override the defaults
/// discretize = 41      # quantiles per mixture component where exact values are needed
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub file: Option<PathBuf>,
    pub game: Option<InvestmentGameConfig>,
    pub discretize: Option<usize>,
}

pub const DEFAULT_QUANTILES: usize = 41;

impl MdpSpec {
    pub fn load(&self, base: &Path) -> anyhow::Result<Mdp> {
        match (&self.file, &self.game) {
            (Some(file), None) => {
                let path = resolve(base, file);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let def = MdpDefinition::from_toml(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                Mdp::new(&def).map_err(|e| invalid(format!("{}: {e}", path.display())))
            }
            (None, Some(game)) => build_investment_game(game).map_err(invalid),
            _ => Err(invalid("[mdp] needs exactly one of `file` or `game`")),
        }
    }

    pub fn is_game(&self) -> bool {
        self.game.is_some()
    }

    /// The MDP with every reward made discrete, as the solver requires.
    pub fn discrete(&self, mdp: &Mdp) -> Mdp {
        if mdp.all_rewards_discrete() {
            mdp.clone()
        } else {
            mdp.discretized(self.discretize.unwrap_or(DEFAULT_QUANTILES))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortfallSpec {
    #[serde(default = "linear")]
    pub utility: Utility,
    #[serde(default)]
    pub x0: f64,
}

fn linear() -> Utility {
    Utility::Linear
}

impl Default for ShortfallSpec {
    fn default() -> Self {
        Self { utility: Utility::Linear, x0: 0.0 }
    }
}

impl ShortfallSpec {
    pub fn build(&self) -> anyhow::Result<Shortfall> {
        Shortfall::new(self.utility.clone(), self.x0).map_err(invalid)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub mdp: MdpSpec,
    #[serde(default)]
    pub shortfall: ShortfallSpec,
    #[serde(default)]
    pub solve: SolveSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub tol: f64,
    pub max_iter: usize,
    pub root_tol: Option<f64>,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, root_tol: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub mdp: MdpSpec,
    #[serde(default)]
    pub shortfall: ShortfallSpec,
    pub learner: LearnerSection,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub algorithm: Algorithm,
    #[serde(default = "inverse_visit")]
    pub schedule: Schedule,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub start_state: usize,
    /// Overrides the MDP's discount.
    pub gamma: Option<f64>,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub clamp_q: bool,
    #[serde(default)]
    pub q_init: f64,
    /// Write trace.csv.
    #[serde(default)]
    pub trace: bool,
    /// Solve for `Q*` and report the sup-norm gap in summary.csv.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "oracle_tol")]
    pub oracle_tol: f64,
}

fn inverse_visit() -> Schedule {
    Schedule::InverseVisit
}

fn one() -> f64 {
    1.0
}

fn default_steps() -> usize {
    10_000
}

fn oracle_tol() -> f64 {
    1e-10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub mdp: MdpSpec,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub policy: PolicySpec,
    /// A learning agent to generate choices instead of `policy`.
    pub agent: Option<AgentSpec>,
    pub steps: usize,
    pub start_state: usize,
    /// Rounds for path_stats.csv (investment game only).
    pub path_rounds: Option<usize>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { policy: PolicySpec::Uniform {}, agent: None, steps: 240, start_state: 0, path_rounds: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    // braces keep deny_unknown_fields in force for this variant
    Uniform {},
    Constant { action: usize },
    Deterministic { actions: Vec<usize> },
}

/// Parameters of a simulated subject. Fields a model does not use are ignored.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub model: ModelKind,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub k_plus: f64,
    #[serde(default = "one")]
    pub l_plus: f64,
    #[serde(default = "one")]
    pub k_minus: f64,
    #[serde(default = "one")]
    pub l_minus: f64,
}

impl AgentSpec {
    pub fn params(&self) -> ModelParams {
        match self.model {
            ModelKind::Rsql => {
                ModelParams::rsql(self.beta, self.gamma, self.k_plus, self.l_plus, self.k_minus, self.l_minus)
            }
            ModelKind::Eu => ModelParams::eu(
                self.alpha,
                self.beta,
                self.gamma,
                self.k_plus,
                self.l_plus,
                self.k_minus,
                self.l_minus,
            ),
            ModelKind::StandardQ => ModelParams::standard(self.alpha, self.beta, self.gamma),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub mdp: MdpSpec,
    pub fit: FitSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// One trajectory CSV per subject.
    pub subjects: Vec<SubjectSpec>,
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub bounds: ParamBounds,
    #[serde(default)]
    pub optimizer: NelderMeadOptions,
    /// Model whose fitted utility feeds analysis.csv. Defaults to rsql, then eu.
    pub analysis_model: Option<ModelKind>,
}

/// A trajectory path (the file stem is the subject id) or `{ id = "...", file = "..." }`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SubjectSpec {
    Path(PathBuf),
    Named { id: String, file: PathBuf },
}

impl SubjectSpec {
    pub fn file(&self) -> &Path {
        match self {
            SubjectSpec::Path(p) => p,
            SubjectSpec::Named { file, .. } => file,
        }
    }

    pub fn id(&self) -> String {
        match self {
            SubjectSpec::Path(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            SubjectSpec::Named { id, .. } => id.clone(),
        }
    }
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_starts() -> usize {
    16
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesConfig {
    #[serde(default)]
    pub curves: CurvesSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesSection {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    /// Interior grid `i/(p_points + 1)`.
    pub p_points: usize,
    pub x1: f64,
    pub x2: f64,
    pub x0: f64,
    pub tol: f64,
    pub utility: Vec<NamedUtility>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedUtility {
    pub name: String,
    pub utility: Utility,
}

impl Default for CurvesSection {
    fn default() -> Self {
        let named = |name: &str, utility| NamedUtility { name: name.into(), utility };
        let mix = |k_plus, l_plus, k_minus, l_minus| Utility::PolynomialMixed { k_plus, l_plus, k_minus, l_minus };
        Self {
            x_min: -3.0,
            x_max: 3.0,
            x_points: 121,
            p_points: 99,
            x1: 1.0,
            x2: -1.0,
            x0: 0.0,
            tol: 1e-12,
            utility: vec![
                named("lin", Utility::Linear),
                named("RA", Utility::Exponential { lambda: -1.0 }),
                named("RS", Utility::Exponential { lambda: 1.0 }),
                named("mix1", mix(0.5, 2.0, 1.0, 2.0)),
                named("mix2", mix(1.0, 0.5, 1.5, 0.5)),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<SolveConfig>("[mdp]\ngame = {}\nbogus = 1\n").is_err());
        assert!(toml::from_str::<SolveConfig>("[mdp]\ngame = {}\n[solve]\ntoll = 1\n").is_err());
        assert!(toml::from_str::<CurvesConfig>("[curves]\nx_points = 3\nxmax = 1\n").is_err());
        let ok: SolveConfig = toml::from_str("[mdp]\ngame = { gamma = 0.5 }\n").unwrap();
        assert_eq!(ok.mdp.game.unwrap().gamma, 0.5);
    }

    #[test]
    fn agent_params_follow_the_model() {
        let a: AgentSpec = toml::from_str("model = \"standard_q\"\nbeta = 2.0\ngamma = 0.9\nalpha = 0.3\n").unwrap();
        assert_eq!(a.params(), ModelParams::standard(0.3, 2.0, 0.9));
        let a: AgentSpec = toml::from_str("model = \"rsql\"\nbeta = 2.0\ngamma = 0.9\nl_plus = 0.5\n").unwrap();
        assert_eq!(a.params(), ModelParams::rsql(2.0, 0.9, 1.0, 0.5, 1.0, 1.0));
    }

    #[test]
    fn subjects_accept_paths_and_named_tables() {
        let f: FitSection =
            toml::from_str("subjects = [\"a/s1.csv\", { id = \"s2\", file = \"b/trajectory.csv\" }]\n").unwrap();
        assert_eq!(f.subjects.iter().map(SubjectSpec::id).collect::<Vec<_>>(), ["s1", "s2"]);
        assert_eq!(f.subjects[1].file(), Path::new("b/trajectory.csv"));
        assert_eq!(f.models, ModelKind::ALL);
    }

    #[test]
    fn mdp_source_must_be_unique() {
        let spec = MdpSpec { file: Some("x.toml".into()), game: Some(Default::default()), discretize: None };
        assert!(spec.load(Path::new(".")).unwrap_err().downcast_ref::<ConfigError>().is_some());
        assert!(MdpSpec::default().load(Path::new(".")).is_err());
    }
}
