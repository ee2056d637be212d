//! Configuration-driven pipeline: every analysis stage as a function of an
//! [`ExperimentConfig`], assembled into a deterministic [`RunReport`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalogue::{build_field, FieldParams};
use crate::connections::{
    default_seeds, find_equilibria, linearization_spectrum, max_energy_increase, morse_index, newton,
    origin_unstable_directions, shoot_connection, EnergyFunctional, Equilibrium, ShotOutcome, DEDUP_DISTANCE,
};
use crate::decomposition::{classify, counts, spectral_gap, Block, CountVector, Projection, Sign, SplitIndexSet};
use crate::error::{Error, Result};
use crate::index::{connection_verdict, d_zero, nonresonance_at_origin, BlockStatus, HomotopyType, IndexBranch, LinearizationData};
use crate::nonlinearity::{
    check_bounded, check_sign_condition, origin_jacobian, vanishes_at_origin, verify_limits, ConditionReport,
    NonlinearField, SampleGrid, Verdict,
};
use crate::resonance::{
    degree_sets, evaluate_ll, guiding_margin, guiding_radius, DegreeSets, LlCondition, LlReport, MarginRow,
    MarginSampling, DEFAULT_SPHERE_SAMPLES,
};
use crate::semiflow::{
    apriori_bounds, box_excursion, check_bounded_solution, default_c6, integrate, AprioriBounds, BoundednessReport,
    BoxExcursion, BoxFace, IntegratorSettings, IsolatingBox, NormSample, Scheme, Trajectory,
};
use crate::spectral::{
    build_basis, fractional_norm, required_nodes, Domain1D, EigenPair, ProblemConfig, SpectralBasis,
    DEFAULT_MODES, DEFAULT_RESONANCE_TOL,
};
use crate::state::{GalerkinState, Mode};

/// A shift given as a number or as `"mu<j>"`, the `j`-th Dirichlet
/// eigenvalue `(j pi / L)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSpec {
    Value(f64),
    Named(String),
}

impl ShiftSpec {
    pub fn resolve(&self, length: f64) -> Result<f64> {
        match self {
            ShiftSpec::Value(v) => Ok(*v),
            ShiftSpec::Named(s) => {
                let j: usize = s
                    .trim()
                    .strip_prefix("mu")
                    .and_then(|r| r.parse().ok())
                    .filter(|j| *j >= 1)
                    .ok_or_else(|| Error::Config(format!("shift {s:?} is neither a number nor mu<j>")))?;
                let k = j as f64 * PI / length;
                Ok(k * k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Defaults to the smallest admissible node count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
}

fn default_length() -> f64 {
    1.0
}

fn default_modes() -> usize {
    DEFAULT_MODES
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            length: 1.0,
            modes: DEFAULT_MODES,
            quad_nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub m: usize,
    pub l: usize,
    pub lambda: Vec<ShiftSpec>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_tol")]
    pub resonance_tol: f64,
}

fn default_alpha() -> f64 {
    0.8
}

fn default_p() -> f64 {
    2.0
}

fn default_tol() -> f64 {
    DEFAULT_RESONANCE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub name: String,
    #[serde(default)]
    pub params: FieldParams,
    /// Constant `h_k` for the `+` sign condition, one per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_plus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_minus: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    /// Number of seeded initial states per homotopy parameter.
    #[serde(default = "default_seed_count")]
    pub seeds: usize,
    /// Initial states fill this fraction of each box radius.
    #[serde(default = "default_fill")]
    pub initial_fill: f64,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    /// Horizon of connection shots; defaults to `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shoot_t_end: Option<f64>,
    /// Fraction of the horizon discarded before comparing with the bounds.
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default = "default_tol_drift")]
    pub tol_drift: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Random draws of the condition sample grid.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_sphere_samples")]
    pub sphere_samples: usize,
    #[serde(default = "default_r_grid")]
    pub guiding_r_grid: Vec<f64>,
    #[serde(default = "default_margin_samples")]
    pub margin_samples: usize,
    /// Equilibrium search seeds `a phi_j e_k` for `j <= newton_modes`.
    #[serde(default = "default_newton_modes")]
    pub newton_modes: usize,
    #[serde(default = "default_newton_amplitudes")]
    pub newton_amplitudes: Vec<f64>,
}

fn default_scheme() -> Scheme {
    Scheme::Etd1
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    10.0
}
fn default_s_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_seed_count() -> usize {
    20
}
fn default_fill() -> f64 {
    0.9
}
fn default_eps_grid() -> Vec<f64> {
    vec![1e-4]
}
fn default_transient() -> f64 {
    0.2
}
fn default_tol_drift() -> f64 {
    1e-3
}
fn default_record_every() -> usize {
    10
}
fn default_samples() -> usize {
    200
}
fn default_sphere_samples() -> usize {
    DEFAULT_SPHERE_SAMPLES
}
fn default_r_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
}
fn default_margin_samples() -> usize {
    64
}
fn default_newton_modes() -> usize {
    3
}
fn default_newton_amplitudes() -> Vec<f64> {
    vec![0.01, -0.01, 0.05, -0.05, 0.2, -0.2]
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all run fields have defaults")
    }
}

/// A complete experiment description, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds every random choice of the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainSection,
    pub system: SystemSection,
    pub field: FieldSection,
    #[serde(default)]
    pub run: RunSection,
}

/// The validated objects a config describes.
#[derive(Debug, Clone)]
pub struct Setup {
    pub basis: SpectralBasis,
    pub problem: ProblemConfig,
    pub field: NonlinearField,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// JSON for `.json` files, TOML otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Builds basis, problem and field, surfacing every invariant violation.
    pub fn setup(&self) -> Result<Setup> {
        let sys = &self.system;
        let length = self.domain.length;
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("domain length {length} must be positive")));
        }
        if sys.lambda.len() != sys.m || sys.sigma.len() != sys.m {
            return Err(Error::Config(format!(
                "m = {} but lambda has {} and sigma {} entries",
                sys.m,
                sys.lambda.len(),
                sys.sigma.len()
            )));
        }
        let lambda = sys
            .lambda
            .iter()
            .map(|s| s.resolve(length))
            .collect::<Result<Vec<_>>>()?;
        let problem = ProblemConfig::new(lambda, sys.sigma.clone(), sys.l, sys.alpha)?
            .with_p(sys.p)?
            .with_resonance_tol(sys.resonance_tol)?;
        let nodes = self
            .domain
            .quad_nodes
            .unwrap_or_else(|| required_nodes(self.domain.modes));
        let basis = build_basis(Domain1D::new(length, nodes)?, self.domain.modes)?;
        let field = build_field(&self.field.name, &self.field.params, &problem.sigma, length)?;
        for (name, h) in [("h_plus", &self.field.h_plus), ("h_minus", &self.field.h_minus)] {
            if let Some(h) = h {
                if h.len() != sys.m {
                    return Err(Error::Config(format!("{name} has {} entries for {} components", h.len(), sys.m)));
                }
            }
        }
        let run = &self.run;
        if !(run.dt > 0.0 && run.t_end > 0.0) {
            return Err(Error::Config("dt and t_end must be positive".into()));
        }
        if let Some(s) = run.s_grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!("homotopy parameter {s} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&run.transient) {
            return Err(Error::Config("transient must lie in [0, 1)".into()));
        }
        if !(run.initial_fill > 0.0 && run.initial_fill <= 1.0) {
            return Err(Error::Config("initial_fill must lie in (0, 1]".into()));
        }
        if run.guiding_r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("guiding_r_grid must be increasing".into()));
        }
        Ok(Setup { basis, problem, field })
    }

    fn settings(&self) -> IntegratorSettings {
        IntegratorSettings::new(self.run.dt, self.run.t_end)
            .with_scheme(self.run.scheme)
            .with_tol_drift(self.run.tol_drift)
            .with_record_every(self.run.record_every)
    }
}

/// Output of a stage that may not run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Stage<T> {
    Ran(T),
    Skipped { skipped: String },
}

impl<T> Stage<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        Stage::Skipped { skipped: reason.into() }
    }

    pub fn ran(&self) -> Option<&T> {
        match self {
            Stage::Ran(t) => Some(t),
            Stage::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub length: f64,
    pub modes: usize,
    pub quad_nodes: usize,
    pub eigenpairs: Vec<EigenPair>,
    /// `max |G - I|` of the discrete Gram matrix.
    pub gram_error: f64,
}

pub fn spectrum_stage(basis: &SpectralBasis) -> SpectrumReport {
    let gram = basis.gram();
    let n = gram.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((gram[(i, j)] - target).abs());
        }
    }
    SpectrumReport {
        length: basis.length(),
        modes: basis.modes(),
        quad_nodes: basis.node_count(),
        eigenpairs: basis.pairs().to_vec(),
        gram_error: err,
    }
}

/// `j,mu_j` rows, one-based.
pub fn spectrum_csv(basis: &SpectralBasis) -> String {
    let mut out = String::from("j,mu_j\n");
    for p in basis.pairs() {
        out.push_str(&format!("{},{}\n", p.index, p.value));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub lambda: Vec<f64>,
    pub counts: CountVector,
    pub n1_modes: Vec<Mode>,
    pub n2_modes: Vec<Mode>,
    pub minus_modes: Vec<Mode>,
    /// The `X+` modes are the complement; only their number is listed.
    pub plus_count: usize,
    pub spectral_gap: Option<f64>,
    /// One-based components with trivial kernel.
    pub nonresonant_components: Vec<usize>,
    pub degree_sets: DegreeSets,
}

pub fn decomposition_stage(split: &SplitIndexSet, problem: &ProblemConfig) -> Result<DecompositionReport> {
    Ok(DecompositionReport {
        lambda: problem.lambda.clone(),
        counts: counts(split),
        n1_modes: split.n1_modes.clone(),
        n2_modes: split.n2_modes.clone(),
        minus_modes: split.minus_modes.clone(),
        plus_count: split.plus_modes.len(),
        spectral_gap: spectral_gap(split),
        nonresonant_components: split.nonresonant_components.iter().map(|k| k + 1).collect(),
        degree_sets: degree_sets(problem)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    pub bounded: ConditionReport,
    /// `C(k)+` and `C(k)-` for every component.
    pub sign_conditions: Vec<ConditionReport>,
    pub limits: Vec<ConditionReport>,
    pub ll: Vec<LlReport>,
    pub block_status: [BlockStatus; 2],
}

/// Limit sequence for the asymptotic check.
pub const LIMIT_SEQUENCE: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

fn sign_verdict(reports: &[ConditionReport], range: std::ops::Range<usize>, sign: Sign) -> Verdict {
    if range.is_empty() {
        return Verdict::Vacuous;
    }
    let wanted: Vec<String> = range.map(|k| format!("C({}){}", k + 1, sign.symbol())).collect();
    let all = reports
        .iter()
        .filter(|r| wanted.contains(&r.condition))
        .all(|r| r.verdict != Verdict::Fails);
    if all {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

pub fn conditions_stage(
    cfg: &ExperimentConfig,
    setup: &Setup,
    split: &SplitIndexSet,
) -> Result<ConditionsReport> {
    let Setup { basis, problem, field } = setup;
    let m = problem.m;
    let grid = SampleGrid::new(basis.nodes().to_vec(), m, cfg.run.samples, 1e3, 1e3, cfg.seed);
    let bounded = check_bounded(field, &grid);
    let c3 = field
        .bound_c3()
        .or(bounded.value)
        .unwrap_or(0.0);
    let mut sign_conditions = Vec::new();
    for k in 0..m {
        for (sign, given) in [(Sign::Plus, &cfg.field.h_plus), (Sign::Minus, &cfg.field.h_minus)] {
            let h = match given {
                Some(h) => Some(h[k]),
                None if problem.sigma[k] == 0.0 => Some(-c3),
                None => None,
            };
            let report = match h {
                Some(h) => {
                    let mut r = check_sign_condition(field, k, sign, &move |_x| h, &grid);
                    r.note = format!("{}; h = {h}", r.note);
                    r
                }
                None => ConditionReport {
                    condition: format!("C({}){}", k + 1, sign.symbol()),
                    verdict: Verdict::Fails,
                    value: None,
                    witness: None,
                    samples: 0,
                    note: "no h given for a positive degree of resonance".into(),
                },
            };
            sign_conditions.push(report);
        }
    }
    let limits = (0..m)
        .map(|k| verify_limits(field, k, &LIMIT_SEQUENCE, &grid))
        .collect::<Result<Vec<_>>>()?;
    let ll = LlCondition::all()
        .into_iter()
        .map(|c| evaluate_ll(field, basis, split, problem, c, cfg.run.sphere_samples, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let limits_ok = limits.iter().all(|r| r.verdict.holds());
    let status = |block: Block| {
        let ll_of = |sign| {
            ll.iter()
                .find(|r| r.block == block && r.sign == sign)
                .map(|r| r.verdict)
                .expect("all four conditions evaluated")
        };
        let range = split.block_components(block);
        let llv = (ll_of(Sign::Plus), ll_of(Sign::Minus));
        if llv == (Verdict::Vacuous, Verdict::Vacuous) {
            return BlockStatus::Vacuous;
        }
        if !bounded.verdict.holds() || !limits_ok {
            return BlockStatus::Unverified;
        }
        BlockStatus::from_verdicts(
            llv,
            (
                sign_verdict(&sign_conditions, range.clone(), Sign::Plus),
                sign_verdict(&sign_conditions, range, Sign::Minus),
            ),
        )
    };
    let block_status = [status(Block::First), status(Block::Second)];
    Ok(ConditionsReport {
        bounded,
        sign_conditions,
        limits,
        ll,
        block_status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexStage {
    pub counts: CountVector,
    pub block_status: [BlockStatus; 2],
    /// `D_u f(x, 0, 0)`, row-major; absent when the origin is no equilibrium.
    pub origin_jacobian: Option<Vec<Vec<f64>>>,
    pub theta: Option<Vec<f64>>,
    pub nonresonant_at_origin: Option<bool>,
    pub d0: Option<usize>,
    #[serde(rename = "h_K_infinity")]
    pub h_k_infinity: Option<HomotopyType>,
    #[serde(rename = "h_K_zero")]
    pub h_k_zero: Option<HomotopyType>,
    pub theorem_applied: IndexBranch,
    pub connection_predicted: bool,
    pub reason: String,
}

pub fn index_stage(setup: &Setup, split: &SplitIndexSet, conditions: &ConditionsReport) -> Result<IndexStage> {
    let Setup { basis, problem, field } = setup;
    let cv = counts(split);
    let [first, second] = conditions.block_status;
    let mut origin_g = None;
    let mut theta = None;
    let mut nonresonant = None;
    let mut d0 = None;
    if vanishes_at_origin(field, basis.nodes()) {
        let g = origin_jacobian(field, basis.nodes())?;
        let lin = LinearizationData::new(g.clone(), &problem.lambda)?;
        let nr = nonresonance_at_origin(basis, &lin, problem.resonance_tol);
        if nr {
            d0 = Some(d_zero(basis, &lin, problem.resonance_tol)?.d0);
        }
        origin_g = Some((0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect());
        theta = Some(lin.theta.clone());
        nonresonant = Some(nr);
    }
    let has_origin = nonresonant.is_some();
    let mut verdict = connection_verdict(cv, d0, first, second, nonresonant.unwrap_or(false));
    if !has_origin {
        verdict.connection_predicted = false;
        verdict.reason = "the origin is not an equilibrium".into();
    }
    Ok(IndexStage {
        counts: cv,
        block_status: conditions.block_status,
        origin_jacobian: origin_g,
        theta,
        nonresonant_at_origin: nonresonant,
        d0,
        h_k_infinity: verdict.h_k_infinity,
        h_k_zero: verdict.h_k_zero,
        theorem_applied: verdict.theorem_applied,
        connection_predicted: verdict.connection_predicted,
        reason: verdict.reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginTable {
    pub block: Block,
    pub sign: Sign,
    pub rows: Vec<MarginRow>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsStage {
    pub apriori: AprioriBounds,
    pub margins: Vec<MarginTable>,
    /// Absent when a block has no verified sign or no guiding radius.
    pub isolating_box: Option<IsolatingBox>,
    pub note: String,
}

pub fn bounds_stage(
    cfg: &ExperimentConfig,
    setup: &Setup,
    split: &SplitIndexSet,
    conditions: &ConditionsReport,
) -> Result<BoundsStage> {
    let Setup { basis, problem, field } = setup;
    let c3 = field.bound_c3().or(conditions.bounded.value).unwrap_or(0.0);
    let apriori = apriori_bounds(split, problem, default_c6(c3, problem.m, basis.length()))?;
    let sampling = MarginSampling {
        w_radius: apriori.r0(),
        v_radius: 1.0,
        samples: cfg.run.margin_samples,
        seed: cfg.seed,
    };
    let mut margins = Vec::new();
    let mut radii = [Some(0.0), Some(0.0)];
    let mut notes = Vec::new();
    for (i, block) in [Block::First, Block::Second].into_iter().enumerate() {
        match conditions.block_status[i] {
            BlockStatus::Vacuous => {}
            BlockStatus::Unverified => {
                radii[i] = None;
                notes.push(format!("block {} unverified", block.number()));
            }
            BlockStatus::Verified(sign) => {
                let rows = guiding_margin(field, basis, split, problem, block, sign, &cfg.run.guiding_r_grid, sampling)?;
                let radius = guiding_radius(&rows);
                if radius.is_none() {
                    notes.push(format!("block {}: no positive guiding margin on the grid", block.number()));
                }
                radii[i] = radius;
                margins.push(MarginTable { block, sign, rows, radius });
            }
        }
    }
    let isolating_box = match radii {
        [Some(r1), Some(r2)] => Some(IsolatingBox::from_radii(apriori.r0(), r1, r2)),
        _ => None,
    };
    Ok(BoundsStage {
        apriori,
        margins,
        isolating_box,
        note: if notes.is_empty() { "box built".into() } else { notes.join("; ") },
    })
}

/// `block,sign,R,min_margin` rows.
pub fn margins_csv(tables: &[MarginTable]) -> String {
    let mut out = String::from("block,sign,R,min_margin\n");
    for t in tables {
        for r in &t.rows {
            out.push_str(&format!("{},{},{},{}\n", t.block.number(), t.sign.symbol(), r.radius, r.min_margin));
        }
    }
    out
}

/// Faces through which trajectories may leave the box: the hyperbolic face
/// when `X-` is nontrivial and the face of every block verified with `+`.
pub fn exit_faces(cv: CountVector, status: [BlockStatus; 2]) -> Vec<BoxFace> {
    let mut faces = Vec::new();
    if cv.d_inf > 0 {
        faces.push(BoxFace::Hyperbolic);
    }
    if status[0] == BlockStatus::Verified(Sign::Plus) {
        faces.push(BoxFace::First);
    }
    if status[1] == BlockStatus::Verified(Sign::Plus) {
        faces.push(BoxFace::Second);
    }
    faces
}

/// Seeded initial states inside `bx`: every part (hyperbolic, first and
/// second kernel block) gets a random direction and a radius uniform in
/// `[0, fill * R)`.
pub fn initial_states(
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    problem: &ProblemConfig,
    bx: &IsolatingBox,
    count: usize,
    fill: f64,
    seed: u64,
) -> Result<Vec<GalerkinState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1417);
    let parts = [
        (Projection::QHyperbolic, bx.r0, true),
        (Projection::P1, bx.r1, false),
        (Projection::P2, bx.r2, false),
    ];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u = GalerkinState::zeros(split.components, split.modes);
        for (proj, radius, fractional) in parts {
            let modes = split.modes_of(proj);
            if modes.is_empty() {
                continue;
            }
            let mut part = GalerkinState::zeros(split.components, split.modes);
            for &mode in &modes {
                part.set(mode, rng.gen_range(-1.0..=1.0));
            }
            let norm = if fractional {
                fractional_norm(basis, problem, &part)?
            } else {
                part.norm_l2()
            };
            let r = fill * radius * rng.gen::<f64>();
            if norm > 0.0 {
                u.axpy(r / norm, &part);
            }
        }
        out.push(u);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRun {
    pub s: f64,
    pub run: usize,
    pub boundedness: BoundednessReport,
    pub excursion: BoxExcursion,
    /// `true` when the trajectory stayed inside the box or left it through
    /// an exit face.
    pub box_respected: bool,
    pub final_norms: NormSample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationStage {
    pub exit_faces: Vec<BoxFace>,
    pub runs: Vec<SimulationRun>,
    pub all_box_respected: bool,
    /// Every run flagged bounded is within the a priori radii.
    pub bounded_within_bounds: bool,
}

/// Integrates every seeded initial state for every `s`. Trajectories are
/// handed to `sink` as `(s index, run, trajectory)`.
pub fn simulation_stage<S>(
    cfg: &ExperimentConfig,
    setup: &Setup,
    split: &SplitIndexSet,
    index: &IndexStage,
    bounds: &BoundsStage,
    mut sink: S,
) -> Result<Stage<SimulationStage>>
where
    S: FnMut(usize, usize, &Trajectory) -> Result<()>,
{
    let Setup { basis, problem, field } = setup;
    let Some(bx) = bounds.isolating_box else {
        return Ok(Stage::skipped(format!("no isolating box: {}", bounds.note)));
    };
    let starts = initial_states(basis, split, problem, &bx, cfg.run.seeds, cfg.run.initial_fill, cfg.seed)?;
    let settings = cfg.settings();
    let faces = exit_faces(index.counts, index.block_status);
    let r1 = bounds.margins.iter().find(|t| t.block == Block::First).and_then(|t| t.radius);
    let r2 = bounds.margins.iter().find(|t| t.block == Block::Second).and_then(|t| t.radius);
    let mut runs = Vec::new();
    for (si, &s) in cfg.run.s_grid.iter().enumerate() {
        for (ri, u0) in starts.iter().enumerate() {
            let traj = integrate(field, basis, split, problem, s, u0, &settings)?;
            sink(si, ri, &traj)?;
            let boundedness = check_bounded_solution(&traj, &bounds.apriori, r1, r2, cfg.run.transient, cfg.run.tol_drift);
            let excursion = box_excursion(&traj, &bx);
            let box_respected = excursion.exit.map_or(true, |(_, f)| faces.contains(&f));
            runs.push(SimulationRun {
                s,
                run: ri,
                boundedness,
                excursion,
                box_respected,
                final_norms: *traj.norms.last().expect("initial sample"),
            });
        }
    }
    let all_box_respected = runs.iter().all(|r| r.box_respected);
    let bounded_within_bounds = runs
        .iter()
        .filter(|r| !r.boundedness.unbounded)
        .all(|r| r.boundedness.ratio_minus <= 1.0 && r.boundedness.ratio_plus <= 1.0);
    Ok(Stage::Ran(SimulationStage {
        exit_faces: faces,
        runs,
        all_box_respected,
        bounded_within_bounds,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSummary {
    pub residual: f64,
    pub morse_index: usize,
    pub is_origin: bool,
    pub l2_norm: f64,
    /// Coefficient rows of the state.
    pub state: GalerkinState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotSummary {
    pub direction: usize,
    pub orientation: f64,
    pub eps: f64,
    pub rate: f64,
    pub landed: bool,
    pub target: Option<usize>,
    pub terminal_distance: f64,
    pub arrival_time: Option<f64>,
    pub divergent: bool,
    /// Largest energy increase between recorded states.
    pub max_energy_increase: Option<f64>,
    pub energy_nonincreasing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionStage {
    pub equilibria: Vec<EquilibriumSummary>,
    pub search_notes: Vec<String>,
    pub shots: Vec<ShotSummary>,
    /// A shot from the origin landed on a nontrivial equilibrium.
    pub connection_found: bool,
    pub energy_note: String,
}

/// Per-step slack of the energy monotonicity check.
pub const ENERGY_SLACK: f64 = 1e-8;

/// Searches equilibria and shoots from the origin along each unstable
/// direction, both orientations, for every `eps`. Landed trajectories go to
/// `sink`.
pub fn connection_stage<S>(
    cfg: &ExperimentConfig,
    setup: &Setup,
    split: &SplitIndexSet,
    index: &IndexStage,
    mut sink: S,
) -> Result<Stage<ConnectionStage>>
where
    S: FnMut(usize, &Trajectory) -> Result<()>,
{
    if !index.connection_predicted {
        return Ok(Stage::skipped(format!("no connection predicted: {}", index.reason)));
    }
    let Setup { basis, problem, field } = setup;
    let seeds = default_seeds(split, cfg.run.newton_modes, &cfg.run.newton_amplitudes);
    let search = find_equilibria(field, basis, split, &seeds)?;
    let mut equilibria: Vec<Equilibrium> = search.equilibria;
    let mut notes = search.notes;
    let (energy, energy_note) = match EnergyFunctional::new(field, basis, split) {
        Ok(e) => (Some(e), "energy validated".to_string()),
        Err(e) => (None, e.to_string()),
    };
    let Some(origin) = equilibria.iter().position(|e| e.is_origin) else {
        return Ok(Stage::skipped("origin not found by the equilibrium search"));
    };
    let g = nalgebra::DMatrix::from_row_slice(
        problem.m,
        problem.m,
        &index
            .origin_jacobian
            .as_ref()
            .expect("prediction implies an origin equilibrium")
            .concat(),
    );
    let lin = LinearizationData::new(g, &problem.lambda)?;
    let directions = origin_unstable_directions(basis, &lin);
    let mut settings = cfg.settings().with_record_every(1);
    settings.t_end = cfg.run.shoot_t_end.unwrap_or(cfg.run.t_end);
    let mut shots = Vec::new();
    let mut landed_count = 0;
    for (di, dir) in directions.iter().enumerate() {
        for orientation in [1.0, -1.0] {
            for &eps in &cfg.run.eps_grid {
                let d = dir.direction.scaled(orientation);
                let mut outcome = shoot_connection(
                    field, basis, split, problem, &equilibria, origin, &d, eps, &settings, energy.as_ref(),
                )?;
                if let ShotOutcome::Missed(miss) = &outcome {
                    if !miss.divergent {
                        if let Some((state, res)) = newton(field, basis, split, &miss.final_state)? {
                            if equilibria.iter().all(|e| e.state.distance(&state) > DEDUP_DISTANCE) {
                                let (values, _) = linearization_spectrum(field, basis, split, &state)?;
                                notes.push(format!("equilibrium {} found from a shot end state", equilibria.len()));
                                equilibria.push(Equilibrium {
                                    is_origin: state.norm_l2() <= DEDUP_DISTANCE,
                                    morse_index: morse_index(&values),
                                    residual: res,
                                    state,
                                });
                                outcome = shoot_connection(
                                    field, basis, split, problem, &equilibria, origin, &d, eps, &settings,
                                    energy.as_ref(),
                                )?;
                            }
                        }
                    }
                }
                let summary = match outcome {
                    ShotOutcome::Landed(rec) => {
                        sink(landed_count, &rec.trajectory)?;
                        landed_count += 1;
                        let inc = rec.energy_profile.as_deref().map(max_energy_increase);
                        ShotSummary {
                            direction: di,
                            orientation,
                            eps,
                            rate: dir.rate,
                            landed: true,
                            target: Some(rec.target),
                            terminal_distance: rec.terminal_distance,
                            arrival_time: Some(rec.arrival_time),
                            divergent: false,
                            max_energy_increase: inc,
                            energy_nonincreasing: inc.map(|v| v <= ENERGY_SLACK),
                        }
                    }
                    ShotOutcome::Missed(miss) => ShotSummary {
                        direction: di,
                        orientation,
                        eps,
                        rate: dir.rate,
                        landed: false,
                        target: miss.closest_target,
                        terminal_distance: miss.closest_distance,
                        arrival_time: None,
                        divergent: miss.divergent,
                        max_energy_increase: None,
                        energy_nonincreasing: None,
                    },
                };
                shots.push(summary);
            }
        }
    }
    let connection_found = shots
        .iter()
        .any(|s| s.landed && s.target.is_some_and(|t| !equilibria[t].is_origin));
    Ok(Stage::Ran(ConnectionStage {
        equilibria: equilibria
            .iter()
            .map(|e| EquilibriumSummary {
                residual: e.residual,
                morse_index: e.morse_index,
                is_origin: e.is_origin,
                l2_norm: e.state.norm_l2(),
                state: e.state.clone(),
            })
            .collect(),
        search_notes: notes,
        shots,
        connection_found,
        energy_note,
    }))
}

/// Pipeline stages selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Decompose,
    Check,
    Index,
    Simulate,
    Connect,
    Full,
}

impl Command {
    fn wants(self, stage: Command) -> bool {
        use Command::*;
        match self {
            Full => true,
            Simulate => matches!(stage, Spectrum | Decompose | Check | Index | Simulate),
            Connect => matches!(stage, Spectrum | Decompose | Check | Index | Connect),
            other => stage <= other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub spectrum: SpectrumReport,
    pub decomposition: Stage<DecompositionReport>,
    pub conditions: Stage<ConditionsReport>,
    pub index: Stage<IndexStage>,
    pub bounds: Stage<BoundsStage>,
    pub simulations: Stage<SimulationStage>,
    pub connections: Stage<ConnectionStage>,
    /// One line per verdict; `skipped` where the stage did not run.
    pub summary: BTreeMap<String, String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produces besides the report.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub spectrum_csv: String,
    pub margins_csv: Option<String>,
    /// `(file name, csv)` pairs.
    pub trajectories: Vec<(String, String)>,
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> StageFailure {
    move |error| StageFailure { stage, error }
}

const NOT_REQUESTED: &str = "not requested";

/// Runs the stages `command` asks for.
pub fn run(cfg: &ExperimentConfig, command: Command) -> std::result::Result<(RunReport, Artifacts), StageFailure> {
    let setup = cfg.setup().map_err(at("setup"))?;
    let mut artifacts = Artifacts {
        spectrum_csv: spectrum_csv(&setup.basis),
        ..Default::default()
    };
    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed: cfg.seed,
        config: cfg.clone(),
        spectrum: spectrum_stage(&setup.basis),
        decomposition: Stage::skipped(NOT_REQUESTED),
        conditions: Stage::skipped(NOT_REQUESTED),
        index: Stage::skipped(NOT_REQUESTED),
        bounds: Stage::skipped(NOT_REQUESTED),
        simulations: Stage::skipped(NOT_REQUESTED),
        connections: Stage::skipped(NOT_REQUESTED),
        summary: BTreeMap::new(),
    };
    if command.wants(Command::Decompose) {
        let split = classify(&setup.basis, &setup.problem).map_err(at("decompose"))?;
        report.decomposition = Stage::Ran(decomposition_stage(&split, &setup.problem).map_err(at("decompose"))?);
        if command.wants(Command::Check) {
            let conditions = conditions_stage(cfg, &setup, &split).map_err(at("check"))?;
            if command.wants(Command::Index) {
                let index = index_stage(&setup, &split, &conditions).map_err(at("index"))?;
                if command.wants(Command::Simulate) {
                    match bounds_stage(cfg, &setup, &split, &conditions) {
                        Ok(bounds) => {
                            artifacts.margins_csv = Some(margins_csv(&bounds.margins));
                            report.simulations = simulation_stage(cfg, &setup, &split, &index, &bounds, |si, ri, traj| {
                                artifacts
                                    .trajectories
                                    .push((format!("s{si}_run{ri:02}.csv"), traj.to_csv(false)));
                                Ok(())
                            })
                            .map_err(at("simulate"))?;
                            report.bounds = Stage::Ran(bounds);
                        }
                        Err(Error::Precondition(why)) => {
                            report.bounds = Stage::skipped(why.clone());
                            report.simulations = Stage::skipped(why);
                        }
                        Err(e) => return Err(at("bounds")(e)),
                    }
                }
                if command.wants(Command::Connect) {
                    report.connections = connection_stage(cfg, &setup, &split, &index, |n, traj| {
                        artifacts.trajectories.push((format!("connection_{n}.csv"), traj.to_csv(true)));
                        Ok(())
                    })
                    .map_err(at("connect"))?;
                }
                report.index = Stage::Ran(index);
            }
            report.conditions = Stage::Ran(conditions);
        }
    }
    report.summary = summarize(&report);
    Ok((report, artifacts))
}

fn verdict_str(v: Verdict) -> String {
    format!("{v:?}").to_lowercase()
}

fn summarize(report: &RunReport) -> BTreeMap<String, String> {
    let mut s = BTreeMap::new();
    let skipped = "skipped".to_string();
    s.insert("gram_error".into(), format!("{:.3e}", report.spectrum.gram_error));
    match report.decomposition.ran() {
        Some(d) => {
            s.insert("counts".into(), format!("d_inf={} n1={} n2={}", d.counts.d_inf, d.counts.n1, d.counts.n2));
        }
        None => {
            s.insert("counts".into(), skipped.clone());
        }
    }
    match report.conditions.ran() {
        Some(c) => {
            s.insert("F2".into(), verdict_str(c.bounded.verdict));
            for r in c.sign_conditions.iter().chain(&c.limits) {
                s.insert(r.condition.clone(), verdict_str(r.verdict));
            }
            for r in &c.ll {
                s.insert(r.condition.clone(), verdict_str(r.verdict));
            }
        }
        None => {
            s.insert("conditions".into(), skipped.clone());
        }
    }
    match report.index.ran() {
        Some(i) => {
            let show = |h: Option<HomotopyType>| h.map_or("undetermined".to_string(), |h| h.to_string());
            s.insert("h_K_infinity".into(), show(i.h_k_infinity));
            s.insert("h_K_zero".into(), show(i.h_k_zero));
            s.insert("d0".into(), i.d0.map_or("undetermined".into(), |d| d.to_string()));
            s.insert("connection_predicted".into(), i.connection_predicted.to_string());
        }
        None => {
            s.insert("index".into(), skipped.clone());
        }
    }
    match &report.simulations {
        Stage::Ran(sim) => {
            s.insert("box_respected".into(), sim.all_box_respected.to_string());
            s.insert("bounded_within_bounds".into(), sim.bounded_within_bounds.to_string());
        }
        Stage::Skipped { skipped } => {
            s.insert("simulations".into(), format!("skipped: {skipped}"));
        }
    }
    match &report.connections {
        Stage::Ran(c) => {
            s.insert("connection_found".into(), c.connection_found.to_string());
        }
        Stage::Skipped { skipped } => {
            s.insert("connections".into(), format!("skipped: {skipped}"));
        }
    }
    s
}
