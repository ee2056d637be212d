//! Time integration of the homotopy family `u' = -A u + H(s, u)`, the a
//! priori bound constants, boundedness checks and the kernel-drift
//! demonstration with a constant kernel forcing.

use serde::{Deserialize, Serialize};

use crate::decomposition::{block_norm, project, Block, Projection, SplitIndexSet};
use crate::error::{Error, Result};
use crate::nonlinearity::{galerkin_f, NonlinearField};
use crate::spectral::{fractional_weight, ProblemConfig, SpectralBasis};
use crate::state::{GalerkinState, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Exponential Euler: exact on the diagonal linear part.
    #[serde(rename = "ETD1")]
    Etd1,
    /// Implicit linear part, explicit nonlinearity.
    #[serde(rename = "IMEX-Euler")]
    ImexEuler,
}

/// Norm value above which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Largest admissible slope of `||P1 u||` before a run counts as drifting.
    pub tol_drift: f64,
    /// Keep every `record_every`-th step.
    pub record_every: usize,
}

impl IntegratorSettings {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::Etd1,
            tol_drift: 1e-3,
            record_every: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn with_tol_drift(mut self, tol: f64) -> Self {
        self.tol_drift = tol;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn validate(&self, split: &SplitIndexSet) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.tol_drift > 0.0) {
            return Err(Error::Config(
                "time step, horizon and drift tolerance must be positive".into(),
            ));
        }
        if self.scheme == Scheme::ImexEuler {
            let max_rate = split.shifted.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if max_rate > 0.0 && self.dt > 0.25 / max_rate {
                return Err(Error::Precondition(format!(
                    "IMEX-Euler needs dt <= 0.25 / {max_rate:.4e} = {:.4e}",
                    0.25 / max_rate
                )));
            }
        }
        Ok(())
    }
}

/// Norms recorded with each state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub l2: f64,
    pub fractional: f64,
    pub p1: f64,
    pub p2: f64,
    /// Fractional norm of `Q- u`.
    pub q_minus: f64,
    /// Fractional norm of `Q+ u`.
    pub q_plus: f64,
    /// Fractional norm of `(Q- + Q+) u`.
    pub hyperbolic: f64,
}

/// Precomputed fractional weights and classes for norm evaluation.
#[derive(Debug, Clone)]
pub struct NormTable {
    weights: Vec<f64>,
    split: SplitIndexSet,
}

impl NormTable {
    pub fn new(split: &SplitIndexSet, config: &ProblemConfig) -> Result<Self> {
        let weights = split
            .shifted
            .iter()
            .map(|&nu| fractional_weight(config, nu))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            split: split.clone(),
        })
    }

    pub fn sample(&self, u: &GalerkinState) -> NormSample {
        use crate::decomposition::ModeClass;
        let modes = self.split.modes;
        let (mut frac, mut qm, mut qp) = (0.0, 0.0, 0.0);
        for k in 0..self.split.components {
            for j in 0..modes {
                let mode = Mode::new(k, j);
                let v = (self.weights[k * modes + j] * u.get(mode)).powi(2);
                frac += v;
                match self.split.class_of(mode) {
                    ModeClass::Minus => qm += v,
                    ModeClass::Plus => qp += v,
                    _ => {}
                }
            }
        }
        NormSample {
            l2: u.norm_l2(),
            fractional: frac.sqrt(),
            p1: block_norm(&self.split, Block::First, u),
            p2: block_norm(&self.split, Block::Second, u),
            q_minus: qm.sqrt(),
            q_plus: qp.sqrt(),
            hyperbolic: (qm + qp).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GalerkinState>,
    pub norms: Vec<NormSample>,
    /// Time at which the norm exceeded the divergence threshold.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &GalerkinState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with columns `t, l2, fractional, p1, p2, q_minus, q_plus` and,
    /// when `coefficients` is set, `c_k_j` for every mode (one-based).
    pub fn to_csv(&self, coefficients: bool) -> String {
        let mut out = String::from("t,l2,fractional,p1,p2,q_minus,q_plus");
        if coefficients {
            if let Some(s) = self.states.first() {
                for k in 0..s.components() {
                    for j in 0..s.modes() {
                        out.push_str(&format!(",c_{}_{}", k + 1, j + 1));
                    }
                }
            }
        }
        out.push('\n');
        for ((t, n), s) in self.times.iter().zip(&self.norms).zip(&self.states) {
            out.push_str(&format!(
                "{t},{},{},{},{},{},{}",
                n.l2, n.fractional, n.p1, n.p2, n.q_minus, n.q_plus
            ));
            if coefficients {
                for c in s.to_flat() {
                    out.push_str(&format!(",{c}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `H(s, u) = Q0 F(s Q- u + s Q+ u + Q0 u) + s (Q- + Q+) F(u)`.
pub fn homotopy_field(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    s: f64,
    u: &GalerkinState,
) -> Result<GalerkinState> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Precondition(format!("homotopy parameter {s} outside [0, 1]")));
    }
    split.check_state(u)?;
    if s == 1.0 {
        return galerkin_f(field, basis, u);
    }
    let kernel = project(split, Projection::Q0, u);
    let hyper = project(split, Projection::QHyperbolic, u);
    let mut arg = kernel;
    arg.axpy(s, &hyper);
    let mut h = project(split, Projection::Q0, &galerkin_f(field, basis, &arg)?);
    if s != 0.0 {
        let full = galerkin_f(field, basis, u)?;
        h.axpy(s, &project(split, Projection::QHyperbolic, &full));
    }
    Ok(h)
}

/// `phi1(z) = (1 - exp(-z)) / z`, equal to 1 at `z = 0`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// Integrates `u' = -A u + rhs(u)` from `u0`.
pub fn integrate_rhs<R>(
    split: &SplitIndexSet,
    config: &ProblemConfig,
    u0: &GalerkinState,
    settings: &IntegratorSettings,
    mut rhs: R,
) -> Result<Trajectory>
where
    R: FnMut(&GalerkinState) -> Result<GalerkinState>,
{
    split.check_state(u0)?;
    settings.validate(split)?;
    if !u0.is_finite() {
        return Err(Error::Precondition("initial state is not finite".into()));
    }
    let norms = NormTable::new(split, config)?;
    let dt = settings.dt;
    let n = split.shifted.len();
    let (mut decay, mut gain) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let nu = split.shifted[i];
        match settings.scheme {
            Scheme::Etd1 => {
                decay[i] = (-dt * nu).exp();
                gain[i] = dt * phi1(dt * nu);
            }
            Scheme::ImexEuler => {
                decay[i] = 1.0 / (1.0 + dt * nu);
                gain[i] = dt / (1.0 + dt * nu);
            }
        }
    }
    let steps = settings.steps();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
        norms: vec![norms.sample(u0)],
        diverged_at: None,
    };
    let mut u = u0.clone();
    let modes = split.modes;
    for step in 1..=steps {
        let h = rhs(&u)?;
        let next = GalerkinState::from_matrix(nalgebra::DMatrix::from_fn(split.components, modes, |k, j| {
            let i = k * modes + j;
            let mode = Mode::new(k, j);
            decay[i] * u.get(mode) + gain[i] * h.get(mode)
        }));
        u = next;
        let t = step as f64 * dt;
        let norm = u.norm_l2();
        if !(norm <= DIVERGENCE_NORM) {
            traj.diverged_at = Some(t);
            if u.is_finite() {
                traj.times.push(t);
                traj.norms.push(norms.sample(&u));
                traj.states.push(u);
            }
            return Ok(traj);
        }
        if step % settings.record_every == 0 || step == steps {
            traj.times.push(t);
            traj.norms.push(norms.sample(&u));
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

/// Solution of the member `s` of the homotopy family.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    s: f64,
    u0: &GalerkinState,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Precondition(format!("homotopy parameter {s} outside [0, 1]")));
    }
    integrate_rhs(split, config, u0, settings, |u| homotopy_field(field, basis, split, s, u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub trajectory: Trajectory,
    /// Kernel modes in the order of the slopes.
    pub kernel_modes: Vec<Mode>,
    /// Least-squares slope of each kernel coefficient against time.
    pub slopes: Vec<f64>,
    /// Largest residual of the linear fit.
    pub residual: f64,
    /// `||Q+ u||_alpha` at the start and at the end.
    pub plus_norm_start: f64,
    pub plus_norm_end: f64,
}

/// Integrates `u' = -A u + v0` with a constant kernel forcing `v0`. The
/// kernel part then grows like `Q0 u(0) + t v0`, so no solution is bounded.
pub fn blowup_demo(
    split: &SplitIndexSet,
    config: &ProblemConfig,
    v0: &GalerkinState,
    u0: &GalerkinState,
    settings: &IntegratorSettings,
) -> Result<BlowupReport> {
    split.check_state(v0)?;
    if v0.norm_l2() == 0.0 {
        return Err(Error::Precondition("forcing must be nonzero".into()));
    }
    if project(split, Projection::QHyperbolic, v0).norm_l2() != 0.0 {
        return Err(Error::Precondition("forcing must lie in the kernel".into()));
    }
    let traj = integrate_rhs(split, config, u0, settings, |_| Ok(v0.clone()))?;
    let kernel_modes = split.modes_of(Projection::Q0);
    let ts = &traj.times;
    let count = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / count;
    let t_var: f64 = ts.iter().map(|t| (t - t_mean).powi(2)).sum();
    let mut slopes = Vec::new();
    let mut residual: f64 = 0.0;
    for &mode in &kernel_modes {
        let ys: Vec<f64> = traj.states.iter().map(|s| s.get(mode)).collect();
        let y_mean = ys.iter().sum::<f64>() / count;
        let cov: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
        let slope = cov / t_var;
        let intercept = y_mean - slope * t_mean;
        for (t, y) in ts.iter().zip(&ys) {
            residual = residual.max((y - intercept - slope * t).abs());
        }
        slopes.push(slope);
    }
    let plus_norm_start = traj.norms.first().map_or(0.0, |n| n.q_plus);
    let plus_norm_end = traj.norms.last().map_or(0.0, |n| n.q_plus);
    Ok(BlowupReport {
        trajectory: traj,
        kernel_modes,
        slopes,
        residual,
        plus_norm_start,
        plus_norm_end,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBounds {
    /// Spectral gap.
    pub c: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub alpha: f64,
    /// Operator norms of the projections (1, or 0 for an empty subspace).
    pub q_minus_norm: f64,
    pub q_plus_norm: f64,
    pub r0_minus: f64,
    pub r0_plus: f64,
}

impl AprioriBounds {
    /// Radius for `||(Q- + Q+) u||_alpha`.
    pub fn r0(&self) -> f64 {
        self.r0_minus + self.r0_plus
    }
}

/// `2 C3 sqrt(m |Omega|)`: bounds `||H(s, u)||` for `|f| <= C3`.
pub fn default_c6(c3: f64, components: usize, length: f64) -> f64 {
    2.0 * c3 * (components as f64 * length).sqrt()
}

/// Bounds on the hyperbolic parts of bounded solutions:
/// `R0- = C5 C6 C7 ||Q-|| / c`, `R0+ = C5 C6 ||Q+|| (exp(-c)/c + 1/(1 - alpha))`
/// with `C5 = 1` and `C7 = max over X- of (delta + mu - lambda)^alpha`.
///
/// `C5 = 1` bounds the diagonal semigroup in L²; for the fractional norm the
/// constant is a heuristic stand-in.
pub fn apriori_bounds(split: &SplitIndexSet, config: &ProblemConfig, c6: f64) -> Result<AprioriBounds> {
    let c = crate::decomposition::spectral_gap(split)
        .ok_or_else(|| Error::Precondition("no hyperbolic modes, spectral gap undefined".into()))?;
    if !(c > 0.0) {
        return Err(Error::Precondition("spectral gap is zero".into()));
    }
    let mut c7: f64 = 0.0;
    for &mode in &split.minus_modes {
        c7 = c7.max(fractional_weight(config, split.shift(mode))?);
    }
    let q_minus_norm = if split.minus_modes.is_empty() { 0.0 } else { 1.0 };
    let q_plus_norm = if split.plus_modes.is_empty() { 0.0 } else { 1.0 };
    let c5 = 1.0;
    let alpha = config.alpha;
    Ok(AprioriBounds {
        c,
        c5,
        c6,
        c7,
        alpha,
        q_minus_norm,
        q_plus_norm,
        r0_minus: c5 * c6 * c7 * q_minus_norm / c,
        r0_plus: c5 * c6 * q_plus_norm * ((-c).exp() / c + 1.0 / (1.0 - alpha)),
    })
}

fn ratio(value: f64, bound: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else if bound > 0.0 {
        value / bound
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    /// Largest `||Q- u||_alpha / R0-` after the transient.
    pub ratio_minus: f64,
    pub ratio_plus: f64,
    /// `None` when no radius was supplied for the block.
    pub ratio_p1: Option<f64>,
    pub ratio_p2: Option<f64>,
    /// Slope of `||P1 u||` over the last half of the horizon.
    pub drift_slope: f64,
    pub diverged: bool,
    /// Divergent or drifting.
    pub unbounded: bool,
    /// Every reported ratio is at most 1.
    pub within_bounds: bool,
}

/// Compares a trajectory against the a priori radii after discarding
/// `transient` (a fraction of the horizon).
pub fn check_bounded_solution(
    traj: &Trajectory,
    bounds: &AprioriBounds,
    r1: Option<f64>,
    r2: Option<f64>,
    transient: f64,
    tol_drift: f64,
) -> BoundednessReport {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let start = transient * t_end;
    let (mut rm, mut rp, mut r1m, mut r2m) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (t, n) in traj.times.iter().zip(&traj.norms) {
        if *t < start {
            continue;
        }
        rm = rm.max(ratio(n.q_minus, bounds.r0_minus));
        rp = rp.max(ratio(n.q_plus, bounds.r0_plus));
        if let Some(r) = r1 {
            r1m = r1m.max(ratio(n.p1, r));
        }
        if let Some(r) = r2 {
            r2m = r2m.max(ratio(n.p2, r));
        }
    }
    // least-squares slope of ||P1 u|| over the second half
    let half: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.norms)
        .filter(|(t, _)| **t >= 0.5 * t_end)
        .map(|(t, n)| (*t, n.p1.max(n.p2)))
        .collect();
    let drift_slope = if half.len() >= 2 {
        let cnt = half.len() as f64;
        let tm = half.iter().map(|p| p.0).sum::<f64>() / cnt;
        let ym = half.iter().map(|p| p.1).sum::<f64>() / cnt;
        let cov: f64 = half.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
        let var: f64 = half.iter().map(|(t, _)| (t - tm).powi(2)).sum();
        if var > 0.0 {
            cov / var
        } else {
            0.0
        }
    } else {
        0.0
    };
    let diverged = traj.diverged_at.is_some();
    let unbounded = diverged || drift_slope > tol_drift;
    let ratio_p1 = r1.map(|_| r1m);
    let ratio_p2 = r2.map(|_| r2m);
    let within_bounds = rm <= 1.0
        && rp <= 1.0
        && ratio_p1.map_or(true, |r| r <= 1.0)
        && ratio_p2.map_or(true, |r| r <= 1.0);
    BoundednessReport {
        ratio_minus: rm,
        ratio_plus: rp,
        ratio_p1,
        ratio_p2,
        drift_slope,
        diverged,
        unbounded,
        within_bounds,
    }
}

/// Integrates the `s = 0` system from `u0` and, separately, the reduced
/// kernel equation `z' = Q0 F(z)` from `Q0 u0` plus the exact linear flow of
/// `(Q- + Q+) u0`. Returns the largest L² discrepancy over the recorded times.
pub fn product_flow_check(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    u0: &GalerkinState,
    settings: &IntegratorSettings,
) -> Result<f64> {
    let full = integrate(field, basis, split, config, 0.0, u0, settings)?;
    let z0 = project(split, Projection::Q0, u0);
    let reduced = integrate_rhs(split, config, &z0, settings, |z| {
        Ok(project(split, Projection::Q0, &galerkin_f(field, basis, z)?))
    })?;
    let hyper0 = project(split, Projection::QHyperbolic, u0);
    let mut worst: f64 = 0.0;
    for ((t, a), z) in full.times.iter().zip(&full.states).zip(&reduced.states) {
        let linear = hyper0.map_modes(|mode, c| c * (-t * split.shift(mode)).exp());
        let combined = z + &linear;
        worst = worst.max(a.distance(&combined));
    }
    Ok(worst)
}

/// The box `M = M0 + M1 + M2` built from the a priori radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolatingBox {
    /// Fractional radius of the hyperbolic part.
    pub r0: f64,
    /// Radius of the first kernel block.
    pub r1: f64,
    /// Radius of the second kernel block.
    pub r2: f64,
}

impl IsolatingBox {
    /// `R0 + 1`, `R1 + 1`, `R2 + 1`.
    pub fn from_radii(r0: f64, r1: f64, r2: f64) -> Self {
        Self {
            r0: r0 + 1.0,
            r1: r1 + 1.0,
            r2: r2 + 1.0,
        }
    }

    pub fn face_crossed(&self, n: &NormSample) -> Option<BoxFace> {
        if n.hyperbolic > self.r0 {
            Some(BoxFace::Hyperbolic)
        } else if n.p1 > self.r1 {
            Some(BoxFace::First)
        } else if n.p2 > self.r2 {
            Some(BoxFace::Second)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFace {
    Hyperbolic,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxExcursion {
    /// First recorded time outside the box and the face crossed.
    pub exit: Option<(f64, BoxFace)>,
}

impl BoxExcursion {
    pub fn stayed_inside(&self) -> bool {
        self.exit.is_none()
    }
}

pub fn box_excursion(traj: &Trajectory, bx: &IsolatingBox) -> BoxExcursion {
    let exit = traj
        .times
        .iter()
        .zip(&traj.norms)
        .find_map(|(t, n)| bx.face_crossed(n).map(|f| (*t, f)));
    let exit = exit.or_else(|| traj.diverged_at.map(|t| (t, BoxFace::Hyperbolic)));
    BoxExcursion { exit }
}
