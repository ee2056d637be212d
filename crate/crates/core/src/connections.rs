//! Equilibria of the Galerkin system, their Morse indices, the Liapunov
//! energy of gradient fields and forward shooting of connecting orbits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::decomposition::SplitIndexSet;
use crate::error::{Error, Result};
use crate::index::LinearizationData;
use crate::nonlinearity::{galerkin_f, potential_deviation, vanishes_at_origin, NonlinearField};
use crate::spectral::{ProblemConfig, SpectralBasis};
use crate::semiflow::{integrate, IntegratorSettings, Trajectory};
use crate::state::{GalerkinState, Mode};

/// Residual certificate for an accepted equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;
/// Equilibria closer than this are the same.
pub const DEDUP_DISTANCE: f64 = 1e-6;
pub const MAX_NEWTON_ITERATIONS: usize = 100;

/// `-A u + F(u)`.
pub fn residual(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    u: &GalerkinState,
) -> Result<GalerkinState> {
    let f = galerkin_f(field, basis, u)?;
    Ok(f.map_modes(|mode, v| v - split.shift(mode) * u.get(mode)))
}

/// Central-difference Jacobian of the residual in flat coordinates.
pub fn residual_jacobian(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    u: &GalerkinState,
) -> Result<DMatrix<f64>> {
    let (m, modes) = (split.components, split.modes);
    let n = m * modes;
    let base = u.to_flat();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let h = 1e-6 * base[i].abs().max(1e-2);
        let mut p = base.clone();
        p[i] += h;
        let up = residual(field, basis, split, &GalerkinState::from_flat(m, modes, &p)?)?.to_flat();
        p[i] = base[i] - h;
        let dn = residual(field, basis, split, &GalerkinState::from_flat(m, modes, &p)?)?.to_flat();
        for r in 0..n {
            jac[(r, i)] = (up[r] - dn[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: GalerkinState,
    /// `||-A u + F(u)||` in L².
    pub residual: f64,
    /// Number of unstable directions of the forward flow.
    pub morse_index: usize,
    pub is_origin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSearch {
    pub equilibria: Vec<Equilibrium>,
    /// One line per discarded seed.
    pub notes: Vec<String>,
}

/// Damped Newton iteration from `seed`. Returns the converged state and its
/// residual norm, or `None` after [`MAX_NEWTON_ITERATIONS`].
pub fn newton(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    seed: &GalerkinState,
) -> Result<Option<(GalerkinState, f64)>> {
    let (m, modes) = (split.components, split.modes);
    let mut u = seed.clone();
    let mut r = residual(field, basis, split, &u)?;
    let mut rn = r.norm_l2();
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if rn <= 1e-13 {
            break;
        }
        let jac = residual_jacobian(field, basis, split, &u)?;
        let rhs = DVector::from_vec(r.to_flat());
        let Some(step) = jac.lu().solve(&rhs) else {
            return Ok(None);
        };
        let step = GalerkinState::from_flat(m, modes, step.as_slice())?;
        let mut damping = 1.0;
        let mut accepted = false;
        while damping > 1e-4 {
            let mut trial = u.clone();
            trial.axpy(-damping, &step);
            let tr = residual(field, basis, split, &trial)?;
            let tn = tr.norm_l2();
            if tn < rn || (tn <= 1e-12 && rn <= 1e-12) {
                u = trial;
                r = tr;
                rn = tn;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            break;
        }
        if step.norm_l2() * damping <= 1e-15 * u.norm_l2().max(1.0) {
            break;
        }
    }
    Ok((rn <= EQUILIBRIUM_TOLERANCE && u.is_finite()).then_some((u, rn)))
}

/// Eigen-decomposition of the symmetrized forward linearization
/// `-(J + J^T)/2`, `J` the residual Jacobian. Negative eigenvalues are
/// unstable directions.
pub fn linearization_spectrum(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    u: &GalerkinState,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let jac = residual_jacobian(field, basis, split, u)?;
    let sym = -(&jac + jac.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let scale = sym.amax().max(1.0);
    for (c, &lambda) in values.iter().enumerate() {
        let v = vectors.column(c);
        let res = (&sym * v - v * lambda).amax();
        if res > 1e-8 * scale {
            return Err(Error::Linalg(format!("eigenpair residual {res:.3e}")));
        }
    }
    Ok((values, vectors))
}

/// Number of clearly negative eigenvalues.
pub fn morse_index(values: &[f64]) -> usize {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    values.iter().filter(|v| **v < -1e-9 * scale).count()
}

/// Newton from every seed, deduplicated in seed order. The origin is listed
/// first whenever `f(x, 0, 0) = 0`.
pub fn find_equilibria(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    seeds: &[GalerkinState],
) -> Result<EquilibriumSearch> {
    let mut found: Vec<Equilibrium> = Vec::new();
    let mut notes = Vec::new();
    let zero = GalerkinState::zeros(split.components, split.modes);
    let mut candidates: Vec<GalerkinState> = Vec::new();
    if vanishes_at_origin(field, basis.nodes()) {
        candidates.push(zero.clone());
    }
    candidates.extend(seeds.iter().cloned());
    for (i, seed) in candidates.iter().enumerate() {
        split.check_state(seed)?;
        if !seed.is_finite() {
            notes.push(format!("seed {i}: not finite"));
            continue;
        }
        match newton(field, basis, split, seed)? {
            None => notes.push(format!("seed {i}: Newton did not converge")),
            Some((state, res)) => {
                if found.iter().any(|e| e.state.distance(&state) <= DEDUP_DISTANCE) {
                    continue;
                }
                let (values, _) = linearization_spectrum(field, basis, split, &state)?;
                let is_origin = state.norm_l2() <= DEDUP_DISTANCE;
                found.push(Equilibrium {
                    state: if is_origin { zero.clone() } else { state },
                    residual: res,
                    morse_index: morse_index(&values),
                    is_origin,
                });
            }
        }
    }
    Ok(EquilibriumSearch { equilibria: found, notes })
}

/// Single-mode seeds `a phi_j e_k` for the lowest `modes` sine modes.
pub fn default_seeds(split: &SplitIndexSet, modes: usize, amplitudes: &[f64]) -> Vec<GalerkinState> {
    let mut out = Vec::new();
    for k in 0..split.components {
        for j in 0..modes.min(split.modes) {
            for &a in amplitudes {
                out.push(GalerkinState::single_mode(split.components, split.modes, Mode::new(k, j), a));
            }
        }
    }
    out
}

/// An unstable direction with its growth rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableDirection {
    pub rate: f64,
    pub direction: GalerkinState,
}

/// Unstable directions at the origin from the diagonalization of
/// `G + Lambda`: the eigenvector `o_k` placed on sine mode `j` for every
/// `mu_j < theta_k`, with rate `theta_k - mu_j`. Fastest first.
pub fn origin_unstable_directions(basis: &SpectralBasis, lin: &LinearizationData) -> Vec<UnstableDirection> {
    let m = lin.components();
    let mut out = Vec::new();
    for (k, &theta) in lin.theta.iter().enumerate() {
        for (j, mu) in basis.eigenvalues().enumerate() {
            if mu < theta {
                let mut d = GalerkinState::zeros(m, basis.modes());
                for i in 0..m {
                    d.set(Mode::new(i, j), lin.eigenvectors[(i, k)]);
                }
                out.push(UnstableDirection {
                    rate: theta - mu,
                    direction: d,
                });
            }
        }
    }
    out.sort_by(|a, b| b.rate.total_cmp(&a.rate));
    out
}

/// Unstable directions at an arbitrary equilibrium from the symmetrized
/// linearization. Fastest first.
pub fn unstable_directions(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    eq: &Equilibrium,
) -> Result<Vec<UnstableDirection>> {
    let (values, vectors) = linearization_spectrum(field, basis, split, &eq.state)?;
    let count = morse_index(&values);
    (0..count)
        .map(|c| {
            let v: Vec<f64> = vectors.column(c).iter().copied().collect();
            Ok(UnstableDirection {
                rate: -values[c],
                direction: GalerkinState::from_flat(split.components, split.modes, &v)?,
            })
        })
        .collect()
}

/// `E(u) = 1/2 sum (mu_j - lambda_k) c_kj² - int f~(x, u(x)) dx`.
///
/// With `F = grad f~` this decreases along `u' = -A u + F(u)`.
#[derive(Debug, Clone)]
pub struct EnergyFunctional<'a> {
    field: &'a NonlinearField,
    basis: &'a SpectralBasis,
    split: &'a SplitIndexSet,
}

/// Largest accepted deviation between the field and the derivative of its
/// potential.
pub const POTENTIAL_TOLERANCE: f64 = 1e-6;

impl<'a> EnergyFunctional<'a> {
    /// Validates the potential by central differences and checks that the
    /// field ignores `du`.
    pub fn new(field: &'a NonlinearField, basis: &'a SpectralBasis, split: &'a SplitIndexSet) -> Result<Self> {
        let xs: Vec<f64> = basis.nodes().iter().step_by(7).copied().collect();
        let dev = potential_deviation(field, &xs, 10.0, 64, 11)?;
        if dev > POTENTIAL_TOLERANCE {
            return Err(Error::GradientStructure(format!(
                "potential derivative deviates from the field by {dev:.3e}"
            )));
        }
        let m = field.components();
        let u: Vec<f64> = (0..m).map(|k| 0.3 + 0.1 * k as f64).collect();
        let du: Vec<f64> = (0..m).map(|k| 5.0 - k as f64).collect();
        for &x in &xs {
            let a = field.eval(x, &u, &vec![0.0; m]);
            let b = field.eval(x, &u, &du);
            if a != b {
                return Err(Error::GradientStructure(format!(
                    "field depends on the gradient at x = {x}"
                )));
            }
        }
        Ok(Self { field, basis, split })
    }

    pub fn energy(&self, u: &GalerkinState) -> Result<f64> {
        self.split.check_state(u)?;
        let mut quadratic = 0.0;
        for k in 0..self.split.components {
            for j in 0..self.split.modes {
                let mode = Mode::new(k, j);
                quadratic += 0.5 * self.split.shift(mode) * u.get(mode).powi(2);
            }
        }
        let q = self.basis.node_count();
        let m = u.components();
        let (values, _) = self.basis.eval_nodes(u);
        let mut point = vec![0.0; m];
        let mut potential = vec![0.0; q];
        for (i, &x) in self.basis.nodes().iter().enumerate() {
            for k in 0..m {
                point[k] = values[k * q + i];
            }
            potential[i] = self.field.potential(x, &point).expect("validated potential");
        }
        Ok(quadratic - self.basis.integrate_nodes(&potential))
    }

    pub fn profile(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        traj.states.iter().map(|s| self.energy(s)).collect()
    }
}

/// One-shot energy evaluation.
pub fn liapunov_energy(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    u: &GalerkinState,
) -> Result<f64> {
    EnergyFunctional::new(field, basis, split)?.energy(u)
}

/// Largest increase between consecutive energies (zero if nonincreasing).
pub fn max_energy_increase(profile: &[f64]) -> f64 {
    profile
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
}

/// Acceptance distance of a landing.
pub const LANDING_DISTANCE: f64 = 1e-4;
/// Time a trajectory must stay near the target.
pub const DWELL_TIME: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRecord {
    pub source: usize,
    pub target: usize,
    pub eps: f64,
    pub trajectory: Trajectory,
    /// L² distance to the target at the end of the dwell window.
    pub terminal_distance: f64,
    /// Time the trajectory entered the landing ball for good.
    pub arrival_time: f64,
    pub energy_profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotMiss {
    pub source: usize,
    pub eps: f64,
    pub closest_target: Option<usize>,
    pub closest_distance: f64,
    pub divergent: bool,
    pub final_state: GalerkinState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ShotOutcome {
    Landed(ConnectionRecord),
    Missed(ShotMiss),
}

/// Integrates `u' = -A u + F(u)` from `source + eps * direction` and looks
/// for the first time after which the state stays within
/// [`LANDING_DISTANCE`] of another equilibrium for [`DWELL_TIME`].
#[allow(clippy::too_many_arguments)]
pub fn shoot_connection(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    equilibria: &[Equilibrium],
    source: usize,
    direction: &GalerkinState,
    eps: f64,
    settings: &IntegratorSettings,
    energy: Option<&EnergyFunctional<'_>>,
) -> Result<ShotOutcome> {
    let src = equilibria
        .get(source)
        .ok_or_else(|| Error::Precondition(format!("no equilibrium {source}")))?;
    let mut u0 = src.state.clone();
    u0.axpy(eps, direction);
    let traj = integrate(field, basis, split, config, 1.0, &u0, settings)?;
    let mut closest: (Option<usize>, f64) = (None, f64::INFINITY);
    for (t_idx, target) in equilibria.iter().enumerate() {
        if t_idx == source {
            continue;
        }
        let dist: Vec<f64> = traj.states.iter().map(|s| s.distance(&target.state)).collect();
        for &d in &dist {
            if d < closest.1 {
                closest = (Some(t_idx), d);
            }
        }
        // last index at which the trajectory was outside the landing ball
        let outside = dist.iter().rposition(|d| *d > LANDING_DISTANCE);
        let arrival_idx = match outside {
            None => 0,
            Some(i) if i + 1 < dist.len() => i + 1,
            Some(_) => continue,
        };
        let arrival_time = traj.times[arrival_idx];
        let end_time = *traj.times.last().unwrap();
        if traj.diverged_at.is_none() && end_time - arrival_time >= DWELL_TIME {
            let dwell_end = traj
                .times
                .iter()
                .position(|t| *t >= arrival_time + DWELL_TIME)
                .unwrap_or(traj.times.len() - 1);
            let energy_profile = energy.map(|e| e.profile(&traj)).transpose()?;
            return Ok(ShotOutcome::Landed(ConnectionRecord {
                source,
                target: t_idx,
                eps,
                terminal_distance: dist[dwell_end],
                arrival_time,
                energy_profile,
                trajectory: traj,
            }));
        }
    }
    Ok(ShotOutcome::Missed(ShotMiss {
        source,
        eps,
        closest_target: closest.0,
        closest_distance: closest.1,
        divergent: traj.diverged_at.is_some(),
        final_state: traj.last_state().clone(),
    }))
}
