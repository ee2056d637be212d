//! Dirichlet sine spectrum of `-d²/dx²` on `(0, L)`, the diagonal Galerkin
//! form of the shifted operator `A = diag(A_0 - lambda_k)`, its semigroup and
//! the fractional graph norm.
//!
//! Eigenpairs are analytic: `mu_j = (j pi / L)²` with eigenfunctions
//! `phi_j(x) = sqrt(2/L) sin(j pi x / L)`. Quadrature tables store the
//! basis at Gauss–Legendre nodes with exact mirror parity
//! `phi_j(L - x) = (-1)^(j+1) phi_j(x)`, and all node sums pair mirrored
//! nodes first, so states of pure parity stay of pure parity exactly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::state::{GalerkinState, Mode};

/// Default truncation level.
pub const DEFAULT_MODES: usize = 32;

/// Largest exponent accepted by [`semigroup_apply`] before it reports an
/// unbounded mode.
pub const OVERFLOW_EXPONENT: f64 = 700.0;

/// The interval `(0, length)` together with the quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain1D {
    pub length: f64,
    pub quad_nodes: usize,
}

impl Domain1D {
    pub fn new(length: f64, quad_nodes: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("domain length must be positive, got {length}")));
        }
        if quad_nodes < 2 {
            return Err(Error::Config("need at least two quadrature nodes".into()));
        }
        Ok(Self { length, quad_nodes })
    }

    /// Domain with the minimum admissible node count for `modes`.
    pub fn with_modes(length: f64, modes: usize) -> Result<Self> {
        Self::new(length, required_nodes(modes))
    }
}

/// Minimum Gauss–Legendre node count for products of `modes` sine functions.
pub fn required_nodes(modes: usize) -> usize {
    2 * modes + 16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// One-based eigenvalue number.
    pub index: usize,
    pub value: f64,
    /// L² normalizing factor `sqrt(2 / length)`.
    pub normalization: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: Domain1D,
    pairs: Vec<EigenPair>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    // Row-major J x Q tables.
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

/// Builds the `modes`-term sine basis on `domain`.
pub fn build_basis(domain: Domain1D, modes: usize) -> Result<SpectralBasis> {
    if modes == 0 {
        return Err(Error::Config("truncation level must be at least 1".into()));
    }
    let required = required_nodes(modes);
    if domain.quad_nodes < required {
        return Err(Error::QuadratureTooCoarse {
            got: domain.quad_nodes,
            required,
            modes,
        });
    }
    let length = domain.length;
    let norm = (2.0 / length).sqrt();
    let pairs = (1..=modes)
        .map(|j| {
            let k = j as f64 * PI / length;
            EigenPair {
                index: j,
                value: k * k,
                normalization: norm,
            }
        })
        .collect();

    let rule = GaussLegendre::new(domain.quad_nodes);
    let (nodes, weights) = rule.mapped(0.0, length);
    let q = nodes.len();
    let half = q / 2;
    let mut phi = vec![0.0; modes * q];
    let mut dphi = vec![0.0; modes * q];
    for j in 0..modes {
        let freq = (j + 1) as f64 * PI / length;
        // phi_{j+1}(L - x) = (-1)^j phi_{j+1}(x), derivative picks up the opposite sign.
        let parity = if j % 2 == 0 { 1.0 } else { -1.0 };
        for i in 0..half {
            let x = nodes[i];
            let s = norm * (freq * x).sin();
            let c = norm * freq * (freq * x).cos();
            phi[j * q + i] = s;
            phi[j * q + q - 1 - i] = parity * s;
            dphi[j * q + i] = c;
            dphi[j * q + q - 1 - i] = -parity * c;
        }
        if q % 2 == 1 {
            // x = L/2: sin((j+1) pi / 2) and cos((j+1) pi / 2) are exact integers.
            let (s, c) = match (j + 1) % 4 {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            };
            phi[j * q + half] = norm * s;
            dphi[j * q + half] = norm * freq * c;
        }
    }
    Ok(SpectralBasis {
        domain,
        pairs,
        nodes,
        weights,
        phi,
        dphi,
    })
}

impl SpectralBasis {
    pub fn domain(&self) -> Domain1D {
        self.domain
    }

    pub fn length(&self) -> f64 {
        self.domain.length
    }

    /// Truncation level `J`.
    pub fn modes(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    /// Eigenvalue of the zero-based mode `j`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.pairs[j].value
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.value)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.pairs.last().map_or(0.0, |p| p.value)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `phi_{j+1}` at quadrature node `q`.
    #[inline]
    pub fn phi_at_node(&self, j: usize, q: usize) -> f64 {
        self.phi[j * self.nodes.len() + q]
    }

    #[inline]
    pub fn dphi_at_node(&self, j: usize, q: usize) -> f64 {
        self.dphi[j * self.nodes.len() + q]
    }

    /// `phi_{j+1}(x)` at an arbitrary point.
    pub fn phi(&self, j: usize, x: f64) -> f64 {
        let p = &self.pairs[j];
        p.normalization * (p.index as f64 * PI * x / self.domain.length).sin()
    }

    pub fn dphi(&self, j: usize, x: f64) -> f64 {
        let p = &self.pairs[j];
        let freq = p.index as f64 * PI / self.domain.length;
        p.normalization * freq * (freq * x).cos()
    }

    /// Point values `u_k(x)` of a state.
    pub fn eval_point(&self, state: &GalerkinState, x: f64) -> Vec<f64> {
        let c = state.matrix();
        (0..c.nrows())
            .map(|k| (0..c.ncols()).map(|j| c[(k, j)] * self.phi(j, x)).sum())
            .collect()
    }

    /// Values and derivatives of every component at every node, as two
    /// row-major `m x Q` tables.
    pub fn eval_nodes(&self, state: &GalerkinState) -> (Vec<f64>, Vec<f64>) {
        let c = state.matrix();
        let (m, modes) = c.shape();
        let q = self.nodes.len();
        let mut u = vec![0.0; m * q];
        let mut du = vec![0.0; m * q];
        for k in 0..m {
            for j in 0..modes.min(self.modes()) {
                let ckj = c[(k, j)];
                if ckj == 0.0 {
                    continue;
                }
                let row = &self.phi[j * q..(j + 1) * q];
                let drow = &self.dphi[j * q..(j + 1) * q];
                let uk = &mut u[k * q..(k + 1) * q];
                for (dst, p) in uk.iter_mut().zip(row) {
                    *dst += ckj * p;
                }
                let duk = &mut du[k * q..(k + 1) * q];
                for (dst, p) in duk.iter_mut().zip(drow) {
                    *dst += ckj * p;
                }
            }
        }
        (u, du)
    }

    /// Projects node values (row-major `m x Q`) onto the basis.
    pub fn project_nodes(&self, values: &[f64], components: usize) -> GalerkinState {
        let q = self.nodes.len();
        let half = q / 2;
        let modes = self.modes();
        let mut out = DMatrix::zeros(components, modes);
        for k in 0..components {
            let f = &values[k * q..(k + 1) * q];
            for j in 0..modes {
                let row = &self.phi[j * q..(j + 1) * q];
                let mut acc = 0.0;
                for i in 0..half {
                    let r = q - 1 - i;
                    acc += self.weights[i] * (f[i] * row[i] + f[r] * row[r]);
                }
                if q % 2 == 1 {
                    acc += self.weights[half] * f[half] * row[half];
                }
                out[(k, j)] = acc;
            }
        }
        GalerkinState::from_matrix(out)
    }

    /// Quadrature of node values over the domain (mirror pairs first).
    pub fn integrate_nodes(&self, values: &[f64]) -> f64 {
        let q = self.nodes.len();
        let half = q / 2;
        let mut acc = 0.0;
        for i in 0..half {
            acc += self.weights[i] * (values[i] + values[q - 1 - i]);
        }
        if q % 2 == 1 {
            acc += self.weights[half] * values[half];
        }
        acc
    }

    /// Quadrature Gram matrix of the basis functions.
    pub fn gram(&self) -> DMatrix<f64> {
        let modes = self.modes();
        let q = self.nodes.len();
        let mut g = DMatrix::zeros(modes, modes);
        let mut prod = vec![0.0; q];
        for a in 0..modes {
            for b in a..modes {
                for (i, p) in prod.iter_mut().enumerate() {
                    *p = self.phi[a * q + i] * self.phi[b * q + i];
                }
                let v = self.integrate_nodes(&prod);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }
}

/// The scalar hypotheses of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Number of equations.
    pub m: usize,
    /// Split index: components `1..=l` form the first resonance block.
    pub l: usize,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub alpha: f64,
    /// `1 + max(lambda)`, fixed at construction.
    pub delta: f64,
    /// Integrability exponent; recorded only.
    pub p_note: f64,
    /// Relative tolerance used to decide `mu_j == lambda_k`.
    pub resonance_tol: f64,
}

pub const DEFAULT_RESONANCE_TOL: f64 = 1e-8;

impl ProblemConfig {
    pub fn new(lambda: Vec<f64>, sigma: Vec<f64>, l: usize, alpha: f64) -> Result<Self> {
        let m = lambda.len();
        if m == 0 {
            return Err(Error::Config("system needs at least one component".into()));
        }
        if sigma.len() != m {
            return Err(Error::Config(format!(
                "sigma has {} entries, lambda has {m}",
                sigma.len()
            )));
        }
        if l == 0 || l > m {
            return Err(Error::Config(format!("split index l = {l} must lie in [1, {m}]")));
        }
        if let Some(v) = lambda.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite shift {v}")));
        }
        if let Some(s) = sigma.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Hypothesis(format!(
                "degree of resonance {s} outside [0, 1]"
            )));
        }
        let min1 = sigma[..l].iter().copied().fold(f64::INFINITY, f64::min);
        if min1 >= 1.0 {
            return Err(Error::Hypothesis(format!(
                "min(sigma_1..sigma_l) = {min1} must be < 1"
            )));
        }
        if l < m {
            let min2 = sigma[l..].iter().copied().fold(f64::INFINITY, f64::min);
            if min2 >= 1.0 {
                return Err(Error::Hypothesis(format!(
                    "min(sigma_(l+1)..sigma_m) = {min2} must be < 1"
                )));
            }
        }
        if !(alpha > 0.75 && alpha < 1.0) {
            return Err(Error::Hypothesis(format!(
                "fractional exponent alpha = {alpha} must lie in (3/4, 1)"
            )));
        }
        let delta = 1.0 + lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            m,
            l,
            lambda,
            sigma,
            alpha,
            delta,
            p_note: 2.0,
            resonance_tol: DEFAULT_RESONANCE_TOL,
        })
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::Config(format!("integrability exponent p = {p} must be >= 2")));
        }
        self.p_note = p;
        Ok(self)
    }

    pub fn with_resonance_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1e-2) {
            return Err(Error::Config(format!("resonance tolerance {tol} out of range")));
        }
        self.resonance_tol = tol;
        Ok(self)
    }

    /// Absolute kernel-membership threshold near eigenvalue `mu`.
    pub fn kernel_threshold(&self, mu: f64) -> f64 {
        self.resonance_tol * mu.abs().max(1.0)
    }

    pub fn same_components(&self, state: &GalerkinState) -> Result<()> {
        if state.components() != self.m {
            return Err(Error::ShapeMismatch {
                expected: format!("{} components", self.m),
                got: format!("{}", state.components()),
            });
        }
        Ok(())
    }
}

/// `nu[k, j] = mu_j - lambda_k`, snapped to exactly zero on kernel modes.
pub fn shifted_spectrum(basis: &SpectralBasis, config: &ProblemConfig) -> DMatrix<f64> {
    DMatrix::from_fn(config.m, basis.modes(), |k, j| {
        let mu = basis.eigenvalue(j);
        let d = mu - config.lambda[k];
        if d.abs() <= config.kernel_threshold(mu) {
            0.0
        } else {
            d
        }
    })
}

fn check_shape(basis: &SpectralBasis, config: &ProblemConfig, u: &GalerkinState) -> Result<()> {
    config.same_components(u)?;
    if u.modes() != basis.modes() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} modes", basis.modes()),
            got: format!("{}", u.modes()),
        });
    }
    Ok(())
}

/// `(A u)_{k,j} = (mu_j - lambda_k) c_{k,j}`.
pub fn apply_a(basis: &SpectralBasis, config: &ProblemConfig, u: &GalerkinState) -> Result<GalerkinState> {
    check_shape(basis, config, u)?;
    let nu = shifted_spectrum(basis, config);
    Ok(u.map_modes(|mode, c| nu[(mode.component, mode.index)] * c))
}

/// `S_A(t) u`: coefficient-wise `exp(-t (mu_j - lambda_k))`.
///
/// Negative times are accepted only on the unstable modes (`mu_j < lambda_k`)
/// and on kernel modes, which are left untouched for every `t`.
pub fn semigroup_apply(
    basis: &SpectralBasis,
    config: &ProblemConfig,
    t: f64,
    u: &GalerkinState,
) -> Result<GalerkinState> {
    check_shape(basis, config, u)?;
    if !t.is_finite() {
        return Err(Error::Precondition(format!("time {t} is not finite")));
    }
    let nu = shifted_spectrum(basis, config);
    let mut out = u.clone();
    for k in 0..config.m {
        for j in 0..basis.modes() {
            let mode = Mode::new(k, j);
            let n = nu[(k, j)];
            let c = u.get(mode);
            if n == 0.0 || c == 0.0 {
                continue;
            }
            if t < 0.0 && n > 0.0 {
                return Err(Error::Precondition(format!(
                    "backward time {t} on stable mode {mode}"
                )));
            }
            let exponent = -t * n;
            if exponent > OVERFLOW_EXPONENT {
                return Err(Error::UnboundedMode {
                    component: k + 1,
                    mode: j + 1,
                    exponent,
                });
            }
            out.set(mode, c * exponent.exp());
        }
    }
    Ok(out)
}

/// Fractional weight `(delta + mu_j - lambda_k)^alpha` of a mode.
pub fn fractional_weight(config: &ProblemConfig, nu: f64) -> Result<f64> {
    let base = config.delta + nu;
    if !(base > 0.0) {
        return Err(Error::InvariantViolation(format!(
            "fractional base delta + nu = {base} is not positive"
        )));
    }
    Ok(base.powf(config.alpha))
}

/// `( sum (delta + mu_j - lambda_k)^(2 alpha) c_{k,j}² )^(1/2)`.
pub fn fractional_norm(basis: &SpectralBasis, config: &ProblemConfig, u: &GalerkinState) -> Result<f64> {
    check_shape(basis, config, u)?;
    let nu = shifted_spectrum(basis, config);
    let mut acc = 0.0;
    for k in 0..config.m {
        for j in 0..basis.modes() {
            let c = u.get(Mode::new(k, j));
            let w = fractional_weight(config, nu[(k, j)])?;
            acc += (w * c).powi(2);
        }
    }
    Ok(acc.sqrt())
}

/// Constants `(lo, hi)` with `lo |u| <= |u|_alpha <= hi |u|` for states
/// supported on `modes`. `None` for an empty mode set.
pub fn fractional_equivalence<I>(basis: &SpectralBasis, config: &ProblemConfig, modes: I) -> Result<Option<(f64, f64)>>
where
    I: IntoIterator<Item = Mode>,
{
    let nu = shifted_spectrum(basis, config);
    let mut bounds: Option<(f64, f64)> = None;
    for mode in modes {
        let w = fractional_weight(config, nu[(mode.component, mode.index)])?;
        bounds = Some(match bounds {
            None => (w, w),
            Some((lo, hi)) => (lo.min(w), hi.max(w)),
        });
    }
    Ok(bounds)
}
