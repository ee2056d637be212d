//! Degrees of resonance, the Landesman–Lazer functionals over the kernel
//! blocks and the sampled guiding margins `±<F(u + v + w), u>_b`.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{block_inner, Block, Projection, Sign, SplitIndexSet};
use crate::error::{Error, Result};
use crate::nonlinearity::{galerkin_f, NonlinearField, Verdict};
use crate::quadrature::GaussLegendre;
use crate::spectral::{fractional_norm, ProblemConfig, SpectralBasis};
use crate::state::{GalerkinState, Mode};

/// Minimal degrees of each block and the components attaining them
/// (zero-based). The second block is `None` when `l = m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSets {
    pub sigma_check1: f64,
    pub sigma_check2: Option<f64>,
    pub j1: Vec<usize>,
    pub j2: Vec<usize>,
}

impl DegreeSets {
    pub fn minimizers(&self, block: Block) -> &[usize] {
        match block {
            Block::First => &self.j1,
            Block::Second => &self.j2,
        }
    }

    pub fn minimum(&self, block: Block) -> Option<f64> {
        match block {
            Block::First => Some(self.sigma_check1),
            Block::Second => self.sigma_check2,
        }
    }
}

fn argmin_set(values: &[f64], offset: usize) -> (f64, Vec<usize>) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let set = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == min)
        .map(|(i, _)| i + offset)
        .collect();
    (min, set)
}

pub fn degree_sets(config: &ProblemConfig) -> Result<DegreeSets> {
    let l = config.l;
    let (s1, j1) = argmin_set(&config.sigma[..l], 0);
    if s1 >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "min(sigma_1..sigma_l) = {s1} must be < 1"
        )));
    }
    let (s2, j2) = if l < config.m {
        let (s2, j2) = argmin_set(&config.sigma[l..], l);
        if s2 >= 1.0 {
            return Err(Error::Hypothesis(format!(
                "min(sigma_(l+1)..sigma_m) = {s2} must be < 1"
            )));
        }
        (Some(s2), j2)
    } else {
        (None, Vec::new())
    };
    Ok(DegreeSets {
        sigma_check1: s1,
        sigma_check2: s2,
        j1,
        j2,
    })
}

/// Tolerance of the root bisection on sign sets.
pub const ROOT_TOLERANCE: f64 = 1e-12;
const SUBINTERVAL_NODES: usize = 48;

/// Zeros of `g` in the open interval, by sign changes on a uniform grid of
/// `cells` cells refined by bisection.
fn interior_roots<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, cells: usize) -> Vec<f64> {
    let h = (b - a) / cells as f64;
    let mut roots = Vec::new();
    let mut left = a;
    let mut gl = g(a);
    for i in 1..=cells {
        let right = if i == cells { b } else { a + i as f64 * h };
        let gr = g(right);
        if gr == 0.0 && i < cells {
            roots.push(right);
        } else if gl * gr < 0.0 {
            let (mut lo, mut hi, mut glo) = (left, right, gl);
            while hi - lo > ROOT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        left = right;
        gl = gr;
    }
    roots
}

/// The signless functional
/// `S = sum over k in J_b of ( int_{u_k > 0} f_k^+ |u_k|^(1 - sigma_k) - int_{u_k < 0} f_k^- |u_k|^(1 - sigma_k) )`
/// for the kernel function with coefficients `direction`.
///
/// Returns `None` when the block carries no kernel modes.
pub fn ll_functional(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    block: Block,
    direction: &GalerkinState,
) -> Result<Option<f64>> {
    split.check_state(direction)?;
    if split.kernel_modes(block).is_empty() {
        return Ok(None);
    }
    if !field.has_limits() {
        return Err(Error::Precondition(format!(
            "field {} declares no asymptotic limits",
            field.name()
        )));
    }
    let sets = degree_sets(config)?;
    let rule = GaussLegendre::new(SUBINTERVAL_NODES);
    let length = basis.length();
    let mut total = 0.0;
    for &k in sets.minimizers(block) {
        let coeffs: Vec<(usize, f64)> = (0..basis.modes())
            .map(|j| (j, direction.get(Mode::new(k, j))))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        let top = coeffs.iter().map(|(j, _)| j + 1).max().unwrap_or(1);
        let uk = |x: f64| coeffs.iter().map(|&(j, c)| c * basis.phi(j, x)).sum::<f64>();
        let exponent = 1.0 - config.sigma[k];
        let mut breaks = vec![0.0];
        breaks.extend(interior_roots(&uk, 0.0, length, 64 * top));
        breaks.push(length);
        let integrand = |x: f64| {
            let v = uk(x);
            if v > 0.0 {
                field.f_plus(k, x).unwrap() * v.powf(exponent)
            } else if v < 0.0 {
                -field.f_minus(k, x).unwrap() * (-v).powf(exponent)
            } else {
                0.0
            }
        };
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                total += rule.integrate(w[0], w[1], integrand);
            }
        }
    }
    Ok(Some(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LlCondition {
    pub block: Block,
    pub sign: Sign,
}

impl LlCondition {
    pub const fn new(block: Block, sign: Sign) -> Self {
        Self { block, sign }
    }

    pub fn label(&self) -> String {
        format!("LL{}{}", self.block.number(), self.sign.symbol())
    }

    pub fn all() -> [LlCondition; 4] {
        [
            LlCondition::new(Block::First, Sign::Plus),
            LlCondition::new(Block::First, Sign::Minus),
            LlCondition::new(Block::Second, Sign::Plus),
            LlCondition::new(Block::Second, Sign::Minus),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlReport {
    pub condition: String,
    pub block: Block,
    pub sign: Sign,
    /// Smallest value of `sign * S` over the sampled unit kernel sphere.
    pub min_value: Option<f64>,
    /// Kernel coordinates (in block mode order) of the minimizing direction.
    pub argmin_direction: Vec<f64>,
    pub verdict: Verdict,
    pub samples: usize,
    /// `true` when the kernel has dimension two or more, so the sphere was
    /// sampled rather than enumerated.
    pub sampled: bool,
}

pub const DEFAULT_SPHERE_SAMPLES: usize = 512;

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut n = 2u64;
    while primes.len() < count {
        if primes.iter().all(|p| n % p != 0) {
            primes.push(n);
        }
        n += 1;
    }
    primes
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut result = 0.0;
    let mut scale = inv;
    while index > 0 {
        result += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    result
}

/// Unit vectors in `R^dim`: the `2 dim` signed coordinate vectors, then
/// `extra` points from a shifted Halton sequence pushed through Box–Muller.
pub fn sphere_directions(dim: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    if dim < 2 {
        return out;
    }
    let pairs = dim.div_ceil(2);
    let primes = first_primes(2 * pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..2 * pairs).map(|_| rng.gen::<f64>()).collect();
    for n in 1..=extra as u64 {
        let mut v = Vec::with_capacity(2 * pairs);
        for p in 0..pairs {
            let u1 = (radical_inverse(n, primes[2 * p]) + shift[2 * p]).fract();
            let u2 = (radical_inverse(n, primes[2 * p + 1]) + shift[2 * p + 1]).fract();
            let r = (-2.0 * (1.0 - u1).ln()).sqrt();
            let angle = 2.0 * std::f64::consts::PI * u2;
            v.push(r * angle.cos());
            v.push(r * angle.sin());
        }
        v.truncate(dim);
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.push(v.into_iter().map(|c| c / norm).collect());
        }
    }
    out
}

fn embed(split: &SplitIndexSet, modes: &[Mode], coords: &[f64], scale: f64) -> GalerkinState {
    let mut s = GalerkinState::zeros(split.components, split.modes);
    for (&m, &c) in modes.iter().zip(coords) {
        s.set(m, scale * c);
    }
    s
}

/// Minimizes `sign * S` over the coordinate directions of the kernel block
/// and, for kernels of dimension at least two, over `sphere_samples`
/// low-discrepancy directions. Ties keep the earliest sample.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_ll(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    condition: LlCondition,
    sphere_samples: usize,
    seed: u64,
) -> Result<LlReport> {
    let modes = split.kernel_modes(condition.block).to_vec();
    let label = condition.label();
    if modes.is_empty() {
        return Ok(LlReport {
            condition: label,
            block: condition.block,
            sign: condition.sign,
            min_value: None,
            argmin_direction: Vec::new(),
            verdict: Verdict::Vacuous,
            samples: 0,
            sampled: false,
        });
    }
    let dirs = sphere_directions(modes.len(), sphere_samples, seed);
    let mut best: Option<(f64, usize)> = None;
    for (i, d) in dirs.iter().enumerate() {
        let state = embed(split, &modes, d, 1.0);
        let s = ll_functional(field, basis, split, config, condition.block, &state)?
            .expect("block has kernel modes");
        let v = condition.sign.factor() * s;
        if best.map_or(true, |(b, _)| v < b) {
            best = Some((v, i));
        }
    }
    let (min_value, idx) = best.expect("at least two directions");
    Ok(LlReport {
        condition: label,
        block: condition.block,
        sign: condition.sign,
        min_value: Some(min_value),
        argmin_direction: dirs[idx].clone(),
        verdict: if min_value > 0.0 { Verdict::Holds } else { Verdict::Fails },
        samples: dirs.len(),
        sampled: modes.len() >= 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub radius: f64,
    pub min_margin: f64,
}

/// Sampling parameters of [`guiding_margin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSampling {
    /// Fractional-norm radius of the hyperbolic perturbation `w`.
    pub w_radius: f64,
    /// L² radius of the other block's kernel part `v`.
    pub v_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

/// For each `R`, the smallest sampled `sign * <F(u + v + w), u>_b` with
/// `||u||_b = R` in the block kernel, `v` in the other kernel block and `w`
/// in `X- + X+` with fractional norm at most `w_radius`.
#[allow(clippy::too_many_arguments)]
pub fn guiding_margin(
    field: &NonlinearField,
    basis: &SpectralBasis,
    split: &SplitIndexSet,
    config: &ProblemConfig,
    block: Block,
    sign: Sign,
    radii: &[f64],
    sampling: MarginSampling,
) -> Result<Vec<MarginRow>> {
    let modes = split.kernel_modes(block).to_vec();
    if modes.is_empty() {
        return Ok(Vec::new());
    }
    let other = match block {
        Block::First => Block::Second,
        Block::Second => Block::First,
    };
    let other_modes = split.kernel_modes(other).to_vec();
    let hyperbolic = split.modes_of(Projection::QHyperbolic);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let dirs = sphere_directions(modes.len(), sampling.samples, sampling.seed ^ 0x5eed);
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let mut min_margin = f64::INFINITY;
        for i in 0..sampling.samples.max(1) {
            let dir = &dirs[i % dirs.len()];
            let u = embed(split, &modes, dir, radius);
            let mut total = u.clone();
            // the first sample of each radius probes the bare kernel direction
            if i > 0 {
                if !other_modes.is_empty() && sampling.v_radius > 0.0 {
                    let c: Vec<f64> = other_modes.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    let r = sampling.v_radius * rng.gen::<f64>();
                    total = &total + &embed(split, &other_modes, &c, r / n);
                }
                if !hyperbolic.is_empty() && sampling.w_radius > 0.0 {
                    let c: Vec<f64> = hyperbolic.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let w = embed(split, &hyperbolic, &c, 1.0);
                    let wn = fractional_norm(basis, config, &w)?;
                    if wn > 0.0 {
                        let r = sampling.w_radius * rng.gen::<f64>();
                        total = &total + &w.scaled(r / wn);
                    }
                }
            }
            let f = galerkin_f(field, basis, &total)?;
            let margin = sign.factor() * block_inner(split, block, &f, &u);
            min_margin = min_margin.min(margin);
        }
        rows.push(MarginRow { radius, min_margin });
    }
    Ok(rows)
}

/// Smallest grid radius from which every margin is positive; `None` if the
/// last margin is not.
pub fn guiding_radius(rows: &[MarginRow]) -> Option<f64> {
    let mut radius = None;
    for row in rows.iter().rev() {
        if row.min_margin > 0.0 {
            radius = Some(row.radius);
        } else {
            break;
        }
    }
    radius
}
