//! Splitting of the Galerkin modes into the kernel blocks `N1`, `N2` and the
//! spectral subspaces `X-`, `X+`, the associated orthogonal projections and
//! the integer counts `d_inf`, `n1`, `n2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ProblemConfig, SpectralBasis};
use crate::state::{GalerkinState, Mode};

/// Which of the four subspaces a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    /// Kernel mode of a component `k <= l`.
    N1,
    /// Kernel mode of a component `k > l`.
    N2,
    /// `mu_j < lambda_k`.
    Minus,
    /// `mu_j > lambda_k`.
    Plus,
}

/// The two kernel blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    First,
    Second,
}

impl Block {
    pub fn kernel_class(self) -> ModeClass {
        match self {
            Block::First => ModeClass::N1,
            Block::Second => ModeClass::N2,
        }
    }

    /// Number used in condition names (`LL1`, `C2`, ...).
    pub fn number(self) -> u8 {
        match self {
            Block::First => 1,
            Block::Second => 2,
        }
    }
}

/// Sign choice of a one-sided hypothesis (`LL1+`, `C2-`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndexSet {
    pub n1_modes: Vec<Mode>,
    pub n2_modes: Vec<Mode>,
    pub minus_modes: Vec<Mode>,
    pub plus_modes: Vec<Mode>,
    pub resonance_tolerance: f64,
    /// Shifted eigenvalues `mu_j - lambda_k`, zero on kernel modes; row-major `m x J`.
    pub shifted: Vec<f64>,
    pub components: usize,
    pub modes: usize,
    pub l: usize,
    /// Components whose shift matches no retained eigenvalue.
    pub nonresonant_components: Vec<usize>,
    labels: Vec<ModeClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    pub d_inf: usize,
    pub n1: usize,
    pub n2: usize,
}

impl CountVector {
    pub const fn new(d_inf: usize, n1: usize, n2: usize) -> Self {
        Self { d_inf, n1, n2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Projection {
    P1,
    P2,
    QMinus,
    QPlus,
    /// `P1 + P2`
    Q0,
    /// `Q- + Q+`
    QHyperbolic,
}

impl Projection {
    pub fn contains(self, class: ModeClass) -> bool {
        use ModeClass::*;
        match self {
            Projection::P1 => class == N1,
            Projection::P2 => class == N2,
            Projection::QMinus => class == Minus,
            Projection::QPlus => class == Plus,
            Projection::Q0 => matches!(class, N1 | N2),
            Projection::QHyperbolic => matches!(class, Minus | Plus),
        }
    }
}

/// Classifies every mode `(k, j)` using the relative kernel tolerance of
/// `config`.
///
/// Fails when some shift is not below the largest retained eigenvalue (the
/// unstable subspace would be under-counted) or when a shift lies just outside
/// the kernel tolerance, in `(tol, 10 tol)`, where the answer depends on
/// rounding of user input.
pub fn classify(basis: &SpectralBasis, config: &ProblemConfig) -> Result<SplitIndexSet> {
    let m = config.m;
    let modes = basis.modes();
    let mu_max = basis.largest_eigenvalue();
    for (k, &lambda) in config.lambda.iter().enumerate() {
        if lambda >= mu_max - config.kernel_threshold(mu_max) {
            return Err(Error::Truncation {
                component: k + 1,
                value: lambda,
                mu_max,
            });
        }
    }
    let mut split = SplitIndexSet {
        n1_modes: Vec::new(),
        n2_modes: Vec::new(),
        minus_modes: Vec::new(),
        plus_modes: Vec::new(),
        resonance_tolerance: config.resonance_tol,
        shifted: vec![0.0; m * modes],
        components: m,
        modes,
        l: config.l,
        nonresonant_components: Vec::new(),
        labels: Vec::with_capacity(m * modes),
    };
    for k in 0..m {
        let mut resonant = false;
        for j in 0..modes {
            let mu = basis.eigenvalue(j);
            let diff = mu - config.lambda[k];
            let thr = config.kernel_threshold(mu);
            let mode = Mode::new(k, j);
            let class = if diff.abs() <= thr {
                resonant = true;
                if k < config.l {
                    ModeClass::N1
                } else {
                    ModeClass::N2
                }
            } else if diff.abs() < 10.0 * thr {
                return Err(Error::AmbiguousResonance {
                    component: k + 1,
                    mode: j + 1,
                    distance: diff.abs(),
                    tol: thr,
                    band: 10.0 * thr,
                });
            } else if diff < 0.0 {
                ModeClass::Minus
            } else {
                ModeClass::Plus
            };
            match class {
                ModeClass::N1 => split.n1_modes.push(mode),
                ModeClass::N2 => split.n2_modes.push(mode),
                ModeClass::Minus => split.minus_modes.push(mode),
                ModeClass::Plus => split.plus_modes.push(mode),
            }
            split.shifted[k * modes + j] = if matches!(class, ModeClass::N1 | ModeClass::N2) {
                0.0
            } else {
                diff
            };
            split.labels.push(class);
        }
        if !resonant {
            split.nonresonant_components.push(k);
        }
    }
    Ok(split)
}

impl SplitIndexSet {
    pub fn class_of(&self, mode: Mode) -> ModeClass {
        self.labels[mode.component * self.modes + mode.index]
    }

    /// `mu_j - lambda_k` with kernel modes snapped to zero.
    pub fn shift(&self, mode: Mode) -> f64 {
        self.shifted[mode.component * self.modes + mode.index]
    }

    /// `true` when every shift coincides with some retained eigenvalue.
    pub fn is_resonant(&self) -> bool {
        self.nonresonant_components.is_empty()
    }

    pub fn kernel_modes(&self, block: Block) -> &[Mode] {
        match block {
            Block::First => &self.n1_modes,
            Block::Second => &self.n2_modes,
        }
    }

    /// Component range of a block (zero-based).
    pub fn block_components(&self, block: Block) -> std::ops::Range<usize> {
        match block {
            Block::First => 0..self.l,
            Block::Second => self.l..self.components,
        }
    }

    pub fn modes_of(&self, projection: Projection) -> Vec<Mode> {
        let mut out = Vec::new();
        for k in 0..self.components {
            for j in 0..self.modes {
                let mode = Mode::new(k, j);
                if projection.contains(self.class_of(mode)) {
                    out.push(mode);
                }
            }
        }
        out
    }

    pub fn check_state(&self, u: &GalerkinState) -> Result<()> {
        if u.components() != self.components || u.modes() != self.modes {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.components, self.modes),
                got: format!("{}x{}", u.components(), u.modes()),
            });
        }
        Ok(())
    }
}

pub fn counts(split: &SplitIndexSet) -> CountVector {
    CountVector {
        d_inf: split.minus_modes.len(),
        n1: split.n1_modes.len(),
        n2: split.n2_modes.len(),
    }
}

/// Zeroes every coefficient outside the selected subspace.
pub fn project(split: &SplitIndexSet, projection: Projection, u: &GalerkinState) -> GalerkinState {
    u.map_modes(|mode, c| {
        if projection.contains(split.class_of(mode)) {
            c
        } else {
            0.0
        }
    })
}

/// `min |mu_j - lambda_k|` over the hyperbolic modes, `None` if there are none.
pub fn spectral_gap(split: &SplitIndexSet) -> Option<f64> {
    split
        .minus_modes
        .iter()
        .chain(&split.plus_modes)
        .map(|&m| split.shift(m).abs())
        .min_by(f64::total_cmp)
}

/// Block seminorm `||P_b u||_b`: the L² norm of the block's kernel part.
pub fn block_norm(split: &SplitIndexSet, block: Block, u: &GalerkinState) -> f64 {
    split
        .kernel_modes(block)
        .iter()
        .map(|&m| u.get(m).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Block inner product `<a, b>_block = sum over block components of the L²
/// product`.
pub fn block_inner(split: &SplitIndexSet, block: Block, a: &GalerkinState, b: &GalerkinState) -> f64 {
    let mut acc = 0.0;
    for k in split.block_components(block) {
        for j in 0..split.modes {
            let mode = Mode::new(k, j);
            acc += a.get(mode) * b.get(mode);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, Domain1D};
    use std::f64::consts::PI;

    fn basis(modes: usize) -> SpectralBasis {
        build_basis(Domain1D::with_modes(1.0, modes).unwrap(), modes).unwrap()
    }

    fn modes(list: &[(usize, usize)]) -> Vec<Mode> {
        list.iter().map(|&(k, j)| Mode::new(k - 1, j - 1)).collect()
    }

    #[test]
    fn first_eigenvalue_shift() {
        let cfg = ProblemConfig::new(vec![PI * PI], vec![0.0], 1, 0.8).unwrap();
        let s = classify(&basis(3), &cfg).unwrap();
        assert_eq!(s.n1_modes, modes(&[(1, 1)]));
        assert!(s.minus_modes.is_empty());
        assert_eq!(s.plus_modes, modes(&[(1, 2), (1, 3)]));
        assert_eq!(counts(&s), CountVector::new(0, 1, 0));
    }

    #[test]
    fn second_eigenvalue_shift() {
        let cfg = ProblemConfig::new(vec![4.0 * PI * PI], vec![0.0], 1, 0.8).unwrap();
        let s = classify(&basis(3), &cfg).unwrap();
        assert_eq!(s.n1_modes, modes(&[(1, 2)]));
        assert_eq!(s.minus_modes, modes(&[(1, 1)]));
        assert_eq!(s.plus_modes, modes(&[(1, 3)]));
        assert_eq!(counts(&s), CountVector::new(1, 1, 0));
    }

    #[test]
    fn two_components() {
        let cfg = ProblemConfig::new(vec![PI * PI, 4.0 * PI * PI], vec![0.0, 0.0], 1, 0.8).unwrap();
        let s = classify(&basis(3), &cfg).unwrap();
        assert_eq!(s.n1_modes, modes(&[(1, 1)]));
        assert_eq!(s.n2_modes, modes(&[(2, 2)]));
        assert_eq!(s.minus_modes, modes(&[(2, 1)]));
        assert_eq!(counts(&s).d_inf, 1);

        let cfg = ProblemConfig::new(vec![PI * PI, PI * PI], vec![0.0, 0.0], 1, 0.8).unwrap();
        assert_eq!(counts(&classify(&basis(3), &cfg).unwrap()), CountVector::new(0, 1, 1));
    }

    #[test]
    fn ambiguity_band_and_truncation() {
        let mu = PI * PI;
        let cfg = ProblemConfig::new(vec![mu * (1.0 + 5e-8)], vec![0.0], 1, 0.8).unwrap();
        assert!(matches!(
            classify(&basis(3), &cfg),
            Err(Error::AmbiguousResonance { component: 1, mode: 1, .. })
        ));
        let cfg = ProblemConfig::new(vec![9.0 * mu], vec![0.0], 1, 0.8).unwrap();
        assert!(matches!(classify(&basis(3), &cfg), Err(Error::Truncation { .. })));
    }

    #[test]
    fn nonresonant_components_are_reported() {
        let cfg = ProblemConfig::new(vec![20.0], vec![0.0], 1, 0.8).unwrap();
        let s = classify(&basis(3), &cfg).unwrap();
        assert!(!s.is_resonant());
        assert_eq!(s.nonresonant_components, vec![0]);
        assert_eq!(spectral_gap(&s).unwrap(), 20.0 - PI * PI);
    }

    #[test]
    fn gap_on_first_eigenvalue() {
        let cfg = ProblemConfig::new(vec![PI * PI], vec![0.0], 1, 0.8).unwrap();
        let s = classify(&basis(4), &cfg).unwrap();
        approx::assert_relative_eq!(spectral_gap(&s).unwrap(), 3.0 * PI * PI, epsilon = 1e-12);
    }
}
