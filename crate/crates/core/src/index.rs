//! Homotopy-type tokens, the index exponents of the set of bounded solutions
//! `K_inf`, the count `d0` at the origin and the resulting connection test.
//!
//! Indices are only ever spheres or the trivial type, so the smash product
//! reduces to adding exponents.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::decomposition::{CountVector, Sign};
use crate::error::{Error, Result};
use crate::nonlinearity::Verdict;
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HomotopyType {
    /// Homotopy type of a one-point space.
    Trivial,
    /// Pointed `k`-sphere.
    Sphere(usize),
}

impl fmt::Display for HomotopyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HomotopyType::Trivial => f.write_str("Trivial"),
            HomotopyType::Sphere(k) => write!(f, "Sphere({k})"),
        }
    }
}

impl std::str::FromStr for HomotopyType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "Trivial" {
            return Ok(HomotopyType::Trivial);
        }
        s.strip_prefix("Sphere(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.parse().ok())
            .map(HomotopyType::Sphere)
            .ok_or_else(|| Error::Config(format!("not a homotopy type: {s:?}")))
    }
}

impl Serialize for HomotopyType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HomotopyType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Smash product of tokens.
pub fn wedge(a: HomotopyType, b: HomotopyType) -> HomotopyType {
    match (a, b) {
        (HomotopyType::Sphere(p), HomotopyType::Sphere(q)) => HomotopyType::Sphere(p + q),
        _ => HomotopyType::Trivial,
    }
}

/// What the sampled checks established for one kernel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    /// The LL and sign conditions hold with this sign.
    Verified(Sign),
    /// The block has trivial kernel; compatible with either sign.
    Vacuous,
    /// Neither sign could be established.
    Unverified,
}

impl BlockStatus {
    /// Combines the LL verdicts `(plus, minus)` and the sign-condition
    /// verdicts `(plus, minus)` of a block.
    pub fn from_verdicts(ll: (Verdict, Verdict), sign: (Verdict, Verdict)) -> Self {
        if ll.0 == Verdict::Vacuous && ll.1 == Verdict::Vacuous {
            return BlockStatus::Vacuous;
        }
        if ll.0.holds() && sign.0 != Verdict::Fails {
            BlockStatus::Verified(Sign::Plus)
        } else if ll.1.holds() && sign.1 != Verdict::Fails {
            BlockStatus::Verified(Sign::Minus)
        } else {
            BlockStatus::Unverified
        }
    }
}

/// Which sign pattern of the two blocks produced the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexBranch {
    PlusPlus,
    MinusMinus,
    PlusMinus,
    MinusPlus,
    None,
}

impl IndexBranch {
    pub fn from_signs(first: Sign, second: Sign) -> Self {
        match (first, second) {
            (Sign::Plus, Sign::Plus) => IndexBranch::PlusPlus,
            (Sign::Minus, Sign::Minus) => IndexBranch::MinusMinus,
            (Sign::Plus, Sign::Minus) => IndexBranch::PlusMinus,
            (Sign::Minus, Sign::Plus) => IndexBranch::MinusPlus,
        }
    }

    pub fn signs(self) -> Option<(Sign, Sign)> {
        match self {
            IndexBranch::PlusPlus => Some((Sign::Plus, Sign::Plus)),
            IndexBranch::MinusMinus => Some((Sign::Minus, Sign::Minus)),
            IndexBranch::PlusMinus => Some((Sign::Plus, Sign::Minus)),
            IndexBranch::MinusPlus => Some((Sign::Minus, Sign::Plus)),
            IndexBranch::None => None,
        }
    }
}

/// Exponent of `h(K_inf)` for a sign pattern: the kernel dimension of every
/// block with sign `+` is added to `d_inf`.
pub fn branch_exponent(counts: CountVector, first: Sign, second: Sign) -> usize {
    let mut e = counts.d_inf;
    if first == Sign::Plus {
        e += counts.n1;
    }
    if second == Sign::Plus {
        e += counts.n2;
    }
    e
}

/// Index of `K_inf` from the verified block statuses. A vacuous block takes
/// the sign of the other block (its dimension is zero either way); two
/// vacuous blocks give the `plus-plus` branch with exponent `d_inf`.
pub fn index_k_infinity(counts: CountVector, first: BlockStatus, second: BlockStatus) -> (Option<HomotopyType>, IndexBranch) {
    use BlockStatus::*;
    let signs = match (first, second) {
        (Verified(a), Verified(b)) => Some((a, b)),
        (Verified(a), Vacuous) => Some((a, a)),
        (Vacuous, Verified(b)) => Some((b, b)),
        (Vacuous, Vacuous) => Some((Sign::Plus, Sign::Plus)),
        _ => None,
    };
    match signs {
        Some((a, b)) => (
            Some(HomotopyType::Sphere(branch_exponent(counts, a, b))),
            IndexBranch::from_signs(a, b),
        ),
        None => (None, IndexBranch::None),
    }
}

/// Index for a partition of the components into blocks with one sign each:
/// `d_inf + sum of the kernel dimensions of the + blocks`.
pub fn index_partition(
    d_inf: usize,
    partition: &[Vec<usize>],
    kernel_dims: &[usize],
    signs: &[Sign],
) -> Result<HomotopyType> {
    if partition.len() != signs.len() {
        return Err(Error::Config(format!(
            "{} blocks but {} signs",
            partition.len(),
            signs.len()
        )));
    }
    let m = kernel_dims.len();
    let mut seen = vec![false; m];
    for block in partition {
        if block.is_empty() {
            return Err(Error::Config("empty block in partition".into()));
        }
        for &k in block {
            if k >= m {
                return Err(Error::Config(format!("component {} out of range", k + 1)));
            }
            if seen[k] {
                return Err(Error::Config(format!("component {} in two blocks", k + 1)));
            }
            seen[k] = true;
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!("component {} in no block", k + 1)));
    }
    let extra: usize = partition
        .iter()
        .zip(signs)
        .filter(|(_, s)| **s == Sign::Plus)
        .flat_map(|(b, _)| b.iter().map(|&k| kernel_dims[k]))
        .sum();
    Ok(HomotopyType::Sphere(d_inf + extra))
}

/// `G = D_u f(x, 0, 0)` together with the orthogonal diagonalization of
/// `G + diag(lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationData {
    pub g: DMatrix<f64>,
    pub lambda: Vec<f64>,
    /// Eigenvalues of `G + diag(lambda)`, ascending.
    pub theta: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `theta`.
    pub eigenvectors: DMatrix<f64>,
}

impl LinearizationData {
    pub fn new(g: DMatrix<f64>, lambda: &[f64]) -> Result<Self> {
        let m = lambda.len();
        if g.shape() != (m, m) {
            return Err(Error::ShapeMismatch {
                expected: format!("{m}x{m}"),
                got: format!("{:?}", g.shape()),
            });
        }
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::GradientStructure(format!(
                "linearization at the origin is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let shifted = &g + DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lambda));
        let eig = SymmetricEigen::new(shifted.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        let residual = (eigenvectors.transpose() * &shifted * &eigenvectors
            - DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&theta)))
        .amax();
        let scale = shifted.amax().max(1.0);
        if residual > 1e-10 * scale {
            return Err(Error::Linalg(format!(
                "diagonalization residual {residual:.3e} too large"
            )));
        }
        Ok(Self {
            g,
            lambda: lambda.to_vec(),
            theta,
            eigenvectors,
        })
    }

    pub fn components(&self) -> usize {
        self.lambda.len()
    }
}

fn resonance_threshold(tol: f64, mu: f64) -> f64 {
    tol * mu.abs().max(1.0)
}

/// `true` iff no `theta_k` lies within the relative tolerance of a retained
/// eigenvalue.
pub fn nonresonance_at_origin(basis: &SpectralBasis, lin: &LinearizationData, tol: f64) -> bool {
    lin.theta.iter().all(|&theta| {
        basis
            .eigenvalues()
            .all(|mu| (theta - mu).abs() > resonance_threshold(tol, mu))
    })
}

/// The two counts of `d0`: eigenvalues below each `theta_k`, and negative
/// eigenvalues of the dense linearization
/// `kron(diag(mu), I) - kron(I, G + Lambda)` on all retained modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub d0: usize,
    pub dense_negative: usize,
}

pub fn d_zero(basis: &SpectralBasis, lin: &LinearizationData, tol: f64) -> Result<ZeroCount> {
    let mu_max = basis.largest_eigenvalue();
    for (k, &theta) in lin.theta.iter().enumerate() {
        if theta >= mu_max {
            return Err(Error::Truncation {
                component: k + 1,
                value: theta,
                mu_max,
            });
        }
        for (j, mu) in basis.eigenvalues().enumerate() {
            if (theta - mu).abs() <= resonance_threshold(tol, mu) {
                return Err(Error::ResonanceAtOrigin {
                    component: k + 1,
                    mode: j + 1,
                    theta,
                    mu,
                });
            }
        }
    }
    let d0 = lin
        .theta
        .iter()
        .map(|&theta| basis.eigenvalues().filter(|&mu| mu < theta).count())
        .sum();
    let dense_negative = dense_negative_count(basis, lin);
    if d0 != dense_negative {
        return Err(Error::InvariantViolation(format!(
            "eigenvalue count {d0} disagrees with dense linearization count {dense_negative}"
        )));
    }
    Ok(ZeroCount { d0, dense_negative })
}

fn dense_negative_count(basis: &SpectralBasis, lin: &LinearizationData) -> usize {
    let m = lin.components();
    let modes = basis.modes();
    let n = m * modes;
    let mut dense = DMatrix::zeros(n, n);
    for j in 0..modes {
        let mu = basis.eigenvalue(j);
        for a in 0..m {
            for b in 0..m {
                let shift = if a == b { lin.lambda[a] } else { 0.0 };
                dense[(j * m + a, j * m + b)] = -(lin.g[(a, b)] + shift);
            }
            dense[(j * m + a, j * m + a)] += mu;
        }
    }
    SymmetricEigen::new(dense)
        .eigenvalues
        .iter()
        .filter(|v| **v < 0.0)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionVerdict {
    pub h_k_zero: Option<HomotopyType>,
    pub h_k_infinity: Option<HomotopyType>,
    pub theorem_applied: IndexBranch,
    pub connection_predicted: bool,
    pub reason: String,
}

/// A connection between the origin and a nontrivial bounded solution is
/// predicted when `h(K0) = Sphere(d0)` differs from `h(K_inf)`.
pub fn connection_verdict(
    counts: CountVector,
    d0: Option<usize>,
    first: BlockStatus,
    second: BlockStatus,
    nonresonant: bool,
) -> ConnectionVerdict {
    let (h_inf, branch) = index_k_infinity(counts, first, second);
    let h_zero = d0.map(HomotopyType::Sphere);
    let (predicted, reason) = match (h_inf, h_zero) {
        (None, _) => (false, "no sign pattern verified for the kernel blocks".to_string()),
        (_, _) if !nonresonant => (false, "the origin is resonant".to_string()),
        (_, None) => (false, "d0 unavailable".to_string()),
        (Some(inf), Some(zero)) => {
            if zero != inf && zero != HomotopyType::Trivial {
                (true, format!("h(K0) = {zero} differs from h(K_inf) = {inf}"))
            } else {
                (false, format!("h(K0) = {zero} equals h(K_inf) = {inf}"))
            }
        }
    };
    ConnectionVerdict {
        h_k_zero: h_zero,
        h_k_infinity: h_inf,
        theorem_applied: branch,
        connection_predicted: predicted,
        reason,
    }
}

/// The assembled index stage of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub counts: CountVector,
    pub d0: Option<usize>,
    pub ll_flags: BTreeMap<String, Verdict>,
    pub c_flags: BTreeMap<String, Verdict>,
    pub block_status: [BlockStatus; 2],
    pub theta: Option<Vec<f64>>,
    pub nonresonant_at_origin: Option<bool>,
    pub h_k_infinity: Option<HomotopyType>,
    pub h_k_zero: Option<HomotopyType>,
    pub theorem_applied: IndexBranch,
    pub connection_predicted: bool,
    pub reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, Domain1D};
    use std::f64::consts::PI;
    use HomotopyType::*;

    #[test]
    fn wedge_examples() {
        assert_eq!(wedge(Sphere(0), Sphere(2)), Sphere(2));
        assert_eq!(wedge(Sphere(1), Sphere(1)), Sphere(2));
        assert_eq!(wedge(Trivial, Sphere(3)), Trivial);
    }

    #[test]
    fn token_strings() {
        assert_eq!(Sphere(3).to_string(), "Sphere(3)");
        assert_eq!("Sphere(3)".parse::<HomotopyType>().unwrap(), Sphere(3));
        assert_eq!("Trivial".parse::<HomotopyType>().unwrap(), Trivial);
        assert_eq!(serde_json::to_string(&Sphere(1)).unwrap(), "\"Sphere(1)\"");
    }

    #[test]
    fn branch_examples() {
        use BlockStatus::*;
        let plus = Verified(Sign::Plus);
        let minus = Verified(Sign::Minus);
        assert_eq!(index_k_infinity(CountVector::new(0, 1, 0), plus, Vacuous).0, Some(Sphere(1)));
        assert_eq!(
            index_k_infinity(CountVector::new(1, 1, 1), minus, minus),
            (Some(Sphere(1)), IndexBranch::MinusMinus)
        );
        assert_eq!(
            index_k_infinity(CountVector::new(2, 1, 3), plus, minus),
            (Some(Sphere(3)), IndexBranch::PlusMinus)
        );
        assert_eq!(index_k_infinity(CountVector::new(2, 1, 3), plus, Unverified).1, IndexBranch::None);
    }

    #[test]
    fn partition_validation() {
        let dims = [1, 1, 2];
        assert_eq!(
            index_partition(1, &[vec![0], vec![1], vec![2]], &dims, &[Sign::Plus; 3]).unwrap(),
            Sphere(5)
        );
        assert_eq!(index_partition(4, &[vec![0, 1, 2]], &dims, &[Sign::Minus]).unwrap(), Sphere(4));
        assert!(index_partition(0, &[vec![0, 1], vec![1, 2]], &dims, &[Sign::Plus; 2]).is_err());
        assert!(index_partition(0, &[vec![0, 1]], &dims, &[Sign::Plus]).is_err());
    }

    fn basis() -> SpectralBasis {
        build_basis(Domain1D::with_modes(1.0, 16).unwrap(), 16).unwrap()
    }

    #[test]
    fn d_zero_examples() {
        let b = basis();
        let lin = LinearizationData::new(DMatrix::from_element(1, 1, 40.0), &[PI * PI]).unwrap();
        assert!((lin.theta[0] - 49.8696).abs() < 1e-4);
        assert_eq!(d_zero(&b, &lin, 1e-8).unwrap().d0, 2);
        assert!(nonresonance_at_origin(&b, &lin, 1e-8));

        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let lin = LinearizationData::new(g, &[PI * PI, PI * PI]).unwrap();
        assert_eq!(d_zero(&b, &lin, 1e-8).unwrap().d0, 1);

        let lin = LinearizationData::new(DMatrix::zeros(2, 2), &[1.0, 5.0]).unwrap();
        assert_eq!(d_zero(&b, &lin, 1e-8).unwrap().d0, 0);
    }

    #[test]
    fn resonant_origin() {
        let b = basis();
        let lin = LinearizationData::new(DMatrix::zeros(1, 1), &[4.0 * PI * PI]).unwrap();
        assert!(!nonresonance_at_origin(&b, &lin, 1e-8));
        let lin = LinearizationData::new(DMatrix::zeros(1, 1), &[PI * PI]).unwrap();
        assert!(!nonresonance_at_origin(&b, &lin, 1e-8));
        assert!(matches!(d_zero(&b, &lin, 1e-8), Err(Error::ResonanceAtOrigin { .. })));
    }

    #[test]
    fn verdict_examples() {
        use BlockStatus::*;
        let v = connection_verdict(CountVector::new(0, 1, 0), Some(2), Verified(Sign::Plus), Vacuous, true);
        assert_eq!(v.h_k_infinity, Some(Sphere(1)));
        assert_eq!(v.h_k_zero, Some(Sphere(2)));
        assert!(v.connection_predicted);

        let v = connection_verdict(CountVector::new(0, 1, 1), Some(2), Verified(Sign::Plus), Verified(Sign::Plus), true);
        assert!(!v.connection_predicted);

        let v = connection_verdict(CountVector::new(1, 1, 0), Some(1), Verified(Sign::Minus), Vacuous, true);
        assert_eq!(v.h_k_infinity, Some(Sphere(1)));
        assert!(!v.connection_predicted);

        let v = connection_verdict(CountVector::new(0, 1, 0), Some(2), Verified(Sign::Plus), Vacuous, false);
        assert!(!v.connection_predicted);
        assert_eq!(v.theorem_applied, IndexBranch::PlusPlus);
    }
}
