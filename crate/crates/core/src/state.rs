use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mode of the Galerkin discretization: `component` selects the equation
/// (`0..m`), `index` the sine eigenfunction (`0..J`, eigenvalue number
/// `index + 1`). Serialized one-based as `[component, mode]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    pub component: usize,
    pub index: usize,
}

impl Mode {
    pub const fn new(component: usize, index: usize) -> Self {
        Self { component, index }
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.component + 1, self.index + 1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [k, j] = <[usize; 2]>::deserialize(d)?;
        if k == 0 || j == 0 {
            return Err(serde::de::Error::custom("modes are one-based"));
        }
        Ok(Mode::new(k - 1, j - 1))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.component + 1, self.index + 1)
    }
}

/// Coefficients `c[k, j] = <u_k, phi_j>` of an `m`-component state in the
/// orthonormal sine basis. Since the basis is orthonormal the Frobenius norm
/// of the coefficient matrix is the L² norm of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    coeffs: DMatrix<f64>,
}

impl GalerkinState {
    pub fn zeros(components: usize, modes: usize) -> Self {
        Self {
            coeffs: DMatrix::zeros(components, modes),
        }
    }

    pub fn from_matrix(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    /// Builds a state from one row of coefficients per component.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != j) {
            return Err(Error::ShapeMismatch {
                expected: format!("{m} rows of length {j}"),
                got: "ragged rows".into(),
            });
        }
        Ok(Self {
            coeffs: DMatrix::from_fn(m, j, |k, i| rows[k][i]),
        })
    }

    /// `amplitude * phi_index` in `component`, zero elsewhere.
    pub fn single_mode(components: usize, modes: usize, mode: Mode, amplitude: f64) -> Self {
        let mut s = Self::zeros(components, modes);
        s.coeffs[(mode.component, mode.index)] = amplitude;
        s
    }

    pub fn components(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn modes(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn get(&self, mode: Mode) -> f64 {
        self.coeffs[(mode.component, mode.index)]
    }

    pub fn set(&mut self, mode: Mode, value: f64) {
        self.coeffs[(mode.component, mode.index)] = value;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coeffs
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.components())
            .map(|k| self.coeffs.row(k).iter().copied().collect())
            .collect()
    }

    /// Flattened coefficients, component-major: `k * J + j`.
    pub fn to_flat(&self) -> Vec<f64> {
        let (m, j) = self.coeffs.shape();
        let mut out = Vec::with_capacity(m * j);
        for k in 0..m {
            for i in 0..j {
                out.push(self.coeffs[(k, i)]);
            }
        }
        out
    }

    pub fn from_flat(components: usize, modes: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != components * modes {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficients", components * modes),
                got: format!("{}", flat.len()),
            });
        }
        Ok(Self {
            coeffs: DMatrix::from_fn(components, modes, |k, i| flat[k * modes + i]),
        })
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (&self.coeffs - &other.coeffs).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: &self.coeffs * factor,
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.coeffs += &other.coeffs * a;
    }

    /// Applies `f(mode, c)` to every coefficient.
    pub fn map_modes<F: FnMut(Mode, f64) -> f64>(&self, mut f: F) -> Self {
        let (m, j) = self.coeffs.shape();
        Self {
            coeffs: DMatrix::from_fn(m, j, |k, i| f(Mode::new(k, i), self.coeffs[(k, i)])),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.coeffs.shape() != other.coeffs.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.coeffs.shape()),
                got: format!("{:?}", other.coeffs.shape()),
            });
        }
        Ok(())
    }
}

impl Add for &GalerkinState {
    type Output = GalerkinState;
    fn add(self, rhs: Self) -> GalerkinState {
        GalerkinState {
            coeffs: &self.coeffs + &rhs.coeffs,
        }
    }
}

impl Sub for &GalerkinState {
    type Output = GalerkinState;
    fn sub(self, rhs: Self) -> GalerkinState {
        GalerkinState {
            coeffs: &self.coeffs - &rhs.coeffs,
        }
    }
}

impl Mul<f64> for &GalerkinState {
    type Output = GalerkinState;
    fn mul(self, rhs: f64) -> GalerkinState {
        self.scaled(rhs)
    }
}

impl Neg for &GalerkinState {
    type Output = GalerkinState;
    fn neg(self) -> GalerkinState {
        self.scaled(-1.0)
    }
}

impl Serialize for GalerkinState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GalerkinState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        GalerkinState::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip_and_norm() {
        let s = GalerkinState::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(s.norm_l2(), 5.0);
        let flat = s.to_flat();
        assert_eq!(flat, vec![3.0, 0.0, 0.0, 4.0]);
        assert_eq!(GalerkinState::from_flat(2, 2, &flat).unwrap(), s);
        assert!(GalerkinState::from_flat(2, 3, &flat).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(GalerkinState::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mode_serializes_one_based() {
        let json = serde_json::to_string(&Mode::new(0, 2)).unwrap();
        assert_eq!(json, "[1,3]");
        let back: Mode = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Mode::new(0, 2));
    }
}
