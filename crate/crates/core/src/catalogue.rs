//! Built-in reaction terms addressable by name.
//!
//! | name | `f_k(x, u)` | limits `f_k^±` | potential |
//! |------|-------------|----------------|-----------|
//! | `arctan` or `arctan(K)` | `a_k atan(K_k u_k)` | `± a_k pi/2 sgn K_k` | yes |
//! | `scaled-arctan` | `a_k atan(K_k u_k) (1 + u_k²)^(-sigma_k/2)` | `± a_k pi/2 sgn K_k` | no |
//! | `gaussian-decay` | `a_k exp(-u_k²)` | `0` | no |
//! | `constant-kernel` | `a phi_j(x)` in one component, zero elsewhere | `a phi_j(x)` | yes |
//! | `linear` | `K_k u_k` (unbounded) | none | yes |
//! | `zero` | `0` | `0` | yes |
//!
//! `K_k` comes from `gains` (or the scalar `gain`, default 1) and `a_k` from
//! `amplitudes` (or `amplitude`, default 1). `constant-kernel` uses the
//! one-based `component` and `mode`, both defaulting to 1.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{NonlinearField, ProfileFn};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
}

pub const CATALOGUE: &[&str] = &[
    "arctan",
    "scaled-arctan",
    "gaussian-decay",
    "constant-kernel",
    "linear",
    "zero",
];

fn per_component(name: &str, scalar: Option<f64>, list: &Option<Vec<f64>>, m: usize) -> Result<Vec<f64>> {
    match (scalar, list) {
        (Some(_), Some(_)) => Err(Error::Config(format!("give either {name} or {name}s, not both"))),
        (_, Some(v)) if v.len() != m => Err(Error::Config(format!(
            "{name}s has {} entries for {m} components",
            v.len()
        ))),
        (_, Some(v)) => Ok(v.clone()),
        (Some(s), None) => Ok(vec![s; m]),
        (None, None) => Ok(vec![1.0; m]),
    }
}

/// Splits `arctan(40)` into `("arctan", Some(40.0))`.
fn parse_name(name: &str) -> Result<(&str, Option<f64>)> {
    let name = name.trim();
    match name.split_once('(') {
        None => Ok((name, None)),
        Some((base, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("unbalanced parenthesis in field name {name}")))?;
            let value = inner
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad parameter {inner:?} in field name {name}")))?;
            Ok((base.trim(), Some(value)))
        }
    }
}

fn constants(values: &[f64]) -> Vec<ProfileFn> {
    values
        .iter()
        .map(|&c| Arc::new(move |_x: f64| c) as ProfileFn)
        .collect()
}

fn strict_sign(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// `int_0^u atan(K s) ds`
fn arctan_antiderivative(gain: f64, u: f64) -> f64 {
    if gain == 0.0 {
        return 0.0;
    }
    let z = gain * u;
    u * z.atan() - (z * z).ln_1p() / (2.0 * gain)
}

/// Builds a catalogue field for a system with degrees `sigma` on `(0, length)`.
pub fn build_field(name: &str, params: &FieldParams, sigma: &[f64], length: f64) -> Result<NonlinearField> {
    let m = sigma.len();
    let (base, inline_gain) = parse_name(name)?;
    let gain_scalar = match (inline_gain, params.gain) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("gain given both in the name and as a parameter".into()))
        }
        (a, b) => a.or(b),
    };
    let gains = per_component("gain", gain_scalar, &params.gains, m)?;
    let amps = per_component("amplitude", params.amplitude, &params.amplitudes, m)?;
    let field = match base {
        "arctan" => {
            let (g, a) = (gains.clone(), amps.clone());
            let plus: Vec<f64> = (0..m).map(|k| amps[k] * FRAC_PI_2 * strict_sign(gains[k])).collect();
            let minus: Vec<f64> = plus.iter().map(|p| -p).collect();
            let (gp, ap) = (gains.clone(), amps.clone());
            let c3 = amps.iter().map(|a| a.abs()).fold(0.0, f64::max) * FRAC_PI_2;
            NonlinearField::new("arctan", m, move |_x, u, _du, out| {
                for k in 0..out.len() {
                    out[k] = a[k] * (g[k] * u[k]).atan();
                }
            })
            .with_sigma(sigma.to_vec())
            .with_limits(constants(&plus), constants(&minus))
            .with_bound(c3)
            .with_potential(move |_x, u| {
                (0..u.len()).map(|k| ap[k] * arctan_antiderivative(gp[k], u[k])).sum()
            })
            .with_origin_jacobian(DMatrix::from_fn(m, m, |i, j| if i == j { amps[i] * gains[i] } else { 0.0 }))
        }
        "scaled-arctan" => {
            let (g, a, s) = (gains.clone(), amps.clone(), sigma.to_vec());
            let plus: Vec<f64> = (0..m).map(|k| amps[k] * FRAC_PI_2 * strict_sign(gains[k])).collect();
            let minus: Vec<f64> = plus.iter().map(|p| -p).collect();
            let c3 = amps.iter().map(|a| a.abs()).fold(0.0, f64::max) * FRAC_PI_2;
            NonlinearField::new("scaled-arctan", m, move |_x, u, _du, out| {
                for k in 0..out.len() {
                    out[k] = a[k] * (g[k] * u[k]).atan() * (1.0 + u[k] * u[k]).powf(-0.5 * s[k]);
                }
            })
            .with_sigma(sigma.to_vec())
            .with_limits(constants(&plus), constants(&minus))
            .with_bound(c3)
            .with_origin_jacobian(DMatrix::from_fn(m, m, |i, j| if i == j { amps[i] * gains[i] } else { 0.0 }))
        }
        "gaussian-decay" => {
            let a = amps.clone();
            let c3 = amps.iter().map(|a| a.abs()).fold(0.0, f64::max);
            NonlinearField::new("gaussian-decay", m, move |_x, u, _du, out| {
                for k in 0..out.len() {
                    out[k] = a[k] * (-u[k] * u[k]).exp();
                }
            })
            .with_sigma(sigma.to_vec())
            .with_constant_limits(&vec![0.0; m], &vec![0.0; m])
            .with_bound(c3)
            .with_origin_jacobian(DMatrix::zeros(m, m))
        }
        "constant-kernel" => {
            let component = params.component.unwrap_or(1);
            let mode = params.mode.unwrap_or(1);
            if component == 0 || component > m || mode == 0 {
                return Err(Error::Config(format!(
                    "constant-kernel needs 1 <= component <= {m} and mode >= 1"
                )));
            }
            let amplitude = params.amplitude.unwrap_or(1.0);
            let k0 = component - 1;
            let norm = (2.0 / length).sqrt();
            let freq = mode as f64 * PI / length;
            let profile = move |x: f64| amplitude * norm * (freq * x).sin();
            let limits: Vec<ProfileFn> = (0..m)
                .map(|k| {
                    if k == k0 {
                        Arc::new(profile) as ProfileFn
                    } else {
                        Arc::new(|_x: f64| 0.0) as ProfileFn
                    }
                })
                .collect();
            NonlinearField::new("constant-kernel", m, move |x, _u, _du, out| {
                out.fill(0.0);
                out[k0] = profile(x);
            })
            .with_sigma(sigma.to_vec())
            .with_limits(limits.clone(), limits)
            .with_bound(amplitude.abs() * norm)
            .with_potential(move |x, u| profile(x) * u[k0])
            .with_origin_jacobian(DMatrix::zeros(m, m))
        }
        "linear" => {
            let g = gains.clone();
            let gp = gains.clone();
            NonlinearField::new("linear", m, move |_x, u, _du, out| {
                for k in 0..out.len() {
                    out[k] = g[k] * u[k];
                }
            })
            .with_sigma(sigma.to_vec())
            .with_potential(move |_x, u| (0..u.len()).map(|k| 0.5 * gp[k] * u[k] * u[k]).sum())
            .with_origin_jacobian(DMatrix::from_fn(m, m, |i, j| if i == j { gains[i] } else { 0.0 }))
        }
        "zero" => NonlinearField::new("zero", m, |_x, _u, _du, out| out.fill(0.0))
            .with_sigma(sigma.to_vec())
            .with_constant_limits(&vec![0.0; m], &vec![0.0; m])
            .with_bound(0.0)
            .with_potential(|_x, _u| 0.0)
            .with_origin_jacobian(DMatrix::zeros(m, m)),
        other => {
            return Err(Error::Config(format!(
                "unknown field {other:?}; available: {}",
                CATALOGUE.join(", ")
            )))
        }
    };
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::potential_deviation;

    #[test]
    fn inline_gain() {
        let f = build_field("arctan(40)", &FieldParams::default(), &[0.0], 1.0).unwrap();
        let v = f.eval(0.3, &[0.01], &[0.0]);
        assert!((v[0] - 0.4f64.atan()).abs() < 1e-15);
        assert_eq!(f.declared_origin_jacobian().unwrap()[(0, 0)], 40.0);
        assert!(build_field("arctan(x)", &FieldParams::default(), &[0.0], 1.0).is_err());
        assert!(build_field("nope", &FieldParams::default(), &[0.0], 1.0).is_err());
    }

    #[test]
    fn potentials_match_fields() {
        let xs = [0.1, 0.5, 0.9];
        for name in ["arctan(40)", "constant-kernel", "linear", "zero"] {
            let f = build_field(name, &FieldParams::default(), &[0.0], 1.0).unwrap();
            let dev = potential_deviation(&f, &xs, 5.0, 50, 1).unwrap();
            assert!(dev < 1e-6, "{name}: {dev}");
        }
    }

    #[test]
    fn negative_amplitude_flips_limits() {
        let p = FieldParams {
            amplitude: Some(-1.0),
            ..Default::default()
        };
        let f = build_field("arctan", &p, &[0.0], 1.0).unwrap();
        assert_eq!(f.f_plus(0, 0.2), Some(-FRAC_PI_2));
        assert_eq!(f.f_minus(0, 0.2), Some(FRAC_PI_2));
    }
}
