//! Reaction terms `f = (f_1, ..., f_m)`, their Galerkin projection and
//! sampled checks of the structural hypotheses: boundedness, the one-sided
//! sign conditions and the asymptotic limits `f_k^±`.
//!
//! Every check is certified on samples only. A sampled "holds" supports the
//! hypothesis, it does not prove it.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::Sign;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;
use crate::state::GalerkinState;

/// Pointwise field `(x, u, du, out)`; writes the `m` values of `f(x, u, du)`.
pub type FieldFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// A function of position only.
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Potential `f~(x, u)` with `d f~ / d u_k = f_k`.
pub type PotentialFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct NonlinearField {
    name: String,
    components: usize,
    eval: FieldFn,
    sigma: Vec<f64>,
    limits: Option<(Vec<ProfileFn>, Vec<ProfileFn>)>,
    bound_c3: Option<f64>,
    potential: Option<PotentialFn>,
    origin_jacobian: Option<DMatrix<f64>>,
}

impl fmt::Debug for NonlinearField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearField")
            .field("name", &self.name)
            .field("components", &self.components)
            .field("sigma", &self.sigma)
            .field("has_limits", &self.limits.is_some())
            .field("bound_c3", &self.bound_c3)
            .field("has_potential", &self.potential.is_some())
            .finish()
    }
}

impl NonlinearField {
    /// A field with degrees of resonance zero and nothing else declared.
    pub fn new<F>(name: impl Into<String>, components: usize, eval: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            components,
            eval: Arc::new(eval),
            sigma: vec![0.0; components],
            limits: None,
            bound_c3: None,
            potential: None,
            origin_jacobian: None,
        }
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        assert_eq!(sigma.len(), self.components, "one degree per component");
        self.sigma = sigma;
        self
    }

    /// Declares `f_k^+` and `f_k^-` for every component.
    pub fn with_limits(mut self, plus: Vec<ProfileFn>, minus: Vec<ProfileFn>) -> Self {
        assert_eq!(plus.len(), self.components);
        assert_eq!(minus.len(), self.components);
        self.limits = Some((plus, minus));
        self
    }

    /// Declares constant limits.
    pub fn with_constant_limits(self, plus: &[f64], minus: &[f64]) -> Self {
        let wrap = |v: &[f64]| -> Vec<ProfileFn> {
            v.iter()
                .map(|&c| Arc::new(move |_x: f64| c) as ProfileFn)
                .collect()
        };
        let (p, m) = (wrap(plus), wrap(minus));
        self.with_limits(p, m)
    }

    pub fn with_bound(mut self, c3: f64) -> Self {
        self.bound_c3 = Some(c3);
        self
    }

    pub fn with_potential<P>(mut self, potential: P) -> Self
    where
        P: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.potential = Some(Arc::new(potential));
        self
    }

    /// Declares `D_u f(x, 0, 0)`.
    pub fn with_origin_jacobian(mut self, jacobian: DMatrix<f64>) -> Self {
        self.origin_jacobian = Some(jacobian);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn bound_c3(&self) -> Option<f64> {
        self.bound_c3
    }

    pub fn has_limits(&self) -> bool {
        self.limits.is_some()
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn declared_origin_jacobian(&self) -> Option<&DMatrix<f64>> {
        self.origin_jacobian.as_ref()
    }

    #[inline]
    pub fn eval_into(&self, x: f64, u: &[f64], du: &[f64], out: &mut [f64]) {
        (self.eval)(x, u, du, out)
    }

    pub fn eval(&self, x: f64, u: &[f64], du: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components];
        self.eval_into(x, u, du, &mut out);
        out
    }

    pub fn f_plus(&self, k: usize, x: f64) -> Option<f64> {
        self.limits.as_ref().map(|(p, _)| p[k](x))
    }

    pub fn f_minus(&self, k: usize, x: f64) -> Option<f64> {
        self.limits.as_ref().map(|(_, m)| m[k](x))
    }

    pub fn potential(&self, x: f64, u: &[f64]) -> Option<f64> {
        self.potential.as_ref().map(|p| p(x, u))
    }

    /// The field `-f`, with every declared quantity transformed accordingly.
    pub fn negated(&self) -> Self {
        let eval = self.eval.clone();
        let neg = move |x: f64, u: &[f64], du: &[f64], out: &mut [f64]| {
            eval(x, u, du, out);
            for v in out.iter_mut() {
                *v = -*v;
            }
        };
        let negate_all = |fs: &[ProfileFn]| -> Vec<ProfileFn> {
            fs.iter()
                .map(|f| {
                    let f = f.clone();
                    Arc::new(move |x: f64| -f(x)) as ProfileFn
                })
                .collect()
        };
        Self {
            name: format!("-{}", self.name),
            components: self.components,
            eval: Arc::new(neg),
            sigma: self.sigma.clone(),
            limits: self
                .limits
                .as_ref()
                .map(|(p, m)| (negate_all(p), negate_all(m))),
            bound_c3: self.bound_c3,
            potential: self.potential.clone().map(|p| {
                Arc::new(move |x: f64, u: &[f64]| -p(x, u)) as PotentialFn
            }),
            origin_jacobian: self.origin_jacobian.as_ref().map(|g| -g),
        }
    }
}

/// Coefficients `<f_k(., u(.), u'(.)), phi_j>` by quadrature, with `u'`
/// taken from the sine expansion.
pub fn galerkin_f(field: &NonlinearField, basis: &SpectralBasis, u: &GalerkinState) -> Result<GalerkinState> {
    let m = u.components();
    if field.components() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{} components", field.components()),
            got: format!("{m}"),
        });
    }
    let q = basis.node_count();
    let (values, derivs) = basis.eval_nodes(u);
    let mut out = vec![0.0; m * q];
    let mut ui = vec![0.0; m];
    let mut dui = vec![0.0; m];
    let mut fi = vec![0.0; m];
    for (i, &x) in basis.nodes().iter().enumerate() {
        for k in 0..m {
            ui[k] = values[k * q + i];
            dui[k] = derivs[k * q + i];
        }
        field.eval_into(x, &ui, &dui, &mut fi);
        for k in 0..m {
            if !fi[k].is_finite() {
                return Err(Error::Evaluation {
                    x,
                    component: k + 1,
                    value: fi[k],
                });
            }
            out[k * q + i] = fi[k];
        }
    }
    Ok(basis.project_nodes(&out, m))
}

/// `true` if `f(x, 0, 0) = 0` at every node.
pub fn vanishes_at_origin(field: &NonlinearField, xs: &[f64]) -> bool {
    let m = field.components();
    let zero = vec![0.0; m];
    let mut out = vec![0.0; m];
    xs.iter().all(|&x| {
        field.eval_into(x, &zero, &zero, &mut out);
        out.iter().all(|v| *v == 0.0)
    })
}

/// `D_u f(x, 0, 0)`: the declared matrix if present, otherwise central
/// differences at the first node, checked for independence of `x`.
pub fn origin_jacobian(field: &NonlinearField, xs: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(g) = field.declared_origin_jacobian() {
        return Ok(g.clone());
    }
    let m = field.components();
    let h = 1e-6;
    let at = |x: f64| {
        let zero = vec![0.0; m];
        let mut g = DMatrix::zeros(m, m);
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        for i in 0..m {
            let mut e = zero.clone();
            e[i] = h;
            field.eval_into(x, &e, &zero, &mut plus);
            e[i] = -h;
            field.eval_into(x, &e, &zero, &mut minus);
            for k in 0..m {
                g[(k, i)] = (plus[k] - minus[k]) / (2.0 * h);
            }
        }
        g
    };
    let first = xs.first().copied().unwrap_or(0.0);
    let g = at(first);
    for &x in xs {
        let other = at(x);
        let diff = (&other - &g).amax();
        if diff > 1e-6 * g.amax().max(1.0) {
            return Err(Error::Precondition(format!(
                "linearization at the origin depends on x (deviation {diff:.3e} at x = {x})"
            )));
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Vacuous,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Vacuous => "vacuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// Margin or value at the witness point.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `F2`, `C1+`, `C2-`, `LIMITS`, ...
    pub condition: String,
    pub verdict: Verdict,
    /// Empirical constant or minimal margin, depending on the condition.
    pub value: Option<f64>,
    pub witness: Option<Witness>,
    pub samples: usize,
    pub note: String,
}

impl ConditionReport {
    pub fn vacuous(condition: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            condition: condition.into(),
            verdict: Verdict::Vacuous,
            value: None,
            witness: None,
            samples: 0,
            note: note.into(),
        }
    }

    fn failed(condition: impl Into<String>, note: impl Into<String>, witness: Witness) -> Self {
        Self {
            condition: condition.into(),
            verdict: Verdict::Fails,
            value: Some(witness.value),
            witness: Some(witness),
            samples: 0,
            note: note.into(),
        }
    }
}

/// Points `(x, u, du)` at which hypotheses are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub xs: Vec<f64>,
    pub draws: Vec<(Vec<f64>, Vec<f64>)>,
    pub u_box: f64,
    pub du_box: f64,
}

pub const DEFAULT_DRAWS: usize = 200;
pub const DEFAULT_U_BOX: f64 = 1e3;

impl SampleGrid {
    /// Box corners first (the all-plus corner leading), then `draws` seeded
    /// random points with log-uniform magnitudes in `[1e-3, u_box]`.
    pub fn new(xs: Vec<f64>, components: usize, draws: usize, u_box: f64, du_box: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let corners = if components <= 4 { 1usize << components } else { 2 };
        for c in 0..corners {
            let u: Vec<f64> = (0..components)
                .map(|k| {
                    let negative = if components <= 4 { c >> k & 1 == 1 } else { c == 1 };
                    if negative {
                        -u_box
                    } else {
                        u_box
                    }
                })
                .collect();
            out.push((u, vec![0.0; components]));
        }
        let (lo, hi) = (1e-3f64.min(u_box).ln(), u_box.ln());
        for _ in 0..draws {
            let u = (0..components)
                .map(|_| {
                    if rng.gen_bool(0.05) {
                        return 0.0;
                    }
                    let mag = rng.gen_range(lo..=hi).exp();
                    if rng.gen_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let du = (0..components)
                .map(|_| if du_box > 0.0 { rng.gen_range(-du_box..=du_box) } else { 0.0 })
                .collect();
            out.push((u, du));
        }
        Self {
            xs,
            draws: out,
            u_box,
            du_box,
        }
    }

    /// Default grid: quadrature nodes, 200 draws, `|u| <= 1e3`, `|du| <= 1e3`.
    pub fn for_basis(basis: &SpectralBasis, components: usize, seed: u64) -> Self {
        Self::new(basis.nodes().to_vec(), components, DEFAULT_DRAWS, DEFAULT_U_BOX, DEFAULT_U_BOX, seed)
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every sample in grid order: draws outer, positions inner.
    fn for_each<F: FnMut(f64, &[f64], &[f64])>(&self, mut f: F) {
        for (u, du) in &self.draws {
            for &x in &self.xs {
                f(x, u, du);
            }
        }
    }
}

/// Sampled boundedness check.
///
/// The field is flagged unbounded if it exceeds a declared `C3`, or if
/// scaling every sample by 100 raises the maximum by at least a factor 4.
/// The witness is the worst in-box sample, first in grid order on ties.
pub fn check_bounded(field: &NonlinearField, grid: &SampleGrid) -> ConditionReport {
    let m = field.components();
    let mut out = vec![0.0; m];
    let mut best: Option<Witness> = None;
    let mut nonfinite: Option<Witness> = None;
    grid.for_each(|x, u, du| {
        field.eval_into(x, u, du, &mut out);
        for &v in &out {
            if !v.is_finite() && nonfinite.is_none() {
                nonfinite = Some(Witness { x, u: u.to_vec(), du: du.to_vec(), value: v });
            }
            if best.as_ref().map_or(true, |b| v.abs() > b.value) {
                best = Some(Witness { x, u: u.to_vec(), du: du.to_vec(), value: v.abs() });
            }
        }
    });
    let samples = grid.len();
    if let Some(w) = nonfinite {
        let mut r = ConditionReport::failed("F2", "non-finite value", w);
        r.samples = samples;
        return r;
    }
    let Some(worst) = best else {
        return ConditionReport::vacuous("F2", "empty sample grid");
    };
    let mut scaled_max: f64 = 0.0;
    let mut scaled = vec![0.0; m];
    grid.for_each(|x, u, du| {
        for (s, v) in scaled.iter_mut().zip(u) {
            *s = 100.0 * v;
        }
        field.eval_into(x, &scaled, du, &mut out);
        for &v in &out {
            scaled_max = scaled_max.max(v.abs());
        }
    });
    let mut report = if let Some(c3) = field.bound_c3() {
        if worst.value > c3 * (1.0 + 1e-12) {
            ConditionReport::failed("F2", format!("declared C3 = {c3} exceeded"), worst.clone())
        } else {
            ConditionReport {
                condition: "F2".into(),
                verdict: Verdict::Holds,
                value: Some(worst.value),
                witness: Some(worst.clone()),
                samples: 0,
                note: format!("declared C3 = {c3} respected on samples"),
            }
        }
    } else {
        ConditionReport {
            condition: "F2".into(),
            verdict: Verdict::Holds,
            value: Some(worst.value),
            witness: Some(worst.clone()),
            samples: 0,
            note: "empirical C3 from samples".into(),
        }
    };
    if report.verdict == Verdict::Holds && scaled_max >= 4.0 * worst.value && scaled_max > 0.0 {
        report = ConditionReport::failed(
            "F2",
            format!(
                "growth under scaling: max {scaled_max:.3e} at 100x the box against {:.3e} inside",
                worst.value
            ),
            worst,
        );
    }
    report.samples = samples;
    report
}

/// `sign * f_k(x, u, du) |u_k|^sigma_k sgn(u_k) >= h(x)` at every sample.
/// The reported value is the minimal margin.
pub fn check_sign_condition(
    field: &NonlinearField,
    k: usize,
    sign: Sign,
    h: &dyn Fn(f64) -> f64,
    grid: &SampleGrid,
) -> ConditionReport {
    let m = field.components();
    let sigma = field.sigma()[k];
    let mut out = vec![0.0; m];
    let mut worst: Option<Witness> = None;
    grid.for_each(|x, u, du| {
        field.eval_into(x, u, du, &mut out);
        let uk = u[k];
        let lhs = sign.factor() * out[k] * uk.abs().powf(sigma) * signum0(uk);
        let margin = lhs - h(x);
        if worst.as_ref().map_or(true, |w| margin < w.value) {
            worst = Some(Witness { x, u: u.to_vec(), du: du.to_vec(), value: margin });
        }
    });
    let name = format!("C({}){}", k + 1, sign.symbol());
    let Some(w) = worst else {
        return ConditionReport::vacuous(name, "empty sample grid");
    };
    let holds = w.value >= 0.0;
    ConditionReport {
        condition: name,
        verdict: if holds { Verdict::Holds } else { Verdict::Fails },
        value: Some(w.value),
        witness: Some(w),
        samples: grid.len(),
        note: "sampled".into(),
    }
}

fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Tolerance on `| |s|^sigma f_k - f_k^± |` at the largest `s`.
pub const LIMIT_TOLERANCE: f64 = 1e-3;

/// Checks the declared limits `f_k^±` by evaluating
/// `|s|^sigma_k f_k(x, u + s e_k, du)` at `±s` with `u_k = 0`.
pub fn verify_limits(field: &NonlinearField, k: usize, s_values: &[f64], grid: &SampleGrid) -> Result<ConditionReport> {
    let name = format!("LIMITS({})", k + 1);
    let s_max = s_values.last().copied().unwrap_or(0.0);
    if s_values.windows(2).any(|w| w[1] <= w[0]) || s_max < 1e6 {
        return Err(Error::Precondition(
            "limit check needs an increasing s sequence reaching 1e6".into(),
        ));
    }
    if !field.has_limits() {
        return Ok(ConditionReport {
            condition: name,
            verdict: Verdict::Fails,
            value: None,
            witness: None,
            samples: 0,
            note: "no limits declared".into(),
        });
    }
    let m = field.components();
    let sigma = field.sigma()[k];
    let mut out = vec![0.0; m];
    let mut point = vec![0.0; m];
    let mut worst: Option<Witness> = None;
    let mut profile = Vec::with_capacity(s_values.len());
    for &s in s_values {
        let mut sup: f64 = 0.0;
        grid.for_each(|x, u, du| {
            point.copy_from_slice(u);
            for (dir, target) in [(1.0, field.f_plus(k, x)), (-1.0, field.f_minus(k, x))] {
                let target = target.unwrap_or(f64::NAN);
                point[k] = dir * s;
                field.eval_into(x, &point, du, &mut out);
                let scaled = s.powf(sigma) * out[k];
                let dev = (scaled - target).abs();
                let dev = if dev.is_nan() { f64::INFINITY } else { dev };
                sup = sup.max(dev);
                if s == s_max && worst.as_ref().map_or(true, |w| dev > w.value) {
                    worst = Some(Witness { x, u: point.clone(), du: du.to_vec(), value: dev });
                }
            }
        });
        profile.push(sup);
    }
    let w = worst.expect("non-empty grid");
    let holds = w.value <= LIMIT_TOLERANCE;
    let trend = profile
        .iter()
        .map(|d| format!("{d:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(ConditionReport {
        condition: name,
        verdict: if holds { Verdict::Holds } else { Verdict::Fails },
        value: Some(w.value),
        witness: Some(w),
        samples: grid.len() * s_values.len() * 2,
        note: format!("sup deviation per s: [{trend}]; uniformity checked on samples only"),
    })
}

/// Largest difference quotient `|f(x,u) - f(x,v)|_inf / |u - v|_inf` over
/// `pairs` random pairs in the cube of half-width `radius`.
pub fn lipschitz_estimate(field: &NonlinearField, xs: &[f64], radius: f64, pairs: usize, seed: u64) -> f64 {
    let m = field.components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = vec![0.0; m];
    let mut fa = vec![0.0; m];
    let mut fb = vec![0.0; m];
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let x = xs[rng.gen_range(0..xs.len())];
        let a: Vec<f64> = (0..m).map(|_| rng.gen_range(-radius..=radius)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|v| (v + rng.gen_range(-0.01..=0.01) * radius).clamp(-radius, radius))
            .collect();
        let du = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if du == 0.0 {
            continue;
        }
        field.eval_into(x, &a, &zero, &mut fa);
        field.eval_into(x, &b, &zero, &mut fb);
        let df = fa.iter().zip(&fb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        best = best.max(df / du);
    }
    best
}

/// Checks `d f~ / d u_k = f_k` by central differences at sampled points.
/// Returns the worst absolute deviation.
pub fn potential_deviation(field: &NonlinearField, xs: &[f64], radius: f64, samples: usize, seed: u64) -> Result<f64> {
    let m = field.components();
    if !field.has_potential() {
        return Err(Error::GradientStructure(format!("field {} declares no potential", field.name())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = xs[rng.gen_range(0..xs.len())];
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-radius..=radius)).collect();
        field.eval_into(x, &u, &zero, &mut f);
        for k in 0..m {
            let h = 1e-5 * u[k].abs().max(1e-2);
            let mut p = u.clone();
            p[k] += h;
            let up = field.potential(x, &p).unwrap();
            p[k] -= 2.0 * h;
            let dn = field.potential(x, &p).unwrap();
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((fd - f[k]).abs());
        }
    }
    Ok(worst)
}
