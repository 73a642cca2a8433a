//! Slope fields: the piecewise log-linear counterexample constructions,
//! the intro demo fields, and sampling-based checks of the difference and
//! growth bounds.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OsgoodError, Result};
use crate::integrator::Trajectory;
use crate::modulus::Modulus;

/// An evaluable slope function F(x, y).
///
/// Piecewise fields return `f64::INFINITY` as an overflow sentinel when |y|
/// exceeds the representable log-grid range.
pub trait ScalarField: Send + Sync {
    fn eval(&self, x: f64, y: f64) -> f64;

    fn autonomous(&self) -> bool {
        true
    }

    fn label(&self) -> String;
}

/// f(x, y) = -L·y. Saturates the Lipschitz envelopes.
#[derive(Debug, Clone)]
pub struct LinearDecayField {
    pub rate: f64,
}

impl ScalarField for LinearDecayField {
    fn eval(&self, _x: f64, y: f64) -> f64 {
        -self.rate * y
    }

    fn label(&self) -> String {
        format!("linear:{}", self.rate)
    }
}

/// f(y) = 2√|y|: the classical non-uniqueness demo.
#[derive(Debug, Clone, Default)]
pub struct SqrtField;

impl ScalarField for SqrtField {
    fn eval(&self, _x: f64, y: f64) -> f64 {
        2.0 * y.abs().sqrt()
    }

    fn label(&self) -> String {
        "sqrt".into()
    }
}

/// f(y) = 1 + y²: blows up like tan x.
#[derive(Debug, Clone, Default)]
pub struct RiccatiField;

impl ScalarField for RiccatiField {
    fn eval(&self, _x: f64, y: f64) -> f64 {
        1.0 + y * y
    }

    fn label(&self) -> String {
        "riccati".into()
    }
}

/// Closure-backed field, for extremal equations and tests.
pub struct FnField<F: Fn(f64, f64) -> f64 + Send + Sync> {
    f: F,
    name: String,
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> FnField<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { f, name: name.into() }
    }
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Which counterexample construction a piecewise field realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiecewiseVariant {
    /// F(0) = 1, F(e^n) = e^n φ(n); solutions escape to ∞ in finite time
    /// when Σ 1/φ(n) converges.
    BlowUp,
    /// F(t) = 0 for t <= 0, F(e^{-n}) = e^{-n} φ(n-1); y' = -F(y) collapses
    /// to zero in finite time when Σ 1/φ(n) converges.
    NonUniqueness,
}

/// Autonomous piecewise log-linear field with breakpoints on the geometric
/// grid e^(±n), materialized lazily from the breakpoint index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseLogLinearField {
    pub variant: PiecewiseVariant,
    pub modulus: Modulus,
}

pub const E: f64 = std::f64::consts::E;

impl PiecewiseLogLinearField {
    pub fn blowup(m: &Modulus) -> Self {
        Self { variant: PiecewiseVariant::BlowUp, modulus: m.clone() }
    }

    pub fn nonuniqueness(m: &Modulus) -> Self {
        Self { variant: PiecewiseVariant::NonUniqueness, modulus: m.clone() }
    }

    fn phi(&self, n: f64) -> f64 {
        self.modulus.eval_raw(n)
    }

    /// Index n with exp(n) <= y < exp(n+1), exact at breakpoints.
    fn growth_index(y: f64) -> i64 {
        let mut n = y.ln().floor() as i64;
        while (n as f64).exp() > y {
            n -= 1;
        }
        while ((n + 1) as f64).exp() <= y {
            n += 1;
        }
        n
    }

    /// Index n >= 1 with exp(-n-1) < y <= exp(-n), exact at breakpoints.
    fn decay_index(y: f64) -> i64 {
        let mut n = (-(y.ln())).floor() as i64;
        if n < 1 {
            n = 1;
        }
        while n > 1 && y > (-(n as f64)).exp() {
            n -= 1;
        }
        while y <= (-((n + 1) as f64)).exp() {
            n += 1;
        }
        n
    }

    /// F(y) in direct coordinates.
    pub fn eval_y(&self, y: f64) -> f64 {
        match self.variant {
            PiecewiseVariant::BlowUp => {
                if y < 0.0 {
                    1.0
                } else if y <= 1.0 {
                    1.0 + (self.phi(0.0) - 1.0) * y
                } else {
                    let n = Self::growth_index(y);
                    let nf = n as f64;
                    let en = nf.exp();
                    if !en.is_finite() {
                        return f64::INFINITY;
                    }
                    let fk = en * self.phi(nf);
                    let slope = (E * self.phi(nf + 1.0) - self.phi(nf)) / (E - 1.0);
                    fk + (y - en) * slope
                }
            }
            PiecewiseVariant::NonUniqueness => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    self.phi(0.0)
                } else if y >= (-1.0f64).exp() {
                    // affine from e^{-1}·phi(0) at e^{-1} to phi(0) at 1
                    self.phi(0.0) * y
                } else {
                    let n = Self::decay_index(y);
                    let nf = n as f64;
                    let en = (-nf).exp();
                    let fk = en * self.phi(nf - 1.0);
                    let slope = (E * self.phi(nf - 1.0) - self.phi(nf)) / (E - 1.0);
                    fk + (y - en) * slope
                }
            }
        }
    }

    /// F(e^u)/e^u computed without forming e^u when |u| is large.
    ///
    /// Uses the breakpoint identities F(e^n)/e^n = φ(n) (blow-up) and
    /// F(e^{-n})/e^{-n} = φ(n-1) (non-uniqueness) with the affine segment
    /// rewritten in log-shifted coordinates.
    pub fn eval_logspace(&self, u: f64) -> f64 {
        match self.variant {
            PiecewiseVariant::BlowUp => {
                if u < 0.0 {
                    // F(y) = 1 + (phi(0)-1)·y on (0, 1)
                    (self.phi(0.0) - 1.0) + (-u).exp()
                } else {
                    let mut n = u.floor();
                    if n > u {
                        n -= 1.0;
                    }
                    let r = u - n;
                    let phi_n = self.phi(n);
                    let slope = (E * self.phi(n + 1.0) - phi_n) / (E - 1.0);
                    slope + (phi_n - slope) * (-r).exp()
                }
            }
            PiecewiseVariant::NonUniqueness => {
                if u >= 0.0 {
                    self.phi(0.0) * (-u).exp()
                } else if u >= -1.0 {
                    self.phi(0.0)
                } else {
                    let mut n = (-u).floor();
                    if n > -u {
                        n -= 1.0;
                    }
                    let r = -u - n;
                    let phi_prev = self.phi(n - 1.0);
                    let slope = (E * phi_prev - self.phi(n)) / (E - 1.0);
                    slope + (phi_prev - slope) * r.exp()
                }
            }
        }
    }

    /// Breakpoint dump over the index range, as (y, F(y)) rows.
    pub fn breakpoints(&self, n_lo: i64, n_hi: i64) -> Vec<(f64, f64)> {
        let mut rows = Vec::new();
        match self.variant {
            PiecewiseVariant::BlowUp => {
                rows.push((0.0, 1.0));
                for n in n_lo.max(0)..=n_hi {
                    let y = (n as f64).exp();
                    rows.push((y, self.eval_y(y)));
                }
            }
            PiecewiseVariant::NonUniqueness => {
                rows.push((0.0, 0.0));
                for n in (n_lo.max(1)..=n_hi).rev() {
                    let y = (-(n as f64)).exp();
                    rows.push((y, self.eval_y(y)));
                }
                rows.push((1.0, self.phi(0.0)));
            }
        }
        rows
    }
}

impl ScalarField for PiecewiseLogLinearField {
    fn eval(&self, _x: f64, y: f64) -> f64 {
        self.eval_y(y)
    }

    fn label(&self) -> String {
        match self.variant {
            PiecewiseVariant::BlowUp => format!("blowup[{}]", self.modulus.family_name()),
            PiecewiseVariant::NonUniqueness => format!("nonuniq[{}]", self.modulus.family_name()),
        }
    }
}

/// Time reversal: (x, y) ↦ -F(-x, y). Integrating the result forward
/// reproduces the original dynamics backward.
pub struct ReversedField {
    inner: Arc<dyn ScalarField>,
}

pub fn reverse_time(f: Arc<dyn ScalarField>) -> ReversedField {
    ReversedField { inner: f }
}

impl ScalarField for ReversedField {
    fn eval(&self, x: f64, y: f64) -> f64 {
        -self.inner.eval(-x, y)
    }

    fn autonomous(&self) -> bool {
        self.inner.autonomous()
    }

    fn label(&self) -> String {
        format!("reversed({})", self.inner.label())
    }
}

/// The shifted field G(x, t) = F(x, t + y1(x)) - F(x, y1(x)).
///
/// Along the true solution y1' = F(x, y1), so subtracting F(x, y1(x)) is the
/// exact derivative term; G(x, 0) = 0 identically by construction.
pub struct ShiftedField {
    base: Arc<dyn ScalarField>,
    reference: Arc<Trajectory>,
}

pub fn shifted_field(base: Arc<dyn ScalarField>, reference: Arc<Trajectory>) -> ShiftedField {
    ShiftedField { base, reference }
}

impl ShiftedField {
    /// Range-checked evaluation; errors when x is outside the reference span.
    pub fn eval_checked(&self, x: f64, t: f64) -> Result<f64> {
        let y1 = self.reference.eval(x)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.base.eval(x, t + y1) - self.base.eval(x, y1))
    }
}

impl ScalarField for ShiftedField {
    /// NaN outside the reference span; use [`ShiftedField::eval_checked`]
    /// to observe the range error.
    fn eval(&self, x: f64, t: f64) -> f64 {
        self.eval_checked(x, t).unwrap_or(f64::NAN)
    }

    fn autonomous(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        format!("shifted({})", self.base.label())
    }
}

/// The solution family of y' = 2√|y|, parametrized by -∞ <= a <= b <= ∞.
pub fn demo_sqrt_family(a: f64, b: f64, x: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a > b {
        return Err(OsgoodError::Domain(format!("need a <= b, got a = {a}, b = {b}")));
    }
    Ok(if x < a {
        -(x - a) * (x - a)
    } else if x <= b {
        0.0
    } else {
        (x - b) * (x - b)
    })
}

/// Deterministic sampling plan for the condition checkers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub seed: u64,
    pub samples: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Gap sizes z - y are log-uniform over this range.
    pub gap_range: (f64, f64),
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100_000,
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            gap_range: (1e-12, 1.0),
        }
    }
}

/// Verdict of a sampling check of the difference or growth bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub samples_checked: usize,
    /// Largest observed |ΔF| / bound (or |F| / bound for the growth check).
    pub worst_ratio: f64,
    pub worst_witness: (f64, f64, f64),
    pub passed: bool,
}

/// Sampling check of |F(x,y) - F(x,z)| < (z-y)·ψ·φ(|log(z-y)|) for
/// y < z <= y + 1. Gap sizes are log-uniform; y alternates between uniform
/// draws, log-stratified draws near the lower edge, and the edge itself.
pub fn check_osgood_difference(
    f: &dyn ScalarField,
    m: &Modulus,
    psi_const: f64,
    plan: &SamplingPlan,
) -> Result<ConditionReport> {
    if !(psi_const > 0.0) {
        return Err(OsgoodError::Domain("psi_const must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (glo, ghi) = plan.gap_range;
    if !(glo > 0.0 && ghi <= 1.0 && glo < ghi) {
        return Err(OsgoodError::Config("gap_range must satisfy 0 < lo < hi <= 1".into()));
    }
    let (ln_glo, ln_ghi) = (glo.ln(), ghi.ln());
    let (xlo, xhi) = plan.x_range;
    let (ylo, yhi) = plan.y_range;
    let mut worst = 0.0f64;
    let mut witness = (f64::NAN, f64::NAN, f64::NAN);
    for i in 0..plan.samples {
        let x = xlo + rng.gen::<f64>() * (xhi - xlo);
        let gap = (ln_glo + rng.gen::<f64>() * (ln_ghi - ln_glo)).exp();
        let y = match i % 4 {
            0 => ylo,
            1 | 2 => ylo + rng.gen::<f64>() * (yhi - ylo),
            _ => {
                // log-stratified offset above the lower edge
                let scale = (yhi - ylo).max(f64::MIN_POSITIVE);
                ylo + scale * (rng.gen::<f64>() * (1e-12f64.ln())).exp()
            }
        };
        let z = y + gap;
        // the realized gap after rounding is what the pair actually tests
        let g = z - y;
        if !(g > 0.0) {
            continue;
        }
        let bound = g * psi_const * m.eval(g.ln().abs())?;
        let diff = (f.eval(x, y) - f.eval(x, z)).abs();
        let ratio = diff / bound;
        if ratio > worst {
            worst = ratio;
            witness = (x, y, z);
        }
    }
    Ok(ConditionReport {
        samples_checked: plan.samples,
        worst_ratio: worst,
        worst_witness: witness,
        // extremal fields saturate the bound; allow rounding at equality
        passed: worst <= 1.0 + 1e-12,
    })
}

/// Sampling check of |F(x,y)| < |y|·ψ·φ(log(2+|y|)); |y| is log-stratified
/// over the plan's y_range (interpreted as a positive magnitude range).
pub fn check_growth_bound(
    f: &dyn ScalarField,
    m: &Modulus,
    psi_const: f64,
    plan: &SamplingPlan,
) -> Result<ConditionReport> {
    if !(psi_const > 0.0) {
        return Err(OsgoodError::Domain("psi_const must be positive".into()));
    }
    let (ylo, yhi) = plan.y_range;
    if !(ylo > 0.0 && ylo < yhi) {
        return Err(OsgoodError::Config("growth check needs 0 < y_lo < y_hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (xlo, xhi) = plan.x_range;
    let (ln_ylo, ln_yhi) = (ylo.ln(), yhi.ln());
    let mut worst = 0.0f64;
    let mut witness = (f64::NAN, f64::NAN, f64::NAN);
    for _ in 0..plan.samples {
        let x = xlo + rng.gen::<f64>() * (xhi - xlo);
        let y = (ln_ylo + rng.gen::<f64>() * (ln_yhi - ln_ylo)).exp();
        let bound = y.abs() * psi_const * m.eval((2.0 + y.abs()).ln())?;
        let ratio = f.eval(x, y).abs() / bound;
        if ratio > worst {
            worst = ratio;
            witness = (x, y, y);
        }
    }
    Ok(ConditionReport {
        samples_checked: plan.samples,
        worst_ratio: worst,
        worst_witness: witness,
        passed: worst < 1.0,
    })
}
