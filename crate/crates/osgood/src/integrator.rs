//! Adaptive one-step integration with dense output.
//!
//! The stepper is an embedded Dormand-Prince 5(4) pair with the standard
//! quartic continuous extension; fixed by contract, not pulled from a
//! library. The fields we integrate are nonstiff away from breakpoints, and
//! steps across the kinks of piecewise log-linear fields are capped at the
//! integer log-grid abscissae to restore full order there.

use serde::{Deserialize, Serialize};

use crate::error::{OsgoodError, Result};
use crate::fields::{PiecewiseLogLinearField, ScalarField};

/// Step-control and termination parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; `None` selects one from the local slope.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    /// Blow-up threshold on |y|.
    pub y_max: f64,
    /// Tag produced trajectories as log-space (levels live at integer u).
    pub logspace: bool,
    pub max_steps: usize,
    /// Terminate with HitZero when the solution crosses y = 0 from above.
    pub stop_at_zero: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            y_max: 1e15,
            logspace: false,
            max_steps: 1_000_000,
            stop_at_zero: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return Err(OsgoodError::Config("need 0 < h_min <= h_max".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(OsgoodError::Config("tolerances must be positive".into()));
        }
        if !(self.y_max > 1.0) {
            return Err(OsgoodError::Config("y_max must exceed 1".into()));
        }
        if let Some(h) = self.h_init {
            if !(h > 0.0) {
                return Err(OsgoodError::Config("h_init must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    SpanEnd,
    BlowUp,
    HitZero,
    StepFailure,
}

/// Coordinate space of a trajectory's dependent variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub slope: f64,
}

/// One accepted step's continuous extension, in internal (forward) time.
/// `x_end <= x0 + h` when the step was truncated by a stop rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DenseSegment {
    pub x0: f64,
    pub h: f64,
    pub x_end: f64,
    pub rcont: [f64; 5],
}

impl DenseSegment {
    /// Evaluate the interpolant at internal time tau in [x0, x_end].
    fn eval(&self, tau: f64) -> f64 {
        let theta = (tau - self.x0) / self.h;
        let theta1 = 1.0 - theta;
        self.rcont[0]
            + theta
                * (self.rcont[1]
                    + theta1 * (self.rcont[2] + theta * (self.rcont[3] + theta1 * self.rcont[4])))
    }
}

/// A numerically integrated solution with per-step dense output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Nodes in presentation coordinates, ordered in the span's direction.
    pub nodes: Vec<Node>,
    /// Dense segments in internal (forward) time.
    segments: Vec<DenseSegment>,
    /// +1 forward, -1 when the requested span ran backward.
    time_sign: f64,
    pub span: (f64, f64),
    pub termination: Termination,
    pub space: Space,
    pub label: String,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn start_x(&self) -> f64 {
        self.nodes.first().map(|n| n.x).unwrap_or(f64::NAN)
    }

    pub fn end_x(&self) -> f64 {
        self.nodes.last().map(|n| n.x).unwrap_or(f64::NAN)
    }

    pub fn end_y(&self) -> f64 {
        self.nodes.last().map(|n| n.y).unwrap_or(f64::NAN)
    }

    /// Dense-output evaluation at x; errors outside the covered span.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let tau = self.time_sign * x;
        let first = self.segments.first().ok_or(OsgoodError::OutOfRange(x))?;
        let last = self.segments.last().unwrap();
        let eps = 1e-12 * (1.0 + tau.abs());
        if tau < first.x0 - eps || tau > last.x_end + eps {
            return Err(OsgoodError::OutOfRange(x));
        }
        let tau = tau.clamp(first.x0, last.x_end);
        // binary search for the segment containing tau
        let idx = self
            .segments
            .partition_point(|s| s.x_end < tau)
            .min(self.segments.len() - 1);
        Ok(self.segments[idx].eval(tau))
    }

    /// Segment boundaries in internal time, for event scanning.
    pub(crate) fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    pub(crate) fn time_sign(&self) -> f64 {
        self.time_sign
    }
}

// Dormand-Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct StopRules {
    /// Terminate when y rises to this value.
    above: Option<(f64, Termination)>,
    /// Terminate when y falls to this value.
    below: Option<(f64, Termination)>,
    /// Thresholds compare |y| rather than y.
    on_abs: bool,
    /// Cap steps at integer values of y (log-space breakpoints).
    integer_cap: bool,
}

fn hit_value(y: f64, on_abs: bool) -> f64 {
    if on_abs {
        y.abs()
    } else {
        y
    }
}

/// Initial step heuristic: a cheap two-stage estimate from the local slope.
fn initial_step(rhs: &dyn Fn(f64, f64) -> f64, x0: f64, y0: f64, cfg: &IntegratorConfig, span: f64) -> f64 {
    let f0 = rhs(x0, y0);
    let sc = cfg.abs_tol + cfg.rel_tol * y0.abs();
    let d0 = y0.abs() / sc;
    let d1 = f0.abs() / sc;
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * (d0 / d1) };
    h0 = h0.min(span).min(cfg.h_max).max(cfg.h_min);
    // one Euler probe to bound the second derivative
    let f1 = rhs(x0 + h0, y0 + h0 * f0);
    let d2 = (f1 - f0).abs() / h0 / sc;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.h_max).max(cfg.h_min)
}

/// Core stepper in forward internal time. `rhs` is already orientation-fixed.
fn dopri5(
    rhs: &dyn Fn(f64, f64) -> f64,
    y0: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    stops: &StopRules,
    label: String,
    space: Space,
    time_sign: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(OsgoodError::Config(format!("empty span [{t0}, {t_end}]")));
    }
    let mut x = t0;
    let mut y = y0;
    let mut k1 = rhs(x, y);
    let mut h = cfg
        .h_init
        .unwrap_or_else(|| initial_step(rhs, t0, y0, cfg, t_end - t0))
        .min(t_end - t0);
    let mut nodes = vec![Node { x, y, slope: k1 }];
    let mut segments: Vec<DenseSegment> = Vec::new();
    let mut termination = Termination::SpanEnd;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut retarget_budget = 0u32;

    // Check stop rules already violated at the start.
    let start_hit = check_stops(y, y, stops);
    if let Some((_, term)) = start_hit {
        // Started at/beyond a threshold: degenerate single-node trajectory.
        return Ok(Trajectory {
            nodes,
            segments,
            time_sign,
            span: (t0, t_end),
            termination: term,
            space,
            label,
            steps: 0,
            rejected: 0,
        });
    }

    'outer: while x < t_end {
        if steps + rejected >= cfg.max_steps {
            termination = Termination::StepFailure;
            break;
        }
        h = h.min(t_end - x).min(cfg.h_max);
        if h < cfg.h_min {
            h = cfg.h_min.min(t_end - x);
        }

        let k2 = rhs(x + C2 * h, y + h * (A21 * k1));
        let k3 = rhs(x + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = rhs(x + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = rhs(x + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = rhs(x + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = rhs(x + h, y1);
        let err_raw = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let sc = cfg.abs_tol + cfg.rel_tol * y.abs().max(y1.abs());
        let err = (err_raw / sc).abs();

        if !y1.is_finite() || !err.is_finite() {
            // Overstepped into non-finite territory: shrink hard.
            if h <= cfg.h_min * (1.0 + 1e-9) {
                termination = Termination::StepFailure;
                break;
            }
            h *= 0.1;
            rejected += 1;
            continue;
        }

        if err > 1.0 && h > cfg.h_min * (1.0 + 1e-9) {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            continue;
        }
        if err > 1.0 {
            // error test failing at the floor step size
            termination = Termination::StepFailure;
            break;
        }

        // Cap at integer breakpoints of log-space piecewise fields: if the
        // step strictly crosses an integer, retarget it to land there.
        if stops.integer_cap && retarget_budget < 3 {
            let (lo, hi) = if y <= y1 { (y, y1) } else { (y1, y) };
            let first_int = if y <= y1 { y.floor() + 1.0 } else { y.ceil() - 1.0 };
            let tol = 1e-9 * (1.0 + y.abs());
            if first_int > lo + tol && first_int < hi - tol && (y1 - y).abs() > tol {
                let frac = (first_int - y) / (y1 - y);
                h = (h * frac).max(cfg.h_min);
                rejected += 1;
                retarget_budget += 1;
                continue;
            }
        }
        retarget_budget = 0;

        // Accept.
        let ydiff = y1 - y;
        let bspl = h * k1 - ydiff;
        let rcont = [
            y,
            ydiff,
            bspl,
            ydiff - h * k7 - bspl,
            h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
        ];
        let mut seg = DenseSegment { x0: x, h, x_end: x + h, rcont };
        let mut x_new = x + h;
        let mut y_new = y1;
        let mut slope_new = k7;

        if let Some((threshold, term)) = check_stops(y, y1, stops) {
            // Locate the first crossing of the threshold inside the step.
            let target = threshold;
            let g = |tau: f64| hit_value(seg.eval(tau), stops.on_abs) - target;
            let x_star = bisect_first_crossing(&g, x, x + h);
            seg.x_end = x_star;
            x_new = x_star;
            y_new = seg.eval(x_star);
            slope_new = rhs(x_new, y_new);
            segments.push(seg);
            nodes.push(Node { x: time_sign * x_new, y: y_new, slope: time_sign * slope_new });
            termination = term;
            steps += 1;
            break 'outer;
        }

        segments.push(seg);
        steps += 1;
        x = x_new;
        y = y_new;
        k1 = slope_new;
        nodes.push(Node { x: time_sign * x, y, slope: time_sign * k1 });

        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }

    Ok(Trajectory {
        nodes,
        segments,
        time_sign,
        span: (time_sign * t0, time_sign * t_end),
        termination,
        space,
        label,
        steps,
        rejected,
    })
}

fn check_stops(_y0: f64, y1: f64, stops: &StopRules) -> Option<(f64, Termination)> {
    if let Some((threshold, term)) = stops.above {
        if hit_value(y1, stops.on_abs) >= threshold {
            return Some((threshold, term));
        }
    }
    if let Some((threshold, term)) = stops.below {
        if hit_value(y1, stops.on_abs) <= threshold {
            return Some((threshold, term));
        }
    }
    None
}

/// First root of g in [a, b] assuming g(a) and g(b) straddle zero (or g(b)
/// touches it); bisection to x-tolerance 1e-12·max(1, |x|).
pub(crate) fn bisect_first_crossing(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let ga = g(a);
    if ga == 0.0 {
        return a;
    }
    // scan for the first sign change
    let n = 64;
    let mut lo = a;
    let mut glo = ga;
    let mut hi = b;
    let mut found = false;
    for i in 1..=n {
        let t = a + (b - a) * i as f64 / n as f64;
        let gt = g(t);
        if glo.signum() != gt.signum() || gt == 0.0 {
            hi = t;
            found = true;
            break;
        }
        lo = t;
        glo = gt;
    }
    if !found {
        return b;
    }
    let tol = |x: f64| 1e-12 * x.abs().max(1.0);
    while hi - lo > tol(hi) {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if glo.signum() != gm.signum() {
            hi = mid;
        } else {
            lo = mid;
            glo = gm;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) use bisect_first_crossing as bisect_root;

/// Integrate y' = F(x, y) over `span` with error-controlled DOPRI5 steps.
///
/// Terminates BlowUp when |y| reaches `cfg.y_max` (crossing located on the
/// dense output), HitZero when `cfg.stop_at_zero` is set and y falls to 0,
/// StepFailure when the error test cannot be satisfied at `h_min`.
/// Backward spans are handled by internal time reversal.
pub fn integrate(f: &dyn ScalarField, y0: f64, span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory> {
    let space = if cfg.logspace { Space::Log } else { Space::Linear };
    let stops = StopRules {
        above: Some((cfg.y_max, Termination::BlowUp)),
        below: if cfg.stop_at_zero { Some((0.0, Termination::HitZero)) } else { None },
        on_abs: !cfg.stop_at_zero,
        integer_cap: false,
    };
    if span.1 > span.0 {
        dopri5(&|x, y| f.eval(x, y), y0, span.0, span.1, cfg, &stops, f.label(), space, 1.0)
    } else if span.1 < span.0 {
        // tau = -x
        dopri5(
            &|tau, y| -f.eval(-tau, y),
            y0,
            -span.0,
            -span.1,
            cfg,
            &stops,
            f.label(),
            space,
            -1.0,
        )
    } else {
        Err(OsgoodError::Config("empty span".into()))
    }
}

/// Direction of a log-space run over a piecewise field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogFlow {
    /// u' = +F(e^u)/e^u, stop rising at `stop_u` (BlowUp).
    Growth { stop_u: f64 },
    /// u' = -F(e^u)/e^u, stop falling at `stop_u` (HitZero).
    Decay { stop_u: f64 },
}

/// Integrate u = log y across the piecewise field's geometric grid.
/// Steps are capped at the integer breakpoint abscissae.
pub fn integrate_logspace(
    f: &PiecewiseLogLinearField,
    u0: f64,
    span: (f64, f64),
    cfg: &IntegratorConfig,
    flow: LogFlow,
) -> Result<Trajectory> {
    if !u0.is_finite() {
        return Err(OsgoodError::Config("u0 must be finite".into()));
    }
    if !(span.1 > span.0) {
        return Err(OsgoodError::Config("logspace span must run forward".into()));
    }
    let (stops, rhs): (StopRules, Box<dyn Fn(f64, f64) -> f64>) = match flow {
        LogFlow::Growth { stop_u } => (
            StopRules {
                above: Some((stop_u, Termination::BlowUp)),
                below: None,
                on_abs: false,
                integer_cap: true,
            },
            Box::new(|_x: f64, u: f64| f.eval_logspace(u)),
        ),
        LogFlow::Decay { stop_u } => (
            StopRules {
                above: None,
                below: Some((stop_u, Termination::HitZero)),
                on_abs: false,
                integer_cap: true,
            },
            Box::new(|_x: f64, u: f64| -f.eval_logspace(u)),
        ),
    };
    let label = format!("log({})", f.label());
    dopri5(&*rhs, u0, span.0, span.1, cfg, &stops, label, Space::Log, 1.0)
}
