//! Finite-time blow-up and finite-time collapse: numeric integration to a
//! finite threshold, completed analytically with the telescoped gap bounds
//! Σ 2/φ(n) (growth) and Σ (e-1)/φ(n) (decay).

use serde::{Deserialize, Serialize};

use crate::error::{OsgoodError, Result};
use crate::events::{detect_level_crossings, LevelGrid};
use crate::fields::{PiecewiseLogLinearField, PiecewiseVariant, E};
use crate::integrator::{integrate, integrate_logspace, IntegratorConfig, LogFlow, Termination};
use crate::modulus::{classify_series, tail_bounds, Kahan, Modulus, SeriesEstimate, SeriesVerdict};

/// One observed crossing gap x_{n+1} - x_n with its telescoped bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapRecord {
    pub n: i64,
    pub gap: f64,
    /// 2/φ(n) for blow-up runs; (e-1)/min(φ(n), e·φ(n-1)) for decay runs,
    /// which equals (e-1)/φ(n) wherever the segment is monotone.
    pub upper_bound: f64,
    /// 1/(2 φ(n+1)); only meaningful on decay runs.
    pub lower_bound: f64,
    pub within_upper: bool,
    pub above_lower: bool,
}

/// Event tolerance allowed on the gap inequalities.
pub const GAP_TOL: f64 = 1e-9;

/// Bracket report for finite-time escape (to ∞) or collapse (to 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupReport {
    /// Time at which the threshold (y_max, or e^{-n_max}) was reached.
    pub x_reach: f64,
    /// Analytic bound on the remaining time past the threshold.
    pub tail_bound: f64,
    /// (x_reach, x_reach + tail_bound); upper is +∞ for divergent moduli.
    pub x_infinity_bracket: (f64, f64),
    pub gaps: Vec<GapRecord>,
    /// Observed crossing times (n, x_n).
    pub crossings: Vec<(i64, f64)>,
    pub series: SeriesEstimate,
    pub budget_exceeded: bool,
    /// Whether the bracket certifies a finite escape/collapse time.
    pub finite: bool,
}

impl BlowupReport {
    pub fn all_gaps_within_upper(&self) -> bool {
        self.gaps.iter().all(|g| g.within_upper)
    }

    pub fn all_gaps_above_lower(&self) -> bool {
        self.gaps.iter().all(|g| g.above_lower)
    }
}

/// Upper bound on Σ_{n >= from} 1/φ(n): direct partial sum plus the
/// integral-test upper tail.
fn series_tail_sum(m: &Modulus, from: i64) -> Result<f64> {
    let from = from.max(1) as u64;
    let mut sum = Kahan::default();
    let mut n = from;
    let block_end = from + 20_000;
    while n < block_end {
        let term = 1.0 / m.eval(n as f64)?;
        sum.add(term);
        if term < 1e-18 * sum.value().max(1e-300) {
            break;
        }
        n += 1;
    }
    let (_, upper) = tail_bounds(m, n)?;
    Ok(sum.value() + upper)
}

/// Integrate the blow-up field y' = F(y) from y0, bracket the escape time.
///
/// Runs direct space up to y = e, then log space up to u = log(y_max),
/// and completes the bracket with tail_bound = Σ_{n >= N_max} 2/φ(n) where
/// N_max = floor(log y_max). Every observed gap is checked against 2/φ(n).
pub fn estimate_blowup(
    f: &PiecewiseLogLinearField,
    m: &Modulus,
    y0: f64,
    cfg: &IntegratorConfig,
) -> Result<BlowupReport> {
    if f.variant != PiecewiseVariant::BlowUp {
        return Err(OsgoodError::Config("estimate_blowup needs a blow-up field".into()));
    }
    cfg.validate()?;
    let series = classify_series(m, 1 << 20)?;
    let n_max = cfg.y_max.ln().floor() as i64;
    let mut crossings: Vec<(i64, f64)> = Vec::new();

    // Phase A: direct space from y0 to y = e (skipped if already past it).
    let (mut x_cursor, u_start) = if y0 < E {
        let phi0 = m.eval(0.0)?;
        let span_end = y0.abs() + (E + 2.0) / phi0.min(1.0) + 10.0;
        let cfg_a = IntegratorConfig { y_max: E, logspace: false, ..cfg.clone() };
        let traj = integrate(f, y0, (0.0, span_end), &cfg_a)?;
        if traj.termination != Termination::BlowUp {
            return Err(OsgoodError::Budget(format!(
                "direct phase never reached y = e (termination {:?})",
                traj.termination
            )));
        }
        for rec in detect_level_crossings(&traj, 0..=1, LevelGrid::Growth) {
            crossings.push((rec.n, rec.x_first));
        }
        (traj.end_x(), 1.0)
    } else {
        (0.0, y0.ln())
    };

    // Phase B: log space from u_start to log(y_max).
    let stop_u = cfg.y_max.ln();
    let span = (x_cursor, x_cursor + 1e6);
    let traj = integrate_logspace(f, u_start, span, cfg, LogFlow::Growth { stop_u })?;
    let budget_exceeded = traj.termination != Termination::BlowUp;
    x_cursor = traj.end_x();
    let lo_n = u_start.ceil() as i64;
    for rec in detect_level_crossings(&traj, lo_n..=n_max, LevelGrid::Growth) {
        if !crossings.iter().any(|&(n, _)| n == rec.n) {
            crossings.push((rec.n, rec.x_first));
        }
    }
    crossings.sort_by(|a, b| a.0.cmp(&b.0));

    let mut gaps = Vec::new();
    for pair in crossings.windows(2) {
        let (n, xn) = pair[0];
        let (n1, xn1) = pair[1];
        if n1 != n + 1 {
            continue;
        }
        let gap = xn1 - xn;
        let upper = 2.0 / m.eval(n as f64)?;
        gaps.push(GapRecord {
            n,
            gap,
            upper_bound: upper,
            lower_bound: 0.0,
            within_upper: gap <= upper + GAP_TOL,
            above_lower: true,
        });
    }

    let convergent = series.verdict == SeriesVerdict::Converges;
    let tail_bound = if convergent { 2.0 * series_tail_sum(m, n_max)? } else { f64::INFINITY };
    let finite = !budget_exceeded && tail_bound.is_finite();
    Ok(BlowupReport {
        x_reach: x_cursor,
        tail_bound,
        x_infinity_bracket: (x_cursor, x_cursor + tail_bound),
        gaps,
        crossings,
        series,
        budget_exceeded,
        finite,
    })
}

/// Integrate the decay y' = -F(y) from y0 in (0, 1], bracket the time the
/// solution hits zero (convergent Σ 1/φ(n)) or certify that the crossing
/// times keep growing (divergent).
///
/// Numeric to u = -n_max, analytic beyond: tail = Σ_{n >= n_max} (e-1)/φ(n).
pub fn hitting_time_zero(
    f: &PiecewiseLogLinearField,
    m: &Modulus,
    y0: f64,
    cfg: &IntegratorConfig,
    n_max: i64,
) -> Result<BlowupReport> {
    if f.variant != PiecewiseVariant::NonUniqueness {
        return Err(OsgoodError::Config("hitting_time_zero needs a non-uniqueness field".into()));
    }
    if !(y0 > 0.0 && y0 <= 1.0) {
        return Err(OsgoodError::Domain(format!("y0 must lie in (0, 1], got {y0}")));
    }
    if n_max < 2 {
        return Err(OsgoodError::Config("n_max must be at least 2".into()));
    }
    cfg.validate()?;
    let series = classify_series(m, 1 << 20)?;
    let u0 = y0.ln();

    let traj = integrate_logspace(f, u0, (0.0, 1e6), cfg, LogFlow::Decay { stop_u: -(n_max as f64) })?;
    let budget_exceeded = traj.termination != Termination::HitZero;
    let x_reach = traj.end_x();

    let lo_n = (-u0).ceil() as i64;
    let mut crossings: Vec<(i64, f64)> = detect_level_crossings(&traj, lo_n.max(0)..=n_max, LevelGrid::Decay)
        .into_iter()
        .map(|rec| (rec.n, rec.x_first))
        .collect();
    crossings.sort_by(|a, b| a.0.cmp(&b.0));

    let mut gaps = Vec::new();
    for pair in crossings.windows(2) {
        let (n, xn) = pair[0];
        let (n1, xn1) = pair[1];
        if n1 != n + 1 {
            continue;
        }
        let gap = xn1 - xn;
        // (e-1)/φ(n) once the segment is monotone (φ(n) <= e·φ(n-1)); the
        // sharp affine-segment form covers small n where it is not
        let upper = (E - 1.0) / m.eval(n as f64)?.min(E * m.eval((n - 1).max(0) as f64)?);
        let lower = 1.0 / (2.0 * m.eval((n + 1) as f64)?);
        gaps.push(GapRecord {
            n,
            gap,
            upper_bound: upper,
            lower_bound: lower,
            within_upper: gap <= upper + GAP_TOL,
            above_lower: gap >= lower - GAP_TOL,
        });
    }

    let convergent = series.verdict == SeriesVerdict::Converges;
    let tail_bound = if convergent {
        (E - 1.0) * series_tail_sum(m, n_max)?
    } else {
        f64::INFINITY
    };
    let finite = !budget_exceeded && tail_bound.is_finite();
    Ok(BlowupReport {
        x_reach,
        tail_bound,
        x_infinity_bracket: (x_reach, x_reach + tail_bound),
        gaps,
        crossings,
        series,
        budget_exceeded,
        finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn blowup_poly2_bracket_and_gaps() {
        let m = Modulus::poly2();
        let f = PiecewiseLogLinearField::blowup(&m);
        let report = estimate_blowup(&f, &m, 0.0, &cfg()).unwrap();
        assert!(report.finite);
        assert!(!report.budget_exceeded);
        // derived series bound: unit time to reach y = 1 plus Σ 2/(1+n)^2
        let bound = 1.0 + std::f64::consts::PI.powi(2) / 3.0;
        assert!(
            report.x_infinity_bracket.1 <= bound + 1e-6,
            "upper {} exceeds {bound}",
            report.x_infinity_bracket.1
        );
        assert!(report.all_gaps_within_upper());
        // F = 1 on [0, 1] for this modulus, so x_0 = 1 exactly
        let x0 = report.crossings.iter().find(|&&(n, _)| n == 0).unwrap().1;
        assert_relative_eq!(x0, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn blowup_divergent_modulus_has_no_finite_bracket() {
        let m = Modulus::affine();
        let f = PiecewiseLogLinearField::blowup(&m);
        let report = estimate_blowup(&f, &m, 0.0, &cfg()).unwrap();
        assert!(!report.finite);
        assert!(report.x_infinity_bracket.1.is_infinite());
    }

    #[test]
    fn collapse_poly2_bracket_and_gaps() {
        let m = Modulus::poly2();
        let f = PiecewiseLogLinearField::nonuniqueness(&m);
        let report = hitting_time_zero(&f, &m, (-1.0f64).exp(), &cfg(), 300).unwrap();
        assert!(report.finite, "expected a finite collapse bracket");
        assert!(report.all_gaps_within_upper());
        assert!(report.x_infinity_bracket.1 > report.x_infinity_bracket.0);
        // segments are monotone from n = 2 on for this family, where the
        // bound takes its (e-1)/φ(n) form
        for g in report.gaps.iter().filter(|g| g.n >= 2) {
            assert!(g.gap <= (E - 1.0) / m.eval(g.n as f64).unwrap() + GAP_TOL, "n = {}", g.n);
        }
        // first gap oracle: exact ∫ dy/F over [e^{-2}, e^{-1}] with affine F
        let (ftop, fbot) = ((-1.0f64).exp(), 4.0 * (-2.0f64).exp());
        let b = (ftop - fbot) / ((-1.0f64).exp() - (-2.0f64).exp());
        let exact = (ftop / fbot).ln() / b;
        let g1 = report.gaps.iter().find(|g| g.n == 1).unwrap();
        assert_relative_eq!(g1.gap, exact, max_relative = 1e-7);
    }

    #[test]
    fn collapse_constant_modulus_is_pure_exponential() {
        // phi = L constant: deep decay is y' = -L y, so x_n = (n - 1)/L + x_1
        let l = 2.0;
        let m = Modulus::constant(l).unwrap();
        let f = PiecewiseLogLinearField::nonuniqueness(&m);
        let report = hitting_time_zero(&f, &m, 1.0, &cfg(), 60).unwrap();
        let x1 = report.crossings.iter().find(|&&(n, _)| n == 1).unwrap().1;
        for &(n, xn) in report.crossings.iter().filter(|&&(n, _)| n >= 1) {
            let expected = x1 + (n - 1) as f64 / l;
            assert!(
                (xn - expected).abs() < 1e-8 * expected.max(1.0),
                "n = {n}: {xn} vs {expected}"
            );
        }
    }

    #[test]
    fn collapse_divergent_certifies_persistence() {
        let m = Modulus::affine();
        let f = PiecewiseLogLinearField::nonuniqueness(&m);
        let report = hitting_time_zero(&f, &m, 1.0, &cfg(), 220).unwrap();
        assert!(!report.finite);
        assert!(report.all_gaps_above_lower());
        for &(n, xn) in &report.crossings {
            if (4..=200).contains(&n) {
                let floor = 0.5 * ((n + 1) as f64).ln();
                assert!(xn >= floor, "x_{n} = {xn} below floor {floor}");
            }
        }
    }

    #[test]
    fn wrong_variant_rejected() {
        let m = Modulus::poly2();
        let blow = PiecewiseLogLinearField::blowup(&m);
        let non = PiecewiseLogLinearField::nonuniqueness(&m);
        assert!(estimate_blowup(&non, &m, 0.0, &cfg()).is_err());
        assert!(hitting_time_zero(&blow, &m, 0.5, &cfg(), 10).is_err());
    }
}
