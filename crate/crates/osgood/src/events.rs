//! Level-crossing location on dense output: the crossing sequences x_n and
//! x_n^+ at the geometric levels e^(±n) (integers ±n in log space).

use serde::{Deserialize, Serialize};

use crate::integrator::{bisect_root, Space, Trajectory};

/// Which geometric grid of levels to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelGrid {
    /// Levels e^{-n}.
    Decay,
    /// Levels e^{n}.
    Growth,
}

/// First and last crossing of one level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub n: i64,
    /// The level in linear coordinates, e^{-n} or e^{n}.
    pub level: f64,
    /// Smallest crossing time x_n.
    pub x_first: f64,
    /// Largest crossing before the next level is first reached (x_n^+).
    pub x_last_before_next: f64,
    /// Set when more crossings exist than are resolvable at event tolerance.
    pub dense: bool,
}

/// Target value of level n in the trajectory's own coordinates.
fn target_value(traj: &Trajectory, grid: LevelGrid, n: i64) -> f64 {
    let signed = match grid {
        LevelGrid::Decay => -(n as f64),
        LevelGrid::Growth => n as f64,
    };
    match traj.space {
        Space::Log => signed,
        Space::Linear => signed.exp(),
    }
}

fn level_linear(grid: LevelGrid, n: i64) -> f64 {
    match grid {
        LevelGrid::Decay => (-(n as f64)).exp(),
        LevelGrid::Growth => (n as f64).exp(),
    }
}

/// All crossings of one target value, ascending in internal time.
fn crossings_of(traj: &Trajectory, target: f64) -> Vec<f64> {
    const SUBSAMPLES: usize = 8;
    let mut roots: Vec<f64> = Vec::new();
    let mut push = |x: f64| {
        let tol = 2e-12 * x.abs().max(1.0);
        if roots.last().map_or(true, |&last| x - last > tol) {
            roots.push(x);
        }
    };
    for seg in traj.segments() {
        let width = seg.x_end - seg.x0;
        if width <= 0.0 {
            // degenerate truncated step
            continue;
        }
        let g = |tau: f64| {
            let theta = (tau - seg.x0) / seg.h;
            let theta1 = 1.0 - theta;
            seg.rcont[0]
                + theta
                    * (seg.rcont[1]
                        + theta1
                            * (seg.rcont[2] + theta * (seg.rcont[3] + theta1 * seg.rcont[4])))
                - target
        };
        let mut prev_t = seg.x0;
        let mut prev_g = g(prev_t);
        if prev_g == 0.0 {
            push(prev_t);
        }
        for i in 1..=SUBSAMPLES {
            let t = seg.x0 + width * i as f64 / SUBSAMPLES as f64;
            let gt = g(t);
            if gt == 0.0 {
                push(t);
            } else if prev_g != 0.0 && prev_g.signum() != gt.signum() {
                push(bisect_root(&g, prev_t, t));
            }
            prev_t = t;
            prev_g = gt;
        }
    }
    roots
}

/// Locate x_n and x_n^+ for every level index in `n_range`.
///
/// Levels never reached produce no record. The crossing sequence is pure in
/// the trajectory, so repeated calls are bit-identical.
pub fn detect_level_crossings(
    traj: &Trajectory,
    n_range: std::ops::RangeInclusive<i64>,
    grid: LevelGrid,
) -> Vec<CrossingRecord> {
    let sign = traj.time_sign();
    let mut per_level: Vec<(i64, Vec<f64>)> = Vec::new();
    for n in n_range {
        let target = target_value(traj, grid, n);
        per_level.push((n, crossings_of(traj, target)));
    }
    let mut records = Vec::new();
    for idx in 0..per_level.len() {
        let (n, ref roots) = per_level[idx];
        if roots.is_empty() {
            continue;
        }
        let x_first = roots[0];
        // window closes at the next level's first crossing
        let window_end = per_level
            .get(idx + 1)
            .and_then(|(_, next)| next.first().copied())
            .unwrap_or(f64::INFINITY);
        let in_window: Vec<f64> = roots
            .iter()
            .copied()
            .filter(|&x| x <= window_end + 1e-12 * window_end.abs().max(1.0))
            .collect();
        let x_last = in_window.last().copied().unwrap_or(x_first);
        records.push(CrossingRecord {
            n,
            level: level_linear(grid, n),
            x_first: sign * x_first,
            x_last_before_next: sign * x_last,
            dense: in_window.len() > 100,
        });
    }
    records
}
