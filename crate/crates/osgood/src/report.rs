//! Serialization of run artifacts: CSV tables and a versioned JSON wrapper.
//!
//! Report files never contain timestamps or host information, so the same
//! inputs always produce byte-identical files; the run metadata sidecar
//! carries everything volatile.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::asymptote::BlowupReport;
use crate::error::Result;
use crate::events::CrossingRecord;
use crate::fields::PiecewiseLogLinearField;
use crate::integrator::{Space, Trajectory};

pub const SCHEMA: &str = "osgood-report/1";

/// `x,y,slope` rows (header says `u` in log space).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    match traj.space {
        Space::Linear => out.push_str("x,y,slope\n"),
        Space::Log => out.push_str("x,u,slope\n"),
    }
    for node in &traj.nodes {
        out.push_str(&format!("{},{},{}\n", node.x, node.y, node.slope));
    }
    out
}

/// `n,level,x_first,x_last` rows.
pub fn crossings_csv(records: &[CrossingRecord]) -> String {
    let mut out = String::from("n,level,x_first,x_last\n");
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.n, rec.level, rec.x_first, rec.x_last_before_next
        ));
    }
    out
}

/// `y,F` rows sampled at the breakpoints of a piecewise field.
pub fn field_csv(f: &PiecewiseLogLinearField, n_lo: i64, n_hi: i64) -> String {
    let mut out = String::from("y,F\n");
    for (y, v) in f.breakpoints(n_lo, n_hi) {
        out.push_str(&format!("{y},{v}\n"));
    }
    out
}

/// One row per sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub series_sum: f64,
    pub x_infinity_lower: f64,
    pub x_infinity_upper: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,series_sum,x_infinity_lower,x_infinity_upper\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.param, r.series_sum, r.x_infinity_lower, r.x_infinity_upper
        ));
    }
    out
}

impl From<&BlowupReport> for SweepRow {
    fn from(rep: &BlowupReport) -> Self {
        SweepRow {
            param: f64::NAN,
            series_sum: rep.series.partial + 0.5 * (rep.series.tail_lower + rep.series.tail_upper),
            x_infinity_lower: rep.x_infinity_bracket.0,
            x_infinity_upper: rep.x_infinity_bracket.1,
        }
    }
}

#[derive(Serialize)]
struct Wrapper<'a, T: Serialize> {
    schema: &'static str,
    kind: &'a str,
    report: &'a T,
}

/// Versioned JSON envelope around any serializable report.
pub fn to_json<T: Serialize>(kind: &str, report: &T) -> Result<String> {
    let w = Wrapper { schema: SCHEMA, kind, report };
    Ok(serde_json::to_string_pretty(&w)?)
}

/// Write a report file plus `<stem>.run_meta.json` holding the volatile
/// part (wall-clock time, argv) next to it.
pub fn write_with_meta(path: &Path, contents: &str, argv: &[String]) -> Result<()> {
    std::fs::write(path, contents)?;
    let meta_path = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.run_meta.json"),
        None => "run_meta.json".to_string(),
    });
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "schema": SCHEMA,
        "unix_time": secs,
        "argv": argv,
    });
    let mut f = std::fs::File::create(meta_path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::LinearDecayField;
    use crate::integrator::{integrate, IntegratorConfig};
    use crate::modulus::Modulus;

    #[test]
    fn trajectory_csv_header_tracks_space() {
        let f = LinearDecayField { rate: 1.0 };
        let traj = integrate(&f, 1.0, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        let csv = trajectory_csv(&traj);
        assert!(csv.starts_with("x,y,slope\n"));
        assert_eq!(csv.lines().count(), traj.nodes.len() + 1);
    }

    #[test]
    fn csv_is_deterministic() {
        let f = LinearDecayField { rate: 2.0 };
        let cfg = IntegratorConfig::default();
        let a = trajectory_csv(&integrate(&f, 1.0, (0.0, 2.0), &cfg).unwrap());
        let b = trajectory_csv(&integrate(&f, 1.0, (0.0, 2.0), &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn field_csv_contains_breakpoints() {
        let m = Modulus::poly2();
        let f = PiecewiseLogLinearField::blowup(&m);
        let csv = field_csv(&f, 0, 3);
        assert!(csv.starts_with("y,F\n"));
        // origin row plus breakpoints e^0 .. e^3
        assert_eq!(csv.lines().count(), 6);
        let row2: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(row2[0].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row2[1].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn json_wrapper_shape() {
        let rows = vec![SweepRow { param: 1.5, series_sum: 2.0, x_infinity_lower: 1.0, x_infinity_upper: 3.0 }];
        let s = to_json("sweep", &rows).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["kind"], "sweep");
        assert_eq!(v["report"][0]["param"], 1.5);
    }

    #[test]
    fn meta_sidecar_is_written_separately() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_with_meta(&path, "a,b\n1,2\n", &["osgood".into(), "integrate".into()]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body, "a,b\n1,2\n");
        let meta = std::fs::read_to_string(dir.path().join("out.csv.run_meta.json")).unwrap();
        assert!(meta.contains("unix_time"));
        assert!(!body.contains("unix_time"));
    }
}
