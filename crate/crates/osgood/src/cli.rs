//! Command-line surface. Every subcommand writes file artifacts under
//! `--out` and prints a one-paragraph summary; the exit code is the
//! contract: 0 all checks passed, 1 a verification failed, 2 usage or
//! config error, 3 numeric failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::asymptote::{estimate_blowup, hitting_time_zero, BlowupReport};
use crate::bounds::{verify_proposition, BoundKind};
use crate::error::{OsgoodError, Result};
use crate::events::{detect_level_crossings, LevelGrid};
use crate::fields::{
    check_growth_bound, check_osgood_difference, LinearDecayField, PiecewiseLogLinearField,
    RiccatiField, SamplingPlan, ScalarField, SqrtField,
};
use crate::integrator::{integrate, IntegratorConfig, Termination, Trajectory};
use crate::modulus::{classify_series, Modulus};
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(name = "osgood", version, about = "Osgood-condition numerical laboratory")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Modulus spec: family=<name>[,p=<v>,l=<v>] or table=<path>
    #[arg(long, global = true)]
    modulus: Option<String>,

    /// Field: blowup | nonuniq | sqrt | riccati | linear:<L>
    #[arg(long, global = true)]
    field: Option<String>,

    #[arg(long, global = true)]
    y0: Option<f64>,

    /// Integration span as <a>:<b>
    #[arg(long, global = true)]
    span: Option<String>,

    #[arg(long, global = true)]
    rel_tol: Option<f64>,

    #[arg(long, global = true)]
    abs_tol: Option<f64>,

    #[arg(long, global = true)]
    ymax: Option<f64>,

    /// Deepest level index for crossings / collapse runs
    #[arg(long, global = true)]
    nmax: Option<i64>,

    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Optional key=value config file; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify Σ 1/φ(n) for the given modulus
    Classify,
    /// Dump a piecewise field's breakpoints as CSV
    DumpField,
    /// Integrate a field over a span, writing trajectory CSV + JSON
    Integrate,
    /// Locate level crossings of a previously written trajectory JSON
    Crossings {
        /// Trajectory JSON produced by `integrate`
        #[arg(long)]
        traj: Option<PathBuf>,
        /// Level grid: decay (e^-n) or growth (e^n)
        #[arg(long, default_value = "decay")]
        grid: String,
    },
    /// Bracket the blow-up time of the extremal growth field
    Blowup,
    /// Bracket the zero-hitting time of the non-uniqueness field
    Nonuniq,
    /// Verify an envelope proposition or a sampled condition
    Verify {
        /// lipschitz:<L> | sep-sqrt | sep-log | growth-sqrt | growth-log |
        /// osgood-diff | growth-cond
        #[arg(long)]
        prop: String,
    },
    /// Run blow-up estimates over a grid of pow-p moduli
    Sweep {
        #[arg(long, default_value_t = 1.2)]
        p_min: f64,
        #[arg(long, default_value_t = 3.0)]
        p_max: f64,
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
}

/// Flag values after merging in the optional config file (flags win).
struct Settings {
    modulus: Option<String>,
    field: Option<String>,
    y0: f64,
    span: Option<(f64, f64)>,
    cfg: IntegratorConfig,
    nmax: i64,
    out: PathBuf,
    jobs: usize,
    seed: u64,
}

fn parse_span(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| OsgoodError::Parse(format!("span must be <a>:<b>, got '{s}'")))?;
    let a: f64 = a.trim().parse().map_err(|_| OsgoodError::Parse(format!("bad span start '{a}'")))?;
    let b: f64 = b.trim().parse().map_err(|_| OsgoodError::Parse(format!("bad span end '{b}'")))?;
    Ok((a, b))
}

fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| OsgoodError::Parse(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| OsgoodError::Parse(format!("config key {key}: bad value '{v}'"))),
    }
}

impl Cli {
    fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => load_config(p)?,
            None => HashMap::new(),
        };
        let mut cfg = IntegratorConfig::default();
        cfg.rel_tol = self.rel_tol.or(parsed(&file, "rel_tol")?).unwrap_or(cfg.rel_tol);
        cfg.abs_tol = self.abs_tol.or(parsed(&file, "abs_tol")?).unwrap_or(cfg.abs_tol);
        cfg.y_max = self.ymax.or(parsed(&file, "ymax")?).unwrap_or(cfg.y_max);
        cfg.validate()?;
        let span = match self.span.clone().or_else(|| file.get("span").cloned()) {
            Some(s) => Some(parse_span(&s)?),
            None => None,
        };
        Ok(Settings {
            modulus: self.modulus.clone().or_else(|| file.get("modulus").cloned()),
            field: self.field.clone().or_else(|| file.get("field").cloned()),
            y0: self.y0.or(parsed(&file, "y0")?).unwrap_or(0.0),
            span,
            cfg,
            nmax: self.nmax.or(parsed(&file, "nmax")?).unwrap_or(50),
            out: self.out.clone().or_else(|| file.get("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(".")),
            jobs: self.jobs.or(parsed(&file, "jobs")?).unwrap_or(1).max(1),
            seed: self.seed.or(parsed(&file, "seed")?).unwrap_or(0),
        })
    }
}

impl Settings {
    fn modulus(&self) -> Result<Modulus> {
        let spec = self
            .modulus
            .as_deref()
            .ok_or_else(|| OsgoodError::Config("--modulus is required here".into()))?;
        Modulus::from_spec(spec)
    }

    fn field(&self) -> Result<Box<dyn ScalarField>> {
        let spec = self
            .field
            .as_deref()
            .ok_or_else(|| OsgoodError::Config("--field is required here".into()))?;
        if let Some(l) = spec.strip_prefix("linear:") {
            let rate: f64 = l
                .parse()
                .map_err(|_| OsgoodError::Parse(format!("bad linear rate '{l}'")))?;
            if !(rate > 0.0) {
                return Err(OsgoodError::Domain("linear rate must be positive".into()));
            }
            return Ok(Box::new(LinearDecayField { rate }));
        }
        match spec {
            "sqrt" => Ok(Box::new(SqrtField)),
            "riccati" => Ok(Box::new(RiccatiField)),
            "blowup" => Ok(Box::new(PiecewiseLogLinearField::blowup(&self.modulus()?))),
            "nonuniq" => Ok(Box::new(PiecewiseLogLinearField::nonuniqueness(&self.modulus()?))),
            other => Err(OsgoodError::Config(format!("unknown field '{other}'"))),
        }
    }

    fn piecewise(&self) -> Result<(PiecewiseLogLinearField, Modulus)> {
        let m = self.modulus()?;
        let f = match self.field.as_deref() {
            Some("nonuniq") => PiecewiseLogLinearField::nonuniqueness(&m),
            _ => PiecewiseLogLinearField::blowup(&m),
        };
        Ok((f, m))
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

fn exit_code_for(err: &OsgoodError) -> i32 {
    match err {
        OsgoodError::Numeric(_) | OsgoodError::Budget(_) | OsgoodError::OutOfRange(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn blowup_exit(rep: &BlowupReport) -> i32 {
    if rep.budget_exceeded {
        EXIT_NUMERIC
    } else if rep.all_gaps_within_upper() && rep.all_gaps_above_lower() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn prop_kind(spec: &str) -> Result<BoundKind> {
    if let Some(l) = spec.strip_prefix("lipschitz:") {
        let rate: f64 = l
            .parse()
            .map_err(|_| OsgoodError::Parse(format!("bad Lipschitz constant '{l}'")))?;
        return Ok(BoundKind::LipschitzEnvelope(rate));
    }
    match spec {
        "sep-sqrt" => Ok(BoundKind::SeparationSqrt),
        "sep-log" => Ok(BoundKind::SeparationLog),
        "growth-sqrt" => Ok(BoundKind::GrowthSqrt),
        "growth-log" => Ok(BoundKind::GrowthLog),
        other => Err(OsgoodError::Config(format!("unknown proposition '{other}'"))),
    }
}

/// Entry point shared by the binary and the tests.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            // clap's own exit code convention: 0 for --help/--version, 2 otherwise
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli, &argv) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<i32> {
    let s = cli.settings()?;
    match &cli.command {
        Command::Classify => {
            let m = s.modulus()?;
            let est = classify_series(&m, 1 << 20)?;
            let path = s.out_path("classify.json")?;
            report::write_with_meta(&path, &report::to_json("classify", &est)?, argv)?;
            println!(
                "classify {}: verdict {:?} after {} terms (partial {:.6e}, tail in [{:.3e}, {:.3e}]); report at {}.",
                m.family_name(), est.verdict, est.n, est.partial, est.tail_lower, est.tail_upper,
                path.display()
            );
            Ok(if est.evidence.contains("INCONSISTENT") { EXIT_FAILED } else { EXIT_OK })
        }
        Command::DumpField => {
            let (f, m) = s.piecewise()?;
            let csv = report::field_csv(&f, -s.nmax, s.nmax);
            let path = s.out_path("field.csv")?;
            report::write_with_meta(&path, &csv, argv)?;
            println!(
                "dump-field: {} breakpoints of the {:?} field for {} written to {}.",
                csv.lines().count() - 1, f.variant, m.family_name(), path.display()
            );
            Ok(EXIT_OK)
        }
        Command::Integrate => {
            let f = s.field()?;
            let span = s.span.ok_or_else(|| OsgoodError::Config("--span is required here".into()))?;
            let traj = integrate(f.as_ref(), s.y0, span, &s.cfg)?;
            let csv_path = s.out_path("trajectory.csv")?;
            report::write_with_meta(&csv_path, &report::trajectory_csv(&traj), argv)?;
            let json_path = s.out_path("trajectory.json")?;
            report::write_with_meta(&json_path, &report::to_json("trajectory", &traj)?, argv)?;
            println!(
                "integrate {}: {} steps ({} rejected), ended at x = {} with y = {:.6e} ({:?}); artifacts at {} and {}.",
                traj.label, traj.steps, traj.rejected, traj.end_x(), traj.end_y(),
                traj.termination, csv_path.display(), json_path.display()
            );
            Ok(match traj.termination {
                Termination::StepFailure => EXIT_NUMERIC,
                _ => EXIT_OK,
            })
        }
        Command::Crossings { traj, grid } => {
            let path = traj
                .as_ref()
                .ok_or_else(|| OsgoodError::Config("crossings needs --traj <trajectory.json>".into()))?;
            let text = std::fs::read_to_string(path)?;
            let wrapper: serde_json::Value = serde_json::from_str(&text)?;
            let trajectory: Trajectory = serde_json::from_value(wrapper["report"].clone())?;
            let grid = match grid.as_str() {
                "decay" => LevelGrid::Decay,
                "growth" => LevelGrid::Growth,
                other => return Err(OsgoodError::Config(format!("unknown grid '{other}'"))),
            };
            let records = detect_level_crossings(&trajectory, 0..=s.nmax, grid);
            let out = s.out_path("crossings.csv")?;
            report::write_with_meta(&out, &report::crossings_csv(&records), argv)?;
            println!(
                "crossings: {} of {} levels reached on the {:?} grid; table at {}.",
                records.len(), s.nmax + 1, grid, out.display()
            );
            Ok(EXIT_OK)
        }
        Command::Blowup => {
            let m = s.modulus()?;
            let f = PiecewiseLogLinearField::blowup(&m);
            let rep = estimate_blowup(&f, &m, s.y0, &s.cfg)?;
            let path = s.out_path("blowup.json")?;
            report::write_with_meta(&path, &report::to_json("blowup", &rep)?, argv)?;
            summarize_bracket("blowup", &m, &rep, &path);
            Ok(blowup_exit(&rep))
        }
        Command::Nonuniq => {
            let m = s.modulus()?;
            let f = PiecewiseLogLinearField::nonuniqueness(&m);
            let y0 = if s.y0 > 0.0 { s.y0 } else { 1.0 };
            let rep = hitting_time_zero(&f, &m, y0, &s.cfg, s.nmax)?;
            let path = s.out_path("nonuniq.json")?;
            report::write_with_meta(&path, &report::to_json("nonuniq", &rep)?, argv)?;
            summarize_bracket("nonuniq", &m, &rep, &path);
            Ok(blowup_exit(&rep))
        }
        Command::Verify { prop } => {
            let (kind_name, passed, json) = match prop.as_str() {
                "osgood-diff" => {
                    let m = s.modulus()?;
                    let f = PiecewiseLogLinearField::nonuniqueness(&m);
                    let plan = SamplingPlan { seed: s.seed, ..Default::default() };
                    let rep = check_osgood_difference(&f, &m, 1.0, &plan)?;
                    ("osgood-diff", rep.passed, report::to_json("condition", &rep)?)
                }
                "growth-cond" => {
                    let m = s.modulus()?;
                    let f = PiecewiseLogLinearField::blowup(&m);
                    let plan = SamplingPlan {
                        seed: s.seed,
                        y_range: (0.0, s.cfg.y_max.min(1e6)),
                        ..Default::default()
                    };
                    let rep = check_growth_bound(&f, &m, 4.0 * crate::fields::E, &plan)?;
                    ("growth-cond", rep.passed, report::to_json("condition", &rep)?)
                }
                other => {
                    let kind = prop_kind(other)?;
                    let rep = verify_proposition(kind, &s.cfg)?;
                    ("proposition", rep.passed, report::to_json("bound", &rep)?)
                }
            };
            let path = s.out_path("verify.json")?;
            report::write_with_meta(&path, &json, argv)?;
            println!(
                "verify {prop} ({kind_name}): {}; report at {}.",
                if passed { "passed" } else { "FAILED" },
                path.display()
            );
            Ok(if passed { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Sweep { p_min, p_max, points } => {
            sweep(&s, *p_min, *p_max, *points, argv)
        }
    }
}

fn summarize_bracket(what: &str, m: &Modulus, rep: &BlowupReport, path: &Path) {
    if rep.finite {
        println!(
            "{what} for {}: reached |log y| = {:.3} at x = {:.9}; critical time in [{:.9}, {:.9}]; {} gap bounds {}; report at {}.",
            m.family_name(), rep.crossings.last().map(|c| c.0).unwrap_or(0), rep.x_reach,
            rep.x_infinity_bracket.0, rep.x_infinity_bracket.1, rep.gaps.len(),
            if rep.all_gaps_within_upper() && rep.all_gaps_above_lower() { "hold" } else { "VIOLATED" },
            path.display()
        );
    } else {
        println!(
            "{what} for {}: series diverges, no finite critical time; reached x = {:.6} over {} levels; report at {}.",
            m.family_name(), rep.x_reach, rep.gaps.len(), path.display()
        );
    }
}

fn sweep(s: &Settings, p_min: f64, p_max: f64, points: usize, argv: &[String]) -> Result<i32> {
    if !(p_min > 1.0) || !(p_max >= p_min) || points < 1 {
        return Err(OsgoodError::Config(format!(
            "sweep needs 1 < p_min <= p_max and points >= 1, got [{p_min}, {p_max}] x {points}"
        )));
    }
    std::fs::create_dir_all(&s.out)?;
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            if points == 1 {
                p_min
            } else {
                p_min + (p_max - p_min) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let rows: Mutex<Vec<(usize, report::SweepRow)>> = Mutex::new(Vec::new());
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let next: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..s.jobs.min(points) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= grid.len() {
                    break;
                }
                let p = grid[idx];
                let result = (|| -> Result<report::SweepRow> {
                    let m = Modulus::pow_p(p)?;
                    let f = PiecewiseLogLinearField::blowup(&m);
                    let rep = estimate_blowup(&f, &m, s.y0, &s.cfg)?;
                    let path = s.out.join(format!("sweep_{idx:03}.json"));
                    report::write_with_meta(&path, &report::to_json("blowup", &rep)?, argv)?;
                    let mut row = report::SweepRow::from(&rep);
                    row.param = p;
                    Ok(row)
                })();
                match result {
                    Ok(row) => rows.lock().unwrap().push((idx, row)),
                    Err(e) => failures.lock().unwrap().push(format!("p = {p}: {e}")),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if let Some(first) = failures.first() {
        return Err(OsgoodError::Numeric(format!(
            "{} sweep points failed; first: {first}",
            failures.len()
        )));
    }
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by_key(|(idx, _)| *idx);
    let rows: Vec<report::SweepRow> = rows.into_iter().map(|(_, r)| r).collect();
    let agg = s.out.join("sweep.csv");
    report::write_with_meta(&agg, &report::sweep_csv(&rows), argv)?;
    println!(
        "sweep: {} pow-p points over [{p_min}, {p_max}] with {} jobs; aggregate at {}.",
        rows.len(), s.jobs, agg.display()
    );
    Ok(EXIT_OK)
}
