//! Sweeps over `(h, υ)` grids and their tables, plus the pass/fail table
//! used to re-check a saved design.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{build_theorem1_system, build_theorem2_system, DelayTerm, LmiOptions, Theorem};
use crate::model::{fixtures, load_model_file, TSModel};
use crate::sdp::{verify_assignment, SdpStatus};
use crate::sim::{empirical_gain, Scenario, DISTURBANCE_SCENARIOS};
use crate::synthesis::{blend_check, synthesize, SynthesisOptions, SynthesisReport};
use crate::verify::sampled_lyapunov_decrease;

/// Exit statuses shared by the command-line front end.
pub mod exit {
    pub const OK: i32 = 0;
    /// A check (gain, decay, negativity) did not hold, or an I/O problem.
    pub const FAILED: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

/// Exit status for a solver outcome.
pub fn status_code(status: SdpStatus) -> i32 {
    match status {
        SdpStatus::Optimal => exit::OK,
        SdpStatus::Infeasible => exit::INFEASIBLE,
        SdpStatus::NumericalFailure | SdpStatus::IterationLimit => exit::NUMERICAL,
    }
}

/// Bundled fixture name or path to a model document.
pub fn resolve_model(reference: &str, base: Option<&Path>) -> Result<TSModel> {
    match reference {
        "example1" => Ok(fixtures::example1()),
        "example2" => Ok(fixtures::example2()),
        path => {
            let p = PathBuf::from(path);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            load_model_file(p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremSelection {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "both")]
    Both,
}

impl TheoremSelection {
    pub fn theorems(self) -> Vec<Theorem> {
        match self {
            TheoremSelection::One => vec![Theorem::One],
            TheoremSelection::Two => vec![Theorem::Two],
            TheoremSelection::Both => vec![Theorem::One, Theorem::Two],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `example1`, `example2`, or a path (relative to the spec file).
    pub model: String,
    pub theorem: TheoremSelection,
    pub h: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub rho: f64,
    /// Table path, relative to the spec file; stdout when absent.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub delay_term: DelayTerm,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.h.is_empty() {
            bad.push("h grid is empty".to_string());
        }
        if self.upsilon.is_empty() {
            bad.push("upsilon grid is empty".to_string());
        }
        for h in &self.h {
            if !(*h > 0.0 && h.is_finite()) {
                bad.push(format!("h values must be > 0 (got {h})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub theorem: Theorem,
    pub h: f64,
    pub upsilon: f64,
    pub status: SdpStatus,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Ordered by theorem, then υ, then h.
    pub cells: Vec<SweepCell>,
}

/// Every `(theorem, υ, h)` of the grid, in table order.
pub fn sweep_jobs(spec: &SweepSpec) -> Vec<(Theorem, f64, f64)> {
    let mut jobs = Vec::new();
    for th in spec.theorem.theorems() {
        for &u in &spec.upsilon {
            for &h in &spec.h {
                jobs.push((th, h, u));
            }
        }
    }
    jobs
}

/// Solve every cell of the grid and keep the full reports. Cells are handed
/// to a small worker pool; results are placed by index, so the output order
/// never depends on timing.
pub fn sweep_reports(spec: &SweepSpec, model: &TSModel, options: &SynthesisOptions) -> Result<Vec<SynthesisReport>> {
    spec.validate()?;
    let jobs = sweep_jobs(spec);
    let mut opts = options.clone();
    opts.lmi.delay_term = spec.delay_term;
    let slots: Vec<Mutex<Option<Result<SynthesisReport>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(th, h, u)) = jobs.get(k) else { break };
                let rep = model.with_parameters(h, spec.rho, u).and_then(|m| synthesize(&m, th, &opts));
                *slots[k].lock().expect("slot lock") = Some(rep);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

/// [`sweep_reports`] reduced to the table cells.
pub fn run_sweep(spec: &SweepSpec, model: &TSModel, options: &SynthesisOptions) -> Result<SweepResult> {
    let reports = sweep_reports(spec, model, options)?;
    Ok(SweepResult::from_reports(spec, &reports))
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl SweepResult {
    pub fn from_reports(spec: &SweepSpec, reports: &[SynthesisReport]) -> Self {
        let cells = reports
            .iter()
            .map(|r| SweepCell {
                theorem: r.theorem,
                h: r.h,
                upsilon: r.upsilon,
                status: r.status,
                gamma: r.gamma,
            })
            .collect();
        Self {
            spec: spec.clone(),
            cells,
        }
    }

    /// Render a cell: 2 decimals (or full precision), `--` when infeasible,
    /// `err` on numerical trouble.
    pub fn render(cell: &SweepCell, full_precision: bool) -> String {
        match (cell.status, cell.gamma) {
            (SdpStatus::Optimal, Some(g)) if full_precision => fmt_num(g),
            (SdpStatus::Optimal, Some(g)) => format!("{g:.2}"),
            (SdpStatus::Infeasible, _) => "--".into(),
            _ => "err".into(),
        }
    }

    /// One row per method, one column per grid value.
    /// With a single `h` the columns run over `υ`; otherwise over `h`, with
    /// a row per `(method, υ)` when both grids vary.
    pub fn table_csv(&self, full_precision: bool) -> Result<String> {
        let spec = &self.spec;
        let by_upsilon = spec.h.len() == 1 && spec.upsilon.len() > 1;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        if by_upsilon {
            header.extend(spec.upsilon.iter().map(|u| format!("upsilon={}", fmt_num(*u))));
        } else {
            header.extend(spec.h.iter().map(|h| format!("h={}", fmt_num(*h))));
        }
        w.write_record(&header)?;
        let per_theorem = spec.upsilon.len() * spec.h.len();
        for (t_idx, th) in spec.theorem.theorems().into_iter().enumerate() {
            let block = &self.cells[t_idx * per_theorem..(t_idx + 1) * per_theorem];
            if by_upsilon {
                let mut row = vec![format!("Th. {}", th.number())];
                row.extend(block.iter().map(|c| Self::render(c, full_precision)));
                w.write_record(&row)?;
            } else {
                for (u_idx, u) in spec.upsilon.iter().enumerate() {
                    let label = if spec.upsilon.len() > 1 {
                        format!("Th. {} (upsilon={})", th.number(), fmt_num(*u))
                    } else {
                        format!("Th. {}", th.number())
                    };
                    let mut row = vec![label];
                    let cells = &block[u_idx * spec.h.len()..(u_idx + 1) * spec.h.len()];
                    row.extend(cells.iter().map(|c| Self::render(c, full_precision)));
                    w.write_record(&row)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// One row per cell at full precision.
    pub fn cells_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["theorem", "h", "upsilon", "rho", "status", "gamma"])?;
        for c in &self.cells {
            w.write_record([
                c.theorem.number().to_string(),
                fmt_num(c.h),
                fmt_num(c.upsilon),
                fmt_num(self.spec.rho),
                serde_json::to_value(c.status)?.as_str().unwrap_or_default().to_string(),
                c.gamma.map(fmt_num).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// One line of a re-check table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub check: String,
    pub value: f64,
    pub limit: String,
    pub passed: bool,
}

/// Re-derive everything a saved report claims, from the model and the
/// stored assignment alone: constraint eigenvalues, sampled negativity,
/// simulated gains and decay, and the Lyapunov spot check (informational).
pub fn recheck(model: &TSModel, report: &SynthesisReport, seed: u64) -> Result<Vec<CheckLine>> {
    let model = model.with_parameters(report.h, report.rho, report.upsilon)?;
    let gamma = report
        .gamma
        .ok_or_else(|| Error::Verification("report has no feasible design".into()))?;
    let filter = &report
        .filter
        .as_ref()
        .ok_or_else(|| Error::Verification("report has no filter".into()))?
        .rules;
    let opts = report.lmi_options();
    let (vars, x) = report.variables(&model)?;
    let mut out = Vec::new();

    let problem = match report.theorem {
        Theorem::One => build_theorem1_system(&model, &opts)?.1,
        Theorem::Two => {
            let b = report
                .bounds
                .as_ref()
                .ok_or_else(|| Error::Verification("Theorem 2 report lacks its bounds".into()))?;
            build_theorem2_system(&model, b, &opts)?.1
        }
    };
    let rec = verify_assignment(&problem, &x, 1e-8);
    let worst = rec
        .checks
        .iter()
        .map(|c| c.margin - c.required_margin)
        .fold(f64::INFINITY, f64::min);
    out.push(CheckLine {
        check: "lmi constraints (least margin above required)".into(),
        value: worst,
        limit: ">= -1e-8".into(),
        passed: rec.all_satisfied,
    });

    let domain = report.bounds.as_ref().map(|b| b.domain_used).unwrap_or(model.bounds.domain);
    let blend = blend_check(&model, &vars, &opts, &x, domain, crate::synthesis::BLEND_POINTS)?;
    out.push(CheckLine {
        check: format!("blended lmi max eigenvalue ({} points)", blend.points),
        value: blend.max_eigenvalue,
        limit: "< 0".into(),
        passed: blend.passed,
    });

    let free = Scenario::bundled("free", &model, seed)?;
    let tr = free.run(&model, filter)?;
    let ratio = tr.terminal_norm_ratio();
    out.push(CheckLine {
        check: format!("terminal-norm-ratio at t={}", free.horizon),
        value: ratio,
        limit: "<= 1e-3".into(),
        passed: ratio <= 1e-3,
    });
    for name in DISTURBANCE_SCENARIOS {
        let tr = Scenario::bundled(name, &model, seed)?.run(&model, filter)?;
        let g = empirical_gain(&tr)?;
        out.push(CheckLine {
            check: format!("empirical gain ({name})"),
            value: g,
            limit: format!("<= {gamma}"),
            passed: g <= gamma,
        });
    }
    let ly = sampled_lyapunov_decrease(&model, &vars, &x, &tr, 5)?;
    out.push(CheckLine {
        check: format!(
            "lyapunov decrease spot check ({}; informational)",
            if ly.consistent { "consistent" } else { "inconsistent" }
        ),
        value: ly.worst_vdot,
        limit: "< 0".into(),
        passed: true,
    });
    Ok(out)
}

pub fn check_table(lines: &[CheckLine]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "value", "limit", "result"])?;
    for l in lines {
        w.write_record([
            l.check.clone(),
            format!("{:e}", l.value),
            l.limit.clone(),
            if l.passed { "pass" } else { "FAIL" }.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Default options for a given delay term.
pub fn synthesis_options(delay_term: DelayTerm) -> SynthesisOptions {
    SynthesisOptions {
        lmi: LmiOptions {
            delay_term,
            ..LmiOptions::default()
        },
        ..SynthesisOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(h: Vec<f64>, upsilon: Vec<f64>) -> SweepSpec {
        SweepSpec {
            model: "example1".into(),
            theorem: TheoremSelection::One,
            h,
            upsilon,
            rho: 0.2,
            output: None,
            delay_term: DelayTerm::Derived,
        }
    }

    #[test]
    fn empty_grids_are_rejected() {
        assert!(spec(vec![], vec![1.0]).validate().is_err());
        assert!(spec(vec![0.5], vec![]).validate().is_err());
        assert!(spec(vec![-0.5], vec![1.0]).validate().is_err());
        let raw = r#"{"model":"example1","theorem":"both","h":[0.5],"upsilon":[],"rho":0.2}"#;
        assert!(matches!(SweepSpec::from_json(raw), Err(Error::Validation(_))));
    }

    #[test]
    fn sweep_cells_match_single_runs() {
        let s = spec(vec![0.5, 0.8], vec![1.0]);
        let m = fixtures::example1();
        let res = run_sweep(&s, &m, &SynthesisOptions::default()).unwrap();
        assert_eq!(res.cells.len(), 2);
        for c in &res.cells {
            let single = synthesize(&m.with_parameters(c.h, 0.2, c.upsilon).unwrap(), Theorem::One, &SynthesisOptions::default()).unwrap();
            assert!((single.gamma.unwrap() - c.gamma.unwrap()).abs() <= 1e-9);
        }
        let table = res.table_csv(false).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "method,h=0.5,h=0.8");
        assert!(lines[1].starts_with("Th. 1,0."));
        let full = res.table_csv(true).unwrap();
        let g: f64 = full.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(g, res.cells[0].gamma.unwrap());
    }

    #[test]
    fn layout_follows_the_varying_grid() {
        let cell = |h, u, gamma: Option<f64>| SweepCell {
            theorem: Theorem::One,
            h,
            upsilon: u,
            status: if gamma.is_some() { SdpStatus::Optimal } else { SdpStatus::Infeasible },
            gamma,
        };
        let mut s = spec(vec![0.5], vec![0.7, 1.0]);
        s.theorem = TheoremSelection::Both;
        let res = SweepResult {
            spec: s,
            cells: vec![cell(0.5, 0.7, None), cell(0.5, 1.0, Some(0.274)), cell(0.5, 0.7, Some(0.1)), cell(0.5, 1.0, Some(0.16))],
        };
        let t = res.table_csv(false).unwrap();
        assert_eq!(t, "method,upsilon=0.7,upsilon=1\nTh. 1,--,0.27\nTh. 2,0.10,0.16\n");
        let cells = res.cells_csv().unwrap();
        assert!(cells.lines().nth(1).unwrap().ends_with("infeasible,"));
    }
}
