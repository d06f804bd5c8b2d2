//! The `tsfilt` command line. [`run`] takes the argument list and two
//! sinks so it can be driven from tests as well as from the binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::lmi::{DelayTerm, Theorem};
use crate::report::{
    check_table, exit, recheck, resolve_model, run_sweep, status_code, synthesis_options, SweepSpec,
};
use crate::sim::{empirical_gain, Scenario, SCENARIOS};
use crate::synthesis::{synthesize, SynthesisReport};

#[derive(Debug, Parser)]
#[command(name = "tsfilt", version, about = "Fuzzy H-infinity filter synthesis for delayed T-S systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TermArg {
    Derived,
    Printed,
}

impl From<TermArg> for DelayTerm {
    fn from(t: TermArg) -> Self {
        match t {
            TermArg::Derived => DelayTerm::Derived,
            TermArg::Printed => DelayTerm::Printed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model document (or `example1` / `example2`).
    Validate { model: String },
    /// Solve one design and write its report.
    Synth {
        model: String,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        theorem: u8,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        upsilon: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, value_enum, default_value = "derived")]
        delay_term: TermArg,
        /// Report path; the JSON goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a grid of designs and print the γ table.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        full_precision: bool,
        /// Also write one row per cell at full precision.
        #[arg(long)]
        cells: Option<PathBuf>,
    },
    /// Run a bundled scenario through plant and filter.
    Simulate {
        model: String,
        #[arg(long)]
        filter: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Trace CSV path; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a saved design and print a pass/fail table.
    Verify {
        model: String,
        #[arg(long)]
        filter: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Exit status for a library error.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Schema(_)
        | Error::Validation(_)
        | Error::OutsideDomain { .. }
        | Error::Domain(_)
        | Error::Index(_)
        | Error::Dimension(_)
        | Error::MissingVariable(_)
        | Error::Json(_) => exit::VALIDATION,
        Error::Solver(_) | Error::Extraction(_) | Error::Simulation(_) => exit::NUMERICAL,
        Error::Verification(_) | Error::Io(_) | Error::Csv(_) => exit::FAILED,
    }
}

pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return exit::VALIDATION;
            }
            let _ = write!(out, "{}", e.render());
            return exit::OK;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            error_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Validate { model } => cmd_validate(&model, out),
        Command::Synth {
            model,
            theorem,
            h,
            upsilon,
            rho,
            delay_term,
            out: path,
        } => cmd_synth(&model, theorem, h, upsilon, rho, delay_term.into(), path.as_deref(), out, err),
        Command::Sweep {
            spec,
            full_precision,
            cells,
        } => cmd_sweep(&spec, full_precision, cells.as_deref(), out),
        Command::Simulate {
            model,
            filter,
            scenario,
            seed,
            horizon,
            step,
            out: path,
        } => cmd_simulate(&model, &filter, &scenario, seed, horizon, step, path.as_deref(), out, err),
        Command::Verify { model, filter, seed } => cmd_verify(&model, &filter, seed, out),
    }
}

pub fn cmd_validate(model: &str, out: &mut dyn Write) -> Result<i32> {
    let m = resolve_model(model, None)?;
    writeln!(
        out,
        "ok: {} (n={}, m_y={}, p_w={}, q={}; {} plant rules, {} filter rules; h={}, rho={}, upsilon={})",
        m.name,
        m.dims.n,
        m.dims.m_y,
        m.dims.p_w,
        m.dims.q,
        m.p_rules(),
        m.filter_rule_count,
        m.delay.h,
        m.delay.rho,
        m.upsilon
    )?;
    Ok(exit::OK)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    model: &str,
    theorem: u8,
    h: Option<f64>,
    upsilon: Option<f64>,
    rho: Option<f64>,
    delay_term: DelayTerm,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let base = resolve_model(model, None)?;
    let m = base.with_parameters(
        h.unwrap_or(base.delay.h),
        rho.unwrap_or(base.delay.rho),
        upsilon.unwrap_or(base.upsilon),
    )?;
    let th = Theorem::from_number(theorem)?;
    let report = synthesize(&m, th, &synthesis_options(delay_term))?;
    let json = report.to_json()?;
    let summary = match report.gamma {
        Some(g) => format!(
            "theorem {}: gamma_min = {g} (h={}, rho={}, upsilon={}, {} iterations)",
            th.number(),
            report.h,
            report.rho,
            report.upsilon,
            report.certificate.iterations
        ),
        None => format!("theorem {}: {}", th.number(), report.certificate.message),
    };
    match path {
        Some(p) => {
            std::fs::write(p, json)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            writeln!(out, "{json}")?;
            writeln!(err, "{summary}")?;
        }
    }
    Ok(status_code(report.status))
}

pub fn cmd_sweep(spec_path: &Path, full_precision: bool, cells: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let spec = SweepSpec::from_json(&std::fs::read_to_string(spec_path)?)?;
    let model = resolve_model(&spec.model, spec_path.parent())?;
    let result = run_sweep(&spec, &model, &synthesis_options(spec.delay_term))?;
    let table = result.table_csv(full_precision)?;
    match &spec.output {
        Some(p) => std::fs::write(spec_path.parent().unwrap_or(Path::new(".")).join(p), &table)?,
        None => write!(out, "{table}")?,
    }
    if let Some(p) = cells {
        std::fs::write(p, result.cells_csv()?)?;
    }
    Ok(exit::OK)
}

fn load_report(path: &Path) -> Result<SynthesisReport> {
    SynthesisReport::from_json(&std::fs::read_to_string(path)?)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    model: &str,
    filter: &Path,
    scenario: &str,
    seed: u64,
    horizon: Option<f64>,
    step: Option<f64>,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    if !SCENARIOS.contains(&scenario) {
        return Err(Error::Validation(vec![format!(
            "unknown scenario '{scenario}' (expected one of {})",
            SCENARIOS.join(", ")
        )]));
    }
    let report = load_report(filter)?;
    let m = resolve_model(model, None)?.with_parameters(report.h, report.rho, report.upsilon)?;
    let rules = report
        .filter
        .as_ref()
        .ok_or_else(|| Error::Verification(format!("{} holds no filter", filter.display())))?;
    let mut sc = Scenario::bundled(scenario, &m, seed)?;
    if let Some(hz) = horizon {
        sc.horizon = hz;
    }
    if let Some(s) = step {
        sc.step = s;
    }
    let trace = sc.run(&m, &rules.rules)?;
    let (summary, passed) = if sc.disturbance.is_zero() {
        let r = trace.terminal_norm_ratio();
        (format!("terminal-norm-ratio {r:e} (limit 1e-3)"), r <= 1e-3)
    } else {
        let g = empirical_gain(&trace)?;
        let gamma = rules.gamma;
        (format!("empirical gain {g} <= gamma {gamma}: {}", g <= gamma), g <= gamma)
    };
    match path {
        Some(p) => {
            trace.write_csv(std::fs::File::create(p)?)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            trace.write_csv(&mut *out)?;
            writeln!(err, "{summary}")?;
        }
    }
    Ok(if passed { exit::OK } else { exit::FAILED })
}

pub fn cmd_verify(model: &str, filter: &Path, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let report = load_report(filter)?;
    let m = resolve_model(model, None)?;
    let lines = recheck(&m, &report, seed)?;
    write!(out, "{}", check_table(&lines)?)?;
    Ok(if lines.iter().all(|l| l.passed) { exit::OK } else { exit::FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = run(std::iter::once("tsfilt").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn validate_bundled() {
        let (code, out, _) = call(&["validate", "example2"]);
        assert_eq!(code, 0);
        assert!(out.contains("3 plant rules"));
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        assert_eq!(call(&["synth", "example1", "--theorem", "3"]).0, exit::VALIDATION);
        assert_eq!(call(&["frobnicate"]).0, exit::VALIDATION);
        assert_eq!(call(&["validate", "/nonexistent/model.json"]).0, exit::FAILED);
    }

    #[test]
    fn synth_simulate_verify_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
        let (code, out, err) = call(&["synth", "example1", "--theorem", "1", "--h", "0.5", "--upsilon", "1", "--rho", "0.2", "--out", &p("r.json")]);
        assert_eq!(code, 0, "{err}");
        let report = SynthesisReport::from_json(&std::fs::read_to_string(p("r.json")).unwrap()).unwrap();
        assert!(out.contains(&format!("gamma_min = {}", report.gamma.unwrap())));

        let (code, out, _) = call(&["simulate", "example1", "--filter", &p("r.json"), "--scenario", "pulse", "--out", &p("t.csv")]);
        assert_eq!(code, 0);
        assert!(out.starts_with("empirical gain") && out.contains(": true"), "{out}");
        let csv = std::fs::read_to_string(p("t.csv")).unwrap();
        assert!(csv.starts_with("t,tau,zeta1,"));
        assert_eq!(csv.lines().count(), 5002);

        let (code, out, _) = call(&["simulate", "example1", "--filter", &p("r.json"), "--scenario", "free", "--out", &p("f.csv")]);
        assert_eq!(code, 0);
        assert!(out.starts_with("terminal-norm-ratio"));
        assert_eq!(call(&["simulate", "example1", "--filter", &p("r.json"), "--scenario", "storm"]).0, exit::VALIDATION);

        let (code, out, _) = call(&["verify", "example1", "--filter", &p("r.json")]);
        assert_eq!(code, 0, "{out}");
        assert!(out.starts_with("check,value,limit,result") && !out.contains("FAIL"));
    }

    #[test]
    fn missing_or_empty_reports_fail() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path().join("r.json");
        let r = r.to_str().unwrap();
        assert_ne!(call(&["verify", "example1", "--filter", r]).0, 0);
        assert_eq!(call(&["synth", "example2", "--theorem", "1", "--out", r]).0, exit::INFEASIBLE);
        assert_ne!(call(&["simulate", "example2", "--filter", r, "--scenario", "free"]).0, 0);
        assert_ne!(call(&["verify", "example2", "--filter", r]).0, 0);
    }

    #[test]
    fn sweep_cells_equal_single_runs() {
        let dir = tempfile::tempdir().unwrap();
        let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
        std::fs::write(p("empty.json"), r#"{"model": "example1", "theorem": "1", "h": [0.5], "upsilon": [], "rho": 0.2}"#).unwrap();
        assert_eq!(call(&["sweep", &p("empty.json")]).0, exit::VALIDATION);

        std::fs::write(p("grid.json"), r#"{"model": "example1", "theorem": "1", "h": [0.5, 0.8], "upsilon": [2], "rho": 0.2}"#).unwrap();
        let (code, table, _) = call(&["sweep", &p("grid.json"), "--full-precision", "--cells", &p("cells.csv")]);
        assert_eq!(code, 0);
        let cells: Vec<f64> = table.lines().nth(1).unwrap().split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        let (code, json, _) = call(&["synth", "example1", "--theorem", "1", "--h", "0.8", "--upsilon", "2"]);
        assert_eq!(code, 0);
        let single = SynthesisReport::from_json(&json).unwrap();
        assert!((single.gamma.unwrap() - cells[1]).abs() <= 1e-9);
        assert_eq!(std::fs::read_to_string(p("cells.csv")).unwrap().lines().count(), 3);
        let (_, rounded, _) = call(&["sweep", &p("grid.json")]);
        assert_eq!(rounded.lines().nth(1).unwrap(), format!("Th. 1,{:.2},{:.2}", cells[0], cells[1]));
    }
}
