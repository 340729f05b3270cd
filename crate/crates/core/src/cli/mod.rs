//! Command-line front end: scenario files in, CSV and JSON reports out.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration error,
//! 3 numerical error.

pub mod config;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{flow_run, Grid, GridMap};
use crate::jacobi::{index_form, jacobi_apply, sphere_trace_identity};
use crate::maps::hs_norm_sq;
use crate::quadrature::{bienergy_p, energy_p};
use crate::section::Section;
use crate::tension::{bitension_at, tension_report, target_norm};
use crate::variation::{
    first_variation_bienergy_check, first_variation_check, second_variation_check, DEFAULT_DELTA_FIRST,
    DEFAULT_DELTA_SECOND,
};
use config::{Functional, Scenario, ScenarioConfig, VariationKind};

#[derive(Debug, Parser)]
#[command(name = "pharmonic", version, about = "Variable-exponent p-energy calculus for maps between manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Scenario file (TOML), or a JSON report to re-run.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print E_p (or the bienergy) over the domain.
    Energy(ConfigArg),
    /// CSV of τ and both forms of τ_p at sampled points.
    Tension(ConfigArg),
    /// CSV of τ_{2,p} at sampled points.
    Bitension(ConfigArg),
    /// CSV of J_p(v) at sampled points.
    JacobiApply(ConfigArg),
    /// JSON index form I(v, v) and its parts.
    IndexForm(ConfigArg),
    /// CSV of the sphere trace identity at sampled points.
    SphereIdentity(ConfigArg),
    /// JSON finite-difference check of a variation formula.
    VariationCheck(ConfigArg),
    /// Discrete gradient flow; trace and final map as CSV.
    Flow(ConfigArg),
    /// Run a built-in verification suite.
    Verify {
        #[arg(long, default_value = "paper")]
        suite: String,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    version: &'static str,
    config_hash: String,
    config: &'a ScenarioConfig,
    result: T,
}

struct Run {
    config: ScenarioConfig,
    scenario: Scenario,
    resolved: ScenarioConfig,
}

impl Run {
    fn load(path: &Path) -> Result<Self> {
        let config = ScenarioConfig::load(path)?;
        let scenario = Scenario::build(&config)?;
        let resolved = config.resolved(&scenario);
        Ok(Self {
            config,
            scenario,
            resolved,
        })
    }

    fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.resolved).expect("config serializes").as_bytes())
    }

    fn label(&self) -> String {
        self.config
            .options
            .scenario
            .clone()
            .unwrap_or_else(|| self.config.map.name.clone())
    }

    fn write_json<T: Serialize>(&self, command: &str, result: T) -> Result<String> {
        let report = Report {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.hash(),
            config: &self.resolved,
            result,
        };
        let text = serde_json::to_string_pretty(&report)?;
        if let Some(path) = &self.config.output.json {
            std::fs::write(path, format!("{text}\n"))?;
        }
        Ok(text)
    }

    /// Writes rows to `output.csv`, or stdout.
    fn write_csv(&self, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        write_csv_to(self.config.output.csv.as_deref(), header, rows)
    }
}

fn write_csv_to(path: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn numbers(v: &[f64]) -> Vec<String> {
    v.iter().map(|&a| fmt_f64(a)).collect()
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Energy(a) => energy(&Run::load(&a.config)?),
        Command::Tension(a) => tension(&Run::load(&a.config)?),
        Command::Bitension(a) => bitension(&Run::load(&a.config)?),
        Command::JacobiApply(a) => jacobi(&Run::load(&a.config)?),
        Command::IndexForm(a) => index(&Run::load(&a.config)?),
        Command::SphereIdentity(a) => sphere(&Run::load(&a.config)?),
        Command::VariationCheck(a) => variation(&Run::load(&a.config)?),
        Command::Flow(a) => flow(&Run::load(&a.config)?),
        Command::Verify { suite, json } => verify_suite(&suite, json.as_deref()),
    }
}

/// `tolerance` check shared by the pointwise commands.
fn within(run: &Run, worst: f64) -> bool {
    match run.config.options.tolerance {
        Some(t) => {
            let ok = worst <= t;
            if !ok {
                eprintln!("check failed: {} > tolerance {}", fmt_f64(worst), t);
            }
            ok
        }
        None => true,
    }
}

fn energy(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let domain = s.domain(&run.config)?;
    let (name, value) = match run.config.options.functional {
        Functional::Energy => ("energy", energy_p(&s.map, &s.exponent, domain)?),
        Functional::Bienergy => ("bienergy", bienergy_p(&s.map, &s.exponent, domain)?),
    };
    println!("{}", fmt_f64(value));
    run.write_json("energy", serde_json::json!({ "functional": name, "value": value }))?;
    Ok(true)
}

fn tension(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let m = s.map.domain().dim();
    let k = s.map.target().coords();
    let mut header = columns("x", m);
    header.extend(columns("tau", k));
    header.extend(columns("tau_p", k));
    header.extend(["residual".to_string(), "degenerate".to_string()]);
    let mut rows = vec![];
    let mut worst = 0.0f64;
    for x in s.points(&run.config)? {
        let r = tension_report(&s.map, &s.exponent, &x)?;
        worst = worst.max(target_norm(&s.map, &x, &r.tau_p_trace));
        let mut row = numbers(&x);
        row.extend(numbers(&r.tau));
        row.extend(numbers(&r.tau_p_trace));
        row.push(fmt_f64(r.residual));
        row.push(r.degenerate.to_string());
        rows.push(row);
    }
    run.write_csv(&header, &rows)?;
    Ok(within(run, worst))
}

fn bitension(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let m = s.map.domain().dim();
    let k = s.map.target().coords();
    let mut header = columns("x", m);
    header.extend(columns("tau2_p", k));
    header.push("norm".into());
    let mut rows = vec![];
    let mut worst = 0.0f64;
    for x in s.points(&run.config)? {
        let b = bitension_at(&s.map, &s.exponent, &x)?;
        let n = target_norm(&s.map, &x, &b);
        worst = worst.max(n);
        let mut row = numbers(&x);
        row.extend(numbers(&b));
        row.push(fmt_f64(n));
        rows.push(row);
    }
    run.write_csv(&header, &rows)?;
    Ok(within(run, worst))
}

fn jacobi(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let v = s.direction(run.config.section.as_ref(), &run.config, "section")?;
    let section = Section::direction(s.map.clone(), v)?;
    let m = s.map.domain().dim();
    let k = s.map.target().coords();
    let mut header = columns("x", m);
    header.extend(columns("j", k));
    let mut rows = vec![];
    for x in s.points(&run.config)? {
        let j = jacobi_apply(&s.map, &s.exponent, &section, &x)?;
        let mut row = numbers(&x);
        row.extend(numbers(&j));
        rows.push(row);
    }
    run.write_csv(&header, &rows)?;
    Ok(true)
}

fn index(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let v = s.direction(run.config.section.as_ref(), &run.config, "section")?;
    let section = Section::direction(s.map.clone(), v)?;
    let r = index_form(&s.map, &s.exponent, &section, s.domain(&run.config)?)?;
    println!("{}", run.write_json("index-form", r)?);
    Ok(true)
}

fn sphere(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let m = s.map.domain().dim();
    let tol = run.config.options.tolerance.unwrap_or(1e-5);
    let mut header = columns("x", m);
    header.extend(["lhs", "rhs", "residual"].map(String::from));
    let mut rows = vec![];
    let mut ok = true;
    for x in s.points(&run.config)? {
        let r = sphere_trace_identity(&s.map, &s.exponent, &x)?;
        let p = crate::maps::exponent_at(&s.exponent, &x)?;
        let up = hs_norm_sq(&s.map, &x)?.sqrt().powf(p);
        ok &= r.residual.abs() <= tol * (1.0 + up);
        let mut row = numbers(&x);
        row.extend(numbers(&[r.lhs, r.rhs, r.residual]));
        rows.push(row);
    }
    run.write_csv(&header, &rows)?;
    if !ok {
        eprintln!("check failed: residual above {tol}·(1 + |dφ|^p)");
    }
    Ok(ok)
}

fn variation(run: &Run) -> Result<bool> {
    let s = &run.scenario;
    let c = &run.config;
    let domain = s.domain(c)?;
    let v = s.direction(c.section.as_ref(), c, "section")?;
    let (check, tol) = match c.options.variation {
        VariationKind::First => (
            first_variation_check(&s.map, &s.exponent, &v, domain, c.options.rule, c.options.delta.unwrap_or(DEFAULT_DELTA_FIRST))?,
            c.options.tolerance.unwrap_or(1e-4),
        ),
        VariationKind::Second => {
            let w = s.direction(c.section_w.as_ref().or(c.section.as_ref()), c, "section_w")?;
            (
                second_variation_check(
                    &s.map,
                    &s.exponent,
                    &v,
                    &w,
                    domain,
                    c.options.rule,
                    c.options.delta.unwrap_or(DEFAULT_DELTA_SECOND),
                )?,
                c.options.tolerance.unwrap_or(1e-3),
            )
        }
        VariationKind::Bienergy => (
            first_variation_bienergy_check(
                &s.map,
                &s.exponent,
                &v,
                domain,
                c.options.rule,
                c.options.delta.unwrap_or(DEFAULT_DELTA_FIRST),
            )?,
            c.options.tolerance.unwrap_or(1e-3),
        ),
    };
    let pass = check.rel_error <= tol;
    let text = run.write_json(
        "variation-check",
        serde_json::json!({
            "scenario": run.label(),
            "lhs": check.lhs,
            "rhs": check.rhs,
            "rel_error": check.rel_error,
            "tolerance": tol,
            "pass": pass,
        }),
    )?;
    println!("{text}");
    Ok(pass)
}

fn flow(run: &Run) -> Result<bool> {
    use rand::Rng;
    let s = &run.scenario;
    let c = &run.config;
    let domain = s.domain(c)?;
    let periodic = if c.flow.periodic.is_empty() {
        vec![false; domain.dim()]
    } else {
        c.flow.periodic.clone()
    };
    let grid = Grid::from_domain(domain, periodic)?;
    let mut gm = GridMap::sample(&s.map, grid)?;
    if c.flow.noise != 0.0 {
        let mut rng = crate::rng::seeded(c.seed);
        let sphere = gm.target.is_sphere();
        for (v, &b) in gm.values.iter_mut().zip(&gm.boundary) {
            for a in v.iter_mut() {
                let r: f64 = rng.gen_range(-1.0..1.0);
                if !b {
                    *a += c.flow.noise * r;
                }
            }
            if sphere && !b {
                let r = crate::geometry::dot(v, v).sqrt();
                v.iter_mut().for_each(|a| *a /= r);
            }
        }
    }
    let (out, trace) = match flow_run(&gm, &s.exponent, &c.flow.solver) {
        Ok(r) => r,
        Err(Error::Stagnation { iteration, halvings, trace }) => {
            write_trace(c.output.trace.as_deref(), &trace)?;
            return Err(Error::Stagnation {
                iteration,
                halvings,
                trace,
            });
        }
        Err(e) => return Err(e),
    };
    write_trace(c.output.trace.as_deref(), &trace)?;
    let m = out.grid.dim();
    let k = out.target.coords();
    let mut header = columns("x", m);
    header.extend(columns("y", k));
    let rows: Vec<Vec<String>> = out
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut row = numbers(&out.grid.node(i));
            row.extend(numbers(v));
            row
        })
        .collect();
    if let Some(path) = &c.output.csv {
        write_csv_to(Some(path), &header, &rows)?;
    }
    let last = trace.records.iter().rev().find(|r| r.accepted).copied();
    let summary = serde_json::json!({
        "converged": trace.converged,
        "iterations": trace.iterations(),
        "energy": last.map(|r| r.energy),
        "residual": last.map(|r| r.residual),
    });
    let text = run.write_json("flow", summary)?;
    if c.output.trace.is_some() {
        println!("{text}");
    }
    if !trace.converged {
        eprintln!("flow stopped after {} iterations without reaching tol", trace.iterations());
    }
    Ok(trace.converged)
}

fn write_trace(path: Option<&Path>, trace: &crate::flow::FlowTrace) -> Result<()> {
    let header = ["iter", "energy", "residual", "step", "accepted"].map(String::from);
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.energy),
                fmt_f64(r.residual),
                fmt_f64(r.step),
                r.accepted.to_string(),
            ]
        })
        .collect();
    write_csv_to(path, &header, &rows)
}

fn verify_suite(suite: &str, json: Option<&Path>) -> Result<bool> {
    if suite != "paper" {
        return Err(Error::Config(format!("unknown suite `{suite}` (available: paper)")));
    }
    let mut criteria = vec![];
    for (id, _, _) in verify::CRITERIA {
        let c = verify::run_criterion(*id)?;
        println!("{}", verify::format_line(&c));
        criteria.push(c);
    }
    let overall = criteria.iter().all(|c| c.pass);
    let report = verify::VerificationReport {
        suite: "paper",
        version: env!("CARGO_PKG_VERSION"),
        seed: crate::rng::DEFAULT_SEED,
        config_hash: sha256_hex(b"suite=paper;seed=42"),
        criteria,
        overall,
    };
    println!(
        "{}: {} of {} criteria pass",
        if overall { "PASS" } else { "FAIL" },
        report.criteria.iter().filter(|c| c.pass).count(),
        report.criteria.len()
    );
    if let Some(p) = json {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(overall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_command(["pharmonic", "frobnicate"]), 2);
        assert_eq!(run_command(["pharmonic", "energy"]), 2);
        assert_eq!(run_command(["pharmonic", "energy", "--config", "/nonexistent.toml"]), 2);
    }
}
