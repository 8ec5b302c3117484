pub mod commands;
pub mod config;

use commands::{Check, Outcome};
use config::{Command, Format, RunConfig, Tolerances};
use convexrisk::scenario::{parse_scenario, Scenario};
use convexrisk::{ErrorClass, Result, RiskError};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What the binary prints and how it exits.
#[derive(Debug)]
pub struct RunOutput {
    pub exit_code: i32,
    pub body: String,
    /// Human-readable line for stderr on failure.
    pub diagnostic: Option<String>,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Validation => 1,
        ErrorClass::Solver => 2,
        ErrorClass::Infeasible => 3,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| RiskError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn dispatch(cmd: Command, sc: &Scenario, tol: &Tolerances, seed: u64, csv: bool) -> Result<Outcome> {
    match cmd {
        Command::Price => commands::price(sc, tol),
        Command::Penalty => commands::penalties(sc),
        Command::Transfer => commands::transfer(sc, tol, seed),
        Command::Hedge => commands::hedge(sc, tol),
        Command::Superhedge => commands::superhedge(sc, tol),
        Command::Bsde => commands::bsde(sc, tol, seed, csv),
        Command::Dual => commands::dual(sc, tol, seed, csv),
        Command::Check => unreachable!("check is expanded by the caller"),
    }
}

/// Commands whose inputs are present in the scenario.
pub fn applicable(sc: &Scenario) -> Vec<Command> {
    let mut v = Vec::new();
    let statics = !sc.risk_measures.is_empty() && !sc.positions.is_empty();
    if statics {
        v.push(Command::Price);
    }
    if !sc.risk_measures.is_empty() {
        v.push(Command::Penalty);
    }
    if sc.transfer.is_some() {
        v.push(Command::Transfer);
    }
    if sc.instruments.is_some() {
        if statics {
            v.push(Command::Hedge);
        }
        v.push(Command::Superhedge);
    }
    if sc.bsde.is_some() {
        v.push(Command::Bsde);
        v.push(Command::Dual);
    }
    v
}

fn fixture_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| RiskError::Validation(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(RiskError::Validation(format!("no .json fixtures in {}", path.display())));
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn check_suite(cfg: &RunConfig, tol: &Tolerances) -> Result<(String, Value, Vec<Check>)> {
    let files = fixture_files(&cfg.scenario)?;
    let mut digest = Sha256::new();
    let mut per_file = Map::new();
    let mut all = Vec::new();
    for f in &files {
        let text = read(f)?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        digest.update(name.as_bytes());
        digest.update(sha256_hex(text.as_bytes()).as_bytes());
        let sc = match parse_scenario(&text) {
            Ok(sc) => sc,
            Err(e) => {
                per_file.insert(name.clone(), json!({ "error": error_json(&e) }));
                all.push(Check { name: format!("{name}/parse"), value: 1.0, tolerance: 0.0, passed: false });
                continue;
            }
        };
        let mut entry = Map::new();
        for cmd in applicable(&sc) {
            let key = command_name(cmd);
            match dispatch(cmd, &sc, tol, cfg.seed, false) {
                Ok(out) => {
                    let failed: Vec<&str> = out.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                    entry.insert(key, json!({ "passed": failed.is_empty(), "checks": out.checks.len(), "failed": failed }));
                    for c in out.checks {
                        all.push(Check { name: format!("{name}/{}", c.name), ..c });
                    }
                }
                Err(e) => {
                    all.push(Check { name: format!("{name}/{key}"), value: 1.0, tolerance: 0.0, passed: false });
                    entry.insert(key, json!({ "passed": false, "error": error_json(&e) }));
                }
            }
        }
        per_file.insert(name, Value::Object(entry));
    }
    Ok((hex::encode(digest.finalize()), Value::Object(per_file), all))
}

fn error_json(e: &RiskError) -> Value {
    json!({
        "reason": e.reason(),
        "class": format!("{:?}", e.class()).to_lowercase(),
        "message": e.to_string(),
    })
}

fn command_name(cmd: Command) -> String {
    serde_json::to_value(cmd).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn execute(cfg: &RunConfig) -> Result<(Value, Option<String>)> {
    let tol = Tolerances::parse(&cfg.tol)?;
    let want_csv = cfg.format == Format::Csv;
    let (sha, result, checks, csv) = if cfg.command == Command::Check {
        let (sha, result, checks) = check_suite(cfg, &tol)?;
        (sha, result, checks, None)
    } else {
        let text = read(&cfg.scenario)?;
        let sc = parse_scenario(&text)?;
        let out = dispatch(cfg.command, &sc, &tol, cfg.seed, want_csv)?;
        let mut result = out.result;
        if !sc.dropped.is_empty() {
            result["dropped_outcomes"] = json!(sc.dropped);
        }
        (sha256_hex(text.as_bytes()), result, out.checks, out.csv)
    };
    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "command": command_name(cfg.command),
        "version": VERSION,
        "scenario_sha256": sha,
        "seed": cfg.seed,
        "tolerances": tol,
        "result": result,
        "checks": checks,
        "passed": passed,
    });
    Ok((report, csv))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn render(report: &Value, csv: Option<String>, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => csv.unwrap_or_else(|| {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                let quoted = if v.contains([',', '"', '\n']) { format!("\"{}\"", v.replace('"', "\"\"")) } else { v };
                s.push_str(&format!("{k},{quoted}\n"));
            }
            s
        }),
        Format::Text => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
        }
    }
}

/// Runs one invocation without touching stdout.
pub fn run(cfg: &RunConfig) -> RunOutput {
    match execute(cfg) {
        Ok((report, csv)) => {
            let passed = report["passed"].as_bool().unwrap_or(false);
            let failing: Vec<String> = report["checks"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter(|c| c["passed"] == json!(false))
                        .map(|c| c["name"].as_str().unwrap_or_default().to_string())
                        .collect()
                })
                .unwrap_or_default();
            let exit_code = if passed { 0 } else { 2 };
            RunOutput {
                exit_code,
                body: render(&report, csv, cfg.format),
                diagnostic: (!passed).then(|| format!("failed checks: {}", failing.join(", "))),
            }
        }
        Err(e) => {
            let code = exit_code(e.class());
            let report = json!({
                "command": command_name(cfg.command),
                "version": VERSION,
                "error": error_json(&e),
                "exit_code": code,
            });
            let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
            body.push('\n');
            RunOutput { exit_code: code, body, diagnostic: Some(format!("error: {e}")) }
        }
    }
}
