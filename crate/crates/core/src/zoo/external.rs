//! JSON-lines adapter for out-of-process solvers.
//!
//! One request per line on the child's stdin:
//! `{"id": str, "problem": "tsp"|"cvrp", "coords": [[x, y], …], "demands": [d, …]?, "capacity": q?}`.
//! Coordinates are the normalized unit-square ones; demands and capacity are
//! the raw integers. The child answers on stdout, in request order, with
//! `{"id": str, "tour": [...]}`, `{"id": str, "routes": [[...], ...]}` or
//! `{"id": str, "error": str}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::SolverFailure;
use crate::instance::{tour_cost, validate_plan, ProblemKind, RoutePlan, RoutingInstance, Solution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub id: String,
    pub problem: ProblemKind,
    pub coords: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demands: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tour: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routes: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Single-line request for `inst` (no trailing newline).
pub fn encode_request(inst: &RoutingInstance) -> String {
    let cvrp = inst.kind == ProblemKind::Cvrp;
    let req = AdapterRequest {
        id: inst.id.clone(),
        problem: inst.kind,
        coords: inst.coords.clone(),
        demands: cvrp.then(|| inst.raw.demands.clone()),
        capacity: cvrp.then_some(inst.raw.capacity),
    };
    serde_json::to_string(&req).expect("request serializes")
}

/// Decodes one response line and checks it answers `expected_id`.
pub fn parse_response(line: &str, expected_id: &str) -> Result<RoutePlan, SolverFailure> {
    let resp: AdapterResponse =
        serde_json::from_str(line.trim()).map_err(|e| SolverFailure::Malformed(e.to_string()))?;
    if resp.id != expected_id {
        return Err(SolverFailure::Malformed(format!(
            "response id `{}` does not match request `{expected_id}`",
            resp.id
        )));
    }
    match (resp.tour, resp.routes, resp.error) {
        (_, _, Some(e)) => Err(SolverFailure::Reported(e)),
        (Some(t), None, None) => Ok(RoutePlan::Tour(t)),
        (None, Some(r), None) => Ok(RoutePlan::Routes(r)),
        (Some(_), Some(_), None) => Err(SolverFailure::Malformed("both `tour` and `routes` present".into())),
        (None, None, None) => Err(SolverFailure::Malformed("missing `tour`, `routes` or `error`".into())),
    }
}

/// Launches `command`, sends one request, and validates the reply. The child
/// is killed if no reply arrives within `timeout`.
pub fn external_solve(command: &[String], inst: &RoutingInstance, timeout: Duration) -> Result<Solution, SolverFailure> {
    let (prog, args) = command
        .split_first()
        .ok_or_else(|| SolverFailure::Launch(String::new(), "empty command".into()))?;
    let t0 = Instant::now();
    let mut child = Command::new(prog)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SolverFailure::Launch(prog.clone(), e.to_string()))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut line = String::new();
        let res = BufReader::new(stdout).read_line(&mut line).map(|_| line);
        let _ = tx.send(res);
    });
    // a child that exits without reading gives a broken pipe; its exit status
    // is the more useful report, so write errors are not fatal here
    let _ = writeln!(stdin, "{}", encode_request(inst));
    drop(stdin);

    let line = match rx.recv_timeout(timeout) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SolverFailure::Malformed(format!("reading stdout: {e}")));
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SolverFailure::Timeout(timeout));
        }
    };
    let wall_time = t0.elapsed().as_secs_f64();

    // give the child the rest of its budget to exit cleanly
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) if t0.elapsed() < timeout => std::thread::sleep(Duration::from_millis(2)),
            _ => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
        }
    };
    if let Some(s) = status {
        if !s.success() {
            return Err(SolverFailure::Exit(s.to_string()));
        }
    }
    if line.trim().is_empty() {
        return Err(SolverFailure::Malformed("no response".into()));
    }
    let plan = parse_response(&line, &inst.id)?;
    validate_plan(inst, &plan)?;
    let objective = tour_cost(inst, &plan)?;
    Ok(Solution {
        plan,
        objective,
        wall_time,
    })
}
