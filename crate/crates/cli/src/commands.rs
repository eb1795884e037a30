use drmpc_core::baselines::{build_adf, build_nominal, build_tube};
use drmpc_core::deadbeat::compute_plan;
use drmpc_core::drmpc::{terminal_ingredients, DrmpcController, TerminalCondition, TerminalKind};
use drmpc_core::plant::{lqr, ProblemSpec};
use drmpc_core::roa::{scan_built, table_sweep, ExcessTable, Factory, GridSpec, ScanMode};
use drmpc_core::sim::{iss_report, simulate as closed_loop, DisturbancePolicy, PolicyKind};
use drmpc_core::{fmt, Controller, Error, Result};
use nalgebra::DVector;
use serde_json::json;

use crate::args::{
    CompareArgs, ControllerArgs, ControllerKind, PrecomputeArgs, RoaArgs, ScanChoice, SimulateArgs, SolveArgs,
    TerminalChoice,
};
use crate::manifest::OutputDir;
use crate::{Loaded, Report, EXIT_RUNTIME_INFEASIBLE};

pub(crate) fn parse_vector(text: &str, n: usize, flag: &str) -> Result<DVector<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("{flag} {text:?}: {e}")))?;
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            context: flag.to_string(),
            expected: n,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{flag} {text:?}: values must be finite")));
    }
    Ok(DVector::from_vec(values))
}

fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| Error::InvalidInput(format!("{flag} {s:?}: {e}"))))
        .collect()
}

fn terminal_kind(t: TerminalChoice) -> TerminalKind {
    match t {
        TerminalChoice::Origin => TerminalKind::Origin,
        TerminalChoice::PiSet => TerminalKind::PiSet,
    }
}

fn scan_mode(s: ScanChoice) -> ScanMode {
    match s {
        ScanChoice::Points => ScanMode::Points,
        ScanChoice::Rows => ScanMode::Rows,
    }
}

pub(crate) fn build_controller(spec: &ProblemSpec, args: &ControllerArgs) -> Result<Box<dyn Controller>> {
    let terminal = terminal_kind(args.terminal);
    Ok(match args.controller {
        ControllerKind::DrmpcOnline => Box::new(DrmpcController::new(spec, drmpc_core::drmpc::Mode::Online, terminal)?),
        ControllerKind::DrmpcOffline => Box::new(DrmpcController::offline(spec, terminal)?),
        ControllerKind::Nominal => Box::new(build_nominal(spec, terminal)?),
        ControllerKind::Tube => Box::new(build_tube(spec, &lqr(&spec.system, &spec.cost)?)?),
        ControllerKind::Adf => Box::new(build_adf(spec, &lqr(&spec.system, &spec.cost)?)?),
    })
}

fn grid_for(spec: &ProblemSpec, resolution: Option<&str>) -> Result<GridSpec> {
    match resolution {
        Some(r) => GridSpec::covering(&spec.x_set, GridSpec::parse_resolution(r)?),
        None => GridSpec::default_for(spec),
    }
}

pub(crate) fn precompute(loaded: &Loaded, args: &PrecomputeArgs, out: &mut OutputDir) -> Result<Report> {
    let spec = &loaded.spec;
    let plan = compute_plan(spec)?;
    out.write_json("plan.json", &plan.to_json())?;
    out.write("plan.csv", plan.to_csv().as_bytes())?;
    if let Some(t) = args.terminal {
        let terminal = match t {
            TerminalChoice::Origin => TerminalCondition::Origin,
            TerminalChoice::PiSet => terminal_ingredients(spec, &plan)?,
        };
        out.write_json("terminal.json", &terminal.to_json())?;
    }
    Ok(Report::ok(format!(
        "deadbeat plan: {} vertices, M = {}, max |z_M| = {}",
        plan.num_vertices(),
        plan.m_horizon(),
        fmt::float(plan.terminal_residual())
    )))
}

pub(crate) fn solve(loaded: &Loaded, args: &SolveArgs, out: &mut OutputDir) -> Result<Report> {
    let spec = &loaded.spec;
    let x0 = parse_vector(&args.x0, spec.n(), "--x0")?;
    let ctrl = build_controller(spec, &args.controller)?;
    out.write_json("controller.json", &ctrl.export())?;
    if args.dump_qp {
        out.write_json("qp.json", &ctrl.build_qp(&x0)?.to_dump())?;
    }
    let decision = ctrl.decide(&x0)?;
    let finite = |v: &DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
    out.write_json(
        "decision.json",
        &json!({
            "controller": ctrl.id(),
            "x0": finite(&x0),
            "status": decision.status,
            "input": finite(&decision.input),
            "value": decision.value,
            "solution": decision.full_solution.as_ref().map(finite),
        }),
    )?;
    if !decision.is_optimal() {
        return Ok(Report {
            summary: format!("{}: problem at x0 is {:?} (step 0)", ctrl.id(), decision.status),
            code: EXIT_RUNTIME_INFEASIBLE,
            seed: None,
        });
    }
    Ok(Report::ok(format!(
        "{}: u0 = [{}], V = {}",
        ctrl.id(),
        fmt::floats(decision.input.iter()),
        fmt::float(decision.value)
    )))
}

pub(crate) fn simulate(loaded: &Loaded, args: &SimulateArgs, out: &mut OutputDir) -> Result<Report> {
    let spec = &loaded.spec;
    let x0 = parse_vector(&args.x0, spec.n(), "--x0")?;
    let policy = DisturbancePolicy::new(PolicyKind::parse(&args.policy)?, args.seed);
    let ctrl = build_controller(spec, &args.controller)?;
    let trace = closed_loop(ctrl.as_ref(), &x0, args.steps, &policy)?;
    out.write("trace.csv", trace.to_csv().as_bytes())?;
    if let Some(k) = trace.aborted_at() {
        out.write_json(
            "iss.json",
            &json!({ "feasible": false, "aborted_at": k, "status": trace.statuses.last() }),
        )?;
        eprintln!("drmpc simulate: runtime infeasibility at step {k}");
        return Ok(Report {
            summary: format!("{}: infeasible at step {k} of {}", ctrl.id(), args.steps),
            code: EXIT_RUNTIME_INFEASIBLE,
            seed: Some(args.seed),
        });
    }
    let report = iss_report(&trace, spec)?;
    out.write_json("iss.json", &json!({ "feasible": true, "report": report }))?;
    Ok(Report {
        summary: format!(
            "{}: {} steps feasible, decrease violations {}, max |x| {}, stays in X {}",
            ctrl.id(),
            trace.len(),
            report.decrease_violations.len(),
            fmt::float(report.max_state_norm),
            report.stays_in_x
        ),
        code: crate::EXIT_OK,
        seed: Some(args.seed),
    })
}

pub(crate) fn roa(loaded: &Loaded, args: &RoaArgs, out: &mut OutputDir) -> Result<Report> {
    let spec = &loaded.spec;
    let grid = grid_for(spec, args.resolution.as_deref())?;
    let label = match args.controller.controller {
        ControllerKind::DrmpcOnline => "drmpc-online",
        ControllerKind::DrmpcOffline => "drmpc-offline",
        ControllerKind::Nominal => "nominal",
        ControllerKind::Tube => "tube",
        ControllerKind::Adf => "adf",
    };
    let result = scan_built(build_controller(spec, &args.controller), label, &grid, scan_mode(args.scan))?;
    out.write("mask.csv", result.to_csv().as_bytes())?;
    if grid.dim() == 2 {
        out.write("boundary.csv", result.boundary_csv()?.as_bytes())?;
    }
    out.write_json("roa.json", &result.summary())?;
    Ok(Report::ok(format!(
        "{label}: volume {} ({} of {} grid points)",
        fmt::float(result.volume),
        result.feasible_count(),
        grid.len()
    )))
}

fn online(s: &ProblemSpec) -> Result<Box<dyn Controller>> {
    Ok(Box::new(DrmpcController::online(s)?))
}

fn offline_origin(s: &ProblemSpec) -> Result<Box<dyn Controller>> {
    Ok(Box::new(DrmpcController::offline(s, TerminalKind::Origin)?))
}

/// Offline DRMPC with PI-set terminal and deadbeat horizon equal to the
/// prediction horizon, as in the baseline comparison.
fn offline_pi_full(s: &ProblemSpec) -> Result<Box<dyn Controller>> {
    let s = s.with_deadbeat(s.horizon_n)?;
    Ok(Box::new(DrmpcController::offline(&s, TerminalKind::PiSet)?))
}

fn tube(s: &ProblemSpec) -> Result<Box<dyn Controller>> {
    Ok(Box::new(build_tube(s, &lqr(&s.system, &s.cost)?)?))
}

fn adf(s: &ProblemSpec) -> Result<Box<dyn Controller>> {
    Ok(Box::new(build_adf(s, &lqr(&s.system, &s.cost)?)?))
}

pub(crate) fn compare(loaded: &Loaded, args: &CompareArgs, out: &mut OutputDir) -> Result<Report> {
    let spec = &loaded.spec;
    let ts_list: Vec<f64> = parse_list(&args.ts_list, "--ts-list")?;
    let horizons: Vec<usize> = parse_list(&args.horizons, "--horizons")?;
    let tables: Vec<String> = parse_list(&args.tables, "--tables")?;
    let resolution = grid_for(spec, args.resolution.as_deref())?.resolution;
    let mode = scan_mode(args.scan);
    let mut summary = String::new();
    let mut all = serde_json::Map::new();
    for t in &tables {
        let (labels, factories): ((&str, &str), (Factory, Factory)) = match t.as_str() {
            "I" => (("drmpc-online", "drmpc-offline"), (&online, &offline_origin)),
            "II" => (("drmpc-offline-pi", "tube"), (&offline_pi_full, &tube)),
            "III" => (("drmpc-offline-pi", "adf"), (&offline_pi_full, &adf)),
            other => {
                return Err(Error::InvalidInput(format!("--tables: unknown table {other:?} (expected I, II or III)")));
            }
        };
        log::info!("table {t}: {} over {}", labels.0, labels.1);
        let table: ExcessTable = table_sweep(spec, &ts_list, &horizons, labels, factories, &resolution, mode)?;
        out.write(&format!("table_{t}.csv"), table.to_csv().as_bytes())?;
        let md = table.to_markdown();
        out.write(&format!("table_{t}.md"), md.as_bytes())?;
        summary.push_str(&format!("Table {t}\n{md}"));
        for note in &table.notes {
            summary.push_str(&format!("  undefined: {note}\n"));
        }
        all.insert(t.clone(), serde_json::to_value(&table)?);
    }
    out.write_json("compare.json", &all)?;
    Ok(Report::ok(summary.trim_end().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse_with_dimension_check() {
        assert_eq!(parse_vector("1, -2.5", 2, "--x0").unwrap().as_slice(), &[1.0, -2.5]);
        assert!(matches!(
            parse_vector("1", 2, "--x0"),
            Err(Error::DimensionMismatch { expected: 2, got: 1, .. })
        ));
        assert!(parse_vector("1,a", 2, "--x0").is_err());
        assert!(parse_vector("1,inf", 2, "--x0").is_err());
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list::<usize>("10,20", "--horizons").unwrap(), vec![10, 20]);
        assert!(parse_list::<f64>("0.1,x", "--ts-list").is_err());
    }
}
