//! Library half of the `drmpc` binary: argument types, command handlers,
//! run manifests and the exit-code contract.

pub mod args;
mod check;
mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use drmpc_core::Error;

use args::{Cli, Command};
use manifest::{OutputDir, RunManifest};

pub const EXIT_OK: i32 = 0;
/// Invariant suites ran but at least one reported a violation.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SYNTHESIS: i32 = 3;
pub const EXIT_RUNTIME_INFEASIBLE: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Json(_) | Error::Io(_) => {
            EXIT_CONFIG
        }
        Error::SynthesisInfeasible(_) => EXIT_SYNTHESIS,
        Error::RuntimeInfeasible { .. } => EXIT_RUNTIME_INFEASIBLE,
        Error::Solver(_) | Error::NonConvergence(_) => EXIT_SOLVER,
    }
}

/// What a handler reports back: a one-line summary for stdout and the exit
/// code (nonzero for reportable outcomes such as an infeasible closed loop).
pub(crate) struct Report {
    summary: String,
    code: i32,
    seed: Option<u64>,
}

impl Report {
    fn ok(summary: impl Into<String>) -> Self {
        Report {
            summary: summary.into(),
            code: EXIT_OK,
            seed: None,
        }
    }
}

/// Loaded config plus the bytes it was parsed from.
pub(crate) struct Loaded {
    spec: drmpc_core::plant::ProblemSpec,
    path: PathBuf,
    bytes: Vec<u8>,
}

fn load(path: &Path) -> drmpc_core::Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: format!("config is not UTF-8: {e}"),
    })?;
    let spec = drmpc_core::plant::load_spec(text)?;
    Ok(Loaded {
        spec,
        path: path.to_path_buf(),
        bytes,
    })
}

fn set_workers(workers: Option<usize>) -> drmpc_core::Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidInput("--workers must be at least 1".into()));
        }
        // a second call in the same process (tests) keeps the first pool
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::debug!("worker pool already initialised: {e}");
        }
    }
    Ok(())
}

/// Runs one command and returns the process exit code. Errors and the
/// summary line go to stderr and stdout respectively.
pub fn run(cli: Cli) -> i32 {
    let start = Instant::now();
    let name = cli.command.name();
    let (common, out_path) = match &cli.command {
        Command::Precompute(a) => (&a.common, Some(&a.out)),
        Command::Solve(a) => (&a.common, Some(&a.out)),
        Command::Simulate(a) => (&a.common, Some(&a.out)),
        Command::Roa(a) => (&a.common, Some(&a.out)),
        Command::Compare(a) => (&a.common, Some(&a.out)),
        Command::Check(a) => (&a.common, a.out.as_ref()),
    };
    let parameters = match &cli.command {
        Command::Precompute(a) => serde_json::to_value(a),
        Command::Solve(a) => serde_json::to_value(a),
        Command::Simulate(a) => serde_json::to_value(a),
        Command::Roa(a) => serde_json::to_value(a),
        Command::Compare(a) => serde_json::to_value(a),
        Command::Check(a) => serde_json::to_value(a),
    }
    .unwrap_or(serde_json::Value::Null);

    let prepared = set_workers(common.workers).and_then(|_| load(&common.config)).and_then(|loaded| {
        let out = out_path.map(|p| OutputDir::create(p)).transpose()?;
        Ok((loaded, out))
    });
    let (loaded, mut out) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("drmpc {name}: {e}");
            return exit_code(&e);
        }
    };
    log::info!("{name}: config {} (n = {}, m = {})", loaded.path.display(), loaded.spec.n(), loaded.spec.m());

    let result = match &cli.command {
        Command::Precompute(a) => commands::precompute(&loaded, a, out.as_mut().expect("out")),
        Command::Solve(a) => commands::solve(&loaded, a, out.as_mut().expect("out")),
        Command::Simulate(a) => commands::simulate(&loaded, a, out.as_mut().expect("out")),
        Command::Roa(a) => commands::roa(&loaded, a, out.as_mut().expect("out")),
        Command::Compare(a) => commands::compare(&loaded, a, out.as_mut().expect("out")),
        Command::Check(a) => check::run(&loaded, a, out.as_mut()),
    };
    let (code, seed) = match result {
        Ok(report) => {
            println!("{}", report.summary);
            (report.code, report.seed)
        }
        Err(e) => {
            eprintln!("drmpc {name}: {e}");
            (exit_code(&e), None)
        }
    };
    if let Some(out) = &out {
        let mut manifest = RunManifest::new(name, &loaded.path, &loaded.bytes, parameters);
        manifest.seed = seed;
        manifest.duration_s = start.elapsed().as_secs_f64();
        manifest.exit_code = code;
        if let Err(e) = out.finish(manifest) {
            eprintln!("drmpc {name}: cannot write manifest: {e}");
            return if code == EXIT_OK { exit_code(&e) } else { code };
        }
    }
    code
}
