//! Cube-side command lines: `<subcommand> <task> --<binding>=<path> ...`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fedeval_core::cube::{Backend, Capabilities, LaunchOutcome, LaunchRequest, RunError};

use crate::metrics::{evaluate, Confusion};
use crate::model::{self, LinearParams, PREDICTIONS_COLUMN};
use crate::prep::{self, PrepParams};
use crate::site::LABELS_FILE;
use crate::{contract, read_binary, write_binary, Error};

pub const CUBE_SUBCOMMANDS: [&str; 4] = [
    "cube-prep",
    "cube-model-majority",
    "cube-model-linear",
    "cube-metrics",
];

struct Bindings(BTreeMap<String, PathBuf>);

impl Bindings {
    fn parse(args: &[String]) -> Result<Self, Error> {
        let mut map = BTreeMap::new();
        for a in args {
            let Some((k, v)) = a.strip_prefix("--").and_then(|s| s.split_once('=')) else {
                return contract(format!("unexpected argument {a:?}"));
            };
            map.insert(k.to_owned(), PathBuf::from(v));
        }
        Ok(Bindings(map))
    }

    fn get(&self, name: &str) -> Result<&Path, Error> {
        match self.0.get(name) {
            Some(p) => Ok(p),
            None => contract(format!("missing --{name}")),
        }
    }

    fn text(&self, name: &str) -> Result<String, Error> {
        Ok(fs::read_to_string(self.get(name)?)?)
    }
}

fn dispatch(subcommand: &str, task: &str, b: &Bindings) -> Result<(), Error> {
    match (subcommand, task) {
        ("cube-prep", "prepare") => {
            let params = PrepParams::from_yaml(&b.text("parameters")?)?;
            prep::prepare(b.get("raw_data")?, b.get("prepared_data")?, &params)
        }
        ("cube-prep", "sanity_check") => prep::sanity_check(b.get("prepared_data")?).map(drop),
        ("cube-prep", "statistics") => {
            let stats = prep::statistics(b.get("prepared_data")?)?;
            fs::write(b.get("statistics")?, stats.to_yaml())?;
            Ok(())
        }
        ("cube-model-majority", "infer") => {
            let preds = model::majority(b.get("data")?)?;
            write_binary(b.get("predictions")?, PREDICTIONS_COLUMN, &preds)
        }
        ("cube-model-linear", "infer") => {
            let params = LinearParams::from_yaml(&b.text("parameters")?)?;
            let preds = model::linear(b.get("data")?, &params)?;
            write_binary(b.get("predictions")?, PREDICTIONS_COLUMN, &preds)
        }
        ("cube-metrics", "evaluate") => {
            let preds = read_binary(b.get("predictions")?, PREDICTIONS_COLUMN)?;
            let labels = read_binary(&b.get("labels")?.join(LABELS_FILE), "label")?;
            let report = evaluate(&Confusion::from_pairs(&preds, &labels)?);
            fs::write(b.get("results")?, report.to_yaml())?;
            Ok(())
        }
        _ => contract(format!("{subcommand}: unknown task {task:?}")),
    }
}

/// Runs one cube task and returns the process exit code.
pub fn run_cube(subcommand: &str, args: &[String]) -> i32 {
    let Some((task, rest)) = args.split_first() else {
        eprintln!("{subcommand}: missing task name");
        return 2;
    };
    let result = Bindings::parse(rest).and_then(|b| dispatch(subcommand, task, &b));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{subcommand} {task}: {e}");
            e.exit_code()
        }
    }
}

/// Runs refbench cube entrypoints on a thread of the calling process. For
/// tests and demos: it offers no isolation at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct InProcessBackend;

impl Backend for InProcessBackend {
    fn id(&self) -> &str {
        "in-process"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            can_deny_network: false,
            can_limit_resources: false,
        }
    }

    fn launch(&self, req: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError> {
        let entry = &req.cube.manifest().entrypoint;
        let sub = match entry.as_slice() {
            [bin, sub]
                if bin == crate::bundle::BINARY && CUBE_SUBCOMMANDS.contains(&sub.as_str()) =>
            {
                sub
            }
            _ => return Err(RunError::EntrypointNotFound(entry.join(" "))),
        };
        let mut args = vec![req.task.to_string()];
        for m in req.readonly_mounts.iter().chain(&req.writable_mounts) {
            args.push(format!("--{}={}", m.binding, m.host_path.display()));
        }
        if let Some(p) = &req.parameters {
            args.push(format!("--parameters={}", p.display()));
        }
        let exit_code = run_cube(sub, &args);
        fs::write(
            &req.log_path,
            format!("{sub} {}: exit {exit_code}\n", req.task),
        )?;
        Ok(LaunchOutcome {
            exit_code,
            timed_out: false,
        })
    }
}
