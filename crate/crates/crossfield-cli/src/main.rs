//! Scenario runner: builds certified cross-section fields for the bundled
//! (or user-supplied) flows and runs the requested diagnostics, writing
//! reproducible reports plus a hashed manifest.

mod scenario;

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use crossfield::config::{KeyValues, ScenarioConfig};
use crossfield::error::Error;

use scenario::{run_scenario, scenario_out_dir, RunOutcome};

const BUNDLED: &[(&str, &str, &str)] = &[
    (
        "circle",
        include_str!("../scenarios/circle.cfg"),
        "unit-speed rotation of the circle: singleton sections, positive expansive",
    ),
    (
        "torus_linear",
        include_str!("../scenarios/torus_linear.cfg"),
        "irrational translation flow on the flat torus: stable everywhere, not expansive",
    ),
    (
        "cat_suspension",
        include_str!("../scenarios/cat_suspension.cfg"),
        "hyperbolic toral suspension: expansive at horizon with contracting stable sets",
    ),
];

fn usage() -> &'static str {
    "\
crossfield - cross-section fields and expansivity diagnostics for flows

USAGE:
  crossfield run <SCENARIO> [OPTIONS]
  crossfield list

SCENARIO:
  a bundled name (see `crossfield list`) or a path to a .cfg file
  (key-value grammar: `section.key = value`, `#` comments)

OPTIONS:
  --out <DIR>        output directory (default: $CROSSFIELD_OUT or ./runs)
  --seed <U64>       override run.seed
  --threads <N>      worker threads (default: all cores)
  --resolution <R>   override pipeline.resolution

EXIT CODES:
  0  success
  1  diagnostics disagree with the expectations declared in the config
  2  configuration or usage error
  3  pipeline precondition failure (stage named on stderr)
"
}

struct RunArgs {
    scenario: String,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    resolution: Option<f64>,
}

fn parse_run_args(args: &mut env::Args) -> Result<RunArgs, String> {
    let mut run = RunArgs { scenario: String::new(), out: None, seed: None, threads: None, resolution: None };
    let mut scenario_set = false;
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--help" | "-h" => {
                println!("{}", usage());
                std::process::exit(0);
            }
            "--out" => {
                let v = args.next().ok_or("missing value for --out")?;
                run.out = Some(PathBuf::from(v));
            }
            "--seed" => {
                let v = args.next().ok_or("missing value for --seed")?;
                run.seed = Some(v.parse().map_err(|e| format!("--seed: {e}"))?);
            }
            "--threads" => {
                let v = args.next().ok_or("missing value for --threads")?;
                run.threads = Some(v.parse().map_err(|e| format!("--threads: {e}"))?);
            }
            "--resolution" => {
                let v = args.next().ok_or("missing value for --resolution")?;
                run.resolution = Some(v.parse().map_err(|e| format!("--resolution: {e}"))?);
            }
            other if other.starts_with('-') => return Err(format!("unknown option {other}")),
            other => {
                if scenario_set {
                    return Err("multiple scenarios given".into());
                }
                run.scenario = other.to_string();
                scenario_set = true;
            }
        }
    }
    if !scenario_set {
        return Err("missing scenario name or path".into());
    }
    Ok(run)
}

fn load_config(name_or_path: &str) -> Result<(String, KeyValues), String> {
    for (name, text, _) in BUNDLED {
        if *name == name_or_path {
            return Ok((
                name.to_string(),
                KeyValues::parse(text).map_err(|e| e.to_string())?,
            ));
        }
    }
    let path = PathBuf::from(name_or_path);
    if !path.exists() {
        return Err(format!(
            "`{name_or_path}` is neither a bundled scenario nor an existing file"
        ));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".to_string());
    let kv = KeyValues::read_file(&path).map_err(|e| e.to_string())?;
    Ok((stem, kv))
}

fn cmd_list() -> ExitCode {
    println!("bundled scenarios:");
    for (name, _, desc) in BUNDLED {
        println!("  {name:<16} {desc}");
    }
    ExitCode::SUCCESS
}

fn cmd_run(mut args: env::Args) -> ExitCode {
    let run = match parse_run_args(&mut args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}\n\n{}", usage());
            return ExitCode::from(2);
        }
    };
    if let Some(n) = run.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let (name, mut kv) = match load_config(&run.scenario) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = run.seed {
        kv.set("run.seed", seed);
    }
    if let Some(res) = run.resolution {
        kv.set("pipeline.resolution", res);
    }
    let cfg = match ScenarioConfig::from_kv(kv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let base = run
        .out
        .or_else(|| env::var_os("CROSSFIELD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let out_dir = scenario_out_dir(&base, &name);
    println!("running `{name}` -> {}", out_dir.display());
    match run_scenario(&cfg, &out_dir) {
        Ok(artifacts) => {
            for (file, desc) in &artifacts.files {
                println!("  wrote {file:<22} {desc}");
            }
            println!("  wrote manifest.txt");
            match artifacts.outcome {
                RunOutcome::Ok => ExitCode::SUCCESS,
                RunOutcome::ExpectationMismatch(lines) => {
                    for l in lines {
                        eprintln!("expectation mismatch: {l}");
                    }
                    ExitCode::from(1)
                }
            }
        }
        Err(Error::PipelineStage { stage, source }) => {
            eprintln!("pipeline stage `{stage}` failed: {source}");
            ExitCode::from(3)
        }
        Err(Error::NotCertified(msg)) => {
            eprintln!("certification failed: {msg}");
            ExitCode::from(3)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let mut args = env::args();
    let _bin = args.next();
    match args.next().as_deref() {
        Some("list") => cmd_list(),
        Some("run") => cmd_run(args),
        Some("--help") | Some("-h") => {
            println!("{}", usage());
            ExitCode::SUCCESS
        }
        Some(other) => {
            eprintln!("unknown subcommand `{other}`\n\n{}", usage());
            ExitCode::from(2)
        }
        None => {
            eprintln!("{}", usage());
            ExitCode::from(2)
        }
    }
}
