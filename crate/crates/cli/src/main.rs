//! `tnr`: teach, repeat, bench, replay and serve from the command line.
//!
//! Failures print one JSON object `{"error", "message", "exit_code"}` on
//! stderr and exit with the code listed in [`Failure::code`].

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tnr_core::bench::{results_table, run_suite, telemetry_file_name, BenchRow, Suite};
use tnr_core::bridge::{serve, BridgeConfig, Pacing};
use tnr_core::engine::{run_repeat, run_teach, RunOptions};
use tnr_core::exec::Exec;
use tnr_core::metrics::summarize;
use tnr_core::scenario::Scenario;
use tnr_core::teach::TeachPath;
use tnr_core::telemetry::parse_csv;
use tnr_core::Error;

#[derive(Parser)]
#[command(name = "tnr", version, about = "Teach-and-repeat driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a scenario value, e.g. `velocity.max_abs_vel=5`. Repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the scenario road with the scripted driver and record the path.
    Teach {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Output directory for path.csv and teach.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Repeat a recorded path; writes telemetry.csv and summary.json.
    Repeat {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Path CSV written by `teach`.
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Also write every labeled LiDAR scan to <out>/scans/.
        #[arg(long)]
        dump_scans: bool,
    },
    /// Run a suite of teach-and-repeat runs and tabulate per-bin errors.
    Bench {
        /// Suite JSON: {"runs": [{name, scenario, params, seed, bin}]}.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed of every run.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
        /// Run the suite entries one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute the summary of a stored telemetry CSV.
    Replay {
        /// Telemetry CSV written by `repeat` or `bench`.
        telemetry: PathBuf,
        /// Write the summary JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Serve one operator session over TCP (newline-delimited JSON).
    Serve {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Repeat this path; without it the session starts with teaching.
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        /// Directory for the recorded path and the run telemetry.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Advance with wall-clock time instead of waiting for `step` frames.
        #[arg(long)]
        realtime: bool,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    /// Stable exit codes per error identifier.
    fn code(&self) -> u8 {
        match self.kind {
            "scenario_not_found" => 2,
            "path_mismatch" => 3,
            "corrupt_telemetry" => 4,
            "output_exists" => 5,
            "invalid_input" => 6,
            "run_failed" => 7,
            "io_error" => 8,
            "protocol_error" => 9,
            _ => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::PathMismatch(_) => "path_mismatch",
            Error::Format(_) => "corrupt_telemetry",
            Error::Validation(_) | Error::Scenario(_) | Error::UnknownKey(_) | Error::Json(_) => "invalid_input",
            Error::PathTooShort(_) | Error::TeachAborted(_) | Error::RunAborted { .. } | Error::LocalizationLost => {
                "run_failed"
            }
            Error::Protocol(_) => "protocol_error",
            Error::Io(_) => "io_error",
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io_error", e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_scenario(args: &ScenarioArgs) -> CliResult<Scenario> {
    if !args.scenario.is_file() {
        return Err(Failure::new("scenario_not_found", format!("no scenario file at {}", args.scenario.display())));
    }
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    for p in &args.params {
        sc.apply_override(p)?;
    }
    Ok(sc)
}

fn read_text(path: &Path, what: &str) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::new("io_error", format!("cannot read {what} {}: {e}", path.display())))
}

/// Refuse to clobber existing outputs unless forced.
fn check_outputs(files: &[PathBuf], force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    match files.iter().find(|f| f.exists()) {
        Some(f) => Err(Failure::new("output_exists", format!("{} exists, pass --force to overwrite", f.display()))),
        None => Ok(()),
    }
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::new("io_error", format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn teach(sc_args: &ScenarioArgs, out: &Path, force: bool) -> CliResult<()> {
    let sc = load_scenario(sc_args)?;
    let path_file = out.join("path.csv");
    let trace_file = out.join("teach.csv");
    check_outputs(&[path_file.clone(), trace_file.clone()], force)?;
    let outcome = run_teach(&sc)?;
    write(&path_file, &outcome.path.to_csv())?;
    write(&trace_file, &outcome.trace)?;
    let report = json!({
        "path": path_file,
        "points": outcome.path.len(),
        "length": outcome.path.total_length(),
        "duration": outcome.duration,
    });
    println!("{report}");
    Ok(())
}

fn load_path(path: &Path) -> CliResult<TeachPath> {
    Ok(TeachPath::from_csv(&read_text(path, "path file")?)?)
}

fn repeat(sc_args: &ScenarioArgs, path: &Path, out: &Path, force: bool, dump_scans: bool) -> CliResult<()> {
    let sc = load_scenario(sc_args)?;
    let teach_path = load_path(path)?;
    sc.check_path(&teach_path)?;
    let tel = out.join("telemetry.csv");
    let summary_file = out.join("summary.json");
    check_outputs(&[tel.clone(), summary_file.clone()], force)?;
    let mut opts = RunOptions::default();
    if dump_scans {
        let dir = out.join("scans");
        std::fs::create_dir_all(&dir)?;
        opts.scan_dump_dir = Some(dir);
    }
    let outcome = run_repeat(&sc, &teach_path, opts)?;
    write(&tel, &outcome.telemetry_csv())?;
    write(&summary_file, &pretty(&outcome.summary))?;
    println!("{}", serde_json::to_string(&outcome.summary).expect("serializable"));
    Ok(())
}

fn bench(suite_file: &Path, out: &Path, seed: Option<u64>, force: bool, sequential: bool) -> CliResult<()> {
    let text = read_text(suite_file, "suite")?;
    let mut suite = Suite::from_json(&text).map_err(|e| Failure::new("invalid_input", format!("bad suite: {e}")))?;
    if let Some(s) = seed {
        suite.runs.iter_mut().for_each(|r| r.seed = Some(s));
    }
    let base = suite_file.parent().unwrap_or(Path::new("."));
    for r in &suite.runs {
        let p = base.join(&r.scenario);
        if !p.is_file() {
            return Err(Failure::new("scenario_not_found", format!("run `{}`: no scenario file at {}", r.name, p.display())));
        }
    }
    let mut outputs = vec![out.join("results.txt"), out.join("results.json")];
    for r in &suite.runs {
        let csv = telemetry_file_name(&r.name);
        outputs.push(out.join(&csv));
        outputs.push(out.join(csv.replace(".csv", ".summary.json")));
    }
    check_outputs(&outputs, force)?;
    let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
    let runs = run_suite(&suite, base, exec)?;
    for run in &runs {
        let csv = telemetry_file_name(&run.row.name);
        write(&out.join(&csv), &run.telemetry_csv)?;
        write(&out.join(csv.replace(".csv", ".summary.json")), &pretty(&run.summary))?;
    }
    let rows: Vec<BenchRow> = runs.into_iter().map(|r| r.row).collect();
    let table = results_table(&rows);
    write(&out.join("results.txt"), &table)?;
    write(&out.join("results.json"), &pretty(&rows))?;
    print!("{table}");
    Ok(())
}

fn replay(telemetry: &Path, out: Option<&Path>, force: bool) -> CliResult<()> {
    let text = read_text(telemetry, "telemetry")?;
    let parsed = parse_csv(&text)?;
    if parsed.truncated {
        let warning = json!({
            "warning": "truncated_telemetry",
            "message": format!("last row of {} is incomplete, summarizing {} complete ticks", telemetry.display(), parsed.records.len()),
        });
        eprintln!("{warning}");
    }
    let summary = summarize(&parsed.records);
    match out {
        Some(p) => {
            check_outputs(&[p.to_path_buf()], force)?;
            write(p, &pretty(&summary))?;
        }
        None => print!("{}", pretty(&summary)),
    }
    Ok(())
}

struct ServeArgs<'a> {
    path: Option<&'a Path>,
    port: u16,
    out: Option<&'a Path>,
    force: bool,
    realtime: bool,
}

fn serve_cmd(sc_args: &ScenarioArgs, a: ServeArgs) -> CliResult<()> {
    let sc = load_scenario(sc_args)?;
    let teach_path = a.path.map(load_path).transpose()?;
    if let Some(p) = &teach_path {
        sc.check_path(p)?;
    }
    let mut cfg = BridgeConfig { pacing: if a.realtime { Pacing::Realtime } else { Pacing::Lockstep }, ..Default::default() };
    if let Some(dir) = a.out {
        let mut files = vec![dir.join("telemetry.csv"), dir.join("summary.json")];
        if teach_path.is_none() {
            files.push(dir.join("path.csv"));
            cfg.path_out = Some(dir.join("path.csv"));
        }
        check_outputs(&files, a.force)?;
        std::fs::create_dir_all(dir)?;
    }
    let listener = TcpListener::bind(("127.0.0.1", a.port))?;
    println!("{}", json!({"listening": listener.local_addr()?.to_string()}));
    let outcome = serve(&listener, sc, teach_path, cfg)?;
    if let (Some(dir), Some(run)) = (a.out, &outcome.repeat) {
        write(&dir.join("telemetry.csv"), &run.telemetry_csv())?;
        write(&dir.join("summary.json"), &pretty(&run.summary))?;
    }
    if let Some(run) = &outcome.repeat {
        println!("{}", serde_json::to_string(&run.summary).expect("serializable"));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Teach { sc, out, force } => teach(sc, out, *force),
        Command::Repeat { sc, path, out, force, dump_scans } => repeat(sc, path, out, *force, *dump_scans),
        Command::Bench { suite, out, seed, force, sequential } => bench(suite, out, *seed, *force, *sequential),
        Command::Replay { telemetry, out, force } => replay(telemetry, out.as_deref(), *force),
        Command::Serve { sc, path, port, out, force, realtime } => serve_cmd(
            sc,
            ServeArgs { path: path.as_deref(), port: *port, out: out.as_deref(), force: *force, realtime: *realtime },
        ),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code()}));
            ExitCode::from(f.code())
        }
    }
}
