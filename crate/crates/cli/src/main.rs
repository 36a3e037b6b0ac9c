//! `cascadesim` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (usage, config or system
//! validation), 2 some scenario chains failed, 3 fatal error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascadesim_core::engine::{self, EngineError, RunConfig, RunSummary, ScenarioSource, FCF_FILE};
use cascadesim_core::scenario::{generate, ParModel};
use cascadesim_core::store::{self, Aggregate, Query, Store};
use cascadesim_core::system::{load_system, LoadError};
use cascadesim_core::Layer;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const STAMP_FILE: &str = "stamp.json";

#[derive(Parser)]
#[command(name = "cascadesim", version, about = "Multiscale hydrothermal scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a run config, its system and its scenario model.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        /// Validate only this system file.
        #[arg(long, conflicts_with = "config")]
        system: Option<PathBuf>,
    },
    /// Generate the scenario set a run would use and write it to a file.
    GenScenarios {
        #[command(flatten)]
        run: RunArgs,
        /// Output file; `.csv` writes CSV, anything else the binary format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the future cost function only.
    Sddp {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build the policy and simulate every scenario chain.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Build every problem without solving.
        #[arg(long)]
        dry_run: bool,
        /// Continue chains from their checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Filter and aggregate stored results.
    Query {
        #[command(flatten)]
        sel: Selection,
        /// Reduce across scenarios: none, sum, mean or pNN (quantile).
        #[arg(long, default_value = "none")]
        agg: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        export: Format,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write stored records as CSV.
    Export {
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Number of scenario chains.
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    hours: Option<usize>,
    /// Set every forecast dispersion target to zero.
    #[arg(long)]
    perfect_forecast: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Config override as a dotted key and a JSON value, e.g.
    /// `--set sddp.max_iterations=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Selection {
    /// Store directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Take the store directory from this run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    /// Comma-separated layer names, or `all` for every decision layer.
    #[arg(long)]
    layers: Option<String>,
    /// Comma-separated scenario indices.
    #[arg(long)]
    scenarios: Option<String>,
    /// Comma-separated entity ids.
    #[arg(long)]
    entities: Option<String>,
    /// Half-open hour range `FROM..TO`.
    #[arg(long)]
    hours: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Json,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Fatal(String),
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Invalid(_) | EngineError::System(_) => Failure::Invalid(e.to_string()),
            other => Failure::Fatal(other.to_string()),
        }
    }
}

fn fatal(e: impl std::fmt::Display) -> Failure {
    Failure::Fatal(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASCADESIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            if json {
                println!("{}", json!({ "status": "invalid", "error": msg }));
            }
            ExitCode::from(1)
        }
        Err(Failure::Fatal(msg)) => {
            eprintln!("fatal: {msg}");
            if json {
                println!("{}", json!({ "status": "error", "error": msg }));
            }
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    let json = cli.json;
    match cli.command {
        Command::Validate { run, system } => validate(run, system, json),
        Command::GenScenarios { run, out } => gen_scenarios(run, out, json),
        Command::Sddp { run } => sddp(run, json),
        Command::Simulate { run, dry_run, resume } => simulate(run, dry_run, resume, json),
        Command::Query { sel, agg, export, out } => query(sel, &agg, export, out, json),
        Command::Export { sel, out } => export(sel, out, json),
    }
}

/// Sets `key` (dotted path) in a JSON object, creating objects on the way.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Invalid(format!("override {spec:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::Invalid(format!("override {key}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

/// The effective config: file, then `--set` overrides, then flags. Also
/// returns the stamp recording where each setting came from.
fn load_config(run: &RunArgs) -> Result<(RunConfig, Value), Failure> {
    let path = run.config.as_ref().ok_or_else(|| Failure::Invalid("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    for o in &run.overrides {
        apply_override(&mut value, o)?;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = RunConfig::from_value(value, base).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut flags = serde_json::Map::new();
    if let Some(s) = run.seed {
        cfg.seed = s;
        flags.insert("seed".into(), json!(s));
    }
    if let Some(w) = run.workers {
        cfg.workers = w;
        flags.insert("workers".into(), json!(w));
    }
    if let Some(n) = run.scenarios {
        cfg.num_scenarios = n;
        flags.insert("scenarios".into(), json!(n));
    }
    if let Some(h) = run.hours {
        cfg.hours = h;
        flags.insert("hours".into(), json!(h));
    }
    if run.perfect_forecast {
        cfg.perfect_forecast = true;
        flags.insert("perfect_forecast".into(), json!(true));
    }
    if let Some(d) = &run.output_dir {
        cfg.output_dir = d.clone();
        flags.insert("output_dir".into(), json!(d));
    }
    cfg.check()?;
    let stamp = json!({
        "config_file": path,
        "overrides": run.overrides,
        "flags": flags,
        "seed": cfg.seed,
        "effective": cfg,
    });
    Ok((cfg, stamp))
}

fn write_stamp(cfg: &RunConfig, stamp: &Value) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.output_dir).map_err(fatal)?;
    let text = serde_json::to_string_pretty(stamp).map_err(fatal)?;
    fs::write(cfg.output_dir.join(STAMP_FILE), text).map_err(fatal)
}

fn validate(run: RunArgs, system: Option<PathBuf>, json: bool) -> Result<u8, Failure> {
    let (path, cfg) = match system {
        Some(p) => (p, None),
        None => {
            let (cfg, _) = load_config(&run)?;
            (cfg.system.clone(), Some(cfg))
        }
    };
    let model = match load_system(&path) {
        Ok(m) => m,
        Err(LoadError::Validation(v)) => {
            for x in &v {
                eprintln!("{x}");
            }
            if json {
                let list: Vec<Value> = v.iter().map(|x| json!({ "entity": x.entity, "message": x.message })).collect();
                println!("{}", json!({ "status": "invalid", "violations": list }));
            }
            return Ok(1);
        }
        Err(e) => return Err(Failure::Invalid(e.to_string())),
    };
    if let Some(ScenarioSource::Model(p)) = cfg.as_ref().map(|c| &c.scenarios) {
        read_par(p)?.check().map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
    }
    if json {
        println!(
            "{}",
            json!({
                "status": "ok",
                "hydro": model.hydro.len(),
                "thermal": model.thermal.len(),
                "buses": model.network.buses.len(),
                "areas": model.areas.len(),
            })
        );
    } else {
        println!(
            "{}: valid ({} hydro, {} thermal, {} buses, {} areas)",
            path.display(),
            model.hydro.len(),
            model.thermal.len(),
            model.network.buses.len(),
            model.areas.len()
        );
    }
    Ok(0)
}

fn read_par(path: &Path) -> Result<ParModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn gen_scenarios(run: RunArgs, out: Option<PathBuf>, json: bool) -> Result<u8, Failure> {
    let (cfg, _) = load_config(&run)?;
    let set = match &cfg.scenarios {
        ScenarioSource::Model(p) => {
            generate(&read_par(p)?, cfg.num_scenarios, cfg.required_horizon(), cfg.seed).map_err(fatal)?
        }
        ScenarioSource::Set(p) => engine::read_set(p)?,
    };
    let out = out.unwrap_or_else(|| cfg.output_dir.join("scenarios.bin"));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(fatal)?;
    }
    let mut w = io::BufWriter::new(fs::File::create(&out).map_err(fatal)?);
    if out.extension().is_some_and(|e| e == "csv") {
        set.write_csv(&mut w).map_err(fatal)?;
    } else {
        set.write_binary(&mut w).map_err(fatal)?;
    }
    w.flush().map_err(fatal)?;
    if json {
        println!(
            "{}",
            json!({
                "status": "ok",
                "path": out,
                "series": set.keys().len(),
                "scenarios": set.num_scenarios(),
                "hours": set.horizon_hours(),
                "truncations": set.truncations,
            })
        );
    } else {
        println!(
            "wrote {} series x {} scenarios x {} hours to {} ({} clipped values)",
            set.keys().len(),
            set.num_scenarios(),
            set.horizon_hours(),
            out.display(),
            set.truncations
        );
    }
    Ok(0)
}

fn sddp(run: RunArgs, json: bool) -> Result<u8, Failure> {
    let (mut cfg, stamp) = load_config(&run)?;
    cfg.dry_run = false;
    cfg.resume = false;
    let prep = engine::prepare(&cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(fatal)?;
    fs::write(cfg.output_dir.join(FCF_FILE), prep.fcf.to_text()).map_err(fatal)?;
    write_stamp(&cfg, &stamp)?;
    if json {
        println!(
            "{}",
            json!({
                "status": "ok",
                "weeks": prep.fcf.num_weeks(),
                "cuts": prep.fcf.num_cuts(),
                "seconds": prep.sddp_seconds,
                "log": prep.sddp_log,
            })
        );
    } else {
        for it in &prep.sddp_log.iterations {
            println!(
                "iteration {:>3}  lower bound {:>16.2}  forward mean {:>16.2}  cuts {}",
                it.iteration, it.lower_bound, it.forward_mean, it.total_cuts
            );
        }
        println!(
            "{} cuts over {} weeks in {:.1}s ({})",
            prep.fcf.num_cuts(),
            prep.fcf.num_weeks(),
            prep.sddp_seconds,
            prep.sddp_log.stop_reason
        );
    }
    Ok(0)
}

fn simulate(run: RunArgs, dry_run: bool, resume: bool, json: bool) -> Result<u8, Failure> {
    let (mut cfg, stamp) = load_config(&run)?;
    cfg.dry_run |= dry_run;
    cfg.resume |= resume;
    let summary = engine::run(&cfg)?;
    write_stamp(&cfg, &stamp)?;
    if json {
        println!("{}", serde_json::to_string(&summary).map_err(fatal)?);
    } else {
        print_summary(&cfg, &summary);
    }
    for f in &summary.failures {
        eprintln!("scenario {} failed: {}", f.scenario, f.error);
    }
    Ok(if summary.failures.is_empty() { 0 } else { 2 })
}

fn print_summary(cfg: &RunConfig, s: &RunSummary) {
    println!(
        "{} scenarios x {} hours from hour {}{} on {} workers",
        s.scenarios,
        s.hours,
        s.start_hour,
        if s.dry_run { " (dry run)" } else { "" },
        s.workers
    );
    println!(
        "problems: {} total ({} week-ahead, {} day-ahead, {} hour-ahead, {} true-up)",
        s.problems.total(),
        s.problems.week_ahead,
        s.problems.day_ahead,
        s.problems.hour_ahead,
        s.problems.true_up
    );
    for c in &s.chains {
        println!(
            "  scenario {:>4}: {} problems, thermal cost {:.2}",
            c.scenario,
            c.problems.total(),
            c.thermal_cost
        );
    }
    println!(
        "policy: {} cuts, {:.1}s; simulation {:.1}s; {} records in {}",
        s.policy.cuts,
        s.timings.policy_seconds,
        s.timings.simulate_seconds,
        s.records,
        cfg.output_dir.display()
    );
}

fn list<T>(raw: &Option<String>, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>, Failure> {
    raw.as_ref()
        .map(|s| {
            s.split(',')
                .map(|x| parse(x.trim()).ok_or_else(|| Failure::Invalid(format!("bad {what}: {x:?}"))))
                .collect()
        })
        .transpose()
}

fn selection(sel: &Selection) -> Result<(Store, Query), Failure> {
    let dir = match (&sel.output_dir, &sel.config) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => RunConfig::load(c)?.output_dir,
        (None, None) => return Err(Failure::Invalid("--output-dir or --config is required".into())),
    };
    if !dir.is_dir() {
        return Err(Failure::Invalid(format!("{} is not a directory", dir.display())));
    }
    let layers = match sel.layers.as_deref() {
        Some("all") => Some(vec![Layer::WeekAhead, Layer::DayAhead, Layer::HourAhead, Layer::TrueUp]),
        _ => list(&sel.layers, "layer", Layer::parse)?,
    };
    let hours = sel
        .hours
        .as_ref()
        .map(|h| {
            let (a, b) = h.split_once("..").ok_or_else(|| Failure::Invalid(format!("bad hour range {h:?}")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(Failure::Invalid(format!("bad hour range {h:?}"))),
            }
        })
        .transpose()?;
    let q = Query {
        scenarios: list(&sel.scenarios, "scenario", |s| s.parse().ok())?,
        layers,
        hours,
        entities: list(&sel.entities, "entity", |s| Some(s.to_string()))?,
        metrics: sel.metric.as_ref().map(|m| vec![m.clone()]),
    };
    Ok((Store::open(&dir).map_err(fatal)?, q))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).map_err(fatal)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn query(sel: Selection, agg: &str, export: Format, out: Option<PathBuf>, json: bool) -> Result<u8, Failure> {
    let agg = Aggregate::parse(agg).ok_or_else(|| Failure::Invalid(format!("bad aggregate {agg:?}")))?;
    let (store, q) = selection(&sel)?;
    let records = store.query(&q).map_err(fatal)?;
    let mut w = output(&out)?;
    match export {
        Format::Svg => {
            let metric = sel.metric.as_deref().unwrap_or("value");
            let series = store::layer_series(&records, agg);
            w.write_all(store::render_svg(&series, metric, metric).as_bytes()).map_err(fatal)?;
        }
        Format::Csv if agg == Aggregate::None => store::write_csv(&records, &mut w).map_err(fatal)?,
        Format::Csv => {
            writeln!(w, "layer,hour,value").map_err(fatal)?;
            for (layer, pts) in store::layer_series(&records, agg) {
                for (h, v) in pts {
                    writeln!(w, "{},{h},{v}", layer.name()).map_err(fatal)?;
                }
            }
        }
        Format::Json => {
            let v = if agg == Aggregate::None {
                serde_json::to_value(&records).map_err(fatal)?
            } else {
                let series: serde_json::Map<String, Value> = store::layer_series(&records, agg)
                    .into_iter()
                    .map(|(l, pts)| (l.name().to_string(), json!(pts)))
                    .collect();
                Value::Object(series)
            };
            serde_json::to_writer(&mut w, &v).map_err(fatal)?;
            writeln!(w).map_err(fatal)?;
        }
    }
    w.flush().map_err(fatal)?;
    if json && out.is_some() {
        println!("{}", json!({ "status": "ok", "records": records.len() }));
    }
    Ok(0)
}

fn export(sel: Selection, out: Option<PathBuf>, json: bool) -> Result<u8, Failure> {
    let (store, q) = selection(&sel)?;
    let records = store.query(&q).map_err(fatal)?;
    let mut w = output(&out)?;
    store::write_csv(&records, &mut w).map_err(fatal)?;
    w.flush().map_err(fatal)?;
    if json && out.is_some() {
        println!("{}", json!({ "status": "ok", "records": records.len() }));
    } else if out.is_some() {
        eprintln!("{} records exported", records.len());
    }
    Ok(0)
}
