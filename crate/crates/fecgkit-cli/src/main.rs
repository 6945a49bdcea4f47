//! `fecgkit` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use fecgkit::bench::{ekfd_suite, extraction_suite, tuned_ekfd_config, BENCH_SEED};
use fecgkit::detection::detect_qrs;
use fecgkit::extraction::{fuse, fuse_default_chains, parse_chain, run_pipeline, PipelineSpec};
use fecgkit::fusion::{pla_em, AnnotationTable, DEFAULT_MAX_ITER, DEFAULT_TOL};
use fecgkit::kalman::EkfdConfig;
use fecgkit::quality::{parse_kinds, sqi_windows};
use fecgkit::scoring::{challenge_scores, f1_se_ppv, hr_match, match_beats, ScoreReport, MATCH_WINDOW_MS};
use fecgkit::signal::{read_annotations, read_signal_csv, write_annotations, write_signal_csv, BeatAnnotations};
use fecgkit::simulator::{simulate, DipoleScene, ScenarioConfig};
use fecgkit::{Error, Result};

const SEED_ENV: &str = "FECGKIT_SEED";
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const HR_TOLERANCE_BPM: f64 = 5.0;

#[derive(Parser)]
#[command(name = "fecgkit", version, about = "Fetal ECG simulation, extraction and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mixture with ground truth.
    Simulate(SimulateArgs),
    /// Cancel the maternal ECG and detect fetal beats.
    Extract(ExtractArgs),
    /// Detect beats on one channel.
    Detect(DetectArgs),
    /// Compare a test annotation series against a reference.
    Score(ScoreArgs),
    /// Windowed signal-quality indices.
    Sqi(SqiArgs),
    /// EM fusion of several annotators' labels.
    FuseLabels(FuseLabelsArgs),
    /// Regenerate a benchmark experiment.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a gnuplot script for the mixture.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Method chain such as `TSpca-ICA`, or `FUSE`.
    #[arg(long, default_value = "TSpca")]
    method: String,
    /// Pipeline overrides as inline JSON or a path to a JSON file.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long = "refractory-ms", default_value_t = 150.0)]
    refractory_ms: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 1000)]
    fs: u32,
    /// Comma-separated subset of f1,hr,e1,e2,e3,snr.
    #[arg(long, default_value = "f1,hr,e1,e2")]
    events: String,
    /// Record length for the heart-rate segment scores (default one minute).
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    #[arg(long = "qt-ref")]
    qt_ref: Option<f64>,
    #[arg(long = "qt-test")]
    qt_test: Option<f64>,
    /// Signal CSVs for `snr`: reference and extracted fetal signals.
    #[arg(long = "snr-ref")]
    snr_ref: Option<PathBuf>,
    #[arg(long = "snr-test")]
    snr_test: Option<PathBuf>,
}

#[derive(Args)]
struct SqiArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long = "window-s", default_value_t = 10.0)]
    window_s: f64,
    #[arg(long = "overlap-s", default_value_t = 9.0)]
    overlap_s: f64,
    /// Restrict to one channel.
    #[arg(long)]
    channel: Option<usize>,
}

#[derive(Args)]
struct FuseLabelsArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Feature CSV; an intercept column is prepended. Intercept-only when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// `ekfd` or `extraction`.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Dual-filter overrides (JSON) for the `ekfd` suite.
    #[arg(long)]
    params: Option<String>,
    /// Directory for CSV data and a gnuplot script.
    #[arg(long = "plot-dir")]
    plot_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON values serialise"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fecgkit: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::InvalidInput(_) | Error::Parse(_) => EXIT_VALIDATION,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Score(a) => cmd_score(a),
        Command::Sqi(a) => cmd_sqi(a),
        Command::FuseLabels(a) => cmd_fuse_labels(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Parse(e.to_string()))
}

/// Flag, then `FECGKIT_SEED`, then `None`.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| invalid(format!("{SEED_ENV} is not an integer: '{s}'"))),
        Err(_) => Ok(None),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Inline JSON object, or the contents of the named file.
fn json_arg(arg: &str) -> Result<Value> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))
    } else {
        read_json(Path::new(arg))
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn with_overrides<T: Serialize + serde::de::DeserializeOwned>(base: &T, patch: Option<Value>) -> Result<T> {
    let Some(patch) = patch else {
        return serde_json::from_value(to_value(base)?).map_err(|e| Error::Parse(e.to_string()));
    };
    if !patch.is_object() {
        return Err(invalid("parameter overrides must be a JSON object"));
    }
    let mut v = to_value(base)?;
    merge(&mut v, patch);
    serde_json::from_value(v).map_err(|e| invalid(format!("bad parameters: {e}")))
}

fn cmd_simulate(a: SimulateArgs) -> Result<Value> {
    let mut cfg: ScenarioConfig = match &a.config {
        Some(p) => serde_json::from_value(read_json(p)?).map_err(|e| invalid(format!("bad scenario: {e}")))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = resolve_seed(a.seed)? {
        cfg.seed = seed;
    }
    let sim = simulate(&cfg, &DipoleScene::default())?;
    sim.write_dir(&a.out)?;
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(a.out.join("scenario.json"), text + "\n")?;
    if a.plot {
        write_signal_plot(&a.out.join("mixture.gp"), "mixture.csv", sim.mixture.n_channels())?;
    }
    Ok(json!({
        "out": a.out,
        "seed": cfg.seed,
        "fs": sim.mixture.fs(),
        "n_samples": sim.mixture.len(),
        "n_channels": sim.mixture.n_channels(),
        "n_mqrs": sim.mqrs().len(),
        "n_fqrs": sim.fqrs().len(),
    }))
}

fn write_signal_plot(path: &Path, csv: &str, n_channels: usize) -> Result<()> {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 'sample'\nplot ");
    let series: Vec<String> = (1..=n_channels)
        .map(|c| format!("'{csv}' every ::1 using 0:{c} with lines"))
        .collect();
    s.push_str(&series.join(", \\\n     "));
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<Value> {
    let record = read_signal_csv(&a.input)?;
    let mut spec: PipelineSpec = with_overrides(&PipelineSpec::default(), a.params.as_deref().map(json_arg).transpose()?)?;
    if let Some(seed) = resolve_seed(a.seed)? {
        spec.seed = seed;
    }
    fs::create_dir_all(&a.out)?;
    if a.method.eq_ignore_ascii_case("FUSE") {
        let out = fuse(&record, &spec, &fuse_default_chains())?;
        let fqrs = out.fqrs.clone().unwrap_or_else(|| BeatAnnotations::empty(record.fs()));
        write_annotations(a.out.join("fqrs.txt"), &fqrs)?;
        let winner = out.winner.map(|w| &out.candidates[w]);
        let report = json!({
            "method": "FUSE",
            "SMI": winner.map(|w| w.smi),
            "BCM": winner.map(|w| w.bcm),
            "chosen_channel": winner.map(|w| w.channel),
            "winner": winner,
            "n_fqrs": fqrs.len(),
            "low_confidence": out.low_confidence,
            "candidates": out.candidates,
            "failures": out.failures,
        });
        fs::write(a.out.join("report.json"), pretty(&report)?)?;
        return Ok(report);
    }
    spec.chain = parse_chain(&a.method)?;
    let out = run_pipeline(&record, &spec)?;
    write_signal_csv(a.out.join("residuals.csv"), &out.residuals.residuals)?;
    write_annotations(a.out.join("fqrs.txt"), &out.fqrs)?;
    write_annotations(a.out.join("mqrs.txt"), &out.mqrs)?;
    let report = to_value(&out.report)?;
    fs::write(a.out.join("report.json"), pretty(&report)?)?;
    Ok(report)
}

fn pretty(v: &Value) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Parse(e.to_string()))
}

fn cmd_detect(a: DetectArgs) -> Result<Value> {
    let record = read_signal_csv(&a.input)?;
    if a.channel >= record.n_channels() {
        return Err(invalid(format!("channel {} out of range ({} channels)", a.channel, record.n_channels())));
    }
    let anns = detect_qrs(record.channel(a.channel), record.fs(), a.refractory_ms)?;
    if let Some(p) = &a.out {
        write_annotations(p, &anns)?;
    }
    Ok(json!({
        "channel": a.channel,
        "refractory_ms": a.refractory_ms,
        "n_beats": anns.len(),
        "indices": anns.indices(),
    }))
}

fn cmd_score(a: ScoreArgs) -> Result<Value> {
    let reference = read_annotations(&a.reference, a.fs)?;
    let test = read_annotations(&a.test, a.fs)?;
    let mut report = ScoreReport::default();
    let events: Vec<String> = a.events.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    let mut errors = serde_json::Map::new();
    let n_samples = a.n_samples.unwrap_or(60 * a.fs as usize);
    let qt = match (a.qt_ref, a.qt_test) {
        (Some(r), Some(t)) => Some((r, t)),
        (None, None) => None,
        _ => return Err(invalid("--qt-ref and --qt-test go together")),
    };
    let challenge = challenge_scores(&reference, &test, n_samples, qt);
    for ev in &events {
        match ev.as_str() {
            "f1" => {
                let m = match_beats(&reference, &test, MATCH_WINDOW_MS);
                let d = f1_se_ppv(&m)?;
                report.se = Some(d.se);
                report.ppv = Some(d.ppv);
                report.f1 = Some(d.f1);
                report.tp = Some(m.tp);
                report.fp = Some(m.fp);
                report.fn_ = Some(m.fn_);
            }
            "hr" => match hr_match(&reference, &test, HR_TOLERANCE_BPM) {
                Ok(h) => report.hrm = Some(h),
                Err(e) => {
                    errors.insert("hr".into(), Value::String(e.to_string()));
                }
            },
            "e1" => report.e1 = challenge.e1,
            "e2" => report.e2 = challenge.e2,
            "e3" => {
                if qt.is_none() {
                    return Err(invalid("e3 needs --qt-ref and --qt-test"));
                }
                report.e3 = challenge.e3;
            }
            "snr" => {
                let (Some(r), Some(t)) = (&a.snr_ref, &a.snr_test) else {
                    return Err(invalid("snr needs --snr-ref and --snr-test"));
                };
                let (r, t) = (read_signal_csv(r)?, read_signal_csv(t)?);
                if r.n_channels() != t.n_channels() || r.fs() != t.fs() {
                    return Err(invalid("SNR signals differ in layout"));
                }
                let per: Vec<f64> = (0..r.n_channels())
                    .map(|c| fecgkit::kalman::snr_db(r.channel(c), t.channel(c), r.fs_f64()))
                    .collect::<Result<_>>()?;
                report.snr = Some(fecgkit::stats::mean(&per));
            }
            other => return Err(invalid(format!("unknown score event '{other}'"))),
        }
    }
    let mut v = to_value(&report)?;
    if let Value::Object(m) = &mut v {
        m.insert("e1_invalid_segments".into(), json!(challenge.e1_invalid_segments));
        if !errors.is_empty() {
            m.insert("errors".into(), Value::Object(errors));
        }
    }
    Ok(v)
}

fn cmd_sqi(a: SqiArgs) -> Result<Value> {
    let record = read_signal_csv(&a.input)?;
    let kinds = parse_kinds(&a.kinds)?;
    let channels: Vec<usize> = match a.channel {
        Some(c) if c < record.n_channels() => vec![c],
        Some(c) => return Err(invalid(format!("channel {c} out of range"))),
        None => (0..record.n_channels()).collect(),
    };
    let mut out = Vec::new();
    for c in channels {
        let windows = sqi_windows(record.channel(c), record.fs(), &kinds, a.window_s, a.overlap_s)?;
        out.push(json!({ "channel": c, "label": record.labels()[c], "windows": windows }));
    }
    Ok(json!({ "fs": record.fs(), "window_s": a.window_s, "overlap_s": a.overlap_s, "channels": out }))
}

/// Header line, then numeric rows.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), i + 1)))?;
            if row.len() != header.len() {
                return Err(Error::Parse(format!("{} row {}: expected {} columns", path.display(), i + 1, header.len())));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

fn cmd_fuse_labels(a: FuseLabelsArgs) -> Result<Value> {
    let (annotators, y) = read_table(&a.annotations)?;
    let (features, table) = match &a.features {
        Some(p) => {
            let (names, x) = read_table(p)?;
            let x: Vec<Vec<f64>> = x.into_iter().map(|row| std::iter::once(1.0).chain(row).collect()).collect();
            let names: Vec<String> = std::iter::once("intercept".to_string()).chain(names).collect();
            (names, AnnotationTable::new(y, x)?)
        }
        None => (vec!["intercept".to_string()], AnnotationTable::intercept_only(y)?),
    };
    let result = pla_em(&table, a.max_iter, a.tol)?;
    let mut v = to_value(&result)?;
    if let Value::Object(m) = &mut v {
        m.insert("annotators".into(), json!(annotators));
        m.insert("features".into(), json!(features));
    }
    Ok(v)
}

fn cmd_bench(a: BenchArgs) -> Result<Value> {
    let seed = resolve_seed(a.seed)?.unwrap_or(BENCH_SEED);
    match a.suite.to_ascii_lowercase().as_str() {
        "ekfd" => {
            let cfg: EkfdConfig = with_overrides(&tuned_ekfd_config(), a.params.as_deref().map(json_arg).transpose()?)?;
            let suite = ekfd_suite(a.n, seed, &cfg)?;
            if let Some(dir) = &a.plot_dir {
                fs::create_dir_all(dir)?;
                let mut csv = String::from("record,snr_ekfs_db,snr_ekfd_db\n");
                for r in &suite.records {
                    csv.push_str(&format!("{},{},{}\n", r.record, r.snr_ekfs_db, r.snr_ekfd_db));
                }
                fs::write(dir.join("ekfd.csv"), csv)?;
                fs::write(
                    dir.join("ekfd.gp"),
                    "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'record'\nset ylabel 'SNR (dB)'\n\
                     plot 'ekfd.csv' using 1:2 with linespoints, 'ekfd.csv' using 1:3 with linespoints\n",
                )?;
            }
            let mut v = to_value(&suite)?;
            if let Value::Object(m) = &mut v {
                m.insert("seed".into(), json!(seed));
                m.insert("config".into(), to_value(&cfg)?);
            }
            Ok(v)
        }
        "extraction" => {
            if a.params.is_some() {
                return Err(invalid("the extraction suite takes no parameter overrides"));
            }
            let suite = extraction_suite(a.n, seed)?;
            if let Some(dir) = &a.plot_dir {
                fs::create_dir_all(dir)?;
                let keys: Vec<&String> = suite.mean_f1.keys().collect();
                let mut csv = format!("record,{}\n", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
                for r in &suite.records {
                    let vals: Vec<String> = keys.iter().map(|k| r.f1[*k].to_string()).collect();
                    csv.push_str(&format!("{},{}\n", r.record, vals.join(",")));
                }
                fs::write(dir.join("extraction.csv"), csv)?;
                let series: Vec<String> =
                    (2..keys.len() + 2).map(|c| format!("'extraction.csv' using 1:{c} with linespoints")).collect();
                fs::write(
                    dir.join("extraction.gp"),
                    format!(
                        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'record'\nset ylabel 'F1'\nplot {}\n",
                        series.join(", ")
                    ),
                )?;
            }
            let mut v = to_value(&suite)?;
            if let Value::Object(m) = &mut v {
                m.insert("seed".into(), json!(seed));
            }
            Ok(v)
        }
        other => Err(invalid(format!("unknown suite '{other}' (expected ekfd or extraction)"))),
    }
}
