use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affectbench::config::{sha256_hex, ConfigError, ExperimentConfig};
use affectbench::data::{
    load_subject, plan_windows, synth_generate, write_subject, AfbError, DataError, LabelMap, Protocol,
    SubjectRecording, SynthConfig, MODALITY_NAMES,
};
use affectbench::diagnostics::{run_gradchecks, GRADCHECK_EPS, GRADCHECK_TOL};
use affectbench::protocols::{
    aggregate, emit_bar_chart_svg, emit_report, prepare, read_summary, run_protocol, Metric, ProtocolError,
    ReportFormat,
};
use clap::{Parser, Subcommand, ValueEnum};

/// Personalized vs generalized affect classification experiments.
#[derive(Debug, Parser)]
#[command(name = "affectbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic AFB1 subjects.
    Synth {
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        subjects: u16,
        /// Mean seconds per condition block.
        #[arg(long, default_value_t = 4.0)]
        seconds: f64,
        #[arg(long, env = "AFFECTBENCH_SEED", default_value_t = 0)]
        seed: u64,
        /// Disable per-subject class level shifts.
        #[arg(long)]
        no_subject_offsets: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an AFB1 file and print its header and window projection.
    Inspect { path: PathBuf },
    /// Train and evaluate one or all protocols.
    Run {
        #[arg(long, value_enum, default_value_t = ProtocolArg::All)]
        protocol: ProtocolArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Base seed for initialization, dropout and shuffling.
        #[arg(long, env = "AFFECTBENCH_SEED")]
        seed: Option<u64>,
        /// Parallel training runs; defaults to the number of cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Only use these subject ids.
        #[arg(long, value_delimiter = ',')]
        subjects: Vec<u16>,
        /// Config overrides such as `model.base_channels=32` or `train.lr=0.0005`.
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render a bar chart from a JSON report.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient checks.
    Gradcheck {
        #[arg(long, env = "AFFECTBENCH_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Personalized,
    Inclusive,
    Exclusive,
    All,
}

impl ProtocolArg {
    fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolArg::Personalized => vec![Protocol::Personalized],
            ProtocolArg::Inclusive => vec![Protocol::SubjectInclusive],
            ProtocolArg::Exclusive => vec![Protocol::SubjectExclusive],
            ProtocolArg::All => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Accuracy,
    F1,
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<AfbError> for Failure {
    fn from(e: AfbError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        match e {
            e if e.is_numeric() => Failure::Numeric(e.to_string()),
            ProtocolError::Config(c) => c.into(),
            ProtocolError::UnknownMetric(_) => Failure::Usage(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth {
            subjects,
            seconds,
            seed,
            no_subject_offsets,
            out,
        } => synth(
            SynthConfig {
                num_subjects: subjects,
                seconds_per_condition: seconds,
                seed,
                subject_offsets: !no_subject_offsets,
                ..Default::default()
            },
            &out,
        ),
        Command::Inspect { path } => inspect(&path),
        Command::Run {
            protocol,
            data,
            out,
            seed,
            jobs,
            subjects,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_overrides(&overrides)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            run(&cfg, &protocol.protocols(), &data, &out, &subjects, jobs)
        }
        Command::Plot { summary, metric, out } => {
            let metric = match metric {
                MetricArg::Accuracy => Metric::Accuracy,
                MetricArg::F1 => Metric::F1,
            };
            let s = read_summary(&summary)?;
            emit_bar_chart_svg(&s, metric, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Gradcheck { seed } => gradcheck(seed),
    }
}

fn synth(cfg: SynthConfig, out: &Path) -> Result<(), Failure> {
    if !(cfg.seconds_per_condition > 0.0 && cfg.seconds_per_condition.is_finite()) {
        return Err(Failure::Usage("--seconds must be positive".into()));
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let recs = synth_generate(&cfg);
    let map = LabelMap::default();
    let mut manifest = Vec::new();
    for rec in recs {
        let path = out.join(format!("s{:02}.afb", rec.subject_id()));
        write_subject(&path, &rec)?;
        let plan = plan_windows(rec.labels(), &map);
        let [n, s, a] = plan.class_counts();
        println!(
            "subject {:>2}: {} samples, windows neutral={n} stress={s} amusement={a} (mixed {})",
            rec.subject_id(),
            rec.len(),
            plan.mixed
        );
        manifest.push(serde_json::json!({
            "file": path.file_name().and_then(|f| f.to_str()),
            "subject_id": rec.subject_id(),
            "samples": rec.len(),
            "windows": [n, s, a],
        }));
    }
    let doc = serde_json::json!({ "synth": cfg, "subjects": manifest });
    let path = out.join("synth.json");
    fs::write(&path, format!("{doc:#}\n")).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let rec = affectbench::data::decode_afb(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let map = LabelMap::default();
    println!("file:        {}", path.display());
    println!("magic:       AFB1");
    println!("version:     {}", affectbench::data::AFB_VERSION);
    println!("subject_id:  {}", rec.subject_id());
    println!("modalities:  {}", MODALITY_NAMES.join(", "));
    println!("num_samples: {}", rec.len());
    println!("sample_rate: {} Hz", rec.sample_rate_hz());
    println!("sha256:      {}", sha256_hex(&bytes));

    let mut histogram = [0usize; 256];
    for &c in rec.labels() {
        histogram[c as usize] += 1;
    }
    println!("label codes:");
    for (code, &n) in histogram.iter().enumerate().filter(|(_, &n)| n > 0) {
        let class = map.class_of(code as u8).map(|c| c.name()).unwrap_or("unmapped");
        println!("  {code:>3} ({class}): {n} samples");
    }
    let plan = plan_windows(rec.labels(), &map);
    let [n, s, a] = plan.class_counts();
    println!(
        "projected windows: neutral={n} stress={s} amusement={a} total={}",
        plan.kept.len()
    );
    println!("discarded windows: mixed={} unmapped={}", plan.mixed, plan.unmapped);
    Ok(())
}

fn load_dir(dir: &Path, only: &[u16]) -> Result<Vec<SubjectRecording>, Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "afb"))
        .collect();
    paths.sort();
    let mut recs = Vec::new();
    for p in paths {
        let rec = load_subject(&p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        if only.is_empty() || only.contains(&rec.subject_id()) {
            recs.push(rec);
        }
    }
    if recs.is_empty() {
        return Err(Failure::Data(format!("no matching .afb subjects in {}", dir.display())));
    }
    for id in only {
        if !recs.iter().any(|r| r.subject_id() == *id) {
            return Err(Failure::Data(format!("subject {id} not found in {}", dir.display())));
        }
    }
    Ok(recs)
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn run(
    cfg: &ExperimentConfig,
    protocols: &[Protocol],
    data: &Path,
    out: &Path,
    only: &[u16],
    jobs: usize,
) -> Result<(), Failure> {
    let recs = load_dir(data, only)?;
    if protocols.contains(&Protocol::SubjectExclusive) && recs.len() < 2 {
        return Err(DataError::TooFewSubjects {
            needed: 2,
            found: recs.len(),
        }
        .into());
    }
    let cohort = prepare(recs, cfg)?;
    for (id, mixed, unmapped) in &cohort.discarded {
        eprintln!("subject {id}: discarded {mixed} mixed and {unmapped} unmapped windows");
    }

    let ckpt_dir = out.join("checkpoints");
    let log_dir = out.join("logs");
    for d in [out, &ckpt_dir, &log_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    let effective = serde_json::json!({
        "config": cfg,
        "config_hash": cfg.hash(),
        "protocols": protocols,
        "subjects": cohort.ids(),
    });
    write(&out.join("config.json"), format!("{effective:#}\n"))?;

    let mut reports = Vec::new();
    for &p in protocols {
        eprintln!("training {p} ({} subjects)", cohort.subjects.len());
        let result = run_protocol(p, &cohort, cfg, jobs)?;
        for r in &result.runs {
            write(&ckpt_dir.join(format!("{}.afck", r.name)), &r.checkpoint)?;
            let header = serde_json::json!({ "run": r.name, "config": cfg, "config_hash": cfg.hash() });
            write(
                &log_dir.join(format!("{}.jsonl", r.name)),
                format!("{header}\n{}", r.report.to_json_lines()),
            )?;
        }
        reports.extend(result.reports);
    }
    let summary = aggregate(cfg, reports)?;
    emit_report(&summary, &out.join("reports.json"), ReportFormat::Json)?;
    emit_report(&summary, &out.join("reports.csv"), ReportFormat::Csv)?;
    for a in &summary.aggregates {
        println!(
            "{:<18} n={:<3} accuracy {:<16} f1 {}",
            a.model_type.as_str(),
            a.count,
            a.accuracy_pct,
            a.f1_pct
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn gradcheck(seed: u64) -> Result<(), Failure> {
    println!("gradcheck seed={seed} eps={GRADCHECK_EPS:e} tolerance={GRADCHECK_TOL:e}");
    let results = run_gradchecks(seed).map_err(|e| Failure::Numeric(e.to_string()))?;
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "{:<24} max_rel_error={:.3e} checked={} one_sided={} skipped={} {}",
            r.name,
            r.max_rel_error,
            r.checked,
            r.one_sided,
            r.skipped,
            if r.passed() { "ok" } else { "FAIL" }
        );
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient checks above tolerance: {}",
            failed.join(", ")
        )))
    }
}
