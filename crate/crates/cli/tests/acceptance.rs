//! Property acceptance suite, plus the dataset reproduction checks when
//! `AFFECTBENCH_DATA_DIR` points at converted subject files.
//!
//! Runs without the libtest harness so every check prints its verdict line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use affectbench::config::ExperimentConfig;
use affectbench::data::{
    class_boundaries, decode_afb, encode_afb, load_subject, plan_windows, split_personalized, split_subject_exclusive,
    split_subject_inclusive, AfbError, AffectClass, LabelMap, Protocol, SubjectRecording, Window, WINDOW_LEN,
    WINDOW_STRIDE,
};
use affectbench::diagnostics::{run_gradchecks, GRADCHECK_TOL};
use affectbench::nn::{
    decode_checkpoint, encode_checkpoint, CheckpointError, CheckpointMeta, EmotionNet, ModelConfig, Param,
};
use affectbench::protocols::{prepare, read_summary, ConfusionMatrix, ExperimentSummary};
use affectbench::rng::Rng;
use affectbench::tensor::{Tape, Tensor};
use affectbench::train::{AdamWConfig, AdamWState};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_affectbench"));
    c.env_remove("AFFECTBENCH_SEED");
    c
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "affectbench {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn mean_accuracy(summary: &ExperimentSummary, protocol: Protocol) -> Option<f64> {
    summary
        .aggregates
        .iter()
        .find(|a| a.model_type == protocol)
        .map(|a| a.accuracy.mean)
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let results = run_gradchecks(0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = results
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("checks ran");
    for r in &results {
        ensure!(
            r.passed(),
            "{} max relative error {:.3e} > {GRADCHECK_TOL:e}",
            r.name,
            r.max_rel_error
        );
    }
    ensure!(secs <= 60.0, "took {secs:.1}s");
    run_bin(&["gradcheck", "--seed", "0"])?;
    Ok(format!(
        "{} checks, worst {} at {:.2e}, {secs:.1}s",
        results.len(),
        worst.name,
        worst.max_rel_error
    ))
}

fn random_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn conv_oracle() -> Outcome {
    let mut rng = Rng::new(2);
    for case in 0..200 {
        let (nb, cin, cout) = (
            1 + rng.below(3) as usize,
            1 + rng.below(4) as usize,
            1 + rng.below(4) as usize,
        );
        let k = 1 + rng.below(5) as usize;
        let pad = rng.below(k as u64) as usize;
        let len = k + rng.below(10) as usize;
        let x = random_tensor(&mut rng, vec![nb, cin, len]);
        let w = random_tensor(&mut rng, vec![cout, cin, k]);
        let b = random_tensor(&mut rng, vec![cout]);
        let tape = Tape::new();
        let y = tape
            .constant(x.clone())
            .conv1d(tape.constant(w.clone()), tape.constant(b.clone()), pad)
            .map_err(|e| e.to_string())?
            .value();
        let lout = len + 2 * pad - k + 1;
        let (xd, wd) = (x.data(), w.data());
        for bi in 0..nb {
            for o in 0..cout {
                for t in 0..lout {
                    let mut acc = b.data()[o];
                    for c in 0..cin {
                        for j in 0..k {
                            if t + j >= pad && t + j - pad < len {
                                acc += xd[(bi * cin + c) * len + t + j - pad] * wd[(o * cin + c) * k + j];
                            }
                        }
                    }
                    let got = y.data()[(bi * cout + o) * lout + t];
                    ensure!(got == acc, "case {case}: ({bi},{o},{t}) {got} != {acc}");
                }
            }
        }
    }
    Ok("200 instances bitwise equal".into())
}

fn optimizer_oracle() -> Outcome {
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut rng = Rng::new(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta0 = rng.normal();
        let lr = rng.uniform_range(1e-4, 1e-1);
        let cfg = AdamWConfig { lr, ..cfg.clone() };
        let mut state = AdamWState::<f64>::new(cfg);
        let mut params = vec![Param {
            name: "theta".into(),
            value: Tensor::new(vec![1], vec![theta0]).unwrap(),
        }];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
        for t in 1..=10 {
            let g = 3.0 * rng.normal();
            state
                .step(&mut params, &[Tensor::new(vec![1], vec![g]).unwrap()])
                .map_err(|e| e.to_string())?;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            worst = worst.max((params[0].value.data()[0] - theta).abs());
        }
    }
    ensure!(worst <= 1e-12, "trajectory deviation {worst:e}");

    let mut state = AdamWState::<f64>::new(AdamWConfig::default());
    let mut params = vec![Param {
        name: "theta".into(),
        value: Tensor::new(vec![1], vec![1.0]).unwrap(),
    }];
    state
        .step(&mut params, &[Tensor::new(vec![1], vec![0.5]).unwrap()])
        .map_err(|e| e.to_string())?;
    let got = params[0].value.data()[0];
    let want = 1.0 - 1e-3 * (0.5 / (0.5 + 1e-8)) - 1e-3 * 0.01;
    ensure!((got - want).abs() <= 1e-9, "first step {got} vs {want}");
    ensure!((got - 0.998990).abs() <= 1e-6, "first step {got}");
    Ok(format!("100 trajectories within {worst:.1e}, first step {got:.6}"))
}

fn keys(ws: &[Window]) -> Vec<(u16, usize)> {
    let mut k: Vec<_> = ws.iter().map(Window::key).collect();
    k.sort();
    k
}

fn split_invariants(dir: &Path) -> Outcome {
    run_bin(&[
        "synth",
        "--subjects",
        "5",
        "--seconds",
        "3",
        "--seed",
        "4",
        "--out",
        path(dir),
    ])?;
    let recs = load_dir(dir)?;
    let map = LabelMap::default();
    let mut discarded = 0;
    for rec in &recs {
        let plan = plan_windows(rec.labels(), &map);
        let grid = (rec.len() - WINDOW_LEN) / WINDOW_STRIDE + 1;
        ensure!(
            plan.kept.len() + plan.mixed + plan.unmapped == grid,
            "subject {}: window total",
            rec.subject_id()
        );
        ensure!(plan.mixed > 0, "subject {}: expected mixed windows", rec.subject_id());
        discarded += plan.mixed;
        for &(start, class) in &plan.kept {
            let run = &rec.labels()[start..start + WINDOW_LEN];
            ensure!(
                run.iter().all(|&c| map.class_of(c) == Some(class)),
                "window at {start} not homogeneous"
            );
        }
    }
    for n in [64usize, 100, 4620] {
        let plan = plan_windows(&vec![1u8; n], &map);
        ensure!(plan.kept.len() == (n - 64) / 32 + 1, "homogeneous run of {n}");
    }

    let cohort = prepare(recs, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    ensure!(cohort.subjects.len() == 5, "cohort size");
    for (&(_, mixed, _), s) in cohort.discarded.iter().zip(&cohort.subjects) {
        ensure!(mixed > 0, "subject {}: mixed windows not counted", s.subject_id);
    }
    for s in &cohort.subjects {
        let p = split_personalized(s).map_err(|e| e.to_string())?;
        for class in AffectClass::ALL {
            let count = |ws: &[Window]| ws.iter().filter(|w| w.label() == class).count();
            let n = count(&s.windows);
            let (a, b) = class_boundaries(n);
            ensure!(
                (count(&p.train), count(&p.val), count(&p.test)) == (n * 70 / 100, b - a, n - n * 85 / 100),
                "subject {} {class:?}: sizes",
                s.subject_id
            );
        }
        let e = split_subject_exclusive(&cohort.subjects, s.subject_id).map_err(|e| e.to_string())?;
        let i = split_subject_inclusive(&cohort.subjects, s.subject_id).map_err(|e| e.to_string())?;
        ensure!(
            e.train.iter().chain(&e.val).all(|w| w.subject_id() != s.subject_id),
            "subject {}: exclusive train/val leak",
            s.subject_id
        );
        ensure!(
            keys(&p.test) == keys(&e.test) && keys(&p.test) == keys(&i.test),
            "subject {}: test sets differ",
            s.subject_id
        );
    }
    Ok(format!("5 subjects, {discarded} mixed windows discarded"))
}

fn load_dir(dir: &Path) -> Result<Vec<SubjectRecording>, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "afb"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| load_subject(p).map_err(|e| e.to_string()))
        .collect()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["reports.json", "reports.csv", "config.json"] {
        out.push((PathBuf::from(sub), std::fs::read(dir.join(sub)).unwrap_or_default()));
    }
    let mut ckpts: Vec<PathBuf> = std::fs::read_dir(dir.join("checkpoints"))
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    ckpts.sort();
    for p in ckpts {
        let bytes = std::fs::read(&p).unwrap_or_default();
        out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
    }
    out
}

fn determinism(dir: &Path) -> Outcome {
    let data = dir.join("data");
    run_bin(&[
        "synth",
        "--subjects",
        "3",
        "--seconds",
        "2",
        "--seed",
        "5",
        "--out",
        path(&data),
    ])?;
    let small = ["train.max_epochs=3", "model.base_channels=4", "model.fc_hidden=16"];
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let mut args = vec![
            "run",
            "--protocol",
            "all",
            "--seed",
            "9",
            "--data",
            path(&data),
            "--out",
            path(&out),
        ];
        args.extend(small);
        run_bin(&args)?;
        trees.push(tree(&out));
    }
    ensure!(
        trees[0].len() == 3 + 7,
        "expected 7 checkpoints, found {}",
        trees[0].len() - 3
    );
    for (a, b) in trees[0].iter().zip(&trees[1]) {
        ensure!(!a.1.is_empty(), "{} missing or empty", a.0.display());
        ensure!(a == b, "{} differs between runs", a.0.display());
    }
    Ok(format!("{} artifacts byte-identical", trees[0].len()))
}

/// Nearest class centroid over flattened training windows.
fn centroid_accuracy(dir: &Path) -> Result<f64, String> {
    let cohort = prepare(load_dir(dir)?, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let mut accs = Vec::new();
    for s in &cohort.subjects {
        let split = split_personalized(s).map_err(|e| e.to_string())?;
        let dim = WINDOW_LEN * 8;
        let mut centroids = vec![vec![0.0; dim]; 3];
        let mut counts = [0usize; 3];
        for w in &split.train {
            let c = w.label().index();
            counts[c] += 1;
            for (acc, x) in centroids[c].iter_mut().zip(w.signal()) {
                *acc += x;
            }
        }
        for (c, n) in centroids.iter_mut().zip(counts) {
            c.iter_mut().for_each(|x| *x /= n as f64);
        }
        let hits = split
            .test
            .iter()
            .filter(|w| {
                let x = w.signal();
                let dist = |c: &Vec<f64>| c.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = (0..3)
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best == w.label().index()
            })
            .count();
        accs.push(hits as f64 / split.test.len() as f64);
    }
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

fn learning_sanity(dir: &Path) -> Outcome {
    let data = dir.join("data");
    run_bin(&["synth", "--subjects", "3", "--seed", "6", "--out", path(&data)])?;
    let oracle = centroid_accuracy(&data)?;
    ensure!(
        oracle >= 0.95,
        "nearest-centroid oracle only reaches {:.2}%",
        100.0 * oracle
    );
    let out = dir.join("personalized");
    run_bin(&[
        "run",
        "--protocol",
        "personalized",
        "--seed",
        "0",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "train.max_epochs=50",
    ])?;
    let summary = read_summary(&out.join("reports.json")).map_err(|e| e.to_string())?;
    let acc = mean_accuracy(&summary, Protocol::Personalized).ok_or("no personalized aggregate")?;
    ensure!(acc >= 0.95, "personalized mean accuracy {:.2}%", 100.0 * acc);
    Ok(format!(
        "centroid oracle {:.2}%, personalized {:.2}% after 50 epochs",
        100.0 * oracle,
        100.0 * acc
    ))
}

fn protocol_ordering(dir: &Path) -> Outcome {
    let data = dir.join("data");
    let personalized = dir.join("personalized");
    if !personalized.join("reports.json").exists() {
        run_bin(&["synth", "--subjects", "3", "--seed", "6", "--out", path(&data)])?;
        run_bin(&[
            "run",
            "--protocol",
            "personalized",
            "--seed",
            "0",
            "--data",
            path(&data),
            "--out",
            path(&personalized),
            "train.max_epochs=50",
        ])?;
    }
    let out = dir.join("exclusive");
    run_bin(&[
        "run",
        "--protocol",
        "exclusive",
        "--seed",
        "0",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "train.max_epochs=50",
    ])?;
    let p = read_summary(&personalized.join("reports.json")).map_err(|e| e.to_string())?;
    let e = read_summary(&out.join("reports.json")).map_err(|e| e.to_string())?;
    let pa = mean_accuracy(&p, Protocol::Personalized).ok_or("no personalized aggregate")?;
    let ea = mean_accuracy(&e, Protocol::SubjectExclusive).ok_or("no subject-exclusive aggregate")?;
    let gap = 100.0 * (pa - ea);
    ensure!(
        gap >= 10.0,
        "gap {gap:.2} points ({:.2}% vs {:.2}%)",
        100.0 * pa,
        100.0 * ea
    );
    Ok(format!(
        "personalized {:.2}% vs subject-exclusive {:.2}%, gap {gap:.2} points",
        100.0 * pa,
        100.0 * ea
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = Rng::new(8);
    for case in 0..1000 {
        let n = 1 + rng.below(50) as usize;
        let truth: Vec<usize> = (0..n).map(|_| rng.below(3) as usize).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.below(3) as usize).collect();
        let cm = ConfusionMatrix::from_labels(&truth, &pred).map_err(|e| e.to_string())?;
        let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
        let mut f1 = 0.0;
        for c in 0..3 {
            let tp = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p == c).count();
            let predicted = pred.iter().filter(|&&p| p == c).count();
            let actual = truth.iter().filter(|&&t| t == c).count();
            let precision = if predicted == 0 {
                0.0
            } else {
                tp as f64 / predicted as f64
            };
            let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
            if precision + recall > 0.0 {
                f1 += 2.0 * precision * recall / (precision + recall);
            }
        }
        f1 /= 3.0;
        ensure!(cm.accuracy().unwrap() == acc, "case {case}: accuracy");
        ensure!(cm.macro_f1().unwrap() == f1, "case {case}: macro F1");
    }
    let cm = ConfusionMatrix::from_labels(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0]).unwrap();
    let f1 = cm.macro_f1().unwrap();
    ensure!(
        (f1 - (0.5 + 0.8 + 2.0 / 3.0) / 3.0).abs() <= 1e-9,
        "worked example {f1}"
    );
    Ok(format!("1000 instances exact, worked example {f1:.6}"))
}

fn format_round_trips(dir: &Path) -> Outcome {
    let mut rng = Rng::new(10);
    let n = 500;
    let modalities = (0..8)
        .map(|_| (0..n).map(|_| rng.normal() as f32 as f64).collect())
        .collect();
    let labels = (0..n).map(|i| (1 + i / 200) as u8).collect();
    let rec = SubjectRecording::new(3, modalities, labels).map_err(|e| e.to_string())?;
    let afb_path = dir.join("s03.afb");
    affectbench::data::write_subject(&afb_path, &rec).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&afb_path).map_err(|e| e.to_string())?;
    let back = load_subject(&afb_path).map_err(|e| e.to_string())?;
    ensure!(back == rec && encode_afb(&back) == bytes, "AFB1 round trip not bitwise");

    let afb_err = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = bytes.clone();
        f(&mut b);
        decode_afb(&b).err()
    };
    ensure!(
        matches!(afb_err(&|b| b[0] = 0), Some(AfbError::BadMagic { .. })),
        "bad magic"
    );
    ensure!(
        matches!(afb_err(&|b| b[4] = 7), Some(AfbError::UnsupportedVersion { .. })),
        "version"
    );
    ensure!(
        matches!(afb_err(&|b| b[8] = 6), Some(AfbError::ModalityCount { .. })),
        "modality count"
    );
    ensure!(
        matches!(afb_err(&|b| b.truncate(1000)), Some(AfbError::Truncated { .. })),
        "truncation"
    );

    let cfg = ModelConfig {
        base_channels: 4,
        fc_hidden: 16,
        ..Default::default()
    };
    let model = EmotionNet::<f32>::build(cfg.clone(), &mut Rng::new(11)).map_err(|e| e.to_string())?;
    let meta = CheckpointMeta {
        seed: 11,
        epoch: 4,
        val_loss: 0.75,
    };
    let ck_path = dir.join("m.afck");
    affectbench::nn::save_checkpoint(&model, &meta, &ck_path).map_err(|e| e.to_string())?;
    let (loaded, lmeta) = affectbench::nn::load_checkpoint::<f32>(&ck_path, &cfg).map_err(|e| e.to_string())?;
    let ck_bytes = std::fs::read(&ck_path).map_err(|e| e.to_string())?;
    ensure!(
        loaded == model && lmeta == meta && encode_checkpoint(&loaded, &lmeta) == ck_bytes,
        "checkpoint round trip not bitwise"
    );
    let ck_err = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = ck_bytes.clone();
        f(&mut b);
        decode_checkpoint(&b).and_then(|raw| raw.into_model::<f32>(&cfg)).err()
    };
    ensure!(
        matches!(ck_err(&|b| b[0] = 0), Some(CheckpointError::BadMagic { .. })),
        "checkpoint magic"
    );
    ensure!(
        matches!(ck_err(&|b| b[4] = 3), Some(CheckpointError::UnsupportedVersion(3))),
        "checkpoint version"
    );
    ensure!(
        matches!(ck_err(&|b| b.truncate(200)), Some(CheckpointError::Truncated { .. })),
        "checkpoint truncation"
    );
    let other = ModelConfig {
        fc_hidden: 8,
        ..cfg.clone()
    };
    let wrong = EmotionNet::<f32>::build(other, &mut Rng::new(1)).map_err(|e| e.to_string())?;
    let raw = decode_checkpoint(&encode_checkpoint(&wrong, &meta)).map_err(|e| e.to_string())?;
    ensure!(
        matches!(raw.into_model::<f32>(&cfg), Err(CheckpointError::ConfigMismatch { .. })),
        "config mismatch"
    );
    Ok(format!(
        "AFB1 {} bytes and checkpoint {} bytes round trip",
        bytes.len(),
        ck_bytes.len()
    ))
}

/// Full-dataset reproduction. `Ok(None)` means the data directory is not configured.
fn reproduction(dir: &Path) -> Result<Option<(String, Vec<String>)>, String> {
    let Some(data) = std::env::var_os("AFFECTBENCH_DATA_DIR").map(PathBuf::from) else {
        return Ok(None);
    };
    let out = dir.join("full");
    run_bin(&[
        "run",
        "--protocol",
        "all",
        "--seed",
        "0",
        "--data",
        path(&data),
        "--out",
        path(&out),
    ])?;
    let summary = read_summary(&out.join("reports.json")).map_err(|e| e.to_string())?;
    let subjects: std::collections::BTreeSet<u16> = summary.reports.iter().map(|r| r.subject_id).collect();
    ensure!(subjects.len() == 15, "expected 15 subjects, found {}", subjects.len());
    let p = mean_accuracy(&summary, Protocol::Personalized).unwrap_or(0.0);
    let i = mean_accuracy(&summary, Protocol::SubjectInclusive).unwrap_or(0.0);
    let e = mean_accuracy(&summary, Protocol::SubjectExclusive).unwrap_or(0.0);
    let line = format!(
        "personalized {:.2}%, subject-inclusive {:.2}%, subject-exclusive {:.2}%",
        100.0 * p,
        100.0 * i,
        100.0 * e
    );
    ensure!(p >= 0.85, "{line}: personalized below 85%");
    ensure!(p - i >= 0.15 && p - e >= 0.15, "{line}: gap below 15 points");
    ensure!(
        (0.55..=0.80).contains(&i) && (0.55..=0.80).contains(&e),
        "{line}: generalized mean outside 55-80%"
    );

    let mut behind = Vec::new();
    for s in subjects {
        let acc = |proto| {
            summary
                .reports
                .iter()
                .find(|r| r.subject_id == s && r.model_type == proto)
                .map_or(0.0, |r| r.accuracy)
        };
        let (pa, ea) = (acc(Protocol::Personalized), acc(Protocol::SubjectExclusive));
        if pa <= ea {
            behind.push(format!(
                "S{s}: personalized {:.2}% <= subject-exclusive {:.2}%",
                100.0 * pa,
                100.0 * ea
            ));
        }
    }
    Ok(Some((line, behind)))
}

fn verdict(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("PASS  {name:<24} {detail} [{secs:.1}s]");
            true
        }
        Err(why) => {
            println!("FAIL  {name:<24} {why} [{secs:.1}s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let d = root.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    };
    let (learn, fmt, splits, det) = (sub("learn"), sub("formats"), sub("splits"), sub("determinism"));

    println!("\nrunning acceptance checks");
    let mut checks: Vec<bool> = vec![
        verdict("gradient fidelity", gradient_fidelity),
        verdict("conv oracle", conv_oracle),
        verdict("optimizer oracle", optimizer_oracle),
        verdict("split invariants", || split_invariants(&splits)),
        verdict("determinism", || determinism(&det)),
        verdict("learning sanity", || learning_sanity(&learn)),
        verdict("protocol ordering", || protocol_ordering(&learn)),
        verdict("metric oracles", metric_oracles),
        verdict("format round trips", || format_round_trips(&fmt)),
    ];

    let full = sub("full");
    match reproduction(&full) {
        Ok(None) => {
            println!("SKIP  {:<24} AFFECTBENCH_DATA_DIR not set", "dataset reproduction");
            println!("SKIP  {:<24} AFFECTBENCH_DATA_DIR not set", "per-subject ordering");
        }
        Ok(Some((line, behind))) => {
            println!("PASS  {:<24} {line}", "dataset reproduction");
            if behind.is_empty() {
                println!(
                    "PASS  {:<24} personalized ahead for every subject",
                    "per-subject ordering"
                );
            } else {
                println!(
                    "WARN  {:<24} {} subjects behind: {}",
                    "per-subject ordering",
                    behind.len(),
                    behind.join("; ")
                );
            }
        }
        Err(why) => {
            println!("FAIL  {:<24} {why}", "dataset reproduction");
            checks.push(false);
        }
    }

    let failed = checks.iter().filter(|&&ok| !ok).count();
    println!("\nacceptance: {} passed, {failed} failed\n", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
