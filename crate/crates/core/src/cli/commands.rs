//! The `simulate`, `train`, `evaluate` and `benchmark` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Config, Variant};
use super::run::{now, RunDir};
use crate::annosim::{simulate_annotators, AnnotatorProfile, SimReport};
use crate::data::{build_triples, gaussian_blobs, load_annotations, load_dataset, AnnotationSet, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{aggregate, score, Aggregate, AurocSupport, MetricsReport, Scores};
use crate::mixup::MixupConfig;
use crate::models::ModelPair;
use crate::numerics::Rng;
use crate::training::{train, EpochMetrics, EvalSets, Method, TrainState};

const TRAIN_DATA_STREAM: u64 = 100;
const VAL_DATA_STREAM: u64 = 101;
const TEST_DATA_STREAM: u64 = 102;

/// Datasets and annotations for one seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Option<Dataset>,
    pub annotations: Option<AnnotationSet>,
    /// Every annotator's label for every test instance.
    pub test_table: Option<AnnotationSet>,
    /// The same table masked by participation.
    pub test_masked: Option<AnnotationSet>,
    pub sim_report: Option<SimReport>,
}

impl Prepared {
    pub fn perf_table(&self, support: AurocSupport) -> Option<&AnnotationSet> {
        match support {
            AurocSupport::All => self.test_table.as_ref(),
            AurocSupport::Annotated => self.test_masked.as_ref(),
        }
    }
}

/// What `sim_report.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimArtifact {
    pub report: SimReport,
    pub accuracy_spread: f64,
    pub profiles: Vec<AnnotatorProfile>,
    pub effective_participation: Vec<f64>,
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::config(key, "required but not set"))
}

/// Attaches the config key to file-system errors so the operator learns
/// which setting points at the missing file.
fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::Io { path, source } => Error::Config {
            key: key.to_string(),
            message: format!("cannot read {}: {source}", path.display()),
        },
        other => other,
    }
}

fn load_split(
    run: &mut RunDir,
    features: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    keys: (&str, &str),
    num_classes: usize,
    split: Split,
) -> Result<Option<Dataset>> {
    let Some(f) = features.as_deref() else {
        return Ok(None);
    };
    let ds = load_dataset(f, labels.as_deref(), Some(num_classes)).map_err(|e| {
        if labels
            .as_deref()
            .is_some_and(|l| matches!(&e, Error::Io { path, .. } if path == l))
        {
            keyed(keys.1, e)
        } else {
            keyed(keys.0, e)
        }
    })?;
    run.input(f);
    if let Some(l) = labels {
        run.input(l);
    }
    Ok(Some(ds.with_split(split)))
}

fn load_or_generate(
    cfg: &Config,
    seed: u64,
    run: &mut RunDir,
    prefix: &str,
) -> Result<(Dataset, Option<Dataset>, Option<Dataset>)> {
    let d = &cfg.data;
    if let Some(s) = &d.synthetic {
        if d.train_features.is_some() {
            return Err(Error::config(
                "data.synthetic",
                "cannot be combined with data.train_features",
            ));
        }
        if s.num_classes < 2 || s.n_train == 0 {
            return Err(Error::config(
                "data.synthetic",
                "need at least two classes and one training instance",
            ));
        }
        let blobs = |n: usize, stream: u64| {
            gaussian_blobs(n, s.num_classes, s.radius, s.spread, &mut Rng::stream(seed, stream))
        };
        let train = blobs(s.n_train, TRAIN_DATA_STREAM)?.with_split(Split::Train);
        let val = (s.n_val > 0)
            .then(|| blobs(s.n_val, VAL_DATA_STREAM).map(|v| v.with_split(Split::Validation)))
            .transpose()?;
        let test = (s.n_test > 0)
            .then(|| blobs(s.n_test, TEST_DATA_STREAM).map(|t| t.with_split(Split::Test)))
            .transpose()?;
        for (name, ds) in [("train", Some(&train)), ("val", val.as_ref()), ("test", test.as_ref())] {
            if let Some(ds) = ds {
                let f = run.artifact(format!("{prefix}{name}_features.csv"))?;
                let l = run.artifact(format!("{prefix}{name}_labels.csv"))?;
                ds.save(&f, Some(&l))?;
            }
        }
        return Ok((train, val, test));
    }

    let features = required(&d.train_features, "data.train_features")?;
    let train = load_dataset(features, d.train_labels.as_deref(), d.num_classes).map_err(|e| match &e {
        Error::Io { path, .. } if Some(path.as_path()) == d.train_labels.as_deref() => keyed("data.train_labels", e),
        _ => keyed("data.train_features", e),
    })?;
    run.input(features);
    if let Some(l) = &d.train_labels {
        run.input(l);
    }
    let c = train.num_classes();
    let val = load_split(
        run,
        &d.val_features,
        &d.val_labels,
        ("data.val_features", "data.val_labels"),
        c,
        Split::Validation,
    )?;
    let test = load_split(
        run,
        &d.test_features,
        &d.test_labels,
        ("data.test_features", "data.test_labels"),
        c,
        Split::Test,
    )?;
    Ok((train.with_split(Split::Train), val, test))
}

fn load_annotation_file(path: &Path, hint: Option<usize>, key: &str) -> Result<AnnotationSet> {
    match hint {
        Some(m) => load_annotations(path, m).map_err(|e| keyed(key, e)),
        None => {
            let loose = load_annotations(path, usize::MAX).map_err(|e| keyed(key, e))?;
            let m = loose.records().iter().map(|r| r.annotator + 1).max().unwrap_or(0);
            AnnotationSet::new(loose.records().to_vec(), m)
        }
    }
}

/// Loads or generates the datasets and, when no annotation file is given
/// but a `sim` section is, simulates annotators. `force_sim` simulates even
/// if an annotation file is configured.
pub fn prepare_data(cfg: &Config, seed: u64, run: &mut RunDir, prefix: &str, force_sim: bool) -> Result<Prepared> {
    let (train, val, test) = load_or_generate(cfg, seed, run, prefix)?;
    let d = &cfg.data;
    let hint = d.num_annotators.or(cfg.sim.as_ref().map(|s| s.num_annotators));
    let mut prepared = Prepared {
        train,
        val,
        test,
        annotations: None,
        test_table: None,
        test_masked: None,
        sim_report: None,
    };

    let simulate = force_sim || (d.annotations.is_none() && cfg.sim.is_some());
    if simulate {
        let mut sim_cfg = cfg
            .sim
            .clone()
            .ok_or_else(|| Error::config("sim", "required but not set"))?;
        sim_cfg.seed = seed;
        let sim = simulate_annotators(&prepared.train, &sim_cfg)?;
        let path = run.artifact(format!("{prefix}annotations.csv"))?;
        sim.annotations.save(&path)?;
        let artifact = SimArtifact {
            accuracy_spread: sim.report.accuracy_spread(),
            report: sim.report.clone(),
            profiles: sim.profiles.clone(),
            effective_participation: sim.effective_participation.clone(),
        };
        let text = serde_json::to_string_pretty(&artifact).expect("report serialises") + "\n";
        run.write_artifact(format!("{prefix}sim_report.json"), &text)?;
        if let Some(test) = &prepared.test {
            let full = sim.full_table(test)?;
            let masked = sim.masked_table(test, seed)?;
            full.save(&run.artifact(format!("{prefix}test_annotation_table.csv"))?)?;
            masked.save(&run.artifact(format!("{prefix}test_annotations.csv"))?)?;
            prepared.test_table = Some(full);
            prepared.test_masked = Some(masked);
        }
        prepared.sim_report = Some(sim.report);
        prepared.annotations = Some(sim.annotations);
    } else if let Some(path) = &d.annotations {
        let ann = load_annotation_file(path, hint, "data.annotations")?;
        ann.validate_against(&prepared.train)?;
        run.input(path);
        prepared.annotations = Some(ann);
    }

    if let Some(test) = &prepared.test {
        if let Some(path) = &d.test_annotation_table {
            let t = load_annotation_file(path, hint, "data.test_annotation_table")?;
            t.validate_against(test)?;
            run.input(path);
            prepared.test_table = Some(t);
        }
        if let Some(path) = &d.test_annotations {
            let t = load_annotation_file(path, hint, "data.test_annotations")?;
            t.validate_against(test)?;
            run.input(path);
            prepared.test_masked = Some(t);
        }
    }
    Ok(prepared)
}

/// Renders a metric log as CSV. Missing values are empty cells.
pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,annot_acc_train,clf_acc_val,clf_acc_test,lr\n");
    for m in log {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.epoch,
            m.train_loss,
            m.annot_acc_train,
            opt(m.clf_acc_val),
            opt(m.clf_acc_test),
            m.lr
        )
        .expect("write to string");
    }
    out
}

/// Parses a file written by [`metrics_csv`].
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let bad = |row: usize, msg: String| Error::Ingestion {
        path: path.to_path_buf(),
        row,
        message: msg,
    };
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 1, e.to_string()))?;
        if rec.len() != 6 {
            return Err(bad(i + 1, format!("{} cells, expected 6", rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad number `{}`", &rec[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        out.push(EpochMetrics {
            epoch: rec[0]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad epoch `{}`", &rec[0])))?,
            train_loss: num(1)?,
            annot_acc_train: num(2)?,
            clf_acc_val: opt(3)?,
            clf_acc_test: opt(4)?,
            lr: num(5)?,
        });
    }
    Ok(out)
}

/// Scores the last and (if any) best snapshots of a finished run.
pub fn report_for(
    cfg: &Config,
    prepared: &Prepared,
    state: &TrainState,
    method: Method,
    seed: u64,
) -> Result<Option<MetricsReport>> {
    let Some(test) = &prepared.test else {
        return Ok(None);
    };
    let table = prepared.perf_table(cfg.eval.perf_auroc_support);
    let train = Some((&state.train_triples, &prepared.train));
    let last = score(&state.models, test, train, table)?;
    let best = match &state.best {
        Some(b) => Some(score(&b.models, test, train, table)?),
        None => None,
    };
    Ok(Some(MetricsReport {
        method: method.name().to_string(),
        seed,
        config_hash: cfg.hash(),
        last,
        best,
        best_epoch: state.best.as_ref().map(|b| b.epoch),
    }))
}

fn train_cell(cfg: &Config, prepared: &Prepared, method: Method, mixup: MixupConfig, seed: u64) -> Result<TrainState> {
    let tc = cfg.train_config(method, mixup, seed);
    let empty;
    let ann = match (&prepared.annotations, method) {
        (Some(a), _) => a,
        (None, Method::TrueBase) => {
            empty = AnnotationSet::new(Vec::new(), 0)?;
            &empty
        }
        (None, _) => {
            return Err(Error::config(
                "data.annotations",
                format!("method {} needs annotations (or a sim section)", method.name()),
            ))
        }
    };
    let evals = EvalSets {
        validation: prepared.val.as_ref(),
        test: prepared.test.as_ref(),
    };
    train(&prepared.train, ann, &tc, evals)
}

fn write_json<T: Serialize>(run: &mut RunDir, rel: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serialises") + "\n";
    run.write_artifact(rel, &text).map(|_| ())
}

fn write_cell(run: &mut RunDir, prefix: &str, state: &TrainState, report: Option<&MetricsReport>) -> Result<()> {
    run.write_artifact(format!("{prefix}metrics.csv"), &metrics_csv(&state.log))?;
    state.models.save(&run.artifact(format!("{prefix}last.ckpt"))?)?;
    if let Some(b) = &state.best {
        b.models.save(&run.artifact(format!("{prefix}best.ckpt"))?)?;
    }
    if let Some(r) = report {
        write_json(run, &format!("{prefix}report.json"), r)?;
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<Prepared> {
    let started = now();
    let seed = cfg.seed();
    let mut run = RunDir::create(out)?;
    let prepared = prepare_data(cfg, seed, &mut run, "", true)?;
    if let Some(r) = &prepared.sim_report {
        log::info!(
            "{} labels, {:.3} per instance, {:.1}% false",
            r.num_labels,
            r.avg_labels_per_instance,
            100.0 * r.false_label_fraction
        );
    }
    run.finish("simulate", cfg, seed, started)?;
    Ok(prepared)
}

pub fn cmd_train(cfg: &Config, out: &Path) -> Result<TrainState> {
    let started = now();
    let seed = cfg.seed();
    let mut run = RunDir::create(out)?;
    let prepared = prepare_data(cfg, seed, &mut run, "", false)?;
    let method = cfg.train.method;
    let state = train_cell(cfg, &prepared, method, cfg.mixup, seed)?;
    let report = report_for(cfg, &prepared, &state, method, seed)?;
    write_cell(&mut run, "", &state, report.as_ref())?;
    if let Some(last) = state.log.last() {
        log::info!("finished {} epochs, train loss {:.4}", state.epoch, last.train_loss);
    }
    run.finish("train", cfg, seed, started)?;
    Ok(state)
}

pub fn cmd_evaluate(cfg: &Config, out: &Path) -> Result<MetricsReport> {
    let started = now();
    let seed = cfg.seed();
    let ckpt = required(&cfg.eval.checkpoint, "eval.checkpoint")?;
    let mut run = RunDir::create(out)?;
    let models = ModelPair::load(ckpt).map_err(|e| keyed("eval.checkpoint", e))?;
    run.input(ckpt);
    let prepared = prepare_data(cfg, seed, &mut run, "", false)?;
    let test = prepared
        .test
        .as_ref()
        .ok_or_else(|| Error::config("data.test_features", "evaluation needs a test set"))?;
    let triples = match &prepared.annotations {
        Some(a) if models.annotator.is_some() => Some(build_triples(&prepared.train, a)?),
        _ => None,
    };
    let train = triples.as_ref().map(|t| (t, &prepared.train));
    let last = score(&models, test, train, prepared.perf_table(cfg.eval.perf_auroc_support))?;
    let report = MetricsReport {
        method: cfg.train.method.name().to_string(),
        seed,
        config_hash: cfg.hash(),
        last,
        best: None,
        best_epoch: None,
    };
    write_json(&mut run, "report.json", &report)?;

    if !cfg.eval.curves.is_empty() {
        let mut text = String::from("variant,epoch,annot_acc_train,clf_acc_test\n");
        for c in &cfg.eval.curves {
            let log = read_metrics(&c.metrics).map_err(|e| keyed("eval.curves", e))?;
            run.input(&c.metrics);
            for m in log {
                let test = m.clf_acc_test.map(|v| v.to_string()).unwrap_or_default();
                writeln!(text, "{},{},{},{}", c.variant, m.epoch, m.annot_acc_train, test).expect("write to string");
            }
        }
        run.write_artifact("curves.csv", &text)?;
    }
    run.finish("evaluate", cfg, seed, started)?;
    Ok(report)
}

/// Outcome of one (variant, seed) cell of a benchmark grid.
#[derive(Clone, Debug)]
pub struct CellRecord {
    pub variant: String,
    pub seed: u64,
    pub report: Option<MetricsReport>,
    pub log: Vec<EpochMetrics>,
    pub error: Option<String>,
}

/// Mean and spread of one metric over the successful seeds of a cell row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    /// `last` or `best`.
    pub policy: String,
    pub ok: usize,
    pub failed: usize,
    pub clf_acc: Option<Aggregate>,
    pub annot_acc: Option<Aggregate>,
    pub perf_auroc: Option<Aggregate>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkResult {
    pub cells: Vec<CellRecord>,
    pub summary: Vec<SummaryRow>,
    /// Per seed; `None` where no simulation ran.
    pub sim_reports: Vec<(u64, Option<SimReport>)>,
}

fn variant_mixup(cfg: &Config, v: &Variant) -> MixupConfig {
    v.mixup.unwrap_or(cfg.mixup)
}

fn summarise(variants: &[Variant], cells: &[CellRecord], seeds: usize) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for v in variants {
        let mine: Vec<&CellRecord> = cells.iter().filter(|c| c.variant == v.name).collect();
        let failed = mine.iter().filter(|c| c.error.is_some()).count();
        for policy in ["last", "best"] {
            let scores: Vec<&Scores> = mine
                .iter()
                .filter_map(|c| c.report.as_ref())
                .filter_map(|r| {
                    if policy == "last" {
                        Some(&r.last)
                    } else {
                        r.best.as_ref()
                    }
                })
                .collect();
            let collect = |f: &dyn Fn(&Scores) -> Option<f64>| -> Option<Aggregate> {
                let vals: Vec<f64> = scores.iter().filter_map(|s| f(s)).collect();
                aggregate(&vals)
            };
            let ok = scores.len();
            let mut warnings = Vec::new();
            if ok == 1 {
                warnings.push("single seed: std reported as 0".to_string());
            }
            if ok == 0 && policy == "best" && failed < seeds {
                warnings.push("no validation set: best-epoch model unavailable".to_string());
            }
            if failed > 0 {
                warnings.push(format!("{failed} of {seeds} cells failed"));
            }
            let warning = (!warnings.is_empty()).then(|| warnings.join("; "));
            if let Some(w) = &warning {
                log::warn!("{} ({policy}): {w}", v.name);
            }
            rows.push(SummaryRow {
                variant: v.name.clone(),
                policy: policy.to_string(),
                ok,
                failed,
                clf_acc: collect(&|s| Some(s.clf_acc)),
                annot_acc: collect(&|s| s.annot_acc),
                perf_auroc: collect(&|s| s.perf_auroc),
                warning,
            });
        }
    }
    rows
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "variant,policy,ok,failed,clf_acc_mean,clf_acc_std,annot_acc_mean,annot_acc_std,perf_auroc_mean,perf_auroc_std,warning\n",
    );
    let pair = |a: &Option<Aggregate>| match a {
        Some(a) => format!("{},{}", a.mean, a.std),
        None => ",".to_string(),
    };
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.policy,
            r.ok,
            r.failed,
            pair(&r.clf_acc),
            pair(&r.annot_acc),
            pair(&r.perf_auroc),
            r.warning.as_deref().unwrap_or("").replace(',', ";")
        )
        .expect("write to string");
    }
    out
}

fn summary_text(rows: &[SummaryRow]) -> String {
    let cell = |a: &Option<Aggregate>| match a {
        Some(a) => format!("{:.1} ± {:.1}", 100.0 * a.mean, 100.0 * a.std),
        None => "-".to_string(),
    };
    let width = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut out = String::new();
    for policy in ["last", "best"] {
        writeln!(out, "{} epoch", if policy == "last" { "Last" } else { "Best" }).expect("write to string");
        writeln!(
            out,
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>5}",
            "variant", "clf-acc [%]", "annot-acc [%]", "perf-auroc", "seeds"
        )
        .expect("write to string");
        for r in rows.iter().filter(|r| r.policy == policy) {
            let auroc = match &r.perf_auroc {
                Some(a) => format!("{:.3} ± {:.3}", a.mean, a.std),
                None => "-".to_string(),
            };
            let mut line = format!(
                "{:<width$}  {:>13}  {:>13}  {:>13}  {:>5}",
                r.variant,
                cell(&r.clf_acc),
                cell(&r.annot_acc),
                auroc,
                r.ok
            );
            if let Some(w) = &r.warning {
                line.push_str("  ! ");
                line.push_str(w);
            }
            writeln!(out, "{}", line.trim_end()).expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Runs every (variant, seed) cell. Data and annotators are prepared once
/// per seed and shared by that seed's variants. Cells run in parallel on
/// the current rayon pool; a failing cell is recorded, not fatal.
pub fn cmd_benchmark(cfg: &Config, out: &Path) -> Result<BenchmarkResult> {
    let started = now();
    let bench = cfg
        .benchmark
        .as_ref()
        .ok_or_else(|| Error::config("benchmark", "required but not set"))?;
    if bench.variants.is_empty() || bench.num_seeds == 0 {
        return Err(Error::config("benchmark", "need at least one variant and one seed"));
    }
    let mut names: Vec<&str> = bench.variants.iter().map(|v| v.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("benchmark.variants", "variant names must be unique"));
    }
    for v in &bench.variants {
        let mut tc = cfg.train_config(v.method, variant_mixup(cfg, v), 0);
        tc.seed = 0;
        tc.validate().map_err(|e| match e {
            Error::Config { key, message } => Error::Config {
                key: format!("benchmark.variants.{}: {key}", v.name),
                message,
            },
            other => other,
        })?;
    }
    let seeds: Vec<u64> = (0..bench.num_seeds as u64).map(|i| cfg.seed() + i).collect();
    let mut run = RunDir::create(out)?;

    let mut prepared = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        match prepare_data(cfg, seed, &mut run, &format!("data/seed{seed}/"), false) {
            Ok(p) => prepared.push(Ok(p)),
            Err(e @ (Error::Config { .. } | Error::Io { .. } | Error::Ingestion { .. })) => return Err(e),
            Err(e) => {
                log::warn!("seed {seed}: data preparation failed: {e}");
                prepared.push(Err(e.to_string()));
            }
        }
    }

    let jobs: Vec<(&Variant, usize)> = bench
        .variants
        .iter()
        .flat_map(|v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let outcomes: Vec<(CellRecord, Option<TrainState>)> = jobs
        .par_iter()
        .map(|&(v, i)| {
            let seed = seeds[i];
            let mut record = CellRecord {
                variant: v.name.clone(),
                seed,
                report: None,
                log: Vec::new(),
                error: None,
            };
            let p = match &prepared[i] {
                Ok(p) => p,
                Err(msg) => {
                    record.error = Some(format!("data preparation failed: {msg}"));
                    return (record, None);
                }
            };
            let result = train_cell(cfg, p, v.method, variant_mixup(cfg, v), seed)
                .and_then(|state| report_for(cfg, p, &state, v.method, seed).map(|r| (state, r)));
            match result {
                Ok((state, report)) => {
                    log::info!("{} seed {seed}: done", v.name);
                    record.report = report;
                    record.log = state.log.clone();
                    (record, Some(state))
                }
                Err(e) => {
                    log::warn!("{} seed {seed}: failed: {e}", v.name);
                    record.error = Some(e.to_string());
                    (record, None)
                }
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(outcomes.len());
    let mut curves = String::from("variant,seed,epoch,annot_acc_train,clf_acc_test\n");
    for (record, state) in outcomes {
        let prefix = format!("cells/{}/seed{}/", record.variant, record.seed);
        match &state {
            Some(state) => write_cell(&mut run, &prefix, state, record.report.as_ref())?,
            None => {
                let msg = record.error.clone().unwrap_or_default();
                run.write_artifact(format!("{prefix}error.txt"), &(msg + "\n"))?;
            }
        }
        for m in &record.log {
            let test = m.clf_acc_test.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                curves,
                "{},{},{},{},{}",
                record.variant, record.seed, m.epoch, m.annot_acc_train, test
            )
            .expect("write to string");
        }
        cells.push(record);
    }
    let summary = summarise(&bench.variants, &cells, seeds.len());
    run.write_artifact("summary.csv", &summary_csv(&summary))?;
    run.write_artifact("summary.txt", &summary_text(&summary))?;
    run.write_artifact("curves.csv", &curves)?;
    run.finish("benchmark", cfg, cfg.seed(), started)?;

    let sim_reports = seeds
        .iter()
        .zip(&prepared)
        .map(|(&s, p)| (s, p.as_ref().ok().and_then(|p| p.sim_report.clone())))
        .collect();
    Ok(BenchmarkResult {
        cells,
        summary,
        sim_reports,
    })
}

/// Reads every `report.json` under a benchmark's `cells/` directory.
pub fn collect_reports(out: &Path) -> Result<Vec<(String, MetricsReport)>> {
    let cells = out.join("cells");
    let mut found = Vec::new();
    let mut variants: Vec<_> = fs::read_dir(&cells)
        .map_err(|e| Error::io(&cells, e))?
        .filter_map(|e| e.ok())
        .collect();
    variants.sort_by_key(|e| e.file_name());
    for v in variants {
        let mut seeds: Vec<_> = fs::read_dir(v.path())
            .map_err(|e| Error::io(v.path(), e))?
            .filter_map(|e| e.ok())
            .collect();
        seeds.sort_by_key(|e| e.file_name());
        for s in seeds {
            let path = s.path().join("report.json");
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let r: MetricsReport = serde_json::from_str(&text).map_err(|source| Error::Json { path, source })?;
                found.push((v.file_name().to_string_lossy().into_owned(), r));
            }
        }
    }
    Ok(found)
}
