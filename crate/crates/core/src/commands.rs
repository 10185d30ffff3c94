//! Batch workflows behind the `sursmr` command line. Each command reads its
//! inputs, writes its outputs and returns a serializable report that echoes
//! the resolved arguments and configuration. Reports contain no timings or
//! other run-dependent values, so identical invocations give identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::RasterImage;
use crate::io::checkpoint::{self, CheckpointMeta};
use crate::io::delimited::{fmt_real, write_table};
use crate::io::report::{config_hash, write_json, write_summary, SummaryRow};
use crate::io::{manifest_base, read_manifest, tables, RunConfig};
use crate::labelgen::{
    ingest_external_scores, monotonicity_report, proxy_sur_all, score_builtin, BuiltinScorer, LabelGenConfig,
    MonotonicityViolation, ScoreTable, ScorerOrigin,
};
use crate::model::{Network, Variant};
use crate::quality::{ratio_curve, simulate_machine_population, MachinePopulation, QualityLadder, RatioKind};
use crate::train::{
    evaluate, fit, gradient_check_suite, merge_labels, run_ablation_matrix, split_dataset, warm_start, AblationRow,
    Dataset, DatasetSplits, EvalLog, GradModule, GradcheckConfig, GradcheckReport, Labels, Split, SplitMetrics,
    StepLog, SyntheticData, SyntheticSpec, WarmStart,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub records: String,
    pub manifest: String,
    pub kind: RatioKind,
    pub output: String,
    pub ladders: usize,
    pub rungs: usize,
}

/// Ratio curves for every manifest ladder that has records.
pub fn aggregate(records: &Path, manifest: &Path, kind: RatioKind, out: &Path) -> Result<AggregateReport> {
    let recs = tables::read_records(records)?;
    if recs.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no records (empty population)", records.display())));
    }
    let m = read_manifest(manifest)?;
    if let Some(r) = recs.iter().find(|r| m.ladder(&r.ladder_id).is_none()) {
        return Err(Error::InvalidArgument(format!(
            "{}: record for ladder {} not in manifest",
            records.display(),
            r.ladder_id
        )));
    }
    let curves = m
        .ladders
        .iter()
        .filter(|l| recs.iter().any(|r| r.ladder_id == l.ladder_id))
        .map(|l| ratio_curve(l, &recs, kind))
        .collect::<Result<Vec<_>>>()?;
    tables::write_curves(out, &curves)?;
    Ok(AggregateReport {
        records: display(records),
        manifest: display(manifest),
        kind,
        output: display(out),
        ladders: curves.len(),
        rungs: curves.iter().map(|c| c.values.len()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub manifest: String,
    pub population: MachinePopulation,
    pub seed: u64,
    pub output: String,
    pub records: usize,
}

pub fn simulate_machines(manifest: &Path, population: &MachinePopulation, seed: u64, out: &Path) -> Result<SimulateReport> {
    let m = read_manifest(manifest)?;
    let mut records = Vec::new();
    for l in &m.ladders {
        records.extend(simulate_machine_population(l, population, seed)?);
    }
    tables::write_records(out, &records)?;
    Ok(SimulateReport {
        manifest: display(manifest),
        population: population.clone(),
        seed,
        output: display(out),
        records: records.len(),
    })
}

/// Built-in scores for every rung of every ladder, evaluated ladder-parallel.
pub fn builtin_scores(
    ladders: &[QualityLadder],
    base: &Path,
    scorers: &[BuiltinScorer],
    config: &LabelGenConfig,
    exec: Exec,
) -> Result<ScoreTable> {
    let per_ladder = exec.map(ladders, |l| -> Result<Vec<(u32, BuiltinScorer, f64)>> {
        let original = RasterImage::load(&base.join(&l.original_ref))?;
        let mut out = Vec::new();
        for r in &l.rungs {
            let img = RasterImage::load(&base.join(&r.image_ref))?;
            for &s in scorers {
                out.push((r.rung_index, s, score_builtin(s, &original, &img, config.psnr_cap)?));
            }
        }
        Ok(out)
    });
    let mut table = ScoreTable::default();
    for (l, scores) in ladders.iter().zip(per_ladder) {
        for (rung, s, v) in scores? {
            table.insert_with_origin(&l.ladder_id, rung, s.id(), v, s.polarity(), ScorerOrigin::Builtin)?;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub manifest: String,
    pub scorers: Vec<BuiltinScorer>,
    pub labelgen: LabelGenConfig,
    pub output: String,
    pub entries: usize,
}

pub fn score(manifest: &Path, scorers: &[BuiltinScorer], config: &LabelGenConfig, out: &Path, exec: Exec) -> Result<ScoreReport> {
    if scorers.is_empty() {
        return Err(Error::NoScorers);
    }
    let m = read_manifest(manifest)?;
    let table = builtin_scores(&m.ladders, &manifest_base(manifest), scorers, config, exec)?;
    table.write(out)?;
    Ok(ScoreReport {
        manifest: display(manifest),
        scorers: scorers.to_vec(),
        labelgen: *config,
        output: display(out),
        entries: table.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelgenReport {
    pub manifest: String,
    pub scores: Option<String>,
    pub builtin: Vec<BuiltinScorer>,
    pub labelgen: LabelGenConfig,
    pub output: String,
    pub scorer_ids: Vec<String>,
    pub labels: usize,
    /// (ladder, scorer) pairs whose canonical score rises along the ladder.
    pub monotonicity_violations: Vec<MonotonicityViolation>,
}

/// Proxy labels from an external score table, built-in scorers, or both.
pub fn labelgen(
    manifest: &Path,
    scores: Option<&Path>,
    builtin: &[BuiltinScorer],
    config: &LabelGenConfig,
    out: &Path,
    exec: Exec,
) -> Result<LabelgenReport> {
    let m = read_manifest(manifest)?;
    let mut table = match scores {
        Some(p) => ingest_external_scores(p)?,
        None => ScoreTable::default(),
    };
    if !builtin.is_empty() {
        let computed = builtin_scores(&m.ladders, &manifest_base(manifest), builtin, config, exec)?;
        for d in computed.scorers() {
            for l in &m.ladders {
                for r in l.rung_indices() {
                    let v = computed.get(&l.ladder_id, r, &d.scorer_id).expect("computed for every rung");
                    table.insert_with_origin(&l.ladder_id, r, &d.scorer_id, v, d.polarity, d.origin)?;
                }
            }
        }
    }
    let scorers = table.scorers();
    if scorers.is_empty() {
        return Err(Error::NoScorers);
    }
    let labels = proxy_sur_all(&table, &scorers, &m.ladders, config, exec)?;
    let violations = monotonicity_report(&table, &scorers, &m.ladders)?
        .into_iter()
        .filter(|v| v.violations > 0)
        .collect();
    tables::write_proxy_labels(out, &labels)?;
    Ok(LabelgenReport {
        manifest: display(manifest),
        scores: scores.map(display),
        builtin: builtin.to_vec(),
        labelgen: *config,
        output: display(out),
        scorer_ids: labels.scorer_ids.clone(),
        labels: labels.labels.len(),
        monotonicity_violations: violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub manifest: String,
    pub spec: crate::train::SplitSpec,
    pub output: String,
    pub sizes: (usize, usize, usize),
}

pub fn split(manifest: &Path, spec: &crate::train::SplitSpec, out: &Path) -> Result<SplitReport> {
    let m = read_manifest(manifest)?;
    let s = split_dataset(&m.ladder_ids(), spec)?;
    tables::write_split(out, &s)?;
    Ok(SplitReport {
        manifest: display(manifest),
        spec: spec.clone(),
        output: display(out),
        sizes: (s.train.len(), s.val.len(), s.test.len()),
    })
}

/// Label and split inputs shared by the training and evaluation commands.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataArgs {
    pub manifest: PathBuf,
    /// SUR targets: a proxy-label file (`sur_hat`) or a ratio-curve file.
    pub sur: Option<PathBuf>,
    /// SMR targets: a ratio-curve file.
    pub smr: Option<PathBuf>,
    /// Split assignment file; without it the split is drawn from the config.
    pub split: Option<PathBuf>,
}

struct LoadedData {
    split: Split,
    all: Dataset,
}

impl LoadedData {
    fn part(&self, name: &str) -> Dataset {
        match name {
            "all" => self.all.clone(),
            _ => self.all.subset(self.split.part(name).unwrap_or(&[])),
        }
    }
}

fn read_labels(args: &DataArgs) -> Result<Labels> {
    let sur = args.sur.as_deref().map(tables::read_sur_like).transpose()?;
    let smr = args.smr.as_deref().map(tables::read_curve_values).transpose()?;
    Ok(merge_labels(sur.as_ref(), smr.as_ref()))
}

fn load_data(args: &DataArgs, cfg: &RunConfig, exec: Exec) -> Result<LoadedData> {
    let manifest = read_manifest(&args.manifest)?;
    let labels = read_labels(args)?;
    let split = match &args.split {
        Some(p) => {
            let s = tables::read_split(p)?;
            if let Some(id) = s.train.iter().chain(&s.val).chain(&s.test).find(|id| manifest.ladder(id).is_none()) {
                return Err(Error::InvalidArgument(format!("{}: ladder {id} not in manifest", p.display())));
            }
            s
        }
        None => split_dataset(&manifest.ladder_ids(), &cfg.split)?,
    };
    let all = Dataset::load(
        &manifest.ladders,
        &manifest_base(&args.manifest),
        &labels,
        &cfg.model.backbone,
        exec,
    )?;
    Ok(LoadedData { split, all })
}

/// MAE summary of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub items: usize,
    pub mae_sur: Option<f64>,
    pub mae_smr: Option<f64>,
}

impl From<&SplitMetrics> for MetricsSummary {
    fn from(m: &SplitMetrics) -> Self {
        MetricsSummary {
            items: m.items,
            mae_sur: m.mae_sur,
            mae_smr: m.mae_smr,
        }
    }
}

fn split_metrics(net: &Network, data: &LoadedData, exec: Exec) -> Result<BTreeMap<String, MetricsSummary>> {
    let mut out = BTreeMap::new();
    for name in ["train", "val", "test"] {
        let part = data.part(name);
        if !part.is_empty() {
            out.insert(name.to_string(), MetricsSummary::from(&evaluate(net, &part, exec)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub command: String,
    pub data: DataArgs,
    pub init: Option<String>,
    pub config_path: Option<String>,
    pub config: RunConfig,
    pub config_hash: String,
    pub variant: Variant,
    pub parameters: usize,
    pub split_sizes: (usize, usize, usize),
    pub warm_start: Option<WarmStart>,
    pub steps: usize,
    pub best_step: usize,
    pub best_val: Option<f64>,
    pub stopped_early: bool,
    pub losses: Vec<StepLog>,
    pub evals: Vec<EvalLog>,
    /// Metrics of the saved (best) parameters per split.
    pub metrics: BTreeMap<String, MetricsSummary>,
    pub checkpoint: String,
}

/// Trains the configured variant, optionally warm-started from `init`, and
/// writes `checkpoint.json` (best validation parameters) and `report.json`
/// into `out`.
pub fn train(
    phase: Phase,
    data_args: &DataArgs,
    init: Option<&Path>,
    cfg: &RunConfig,
    config_path: Option<&Path>,
    out: &Path,
    exec: Exec,
) -> Result<TrainReport> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.split.validate()?;
    let data = load_data(data_args, cfg, exec)?;
    let mut net = Network::new(cfg.model.clone(), cfg.train.seed)?;
    let warm = match init {
        Some(p) => {
            let (src, _) = checkpoint::load(p)?;
            Some(warm_start(&mut net, &src)?)
        }
        None => None,
    };
    let train_set = data.part("train");
    let val_set = data.part("val");
    let outcome = fit(&net, &train_set, Some(&val_set), &cfg.train, exec)?;
    let best = Network::with_params(cfg.model.clone(), outcome.best)?;
    let metrics = split_metrics(&best, &data, exec)?;

    create_dir(out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    checkpoint::save(
        &ckpt,
        &best,
        &CheckpointMeta {
            step: outcome.best_step,
            seed: cfg.train.seed,
            phase: phase.name().into(),
        },
    )?;
    let report = TrainReport {
        command: phase.name().into(),
        data: data_args.clone(),
        init: init.map(display),
        config_path: config_path.map(display),
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        variant: cfg.model.variant,
        parameters: best.store().num_scalars(),
        split_sizes: (data.split.train.len(), data.split.val.len(), data.split.test.len()),
        warm_start: warm,
        steps: outcome.steps,
        best_step: outcome.best_step,
        best_val: outcome.best_val,
        stopped_early: outcome.stopped_early,
        losses: outcome.losses,
        evals: outcome.evals,
        metrics,
        checkpoint: display(&ckpt),
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub checkpoint: String,
    pub data: DataArgs,
    pub part: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub variant: Variant,
    pub seed: u64,
    pub metrics: MetricsSummary,
}

/// Evaluates a checkpoint on one split (`train`, `val`, `test` or `all`),
/// writing `report.json`, `summary.csv` and per-rung `predictions.csv`.
pub fn evaluate_checkpoint(
    ckpt: &Path,
    data_args: &DataArgs,
    part: &str,
    variant: Option<Variant>,
    cfg: &RunConfig,
    out: &Path,
    exec: Exec,
) -> Result<EvaluateReport> {
    let (net, meta) = load_checkpoint(ckpt, variant)?;
    if !matches!(part, "train" | "val" | "test" | "all") {
        return Err(Error::InvalidArgument(format!("unknown split {part:?}")));
    }
    let cfg = RunConfig {
        model: net.config().clone(),
        ..cfg.clone()
    };
    let data = load_data(data_args, &cfg, exec)?;
    let set = data.part(part);
    if set.is_empty() {
        return Err(Error::EmptySplit(format!("split {part:?} has no items")));
    }
    let m = evaluate(&net, &set, exec)?;

    create_dir(out)?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    write_table(
        &out.join(PREDICTIONS_FILE),
        &["ladder_id", "rung_index", "sur", "smr", "target_sur", "target_smr"],
        m.predictions.iter().map(|p| {
            vec![
                p.ladder_id.clone(),
                p.rung_index.to_string(),
                fmt_real(p.sur),
                fmt_real(p.smr),
                opt(p.target_sur),
                opt(p.target_smr),
            ]
        }),
    )?;
    write_summary(
        &out.join(SUMMARY_FILE),
        &[SummaryRow {
            variant: net.variant().to_string(),
            dataset: dataset_name(&data_args.manifest, part),
            mae_sur: m.mae_sur,
            mae_smr: m.mae_smr,
            seed: meta.seed,
            steps: meta.step,
        }],
    )?;
    let report = EvaluateReport {
        checkpoint: display(ckpt),
        data: data_args.clone(),
        part: part.into(),
        config_hash: config_hash(&cfg)?,
        config: cfg,
        variant: net.variant(),
        seed: meta.seed,
        metrics: MetricsSummary::from(&m),
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Loads a checkpoint, insisting on `variant` when one is requested.
fn load_checkpoint(path: &Path, variant: Option<Variant>) -> Result<(Network, CheckpointMeta)> {
    match variant {
        Some(v) => checkpoint::load_as(path, v),
        None => checkpoint::load(path),
    }
}

fn dataset_name(manifest: &Path, part: &str) -> String {
    let dir = manifest
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    format!("{dir}:{part}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub checkpoint: String,
    pub manifest: String,
    pub output: String,
    pub variant: Variant,
    pub rows: usize,
    /// `ladder#rung: reason` for every rung that could not be scored.
    pub failures: Vec<String>,
}

/// Predicts every rung of every ladder. Rows are written sorted by
/// `(ladder_id, rung_index)`; failed rungs are listed and make the command
/// fail after the successful rows are written.
pub fn predict(ckpt: &Path, manifest: &Path, variant: Option<Variant>, out: &Path, exec: Exec) -> Result<PredictReport> {
    let (net, _) = load_checkpoint(ckpt, variant)?;
    let m = read_manifest(manifest)?;
    let base = manifest_base(manifest);
    let bb = &net.config().backbone;
    let (h, w) = bb.input_size;
    let prep = |path: &Path| -> Result<crate::tensor::Tensor> {
        Ok(RasterImage::load(path)?.resized(w, h).to_tensor(&bb.mean, &bb.std))
    };
    type RowResult = std::result::Result<crate::train::PredictionRow, String>;
    let per_ladder: Vec<Vec<(String, u32, RowResult)>> = exec.map(&m.ladders, |l| {
        let original = prep(&base.join(&l.original_ref));
        l.rungs
            .iter()
            .map(|r| {
                let row = match &original {
                    Err(e) => Err(format!("original: {e}")),
                    Ok(o) => prep(&base.join(&r.image_ref))
                        .and_then(|c| net.predict(o, &c))
                        .map(|p| crate::train::PredictionRow {
                            ladder_id: l.ladder_id.clone(),
                            rung_index: r.rung_index,
                            sur: p.sur,
                            smr: p.smr,
                            target_sur: None,
                            target_smr: None,
                        })
                        .map_err(|e| e.to_string()),
                };
                (l.ladder_id.clone(), r.rung_index, row)
            })
            .collect()
    });
    let mut all: Vec<(String, u32, RowResult)> = per_ladder.into_iter().flatten().collect();
    all.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (l, r, res) in all {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(format!("{l}#{r}: {e}")),
        }
    }
    tables::write_predictions(out, &rows)?;
    let report = PredictReport {
        checkpoint: display(ckpt),
        manifest: display(manifest),
        output: display(out),
        variant: net.variant(),
        rows: rows.len(),
        failures,
    };
    if !report.failures.is_empty() {
        return Err(Error::Incomplete(format!(
            "{} of {} rows failed:\n  {}",
            report.failures.len(),
            report.failures.len() + report.rows,
            report.failures.join("\n  ")
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateReport {
    pub data: DataArgs,
    pub variants: Vec<Variant>,
    pub config: RunConfig,
    pub config_hash: String,
    pub rows: Vec<AblationRow>,
}

/// One train/evaluate run per variant on the manifest's splits (metrics on
/// `test`). Writes `report.json` and `summary.csv`; fails afterwards if any
/// row failed.
pub fn ablate(
    data_args: &DataArgs,
    variants: &[Variant],
    cfg: &RunConfig,
    out: &Path,
    exec: Exec,
) -> Result<AblateReport> {
    cfg.train.validate()?;
    let data = load_data(data_args, cfg, exec)?;
    let (train_set, val_set, test_set) = (data.part("train"), data.part("val"), data.part("test"));
    let name = dataset_name(&data_args.manifest, "test");
    let splits = [DatasetSplits {
        name: name.clone(),
        train: &train_set,
        val: Some(&val_set),
        test: &test_set,
    }];
    let rows = run_ablation_matrix(variants, &splits, &cfg.model, &cfg.train, exec)?;
    create_dir(out)?;
    write_summary(
        &out.join(SUMMARY_FILE),
        &rows
            .iter()
            .map(|r| SummaryRow {
                variant: r.variant.to_string(),
                dataset: r.dataset.clone(),
                mae_sur: r.mae_sur,
                mae_smr: r.mae_smr,
                seed: r.seed,
                steps: r.steps,
            })
            .collect::<Vec<_>>(),
    )?;
    let report = AblateReport {
        data: data_args.clone(),
        variants: variants.to_vec(),
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        rows,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.variant)))
        .collect();
    if !failed.is_empty() {
        return Err(Error::Incomplete(format!("ablation rows failed:\n  {}", failed.join("\n  "))));
    }
    Ok(report)
}

/// Runs the gradient-check suite; writes the report when `out` is given and
/// fails if any module exceeds the tolerance.
pub fn gradcheck(modules: &[GradModule], config: &GradcheckConfig, out: Option<&Path>) -> Result<GradcheckReport> {
    let report = gradient_check_suite(modules, config)?;
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    if !report.passed {
        let bad: Vec<String> = report
            .modules
            .iter()
            .filter(|m| !m.passed)
            .map(|m| format!("{} (max rel error {:e} at {})", m.module, m.max_rel_error, m.worst))
            .collect();
        return Err(Error::Incomplete(format!("gradient check failed: {}", bad.join(", "))));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub spec: SyntheticSpec,
    pub output: String,
    pub ladders: usize,
    pub rungs: usize,
}

/// Writes a synthetic ladder corpus (images, manifest, human and machine
/// records, built-in scores) into `out`.
pub fn synth(spec: &SyntheticSpec, out: &Path, exec: Exec) -> Result<SynthReport> {
    let data = SyntheticData::generate(spec, exec)?;
    create_dir(out)?;
    data.write_dir(out)?;
    Ok(SynthReport {
        spec: spec.clone(),
        output: display(out),
        ladders: spec.ladders,
        rungs: spec.ladders * spec.rungs,
    })
}
