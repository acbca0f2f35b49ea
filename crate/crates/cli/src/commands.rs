//! Subcommand implementations. Each returns the lines it wants printed so the
//! binary stays a thin wrapper.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use psca_core::dataset::{self, load_csv, save_csv, standardize, split_target};
use psca_core::pipeline::{self, train_variant};
use psca_core::retrieval::{hamming_rank, PackedCodes};
use psca_core::stage_one::write_trace_csv;
use psca_core::{
    DomainDataset, EvalReport, HyperParams, LinearEncoder, Matrix, PscaError, Result, Scenario, SplitSpec,
    StandardizeStats, SyntheticSpec,
};

use crate::artifacts::{self, Bundle};
use crate::codefile;
use crate::config::{EvalLabels, RunConfig};

/// Source and target data after optional standardization, with the target
/// split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: DomainDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: Option<StandardizeStats>,
}

impl Prepared {
    pub fn training_set(&self) -> DomainDataset {
        self.data.with_target_subset(&self.train)
    }
}

/// Reads both CSV files. The source must be fully labeled; target labels are
/// kept only if every target row has one.
pub fn load_dataset(cfg: &RunConfig) -> Result<DomainDataset> {
    let source = load_csv(&cfg.source, true, None)?;
    let labels = source.required_labels()?;
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let target = load_csv(&cfg.target, true, Some(c))?;
    let target_labels = target.complete_labels();
    DomainDataset::new(source.features, labels, target.features, target_labels, c)
}

fn apply_stats(ds: &DomainDataset, stats: &StandardizeStats) -> Result<DomainDataset> {
    if stats.mean.len() != ds.feature_dim() {
        return Err(PscaError::Shape(format!(
            "standardization statistics cover {} features, data has {}",
            stats.mean.len(),
            ds.feature_dim()
        )));
    }
    DomainDataset::new(
        standardize(&ds.source_features, Some(stats)).0,
        ds.source_labels.clone(),
        standardize(&ds.target_features, Some(stats)).0,
        ds.target_labels.clone(),
        ds.num_classes,
    )
}

/// Loads and splits the data; standardization statistics come from the
/// training columns only.
///
/// Features are divided by their standard deviation but not centered: with
/// zero-mean training data the prototype matrix `P^T X Y~` always has a null
/// vector (its weighted columns sum to `P^T X 1 = 0`), so orthonormal
/// prototypes cannot be fitted.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let raw = load_dataset(cfg)?;
    let (train, test) = split_target(raw.num_target(), &SplitSpec { test_fraction: cfg.test_fraction, seed: cfg.hp.seed })?;
    let (data, stats) = if cfg.standardize {
        let (_, mut stats) = standardize(&raw.with_target_subset(&train).combined_features(), None);
        stats.mean.fill(0.0);
        (apply_stats(&raw, &stats)?, Some(stats))
    } else {
        (raw, None)
    };
    Ok(Prepared { data, train, test, stats })
}

fn common_bundle(cfg: &RunConfig, prep: &Prepared, encoder: &LinearEncoder, codes_s: &Matrix, codes_t: &Matrix, note: &str) -> Bundle {
    let mut b = Bundle::default();
    b.add(artifacts::CODES_SOURCE, codefile::encode(codes_s));
    b.add(artifacts::CODES_TARGET, codefile::encode(codes_t));
    b.add(artifacts::ENCODER, artifacts::encoder_bytes(encoder));
    b.add(artifacts::SPLIT, artifacts::split_bytes(&prep.train, &prep.test));
    if let Some(stats) = &prep.stats {
        b.add(artifacts::STANDARDIZE, artifacts::stats_bytes(stats));
    }
    let mut manifest = format!("# psca {} {note}\n", env!("CARGO_PKG_VERSION"));
    manifest += &cfg.to_text();
    b.add(artifacts::MANIFEST, manifest.into_bytes());
    b
}

pub fn train(cfg: &RunConfig) -> Result<Vec<String>> {
    let prep = prepare(cfg)?;
    let model = train_variant(&prep.training_set(), &cfg.hp, cfg.variant)?;

    let mut bundle = common_bundle(cfg, &prep, &model.encoder, &model.codes.source, &model.codes.target, "model");
    bundle.add(
        artifacts::PSEUDO_LABELS,
        artifacts::pseudo_label_bytes(&prep.train, model.target_pseudo_labels()),
    );
    let mut s1 = Vec::new();
    write_trace_csv(&mut s1, &model.stage_one.trace).map_err(|e| PscaError::io(artifacts::STAGE_ONE_TRACE, e))?;
    bundle.add(artifacts::STAGE_ONE_TRACE, s1);
    bundle.add(artifacts::STAGE_TWO_TRACE, artifacts::stage_two_trace_bytes(&model.stage_two_trace));
    bundle.commit(&cfg.model_dir)?;

    let last = |t: Option<f64>| t.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    Ok(vec![
        format!(
            "trained {} bits on {} source and {} target samples (q = {})",
            cfg.hp.r,
            prep.data.num_source(),
            prep.train.len(),
            model.hp.q.unwrap_or(0)
        ),
        format!(
            "stage one: {} passes, objective {}",
            model.stage_one.trace.len(),
            last(model.stage_one.trace.last().map(|t| t.total))
        ),
        format!(
            "stage two: {} passes, objective {}",
            model.stage_two_trace.len(),
            last(model.stage_two_trace.last().copied())
        ),
        format!("artifacts written to {}", cfg.model_dir.display()),
    ])
}

pub fn baseline(cfg: &RunConfig) -> Result<Vec<String>> {
    let prep = prepare(cfg)?;
    let (encoder, codes) = pipeline::random_projection_baseline(&prep.training_set(), cfg.hp.r, cfg.hp.seed)?;
    common_bundle(cfg, &prep, &encoder, &codes.source, &codes.target, "baseline").commit(&cfg.model_dir)?;
    Ok(vec![format!(
        "random-projection baseline ({} bits) written to {}",
        cfg.hp.r,
        cfg.model_dir.display()
    )])
}

/// Database codes and labels for a scenario.
fn database<'a>(
    cfg: &RunConfig,
    prep: &'a Prepared,
    codes_s: &'a Matrix,
    codes_t: &'a Matrix,
    pseudo: Option<&[usize]>,
) -> Result<(&'a Matrix, Vec<usize>)> {
    match cfg.scenario {
        Scenario::CrossDomain => Ok((codes_s, prep.data.source_labels.clone())),
        Scenario::SingleDomain => {
            let labels = match cfg.eval_labels {
                EvalLabels::GroundTruth => {
                    let truth = prep.data.target_labels.as_ref().ok_or_else(|| {
                        PscaError::Label("single-domain evaluation with ground-truth labels needs a labeled target file".into())
                    })?;
                    prep.train.iter().map(|&i| truth[i]).collect()
                }
                EvalLabels::Pseudo => pseudo
                    .ok_or_else(|| PscaError::Config("this model has no pseudo-labels; use eval_labels = ground-truth".into()))?
                    .to_vec(),
            };
            Ok((codes_t, labels))
        }
    }
}

/// Encodes the held-out target samples and scores them against the
/// scenario's database.
pub fn evaluate_codes(
    cfg: &RunConfig,
    prep: &Prepared,
    encoder: &LinearEncoder,
    codes_s: &Matrix,
    codes_t: &Matrix,
    pseudo: Option<&[usize]>,
) -> Result<EvalReport> {
    let truth = prep
        .data
        .target_labels
        .as_ref()
        .ok_or_else(|| PscaError::Label("evaluation needs labels for every target sample".into()))?;
    if codes_s.ncols() != prep.data.num_source() || codes_t.ncols() != prep.train.len() {
        return Err(PscaError::Data(format!(
            "code files hold {} source and {} target codes, data has {} source and {} training target samples",
            codes_s.ncols(),
            codes_t.ncols(),
            prep.data.num_source(),
            prep.train.len()
        )));
    }
    let query_labels: Vec<usize> = prep.test.iter().map(|&i| truth[i]).collect();
    let queries = prep.data.target_features.select_columns(&prep.test);
    let (db, db_labels) = database(cfg, prep, codes_s, codes_t, pseudo)?;
    pipeline::evaluate(encoder, &queries, &query_labels, db, &db_labels, cfg.scenario)
}

fn format_err(path: &Path, msg: String) -> PscaError {
    PscaError::format(path, msg)
}

pub fn eval(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = &cfg.model_dir;
    let codes_s_path = dir.join(artifacts::CODES_SOURCE);
    let codes_t_path = dir.join(artifacts::CODES_TARGET);
    let codes_s = codefile::read(&codes_s_path)?;
    let codes_t = codefile::read(&codes_t_path)?;
    let encoder = artifacts::read_encoder(&dir.join(artifacts::ENCODER))?;
    if codes_s.nrows() != codes_t.nrows() {
        return Err(format_err(
            &codes_t_path,
            format!("{} bits here, {} bits in {}", codes_t.nrows(), codes_s.nrows(), artifacts::CODES_SOURCE),
        ));
    }
    if encoder.bits() != codes_s.nrows() {
        return Err(format_err(
            &dir.join(artifacts::ENCODER),
            format!("encoder produces {} bits, code files hold {}", encoder.bits(), codes_s.nrows()),
        ));
    }

    let raw = load_dataset(cfg)?;
    let (train, test) = artifacts::read_split(&dir.join(artifacts::SPLIT))?;
    if train.len() + test.len() != raw.num_target() || train.iter().chain(&test).any(|&i| i >= raw.num_target()) {
        return Err(format_err(&dir.join(artifacts::SPLIT), "split does not match the target file".into()));
    }
    let stats_path = dir.join(artifacts::STANDARDIZE);
    let stats = if stats_path.exists() { Some(artifacts::read_stats(&stats_path)?) } else { None };
    let data = match &stats {
        Some(s) => apply_stats(&raw, s)?,
        None => raw,
    };
    if encoder.input_dim() != data.feature_dim() {
        return Err(PscaError::Shape(format!(
            "encoder expects {} features, data has {}",
            encoder.input_dim(),
            data.feature_dim()
        )));
    }
    let prep = Prepared { data, train, test, stats };

    let pseudo_path = dir.join(artifacts::PSEUDO_LABELS);
    let pseudo = if pseudo_path.exists() {
        let pairs = artifacts::read_pseudo_labels(&pseudo_path)?;
        if pairs.iter().map(|p| p.0).ne(prep.train.iter().copied()) {
            return Err(format_err(&pseudo_path, "indices do not match the training split".into()));
        }
        Some(pairs.into_iter().map(|p| p.1).collect::<Vec<_>>())
    } else {
        None
    };

    let report = evaluate_codes(cfg, &prep, &encoder, &codes_s, &codes_t, pseudo.as_deref())?;
    report.write_csvs(&cfg.report_dir)?;
    Ok(vec![
        format!(
            "{} MAP = {:.4} over {} queries ({} skipped)",
            report.scenario, report.map, report.num_queries, report.skipped_queries
        ),
        format!("reports written to {}", cfg.report_dir.display()),
    ])
}

/// Applies a model's encoder (and its standardization) to a feature CSV.
pub fn encode(model_dir: &Path, input: &Path, output: &Path) -> Result<Vec<String>> {
    let encoder = artifacts::read_encoder(&model_dir.join(artifacts::ENCODER))?;
    let table = load_csv(input, false, None)?;
    let stats_path = model_dir.join(artifacts::STANDARDIZE);
    let features = if stats_path.exists() {
        let stats = artifacts::read_stats(&stats_path)?;
        if stats.mean.len() != table.features.nrows() {
            return Err(PscaError::Shape(format!(
                "standardization statistics cover {} features, input has {}",
                stats.mean.len(),
                table.features.nrows()
            )));
        }
        standardize(&table.features, Some(&stats)).0
    } else {
        table.features
    };
    let codes = encoder.encode(&features)?;
    codefile::write(output, &codes)?;
    Ok(vec![format!("{} codes of {} bits written to {}", codes.ncols(), codes.nrows(), output.display())])
}

/// Hamming ranking of every query code against the database codes, written
/// as `query,rank,db_index,distance` (ranks from 1, at most `top` per query).
pub fn retrieve(query: &Path, db: &Path, output: &Path, top: Option<usize>) -> Result<Vec<String>> {
    let q = codefile::read(query)?;
    let d = codefile::read(db)?;
    if q.nrows() != d.nrows() {
        return Err(format_err(db, format!("{} bits here, {} bits in the query file", d.nrows(), q.nrows())));
    }
    let qp = PackedCodes::from_signs(&q);
    let dp = PackedCodes::from_signs(&d);
    let keep = top.unwrap_or(dp.len()).min(dp.len());
    let mut out = b"query,rank,db_index,distance\n".to_vec();
    for i in 0..qp.len() {
        let ranked = hamming_rank(qp.code(i), &dp);
        for (rank, (idx, dist)) in ranked.db_indices.iter().zip(&ranked.distances).take(keep).enumerate() {
            let _ = writeln!(out, "{i},{},{idx},{dist}", rank + 1);
        }
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PscaError::io(parent, e))?;
    }
    fs::write(output, out).map_err(|e| PscaError::io(output, e))?;
    Ok(vec![format!("ranked {} queries against {} codes into {}", qp.len(), dp.len(), output.display())])
}

/// Synthetic dataset files `source.csv` and `target.csv` in `dir`.
pub fn synth(spec: &SyntheticSpec, dir: &Path) -> Result<Vec<String>> {
    let ds = dataset::make_synthetic(spec)?;
    fs::create_dir_all(dir).map_err(|e| PscaError::io(dir, e))?;
    let with_labels = |l: &[usize]| l.iter().map(|&v| Some(v)).collect::<Vec<_>>();
    let source = dir.join("source.csv");
    let target = dir.join("target.csv");
    save_csv(&source, &ds.source_features, &with_labels(&ds.source_labels))?;
    save_csv(&target, &ds.target_features, &with_labels(ds.target_labels.as_deref().unwrap_or(&[])))?;
    Ok(vec![format!(
        "{} classes, {} features: {} source rows in {}, {} target rows in {}",
        ds.num_classes,
        ds.feature_dim(),
        ds.num_source(),
        source.display(),
        ds.num_target(),
        target.display()
    )])
}

/// Values tried for each swept hyperparameter.
pub fn default_grid() -> Vec<(String, Vec<f64>)> {
    vec![
        ("lambda1".into(), vec![1.0, 10.0, 100.0]),
        ("lambda2".into(), vec![0.1, 1.0, 10.0]),
        ("lambda3".into(), vec![1.0, 10.0, 100.0]),
    ]
}

/// Parses `name=v1,v2,...`.
pub fn parse_grid(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| PscaError::Config(format!("grid {spec:?} is not name=v1,v2,...")))?;
    let name = name.trim();
    if !matches!(name, "lambda1" | "lambda2" | "lambda3") {
        return Err(PscaError::Config(format!("cannot sweep {name:?}; choose lambda1, lambda2 or lambda3")));
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| PscaError::Config(format!("bad grid value {v:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(PscaError::Config(format!("grid for {name} is empty")));
    }
    Ok((name.to_string(), values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub map: f64,
}

/// One-at-a-time sweep around `cfg`: train and evaluate in memory for each
/// grid point.
pub fn sweep_rows(cfg: &RunConfig, grid: &[(String, Vec<f64>)]) -> Result<Vec<SweepRow>> {
    let prep = prepare(cfg)?;
    let training = prep.training_set();
    let mut rows = Vec::new();
    for (param, values) in grid {
        for &value in values {
            let mut hp: HyperParams = cfg.hp.clone();
            match param.as_str() {
                "lambda1" => hp.lambda1 = value,
                "lambda2" => hp.lambda2 = value,
                "lambda3" => hp.lambda3 = value,
                other => return Err(PscaError::Config(format!("cannot sweep {other:?}"))),
            }
            let model = train_variant(&training, &hp, cfg.variant)?;
            let report = evaluate_codes(
                cfg,
                &prep,
                &model.encoder,
                &model.codes.source,
                &model.codes.target,
                Some(model.target_pseudo_labels()),
            )?;
            rows.push(SweepRow { param: param.clone(), value, map: report.map });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,map\n");
    for r in rows {
        out += &format!("{},{},{:.6}\n", r.param, r.value, r.map);
    }
    out
}

pub fn sweep(cfg: &RunConfig, grid: &[(String, Vec<f64>)]) -> Result<Vec<String>> {
    let rows = sweep_rows(cfg, grid)?;
    let csv = sweep_csv(&rows);
    let dir = &cfg.report_dir;
    fs::create_dir_all(dir).map_err(|e| PscaError::io(dir, e))?;
    let path: PathBuf = dir.join("sweep.csv");
    fs::write(&path, &csv).map_err(|e| PscaError::io(&path, e))?;
    Ok(csv.lines().map(str::to_string).collect())
}
