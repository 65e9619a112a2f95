//! Subcommand implementations. Each returns a [`CliError`] whose exit code the binary reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use sedkit_core::augment::{build_view, clip_features, sample_policy, ScaleScheme, ViewContext};
use sedkit_core::dataset::{load_dataset, save_dataset, synth_dataset, Dataset, SplitName, SynthConfig};
use sedkit_core::eval::{CollarParams, CountAccumulator, MetricReport};
use sedkit_core::model::{read_checkpoint, Prediction};
use sedkit_core::rng::{derive_seed, domain};
use sedkit_core::semisup::{evaluate, predictions_to_events, train, PreparedData, RunArtifacts};
use sedkit_core::signal::{write_audio, FeatureConfig};
use sedkit_core::LabeledClip;

use crate::config::RunConfig;
use crate::error::CliError;

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_split(name: &str) -> Result<SplitName, CliError> {
    SplitName::ALL
        .into_iter()
        .find(|s| s.dir() == name)
        .ok_or_else(|| CliError::Config(format!("unknown split `{name}`")))
}

/// Generates the synthetic corpus into `out`.
pub fn synth_data(cfg: &RunConfig, out: &Path, force: bool) -> Result<Dataset, CliError> {
    cfg.validate()?;
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        if !force {
            return Err(CliError::Config(format!("{} is not empty; pass --force to overwrite", out.display())));
        }
        if !out.join("meta.json").exists() {
            return Err(CliError::Config(format!("{} does not look like a dataset; refusing to overwrite", out.display())));
        }
        fs::remove_dir_all(out)?;
    }
    let synth = SynthConfig::for_features(&cfg.features(), cfg.pool_factor(), cfg.n_classes);
    let ds = synth_dataset(cfg.seed, cfg.corpus, &synth)?;
    save_dataset(&ds, out)?;
    write_json(&out.join("synth_config.json"), &json!({ "config": cfg.to_json(), "synth": synth }))?;
    log::info!("wrote {} clips to {}", ds.n_clips(), out.display());
    Ok(ds)
}

#[derive(Serialize)]
struct AugmentedLabel<'a> {
    id: &'a str,
    kind: sedkit_core::ClipKind,
    weak: Option<&'a [u8]>,
    /// One row of class activities per output frame.
    strong: Option<Vec<&'a [u8]>>,
}

/// Applies one sampled policy to every clip of a split.
pub fn augment(cfg: &RunConfig, data: &Path, split: &str, out: &Path, epoch: u64) -> Result<usize, CliError> {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    let split = parse_split(split)?;
    let clips = ds.split(split);
    let ctx = ViewContext {
        features: cfg.features(),
        frame_multiple: cfg.pool_factor(),
        label_frames: ds.meta.grid_frames,
        mode: cfg.transport(),
    };
    fs::create_dir_all(out.join("audio"))?;
    let mut labels = fs::File::create(out.join("labels.jsonl"))?;
    let mut policies = fs::File::create(out.join("policy.jsonl"))?;
    let scheme = ScaleScheme { mode: cfg.scale_mode, global_scale: cfg.global_scale };
    let group = cfg.batch.total().max(2);
    for (i, _) in clips.iter().enumerate() {
        // Mixup partners come from the group of `batch` consecutive clips around this one.
        let start = i / group * group;
        let batch: Vec<&LabeledClip> = clips[start..(start + group).min(clips.len())].iter().collect();
        let key = derive_seed(&[cfg.seed, domain::POLICY, epoch, i as u64]);
        let policy = sample_policy(key, cfg.views, scheme, &cfg.transforms)?;
        let view = build_view(&batch, i - start, None, &policy, &ctx)?;
        let clip = &view.clip;
        let id = format!("{}_aug", clips[i].id);
        write_audio(&out.join("audio").join(format!("{id}.{}", ds.meta.format.extension())), &clip.waveform, ds.meta.format)?;
        let label = AugmentedLabel {
            id: &id,
            kind: clip.kind,
            weak: clip.weak.as_ref().map(|w| w.0.as_slice()),
            strong: clip.strong.as_ref().map(|s| s.grid.chunks(s.n_classes).collect()),
        };
        serde_json::to_writer(&mut labels, &label)?;
        labels.write_all(b"\n")?;
        serde_json::to_writer(&mut policies, &json!({ "id": clips[i].id, "seed": policy.seed, "steps": policy.steps, "applied": view.applied }))?;
        policies.write_all(b"\n")?;
    }
    write_json(&out.join("config.json"), &json!({ "config": cfg.to_json(), "split": split.dir(), "epoch": epoch }))?;
    Ok(clips.len())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub final_val_collar_f1: Option<f64>,
    pub test_collar_f1: f64,
}

fn train_one(cfg: &RunConfig, data: &PreparedData, seed: u64, out: &Path) -> Result<TrainSummary, CliError> {
    let mut resolved = cfg.clone();
    resolved.seed = seed;
    let meta = json!({ "config": resolved.to_json(), "features": cfg.features(), "dataset_seed": data.dataset.meta.seed });
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &meta)?;
    let artifacts = RunArtifacts { dir: out.to_path_buf(), meta };
    let outcome = train(&cfg.train_config(seed), cfg.model(0.0, 1.0), data, Some(&artifacts))?;
    let test = evaluate(&outcome.student, &data.test, &data.dataset.test, data.frame_hop_s(), cfg.median_s)?;
    Ok(TrainSummary {
        seed,
        final_val_collar_f1: outcome.log.last().and_then(|r| r.val_collar_f1),
        test_collar_f1: test.macro_f1,
    })
}

fn prepare<'a>(cfg: &RunConfig, ds: &'a Dataset) -> Result<PreparedData<'a>, CliError> {
    if ds.meta.n_classes != cfg.n_classes {
        return Err(CliError::Config(format!("config has {} classes, dataset {}", cfg.n_classes, ds.meta.n_classes)));
    }
    Ok(PreparedData::new(ds, cfg.features(), cfg.pool_factor(), cfg.transport())?)
}

/// Trains one model; writes `config.json`, `train_log.jsonl`, `final.sedm` and `summary.json` into `out`.
pub fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    let prepared = prepare(cfg, &ds)?;
    let summary = train_one(cfg, &prepared, cfg.seed, out)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Scores frame predictions against the clips' reference events.
pub fn score(preds: &[Prediction], clips: &[LabeledClip], frame_hop_s: f64, median_s: f64) -> Result<MetricReport, CliError> {
    let n_classes = preds.first().map_or(0, |p| p.n_classes);
    let mut acc = CountAccumulator::new(n_classes, CollarParams::default());
    for (p, clip) in preds.iter().zip(clips) {
        let reference = clip.events.as_ref().ok_or_else(|| CliError::Data(format!("clip {} has no reference events", clip.id)))?;
        acc.add(reference, &predictions_to_events(p, frame_hop_s, median_s));
    }
    Ok(acc.report())
}

/// Evaluates a checkpoint on a split and writes the JSON report to `out` when given.
pub fn evaluate_cmd(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    use_teacher: bool,
    median_s: f64,
    out: Option<&Path>,
) -> Result<MetricReport, CliError> {
    let ck = read_checkpoint(checkpoint)?;
    let ds = load_dataset(data)?;
    let split_name = parse_split(split)?;
    let state = if use_teacher {
        let t = ck.teacher.clone().ok_or_else(|| CliError::Config("checkpoint has no teacher (method without mean teacher)".into()))?;
        ck.student.with_params(t)?
    } else {
        ck.student.clone()
    };
    // Feature settings come from the run that produced the checkpoint, falling back to the dataset.
    let features = match ck.meta.get("features") {
        Some(f) => serde_json::from_value::<FeatureConfig>(f.clone())?,
        None => FeatureConfig::desk(),
    };
    let ctx = ViewContext {
        features,
        frame_multiple: state.config.pool_factor(),
        label_frames: ds.meta.grid_frames,
        mode: Default::default(),
    };
    let clips = ds.split(split_name);
    let mut preds = Vec::with_capacity(clips.len());
    for clip in clips {
        preds.push(state.predict(&clip_features(clip, &ctx)?)?);
    }
    let report = score(&preds, clips, ds.meta.grid_hop_s, median_s)?;
    if let Some(path) = out {
        write_json(
            path,
            &json!({
                "checkpoint": checkpoint.display().to_string(),
                "split": split,
                "use_teacher": use_teacher,
                "median_s": median_s,
                "run": ck.meta,
                "report": report,
            }),
        )?;
    }
    Ok(report)
}

/// One grid cell of an ablation table.
#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub config: RunConfig,
}

/// Cells of table 1 (methods x activations), 2 (scale schemes) or 3 (leave one transform out).
pub fn ablation_cells(base: &RunConfig, table: u8) -> Result<Vec<Cell>, CliError> {
    use sedkit_core::augment::{ScaleMode, TransformId};
    use sedkit_core::model::Activation;
    use sedkit_core::semisup::Method;
    let mut cells = Vec::new();
    match table {
        1 => {
            for act in [Activation::Glu, Activation::Cg] {
                for method in Method::TABLE {
                    let mut c = base.clone();
                    c.activation = act;
                    c.method = method;
                    cells.push(Cell { name: format!("{act} {method}"), config: c });
                }
            }
        }
        2 => {
            for mode in [ScaleMode::Fixed, ScaleMode::RandomUpperBound] {
                for scale in 3..=6u8 {
                    let mut c = base.clone();
                    c.activation = Activation::Cg;
                    c.method = Method::MtCrRda;
                    c.scale_mode = mode;
                    c.global_scale = scale;
                    let m = if mode == ScaleMode::Fixed { "fixed" } else { "random" };
                    cells.push(Cell { name: format!("{m} {scale}"), config: c });
                }
            }
        }
        3 => {
            let mut all = base.clone();
            all.activation = Activation::Glu;
            all.method = Method::CrRda;
            all.transforms = TransformId::ALL.to_vec();
            cells.push(Cell { name: "all".into(), config: all.clone() });
            for t in TransformId::ALL {
                let mut c = all.clone();
                c.transforms.retain(|&x| x != t);
                cells.push(Cell { name: format!("without {t}"), config: c });
            }
        }
        _ => return Err(CliError::Config(format!("unknown table {table}; expected 1, 2 or 3"))),
    }
    Ok(cells)
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: String,
    pub seed: u64,
    pub test_collar_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub cell: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single run) of per-seed scores, in cell order.
pub fn aggregate(results: &[CellResult], order: &[String]) -> Vec<TableRow> {
    let mut by_cell: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_cell.entry(&r.cell).or_default().push(r.test_collar_f1);
    }
    order
        .iter()
        .filter_map(|cell| {
            let v = by_cell.get(cell.as_str())?;
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            Some(TableRow { cell: cell.clone(), runs: v.len(), mean, std })
        })
        .collect()
}

pub fn table_text(rows: &[TableRow]) -> String {
    let width = rows.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  runs  collar F1 (%)\n", "cell");
    for r in rows {
        s.push_str(&format!("{:<width$}  {:>4}  {:.1} ± {:.1}\n", r.cell, r.runs, 100.0 * r.mean, 100.0 * r.std));
    }
    s
}

/// Reads every `result.json` below `dir`.
pub fn collect_results(dir: &Path) -> Result<Vec<CellResult>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&d)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "result.json") {
                found.push(serde_json::from_str(&fs::read_to_string(&p)?)?);
            }
        }
    }
    Ok(found)
}

/// Runs (or resumes) an ablation grid and writes `table.json` / `table.txt`.
pub fn ablate(base: &RunConfig, data: &Path, out: &Path, table: u8) -> Result<Vec<TableRow>, CliError> {
    base.validate()?;
    let cells = ablation_cells(base, table)?;
    let ds = load_dataset(data)?;
    let prepared = prepare(base, &ds)?;
    let root = out.join(format!("table{table}"));
    for cell in &cells {
        cell.config.validate()?;
        for &seed in &base.seeds {
            let dir = root.join(slug(&cell.name)).join(format!("seed{seed}"));
            if dir.join("result.json").exists() {
                log::info!("{} seed {seed}: reusing finished run", cell.name);
                continue;
            }
            log::info!("{} seed {seed}: training", cell.name);
            let summary = train_one(&cell.config, &prepared, seed, &dir)?;
            write_json(&dir.join("result.json"), &CellResult { cell: cell.name.clone(), seed, test_collar_f1: summary.test_collar_f1 })?;
        }
    }
    let order: Vec<String> = cells.iter().map(|c| c.name.clone()).collect();
    let wanted: Vec<CellResult> = collect_results(&root)?
        .into_iter()
        .filter(|r| base.seeds.contains(&r.seed))
        .collect();
    let rows = aggregate(&wanted, &order);
    write_json(&root.join("table.json"), &json!({ "table": table, "config": base.to_json(), "rows": rows }))?;
    fs::write(root.join("table.txt"), table_text(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(cell: &str, seed: u64, f1: f64) -> CellResult {
        CellResult { cell: cell.into(), seed, test_collar_f1: f1 }
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let rs = [result("a", 1, 0.5), result("b", 1, 0.9), result("a", 2, 0.7), result("a", 3, 0.6)];
        let rows = aggregate(&rs, &["b".into(), "a".into(), "missing".into()]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], TableRow { cell: "b".into(), runs: 1, mean: 0.9, std: 0.0 });
        assert_eq!(rows[1].runs, 3);
        assert!((rows[1].mean - 0.6).abs() < 1e-12);
        assert!((rows[1].std - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ablation_grids() {
        let base = RunConfig::default();
        assert_eq!(ablation_cells(&base, 1).unwrap().len(), 8);
        let t2 = ablation_cells(&base, 2).unwrap();
        assert_eq!(t2.len(), 8);
        assert!(t2.iter().all(|c| c.config.validate().is_ok()));
        let t3 = ablation_cells(&base, 3).unwrap();
        assert_eq!(t3.len(), 9);
        assert!(t3[1..].iter().all(|c| c.config.transforms.len() == 7));
        assert!(matches!(ablation_cells(&base, 4), Err(CliError::Config(_))));
    }

    #[test]
    fn splits_by_directory_name() {
        assert_eq!(parse_split("validation").unwrap(), SplitName::Validation);
        assert!(parse_split("dev").is_err());
    }
}
