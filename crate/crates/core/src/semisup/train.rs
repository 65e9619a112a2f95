use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::losses::{consistency_loss, meanteacher_loss, supervised_loss, total_loss, PredGrad, Target, ViewPrediction};
use super::schedule::{ema_update, rampup, LrSchedule};
use super::{Method, Result, SemisupError};
use crate::augment::{
    build_view, clip_features, sample_policy, AugmentPolicy, AugmentedView, ScaleScheme, TransformId, TransportMode,
    ViewContext,
};
use crate::dataset::{BatchSampler, ClipKind, Composition, Dataset, LabeledClip};
use crate::model::{write_checkpoint, Adam, Checkpoint, ModelConfig, ModelState, Prediction};
use crate::rng::{derive_seed, domain};
use crate::signal::{FeatureConfig, MelSpectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub method: Method,
    pub epochs: usize,
    /// Defaults to one pass over the strong pool per epoch.
    pub steps_per_epoch: Option<usize>,
    pub composition: Composition,
    pub lr: LrSchedule,
    /// Epoch at which the unsupervised weights reach their final value.
    pub rampup_end: f64,
    pub ema_alpha: f64,
    /// Caps the EMA rate at `1 - 1/(step + 1)` so early teachers track the student.
    pub ema_warmup: bool,
    /// Augmented views per clip, one random transform each.
    pub views_per_clip: usize,
    pub scale: ScaleScheme,
    pub transforms: Vec<TransformId>,
    pub transport: TransportMode,
    pub median_s: f64,
    /// Validation F1 is computed every this many epochs and after the last one; 0 disables it.
    pub val_every: usize,
    /// Write a checkpoint every this many epochs (when an output directory is given).
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    /// 40 epochs, batch (2, 2, 4), random scale 5, one view per clip.
    pub fn desk(method: Method, seed: u64) -> Self {
        let epochs = 40;
        Self {
            seed,
            method,
            epochs,
            steps_per_epoch: None,
            composition: Composition::desk(),
            lr: LrSchedule::scaled(epochs),
            rampup_end: 50.0 * epochs as f64 / 200.0,
            ema_alpha: 0.999,
            ema_warmup: false,
            views_per_clip: 1,
            scale: ScaleScheme::random(5),
            transforms: TransformId::ALL.to_vec(),
            transport: TransportMode::Transport,
            median_s: 0.45,
            val_every: 5,
            checkpoint_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SemisupError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return bad("ema_alpha must lie in [0, 1)");
        }
        if self.method.uses_views() && (self.views_per_clip == 0 || self.transforms.is_empty()) {
            return bad("augmented methods need at least one view and one transform");
        }
        if !(1..=10).contains(&self.scale.global_scale) {
            return bad("global scale must lie in 1..=10");
        }
        if self.median_s <= 0.0 {
            return bad("median filter duration must be positive");
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub ramp: f64,
    pub loss_super: f64,
    pub loss_unsuper: f64,
    pub loss_cr: f64,
    pub val_collar_f1: Option<f64>,
}

pub struct TrainOutcome {
    pub student: ModelState,
    pub teacher: Option<ModelState>,
    pub adam: Adam,
    pub log: Vec<EpochRecord>,
}

/// Dataset with cached, padded features for every split and the feature statistics of the training pools.
pub struct PreparedData<'a> {
    pub dataset: &'a Dataset,
    pub view: ViewContext,
    pub train: [Vec<MelSpectrogram>; 3],
    pub validation: Vec<MelSpectrogram>,
    pub test: Vec<MelSpectrogram>,
    pub feature_mean: f64,
    pub feature_std: f64,
}

impl<'a> PreparedData<'a> {
    pub fn new(dataset: &'a Dataset, features: FeatureConfig, pool_factor: usize, transport: TransportMode) -> Result<Self> {
        if features.sample_rate != dataset.meta.sample_rate || (features.clip_len_s - dataset.meta.clip_len_s).abs() > 1e-9 {
            return Err(SemisupError::Config(format!(
                "features expect {} Hz / {} s clips, dataset has {} Hz / {} s",
                features.sample_rate, features.clip_len_s, dataset.meta.sample_rate, dataset.meta.clip_len_s
            )));
        }
        let view = ViewContext { features, frame_multiple: pool_factor, label_frames: dataset.meta.grid_frames, mode: transport };
        if view.padded_frames() / pool_factor != dataset.meta.grid_frames {
            return Err(SemisupError::Config(format!(
                "model produces {} output frames, labels have {}",
                view.padded_frames() / pool_factor,
                dataset.meta.grid_frames
            )));
        }
        let extract = |clips: &[LabeledClip]| -> Result<Vec<MelSpectrogram>> {
            clips.iter().map(|c| Ok(clip_features(c, &view)?)).collect()
        };
        let train = [extract(&dataset.train_strong)?, extract(&dataset.train_weak)?, extract(&dataset.train_unlabeled)?];
        let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
        for m in train.iter().flatten() {
            // Statistics over real frames only; padding rows would bias them.
            let real = view.features.n_frames().min(m.n_frames) * m.n_mels;
            for &v in &m.data[..real] {
                sum += v as f64;
                sq += v as f64 * v as f64;
            }
            n += real;
        }
        let mean = if n > 0 { sum / n as f64 } else { 0.0 };
        let std = if n > 0 { (sq / n as f64 - mean * mean).max(0.0).sqrt() } else { 1.0 };
        Ok(Self {
            validation: extract(&dataset.validation)?,
            test: extract(&dataset.test)?,
            dataset,
            view,
            train,
            feature_mean: mean,
            feature_std: if std > 1e-12 { std } else { 1.0 },
        })
    }

    /// `model` with this corpus's input normalization filled in.
    pub fn normalized(&self, mut model: ModelConfig) -> ModelConfig {
        model.input_mean = self.feature_mean;
        model.input_std = self.feature_std;
        model
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.dataset.meta.grid_hop_s
    }
}

/// Where to write the training log and checkpoints, and the provenance embedded in them.
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub meta: serde_json::Value,
}

fn finite(v: f64, what: &str, epoch: usize, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SemisupError::NonFinite { what: what.to_string(), epoch, step })
    }
}

/// Owned supervision of a clip: `(is_strong, values)`.
fn owned_target(clip: &LabeledClip) -> Option<(bool, Vec<f64>)> {
    match clip.kind {
        ClipKind::Strong => clip.strong.as_ref().map(|s| (true, s.as_f64())),
        ClipKind::Weak => clip.weak.as_ref().map(|w| (false, w.as_f64())),
        ClipKind::Unlabeled => None,
    }
}

/// Trains `model` (input normalization taken from `data`) with `cfg`.
pub fn train(cfg: &TrainConfig, model: ModelConfig, data: &PreparedData, artifacts: Option<&RunArtifacts>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = data.dataset;
    if model.n_classes != ds.meta.n_classes {
        return Err(SemisupError::Config(format!("model has {} classes, dataset {}", model.n_classes, ds.meta.n_classes)));
    }
    if model.pool_factor() != data.view.frame_multiple {
        return Err(SemisupError::Config("model pooling does not match prepared features".into()));
    }
    let mut view_ctx = data.view.clone();
    view_ctx.mode = cfg.transport;
    let mut student = ModelState::new(data.normalized(model), cfg.seed)?;
    let mut teacher = cfg.method.uses_teacher().then(|| student.params.clone());
    let mut adam = Adam::new(student.n_params());
    let pools = [&ds.train_strong[..], &ds.train_weak[..], &ds.train_unlabeled[..]];
    let mut sampler = BatchSampler::new(cfg.seed, pools.map(|p| p.len()), cfg.composition)?;
    let steps = cfg.steps_per_epoch.unwrap_or_else(|| ds.train_strong.len().div_ceil(cfg.composition.n_strong.max(1)));
    let (lambda_u, lambda_cr) = cfg.method.lambdas();
    let hop = data.frame_hop_s();

    let mut log_file = match artifacts {
        Some(a) => {
            std::fs::create_dir_all(&a.dir)?;
            Some(BufWriter::new(File::create(a.dir.join("train_log.jsonl"))?))
        }
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut global_step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut sums = [0.0; 3];
        for step in 0..steps {
            let e = epoch as f64 + step as f64 / steps as f64;
            let lr = cfg.lr.at(e);
            let ramp = rampup(e, cfg.rampup_end);
            let idx = sampler.next_indices();
            let picks: Vec<(usize, usize)> = [(0, &idx.strong), (1, &idx.weak), (2, &idx.unlabeled)]
                .into_iter()
                .flat_map(|(pool, v)| v.iter().map(move |&i| (pool, i)))
                .collect();
            let clips: Vec<&LabeledClip> = picks.iter().map(|&(p, i)| &pools[p][i]).collect();
            let feats: Vec<&MelSpectrogram> = picks.iter().map(|&(p, i)| &data.train[p][i]).collect();

            let mut views: Vec<(usize, AugmentedView)> = Vec::new();
            if cfg.method.uses_views() {
                for slot in 0..clips.len() {
                    let key = derive_seed(&[cfg.seed, domain::POLICY, epoch as u64, step as u64, slot as u64]);
                    let policy = sample_policy(key, cfg.views_per_clip, cfg.scale, &cfg.transforms)?;
                    for s in &policy.steps {
                        let single = AugmentPolicy { seed: policy.seed, steps: vec![s.clone()] };
                        views.push((slot, build_view(&clips, slot, Some(feats[slot]), &single, &view_ctx)?));
                    }
                }
            }

            let mut fwd_orig = Vec::with_capacity(clips.len());
            for f in &feats {
                fwd_orig.push(student.forward(f)?);
            }
            let mut fwd_views = Vec::with_capacity(views.len());
            for (_, v) in &views {
                fwd_views.push(student.forward(&v.features)?);
            }
            let p_orig: Vec<&Prediction> = fwd_orig.iter().map(|f| &f.prediction).collect();
            let p_views: Vec<&Prediction> = fwd_views.iter().map(|f| &f.prediction).collect();

            // Supervised loss over originals and views together.
            let owned: Vec<Option<(bool, Vec<f64>)>> =
                clips.iter().copied().chain(views.iter().map(|(_, v)| &v.clip)).map(owned_target).collect();
            let targets: Vec<Target> = owned
                .iter()
                .map(|o| match o {
                    Some((true, v)) => Target::Strong(v),
                    Some((false, v)) => Target::Weak(v),
                    None => Target::None,
                })
                .collect();
            let all_preds: Vec<&Prediction> = p_orig.iter().chain(&p_views).copied().collect();
            let sup = supervised_loss(&all_preds, &targets)?;
            let mut grads: Vec<PredGrad> = sup.grads;

            let mut l_unsuper = 0.0;
            if let Some(tp) = &teacher {
                let t_state = student.with_params(tp.clone())?;
                let t_preds: Vec<Prediction> = feats.iter().map(|f| t_state.predict(f)).collect::<std::result::Result<_, _>>()?;
                let t_refs: Vec<&Prediction> = t_preds.iter().collect();
                let mt = meanteacher_loss(&p_orig, &t_refs)?;
                l_unsuper = mt.value;
                for (g, m) in grads.iter_mut().zip(&mt.grads) {
                    g.add_scaled(m, ramp * lambda_u);
                }
            }
            let mut l_cr = 0.0;
            if !views.is_empty() {
                let vp: Vec<ViewPrediction> = views
                    .iter()
                    .zip(&p_views)
                    .map(|((origin, v), p)| ViewPrediction { origin: *origin, prediction: p, transport: &v.transport })
                    .collect();
                let cr = consistency_loss(&p_orig, &vp, cfg.views_per_clip)?;
                l_cr = cr.value;
                if lambda_cr > 0.0 {
                    let n = p_orig.len();
                    for (g, c) in grads[..n].iter_mut().zip(&cr.originals) {
                        g.add_scaled(c, ramp * lambda_cr);
                    }
                    for (g, c) in grads[n..].iter_mut().zip(&cr.views) {
                        g.add_scaled(c, ramp * lambda_cr);
                    }
                }
            }
            let total = total_loss((sup.value, l_unsuper, l_cr), lambda_u, lambda_cr, ramp);
            finite(total, "loss", epoch, step)?;

            let mut grad = vec![0.0; student.n_params()];
            for (f, g) in fwd_orig.into_iter().chain(fwd_views).zip(&grads) {
                let pg = f.backward(&g.strong, &g.weak)?;
                for (a, b) in grad.iter_mut().zip(&pg) {
                    *a += b;
                }
            }
            adam.update(&mut student.params, &grad, lr).map_err(|e| match e {
                crate::model::ModelError::NonFinite { index } => {
                    SemisupError::NonFinite { what: format!("gradient (parameter {index})"), epoch, step }
                }
                other => other.into(),
            })?;
            global_step += 1;
            if let Some(tp) = &mut teacher {
                let alpha = if cfg.ema_warmup { cfg.ema_alpha.min(1.0 - 1.0 / (global_step as f64 + 1.0)) } else { cfg.ema_alpha };
                ema_update(tp, &student.params, alpha)?;
            }
            sums[0] += sup.value;
            sums[1] += l_unsuper;
            sums[2] += l_cr;
        }

        let last = epoch + 1 == cfg.epochs;
        let val_collar_f1 = if cfg.val_every > 0 && ((epoch + 1) % cfg.val_every == 0 || last) && !ds.validation.is_empty() {
            Some(evaluate(&student, &data.validation, &ds.validation, hop, cfg.median_s)?.macro_f1)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            lr: cfg.lr.at(epoch as f64),
            ramp: rampup(epoch as f64, cfg.rampup_end),
            loss_super: sums[0] / steps as f64,
            loss_unsuper: sums[1] / steps as f64,
            loss_cr: sums[2] / steps as f64,
            val_collar_f1,
        };
        log::info!(
            "epoch {epoch}: super {:.4} unsuper {:.4} cr {:.4} val F1 {}",
            record.loss_super,
            record.loss_unsuper,
            record.loss_cr,
            val_collar_f1.map_or("-".to_string(), |f| format!("{:.3}", f))
        );
        if let Some(w) = &mut log_file {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        log.push(record);
        if let Some(a) = artifacts {
            if cfg.checkpoint_every.is_some_and(|k| k > 0 && (epoch + 1) % k == 0 && !last) {
                save(&a.dir.join(format!("checkpoint_epoch{:04}.sedm", epoch + 1)), &student, &teacher, &adam, epoch + 1, &a.meta)?;
            }
        }
    }
    if let Some(a) = artifacts {
        save(&a.dir.join("final.sedm"), &student, &teacher, &adam, cfg.epochs, &a.meta)?;
    }
    let teacher = match teacher {
        Some(p) => Some(student.with_params(p)?),
        None => None,
    };
    Ok(TrainOutcome { student, teacher, adam, log })
}

fn save(path: &Path, student: &ModelState, teacher: &Option<Vec<f64>>, adam: &Adam, epoch: usize, meta: &serde_json::Value) -> Result<()> {
    let ck = Checkpoint { student: student.clone(), teacher: teacher.clone(), adam: adam.clone(), epoch, meta: meta.clone() };
    write_checkpoint(path, &ck)?;
    Ok(())
}
