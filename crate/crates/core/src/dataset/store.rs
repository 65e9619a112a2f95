use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClipKind, DatasetError, LabeledClip, Result, StrongLabel, WeakLabel};
use crate::eval::EventList;
use crate::signal::{read_audio, write_audio, AudioFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_classes: usize,
    pub sample_rate: u32,
    pub clip_len_s: f64,
    pub grid_frames: usize,
    pub grid_hop_s: f64,
    pub seed: Option<u64>,
    pub format: AudioFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    TrainStrong,
    TrainWeak,
    TrainUnlabeled,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 5] =
        [Self::TrainStrong, Self::TrainWeak, Self::TrainUnlabeled, Self::Validation, Self::Test];

    pub fn dir(self) -> &'static str {
        match self {
            Self::TrainStrong => "train_strong",
            Self::TrainWeak => "train_weak",
            Self::TrainUnlabeled => "train_unlabeled",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub train_strong: Vec<LabeledClip>,
    pub train_weak: Vec<LabeledClip>,
    pub train_unlabeled: Vec<LabeledClip>,
    pub validation: Vec<LabeledClip>,
    pub test: Vec<LabeledClip>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &[LabeledClip] {
        match name {
            SplitName::TrainStrong => &self.train_strong,
            SplitName::TrainWeak => &self.train_weak,
            SplitName::TrainUnlabeled => &self.train_unlabeled,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    fn split_mut(&mut self, name: SplitName) -> &mut Vec<LabeledClip> {
        match name {
            SplitName::TrainStrong => &mut self.train_strong,
            SplitName::TrainWeak => &mut self.train_weak,
            SplitName::TrainUnlabeled => &mut self.train_unlabeled,
            SplitName::Validation => &mut self.validation,
            SplitName::Test => &mut self.test,
        }
    }

    pub fn n_clips(&self) -> usize {
        SplitName::ALL.iter().map(|&s| self.split(s).len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EventRecord {
    class: usize,
    onset: f64,
    offset: f64,
}

/// One line of `labels.jsonl`; field names are part of the on-disk contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelRecord {
    id: String,
    kind: ClipKind,
    weak: Option<Vec<u8>>,
    events: Vec<EventRecord>,
}

/// One line of `truth.jsonl`: evaluation-only ground truth for every clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthRecord {
    id: String,
    events: Vec<EventRecord>,
}

fn to_records(events: &EventList) -> Vec<EventRecord> {
    events.iter().map(|(class, e)| EventRecord { class, onset: e.onset, offset: e.offset }).collect()
}

fn from_records(records: &[EventRecord], n_classes: usize) -> std::result::Result<EventList, String> {
    let mut list = EventList::new(n_classes);
    for r in records {
        if r.class >= n_classes {
            return Err(format!("class {} out of range", r.class));
        }
        if !(r.onset < r.offset) {
            return Err(format!("event ({}, {}) has onset >= offset", r.onset, r.offset));
        }
        list.push(r.class, r.onset, r.offset);
    }
    list.sort();
    Ok(list)
}

const CHECKSUMS: &str = "checksums.sha256";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `meta.json`, per-split `labels.jsonl` / `truth.jsonl` / `audio/`, and a checksum list.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let meta_path = root.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&ds.meta).expect("meta serializes") + "\n")?;
    written.push(PathBuf::from("meta.json"));
    for split in SplitName::ALL {
        let dir = root.join(split.dir());
        fs::create_dir_all(dir.join("audio"))?;
        let mut labels = String::new();
        let mut truth = String::new();
        for clip in ds.split(split) {
            let rel = PathBuf::from(split.dir()).join("audio").join(format!("{}.{}", clip.id, ds.meta.format.extension()));
            write_audio(&root.join(&rel), &clip.waveform, ds.meta.format)?;
            written.push(rel);
            let visible = match clip.kind {
                ClipKind::Strong => clip.events.as_ref().map(to_records).unwrap_or_default(),
                _ => Vec::new(),
            };
            let rec = LabelRecord { id: clip.id.clone(), kind: clip.kind, weak: clip.weak.as_ref().map(|w| w.0.clone()), events: visible };
            labels.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            labels.push('\n');
            if let Some(ev) = &clip.events {
                let rec = TruthRecord { id: clip.id.clone(), events: to_records(ev) };
                truth.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                truth.push('\n');
            }
        }
        fs::write(dir.join("labels.jsonl"), labels)?;
        fs::write(dir.join("truth.jsonl"), truth)?;
        written.push(PathBuf::from(split.dir()).join("labels.jsonl"));
        written.push(PathBuf::from(split.dir()).join("truth.jsonl"));
    }
    let mut sums = fs::File::create(root.join(CHECKSUMS))?;
    for rel in &written {
        let digest = sha256_hex(&fs::read(root.join(rel))?);
        writeln!(sums, "{digest}  {}", rel.display())?;
    }
    Ok(())
}

fn verify_checksums(root: &Path) -> Result<()> {
    let path = root.join(CHECKSUMS);
    if !path.exists() {
        return Err(DatasetError::Missing(path));
    }
    for (i, line) in fs::read_to_string(&path)?.lines().enumerate() {
        let (digest, rel) = line.split_once("  ").ok_or_else(|| DatasetError::Malformed {
            file: path.clone(),
            line: i + 1,
            reason: "expected `<sha256>  <path>`".into(),
        })?;
        let file = root.join(rel);
        if !file.exists() {
            return Err(DatasetError::Missing(file));
        }
        if sha256_hex(&fs::read(&file)?) != digest {
            return Err(DatasetError::Checksum(file));
        }
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    if !path.exists() {
        return Err(DatasetError::Missing(path.to_path_buf()));
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            file: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Loads a dataset written by [`save_dataset`], verifying checksums first.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let meta_path = root.join("meta.json");
    if !meta_path.exists() {
        return Err(DatasetError::Missing(meta_path));
    }
    verify_checksums(root)?;
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| DatasetError::Malformed { file: meta_path.clone(), line: e.line(), reason: e.to_string() })?;
    let mut ds = Dataset {
        meta: meta.clone(),
        train_strong: Vec::new(),
        train_weak: Vec::new(),
        train_unlabeled: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for split in SplitName::ALL {
        let dir = root.join(split.dir());
        let labels_path = dir.join("labels.jsonl");
        let truth_path = dir.join("truth.jsonl");
        let labels: Vec<(usize, LabelRecord)> = read_jsonl(&labels_path)?;
        let truth: std::collections::HashMap<String, Vec<EventRecord>> =
            read_jsonl::<TruthRecord>(&truth_path)?.into_iter().map(|(_, r)| (r.id, r.events)).collect();
        let mut clips = Vec::with_capacity(labels.len());
        for (line, rec) in labels {
            let bad = |reason: String| DatasetError::Malformed { file: labels_path.clone(), line, reason };
            let waveform = read_audio(&dir.join("audio").join(format!("{}.{}", rec.id, meta.format.extension())))?;
            let events = match truth.get(&rec.id) {
                Some(r) => Some(from_records(r, meta.n_classes).map_err(bad)?),
                None => None,
            };
            let weak = rec.weak.map(WeakLabel);
            if let Some(w) = &weak {
                if w.0.len() != meta.n_classes || w.0.iter().any(|&v| v > 1) {
                    return Err(bad("weak vector must hold one 0/1 entry per class".into()));
                }
            }
            let clip = match rec.kind {
                ClipKind::Strong => {
                    let visible = from_records(&rec.events, meta.n_classes).map_err(bad)?;
                    let strong = StrongLabel::from_events(&visible, meta.grid_frames, meta.grid_hop_s);
                    if weak.as_ref() != Some(&strong.weak()) {
                        return Err(bad("weak vector disagrees with strong events".into()));
                    }
                    LabeledClip { id: rec.id, waveform, kind: ClipKind::Strong, strong: Some(strong), weak, events: Some(visible) }
                }
                ClipKind::Weak => {
                    if weak.is_none() {
                        return Err(bad("weak clip without weak vector".into()));
                    }
                    LabeledClip { id: rec.id, waveform, kind: ClipKind::Weak, strong: None, weak, events }
                }
                ClipKind::Unlabeled => {
                    LabeledClip { id: rec.id, waveform, kind: ClipKind::Unlabeled, strong: None, weak: None, events }
                }
            };
            clips.push(clip);
        }
        *ds.split_mut(split) = clips;
    }
    Ok(ds)
}
