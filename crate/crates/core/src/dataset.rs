//! On-disk dataset: one folder per scenario, one JSON file per stored frame.
//!
//! ```text
//! <root>/options.json                 common answer options per qid
//! <root>/<scenario>/meta.json         entry/exit frames
//! <root>/<scenario>/history.jsonl     append-only edit log
//! <root>/<scenario>/0000007.json      frame record
//! <root>/<scenario>/0000007_bev.png   rendered inputs
//! <root>/<scenario>/states/0000007.json  world snapshot
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::expert::QaPair;
use crate::schema::{validate, SchemaError, SchemaKind};
use crate::world::WorldState;

pub const INDEX_WIDTH: usize = 7;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("no frame {frame_index} in scenario {scenario:?}")]
    NotFound { scenario: String, frame_index: u64 },
    #[error("no scenario {0:?}")]
    NoScenario(String),
    #[error("frame {frame_index} has no question {qid}")]
    UnknownQid { frame_index: u64, qid: u32 },
    #[error("status cannot go from {from:?} to {to:?}")]
    BadTransition { from: FrameStatus, to: FrameStatus },
    #[error("entry frame {entry} is after exit frame {exit}")]
    BadInterval { entry: u64, exit: u64 },
    #[error("invalid scenario name {0:?}")]
    BadName(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameStatus {
    #[default]
    Raw,
    Controversial,
    Verified,
}

/// Pose and size of one object, for the full view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub id: String,
    pub kind: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub speed: f64,
}

impl ObjectBox {
    pub fn ego(world: &WorldState) -> Self {
        let e = &world.ego;
        Self {
            id: "ego".into(),
            kind: "vehicle".into(),
            x: e.pose.x,
            y: e.pose.y,
            heading: e.pose.heading,
            length: e.bbox.length,
            width: e.bbox.width,
            speed: e.speed,
        }
    }

    pub fn actors(world: &WorldState) -> Vec<Self> {
        world
            .actors
            .iter()
            .map(|a| Self {
                id: a.id.clone(),
                kind: a.kind.as_str().into(),
                x: a.pose.x,
                y: a.pose.y,
                heading: a.pose.heading,
                length: a.bbox.length,
                width: a.bbox.width,
                speed: a.speed,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scenario: String,
    pub frame_index: u64,
    pub qa_pairs: Vec<QaPair>,
    #[serde(default)]
    pub policy_answers: BTreeMap<u32, String>,
    /// File names relative to the scenario folder.
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default)]
    pub status: FrameStatus,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub controversial_qids: BTreeSet<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego: Option<ObjectBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectBox>,
}

impl FrameRecord {
    pub fn new(scenario: &str, frame_index: u64, qa_pairs: Vec<QaPair>) -> Self {
        Self {
            scenario: scenario.into(),
            frame_index,
            qa_pairs,
            policy_answers: BTreeMap::new(),
            images: Vec::new(),
            status: FrameStatus::Raw,
            controversial_qids: BTreeSet::new(),
            ego: None,
            objects: Vec::new(),
        }
    }

    pub fn qa(&self, qid: u32) -> Option<&QaPair> {
        self.qa_pairs.iter().find(|q| q.qid == qid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditTarget {
    #[default]
    Gt,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub scenario: String,
    pub frame_index: u64,
    pub qid: u32,
    #[serde(default)]
    pub target: EditTarget,
    pub old_value: String,
    pub new_value: String,
    pub timestamp: String,
    pub marked_controversial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub entry_frame: u64,
    /// Exclusive; `None` leaves the interval open.
    pub exit_frame: Option<u64>,
}

impl ScenarioMeta {
    pub fn contains(&self, frame: u64) -> bool {
        frame >= self.entry_frame && self.exit_frame.is_none_or(|e| frame < e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredFrame {
    pub record: FrameRecord,
    /// Outside the scenario's entry/exit interval.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub raw: usize,
    pub controversial: usize,
    pub verified: usize,
    /// Stored frames outside the interval; not in the other counts.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOverview {
    pub name: String,
    pub entry_frame: u64,
    pub exit_frame: Option<u64>,
    pub frames: Vec<u64>,
    pub counts: StatusCounts,
}

#[derive(Debug, Clone, Default)]
pub struct QaFilter {
    pub from_frame: Option<u64>,
    /// Exclusive.
    pub to_frame: Option<u64>,
    /// Empty means every qid.
    pub qids: BTreeSet<u32>,
    pub keyword: Option<String>,
}

pub fn frame_file_name(frame_index: u64) -> String {
    format!("{frame_index:0width$}.json", width = INDEX_WIDTH)
}

fn parse_frame_file_name(name: &str) -> Option<u64> {
    let stem = name.strip_suffix(".json")?;
    (stem.len() == INDEX_WIDTH && stem.bytes().all(|b| b.is_ascii_digit())).then(|| stem.parse().ok())?
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Pretty JSON with a trailing newline; the byte layout is stable for equal values.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn read_json(path: &Path) -> Result<Value, StoreError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json { path: path.into(), source })
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    clock: fn() -> String,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), clock: now_rfc3339 }
    }

    /// Replaces the timestamp source of edit records.
    pub fn with_clock(mut self, clock: fn() -> String) -> Self {
        self.clock = clock;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn scenario_dir(&self, scenario: &str) -> Result<PathBuf, StoreError> {
        if !valid_name(scenario) {
            return Err(StoreError::BadName(scenario.into()));
        }
        Ok(self.root.join(scenario))
    }

    pub fn frame_path(&self, scenario: &str, frame_index: u64) -> Result<PathBuf, StoreError> {
        Ok(self.scenario_dir(scenario)?.join(frame_file_name(frame_index)))
    }

    fn history_path(&self, scenario: &str) -> Result<PathBuf, StoreError> {
        Ok(self.scenario_dir(scenario)?.join("history.jsonl"))
    }

    fn meta_path(&self, scenario: &str) -> Result<PathBuf, StoreError> {
        Ok(self.scenario_dir(scenario)?.join("meta.json"))
    }

    /// Scenario folders, sorted by name.
    pub fn scenarios(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(io(&self.root)(e)),
        };
        for entry in entries {
            let entry = entry.map_err(io(&self.root))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.path().is_dir() && valid_name(&name) && entry.path().join("meta.json").exists() {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Stored frame indices, ascending.
    pub fn frames(&self, scenario: &str) -> Result<Vec<u64>, StoreError> {
        let dir = self.scenario_dir(scenario)?;
        if !dir.is_dir() {
            return Err(StoreError::NoScenario(scenario.into()));
        }
        let mut out: Vec<u64> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| parse_frame_file_name(&e.file_name().to_string_lossy()))
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn meta(&self, scenario: &str) -> Result<ScenarioMeta, StoreError> {
        let path = self.meta_path(scenario)?;
        if !path.exists() {
            return Err(StoreError::NoScenario(scenario.into()));
        }
        let v = read_json(&path)?;
        validate(SchemaKind::ScenarioMeta, &v).map_err(|source| StoreError::Schema { path: path.clone(), source })?;
        serde_json::from_value(v).map_err(|source| StoreError::Json { path, source })
    }

    fn ensure_scenario(&self, scenario: &str) -> Result<(), StoreError> {
        let path = self.meta_path(scenario)?;
        if !path.exists() {
            let meta = ScenarioMeta { name: scenario.into(), entry_frame: 0, exit_frame: None };
            write_atomic(&path, &to_json_bytes(&meta))?;
        }
        Ok(())
    }

    pub fn set_interval(&self, scenario: &str, entry: u64, exit: Option<u64>) -> Result<ScenarioMeta, StoreError> {
        let mut meta = self.meta(scenario)?;
        if let Some(e) = exit {
            if entry > e {
                return Err(StoreError::BadInterval { entry, exit: e });
            }
        }
        meta.entry_frame = entry;
        meta.exit_frame = exit;
        write_atomic(&self.meta_path(scenario)?, &to_json_bytes(&meta))?;
        Ok(meta)
    }

    fn append_history(&self, records: &[EditRecord]) -> Result<(), StoreError> {
        let Some(first) = records.first() else { return Ok(()) };
        let path = self.history_path(&first.scenario)?;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
        for r in records {
            let mut line = serde_json::to_vec(r).expect("edit record serializes");
            line.push(b'\n');
            f.write_all(&line).map_err(io(&path))?;
        }
        Ok(())
    }

    pub fn history(&self, scenario: &str) -> Result<Vec<EditRecord>, StoreError> {
        let path = self.history_path(scenario)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path)(e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|source| StoreError::Json { path: path.clone(), source }))
            .collect()
    }

    /// Writes a frame. Answers that change on overwrite are logged to history.
    pub fn write_frame(&self, record: &FrameRecord) -> Result<PathBuf, StoreError> {
        self.ensure_scenario(&record.scenario)?;
        let path = self.frame_path(&record.scenario, record.frame_index)?;
        let mut edits = Vec::new();
        if path.exists() {
            if let Ok(old) = self.read_frame(&record.scenario, record.frame_index) {
                let old = old.record;
                for qa in &record.qa_pairs {
                    if let Some(prev) = old.qa(qa.qid) {
                        if prev.gt_answer_text != qa.gt_answer_text {
                            edits.push(self.edit_record(record, qa.qid, EditTarget::Gt, &prev.gt_answer_text, &qa.gt_answer_text, false));
                        }
                    }
                }
                for (qid, new) in &record.policy_answers {
                    if let Some(prev) = old.policy_answers.get(qid) {
                        if prev != new {
                            edits.push(self.edit_record(record, *qid, EditTarget::Policy, prev, new, false));
                        }
                    }
                }
            }
        }
        write_atomic(&path, &to_json_bytes(record))?;
        self.append_history(&edits)?;
        Ok(path)
    }

    fn edit_record(&self, r: &FrameRecord, qid: u32, target: EditTarget, old: &str, new: &str, marked: bool) -> EditRecord {
        EditRecord {
            scenario: r.scenario.clone(),
            frame_index: r.frame_index,
            qid,
            target,
            old_value: old.into(),
            new_value: new.into(),
            timestamp: (self.clock)(),
            marked_controversial: marked,
        }
    }

    pub fn read_frame(&self, scenario: &str, frame_index: u64) -> Result<StoredFrame, StoreError> {
        let path = self.frame_path(scenario, frame_index)?;
        if !path.exists() {
            return Err(StoreError::NotFound { scenario: scenario.into(), frame_index });
        }
        let v = read_json(&path)?;
        validate(SchemaKind::Frame, &v).map_err(|source| StoreError::Schema { path: path.clone(), source })?;
        let record: FrameRecord = serde_json::from_value(v).map_err(|source| StoreError::Json { path, source })?;
        let excluded = !self.meta(scenario).map(|m| m.contains(frame_index)).unwrap_or(true);
        Ok(StoredFrame { record, excluded })
    }

    /// Replaces a ground-truth answer and optionally marks the entry.
    pub fn edit_answer(
        &self,
        scenario: &str,
        frame_index: u64,
        qid: u32,
        new_text: &str,
        mark: Option<FrameStatus>,
    ) -> Result<EditRecord, StoreError> {
        let mut rec = self.read_frame(scenario, frame_index)?.record;
        let qa = rec
            .qa_pairs
            .iter_mut()
            .find(|q| q.qid == qid)
            .ok_or(StoreError::UnknownQid { frame_index, qid })?;
        let old = std::mem::replace(&mut qa.gt_answer_text, new_text.to_string());
        match mark {
            Some(FrameStatus::Controversial) => {
                rec.controversial_qids.insert(qid);
            }
            Some(FrameStatus::Verified) => {
                rec.controversial_qids.remove(&qid);
            }
            Some(FrameStatus::Raw) => {
                if rec.status != FrameStatus::Raw {
                    return Err(StoreError::BadTransition { from: rec.status, to: FrameStatus::Raw });
                }
            }
            None => {}
        }
        rec.status = if !rec.controversial_qids.is_empty() {
            FrameStatus::Controversial
        } else if mark == Some(FrameStatus::Verified) || rec.status == FrameStatus::Controversial {
            FrameStatus::Verified
        } else {
            rec.status
        };
        let edit = self.edit_record(&rec, qid, EditTarget::Gt, &old, new_text, mark == Some(FrameStatus::Controversial));
        write_atomic(&self.frame_path(scenario, frame_index)?, &to_json_bytes(&rec))?;
        self.append_history(std::slice::from_ref(&edit))?;
        Ok(edit)
    }

    /// Frame-level status marking. Verifying clears per-entry marks.
    pub fn set_status(&self, scenario: &str, frame_index: u64, status: FrameStatus) -> Result<FrameRecord, StoreError> {
        let mut rec = self.read_frame(scenario, frame_index)?.record;
        if status == FrameStatus::Raw && rec.status != FrameStatus::Raw {
            return Err(StoreError::BadTransition { from: rec.status, to: status });
        }
        if status == FrameStatus::Verified {
            rec.controversial_qids.clear();
        }
        rec.status = status;
        write_atomic(&self.frame_path(scenario, frame_index)?, &to_json_bytes(&rec))?;
        Ok(rec)
    }

    pub fn overview(&self) -> Result<Vec<ScenarioOverview>, StoreError> {
        let mut out = Vec::new();
        for name in self.scenarios()? {
            let meta = self.meta(&name)?;
            let frames = self.frames(&name)?;
            let mut counts = StatusCounts::default();
            for &f in &frames {
                if !meta.contains(f) {
                    counts.excluded += 1;
                    continue;
                }
                match self.read_frame(&name, f) {
                    Ok(sf) => match sf.record.status {
                        FrameStatus::Raw => counts.raw += 1,
                        FrameStatus::Controversial => counts.controversial += 1,
                        FrameStatus::Verified => counts.verified += 1,
                    },
                    Err(e) => log::warn!("{e}"),
                }
            }
            out.push(ScenarioOverview {
                name,
                entry_frame: meta.entry_frame,
                exit_frame: meta.exit_frame,
                frames,
                counts,
            });
        }
        Ok(out)
    }

    /// QA pairs of `scenario` matching every given filter.
    pub fn filter_qas(&self, scenario: &str, filter: &QaFilter) -> Result<Vec<QaPair>, StoreError> {
        let kw = filter.keyword.as_ref().map(|k| k.to_lowercase()).filter(|k| !k.is_empty());
        let mut out = Vec::new();
        for f in self.frames(scenario)? {
            if filter.from_frame.is_some_and(|a| f < a) || filter.to_frame.is_some_and(|b| f >= b) {
                continue;
            }
            let rec = match self.read_frame(scenario, f) {
                Ok(r) => r.record,
                Err(e) => {
                    log::warn!("{e}");
                    continue;
                }
            };
            for qa in rec.qa_pairs {
                if !filter.qids.is_empty() && !filter.qids.contains(&qa.qid) {
                    continue;
                }
                if let Some(k) = &kw {
                    let hay = format!("{}\n{}", qa.question_text, qa.gt_answer_text).to_lowercase();
                    if !hay.contains(k) {
                        continue;
                    }
                }
                out.push(qa);
            }
        }
        Ok(out)
    }

    pub fn write_image(&self, scenario: &str, frame_index: u64, slot: &str, png: &[u8]) -> Result<String, StoreError> {
        if !valid_name(slot) {
            return Err(StoreError::BadName(slot.into()));
        }
        let name = format!("{frame_index:0width$}_{slot}.png", width = INDEX_WIDTH);
        write_atomic(&self.scenario_dir(scenario)?.join(&name), png)?;
        Ok(name)
    }

    /// Bytes of a file named in a frame record's `images`.
    pub fn read_image(&self, scenario: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        if !valid_name(name) {
            return Err(StoreError::BadName(name.into()));
        }
        let path = self.scenario_dir(scenario)?.join(name);
        fs::read(&path).map_err(io(&path))
    }

    pub fn write_state(&self, world: &WorldState) -> Result<PathBuf, StoreError> {
        let scenario = &world.scenario_meta.name;
        self.ensure_scenario(scenario)?;
        let path = self.scenario_dir(scenario)?.join("states").join(frame_file_name(world.frame_index));
        write_atomic(&path, &to_json_bytes(world))?;
        Ok(path)
    }

    /// Arbitrary JSON document in a scenario folder, e.g. `episode.json`.
    pub fn write_doc<T: Serialize>(&self, scenario: &str, name: &str, value: &T) -> Result<PathBuf, StoreError> {
        self.ensure_scenario(scenario)?;
        let path = self.scenario_dir(scenario)?.join(name);
        write_atomic(&path, &to_json_bytes(value))?;
        Ok(path)
    }

    pub fn read_doc(&self, scenario: &str, name: &str) -> Result<Value, StoreError> {
        read_json(&self.scenario_dir(scenario)?.join(name))
    }

    fn options_path(&self) -> PathBuf {
        self.root.join("options.json")
    }

    /// Common answer options, per qid, shared across the dataset.
    pub fn options(&self) -> Result<BTreeMap<u32, Vec<String>>, StoreError> {
        let path = self.options_path();
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        serde_json::from_value(read_json(&path)?).map_err(|source| StoreError::Json { path, source })
    }

    pub fn add_option(&self, qid: u32, text: &str) -> Result<Vec<String>, StoreError> {
        let mut all = self.options()?;
        let list = all.entry(qid).or_default();
        if !list.iter().any(|t| t == text) {
            list.push(text.to_string());
        }
        let out = list.clone();
        write_atomic(&self.options_path(), &to_json_bytes(&all))?;
        Ok(out)
    }
}

/// World snapshots under `<dir>/states/` or directly in `dir`, by frame.
pub fn state_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>, StoreError> {
    let base = if dir.join("states").is_dir() { dir.join("states") } else { dir.to_path_buf() };
    let mut out: Vec<(u64, PathBuf)> = fs::read_dir(&base)
        .map_err(io(&base))?
        .filter_map(|e| e.ok())
        .filter_map(|e| parse_frame_file_name(&e.file_name().to_string_lossy()).map(|i| (i, e.path())))
        .collect();
    out.sort();
    Ok(out)
}

pub fn read_state(path: &Path) -> Result<WorldState, StoreError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{DriveCommenter, MANDATED_QIDS};
    use crate::world::bundled_scenario;

    fn fixed_clock() -> String {
        "2024-01-01T00:00:00.000Z".into()
    }

    fn sample(store: &Store, frame: u64) -> FrameRecord {
        let mut w = bundled_scenario("ObstacleAhead", 0).unwrap();
        w.frame_index = frame;
        let qas = DriveCommenter::default().annotate_frame(&w, &MANDATED_QIDS).unwrap();
        let rec = FrameRecord::new("ObstacleAhead", frame, qas);
        store.write_frame(&rec).unwrap();
        rec
    }

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path()).with_clock(fixed_clock);
        let rec = sample(&store, 7);
        assert!(dir.path().join("ObstacleAhead/0000007.json").exists());
        let back = store.read_frame("ObstacleAhead", 7).unwrap();
        assert_eq!(back.record, rec);
        assert!(!back.excluded);
        store.write_frame(&rec).unwrap();
        assert!(store.history("ObstacleAhead").unwrap().is_empty());
    }

    #[test]
    fn overwrite_logs_changed_answers() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path()).with_clock(fixed_clock);
        let mut rec = sample(&store, 0);
        rec.qa_pairs[0].gt_answer_text = "changed".into();
        store.write_frame(&rec).unwrap();
        let h = store.history("ObstacleAhead").unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].new_value, "changed");
    }

    #[test]
    fn edits_statuses_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path()).with_clock(fixed_clock);
        let original = sample(&store, 0);
        store.edit_answer("ObstacleAhead", 0, 43, "first", Some(FrameStatus::Controversial)).unwrap();
        assert_eq!(store.read_frame("ObstacleAhead", 0).unwrap().record.status, FrameStatus::Controversial);
        store.edit_answer("ObstacleAhead", 0, 43, "second", None).unwrap();
        let h = store.history("ObstacleAhead").unwrap();
        assert_eq!(h.len(), 2);
        let mut value = original.qa(43).unwrap().gt_answer_text.clone();
        for e in &h {
            assert_eq!(e.old_value, value);
            value = e.new_value.clone();
        }
        let now = store.read_frame("ObstacleAhead", 0).unwrap().record;
        assert_eq!(now.qa(43).unwrap().gt_answer_text, value);
        assert!(matches!(store.edit_answer("ObstacleAhead", 0, 99, "x", None), Err(StoreError::UnknownQid { .. })));
        assert_eq!(store.set_status("ObstacleAhead", 0, FrameStatus::Verified).unwrap().status, FrameStatus::Verified);
        assert!(matches!(store.set_status("ObstacleAhead", 0, FrameStatus::Raw), Err(StoreError::BadTransition { .. })));
    }

    #[test]
    fn overview_and_trimming() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        for f in [0, 5, 10, 15] {
            sample(&store, f);
        }
        let o = &store.overview().unwrap()[0];
        assert_eq!(o.counts.raw, 4);
        store.set_status("ObstacleAhead", 5, FrameStatus::Verified).unwrap();
        store.set_interval("ObstacleAhead", 5, Some(15)).unwrap();
        let o = &store.overview().unwrap()[0];
        assert_eq!((o.counts.raw, o.counts.verified, o.counts.excluded), (1, 1, 2));
        assert!(store.read_frame("ObstacleAhead", 15).unwrap().excluded);
        assert!(store.set_interval("ObstacleAhead", 9, Some(3)).is_err());
    }

    #[test]
    fn filters() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        for f in [0, 5] {
            sample(&store, f);
        }
        let all = store.filter_qas("ObstacleAhead", &QaFilter::default()).unwrap();
        assert_eq!(all.len(), 18);
        let q50 = store
            .filter_qas("ObstacleAhead", &QaFilter { qids: BTreeSet::from([50]), ..Default::default() })
            .unwrap();
        assert!(q50.len() == 2 && q50.iter().all(|q| q.qid == 50));
        let kw = store
            .filter_qas("ObstacleAhead", &QaFilter { keyword: Some("SPEED LIMIT".into()), to_frame: Some(5), ..Default::default() })
            .unwrap();
        assert!(!kw.is_empty() && kw.iter().all(|q| q.frame_index == 0));
    }

    #[test]
    fn corrupt_frame_reports_schema_path() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        sample(&store, 0);
        fs::write(store.frame_path("ObstacleAhead", 1).unwrap(), r#"{"scenario": "ObstacleAhead", "frame_index": "one", "qa_pairs": []}"#).unwrap();
        match store.read_frame("ObstacleAhead", 1) {
            Err(StoreError::Schema { source, .. }) => assert_eq!(source.pointer, "/frame_index"),
            other => panic!("{other:?}"),
        }
        assert_eq!(store.filter_qas("ObstacleAhead", &QaFilter::default()).unwrap().len(), 9);
    }

    #[test]
    fn options_are_global() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        store.add_option(43, "Slow down.").unwrap();
        store.add_option(43, "Slow down.").unwrap();
        assert_eq!(store.options().unwrap()[&43], vec!["Slow down."]);
    }

    #[test]
    fn names_cannot_escape_root() {
        let store = Store::new("/tmp/x");
        assert!(store.scenario_dir("../etc").is_err());
        assert!(store.read_image("s", "../x.png").is_err());
    }
}
