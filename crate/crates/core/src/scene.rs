//! Scene data model and scene file ingestion.
//!
//! A [`Scene`] is a fixed-frequency record of several object trajectories
//! over one common frame range, with one vehicle marked as the target whose
//! history an attacker controls. Scenes are immutable once validated.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{step_directions, Vec2};

/// Errors raised while building or reading scenes.
#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("object `{object}` is missing frame {frame}")]
    FrameGap { object: String, frame: i64 },
    #[error("object `{object}` lists frame {frame} more than once")]
    DuplicateFrame { object: String, frame: i64 },
    #[error("object `{object}` has a non-finite coordinate at frame {frame}")]
    NonFinite { object: String, frame: usize },
    #[error("trajectory `{object}` needs at least {need} states, got {got}")]
    TooShort { object: String, need: usize, got: usize },
    #[error("scene has {have} frames but needs at least l_i + l_o = {need}")]
    TooFewFrames { have: usize, need: usize },
    #[error("target `{0}` is not present in the scene")]
    MissingTarget(String),
    #[error("target `{0}` is not a vehicle")]
    TargetNotVehicle(String),
    #[error("duplicate object id `{0}`")]
    DuplicateObject(String),
    #[error("invalid scene parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Vehicle,
    Pedestrian,
    Other,
}

impl ObjectKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vehicle" | "car" => Some(Self::Vehicle),
            "pedestrian" => Some(Self::Pedestrian),
            "other" => Some(Self::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vehicle => "vehicle",
            Self::Pedestrian => "pedestrian",
            Self::Other => "other",
        }
    }
}

/// State of one object at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub position: Vec2,
    pub heading: Option<f64>,
    pub frame: usize,
}

/// States of one object at consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    id: String,
    kind: ObjectKind,
    states: Vec<ObjectState>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, kind: ObjectKind, states: Vec<ObjectState>) -> Result<Self, SceneError> {
        let id = id.into();
        if states.len() < 2 {
            return Err(SceneError::TooShort { object: id, need: 2, got: states.len() });
        }
        for w in states.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                let frame = (w[0].frame + 1) as i64;
                return Err(if w[1].frame == w[0].frame {
                    SceneError::DuplicateFrame { object: id, frame }
                } else {
                    SceneError::FrameGap { object: id, frame }
                });
            }
        }
        if let Some(s) = states.iter().find(|s| !s.position.is_finite()) {
            return Err(SceneError::NonFinite { object: id, frame: s.frame });
        }
        Ok(Self { id, kind, states })
    }

    /// Builds a trajectory from positions at frames `start_frame..`, with
    /// headings reconstructed from the direction of travel.
    pub fn from_positions(
        id: impl Into<String>,
        kind: ObjectKind,
        start_frame: usize,
        positions: &[Vec2],
    ) -> Result<Self, SceneError> {
        let states = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| ObjectState { position, heading: None, frame: start_frame + i })
            .collect();
        Ok(Self::new(id, kind, states)?.with_reconstructed_headings())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ObjectKind {
        self.kind
    }

    pub fn states(&self) -> &[ObjectState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first_frame(&self) -> usize {
        self.states[0].frame
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.states.iter().map(|s| s.position).collect()
    }

    /// Same object and frames with new positions. Headings are rebuilt
    /// from the new path.
    pub fn with_positions(&self, positions: &[Vec2]) -> Result<Self, SceneError> {
        if positions.len() != self.states.len() {
            return Err(SceneError::InvalidParameter(format!(
                "expected {} positions, got {}",
                self.states.len(),
                positions.len()
            )));
        }
        Self::from_positions(self.id.clone(), self.kind, self.first_frame(), positions)
    }

    /// Fills missing headings from the direction of travel.
    pub fn with_reconstructed_headings(mut self) -> Self {
        if self.states.iter().all(|s| s.heading.is_some()) {
            return self;
        }
        let dirs = step_directions(&self.positions(), 1e-9);
        for (s, d) in self.states.iter_mut().zip(dirs) {
            if s.heading.is_none() {
                s.heading = Some(d.angle());
            }
        }
        self
    }
}

/// A multi-object scene with one attacker-controlled target vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    id: String,
    frequency_hz: f64,
    l_i: usize,
    l_o: usize,
    target_id: String,
    trajectories: Vec<Trajectory>,
}

impl Scene {
    /// Validates and builds a scene. Every trajectory must cover the same
    /// frame range, which is re-indexed to start at 0.
    pub fn new(
        id: impl Into<String>,
        frequency_hz: f64,
        l_i: usize,
        l_o: usize,
        target_id: impl Into<String>,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, SceneError> {
        let target_id = target_id.into();
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(SceneError::InvalidParameter(format!("frequency_hz must be positive, got {frequency_hz}")));
        }
        if l_i < 2 || l_o < 1 {
            return Err(SceneError::InvalidParameter(format!("need l_i >= 2 and l_o >= 1, got l_i={l_i}, l_o={l_o}")));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &trajectories {
            if !seen.insert(t.id.as_str()) {
                return Err(SceneError::DuplicateObject(t.id.clone()));
            }
        }
        let target = trajectories
            .iter()
            .find(|t| t.id == target_id)
            .ok_or_else(|| SceneError::MissingTarget(target_id.clone()))?;
        if target.kind != ObjectKind::Vehicle {
            return Err(SceneError::TargetNotVehicle(target_id));
        }
        let start = trajectories.iter().map(|t| t.first_frame()).min().unwrap_or(0);
        let end = trajectories.iter().map(|t| t.first_frame() + t.len()).max().unwrap_or(0);
        for t in &trajectories {
            if t.first_frame() != start {
                return Err(SceneError::FrameGap { object: t.id.clone(), frame: start as i64 });
            }
            if t.first_frame() + t.len() != end {
                return Err(SceneError::FrameGap { object: t.id.clone(), frame: (t.first_frame() + t.len()) as i64 });
            }
        }
        let frames = end - start;
        if frames < l_i + l_o {
            return Err(SceneError::TooFewFrames { have: frames, need: l_i + l_o });
        }
        let trajectories = trajectories
            .into_iter()
            .map(|mut t| {
                for s in &mut t.states {
                    s.frame -= start;
                }
                t.with_reconstructed_headings()
            })
            .collect();
        Ok(Self { id: id.into(), frequency_hz, l_i, l_o, target_id, trajectories })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn l_i(&self) -> usize {
        self.l_i
    }

    pub fn l_o(&self) -> usize {
        self.l_o
    }

    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn frame_count(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn object_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn target(&self) -> &Trajectory {
        self.trajectories.iter().find(|t| t.id == self.target_id).expect("validated at construction")
    }

    pub fn trajectory(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Longest multi-frame attack length the scene supports.
    pub fn max_l_p(&self) -> usize {
        self.frame_count() + 1 - self.l_i - self.l_o
    }

    /// Copy with the target's positions replaced.
    pub fn with_target_positions(&self, positions: &[Vec2]) -> Result<Self, SceneError> {
        let mut out = self.clone();
        for t in &mut out.trajectories {
            if t.id == self.target_id {
                *t = t.with_positions(positions)?;
            }
        }
        Ok(out)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Scene-level parameters the CSV format does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub id: String,
    pub frequency_hz: f64,
    pub l_i: usize,
    pub l_o: usize,
    pub target_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneFormat {
    Json,
    Csv(SceneParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Text(String),
    Int(i64),
}

impl IdRepr {
    fn into_string(self) -> String {
        match self {
            IdRepr::Text(s) => s,
            IdRepr::Int(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRecord {
    frame: i64,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heading: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    id: IdRepr,
    kind: ObjectKind,
    states: Vec<StateRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    frequency_hz: f64,
    l_i: usize,
    l_o: usize,
    target_id: IdRepr,
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    object_id: String,
    kind: String,
    frame: i64,
    x: f64,
    y: f64,
}

/// Reads a scene from JSON or CSV and validates it.
pub fn load_scene<R: Read>(mut reader: R, format: SceneFormat) -> Result<Scene, SceneError> {
    match format {
        SceneFormat::Json => {
            let mut text = String::new();
            reader.read_to_string(&mut text).map_err(|e| SceneError::Io(e.to_string()))?;
            let rec: SceneRecord = serde_json::from_str(&text).map_err(|e| SceneError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let objects = rec
                .objects
                .into_iter()
                .map(|o| {
                    let states = o.states.into_iter().map(|s| (s.frame, Vec2::new(s.x, s.y), s.heading)).collect();
                    (o.id.into_string(), o.kind, states)
                })
                .collect();
            assemble(
                rec.id.unwrap_or_else(|| "scene".to_string()),
                rec.frequency_hz,
                rec.l_i,
                rec.l_o,
                rec.target_id.into_string(),
                objects,
            )
        }
        SceneFormat::Csv(params) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            // Per object: kind and (frame, position, heading) rows.
            type Rows = (ObjectKind, Vec<(i64, Vec2, Option<f64>)>);
            let mut grouped: BTreeMap<String, Rows> = BTreeMap::new();
            let mut order = Vec::new();
            for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
                let row = row.map_err(|e| {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(i + 2);
                    SceneError::Parse { line, column: 0, message: e.to_string() }
                })?;
                let kind = ObjectKind::parse(&row.kind).ok_or_else(|| SceneError::Parse {
                    line: i + 2,
                    column: 2,
                    message: format!("unknown object kind `{}`", row.kind),
                })?;
                let entry = grouped.entry(row.object_id.clone()).or_insert_with(|| {
                    order.push(row.object_id.clone());
                    (kind, Vec::new())
                });
                entry.1.push((row.frame, Vec2::new(row.x, row.y), None));
            }
            let objects = order
                .into_iter()
                .map(|id| {
                    let (kind, states) = grouped.remove(&id).expect("grouped above");
                    (id, kind, states)
                })
                .collect();
            assemble(params.id, params.frequency_hz, params.l_i, params.l_o, params.target_id, objects)
        }
    }
}

type RawObject = (String, ObjectKind, Vec<(i64, Vec2, Option<f64>)>);

fn assemble(
    id: String,
    frequency_hz: f64,
    l_i: usize,
    l_o: usize,
    target_id: String,
    objects: Vec<RawObject>,
) -> Result<Scene, SceneError> {
    let start = objects.iter().flat_map(|(_, _, s)| s.iter().map(|r| r.0)).min().unwrap_or(0);
    let end = objects.iter().flat_map(|(_, _, s)| s.iter().map(|r| r.0)).max().unwrap_or(0);
    let mut trajectories = Vec::with_capacity(objects.len());
    for (oid, kind, mut states) in objects {
        states.sort_by_key(|s| s.0);
        let mut expected = start;
        for s in &states {
            if s.0 < expected {
                return Err(SceneError::DuplicateFrame { object: oid, frame: s.0 });
            }
            if s.0 > expected {
                return Err(SceneError::FrameGap { object: oid, frame: expected });
            }
            expected += 1;
        }
        if expected <= end {
            return Err(SceneError::FrameGap { object: oid, frame: expected });
        }
        let states = states
            .into_iter()
            .map(|(frame, position, heading)| ObjectState { position, heading, frame: (frame - start) as usize })
            .collect();
        trajectories.push(Trajectory::new(oid, kind, states)?);
    }
    Scene::new(id, frequency_hz, l_i, l_o, target_id, trajectories)
}

/// Writes a scene in the given format. For CSV, scene-level parameters are
/// dropped; the caller keeps them.
pub fn save_scene<W: Write>(scene: &Scene, writer: W, format: &SceneFormat) -> Result<(), SceneError> {
    match format {
        SceneFormat::Json => {
            let rec = SceneRecord {
                id: Some(scene.id.clone()),
                frequency_hz: scene.frequency_hz,
                l_i: scene.l_i,
                l_o: scene.l_o,
                target_id: IdRepr::Text(scene.target_id.clone()),
                objects: scene
                    .trajectories
                    .iter()
                    .map(|t| ObjectRecord {
                        id: IdRepr::Text(t.id.clone()),
                        kind: t.kind,
                        states: t
                            .states
                            .iter()
                            .map(|s| StateRecord {
                                frame: s.frame as i64,
                                x: s.position.x,
                                y: s.position.y,
                                heading: s.heading,
                            })
                            .collect(),
                    })
                    .collect(),
            };
            serde_json::to_writer_pretty(writer, &rec).map_err(|e| SceneError::Io(e.to_string()))
        }
        SceneFormat::Csv(_) => {
            let mut w = csv::Writer::from_writer(writer);
            for t in &scene.trajectories {
                for s in &t.states {
                    w.serialize(CsvRow {
                        object_id: t.id.clone(),
                        kind: t.kind.as_str().to_string(),
                        frame: s.frame as i64,
                        x: s.position.x,
                        y: s.position.y,
                    })
                    .map_err(|e| SceneError::Io(e.to_string()))?;
                }
            }
            w.flush().map_err(|e| SceneError::Io(e.to_string()))
        }
    }
}
