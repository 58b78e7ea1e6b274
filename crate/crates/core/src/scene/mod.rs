//! Scene assets: labeled instance point clouds, camera frames and metadata.

mod generator;
mod io;
mod pools;

pub use generator::{generate_synthetic_scene, GeneratorSpec, INDOOR_VOCABULARY};
pub use io::{load_scene, save_scene, MANIFEST_FILE, POINTS_FILE};
pub use pools::{build_grounded_pools, visible_fraction, GroundedPools, LabelSet, MIN_VISIBILITY};

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Box3, Pose, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed asset: {0}")]
    MalformedAsset(String),
    #[error("inconsistent asset at {field}: {reason}")]
    InconsistentAsset { field: String, reason: String },
    #[error("generator spec out of range: {0}")]
    SpecOutOfRange(String),
    #[error("scene generation failed: {0}")]
    GenerationFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SceneError {
    pub(crate) fn inconsistent(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SceneError::InconsistentAsset {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u32,
    pose: Pose,
    pub intrinsics: Intrinsics,
    /// (width, height) in pixels.
    pub image_size: [u32; 2],
}

impl Frame {
    pub fn new(frame_id: u32, pose: Pose, intrinsics: Intrinsics, image_size: [u32; 2]) -> Self {
        Frame {
            frame_id,
            pose,
            intrinsics,
            image_size,
        }
    }

    /// Camera-to-world pose.
    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn center(&self) -> Vec3 {
        self.pose.center()
    }

    pub(crate) fn validate(&self) -> Result<(), SceneError> {
        let field = |f: &str| format!("frames[{}].{f}", self.frame_id);
        let err = geometry::orthonormality_error(&self.pose.rotation);
        if !(err <= 1e-6) {
            return Err(SceneError::inconsistent(
                field("pose"),
                format!("rotation block is not orthonormal (error {err:.3e})"),
            ));
        }
        let r = &self.pose.rotation;
        let det = geometry::dot(r[0], geometry::cross(r[1], r[2]));
        if det <= 0.0 {
            return Err(SceneError::inconsistent(field("pose"), "rotation is a reflection"));
        }
        let k = &self.intrinsics;
        let [w, h] = self.image_size;
        if w == 0 || h == 0 {
            return Err(SceneError::inconsistent(field("image_size"), "zero image size"));
        }
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(SceneError::inconsistent(field("intrinsics"), "focal lengths must be positive"));
        }
        if !(k.cx >= 0.0 && k.cx < w as f64 && k.cy >= 0.0 && k.cy < h as f64) {
            return Err(SceneError::inconsistent(
                field("intrinsics"),
                "principal point outside the image",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: u32,
    pub label: String,
    pub point_range: Range<usize>,
    pub aabb: Box3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    /// Floor area in square meters; absent when the source has no area.
    pub room_area: Option<f64>,
    pub source: String,
    /// Floor polygon (x, y) in meters, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub footprint: Vec<[f64; 2]>,
    /// Category vocabulary of the source dataset. Counting questions may
    /// name any category here, including ones with zero instances.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    points: Vec<[f32; 3]>,
    point_instance: Vec<u32>,
    instances: Vec<Instance>,
    frames: Vec<Frame>,
    pub metadata: SceneMetadata,
}

impl Scene {
    /// Builds a scene from instance-grouped points, validating every invariant.
    pub fn new(
        scene_id: impl Into<String>,
        instances: Vec<(u32, String, Vec<[f32; 3]>)>,
        frames: Vec<Frame>,
        metadata: SceneMetadata,
    ) -> Result<Scene, SceneError> {
        let mut points = Vec::new();
        let mut point_instance = Vec::new();
        let mut spans = Vec::new();
        for (id, label, pts) in instances {
            let start = points.len();
            point_instance.extend(std::iter::repeat(id).take(pts.len()));
            points.extend(pts);
            spans.push((id, label, start..points.len()));
        }
        Scene::from_parts(scene_id.into(), points, point_instance, spans, frames, metadata)
    }

    pub(crate) fn from_parts(
        scene_id: String,
        points: Vec<[f32; 3]>,
        point_instance: Vec<u32>,
        spans: Vec<(u32, String, Range<usize>)>,
        frames: Vec<Frame>,
        metadata: SceneMetadata,
    ) -> Result<Scene, SceneError> {
        if scene_id.is_empty() {
            return Err(SceneError::inconsistent("scene_id", "empty scene id"));
        }
        if points.len() != point_instance.len() {
            return Err(SceneError::inconsistent("points", "point and instance arrays differ in length"));
        }
        let mut by_id: BTreeMap<u32, usize> = BTreeMap::new();
        let mut instances = Vec::with_capacity(spans.len());
        for (idx, (id, label, range)) in spans.into_iter().enumerate() {
            let field = format!("instances[{idx}]");
            if by_id.insert(id, idx).is_some() {
                return Err(SceneError::inconsistent(field, format!("duplicate instance_id {id}")));
            }
            let label = label.trim().to_lowercase();
            if label.is_empty() {
                return Err(SceneError::inconsistent(format!("{field}.label"), "empty label"));
            }
            if crate::text::is_plural(&label) {
                return Err(SceneError::inconsistent(
                    format!("{field}.label"),
                    format!("label '{label}' is plural; labels must be singular"),
                ));
            }
            if range.is_empty() {
                return Err(SceneError::inconsistent(field, format!("instance {id} owns no points")));
            }
            if range.end > points.len() {
                return Err(SceneError::inconsistent(field, "point span exceeds the point file"));
            }
            let aabb = geometry::fit_aabb(points[range.clone()].iter().map(|p| to_f64(*p)))
                .expect("non-empty span");
            instances.push(Instance {
                instance_id: id,
                label,
                point_range: range,
                aabb,
            });
        }
        for (i, (p, owner)) in points.iter().zip(&point_instance).enumerate() {
            let Some(&idx) = by_id.get(owner) else {
                return Err(SceneError::inconsistent(
                    format!("points[{i}].instance_id"),
                    format!("references missing instance {owner}"),
                ));
            };
            if !instances[idx].point_range.contains(&i) {
                return Err(SceneError::inconsistent(
                    format!("points[{i}].instance_id"),
                    format!("point lies outside the span of instance {owner}"),
                ));
            }
            if !p.iter().all(|c| c.is_finite()) {
                return Err(SceneError::inconsistent(format!("points[{i}]"), "non-finite coordinate"));
            }
        }
        let mut seen_frames = std::collections::BTreeSet::new();
        for f in &frames {
            if !seen_frames.insert(f.frame_id) {
                return Err(SceneError::inconsistent(
                    "frames",
                    format!("duplicate frame_id {}", f.frame_id),
                ));
            }
            f.validate()?;
        }
        if let Some(area) = metadata.room_area {
            if !(area > 0.0 && area.is_finite()) {
                return Err(SceneError::inconsistent("metadata.room_area", "room area must be positive"));
            }
        }
        Ok(Scene {
            scene_id,
            points,
            point_instance,
            instances,
            frames,
            metadata,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, frame_id: u32) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn instance(&self, instance_id: u32) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    pub fn raw_points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn point_instance_ids(&self) -> &[u32] {
        &self.point_instance
    }

    pub fn instance_points(&self, instance_id: u32) -> impl Iterator<Item = Vec3> + '_ {
        let range = self
            .instance(instance_id)
            .map(|i| i.point_range.clone())
            .unwrap_or(0..0);
        self.points[range].iter().map(|p| to_f64(*p))
    }

    pub fn instance_point_vec(&self, instance_id: u32) -> Vec<Vec3> {
        self.instance_points(instance_id).collect()
    }

    pub fn instances_with_label<'a, 'b>(&'a self, label: &'b str) -> impl Iterator<Item = &'a Instance> + use<'a, 'b> {
        self.instances.iter().filter(move |i| i.label == label)
    }

    pub fn label_count(&self, label: &str) -> usize {
        self.instances_with_label(label).count()
    }

    /// The single instance carrying `label`, if exactly one exists.
    pub fn unique_instance(&self, label: &str) -> Option<&Instance> {
        let mut it = self.instances_with_label(label);
        let first = it.next()?;
        it.next().is_none().then_some(first)
    }

    /// Labels a counting question may name: the scene's labels plus the
    /// source vocabulary.
    pub fn countable_labels(&self) -> std::collections::BTreeSet<String> {
        self.instances
            .iter()
            .map(|i| i.label.clone())
            .chain(self.metadata.vocabulary.iter().cloned())
            .collect()
    }
}

pub(crate) fn to_f64(p: [f32; 3]) -> Vec3 {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}
