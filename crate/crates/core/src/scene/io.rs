use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Frame, Intrinsics, Scene, SceneError, SceneMetadata};
use crate::geometry::Pose;

pub const MANIFEST_FILE: &str = "scene.json";
pub const POINTS_FILE: &str = "points.bin";

const POINT_RECORD_BYTES: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    scene_id: String,
    instances: Vec<InstanceRecord>,
    frames: Vec<FrameRecord>,
    metadata: SceneMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    instance_id: u32,
    label: String,
    point_start: usize,
    point_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame_id: u32,
    /// Camera-to-world, row major.
    pose: Vec<f64>,
    intrinsics: Intrinsics,
    image_size: [u32; 2],
}

/// Loads and validates a scene directory (`scene.json` + `points.bin`).
pub fn load_scene(dir: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let dir = dir.as_ref();
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| SceneError::MalformedAsset(format!("{MANIFEST_FILE}: {e}")))?;
    let bytes = fs::read(dir.join(POINTS_FILE))?;
    if bytes.len() % POINT_RECORD_BYTES != 0 {
        return Err(SceneError::MalformedAsset(format!(
            "{POINTS_FILE}: length {} is not a multiple of {POINT_RECORD_BYTES}",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_RECORD_BYTES);
    let mut owners = Vec::with_capacity(points.capacity());
    for rec in bytes.chunks_exact(POINT_RECORD_BYTES) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        points.push([f(0), f(4), f(8)]);
        owners.push(u32::from_le_bytes(rec[12..16].try_into().unwrap()));
    }

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, fr) in manifest.frames.into_iter().enumerate() {
        let pose: [f64; 16] = fr.pose.as_slice().try_into().map_err(|_| {
            SceneError::MalformedAsset(format!("frames[{i}].pose: expected 16 numbers, got {}", fr.pose.len()))
        })?;
        let bottom = &pose[12..];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(SceneError::inconsistent(
                format!("frames[{i}].pose"),
                "bottom row must be 0 0 0 1",
            ));
        }
        frames.push(Frame::new(
            fr.frame_id,
            Pose::from_row_major(&pose),
            fr.intrinsics,
            fr.image_size,
        ));
    }
    let spans = manifest
        .instances
        .into_iter()
        .map(|r| {
            let end = r.point_start.checked_add(r.point_count).ok_or_else(|| {
                SceneError::MalformedAsset(format!("instance {} span overflows", r.instance_id))
            })?;
            Ok((r.instance_id, r.label, r.point_start..end))
        })
        .collect::<Result<Vec<_>, SceneError>>()?;
    Scene::from_parts(manifest.scene_id, points, owners, spans, frames, manifest.metadata)
}

/// Writes a scene directory. Output is a pure function of the scene.
pub fn save_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<(), SceneError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        scene_id: scene.scene_id.clone(),
        instances: scene
            .instances()
            .iter()
            .map(|i| InstanceRecord {
                instance_id: i.instance_id,
                label: i.label.clone(),
                point_start: i.point_range.start,
                point_count: i.point_range.len(),
            })
            .collect(),
        frames: scene
            .frames()
            .iter()
            .map(|f| FrameRecord {
                frame_id: f.frame_id,
                pose: f.pose().to_row_major().to_vec(),
                intrinsics: f.intrinsics,
                image_size: f.image_size,
            })
            .collect(),
        metadata: scene.metadata.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SceneError::MalformedAsset(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;

    let mut bytes = Vec::with_capacity(scene.raw_points().len() * POINT_RECORD_BYTES);
    for (p, id) in scene.raw_points().iter().zip(scene.point_instance_ids()) {
        for c in p {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        bytes.extend_from_slice(&id.to_le_bytes());
    }
    fs::write(dir.join(POINTS_FILE), bytes)?;
    Ok(())
}
