//! Grounded label pools: which labels a question may legally reference for a
//! scene, a single frame, or a frame pair.

use std::collections::{BTreeMap, BTreeSet};

use super::Scene;
use crate::geometry::project_point;

/// Lower bound on the per-frame visibility threshold.
pub const MIN_VISIBILITY: f64 = 0.1;

pub type LabelSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedPools {
    pub v_min: f64,
    /// Labels with exactly one instance in the scene.
    pub unique_scene: LabelSet,
    /// Labels with two or more instances.
    pub non_unique_scene: LabelSet,
    pub per_frame_unique: BTreeMap<u32, LabelSet>,
    /// Keyed by (smaller frame id, larger frame id).
    pub pair_visible: BTreeMap<(u32, u32), LabelSet>,
    pub pair_non_ambiguous: BTreeMap<(u32, u32), LabelSet>,
    pub region_anchors: BTreeMap<u32, LabelSet>,
    /// frame id -> instance id -> visible point fraction.
    pub visibility: BTreeMap<u32, BTreeMap<u32, f64>>,
}

fn pair_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl GroundedPools {
    pub fn frame_unique(&self, frame_id: u32) -> Option<&LabelSet> {
        self.per_frame_unique.get(&frame_id)
    }

    pub fn pair_visible(&self, a: u32, b: u32) -> Option<&LabelSet> {
        self.pair_visible.get(&pair_key(a, b))
    }

    pub fn pair_non_ambiguous(&self, a: u32, b: u32) -> Option<&LabelSet> {
        self.pair_non_ambiguous.get(&pair_key(a, b))
    }

    pub fn anchors(&self, frame_id: u32) -> Option<&LabelSet> {
        self.region_anchors.get(&frame_id)
    }

    pub fn visible_fraction(&self, frame_id: u32, instance_id: u32) -> f64 {
        self.visibility
            .get(&frame_id)
            .and_then(|m| m.get(&instance_id))
            .copied()
            .unwrap_or(0.0)
    }

    /// The one instance of `label` visible at or above `v_min` in the frame.
    pub fn visible_unique_instance(&self, scene: &Scene, frame_id: u32, label: &str) -> Option<u32> {
        let mut ids = scene
            .instances_with_label(label)
            .filter(|i| self.visible_fraction(frame_id, i.instance_id) >= self.v_min)
            .map(|i| i.instance_id);
        let first = ids.next()?;
        ids.next().is_none().then_some(first)
    }
}

/// Fraction of the instance's points with positive depth that project
/// inside the image. No occlusion test.
pub fn visible_fraction(scene: &Scene, frame: &super::Frame, instance_id: u32) -> f64 {
    let mut total = 0usize;
    let mut seen = 0usize;
    for p in scene.instance_points(instance_id) {
        total += 1;
        if project_point(frame, p).in_image(frame).is_some() {
            seen += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        seen as f64 / total as f64
    }
}

/// Builds every pool for a scene. `v_min` below [`MIN_VISIBILITY`] is raised
/// to it.
pub fn build_grounded_pools(scene: &Scene, v_min: f64) -> GroundedPools {
    let v_min = if v_min.is_nan() { MIN_VISIBILITY } else { v_min.max(MIN_VISIBILITY) };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in scene.instances() {
        *counts.entry(inst.label.as_str()).or_default() += 1;
    }
    let unique_scene: LabelSet = counts
        .iter()
        .filter(|(_, n)| **n == 1)
        .map(|(l, _)| l.to_string())
        .collect();
    let non_unique_scene: LabelSet = counts
        .iter()
        .filter(|(_, n)| **n >= 2)
        .map(|(l, _)| l.to_string())
        .collect();

    let mut visibility = BTreeMap::new();
    let mut per_frame_unique = BTreeMap::new();
    for frame in scene.frames() {
        let fractions: BTreeMap<u32, f64> = scene
            .instances()
            .iter()
            .map(|i| (i.instance_id, visible_fraction(scene, frame, i.instance_id)))
            .collect();
        let mut visible_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for inst in scene.instances() {
            if fractions[&inst.instance_id] >= v_min {
                *visible_counts.entry(inst.label.as_str()).or_default() += 1;
            }
        }
        let unique: LabelSet = visible_counts
            .into_iter()
            .filter(|(_, n)| *n == 1)
            .map(|(l, _)| l.to_string())
            .collect();
        per_frame_unique.insert(frame.frame_id, unique);
        visibility.insert(frame.frame_id, fractions);
    }

    let mut pair_visible = BTreeMap::new();
    let mut pair_non_ambiguous = BTreeMap::new();
    let frames = scene.frames();
    for (i, fa) in frames.iter().enumerate() {
        for fb in &frames[i + 1..] {
            let mut both = LabelSet::new();
            let mut either = LabelSet::new();
            for label in &unique_scene {
                let inst = scene.unique_instance(label).expect("unique label");
                let va = visibility[&fa.frame_id][&inst.instance_id] >= v_min;
                let vb = visibility[&fb.frame_id][&inst.instance_id] >= v_min;
                if va && vb {
                    both.insert(label.clone());
                }
                if va || vb {
                    either.insert(label.clone());
                }
            }
            let key = pair_key(fa.frame_id, fb.frame_id);
            pair_visible.insert(key, both);
            pair_non_ambiguous.insert(key, either);
        }
    }

    let region_anchors = per_frame_unique.clone();
    GroundedPools {
        v_min,
        unique_scene,
        non_unique_scene,
        per_frame_unique,
        pair_visible,
        pair_non_ambiguous,
        region_anchors,
        visibility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::scene::{Frame, Intrinsics, SceneMetadata};

    fn cube(center: [f32; 3]) -> Vec<[f32; 3]> {
        let mut pts = Vec::new();
        for dx in [-0.2f32, 0.2] {
            for dy in [-0.2f32, 0.2] {
                for dz in [-0.2f32, 0.2] {
                    pts.push([center[0] + dx, center[1] + dy, center[2] + dz]);
                }
            }
        }
        pts
    }

    fn frame(id: u32, eye: [f64; 3], target: [f64; 3]) -> Frame {
        Frame::new(
            id,
            Pose::look_at(eye, target),
            Intrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 320.0,
                cy: 240.0,
            },
            [640, 480],
        )
    }

    fn scene() -> Scene {
        Scene::new(
            "pools",
            vec![
                (1, "chair".into(), cube([2.0, 0.0, 0.5])),
                (2, "chair".into(), cube([2.0, 1.0, 0.5])),
                (3, "bed".into(), cube([4.0, 0.0, 0.5])),
                (4, "lamp".into(), cube([-3.0, 0.0, 0.5])),
            ],
            vec![
                frame(0, [0.0, 0.0, 0.5], [1.0, 0.0, 0.5]),
                frame(1, [0.0, 0.0, 0.5], [-1.0, 0.0, 0.5]),
            ],
            SceneMetadata {
                room_area: Some(20.0),
                source: "test".into(),
                footprint: vec![],
                vocabulary: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn scene_partition() {
        let pools = build_grounded_pools(&scene(), 0.1);
        assert_eq!(pools.unique_scene, ["bed", "lamp"].map(String::from).into());
        assert_eq!(pools.non_unique_scene, ["chair"].map(String::from).into());
    }

    #[test]
    fn behind_camera_instances_are_excluded() {
        let pools = build_grounded_pools(&scene(), 0.1);
        let f0 = pools.frame_unique(0).unwrap();
        assert!(f0.contains("bed"));
        assert!(!f0.contains("lamp"));
        // two chairs visible in frame 0 -> not unique there
        assert!(!f0.contains("chair"));
        let f1 = pools.frame_unique(1).unwrap();
        assert_eq!(f1, &["lamp"].map(String::from).into());
        assert!(pools.pair_visible(0, 1).unwrap().is_empty());
        assert_eq!(
            pools.pair_non_ambiguous(1, 0).unwrap(),
            &["bed", "lamp"].map(String::from).into()
        );
    }

    #[test]
    fn v_min_is_clamped() {
        let pools = build_grounded_pools(&scene(), 0.01);
        assert_eq!(pools.v_min, MIN_VISIBILITY);
        let pools = build_grounded_pools(&scene(), 0.5);
        assert_eq!(pools.v_min, 0.5);
    }
}
