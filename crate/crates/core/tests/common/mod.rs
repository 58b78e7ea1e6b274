#![allow(dead_code)]

use spatial_env::geometry::Pose;
use spatial_env::harness::LoadedScene;
use spatial_env::scene::{Frame, Intrinsics, Scene, SceneMetadata, MIN_VISIBILITY};

pub const SCENE_ID: &str = "fixture";

/// Solid grid of points filling an axis-aligned box.
pub fn cuboid(min: [f64; 3], size: [f64; 3], steps: usize) -> Vec<[f32; 3]> {
    let mut out = Vec::with_capacity(steps * steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            for k in 0..steps {
                let t = |n: usize| n as f64 / (steps - 1) as f64;
                out.push([
                    (min[0] + size[0] * t(i)) as f32,
                    (min[1] + size[1] * t(j)) as f32,
                    (min[2] + size[2] * t(k)) as f32,
                ]);
            }
        }
    }
    out
}

fn frame(id: u32, eye: [f64; 3], target: [f64; 3]) -> Frame {
    Frame::new(
        id,
        Pose::look_at(eye, target),
        Intrinsics {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
        },
        [640, 480],
    )
}

/// An 8 m × 8 m room viewed from its south wall.
///
/// * unique: bed, sofa (same longest edge as the bed), lamp, desk, box and
///   stool (side by side at equal depth);
/// * two chairs;
/// * "piano" exists only in the vocabulary.
///
/// Frames 1 and 2 share a height, frame 3 is 0.6 m higher, frame 4 repeats
/// frame 1's pose.
pub fn fixture_scene(with_area: bool) -> Scene {
    let s = 7;
    let instances = vec![
        (1, "bed".to_string(), cuboid([1.0, 5.0, 0.0], [2.0, 2.0, 0.5], s)),
        (2, "lamp".to_string(), cuboid([4.0, 5.5, 0.0], [0.4, 0.4, 1.5], s)),
        (3, "desk".to_string(), cuboid([6.0, 5.0, 0.0], [1.2, 0.6, 0.8], s)),
        (4, "sofa".to_string(), cuboid([1.0, 2.5, 0.0], [2.0, 0.9, 0.8], s)),
        (5, "chair".to_string(), cuboid([4.5, 3.0, 0.0], [0.5, 0.5, 0.9], s)),
        (6, "chair".to_string(), cuboid([6.2, 3.0, 0.0], [0.5, 0.5, 0.9], s)),
        (7, "box".to_string(), cuboid([3.2, 4.0, 0.0], [0.4, 0.4, 0.4], s)),
        (8, "stool".to_string(), cuboid([3.9, 4.0, 0.0], [0.4, 0.4, 0.4], s)),
    ];
    let frames = vec![
        frame(1, [4.0, -1.5, 1.5], [4.0, 4.0, 0.5]),
        frame(2, [4.6, -1.5, 1.5], [4.6, 4.0, 0.5]),
        frame(3, [4.0, -1.5, 2.1], [4.0, 4.0, 0.5]),
        frame(4, [4.0, -1.5, 1.5], [4.0, 4.0, 0.5]),
    ];
    let metadata = SceneMetadata {
        room_area: with_area.then_some(64.0),
        source: "fixture".into(),
        footprint: if with_area {
            vec![[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0]]
        } else {
            vec![]
        },
        vocabulary: vec!["piano".into(), "bed".into(), "chair".into()],
    };
    Scene::new(SCENE_ID, instances, frames, metadata).expect("fixture scene is consistent")
}

pub fn loaded(with_area: bool) -> LoadedScene {
    LoadedScene::new(fixture_scene(with_area), MIN_VISIBILITY)
}
