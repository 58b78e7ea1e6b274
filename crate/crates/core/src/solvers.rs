//! Ground-truth synthesis for every task, run once a question has passed
//! the structural checks.

use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{
    self, centroid, horizontal_signed_angle, median_instance_depth, nearest_pair, nearest_point_distance,
    project_point, quadrant_label, sector8_direction, sub, world_to_camera, yaw_delta, Direction, DirectionSet,
};
use crate::question::{param_image, param_list, param_text, AliasTable, Params, RegionOntology};
use crate::scene::{Frame, GroundedPools, Scene};
use crate::tasks::{
    ContextRef, Elevation, GroundTruth, MotionSet, Role, Ternary, TaskType, Unit, Visibility, ELEVATION_THRESHOLD_M,
};

/// Pixel offset, as a fraction of the image dimension, below which the
/// single-view direction along that axis is not reported.
pub const PIXEL_OFFSET_FRACTION: f64 = 0.03;
/// Relative median-depth difference below which two objects are "same".
pub const DEPTH_SAME_BAND: f64 = 0.05;
/// Visible-fraction difference below which two images are "same".
pub const VISIBILITY_SAME_BAND: f64 = 0.05;
/// Yaw magnitude in degrees from which camera motion counts as a turn.
pub const ROTATION_DOMINANCE_DEG: f64 = 15.0;

/// Everything a solver may read: one scene and its derived tables.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub scene: &'a Scene,
    pub pools: &'a GroundedPools,
    pub ontology: &'a RegionOntology,
    pub aliases: &'a AliasTable,
}

/// Named geometric state recorded while solving.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intermediate {
    pub name: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub ground_truth: GroundTruth,
    pub intermediates: Vec<Intermediate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("degenerate premise: {0}")]
    DegeneratePremise(String),
    #[error("solver unavailable: {0}")]
    Unavailable(String),
}

struct Ctx<'a> {
    env: Env<'a>,
    context: &'a ContextRef,
    params: &'a Params,
    notes: Vec<Intermediate>,
}

fn degenerate<T>(msg: impl Into<String>) -> Result<T, SolveError> {
    Err(SolveError::DegeneratePremise(msg.into()))
}

fn unavailable<T>(msg: impl Into<String>) -> Result<T, SolveError> {
    Err(SolveError::Unavailable(msg.into()))
}

impl<'a> Ctx<'a> {
    fn note(&mut self, name: impl Into<String>, value: Value) {
        self.notes.push(Intermediate {
            name: name.into(),
            value,
        });
    }

    fn text(&self, role: Role) -> Result<&'a str, SolveError> {
        param_text(self.params, role).ok_or_else(|| SolveError::Unavailable(format!("role '{role}' is not set")))
    }

    fn frame_at(&self, idx: usize) -> Result<&'a Frame, SolveError> {
        let id = *self
            .context
            .frames
            .get(idx)
            .ok_or_else(|| SolveError::Unavailable("context has too few frames".into()))?;
        self.env
            .scene
            .frame(id)
            .ok_or_else(|| SolveError::Unavailable(format!("frame {id} has no pose")))
    }

    fn image_frame(&self, role: Role) -> Result<&'a Frame, SolveError> {
        let idx = param_image(self.params, role)
            .filter(|i| matches!(i, 1 | 2))
            .ok_or_else(|| SolveError::Unavailable(format!("role '{role}' has no image index")))?;
        self.frame_at(idx as usize - 1)
    }

    fn unique_points(&self, label: &str) -> Result<(u32, Vec<geometry::Vec3>), SolveError> {
        let inst = self
            .env
            .scene
            .unique_instance(label)
            .ok_or_else(|| SolveError::Unavailable(format!("'{label}' is not a unique instance")))?;
        Ok((inst.instance_id, self.env.scene.instance_point_vec(inst.instance_id)))
    }

    fn frame_unique_id(&self, frame: &Frame, label: &str) -> Result<u32, SolveError> {
        self.env
            .pools
            .visible_unique_instance(self.env.scene, frame.frame_id, label)
            .ok_or_else(|| {
                SolveError::Unavailable(format!("'{label}' is not uniquely visible in frame {}", frame.frame_id))
            })
    }

    fn centroid_of(&self, instance_id: u32) -> Result<geometry::Vec3, SolveError> {
        centroid(&self.env.scene.instance_point_vec(instance_id))
            .ok_or_else(|| SolveError::Unavailable(format!("instance {instance_id} has no points")))
    }
}

fn metric(value: f64, unit: Unit) -> Result<GroundTruth, SolveError> {
    if !(value.is_finite() && value > 0.0) {
        return degenerate(format!("non-positive measurement {value}"));
    }
    Ok(GroundTruth::Metric { value, unit })
}

/// Computes the ground truth for a structurally valid question.
pub fn solve(task: TaskType, params: &Params, context: &ContextRef, env: Env<'_>) -> Result<Solution, SolveError> {
    let mut cx = Ctx {
        env,
        context,
        params,
        notes: Vec::new(),
    };
    let gt = solve_inner(task, &mut cx)?;
    debug_assert!(gt.matches_kind(task.output_kind()));
    Ok(Solution {
        ground_truth: gt,
        intermediates: cx.notes,
    })
}

fn solve_inner(task: TaskType, cx: &mut Ctx<'_>) -> Result<GroundTruth, SolveError> {
    use TaskType::*;
    let scene = cx.env.scene;
    match task {
        ObjectCounting => {
            let label = cx.text(Role::Target)?;
            let n = scene.label_count(label);
            cx.note("instance_count", json!(n));
            if n == 0 {
                return degenerate(format!("no '{label}' instances in the scene"));
            }
            Ok(GroundTruth::Count { value: n as u32 })
        }
        ObjectSize => {
            let (id, _) = cx.unique_points(cx.text(Role::Target)?)?;
            let aabb = scene.instance(id).unwrap().aabb;
            cx.note("aabb_min", json!(aabb.min_corner));
            cx.note("aabb_max", json!(aabb.max_corner));
            metric(aabb.longest_edge() * 100.0, Unit::Centimeters)
        }
        AbsoluteDistance => {
            let (_, a) = cx.unique_points(cx.text(Role::ObjectA)?)?;
            let (_, b) = cx.unique_points(cx.text(Role::ObjectB)?)?;
            let pair = nearest_pair(&a, &b).map_err(|e| SolveError::Unavailable(e.to_string()))?;
            cx.note("nearest_point_a", json!(pair.point_a));
            cx.note("nearest_point_b", json!(pair.point_b));
            metric(pair.distance, Unit::Meters)
        }
        RelativeDistance => {
            let (_, anchor) = cx.unique_points(cx.text(Role::Anchor)?)?;
            let mut candidates: Vec<String> = param_list(cx.params, Role::Candidates)
                .ok_or_else(|| SolveError::Unavailable("candidates are not set".into()))?
                .to_vec();
            candidates.sort();
            let mut best: Option<(f64, String)> = None;
            for label in candidates {
                let (_, pts) = cx.unique_points(&label)?;
                let d = nearest_point_distance(&anchor, &pts).map_err(|e| SolveError::Unavailable(e.to_string()))?;
                cx.note(format!("distance:{label}"), json!(d));
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, label));
                }
            }
            let (_, label) = best.ok_or_else(|| SolveError::Unavailable("empty candidate list".into()))?;
            Ok(GroundTruth::Label { value: label })
        }
        RelativeDirection => {
            let mut centers = Vec::with_capacity(3);
            for role in [Role::Standing, Role::Facing, Role::Target] {
                let (id, _) = cx.unique_points(cx.text(role)?)?;
                let c = cx.centroid_of(id)?;
                cx.note(format!("centroid:{role}"), json!(c));
                centers.push(c);
            }
            let facing = sub(centers[1], centers[0]);
            let target = sub(centers[2], centers[0]);
            let theta = match horizontal_signed_angle(facing, target) {
                Ok(t) => t,
                Err(e) => return degenerate(e.to_string()),
            };
            cx.note("signed_angle_deg", json!(theta));
            Ok(GroundTruth::Direction {
                value: DirectionSet::single(quadrant_label(theta)),
            })
        }
        RoomSize => match scene.metadata.room_area {
            Some(area) => metric(area, Unit::SquareMeters),
            None => unavailable("scene metadata has no room area"),
        },
        SvRelativeDirection => {
            let frame = cx.frame_at(0)?;
            let mut pixels = Vec::with_capacity(2);
            for role in [Role::Reference, Role::Target] {
                let id = cx.frame_unique_id(frame, cx.text(role)?)?;
                let px = mean_pixel(scene, frame, id)
                    .ok_or_else(|| SolveError::Unavailable(format!("instance {id} has no visible points")))?;
                cx.note(format!("pixel:{role}"), json!(px));
                pixels.push(px);
            }
            let du = (pixels[1][0] - pixels[0][0]) / frame.image_size[0] as f64;
            let dv = (pixels[1][1] - pixels[0][1]) / frame.image_size[1] as f64;
            let mut dirs = Vec::new();
            if du.abs() >= PIXEL_OFFSET_FRACTION {
                dirs.push(if du > 0.0 { Direction::Right } else { Direction::Left });
            }
            if dv.abs() >= PIXEL_OFFSET_FRACTION {
                dirs.push(if dv > 0.0 { Direction::Down } else { Direction::Up });
            }
            match DirectionSet::new(&dirs) {
                Some(value) => Ok(GroundTruth::Direction { value }),
                None => degenerate("pixel offsets below the dead band on both axes"),
            }
        }
        CameraObjectDistance => {
            let frame = cx.frame_at(0)?;
            let id = cx.frame_unique_id(frame, cx.text(Role::Target)?)?;
            let pts = scene.instance_point_vec(id);
            let center = frame.center();
            let pair = nearest_pair(&[center], &pts).map_err(|e| SolveError::Unavailable(e.to_string()))?;
            cx.note("camera_center", json!(center));
            cx.note("nearest_point", json!(pair.point_b));
            metric(pair.distance, Unit::Meters)
        }
        DepthOrder => {
            let frame = cx.frame_at(0)?;
            let mut depths = Vec::with_capacity(2);
            for role in [Role::ObjectA, Role::ObjectB] {
                let id = cx.frame_unique_id(frame, cx.text(role)?)?;
                let d = median_instance_depth(scene, frame, id)
                    .ok_or_else(|| SolveError::Unavailable(format!("instance {id} has no visible depth")))?;
                cx.note(format!("median_depth:{role}"), json!(d));
                depths.push(d);
            }
            let (d1, d2) = (depths[0], depths[1]);
            let value = if (d1 - d2).abs() / d1.min(d2) < DEPTH_SAME_BAND {
                Ternary::Same
            } else if d1 < d2 {
                Ternary::Obj1
            } else {
                Ternary::Obj2
            };
            Ok(GroundTruth::Ternary { value })
        }
        CamCamPosition => {
            let reference = cx.image_frame(Role::ReferenceImage)?;
            let target = cx.image_frame(Role::TargetImage)?;
            let rel = geometry::relative_pose(reference, target);
            cx.note("relative_rotation", json!(rel.rotation));
            cx.note("relative_translation", json!(rel.translation));
            let t = rel.translation;
            match sector8_direction(t[0], t[2]) {
                Ok(value) => Ok(GroundTruth::Direction { value }),
                Err(_) => degenerate("cameras share a horizontal position"),
            }
        }
        CamCamElevation => {
            let reference = cx.image_frame(Role::ReferenceImage)?;
            let target = cx.image_frame(Role::TargetImage)?;
            let dz = target.center()[2] - reference.center()[2];
            cx.note("delta_z", json!(dz));
            if dz >= ELEVATION_THRESHOLD_M {
                Ok(GroundTruth::Elevation {
                    value: Elevation::Higher,
                })
            } else if dz <= -ELEVATION_THRESHOLD_M {
                Ok(GroundTruth::Elevation {
                    value: Elevation::Lower,
                })
            } else {
                degenerate(format!("camera heights differ by {dz:.3} m, inside the same-level band"))
            }
        }
        VisibilityComparison => {
            let (id, _) = cx.unique_points(cx.text(Role::Target)?)?;
            let f1 = cx.frame_at(0)?.frame_id;
            let f2 = cx.frame_at(1)?.frame_id;
            let v1 = cx.env.pools.visible_fraction(f1, id);
            let v2 = cx.env.pools.visible_fraction(f2, id);
            cx.note("visible_fraction:image1", json!(v1));
            cx.note("visible_fraction:image2", json!(v2));
            let v_min = cx.env.pools.v_min;
            let value = if v1 < v_min && v2 < v_min {
                Visibility::Neither
            } else if (v1 - v2).abs() < VISIBILITY_SAME_BAND {
                Visibility::Same
            } else if v1 > v2 {
                Visibility::Image1
            } else {
                Visibility::Image2
            };
            Ok(GroundTruth::Visibility { value })
        }
        CamObjPosition | CamRegionPosition => {
            let reference = cx.image_frame(Role::ReferenceImage)?;
            let label = if task == CamObjPosition {
                cx.text(Role::Target)?.to_string()
            } else {
                let phrase = cx.text(Role::Region)?;
                let anchors = cx.env.pools.anchors(reference.frame_id).cloned().unwrap_or_default();
                match cx.env.ontology.resolve(phrase, &anchors) {
                    Some(a) => a,
                    None => return unavailable(format!("region '{phrase}' has no anchor in the reference frame")),
                }
            };
            if task == CamRegionPosition {
                cx.note("region_anchor", json!(label));
            }
            let id = cx.frame_unique_id(reference, &label)?;
            let c = world_to_camera(reference, cx.centroid_of(id)?);
            cx.note("centroid_camera", json!(c));
            match sector8_direction(c[0], c[2]) {
                Ok(value) => Ok(GroundTruth::Direction { value }),
                Err(_) => degenerate("object lies on the camera's vertical axis"),
            }
        }
        CameraMotion => {
            let a = cx.frame_at(0)?;
            let b = cx.frame_at(1)?;
            if let Ok(yaw) = yaw_delta(a, b) {
                cx.note("yaw_delta_deg", json!(yaw));
                if yaw.abs() >= ROTATION_DOMINANCE_DEG {
                    let d = if yaw > 0.0 { Direction::Left } else { Direction::Right };
                    return Ok(GroundTruth::Motion {
                        value: MotionSet(DirectionSet::single(d)),
                    });
                }
            }
            let t = world_to_camera(a, b.center());
            cx.note("translation_camera", json!(t));
            // ties resolve in x, y, z order
            let mut axis = 0;
            for k in 1..3 {
                if t[k].abs() > t[axis].abs() {
                    axis = k;
                }
            }
            if t[axis] == 0.0 {
                return degenerate("camera did not move");
            }
            let positive = t[axis] > 0.0;
            let d = match (axis, positive) {
                (0, true) => Direction::Right,
                (0, false) => Direction::Left,
                (1, true) => Direction::Down,
                (1, false) => Direction::Up,
                (_, true) => Direction::Front,
                (_, false) => Direction::Back,
            };
            Ok(GroundTruth::Motion {
                value: MotionSet(DirectionSet::single(d)),
            })
        }
        AttributeMeasurement => {
            let la = cx.text(Role::ObjectA)?;
            let lb = cx.text(Role::ObjectB)?;
            let (ia, _) = cx.unique_points(la)?;
            let (ib, _) = cx.unique_points(lb)?;
            let ea = scene.instance(ia).unwrap().aabb.longest_edge();
            let eb = scene.instance(ib).unwrap().aabb.longest_edge();
            cx.note(format!("longest_edge:{la}"), json!(ea));
            cx.note(format!("longest_edge:{lb}"), json!(eb));
            if ea == eb {
                return degenerate("both objects have the same longest edge");
            }
            let value = if ea > eb { la } else { lb };
            Ok(GroundTruth::Label { value: value.to_string() })
        }
    }
}

/// Mean pixel position of the instance's in-image points.
fn mean_pixel(scene: &Scene, frame: &Frame, instance_id: u32) -> Option<[f64; 2]> {
    let mut acc = [0.0; 2];
    let mut n = 0usize;
    for p in scene.instance_points(instance_id) {
        if let Some((u, v, _)) = project_point(frame, p).in_image(frame) {
            acc[0] += u;
            acc[1] += v;
            n += 1;
        }
    }
    (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64])
}
