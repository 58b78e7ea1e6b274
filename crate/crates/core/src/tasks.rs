//! The sixteen task definitions: modality contracts, role schemas,
//! feasibility predicates, ground-truth vocabulary and validity factors.
//!
//! The enumeration is closed. Adding a task means adding a variant here, a
//! schema row in [`TaskType::schema`], a template in `question::template` and
//! a solver arm in `solvers`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Direction, DirectionSet};
use crate::question::RegionOntology;
use crate::scene::{GroundedPools, Scene};

/// Camera height difference below which two frames count as same level.
pub const ELEVATION_THRESHOLD_M: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    ObjectCounting,
    ObjectSize,
    AbsoluteDistance,
    RelativeDistance,
    RelativeDirection,
    RoomSize,
    SvRelativeDirection,
    CameraObjectDistance,
    DepthOrder,
    CamCamPosition,
    CamCamElevation,
    VisibilityComparison,
    CamObjPosition,
    CamRegionPosition,
    CameraMotion,
    AttributeMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Scene,
    SingleImage,
    ImagePair,
}

impl Modality {
    pub fn frame_count(self) -> usize {
        match self {
            Modality::Scene => 0,
            Modality::SingleImage => 1,
            Modality::ImagePair => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    ObjectA,
    ObjectB,
    Anchor,
    Candidates,
    Standing,
    Facing,
    Reference,
    ReferenceImage,
    TargetImage,
    Region,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::ObjectA => "object_a",
            Role::ObjectB => "object_b",
            Role::Anchor => "anchor",
            Role::Candidates => "candidates",
            Role::Standing => "standing",
            Role::Facing => "facing",
            Role::Reference => "reference",
            Role::ReferenceImage => "reference_image",
            Role::TargetImage => "target_image",
            Role::Region => "region",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which grounded pool a label role draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Scene labels plus the source vocabulary (zero counts are degenerate).
    Countable,
    UniqueScene,
    /// Uniquely visible in the single context frame.
    FrameUnique,
    /// Uniquely visible in the frame named by the reference_image role.
    ReferenceFrameUnique,
    PairVisible,
    PairNonAmbiguous,
    /// Region phrase resolved against the reference frame's anchors.
    RegionAnchor,
}

impl PoolKind {
    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Countable => "countable",
            PoolKind::UniqueScene => "unique_scene",
            PoolKind::FrameUnique => "frame_unique",
            PoolKind::ReferenceFrameUnique => "reference_frame_unique",
            PoolKind::PairVisible => "pair_visible",
            PoolKind::PairNonAmbiguous => "pair_non_ambiguous",
            PoolKind::RegionAnchor => "region_anchors",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleKind {
    Label(PoolKind),
    LabelList { pool: PoolKind, min: usize, max: usize },
    Image,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleSpec {
    pub role: Role,
    pub kind: RoleKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchema {
    pub roles: &'static [RoleSpec],
}

impl TaskSchema {
    pub fn role_names(&self) -> impl Iterator<Item = Role> + '_ {
        self.roles.iter().map(|r| r.role)
    }

    pub fn kind_of(&self, role: Role) -> Option<RoleKind> {
        self.roles.iter().find(|r| r.role == role).map(|r| r.kind)
    }
}

const fn label(role: Role, pool: PoolKind) -> RoleSpec {
    RoleSpec {
        role,
        kind: RoleKind::Label(pool),
    }
}

const fn image(role: Role) -> RoleSpec {
    RoleSpec {
        role,
        kind: RoleKind::Image,
    }
}

/// Three candidates plus one anchor, as in the reference question form.
pub const RELATIVE_DISTANCE_CANDIDATES: usize = 3;

mod schemas {
    use super::PoolKind::*;
    use super::Role::*;
    use super::*;

    pub const COUNTING: &[RoleSpec] = &[label(Target, Countable)];
    pub const SIZE: &[RoleSpec] = &[label(Target, UniqueScene)];
    pub const ABS_DIST: &[RoleSpec] = &[label(ObjectA, UniqueScene), label(ObjectB, UniqueScene)];
    pub const REL_DIST: &[RoleSpec] = &[
        label(Anchor, UniqueScene),
        RoleSpec {
            role: Candidates,
            kind: RoleKind::LabelList {
                pool: UniqueScene,
                min: RELATIVE_DISTANCE_CANDIDATES,
                max: RELATIVE_DISTANCE_CANDIDATES,
            },
        },
    ];
    pub const REL_DIR: &[RoleSpec] = &[
        label(Standing, UniqueScene),
        label(Facing, UniqueScene),
        label(Target, UniqueScene),
    ];
    pub const NONE: &[RoleSpec] = &[];
    pub const SV_DIR: &[RoleSpec] = &[label(Reference, FrameUnique), label(Target, FrameUnique)];
    pub const CAM_OBJ_DIST: &[RoleSpec] = &[label(Target, FrameUnique)];
    pub const DEPTH: &[RoleSpec] = &[label(ObjectA, FrameUnique), label(ObjectB, FrameUnique)];
    pub const CAM_CAM: &[RoleSpec] = &[image(ReferenceImage), image(TargetImage)];
    pub const VISIBILITY: &[RoleSpec] = &[label(Target, PairVisible)];
    pub const CAM_OBJ: &[RoleSpec] = &[image(ReferenceImage), label(Target, ReferenceFrameUnique)];
    pub const CAM_REG: &[RoleSpec] = &[
        image(ReferenceImage),
        RoleSpec {
            role: Region,
            kind: RoleKind::Region,
        },
    ];
    pub const ATTRIBUTE: &[RoleSpec] = &[
        label(ObjectA, PairNonAmbiguous),
        label(ObjectB, PairNonAmbiguous),
    ];
}

/// Kind of ground-truth value a task produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Count,
    Metric(Unit),
    Label,
    Direction,
    Ternary,
    Elevation,
    Visibility,
    Motion,
}

impl TaskType {
    pub const ALL: [TaskType; 16] = [
        TaskType::ObjectCounting,
        TaskType::ObjectSize,
        TaskType::AbsoluteDistance,
        TaskType::RelativeDistance,
        TaskType::RelativeDirection,
        TaskType::RoomSize,
        TaskType::SvRelativeDirection,
        TaskType::CameraObjectDistance,
        TaskType::DepthOrder,
        TaskType::CamCamPosition,
        TaskType::CamCamElevation,
        TaskType::VisibilityComparison,
        TaskType::CamObjPosition,
        TaskType::CamRegionPosition,
        TaskType::CameraMotion,
        TaskType::AttributeMeasurement,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TaskType::ObjectCounting => "object_counting",
            TaskType::ObjectSize => "object_size",
            TaskType::AbsoluteDistance => "absolute_distance",
            TaskType::RelativeDistance => "relative_distance",
            TaskType::RelativeDirection => "relative_direction",
            TaskType::RoomSize => "room_size",
            TaskType::SvRelativeDirection => "sv_relative_direction",
            TaskType::CameraObjectDistance => "camera_object_distance",
            TaskType::DepthOrder => "depth_order",
            TaskType::CamCamPosition => "cam_cam_position",
            TaskType::CamCamElevation => "cam_cam_elevation",
            TaskType::VisibilityComparison => "visibility_comparison",
            TaskType::CamObjPosition => "cam_obj_position",
            TaskType::CamRegionPosition => "cam_region_position",
            TaskType::CameraMotion => "camera_motion",
            TaskType::AttributeMeasurement => "attribute_measurement",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TaskType::ObjectCounting => "Object Counting",
            TaskType::ObjectSize => "Object Size",
            TaskType::AbsoluteDistance => "Absolute Distance",
            TaskType::RelativeDistance => "Relative Distance",
            TaskType::RelativeDirection => "Relative Direction",
            TaskType::RoomSize => "Room Size Estimation",
            TaskType::SvRelativeDirection => "Single-View Relative Direction",
            TaskType::CameraObjectDistance => "Distance Cam-Obj",
            TaskType::DepthOrder => "Depth Order Obj-Obj",
            TaskType::CamCamPosition => "Position Cam-Cam",
            TaskType::CamCamElevation => "Elevation Cam-Cam",
            TaskType::VisibilityComparison => "Visibility Comparison",
            TaskType::CamObjPosition => "Position Cam-Obj",
            TaskType::CamRegionPosition => "Position Cam-Reg",
            TaskType::CameraMotion => "Camera Motion Estimation",
            TaskType::AttributeMeasurement => "Attribute Measurement",
        }
    }

    pub fn modality(self) -> Modality {
        use TaskType::*;
        match self {
            ObjectCounting | ObjectSize | AbsoluteDistance | RelativeDistance
            | RelativeDirection | RoomSize => Modality::Scene,
            SvRelativeDirection | CameraObjectDistance | DepthOrder => Modality::SingleImage,
            _ => Modality::ImagePair,
        }
    }

    /// Tasks whose answer is a number.
    pub fn is_numeric(self) -> bool {
        use TaskType::*;
        matches!(
            self,
            ObjectCounting | ObjectSize | AbsoluteDistance | RoomSize | CameraObjectDistance
        )
    }

    pub fn output_kind(self) -> OutputKind {
        use TaskType::*;
        match self {
            ObjectCounting => OutputKind::Count,
            ObjectSize => OutputKind::Metric(Unit::Centimeters),
            AbsoluteDistance | CameraObjectDistance => OutputKind::Metric(Unit::Meters),
            RoomSize => OutputKind::Metric(Unit::SquareMeters),
            RelativeDistance | AttributeMeasurement => OutputKind::Label,
            RelativeDirection | SvRelativeDirection | CamCamPosition | CamObjPosition
            | CamRegionPosition => OutputKind::Direction,
            DepthOrder => OutputKind::Ternary,
            CamCamElevation => OutputKind::Elevation,
            VisibilityComparison => OutputKind::Visibility,
            CameraMotion => OutputKind::Motion,
        }
    }

    pub fn schema(self) -> TaskSchema {
        use TaskType::*;
        let roles = match self {
            ObjectCounting => schemas::COUNTING,
            ObjectSize => schemas::SIZE,
            AbsoluteDistance => schemas::ABS_DIST,
            RelativeDistance => schemas::REL_DIST,
            RelativeDirection => schemas::REL_DIR,
            RoomSize | CameraMotion => schemas::NONE,
            SvRelativeDirection => schemas::SV_DIR,
            CameraObjectDistance => schemas::CAM_OBJ_DIST,
            DepthOrder => schemas::DEPTH,
            CamCamPosition | CamCamElevation => schemas::CAM_CAM,
            VisibilityComparison => schemas::VISIBILITY,
            CamObjPosition => schemas::CAM_OBJ,
            CamRegionPosition => schemas::CAM_REG,
            AttributeMeasurement => schemas::ATTRIBUTE,
        };
        TaskSchema { roles }
    }

    /// Pairs of label roles whose order carries no meaning.
    pub fn unordered_pair(self) -> Option<(Role, Role)> {
        use TaskType::*;
        match self {
            AbsoluteDistance | DepthOrder | AttributeMeasurement => Some((Role::ObjectA, Role::ObjectB)),
            _ => None,
        }
    }

    /// Maps a noisy task name ("Depth Order Obj-Obj", "object-counting") to
    /// its canonical type.
    pub fn normalize(raw: &str) -> Option<TaskType> {
        let key = normalize_key(raw);
        TaskType::ALL.into_iter().find(|t| {
            normalize_key(t.id()) == key
                || normalize_key(t.display_name()) == key
                || t.aliases().iter().any(|a| normalize_key(a) == key)
        })
    }

    fn aliases(self) -> &'static [&'static str] {
        use TaskType::*;
        match self {
            ObjectCounting => &["object count", "counting"],
            ObjectSize => &["object size estimation"],
            AbsoluteDistance => &["abs distance", "absolute distance estimation"],
            RelativeDistance => &["rel distance"],
            RelativeDirection => &["rel direction", "rel dir"],
            RoomSize => &["room size", "room area"],
            SvRelativeDirection => &["single view relative direction", "sv rel dir"],
            CameraObjectDistance => &["camera object distance", "camera-to-object distance"],
            DepthOrder => &["depth ordering", "depth order"],
            CamCamPosition => &["inter-camera relative position", "camera camera position"],
            CamCamElevation => &["inter-camera elevation"],
            VisibilityComparison => &["visibility"],
            CamObjPosition => &["camera-object position", "camera object position"],
            CamRegionPosition => &["camera-region position", "camera region position"],
            CameraMotion => &["camera motion"],
            AttributeMeasurement => &["attribute", "attribute comparison"],
        }
    }
}

fn normalize_key(s: &str) -> String {
    let mut out = String::new();
    for c in s.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown task '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for TaskType {
    type Err = UnknownTask;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskType::normalize(s).ok_or_else(|| UnknownTask(s.to_string()))
    }
}

/// A scene plus zero, one or two frame ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextRef {
    pub scene_id: String,
    #[serde(default)]
    pub frames: Vec<u32>,
}

impl ContextRef {
    pub fn scene(scene_id: impl Into<String>) -> Self {
        ContextRef {
            scene_id: scene_id.into(),
            frames: vec![],
        }
    }

    pub fn single(scene_id: impl Into<String>, frame: u32) -> Self {
        ContextRef {
            scene_id: scene_id.into(),
            frames: vec![frame],
        }
    }

    pub fn pair(scene_id: impl Into<String>, a: u32, b: u32) -> Self {
        ContextRef {
            scene_id: scene_id.into(),
            frames: vec![a, b],
        }
    }

    pub fn modality(&self) -> Option<Modality> {
        match self.frames.len() {
            0 => Some(Modality::Scene),
            1 => Some(Modality::SingleImage),
            2 if self.frames[0] != self.frames[1] => Some(Modality::ImagePair),
            _ => None,
        }
    }

    /// Frame id for a 1-based image index within a pair context.
    pub fn image_frame(&self, image: u8) -> Option<u32> {
        match image {
            1 | 2 => self.frames.get(image as usize - 1).copied(),
            _ => None,
        }
    }

    pub fn id(&self) -> String {
        let mut s = self.scene_id.clone();
        for f in &self.frames {
            s.push('/');
            s.push_str(&f.to_string());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "cm")]
    Centimeters,
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "m2")]
    SquareMeters,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Centimeters => "cm",
            Unit::Meters => "m",
            Unit::SquareMeters => "m2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ternary {
    Obj1,
    Obj2,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elevation {
    Higher,
    Lower,
    SameLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Image1,
    Image2,
    Same,
    Neither,
}

/// Camera motion directions, serialized with the forward/backward vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionSet(pub DirectionSet);

impl Serialize for MotionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(Direction::motion_name))
    }
}

impl<'de> Deserialize<'de> for MotionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        let dirs = words
            .iter()
            .map(|w| Direction::parse(w).ok_or_else(|| serde::de::Error::custom(format!("bad motion '{w}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        DirectionSet::new(&dirs)
            .map(MotionSet)
            .ok_or_else(|| serde::de::Error::custom("empty or contradictory motion set"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Count { value: u32 },
    Metric { value: f64, unit: Unit },
    Label { value: String },
    Direction { value: DirectionSet },
    Ternary { value: Ternary },
    Elevation { value: Elevation },
    Visibility { value: Visibility },
    Motion { value: MotionSet },
}

impl GroundTruth {
    pub fn matches_kind(&self, kind: OutputKind) -> bool {
        matches!(
            (self, kind),
            (GroundTruth::Count { .. }, OutputKind::Count)
                | (GroundTruth::Label { .. }, OutputKind::Label)
                | (GroundTruth::Direction { .. }, OutputKind::Direction)
                | (GroundTruth::Ternary { .. }, OutputKind::Ternary)
                | (GroundTruth::Elevation { .. }, OutputKind::Elevation)
                | (GroundTruth::Visibility { .. }, OutputKind::Visibility)
                | (GroundTruth::Motion { .. }, OutputKind::Motion)
        ) || matches!((self, kind), (GroundTruth::Metric { unit, .. }, OutputKind::Metric(u)) if *unit == u)
    }
}

/// Downgrade factor for valid but low-information questions.
pub fn validity_factor(task: TaskType, gt: &GroundTruth) -> f64 {
    match (task, gt) {
        (TaskType::ObjectCounting, GroundTruth::Count { value: 0 }) => 0.0,
        (TaskType::ObjectCounting, GroundTruth::Count { value: 1 }) => 0.5,
        (TaskType::DepthOrder, GroundTruth::Ternary { value: Ternary::Same }) => 0.5,
        (TaskType::CamCamElevation, GroundTruth::Elevation { value: Elevation::SameLevel }) => 0.0,
        (
            TaskType::VisibilityComparison,
            GroundTruth::Visibility {
                value: Visibility::Same | Visibility::Neither,
            },
        ) => 0.5,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("context modality is unsupported or its frames have no pools: {0}")]
    ModalityMismatch(String),
}

/// Tasks whose feasibility predicate holds for the context.
pub fn feasible_tasks(
    scene: &Scene,
    pools: &GroundedPools,
    context: &ContextRef,
    ontology: &RegionOntology,
) -> Result<BTreeSet<TaskType>, TaskError> {
    let modality = context
        .modality()
        .ok_or_else(|| TaskError::ModalityMismatch(format!("{} frames", context.frames.len())))?;
    let mut out = BTreeSet::new();
    match modality {
        Modality::Scene => {
            let u = pools.unique_scene.len();
            if !pools.non_unique_scene.is_empty() {
                out.insert(TaskType::ObjectCounting);
            }
            if u >= 2 {
                out.insert(TaskType::AbsoluteDistance);
            }
            if u >= 1 {
                out.insert(TaskType::ObjectSize);
            }
            out.insert(TaskType::RoomSize);
            if u >= 4 {
                out.insert(TaskType::RelativeDistance);
            }
            if u >= 3 {
                out.insert(TaskType::RelativeDirection);
            }
        }
        Modality::SingleImage => {
            let f = context.frames[0];
            let uf = pools
                .frame_unique(f)
                .ok_or_else(|| TaskError::ModalityMismatch(format!("frame {f} has no pools")))?
                .len();
            if uf >= 2 {
                out.insert(TaskType::SvRelativeDirection);
                out.insert(TaskType::DepthOrder);
            }
            if uf >= 1 {
                out.insert(TaskType::CameraObjectDistance);
            }
        }
        Modality::ImagePair => {
            let (a, b) = (context.frames[0], context.frames[1]);
            let (Some(fa), Some(fb)) = (scene.frame(a), scene.frame(b)) else {
                return Err(TaskError::ModalityMismatch(format!("frames {a},{b} not in scene")));
            };
            let ua = pools.frame_unique(a).map_or(0, |s| s.len());
            let ub = pools.frame_unique(b).map_or(0, |s| s.len());
            out.insert(TaskType::CamCamPosition);
            out.insert(TaskType::CameraMotion);
            if (fa.center()[2] - fb.center()[2]).abs() >= ELEVATION_THRESHOLD_M {
                out.insert(TaskType::CamCamElevation);
            }
            if pools.pair_visible(a, b).is_some_and(|s| !s.is_empty()) {
                out.insert(TaskType::VisibilityComparison);
            }
            if ua >= 1 || ub >= 1 {
                out.insert(TaskType::CamObjPosition);
            }
            let resolvable = [a, b].iter().any(|f| {
                pools
                    .anchors(*f)
                    .is_some_and(|anchors| ontology.has_resolvable_region(anchors))
            });
            if resolvable {
                out.insert(TaskType::CamRegionPosition);
            }
            if pools.pair_non_ambiguous(a, b).is_some_and(|s| s.len() >= 2) {
                out.insert(TaskType::AttributeMeasurement);
            }
        }
    }
    Ok(out)
}
