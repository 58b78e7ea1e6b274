//! Geometric operators used by ground-truth synthesis.
//!
//! World frame is gravity aligned with +Z up. Camera frames look along +Z,
//! with +X to the right and +Y down. Poses are stored camera-to-world.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Frame, Scene};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Points closer than this to the camera plane are treated as behind it.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("vector has no horizontal component")]
    DegenerateVector,
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

#[inline]
pub fn squared_distance(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Largest deviation of `m·mᵀ` from the identity.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    let mmt = mat_mul(m, &transpose(m));
    let mut worst: f64 = 0.0;
    for (i, row) in mmt.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn from_row_major(m: &[f64; 16]) -> Self {
        Pose {
            rotation: [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            translation: [m[3], m[7], m[11]],
        }
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2], 0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, self.translation);
        Pose {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: mat_mul(&self.rotation, &other.rotation),
            translation: self.apply(other.translation),
        }
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Optical axis (+Z of the camera) in the parent frame.
    pub fn forward(&self) -> Vec3 {
        let r = &self.rotation;
        [r[0][2], r[1][2], r[2][2]]
    }

    /// Camera-to-world pose of a camera at `eye` looking at `target`, with
    /// the image +Y axis pointing as close to world −Z as possible.
    ///
    /// Uses only arithmetic and `sqrt`, so results are bit-identical across
    /// platforms.
    pub fn look_at(eye: Vec3, target: Vec3) -> Pose {
        let forward = normalize(sub(target, eye));
        let mut right = cross(forward, [0.0, 0.0, 1.0]);
        if norm(right) < 1e-9 {
            right = [1.0, 0.0, 0.0];
        }
        let right = normalize(right);
        let down = cross(forward, right);
        Pose {
            rotation: [
                [right[0], down[0], forward[0]],
                [right[1], down[1], forward[1]],
                [right[2], down[2], forward[2]],
            ],
            translation: eye,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min_corner: Vec3,
    pub max_corner: Vec3,
}

impl Box3 {
    pub fn extents(&self) -> Vec3 {
        sub(self.max_corner, self.min_corner)
    }

    pub fn longest_edge(&self) -> f64 {
        let e = self.extents();
        e[0].max(e[1]).max(e[2])
    }

    pub fn center(&self) -> Vec3 {
        scale(add(self.min_corner, self.max_corner), 0.5)
    }
}

pub fn fit_aabb<I>(points: I) -> Result<Box3, GeometryError>
where
    I: IntoIterator<Item = Vec3>,
{
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(GeometryError::EmptyPointSet)?;
    let mut min = first;
    let mut max = first;
    for p in iter {
        for k in 0..3 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    Ok(Box3 {
        min_corner: min,
        max_corner: max,
    })
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let mut acc = [0.0; 3];
    for p in points {
        acc = add(acc, *p);
    }
    Some(scale(acc, 1.0 / points.len() as f64))
}

/// Closest pair between two point sets, found through a uniform grid over `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestPair {
    pub distance: f64,
    pub point_a: Vec3,
    pub point_b: Vec3,
}

pub fn nearest_point_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64, GeometryError> {
    nearest_pair(a, b).map(|p| p.distance)
}

pub fn nearest_pair(a: &[Vec3], b: &[Vec3]) -> Result<NearestPair, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    // Index the larger set so each query walks fewer cells.
    if a.len() > b.len() {
        let swapped = PointGrid::new(a).nearest_pair(b);
        return Ok(NearestPair {
            distance: swapped.distance,
            point_a: swapped.point_b,
            point_b: swapped.point_a,
        });
    }
    Ok(PointGrid::new(b).nearest_pair(a))
}

/// O(n·m) scan; kept public as a reference for the grid path.
pub fn nearest_point_distance_exhaustive(a: &[Vec3], b: &[Vec3]) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(squared_distance(*p, *q));
        }
    }
    Ok(best.sqrt())
}

struct PointGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    // cell index -> range into `order`
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let bbox = fit_aabb(points.iter().copied()).expect("non-empty");
        let ext = bbox.extents();
        let volume_side = ext.iter().cloned().fold(0.0_f64, f64::max);
        // Aim for a handful of points per cell.
        let target_cells = (points.len() as f64 / 4.0).max(1.0);
        let mut cell = (ext.iter().map(|e| e.max(volume_side * 1e-3)).product::<f64>()
            / target_cells)
            .cbrt();
        if !cell.is_finite() || cell <= 0.0 {
            cell = volume_side.max(1e-6);
        }
        let dims = [0, 1, 2].map(|k| ((ext[k] / cell).floor() as usize + 1).min(256));
        let origin = bbox.min_corner;
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; n_cells + 1];
        let cell_of: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = Self::cell_coords(origin, cell, dims, *p);
                Self::flat(dims, c)
            })
            .collect();
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut order = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        PointGrid {
            points,
            origin,
            cell,
            dims,
            starts,
            order,
        }
    }

    fn cell_coords(origin: Vec3, cell: f64, dims: [usize; 3], p: Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let f = ((p[k] - origin[k]) / cell).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(dims[k] - 1)
            }
        })
    }

    fn flat(dims: [usize; 3], c: [usize; 3]) -> usize {
        (c[2] * dims[1] + c[1]) * dims[0] + c[0]
    }

    fn scan_cell(&self, c: [usize; 3], q: Vec3, best: &mut (f64, usize)) {
        let f = Self::flat(self.dims, c);
        for &i in &self.order[self.starts[f]..self.starts[f + 1]] {
            let d = squared_distance(q, self.points[i]);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        }
    }

    /// Nearest indexed point to `q`: (squared distance, index).
    fn query(&self, q: Vec3) -> (f64, usize) {
        let center = Self::cell_coords(self.origin, self.cell, self.dims, q);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_r = *self.dims.iter().max().unwrap();
        for r in 0..=max_r {
            if r >= 1 {
                // Every cell at Chebyshev ring r is at least (r-1) cells away.
                let bound = (r - 1) as f64 * self.cell;
                if bound * bound > best.0 {
                    break;
                }
            }
            let lo = |k: usize| center[k].saturating_sub(r);
            let hi = |k: usize| (center[k] + r).min(self.dims[k] - 1);
            for z in lo(2)..=hi(2) {
                for y in lo(1)..=hi(1) {
                    for x in lo(0)..=hi(0) {
                        let ring = (x.abs_diff(center[0]))
                            .max(y.abs_diff(center[1]))
                            .max(z.abs_diff(center[2]));
                        if ring == r {
                            self.scan_cell([x, y, z], q, &mut best);
                        }
                    }
                }
            }
        }
        best
    }

    fn nearest_pair(&self, queries: &[Vec3]) -> NearestPair {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (qi, q) in queries.iter().enumerate() {
            let (d, i) = self.query(*q);
            if d < best.0 {
                best = (d, qi, i);
            }
        }
        NearestPair {
            distance: best.0.sqrt(),
            point_a: queries[best.1],
            point_b: self.points[best.2],
        }
    }
}

/// Result of projecting a world point through a frame's camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

impl Projection {
    /// Pixel coordinates if the point lands inside the image rectangle.
    pub fn in_image(&self, frame: &Frame) -> Option<(f64, f64, f64)> {
        match *self {
            Projection::Visible { u, v, depth } => {
                let (w, h) = (frame.image_size[0] as f64, frame.image_size[1] as f64);
                (u >= 0.0 && u < w && v >= 0.0 && v < h).then_some((u, v, depth))
            }
            Projection::BehindCamera => None,
        }
    }
}

pub fn world_to_camera(frame: &Frame, p: Vec3) -> Vec3 {
    let pose = frame.pose();
    let rt = transpose(&pose.rotation);
    mat_vec(&rt, sub(p, pose.translation))
}

pub fn project_point(frame: &Frame, p: Vec3) -> Projection {
    let c = world_to_camera(frame, p);
    if c[2] <= NEAR_PLANE {
        return Projection::BehindCamera;
    }
    let k = &frame.intrinsics;
    Projection::Visible {
        u: k.fx * c[0] / c[2] + k.cx,
        v: k.fy * c[1] / c[2] + k.cy,
        depth: c[2],
    }
}

/// Inverse of [`project_point`] for a known depth.
pub fn back_project(frame: &Frame, u: f64, v: f64, depth: f64) -> Vec3 {
    let k = &frame.intrinsics;
    let c = [(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth];
    frame.pose().apply(c)
}

/// Camera-frame depths of an instance's points that land inside the image.
pub fn visible_depths(scene: &Scene, frame: &Frame, instance_id: u32) -> Vec<f64> {
    scene
        .instance_points(instance_id)
        .filter_map(|p| project_point(frame, p).in_image(frame).map(|(_, _, d)| d))
        .collect()
}

/// Lower median of visible depths; `None` when no point is visible.
pub fn median_instance_depth(scene: &Scene, frame: &Frame, instance_id: u32) -> Option<f64> {
    let mut depths = visible_depths(scene, frame, instance_id);
    if depths.is_empty() {
        return None;
    }
    let mid = (depths.len() - 1) / 2;
    let (_, m, _) = depths.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m)
}

/// Counterclockwise-positive angle (viewed from +Z) from `facing` to
/// `target` after dropping their vertical components. Range (−180, 180].
pub fn horizontal_signed_angle(facing: Vec3, target: Vec3) -> Result<f64, GeometryError> {
    let (fx, fy) = (facing[0], facing[1]);
    let (tx, ty) = (target[0], target[1]);
    if fx == 0.0 && fy == 0.0 || tx == 0.0 && ty == 0.0 {
        return Err(GeometryError::DegenerateVector);
    }
    let cross_z = fx * ty - fy * tx;
    let dot_xy = fx * tx + fy * ty;
    let deg = cross_z.atan2(dot_xy).to_degrees();
    Ok(if deg <= -180.0 { 180.0 } else { deg })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Front,
    Back,
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Front,
        Direction::Back,
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Front => "front",
            Direction::Back => "back",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    /// Vocabulary used for camera motion answers.
    pub fn motion_name(self) -> &'static str {
        match self {
            Direction::Front => "forward",
            Direction::Back => "backward",
            other => other.name(),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Front => Direction::Back,
            Direction::Back => Direction::Front,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Parses a single direction word, including the aliases accepted in
    /// answers (forward/backward, above/below, clockwise/counterclockwise).
    pub fn parse(word: &str) -> Option<Direction> {
        Some(match word {
            "front" | "forward" | "forwards" | "ahead" => Direction::Front,
            "back" | "backward" | "backwards" | "behind" => Direction::Back,
            "left" | "counterclockwise" | "anticlockwise" | "counter-clockwise" => Direction::Left,
            "right" | "clockwise" => Direction::Right,
            "up" | "above" | "upward" | "upwards" => Direction::Up,
            "down" | "below" | "downward" | "downwards" => Direction::Down,
            _ => return None,
        })
    }
}

/// Non-empty set of directions with no opposing pair.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DirectionSet(u8);

impl DirectionSet {
    pub fn new(dirs: &[Direction]) -> Option<DirectionSet> {
        let mut bits = 0u8;
        for d in dirs {
            bits |= d.bit();
        }
        let set = DirectionSet(bits);
        set.is_consistent().then_some(set)
    }

    pub fn single(d: Direction) -> DirectionSet {
        DirectionSet(d.bit())
    }

    fn is_consistent(&self) -> bool {
        if self.0 == 0 {
            return false;
        }
        Direction::ALL
            .iter()
            .all(|d| !(self.contains(*d) && self.contains(d.opposite())))
    }

    pub fn contains(&self, d: Direction) -> bool {
        self.0 & d.bit() != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Direction> + '_ {
        Direction::ALL.into_iter().filter(|d| self.contains(*d))
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_proper_subset_of(&self, other: &DirectionSet) -> bool {
        self.0 != other.0 && self.0 & other.0 == self.0
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.iter().map(Direction::name).collect()
    }
}

impl fmt::Debug for DirectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.names()).finish()
    }
}

impl Serialize for DirectionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for DirectionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let dirs = Vec::<Direction>::deserialize(d)?;
        DirectionSet::new(&dirs)
            .ok_or_else(|| serde::de::Error::custom("empty or contradictory direction set"))
    }
}

/// Four-way egocentric label for a horizontal angle in degrees. Angles are
/// wrapped into (-180, 180] first.
pub fn quadrant_label(theta: f64) -> Direction {
    let mut theta = theta.rem_euclid(360.0);
    if theta > 180.0 {
        theta -= 360.0;
    }
    if theta > -45.0 && theta < 45.0 {
        Direction::Front
    } else if (45.0..135.0).contains(&theta) {
        Direction::Left
    } else if (-135.0..=-45.0).contains(&theta) {
        Direction::Right
    } else {
        Direction::Back
    }
}

/// Eight 45° sectors around the camera's optical axis. `x` is meters to the
/// right, `z` meters forward.
pub fn sector8_direction(x: f64, z: f64) -> Result<DirectionSet, GeometryError> {
    if x == 0.0 && z == 0.0 {
        return Err(GeometryError::DegenerateVector);
    }
    let phi = x.atan2(z).to_degrees();
    use Direction::*;
    let dirs: &[Direction] = if phi > -22.5 && phi <= 22.5 {
        &[Front]
    } else if phi > 22.5 && phi <= 67.5 {
        &[Front, Right]
    } else if phi > 67.5 && phi <= 112.5 {
        &[Right]
    } else if phi > 112.5 && phi <= 157.5 {
        &[Back, Right]
    } else if phi > 157.5 || phi <= -157.5 {
        &[Back]
    } else if phi > -157.5 && phi <= -112.5 {
        &[Back, Left]
    } else if phi > -112.5 && phi <= -67.5 {
        &[Left]
    } else {
        &[Front, Left]
    };
    Ok(DirectionSet::new(dirs).expect("sector labels are consistent"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

/// Pose of `b`'s camera expressed in `a`'s camera frame.
pub fn relative_pose(a: &Frame, b: &Frame) -> RelativePose {
    let rel = a.pose().inverse().compose(&b.pose());
    RelativePose {
        rotation: rel.rotation,
        translation: rel.translation,
    }
}

/// Signed horizontal rotation between the optical axes of two frames.
pub fn yaw_delta(a: &Frame, b: &Frame) -> Result<f64, GeometryError> {
    horizontal_signed_angle(a.pose().forward(), b.pose().forward())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;

    fn frame_at(pose: Pose) -> Frame {
        Frame::new(
            0,
            pose,
            Intrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
            },
            [640, 480],
        )
    }

    #[test]
    fn two_point_box() {
        let b = fit_aabb([[0.0, 0.0, 0.0], [2.0, 1.0, 0.5]]).unwrap();
        assert_eq!(b.extents(), [2.0, 1.0, 0.5]);
        assert_eq!(b.longest_edge(), 2.0);
        let single = fit_aabb([[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(single.extents(), [0.0; 3]);
        assert_eq!(
            fit_aabb(std::iter::empty::<Vec3>()),
            Err(GeometryError::EmptyPointSet)
        );
    }

    #[test]
    fn nearest_distance_basics() {
        let a = [[0.0, 0.0, 0.0]];
        let b = [[3.0, 4.0, 0.0]];
        assert_eq!(nearest_point_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(nearest_point_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            nearest_point_distance(&[], &b),
            Err(GeometryError::EmptyPointSet)
        );
    }

    #[test]
    fn axis_point_projects_to_principal_point() {
        let f = frame_at(Pose::identity());
        assert_eq!(
            project_point(&f, [0.0, 0.0, 2.0]),
            Projection::Visible {
                u: 320.0,
                v: 240.0,
                depth: 2.0
            }
        );
        assert_eq!(project_point(&f, [1.0, 1.0, 0.0]), Projection::BehindCamera);
        assert_eq!(project_point(&f, [0.0, 0.0, NEAR_PLANE]), Projection::BehindCamera);
    }

    #[test]
    fn signed_angles() {
        let a = horizontal_signed_angle([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        assert!((a - 90.0).abs() < 1e-12);
        assert_eq!(
            horizontal_signed_angle([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap(),
            0.0
        );
        let c = horizontal_signed_angle([1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]).unwrap();
        assert!((c - 90.0).abs() < 1e-12);
        assert_eq!(
            horizontal_signed_angle([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]).unwrap(),
            180.0
        );
        assert_eq!(
            horizontal_signed_angle([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
            Err(GeometryError::DegenerateVector)
        );
    }

    #[test]
    fn quadrant_boundaries() {
        assert_eq!(quadrant_label(0.0), Direction::Front);
        assert_eq!(quadrant_label(90.0), Direction::Left);
        assert_eq!(quadrant_label(45.0), Direction::Left);
        assert_eq!(quadrant_label(-45.0), Direction::Right);
        assert_eq!(quadrant_label(135.0), Direction::Back);
        assert_eq!(quadrant_label(180.0), Direction::Back);
        assert_eq!(quadrant_label(-135.0), Direction::Right);
        assert_eq!(quadrant_label(-135.1), Direction::Back);
    }

    #[test]
    fn sectors() {
        use Direction::*;
        assert_eq!(sector8_direction(0.0, 2.0).unwrap(), DirectionSet::single(Front));
        assert_eq!(sector8_direction(2.0, 0.0).unwrap(), DirectionSet::single(Right));
        assert_eq!(
            sector8_direction(1.0, 1.0).unwrap(),
            DirectionSet::new(&[Front, Right]).unwrap()
        );
        assert_eq!(sector8_direction(0.0, -1.0).unwrap(), DirectionSet::single(Back));
        assert_eq!(
            sector8_direction(-1.0, -1.0).unwrap(),
            DirectionSet::new(&[Back, Left]).unwrap()
        );
        assert_eq!(sector8_direction(0.0, 0.0), Err(GeometryError::DegenerateVector));
    }

    #[test]
    fn direction_set_rejects_opposites() {
        use Direction::*;
        assert!(DirectionSet::new(&[Front, Back]).is_none());
        assert!(DirectionSet::new(&[Left, Right, Up]).is_none());
        assert!(DirectionSet::new(&[]).is_none());
        let s = DirectionSet::new(&[Left, Front]).unwrap();
        assert_eq!(s.names(), vec!["front", "left"]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["front","left"]"#);
    }

    #[test]
    fn relative_pose_identity_and_forward_shift() {
        let a = frame_at(Pose::look_at([1.0, 2.0, 1.5], [4.0, 3.0, 1.0]));
        let rel = relative_pose(&a, &a);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((rel.rotation[i][j] - e).abs() < 1e-12);
            }
            assert!(rel.translation[i].abs() < 1e-12);
        }
        let mut shifted = a.pose();
        shifted.translation = add(shifted.translation, shifted.forward());
        let b = frame_at(shifted);
        let rel = relative_pose(&a, &b);
        assert!((rel.translation[0]).abs() < 1e-12);
        assert!((rel.translation[1]).abs() < 1e-12);
        assert!((rel.translation[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn yaw_of_counterclockwise_turn() {
        let a = frame_at(Pose::look_at([0.0, 0.0, 1.5], [1.0, 0.0, 1.5]));
        let (s, c) = 30.0f64.to_radians().sin_cos();
        let b = frame_at(Pose::look_at([0.0, 0.0, 1.5], [c, s, 1.5]));
        assert_eq!(yaw_delta(&a, &a).unwrap(), 0.0);
        assert!((yaw_delta(&a, &b).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn look_at_is_orthonormal_with_down_axis() {
        let p = Pose::look_at([0.0, 0.0, 1.5], [3.0, -2.0, 0.4]);
        assert!(orthonormality_error(&p.rotation) < 1e-12);
        // image +Y has a negative world-Z component
        assert!(p.rotation[2][1] < 0.0);
    }
}
