//! Labelled synthetic motion datasets.
//!
//! * 2D: a half-ellipse "tongue" silhouette cut into `k` angular/radial
//!   sectors, each displaced by its own vector over two frames.
//! * 3D: two overlapping ellipsoidal "muscles" over 11 frames, one
//!   translated and one rotated about the x axis, with four scenarios that
//!   differ in which muscle pair is used, who rotates and how the
//!   interdigitated (overlapping) voxels are labelled.
//!
//! Coordinates are voxel indices: voxel `(i, j, k)` has center `(i, j, k)`.
//! Axis convention: x left-right, y posterior-anterior, z inferior-superior.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TrajectoryField;
use crate::labels::{save_labels, LabelVector};
use crate::rng::SeededRng;
use crate::tensor::{save_tensor, write_atomic};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Rigid motion, parameterized by its value at the final frame and
/// interpolated linearly in between. Frame 1 is always the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    /// Total displacement reached at the last frame.
    Translation { total: Point },
    /// Total angle (radians, right-handed) reached at the last frame.
    Rotation { axis: Axis, angle: f64, center: Point },
    /// Sum of the component displacements.
    Composite(Vec<Motion>),
}

impl Motion {
    fn validate(&self) -> Result<()> {
        match self {
            Motion::Translation { total } if total.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidArgument("translation must be finite".into()))
            }
            Motion::Rotation { angle, center, .. }
                if !angle.is_finite() || center.iter().any(|v| !v.is_finite()) =>
            {
                Err(Error::InvalidArgument("rotation must be finite".into()))
            }
            Motion::Composite(parts) => parts.iter().try_for_each(Motion::validate),
            _ => Ok(()),
        }
    }

    /// Displacement of `p` at `fraction` of the full motion.
    fn displacement(&self, p: Point, fraction: f64) -> Point {
        match self {
            Motion::Translation { total } => total.map(|t| t * fraction),
            Motion::Rotation {
                axis,
                angle,
                center,
            } => {
                let moved = rotate(p, *axis, angle * fraction, *center);
                [moved[0] - p[0], moved[1] - p[1], moved[2] - p[2]]
            }
            Motion::Composite(parts) => parts.iter().fold([0.0; 3], |acc, m| {
                let d = m.displacement(p, fraction);
                [acc[0] + d[0], acc[1] + d[1], acc[2] + d[2]]
            }),
        }
    }

    /// Position that `fraction` of the motion carries onto `x`.
    ///
    /// Only single translations and rotations have a closed-form inverse;
    /// composites are rejected.
    pub fn inverse_position(&self, x: Point, fraction: f64) -> Result<Point> {
        self.validate()?;
        match self {
            Motion::Translation { total } => Ok(std::array::from_fn(|i| x[i] - total[i] * fraction)),
            Motion::Rotation { axis, angle, center } => Ok(rotate(x, *axis, -angle * fraction, *center)),
            Motion::Composite(_) => Err(Error::InvalidArgument(
                "composite motions have no closed-form inverse".into(),
            )),
        }
    }

    /// Position of `p` after `fraction` of the motion.
    pub fn position(&self, p: Point, fraction: f64) -> Point {
        let d = self.displacement(p, fraction);
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    }
}

/// Right-handed rotation of `p` by `angle` about an axis through `center`.
pub fn rotate(p: Point, axis: Axis, angle: f64, center: Point) -> Point {
    let (s, c) = angle.sin_cos();
    let r = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let q = match axis {
        Axis::X => [r[0], c * r[1] - s * r[2], s * r[1] + c * r[2]],
        Axis::Y => [c * r[0] + s * r[2], r[1], -s * r[0] + c * r[2]],
        Axis::Z => [c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]],
    };
    [q[0] + center[0], q[1] + center[1], q[2] + center[2]]
}

/// Rotation about an arbitrary direction (Rodrigues). Errors on a zero axis.
pub fn rotate_about(p: Point, axis: Point, angle: f64, center: Point) -> Result<Point> {
    let len = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if !(len > 0.0) {
        return Err(Error::InvalidArgument("rotation axis has zero length".into()));
    }
    let k = axis.map(|a| a / len);
    let v = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let (s, c) = angle.sin_cos();
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kdv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    Ok(std::array::from_fn(|i| {
        v[i] * c + kxv[i] * s + k[i] * kdv * (1.0 - c) + center[i]
    }))
}

/// Positions of `points` at 1-based `frame` of `total_frames`.
pub fn apply_rigid_motion(
    points: &[Point],
    motion: &Motion,
    frame: usize,
    total_frames: usize,
) -> Result<Vec<Point>> {
    if total_frames < 1 || frame < 1 || frame > total_frames {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} outside 1..={total_frames}"
        )));
    }
    motion.validate()?;
    let fraction = if total_frames == 1 {
        0.0
    } else {
        (frame - 1) as f64 / (total_frames - 1) as f64
    };
    Ok(points
        .iter()
        .map(|&p| {
            let d = motion.displacement(p, fraction);
            [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
        })
        .collect())
}

/// A labelled region: mask of voxel indices plus its motion.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub label: usize,
    pub voxels: Vec<[usize; 3]>,
    pub motion: Motion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    /// Ground-truth cluster count.
    pub fn clusters(self) -> usize {
        match self {
            Scenario::A | Scenario::C => 2,
            Scenario::B | Scenario::D => 3,
        }
    }

    /// Spectral scale used in the reference experiments for this scenario.
    pub fn reference_sigma(self) -> f64 {
        match self {
            Scenario::A | Scenario::C => 0.01,
            Scenario::B | Scenario::D => 0.05,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(Error::InvalidArgument(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Where rotating regions pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RotationCenter {
    /// Posterior-superior point outside the muscles, mimicking a rotation
    /// about the styloid process. Placed at fractions `(0.5, -0.25, 1.1)`
    /// of the grid.
    #[default]
    Styloid,
    /// Centroid of the rotating mask.
    Centroid,
    /// Explicit voxel coordinates.
    Fixed(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synth3dOptions {
    pub frames: usize,
    /// Total rotation over the sequence, radians about +x.
    pub rotation_angle: f64,
    /// Total translation over the sequence, voxels.
    pub translation: Point,
    pub rotation_center: RotationCenter,
    /// Standard deviation of Gaussian position noise added to frames 2..L.
    pub jitter: f64,
}

impl Default for Synth3dOptions {
    fn default() -> Self {
        Synth3dOptions {
            frames: 11,
            rotation_angle: -0.1,
            translation: [0.0, 0.0, 3.0],
            rotation_center: RotationCenter::Styloid,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synth2dOptions {
    /// Mean displacement length, voxels.
    pub magnitude: f64,
    /// Standard deviation of Gaussian noise on each displacement component.
    pub jitter: f64,
}

impl Default for Synth2dOptions {
    fn default() -> Self {
        Synth2dOptions {
            magnitude: 1.0,
            jitter: 0.05,
        }
    }
}

/// Parameters recorded in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub kind: String,
    pub grid: Vec<usize>,
    pub frames: usize,
    pub points: usize,
    pub clusters: usize,
    pub seed: u64,
    pub regions: Vec<RegionInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub label: usize,
    pub name: String,
    pub voxels: usize,
    pub motion: Motion,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub trajectories: TrajectoryField,
    pub truth: LabelVector,
    pub grid_dims: Vec<usize>,
    /// Voxel index of each point, in point order.
    pub voxels: Vec<[usize; 3]>,
    pub info: DatasetInfo,
}

impl SyntheticDataset {
    /// Writes `<stem>.mtf` (trajectories), `<stem>.csv` (labels) and
    /// `<stem>.json` (parameters) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_tensor(&self.trajectories.to_tensor(), dir.join(format!("{stem}.mtf")))?;
        save_labels(&self.truth, dir.join(format!("{stem}.csv")))?;
        let json = serde_json::to_string_pretty(&self.info)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())
    }
}

/// Builds trajectories for disjoint regions. Points are ordered by voxel
/// index (x slowest); noise is added to frames after the first.
fn assemble(
    regions: &[RegionSpec],
    frames: usize,
    jitter: f64,
    rng: &mut SeededRng,
) -> Result<(TrajectoryField, LabelVector, Vec<[usize; 3]>)> {
    let mut owned: Vec<([usize; 3], usize)> = regions
        .iter()
        .enumerate()
        .flat_map(|(r, spec)| spec.voxels.iter().map(move |&v| (v, r)))
        .collect();
    owned.sort();
    if owned.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("region masks overlap".into()));
    }
    let p = owned.len();
    let mut positions = Array3::zeros((p, frames, 3));
    for frame in 1..=frames {
        for (r, spec) in regions.iter().enumerate() {
            let idx: Vec<usize> = (0..p).filter(|&i| owned[i].1 == r).collect();
            let pts: Vec<Point> = idx
                .iter()
                .map(|&i| owned[i].0.map(|c| c as f64))
                .collect();
            let moved = apply_rigid_motion(&pts, &spec.motion, frame, frames)?;
            for (&i, q) in idx.iter().zip(moved) {
                for c in 0..3 {
                    positions[[i, frame - 1, c]] = q[c];
                }
            }
        }
    }
    if jitter > 0.0 {
        for i in 0..p {
            for f in 1..frames {
                for c in 0..3 {
                    positions[[i, f, c]] += jitter * rng.normal();
                }
            }
        }
    }
    let labels = owned.iter().map(|&(_, r)| regions[r].label).collect();
    let voxels = owned.iter().map(|&(v, _)| v).collect();
    Ok((TrajectoryField::new(positions)?, LabelVector::new(labels), voxels))
}

/// Two-frame 2D dataset with `k` sector regions on an `nx x ny` grid.
pub fn synth_2d(k: usize, grid: [usize; 2], opts: &Synth2dOptions, rng: &mut SeededRng) -> Result<SyntheticDataset> {
    if !(2..=12).contains(&k) {
        return Err(Error::InvalidArgument(format!("region count {k} outside 2..=12")));
    }
    let [nx, ny] = grid;
    if nx < 32 || ny < 32 {
        return Err(Error::InvalidArgument(format!("2D grid {nx}x{ny} smaller than 32x32")));
    }
    // Half-ellipse above a baseline near the bottom of the grid.
    let cx = (nx as f64 - 1.0) / 2.0;
    let base = 0.1 * ny as f64;
    let ax = 0.45 * nx as f64;
    let ay = 0.8 * ny as f64;
    // Inner half-disc gets k/3 sectors, the outer ring the rest; the split
    // radius keeps sector areas equal.
    let inner = k / 3;
    let outer = k - inner;
    let split = (inner as f64 / k as f64).sqrt();
    let mut voxels: Vec<Vec<[usize; 3]>> = vec![Vec::new(); k];
    for i in 0..nx {
        for j in 0..ny {
            let u = (i as f64 - cx) / ax;
            let v = (j as f64 - base) / ay;
            let r = (u * u + v * v).sqrt();
            if v < 0.0 || r > 1.0 {
                continue;
            }
            // angle in [0, pi], measured from +x
            let theta = v.atan2(u).clamp(0.0, PI);
            let region = if r < split {
                ((theta / PI * inner as f64) as usize).min(inner - 1)
            } else {
                inner + ((theta / PI * outer as f64) as usize).min(outer - 1)
            };
            voxels[region].push([i, j, 0]);
        }
    }
    let regions: Vec<RegionSpec> = voxels
        .into_iter()
        .enumerate()
        .map(|(r, vox)| {
            // distinct direction and length per region
            let angle = 0.35 + 2.0 * PI * r as f64 / k as f64;
            let len = opts.magnitude * (0.75 + 0.5 * ((r * 5) % k) as f64 / k as f64);
            RegionSpec {
                label: r,
                voxels: vox,
                motion: Motion::Translation {
                    total: [len * angle.cos(), len * angle.sin(), 0.0],
                },
            }
        })
        .collect();
    if let Some(empty) = regions.iter().find(|r| r.voxels.is_empty()) {
        return Err(Error::InvalidArgument(format!("region {} is empty", empty.label)));
    }
    let seed = rng.seed();
    let (trajectories, truth, voxels) = assemble(&regions, 2, opts.jitter, rng)?;
    let info = DatasetInfo {
        kind: format!("synth2d:{k}"),
        grid: vec![nx, ny],
        frames: 2,
        points: truth.len(),
        clusters: k,
        seed,
        regions: regions
            .iter()
            .map(|r| RegionInfo {
                label: r.label,
                name: format!("sector{}", r.label),
                voxels: r.voxels.len(),
                motion: r.motion.clone(),
            })
            .collect(),
    };
    Ok(SyntheticDataset {
        trajectories,
        truth,
        grid_dims: vec![nx, ny],
        voxels,
        info,
    })
}

fn ellipsoid(grid: [usize; 3], center: Point, semi: Point) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..grid[0] {
        for j in 0..grid[1] {
            for k in 0..grid[2] {
                let p = [i as f64, j as f64, k as f64];
                let r: f64 = (0..3)
                    .map(|c| ((p[c] - center[c]) / semi[c]).powi(2))
                    .sum();
                if r <= 1.0 {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn scaled(grid: [usize; 3], frac: Point) -> Point {
    std::array::from_fn(|c| frac[c] * (grid[c] as f64 - 1.0))
}

fn centroid(voxels: &[[usize; 3]]) -> Point {
    let n = voxels.len().max(1) as f64;
    std::array::from_fn(|c| voxels.iter().map(|v| v[c] as f64).sum::<f64>() / n)
}

/// Muscle masks: genioglossus-like body, superior sheet, transverse sheet.
fn muscle_masks(grid: [usize; 3]) -> ([Vec<[usize; 3]>; 3], [&'static str; 3]) {
    let gg = ellipsoid(
        grid,
        scaled(grid, [0.5, 0.5, 0.38]),
        scaled(grid, [0.2, 0.38, 0.26]),
    );
    let sl = ellipsoid(
        grid,
        scaled(grid, [0.5, 0.5, 0.62]),
        scaled(grid, [0.24, 0.4, 0.12]),
    );
    let tr = ellipsoid(
        grid,
        scaled(grid, [0.5, 0.66, 0.42]),
        scaled(grid, [0.42, 0.09, 0.24]),
    );
    ([gg, sl, tr], ["GG", "SL", "T"])
}

/// 3D two-muscle scenario on an `nx x ny x nz` grid.
pub fn synth_3d(
    scenario: Scenario,
    grid: [usize; 3],
    opts: &Synth3dOptions,
    rng: &mut SeededRng,
) -> Result<SyntheticDataset> {
    if grid.iter().any(|&g| g < 20) {
        return Err(Error::InvalidArgument(format!("3D grid {grid:?} smaller than 20^3")));
    }
    if opts.frames < 2 {
        return Err(Error::InvalidArgument("need at least 2 frames".into()));
    }
    let ([gg, sl, tr], names) = muscle_masks(grid);
    let (other, other_name) = match scenario {
        Scenario::A | Scenario::B => (sl, names[1]),
        Scenario::C | Scenario::D => (tr, names[2]),
    };
    let other_set: std::collections::BTreeSet<_> = other.iter().copied().collect();
    let (overlap, gg_only): (Vec<_>, Vec<_>) = gg.into_iter().partition(|v| other_set.contains(v));
    let overlap_set: std::collections::BTreeSet<_> = overlap.iter().copied().collect();
    let other_only: Vec<_> = other.into_iter().filter(|v| !overlap_set.contains(v)).collect();

    let gg_rotates = scenario == Scenario::C;
    let interdigitated_own = matches!(scenario, Scenario::B | Scenario::D);
    // The rotating mask includes the overlap, which belongs to both muscles.
    let rotating_mask: Vec<[usize; 3]> = if gg_rotates {
        gg_only.iter().chain(&overlap).copied().collect()
    } else {
        other_only.iter().chain(&overlap).copied().collect()
    };
    let center = match opts.rotation_center {
        RotationCenter::Styloid => scaled(grid, [0.5, -0.25, 1.1]),
        RotationCenter::Centroid => centroid(&rotating_mask),
        RotationCenter::Fixed(c) => c,
    };
    let rotation = Motion::Rotation {
        axis: Axis::X,
        angle: opts.rotation_angle,
        center,
    };
    let translation = Motion::Translation {
        total: opts.translation,
    };
    let (gg_motion, other_motion) = if gg_rotates {
        (rotation.clone(), translation.clone())
    } else {
        (translation.clone(), rotation.clone())
    };

    let mut regions = vec![
        RegionSpec {
            label: 0,
            voxels: gg_only,
            motion: gg_motion.clone(),
        },
        RegionSpec {
            label: 1,
            voxels: other_only,
            motion: other_motion.clone(),
        },
    ];
    let mut names = vec!["GG".to_string(), other_name.to_string()];
    if interdigitated_own {
        // Overlap carries the composite of both muscles' displacements.
        regions.push(RegionSpec {
            label: 2,
            voxels: overlap,
            motion: Motion::Composite(vec![gg_motion, other_motion]),
        });
        names.push("interdigitated".into());
    } else {
        regions[0].voxels.extend(overlap);
    }
    if let Some(empty) = regions.iter().find(|r| r.voxels.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "region {} is empty on grid {grid:?}",
            empty.label
        )));
    }

    let seed = rng.seed();
    let (trajectories, truth, voxels) = assemble(&regions, opts.frames, opts.jitter, rng)?;
    let info = DatasetInfo {
        kind: format!("synth3d:{scenario}"),
        grid: grid.to_vec(),
        frames: opts.frames,
        points: truth.len(),
        clusters: scenario.clusters(),
        seed,
        regions: regions
            .iter()
            .zip(names)
            .map(|(r, name)| RegionInfo {
                label: r.label,
                name,
                voxels: r.voxels.len(),
                motion: r.motion.clone(),
            })
            .collect(),
    };
    Ok(SyntheticDataset {
        trajectories,
        truth,
        grid_dims: grid.to_vec(),
        voxels,
        info,
    })
}

/// Pairwise distances between the given points at one frame.
pub fn pairwise_distances(traj: &TrajectoryField, points: &[usize], frame: usize) -> Array2<f64> {
    let n = points.len();
    Array2::from_shape_fn((n, n), |(a, b)| {
        let p = traj.position(points[a], frame);
        let q = traj.position(points[b], frame);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_frame_is_identity() {
        let pts = vec![[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]];
        for motion in [
            Motion::Translation { total: [1.0, 2.0, 3.0] },
            Motion::Rotation { axis: Axis::Y, angle: 1.3, center: [0.5, 0.5, 0.5] },
        ] {
            assert_eq!(apply_rigid_motion(&pts, &motion, 1, 11).unwrap(), pts);
        }
    }

    #[test]
    fn translation_endpoint() {
        let m = Motion::Translation { total: [1.0, 0.0, 0.0] };
        let out = apply_rigid_motion(&[[0.0, 0.0, 0.0]], &m, 11, 11).unwrap();
        assert_eq!(out, vec![[1.0, 0.0, 0.0]]);
        let mid = apply_rigid_motion(&[[0.0, 0.0, 0.0]], &m, 6, 11).unwrap();
        assert_eq!(mid, vec![[0.5, 0.0, 0.0]]);
    }

    #[test]
    fn full_turn_returns_to_start() {
        let m = Motion::Rotation { axis: Axis::X, angle: 2.0 * PI, center: [1.0, -2.0, 0.5] };
        let p = [3.0, 4.0, -5.0];
        let out = apply_rigid_motion(&[p], &m, 11, 11).unwrap()[0];
        for c in 0..3 {
            assert!((out[c] - p[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulative_steps_match_closed_form() {
        // ten inter-frame steps of -0.01 rad about x, applied one after another
        let mut p = [0.0, 1.0, 0.0];
        for _ in 0..10 {
            p = rotate(p, Axis::X, -0.01, [0.0; 3]);
        }
        let expected = [0.0, 0.1f64.cos(), -(0.1f64.sin())];
        let m = Motion::Rotation { axis: Axis::X, angle: -0.1, center: [0.0; 3] };
        let last = apply_rigid_motion(&[[0.0, 1.0, 0.0]], &m, 11, 11).unwrap()[0];
        for c in 0..3 {
            assert!((p[c] - expected[c]).abs() < 1e-12);
            assert!((last[c] - expected[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn rodrigues_agrees_with_axis_rotation_and_rejects_zero_axis() {
        let p = [0.3, -1.2, 2.0];
        let c = [1.0, 1.0, 1.0];
        let a = rotate(p, Axis::Z, 0.7, c);
        let b = rotate_about(p, [0.0, 0.0, 2.0], 0.7, c).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
        assert!(rotate_about(p, [0.0; 3], 0.7, c).is_err());
    }

    #[test]
    fn bad_frame_index() {
        let m = Motion::Translation { total: [1.0; 3] };
        assert!(apply_rigid_motion(&[[0.0; 3]], &m, 0, 11).is_err());
        assert!(apply_rigid_motion(&[[0.0; 3]], &m, 12, 11).is_err());
    }

    #[test]
    fn synth_2d_regions() {
        for k in [7, 8] {
            let d = synth_2d(k, [64, 64], &Synth2dOptions::default(), &mut SeededRng::new(1)).unwrap();
            assert_eq!(d.truth.distinct(), k);
            assert_eq!(d.truth.k(), k);
            assert_eq!(d.trajectories.frames(), 2);
            let mut seen = d.voxels.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), d.voxels.len(), "every pixel labelled once");
        }
        assert!(synth_2d(1, [64, 64], &Synth2dOptions::default(), &mut SeededRng::new(1)).is_err());
        assert!(synth_2d(13, [64, 64], &Synth2dOptions::default(), &mut SeededRng::new(1)).is_err());
        assert!(synth_2d(8, [31, 64], &Synth2dOptions::default(), &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn synth_2d_deterministic_and_labels_seed_free() {
        let o = Synth2dOptions::default();
        let a = synth_2d(8, [48, 48], &o, &mut SeededRng::new(5)).unwrap();
        let b = synth_2d(8, [48, 48], &o, &mut SeededRng::new(5)).unwrap();
        let c = synth_2d(8, [48, 48], &o, &mut SeededRng::new(6)).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.truth, c.truth);
    }

    #[test]
    fn synth_3d_label_counts_and_first_frame() {
        for s in Scenario::ALL {
            let d = synth_3d(s, [24, 24, 24], &Synth3dOptions::default(), &mut SeededRng::new(2)).unwrap();
            assert_eq!(d.truth.distinct(), s.clusters());
            assert_eq!(d.trajectories.frames(), 11);
            assert_eq!(d.truth.len(), d.voxels.len());
            for (p, v) in d.voxels.iter().enumerate() {
                let pos = d.trajectories.position(p, 0);
                assert_eq!(pos, v.map(|c| c as f64));
            }
        }
        assert!("E".parse::<Scenario>().is_err());
        assert_eq!("b".parse::<Scenario>().unwrap(), Scenario::B);
    }

    #[test]
    fn rigid_regions_keep_distances() {
        let d = synth_3d(Scenario::A, [20, 20, 20], &Synth3dOptions::default(), &mut SeededRng::new(0)).unwrap();
        for label in 0..2 {
            let idx: Vec<usize> = (0..d.truth.len())
                .filter(|&i| d.truth.labels()[i] == label)
                .step_by(7)
                .collect();
            let first = pairwise_distances(&d.trajectories, &idx, 0);
            let last = pairwise_distances(&d.trajectories, &idx, 10);
            for (a, b) in first.iter().zip(last.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sidecar_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_3d(Scenario::D, [20, 20, 20], &Synth3dOptions::default(), &mut SeededRng::new(0)).unwrap();
        d.save(dir.path(), "scenario").unwrap();
        let info: DatasetInfo = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("scenario.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(info, d.info);
        assert!(dir.path().join("scenario.mtf").exists());
        assert!(dir.path().join("scenario.csv").exists());
    }
}
