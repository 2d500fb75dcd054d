//! Motion features: per-step track magnitude and the three projected
//! direction cosines (each shifted by +1), stacked into a non-negative
//! `4(L-1) x P` matrix and rescaled row-wise onto `[0, 10]`.

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Upper end of the per-row rescaling range.
pub const FEATURE_SCALE: f64 = 10.0;

/// Point positions over time, shape `[P, L, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryField {
    positions: Array3<f64>,
}

impl TrajectoryField {
    pub fn new(positions: Array3<f64>) -> Result<Self> {
        let (p, l, c) = positions.dim();
        if c != 3 {
            return Err(Error::DimMismatch(format!("last axis must be 3, got {c}")));
        }
        if l < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frames, got {l}")));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("trajectory field has no points".into()));
        }
        if let Some(index) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(TrajectoryField { positions })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Self::new(t.to_array3()?)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_array3(&self.positions).expect("validated shape")
    }

    pub fn points(&self) -> usize {
        self.positions.dim().0
    }

    pub fn frames(&self) -> usize {
        self.positions.dim().1
    }

    pub fn positions(&self) -> &Array3<f64> {
        &self.positions
    }

    /// Position of point `p` at 0-based frame `frame`.
    pub fn position(&self, p: usize, frame: usize) -> [f64; 3] {
        let row = self.positions.slice(ndarray::s![p, frame, ..]);
        [row[0], row[1], row[2]]
    }

    /// Displacement of point `p` from frame `l` to `l + 1`, with `l` 1-based
    /// in `1..L`.
    fn step(&self, p: usize, l: usize) -> Result<[f64; 3]> {
        if l == 0 || l >= self.frames() {
            return Err(Error::InvalidArgument(format!(
                "step index {l} outside 1..={}",
                self.frames() - 1
            )));
        }
        if p >= self.points() {
            return Err(Error::InvalidArgument(format!("point {p} out of range")));
        }
        let a = self.position(p, l - 1);
        let b = self.position(p, l);
        Ok([b[0] - a[0], b[1] - a[1], b[2] - a[2]])
    }
}

fn magnitude(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `num / sqrt(num^2 + other^2) + 1`, with a zero denominator mapping to 1.
fn shifted_cosine(num: f64, other: f64) -> f64 {
    let den = (num * num + other * other).sqrt();
    if den == 0.0 {
        1.0
    } else {
        num / den + 1.0
    }
}

fn angles(d: [f64; 3]) -> (f64, f64, f64) {
    let [dx, dy, dz] = d;
    (
        shifted_cosine(dx, dy),
        shifted_cosine(dy, dz),
        shifted_cosine(dz, dx),
    )
}

/// Length of the step of point `p` between frames `l` and `l+1` (1-based).
pub fn magnitude_feature(traj: &TrajectoryField, p: usize, l: usize) -> Result<f64> {
    Ok(magnitude(traj.step(p, l)?))
}

/// `(oz, ox, oy)` for point `p` and step `l` (1-based), each in `[0, 2]`.
pub fn angle_features(traj: &TrajectoryField, p: usize, l: usize) -> Result<(f64, f64, f64)> {
    Ok(angles(traj.step(p, l)?))
}

/// Raw (unscaled) feature column for one point.
fn feature_column(traj: &TrajectoryField, p: usize) -> Vec<f64> {
    let steps = traj.frames() - 1;
    let mut col = vec![0.0; 4 * steps];
    for l in 0..steps {
        let d = traj.step(p, l + 1).expect("in range");
        let (oz, ox, oy) = angles(d);
        col[l] = magnitude(d);
        col[steps + l] = oz;
        col[2 * steps + l] = ox;
        col[3 * steps + l] = oy;
    }
    col
}

/// Unscaled feature matrix: rows are magnitudes, then `oz`, `ox`, `oy`
/// blocks, each `L-1` long; one column per point.
pub fn raw_feature_matrix(traj: &TrajectoryField) -> Array2<f64> {
    let m = 4 * (traj.frames() - 1);
    let n = traj.points();
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(|p| feature_column(traj, p)).collect();
    let mut u = Array2::zeros((m, n));
    for (j, col) in cols.into_iter().enumerate() {
        u.column_mut(j).assign(&ArrayView1::from(&col));
    }
    u
}

/// Builds the rescaled feature matrix used by the factorization.
pub fn build_feature_matrix(traj: &TrajectoryField) -> Result<FeatureMatrix> {
    if let Some(index) = traj.positions.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    rescale_rows(&raw_feature_matrix(traj))
}

/// Per-row affine map of `[min, max]` onto `[0, 10]`; constant rows become 0.
pub fn rescale_rows(u: &Array2<f64>) -> Result<FeatureMatrix> {
    if let Some(index) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut out = u.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            let scale = FEATURE_SCALE / (hi - lo);
            row.mapv_inplace(|v| ((v - lo) * scale).clamp(0.0, FEATURE_SCALE));
        } else {
            row.fill(0.0);
        }
    }
    FeatureMatrix::new(out)
}

/// Non-negative feature matrix, one column per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    u: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(u: Array2<f64>) -> Result<Self> {
        if let Some(((row, col), &value)) = u.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
            if !value.is_finite() {
                return Err(Error::NonFinite { index: row * u.ncols() + col });
            }
            return Err(Error::NegativeEntry { row, col, value });
        }
        Ok(FeatureMatrix { u })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Self::new(t.to_array2()?)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_array2(self.u.view()).expect("non-empty matrix")
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.u
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.u.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn two_frame(steps: &[[f64; 3]]) -> TrajectoryField {
        let p = steps.len();
        let mut pos = Array3::zeros((p, 2, 3));
        for (i, d) in steps.iter().enumerate() {
            for c in 0..3 {
                pos[[i, 0, c]] = i as f64;
                pos[[i, 1, c]] = i as f64 + d[c];
            }
        }
        TrajectoryField::new(pos).unwrap()
    }

    #[test]
    fn magnitudes() {
        let t = two_frame(&[[3.0, 4.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert_eq!(magnitude_feature(&t, 0, 1).unwrap(), 5.0);
        assert_eq!(magnitude_feature(&t, 1, 1).unwrap(), 0.0);
        assert!((magnitude_feature(&t, 2, 1).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(magnitude_feature(&t, 0, 0).is_err());
        assert!(magnitude_feature(&t, 0, 2).is_err());
    }

    #[test]
    fn angle_cases() {
        let t = two_frame(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(angle_features(&t, 0, 1).unwrap(), (2.0, 1.0, 1.0));
        assert_eq!(angle_features(&t, 1, 1).unwrap().0, 0.0);
        assert_eq!(angle_features(&t, 2, 1).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn shape_and_layout() {
        let t = two_frame(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let raw = raw_feature_matrix(&t);
        assert_eq!(raw.dim(), (4, 3));
        assert_eq!(raw.row(0).to_vec(), vec![1.0, 2.0, 3.0]);
        // oz = dx/sqrt(dx^2+dy^2) + 1
        assert_eq!(raw.row(1).to_vec(), vec![2.0, 1.0, 1.0]);
        // ox = dy/sqrt(dy^2+dz^2) + 1
        assert_eq!(raw.row(2).to_vec(), vec![1.0, 2.0, 1.0]);
        // oy = dz/sqrt(dz^2+dx^2) + 1
        assert_eq!(raw.row(3).to_vec(), vec![1.0, 1.0, 2.0]);
        assert_eq!(build_feature_matrix(&t).unwrap().matrix().dim(), (4, 3));
    }

    #[test]
    fn multi_frame_block_order() {
        // P = 1, L = 3: steps (1,0,0) then (0,0,-2).
        let pos = Array3::from_shape_vec(
            (1, 3, 3),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -2.0],
        )
        .unwrap();
        let raw = raw_feature_matrix(&TrajectoryField::new(pos).unwrap());
        assert_eq!(
            raw.column(0).to_vec(),
            vec![1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn static_tracks_have_zero_magnitude_rows() {
        let t = two_frame(&[[0.0; 3], [0.0; 3]]);
        let u = build_feature_matrix(&t).unwrap();
        assert!(u.matrix().row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_examples() {
        let u = rescale_rows(&array![[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]).unwrap();
        assert_eq!(u.matrix(), &array![[0.0, 5.0, 10.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn non_finite_trajectory_rejected() {
        let mut pos = Array3::zeros((1, 2, 3));
        pos[[0, 1, 0]] = f64::NAN;
        assert!(TrajectoryField::new(pos).is_err());
    }

    proptest! {
        #[test]
        fn rescaled_rows_within_range(data in prop::collection::vec(-1e3f64..1e3, 12)) {
            let u = Array2::from_shape_vec((3, 4), data).unwrap();
            let r = rescale_rows(&u).unwrap();
            for &v in r.matrix() {
                prop_assert!((0.0..=FEATURE_SCALE).contains(&v));
            }
        }

        #[test]
        fn translation_invariant(
            data in prop::collection::vec(-5f64..5.0, 4 * 3 * 3),
            shift in prop::array::uniform3(-100f64..100.0),
        ) {
            let pos = Array3::from_shape_vec((4, 3, 3), data).unwrap();
            let mut moved = pos.clone();
            for mut p in moved.lanes_mut(Axis(2)) {
                for c in 0..3 { p[c] += shift[c]; }
            }
            let a = raw_feature_matrix(&TrajectoryField::new(pos).unwrap());
            let b = raw_feature_matrix(&TrajectoryField::new(moved).unwrap());
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
