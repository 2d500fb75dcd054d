//! Phase-based log-demons registration of harmonic phase volumes.
//!
//! Each tag direction contributes one wrapped phase volume. The reference
//! frame `Φ` and the deformed frame `Θ` are matched with demons updates on
//! wrapped phase differences. Updates accumulate in a stationary velocity
//! `v`, and scaling and squaring turns `v` into a displacement and its
//! inverse.
//!
//! Volumes are indexed `[x, y, z]` and vector fields `[component, x, y, z]`.
//! Displacements are in voxel units and voxel `(i, j, k)` sits at `(i, j, k)`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3, ArrayViewMut3, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TrajectoryField;
use crate::synth::{Motion, Point};
use crate::tensor::{load_tensor, save_tensor, Tensor};

/// Denominator below which the demons update is set to zero.
pub const DENOM_GUARD: f64 = 1e-12;
/// Scaling and squaring halves `v` until every vector is at most this long.
const SQUARING_THRESHOLD: f64 = 0.5;
const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// `mod(θ + π, 2π) − π`, landing in `[−π, π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let r = (theta + PI).rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= 2.0 * PI {
        -PI
    } else {
        r - PI
    }
}

fn check_volume_dims(dims: (usize, usize, usize)) -> Result<()> {
    if dims.0 < 3 || dims.1 < 3 || dims.2 < 3 {
        return Err(Error::DimMismatch(format!(
            "volume {dims:?} needs at least 3 voxels per axis for differences"
        )));
    }
    Ok(())
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument(format!("voxel spacing {spacing:?} must be positive")));
    }
    Ok(())
}

/// Central differences, one-sided on the borders, in phase per length.
fn central_gradient(f: ArrayView3<'_, f64>, spacing: [f64; 3]) -> Array4<f64> {
    let (nx, ny, nz) = f.dim();
    let mut g = Array4::zeros((3, nx, ny, nz));
    for axis in 0..3 {
        let n = f.len_of(Axis(axis));
        let mut out = g.index_axis_mut(Axis(0), axis);
        for i in 0..n {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let step = (hi - lo) as f64 * spacing[axis];
            Zip::from(out.index_axis_mut(Axis(axis), i))
                .and(f.index_axis(Axis(axis), hi))
                .and(f.index_axis(Axis(axis), lo))
                .for_each(|o, &b, &a| *o = (b - a) / step);
        }
    }
    g
}

/// Gradient of a wrapped phase that ignores the ±π seam: per voxel, the
/// smaller of `∇Φ` and `∇W(Φ + π)` by Euclidean norm.
pub fn starred_gradient(phase: ArrayView3<'_, f64>, spacing: [f64; 3]) -> Result<Array4<f64>> {
    check_volume_dims(phase.dim())?;
    check_spacing(spacing)?;
    let direct = central_gradient(phase, spacing);
    let shifted = phase.mapv(|p| wrap_phase(p + PI));
    let other = central_gradient(shifted.view(), spacing);
    let mut out = direct;
    let (_, nx, ny, nz) = out.dim();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let a: f64 = (0..3).map(|c| out[[c, i, j, k]].powi(2)).sum();
                let b: f64 = (0..3).map(|c| other[[c, i, j, k]].powi(2)).sum();
                if a > b {
                    for c in 0..3 {
                        out[[c, i, j, k]] = other[[c, i, j, k]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reference and deformed phase volumes for the three tag directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVolumeSet {
    phi: [Array3<f64>; 3],
    theta: [Array3<f64>; 3],
    spacing: [f64; 3],
}

impl PhaseVolumeSet {
    pub fn new(phi: [Array3<f64>; 3], theta: [Array3<f64>; 3], spacing: [f64; 3]) -> Result<Self> {
        check_spacing(spacing)?;
        let dims = phi[0].dim();
        check_volume_dims(dims)?;
        for (name, vol) in phi.iter().map(|v| ("phi", v)).chain(theta.iter().map(|v| ("theta", v))) {
            if vol.dim() != dims {
                return Err(Error::DimMismatch(format!(
                    "{name} volume {:?} differs from {dims:?}",
                    vol.dim()
                )));
            }
            if let Some(index) = vol.iter().position(|&p| !(-PI..PI).contains(&p)) {
                return Err(Error::InvalidArgument(format!(
                    "{name} value at flat index {index} is outside [-pi, pi)"
                )));
            }
        }
        Ok(PhaseVolumeSet { phi, theta, spacing })
    }

    pub fn phi(&self) -> &[Array3<f64>; 3] {
        &self.phi
    }

    pub fn theta(&self) -> &[Array3<f64>; 3] {
        &self.theta
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        let (x, y, z) = self.phi[0].dim();
        [x, y, z]
    }
}

/// Stationary velocity, `[3, X, Y, Z]` in voxel units.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    v: Array4<f64>,
}

impl VelocityField {
    pub fn new(v: Array4<f64>) -> Result<Self> {
        if v.dim().0 != 3 {
            return Err(Error::DimMismatch(format!("velocity needs 3 components, got {}", v.dim().0)));
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(VelocityField { v })
    }

    pub fn field(&self) -> &Array4<f64> {
        &self.v
    }
}

/// Forward and inverse displacement, both `[3, X, Y, Z]` in voxel units.
/// The forward map sends reference coordinates to deformed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub displacement: Array4<f64>,
    pub inverse_displacement: Array4<f64>,
}

impl MotionField {
    pub fn identity(dims: [usize; 3]) -> Self {
        let shape = (3, dims[0], dims[1], dims[2]);
        MotionField {
            displacement: Array4::zeros(shape),
            inverse_displacement: Array4::zeros(shape),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        let (_, x, y, z) = self.displacement.dim();
        [x, y, z]
    }

    /// Largest `|φ(φ⁻¹(x)) − x|` over voxels at least `margin` from every face.
    pub fn composition_error(&self, margin: usize) -> f64 {
        let round_trip = compose(&self.inverse_displacement, &self.displacement);
        max_norm_interior(&round_trip, margin)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensor(&Tensor::from_array4(&self.displacement)?, path)
    }
}

/// Registration settings. Sigmas and the step cap are in voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingParams {
    /// Normalization `S`; `None` means the mean squared voxel size.
    pub normalization: Option<f64>,
    pub iterations: usize,
    pub fluid_sigma: f64,
    pub diffusion_sigma: f64,
    pub step_cap: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            normalization: None,
            iterations: 100,
            fluid_sigma: 1.0,
            diffusion_sigma: 1.0,
            step_cap: 0.4,
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} must be positive")))
            }
        };
        if let Some(s) = self.normalization {
            positive("normalization", s)?;
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        positive("fluid_sigma", self.fluid_sigma)?;
        positive("diffusion_sigma", self.diffusion_sigma)?;
        positive("step_cap", self.step_cap)
    }

    pub fn normalization_for(&self, spacing: [f64; 3]) -> f64 {
        self.normalization
            .unwrap_or_else(|| spacing.iter().map(|h| h * h).sum::<f64>() / 3.0)
    }
}

/// Lower corner and fractional offsets for trilinear sampling at `p`,
/// clamped to the grid.
fn cell(dims: [usize; 3], p: [f64; 3]) -> ([usize; 3], [f64; 3]) {
    let mut base = [0; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let hi = (dims[a] - 1) as f64;
        let x = p[a].clamp(0.0, hi);
        let i = (x.floor() as usize).min(dims[a].saturating_sub(2));
        base[a] = i;
        frac[a] = x - i as f64;
    }
    (base, frac)
}

fn corners(base: [usize; 3], frac: [f64; 3]) -> impl Iterator<Item = ([usize; 3], f64)> {
    (0..8).map(move |c| {
        let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let w: f64 = (0..3)
            .map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] })
            .product();
        ([base[0] + off[0], base[1] + off[1], base[2] + off[2]], w)
    })
}

/// Trilinear sample of a wrapped phase: corners are unwrapped relative to
/// the first corner before blending.
fn sample_phase(f: &Array3<f64>, p: [f64; 3]) -> f64 {
    let (x, y, z) = f.dim();
    let (base, frac) = cell([x, y, z], p);
    let anchor = f[base];
    let acc: f64 = corners(base, frac)
        .map(|(idx, w)| w * (anchor + wrap_phase(f[idx] - anchor)))
        .sum();
    wrap_phase(acc)
}

fn sample_vector(f: &Array4<f64>, p: [f64; 3]) -> [f64; 3] {
    let (_, x, y, z) = f.dim();
    let (base, frac) = cell([x, y, z], p);
    let mut out = [0.0; 3];
    for (idx, w) in corners(base, frac) {
        if w == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += w * f[[c, idx[0], idx[1], idx[2]]];
        }
    }
    out
}

fn unravel(flat: usize, dims: [usize; 3]) -> [usize; 3] {
    let k = flat % dims[2];
    let j = (flat / dims[2]) % dims[1];
    [flat / (dims[1] * dims[2]), j, k]
}

fn par_volume(dims: [usize; 3], f: impl Fn([usize; 3]) -> f64 + Sync) -> Array3<f64> {
    let data: Vec<f64> = (0..dims.iter().product())
        .into_par_iter()
        .map(|flat| f(unravel(flat, dims)))
        .collect();
    Array3::from_shape_vec((dims[0], dims[1], dims[2]), data).expect("matching length")
}

fn par_field(dims: [usize; 3], f: impl Fn([usize; 3]) -> [f64; 3] + Sync) -> Array4<f64> {
    let vectors: Vec<[f64; 3]> = (0..dims.iter().product())
        .into_par_iter()
        .map(|flat| f(unravel(flat, dims)))
        .collect();
    let n = vectors.len();
    let mut data = vec![0.0; 3 * n];
    for (flat, v) in vectors.iter().enumerate() {
        for c in 0..3 {
            data[c * n + flat] = v[c];
        }
    }
    Array4::from_shape_vec((3, dims[0], dims[1], dims[2]), data).expect("matching length")
}

fn field_dims(f: &Array4<f64>) -> [usize; 3] {
    let (_, x, y, z) = f.dim();
    [x, y, z]
}

fn at(f: &Array4<f64>, idx: [usize; 3]) -> [f64; 3] {
    std::array::from_fn(|c| f[[c, idx[0], idx[1], idx[2]]])
}

/// Displacement of the map `x ↦ ψ(φ(x))` where `first` belongs to φ and
/// `then` to ψ.
fn compose(first: &Array4<f64>, then: &Array4<f64>) -> Array4<f64> {
    par_field(field_dims(first), |idx| {
        let d = at(first, idx);
        let p = std::array::from_fn(|a| idx[a] as f64 + d[a]);
        let e = sample_vector(then, p);
        std::array::from_fn(|a| d[a] + e[a])
    })
}

fn max_norm(f: &Array4<f64>) -> f64 {
    max_norm_interior(f, 0)
}

fn max_norm_interior(f: &Array4<f64>, margin: usize) -> f64 {
    let dims = field_dims(f);
    let mut best: f64 = 0.0;
    for i in margin..dims[0].saturating_sub(margin) {
        for j in margin..dims[1].saturating_sub(margin) {
            for k in margin..dims[2].saturating_sub(margin) {
                let v = at(f, [i, j, k]);
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                best = if n.is_nan() { f64::NAN } else { best.max(n) };
            }
        }
    }
    best
}

fn scaling_squaring(v: &Array4<f64>) -> Array4<f64> {
    let m = max_norm(v);
    let steps = if m > SQUARING_THRESHOLD {
        (m / SQUARING_THRESHOLD).log2().ceil() as i32
    } else {
        0
    };
    let u = v * 0.5f64.powi(steps);
    // second-order start: exp(u)(x) ≈ x + u + ½ (∇u) u
    let jac: [Array4<f64>; 3] = std::array::from_fn(|c| central_gradient(u.index_axis(Axis(0), c), [1.0; 3]));
    let mut d = par_field(field_dims(&u), |idx| {
        let uu = at(&u, idx);
        std::array::from_fn(|c| {
            let g = at(&jac[c], idx);
            uu[c] + 0.5 * (g[0] * uu[0] + g[1] * uu[1] + g[2] * uu[2])
        })
    });
    for _ in 0..steps {
        d = compose(&d, &d);
    }
    d
}

/// `φ = exp(v)` and `φ⁻¹ = exp(−v)` by scaling and squaring.
pub fn exp_field(v: &VelocityField) -> MotionField {
    let neg = v.field().mapv(|x| -x);
    let (displacement, inverse_displacement) =
        rayon::join(|| scaling_squaring(v.field()), || scaling_squaring(&neg));
    MotionField {
        displacement,
        inverse_displacement,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable Gaussian blur with replicated borders.
fn smooth_volume(mut vol: ArrayViewMut3<'_, f64>, kernel: &[f64]) {
    let r = (kernel.len() / 2) as i64;
    let mut buf = Vec::new();
    for axis in 0..3 {
        for mut lane in vol.lanes_mut(Axis(axis)) {
            buf.clear();
            buf.extend(lane.iter().copied());
            let n = buf.len() as i64;
            for (i, out) in lane.iter_mut().enumerate() {
                *out = kernel
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * buf[(i as i64 + j as i64 - r).clamp(0, n - 1) as usize])
                    .sum();
            }
        }
    }
}

fn smooth_field(f: &mut Array4<f64>, sigma: f64) {
    let kernel = gaussian_kernel(sigma);
    for comp in f.outer_iter_mut() {
        smooth_volume(comp, &kernel);
    }
}

struct PhaseFrame<'a> {
    phase: &'a [Array3<f64>; 3],
    gradient: [Array4<f64>; 3],
}

impl<'a> PhaseFrame<'a> {
    fn new(phase: &'a [Array3<f64>; 3], spacing: [f64; 3]) -> Result<Self> {
        let g = |a: usize| starred_gradient(phase[a].view(), spacing);
        Ok(PhaseFrame {
            phase,
            gradient: [g(0)?, g(1)?, g(2)?],
        })
    }
}

/// Per-voxel demons step in voxel units.
fn demons_field(reference: &PhaseFrame<'_>, deformed: &PhaseFrame<'_>, spacing: [f64; 3], s: f64) -> Array4<f64> {
    let (x, y, z) = reference.phase[0].dim();
    par_field([x, y, z], |idx| {
        let mut v0 = [0.0; 3];
        let mut alpha1 = 0.0;
        let mut alpha2 = 0.0;
        for a in 0..3 {
            let r = wrap_phase(reference.phase[a][idx] - deformed.phase[a][idx]);
            let gp = at(&reference.gradient[a], idx);
            let gt = at(&deformed.gradient[a], idx);
            for c in 0..3 {
                let g = gp[c] + gt[c];
                v0[c] += r * g;
                alpha1 += g * g;
            }
            alpha2 += r * r;
        }
        let denom = alpha1 + alpha2 / s;
        if denom < DENOM_GUARD {
            return [0.0; 3];
        }
        std::array::from_fn(|c| v0[c] / denom / spacing[c])
    })
}

/// One demons update `δv` between the unwarped frames of `p`.
pub fn demons_update(p: &PhaseVolumeSet, params: &TrackingParams) -> Result<Array4<f64>> {
    params.validate()?;
    let reference = PhaseFrame::new(&p.phi, p.spacing)?;
    let deformed = PhaseFrame::new(&p.theta, p.spacing)?;
    Ok(demons_field(&reference, &deformed, p.spacing, params.normalization_for(p.spacing)))
}

fn cap_norm(f: &mut Array4<f64>, cap: f64) {
    for mut v in f.lanes_mut(Axis(0)) {
        let n = v.dot(&v).sqrt();
        if n > cap {
            v *= cap / n;
        }
    }
}

fn warp_phase(f: &Array3<f64>, d: &Array4<f64>) -> Array3<f64> {
    par_volume(field_dims(d), |idx| {
        let dv = at(d, idx);
        sample_phase(f, std::array::from_fn(|a| idx[a] as f64 + dv[a]))
    })
}

/// Registers `Θ` onto `Φ`. Runs exactly `params.iterations` updates and
/// fails only if the velocity blows up beyond the grid extent.
pub fn register_pair(p: &PhaseVolumeSet, params: &TrackingParams) -> Result<MotionField> {
    params.validate()?;
    let spacing = p.spacing;
    let s = params.normalization_for(spacing);
    let dims = p.dims();
    let extent = *dims.iter().max().expect("three axes") as f64;
    let reference = PhaseFrame::new(&p.phi, spacing)?;
    let mut v = Array4::zeros((3, dims[0], dims[1], dims[2]));
    for _ in 0..params.iterations {
        // Θ sampled at φ(x) = x + d(x) should line up with Φ(x).
        let d = scaling_squaring(&v);
        let warped: [Array3<f64>; 3] = std::array::from_fn(|a| warp_phase(&p.theta[a], &d));
        let deformed = PhaseFrame::new(&warped, spacing)?;
        let mut dv = demons_field(&reference, &deformed, spacing, s);
        cap_norm(&mut dv, params.step_cap);
        smooth_field(&mut dv, params.fluid_sigma);
        v += &dv;
        smooth_field(&mut v, params.diffusion_sigma);
        let m = max_norm(&v);
        if !(m <= extent) {
            return Err(Error::Diverged { max_norm: m, extent });
        }
    }
    Ok(exp_field(&VelocityField::new(v)?))
}

/// Motion fields from frame 1 to each later frame of `frames`.
///
/// By default every frame is registered straight to the first. With
/// `compose` consecutive frames are registered and the steps chained.
pub fn register_sequence(
    frames: &[[Array3<f64>; 3]],
    spacing: [f64; 3],
    params: &TrackingParams,
    compose_steps: bool,
) -> Result<Vec<MotionField>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", frames.len())));
    }
    let pairs: Vec<(usize, usize)> = (1..frames.len())
        .map(|t| if compose_steps { (t - 1, t) } else { (0, t) })
        .collect();
    let fields: Vec<MotionField> = pairs
        .into_par_iter()
        .map(|(a, b)| {
            let set = PhaseVolumeSet::new(frames[a].clone(), frames[b].clone(), spacing)?;
            register_pair(&set, params)
        })
        .collect::<Result<_>>()?;
    if !compose_steps {
        return Ok(fields);
    }
    let mut chained: Vec<MotionField> = Vec::with_capacity(fields.len());
    for step in fields {
        let next = match chained.last() {
            None => step,
            Some(prev) => MotionField {
                displacement: compose(&prev.displacement, &step.displacement),
                inverse_displacement: compose(&step.inverse_displacement, &prev.inverse_displacement),
            },
        };
        chained.push(next);
    }
    Ok(chained)
}

/// Wavevectors for tags of the given wavelength (voxels) along x, y and z.
pub fn tag_wavevectors(wavelength: f64) -> Result<[[f64; 3]; 3]> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::InvalidArgument(format!("wavelength {wavelength} must be positive")));
    }
    let k = 2.0 * PI / wavelength;
    Ok([[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]])
}

fn phase_volumes(dims: [usize; 3], wavevectors: &[[f64; 3]; 3], map: &(impl Fn(Point) -> Point + Sync)) -> [Array3<f64>; 3] {
    std::array::from_fn(|a| {
        let k = wavevectors[a];
        par_volume(dims, |idx| {
            let x = map(idx.map(|i| i as f64));
            wrap_phase(k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
        })
    })
}

fn check_wavevectors(wavevectors: &[[f64; 3]; 3]) -> Result<()> {
    for k in wavevectors {
        let n = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(format!("wavevector {k:?} must be non-zero")));
        }
    }
    Ok(())
}

/// Tag phases advected by a motion: `Φ_a(x) = W(k_a·x)` and
/// `Θ_a(x) = W(k_a·φ⁻¹(x))`, with `inverse` giving `φ⁻¹` in voxel units.
pub fn synth_phases(
    inverse: impl Fn(Point) -> Point + Sync,
    wavevectors: [[f64; 3]; 3],
    dims: [usize; 3],
) -> Result<PhaseVolumeSet> {
    check_wavevectors(&wavevectors)?;
    check_volume_dims((dims[0], dims[1], dims[2]))?;
    let phi = phase_volumes(dims, &wavevectors, &|x| x);
    let theta = phase_volumes(dims, &wavevectors, &inverse);
    PhaseVolumeSet::new(phi, theta, [1.0; 3])
}

/// Phase volumes of every frame of a rigid motion spread linearly over
/// `frames` frames. Frame 1 is the undeformed reference.
pub fn rigid_phase_sequence(
    motion: &Motion,
    dims: [usize; 3],
    frames: usize,
    wavevectors: [[f64; 3]; 3],
) -> Result<Vec<[Array3<f64>; 3]>> {
    if frames < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {frames}")));
    }
    check_wavevectors(&wavevectors)?;
    check_volume_dims((dims[0], dims[1], dims[2]))?;
    // fail early on motions without a closed-form inverse
    motion.inverse_position([0.0; 3], 0.0)?;
    Ok((0..frames)
        .map(|t| {
            let fraction = t as f64 / (frames - 1) as f64;
            phase_volumes(dims, &wavevectors, &|x| {
                motion.inverse_position(x, fraction).expect("checked above")
            })
        })
        .collect())
}

/// Lagrangian tracks of the masked voxels: frame 1 is the voxel center and
/// frame `t` adds the displacement of `fields[t - 2]` at that center.
/// Points follow the row-major order of the mask.
pub fn fields_to_trajectories(fields: &[MotionField], mask: ArrayView3<'_, bool>) -> Result<TrajectoryField> {
    let (x, y, z) = mask.dim();
    let dims = [x, y, z];
    if fields.is_empty() {
        return Err(Error::InvalidArgument("no motion fields".into()));
    }
    for (t, f) in fields.iter().enumerate() {
        if f.dims() != dims {
            return Err(Error::DimMismatch(format!(
                "field {} has dims {:?}, mask has {dims:?}",
                t + 2,
                f.dims()
            )));
        }
    }
    let points: Vec<[usize; 3]> = mask
        .indexed_iter()
        .filter(|(_, &m)| m)
        .map(|((i, j, k), _)| [i, j, k])
        .collect();
    let frames = fields.len() + 1;
    let mut positions = Array3::zeros((points.len(), frames, 3));
    for (p, idx) in points.iter().enumerate() {
        for a in 0..3 {
            positions[[p, 0, a]] = idx[a] as f64;
        }
        for (t, f) in fields.iter().enumerate() {
            let d = at(&f.displacement, *idx);
            for a in 0..3 {
                positions[[p, t + 1, a]] = idx[a] as f64 + d[a];
            }
        }
    }
    TrajectoryField::new(positions)
}

fn phase_file(dir: &Path, frame: usize, axis: usize) -> std::path::PathBuf {
    dir.join(format!("phase_{}_t{:02}.mtf", AXIS_NAMES[axis], frame))
}

/// Writes frames as `phase_{x,y,z}_tNN.mtf` with 1-based `NN`.
pub fn save_phase_sequence(dir: impl AsRef<Path>, frames: &[[Array3<f64>; 3]]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, vols) in frames.iter().enumerate() {
        for (a, vol) in vols.iter().enumerate() {
            save_tensor(&Tensor::from_array3(vol)?, phase_file(dir, t + 1, a))?;
        }
    }
    Ok(())
}

/// Reads consecutive frames written by [`save_phase_sequence`].
pub fn load_phase_sequence(dir: impl AsRef<Path>) -> Result<Vec<[Array3<f64>; 3]>> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    while phase_file(dir, frames.len() + 1, 0).exists() {
        let t = frames.len() + 1;
        let load = |a: usize| load_tensor(phase_file(dir, t, a))?.to_array3();
        frames.push([load(0)?, load(1)?, load(2)?]);
    }
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} phase frames; need at least 2",
            dir.display(),
            frames.len()
        )));
    }
    Ok(frames)
}

/// Mask stored as a 0/1 tensor.
pub fn mask_from_tensor(t: &Tensor) -> Result<Array3<bool>> {
    let a = t.to_array3()?;
    if a.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
    }
    Ok(a.mapv(|v| v == 1.0))
}

pub fn mask_to_tensor(mask: &Array3<bool>) -> Tensor {
    Tensor::from_array3(&mask.mapv(|m| if m { 1.0 } else { 0.0 })).expect("rank-3 mask")
}
