//! Graph-regularized sparse NMF.
//!
//! Minimizes
//!
//! ```text
//! 1/2 |U - V W|_F^2 + lambda/2 Tr(W L W^T) + eta (sum_ij sqrt(w_ij))^2
//! ```
//!
//! with the multiplicative rules
//!
//! ```text
//! V <- V o (U W^T) / (V W W^T)
//! W <- W o (V^T U + lambda W Q) / (V^T V W + eta/2 W^(-1/2) + lambda W D)
//! ```
//!
//! Setting `eta = lambda = 0` gives the classical Lee-Seung Frobenius NMF.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{trace_wlw, NeighborGraph};
use crate::rng::SeededRng;

/// Added to every multiplicative-update denominator.
pub const DENOM_GUARD: f64 = 1e-12;
/// Lower bound applied to `W` before evaluating `W^(-1/2)`.
pub const DEFAULT_W_FLOOR: f64 = 1e-9;
/// Window (in iterations) over which the relative cost change is measured.
pub const STALL_WINDOW: usize = 10;

/// Sparsity penalty on the weighting map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sparsity {
    /// `(sum sqrt(w))^2`.
    #[default]
    LHalf,
    /// `sum w`; kept for side-by-side comparisons only.
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorizeConfig {
    pub eta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub w_floor: f64,
    pub sparsity: Sparsity,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        FactorizeConfig {
            eta: 100.0,
            lambda: 100.0,
            max_iters: 500,
            rel_tol: 1e-6,
            w_floor: DEFAULT_W_FLOOR,
            sparsity: Sparsity::LHalf,
        }
    }
}

impl FactorizeConfig {
    /// Plain Frobenius NMF.
    pub fn plain() -> Self {
        FactorizeConfig {
            eta: 0.0,
            lambda: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.eta) || !ok(self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "eta ({}) and lambda ({}) must be finite and non-negative",
                self.eta, self.lambda
            )));
        }
        if !(self.w_floor > 0.0) || !ok(self.rel_tol) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "w_floor must be positive, rel_tol non-negative, max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `U ~ V W` with both factors non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// Building blocks, `m x K`.
    pub v: Array2<f64>,
    /// Weighting map, `K x n`.
    pub w: Array2<f64>,
    /// Total cost before the first iteration and after each one.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }
}

fn check_product_shapes(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
) -> Result<()> {
    if v.nrows() != u.nrows() || w.ncols() != u.ncols() || v.ncols() != w.nrows() {
        return Err(Error::DimMismatch(format!(
            "U {:?}, V {:?}, W {:?} are not compatible",
            u.dim(),
            v.dim(),
            w.dim()
        )));
    }
    Ok(())
}

fn first_negative(a: ArrayView2<'_, f64>) -> Option<Error> {
    a.indexed_iter()
        .find(|(_, v)| !(**v >= 0.0))
        .map(|((row, col), &value)| Error::NegativeEntry { row, col, value })
}

/// `|U - V W|_F^2`.
pub fn frobenius_cost(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_product_shapes(u, v, w)?;
    let vw = v.dot(&w);
    Ok(Zip::from(&u)
        .and(&vw)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b)))
}

/// `(sum_ij sqrt(w_ij))^2`.
pub fn l_half_norm(w: ArrayView2<'_, f64>) -> Result<f64> {
    if let Some(e) = first_negative(w) {
        return Err(e);
    }
    let s: f64 = w.iter().map(|x| x.sqrt()).sum();
    Ok(s * s)
}

fn sparsity_penalty(w: ArrayView2<'_, f64>, sparsity: Sparsity) -> Result<f64> {
    match sparsity {
        Sparsity::LHalf => l_half_norm(w),
        Sparsity::L1 => {
            if let Some(e) = first_negative(w) {
                return Err(e);
            }
            Ok(w.sum())
        }
    }
}

/// Full objective: `1/2 |U - VW|^2 + lambda/2 Tr(W L W^T) + eta |W|_{1/2}`.
pub fn total_cost(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    g: &NeighborGraph,
    eta: f64,
    lambda: f64,
) -> Result<f64> {
    total_cost_with(u, v, w, g, eta, lambda, Sparsity::LHalf)
}

fn total_cost_with(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    g: &NeighborGraph,
    eta: f64,
    lambda: f64,
    sparsity: Sparsity,
) -> Result<f64> {
    let fit = 0.5 * frobenius_cost(u, v, w)?;
    let manifold = if lambda != 0.0 {
        0.5 * lambda * trace_wlw(w, g)?
    } else {
        0.0
    };
    let sparse = if eta != 0.0 {
        eta * sparsity_penalty(w, sparsity)?
    } else {
        0.0
    };
    Ok(fit + manifold + sparse)
}

/// One multiplicative step on the building blocks.
pub fn update_v(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_product_shapes(u, v, w)?;
    let numer = u.dot(&w.t());
    let denom = v.dot(&w.dot(&w.t()));
    let mut out = v.to_owned();
    Zip::from(&mut out)
        .and(&numer)
        .and(&denom)
        .for_each(|x, &n, &d| *x *= n / (d + DENOM_GUARD));
    Ok(out)
}

/// One multiplicative step on the weighting map with the L1/2 and graph
/// terms. `W` is floored at `w_floor` before the step.
pub fn update_w(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    g: &NeighborGraph,
    eta: f64,
    lambda: f64,
    w_floor: f64,
) -> Result<Array2<f64>> {
    update_w_with(u, v, w, g, eta, lambda, w_floor, Sparsity::LHalf)
}

#[allow(clippy::too_many_arguments)]
fn update_w_with(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    g: &NeighborGraph,
    eta: f64,
    lambda: f64,
    w_floor: f64,
    sparsity: Sparsity,
) -> Result<Array2<f64>> {
    check_product_shapes(u, v, w)?;
    if g.n() != w.ncols() {
        return Err(Error::DimMismatch(format!(
            "graph has {} nodes, W has {} columns",
            g.n(),
            w.ncols()
        )));
    }
    let w = w.mapv(|x| x.max(w_floor));
    let mut numer = v.t().dot(&u);
    let mut denom = v.t().dot(&v).dot(&w);
    if lambda != 0.0 {
        numer.scaled_add(lambda, &g.right_mul_q(w.view()));
        denom.scaled_add(lambda, &g.right_mul_d(w.view()));
    }
    if eta != 0.0 {
        match sparsity {
            Sparsity::LHalf => Zip::from(&mut denom)
                .and(&w)
                .for_each(|d, &x| *d += 0.5 * eta / x.sqrt()),
            Sparsity::L1 => denom += eta,
        }
    }
    let mut out = w;
    Zip::from(&mut out)
        .and(&numer)
        .and(&denom)
        .for_each(|x, &n, &d| *x *= n / (d + DENOM_GUARD));
    Ok(out)
}

/// Alternates V and W updates from a seeded random start until the
/// iteration budget runs out or the total cost stalls.
pub fn factorize(
    u: ArrayView2<'_, f64>,
    rank: usize,
    g: &NeighborGraph,
    cfg: &FactorizeConfig,
    rng: &mut SeededRng,
) -> Result<Factorization> {
    cfg.validate()?;
    let (m, n) = u.dim();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "inner rank {rank} must be in 1..={}",
            m.min(n)
        )));
    }
    if let Some(index) = u.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(e) = first_negative(u) {
        return Err(e);
    }
    if g.n() != n {
        return Err(Error::DimMismatch(format!(
            "graph has {} nodes, U has {n} columns",
            g.n()
        )));
    }

    let mean = u.mean().unwrap_or(0.0);
    let scale = (mean.max(f64::MIN_POSITIVE) / rank as f64).sqrt();
    let floor = cfg.w_floor;
    let mut draw = |rows, cols| {
        // (floor, 1], scaled
        Array2::from_shape_simple_fn((rows, cols), || {
            (floor + (1.0 - floor) * (1.0 - rng.uniform())) * scale
        })
    };
    let mut v = draw(m, rank);
    let mut w = draw(rank, n);

    let cost = |v: &Array2<f64>, w: &Array2<f64>| {
        total_cost_with(u, v.view(), w.view(), g, cfg.eta, cfg.lambda, cfg.sparsity)
    };
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(cost(&v, &w)?);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        v = update_v(u, v.view(), w.view())?;
        w = update_w_with(u, v.view(), w.view(), g, cfg.eta, cfg.lambda, floor, cfg.sparsity)?;
        iterations += 1;
        let c = cost(&v, &w)?;
        if !c.is_finite() {
            return Err(Error::NonFinite { index: iterations });
        }
        trace.push(c);
        if iterations >= STALL_WINDOW {
            let past = trace[iterations - STALL_WINDOW];
            let change = (past - c).abs() / past.abs().max(f64::MIN_POSITIVE);
            if change < cfg.rel_tol {
                break;
            }
        }
    }
    Ok(Factorization {
        v,
        w,
        cost_trace: trace,
        iterations,
    })
}
