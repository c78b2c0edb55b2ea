//! Symmetry-reduced spectral discretizations of scalar fields.
//!
//! Coefficients are stored against an orthonormal basis of the full model
//! measure, so the forward transform is plain weighted quadrature and
//! integrals of products are coefficient dot products.

mod axis;
mod field;
pub mod quadrature;

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

pub use axis::{circle_wavenumber, Axis, AxisKind};
pub use field::{Field, PointwiseMap};

use crate::error::{Error, Result};
use crate::models::{sphere_volume, ModelKind, ModelManifold, Point};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symmetry {
    CircleOnly,
    ZonalOnly,
    CircleZonal2D,
    FullTorusFourier,
}

pub const MIN_MODES: usize = 8;

#[derive(Debug)]
pub struct Discretization {
    model: ModelManifold,
    symmetry: Symmetry,
    axes: Vec<Arc<Axis>>,
    /// Volume of the directions the fields do not depend on.
    passive_volume: f64,
    mode_shape: Vec<usize>,
    node_shape: Vec<usize>,
    /// Full quadrature weights, including the passive volume.
    weights: Vec<f64>,
    laplace_eigs: Vec<f64>,
}

pub fn build_discretization(
    model: &ModelManifold,
    symmetry: Symmetry,
    mode_count: usize,
) -> Result<Arc<Discretization>> {
    let axes = match (model.kind(), symmetry) {
        (ModelKind::FlatTorus, Symmetry::FullTorusFourier) => model.dim(),
        (ModelKind::CircleCrossSphere, Symmetry::CircleZonal2D) => 2,
        _ => 1,
    };
    build_discretization_with(model, symmetry, &vec![mode_count; axes])
}

/// Like [`build_discretization`] with a separate mode count per axis.
pub fn build_discretization_with(
    model: &ModelManifold,
    symmetry: Symmetry,
    modes: &[usize],
) -> Result<Arc<Discretization>> {
    if let Some(&m) = modes.iter().find(|&&m| m < MIN_MODES) {
        return Err(Error::InsufficientModes(m));
    }
    let n = model.dim();
    let incompatible = || Error::IncompatibleSymmetry {
        symmetry: format!("{symmetry:?}"),
        model: model.label(),
    };
    let want = |k: usize| -> Result<()> {
        if modes.len() == k {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{symmetry:?} needs {k} per-axis mode counts, got {}",
                modes.len()
            )))
        }
    };
    let (axes, passive_volume) = match (model.kind(), symmetry) {
        (ModelKind::RoundSphere, Symmetry::ZonalOnly) => {
            want(1)?;
            (vec![Axis::zonal(n, modes[0])], 1.0)
        }
        (ModelKind::CircleCrossSphere, Symmetry::ZonalOnly) => {
            want(1)?;
            (vec![Axis::zonal(n - 1, modes[0])], model.sizes()[0])
        }
        (ModelKind::CircleCrossSphere, Symmetry::CircleOnly) => {
            want(1)?;
            (
                vec![Axis::circle(model.sizes()[0], modes[0])],
                sphere_volume(n - 1),
            )
        }
        (ModelKind::CircleCrossSphere, Symmetry::CircleZonal2D) => {
            want(2)?;
            (
                vec![
                    Axis::circle(model.sizes()[0], modes[0]),
                    Axis::zonal(n - 1, modes[1]),
                ],
                1.0,
            )
        }
        (ModelKind::FlatTorus, Symmetry::FullTorusFourier) => {
            want(n)?;
            let axes = model
                .sizes()
                .iter()
                .zip(modes)
                .map(|(&l, &m)| Axis::circle(l, m))
                .collect();
            (axes, 1.0)
        }
        _ => return Err(incompatible()),
    };
    Ok(Arc::new(Discretization::from_axes(
        model.clone(),
        symmetry,
        axes,
        passive_volume,
    )))
}

impl Discretization {
    fn from_axes(
        model: ModelManifold,
        symmetry: Symmetry,
        axes: Vec<Axis>,
        passive_volume: f64,
    ) -> Self {
        let mode_shape: Vec<usize> = axes.iter().map(|a| a.modes()).collect();
        let node_shape: Vec<usize> = axes.iter().map(|a| a.node_count()).collect();
        let mut weights = vec![passive_volume];
        let mut laplace_eigs = vec![0.0];
        for a in &axes {
            weights = outer(&weights, a.weights(), |x, y| x * y);
            laplace_eigs = outer(&laplace_eigs, a.laplace_eigs(), |x, y| x + y);
        }
        Self {
            model,
            symmetry,
            axes: axes.into_iter().map(Arc::new).collect(),
            passive_volume,
            mode_shape,
            node_shape,
            weights,
            laplace_eigs,
        }
    }

    pub fn model(&self) -> &ModelManifold {
        &self.model
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Mode count of the first axis.
    pub fn mode_count(&self) -> usize {
        self.mode_shape[0]
    }

    pub fn axes(&self) -> &[Arc<Axis>] {
        &self.axes
    }

    pub fn passive_volume(&self) -> f64 {
        self.passive_volume
    }

    pub fn mode_shape(&self) -> &[usize] {
        &self.mode_shape
    }

    pub fn node_shape(&self) -> &[usize] {
        &self.node_shape
    }

    pub fn n_modes(&self) -> usize {
        self.mode_shape.iter().product()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_shape.iter().product()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Eigenvalue of -Laplacian for each tensor mode.
    pub fn laplace_eigs(&self) -> &[f64] {
        &self.laplace_eigs
    }

    pub fn same_as(&self, other: &Discretization) -> bool {
        std::ptr::eq(self, other)
            || (self.model == other.model
                && self.symmetry == other.symmetry
                && self.mode_shape == other.mode_shape)
    }

    /// Nodal values from coefficients.
    pub fn backward(&self, coeffs: &[f64]) -> Vec<f64> {
        self.synthesize(coeffs, |a| a.basis_t())
    }

    /// Coefficients from nodal values (exact for band-limited data).
    pub fn forward(&self, nodal: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> = nodal
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| f * w)
            .collect();
        let mut data = weighted;
        let mut shape = self.node_shape.clone();
        for (i, a) in self.axes.iter().enumerate() {
            data = contract(&data, &shape, i, a.basis());
            shape[i] = a.modes();
        }
        let s = 1.0 / self.passive_volume.sqrt();
        data.iter_mut().for_each(|c| *c *= s);
        data
    }

    /// Nodal values of a per-axis linear map applied to the coefficient tensor.
    pub fn synthesize<'a>(
        &'a self,
        coeffs: &[f64],
        op: impl Fn(&'a Axis) -> &'a DMatrix<f64>,
    ) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        let mut shape = self.mode_shape.clone();
        for (i, a) in self.axes.iter().enumerate() {
            data = contract(&data, &shape, i, op(a));
            shape[i] = a.node_count();
        }
        let s = 1.0 / self.passive_volume.sqrt();
        data.iter_mut().for_each(|c| *c *= s);
        data
    }

    /// Nodal derivative along one axis coordinate.
    pub fn axis_derivative(&self, coeffs: &[f64], axis: usize) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        let mut shape = self.mode_shape.clone();
        for (i, a) in self.axes.iter().enumerate() {
            let m = if i == axis { a.d1_t() } else { a.basis_t() };
            data = contract(&data, &shape, i, m);
            shape[i] = a.node_count();
        }
        let s = 1.0 / self.passive_volume.sqrt();
        data.iter_mut().for_each(|c| *c *= s);
        data
    }

    pub fn integrate_nodal(&self, nodal: &[f64]) -> f64 {
        compensated_sum(nodal.iter().zip(&self.weights).map(|(f, w)| f * w))
    }

    /// Axis coordinates of a node given its flat index.
    pub fn node_coords(&self, idx: usize, out: &mut [f64]) {
        let mut r = idx;
        for i in (0..self.axes.len()).rev() {
            let k = r % self.node_shape[i];
            r /= self.node_shape[i];
            out[i] = self.axes[i].nodes()[k];
        }
    }

    /// Nodal values of a function of the axis coordinates.
    pub fn nodal_from_fn<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let d = self.axes.len();
        par::map_range(self.n_nodes(), |idx| {
            let mut c = [0.0; 16];
            self.node_coords(idx, &mut c[..d]);
            f(&c[..d])
        })
    }

    /// Point of the model at the given axis coordinates (passive directions at
    /// their base value).
    pub fn point_at(&self, coords: &[f64]) -> Point {
        let n = self.model.dim();
        match (self.model.kind(), self.symmetry) {
            (ModelKind::RoundSphere, _) => Point::sphere_polar(n, coords[0]),
            (ModelKind::CircleCrossSphere, Symmetry::CircleOnly) => {
                Point::product_polar(n, coords[0], 0.0)
            }
            (ModelKind::CircleCrossSphere, Symmetry::ZonalOnly) => {
                Point::product_polar(n, 0.0, coords[0])
            }
            (ModelKind::CircleCrossSphere, _) => Point::product_polar(n, coords[0], coords[1]),
            (ModelKind::FlatTorus, _) => Point::Torus(coords.to_vec()),
        }
    }

    /// Every basis function evaluated at a point given by axis coordinates.
    pub fn eval_basis(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![1.0 / self.passive_volume.sqrt()];
        for (a, &c) in self.axes.iter().zip(coords) {
            out = outer(&out, &a.eval(c).0, |x, y| x * y);
        }
        out
    }

    /// Total volume from the quadrature weights.
    pub fn quadrature_volume(&self) -> f64 {
        compensated_sum(self.weights.iter().cloned())
    }
}

/// Neumaier summation; grids reach 10⁶ nodes.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if f64::abs(sum) >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn outer(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(f(x, y));
        }
    }
    out
}

/// Contract axis `axis` of a row-major tensor with `mt` (A x J):
/// out[.., j, ..] = sum_a data[.., a, ..] mt[a, j].
pub(crate) fn contract(data: &[f64], shape: &[usize], axis: usize, mt: &DMatrix<f64>) -> Vec<f64> {
    let a_len = shape[axis];
    assert_eq!(mt.nrows(), a_len);
    let j_len = mt.ncols();
    let inner: usize = shape[axis + 1..].iter().product();
    let outer_n: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; outer_n * j_len * inner];
    let block_in = a_len * inner;
    let block_out = j_len * inner;
    if outer_n >= 4 || inner == 1 {
        par::for_chunks_mut(&mut out, block_out, |off, chunk| {
            let o = off / block_out;
            // the row-major (A x inner) block is the column-major (inner x A) matrix X
            let x = DMatrixView::from_slice(&data[o * block_in..(o + 1) * block_in], inner, a_len);
            let mut res = DMatrix::zeros(inner, j_len);
            res.gemm(1.0, &x, mt, 0.0);
            chunk.copy_from_slice(res.as_slice());
        });
    } else {
        // few outer blocks: split each block's output by columns of mt
        let cols = 16usize;
        for o in 0..outer_n {
            let x = DMatrixView::from_slice(&data[o * block_in..(o + 1) * block_in], inner, a_len);
            let dst = &mut out[o * block_out..(o + 1) * block_out];
            par::for_chunks_mut(dst, cols * inner, |off, chunk| {
                let j0 = off / inner;
                let jn = chunk.len() / inner;
                let mut res = DMatrix::zeros(inner, jn);
                res.gemm(1.0, &x, &mt.columns(j0, jn), 0.0);
                chunk.copy_from_slice(res.as_slice());
            });
        }
    }
    out
}
