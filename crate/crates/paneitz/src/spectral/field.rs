//! Scalar fields stored as coefficients together with their nodal values.

use std::sync::Arc;

use super::Discretization;
use crate::error::{Error, Result};

/// Named nodal maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointwiseMap {
    Square,
    /// x^p; fails on negative x for non-integer p.
    Power(f64),
    /// sign(x)|x|^p.
    SignedPower(f64),
    Abs,
    Recip,
}

impl PointwiseMap {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            PointwiseMap::Square => x * x,
            PointwiseMap::Power(p) => x.powf(p),
            PointwiseMap::SignedPower(p) => x.signum() * x.abs().powf(p),
            PointwiseMap::Abs => x.abs(),
            PointwiseMap::Recip => 1.0 / x,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Field {
    disc: Arc<Discretization>,
    coeffs: Vec<f64>,
    nodal: Vec<f64>,
}

impl Field {
    pub fn from_coeffs(disc: &Arc<Discretization>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != disc.n_modes() {
            return Err(Error::DiscretizationMismatch);
        }
        check_finite(&coeffs, "coefficients")?;
        let nodal = disc.backward(&coeffs);
        Ok(Self {
            disc: disc.clone(),
            coeffs,
            nodal,
        })
    }

    /// Project nodal data onto the basis.
    pub fn from_nodal(disc: &Arc<Discretization>, nodal: &[f64]) -> Result<Self> {
        if nodal.len() != disc.n_nodes() {
            return Err(Error::DiscretizationMismatch);
        }
        check_finite(nodal, "nodal values")?;
        Self::from_coeffs(disc, disc.forward(nodal))
    }

    /// Projection of a function of the axis coordinates.
    pub fn from_fn<F>(disc: &Arc<Discretization>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        Self::from_nodal(disc, &disc.nodal_from_fn(f))
    }

    pub fn constant(disc: &Arc<Discretization>, c: f64) -> Self {
        let mut coeffs = vec![0.0; disc.n_modes()];
        coeffs[0] = c * disc.quadrature_volume().sqrt();
        let nodal = vec![c; disc.n_nodes()];
        Self {
            disc: disc.clone(),
            coeffs,
            nodal,
        }
    }

    pub fn zero(disc: &Arc<Discretization>) -> Self {
        Self::constant(disc, 0.0)
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.disc.same_as(&other.disc) {
            Ok(())
        } else {
            Err(Error::DiscretizationMismatch)
        }
    }

    pub fn integrate(&self) -> f64 {
        self.disc.integrate_nodal(&self.nodal)
    }

    /// L^2 inner product (coefficient dot product).
    pub fn inner(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn laplacian(&self) -> Field {
        let coeffs: Vec<f64> = self
            .coeffs
            .iter()
            .zip(self.disc.laplace_eigs())
            .map(|(c, e)| -e * c)
            .collect();
        Self::from_coeffs(&self.disc, coeffs).expect("laplacian of a finite field")
    }

    /// Map applied at the nodes, then re-expanded in the basis.
    pub fn pointwise(&self, map: PointwiseMap) -> Result<Field> {
        self.map_nodal(|x| map.apply(x))
    }

    pub fn map_nodal(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        let v: Vec<f64> = self.nodal.iter().map(|&x| f(x)).collect();
        Self::from_nodal(&self.disc, &v)
    }

    /// Nodal values of a map, without projection.
    pub fn nodal_map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodal.iter().map(|&x| f(x)).collect()
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let v: Vec<f64> = self
            .nodal
            .iter()
            .zip(&other.nodal)
            .map(|(a, b)| a * b)
            .collect();
        Self::from_nodal(&self.disc, &v)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// self + a * other
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x + a * y)
            .collect();
        let nodal = self
            .nodal
            .iter()
            .zip(&other.nodal)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(Self {
            disc: self.disc.clone(),
            coeffs,
            nodal,
        })
    }

    pub fn scale(&self, a: f64) -> Field {
        Self {
            disc: self.disc.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
            nodal: self.nodal.iter().map(|c| a * c).collect(),
        }
    }

    pub fn min_nodal(&self) -> f64 {
        self.nodal.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_nodal(&self) -> f64 {
        self.nodal.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.nodal.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Value at arbitrary axis coordinates.
    pub fn eval_at(&self, coords: &[f64]) -> f64 {
        let b = self.disc.eval_basis(coords);
        b.iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }

    /// Nodal derivative along one axis coordinate.
    pub fn derivative_nodal(&self, axis: usize) -> Vec<f64> {
        self.disc.axis_derivative(&self.coeffs, axis)
    }

    /// Nodal |grad f|^2; every axis coordinate has unit metric coefficient.
    pub fn grad_sq_nodal(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.nodal.len()];
        for axis in 0..self.disc.axes().len() {
            for (g, d) in g.iter_mut().zip(self.derivative_nodal(axis)) {
                *g += d * d;
            }
        }
        g
    }

    /// Relative mismatch between stored nodal values and the transform of the
    /// coefficients.
    pub fn consistency_error(&self) -> f64 {
        let back = self.disc.backward(&self.coeffs);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        back.iter()
            .zip(&self.nodal)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what}[{i}] = {}", v[i])));
    }
    Ok(())
}
