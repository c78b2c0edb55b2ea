//! One-dimensional bases: Fourier modes on a circle and zonal harmonics on a
//! unit sphere, each with an oversampled Gauss-type node set.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::quadrature::{gauss_gegenbauer, Gegenbauer};
use crate::models::sphere_volume;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisKind {
    /// Circle of the given length, coordinate s in [0, length).
    Circle { length: f64 },
    /// Polar angle on the unit sphere S^m, coordinate theta in [0, pi].
    Zonal { sphere_dim: usize },
}

#[derive(Clone, Debug)]
pub struct Axis {
    kind: AxisKind,
    modes: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Basis values, first derivative and Laplacian at the nodes (nodes x modes),
    /// with their transposes kept for contractions.
    basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
    d1: DMatrix<f64>,
    d1_t: DMatrix<f64>,
    lap: DMatrix<f64>,
    lap_t: DMatrix<f64>,
    /// Eigenvalue of -Laplacian for each mode.
    laplace_eigs: Vec<f64>,
    poly: Option<Gegenbauer>,
}

impl Axis {
    pub fn circle(length: f64, modes: usize) -> Self {
        let q = 2 * modes;
        let h = length / q as f64;
        let nodes: Vec<f64> = (0..q).map(|i| i as f64 * h).collect();
        let weights = vec![h; q];
        let mut basis = DMatrix::zeros(q, modes);
        let mut d1 = DMatrix::zeros(q, modes);
        let mut lap = DMatrix::zeros(q, modes);
        let mut laplace_eigs = vec![0.0; modes];
        for (i, &s) in nodes.iter().enumerate() {
            let (v, d) = circle_values(length, modes, s);
            for j in 0..modes {
                basis[(i, j)] = v[j];
                d1[(i, j)] = d[j];
            }
        }
        for (j, eig) in laplace_eigs.iter_mut().enumerate() {
            let w = 2.0 * PI * circle_wavenumber(j) as f64 / length;
            *eig = w * w;
            for i in 0..q {
                lap[(i, j)] = -w * w * basis[(i, j)];
            }
        }
        let basis_t = basis.transpose();
        Self {
            kind: AxisKind::Circle { length },
            modes,
            nodes,
            weights,
            basis,
            basis_t,
            d1_t: d1.transpose(),
            d1,
            lap_t: lap.transpose(),
            lap,
            laplace_eigs,
            poly: None,
        }
    }

    /// Zonal harmonics Y_k(theta) on S^m, orthonormal for the full sphere measure.
    pub fn zonal(sphere_dim: usize, modes: usize) -> Self {
        let m = sphere_dim as f64;
        let lambda = (m - 1.0) / 2.0;
        let q = 2 * modes;
        let rule = gauss_gegenbauer(lambda, q);
        let poly = Gegenbauer::new(lambda, modes + 1);
        let side = sphere_volume(sphere_dim - 1);
        let norm = 1.0 / side.sqrt();
        // nodes ascending in theta, so descending in x = cos(theta)
        let nodes: Vec<f64> = rule
            .0
            .iter()
            .rev()
            .map(|x| x.clamp(-1.0, 1.0).acos())
            .collect();
        let weights: Vec<f64> = rule.1.iter().rev().map(|w| w * side).collect();
        let mut basis = DMatrix::zeros(q, modes);
        let mut d1 = DMatrix::zeros(q, modes);
        let mut lap = DMatrix::zeros(q, modes);
        let (mut p, mut dp, mut d2) = (vec![0.0; modes], vec![0.0; modes], vec![0.0; modes]);
        for (i, &xr) in rule.0.iter().rev().enumerate() {
            poly.eval(xr, modes, &mut p, &mut dp, &mut d2);
            let sin = (1.0 - xr * xr).max(0.0).sqrt();
            for j in 0..modes {
                basis[(i, j)] = norm * p[j];
                d1[(i, j)] = -norm * sin * dp[j];
                lap[(i, j)] = norm * ((1.0 - xr * xr) * d2[j] - m * xr * dp[j]);
            }
        }
        let laplace_eigs = (0..modes)
            .map(|k| (k * (k + sphere_dim - 1)) as f64)
            .collect();
        let basis_t = basis.transpose();
        Self {
            kind: AxisKind::Zonal { sphere_dim },
            modes,
            nodes,
            weights,
            basis,
            basis_t,
            d1_t: d1.transpose(),
            d1,
            lap_t: lap.transpose(),
            lap,
            laplace_eigs,
            poly: Some(poly),
        }
    }

    pub fn kind(&self) -> AxisKind {
        self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_t(&self) -> &DMatrix<f64> {
        &self.basis_t
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn lap(&self) -> &DMatrix<f64> {
        &self.lap
    }

    pub fn d1_t(&self) -> &DMatrix<f64> {
        &self.d1_t
    }

    pub fn lap_t(&self) -> &DMatrix<f64> {
        &self.lap_t
    }

    pub fn laplace_eigs(&self) -> &[f64] {
        &self.laplace_eigs
    }

    /// Total measure of the axis (circle length or sphere volume).
    pub fn measure(&self) -> f64 {
        match self.kind {
            AxisKind::Circle { length } => length,
            AxisKind::Zonal { sphere_dim } => sphere_volume(sphere_dim),
        }
    }

    /// Basis values and coordinate derivatives at an arbitrary coordinate.
    pub fn eval(&self, coord: f64) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            AxisKind::Circle { length } => circle_values(length, self.modes, coord),
            AxisKind::Zonal { sphere_dim } => {
                let poly = self
                    .poly
                    .as_ref()
                    .expect("zonal axis carries its polynomials");
                let norm = 1.0 / sphere_volume(sphere_dim - 1).sqrt();
                let n = self.modes;
                let (mut p, mut dp, mut d2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                let x = coord.cos();
                poly.eval(x, n, &mut p, &mut dp, &mut d2);
                let sin = coord.sin();
                let v = p.iter().map(|v| v * norm).collect();
                let d = dp.iter().map(|v| -sin * v * norm).collect();
                (v, d)
            }
        }
    }
}

/// Wavenumber of circle mode j in the ordering const, cos 1, sin 1, cos 2, ...
pub fn circle_wavenumber(j: usize) -> usize {
    j.div_ceil(2)
}

fn circle_values(length: f64, modes: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; modes];
    let mut d = vec![0.0; modes];
    let c0 = 1.0 / length.sqrt();
    let c = (2.0 / length).sqrt();
    v[0] = c0;
    for j in 1..modes {
        let k = circle_wavenumber(j) as f64;
        let w = 2.0 * PI * k / length;
        let (sn, cs) = (w * s).sin_cos();
        if j % 2 == 1 {
            v[j] = c * cs;
            d[j] = -c * w * sn;
        } else {
            v[j] = c * sn;
            d[j] = c * w * cs;
        }
    }
    (v, d)
}
