//! Green's functions of P, their positivity, and the expansion
//! G_p = c r^{4-n} + α + O(r) with the sign of the mass α.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::models::{circle_distance, geodesic_distance, sphere_volume, ModelKind, Point};
use crate::paneitz::PaneitzOperator;
use crate::par;
use crate::spectral::quadrature::gauss_legendre;
use crate::spectral::{AxisKind, Discretization, Field, Symmetry};

/// Leading coefficient 1/(2(n-2)(n-4)|S^{n-1}|) from Δ² r^{4-n} = 2(n-4)(n-2)|S^{n-1}| δ.
pub fn distributional_constant(n: usize) -> f64 {
    let nf = n as f64;
    1.0 / (2.0 * (nf - 2.0) * (nf - 4.0) * sphere_volume(n - 1))
}

/// The competing normalization 1/((n-2)(n-4)|S^{n-1}|), kept for reporting.
pub fn alternative_constant(n: usize) -> f64 {
    2.0 * distributional_constant(n)
}

/// c with ∫ c r^{4-n} Δ²φ dx = φ(0), read off from compactly supported radial
/// bumps φ = (1 - (r/a)²)^k by Gauss quadrature. Returns one value per bump.
pub fn bruteforce_constant(n: usize, bumps: &[(f64, u32)]) -> Vec<f64> {
    bumps
        .iter()
        .map(|&(a, k)| {
            // φ = Σ_j coef_j r^{2j}
            let mut coef = vec![0.0; k as usize + 1];
            let mut binom = 1.0;
            for (j, c) in coef.iter_mut().enumerate() {
                if j > 0 {
                    binom *= (k as f64 - j as f64 + 1.0) / j as f64;
                }
                *c = binom * (-1.0f64).powi(j as i32) / a.powi(2 * j as i32);
            }
            let lap = |c: &[f64]| -> Vec<f64> {
                // Δ r^{2j} = 2j(2j + n - 2) r^{2j-2}
                (1..c.len())
                    .map(|j| c[j] * (2 * j) as f64 * (2 * j + n - 2) as f64)
                    .collect()
            };
            let bil = lap(&lap(&coef));
            let (x, w) = gauss_legendre(k as usize + 4, 0.0, a);
            // ∫ r^{4-n} Δ²φ |S^{n-1}| r^{n-1} dr
            let integral: f64 = x
                .iter()
                .zip(&w)
                .map(|(&r, &w)| {
                    let v: f64 = bil
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * r.powi(2 * j as i32))
                        .sum();
                    w * r.powi(3) * v
                })
                .sum::<f64>()
                * sphere_volume(n - 1);
            1.0 / integral
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeltaFilter {
    /// Coefficients are the basis values at the pole.
    Sharp,
    /// Multiplied by exp(-36 (λ/Λ)^4), λ the Laplace eigenvalue, Λ the largest
    /// value resolved isotropically.
    Smooth,
}

/// Axis coordinates of a pole lying on the symmetry axis of the discretization.
pub fn pole_coords(disc: &Discretization, pole: &Point) -> Result<Vec<f64>> {
    let off_axis =
        || Error::Precondition(format!("pole {} is off the symmetry axis", pole.label()));
    let on_axis = |theta: f64| theta < 1e-12 || (PI - theta) < 1e-12;
    match (disc.model().kind(), disc.symmetry(), pole) {
        (ModelKind::RoundSphere, Symmetry::ZonalOnly, Point::Sphere(_)) => {
            let th = pole.polar_angle().unwrap_or(0.0);
            if on_axis(th) {
                Ok(vec![if th < 1.0 { 0.0 } else { PI }])
            } else {
                Err(off_axis())
            }
        }
        (ModelKind::CircleCrossSphere, Symmetry::CircleZonal2D, Point::Product { s, .. }) => {
            let th = pole.polar_angle().unwrap_or(0.0);
            if on_axis(th) {
                let l = disc.model().sizes()[0];
                Ok(vec![s.rem_euclid(l), if th < 1.0 { 0.0 } else { PI }])
            } else {
                Err(off_axis())
            }
        }
        (ModelKind::FlatTorus, Symmetry::FullTorusFourier, Point::Torus(x)) => Ok(x.clone()),
        _ => Err(Error::Precondition(format!(
            "{:?} fields on {} cannot carry a point source at {}",
            disc.symmetry(),
            disc.model().label(),
            pole.label()
        ))),
    }
}

/// Band-limited delta: pairs with any band-limited f to give f(pole).
pub fn delta(
    disc: &std::sync::Arc<Discretization>,
    pole: &Point,
    filter: DeltaFilter,
) -> Result<Field> {
    let coords = pole_coords(disc, pole)?;
    let mut c = disc.eval_basis(&coords);
    if filter == DeltaFilter::Smooth {
        let lam_max = disc
            .axes()
            .iter()
            .map(|a| a.laplace_eigs().iter().cloned().fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        for (c, l) in c.iter_mut().zip(disc.laplace_eigs()) {
            *c *= (-36.0 * (l / lam_max).powi(4)).exp();
        }
    }
    Field::from_coeffs(disc, c)
}

/// G_p = P⁻¹ δ̂_p.
pub fn greens_function(p: &PaneitzOperator, pole: &Point) -> Result<Field> {
    greens_function_with(p, pole, DeltaFilter::Sharp)
}

pub fn greens_function_with(
    p: &PaneitzOperator,
    pole: &Point,
    filter: DeltaFilter,
) -> Result<Field> {
    p.solve(&delta(p.disc(), pole, filter)?)
}

/// Largest node spacing over the axes.
pub fn grid_length(disc: &Discretization) -> f64 {
    disc.axes()
        .iter()
        .map(|a| match a.kind() {
            AxisKind::Circle { length } => length / a.node_count() as f64,
            AxisKind::Zonal { .. } => PI / a.node_count() as f64,
        })
        .fold(0.0, f64::max)
}

/// Geodesic distance from each node to the pole.
pub fn node_distances(disc: &Discretization, pole: &Point) -> Vec<f64> {
    let model = disc.model();
    match (model.kind(), disc.symmetry()) {
        (ModelKind::CircleCrossSphere, Symmetry::CircleZonal2D) => {
            let coords = pole_coords(disc, pole).unwrap_or_else(|_| vec![0.0, 0.0]);
            let l = model.sizes()[0];
            disc.nodal_from_fn(|c| {
                circle_distance(c[0], coords[0], l).hypot((c[1] - coords[1]).abs())
            })
        }
        _ => disc.nodal_from_fn(|c| geodesic_distance(model, &disc.point_at(c), pole)),
    }
}

/// Minimum of G over nodes farther than `radius` from the pole.
pub fn min_beyond(g: &Field, pole: &Point, radius: f64) -> f64 {
    let r = node_distances(g.disc(), pole);
    g.nodal()
        .iter()
        .zip(&r)
        .filter(|(_, r)| **r > radius)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreenExpansion {
    pub pole: Point,
    pub leading_coeff: f64,
    pub alpha: f64,
    pub linear_coeff: f64,
    pub fit_window: (f64, f64),
    /// Weighted RMS misfit relative to c r_min^{4-n}.
    pub fit_residual: f64,
    pub samples: usize,
    pub reliable: bool,
}

pub const FIT_TOLERANCE: f64 = 1e-3;
const CONDITION_CAP: f64 = 1e10;

/// Weighted least squares of values against {r^{4-n}, 1, r}. Returns
/// (coefficients, relative residual).
pub fn fit_samples(
    n: usize,
    r: &[f64],
    values: &[f64],
    weights: &[f64],
) -> Result<([f64; 3], f64)> {
    if r.len() < 8 {
        return Err(Error::Fit(format!(
            "{} samples in window, need at least 8",
            r.len()
        )));
    }
    let e = 4.0 - n as f64;
    let rows = r.len();
    let mut a = DMatrix::zeros(rows, 3);
    let mut b = DVector::zeros(rows);
    for i in 0..rows {
        let sw = weights[i].sqrt();
        a[(i, 0)] = sw * r[i].powf(e);
        a[(i, 1)] = sw;
        a[(i, 2)] = sw * r[i];
        b[i] = sw * values[i];
    }
    // column equilibration before the condition check
    let scales: Vec<f64> = (0..3)
        .map(|j| a.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > CONDITION_CAP {
        return Err(Error::Fit(format!(
            "design condition {:.3e} exceeds cap",
            smax / smin
        )));
    }
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let coef = [x[0] / scales[0], x[1] / scales[1], x[2] / scales[2]];
    let res = &b - &a * &x;
    let wsum: f64 = weights.iter().sum();
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let lead = (coef[0] * rmin.powf(e)).abs().max(f64::MIN_POSITIVE);
    Ok((coef, (res.norm_squared() / wsum).sqrt() / lead))
}

/// Fit the expansion over nodes with r in the window, weighted by quadrature.
pub fn fit_expansion(g: &Field, pole: &Point, window: (f64, f64)) -> Result<GreenExpansion> {
    let disc = g.disc();
    let h = grid_length(disc);
    let (r_min, r_max) = window;
    if r_min < 2.0 * h || r_max > disc.model().injectivity_radius() / 4.0 + 1e-12 || r_min >= r_max
    {
        return Err(Error::Fit(format!(
            "window [{r_min}, {r_max}] not resolvable: grid length {h:.4}, injectivity radius {:.4}",
            disc.model().injectivity_radius()
        )));
    }
    let dist = node_distances(disc, pole);
    let mut rs = Vec::new();
    let mut vs = Vec::new();
    let mut ws = Vec::new();
    for ((r, v), w) in dist.iter().zip(g.nodal()).zip(disc.weights()) {
        if *r >= r_min && *r <= r_max {
            rs.push(*r);
            vs.push(*v);
            ws.push(*w);
        }
    }
    let (coef, fit_residual) = fit_samples(disc.model().dim(), &rs, &vs, &ws)?;
    Ok(GreenExpansion {
        pole: pole.clone(),
        leading_coeff: coef[0],
        alpha: coef[1],
        linear_coeff: coef[2],
        fit_window: window,
        fit_residual,
        samples: rs.len(),
        reliable: fit_residual <= FIT_TOLERANCE,
    })
}

/// Expansion at each pole, using the smoothed source.
pub fn mass_scan(
    p: &PaneitzOperator,
    poles: &[Point],
    window: (f64, f64),
) -> Result<Vec<GreenExpansion>> {
    par::map(poles, |pole| {
        let g = greens_function_with(p, pole, DeltaFilter::Smooth)?;
        fit_expansion(&g, pole, window)
    })
    .into_iter()
    .collect()
}

/// Mass-free Green's function of Δ² on the 5-torus of side 2π (mean zero),
/// by Ewald splitting at heat time `t0`.
pub fn torus5_green(x: &[f64], t0: f64) -> f64 {
    assert_eq!(x.len(), 5);
    let two_pi = 2.0 * PI;
    let y: Vec<f64> = x
        .iter()
        .map(|v| v - two_pi * (v / two_pi).round())
        .collect();
    let real_range = 2i64;
    let mut real = 0.0;
    let mut idx = [0i64; 5];
    let span = (2 * real_range + 1) as usize;
    for flat in 0..span.pow(5) {
        let mut r = flat;
        for d in idx.iter_mut() {
            *d = (r % span) as i64 - real_range;
            r /= span;
        }
        let rho = (0..5)
            .map(|i| (y[i] - two_pi * idx[i] as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        if rho > 0.0 {
            real += 2.0 * PI.sqrt() / rho * erfc(rho / (2.0 * t0.sqrt()));
        }
    }
    real *= PI.powf(2.5);
    let k_range = ((30.0 / t0).sqrt().ceil()) as i64;
    let kspan = (2 * k_range + 1) as usize;
    let mut recip = 0.0;
    for flat in 0..kspan.pow(5) {
        let mut r = flat;
        let mut k2 = 0i64;
        let mut dot = 0.0;
        for yi in &y {
            let k = (r % kspan) as i64 - k_range;
            r /= kspan;
            k2 += k * k;
            dot += k as f64 * yi;
        }
        if k2 == 0 {
            continue;
        }
        let k2 = k2 as f64;
        recip += dot.cos() * (-t0 * k2).exp() * (t0 * k2 + 1.0) / (k2 * k2);
    }
    (real - t0 * t0 / 2.0 + recip) / two_pi.powi(5)
}

/// Fit of the torus Green's function sampled along fixed directions.
pub fn torus5_fit(window: (f64, f64), radii: usize) -> Result<GreenExpansion> {
    let dirs: [[f64; 5]; 4] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, 1.0, 0.5, 0.0],
        [0.3, 0.2, -0.7, 0.1, 0.9],
    ];
    let (rx, rw) = gauss_legendre(radii, window.0, window.1);
    let samples: Vec<(f64, f64, f64)> = par::map_range(dirs.len() * radii, |i| {
        let d = &dirs[i / radii];
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = rx[i % radii];
        let x: Vec<f64> = d.iter().map(|v| v / norm * r).collect();
        (r, torus5_green(&x, 0.5), rw[i % radii] * r.powi(4))
    });
    let r: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let (coef, fit_residual) = fit_samples(5, &r, &v, &w)?;
    Ok(GreenExpansion {
        pole: Point::Torus(vec![0.0; 5]),
        leading_coeff: coef[0],
        alpha: coef[1],
        linear_coeff: coef[2],
        fit_window: window,
        fit_residual,
        samples: r.len(),
        reliable: fit_residual <= FIT_TOLERANCE,
    })
}

/// Exact mass ratio α/c on S¹(L)×S⁴ from the image sum: Σ_{m≥1} 1/sinh(mL/2).
pub fn product5_mass_ratio(circle_length: f64) -> f64 {
    (1..200)
        .map(|m| 1.0 / (m as f64 * circle_length / 2.0).sinh())
        .take_while(|v| v.is_finite() && *v > 0.0)
        .sum()
}
