//! Model manifolds with exactly known curvature: the round sphere, flat tori
//! and the product of a circle with a unit sphere.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    RoundSphere,
    FlatTorus,
    CircleCrossSphere,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelManifold {
    kind: ModelKind,
    dim: usize,
    /// Torus side lengths, or the single circle length of the product.
    sizes: Vec<f64>,
}

impl ModelManifold {
    /// Unit round sphere S^n.
    pub fn sphere(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(Self {
            kind: ModelKind::RoundSphere,
            dim: n,
            sizes: Vec::new(),
        })
    }

    pub fn torus(n: usize, sides: Vec<f64>) -> Result<Self> {
        check_dim(n)?;
        if sides.len() != n || sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::UnsupportedModel(format!(
                "torus of dimension {n} needs {n} positive side lengths"
            )));
        }
        Ok(Self {
            kind: ModelKind::FlatTorus,
            dim: n,
            sizes: sides,
        })
    }

    pub fn cubic_torus(n: usize, side: f64) -> Result<Self> {
        Self::torus(n, vec![side; n])
    }

    /// S^1(L) x S^{n-1} with unit sphere factor.
    pub fn product(n: usize, circle_length: f64) -> Result<Self> {
        check_dim(n)?;
        if !(circle_length > 0.0 && circle_length.is_finite()) {
            return Err(Error::UnsupportedModel(format!(
                "circle length {circle_length}"
            )));
        }
        Ok(Self {
            kind: ModelKind::CircleCrossSphere,
            dim: n,
            sizes: vec![circle_length],
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn circle_length(&self) -> Option<f64> {
        match self.kind {
            ModelKind::CircleCrossSphere => Some(self.sizes[0]),
            _ => None,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            ModelKind::RoundSphere => sphere_volume(self.dim),
            ModelKind::FlatTorus => self.sizes.iter().product(),
            ModelKind::CircleCrossSphere => self.sizes[0] * sphere_volume(self.dim - 1),
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ModelKind::RoundSphere => PI,
            ModelKind::FlatTorus => self.sizes.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
            ModelKind::CircleCrossSphere => (self.sizes[0] / 2.0).min(PI),
        }
    }

    pub fn label(&self) -> String {
        let n = self.dim;
        match self.kind {
            ModelKind::RoundSphere => format!("S^{n}"),
            ModelKind::FlatTorus => format!("T^{n}"),
            ModelKind::CircleCrossSphere => format!("S^1({})xS^{}", self.sizes[0], n - 1),
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 5 {
        return Err(Error::UnsupportedModel(format!("dimension {n} < 5")));
    }
    Ok(())
}

/// Volume of the unit sphere S^m in R^{m+1}.
pub fn sphere_volume(m: usize) -> f64 {
    let a = (m as f64 + 1.0) / 2.0;
    2.0 * (a * PI.ln() - ln_gamma(a)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureBundle {
    pub schouten_eigenvalues: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub scalar: f64,
    pub q_curv: f64,
    pub ricci_eigenvalues: Vec<f64>,
}

pub fn curvature_data(model: &ModelManifold) -> Result<CurvatureBundle> {
    let n = model.dim;
    let nf = n as f64;
    let ricci: Vec<f64> = match model.kind {
        ModelKind::RoundSphere => vec![nf - 1.0; n],
        ModelKind::FlatTorus => vec![0.0; n],
        ModelKind::CircleCrossSphere => {
            let mut r = vec![nf - 2.0; n];
            r[0] = 0.0;
            r
        }
    };
    let scalar: f64 = ricci.iter().sum();
    let schouten: Vec<f64> = ricci
        .iter()
        .map(|&r| (r - scalar / (2.0 * (nf - 1.0))) / (nf - 2.0))
        .collect();
    let sigma1: f64 = schouten.iter().sum();
    let sq: f64 = schouten.iter().map(|a| a * a).sum();
    let sigma2 = (sigma1 * sigma1 - sq) / 2.0;
    // homogeneous metric: the Laplacian of sigma1 drops out
    let q_curv = 4.0 * sigma2 + (nf - 4.0) / 2.0 * sigma1 * sigma1;
    Ok(CurvatureBundle {
        schouten_eigenvalues: schouten,
        sigma1,
        sigma2,
        scalar,
        q_curv,
        ricci_eigenvalues: ricci,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub explanation: String,
}

pub fn is_positivity_admissible(model: &ModelManifold) -> Admissibility {
    let c = match curvature_data(model) {
        Ok(c) => c,
        Err(e) => {
            return Admissibility {
                admissible: false,
                explanation: e.to_string(),
            }
        }
    };
    // Q and R are constant on every model, so semi-positivity means Q > 0
    if c.q_curv.abs() < 1e-14 {
        return Admissibility {
            admissible: false,
            explanation: "Q ≡ 0 is not semi-positive".into(),
        };
    }
    if c.q_curv < 0.0 {
        return Admissibility {
            admissible: false,
            explanation: format!("Q = {} < 0 is not semi-positive", c.q_curv),
        };
    }
    if c.scalar < 0.0 {
        return Admissibility {
            admissible: false,
            explanation: format!("R = {} < 0", c.scalar),
        };
    }
    Admissibility {
        admissible: true,
        explanation: format!("Q = {} > 0 and R = {} ≥ 0", c.q_curv, c.scalar),
    }
}

/// A point on a model manifold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Point {
    /// Unit vector in R^{n+1}.
    Sphere(Vec<f64>),
    /// Circle coordinate s and a unit vector in R^n for the sphere factor.
    Product { s: f64, omega: Vec<f64> },
    /// Coordinates in [0, side_i).
    Torus(Vec<f64>),
}

impl Point {
    /// Point of S^n at polar angle `theta` from the north pole e_0.
    pub fn sphere_polar(n: usize, theta: f64) -> Self {
        Point::Sphere(polar_vector(n + 1, theta))
    }

    pub fn product_polar(n: usize, s: f64, theta: f64) -> Self {
        Point::Product {
            s,
            omega: polar_vector(n, theta),
        }
    }

    /// The base point used for poles and bubble centers on each model.
    pub fn base(model: &ModelManifold) -> Self {
        let n = model.dim();
        match model.kind() {
            ModelKind::RoundSphere => Point::sphere_polar(n, 0.0),
            ModelKind::CircleCrossSphere => Point::product_polar(n, 0.0, 0.0),
            ModelKind::FlatTorus => Point::Torus(vec![0.0; n]),
        }
    }

    /// Polar angle from the north pole of the sphere (factor).
    pub fn polar_angle(&self) -> Option<f64> {
        let v = match self {
            Point::Sphere(v) => v,
            Point::Product { omega, .. } => omega,
            Point::Torus(_) => return None,
        };
        let sin: f64 = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(sin.atan2(v[0]))
    }

    pub fn label(&self) -> String {
        match self {
            Point::Sphere(_) => format!("theta={}", self.polar_angle().unwrap_or(0.0)),
            Point::Product { s, .. } => {
                format!("s={};theta={}", s, self.polar_angle().unwrap_or(0.0))
            }
            Point::Torus(x) => {
                let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                format!("x=({})", parts.join(","))
            }
        }
    }
}

fn polar_vector(len: usize, theta: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[0] = theta.cos();
    v[1] = theta.sin();
    v
}

/// Angle between unit vectors, accurate near 0 and pi.
fn sphere_angle(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y) * (x + y))
        .sum::<f64>()
        .sqrt();
    2.0 * d.atan2(s)
}

/// Distance on a circle of the given length.
pub fn circle_distance(a: f64, b: f64, length: f64) -> f64 {
    let d = (a - b).rem_euclid(length);
    d.min(length - d)
}

pub fn geodesic_distance(model: &ModelManifold, p: &Point, x: &Point) -> f64 {
    match (model.kind(), p, x) {
        (ModelKind::RoundSphere, Point::Sphere(a), Point::Sphere(b)) => sphere_angle(a, b),
        (
            ModelKind::CircleCrossSphere,
            Point::Product { s: s1, omega: w1 },
            Point::Product { s: s2, omega: w2 },
        ) => {
            let ds = circle_distance(*s1, *s2, model.sizes[0]);
            let dt = sphere_angle(w1, w2);
            ds.hypot(dt)
        }
        (ModelKind::FlatTorus, Point::Torus(a), Point::Torus(b)) => a
            .iter()
            .zip(b)
            .zip(&model.sizes)
            .map(|((u, v), l)| {
                let d = circle_distance(*u, *v, *l);
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        _ => panic!("point does not lie on {}", model.label()),
    }
}
