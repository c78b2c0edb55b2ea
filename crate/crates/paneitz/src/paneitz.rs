//! The Paneitz operator P = Δ² + div((4A - (n-2)σ₁ g)∇·) + ((n-4)/2)Q on the
//! symmetry-reduced spaces, assembled from its weak form by quadrature, and its
//! conformal transforms.

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::models::{curvature_data, ModelKind};
use crate::spectral::{AxisKind, Discretization, Field};

/// Coefficients of the weak form ∫ΔφΔψ - Σ t_axis ∫∂φ∂ψ + c0 ∫φψ.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakCoefficients {
    pub axis_tensor: Vec<f64>,
    pub c0: f64,
}

pub fn weak_coefficients(disc: &Discretization) -> Result<WeakCoefficients> {
    let model = disc.model();
    let n = model.dim() as f64;
    let c = curvature_data(model)?;
    let t = |a: f64| 4.0 * a - (n - 2.0) * c.sigma1;
    let axis_tensor = disc
        .axes()
        .iter()
        .map(|ax| match (model.kind(), ax.kind()) {
            (ModelKind::FlatTorus, _) => 0.0,
            (ModelKind::RoundSphere, _) => t(c.schouten_eigenvalues[0]),
            (ModelKind::CircleCrossSphere, AxisKind::Circle { .. }) => t(c.schouten_eigenvalues[0]),
            (ModelKind::CircleCrossSphere, AxisKind::Zonal { .. }) => t(c.schouten_eigenvalues[1]),
        })
        .collect();
    Ok(WeakCoefficients {
        axis_tensor,
        c0: (n - 4.0) / 2.0 * c.q_curv,
    })
}

#[derive(Debug)]
enum Stored {
    Dense {
        matrix: DMatrix<f64>,
        chol: Option<Cholesky<f64, Dyn>>,
    },
    Diagonal(Vec<f64>),
}

#[derive(Debug)]
enum Background {
    Model {
        stored: Stored,
        symmetry_defect: f64,
        offdiag_defect: f64,
    },
    Conformal {
        base: PaneitzOperator,
        u: Field,
        u_p: Vec<f64>,
        density: Vec<f64>,
    },
}

#[derive(Debug)]
struct Inner {
    disc: Arc<Discretization>,
    background: Background,
    min_eig: OnceLock<f64>,
}

/// Discrete Paneitz operator; cheap to clone.
#[derive(Clone, Debug)]
pub struct PaneitzOperator {
    inner: Arc<Inner>,
}

/// Exponent (n+4)/(n-4).
pub fn critical_exponent(n: usize) -> f64 {
    (n as f64 + 4.0) / (n as f64 - 4.0)
}

pub fn assemble(disc: &Arc<Discretization>) -> Result<PaneitzOperator> {
    let wc = weak_coefficients(disc)?;
    let axes = disc.axes();
    let background = if axes.len() == 1 {
        let ax = &axes[0];
        let w = DVector::from_column_slice(ax.weights());
        let weighted = |m: &DMatrix<f64>| {
            let mut x = m.clone();
            for (i, mut row) in x.row_iter_mut().enumerate() {
                row *= w[i];
            }
            x
        };
        let (b, d1, lap) = (ax.basis(), ax.d1(), ax.lap());
        let mut m = lap.transpose() * weighted(lap);
        m -= (d1.transpose() * weighted(d1)) * wc.axis_tensor[0];
        m += (b.transpose() * weighted(b)) * wc.c0;
        let norm = m.norm().max(f64::MIN_POSITIVE);
        let symmetry_defect = (&m - m.transpose()).norm() / norm;
        let sym = (&m + m.transpose()) * 0.5;
        let offdiag_defect = {
            let mut o = sym.clone();
            o.fill_diagonal(0.0);
            o.norm() / norm
        };
        let chol = Cholesky::new(sym.clone());
        Background::Model {
            stored: Stored::Dense { matrix: sym, chol },
            symmetry_defect,
            offdiag_defect,
        }
    } else {
        // tensor bases: every per-axis Gram matrix is diagonal, so the operator is
        let mut diag = vec![0.0];
        let mut defect: f64 = 0.0;
        let grams: Vec<[Vec<f64>; 4]> = axes
            .iter()
            .map(|ax| {
                let w = ax.weights();
                let gram = |a: &DMatrix<f64>, b: &DMatrix<f64>, defect: &mut f64| {
                    let mut wa = a.clone();
                    for (i, mut row) in wa.row_iter_mut().enumerate() {
                        row *= w[i];
                    }
                    let g = b.transpose() * wa;
                    let d: Vec<f64> = g.diagonal().iter().cloned().collect();
                    let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                    let mut off = g;
                    off.fill_diagonal(0.0);
                    *defect = defect.max(off.amax() / scale);
                    d
                };
                let mut local = 0.0;
                let g0 = gram(ax.basis(), ax.basis(), &mut local);
                let g1 = gram(ax.d1(), ax.d1(), &mut local);
                let g2 = gram(ax.lap(), ax.lap(), &mut local);
                let gl = gram(ax.lap(), ax.basis(), &mut local);
                defect = defect.max(local);
                [g0, g1, g2, gl]
            })
            .collect();
        // accumulate [mass, Σ t·stiff, bilaplacian, laplacian] over axes
        let mut acc: Vec<[f64; 4]> = vec![[1.0, 0.0, 0.0, 0.0]];
        for (ax, g) in grams.iter().enumerate() {
            let t = wc.axis_tensor[ax];
            let mut next = Vec::with_capacity(acc.len() * g[0].len());
            for a in &acc {
                for k in 0..g[0].len() {
                    let (m0, m1, m2, ml) = (g[0][k], g[1][k], g[2][k], g[3][k]);
                    next.push([
                        a[0] * m0,
                        a[1] * m0 + t * a[0] * m1,
                        a[2] * m0 + 2.0 * a[3] * ml + a[0] * m2,
                        a[3] * m0 + a[0] * ml,
                    ]);
                }
            }
            acc = next;
        }
        diag.clear();
        diag.extend(acc.iter().map(|a| a[2] - a[1] + wc.c0 * a[0]));
        Background::Model {
            stored: Stored::Diagonal(diag),
            symmetry_defect: 0.0,
            offdiag_defect: defect,
        }
    };
    Ok(PaneitzOperator {
        inner: Arc::new(Inner {
            disc: disc.clone(),
            background,
            min_eig: OnceLock::new(),
        }),
    })
}

/// Operator of ĝ = u^{4/(n-4)} g, acting as P̂φ = u^{-(n+4)/(n-4)} P(uφ).
pub fn conformal_operator(base: &PaneitzOperator, u: &Field) -> Result<PaneitzOperator> {
    base.check(u)?;
    let min = u.min_nodal();
    if !(min > 0.0) {
        return Err(Error::NonPositiveFactor(min));
    }
    let p = critical_exponent(base.disc().model().dim());
    let u_p: Vec<f64> = u.nodal_map(|x| x.powf(p));
    let base_density = base.density();
    let density = u_p
        .iter()
        .zip(u.nodal())
        .zip(&base_density)
        .map(|((a, b), d)| a * b * d)
        .collect();
    Ok(PaneitzOperator {
        inner: Arc::new(Inner {
            disc: base.disc().clone(),
            background: Background::Conformal {
                base: base.clone(),
                u: u.clone(),
                u_p,
                density,
            },
            min_eig: OnceLock::new(),
        }),
    })
}

impl PaneitzOperator {
    pub fn disc(&self) -> &Arc<Discretization> {
        &self.inner.disc
    }

    pub fn is_conformal(&self) -> bool {
        matches!(self.inner.background, Background::Conformal { .. })
    }

    fn check(&self, f: &Field) -> Result<()> {
        if self.disc().same_as(f.disc()) {
            Ok(())
        } else {
            Err(Error::DiscretizationMismatch)
        }
    }

    /// Nodal volume density relative to the model metric.
    pub fn density(&self) -> Vec<f64> {
        match &self.inner.background {
            Background::Model { .. } => vec![1.0; self.disc().n_nodes()],
            Background::Conformal { density, .. } => density.clone(),
        }
    }

    /// ∫ f dv for this operator's metric.
    pub fn integrate_nodal(&self, nodal: &[f64]) -> f64 {
        match &self.inner.background {
            Background::Model { .. } => self.disc().integrate_nodal(nodal),
            Background::Conformal { density, .. } => {
                let v: Vec<f64> = nodal.iter().zip(density).map(|(a, b)| a * b).collect();
                self.disc().integrate_nodal(&v)
            }
        }
    }

    /// Relative asymmetry of the assembled matrix before symmetrization.
    pub fn symmetry_defect(&self) -> f64 {
        match &self.inner.background {
            Background::Model {
                symmetry_defect, ..
            } => *symmetry_defect,
            Background::Conformal { base, .. } => base.symmetry_defect(),
        }
    }

    /// Relative size of the off-diagonal part (homogeneous models are diagonal).
    pub fn offdiag_defect(&self) -> f64 {
        match &self.inner.background {
            Background::Model { offdiag_defect, .. } => *offdiag_defect,
            Background::Conformal { base, .. } => base.offdiag_defect(),
        }
    }

    /// Diagonal of the coefficient matrix of a model operator, one entry per mode.
    pub fn mode_values(&self) -> Option<Vec<f64>> {
        match &self.inner.background {
            Background::Model {
                stored: Stored::Dense { matrix, .. },
                ..
            } => Some(matrix.diagonal().iter().cloned().collect()),
            Background::Model {
                stored: Stored::Diagonal(d),
                ..
            } => Some(d.clone()),
            Background::Conformal { .. } => None,
        }
    }

    /// Dense coefficient matrix (the Galerkin matrix of ⟨φ_j, P̂ φ_k⟩ in ĝ).
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.inner.background {
            Background::Model {
                stored: Stored::Dense { matrix, .. },
                ..
            } => matrix.clone(),
            Background::Model {
                stored: Stored::Diagonal(d),
                ..
            } => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Background::Conformal { .. } => self.weak_pair().0,
        }
    }

    fn apply_coeffs_model(stored: &Stored, c: &[f64]) -> Vec<f64> {
        match stored {
            Stored::Dense { matrix, .. } => (matrix * DVector::from_column_slice(c))
                .iter()
                .cloned()
                .collect(),
            Stored::Diagonal(d) => c.iter().zip(d).map(|(c, d)| c * d).collect(),
        }
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        match &self.inner.background {
            Background::Model { stored, .. } => {
                Field::from_coeffs(self.disc(), Self::apply_coeffs_model(stored, f.coeffs()))
            }
            Background::Conformal { base, u, u_p, .. } => {
                let uf = u.mul(f)?;
                let pu = base.apply(&uf)?;
                let v: Vec<f64> = pu.nodal().iter().zip(u_p).map(|(a, b)| a / b).collect();
                Field::from_nodal(self.disc(), &v)
            }
        }
    }

    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        self.check(rhs)?;
        match &self.inner.background {
            Background::Model { stored, .. } => {
                self.require_positive()?;
                let c = match stored {
                    Stored::Dense { chol: Some(ch), .. } => ch
                        .solve(&DVector::from_column_slice(rhs.coeffs()))
                        .iter()
                        .cloned()
                        .collect(),
                    Stored::Dense { chol: None, .. } => {
                        return Err(Error::NotPositive {
                            min_eigenvalue: self.min_eigenvalue(),
                        })
                    }
                    Stored::Diagonal(d) => rhs.coeffs().iter().zip(d).map(|(c, d)| c / d).collect(),
                };
                Field::from_coeffs(self.disc(), c)
            }
            Background::Conformal { base, u, u_p, .. } => {
                let src: Vec<f64> = rhs.nodal().iter().zip(u_p).map(|(a, b)| a * b).collect();
                let x = base.solve(&Field::from_nodal(self.disc(), &src)?)?;
                let v: Vec<f64> = x
                    .nodal()
                    .iter()
                    .zip(u.nodal())
                    .map(|(a, b)| a / b)
                    .collect();
                Field::from_nodal(self.disc(), &v)
            }
        }
    }

    fn require_positive(&self) -> Result<()> {
        let m = self.min_eigenvalue();
        let scale = match &self.inner.background {
            Background::Model {
                stored: Stored::Diagonal(d),
                ..
            } => d.iter().fold(0.0f64, |a, b| a.max(b.abs())),
            Background::Model {
                stored: Stored::Dense { matrix, .. },
                ..
            } => matrix.amax(),
            Background::Conformal { .. } => 1.0,
        };
        if m > 1e-12 * scale {
            Ok(())
        } else {
            Err(Error::NotPositive { min_eigenvalue: m })
        }
    }

    /// Weak-form matrix K and ĝ-mass matrix of a conformal operator.
    fn weak_pair(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let disc = self.disc();
        let n = disc.n_modes();
        // columns: coefficients of φ_k
        let mut k = DMatrix::zeros(n, n);
        let mut mass = DMatrix::zeros(n, n);
        let density = self.density();
        let basis: Vec<Field> = (0..n)
            .map(|j| {
                let mut c = vec![0.0; n];
                c[j] = 1.0;
                Field::from_coeffs(disc, c).expect("unit coefficient")
            })
            .collect();
        let w = disc.weights();
        for i in 0..n {
            for j in i..n {
                let kij = self
                    .w22_inner(&basis[i], &basis[j])
                    .expect("same discretization");
                let mij: f64 = basis[i]
                    .nodal()
                    .iter()
                    .zip(basis[j].nodal())
                    .zip(w.iter().zip(&density))
                    .map(|((a, b), (w, d))| a * b * w * d)
                    .sum();
                k[(i, j)] = kij;
                k[(j, i)] = kij;
                mass[(i, j)] = mij;
                mass[(j, i)] = mij;
            }
        }
        (k, mass)
    }

    /// All eigenvalues, ascending (generalized problem for conformal operators).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = match &self.inner.background {
            Background::Model {
                stored: Stored::Diagonal(d),
                ..
            } => d.clone(),
            Background::Model {
                stored: Stored::Dense { matrix, .. },
                ..
            } => matrix.symmetric_eigenvalues().iter().cloned().collect(),
            Background::Conformal { .. } => {
                let (k, mass) = self.weak_pair();
                match Cholesky::new(mass) {
                    Some(ch) => {
                        let l = ch.l();
                        let li = l
                            .clone()
                            .try_inverse()
                            .expect("triangular factor is invertible");
                        let s = &li * k * li.transpose();
                        let s = (&s + s.transpose()) * 0.5;
                        s.symmetric_eigenvalues().iter().cloned().collect()
                    }
                    None => vec![f64::NAN],
                }
            }
        };
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.inner.min_eig.get_or_init(|| self.eigenvalues()[0])
    }

    /// ⟨f, g⟩ = ∫ g P f dv in this operator's metric.
    pub fn w22_inner(&self, f: &Field, g: &Field) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        match &self.inner.background {
            Background::Model { stored, .. } => {
                let pf = Self::apply_coeffs_model(stored, f.coeffs());
                Ok(pf.iter().zip(g.coeffs()).map(|(a, b)| a * b).sum())
            }
            Background::Conformal { base, u, .. } => base.w22_inner(&u.mul(f)?, &u.mul(g)?),
        }
    }

    /// The conformal factor and base operator, if any.
    pub fn conformal_parts(&self) -> Option<(&PaneitzOperator, &Field)> {
        match &self.inner.background {
            Background::Conformal { base, u, .. } => Some((base, u)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelManifold;
    use crate::spectral::{build_discretization, Symmetry};

    #[test]
    fn sphere_constant_mode() {
        let d = build_discretization(&ModelManifold::sphere(5).unwrap(), Symmetry::ZonalOnly, 16)
            .unwrap();
        let p = assemble(&d).unwrap();
        let v = p.mode_values().unwrap();
        assert!((v[0] - 105.0 / 16.0).abs() < 1e-12);
        assert!((v[1] - 945.0 / 16.0).abs() < 1e-11);
    }
}
