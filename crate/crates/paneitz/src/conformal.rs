//! Conformal transformation laws for Q and R, the Paneitz-Sobolev quotient,
//! the normalized total Q-curvature and the λ-path diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{curvature_data, is_positivity_admissible};
use crate::paneitz::{critical_exponent, PaneitzOperator};
use crate::par;
use crate::spectral::{Field, PointwiseMap};

/// Relative tolerance under which a nodal value still counts as nonnegative.
pub const POSITIVITY_TOL: f64 = 1e-9;

fn require_positive(u: &Field) -> Result<()> {
    let m = u.min_nodal();
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveFactor(m))
    }
}

/// Q of ĝ = u^{4/(n-4)} g: (2/(n-4)) u^{-(n+4)/(n-4)} P u.
pub fn conformal_q(p: &PaneitzOperator, u: &Field) -> Result<Field> {
    Field::from_nodal(p.disc(), &conformal_q_nodal(p, u)?)
}

/// Nodal values of [`conformal_q`] before projection.
pub fn conformal_q_nodal(p: &PaneitzOperator, u: &Field) -> Result<Vec<f64>> {
    require_positive(u)?;
    let n = p.disc().model().dim() as f64;
    let e = critical_exponent(p.disc().model().dim());
    let pu = p.apply(u)?;
    Ok(pu
        .nodal()
        .iter()
        .zip(u.nodal())
        .map(|(a, b)| 2.0 / (n - 4.0) * a * b.powf(-e))
        .collect())
}

/// Scalar curvature of ĝ = u^{4/(n-4)} g over the model metric.
pub fn conformal_r(u: &Field) -> Result<Field> {
    Field::from_nodal(u.disc(), &conformal_r_nodal(u)?)
}

pub fn conformal_r_nodal(u: &Field) -> Result<Vec<f64>> {
    require_positive(u)?;
    let model = u.disc().model();
    let n = model.dim() as f64;
    let r = curvature_data(model)?.scalar;
    let lap = u.laplacian();
    let grad = u.grad_sq_nodal();
    let a = 4.0 * (n - 1.0) / (n - 4.0);
    let b = 8.0 * (n - 1.0) / ((n - 4.0) * (n - 4.0));
    Ok(u.nodal()
        .iter()
        .zip(lap.nodal())
        .zip(&grad)
        .map(|((&u, &l), &g)| u.powf(-n / (n - 4.0)) * (-a * l - b * g / u + r * u))
        .collect())
}

/// Sign data of the metric ĝ = u^{4/(n-4)} g.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedMetric {
    pub min_u: f64,
    /// min(Pu) / max|Pu|. Q̂ and Pu share their sign once u > 0, so the
    /// relative tolerance is applied here rather than after the u^{-p} factor.
    pub q_sign_margin: f64,
    pub q_min: f64,
    pub r_min: f64,
    pub admissible: bool,
}

pub fn induced_metric(p: &PaneitzOperator, u: &Field) -> Result<InducedMetric> {
    require_positive(u)?;
    let pu = p.apply(u)?;
    let scale = pu.max_abs().max(f64::MIN_POSITIVE);
    let q_sign_margin = pu.min_nodal() / scale;
    let q_min = conformal_q_nodal(p, u)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let r_min = conformal_r_nodal(u)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let positive_somewhere = pu.max_nodal() > POSITIVITY_TOL * scale;
    Ok(InducedMetric {
        min_u: u.min_nodal(),
        q_sign_margin,
        q_min,
        r_min,
        admissible: q_sign_margin >= -POSITIVITY_TOL && positive_somewhere && r_min > 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuotientReport {
    pub numerator: f64,
    pub denominator_volume: f64,
    pub quotient: f64,
    pub mu: f64,
}

pub fn quotient(p: &PaneitzOperator, u: &Field) -> Result<QuotientReport> {
    let n = p.disc().model().dim() as f64;
    if u.max_abs() == 0.0 {
        return Err(Error::ZeroField);
    }
    let numerator = p.w22_inner(u, u)?;
    let vol = p.integrate_nodal(&u.nodal_map(|x| x.abs().powf(2.0 * n / (n - 4.0))));
    if !(vol > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(QuotientReport {
        numerator,
        denominator_volume: vol,
        quotient: numerator / vol.powf((n - 4.0) / n),
        mu: numerator / vol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TotalQReport {
    /// Vol(ĝ)^{-(n-4)/n} ∫ Q_ĝ dv_ĝ
    pub total: f64,
    /// Mean of Q_ĝ over (M, ĝ).
    pub mean: f64,
    pub volume: f64,
}

pub fn total_q(p: &PaneitzOperator, u: &Field) -> Result<TotalQReport> {
    let n = p.disc().model().dim() as f64;
    let q = conformal_q_nodal(p, u)?;
    let dens = u.nodal_map(|x| x.powf(2.0 * n / (n - 4.0)));
    let volume = p.integrate_nodal(&dens);
    let q_int: Vec<f64> = q.iter().zip(&dens).map(|(a, b)| a * b).collect();
    let integral = p.integrate_nodal(&q_int);
    Ok(TotalQReport {
        total: integral * volume.powf(-(n - 4.0) / n),
        mean: integral / volume,
        volume,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub min_u: f64,
    /// min over nodes of the lower bound (1-λ) Q_g u_λ^{-(n+4)/(n-4)}.
    pub q_lower_bound_min: f64,
    /// min of Q_λ itself when u_λ > 0.
    pub q_min: Option<f64>,
    pub r_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathReport {
    pub entries: Vec<PathEntry>,
    /// First λ at which u_λ, Q_λ or R_λ fails to be positive.
    pub first_failure: Option<f64>,
    pub q_bound_label: String,
}

/// Follow u_λ = (1-λ) + λu for λ on a uniform grid of `steps` points in [0, 1].
pub fn maxprinciple_path(p: &PaneitzOperator, u: &Field, steps: usize) -> Result<PathReport> {
    let model = p.disc().model();
    let adm = is_positivity_admissible(model);
    if !adm.admissible {
        return Err(Error::Precondition(adm.explanation));
    }
    let pu = p.apply(u)?;
    let scale = pu.max_abs().max(f64::MIN_POSITIVE);
    if pu.min_nodal() < -POSITIVITY_TOL * scale {
        return Err(Error::Precondition(format!(
            "P u has negative values (min {:.3e})",
            pu.min_nodal()
        )));
    }
    let steps = steps.max(2);
    let q_g = curvature_data(model)?.q_curv;
    let e = critical_exponent(model.dim());
    let lambdas: Vec<f64> = (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect();
    let one = Field::constant(p.disc(), 1.0);
    let entries: Vec<Result<PathEntry>> = par::map(&lambdas, |&lam| {
        let ul = one.scale(1.0 - lam).axpy(lam, u)?;
        let min_u = ul.min_nodal();
        let q_lower_bound_min = ul
            .nodal()
            .iter()
            .map(|&x| (1.0 - lam) * q_g * x.powf(-e))
            .fold(f64::INFINITY, f64::min);
        let (q_min, r_min) = if min_u > 0.0 {
            let q = conformal_q_nodal(p, &ul)?;
            let r = conformal_r_nodal(&ul)?;
            (
                Some(q.iter().cloned().fold(f64::INFINITY, f64::min)),
                Some(r.iter().cloned().fold(f64::INFINITY, f64::min)),
            )
        } else {
            (None, None)
        };
        Ok(PathEntry {
            lambda: lam,
            min_u,
            q_lower_bound_min,
            q_min,
            r_min,
        })
    });
    let entries: Vec<PathEntry> = entries.into_iter().collect::<Result<_>>()?;
    let first_failure = entries
        .iter()
        .find(|e| {
            let q_bad = match e.q_min {
                Some(q) => q < -POSITIVITY_TOL * q_g.abs().max(1.0),
                None => true,
            };
            e.min_u <= 0.0 || q_bad || e.r_min.is_none_or(|r| r <= 0.0)
        })
        .map(|e| e.lambda);
    Ok(PathReport {
        entries,
        first_failure,
        q_bound_label: "lower bound (1-λ)·Q_g·u_λ^{-(n+4)/(n-4)}".into(),
    })
}

/// |u|^{(n+4)/(n-4)} with the sign of u.
pub fn signed_critical_power(u: &Field) -> Result<Field> {
    u.pointwise(PointwiseMap::SignedPower(critical_exponent(
        u.disc().model().dim(),
    )))
}
