//! Bubble test functions: standard, P-corrected and Green-glued, the
//! Euclidean constant S_n, and Paneitz-Sobolev deficit scans.
//!
//! Bubbles live in the conformally flat chart of each model: g = φ^{-4/(n-4)}|dx|²,
//! with d the chart distance to the center.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::quotient;
use crate::error::{Error, Result};
use crate::green::{fit_expansion, greens_function_with, pole_coords, DeltaFilter, GreenExpansion};
use crate::models::{sphere_volume, ModelKind};
use crate::paneitz::{critical_exponent, PaneitzOperator};
use crate::par;
use crate::spectral::quadrature::gauss_legendre;
use crate::spectral::{Discretization, Field};
use crate::Point;

/// b_n = n(n-4)(n²-4)
pub fn b_n(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 4.0) * (n * n - 4.0)
}

/// Smooth step: 1 on x ≤ 1, 0 on x ≥ 2.
pub fn bump(x: f64) -> f64 {
    if x <= 1.0 {
        return 1.0;
    }
    if x >= 2.0 {
        return 0.0;
    }
    let t = x - 1.0;
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    b / (a + b)
}

/// sup |d^k/dr^k bump(r/δ)| for k = 1..4, by finite differences.
pub fn cutoff_derivative_bounds(delta: f64) -> [f64; 4] {
    let h = 1e-3;
    let mut out = [0.0; 4];
    let xs: Vec<f64> = (0..=2000).map(|i| 1.0 + i as f64 / 2000.0).collect();
    for &x in &xs {
        let f = |k: i32| bump(x + k as f64 * h);
        let d1 = (f(1) - f(-1)) / (2.0 * h);
        let d2 = (f(1) - 2.0 * f(0) + f(-1)) / (h * h);
        let d3 = (f(2) - 2.0 * f(1) + 2.0 * f(-1) - f(-2)) / (2.0 * h.powi(3));
        let d4 = (f(2) - 4.0 * f(1) + 6.0 * f(0) - 4.0 * f(-1) + f(-2)) / h.powi(4);
        for (o, d) in out.iter_mut().zip([d1, d2, d3, d4]) {
            *o = f64::max(*o, d.abs());
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o /= delta.powi(k as i32 + 1);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Standard,
    Corrected,
    Glued,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BubbleSpec {
    pub eps: f64,
    pub center: Point,
    /// Outer cutoff radius δ in the chart; None means no cutoff.
    pub cutoff_radius: Option<f64>,
    /// Inner gluing radius δ̃ (Glued only).
    pub inner_radius: f64,
    pub variant: Variant,
}

impl BubbleSpec {
    pub fn new(eps: f64, center: Point, variant: Variant) -> Self {
        Self {
            eps,
            center,
            cutoff_radius: None,
            inner_radius: 0.45,
            variant,
        }
    }

    fn validate(&self, disc: &Discretization) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Scale(format!("eps = {}", self.eps)));
        }
        let scale = disc.model().injectivity_radius();
        let chart_limit = chart_radius_limit(disc.model());
        let inner = (self.variant == Variant::Glued).then_some(self.inner_radius);
        for (name, r) in [
            ("cutoff radius", self.cutoff_radius),
            ("inner radius", inner),
        ] {
            if let Some(r) = r {
                if !(r > self.eps) {
                    return Err(Error::Scale(format!(
                        "{name} {r} must exceed eps = {}",
                        self.eps
                    )));
                }
                if r > scale / 4.0 + 1e-12 && disc.model().kind() != ModelKind::RoundSphere {
                    return Err(Error::Scale(format!(
                        "{name} {r} exceeds a quarter of {scale}"
                    )));
                }
                if r >= chart_limit {
                    return Err(Error::Scale(format!(
                        "{name} {r}: the support of radius {} crosses the circle seam of the chart (limit {chart_limit:.4})",
                        2.0 * r
                    )));
                }
            }
        }
        Ok(())
    }

    /// Soft scale-separation notes (eps ≤ δ/10).
    pub fn scale_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let radius = match self.variant {
            Variant::Glued => Some(self.inner_radius),
            _ => self.cutoff_radius,
        };
        if let Some(r) = radius {
            if self.eps > r / 10.0 {
                w.push(format!(
                    "eps = {} is not below radius/10 = {}",
                    self.eps,
                    r / 10.0
                ));
            }
        }
        w
    }
}

/// Supremum of cutoff radii δ whose chart support |x - e₁| < 2δ fits in one
/// period of the dilation x ↦ e^L x, i.e. (1+2δ)/(1-2δ) < e^L on S¹(L)×S^{n-1}.
/// Unbounded on other models.
pub fn chart_radius_limit(model: &crate::ModelManifold) -> f64 {
    match model.kind() {
        ModelKind::CircleCrossSphere => (model.sizes()[0] / 2.0).tanh() / 2.0,
        _ => f64::INFINITY,
    }
}

/// Chart distance d and conformal factor φ at every node, for a center on the
/// symmetry axis.
pub struct Chart {
    pub d: Vec<f64>,
    pub phi: Vec<f64>,
    /// cos²(θ/2) on the sphere (for the uncut bubble), else 1.
    sphere_cos2: Option<Vec<f64>>,
}

/// Chart with the circle seam at the antipode of the center.
pub fn chart(disc: &Arc<Discretization>, center: &Point) -> Result<Chart> {
    chart_with_support(disc, center, None)
}

/// Chart whose circle seam avoids the ball |x - e₁| < `support` (product models).
pub fn chart_with_support(
    disc: &Arc<Discretization>,
    center: &Point,
    support: Option<f64>,
) -> Result<Chart> {
    let c = pole_coords(disc, center)?;
    let n = disc.model().dim() as f64;
    match disc.model().kind() {
        ModelKind::RoundSphere => {
            // θ measured from the center, d = 2 tan(θ/2), φ = cos(θ/2)^{-(n-4)}
            let ang = |x: &[f64]| (x[0] - c[0]).abs();
            let d = disc.nodal_from_fn(|x| 2.0 * (ang(x) / 2.0).tan());
            let phi = disc.nodal_from_fn(|x| (ang(x) / 2.0).cos().powf(-(n - 4.0)));
            let cos2 = disc.nodal_from_fn(|x| (ang(x) / 2.0).cos().powi(2));
            Ok(Chart {
                d,
                phi,
                sphere_cos2: Some(cos2),
            })
        }
        ModelKind::CircleCrossSphere => {
            let l = disc.model().sizes()[0];
            // the ball spans ln(1 - R) < s < ln(1 + R); center the period on it
            let mid = match support {
                Some(r) if r < 1.0 => (1.0 - r * r).ln() / 2.0,
                _ => 0.0,
            };
            let flip = c[1] > 1.0;
            let rel = move |x: &[f64]| {
                let s = (x[0] - c[0] - mid + l / 2.0).rem_euclid(l) - l / 2.0 + mid;
                let th = if flip { PI - x[1] } else { x[1] };
                (s, th)
            };
            let d = disc.nodal_from_fn(|x| {
                let (s, th) = rel(x);
                (s.exp().powi(2) - 2.0 * s.exp() * th.cos() + 1.0)
                    .max(0.0)
                    .sqrt()
            });
            let phi = disc.nodal_from_fn(|x| ((n - 4.0) * rel(x).0 / 2.0).exp());
            Ok(Chart {
                d,
                phi,
                sphere_cos2: None,
            })
        }
        ModelKind::FlatTorus => {
            let sides = disc.model().sizes().to_vec();
            let d = disc.nodal_from_fn(|x| {
                x.iter()
                    .zip(&c)
                    .zip(&sides)
                    .map(|((a, b), l)| crate::models::circle_distance(*a, *b, *l).powi(2))
                    .sum::<f64>()
                    .sqrt()
            });
            Ok(Chart {
                phi: vec![1.0; d.len()],
                d,
                sphere_cos2: None,
            })
        }
    }
}

impl BubbleSpec {
    /// Chart radius of the support of the cut-off part.
    fn support(&self) -> Option<f64> {
        match self.variant {
            Variant::Glued => Some(2.0 * self.inner_radius),
            _ => self.cutoff_radius.map(|r| 2.0 * r),
        }
    }

    fn chart(&self, disc: &Arc<Discretization>) -> Result<Chart> {
        chart_with_support(disc, &self.center, self.support())
    }
}

/// φ · η(d/δ) · (ε² + d²)^{-(n-4)/2}, as nodal values.
fn standard_nodal(disc: &Arc<Discretization>, spec: &BubbleSpec, ch: &Chart) -> Vec<f64> {
    let n = disc.model().dim() as f64;
    let a = (n - 4.0) / 2.0;
    let e2 = spec.eps * spec.eps;
    (0..ch.d.len())
        .map(|i| {
            let d = ch.d[i];
            let eta = spec.cutoff_radius.map_or(1.0, |r| bump(d / r));
            if eta == 0.0 {
                return 0.0;
            }
            match &ch.sphere_cos2 {
                // φ(ε²+d²)^{-a} = (ε² cos² + 4 sin²)^{-a}, finite at the antipode
                Some(c2) => eta * (e2 * c2[i] + 4.0 * (1.0 - c2[i])).powf(-a),
                None => eta * ch.phi[i] * (e2 + d * d).powf(-a),
            }
        })
        .collect()
}

/// Nodal values of the standard bubble before projection.
pub fn standard_bubble_nodal(disc: &Arc<Discretization>, spec: &BubbleSpec) -> Result<Vec<f64>> {
    spec.validate(disc)?;
    let ch = spec.chart(disc)?;
    Ok(standard_nodal(disc, spec, &ch))
}

pub fn standard_bubble(disc: &Arc<Discretization>, spec: &BubbleSpec) -> Result<Field> {
    Field::from_nodal(disc, &standard_bubble_nodal(disc, spec)?)
}

/// Source φ^{(n+4)/(n-4)} η b_n ε⁴ (ε²+d²)^{-(n+4)/2} = P(φ U) for the uncut bubble.
fn corrected_source(disc: &Arc<Discretization>, spec: &BubbleSpec, ch: &Chart) -> Vec<f64> {
    let n = disc.model().dim();
    let nf = n as f64;
    let p = critical_exponent(n);
    let e2 = spec.eps * spec.eps;
    let bn = b_n(n) * e2 * e2;
    (0..ch.d.len())
        .map(|i| {
            let d = ch.d[i];
            let eta = spec.cutoff_radius.map_or(1.0, |r| bump(d / r));
            if eta == 0.0 {
                return 0.0;
            }
            match &ch.sphere_cos2 {
                Some(c2) => {
                    // φ^p (ε²+d²)^{-(n+4)/2} = c2^{-(n+4)/2} ... combined as below
                    let w = e2 * c2[i] + 4.0 * (1.0 - c2[i]);
                    eta * bn * w.powf(-(nf + 4.0) / 2.0)
                }
                None => eta * bn * ch.phi[i].powf(p) * (e2 + d * d).powf(-(nf + 4.0) / 2.0),
            }
        })
        .collect()
}

pub fn corrected_bubble(p: &PaneitzOperator, spec: &BubbleSpec) -> Result<Field> {
    let disc = p.disc();
    spec.validate(disc)?;
    let ch = spec.chart(disc)?;
    p.solve(&Field::from_nodal(
        disc,
        &corrected_source(disc, spec, &ch),
    )?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Closeness {
    /// sup over d ≤ δ of |û - u| divided by the profile of the difference.
    pub constant: f64,
    pub sup_difference: f64,
    pub profile: String,
}

/// Compare the corrected and standard bubbles inside the cutoff radius.
pub fn corrected_closeness(p: &PaneitzOperator, spec: &BubbleSpec) -> Result<Closeness> {
    let disc = p.disc();
    let n = disc.model().dim();
    let nf = n as f64;
    let hat = corrected_bubble(p, spec)?;
    let u = standard_bubble(disc, spec)?;
    let ch = spec.chart(disc)?;
    let radius = spec.cutoff_radius.unwrap_or(f64::INFINITY);
    let e2 = spec.eps * spec.eps;
    let profile = |d: f64| -> f64 {
        let w = e2 + d * d;
        if n > 8 {
            w.powf((8.0 - nf) / 2.0)
        } else if n == 8 {
            (1.0 / w).ln().abs().max(1.0)
        } else {
            1.0
        }
    };
    let mut c: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for i in 0..ch.d.len() {
        if ch.d[i] <= radius {
            let diff = (hat.nodal()[i] - u.nodal()[i]).abs();
            sup = sup.max(diff);
            c = c.max(diff / profile(ch.d[i]));
        }
    }
    let label = if n > 8 {
        "(eps^2+r^2)^((8-n)/2)"
    } else if n == 8 {
        "log(1/(eps^2+r^2))"
    } else {
        "1"
    };
    Ok(Closeness {
        constant: c,
        sup_difference: sup,
        profile: label.into(),
    })
}

/// Green data used for gluing: the normalized field G/c and β = α/c.
#[derive(Clone, Debug)]
pub struct GreenData {
    pub expansion: GreenExpansion,
    pub field: Field,
}

impl GreenData {
    /// Smoothed-source Green's function at `center`, fitted over `window`.
    pub fn compute(p: &PaneitzOperator, center: &Point, window: (f64, f64)) -> Result<Self> {
        let field = greens_function_with(p, center, DeltaFilter::Smooth)?;
        let expansion = fit_expansion(&field, center, window)?;
        Ok(Self { expansion, field })
    }

    pub fn beta(&self) -> f64 {
        self.expansion.alpha / self.expansion.leading_coeff
    }
}

#[derive(Clone, Debug)]
pub struct Glued {
    pub field: Field,
    /// Nodal values before projection.
    pub nodal: Vec<f64>,
    pub beta: f64,
    pub warning: Option<String>,
}

/// χ̃ φ (u_ε + β) + (1 - χ̃) G/c with χ̃ = bump(d/δ̃).
pub fn glued_bubble(p: &PaneitzOperator, spec: &BubbleSpec, green: &GreenData) -> Result<Glued> {
    let disc = p.disc();
    spec.validate(disc)?;
    green.field.check_same(&Field::zero(disc))?;
    let ch = spec.chart(disc)?;
    let n = disc.model().dim() as f64;
    let a = (n - 4.0) / 2.0;
    let c = green.expansion.leading_coeff;
    let beta = green.beta();
    let warning = (beta <= 0.0 && disc.model().kind() != ModelKind::RoundSphere).then(|| {
        format!(
            "β = {beta:.3e} ≤ 0 on {}, where the mass should be positive",
            disc.model().label()
        )
    });
    let e2 = spec.eps * spec.eps;
    let g = green.field.nodal();
    let nodal: Vec<f64> = (0..ch.d.len())
        .map(|i| {
            let chi = bump(ch.d[i] / spec.inner_radius);
            let inner = if chi > 0.0 {
                ch.phi[i] * ((e2 + ch.d[i] * ch.d[i]).powf(-a) + beta)
            } else {
                0.0
            };
            chi * inner + (1.0 - chi) * g[i] / c
        })
        .collect();
    Ok(Glued {
        field: Field::from_nodal(disc, &nodal)?,
        nodal,
        beta,
        warning,
    })
}

/// Radial quotient of U(x) = (1 + λ²|x|²)^{-(n-4)/2} with `quad_points` Gauss nodes
/// in the compactified variable r = tan(ϑ)/λ.
pub fn radial_quotient(n: usize, lambda: f64, quad_points: usize) -> f64 {
    let nf = n as f64;
    let a = (nf - 4.0) / 2.0;
    let (x, w) = gauss_legendre(quad_points, 0.0, PI / 2.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &wt) in x.iter().zip(&w) {
        let r = t.tan() / lambda;
        let dr = 1.0 / (lambda * t.cos().powi(2));
        let s = 1.0 + lambda * lambda * r * r;
        let l2 = lambda * lambda;
        // ΔU for U = s^{-a}
        let lap = -2.0 * a * nf * l2 * s.powf(-a - 1.0)
            + 4.0 * a * (a + 1.0) * l2 * l2 * r * r * s.powf(-a - 2.0);
        let jac = r.powf(nf - 1.0) * dr * wt;
        num += lap * lap * jac;
        den += s.powf(-nf) * jac;
    }
    let omega = sphere_volume(n - 1);
    num * omega / (den * omega).powf((nf - 4.0) / nf)
}

/// S_n at a fixed quadrature size.
pub fn euclidean_sn(n: usize, quad_points: usize) -> Result<f64> {
    if n < 5 {
        return Err(Error::UnsupportedModel(format!("dimension {n} < 5")));
    }
    Ok(radial_quotient(n, 1.0, quad_points))
}

/// S_n with quadrature doubling until successive values agree to 1e-13.
pub fn euclidean_sn_adaptive(n: usize) -> Result<f64> {
    let mut q = 16;
    let mut prev = euclidean_sn(n, q)?;
    while q < 8192 {
        q *= 2;
        let next = euclidean_sn(n, q)?;
        if ((next - prev) / next).abs() < 1e-13 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "S_{n} not converged at {q} points"
    )))
}

/// Radial functions Σ c ρ^i (ε² + ρ)^{-j} of ρ = r², closed under Δ.
#[derive(Clone, Debug, Default)]
pub struct RadialExpr {
    terms: Vec<(f64, i32, f64)>,
}

impl RadialExpr {
    /// (ε² + r²)^{-j}
    pub fn power(j: f64) -> Self {
        Self {
            terms: vec![(1.0, 0, j)],
        }
    }

    /// Δ in R^n: for f(ρ), Δf = 4ρ f'' + 2n f'.
    pub fn laplacian(&self, n: usize) -> Self {
        let d = |e: &RadialExpr| -> RadialExpr {
            let mut out = Vec::new();
            for &(c, i, j) in &e.terms {
                if i > 0 {
                    out.push((c * i as f64, i - 1, j));
                }
                out.push((-c * j, i, j + 1.0));
            }
            RadialExpr { terms: out }
        };
        let f1 = d(self);
        let f2 = d(&f1);
        let mut terms: Vec<(f64, i32, f64)> = f2
            .terms
            .iter()
            .map(|&(c, i, j)| (4.0 * c, i + 1, j))
            .collect();
        terms.extend(f1.terms.iter().map(|&(c, i, j)| (2.0 * n as f64 * c, i, j)));
        RadialExpr { terms }
    }

    pub fn eval(&self, eps: f64, r: f64) -> f64 {
        let rho = r * r;
        let w = eps * eps + rho;
        self.terms
            .iter()
            .map(|&(c, i, j)| c * rho.powi(i) * w.powf(-j))
            .sum()
    }

    /// Rewrite with ρ = w - ε² as Σ c ε^{2e} w^{-k}, merging equal (e, k).
    /// The coefficients are dyadic rationals, so cancellations are exact.
    pub fn collect(&self) -> Vec<(f64, i32, f64)> {
        let mut out: Vec<(f64, i32, f64)> = Vec::new();
        for &(c, i, j) in &self.terms {
            let mut binom = 1.0;
            for m in 0..=i {
                if m > 0 {
                    binom *= (i - m + 1) as f64 / m as f64;
                }
                // binom(i, m) w^m (-ε²)^{i-m}
                let coef = c * binom * if (i - m) % 2 == 0 { 1.0 } else { -1.0 };
                let (e, k) = (i - m, j - m as f64);
                match out.iter_mut().find(|t| t.1 == e && t.2 == k) {
                    Some(t) => t.0 += coef,
                    None => out.push((coef, e, k)),
                }
            }
        }
        out.retain(|t| t.0 != 0.0);
        out
    }
}

/// Δ²(ε² + r²)^{-(n-4)/2} at radius r by symbolic radial differentiation.
pub fn bubble_bilaplacian(n: usize, eps: f64, r: f64) -> f64 {
    let e = RadialExpr::power((n as f64 - 4.0) / 2.0);
    let w = eps * eps + r * r;
    e.laplacian(n)
        .laplacian(n)
        .collect()
        .iter()
        .map(|&(c, k, j)| c * eps.powi(2 * k) * w.powf(-j))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeficitRow {
    pub eps: f64,
    pub quotient: f64,
    pub deficit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeficitScan {
    pub variant: Variant,
    pub sn: f64,
    pub rows: Vec<DeficitRow>,
    /// Log-log slope of deficit against eps (all deficits positive).
    pub exponent: Option<f64>,
    pub green: Option<GreenExpansion>,
    pub warnings: Vec<String>,
}

/// Least-squares slope of log y against log x.
pub fn power_law_exponent(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// Quotient and deficit S_n - F of a bubble variant for each eps.
pub fn deficit_scan(
    p: &PaneitzOperator,
    template: &BubbleSpec,
    eps_list: &[f64],
    green_window: (f64, f64),
) -> Result<DeficitScan> {
    let n = p.disc().model().dim();
    let sn = euclidean_sn_adaptive(n)?;
    let green = match template.variant {
        Variant::Glued => Some(GreenData::compute(p, &template.center, green_window)?),
        _ => None,
    };
    let mut warnings = Vec::new();
    let rows: Vec<Result<(DeficitRow, Vec<String>)>> = par::map(eps_list, |&eps| {
        let spec = BubbleSpec {
            eps,
            ..template.clone()
        };
        let mut w = spec.scale_warnings();
        let f = match spec.variant {
            Variant::Standard => standard_bubble(p.disc(), &spec)?,
            Variant::Corrected => corrected_bubble(p, &spec)?,
            Variant::Glued => {
                let g = glued_bubble(p, &spec, green.as_ref().expect("green data for gluing"))?;
                w.extend(g.warning);
                g.field
            }
        };
        let q = quotient(p, &f)?.quotient;
        Ok((
            DeficitRow {
                eps,
                quotient: q,
                deficit: sn - q,
            },
            w,
        ))
    });
    let mut out = Vec::new();
    for r in rows {
        let (row, w) = r?;
        warnings.extend(w);
        out.push(row);
    }
    let e: Vec<f64> = out.iter().map(|r| r.eps).collect();
    let d: Vec<f64> = out.iter().map(|r| r.deficit).collect();
    Ok(DeficitScan {
        variant: template.variant,
        sn,
        exponent: power_law_exponent(&e, &d),
        rows: out,
        green: green.map(|g| g.expansion),
        warnings,
    })
}
