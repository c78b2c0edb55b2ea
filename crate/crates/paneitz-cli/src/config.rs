//! Experiment configuration: `[section]` headers with `key = value` lines.

use std::f64::consts::PI;

use paneitz::bubbles::Variant;
use paneitz::models::is_positivity_admissible;
use paneitz::{ModelKind, ModelManifold, Point, Symmetry};
use serde::Deserialize;

use crate::error::CliError;
use crate::initial::InitialData;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_MODE_COUNT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sphere,
    Product,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryName {
    Zonal,
    Circle,
    CircleZonal,
    Torus,
}

impl From<SymmetryName> for Symmetry {
    fn from(s: SymmetryName) -> Self {
        match s {
            SymmetryName::Zonal => Symmetry::ZonalOnly,
            SymmetryName::Circle => Symmetry::CircleOnly,
            SymmetryName::CircleZonal => Symmetry::CircleZonal2D,
            SymmetryName::Torus => Symmetry::FullTorusFourier,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Kind,
    pub n: usize,
    /// Circle length of S¹(L)×S^{n-1}.
    pub circle_length: Option<f64>,
    /// Side of the cubic torus.
    pub side: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub symmetry: Option<SymmetryName>,
    pub mode_count: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
    pub threshold: Option<f64>,
    pub u0: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    /// Axis coordinates of each pole: [θ] on the sphere, [s, θ] on the product.
    pub poles: Option<Vec<Vec<f64>>>,
    pub window: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSection {
    pub variant: Option<String>,
    pub eps: Option<Vec<f64>>,
    /// Outer cutoff radius δ (standard and corrected variants).
    pub delta: Option<f64>,
    /// Inner gluing radius δ̃ (glued variant).
    pub inner_radius: Option<f64>,
    /// Axis coordinates of the center.
    pub center: Option<Vec<f64>>,
    pub green_window: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxPrincipleSection {
    pub steps: Option<usize>,
    pub sources: Option<usize>,
    pub u: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    #[serde(default)]
    discretization: DiscretizationSection,
    flow: Option<FlowSection>,
    green: Option<GreenSection>,
    bubble: Option<BubbleSection>,
    maxprinciple: Option<MaxPrincipleSection>,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub t_end: f64,
    pub tol: f64,
    pub threshold: f64,
    pub u0: InitialData,
}

#[derive(Clone, Debug)]
pub struct GreenConfig {
    pub poles: Vec<Point>,
    pub window: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct BubbleConfig {
    pub variant: Variant,
    pub eps: Vec<f64>,
    pub delta: Option<f64>,
    pub inner_radius: f64,
    pub center: Point,
    pub green_window: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct MaxPrincipleConfig {
    pub steps: usize,
    pub sources: usize,
    pub u: Option<InitialData>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelManifold,
    /// Explicit symmetry, else a per-command default.
    pub symmetry: Option<Symmetry>,
    pub mode_count: usize,
    pub flow: FlowConfig,
    pub green: GreenConfig,
    pub bubble: BubbleConfig,
    pub maxprinciple: MaxPrincipleConfig,
    pub output_dir: Option<String>,
}

fn range(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Range {
        key: key.into(),
        message: msg.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(range(key, format!("must be positive and finite, got {v}")))
    }
}

fn window(key: &str, w: [f64; 2]) -> Result<(f64, f64), CliError> {
    if w[0] > 0.0 && w[1] > w[0] && w[1].is_finite() {
        Ok((w[0], w[1]))
    } else {
        Err(range(
            key,
            format!("needs 0 < r_min < r_max, got [{}, {}]", w[0], w[1]),
        ))
    }
}

/// Point on the symmetry axis from its axis coordinates.
pub fn axis_point(model: &ModelManifold, key: &str, c: &[f64]) -> Result<Point, CliError> {
    let n = model.dim();
    match (model.kind(), c) {
        (ModelKind::RoundSphere, [th]) => Ok(Point::sphere_polar(n, *th)),
        (ModelKind::CircleCrossSphere, [s, th]) => Ok(Point::product_polar(n, *s, *th)),
        (ModelKind::FlatTorus, x) if x.len() == n => Ok(Point::Torus(x.to_vec())),
        _ => Err(range(
            key,
            format!(
                "{} coordinates do not name a point on {}",
                c.len(),
                model.label()
            ),
        )),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        CliError::Syntax {
            line,
            message: e.message().to_string(),
        }
    })?;
    let m = &raw.model;
    if m.n < 5 {
        return Err(range("model.n", format!("must be ≥ 5, got {}", m.n)));
    }
    let model = match m.kind {
        Kind::Sphere => ModelManifold::sphere(m.n),
        Kind::Product => ModelManifold::product(
            m.n,
            positive("model.circle_length", m.circle_length.unwrap_or(2.0 * PI))?,
        ),
        Kind::Torus => {
            ModelManifold::cubic_torus(m.n, positive("model.side", m.side.unwrap_or(2.0 * PI))?)
        }
    }
    .map_err(|e| range("model", e.to_string()))?;
    if m.kind != Kind::Product && m.circle_length.is_some() {
        return Err(range(
            "model.circle_length",
            "only applies to kind = \"product\"",
        ));
    }
    if m.kind != Kind::Torus && m.side.is_some() {
        return Err(range("model.side", "only applies to kind = \"torus\""));
    }

    let mode_count = raw.discretization.mode_count.unwrap_or(DEFAULT_MODE_COUNT);
    if mode_count < 8 {
        return Err(range(
            "discretization.mode_count",
            format!("mode_count ≥ 8 required (got {mode_count})"),
        ));
    }

    let flow = {
        let f = raw.flow.clone();
        if f.is_some() {
            let adm = is_positivity_admissible(&model);
            if !adm.admissible {
                return Err(CliError::Admissibility(adm.explanation));
            }
        }
        let f = f.unwrap_or(FlowSection {
            t_end: None,
            tol: None,
            threshold: None,
            u0: None,
        });
        let tol = f.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(range("flow.tol", format!("must lie in (0, 1), got {tol}")));
        }
        let threshold = f.threshold.unwrap_or(DEFAULT_THRESHOLD);
        if !(0.0..1.0).contains(&threshold) {
            return Err(range(
                "flow.threshold",
                format!("must lie in [0, 1), got {threshold}"),
            ));
        }
        let u0 =
            InitialData::parse(f.u0.as_deref().unwrap_or("1")).map_err(|e| range("flow.u0", e))?;
        FlowConfig {
            t_end: positive("flow.t_end", f.t_end.unwrap_or(200.0))?,
            tol,
            threshold,
            u0,
        }
    };

    let inj = model.injectivity_radius();
    let green = {
        let g = raw.green.clone().unwrap_or(GreenSection {
            poles: None,
            window: None,
        });
        let poles = match g.poles {
            Some(ps) if ps.is_empty() => {
                return Err(range("green.poles", "needs at least one pole"))
            }
            Some(ps) => ps
                .iter()
                .map(|c| axis_point(&model, "green.poles", c))
                .collect::<Result<_, _>>()?,
            None => vec![Point::base(&model)],
        };
        let window = window("green.window", g.window.unwrap_or([0.1, inj / 4.0]))?;
        GreenConfig { poles, window }
    };

    let bubble = {
        let b = raw.bubble.clone().unwrap_or(BubbleSection {
            variant: None,
            eps: None,
            delta: None,
            inner_radius: None,
            center: None,
            green_window: None,
        });
        let variant = match b.variant.as_deref().unwrap_or("glued") {
            "standard" => Variant::Standard,
            "corrected" => Variant::Corrected,
            "glued" => Variant::Glued,
            other => {
                return Err(range(
                    "bubble.variant",
                    format!("unknown variant {other:?}"),
                ))
            }
        };
        let eps = b.eps.unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
        if eps.is_empty() {
            return Err(range("bubble.eps", "needs at least one value"));
        }
        for e in &eps {
            positive("bubble.eps", *e)?;
        }
        let delta = b.delta.map(|d| positive("bubble.delta", d)).transpose()?;
        let inner_radius = positive("bubble.inner_radius", b.inner_radius.unwrap_or(0.45))?;
        let center = match b.center {
            Some(c) => axis_point(&model, "bubble.center", &c)?,
            None => Point::base(&model),
        };
        let green_window = window(
            "bubble.green_window",
            b.green_window.unwrap_or([0.1, inj / 4.0]),
        )?;
        BubbleConfig {
            variant,
            eps,
            delta,
            inner_radius,
            center,
            green_window,
        }
    };

    let maxprinciple = {
        let mp = raw.maxprinciple.clone().unwrap_or(MaxPrincipleSection {
            steps: None,
            sources: None,
            u: None,
        });
        let steps = mp.steps.unwrap_or(21);
        if steps < 2 {
            return Err(range(
                "maxprinciple.steps",
                format!("must be ≥ 2, got {steps}"),
            ));
        }
        let u =
            mp.u.map(|s| InitialData::parse(&s).map_err(|e| range("maxprinciple.u", e)))
                .transpose()?;
        MaxPrincipleConfig {
            steps,
            sources: mp.sources.unwrap_or(5),
            u,
        }
    };

    Ok(ExperimentConfig {
        model,
        symmetry: raw.discretization.symmetry.map(Symmetry::from),
        mode_count,
        flow,
        green,
        bubble,
        maxprinciple,
        output_dir: raw.output.dir,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Info,
    Flow,
    Green,
    Bubble,
    MaxPrinciple,
}

impl ExperimentConfig {
    /// The configured symmetry, or the default reduction for the command.
    pub fn symmetry_for(&self, cmd: Command) -> Symmetry {
        if let Some(s) = self.symmetry {
            return s;
        }
        match (self.model.kind(), cmd) {
            (ModelKind::RoundSphere, _) => Symmetry::ZonalOnly,
            (ModelKind::FlatTorus, _) => Symmetry::FullTorusFourier,
            (ModelKind::CircleCrossSphere, Command::Green | Command::Bubble) => {
                Symmetry::CircleZonal2D
            }
            (ModelKind::CircleCrossSphere, _) => Symmetry::CircleOnly,
        }
    }
}
