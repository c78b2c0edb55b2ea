//! The subcommands. Every file is written in a fixed order with shortest
//! round-trip float formatting, so reruns produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use paneitz::bubbles::{deficit_scan, BubbleSpec, Variant};
use paneitz::conformal::maxprinciple_path;
use paneitz::green::{alternative_constant, distributional_constant, mass_scan};
use paneitz::models::{curvature_data, is_positivity_admissible};
use paneitz::paneitz::assemble;
use paneitz::qflow::{endgame_residual, run_with, FlowOptions, MonitorRecord};
use paneitz::spectral::build_discretization;
use paneitz::{Discretization, Field, PaneitzOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

/// Fields of [`MonitorRecord`] written to one `.dat` file each.
pub const MONITOR_FIELDS: [&str; 9] = [
    "energy",
    "volume",
    "mu",
    "quotient",
    "min_u",
    "residual",
    "lower_bound_slack",
    "cumulative_st",
    "l2_mass",
];

fn monitor_value(r: &MonitorRecord, name: &str) -> f64 {
    match name {
        "energy" => r.energy,
        "volume" => r.volume,
        "mu" => r.mu,
        "quotient" => r.quotient,
        "min_u" => r.min_u,
        "residual" => r.residual,
        "lower_bound_slack" => r.lower_bound_slack,
        "cumulative_st" => r.cumulative_st,
        "l2_mass" => r.l2_mass,
        _ => unreachable!("unknown monitor {name}"),
    }
}

fn operator(cfg: &ExperimentConfig, cmd: Command) -> Result<PaneitzOperator, CliError> {
    let disc = build_discretization(&cfg.model, cfg.symmetry_for(cmd), cfg.mode_count)?;
    Ok(assemble(&disc)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Run `cmd`, writing its files under `out` and a short report to `report`.
pub fn run_command(
    cfg: &ExperimentConfig,
    cmd: Command,
    seed: u64,
    out: &Path,
    report: &mut dyn Write,
) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    match cmd {
        Command::Info => info(cfg, out, report),
        Command::Flow => flow(cfg, out, report),
        Command::Green => green(cfg, out, report),
        Command::Bubble => bubble(cfg, out, report),
        Command::MaxPrinciple => maxprinciple(cfg, seed, out, report),
    }
}

#[derive(Serialize)]
struct InfoReport {
    model: String,
    n: usize,
    curvature: paneitz::models::CurvatureBundle,
    admissible: bool,
    explanation: String,
    volume: f64,
    injectivity_radius: f64,
}

fn info(cfg: &ExperimentConfig, out: &Path, report: &mut dyn Write) -> Result<(), CliError> {
    let c = curvature_data(&cfg.model)?;
    let adm = is_positivity_admissible(&cfg.model);
    writeln!(report, "model = {}", cfg.model.label())?;
    writeln!(report, "n = {}", cfg.model.dim())?;
    writeln!(report, "Q = {}", c.q_curv)?;
    writeln!(report, "R = {}", c.scalar)?;
    writeln!(report, "sigma1 = {}", c.sigma1)?;
    writeln!(report, "sigma2 = {}", c.sigma2)?;
    writeln!(
        report,
        "admissible = {} ({})",
        adm.admissible, adm.explanation
    )?;
    let rep = InfoReport {
        model: cfg.model.label(),
        n: cfg.model.dim(),
        curvature: c,
        admissible: adm.admissible,
        explanation: adm.explanation,
        volume: cfg.model.volume(),
        injectivity_radius: cfg.model.injectivity_radius(),
    };
    fs::write(
        out.join("info.json"),
        serde_json::to_string_pretty(&rep)? + "\n",
    )?;
    Ok(())
}

#[derive(Serialize)]
struct FlowSummaryRow {
    model: String,
    n: usize,
    mode_count: usize,
    u0: String,
    tol: f64,
    threshold: f64,
    steps: usize,
    rejected: usize,
    converged: bool,
    t_final: f64,
    final_residual: f64,
    endgame_residual: f64,
    energy_drift: f64,
    max_volume_decrease: f64,
    max_mu_increase: f64,
    max_quotient_increase: f64,
    min_relative_slack: f64,
    min_u: f64,
    growth_prefactor: f64,
    growth_rate: f64,
    l2_floor: f64,
    min_l2_mass: f64,
    min_quotient: f64,
    max_volume: f64,
}

fn flow(cfg: &ExperimentConfig, out: &Path, report: &mut dyn Write) -> Result<(), CliError> {
    let adm = is_positivity_admissible(&cfg.model);
    if !adm.admissible {
        return Err(CliError::Admissibility(adm.explanation));
    }
    let p = operator(cfg, Command::Flow)?;
    let f = &cfg.flow;
    let u0 = f.u0.field(p.disc())?;
    let mut opts = FlowOptions::new(f.t_end, f.tol);
    opts.residual_threshold = f.threshold;

    let mut jsonl = BufWriter::new(File::create(out.join("monitors.jsonl"))?);
    let mut io_err = None;
    let res = run_with(&p, &u0, &opts, |rec| {
        if io_err.is_none() {
            let line = serde_json::to_string(rec).map_err(CliError::from);
            if let Err(e) = line.and_then(|l| writeln!(jsonl, "{l}").map_err(CliError::from)) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    jsonl.flush()?;

    for name in MONITOR_FIELDS {
        let mut w = BufWriter::new(File::create(out.join(format!("{name}.dat")))?);
        writeln!(w, "# t {name}")?;
        for r in &res.records {
            writeln!(w, "{} {}", r.t, monitor_value(r, name))?;
        }
        w.flush()?;
    }

    let s = &res.summary;
    let endgame = endgame_residual(&p, &res.final_state.u)?;
    let row = FlowSummaryRow {
        model: cfg.model.label(),
        n: cfg.model.dim(),
        mode_count: cfg.mode_count,
        u0: f.u0.source().to_string(),
        tol: f.tol,
        threshold: f.threshold,
        steps: s.steps,
        rejected: s.rejected,
        converged: s.converged,
        t_final: s.t_final,
        final_residual: s.final_residual,
        endgame_residual: endgame,
        energy_drift: s.energy_drift,
        max_volume_decrease: s.max_volume_decrease,
        max_mu_increase: s.max_mu_increase,
        max_quotient_increase: s.max_quotient_increase,
        min_relative_slack: s.min_relative_slack,
        min_u: s.min_u,
        growth_prefactor: s.growth_prefactor,
        growth_rate: s.growth_rate,
        l2_floor: s.l2_floor,
        min_l2_mass: s.min_l2_mass,
        min_quotient: s.min_quotient,
        max_volume: s.max_volume,
    };
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.serialize(&row)?;
    w.flush()?;
    writeln!(
        report,
        "flow on {}: {} steps, t = {}, residual = {:.3e}, endgame residual = {:.3e}, converged = {}",
        row.model, s.steps, s.t_final, s.final_residual, endgame, s.converged
    )?;
    Ok(())
}

#[derive(Serialize)]
struct GreenRow {
    model: String,
    n: usize,
    pole: String,
    leading_coeff: f64,
    alpha: f64,
    linear_coeff: f64,
    r_min: f64,
    r_max: f64,
    samples: usize,
    fit_residual: f64,
    reliable: bool,
    beta: f64,
    distributional_constant: f64,
    alternative_constant: f64,
    alpha_over_distributional: f64,
    alpha_over_alternative: f64,
}

fn green(cfg: &ExperimentConfig, out: &Path, report: &mut dyn Write) -> Result<(), CliError> {
    let p = operator(cfg, Command::Green)?;
    let g = &cfg.green;
    let fits = mass_scan(&p, &g.poles, g.window)?;
    let n = cfg.model.dim();
    let (cd, ca) = (distributional_constant(n), alternative_constant(n));
    let mut w = csv::Writer::from_path(out.join("green.csv"))?;
    for f in &fits {
        let row = GreenRow {
            model: cfg.model.label(),
            n,
            pole: f.pole.label(),
            leading_coeff: f.leading_coeff,
            alpha: f.alpha,
            linear_coeff: f.linear_coeff,
            r_min: f.fit_window.0,
            r_max: f.fit_window.1,
            samples: f.samples,
            fit_residual: f.fit_residual,
            reliable: f.reliable,
            beta: f.alpha / f.leading_coeff,
            distributional_constant: cd,
            alternative_constant: ca,
            alpha_over_distributional: f.alpha / cd,
            alpha_over_alternative: f.alpha / ca,
        };
        writeln!(
            report,
            "pole {}: c = {:.6e}, alpha = {:.6e}, residual = {:.3e}{}",
            row.pole,
            row.leading_coeff,
            row.alpha,
            row.fit_residual,
            if row.reliable { "" } else { " (unreliable)" }
        )?;
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DeficitCsvRow {
    model: String,
    n: usize,
    variant: String,
    eps: f64,
    quotient: f64,
    deficit: f64,
    fit_exponent: String,
}

fn bubble(cfg: &ExperimentConfig, out: &Path, report: &mut dyn Write) -> Result<(), CliError> {
    let p = operator(cfg, Command::Bubble)?;
    let b = &cfg.bubble;
    let mut spec = BubbleSpec::new(b.eps[0], b.center.clone(), b.variant);
    spec.cutoff_radius = b.delta;
    spec.inner_radius = b.inner_radius;
    let scan = deficit_scan(&p, &spec, &b.eps, b.green_window)?;
    let variant = match scan.variant {
        Variant::Standard => "standard",
        Variant::Corrected => "corrected",
        Variant::Glued => "glued",
    };
    let mut w = csv::Writer::from_path(out.join("deficit.csv"))?;
    for r in &scan.rows {
        w.serialize(DeficitCsvRow {
            model: cfg.model.label(),
            n: cfg.model.dim(),
            variant: variant.into(),
            eps: r.eps,
            quotient: r.quotient,
            deficit: r.deficit,
            fit_exponent: opt(scan.exponent),
        })?;
        writeln!(
            report,
            "eps = {}: quotient = {:.8}, deficit = {:.6e}",
            r.eps, r.quotient, r.deficit
        )?;
    }
    w.flush()?;
    writeln!(
        report,
        "S_n = {}, fitted exponent = {}",
        scan.sn,
        opt(scan.exponent)
    )?;
    for msg in &scan.warnings {
        eprintln!("warning: {msg}");
    }
    fs::write(
        out.join("bubble.json"),
        serde_json::to_string_pretty(&scan)? + "\n",
    )?;
    Ok(())
}

/// Smooth random source g² + 10⁻³ built from the lowest modes of each axis.
fn random_source(disc: &Arc<Discretization>, rng: &mut ChaCha8Rng) -> Result<Field, CliError> {
    let shape = disc.mode_shape().to_vec();
    let band = shape.iter().map(|m| m / 4).min().unwrap_or(1).clamp(1, 4);
    let coeffs = (0..disc.n_modes())
        .map(|flat| {
            let mut r = flat;
            let mut low = true;
            for &m in shape.iter().rev() {
                low &= r % m < band;
                r /= m;
            }
            if low {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let g = Field::from_coeffs(disc, coeffs)?;
    Ok(g.map_nodal(|x| x * x + 1e-3)?)
}

#[derive(Serialize)]
struct PathRow {
    source: usize,
    lambda: f64,
    min_u: f64,
    q_lower_bound_min: f64,
    q_min: String,
    r_min: String,
}

fn maxprinciple(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    report: &mut dyn Write,
) -> Result<(), CliError> {
    let p = operator(cfg, Command::MaxPrinciple)?;
    let mp = &cfg.maxprinciple;
    let targets: Vec<Field> = match &mp.u {
        Some(u) => vec![u.field(p.disc())?],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..mp.sources)
                .map(|_| {
                    let w = random_source(p.disc(), &mut rng)?;
                    let u = p.solve(&w)?;
                    // unit mean value
                    let mean = u.integrate() / p.disc().weights().iter().sum::<f64>();
                    Ok(u.scale(1.0 / mean))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    let mut w = csv::Writer::from_path(out.join("path.csv"))?;
    let mut summary = Vec::new();
    for (i, u) in targets.iter().enumerate() {
        let rep = maxprinciple_path(&p, u, mp.steps)?;
        for e in &rep.entries {
            w.serialize(PathRow {
                source: i,
                lambda: e.lambda,
                min_u: e.min_u,
                q_lower_bound_min: e.q_lower_bound_min,
                q_min: opt(e.q_min),
                r_min: opt(e.r_min),
            })?;
        }
        let min_u = rep
            .entries
            .iter()
            .map(|e| e.min_u)
            .fold(f64::INFINITY, f64::min);
        writeln!(
            report,
            "source {i}: min u_λ = {min_u:.6e}, first failure = {}",
            rep.first_failure
                .map(|l| l.to_string())
                .unwrap_or_else(|| "none".into())
        )?;
        summary.push(serde_json::json!({
            "source": i,
            "first_failure": rep.first_failure,
            "min_u": min_u,
            "q_bound_label": rep.q_bound_label,
        }));
    }
    w.flush()?;
    fs::write(
        out.join("maxprinciple.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(())
}
