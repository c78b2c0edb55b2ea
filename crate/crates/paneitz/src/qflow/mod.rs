//! The normalized non-local flow u_t = -u + μ P⁻¹(|u|^{(n+4)/(n-4)}), its
//! unnormalized companion v_t = -v + P⁻¹(|v|^{(n+4)/(n-4)}), and the monitors
//! for the conservation and monotonicity laws along them.

pub mod ode;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::signed_critical_power;
use crate::error::{Error, Result};
use crate::paneitz::{critical_exponent, PaneitzOperator};
use crate::spectral::{Discretization, Field};
use ode::{DenseSegment, Dopri5};

pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: Field,
    pub t: f64,
    /// ∫₀ᵗ ⟨f, P f⟩ dt
    pub cumulative_st: f64,
    pub operator: PaneitzOperator,
    pu0: Arc<Vec<f64>>,
}

impl FlowState {
    pub fn new(operator: &PaneitzOperator, u0: Field) -> Result<Self> {
        let pu0 = operator.apply(&u0)?.nodal().to_vec();
        Ok(Self {
            u: u0,
            t: 0.0,
            cumulative_st: 0.0,
            operator: operator.clone(),
            pu0: Arc::new(pu0),
        })
    }

    fn with(&self, u: Field, t: f64, cumulative_st: f64) -> Self {
        Self {
            u,
            t,
            cumulative_st,
            operator: self.operator.clone(),
            pu0: self.pu0.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub energy: f64,
    pub volume: f64,
    pub mu: f64,
    pub quotient: f64,
    pub min_u: f64,
    /// ‖f‖ / ‖u‖ in L².
    pub residual: f64,
    /// min over nodes of P u(t) - e^{-t} P u(0).
    pub lower_bound_slack: f64,
    pub cumulative_st: f64,
    pub l2_mass: f64,
}

fn volume_exponent(p: &PaneitzOperator) -> f64 {
    let n = p.disc().model().dim() as f64;
    2.0 * n / (n - 4.0)
}

fn volume_of(p: &PaneitzOperator, u: &Field) -> f64 {
    let q = volume_exponent(p);
    p.disc().integrate_nodal(&u.nodal_map(|x| x.abs().powf(q)))
}

/// μ = ∫uPu / ∫|u|^{2n/(n-4)}.
pub fn mu_of(p: &PaneitzOperator, u: &Field) -> Result<f64> {
    let v = volume_of(p, u);
    if !(v > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(p.w22_inner(u, u)? / v)
}

/// f = -u + μ P⁻¹(|u|^{(n+4)/(n-4)} sign u).
pub fn flow_rhs(p: &PaneitzOperator, u: &Field) -> Result<Field> {
    let mu = mu_of(p, u)?;
    let w = p.solve(&signed_critical_power(u)?)?;
    w.scale(mu).axpy(-1.0, u)
}

fn field(disc: &Arc<Discretization>, y: &[f64]) -> Result<Field> {
    Field::from_coeffs(disc, y[..disc.n_modes()].to_vec())
}

/// Derivative of (u coefficients, cumulative_st).
fn u_system(p: &PaneitzOperator, y: &[f64]) -> Result<Vec<f64>> {
    let u = field(p.disc(), y)?;
    let f = flow_rhs(p, &u)?;
    let mut d = f.coeffs().to_vec();
    d.push(p.w22_inner(&f, &f)?);
    Ok(d)
}

fn u_error_norm(tol: f64, modes: usize) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |y: &[f64], e: &[f64]| {
        let yn = y[..modes].iter().map(|v| v * v).sum::<f64>().sqrt();
        let en = e[..modes].iter().map(|v| v * v).sum::<f64>().sqrt();
        en / (tol * yn.max(f64::MIN_POSITIVE))
    }
}

pub fn monitor(state: &FlowState) -> Result<MonitorRecord> {
    let p = &state.operator;
    let u = &state.u;
    let energy = p.w22_inner(u, u)?;
    let volume = volume_of(p, u);
    let n = p.disc().model().dim() as f64;
    let f = flow_rhs(p, u)?;
    let pu = p.apply(u)?;
    let decay = (-state.t).exp();
    let lower_bound_slack = pu
        .nodal()
        .iter()
        .zip(state.pu0.iter())
        .map(|(a, b)| a - decay * b)
        .fold(f64::INFINITY, f64::min);
    let l2 = u.inner(u);
    Ok(MonitorRecord {
        t: state.t,
        energy,
        volume,
        mu: energy / volume,
        quotient: energy / volume.powf((n - 4.0) / n),
        min_u: u.min_nodal(),
        residual: f.l2_norm() / l2.sqrt(),
        lower_bound_slack,
        cumulative_st: state.cumulative_st,
        l2_mass: l2,
    })
}

fn check_positive(u: &Field, t: f64) -> Result<()> {
    let m = u.min_nodal();
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::PositivityLost { t, min_u: m })
    }
}

/// One accepted adaptive step starting with step size `dt_target`.
pub fn step(state: &FlowState, dt_target: f64, tol: f64) -> Result<(FlowState, MonitorRecord)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let p = state.operator.clone();
    let modes = p.disc().n_modes();
    let mut y = state.u.coeffs().to_vec();
    y.push(state.cumulative_st);
    let mut ode = Dopri5::new(|_t, y: &[f64]| u_system(&p, y), state.t, y, dt_target)?;
    ode.step(f64::INFINITY, u_error_norm(tol, modes))?;
    let u = field(p.disc(), &ode.y)?;
    check_positive(&u, ode.t)?;
    let next = state.with(u, ode.t, ode.y[modes]);
    let rec = monitor(&next)?;
    Ok((next, rec))
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub t_end: f64,
    pub tol: f64,
    /// Stop once ‖f‖/‖u‖ falls below this (0 disables).
    pub residual_threshold: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    pub keep_trajectory: bool,
}

impl FlowOptions {
    pub fn new(t_end: f64, tol: f64) -> Self {
        Self {
            t_end,
            tol,
            residual_threshold: DEFAULT_RESIDUAL_THRESHOLD,
            initial_step: 1e-2,
            max_steps: 1_000_000,
            keep_trajectory: false,
        }
    }
}

/// Dense coefficient trajectory of an integrated flow.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    segments: Vec<DenseSegment>,
}

impl Trajectory {
    pub fn t_range(&self) -> (f64, f64) {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => (a.t0, b.t1()),
            _ => (0.0, 0.0),
        }
    }

    fn segment(&self, t: f64) -> Option<&DenseSegment> {
        let i = self.segments.partition_point(|s| s.t1() < t);
        self.segments
            .get(i.min(self.segments.len().saturating_sub(1)))
    }

    /// State vector at time t (coefficients followed by auxiliary scalars).
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        self.segment(t).map(|s| s.eval(t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub rejected: usize,
    pub converged: bool,
    pub t_final: f64,
    pub final_residual: f64,
    pub energy_drift: f64,
    /// Largest relative decrease of the volume between consecutive records.
    pub max_volume_decrease: f64,
    pub max_mu_increase: f64,
    pub max_quotient_increase: f64,
    /// min over records of lower_bound_slack / max|P u|.
    pub min_relative_slack: f64,
    pub min_u: f64,
    /// max u(t) ≤ C' e^{C t}
    pub growth_prefactor: f64,
    pub growth_rate: f64,
    /// Measured floor for ∫u²: V(0)^{(n-4)/n} / sup_t (V^{(n-4)/n} / ∫u²).
    pub l2_floor: f64,
    pub min_l2_mass: f64,
    pub min_quotient: f64,
    pub max_volume: f64,
}

pub struct RunResult {
    pub records: Vec<MonitorRecord>,
    pub final_state: FlowState,
    pub summary: RunSummary,
    pub trajectory: Option<Trajectory>,
}

pub fn run(p: &PaneitzOperator, u0: &Field, t_end: f64, tol: f64) -> Result<RunResult> {
    run_with(p, u0, &FlowOptions::new(t_end, tol), |_| {})
}

/// Integrate until `t_end` or convergence, streaming each record to `emit`.
pub fn run_with(
    p: &PaneitzOperator,
    u0: &Field,
    opts: &FlowOptions,
    mut emit: impl FnMut(&MonitorRecord),
) -> Result<RunResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    let adm = crate::models::is_positivity_admissible(p.disc().model());
    if !adm.admissible {
        return Err(Error::Precondition(adm.explanation));
    }
    check_positive(u0, 0.0)?;
    let n = p.disc().model().dim() as f64;
    let modes = p.disc().n_modes();
    let mut state = FlowState::new(p, u0.clone())?;
    let mut records = vec![monitor(&state)?];
    emit(&records[0]);
    let mut y = u0.coeffs().to_vec();
    y.push(0.0);
    let mut ode = Dopri5::new(|_t, y: &[f64]| u_system(p, y), 0.0, y, opts.initial_step)?;
    let mut traj = Trajectory::default();
    let mut pu_scale = p.apply(u0)?.max_abs();
    let mut min_rel_slack = records[0].lower_bound_slack / pu_scale.max(f64::MIN_POSITIVE);
    let max_u0 = u0.max_nodal();
    let mut growth_rate: f64 = 0.0;
    let mut converged = records[0].residual <= opts.residual_threshold;
    while !converged && state.t < opts.t_end && ode.accepted < opts.max_steps {
        let seg = ode.step(opts.t_end, u_error_norm(opts.tol, modes))?;
        if opts.keep_trajectory {
            traj.segments.push(seg);
        }
        let u = field(p.disc(), &ode.y)?;
        check_positive(&u, ode.t)?;
        state = state.with(u, ode.t, ode.y[modes]);
        let rec = monitor(&state)?;
        pu_scale = p.apply(&state.u)?.max_abs();
        min_rel_slack = min_rel_slack.min(rec.lower_bound_slack / pu_scale);
        if state.t > 0.0 {
            growth_rate = growth_rate.max((state.u.max_nodal() / max_u0).ln() / state.t);
        }
        converged = rec.residual <= opts.residual_threshold;
        emit(&rec);
        records.push(rec);
    }
    let first = &records[0];
    let last = records.last().expect("initial record");
    let rel = |a: f64, b: f64| (a - b) / b.abs().max(f64::MIN_POSITIVE);
    let mut summary = RunSummary {
        steps: ode.accepted,
        rejected: ode.rejected,
        converged,
        t_final: state.t,
        final_residual: last.residual,
        energy_drift: records
            .iter()
            .map(|r| rel(r.energy, first.energy).abs())
            .fold(0.0, f64::max),
        max_volume_decrease: 0.0,
        max_mu_increase: 0.0,
        max_quotient_increase: 0.0,
        min_relative_slack: min_rel_slack,
        min_u: records
            .iter()
            .map(|r| r.min_u)
            .fold(f64::INFINITY, f64::min),
        growth_prefactor: max_u0,
        growth_rate,
        l2_floor: 0.0,
        min_l2_mass: records
            .iter()
            .map(|r| r.l2_mass)
            .fold(f64::INFINITY, f64::min),
        min_quotient: records
            .iter()
            .map(|r| r.quotient)
            .fold(f64::INFINITY, f64::min),
        max_volume: records.iter().map(|r| r.volume).fold(0.0, f64::max),
    };
    for w in records.windows(2) {
        summary.max_volume_decrease = summary
            .max_volume_decrease
            .max(rel(w[0].volume, w[1].volume));
        summary.max_mu_increase = summary.max_mu_increase.max(rel(w[1].mu, w[0].mu));
        summary.max_quotient_increase = summary
            .max_quotient_increase
            .max(rel(w[1].quotient, w[0].quotient));
    }
    let e = (n - 4.0) / n;
    let c_eps = records
        .iter()
        .map(|r| r.volume.powf(e) / r.l2_mass)
        .fold(0.0, f64::max);
    summary.l2_floor = first.volume.powf(e) / c_eps;
    Ok(RunResult {
        records,
        final_state: state,
        summary,
        trajectory: opts.keep_trajectory.then_some(traj),
    })
}

/// Upper bound (E / q₀)^{n/(n-4)} for the volume along a flow of energy E.
pub fn volume_upper_bound(energy: f64, q0: f64, n: usize) -> f64 {
    let n = n as f64;
    (energy / q0).powf(n / (n - 4.0))
}

/// ‖P u - μ̄ u^{(n+4)/(n-4)}‖ / ‖u‖ with μ̄ = μ(u).
pub fn endgame_residual(p: &PaneitzOperator, u: &Field) -> Result<f64> {
    let mu = mu_of(p, u)?;
    let pu = p.apply(u)?;
    let r = pu.axpy(-mu, &signed_critical_power(u)?)?;
    Ok(r.l2_norm() / u.l2_norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct RescaleReport {
    /// sup over sample times and nodes of |u(t) - e^{L} v(σ(t))|.
    pub discrepancy: f64,
    pub samples: usize,
    /// Number of renormalized v-segments used to cover [0, t_end].
    pub segments: usize,
    /// u-time reached by a single v-run before ν blows up.
    pub single_segment_window: f64,
    pub single_segment_discrepancy: f64,
    /// max relative mismatch between dV/dt by finite differences and
    /// (2n/(n-4)) μ⁻¹ ∫ f P f.
    pub dvdt_mismatch: f64,
}

/// v-run in the variable σ with auxiliary components T = t(σ) and L, so that
/// u(T) = e^L v. Renormalizes v whenever ν leaves [1/2, 2] if `renormalize`.
fn v_run(
    p: &PaneitzOperator,
    v0: &Field,
    t_end: f64,
    tol: f64,
    renormalize: bool,
) -> Result<(Vec<DenseSegment>, usize, f64)> {
    let modes = p.disc().n_modes();
    let pexp = critical_exponent(p.disc().model().dim());
    let rhs = |_s: f64, y: &[f64]| -> Result<Vec<f64>> {
        let v = field(p.disc(), y)?;
        let nu = mu_of(p, &v)?;
        let w = p.solve(&signed_critical_power(&v)?)?;
        let mut d = w.axpy(-1.0, &v)?.coeffs().to_vec();
        d.push(1.0 / nu);
        d.push(1.0 - 1.0 / nu);
        Ok(d)
    };
    let err = move |y: &[f64], e: &[f64]| {
        let yn = y[..modes].iter().map(|v| v * v).sum::<f64>().sqrt();
        let en = e[..modes].iter().map(|v| v * v).sum::<f64>().sqrt();
        let a = en / (tol * yn.max(f64::MIN_POSITIVE));
        let b = e[modes].abs() / (tol * (1.0 + y[modes].abs()));
        let c = e[modes + 1].abs() / (tol * (1.0 + y[modes + 1].abs()));
        a.max(b).max(c)
    };
    let mut y = v0.coeffs().to_vec();
    y.extend([0.0, 0.0]);
    let mut segs = Vec::new();
    let mut restarts = 1;
    let mut h = 1e-2;
    let mut sigma = 0.0;
    'outer: loop {
        let mut ode = Dopri5::new(rhs, sigma, y.clone(), h)?;
        loop {
            let seg = match ode.step(f64::INFINITY, err) {
                Ok(s) => s,
                Err(Error::StepUnderflow { .. }) if !renormalize => break 'outer,
                Err(e) => return Err(e),
            };
            segs.push(seg);
            let t_reached = ode.y[modes];
            if t_reached >= t_end {
                break 'outer;
            }
            let v = field(p.disc(), &ode.y)?;
            let nu = mu_of(p, &v)?;
            if !nu.is_finite() || nu > 1e12 {
                break 'outer;
            }
            if renormalize && !(0.5..=2.0).contains(&nu) {
                // exact symmetry: u = e^L v = e^{L - ln κ} (κ v)
                let kappa = nu.powf(1.0 / (pexp - 1.0));
                y = ode.y.clone();
                y[..modes].iter_mut().for_each(|c| *c *= kappa);
                y[modes + 1] -= kappa.ln();
                sigma = ode.t;
                h = ode.h;
                restarts += 1;
                continue 'outer;
            }
        }
    }
    let window = segs
        .last()
        .map(|s| s.eval_component(s.t1(), modes))
        .unwrap_or(0.0);
    Ok((segs, restarts, window))
}

/// Compare e^L v(σ(t)) against u(t) at `samples` uniform times in [0, t_max].
fn compare(
    disc: &Arc<Discretization>,
    traj: &Trajectory,
    segs: &[DenseSegment],
    t_max: f64,
    samples: usize,
) -> f64 {
    let modes = disc.n_modes();
    let mut worst: f64 = 0.0;
    for i in 0..=samples {
        let t = t_max * i as f64 / samples as f64;
        // T(σ) is increasing across segments
        let k = segs
            .partition_point(|s| s.eval_component(s.t1(), modes) < t)
            .min(segs.len() - 1);
        let s = &segs[k];
        let (mut lo, mut hi) = (s.t0, s.t1());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if s.eval_component(mid, modes) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = s.eval(0.5 * (lo + hi));
        let scale = y[modes + 1].exp();
        let via_v: Vec<f64> = y[..modes].iter().map(|c| c * scale).collect();
        let u = traj.eval(t).expect("trajectory covers the window");
        let a = disc.backward(&via_v);
        let b = disc.backward(&u[..modes]);
        worst = a
            .iter()
            .zip(&b)
            .fold(worst, |m, (x, y)| m.max((x - y).abs()));
    }
    worst
}

pub fn rescale_check(
    p: &PaneitzOperator,
    u0: &Field,
    t_end: f64,
    tol: f64,
) -> Result<RescaleReport> {
    let mut opts = FlowOptions::new(t_end, tol);
    opts.residual_threshold = 0.0;
    opts.keep_trajectory = true;
    let u_run = run_with(p, u0, &opts, |_| {})?;
    let traj = u_run.trajectory.expect("trajectory kept");
    let disc = p.disc();
    let samples = 200;
    let t_cover = traj.t_range().1.min(t_end);
    let (segs, segments, _) = v_run(p, u0, t_end, tol, true)?;
    let discrepancy = if t_cover > 0.0 {
        compare(disc, &traj, &segs, t_cover, samples)
    } else {
        0.0
    };
    let (single, _, window) = v_run(p, u0, t_end, tol, false)?;
    let w = window.min(t_cover);
    let single_segment_discrepancy = if w > 0.0 {
        compare(disc, &traj, &single, w, samples)
    } else {
        0.0
    };
    let dvdt_mismatch = dvdt_mismatch(p, &traj, t_cover)?;
    Ok(RescaleReport {
        discrepancy,
        samples: samples + 1,
        segments,
        single_segment_window: window,
        single_segment_discrepancy,
        dvdt_mismatch,
    })
}

/// Finite-difference dV/dt against (2n/(n-4)) μ⁻¹ ∫ f P f at interior times.
fn dvdt_mismatch(p: &PaneitzOperator, traj: &Trajectory, t_max: f64) -> Result<f64> {
    let disc = p.disc();
    let n = disc.model().dim() as f64;
    let mut worst: f64 = 0.0;
    if t_max <= 0.0 {
        return Ok(0.0);
    }
    let h = 1e-3 * t_max;
    for i in 1..10 {
        let t = t_max * i as f64 / 10.0;
        let at = |t: f64| field(disc, &traj.eval(t).expect("in range"));
        let (up, um, u) = (at(t + h)?, at(t - h)?, at(t)?);
        let fd = (volume_of(p, &up) - volume_of(p, &um)) / (2.0 * h);
        let f = flow_rhs(p, &u)?;
        let rate = 2.0 * n / (n - 4.0) / mu_of(p, &u)? * p.w22_inner(&f, &f)?;
        let scale = rate.abs().max(1e-8 * volume_of(p, &u));
        worst = worst.max((fd - rate).abs() / scale);
    }
    Ok(worst)
}
