//! Lagrangian side: characteristic paths, the scalar e-ODE with blow-up
//! detection, the Riemann invariant and the exact pressureless solution.

use serde::Serialize;

use crate::closures::{eval_closure, ClosureSpec};
use crate::error::{LabError, Result};
use crate::grid::{Boundary, HistoryFrame};
use crate::ode::{StepControl, Stepper};
use crate::profile::ProfileSpec;
use crate::quadrature;

/// Sign-scan resolution before any quadrature of `1/(f(xi) - xi)`.
pub const SIGN_SCAN: usize = 512;

/// `e` below `-1/BLOWUP_DELTA` counts as blow-up.
pub const BLOWUP_DELTA: f64 = 1e-8;

/// Path integration tolerance (absolute plus relative).
pub const PATH_TOL: f64 = 1e-8;

fn sign_scan(spec: &ClosureSpec, from: f64, to: f64) -> Result<()> {
    let (a, b) = (from.min(to), from.max(to));
    let first = spec.gap(a);
    for i in 0..SIGN_SCAN {
        let xi = a + (b - a) * i as f64 / (SIGN_SCAN - 1) as f64;
        let g = spec.gap(xi);
        if g == 0.0 || g.signum() != first.signum() || !g.is_finite() {
            return Err(LabError::SignChange { from, to });
        }
    }
    Ok(())
}

fn require_f_of_u(spec: &ClosureSpec) -> Result<()> {
    if spec.is_rho_independent() {
        Ok(())
    } else {
        Err(LabError::InvalidData(
            "the Riemann integrating factor needs f independent of rho".into(),
        ))
    }
}

/// `exp(∫_{u_ref}^{u} dxi / (f(xi) - xi))`.
pub fn quadrature_phi_factor(spec: &ClosureSpec, u_ref: f64, u: f64, tol: f64) -> Result<f64> {
    require_f_of_u(spec)?;
    sign_scan(spec, u_ref, u)?;
    if u == u_ref {
        return Ok(1.0);
    }
    let (v, _) = quadrature::integrate(|xi| 1.0 / spec.gap(xi), u_ref, u, tol);
    let factor = v.exp();
    if factor.is_finite() && factor > 0.0 {
        Ok(factor)
    } else {
        Err(LabError::SignChange { from: u_ref, to: u })
    }
}

/// `R = rho * factor(u_ref -> u) * (f(u) - u)`.
pub fn riemann_r(spec: &ClosureSpec, rho: f64, u: f64, u_ref: f64, tol: f64) -> Result<f64> {
    let factor = quadrature_phi_factor(spec, u_ref, u, tol)?;
    Ok(rho * factor * spec.gap(u))
}

/// Tabulated `ln factor` for evaluating `R` on whole grids.
///
/// Nodes are placed adaptively between `u_ref` and the requested ends (cut
/// just short of any root of `f(u) - u`), with node values from
/// [`quadrature::integrate`] and cubic Hermite interpolation using the exact
/// slope `1/(f - u)`. Queries outside the table fall back to direct
/// quadrature.
#[derive(Clone, Debug)]
pub struct RiemannTable {
    spec: ClosureSpec,
    pub u_ref: f64,
    nodes: Vec<(f64, f64)>,
    tol: f64,
    // nearest roots of f(u) - u beyond each end of the table
    roots: (Option<f64>, Option<f64>),
}

const TABLE_START: usize = 32;
const TABLE_TOL: f64 = 1e-11;
const TABLE_MAX_NODES: usize = 20_000;

fn hermite(spec: &ClosureSpec, a: (f64, f64), b: (f64, f64), u: f64) -> f64 {
    let h = b.0 - a.0;
    let tau = (u - a.0) / h;
    let (d0, d1) = (h / spec.gap(a.0), h / spec.gap(b.0));
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (2.0 * t3 - 3.0 * t2 + 1.0) * a.1 + (t3 - 2.0 * t2 + tau) * d0 + (-2.0 * t3 + 3.0 * t2) * b.1 + (t3 - t2) * d1
}

impl RiemannTable {
    pub fn new(spec: &ClosureSpec, u_ref: f64, lo: f64, hi: f64, tol: f64) -> Result<Self> {
        require_f_of_u(spec)?;
        let g_ref = spec.gap(u_ref);
        if g_ref == 0.0 || !g_ref.is_finite() {
            return Err(LabError::SignChange { from: u_ref, to: u_ref });
        }
        let (lo, hi) = (lo.min(u_ref), hi.max(u_ref));
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        let roots = match crate::closures::find_sigma(spec, lo - pad, hi + pad, 1e-14) {
            Ok(r) => r.into_iter().map(|r| r.u).collect(),
            Err(LabError::EmptySigma { .. }) => Vec::new(),
            Err(e) => return Err(e),
        };
        let below = roots
            .iter()
            .copied()
            .filter(|r| *r < u_ref)
            .fold(f64::NEG_INFINITY, f64::max);
        let above = roots
            .iter()
            .copied()
            .filter(|r| *r > u_ref)
            .fold(f64::INFINITY, f64::min);
        let lo = lo.max(below + pad);
        let hi = hi.min(above - pad);
        let mut nodes = vec![(u_ref, 0.0)];
        for end in [lo, hi] {
            if end == u_ref {
                continue;
            }
            let mut prev = (u_ref, 0.0);
            for k in 1..=TABLE_START {
                let b = u_ref + (end - u_ref) * k as f64 / TABLE_START as f64;
                Self::refine(spec, prev, b, tol, &mut nodes, 0)?;
                prev = *nodes.last().expect("pushed by refine");
            }
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(RiemannTable {
            spec: spec.clone(),
            u_ref,
            nodes,
            tol,
            roots: (
                Some(below).filter(|r| r.is_finite()),
                Some(above).filter(|r| r.is_finite()),
            ),
        })
    }

    fn refine(
        spec: &ClosureSpec,
        a: (f64, f64),
        b: f64,
        tol: f64,
        nodes: &mut Vec<(f64, f64)>,
        depth: u32,
    ) -> Result<()> {
        let inv = |xi: f64| 1.0 / spec.gap(xi);
        let m = 0.5 * (a.0 + b);
        let ln_b = a.1 + quadrature::integrate(inv, a.0, b, 1e-3 * TABLE_TOL).0;
        let ln_m = a.1 + quadrature::integrate(inv, a.0, m, 1e-3 * TABLE_TOL).0;
        if !ln_b.is_finite() {
            return Err(LabError::SignChange { from: a.0, to: b });
        }
        let err = (hermite(spec, a, (b, ln_b), m) - ln_m).abs();
        if err <= TABLE_TOL.max(tol * 1e-2) || depth >= 48 || nodes.len() >= TABLE_MAX_NODES {
            nodes.push((b, ln_b));
            return Ok(());
        }
        Self::refine(spec, a, m, tol, nodes, depth + 1)?;
        Self::refine(spec, (m, ln_m), b, tol, nodes, depth + 1)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.nodes[0].0 && u <= self.nodes[self.nodes.len() - 1].0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn factor(&self, u: f64) -> Result<f64> {
        let (first, last) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        let edge = match self.roots {
            (_, Some(r)) if u > last.0 && u < r => Some(last),
            (Some(r), _) if u < first.0 && u > r => Some(first),
            _ => None,
        };
        if let Some(node) = edge {
            // between the end node and the root g is linear to rounding accuracy
            let slope = self.spec.f_u(0.0, node.0) - 1.0;
            let ratio = self.spec.gap(u) / self.spec.gap(node.0);
            if slope != 0.0 && ratio > 0.0 {
                return Ok((node.1 + ratio.ln() / slope).exp());
            }
        }
        if !self.contains(u) || self.nodes.len() < 2 {
            return quadrature_phi_factor(&self.spec, self.u_ref, u, self.tol);
        }
        let k = self.nodes.partition_point(|n| n.0 <= u).clamp(1, self.nodes.len() - 1);
        Ok(hermite(&self.spec, self.nodes[k - 1], self.nodes[k], u).exp())
    }

    pub fn riemann(&self, rho: f64, u: f64) -> Result<f64> {
        Ok(rho * self.factor(u)? * self.spec.gap(u))
    }
}

/// Point values of the fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldSample {
    pub rho: f64,
    pub u: f64,
    pub e: f64,
}

/// Space-time extent over which a provider answers queries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coverage {
    pub t_max: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub periodic: bool,
}

/// Read-only sampler of `(rho, u, e)`; safe for concurrent queries.
pub trait FieldProvider: Send + Sync {
    fn sample(&self, t: f64, x: f64) -> Result<FieldSample>;

    fn coverage(&self) -> Coverage;

    /// Time at which the underlying solution stopped being classical, if known.
    fn blowup_time(&self) -> Option<f64> {
        None
    }
}

/// Stored grid frames interpolated bilinearly in `(t, x)`.
#[derive(Clone, Debug)]
pub struct FieldHistory {
    frames: Vec<HistoryFrame>,
    x_lo: f64,
    x_hi: f64,
    dx: f64,
    periodic: bool,
    blowup: Option<f64>,
}

impl FieldHistory {
    pub fn new(
        frames: Vec<HistoryFrame>,
        x_lo: f64,
        x_hi: f64,
        boundary: Boundary,
        blowup: Option<f64>,
    ) -> Result<Self> {
        let n = frames.first().map(|f| f.rho.len()).unwrap_or(0);
        if n < 2
            || frames
                .iter()
                .any(|f| f.rho.len() != n || f.u.len() != n || f.e.len() != n)
        {
            return Err(LabError::InvalidData(
                "field history needs aligned frames of >= 2 cells".into(),
            ));
        }
        if frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(LabError::InvalidData("field history times must increase".into()));
        }
        Ok(FieldHistory {
            dx: (x_hi - x_lo) / n as f64,
            frames,
            x_lo,
            x_hi,
            periodic: boundary == Boundary::Periodic,
            blowup,
        })
    }

    fn cells(&self) -> usize {
        self.frames[0].rho.len()
    }

    /// Linear interpolation in x on one frame. Returns `(rho, u, e)`.
    fn at_x(&self, frame: &HistoryFrame, x: f64) -> FieldSample {
        let n = self.cells();
        let s = (x - self.x_lo) / self.dx - 0.5;
        let (i0, i1, w) = if self.periodic {
            let base = s.floor();
            let w = s - base;
            let i0 = (base as i64).rem_euclid(n as i64) as usize;
            (i0, (i0 + 1) % n, w)
        } else if s <= 0.0 {
            (0, 0, 0.0)
        } else if s >= (n - 1) as f64 {
            (n - 1, n - 1, 0.0)
        } else {
            let base = s.floor();
            (base as usize, base as usize + 1, s - base)
        };
        let lerp = |v: &[f64]| v[i0] * (1.0 - w) + v[i1] * w;
        FieldSample {
            rho: lerp(&frame.rho),
            u: lerp(&frame.u),
            e: lerp(&frame.e),
        }
    }
}

impl FieldProvider for FieldHistory {
    fn sample(&self, t: f64, x: f64) -> Result<FieldSample> {
        let t_first = self.frames[0].t;
        let t_last = self.frames[self.frames.len() - 1].t;
        let outside_x = !self.periodic && (x < self.x_lo || x > self.x_hi);
        if !(t >= t_first && t <= t_last) || outside_x || !x.is_finite() {
            return Err(LabError::OutOfCoverage { t, x });
        }
        let k = self.frames.partition_point(|f| f.t <= t);
        if k >= self.frames.len() {
            return Ok(self.at_x(&self.frames[self.frames.len() - 1], x));
        }
        let (f0, f1) = (&self.frames[k - 1], &self.frames[k]);
        let w = (t - f0.t) / (f1.t - f0.t);
        let a = self.at_x(f0, x);
        let b = self.at_x(f1, x);
        Ok(FieldSample {
            rho: a.rho * (1.0 - w) + b.rho * w,
            u: a.u * (1.0 - w) + b.u * w,
            e: a.e * (1.0 - w) + b.e * w,
        })
    }

    fn coverage(&self) -> Coverage {
        Coverage {
            t_max: self.frames[self.frames.len() - 1].t,
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            periodic: self.periodic,
        }
    }

    fn blowup_time(&self) -> Option<f64> {
        self.blowup
    }
}

/// Result of following one Lagrangian label in the pressureless solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PressurelessPoint {
    Point { x: f64, rho: f64, u_x: f64 },
    BlowupAt(f64),
}

/// Closed-form pressureless solution along `x = alpha + u0(alpha) t`.
pub fn pressureless_exact(rho0: &ProfileSpec, u0: &ProfileSpec, alpha: f64, t: f64) -> PressurelessPoint {
    let g = u0.d1(alpha);
    let j = 1.0 + g * t;
    if j <= 0.0 {
        return PressurelessPoint::BlowupAt(-1.0 / g);
    }
    PressurelessPoint::Point {
        x: alpha + u0.value(alpha) * t,
        rho: rho0.value(alpha) / j,
        u_x: g / j,
    }
}

/// Exact pressureless fields as a [`FieldProvider`], valid up to the first
/// crossing of characteristics.
#[derive(Clone, Debug)]
pub struct PressurelessOracle {
    pub rho0: ProfileSpec,
    pub u0: ProfileSpec,
    t_c: f64,
    u_sup: f64,
}

impl PressurelessOracle {
    pub fn new(rho0: ProfileSpec, u0: ProfileSpec) -> Self {
        let g_min = u0.d1_range().inf;
        let t_c = if g_min < 0.0 { -1.0 / g_min } else { f64::INFINITY };
        let u_sup = u0.sup_abs();
        PressurelessOracle { rho0, u0, t_c, u_sup }
    }

    /// Lagrangian label whose characteristic passes through `x` at time `t`.
    pub fn label(&self, t: f64, x: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.t_c) || !x.is_finite() {
            return Err(LabError::OutOfCoverage { t, x });
        }
        if t == 0.0 {
            return Ok(x);
        }
        let map = |a: f64| a + self.u0.value(a) * t - x;
        let reach = if self.u_sup.is_finite() {
            self.u_sup * t + 1.0
        } else {
            return Err(LabError::InvalidData("oracle needs bounded u0".into()));
        };
        let (mut lo, mut hi) = (x - reach, x + reach);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if map(m) < 0.0 {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl FieldProvider for PressurelessOracle {
    fn sample(&self, t: f64, x: f64) -> Result<FieldSample> {
        let alpha = self.label(t, x)?;
        match pressureless_exact(&self.rho0, &self.u0, alpha, t) {
            PressurelessPoint::Point { rho, u_x, .. } => Ok(FieldSample {
                rho,
                u: self.u0.value(alpha),
                e: u_x + rho,
            }),
            PressurelessPoint::BlowupAt(_) => Err(LabError::OutOfCoverage { t, x }),
        }
    }

    fn coverage(&self) -> Coverage {
        Coverage {
            t_max: self.t_c,
            x_lo: f64::NEG_INFINITY,
            x_hi: f64::INFINITY,
            periodic: false,
        }
    }

    fn blowup_time(&self) -> Option<f64> {
        self.t_c.is_finite().then_some(self.t_c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathKind {
    /// Speed `u`.
    XPath,
    /// Speed `lambda1 = rho f_rho + f`.
    YPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub t: f64,
    pub x: f64,
    pub rho: f64,
    pub u: f64,
    pub e: f64,
    pub r: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Termination {
    ReachedT,
    BlowupDetected(f64),
    LeftDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathTrace {
    pub kind: PathKind,
    pub origin: f64,
    pub samples: Vec<PathSample>,
    pub terminated: Termination,
}

impl PathTrace {
    /// `(t, rho)` pairs for [`integrate_e_ode`].
    pub fn rho_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.rho)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions<'a> {
    pub dt_max: f64,
    pub tol: f64,
    pub riemann: Option<&'a RiemannTable>,
}

impl Default for TraceOptions<'_> {
    fn default() -> Self {
        TraceOptions {
            dt_max: 0.05,
            tol: PATH_TOL,
            riemann: None,
        }
    }
}

fn wrap(x: f64, cov: &Coverage) -> f64 {
    if cov.periodic {
        cov.x_lo + (x - cov.x_lo).rem_euclid(cov.x_hi - cov.x_lo)
    } else {
        x
    }
}

/// Follows a characteristic from `x0` at `t = 0` up to `t_end`.
///
/// Integration stops early at the provider's blow-up time (reported as
/// `BlowupDetected`) or when the path leaves the stored space-time domain
/// (`LeftDomain`). Positions are reported unwrapped for periodic fields.
pub fn trace_path(
    fields: &dyn FieldProvider,
    spec: &ClosureSpec,
    x0: f64,
    kind: PathKind,
    t_end: f64,
    opts: &TraceOptions,
) -> Result<PathTrace> {
    if !(opts.dt_max > 0.0) || !(t_end >= 0.0) {
        return Err(LabError::InvalidData("trace needs dt_max > 0 and t_end >= 0".into()));
    }
    let cov = fields.coverage();
    let mut stop = t_end.min(cov.t_max);
    let mut cause = if t_end <= cov.t_max {
        Termination::ReachedT
    } else {
        Termination::LeftDomain
    };
    if let Some(tb) = fields.blowup_time() {
        if tb <= stop {
            stop = tb;
            cause = Termination::BlowupDetected(tb);
        }
    }
    let record = |t: f64, x: f64| -> Result<PathSample> {
        let s = fields.sample(t, wrap(x, &cov))?;
        let r = match opts.riemann {
            Some(table) => table.riemann(s.rho.max(0.0), s.u).ok(),
            None => None,
        };
        Ok(PathSample {
            t,
            x,
            rho: s.rho,
            u: s.u,
            e: s.e,
            r,
        })
    };
    let mut trace = PathTrace {
        kind,
        origin: x0,
        samples: vec![record(0.0, x0)?],
        terminated: cause,
    };
    let mut speed = |t: f64, x: f64| -> Result<f64> {
        let s = fields.sample(t, wrap(x, &cov))?;
        match kind {
            PathKind::XPath => Ok(s.u),
            PathKind::YPath => Ok(eval_closure(spec, s.rho.max(0.0), s.u)?.lambda1),
        }
    };
    let mut stepper = Stepper::new(0.0, x0, StepControl::new(opts.tol, opts.dt_max));
    while stepper.t < stop {
        let sampled = stepper
            .step(&mut speed, stop, f64::INFINITY)
            .and_then(|_| record(stepper.t, stepper.y));
        match sampled {
            Ok(s) => trace.samples.push(s),
            Err(LabError::OutOfCoverage { x, .. }) => {
                // hitting the blow-up wall inside the spatial domain keeps the
                // blow-up label; anything else means the path left
                let inside = cov.periodic || (x >= cov.x_lo && x <= cov.x_hi);
                if !(inside && matches!(cause, Termination::BlowupDetected(_))) {
                    trace.terminated = Termination::LeftDomain;
                }
                return Ok(trace);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EOdeBlowup {
    pub t_c_numeric: f64,
    /// `-1/e(0)`
    pub t_c_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EOdeResult {
    pub samples: Vec<(f64, f64)>,
    pub blowup: Option<EOdeBlowup>,
}

fn rho_at(series: &[(f64, f64)], t: f64) -> f64 {
    let k = series.partition_point(|s| s.0 <= t);
    if k == 0 {
        return series[0].1;
    }
    if k >= series.len() {
        return series[series.len() - 1].1;
    }
    let (a, b) = (series[k - 1], series[k]);
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

/// Integrates `de/dt = -e (e - rho(t))` with `rho` interpolated linearly
/// from `rho_on_path`. Below `e = -1` the variable `w = 1/e` is integrated
/// instead (`dw/dt = 1 - rho w`), so the pole becomes a simple zero of `w`.
pub fn integrate_e_ode(rho_on_path: &[(f64, f64)], e0: f64, t_end: f64, tol: f64) -> Result<EOdeResult> {
    if rho_on_path.is_empty() || !e0.is_finite() || !(t_end >= 0.0) || !(tol > 0.0) {
        return Err(LabError::InvalidData(
            "e-ODE needs a rho series, finite e0, t_end >= 0".into(),
        ));
    }
    let t0 = rho_on_path[0].0;
    let mut out = EOdeResult {
        samples: vec![(t0, e0)],
        blowup: None,
    };
    let t_c_bound = if e0 < 0.0 { -1.0 / e0 } else { f64::INFINITY };
    let h_max = (t_end - t0).max(1e-12) / 50.0;
    let mut inverted = e0 < -1.0;
    let mut stepper = Stepper::new(t0, if inverted { 1.0 / e0 } else { e0 }, StepControl::new(tol, h_max));
    let mut rhs_e = |t: f64, e: f64| Ok(-e * (e - rho_at(rho_on_path, t)));
    let mut rhs_w = |t: f64, w: f64| Ok(1.0 - rho_at(rho_on_path, t) * w);
    while stepper.t < t_end {
        if inverted {
            let w = stepper.y;
            stepper.step(&mut rhs_w, t_end, 0.25 * w.abs())?;
            let w = stepper.y;
            out.samples.push((stepper.t, 1.0 / w));
            if w >= -BLOWUP_DELTA {
                let slope = 1.0 - rho_at(rho_on_path, stepper.t) * w;
                out.blowup = Some(EOdeBlowup {
                    t_c_numeric: stepper.t - w / slope,
                    t_c_bound,
                });
                return Ok(out);
            }
        } else {
            stepper.step(&mut rhs_e, t_end, f64::INFINITY)?;
            let e = stepper.y;
            if !e.is_finite() {
                return Err(LabError::NonFinite { t: stepper.t, cell: 0 });
            }
            out.samples.push((stepper.t, e));
            if e < -1.0 {
                inverted = true;
                stepper.reset(stepper.t, 1.0 / e);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub t_c_fit: f64,
    pub exponent: f64,
    pub n_used: usize,
}

/// Window threshold and minimum size for [`estimate_blowup_rate`].
pub const RATE_THRESHOLD: f64 = -10.0;
pub const RATE_MIN_SAMPLES: usize = 8;

/// Least squares of `log|e|` against `log(t_c - t)` over the samples with
/// `e < -10`, minimising the residual over `t_c` as well.
pub fn estimate_blowup_rate(samples: &[(f64, f64)]) -> Result<RateFit> {
    let window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(_, e)| e < RATE_THRESHOLD && e.is_finite())
        .collect();
    if window.len() < RATE_MIN_SAMPLES {
        return Err(LabError::InsufficientSamples {
            needed: RATE_MIN_SAMPLES,
            got: window.len(),
        });
    }
    let t_last = window.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let t_first = window.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let span = (t_last - t_first).max(1e-300);
    let fit = |delta: f64| -> (f64, f64) {
        let tc = t_last + delta;
        let n = window.len() as f64;
        let pts: Vec<(f64, f64)> = window.iter().map(|&(t, e)| ((tc - t).ln(), e.abs().ln())).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (rss, -slope)
    };
    // scan log(delta) then refine by golden section
    let (lo, hi) = ((span * 1e-12).ln(), (span * 1e3).ln());
    let m = 400;
    let grid: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| fit(a.exp()).0.total_cmp(&fit(b.exp()).0))
        .expect("nonempty grid");
    let step = (hi - lo) / m as f64;
    let (mut a, mut b) = (best - step, best + step);
    let r = 0.5 * (5.0f64.sqrt() - 1.0);
    for _ in 0..120 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if fit(c.exp()).0 <= fit(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let log_delta = 0.5 * (a + b);
    let (_, exponent) = fit(log_delta.exp());
    Ok(RateFit {
        t_c_fit: t_last + log_delta.exp(),
        exponent,
        n_used: window.len(),
    })
}
