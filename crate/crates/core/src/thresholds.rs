//! Classification of initial data, closed-form a-priori bounds and the
//! post-run invariant audit.

use serde::{Deserialize, Serialize};

use crate::characteristics::{quadrature_phi_factor, EOdeResult, PathTrace, RiemannTable};
use crate::closures::{check_structure, equilibrium_phi_auto, find_sigma, ClosureSpec, StateBox, StructureReport};
use crate::error::{LabError, Result};
use crate::grid::{Mode, RunResult, RunTermination};
pub use crate::profile::ProfileSpec;
use crate::profile::{combined_extrema, composed_extrema, e0_extrema, e0x_extrema, rho0x_extrema, Extrema};

/// Slack allowed when certifying a sign from sampled values.
const SIGN_SLACK: f64 = 1e-12;
/// Quadrature tolerance for bounds.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `f = f(u)` with `f(u0) - u0` bounded away from zero.
    Thm1Strict,
    /// `f = f(u)` otherwise.
    Thm2Weak,
    /// `f = f(rho, u)`.
    Thm3General,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Outcome {
    Global,
    Blowup { tc_upper: f64, witness_x: f64 },
    Indeterminate { failed: Vec<String> },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Global => "Global",
            Outcome::Blowup { .. } => "Blowup",
            Outcome::Indeterminate { .. } => "Indeterminate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub satisfied: bool,
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdVerdict {
    pub branch: Branch,
    pub outcome: Outcome,
    pub hypothesis_log: Vec<Hypothesis>,
    pub e0_min: f64,
    pub e0_argmin: f64,
    /// `f_u <= 0` certified on the a-priori box.
    pub fu_certified: bool,
}

impl ThresholdVerdict {
    fn hypothesis(&self, name: &str) -> bool {
        self.hypothesis_log.iter().any(|h| h.name == name && h.satisfied)
    }
}

/// `max{sup rho0, sup (u0' + rho0)}`.
pub fn compute_m(rho0: &ProfileSpec, u0: &ProfileSpec) -> f64 {
    rho0.range().sup.max(e0_extrema(rho0, u0).max)
}

fn bounded_range(p: &ProfileSpec) -> Result<(f64, f64)> {
    let r = p.range();
    if r.inf.is_finite() && r.sup.is_finite() {
        Ok((r.inf, r.sup))
    } else {
        Err(LabError::InvalidData(format!("profile {p:?} is unbounded")))
    }
}

/// Velocity bounds preserved by the flow.
///
/// For `f = f(u)` each root of `f(u) = u` is a barrier for `du/dt = rho (f - u)`,
/// so the bound uses the nearest roots bracketing the range of `u0`; a side
/// with no root in reach is kept only when the outermost root is stable.
/// For `f = f(rho, u)` the equilibrium curve on `[0, M]` replaces the roots.
pub fn u_bounds(spec: &ClosureSpec, rho0: &ProfileSpec, u0: &ProfileSpec) -> Result<(f64, f64)> {
    let (inf, sup) = bounded_range(u0)?;
    let span = sup - inf;
    if spec.is_rho_independent() {
        let mut width = 10.0 * (1.0 + span);
        let roots = loop {
            match find_sigma(spec, inf - width, sup + width, 1e-12) {
                Ok(r) => break r,
                Err(LabError::EmptySigma { .. }) if width < 1e4 => width *= 10.0,
                Err(e) => return Err(e),
            }
        };
        let below = roots.iter().rfind(|r| r.u <= inf);
        let above = roots.iter().find(|r| r.u >= sup);
        let lo = match below {
            Some(r) => r.u,
            None if roots[0].stable => inf,
            None => {
                return Err(LabError::HypothesisFailed(vec![format!(
                    "smallest root {} of f(u)=u is unstable",
                    roots[0].u
                )]))
            }
        };
        let last = roots[roots.len() - 1];
        let hi = match above {
            Some(r) => r.u,
            None if last.stable => sup,
            None => {
                return Err(LabError::HypothesisFailed(vec![format!(
                    "largest root {} of f(u)=u is unstable",
                    last.u
                )]))
            }
        };
        Ok((lo.min(inf), hi.max(sup)))
    } else {
        let m = compute_m(rho0, u0);
        let pad = 1.0 + span;
        let curve = equilibrium_phi_auto(spec, m.max(0.0), (inf - pad, sup + pad), QUAD_TOL, 10_000)?;
        let (lo, hi) = curve.range();
        Ok((inf.min(lo), sup.max(hi)))
    }
}

/// `sup rho0 |g(u0(x))| / (factor(u0(x) -> u_now) |g(u_now)|)` with `g = f - u`.
pub fn rho_pointwise_bound(
    spec: &ClosureSpec,
    rho0: &ProfileSpec,
    u0: &ProfileSpec,
    u_now: f64,
    x: f64,
    tol: f64,
) -> Result<f64> {
    if !spec.is_rho_independent() {
        return Err(LabError::HypothesisFailed(vec!["f independent of rho".into()]));
    }
    let inf_gap = composed_extrema(u0, |u| spec.gap(u).abs()).min;
    if !(inf_gap > SIGN_SLACK) {
        return Err(LabError::HypothesisFailed(vec!["inf|f(u0)-u0| > 0".into()]));
    }
    let u_start = u0.value(x);
    let factor = quadrature_phi_factor(spec, u_start, u_now, tol)?;
    let ratio = spec.gap(u_start).abs() / spec.gap(u_now).abs();
    Ok(rho0.range().sup * ratio / factor)
}

/// `(beta, gamma)` of the growth envelope `beta exp(gamma t)` for `|rho_x|`.
pub fn rhox_envelope(spec: &ClosureSpec, rho0: &ProfileSpec, u0: &ProfileSpec) -> Result<(f64, f64)> {
    let mut failed = Vec::new();
    if !spec.is_rho_independent() {
        failed.push("f independent of rho".to_string());
    }
    let e0 = e0_extrema(rho0, u0);
    if !(e0.min >= -SIGN_SLACK) {
        failed.push(format!("u0x + rho0 >= 0 (min {})", e0.min));
    }
    let m = compute_m(rho0, u0);
    let c2 = match u_bounds(spec, rho0, u0) {
        Ok((lo, hi)) => {
            let rep = check_structure(
                spec,
                StateBox {
                    rho_max: m.max(0.0),
                    u_min: lo,
                    u_max: hi,
                },
            )?;
            if !rep.fu_nonpositive {
                failed.push(format!("f_u <= 0 on box (max {})", rep.fu_max));
            }
            rep.c2_norm
        }
        Err(e) => {
            failed.push(format!("u bounds: {e}"));
            f64::NAN
        }
    };
    if !failed.is_empty() {
        return Err(LabError::HypothesisFailed(failed));
    }
    Ok(envelope_constants(rho0, u0, m, c2))
}

fn envelope_constants(rho0: &ProfileSpec, u0: &ProfileSpec, m: f64, c2: f64) -> (f64, f64) {
    let beta = 1.0 + rho0.sup_abs_d1() + u0.sup_abs_d2() + rho0.sup_abs();
    let gamma = 12.0 * (c2 + 1.0) * m.powi(3).max(1.0);
    (beta, gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    #[serde(rename = "M")]
    pub m: f64,
    pub u_lo: Option<f64>,
    pub u_hi: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub envelope_failures: Vec<String>,
    pub c2_norm: Option<f64>,
    pub strict_hyperbolic: bool,
    pub inf_gap: Option<f64>,
    /// Reference velocity of the integrating factor in `R`.
    pub u_ref: Option<f64>,
    pub inf_r0: Option<f64>,
    pub sup_abs_r0: Option<f64>,
    pub structure: Option<StructureReport>,
}

/// All closed-form bounds that apply to the data; missing pieces are `None`.
pub fn compute_bounds(spec: &ClosureSpec, rho0: &ProfileSpec, u0: &ProfileSpec) -> Result<BoundsReport> {
    let m = compute_m(rho0, u0);
    let ub = u_bounds(spec, rho0, u0).ok();
    let structure = match ub {
        Some((lo, hi)) => Some(check_structure(
            spec,
            StateBox {
                rho_max: m.max(0.0),
                u_min: lo,
                u_max: hi,
            },
        )?),
        None => None,
    };
    let (beta, gamma, envelope_failures) = match rhox_envelope(spec, rho0, u0) {
        Ok((b, g)) => (Some(b), Some(g), Vec::new()),
        Err(LabError::HypothesisFailed(f)) => (None, None, f),
        Err(e) => return Err(e),
    };
    let mut rep = BoundsReport {
        m,
        u_lo: ub.map(|b| b.0),
        u_hi: ub.map(|b| b.1),
        beta,
        gamma,
        envelope_failures,
        c2_norm: structure.as_ref().map(|s| s.c2_norm),
        strict_hyperbolic: false,
        inf_gap: None,
        u_ref: None,
        inf_r0: None,
        sup_abs_r0: None,
        structure,
    };
    if spec.is_rho_independent() {
        let inf_gap = composed_extrema(u0, |u| spec.gap(u).abs()).min;
        rep.inf_gap = Some(inf_gap);
        rep.strict_hyperbolic = inf_gap > SIGN_SLACK;
        if rep.strict_hyperbolic {
            let (lo, hi) = bounded_range(u0)?;
            let u_ref = 0.5 * (lo + hi);
            let table = RiemannTable::new(spec, u_ref, lo, hi, QUAD_TOL)?;
            let r0 = combined_extrema(&[*rho0, *u0], 0.0, |x| {
                table.riemann(rho0.value(x), u0.value(x)).unwrap_or(f64::NAN)
            });
            rep.u_ref = Some(u_ref);
            rep.inf_r0 = Some(r0.min);
            rep.sup_abs_r0 = Some(r0.min.abs().max(r0.max.abs()));
        }
    }
    Ok(rep)
}

/// Riemann table covering the velocity range the run can reach.
pub fn riemann_table_for(spec: &ClosureSpec, bounds: &BoundsReport) -> Option<RiemannTable> {
    let u_ref = bounds.u_ref?;
    let (lo, hi) = (bounds.u_lo?, bounds.u_hi?);
    RiemannTable::new(spec, u_ref, lo, hi, QUAD_TOL).ok()
}

fn entry(name: &str, satisfied: bool, witness: String) -> Hypothesis {
    Hypothesis {
        name: name.to_string(),
        satisfied,
        witness,
    }
}

pub const H_RHO0: &str = "rho0 >= 0";
pub const H_REGULAR: &str = "initial data bounded with bounded derivatives";
pub const H_F_OF_U: &str = "f independent of rho";
pub const H_STRICT: &str = "inf|f(u0)-u0| > 0";
pub const H_U_BOUNDED: &str = "u bounds available";
pub const H_FU: &str = "f_u <= 0 on a-priori box";
pub const H_E0_NONNEG: &str = "u0x + rho0 >= 0 everywhere";
pub const H_E0_NEG: &str = "exists x0 with u0x + rho0 < 0";
pub const H_BULLET_A: &str = "(rho f)_rhorho >= 0, f_uu <= 0, rho0x >= 0, u0xx + rho0x >= 0";
pub const H_BULLET_B: &str = "(rho f)_rhorho <= 0, f_uu >= 0, rho0x <= 0, u0xx + rho0x <= 0";

/// Chooses the branch (unless forced) and decides the outcome.
pub fn classify(
    spec: &ClosureSpec,
    rho0: &ProfileSpec,
    u0: &ProfileSpec,
    forced: Option<Branch>,
) -> Result<ThresholdVerdict> {
    let rho_range = rho0.range();
    if !(rho_range.inf >= 0.0) {
        return Err(LabError::InvalidData(format!(
            "rho0 can be negative (inf {})",
            rho_range.inf
        )));
    }
    let f_of_u = spec.is_rho_independent();
    let e0: Extrema = e0_extrema(rho0, u0);
    let m = compute_m(rho0, u0);
    let inf_gap = f_of_u.then(|| composed_extrema(u0, |u| spec.gap(u).abs()).min);
    let strict = inf_gap.is_some_and(|g| g > SIGN_SLACK);
    let branch = forced.unwrap_or(match (f_of_u, strict) {
        (true, true) => Branch::Thm1Strict,
        (true, false) => Branch::Thm2Weak,
        (false, _) => Branch::Thm3General,
    });

    let mut log = vec![entry(H_RHO0, true, format!("inf rho0 = {}", rho_range.inf))];
    let regular = rho_range.sup.is_finite() && u0.range().inf.is_finite() && u0.range().sup.is_finite();
    log.push(entry(
        H_REGULAR,
        regular,
        format!("rho0 {:?}, u0 {:?}", rho_range, u0.range()),
    ));
    if branch != Branch::Thm3General {
        log.push(entry(H_F_OF_U, f_of_u, format!("{spec:?}")));
    }
    if branch == Branch::Thm1Strict {
        log.push(entry(
            H_STRICT,
            strict,
            format!("inf = {}", inf_gap.unwrap_or(f64::NAN)),
        ));
    }
    let ub = if regular {
        u_bounds(spec, rho0, u0)
    } else {
        Err(LabError::InvalidData("unbounded u0".into()))
    };
    let structure = match &ub {
        Ok((lo, hi)) => {
            log.push(entry(H_U_BOUNDED, true, format!("[{lo}, {hi}]")));
            Some(check_structure(
                spec,
                StateBox {
                    rho_max: m.max(0.0),
                    u_min: *lo,
                    u_max: *hi,
                },
            )?)
        }
        Err(e) => {
            log.push(entry(H_U_BOUNDED, false, e.to_string()));
            None
        }
    };
    let fu_ok = structure.as_ref().is_some_and(|s| s.fu_nonpositive);
    log.push(entry(
        H_FU,
        fu_ok,
        structure
            .as_ref()
            .map_or("no box".to_string(), |s| format!("max f_u = {}", s.fu_max)),
    ));
    let e0_nonneg = e0.min >= -SIGN_SLACK;
    log.push(entry(
        H_E0_NONNEG,
        e0_nonneg,
        format!("min {} at x = {}", e0.min, e0.argmin),
    ));
    log.push(entry(
        H_E0_NEG,
        !e0_nonneg,
        format!("min {} at x = {}", e0.min, e0.argmin),
    ));

    if branch == Branch::Thm3General {
        let rx = rho0x_extrema(rho0);
        let ex = e0x_extrema(rho0, u0);
        let (a, b) = match &structure {
            Some(s) => (
                s.rho_f_rhorho_sign.is_nonneg()
                    && s.f_uu_sign.is_nonpos()
                    && rx.min >= -SIGN_SLACK
                    && ex.min >= -SIGN_SLACK,
                s.rho_f_rhorho_sign.is_nonpos()
                    && s.f_uu_sign.is_nonneg()
                    && rx.max <= SIGN_SLACK
                    && ex.max <= SIGN_SLACK,
            ),
            None => (false, false),
        };
        let w = format!(
            "rho0x in [{}, {}], u0xx + rho0x in [{}, {}]",
            rx.min, rx.max, ex.min, ex.max
        );
        log.push(entry(H_BULLET_A, a, w.clone()));
        log.push(entry(H_BULLET_B, b, w));
    }

    let sat = |name: &str| log.iter().any(|h| h.name == name && h.satisfied);
    let mut structural: Vec<&str> = vec![H_RHO0, H_REGULAR, H_U_BOUNDED, H_FU];
    if branch != Branch::Thm3General {
        structural.push(H_F_OF_U);
    }
    if branch == Branch::Thm1Strict {
        structural.push(H_STRICT);
    }
    let failed: Vec<String> = structural.iter().filter(|n| !sat(n)).map(|n| n.to_string()).collect();

    let outcome = if !failed.is_empty() {
        Outcome::Indeterminate { failed }
    } else if !e0_nonneg {
        Outcome::Blowup {
            tc_upper: -1.0 / e0.min,
            witness_x: e0.argmin,
        }
    } else if branch == Branch::Thm3General && !sat(H_BULLET_A) && !sat(H_BULLET_B) {
        Outcome::Indeterminate {
            failed: vec![H_BULLET_A.to_string(), H_BULLET_B.to_string()],
        }
    } else {
        Outcome::Global
    };
    Ok(ThresholdVerdict {
        branch,
        outcome,
        hypothesis_log: log,
        e0_min: e0.min,
        e0_argmin: e0.argmin,
        fu_certified: fu_ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Audits allow `c * dx`.
    pub c: f64,
    /// Slack on the blow-up deadline `tc_upper * (1 + blowup_lag)`.
    pub blowup_lag: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            c: 5.0,
            blowup_lag: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub pass: bool,
    /// Smallest slack seen; negative when violated.
    pub margin: f64,
    pub t_first_fail: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantLog {
    pub checks: Vec<AuditCheck>,
}

impl InvariantLog {
    pub fn get(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn pass_count(&self) -> usize {
        self.checks.iter().filter(|c| c.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Builds a check from `(t, slack)` pairs; it passes when every slack is >= 0.
fn slack_check(name: &str, detail: String, series: impl Iterator<Item = (f64, f64)>) -> AuditCheck {
    let mut margin = f64::INFINITY;
    let mut first = None;
    for (t, s) in series {
        margin = margin.min(s);
        if (s < 0.0 || s.is_nan()) && first.is_none() {
            first = Some(t);
        }
    }
    AuditCheck {
        name: name.to_string(),
        pass: first.is_none(),
        margin,
        t_first_fail: first,
        detail,
    }
}

/// Grid-level audit of a run against the bounds and the verdict.
pub fn audit(run: &RunResult, bounds: &BoundsReport, verdict: &ThresholdVerdict, tol: &Tolerances) -> InvariantLog {
    let tau = tol.c * run.grid.dx();
    let mons = &run.monitors;
    let mut log = InvariantLog::default();
    let box_applies = verdict.e0_min >= -SIGN_SLACK && verdict.fu_certified;
    let m = bounds.m;

    log.checks.push(slack_check(
        "rho_nonneg",
        format!("clip incidents: {}", run.clip_count),
        mons.iter()
            .map(|x| (x.t, x.min_rho))
            .chain(std::iter::once((run.final_time(), -(run.clip_count as f64)))),
    ));
    if box_applies {
        log.checks.push(slack_check(
            "box_rho",
            format!("M = {m}, tol = {tau}"),
            mons.iter().map(|x| (x.t, m + tau - x.max_rho)),
        ));
        log.checks.push(slack_check(
            "box_e_lower",
            format!("tol = {tau}"),
            mons.iter().map(|x| (x.t, x.min_e + tau)),
        ));
        log.checks.push(slack_check(
            "box_e_upper",
            format!("M = {m}, tol = {tau}"),
            mons.iter().map(|x| (x.t, m + tau - x.max_e)),
        ));
    }
    if let (Some(lo), Some(hi)) = (bounds.u_lo, bounds.u_hi) {
        log.checks.push(slack_check(
            "u_bounds",
            format!("[{lo}, {hi}], tol = {tau}"),
            mons.iter().map(|x| (x.t, (x.min_u - lo + tau).min(hi + tau - x.max_u))),
        ));
    }
    // |R| is non-increasing along Y-paths when f_u <= 0, so R keeps its sign
    // and stays above inf R0 when negative, or above zero when positive
    if let (Some(inf_r0), Some(sup_r0), true) = (bounds.inf_r0, bounds.sup_abs_r0, verdict.fu_certified) {
        if mons.iter().all(|x| x.min_r.is_some()) {
            let base = inf_r0.min(0.0);
            let floor = base - tau * (1.0 + base.abs());
            log.checks.push(slack_check(
                "riemann_floor",
                format!("inf R0 = {inf_r0}, floor = {floor}"),
                mons.iter().map(|x| (x.t, x.min_r.unwrap_or(f64::NAN) - floor)),
            ));
            let cap = sup_r0 + tau * (1.0 + sup_r0);
            log.checks.push(slack_check(
                "riemann_magnitude",
                format!("sup|R0| = {sup_r0}, cap = {cap}"),
                mons.iter().map(|x| (x.t, cap - x.max_abs_r.unwrap_or(f64::NAN))),
            ));
        }
    }
    if mons.iter().all(|x| x.min_signed_gap.is_some()) && !mons.is_empty() {
        log.checks.push(slack_check(
            "sign_invariance",
            "min_x (f(u)-u) sign0 stays positive".into(),
            // strictly positive required; report the value itself as slack
            mons.iter().map(|x| {
                let g = x.min_signed_gap.unwrap_or(f64::NAN);
                (x.t, if g > 0.0 { g } else { g.min(-f64::MIN_POSITIVE) })
            }),
        ));
    }
    if box_applies && matches!(verdict.branch, Branch::Thm1Strict | Branch::Thm2Weak) {
        if let (Some(beta), Some(gamma)) = (bounds.beta, bounds.gamma) {
            log.checks.push(slack_check(
                "rhox_envelope",
                format!("beta = {beta}, gamma = {gamma}"),
                mons.iter().map(|x| (x.t, beta * (gamma * x.t).exp() - x.max_abs_rhox)),
            ));
        }
    }
    if verdict.branch == Branch::Thm3General && box_applies {
        if verdict.hypothesis(H_BULLET_A) {
            log.checks.push(slack_check(
                "xi_nonneg",
                format!("tol = {tau}"),
                mons.iter().map(|x| (x.t, x.min_rhox + tau)),
            ));
            log.checks.push(slack_check(
                "eta_nonneg",
                format!("tol = {tau}"),
                mons.iter().map(|x| (x.t, x.min_ex + tau)),
            ));
        } else if verdict.hypothesis(H_BULLET_B) {
            log.checks.push(slack_check(
                "xi_nonpos",
                format!("tol = {tau}"),
                mons.iter().map(|x| (x.t, tau - x.max_rhox)),
            ));
            log.checks.push(slack_check(
                "eta_nonpos",
                format!("tol = {tau}"),
                mons.iter().map(|x| (x.t, tau - x.max_ex)),
            ));
        }
    }
    match (&verdict.outcome, run.termination) {
        (Outcome::Blowup { tc_upper, .. }, term) => {
            let deadline = tc_upper * (1.0 + tol.blowup_lag);
            let last = mons.last();
            let gradients = last.map_or(String::new(), |x| {
                format!(
                    "at stop: max|rho_x| = {}, max|u_x| = {}, min e = {}",
                    x.max_abs_rhox, x.max_abs_ux, x.min_e
                )
            });
            match term {
                RunTermination::BlowupGuard { t, x, .. } => log.checks.push(AuditCheck {
                    name: "blowup_time".into(),
                    pass: t <= deadline,
                    margin: deadline - t,
                    t_first_fail: (t > deadline).then_some(deadline),
                    detail: format!("guard at t = {t}, x = {x}; tc_upper = {tc_upper}; {gradients}"),
                }),
                _ if run.final_time() >= deadline => log.checks.push(AuditCheck {
                    name: "blowup_time".into(),
                    pass: false,
                    margin: deadline - run.final_time(),
                    t_first_fail: Some(deadline),
                    detail: format!(
                        "no guard by t = {}; tc_upper = {tc_upper}; {gradients}",
                        run.final_time()
                    ),
                }),
                _ => {}
            }
        }
        (Outcome::Global, term) => {
            let t_end = run.snapshots.last().map_or(0.0, |s| s.t);
            log.checks.push(AuditCheck {
                name: "reached_t".into(),
                pass: term == RunTermination::ReachedT,
                margin: run.final_time() - t_end,
                t_first_fail: (term != RunTermination::ReachedT).then(|| run.final_time()),
                detail: format!("{term:?}"),
            });
        }
        _ => {}
    }
    if run.mode == Mode::Augmented && run.termination == RunTermination::ReachedT {
        log.checks.push(slack_check(
            "q_consistency",
            format!("tol = {tau}"),
            mons.iter().map(|x| (x.t, tau - x.q_defect.unwrap_or(f64::NAN))),
        ));
    }
    log
}

/// Path-level checks: sign invariance and the pointwise density bound along
/// X-paths, plus the box and blow-up bound of the e-ODE on each path.
#[allow(clippy::too_many_arguments)]
pub fn audit_paths(
    spec: &ClosureSpec,
    rho0: &ProfileSpec,
    u0: &ProfileSpec,
    bounds: &BoundsReport,
    verdict: &ThresholdVerdict,
    paths: &[(PathTrace, EOdeResult)],
    dx: f64,
    tol: &Tolerances,
) -> Vec<AuditCheck> {
    let tau = tol.c * dx;
    let mut checks = Vec::new();
    if spec.is_rho_independent() {
        let mut series = Vec::new();
        for (p, _) in paths {
            let g0 = spec.gap(u0.value(p.origin));
            if g0 != 0.0 {
                series.extend(p.samples.iter().map(|s| {
                    let g = spec.gap(s.u) * g0.signum();
                    (s.t, if g > 0.0 { g } else { g.min(-f64::MIN_POSITIVE) })
                }));
            }
        }
        if !series.is_empty() {
            checks.push(slack_check(
                "path_sign_invariance",
                format!("{} paths", paths.len()),
                series.into_iter(),
            ));
        }
    }
    if bounds.strict_hyperbolic && verdict.fu_certified {
        let mut series = Vec::new();
        let mut failures = 0usize;
        for (p, _) in paths {
            for s in &p.samples {
                match rho_pointwise_bound(spec, rho0, u0, s.u, p.origin, QUAD_TOL) {
                    Ok(b) => series.push((s.t, b + tau - s.rho)),
                    Err(_) => {
                        failures += 1;
                        series.push((s.t, f64::NAN));
                    }
                }
            }
        }
        checks.push(slack_check(
            "rho_pointwise_bound",
            format!("tol = {tau}, bound evaluation failures = {failures}"),
            series.into_iter(),
        ));
    }
    let m = bounds.m;
    let ode_tol = crate::characteristics::PATH_TOL;
    let mut boxed = Vec::new();
    let mut bound = Vec::new();
    for (p, ode) in paths {
        let e0 = u0.d1(p.origin) + rho0.value(p.origin);
        if e0 >= 0.0 {
            if verdict.fu_certified {
                boxed.extend(ode.samples.iter().map(|&(t, e)| (t, (e + ode_tol).min(m + tau - e))));
            }
        } else if let Some(b) = ode.blowup {
            bound.push((b.t_c_numeric, b.t_c_bound + 10.0 * ode_tol - b.t_c_numeric));
        } else if ode.samples.last().is_some_and(|s| s.0 >= -1.0 / e0) {
            bound.push((ode.samples.last().map_or(0.0, |s| s.0), f64::NAN));
        }
    }
    if !boxed.is_empty() {
        checks.push(slack_check(
            "e_ode_box",
            format!("M = {m}, tol = {tau}"),
            boxed.into_iter(),
        ));
    }
    if !bound.is_empty() {
        checks.push(slack_check(
            "e_ode_blowup_bound",
            "t_c <= -1/e0 + 10 tol".into(),
            bound.into_iter(),
        ));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    const AFFINE: ClosureSpec = ClosureSpec::Affine { a: 1.0, b: 1.0 };

    #[test]
    fn classify_examples() {
        let v = classify(
            &AFFINE,
            &ProfileSpec::sine(0.1, 1.0, 0.2),
            &ProfileSpec::constant(0.0),
            None,
        )
        .unwrap();
        assert_eq!(v.branch, Branch::Thm1Strict);
        assert_eq!(v.outcome, Outcome::Global);
        assert!((v.e0_min - 0.1).abs() < 1e-12);

        let v = classify(&AFFINE, &ProfileSpec::constant(0.2), &ProfileSpec::tanh(-0.5), None).unwrap();
        match v.outcome {
            Outcome::Blowup { tc_upper, witness_x } => {
                assert!((tc_upper - 10.0 / 3.0).abs() < 1e-10);
                assert!(witness_x.abs() < 1e-6);
            }
            o => panic!("{o:?}"),
        }
        // u0 = -0.5 tanh x crosses nothing: inf|1 - 2u0| = 1 - 2*0.5 ... = 0 is approached? no: u0 in (-0.5, 0.5)
        assert_eq!(v.branch, Branch::Thm2Weak);

        let rho0 = ProfileSpec::Tanh {
            amp: 0.1,
            center: 0.0,
            width: 1.0,
            offset: 0.1,
        };
        let v = classify(
            &ClosureSpec::RhoCoupled { c: 1.0 },
            &rho0,
            &ProfileSpec::constant(0.0),
            None,
        )
        .unwrap();
        assert_eq!(v.branch, Branch::Thm3General);
        assert_eq!(v.outcome, Outcome::Global);
    }

    #[test]
    fn hypothesis_log_is_complete() {
        let v = classify(
            &AFFINE,
            &ProfileSpec::sine(0.1, 1.0, 0.2),
            &ProfileSpec::constant(0.0),
            None,
        )
        .unwrap();
        let names: Vec<&str> = v.hypothesis_log.iter().map(|h| h.name.as_str()).collect();
        for n in [
            H_RHO0,
            H_REGULAR,
            H_F_OF_U,
            H_STRICT,
            H_U_BOUNDED,
            H_FU,
            H_E0_NONNEG,
            H_E0_NEG,
        ] {
            assert!(names.contains(&n), "{n}");
        }
    }

    #[test]
    fn negative_density_rejected() {
        let err = classify(
            &AFFINE,
            &ProfileSpec::sine(0.3, 1.0, 0.2),
            &ProfileSpec::constant(0.0),
            None,
        );
        assert!(matches!(err, Err(LabError::InvalidData(_))));
    }

    #[test]
    fn forced_branch_on_rho_dependent_closure_is_indeterminate() {
        let v = classify(
            &ClosureSpec::RhoCoupled { c: 1.0 },
            &ProfileSpec::constant(0.2),
            &ProfileSpec::constant(0.0),
            Some(Branch::Thm2Weak),
        )
        .unwrap();
        assert!(matches!(v.outcome, Outcome::Indeterminate { ref failed } if failed.contains(&H_F_OF_U.to_string())));
    }

    #[test]
    fn m_examples() {
        assert_eq!(compute_m(&ProfileSpec::constant(0.5), &ProfileSpec::constant(3.0)), 0.5);
        assert!((compute_m(&ProfileSpec::constant(0.2), &ProfileSpec::tanh(0.5)) - 0.7).abs() < 1e-12);
        assert!((compute_m(&ProfileSpec::constant(0.0), &ProfileSpec::tanh(0.5)) - 0.5).abs() < 1e-12);
        assert_eq!(compute_m(&ProfileSpec::constant(0.0), &ProfileSpec::tanh(-0.5)), 0.0);
    }

    #[test]
    fn u_bounds_examples() {
        let (lo, hi) = u_bounds(&AFFINE, &ProfileSpec::constant(0.3), &ProfileSpec::constant(0.0)).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.5).abs() < 1e-12);

        let (lo, hi) = u_bounds(&AFFINE, &ProfileSpec::constant(0.3), &ProfileSpec::constant(0.5)).unwrap();
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);

        let (lo, hi) = u_bounds(
            &ClosureSpec::RhoCoupled { c: 1.0 },
            &ProfileSpec::constant(0.5),
            &ProfileSpec::sine(1.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!((lo, hi), (-1.0, 1.0));

        // sin shift: u0 in (-0.5, 0.5) sits between the roots -pi and pi
        let (lo, hi) = u_bounds(
            &ClosureSpec::SinShift,
            &ProfileSpec::constant(0.2),
            &ProfileSpec::tanh(0.5),
        )
        .unwrap();
        assert!((lo + std::f64::consts::PI).abs() < 1e-10 && (hi - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn pointwise_bound_examples() {
        let rho0 = ProfileSpec::constant(1.0);
        let u0 = ProfileSpec::constant(0.0);
        assert_eq!(rho_pointwise_bound(&AFFINE, &rho0, &u0, 0.0, 0.3, 1e-12).unwrap(), 1.0);
        // independent check by trapezoid quadrature of 1/(1 - 2 xi) on [0, 0.25]
        let n = 200_000;
        let h = 0.25 / n as f64;
        let integral: f64 = (0..n)
            .map(|k| {
                let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                0.5 * h * (1.0 / (1.0 - 2.0 * a) + 1.0 / (1.0 - 2.0 * b))
            })
            .sum();
        let oracle = 1.0 / (integral.exp() * 0.5);
        let b = rho_pointwise_bound(&AFFINE, &rho0, &u0, 0.25, 0.0, 1e-12).unwrap();
        assert!((b - oracle).abs() < 1e-8);
        assert!((b - 2f64.sqrt()).abs() < 1e-8);
        let near = rho_pointwise_bound(&AFFINE, &rho0, &u0, 0.5 - 1e-9, 0.0, 1e-12).unwrap();
        assert!(near > 1e3);
        assert!(rho_pointwise_bound(&AFFINE, &rho0, &u0, 0.6, 0.0, 1e-12).is_err());
    }

    #[test]
    fn envelope_examples() {
        let (beta, gamma) = envelope_constants(&ProfileSpec::constant(0.0), &ProfileSpec::constant(0.2), 1.0, 1.0);
        assert_eq!((beta, gamma), (1.0, 24.0));
        let (beta, _) = rhox_envelope(&AFFINE, &ProfileSpec::constant(0.0), &ProfileSpec::constant(0.1)).unwrap();
        assert_eq!(beta, 1.0);
        let err = rhox_envelope(&AFFINE, &ProfileSpec::constant(0.2), &ProfileSpec::tanh(-0.5));
        assert!(matches!(err, Err(LabError::HypothesisFailed(_))));
    }

    #[test]
    fn bounds_report_r0() {
        let rep = compute_bounds(&AFFINE, &ProfileSpec::sine(0.1, 1.0, 0.2), &ProfileSpec::constant(0.0)).unwrap();
        assert!(rep.strict_hyperbolic);
        assert_eq!(rep.u_ref, Some(0.0));
        assert!((rep.inf_r0.unwrap() - 0.1).abs() < 1e-10);
        assert!((rep.sup_abs_r0.unwrap() - 0.3).abs() < 1e-10);
        assert!((rep.m - 0.3).abs() < 1e-12);
    }
}
