//! Relaxation closures `f(rho, u)`, the fixed-point set of `f(u) = u`, the
//! equilibrium curve and structural checks on a state box.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Highest total degree accepted for `Custom` closures.
pub const MAX_CUSTOM_DEGREE: usize = 4;

/// Sample count per axis used by [`check_structure`].
pub const STRUCTURE_GRID: usize = 64;

const SIGMA_SCAN: usize = 1024;
const SIGMA_BISECT_TOL: f64 = 1e-12;
const SIGN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Family {
    Affine,
    SinShift,
    PressurelessIdentity,
    RhoCoupled,
    Custom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClosure {
    family: Family,
    #[serde(default)]
    params: Vec<f64>,
}

/// A closure family together with its coefficients.
///
/// `Custom` holds the coefficients of a polynomial in `(rho, u)` ordered by
/// total degree, and within a degree by decreasing power of `rho`:
/// `1, rho, u, rho^2, rho u, u^2, rho^3, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClosure", into = "RawClosure")]
pub enum ClosureSpec {
    /// `f = a - b u`
    Affine {
        a: f64,
        b: f64,
    },
    /// `f = u + sin u`
    SinShift,
    /// `f = u`
    PressurelessIdentity,
    /// `f = c rho - u`
    RhoCoupled {
        c: f64,
    },
    Custom {
        coeffs: Vec<f64>,
    },
}

impl TryFrom<RawClosure> for ClosureSpec {
    type Error = String;

    fn try_from(raw: RawClosure) -> std::result::Result<Self, String> {
        let p = &raw.params;
        if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite closure parameter {bad}"));
        }
        let want = |n: usize| -> std::result::Result<(), String> {
            if p.len() == n {
                Ok(())
            } else {
                Err(format!("{:?} expects {n} params, got {}", raw.family, p.len()))
            }
        };
        match raw.family {
            Family::Affine => want(2).map(|_| ClosureSpec::Affine { a: p[0], b: p[1] }),
            Family::SinShift => want(0).map(|_| ClosureSpec::SinShift),
            Family::PressurelessIdentity => want(0).map(|_| ClosureSpec::PressurelessIdentity),
            Family::RhoCoupled => want(1).map(|_| ClosureSpec::RhoCoupled { c: p[0] }),
            Family::Custom => ClosureSpec::custom(p.clone()).map_err(|e| e.to_string()),
        }
    }
}

impl From<ClosureSpec> for RawClosure {
    fn from(spec: ClosureSpec) -> Self {
        let (family, params) = match spec {
            ClosureSpec::Affine { a, b } => (Family::Affine, vec![a, b]),
            ClosureSpec::SinShift => (Family::SinShift, vec![]),
            ClosureSpec::PressurelessIdentity => (Family::PressurelessIdentity, vec![]),
            ClosureSpec::RhoCoupled { c } => (Family::RhoCoupled, vec![c]),
            ClosureSpec::Custom { coeffs } => (Family::Custom, coeffs),
        };
        RawClosure { family, params }
    }
}

/// Exponents `(i, j)` of `rho^i u^j` in coefficient order.
fn monomials(count: usize) -> impl Iterator<Item = (i32, i32)> {
    (0..=MAX_CUSTOM_DEGREE as i32)
        .flat_map(|d| (0..=d).rev().map(move |i| (i, d - i)))
        .take(count)
}

/// `d^k/dx^k x^n` evaluated at `x`.
fn dpow(x: f64, n: i32, k: i32) -> f64 {
    if k > n {
        return 0.0;
    }
    let falling: i32 = (0..k).map(|m| n - m).product();
    falling as f64 * x.powi(n - k)
}

impl ClosureSpec {
    /// Builds a polynomial closure, rejecting degrees above four.
    pub fn custom(coeffs: Vec<f64>) -> Result<Self> {
        let max_len = (MAX_CUSTOM_DEGREE + 1) * (MAX_CUSTOM_DEGREE + 2) / 2;
        if coeffs.is_empty() || coeffs.len() > max_len {
            return Err(LabError::InvalidData(format!(
                "Custom closure takes 1..={max_len} coefficients (total degree <= {MAX_CUSTOM_DEGREE}), got {}",
                coeffs.len()
            )));
        }
        Ok(ClosureSpec::Custom { coeffs })
    }

    /// True when `f` does not depend on `rho`.
    pub fn is_rho_independent(&self) -> bool {
        match self {
            ClosureSpec::Affine { .. } | ClosureSpec::SinShift | ClosureSpec::PressurelessIdentity => true,
            ClosureSpec::RhoCoupled { c } => *c == 0.0,
            ClosureSpec::Custom { coeffs } => coeffs
                .iter()
                .zip(monomials(coeffs.len()))
                .all(|(c, (i, _))| i == 0 || *c == 0.0),
        }
    }

    /// `∂^(a+b) f / ∂rho^a ∂u^b` for `a + b <= 2`.
    fn partial(&self, rho: f64, u: f64, a: i32, b: i32) -> f64 {
        match self {
            ClosureSpec::Affine { a: c0, b: c1 } => match (a, b) {
                (0, 0) => c0 - c1 * u,
                (0, 1) => -c1,
                _ => 0.0,
            },
            ClosureSpec::SinShift => match (a, b) {
                (0, 0) => u + u.sin(),
                (0, 1) => 1.0 + u.cos(),
                (0, 2) => -u.sin(),
                _ => 0.0,
            },
            ClosureSpec::PressurelessIdentity => match (a, b) {
                (0, 0) => u,
                (0, 1) => 1.0,
                _ => 0.0,
            },
            ClosureSpec::RhoCoupled { c } => match (a, b) {
                (0, 0) => c * rho - u,
                (1, 0) => *c,
                (0, 1) => -1.0,
                _ => 0.0,
            },
            ClosureSpec::Custom { coeffs } => coeffs
                .iter()
                .zip(monomials(coeffs.len()))
                .map(|(c, (i, j))| c * dpow(rho, i, a) * dpow(u, j, b))
                .sum(),
        }
    }

    /// `f(rho, u)` alone.
    pub fn f(&self, rho: f64, u: f64) -> f64 {
        self.partial(rho, u, 0, 0)
    }

    pub fn f_u(&self, rho: f64, u: f64) -> f64 {
        self.partial(rho, u, 0, 1)
    }

    /// `f(u) - u` for rho-independent closures (evaluated at `rho = 0`).
    pub fn gap(&self, u: f64) -> f64 {
        self.f(0.0, u) - u
    }
}

/// Closure value, partials up to second order and the two eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeStack {
    pub f: f64,
    pub f_rho: f64,
    pub f_u: f64,
    pub f_rhorho: f64,
    pub f_uu: f64,
    pub f_rhou: f64,
    /// `(rho f)_rhorho = 2 f_rho + rho f_rhorho`
    pub rho_f_rhorho: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl DerivativeStack {
    fn entries(&self) -> [f64; 9] {
        [
            self.f,
            self.f_rho,
            self.f_u,
            self.f_rhorho,
            self.f_uu,
            self.f_rhou,
            self.rho_f_rhorho,
            self.lambda1,
            self.lambda2,
        ]
    }
}

pub fn eval_closure(spec: &ClosureSpec, rho: f64, u: f64) -> Result<DerivativeStack> {
    if !(rho >= 0.0) || !u.is_finite() {
        return Err(LabError::InvalidData(format!("closure evaluated at rho={rho}, u={u}")));
    }
    let p = |a, b| spec.partial(rho, u, a, b);
    let (f, f_rho, f_u) = (p(0, 0), p(1, 0), p(0, 1));
    let (f_rhorho, f_uu, f_rhou) = (p(2, 0), p(0, 2), p(1, 1));
    let stack = DerivativeStack {
        f,
        f_rho,
        f_u,
        f_rhorho,
        f_uu,
        f_rhou,
        rho_f_rhorho: 2.0 * f_rho + rho * f_rhorho,
        lambda1: rho * f_rho + f,
        lambda2: u,
    };
    if stack.entries().iter().all(|v| v.is_finite()) {
        Ok(stack)
    } else {
        Err(LabError::NonFiniteEval { rho, u })
    }
}

fn require_rho_independent(spec: &ClosureSpec) -> Result<()> {
    if spec.is_rho_independent() {
        Ok(())
    } else {
        Err(LabError::InvalidData(
            "operation needs a closure independent of rho".into(),
        ))
    }
}

/// A root of `f(u) = u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaRoot {
    pub u: f64,
    /// `f_u(u*) < 1`
    pub stable: bool,
}

/// Roots of `f(u) - u` on `[lo, hi]`, increasing.
pub fn find_sigma(spec: &ClosureSpec, lo: f64, hi: f64, tol: f64) -> Result<Vec<SigmaRoot>> {
    require_rho_independent(spec)?;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(LabError::InvalidData(format!(
            "find_sigma needs lo < hi and tol > 0 (got [{lo}, {hi}], tol {tol})"
        )));
    }
    let g = |u: f64| spec.gap(u);
    let du = (hi - lo) / (SIGMA_SCAN - 1) as f64;
    let us: Vec<f64> = (0..SIGMA_SCAN).map(|i| lo + du * i as f64).collect();
    let gs: Vec<f64> = us.iter().map(|&u| g(u)).collect();
    if gs.iter().any(|v| !v.is_finite()) {
        return Err(LabError::NonFiniteEval { rho: 0.0, u: lo });
    }
    if gs.iter().all(|v| v.abs() <= tol) {
        return Err(LabError::DegenerateSigma);
    }

    let mut roots: Vec<f64> = Vec::new();
    for i in 0..SIGMA_SCAN {
        if gs[i] == 0.0 {
            roots.push(us[i]);
        } else if i + 1 < SIGMA_SCAN && gs[i + 1] != 0.0 && gs[i].signum() != gs[i + 1].signum() {
            roots.push(bisect(&g, us[i], us[i + 1], gs[i], tol));
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if roots.is_empty() {
        return Err(LabError::EmptySigma { lo, hi });
    }
    Ok(roots
        .into_iter()
        .map(|u| SigmaRoot {
            u,
            stable: spec.f_u(0.0, u) < 1.0,
        })
        .collect())
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 || ((b - a) <= SIGMA_BISECT_TOL && gm.abs() <= tol) {
            return m;
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if b - a <= f64::EPSILON * m.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Rectangle `[0, rho_max] x [u_min, u_max]` of states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub rho_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl StateBox {
    fn grid(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let step = move |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
        (0..n).flat_map(move |i| (0..n).map(move |j| (step(0.0, self.rho_max, i), step(self.u_min, self.u_max, j))))
    }
}

/// Sign of a sampled quantity over a box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class")]
pub enum SignClass {
    /// Identically zero (within round-off); both one-sided claims hold.
    Zero,
    NonNeg,
    NonPos,
    Mixed {
        pos_witness: (f64, f64, f64),
        neg_witness: (f64, f64, f64),
    },
}

impl SignClass {
    pub fn is_nonneg(&self) -> bool {
        matches!(self, SignClass::Zero | SignClass::NonNeg)
    }

    pub fn is_nonpos(&self) -> bool {
        matches!(self, SignClass::Zero | SignClass::NonPos)
    }
}

#[derive(Default)]
struct SignTracker {
    pos: Option<(f64, f64, f64)>,
    neg: Option<(f64, f64, f64)>,
}

impl SignTracker {
    fn push(&mut self, rho: f64, u: f64, v: f64) {
        if v > SIGN_TOL && self.pos.is_none() {
            self.pos = Some((rho, u, v));
        } else if v < -SIGN_TOL && self.neg.is_none() {
            self.neg = Some((rho, u, v));
        }
    }

    fn class(&self) -> SignClass {
        match (self.pos, self.neg) {
            (None, None) => SignClass::Zero,
            (Some(_), None) => SignClass::NonNeg,
            (None, Some(_)) => SignClass::NonPos,
            (Some(p), Some(n)) => SignClass::Mixed {
                pos_witness: p,
                neg_witness: n,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    #[serde(rename = "box")]
    pub state_box: StateBox,
    pub resolution: usize,
    pub fu_nonpositive: bool,
    pub fu_below_one: bool,
    pub fu_min: f64,
    pub fu_max: f64,
    pub rho_f_rhorho_sign: SignClass,
    pub f_uu_sign: SignClass,
    pub c2_norm: f64,
}

/// Samples the box on an inclusive `64 x 64` grid (corners included).
pub fn check_structure(spec: &ClosureSpec, state_box: StateBox) -> Result<StructureReport> {
    if !(state_box.rho_max >= 0.0) || !(state_box.u_min <= state_box.u_max) {
        return Err(LabError::InvalidData(format!("bad state box {state_box:?}")));
    }
    let mut fu_min = f64::INFINITY;
    let mut fu_max = f64::NEG_INFINITY;
    let mut c2: f64 = 0.0;
    let mut rff = SignTracker::default();
    let mut fuu = SignTracker::default();
    for (rho, u) in state_box.grid(STRUCTURE_GRID) {
        let d = eval_closure(spec, rho, u)?;
        fu_min = fu_min.min(d.f_u);
        fu_max = fu_max.max(d.f_u);
        for v in [d.f, d.f_rho, d.f_u, d.f_rhorho, d.f_uu, d.f_rhou] {
            c2 = c2.max(v.abs());
        }
        rff.push(rho, u, d.rho_f_rhorho);
        fuu.push(rho, u, d.f_uu);
    }
    Ok(StructureReport {
        state_box,
        resolution: STRUCTURE_GRID,
        fu_nonpositive: fu_max <= SIGN_TOL,
        fu_below_one: fu_max < 1.0,
        fu_min,
        fu_max,
        rho_f_rhorho_sign: rff.class(),
        f_uu_sign: fuu.class(),
        c2_norm: c2,
    })
}

/// Iterates and residuals of the relaxed map at one `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointTrace {
    pub iterates: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Runs `psi <- psi + mu (f(rho, psi) - psi)` until `|f - psi| <= tol`.
pub fn relaxed_iteration(
    spec: &ClosureSpec,
    rho: f64,
    psi0: f64,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointTrace> {
    let mut psi = psi0;
    let mut iterates = vec![psi];
    let mut residuals = Vec::new();
    for _ in 0..=max_iter {
        let h = spec.f(rho, psi) - psi;
        if !h.is_finite() {
            return Err(LabError::NonFiniteEval { rho, u: psi });
        }
        residuals.push(h.abs());
        if h.abs() <= tol {
            return Ok(FixedPointTrace { iterates, residuals });
        }
        psi += mu * h;
        iterates.push(psi);
    }
    Err(LabError::MaxIterExceeded {
        iterations: max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

/// Sampled equilibrium curve `f(rho, phi(rho)) = phi(rho)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumCurve {
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub eps: f64,
    /// Sup of `f_u` on the box.
    pub a: f64,
    pub contraction_factor: f64,
    pub theoretical_factor: f64,
}

impl EquilibriumCurve {
    pub fn range(&self) -> (f64, f64) {
        self.phi
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }
}

/// Number of samples on `[0, rho_max]`.
pub const PHI_SAMPLES: usize = 129;

/// Ratio of successive steps only counts once steps are well above round-off.
fn observed_factor(iterates: &[f64]) -> f64 {
    let steps: Vec<f64> = iterates.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    steps
        .windows(2)
        .filter(|w| w[0] > 1e-12 * (1.0 + iterates[0].abs()))
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Solves for the equilibrium curve on `[0, rho_max]` with step `1/(1-eps)`.
///
/// `u_box` is the velocity range on which `eps <= f_u <= a < 1` is certified.
pub fn equilibrium_phi(
    spec: &ClosureSpec,
    rho_max: f64,
    u_box: (f64, f64),
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumCurve> {
    let report = check_structure(
        spec,
        StateBox {
            rho_max,
            u_min: u_box.0,
            u_max: u_box.1,
        },
    )?;
    if !report.fu_below_one {
        return Err(LabError::NoContraction(format!(
            "f_u reaches {} >= 1 on the box",
            report.fu_max
        )));
    }
    if !(eps <= report.fu_min) {
        return Err(LabError::NoContraction(format!(
            "eps={eps} exceeds min f_u={}",
            report.fu_min
        )));
    }
    let a = report.fu_max;
    let mu = 1.0 / (1.0 - eps);
    let psi0 = 0.5 * (u_box.0 + u_box.1);
    let mut out = EquilibriumCurve {
        rho: Vec::with_capacity(PHI_SAMPLES),
        phi: Vec::with_capacity(PHI_SAMPLES),
        residual: Vec::with_capacity(PHI_SAMPLES),
        iterations: 0,
        eps,
        a,
        contraction_factor: 0.0,
        theoretical_factor: (a - eps) / (1.0 - eps),
    };
    for k in 0..PHI_SAMPLES {
        let rho = rho_max * k as f64 / (PHI_SAMPLES - 1) as f64;
        let trace = relaxed_iteration(spec, rho, psi0, mu, tol, max_iter)?;
        let phi = *trace.iterates.last().expect("at least the start");
        out.iterations = out.iterations.max(trace.iterates.len() - 1);
        out.contraction_factor = out.contraction_factor.max(observed_factor(&trace.iterates));
        out.rho.push(rho);
        out.phi.push(phi);
        out.residual.push((spec.f(rho, phi) - phi).abs());
    }
    Ok(out)
}

/// [`equilibrium_phi`] with `eps` taken as the grid minimum of `f_u` less `1e-3`.
pub fn equilibrium_phi_auto(
    spec: &ClosureSpec,
    rho_max: f64,
    u_box: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumCurve> {
    let report = check_structure(
        spec,
        StateBox {
            rho_max,
            u_min: u_box.0,
            u_max: u_box.1,
        },
    )?;
    if !report.fu_min.is_finite() || report.fu_min < -1e6 {
        return Err(LabError::NoContraction(format!(
            "f_u unbounded below on the box (min {})",
            report.fu_min
        )));
    }
    equilibrium_phi(spec, rho_max, u_box, report.fu_min - 1e-3, tol, max_iter)
}
