//! Eulerian finite-volume solver for the primitive system and for the
//! diagonal `(n, v, q)` system, with CFL stepping and blow-up guards.

use serde::{Deserialize, Serialize};

use crate::characteristics::RiemannTable;
use crate::closures::{eval_closure, ClosureSpec};
use crate::error::{LabError, Result};
use crate::profile::ProfileSpec;

/// Floor on the wave speed in [`cfl_dt`].
pub const SPEED_FLOOR: f64 = 1e-12;
/// Steps shorter than this end the run with `CflCollapse`.
pub const DT_COLLAPSE: f64 = 1e-14;
/// Negative densities below `-RHO_TOL` count as clip incidents.
pub const RHO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    Periodic,
    /// Zeroth-order extrapolation into one ghost cell on each side.
    OutflowExtrapolate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Index of the neighbour of cell `i` at offset `di`, with ghost cells
    /// resolved by the boundary rule.
    fn neighbour(&self, i: usize, di: isize) -> usize {
        let n = self.n_cells as isize;
        let j = i as isize + di;
        match self.boundary {
            Boundary::Periodic => j.rem_euclid(n) as usize,
            Boundary::OutflowExtrapolate => j.clamp(0, n - 1) as usize,
        }
    }

    /// Central difference, one-sided at outflow boundaries.
    pub fn ddx(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n_cells;
        let h = self.dx();
        (0..n)
            .map(|i| match self.boundary {
                Boundary::Periodic => (v[self.neighbour(i, 1)] - v[self.neighbour(i, -1)]) / (2.0 * h),
                Boundary::OutflowExtrapolate if i == 0 => (v[1] - v[0]) / h,
                Boundary::OutflowExtrapolate if i == n - 1 => (v[n - 1] - v[n - 2]) / h,
                Boundary::OutflowExtrapolate => (v[i + 1] - v[i - 1]) / (2.0 * h),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_cells < 3 || !(self.x_hi > self.x_lo) || !self.dx().is_finite() {
            return Err(LabError::InvalidData(format!("bad grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridState {
    pub t: f64,
    pub grid: GridSpec,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
}

impl GridState {
    pub fn from_profiles(grid: GridSpec, rho0: &ProfileSpec, u0: &ProfileSpec) -> Self {
        let xs = grid.centers();
        GridState {
            t: 0.0,
            grid,
            rho: xs.iter().map(|&x| rho0.value(x)).collect(),
            u: xs.iter().map(|&x| u0.value(x)).collect(),
        }
    }

    /// `e = D_x u + rho`.
    pub fn e(&self) -> Vec<f64> {
        self.grid
            .ddx(&self.u)
            .iter()
            .zip(&self.rho)
            .map(|(ux, r)| ux + r)
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.dx()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AugGridState {
    pub t: f64,
    pub grid: GridSpec,
    pub n: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

impl AugGridState {
    /// Seeds `q = n + D_x v`.
    pub fn seeded(state: &GridState) -> Self {
        AugGridState {
            t: state.t,
            grid: state.grid,
            n: state.rho.clone(),
            v: state.u.clone(),
            q: state.e(),
        }
    }

    pub fn primitive(&self) -> GridState {
        GridState {
            t: self.t,
            grid: self.grid,
            rho: self.n.clone(),
            u: self.v.clone(),
        }
    }
}

fn max_speed(spec: &ClosureSpec, rho: &[f64], u: &[f64]) -> Result<f64> {
    let mut s = SPEED_FLOOR;
    for (&r, &v) in rho.iter().zip(u) {
        let d = eval_closure(spec, r.max(0.0), v)?;
        s = s.max(d.lambda1.abs()).max(d.lambda2.abs()).max(d.f.abs());
    }
    Ok(s)
}

/// `cfl * dx / max(|lambda1|, |lambda2|, |f|, 1e-12)`.
///
/// `|f|` enters because the Lax–Friedrichs flux for `rho f` needs a
/// dissipation at least `|f|` to keep `rho` nonnegative; for closures of `u`
/// alone it coincides with `lambda1`.
pub fn cfl_dt(state: &GridState, spec: &ClosureSpec, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(LabError::InvalidData(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let dt = cfl * state.grid.dx() / max_speed(spec, &state.rho, &state.u)?;
    if dt < DT_COLLAPSE {
        return Err(LabError::CflCollapse { t: state.t, dt });
    }
    Ok(dt)
}

fn check_finite(t: f64, fields: &[&[f64]]) -> Result<()> {
    for f in fields {
        if let Some(cell) = f.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite { t, cell });
        }
    }
    Ok(())
}

/// Upwind difference of `v` at cell `i` for advection speed `a`.
fn upwind(grid: &GridSpec, v: &[f64], i: usize, a: f64) -> f64 {
    let h = grid.dx();
    if a > 0.0 {
        (v[i] - v[grid.neighbour(i, -1)]) / h
    } else {
        (v[grid.neighbour(i, 1)] - v[i]) / h
    }
}

/// Clips negative densities to zero, returning the number of clipped cells
/// that were below `-RHO_TOL`.
fn clip(rho: &mut [f64]) -> usize {
    let mut incidents = 0;
    for r in rho.iter_mut() {
        if *r < 0.0 {
            if *r < -RHO_TOL {
                incidents += 1;
            }
            *r = 0.0;
        }
    }
    incidents
}

fn advance_primitive(state: &GridState, spec: &ClosureSpec, dt: f64) -> Result<(GridState, usize)> {
    let g = &state.grid;
    let n = g.n_cells;
    let lam = dt / g.dx();
    let stacks = state
        .rho
        .iter()
        .zip(&state.u)
        .map(|(&r, &u)| eval_closure(spec, r.max(0.0), u))
        .collect::<Result<Vec<_>>>()?;
    // flux through the right face of each cell, plus the left face of cell 0
    let face = |l: usize, r: usize| {
        let (dl, dr) = (&stacks[l], &stacks[r]);
        let alpha = dl.lambda1.abs().max(dr.lambda1.abs()).max(dl.f.abs()).max(dr.f.abs());
        0.5 * (state.rho[l] * dl.f + state.rho[r] * dr.f) - 0.5 * alpha * (state.rho[r] - state.rho[l])
    };
    let right: Vec<f64> = (0..n).map(|i| face(i, g.neighbour(i, 1))).collect();
    let left0 = face(g.neighbour(0, -1), 0);
    let mut rho = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let fl = if i == 0 { left0 } else { right[i - 1] };
        rho.push(state.rho[i] - lam * (right[i] - fl));
        let ui = state.u[i];
        let adv = ui * upwind(g, &state.u, i, ui);
        let src = state.rho[i] * (stacks[i].f - ui);
        u.push(ui + dt * (src - adv));
    }
    let t = state.t + dt;
    check_finite(t, &[&rho, &u])?;
    let clips = clip(&mut rho);
    Ok((GridState { t, grid: *g, rho, u }, clips))
}

/// Local Lax–Friedrichs for `rho`, upwind advection plus explicit source for `u`.
pub fn step_primitive(state: &GridState, spec: &ClosureSpec, dt: f64) -> Result<GridState> {
    advance_primitive(state, spec, dt).map(|(s, _)| s)
}

fn advance_augmented(state: &AugGridState, spec: &ClosureSpec, dt: f64) -> Result<(AugGridState, usize)> {
    let g = &state.grid;
    let cells = g.n_cells;
    let mut n = Vec::with_capacity(cells);
    let mut v = Vec::with_capacity(cells);
    let mut q = Vec::with_capacity(cells);
    for i in 0..cells {
        let (ni, vi, qi) = (state.n[i], state.v[i], state.q[i]);
        let d = eval_closure(spec, ni.max(0.0), vi)?;
        let n_adv = d.lambda1 * upwind(g, &state.n, i, d.lambda1);
        let v_adv = vi * upwind(g, &state.v, i, vi);
        let q_adv = vi * upwind(g, &state.q, i, vi);
        n.push(ni + dt * (d.f_u * ni * (ni - qi) - n_adv));
        v.push(vi + dt * (ni * (d.f - vi) - v_adv));
        q.push(qi + dt * (qi * (ni - qi) - q_adv));
    }
    let t = state.t + dt;
    check_finite(t, &[&n, &v, &q])?;
    let clips = clip(&mut n);
    Ok((AugGridState { t, grid: *g, n, v, q }, clips))
}

/// Three upwind advections with speeds `(lambda1, v, v)` plus explicit sources.
pub fn step_augmented(state: &AugGridState, spec: &ClosureSpec, dt: f64) -> Result<AugGridState> {
    advance_augmented(state, spec, dt).map(|(s, _)| s)
}

/// `sup |q - n - D_x v|` over interior cells.
pub fn q_consistency(state: &AugGridState) -> f64 {
    let vx = state.grid.ddx(&state.v);
    let n = state.grid.n_cells;
    (1..n.saturating_sub(1))
        .map(|i| (state.q[i] - state.n[i] - vx[i]).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Primitive,
    Augmented,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Guards {
    /// Stop once `min e < -blowup` or `max |D_x u| > blowup`.
    pub blowup: f64,
    /// Stop once a compressive front (`e < 0` on a cell where `u` decreases)
    /// spans fewer than this many cells, measured as the drop of `u` over the
    /// monotone stretch holding the cell divided by the cell jump. Smooth
    /// fronts are many cells wide; a captured shock sits at the scheme's
    /// floor of a few cells. Stretches dropping less than 5% of the
    /// oscillation of `u` are ignored. `None` disables it.
    pub front_cells: Option<f64>,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            blowup: 1e4,
            front_cells: Some(8.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: ClosureSpec,
    pub rho0: ProfileSpec,
    pub u0: ProfileSpec,
    pub grid: GridSpec,
    pub cfl: f64,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub mode: Mode,
    pub guards: Guards,
    /// Spacing of the frames kept for interpolation; defaults to `t_end/2000`.
    pub history_dt: Option<f64>,
    /// When present, `R` is monitored on every step.
    pub riemann: Option<RiemannTable>,
}

impl RunConfig {
    pub fn new(spec: ClosureSpec, rho0: ProfileSpec, u0: ProfileSpec, grid: GridSpec, t_end: f64) -> Self {
        RunConfig {
            spec,
            rho0,
            u0,
            grid,
            cfl: 0.5,
            t_end,
            output_times: vec![t_end],
            mode: Mode::Primitive,
            guards: Guards::default(),
            history_dt: None,
            riemann: None,
        }
    }
}

/// Grid diagnostics after one accepted step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Monitor {
    pub t: f64,
    pub min_e: f64,
    pub max_e: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub max_abs_ux: f64,
    pub max_abs_rhox: f64,
    pub min_rhox: f64,
    pub max_rhox: f64,
    pub min_ex: f64,
    pub max_ex: f64,
    pub min_r: Option<f64>,
    pub max_abs_r: Option<f64>,
    /// `min_x (f(u) - u) * sign0`, with `sign0` the common initial sign.
    pub min_signed_gap: Option<f64>,
    pub q_defect: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RunTermination {
    ReachedT,
    BlowupGuard { t: f64, cell: usize, x: f64 },
    CflCollapse { t: f64 },
}

/// Frame stored for space-time interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryFrame {
    pub t: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub mode: Mode,
    pub grid: GridSpec,
    pub cfl: f64,
    pub snapshots: Vec<GridState>,
    pub aug_snapshots: Vec<AugGridState>,
    pub monitors: Vec<Monitor>,
    pub termination: RunTermination,
    pub history: Vec<HistoryFrame>,
    pub clip_count: usize,
    pub steps: usize,
}

impl RunResult {
    pub fn final_time(&self) -> f64 {
        self.monitors.last().map_or(0.0, |m| m.t)
    }

    pub fn blowup_time(&self) -> Option<f64> {
        match self.termination {
            RunTermination::BlowupGuard { t, .. } => Some(t),
            _ => None,
        }
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn initial_gap_sign(spec: &ClosureSpec, u: &[f64]) -> Option<f64> {
    if !spec.is_rho_independent() {
        return None;
    }
    let first = spec.gap(u[0]).signum();
    let uniform = u.iter().all(|&v| {
        let g = spec.gap(v);
        g != 0.0 && g.signum() == first
    });
    uniform.then_some(first)
}

struct Probe<'a> {
    cfg: &'a RunConfig,
    gap_sign: Option<f64>,
}

impl Probe<'_> {
    fn monitor(&self, s: &GridState, q: Option<f64>) -> (Monitor, Vec<f64>, Option<usize>) {
        let g = &s.grid;
        let ux = g.ddx(&s.u);
        let e: Vec<f64> = ux.iter().zip(&s.rho).map(|(a, b)| a + b).collect();
        let rhox = g.ddx(&s.rho);
        let ex = g.ddx(&e);
        let (min_e, max_e) = min_max(&e);
        let (min_rho, max_rho) = min_max(&s.rho);
        let (min_u, max_u) = min_max(&s.u);
        let (min_rhox, max_rhox) = min_max(&rhox);
        let (min_ex, max_ex) = min_max(&ex);
        let max_abs_ux = ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (min_r, max_abs_r) = match &self.cfg.riemann {
            Some(table) => {
                let rs: Option<Vec<f64>> = s
                    .rho
                    .iter()
                    .zip(&s.u)
                    .map(|(&r, &u)| table.riemann(r, u).ok())
                    .collect();
                match rs {
                    Some(rs) => {
                        let (lo, hi) = min_max(&rs);
                        (Some(lo), Some(lo.abs().max(hi.abs())))
                    }
                    None => (None, None),
                }
            }
            None => (None, None),
        };
        let min_signed_gap = self.gap_sign.map(|sg| {
            s.u.iter()
                .map(|&u| self.cfg.spec.gap(u) * sg)
                .fold(f64::INFINITY, f64::min)
        });
        let guard = self.guard_cell(s, &e, &ux);
        let m = Monitor {
            t: s.t,
            min_e,
            max_e,
            min_rho,
            max_rho,
            min_u,
            max_u,
            max_abs_ux,
            max_abs_rhox: min_rhox.abs().max(max_rhox.abs()),
            min_rhox,
            max_rhox,
            min_ex,
            max_ex,
            min_r,
            max_abs_r,
            min_signed_gap,
            q_defect: q,
        };
        (m, e, guard)
    }

    fn guard_cell(&self, s: &GridState, e: &[f64], ux: &[f64]) -> Option<usize> {
        let limit = self.cfg.guards.blowup;
        if let Some(i) = (0..e.len()).find(|&i| e[i] < -limit || ux[i].abs() > limit) {
            return Some(i);
        }
        let cells = self.cfg.guards.front_cells?;
        let (lo, hi) = min_max(&s.u);
        let osc = hi - lo;
        if osc <= 1e-6 * (1.0 + lo.abs().max(hi.abs())) {
            return None;
        }
        let n = s.u.len();
        let periodic = s.grid.boundary == Boundary::Periodic;
        let pairs = if periodic { n } else { n - 1 };
        let jump = |i: usize| s.u[(i + 1) % n] - s.u[i % n];
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..pairs {
            let j = jump(i);
            let e_face = j / s.grid.dx() + 0.5 * (s.rho[i] + s.rho[(i + 1) % n]);
            if !(j < 0.0 && e_face < 0.0) {
                continue;
            }
            // walk the decreasing stretch both ways (at most one lap)
            let (mut a, mut b) = (i, i);
            let mut steps = 0;
            while steps < n && (periodic || a > 0) && jump((a + n - 1) % n) < 0.0 {
                a = (a + n - 1) % n;
                steps += 1;
            }
            while steps < n && (periodic || b + 1 < pairs) && jump((b + 1) % n) < 0.0 {
                b += 1;
                steps += 1;
            }
            let drop = s.u[a % n] - s.u[(b + 1) % n];
            if drop < 0.05 * osc {
                continue;
            }
            let width = drop / -j;
            if width < cells && worst.is_none_or(|(_, w)| width < w) {
                worst = Some((i, width));
            }
        }
        worst.map(|(i, _)| i)
    }
}

/// Advances from the profiles to `t_end`, stopping early on a guard or a
/// collapsed step.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.grid.validate()?;
    if !(cfg.t_end > 0.0) {
        return Err(LabError::InvalidData("t_end must be positive".into()));
    }
    let mut outputs: Vec<f64> = cfg.output_times.iter().copied().filter(|t| *t <= cfg.t_end).collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    let history_dt = cfg.history_dt.unwrap_or(cfg.t_end / 2000.0);

    let mut prim = GridState::from_profiles(cfg.grid, &cfg.rho0, &cfg.u0);
    check_finite(0.0, &[&prim.rho, &prim.u])?;
    if let Some(i) = prim.rho.iter().position(|r| *r < 0.0) {
        return Err(LabError::InvalidData(format!("negative initial density in cell {i}")));
    }
    let mut aug = (cfg.mode == Mode::Augmented).then(|| AugGridState::seeded(&prim));
    let probe = Probe {
        cfg,
        gap_sign: initial_gap_sign(&cfg.spec, &prim.u),
    };

    let mut res = RunResult {
        mode: cfg.mode,
        grid: cfg.grid,
        cfl: cfg.cfl,
        snapshots: Vec::new(),
        aug_snapshots: Vec::new(),
        monitors: Vec::new(),
        termination: RunTermination::ReachedT,
        history: Vec::new(),
        clip_count: 0,
        steps: 0,
    };
    let mut next_out = 0;
    let mut last_frame = f64::NEG_INFINITY;

    loop {
        let q_defect = aug.as_ref().map(q_consistency);
        let (mon, e, guard) = probe.monitor(&prim, q_defect);
        let q_guard = aug
            .as_ref()
            .and_then(|a| a.q.iter().position(|q| *q < -cfg.guards.blowup));
        let t = prim.t;
        let done = t >= cfg.t_end;
        if t - last_frame >= history_dt || done || guard.is_some() || q_guard.is_some() {
            res.history.push(HistoryFrame {
                t,
                rho: prim.rho.clone(),
                u: prim.u.clone(),
                e,
            });
            last_frame = t;
        }
        res.monitors.push(mon);
        while next_out < outputs.len() && outputs[next_out] <= t {
            res.snapshots.push(prim.clone());
            if let Some(a) = &aug {
                res.aug_snapshots.push(a.clone());
            }
            next_out += 1;
        }
        if let Some(cell) = guard.or(q_guard) {
            res.termination = RunTermination::BlowupGuard {
                t,
                cell,
                x: cfg.grid.center(cell),
            };
            return Ok(res);
        }
        if done {
            return Ok(res);
        }

        let mut dt = match cfl_dt(&prim, &cfg.spec, cfg.cfl) {
            Ok(dt) => dt,
            Err(LabError::CflCollapse { t, .. }) => {
                res.termination = RunTermination::CflCollapse { t };
                return Ok(res);
            }
            Err(e) => return Err(e),
        };
        let target = outputs.get(next_out).copied().unwrap_or(cfg.t_end).min(cfg.t_end);
        if t + dt >= target {
            dt = target - t;
        }
        let clips = match aug.as_mut() {
            Some(a) => {
                let (next, clips) = advance_augmented(a, &cfg.spec, dt)?;
                *a = next;
                a.t = if (a.t - target).abs() <= 1e-12 * target.abs().max(1.0) {
                    target
                } else {
                    a.t
                };
                prim = a.primitive();
                clips
            }
            None => {
                let (mut next, clips) = advance_primitive(&prim, &cfg.spec, dt)?;
                if (next.t - target).abs() <= 1e-12 * target.abs().max(1.0) {
                    next.t = target;
                }
                prim = next;
                clips
            }
        };
        res.clip_count += clips;
        res.steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::{pressureless_exact, PressurelessPoint};
    use proptest::prelude::*;

    const AFFINE: ClosureSpec = ClosureSpec::Affine { a: 1.0, b: 1.0 };

    fn periodic(n: usize) -> GridSpec {
        GridSpec {
            x_lo: 0.0,
            x_hi: 2.0 * std::f64::consts::PI,
            n_cells: n,
            boundary: Boundary::Periodic,
        }
    }

    fn flat(grid: GridSpec, rho: f64, u: f64) -> GridState {
        GridState {
            t: 0.0,
            grid,
            rho: vec![rho; grid.n_cells],
            u: vec![u; grid.n_cells],
        }
    }

    #[test]
    fn cfl_examples() {
        let grid = GridSpec {
            x_lo: 0.0,
            x_hi: 10.0,
            n_cells: 100,
            boundary: Boundary::Periodic,
        };
        let s = flat(grid, 1.0, 0.0);
        assert!((cfl_dt(&s, &AFFINE, 0.5).unwrap() - 0.05).abs() < 1e-15);

        let still = flat(grid, 0.0, 0.0);
        let dt = cfl_dt(&still, &ClosureSpec::PressurelessIdentity, 0.5).unwrap();
        assert!(dt.is_finite() && dt > 1e9);

        let mut fast = flat(grid, 0.0, 0.0);
        fast.u[3] = 10.0;
        fast.u[7] = -10.0;
        let dt = cfl_dt(&fast, &ClosureSpec::PressurelessIdentity, 0.5).unwrap();
        assert!((dt - 0.5 * 0.1 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn cfl_collapse() {
        let grid = periodic(16);
        let mut s = flat(grid, 0.0, 0.0);
        s.u[0] = 1e14;
        assert!(matches!(
            cfl_dt(&s, &ClosureSpec::PressurelessIdentity, 0.5),
            Err(LabError::CflCollapse { .. })
        ));
    }

    #[test]
    fn constant_state_relaxes() {
        let s = flat(periodic(32), 0.4, 0.1);
        let dt = 0.01;
        let next = step_primitive(&s, &AFFINE, dt).unwrap();
        let expect = 0.1 + dt * 0.4 * (0.9 - 0.1);
        assert!(next.rho.iter().all(|r| (r - 0.4).abs() < 1e-15));
        assert!(next.u.iter().all(|u| (u - expect).abs() < 1e-15));
    }

    #[test]
    fn equilibrium_is_fixed() {
        let s = flat(periodic(32), 0.7, 0.5);
        let mut cur = s.clone();
        for _ in 0..100 {
            cur = step_primitive(&cur, &AFFINE, 0.01).unwrap();
        }
        assert!(cur.u.iter().all(|u| *u == 0.5));
    }

    #[test]
    fn augmented_constant_state() {
        let s = AugGridState {
            t: 0.0,
            grid: periodic(16),
            n: vec![0.5; 16],
            v: vec![0.0; 16],
            q: vec![0.2; 16],
        };
        let next = step_augmented(&s, &AFFINE, 0.01).unwrap();
        // n' = f_v n (n - q) = -0.15, v' = n (f - v) = 0.5, q' = q (n - q) = 0.06
        assert!(next.n.iter().all(|v| (v - (0.5 - 0.0015)).abs() < 1e-15));
        assert!(next.v.iter().all(|v| (v - 0.005).abs() < 1e-15));
        assert!(next.q.iter().all(|v| (v - (0.2 + 0.0006)).abs() < 1e-15));
    }

    #[test]
    fn q_consistency_detects_corruption() {
        let grid = periodic(100);
        let prim = GridState::from_profiles(
            grid,
            &ProfileSpec::sine(0.1, 1.0, 0.2),
            &ProfileSpec::sine(0.1, 1.0, 0.0),
        );
        let mut aug = AugGridState::seeded(&prim);
        assert!(q_consistency(&aug) < 1e-15);
        aug.q[40] += 1.0;
        assert!(q_consistency(&aug) >= 1.0 - 1e-12);
    }

    #[test]
    fn augmented_one_step_drift_is_small() {
        for n in [100, 200, 400] {
            let grid = periodic(n);
            let prim = GridState::from_profiles(
                grid,
                &ProfileSpec::sine(0.1, 1.0, 0.2),
                &ProfileSpec::sine(0.1, 1.0, 0.0),
            );
            let aug = AugGridState::seeded(&prim);
            let dt = cfl_dt(&prim, &AFFINE, 0.5).unwrap();
            let next = step_augmented(&aug, &AFFINE, dt).unwrap();
            assert!(q_consistency(&next) < 2.0 * grid.dx(), "N={n}");
        }
    }

    #[test]
    fn zero_data_is_steady() {
        let grid = GridSpec {
            x_lo: -5.0,
            x_hi: 5.0,
            n_cells: 64,
            boundary: Boundary::OutflowExtrapolate,
        };
        let cfg = RunConfig::new(
            ClosureSpec::PressurelessIdentity,
            ProfileSpec::constant(0.0),
            ProfileSpec::constant(0.0),
            grid,
            3.0,
        );
        let res = run(&cfg).unwrap();
        assert_eq!(res.termination, RunTermination::ReachedT);
        let last = res.snapshots.last().unwrap();
        assert_eq!(last.t, 3.0);
        assert!(last.rho.iter().chain(&last.u).all(|v| *v == 0.0));
    }

    #[test]
    fn snapshots_at_requested_times() {
        let mut cfg = RunConfig::new(
            AFFINE,
            ProfileSpec::sine(0.1, 1.0, 0.2),
            ProfileSpec::constant(0.0),
            periodic(64),
            1.0,
        );
        cfg.output_times = vec![0.0, 0.25, 0.5, 1.0];
        let res = run(&cfg).unwrap();
        let ts: Vec<f64> = res.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.25, 0.5, 1.0]);
        assert!(res.monitors.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(res.monitors.len(), res.steps + 1);
    }

    #[test]
    fn pressureless_oracle_refinement() {
        let rho0 = ProfileSpec::constant(1.0);
        let u0 = ProfileSpec::tanh(-0.5);
        let mut errs = Vec::new();
        for n in [100, 200, 400] {
            let grid = GridSpec {
                x_lo: -5.0,
                x_hi: 5.0,
                n_cells: n,
                boundary: Boundary::OutflowExtrapolate,
            };
            let res = run(&RunConfig::new(ClosureSpec::PressurelessIdentity, rho0, u0, grid, 1.0)).unwrap();
            let s = res.snapshots.last().unwrap();
            let oracle = crate::characteristics::PressurelessOracle::new(rho0, u0);
            let err: f64 = grid
                .centers()
                .iter()
                .zip(&s.rho)
                .map(|(&x, r)| {
                    let a = oracle.label(1.0, x).unwrap();
                    match pressureless_exact(&rho0, &u0, a, 1.0) {
                        PressurelessPoint::Point { rho, .. } => (r - rho).abs(),
                        PressurelessPoint::BlowupAt(_) => unreachable!(),
                    }
                })
                .sum::<f64>()
                * grid.dx();
            errs.push(err);
        }
        assert!(errs[0] / errs[1] >= 1.5 && errs[1] / errs[2] >= 1.5, "{errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mass_conserved_and_rho_nonnegative(a1 in 0.0f64..0.2, k in 1u32..4, b1 in -0.5f64..0.5, base in 0.0f64..0.3) {
            let grid = periodic(64);
            let rho0 = ProfileSpec::sine(a1.min(base), k as f64, base);
            let u0 = ProfileSpec::sine(b1, 1.0, 0.1);
            let mut s = GridState::from_profiles(grid, &rho0, &u0);
            let m0 = s.mass();
            for _ in 0..50 {
                let dt = cfl_dt(&s, &AFFINE, 0.5).unwrap();
                let (next, clips) = advance_primitive(&s, &AFFINE, dt).unwrap();
                prop_assert_eq!(clips, 0);
                s = next;
                prop_assert!((s.mass() - m0).abs() <= 1e-12 * (1.0 + m0));
                prop_assert!(s.rho.iter().all(|r| *r >= 0.0));
            }
        }
    }
}
