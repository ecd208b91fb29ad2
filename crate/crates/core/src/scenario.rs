//! Scenario files, the classify/run/audit pipeline and its CSV/JSON artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::characteristics::{
    estimate_blowup_rate, integrate_e_ode, trace_path, EOdeResult, FieldHistory, PathKind, PathTrace, RateFit,
    RiemannTable, Termination, TraceOptions, PATH_TOL,
};
use crate::closures::{ClosureSpec, StructureReport};
use crate::error::{LabError, Result};
use crate::grid::{self, Boundary, GridSpec, Guards, Mode, RunConfig, RunResult, RunTermination};
use crate::profile::ProfileSpec;
use crate::thresholds::{
    audit, audit_paths, classify, compute_bounds, riemann_table_for, AuditCheck, BoundsReport, Branch, Hypothesis,
    Outcome, ThresholdVerdict, Tolerances,
};

pub const PATH_COUNT: usize = 16;
pub const MIN_CELLS: usize = 16;
const DEFAULT_OUTPUTS: usize = 11;

fn default_grid() -> GridSpec {
    GridSpec {
        x_lo: 0.0,
        x_hi: 2.0 * std::f64::consts::PI,
        n_cells: 400,
        boundary: Boundary::Periodic,
    }
}

fn default_cfl() -> f64 {
    0.5
}

fn default_t_end() -> f64 {
    10.0
}

fn default_c() -> f64 {
    Tolerances::default().c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub closure: ClosureSpec,
    pub rho0: ProfileSpec,
    pub u0: ProfileSpec,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Defaults to 11 evenly spaced times on `[0, t_end]`.
    #[serde(default)]
    pub output_times: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub guards: Guards,
    #[serde(default)]
    pub seed: u64,
    /// Random shift of each path origin within its bin, as a fraction of the
    /// bin width, drawn from `seed`.
    #[serde(default)]
    pub path_jitter: f64,
    /// Forces a branch instead of auto-selection.
    #[serde(default)]
    pub branch: Option<Branch>,
    #[serde(default = "default_c")]
    pub tolerance_c: f64,
}

/// Command-line overrides.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub cfl: Option<f64>,
    pub cells: Option<usize>,
    pub t_end: Option<f64>,
}

impl ScenarioConfig {
    pub fn output_times(&self) -> Vec<f64> {
        match &self.output_times {
            Some(v) => v.clone(),
            None => (0..DEFAULT_OUTPUTS)
                .map(|k| self.t_end * k as f64 / (DEFAULT_OUTPUTS - 1) as f64)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(LabError::Validation(m.to_string()));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return fail("name must be non-empty and use only [A-Za-z0-9_.-]");
        }
        if self.grid.n_cells < MIN_CELLS {
            return fail("n_cells ≥ 16");
        }
        if !(self.grid.x_hi > self.grid.x_lo) || !self.grid.x_lo.is_finite() || !self.grid.x_hi.is_finite() {
            return fail("x_lo < x_hi, both finite");
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return fail("t_end > 0");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return fail("0 < cfl ≤ 1");
        }
        let out = self.output_times();
        if out.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) || out.windows(2).any(|w| w[1] < w[0]) {
            return fail("output_times ⊂ [0, t_end] sorted");
        }
        if !(self.guards.blowup > 0.0) || self.guards.front_cells.is_some_and(|c| !(c > 0.0)) {
            return fail("guards must be positive");
        }
        if !(0.0..=1.0).contains(&self.path_jitter) {
            return fail("0 ≤ path_jitter ≤ 1");
        }
        if !(self.tolerance_c > 0.0) {
            return fail("tolerance_c > 0");
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(c) = o.cfl {
            self.cfl = c;
        }
        if let Some(n) = o.cells {
            self.grid.n_cells = n;
        }
        if let Some(t) = o.t_end {
            self.t_end = t;
            if let Some(v) = &mut self.output_times {
                v.retain(|s| *s <= t);
            }
        }
        self.validate()
    }

    fn path_origins(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let w = (self.grid.x_hi - self.grid.x_lo) / PATH_COUNT as f64;
        (0..PATH_COUNT)
            .map(|k| {
                let shift = self.path_jitter * (rng.gen::<f64>() - 0.5);
                self.grid.x_lo + (k as f64 + 0.5 + shift) * w
            })
            .collect()
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        LabError::Parse {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            msg: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        msg: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_config(&text, path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathBlowup {
    pub path_id: usize,
    pub x0: f64,
    pub e0: f64,
    pub t_c_numeric: f64,
    pub t_c_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupRecord {
    pub tc_upper: f64,
    pub witness_x: f64,
    pub guard_t: Option<f64>,
    pub guard_x: Option<f64>,
    pub max_abs_rhox_at_stop: f64,
    pub max_abs_ux_at_stop: f64,
    /// Rate fit of the e-ODE driven by grid density along the witness path.
    pub path_rate_fit: Option<RateFit>,
    /// Rate fit of the grid `min e(t)` series.
    pub grid_rate_fit: Option<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub scheme: &'static str,
    #[serde(rename = "N")]
    pub n: usize,
    pub cfl: f64,
    pub boundary: Boundary,
    pub x_lo: f64,
    pub x_hi: f64,
    pub mode: Mode,
    pub t_end: f64,
    pub t_final: f64,
    pub steps: usize,
    pub clip_count: usize,
    pub termination: RunTermination,
    pub seed: u64,
    pub tolerance_c: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub name: String,
    pub verdict: ThresholdVerdict,
    pub hypothesis_log: Vec<Hypothesis>,
    pub bounds: BoundsReport,
    pub structure: Option<StructureReport>,
    pub audit: Vec<AuditCheck>,
    pub run_metadata: RunMetadata,
    pub blowup: Option<BlowupRecord>,
    pub path_blowups: Vec<PathBlowup>,
    pub path_failures: Vec<String>,
}

/// Everything the pipeline produced, kept in memory for callers.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub diagnostics: Diagnostics,
    pub run: RunResult,
    pub paths: Vec<(PathTrace, EOdeResult)>,
    pub witness: Option<(PathTrace, EOdeResult)>,
}

impl ScenarioOutcome {
    /// 0 on completion, 2 when the solver stopped on a collapsed time step.
    pub fn exit_code(&self) -> i32 {
        match self.run.termination {
            RunTermination::CflCollapse { .. } => 2,
            _ => 0,
        }
    }

    pub fn audit_pass_count(&self) -> usize {
        self.diagnostics.audit.iter().filter(|c| c.pass).count()
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.diagnostics.audit.iter().find(|c| c.name == name)
    }
}

/// 2 for solver failures, 1 for everything else.
pub fn error_exit_code(e: &LabError) -> i32 {
    match e {
        LabError::NonFinite { .. } | LabError::CflCollapse { .. } => 2,
        _ => 1,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn create(dir: &Path, file: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(file);
    let f = File::create(&path).map_err(|e| LabError::io(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

fn write_fields(dir: &Path, run: &RunResult, table: Option<&RiemannTable>) -> Result<()> {
    let (path, mut w) = create(dir, "fields.csv")?;
    let io = |e| LabError::io(&path, e);
    let aug = run.mode == Mode::Augmented;
    let mut header = "t,x,rho,u,e,R".to_string();
    if aug {
        header.push_str(",n,v,q,q_defect");
    }
    writeln!(w, "{header}").map_err(io)?;
    for (k, snap) in run.snapshots.iter().enumerate() {
        let e = snap.e();
        let a = if aug { run.aug_snapshots.get(k) } else { None };
        let vx = a.map(|a| a.grid.ddx(&a.v));
        for i in 0..snap.grid.n_cells {
            let r = table.and_then(|tb| tb.riemann(snap.rho[i].max(0.0), snap.u[i]).ok());
            write!(
                w,
                "{},{},{},{},{},{}",
                num(snap.t),
                num(snap.grid.center(i)),
                num(snap.rho[i]),
                num(snap.u[i]),
                num(e[i]),
                opt(r)
            )
            .map_err(io)?;
            if let (Some(a), Some(vx)) = (a, &vx) {
                let defect = (a.q[i] - a.n[i] - vx[i]).abs();
                write!(w, ",{},{},{},{}", num(a.n[i]), num(a.v[i]), num(a.q[i]), num(defect)).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn write_paths(dir: &Path, paths: &[&PathTrace]) -> Result<()> {
    let (path, mut w) = create(dir, "paths.csv")?;
    let io = |e| LabError::io(&path, e);
    writeln!(w, "path_id,kind,t,x,rho,u,e,R").map_err(io)?;
    for (id, p) in paths.iter().enumerate() {
        let kind = match p.kind {
            PathKind::XPath => "X",
            PathKind::YPath => "Y",
        };
        for s in &p.samples {
            writeln!(
                w,
                "{id},{kind},{},{},{},{},{},{}",
                num(s.t),
                num(s.x),
                num(s.rho),
                num(s.u),
                num(s.e),
                opt(s.r)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn write_json(dir: &Path, diag: &Diagnostics) -> Result<()> {
    let (path, mut w) = create(dir, "diagnostics.json")?;
    let io = |e| LabError::io(&path, e);
    serde_json::to_writer_pretty(&mut w, diag).map_err(|e| LabError::io(&path, e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

fn trace_with_ode(
    history: &FieldHistory,
    cfg: &ScenarioConfig,
    x0: f64,
    t_end: f64,
    ode_end: f64,
    table: Option<&RiemannTable>,
) -> Result<(PathTrace, EOdeResult)> {
    let opts = TraceOptions {
        riemann: table,
        ..TraceOptions::default()
    };
    let trace = trace_path(history, &cfg.closure, x0, PathKind::XPath, t_end, &opts)?;
    let e0 = cfg.u0.d1(x0) + cfg.rho0.value(x0);
    let ode = integrate_e_ode(&trace.rho_series(), e0, ode_end, PATH_TOL)?;
    Ok((trace, ode))
}

/// Runs classify, bounds, the grid solver, path tracing and the audit, and
/// writes `fields.csv`, `paths.csv` and `diagnostics.json` into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    // fail on unwritable directories before the expensive part
    create(out_dir, "diagnostics.json")?;

    let verdict = classify(&cfg.closure, &cfg.rho0, &cfg.u0, cfg.branch)?;
    let bounds = compute_bounds(&cfg.closure, &cfg.rho0, &cfg.u0)?;
    let table = riemann_table_for(&cfg.closure, &bounds);

    let mut rc = RunConfig::new(cfg.closure.clone(), cfg.rho0, cfg.u0, cfg.grid, cfg.t_end);
    rc.cfl = cfg.cfl;
    rc.output_times = cfg.output_times();
    rc.mode = cfg.mode;
    rc.guards = cfg.guards;
    rc.riemann = table.clone();
    let run = grid::run(&rc)?;

    let tol = Tolerances {
        c: cfg.tolerance_c,
        ..Tolerances::default()
    };
    let t_final = run.final_time();
    let mut paths = Vec::new();
    let mut witness = None;
    let mut failures = Vec::new();
    if run.history.len() >= 2 {
        let history = FieldHistory::new(
            run.history.clone(),
            cfg.grid.x_lo,
            cfg.grid.x_hi,
            cfg.grid.boundary,
            run.blowup_time(),
        )?;
        for (id, x0) in cfg.path_origins().into_iter().enumerate() {
            match trace_with_ode(&history, cfg, x0, t_final, t_final, table.as_ref()) {
                Ok(p) => paths.push(p),
                Err(e) => failures.push(format!("path {id} from x = {x0}: {e}")),
            }
        }
        if let Outcome::Blowup { tc_upper, witness_x } = verdict.outcome {
            // density is held at its last traced value past the end of the run
            let ode_end = tc_upper * (1.0 + tol.blowup_lag);
            match trace_with_ode(&history, cfg, witness_x, t_final, ode_end, table.as_ref()) {
                Ok(p) => witness = Some(p),
                Err(e) => failures.push(format!("witness path from x = {witness_x}: {e}")),
            }
        }
    }

    let mut checks = audit(&run, &bounds, &verdict, &tol).checks;
    let mut audited: Vec<(PathTrace, EOdeResult)> = paths.clone();
    audited.extend(witness.clone());
    checks.extend(audit_paths(
        &cfg.closure,
        &cfg.rho0,
        &cfg.u0,
        &bounds,
        &verdict,
        &audited,
        cfg.grid.dx(),
        &tol,
    ));

    let path_blowups = audited
        .iter()
        .enumerate()
        .filter_map(|(id, (p, ode))| {
            ode.blowup.map(|b| PathBlowup {
                path_id: id,
                x0: p.origin,
                e0: ode.samples[0].1,
                t_c_numeric: b.t_c_numeric,
                t_c_bound: b.t_c_bound,
            })
        })
        .collect();

    let blowup = match verdict.outcome {
        Outcome::Blowup { tc_upper, witness_x } => {
            let last = run.monitors.last();
            let grid_series: Vec<(f64, f64)> = run.monitors.iter().map(|m| (m.t, m.min_e)).collect();
            Some(BlowupRecord {
                tc_upper,
                witness_x,
                guard_t: run.blowup_time(),
                guard_x: match run.termination {
                    RunTermination::BlowupGuard { x, .. } => Some(x),
                    _ => None,
                },
                max_abs_rhox_at_stop: last.map_or(f64::NAN, |m| m.max_abs_rhox),
                max_abs_ux_at_stop: last.map_or(f64::NAN, |m| m.max_abs_ux),
                path_rate_fit: witness
                    .as_ref()
                    .and_then(|(_, ode)| estimate_blowup_rate(&ode.samples).ok()),
                grid_rate_fit: estimate_blowup_rate(&grid_series).ok(),
            })
        }
        _ => None,
    };

    let diagnostics = Diagnostics {
        name: cfg.name.clone(),
        hypothesis_log: verdict.hypothesis_log.clone(),
        verdict,
        structure: bounds.structure.clone(),
        bounds,
        audit: checks,
        run_metadata: RunMetadata {
            scheme: match cfg.mode {
                Mode::Primitive => "local Lax-Friedrichs flux for rho, upwind advection for u, explicit Euler",
                Mode::Augmented => "local Lax-Friedrichs on the diagonal (n, v, q) system, explicit Euler",
            },
            n: cfg.grid.n_cells,
            cfl: cfg.cfl,
            boundary: cfg.grid.boundary,
            x_lo: cfg.grid.x_lo,
            x_hi: cfg.grid.x_hi,
            mode: cfg.mode,
            t_end: cfg.t_end,
            t_final,
            steps: run.steps,
            clip_count: run.clip_count,
            termination: run.termination,
            seed: cfg.seed,
            tolerance_c: cfg.tolerance_c,
        },
        blowup,
        path_blowups,
        path_failures: failures,
    };

    write_fields(out_dir, &run, table.as_ref())?;
    let mut all: Vec<&PathTrace> = paths.iter().map(|p| &p.0).collect();
    if let Some(w) = &witness {
        all.push(&w.0);
    }
    write_paths(out_dir, &all)?;
    write_json(out_dir, &diagnostics)?;

    Ok(ScenarioOutcome {
        diagnostics,
        run,
        paths,
        witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub branch: Option<Branch>,
    pub outcome: String,
    pub tc_upper: Option<f64>,
    pub tc_numeric: Option<f64>,
    pub audit_pass_count: Option<usize>,
    pub exit_code: i32,
}

fn sweep_row(cfg: &ScenarioConfig, out_root: &Path) -> SweepRow {
    match run_scenario(cfg, &out_root.join(&cfg.name)) {
        Ok(o) => SweepRow {
            name: cfg.name.clone(),
            branch: Some(o.diagnostics.verdict.branch),
            outcome: o.diagnostics.verdict.outcome.label().to_string(),
            tc_upper: match o.diagnostics.verdict.outcome {
                Outcome::Blowup { tc_upper, .. } => Some(tc_upper),
                _ => None,
            },
            tc_numeric: o.run.blowup_time(),
            audit_pass_count: Some(o.audit_pass_count()),
            exit_code: o.exit_code(),
        },
        Err(e) => SweepRow {
            name: cfg.name.clone(),
            branch: None,
            outcome: format!("Error: {e}").replace([',', '\n'], ";"),
            tc_upper: None,
            tc_numeric: None,
            audit_pass_count: None,
            exit_code: error_exit_code(&e),
        },
    }
}

/// Runs each scenario into `out_root/<name>` and writes `out_root/sweep.csv`.
pub fn sweep(configs: &[ScenarioConfig], out_root: &Path, parallel: bool) -> Result<Vec<SweepRow>> {
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(LabError::Validation(format!("duplicate scenario name {}", w[0])));
    }
    fs::create_dir_all(out_root).map_err(|e| LabError::io(out_root, e))?;
    let rows: Vec<SweepRow> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = configs
                .iter()
                .map(|c| s.spawn(move || sweep_row(c, out_root)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scenario thread panicked"))
                .collect()
        })
    } else {
        configs.iter().map(|c| sweep_row(c, out_root)).collect()
    };

    let (path, mut w) = create(out_root, "sweep.csv")?;
    let io = |e| LabError::io(&path, e);
    writeln!(w, "name,branch,outcome,tc_upper,tc_numeric,audit_pass_count").map_err(io)?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.name,
            r.branch.map(|b| format!("{b:?}")).unwrap_or_default(),
            r.outcome,
            opt(r.tc_upper),
            opt(r.tc_numeric),
            r.audit_pass_count.map(|n| n.to_string()).unwrap_or_default()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(rows)
}

/// True when the path reached the end of the run without leaving the domain.
pub fn path_completed(p: &PathTrace) -> bool {
    !matches!(p.terminated, Termination::LeftDomain)
}
