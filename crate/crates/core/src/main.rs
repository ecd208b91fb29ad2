use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use threshold_lab::scenario::{error_exit_code, load_config, run_scenario, sweep, Overrides};
use threshold_lab::LabError;

#[derive(Parser)]
#[command(
    name = "threshold-lab",
    version,
    about = "Classify, simulate and audit relaxation-system scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (default: $THRESHOLD_LAB_OUT, else ./out).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, env = "THRESHOLD_LAB_OUT", hide_env_values = true, hide = true)]
    out_root: Option<PathBuf>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

impl Common {
    fn out_dir(&self, leaf: Option<&str>) -> PathBuf {
        match (&self.out, &self.out_root) {
            (Some(o), _) => o.clone(),
            (None, Some(root)) => leaf.map_or(root.clone(), |l| root.join(l)),
            (None, None) => leaf.map_or(PathBuf::from("out"), |l| PathBuf::from("out").join(l)),
        }
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            cfl: self.cfl,
            cells: self.cells,
            t_end: self.t_end,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run several scenarios and write sweep.csv.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn fail(e: &LabError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, common } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Err(e) = cfg.apply(&common.overrides()) {
                return fail(&e);
            }
            let dir = common.out_dir(Some(&cfg.name));
            match run_scenario(&cfg, &dir) {
                Ok(o) => {
                    let v = &o.diagnostics.verdict;
                    println!(
                        "{}: {:?} / {} | {:?} at t = {} | audit {}/{} pass | {}",
                        cfg.name,
                        v.branch,
                        v.outcome.label(),
                        o.run.termination,
                        o.run.final_time(),
                        o.audit_pass_count(),
                        o.diagnostics.audit.len(),
                        dir.display()
                    );
                    ExitCode::from(o.exit_code() as u8)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep {
            configs,
            parallel,
            common,
        } => {
            let mut cfgs = Vec::new();
            for p in &configs {
                let mut c = match load_config(p) {
                    Ok(c) => c,
                    Err(e) => return fail(&e),
                };
                if let Err(e) = c.apply(&common.overrides()) {
                    return fail(&e);
                }
                cfgs.push(c);
            }
            let dir = common.out_dir(None);
            match sweep(&cfgs, &dir, parallel) {
                Ok(rows) => {
                    for r in &rows {
                        println!("{}: {:?} / {} (exit {})", r.name, r.branch, r.outcome, r.exit_code);
                    }
                    let code = rows.iter().map(|r| r.exit_code).max().unwrap_or(0);
                    ExitCode::from(code as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}
