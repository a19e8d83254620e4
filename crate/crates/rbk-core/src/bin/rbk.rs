//! `rbk` — run, check, sweep and cross-validate collision-difference
//! coagulation scenarios described by a TOML config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 check failure (including oracle z-scores and kernel admissibility).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use rbk_core::config::{parse_config, RunConfig};
use rbk_core::convergence::{resolution_sweep, truncation_sweep};
use rbk_core::error::RbkError;
use rbk_core::invariants::{corrupt_trajectory, run_all_checks};
use rbk_core::kernel::validate_admissibility;
use rbk_core::mc::{compare, run_ensemble, McInit, McSettings};
use rbk_core::report;
use rbk_core::residual::TestFunction;
use rbk_core::solver::{run, Trajectory};
use rbk_core::{init_density, moments};

#[derive(Parser)]
#[command(name = "rbk", version, about = "Collision-difference coagulation solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to $RBK_OUT, then the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config key; 0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario and write trajectory/moment reports.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the scenario and verify every configured bound.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Truncation-level and resolution sweeps.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validate the solver against the stochastic particle oracle.
    McCompare {
        #[command(flatten)]
        common: Common,
        /// Override the ensemble seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the kernel admissibility hypotheses and write the report.
    ValidateKernel {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RbkError::Numeric(_) => 3,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("RBK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf, PathBuf), RbkError> {
    let cfg = parse_config(&common.config)?;
    let threads = common.threads.unwrap_or(cfg.threads);
    if threads > 0 {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, base, out_dir(common)))
}

fn run_scenario(cfg: &RunConfig, base: &Path) -> Result<Trajectory, RbkError> {
    let spec = cfg.build_kernel(base)?;
    let grid = cfg.build_grid()?;
    let family = cfg.build_initial(base)?;
    let f0 = init_density(&family, &grid)?;
    run(&spec, &f0, &cfg.build_solver(), &cfg.checks.tail_r)
}

fn dispatch(cli: Cli) -> Result<i32, RbkError> {
    match cli.command {
        Command::Run { common } => {
            let (cfg, base, out) = setup(&common)?;
            let traj = run_scenario(&cfg, &base)?;
            let hash = cfg.config_hash();
            report::write_moments_csv(&out.join("moments.csv"), &traj, &hash)?;
            report::write_trajectory_csv(&out.join("trajectory.csv"), &traj, &hash)?;
            report::write_run_report_json(&out.join("report.json"), &cfg, &traj, None)?;
            let last = traj.last();
            println!(
                "run complete: tau = {}, M0 = {:.6}, M1 = {:.6}, {} snapshots -> {}",
                last.tau,
                last.moments.m0,
                last.moments.m1,
                traj.snapshots.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Check { common } => {
            let (cfg, base, out) = setup(&common)?;
            let mut traj = run_scenario(&cfg, &base)?;
            if let Some(corruption) = cfg.build_corruption() {
                corrupt_trajectory(&mut traj, &corruption);
                println!("note: corruption fixture applied ({corruption:?})");
            }
            let reports = run_all_checks(&traj, &cfg.build_check_params())?;
            report::write_check_report_json(&out.join("check_report.json"), &cfg, &reports)?;
            let mut failed = 0;
            for r in &reports {
                let verdict = if r.pass { "pass" } else { "FAIL" };
                println!(
                    "[{verdict}] {:<32} lhs = {:.6e} rhs = {:.6e} margin = {:.3e} ({})",
                    r.check, r.lhs, r.rhs, r.margin, r.witness
                );
                if !r.pass && !r.qualitative {
                    failed += 1;
                }
            }
            if failed > 0 {
                println!("{failed} check(s) failed -> {}", out.join("check_report.json").display());
                Ok(4)
            } else {
                println!("all checks passed -> {}", out.join("check_report.json").display());
                Ok(0)
            }
        }
        Command::Sweep { common } => {
            let (cfg, base, out) = setup(&common)?;
            let sweep = cfg
                .sweep
                .clone()
                .ok_or_else(|| RbkError::Config("config has no [sweep] section".into()))?;
            let spec = cfg.build_kernel(&base)?;
            let family = cfg.build_initial(&base)?;
            let hash = cfg.config_hash();
            if sweep.levels.len() >= 2 {
                let bank = vec![
                    TestFunction::Constant(1.0),
                    TestFunction::MinWith(sweep.psi_min_cap),
                    TestFunction::Indicator { lo: 0.0, hi: 1.0 },
                ];
                let rep = truncation_sweep(
                    &spec,
                    &family,
                    cfg.grid.dx,
                    &cfg.build_solver(),
                    &sweep.levels,
                    &bank,
                )?;
                report::write_sweep_csv(&out.join("sweep.csv"), &rep, &hash)?;
                for row in &rep.rows {
                    println!(
                        "D({}, {}; {}) = {:.6e}",
                        row.n_low, row.n_high, row.psi, row.distance
                    );
                }
            }
            let orders = resolution_sweep(
                &spec,
                &family,
                cfg.grid.n,
                cfg.grid.dx,
                &cfg.build_solver(),
                sweep.dx_halvings,
                sweep.dt_halvings,
            )?;
            report::write_orders_csv(&out.join("orders.csv"), &orders, &hash)?;
            for row in &orders.rows {
                match row.p_hat {
                    Some(p) => println!("order {:<24} p_hat = {p:.3} ({})", row.quantity, row.note),
                    None => println!("order {:<24} {}", row.quantity, row.note),
                }
            }
            println!("sweep reports -> {}", out.display());
            Ok(0)
        }
        Command::McCompare { common, seed } => {
            let (mut cfg, base, out) = setup(&common)?;
            let mc = cfg
                .mc
                .clone()
                .ok_or_else(|| RbkError::Config("config has no [mc] section".into()))?;
            if let Some(s) = seed {
                cfg.mc.as_mut().unwrap().seed = s;
            }
            let mc_seed = seed.unwrap_or(mc.seed);

            let spec = cfg.build_kernel(&base)?;
            let grid = cfg.build_grid()?;
            let family = cfg.build_initial(&base)?;
            let f0 = init_density(&family, &grid)?;
            let traj = run(&spec, &f0, &cfg.build_solver(), &cfg.checks.tail_r)?;

            let m0_0 = moments(&f0, &[]).m0;
            let v_base = match mc.v_mode.as_str() {
                "particle_count" => mc.particles as f64,
                _ => mc.particles as f64 / m0_0,
            };
            let settings = McSettings {
                count: mc.particles,
                replicas: mc.replicas,
                seed: mc_seed,
                v: v_base * mc.v_scale,
                t_end: cfg.solver.t_end,
                checkpoints: mc.checkpoints.clone(),
            };
            let ensemble = if mc.grid_matched {
                run_ensemble(&spec, McInit::GridDensity(&f0), &settings)?
            } else {
                run_ensemble(&spec, McInit::Family(&family), &settings)?
            };
            let scores = compare(&traj, &ensemble)?;

            let hash = cfg.config_hash();
            report::write_mc_csv(&out.join("mc.csv"), &ensemble, &hash)?;
            report::write_mc_summary_csv(&out.join("mc_summary.csv"), &ensemble, &hash)?;
            report::write_ztable_csv(&out.join("ztable.csv"), &scores, &hash)?;

            let mut worst = 0.0f64;
            for s in &scores {
                println!(
                    "t = {:<6} {}: pde = {:.6e} mc = {:.6e} ± {:.2e}  z = {:+.2}",
                    s.checkpoint, s.moment, s.pde, s.mc_mean, s.stderr, s.z
                );
                worst = worst.max(s.z.abs());
            }
            if worst > mc.z_max {
                println!("|z| = {worst:.2} exceeds {} -> {}", mc.z_max, out.display());
                Ok(4)
            } else {
                println!("all |z| <= {} -> {}", mc.z_max, out.display());
                Ok(0)
            }
        }
        Command::ValidateKernel { common } => {
            let (cfg, base, out) = setup(&common)?;
            let spec = cfg.build_kernel(&base)?;
            let rep = validate_admissibility(&spec, cfg.grid.dx, cfg.grid.n, 1e-9)?;
            report::write_admissibility_json(&out.join("admissibility.json"), &cfg, &rep)?;
            for c in &rep.checks {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                println!(
                    "[{verdict}] {:<18} worst = {:.6e} at ({:.4}, {:.4}) — {}",
                    c.name, c.worst, c.witness.0, c.witness.1, c.detail
                );
            }
            if rep.all_pass() {
                println!("kernel admissible -> {}", out.join("admissibility.json").display());
                Ok(0)
            } else {
                println!("kernel NOT admissible -> {}", out.join("admissibility.json").display());
                Ok(4)
            }
        }
    }
}
