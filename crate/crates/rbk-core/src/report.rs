//! CSV and JSON emitters for runs, checks, sweeps and oracle comparisons.
//!
//! Every output file carries the config hash for provenance (a `#` comment
//! line in CSV, a field in JSON) and floating-point values are written with
//! 17 significant digits so files reproduce bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

use crate::config::RunConfig;
use crate::convergence::{OrderReport, SweepReport};
use crate::error::Result;
use crate::invariants::BoundReport;
use crate::kernel::AdmissibilityReport;
use crate::mc::{McReport, ZScore};
use crate::solver::Trajectory;

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_moments_csv(path: &Path, traj: &Trajectory, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    let tails: Vec<String> = traj
        .tail_thresholds
        .iter()
        .map(|r| format!("tail_{r}"))
        .collect();
    if tails.is_empty() {
        writeln!(w, "tau,M0,M1,norm01")?;
    } else {
        writeln!(w, "tau,M0,M1,norm01,{}", tails.join(","))?;
    }
    for s in &traj.snapshots {
        let m = &s.moments;
        let mut row = vec![fmt_f64(s.tau), fmt_f64(m.m0), fmt_f64(m.m1), fmt_f64(m.norm01)];
        row.extend(m.tail.iter().map(|(_, t)| fmt_f64(*t)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "tau,s,f")?;
    for snap in &traj.snapshots {
        for (i, v) in snap.f.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(snap.tau),
                fmt_f64(traj.grid().size(i)),
                fmt_f64(*v)
            )?;
        }
    }
    Ok(())
}

pub fn write_run_report_json(
    path: &Path,
    cfg: &RunConfig,
    traj: &Trajectory,
    checks: Option<&[BoundReport]>,
) -> Result<()> {
    let hash = cfg.config_hash();
    let moments: Vec<_> = traj
        .snapshots
        .iter()
        .map(|s| {
            json!({
                "tau": s.tau,
                "m0": s.moments.m0,
                "m1": s.moments.m1,
                "norm01": s.moments.norm01,
                "tail": s.moments.tail,
                "collision_integral": s.collision_integral,
                "number_loss_integral": s.number_loss_integral,
            })
        })
        .collect();
    let halvings: u32 = traj.steps.iter().map(|s| s.halvings).sum();
    let clamped: f64 = traj.steps.iter().map(|s| s.clamped_mass).sum();
    let mut doc = json!({
        "config_hash": hash,
        "config": cfg,
        "moments": moments,
        "steps": {
            "count": traj.steps.len(),
            "total_halvings": halvings,
            "total_clamped_mass": clamped,
        },
    });
    if let Some(reports) = checks {
        doc["checks"] = serde_json::to_value(reports).unwrap_or_default();
        doc["all_checks_pass"] = json!(reports.iter().all(|r| r.pass || r.qualitative));
    }
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|e| crate::error::RbkError::Io(std::io::Error::other(e)))?;
    writeln!(w)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, report: &SweepReport, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "n1,n2,psi,D")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(row.n_low),
            fmt_f64(row.n_high),
            row.psi,
            fmt_f64(row.distance)
        )?;
    }
    Ok(())
}

pub fn write_orders_csv(path: &Path, report: &OrderReport, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "quantity,p_hat,note")?;
    for row in &report.rows {
        let p = row.p_hat.map(fmt_f64).unwrap_or_else(|| "nan".into());
        writeln!(w, "{},{},{}", row.quantity, p, row.note)?;
    }
    Ok(())
}

pub fn write_mc_csv(path: &Path, report: &McReport, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "replica,checkpoint_t,count,M0,M1")?;
    for rep in &report.replicas {
        for row in &rep.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                rep.replica,
                fmt_f64(row.checkpoint),
                row.count,
                fmt_f64(row.m0),
                fmt_f64(row.m1)
            )?;
        }
    }
    Ok(())
}

pub fn write_mc_summary_csv(path: &Path, report: &McReport, hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "checkpoint_t,m0_mean,m0_stderr,m1_mean,m1_stderr")?;
    for s in &report.summary {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(s.checkpoint),
            fmt_f64(s.m0_mean),
            fmt_f64(s.m0_stderr),
            fmt_f64(s.m1_mean),
            fmt_f64(s.m1_stderr)
        )?;
    }
    Ok(())
}

pub fn write_ztable_csv(path: &Path, scores: &[ZScore], hash: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "# config_hash = {hash}")?;
    writeln!(w, "checkpoint_t,moment,pde,mc_mean,stderr,z")?;
    for s in scores {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(s.checkpoint),
            s.moment,
            fmt_f64(s.pde),
            fmt_f64(s.mc_mean),
            fmt_f64(s.stderr),
            fmt_f64(s.z)
        )?;
    }
    Ok(())
}

pub fn write_check_report_json(path: &Path, cfg: &RunConfig, checks: &[BoundReport]) -> Result<()> {
    let doc = json!({
        "config_hash": cfg.config_hash(),
        "config": cfg,
        "checks": checks,
        "all_pass": checks.iter().all(|r| r.pass || r.qualitative),
    });
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|e| crate::error::RbkError::Io(std::io::Error::other(e)))?;
    writeln!(w)?;
    Ok(())
}

pub fn write_admissibility_json(path: &Path, cfg: &RunConfig, report: &AdmissibilityReport) -> Result<()> {
    let checks: Vec<_> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "pass": c.pass,
                "witness": [c.witness.0, c.witness.1],
                "worst": c.worst,
                "detail": c.detail,
            })
        })
        .collect();
    let doc = json!({
        "config_hash": cfg.config_hash(),
        "checks": checks,
        "all_pass": report.all_pass(),
    });
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|e| crate::error::RbkError::Io(std::io::Error::other(e)))?;
    writeln!(w)?;
    Ok(())
}
