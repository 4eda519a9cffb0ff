use std::io::Write;
use std::path::Path;

use anyhow::Context;

use treeshrink::benchmark::BenchRow;
use treeshrink::reduce::ReductionReport;
use treeshrink::ScenarioTree;

use crate::manifest::RunManifest;

/// Nine significant digits, fixed notation for moderate magnitudes.
pub fn significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exponent) {
        format!("{:.*}", (8 - exponent).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

pub fn write_tree(tree: &ScenarioTree, path: Option<&Path>, manifest: &mut RunManifest) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            treeshrink::save(tree, path).with_context(|| format!("cannot write {}", path.display()))?;
            manifest.outputs.push(path.to_path_buf());
            manifest.primary = Some(path.to_path_buf());
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", tree.to_json()?)?;
        }
    }
    Ok(())
}

/// `iter,delta00,nd,seconds`, one row per outer iteration.
pub fn write_trace(report: &ReductionReport, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["iter", "delta00", "nd", "seconds"])?;
    for (k, ((delta, nd), secs)) in report.delta_trace.iter().zip(&report.nd_trace).zip(&report.iteration_seconds).enumerate() {
        w.write_record([(k + 1).to_string(), delta.to_string(), nd.to_string(), secs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench(rows: &[BenchRow], path: Option<&Path>, manifest: &mut RunManifest) -> anyhow::Result<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if let Some(p) = path {
        manifest.outputs.push(p.to_path_buf());
        manifest.primary = Some(p.to_path_buf());
    }
    Ok(())
}
