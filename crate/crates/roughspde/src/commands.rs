//! The subcommands, as library functions.

use std::path::{Path, PathBuf};

use roughspde_core::noise::{sample_noise_slab, SlabRows};
use roughspde_core::regularity::{
    fit_exponent_with, kolmogorov_report, HEAVY_TAIL_ORDER, Bootstrap, Direction, ExponentFit, ExponentTarget, KolmogorovReport,
    MomentTable,
};
use roughspde_core::solver::{picard_solve_slab, solve_with_rows, Scheme};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::formats;
use crate::manifest::{read_manifest, verify_checksums, Recorder, RunManifest};
use crate::mc;
use crate::plot::fit_svg;
use crate::verify::{run_suite, Suite, SuiteReport};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    /// Overrides already applied to the config, for the manifest.
    pub overrides: Vec<String>,
}

const WINDOW_NOTE: &str =
    "sup over (t, x) replaced by the max over the observation window after the ramp-in period";

/// Solve one path (or its Picard iterates) and write the fields.
pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let resolved = cfg.resolve()?;
    let exp = &resolved.experiment;
    let h = exp.hurst.value();
    let mut rec = Recorder::new(&opts.out, "simulate", Some(cfg), &opts.overrides, 1)?;
    let w = exp.homogeneous()?;
    formats::write_homogeneous(&rec.path("homogeneous.bin"), &w, h, exp.seed)?;
    rec.record("homogeneous.bin")?;
    let slab = sample_noise_slab(&exp.grid, exp.hurst, exp.seed)?;
    formats::write_noise_slab(&rec.path("noise.bin"), &slab)?;
    rec.record("noise.bin")?;
    rec.stage("setup");
    let grid = exp.grid;
    let slice = |rec: &mut Recorder, name: &str, u: &[f64]| -> Result<()> {
        formats::write_field_csv(&rec.path(name), &grid, u, [grid.nt], 0..grid.nx, "u")?;
        rec.record(name)
    };
    match resolved.scheme {
        Scheme::MildStep => {
            let field = solve_with_rows(&w, exp.sigma, &mut SlabRows { slab: &slab }, exp.seed, 0)?;
            rec.stage("solve");
            formats::write_solution_field(&rec.path("field.bin"), &field, h)?;
            rec.record("field.bin")?;
            slice(&mut rec, "final_slice.csv", &field.u)?;
        }
        Scheme::Picard(n) => {
            let seq = picard_solve_slab(&w, exp.sigma, &slab, n)?;
            rec.stage("picard");
            for (k, f) in seq.fields.iter().enumerate().skip(1) {
                let name = format!("picard_iter_{k}.bin");
                formats::write_solution_field(&rec.path(&name), f, h)?;
                rec.record(&name)?;
            }
            formats::write_distances(&rec.path("distances.csv"), &seq.distances)?;
            rec.record("distances.csv")?;
            slice(&mut rec, "final_slice.csv", &seq.fields[n].u)?;
        }
    }
    rec.stage("write");
    rec.finish()
}

#[derive(Debug, Clone)]
pub struct MomentsOutcome {
    pub manifest: RunManifest,
    pub tables: Vec<MomentTable>,
    pub fits: Vec<ExponentFit>,
    pub report: KolmogorovReport,
}

pub fn fit_tables(tables: &[MomentTable], bootstrap: Option<Bootstrap>) -> Result<Vec<ExponentFit>> {
    tables.iter().map(|t| Ok(fit_exponent_with(t, bootstrap)?)).collect()
}

pub fn report_for(fits: &[ExponentFit], cfg: &ExperimentConfig) -> KolmogorovReport {
    let split = |d| fits.iter().filter(|f| f.direction == d).copied().collect::<Vec<_>>();
    kolmogorov_report(
        &split(Direction::Space),
        &split(Direction::Time),
        ExponentTarget::new(cfg.kernels.kind, cfg.noise.hurst),
        cfg.tolerances.exponent,
    )
}

fn write_fit_outputs(
    rec: &mut Recorder,
    tables: &[MomentTable],
    fits: &[ExponentFit],
    report: Option<&KolmogorovReport>,
    plots: bool,
) -> Result<()> {
    formats::write_fits(&rec.path("fits.csv"), fits)?;
    rec.record("fits.csv")?;
    if let Some(r) = report {
        rec.write_text("kolmogorov.txt", &r.to_text())?;
        rec.write_json("kolmogorov.json", r)?;
    }
    if plots {
        for (t, f) in tables.iter().zip(fits) {
            rec.write_text(&format!("fit_{}_p{}.svg", t.direction.name(), t.p), &fit_svg(t, f))?;
        }
    }
    Ok(())
}

/// Parallel increment moments, exponent fits and the Kolmogorov summary.
pub fn cmd_moments(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MomentsOutcome> {
    let resolved = cfg.resolve()?;
    let exp = &resolved.experiment;
    let mut rec = Recorder::new(&opts.out, "moments", Some(cfg), &opts.overrides, opts.workers)?;
    rec.note(WINDOW_NOTE);
    for &p in cfg.regularity.orders.iter().filter(|&&p| p > HEAVY_TAIL_ORDER) {
        rec.warn(format!("p = {p}: |du|^p estimators are heavy-tailed, standard errors may be unreliable"));
    }
    let tables = match mc::increment_moments(exp, resolved.ladders.clone(), cfg.run.paths, opts.workers) {
        Ok(t) => t,
        Err(e) => {
            rec.manifest.partial = Some(format!("aborted, no tables written: {e}"));
            rec.finish()?;
            return Err(e);
        }
    };
    rec.stage("monte carlo");
    for t in &tables {
        let v = t.monotonicity_violations();
        if !v.is_empty() {
            rec.warn(format!("{} p={}: moments decrease at ladder rows {v:?}", t.direction.name(), t.p));
        }
    }
    let bootstrap =
        (cfg.regularity.bootstrap > 0).then_some(Bootstrap { resamples: cfg.regularity.bootstrap, seed: cfg.run.seed });
    let fits = fit_tables(&tables, bootstrap)?;
    let report = report_for(&fits, cfg);
    rec.stage("fit");
    formats::write_moment_tables(&rec.path("moments.csv"), &tables)?;
    rec.record("moments.csv")?;
    write_fit_outputs(&mut rec, &tables, &fits, Some(&report), cfg.regularity.plots)?;
    rec.stage("write");
    let manifest = rec.finish()?;
    Ok(MomentsOutcome { manifest, tables, fits, report })
}

/// Refit an existing moments CSV. Without per-path data the intervals come
/// from the standard errors alone.
pub fn cmd_fit(
    moments_csv: &Path,
    cfg: Option<&ExperimentConfig>,
    opts: &RunOptions,
) -> Result<(RunManifest, Vec<ExponentFit>, Option<KolmogorovReport>)> {
    let tables = formats::read_moment_tables(moments_csv)?;
    let mut rec = Recorder::new(&opts.out, "fit", cfg, &opts.overrides, 1)?;
    rec.note(format!("refit of {}", moments_csv.display()));
    let fits = fit_tables(&tables, None)?;
    let report = cfg.map(|c| report_for(&fits, c));
    write_fit_outputs(&mut rec, &tables, &fits, report.as_ref(), cfg.is_some_and(|c| c.regularity.plots))?;
    rec.stage("fit");
    Ok((rec.finish()?, fits, report))
}

pub fn cmd_verify(cfg: &ExperimentConfig, suite: Suite, opts: &RunOptions) -> Result<(RunManifest, SuiteReport)> {
    cfg.resolve()?;
    let mut rec = Recorder::new(&opts.out, &format!("verify {}", suite.name()), Some(cfg), &opts.overrides, opts.workers)?;
    let report = match run_suite(cfg, suite, opts.workers) {
        Ok(r) => r,
        Err(e) => {
            rec.manifest.partial = Some(format!("suite aborted: {e}"));
            rec.finish()?;
            return Err(e);
        }
    };
    rec.stage(suite.name());
    rec.write_text(&format!("verify_{}.txt", suite.name()), &report.to_text())?;
    rec.write_json(&format!("verify_{}.json", suite.name()), &report)?;
    Ok((rec.finish()?, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub text: String,
    pub corrupted: Vec<String>,
}

/// Summarize an output directory and re-verify its checksums.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary> {
    let m = read_manifest(dir)?;
    let corrupted = verify_checksums(dir, &m);
    let mut text = format!(
        "{} {} `{}`\nconfig hash {}\nworkers {}, wall time {:.2} s\n",
        m.tool, m.version, m.command, m.config_hash, m.workers, m.wall_seconds
    );
    for s in &m.stages {
        text += &format!("  stage {:<12} {:>9.3} s\n", s.name, s.seconds);
    }
    for w in &m.warnings {
        text += &format!("warning: {w}\n");
    }
    for n in &m.notes {
        text += &format!("note: {n}\n");
    }
    if let Some(p) = &m.partial {
        text += &format!("partial run: {p}\n");
    }
    text += &format!("{} files, ", m.files.len());
    if corrupted.is_empty() {
        text += "all checksums verified\n";
    } else {
        text += &format!("checksum mismatch: {}\n", corrupted.join(", "));
    }
    for f in &m.files {
        if f.name.ends_with(".txt") {
            let body = std::fs::read_to_string(dir.join(&f.name)).map_err(|e| CliError::io(dir.join(&f.name), e))?;
            text += &format!("\n== {} ==\n{body}", f.name);
        }
    }
    Ok(ReportSummary { text, corrupted })
}
