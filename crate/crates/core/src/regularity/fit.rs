//! Log-log regression of moment tables and the Kolmogorov summary.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand_distr::{Distribution, Uniform};

use super::{Direction, MomentTable};
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::rng::{self, StreamDomain};

/// Minimum ladder points for a fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self { resamples: 400, seed: 0 }
    }
}

/// Weighted least-squares fit of `ln m̂_p(h) = slope·ln h + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExponentFit {
    pub direction: Direction,
    pub p: f64,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// `slope / p`.
    pub exponent: f64,
    /// The wider of the standard-error and bootstrap intervals for `exponent`.
    pub ci95: (f64, f64),
    pub bootstrap_ci95: Option<(f64, f64)>,
    pub n_points: usize,
}

impl ExponentFit {
    pub fn ci_width(&self) -> f64 {
        self.ci95.1 - self.ci95.0
    }

    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }
}

struct Line {
    slope: f64,
    intercept: f64,
    /// Slope standard error implied by the weights alone.
    se_weights: f64,
    /// Weighted residual sum of squares.
    ssr: f64,
    r_squared: f64,
}

fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<Line> {
    let sw: f64 = ws.iter().sum();
    let xm = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ym = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().zip(ws).map(|(y, w)| w * (y - ym) * (y - ym)).sum();
    if !(sxx > 1e-300) || !sxx.is_finite() {
        return Err(Error::SingularDesign);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| {
            let r = y - intercept - slope * x;
            w * r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(Line { slope, intercept, se_weights: libm::sqrt(1.0 / sxx), ssr, r_squared })
}

/// Fit with the default 400-resample path bootstrap.
pub fn fit_exponent(table: &MomentTable) -> Result<ExponentFit> {
    fit_exponent_with(table, Some(Bootstrap::default()))
}

/// Fit a moment table. Weights are `(stderr/m̂)^{−2}` when every row has a
/// positive standard error and equal otherwise. The bootstrap resamples whole
/// paths and needs the table's per-path values.
pub fn fit_exponent_with(table: &MomentTable, bootstrap: Option<Bootstrap>) -> Result<ExponentFit> {
    let n = table.rows.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Refused(format!("{n} ladder points given, a fit needs at least {MIN_FIT_POINTS}")));
    }
    for r in &table.rows {
        if !(r.moment > 0.0) {
            return Err(Error::NonPositiveMoment { lag: r.h });
        }
        if !(r.h > 0.0) {
            return Err(Error::InvalidInput(format!("lag {} is not positive", r.h)));
        }
    }
    let xs: Vec<f64> = table.rows.iter().map(|r| libm::log(r.h)).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| libm::log(r.moment)).collect();
    let known = table.rows.iter().all(|r| r.stderr > 0.0 && r.stderr.is_finite());
    let ws: Vec<f64> = if known {
        table.rows.iter().map(|r| libm::pow(r.moment / r.stderr, 2.0)).collect()
    } else {
        alloc::vec![1.0; n]
    };
    let line = weighted_line(&xs, &ys, &ws)?;
    let dof = (n - 2) as f64;
    let slope_stderr = if known {
        // inflate by the Birge ratio when the scatter exceeds the stated errors
        line.se_weights * libm::sqrt(line.ssr / dof).max(1.0)
    } else {
        line.se_weights * libm::sqrt(line.ssr / dof)
    };
    let p = table.p;
    let exponent = line.slope / p;
    let half = 1.96 * slope_stderr / p;
    let se_ci = (exponent - half, exponent + half);

    let bootstrap_ci95 = match bootstrap {
        Some(b) if b.resamples > 0 && table.per_path.len() >= 2 => Some(bootstrap_interval(table, &xs, &ws, b)?),
        _ => None,
    };
    let ci95 = match bootstrap_ci95 {
        Some(bc) if bc.1 - bc.0 > se_ci.1 - se_ci.0 => bc,
        _ => se_ci,
    };
    Ok(ExponentFit {
        direction: table.direction,
        p,
        slope: line.slope,
        intercept: line.intercept,
        slope_stderr,
        r_squared: line.r_squared,
        exponent,
        ci95,
        bootstrap_ci95,
        n_points: n,
    })
}

fn bootstrap_interval(table: &MomentTable, xs: &[f64], ws: &[f64], b: Bootstrap) -> Result<(f64, f64)> {
    let m = table.per_path.len();
    let lags = table.rows.len();
    let pick = Uniform::new(0, m).map_err(|_| Error::InvalidInput("empty path set".into()))?;
    let mut rng = rng::substream(b.seed, StreamDomain::Bootstrap, 0, 0);
    let mut exps = Vec::with_capacity(b.resamples);
    let mut sums = alloc::vec![0.0; lags];
    let mut ys = alloc::vec![0.0; lags];
    for _ in 0..b.resamples {
        sums.fill(0.0);
        for _ in 0..m {
            let row = &table.per_path[pick.sample(&mut rng)];
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        if sums.iter().any(|&s| !(s > 0.0)) {
            continue;
        }
        for (y, s) in ys.iter_mut().zip(&sums) {
            *y = libm::log(s / m as f64);
        }
        if let Ok(line) = weighted_line(xs, &ys, ws) {
            exps.push(line.slope / table.p);
        }
    }
    if exps.len() < 20 {
        return Err(Error::Refused("too few usable bootstrap resamples".into()));
    }
    exps.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (exps.len() - 1) as f64;
        let i = libm::floor(pos) as usize;
        let frac = pos - i as f64;
        if i + 1 < exps.len() {
            exps[i] * (1.0 - frac) + exps[i + 1] * frac
        } else {
            exps[i]
        }
    };
    Ok((q(0.025), q(0.975)))
}

/// Exponents the regularity theorem predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExponentTarget {
    pub space_exponent: f64,
    pub time_exponent: f64,
}

impl ExponentTarget {
    pub fn new(kind: KernelKind, hurst: f64) -> Self {
        Self { space_exponent: hurst, time_exponent: KernelSpec::new(kind, hurst).gamma }
    }

    pub fn for_direction(&self, d: Direction) -> f64 {
        match d {
            Direction::Space => self.space_exponent,
            Direction::Time => self.time_exponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Flag {
    #[cfg_attr(feature = "serde", serde(rename = "PASS"))]
    Pass,
    /// Fitted exponent above the target band.
    #[cfg_attr(feature = "serde", serde(rename = "FAIL-HIGH"))]
    FailHigh,
    #[cfg_attr(feature = "serde", serde(rename = "FAIL-LOW"))]
    FailLow,
}

impl Flag {
    pub fn compare(value: f64, target: f64, tol: f64) -> Self {
        if value > target + tol {
            Flag::FailHigh
        } else if value < target - tol {
            Flag::FailLow
        } else {
            Flag::Pass
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Flag::Pass => "PASS",
            Flag::FailHigh => "FAIL-HIGH",
            Flag::FailLow => "FAIL-LOW",
        }
    }
}

/// One fit set against its target.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrderLine {
    pub direction: Direction,
    pub p: f64,
    pub exponent: f64,
    pub ci95: (f64, f64),
    pub target: f64,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KolmogorovReport {
    pub target: ExponentTarget,
    pub tolerance: f64,
    pub lines: Vec<OrderLine>,
    /// Exponent spread across `p` below twice the widest interval; `None`
    /// with fewer than two orders.
    pub space_consistent: Option<bool>,
    pub time_consistent: Option<bool>,
    /// Per common `p`: the anisotropic Kolmogorov orders
    /// `(γ̂(1 − Q/p), Ĥ(1 − Q/p))`, `Q = 1/γ̂ + 1/Ĥ`, when `p > Q`.
    pub orders_by_p: Vec<(f64, Option<(f64, f64)>)>,
    /// Supremum of attainable `(γ′, H′)`: every pair strictly below it. When
    /// the fits are consistent across `p` this is the mean fitted exponent
    /// pair (the moment bounds hold for all `p`).
    pub attainable: (f64, f64),
    pub flag: Flag,
}

impl KolmogorovReport {
    pub fn passed(&self) -> bool {
        self.flag == Flag::Pass
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "targets: space H = {:.4}, time gamma = {:.4} (tolerance {:.3})",
            self.target.space_exponent, self.target.time_exponent, self.tolerance
        );
        for l in &self.lines {
            let _ = writeln!(
                s,
                "{:<5} p = {:<3} exponent {:.4}  ci95 [{:.4}, {:.4}]  target {:.4}  {}",
                l.direction.name(),
                l.p,
                l.exponent,
                l.ci95.0,
                l.ci95.1,
                l.target,
                l.flag.label()
            );
        }
        let cons = |c: Option<bool>| match c {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        };
        let _ = writeln!(
            s,
            "p-consistency: space {}, time {}",
            cons(self.space_consistent),
            cons(self.time_consistent)
        );
        for (p, o) in &self.orders_by_p {
            match o {
                Some((g, h)) => {
                    let _ = writeln!(s, "p = {p}: Holder orders gamma' < {g:.4}, H' < {h:.4}");
                }
                None => {
                    let _ = writeln!(s, "p = {p}: too small for the two-parameter criterion");
                }
            }
        }
        let _ = writeln!(
            s,
            "attainable modification: every (gamma', H') with gamma' < {:.4} and H' < {:.4}",
            self.attainable.0, self.attainable.1
        );
        let _ = writeln!(s, "overall: {}", self.flag.label());
        s
    }
}

fn consistency(fits: &[ExponentFit]) -> Option<bool> {
    if fits.len() < 2 {
        return None;
    }
    let lo = fits.iter().map(|f| f.exponent).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|f| f.exponent).fold(f64::NEG_INFINITY, f64::max);
    let widest = fits.iter().map(|f| f.ci_width()).fold(0.0, f64::max);
    Some(hi - lo < 2.0 * widest)
}

fn mean_exponent(fits: &[ExponentFit]) -> f64 {
    fits.iter().map(|f| f.exponent).sum::<f64>() / fits.len() as f64
}

pub fn kolmogorov_report(
    space_fits: &[ExponentFit],
    time_fits: &[ExponentFit],
    target: ExponentTarget,
    tolerance: f64,
) -> KolmogorovReport {
    let mut lines = Vec::new();
    for f in space_fits.iter().chain(time_fits) {
        let t = target.for_direction(f.direction);
        lines.push(OrderLine {
            direction: f.direction,
            p: f.p,
            exponent: f.exponent,
            ci95: f.ci95,
            target: t,
            flag: Flag::compare(f.exponent, t, tolerance),
        });
    }
    let mut orders_by_p = Vec::new();
    for s in space_fits {
        if let Some(t) = time_fits.iter().find(|t| t.p == s.p) {
            let (h, g) = (s.exponent, t.exponent);
            let o = if h > 0.0 && g > 0.0 {
                let q = 1.0 / h + 1.0 / g;
                (s.p > q).then(|| (g * (1.0 - q / s.p), h * (1.0 - q / s.p)))
            } else {
                None
            };
            orders_by_p.push((s.p, o));
        }
    }
    let space_consistent = consistency(space_fits);
    let time_consistent = consistency(time_fits);
    let limit = |fits: &[ExponentFit], consistent: Option<bool>| -> f64 {
        if fits.is_empty() {
            return f64::NAN;
        }
        if consistent != Some(false) {
            mean_exponent(fits)
        } else {
            fits.iter().map(|f| f.exponent).fold(f64::INFINITY, f64::min)
        }
    };
    let attainable = (limit(time_fits, time_consistent), limit(space_fits, space_consistent));
    let flag = lines
        .iter()
        .map(|l| l.flag)
        .find(|f| *f != Flag::Pass)
        .unwrap_or(Flag::Pass);
    KolmogorovReport {
        target,
        tolerance,
        lines,
        space_consistent,
        time_consistent,
        orders_by_p,
        attainable,
        flag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularity::MomentRow;
    use crate::rng::standard_normal;
    use alloc::vec;

    fn table(hs: &[f64], ms: &[f64], se: &[f64], p: f64) -> MomentTable {
        MomentTable {
            direction: Direction::Space,
            p,
            kind: None,
            hurst: 0.3,
            rows: hs
                .iter()
                .zip(ms)
                .zip(se)
                .map(|((&h, &m), &s)| MomentRow { h, moment: m, stderr: s, n_paths: 100, n_grid_points: 1 })
                .collect(),
            per_path: Vec::new(),
        }
    }

    const HS: [f64; 5] = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5];

    #[test]
    fn exact_power_law() {
        let ms: Vec<f64> = HS.iter().map(|h| 3.0 * libm::pow(*h, 0.6)).collect();
        let f = fit_exponent(&table(&HS, &ms, &[0.0; 5], 2.0)).unwrap();
        assert!((f.slope - 0.6).abs() < 1e-12);
        assert!((f.exponent - 0.3).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.intercept - libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_table() {
        let f = fit_exponent(&table(&HS, &[5.0; 5], &[0.0; 5], 2.0)).unwrap();
        assert!(f.slope.abs() < 1e-12 && f.exponent.abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f.r_squared));
    }

    #[test]
    fn errors() {
        let ms = [1.0, 2.0, 0.0, 4.0, 5.0];
        assert!(matches!(fit_exponent(&table(&HS, &ms, &[0.0; 5], 2.0)), Err(Error::NonPositiveMoment { .. })));
        let same = [0.1; 5];
        assert!(matches!(fit_exponent(&table(&same, &[1.0; 5], &[0.0; 5], 2.0)), Err(Error::SingularDesign)));
        assert!(matches!(fit_exponent(&table(&HS[..3], &[1.0; 3], &[0.0; 3], 2.0)), Err(Error::Refused(_))));
    }

    #[test]
    fn coverage_with_one_percent_noise() {
        // Each replication: 64 paths whose per-path values carry 8% noise, so
        // the path mean carries 1%. The fit uses path stderr and the bootstrap.
        let paths = 64;
        let reps = 1000;
        let mut covered = 0;
        for rep in 0..reps {
            let mut rng = rng::substream(5, StreamDomain::Synthetic, rep, 0);
            let per_path: Vec<Vec<f64>> = (0..paths)
                .map(|_| HS.iter().map(|&h| 3.0 * libm::pow(h, 0.6) * (1.0 + 0.08 * standard_normal(&mut rng))).collect())
                .collect();
            let rows: Vec<MomentRow> = HS
                .iter()
                .enumerate()
                .map(|(k, &h)| {
                    let col: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
                    let e = crate::stats::Estimate::from_samples(&col);
                    MomentRow { h, moment: e.mean, stderr: e.stderr, n_paths: paths, n_grid_points: 1 }
                })
                .collect();
            let t = MomentTable { direction: Direction::Space, p: 2.0, kind: None, hurst: 0.3, rows, per_path };
            let f = fit_exponent_with(&t, Some(Bootstrap { resamples: 200, seed: rep })).unwrap();
            if f.ci_contains(0.3) {
                covered += 1;
            }
        }
        assert!(covered >= 930, "coverage {covered}/1000");
    }

    fn fit(direction: Direction, p: f64, e: f64, w: f64) -> ExponentFit {
        ExponentFit {
            direction,
            p,
            slope: e * p,
            intercept: 0.0,
            slope_stderr: 0.0,
            r_squared: 1.0,
            exponent: e,
            ci95: (e - w / 2.0, e + w / 2.0),
            bootstrap_ci95: None,
            n_points: 5,
        }
    }

    #[test]
    fn report_flags() {
        let target = ExponentTarget::new(KernelKind::Heat, 0.3);
        assert_eq!(target.time_exponent, 0.15);
        let s = vec![fit(Direction::Space, 2.0, 0.3, 0.02), fit(Direction::Space, 4.0, 0.3, 0.02)];
        let t = vec![fit(Direction::Time, 2.0, 0.15, 0.02), fit(Direction::Time, 4.0, 0.15, 0.02)];
        let r = kolmogorov_report(&s, &t, target, 0.05);
        assert!(r.passed());
        assert_eq!(r.space_consistent, Some(true));
        assert!((r.attainable.1 - 0.3).abs() < 1e-12 && (r.attainable.0 - 0.15).abs() < 1e-12);
        assert!(r.to_text().contains("overall: PASS"));

        let high = vec![fit(Direction::Space, 2.0, 0.42, 0.02)];
        let r = kolmogorov_report(&high, &t, target, 0.05);
        assert_eq!(r.flag, Flag::FailHigh);
        assert_eq!(r.lines[0].flag, Flag::FailHigh);
        assert_eq!(r.space_consistent, None);

        let split = vec![fit(Direction::Space, 2.0, 0.30, 0.01), fit(Direction::Space, 8.0, 0.36, 0.01)];
        assert_eq!(kolmogorov_report(&split, &t, target, 0.1).space_consistent, Some(false));
    }

    #[test]
    fn anisotropic_orders_for_large_p() {
        let target = ExponentTarget::new(KernelKind::Wave, 0.3);
        let s = [fit(Direction::Space, 40.0, 0.3, 0.02)];
        let t = [fit(Direction::Time, 40.0, 0.3, 0.02)];
        let r = kolmogorov_report(&s, &t, target, 0.05);
        let (g, h) = r.orders_by_p[0].1.unwrap();
        let q = 2.0 / 0.3;
        assert!((g - 0.3 * (1.0 - q / 40.0)).abs() < 1e-12 && (h - g).abs() < 1e-12);
    }
}
