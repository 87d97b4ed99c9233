//! Numerical shadow of property (P):
//!
//! `I(t, x) = ∫₀ᵗ ∫∫ G²_{t−s}(x−y) (E|u(s,y) − u(s,z)|^p)^{2/p} / |y−z|^{2−2H} dy dz ds`
//!
//! evaluated at `t = T` and maximized over window points `x`.
//!
//! Time is split into cells carrying the exact kernel mass `∫∫ G² dy ds`; each
//! cell reads the Monte Carlo moment field on one row. The `z` integral is
//! split at `h₀`: lags from the resolution floor `8Δx` to `h₀` are integrated
//! with exact weights `∫ |z|^{2H−2}`, lags below the floor are covered by a
//! power law fitted at the floor, lags from `h₀` to a reach `R` use a coarser
//! stride, and `|z| > R` is bounded with the largest moment seen there.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Experiment, Power, MIN_LAG_STEPS};
use crate::error::{Error, Result};
use crate::kernels::{HomogeneousField, KernelKind};
use crate::noise::{CoarsenedRows, NoiseSource, RowSource};
use crate::solver::Stepper;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropertyPConfig {
    pub p: f64,
    /// Split point of the `z` integral.
    pub h0: f64,
    pub time_cells: usize,
    /// Spacing of the `y` lattice.
    pub y_spacing: f64,
    /// Lag stride beyond `h0`.
    pub far_stride: f64,
    /// Largest explicitly sampled lag.
    pub far_reach: f64,
    /// Spacing of the window points `x` over which the maximum is taken.
    pub candidate_spacing: f64,
}

impl Default for PropertyPConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            h0: 0.25,
            time_cells: 32,
            y_spacing: 1.0 / 16.0,
            far_stride: 1.0 / 32.0,
            far_reach: 1.0,
            candidate_spacing: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    mass: f64,
}

/// Resolved lattice, lags and weights for one experiment grid.
#[derive(Debug, Clone)]
pub struct PropertyPPlan {
    cfg: PropertyPConfig,
    hurst: f64,
    dx: f64,
    cells: Vec<Cell>,
    y_nodes: Vec<usize>,
    /// Signed lags in grid steps: `+near, +far, −near, −far`.
    lags: Vec<isize>,
    lag_weights: Vec<f64>,
    near: usize,
    far: usize,
    floor: usize,
    candidates: Vec<usize>,
    candidate_x: Vec<f64>,
    /// `y_weights[(c * candidates + i) * ny + iy]`, normalized per (c, i).
    y_weights: Vec<f64>,
    power: Power,
    row_cell: Vec<Option<usize>>,
}

fn steps_of(len: f64, dx: f64, what: &str) -> Result<usize> {
    let k = libm::round(len / dx);
    if k < 1.0 || (len / dx - k).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("{what} {len} is not a positive multiple of dx = {dx}")));
    }
    Ok(k as usize)
}

/// `∫_a^b z^{2H−2} dz`.
fn singular_weight(a: f64, b: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst - 1.0;
    (libm::pow(b, e) - libm::pow(a, e)) / e
}

impl PropertyPPlan {
    pub fn new(exp: &Experiment, cfg: PropertyPConfig) -> Result<Self> {
        let grid = &exp.grid;
        let h = exp.hurst.value();
        let dx = grid.dx();
        if !(cfg.p >= 2.0) || cfg.time_cells == 0 {
            return Err(Error::InvalidInput("property (P) needs p >= 2 and at least one time cell".into()));
        }
        let floor = MIN_LAG_STEPS;
        let top = steps_of(cfg.h0, dx, "h0")?;
        if top < 2 * floor {
            return Err(Error::Refused(format!("h0 = {} must span at least {} grid steps", cfg.h0, 2 * floor)));
        }
        let stride = steps_of(cfg.far_stride, dx, "far stride")?;
        if stride % 2 != 0 {
            return Err(Error::InvalidInput("far stride must be an even number of grid steps".into()));
        }
        let far = libm::round((cfg.far_reach - cfg.h0) / cfg.far_stride).max(0.0) as usize;
        let reach = cfg.h0 + far as f64 * cfg.far_stride;

        let mut pos = Vec::new();
        let mut weights = Vec::new();
        for k in floor..=top {
            pos.push(k as isize);
            let a = (k as f64 - 0.5).max(floor as f64) * dx;
            let b = (k as f64 + 0.5).min(top as f64) * dx;
            weights.push(singular_weight(a, b, h));
        }
        for m in 1..=far {
            pos.push((top + (2 * m - 1) * stride / 2) as isize);
            let a = cfg.h0 + (m - 1) as f64 * cfg.far_stride;
            weights.push(singular_weight(a, a + cfg.far_stride, h));
        }
        let near = top - floor + 1;
        let mut lags = pos.clone();
        lags.extend(pos.iter().map(|k| -k));
        let mut lag_weights = weights.clone();
        lag_weights.extend(weights);

        // y lattice covering every candidate's kernel support
        let obs = exp.observation()?;
        let y_reach = match exp.kernel.kind {
            KernelKind::Heat => 4.0,
            KernelKind::Wave => grid.horizon,
        };
        let ystep = steps_of(cfg.y_spacing, dx, "y spacing")?;
        let cstep = steps_of(cfg.candidate_spacing, dx, "candidate spacing")?;
        let center = grid.nx / 2;
        let half_c = libm::floor(obs.half_width / cfg.candidate_spacing + 1e-9) as usize;
        let candidates: Vec<usize> = (0..=2 * half_c).map(|i| center + i * cstep - half_c * cstep).collect();
        let half_y = libm::ceil((obs.half_width + y_reach) / cfg.y_spacing - 1e-9) as usize;
        let lowest = center as isize - (half_y * ystep) as isize;
        let longest = top as isize + (far * stride) as isize;
        if lowest - longest < 0 || center + half_y * ystep + longest as usize >= grid.nx {
            return Err(Error::InvalidGrid(format!(
                "property (P) lattice needs |y| + |z| <= {} inside the domain",
                obs.half_width + y_reach + reach
            )));
        }
        let y_nodes: Vec<usize> = (0..=2 * half_y).map(|i| (lowest + (i * ystep) as isize) as usize).collect();

        let t = grid.horizon;
        let width = t / cfg.time_cells as f64;
        let mut cells = Vec::with_capacity(cfg.time_cells);
        let mut row_cell = vec![None; grid.nt + 1];
        let mut y_weights = Vec::with_capacity(cfg.time_cells * candidates.len() * y_nodes.len());
        for c in 0..cfg.time_cells {
            let (s0, s1) = (c as f64 * width, (c + 1) as f64 * width);
            let mid = 0.5 * (s0 + s1);
            let row = steps_of(mid, grid.dt(), "time cell midpoint")?;
            let (ta, tb) = (t - s1, t - s0);
            let mass = match exp.kernel.kind {
                KernelKind::Heat => (libm::sqrt(tb) - libm::sqrt(ta)) / libm::sqrt(core::f64::consts::PI),
                KernelKind::Wave => 0.25 * (tb * tb - ta * ta),
            };
            let tau = t - mid;
            for &x in &candidates {
                let start = y_weights.len();
                for &y in &y_nodes {
                    let d = grid.x(y) - grid.x(x);
                    y_weights.push(match exp.kernel.kind {
                        KernelKind::Heat => libm::exp(-d * d / tau),
                        KernelKind::Wave => {
                            if d.abs() < tau {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    });
                }
                let slice = &mut y_weights[start..];
                let total: f64 = slice.iter().sum();
                if total > 0.0 {
                    slice.iter_mut().for_each(|w| *w /= total);
                } else {
                    let nearest = y_nodes
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, &y)| y.abs_diff(x))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    slice[nearest] = 1.0;
                }
            }
            row_cell[row] = Some(c);
            cells.push(Cell { mass });
        }
        Ok(Self {
            cfg,
            hurst: h,
            dx,
            cells,
            y_nodes,
            lags,
            lag_weights,
            near,
            far,
            floor,
            candidate_x: candidates.iter().map(|&j| grid.x(j)).collect(),
            candidates,
            y_weights,
            power: Power::new(cfg.p),
            row_cell,
        })
    }

    pub fn config(&self) -> &PropertyPConfig {
        &self.cfg
    }

    fn slots(&self) -> usize {
        self.cells.len() * self.y_nodes.len() * self.lags.len()
    }

    pub fn empty_sums(&self) -> PropertyPSums {
        PropertyPSums { sums: vec![0.0; self.slots()], paths: 0 }
    }

    fn observe(&self, n: usize, u: &[f64], sums: &mut [f64]) {
        let Some(c) = self.row_cell[n] else { return };
        let nl = self.lags.len();
        for (iy, &j) in self.y_nodes.iter().enumerate() {
            let base = (c * self.y_nodes.len() + iy) * nl;
            let uj = u[j];
            for (s, &l) in sums[base..base + nl].iter_mut().zip(&self.lags) {
                let z = (j as isize + l) as usize;
                *s += self.power.apply(u[z] - uj);
            }
        }
    }

    /// Evaluate the integral from accumulated moment sums.
    pub fn evaluate(&self, sums: &PropertyPSums) -> Result<PropertyPValue> {
        if sums.paths == 0 {
            return Err(Error::InvalidInput("no paths accumulated".into()));
        }
        let h = self.hurst;
        let e = 2.0 * h - 1.0;
        let m = sums.paths as f64;
        let nl = self.lags.len();
        let ny = self.y_nodes.len();
        let half = nl / 2;
        let reach = self.cfg.h0 + self.far as f64 * self.cfg.far_stride;
        let floor_len = self.floor as f64 * self.dx;
        let moment = |v: f64| libm::pow(v / m, 2.0 / self.cfg.p);

        // near-zero exponent of the moment field, pooled over cells, y and sign
        let (mut d1, mut d2) = (0.0, 0.0);
        for c in 0..self.cells.len() {
            for iy in 0..ny {
                let base = (c * ny + iy) * nl;
                for sign in 0..2 {
                    let o = base + sign * half;
                    d1 += self.cells[c].mass * moment(sums.sums[o]);
                    d2 += self.cells[c].mass * moment(sums.sums[o + self.floor]);
                }
            }
        }
        let alpha = if d1 > 0.0 && d2 > 0.0 { Some(libm::log2(d2 / d1)) } else { None };
        let margin = alpha.map_or(f64::INFINITY, |a| a + e);
        let finite = margin > 0.0;

        // integrand parts per (cell, y)
        let mut parts = vec![[0.0f64; 4]; self.cells.len() * ny];
        for c in 0..self.cells.len() {
            for iy in 0..ny {
                let base = (c * ny + iy) * nl;
                let p = &mut parts[c * ny + iy];
                for sign in 0..2 {
                    let o = base + sign * half;
                    let mut far_max = 0.0f64;
                    for l in 0..half {
                        let d = moment(sums.sums[o + l]);
                        let w = self.lag_weights[sign * half + l];
                        if l < self.near {
                            p[0] += w * d;
                        } else {
                            p[1] += w * d;
                            far_max = far_max.max(d);
                        }
                    }
                    let d_floor = moment(sums.sums[o]);
                    if d_floor > 0.0 {
                        p[2] += match alpha {
                            Some(a) if a + e > 0.0 => d_floor * libm::pow(floor_len, e) / (a + e),
                            _ => f64::INFINITY,
                        };
                    }
                    if self.far == 0 {
                        far_max = moment(sums.sums[o + self.near - 1]);
                    }
                    p[3] += far_max * libm::pow(reach, e) / (1.0 - 2.0 * h);
                }
            }
        }

        let mut best: Option<PropertyPValue> = None;
        for i in 0..self.candidates.len() {
            let mut acc = [0.0f64; 4];
            for (c, cell) in self.cells.iter().enumerate() {
                let wrow = &self.y_weights[(c * self.candidates.len() + i) * ny..][..ny];
                for (iy, &w) in wrow.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (a, v) in acc.iter_mut().zip(&parts[c * ny + iy]) {
                        *a += cell.mass * w * v;
                    }
                }
            }
            let value = acc.iter().sum::<f64>();
            let candidate = PropertyPValue {
                value,
                x: self.candidate_x[i],
                near: acc[0],
                far: acc[1],
                inner: acc[2],
                tail: acc[3],
                margin,
                finite: finite && value.is_finite(),
                paths: sums.paths,
            };
            if best.as_ref().is_none_or(|b| candidate.value > b.value || !candidate.value.is_finite()) {
                best = Some(candidate);
            }
        }
        best.ok_or_else(|| Error::InvalidInput("no window points".into()))
    }
}

/// Path sums of `|u(s_c, y) − u(s_c, y+z)|^p` on the (cell, y, lag) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyPSums {
    pub sums: Vec<f64>,
    pub paths: usize,
}

impl PropertyPSums {
    /// Fold in sums from later paths.
    pub fn merge(&mut self, other: &PropertyPSums) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.paths += other.paths;
    }
}

/// The integral at `t = T`, at the window point where it is largest, split by
/// `z` region.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropertyPValue {
    pub value: f64,
    pub x: f64,
    /// `8Δx ≤ |z| ≤ h₀`
    pub near: f64,
    /// `h₀ < |z| ≤ R`
    pub far: f64,
    /// `|z| < 8Δx`, from the fitted power law.
    pub inner: f64,
    /// `|z| > R`, bounded.
    pub tail: f64,
    /// `α + 2H − 1`, where `α` is the local exponent of the moment field at
    /// the resolution floor. Non-positive means the near-diagonal singularity
    /// is not integrable.
    pub margin: f64,
    pub finite: bool,
    pub paths: usize,
}

pub struct PropertyPRunner<'a> {
    plan: &'a PropertyPPlan,
    w: &'a HomogeneousField,
    stepper: Stepper,
}

impl<'a> PropertyPRunner<'a> {
    pub fn new(exp: &Experiment, w: &'a HomogeneousField, plan: &'a PropertyPPlan) -> Result<Self> {
        Ok(Self { plan, w, stepper: Stepper::new(exp.kernel, exp.grid, exp.sigma)? })
    }

    /// Simulate one path from `rows` and add its contribution to `sums`.
    pub fn run<R: RowSource + ?Sized>(&mut self, rows: &mut R, sums: &mut PropertyPSums) -> Result<()> {
        let plan = self.plan;
        let target = &mut sums.sums;
        self.stepper.evolve(self.w, rows, None, |n, u| {
            plan.observe(n, u, target);
            Ok(())
        })?;
        sums.paths += 1;
        Ok(())
    }
}

/// Sequential estimate over `paths` paths.
pub fn property_p_integral(exp: &Experiment, cfg: PropertyPConfig, paths: usize) -> Result<PropertyPValue> {
    let plan = PropertyPPlan::new(exp, cfg)?;
    let w = exp.homogeneous()?;
    let mut runner = PropertyPRunner::new(exp, &w, &plan)?;
    let mut source = NoiseSource::new(&exp.grid, exp.hurst, exp.seed, 0)?;
    let mut sums = plan.empty_sums();
    for path in 0..paths as u64 {
        source.reset(exp.seed, path);
        runner.run(&mut source, &mut sums)?;
    }
    plan.evaluate(&sums)
}

/// Coarse and refined values, computed on coupled noise: the coarse path is
/// driven by the 2×2 aggregate of the refined path's noise.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropertyPRefinement {
    pub coarse: PropertyPValue,
    pub fine: PropertyPValue,
    /// `|fine − coarse| / |coarse|`.
    pub drift: f64,
}

impl PropertyPRefinement {
    pub fn from_values(coarse: PropertyPValue, fine: PropertyPValue) -> Self {
        let drift = if coarse.value != 0.0 {
            (fine.value - coarse.value).abs() / coarse.value.abs()
        } else if fine.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self { coarse, fine, drift }
    }

    pub fn finite(&self) -> bool {
        self.coarse.finite && self.fine.finite
    }

    pub fn stable(&self, tol: f64) -> bool {
        self.finite() && self.drift <= tol
    }
}

/// Sequential coupled refinement study.
pub fn property_p_refinement(exp: &Experiment, cfg: PropertyPConfig, paths: usize) -> Result<PropertyPRefinement> {
    let fine_exp = exp.refined()?;
    let coarse_plan = PropertyPPlan::new(exp, cfg)?;
    let fine_plan = PropertyPPlan::new(&fine_exp, cfg)?;
    let (wc, wf) = (exp.homogeneous()?, fine_exp.homogeneous()?);
    let mut coarse = PropertyPRunner::new(exp, &wc, &coarse_plan)?;
    let mut fine = PropertyPRunner::new(&fine_exp, &wf, &fine_plan)?;
    let mut fine_src = NoiseSource::new(&fine_exp.grid, exp.hurst, exp.seed, 0)?;
    let mut agg = CoarsenedRows::new(fine_src.clone());
    let (mut sc, mut sf) = (coarse_plan.empty_sums(), fine_plan.empty_sums());
    for path in 0..paths as u64 {
        fine_src.reset(exp.seed, path);
        fine.run(&mut fine_src, &mut sf)?;
        agg.inner_mut().reset(exp.seed, path);
        coarse.run(&mut agg, &mut sc)?;
    }
    Ok(PropertyPRefinement::from_values(coarse_plan.evaluate(&sc)?, fine_plan.evaluate(&sf)?))
}
