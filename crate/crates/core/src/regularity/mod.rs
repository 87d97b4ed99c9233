//! Increment moments of simulated fields, exponent fits, the property-(P)
//! integral, and noise covariance checks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, HomogeneousField, InitialData, KernelKind, KernelSpec};
use crate::noise::{riesz_constant, HurstParam, NoiseSource, ObservationWindow, SpaceTimeGrid};
use crate::quad;
use crate::solver::{SigmaAffine, Stepper};
use crate::stats::{tree_sum, Estimate};

mod covariance;
mod fit;
mod property_p;

pub use covariance::{
    covariance_report, default_pair_suite, pairing_samples, verify_noise_covariance, CovariancePair, PairCheck,
    MIN_COVARIANCE_PATHS,
};
pub use fit::{
    fit_exponent, fit_exponent_with, kolmogorov_report, Bootstrap, ExponentFit, ExponentTarget, Flag,
    KolmogorovReport, OrderLine,
};
pub use property_p::{
    property_p_integral, property_p_refinement, PropertyPConfig, PropertyPPlan, PropertyPRefinement,
    PropertyPRunner, PropertyPSums, PropertyPValue,
};

/// Fewest paths for which a path-level standard error is reported.
pub const MIN_PATHS: usize = 16;

/// Smallest admissible lag in grid steps.
pub const MIN_LAG_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    Space,
    Time,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Space => "space",
            Direction::Time => "time",
        }
    }
}

/// Lags `h` at which increments are measured, and the moment orders `p`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IncrementLadder {
    pub direction: Direction,
    pub lags: Vec<f64>,
    pub orders: Vec<f64>,
    /// Largest admissible lag.
    pub h0: f64,
}

impl IncrementLadder {
    pub fn new(direction: Direction, lags: Vec<f64>, orders: Vec<f64>, h0: f64) -> Result<Self> {
        if !(h0 > 0.0 && h0 < 1.0) {
            return Err(Error::InvalidInput(format!("h0 must lie in (0, 1), got {h0}")));
        }
        if lags.is_empty() {
            return Err(Error::InvalidInput("ladder has no lags".into()));
        }
        if !lags.windows(2).all(|w| w[0] < w[1]) || !(lags[0] > 0.0) {
            return Err(Error::InvalidInput("ladder lags must be positive and strictly increasing".into()));
        }
        if lags[lags.len() - 1] > h0 * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!("ladder lag {} exceeds h0 = {h0}", lags[lags.len() - 1])));
        }
        if orders.is_empty() || orders.iter().any(|&p| !(p >= 2.0 && p <= MAX_ORDER)) {
            return Err(Error::InvalidInput(format!("moment orders must lie in [2, {MAX_ORDER}]")));
        }
        Ok(Self { direction, lags, orders, h0 })
    }

    /// `h = 8Δ, 16Δ, …` up to `h0`, where `Δ` is the grid step in `direction`.
    pub fn dyadic(direction: Direction, step: f64, h0: f64, orders: Vec<f64>) -> Result<Self> {
        let mut lags = Vec::new();
        let mut h = MIN_LAG_STEPS as f64 * step;
        while h <= h0 * (1.0 + 1e-12) {
            lags.push(h);
            h *= 2.0;
        }
        Self::new(direction, lags, orders, h0)
    }

    /// Lags as whole numbers of grid steps; refuses lags below the resolution floor.
    pub fn steps(&self, step: f64) -> Result<Vec<usize>> {
        self.lags
            .iter()
            .map(|&h| {
                let k = libm::round(h / step);
                if (h / step - k).abs() > 1e-6 {
                    return Err(Error::Refused(format!("lag {h} is not a multiple of the grid step {step}")));
                }
                if (k as usize) < MIN_LAG_STEPS {
                    return Err(Error::Refused(format!(
                        "lag {h} is below {MIN_LAG_STEPS} grid steps ({step}); increments would be scheme artifacts"
                    )));
                }
                Ok(k as usize)
            })
            .collect()
    }
}

/// Everything that determines a Monte Carlo ensemble of solution paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub kernel: KernelSpec,
    pub hurst: HurstParam,
    pub sigma: SigmaAffine,
    pub grid: SpaceTimeGrid,
    pub init: InitialData,
    /// Half-width `L_obs` of the observation window.
    pub window: f64,
    /// Statistics use times in `[ramp, T]`.
    pub ramp: f64,
    pub seed: u64,
}

impl Experiment {
    pub fn observation(&self) -> Result<ObservationWindow> {
        self.grid.window(self.window)
    }

    pub fn homogeneous(&self) -> Result<HomogeneousField> {
        kernels::homogeneous_solution(self.kernel, &self.init, &self.grid)
    }

    /// First row index with `t_n >= ramp`.
    pub fn ramp_row(&self) -> Result<usize> {
        if !(self.ramp >= 0.0 && self.ramp <= self.grid.horizon) {
            return Err(Error::InvalidInput(format!(
                "ramp {} outside [0, T = {}]",
                self.ramp, self.grid.horizon
            )));
        }
        Ok(libm::ceil(self.ramp / self.grid.dt() - 1e-9) as usize)
    }

    /// Same experiment on the grid refined by two in space and time.
    pub fn refined(&self) -> Result<Self> {
        Ok(Self { grid: self.grid.refined()?, ..self.clone() })
    }
}

/// Largest accepted moment order.
pub const MAX_ORDER: f64 = 8.0;
/// Orders above this have heavy-tailed `|Δu|^p` estimators.
pub const HEAVY_TAIL_ORDER: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
enum Power {
    Two,
    Four,
    Int(u32),
    Real(f64),
}

impl Power {
    fn new(p: f64) -> Self {
        if p == 2.0 {
            Power::Two
        } else if p == 4.0 {
            Power::Four
        } else if p == libm::round(p) && p <= 64.0 {
            Power::Int(p as u32)
        } else {
            Power::Real(p)
        }
    }

    #[inline]
    fn apply(self, d: f64) -> f64 {
        match self {
            Power::Two => d * d,
            Power::Four => {
                let s = d * d;
                s * s
            }
            Power::Int(k) => {
                let a = d.abs();
                let mut r = 1.0;
                for _ in 0..k {
                    r *= a;
                }
                r
            }
            Power::Real(p) => libm::pow(d.abs(), p),
        }
    }
}

#[derive(Debug, Clone)]
struct LadderSlot {
    direction: Direction,
    steps: Vec<usize>,
    powers: Vec<Power>,
    /// Offset of this ladder's block in the per-path output.
    offset: usize,
}

/// Resolved ladders for one experiment: lags in grid steps, node ranges, and
/// the layout of the per-path output vector (`[ladder][order][lag]`).
#[derive(Debug, Clone)]
pub struct MomentPlan {
    ladders: Vec<IncrementLadder>,
    slots: Vec<LadderSlot>,
    window: ObservationWindow,
    ramp_row: usize,
    nt: usize,
    nx: usize,
    len: usize,
    max_time_steps: usize,
    kind: KernelKind,
    hurst: f64,
}

impl MomentPlan {
    pub fn new(exp: &Experiment, ladders: Vec<IncrementLadder>) -> Result<Self> {
        let window = exp.observation()?;
        let ramp_row = exp.ramp_row()?;
        let grid = &exp.grid;
        let mut slots = Vec::with_capacity(ladders.len());
        let mut offset = 0;
        let mut max_time_steps = 0;
        for ladder in &ladders {
            let step = match ladder.direction {
                Direction::Space => grid.dx(),
                Direction::Time => grid.dt(),
            };
            let steps = ladder.steps(step)?;
            let longest = steps[steps.len() - 1];
            match ladder.direction {
                Direction::Space => {
                    if window.first + window.len - 1 + longest >= grid.nx {
                        return Err(Error::Refused("space lag reaches past the domain".into()));
                    }
                }
                Direction::Time => {
                    if ramp_row + longest > grid.nt {
                        return Err(Error::Refused(format!(
                            "time lag {} does not fit in [ramp, T]",
                            ladder.lags[steps.len() - 1]
                        )));
                    }
                    max_time_steps = max_time_steps.max(longest);
                }
            }
            let powers = ladder.orders.iter().map(|&p| Power::new(p)).collect();
            slots.push(LadderSlot { direction: ladder.direction, steps, powers, offset });
            offset += ladder.orders.len() * ladder.lags.len();
        }
        Ok(Self {
            ladders,
            slots,
            window,
            ramp_row,
            nt: grid.nt,
            nx: grid.nx,
            len: offset,
            max_time_steps,
            kind: exp.kernel.kind,
            hurst: exp.hurst.value(),
        })
    }

    pub fn ladders(&self) -> &[IncrementLadder] {
        &self.ladders
    }

    /// Length of the per-path output vector.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Grid points averaged per path for a lag of `steps` in `direction`.
    fn points(&self, direction: Direction, steps: usize) -> usize {
        let rows = self.nt + 1 - self.ramp_row;
        match direction {
            Direction::Space => rows * self.window.len,
            Direction::Time => (rows - steps) * self.window.len,
        }
    }

    /// Assemble one table per (ladder, order) from per-path outputs listed in
    /// path order.
    pub fn tables(&self, per_path: &[Vec<f64>]) -> Result<Vec<MomentTable>> {
        if per_path.len() < MIN_PATHS {
            return Err(Error::Refused(format!(
                "{} paths given, at least {MIN_PATHS} are needed for a path-level standard error",
                per_path.len()
            )));
        }
        let mut out = Vec::new();
        for (ladder, slot) in self.ladders.iter().zip(&self.slots) {
            for (q, &p) in ladder.orders.iter().enumerate() {
                let base = slot.offset + q * ladder.lags.len();
                let values: Vec<Vec<f64>> = per_path
                    .iter()
                    .map(|v| v[base..base + ladder.lags.len()].to_vec())
                    .collect();
                let rows = ladder
                    .lags
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| {
                        let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
                        let e = Estimate::from_samples(&col);
                        MomentRow {
                            h,
                            moment: e.mean,
                            stderr: e.stderr,
                            n_paths: col.len(),
                            n_grid_points: self.points(ladder.direction, slot.steps[k]),
                        }
                    })
                    .collect();
                out.push(MomentTable {
                    direction: ladder.direction,
                    p,
                    kind: Some(self.kind),
                    hurst: self.hurst,
                    rows,
                    per_path: values,
                });
            }
        }
        Ok(out)
    }
}

/// Streaming increment statistics for one path: rows arrive in time order.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    plan: MomentPlan,
    sums: Vec<f64>,
    ring: Vec<f64>,
    cap: usize,
    scratch: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(plan: MomentPlan) -> Self {
        let cap = plan.max_time_steps + 1;
        let ring = if plan.max_time_steps > 0 { vec![0.0; cap * plan.window.len] } else { Vec::new() };
        Self { sums: vec![0.0; plan.len], scratch: vec![0.0; plan.window.len], ring, cap, plan }
    }

    pub fn plan(&self) -> &MomentPlan {
        &self.plan
    }

    pub fn reset(&mut self) {
        self.sums.fill(0.0);
    }

    /// Feed row `n` of the field (all `nx` nodes).
    pub fn observe(&mut self, n: usize, u: &[f64]) {
        debug_assert_eq!(u.len(), self.plan.nx);
        if n < self.plan.ramp_row {
            return;
        }
        let win = self.plan.window.range();
        let wlen = self.plan.window.len;
        for slot in &self.plan.slots {
            let per_order = slot.steps.len();
            match slot.direction {
                Direction::Space => {
                    for (k, &s) in slot.steps.iter().enumerate() {
                        for (q, &pw) in slot.powers.iter().enumerate() {
                            for (o, j) in self.scratch.iter_mut().zip(win.clone()) {
                                *o = pw.apply(u[j + s] - u[j]);
                            }
                            self.sums[slot.offset + q * per_order + k] += tree_sum(&self.scratch);
                        }
                    }
                }
                Direction::Time => {
                    for (k, &s) in slot.steps.iter().enumerate() {
                        if n < self.plan.ramp_row + s {
                            continue;
                        }
                        let back = ((n - s) % self.cap) * wlen;
                        let past = &self.ring[back..back + wlen];
                        for (q, &pw) in slot.powers.iter().enumerate() {
                            for ((o, j), &old) in self.scratch.iter_mut().zip(win.clone()).zip(past) {
                                *o = pw.apply(u[j] - old);
                            }
                            self.sums[slot.offset + q * per_order + k] += tree_sum(&self.scratch);
                        }
                    }
                }
            }
        }
        if !self.ring.is_empty() {
            let at = (n % self.cap) * wlen;
            self.ring[at..at + wlen].copy_from_slice(&u[win]);
        }
    }

    /// Per-path averages in plan layout.
    pub fn finish(&self) -> Vec<f64> {
        let mut out = self.sums.clone();
        for (ladder, slot) in self.plan.ladders.iter().zip(&self.plan.slots) {
            for q in 0..ladder.orders.len() {
                for (k, &s) in slot.steps.iter().enumerate() {
                    let i = slot.offset + q * slot.steps.len() + k;
                    out[i] /= self.plan.points(slot.direction, s) as f64;
                }
            }
        }
        out
    }
}

/// Reusable per-worker state for simulating paths of one experiment.
pub struct PathRunner<'a> {
    w: &'a HomogeneousField,
    seed: u64,
    stepper: Stepper,
    source: NoiseSource,
    acc: MomentAccumulator,
}

impl<'a> PathRunner<'a> {
    pub fn new(exp: &Experiment, w: &'a HomogeneousField, plan: &MomentPlan) -> Result<Self> {
        Ok(Self {
            w,
            seed: exp.seed,
            stepper: Stepper::new(exp.kernel, exp.grid, exp.sigma)?,
            source: NoiseSource::new(&exp.grid, exp.hurst, exp.seed, 0)?,
            acc: MomentAccumulator::new(plan.clone()),
        })
    }

    /// Simulate `path` and return its per-path moment averages.
    pub fn run(&mut self, path: u64) -> Result<Vec<f64>> {
        self.source.reset(self.seed, path);
        self.acc.reset();
        let acc = &mut self.acc;
        self.stepper.evolve(self.w, &mut self.source, None, |n, u| {
            acc.observe(n, u);
            Ok(())
        })?;
        Ok(self.acc.finish())
    }
}

/// One ladder row of a moment table.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentRow {
    pub h: f64,
    pub moment: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_grid_points: usize,
}

/// Monte Carlo estimates of `E|Δ_h u|^p` along a ladder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentTable {
    pub direction: Direction,
    pub p: f64,
    pub kind: Option<KernelKind>,
    pub hurst: f64,
    pub rows: Vec<MomentRow>,
    /// Per-path averages, `per_path[path][lag]`; empty when the table was
    /// read back from a summary.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub per_path: Vec<Vec<f64>>,
}

impl MomentTable {
    /// Ladder indices where the moment drops by more than one combined
    /// standard error between consecutive lags.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.rows
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let tol = libm::sqrt(w[0].stderr * w[0].stderr + w[1].stderr * w[1].stderr);
                w[1].moment < w[0].moment - tol
            })
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Sequential Monte Carlo over `paths` paths.
pub fn estimate_increment_moments(
    exp: &Experiment,
    ladders: Vec<IncrementLadder>,
    paths: usize,
) -> Result<Vec<MomentTable>> {
    if paths < MIN_PATHS {
        return Err(Error::Refused(format!("{paths} paths requested, at least {MIN_PATHS} needed")));
    }
    let plan = MomentPlan::new(exp, ladders)?;
    let w = exp.homogeneous()?;
    let mut runner = PathRunner::new(exp, &w, &plan)?;
    let per_path = (0..paths as u64).map(|p| runner.run(p)).collect::<Result<Vec<_>>>()?;
    plan.tables(&per_path)
}

/// `E|Z|^p` for a standard normal `Z`: `2^{p/2} Γ((p+1)/2) / √π`.
pub fn gaussian_absolute_moment(p: f64) -> f64 {
    libm::pow(2.0, 0.5 * p) * libm::tgamma(0.5 * (p + 1.0)) / libm::sqrt(core::f64::consts::PI)
}

/// Variance of `u(t, x+h) − u(t, x)` for additive noise from zero data:
/// `2 c_H ∫₀ᵗ ∫ (1 − cos(hξ)) |FG_s(ξ)|² |ξ|^{1−2H} dξ ds`.
pub fn gaussian_space_increment_variance(kind: KernelKind, t: f64, h: f64, hurst: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0 && h > 0.0) {
        return Err(Error::InvalidInput("time and lag must be positive".into()));
    }
    let c = riesz_constant(hurst)?;
    let p = 2.0 * hurst;
    // ∫₀ᵗ |FG_s(ξ)|² ds in closed form
    let time_part = |xi: f64| -> f64 {
        match kind {
            KernelKind::Heat => {
                let z = t * xi * xi;
                if z < 1e-12 {
                    t
                } else {
                    -libm::expm1(-z) / (xi * xi)
                }
            }
            KernelKind::Wave => {
                let z = t * xi;
                if z < 1e-3 {
                    t * t * t / 3.0
                } else {
                    (0.5 * t - libm::sin(2.0 * z) / (4.0 * xi)) / (xi * xi)
                }
            }
        }
    };
    let f = |xi: f64| {
        if xi == 0.0 {
            return 0.0;
        }
        let one_minus_cos = 2.0 * libm::pow(libm::sin(0.5 * h * xi), 2.0);
        one_minus_cos * time_part(xi) * libm::pow(xi, 1.0 - p)
    };
    // Integrand decays like ξ^{−1−2H}; integrate to a large cutoff with panels
    // tracking the cos(hξ) period, then bound the rest by its mean value.
    let panel = core::f64::consts::PI / h;
    let leading = match kind {
        KernelKind::Heat => 1.0,
        KernelKind::Wave => 0.5 * t,
    };
    let mut cutoff = 64.0 * panel;
    // the oscillating remainder ∫ cos(hξ) ξ^{−1−2H} past the cutoff
    while leading * 2.0 / h * libm::pow(cutoff, -1.0 - p) > 0.1 * tol {
        cutoff *= 2.0;
        if cutoff > 1e9 {
            return Err(Error::Quadrature(format!("increment variance cannot reach tolerance {tol:e}")));
        }
    }
    let panels = libm::ceil(cutoff / panel) as usize;
    let r = quad::integrate_panels(f, (0..=panels).map(|k| k as f64 * panel), tol * 1e-3 / panels as f64, 1e-11, 100)?;
    let cutoff = panels as f64 * panel;
    // (1 − cos) averages to 1 and the time factor is `leading/ξ²` out here.
    let tail = leading * libm::pow(cutoff, -p) / p;
    Ok(2.0 * c * 2.0 * (r.value + tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Profile;
    use crate::noise::RowSource;

    fn hurst() -> HurstParam {
        HurstParam::new(0.3).unwrap()
    }

    fn experiment(kind: KernelKind, grid: SpaceTimeGrid, sigma: SigmaAffine, init: InitialData) -> Experiment {
        Experiment {
            kernel: KernelSpec::new(kind, 0.3),
            hurst: hurst(),
            sigma,
            grid,
            init,
            window: 1.0,
            ramp: grid.horizon / 8.0,
            seed: 42,
        }
    }

    #[test]
    fn ladder_validation() {
        let l = IncrementLadder::dyadic(Direction::Space, 1.0 / 256.0, 0.25, vec![2.0]).unwrap();
        assert_eq!(l.lags, vec![1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 0.25]);
        assert_eq!(l.steps(1.0 / 256.0).unwrap(), vec![8, 16, 32, 64]);
        assert!(matches!(l.steps(1.0 / 64.0), Err(Error::Refused(_))));
        assert!(IncrementLadder::new(Direction::Time, vec![0.1, 0.05], vec![2.0], 0.25).is_err());
        assert!(IncrementLadder::new(Direction::Time, vec![0.1, 0.5], vec![2.0], 0.25).is_err());
        assert!(IncrementLadder::new(Direction::Time, vec![0.1], vec![1.5], 0.25).is_err());
        assert!(IncrementLadder::new(Direction::Time, vec![0.1], vec![8.0], 0.25).is_ok());
        assert!(IncrementLadder::new(Direction::Time, vec![0.1], vec![8.5], 0.25).is_err());
        assert!(IncrementLadder::new(Direction::Time, vec![0.1], vec![2.0], 1.0).is_err());
    }

    #[test]
    fn linear_field_has_exact_moments() {
        let grid = SpaceTimeGrid::new(8.0, 1024, 1.0, 32).unwrap();
        let exp = experiment(
            KernelKind::Heat,
            grid,
            SigmaAffine::new(0.0, 0.0),
            InitialData { u0: Profile::Linear { slope: 1.0 }, v0: Profile::Zero },
        );
        let ladder = IncrementLadder::dyadic(Direction::Space, grid.dx(), 0.25, vec![2.0, 3.0]).unwrap();
        let tables = estimate_increment_moments(&exp, vec![ladder], 16).unwrap();
        for t in &tables {
            for r in &t.rows {
                let want = libm::pow(r.h, t.p);
                assert!((r.moment - want).abs() < 1e-6 * want, "{r:?}");
                assert!(r.stderr < 1e-9 * want);
            }
        }
    }

    #[test]
    fn refuses_small_ensembles() {
        let grid = SpaceTimeGrid::new(4.0, 512, 1.0, 32).unwrap();
        let exp = experiment(KernelKind::Heat, grid, SigmaAffine::new(0.0, 1.0), InitialData::zero());
        let ladder = IncrementLadder::dyadic(Direction::Space, grid.dx(), 0.25, vec![2.0]).unwrap();
        assert!(matches!(estimate_increment_moments(&exp, vec![ladder], 15), Err(Error::Refused(_))));
    }

    #[test]
    fn time_ladder_must_fit_after_ramp() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let mut exp = experiment(KernelKind::Heat, grid, SigmaAffine::new(0.0, 1.0), InitialData::zero());
        exp.ramp = 0.9;
        let ladder = IncrementLadder::new(Direction::Time, vec![0.25], vec![2.0], 0.25).unwrap();
        assert!(matches!(MomentPlan::new(&exp, vec![ladder]), Err(Error::Refused(_))));
    }

    #[test]
    fn noise_trace_moments_follow_fbm() {
        // Cumulative sums of one noise row are an fBm path scaled by √Δt.
        let grid = SpaceTimeGrid::new(4.0, 1024, 1.0, 2).unwrap();
        let mut exp = experiment(KernelKind::Heat, grid, SigmaAffine::new(0.0, 0.0), InitialData::zero());
        exp.ramp = 0.0;
        exp.window = 2.0;
        let ladder = IncrementLadder::dyadic(Direction::Space, grid.dx(), 0.25, vec![2.0]).unwrap();
        let plan = MomentPlan::new(&exp, vec![ladder]).unwrap();
        let mut acc = MomentAccumulator::new(plan.clone());
        let mut src = NoiseSource::new(&grid, hurst(), 3, 0).unwrap();
        let mut row = vec![0.0; grid.nx];
        let mut trace = vec![0.0; grid.nx];
        let mut per_path = Vec::new();
        for path in 0..200u64 {
            src.reset(3, path);
            acc.reset();
            for n in 0..=grid.nt {
                src.fill_row(n.min(grid.nt - 1), &mut row).unwrap();
                let mut s = 0.0;
                for (t, r) in trace.iter_mut().zip(&row) {
                    *t = s;
                    s += r;
                }
                acc.observe(n, &trace);
            }
            per_path.push(acc.finish());
        }
        let tables = plan.tables(&per_path).unwrap();
        for r in &tables[0].rows {
            let target = grid.dt() * libm::pow(r.h, 0.6);
            let e = Estimate { mean: r.moment, stderr: r.stderr, n: r.n_paths };
            assert!(e.agrees_with(target, 3.0, 0.0), "{r:?} vs {target}");
        }
    }

    #[test]
    fn gaussian_space_increments_match_quadrature() {
        for (kind, nt) in [(KernelKind::Heat, 16), (KernelKind::Wave, 128)] {
            let grid = SpaceTimeGrid::new(4.0, 512, 1.0, nt).unwrap();
            let mut exp = experiment(kind, grid, SigmaAffine::new(0.0, 1.0), InitialData::zero());
            exp.ramp = 1.0;
            let ladder = IncrementLadder::dyadic(Direction::Space, grid.dx(), 0.25, vec![2.0]).unwrap();
            let tables = estimate_increment_moments(&exp, vec![ladder], 400).unwrap();
            for r in &tables[0].rows {
                let target = gaussian_space_increment_variance(kind, 1.0, r.h, 0.3, 1e-8).unwrap();
                let e = Estimate { mean: r.moment, stderr: r.stderr, n: r.n_paths };
                assert!(e.agrees_with(target, 3.0, 0.03), "{kind:?} {r:?} vs {target}");
            }
        }
    }

    #[test]
    fn gaussian_increment_variance_limits() {
        // For lags much larger than the correlation scale the increment
        // variance approaches twice the pointwise variance c_H·g(t).
        let t = 0.5;
        let far = gaussian_space_increment_variance(KernelKind::Wave, t, 40.0, 0.3, 1e-9).unwrap();
        let point = riesz_constant(0.3).unwrap() * kernels::kernel_energy(KernelKind::Wave, t, 0.3, 1e-10).unwrap();
        assert!((far / (2.0 * point) - 1.0).abs() < 1e-2, "{far} vs {}", 2.0 * point);
    }

    #[test]
    fn gaussian_moment_ratio() {
        assert!((gaussian_absolute_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((gaussian_absolute_moment(4.0) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn worker_state_does_not_leak_between_paths() {
        let grid = SpaceTimeGrid::new(4.0, 256, 1.0, 64).unwrap();
        let exp = experiment(
            KernelKind::Wave,
            grid,
            SigmaAffine::new(0.5, 1.0),
            InitialData { u0: Profile::Weierstrass { hurst: 0.3, terms: 30 }, v0: Profile::Zero },
        );
        let ladders = vec![
            IncrementLadder::dyadic(Direction::Space, grid.dx(), 0.25, vec![2.0, 4.0]).unwrap(),
            IncrementLadder::dyadic(Direction::Time, grid.dt(), 0.25, vec![2.0]).unwrap(),
        ];
        let plan = MomentPlan::new(&exp, ladders).unwrap();
        let w = exp.homogeneous().unwrap();
        let mut a = PathRunner::new(&exp, &w, &plan).unwrap();
        let first: Vec<_> = (0..3).map(|p| a.run(p).unwrap()).collect();
        let mut b = PathRunner::new(&exp, &w, &plan).unwrap();
        assert_eq!(b.run(2).unwrap(), first[2]);
        assert_eq!(b.run(0).unwrap(), first[0]);
    }
}
