//! Time stepping of the mild equation `u = w + ∫∫ G σ(u) dX` for affine σ.
//!
//! The solution is carried as `u = w + v`: `w` is the exact homogeneous
//! solution from [`crate::kernels`], `v` the stochastic convolution, started at
//! zero and propagated in Fourier space. With `σ ≡ 0` the stochastic part stays
//! exactly zero and `u` is `w` to the last bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{angular_frequencies, Fft};
use crate::kernels::{self, HomogeneousField, InitialData, KernelKind, KernelSpec};
use crate::noise::{riesz_constant, HurstParam, NoiseSlab, NoiseSource, RowSource, SlabRows, SpaceTimeGrid};

/// `σ(x) = a·x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaAffine {
    pub a: f64,
    pub b: f64,
}

impl SigmaAffine {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    pub fn lipschitz(&self) -> f64 {
        self.a.abs()
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    MildStep,
    /// Picard iteration with the given number of iterations.
    Picard(usize),
}

/// Simulated field on the grid, rows `t_0 … t_nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    /// Row-major `(nt + 1) × nx`.
    pub u: Vec<f64>,
    pub kernel: KernelSpec,
    pub grid: SpaceTimeGrid,
    pub seed: u64,
    pub path: u64,
    pub scheme: Scheme,
    /// Wave only: Fourier coefficients of the stochastic part's velocity at `t = T`.
    pub velocity_hat: Option<Vec<Complex64>>,
}

impl SolutionField {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.u[n * self.grid.nx..(n + 1) * self.grid.nx]
    }

    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.u[n * self.grid.nx + j]
    }

    /// Largest absolute entrywise difference to another field on the same grid.
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.u.iter().zip(other).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// One-step propagator for the stochastic part `v`.
///
/// Heat: `v̂ ← e^{−ξ²Δt/2} v̂ + φ(ξ)·F[σ(u_n)·row/Δx]` with
/// `φ(ξ)² = (1 − e^{−ξ²Δt})/(ξ²Δt)`, the exponential integrator that matches the
/// variance of `∫ G_{t_{n+1}−s} dX(s)` over the step exactly.
///
/// Wave: `(v̂, ∂_t v̂)` is rotated by the exact propagator and the step's forcing
/// is added as an impulse at the left endpoint:
/// `v̂ += sin(ξΔt)/ξ·F`, `∂_t v̂ += cos(ξΔt)·F`.
#[derive(Debug, Clone)]
pub struct Stepper {
    kernel: KernelSpec,
    grid: SpaceTimeGrid,
    sigma: SigmaAffine,
    fft: Fft,
    // heat: (decay, gain, -); wave: (cos, sin/ξ, ξ sin)
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    pos: Vec<Complex64>,
    vel: Vec<Complex64>,
    buf: Vec<Complex64>,
    row: Vec<f64>,
    u: Vec<f64>,
}

impl Stepper {
    pub fn new(kernel: KernelSpec, grid: SpaceTimeGrid, sigma: SigmaAffine) -> Result<Self> {
        let nx = grid.nx;
        let dt = grid.dt();
        if kernel.kind == KernelKind::Wave && dt > grid.dx() * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "wave stepping needs dt <= dx, got dt = {dt} and dx = {}",
                grid.dx()
            )));
        }
        let xi = angular_frequencies(nx, grid.period());
        let (mut c0, mut c1, mut c2) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
        for (k, &x) in xi.iter().enumerate() {
            match kernel.kind {
                KernelKind::Heat => {
                    let z = x * x * dt;
                    c0[k] = libm::exp(-0.5 * z);
                    c1[k] = if z < 1e-12 { 1.0 } else { libm::sqrt(-libm::expm1(-z) / z) };
                }
                KernelKind::Wave => {
                    let a = x.abs();
                    c0[k] = libm::cos(a * dt);
                    c1[k] = kernels::green_fourier(KernelKind::Wave, dt, a);
                    c2[k] = a * libm::sin(a * dt);
                }
            }
        }
        let zero = Complex64::new(0.0, 0.0);
        Ok(Self {
            kernel,
            grid,
            sigma,
            fft: Fft::new(nx)?,
            c0,
            c1,
            c2,
            pos: vec![zero; nx],
            vel: vec![zero; if kernel.kind == KernelKind::Wave { nx } else { 0 }],
            buf: vec![zero; nx],
            row: vec![0.0; nx],
            u: vec![0.0; nx],
        })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn sigma(&self) -> SigmaAffine {
        self.sigma
    }

    /// Zero the stochastic part.
    pub fn reset(&mut self) {
        let zero = Complex64::new(0.0, 0.0);
        self.pos.fill(zero);
        self.vel.fill(zero);
    }

    /// Velocity coefficients of the stochastic part (empty for heat).
    pub fn velocity_hat(&self) -> &[Complex64] {
        &self.vel
    }

    /// Advance `v` by one step, with σ evaluated on `sigma_arg` (the current
    /// `u_n`, or the previous Picard iterate) against the noise `row`. Writes
    /// `v_{n+1}` into `next_v`.
    pub fn step_mild(&mut self, sigma_arg: &[f64], row: &[f64], next_v: &mut [f64]) {
        let inv_dx = 1.0 / self.grid.dx();
        let quiet = self.sigma.is_zero();
        if !quiet {
            for ((b, &u), &r) in self.buf.iter_mut().zip(sigma_arg).zip(row) {
                *b = Complex64::new(self.sigma.eval(u) * r * inv_dx, 0.0);
            }
            self.fft.forward(&mut self.buf);
        }
        match self.kernel.kind {
            KernelKind::Heat => {
                for k in 0..self.pos.len() {
                    let mut p = self.pos[k] * self.c0[k];
                    if !quiet {
                        p += self.buf[k] * self.c1[k];
                    }
                    self.pos[k] = p;
                }
            }
            KernelKind::Wave => {
                for k in 0..self.pos.len() {
                    let (p, v) = (self.pos[k], self.vel[k]);
                    let mut np = p * self.c0[k] + v * self.c1[k];
                    let mut nv = v * self.c0[k] - p * self.c2[k];
                    if !quiet {
                        np += self.buf[k] * self.c1[k];
                        nv += self.buf[k] * self.c0[k];
                    }
                    self.pos[k] = np;
                    self.vel[k] = nv;
                }
            }
        }
        if quiet {
            // v stays identically zero when it started there
            if self.pos.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                next_v.fill(0.0);
                return;
            }
        }
        self.buf.copy_from_slice(&self.pos);
        self.fft.inverse(&mut self.buf);
        let scale = 1.0 / self.grid.nx as f64;
        for (o, b) in next_v.iter_mut().zip(&self.buf) {
            *o = b.re * scale;
        }
    }

    /// Run `u = w + v` from `t_0` to `t_nt`, calling `observe(n, u_n)` for every
    /// row. With `driver = Some(field)`, σ is evaluated on the rows of `field`
    /// (a Picard iterate) instead of on the current solution.
    pub fn evolve<R, F>(
        &mut self,
        w: &HomogeneousField,
        rows: &mut R,
        driver: Option<&[f64]>,
        mut observe: F,
    ) -> Result<()>
    where
        R: RowSource + ?Sized,
        F: FnMut(usize, &[f64]) -> Result<()>,
    {
        let nx = self.grid.nx;
        if w.grid != self.grid || rows.nx() != nx {
            return Err(Error::InvalidInput("grid mismatch between stepper, data and noise".into()));
        }
        self.reset();
        let mut u = core::mem::take(&mut self.u);
        let mut row = core::mem::take(&mut self.row);
        let mut v = vec![0.0; nx];
        u.copy_from_slice(w.row(0));
        let result = (|| {
            observe(0, &u)?;
            for n in 0..self.grid.nt {
                rows.fill_row(n, &mut row)?;
                match driver {
                    Some(field) => {
                        let arg = &field[n * nx..(n + 1) * nx];
                        self.step_mild(arg, &row, &mut v);
                    }
                    None => self.step_mild(&u, &row, &mut v),
                }
                for ((o, &a), &b) in u.iter_mut().zip(w.row(n + 1)).zip(&v) {
                    *o = a + b;
                }
                if !u.iter().all(|x| x.is_finite()) {
                    return Err(Error::Instability { step: n });
                }
                observe(n + 1, &u)?;
            }
            Ok(())
        })();
        self.u = u;
        self.row = row;
        result
    }
}

fn collect_field<R: RowSource + ?Sized>(
    stepper: &mut Stepper,
    w: &HomogeneousField,
    rows: &mut R,
    driver: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let nx = w.grid.nx;
    let mut out = vec![0.0; (w.grid.nt + 1) * nx];
    stepper.evolve(w, rows, driver, |n, u| {
        out[n * nx..(n + 1) * nx].copy_from_slice(u);
        Ok(())
    })?;
    Ok(out)
}

/// Solve with noise from an arbitrary row source.
pub fn solve_with_rows<R: RowSource + ?Sized>(
    w: &HomogeneousField,
    sigma: SigmaAffine,
    rows: &mut R,
    seed: u64,
    path: u64,
) -> Result<SolutionField> {
    let mut stepper = Stepper::new(w.kernel, w.grid, sigma)?;
    let u = collect_field(&mut stepper, w, rows, None)?;
    let velocity_hat = (w.kernel.kind == KernelKind::Wave).then(|| stepper.velocity_hat().to_vec());
    Ok(SolutionField { u, kernel: w.kernel, grid: w.grid, seed, path, scheme: Scheme::MildStep, velocity_hat })
}

/// Solve one Monte Carlo path, sharing a precomputed homogeneous field.
pub fn solve_path(
    w: &HomogeneousField,
    sigma: SigmaAffine,
    hurst: HurstParam,
    seed: u64,
    path: u64,
) -> Result<SolutionField> {
    let mut rows = NoiseSource::new(&w.grid, hurst, seed, path)?;
    solve_with_rows(w, sigma, &mut rows, seed, path)
}

/// Solve path 0 of `seed` from scratch.
pub fn solve(
    kernel: KernelSpec,
    grid: &SpaceTimeGrid,
    init: &InitialData,
    sigma: SigmaAffine,
    hurst: HurstParam,
    seed: u64,
) -> Result<SolutionField> {
    let w = kernels::homogeneous_solution(kernel, init, grid)?;
    solve_path(&w, sigma, hurst, seed, 0)
}

/// Picard iterates `u⁰ = w, u¹, …, uⁿ` on one noise slab.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardSequence {
    pub fields: Vec<SolutionField>,
    /// `distances[k]`: sup over nodes of the L²(Ω) distance between `u^{k+1}`
    /// and `u^k`. For a single path this is the sup-norm of the difference;
    /// ensemble values come from [`PicardAccumulator`].
    pub distances: Vec<f64>,
}

/// Picard iteration on a given slab: iterate `k+1` is the full discrete
/// stochastic convolution of `σ(u^k)` against the slab.
pub fn picard_solve_slab(
    w: &HomogeneousField,
    sigma: SigmaAffine,
    slab: &NoiseSlab,
    n_iters: usize,
) -> Result<PicardSequence> {
    if n_iters < 1 {
        return Err(Error::InvalidInput("Picard iteration needs at least one iterate".into()));
    }
    let mut stepper = Stepper::new(w.kernel, w.grid, sigma)?;
    let make = |u: Vec<f64>, velocity_hat| SolutionField {
        u,
        kernel: w.kernel,
        grid: w.grid,
        seed: slab.seed,
        path: slab.path,
        scheme: Scheme::Picard(n_iters),
        velocity_hat,
    };
    let mut fields = vec![make(w.w.clone(), None)];
    let mut distances = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let prev = &fields[fields.len() - 1];
        let next = collect_field(&mut stepper, w, &mut SlabRows { slab }, Some(&prev.u))?;
        distances.push(prev.sup_distance(&next));
        let velocity_hat = (w.kernel.kind == KernelKind::Wave).then(|| stepper.velocity_hat().to_vec());
        fields.push(make(next, velocity_hat));
    }
    Ok(PicardSequence { fields, distances })
}

/// Picard iteration for path 0 of `seed` from scratch.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    kernel: KernelSpec,
    grid: &SpaceTimeGrid,
    init: &InitialData,
    sigma: SigmaAffine,
    hurst: HurstParam,
    seed: u64,
    n_iters: usize,
) -> Result<PicardSequence> {
    let w = kernels::homogeneous_solution(kernel, init, grid)?;
    let slab = crate::noise::sample_noise_slab(grid, hurst, seed)?;
    picard_solve_slab(&w, sigma, &slab, n_iters)
}

/// Node-wise sums of squared differences between consecutive Picard iterates
/// over an ensemble. Adding paths in a fixed order gives reproducible sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardAccumulator {
    sums: Vec<Vec<f64>>,
    paths: usize,
}

impl PicardAccumulator {
    pub fn new(n_iters: usize, nodes: usize) -> Self {
        Self { sums: vec![vec![0.0; nodes]; n_iters], paths: 0 }
    }

    pub fn add(&mut self, seq: &PicardSequence) {
        for (k, sum) in self.sums.iter_mut().enumerate() {
            let (a, b) = (&seq.fields[k].u, &seq.fields[k + 1].u);
            for ((s, x), y) in sum.iter_mut().zip(a).zip(b) {
                *s += (y - x) * (y - x);
            }
        }
        self.paths += 1;
    }

    /// Fold in another accumulator (its paths come after this one's).
    pub fn merge(&mut self, other: &PicardAccumulator) {
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            for (a, b) in s.iter_mut().zip(o) {
                *a += b;
            }
        }
        self.paths += other.paths;
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn distances(&self) -> Vec<f64> {
        let n = self.paths.max(1) as f64;
        self.sums
            .iter()
            .map(|s| s.iter().fold(0.0f64, |m, &v| m.max(libm::sqrt(v / n))))
            .collect()
    }
}

/// Contraction diagnostics for a sequence of Picard distances.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardDiagnostics {
    pub distances: Vec<f64>,
    /// `distances[k+1] / distances[k]`.
    pub ratios: Vec<f64>,
    /// `|a|·√(c_H·g(T))`, the size of one Picard correction relative to the noise.
    pub contraction_scale: f64,
    pub contraction_expected: bool,
    /// Distances failed to decrease past the first iterate although
    /// contraction was expected.
    pub inconsistent: bool,
    pub strictly_decreasing: bool,
}

pub fn picard_diagnostics(
    distances: &[f64],
    sigma: SigmaAffine,
    kernel: KernelSpec,
    hurst: HurstParam,
    horizon: f64,
    threshold: f64,
) -> Result<PicardDiagnostics> {
    let h = hurst.value();
    let energy = match kernel.kind {
        KernelKind::Heat => kernels::heat_energy_closed_form(horizon, h),
        KernelKind::Wave => kernels::kernel_energy(KernelKind::Wave, horizon, h, 1e-8)?,
    };
    let contraction_scale = sigma.lipschitz() * libm::sqrt(riesz_constant(h)? * energy);
    let contraction_expected = contraction_scale < threshold;
    let ratios: Vec<f64> = distances.windows(2).map(|d| d[1] / d[0]).collect();
    let growth_after_first = distances.windows(2).skip(1).any(|d| d[0] > 0.0 && d[1] >= d[0]);
    let strictly_decreasing = distances.windows(2).all(|d| d[1] < d[0]);
    Ok(PicardDiagnostics {
        distances: distances.to_vec(),
        ratios,
        contraction_scale,
        contraction_expected,
        inconsistent: contraction_expected && growth_after_first,
        strictly_decreasing,
    })
}

/// Result of iterating `C_{k+1} = C·(c + c̄·C_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionOutcome {
    /// `C_0 … C_n`.
    pub values: Vec<f64>,
    /// `max(C·c, C_0)·Σ_{k=0}^{n} (C·c̄)^k`.
    pub bound: f64,
    /// Every `C_k` respects the geometric-sum bound at its own `k`.
    pub within_bound: bool,
    /// Increments do not decay: the sequence grows without bound.
    pub diverging: bool,
}

impl RecursionOutcome {
    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

pub fn picard_constant_recursion(c0: f64, c: f64, cbar: f64, ccoef: f64, n: usize) -> Result<RecursionOutcome> {
    if !(c0 >= 0.0 && c >= 0.0 && cbar >= 0.0 && ccoef >= 0.0) {
        return Err(Error::InvalidInput("recursion constants must be nonnegative".into()));
    }
    let q = ccoef * cbar;
    let base = (ccoef * c).max(c0);
    let mut values = Vec::with_capacity(n + 1);
    values.push(c0);
    let mut within_bound = true;
    let mut partial = 1.0;
    let mut power = 1.0;
    for _ in 0..n {
        let prev = values[values.len() - 1];
        values.push(ccoef * (c + cbar * prev));
        power *= q;
        partial += power;
        let last = values[values.len() - 1];
        within_bound &= last <= base * partial * (1.0 + 1e-12);
    }
    let first_step = if n >= 1 { values[1] - values[0] } else { 0.0 };
    let last_step = if n >= 1 { values[n] - values[n - 1] } else { 0.0 };
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let diverging = n >= 2 && q >= 1.0 && increasing && last_step >= first_step && first_step > 0.0;
    Ok(RecursionOutcome { values, bound: base * partial, within_bound, diverging })
}

/// Exponents of `h₀` in the constants `c(h₀)` and `c̄(h₀)` of the moment bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QprimeExponents {
    /// Exponents of the non-constant terms of `c(h₀)`: `1/2` and `H − 1/2 + (1/(2H) − 1)γ`.
    pub c_exponents: [f64; 2],
    /// `2H − 1/2 + (1/(2H) − 1)γ`.
    pub cbar_exponent: f64,
}

impl QprimeExponents {
    pub fn cbar_positive(&self) -> bool {
        self.cbar_exponent > 0.0
    }
}

pub fn qprime_exponent_terms(hurst: HurstParam, kind: KernelKind) -> QprimeExponents {
    let h = hurst.value();
    let gamma = KernelSpec::new(kind, h).gamma;
    let tail = (1.0 / (2.0 * h) - 1.0) * gamma;
    QprimeExponents { c_exponents: [0.5, h - 0.5 + tail], cbar_exponent: 2.0 * h - 0.5 + tail }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_initial_data, InitialFamily, Profile};
    use crate::stats::{shape, Estimate};

    fn hurst() -> HurstParam {
        HurstParam::new(0.3).unwrap()
    }

    #[test]
    fn zero_sigma_reproduces_homogeneous() {
        let grid = SpaceTimeGrid::new(4.0, 256, 1.0, 64).unwrap();
        for kind in [KernelKind::Heat, KernelKind::Wave] {
            let spec = KernelSpec::new(kind, 0.3);
            for fam in [
                InitialFamily::Weierstrass { hurst: 0.3, terms: 30 },
                InitialFamily::Bump { center: 0.2, width: 0.7, amplitude: 1.0 },
                InitialFamily::FrozenFbm { hurst: 0.3, seed: 4 },
            ] {
                let init = make_initial_data(fam, &grid).unwrap();
                let w = kernels::homogeneous_solution(spec, &init, &grid).unwrap();
                let u = solve_path(&w, SigmaAffine::new(0.0, 0.0), hurst(), 1, 0).unwrap();
                assert!(u.sup_distance(&w.w) <= 1e-10);
            }
        }
    }

    #[test]
    fn sigma_zero_at_zero_is_a_fixed_point() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        for kind in [KernelKind::Heat, KernelKind::Wave] {
            let u = solve(KernelSpec::new(kind, 0.3), &grid, &InitialData::zero(), SigmaAffine::new(0.7, 0.0), hurst(), 3)
                .unwrap();
            assert!(u.u.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn initial_row_is_exact() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let init = InitialData { u0: Profile::Weierstrass { hurst: 0.3, terms: 30 }, v0: Profile::Zero };
        for kind in [KernelKind::Heat, KernelKind::Wave] {
            let u = solve(KernelSpec::new(kind, 0.3), &grid, &init, SigmaAffine::new(0.5, 1.0), hurst(), 3).unwrap();
            for j in 0..grid.nx {
                assert_eq!(u.at(0, j), init.u0.eval(grid.x(j)));
            }
        }
    }

    #[test]
    fn wave_rejects_coarse_space() {
        let grid = SpaceTimeGrid::new(4.0, 64, 1.0, 4).unwrap();
        let r = Stepper::new(KernelSpec::new(KernelKind::Wave, 0.3), grid, SigmaAffine::new(0.0, 1.0));
        assert!(matches!(r, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn deterministic_in_seed() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let init = InitialData { u0: Profile::Weierstrass { hurst: 0.3, terms: 30 }, v0: Profile::Zero };
        for kind in [KernelKind::Heat, KernelKind::Wave] {
            let spec = KernelSpec::new(kind, 0.3);
            let a = solve(spec, &grid, &init, SigmaAffine::new(0.5, 1.0), hurst(), 17).unwrap();
            let b = solve(spec, &grid, &init, SigmaAffine::new(0.5, 1.0), hurst(), 17).unwrap();
            let c = solve(spec, &grid, &init, SigmaAffine::new(0.5, 1.0), hurst(), 18).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.u, c.u);
        }
    }

    #[test]
    fn constant_shift_is_carried_through_for_additive_noise() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let spec = KernelSpec::new(KernelKind::Heat, 0.3);
        let sigma = SigmaAffine::new(0.0, 1.0);
        let base = InitialData { u0: Profile::Bump { center: 0.0, width: 0.5, amplitude: 1.0 }, v0: Profile::Zero };
        let shifted = InitialData {
            u0: Profile::Bump { center: 0.0, width: 0.5, amplitude: 1.0 },
            v0: Profile::Zero,
        };
        let w0 = kernels::homogeneous_solution(spec, &base, &grid).unwrap();
        let mut w1 = kernels::homogeneous_solution(spec, &shifted, &grid).unwrap();
        let kappa = 2.5;
        let cst = kernels::homogeneous_solution(spec, &InitialData { u0: Profile::Constant(kappa), v0: Profile::Zero }, &grid)
            .unwrap();
        for (a, c) in w1.w.iter_mut().zip(&cst.w) {
            *a += c;
        }
        let a = solve_path(&w0, sigma, hurst(), 5, 0).unwrap();
        let b = solve_path(&w1, sigma, hurst(), 5, 0).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((y - x - kappa).abs() < 1e-12);
        }
    }

    /// Variance of `u(t, x)` for additive noise from zero data, `c_H·g(t)`.
    fn gaussian_variance(kind: KernelKind, t: f64) -> f64 {
        riesz_constant(0.3).unwrap() * kernels::kernel_energy(kind, t, 0.3, 1e-10).unwrap()
    }

    #[test]
    fn heat_one_step_variance() {
        // One step with many independent rows: window averages over 10⁴ rows.
        let grid = SpaceTimeGrid::new(4.0, 1024, 1.0 / 64.0, 1).unwrap();
        let spec = KernelSpec::new(KernelKind::Heat, 0.3);
        let w = HomogeneousField::zeros(spec, grid);
        let mut stepper = Stepper::new(spec, grid, SigmaAffine::new(0.0, 1.0)).unwrap();
        let mut src = NoiseSource::new(&grid, hurst(), 11, 0).unwrap();
        let j = grid.nx / 2;
        let mut samples = Vec::new();
        for path in 0..10_000u64 {
            src.reset(11, path);
            let mut x = 0.0;
            stepper
                .evolve(&w, &mut src, None, |n, u| {
                    if n == 1 {
                        x = u[j];
                    }
                    Ok(())
                })
                .unwrap();
            samples.push(x * x);
        }
        let est = Estimate::from_samples(&samples);
        let target = gaussian_variance(KernelKind::Heat, grid.dt());
        assert!(est.agrees_with(target, 3.0, 0.03), "{est:?} vs {target}");
    }

    #[test]
    fn gaussian_case_variance_and_shape() {
        let cases = [
            (KernelKind::Heat, SpaceTimeGrid::new(4.0, 512, 1.0, 16).unwrap()),
            (KernelKind::Wave, SpaceTimeGrid::new(4.0, 512, 1.0, 128).unwrap()),
        ];
        for (kind, grid) in cases {
            let spec = KernelSpec::new(kind, 0.3);
            let w = HomogeneousField::zeros(spec, grid);
            let mut stepper = Stepper::new(spec, grid, SigmaAffine::new(0.0, 1.0)).unwrap();
            let mut src = NoiseSource::new(&grid, hurst(), 21, 0).unwrap();
            let j = grid.nx / 2;
            let mut values = Vec::new();
            for path in 0..3000u64 {
                src.reset(21, path);
                let mut x = 0.0;
                stepper
                    .evolve(&w, &mut src, None, |n, u| {
                        if n == grid.nt {
                            x = u[j];
                        }
                        Ok(())
                    })
                    .unwrap();
                values.push(x);
            }
            let sq: Vec<f64> = values.iter().map(|x| x * x).collect();
            let est = Estimate::from_samples(&sq);
            let target = gaussian_variance(kind, 1.0);
            assert!(est.agrees_with(target, 3.0, 0.03), "{kind:?}: {est:?} vs {target}");
            let (skew, kurt) = shape(&values);
            assert!(skew.agrees_with(0.0, 4.0, 0.0), "{kind:?} skew {skew:?}");
            assert!(kurt.agrees_with(0.0, 4.0, 0.0), "{kind:?} kurtosis {kurt:?}");
        }
    }

    #[test]
    fn picard_first_iterate_is_homogeneous_and_additive_case_is_immediate() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let init = InitialData { u0: Profile::Weierstrass { hurst: 0.3, terms: 30 }, v0: Profile::Zero };
        for kind in [KernelKind::Heat, KernelKind::Wave] {
            let spec = KernelSpec::new(kind, 0.3);
            let seq = picard_solve(spec, &grid, &init, SigmaAffine::new(0.0, 1.0), hurst(), 8, 3).unwrap();
            let w = kernels::homogeneous_solution(spec, &init, &grid).unwrap();
            assert_eq!(seq.fields[0].u, w.w);
            assert_eq!(seq.fields[1].u, seq.fields[2].u);
            assert_eq!(seq.fields[2].u, seq.fields[3].u);
            assert_eq!(seq.distances[1], 0.0);
        }
    }

    #[test]
    fn picard_contracts_and_approaches_direct_solve() {
        let grid = SpaceTimeGrid::new(4.0, 128, 1.0, 32).unwrap();
        let spec = KernelSpec::new(KernelKind::Heat, 0.3);
        let init = InitialData { u0: Profile::Weierstrass { hurst: 0.3, terms: 30 }, v0: Profile::Zero };
        let sigma = SigmaAffine::new(0.5, 1.0);
        let w = kernels::homogeneous_solution(spec, &init, &grid).unwrap();
        let n_iters = 6;
        let mut acc = PicardAccumulator::new(n_iters, (grid.nt + 1) * grid.nx);
        let mut gaps = vec![0.0; n_iters + 1];
        for path in 0..32u64 {
            let slab = crate::noise::sample_noise_slab_for_path(&grid, hurst(), 2, path).unwrap();
            let seq = picard_solve_slab(&w, sigma, &slab, n_iters).unwrap();
            acc.add(&seq);
            let direct = solve_with_rows(&w, sigma, &mut SlabRows { slab: &slab }, 2, path).unwrap();
            for (k, f) in seq.fields.iter().enumerate() {
                gaps[k] += f.u.iter().zip(&direct.u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        let d = acc.distances();
        assert!(d.windows(2).all(|p| p[1] < p[0]), "{d:?}");
        assert!(gaps.windows(2).all(|p| p[1] < p[0]), "{gaps:?}");
        let diag = picard_diagnostics(&d, sigma, spec, hurst(), 1.0, 0.5).unwrap();
        assert!(diag.contraction_expected && !diag.inconsistent && diag.strictly_decreasing);
    }

    #[test]
    fn recursion_examples() {
        let r = picard_constant_recursion(3.0, 2.0, 0.0, 1.5, 10).unwrap();
        assert!(r.values[1..].iter().all(|&v| v == 3.0));
        for c0 in [0.0, 1.0, 50.0] {
            let r = picard_constant_recursion(c0, 1.0, 0.25, 2.0, 60).unwrap();
            assert!(r.within_bound && !r.diverging);
            assert!(r.sup() <= (2.0f64).max(c0) * 2.0);
        }
        let r = picard_constant_recursion(1.0, 1.0, 0.75, 2.0, 60).unwrap();
        assert!(r.diverging);
        let r = picard_constant_recursion(1.0, 1.0, 0.5, 2.0, 60).unwrap();
        assert!(r.diverging, "Ccoef·cbar = 1 grows linearly");
        assert!(picard_constant_recursion(-1.0, 1.0, 0.5, 2.0, 3).is_err());
    }

    #[test]
    fn qprime_exponents() {
        let q = qprime_exponent_terms(hurst(), KernelKind::Wave);
        assert!((q.cbar_exponent - 0.3).abs() < 1e-15);
        let heat = qprime_exponent_terms(HurstParam::new(0.26).unwrap(), KernelKind::Heat);
        let expect = 0.52 - 0.5 + (1.0 / 0.52 - 1.0) * 0.13;
        assert!((heat.cbar_exponent - expect).abs() < 1e-15 && heat.cbar_positive());
        for i in 1..=100 {
            let h = 0.25 + 0.25 * i as f64 / 101.0;
            for kind in [KernelKind::Heat, KernelKind::Wave] {
                assert!(qprime_exponent_terms(HurstParam::new(h).unwrap(), kind).cbar_positive());
            }
        }
    }
}
