//! Gaussian noise that is white in time and behaves like fractional Brownian
//! motion in space.
//!
//! The noise is realized on a [`SpaceTimeGrid`] as cell increments
//! `ΔX(n, j) = √Δt · (B_n(x_{j+1}) − B_n(x_j))`, where `B_n` are independent
//! fBm traces. Each trace is sampled exactly by circulant embedding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::quad;
use crate::rng::{self, StreamDomain};

/// Hurst index of the spatial noise.
///
/// The regularity results hold for `1/4 < H < 1/2`. [`HurstParam::with_override`]
/// admits `0 < H < 1/2` and marks the value as outside that range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParam {
    value: f64,
    outside_theorem: bool,
}

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.25 && h < 0.5 {
            Ok(Self { value: h, outside_theorem: false })
        } else {
            Err(Error::HurstOutOfRange(h))
        }
    }

    pub fn with_override(h: f64) -> Result<Self> {
        if h > 0.0 && h < 0.5 {
            Ok(Self { value: h, outside_theorem: !(h > 0.25) })
        } else {
            Err(Error::HurstOutOfRange(h))
        }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn outside_theorem(self) -> bool {
        self.outside_theorem
    }
}

/// Uniform grid on `[−L, L) × [0, T]`, periodic in space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub half_width: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(half_width: f64, nx: usize, horizon: f64, nt: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half-width must be positive, got {half_width}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if nx < 2 || !nx.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("nx = {nx} must be a power of two >= 2")));
        }
        if nt == 0 {
            return Err(Error::InvalidGrid("nt must be positive".into()));
        }
        Ok(Self { half_width, nx, horizon, nt })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_width
    }

    /// Grid with half the resolution in both directions.
    pub fn coarsened(&self) -> Result<Self> {
        if self.nx < 4 || self.nt % 2 != 0 {
            return Err(Error::InvalidGrid("grid too small to coarsen".into()));
        }
        Self::new(self.half_width, self.nx / 2, self.horizon, self.nt / 2)
    }

    /// Grid with twice the resolution in both directions.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.half_width, self.nx * 2, self.horizon, self.nt * 2)
    }

    /// Nodes with `|x_j| <= half_width`, after checking that the wave cone
    /// from the window stays inside the domain.
    pub fn window(&self, half_width: f64) -> Result<ObservationWindow> {
        if !(half_width > 0.0) || half_width + self.horizon > self.half_width + 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "observation window ±{half_width} plus horizon {} exceeds domain half-width {}",
                self.horizon, self.half_width
            )));
        }
        let dx = self.dx();
        let eps = 1e-9 * dx;
        let first = libm::ceil((self.half_width - half_width - eps) / dx) as usize;
        let last = libm::floor((self.half_width + half_width + eps) / dx) as usize;
        Ok(ObservationWindow { first, len: last - first + 1, half_width })
    }
}

/// Contiguous block of spatial nodes where statistics are collected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationWindow {
    pub first: usize,
    pub len: usize,
    pub half_width: f64,
}

impl ObservationWindow {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.first..self.first + self.len
    }
}

/// `c_H = Γ(2H+1) sin(πH) / (2π)`, the constant that normalizes the spectral
/// density `c_H |ξ|^{1−2H}` to unit-variance fBm at distance one.
pub fn riesz_constant(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::HurstOutOfRange(h));
    }
    Ok(libm::tgamma(2.0 * h + 1.0) * libm::sin(PI * h) / (2.0 * PI))
}

/// Covariance of fractional Brownian motion, `½(|s|^{2H} + |t|^{2H} − |s−t|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, h: f64) -> f64 {
    let p = 2.0 * h;
    0.5 * (libm::pow(s.abs(), p) + libm::pow(t.abs(), p) - libm::pow((s - t).abs(), p))
}

/// Covariance of unit-spacing fBm increments at integer lag `k`.
pub fn increment_autocovariance(k: usize, h: f64) -> f64 {
    let p = 2.0 * h;
    let k = k as f64;
    0.5 * (libm::pow(k + 1.0, p) + libm::pow((k - 1.0).abs(), p) - 2.0 * libm::pow(k, p))
}

/// Exact sampler of `nx` consecutive fBm increments at spacing `dx`.
///
/// One complex FFT of length `2nx` yields two independent samples (real and
/// imaginary parts).
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    nx: usize,
    scale: Vec<f64>,
    fft: Fft,
    buf: Vec<Complex64>,
}

impl IncrementSampler {
    pub fn new(nx: usize, dx: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::HurstOutOfRange(h));
        }
        let m = 2 * nx;
        let var = libm::pow(dx, 2.0 * h);
        let mut fft = Fft::new(m)?;
        let mut c = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..=nx {
            c[k].re = var * increment_autocovariance(k, h);
        }
        for k in 1..nx {
            c[m - k] = c[k];
        }
        fft.forward(&mut c);
        let max = c.iter().map(|z| z.re).fold(0.0f64, f64::max);
        let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min < -1e-10 * max {
            return Err(Error::Embedding { min_eigenvalue: min });
        }
        let scale = c.iter().map(|z| libm::sqrt(z.re.max(0.0) / m as f64)).collect();
        Ok(Self { nx, scale, fft, buf: vec![Complex64::new(0.0, 0.0); m] })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Draw two independent increment vectors into `a` and `b`.
    pub fn sample_pair(&mut self, rng: &mut ChaCha8Rng, a: &mut [f64], b: &mut [f64]) {
        for (z, &s) in self.buf.iter_mut().zip(&self.scale) {
            let re = rng::standard_normal(rng);
            let im = rng::standard_normal(rng);
            *z = Complex64::new(s * re, s * im);
        }
        self.fft.forward(&mut self.buf);
        for ((z, x), y) in self.buf.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
            *x = z.re;
            *y = z.im;
        }
    }
}

/// One spatial trace of fBm increments on the grid, drawn from `stream`.
pub fn sample_spatial_increments(
    grid: &SpaceTimeGrid,
    h: HurstParam,
    stream: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut sampler = IncrementSampler::new(grid.nx, grid.dx(), h.value())?;
    let mut a = vec![0.0; grid.nx];
    let mut b = vec![0.0; grid.nx];
    sampler.sample_pair(stream, &mut a, &mut b);
    Ok(a)
}

/// Anything that can produce the noise row for time cell `n`.
pub trait RowSource {
    fn nx(&self) -> usize;
    fn fill_row(&mut self, n: usize, out: &mut [f64]) -> Result<()>;
}

/// Streams noise rows for one path without storing the slab.
///
/// Rows `2k` and `2k+1` share the substream `(seed, path, k)`, so any row can be
/// regenerated on its own.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    sampler: IncrementSampler,
    seed: u64,
    path: u64,
    sqrt_dt: f64,
    pair: usize,
    even: Vec<f64>,
    odd: Vec<f64>,
}

impl NoiseSource {
    pub fn new(grid: &SpaceTimeGrid, h: HurstParam, seed: u64, path: u64) -> Result<Self> {
        let sampler = IncrementSampler::new(grid.nx, grid.dx(), h.value())?;
        Ok(Self::with_sampler(sampler, grid, seed, path))
    }

    pub fn with_sampler(sampler: IncrementSampler, grid: &SpaceTimeGrid, seed: u64, path: u64) -> Self {
        let nx = grid.nx;
        Self {
            sampler,
            seed,
            path,
            sqrt_dt: libm::sqrt(grid.dt()),
            pair: usize::MAX,
            even: vec![0.0; nx],
            odd: vec![0.0; nx],
        }
    }

    /// Point the source at another path, keeping the sampler and buffers.
    pub fn reset(&mut self, seed: u64, path: u64) {
        self.seed = seed;
        self.path = path;
        self.pair = usize::MAX;
    }
}

impl RowSource for NoiseSource {
    fn nx(&self) -> usize {
        self.sampler.nx()
    }

    fn fill_row(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        let pair = n / 2;
        if pair != self.pair {
            let mut rng = rng::substream(self.seed, StreamDomain::Noise, self.path, pair as u64);
            self.sampler.sample_pair(&mut rng, &mut self.even, &mut self.odd);
            self.pair = pair;
        }
        let src = if n % 2 == 0 { &self.even } else { &self.odd };
        for (o, &v) in out.iter_mut().zip(src) {
            *o = self.sqrt_dt * v;
        }
        Ok(())
    }
}

/// Aggregates a source on a grid with twice the resolution into rows for the
/// coarse grid: each coarse cell is the sum of the 2×2 fine cells it covers.
#[derive(Debug, Clone)]
pub struct CoarsenedRows<S> {
    fine: S,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl<S: RowSource> CoarsenedRows<S> {
    pub fn new(fine: S) -> Self {
        let nx = fine.nx();
        Self { fine, a: vec![0.0; nx], b: vec![0.0; nx] }
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.fine
    }
}

impl<S: RowSource> RowSource for CoarsenedRows<S> {
    fn nx(&self) -> usize {
        self.fine.nx() / 2
    }

    fn fill_row(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        self.fine.fill_row(2 * n, &mut self.a)?;
        self.fine.fill_row(2 * n + 1, &mut self.b)?;
        for (j, o) in out.iter_mut().enumerate() {
            *o = (self.a[2 * j] + self.a[2 * j + 1]) + (self.b[2 * j] + self.b[2 * j + 1]);
        }
        Ok(())
    }
}

/// A stored realization of the noise on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSlab {
    /// Row-major `nt × nx`; entry `(n, j)` is the noise mass on
    /// `[t_n, t_{n+1}) × [x_j, x_{j+1})`.
    pub increments: Vec<f64>,
    pub hurst: HurstParam,
    pub grid: SpaceTimeGrid,
    pub seed: u64,
    pub path: u64,
}

impl NoiseSlab {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.increments[n * self.grid.nx..(n + 1) * self.grid.nx]
    }

    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.increments[n * self.grid.nx + j]
    }

    /// Sum 2×2 blocks of cells, giving an exact-in-law slab on the coarsened grid.
    pub fn coarsen(&self) -> Result<NoiseSlab> {
        let grid = self.grid.coarsened()?;
        let mut rows = CoarsenedRows::new(SlabRows { slab: self });
        let mut increments = vec![0.0; grid.nt * grid.nx];
        for (n, row) in increments.chunks_exact_mut(grid.nx).enumerate() {
            rows.fill_row(n, row)?;
        }
        Ok(NoiseSlab { increments, hurst: self.hurst, grid, seed: self.seed, path: self.path })
    }

    /// Total noise mass over the whole grid.
    pub fn total_mass(&self) -> f64 {
        crate::stats::tree_sum(&self.increments)
    }
}

/// Replays a stored slab as a [`RowSource`].
#[derive(Debug, Clone, Copy)]
pub struct SlabRows<'a> {
    pub slab: &'a NoiseSlab,
}

impl RowSource for SlabRows<'_> {
    fn nx(&self) -> usize {
        self.slab.grid.nx
    }

    fn fill_row(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(self.slab.row(n));
        Ok(())
    }
}

/// Sample the slab for path 0 of `seed`.
pub fn sample_noise_slab(grid: &SpaceTimeGrid, h: HurstParam, seed: u64) -> Result<NoiseSlab> {
    sample_noise_slab_for_path(grid, h, seed, 0)
}

pub fn sample_noise_slab_for_path(
    grid: &SpaceTimeGrid,
    h: HurstParam,
    seed: u64,
    path: u64,
) -> Result<NoiseSlab> {
    let mut source = NoiseSource::new(grid, h, seed, path)?;
    let mut increments = vec![0.0; grid.nt * grid.nx];
    for (n, row) in increments.chunks_exact_mut(grid.nx).enumerate() {
        source.fill_row(n, row)?;
    }
    Ok(NoiseSlab { increments, hurst: h, grid: *grid, seed, path })
}

/// Rectangle in `(t, x)` outside of which a test function vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

/// A space-time test function that the noise can be paired with.
pub trait TestFunction {
    fn eval(&self, t: f64, x: f64) -> f64;

    fn support(&self) -> Option<Support> {
        None
    }
}

impl<F: Fn(f64, f64) -> f64> TestFunction for F {
    fn eval(&self, t: f64, x: f64) -> f64 {
        self(t, x)
    }
}

/// Result of pairing a slab with a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pairing {
    pub value: f64,
    /// The test function's support leaves the simulated domain.
    pub truncated: bool,
}

/// Riemann pairing `Σ_{n,j} φ(t_n, x_j) ΔX(n, j)`, the discrete analogue of `X(φ)`.
pub fn pair_with_test_function<T: TestFunction + ?Sized>(slab: &NoiseSlab, phi: &T) -> Pairing {
    let g = &slab.grid;
    let mut value = 0.0;
    for n in 0..g.nt {
        let t = g.t(n);
        let row = slab.row(n);
        let mut acc = 0.0;
        for (j, &dx) in row.iter().enumerate() {
            acc += phi.eval(t, g.x(j)) * dx;
        }
        value += acc;
    }
    let truncated = phi.support().is_some_and(|s| {
        s.t.0 < 0.0 || s.t.1 > g.horizon || s.x.0 < -g.half_width || s.x.1 > g.half_width
    });
    Pairing { value, truncated }
}

/// Indicator of `[start, end)` in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.start && t < self.end {
            1.0
        } else {
            0.0
        }
    }

    pub fn overlap(&self, other: &TimeWindow) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// Spatial factor of a separable test function, with its Fourier transform
/// `Fφ(ξ) = ∫ e^{−iξx} φ(x) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceProfile {
    Gaussian { center: f64, width: f64, amplitude: f64 },
    Indicator { left: f64, right: f64 },
}

/// Upper envelope of `|Fφ(ξ)|` for large `|ξ|`.
#[derive(Debug, Clone, Copy)]
enum Envelope {
    /// `coef · exp(−rate ξ²)`
    Gaussian { coef: f64, rate: f64 },
    /// `coef / |ξ|`
    Algebraic { coef: f64 },
}

impl SpaceProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SpaceProfile::Gaussian { center, width, amplitude } => {
                let z = (x - center) / width;
                amplitude * libm::exp(-0.5 * z * z)
            }
            SpaceProfile::Indicator { left, right } => {
                if x >= left && x < right {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn fourier(&self, xi: f64) -> Complex64 {
        match *self {
            SpaceProfile::Gaussian { center, width, amplitude } => {
                let mag = amplitude * width * libm::sqrt(2.0 * PI) * libm::exp(-0.5 * width * width * xi * xi);
                Complex64::from_polar(mag, -xi * center)
            }
            SpaceProfile::Indicator { left, right } => {
                if xi == 0.0 {
                    return Complex64::new(right - left, 0.0);
                }
                let ea = Complex64::from_polar(1.0, -xi * left);
                let eb = Complex64::from_polar(1.0, -xi * right);
                (ea - eb) / Complex64::new(0.0, xi)
            }
        }
    }

    fn envelope(&self) -> Envelope {
        match *self {
            SpaceProfile::Gaussian { width, amplitude, .. } => Envelope::Gaussian {
                coef: amplitude.abs() * width * libm::sqrt(2.0 * PI),
                rate: 0.5 * width * width,
            },
            SpaceProfile::Indicator { .. } => Envelope::Algebraic { coef: 2.0 },
        }
    }

    fn extent(&self) -> (f64, f64) {
        match *self {
            SpaceProfile::Gaussian { center, width, .. } => (center - 10.0 * width, center + 10.0 * width),
            SpaceProfile::Indicator { left, right } => (left, right),
        }
    }

    /// Length scale governing oscillation of the Fourier transform.
    fn reach(&self) -> f64 {
        match *self {
            SpaceProfile::Gaussian { center, .. } => center.abs(),
            SpaceProfile::Indicator { left, right } => left.abs().max(right.abs()),
        }
    }
}

/// `φ(t, x) = 1_{[start,end)}(t) · profile(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableTest {
    pub time: TimeWindow,
    pub space: SpaceProfile,
}

impl SeparableTest {
    pub fn gaussian(start: f64, end: f64, center: f64, width: f64) -> Self {
        Self {
            time: TimeWindow { start, end },
            space: SpaceProfile::Gaussian { center, width, amplitude: 1.0 },
        }
    }

    /// Node values `(φ_t(t_n))_n` and `(φ_x(x_j))_j`.
    pub fn node_weights(&self, grid: &SpaceTimeGrid) -> (Vec<f64>, Vec<f64>) {
        let tw = (0..grid.nt).map(|n| self.time.eval(grid.t(n))).collect();
        let sw = (0..grid.nx).map(|j| self.space.eval(grid.x(j))).collect();
        (tw, sw)
    }
}

impl TestFunction for SeparableTest {
    fn eval(&self, t: f64, x: f64) -> f64 {
        self.time.eval(t) * self.space.eval(x)
    }

    fn support(&self) -> Option<Support> {
        Some(Support { t: (self.time.start, self.time.end), x: self.space.extent() })
    }
}

/// Largest frequency cutoff tried before declaring the tail non-convergent.
pub const MAX_FREQUENCY_CUTOFF: f64 = 1e6;

/// Bound on `∫_Ξ^∞ |Fφ||Fψ| ξ^{1−2H} dξ`.
fn tail_bound(a: Envelope, b: Envelope, cutoff: f64, h: f64) -> f64 {
    let x = cutoff;
    match (a, b) {
        (Envelope::Gaussian { coef: c1, rate: r1 }, Envelope::Gaussian { coef: c2, rate: r2 }) => {
            let r = r1 + r2;
            c1 * c2 * libm::pow(x, -2.0 * h) * libm::exp(-r * x * x) / (2.0 * r)
        }
        (Envelope::Gaussian { coef: c1, rate }, Envelope::Algebraic { coef: c2 })
        | (Envelope::Algebraic { coef: c2 }, Envelope::Gaussian { coef: c1, rate }) => {
            c1 * c2 * libm::pow(x, -2.0 * h) * libm::exp(-rate * x * x) / (2.0 * rate * x)
        }
        (Envelope::Algebraic { coef: c1 }, Envelope::Algebraic { coef: c2 }) => {
            c1 * c2 * libm::pow(x, -2.0 * h) / (2.0 * h)
        }
    }
}

/// `c_H ∫∫ Fφ(t,·)(ξ) conj(Fψ(t,·)(ξ)) |ξ|^{1−2H} dξ dt` for separable test
/// functions, with the frequency integral truncated where the analytic tail
/// bound drops below `tol`.
pub fn spectral_covariance_quadrature(
    phi: &SeparableTest,
    psi: &SeparableTest,
    h: f64,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let c_h = riesz_constant(h)?;
    let overlap = phi.time.overlap(&psi.time);
    if overlap == 0.0 {
        return Ok(0.0);
    }
    let scale = 2.0 * c_h * overlap;
    let (ea, eb) = (phi.space.envelope(), psi.space.envelope());
    let mut cutoff = 1.0;
    while scale * tail_bound(ea, eb, cutoff, h) > 0.5 * tol {
        cutoff *= 2.0;
        if cutoff > MAX_FREQUENCY_CUTOFF {
            return Err(Error::Quadrature(format!(
                "frequency tail does not fall below {tol:e} before cutoff {MAX_FREQUENCY_CUTOFF:e}; test functions too rough"
            )));
        }
    }
    let reach = phi.space.reach() + psi.space.reach() + 1.0;
    let panel = (PI / reach).min(cutoff);
    let panels = libm::ceil(cutoff / panel) as usize;
    let integrand = |xi: f64| {
        let prod = phi.space.fourier(xi) * psi.space.fourier(xi).conj();
        prod.re * libm::pow(xi, 1.0 - 2.0 * h)
    };
    let per_panel = 0.25 * tol / (scale * panels as f64);
    let r = quad::integrate_panels(
        integrand,
        (0..=panels).map(|k| (k as f64 * panel).min(cutoff)),
        per_panel,
        0.0,
        200,
    )?;
    Ok(scale * r.value)
}

/// Exact covariance of the discrete pairings `Σ φ ΔX` and `Σ ψ ΔX` under the
/// grid noise law.
pub fn discrete_pairing_covariance(
    grid: &SpaceTimeGrid,
    h: f64,
    phi: &SeparableTest,
    psi: &SeparableTest,
) -> f64 {
    let (pt, px) = phi.node_weights(grid);
    let (qt, qx) = psi.node_weights(grid);
    let time: f64 = pt.iter().zip(&qt).map(|(a, b)| a * b).sum::<f64>() * grid.dt();
    if time == 0.0 {
        return 0.0;
    }
    let var = libm::pow(grid.dx(), 2.0 * h);
    let rho: Vec<f64> = (0..grid.nx).map(|k| var * increment_autocovariance(k, h)).collect();
    let mut space = 0.0;
    for (j, &a) in px.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for (k, &b) in qx.iter().enumerate() {
            acc += b * rho[j.abs_diff(k)];
        }
        space += a * acc;
    }
    time * space
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{covariance, Estimate};

    fn gamma_oracle(x: f64) -> f64 {
        statrs::function::gamma::gamma(x)
    }

    #[test]
    fn riesz_constant_values() {
        assert!((riesz_constant(0.5).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let c25 = gamma_oracle(1.5) * (PI / 4.0).sin() / (2.0 * PI);
        assert!((riesz_constant(0.25).unwrap() - c25).abs() < 1e-12);
        assert!((c25 - 0.099_736).abs() < 1e-5);
        let c3 = gamma_oracle(1.6) * (0.3 * PI).sin() / (2.0 * PI);
        assert!((riesz_constant(0.3).unwrap() - c3).abs() < 1e-12);
        assert!((c3 - 0.115_05).abs() < 1e-5);
        assert!(riesz_constant(0.0).is_err());
        assert!(riesz_constant(1.2).is_err());
    }

    #[test]
    fn hurst_validation() {
        assert!(HurstParam::new(0.3).is_ok());
        assert!(HurstParam::new(0.25).is_err());
        assert!(HurstParam::new(0.5).is_err());
        let relaxed = HurstParam::with_override(0.2).unwrap();
        assert!(relaxed.outside_theorem());
        assert!(!HurstParam::with_override(0.3).unwrap().outside_theorem());
        assert!(HurstParam::with_override(0.6).is_err());
    }

    #[test]
    fn fbm_covariance_values() {
        for h in [0.26, 0.3, 0.45] {
            assert!((fbm_covariance(1.0, 1.0, h) - 1.0).abs() < 1e-15);
            assert_eq!(fbm_covariance(0.0, 2.5, h), 0.0);
        }
        assert!((fbm_covariance(1.0, 2.0, 0.25) - 0.5 * 2f64.sqrt()).abs() < 1e-12);
        // lag-1 increment correlation is 2^{2H-1} - 1 < 0
        for h in [0.3, 0.4] {
            let r = increment_autocovariance(1, h);
            assert!((r - (2f64.powf(2.0 * h - 1.0) - 1.0)).abs() < 1e-14);
            assert!(r < 0.0);
        }
    }

    #[test]
    fn grid_and_window() {
        let g = SpaceTimeGrid::new(8.0, 4096, 1.0, 1024).unwrap();
        assert_eq!(g.dx(), 1.0 / 256.0);
        let w = g.window(2.0).unwrap();
        assert_eq!(g.x(w.first), -2.0);
        assert_eq!(g.x(w.first + w.len - 1), 2.0);
        assert!(g.window(7.5).is_err());
        assert!(SpaceTimeGrid::new(1.0, 100, 1.0, 10).is_err());
        assert!(SpaceTimeGrid::new(-1.0, 128, 1.0, 10).is_err());
    }

    #[test]
    fn embedding_is_nonnegative_across_range() {
        for h in [0.05, 0.26, 0.3, 0.4, 0.49] {
            assert!(IncrementSampler::new(1024, 0.01, h).is_ok(), "H={h}");
        }
    }

    #[test]
    fn spatial_increments_deterministic() {
        let g = SpaceTimeGrid::new(4.0, 256, 1.0, 4).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        let a = sample_spatial_increments(&g, h, &mut rng::substream(1, StreamDomain::Noise, 0, 0)).unwrap();
        let b = sample_spatial_increments(&g, h, &mut rng::substream(1, StreamDomain::Noise, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spatial_increment_moments() {
        // Variance Δx^{2H} and lag-1 covariance (2^{2H−1}−1)Δx^{2H}, from 10^4 draws.
        let g = SpaceTimeGrid::new(8.0, 4096, 1.0, 1).unwrap();
        let h = 0.3;
        let mut sampler = IncrementSampler::new(g.nx, g.dx(), h).unwrap();
        let mut a = vec![0.0; g.nx];
        let mut b = vec![0.0; g.nx];
        let (mut v, mut c) = (Vec::new(), Vec::new());
        for k in 0..5000 {
            let mut r = rng::substream(99, StreamDomain::Noise, k, 0);
            sampler.sample_pair(&mut r, &mut a, &mut b);
            for s in [&a, &b] {
                // one node per draw keeps the samples independent
                let j = (k as usize * 37) % (g.nx - 1);
                v.push(s[j] * s[j]);
                c.push(s[j] * s[j + 1]);
            }
        }
        let var = g.dx().powf(2.0 * h);
        let ev = Estimate::from_samples(&v);
        let ec = Estimate::from_samples(&c);
        assert!(ev.agrees_with(var, 3.0, 0.0), "{ev:?} vs {var}");
        let lag1 = (2f64.powf(2.0 * h - 1.0) - 1.0) * var;
        assert!(ec.agrees_with(lag1, 3.0, 0.0), "{ec:?} vs {lag1}");
    }

    #[test]
    fn slab_rows_scaled_and_independent() {
        let g = SpaceTimeGrid::new(4.0, 512, 1.0, 64).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        let mut x0 = Vec::new();
        let mut x1 = Vec::new();
        let mut sq = Vec::new();
        for p in 0..400 {
            let slab = sample_noise_slab_for_path(&g, h, 5, p).unwrap();
            x0.push(slab.get(10, 100));
            x1.push(slab.get(11, 100));
            sq.push(slab.get(20, 300).powi(2));
        }
        let var = g.dt() * g.dx().powf(0.6);
        assert!(Estimate::from_samples(&sq).agrees_with(var, 3.0, 0.0));
        let cov = covariance(&x0, &x1);
        assert!(cov.agrees_with(0.0, 3.0, 0.0), "{cov:?}");
    }

    #[test]
    fn slab_is_deterministic_and_rows_regenerate_alone() {
        let g = SpaceTimeGrid::new(4.0, 128, 1.0, 9).unwrap();
        let h = HurstParam::new(0.35).unwrap();
        let a = sample_noise_slab(&g, h, 42).unwrap();
        let b = sample_noise_slab(&g, h, 42).unwrap();
        assert_eq!(a, b);
        let mut src = NoiseSource::new(&g, h, 42, 0).unwrap();
        let mut row = vec![0.0; g.nx];
        src.fill_row(7, &mut row).unwrap();
        assert_eq!(row.as_slice(), a.row(7));
    }

    #[test]
    fn total_mass_variance() {
        // Var X(1_{[0,T]×[−L,L]}) = T (2L)^{2H}
        let g = SpaceTimeGrid::new(2.0, 64, 0.5, 8).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        let masses: Vec<f64> = (0..4000)
            .map(|p| sample_noise_slab_for_path(&g, h, 11, p).unwrap().total_mass())
            .collect();
        let sq: Vec<f64> = masses.iter().map(|m| m * m).collect();
        let expect = g.horizon * 4f64.powf(0.6);
        let e = Estimate::from_samples(&sq);
        assert!(e.agrees_with(expect, 3.0, 0.0), "{e:?} vs {expect}");
    }

    #[test]
    fn coarsening_preserves_law() {
        let fine = SpaceTimeGrid::new(2.0, 128, 1.0, 16).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        let mut sq = Vec::new();
        for p in 0..2000 {
            let coarse = sample_noise_slab_for_path(&fine, h, 3, p).unwrap().coarsen().unwrap();
            sq.push(coarse.get(3, 17).powi(2));
        }
        let cg = fine.coarsened().unwrap();
        let var = cg.dt() * cg.dx().powf(0.6);
        assert!(Estimate::from_samples(&sq).agrees_with(var, 3.0, 0.0));
    }

    #[test]
    fn pairing_linearity_and_zero() {
        let g = SpaceTimeGrid::new(4.0, 128, 1.0, 8).unwrap();
        let slab = sample_noise_slab(&g, HurstParam::new(0.3).unwrap(), 1).unwrap();
        assert_eq!(pair_with_test_function(&slab, &|_: f64, _: f64| 0.0).value, 0.0);
        let phi = |t: f64, x: f64| (-(x * x)).exp() * (1.0 + t);
        let psi = |_t: f64, x: f64| x.sin();
        let (alpha, beta) = (0.75, -2.0);
        let combo = |t: f64, x: f64| alpha * phi(t, x) + beta * psi(t, x);
        let lhs = pair_with_test_function(&slab, &combo).value;
        let rhs = alpha * pair_with_test_function(&slab, &phi).value
            + beta * pair_with_test_function(&slab, &psi).value;
        assert!((lhs - rhs).abs() < 1e-12);
        let wide = SeparableTest::gaussian(0.0, 1.0, 0.0, 2.0);
        assert!(pair_with_test_function(&slab, &wide).truncated);
        let narrow = SeparableTest::gaussian(0.0, 1.0, 0.0, 0.3);
        assert!(!pair_with_test_function(&slab, &narrow).truncated);
    }

    /// Trapezoid over ξ ∈ [0, Ξ] on a dense uniform grid, doubled until stable.
    fn brute_force_covariance(phi: &SeparableTest, psi: &SeparableTest, h: f64) -> f64 {
        let c_h = gamma_oracle(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI);
        let overlap = phi.time.overlap(&psi.time);
        let cutoff = 40.0;
        let f = |xi: f64| {
            (phi.space.fourier(xi) * psi.space.fourier(xi).conj()).re * xi.powf(1.0 - 2.0 * h)
        };
        let mut n = 1000;
        let mut prev = f64::NAN;
        loop {
            let dxi = cutoff / n as f64;
            let mut s = 0.5 * (f(0.0) + f(cutoff));
            for k in 1..n {
                s += f(k as f64 * dxi);
            }
            let val = 2.0 * c_h * overlap * s * dxi;
            if (val - prev).abs() < 1e-9 {
                return val;
            }
            prev = val;
            n *= 2;
        }
    }

    #[test]
    fn covariance_quadrature_against_brute_force() {
        let bump = SeparableTest::gaussian(0.0, 1.0, 0.0, 1.0);
        let q = spectral_covariance_quadrature(&bump, &bump, 0.3, 1e-8).unwrap();
        let b = brute_force_covariance(&bump, &bump, 0.3);
        assert!((q - b).abs() < 1e-6, "{q} vs {b}");
        let shifted = SeparableTest::gaussian(0.25, 1.0, 0.7, 0.5);
        let q2 = spectral_covariance_quadrature(&bump, &shifted, 0.3, 1e-8).unwrap();
        let b2 = brute_force_covariance(&bump, &shifted, 0.3);
        assert!((q2 - b2).abs() < 1e-6, "{q2} vs {b2}");
    }

    #[test]
    fn covariance_quadrature_symmetric_and_disjoint() {
        let a = SeparableTest::gaussian(0.0, 0.5, -1.0, 0.5);
        let b = SeparableTest::gaussian(0.0, 1.0, 0.5, 1.0);
        let ab = spectral_covariance_quadrature(&a, &b, 0.3, 1e-8).unwrap();
        let ba = spectral_covariance_quadrature(&b, &a, 0.3, 1e-8).unwrap();
        assert_eq!(ab, ba);
        let c = SeparableTest::gaussian(0.5, 1.0, 0.5, 1.0);
        assert_eq!(spectral_covariance_quadrature(&a, &c, 0.3, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn indicator_pair_matches_fbm_covariance_or_refuses() {
        // X(1_{[0,1]×[0,1]}) has variance 1 (unit fBm); loose tolerance is reachable.
        let ind = SeparableTest {
            time: TimeWindow { start: 0.0, end: 1.0 },
            space: SpaceProfile::Indicator { left: 0.0, right: 1.0 },
        };
        let v = spectral_covariance_quadrature(&ind, &ind, 0.45, 2e-2).unwrap();
        assert!((v - 1.0).abs() < 2e-2, "{v}");
        assert!(matches!(
            spectral_covariance_quadrature(&ind, &ind, 0.3, 1e-8),
            Err(Error::Quadrature(_))
        ));
    }

    #[test]
    fn discrete_covariance_of_indicator_is_fbm() {
        let g = SpaceTimeGrid::new(2.0, 64, 1.0, 4).unwrap();
        let ind = SeparableTest {
            time: TimeWindow { start: 0.0, end: 1.0 },
            space: SpaceProfile::Indicator { left: 0.0, right: 1.0 },
        };
        let v = discrete_pairing_covariance(&g, 0.3, &ind, &ind);
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }
}
