//! Fundamental solutions of the wave and heat equations, their Fourier
//! symbols, the kernel energy `g(h) = ∫₀^h ∫ |FG_r(ξ)|² |ξ|^{1−2H} dξ dr`,
//! initial data, and the homogeneous solution `w(t, x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{angular_frequencies, Fft};
use crate::noise::{IncrementSampler, SpaceTimeGrid};
use crate::quad;
use crate::rng::{self, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KernelKind {
    Wave,
    Heat,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Wave => "wave",
            KernelKind::Heat => "heat",
        }
    }
}

/// Dynamics selector together with the exponents it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Time Hölder exponent: `H` for the wave equation, `H/2` for heat.
    pub gamma: f64,
    /// Mean-square time exponent, `2γ`.
    pub beta: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, hurst: f64) -> Self {
        let gamma = match kind {
            KernelKind::Wave => hurst,
            KernelKind::Heat => 0.5 * hurst,
        };
        Self { kind, gamma, beta: 2.0 * gamma }
    }
}

/// `G_t(x)`: `½·1{|x|<t}` for the wave equation, the `N(0, t)` density for heat.
pub fn green(kind: KernelKind, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(match kind {
        KernelKind::Wave => {
            if x.abs() < t {
                0.5
            } else {
                0.0
            }
        }
        KernelKind::Heat => libm::exp(-x * x / (2.0 * t)) / libm::sqrt(2.0 * PI * t),
    })
}

/// `FG_t(ξ)`: `sin(t|ξ|)/|ξ|` (value `t` at `ξ = 0`) for wave, `exp(−tξ²/2)` for heat.
pub fn green_fourier(kind: KernelKind, t: f64, xi: f64) -> f64 {
    match kind {
        KernelKind::Wave => {
            let a = xi.abs();
            if a * t < 1e-4 {
                let z = a * t;
                t * (1.0 - z * z / 6.0)
            } else {
                libm::sin(t * a) / a
            }
        }
        KernelKind::Heat => libm::exp(-0.5 * t * xi * xi),
    }
}

/// `Γ(1−H) h^H / H`, the heat kernel energy in closed form.
pub fn heat_energy_closed_form(lag: f64, hurst: f64) -> f64 {
    libm::tgamma(1.0 - hurst) * libm::pow(lag, hurst) / hurst
}

/// `∫₀^h |FG_r(ξ)|² dr`, evaluated without cancellation at small `ξ`.
fn time_integrated_symbol(kind: KernelKind, lag: f64, xi: f64) -> f64 {
    match kind {
        KernelKind::Heat => {
            let z = lag * xi * xi;
            if z < 1e-12 {
                lag
            } else {
                -libm::expm1(-z) / (xi * xi)
            }
        }
        KernelKind::Wave => {
            let z = lag * xi;
            if z < 1e-2 {
                let h3 = lag * lag * lag;
                h3 * (1.0 / 3.0 - z * z / 15.0 + 2.0 * z * z * z * z / 315.0)
            } else {
                (0.5 * lag - libm::sin(2.0 * z) / (4.0 * xi)) / (xi * xi)
            }
        }
    }
}

const MAX_ENERGY_CUTOFF: f64 = 1e9;

/// Kernel energy `g(h) = ∫₀^h ∫_ℝ |FG_r(ξ)|² |ξ|^{1−2H} dξ dr` to relative
/// tolerance `tol`.
///
/// The `r` integral is done in closed form; the frequency integral runs to a
/// cutoff `Ξ` by adaptive quadrature, and the tail beyond `Ξ` is added from
/// its leading asymptotics with the remainder bounded below `tol`.
pub fn kernel_energy(kind: KernelKind, lag: f64, hurst: f64, tol: f64) -> Result<f64> {
    if !(lag > 0.0) {
        return Err(Error::NonPositiveTime(lag));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::HurstOutOfRange(hurst));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let p = 2.0 * hurst;
    let integrand = |xi: f64| {
        if xi == 0.0 {
            0.0
        } else {
            time_integrated_symbol(kind, lag, xi) * libm::pow(xi, 1.0 - p)
        }
    };
    match kind {
        KernelKind::Heat => {
            // e^{−hΞ²} is negligible past hΞ² = 50.
            let scale = 1.0 / libm::sqrt(lag);
            let cutoff = scale * libm::sqrt(50.0);
            let breaks = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0].map(|b| b * scale);
            let breaks = breaks.into_iter().chain(core::iter::once(cutoff));
            let estimate = heat_energy_closed_form(lag, hurst);
            let r = quad::integrate_panels(integrand, breaks, 0.05 * tol * estimate / 8.0, 0.0, 400)?;
            let tail = libm::pow(cutoff, -p) / p;
            Ok(2.0 * (r.value + tail))
        }
        KernelKind::Wave => {
            let a = 2.0 * lag;
            let nu = 2.0 + p;
            // rough scale of the answer, used only to set absolute tolerances
            let estimate = libm::pow(lag, p + 1.0);
            let panel = PI / a;
            let mut cutoff = 64.0 * panel;
            loop {
                // remainder of the one-term asymptotic for ∫ sin(aξ) ξ^{−ν} / 4
                let remainder = nu * libm::pow(cutoff, -nu - 1.0) / (4.0 * a * a) * 2.0;
                if remainder < 0.05 * tol * estimate {
                    break;
                }
                cutoff *= 2.0;
                if cutoff > MAX_ENERGY_CUTOFF {
                    return Err(Error::Quadrature(format!(
                        "wave kernel energy cannot reach tolerance {tol:e} below cutoff {MAX_ENERGY_CUTOFF:e}"
                    )));
                }
            }
            let panels = libm::ceil(cutoff / panel) as usize;
            let breaks = (0..=panels).map(|k| k as f64 * panel);
            let cutoff = panels as f64 * panel;
            let r = quad::integrate_panels(integrand, breaks, 0.05 * tol * estimate / panels as f64, 0.0, 200)?;
            let smooth_tail = 0.5 * lag * libm::pow(cutoff, -p) / p;
            let oscillating_tail = 0.25 * libm::cos(a * cutoff) * libm::pow(cutoff, -nu) / a;
            Ok(2.0 * (r.value + smooth_tail - oscillating_tail))
        }
    }
}

/// A real function of one variable used as initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `Σ_{k=0}^{K} 2^{−kH} cos(2^k x)`
    Weierstrass { hurst: f64, terms: u32 },
    /// One frozen fBm path, linearly interpolated; `values[i]` sits at `origin + i·spacing`.
    FrozenFbm { hurst: f64, origin: f64, spacing: f64, values: Vec<f64> },
    Bump { center: f64, width: f64, amplitude: f64 },
    Constant(f64),
    Linear { slope: f64 },
    Zero,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Weierstrass { hurst, terms } => {
                let ratio = libm::pow(2.0, -hurst);
                let mut amp = 1.0;
                let mut freq = 1.0;
                let mut s = 0.0;
                for _ in 0..=*terms {
                    s += amp * libm::cos(freq * x);
                    amp *= ratio;
                    freq *= 2.0;
                }
                s
            }
            Profile::FrozenFbm { origin, spacing, values, .. } => {
                let pos = (x - origin) / spacing;
                if pos <= 0.0 {
                    return values[0];
                }
                let i = libm::floor(pos) as usize;
                if i + 1 >= values.len() {
                    return values[values.len() - 1];
                }
                let f = pos - i as f64;
                values[i] * (1.0 - f) + values[i + 1] * f
            }
            Profile::Bump { center, width, amplitude } => {
                let z = (x - center) / width;
                amplitude * libm::exp(-0.5 * z * z)
            }
            Profile::Constant(c) => *c,
            Profile::Linear { slope } => slope * x,
            Profile::Zero => 0.0,
        }
    }

    /// Uniform Hölder order of the profile.
    pub fn holder_order(&self) -> f64 {
        match self {
            Profile::Weierstrass { hurst, .. } | Profile::FrozenFbm { hurst, .. } => *hurst,
            _ => 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero) || matches!(self, Profile::Constant(c) if *c == 0.0)
    }
}

/// Named families of initial profiles, as selected in configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialFamily {
    Weierstrass { hurst: f64, terms: u32 },
    FrozenFbm { hurst: f64, seed: u64 },
    Bump { center: f64, width: f64, amplitude: f64 },
    Constant(f64),
    Linear { slope: f64 },
    Zero,
}

/// Initial position `u0` and velocity `v0` (the latter unused for heat).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Profile,
    pub v0: Profile,
}

impl InitialData {
    pub fn zero() -> Self {
        Self { u0: Profile::Zero, v0: Profile::Zero }
    }

    pub fn holder_order(&self) -> f64 {
        self.u0.holder_order().min(self.v0.holder_order())
    }
}

/// Build a profile from its family. `FrozenFbm` draws one path covering every
/// point the homogeneous solution can reach, `[−L−T, L+T]`.
pub fn make_profile(family: InitialFamily, grid: &SpaceTimeGrid) -> Result<Profile> {
    Ok(match family {
        InitialFamily::Weierstrass { hurst, terms } => {
            if terms < 20 {
                return Err(Error::InvalidInput(format!(
                    "Weierstrass data needs at least 20 terms, got {terms}"
                )));
            }
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::HurstOutOfRange(hurst));
            }
            Profile::Weierstrass { hurst, terms }
        }
        InitialFamily::FrozenFbm { hurst, seed } => {
            let spacing = grid.dx();
            let reach = grid.half_width + grid.horizon + spacing;
            let n = ((2.0 * reach / spacing) as usize + 1).next_power_of_two();
            let mut sampler = IncrementSampler::new(n, spacing, hurst)?;
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut stream = rng::substream(seed, StreamDomain::InitialData, 0, 0);
            sampler.sample_pair(&mut stream, &mut a, &mut b);
            let origin = -(n as f64 / 2.0) * spacing;
            let mut values = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            values.push(acc);
            for inc in &a {
                acc += inc;
                values.push(acc);
            }
            let anchor = values[n / 2];
            for v in &mut values {
                *v -= anchor;
            }
            Profile::FrozenFbm { hurst, origin, spacing, values }
        }
        InitialFamily::Bump { center, width, amplitude } => {
            if !(width > 0.0) {
                return Err(Error::InvalidInput(format!("bump width must be positive, got {width}")));
            }
            Profile::Bump { center, width, amplitude }
        }
        InitialFamily::Constant(c) => Profile::Constant(c),
        InitialFamily::Linear { slope } => Profile::Linear { slope },
        InitialFamily::Zero => Profile::Zero,
    })
}

/// Initial data with `u0` from `family` and `v0 ≡ 0`.
pub fn make_initial_data(family: InitialFamily, grid: &SpaceTimeGrid) -> Result<InitialData> {
    Ok(InitialData { u0: make_profile(family, grid)?, v0: Profile::Zero })
}

/// `max |f(x) − f(y)| / |x − y|^order` over dyadic pairs of a uniform
/// `2^level` partition of `[a, b]`.
pub fn holder_quotient<F: Fn(f64) -> f64>(f: F, order: f64, a: f64, b: f64, level: u32) -> f64 {
    let n = 1usize << level;
    let dx = (b - a) / n as f64;
    let values: Vec<f64> = (0..=n).map(|i| f(a + i as f64 * dx)).collect();
    let mut best = 0.0f64;
    let mut lag = 1;
    while lag <= n {
        let denom = libm::pow(lag as f64 * dx, order);
        for i in 0..=n - lag {
            best = best.max((values[i + lag] - values[i]).abs() / denom);
        }
        lag *= 2;
    }
    best
}

/// Hölder quotients at two refinement levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCertificate {
    pub order: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl HolderCertificate {
    /// Finite and grows by less than 25% over six dyadic refinements.
    pub fn stable(&self) -> bool {
        self.fine.is_finite() && self.fine <= 1.25 * self.coarse
    }
}

pub fn certify_holder(profile: &Profile, order: f64, a: f64, b: f64) -> HolderCertificate {
    let f = |x| profile.eval(x);
    HolderCertificate {
        order,
        coarse: holder_quotient(f, order, a, b, 10),
        fine: holder_quotient(f, order, a, b, 16),
    }
}

/// Solution of the homogeneous equation on the grid, rows `t_0 … t_nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousField {
    /// Row-major `(nt + 1) × nx`.
    pub w: Vec<f64>,
    pub kernel: KernelSpec,
    pub grid: SpaceTimeGrid,
}

impl HomogeneousField {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.w[n * self.grid.nx..(n + 1) * self.grid.nx]
    }

    /// Same-shaped field of zeros (homogeneous response to zero data).
    pub fn zeros(kernel: KernelSpec, grid: SpaceTimeGrid) -> Self {
        Self { w: vec![0.0; (grid.nt + 1) * grid.nx], kernel, grid }
    }
}

/// `w(t, x)`: d'Alembert's formula for the wave equation, heat-semigroup
/// convolution (periodic FFT on the reflected extension of `u0`) for heat.
pub fn homogeneous_solution(
    kernel: KernelSpec,
    init: &InitialData,
    grid: &SpaceTimeGrid,
) -> Result<HomogeneousField> {
    let nx = grid.nx;
    let mut field = HomogeneousField::zeros(kernel, *grid);
    if init.u0.is_zero() && (kernel.kind == KernelKind::Heat || init.v0.is_zero()) {
        return Ok(field);
    }
    match kernel.kind {
        KernelKind::Wave => wave_dalembert(&mut field.w, init, grid),
        KernelKind::Heat => {
            let m = 2 * nx;
            let mut fft = Fft::new(m)?;
            let mut spectrum: Vec<Complex64> = (0..m)
                .map(|i| {
                    let j = if i < nx { i } else { m - 1 - i };
                    Complex64::new(init.u0.eval(grid.x(j)), 0.0)
                })
                .collect();
            for (j, w) in field.w[..nx].iter_mut().enumerate() {
                *w = spectrum[j].re;
            }
            fft.forward(&mut spectrum);
            let xi = angular_frequencies(m, 2.0 * grid.period());
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            for n in 1..=grid.nt {
                let t = grid.t(n);
                for ((b, s), &k) in buf.iter_mut().zip(&spectrum).zip(&xi) {
                    *b = s * (libm::exp(-0.5 * t * k * k) / m as f64);
                }
                fft.inverse(&mut buf);
                for (w, b) in field.w[n * nx..(n + 1) * nx].iter_mut().zip(&buf) {
                    *w = b.re;
                }
            }
        }
    }
    Ok(field)
}

fn wave_dalembert(out: &mut [f64], init: &InitialData, grid: &SpaceTimeGrid) {
    let nx = grid.nx;
    let dx = grid.dx();
    let dt = grid.dt();
    let reach = grid.half_width + grid.horizon;
    // Antiderivative of v0 by cumulative trapezoid at grid resolution.
    let velocity = if init.v0.is_zero() {
        None
    } else {
        let start = -reach - dx;
        let count = libm::ceil(2.0 * (reach + dx) / dx) as usize + 1;
        let mut cum = Vec::with_capacity(count);
        let mut acc = 0.0;
        let mut prev = init.v0.eval(start);
        cum.push(0.0);
        for i in 1..count {
            let v = init.v0.eval(start + i as f64 * dx);
            acc += 0.5 * dx * (prev + v);
            prev = v;
            cum.push(acc);
        }
        Some((start, cum))
    };
    let antiderivative = |y: f64| -> f64 {
        let (start, cum) = velocity.as_ref().expect("velocity table present");
        let pos = ((y - start) / dx).clamp(0.0, (cum.len() - 1) as f64);
        let i = (libm::floor(pos) as usize).min(cum.len() - 2);
        let f = pos - i as f64;
        cum[i] * (1.0 - f) + cum[i + 1] * f
    };
    let ratio = dx / dt;
    let lattice = libm::round(ratio);
    if (ratio - lattice).abs() < 1e-9 && lattice >= 1.0 {
        // x_j ± t_n all sit on a lattice of spacing Δt: tabulate u0 once.
        let r = lattice as usize;
        let offset = grid.nt;
        let count = nx * r + 2 * grid.nt + 1;
        let table: Vec<f64> = (0..count)
            .map(|i| init.u0.eval(-grid.half_width + (i as f64 - offset as f64) * dt))
            .collect();
        for n in 0..=grid.nt {
            for j in 0..nx {
                let c = j * r + offset;
                let mut w = 0.5 * (table[c + n] + table[c - n]);
                if velocity.is_some() {
                    let (x, t) = (grid.x(j), grid.t(n));
                    w += 0.5 * (antiderivative(x + t) - antiderivative(x - t));
                }
                out[n * nx + j] = w;
            }
        }
    } else {
        for n in 0..=grid.nt {
            let t = grid.t(n);
            for j in 0..nx {
                let x = grid.x(j);
                let mut w = 0.5 * (init.u0.eval(x + t) + init.u0.eval(x - t));
                if velocity.is_some() {
                    w += 0.5 * (antiderivative(x + t) - antiderivative(x - t));
                }
                out[n * nx + j] = w;
            }
        }
    }
}
