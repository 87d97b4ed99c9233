//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use alloc::collections::BinaryHeap;
use alloc::format;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, &x) in XGK.iter().take(7).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over `[a, b]` until the error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    let (v, e) = kronrod15(&mut f, a, b);
    let mut evaluations = 15;
    let mut total = v;
    let mut err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_segments {
            return Err(Error::Quadrature(format!(
                "segment budget {max_segments} exhausted (estimate {total:e}, error {err:e})"
            )));
        }
        let seg = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = kronrod15(&mut f, seg.a, mid);
        let (v2, e2) = kronrod15(&mut f, mid, seg.b);
        evaluations += 30;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        if !total.is_finite() {
            return Err(Error::Quadrature("integrand produced a non-finite value".into()));
        }
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated cancellation in the running total.
    let value = heap.iter().map(|s| s.value).sum();
    let abs_error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult { value, abs_error, evaluations })
}

/// Integrate over consecutive panels `[b_0,b_1], [b_1,b_2], ...`, each to the
/// same tolerances. Useful for oscillatory integrands where a fixed panel
/// width tracks the period.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: impl IntoIterator<Item = f64>,
    abs_tol_per_panel: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<QuadResult> {
    let mut it = breaks.into_iter();
    let Some(mut lo) = it.next() else {
        return Ok(QuadResult { value: 0.0, abs_error: 0.0, evaluations: 0 });
    };
    let mut out = QuadResult { value: 0.0, abs_error: 0.0, evaluations: 0 };
    for hi in it {
        let r = integrate(&mut f, lo, hi, abs_tol_per_panel, rel_tol, max_segments)?;
        out.value += r.value;
        out.abs_error += r.abs_error;
        out.evaluations += r.evaluations;
        lo = hi;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 0.0, 10).unwrap();
        assert!((r.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let r = integrate(|x| 1.0 / libm::sqrt(x), 0.0, 1.0, 1e-10, 1e-10, 500).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn oscillatory_panels() {
        let breaks = (0..=40).map(|k| k as f64 * core::f64::consts::PI / 2.0);
        let r = integrate_panels(|x| libm::sin(x) * libm::exp(-0.05 * x), breaks, 1e-13, 1e-12, 50)
            .unwrap();
        // closed form on [0, 20 pi]: (1 - e^{-a 20pi}) / (1 + a^2)
        let a: f64 = 0.05;
        let exact = (1.0 - libm::exp(-a * 20.0 * core::f64::consts::PI)) / (1.0 + a * a);
        assert!((r.value - exact).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let r = integrate(|x| libm::sin(1.0 / x), 1e-9, 1.0, 1e-15, 0.0, 4);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
