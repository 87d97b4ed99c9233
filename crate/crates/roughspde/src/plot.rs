//! Static log-log SVG of a moment table with its fitted line and CI band.

use std::fmt::Write;

use roughspde_core::regularity::{ExponentFit, MomentTable};

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

pub fn fit_svg(table: &MomentTable, fit: &ExponentFit) -> String {
    let xs: Vec<f64> = table.rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.moment.max(f64::MIN_POSITIVE).ln()).collect();
    let line = |x: f64, slope: f64| fit.intercept + slope * x;
    // CI band: lines through the fit's centre with the interval's slopes
    let xc = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let yc = line(xc, fit.slope);
    let band = |x: f64, e: f64| yc + fit.p * e * (x - xc);

    let (x0, x1) = bounds(&xs);
    let mut all_y = ys.clone();
    for &x in &[x0, x1] {
        all_y.extend([line(x, fit.slope), band(x, fit.ci95.0), band(x, fit.ci95.1)]);
    }
    let (y0, y1) = bounds(&all_y);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<polygon fill="#9ecae1" fill-opacity="0.5" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}"/>"##,
        px(x0),
        py(band(x0, fit.ci95.0)),
        px(x1),
        py(band(x1, fit.ci95.0)),
        px(x1),
        py(band(x1, fit.ci95.1)),
        px(x0),
        py(band(x0, fit.ci95.1))
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#3182bd" stroke-width="1.5"/>"##,
        px(x0),
        py(line(x0, fit.slope)),
        px(x1),
        py(line(x1, fit.slope))
    );
    for (r, (&x, &y)) in table.rows.iter().zip(xs.iter().zip(&ys)) {
        if r.moment > 0.0 && r.stderr > 0.0 {
            let lo = (r.moment - r.stderr).max(r.moment * 1e-3).ln();
            let hi = (r.moment + r.stderr).ln();
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#,
                px(x),
                py(lo),
                py(hi)
            );
        }
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, px(x), py(y));
    }
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{0}" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">log h ({} direction)</text>"#,
        W / 2.0,
        H - 12.0,
        table.direction.name()
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="20" font-size="12">log E|du|^{}: exponent {:.4} [{:.4}, {:.4}]</text>"#,
        table.p, fit.exponent, fit.ci95.0, fit.ci95.1
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m = 0.05 * (hi - lo).max(1e-9);
    (lo - m, hi + m)
}
