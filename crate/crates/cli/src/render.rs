//! Static SVG figures: a heatmap of a scalar grid with an optional
//! confidence contour, geodesics and markers for the fit and the truth.

use std::fmt::Write;

use infogeo_core::gridscan::ScalarGrid;

const PLOT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const COLORBAR: f64 = 90.0;
const MARGIN_BOTTOM: f64 = 60.0;

pub struct Figure<'a> {
    pub title: Option<String>,
    pub grid: &'a ScalarGrid,
    pub region: Option<&'a [[f64; 2]]>,
    pub geodesics: Option<&'a [Vec<[f64; 2]>]>,
    pub mle: Option<[f64; 2]>,
    pub truth: Option<[f64; 2]>,
}

/// Blue–white–red diverging map on `t ∈ [−1, 1]`.
pub fn diverging(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(-1.0, 1.0);
    let (lo, mid, hi) = ((33.0, 102.0, 172.0), (247.0, 247.0, 247.0), (178.0, 24.0, 43.0));
    let (a, b, s): ((f64, f64, f64), (f64, f64, f64), f64) = if t < 0.0 { (mid, lo, -t) } else { (mid, hi, t) };
    let mix = |x: f64, y: f64| (x + (y - x) * s).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Centre and half-width of the colour scale: symmetric about zero when the
/// values change sign, about the midpoint otherwise.
fn colour_scale(grid: &ScalarGrid) -> (f64, f64) {
    let finite = grid.values.iter().flatten().filter(|v| v.is_finite());
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !min.is_finite() {
        return (0.0, 1.0);
    }
    let (centre, half) = if min < 0.0 && max > 0.0 {
        (0.0, min.abs().max(max))
    } else {
        (0.5 * (min + max), 0.5 * (max - min))
    };
    (centre, if half > 0.0 { half } else { 1.0 })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(fig: &Figure<'_>) -> String {
    let g = fig.grid;
    let (a1, a2) = (&g.axis1, &g.axis2);
    let (n1, n2) = (a1.resolution, a2.resolution);
    // cells are centred on grid nodes, so the plotted extent overhangs the
    // axis range by half a cell on every side
    let (d1, d2) = ((a1.hi - a1.lo) / (n1 - 1) as f64, (a2.hi - a2.lo) / (n2 - 1) as f64);
    let (x_lo, x_hi) = (a1.lo - 0.5 * d1, a1.hi + 0.5 * d1);
    let (y_lo, y_hi) = (a2.lo - 0.5 * d2, a2.hi + 0.5 * d2);
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * PLOT;
    let py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * PLOT;
    let (cw, ch) = (PLOT / n1 as f64, PLOT / n2 as f64);
    let width = MARGIN_LEFT + PLOT + COLORBAR;
    let height = MARGIN_TOP + PLOT + MARGIN_BOTTOM;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, "<!-- infogeo {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(title) = &fig.title {
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + PLOT / 2.0, escape(title));
    }

    let (centre, half) = colour_scale(g);
    let _ = writeln!(s, r#"<g id="heatmap" shape-rendering="crispEdges">"#);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let v = g.values[i1][i2];
            let fill = if v.is_finite() {
                let (r, gg, b) = diverging((v - centre) / half);
                format!("#{r:02x}{gg:02x}{b:02x}")
            } else {
                "#808080".to_string()
            };
            let x = px(a1.coord(i1)) - cw / 2.0;
            let y = py(a2.coord(i2)) - ch / 2.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let polyline = |s: &mut String, pts: &[[f64; 2]], stroke: &str, width: f64| {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.3},{:.3}", px(p[0]), py(p[1]))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    };
    let _ = writeln!(
        s,
        r#"<clipPath id="plot-area"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{PLOT}" height="{PLOT}"/></clipPath>"#
    );
    let _ = writeln!(s, r#"<g id="overlays" clip-path="url(#plot-area)">"#);
    if let Some(curves) = fig.geodesics {
        for c in curves {
            polyline(&mut s, c, "#000000", 1.0);
        }
    }
    if let Some(region) = fig.region {
        polyline(&mut s, region, "#ff00ff", 2.0);
    }
    for (p, colour) in [(fig.truth, "#00a000"), (fig.mle, "#e00000")] {
        if let Some(p) = p {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.3}" cy="{:.3}" r="5" fill="{colour}" stroke="#ffffff" stroke-width="1"/>"##,
                px(p[0]),
                py(p[1])
            );
        }
    }
    let _ = writeln!(s, "</g>");

    // frame, ticks and labels
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{PLOT}" height="{PLOT}" fill="none" stroke="#000000"/>"##
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = a1.lo + f * (a1.hi - a1.lo);
        let y = a2.lo + f * (a2.hi - a2.lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
            px(x),
            MARGIN_TOP + PLOT + 18.0,
            tick(x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + PLOT / 2.0,
        MARGIN_TOP + PLOT + 42.0,
        escape(&a1.name)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.3}" text-anchor="middle" transform="rotate(-90 18 {:.3})">{}</text>"#,
        MARGIN_TOP + PLOT / 2.0,
        MARGIN_TOP + PLOT / 2.0,
        escape(&a2.name)
    );

    // colour bar
    let bar_x = MARGIN_LEFT + PLOT + 20.0;
    let steps = 50;
    for k in 0..steps {
        let t = 1.0 - 2.0 * (k as f64 + 0.5) / steps as f64;
        let (r, gg, b) = diverging(t);
        let _ = writeln!(
            s,
            r##"<rect x="{bar_x}" y="{:.3}" width="16" height="{:.3}" fill="#{r:02x}{gg:02x}{b:02x}"/>"##,
            MARGIN_TOP + k as f64 * PLOT / steps as f64,
            PLOT / steps as f64 + 0.05
        );
    }
    for (t, y) in [(1.0, MARGIN_TOP), (0.0, MARGIN_TOP + PLOT / 2.0), (-1.0, MARGIN_TOP + PLOT)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}">{}</text>"#,
            bar_x + 20.0,
            y + 4.0,
            tick(centre + t * half)
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        let t = format!("{v:.3}");
        if t == "-0.000" {
            "0.000".into()
        } else {
            t
        }
    }
}
