use std::fmt::Write;

use hho_core::afem::ConvergenceHistory;
use hho_core::mesh::{SideKind, Triangulation};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Name, colour and `(log10 ndof, log10 value)` points of one curve.
type Series = (&'static str, &'static str, Vec<(f64, f64)>);

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Log-log plot of the estimator and errors against ndof.
pub fn convergence(history: &ConvergenceHistory) -> String {
    let series: Vec<Series> = [
        ("eta", "#1f77b4", history.levels.iter().map(|l| Some(l.eta)).collect::<Vec<_>>()),
        ("err_sigma", "#d62728", history.levels.iter().map(|l| l.err_sigma).collect()),
        ("err_l2", "#2ca02c", history.levels.iter().map(|l| l.err_l2).collect()),
    ]
    .into_iter()
    .map(|(name, color, q)| {
        let pts = history
            .levels
            .iter()
            .zip(q)
            .filter_map(|(l, v)| v.filter(|v| *v > 0.0).map(|v| ((l.ndof as f64).log10(), v.log10())))
            .collect();
        (name, color, pts)
    })
    .filter(|s: &Series| !s.2.is_empty())
    .collect();

    let all = series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut svg = header(WIDTH, HEIGHT);
    if !x0.is_finite() {
        svg += "</svg>\n";
        return svg;
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{MARGIN}\" stroke=\"#ddd\"/><text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">1e{d}</text>",
            HEIGHT - MARGIN,
            HEIGHT - MARGIN + 18.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(d as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">1e{d}</text>",
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">ndof</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    for (i, (name, color, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(svg, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>", px(x), py(y));
        }
        let ly = MARGIN + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{name}</text>",
            WIDTH - MARGIN - 110.0,
            WIDTH - MARGIN - 85.0,
            WIDTH - MARGIN - 80.0,
            ly + 4.0
        );
    }
    svg += "</svg>\n";
    svg
}

/// Wireframe of the mesh with Dirichlet sides in red and Neumann sides in blue.
pub fn wireframe(mesh: &Triangulation) -> String {
    let v = mesh.vertices();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in v {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let pad = 20.0;
    let scale = ((WIDTH - 2.0 * pad) / (x1 - x0)).min((WIDTH - 2.0 * pad) / (y1 - y0));
    let w = 2.0 * pad + scale * (x1 - x0);
    let h = 2.0 * pad + scale * (y1 - y0);
    let px = |x: f64| pad + (x - x0) * scale;
    let py = |y: f64| h - pad - (y - y0) * scale;
    let mut svg = header(w, h);
    let stroke = (0.8 * scale * mesh.h_min()).clamp(0.1, 1.0);
    for kind in [SideKind::Interior, SideKind::Dirichlet, SideKind::Neumann] {
        let (color, width) = match kind {
            SideKind::Interior => ("black", stroke),
            SideKind::Dirichlet => ("#d62728", 2.0),
            SideKind::Neumann => ("#1f77b4", 2.0),
        };
        let mut d = String::new();
        for s in mesh.sides().iter().filter(|s| s.kind == kind) {
            let (a, b) = (v[s.vertices[0]], v[s.vertices[1]]);
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", px(a.x), py(a.y), px(b.x), py(b.y));
        }
        if !d.is_empty() {
            let _ = writeln!(svg, "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width:.2}\"/>");
        }
    }
    svg += "</svg>\n";
    svg
}
