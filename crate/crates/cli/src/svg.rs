use std::fmt::Write as _;

use laguerre_core::ppp::Aabb;
use laguerre_core::tessellation::LaguerreCell;
use laguerre_core::geometry::WeightedPoint;

const PALETTE: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn color(x: f64) -> String {
    let x = x.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let k = (x.floor() as usize).min(PALETTE.len() - 2);
    let u = x - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (PALETTE[k][i] * (1.0 - u) + PALETTE[k + 1][i] * u).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Cells as filled polygons colored by generator weight, on `view`.
pub fn render(cells: &[LaguerreCell], sites: &[WeightedPoint], view: &Aabb) -> String {
    let (lo, hi) = cells
        .iter()
        .map(|c| sites[c.site].h)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), h| (a.min(h), b.max(h)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (view.side(0), view.side(1));
    let px = 800.0;
    let scale = px / w.max(h);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    for c in cells {
        let pts: Vec<String> = c
            .polygon
            .iter()
            .map(|p| format!("{:.3},{:.3}", (p[0] - view.lo[0]) * scale, (view.hi[1] - p[1]) * scale))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{}" stroke="white" stroke-width="0.6"/>"#,
            pts.join(" "),
            color((sites[c.site].h - lo) / span)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
