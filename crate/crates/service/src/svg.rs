//! Static 3D scatter: plan coordinates in an oblique projection, floors
//! stacked vertically, one colored dot per record.

use std::fmt::Write;

use lte_mapper_core::analysis::{ColorBin, ScatterPoint};

const FLOOR_STEP: f64 = 120.0;
const MARGIN: f64 = 40.0;

fn color(bin: ColorBin) -> &'static str {
    match bin {
        ColorBin::Good => "#1a9850",
        ColorBin::Fair => "#fee08b",
        ColorBin::Poor => "#fc8d59",
        ColorBin::Bad => "#d73027",
        ColorBin::None => "#404040",
    }
}

/// Plan pixels are scaled so the widest plan spans 600 px.
pub fn render(points: &[ScatterPoint]) -> String {
    let max_x = points.iter().map(|p| p.x).fold(1.0, f64::max);
    let max_y = points.iter().map(|p| p.y).fold(1.0, f64::max);
    let scale = 600.0 / max_x.max(max_y);
    let (lo, hi) = points
        .iter()
        .fold((i32::MAX, i32::MIN), |(lo, hi), p| (lo.min(p.floor), hi.max(p.floor)));
    let (lo, hi) = if points.is_empty() { (0, 0) } else { (lo, hi) };
    let depth = max_y * scale * 0.5;
    let width = max_x * scale + depth + 2.0 * MARGIN + 60.0;
    let height = f64::from(hi - lo) * FLOOR_STEP + depth + 2.0 * MARGIN;
    let project = |x: f64, y: f64, floor: i32| {
        let d = y * scale * 0.5;
        (
            MARGIN + 60.0 + x * scale + d,
            MARGIN + f64::from(hi - floor) * FLOOR_STEP + depth - d,
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    for f in lo..=hi {
        let (x0, y0) = project(0.0, 0.0, f);
        let (x1, y1) = project(max_x, 0.0, f);
        let (x2, y2) = project(max_x, max_y, f);
        let (x3, y3) = project(0.0, max_y, f);
        let _ = writeln!(
            s,
            r##"<polygon points="{x0:.1},{y0:.1} {x1:.1},{y1:.1} {x2:.1},{y2:.1} {x3:.1},{y3:.1}" fill="none" stroke="#bbb"/><text x="{:.1}" y="{:.1}">floor {f}</text>"##,
            MARGIN - 30.0,
            y0
        );
    }
    for p in points {
        let (x, y) = project(p.x, p.y, p.floor);
        let label = match p.rsrp {
            Some(v) => format!("{} {} dBm", p.id, v),
            None => format!("{} no reception", p.id),
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{}"><title>{}</title></circle>"#,
            color(p.bin),
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point() {
        let p = ScatterPoint {
            id: "1.1".into(),
            map_id: "f0".into(),
            x: 10.0,
            y: 20.0,
            floor: 0,
            room_id: "0.01".into(),
            outdoor_flag: false,
            rsrp: None,
            bin: ColorBin::None,
        };
        let svg = render(&[p.clone(), ScatterPoint { floor: 2, rsrp: Some(-90), bin: ColorBin::Good, ..p }]);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 3);
        assert!(svg.contains("no reception"));
        assert!(render(&[]).ends_with("</svg>\n"));
    }
}
