//! SVG 1.1 phase portraits.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::equilibria::find_equilibria;
use crate::integrate::flow;
use crate::limitsets::{detect_limit_cycle, LimitCycle, LimitParams};
use crate::topology::BoxSet;
use crate::{Error, IntegrationParams, Point, Rect, Result, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub struct PortraitOptions {
    /// Streamline seeds per side of the seed grid.
    pub seeds_per_side: usize,
    /// Forward integration time of each streamline.
    pub flow_time: f64,
    /// Drawing width in pixels; the height follows the aspect ratio.
    pub width: f64,
    /// Look for limit cycles from a coarse subset of the seeds.
    pub find_cycles: bool,
    pub integration: IntegrationParams,
    pub limits: LimitParams,
}

impl Default for PortraitOptions {
    fn default() -> Self {
        Self {
            seeds_per_side: 12,
            flow_time: 10.0,
            width: 600.0,
            find_cycles: true,
            integration: IntegrationParams {
                dt_dense: 0.02,
                ..IntegrationParams::default()
            },
            limits: LimitParams::default(),
        }
    }
}

/// Everything drawn in a portrait, in plane coordinates.
#[derive(Debug, Clone, Default)]
pub struct Portrait {
    pub streamlines: Vec<Vec<Point>>,
    pub equilibria: Vec<Point>,
    pub cycles: Vec<Vec<Point>>,
    pub boxes: Vec<Rect>,
}

/// Cell-centre seeds of an `n × n` grid over `rect`.
pub fn seed_grid(rect: Rect, n: usize) -> Vec<Point> {
    let mut seeds = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            seeds.push(Point::new(
                rect.x0 + (i as f64 + 0.5) / n as f64 * rect.width(),
                rect.y0 + (j as f64 + 0.5) / n as f64 * rect.height(),
            ));
        }
    }
    seeds
}

/// One forward streamline per seed, cut where it leaves a 5% margin
/// around `rect`.
pub fn streamlines(field: &VectorField, rect: Rect, opts: &PortraitOptions) -> Result<Vec<Vec<Point>>> {
    let (mx, my) = (0.05 * rect.width(), 0.05 * rect.height());
    let view = Rect::new(rect.x0 - mx, rect.y0 - my, rect.x1 + mx, rect.y1 + my);
    seed_grid(rect, opts.seeds_per_side)
        .par_iter()
        .map(|&s| {
            let tr = flow(field, s, opts.flow_time, &opts.integration)?;
            let keep = tr
                .points
                .iter()
                .position(|p| !view.contains(*p))
                .unwrap_or(tr.points.len());
            Ok(tr.points[..keep.max(1)].to_vec())
        })
        .collect()
}

/// Distinct limit cycles reached from a 3×3 subset of seeds.
pub fn find_cycles(field: &VectorField, rect: Rect, opts: &PortraitOptions) -> Result<Vec<LimitCycle>> {
    let found: Vec<Option<LimitCycle>> = seed_grid(rect, 3)
        .par_iter()
        .map(|&s| detect_limit_cycle(field, s, &opts.integration, &opts.limits).or(Ok(None)))
        .collect::<Result<_>>()?;
    let mut cycles: Vec<LimitCycle> = Vec::new();
    for c in found.into_iter().flatten() {
        if cycles.iter().all(|d| d.hausdorff(&c) >= 2.0 * opts.limits.tail_box) {
            cycles.push(c);
        }
    }
    Ok(cycles)
}

/// Streamlines, equilibria and cycles of `field` over `rect`, plus the
/// boxes of `k` if given.
pub fn portrait(field: &VectorField, rect: Rect, k: Option<&BoxSet>, opts: &PortraitOptions) -> Result<Portrait> {
    if !rect.is_valid() {
        return Err(Error::Precondition("portrait rectangle is degenerate".into()));
    }
    let streamlines = streamlines(field, rect, opts)?;
    let equilibria = find_equilibria(field, rect, 32, 1e-10)?
        .equilibria
        .into_iter()
        .map(|e| e.location)
        .collect();
    let cycles = if opts.find_cycles {
        find_cycles(field, rect, opts)?
            .into_iter()
            .map(|c| c.polyline)
            .collect()
    } else {
        Vec::new()
    };
    let boxes = k.map(|k| k.rects().collect()).unwrap_or_default();
    Ok(Portrait {
        streamlines,
        equilibria,
        cycles,
        boxes,
    })
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG document for `p` over `rect`, `y` pointing up.
pub fn render_svg(p: &Portrait, rect: Rect, width: f64, title: &str) -> String {
    let scale = width / rect.width();
    let height = rect.height() * scale;
    let px = |q: &Point| ((q.x - rect.x0) * scale, (rect.y1 - q.y) * scale);
    let path = |pts: &[Point]| {
        pts.iter()
            .map(|q| {
                let (x, y) = px(q);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape_xml(title));
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="#ffffff"/>"##
    );

    let _ = writeln!(
        s,
        r##"<g id="k-boxes" fill="#d04040" fill-opacity="0.3" stroke="none">"##
    );
    for b in &p.boxes {
        let (x, y) = px(&Point::new(b.x0, b.y1));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
            b.width() * scale,
            b.height() * scale
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r##"<g id="streamlines" fill="none" stroke="#3060a0" stroke-width="1">"##
    );
    for line in &p.streamlines {
        let _ = writeln!(s, r#"<polyline points="{}"/>"#, path(line));
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r##"<g id="cycles" fill="none" stroke="#208040" stroke-width="2.5">"##
    );
    for c in &p.cycles {
        let _ = writeln!(s, r#"<polygon points="{}"/>"#, path(c));
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="equilibria" fill="#000000">"##);
    for e in &p.equilibria {
        let (x, y) = px(e);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin;

    #[test]
    fn seed_grid_is_cell_centred() {
        let seeds = seed_grid(Rect::new(0.0, 0.0, 1.0, 2.0), 2);
        assert_eq!(seeds[0], Point::new(0.25, 0.5));
        assert_eq!(seeds[3], Point::new(0.75, 1.5));
    }

    #[test]
    fn one_streamline_per_seed_and_escaped_markup() {
        let f = builtin("saddle").unwrap();
        let rect = Rect::square(Point::zero(), 1.0);
        let opts = PortraitOptions {
            find_cycles: false,
            ..PortraitOptions::default()
        };
        let p = portrait(&f, rect, None, &opts).unwrap();
        assert_eq!(p.streamlines.len(), 144);
        assert_eq!(p.equilibria, vec![Point::zero()]);
        let svg = render_svg(&p, rect, 300.0, "a<b & c");
        assert_eq!(svg.matches("<polyline").count(), 144);
        assert!(svg.contains("<title>a&lt;b &amp; c</title>"));
    }
}
