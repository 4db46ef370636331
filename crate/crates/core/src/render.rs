//! Standalone SVG output.
//!
//! Element ids are stable and used by clients to find things:
//!
//! | element | id |
//! |---|---|
//! | origin region polygon | `region-o-<id>` |
//! | destination region polygon | `region-d-<id>` |
//! | origin leader | `leader-o-<id>` |
//! | destination leader | `leader-d-<id>` |
//! | circle | `glyph-o-<id>`, `glyph-d-<id>` |
//! | label | `label-o-<id>`, `label-d-<id>` |
//! | matrix cell | `cell-<origin id>-<destination id>` |
//!
//! Highlighted elements carry the extra class `hl`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assembler::MapTrixLayout;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::selection::{Highlight, SelectionState};

/// ColorBrewer YlOrRd, 9 classes, lightest first.
pub const YLORRD: [&str; 9] = [
    "#FFFFCC", "#FFEDA0", "#FED976", "#FEB24C", "#FD8D3C", "#FC4E2A", "#E31A1C", "#BD0026", "#800026",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn parse(hex: &str) -> Result<Rgb> {
        let h = hex.strip_prefix('#').unwrap_or(hex);
        let channel = |i: usize| {
            h.get(i..i + 2)
                .and_then(|s| u8::from_str_radix(s, 16).ok())
                .ok_or_else(|| Error::Validation(format!("bad colour {hex:?}")))
        };
        if h.len() != 6 {
            return Err(Error::Validation(format!("bad colour {hex:?}")));
        }
        Ok(Rgb(channel(0)?, channel(2)?, channel(4)?))
    }

    pub fn hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }

    pub fn luminance(self) -> f64 {
        0.2126 * self.0 as f64 + 0.7152 * self.1 as f64 + 0.0722 * self.2 as f64
    }

    /// Channel-wise linear blend, `t = 0` gives `self`.
    pub fn lerp(self, other: Rgb, t: f64) -> Rgb {
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round().clamp(0.0, 255.0) as u8;
        Rgb(mix(self.0, other.0), mix(self.1, other.1), mix(self.2, other.2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleSpec {
    /// Cell colour ramp, lightest first.
    pub ramp: Vec<String>,
    /// Position cells on the ramp by `ln(1 + v)` instead of `v`.
    pub log_scale: bool,
    pub circle_max_radius: f64,
    pub label_font_size: f64,
    /// Grey used for the smallest totals and for the largest.
    pub grey_light: String,
    pub grey_dark: String,
    pub leader_width: f64,
    pub separator_width: f64,
    pub highlight_color: String,
    pub highlight_width: f64,
    /// Total-flow bars beside the matrix.
    pub legacy_bars: bool,
}

impl Default for StyleSpec {
    fn default() -> Self {
        StyleSpec {
            ramp: YLORRD.iter().map(|s| s.to_string()).collect(),
            log_scale: false,
            circle_max_radius: 10.0,
            label_font_size: 9.0,
            grey_light: "#BDBDBD".into(),
            grey_dark: "#252525".into(),
            leader_width: 1.2,
            separator_width: 2.0,
            highlight_color: "#1F6FEB".into(),
            highlight_width: 2.0,
            legacy_bars: false,
        }
    }
}

impl StyleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ramp.len() < 2 {
            return Err(Error::Validation("colour ramp needs at least two anchors".into()));
        }
        let ramp = self.ramp()?;
        if ramp.windows(2).any(|w| w[1].luminance() >= w[0].luminance()) {
            return Err(Error::Validation("colour ramp must darken strictly".into()));
        }
        Rgb::parse(&self.grey_light)?;
        Rgb::parse(&self.grey_dark)?;
        Rgb::parse(&self.highlight_color)?;
        for (name, v) in [
            ("circle_max_radius", self.circle_max_radius),
            ("label_font_size", self.label_font_size),
            ("leader_width", self.leader_width),
            ("separator_width", self.separator_width),
            ("highlight_width", self.highlight_width),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn ramp(&self) -> Result<Vec<Rgb>> {
        self.ramp.iter().map(|s| Rgb::parse(s)).collect()
    }

    /// Grey for a shade in [0, 1].
    pub fn grey(&self, shade: f64) -> Rgb {
        let light = Rgb::parse(&self.grey_light).unwrap_or(Rgb(0xBD, 0xBD, 0xBD));
        let dark = Rgb::parse(&self.grey_dark).unwrap_or(Rgb(0x25, 0x25, 0x25));
        light.lerp(dark, shade.clamp(0.0, 1.0))
    }
}

/// Position of a value on the colour ramp, in [0, 1].
pub fn ramp_position(value: f64, max_flow: f64, style: &StyleSpec) -> Result<f64> {
    if !(max_flow > 0.0 && max_flow.is_finite()) {
        return Err(Error::Validation(format!("max_flow must be > 0, got {max_flow}")));
    }
    if !(value >= 0.0) {
        return Err(Error::Validation(format!("flow must be >= 0, got {value}")));
    }
    let t = if style.log_scale {
        value.ln_1p() / max_flow.ln_1p()
    } else {
        value / max_flow
    };
    Ok(t.min(1.0))
}

/// Cell fill: the value's ramp position interpolated linearly in RGB
/// between the two surrounding anchors.
pub fn color_for_flow(value: f64, max_flow: f64, style: &StyleSpec) -> Result<Rgb> {
    let t = ramp_position(value, max_flow, style)?;
    let ramp = style.ramp()?;
    let segments = (ramp.len() - 1) as f64;
    let pos = t * segments;
    let i = (pos.floor() as usize).min(ramp.len() - 2);
    Ok(ramp[i].lerp(ramp[i + 1], pos - i as f64))
}

/// Circle radius with area proportional to `total`.
pub fn circle_radius(total: f64, max_total: f64, style: &StyleSpec) -> f64 {
    if !(max_total > 0.0) || !(total > 0.0) {
        return 0.0;
    }
    style.circle_max_radius * (total / max_total).sqrt()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

struct Canvas<'a> {
    out: String,
    height: f64,
    layout: &'a MapTrixLayout,
}

impl Canvas<'_> {
    fn fx(&self, p: Point) -> f64 {
        p.x - self.layout.canvas.min.x
    }

    /// SVG y grows downwards.
    fn fy(&self, p: Point) -> f64 {
        self.height - (p.y - self.layout.canvas.min.y)
    }

    fn x(&self, p: Point) -> String {
        num(self.fx(p))
    }

    fn y(&self, p: Point) -> String {
        num(self.fy(p))
    }

    fn path(&self, points: &[Point], close: bool) -> String {
        let mut d = String::new();
        for (i, p) in points.iter().enumerate() {
            if i > 0 && points[i - 1] == *p {
                continue;
            }
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, self.x(*p), self.y(*p));
        }
        if close {
            d.push_str(" Z");
        }
        d
    }
}

fn class(base: &str, hl: bool) -> String {
    if hl {
        format!("{base} hl")
    } else {
        base.to_string()
    }
}

/// Renders the layout. Output depends only on the arguments.
pub fn render(layout: &MapTrixLayout, style: &StyleSpec, highlights: Option<&SelectionState>) -> Result<String> {
    style.validate()?;
    let ds = &layout.dataset;
    let width = layout.canvas.width();
    let height = layout.canvas.height();
    let mut c = Canvas {
        out: String::new(),
        height,
        layout,
    };

    let empty = Default::default();
    let hl = highlights.map(|s| &s.highlights).unwrap_or(&empty);
    let origin_ids: Vec<&str> = ds.origins().iter().map(|r| r.id()).collect();
    let dest_ids: Vec<&str> = ds.destinations().iter().map(|r| r.id()).collect();
    let mut hl_origin = vec![false; origin_ids.len()];
    let mut hl_dest = vec![false; dest_ids.len()];
    let mut hl_row = vec![false; origin_ids.len()];
    let mut hl_col = vec![false; dest_ids.len()];
    let mut hl_cell = std::collections::BTreeSet::new();
    for h in hl {
        match h {
            Highlight::Origin { id } => {
                if let Some(i) = ds.origin_index(id) {
                    hl_origin[i] = true;
                    hl_row[i] = true;
                }
            }
            Highlight::Destination { id } => {
                if let Some(j) = ds.destination_index(id) {
                    hl_dest[j] = true;
                    hl_col[j] = true;
                }
            }
            Highlight::Cell { origin, destination } => {
                if let (Some(i), Some(j)) = (ds.origin_index(origin), ds.destination_index(destination)) {
                    hl_origin[i] = true;
                    hl_dest[j] = true;
                    hl_cell.insert((i, j));
                }
            }
        }
    }

    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = num(width),
        h = num(height)
    );
    let _ = writeln!(
        c.out,
        "<style>.region{{fill:#F4F4F4;stroke:#9E9E9E;stroke-width:0.8}} .leader{{fill:none;stroke-width:{lw}}} .cell{{stroke:#FFFFFF;stroke-width:0.3}} .separator{{stroke:#333333;stroke-width:{sw}}} .glyph{{fill-opacity:0.55;stroke:#FFFFFF;stroke-width:0.5}} .hl{{stroke:{hc};stroke-width:{hw}}}</style>",
        lw = num(style.leader_width),
        sw = num(style.separator_width),
        hc = escape(&style.highlight_color),
        hw = num(style.highlight_width),
    );

    let totals_out = ds.totals_out();
    let totals_in = ds.totals_in();
    let max_total = totals_out.iter().chain(totals_in).copied().fold(0.0, f64::max);
    let shade = |t: f64| if max_total > 0.0 { t / max_total } else { 0.0 };

    let sides: [(&str, &str, &[crate::flow_model::Region], &[crate::labeller::LeaderRoute], &[f64], &[bool]); 2] = [
        ("o", "origin", &layout.regions.origin, &layout.leaders.origin, totals_out, &hl_origin),
        ("d", "destination", &layout.regions.destination, &layout.leaders.destination, totals_in, &hl_dest),
    ];

    for (tag, name, regions, _, _, marks) in sides {
        let _ = writeln!(c.out, r#"<g id="{name}-map">"#);
        for (region, &mark) in regions.iter().zip(marks) {
            let d = c.path(region.boundary().vertices(), true);
            let _ = writeln!(
                c.out,
                r#"<path id="region-{tag}-{id}" class="{cls}" d="{d}"/>"#,
                id = escape(region.id()),
                cls = class("region", mark)
            );
        }
        let _ = writeln!(c.out, "</g>");
    }

    // Destination pictogram: an arrow entering a box, top-left of the
    // lower panel.
    {
        let panel = layout.panels.destination;
        let s = 12.0;
        let corner = Point::new(panel.min.x, panel.max.y);
        let (x0, y0) = (c.fx(corner), c.fy(corner));
        let _ = writeln!(
            c.out,
            r##"<g id="destination-icon" stroke="#555555" fill="none" stroke-width="1.2"><rect x="{}" y="{}" width="{}" height="{}"/><path d="M{} {} L{} {} M{} {} L{} {} L{} {}"/></g>"##,
            num(x0 + s * 0.5),
            num(y0 + 2.0),
            num(s),
            num(s),
            num(x0 - s * 0.2),
            num(y0 + 2.0 + s * 0.5),
            num(x0 + s),
            num(y0 + 2.0 + s * 0.5),
            num(x0 + s * 0.75),
            num(y0 + 2.0 + s * 0.25),
            num(x0 + s),
            num(y0 + 2.0 + s * 0.5),
            num(x0 + s * 0.75),
            num(y0 + 2.0 + s * 0.75),
        );
    }

    let _ = writeln!(c.out, r#"<g id="leaders">"#);
    for (tag, _, regions, routes, totals, marks) in sides {
        for ((route, region), (&t, &mark)) in routes.iter().zip(regions).zip(totals.iter().zip(marks)) {
            let d = c.path(&route.points(), false);
            let _ = writeln!(
                c.out,
                r#"<path id="leader-{tag}-{id}" class="{cls}" stroke="{grey}" d="{d}"/>"#,
                id = escape(region.id()),
                cls = class("leader", mark),
                grey = style.grey(shade(t)).hex(),
            );
        }
    }
    let _ = writeln!(c.out, "</g>");

    let _ = writeln!(c.out, r#"<g id="glyphs">"#);
    for (tag, name, _, routes, totals, marks) in sides {
        let ids = if name == "origin" { &origin_ids } else { &dest_ids };
        for ((route, id), (&t, &mark)) in routes.iter().zip(ids).zip(totals.iter().zip(marks)) {
            let r = circle_radius(t, max_total, style);
            let fill = if tag == "o" { "#3182BD" } else { "#E6550D" };
            let _ = writeln!(
                c.out,
                r#"<circle id="glyph-{tag}-{id}" class="{cls}" cx="{cx}" cy="{cy}" r="{r}" fill="{fill}"/>"#,
                id = escape(id),
                cls = class("glyph", mark),
                cx = c.x(route.site),
                cy = c.y(route.site),
                r = num(r),
            );
        }
    }
    let _ = writeln!(c.out, "</g>");

    let _ = writeln!(c.out, r#"<g id="labels" font-size="{}">"#, num(style.label_font_size));
    for (tag, name, _, routes, totals, _) in sides {
        let ids = if name == "origin" { &origin_ids } else { &dest_ids };
        for ((route, id), &t) in routes.iter().zip(ids).zip(totals) {
            let at = route.site.translate(0.0, style.label_font_size * 0.2);
            let _ = writeln!(
                c.out,
                r#"<text id="label-{tag}-{id}" x="{x}" y="{y}" text-anchor="middle" fill="{fill}">{text}</text>"#,
                id = escape(id),
                x = c.x(at),
                y = c.y(at),
                fill = style.grey(shade(t)).hex(),
                text = escape(id),
            );
        }
    }
    let _ = writeln!(c.out, "</g>");

    let g = &layout.matrix;
    let side = g.cell_size;
    let _ = writeln!(c.out, r#"<g id="matrix">"#);
    let max_flow = ds.max_flow();
    for (r, &i) in layout.ordering.rows.iter().enumerate() {
        for (q, &j) in layout.ordering.cols.iter().enumerate() {
            let center = g.cell_center(r, q);
            let fill = if max_flow > 0.0 {
                color_for_flow(ds.flow(i, j), max_flow, style)?.hex()
            } else {
                style.ramp[0].clone()
            };
            let (fx, fy) = (c.fx(center), c.fy(center));
            let mark = hl_row[i] || hl_col[j] || hl_cell.contains(&(i, j));
            let _ = writeln!(
                c.out,
                r#"<rect id="cell-{o}-{d}" class="{cls}" x="{x}" y="{y}" width="{s}" height="{s}" fill="{fill}" transform="rotate(45 {cx} {cy})"/>"#,
                cx = num(fx),
                cy = num(fy),
                o = escape(origin_ids[i]),
                d = escape(dest_ids[j]),
                cls = class("cell", mark),
                x = num(fx - side / 2.0),
                y = num(fy - side / 2.0),
                s = num(side),
            );
        }
    }
    let (row_seps, col_seps) = g.separators();
    for (a, b) in row_seps.into_iter().chain(col_seps) {
        let _ = writeln!(
            c.out,
            r#"<line class="separator" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            c.x(a),
            c.y(a),
            c.x(b),
            c.y(b)
        );
    }
    let _ = writeln!(c.out, "</g>");

    if style.legacy_bars {
        let _ = writeln!(c.out, r##"<g id="bars" fill="#9E9E9E">"##);
        let reach = 3.0;
        for (r, &i) in layout.ordering.rows.iter().enumerate() {
            let len = reach * shade(totals_out[i]);
            let a = (g.rows - r) as f64;
            let pts = [
                g.grid_point(a - 0.8, g.cols as f64),
                g.grid_point(a - 0.2, g.cols as f64),
                g.grid_point(a - 0.2, g.cols as f64 + len),
                g.grid_point(a - 0.8, g.cols as f64 + len),
            ];
            let _ = writeln!(c.out, r#"<path id="bar-o-{}" d="{}"/>"#, escape(origin_ids[i]), c.path(&pts, true));
        }
        for (q, &j) in layout.ordering.cols.iter().enumerate() {
            let len = reach * shade(totals_in[j]);
            let b = q as f64;
            let m = g.rows as f64;
            let pts = [
                g.grid_point(m, b + 0.2),
                g.grid_point(m, b + 0.8),
                g.grid_point(m + len, b + 0.8),
                g.grid_point(m + len, b + 0.2),
            ];
            let _ = writeln!(c.out, r#"<path id="bar-d-{}" d="{}"/>"#, escape(dest_ids[j]), c.path(&pts, true));
        }
        let _ = writeln!(c.out, "</g>");
    }

    c.out.push_str("</svg>\n");
    Ok(c.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        let s = StyleSpec::default();
        assert_eq!(color_for_flow(0.0, 10.0, &s).unwrap().hex(), "#FFFFCC");
        assert_eq!(color_for_flow(10.0, 10.0, &s).unwrap().hex(), "#800026");
    }

    #[test]
    fn ramp_midpoint_is_middle_anchor() {
        let s = StyleSpec::default();
        assert_eq!(color_for_flow(5.0, 10.0, &s).unwrap().hex(), "#FD8D3C");
    }

    #[test]
    fn non_positive_max_rejected() {
        let s = StyleSpec::default();
        assert_eq!(color_for_flow(0.0, 0.0, &s).unwrap_err().code(), "ValidationError");
    }

    #[test]
    fn default_ramp_is_valid() {
        StyleSpec::default().validate().unwrap();
        let mut s = StyleSpec::default();
        s.ramp.reverse();
        assert!(s.validate().is_err());
    }

    #[test]
    fn radii() {
        let s = StyleSpec::default();
        assert_eq!(circle_radius(8.0, 8.0, &s), 10.0);
        assert_eq!(circle_radius(0.0, 8.0, &s), 0.0);
        assert!((circle_radius(2.0, 8.0, &s) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn log_scale_lifts_small_values() {
        let s = StyleSpec {
            log_scale: true,
            ..Default::default()
        };
        let lin = ramp_position(10.0, 1000.0, &StyleSpec::default()).unwrap();
        let log = ramp_position(10.0, 1000.0, &s).unwrap();
        assert!(log > lin);
    }

    #[test]
    fn escapes_ids() {
        assert_eq!(escape(r#"a<b>&"c""#), "a&lt;b&gt;&amp;&quot;c&quot;");
    }
}
