// SPDX-License-Identifier: MIT OR Apache-2.0

//! Matrix emitters: CSV, binary PPM and SVG heatmaps.
//!
//! Heatmaps record their value range and palette in a header comment.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    /// Black (low) to white (high).
    Gray,
    /// Blue (negative) through white (zero) to red (positive), symmetric range.
    Diverging,
}

/// Value range mapped onto the palette, ignoring non-finite entries.
pub fn value_range(m: &Mat, palette: Palette) -> (f64, f64) {
    let finite = m.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return (0.0, 1.0);
    }
    match palette {
        Palette::Gray => (lo, hi),
        Palette::Diverging => {
            let a = lo.abs().max(hi.abs());
            (-a, a)
        }
    }
}

/// RGB colour of `v`; non-finite values are drawn mid-gray.
pub fn color(v: f64, range: (f64, f64), palette: Palette) -> [u8; 3] {
    if !v.is_finite() {
        return [128, 128, 128];
    }
    let span = range.1 - range.0;
    let s = if span > 0.0 { ((v - range.0) / span).clamp(0.0, 1.0) } else { 0.5 };
    let byte = |x: f64| (x * 255.0).round() as u8;
    match palette {
        Palette::Gray => [byte(s); 3],
        Palette::Diverging => {
            if s < 0.5 {
                let w = s * 2.0;
                [byte(w), byte(w), 255]
            } else {
                let w = (1.0 - s) * 2.0;
                [255, byte(w), byte(w)]
            }
        }
    }
}

fn palette_name(p: Palette) -> &'static str {
    match p {
        Palette::Gray => "gray",
        Palette::Diverging => "diverging",
    }
}

pub fn write_csv(m: &Mat, mut w: impl Write) -> io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Binary PPM (P6), one pixel per entry.
pub fn write_ppm(m: &Mat, palette: Palette, mut w: impl Write) -> io::Result<()> {
    let range = value_range(m, palette);
    write!(
        w,
        "P6\n# range {} {} palette {}\n{} {}\n255\n",
        range.0,
        range.1,
        palette_name(palette),
        m.ncols(),
        m.nrows()
    )?;
    let mut bytes = Vec::with_capacity(m.len() * 3);
    for row in m.row_iter() {
        for &v in row.iter() {
            bytes.extend_from_slice(&color(v, range, palette));
        }
    }
    w.write_all(&bytes)
}

pub fn svg_string(m: &Mat, palette: Palette, cell: usize) -> String {
    let range = value_range(m, palette);
    let mut s = String::new();
    let _ = writeln!(s, "<!-- range {} {} palette {} -->", range.0, range.1, palette_name(palette));
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        m.ncols() * cell,
        m.nrows() * cell
    );
    for (r, row) in m.row_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let [red, green, blue] = color(v, range, palette);
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="#{red:02x}{green:02x}{blue:02x}"/>"##,
                c * cell,
                r * cell
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(m: &Mat, palette: Palette, cell: usize, mut w: impl Write) -> io::Result<()> {
    w.write_all(svg_string(m, palette, cell).as_bytes())
}
