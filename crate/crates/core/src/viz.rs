//! Standalone SVG 1.1 figures: labelled scatter plots and density heatmaps on a fixed
//! 800 x 800 viewport. Coordinates are printed with two decimals so output is byte-stable.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::DensityGrid;

pub const VIEWPORT: f64 = 800.0;
pub const MARGIN_FRACTION: f64 = 0.05;
const POINT_RADIUS: f64 = 3.0;

/// Tableau-10 colors, then golden-angle hues for any further labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    colors: Vec<String>,
}

const TABLEAU10: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

impl Default for Palette {
    fn default() -> Self {
        Self::new(TABLEAU10.iter().map(|c| c.to_string()).collect())
    }
}

impl Palette {
    pub fn new(colors: Vec<String>) -> Self {
        Self { colors }
    }

    /// Color of the `i`-th distinct label.
    pub fn color(&self, i: usize) -> String {
        if let Some(c) = self.colors.get(i) {
            return c.clone();
        }
        let hue = ((i - self.colors.len()) as f64 * 137.507_764) % 360.0;
        let (r, g, b) = hsl_to_rgb(hue, 0.65, 0.5);
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to(r), to(g), to(b))
}

fn header(out: &mut String) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{v}\" height=\"{v}\" viewBox=\"0 0 {v} {v}\">",
        v = VIEWPORT
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{v}\" height=\"{v}\" fill=\"#ffffff\"/>", v = VIEWPORT);
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn title_text(out: &mut String, title: &str) {
    if !title.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
            VIEWPORT / 2.0,
            escape(title)
        );
    }
}

/// Document with a single "no data" label.
pub fn render_empty() -> String {
    let mut out = String::new();
    header(&mut out);
    let _ = writeln!(
        out,
        "<text x=\"{c}\" y=\"{c}\" font-family=\"sans-serif\" font-size=\"24\" text-anchor=\"middle\">no data</text>",
        c = VIEWPORT / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Data range padded by 5% on each side; a zero-width range becomes a unit range.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let pad = (hi - lo) * MARGIN_FRACTION;
    (lo - pad, hi + pad)
}

/// One circle per point, colored by the rank of its label among the distinct labels.
pub fn render_scatter(coords: &Matrix, labels: &[usize], palette: &Palette, title: &str) -> Result<String> {
    if coords.rows() != labels.len() {
        return Err(Error::Shape("coordinates and labels differ in length".into()));
    }
    if coords.rows() == 0 {
        return Ok(render_empty());
    }
    if coords.cols() != 2 {
        return Err(Error::Shape(format!("scatter needs 2 columns, got {}", coords.cols())));
    }
    if !coords.is_finite() {
        return Err(Error::NonFinite("scatter coordinates".into()));
    }
    let (x0, x1) = padded_range(coords.column(0).into_iter());
    let (y0, y1) = padded_range(coords.column(1).into_iter());
    let distinct: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = String::new();
    header(&mut out);
    title_text(&mut out, title);
    for (row, label) in coords.iter_rows().zip(labels) {
        let px = (row[0] - x0) / (x1 - x0) * VIEWPORT;
        let py = (y1 - row[1]) / (y1 - y0) * VIEWPORT;
        let rank = distinct.binary_search(label).expect("label is in the distinct set");
        let _ = writeln!(
            out,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{POINT_RADIUS}\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            palette.color(rank)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Viridis sampled at nine evenly spaced anchors; linear interpolation in between.
const VIRIDIS: [(u8, u8, u8); 9] = [
    (68, 1, 84),
    (71, 44, 122),
    (59, 81, 139),
    (44, 113, 142),
    (33, 144, 141),
    (39, 173, 129),
    (92, 200, 99),
    (170, 220, 50),
    (253, 231, 37),
];

/// Monotone colormap over `t` in `[0, 1]` (clamped): dark purple at 0, yellow at 1.
pub fn colormap(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    (lerp(a.0, b.0), lerp(a.1, b.1), lerp(a.2, b.2))
}

/// Heatmap with one rectangle per grid cell; color is linear in density / max density.
pub fn render_density(grid: &DensityGrid, title: &str) -> String {
    let g = grid.resolution;
    if g == 0 || grid.values.len() != g * g {
        return render_empty();
    }
    let max = grid.max();
    let cell = VIEWPORT / g as f64;
    let mut out = String::new();
    header(&mut out);
    for iy in 0..g {
        for ix in 0..g {
            let t = if max > 0.0 { grid.value(ix, iy) / max } else { 0.0 };
            let (r, gr, b) = colormap(t);
            // row 0 is the lowest y, drawn at the bottom
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#{r:02x}{gr:02x}{b:02x}\"/>",
                ix as f64 * cell,
                (g - 1 - iy) as f64 * cell,
                cell,
                cell
            );
        }
    }
    title_text(&mut out, title);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::kde2d;

    fn count(svg: &str, needle: &str) -> usize {
        svg.matches(needle).count()
    }

    #[test]
    fn single_point_sits_in_the_centre() {
        let pts = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let svg = render_scatter(&pts, &[3], &Palette::default(), "").unwrap();
        assert_eq!(count(&svg, "<circle"), 1);
        assert!(svg.contains("cx=\"400.00\" cy=\"400.00\""));
        assert!(svg.contains("width=\"800\" height=\"800\""));
    }

    #[test]
    fn one_color_per_distinct_label() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]).unwrap();
        let svg = render_scatter(&pts, &[7, 2, 7, 9, 2], &Palette::default(), "t").unwrap();
        let fills: BTreeSet<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), 3);
    }

    #[test]
    fn extra_labels_get_fresh_colors() {
        let p = Palette::default();
        let colors: BTreeSet<String> = (0..40).map(|i| p.color(i)).collect();
        assert_eq!(colors.len(), 40);
    }

    #[test]
    fn margins_keep_points_inside() {
        let pts = Matrix::from_rows(&[[-3.0, 10.0], [5.0, -2.0]]).unwrap();
        let svg = render_scatter(&pts, &[0, 1], &Palette::default(), "").unwrap();
        let lo = 800.0 * 0.05 / 1.1;
        assert!(svg.contains(&format!("cx=\"{lo:.2}\" cy=\"{lo:.2}\"")));
    }

    #[test]
    fn empty_input_says_no_data() {
        let svg = render_scatter(&Matrix::zeros(0, 2), &[], &Palette::default(), "").unwrap();
        assert!(svg.contains(">no data<"));
        assert_eq!(count(&svg, "<circle"), 0);
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        let pts = Matrix::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(render_scatter(&pts, &[0], &Palette::default(), "").is_err());
    }

    #[test]
    fn colormap_is_monotone_in_luminance() {
        let lum = |t: f64| {
            let (r, g, b) = colormap(t);
            0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64
        };
        let mut prev = lum(0.0);
        for i in 1..=100 {
            let cur = lum(i as f64 / 100.0);
            assert!(cur >= prev - 1e-9);
            prev = cur;
        }
        assert_eq!(colormap(-1.0), colormap(0.0));
        assert_eq!(colormap(2.0), (253, 231, 37));
    }

    #[test]
    fn density_heatmap_has_one_cell_per_grid_value() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let grid = kde2d(&pts, 0.3, 16).unwrap();
        let svg = render_density(&grid, "density");
        assert_eq!(count(&svg, "<rect"), 16 * 16 + 1);
        assert!(svg.contains("#fde725"));
    }
}
