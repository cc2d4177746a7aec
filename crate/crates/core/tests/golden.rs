//! Byte-exact SVG output for a committed fixture. Regenerate with `UPDATE_GOLDEN=1`.

use std::fs;
use std::path::{Path, PathBuf};

use dscope_core::triplet::parse_embedding_csv;
use dscope_core::viz::{render_scatter, Palette};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn ten_point_scatter_matches_golden_file() {
    let (coords, labels) = parse_embedding_csv(fs::File::open(fixture("ten_points.csv")).unwrap()).unwrap();
    let svg = render_scatter(&coords, &labels, &Palette::default(), "ten points").unwrap();
    let golden = fixture("ten_points.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, fs::read_to_string(golden).unwrap());
}

#[test]
fn ten_point_scatter_places_corners_inside_the_margin() {
    let (coords, labels) = parse_embedding_csv(fs::File::open(fixture("ten_points.csv")).unwrap()).unwrap();
    let svg = render_scatter(&coords, &labels, &Palette::default(), "").unwrap();
    let circles: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).collect();
    assert_eq!(circles.len(), 10);
    // Range 0..9 padded by 5% each side: 0.45 / 9.9 of 800 px.
    let inset = format!("{:.2}", 0.45 / 9.9 * 800.0);
    let far = format!("{:.2}", 9.45 / 9.9 * 800.0);
    assert!(circles[0].contains(&format!("cx=\"{inset}\" cy=\"{far}\"")), "{}", circles[0]);
    assert!(circles[9].contains(&format!("cx=\"{far}\" cy=\"{inset}\"")), "{}", circles[9]);
}
