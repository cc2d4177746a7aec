//! Gaussian kernel density on a regular 2D grid and the highest-density-region class area.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

pub const MIN_RESOLUTION: usize = 16;
/// Grid padding around the data, in bandwidths.
pub const PADDING_BANDWIDTHS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Bounding box of `points` padded by `3h`. All-identical points get a unit box
    /// first; the flag reports that case.
    pub fn covering(points: &Matrix, h: f64) -> Result<(Self, bool)> {
        check_points(points)?;
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points.iter_rows() {
            x_min = x_min.min(p[0]);
            x_max = x_max.max(p[0]);
            y_min = y_min.min(p[1]);
            y_max = y_max.max(p[1]);
        }
        let degenerate = x_min == x_max && y_min == y_max;
        if degenerate {
            x_min -= 0.5;
            x_max += 0.5;
            y_min -= 0.5;
            y_max += 0.5;
        }
        let pad = PADDING_BANDWIDTHS * h;
        Ok((
            Self {
                x_min: x_min - pad,
                x_max: x_max + pad,
                y_min: y_min - pad,
                y_max: y_max + pad,
            },
            degenerate,
        ))
    }
}

/// Density values on `resolution x resolution` cell centers; `values[iy * g + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub extent: Extent,
    pub resolution: usize,
    pub bandwidth: f64,
    pub values: Vec<f64>,
    /// Set when all input points coincided and the extent was expanded to a unit box.
    pub degenerate: bool,
}

impl DensityGrid {
    pub fn dx(&self) -> f64 {
        (self.extent.x_max - self.extent.x_min) / self.resolution as f64
    }

    pub fn dy(&self) -> f64 {
        (self.extent.y_max - self.extent.y_min) / self.resolution as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        cell_centers(&self.extent, self.resolution, ix, iy)
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Number of cells in the highest-density region holding fraction `q` of the grid mass.
    pub fn hdr_cells(&self, q: f64) -> usize {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let target = q * sorted.iter().sum::<f64>();
        let mut acc = 0.0;
        for (i, v) in sorted.iter().enumerate() {
            acc += v;
            if acc >= target {
                return i + 1;
            }
        }
        sorted.len()
    }
}

fn cell_centers(extent: &Extent, g: usize, ix: usize, iy: usize) -> (f64, f64) {
    let dx = (extent.x_max - extent.x_min) / g as f64;
    let dy = (extent.y_max - extent.y_min) / g as f64;
    (
        extent.x_min + (ix as f64 + 0.5) * dx,
        extent.y_min + (iy as f64 + 0.5) * dy,
    )
}

fn check_points(points: &Matrix) -> Result<()> {
    if points.cols() != 2 {
        return Err(Error::Shape(format!(
            "2D points expected, got {} columns",
            points.cols()
        )));
    }
    if points.rows() == 0 {
        return Err(Error::Empty("point set"));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("KDE input".into()));
    }
    Ok(())
}

fn check_grid(h: f64, g: usize) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    if g < MIN_RESOLUTION {
        return Err(invalid(format!(
            "grid resolution must be at least {MIN_RESOLUTION}, got {g}"
        )));
    }
    Ok(())
}

/// `density(c) = 1 / (N 2 pi h²) * sum_i exp(-|c - p_i|² / (2h²))` over a grid spanning the
/// points plus `3h` padding.
pub fn kde2d(points: &Matrix, h: f64, g: usize) -> Result<DensityGrid> {
    check_grid(h, g)?;
    let (extent, degenerate) = Extent::covering(points, h)?;
    let mut grid = kde2d_on(points, h, extent, g)?;
    grid.degenerate = degenerate;
    Ok(grid)
}

/// KDE on a caller-chosen extent, so several point sets share one grid.
pub fn kde2d_on(points: &Matrix, h: f64, extent: Extent, g: usize) -> Result<DensityGrid> {
    check_grid(h, g)?;
    check_points(points)?;
    let n = points.rows();
    // The Gaussian kernel factorises over axes, so the grid is ey^T * ex with
    // ex[p][ix] = exp(-(cx - px)² / 2h²) and ey likewise.
    let inv = 1.0 / (2.0 * h * h);
    let mut ex = Matrix::zeros(n, g);
    let mut ey = Matrix::zeros(n, g);
    for (p, pt) in points.iter_rows().enumerate() {
        for i in 0..g {
            let (cx, cy) = cell_centers(&extent, g, i, i);
            ex[(p, i)] = (-(cx - pt[0]).powi(2) * inv).exp();
            ey[(p, i)] = (-(cy - pt[1]).powi(2) * inv).exp();
        }
    }
    let mut values = ey.matmul_tn(&ex)?.into_data();
    let norm = 1.0 / (n as f64 * 2.0 * PI * h * h);
    values.iter_mut().for_each(|v| *v *= norm);
    Ok(DensityGrid {
        extent,
        resolution: g,
        bandwidth: h,
        values,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `N^(-1/6) * sqrt((var_x + var_y) / 2)` of the pooled points.
    Scott,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, points: &Matrix) -> f64 {
        match self {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Scott => scott_bandwidth(points),
        }
    }
}

/// Scott's rule for an isotropic 2D kernel. Falls back to 0.1 for zero spread.
pub fn scott_bandwidth(points: &Matrix) -> f64 {
    let n = points.rows();
    if n < 2 {
        return 0.1;
    }
    let means = points.column_means();
    let var: f64 = points
        .iter_rows()
        .map(|p| (p[0] - means[0]).powi(2) + (p[1] - means[1]).powi(2))
        .sum::<f64>()
        / (2.0 * (n - 1) as f64);
    let h = (n as f64).powf(-1.0 / 6.0) * var.sqrt();
    if h > 0.0 && h.is_finite() {
        h
    } else {
        0.1
    }
}

/// Parameters shared by every class-area computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaParams {
    pub mass: f64,
    pub bandwidth: Bandwidth,
    pub resolution: usize,
}

impl Default for AreaParams {
    fn default() -> Self {
        Self {
            mass: 0.8,
            bandwidth: Bandwidth::Scott,
            resolution: 128,
        }
    }
}

/// HDR area of class `class` divided by the HDR area of all points pooled, capped at 1.
///
/// Both densities use the same bandwidth (resolved on the pooled points) and the same
/// grid, which spans all points plus `3h`.
pub fn class_area_ratio(coords: &Matrix, labels: &[usize], class: usize, params: AreaParams) -> Result<f64> {
    let ratios = class_area_ratios_for(coords, labels, &[class], params)?;
    Ok(ratios[&class])
}

/// Area ratio of every class present in `labels`.
pub fn class_area_ratios(coords: &Matrix, labels: &[usize], params: AreaParams) -> Result<BTreeMap<usize, f64>> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    class_area_ratios_for(coords, labels, &classes, params)
}

fn class_area_ratios_for(
    coords: &Matrix,
    labels: &[usize],
    classes: &[usize],
    params: AreaParams,
) -> Result<BTreeMap<usize, f64>> {
    if coords.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} coordinates for {} labels",
            coords.rows(),
            labels.len()
        )));
    }
    if !(params.mass > 0.0 && params.mass <= 1.0) {
        return Err(invalid("HDR mass must lie in (0, 1]"));
    }
    let h = params.bandwidth.resolve(coords);
    check_grid(h, params.resolution)?;
    let (extent, _) = Extent::covering(coords, h)?;
    let whole = kde2d_on(coords, h, extent, params.resolution)?.hdr_cells(params.mass);
    let mut out = BTreeMap::new();
    for &c in classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            return Err(invalid(format!("class {c} has no points")));
        }
        let cells = kde2d_on(&coords.select_rows(&idx), h, extent, params.resolution)?
            .hdr_cells(params.mass);
        out.insert(c, (cells as f64 / whole as f64).min(1.0));
    }
    Ok(out)
}
