//! Split-line regression over the singular set and the dichotomous
//! partition of a sample set, with the degeneracy fallback chain.

use crate::image::{MultiImage, SampleSet};

use super::linear::cov_eigen;

/// Oriented line `a*x + b*y + c = 0` fitted over singular-point locations:
/// `a = sigma_xy`, `b = -sigma_x2`, `c = y_bar*sigma_x2 - x_bar*sigma_xy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub center: (f64, f64),
    pub sigma_x2: f64,
    pub sigma_xy: f64,
}

impl SplitLine {
    #[inline]
    pub fn signed(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

/// Regression line through the singular-point cloud. A cloud with zero
/// x-variance (vertical segment or single point) degenerates to the vertical
/// line `x = x_bar`, which keeps the coefficients usable.
pub fn fit_split_line(img: &MultiImage, singular: &[u32]) -> SplitLine {
    let w = img.width();
    let n = singular.len() as f64;
    let inv = 1.0 / n;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for &i in singular {
        sx += (i % w) as f64;
        sy += (i / w) as f64;
    }
    let cx = sx * inv;
    let cy = sy * inv;
    let mut sigma_x2 = 0.0;
    let mut sigma_xy = 0.0;
    for &i in singular {
        let dx = (i % w) as f64 - cx;
        let dy = (i / w) as f64 - cy;
        sigma_x2 += dx * dx;
        sigma_xy += dx * dy;
    }
    sigma_x2 *= inv;
    sigma_xy *= inv;

    if sigma_x2 == 0.0 {
        return SplitLine {
            a: 1.0,
            b: 0.0,
            c: -cx,
            center: (cx, cy),
            sigma_x2,
            sigma_xy,
        };
    }
    SplitLine {
        a: sigma_xy,
        b: -sigma_x2,
        c: cy * sigma_x2 - cx * sigma_xy,
        center: (cx, cy),
        sigma_x2,
        sigma_xy,
    }
}

/// Partition of `set` by the sign of the line expression: strictly negative
/// points go left, the rest right. An empty side triggers the fallback chain:
/// first a split perpendicular to the set's own principal axis through its
/// gravity center, then a median split in raster order. Both sides of the
/// result are non-empty for any set of two or more points.
pub fn split_set(set: &SampleSet, line: &SplitLine) -> (Vec<u32>, Vec<u32>) {
    debug_assert!(set.card() >= 2);
    let (minus, plus) = partition(set, |x, y| line.signed(x, y) < 0.0);
    if !minus.is_empty() && !plus.is_empty() {
        return (minus, plus);
    }

    // Fallback: cut across the major principal axis of the point locations.
    let n = set.card() as f64;
    let inv = 1.0 / n;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..set.card() {
        cx += set.x(i) as f64;
        cy += set.y(i) as f64;
    }
    cx *= inv;
    cy *= inv;
    let (mut r_xx, mut r_xy, mut r_yy) = (0.0, 0.0, 0.0);
    for i in 0..set.card() {
        let dx = set.x(i) as f64 - cx;
        let dy = set.y(i) as f64 - cy;
        r_xx += dx * dx;
        r_xy += dx * dy;
        r_yy += dy * dy;
    }
    let (_, _, theta) = cov_eigen(r_xx * inv, r_xy * inv, r_yy * inv);
    let (ux, uy) = (theta.cos(), theta.sin());
    let (minus, plus) = partition(set, |x, y| (x - cx) * ux + (y - cy) * uy < 0.0);
    if !minus.is_empty() && !plus.is_empty() {
        return (minus, plus);
    }

    // Last resort: median of the raster order.
    let mut idx = set.indices().to_vec();
    idx.sort_unstable();
    let plus = idx.split_off(idx.len() / 2);
    (idx, plus)
}

fn partition<F: Fn(f64, f64) -> bool>(set: &SampleSet, goes_left: F) -> (Vec<u32>, Vec<u32>) {
    let mut minus = Vec::new();
    let mut plus = Vec::new();
    for i in 0..set.card() {
        if goes_left(set.x(i) as f64, set.y(i) as f64) {
            minus.push(set.indices()[i]);
        } else {
            plus.push(set.indices()[i]);
        }
    }
    (minus, plus)
}
