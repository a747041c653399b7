//! Hilbert space-filling curves in two and k dimensions, and the
//! nearest-neighbor visiting order they induce on point clouds.
//!
//! The 2D base pattern is pinned so encodings are canonical: at r = 1 the
//! cells are visited (0,0), (0,1), (1,1), (1,0). The k-dimensional curve
//! uses the Gray-code/transpose construction, which reduces to the same 2D
//! curve and keeps the unit-step property: consecutive indices differ in
//! exactly one coordinate by one step.

use crate::error::{Result, VisemeError};

/// Curve index to cell `(i, j)` on the `2^r` grid.
pub fn hilbert_d2xy(r: u32, index: u64) -> Result<(u32, u32)> {
    let n: u64 = 1 << r;
    if index >= n * n {
        return Err(VisemeError::InvalidArgument(format!(
            "index {index} outside the 4^{r} grid"
        )));
    }
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = index;
    let mut s = 1u64;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate_quadrant(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    Ok((x as u32, y as u32))
}

/// Cell `(i, j)` to curve index; inverse of `hilbert_d2xy`.
pub fn hilbert_xy2d(r: u32, i: u32, j: u32) -> Result<u64> {
    let n: u64 = 1 << r;
    if (i as u64) >= n || (j as u64) >= n {
        return Err(VisemeError::InvalidArgument(format!(
            "cell ({i}, {j}) outside the 2^{r} grid"
        )));
    }
    let (mut x, mut y) = (i as u64, j as u64);
    let mut d = 0u64;
    let mut s = n / 2;
    while s > 0 {
        let rx = if x & s > 0 { 1 } else { 0 };
        let ry = if y & s > 0 { 1 } else { 0 };
        d += s * s * ((3 * rx) ^ ry);
        rotate_quadrant(n, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    Ok(d)
}

fn rotate_quadrant(s: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = s - 1 - *x;
            *y = s - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

fn check_kd(k: u32, r: u32) -> Result<()> {
    if k == 0 || r == 0 || k * r > 63 {
        return Err(VisemeError::InvalidArgument(format!(
            "unsupported curve size k = {k}, r = {r}"
        )));
    }
    Ok(())
}

/// Curve index to a cell address in the `k`-dimensional `2^r` grid.
pub fn hilbert_kd(k: u32, r: u32, index: u64) -> Result<Vec<u32>> {
    check_kd(k, r)?;
    if index >= 1u64 << (k * r) {
        return Err(VisemeError::InvalidArgument(format!(
            "index {index} outside the 2^({k}*{r}) cube"
        )));
    }
    let mut x = index_to_transpose(k, r, index);
    transpose_to_axes(&mut x, r);
    Ok(x)
}

/// Cell address to curve index; inverse of `hilbert_kd`.
pub fn hilbert_kd_inv(k: u32, r: u32, cell: &[u32]) -> Result<u64> {
    check_kd(k, r)?;
    if cell.len() != k as usize {
        return Err(VisemeError::DimensionMismatch {
            expected: k as usize,
            got: cell.len(),
        });
    }
    if cell.iter().any(|&c| c >= 1 << r) {
        return Err(VisemeError::InvalidArgument(
            "cell coordinate outside the grid".into(),
        ));
    }
    let mut x = cell.to_vec();
    axes_to_transpose(&mut x, r);
    Ok(transpose_to_index(r, &x))
}

/// The transpose form spreads the index bits round-robin over the
/// coordinates, most significant round first: coordinate 0 carries bits
/// kr-1, kr-1-k, ... of the index.
fn index_to_transpose(k: u32, r: u32, index: u64) -> Vec<u32> {
    let mut x = vec![0u32; k as usize];
    for round in 0..r {
        for dim in 0..k {
            let bitpos = k * r - 1 - (round * k + dim);
            let bit = (index >> bitpos) & 1;
            x[dim as usize] |= (bit as u32) << (r - 1 - round);
        }
    }
    x
}

fn transpose_to_index(r: u32, x: &[u32]) -> u64 {
    let k = x.len() as u32;
    let mut index = 0u64;
    for round in 0..r {
        for dim in 0..k {
            let bit = (x[dim as usize] >> (r - 1 - round)) & 1;
            let bitpos = k * r - 1 - (round * k + dim);
            index |= (bit as u64) << bitpos;
        }
    }
    index
}

fn transpose_to_axes(x: &mut [u32], r: u32) {
    let n = x.len();
    let top: u32 = 2 << (r - 1);
    // Gray decode.
    let t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    // Undo excess work.
    let mut q: u32 = 2;
    while q != top {
        let p = q - 1;
        for i in (0..n).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}

fn axes_to_transpose(x: &mut [u32], r: u32) {
    let n = x.len();
    let m: u32 = 1 << (r - 1);
    // Inverse undo.
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    // Gray encode.
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

/// Visiting order of real-valued points: each point maps to its cell on the
/// `2^r` grid spanned by the bounding box, and points are sorted by curve
/// index with ties resolved by original position. A degenerate bounding box
/// collapses an axis to cell 0.
pub fn order_points(points: &[(f64, f64)], r: u32) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = 1u32 << r;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let cell = |v: f64, min: f64, max: f64| -> u32 {
        if max <= min {
            return 0;
        }
        let t = (v - min) / (max - min);
        ((t * n as f64) as u32).min(n - 1)
    };
    let mut keyed: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let cx = cell(x, min_x, max_x);
            let cy = cell(y, min_y, max_y);
            (hilbert_xy2d(r, cx, cy).expect("cell in range"), i)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Euclidean length of the tour visiting `points` in `order`.
pub fn tour_length(points: &[(f64, f64)], order: &[usize]) -> f64 {
    order
        .windows(2)
        .map(|w| {
            let (a, b) = (points[w[0]], points[w[1]]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .sum()
}
