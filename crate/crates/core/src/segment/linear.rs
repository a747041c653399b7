//! Least-squares plane fitting through the planar covariance, plus the 2x2
//! eigendecomposition used both here and by the split fallback.

use crate::image::SampleSet;

use super::poly::{Coeffs, PolyModel, MONO_COUNT};

/// Per-band plane `z = a1 + ax*x + ay*y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub bands: Vec<[f64; 3]>,
    pub degenerate: bool,
}

impl LinearModel {
    pub fn to_poly(&self) -> PolyModel {
        let bands = self
            .bands
            .iter()
            .map(|&[a1, ax, ay]| {
                let mut c: Coeffs = [0.0; MONO_COUNT];
                c[0] = a1;
                c[1] = ax;
                c[2] = ay;
                c
            })
            .collect();
        PolyModel {
            order: 1,
            bands,
            degenerate: self.degenerate,
        }
    }
}

/// First- and second-order statistics of a sample set: gravity center, band
/// means, planar covariance and its eigen structure, and the per-band
/// cross-covariance with the plane.
#[derive(Debug, Clone)]
pub struct CovStats {
    pub center: (f64, f64),
    pub band_means: Vec<f64>,
    pub r_xx: f64,
    pub r_xy: f64,
    pub r_yy: f64,
    /// Per band: (cov(z, x), cov(z, y)).
    pub cross: Vec<(f64, f64)>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
}

/// Eigenvalues and major-axis angle of the symmetric 2x2 covariance
/// [[r_xx, r_xy], [r_xy, r_yy]]. The angle is canonical in [0, pi); with a
/// zero cross term it is 0 when r_xx >= r_yy and pi/2 otherwise.
pub fn cov_eigen(r_xx: f64, r_xy: f64, r_yy: f64) -> (f64, f64, f64) {
    let root = ((r_xx - r_yy) * (r_xx - r_yy) + 4.0 * r_xy * r_xy).sqrt();
    let lambda1 = 0.5 * (r_xx + r_yy + root);
    let lambda2 = 0.5 * (r_xx + r_yy - root);
    let theta = if r_xy != 0.0 {
        let t = ((lambda1 - r_xx) / r_xy).atan();
        if t < 0.0 {
            t + std::f64::consts::PI
        } else {
            t
        }
    } else if r_xx >= r_yy {
        0.0
    } else {
        std::f64::consts::FRAC_PI_2
    };
    (lambda1, lambda2, theta)
}

/// Sets below this size cannot support a stable plane fit and take the
/// constant fallback.
pub const MIN_PLANE_FIT: usize = 6;

/// Plane fit per band via the covariance route:
/// `z_hat = R_zx * R_xx^-1 * (p - center) + mean`. Collinear or tiny sets
/// fall back to the constant model flagged degenerate.
pub fn fit_linear_lsq(set: &SampleSet) -> (LinearModel, CovStats) {
    let n = set.card() as f64;
    let inv = 1.0 / n;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..set.card() {
        sx += set.x(i) as f64;
        sy += set.y(i) as f64;
    }
    let cx = sx * inv;
    let cy = sy * inv;

    let band_means: Vec<f64> = (0..set.bands())
        .map(|b| (0..set.card()).map(|i| set.value(b, i)).sum::<f64>() * inv)
        .collect();

    let (mut r_xx, mut r_xy, mut r_yy) = (0.0, 0.0, 0.0);
    let mut cross = vec![(0.0, 0.0); set.bands()];
    for i in 0..set.card() {
        let dx = set.x(i) as f64 - cx;
        let dy = set.y(i) as f64 - cy;
        r_xx += dx * dx;
        r_xy += dx * dy;
        r_yy += dy * dy;
        for (b, c) in cross.iter_mut().enumerate() {
            let dz = set.value(b, i) - band_means[b];
            c.0 += dz * dx;
            c.1 += dz * dy;
        }
    }
    r_xx *= inv;
    r_xy *= inv;
    r_yy *= inv;
    for c in cross.iter_mut() {
        c.0 *= inv;
        c.1 *= inv;
    }

    let (lambda1, lambda2, theta) = cov_eigen(r_xx, r_xy, r_yy);
    let stats = CovStats {
        center: (cx, cy),
        band_means: band_means.clone(),
        r_xx,
        r_xy,
        r_yy,
        cross: cross.clone(),
        lambda1,
        lambda2,
        theta,
    };

    let det = r_xx * r_yy - r_xy * r_xy;
    let scale = r_xx.max(r_yy);
    let singular = set.card() < MIN_PLANE_FIT || scale <= 0.0 || det <= 1e-12 * scale * scale;
    let model = if singular {
        LinearModel {
            bands: band_means.iter().map(|&m| [m, 0.0, 0.0]).collect(),
            degenerate: true,
        }
    } else {
        let bands = cross
            .iter()
            .zip(&band_means)
            .map(|(&(czx, czy), &mean)| {
                // Solve [r_xx r_xy; r_xy r_yy] * [ax; ay] = [czx; czy].
                let ax = (czx * r_yy - czy * r_xy) / det;
                let ay = (czy * r_xx - czx * r_xy) / det;
                [mean - ax * cx - ay * cy, ax, ay]
            })
            .collect();
        LinearModel {
            bands,
            degenerate: false,
        }
    };
    (model, stats)
}
