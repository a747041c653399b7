//! Bivariate polynomial patch models up to total degree 3.
//!
//! Coefficients are stored on the fixed monomial basis
//! `[1, x, y, x², xy, y², x³, x²y, xy², y³]`, one row per spectral band.
//! Everything downstream (blending, recentring, tangent reduction,
//! synthesis) works on this basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VisemeError};
use crate::image::SampleSet;

/// Number of monomials of total degree <= 3.
pub const MONO_COUNT: usize = 10;

/// Total degree of each basis monomial.
pub const MONO_DEGREE: [u8; MONO_COUNT] = [0, 1, 1, 2, 2, 2, 3, 3, 3, 3];

/// (x-power, y-power) of each basis monomial.
pub const MONO_POWERS: [(u8, u8); MONO_COUNT] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

/// Monomials kept for a fit of the given order.
pub fn monomials_for_order(order: u8) -> usize {
    match order {
        0 | 1 => 3,
        2 => 6,
        _ => 10,
    }
}

/// One band's coefficient row.
pub type Coeffs = [f64; MONO_COUNT];

#[inline]
pub fn eval_coeffs(c: &Coeffs, x: f64, y: f64) -> f64 {
    let (x2, y2, xy) = (x * x, y * y, x * y);
    c[0] + c[1] * x
        + c[2] * y
        + c[3] * x2
        + c[4] * xy
        + c[5] * y2
        + c[6] * x2 * x
        + c[7] * x2 * y
        + c[8] * x * y2
        + c[9] * y2 * y
}

/// Product of two coefficient rows, truncated above total degree 3.
pub fn mul_trunc3(a: &Coeffs, b: &Coeffs) -> Coeffs {
    let mut out = [0.0; MONO_COUNT];
    for i in 0..MONO_COUNT {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..MONO_COUNT {
            if b[j] == 0.0 {
                continue;
            }
            let px = MONO_POWERS[i].0 + MONO_POWERS[j].0;
            let py = MONO_POWERS[i].1 + MONO_POWERS[j].1;
            if px + py <= 3 {
                out[mono_index(px, py)] += a[i] * b[j];
            }
        }
    }
    out
}

#[inline]
pub fn mono_index(px: u8, py: u8) -> usize {
    MONO_POWERS
        .iter()
        .position(|&(a, b)| a == px && b == py)
        .expect("degree <= 3")
}

/// Substitutes `x <- fx(u, v)`, `y <- fy(u, v)` into `c`, truncating above
/// degree 3. Exact when the substitution is affine.
pub fn compose_trunc3(c: &Coeffs, fx: &Coeffs, fy: &Coeffs) -> Coeffs {
    // Powers of fx and fy up to the cube, each truncated at degree 3.
    let one = {
        let mut o = [0.0; MONO_COUNT];
        o[0] = 1.0;
        o
    };
    let mut xp = [one, *fx, [0.0; MONO_COUNT], [0.0; MONO_COUNT]];
    xp[2] = mul_trunc3(&xp[1], fx);
    xp[3] = mul_trunc3(&xp[2], fx);
    let mut yp = [one, *fy, [0.0; MONO_COUNT], [0.0; MONO_COUNT]];
    yp[2] = mul_trunc3(&yp[1], fy);
    yp[3] = mul_trunc3(&yp[2], fy);

    let mut out = [0.0; MONO_COUNT];
    for i in 0..MONO_COUNT {
        if c[i] == 0.0 {
            continue;
        }
        let (px, py) = MONO_POWERS[i];
        let term = mul_trunc3(&xp[px as usize], &yp[py as usize]);
        for k in 0..MONO_COUNT {
            out[k] += c[i] * term[k];
        }
    }
    out
}

/// Polynomial patch model: one degree-3 coefficient row per band.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolyModel {
    pub order: u8,
    pub bands: Vec<Coeffs>,
    /// Set when a rank-deficient fit fell back to a lower order.
    pub degenerate: bool,
}

impl PolyModel {
    pub fn constant(values: &[f64]) -> Self {
        let bands = values
            .iter()
            .map(|&v| {
                let mut c = [0.0; MONO_COUNT];
                c[0] = v;
                c
            })
            .collect();
        Self {
            order: 1,
            bands,
            degenerate: true,
        }
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    #[inline]
    pub fn eval(&self, band: usize, x: f64, y: f64) -> f64 {
        eval_coeffs(&self.bands[band], x, y)
    }

    /// Re-expresses the same polynomial in variables centred at `(cx, cy)`:
    /// `new(X, Y) = old(X + cx, Y + cy)`.
    pub fn recentre(&self, cx: f64, cy: f64) -> Self {
        let mut fx = [0.0; MONO_COUNT];
        fx[0] = cx;
        fx[1] = 1.0;
        let mut fy = [0.0; MONO_COUNT];
        fy[0] = cy;
        fy[2] = 1.0;
        let bands = self
            .bands
            .iter()
            .map(|c| compose_trunc3(c, &fx, &fy))
            .collect();
        Self {
            order: self.order,
            bands,
            degenerate: self.degenerate,
        }
    }

    /// Largest absolute residual over all points and bands (the L-infinity
    /// fitting error), kept as a real.
    pub fn max_error(&self, set: &SampleSet) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..set.card() {
            let x = set.x(i) as f64;
            let y = set.y(i) as f64;
            for band in 0..self.bands.len() {
                let e = (set.value(band, i) - self.eval(band, x, y)).abs();
                worst = worst.max(e);
            }
        }
        worst
    }

    /// Per-point residual magnitudes, maximised over bands.
    pub fn point_errors(&self, set: &SampleSet) -> Vec<f64> {
        (0..set.card())
            .map(|i| {
                let x = set.x(i) as f64;
                let y = set.y(i) as f64;
                (0..self.bands.len())
                    .map(|band| (set.value(band, i) - self.eval(band, x, y)).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Mean squared residual pooled over points and bands.
    pub fn mean_squared_error(&self, set: &SampleSet) -> f64 {
        let mut acc = 0.0;
        for i in 0..set.card() {
            let x = set.x(i) as f64;
            let y = set.y(i) as f64;
            for band in 0..self.bands.len() {
                let e = set.value(band, i) - self.eval(band, x, y);
                acc += e * e;
            }
        }
        acc / (set.card() * self.bands.len()) as f64
    }
}

/// Blends two sibling models into the next-order model, weighting each one
/// affinely along the axis joining the sibling gravity centers: a sibling's
/// model has weight 1 at its own center and 0 at the other's. Coefficients
/// above total degree 3 are truncated (none arise for child order <= 2).
pub fn barycentric_combine(
    minus: &PolyModel,
    plus: &PolyModel,
    center_minus: (f64, f64),
    center_plus: (f64, f64),
) -> Result<PolyModel> {
    if minus.band_count() != plus.band_count() {
        return Err(VisemeError::DimensionMismatch {
            expected: minus.band_count(),
            got: plus.band_count(),
        });
    }
    let dx = center_plus.0 - center_minus.0;
    let dy = center_plus.1 - center_minus.1;
    let norm2 = dx * dx + dy * dy;
    if norm2 == 0.0 {
        return Err(VisemeError::CoincidentCenters);
    }
    // t(x, y) rises from 0 at the minus center to 1 at the plus center.
    let mut t = [0.0; MONO_COUNT];
    t[0] = -(center_minus.0 * dx + center_minus.1 * dy) / norm2;
    t[1] = dx / norm2;
    t[2] = dy / norm2;

    // minus + t * (plus - minus): reproduces a shared form coefficient-wise.
    let bands = minus
        .bands
        .iter()
        .zip(&plus.bands)
        .map(|(m, p)| {
            let mut diff = [0.0; MONO_COUNT];
            for k in 0..MONO_COUNT {
                diff[k] = p[k] - m[k];
            }
            let step = mul_trunc3(&t, &diff);
            let mut out = *m;
            for k in 0..MONO_COUNT {
                out[k] += step[k];
            }
            out
        })
        .collect();
    Ok(PolyModel {
        order: (minus.order.max(plus.order) + 1).min(3),
        bands,
        degenerate: false,
    })
}

/// Least-squares polynomial fit of the given total degree (2 or 3); falls
/// back to the highest order whose design matrix has full rank.
pub fn fit_poly_lsq(set: &SampleSet, order: u8) -> Result<PolyModel> {
    if !(2..=3).contains(&order) {
        return Err(VisemeError::InvalidArgument(format!(
            "polynomial fit supports orders 2 and 3, got {order}"
        )));
    }
    let mut attempt = order;
    loop {
        match try_fit(set, attempt) {
            Some(mut model) => {
                model.degenerate = attempt != order;
                return Ok(model);
            }
            None if attempt > 2 => attempt -= 1,
            None => {
                // Drop to the linear path, which has its own constant fallback.
                let (linear, _) = super::linear::fit_linear_lsq(set);
                let mut model = linear.to_poly();
                model.degenerate = true;
                return Ok(model);
            }
        }
    }
}

fn try_fit(set: &SampleSet, order: u8) -> Option<PolyModel> {
    let k = monomials_for_order(order);
    let n = set.card();
    if n < k {
        return None;
    }
    // Centre coordinates on the gravity center to keep the normal equations
    // well conditioned, then shift the solution back.
    let inv = 1.0 / n as f64;
    let cx = (0..n).map(|i| set.x(i) as f64).sum::<f64>() * inv;
    let cy = (0..n).map(|i| set.y(i) as f64).sum::<f64>() * inv;

    let mut design = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        let x = set.x(i) as f64 - cx;
        let y = set.y(i) as f64 - cy;
        for (j, &(px, py)) in MONO_POWERS.iter().take(k).enumerate() {
            design[(i, j)] = x.powi(px as i32) * y.powi(py as i32);
        }
    }
    let svd = design.svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 || svd.singular_values.min() <= 1e-9 * sigma_max {
        return None;
    }
    let bands = (0..set.bands())
        .map(|band| {
            let rhs = DVector::from_iterator(n, (0..n).map(|i| set.value(band, i)));
            let sol = svd.solve(&rhs, 0.0).expect("full-rank system");
            let mut c = [0.0; MONO_COUNT];
            for j in 0..k {
                c[j] = sol[j];
            }
            c
        })
        .collect();
    let centred = PolyModel {
        order,
        bands,
        degenerate: false,
    };
    Some(centred.recentre(-cx, -cy))
}
