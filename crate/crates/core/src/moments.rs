//! Generalized moments of a shape domain and the derived
//! translation/rotation/homothety-invariant features.
//!
//! Raw moments are exact integer sums over cell-center coordinates. Central
//! moments come from the binomial shift identities evaluated in scaled
//! integer arithmetic, so translating a domain by whole pixels leaves them
//! bit-identical.

use serde::{Deserialize, Serialize};

/// Discrete moment sums up to order 3, `dm = 1` per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawMoments {
    pub m0: i64,
    pub mx: i64,
    pub my: i64,
    pub mx2: i64,
    pub mxy: i64,
    pub my2: i64,
    pub mx3: i64,
    pub mx2y: i64,
    pub mxy2: i64,
    pub my3: i64,
}

impl RawMoments {
    /// Componentwise sum; moments are integrals, so disjoint domains add.
    pub fn add(&self, other: &RawMoments) -> RawMoments {
        RawMoments {
            m0: self.m0 + other.m0,
            mx: self.mx + other.mx,
            my: self.my + other.my,
            mx2: self.mx2 + other.mx2,
            mxy: self.mxy + other.mxy,
            my2: self.my2 + other.my2,
            mx3: self.mx3 + other.mx3,
            mx2y: self.mx2y + other.mx2y,
            mxy2: self.mxy2 + other.mxy2,
            my3: self.my3 + other.my3,
        }
    }
}

/// Exact sums over the domain's cell centers.
pub fn raw_moments<I: IntoIterator<Item = (i64, i64)>>(domain: I) -> RawMoments {
    let mut m = RawMoments::default();
    for (x, y) in domain {
        m.m0 += 1;
        m.mx += x;
        m.my += y;
        m.mx2 += x * x;
        m.mxy += x * y;
        m.my2 += y * y;
        m.mx3 += x * x * x;
        m.mx2y += x * x * y;
        m.mxy2 += x * y * y;
        m.my3 += y * y * y;
    }
    m
}

/// Moments translated to the gravity center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralMoments {
    pub surface: i64,
    pub x_g: f64,
    pub y_g: f64,
    pub mx2: f64,
    pub mxy: f64,
    pub my2: f64,
    pub mx3: f64,
    pub mx2y: f64,
    pub mxy2: f64,
    pub my3: f64,
}

/// Binomial shift to the gravity center. The order-2 identities are scaled
/// by S and the order-3 ones by S^2 so every intermediate stays an integer;
/// the final division is the only rounding step.
pub fn center_moments(m: &RawMoments) -> CentralMoments {
    assert!(m.m0 > 0, "empty domain");
    let s = m.m0 as i128;
    let (mx, my) = (m.mx as i128, m.my as i128);

    // S * M(X^p Y^q) for order 2.
    let c20 = s * m.mx2 as i128 - mx * mx;
    let c11 = s * m.mxy as i128 - mx * my;
    let c02 = s * m.my2 as i128 - my * my;

    // S^2 * M(X^p Y^q) for order 3.
    let c30 = s * s * m.mx3 as i128 - 3 * s * mx * m.mx2 as i128 + 2 * mx * mx * mx;
    let c21 =
        s * s * m.mx2y as i128 - 2 * s * mx * m.mxy as i128 - s * my * m.mx2 as i128
            + 2 * mx * mx * my;
    let c12 =
        s * s * m.mxy2 as i128 - 2 * s * my * m.mxy as i128 - s * mx * m.my2 as i128
            + 2 * mx * my * my;
    let c03 = s * s * m.my3 as i128 - 3 * s * my * m.my2 as i128 + 2 * my * my * my;

    let sf = m.m0 as f64;
    CentralMoments {
        surface: m.m0,
        x_g: m.mx as f64 / sf,
        y_g: m.my as f64 / sf,
        mx2: c20 as f64 / sf,
        mxy: c11 as f64 / sf,
        my2: c02 as f64 / sf,
        mx3: c30 as f64 / (sf * sf),
        mx2y: c21 as f64 / (sf * sf),
        mxy2: c12 as f64 / (sf * sf),
        my3: c03 as f64 / (sf * sf),
    }
}

/// Moments rotated into the domain's own inertia frame, orientation fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalMoments {
    /// Major and minor inertia values, `mu1_sq >= mu2_sq >= 0`.
    pub mu1_sq: f64,
    pub mu2_sq: f64,
    /// Major-axis orientation in [0, 2*pi).
    pub theta: f64,
    pub mu1_cube: f64,
    pub mu1_sq_mu2: f64,
    pub mu1_mu2_sq: f64,
    pub mu2_cube: f64,
    /// Both inertia values coincide; the frame is any pair of axes.
    pub isotropic: bool,
}

/// Rotates the order-3 central moments by `theta` (symmetric 3-tensor
/// transport under u = X cos + Y sin, v = -X sin + Y cos).
fn rotate_third_order(c: &CentralMoments, theta: f64) -> [f64; 4] {
    let (s, co) = theta.sin_cos();
    let (s2, c2) = (s * s, co * co);
    let (s3, c3) = (s2 * s, c2 * co);
    let u3 = c3 * c.mx3 + 3.0 * s * c2 * c.mx2y + 3.0 * s2 * co * c.mxy2 + s3 * c.my3;
    let u2v = -c2 * s * c.mx3 + (c3 - 2.0 * co * s2) * c.mx2y + (2.0 * c2 * s - s3) * c.mxy2
        + s2 * co * c.my3;
    let uv2 = co * s2 * c.mx3 + (s3 - 2.0 * c2 * s) * c.mx2y + (c3 - 2.0 * co * s2) * c.mxy2
        + s * c2 * c.my3;
    let v3 = -s3 * c.mx3 + 3.0 * s2 * co * c.mx2y - 3.0 * s * c2 * c.mxy2 + c3 * c.my3;
    [u3, u2v, uv2, v3]
}

/// Inertia values, orientation and third-order asymmetries in the domain's
/// own frame. The direction ambiguity of the major axis is removed by making
/// the major asymmetry non-negative: a negative `M(u1^3)` flips the frame by
/// pi and negates all four third-order moments. Shapes whose major asymmetry
/// vanishes keep the canonical angle in [0, pi).
pub fn principal_moments(c: &CentralMoments) -> PrincipalMoments {
    let (l1, l2, theta0) = crate::segment::linear::cov_eigen(c.mx2, c.mxy, c.my2);
    let iso_tol = 1e-9 * (c.mx2 + c.my2).max(1.0);
    let isotropic = (l1 - l2).abs() <= iso_tol;

    let mut theta = theta0;
    let mut third = rotate_third_order(c, theta);
    let sym_tol = 1e-9 * (c.surface as f64) * (c.surface as f64);
    if third[0] < -sym_tol {
        theta += std::f64::consts::PI;
        for v in third.iter_mut() {
            *v = -*v;
        }
    } else if third[0] < 0.0 {
        // Within noise of a symmetric shape: clamp instead of flipping.
        third[0] = 0.0;
    }

    PrincipalMoments {
        mu1_sq: l1.max(0.0),
        mu2_sq: l2.max(0.0),
        theta,
        mu1_cube: third[0],
        mu1_sq_mu2: third[1],
        mu1_mu2_sq: third[2],
        mu2_cube: third[3],
        isotropic,
    }
}

/// Pose plus the similarity-invariant feature vector of a shape domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub x_g: f64,
    pub y_g: f64,
    /// Major-axis orientation in [0, 2*pi).
    pub theta: f64,
    /// Scale carried for synthesis: the major inertia value `M(u1^2)`.
    pub scale: f64,
    pub surface: i64,
    /// `M(u2^2) / M(u1^2)`, in [0, 1].
    pub eccentricity: f64,
    /// Dimensionless asymmetries; the first is non-negative by the
    /// orientation fix.
    pub asymmetries: [f64; 4],
    /// Inertia degenerate to a point or a line; the invariant vector is
    /// defined as all zeros.
    pub degenerate: bool,
    pub isotropic: bool,
}

impl DomainDescriptor {
    /// The invariant 5-vector `(eccentricity, asymmetries...)`.
    pub fn invariants(&self) -> [f64; 5] {
        [
            self.eccentricity,
            self.asymmetries[0],
            self.asymmetries[1],
            self.asymmetries[2],
            self.asymmetries[3],
        ]
    }

    pub fn theta_degrees(&self) -> f64 {
        self.theta.to_degrees().rem_euclid(360.0)
    }
}

/// Full pipeline: raw sums, centering, principal frame, normalization.
///
/// Eccentricity is the printed inertia ratio. The third-order moments are
/// made dimensionless with the uniform major-axis divisor
/// `M(u1^2)^(3/2) / sqrt(S)`, which keeps them stable under homothety.
pub fn domain_descriptor<I: IntoIterator<Item = (i64, i64)>>(domain: I) -> DomainDescriptor {
    descriptor_from_raw(&raw_moments(domain))
}

pub fn descriptor_from_raw(m: &RawMoments) -> DomainDescriptor {
    let c = center_moments(m);
    let p = principal_moments(&c);
    let degenerate = p.mu1_sq <= 1e-12;
    let (ecc, asym) = if degenerate {
        (0.0, [0.0; 4])
    } else {
        let divisor = p.mu1_sq.powf(1.5) / (c.surface as f64).sqrt();
        (
            p.mu2_sq / p.mu1_sq,
            [
                p.mu1_cube / divisor,
                p.mu1_sq_mu2 / divisor,
                p.mu1_mu2_sq / divisor,
                p.mu2_cube / divisor,
            ],
        )
    };
    DomainDescriptor {
        x_g: c.x_g,
        y_g: c.y_g,
        theta: p.theta,
        scale: p.mu1_sq,
        surface: c.surface,
        eccentricity: ecc,
        asymmetries: asym,
        degenerate,
        isotropic: p.isotropic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn block(x0: i64, y0: i64, w: i64, h: i64) -> Vec<(i64, i64)> {
        (y0..y0 + h)
            .flat_map(|y| (x0..x0 + w).map(move |x| (x, y)))
            .collect()
    }

    fn disc(cx: i64, cy: i64, r: i64) -> Vec<(i64, i64)> {
        (cy - r..=cy + r)
            .flat_map(|y| {
                (cx - r..=cx + r)
                    .filter(move |&x| (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                    .map(move |x| (x, y))
            })
            .collect()
    }

    /// Brute-force centered sums, the oracle for the shift identities.
    fn centered_oracle(domain: &[(i64, i64)]) -> CentralMoments {
        let s = domain.len() as f64;
        let x_g = domain.iter().map(|&(x, _)| x as f64).sum::<f64>() / s;
        let y_g = domain.iter().map(|&(_, y)| y as f64).sum::<f64>() / s;
        let mut sums = [0.0f64; 7];
        for &(x, y) in domain {
            let dx = x as f64 - x_g;
            let dy = y as f64 - y_g;
            sums[0] += dx * dx;
            sums[1] += dx * dy;
            sums[2] += dy * dy;
            sums[3] += dx * dx * dx;
            sums[4] += dx * dx * dy;
            sums[5] += dx * dy * dy;
            sums[6] += dy * dy * dy;
        }
        CentralMoments {
            surface: domain.len() as i64,
            x_g,
            y_g,
            mx2: sums[0],
            mxy: sums[1],
            my2: sums[2],
            mx3: sums[3],
            mx2y: sums[4],
            mxy2: sums[5],
            my3: sums[6],
        }
    }

    fn random_blob(rng: &mut ChaCha8Rng, spread: i64) -> Vec<(i64, i64)> {
        let mut pts = std::collections::BTreeSet::new();
        let cx = rng.gen_range(0..spread);
        let cy = rng.gen_range(0..spread);
        for _ in 0..rng.gen_range(20..120) {
            let x = cx + rng.gen_range(-10..=10);
            let y = cy + rng.gen_range(-10..=10);
            pts.insert((x.max(0), y.max(0)));
        }
        pts.into_iter().collect()
    }

    #[test]
    fn block_raw_sums() {
        let m = raw_moments(block(0, 0, 4, 4));
        assert_eq!((m.m0, m.mx, m.my), (16, 24, 24));
    }

    #[test]
    fn single_pixel_sums() {
        let m = raw_moments(vec![(3, 5)]);
        assert_eq!(m.m0, 1);
        assert_eq!((m.mx, m.my, m.mx2, m.mxy), (3, 5, 9, 15));
    }

    #[test]
    fn raw_sums_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let blob = random_blob(&mut rng, 40);
            let m = raw_moments(blob.clone());
            let mut o = RawMoments::default();
            for &(x, y) in &blob {
                o.m0 += 1;
                o.mx += x;
                o.my += y;
                o.mx2 += x * x;
                o.mxy += x * y;
                o.my2 += y * y;
                o.mx3 += x.pow(3);
                o.mx2y += x * x * y;
                o.mxy2 += x * y * y;
                o.my3 += y.pow(3);
            }
            assert_eq!(m, o);
        }
    }

    #[test]
    fn block_central_moments() {
        let c = center_moments(&raw_moments(block(0, 0, 4, 4)));
        assert_eq!((c.x_g, c.y_g), (1.5, 1.5));
        assert_eq!((c.mx2, c.my2, c.mxy), (20.0, 20.0, 0.0));
    }

    #[test]
    fn symmetric_domain_kills_third_order() {
        let c = center_moments(&raw_moments(block(5, 9, 6, 3)));
        assert_eq!(c.mx3, 0.0);
        assert_eq!(c.mx2y, 0.0);
        assert_eq!(c.mxy2, 0.0);
        assert_eq!(c.my3, 0.0);
    }

    #[test]
    fn shift_identities_match_centered_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let blob = random_blob(&mut rng, 60);
            let c = center_moments(&raw_moments(blob.clone()));
            let o = centered_oracle(&blob);
            let tol = |v: f64| 1e-9 * v.abs().max(1.0);
            assert!((c.mx2 - o.mx2).abs() <= tol(o.mx2));
            assert!((c.mxy - o.mxy).abs() <= tol(o.mxy));
            assert!((c.my2 - o.my2).abs() <= tol(o.my2));
            assert!((c.mx3 - o.mx3).abs() <= tol(o.mx3));
            assert!((c.mx2y - o.mx2y).abs() <= tol(o.mx2y));
            assert!((c.mxy2 - o.mxy2).abs() <= tol(o.mxy2));
            assert!((c.my3 - o.my3).abs() <= tol(o.my3));
        }
    }

    #[test]
    fn disc_is_isotropic_with_tiny_asymmetries() {
        let d = domain_descriptor(disc(30, 30, 20));
        assert!(d.isotropic || (d.eccentricity > 0.98));
        for a in d.asymmetries {
            assert!(a.abs() <= 1e-2, "asymmetry {a}");
        }
        assert!(d.asymmetries[0] >= 0.0);
    }

    #[test]
    fn rectangle_orientation_and_eccentricity() {
        // 8x2 axis-aligned block: the discrete summation gives
        // (h^2 - 1) / (w^2 - 1); the continuous ratio (h/w)^2 is its limit.
        let d = domain_descriptor(block(0, 0, 8, 2));
        assert!(d.theta.rem_euclid(std::f64::consts::PI) < 1e-9);
        assert!((d.eccentricity - 3.0 / 63.0).abs() < 1e-9, "ecc {}", d.eccentricity);
        // At 10x the size the continuous value is reached within 10%.
        let d10 = domain_descriptor(block(0, 0, 80, 20));
        let expect = 1.0 / 16.0;
        assert!((d10.eccentricity - expect).abs() <= 0.10 * expect);
    }

    #[test]
    fn quarter_turn_rotates_pose_not_invariants() {
        // Right triangle rotated by 90 degrees: identical invariants, theta
        // shifted by a quarter turn (mod 2*pi).
        let tri: Vec<(i64, i64)> = (0..20i64)
            .flat_map(|y| (0..=y).map(move |x| (x, y)))
            .collect();
        let rot: Vec<(i64, i64)> = tri.iter().map(|&(x, y)| (-y, x)).collect();
        let a = domain_descriptor(tri);
        let b = domain_descriptor(rot);
        for (u, v) in a.invariants().iter().zip(b.invariants().iter()) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
        let dt = (b.theta - a.theta).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(
            (dt - std::f64::consts::FRAC_PI_2).abs() < 1e-9,
            "theta shift {dt}"
        );
    }

    #[test]
    fn translation_leaves_invariants_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let blob = random_blob(&mut rng, 50);
            let moved: Vec<(i64, i64)> = blob.iter().map(|&(x, y)| (x + 17, y - 4)).collect();
            let a = domain_descriptor(blob);
            let b = domain_descriptor(moved);
            assert_eq!(a.invariants(), b.invariants());
            assert_eq!(a.theta, b.theta);
            assert!((b.x_g - a.x_g - 17.0).abs() < 1e-9);
            assert!((b.y_g - a.y_g + 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn square_has_unit_eccentricity_and_no_asymmetry() {
        let d = domain_descriptor(block(2, 3, 9, 9));
        assert!((d.eccentricity - 1.0).abs() < 1e-6);
        for a in d.asymmetries {
            assert!(a.abs() < 1e-6);
        }
        assert!(d.isotropic);
    }

    #[test]
    fn pixel_replication_keeps_invariants_close() {
        // Asymmetric blob scaled 2x by pixel replication.
        let blob: Vec<(i64, i64)> = (0..24i64)
            .flat_map(|y| (0..(4 + y * y / 24)).map(move |x| (x, y)))
            .collect();
        let scaled: Vec<(i64, i64)> = blob
            .iter()
            .flat_map(|&(x, y)| {
                [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)]
            })
            .collect();
        let a = domain_descriptor(blob);
        let b = domain_descriptor(scaled);
        for (u, v) in a.invariants().iter().zip(b.invariants().iter()) {
            let tol = 0.03 * u.abs().max(v.abs()).max(0.05);
            assert!((u - v).abs() <= tol, "{u} vs {v}");
        }
    }

    #[test]
    fn orientation_fix_makes_major_asymmetry_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let blob = random_blob(&mut rng, 80);
            let p = principal_moments(&center_moments(&raw_moments(blob)));
            assert!(p.mu1_cube >= 0.0);
            assert!(p.mu1_sq >= p.mu2_sq);
            assert!((0.0..2.0 * std::f64::consts::PI).contains(&p.theta));
        }
    }

    #[test]
    fn trace_preserved_under_rotation_to_principal_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let blob = random_blob(&mut rng, 80);
            let c = center_moments(&raw_moments(blob));
            let p = principal_moments(&c);
            let tr = c.mx2 + c.my2;
            assert!((p.mu1_sq + p.mu2_sq - tr).abs() <= 1e-9 * tr.max(1.0));
        }
    }

    #[test]
    fn one_pixel_domain_is_degenerate() {
        let d = domain_descriptor(vec![(7, 7)]);
        assert!(d.degenerate);
        assert_eq!(d.invariants(), [0.0; 5]);
    }

    #[test]
    fn moment_additivity_over_disjoint_blocks() {
        let a = raw_moments(block(0, 0, 4, 4));
        let b = raw_moments(block(10, 10, 4, 4));
        let union: Vec<(i64, i64)> = block(0, 0, 4, 4)
            .into_iter()
            .chain(block(10, 10, 4, 4))
            .collect();
        assert_eq!(a.add(&b), raw_moments(union));
        assert_eq!(a.add(&b).m0, 32);
        assert_eq!(a.add(&b).mx, a.mx + b.mx);
    }
}
