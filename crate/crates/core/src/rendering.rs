//! Per-band reduction of a patch's cubic model to similarity-invariant
//! rendering features.
//!
//! The band surface is recentred on the patch gravity center, rotated into
//! the frame of its tangent plane (which cancels the constant and the
//! gradient), and the remaining quadric is diagonalized. The invariant
//! vector is the Hessian ratio plus the cubic residuals, all normalized by
//! the leading curvature.
//!
//! Rotating a polynomial graph does not keep it a polynomial graph, so the
//! tangent-frame model is the exact order-3 Taylor expansion of the rotated
//! surface, obtained by truncated series inversion of the coordinate map.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VisemeError};
use crate::segment::poly::{compose_trunc3, eval_coeffs, Coeffs, PolyModel, MONO_COUNT};

/// Default curvature floor: quadrics flatter than `1e-6 * depth` are planes.
pub fn flat_tolerance(depth: u32) -> f64 {
    1e-6 * depth as f64
}

/// Tangent-plane frame of one band at the patch gravity center. The matrix
/// maps offsets `(dz, dx, dy)` to tangent coordinates `(Z, X, Y)`; it is the
/// product of the rotation about the x axis (angle from `a_y`) followed by
/// the rotation about the once-rotated y axis, with signs chosen so the
/// surface gradient cancels exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub center: (f64, f64),
    pub z_center: f64,
    pub theta_xz: f64,
    pub theta_yz: f64,
    pub matrix: [[f64; 3]; 3],
}

/// Builds the tangent frame from the gradient `(a_x, a_y)` of the recentred
/// band surface. Cosines come from `cos = sqrt(1 / (1 + tan^2))` and sines
/// from `sin = tan * cos`, which preserves the tangent sign.
pub fn tangent_frame(a_x: f64, a_y: f64, center: (f64, f64), z_center: f64) -> TangentFrame {
    let cy = (1.0 / (1.0 + a_y * a_y)).sqrt();
    let sy = a_y * cy;
    // Slope along x as seen after the first rotation.
    let t2 = a_x * cy;
    let c2 = (1.0 / (1.0 + t2 * t2)).sqrt();
    let s2 = t2 * c2;
    TangentFrame {
        center,
        z_center,
        theta_xz: a_x.atan(),
        theta_yz: a_y.atan(),
        matrix: [
            [c2 * cy, -s2, -c2 * sy],
            [s2 * cy, c2, -s2 * sy],
            [sy, 0.0, cy],
        ],
    }
}

impl TangentFrame {
    /// Rebuilds the frame from the stored pose angles.
    pub fn from_angles(theta_xz: f64, theta_yz: f64, center: (f64, f64), z_center: f64) -> Self {
        tangent_frame(theta_xz.tan(), theta_yz.tan(), center, z_center)
    }

    pub fn transpose(&self) -> [[f64; 3]; 3] {
        let m = &self.matrix;
        [
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ]
    }
}

/// Re-expresses one band of a model around `center`; thin wrapper over the
/// polynomial shift so the descriptor pipeline reads naturally.
pub fn recentre_cubic(model: &PolyModel, center: (f64, f64)) -> PolyModel {
    model.recentre(center.0, center.1)
}

/// Exact order-3 Taylor transport of a graph surface through an orthonormal
/// frame. `surface` is `w(p, q)` with zero constant term; `frame` rows give
/// `(w', p', q')` in terms of `(w, p, q)`. Returns `w'` as a cubic in
/// `(p', q')`, or `None` when the rotated surface is no longer a graph.
pub fn transport_graph(surface: &Coeffs, frame: &[[f64; 3]; 3]) -> Option<Coeffs> {
    let mut u = [0.0; MONO_COUNT];
    u[1] = 1.0;
    let mut v = [0.0; MONO_COUNT];
    v[2] = 1.0;

    let lin = |r: &[f64; 3]| -> Coeffs {
        let mut out = [0.0; MONO_COUNT];
        for k in 0..MONO_COUNT {
            out[k] = r[0] * surface[k] + r[1] * u[k] + r[2] * v[k];
        }
        out
    };
    let wp = lin(&frame[0]);
    let pp = lin(&frame[1]);
    let qp = lin(&frame[2]);

    // Jacobian of (p', q') with respect to (p, q) at the origin.
    let j = [[pp[1], pp[2]], [qp[1], qp[2]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det.abs() < 1e-12 {
        return None;
    }
    let jinv = [
        [j[1][1] / det, -j[0][1] / det],
        [-j[1][0] / det, j[0][0] / det],
    ];

    // Nonlinear tails of the coordinate map.
    let mut n1 = pp;
    let mut n2 = qp;
    for k in 0..3 {
        n1[k] = 0.0;
        n2[k] = 0.0;
    }

    // Fixed-point series inversion: each pass settles one more degree.
    let mut inv_u = [0.0; MONO_COUNT];
    let mut inv_v = [0.0; MONO_COUNT];
    inv_u[1] = jinv[0][0];
    inv_u[2] = jinv[0][1];
    inv_v[1] = jinv[1][0];
    inv_v[2] = jinv[1][1];
    for _ in 0..3 {
        let r1 = compose_trunc3(&n1, &inv_u, &inv_v);
        let r2 = compose_trunc3(&n2, &inv_u, &inv_v);
        let mut next_u = [0.0; MONO_COUNT];
        let mut next_v = [0.0; MONO_COUNT];
        next_u[1] = jinv[0][0];
        next_u[2] = jinv[0][1];
        next_v[1] = jinv[1][0];
        next_v[2] = jinv[1][1];
        for k in 0..MONO_COUNT {
            next_u[k] -= jinv[0][0] * r1[k] + jinv[0][1] * r2[k];
            next_v[k] -= jinv[1][0] * r1[k] + jinv[1][1] * r2[k];
        }
        inv_u = next_u;
        inv_v = next_v;
    }

    Some(compose_trunc3(&wp, &inv_u, &inv_v))
}

/// One band of a recentred model expressed in its tangent frame: constant
/// and gradient are cancelled, quadratic and cubic terms transported.
pub fn reduce_to_tangent(band: &Coeffs, frame: &TangentFrame) -> Result<Coeffs> {
    let mut g = *band;
    g[0] = 0.0;
    let mut out = transport_graph(&g, &frame.matrix)
        .ok_or_else(|| VisemeError::InvalidArgument("surface too steep for its frame".into()))?;
    let scale = out.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    debug_assert!(
        out[0].abs() + out[1].abs() + out[2].abs() <= 1e-9 * scale,
        "gradient cancellation failed: {:?}",
        &out[..3]
    );
    out[0] = 0.0;
    out[1] = 0.0;
    out[2] = 0.0;
    Ok(out)
}

/// Diagonalized quadric of a tangent-frame band plus its cubic residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedQuadric {
    /// Leading curvature, `|lambda_u| >= |lambda_v|`.
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// In-plane rotation from the tangent X axis to the u axis, in [0, 2*pi).
    pub theta_xu: f64,
    pub cubic: [f64; 4],
    pub flat: bool,
}

/// Diagonalizes the quadratic form `a X^2 + b XY + c Y^2` (eigenvalues of
/// the form matrix, so the rotated cross term vanishes identically), rotates
/// the cubic terms along, and orders the axes by curvature magnitude. The
/// direction ambiguity of the u axis is removed by making the leading cubic
/// residual non-negative.
pub fn reduce_quadric(tangent: &Coeffs, flat_tol: f64) -> ReducedQuadric {
    let (a, b, c) = (tangent[3], tangent[4], tangent[5]);
    let half = 0.5 * (a + c);
    let root = (0.25 * (a - c) * (a - c) + 0.25 * b * b).sqrt();
    let (big, small) = (half + root, half - root);
    let (lambda_u, lambda_v) = if big.abs() >= small.abs() {
        (big, small)
    } else {
        (small, big)
    };

    if lambda_u.abs() < flat_tol {
        return ReducedQuadric {
            lambda_u: 0.0,
            lambda_v: 0.0,
            theta_xu: 0.0,
            cubic: [0.0; 4],
            flat: true,
        };
    }

    let mut theta = if b.abs() > 1e-12 * (a.abs() + c.abs()).max(1.0) {
        ((lambda_u - a) / (0.5 * b)).atan()
    } else if a.abs() >= c.abs() {
        0.0
    } else {
        std::f64::consts::FRAC_PI_2
    };

    let mut rotated = rotate_in_plane(tangent, theta);
    // u -> -u, v -> -v flips the sign of every cubic term; pick the
    // representative with a non-negative leading residual.
    let flip_tol = 1e-12 * rotated[6].abs().max(1.0);
    if rotated[6] < -flip_tol
        || (rotated[6].abs() <= flip_tol && rotated[9] < -1e-12 * rotated[9].abs().max(1.0))
    {
        theta += std::f64::consts::PI;
        for k in 6..10 {
            rotated[k] = -rotated[k];
        }
    }

    ReducedQuadric {
        lambda_u,
        lambda_v,
        theta_xu: theta.rem_euclid(2.0 * std::f64::consts::PI),
        cubic: [rotated[6], rotated[7], rotated[8], rotated[9]],
        flat: false,
    }
}

/// Substitutes `X = u cos - v sin`, `Y = u sin + v cos` (the u axis points
/// along `theta`).
pub fn rotate_in_plane(coeffs: &Coeffs, theta: f64) -> Coeffs {
    let (s, c) = theta.sin_cos();
    let mut fx = [0.0; MONO_COUNT];
    fx[1] = c;
    fx[2] = -s;
    let mut fy = [0.0; MONO_COUNT];
    fy[1] = s;
    fy[2] = c;
    compose_trunc3(coeffs, &fx, &fy)
}

/// Pose of one band's rendering, enough to replay the reduction backwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPose {
    pub z_center: f64,
    pub theta_xz: f64,
    pub theta_yz: f64,
    pub theta_xu: f64,
    pub lambda_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRendering {
    /// `(lambda_v/lambda_u, cubic residuals / lambda_u)`; zeros when flat.
    pub invariants: [f64; 5],
    pub pose: BandPose,
    pub flat: bool,
}

/// Per-band invariant vectors plus localization pose for a whole patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderingDescriptor {
    pub center: (f64, f64),
    pub bands: Vec<BandRendering>,
}

/// Full reduction of a patch model: recentre, frame, transport, diagonalize,
/// normalize by the leading curvature.
pub fn rendering_descriptor(
    model: &PolyModel,
    center: (f64, f64),
    depth: u32,
) -> Result<RenderingDescriptor> {
    let flat_tol = flat_tolerance(depth);
    let recentred = recentre_cubic(model, center);
    let bands = recentred
        .bands
        .iter()
        .map(|band| {
            let z_center = band[0];
            let frame = tangent_frame(band[1], band[2], center, z_center);
            let tangent = reduce_to_tangent(band, &frame)?;
            let quad = reduce_quadric(&tangent, flat_tol);
            let invariants = if quad.flat {
                [0.0; 5]
            } else {
                [
                    quad.lambda_v / quad.lambda_u,
                    quad.cubic[0] / quad.lambda_u,
                    quad.cubic[1] / quad.lambda_u,
                    quad.cubic[2] / quad.lambda_u,
                    quad.cubic[3] / quad.lambda_u,
                ]
            };
            Ok(BandRendering {
                invariants,
                pose: BandPose {
                    z_center,
                    theta_xz: frame.theta_xz,
                    theta_yz: frame.theta_yz,
                    theta_xu: quad.theta_xu,
                    lambda_u: quad.lambda_u,
                },
                flat: quad.flat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderingDescriptor { center, bands })
}

/// Inverse of the reduction chain: rebuilds the band surface around the
/// patch center as a cubic `dz(dx, dy)` from a pose and its normalized
/// vector. The value at `(x, y)` is `z_center + dz(x - cx, y - cy)`.
pub fn band_surface_from_pose(pose: &BandPose, invariants: &[f64; 5], flat: bool) -> Coeffs {
    let frame = TangentFrame::from_angles(pose.theta_xz, pose.theta_yz, (0.0, 0.0), pose.z_center);
    let mut tangent = [0.0; MONO_COUNT];
    if !flat && pose.lambda_u != 0.0 {
        // Undo the normalization, then the in-plane rotation.
        let mut reduced = [0.0; MONO_COUNT];
        reduced[3] = pose.lambda_u;
        reduced[5] = invariants[0] * pose.lambda_u;
        reduced[6] = invariants[1] * pose.lambda_u;
        reduced[7] = invariants[2] * pose.lambda_u;
        reduced[8] = invariants[3] * pose.lambda_u;
        reduced[9] = invariants[4] * pose.lambda_u;
        tangent = rotate_in_plane(&reduced, -pose.theta_xu);
    }
    let mut back = transport_graph(&tangent, &frame.transpose())
        .expect("tangent frames are invertible");
    // The transported constant is zero by construction; keep it exact.
    back[0] = 0.0;
    back
}

/// Evaluates the rebuilt band surface at an offset from the patch center.
pub fn eval_band_surface(pose: &BandPose, surface: &Coeffs, dx: f64, dy: f64) -> f64 {
    pose.z_center + eval_coeffs(surface, dx, dy)
}
