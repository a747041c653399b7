//! Bottom-up aggregation of raw attributes along the decomposition tree:
//! nested compound shapes with domain and rendering descriptors.
//!
//! Raw moments are integrals, so a parent's moments are the componentwise
//! sum of its children's; centering, normalization and scaling happen per
//! node only after summation. Rendering models climb the tree through the
//! barycentric blend with no order guard, truncated at total degree 3.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VisemeError};
use crate::moments::{descriptor_from_raw, raw_moments, DomainDescriptor, RawMoments};
use crate::rendering::{rendering_descriptor, RenderingDescriptor};
use crate::segment::poly::{barycentric_combine, PolyModel};
use crate::segment::DecompTree;

/// One node of the compound-shape hierarchy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompoundShape {
    pub node_id: usize,
    /// Distance from the root along the tree path.
    pub depth: usize,
    /// Leaf node ids whose pixels compose this shape.
    pub member_leaves: Vec<usize>,
    pub moments: RawMoments,
    pub domain: DomainDescriptor,
    /// Blend of the subtree models truncated at order 3.
    pub model: PolyModel,
    pub rendering: RenderingDescriptor,
    /// Set when sibling centers coincided and the larger child's model was
    /// copied instead of blended.
    pub blend_degenerate: bool,
    pub label: Option<u32>,
}

/// Per-node compound shapes for the whole tree, indexed by node id.
pub fn aggregate(tree: &DecompTree) -> Result<Vec<CompoundShape>> {
    let n = tree.nodes.len();
    let mut depths = vec![0usize; n];
    for node in &tree.nodes {
        if let Some((l, r)) = node.children {
            depths[l] = depths[node.id] + 1;
            depths[r] = depths[node.id] + 1;
        }
    }

    let mut shapes: Vec<Option<CompoundShape>> = (0..n).map(|_| None).collect();
    // Preorder ids: children always follow their parent, so a reverse sweep
    // sees both children before the parent.
    for id in (0..n).rev() {
        let node = &tree.nodes[id];
        let (moments, member_leaves, model, blend_degenerate) = match node.children {
            None => {
                let pixels = node.pixels.as_ref().ok_or_else(|| {
                    VisemeError::Empty(format!("leaf {id} carries no pixels"))
                })?;
                let w = tree.width as i64;
                let m = raw_moments(
                    pixels
                        .iter()
                        .map(|&p| (p as i64 % w, p as i64 / w)),
                );
                (m, vec![id], node.model.clone(), false)
            }
            Some((l, r)) => {
                let left = shapes[l].as_ref().expect("child aggregated");
                let right = shapes[r].as_ref().expect("child aggregated");
                let moments = left.moments.add(&right.moments);
                let mut members = left.member_leaves.clone();
                members.extend_from_slice(&right.member_leaves);
                let (lc, rc) = (&tree.nodes[l], &tree.nodes[r]);
                let (model, degen) = match barycentric_combine(
                    &left.model,
                    &right.model,
                    lc.center,
                    rc.center,
                ) {
                    Ok(blend) => (blend, false),
                    Err(VisemeError::CoincidentCenters) => {
                        let bigger = if lc.card >= rc.card { left } else { right };
                        (bigger.model.clone(), true)
                    }
                    Err(e) => return Err(e),
                };
                (moments, members, model, degen)
            }
        };
        let domain = descriptor_from_raw(&moments);
        let rendering = rendering_descriptor(&model, node.center, tree.depth)?;
        shapes[id] = Some(CompoundShape {
            node_id: id,
            depth: depths[id],
            member_leaves,
            moments,
            domain,
            model,
            rendering,
            blend_degenerate,
            label: None,
        });
    }
    Ok(shapes.into_iter().map(|s| s.expect("all nodes visited")).collect())
}

/// Invariant domain vectors along the path from a leaf up to the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub leaf_id: usize,
    /// Leaf first, root last; length is path depth + 1.
    pub vectors: Vec<[f64; 5]>,
    pub label: Option<u32>,
}

pub fn feature_series(
    tree: &DecompTree,
    shapes: &[CompoundShape],
    leaf_id: usize,
) -> Result<FeatureSeries> {
    let leaf = tree
        .nodes
        .get(leaf_id)
        .filter(|n| n.is_leaf())
        .ok_or_else(|| VisemeError::InvalidArgument(format!("{leaf_id} is not a leaf id")))?;
    let parents = tree.parents();
    let mut vectors = Vec::new();
    let mut id = leaf.id;
    loop {
        vectors.push(shapes[id].domain.invariants());
        if id == 0 {
            break;
        }
        id = parents[id];
    }
    Ok(FeatureSeries {
        leaf_id,
        vectors,
        label: shapes[leaf_id].label,
    })
}

/// Flat record in attribute-table column order, for the describe/group
/// exports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompoundRecord {
    pub object: usize,
    pub center_abs: f64,
    pub center_ord: f64,
    /// Degrees in [0, 360).
    pub angle: f64,
    pub scale: f64,
    pub surface: i64,
    pub eccentricity: f64,
    pub asymmetries: [f64; 4],
    pub depth: usize,
    pub members: usize,
    pub rendering: Vec<[f64; 5]>,
    pub rendering_poses: Vec<crate::rendering::BandPose>,
    pub label: Option<u32>,
}

impl CompoundRecord {
    pub fn from_shape(s: &CompoundShape) -> Self {
        Self {
            object: s.node_id,
            center_abs: s.domain.x_g,
            center_ord: s.domain.y_g,
            angle: s.domain.theta_degrees(),
            scale: s.domain.scale,
            surface: s.domain.surface,
            eccentricity: s.domain.eccentricity,
            asymmetries: s.domain.asymmetries,
            depth: s.depth,
            members: s.member_leaves.len(),
            rendering: s.rendering.bands.iter().map(|b| b.invariants).collect(),
            rendering_poses: s.rendering.bands.iter().map(|b| b.pose).collect(),
            label: s.label,
        }
    }
}

/// Majority vote over labeled series: the label gathering the most
/// recognized vectors wins. Ties resolve to the smaller label id.
pub fn majority_label<I: IntoIterator<Item = u32>>(votes: I) -> Option<u32> {
    let mut tally: std::collections::BTreeMap<u32, usize> = Default::default();
    for v in votes {
        *tally.entry(v).or_insert(0) += 1;
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(label, _)| label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::MultiImage;
    use crate::moments::domain_descriptor;
    use crate::segment::{decompose, DecomposeParams};

    fn two_region_image() -> MultiImage {
        let plane = (0..32u32)
            .flat_map(|_y| (0..32u32).map(move |x| if x < 16 { 30u8 } else { 190u8 }))
            .collect();
        MultiImage::new(32, 32, 256, vec![plane]).unwrap()
    }

    #[test]
    fn parent_moments_are_child_sums() {
        let img = two_region_image();
        let tree = decompose(&img, DecomposeParams::default()).unwrap();
        let shapes = aggregate(&tree).unwrap();
        for node in &tree.nodes {
            if let Some((l, r)) = node.children {
                let sum = shapes[l].moments.add(&shapes[r].moments);
                assert_eq!(shapes[node.id].moments, sum);
            }
        }
    }

    #[test]
    fn compound_descriptor_equals_direct_union() {
        let img = two_region_image();
        let tree = decompose(&img, DecomposeParams::default()).unwrap();
        let shapes = aggregate(&tree).unwrap();
        let w = tree.width as i64;
        for shape in &shapes {
            // Union of member-leaf pixels, through the one-shot pipeline.
            let pixels: Vec<(i64, i64)> = shape
                .member_leaves
                .iter()
                .flat_map(|&leaf| {
                    tree.nodes[leaf]
                        .pixels
                        .as_ref()
                        .unwrap()
                        .iter()
                        .map(move |&p| (p as i64 % w, p as i64 / w))
                })
                .collect();
            let direct = domain_descriptor(pixels);
            assert_eq!(shape.domain.invariants(), direct.invariants());
            assert_eq!(shape.domain.theta, direct.theta);
            assert_eq!(shape.domain.surface, direct.surface);
        }
    }

    #[test]
    fn root_compound_covers_the_full_rectangle() {
        let img = two_region_image();
        let tree = decompose(&img, DecomposeParams::default()).unwrap();
        let shapes = aggregate(&tree).unwrap();
        let rect: Vec<(i64, i64)> = (0..32i64)
            .flat_map(|y| (0..32i64).map(move |x| (x, y)))
            .collect();
        let direct = domain_descriptor(rect);
        assert_eq!(shapes[0].domain.surface, 32 * 32);
        assert_eq!(shapes[0].domain.invariants(), direct.invariants());
    }

    #[test]
    fn identical_sibling_models_blend_to_themselves() {
        let mut c = [0.0; crate::segment::poly::MONO_COUNT];
        c[0] = 2.0;
        c[1] = 0.5;
        let model = PolyModel {
            order: 1,
            bands: vec![c],
            degenerate: false,
        };
        let blend = barycentric_combine(&model, &model, (1.0, 1.0), (9.0, 4.0)).unwrap();
        assert_eq!(blend.bands, model.bands);
    }

    #[test]
    fn cubic_siblings_truncate_above_order_three() {
        // Independent route: expand the weight times the difference with a
        // full-degree multiplier, drop monomials above total degree 3.
        use crate::segment::poly::{MONO_COUNT, MONO_POWERS};
        let mut f = [0.0; MONO_COUNT];
        let mut g = [0.0; MONO_COUNT];
        for k in 0..MONO_COUNT {
            f[k] = (k as f64 * 0.37).sin();
            g[k] = (k as f64 * 0.73).cos();
        }
        let (cm, cp) = ((2.0, 3.0), (8.0, 5.0));
        let blend = barycentric_combine(
            &PolyModel {
                order: 3,
                bands: vec![f],
                degenerate: false,
            },
            &PolyModel {
                order: 3,
                bands: vec![g],
                degenerate: false,
            },
            cm,
            cp,
        )
        .unwrap();

        let (dx, dy) = (cp.0 - cm.0, cp.1 - cm.1);
        let n2 = dx * dx + dy * dy;
        let t = [-(cm.0 * dx + cm.1 * dy) / n2, dx / n2, dy / n2];
        // Full product on (px, py) power pairs up to degree 4, then truncate.
        let mut expect = f;
        for (i, &tv) in t.iter().enumerate() {
            let (tpx, tpy) = [(0u8, 0u8), (1, 0), (0, 1)][i];
            for j in 0..MONO_COUNT {
                let d = g[j] - f[j];
                let (px, py) = MONO_POWERS[j];
                let (sx, sy) = (px + tpx, py + tpy);
                if sx + sy <= 3 {
                    expect[crate::segment::poly::mono_index(sx, sy)] += tv * d;
                }
            }
        }
        for k in 0..MONO_COUNT {
            assert!(
                (blend.bands[0][k] - expect[k]).abs() < 1e-12,
                "monomial {k}"
            );
        }
    }

    #[test]
    fn series_run_from_leaf_to_shared_root() {
        let img = two_region_image();
        let tree = decompose(&img, DecomposeParams::default()).unwrap();
        let shapes = aggregate(&tree).unwrap();
        let root_vec = shapes[0].domain.invariants();
        for leaf in tree.leaves() {
            let series = feature_series(&tree, &shapes, leaf.id).unwrap();
            assert_eq!(series.vectors.len(), shapes[leaf.id].depth + 1);
            assert_eq!(*series.vectors.last().unwrap(), root_vec);
        }
        // Depth-0 tree: single-vector series.
        let flat = MultiImage::filled(8, 8, 1, 256, 9).unwrap();
        let tiny = decompose(&flat, DecomposeParams::default()).unwrap();
        let tiny_shapes = aggregate(&tiny).unwrap();
        let series = feature_series(&tiny, &tiny_shapes, 0).unwrap();
        assert_eq!(series.vectors.len(), 1);
    }

    #[test]
    fn majority_label_breaks_ties_low() {
        assert_eq!(majority_label([2, 1, 2, 1]), Some(1));
        assert_eq!(majority_label([3, 3, 1]), Some(3));
        assert_eq!(majority_label(std::iter::empty()), None);
    }
}
