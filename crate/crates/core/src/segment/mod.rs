//! Piecewise-regular decomposition of an image into a binary tree of
//! polynomial patches.
//!
//! Each set is fitted with a least-squares plane; when the fit misses the
//! precision, the singular points steer a split line, the two halves recurse,
//! and on the way back up siblings are aggregated into the next-order model
//! when that model still fits the union.

pub mod histogram;
pub mod linear;
pub mod poly;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VisemeError};
use crate::image::{MultiImage, SampleSet};

use histogram::{build_histogram, singular_set};
use linear::fit_linear_lsq;
use poly::{barycentric_combine, PolyModel};
use split::{fit_split_line, split_set};

/// Node of the decomposition tree. Leaves own their pixel index list; the
/// leaf set is an exact partition of the image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompNode {
    pub id: usize,
    pub card: usize,
    pub center: (f64, f64),
    pub band_means: Vec<f64>,
    pub order: u8,
    pub model: PolyModel,
    /// Measured L-infinity error of `model` over the node's pixels.
    pub eps: f64,
    /// Region id when this node is a leaf of the final partition.
    pub region: Option<u32>,
    pub children: Option<(usize, usize)>,
    #[serde(skip)]
    pub pixels: Option<Vec<u32>>,
}

impl DecompNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompTree {
    pub width: u32,
    pub height: u32,
    pub bands: usize,
    pub depth: u32,
    pub precision: f64,
    pub min_card: usize,
    /// Preorder arena; the root is node 0.
    pub nodes: Vec<DecompNode>,
}

struct BuildNode {
    card: usize,
    center: (f64, f64),
    band_means: Vec<f64>,
    order: u8,
    model: PolyModel,
    eps: f64,
    pixels: Option<Vec<u32>>,
    children: Option<(Box<BuildNode>, Box<BuildNode>)>,
}

/// Decomposition parameters. `min_card` keeps splits from producing sets too
/// small to carry a stable plane fit.
#[derive(Debug, Clone, Copy)]
pub struct DecomposeParams {
    pub precision: f64,
    pub min_card: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            precision: 4.0,
            min_card: 8,
        }
    }
}

/// Recursive piecewise-regular decomposition of the whole image.
pub fn decompose(img: &MultiImage, params: DecomposeParams) -> Result<DecompTree> {
    if params.precision < 0.0 {
        return Err(VisemeError::InvalidArgument(
            "precision must be non-negative".into(),
        ));
    }
    if params.min_card < 6 {
        return Err(VisemeError::InvalidArgument(
            "min_card must be at least 6".into(),
        ));
    }
    let all: Vec<u32> = (0..img.pixel_count() as u32).collect();
    let root = decompose_rec(img, all, &params, 0);
    let mut nodes = Vec::new();
    flatten(root, &mut nodes);
    let mut region = 0u32;
    for node in nodes.iter_mut() {
        if node.is_leaf() {
            node.region = Some(region);
            region += 1;
        }
    }
    Ok(DecompTree {
        width: img.width(),
        height: img.height(),
        bands: img.bands(),
        depth: img.depth(),
        precision: params.precision,
        min_card: params.min_card,
        nodes,
    })
}

fn decompose_rec(
    img: &MultiImage,
    indices: Vec<u32>,
    params: &DecomposeParams,
    depth: usize,
) -> BuildNode {
    let set = SampleSet::from_indices(img, indices).expect("non-empty split side");
    let (linear, stats) = fit_linear_lsq(&set);
    let model = linear.to_poly();
    let errors = model.point_errors(&set);
    let eps = errors.iter().fold(0.0f64, |a, &b| a.max(b));
    let card = set.card();

    let mut node = BuildNode {
        card,
        center: stats.center,
        band_means: stats.band_means.clone(),
        order: 1,
        model,
        eps,
        pixels: None,
        children: None,
    };

    if eps <= params.precision || card < params.min_card {
        node.pixels = Some(set.into_indices());
        return node;
    }

    let hist = build_histogram(&errors, img.depth());
    let singular = singular_set(&set, &errors, hist.threshold, hist.modality);
    let line = fit_split_line(img, &singular);
    let (minus, plus) = split_set(&set, &line);
    let indices = set.into_indices();

    let (left, right) = if card >= 2048 && depth < 32 {
        rayon::join(
            || decompose_rec(img, minus, params, depth + 1),
            || decompose_rec(img, plus, params, depth + 1),
        )
    } else {
        (
            decompose_rec(img, minus, params, depth + 1),
            decompose_rec(img, plus, params, depth + 1),
        )
    };

    apply_aggregation(img, &mut node, indices, left, right, params.precision);
    node
}

/// Outcome of sibling aggregation over the union of their sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregation {
    /// One child's model already fits the union; propagate it at its own
    /// order (left wins ties).
    AdoptLeft { eps: f64 },
    AdoptRight { eps: f64 },
    /// The next-order blend fits the union.
    AdoptBlend { model: PolyModel, eps: f64 },
    /// Neither applies: the children stay as members of the final partition.
    Keep,
}

/// Sibling aggregation policy, in priority order: adopt the child model
/// that already fits the union (smaller measured error wins, left on ties);
/// otherwise, while below order 3, adopt the barycentric blend when it fits
/// the union; otherwise keep both children.
pub fn try_aggregate(
    union: &SampleSet,
    left: (&PolyModel, (f64, f64), u8),
    right: (&PolyModel, (f64, f64), u8),
    precision: f64,
) -> Aggregation {
    let (left_model, left_center, left_order) = left;
    let (right_model, right_center, right_order) = right;

    let eps_left = left_model.max_error(union);
    let eps_right = right_model.max_error(union);
    if eps_left.min(eps_right) <= precision {
        return if eps_left <= eps_right {
            Aggregation::AdoptLeft { eps: eps_left }
        } else {
            Aggregation::AdoptRight { eps: eps_right }
        };
    }

    if left_order.max(right_order) < 3 {
        if let Ok(blend) = barycentric_combine(left_model, right_model, left_center, right_center)
        {
            let eps = blend.max_error(union);
            if eps <= precision {
                return Aggregation::AdoptBlend { model: blend, eps };
            }
        }
    }
    Aggregation::Keep
}

fn apply_aggregation(
    img: &MultiImage,
    node: &mut BuildNode,
    indices: Vec<u32>,
    left: BuildNode,
    right: BuildNode,
    precision: f64,
) {
    let union = SampleSet::from_indices(img, indices).expect("parent set");
    match try_aggregate(
        &union,
        (&left.model, left.center, left.order),
        (&right.model, right.center, right.order),
        precision,
    ) {
        Aggregation::AdoptLeft { eps } => {
            node.model = left.model.clone();
            node.order = left.order;
            node.eps = eps;
            node.pixels = Some(union.into_indices());
        }
        Aggregation::AdoptRight { eps } => {
            node.model = right.model.clone();
            node.order = right.order;
            node.eps = eps;
            node.pixels = Some(union.into_indices());
        }
        Aggregation::AdoptBlend { model, eps } => {
            node.order = model.order;
            node.model = model;
            node.eps = eps;
            node.pixels = Some(union.into_indices());
        }
        Aggregation::Keep => {
            node.children = Some((Box::new(left), Box::new(right)));
        }
    }
}

fn flatten(node: BuildNode, arena: &mut Vec<DecompNode>) -> usize {
    let id = arena.len();
    arena.push(DecompNode {
        id,
        card: node.card,
        center: node.center,
        band_means: node.band_means,
        order: node.order,
        model: node.model,
        eps: node.eps,
        region: None,
        children: None,
        pixels: node.pixels,
    });
    if let Some((left, right)) = node.children {
        let l = flatten(*left, arena);
        let r = flatten(*right, arena);
        arena[id].children = Some((l, r));
    }
    id
}

impl DecompTree {
    pub fn root(&self) -> &DecompNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &DecompNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Parent id per node (root maps to itself).
    pub fn parents(&self) -> Vec<usize> {
        let mut parents = vec![0; self.nodes.len()];
        for node in &self.nodes {
            if let Some((l, r)) = node.children {
                parents[l] = node.id;
                parents[r] = node.id;
            }
        }
        parents
    }

    /// Region-id raster over the full image: every pixel carries the region
    /// of the unique leaf containing it.
    pub fn label_map(&self) -> Vec<u32> {
        let mut labels = vec![u32::MAX; self.width as usize * self.height as usize];
        for node in self.leaves() {
            let region = node.region.expect("leaf region assigned");
            if let Some(pixels) = &node.pixels {
                for &p in pixels {
                    labels[p as usize] = region;
                }
            }
        }
        debug_assert!(labels.iter().all(|&l| l != u32::MAX));
        labels
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Restores leaf pixel lists from a label map produced by `label_map`.
    pub fn attach_pixels(&mut self, labels: &[u32]) -> Result<()> {
        if labels.len() != self.width as usize * self.height as usize {
            return Err(VisemeError::InvalidArgument(
                "label map does not match tree dimensions".into(),
            ));
        }
        let mut buckets: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            buckets.entry(l).or_default().push(i as u32);
        }
        for node in self.nodes.iter_mut() {
            if let Some(region) = node.region {
                node.pixels = Some(buckets.remove(&region).ok_or_else(|| {
                    VisemeError::MalformedFile(format!("region {region} missing from label map"))
                })?);
            }
        }
        Ok(())
    }

    /// Histogram of leaf orders, indexed by order 1..=3.
    pub fn order_histogram(&self) -> [usize; 3] {
        let mut h = [0usize; 3];
        for leaf in self.leaves() {
            h[(leaf.order as usize - 1).min(2)] += 1;
        }
        h
    }

    pub fn max_leaf_eps(&self) -> f64 {
        self.leaves().map(|l| l.eps).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::MultiImage;

    fn ramp_image() -> MultiImage {
        // Two half-plane ramps with a sharp step at x = 32.
        let w = 64u32;
        let h = 32u32;
        let plane = (0..h)
            .flat_map(|_y| {
                (0..w).map(move |x| {
                    if x < 32 {
                        (10 + x) as u8
                    } else {
                        (220 - x) as u8
                    }
                })
            })
            .collect();
        MultiImage::new(w, h, 256, vec![plane]).unwrap()
    }

    #[test]
    fn constant_image_is_one_leaf() {
        let img = MultiImage::filled(16, 16, 1, 256, 77).unwrap();
        let tree = decompose(&img, DecomposeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.root().order, 1);
        assert_eq!(tree.root().eps, 0.0);
        assert_eq!(tree.leaf_count(), 1);
    }

    #[test]
    fn leaves_tile_the_image() {
        let img = ramp_image();
        let tree = decompose(
            &img,
            DecomposeParams {
                precision: 2.0,
                min_card: 8,
            },
        )
        .unwrap();
        let labels = tree.label_map();
        assert_eq!(labels.len(), 64 * 32);
        // Every pixel in exactly one leaf.
        let mut counts = vec![0usize; tree.leaf_count()];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let total: usize = counts.iter().sum();
        assert_eq!(total, 64 * 32);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn leaf_precision_honored() {
        let img = ramp_image();
        let params = DecomposeParams {
            precision: 2.0,
            min_card: 8,
        };
        let tree = decompose(&img, params).unwrap();
        assert!(tree.leaf_count() >= 2);
        for leaf in tree.leaves() {
            if leaf.card >= params.min_card {
                assert!(
                    leaf.eps <= params.precision,
                    "leaf {} eps {} card {}",
                    leaf.id,
                    leaf.eps,
                    leaf.card
                );
            }
        }
    }

    #[test]
    fn quadric_strip_aggregates_to_order_two() {
        // z = x^2 / 4 along a strip: aggregation should raise some node to
        // order 2 with a blend that fits the union.
        let w = 32u32;
        let h = 32u32;
        let plane = (0..h)
            .flat_map(|_y| (0..w).map(move |x| ((x * x) / 4) as u8))
            .collect();
        let img = MultiImage::new(w, h, 256, vec![plane]).unwrap();
        let tree = decompose(
            &img,
            DecomposeParams {
                precision: 4.0,
                min_card: 8,
            },
        )
        .unwrap();
        let raised = tree.nodes.iter().filter(|n| n.order >= 2).count();
        assert!(raised > 0, "no node aggregated past order 1");
        // Verify the adopted models against their own pixels directly.
        for node in tree.leaves().filter(|n| n.order >= 2) {
            let set = SampleSet::from_indices(&img, node.pixels.clone().unwrap()).unwrap();
            assert!(node.model.max_error(&set) <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn identical_plane_children_adopt_without_raising_order() {
        // Outcome (i): both children carry the same plane, which fits the
        // union; the left child's model propagates at its own order.
        let plane = (0..8u32)
            .flat_map(|y| (0..8u32).map(move |x| (3 + 2 * x + y) as u8))
            .collect();
        let img = MultiImage::new(8, 8, 256, vec![plane]).unwrap();
        let union = SampleSet::full(&img);
        let (minus, plus): (Vec<u32>, Vec<u32>) =
            union.indices().iter().partition(|&&p| p % 8 < 4);
        let ls = SampleSet::from_indices(&img, minus).unwrap();
        let rs = SampleSet::from_indices(&img, plus).unwrap();
        let (lm, lstats) = linear::fit_linear_lsq(&ls);
        let (rm, rstats) = linear::fit_linear_lsq(&rs);
        let outcome = try_aggregate(
            &union,
            (&lm.to_poly(), lstats.center, 1),
            (&rm.to_poly(), rstats.center, 1),
            1.0,
        );
        match outcome {
            Aggregation::AdoptLeft { eps } => assert!(eps <= 1e-9),
            other => panic!("expected left adoption, got {other:?}"),
        }
    }

    #[test]
    fn quadric_halves_adopt_the_blend() {
        // Outcome (ii): a quadric strip split in half; neither plane fits
        // the union but their blend does.
        let plane = (0..4u32)
            .flat_map(|_y| (0..8u32).map(move |x| ((x * x) as f64 / 4.0).round() as u8))
            .collect();
        let img = MultiImage::new(8, 4, 256, vec![plane]).unwrap();
        let union = SampleSet::full(&img);
        let (minus, plus): (Vec<u32>, Vec<u32>) =
            union.indices().iter().partition(|&&p| p % 8 < 4);
        let ls = SampleSet::from_indices(&img, minus).unwrap();
        let rs = SampleSet::from_indices(&img, plus).unwrap();
        let (lm, lstats) = linear::fit_linear_lsq(&ls);
        let (rm, rstats) = linear::fit_linear_lsq(&rs);
        let outcome = try_aggregate(
            &union,
            (&lm.to_poly(), lstats.center, 1),
            (&rm.to_poly(), rstats.center, 1),
            4.0,
        );
        match outcome {
            Aggregation::AdoptBlend { model, eps } => {
                assert_eq!(model.order, 2);
                assert!(eps <= 4.0);
                // Verified directly against the union.
                assert!(model.max_error(&union) <= 4.0);
            }
            other => panic!("expected blend adoption, got {other:?}"),
        }
    }

    #[test]
    fn severe_step_keeps_both_children() {
        // Outcome (iii): a 100-level step defeats both child models and the
        // blend at precision 1 (measured, not assumed).
        let plane = (0..4u32)
            .flat_map(|_y| (0..8u32).map(move |x| if x < 4 { 10u8 } else { 110u8 }))
            .collect();
        let img = MultiImage::new(8, 4, 256, vec![plane]).unwrap();
        let union = SampleSet::full(&img);
        let (minus, plus): (Vec<u32>, Vec<u32>) =
            union.indices().iter().partition(|&&p| p % 8 < 4);
        let ls = SampleSet::from_indices(&img, minus).unwrap();
        let rs = SampleSet::from_indices(&img, plus).unwrap();
        let (lm, lstats) = linear::fit_linear_lsq(&ls);
        let (rm, rstats) = linear::fit_linear_lsq(&rs);
        let outcome = try_aggregate(
            &union,
            (&lm.to_poly(), lstats.center, 1),
            (&rm.to_poly(), rstats.center, 1),
            1.0,
        );
        assert_eq!(outcome, Aggregation::Keep);
    }

    #[test]
    fn step_discontinuity_keeps_children() {
        // Severe step: no bounded model bridges it at precision 1.
        let plane = (0..16u32)
            .flat_map(|_y| (0..16u32).map(move |x| if x < 8 { 10u8 } else { 110u8 }))
            .collect();
        let img = MultiImage::new(16, 16, 256, vec![plane]).unwrap();
        let tree = decompose(
            &img,
            DecomposeParams {
                precision: 1.0,
                min_card: 8,
            },
        )
        .unwrap();
        assert!(tree.leaf_count() >= 2);
        assert!(tree.max_leaf_eps() <= 1.0);
    }

    #[test]
    fn parent_center_is_weighted_child_mean() {
        let img = ramp_image();
        let tree = decompose(
            &img,
            DecomposeParams {
                precision: 2.0,
                min_card: 8,
            },
        )
        .unwrap();
        for node in &tree.nodes {
            if let Some((l, r)) = node.children {
                let (lc, rc) = (&tree.nodes[l], &tree.nodes[r]);
                let total = (lc.card + rc.card) as f64;
                let cx = (lc.center.0 * lc.card as f64 + rc.center.0 * rc.card as f64) / total;
                let cy = (lc.center.1 * lc.card as f64 + rc.center.1 * rc.card as f64) / total;
                assert!((node.center.0 - cx).abs() < 1e-9);
                assert!((node.center.1 - cy).abs() < 1e-9);
                assert_eq!(node.card, lc.card + rc.card);
            }
        }
    }

    #[test]
    fn decomposition_is_deterministic() {
        let img = ramp_image();
        let params = DecomposeParams {
            precision: 2.0,
            min_card: 8,
        };
        let a = decompose(&img, params).unwrap().to_json().unwrap();
        let b = decompose(&img, params).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_with_label_map() {
        let img = ramp_image();
        let tree = decompose(
            &img,
            DecomposeParams {
                precision: 2.0,
                min_card: 8,
            },
        )
        .unwrap();
        let json = tree.to_json().unwrap();
        let mut back = DecompTree::from_json(&json).unwrap();
        back.attach_pixels(&tree.label_map()).unwrap();
        assert_eq!(back.nodes.len(), tree.nodes.len());
        for (a, b) in back.leaves().zip(tree.leaves()) {
            let mut pa = a.pixels.clone().unwrap();
            let mut pb = b.pixels.clone().unwrap();
            pa.sort_unstable();
            pb.sort_unstable();
            assert_eq!(pa, pb);
        }
    }
}
