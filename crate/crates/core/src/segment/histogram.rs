//! Approximation-error histogram, modality detection and the singular set.
//!
//! The histogram lives on the integer error levels `[0, depth - 1]`; raw
//! per-point errors stay real and are only rounded (and clamped) for binning.

use crate::image::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Modality {
    Mono,
    Multi,
}

#[derive(Debug, Clone)]
pub struct ErrorHistogram {
    pub bins: Vec<u64>,
    pub modality: Modality,
    /// Error level separating the singular tail.
    pub threshold: u32,
}

/// Bins the per-point errors over `[0, depth - 1]` and runs threshold
/// detection. `sum(bins) == errors.len()` always holds.
pub fn build_histogram(errors: &[f64], depth: u32) -> ErrorHistogram {
    let mut bins = vec![0u64; depth as usize];
    for &e in errors {
        let level = (e.round().max(0.0) as u32).min(depth - 1);
        bins[level as usize] += 1;
    }
    let (modality, threshold) = detect_threshold(&bins, errors.len());
    ErrorHistogram {
        bins,
        modality,
        threshold,
    }
}

/// Centered 3-bin mean with zero padding outside the range.
fn smooth(bins: &[u64]) -> Vec<f64> {
    let n = bins.len();
    (0..n)
        .map(|i| {
            let a = if i > 0 { bins[i - 1] } else { 0 };
            let b = bins[i];
            let c = if i + 1 < n { bins[i + 1] } else { 0 };
            (a + b + c) as f64 / 3.0
        })
        .collect()
}

/// Maximal runs of equal smoothed value, as (start, end, value).
fn runs(smoothed: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=smoothed.len() {
        if i == smoothed.len() || smoothed[i] != smoothed[start] {
            out.push((start, i - 1, smoothed[start]));
            start = i;
        }
    }
    out
}

/// Number of coarse buckets used for mode detection.
const MODE_BUCKETS: usize = 32;

/// Modality rule. Error histograms are combs (each image column feeds one
/// bin), so modes are detected at a coarser scale: the occupied range is
/// folded into up to 32 equal buckets, smoothed with the centered 3-bucket
/// mean, and a local maximum only counts as a mode when the valley towards
/// every taller mode drops to half its height or below and it reaches
/// `max(2, card/1000)`. Two or more modes make the histogram multi-modal.
/// The multi-modal threshold is the rightmost strict local minimum of the
/// smoothed fine histogram strictly between the two rightmost modes; the
/// mono-modal threshold is the smallest level whose non-empty upper tail
/// holds at most `ceil(sqrt(card))` points.
pub fn detect_threshold(bins: &[u64], card: usize) -> (Modality, u32) {
    let occupied: Vec<usize> = (0..bins.len()).filter(|&i| bins[i] > 0).collect();
    let (Some(&lo), Some(&hi)) = (occupied.first(), occupied.last()) else {
        return (Modality::Mono, 0);
    };
    let span = hi - lo + 1;
    let bucket_width = span.div_ceil(MODE_BUCKETS);
    let bucket_count = span.div_ceil(bucket_width);
    let mut buckets = vec![0u64; bucket_count];
    for i in lo..=hi {
        buckets[(i - lo) / bucket_width] += bins[i];
    }

    let coarse = smooth(&buckets);
    let segs = runs(&coarse);
    let min_height = 2.0f64.max(card as f64 / 1000.0);

    // Candidate maxima runs of the coarse histogram, tallest first.
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (k, &(a, b, v)) in segs.iter().enumerate() {
        if v < min_height {
            continue;
        }
        let left_lower = k == 0 || segs[k - 1].2 < v;
        let right_lower = k + 1 == segs.len() || segs[k + 1].2 < v;
        if left_lower && right_lower {
            candidates.push((a, b, v));
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        candidates[j]
            .2
            .partial_cmp(&candidates[i].2)
            .unwrap()
            .then(candidates[i].0.cmp(&candidates[j].0))
    });
    let mut modes: Vec<(usize, usize)> = Vec::new();
    for &i in &order {
        let (a, b, v) = candidates[i];
        let separated = modes.iter().all(|&(ma, mb)| {
            let (s, e) = if mb < a { (mb, a) } else { (b, ma) };
            let floor = coarse[s..=e].iter().fold(f64::INFINITY, |m, &x| m.min(x));
            floor <= v / 2.0
        });
        if separated {
            modes.push((a, b));
        }
    }
    modes.sort_unstable();

    if modes.len() >= 2 {
        // Fine-bin window between the two rightmost modes.
        let m1_end = lo + (modes[modes.len() - 2].1 + 1) * bucket_width - 1;
        let m2_start = lo + modes[modes.len() - 1].0 * bucket_width;
        let fine = smooth(bins);
        let fine_runs = runs(&fine);
        let mut valley: Option<usize> = None;
        for (k, &(a, b, v)) in fine_runs.iter().enumerate() {
            if b <= m1_end || a >= m2_start {
                continue;
            }
            let left_higher = k > 0 && fine_runs[k - 1].2 > v;
            let right_higher = k + 1 < fine_runs.len() && fine_runs[k + 1].2 > v;
            if left_higher && right_higher {
                valley = Some(b.min(m2_start - 1));
            }
        }
        if let Some(t) = valley {
            return (Modality::Multi, t as u32);
        }
        // No usable valley between the modes: treat as mono-modal.
    }

    (Modality::Mono, mono_threshold(bins, card))
}

fn mono_threshold(bins: &[u64], card: usize) -> u32 {
    let budget = (card as f64).sqrt().ceil() as u64;
    let mut tail = 0u64;
    let mut best: Option<usize> = None;
    for t in (0..bins.len()).rev() {
        tail += bins[t];
        if tail == 0 {
            continue;
        }
        if tail <= budget {
            best = Some(t);
        } else {
            break;
        }
    }
    match best {
        Some(t) => t as u32,
        // Even the top occupied bin exceeds the budget.
        None => bins.iter().rposition(|&c| c > 0).unwrap_or(0) as u32,
    }
}

/// Points feeding the split-line regression. Multi-modal: every point whose
/// error strictly exceeds the threshold. Mono-modal: the `ceil(sqrt(card))`
/// largest errors, ties resolved in raster order. Never empty.
pub fn singular_set(
    set: &SampleSet,
    errors: &[f64],
    threshold: u32,
    modality: Modality,
) -> Vec<u32> {
    debug_assert_eq!(set.card(), errors.len());
    if modality == Modality::Multi {
        let picked: Vec<u32> = set
            .indices()
            .iter()
            .zip(errors)
            .filter(|(_, &e)| e > threshold as f64)
            .map(|(&i, _)| i)
            .collect();
        if !picked.is_empty() {
            return picked;
        }
    }
    let count = (set.card() as f64).sqrt().ceil() as usize;
    let mut order: Vec<usize> = (0..set.card()).collect();
    order.sort_by(|&a, &b| {
        errors[b]
            .partial_cmp(&errors[a])
            .unwrap()
            .then(set.indices()[a].cmp(&set.indices()[b]))
    });
    order
        .into_iter()
        .take(count.max(1))
        .map(|i| set.indices()[i])
        .collect()
}
