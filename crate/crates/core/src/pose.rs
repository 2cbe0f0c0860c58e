//! Observed-view estimation by nearest-neighbour voting over collection slabs.

use crate::error::{Error, Result};
use crate::features::{prepare_and_extract, GrayImage, HogConfig};
use crate::model::{FeatureBlock, ShapeCollection};
use crate::scalar::{sq_dist, Scalar};
use crate::synthesis::{SynthesizedDescriptor, Synthesizer};

pub const DEFAULT_POSE_VOTES: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    pub view: usize,
    /// Distance margin between the nearest slab of any other view and the
    /// nearest slab of the chosen view; 0 when they tie.
    pub score: f64,
    /// Vote count per view.
    pub votes: Vec<usize>,
}

/// Compares the input against every `S[n, v]`, lets the `m` nearest slabs vote
/// for their view and returns the plurality. Vote ties go to the view whose
/// voters have the smaller summed distance, then to the lower index. A slab
/// at distance zero wins regardless of the vote.
pub fn estimate_pose<T: Scalar>(
    c: &ShapeCollection<T>,
    observed: &FeatureBlock<T>,
    m: usize,
) -> Result<PoseEstimate> {
    if m == 0 {
        return Err(Error::arg("pose vote count must be at least 1"));
    }
    if observed.patches() != c.patches() || observed.dim() != c.feature_dim() {
        return Err(Error::arg(
            "observed features do not match the collection layout",
        ));
    }
    let v_count = c.views();
    let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(c.len() * v_count);
    let mut nearest = vec![f64::INFINITY; v_count];
    for n in 0..c.len() {
        for v in 0..v_count {
            let d = sq_dist(observed.as_slice(), c.slab(n, v)).sqrt();
            nearest[v] = nearest[v].min(d);
            scored.push((d, v, n));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let m = m.min(scored.len());
    let mut votes = vec![0usize; v_count];
    let mut summed = vec![0.0f64; v_count];
    for &(d, v, _) in &scored[..m] {
        votes[v] += 1;
        summed[v] += d;
    }
    // An exact match decides the view outright.
    let exact = scored[0].0 == 0.0;
    let view = if exact {
        scored[0].1
    } else {
        (0..v_count)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(summed[b].total_cmp(&summed[a]))
                    .then(b.cmp(&a))
            })
            .expect("at least one view")
    };
    let other = (0..v_count)
        .filter(|&v| v != view)
        .map(|v| nearest[v])
        .fold(f64::INFINITY, f64::min);
    let score = if other.is_finite() {
        (other - nearest[view]).max(0.0)
    } else {
        0.0
    };
    Ok(PoseEstimate { view, score, votes })
}

/// How the observed view is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoseMode {
    /// Estimate with this many votes.
    Auto(usize),
    /// Use the given view index.
    Fixed(usize),
}

impl Default for PoseMode {
    fn default() -> Self {
        PoseMode::Auto(DEFAULT_POSE_VOTES)
    }
}

/// Synthesizes from already extracted features, estimating the view if asked.
pub fn synthesize_with_pose<T: Scalar>(
    synth: &Synthesizer<'_, T>,
    collection: &ShapeCollection<T>,
    observed: &FeatureBlock<T>,
    mode: PoseMode,
) -> Result<(Option<PoseEstimate>, SynthesizedDescriptor<T>)> {
    let (pose, v0) = match mode {
        PoseMode::Auto(m) => {
            let p = estimate_pose(collection, observed, m)?;
            let v = p.view;
            (Some(p), v)
        }
        PoseMode::Fixed(v) => (None, v),
    };
    Ok((pose, synth.synthesize(observed, v0)?))
}

/// Image to descriptor: resize, extract HoG features, pick the view, synthesize.
pub fn synthesize_image<T: Scalar>(
    synth: &Synthesizer<'_, T>,
    collection: &ShapeCollection<T>,
    image: &GrayImage,
    hog: &HogConfig,
    mode: PoseMode,
) -> Result<(Option<PoseEstimate>, SynthesizedDescriptor<T>)> {
    let features = prepare_and_extract(image, collection.grid(), hog)?;
    synthesize_with_pose(synth, collection, &features, mode)
}
