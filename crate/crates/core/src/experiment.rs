//! Retrieval experiments on aligned collections.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FeatureBlock, ShapeCollection};
use crate::pose::{synthesize_with_pose, PoseEstimate, PoseMode};
use crate::retrieval::{run_retrieval, Distance, LabeledImageSet, LabeledItem, RetrievalResult};
use crate::scalar::Scalar;
use crate::surrogate::SuitabilityTable;
use crate::synthesis::{PatchGramCache, SynthesisOptions, Synthesizer};

/// An input image's features with its ground truth.
#[derive(Clone, Debug)]
pub struct Query<T: Scalar = f32> {
    pub id: String,
    pub features: FeatureBlock<T>,
    pub labels: BTreeSet<String>,
    pub true_view: Option<usize>,
    /// Collection shapes barred from this query's neighborhood.
    pub exclude: Vec<usize>,
}

/// Synthesizes every query's descriptor. Returns the labeled set and the
/// pose estimate per query (when estimated).
pub fn synthesize_queries<T: Scalar>(
    c: &ShapeCollection<T>,
    table: &SuitabilityTable,
    options: SynthesisOptions,
    cache: Option<&PatchGramCache>,
    queries: &[Query<T>],
    mode: PoseMode,
) -> Result<(LabeledImageSet<T>, Vec<Option<PoseEstimate>>)> {
    let mut synth = Synthesizer::new(c, table, options)?;
    if let Some(cache) = cache {
        synth = synth.with_cache(cache);
    }
    let done: Vec<(LabeledItem<T>, Option<PoseEstimate>)> = queries
        .par_iter()
        .map(|q| {
            let (pose, descriptor) = if q.exclude.is_empty() {
                synthesize_with_pose(&synth, c, &q.features, mode)?
            } else {
                let v0 = match mode {
                    PoseMode::Fixed(v) => v,
                    PoseMode::Auto(_) => q
                        .true_view
                        .ok_or_else(|| Error::arg("excluded-shape queries need a known view"))?,
                };
                (
                    None,
                    synth.synthesize_excluding(&q.features, v0, &q.exclude)?,
                )
            };
            Ok((
                LabeledItem {
                    id: q.id.clone(),
                    descriptor,
                    labels: q.labels.clone(),
                },
                pose,
            ))
        })
        .collect::<Result<_>>()?;
    let (items, poses): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    Ok((LabeledImageSet::new(items)?, poses))
}

/// Every view of every collection shape as a query with known pose. Each
/// query's own shape is excluded from its neighborhood and its relevant
/// items are the other views of the same shape.
pub fn controlled_queries<T: Scalar>(c: &ShapeCollection<T>) -> Result<Vec<Query<T>>> {
    let mut out = Vec::with_capacity(c.len() * c.views());
    for s in 0..c.len() {
        for v in 0..c.views() {
            out.push(Query {
                id: format!("{}@{v}", c.ids()[s]),
                features: FeatureBlock::new(c.patches(), c.feature_dim(), c.slab(s, v).to_vec())?,
                labels: BTreeSet::from([c.ids()[s].clone()]),
                true_view: Some(v),
                exclude: vec![s],
            });
        }
    }
    Ok(out)
}

/// Outcome of one retrieval experiment under both distances.
pub struct Comparison {
    pub vad: RetrievalResult,
    pub baseline: RetrievalResult,
}

impl Comparison {
    pub fn run<T: Scalar>(set: &LabeledImageSet<T>) -> Result<Self> {
        Ok(Self {
            vad: run_retrieval(set, &Distance::Vad)?,
            baseline: run_retrieval(set, &Distance::BaselineL2)?,
        })
    }
}

/// Leave-one-shape-out retrieval over all renders of the collection.
pub fn fully_controlled<T: Scalar>(
    c: &ShapeCollection<T>,
    table: &SuitabilityTable,
    options: SynthesisOptions,
    cache: Option<&PatchGramCache>,
) -> Result<Comparison> {
    let queries = controlled_queries(c)?;
    let options = SynthesisOptions {
        keep_provenance: false,
        ..options
    };
    let (set, _) = synthesize_queries(c, table, options, cache, &queries, PoseMode::Auto(1))?;
    Comparison::run(&set)
}
