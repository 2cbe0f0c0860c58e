//! Cross-view feature synthesis.
//!
//! For an input image observed on view `v0`:
//! 1. take the `k` collection shapes nearest to the input on `v0`;
//! 2. for each novel patch `(v1, g1)`, fit simplex weights that reconstruct
//!    the input's surrogate region on `v0` from the neighbours' same region;
//! 3. apply those weights to the neighbours' features at `(v1, g1)`.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FeatureBlock, MultiViewDescriptor, PatchAddress, ShapeCollection};
use crate::scalar::{dot, sq_dist, sq_norm, Scalar};
use crate::simplex::{
    solve_simplex_least_squares, SimplexLeastSquares, SimplexWeights, SolverOptions, WeightSolution,
};
use crate::surrogate::{select_region, RegionSelection, SuitabilityTable};

pub const DEFAULT_NEIGHBORS: usize = 200;

/// The `k` shapes closest to the input on the observed view, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub shape_indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.shape_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape_indices.is_empty()
    }
}

fn check_observed<T: Scalar>(c: &ShapeCollection<T>, x: &FeatureBlock<T>, v0: usize) -> Result<()> {
    if v0 >= c.views() {
        return Err(Error::Address {
            axis: "view",
            index: v0,
            len: c.views(),
        });
    }
    if x.patches() != c.patches() || x.dim() != c.feature_dim() {
        return Err(Error::arg(format!(
            "observed features are {}x{}, collection expects {}x{}",
            x.patches(),
            x.dim(),
            c.patches(),
            c.feature_dim()
        )));
    }
    Ok(())
}

/// `k` nearest shapes by L2 between flattened observed-view slabs, ties by
/// lower index. `k` larger than the collection is clamped with a warning.
pub fn find_neighborhood<T: Scalar>(
    c: &ShapeCollection<T>,
    observed: &FeatureBlock<T>,
    v0: usize,
    k: usize,
) -> Result<Neighborhood> {
    find_neighborhood_excluding(c, observed, v0, k, &[])
}

/// [`find_neighborhood`] over the shapes not listed in `exclude`.
pub fn find_neighborhood_excluding<T: Scalar>(
    c: &ShapeCollection<T>,
    observed: &FeatureBlock<T>,
    v0: usize,
    k: usize,
    exclude: &[usize],
) -> Result<Neighborhood> {
    check_observed(c, observed, v0)?;
    if k == 0 {
        return Err(Error::arg("neighborhood size k must be at least 1"));
    }
    let mut scored: Vec<(f64, usize)> = (0..c.len())
        .filter(|n| !exclude.contains(n))
        .map(|n| (sq_dist(observed.as_slice(), c.slab(n, v0)).sqrt(), n))
        .collect();
    if scored.is_empty() {
        return Err(Error::arg("no candidate shapes left for the neighborhood"));
    }
    let k = if k > scored.len() {
        log::warn!(
            "neighborhood size {k} exceeds the {} available shapes; clamping",
            scored.len()
        );
        scored.len()
    } else {
        k
    };
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    Ok(Neighborhood {
        shape_indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0).collect(),
    })
}

/// Fits simplex weights reconstructing the region's observed patches from
/// the neighbours' patches at the same positions.
pub fn solve_weights<T: Scalar>(
    observed: &FeatureBlock<T>,
    c: &ShapeCollection<T>,
    nbr: &Neighborhood,
    v0: usize,
    region: &[usize],
    options: &SolverOptions,
) -> Result<WeightSolution> {
    check_observed(c, observed, v0)?;
    if region.is_empty() {
        return Err(Error::arg("surrogate region is empty"));
    }
    if nbr.is_empty() {
        return Err(Error::arg("neighborhood is empty"));
    }
    if observed.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite observed feature".into()));
    }
    let mut blocks = Vec::with_capacity(region.len());
    for &g in region {
        if g >= c.patches() {
            return Err(Error::Address {
                axis: "patch",
                index: g,
                len: c.patches(),
            });
        }
        let cols: Vec<&[T]> = nbr
            .shape_indices
            .iter()
            .map(|&n| c.patch_unchecked(n, v0, g))
            .collect();
        blocks.push((cols, observed.patch(g)));
    }
    let problem = SimplexLeastSquares::from_blocks(&blocks)?;
    solve_simplex_least_squares(&problem, options)
}

/// `S[N, v1, g1] · w`.
pub fn synthesize_patch<T: Scalar>(
    c: &ShapeCollection<T>,
    nbr: &Neighborhood,
    weights: &SimplexWeights,
    v1: usize,
    g1: usize,
) -> Result<Vec<T>> {
    if weights.len() != nbr.len() {
        return Err(Error::arg("weight count does not match the neighborhood"));
    }
    c.check_address(0, PatchAddress::new(v1, g1))?;
    let mut acc = vec![0.0f64; c.feature_dim()];
    combine_into(c, nbr, weights.as_slice(), v1, g1, &mut acc);
    Ok(acc.into_iter().map(T::from_f64).collect())
}

fn combine_into<T: Scalar>(
    c: &ShapeCollection<T>,
    nbr: &Neighborhood,
    w: &[f64],
    v1: usize,
    g1: usize,
    acc: &mut [f64],
) {
    acc.iter_mut().for_each(|a| *a = 0.0);
    for (&n, &wj) in nbr.shape_indices.iter().zip(w) {
        if wj == 0.0 {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(c.patch_unchecked(n, v1, g1)) {
            *a += wj * x.as_f64();
        }
    }
}

/// Where each synthesized patch came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub neighborhood: Neighborhood,
    /// Distinct surrogate regions solved (observed-view patch lists).
    pub regions: Vec<Vec<u16>>,
    /// Region index for every (view, patch), row-major; `u32::MAX` on the observed view.
    pub region_of: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedDescriptor<T: Scalar = f32> {
    pub descriptor: MultiViewDescriptor<T>,
    pub observed_view: usize,
    pub provenance: Option<Provenance>,
}

impl<T: Scalar> SynthesizedDescriptor<T> {
    /// The observed-view slab (the input's own features).
    pub fn observed(&self) -> &[T] {
        self.descriptor.view(self.observed_view)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisOptions {
    pub k: usize,
    pub selection: RegionSelection,
    pub solver: SolverOptions,
    /// Keep neighborhood and region bookkeeping in the output.
    pub keep_provenance: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_NEIGHBORS,
            selection: RegionSelection::default(),
            solver: SolverOptions::default(),
            keep_provenance: true,
        }
    }
}

/// Per-view, per-patch Gram matrices `⟨S[n,v,g], S[m,v,g]⟩` over the whole
/// collection, built lazily one view at a time.
///
/// Costs V·G·N² doubles; worthwhile when many inputs are synthesized against
/// the same collection.
pub struct PatchGramCache {
    shapes: usize,
    patches: usize,
    views: Vec<OnceLock<Vec<f64>>>,
}

impl PatchGramCache {
    pub fn new<T: Scalar>(c: &ShapeCollection<T>) -> Self {
        Self {
            shapes: c.len(),
            patches: c.patches(),
            views: (0..c.views()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn view<T: Scalar>(&self, c: &ShapeCollection<T>, v: usize) -> &[f64] {
        self.views[v].get_or_init(|| {
            let (n, g) = (self.shapes, self.patches);
            let blocks: Vec<Vec<f64>> = (0..g)
                .into_par_iter()
                .map(|p| {
                    let mut m = vec![0.0; n * n];
                    for i in 0..n {
                        let a = c.patch_unchecked(i, v, p);
                        for j in i..n {
                            let val = dot(a, c.patch_unchecked(j, v, p));
                            m[i * n + j] = val;
                            m[j * n + i] = val;
                        }
                    }
                    m
                })
                .collect();
            blocks.concat()
        })
    }

    #[inline]
    fn entry(view: &[f64], n: usize, g: usize, i: usize, j: usize) -> f64 {
        view[(g * n + i) * n + j]
    }
}

/// Per-patch pieces of the observed-view least-squares problem for one
/// input and neighborhood.
struct ObservedTerms {
    k: usize,
    gram: Vec<Vec<f64>>,
    linear: Vec<Vec<f64>>,
    constant: Vec<f64>,
}

impl ObservedTerms {
    fn build<T: Scalar>(
        c: &ShapeCollection<T>,
        cache: Option<&PatchGramCache>,
        x: &FeatureBlock<T>,
        nbr: &Neighborhood,
        v0: usize,
        needed: &[bool],
    ) -> Self {
        let k = nbr.len();
        let g_count = c.patches();
        let cached = cache.map(|cache| (cache.view(c, v0), cache.shapes));
        let per_patch: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..g_count)
            .into_par_iter()
            .map(|g| {
                if !needed[g] {
                    return (Vec::new(), Vec::new(), 0.0);
                }
                let xg = x.patch(g);
                let mut gram = vec![0.0; k * k];
                match cached {
                    Some((view, n)) => {
                        for (a, &i) in nbr.shape_indices.iter().enumerate() {
                            for (b, &j) in nbr.shape_indices.iter().enumerate() {
                                gram[a * k + b] = PatchGramCache::entry(view, n, g, i, j);
                            }
                        }
                    }
                    None => {
                        for a in 0..k {
                            let pa = c.patch_unchecked(nbr.shape_indices[a], v0, g);
                            for b in a..k {
                                let val = dot(pa, c.patch_unchecked(nbr.shape_indices[b], v0, g));
                                gram[a * k + b] = val;
                                gram[b * k + a] = val;
                            }
                        }
                    }
                }
                let linear = nbr
                    .shape_indices
                    .iter()
                    .map(|&n| dot(xg, c.patch_unchecked(n, v0, g)))
                    .collect();
                (gram, linear, sq_norm(xg))
            })
            .collect();
        let mut out = ObservedTerms {
            k,
            gram: Vec::with_capacity(g_count),
            linear: Vec::with_capacity(g_count),
            constant: Vec::with_capacity(g_count),
        };
        for (gram, linear, constant) in per_patch {
            out.gram.push(gram);
            out.linear.push(linear);
            out.constant.push(constant);
        }
        out
    }

    fn problem(&self, region: &[usize]) -> Result<SimplexLeastSquares> {
        let k = self.k;
        let mut gram = vec![0.0; k * k];
        let mut linear = vec![0.0; k];
        let mut constant = 0.0;
        for &g in region {
            gram.iter_mut()
                .zip(&self.gram[g])
                .for_each(|(a, b)| *a += b);
            linear
                .iter_mut()
                .zip(&self.linear[g])
                .for_each(|(a, b)| *a += b);
            constant += self.constant[g];
        }
        SimplexLeastSquares::new(k, gram, linear, constant)
    }
}

/// [`solve_weights`] that reads neighbour Gram entries from `cache` when given.
pub fn fit_region_weights<T: Scalar>(
    c: &ShapeCollection<T>,
    cache: Option<&PatchGramCache>,
    observed: &FeatureBlock<T>,
    nbr: &Neighborhood,
    v0: usize,
    region: &[usize],
    options: &SolverOptions,
) -> Result<WeightSolution> {
    check_observed(c, observed, v0)?;
    if region.is_empty() {
        return Err(Error::arg("surrogate region is empty"));
    }
    if let Some(&bad) = region.iter().find(|&&g| g >= c.patches()) {
        return Err(Error::Address {
            axis: "patch",
            index: bad,
            len: c.patches(),
        });
    }
    let mut needed = vec![false; c.patches()];
    region.iter().for_each(|&g| needed[g] = true);
    let terms = ObservedTerms::build(c, cache, observed, nbr, v0, &needed);
    solve_simplex_least_squares(&terms.problem(region)?, options)
}

/// Synthesizes descriptors against one collection and suitability table.
pub struct Synthesizer<'a, T: Scalar = f32> {
    collection: &'a ShapeCollection<T>,
    table: &'a SuitabilityTable,
    options: SynthesisOptions,
    cache: Option<&'a PatchGramCache>,
}

impl<'a, T: Scalar> Synthesizer<'a, T> {
    pub fn new(
        collection: &'a ShapeCollection<T>,
        table: &'a SuitabilityTable,
        options: SynthesisOptions,
    ) -> Result<Self> {
        if table.views() != collection.views() || table.patches() != collection.patches() {
            return Err(Error::arg(
                "suitability table does not match the collection",
            ));
        }
        if options.k == 0 {
            return Err(Error::arg("neighborhood size k must be at least 1"));
        }
        Ok(Self {
            collection,
            table,
            options,
            cache: None,
        })
    }

    pub fn with_cache(mut self, cache: &'a PatchGramCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn options(&self) -> &SynthesisOptions {
        &self.options
    }

    pub fn synthesize(
        &self,
        observed: &FeatureBlock<T>,
        v0: usize,
    ) -> Result<SynthesizedDescriptor<T>> {
        self.synthesize_excluding(observed, v0, &[])
    }

    /// Synthesis with some collection shapes barred from the neighborhood.
    pub fn synthesize_excluding(
        &self,
        observed: &FeatureBlock<T>,
        v0: usize,
        exclude: &[usize],
    ) -> Result<SynthesizedDescriptor<T>> {
        let c = self.collection;
        let nbr = find_neighborhood_excluding(c, observed, v0, self.options.k, exclude)?;
        self.synthesize_with_neighborhood(observed, v0, nbr)
    }

    pub fn synthesize_with_neighborhood(
        &self,
        observed: &FeatureBlock<T>,
        v0: usize,
        nbr: Neighborhood,
    ) -> Result<SynthesizedDescriptor<T>> {
        let c = self.collection;
        check_observed(c, observed, v0)?;
        let (v, g, d) = (c.views(), c.patches(), c.feature_dim());

        // Regions for every novel patch, deduplicated by patch set.
        let mut region_index: HashMap<Vec<u16>, u32> = HashMap::new();
        let mut regions: Vec<Vec<u16>> = Vec::new();
        let mut region_of = vec![u32::MAX; v * g];
        for v1 in (0..v).filter(|&v1| v1 != v0) {
            for g1 in 0..g {
                let r = select_region(self.table, v0, v1, g1, self.options.selection)?;
                let mut key: Vec<u16> = r.patches.iter().map(|&p| p as u16).collect();
                key.sort_unstable();
                let next = regions.len() as u32;
                let idx = *region_index.entry(key.clone()).or_insert_with(|| {
                    regions.push(key);
                    next
                });
                region_of[v1 * g + g1] = idx;
            }
        }
        let mut needed = vec![false; g];
        for r in &regions {
            for &p in r {
                needed[p as usize] = true;
            }
        }
        let terms = ObservedTerms::build(c, self.cache, observed, &nbr, v0, &needed);
        let weights: Vec<SimplexWeights> = regions
            .par_iter()
            .map(|r| {
                let region: Vec<usize> = r.iter().map(|&p| p as usize).collect();
                let problem = terms.problem(&region)?;
                Ok(solve_simplex_least_squares(&problem, &self.options.solver)?.weights)
            })
            .collect::<Result<_>>()?;

        let mut desc = MultiViewDescriptor::zeros(v, g, d);
        desc.view_mut(v0).copy_from_slice(observed.as_slice());
        let slabs: Vec<(usize, Vec<T>)> = (0..v)
            .into_par_iter()
            .filter(|&v1| v1 != v0)
            .map(|v1| {
                let mut slab = Vec::with_capacity(g * d);
                let mut acc = vec![0.0f64; d];
                for g1 in 0..g {
                    let w = &weights[region_of[v1 * g + g1] as usize];
                    combine_into(c, &nbr, w.as_slice(), v1, g1, &mut acc);
                    slab.extend(acc.iter().map(|&a| T::from_f64(a)));
                }
                (v1, slab)
            })
            .collect();
        for (v1, slab) in slabs {
            desc.view_mut(v1).copy_from_slice(&slab);
        }
        let provenance = self.options.keep_provenance.then_some(Provenance {
            neighborhood: nbr,
            regions,
            region_of,
        });
        Ok(SynthesizedDescriptor {
            descriptor: desc,
            observed_view: v0,
            provenance,
        })
    }
}

/// One-shot synthesis of the full V × G × d descriptor from one observed view.
pub fn synthesize_descriptor<T: Scalar>(
    c: &ShapeCollection<T>,
    table: &SuitabilityTable,
    observed: &FeatureBlock<T>,
    v0: usize,
    selection: RegionSelection,
    k: usize,
) -> Result<SynthesizedDescriptor<T>> {
    let options = SynthesisOptions {
        k,
        selection,
        ..SynthesisOptions::default()
    };
    Synthesizer::new(c, table, options)?.synthesize(observed, v0)
}
