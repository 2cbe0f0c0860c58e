//! View-agnostic distance, retrieval evaluation and the weight
//! transferability experiment.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FeatureBlock, PatchAddress, ShapeCollection};
use crate::scalar::{sq_dist, sq_norm, Scalar};
use crate::simplex::SolverOptions;
use crate::surrogate::{select_region, RegionSelection, SuitabilityTable};
use crate::synthesis::{
    find_neighborhood_excluding, fit_region_weights, PatchGramCache, SynthesizedDescriptor,
};

/// L2 distance between two full multi-view descriptors, views aligned by index.
pub fn vad<T: Scalar>(a: &SynthesizedDescriptor<T>, b: &SynthesizedDescriptor<T>) -> Result<f64> {
    if a.descriptor.dims() != b.descriptor.dims() {
        return Err(Error::arg(format!(
            "descriptor dimensions differ: {:?} vs {:?}",
            a.descriptor.dims(),
            b.descriptor.dims()
        )));
    }
    Ok(sq_dist(a.descriptor.as_slice(), b.descriptor.as_slice()).sqrt())
}

/// L2 distance between the two inputs' own observed-view features.
pub fn baseline_l2<T: Scalar>(
    a: &SynthesizedDescriptor<T>,
    b: &SynthesizedDescriptor<T>,
) -> Result<f64> {
    let (x, y) = (a.observed(), b.observed());
    if x.len() != y.len() {
        return Err(Error::arg("observed feature blocks differ in size"));
    }
    Ok(sq_dist(x, y).sqrt())
}

/// Patches related to a user-selected region on the observed view: every
/// `(v1, g1)` on another view whose surrogate region touches the user region,
/// plus the user region itself.
pub fn part_related_patches(
    table: &SuitabilityTable,
    v0: usize,
    user_region: &[usize],
    selection: RegionSelection,
) -> Result<BTreeSet<PatchAddress>> {
    if user_region.is_empty() {
        return Err(Error::arg("part region must contain at least one patch"));
    }
    if let Some(&bad) = user_region.iter().find(|&&g| g >= table.patches()) {
        return Err(Error::Address {
            axis: "patch",
            index: bad,
            len: table.patches(),
        });
    }
    let user: BTreeSet<usize> = user_region.iter().copied().collect();
    let mut related: BTreeSet<PatchAddress> =
        user.iter().map(|&g| PatchAddress::new(v0, g)).collect();
    for v1 in (0..table.views()).filter(|&v1| v1 != v0) {
        for g1 in 0..table.patches() {
            let region = select_region(table, v0, v1, g1, selection)?;
            if region.patches.iter().any(|g| user.contains(g)) {
                related.insert(PatchAddress::new(v1, g1));
            }
        }
    }
    Ok(related)
}

/// L2 distance restricted to the given patch addresses.
pub fn part_vad<T: Scalar>(
    a: &SynthesizedDescriptor<T>,
    b: &SynthesizedDescriptor<T>,
    related: &BTreeSet<PatchAddress>,
) -> Result<f64> {
    if a.descriptor.dims() != b.descriptor.dims() {
        return Err(Error::arg("descriptor dimensions differ"));
    }
    let (v, g, _) = a.descriptor.dims();
    let mut acc = 0.0;
    for &addr in related {
        if addr.view >= v || addr.patch >= g {
            return Err(Error::Address {
                axis: if addr.view >= v { "view" } else { "patch" },
                index: if addr.view >= v {
                    addr.view
                } else {
                    addr.patch
                },
                len: if addr.view >= v { v } else { g },
            });
        }
        acc += sq_dist(a.descriptor.patch(addr), b.descriptor.patch(addr));
    }
    Ok(acc.sqrt())
}

#[derive(Clone, Debug)]
pub struct LabeledItem<T: Scalar = f32> {
    pub id: String,
    pub descriptor: SynthesizedDescriptor<T>,
    pub labels: BTreeSet<String>,
}

/// Retrieval corpus: each item is queried against all the others.
#[derive(Clone, Debug, Default)]
pub struct LabeledImageSet<T: Scalar = f32> {
    items: Vec<LabeledItem<T>>,
}

impl<T: Scalar> LabeledImageSet<T> {
    pub fn new(items: Vec<LabeledItem<T>>) -> Result<Self> {
        if let Some(first) = items.first() {
            let dims = first.descriptor.descriptor.dims();
            for it in &items {
                if it.descriptor.descriptor.dims() != dims {
                    return Err(Error::arg(format!(
                        "item {} has mismatched dimensions",
                        it.id
                    )));
                }
                if it.labels.is_empty() {
                    return Err(Error::arg(format!("item {} has no labels", it.id)));
                }
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[LabeledItem<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn relevant(&self, q: usize, c: usize) -> bool {
        !self.items[q].labels.is_disjoint(&self.items[c].labels)
    }
}

/// Distance used to rank candidates.
#[derive(Clone, Debug)]
pub enum Distance<'a> {
    Vad,
    /// L2 over observed-view features only.
    BaselineL2,
    /// L2 over patches related to `region` on each query's observed view.
    Part {
        table: &'a SuitabilityTable,
        region: Vec<usize>,
        selection: RegionSelection,
    },
}

/// Precision/recall points (recall non-decreasing) with trapezoidal area.
#[derive(Clone, Debug, PartialEq)]
pub struct PRCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl PRCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for &(r, p) in &self.points {
            let _ = writeln!(out, "{r},{p}");
        }
        out
    }
}

/// Pooled precision-recall curve over `(distance, relevant)` pairs.
///
/// Pairs are sorted by ascending distance; equal distances form one block
/// that enters the ranked list together. The curve starts at recall 0 with
/// the precision of the first block. Only the first and last point of each
/// recall level are kept, which leaves the trapezoidal area unchanged.
pub fn pooled_pr_curve(pairs: &mut [(f64, bool)]) -> Result<PRCurve> {
    if pairs.iter().any(|p| p.0.is_nan()) {
        return Err(Error::Numeric("NaN distance in retrieval results".into()));
    }
    let total_relevant = pairs.iter().filter(|p| p.1).count();
    if total_relevant == 0 {
        return Err(Error::arg(
            "no relevant pairs; precision-recall is undefined",
        ));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut raw: Vec<(f64, f64)> = Vec::new();
    let (mut seen, mut hits) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            seen += 1;
            if pairs[j].1 {
                hits += 1;
            }
            j += 1;
        }
        raw.push((
            hits as f64 / total_relevant as f64,
            hits as f64 / seen as f64,
        ));
        i = j;
    }
    let mut points = vec![(0.0, raw[0].1)];
    for (idx, &pt) in raw.iter().enumerate() {
        let next_same = raw.get(idx + 1).is_some_and(|n| n.0 == pt.0);
        let prev_same = points.last().is_some_and(|p: &(f64, f64)| p.0 == pt.0);
        if !(prev_same && next_same) {
            points.push(pt);
        }
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum();
    Ok(PRCurve { points, auc })
}

/// One candidate in a query's ranked list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedCandidate {
    pub candidate: usize,
    pub distance: f64,
    /// Competition rank: tied distances share the lower rank.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    /// Per query: candidates by ascending distance (ties by index).
    pub rankings: Vec<Vec<RankedCandidate>>,
    /// `None` when no query has a relevant candidate.
    pub curve: Option<PRCurve>,
}

impl RetrievalResult {
    /// `query_id  rank  candidate_id  distance` rows.
    pub fn rankings_tsv<T: Scalar>(&self, set: &LabeledImageSet<T>) -> String {
        let mut out = String::from("query\trank\tcandidate\tdistance\n");
        for (q, ranking) in self.rankings.iter().enumerate() {
            for c in ranking {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    set.items[q].id, c.rank, set.items[c.candidate].id, c.distance
                );
            }
        }
        out
    }
}

/// Competition ranks for distances already sorted ascending.
fn competition_ranks(sorted: &[(f64, usize)]) -> Vec<RankedCandidate> {
    let mut out = Vec::with_capacity(sorted.len());
    let mut rank = 1;
    for (i, &(d, c)) in sorted.iter().enumerate() {
        if i > 0 && d != sorted[i - 1].0 {
            rank = i + 1;
        }
        out.push(RankedCandidate {
            candidate: c,
            distance: d,
            rank,
        });
    }
    out
}

/// All pairwise L2 distances between equal-length rows, row-major `n × n`.
///
/// Uses `‖a‖² + ‖b‖² - 2⟨a, b⟩` with blocked f64 matrix products.
pub fn pairwise_distances<T: Scalar>(rows: &[&[T]]) -> Vec<f64> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = rows[0].len();
    let norms: Vec<f64> = rows.iter().map(|r| sq_norm(r)).collect();
    let mut out = vec![0.0; n * n];
    // Keep each f64 block around 128 MB.
    let block = ((16usize << 20) / dim.max(1)).clamp(1, n);
    let to_block = |lo: usize, hi: usize| {
        let mut m = Array2::<f64>::zeros((hi - lo, dim));
        for (r, row) in rows[lo..hi].iter().enumerate() {
            for (dst, &x) in m.row_mut(r).iter_mut().zip(row.iter()) {
                *dst = x.as_f64();
            }
        }
        m
    };
    let mut i0 = 0;
    while i0 < n {
        let i1 = (i0 + block).min(n);
        let a = to_block(i0, i1);
        let mut j0 = i0;
        while j0 < n {
            let j1 = (j0 + block).min(n);
            let b = if j0 == i0 {
                a.clone()
            } else {
                to_block(j0, j1)
            };
            let prod = a.dot(&b.t());
            for i in i0..i1 {
                for j in j0.max(i)..j1 {
                    let d2 = norms[i] + norms[j] - 2.0 * prod[[i - i0, j - j0]];
                    let d = if i == j { 0.0 } else { d2.max(0.0).sqrt() };
                    out[i * n + j] = d;
                    out[j * n + i] = d;
                }
            }
            j0 = j1;
        }
        i0 = i1;
    }
    out
}

/// Leave-query-out retrieval: every item is a query against all others.
pub fn run_retrieval<T: Scalar>(
    set: &LabeledImageSet<T>,
    distance: &Distance<'_>,
) -> Result<RetrievalResult> {
    let n = set.len();
    if n < 2 {
        return Err(Error::arg("retrieval needs at least 2 items"));
    }
    let matrix: Vec<f64> = match distance {
        Distance::Vad => {
            let rows: Vec<&[T]> = set
                .items
                .iter()
                .map(|it| it.descriptor.descriptor.as_slice())
                .collect();
            pairwise_distances(&rows)
        }
        Distance::BaselineL2 => {
            let rows: Vec<&[T]> = set
                .items
                .iter()
                .map(|it| it.descriptor.observed())
                .collect();
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(Error::arg("observed feature blocks differ in size"));
            }
            pairwise_distances(&rows)
        }
        Distance::Part {
            table,
            region,
            selection,
        } => {
            let mut related_by_view: HashMap<usize, BTreeSet<PatchAddress>> = HashMap::new();
            for it in &set.items {
                let v0 = it.descriptor.observed_view;
                if let std::collections::hash_map::Entry::Vacant(e) = related_by_view.entry(v0) {
                    e.insert(part_related_patches(table, v0, region, *selection)?);
                }
            }
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|q| {
                    let related = &related_by_view[&set.items[q].descriptor.observed_view];
                    (0..n)
                        .map(|c| {
                            if c == q {
                                Ok(0.0)
                            } else {
                                part_vad(
                                    &set.items[q].descriptor,
                                    &set.items[c].descriptor,
                                    related,
                                )
                            }
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            rows.concat()
        }
    };
    let mut pairs = Vec::with_capacity(n * (n - 1));
    let mut rankings = Vec::with_capacity(n);
    for q in 0..n {
        let mut sorted: Vec<(f64, usize)> = (0..n)
            .filter(|&c| c != q)
            .map(|c| (matrix[q * n + c], c))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, c) in &sorted {
            pairs.push((d, set.relevant(q, c)));
        }
        rankings.push(competition_ranks(&sorted));
    }
    let curve = if pairs.iter().any(|p| p.1) {
        Some(pooled_pr_curve(&mut pairs)?)
    } else {
        None
    };
    Ok(RetrievalResult { rankings, curve })
}

/// Row of a rankings TSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingRow {
    pub query: String,
    pub rank: usize,
    pub candidate: String,
    pub distance: f64,
}

pub fn parse_rankings_tsv(text: &str) -> Result<Vec<RankingRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("query\t")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::format(format!(
                "rankings line {}: expected 4 fields",
                i + 1
            )));
        }
        let bad = |what: &str| Error::format(format!("rankings line {}: bad {what}", i + 1));
        rows.push(RankingRow {
            query: f[0].to_string(),
            rank: f[1].parse().map_err(|_| bad("rank"))?,
            candidate: f[2].to_string(),
            distance: f[3].parse().map_err(|_| bad("distance"))?,
        });
    }
    Ok(rows)
}

/// Pooled PR curve from saved rankings and an id → labels map.
pub fn evaluate_rankings(
    rows: &[RankingRow],
    labels: &HashMap<String, BTreeSet<String>>,
) -> Result<PRCurve> {
    let lookup = |id: &str| {
        labels
            .get(id)
            .ok_or_else(|| Error::format(format!("no labels for id {id:?}")))
    };
    let mut pairs = Vec::with_capacity(rows.len());
    for r in rows {
        let rel = !lookup(&r.query)?.is_disjoint(lookup(&r.candidate)?);
        pairs.push((r.distance, rel));
    }
    pooled_pr_curve(&mut pairs)
}

/// Mean transferability ranks, `V × V`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub views: usize,
    pub avg_rank: Vec<f64>,
}

impl TransferMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.avg_rank[i * self.views + j]
    }

    pub fn diagonal_mean(&self) -> f64 {
        (0..self.views).map(|i| self.get(i, i)).sum::<f64>() / self.views as f64
    }

    pub fn mean(&self) -> f64 {
        self.avg_rank.iter().sum::<f64>() / self.avg_rank.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.views {
            let row: Vec<String> = (0..self.views)
                .map(|j| format!("{}", self.get(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// For every shape `s` and view pair `(i, j)`: fit image-wide weights on view
/// `i` from the other shapes, transfer them to view `j`, and rank the
/// reconstruction's distance to `S[s, j]` among the distances of all other
/// shapes to `S[s, j]` (1 = closer than every other shape).
///
/// Returns one row-major `V × V` rank table per shape.
pub fn transferability_ranks<T: Scalar>(
    c: &ShapeCollection<T>,
    k: usize,
    solver: &SolverOptions,
    cache: Option<&PatchGramCache>,
) -> Result<Vec<Vec<f64>>> {
    let (n, v, g, d) = (c.len(), c.views(), c.patches(), c.feature_dim());
    let all_patches: Vec<usize> = (0..g).collect();
    // dist[j][s][m] = ‖S[m, j] - S[s, j]‖
    let per_view: Vec<Vec<f64>> = (0..v)
        .map(|j| {
            let rows: Vec<&[T]> = (0..n).map(|m| c.slab(m, j)).collect();
            pairwise_distances(&rows)
        })
        .collect();
    let per_shape: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut ranks = vec![0.0; v * v];
            for i in 0..v {
                let observed = FeatureBlock::new(g, d, c.slab(s, i).to_vec())?;
                let nbr = find_neighborhood_excluding(c, &observed, i, k, &[s])?;
                let sol = fit_region_weights(c, cache, &observed, &nbr, i, &all_patches, solver)?;
                let w = sol.weights.as_slice();
                for j in 0..v {
                    let truth = c.slab(s, j);
                    let mut err = 0.0;
                    let mut acc = vec![0.0f64; g * d];
                    for (&m, &wm) in nbr.shape_indices.iter().zip(w) {
                        if wm != 0.0 {
                            for (a, &x) in acc.iter_mut().zip(c.slab(m, j)) {
                                *a += wm * x.as_f64();
                            }
                        }
                    }
                    for (a, &t) in acc.iter().zip(truth) {
                        // Round through T so a perfect reconstruction compares equal.
                        let diff = T::from_f64(*a).as_f64() - t.as_f64();
                        err += diff * diff;
                    }
                    let err = err.sqrt();
                    let row = &per_view[j][s * n..(s + 1) * n];
                    let better = (0..n).filter(|&m| m != s && row[m] < err).count();
                    ranks[i * v + j] = (better + 1) as f64;
                }
            }
            Ok(ranks)
        })
        .collect::<Result<_>>()?;
    Ok(per_shape)
}

/// [`transferability_ranks`] averaged over shapes.
pub fn transferability_matrix<T: Scalar>(
    c: &ShapeCollection<T>,
    k: usize,
    solver: &SolverOptions,
    cache: Option<&PatchGramCache>,
) -> Result<TransferMatrix> {
    let (n, v) = (c.len(), c.views());
    let per_shape = transferability_ranks(c, k, solver, cache)?;
    let mut avg = vec![0.0; v * v];
    for r in &per_shape {
        avg.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    avg.iter_mut().for_each(|a| *a /= n as f64);
    Ok(TransferMatrix {
        views: v,
        avg_rank: avg,
    })
}
