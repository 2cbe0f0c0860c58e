//! Surrogate suitability: how well agreement of two shapes' visual words at
//! one patch predicts their agreement at another patch on another view.
//!
//! For codes `A` at the observed patch and `B` at the novel patch,
//!
//! ```text
//! γ̂ = ln Σ_(a,b) N_ab (N_ab - 1) / N²  -  ln Σ_a N_a (N_a - 1) / N²
//! ```
//!
//! i.e. the log of the empirical pairwise collision rate of the joint code
//! over that of the conditioning (observed) code. The plug-in terms keep the
//! N² denominator, so each is biased by a factor (N - 1)/N; the factor is the
//! same for both terms and cancels in the difference of logs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PatchAddress;
use crate::vocabulary::QuantizedCollection;

/// Ordered-pair collision count Σ n (n - 1) of a histogram.
pub fn collision_pairs(counts: &[u64]) -> u64 {
    counts.iter().map(|&n| n * n.saturating_sub(1)).sum()
}

/// Plug-in collision probability Σ_x N_x (N_x - 1) / N².
pub fn collision_sum(counts: &[u64], n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::arg("collision sum needs at least 2 samples"));
    }
    let total: u64 = counts.iter().sum();
    if total != n {
        return Err(Error::arg(format!(
            "histogram sums to {total}, expected {n}"
        )));
    }
    Ok(collision_pairs(counts) as f64 / (n as f64 * n as f64))
}

/// log of a ratio of two collision counts over the same sample size, with the
/// undefined / -inf conventions of the table.
#[inline]
fn gamma_from_pairs(joint: u64, marginal: u64, n: usize) -> Option<f64> {
    if marginal == 0 {
        return None;
    }
    if joint == 0 {
        return Some(f64::NEG_INFINITY);
    }
    let nn = n as f64 * n as f64;
    Some((joint as f64 / nn).ln() - (marginal as f64 / nn).ln())
}

/// Collision counts (joint, marginal-of-`a`) for paired code sequences.
pub fn paired_collisions(a: &[u32], b: &[u32]) -> (u64, u64) {
    use std::collections::HashMap;
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut marg: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *marg.entry(x).or_default() += 1;
    }
    let j: Vec<u64> = joint.into_values().collect();
    let m: Vec<u64> = marg.into_values().collect();
    (collision_pairs(&j), collision_pairs(&m))
}

/// γ̂ from two aligned code sequences. `None` when the observed code never
/// repeats (no conditioning event was sampled).
pub fn estimate_gamma_from_codes(observed: &[u32], novel: &[u32]) -> Result<Option<f64>> {
    if observed.len() != novel.len() {
        return Err(Error::arg("code sequences differ in length"));
    }
    if observed.len() < 2 {
        return Err(Error::arg("estimating suitability needs at least 2 shapes"));
    }
    let (j, m) = paired_collisions(observed, novel);
    Ok(gamma_from_pairs(j, m, observed.len()))
}

/// γ̂ of patch `g0` on view `v0` as a surrogate for patch `g1` on view `v1`.
pub fn estimate_gamma(
    qc: &QuantizedCollection,
    v0: usize,
    g0: usize,
    v1: usize,
    g1: usize,
) -> Result<Option<f64>> {
    check_view_patch(qc, v0, g0)?;
    check_view_patch(qc, v1, g1)?;
    estimate_gamma_from_codes(
        &qc.column(PatchAddress::new(v0, g0)),
        &qc.column(PatchAddress::new(v1, g1)),
    )
}

fn check_view_patch(qc: &QuantizedCollection, v: usize, g: usize) -> Result<()> {
    if v >= qc.views() {
        return Err(Error::Address {
            axis: "view",
            index: v,
            len: qc.views(),
        });
    }
    if g >= qc.patches() {
        return Err(Error::Address {
            axis: "patch",
            index: g,
            len: qc.patches(),
        });
    }
    Ok(())
}

/// γ̂ for every (observed view, novel view, observed patch, novel patch).
/// Undefined and zero-probability entries are both stored as -inf.
#[derive(Clone, Debug, PartialEq)]
pub struct SuitabilityTable {
    views: usize,
    patches: usize,
    gamma: Vec<f32>,
}

impl SuitabilityTable {
    pub fn from_raw(views: usize, patches: usize, gamma: Vec<f32>) -> Result<Self> {
        if gamma.len() != views * views * patches * patches {
            return Err(Error::arg(
                "suitability buffer does not match V x V x G x G",
            ));
        }
        if let Some(bad) = gamma.iter().find(|&&g| g.is_nan() || g > 0.0) {
            return Err(Error::arg(format!("suitability entry {bad} is not <= 0")));
        }
        Ok(Self {
            views,
            patches,
            gamma,
        })
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn raw(&self) -> &[f32] {
        &self.gamma
    }

    #[inline]
    fn offset(&self, v0: usize, v1: usize, g0: usize) -> usize {
        ((v0 * self.views + v1) * self.patches + g0) * self.patches
    }

    #[inline]
    pub fn get(&self, v0: usize, v1: usize, g0: usize, g1: usize) -> f32 {
        self.gamma[self.offset(v0, v1, g0) + g1]
    }

    /// γ̂ of every observed patch for the novel patch `(v1, g1)`.
    pub fn column(&self, v0: usize, v1: usize, g1: usize) -> Vec<f32> {
        (0..self.patches)
            .map(|g0| self.get(v0, v1, g0, g1))
            .collect()
    }
}

/// Fills the whole table. Parallel over (observed view, observed patch).
pub fn build_table(qc: &QuantizedCollection) -> Result<SuitabilityTable> {
    let (n, v, g, w) = (qc.shapes(), qc.views(), qc.patches(), qc.words());
    if n < 2 {
        return Err(Error::arg("estimating suitability needs at least 2 shapes"));
    }
    let rows: Vec<Vec<f32>> = (0..v * g)
        .into_par_iter()
        .map(|idx| {
            let (v0, g0) = (idx / g, idx % g);
            let observed = qc.column(PatchAddress::new(v0, g0));
            // Shapes grouped by observed code; singleton groups contribute no pairs.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&s| (observed[s], s));
            let mut groups: Vec<&[usize]> = Vec::new();
            let mut marginal = 0u64;
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && observed[order[end]] == observed[order[start]] {
                    end += 1;
                }
                let len = (end - start) as u64;
                if len > 1 {
                    marginal += len * (len - 1);
                    groups.push(&order[start..end]);
                }
                start = end;
            }
            let mut out = vec![f32::NEG_INFINITY; v * g];
            if marginal == 0 {
                return out;
            }
            let mut counts = vec![0u64; w];
            for v1 in 0..v {
                for g1 in 0..g {
                    let addr = PatchAddress::new(v1, g1);
                    let mut joint = 0u64;
                    for members in &groups {
                        for &s in members.iter() {
                            let c = &mut counts[qc.code(s, addr) as usize];
                            joint += 2 * *c;
                            *c += 1;
                        }
                        for &s in members.iter() {
                            counts[qc.code(s, addr) as usize] = 0;
                        }
                    }
                    if let Some(gamma) = gamma_from_pairs(joint, marginal, n) {
                        out[v1 * g + g1] = gamma as f32;
                    }
                }
            }
            out
        })
        .collect();
    let mut gamma = vec![f32::NEG_INFINITY; v * v * g * g];
    for (idx, row) in rows.into_iter().enumerate() {
        let (v0, g0) = (idx / g, idx % g);
        for v1 in 0..v {
            for g1 in 0..g {
                gamma[((v0 * v + v1) * g + g0) * g + g1] = row[v1 * g + g1];
            }
        }
    }
    SuitabilityTable::from_raw(v, g, gamma)
}

/// How a surrogate region is cut from the ranked observed patches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionSelection {
    /// The `k_p` patches with the highest γ̂.
    TopK(usize),
    /// Patches whose conditional agreement probability exp(γ̂) exceeds τ,
    /// i.e. γ̂ > ln τ. τ = 0 keeps every patch with finite γ̂.
    Threshold(f64),
}

impl Default for RegionSelection {
    fn default() -> Self {
        RegionSelection::TopK(9)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateRegion {
    pub observed_view: usize,
    /// Observed-view patches in descending γ̂ (ties by lower index).
    pub patches: Vec<usize>,
    pub selection: RegionSelection,
}

/// Picks the surrogate region on `v0` for novel patch `(v1, g1)`.
pub fn select_region(
    table: &SuitabilityTable,
    v0: usize,
    v1: usize,
    g1: usize,
    selection: RegionSelection,
) -> Result<SurrogateRegion> {
    if v0 >= table.views() || v1 >= table.views() {
        return Err(Error::Address {
            axis: "view",
            index: v0.max(v1),
            len: table.views(),
        });
    }
    if g1 >= table.patches() {
        return Err(Error::Address {
            axis: "patch",
            index: g1,
            len: table.patches(),
        });
    }
    let mut ranked: Vec<(f32, usize)> = (0..table.patches())
        .map(|g0| (table.get(v0, v1, g0, g1), g0))
        .filter(|(gamma, _)| gamma.is_finite())
        .collect();
    if ranked.is_empty() {
        return Err(Error::Estimation(format!(
            "no defined suitability for patch {g1} on view {v1} from view {v0}; \
             use more shapes or a smaller vocabulary"
        )));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let patches: Vec<usize> = match selection {
        RegionSelection::TopK(k) => {
            if k == 0 {
                return Err(Error::arg("k_p must be at least 1"));
            }
            ranked.iter().take(k).map(|&(_, g)| g).collect()
        }
        RegionSelection::Threshold(tau) => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::arg("threshold must lie in [0, 1]"));
            }
            let cut = tau.ln();
            let kept: Vec<usize> = ranked
                .iter()
                .filter(|&&(gamma, _)| f64::from(gamma) > cut)
                .map(|&(_, g)| g)
                .collect();
            if kept.is_empty() {
                vec![ranked[0].1]
            } else {
                kept
            }
        }
    };
    Ok(SurrogateRegion {
        observed_view: v0,
        patches,
        selection,
    })
}
