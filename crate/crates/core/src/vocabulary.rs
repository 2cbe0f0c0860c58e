//! Visual vocabulary: k-means codebook over patch features and the discrete
//! code tensor used by the surrogate-suitability estimator.
//!
//! One codebook is shared by all views and patch positions so that codes at
//! different patches live in a common alphabet.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{PatchAddress, ShapeCollection};
use crate::scalar::{sq_dist, Scalar};

pub const DEFAULT_WORDS: usize = 256;
pub const DEFAULT_SAMPLE_CAP: usize = 100_000;
pub const MAX_LLOYD_ITERATIONS: usize = 100;

/// W × d matrix of cluster centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook<T: Scalar = f32> {
    words: usize,
    dim: usize,
    centers: Vec<T>,
    seed: u64,
}

impl<T: Scalar> Codebook<T> {
    pub fn from_centers(words: usize, dim: usize, centers: Vec<T>, seed: u64) -> Result<Self> {
        if words < 2 {
            return Err(Error::arg("a codebook needs at least 2 words"));
        }
        if dim == 0 || centers.len() != words * dim {
            return Err(Error::arg("codebook center buffer does not match W x d"));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite codebook center".into()));
        }
        let cb = Self {
            words,
            dim,
            centers,
            seed,
        };
        for a in 0..words {
            for b in a + 1..words {
                if cb.center(a) == cb.center(b) {
                    return Err(Error::arg(format!("codebook centers {a} and {b} coincide")));
                }
            }
        }
        Ok(cb)
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn center(&self, w: usize) -> &[T] {
        &self.centers[w * self.dim..(w + 1) * self.dim]
    }

    /// Nearest center by squared L2; ties go to the lowest index.
    pub fn assign(&self, x: &[T]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "feature has dimension {}, codebook expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(nearest(&self.centers, self.dim, x).0)
    }
}

/// Index and squared distance of the nearest row of `centers`, lowest index on ties.
///
/// Partial sums are abandoned once they exceed the best distance so far;
/// this never changes the result.
fn nearest<T: Scalar>(centers: &[T], dim: usize, x: &[T]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (w, c) in centers.chunks_exact(dim).enumerate() {
        let mut acc = 0.0;
        let mut pruned = false;
        for (xs, cs) in x.chunks(16).zip(c.chunks(16)) {
            acc += sq_dist(xs, cs);
            if acc > best.1 {
                pruned = true;
                break;
            }
        }
        if !pruned && acc < best.1 {
            best = (w, acc);
        }
    }
    best
}

/// Diagnostics from one k-means run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    /// Sum of squared distances to the assigned center after each assignment step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// `samples` is an M × `dim` row-major matrix. Runs until no assignment changes
/// or [`MAX_LLOYD_ITERATIONS`] updates; empty clusters are re-seeded to the
/// point farthest from its current center.
pub fn train_codebook<T: Scalar>(
    samples: &[T],
    dim: usize,
    words: usize,
    seed: u64,
) -> Result<Codebook<T>> {
    train_codebook_with_report(samples, dim, words, seed).map(|(cb, _)| cb)
}

pub fn train_codebook_with_report<T: Scalar>(
    samples: &[T],
    dim: usize,
    words: usize,
    seed: u64,
) -> Result<(Codebook<T>, TrainReport)> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::arg(
            "sample buffer is not a multiple of the feature dimension",
        ));
    }
    let m = samples.len() / dim;
    if words < 2 {
        return Err(Error::arg("a codebook needs at least 2 words"));
    }
    if m < words {
        return Err(Error::arg(format!(
            "k-means needs at least W = {words} samples, got {m}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite training sample".into()));
    }
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<f64> = Vec::with_capacity(words * dim);
    let first = rng.gen_range(0..m);
    centers.extend(row(first).iter().map(|x| x.as_f64()));
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..words {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::arg(format!(
                "fewer than W = {words} distinct samples; cannot seed the codebook"
            )));
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = m - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        let start = centers.len();
        centers.extend(row(pick).iter().map(|x| x.as_f64()));
        let c: Vec<T> = centers[start..].iter().map(|&v| T::from_f64(v)).collect();
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(row(i), &c);
            if d < *slot {
                *slot = d;
            }
        }
    }
    let mut centers_t: Vec<T> = centers.iter().map(|&v| T::from_f64(v)).collect();

    // Lloyd iterations with Hamerly bounds. Bounds only skip points whose
    // assignment provably cannot change.
    let mut assign = vec![0usize; m];
    let mut upper = vec![0.0f64; m];
    let mut lower = vec![0.0f64; m];
    for i in 0..m {
        let (a, u, l) = two_nearest(&centers_t, dim, row(i));
        assign[i] = a;
        upper[i] = u;
        lower[i] = l;
    }
    let objective_of = |centers_t: &[T], assign: &[usize]| -> f64 {
        (0..m)
            .map(|i| sq_dist(row(i), &centers_t[assign[i] * dim..(assign[i] + 1) * dim]))
            .sum()
    };
    let mut report = TrainReport {
        iterations: 0,
        objective: vec![objective_of(&centers_t, &assign)],
        converged: false,
    };

    for _ in 0..MAX_LLOYD_ITERATIONS {
        report.iterations += 1;
        // Update step in f64.
        let mut sums = vec![0.0f64; words * dim];
        let mut counts = vec![0usize; words];
        for i in 0..m {
            let a = assign[i];
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s += x.as_f64();
            }
        }
        let old = centers_t.clone();
        let mut taken = vec![false; m];
        let mut farthest: Option<Vec<(f64, usize)>> = None;
        for w in 0..words {
            if counts[w] > 0 {
                let inv = 1.0 / counts[w] as f64;
                for (c, s) in centers_t[w * dim..(w + 1) * dim]
                    .iter_mut()
                    .zip(&sums[w * dim..(w + 1) * dim])
                {
                    *c = T::from_f64(s * inv);
                }
            } else {
                let order = farthest.get_or_insert_with(|| {
                    let mut v: Vec<(f64, usize)> = (0..m)
                        .map(|i| {
                            (
                                sq_dist(row(i), &old[assign[i] * dim..(assign[i] + 1) * dim]),
                                i,
                            )
                        })
                        .collect();
                    v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    v
                });
                let &(_, i) = order
                    .iter()
                    .find(|(_, i)| !taken[*i])
                    .expect("more samples than words");
                taken[i] = true;
                centers_t[w * dim..(w + 1) * dim].copy_from_slice(row(i));
            }
        }
        let moved: Vec<f64> = (0..words)
            .map(|w| {
                sq_dist(
                    &old[w * dim..(w + 1) * dim],
                    &centers_t[w * dim..(w + 1) * dim],
                )
                .sqrt()
            })
            .collect();
        let (mut max1, mut max1_at, mut max2) = (0.0f64, usize::MAX, 0.0f64);
        for (w, &p) in moved.iter().enumerate() {
            if p > max1 {
                max2 = max1;
                max1 = p;
                max1_at = w;
            } else if p > max2 {
                max2 = p;
            }
        }
        let half_sep = half_separation(&centers_t, dim, words);

        let mut changed = false;
        for i in 0..m {
            let a = assign[i];
            upper[i] += moved[a];
            lower[i] -= if a == max1_at { max2 } else { max1 };
            let bound = half_sep[a].max(lower[i]);
            if upper[i] < bound {
                continue;
            }
            upper[i] = sq_dist(row(i), &centers_t[a * dim..(a + 1) * dim]).sqrt();
            if upper[i] < bound {
                continue;
            }
            let (na, u, l) = two_nearest(&centers_t, dim, row(i));
            if na != a {
                changed = true;
                assign[i] = na;
            }
            upper[i] = u;
            lower[i] = l;
        }
        report.objective.push(objective_of(&centers_t, &assign));
        if !changed {
            report.converged = true;
            break;
        }
    }

    let cb = Codebook::from_centers(words, dim, centers_t, seed)
        .map_err(|e| Error::Estimation(format!("k-means produced a degenerate codebook: {e}")))?;
    Ok((cb, report))
}

/// Nearest center (lowest index on ties) plus distances to the nearest and
/// second-nearest centers.
fn two_nearest<T: Scalar>(centers: &[T], dim: usize, x: &[T]) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0usize, f64::INFINITY, f64::INFINITY);
    for (w, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = w;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1.sqrt(), d2.sqrt())
}

fn half_separation<T: Scalar>(centers: &[T], dim: usize, words: usize) -> Vec<f64> {
    let mut s = vec![f64::INFINITY; words];
    for a in 0..words {
        for b in a + 1..words {
            let d = sq_dist(
                &centers[a * dim..(a + 1) * dim],
                &centers[b * dim..(b + 1) * dim],
            )
            .sqrt();
            s[a] = s[a].min(d);
            s[b] = s[b].min(d);
        }
    }
    s.iter_mut().for_each(|v| *v *= 0.5);
    s
}

/// Uniform subsample (without replacement) of all (shape, view, patch)
/// feature vectors, capped at `cap`, returned as a flat M × d matrix.
pub fn sample_features<T: Scalar>(c: &ShapeCollection<T>, cap: usize, seed: u64) -> Vec<T> {
    let total = c.len() * c.views() * c.patches();
    let d = c.feature_dim();
    let data = c.as_slice();
    if total <= cap {
        return data.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, total, cap).into_vec();
    picks.sort_unstable();
    let mut out = Vec::with_capacity(cap * d);
    for i in picks {
        out.extend_from_slice(&data[i * d..(i + 1) * d]);
    }
    out
}

/// Trains the shared codebook on a seeded subsample of the collection.
pub fn train_for_collection<T: Scalar>(
    c: &ShapeCollection<T>,
    words: usize,
    sample_cap: usize,
    seed: u64,
) -> Result<Codebook<T>> {
    let samples = sample_features(c, sample_cap, seed);
    train_codebook(&samples, c.feature_dim(), words, seed)
}

/// N × V × G tensor of visual-word indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedCollection {
    shapes: usize,
    views: usize,
    patches: usize,
    words: usize,
    codes: Vec<u32>,
}

impl QuantizedCollection {
    pub fn from_codes(
        shapes: usize,
        views: usize,
        patches: usize,
        words: usize,
        codes: Vec<u32>,
    ) -> Result<Self> {
        if codes.len() != shapes * views * patches {
            return Err(Error::arg("code buffer does not match N x V x G"));
        }
        if codes.iter().any(|&c| c as usize >= words) {
            return Err(Error::arg("code outside the vocabulary"));
        }
        Ok(Self {
            shapes,
            views,
            patches,
            words,
            codes,
        })
    }

    pub fn shapes(&self) -> usize {
        self.shapes
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn words(&self) -> usize {
        self.words
    }

    #[inline]
    pub fn code(&self, n: usize, addr: PatchAddress) -> u32 {
        self.codes[(n * self.views + addr.view) * self.patches + addr.patch]
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    /// Codes of every shape at one (view, patch) position.
    pub fn column(&self, addr: PatchAddress) -> Vec<u32> {
        (0..self.shapes).map(|n| self.code(n, addr)).collect()
    }
}

/// `codes[n, v, g] = assign(S[n, v, g])`.
pub fn quantize_collection<T: Scalar>(
    c: &ShapeCollection<T>,
    cb: &Codebook<T>,
) -> Result<QuantizedCollection> {
    if cb.dim() != c.feature_dim() {
        return Err(Error::arg(
            "codebook and collection feature dimensions differ",
        ));
    }
    let d = c.feature_dim();
    let codes: Vec<u32> = c
        .as_slice()
        .par_chunks(d)
        .map(|x| nearest(cb.centers(), d, x).0 as u32)
        .collect();
    QuantizedCollection::from_codes(c.len(), c.views(), c.patches(), cb.words(), codes)
}
