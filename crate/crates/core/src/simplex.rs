//! Least squares over the probability simplex.
//!
//! Problems are held in Gram form: `f(w) = wᵀHw - 2cᵀw + r`, with `H = AᵀA`,
//! `c = Aᵀb` and `r = bᵀb`, which is `‖Aw - b‖²` for the stacked system.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Tolerance on the simplex invariants.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::arg("simplex weights cannot be empty"));
        }
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Numeric("simplex weights must be nonnegative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Numeric(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, j: usize) -> Self {
        let mut w = vec![0.0; k];
        w[j] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection onto `{w >= 0, Σw = 1}` by sort-and-threshold.
pub fn project_simplex<F: Float>(y: &[F]) -> Vec<F> {
    if y.is_empty() {
        return Vec::new();
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = F::zero();
    let mut theta = F::zero();
    let mut count = F::zero();
    for &u in &sorted {
        cumsum = cumsum + u;
        count = count + F::one();
        let t = (cumsum - F::one()) / count;
        if u - t > F::zero() {
            theta = t;
        } else {
            break;
        }
    }
    y.iter().map(|&v| (v - theta).max(F::zero())).collect()
}

/// [`project_simplex`] wrapped in the validated weight type.
pub fn project_to_weights(y: &[f64]) -> Result<SimplexWeights> {
    if y.is_empty() {
        return Err(Error::arg("cannot project an empty vector"));
    }
    let mut w = project_simplex(y);
    // Renormalise away the last few ulps so the invariant holds exactly enough.
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    SimplexWeights::new(w)
}

/// `wᵀHw - 2cᵀw + r` in Gram form.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexLeastSquares {
    k: usize,
    gram: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl SimplexLeastSquares {
    pub fn new(k: usize, gram: Vec<f64>, linear: Vec<f64>, constant: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("problem needs at least one weight"));
        }
        if gram.len() != k * k || linear.len() != k {
            return Err(Error::arg("Gram matrix / linear term size mismatch"));
        }
        if gram.iter().chain(&linear).any(|x| !x.is_finite()) || !constant.is_finite() {
            return Err(Error::Numeric("non-finite least-squares input".into()));
        }
        Ok(Self {
            k,
            gram,
            linear,
            constant,
        })
    }

    /// Stacks blocks `(columns, target)`: each block contributes `‖[a_1 .. a_k] w - b‖²`.
    pub fn from_blocks<T: Scalar>(blocks: &[(Vec<&[T]>, &[T])]) -> Result<Self> {
        let k = blocks
            .first()
            .map(|(cols, _)| cols.len())
            .ok_or_else(|| Error::arg("no blocks given"))?;
        let mut gram = vec![0.0; k * k];
        let mut linear = vec![0.0; k];
        let mut constant = 0.0;
        for (cols, b) in blocks {
            if cols.len() != k || cols.iter().any(|c| c.len() != b.len()) {
                return Err(Error::arg("inconsistent block dimensions"));
            }
            for i in 0..k {
                linear[i] += dot(cols[i], b);
                for j in i..k {
                    let v = dot(cols[i], cols[j]);
                    gram[i * k + j] += v;
                    if i != j {
                        gram[j * k + i] += v;
                    }
                }
            }
            constant += dot(b, b);
        }
        Self::new(k, gram, linear, constant)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    fn mul(&self, w: &[f64], out: &mut [f64]) {
        for (row, o) in self.gram.chunks_exact(self.k).zip(out.iter_mut()) {
            *o = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }

    /// Objective value at `w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let mut hw = vec![0.0; self.k];
        self.mul(w, &mut hw);
        self.objective_with(w, &hw)
    }

    fn objective_with(&self, w: &[f64], hw: &[f64]) -> f64 {
        let quad: f64 = w.iter().zip(hw).map(|(a, b)| a * b).sum();
        let lin: f64 = w.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        quad - 2.0 * lin + self.constant
    }

    /// Largest eigenvalue of H by power iteration from the uniform vector.
    pub fn largest_eigenvalue(&self, iterations: usize) -> f64 {
        let k = self.k;
        let mut v = vec![1.0 / (k as f64).sqrt(); k];
        let mut hv = vec![0.0; k];
        let mut lambda = 0.0;
        for _ in 0..iterations {
            self.mul(&v, &mut hv);
            let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&hv).for_each(|(a, b)| *a = b / norm);
        }
        lambda
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction of its previous value.
    pub relative_tolerance: f64,
    pub power_iterations: usize,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            relative_tolerance: 1e-10,
            power_iterations: 50,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSolution {
    pub weights: SimplexWeights,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration (when requested); never increases.
    pub history: Vec<f64>,
}

/// Accelerated projected gradient over the simplex, started at the uniform
/// vector.
///
/// The step is 1/L with L the power-iteration estimate of λ_max(H), doubled
/// whenever the quadratic upper bound fails along a step (the estimate
/// approaches λ_max from below). A momentum step that would raise the
/// objective is rejected and momentum restarts from the current iterate, so
/// the recorded objective is monotone.
pub fn solve_simplex_least_squares(
    problem: &SimplexLeastSquares,
    options: &SolverOptions,
) -> Result<WeightSolution> {
    let k = problem.k;
    let mut x = vec![1.0 / k as f64; k];
    let mut hx = vec![0.0; k];
    problem.mul(&x, &mut hx);
    let mut fx = problem.objective_with(&x, &hx);
    let mut history = Vec::new();
    let finish = |x: Vec<f64>, fx: f64, iterations: usize, history: Vec<f64>| {
        Ok(WeightSolution {
            weights: project_to_weights(&x)?,
            objective: fx,
            iterations,
            history,
        })
    };
    if k == 1 {
        return finish(x, fx, 0, history);
    }
    let mut lip = problem.largest_eigenvalue(options.power_iterations);
    if !(lip > 0.0) {
        // H = 0: the objective is linear in w; a single projected step from
        // uniform along c is still handled by the main loop with a unit scale.
        lip = 1.0;
    }

    let mut x_prev = x.clone();
    let mut hx_prev = hx.clone();
    let mut t = 1.0f64;
    let mut beta = 0.0f64;
    let mut y = vec![0.0; k];
    let mut hy = vec![0.0; k];
    let mut z_in = vec![0.0; k];
    let mut hz = vec![0.0; k];
    let mut iterations = 0;

    while iterations < options.max_iterations {
        for i in 0..k {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
            hy[i] = hx[i] + beta * (hx[i] - hx_prev[i]);
        }
        let (z, fz) = loop {
            for i in 0..k {
                z_in[i] = y[i] - (hy[i] - problem.linear[i]) / lip;
            }
            let z = project_simplex(&z_in);
            problem.mul(&z, &mut hz);
            // Quadratic upper bound along d = z - y: dᵀHd <= L dᵀd.
            let mut dhd = 0.0;
            let mut dd = 0.0;
            for i in 0..k {
                let d = z[i] - y[i];
                dhd += d * (hz[i] - hy[i]);
                dd += d * d;
            }
            if dhd <= lip * dd * (1.0 + 1e-12) || dd == 0.0 {
                let fz = problem.objective_with(&z, &hz);
                break (z, fz);
            }
            lip *= 2.0;
        };
        iterations += 1;
        if !fz.is_finite() {
            return Err(Error::Numeric("solver objective became non-finite".into()));
        }
        if fz <= fx {
            let decrease = fx - fz;
            std::mem::swap(&mut x_prev, &mut x);
            std::mem::swap(&mut hx_prev, &mut hx);
            x = z;
            hx.copy_from_slice(&hz);
            let f_before = fx;
            fx = fz;
            if options.record_history {
                history.push(fx);
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            beta = (t - 1.0) / t_next;
            t = t_next;
            if decrease <= options.relative_tolerance * f_before.abs() {
                break;
            }
        } else {
            if options.record_history {
                history.push(fx);
            }
            if beta == 0.0 {
                // A plain gradient step from x failed to descend: x is optimal
                // up to rounding.
                break;
            }
            x_prev.copy_from_slice(&x);
            hx_prev.copy_from_slice(&hx);
            beta = 0.0;
            t = 1.0;
        }
    }
    finish(x, fx, iterations, history)
}
