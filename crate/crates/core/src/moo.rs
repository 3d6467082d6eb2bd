//! Conflict-averse combination of per-modality backbone gradients.
//!
//! Each training step yields one flattened backbone gradient per available
//! modality. Instead of stepping along their plain average, the update
//! direction maximizes worst-case improvement subject to staying close to
//! the average: minimize over simplex weights w
//!
//!   F(w) = g_w . g_0 + beta * |g_0| * |g_w|,   g_w = sum_i w_i g_i
//!
//! where g_0 is the mean gradient, then step along
//!
//!   d = g_0 + (beta * |g_0| / |g_w|) * g_w.
//!
//! F is convex in w (linear term plus norm of a linear map), so a coarse
//! grid scan plus local refinement finds the global minimum.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TripError};

/// A backbone gradient flattened into one coordinate vector, with its L2
/// norm cached. Coordinates are always finite.
#[derive(Debug, Clone)]
pub struct FlatGradient {
    coords: Vec<f64>,
    norm: f64,
}

impl FlatGradient {
    pub fn from_coords(coords: Vec<f64>) -> Result<FlatGradient> {
        if coords.is_empty() {
            return Err(TripError::Contract("gradient must have at least one coordinate".into()));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(TripError::Numeric("non-finite gradient coordinate".into()));
        }
        let norm = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(FlatGradient { coords, norm })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dot(&self, other: &FlatGradient) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }
}

/// Point on the probability simplex: nonnegative, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<SimplexWeights> {
        if w.is_empty() {
            return Err(TripError::Contract("simplex weights must be nonempty".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            return Err(TripError::Contract(format!("weights must be nonnegative, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TripError::Contract(format!("weights must sum to 1, got {sum}")));
        }
        Ok(SimplexWeights(w.into_iter().map(|v| v.max(0.0)).collect()))
    }

    pub fn uniform(m: usize) -> SimplexWeights {
        SimplexWeights(vec![1.0 / m as f64; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Search strategy for the simplex minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Coarse grid scan, then derivative sign bisection: on the segment for
    /// two gradients, nested over the simplex for three.
    GridRefine,
    /// Projected gradient descent from the uniform point, no grid.
    ProjectedDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MooConfig {
    /// Conflict-aversion strength in [0, 1). 0 reduces the update to the
    /// plain mean gradient.
    pub beta: f64,
    pub solver: SolverKind,
    /// Step of the coarse simplex grid scan that seeds refinement.
    pub grid_resolution: f64,
    /// Iteration cap for the refinement stage.
    pub max_iters: usize,
    /// Relative objective tolerance that stops refinement.
    pub tol: f64,
}

impl Default for MooConfig {
    fn default() -> MooConfig {
        MooConfig {
            beta: 0.8,
            solver: SolverKind::GridRefine,
            grid_resolution: 0.01,
            max_iters: 200,
            tol: 1e-12,
        }
    }
}

impl MooConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(TripError::Config(format!("beta must be in [0, 1), got {}", self.beta)));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return Err(TripError::Config(format!(
                "grid_resolution must be in (0, 0.5], got {}",
                self.grid_resolution
            )));
        }
        if self.max_iters == 0 {
            return Err(TripError::Config("max_iters must be positive".into()));
        }
        if self.tol <= 0.0 {
            return Err(TripError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Result of the simplex search. `degenerate` is set when every input
/// gradient is exactly zero and the weights are uniform by convention.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub weights: SimplexWeights,
    pub degenerate: bool,
}

fn check_grads(grads: &[FlatGradient]) -> Result<usize> {
    if grads.is_empty() {
        return Err(TripError::Contract("need at least one gradient".into()));
    }
    let dim = grads[0].len();
    if grads.iter().any(|g| g.len() != dim) {
        return Err(TripError::Shape("gradients must share one dimensionality".into()));
    }
    Ok(dim)
}

/// Mean of the given gradients, coordinatewise.
pub fn average_gradient(grads: &[FlatGradient]) -> Result<FlatGradient> {
    let dim = check_grads(grads)?;
    let mut coords = vec![0.0; dim];
    for g in grads {
        for (acc, v) in coords.iter_mut().zip(g.coords()) {
            *acc += v;
        }
    }
    let inv = 1.0 / grads.len() as f64;
    for v in &mut coords {
        *v *= inv;
    }
    FlatGradient::from_coords(coords)
}

/// Weighted combination `sum_i w_i g_i`.
pub fn combine(grads: &[FlatGradient], weights: &SimplexWeights) -> Result<FlatGradient> {
    let dim = check_grads(grads)?;
    if weights.values().len() != grads.len() {
        return Err(TripError::Contract(format!(
            "{} weights for {} gradients",
            weights.values().len(),
            grads.len()
        )));
    }
    let mut coords = vec![0.0; dim];
    for (w, g) in weights.values().iter().zip(grads) {
        if *w == 0.0 {
            continue;
        }
        for (acc, v) in coords.iter_mut().zip(g.coords()) {
            *acc += w * v;
        }
    }
    FlatGradient::from_coords(coords)
}

/// The search objective, evaluated directly from the full vectors.
pub fn objective(
    weights: &SimplexWeights,
    grads: &[FlatGradient],
    g0: &FlatGradient,
    beta: f64,
) -> Result<f64> {
    let gw = combine(grads, weights)?;
    Ok(gw.dot(g0) + beta * g0.norm() * gw.norm())
}

/// Gram data the solver evaluates the objective from:
/// F(w) = sum_i w_i b_i + beta * n0 * sqrt(w' G w).
struct GramObjective {
    gram: Vec<Vec<f64>>,
    b: Vec<f64>,
    beta_n0: f64,
}

impl GramObjective {
    fn new(grads: &[FlatGradient], g0: &FlatGradient, beta: f64) -> GramObjective {
        let m = grads.len();
        let mut gram = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let v = grads[i].dot(&grads[j]);
                gram[i][j] = v;
                gram[j][i] = v;
            }
        }
        let b = grads.iter().map(|g| g.dot(g0)).collect();
        GramObjective { gram, b, beta_n0: beta * g0.norm() }
    }

    fn quad(&self, w: &[f64]) -> f64 {
        let m = w.len();
        let mut q = 0.0;
        for i in 0..m {
            for j in 0..m {
                q += w[i] * self.gram[i][j] * w[j];
            }
        }
        q.max(0.0)
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let linear: f64 = w.iter().zip(&self.b).map(|(wi, bi)| wi * bi).sum();
        linear + self.beta_n0 * self.quad(w).sqrt()
    }

    fn grad(&self, w: &[f64]) -> Vec<f64> {
        let m = w.len();
        let q = self.quad(w);
        let norm_gw = q.sqrt();
        let mut out = self.b.clone();
        if norm_gw > 0.0 {
            for i in 0..m {
                let gw_i: f64 = (0..m).map(|j| self.gram[i][j] * w[j]).sum();
                out[i] += self.beta_n0 * gw_i / norm_gw;
            }
        }
        out
    }

    /// Upper bound on |F| over the simplex: |F(w)| <= max|b| + beta_n0 *
    /// max|g_i|. Scales with the squared gradient magnitude, so tolerances
    /// built from it keep the solve covariant under gradient rescaling.
    fn magnitude(&self) -> f64 {
        let b_max = self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let diag_max = (0..self.b.len()).fold(0.0f64, |acc, i| acc.max(self.gram[i][i]));
        b_max + self.beta_n0 * diag_max.sqrt() + f64::MIN_POSITIVE
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut css = 0.0;
    let mut tau = 0.0;
    let mut rho = 0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            rho = j + 1;
            tau = t;
        }
    }
    debug_assert!(rho > 0);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Projected gradient descent with adaptive step. The step seed scales as
/// 1/|G| and the stopping threshold as |F|, so iterates, and therefore
/// solutions, are covariant under gradient rescaling.
fn projected_descent(
    gram: &GramObjective,
    start: Vec<f64>,
    start_f: f64,
    cfg: &MooConfig,
) -> (Vec<f64>, f64) {
    let scale: f64 =
        gram.gram.iter().flatten().map(|v| v.abs()).sum::<f64>() + f64::MIN_POSITIVE;
    let f_ref = gram.magnitude();
    let mut step = 1.0 / scale;
    let mut w = start;
    let mut fw = start_f;
    for _ in 0..cfg.max_iters {
        let g = gram.grad(&w);
        let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
        let projected = project_simplex(&trial);
        let f_new = gram.eval(&projected);
        if f_new < fw - cfg.tol * f_ref {
            w = projected;
            fw = f_new;
            step *= 1.2;
        } else if f_new < fw {
            w = projected;
            fw = f_new;
            break;
        } else {
            step *= 0.5;
            if step * scale < 1e-18 {
                break;
            }
        }
    }
    (w, fw)
}

/// Derivative of F at w along the feasible exchange that moves mass from
/// weight `take` to weight `give`. Where g_w vanishes the linear part is the
/// midpoint of the subdifferential, which is sign-correct whenever a side is.
fn exchange_deriv(gram: &GramObjective, w: &[f64], give: usize, take: usize) -> f64 {
    let lin = gram.b[give] - gram.b[take];
    let q = gram.quad(w);
    if q > 0.0 {
        let half: f64 = w
            .iter()
            .enumerate()
            .map(|(j, wj)| wj * (gram.gram[j][give] - gram.gram[j][take]))
            .sum();
        lin + gram.beta_n0 * half / q.sqrt()
    } else {
        lin
    }
}

/// Sign bisection for a nondecreasing derivative on [lo, hi]: returns the
/// zero crossing, or the boundary when the sign never flips.
fn bisect_sign(mut deriv: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    if deriv(lo) >= 0.0 {
        return lo;
    }
    if deriv(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of F along w = (t, 1-t) on [lo, hi], by bisection on the sign
/// of dF/dt. F is convex in t, so the derivative is nondecreasing and its
/// sign stays readable down to machine precision where plain value
/// comparisons already drown in rounding. That pins the minimizer tightly
/// enough for the update direction to be covariant under gradient rescaling.
fn bisect_min_t(gram: &GramObjective, lo: f64, hi: f64, iters: usize) -> f64 {
    bisect_sign(|t| exchange_deriv(gram, &[t, 1.0 - t], 0, 1), lo, hi, iters)
}

/// Minimizer of F over the full 3-simplex by nested sign bisection.
///
/// V(x) = min_y F(x, y, 1-x-y) is convex because partial minimization of a
/// jointly convex function is convex, and the inner solution's active
/// constraint tells which mass exchange realizes dV/dx: against the third
/// weight normally, against the second when the inner optimum is pinned at
/// y = 1-x, and the larger of the two at the x = 1 corner where reducing x
/// lets the inner problem pick the better recipient.
fn bisect_min_simplex3(gram: &GramObjective, iters: usize) -> (Vec<f64>, f64) {
    let inner = |x: f64| -> (f64, bool) {
        let hi = 1.0 - x;
        let d_at = |y: f64| exchange_deriv(gram, &[x, y, 1.0 - x - y], 1, 2);
        let mut pinned_upper = false;
        let y = bisect_sign(
            |y| {
                let d = d_at(y);
                if y >= hi && d <= 0.0 {
                    pinned_upper = true;
                }
                d
            },
            0.0,
            hi,
            iters,
        );
        (y, pinned_upper && y >= hi)
    };
    let outer = |x: f64| -> f64 {
        let (y, pinned_upper) = inner(x);
        let w = [x, y, 1.0 - x - y];
        if x >= 1.0 {
            exchange_deriv(gram, &w, 0, 1).max(exchange_deriv(gram, &w, 0, 2))
        } else if pinned_upper {
            exchange_deriv(gram, &w, 0, 1)
        } else {
            exchange_deriv(gram, &w, 0, 2)
        }
    };
    let x = bisect_sign(outer, 0.0, 1.0, iters);
    let (y, _) = inner(x);
    let w = vec![x, y, (1.0 - x - y).max(0.0)];
    let f = gram.eval(&w);
    (w, f)
}

/// Minimize the search objective over the simplex.
///
/// Strategy: scan a coarse grid, refine by derivative sign bisection (on the
/// bracketing segment for two gradients, nested over the simplex for three),
/// then snap to the uniform point whenever it is at least as good; symmetric
/// instances therefore return exactly uniform weights.
pub fn solve_simplex(
    grads: &[FlatGradient],
    g0: &FlatGradient,
    cfg: &MooConfig,
) -> Result<SimplexSolution> {
    cfg.validate()?;
    let m = grads.len();
    check_grads(grads)?;
    if g0.len() != grads[0].len() {
        return Err(TripError::Shape("mean gradient dimensionality mismatch".into()));
    }
    if m > 3 {
        return Err(TripError::Contract(format!("solver supports up to 3 gradients, got {m}")));
    }
    if grads.iter().all(|g| g.norm() == 0.0) {
        return Ok(SimplexSolution { weights: SimplexWeights::uniform(m), degenerate: true });
    }
    if m == 1 {
        return Ok(SimplexSolution { weights: SimplexWeights::new(vec![1.0])?, degenerate: false });
    }

    let gram = GramObjective::new(grads, g0, cfg.beta);
    let n = (1.0 / cfg.grid_resolution).ceil() as usize;
    let mut best_w;
    let mut best_f;

    match (cfg.solver, m) {
        (SolverKind::ProjectedDescent, _) => {
            best_w = vec![1.0 / m as f64; m];
            best_f = gram.eval(&best_w);
            (best_w, best_f) = projected_descent(&gram, best_w, best_f, cfg);
        }
        (SolverKind::GridRefine, 2) => {
            let eval_t = |t: f64| gram.eval(&[t, 1.0 - t]);
            let mut best_t = 0.0;
            best_f = eval_t(0.0);
            for i in 1..=n {
                let t = i as f64 / n as f64;
                let f = eval_t(t);
                if f < best_f {
                    best_f = f;
                    best_t = t;
                }
            }
            let step = 1.0 / n as f64;
            let lo = (best_t - step).max(0.0);
            let hi = (best_t + step).min(1.0);
            let t = bisect_min_t(&gram, lo, hi, cfg.max_iters);
            let f = eval_t(t);
            if f < best_f {
                best_f = f;
                best_t = t;
            }
            best_w = vec![best_t, 1.0 - best_t];
        }
        (SolverKind::GridRefine, _) => {
            best_w = vec![1.0, 0.0, 0.0];
            best_f = gram.eval(&best_w);
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let w = [
                        i as f64 / n as f64,
                        j as f64 / n as f64,
                        (n - i - j) as f64 / n as f64,
                    ];
                    let f = gram.eval(&w);
                    if f < best_f {
                        best_f = f;
                        best_w = w.to_vec();
                    }
                }
            }
            let (w, f) = bisect_min_simplex3(&gram, cfg.max_iters);
            if f < best_f {
                best_f = f;
                best_w = w;
            }
        }
    }

    // Snap to uniform when it does not lose: symmetric instances come out
    // exactly uniform instead of uniform plus solver noise. The margin is
    // covariant so rescaled instances snap identically.
    let uniform = vec![1.0 / m as f64; m];
    if gram.eval(&uniform) <= best_f + 1e-12 * gram.magnitude() {
        best_w = uniform;
    }

    // Clean tiny negatives from the refinement arithmetic and renormalize.
    let mut sum = 0.0;
    for v in &mut best_w {
        *v = v.max(0.0);
        sum += *v;
    }
    for v in &mut best_w {
        *v /= sum;
    }
    Ok(SimplexSolution { weights: SimplexWeights::new(best_w)?, degenerate: false })
}

/// Full conflict-averse update direction for one backbone step.
///
/// With one gradient the direction is that gradient. With zero-norm inputs
/// the direction falls back to the mean. Otherwise
/// `d = g0 + (beta * |g0| / |g_w|) * g_w` with w from `solve_simplex`.
pub fn update_direction(grads: &[FlatGradient], cfg: &MooConfig) -> Result<FlatGradient> {
    check_grads(grads)?;
    if grads.len() == 1 {
        return Ok(grads[0].clone());
    }
    let g0 = average_gradient(grads)?;
    let solution = solve_simplex(grads, &g0, cfg)?;
    if solution.degenerate {
        return Ok(g0);
    }
    let gw = combine(grads, &solution.weights)?;
    if gw.norm() == 0.0 {
        return Ok(g0);
    }
    let coef = cfg.beta * g0.norm() / gw.norm();
    let coords = g0
        .coords()
        .iter()
        .zip(gw.coords())
        .map(|(a, b)| a + coef * b)
        .collect();
    FlatGradient::from_coords(coords)
}
