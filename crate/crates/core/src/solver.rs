//! Proximal-gradient minimization of `J(W) = L(W) + λ‖W‖₁,₁`.
//!
//! Each step takes a gradient step on the smooth loss from the auxiliary point
//! `θ` with step `γ = 1/L` and applies the shrinkage operator with threshold
//! `λγ`. FISTA extrapolates `θ` with Nesterov momentum; ISTA sets `θ = W`.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SpaceError};
use crate::matrix::DenseMatrix;
use crate::objective::ErasureObjective;
use crate::scalar::Scalar;

/// Iterations used by the reference configuration.
pub const DEFAULT_ITERATIONS: usize = 1000;

/// Width of the window over which the early-stopping rule compares objectives.
pub const EARLY_STOP_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Fista,
    Ista,
}

impl std::str::FromStr for Algorithm {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fista" => Ok(Algorithm::Fista),
            "ista" => Ok(Algorithm::Ista),
            other => invalid(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// L1 weight λ.
    pub lambda: T,
    /// Stop once the relative objective change over
    /// [`EARLY_STOP_WINDOW`] iterations drops below this value.
    pub rel_objective_tol: Option<T>,
    /// Record the objective and sparsity every `trace_stride` iterations.
    pub trace_stride: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Fista,
            iterations: DEFAULT_ITERATIONS,
            lambda: T::zero(),
            rel_objective_tol: None,
            trace_stride: 1,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(algorithm: Algorithm, iterations: usize, lambda: T) -> Self {
        Self { algorithm, iterations, lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= T::zero()) {
            return invalid(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.trace_stride == 0 {
            return invalid("trace_stride must be at least 1");
        }
        if let Some(tol) = self.rel_objective_tol {
            if !(tol.is_finite() && tol >= T::zero()) {
                return invalid(format!("rel_objective_tol must be non-negative, got {tol}"));
            }
        }
        Ok(())
    }
}

/// Iterate of the proximal-gradient recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T: Scalar> {
    /// `W^(k)`
    pub w_curr: DenseMatrix<T>,
    /// `W^(k−1)`
    pub w_prev: DenseMatrix<T>,
    /// `θ^(k+1)`, the point the next gradient is taken at.
    pub theta: DenseMatrix<T>,
    /// Momentum `t_k`.
    pub t: T,
    pub k: usize,
}

impl<T: Scalar> SolverState<T> {
    /// `W^(0) = θ^(1) = W°`, `t₀ = 1`.
    pub fn initial(obj: &ErasureObjective<T>) -> Self {
        let w0 = obj.original().clone();
        Self { w_curr: w0.clone(), w_prev: w0.clone(), theta: w0, t: T::one(), k: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace<T> {
    /// `(k, J(W^(k)))`
    pub objective_history: Vec<(usize, T)>,
    /// `(k, sparsity_fraction(W^(k)))`
    pub sparsity_history: Vec<(usize, f64)>,
    pub lipschitz_used: T,
    pub lipschitz_fallback: bool,
    /// `γ = 1/L`
    pub step_size: T,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub wall_time: Duration,
}

/// Soft thresholding `(|x| − α)₊·sgn(x)`, elementwise.
///
/// Every entry with `|x| ≤ α` comes out as an exact `+0.0`.
pub fn shrinkage<T: Scalar>(x: &DenseMatrix<T>, alpha: T) -> Result<DenseMatrix<T>> {
    if alpha.is_nan() || alpha < T::zero() {
        return invalid(format!("shrinkage threshold must be non-negative, got {alpha}"));
    }
    Ok(x.map(|v| shrink(v, alpha)))
}

#[inline]
fn shrink<T: Scalar>(v: T, alpha: T) -> T {
    if v.abs() <= alpha {
        T::zero()
    } else if v > T::zero() {
        v - alpha
    } else {
        v + alpha
    }
}

/// `t_{k+1} = (1 + √(1 + 4t_k²)) / 2`
pub fn momentum_next<T: Scalar>(t: T) -> T {
    let four = T::two() * T::two();
    (T::one() + (T::one() + four * t * t).sqrt()) / T::two()
}

/// `W^(k) = T_{λγ}(θ^(k) − γ∇L(θ^(k)))`, written into `out`.
fn proximal_gradient_into<T: Scalar>(
    obj: &ErasureObjective<T>,
    theta: &DenseMatrix<T>,
    gamma: T,
    lambda: T,
    out: &mut DenseMatrix<T>,
) {
    let threshold = lambda * gamma;
    let cols = theta.cols();
    let data = out.data_mut();
    obj.gradient_rows(theta, |i, g| {
        let dst = &mut data[i * cols..(i + 1) * cols];
        for ((d, &x), &gk) in dst.iter_mut().zip(theta.row(i)).zip(g) {
            *d = shrink(x - gamma * gk, threshold);
        }
    });
}

fn check_step<T: Scalar>(obj: &ErasureObjective<T>, state: &SolverState<T>, gamma: T, lambda: T) -> Result<()> {
    let shape = obj.shape();
    if state.w_curr.shape() != shape || state.w_prev.shape() != shape || state.theta.shape() != shape {
        return invalid("solver state does not match the objective shape");
    }
    if !(gamma.is_finite() && gamma > T::zero()) {
        return invalid(format!("step size must be positive, got {gamma}"));
    }
    if !(lambda.is_finite() && lambda >= T::zero()) {
        return invalid(format!("lambda must be non-negative, got {lambda}"));
    }
    Ok(())
}

/// One FISTA iteration. The buffer of `W^(k−1)` is reused for `W^(k+1)`.
pub fn fista_step<T: Scalar>(
    obj: &ErasureObjective<T>,
    state: SolverState<T>,
    gamma: T,
    lambda: T,
) -> Result<SolverState<T>> {
    check_step(obj, &state, gamma, lambda)?;
    let SolverState { w_curr, w_prev: mut w_next, mut theta, t, k } = state;
    proximal_gradient_into(obj, &theta, gamma, lambda, &mut w_next);
    let t_next = momentum_next(t);
    let beta = (t - T::one()) / t_next;
    for ((th, &w), &prev) in theta.data_mut().iter_mut().zip(w_next.data()).zip(w_curr.data()) {
        *th = w + beta * (w - prev);
    }
    Ok(SolverState { w_prev: w_curr, w_curr: w_next, theta, t: t_next, k: k + 1 })
}

/// One ISTA iteration: the proximal-gradient step without extrapolation.
pub fn ista_step<T: Scalar>(
    obj: &ErasureObjective<T>,
    state: SolverState<T>,
    gamma: T,
    lambda: T,
) -> Result<SolverState<T>> {
    check_step(obj, &state, gamma, lambda)?;
    let SolverState { w_curr, w_prev: mut w_next, mut theta, t, k } = state;
    proximal_gradient_into(obj, &theta, gamma, lambda, &mut w_next);
    theta.data_mut().copy_from_slice(w_next.data());
    Ok(SolverState { w_prev: w_curr, w_curr: w_next, theta, t, k: k + 1 })
}

/// Runs `cfg.iterations` steps from `W°` and returns `W^(K)`.
pub fn solve<T: Scalar>(obj: &ErasureObjective<T>, cfg: &SolverConfig<T>) -> Result<(DenseMatrix<T>, SolveTrace<T>)> {
    let (mut snaps, trace) = solve_with_checkpoints(obj, cfg, &[cfg.iterations])?;
    Ok((snaps.pop().expect("final checkpoint").matrix, trace))
}

/// Iterate captured at a requested iteration count.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub iteration: usize,
    pub matrix: DenseMatrix<T>,
    /// Time from the start of the solve (including the Lipschitz estimate).
    pub elapsed: Duration,
}

/// Like [`solve`], additionally capturing `W^(k)` for each `k` in
/// `checkpoints`. The run length is `cfg.iterations`; checkpoints beyond it
/// (or past an early stop) receive the final iterate.
pub fn solve_with_checkpoints<T: Scalar>(
    obj: &ErasureObjective<T>,
    cfg: &SolverConfig<T>,
    checkpoints: &[usize],
) -> Result<(Vec<Checkpoint<T>>, SolveTrace<T>)> {
    cfg.validate()?;
    let start = Instant::now();
    let lipschitz = obj.lipschitz_estimate();
    let gamma = T::one() / lipschitz.value;
    let lambda = cfg.lambda;

    let mut wanted: Vec<usize> = checkpoints.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut next_wanted = 0;
    let mut captured = Vec::with_capacity(wanted.len());

    let mut state = SolverState::initial(obj);
    let mut objective_history = Vec::new();
    let mut sparsity_history = Vec::new();
    let mut window: VecDeque<T> = VecDeque::with_capacity(EARLY_STOP_WINDOW + 1);
    let mut stopped_early = false;

    while next_wanted < wanted.len() && wanted[next_wanted] == 0 {
        captured.push(Checkpoint { iteration: 0, matrix: state.w_curr.clone(), elapsed: start.elapsed() });
        next_wanted += 1;
    }

    for k in 1..=cfg.iterations {
        state = match cfg.algorithm {
            Algorithm::Fista => fista_step(obj, state, gamma, lambda)?,
            Algorithm::Ista => ista_step(obj, state, gamma, lambda)?,
        };

        let mut objective = None;
        if let Some(tol) = cfg.rel_objective_tol {
            let j = obj.total_objective(&state.w_curr, lambda)?;
            objective = Some(j);
            window.push_back(j);
            if window.len() > EARLY_STOP_WINDOW + 1 {
                window.pop_front();
            }
            if window.len() == EARLY_STOP_WINDOW + 1 {
                let old = window[0];
                if (j - old).abs() <= tol * old.abs() {
                    stopped_early = k < cfg.iterations;
                }
            }
        }

        let last = k == cfg.iterations || stopped_early;
        if k % cfg.trace_stride == 0 || last {
            let j = match objective {
                Some(j) => j,
                None => obj.total_objective(&state.w_curr, lambda)?,
            };
            if !j.is_finite() {
                return Err(SpaceError::NonFinite(format!("objective at iteration {k}")));
            }
            objective_history.push((k, j));
            sparsity_history.push((k, state.w_curr.sparsity_fraction()));
        }

        while next_wanted < wanted.len() && wanted[next_wanted] == k {
            captured.push(Checkpoint { iteration: k, matrix: state.w_curr.clone(), elapsed: start.elapsed() });
            next_wanted += 1;
        }
        if stopped_early {
            break;
        }
    }

    let elapsed = start.elapsed();
    for &k in &wanted[next_wanted..] {
        captured.push(Checkpoint { iteration: k, matrix: state.w_curr.clone(), elapsed });
    }
    state.w_curr.ensure_finite("solver iterate")?;

    let trace = SolveTrace {
        objective_history,
        sparsity_history,
        lipschitz_used: lipschitz.value,
        lipschitz_fallback: lipschitz.fallback,
        step_size: gamma,
        iterations_run: state.k,
        stopped_early,
        wall_time: elapsed,
    };
    Ok((captured, trace))
}

/// Largest violation of `0 ∈ ∇L(W) + λ∂‖W‖₁`, entrywise.
///
/// Zero exactly at the global minimizer of `J`.
pub fn optimality_residual<T: Scalar>(obj: &ErasureObjective<T>, w: &DenseMatrix<T>, lambda: T) -> Result<T> {
    if lambda.is_nan() || lambda < T::zero() {
        return invalid(format!("lambda must be non-negative, got {lambda}"));
    }
    let grad = obj.gradient(w)?;
    Ok(w.data()
        .iter()
        .zip(grad.data())
        .map(
            |(&x, &g)| {
                if x == T::zero() {
                    (g.abs() - lambda).max(T::zero())
                } else {
                    (g + lambda * x.signum()).abs()
                }
            },
        )
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ConceptMatrices, LossWeights};

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        DenseMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .unwrap()
    }

    fn objective(n: usize, m: usize, seed: u64) -> ErasureObjective<f64> {
        let c =
            ConceptMatrices::new(lcg_matrix(m, 2, seed + 1), lcg_matrix(m, 2, seed + 2), lcg_matrix(m, 3, seed + 3))
                .unwrap();
        ErasureObjective::new(lcg_matrix(n, m, seed), c, LossWeights::default()).unwrap()
    }

    #[test]
    fn shrinkage_formula() {
        let x = DenseMatrix::new(1, 4, vec![2.0, -0.4, -3.0, 0.5]).unwrap();
        assert_eq!(shrinkage(&x, 0.0).unwrap(), x);
        let a = shrinkage(&x, 0.5).unwrap();
        assert_eq!(a.data(), &[1.5, 0.0, -2.5, 0.0]);
        let b = shrinkage(&x, 1.0).unwrap();
        assert_eq!(b.get(0, 1), 0.0);
        assert!(shrinkage(&x, -1.0).is_err());
    }

    #[test]
    fn momentum_values() {
        let t1 = momentum_next(1.0f64);
        assert!((t1 - 1.618_033_988_749_895).abs() < 1e-12);
        let t2 = momentum_next(t1);
        assert!((t2 - 2.193_527_085_331_054).abs() < 1e-12);
        let mut t = 1.0f64;
        for k in 0..=50 {
            assert!(t >= (k as f64 + 2.0) / 2.0 - 1e-12 || k == 0);
            t = momentum_next(t);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::<f64>::default();
        assert_eq!(cfg.iterations, 1000);
        assert!(cfg.validate().is_ok());
        cfg.trace_stride = 0;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::new(Algorithm::Fista, 10, -1.0);
        assert!(cfg.validate().is_err());
        assert_eq!("ISTA".parse::<Algorithm>().unwrap(), Algorithm::Ista);
        assert!("adam".parse::<Algorithm>().is_err());
    }

    #[test]
    fn fixed_point_when_nothing_changes() {
        let ce = lcg_matrix(5, 2, 3);
        let c = ConceptMatrices::new(ce.clone(), ce, lcg_matrix(5, 1, 4)).unwrap();
        let obj = ErasureObjective::new(lcg_matrix(3, 5, 5), c, LossWeights::default()).unwrap();
        let s0 = SolverState::initial(&obj);
        let gamma = 1.0 / obj.lipschitz_constant();
        let s1 = fista_step(&obj, s0.clone(), gamma, 0.0).unwrap();
        assert_eq!(s1.w_curr, s0.w_curr);
        assert_eq!(s1.theta, s0.theta);
        let s1 = ista_step(&obj, s0.clone(), gamma, 0.0).unwrap();
        assert_eq!(s1.w_curr, s0.w_curr);
    }

    #[test]
    fn first_fista_step_has_no_momentum() {
        let obj = objective(4, 5, 10);
        let gamma = 1.0 / obj.lipschitz_constant();
        let s0 = SolverState::initial(&obj);
        let f = fista_step(&obj, s0.clone(), gamma, 0.05).unwrap();
        let i = ista_step(&obj, s0, gamma, 0.05).unwrap();
        assert_eq!(f.w_curr, i.w_curr);
        assert_eq!(f.theta, i.theta);
        assert_eq!(f.k, 1);
    }

    #[test]
    fn zero_iterations_returns_original() {
        let obj = objective(4, 5, 20);
        let (w, trace) = solve(&obj, &SolverConfig::new(Algorithm::Fista, 0, 0.1)).unwrap();
        assert_eq!(&w, obj.original());
        assert!(trace.objective_history.is_empty());
        assert!(trace.sparsity_history.is_empty());
        assert_eq!(trace.iterations_run, 0);
    }

    #[test]
    fn trace_stride_and_final_entry() {
        let obj = objective(4, 5, 30);
        let cfg = SolverConfig { trace_stride: 4, ..SolverConfig::new(Algorithm::Fista, 10, 0.01) };
        let (_, trace) = solve(&obj, &cfg).unwrap();
        let ks: Vec<usize> = trace.objective_history.iter().map(|p| p.0).collect();
        assert_eq!(ks, vec![4, 8, 10]);
        assert!((trace.step_size * trace.lipschitz_used - 1.0).abs() < 1e-15);
    }

    #[test]
    fn early_stopping_halts_before_budget() {
        let obj = objective(4, 5, 40);
        let cfg = SolverConfig { rel_objective_tol: Some(1e-12), ..SolverConfig::new(Algorithm::Fista, 100_000, 0.01) };
        let (_, trace) = solve(&obj, &cfg).unwrap();
        assert!(trace.stopped_early);
        assert!(trace.iterations_run < 100_000);
        assert_eq!(trace.objective_history.last().unwrap().0, trace.iterations_run);
    }

    #[test]
    fn checkpoints_match_separate_runs() {
        let obj = objective(4, 5, 50);
        let cfg = SolverConfig::new(Algorithm::Fista, 30, 0.02);
        let (snaps, _) = solve_with_checkpoints(&obj, &cfg, &[30, 0, 7]).unwrap();
        assert_eq!(snaps.iter().map(|c| c.iteration).collect::<Vec<_>>(), vec![0, 7, 30]);
        let (w7, _) = solve(&obj, &SolverConfig::new(Algorithm::Fista, 7, 0.02)).unwrap();
        assert_eq!(snaps[1].matrix, w7);
        assert_eq!(&snaps[0].matrix, obj.original());
    }

    #[test]
    fn residual_at_zero_beyond_threshold() {
        let obj = objective(4, 5, 60);
        let lambda = obj.zero_solution_threshold();
        let zero = DenseMatrix::zeros(4, 5);
        assert_eq!(optimality_residual(&obj, &zero, lambda).unwrap(), 0.0);
        assert!(optimality_residual(&obj, &zero, 0.5 * lambda).unwrap() > 0.0);
    }
}
