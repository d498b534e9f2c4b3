//! Line-search PALM baseline.
//!
//! Each outer iteration updates `U` then `V` by a proximal gradient step on
//! `f(UVᵀ) + λϑ + (μ/2)‖·‖²`. The step size of a block starts at a
//! Barzilai–Borwein estimate and is multiplied by `ϱ` until the smooth part
//! passes the sufficient-decrease test
//! `F(new) ≤ F + ⟨∇F, new − old⟩ + (α/2)‖new − old‖²`.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::diagnostics::{self, Thresholds};
use crate::error::{Error, Result};
use crate::linalg::nonzero_columns;
use crate::loss::SmoothLoss;
use crate::pama::{check_rank, evaluate, initial_factors, positive, relative_change, EvalPath, Evaluation};
use crate::theta::ThetaSpec;
use crate::trace::{StopReason, StoppingRule, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    U,
    V,
}

impl Block {
    fn name(self) -> &'static str {
        match self {
            Block::U => "U",
            Block::V => "V",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PalmConfig {
    pub lambda: f64,
    pub mu: f64,
    pub theta: ThetaSpec,
    pub rank: usize,
    /// Step inflation factor of the `U` block.
    pub varrho1: f64,
    /// Step inflation factor of the `V` block.
    pub varrho2: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub max_iter: usize,
    pub eps3: f64,
    pub eps4: f64,
    pub seed: u64,
    pub eval_path: EvalPath,
    /// Minimize only the linearized smooth model in each block, ignoring
    /// `λϑ` and `μ`.
    pub smooth_only: bool,
    /// Inflations allowed per block before giving up.
    pub max_backtracks: usize,
    /// Fail with [`Error::DescentViolation`] if `Φ` increases by more than
    /// `1e-8 + 1e-12·|Φ|` (ignored when `smooth_only`).
    pub check_descent: bool,
    pub thresholds: Thresholds,
}

impl PalmConfig {
    pub fn new(lambda: f64, theta: ThetaSpec, rank: usize) -> Self {
        Self {
            lambda,
            mu: 1e-8,
            theta,
            rank,
            varrho1: 5.0,
            varrho2: 5.0,
            alpha_min: 1e-10,
            alpha_max: 1e10,
            max_iter: 200,
            eps3: 5e-4,
            eps4: 1e-3,
            seed: 0,
            eval_path: EvalPath::Auto,
            smooth_only: false,
            max_backtracks: 100,
            check_descent: true,
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("alpha_min", self.alpha_min)?;
        positive("alpha_max", self.alpha_max)?;
        if self.alpha_min >= self.alpha_max {
            return Err(Error::param("alpha_min", "must be smaller than alpha_max"));
        }
        if !(self.varrho1 > 1.0 && self.varrho2 > 1.0 && self.varrho1.is_finite() && self.varrho2.is_finite()) {
            return Err(Error::param(
                "varrho1, varrho2",
                "inflation factors must be finite and > 1",
            ));
        }
        if !(self.eps3 >= 0.0 && self.eps4 >= 0.0) {
            return Err(Error::param("eps3, eps4", "tolerances must be nonnegative"));
        }
        if self.rank == 0 {
            return Err(Error::param("rank", "must be at least 1"));
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            max_iter: self.max_iter,
            rel_tol: self.eps3,
            obj_tol: self.eps4,
        }
    }
}

fn check_pair(loss: &SmoothLoss, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<()> {
    let (n, m) = loss.shape();
    if u.nrows() != n || v.nrows() != m || u.ncols() != v.ncols() {
        return Err(Error::Dimension(format!(
            "factors {:?} and {:?} do not factor a {n}x{m} matrix",
            u.shape(),
            v.shape()
        )));
    }
    Ok(())
}

/// `∇_U f(UVᵀ) = ∇f(UVᵀ)V`.
pub fn partial_grad_u(loss: &SmoothLoss, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pair(loss, u, v)?;
    let eval = evaluate(loss, u, v, None);
    Ok(loss.observations().weighted_mul(&eval.weights, v))
}

/// `∇_V f(UVᵀ) = ∇f(UVᵀ)ᵀU`.
pub fn partial_grad_v(loss: &SmoothLoss, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pair(loss, u, v)?;
    let eval = evaluate(loss, u, v, None);
    Ok(loss.observations().weighted_tr_mul(&eval.weights, u))
}

/// Barzilai–Borwein estimate `‖g_now − g_prev‖_F / ‖x_now − x_prev‖_F`
/// clamped into `[alpha_min, alpha_max]`; `prev_alpha` when the iterates
/// coincide.
pub fn bb_initial_step(
    grad_now: &DMatrix<f64>,
    grad_prev: &DMatrix<f64>,
    x_now: &DMatrix<f64>,
    x_prev: &DMatrix<f64>,
    prev_alpha: f64,
    config: &PalmConfig,
) -> f64 {
    bb_quotient(
        (grad_now - grad_prev).norm(),
        (x_now - x_prev).norm(),
        prev_alpha,
        config,
    )
}

fn bb_quotient(num: f64, den: f64, prev_alpha: f64, config: &PalmConfig) -> f64 {
    if den == 0.0 || !num.is_finite() {
        return prev_alpha;
    }
    (num / den).clamp(config.alpha_min, config.alpha_max)
}

/// Minimizer of `⟨g, X − W⟩ + (α/2)‖X − W‖² + λϑ(X) + (μ/2)‖X‖²` over `X`,
/// or the plain gradient step `W − g/α` when `smooth_only`.
pub fn prox_gradient_step(factor: &DMatrix<f64>, grad: &DMatrix<f64>, alpha: f64, config: &PalmConfig) -> DMatrix<f64> {
    let point = factor - grad / alpha;
    if config.smooth_only {
        return point;
    }
    // Per column: ½‖√(α+μ)·x − α·w/√(α+μ)‖² + λθ(‖x‖).
    let gamma = (alpha + config.mu).sqrt();
    let gammas = vec![gamma; factor.ncols()];
    config
        .theta
        .prox_columns(config.lambda, &gammas, &(point * (alpha / gamma)))
}

/// One block update at fixed step size `alpha`.
pub fn palm_block_update(
    loss: &SmoothLoss,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    block: Block,
    alpha: f64,
    config: &PalmConfig,
) -> Result<DMatrix<f64>> {
    positive("alpha", alpha)?;
    Ok(match block {
        Block::U => prox_gradient_step(u, &partial_grad_u(loss, u, v)?, alpha, config),
        Block::V => prox_gradient_step(v, &partial_grad_v(loss, u, v)?, alpha, config),
    })
}

#[derive(Clone, Debug)]
pub struct PalmOutput {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    pub stop_reason: StopReason,
    /// Step inflations of the `U` and `V` blocks at each iteration.
    pub backtracks: Vec<[usize; 2]>,
    /// Accepted step sizes of the `U` and `V` blocks at each iteration.
    pub alphas: Vec<[f64; 2]>,
}

struct Accepted {
    factor: DMatrix<f64>,
    eval: Evaluation,
    product: Option<DMatrix<f64>>,
    alpha: f64,
    backtracks: usize,
}

struct Ctx<'a> {
    loss: &'a SmoothLoss,
    config: &'a PalmConfig,
    dense: bool,
}

impl Ctx<'_> {
    fn eval(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> (Evaluation, Option<DMatrix<f64>>) {
        let product = self.dense.then(|| u * v.transpose());
        (evaluate(self.loss, u, v, product.as_ref()), product)
    }

    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        block: Block,
        iteration: usize,
        factor: &DMatrix<f64>,
        other: &DMatrix<f64>,
        grad: &DMatrix<f64>,
        f_now: f64,
        mut alpha: f64,
        varrho: f64,
    ) -> Result<Accepted> {
        let mut backtracks = 0;
        loop {
            let candidate = prox_gradient_step(factor, grad, alpha, self.config);
            let (eval, product) = match block {
                Block::U => self.eval(&candidate, other),
                Block::V => self.eval(other, &candidate),
            };
            let d = &candidate - factor;
            let model = f_now + grad.dot(&d) + 0.5 * alpha * d.norm_squared();
            if eval.value <= model + 1e-12 * f_now.abs().max(1.0) {
                return Ok(Accepted {
                    factor: candidate,
                    eval,
                    product,
                    alpha,
                    backtracks,
                });
            }
            backtracks += 1;
            if backtracks > self.config.max_backtracks {
                return Err(Error::LineSearch {
                    block: block.name(),
                    iteration,
                    backtracks,
                });
            }
            alpha *= varrho;
        }
    }
}

/// Runs the baseline from `(orth(randn(n, r)), orth(randn(m, r)))`, the same
/// starting point as the main solver for equal seeds.
pub fn run_palm(loss: &SmoothLoss, config: &PalmConfig) -> Result<PalmOutput> {
    config.validate()?;
    let (n, m) = loss.shape();
    check_rank(n, m, config.rank)?;
    let started = Instant::now();
    let ctx = Ctx {
        loss,
        config,
        dense: config.eval_path.is_dense(n, m),
    };
    let obs = loss.observations();
    let reg =
        |u: &DMatrix<f64>, v: &DMatrix<f64>| diagnostics::regularizer(&config.theta, config.lambda, config.mu, u, v);
    let rank = |u: &DMatrix<f64>| nonzero_columns(u, config.thresholds.column_rel_tol).len();

    let (mut u, mut v) = initial_factors(n, m, config.rank, config.seed)?;
    let (mut current, mut product) = ctx.eval(&u, &v);
    let mut trace = vec![TraceRecord::start(current.value + reg(&u, &v), rank(&u), 0.0)];
    let rule = config.stopping_rule();
    let mut alpha_u = 1.0f64.clamp(config.alpha_min, config.alpha_max);
    let mut alpha_v = alpha_u;
    let mut prev_u: Option<DMatrix<f64>> = None;
    let mut prev_v: Option<DMatrix<f64>> = None;
    // Gradient weights at (U^k, V^{k-1}).
    let mut prev_mid_weights: Option<Vec<f64>> = None;
    let mut backtracks = Vec::new();
    let mut alphas = Vec::new();

    let stop_reason = loop {
        if let Some(reason) = rule.check(&trace) {
            break reason;
        }
        let k = trace.len();
        let phi_now = trace.last().expect("nonempty").objective;

        let grad_u = obs.weighted_mul(&current.weights, &v);
        if let Some(pu) = &prev_u {
            let (shifted, _) = ctx.eval(pu, &v);
            let diff: Vec<f64> = current
                .weights
                .iter()
                .zip(&shifted.weights)
                .map(|(a, b)| a - b)
                .collect();
            let num = obs.weighted_mul(&diff, &v).norm();
            alpha_u = bb_quotient(num, (&u - pu).norm(), alpha_u, config);
        }
        let acc_u = ctx.line_search(Block::U, k, &u, &v, &grad_u, current.value, alpha_u, config.varrho1)?;

        if let (Some(pv), Some(pmw)) = (&prev_v, &prev_mid_weights) {
            let diff: Vec<f64> = current.weights.iter().zip(pmw).map(|(a, b)| a - b).collect();
            let num = obs.weighted_tr_mul(&diff, &u).norm();
            alpha_v = bb_quotient(num, (&v - pv).norm(), alpha_v, config);
        }
        let u_new = acc_u.factor;
        let mid = acc_u.eval;
        let phi_mid = mid.value + reg(&u_new, &v);
        let grad_v = obs.weighted_tr_mul(&mid.weights, &u_new);
        let acc_v = ctx.line_search(Block::V, k, &v, &u_new, &grad_v, mid.value, alpha_v, config.varrho2)?;
        let v_new = acc_v.factor;
        let phi_new = acc_v.eval.value + reg(&u_new, &v_new);

        if config.check_descent && !config.smooth_only {
            let tol = 1e-8 + 1e-12 * phi_now.abs();
            if phi_new > phi_now + tol {
                return Err(Error::DescentViolation {
                    iteration: k,
                    detail: format!("objective rose from {phi_now} to {phi_new}"),
                });
            }
        }
        let rel_change = relative_change((&u_new, &v_new, acc_v.product.as_ref()), (&u, &v, product.as_ref()));
        trace.push(TraceRecord {
            k,
            objective: phi_new,
            objective_mid: phi_mid,
            step_u: (&u_new - &u).norm(),
            step_v: (&v_new - &v).norm(),
            rank: rank(&u_new),
            rel_change,
            time_s: started.elapsed().as_secs_f64(),
            diagnostics: None,
        });
        backtracks.push([acc_u.backtracks, acc_v.backtracks]);
        alphas.push([acc_u.alpha, acc_v.alpha]);
        alpha_u = acc_u.alpha;
        alpha_v = acc_v.alpha;
        prev_mid_weights = Some(mid.weights);
        prev_u = Some(std::mem::replace(&mut u, u_new));
        prev_v = Some(std::mem::replace(&mut v, v_new));
        current = acc_v.eval;
        product = acc_v.product;
    };
    Ok(PalmOutput {
        u,
        v,
        trace,
        stop_reason,
        backtracks,
        alphas,
    })
}
