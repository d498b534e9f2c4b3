//! Majorized proximal alternating minimization with subspace correction.
//!
//! One iteration, starting from the corrected pair `(Ū, V̄) = (P̂Q̄D̄, P̄D̄)`:
//!
//! 1. `U ← argmin` of the majorized `U`-subproblem, solved columnwise in
//!    closed form from `G = (L·Z̄P̄ + γ₁P̂Q̄)D̄Λ⁻¹`.
//! 2. Thin SVD `U·D̄ = P̂(D̂)²Q̂ᵀ`, giving `Û = P̂D̂`, `V̂ = P̄Q̂D̂`.
//! 3. `V ← argmin` of the mirrored subproblem from
//!    `H = (L·ẐᵀP̂ + γ₂P̄Q̂)D̂Δ⁻¹`.
//! 4. Thin SVD `V·D̂ = P̄(D̄)²Q̄ᵀ`, giving `Ū = P̂Q̄D̄`, `V̄ = P̄D̄`.
//! 5. `γ ← max(γ_min, ϱγ)`.
//!
//! The products satisfy `U(V̄_old)ᵀ = ÛV̂ᵀ` and `ÛVᵀ = ŪV̄ᵀ`, so the loss is
//! evaluated twice per iteration.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, colspace_gap, DiagnosticReport, Thresholds};
use crate::error::{Error, Result};
use crate::linalg::{
    gaussian_matrix, nonzero_columns, orthonormalize, product_distance, product_norm, scale_columns, thin_svd,
    SINGULAR_VALUE_CUTOFF,
};
use crate::loss::SmoothLoss;
use crate::theta::ThetaSpec;
use crate::trace::{StopReason, StoppingRule, TraceRecord};

/// Products with at most this many entries are materialized under
/// [`EvalPath::Auto`].
pub const DENSE_LIMIT: usize = 1 << 22;

/// How `X = ABᵀ` is evaluated on the sampled indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalPath {
    /// Dense when `n·m ≤ DENSE_LIMIT`, entries otherwise.
    #[default]
    Auto,
    /// Materialize the `n × m` product.
    Dense,
    /// Only the sampled entries, `O(N·r)`.
    Entries,
}

impl EvalPath {
    pub(crate) fn is_dense(self, n: usize, m: usize) -> bool {
        match self {
            EvalPath::Auto => n.saturating_mul(m) <= DENSE_LIMIT,
            EvalPath::Dense => true,
            EvalPath::Entries => false,
        }
    }
}

/// `f(ABᵀ)` and its per-draw gradient weights.
pub(crate) struct Evaluation {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Evaluates at `ABᵀ`, reading the sampled entries from `product` when the
/// dense product is already formed.
pub(crate) fn evaluate(
    loss: &SmoothLoss,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    product: Option<&DMatrix<f64>>,
) -> Evaluation {
    let obs = loss.observations();
    let values = match product {
        Some(x) => obs.gather(x),
        None => obs.gather_product(a, b),
    };
    let (value, weights) = loss.value_and_weights_at(&values);
    Evaluation { value, weights }
}

/// `‖X_new − X_old‖_F / ‖X_new‖_F`, `0` when both vanish.
pub(crate) fn relative_change(
    new: (&DMatrix<f64>, &DMatrix<f64>, Option<&DMatrix<f64>>),
    old: (&DMatrix<f64>, &DMatrix<f64>, Option<&DMatrix<f64>>),
) -> f64 {
    let (num, den) = match (new.2, old.2) {
        (Some(xn), Some(xo)) => ((xn - xo).norm(), xn.norm()),
        _ => (product_distance(new.0, new.1, old.0, old.1), product_norm(new.0, new.1)),
    };
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Starting factors `(orth(randn(n, r)), orth(randn(m, r)))` drawn from
/// ChaCha8 seeded with `seed`, the `n × r` block first, each filled column
/// by column.
pub fn initial_factors(n: usize, m: usize, r: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_rank(n, m, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = orthonormalize(&gaussian_matrix(&mut rng, n, r));
    let right = orthonormalize(&gaussian_matrix(&mut rng, m, r));
    Ok((left, right))
}

pub(crate) fn check_rank(n: usize, m: usize, r: usize) -> Result<()> {
    if r == 0 || r > n.min(m) {
        return Err(Error::param(
            "r",
            format!("rank budget must lie in [1, {}], got {r}", n.min(m)),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PamaConfig {
    pub lambda: f64,
    pub mu: f64,
    pub theta: ThetaSpec,
    /// Rank budget `r`.
    pub rank: usize,
    pub gamma1_init: f64,
    pub gamma2_init: f64,
    pub varrho: f64,
    pub gamma1_min: f64,
    pub gamma2_min: f64,
    pub max_iter: usize,
    /// Relative change of `ŪV̄ᵀ`.
    pub eps1: f64,
    /// Nine-iteration objective spread.
    pub eps2: f64,
    pub seed: u64,
    pub eval_path: EvalPath,
    /// Fail with [`Error::DescentViolation`] when either descent inequality
    /// is violated by more than `1e-8 + 1e-12·|Φ|`.
    pub check_descent: bool,
    /// Attach a [`DiagnosticReport`] to every trace record.
    pub diagnostics: bool,
    pub thresholds: Thresholds,
}

impl PamaConfig {
    pub fn new(lambda: f64, theta: ThetaSpec, rank: usize) -> Self {
        Self {
            lambda,
            mu: 1e-8,
            theta,
            rank,
            gamma1_init: 1e-2,
            gamma2_init: 1e-2,
            varrho: 0.8,
            gamma1_min: 1e-8,
            gamma2_min: 1e-8,
            max_iter: 200,
            eps1: 5e-4,
            eps2: 1e-3,
            seed: 0,
            eval_path: EvalPath::Auto,
            check_descent: true,
            diagnostics: false,
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("gamma1_init", self.gamma1_init)?;
        positive("gamma2_init", self.gamma2_init)?;
        positive("gamma1_min", self.gamma1_min)?;
        positive("gamma2_min", self.gamma2_min)?;
        if !(self.varrho > 0.0 && self.varrho < 1.0) {
            return Err(Error::param(
                "varrho",
                format!("must lie in (0, 1), got {}", self.varrho),
            ));
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return Err(Error::param("eps1, eps2", "tolerances must be nonnegative"));
        }
        if self.rank == 0 {
            return Err(Error::param("rank", "must be at least 1"));
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            max_iter: self.max_iter,
            rel_tol: self.eps1,
            obj_tol: self.eps2,
        }
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

/// Full iterate of the method. `d_hat` and `d_bar` hold the diagonals of
/// `D̂` and `D̄`, both nonincreasing and nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct PamaState {
    pub k: usize,
    /// Last prox outputs `U^k`, `V^k`.
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub u_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    pub p_bar: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    pub q_bar: DMatrix<f64>,
    pub d_hat: Vec<f64>,
    pub d_bar: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `ÛV̂ᵀ` on the dense path.
    pub x_hat: Option<DMatrix<f64>>,
    /// `ŪV̄ᵀ` on the dense path.
    pub x_bar: Option<DMatrix<f64>>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PAMASTAT";
const CHECKPOINT_VERSION: u32 = 1;

impl PamaState {
    /// `P̂⁰, P̄⁰` from [`initial_factors`], `Q̂⁰ = Q̄⁰ = I`, `D̂⁰ = D̄⁰ = I`,
    /// and every factor pair equal to `(P̂⁰, P̄⁰)`.
    pub fn init(n: usize, m: usize, config: &PamaConfig) -> Result<Self> {
        let r = config.rank;
        let (p_hat, p_bar) = initial_factors(n, m, r, config.seed)?;
        let eye = DMatrix::identity(r, r);
        let dense = config.eval_path.is_dense(n, m);
        let x0 = dense.then(|| &p_hat * p_bar.transpose());
        Ok(Self {
            k: 0,
            u: p_hat.clone(),
            v: p_bar.clone(),
            u_hat: p_hat.clone(),
            v_hat: p_bar.clone(),
            u_bar: p_hat.clone(),
            v_bar: p_bar.clone(),
            p_hat,
            p_bar,
            q_hat: eye.clone(),
            q_bar: eye,
            d_hat: vec![1.0; r],
            d_bar: vec![1.0; r],
            gamma1: config.gamma1_init,
            gamma2: config.gamma2_init,
            x_hat: x0.clone(),
            x_bar: x0,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.u.nrows(), self.v.nrows(), self.u.ncols())
    }

    /// Flat little-endian container: magic, version, `n m r k`, `γ₁ γ₂`,
    /// then every matrix column-major in declaration order. Dense caches are
    /// not stored.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, m, r) = self.shape();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [n, m, r, self.k] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let scalars = [self.gamma1, self.gamma2];
        let blocks: [&[f64]; 14] = [
            &scalars,
            self.u.as_slice(),
            self.v.as_slice(),
            self.u_hat.as_slice(),
            self.v_hat.as_slice(),
            self.u_bar.as_slice(),
            self.v_bar.as_slice(),
            self.p_hat.as_slice(),
            self.p_bar.as_slice(),
            self.q_hat.as_slice(),
            self.q_bar.as_slice(),
            &self.d_hat,
            &self.d_bar,
            &[],
        ];
        for block in blocks {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`PamaState::to_bytes`]; caches are rebuilt when `dense`.
    pub fn from_bytes(bytes: &[u8], dense: bool) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = usize::try_from(cur.u64()?).map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
        }
        let [n, m, r, k] = dims;
        if r == 0 || r > n.min(m) {
            return Err(Error::Checkpoint(format!("inconsistent shape {n}x{m} with rank {r}")));
        }
        let gamma1 = cur.f64()?;
        let gamma2 = cur.f64()?;
        let u = cur.matrix(n, r)?;
        let v = cur.matrix(m, r)?;
        let u_hat = cur.matrix(n, r)?;
        let v_hat = cur.matrix(m, r)?;
        let u_bar = cur.matrix(n, r)?;
        let v_bar = cur.matrix(m, r)?;
        let p_hat = cur.matrix(n, r)?;
        let p_bar = cur.matrix(m, r)?;
        let q_hat = cur.matrix(r, r)?;
        let q_bar = cur.matrix(r, r)?;
        let d_hat = cur.matrix(r, 1)?.as_slice().to_vec();
        let d_bar = cur.matrix(r, 1)?.as_slice().to_vec();
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        let x_hat = dense.then(|| &u_hat * v_hat.transpose());
        let x_bar = dense.then(|| &u_bar * v_bar.transpose());
        Ok(Self {
            k,
            u,
            v,
            u_hat,
            v_hat,
            u_bar,
            v_bar,
            p_hat,
            p_bar,
            q_hat,
            q_bar,
            d_hat,
            d_bar,
            gamma1,
            gamma2,
            x_hat,
            x_bar,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("dimension overflow".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f64()?);
        }
        Ok(DMatrix::from_vec(rows, cols, data))
    }
}

/// Columnwise minimizer of the `U`-subproblem given the gradient weights of
/// `f` at `X̄ = ŪV̄ᵀ`.
pub(crate) fn u_step_with(state: &PamaState, loss: &SmoothLoss, config: &PamaConfig, weights: &[f64]) -> DMatrix<f64> {
    let l = loss.lipschitz_constant();
    let grad_p = loss.observations().weighted_mul(weights, &state.p_bar);
    let pq = &state.p_hat * &state.q_bar;
    let d2: Vec<f64> = state.d_bar.iter().map(|d| d * d).collect();
    // L·Z̄P̄ = L·X̄P̄ − ∇f(X̄)P̄ with X̄P̄ = P̂Q̄D̄².
    let g = scale_columns(&pq, &d2) * l - grad_p + &pq * state.gamma1;
    let lam: Vec<f64> = d2.iter().map(|d| (l * d + config.mu + state.gamma1).sqrt()).collect();
    let scale: Vec<f64> = state.d_bar.iter().zip(&lam).map(|(d, s)| d / s).collect();
    config
        .theta
        .prox_columns(config.lambda, &lam, &scale_columns(&g, &scale))
}

/// Columnwise minimizer of the `V`-subproblem given the gradient weights of
/// `f` at `X̂ = ÛV̂ᵀ`.
pub(crate) fn v_step_with(state: &PamaState, loss: &SmoothLoss, config: &PamaConfig, weights: &[f64]) -> DMatrix<f64> {
    let l = loss.lipschitz_constant();
    let grad_p = loss.observations().weighted_tr_mul(weights, &state.p_hat);
    let pq = &state.p_bar * &state.q_hat;
    let d2: Vec<f64> = state.d_hat.iter().map(|d| d * d).collect();
    // L·ẐᵀP̂ = L·X̂ᵀP̂ − ∇f(X̂)ᵀP̂ with X̂ᵀP̂ = P̄Q̂D̂².
    let h = scale_columns(&pq, &d2) * l - grad_p + &pq * state.gamma2;
    let delta: Vec<f64> = d2.iter().map(|d| (l * d + config.mu + state.gamma2).sqrt()).collect();
    let scale: Vec<f64> = state.d_hat.iter().zip(&delta).map(|(d, s)| d / s).collect();
    config
        .theta
        .prox_columns(config.lambda, &delta, &scale_columns(&h, &scale))
}

fn dense_for(state: &PamaState, config: &PamaConfig) -> bool {
    let (n, m, _) = state.shape();
    config.eval_path.is_dense(n, m)
}

/// Step 1 with a fresh evaluation of `∇f(X̄)`.
pub fn u_step(state: &PamaState, loss: &SmoothLoss, config: &PamaConfig) -> Result<DMatrix<f64>> {
    check_state(state, loss)?;
    let x = dense_for(state, config).then(|| &state.u_bar * state.v_bar.transpose());
    let eval = evaluate(loss, &state.u_bar, &state.v_bar, x.as_ref());
    Ok(u_step_with(state, loss, config, &eval.weights))
}

/// Step 3 with a fresh evaluation of `∇f(X̂)`.
pub fn v_step(state: &PamaState, loss: &SmoothLoss, config: &PamaConfig) -> Result<DMatrix<f64>> {
    check_state(state, loss)?;
    let x = dense_for(state, config).then(|| &state.u_hat * state.v_hat.transpose());
    let eval = evaluate(loss, &state.u_hat, &state.v_hat, x.as_ref());
    Ok(v_step_with(state, loss, config, &eval.weights))
}

fn check_state(state: &PamaState, loss: &SmoothLoss) -> Result<()> {
    let (n, m, _) = state.shape();
    if loss.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "state factors a {n}x{m} matrix but the loss expects {:?}",
            loss.shape()
        )));
    }
    Ok(())
}

fn sqrt_all(sigma: &[f64]) -> Vec<f64> {
    sigma.iter().map(|s| s.sqrt()).collect()
}

/// Step 2: stores `U^{k+1}` and refactors `U^{k+1}D̄` into `(P̂, D̂, Q̂)`.
/// `x_hat` is refreshed when the dense cache is in use.
pub fn subspace_correct_u(state: &mut PamaState, u_new: DMatrix<f64>) -> Result<()> {
    if u_new.shape() != state.u.shape() {
        return Err(Error::Dimension(format!(
            "U has shape {:?}, expected {:?}",
            u_new.shape(),
            state.u.shape()
        )));
    }
    let svd = thin_svd(&scale_columns(&u_new, &state.d_bar), SINGULAR_VALUE_CUTOFF)?;
    state.d_hat = sqrt_all(&svd.sigma);
    state.p_hat = svd.left;
    state.q_hat = svd.right;
    state.u_hat = scale_columns(&state.p_hat, &state.d_hat);
    state.v_hat = scale_columns(&(&state.p_bar * &state.q_hat), &state.d_hat);
    if state.x_hat.is_some() {
        state.x_hat = Some(&state.u_hat * state.v_hat.transpose());
    }
    state.u = u_new;
    Ok(())
}

/// Step 4: stores `V^{k+1}` and refactors `V^{k+1}D̂` into `(P̄, D̄, Q̄)`.
pub fn subspace_correct_v(state: &mut PamaState, v_new: DMatrix<f64>) -> Result<()> {
    if v_new.shape() != state.v.shape() {
        return Err(Error::Dimension(format!(
            "V has shape {:?}, expected {:?}",
            v_new.shape(),
            state.v.shape()
        )));
    }
    let svd = thin_svd(&scale_columns(&v_new, &state.d_hat), SINGULAR_VALUE_CUTOFF)?;
    state.d_bar = sqrt_all(&svd.sigma);
    state.p_bar = svd.left;
    state.q_bar = svd.right;
    state.u_bar = scale_columns(&(&state.p_hat * &state.q_bar), &state.d_bar);
    state.v_bar = scale_columns(&state.p_bar, &state.d_bar);
    if state.x_bar.is_some() {
        state.x_bar = Some(&state.u_bar * state.v_bar.transpose());
    }
    state.v = v_new;
    Ok(())
}

/// Step 5.
pub fn decay_gammas(state: &mut PamaState, config: &PamaConfig) {
    state.gamma1 = config.gamma1_min.max(config.varrho * state.gamma1);
    state.gamma2 = config.gamma2_min.max(config.varrho * state.gamma2);
}

/// What an observer sees after each completed iteration.
pub struct IterationView<'a> {
    pub state: &'a PamaState,
    /// `Ū^k`, `V̄^k` from before the iteration.
    pub prev_u_bar: &'a DMatrix<f64>,
    pub prev_v_bar: &'a DMatrix<f64>,
    pub record: &'a TraceRecord,
}

#[derive(Clone, Debug)]
pub struct PamaOutput {
    /// Final corrected pair `(Ū, V̄)`.
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    pub stop_reason: StopReason,
    pub state: PamaState,
}

/// Iterates the method from a given state, one call to [`PamaSolver::step`]
/// per iteration.
pub struct PamaSolver<'a> {
    loss: &'a SmoothLoss,
    config: PamaConfig,
    state: PamaState,
    /// Evaluation of `f` at the current `X̄`.
    current: Evaluation,
    trace: Vec<TraceRecord>,
    started: Instant,
}

impl<'a> PamaSolver<'a> {
    pub fn new(loss: &'a SmoothLoss, config: PamaConfig) -> Result<Self> {
        config.validate()?;
        let (n, m) = loss.shape();
        check_rank(n, m, config.rank)?;
        let state = PamaState::init(n, m, &config)?;
        Self::from_state(loss, config, state)
    }

    /// Resumes from `state` (for instance a restored checkpoint); the trace
    /// restarts with a record at `state.k`.
    pub fn from_state(loss: &'a SmoothLoss, config: PamaConfig, mut state: PamaState) -> Result<Self> {
        config.validate()?;
        check_state(&state, loss)?;
        if state.u.ncols() != config.rank {
            return Err(Error::param("rank", "state and config disagree on the rank budget"));
        }
        let started = Instant::now();
        let dense = dense_for(&state, &config);
        if dense && state.x_bar.is_none() {
            state.x_bar = Some(&state.u_bar * state.v_bar.transpose());
            state.x_hat = Some(&state.u_hat * state.v_hat.transpose());
        }
        if !dense {
            state.x_bar = None;
            state.x_hat = None;
        }
        let current = evaluate(loss, &state.u_bar, &state.v_bar, state.x_bar.as_ref());
        let objective = current.value
            + diagnostics::regularizer(&config.theta, config.lambda, config.mu, &state.u_bar, &state.v_bar);
        let mut first = TraceRecord::start(
            objective,
            nonzero_columns(&state.u_bar, config.thresholds.column_rel_tol).len(),
            0.0,
        );
        first.k = state.k;
        if config.diagnostics {
            first.diagnostics = Some(report(loss, &config, &state, Vec::new())?);
        }
        Ok(Self {
            loss,
            config,
            state,
            current,
            trace: vec![first],
            started,
        })
    }

    pub fn state(&self) -> &PamaState {
        &self.state
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn config(&self) -> &PamaConfig {
        &self.config
    }

    /// The stopping rule applied to the trace so far.
    pub fn should_stop(&self) -> Option<StopReason> {
        let offset = self.trace[0].k;
        // The rule indexes its history by k, so shift a resumed trace.
        if offset == 0 {
            self.config.stopping_rule().check(&self.trace)
        } else {
            let shifted: Vec<TraceRecord> = self
                .trace
                .iter()
                .map(|r| TraceRecord {
                    k: r.k - offset,
                    diagnostics: None,
                    ..r.clone()
                })
                .collect();
            let mut rule = self.config.stopping_rule();
            rule.max_iter = rule.max_iter.saturating_sub(offset);
            rule.check(&shifted)
        }
    }

    /// Runs steps 1–5 once and appends a trace record.
    pub fn step(&mut self, observer: &mut dyn FnMut(&IterationView<'_>)) -> Result<()> {
        let loss = self.loss;
        let cfg = &self.config;
        let reg = |u: &DMatrix<f64>, v: &DMatrix<f64>| diagnostics::regularizer(&cfg.theta, cfg.lambda, cfg.mu, u, v);
        let phi_bar = self.trace.last().expect("trace starts nonempty").objective;
        let prev_u_bar = self.state.u_bar.clone();
        let prev_v_bar = self.state.v_bar.clone();
        let prev_x_bar = self.state.x_bar.clone();

        let u_new = u_step_with(&self.state, loss, cfg, &self.current.weights);
        let step_u = (&u_new - &prev_u_bar).norm();
        subspace_correct_u(&mut self.state, u_new)?;
        let mid = evaluate(loss, &self.state.u_hat, &self.state.v_hat, self.state.x_hat.as_ref());
        let phi_hat = mid.value + reg(&self.state.u_hat, &self.state.v_hat);

        let v_new = v_step_with(&self.state, loss, cfg, &mid.weights);
        let step_v = (&v_new - &self.state.v_hat).norm();
        subspace_correct_v(&mut self.state, v_new)?;
        decay_gammas(&mut self.state, cfg);
        self.state.k += 1;
        let k = self.state.k;

        let current = evaluate(loss, &self.state.u_bar, &self.state.v_bar, self.state.x_bar.as_ref());
        let phi_new = current.value + reg(&self.state.u_bar, &self.state.v_bar);
        if cfg.check_descent {
            let tol = |phi: f64| 1e-8 + 1e-12 * phi.abs();
            let first = phi_hat + 0.5 * cfg.gamma1_min * step_u * step_u;
            if phi_bar < first - tol(phi_bar) {
                return Err(Error::DescentViolation {
                    iteration: k,
                    detail: format!("U-step: {phi_bar} < {first}"),
                });
            }
            let second = phi_new + 0.5 * cfg.gamma2_min * step_v * step_v;
            if phi_hat < second - tol(phi_hat) {
                return Err(Error::DescentViolation {
                    iteration: k,
                    detail: format!("V-step: {phi_hat} < {second}"),
                });
            }
        }
        let rel_change = relative_change(
            (&self.state.u_bar, &self.state.v_bar, self.state.x_bar.as_ref()),
            (&prev_u_bar, &prev_v_bar, prev_x_bar.as_ref()),
        );
        let diagnostics = if cfg.diagnostics {
            let gaps = vec![
                colspace_gap(&self.state.u_bar, &self.state.u_hat, cfg.thresholds)?,
                colspace_gap(&self.state.u_hat, &self.state.u, cfg.thresholds)?,
                colspace_gap(&self.state.v_hat, &prev_v_bar, cfg.thresholds)?,
                colspace_gap(&self.state.v_bar, &self.state.v, cfg.thresholds)?,
            ];
            Some(report(loss, cfg, &self.state, gaps)?)
        } else {
            None
        };
        let record = TraceRecord {
            k,
            objective: phi_new,
            objective_mid: phi_hat,
            step_u,
            step_v,
            rank: nonzero_columns(&self.state.u_bar, cfg.thresholds.column_rel_tol).len(),
            rel_change,
            time_s: self.started.elapsed().as_secs_f64(),
            diagnostics,
        };
        self.current = current;
        self.trace.push(record);
        observer(&IterationView {
            state: &self.state,
            prev_u_bar: &prev_u_bar,
            prev_v_bar: &prev_v_bar,
            record: self.trace.last().expect("just pushed"),
        });
        Ok(())
    }

    /// Steps until the stopping rule fires.
    pub fn run(mut self, observer: &mut dyn FnMut(&IterationView<'_>)) -> Result<PamaOutput> {
        let stop_reason = loop {
            if let Some(reason) = self.should_stop() {
                break reason;
            }
            self.step(observer)?;
        };
        Ok(self.finish(stop_reason))
    }

    pub fn finish(self, stop_reason: StopReason) -> PamaOutput {
        PamaOutput {
            u: self.state.u_bar.clone(),
            v: self.state.v_bar.clone(),
            trace: self.trace,
            stop_reason,
            state: self.state,
        }
    }
}

fn report(loss: &SmoothLoss, cfg: &PamaConfig, state: &PamaState, gaps: Vec<f64>) -> Result<DiagnosticReport> {
    DiagnosticReport::compute(
        loss,
        &cfg.theta,
        cfg.lambda,
        cfg.mu,
        &state.u_bar,
        &state.v_bar,
        gaps,
        cfg.thresholds,
    )
}

/// Runs the method from its standard initialization.
pub fn run_pama(
    loss: &SmoothLoss,
    config: &PamaConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<PamaOutput> {
    PamaSolver::new(loss, config.clone())?.run(observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observations::{Observation, ObservationSet};
    use rand::Rng;

    fn full_obs(n: usize, m: usize) -> ObservationSet {
        let entries = (0..n)
            .flat_map(|i| (0..m).map(move |j| Observation { i, j, y: 1 }))
            .collect();
        ObservationSet::from_entries(n, m, entries).unwrap()
    }

    fn random_quadratic(n: usize, m: usize, seed: u64) -> SmoothLoss {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = ObservationSet::new(n, m).unwrap();
        for _ in 0..(n * m / 2) {
            obs.push(rng.random_range(0..n), rng.random_range(0..m), 1).unwrap();
        }
        let target = gaussian_matrix(&mut rng, n, 2) * gaussian_matrix(&mut rng, m, 2).transpose();
        SmoothLoss::masked_quadratic(obs, target).unwrap()
    }

    #[test]
    fn init_is_orthonormal_and_deterministic() {
        let cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 2);
        let s = PamaState::init(5, 4, &cfg).unwrap();
        assert_eq!(s.d_bar, vec![1.0, 1.0]);
        assert_eq!(s.q_bar, DMatrix::identity(2, 2));
        assert!((s.p_hat.transpose() * &s.p_hat - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((s.p_bar.transpose() * &s.p_bar - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(s, PamaState::init(5, 4, &cfg).unwrap());
        let mut bad = cfg.clone();
        bad.rank = 5;
        assert!(PamaState::init(5, 4, &bad).is_err());
    }

    #[test]
    fn u_step_scalar_case() {
        // n = m = r = 1, f(x) = ½x², X̄ = 1, θ = t²: U minimizes
        // ½(G − ΛU)² + λU² with G = γ₁/Λ.
        let loss = SmoothLoss::masked_quadratic(full_obs(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let mut cfg = PamaConfig::new(0.1, ThetaSpec::Square, 1);
        cfg.mu = 1e-8;
        let one = DMatrix::from_element(1, 1, 1.0);
        let state = PamaState {
            k: 0,
            u: one.clone(),
            v: one.clone(),
            u_hat: one.clone(),
            v_hat: one.clone(),
            u_bar: one.clone(),
            v_bar: one.clone(),
            p_hat: one.clone(),
            p_bar: one.clone(),
            q_hat: one.clone(),
            q_bar: one.clone(),
            d_hat: vec![1.0],
            d_bar: vec![1.0],
            gamma1: 1e-2,
            gamma2: 1e-2,
            x_hat: None,
            x_bar: None,
        };
        let lam = (1.0f64 + 1e-8 + 1e-2).sqrt();
        let g = 1e-2 / lam;
        let expected = g * lam / (lam * lam + 0.2);
        let u = u_step(&state, &loss, &cfg).unwrap();
        assert!((u[(0, 0)] - expected).abs() < 1e-15);
        // Brute force over a grid.
        let cost = |x: f64| 0.5 * (g - lam * x).powi(2) + 0.1 * x * x;
        let best = (0..=200_000)
            .map(|i| i as f64 * 1e-7)
            .fold((f64::INFINITY, 0.0), |acc, x| {
                let c = cost(x);
                if c < acc.0 {
                    (c, x)
                } else {
                    acc
                }
            });
        assert!((best.1 - expected).abs() < 1e-6);
        let v = v_step(&state, &loss, &cfg).unwrap();
        assert!((v[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn u_step_fixed_point_when_gradient_vanishes() {
        // Target equal to the current product: ∇f(X̄) = 0.
        let cfg0 = PamaConfig::new(1e-12, ThetaSpec::Count, 3);
        let mut state = PamaState::init(6, 5, &cfg0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u1 = gaussian_matrix(&mut rng, 6, 3);
        subspace_correct_u(&mut state, u1).unwrap();
        let v1 = gaussian_matrix(&mut rng, 5, 3);
        subspace_correct_v(&mut state, v1).unwrap();
        let xbar = &state.u_bar * state.v_bar.transpose();
        let loss = SmoothLoss::masked_quadratic(full_obs(6, 5), xbar.clone()).unwrap();
        let mut cfg = cfg0.clone();
        cfg.mu = 1e-14;
        state.gamma1 = 1e-14;
        let u = u_step(&state, &loss, &cfg).unwrap();
        assert!((&u * state.v_bar.transpose() - &xbar).norm() <= 1e-8);
    }

    #[test]
    fn zero_gradient_input_gives_zero_factor() {
        let loss = SmoothLoss::masked_quadratic(full_obs(4, 3), DMatrix::zeros(4, 3)).unwrap();
        let cfg = PamaConfig::new(0.5, ThetaSpec::Abs, 2);
        let mut state = PamaState::init(4, 3, &cfg).unwrap();
        state.d_bar = vec![0.0, 0.0];
        state.u_bar = DMatrix::zeros(4, 2);
        state.v_bar = DMatrix::zeros(3, 2);
        assert_eq!(u_step(&state, &loss, &cfg).unwrap(), DMatrix::zeros(4, 2));
    }

    #[test]
    fn huge_lambda_thresholds_everything() {
        let loss = random_quadratic(6, 5, 3);
        let cfg = PamaConfig::new(1e6, ThetaSpec::Count, 3);
        let state = PamaState::init(6, 5, &cfg).unwrap();
        assert_eq!(v_step(&state, &loss, &cfg).unwrap(), DMatrix::zeros(5, 3));
    }

    #[test]
    fn corrections_preserve_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 3);
        let mut state = PamaState::init(6, 5, &cfg).unwrap();
        state.d_bar = vec![2.0, 0.7, 0.1];
        state.v_bar = scale_columns(&state.p_bar, &state.d_bar);
        let u_new = gaussian_matrix(&mut rng, 6, 3);
        let v_bar_old = state.v_bar.clone();
        subspace_correct_u(&mut state, u_new.clone()).unwrap();
        let lhs = &state.u_hat * state.v_hat.transpose();
        assert!((lhs - &u_new * v_bar_old.transpose()).norm() <= 1e-10);
        assert!(state.d_hat.windows(2).all(|w| w[0] >= w[1]));

        let v_new = gaussian_matrix(&mut rng, 5, 3);
        let u_hat = state.u_hat.clone();
        subspace_correct_v(&mut state, v_new.clone()).unwrap();
        let xbar = &state.u_bar * state.v_bar.transpose();
        assert!((&xbar - &u_hat * v_new.transpose()).norm() <= 1e-10 * (1.0 + xbar.norm()));
        let d2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, state.d_bar.iter().map(|d| d * d)));
        assert!((state.u_bar.transpose() * &state.u_bar - &d2).norm() <= 1e-10);
        assert!((state.v_bar.transpose() * &state.v_bar - &d2).norm() <= 1e-10);
    }

    #[test]
    fn zero_and_rank_one_corrections() {
        let cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 2);
        let mut state = PamaState::init(4, 3, &cfg).unwrap();
        subspace_correct_u(&mut state, DMatrix::zeros(4, 2)).unwrap();
        assert_eq!(state.d_hat, vec![0.0, 0.0]);
        assert_eq!(state.u_hat, DMatrix::zeros(4, 2));
        assert_eq!(state.v_hat, DMatrix::zeros(3, 2));

        let cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 1);
        let mut state = PamaState::init(4, 3, &cfg).unwrap();
        state.d_hat = vec![1.5];
        let v_new = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, -4.0]);
        subspace_correct_v(&mut state, v_new.clone()).unwrap();
        assert!((state.d_bar[0].powi(2) - 5.0 * 1.5).abs() < 1e-12);
        let p = &v_new / 5.0;
        assert!((&state.p_bar - &p).norm() < 1e-12 || (&state.p_bar + &p).norm() < 1e-12);
    }

    #[test]
    fn gamma_decay() {
        let cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 1);
        let mut state = PamaState::init(2, 2, &cfg).unwrap();
        decay_gammas(&mut state, &cfg);
        assert!((state.gamma1 - 8e-3).abs() < 1e-18);
        let needed = ((1e-8f64 / 1e-2).ln() / 0.8f64.ln()).ceil() as usize;
        for _ in 0..needed {
            decay_gammas(&mut state, &cfg);
        }
        assert_eq!(state.gamma1, 1e-8);
        assert_eq!(state.gamma2, 1e-8);
    }

    #[test]
    fn rank_one_truth_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = gaussian_matrix(&mut rng, 10, 1);
        let b = gaussian_matrix(&mut rng, 8, 1);
        let truth = &a * b.transpose();
        let loss = SmoothLoss::masked_quadratic(full_obs(10, 8), truth.clone()).unwrap();
        let mut cfg = PamaConfig::new(1e-3, ThetaSpec::Count, 3);
        cfg.max_iter = 2000;
        cfg.eps1 = 1e-10;
        cfg.eps2 = 0.0;
        let out = run_pama(&loss, &cfg, &mut |_| {}).unwrap();
        let x = &out.u * out.v.transpose();
        assert_eq!(nonzero_columns(&out.u, 1e-10).len(), 1);
        assert!((x - &truth).norm() / truth.norm() <= 1e-2);
        for w in out.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-8);
        }
    }

    #[test]
    fn large_lambda_zeroes_product_after_first_iteration() {
        let loss = random_quadratic(6, 5, 4);
        let cfg = PamaConfig::new(1e6, ThetaSpec::Abs, 3);
        let mut solver = PamaSolver::new(&loss, cfg).unwrap();
        solver.step(&mut |_| {}).unwrap();
        assert_eq!(solver.state().u_bar, DMatrix::zeros(6, 3));
        assert_eq!(solver.state().v_bar, DMatrix::zeros(5, 3));
    }

    #[test]
    fn dense_and_entries_paths_agree() {
        let loss = random_quadratic(9, 7, 5);
        let mut cfg = PamaConfig::new(0.05, ThetaSpec::Half, 4);
        cfg.max_iter = 30;
        cfg.eval_path = EvalPath::Dense;
        let dense = run_pama(&loss, &cfg, &mut |_| {}).unwrap();
        cfg.eval_path = EvalPath::Entries;
        let entries = run_pama(&loss, &cfg, &mut |_| {}).unwrap();
        assert_eq!(dense.trace.len(), entries.trace.len());
        for (a, b) in dense.trace.iter().zip(&entries.trace) {
            assert!((a.objective - b.objective).abs() <= 1e-10 * (1.0 + a.objective.abs()));
            if a.rel_change.is_finite() {
                assert!((a.rel_change - b.rel_change).abs() <= 1e-10);
            }
        }
        assert!((&dense.u - &entries.u).norm() <= 1e-10 * (1.0 + dense.u.norm()));
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let loss = random_quadratic(8, 6, 6);
        let mut cfg = PamaConfig::new(0.05, ThetaSpec::Abs, 3);
        cfg.max_iter = 12;
        cfg.eps1 = 0.0;
        cfg.eps2 = 0.0;
        let mut solver = PamaSolver::new(&loss, cfg.clone()).unwrap();
        for _ in 0..5 {
            solver.step(&mut |_| {}).unwrap();
        }
        let bytes = solver.state().to_bytes();
        let restored = PamaState::from_bytes(&bytes, false).unwrap();
        let mut expected = solver.state().clone();
        expected.x_bar = None;
        expected.x_hat = None;
        assert_eq!(restored, expected);
        assert_eq!(restored.to_bytes(), bytes);

        let straight = run_pama(&loss, &cfg, &mut |_| {}).unwrap();
        let resumed = PamaSolver::from_state(&loss, cfg, restored)
            .unwrap()
            .run(&mut |_| {})
            .unwrap();
        assert_eq!(resumed.trace.last().unwrap().k, straight.trace.last().unwrap().k);
        assert!((&resumed.u - &straight.u).norm() <= 1e-12 * (1.0 + straight.u.norm()));

        assert!(PamaState::from_bytes(&bytes[..bytes.len() - 1], false).is_err());
        let mut bad = bytes.clone();
        bad[0] ^= 1;
        assert!(PamaState::from_bytes(&bad, false).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = PamaConfig::new(1.0, ThetaSpec::Abs, 2);
        assert!(cfg.validate().is_ok());
        cfg.varrho = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PamaConfig::new(0.0, ThetaSpec::Abs, 2);
        assert!(cfg.validate().is_err());
        cfg.lambda = 1.0;
        cfg.mu = -1.0;
        assert!(cfg.validate().is_err());
    }
}
