//! Self-checks behind `pama check --suite …`.
//!
//! Each suite compares the library against an independent computation: a
//! grid search for the proximal maps, central differences for the loss
//! gradients, objective recomputation for the descent inequalities, and
//! singular values for the norm inequalities.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, objective};
use crate::error::{Error, Result};
use crate::experiment::{generate_truth, sample_observations};
use crate::linalg::gaussian_matrix;
use crate::loss::{Noise, SmoothLoss};
use crate::pama::{run_pama, PamaConfig};
use crate::theta::ThetaSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Prox,
    Grad,
    Descent,
    Norms,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Prox, Suite::Grad, Suite::Descent, Suite::Norms];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Prox => "prox",
            Suite::Grad => "grad",
            Suite::Descent => "descent",
            Suite::Norms => "norms",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{s}` (prox, grad, descent, norms)")))
    }
}

/// One named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// Sample counts. [`SuiteSize::quick`] is the CLI default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteSize {
    pub prox_samples: usize,
    pub prox_grid: usize,
    pub grad_instances: usize,
    pub descent_problems: usize,
    pub norm_matrices: usize,
    pub refactorizations: usize,
}

impl SuiteSize {
    pub fn quick() -> Self {
        Self {
            prox_samples: 1000,
            prox_grid: 100_000,
            grad_instances: 20,
            descent_problems: 3,
            norm_matrices: 200,
            refactorizations: 100,
        }
    }

    pub fn full() -> Self {
        Self {
            prox_samples: 10_000,
            prox_grid: 100_000,
            grad_instances: 100,
            descent_problems: 20,
            norm_matrices: 1000,
            refactorizations: 100,
        }
    }
}

pub fn run_suite(suite: Suite, size: SuiteSize, seed: u64) -> Result<Vec<CheckOutcome>> {
    match suite {
        Suite::Prox => Ok(prox_suite(size.prox_samples, size.prox_grid, seed)),
        Suite::Grad => grad_suite(size.grad_instances, seed),
        Suite::Descent => descent_suite(size.descent_problems, seed),
        Suite::Norms => norms_suite(size.norm_matrices, size.refactorizations, seed),
    }
}

/// Grid of `[0, hi]` with `θ` tabulated once, so a search costs one
/// quadratic per point.
pub struct ProxGrid {
    theta: ThetaSpec,
    step: f64,
    values: Vec<f64>,
}

impl ProxGrid {
    pub fn new(theta: ThetaSpec, hi: f64, points: usize) -> Self {
        assert!(points >= 2 && hi > 0.0);
        let step = hi / (points - 1) as f64;
        let values = (0..points).map(|k| theta.eval(k as f64 * step)).collect();
        Self { theta, step, values }
    }

    /// Best grid point for `(x - s)²/(2ν) + θ(x)`, refined by golden-section
    /// search over the two neighbouring cells. Returns `(x, cost)`.
    pub fn search(&self, nu: f64, s: f64) -> (f64, f64) {
        let inv = 0.5 / nu;
        let mut best_k = 0;
        let mut best = f64::INFINITY;
        for (k, &th) in self.values.iter().enumerate() {
            let d = k as f64 * self.step - s;
            let c = d * d * inv + th;
            if c < best {
                best = c;
                best_k = k;
            }
        }
        let x0 = best_k as f64 * self.step;
        let lo = (x0 - self.step).max(0.0);
        let hi = x0 + self.step;
        let cost = |x: f64| self.theta.prox_cost(nu, s, x);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        for _ in 0..80 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if cost(c) < cost(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let refined = 0.5 * (a + b);
        if cost(refined) < best {
            (refined, cost(refined))
        } else {
            (x0, best)
        }
    }
}

/// Largest `ν` and `s` drawn by [`prox_suite`].
pub const PROX_NU_RANGE: (f64, f64) = (1e-2, 10.0);
pub const PROX_S_MAX: f64 = 8.0;

/// For each `θ`, the closed-form prox must cost at most the oracle's
/// minimum plus `1e-9`. Minimizers never exceed `s` because every `θ` is
/// nondecreasing, so a grid over `[0, max s]` covers them.
pub fn prox_suite(samples: usize, grid_points: usize, seed: u64) -> Vec<CheckOutcome> {
    let (nu_lo, nu_hi) = PROX_NU_RANGE;
    ThetaSpec::all()
        .into_iter()
        .map(|theta| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(theta.index()));
            let grid = ProxGrid::new(theta, PROX_S_MAX, grid_points);
            let mut worst = f64::NEG_INFINITY;
            let mut worst_at = (0.0, 0.0);
            for _ in 0..samples {
                let nu = nu_lo * (nu_hi / nu_lo).powf(rng.random::<f64>());
                let s = PROX_S_MAX * rng.random::<f64>();
                let x = theta.prox(nu, s).expect("sampled arguments are valid");
                let (_, oracle) = grid.search(nu, s);
                let gap = theta.prox_cost(nu, s, x) - oracle;
                if gap > worst {
                    worst = gap;
                    worst_at = (nu, s);
                }
            }
            CheckOutcome {
                name: format!("prox {theta}"),
                passed: worst <= 1e-9,
                detail: format!(
                    "{samples} samples, largest excess cost over the oracle {worst:.3e} at (nu, s) = ({:.4}, {:.4})",
                    worst_at.0, worst_at.1
                ),
            }
        })
        .collect()
}

fn random_one_bit(rng: &mut ChaCha8Rng, n: usize, m: usize, noise: Noise, sample_rate: f64) -> Result<SmoothLoss> {
    let truth = generate_truth(n, m, 2.min(n.min(m)), rng)? * 4.0;
    let obs = sample_observations(&truth, sample_rate, noise, rng)?;
    SmoothLoss::new(crate::loss::LossKind::OneBit(noise), obs)
}

/// Worst relative error of central differences against `⟨∇f(X), D⟩` over
/// random directions, and the largest violation of the descent lemma with
/// the customary `L_f` over random pairs.
pub fn grad_suite(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (name, noise) in [("logistic", Noise::Logistic), ("laplace(b=2)", Noise::laplace(2.0)?)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_fd: f64 = 0.0;
        let mut worst_lemma = f64::NEG_INFINITY;
        let l = noise.lipschitz_constant();
        for _ in 0..instances {
            let loss = random_one_bit(&mut rng, 20, 15, noise, 0.5)?;
            let x = gaussian_matrix(&mut rng, 20, 15) * 2.0;
            let g = loss.gradient(&x)?;
            let d = gaussian_matrix(&mut rng, 20, 15);
            let h = 1e-5;
            let fd = (loss.value(&(&x + &d * h))? - loss.value(&(&x - &d * h))?) / (2.0 * h);
            let exact = g.dot(&d);
            worst_fd = worst_fd.max((fd - exact).abs() / exact.abs().max(1e-8));

            // Perturbations from 1e-3 to 1 in scale probe the curvature bound
            // both locally and far out.
            let scale = 10f64.powf(-3.0 * rng.random::<f64>());
            let y = &x + gaussian_matrix(&mut rng, 20, 15) * scale;
            let diff = &y - &x;
            let bound = loss.value(&x)? + g.dot(&diff) + 0.5 * l * diff.norm_squared();
            worst_lemma = worst_lemma.max(loss.value(&y)? - bound);
        }
        out.push(CheckOutcome {
            name: format!("gradient {name}"),
            passed: worst_fd <= 1e-5,
            detail: format!("{instances} instances, worst relative directional error {worst_fd:.3e}"),
        });
        out.push(CheckOutcome {
            name: format!("descent lemma {name}"),
            passed: worst_lemma <= 1e-9,
            detail: format!("{instances} pairs with L = {l}, largest f(Y) - bound {worst_lemma:.3e}"),
        });
    }
    Ok(out)
}

/// Runs PAMA on small one-bit problems for `theta1`–`theta3` and recomputes
/// both per-iteration descent inequalities from the iterates.
pub fn descent_suite(problems: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for theta in [ThetaSpec::Count, ThetaSpec::Square, ThetaSpec::Abs] {
        let mut worst = f64::NEG_INFINITY;
        let mut iterations = 0;
        for p in 0..problems {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(p as u64));
            let loss = random_one_bit(&mut rng, 40, 40, Noise::Logistic, 0.5)?;
            let scale = crate::experiment::lambda_scale(loss.observations());
            let mut cfg = PamaConfig::new(0.2 * scale, theta, 6);
            cfg.check_descent = false;
            cfg.max_iter = 60;
            cfg.seed = rng.random();
            let mut failure: Option<Error> = None;
            run_pama(&loss, &cfg, &mut |view| {
                if failure.is_some() {
                    return;
                }
                let s = view.state;
                let phi = |u: &DMatrix<f64>, v: &DMatrix<f64>| objective(&loss, &theta, cfg.lambda, cfg.mu, u, v);
                match (
                    phi(view.prev_u_bar, view.prev_v_bar),
                    phi(&s.u_hat, &s.v_hat),
                    phi(&s.u_bar, &s.v_bar),
                ) {
                    (Ok(before), Ok(mid), Ok(after)) => {
                        let su = (&s.u - view.prev_u_bar).norm();
                        let sv = (&s.v - &s.v_hat).norm();
                        let first = mid + 0.5 * cfg.gamma1_min * su * su - before;
                        let second = after + 0.5 * cfg.gamma2_min * sv * sv - mid;
                        worst = worst.max(first).max(second);
                        iterations += 1;
                    }
                    (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
        }
        out.push(CheckOutcome {
            name: format!("pama descent {theta}"),
            passed: worst <= 1e-8,
            detail: format!("{problems} problems, {iterations} iterations, largest increase {worst:.3e}"),
        });
    }
    Ok(out)
}

/// `‖X‖_{S_p}^p ≤ ‖X‖_{2,p}^p` for `p ∈ {½, ⅔, 1}`, and the balanced SVD
/// factorization attaining `2‖X‖_{S_p}^p`.
pub fn norms_suite(matrices: usize, refactorizations: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for p in [0.5, 2.0 / 3.0, 1.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = 0;
        for _ in 0..matrices {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=8);
            let x = gaussian_matrix(&mut rng, n, m);
            if !diagnostics::schatten_l2p_check(&x, p)?.holds {
                failures += 1;
            }
        }
        out.push(CheckOutcome {
            name: format!("schatten vs column norm p={p:.4}"),
            passed: failures == 0,
            detail: format!("{matrices} matrices, {failures} violations"),
        });
    }
    for p in [0.5, 2.0 / 3.0, 1.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let instances = (matrices / 10).max(1);
        let (mut mismatched, mut beaten) = (0, 0);
        for _ in 0..instances {
            let rank = rng.random_range(1..=4);
            let x = gaussian_matrix(&mut rng, 6, rank) * gaussian_matrix(&mut rng, 5, rank).transpose();
            let check = diagnostics::schatten_factorization_check(&x, p, 4, refactorizations, &mut rng)?;
            mismatched += usize::from(!check.witness_matches);
            beaten += usize::from(!check.witness_minimal);
        }
        out.push(CheckOutcome {
            name: format!("factorized schatten p={p:.4}"),
            passed: mismatched == 0 && beaten == 0,
            detail: format!(
                "{instances} matrices x {refactorizations} refactorizations, {mismatched} witness mismatches, {beaten} beaten witnesses"
            ),
        });
    }
    Ok(out)
}
