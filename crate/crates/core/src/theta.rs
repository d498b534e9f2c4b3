//! Sparsity-inducing scalar regularizers `θ` and their proximal maps.
//!
//! Every regularizer is `0` at the origin, positive on `(0, ∞)`, `+∞` on the
//! negative axis and differentiable on `(0, ∞)`. The column regularizer
//! `ϑ(W) = Σ_i θ(‖W_i‖)` and its proximal map are built on top of the scalar
//! proximal map.
//!
//! Proximal maps of nonconvex `θ` are set-valued at their thresholds. This
//! module always returns the smallest minimizer, so zero wins every tie.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// One of the six regularizers. Config names are `theta1` … `theta6`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaSpec {
    /// `theta1`: `sign(t)`, so `ϑ` counts nonzero columns.
    Count,
    /// `theta2`: `t²`, the factorized nuclear norm.
    Square,
    /// `theta3`: `t`, the column `ℓ2,1` norm.
    Abs,
    /// `theta4`: `t^{1/2}`.
    Half,
    /// `theta5`: `t^{2/3}`.
    TwoThirds,
    /// `theta6`: linear up to `2/(ρ(a+1))`, quadratic up to `2a/(ρ(a+1))`,
    /// then constant `1`.
    Scad { a: f64, rho: f64 },
}

impl ThetaSpec {
    pub fn scad(a: f64, rho: f64) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(Error::param("a", format!("must be finite and > 1, got {a}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param("rho", format!("must be finite and > 0, got {rho}")));
        }
        Ok(ThetaSpec::Scad { a, rho })
    }

    /// All six kinds, with `a = 3, ρ = 1` for the last one.
    pub fn all() -> [ThetaSpec; 6] {
        [
            ThetaSpec::Count,
            ThetaSpec::Square,
            ThetaSpec::Abs,
            ThetaSpec::Half,
            ThetaSpec::TwoThirds,
            ThetaSpec::Scad { a: 3.0, rho: 1.0 },
        ]
    }

    /// Index in `1..=6`.
    pub fn index(&self) -> u8 {
        match self {
            ThetaSpec::Count => 1,
            ThetaSpec::Square => 2,
            ThetaSpec::Abs => 3,
            ThetaSpec::Half => 4,
            ThetaSpec::TwoThirds => 5,
            ThetaSpec::Scad { .. } => 6,
        }
    }

    /// Breakpoints `(2/(ρ(a+1)), 2a/(ρ(a+1)))` of `theta6`.
    pub fn scad_breakpoints(a: f64, rho: f64) -> (f64, f64) {
        let denom = rho * (a + 1.0);
        (2.0 / denom, 2.0 * a / denom)
    }

    /// `θ(t)`, `+∞` for negative `t`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::INFINITY;
        }
        match *self {
            ThetaSpec::Count => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ThetaSpec::Square => t * t,
            ThetaSpec::Abs => t,
            ThetaSpec::Half => t.sqrt(),
            ThetaSpec::TwoThirds => {
                let c = t.cbrt();
                c * c
            }
            ThetaSpec::Scad { a, rho } => scad_eval(a, rho, t),
        }
    }

    /// `θ'(t)` for `t > 0`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param("t", format!("derivative needs t > 0, got {t}")));
        }
        Ok(match *self {
            ThetaSpec::Count => 0.0,
            ThetaSpec::Square => 2.0 * t,
            ThetaSpec::Abs => 1.0,
            ThetaSpec::Half => 0.5 / t.sqrt(),
            ThetaSpec::TwoThirds => 2.0 / (3.0 * t.cbrt()),
            ThetaSpec::Scad { a, rho } => {
                let (lo, hi) = Self::scad_breakpoints(a, rho);
                if t <= lo {
                    rho
                } else if t <= hi {
                    rho - rho * (a + 1.0) * (rho * (a + 1.0) * t - 2.0) / (2.0 * (a * a - 1.0))
                } else {
                    0.0
                }
            }
        })
    }

    /// Scalar proximal map: the smallest minimizer of
    /// `(x - s)² / (2ν) + θ(x)`.
    pub fn prox(&self, nu: f64, s: f64) -> Result<f64> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::param("nu", format!("must be finite and > 0, got {nu}")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::param("s", format!("must be finite and >= 0, got {s}")));
        }
        Ok(self.prox_unchecked(nu, s))
    }

    /// `(x - s)² / (2ν) + θ(x)`.
    pub fn prox_cost(&self, nu: f64, s: f64, x: f64) -> f64 {
        let d = x - s;
        d * d / (2.0 * nu) + self.eval(x)
    }

    pub(crate) fn prox_unchecked(&self, nu: f64, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        match *self {
            ThetaSpec::Count => {
                // Candidates 0 and s; keep s only when strictly cheaper.
                if s * s / (2.0 * nu) > 1.0 {
                    s
                } else {
                    0.0
                }
            }
            ThetaSpec::Square => s / (1.0 + 2.0 * nu),
            ThetaSpec::Abs => (s - nu).max(0.0),
            ThetaSpec::Half => self.keep_if_cheaper(nu, s, half_threshold(2.0 * nu, s)),
            ThetaSpec::TwoThirds => self.keep_if_cheaper(nu, s, two_thirds_threshold(2.0 * nu, s)),
            ThetaSpec::Scad { a, rho } => self.scad_prox(a, rho, nu, s),
        }
    }

    fn keep_if_cheaper(&self, nu: f64, s: f64, candidate: Option<f64>) -> f64 {
        match candidate {
            Some(x) if self.prox_cost(nu, s, x) < self.prox_cost(nu, s, 0.0) => x,
            _ => 0.0,
        }
    }

    fn scad_prox(&self, a: f64, rho: f64, nu: f64, s: f64) -> f64 {
        let (lo, hi) = Self::scad_breakpoints(a, rho);
        // Stationary point of each smooth piece, clamped into its interval,
        // plus the breakpoints and the origin.
        let linear = (s - nu * rho).clamp(0.0, lo);
        let c = rho * (a + 1.0) / (2.0 * (a * a - 1.0));
        let slope = 1.0 / nu - c * rho * (a + 1.0);
        let rhs = s / nu - rho - 2.0 * c;
        let quadratic = if slope != 0.0 { (rhs / slope).clamp(lo, hi) } else { lo };
        let flat = s.max(hi);
        let mut candidates = [0.0, linear, lo, quadratic, hi, flat];
        candidates.sort_by(f64::total_cmp);
        let mut best = candidates[0];
        let mut best_cost = self.prox_cost(nu, s, best);
        for &x in &candidates[1..] {
            let cost = self.prox_cost(nu, s, x);
            if cost < best_cost {
                best = x;
                best_cost = cost;
            }
        }
        best
    }

    /// Column proximal map: the minimizer of `½‖γx − u‖² + λθ(‖x‖)`, a
    /// nonnegative multiple of `u`.
    pub fn prox_column(&self, lambda: f64, gamma: f64, u: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        check_positive("lambda", lambda)?;
        check_positive("gamma", gamma)?;
        Ok(u.scale(self.column_scale(lambda, gamma, u.norm())))
    }

    /// Factor `c ≥ 0` with `prox_column(u) = c·u`, given `‖u‖`.
    pub(crate) fn column_scale(&self, lambda: f64, gamma: f64, unorm: f64) -> f64 {
        if unorm == 0.0 {
            return 0.0;
        }
        let radius = self.prox_unchecked(lambda / (gamma * gamma), unorm / gamma);
        radius / unorm
    }

    /// Applies the column proximal map to every column of `g`, column `i`
    /// using `gammas[i]`.
    pub(crate) fn prox_columns(&self, lambda: f64, gammas: &[f64], g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = g.clone();
        for (i, mut col) in out.column_iter_mut().enumerate() {
            let scale = self.column_scale(lambda, gammas[i], col.norm());
            col *= scale;
        }
        out
    }

    /// `ϑ(W) = Σ_i θ(‖W_i‖)`.
    pub fn vartheta(&self, w: &DMatrix<f64>) -> f64 {
        w.column_iter().map(|c| self.eval(c.norm())).sum()
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

fn scad_eval(a: f64, rho: f64, t: f64) -> f64 {
    let (lo, hi) = ThetaSpec::scad_breakpoints(a, rho);
    if t <= lo {
        rho * t
    } else if t <= hi {
        let q = rho * (a + 1.0) * t - 2.0;
        rho * t - q * q / (4.0 * (a * a - 1.0))
    } else {
        1.0
    }
}

/// Half thresholding for `min_x (x − s)² + λ|x|^{1/2}`, `s > 0`: the nonzero
/// stationary point when it exists.
fn half_threshold(lambda: f64, s: f64) -> Option<f64> {
    let threshold = 54f64.cbrt() / 4.0 * lambda.powf(2.0 / 3.0);
    if s <= threshold {
        return None;
    }
    let phi = (lambda / 8.0 * (s / 3.0).powf(-1.5)).min(1.0).acos();
    let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
    Some(2.0 / 3.0 * s * (1.0 + (two_pi_3 - 2.0 / 3.0 * phi).cos()))
}

/// 2/3-thresholding for `min_x (x − s)² + λ|x|^{2/3}`, `s > 0`.
fn two_thirds_threshold(lambda: f64, s: f64) -> Option<f64> {
    let threshold = 2.0 / 3.0 * (3.0 * lambda.powi(3)).powf(0.25);
    if s <= threshold {
        return None;
    }
    let arg = (27.0 * s * s / 16.0 * lambda.powf(-1.5)).max(1.0);
    let psi = arg.acosh();
    let phi = 2.0 / 3f64.sqrt() * lambda.powf(0.25) * (psi / 3.0).cosh().sqrt();
    let inner = (2.0 * s / phi - phi * phi).max(0.0);
    let root = (phi + inner.sqrt()) / 2.0;
    Some(root * root * root)
}

impl fmt::Display for ThetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaSpec::Scad { a, rho } => write!(f, "theta6(a={a},rho={rho})"),
            other => write!(f, "theta{}", other.index()),
        }
    }
}

impl FromStr for ThetaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let text: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        let (head, args) = match text.find('(') {
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("unbalanced parentheses in `{s}`")))?;
                (&text[..open], Some(inner))
            }
            None => (text.as_str(), None),
        };
        let simple = match head {
            "theta1" => Some(ThetaSpec::Count),
            "theta2" => Some(ThetaSpec::Square),
            "theta3" => Some(ThetaSpec::Abs),
            "theta4" => Some(ThetaSpec::Half),
            "theta5" => Some(ThetaSpec::TwoThirds),
            "theta6" => None,
            _ => return Err(Error::Parse(format!("unknown regularizer `{s}`"))),
        };
        if let Some(spec) = simple {
            return match args {
                None | Some("") => Ok(spec),
                Some(_) => Err(Error::Parse(format!("`{head}` takes no parameters"))),
            };
        }
        let args = args.ok_or_else(|| Error::Parse("theta6 needs parameters, e.g. theta6(a=3,rho=1.5)".into()))?;
        let (mut a, mut rho) = (None, None);
        for pair in args.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{value}` for `{key}`")))?;
            match key {
                "a" => a = Some(value),
                "rho" => rho = Some(value),
                _ => return Err(Error::Parse(format!("unknown theta6 parameter `{key}`"))),
            }
        }
        match (a, rho) {
            (Some(a), Some(rho)) => ThetaSpec::scad(a, rho),
            _ => Err(Error::Parse("theta6 needs both `a` and `rho`".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn grid_min(spec: &ThetaSpec, nu: f64, s: f64, points: usize) -> f64 {
        let hi = s + 1.0;
        (0..points)
            .map(|j| spec.prox_cost(nu, s, hi * j as f64 / (points - 1) as f64))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn eval_table_values() {
        assert_eq!(ThetaSpec::Count.eval(0.0), 0.0);
        assert_eq!(ThetaSpec::Square.eval(3.0), 9.0);
        let scad = ThetaSpec::scad(2.0, 1.0).unwrap();
        assert!((scad.eval(0.5) - 0.5).abs() < 1e-15);
        for spec in ThetaSpec::all() {
            assert_eq!(spec.eval(-1e-3), f64::INFINITY);
            assert_eq!(spec.eval(0.0), 0.0);
            assert!(spec.eval(0.37) > 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        assert_eq!(ThetaSpec::Square.derivative(3.0).unwrap(), 6.0);
        assert!((ThetaSpec::Half.derivative(4.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(ThetaSpec::Count.derivative(1.0).unwrap(), 0.0);
        assert!(ThetaSpec::Abs.derivative(0.0).is_err());
        assert!(ThetaSpec::Abs.derivative(-1.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for spec in ThetaSpec::all() {
            for &t in &[0.05, 0.3, 0.45, 0.9, 1.7, 4.0] {
                let h = 1e-6;
                let fd = (spec.eval(t + h) - spec.eval(t - h)) / (2.0 * h);
                let d = spec.derivative(t).unwrap();
                assert!((fd - d).abs() < 1e-6, "{spec} t={t}: fd {fd} vs {d}");
            }
        }
    }

    #[test]
    fn scalar_prox_examples() {
        assert!((ThetaSpec::Square.prox(0.5, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ThetaSpec::Count.prox(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(ThetaSpec::Abs.prox(1.0, 3.0).unwrap(), 2.0);
        for spec in ThetaSpec::all() {
            assert_eq!(spec.prox(0.7, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn scalar_prox_examples_agree_with_grid() {
        for (spec, nu, s) in [
            (ThetaSpec::Square, 0.5, 2.0),
            (ThetaSpec::Count, 2.0, 1.0),
            (ThetaSpec::Abs, 1.0, 3.0),
        ] {
            let x = spec.prox(nu, s).unwrap();
            assert!(spec.prox_cost(nu, s, x) <= grid_min(&spec, nu, s, 1_000_001) + 1e-9);
        }
    }

    #[test]
    fn prox_rejects_bad_arguments() {
        assert!(ThetaSpec::Abs.prox(0.0, 1.0).is_err());
        assert!(ThetaSpec::Abs.prox(-1.0, 1.0).is_err());
        assert!(ThetaSpec::Abs.prox(1.0, -0.5).is_err());
        let u = dvector![1.0, 2.0];
        assert!(ThetaSpec::Abs.prox_column(0.0, 1.0, u.as_view()).is_err());
        assert!(ThetaSpec::Abs.prox_column(1.0, -1.0, u.as_view()).is_err());
    }

    #[test]
    fn count_ties_resolve_to_zero() {
        // s = √(2ν) exactly: both 0 and s cost 1.
        let nu = 0.5;
        assert_eq!(ThetaSpec::Count.prox(nu, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn column_prox_examples() {
        for spec in ThetaSpec::all() {
            let z = spec.prox_column(1.0, 1.0, DVector::zeros(3).as_view()).unwrap();
            assert_eq!(z.norm(), 0.0);
        }
        let u = dvector![3.0, 4.0];
        let x = ThetaSpec::Square.prox_column(0.5, 1.0, u.as_view()).unwrap();
        assert!((x - dvector![1.5, 2.0]).norm() < 1e-15);
        let unit = dvector![0.6, 0.8];
        let x = ThetaSpec::Count.prox_column(2.0, 1.0, unit.as_view()).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn vartheta_examples() {
        assert_eq!(ThetaSpec::Count.vartheta(&DMatrix::zeros(4, 3)), 0.0);
        let mut w = DMatrix::zeros(3, 5);
        w[(0, 0)] = 1.0;
        w[(1, 2)] = -2.0;
        w[(2, 4)] = 0.1;
        assert_eq!(ThetaSpec::Count.vartheta(&w), 3.0);
        assert_eq!(ThetaSpec::Square.vartheta(&DMatrix::identity(2, 2)), 2.0);
    }

    #[test]
    fn scad_is_continuous_at_breakpoints() {
        for &(a, rho) in &[(2.0, 1.0), (3.7, 0.5), (1.1, 4.0)] {
            let (lo, hi) = ThetaSpec::scad_breakpoints(a, rho);
            let q = |t: f64| {
                let v = rho * (a + 1.0) * t - 2.0;
                rho * t - v * v / (4.0 * (a * a - 1.0))
            };
            assert!((q(lo) - rho * lo).abs() < 1e-12);
            assert!((q(hi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("theta1".parse::<ThetaSpec>().unwrap(), ThetaSpec::Count);
        assert_eq!(" Theta4 ".parse::<ThetaSpec>().unwrap(), ThetaSpec::Half);
        assert_eq!(
            "theta6(a=3,rho=1.5)".parse::<ThetaSpec>().unwrap(),
            ThetaSpec::Scad { a: 3.0, rho: 1.5 }
        );
        assert_eq!(
            "theta6( rho = 2 , a = 4 )".parse::<ThetaSpec>().unwrap(),
            ThetaSpec::Scad { a: 4.0, rho: 2.0 }
        );
        for spec in ThetaSpec::all() {
            assert_eq!(spec.to_string().parse::<ThetaSpec>().unwrap(), spec);
        }
        for bad in [
            "theta7",
            "theta6",
            "theta6(a=1,rho=1)",
            "theta6(a=3)",
            "theta2(a=1)",
            "theta6(a=3,rho=1",
        ] {
            assert!(bad.parse::<ThetaSpec>().is_err(), "{bad}");
        }
    }
}
