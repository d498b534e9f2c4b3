//! Sampled index sets with one-bit labels.
//!
//! Text format (one record per line, single spaces):
//!
//! ```text
//! n m
//! N
//! i j y      (N lines, 0-based indices, y in {1, -1})
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub i: usize,
    pub j: usize,
    /// `+1` or `-1`.
    pub y: i8,
}

/// `N` draws `(i_t, j_t, y_t)` from an `n × m` matrix. Repeated indices are
/// kept; every draw contributes its own term to a loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationSet {
    n: usize,
    m: usize,
    entries: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::param("n, m", "matrix dimensions must be positive"));
        }
        Ok(Self {
            n,
            m,
            entries: Vec::new(),
        })
    }

    pub fn from_entries(n: usize, m: usize, entries: Vec<Observation>) -> Result<Self> {
        let mut set = Self::new(n, m)?;
        set.entries.reserve(entries.len());
        for e in entries {
            set.push(e.i, e.j, e.y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, i: usize, j: usize, y: i8) -> Result<()> {
        if i >= self.n || j >= self.m {
            return Err(Error::Dimension(format!(
                "observation ({i}, {j}) outside a {}x{} matrix",
                self.n, self.m
            )));
        }
        if y != 1 && y != -1 {
            return Err(Error::param("y", format!("labels must be +1 or -1, got {y}")));
        }
        self.entries.push(Observation { i, j, y });
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    /// Largest number of draws landing on a single index (0 when empty).
    pub fn max_multiplicity(&self) -> usize {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.entries {
            *counts.entry((e.i, e.j)).or_default() += 1;
        }
        counts.into_values().max().unwrap_or(0)
    }

    /// Dense `n × m` sign matrix: the label of the last draw at each sampled
    /// index, zero elsewhere.
    pub fn sign_matrix(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, self.m);
        for e in &self.entries {
            y[(e.i, e.j)] = f64::from(e.y);
        }
        y
    }

    /// Values of a dense matrix at the sampled indices, in draw order.
    pub fn gather(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.entries.iter().map(|e| x[(e.i, e.j)]).collect()
    }

    /// Values of `A Bᵀ` at the sampled indices without forming the product.
    pub fn gather_product(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
        let r = a.ncols();
        self.entries
            .iter()
            .map(|e| (0..r).map(|k| a[(e.i, k)] * b[(e.j, k)]).sum())
            .collect()
    }

    /// `W B` where `W` is the `n × m` matrix holding `weights[t]` at draw `t`
    /// (summed over repeats) and `B` is `m × r`.
    pub fn weighted_mul(&self, weights: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for (e, &w) in self.entries.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for k in 0..b.ncols() {
                out[(e.i, k)] += w * b[(e.j, k)];
            }
        }
        out
    }

    /// `Wᵀ A` for the same `W`, with `A` being `n × r`.
    pub fn weighted_tr_mul(&self, weights: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, a.ncols());
        for (e, &w) in self.entries.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for k in 0..a.ncols() {
                out[(e.j, k)] += w * a[(e.i, k)];
            }
        }
        out
    }

    /// Dense `n × m` scatter of per-draw weights.
    pub fn scatter(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for (e, &w) in self.entries.iter().zip(weights) {
            out[(e.i, e.j)] += w;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(16 + 12 * self.entries.len());
        let _ = writeln!(s, "{} {}", self.n, self.m);
        let _ = writeln!(s, "{}", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(s, "{} {} {}", e.i, e.j, e.y);
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of input, expected {what}")))
        };
        let (_, dims) = next("`n m` header")?;
        let dims: Vec<&str> = dims.split(' ').collect();
        let [n, m] = dims.as_slice() else {
            return Err(Error::Parse(format!("header must be `n m`, got {dims:?}")));
        };
        let n = parse_usize(n, 1)?;
        let m = parse_usize(m, 1)?;
        let (_, count) = next("`N` header")?;
        let count = parse_usize(count, 2)?;
        let mut set = Self::new(n, m)?;
        set.entries.reserve(count);
        for _ in 0..count {
            let (lineno, line) = next("an observation line")?;
            let fields: Vec<&str> = line.split(' ').collect();
            let [i, j, y] = fields.as_slice() else {
                return Err(Error::Parse(format!("line {}: expected `i j y`", lineno + 1)));
            };
            let y: i8 = y
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad label `{y}`", lineno + 1)))?;
            set.push(parse_usize(i, lineno + 1)?, parse_usize(j, lineno + 1)?, y)?;
        }
        if let Some((lineno, extra)) = lines.next() {
            return Err(Error::Parse(format!("line {}: trailing content `{extra}`", lineno + 1)));
        }
        Ok(set)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse_text(&text)
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    // Canonical decimal only, so that parse-then-write reproduces the input.
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse(format!("line {line}: `{s}` is not a canonical integer")));
    }
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: integer `{s}` out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range_and_bad_labels() {
        let mut set = ObservationSet::new(2, 3).unwrap();
        assert!(set.push(2, 0, 1).is_err());
        assert!(set.push(0, 3, 1).is_err());
        assert!(set.push(0, 0, 0).is_err());
        assert!(set.push(1, 2, -1).is_ok());
        assert!(ObservationSet::new(0, 3).is_err());
    }

    #[test]
    fn text_format_layout() {
        let set = ObservationSet::from_entries(
            3,
            2,
            vec![
                Observation { i: 0, j: 1, y: 1 },
                Observation { i: 2, j: 0, y: -1 },
                Observation { i: 0, j: 1, y: -1 },
            ],
        )
        .unwrap();
        assert_eq!(set.to_text(), "3 2\n3\n0 1 1\n2 0 -1\n0 1 -1\n");
        assert_eq!(set.max_multiplicity(), 2);
        let y = set.sign_matrix();
        assert_eq!(y[(0, 1)], -1.0);
        assert_eq!(y[(2, 0)], -1.0);
        assert_eq!(y[(1, 1)], 0.0);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        for bad in [
            "",
            "3 2\n",
            "3 2\n1\n",
            "3 2\n1\n0 1 2\n",
            "3 2\n1\n3 1 1\n",
            "3 2\n1\n0 1 1\nextra\n",
            "3  2\n0\n",
            "03 2\n0\n",
        ] {
            assert!(ObservationSet::parse_text(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sparse_products_match_dense() {
        let set = ObservationSet::from_entries(
            3,
            4,
            vec![
                Observation { i: 0, j: 1, y: 1 },
                Observation { i: 2, j: 3, y: -1 },
                Observation { i: 0, j: 1, y: 1 },
                Observation { i: 1, j: 0, y: 1 },
            ],
        )
        .unwrap();
        let w = [0.5, -1.0, 2.0, 3.0];
        let dense = set.scatter(&w);
        let b = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let a = DMatrix::from_fn(3, 2, |i, j| (i * j) as f64 + 0.25);
        assert!((set.weighted_mul(&w, &b) - &dense * &b).norm() < 1e-14);
        assert!((set.weighted_tr_mul(&w, &a) - dense.transpose() * &a).norm() < 1e-14);
        let x = &a * b.transpose();
        let direct = set.gather(&x);
        let factored = set.gather_product(&a, &b);
        for (p, q) in direct.iter().zip(&factored) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    fn arb_set() -> impl Strategy<Value = ObservationSet> {
        (1usize..40, 1usize..40).prop_flat_map(|(n, m)| {
            prop::collection::vec((0..n, 0..m, prop::bool::ANY), 0..60).prop_map(move |raw| {
                let entries = raw
                    .into_iter()
                    .map(|(i, j, pos)| Observation {
                        i,
                        j,
                        y: if pos { 1 } else { -1 },
                    })
                    .collect();
                ObservationSet::from_entries(n, m, entries).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(set in arb_set()) {
            let text = set.to_text();
            let back = ObservationSet::parse_text(&text).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
