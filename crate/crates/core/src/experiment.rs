//! Synthetic one-bit completion experiments and the `λ` sweep.
//!
//! Every instance redraws the truth, the sample and the signs from its own
//! seed, and uses its own starting point, shared by both solvers and by every
//! `c_λ` so that curves over the grid compare like with like.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::nonzero_columns;
use crate::loss::{Noise, SmoothLoss};
use crate::observations::ObservationSet;
use crate::palm::{run_palm, PalmConfig};
use crate::pama::{run_pama, PamaConfig};
use crate::theta::ThetaSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Logistic,
    Laplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Pama,
    Palm,
    Both,
}

impl SolverChoice {
    fn solvers(self) -> &'static [Solver] {
        match self {
            SolverChoice::Pama => &[Solver::Pama],
            SolverChoice::Palm => &[Solver::Palm],
            SolverChoice::Both => &[Solver::Pama, Solver::Palm],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Solver {
    Pama,
    Palm,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Pama => "pama",
            Solver::Palm => "palm",
        }
    }
}

/// Sweep configuration, read from TOML. Missing keys take the desk preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub r_star: usize,
    /// Rank budget `r = rank_multiplier · r_star`.
    pub rank_multiplier: usize,
    pub sample_rate: f64,
    pub noise: NoiseKind,
    /// Laplace scale `b`.
    pub laplace_b: f64,
    pub c_lambda_grid: Vec<f64>,
    pub instances: usize,
    pub solver: SolverChoice,
    pub seed: u64,
    pub output: PathBuf,
    /// Regularizer in config syntax, e.g. `theta1` or `theta6(a=3,rho=1)`.
    pub theta: String,
    pub mu: f64,
    pub max_iter: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub palm_smooth_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// `300 × 300`, `r* = 5`.
    pub fn desk() -> Self {
        Self {
            n: 300,
            m: 300,
            r_star: 5,
            rank_multiplier: 3,
            sample_rate: 0.4,
            noise: NoiseKind::Logistic,
            laplace_b: 2.0,
            c_lambda_grid: vec![
                0.1, 0.2, 0.4, 0.8, 0.9, 1.0, 1.05, 1.1, 1.2, 1.3, 1.4, 1.45, 1.5, 1.6, 3.2, 6.4,
            ],
            instances: 5,
            solver: SolverChoice::Both,
            seed: 2024,
            output: PathBuf::from("sweep-out"),
            theta: "theta1".into(),
            mu: 1e-8,
            max_iter: 200,
            eps1: 5e-4,
            eps2: 1e-3,
            eps3: 5e-4,
            eps4: 1e-3,
            palm_smooth_only: false,
        }
    }

    /// Full scale: `2000 × 2000`, `r* = 10`, otherwise as [`Self::desk`].
    pub fn full() -> Self {
        Self {
            n: 2000,
            m: 2000,
            r_star: 10,
            ..Self::desk()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn rank(&self) -> usize {
        self.rank_multiplier * self.r_star
    }

    pub fn theta_spec(&self) -> Result<ThetaSpec> {
        self.theta.parse()
    }

    pub fn noise_model(&self) -> Result<Noise> {
        match self.noise {
            NoiseKind::Logistic => Ok(Noise::Logistic),
            NoiseKind::Laplace => Noise::laplace(self.laplace_b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be positive".into()));
        }
        if self.r_star == 0 || self.r_star > self.n.min(self.m) {
            return Err(Error::Config(format!("r_star must lie in [1, {}]", self.n.min(self.m))));
        }
        if self.rank() == 0 || self.rank() > self.n.min(self.m) {
            return Err(Error::Config(format!(
                "rank budget {} must lie in [1, {}]",
                self.rank(),
                self.n.min(self.m)
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::Config(format!(
                "sample_rate must lie in (0, 1], got {}",
                self.sample_rate
            )));
        }
        if self.c_lambda_grid.is_empty() || self.c_lambda_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config(
                "c_lambda_grid must be a nonempty list of positive numbers".into(),
            ));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be at least 1".into()));
        }
        self.theta_spec()?;
        self.noise_model()?;
        self.pama_config(1.0, 0).validate()?;
        self.palm_config(1.0, 0).validate()?;
        Ok(())
    }

    pub fn pama_config(&self, lambda: f64, seed: u64) -> PamaConfig {
        let mut c = PamaConfig::new(lambda, self.theta_spec().unwrap_or(ThetaSpec::Count), self.rank());
        c.mu = self.mu;
        c.max_iter = self.max_iter;
        c.eps1 = self.eps1;
        c.eps2 = self.eps2;
        c.seed = seed;
        c
    }

    pub fn palm_config(&self, lambda: f64, seed: u64) -> PalmConfig {
        let mut c = PalmConfig::new(lambda, self.theta_spec().unwrap_or(ThetaSpec::Count), self.rank());
        c.mu = self.mu;
        c.max_iter = self.max_iter;
        c.eps3 = self.eps3;
        c.eps4 = self.eps4;
        c.seed = seed;
        c.smooth_only = self.palm_smooth_only;
        c
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of one instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstanceSeeds {
    /// Truth, sample and signs.
    pub data: u64,
    /// Starting point of both solvers.
    pub init: u64,
}

impl InstanceSeeds {
    pub fn derive(seed: u64, instance: usize) -> Self {
        let base = mix(seed ^ mix(instance as u64));
        Self {
            data: mix(base ^ 1),
            init: mix(base ^ 2),
        }
    }
}

/// `M* = M_L M_Rᵀ` with `U[-½, ½]` factor entries, `M_L` drawn first, each
/// filled column by column.
pub fn generate_truth<R: Rng + ?Sized>(n: usize, m: usize, r_star: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if r_star == 0 || r_star > n.min(m) {
        return Err(Error::param(
            "r_star",
            format!("must lie in [1, {}], got {r_star}", n.min(m)),
        ));
    }
    let mut fill = |rows: usize| {
        let mut out = DMatrix::zeros(rows, r_star);
        for j in 0..r_star {
            for i in 0..rows {
                out[(i, j)] = rng.random::<f64>() - 0.5;
            }
        }
        out
    };
    let left = fill(n);
    let right = fill(m);
    Ok(left * right.transpose())
}

/// `round(SR·n·m)` uniform draws with replacement; each draw gets `+1` with
/// probability `φ(M*_ij)`. Per draw the row, column and sign uniform are
/// taken from `rng` in that order.
pub fn sample_observations<R: Rng + ?Sized>(
    truth: &DMatrix<f64>,
    sample_rate: f64,
    noise: Noise,
    rng: &mut R,
) -> Result<ObservationSet> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::param(
            "sample_rate",
            format!("must lie in (0, 1], got {sample_rate}"),
        ));
    }
    let (n, m) = truth.shape();
    let count = (sample_rate * (n * m) as f64).round() as usize;
    let mut obs = ObservationSet::new(n, m)?;
    for _ in 0..count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..m);
        let y = if rng.random::<f64>() < noise.cdf(truth[(i, j)]) {
            1
        } else {
            -1
        };
        obs.push(i, j, y)?;
    }
    Ok(obs)
}

/// `‖X − M*‖_F / ‖M*‖_F`.
pub fn relative_error(x: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != truth.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", x.shape(), truth.shape())));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::param("truth", "relative error is undefined for a zero matrix"));
    }
    Ok((x - truth).norm() / denom)
}

/// `max_j ‖Y_j‖` over the columns of the observed sign matrix.
pub fn lambda_scale(obs: &ObservationSet) -> f64 {
    obs.sign_matrix().column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// One synthetic problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub index: usize,
    pub seeds: InstanceSeeds,
    pub truth: DMatrix<f64>,
    pub loss: SmoothLoss,
    pub lambda_scale: f64,
}

pub fn build_instance(config: &ExperimentConfig, index: usize) -> Result<Instance> {
    let seeds = InstanceSeeds::derive(config.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.data);
    let truth = generate_truth(config.n, config.m, config.r_star, &mut rng)?;
    let noise = config.noise_model()?;
    let obs = sample_observations(&truth, config.sample_rate, noise, &mut rng)?;
    let scale = lambda_scale(&obs);
    let loss = SmoothLoss::new(crate::loss::LossKind::OneBit(noise), obs)?;
    Ok(Instance {
        index,
        seeds,
        truth,
        loss,
        lambda_scale: scale,
    })
}

pub const RUNS_HEADER: &str = "solver,c_lambda,instance,re,rank,time_s,iters,objective";
pub const AVERAGES_HEADER: &str = "solver,c_lambda,runs,re,rank,time_s,iters,objective";

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub solver: Solver,
    pub c_lambda: f64,
    pub instance: usize,
    pub re: f64,
    /// Columns nonzero in both output factors.
    pub rank: usize,
    pub time_s: f64,
    pub iters: usize,
    pub objective: f64,
}

impl RunRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.solver.name(),
            self.c_lambda,
            self.instance,
            self.re,
            self.rank,
            self.time_s,
            self.iters,
            self.objective
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub solver: Solver,
    pub c_lambda: f64,
    pub instance: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageRow {
    pub solver: Solver,
    pub c_lambda: f64,
    pub runs: usize,
    pub re: f64,
    pub rank: f64,
    pub time_s: f64,
    pub iters: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    /// Sorted by solver, `c_λ`, instance.
    pub runs: Vec<RunRow>,
    pub failures: Vec<Failure>,
    pub averages: Vec<AverageRow>,
    /// `(instance, seeds, λ scale)` for the manifest.
    pub instances: Vec<(usize, InstanceSeeds, f64)>,
}

fn shared_rank(u: &DMatrix<f64>, v: &DMatrix<f64>, tol: f64) -> usize {
    let ju = nonzero_columns(u, tol);
    let jv = nonzero_columns(v, tol);
    ju.iter().filter(|j| jv.contains(j)).count()
}

/// Runs one solver on one instance.
pub fn run_cell(config: &ExperimentConfig, inst: &Instance, solver: Solver, c_lambda: f64) -> Result<RunRow> {
    let lambda = c_lambda * inst.lambda_scale;
    let (u, v, trace) = match solver {
        Solver::Pama => {
            let cfg = config.pama_config(lambda, inst.seeds.init);
            let out = run_pama(&inst.loss, &cfg, &mut |_| {})?;
            (out.u, out.v, out.trace)
        }
        Solver::Palm => {
            let cfg = config.palm_config(lambda, inst.seeds.init);
            let out = run_palm(&inst.loss, &cfg)?;
            (out.u, out.v, out.trace)
        }
    };
    let last = trace.last().expect("trace is never empty");
    Ok(RunRow {
        solver,
        c_lambda,
        instance: inst.index,
        re: relative_error(&(&u * v.transpose()), &inst.truth)?,
        rank: shared_rank(&u, &v, 1e-10),
        time_s: last.time_s,
        iters: last.k,
        objective: last.objective,
    })
}

/// Runs every `(solver, c_λ, instance)` cell. Solver errors are collected
/// rather than aborting the sweep. `progress` is called after each cell.
pub fn run_sweep(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepResult> {
    config.validate()?;
    let mut result = SweepResult::default();
    for index in 0..config.instances {
        let inst = build_instance(config, index)?;
        result.instances.push((index, inst.seeds, inst.lambda_scale));
        for &solver in config.solver.solvers() {
            for &c in &config.c_lambda_grid {
                match run_cell(config, &inst, solver, c) {
                    Ok(row) => {
                        progress(&row.csv());
                        result.runs.push(row);
                    }
                    Err(e) => {
                        progress(&format!("{},{c},{index},error: {e}", solver.name()));
                        result.failures.push(Failure {
                            solver,
                            c_lambda: c,
                            instance: index,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    result.runs.sort_by(|a, b| {
        (a.solver, a.c_lambda, a.instance)
            .partial_cmp(&(b.solver, b.c_lambda, b.instance))
            .expect("grid values are finite")
    });
    result.averages = averages(&result.runs);
    Ok(result)
}

/// Arithmetic means per `(solver, c_λ)` over the successful runs.
pub fn averages(runs: &[RunRow]) -> Vec<AverageRow> {
    let mut out: Vec<AverageRow> = Vec::new();
    for row in runs {
        match out.last_mut() {
            Some(a) if a.solver == row.solver && a.c_lambda == row.c_lambda => {
                a.runs += 1;
                a.re += row.re;
                a.rank += row.rank as f64;
                a.time_s += row.time_s;
                a.iters += row.iters as f64;
                a.objective += row.objective;
            }
            _ => out.push(AverageRow {
                solver: row.solver,
                c_lambda: row.c_lambda,
                runs: 1,
                re: row.re,
                rank: row.rank as f64,
                time_s: row.time_s,
                iters: row.iters as f64,
                objective: row.objective,
            }),
        }
    }
    for a in &mut out {
        let k = a.runs as f64;
        a.re /= k;
        a.rank /= k;
        a.time_s /= k;
        a.iters /= k;
        a.objective /= k;
    }
    out
}

impl SweepResult {
    pub fn runs_csv(&self) -> String {
        let mut s = format!("{RUNS_HEADER}\n");
        for r in &self.runs {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn averages_csv(&self) -> String {
        let mut s = format!("{AVERAGES_HEADER}\n");
        for a in &self.averages {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                a.solver.name(),
                a.c_lambda,
                a.runs,
                a.re,
                a.rank,
                a.time_s,
                a.iters,
                a.objective
            );
        }
        s
    }

    pub fn failures_csv(&self) -> String {
        let mut s = String::from("solver,c_lambda,instance,message\n");
        for f in &self.failures {
            let msg = f.message.replace(['\n', ','], " ");
            let _ = writeln!(s, "{},{},{},{}", f.solver.name(), f.c_lambda, f.instance, msg);
        }
        s
    }

    pub fn manifest(&self, config: &ExperimentConfig) -> String {
        let mut s = String::from("# resolved configuration\n");
        s.push_str(&config.to_toml());
        s.push_str("\n# instances redraw truth, sample and signs; both solvers share each starting point\n");
        s.push_str("# instance,data_seed,init_seed,lambda_scale\n");
        for (i, seeds, scale) in &self.instances {
            let _ = writeln!(s, "# {i},{},{},{scale}", seeds.data, seeds.init);
        }
        let _ = writeln!(s, "# runs={} failures={}", self.runs.len(), self.failures.len());
        s
    }

    /// Writes `runs.csv`, `averages.csv`, `failures.csv` and `manifest.txt`.
    pub fn write(&self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("runs.csv"), self.runs_csv())?;
        fs::write(dir.join("averages.csv"), self.averages_csv())?;
        fs::write(dir.join("failures.csv"), self.failures_csv())?;
        fs::write(dir.join("manifest.txt"), self.manifest(config))?;
        Ok(())
    }
}

/// Dense matrix as comma-separated rows.
pub fn matrix_to_csv(x: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|j| x[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{v}`", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!("line {}: ragged row", lineno + 1)));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_is_low_rank_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = generate_truth(2, 2, 1, &mut rng).unwrap();
        assert!(t.determinant().abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = generate_truth(20, 15, 3, &mut rng).unwrap();
        let sv = crate::linalg::singular_values(&t).unwrap();
        let mut sorted: Vec<f64> = sv.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[2] > 1e-6 && sorted[3] < 1e-12);
        // Entries of M* are sums of r* products bounded by ¼.
        assert!(t.iter().all(|v| v.abs() <= 3.0 * 0.25));
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            generate_truth(5, 4, 2, &mut a).unwrap(),
            generate_truth(5, 4, 2, &mut b).unwrap()
        );
    }

    #[test]
    fn sample_size_and_sign_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs = sample_observations(&DMatrix::zeros(10, 10), 0.4, Noise::Logistic, &mut rng).unwrap();
        assert_eq!(obs.len(), 40);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs = sample_observations(&DMatrix::zeros(100, 1000), 1.0, Noise::Logistic, &mut rng).unwrap();
        let plus = obs.entries().iter().filter(|e| e.y > 0).count() as f64 / obs.len() as f64;
        assert!((plus - 0.5).abs() <= 0.01, "{plus}");

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let big = DMatrix::from_element(10, 10, 60.0);
        let obs = sample_observations(&big, 1.0, Noise::laplace(2.0).unwrap(), &mut rng).unwrap();
        assert!(obs.entries().iter().all(|e| e.y == 1));
        assert!(sample_observations(&big, 0.0, Noise::Logistic, &mut rng).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let t = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64 + 1.0);
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        assert_eq!(relative_error(&DMatrix::zeros(3, 2), &t).unwrap(), 1.0);
        assert!((relative_error(&(&t * 2.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_error(&t, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let c = ExperimentConfig::desk();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = ExperimentConfig::from_toml("n = 40\nm = 30\nsolver = \"pama\"\n").unwrap();
        assert_eq!((partial.n, partial.m, partial.solver), (40, 30, SolverChoice::Pama));
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("sample_rate = 1.5").is_err());
        assert!(ExperimentConfig::from_toml("theta = \"theta9\"").is_err());
        assert_eq!(ExperimentConfig::full().n, 2000);
    }

    #[test]
    fn seeds_differ_per_instance() {
        let a = InstanceSeeds::derive(1, 0);
        let b = InstanceSeeds::derive(1, 1);
        assert_ne!(a, b);
        assert_ne!(a.data, a.init);
        assert_eq!(a, InstanceSeeds::derive(1, 0));
    }

    #[test]
    fn small_sweep_shapes_and_determinism() {
        let config = ExperimentConfig {
            n: 30,
            m: 25,
            r_star: 2,
            c_lambda_grid: vec![0.5, 2.0],
            instances: 2,
            max_iter: 15,
            ..ExperimentConfig::desk()
        };
        let a = run_sweep(&config, &mut |_| {}).unwrap();
        assert_eq!(a.runs.len() + a.failures.len(), 8);
        assert_eq!(a.averages.len(), 4);
        let b = run_sweep(&config, &mut |_| {}).unwrap();
        let strip = |r: &SweepResult| {
            r.runs
                .iter()
                .map(|x| RunRow {
                    time_s: 0.0,
                    ..x.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        let lines: Vec<_> = a.runs_csv().lines().map(str::to_owned).collect();
        assert_eq!(lines[0], RUNS_HEADER);
        for avg in &a.averages {
            let rows: Vec<_> = a
                .runs
                .iter()
                .filter(|r| r.solver == avg.solver && r.c_lambda == avg.c_lambda)
                .collect();
            let mean = rows.iter().map(|r| r.re).sum::<f64>() / rows.len() as f64;
            assert!((mean - avg.re).abs() <= 1e-12);
        }
    }

    #[test]
    fn matrix_csv_round_trip() {
        let x = DMatrix::from_fn(3, 4, |i, j| (i as f64 - 1.3) * (j as f64 + 0.1));
        assert_eq!(matrix_from_csv(&matrix_to_csv(&x)).unwrap(), x);
        assert!(matrix_from_csv("1,2\n3\n").is_err());
        assert!(matrix_from_csv("").is_err());
    }
}
