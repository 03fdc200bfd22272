//! Many-point evaluation: contour grids, random point sets, timing runs and
//! CSV output.

use std::hint::black_box;
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, HjError, Result};
use crate::hopf_solver::{solve, AdmmConfig, ProblemSpec, QuadraticKernel, TrajectorySample};
use crate::initial_costs::{InitialCostSpec, QuadraticBranch};
use crate::prox1d::NewtonConfig;

/// Costs used in the reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceCost {
    /// `0.5 ||x - 1||^2`.
    Quadratic,
    /// `sqrt(<x, M x>)`, `M = diag(1, 8, 3, 5, 1, ..., 1)`.
    EllipsoidNorm,
    /// `0.5 ||x - 1||_1^2`.
    ShiftedL1Squared,
    /// Three shifted quadratics; needs `n >= 3`.
    MinOfQuadratics,
}

/// `a = (4, 6, 5, ..., 5)`, `b = (3, 9, 6, ..., 6)`.
pub fn reference_slopes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|i| [4.0, 6.0].get(i).copied().unwrap_or(5.0)).collect();
    let b = (0..n).map(|i| [3.0, 9.0].get(i).copied().unwrap_or(6.0)).collect();
    (a, b)
}

pub fn reference_cost(n: usize, kind: ReferenceCost) -> Result<InitialCostSpec> {
    Ok(match kind {
        ReferenceCost::Quadratic => InitialCostSpec::quadratic(vec![1.0; n], 1.0, 0.0),
        ReferenceCost::EllipsoidNorm => {
            let diag = [1.0, 8.0, 3.0, 5.0];
            let matrix = (0..n)
                .map(|i| (0..n).map(|j| if i == j { diag.get(i).copied().unwrap_or(1.0) } else { 0.0 }).collect())
                .collect();
            InitialCostSpec::EllipsoidNorm { matrix }
        }
        ReferenceCost::ShiftedL1Squared => InitialCostSpec::ShiftedL1Squared { shift: vec![1.0; n] },
        ReferenceCost::MinOfQuadratics => {
            if n < 3 {
                return Err(HjError::InvalidInput("the three-branch example needs n >= 3".into()));
            }
            let mut y1 = vec![0.0; n];
            y1[0] = -2.0;
            let mut y2 = vec![0.0; n];
            y2[..3].copy_from_slice(&[2.0, -2.0, -1.0]);
            let mut y3 = vec![0.0; n];
            y3[1] = 2.0;
            InitialCostSpec::MinOfQuadratics {
                branches: vec![
                    QuadraticBranch { center: y1, offset: -0.5 },
                    QuadraticBranch { center: y2, offset: 0.0 },
                    QuadraticBranch { center: y3, offset: -1.0 },
                ],
            }
        }
    })
}

pub fn reference_problem(n: usize, kind: ReferenceCost) -> Result<ProblemSpec> {
    let (a, b) = reference_slopes(n);
    ProblemSpec::new(a, b, reference_cost(n, kind)?)
}

/// Two-coordinate slice through `base` at several times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub axes: [usize; 2],
    pub ranges: [[f64; 2]; 2],
    #[serde(default = "default_counts")]
    pub counts: [usize; 2],
    /// Values of the remaining coordinates. Defaults to zeros.
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    pub times: Vec<f64>,
}

fn default_counts() -> [usize; 2] {
    [101, 101]
}

impl GridRequest {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.axes[0] >= n || self.axes[1] >= n || self.axes[0] == self.axes[1] {
            return Err(HjError::InvalidInput(format!("bad grid axes {:?} for n={n}", self.axes)));
        }
        if self.counts.iter().any(|&c| c < 2) {
            return Err(HjError::InvalidInput("grid counts must be at least 2".into()));
        }
        for r in &self.ranges {
            if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(HjError::InvalidInput(format!("bad grid range {r:?}")));
            }
        }
        if self.times.is_empty() || self.times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(HjError::InvalidInput("grid times must be non-empty and non-negative".into()));
        }
        if let Some(b) = &self.base {
            check_len(n, b.len())?;
        }
        Ok(())
    }

    fn coord(&self, axis: usize, k: usize) -> f64 {
        let [lo, hi] = self.ranges[axis];
        let m = self.counts[axis] - 1;
        if k == m {
            hi
        } else {
            lo + (hi - lo) * k as f64 / m as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c1: f64,
    pub c2: f64,
    pub t: f64,
    pub value: f64,
    pub branch: Option<usize>,
    pub converged: bool,
}

/// Evaluates the value on the grid, one slice per time. Points are spread
/// over the rayon pool; the output order is fixed (first axis outer).
pub fn evaluate_grid(spec: &ProblemSpec, req: &GridRequest, cfg: &AdmmConfig) -> Result<Vec<Vec<GridPoint>>> {
    let n = spec.n();
    req.validate(n)?;
    let base = req.base.clone().unwrap_or_else(|| vec![0.0; n]);
    let [n1, n2] = req.counts;
    req.times
        .iter()
        .map(|&t| {
            (0..n1 * n2)
                .into_par_iter()
                .map(|idx| {
                    let (k1, k2) = (idx / n2, idx % n2);
                    let mut x = base.clone();
                    let (c1, c2) = (req.coord(0, k1), req.coord(1, k2));
                    x[req.axes[0]] = c1;
                    x[req.axes[1]] = c2;
                    let r = solve(&x, t, spec, cfg)?;
                    Ok(GridPoint { c1, c2, t, value: r.value, branch: r.branch, converged: r.converged })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Round-trip exact float formatting (17 significant digits).
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_grid_csv<W: Write>(mut out: W, axes: [usize; 2], points: &[GridPoint], with_branch: bool) -> io::Result<()> {
    write!(out, "x{},x{},t,value", axes[0] + 1, axes[1] + 1)?;
    if with_branch {
        write!(out, ",branch")?;
    }
    writeln!(out)?;
    for p in points {
        write!(out, "{},{},{},{}", format_float(p.c1), format_float(p.c2), format_float(p.t), format_float(p.value))?;
        if with_branch {
            match p.branch {
                Some(b) => write!(out, ",{b}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(mut out: W, sample: &TrajectorySample) -> io::Result<()> {
    let n = sample.states.first().map_or(0, Vec::len);
    write!(out, "s")?;
    for i in 0..n {
        write!(out, ",gamma{}", i + 1)?;
    }
    writeln!(out)?;
    for (s, row) in sample.times.iter().zip(&sample.states) {
        write!(out, "{}", format_float(*s))?;
        for v in row {
            write!(out, ",{}", format_float(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `count` points uniform in `[-4, 4]^n x (0, 0.5]`, as a flat coordinate
/// array plus times.
pub fn sample_box(n: usize, count: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n * count);
    let mut ts = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..n {
            xs.push(rng.random_range(-4.0..4.0));
        }
        // exclude t = 0, where the solve short-circuits
        ts.push(0.5 * (1.0 - rng.random::<f64>()));
    }
    (xs, ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Tolerance,
    FixedIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub n: usize,
    pub points: usize,
    pub mean_ns: f64,
    pub median_ns: f64,
    /// Sum of the computed values; keeps the work observable.
    pub checksum: f64,
}

const FIXED_NEWTON_STEPS: usize = 20;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times the closed-form kernel on `points` random points. Runs on the
/// calling thread; the evaluation loop does not allocate.
pub fn benchmark_quadratic(spec: &ProblemSpec, points: usize, mode: BenchMode, seed: u64) -> Result<BenchStats> {
    if points == 0 {
        return Err(HjError::InvalidInput("benchmark needs at least one point".into()));
    }
    if spec.has_transform() {
        return Err(HjError::Unsupported("the timing kernel works on untransformed problems".into()));
    }
    let newton = match mode {
        BenchMode::Tolerance => NewtonConfig::default(),
        BenchMode::FixedIteration => NewtonConfig::fixed(FIXED_NEWTON_STEPS),
    };
    let kernel = QuadraticKernel::new(spec, newton)?;
    let n = spec.n();
    let (xs, ts) = sample_box(n, points, seed);
    let mut p = vec![0.0; n];

    let warm = points.min(1000);
    for k in 0..warm {
        black_box(kernel.eval(&xs[k * n..(k + 1) * n], ts[k], &mut p)?);
    }
    let mut checksum = 0.0;
    let start = Instant::now();
    for k in 0..points {
        let (v, _) = kernel.eval(black_box(&xs[k * n..(k + 1) * n]), black_box(ts[k]), &mut p)?;
        checksum += v;
    }
    let total = start.elapsed().as_nanos() as f64;

    let mut per_call = vec![0.0; points];
    for (k, slot) in per_call.iter_mut().enumerate() {
        let s = Instant::now();
        black_box(kernel.eval(black_box(&xs[k * n..(k + 1) * n]), black_box(ts[k]), &mut p)?);
        *slot = s.elapsed().as_nanos() as f64;
    }
    Ok(BenchStats { n, points, mean_ns: total / points as f64, median_ns: median(per_call), checksum })
}

/// Times the general solver (ADMM or min-plus) on the calling thread.
pub fn benchmark_general(spec: &ProblemSpec, points: usize, cfg: &AdmmConfig, seed: u64) -> Result<BenchStats> {
    if points == 0 {
        return Err(HjError::InvalidInput("benchmark needs at least one point".into()));
    }
    let n = spec.n();
    let (xs, ts) = sample_box(n, points, seed);
    let mut per_call = Vec::with_capacity(points);
    let mut checksum = 0.0;
    for k in 0..points {
        let s = Instant::now();
        let r = solve(black_box(&xs[k * n..(k + 1) * n]), ts[k], spec, cfg)?;
        per_call.push(s.elapsed().as_nanos() as f64);
        checksum += r.value;
    }
    let mean = per_call.iter().sum::<f64>() / points as f64;
    Ok(BenchStats { n, points, mean_ns: mean, median_ns: median(per_call), checksum })
}
