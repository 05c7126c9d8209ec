//! Markovian arrival processes: validation, stationary analysis, inter-arrival
//! moments, lag-power autocorrelations, superposition and time scaling.
//!
//! A MAP is a pair `(D0, D1)` of square rate matrices. `D0` holds the
//! transitions without an arrival, `D1` those that emit one, and
//! `D = D0 + D1` is the generator of the background chain.
//!
//! All quantities are evaluated through one LU factorization of `-D0`:
//!
//! * `m(i) = i! φ (-D0)^{-i} 1`
//! * `E[A_{q-k}^{b} A_q^{a}] = a! b! φ (-D0)^{-b} P^k (-D0)^{-a} 1` with
//!   `P = (-D0)^{-1} D1`,
//!
//! where `φ = π D1 / λ` is the phase law right after an arrival.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::descriptor::{DescriptorSet, Grid, CORR_SLACK};
use crate::error::{Error, Result};
use crate::factorial;
use crate::linalg::{Lu, Matrix};

/// Default cap on the number of states handled by dense algebra.
pub const DEFAULT_DIM_CAP: usize = 2500;

/// Row sums of `D0 + D1` must vanish to this tolerance, relative to the
/// magnitude of the diagonal rate of the row (at least 1).
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Stationary residual `‖π D‖∞` must stay below this, relative to the largest rate.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeArrivalRate { row: usize, col: usize, value: f64 },
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    NonNegativeDiagonal { row: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    SingularD0,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Violation::NegativeArrivalRate { row, col, value } => {
                write!(f, "negative D1 entry at ({row}, {col}): {value}")
            }
            Violation::NegativeOffDiagonal { row, col, value } => {
                write!(f, "negative off-diagonal D0 entry at ({row}, {col}): {value}")
            }
            Violation::NonNegativeDiagonal { row, value } => {
                write!(f, "non-negative D0 diagonal at row {row}: {value}")
            }
            Violation::RowSum { row, sum } => write!(f, "row sum ≠ 0 at row {row}: {sum}"),
            Violation::SingularD0 => write!(f, "D0 is singular"),
        }
    }
}

/// Outcome of [`validate_map`]: empty when the pair is a valid MAP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl core::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_structure(d0: &Matrix, d1: &Matrix) -> Result<()> {
    if !d0.is_square() || !d1.is_square() {
        return Err(Error::structural(format!(
            "D0 is {}x{} and D1 is {}x{}; both must be square",
            d0.rows(),
            d0.cols(),
            d1.rows(),
            d1.cols()
        )));
    }
    if d0.rows() != d1.rows() {
        return Err(Error::structural(format!(
            "dimension mismatch: D0 has {} states, D1 has {}",
            d0.rows(),
            d1.rows()
        )));
    }
    if d0.rows() == 0 {
        return Err(Error::structural("a MAP needs at least one state"));
    }
    if !d0.is_finite() || !d1.is_finite() {
        return Err(Error::structural("non-finite matrix entry"));
    }
    Ok(())
}

fn sign_violations(d0: &Matrix, d1: &Matrix) -> Vec<Violation> {
    let n = d0.rows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v1 = d1[(i, j)];
            if v1 < 0.0 {
                out.push(Violation::NegativeArrivalRate { row: i, col: j, value: v1 });
            }
            let v0 = d0[(i, j)];
            if i != j && v0 < 0.0 {
                out.push(Violation::NegativeOffDiagonal { row: i, col: j, value: v0 });
            }
        }
        let diag = d0[(i, i)];
        if diag >= 0.0 {
            out.push(Violation::NonNegativeDiagonal { row: i, value: diag });
        }
        let sum: f64 = d0.row(i).iter().chain(d1.row(i)).sum();
        if sum.abs() > ROW_SUM_TOL * diag.abs().max(1.0) {
            out.push(Violation::RowSum { row: i, sum });
        }
    }
    out
}

/// Checks every MAP rule and reports each violated condition.
///
/// Structural problems (non-square, mismatched or non-finite matrices) are
/// errors rather than violations.
pub fn validate_map(d0: &Matrix, d1: &Matrix) -> Result<ValidationReport> {
    check_structure(d0, d1)?;
    let mut violations = sign_violations(d0, d1);
    if Lu::factor(d0).is_err() {
        violations.push(Violation::SingularD0);
    }
    Ok(ValidationReport { violations })
}

/// A validated pair `(D0, D1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovArrivalProcess {
    d0: Matrix,
    d1: Matrix,
}

impl MarkovArrivalProcess {
    pub fn new(d0: Matrix, d1: Matrix) -> Result<Self> {
        let report = validate_map(&d0, &d1)?;
        if !report.is_ok() {
            return Err(Error::InvalidMap(report));
        }
        Ok(MarkovArrivalProcess { d0, d1 })
    }

    /// For constructions that preserve validity by algebra (Kronecker sums,
    /// positive scaling); only the cheap sign and row-sum checks run.
    fn from_trusted(d0: Matrix, d1: Matrix) -> Result<Self> {
        check_structure(&d0, &d1)?;
        let violations = sign_violations(&d0, &d1);
        if !violations.is_empty() {
            return Err(Error::InvalidMap(ValidationReport { violations }));
        }
        Ok(MarkovArrivalProcess { d0, d1 })
    }

    /// Poisson process as a one-state MAP.
    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::domain(format!("Poisson rate must be positive, got {rate}")));
        }
        Self::new(Matrix::from_rows(&[[-rate]])?, Matrix::from_rows(&[[rate]])?)
    }

    pub fn dim(&self) -> usize {
        self.d0.rows()
    }

    pub fn d0(&self) -> &Matrix {
        &self.d0
    }

    pub fn d1(&self) -> &Matrix {
        &self.d1
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.d0, self.d1)
    }

    pub fn generator(&self) -> Matrix {
        self.d0.add(&self.d1).expect("validated shapes")
    }

    /// Factorizes `-D0` and solves for the stationary laws once; the result
    /// answers every moment and correlation query.
    pub fn analyze(&self) -> Result<MapAnalysis<'_>> {
        let neg_d0 = Lu::factor(&self.d0.scaled(-1.0))?;
        neg_d0.check_conditioning("-D0")?;
        let context = solve_stationary(self)?;
        Ok(MapAnalysis {
            map: self,
            neg_d0,
            context,
        })
    }

    pub fn stationary_context(&self) -> Result<StationaryContext> {
        solve_stationary(self)
    }

    pub fn rate(&self) -> Result<f64> {
        Ok(self.stationary_context()?.rate)
    }

    pub fn interarrival_moments(&self, n_mom: usize) -> Result<Vec<f64>> {
        if n_mom == 0 {
            return Err(Error::structural("need at least one moment"));
        }
        Ok(self.analyze()?.moments(n_mom))
    }

    /// Correlation between `A_q^{a1}` and `A_{q-k}^{a2}`.
    pub fn lag_autocorrelation(&self, k: usize, a1: usize, a2: usize) -> Result<f64> {
        self.analyze()?.autocorrelation(k, a1, a2)
    }

    pub fn descriptor_set(&self, grid: Grid) -> Result<DescriptorSet> {
        self.analyze()?.descriptor(grid)
    }

    /// Exact merge of two independent streams (Kronecker sums of both blocks).
    pub fn superpose(&self, other: &MarkovArrivalProcess) -> Result<Self> {
        self.superpose_with_cap(other, DEFAULT_DIM_CAP)
    }

    pub fn superpose_with_cap(&self, other: &MarkovArrivalProcess, cap: usize) -> Result<Self> {
        let dim = self.dim() * other.dim();
        if dim > cap {
            return Err(Error::Capacity { dim, cap });
        }
        Self::from_trusted(self.d0.kron_sum(&other.d0), self.d1.kron_sum(&other.d1))
    }

    /// Both matrices multiplied by `c > 0`: time runs `c` times faster.
    pub fn speed_up(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("time factor must be positive, got {c}")));
        }
        Self::from_trusted(self.d0.scaled(c), self.d1.scaled(c))
    }

    /// Rescales time so that the mean inter-arrival time equals `target_mean`.
    pub fn time_scale(&self, target_mean: f64) -> Result<Self> {
        if !(target_mean > 0.0 && target_mean.is_finite()) {
            return Err(Error::domain(format!("target mean must be positive, got {target_mean}")));
        }
        let mean = 1.0 / self.rate()?;
        let c = mean / target_mean;
        if c == 1.0 {
            return Ok(self.clone());
        }
        self.speed_up(c)
    }
}

/// Stationary law of the background chain, phase law after an arrival, and
/// arrival rate.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryContext {
    pub pi: Vec<f64>,
    pub phi: Vec<f64>,
    pub rate: f64,
}

fn normalize_probabilities(v: &mut [f64], what: &str) -> Result<()> {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::analysis(
            format!("{what} has a negative component; the generator may be reducible"),
            -min,
        ));
    }
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::analysis(format!("{what} cannot be normalized"), s));
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

/// Solves `π D = 0, π 1 = 1` with the last balance equation replaced by the
/// normalization.
fn solve_stationary(map: &MarkovArrivalProcess) -> Result<StationaryContext> {
    let n = map.dim();
    let generator = map.generator();
    let mut system = generator.clone();
    for i in 0..n {
        system[(i, n - 1)] = 1.0;
    }
    let lu = Lu::factor(&system).map_err(|_| Error::analysis("singular generator; no unique stationary law", f64::NAN))?;
    lu.check_conditioning("stationary system")?;
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut pi = lu.solve_left(&rhs);
    normalize_probabilities(&mut pi, "stationary vector")?;

    let scale = (0..n).fold(1.0f64, |m, i| m.max(generator[(i, i)].abs()));
    let residual = generator.vec_mul(&pi).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > STATIONARY_RESIDUAL_TOL * scale {
        return Err(Error::analysis("stationary residual too large", residual));
    }

    let flow = map.d1.vec_mul(&pi);
    let rate: f64 = flow.iter().sum();
    if !(rate > 0.0) {
        return Err(Error::analysis("arrival rate is not positive", rate));
    }
    let mut phi: Vec<f64> = flow.iter().map(|v| v / rate).collect();
    normalize_probabilities(&mut phi, "post-arrival phase law")?;
    Ok(StationaryContext { pi, phi, rate })
}

/// A MAP together with the factorization of `-D0` and its stationary context.
pub struct MapAnalysis<'a> {
    map: &'a MarkovArrivalProcess,
    neg_d0: Lu,
    context: StationaryContext,
}

impl MapAnalysis<'_> {
    pub fn context(&self) -> &StationaryContext {
        &self.context
    }

    /// `(-D0)^{-i} 1` for `i = 0..=n`.
    fn right_powers(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(vec![1.0; self.map.dim()]);
        for i in 0..n {
            let next = self.neg_d0.solve(&out[i]);
            out.push(next);
        }
        out
    }

    /// `φ (-D0)^{-i}` for `i = 0..=n`.
    fn left_powers(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.context.phi.clone());
        for i in 0..n {
            let next = self.neg_d0.solve_left(&out[i]);
            out.push(next);
        }
        out
    }

    /// `P v = (-D0)^{-1} D1 v`.
    fn apply_embedded(&self, v: &[f64]) -> Vec<f64> {
        self.neg_d0.solve(&self.map.d1.mul_vec(v))
    }

    pub fn moments(&self, n: usize) -> Vec<f64> {
        let right = self.right_powers(n);
        (1..=n)
            .map(|i| factorial(i) * dot(&self.context.phi, &right[i]))
            .collect()
    }

    pub fn autocorrelation(&self, k: usize, a1: usize, a2: usize) -> Result<f64> {
        if k == 0 || a1 == 0 || a2 == 0 {
            return Err(Error::structural("lag and powers must be at least 1"));
        }
        let p = a1.max(a2);
        let grid = Grid {
            n_mom: 2 * p,
            n_lag: k,
            n_pow: p,
        };
        Ok(self.descriptor(grid)?.rho(k, a1, a2))
    }

    pub fn descriptor(&self, grid: Grid) -> Result<DescriptorSet> {
        let n_pow = grid.n_pow;
        let moments_all = self.moments(grid.moments_needed());
        if let Some(m) = moments_all.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::analysis("non-positive or non-finite moment", *m));
        }
        let mut variance = Vec::with_capacity(n_pow);
        for a in 1..=n_pow {
            let (ma, m2a) = (moments_all[a - 1], moments_all[2 * a - 1]);
            let var = m2a - ma * ma;
            if !(var > 1e-13 * m2a) {
                return Err(Error::DegenerateVariance { power: a });
            }
            variance.push(var);
        }

        let right = self.right_powers(n_pow);
        let left = self.left_powers(n_pow);
        let mut autocorr = vec![0.0; grid.autocorr_len()];
        // propagated[a] = P^k (-D0)^{-a} 1, advanced one lag at a time
        let mut propagated: Vec<Vec<f64>> = right[1..].to_vec();
        for k in 1..=grid.n_lag {
            for v in propagated.iter_mut() {
                *v = self.apply_embedded(v);
            }
            for a1 in 1..=n_pow {
                for a2 in 1..=n_pow {
                    let joint = factorial(a1) * factorial(a2) * dot(&left[a2], &propagated[a1 - 1]);
                    let (m1, m2) = (moments_all[a1 - 1], moments_all[a2 - 1]);
                    let rho = (joint - m1 * m2) / libm::sqrt(variance[a1 - 1] * variance[a2 - 1]);
                    autocorr[grid.index(k, a1, a2)] = clamp_correlation(rho)?;
                }
            }
        }
        DescriptorSet::new(grid, moments_all[..grid.n_mom].to_vec(), autocorr)
    }
}

/// Clamps rounding overshoot past ±1; anything larger is a numerical failure.
pub fn clamp_correlation(rho: f64) -> Result<f64> {
    if !rho.is_finite() {
        return Err(Error::analysis("non-finite autocorrelation", rho));
    }
    if rho.abs() <= 1.0 {
        Ok(rho)
    } else if rho.abs() <= 1.0 + CORR_SLACK {
        Ok(rho.signum())
    } else {
        Err(Error::analysis(
            String::from("autocorrelation outside [-1, 1] beyond rounding"),
            rho.abs() - 1.0,
        ))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
