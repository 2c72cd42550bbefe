//! Composition operators on non-atomic spaces: invertible linear maps of ℝ^κ
//! with a radial density, and the translation `x ↦ x + 1` of the half-line.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::discrete::DiscreteWco;
use crate::error::{Error, Result};
use crate::oracle::{self, RangeIntersection};
use crate::tree::VertexId;

/// `ρ(z) = Σ a_k z^k`, the density of `μ^ρ` is `ρ(‖x‖²)`.
#[derive(Clone)]
pub enum RadialDensity {
    Polynomial(Vec<f64>),
    /// `ρ(z) = e^z`, the canonical entire non-polynomial density.
    Exponential,
    /// A user density; `polynomial` selects the boundedness criterion.
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        polynomial: bool,
    },
}

impl fmt::Debug for RadialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialDensity::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            RadialDensity::Exponential => f.write_str("Exponential"),
            RadialDensity::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl RadialDensity {
    /// Nonnegative coefficients with a positive one of index at least 1.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::Invalid("density coefficients must be nonnegative".into()));
        }
        if !coefficients.iter().skip(1).any(|&a| a > 0.0) {
            return Err(Error::Invalid(
                "density needs a positive coefficient of degree at least 1".into(),
            ));
        }
        Ok(RadialDensity::Polynomial(coefficients))
    }

    /// Parses `exp` or `poly:a0,a1,...`.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "exp" {
            return Ok(RadialDensity::Exponential);
        }
        let list = text
            .strip_prefix("poly:")
            .ok_or_else(|| Error::Invalid(format!("unknown density `{text}`")))?;
        let coeffs = list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad coefficient `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::polynomial(coeffs)
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            // Horner's scheme.
            RadialDensity::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * z + a),
            RadialDensity::Exponential => z.exp(),
            RadialDensity::Custom { f, .. } => f(z),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        match self {
            RadialDensity::Polynomial(_) => true,
            RadialDensity::Exponential => false,
            RadialDensity::Custom { polynomial, .. } => *polynomial,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RadialDensity::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|a| a.to_string()).collect();
                format!("poly:{}", parts.join(","))
            }
            RadialDensity::Exponential => "exp".into(),
            RadialDensity::Custom { name, .. } => name.clone(),
        }
    }
}

/// An invertible linear map `A` of ℝ^κ, with the norm `‖x‖² = xᵀ G x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub kappa: usize,
    pub a: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    det: f64,
}

impl LinearModel {
    /// `A` with the Euclidean norm.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let k = a.nrows();
        Self::with_gram(a, DMatrix::identity(k, k))
    }

    pub fn with_gram(a: DMatrix<f64>, gram: DMatrix<f64>) -> Result<Self> {
        let kappa = a.nrows();
        if kappa == 0 || a.ncols() != kappa || gram.shape() != (kappa, kappa) {
            return Err(Error::Invalid("matrix and inner product must be square of equal size".into()));
        }
        if (&gram - gram.transpose()).amax() > 1e-12 * gram.amax().max(1.0) || Cholesky::new(gram.clone()).is_none() {
            return Err(Error::Invalid("inner product must be symmetric positive definite".into()));
        }
        let det = a.determinant();
        let a_inv = a.clone().try_inverse().filter(|_| det != 0.0).ok_or(Error::SingularMatrix)?;
        Ok(LinearModel {
            kappa,
            a,
            gram,
            a_inv,
            det,
        })
    }

    /// Parses a row-major list of `κ²` entries.
    pub fn parse(text: &str, kappa: usize) -> Result<Self> {
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::Invalid(format!("bad matrix entry `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != kappa * kappa {
            return Err(Error::Invalid(format!(
                "expected {} matrix entries, found {}",
                kappa * kappa,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(kappa, kappa, &values))
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn norm_sq(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.gram * x)[(0, 0)]
    }

    /// `Aⁿ x`.
    pub fn apply_n(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        (0..n).fold(x.clone(), |y, _| &self.a * y)
    }

    /// `A⁻ⁿ x`.
    pub fn apply_inv_n(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        (0..n).fold(x.clone(), |y, _| &self.a_inv * y)
    }

    /// Operator norm of `A⁻¹` for the `G`-norm: `‖Lᵀ A⁻¹ L⁻ᵀ‖₂` with `G = L Lᵀ`.
    pub fn inverse_norm(&self) -> f64 {
        let l = Cholesky::new(self.gram.clone()).expect("checked at construction").l();
        let lt = l.transpose();
        let lt_inv = lt.clone().try_inverse().expect("Cholesky factor is invertible");
        let m = &lt * &self.a_inv * lt_inv;
        m.singular_values().max()
    }
}

/// `hₙ(x) = ρ(‖A⁻ⁿx‖²) / (|det A|ⁿ ρ(‖x‖²))`.
pub fn rn_linear(density: &RadialDensity, model: &LinearModel, n: usize, x: &DVector<f64>) -> Result<f64> {
    if x.len() != model.kappa {
        return Err(Error::Invalid("point has the wrong dimension".into()));
    }
    let den = density.eval(model.norm_sq(x));
    if den <= 0.0 {
        return Err(Error::Invalid("density vanishes at the sample point".into()));
    }
    let num = density.eval(model.norm_sq(&model.apply_inv_n(x, n)));
    Ok(num / (model.det().abs().powi(n as i32) * den))
}

#[derive(Debug, Clone, Serialize)]
pub struct Boundedness {
    pub bounded: bool,
    pub inverse_norm: f64,
    /// `sup h₁` over a sample grid, an estimate of `‖C_φ‖²`, when bounded.
    pub norm_sq_estimate: Option<f64>,
}

/// Polynomial densities always give a bounded `C_φ`; otherwise `C_φ` is
/// bounded exactly when `‖A⁻¹‖ ≤ 1`.
pub fn boundedness_test(density: &RadialDensity, model: &LinearModel) -> Boundedness {
    let inverse_norm = model.inverse_norm();
    let bounded = density.is_polynomial() || inverse_norm <= 1.0 + 1e-12;
    let norm_sq_estimate = bounded.then(|| {
        let per_axis = if model.kappa == 1 { 2001 } else { 41 };
        let mut sup = 0.0f64;
        for x in sample_points(model.kappa, 10.0, per_axis) {
            if let Ok(h) = rn_linear(density, model, 1, &x) {
                sup = sup.max(h);
            }
        }
        sup
    });
    Boundedness {
        bounded,
        inverse_norm,
        norm_sq_estimate,
    }
}

/// Midpoints of a uniform grid on `[-r, r]^κ` (κ ≤ 3), used for sampling.
pub fn sample_points(kappa: usize, r: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let h = 2.0 * r / per_axis as f64;
    let axis: Vec<f64> = (0..per_axis).map(|i| -r + (i as f64 + 0.5) * h).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..kappa {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

/// Compactly supported test functions.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Zero,
    /// Tensor product of hat functions on `[lo_i, hi_i]`.
    Triangle { lo: Vec<f64>, hi: Vec<f64> },
    /// Tensor product of `exp(-1/(1-t²))` bumps of the given radius.
    Bump { center: Vec<f64>, radius: f64 },
}

fn smooth_bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Triangle { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&t, (&a, &b))| {
                    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
                    (1.0 - (t - mid).abs() / half).max(0.0)
                })
                .product(),
            TestFunction::Bump { center, radius } => x
                .iter()
                .zip(center)
                .map(|(&t, &c)| smooth_bump((t - c) / radius))
                .product(),
        }
    }

    /// Half-open bounding box of the support, or `None` for the zero function.
    fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            TestFunction::Zero => None,
            TestFunction::Triangle { lo, hi } => Some((lo.clone(), hi.clone())),
            TestFunction::Bump { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
        }
    }
}

/// Recursive pairwise summation in a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Composite midpoint rule for `g` on `[lo, lo + 2r]^κ` with `grid` cells per
/// axis (κ ≤ 2).
fn midpoint(kappa: usize, lo: f64, r: f64, grid: usize, g: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = 2.0 * r / grid as f64;
    let at = |i: usize| lo + (i as f64 + 0.5) * h;
    match kappa {
        1 => {
            let vals: Vec<f64> = (0..grid).map(|i| g(&[at(i)])).collect();
            pairwise_sum(&vals) * h
        }
        2 => {
            let rows: Vec<f64> = (0..grid)
                .map(|i| {
                    let x = at(i);
                    let vals: Vec<f64> = (0..grid).map(|j| g(&[x, at(j)])).collect();
                    pairwise_sum(&vals)
                })
                .collect();
            pairwise_sum(&rows) * h * h
        }
        _ => unreachable!("quadrature is limited to κ ≤ 2"),
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Max relative gap between `∫ f∘φⁿ dμ^ρ` and `∫ f·hₙ dμ^ρ` over `tests`,
/// both sides by the composite midpoint rule on `[-radius, radius]^κ`.
pub fn quadrature_verify(
    density: &RadialDensity,
    model: &LinearModel,
    n: usize,
    tests: &[TestFunction],
    radius: f64,
    grid: usize,
) -> Result<f64> {
    if model.kappa > 2 {
        return Err(Error::Invalid("quadrature supports κ ≤ 2".into()));
    }
    let det_n = model.det().abs().powi(n as i32);
    let a_n = (0..n).fold(DMatrix::identity(model.kappa, model.kappa), |m, _| &model.a * m);
    let a_inv_n = (0..n).fold(DMatrix::identity(model.kappa, model.kappa), |m, _| &model.a_inv * m);
    let norm_sq = |v: &[f64]| {
        let x = DVector::from_row_slice(v);
        model.norm_sq(&x)
    };
    let mut worst = 0.0f64;
    for f in tests {
        if let Some((lo, hi)) = f.support() {
            if lo.iter().chain(&hi).any(|t| t.abs() > radius) || lo.len() != model.kappa {
                return Err(Error::Invalid("test function must be supported in the quadrature box".into()));
            }
        }
        let lhs = midpoint(model.kappa, -radius, radius, grid, &|x| {
            let y = &a_n * DVector::from_row_slice(x);
            f.eval(y.as_slice()) * density.eval(norm_sq(x))
        });
        // f · hₙ · ρ(‖x‖²) = f · ρ(‖A⁻ⁿx‖²) / |det A|ⁿ.
        let rhs = midpoint(model.kappa, -radius, radius, grid, &|x| {
            let fx = f.eval(x);
            if fx == 0.0 {
                return 0.0;
            }
            let y = &a_inv_n * DVector::from_row_slice(x);
            fx * density.eval(model.norm_sq(&y)) / det_n
        });
        worst = worst.max(relative_gap(lhs, rhs));
    }
    Ok(worst)
}

/// `max |h_{n+k}(x) − hₙ(x) h_k(A⁻ⁿx)| / h_{n+k}(x)` over the samples.
pub fn chain_rule_residual(
    density: &RadialDensity,
    model: &LinearModel,
    n: usize,
    k: usize,
    samples: &[DVector<f64>],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in samples {
        let lhs = rn_linear(density, model, n + k, x)?;
        let rhs = rn_linear(density, model, n, x)? * rn_linear(density, model, k, &model.apply_inv_n(x, n))?;
        worst = worst.max(relative_gap(lhs, rhs));
    }
    Ok(worst)
}

/// `hₙ > 0` at every sample, so the support test cannot exclude types I or IV.
pub fn support_is_full(density: &RadialDensity, model: &LinearModel, n_max: usize, samples: &[DVector<f64>]) -> bool {
    samples.iter().all(|x| (1..=n_max).all(|n| rn_linear(density, model, n, x).is_ok_and(|h| h > 0.0)))
}

/// `φ` is invertible, so every fiber is a single point and `E_φ` is the
/// identity: the premise of the type IV test.
pub fn phi_is_invertible(model: &LinearModel) -> bool {
    model.det() != 0.0
}

/// `hₙ = χ_{[n,∞)}` for the translation `x ↦ x + 1` of `[0, ∞)`.
pub fn halfline_h(n: usize, x: f64) -> f64 {
    if x >= n as f64 {
        1.0
    } else {
        0.0
    }
}

/// The five bumps used for the half-line checks.
pub fn halfline_bumps() -> Vec<TestFunction> {
    [0.7, 1.9, 2.5, 4.2, 6.6]
        .into_iter()
        .map(|c| TestFunction::Bump {
            center: vec![c],
            radius: 0.6,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HalflineReport {
    pub order: usize,
    /// Max relative gap between `∫ f∘φⁿ` and `∫ f hₙ` over the bumps.
    pub quadrature_residual: f64,
    /// Max relative gap between `‖C_φ* g‖²` and `‖g‖²` over the bumps.
    pub coisometry_residual: f64,
    /// Range intersections of the discretized `C_φ`.
    pub discrete_ranges: RangeIntersection,
    /// The same for the discretized adjoint.
    pub discrete_adjoint_ranges: RangeIntersection,
    pub label: String,
    pub adjoint_label: String,
}

/// Quadrature checks of `hₙ` and of the co-isometry property, plus the type
/// of the operator on a unit-cell discretization.
pub fn halfline_model(n: usize, radius: f64, grid: usize) -> Result<HalflineReport> {
    if n == 0 {
        return Err(Error::Invalid("order must be at least 1".into()));
    }
    let tests = halfline_bumps();
    let mut quad = 0.0f64;
    let mut coiso = 0.0f64;
    for f in &tests {
        let lhs = midpoint(1, 0.0, radius / 2.0, grid, &|x| f.eval(&[x[0] + n as f64]));
        let rhs = midpoint(1, 0.0, radius / 2.0, grid, &|x| f.eval(x) * halfline_h(n, x[0]));
        quad = quad.max(relative_gap(lhs, rhs));
        // (C_φ* g)(y) = g(y − 1) on [1, ∞).
        let g_sq = midpoint(1, 0.0, radius / 2.0, grid, &|x| f.eval(x).powi(2));
        let adj_sq = midpoint(1, 0.0, radius / 2.0, grid, &|x| {
            if x[0] >= 1.0 {
                f.eval(&[x[0] - 1.0]).powi(2)
            } else {
                0.0
            }
        });
        coiso = coiso.max(relative_gap(adj_sq, g_sq));
    }

    let (wco, n_max) = halfline_discretization(n)?;
    let op = oracle::materialize(&wco)?;
    let ranges = oracle::range_intersection_dim(&op, n_max, oracle::DEFAULT_RANK_TOL)?;
    let adjoint = oracle::range_intersection_dim(&op.adjoint(), n_max, oracle::DEFAULT_RANK_TOL)?;
    Ok(HalflineReport {
        order: n,
        quadrature_residual: quad,
        coisometry_residual: coiso,
        label: ranges.label().into(),
        adjoint_label: adjoint.label().into(),
        discrete_ranges: ranges,
        discrete_adjoint_ranges: adjoint,
    })
}

/// Unit cells `[i, i+1)`, `i < 2·n_max`, with `φ(i) = i + 1` and the image of
/// the last cell outside. Returns the wco and `n_max = max(n, 2)`.
pub fn halfline_discretization(n: usize) -> Result<(DiscreteWco, usize)> {
    let n_max = n.max(2);
    let cells = 2 * n_max;
    let labels = (0..cells).map(|i| VertexId::from(format!("cell{i}"))).collect();
    let phi = (0..cells).map(|i| (i + 1 < cells).then_some(i + 1)).collect();
    let wco = DiscreteWco::partial(
        labels,
        vec![1.0; cells],
        phi,
        vec![Complex64::new(1.0, 0.0); cells],
        vec![true; cells],
    )?;
    Ok((wco, n_max))
}

/// A continuous example: the half-line translation or a linear model.
#[derive(Debug, Clone)]
pub enum ContinuousConfig {
    HalfLine,
    Linear { density: RadialDensity, model: LinearModel },
}

impl ContinuousConfig {
    pub fn halfline() -> Self {
        ContinuousConfig::HalfLine
    }

    /// κ = 2, `ρ(z) = e^z`, `A = 2I`; bounded since `‖A⁻¹‖ = 1/2`.
    pub fn linear_gauss() -> Self {
        ContinuousConfig::Linear {
            density: RadialDensity::Exponential,
            model: LinearModel::new(DMatrix::from_diagonal_element(2, 2, 2.0)).expect("2I is invertible"),
        }
    }

    /// Plain-text description accepted by the `continuous` subcommand flags.
    pub fn render(&self, name: &str) -> String {
        match self {
            ContinuousConfig::HalfLine => {
                format!("# {name}\nmodel halfline\nmap x+1\nmeasure lebesgue [0,inf)\n")
            }
            ContinuousConfig::Linear { density, model } => {
                let entries: Vec<String> = model.a.transpose().iter().map(|v| v.to_string()).collect();
                format!(
                    "# {name}\nmodel linear\nkappa {}\nrho {}\nmatrix {}\n",
                    model.kappa,
                    density.describe(),
                    entries.join(",")
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64) -> LinearModel {
        LinearModel::new(DMatrix::from_element(1, 1, a)).unwrap()
    }

    #[test]
    fn one_dimensional_formula() {
        let rho = RadialDensity::polynomial(vec![0.0, 1.0]).unwrap();
        let m = scalar(2.0);
        for x in [-3.0, 0.5, 7.0] {
            let h = rn_linear(&rho, &m, 1, &DVector::from_element(1, x)).unwrap();
            assert!((h - 0.125).abs() < 1e-15);
        }
        assert!(rn_linear(&rho, &m, 1, &DVector::from_element(1, 0.0)).is_err());
    }

    #[test]
    fn planar_formula() {
        let rho = RadialDensity::polynomial(vec![1.0, 1.0]).unwrap();
        let m = LinearModel::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))).unwrap();
        let h = rn_linear(&rho, &m, 1, &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        assert!((h - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_preserves_measure() {
        let m = LinearModel::new(DMatrix::identity(2, 2)).unwrap();
        let h = rn_linear(&RadialDensity::Exponential, &m, 3, &DVector::from_vec(vec![1.0, -2.0])).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn boundedness_dichotomy() {
        let poly = RadialDensity::polynomial(vec![0.0, 1.0]).unwrap();
        assert!(boundedness_test(&poly, &scalar(0.5)).bounded);
        assert!(boundedness_test(&RadialDensity::Exponential, &scalar(2.0)).bounded);
        let b = boundedness_test(&RadialDensity::Exponential, &scalar(0.5));
        assert!(!b.bounded);
        assert!((b.inverse_norm - 2.0).abs() < 1e-12);
    }

    #[test]
    fn density_validation() {
        assert!(RadialDensity::polynomial(vec![1.0]).is_err());
        assert!(RadialDensity::polynomial(vec![0.0, -1.0, 1.0]).is_err());
        assert!(RadialDensity::parse("poly:0,1").is_ok());
        assert!(matches!(
            LinearModel::new(DMatrix::zeros(2, 2)).unwrap_err(),
            Error::SingularMatrix
        ));
    }

    #[test]
    fn zero_test_function() {
        let rho = RadialDensity::polynomial(vec![0.0, 1.0]).unwrap();
        let r = quadrature_verify(&rho, &scalar(2.0), 1, &[TestFunction::Zero], 10.0, 1000).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn halfline_indicator() {
        assert_eq!(halfline_h(2, 1.5), 0.0);
        assert_eq!(halfline_h(2, 2.5), 1.0);
        // hₙ = h₁ · h₁∘φ⁻¹ ⋯ h₁∘φ⁻⁽ⁿ⁻¹⁾ (the chain rule with E the identity).
        for x in [0.2, 1.0, 2.7, 5.5] {
            for n in 1..5 {
                let prod: f64 = (0..n).map(|j| halfline_h(1, x - j as f64)).product();
                assert_eq!(halfline_h(n, x), prod);
            }
        }
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
