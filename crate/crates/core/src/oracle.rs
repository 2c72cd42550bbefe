//! Dense-matrix ground truth for a wco on a finite window.
//!
//! The operator is materialized as a complex matrix and the operator-algebra
//! definitions (commuting families, polar phases, range intersections) are
//! tested directly. Everything is compressed to the interior of the window,
//! where the truncated matrix powers agree with the true operator.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::discrete::{DiscreteWco, WeightedShift};
use crate::error::{Error, Result};
use crate::tree::{TruncationWindow, VertexId};

pub type CMatrix = DMatrix<Complex64>;

/// Orders above this are treated as unbounded.
pub const ORDER_CAP: usize = 64;
/// Relative rank tolerance for singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Largest dimension for which norms are spectral; Frobenius above.
pub const SPECTRAL_LIMIT: usize = 512;

/// A wco as a dense matrix, with the per-point order up to which truncated
/// powers are faithful.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    pub matrix: CMatrix,
    pub labels: Vec<VertexId>,
    /// How many φ-steps from each point are known (rows of `Tⁿ` are exact
    /// for `n` up to this).
    pub ancestor_depth: Vec<usize>,
    /// Largest order at which the point is interior.
    pub point_order: Vec<usize>,
    pub valid_order: usize,
}

impl TruncatedOperator {
    /// A bare matrix with every point interior, for negative controls.
    pub fn from_matrix(matrix: CMatrix) -> Self {
        let n = matrix.nrows();
        TruncatedOperator {
            labels: (0..n).map(|i| VertexId::from(format!("e{i}"))).collect(),
            matrix,
            ancestor_depth: vec![ORDER_CAP; n],
            point_order: vec![ORDER_CAP; n],
            valid_order: ORDER_CAP,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Points interior to order `n`.
    pub fn interior(&self, n: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&x| self.point_order[x] >= n).collect()
    }

    /// Diagonal 0/1 projector onto the interior of order `n`.
    pub fn interior_projector(&self, n: usize) -> CMatrix {
        let d = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|x| Complex64::new(if self.point_order[x] >= n { 1.0 } else { 0.0 }, 0.0)),
        );
        CMatrix::from_diagonal(&d)
    }

    /// The conjugate transpose, with the same masks.
    pub fn adjoint(&self) -> Self {
        TruncatedOperator {
            matrix: self.matrix.adjoint(),
            ..self.clone()
        }
    }

    pub fn power(&self, n: usize) -> CMatrix {
        let mut p = CMatrix::identity(self.dim(), self.dim());
        for _ in 0..n {
            p = &p * &self.matrix;
        }
        p
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.valid_order {
            Err(Error::OrderTooLarge {
                requested: n,
                valid: self.valid_order,
            })
        } else {
            Ok(())
        }
    }
}

/// Matrix of `C_{φ,w}`: entry `(y, x) = w(y)·[φ(y) = x]·√(μ(y)/μ(x))`.
pub fn materialize(wco: &DiscreteWco) -> Result<TruncatedOperator> {
    let n = wco.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut matrix = CMatrix::zeros(n, n);
    for y in 0..n {
        if let Some((x, v)) = wco.matrix_entry(y) {
            matrix[(y, x)] = v;
        }
    }

    // Known φ-steps: zero weights end a row early, cycles saturate.
    let mut anc = vec![ORDER_CAP; n];
    loop {
        let mut changed = false;
        for x in 0..n {
            let v = if wco.weight(x) == zero {
                ORDER_CAP
            } else {
                match wco.phi(x) {
                    None => 0,
                    Some(p) => (anc[p] + 1).min(ORDER_CAP),
                }
            };
            if v < anc[x] {
                anc[x] = v;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Depth to which weighted fibers are enumerable.
    let mut fib = vec![ORDER_CAP; n];
    loop {
        let mut changed = false;
        for x in 0..n {
            let v = if !wco.fiber_complete(x) {
                0
            } else {
                wco.preimages(x)
                    .iter()
                    .filter(|&&y| wco.weight(y) != zero)
                    .map(|&y| (fib[y] + 1).min(ORDER_CAP))
                    .min()
                    .unwrap_or(ORDER_CAP)
            };
            if v < fib[x] {
                fib[x] = v;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Interior of order n: rows of Tⁿ exact, fiber of x to depth n, and the
    // fiber of φⁱ(x) to depth i for i ≤ n.
    let point_order: Vec<usize> = (0..n)
        .map(|x| {
            let limit = anc[x].min(fib[x]);
            let mut order = 0;
            let mut cur = x;
            while order < limit {
                // Past a zero weight the row of x vanishes in every power.
                if wco.weight(cur) == zero {
                    return limit;
                }
                match wco.phi(cur) {
                    Some(p) if fib[p] > order => {
                        cur = p;
                        order += 1;
                    }
                    _ => break,
                }
            }
            order
        })
        .collect();
    let valid_order = point_order.iter().copied().max().unwrap_or(0);
    if valid_order == 0 {
        return Err(Error::WindowTooShallow("no point is interior to order 1".into()));
    }
    Ok(TruncatedOperator {
        matrix,
        labels: wco.labels().to_vec(),
        ancestor_depth: anc,
        point_order,
        valid_order,
    })
}

/// Convenience: materialize a weighted shift on a window.
pub fn materialize_shift(shift: &WeightedShift, window: &TruncationWindow) -> Result<TruncatedOperator> {
    materialize(&DiscreteWco::from_weighted_shift(shift, window)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Spectral,
    Frobenius,
}

/// Spectral norm for small matrices, Frobenius bound above [`SPECTRAL_LIMIT`].
pub fn operator_norm(m: &CMatrix) -> (f64, NormKind) {
    if m.is_empty() {
        return (0.0, NormKind::Spectral);
    }
    if m.nrows().max(m.ncols()) <= SPECTRAL_LIMIT {
        (m.singular_values().max(), NormKind::Spectral)
    } else {
        (m.norm(), NormKind::Frobenius)
    }
}

fn select(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn is_diagonal(m: &CMatrix) -> bool {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() <= 1e-14 * scale.max(1e-300)))
}

/// Phase `Uₙ = Tⁿ · pinv(|Tⁿ|)`; singular values below `tol · σ_max` are
/// treated as zero.
pub fn polar_phase(op: &TruncatedOperator, n: usize, tol: f64) -> Result<CMatrix> {
    op.check_order(n)?;
    Ok(phase_of(&op.power(n), tol))
}

fn phase_of(tn: &CMatrix, tol: f64) -> CMatrix {
    let gram = tn.adjoint() * tn;
    let dim = gram.nrows();
    if is_diagonal(&gram) {
        let d: Vec<f64> = (0..dim).map(|i| gram[(i, i)].re.max(0.0).sqrt()).collect();
        let top = d.iter().copied().fold(0.0, f64::max);
        let inv = DVector::from_iterator(
            dim,
            d.iter()
                .map(|&s| Complex64::new(if s > tol * top && s > 0.0 { 1.0 / s } else { 0.0 }, 0.0)),
        );
        return tn * CMatrix::from_diagonal(&inv);
    }
    // Hermitian eigendecomposition for matrices that are not wco's.
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(0.0).sqrt();
    let inv = DVector::from_iterator(
        dim,
        eig.eigenvalues.iter().map(|&l| {
            let s = l.max(0.0).sqrt();
            Complex64::new(if s > tol * top && s > 0.0 { 1.0 / s } else { 0.0 }, 0.0)
        }),
    );
    let v = &eig.eigenvectors;
    tn * (v * CMatrix::from_diagonal(&inv) * v.adjoint())
}

/// Norm of one commutator in the centered family.
#[derive(Debug, Clone, Serialize)]
pub struct CommutatorNorm {
    /// `"star_gram"` for `[Tⁱ*Tⁱ, TʲTʲ*]`, `"gram_gram"` for `[TⁱTⁱ*, TʲTʲ*]`,
    /// `"star_star"` for `[Tⁱ*Tⁱ, Tʲ*Tʲ]`.
    pub kind: &'static str,
    pub i: usize,
    pub j: usize,
    pub norm: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleVerdict {
    pub pass: bool,
    pub n_max: usize,
    pub interior_size: usize,
    /// Largest commutator norm on the interior block.
    pub max_commutator: f64,
    /// The same, divided by the norms of the two factors.
    pub max_relative_commutator: f64,
    /// `max ‖(U₁ⁿ − Uₙ)‖` over interior rows.
    pub phase_defect: f64,
    pub norm_kind: NormKind,
    pub commutators: Vec<CommutatorNorm>,
}

fn block_commutator(kind: &'static str, i: usize, j: usize, a: &CMatrix, b: &CMatrix, rows: &[usize]) -> (CommutatorNorm, NormKind) {
    // [A, B] restricted to the interior, using the full inner index.
    let all: Vec<usize> = (0..a.ncols()).collect();
    let ab = select(a, rows, &all) * select(b, &all, rows);
    let ba = select(b, rows, &all) * select(a, &all, rows);
    let (norm, kind_used) = operator_norm(&(ab - ba));
    let na = operator_norm(&select(a, rows, rows)).0;
    let nb = operator_norm(&select(b, rows, rows)).0;
    let relative = if na * nb > 0.0 { norm / (na * nb) } else { norm };
    (
        CommutatorNorm {
            kind,
            i,
            j,
            norm,
            relative,
        },
        kind_used,
    )
}

/// Tests that `{Tⁱ*Tⁱ, TʲTʲ*}` commute for `i, j ≤ n_max` and that
/// `U₁ⁿ = Uₙ`, on the interior of order `n_max`.
pub fn brute_force_centered(op: &TruncatedOperator, n_max: usize, tol: f64) -> Result<OracleVerdict> {
    op.check_order(n_max)?;
    let rows = op.interior(n_max);
    let powers: Vec<CMatrix> = (0..=n_max).map(|n| op.power(n)).collect();
    let star: Vec<CMatrix> = powers.iter().map(|p| p.adjoint() * p).collect();
    let gram: Vec<CMatrix> = powers.iter().map(|p| p * p.adjoint()).collect();
    let mut commutators = Vec::new();
    let mut norm_kind = NormKind::Spectral;
    for i in 1..=n_max {
        for j in 1..=n_max {
            let (c, k) = block_commutator("star_gram", i, j, &star[i], &gram[j], &rows);
            commutators.push(c);
            norm_kind = if k == NormKind::Frobenius { k } else { norm_kind };
            if i < j {
                let (c, k) = block_commutator("gram_gram", i, j, &gram[i], &gram[j], &rows);
                commutators.push(c);
                norm_kind = if k == NormKind::Frobenius { k } else { norm_kind };
            }
        }
    }
    let u1 = phase_of(&powers[1], 1e-12);
    let all: Vec<usize> = (0..op.dim()).collect();
    let mut u1n = u1.clone();
    let mut phase_defect = 0.0f64;
    for p in powers.iter().skip(2) {
        u1n = &u1n * &u1;
        let un = phase_of(p, 1e-12);
        let diff = select(&(&u1n - un), &rows, &all);
        phase_defect = phase_defect.max(operator_norm(&diff).0);
    }
    let max_commutator = commutators.iter().map(|c| c.norm).fold(0.0, f64::max);
    let max_relative_commutator = commutators.iter().map(|c| c.relative).fold(0.0, f64::max);
    Ok(OracleVerdict {
        pass: max_relative_commutator <= tol && phase_defect <= tol,
        n_max,
        interior_size: rows.len(),
        max_commutator,
        max_relative_commutator,
        phase_defect,
        norm_kind,
        commutators,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HalfWeakVerdict {
    pub half_pass: bool,
    /// `max ‖[Tⁱ*Tⁱ, Tʲ*Tʲ]‖` on the interior of order `n_max`.
    pub half_commutator: f64,
    pub weak_pass: bool,
    /// `‖[T*T, TT*]‖` on the interior of order 1.
    pub weak_commutator: f64,
    pub weak_relative: f64,
}

/// Half-centeredness (`{Tⁱ*Tⁱ}` commute) and weak centeredness
/// (`[T*T, TT*] = 0`).
pub fn brute_force_half_and_weak(op: &TruncatedOperator, n_max: usize, tol: f64) -> Result<HalfWeakVerdict> {
    op.check_order(n_max)?;
    let rows = op.interior(n_max);
    let powers: Vec<CMatrix> = (0..=n_max).map(|n| op.power(n)).collect();
    let star: Vec<CMatrix> = powers.iter().map(|p| p.adjoint() * p).collect();
    let mut half = 0.0f64;
    let mut half_rel = 0.0f64;
    for i in 1..=n_max {
        for j in i + 1..=n_max {
            let (c, _) = block_commutator("star_star", i, j, &star[i], &star[j], &rows);
            half = half.max(c.norm);
            half_rel = half_rel.max(c.relative);
        }
    }
    let rows1 = op.interior(1);
    let gram1 = &powers[1] * powers[1].adjoint();
    let (weak, _) = block_commutator("star_gram", 1, 1, &star[1], &gram1, &rows1);
    Ok(HalfWeakVerdict {
        half_pass: half_rel <= tol,
        half_commutator: half,
        weak_pass: weak.relative <= tol,
        weak_commutator: weak.norm,
        weak_relative: weak.relative,
    })
}

/// `T*ⁿTⁿ` as a full matrix.
pub fn power_gram(op: &TruncatedOperator, n: usize) -> CMatrix {
    let p = op.power(n);
    p.adjoint() * p
}

/// Dimensions of `∩ ran Tⁿ` and `∩ ran T*ⁿ` (n ≤ n_max), compressed to the
/// interior of order `n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct RangeIntersection {
    pub n_max: usize,
    pub interior_size: usize,
    pub ran_dim: usize,
    pub adjoint_dim: usize,
    pub ran_sequence: Vec<usize>,
    pub adjoint_sequence: Vec<usize>,
}

impl RangeIntersection {
    /// Type pattern: I = (0, full), II = (full, 0), III = (0, 0), IV = (full, full).
    pub fn label(&self) -> &'static str {
        let full = self.interior_size;
        match (self.ran_dim, self.adjoint_dim) {
            (0, a) if a == full && full > 0 => "I",
            (r, 0) if r == full && full > 0 => "II",
            (0, 0) => "III",
            (r, a) if r == full && a == full => "IV",
            _ => "mixed",
        }
    }
}

/// Orthonormal basis of the column space, dropping `σ < rank_tol·σ_max`.
fn column_basis(m: &CMatrix, rank_tol: f64) -> CMatrix {
    if m.is_empty() {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top > 0.0 && svd.singular_values[i] > rank_tol * top)
        .collect();
    let all: Vec<usize> = (0..u.nrows()).collect();
    select(&u, &all, &keep)
}

/// Basis of the intersection of two column spaces (orthonormal bases given),
/// from the principal angles between them.
fn intersect(a: &CMatrix, b: &CMatrix, rank_tol: f64) -> CMatrix {
    if a.ncols() == 0 || b.ncols() == 0 {
        return CMatrix::zeros(a.nrows(), 0);
    }
    let svd = (a.adjoint() * b).svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] >= 1.0 - rank_tol)
        .collect();
    let all: Vec<usize> = (0..u.nrows()).collect();
    a * select(&u, &all, &keep)
}

pub fn range_intersection_dim(op: &TruncatedOperator, n_max: usize, rank_tol: f64) -> Result<RangeIntersection> {
    op.check_order(n_max)?;
    let rows = op.interior(n_max);
    let all: Vec<usize> = (0..op.dim()).collect();
    let full = CMatrix::identity(rows.len(), rows.len());
    let (mut ran, mut adj) = (full.clone(), full);
    let (mut ran_sequence, mut adjoint_sequence) = (Vec::new(), Vec::new());
    let mut p = CMatrix::identity(op.dim(), op.dim());
    for _ in 1..=n_max {
        p = &p * &op.matrix;
        ran = intersect(&ran, &column_basis(&select(&p, &rows, &all), rank_tol), rank_tol);
        let pa = p.adjoint();
        adj = intersect(&adj, &column_basis(&select(&pa, &rows, &all), rank_tol), rank_tol);
        ran_sequence.push(ran.ncols());
        adjoint_sequence.push(adj.ncols());
    }
    Ok(RangeIntersection {
        n_max,
        interior_size: rows.len(),
        ran_dim: ran.ncols(),
        adjoint_dim: adj.ncols(),
        ran_sequence,
        adjoint_sequence,
    })
}

/// Least-squares distance from `f` to `ran(Tⁿ)`, on the rows where `Tⁿ` is
/// exact.
pub fn range_membership_residual(op: &TruncatedOperator, f: &[Complex64], n: usize) -> Result<f64> {
    let rows: Vec<usize> = (0..op.dim()).filter(|&x| op.ancestor_depth[x] >= n).collect();
    if rows.is_empty() {
        return Err(Error::WindowTooShallow(format!("no row of T^{n} is exact")));
    }
    let all: Vec<usize> = (0..op.dim()).collect();
    let a = select(&op.power(n), &rows, &all);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&x| f[x]));
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let g = svd
        .solve(&b, 1e-12 * top.max(1e-300))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    Ok((a * g - b).norm())
}

/// Row-major `re im` dump of a matrix.
pub fn dump_matrix(m: &CMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e} {:e}", m[(i, j)].re, m[(i, j)].im)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::Weights;
    use crate::tree::{build_tree, full_window};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn weighted_path(weights: &[f64]) -> WeightedShift {
        let n = weights.len();
        let vs: Vec<String> = (0..=n).map(|k| k.to_string()).collect();
        let es: Vec<(String, String)> = (0..n).map(|k| (k.to_string(), (k + 1).to_string())).collect();
        let values = weights
            .iter()
            .enumerate()
            .map(|(k, &w)| (VertexId::from((k + 1).to_string()), c(w)))
            .collect();
        WeightedShift::new(build_tree(&vs, &es).unwrap(), Weights::table(values))
    }

    #[test]
    fn star_columns() {
        let tree = build_tree(&["0", "a", "b"], &[("0", "a"), ("0", "b")]).unwrap();
        let values = [("a", 1.0), ("b", 2.0)].into_iter().map(|(v, w)| (VertexId::from(v), c(w))).collect();
        let s = WeightedShift::new(tree, Weights::table(values));
        let op = materialize_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        let col0: Vec<Complex64> = op.matrix.column(0).iter().copied().collect();
        assert_eq!(col0, vec![c(0.0), c(1.0), c(2.0)]);
        assert!(op.matrix.column(1).iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn weighted_path_phase_is_unweighted_shift() {
        let s = weighted_path(&[1.0, 2.0, 3.0, 4.0]);
        let op = materialize_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        let u = polar_phase(&op, 1, 1e-12).unwrap();
        let plain = materialize_shift(&weighted_path(&[1.0; 4]), &full_window(&s.tree).unwrap()).unwrap();
        assert!((u - plain.matrix).norm() < 1e-14);
        let v = brute_force_centered(&op, 4, 1e-10).unwrap();
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn zero_operator() {
        let op = TruncatedOperator::from_matrix(CMatrix::zeros(3, 3));
        assert_eq!(polar_phase(&op, 1, 1e-12).unwrap(), CMatrix::zeros(3, 3));
        let r = range_intersection_dim(&op, 2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((r.ran_dim, r.adjoint_dim), (0, 0));
        assert_eq!(r.label(), "III");
    }

    #[test]
    fn random_matrix_is_not_half_centered() {
        let m = CMatrix::from_fn(4, 4, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 1.3 * (i == j) as u8 as f64));
        let op = TruncatedOperator::from_matrix(m);
        let hw = brute_force_half_and_weak(&op, 2, 1e-10).unwrap();
        assert!(!hw.half_pass);
        let u = polar_phase(&op, 1, 1e-12).unwrap();
        // A partial isometry: U U* U = U.
        assert!((&u * u.adjoint() * &u - &u).norm() < 1e-10);
    }

    #[test]
    fn order_guard() {
        let s = weighted_path(&[1.0, 1.0]);
        let op = materialize_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        assert_eq!(op.valid_order, ORDER_CAP);
        let op = TruncatedOperator {
            valid_order: 1,
            ..op
        };
        assert!(matches!(polar_phase(&op, 2, 1e-12), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn adjoint_swaps_dimensions() {
        let s = weighted_path(&[1.0, 0.5, 2.0]);
        let op = materialize_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        let a = range_intersection_dim(&op, 2, DEFAULT_RANK_TOL).unwrap();
        let b = range_intersection_dim(&op.adjoint(), 2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((a.ran_dim, a.adjoint_dim), (b.adjoint_dim, b.ran_dim));
    }
}
