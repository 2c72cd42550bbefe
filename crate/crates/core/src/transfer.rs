//! Radon–Nikodym derivatives, conditional expectations and the other
//! fiberwise transforms of a discrete wco.
//!
//! Point functions are `Vec<Option<T>>`: `None` marks points where the value
//! is undefined or cannot be computed inside the window.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::discrete::DiscreteWco;
use crate::error::{Error, Result};

/// Values that can be averaged over fibers.
pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// `hₙ = h_{φⁿ,wₙ}` on the window.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFunction {
    pub order: usize,
    pub values: Vec<Option<f64>>,
}

impl DensityFunction {
    pub fn get(&self, x: usize) -> Option<f64> {
        self.values[x]
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }
}

/// Fibers `(φⁿ)⁻¹({x})` restricted to weighted points.
#[derive(Debug, Clone)]
pub struct FiberPartition {
    pub order: usize,
    pub fibers: Vec<Option<Vec<usize>>>,
}

pub fn fiber_partition(wco: &DiscreteWco, n: usize) -> FiberPartition {
    FiberPartition {
        order: n,
        fibers: (0..wco.len())
            .map(|x| wco.weighted_fiber(x, n).map(|f| f.into_iter().map(|(y, _)| y).collect()))
            .collect(),
    }
}

/// `hₙ(x) = μ(x)⁻¹ Σ_{φⁿ(y)=x} |wₙ(y)|² μ(y)`; `h₀ ≡ 1`.
///
/// Points whose fiber is cut by the window are left undefined; if that
/// happens everywhere the result is `WindowTooShallow`.
pub fn radon_nikodym(wco: &DiscreteWco, n: usize) -> Result<DensityFunction> {
    let values: Vec<Option<f64>> = (0..wco.len())
        .map(|x| {
            wco.weighted_fiber(x, n).map(|fiber| {
                fiber.iter().map(|&(y, wn)| wn.norm_sqr() * wco.mass(y)).sum::<f64>() / wco.mass(x)
            })
        })
        .collect();
    if values.iter().all(Option::is_none) {
        return Err(Error::WindowTooShallow(format!("h_{n} is unknown at every point")));
    }
    Ok(DensityFunction { order: n, values })
}

/// `Eₙ(f)(y)`: the `|wₙ|²μ`-weighted average of `f` over the fiber of
/// `φⁿ(y)`. Defined only where `wₙ(y) ≠ 0` and the fiber is known.
pub fn conditional_expectation<T: Scalar>(wco: &DiscreteWco, n: usize, f: &[Option<T>]) -> Vec<Option<T>> {
    let mut out = vec![None; wco.len()];
    for x in 0..wco.len() {
        let Some(fiber) = wco.weighted_fiber(x, n) else {
            continue;
        };
        let mut num = T::zero();
        let mut den = 0.0;
        let mut known = true;
        for &(y, wn) in &fiber {
            let m = wn.norm_sqr() * wco.mass(y);
            match f[y] {
                Some(v) => num = num + v * m,
                None => known = false,
            }
            den += m;
        }
        if known && den > 0.0 {
            let avg = num * (1.0 / den);
            for &(y, _) in &fiber {
                out[y] = Some(avg);
            }
        }
    }
    out
}

/// The representative `G` with `G ∘ φⁿ = g` on weighted points and `G = 0`
/// where `hₙ = 0`.
///
/// `g` must be constant on every weighted fiber, up to
/// `tol · max(1, |g|)`.
pub fn pullback_inverse<T: Scalar>(wco: &DiscreteWco, n: usize, g: &[Option<T>], tol: f64) -> Result<Vec<Option<T>>> {
    let mut out = vec![None; wco.len()];
    for (x, slot) in out.iter_mut().enumerate() {
        let Some(fiber) = wco.weighted_fiber(x, n) else {
            continue;
        };
        if fiber.is_empty() {
            *slot = Some(T::zero());
            continue;
        }
        let values: Option<Vec<T>> = fiber.iter().map(|&(y, _)| g[y]).collect();
        let Some(values) = values else {
            continue;
        };
        let first = values[0];
        for v in &values[1..] {
            if (*v - first).modulus() > tol * first.modulus().max(1.0) {
                return Err(Error::NotFiberMeasurable(wco.label(x).to_string()));
            }
        }
        *slot = Some(first);
    }
    Ok(out)
}

/// `P f = w · E₁(f_w)` with `f_w = f / w` on `{w ≠ 0}` and `0` elsewhere.
///
/// This is the orthogonal projection onto the closed range of `C_{φ,w}`.
pub fn range_projection(wco: &DiscreteWco, f: &[Complex64]) -> Vec<Option<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let fw: Vec<Option<Complex64>> = (0..wco.len())
        .map(|x| {
            let w = wco.weight(x);
            Some(if w == zero { zero } else { f[x] / w })
        })
        .collect();
    let e = conditional_expectation(wco, 1, &fw);
    (0..wco.len())
        .map(|x| {
            let w = wco.weight(x);
            if w == zero {
                Some(zero)
            } else {
                e[x].map(|v| w * v)
            }
        })
        .collect()
}

/// `a / √d` with `0/0 = 0`; a nonzero numerator over zero is an error.
fn phase_quotient(wco: &DiscreteWco, x: usize, num: Complex64, den: f64) -> Result<Complex64> {
    if num == Complex64::new(0.0, 0.0) {
        Ok(num)
    } else if den > 0.0 {
        Ok(num / den.sqrt())
    } else {
        Err(Error::ZeroDenominatorAtWeightedPoint(wco.label(x).to_string()))
    }
}

/// A complex function on the window, `None` where it is not determined.
pub type PointFunction = Vec<Option<Complex64>>;

/// The pair `(w_{n,φ}, w_{φ,n})`:
/// `wₙ / √(hₙ ∘ φⁿ)` and `∏_{j<n} w∘φʲ / √(h₁ ∘ φ^{j+1})`.
pub fn phase_weights(wco: &DiscreteWco, n: usize) -> Result<(PointFunction, PointFunction)> {
    let hn = radon_nikodym(wco, n)?;
    let h1 = if n == 1 { hn.clone() } else { radon_nikodym(wco, 1)? };
    let zero = Complex64::new(0.0, 0.0);
    let mut left = vec![None; wco.len()];
    let mut right = vec![None; wco.len()];
    for x in 0..wco.len() {
        left[x] = match wco.w_n(x, n) {
            Some(w) if w == zero => Some(zero),
            Some(w) => match wco.phi_n(x, n).and_then(|t| hn.get(t)) {
                Some(h) => Some(phase_quotient(wco, x, w, h)?),
                None => None,
            },
            None => None,
        };
        let mut prod = Some(Complex64::new(1.0, 0.0));
        let mut cur = x;
        for _ in 0..n {
            let w = wco.weight(cur);
            if w == zero {
                prod = Some(zero);
                break;
            }
            let Some(next) = wco.phi(cur) else {
                prod = None;
                break;
            };
            match (prod, h1.get(next)) {
                (Some(p), Some(h)) => prod = Some(p * phase_quotient(wco, cur, w, h)?),
                _ => {
                    prod = None;
                    break;
                }
            }
            cur = next;
        }
        right[x] = prod;
    }
    Ok((left, right))
}

/// Result of [`verify_chain_rule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRuleResidual {
    /// `max |h_{n+k} − (Eₙ(h_k) ∘ φ⁻ⁿ) · hₙ| / max(1, |h_{n+k}|)`.
    pub residual: f64,
    pub points: usize,
}

/// Checks `h_{n+k} = Eₙ(h_k) ∘ φ⁻ⁿ · hₙ` at every point where all three
/// sides are known.
pub fn verify_chain_rule(wco: &DiscreteWco, n: usize, k: usize) -> Result<ChainRuleResidual> {
    let hnk = radon_nikodym(wco, n + k)?;
    let hn = radon_nikodym(wco, n)?;
    let hk = radon_nikodym(wco, k)?;
    let e = conditional_expectation(wco, n, &hk.values);
    // Averages are fiber-constant by construction, so any tolerance works.
    let g = pullback_inverse(wco, n, &e, 1e-6)?;
    let mut residual = 0.0f64;
    let mut points = 0;
    for x in 0..wco.len() {
        if let (Some(a), Some(b), Some(c)) = (hnk.get(x), g[x], hn.get(x)) {
            residual = residual.max((a - b * c).abs() / a.abs().max(1.0));
            points += 1;
        }
    }
    if points == 0 {
        return Err(Error::WindowTooShallow(format!(
            "no point supports the chain rule at orders ({n}, {k})"
        )));
    }
    Ok(ChainRuleResidual { residual, points })
}

/// `f ∘ φ` as a point function.
pub fn compose_phi<T: Copy>(wco: &DiscreteWco, f: &[Option<T>]) -> Vec<Option<T>> {
    (0..wco.len()).map(|x| wco.phi(x).and_then(|y| f[y])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{WeightedShift, Weights};
    use crate::tree::{build_tree, full_window, VertexId};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn star(l1: f64, l2: f64) -> DiscreteWco {
        let tree = build_tree(&["0", "a", "b"], &[("0", "a"), ("0", "b")]).unwrap();
        let values = [("a", l1), ("b", l2)]
            .into_iter()
            .map(|(v, l)| (VertexId::from(v), c(l)))
            .collect();
        let s = WeightedShift::new(tree, Weights::table(values));
        DiscreteWco::from_weighted_shift(&s, &full_window(&s.tree).unwrap()).unwrap()
    }

    #[test]
    fn star_density_and_projection() {
        let wco = star(1.0, 2.0);
        let h = radon_nikodym(&wco, 1).unwrap();
        assert_eq!(h.values, vec![Some(5.0), Some(0.0), Some(0.0)]);
        let p = range_projection(&wco, &[c(0.0), c(1.0), c(0.0)]);
        assert!((p[1].unwrap() - c(0.2)).norm() < 1e-15);
        assert!((p[2].unwrap() - c(0.4)).norm() < 1e-15);
        assert_eq!(p[0], Some(c(0.0)));
        // e_root is in the kernel of the adjoint.
        let p = range_projection(&wco, &[c(1.0), c(0.0), c(0.0)]);
        assert!(p.iter().all(|v| *v == Some(c(0.0))));
    }

    #[test]
    fn expectation_of_constant() {
        let wco = star(1.0, 2.0);
        let f = vec![Some(3.5); 3];
        let e = conditional_expectation(&wco, 1, &f);
        assert_eq!(e, vec![None, Some(3.5), Some(3.5)]);
    }

    #[test]
    fn pullback_on_star() {
        let wco = star(1.0, 2.0);
        let g = vec![None, Some(7.0), Some(7.0)];
        let gi = pullback_inverse(&wco, 1, &g, 1e-9).unwrap();
        assert_eq!(gi, vec![Some(7.0), Some(0.0), Some(0.0)]);
        let bad = vec![None, Some(7.0), Some(8.0)];
        assert_eq!(
            pullback_inverse(&wco, 1, &bad, 1e-9).unwrap_err(),
            Error::NotFiberMeasurable("0".into())
        );
    }

    #[test]
    fn zero_weights_kill_density() {
        let wco = star(0.0, 0.0);
        for n in 1..3 {
            let h = radon_nikodym(&wco, n).unwrap();
            assert!(h.values.iter().all(|v| *v == Some(0.0)));
        }
    }

    #[test]
    fn phase_orders_coincide_at_one() {
        let wco = star(1.0, 2.0);
        let (a, b) = phase_weights(&wco, 1).unwrap();
        assert_eq!(a, b);
        assert!((a[2].unwrap() - c(2.0 / 5f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn chain_rule_on_star() {
        let wco = star(1.0, 2.0);
        let r = verify_chain_rule(&wco, 1, 1).unwrap();
        assert_eq!(r.residual, 0.0);
        let r = verify_chain_rule(&wco, 1, 0).unwrap();
        assert_eq!(r.residual, 0.0);
    }
}
