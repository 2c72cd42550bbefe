//! Pointwise centeredness conditions, weak centeredness, quasinormality and
//! the generation criterion for weighted shifts.
//!
//! A condition is checked at every point where its data are known inside the
//! window. It FAILs as soon as one known point violates it; it is
//! INCONCLUSIVE when some order has no known point at all.

use std::fmt;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::discrete::{DiscreteWco, WeightedShift};
use crate::error::Result;
use crate::transfer::{compose_phi, conditional_expectation, phase_weights, radon_nikodym};
use crate::tree::{ParentSlot, TruncationWindow, VertexId};

/// Conditions that characterize centeredness, plus the related checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    Weak,
    Quasinormal,
    Generation,
}

impl Tag {
    /// The seven pointwise conditions.
    pub const CONDITIONS: [Tag; 7] = [Tag::B, Tag::C, Tag::D, Tag::E, Tag::F, Tag::G, Tag::H];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::B => "B",
            Tag::C => "C",
            Tag::D => "D",
            Tag::E => "E",
            Tag::F => "F",
            Tag::G => "G",
            Tag::H => "H",
            Tag::Weak => "weak",
            Tag::Quasinormal => "quasinormal",
            Tag::Generation => "generation",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Self::CONDITIONS
            .into_iter()
            .chain([Tag::Weak, Tag::Quasinormal, Tag::Generation])
            .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
}

/// A point function value inside a reported fiber.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberValue {
    pub point: VertexId,
    pub value: f64,
}

/// A point where a condition fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: VertexId,
    /// Second vertex, for pairwise criteria.
    pub other: Option<VertexId>,
    pub n: usize,
    /// Second order, for conditions indexed by two orders.
    pub k: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// The averaged values, for conditions involving a conditional expectation.
    pub fiber: Vec<FiberValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    pub tag: Tag,
    /// Largest order tested.
    pub n: usize,
    pub status: Status,
    pub witness: Option<Witness>,
    /// Largest `|lhs − rhs|` over the evaluated points.
    pub residual: f64,
    /// Number of (point, order) evaluations.
    pub points: usize,
    pub note: Option<String>,
}

impl ConditionVerdict {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Accumulates comparisons for one condition.
struct Tally {
    tag: Tag,
    tol: f64,
    residual: f64,
    points: usize,
    /// Points skipped because some datum lies outside the window.
    masked: usize,
    witness: Option<Witness>,
    empty_orders: Vec<String>,
}

impl Tally {
    fn new(tag: Tag, tol: f64) -> Self {
        Tally {
            tag,
            tol,
            residual: 0.0,
            points: 0,
            masked: 0,
            witness: None,
            empty_orders: Vec::new(),
        }
    }

    /// Records one comparison; returns `true` if it violates the tolerance.
    fn compare(&mut self, lhs: f64, _rhs: f64, diff: f64) -> bool {
        self.points += 1;
        self.residual = self.residual.max(diff);
        diff > self.tol.max(self.tol * lhs.abs())
    }

    fn fail(&mut self, witness: impl FnOnce() -> Witness) {
        if self.witness.is_none() {
            self.witness = Some(witness());
        }
    }

    /// `false` off the support; unknown weights count as masked.
    fn on_support(&mut self, w: Option<Complex64>) -> bool {
        match w {
            None => {
                self.masked += 1;
                false
            }
            Some(w) => w != Complex64::new(0.0, 0.0),
        }
    }

    fn mark(&self) -> (usize, usize) {
        (self.points, self.masked)
    }

    /// An order is undecided when nothing was evaluated but something was
    /// masked; with nothing masked it holds vacuously.
    fn order_done(&mut self, before: (usize, usize), label: String) {
        if self.points == before.0 && self.masked > before.1 {
            self.empty_orders.push(label);
        }
    }

    fn finish(self, n: usize) -> ConditionVerdict {
        let (status, note) = if self.witness.is_some() {
            (Status::Fail, None)
        } else if !self.empty_orders.is_empty() {
            (
                Status::Inconclusive,
                Some(format!("no evaluable point at order {}", self.empty_orders.join(", "))),
            )
        } else {
            (Status::Pass, None)
        };
        ConditionVerdict {
            tag: self.tag,
            n,
            status,
            witness: self.witness,
            residual: self.residual,
            points: self.points,
            note,
        }
    }
}

/// Radon–Nikodym derivatives `h_0 … h_max`, undefined everywhere when the
/// window cannot support an order.
fn densities(wco: &DiscreteWco, max: usize) -> Vec<Vec<Option<f64>>> {
    (0..=max)
        .map(|n| radon_nikodym(wco, n).map(|h| h.values).unwrap_or_else(|_| vec![None; wco.len()]))
        .collect()
}

fn fiber_values(wco: &DiscreteWco, target: Option<usize>, n: usize, f: &[Option<f64>]) -> Vec<FiberValue> {
    let Some(t) = target else {
        return Vec::new();
    };
    wco.weighted_fiber(t, n)
        .unwrap_or_default()
        .into_iter()
        .filter_map(|(y, _)| {
            f[y].map(|value| FiberValue {
                point: wco.label(y).clone(),
                value,
            })
        })
        .collect()
}

fn witness(wco: &DiscreteWco, x: usize, n: usize, k: Option<usize>, lhs: f64, rhs: f64, fiber: Vec<FiberValue>) -> Witness {
    Witness {
        point: wco.label(x).clone(),
        other: None,
        n,
        k,
        lhs,
        rhs,
        fiber,
    }
}

/// Checks one of (B)–(H) for all orders up to `n_max` (pairs of orders for (H)).
pub fn check_condition(wco: &DiscreteWco, cond: Tag, n_max: usize, tol: f64) -> Result<ConditionVerdict> {
    let n_max = n_max.max(1);
    let mut t = Tally::new(cond, tol);
    let h = densities(wco, n_max + 1);
    let xs = 0..wco.len();
    match cond {
        Tag::B => {
            for n in 1..=n_max {
                let before = t.mark();
                let (left, right) = phase_weights(wco, n)?;
                for x in xs.clone() {
                    if !t.on_support(wco.w_n(x, n)) {
                        continue;
                    }
                    if let (Some(l), Some(r)) = (left[x], right[x]) {
                        if t.compare(l.norm(), r.norm(), (l - r).norm()) {
                            t.fail(|| witness(wco, x, n, None, l.norm(), r.norm(), Vec::new()));
                        }
                    } else {
                        t.masked += 1;
                    }
                }
                t.order_done(before, n.to_string());
            }
        }
        Tag::C => {
            for n in 1..=n_max {
                let before = t.mark();
                for x in xs.clone() {
                    if !t.on_support(wco.w_n(x, n)) {
                        continue;
                    }
                    let prod: Option<f64> = (1..=n).map(|j| wco.phi_n(x, j).and_then(|y| h[1][y])).product();
                    let rhs = wco.phi_n(x, n).and_then(|y| h[n][y]);
                    if let (Some(l), Some(r)) = (prod, rhs) {
                        if t.compare(l, r, (l - r).abs()) {
                            t.fail(|| witness(wco, x, n, None, l, r, Vec::new()));
                        }
                    } else {
                        t.masked += 1;
                    }
                }
                t.order_done(before, n.to_string());
            }
        }
        Tag::D => {
            for n in 1..=n_max {
                let before = t.mark();
                expectation_identity(wco, &mut t, n, 1, &h[n], None);
                t.order_done(before, n.to_string());
            }
        }
        Tag::E => {
            for n in 1..=n_max {
                let before = t.mark();
                for x in xs.clone() {
                    if wco.weight(x) == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let Some(p) = wco.phi(x) else {
                        t.masked += 1;
                        continue;
                    };
                    if let (Some(l), Some(a), Some(b)) = (h[n + 1][p], h[n][x], h[1][p]) {
                        let r = a * b;
                        if t.compare(l, r, (l - r).abs()) {
                            t.fail(|| witness(wco, x, n, None, l, r, Vec::new()));
                        }
                    } else {
                        t.masked += 1;
                    }
                }
                t.order_done(before, n.to_string());
            }
        }
        Tag::F => {
            for n in 1..=n_max {
                let before = t.mark();
                expectation_identity(wco, &mut t, 1, n, &h[1], Some(n));
                t.order_done(before, n.to_string());
            }
        }
        Tag::G => {
            let h1_phi = compose_phi(wco, &h[1]);
            for n in 1..=n_max {
                let before = t.mark();
                let en = conditional_expectation(wco, n, &h[1]);
                let en1 = conditional_expectation(wco, n + 1, &h1_phi);
                for x in xs.clone() {
                    if !t.on_support(wco.w_n(x, n + 1)) {
                        continue;
                    }
                    let lhs = wco.phi(x).and_then(|p| en[p]);
                    if let (Some(l), Some(r)) = (lhs, en1[x]) {
                        if t.compare(l, r, (l - r).abs()) {
                            let fiber = fiber_values(wco, wco.phi_n(x, n + 1), n + 1, &h1_phi);
                            t.fail(|| witness(wco, x, n, None, l, r, fiber));
                        }
                    } else {
                        t.masked += 1;
                    }
                }
                t.order_done(before, n.to_string());
            }
        }
        Tag::H => {
            for n in 1..=n_max {
                for k in 1..=n_max {
                    let before = t.mark();
                    expectation_identity(wco, &mut t, n, k, &h[n], Some(k));
                    t.order_done(before, format!("({n},{k})"));
                }
            }
        }
        Tag::Weak | Tag::Quasinormal | Tag::Generation => {
            return Err(crate::error::Error::Invalid(format!("`{cond}` is not a pointwise condition")));
        }
    }
    Ok(t.finish(n_max))
}

/// `f = E_k(f)` at points with `w_k ≠ 0`; `f` is `h_n`. The witness reports
/// order `n` and, when `k_tag` is set, the expectation order `k`.
fn expectation_identity(wco: &DiscreteWco, t: &mut Tally, n: usize, k: usize, f: &[Option<f64>], k_tag: Option<usize>) {
    let e = conditional_expectation(wco, k, f);
    let report_n = if k_tag.is_some() && t.tag == Tag::F { k } else { n };
    for x in 0..wco.len() {
        if !t.on_support(wco.w_n(x, k)) {
            continue;
        }
        if let (Some(l), Some(r)) = (f[x], e[x]) {
            if t.compare(l, r, (l - r).abs()) {
                let fiber = fiber_values(wco, wco.phi_n(x, k), k, f);
                let k_field = if t.tag == Tag::H { k_tag } else { None };
                t.fail(|| witness(wco, x, report_n, k_field, l, r, fiber));
            }
        } else {
            t.masked += 1;
        }
    }
}

/// `h₁ = E₁(h₁)` on weighted points.
pub fn check_weakly_centered(wco: &DiscreteWco, tol: f64) -> Result<ConditionVerdict> {
    let mut t = Tally::new(Tag::Weak, tol);
    let h = densities(wco, 1);
    expectation_identity(wco, &mut t, 1, 1, &h[1], None);
    Ok(t.finish(1))
}

/// Child sums `Σ_{y ∈ Chi(u)} |λ_y|²` must agree on every pair of a
/// generation joined to its meeting ancestor by nonzero weights.
///
/// Such pairs are exactly the same-level vertices of one component of the
/// shift cut at its zero weights. Only members whose children all lie in the
/// window are compared.
pub fn generation_criterion(shift: &WeightedShift, window: &TruncationWindow, tol: f64) -> Result<ConditionVerdict> {
    let n = window.len();
    let mut comp = vec![0usize; n];
    let mut next_comp = 0;
    for i in 0..n {
        let joined = match window.parent[i] {
            ParentSlot::Inside(p) if shift.lambda(&window.members[i])?.norm_sqr() != 0.0 => Some(p),
            _ => None,
        };
        comp[i] = match joined {
            Some(p) => comp[p],
            None => {
                next_comp += 1;
                next_comp - 1
            }
        };
    }
    let mut sums = vec![None; n];
    for i in 0..n {
        if window.interior_mask[i] {
            let mut s = 0.0;
            for &c in &window.children[i] {
                s += shift.lambda(&window.members[c])?.norm_sqr();
            }
            sums[i] = Some(s);
        }
    }
    let mut t = Tally::new(Tag::Generation, tol);
    // First evaluable member per (component, level); the rest compare to it.
    let mut reps: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    for i in 0..n {
        let Some(s) = sums[i] else { continue };
        match reps.get(&(comp[i], window.level[i])) {
            None => {
                reps.insert((comp[i], window.level[i]), i);
                t.points += 1;
            }
            Some(&r) => {
                let sr = sums[r].expect("representatives have sums");
                if t.compare(sr, s, (sr - s).abs()) {
                    // Meeting height: distance to the lowest common ancestor.
                    let height = meeting_height_in_window(window, r, i);
                    t.fail(|| Witness {
                        point: window.members[r].clone(),
                        other: Some(window.members[i].clone()),
                        n: height,
                        k: None,
                        lhs: sr,
                        rhs: s,
                        fiber: Vec::new(),
                    });
                }
            }
        }
    }
    Ok(t.finish(window.depth))
}

fn meeting_height_in_window(window: &TruncationWindow, mut a: usize, mut b: usize) -> usize {
    let mut k = 0;
    while a != b {
        match (window.parent[a], window.parent[b]) {
            (ParentSlot::Inside(pa), ParentSlot::Inside(pb)) => {
                a = pa;
                b = pb;
                k += 1;
            }
            _ => break,
        }
    }
    k
}

/// For composition operators (`w ≡ 1`): `E₁(h₁) = h₁ ∘ φ` and
/// `E₁(hₙ) = E₁(h₁)ⁿ` up to `n_max`. Other wco's are NOT_APPLICABLE.
pub fn check_quasinormal_composition(wco: &DiscreteWco, n_max: usize, tol: f64) -> Result<ConditionVerdict> {
    let n_max = n_max.max(1);
    if !wco.is_composition() {
        return Ok(ConditionVerdict {
            tag: Tag::Quasinormal,
            n: n_max,
            status: Status::NotApplicable,
            witness: None,
            residual: 0.0,
            points: 0,
            note: Some("weights are not identically 1".into()),
        });
    }
    let mut t = Tally::new(Tag::Quasinormal, tol);
    let h = densities(wco, n_max);
    let e1 = conditional_expectation(wco, 1, &h[1]);
    let h1_phi = compose_phi(wco, &h[1]);
    let before = t.mark();
    for x in 0..wco.len() {
        if wco.weight(x) == Complex64::new(0.0, 0.0) {
            continue;
        }
        if let (Some(l), Some(r)) = (e1[x], h1_phi[x]) {
            if t.compare(l, r, (l - r).abs()) {
                let fiber = fiber_values(wco, wco.phi(x), 1, &h[1]);
                t.fail(|| witness(wco, x, 1, None, l, r, fiber));
            }
        } else {
            t.masked += 1;
        }
    }
    t.order_done(before, "1".into());
    for n in 2..=n_max {
        let before = t.mark();
        let en = conditional_expectation(wco, 1, &h[n]);
        for x in 0..wco.len() {
            if wco.weight(x) == Complex64::new(0.0, 0.0) {
                continue;
            }
            if let (Some(l), Some(e)) = (en[x], e1[x]) {
                let r = e.powi(n as i32);
                if t.compare(l, r, (l - r).abs()) {
                    t.fail(|| witness(wco, x, n, None, l, r, Vec::new()));
                }
            } else {
                t.masked += 1;
            }
        }
        t.order_done(before, n.to_string());
    }
    Ok(t.finish(n_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::shift_builtin;
    use crate::discrete::Weights;
    use crate::tree::{build_tree, full_window};

    #[test]
    fn binary_passes_everything() {
        let inst = shift_builtin("binary", 8).unwrap();
        let (_, wco) = inst.wco().unwrap();
        for tag in Tag::CONDITIONS {
            let v = check_condition(&wco, tag, 3, 1e-9).unwrap();
            assert_eq!(v.status, Status::Pass, "{tag}: {v:?}");
            assert!(v.residual <= 1e-12);
        }
        let v = check_condition(&wco, Tag::D, 4, 1e-9).unwrap();
        assert!(v.passed());
    }

    #[test]
    fn blackblack_is_weak_but_not_centered() {
        let inst = shift_builtin("blackblack", 6).unwrap();
        let (w, wco) = inst.wco().unwrap();
        assert!(check_weakly_centered(&wco, 1e-9).unwrap().passed());
        let d = check_condition(&wco, Tag::D, 2, 1e-9).unwrap();
        assert!(d.failed());
        let wit = d.witness.unwrap();
        assert_eq!(wit.n, 2);
        let vals: Vec<(&str, f64)> = wit.fiber.iter().map(|f| (f.point.as_str(), f.value)).collect();
        assert_eq!(vals, [("(1,1)", 1.0), ("(1,2)", 2.0)]);
        let g = generation_criterion(&inst.shift, &w, 1e-9).unwrap();
        let wit = g.witness.unwrap();
        assert_eq!((wit.point.as_str(), wit.other.unwrap().as_str()), ("(2,1)", "(2,2)"));
        assert_eq!((wit.lhs, wit.rhs), (1.0, 2.0));
    }

    #[test]
    fn unilateral_path_is_weakly_centered() {
        let inst = shift_builtin("zplus_path", 6).unwrap();
        let (_, wco) = inst.wco().unwrap();
        assert!(check_weakly_centered(&wco, 1e-9).unwrap().passed());
    }

    #[test]
    fn quasinormal_guard_and_branching() {
        let inst = shift_builtin("binary", 6).unwrap();
        let (_, wco) = inst.wco().unwrap();
        let q = check_quasinormal_composition(&wco, 3, 1e-9).unwrap();
        assert_eq!(q.status, Status::Pass);

        let tree = build_tree(&["0", "a", "b", "c"], &[("0", "a"), ("0", "b"), ("a", "c")]).unwrap();
        let s = WeightedShift::new(tree, Weights::uniform(2.0));
        let wco = DiscreteWco::from_weighted_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        assert_eq!(check_quasinormal_composition(&wco, 2, 1e-9).unwrap().status, Status::NotApplicable);

        // Two branches of different valency below the root break (iii).
        let tree = build_tree(&["0", "a", "b", "c"], &[("0", "a"), ("0", "b"), ("a", "c")]).unwrap();
        let s = WeightedShift::new(tree, Weights::uniform(1.0));
        let wco = DiscreteWco::from_weighted_shift(&s, &full_window(&s.tree).unwrap()).unwrap();
        let q = check_quasinormal_composition(&wco, 2, 1e-9).unwrap();
        assert!(q.failed(), "{q:?}");
    }

    #[test]
    fn shallow_window_is_inconclusive() {
        let inst = shift_builtin("binary", 1).unwrap();
        let (_, wco) = inst.wco().unwrap();
        let v = check_condition(&wco, Tag::E, 3, 1e-9).unwrap();
        assert_eq!(v.status, Status::Inconclusive);
    }
}
