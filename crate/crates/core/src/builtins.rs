//! Builtin example instances: generated trees with unit weights and the two
//! continuous configurations.

use std::sync::Arc;

use crate::continuous::ContinuousConfig;
use crate::discrete::{DiscreteWco, WeightedShift, Weights};
use crate::error::{Error, Result};
use crate::tree::{build_tree, truncate, DirectedTree, TreeGenerator, TruncationWindow, VertexId};

/// Names accepted by [`builtin`], in the order they are listed by the CLI.
pub const BUILTIN_NAMES: &[&str] = &[
    "binary",
    "y_tree",
    "z_minus",
    "blackblack",
    "halfline",
    "linear_gauss",
    "zplus_path",
    "rooted_full_binary_d3",
];

/// Extra shift instances used in tests; not advertised by the CLI.
pub const EXTRA_SHIFTS: &[&str] = &["zline", "ternary"];

/// Explicit type IV vector on a builtin, given vertex by vertex.
pub type IvWitness = fn(&VertexId) -> f64;

/// A weighted shift together with the window it is evaluated on.
#[derive(Clone)]
pub struct ShiftInstance {
    pub name: String,
    pub shift: WeightedShift,
    pub base: VertexId,
    pub depth: usize,
    /// A vector known to lie in every `ran(Sⁿ)`, when the instance has one.
    pub iv_witness: Option<IvWitness>,
}

impl ShiftInstance {
    pub fn window(&self) -> Result<TruncationWindow> {
        truncate(&self.shift.tree, &self.base, self.depth)
    }

    pub fn wco(&self) -> Result<(TruncationWindow, DiscreteWco)> {
        let window = self.window()?;
        let wco = DiscreteWco::from_weighted_shift(&self.shift, &window)?;
        Ok((window, wco))
    }

    /// The same instance on a deeper (or shallower) window.
    pub fn with_depth(&self, depth: usize) -> Result<ShiftInstance> {
        match shift_builtin(&self.name, depth) {
            Err(Error::UnknownBuiltin(_)) => Ok(ShiftInstance {
                depth,
                ..self.clone()
            }),
            other => other,
        }
    }
}

/// Either kind of builtin.
pub enum Builtin {
    Shift(ShiftInstance),
    Continuous(ContinuousConfig),
}

pub fn builtin(name: &str, depth: usize) -> Result<Builtin> {
    match name {
        "halfline" => Ok(Builtin::Continuous(ContinuousConfig::halfline())),
        "linear_gauss" => Ok(Builtin::Continuous(ContinuousConfig::linear_gauss())),
        _ => shift_builtin(name, depth).map(Builtin::Shift),
    }
}

fn half_up(depth: usize) -> usize {
    depth.div_ceil(2).max(1)
}

pub fn shift_builtin(name: &str, depth: usize) -> Result<ShiftInstance> {
    let (tree, base, iv_witness): (DirectedTree, String, Option<IvWitness>) = match name {
        "binary" => (gen(KaryTree { arity: 2, name: "binary" }), "c0".into(), None),
        "ternary" => (gen(KaryTree { arity: 3, name: "ternary" }), "c0".into(), None),
        "y_tree" => (gen(YTree), format!("(1,{})", half_up(depth)), Some(y_tree_witness)),
        "z_minus" => (gen(ZMinus), "0".into(), None),
        "blackblack" => (gen(BlackBlack), format!("({},2)", half_up(depth)), None),
        "zplus_path" => (gen(ZPlus), "0".into(), None),
        "zline" => (gen(ZLine), "0".into(), None),
        "rooted_full_binary_d3" => (rooted_full_binary(3), "r".into(), None),
        _ => return Err(Error::UnknownBuiltin(name.to_owned())),
    };
    Ok(ShiftInstance {
        name: name.to_owned(),
        shift: WeightedShift::new(tree, Weights::uniform(1.0)),
        base: VertexId::from(base),
        depth,
        iv_witness,
    })
}

/// `f((i,k)) = 2^{-k}` on both branches, zero on the trunk.
fn y_tree_witness(v: &VertexId) -> f64 {
    match parse_pair(v.as_str()) {
        Some((_, k)) => 0.5f64.powi(k as i32),
        None => 0.0,
    }
}

fn gen(g: impl TreeGenerator + 'static) -> DirectedTree {
    DirectedTree::generated(Arc::new(g))
}

/// Full binary tree of the given height with root `r`; children of `rb` are
/// `rb0` and `rb1`.
fn rooted_full_binary(height: usize) -> DirectedTree {
    let mut vertices = vec!["r".to_owned()];
    let mut edges = Vec::new();
    let mut layer = vec!["r".to_owned()];
    for _ in 0..height {
        let mut next = Vec::new();
        for p in &layer {
            for bit in ["0", "1"] {
                let c = format!("{p}{bit}");
                edges.push((p.clone(), c.clone()));
                vertices.push(c.clone());
                next.push(c);
            }
        }
        layer = next;
    }
    build_tree(&vertices, &edges).expect("full binary tree is valid")
}

fn parse_pair(s: &str) -> Option<(i64, i64)> {
    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Trunk vertices `0, -1, -2, …`; returns `k` for `-k`.
fn parse_trunk(s: &str) -> Option<i64> {
    if s == "0" {
        return Some(0);
    }
    let k: i64 = s.strip_prefix('-')?.parse().ok()?;
    (k >= 1 && !s.starts_with("-0")).then_some(k)
}

fn trunk_id(k: i64) -> String {
    if k == 0 {
        "0".into()
    } else {
        format!("-{k}")
    }
}

/// Rootless, leafless κ-ary tree. The backbone `c{k}` (k ∈ ℤ) has `c{k+1}` as
/// its first child; the other children are `c{k}.{d}`, whose descendants
/// append one digit per generation.
struct KaryTree {
    arity: u32,
    name: &'static str,
}

enum KaryVertex<'a> {
    Backbone(i64),
    Off(i64, &'a str),
}

impl KaryTree {
    fn parse<'a>(&self, v: &'a str) -> Option<KaryVertex<'a>> {
        let rest = v.strip_prefix('c')?;
        let (k, digits) = match rest.split_once('.') {
            Some((k, d)) => (k, Some(d)),
            None => (rest, None),
        };
        let k: i64 = k.parse().ok()?;
        match digits {
            None => Some(KaryVertex::Backbone(k)),
            Some(d) => {
                let ok = !d.is_empty()
                    && d.chars().all(|ch| ch.to_digit(10).is_some_and(|x| x < self.arity))
                    && !d.starts_with('0');
                ok.then_some(KaryVertex::Off(k, d))
            }
        }
    }
}

impl TreeGenerator for KaryTree {
    fn name(&self) -> &str {
        self.name
    }

    fn contains(&self, v: &str) -> bool {
        self.parse(v).is_some()
    }

    fn parent(&self, v: &str) -> Option<String> {
        Some(match self.parse(v)? {
            KaryVertex::Backbone(k) => format!("c{}", k - 1),
            KaryVertex::Off(k, d) if d.len() == 1 => format!("c{k}"),
            KaryVertex::Off(k, d) => format!("c{k}.{}", &d[..d.len() - 1]),
        })
    }

    fn children(&self, v: &str) -> Vec<String> {
        match self.parse(v) {
            Some(KaryVertex::Backbone(k)) => std::iter::once(format!("c{}", k + 1))
                .chain((1..self.arity).map(|d| format!("c{k}.{d}")))
                .collect(),
            Some(KaryVertex::Off(_, _)) => (0..self.arity).map(|d| format!("{v}{d}")).collect(),
            None => Vec::new(),
        }
    }
}

/// `… → -2 → -1 → 0`, with a leaf at `0`.
struct ZMinus;

impl TreeGenerator for ZMinus {
    fn name(&self) -> &str {
        "z_minus"
    }
    fn contains(&self, v: &str) -> bool {
        parse_trunk(v).is_some()
    }
    fn parent(&self, v: &str) -> Option<String> {
        parse_trunk(v).map(|k| trunk_id(k + 1))
    }
    fn children(&self, v: &str) -> Vec<String> {
        match parse_trunk(v) {
            Some(k) if k >= 1 => vec![trunk_id(k - 1)],
            _ => Vec::new(),
        }
    }
}

/// Bilateral path on ℤ.
struct ZLine;

impl TreeGenerator for ZLine {
    fn name(&self) -> &str {
        "zline"
    }
    fn contains(&self, v: &str) -> bool {
        v.parse::<i64>().is_ok_and(|k| k.to_string() == v)
    }
    fn parent(&self, v: &str) -> Option<String> {
        self.contains(v).then(|| (v.parse::<i64>().unwrap() - 1).to_string())
    }
    fn children(&self, v: &str) -> Vec<String> {
        if self.contains(v) {
            vec![(v.parse::<i64>().unwrap() + 1).to_string()]
        } else {
            Vec::new()
        }
    }
}

/// Rooted path `0 → 1 → 2 → …`.
struct ZPlus;

impl TreeGenerator for ZPlus {
    fn name(&self) -> &str {
        "zplus_path"
    }
    fn contains(&self, v: &str) -> bool {
        v.parse::<u64>().is_ok_and(|k| k.to_string() == v)
    }
    fn parent(&self, v: &str) -> Option<String> {
        let k: u64 = v.parse().ok().filter(|_| self.contains(v))?;
        (k > 0).then(|| (k - 1).to_string())
    }
    fn children(&self, v: &str) -> Vec<String> {
        if self.contains(v) {
            vec![(v.parse::<u64>().unwrap() + 1).to_string()]
        } else {
            Vec::new()
        }
    }
}

/// Trunk `… → -1 → 0` splitting at `0` into two rays `(i,1) → (i,2) → …`.
struct YTree;

impl TreeGenerator for YTree {
    fn name(&self) -> &str {
        "y_tree"
    }
    fn contains(&self, v: &str) -> bool {
        parse_trunk(v).is_some() || parse_pair(v).is_some_and(|(i, j)| (1..=2).contains(&i) && j >= 1)
    }
    fn parent(&self, v: &str) -> Option<String> {
        if let Some(k) = parse_trunk(v) {
            return Some(trunk_id(k + 1));
        }
        let (i, j) = parse_pair(v).filter(|_| self.contains(v))?;
        Some(if j == 1 { "0".into() } else { format!("({i},{})", j - 1) })
    }
    fn children(&self, v: &str) -> Vec<String> {
        if let Some(k) = parse_trunk(v) {
            return if k == 0 {
                vec!["(1,1)".into(), "(2,1)".into()]
            } else {
                vec![trunk_id(k - 1)]
            };
        }
        match parse_pair(v).filter(|_| self.contains(v)) {
            Some((i, j)) => vec![format!("({i},{})", j + 1)],
            None => Vec::new(),
        }
    }
}

/// Trunk `… → -1 → 0`; `0` has children `(1,1)` and `(1,2)`, continuing as
/// `(1,1) → (2,1) → (3,1) → …` and `(1,2) → (2,2)`, which splits into
/// `(3,2)` and `(3,3)`; from level 3 on every vertex `(n,i)` has the single
/// child `(n+1,i)`.
struct BlackBlack;

impl BlackBlack {
    fn valid(i: i64, n: i64) -> bool {
        match n {
            1 | 2 => (1..=2).contains(&i),
            n if n >= 3 => (1..=3).contains(&i),
            _ => false,
        }
    }

    fn pair(v: &str) -> Option<(i64, i64)> {
        parse_pair(v).filter(|&(n, i)| Self::valid(i, n))
    }
}

impl TreeGenerator for BlackBlack {
    fn name(&self) -> &str {
        "blackblack"
    }
    fn contains(&self, v: &str) -> bool {
        parse_trunk(v).is_some() || Self::pair(v).is_some()
    }
    fn parent(&self, v: &str) -> Option<String> {
        if let Some(k) = parse_trunk(v) {
            return Some(trunk_id(k + 1));
        }
        let (n, i) = Self::pair(v)?;
        Some(match (n, i) {
            (1, _) => "0".into(),
            (3, 3) => "(2,2)".into(),
            _ => format!("({},{i})", n - 1),
        })
    }
    fn children(&self, v: &str) -> Vec<String> {
        if let Some(k) = parse_trunk(v) {
            return if k == 0 {
                vec!["(1,1)".into(), "(1,2)".into()]
            } else {
                vec![trunk_id(k - 1)]
            };
        }
        match Self::pair(v) {
            Some((2, 2)) => vec!["(3,2)".into(), "(3,3)".into()],
            Some((n, i)) => vec![format!("({},{i})", n + 1)],
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{ancestor, generations, structural_profile};

    fn ids(w: &TruncationWindow) -> Vec<&str> {
        w.members.iter().map(|v| v.as_str()).collect()
    }

    /// Every generator must satisfy `v ∈ children(u) ⟺ parent(v) = u`.
    #[test]
    fn generators_are_consistent() {
        for name in ["binary", "ternary", "y_tree", "z_minus", "blackblack", "zplus_path", "zline"] {
            let inst = shift_builtin(name, 6).unwrap();
            let w = inst.window().unwrap();
            for v in &w.members {
                for c in inst.shift.tree.children(v).unwrap() {
                    assert!(inst.shift.tree.contains(&c), "{name}: {c}");
                    assert_eq!(inst.shift.tree.parent(&c).unwrap().as_ref(), Some(v), "{name}: {c}");
                }
                if let Some(p) = inst.shift.tree.parent(v).unwrap() {
                    assert!(inst.shift.tree.children(&p).unwrap().contains(v), "{name}: {v}");
                }
            }
        }
    }

    #[test]
    fn z_minus_window_and_ancestor() {
        let inst = shift_builtin("z_minus", 6).unwrap();
        let w = inst.window().unwrap();
        assert_eq!(ids(&w), ["-6", "-5", "-4", "-3", "-2", "-1", "0"]);
        let a = ancestor(&inst.shift.tree, &"0".into(), 3).unwrap();
        assert_eq!(a, Some(VertexId::from("-3")));
        let p = structural_profile(&inst.shift.tree, Some(&w)).unwrap();
        assert!(p.is_z_minus_isomorphic && !p.rooted);
        assert_eq!(p.leaves, vec![VertexId::from("0")]);
    }

    #[test]
    fn binary_window_size() {
        let inst = shift_builtin("binary", 8).unwrap();
        let w = inst.window().unwrap();
        assert_eq!(w.len(), 511);
        assert_eq!(w.members[0].as_str(), "c-8");
        let p = structural_profile(&inst.shift.tree, Some(&w)).unwrap();
        assert!(p.is_leafless && !p.rooted);
        assert_eq!(p.branching.len(), w.len());
        let inst = shift_builtin("binary", 3).unwrap();
        let w = inst.window().unwrap();
        for class in generations(&w).classes {
            let lvl = w.level[class[0]];
            assert!(class.iter().all(|&m| w.level[m] == lvl));
            assert_eq!(class.len(), 1 << lvl);
        }
    }

    #[test]
    fn blackblack_topology() {
        let inst = shift_builtin("blackblack", 6).unwrap();
        let w = inst.window().unwrap();
        assert_eq!(inst.base.as_str(), "(3,2)");
        assert_eq!(w.members[0].as_str(), "-3");
        let p = structural_profile(&inst.shift.tree, Some(&w)).unwrap();
        let branching: Vec<&str> = p.branching.iter().map(|v| v.as_str()).collect();
        assert_eq!(branching, ["0", "(2,2)"]);
        let g = generations(&w);
        let a = w.index_of(&"(2,1)".into()).unwrap();
        let b = w.index_of(&"(2,2)".into()).unwrap();
        assert_eq!(g.class_of[a], g.class_of[b]);
    }

    #[test]
    fn y_tree_window() {
        let inst = shift_builtin("y_tree", 10).unwrap();
        let w = inst.window().unwrap();
        assert_eq!(w.members[0].as_str(), "-5");
        assert_eq!(w.len(), 6 + 10);
        let f = inst.iv_witness.unwrap();
        assert_eq!(f(&"(2,3)".into()), 0.125);
        assert_eq!(f(&"-1".into()), 0.0);
    }

    #[test]
    fn rooted_binary_is_finite() {
        let inst = shift_builtin("rooted_full_binary_d3", 8).unwrap();
        assert_eq!(inst.shift.tree.vertices().unwrap().len(), 15);
        let p = structural_profile(&inst.shift.tree, None).unwrap();
        assert_eq!(p.finite_depth, Some(3));
        assert_eq!(p.leaves.len(), 8);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin("nosuch", 4), Err(Error::UnknownBuiltin(_))));
    }
}
