//! Directed trees, finite truncation windows and structural queries.
//!
//! A [`DirectedTree`] is either a finite, fully validated tree built from
//! vertex and edge lists, or a lazily generated (possibly infinite) tree
//! backed by a [`TreeGenerator`]. Generated trees are only ever inspected
//! through a bounded [`TruncationWindow`], and every global predicate computed
//! on them is reported as verified on that window.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Opaque vertex identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct VertexId(String);

impl VertexId {
    pub fn new(id: impl Into<String>) -> Self {
        VertexId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId(s.to_owned())
    }
}

impl From<String> for VertexId {
    fn from(s: String) -> Self {
        VertexId(s)
    }
}

/// Callbacks describing a lazily enumerated directed tree.
///
/// Implementations must be consistent: `v` is listed in `children(u)` exactly
/// when `parent(v) == Some(u)`.
pub trait TreeGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn contains(&self, v: &str) -> bool;
    fn parent(&self, v: &str) -> Option<String>;
    fn children(&self, v: &str) -> Vec<String>;
}

#[derive(Debug)]
struct FiniteTree {
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

#[derive(Clone)]
enum Repr {
    Finite(Arc<FiniteTree>),
    Generated(Arc<dyn TreeGenerator>),
}

/// A directed tree: finite and validated, or generated on demand.
#[derive(Clone)]
pub struct DirectedTree {
    repr: Repr,
}

impl fmt::Debug for DirectedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Finite(t) => f
                .debug_struct("DirectedTree")
                .field("vertices", &t.ids.len())
                .field("root", &t.ids[t.root])
                .finish(),
            Repr::Generated(g) => f
                .debug_struct("DirectedTree")
                .field("generator", &g.name())
                .finish(),
        }
    }
}

/// Builds a validated finite tree from a vertex list and `(parent, child)` edges.
///
/// Children keep the order in which their edges are listed.
pub fn build_tree<V, E>(vertices: &[V], edges: &[(E, E)]) -> Result<DirectedTree>
where
    V: AsRef<str>,
    E: AsRef<str>,
{
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    for v in vertices {
        let id = VertexId::from(v.as_ref());
        if !index.contains_key(&id) {
            index.insert(id.clone(), ids.len());
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyTree);
    }
    let lookup = |s: &str| {
        index
            .get(&VertexId::from(s))
            .copied()
            .ok_or_else(|| Error::UnknownVertex(s.to_owned()))
    };
    let mut parent: Vec<Option<usize>> = vec![None; ids.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (p, c) in edges {
        let (p, c) = (lookup(p.as_ref())?, lookup(c.as_ref())?);
        if parent[c].is_some() {
            return Err(Error::DuplicateParent(ids[c].to_string()));
        }
        // Self-loops are one-vertex cycles.
        if p == c {
            return Err(Error::CycleDetected(ids[c].to_string()));
        }
        parent[c] = Some(p);
        children[p].push(c);
    }

    // Cycle detection: walk up from each vertex, colouring finished chains.
    let mut state = vec![0u8; ids.len()]; // 0 unseen, 1 on current walk, 2 done
    for start in 0..ids.len() {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(v) = cur {
            match state[v] {
                2 => break,
                1 => return Err(Error::CycleDetected(ids[v].to_string())),
                _ => {
                    state[v] = 1;
                    walk.push(v);
                    cur = parent[v];
                }
            }
        }
        for v in walk {
            state[v] = 2;
        }
    }

    let roots: Vec<usize> = (0..ids.len()).filter(|&v| parent[v].is_none()).collect();
    match roots.as_slice() {
        [root] => Ok(DirectedTree {
            repr: Repr::Finite(Arc::new(FiniteTree {
                ids,
                index,
                parent,
                children,
                root: *root,
            })),
        }),
        // Acyclic and finite means at least one root exists.
        [a, b, ..] => Err(Error::Disconnected(ids[*a].to_string(), ids[*b].to_string())),
        [] => Err(Error::CycleDetected(ids[0].to_string())),
    }
}

impl DirectedTree {
    /// Wraps a generator as a tree.
    pub fn generated(generator: Arc<dyn TreeGenerator>) -> Self {
        DirectedTree {
            repr: Repr::Generated(generator),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.repr, Repr::Finite(_))
    }

    pub fn name(&self) -> String {
        match &self.repr {
            Repr::Finite(t) => format!("finite({} vertices)", t.ids.len()),
            Repr::Generated(g) => g.name().to_owned(),
        }
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        match &self.repr {
            Repr::Finite(t) => t.index.contains_key(v),
            Repr::Generated(g) => g.contains(v.as_str()),
        }
    }

    fn check(&self, v: &VertexId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownVertex(v.to_string()))
        }
    }

    pub fn parent(&self, v: &VertexId) -> Result<Option<VertexId>> {
        self.check(v)?;
        Ok(match &self.repr {
            Repr::Finite(t) => t.parent[t.index[v]].map(|p| t.ids[p].clone()),
            Repr::Generated(g) => g.parent(v.as_str()).map(VertexId::from),
        })
    }

    pub fn children(&self, v: &VertexId) -> Result<Vec<VertexId>> {
        self.check(v)?;
        Ok(match &self.repr {
            Repr::Finite(t) => t.children[t.index[v]]
                .iter()
                .map(|&c| t.ids[c].clone())
                .collect(),
            Repr::Generated(g) => g
                .children(v.as_str())
                .into_iter()
                .map(VertexId::from)
                .collect(),
        })
    }

    /// The root, when it is known. Generated trees report `None`; use
    /// [`structural_profile`] on a window for them.
    pub fn root(&self) -> Option<VertexId> {
        match &self.repr {
            Repr::Finite(t) => Some(t.ids[t.root].clone()),
            Repr::Generated(_) => None,
        }
    }

    /// All vertices of a finite tree in breadth-first order from the root.
    pub fn vertices(&self) -> Option<Vec<VertexId>> {
        match &self.repr {
            Repr::Finite(t) => {
                let mut out = Vec::with_capacity(t.ids.len());
                let mut queue = VecDeque::from([t.root]);
                while let Some(v) = queue.pop_front() {
                    out.push(t.ids[v].clone());
                    queue.extend(t.children[v].iter().copied());
                }
                Some(out)
            }
            Repr::Generated(_) => None,
        }
    }

    /// Height of a finite tree (longest root-to-leaf path).
    pub fn finite_height(&self) -> Option<usize> {
        let Repr::Finite(t) = &self.repr else {
            return None;
        };
        let mut best = 0;
        let mut stack = vec![(t.root, 0usize)];
        while let Some((v, d)) = stack.pop() {
            best = best.max(d);
            stack.extend(t.children[v].iter().map(|&c| (c, d + 1)));
        }
        Some(best)
    }
}

/// `par^k(v)`, or `None` once the chain passes the root.
pub fn ancestor(tree: &DirectedTree, v: &VertexId, k: usize) -> Result<Option<VertexId>> {
    tree.check(v)?;
    let mut cur = v.clone();
    for _ in 0..k {
        match tree.parent(&cur)? {
            Some(p) => cur = p,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Parent of a window member, as seen from inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentSlot {
    /// The vertex is the root of the whole tree.
    Root,
    /// The parent is the window member with this index.
    Inside(usize),
    /// The parent exists but lies outside the window.
    Outside,
}

/// A finite, deterministic piece of a tree.
///
/// Members are the descendants (within `depth` steps) of the highest ancestor
/// of `base` reachable in at most `depth` parent steps, in breadth-first order.
#[derive(Debug, Clone)]
pub struct TruncationWindow {
    pub base: VertexId,
    pub depth: usize,
    pub members: Vec<VertexId>,
    /// Distance from the highest ancestor (`members[0]`).
    pub level: Vec<usize>,
    pub parent: Vec<ParentSlot>,
    pub children: Vec<Vec<usize>>,
    /// `true` iff every child of the vertex is a member.
    pub interior_mask: Vec<bool>,
    index: HashMap<VertexId, usize>,
}

impl TruncationWindow {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn index_of(&self, v: &VertexId) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        self.index.contains_key(v)
    }

    /// `true` when the window's top vertex is the root of the tree.
    pub fn top_is_root(&self) -> bool {
        self.parent[0] == ParentSlot::Root
    }

    /// `true` when no member has a child outside the window.
    pub fn is_complete(&self) -> bool {
        self.interior_mask.iter().all(|&b| b)
    }
}

/// Cuts a finite window out of `tree` around `base`.
pub fn truncate(tree: &DirectedTree, base: &VertexId, depth: usize) -> Result<TruncationWindow> {
    tree.check(base)?;
    let mut top = base.clone();
    for _ in 0..depth {
        match tree.parent(&top)? {
            Some(p) => top = p,
            None => break,
        }
    }
    let top_slot = if tree.parent(&top)?.is_some() {
        ParentSlot::Outside
    } else {
        ParentSlot::Root
    };

    let mut members = Vec::new();
    let mut level = Vec::new();
    let mut parent = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut interior_mask = Vec::new();
    let mut index = HashMap::new();
    let mut queue = VecDeque::from([(top, top_slot, 0usize)]);
    while let Some((v, slot, lvl)) = queue.pop_front() {
        let idx = members.len();
        index.insert(v.clone(), idx);
        if let ParentSlot::Inside(p) = slot {
            children[p].push(idx);
        }
        let kids = tree.children(&v)?;
        interior_mask.push(kids.is_empty() || lvl < depth);
        members.push(v);
        level.push(lvl);
        parent.push(slot);
        children.push(Vec::new());
        if lvl < depth {
            queue.extend(kids.into_iter().map(|c| (c, ParentSlot::Inside(idx), lvl + 1)));
        }
    }
    Ok(TruncationWindow {
        base: base.clone(),
        depth,
        members,
        level,
        parent,
        children,
        interior_mask,
        index,
    })
}

/// A window covering a whole finite tree.
pub fn full_window(tree: &DirectedTree) -> Result<TruncationWindow> {
    let root = tree
        .root()
        .ok_or_else(|| Error::Invalid("full_window needs a finite tree".into()))?;
    let height = tree.finite_height().unwrap_or(0);
    truncate(tree, &root, height)
}

/// Partition of a window into generations.
#[derive(Debug, Clone, Serialize)]
pub struct Generations {
    /// Classes as lists of member indices, ordered by first appearance.
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
}

/// Generations of the window members.
///
/// Every member descends from the window top, so two members share a k-fold
/// ancestor exactly when they sit at the same level. A parentless vertex is
/// related only to itself.
pub fn generations(window: &TruncationWindow) -> Generations {
    let mut by_level: Vec<Vec<usize>> = Vec::new();
    let mut class_of = vec![0; window.len()];
    for (i, &lvl) in window.level.iter().enumerate() {
        if by_level.len() <= lvl {
            by_level.resize(lvl + 1, Vec::new());
        }
        by_level[lvl].push(i);
    }
    let classes: Vec<Vec<usize>> = by_level.into_iter().filter(|c| !c.is_empty()).collect();
    for (ci, class) in classes.iter().enumerate() {
        for &m in class {
            class_of[m] = ci;
        }
    }
    Generations { classes, class_of }
}

/// Smallest `k >= 1` with `par^k(u) = par^k(v)`, both defined.
pub fn meeting_height(tree: &DirectedTree, u: &VertexId, v: &VertexId, max_k: usize) -> Result<Option<usize>> {
    let (mut a, mut b) = (u.clone(), v.clone());
    for k in 1..=max_k {
        match (tree.parent(&a)?, tree.parent(&b)?) {
            (Some(pa), Some(pb)) => {
                if pa == pb {
                    return Ok(Some(k));
                }
                a = pa;
                b = pb;
            }
            _ => return Ok(None),
        }
    }
    Ok(None)
}

/// Combinatorial summary of a tree.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralProfile {
    pub rooted: bool,
    pub leaves: Vec<VertexId>,
    pub branching: Vec<VertexId>,
    pub is_z_minus_isomorphic: bool,
    pub is_leafless: bool,
    pub finite_depth: Option<usize>,
    /// `true` when the profile was computed on a window of a generated tree
    /// rather than on the whole tree.
    pub verified_on_window: bool,
}

/// Leaves, branching vertices and root/leaf structure.
///
/// Generated trees need a window; the result is then only as good as the
/// window (flagged by `verified_on_window`).
pub fn structural_profile(tree: &DirectedTree, window: Option<&TruncationWindow>) -> Result<StructuralProfile> {
    let (vertices, on_window) = match (tree.vertices(), window) {
        (Some(all), _) => (all, false),
        (None, Some(w)) => (w.members.clone(), true),
        (None, None) => {
            return Err(Error::Invalid(
                "a generated tree needs a window for its structural profile".into(),
            ))
        }
    };
    let mut rooted = false;
    let mut leaves = Vec::new();
    let mut branching = Vec::new();
    let mut at_most_one_child = true;
    for v in &vertices {
        if tree.parent(v)?.is_none() {
            rooted = true;
        }
        let kids = tree.children(v)?.len();
        if kids == 0 {
            leaves.push(v.clone());
        }
        if kids >= 2 {
            branching.push(v.clone());
        }
        if kids > 1 {
            at_most_one_child = false;
        }
    }
    let finite_depth = if !rooted {
        None
    } else if let Some(h) = tree.finite_height() {
        Some(h)
    } else {
        window
            .filter(|w| w.top_is_root() && w.is_complete())
            .and_then(|w| w.level.iter().copied().max())
    };
    Ok(StructuralProfile {
        rooted,
        is_z_minus_isomorphic: !rooted && leaves.len() == 1 && at_most_one_child,
        is_leafless: leaves.is_empty(),
        leaves,
        branching,
        finite_depth,
        verified_on_window: on_window,
    })
}

/// One parsed `edge` directive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecEdge {
    pub parent: String,
    pub child: String,
    pub re: f64,
    pub im: f64,
}

/// Contents of a tree-spec text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<SpecEdge>,
    pub root: Option<String>,
}

impl TreeSpec {
    /// Parses the line-oriented format:
    /// `vertex <id>`, `edge <parent> <child> <re> [<im>]`, `root <id>`, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = TreeSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let number = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(format!("`{s}` is not a finite number")))
            };
            match tokens.as_slice() {
                [] => {}
                ["vertex", id] => spec.vertices.push((*id).to_owned()),
                ["edge", p, c, re] => spec.edges.push(SpecEdge {
                    parent: (*p).to_owned(),
                    child: (*c).to_owned(),
                    re: number(re)?,
                    im: 0.0,
                }),
                ["edge", p, c, re, im] => spec.edges.push(SpecEdge {
                    parent: (*p).to_owned(),
                    child: (*c).to_owned(),
                    re: number(re)?,
                    im: number(im)?,
                }),
                ["root", id] => {
                    if spec.root.is_some() {
                        return Err(err("duplicate root directive".into()));
                    }
                    spec.root = Some((*id).to_owned());
                }
                [directive, ..] => {
                    return Err(err(format!("malformed `{directive}` directive")));
                }
            }
        }
        Ok(spec)
    }

    /// Validates the spec into a tree.
    pub fn build_tree(&self) -> Result<DirectedTree> {
        let edges: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|e| (e.parent.as_str(), e.child.as_str()))
            .collect();
        let tree = build_tree(&self.vertices, &edges)?;
        if let (Some(declared), Some(detected)) = (&self.root, tree.root()) {
            if declared.as_str() != detected.as_str() {
                return Err(Error::RootMismatch {
                    declared: declared.clone(),
                    detected: detected.to_string(),
                });
            }
        }
        Ok(tree)
    }

    /// Renders the spec in the text format accepted by [`TreeSpec::parse`].
    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        for v in &self.vertices {
            out.push_str(&format!("vertex {v}\n"));
        }
        if let Some(r) = &self.root {
            out.push_str(&format!("root {r}\n"));
        }
        for e in &self.edges {
            if e.im == 0.0 {
                out.push_str(&format!("edge {} {} {}\n", e.parent, e.child, e.re));
            } else {
                out.push_str(&format!("edge {} {} {} {}\n", e.parent, e.child, e.re, e.im));
            }
        }
        out
    }
}

/// Set of vertex ids, for quick membership checks in tests and reports.
pub fn id_set<'a>(ids: impl IntoIterator<Item = &'a VertexId>) -> HashSet<&'a str> {
    ids.into_iter().map(|v| v.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> DirectedTree {
        build_tree(&["0", "(1,1)", "(1,2)"], &[("0", "(1,1)"), ("0", "(1,2)")]).unwrap()
    }

    fn path(n: usize) -> DirectedTree {
        let vs: Vec<String> = (0..=n).map(|k| k.to_string()).collect();
        let es: Vec<(String, String)> = (0..n).map(|k| (k.to_string(), (k + 1).to_string())).collect();
        build_tree(&vs, &es).unwrap()
    }

    #[test]
    fn two_child_star() {
        let t = star();
        assert_eq!(t.root(), Some(VertexId::from("0")));
        let kids = t.children(&"0".into()).unwrap();
        assert_eq!(kids, vec![VertexId::from("(1,1)"), VertexId::from("(1,2)")]);
    }

    #[test]
    fn build_errors() {
        let err = build_tree(&["a", "b"], &[("b", "a"), ("a", "b")]).unwrap_err();
        assert!(matches!(err, Error::CycleDetected(_)), "{err:?}");
        let err = build_tree(&["a", "b", "c"], &[("a", "b")]).unwrap_err();
        assert!(matches!(err, Error::Disconnected(..)));
        let err = build_tree(&["a", "b"], &[("a", "x")]).unwrap_err();
        assert_eq!(err, Error::UnknownVertex("x".into()));
        let err = build_tree(&["a", "b", "c"], &[("a", "c"), ("b", "c")]).unwrap_err();
        assert_eq!(err, Error::DuplicateParent("c".into()));
        let err = build_tree(&["a"], &[("a", "a")]).unwrap_err();
        assert!(matches!(err, Error::CycleDetected(_)));
    }

    #[test]
    fn ancestors_on_path() {
        let t = path(3);
        assert_eq!(ancestor(&t, &"3".into(), 0).unwrap(), Some("3".into()));
        assert_eq!(ancestor(&t, &"3".into(), 2).unwrap(), Some("1".into()));
        assert_eq!(ancestor(&t, &"1".into(), 2).unwrap(), None);
        assert!(ancestor(&t, &"9".into(), 1).is_err());
        let s = star();
        assert_eq!(ancestor(&s, &"(1,1)".into(), 2).unwrap(), None);
    }

    #[test]
    fn truncate_path_and_star() {
        let t = path(10);
        let w = truncate(&t, &"0".into(), 3).unwrap();
        let ids: Vec<&str> = w.members.iter().map(|v| v.as_str()).collect();
        assert_eq!(ids, ["0", "1", "2", "3"]);
        assert_eq!(w.interior_mask, [true, true, true, false]);
        assert!(w.top_is_root());

        let w = truncate(&star(), &"0".into(), 1).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.interior_mask.iter().all(|&b| b));
    }

    #[test]
    fn singleton_tree_generation() {
        let t = build_tree(&["x"], &[] as &[(&str, &str)]).unwrap();
        let w = full_window(&t).unwrap();
        let g = generations(&w);
        assert_eq!(g.classes, vec![vec![0]]);
        assert_eq!(meeting_height(&t, &"x".into(), &"x".into(), 4).unwrap(), None);
    }

    #[test]
    fn profile_of_path() {
        let t = path(3);
        let p = structural_profile(&t, None).unwrap();
        assert!(p.rooted);
        assert_eq!(p.leaves, vec![VertexId::from("3")]);
        assert!(p.branching.is_empty());
        assert_eq!(p.finite_depth, Some(3));
        assert!(!p.is_z_minus_isomorphic);
    }

    #[test]
    fn spec_roundtrip_and_errors() {
        let text = "# star\nvertex 0\nvertex a\n  vertex   b \nedge 0 a 1\nedge 0 b 0.5 -2 # weight\nroot 0\n";
        let spec = TreeSpec::parse(text).unwrap();
        assert_eq!(spec.edges[1].im, -2.0);
        let again = TreeSpec::parse(&spec.render(&[])).unwrap();
        assert_eq!(spec, again);
        spec.build_tree().unwrap();

        let bad = TreeSpec::parse("vertex a\nedge a\n").unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 2, .. }));
        let bad = TreeSpec::parse("edge a b x\n").unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 1, .. }));
        let mismatch = TreeSpec::parse("vertex a\nvertex b\nedge a b 1\nroot b\n")
            .unwrap()
            .build_tree()
            .unwrap_err();
        assert!(matches!(mismatch, Error::RootMismatch { .. }));
    }
}
