//! Discrete measure-space model of a weighted composition operator and the
//! weighted shifts on directed trees that feed it.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tree::{
    build_tree, truncate, DirectedTree, ParentSlot, SpecEdge, TreeSpec, TruncationWindow, VertexId,
};

/// Vertex weights of a weighted shift.
#[derive(Clone)]
pub enum Weights {
    /// Explicit values with a fallback for unlisted vertices.
    Table {
        values: HashMap<VertexId, Complex64>,
        default: Complex64,
    },
    /// Weights computed from the vertex id.
    Func(Arc<dyn Fn(&VertexId) -> Complex64 + Send + Sync>),
}

impl fmt::Debug for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weights::Table { values, default } => f
                .debug_struct("Table")
                .field("entries", &values.len())
                .field("default", default)
                .finish(),
            Weights::Func(_) => f.write_str("Func(..)"),
        }
    }
}

impl Weights {
    pub fn uniform(value: f64) -> Self {
        Weights::Table {
            values: HashMap::new(),
            default: Complex64::new(value, 0.0),
        }
    }

    pub fn table(values: HashMap<VertexId, Complex64>) -> Self {
        Weights::Table {
            values,
            default: Complex64::new(0.0, 0.0),
        }
    }

    pub fn func(f: impl Fn(&VertexId) -> Complex64 + Send + Sync + 'static) -> Self {
        Weights::Func(Arc::new(f))
    }

    pub fn get(&self, v: &VertexId) -> Complex64 {
        match self {
            Weights::Table { values, default } => values.get(v).copied().unwrap_or(*default),
            Weights::Func(f) => f(v),
        }
    }
}

/// A weighted shift `S_λ` on a directed tree: `(S_λ f)(v) = λ_v f(par v)`.
#[derive(Clone, Debug)]
pub struct WeightedShift {
    pub tree: DirectedTree,
    pub weights: Weights,
}

impl WeightedShift {
    pub fn new(tree: DirectedTree, weights: Weights) -> Self {
        WeightedShift { tree, weights }
    }

    /// `λ_v`, with `0` at a root (which carries no weight).
    pub fn lambda(&self, v: &VertexId) -> Result<Complex64> {
        Ok(match self.tree.parent(v)? {
            Some(_) => self.weights.get(v),
            None => Complex64::new(0.0, 0.0),
        })
    }

    /// Builds a shift from a parsed tree-spec; edge weights attach to children.
    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        let tree = spec.build_tree()?;
        let values = spec
            .edges
            .iter()
            .map(|e| (VertexId::from(e.child.as_str()), Complex64::new(e.re, e.im)))
            .collect();
        Ok(WeightedShift::new(tree, Weights::table(values)))
    }

    /// The part of the shift inside `window`, as a tree-spec.
    pub fn to_spec(&self, window: &TruncationWindow) -> Result<TreeSpec> {
        let mut spec = TreeSpec {
            vertices: window.members.iter().map(|v| v.to_string()).collect(),
            ..TreeSpec::default()
        };
        for (i, v) in window.members.iter().enumerate() {
            if let ParentSlot::Inside(p) = window.parent[i] {
                let l = self.lambda(v)?;
                spec.edges.push(SpecEdge {
                    parent: window.members[p].to_string(),
                    child: v.to_string(),
                    re: l.re,
                    im: l.im,
                });
            }
        }
        spec.root = Some(window.members[0].to_string());
        Ok(spec)
    }

    pub fn window(&self, base: &VertexId, depth: usize) -> Result<TruncationWindow> {
        truncate(&self.tree, base, depth)
    }

    /// `sup_v Σ_{u ∈ Chi(v)} |λ_u|²` over the window members.
    ///
    /// This is `‖S_λ‖²` restricted to the window, so a finite value certifies
    /// boundedness there.
    pub fn bound_certificate(&self, window: &TruncationWindow) -> Result<f64> {
        let mut sup = 0.0f64;
        for v in &window.members {
            let mut s = 0.0;
            for c in self.tree.children(v)? {
                s += self.lambda(&c)?.norm_sqr();
            }
            sup = sup.max(s);
        }
        Ok(sup)
    }
}

/// `C_{φ,w} f = w · (f ∘ φ)` on `ℓ²(μ)` over a finite point set.
///
/// On a truncation the image of a point may leave the set; `phi` is then
/// `None`, and `fiber_complete[x]` records whether every pre-image of `x` is
/// present.
#[derive(Debug, Clone)]
pub struct DiscreteWco {
    labels: Vec<VertexId>,
    mass: Vec<f64>,
    phi: Vec<Option<usize>>,
    weight: Vec<Complex64>,
    preimages: Vec<Vec<usize>>,
    fiber_complete: Vec<bool>,
    extension_point: Option<usize>,
}

impl DiscreteWco {
    /// A wco on a finite set with a total self-map.
    pub fn finite(labels: Vec<VertexId>, mass: Vec<f64>, phi: Vec<usize>, weight: Vec<Complex64>) -> Result<Self> {
        let n = labels.len();
        Self::partial(labels, mass, phi.into_iter().map(Some).collect(), weight, vec![true; n])
    }

    /// A wco on part of a larger space: `phi[x] = None` when the image is not
    /// in the set, and `fiber_complete[x] = false` when some pre-image is not.
    pub fn partial(
        labels: Vec<VertexId>,
        mass: Vec<f64>,
        phi: Vec<Option<usize>>,
        weight: Vec<Complex64>,
        fiber_complete: Vec<bool>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyTree);
        }
        if mass.len() != n || phi.len() != n || weight.len() != n || fiber_complete.len() != n {
            return Err(Error::Invalid("point data have mismatched lengths".into()));
        }
        if let Some(i) = mass.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Invalid(format!("mass at `{}` must be positive", labels[i])));
        }
        let mut preimages = vec![Vec::new(); n];
        for (y, img) in phi.iter().enumerate() {
            if let Some(x) = *img {
                if x >= n {
                    return Err(Error::Invalid(format!("image of `{}` is out of range", labels[y])));
                }
                preimages[x].push(y);
            }
        }
        Ok(DiscreteWco {
            labels,
            mass,
            phi,
            weight,
            preimages,
            fiber_complete,
            extension_point: None,
        })
    }

    /// The counting-measure wco of a weighted shift on a window.
    ///
    /// `φ` extends the parent map with `φ(root) = root`; since `w(root) = 0`
    /// that choice never changes a computed quantity.
    pub fn from_weighted_shift(shift: &WeightedShift, window: &TruncationWindow) -> Result<Self> {
        Self::from_weighted_shift_with_extension(shift, window, None)
    }

    /// As [`DiscreteWco::from_weighted_shift`], sending the root to
    /// `root_image` (a member index) instead of to itself.
    pub fn from_weighted_shift_with_extension(
        shift: &WeightedShift,
        window: &TruncationWindow,
        root_image: Option<usize>,
    ) -> Result<Self> {
        let n = window.len();
        let mut phi = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        let mut extension = None;
        for (i, v) in window.members.iter().enumerate() {
            match window.parent[i] {
                ParentSlot::Root => {
                    extension = Some(i);
                    phi.push(Some(root_image.unwrap_or(i)));
                    weight.push(Complex64::new(0.0, 0.0));
                }
                ParentSlot::Inside(p) => {
                    phi.push(Some(p));
                    weight.push(shift.lambda(v)?);
                }
                ParentSlot::Outside => {
                    phi.push(None);
                    weight.push(shift.lambda(v)?);
                }
            }
        }
        let mut wco = Self::partial(
            window.members.clone(),
            vec![1.0; n],
            phi,
            weight,
            window.interior_mask.clone(),
        )?;
        wco.extension_point = extension;
        Ok(wco)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[VertexId] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &VertexId {
        &self.labels[x]
    }

    pub fn index_of(&self, v: &VertexId) -> Option<usize> {
        self.labels.iter().position(|l| l == v)
    }

    pub fn mass(&self, x: usize) -> f64 {
        self.mass[x]
    }

    pub fn weight(&self, x: usize) -> Complex64 {
        self.weight[x]
    }

    pub fn phi(&self, x: usize) -> Option<usize> {
        self.phi[x]
    }

    pub fn preimages(&self, x: usize) -> &[usize] {
        &self.preimages[x]
    }

    pub fn fiber_complete(&self, x: usize) -> bool {
        self.fiber_complete[x]
    }

    /// The point whose φ-image is an arbitrary extension (a tree root).
    pub fn extension_point(&self) -> Option<usize> {
        self.extension_point
    }

    /// `true` iff the image of no point leaves the set and no fiber is cut.
    pub fn is_closed(&self) -> bool {
        self.phi.iter().all(Option::is_some) && self.fiber_complete.iter().all(|&b| b)
    }

    /// `w ≡ 1`, ignoring the extension point of a tree root.
    pub fn is_composition(&self) -> bool {
        self.weight
            .iter()
            .enumerate()
            .all(|(x, w)| Some(x) == self.extension_point || *w == Complex64::new(1.0, 0.0))
    }

    /// `φⁿ(x)`, if it stays inside the set.
    pub fn phi_n(&self, x: usize, n: usize) -> Option<usize> {
        let mut cur = x;
        for _ in 0..n {
            cur = self.phi[cur]?;
        }
        Some(cur)
    }

    /// `wₙ(x) = ∏_{j<n} w(φʲ(x))`.
    ///
    /// A zero factor settles the product even if later images are unknown.
    pub fn w_n(&self, x: usize, n: usize) -> Option<Complex64> {
        let mut prod = Complex64::new(1.0, 0.0);
        let mut cur = x;
        for j in 0..n {
            let w = self.weight[cur];
            if w == Complex64::new(0.0, 0.0) {
                return Some(w);
            }
            prod *= w;
            if j + 1 < n {
                cur = self.phi[cur]?;
            }
        }
        Some(prod)
    }

    /// Points `y` with `φⁿ(y) = x` and `wₙ(y) ≠ 0`, paired with `wₙ(y)`.
    ///
    /// `None` when the fiber cannot be enumerated inside the set.
    pub fn weighted_fiber(&self, x: usize, n: usize) -> Option<Vec<(usize, Complex64)>> {
        let mut layer = vec![(x, Complex64::new(1.0, 0.0))];
        for _ in 0..n {
            let mut next = Vec::new();
            for &(z, prod) in &layer {
                if !self.fiber_complete[z] {
                    return None;
                }
                for &y in &self.preimages[z] {
                    let w = self.weight[y];
                    if w != Complex64::new(0.0, 0.0) {
                        next.push((y, prod * w));
                    }
                }
            }
            layer = next;
        }
        Some(layer)
    }

    /// Matrix entry `(y, x)` of `C_{φ,w}`: nonzero only when `φ(y) = x`.
    pub fn matrix_entry(&self, y: usize) -> Option<(usize, Complex64)> {
        self.phi[y].map(|x| (x, self.weight[y] * (self.mass[y] / self.mass[x]).sqrt()))
    }
}

/// `wₙ` at every point (`None` where unknown).
///
/// Fails with `WindowTooShallow` when no point is known.
pub fn iterate_weights(wco: &DiscreteWco, n: usize) -> Result<Vec<Option<Complex64>>> {
    let out: Vec<_> = (0..wco.len()).map(|x| wco.w_n(x, n)).collect();
    if out.iter().all(Option::is_none) {
        return Err(Error::WindowTooShallow(format!("w_{n} is unknown at every point")));
    }
    Ok(out)
}

/// Cuts a shift at every edge ending in a zero weight.
///
/// Works on the part of the shift inside `window`; each component is returned
/// as a finite shift rooted at its top vertex, with the original weights.
pub fn decompose_at_zero_weights(shift: &WeightedShift, window: &TruncationWindow) -> Result<Vec<WeightedShift>> {
    let n = window.len();
    let mut comp = vec![usize::MAX; n];
    let mut tops = Vec::new();
    // BFS order guarantees parents are assigned before children.
    for i in 0..n {
        let cut = match window.parent[i] {
            ParentSlot::Inside(_) => shift.lambda(&window.members[i])?.norm_sqr() == 0.0,
            _ => true,
        };
        if cut {
            comp[i] = tops.len();
            tops.push(i);
        } else if let ParentSlot::Inside(p) = window.parent[i] {
            comp[i] = comp[p];
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); tops.len()];
    for i in 0..n {
        groups[comp[i]].push(i);
    }
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let vertices: Vec<&str> = group.iter().map(|&i| window.members[i].as_str()).collect();
        let mut edges = Vec::new();
        let mut values = HashMap::new();
        for &i in &group[1..] {
            if let ParentSlot::Inside(p) = window.parent[i] {
                let v = &window.members[i];
                edges.push((window.members[p].as_str(), v.as_str()));
                values.insert(v.clone(), shift.lambda(v)?);
            }
        }
        let tree = build_tree(&vertices, &edges)?;
        out.push(WeightedShift::new(tree, Weights::table(values)));
    }
    Ok(out)
}
