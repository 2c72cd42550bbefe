//! Type classification (I–IV) of centered instances.
//!
//! Verdicts combine the structure of the tree, the support of the
//! Radon–Nikodym derivatives, decay ratios and range-intersection ranks on
//! the window. Each verdict records its window and whether it survives a
//! window two levels deeper.

use std::fmt;

use num_complex::Complex64;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::builtins::ShiftInstance;
use crate::centered::generation_criterion;
use crate::continuous::{halfline_discretization, phi_is_invertible, support_is_full, ContinuousConfig};
use crate::discrete::{DiscreteWco, WeightedShift};
use crate::error::{Error, Result};
use crate::oracle::{materialize, range_intersection_dim, range_membership_residual, DEFAULT_RANK_TOL, SPECTRAL_LIMIT};
use crate::transfer::radon_nikodym;
use crate::tree::{ancestor, structural_profile, TruncationWindow, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeLabel {
    I,
    II,
    III,
    IV,
    IPlusIV,
    IIOrIIIFamily,
    Undetermined,
}

impl TypeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeLabel::I => "I",
            TypeLabel::II => "II",
            TypeLabel::III => "III",
            TypeLabel::IV => "IV",
            TypeLabel::IPlusIV => "I_plus_IV",
            TypeLabel::IIOrIIIFamily => "II_or_III_family",
            TypeLabel::Undetermined => "UNDETERMINED",
        }
    }
}

impl fmt::Display for TypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for TypeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub criterion: String,
    pub data: Value,
}

fn evidence(criterion: &str, data: Value) -> Evidence {
    Evidence {
        criterion: criterion.into(),
        data,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowProvenance {
    pub base: String,
    pub depth: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeVerdict {
    pub label: TypeLabel,
    pub evidence: Vec<Evidence>,
    pub window: Option<WindowProvenance>,
    /// Same label on a window two levels deeper; `None` when not rechecked.
    pub stable: Option<bool>,
}

/// Support of the Radon–Nikodym derivatives up to some order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "tag", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SupportSplit {
    IOrIv,
    IiOrIii,
    Mixed {
        positive: Vec<VertexId>,
        vanishing: Vec<VertexId>,
    },
    Undetermined,
}

/// Points where every `hₙ`, `n ≤ n_max`, is known and positive against points
/// where some known `hₙ` vanishes. Points with neither property are ignored.
pub fn support_split(wco: &DiscreteWco, n_max: usize) -> SupportSplit {
    let hs: Vec<Vec<Option<f64>>> = (1..=n_max.max(1))
        .map(|n| radon_nikodym(wco, n).map(|h| h.values).unwrap_or_else(|_| vec![None; wco.len()]))
        .collect();
    let (mut positive, mut vanishing) = (Vec::new(), Vec::new());
    for x in 0..wco.len() {
        let vals: Vec<Option<f64>> = hs.iter().map(|h| h[x]).collect();
        if vals.contains(&Some(0.0)) {
            vanishing.push(wco.label(x).clone());
        } else if vals.iter().all(|v| v.is_some_and(|v| v > 0.0)) {
            positive.push(wco.label(x).clone());
        }
    }
    match (positive.is_empty(), vanishing.is_empty()) {
        (true, true) => SupportSplit::Undetermined,
        (false, true) => SupportSplit::IOrIv,
        (true, false) => SupportSplit::IiOrIii,
        (false, false) => SupportSplit::Mixed { positive, vanishing },
    }
}

/// Nonzero weights off the extension point, `h₁ > 0` wherever known and
/// singleton weighted fibers, so that `E₁` is the identity.
pub fn type_iv_test(wco: &DiscreteWco) -> bool {
    let zero = Complex64::new(0.0, 0.0);
    let Ok(h1) = radon_nikodym(wco, 1) else {
        return false;
    };
    (0..wco.len()).all(|x| {
        let weight_ok = Some(x) == wco.extension_point() || wco.weight(x) != zero;
        let h_ok = h1.values[x].is_none_or(|h| h > 0.0);
        let single = wco.preimages(x).iter().filter(|&&y| wco.weight(y) != zero).count() <= 1;
        weight_ok && h_ok && single
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub vertex: VertexId,
    /// `rₙ` for `n = 1, 2, …`.
    pub ratios: Vec<f64>,
    /// Slope of `log rₙ` over the tail of the sequence.
    pub slope: f64,
    /// Fitted per-step ratio `exp(slope)`.
    pub rho: f64,
    pub decaying: bool,
}

pub const DECAY_SLOPE: f64 = -0.01;

/// `rₙ = |λ_{parⁿ(v)|v}|² / ‖Sⁿ e_{parⁿ(v)}‖²` for `n ≤ n_max`, with a
/// log-linear fit over the last `max(2, ⌈n_max/2⌉)` ratios.
pub fn type_i_decay(shift: &WeightedShift, v: &VertexId, n_max: usize) -> Result<DecayReport> {
    let tree = &shift.tree;
    let mut ratios = Vec::with_capacity(n_max);
    let mut path = 1.0;
    let mut cur = v.clone();
    for n in 1..=n_max {
        path *= shift.lambda(&cur)?.norm_sqr();
        let Some(u) = ancestor(tree, v, n)? else {
            return Err(Error::UndefinedAncestor(v.to_string()));
        };
        // ‖Sⁿ e_u‖² by expanding n generations of children.
        let mut layer = vec![(u.clone(), 1.0)];
        for _ in 0..n {
            let mut next = Vec::new();
            for (x, m) in &layer {
                for c in tree.children(x)? {
                    let l = shift.lambda(&c)?.norm_sqr();
                    if l > 0.0 {
                        next.push((c, m * l));
                    }
                }
            }
            layer = next;
        }
        let norm: f64 = layer.iter().map(|(_, m)| m).sum();
        if path == 0.0 || norm == 0.0 {
            return Err(Error::ZeroWeights);
        }
        ratios.push(path / norm);
        cur = u;
    }
    let tail = n_max.div_ceil(2).max(2).min(ratios.len());
    let slope = log_slope(&ratios[ratios.len() - tail..]);
    Ok(DecayReport {
        vertex: v.clone(),
        slope,
        rho: slope.exp(),
        decaying: slope < DECAY_SLOPE,
        ratios,
    })
}

/// Least-squares slope of `log r` against the index.
fn log_slope(r: &[f64]) -> f64 {
    if r.len() < 2 {
        return 0.0;
    }
    let n = r.len() as f64;
    let ys: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaAry {
    pub kappa: usize,
    pub sup: f64,
    pub inf: f64,
    pub holds: bool,
}

/// `sup|λ| < √κ·inf|λ|` over the non-root window vertices, which must all
/// have at least `κ` children.
pub fn kappa_ary_test(shift: &WeightedShift, window: &TruncationWindow, kappa: usize) -> Result<KappaAry> {
    let (mut sup, mut inf) = (0.0f64, f64::INFINITY);
    for v in &window.members {
        let found = shift.tree.children(v)?.len();
        if found < kappa {
            return Err(Error::ValencyTooLow {
                vertex: v.to_string(),
                found,
                kappa,
            });
        }
        if shift.tree.parent(v)?.is_some() {
            let l = shift.lambda(v)?.norm();
            sup = sup.max(l);
            inf = inf.min(l);
        }
    }
    Ok(KappaAry {
        kappa,
        sup,
        inf,
        holds: sup < (kappa as f64).sqrt() * inf,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub n_max: usize,
    pub tol: f64,
    pub rank_tol: f64,
    /// Reclassify on a window two levels deeper.
    pub stability: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            n_max: 3,
            tol: 1e-9,
            rank_tol: DEFAULT_RANK_TOL,
            stability: true,
        }
    }
}

/// Classifies a centered weighted shift on its window.
pub fn structural_type(inst: &ShiftInstance, opts: &ClassifyOptions) -> Result<TypeVerdict> {
    let mut verdict = classify_once(inst, opts)?;
    if opts.stability {
        let deeper = inst.with_depth(inst.depth + 2)?;
        let again = classify_once(&deeper, opts);
        verdict.stable = Some(again.is_ok_and(|v| v.label == verdict.label));
    }
    Ok(verdict)
}

fn classify_once(inst: &ShiftInstance, opts: &ClassifyOptions) -> Result<TypeVerdict> {
    let shift = &inst.shift;
    let window = inst.window()?;
    let generation = generation_criterion(shift, &window, opts.tol)?;
    if generation.failed() {
        let w = generation.witness.expect("failures carry a witness");
        return Err(Error::NotCentered(format!(
            "children of `{}` and `{}` carry {} and {}",
            w.point,
            w.other.map(|o| o.to_string()).unwrap_or_default(),
            w.lhs,
            w.rhs
        )));
    }
    for v in &window.members {
        if shift.tree.parent(v)?.is_some() && shift.lambda(v)?.norm_sqr() == 0.0 {
            return Err(Error::ZeroWeights);
        }
    }
    let profile = structural_profile(&shift.tree, Some(&window))?;
    let mut ev = vec![evidence(
        "structure",
        json!({
            "rooted": profile.rooted,
            "leaves": profile.leaves.len(),
            "branching": profile.branching.len(),
            "z_minus_isomorphic": profile.is_z_minus_isomorphic,
            "on_window": profile.verified_on_window,
        }),
    )];
    let wco = DiscreteWco::from_weighted_shift(shift, &window)?;
    let provenance = Some(WindowProvenance {
        base: inst.base.to_string(),
        depth: inst.depth,
        size: window.len(),
    });
    let finish = |label, evidence| TypeVerdict {
        label,
        evidence,
        window: provenance.clone(),
        stable: None,
    };

    if profile.rooted {
        if profile.is_leafless {
            return Ok(finish(TypeLabel::I, ev));
        }
        let depths = leaf_depths(shift, &profile.leaves)?;
        let uniform = depths.windows(2).all(|d| d[0] == d[1]);
        ev.push(evidence(
            "leaf_depth",
            json!({"uniform": uniform, "finite_depth": profile.finite_depth, "depths": depths}),
        ));
        let label = if uniform { TypeLabel::III } else { TypeLabel::Undetermined };
        return Ok(finish(label, ev));
    }
    if profile.is_z_minus_isomorphic {
        if let Some(r) = range_evidence(&wco, window.depth.saturating_sub(1), opts.rank_tol) {
            ev.push(r);
        }
        return Ok(finish(TypeLabel::II, ev));
    }
    if !profile.is_leafless {
        return Ok(finish(TypeLabel::IIOrIIIFamily, ev));
    }

    // Rootless and leafless: an orthogonal sum of type I and type IV parts.
    let bottom = (0..window.len())
        .find(|&i| window.level[i] == window.depth)
        .ok_or_else(|| Error::WindowTooShallow(window.base.to_string()))?;
    let decay = type_i_decay(shift, &window.members[bottom], window.depth)?;
    let decaying = decay.decaying;
    ev.push(evidence("decay", serde_json::to_value(&decay).expect("serializable")));
    let min_valency = window
        .members
        .iter()
        .map(|v| shift.tree.children(v).map(|c| c.len()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .unwrap_or(0);
    let kappa_holds = if min_valency >= 2 {
        let k = kappa_ary_test(shift, &window, min_valency)?;
        let holds = k.holds;
        ev.push(evidence("kappa_ary", serde_json::to_value(&k).expect("serializable")));
        holds
    } else {
        false
    };
    if decaying || kappa_holds {
        if window.len() <= SPECTRAL_LIMIT {
            if let Some(r) = range_evidence(&wco, opts.n_max, opts.rank_tol) {
                ev.push(r);
            }
        }
        return Ok(finish(TypeLabel::I, ev));
    }
    if profile.branching.is_empty() {
        ev.push(evidence("no_branching", json!({"bilateral": true})));
        return Ok(finish(TypeLabel::IV, ev));
    }
    let op = materialize(&wco)?;
    let order = op.valid_order.min(window.depth);
    let ri = range_intersection_dim(&op, order, opts.rank_tol)?;
    let iv_dimension = ri.ran_dim;
    ev.push(evidence("range_intersection", serde_json::to_value(&ri).expect("serializable")));
    if let Some(f) = inst.iv_witness {
        let fv: Vec<Complex64> = wco.labels().iter().map(|v| Complex64::new(f(v), 0.0)).collect();
        let residual = (1..=order)
            .map(|n| range_membership_residual(&op, &fv, n))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        ev.push(evidence("iv_witness", json!({"orders": order, "residual": residual})));
    }
    ev.push(evidence("iv_dimension", json!(iv_dimension)));
    let label = if iv_dimension >= 1 { TypeLabel::IPlusIV } else { TypeLabel::I };
    Ok(finish(label, ev))
}

fn leaf_depths(shift: &WeightedShift, leaves: &[VertexId]) -> Result<Vec<usize>> {
    leaves
        .iter()
        .map(|l| {
            let mut d = 0;
            let mut cur = l.clone();
            while let Some(p) = shift.tree.parent(&cur)? {
                cur = p;
                d += 1;
            }
            Ok(d)
        })
        .collect()
}

fn range_evidence(wco: &DiscreteWco, n: usize, rank_tol: f64) -> Option<Evidence> {
    let op = materialize(wco).ok()?;
    let n = n.min(op.valid_order).max(1);
    let ri = range_intersection_dim(&op, n, rank_tol).ok()?;
    Some(evidence(
        "range_intersection",
        json!({
            "n": n,
            "interior_size": ri.interior_size,
            "ran_dim": ri.ran_dim,
            "adjoint_dim": ri.adjoint_dim,
            "pattern": ri.label(),
        }),
    ))
}

/// Classifies a continuous builtin.
pub fn continuous_type(config: &ContinuousConfig, opts: &ClassifyOptions) -> Result<TypeVerdict> {
    match config {
        ContinuousConfig::HalfLine => {
            let (wco, n) = halfline_discretization(opts.n_max)?;
            let op = materialize(&wco)?;
            let ri = range_intersection_dim(&op, n.min(op.valid_order), opts.rank_tol)?;
            let label = match ri.label() {
                "II" => TypeLabel::II,
                "I" => TypeLabel::I,
                _ => TypeLabel::Undetermined,
            };
            Ok(TypeVerdict {
                label,
                evidence: vec![evidence(
                    "discretized_range_intersection",
                    serde_json::to_value(&ri).expect("serializable"),
                )],
                window: None,
                stable: None,
            })
        }
        ContinuousConfig::Linear { density, model } => {
            let samples = crate::continuous::sample_points(model.kappa, 4.0, 8);
            let full = support_is_full(density, model, opts.n_max, &samples);
            let invertible = phi_is_invertible(model);
            let label = match (full, invertible) {
                (true, true) => TypeLabel::IV,
                _ => TypeLabel::Undetermined,
            };
            Ok(TypeVerdict {
                label,
                evidence: vec![
                    evidence("support", json!({"split": if full { "I_or_IV" } else { "UNDETERMINED" }})),
                    evidence("identity_expectation", json!({"phi_invertible": invertible})),
                ],
                window: None,
                stable: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::shift_builtin;
    use crate::discrete::Weights;
    use crate::tree::full_window;

    fn opts() -> ClassifyOptions {
        ClassifyOptions::default()
    }

    #[test]
    fn support_split_examples() {
        let (_, wco) = shift_builtin("binary", 6).unwrap().wco().unwrap();
        assert_eq!(support_split(&wco, 3), SupportSplit::IOrIv);
        let (_, wco) = shift_builtin("rooted_full_binary_d3", 3).unwrap().wco().unwrap();
        assert_eq!(support_split(&wco, 4), SupportSplit::IiOrIii);
        let inst = shift_builtin("binary", 4).unwrap();
        let zero = WeightedShift::new(inst.shift.tree.clone(), Weights::uniform(0.0));
        let wco = DiscreteWco::from_weighted_shift(&zero, &inst.window().unwrap()).unwrap();
        assert_eq!(support_split(&wco, 2), SupportSplit::IiOrIii);
    }

    #[test]
    fn type_iv_examples() {
        let (_, wco) = shift_builtin("binary", 5).unwrap().wco().unwrap();
        assert!(!type_iv_test(&wco));
        let (_, wco) = shift_builtin("z_minus", 5).unwrap().wco().unwrap();
        assert!(!type_iv_test(&wco));
        let (_, wco) = shift_builtin("zline", 5).unwrap().wco().unwrap();
        assert!(type_iv_test(&wco));
    }

    #[test]
    fn decay_ratios() {
        let inst = shift_builtin("binary", 8).unwrap();
        let w = inst.window().unwrap();
        let d = type_i_decay(&inst.shift, &w.members[w.len() - 1], 8).unwrap();
        for (i, r) in d.ratios.iter().enumerate() {
            assert!((r - 0.5f64.powi(i as i32 + 1)).abs() < 1e-12);
        }
        assert!(d.decaying && (d.rho - 0.5).abs() < 1e-12);

        let inst = shift_builtin("y_tree", 10).unwrap();
        let d = type_i_decay(&inst.shift, &inst.base, 10).unwrap();
        assert!(d.ratios[5..].iter().all(|r| (r - 0.5).abs() < 1e-12));
        assert!(!d.decaying);

        let inst = shift_builtin("zline", 6).unwrap();
        let d = type_i_decay(&inst.shift, &inst.base, 6).unwrap();
        assert!(d.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));

        let inst = shift_builtin("zplus_path", 4).unwrap();
        assert!(matches!(
            type_i_decay(&inst.shift, &VertexId::new("2"), 3),
            Err(Error::UndefinedAncestor(_))
        ));
    }

    #[test]
    fn kappa_ary_examples() {
        let inst = shift_builtin("binary", 4).unwrap();
        let w = inst.window().unwrap();
        assert!(kappa_ary_test(&inst.shift, &w, 2).unwrap().holds);
        assert!(matches!(kappa_ary_test(&inst.shift, &w, 3), Err(Error::ValencyTooLow { .. })));
        let mixed = WeightedShift::new(
            inst.shift.tree.clone(),
            Weights::func(|v| {
                let s = if v.as_str().len() % 2 == 0 { 2f64.sqrt() } else { 1.0 };
                Complex64::new(s, 0.0)
            }),
        );
        assert!(!kappa_ary_test(&mixed, &w, 2).unwrap().holds);
        let inst = shift_builtin("ternary", 3).unwrap();
        let w = inst.window().unwrap();
        let ranged = WeightedShift::new(
            inst.shift.tree.clone(),
            Weights::func(|v| Complex64::new(0.9 + 0.2 * ((v.as_str().len() % 3) as f64) / 2.0, 0.0)),
        );
        assert!(kappa_ary_test(&ranged, &w, 3).unwrap().holds);
    }

    #[test]
    fn structural_labels() {
        let v = structural_type(&shift_builtin("z_minus", 8).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::II);
        assert_eq!(v.stable, Some(true));
        let v = structural_type(&shift_builtin("zplus_path", 6).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::I);
        let v = structural_type(&shift_builtin("rooted_full_binary_d3", 3).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::III);
        let v = structural_type(&shift_builtin("binary", 6).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::I);
        let v = structural_type(&shift_builtin("y_tree", 10).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::IPlusIV, "{v:?}");
        let v = structural_type(&shift_builtin("zline", 6).unwrap(), &opts()).unwrap();
        assert_eq!(v.label, TypeLabel::IV);
        assert!(matches!(
            structural_type(&shift_builtin("blackblack", 6).unwrap(), &opts()),
            Err(Error::NotCentered(_))
        ));
    }

    #[test]
    fn zero_weights_are_rejected() {
        let inst = shift_builtin("rooted_full_binary_d3", 3).unwrap();
        let tree = inst.shift.tree.clone();
        let w = full_window(&tree).unwrap();
        let z = ShiftInstance {
            shift: WeightedShift::new(tree, Weights::uniform(0.0)),
            ..inst
        };
        assert_eq!(w.len(), 15);
        assert!(matches!(structural_type(&z, &opts()), Err(Error::ZeroWeights)));
    }
}
