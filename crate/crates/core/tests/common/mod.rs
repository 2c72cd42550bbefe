//! Random finite weighted shifts shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use wco_centered::discrete::{DiscreteWco, WeightedShift, Weights};
use wco_centered::tree::{build_tree, full_window, TruncationWindow, VertexId};
use wco_centered::Complex64;

pub struct Instance {
    pub shift: WeightedShift,
    pub window: TruncationWindow,
    pub wco: DiscreteWco,
    /// Built so that child sums are constant on every level.
    pub structured: bool,
}

pub const MAX_VERTICES: usize = 40;
pub const MAX_DEPTH: usize = 5;

fn weight(rng: &mut impl Rng, zero_rate: f64) -> f64 {
    if rng.gen_bool(zero_rate) {
        0.0
    } else {
        rng.gen_range(0.5..2.0)
    }
}

/// A random rooted tree with at most 40 vertices and depth at most 5.
///
/// Half of the instances are structured: every vertex of a level has the same
/// number of children, carrying a per-level weight vector (zeros included)
/// in the same slots, so they are centered. The others pick parents and
/// weights independently, each edge weight vanishing with probability `zero_rate`.
pub fn random_instance(rng: &mut impl Rng, zero_rate: f64) -> Instance {
    let structured = rng.gen_bool(0.5);
    let mut names = vec!["v0".to_owned()];
    let mut depth = vec![0usize];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut weights: HashMap<VertexId, Complex64> = HashMap::new();
    let add = |names: &mut Vec<String>, depth: &mut Vec<usize>, p: usize| {
        names.push(format!("v{}", names.len()));
        depth.push(depth[p] + 1);
        names.len() - 1
    };
    if structured {
        let levels = rng.gen_range(1..=MAX_DEPTH);
        let mut layer = vec![0usize];
        for _ in 0..levels {
            let mut k = rng.gen_range(1..=3usize);
            while k > 1 && names.len() + layer.len() * k > MAX_VERTICES {
                k -= 1;
            }
            if names.len() + layer.len() * k > MAX_VERTICES {
                break;
            }
            let slots: Vec<f64> = (0..k).map(|_| weight(rng, zero_rate)).collect();
            let mut next = Vec::new();
            for &p in &layer {
                // Permuting the slots keeps the child sum.
                let shift = rng.gen_range(0..k);
                for j in 0..k {
                    let c = add(&mut names, &mut depth, p);
                    edges.push((p, c));
                    weights.insert(VertexId::new(names[c].as_str()), Complex64::new(slots[(j + shift) % k], 0.0));
                    next.push(c);
                }
            }
            layer = next;
        }
    } else {
        let size = rng.gen_range(2..=MAX_VERTICES);
        while names.len() < size {
            let candidates: Vec<usize> = (0..names.len()).filter(|&i| depth[i] < MAX_DEPTH).collect();
            let p = candidates[rng.gen_range(0..candidates.len())];
            let c = add(&mut names, &mut depth, p);
            edges.push((p, c));
            // An occasional phase exercises complex weights.
            let r = weight(rng, zero_rate);
            let theta: f64 = if rng.gen_bool(0.2) { rng.gen_range(0.0..std::f64::consts::TAU) } else { 0.0 };
            weights.insert(VertexId::new(names[c].as_str()), Complex64::from_polar(r, theta));
        }
    }
    let edge_names: Vec<(&str, &str)> = edges.iter().map(|&(p, c)| (names[p].as_str(), names[c].as_str())).collect();
    let tree = build_tree(&names, &edge_names).expect("generated trees are valid");
    let shift = WeightedShift::new(tree, Weights::table(weights));
    let window = full_window(&shift.tree).expect("finite tree");
    let wco = DiscreteWco::from_weighted_shift(&shift, &window).expect("window is valid");
    Instance {
        shift,
        window,
        wco,
        structured,
    }
}
