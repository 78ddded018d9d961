//! Random flat fault models with a brute-force cut-set and probability
//! oracle.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};

/// Condition over leaf ports, rendered to the DSL and evaluated directly.
#[derive(Debug, Clone)]
pub enum Cond {
    Eq(usize, usize, i32),
    Gt(usize, usize, i32),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    pub fn render(&self) -> String {
        match self {
            Cond::Eq(l, p, v) => format!("c{l}.p{p} == {v}"),
            Cond::Gt(l, p, v) => format!("c{l}.p{p} > {v}"),
            Cond::Not(a) => format!("!({})", a.render()),
            Cond::And(a, b) => format!("({} && {})", a.render(), b.render()),
            Cond::Or(a, b) => format!("({} || {})", a.render(), b.render()),
        }
    }

    pub fn eval(&self, ports: &[Vec<i32>]) -> bool {
        match self {
            Cond::Eq(l, p, v) => ports[*l][*p] == *v,
            Cond::Gt(l, p, v) => ports[*l][*p] > *v,
            Cond::Not(a) => !a.eval(ports),
            Cond::And(a, b) => a.eval(ports) && b.eval(ports),
            Cond::Or(a, b) => a.eval(ports) || b.eval(ports),
        }
    }
}

pub struct Fault {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub p: f64,
}

pub struct Layer {
    pub leaf: usize,
    /// State 0 is the normal state; effects per state as (port, value).
    pub effects: Vec<Option<(usize, i32)>>,
    pub faults: Vec<Fault>,
}

pub struct RandomModel {
    pub src: String,
    pub inits: Vec<Vec<i32>>,
    pub layers: Vec<Layer>,
    pub cond: Cond,
    /// Event ids in declaration order.
    pub ids: Vec<String>,
}

impl RandomModel {
    pub fn probs(&self) -> HashMap<&str, f64> {
        self.layers.iter().flat_map(|l| l.faults.iter().map(|f| (f.id.as_str(), f.p))).collect()
    }

    /// Can the condition hold when only the events in `allowed` may fire?
    pub fn reach(&self, allowed: &BTreeSet<&str>) -> bool {
        let per_layer: Vec<Vec<usize>> = self
            .layers
            .iter()
            .map(|l| {
                let mut seen = vec![0usize];
                let mut i = 0;
                while i < seen.len() {
                    let s = seen[i];
                    for f in &l.faults {
                        if f.from == s && allowed.contains(f.id.as_str()) && !seen.contains(&f.to) {
                            seen.push(f.to);
                        }
                    }
                    i += 1;
                }
                seen
            })
            .collect();
        let mut pick = vec![0usize; self.layers.len()];
        loop {
            let mut ports = self.inits.clone();
            for (li, l) in self.layers.iter().enumerate() {
                if let Some((p, v)) = l.effects[per_layer[li][pick[li]]] {
                    ports[l.leaf][p] = v;
                }
            }
            if self.cond.eval(&ports) {
                return true;
            }
            let mut k = 0;
            loop {
                if k == pick.len() {
                    return false;
                }
                pick[k] += 1;
                if pick[k] < per_layer[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
    }
}

pub fn random_cond(rng: &mut ChaCha8Rng, shape: &[usize], hot: &[(usize, usize, i32)], depth: usize) -> Cond {
    if depth == 0 || rng.random_bool(0.3) {
        if !hot.is_empty() && rng.random_bool(0.7) {
            let &(l, p, v) = hot.choose(rng).unwrap();
            return Cond::Eq(l, p, v);
        }
        let l = rng.random_range(0..shape.len());
        let p = rng.random_range(0..shape[l]);
        let v = rng.random_range(0..4);
        return if rng.random_bool(0.7) { Cond::Eq(l, p, v) } else { Cond::Gt(l, p, v.min(2)) };
    }
    match rng.random_range(0..5) {
        0 if rng.random_bool(0.5) => Cond::Not(Box::new(random_cond(rng, shape, hot, depth - 1))),
        1 | 2 => Cond::And(
            Box::new(random_cond(rng, shape, hot, depth - 1)),
            Box::new(random_cond(rng, shape, hot, depth - 1)),
        ),
        _ => Cond::Or(
            Box::new(random_cond(rng, shape, hot, depth - 1)),
            Box::new(random_cond(rng, shape, hot, depth - 1)),
        ),
    }
}

pub fn random_model(rng: &mut ChaCha8Rng) -> RandomModel {
    let leaves = rng.random_range(1..=4);
    let mut src = String::from("model R {\n");
    let mut inits = Vec::new();
    let mut layers = Vec::new();
    let mut ids = Vec::new();
    let mut budget = 12usize;
    for l in 0..leaves {
        let nports = rng.random_range(1..=2);
        let init: Vec<i32> = (0..nports).map(|_| rng.random_range(0..4)).collect();
        src += &format!("  block L{l} {{\n");
        for (p, v) in init.iter().enumerate() {
            src += &format!("    out p{p}: 0..3 = {v};\n");
        }
        for k in 0..rng.random_range(1..=2) {
            if budget == 0 {
                break;
            }
            let nstates = rng.random_range(2..=3);
            let mut effects = vec![None];
            for _ in 1..nstates {
                effects.push(rng.random_bool(0.85).then(|| (rng.random_range(0..nports), rng.random_range(0..4))));
            }
            let mut faults = Vec::new();
            for to in 1..nstates {
                let from = if to > 1 && rng.random_bool(0.4) { *[0, to - 1].choose(rng).unwrap() } else { 0 };
                if budget == 0 {
                    break;
                }
                budget -= 1;
                let name = format!("f{l}_{k}_{to}");
                let p = *[0.01, 0.05, 0.1, 0.2, 0.3].choose(rng).unwrap();
                faults.push(Fault { id: format!("c{l}.{name}"), from, to, p });
            }
            src += &format!("    error_model E{k} {{\n      normal S0;\n");
            for s in 1..nstates {
                src += &format!("      error S{s};\n");
            }
            src += "      initial S0;\n";
            for f in &faults {
                let name = f.id.split('.').nth(1).unwrap();
                src += &format!("      fault {name}: S{} -> S{} probability {};\n", f.from, f.to, f.p);
                ids.push(f.id.clone());
            }
            for (s, e) in effects.iter().enumerate() {
                if let Some((p, v)) = e {
                    src += &format!("      effect S{s}: p{p} stuck_at {v};\n");
                }
            }
            src += "    }\n";
            layers.push(Layer { leaf: l, effects, faults });
        }
        src += "  }\n";
        inits.push(init);
    }
    src += "  block Sys {\n";
    for l in 0..leaves {
        src += &format!("    sub c{l}: L{l};\n");
    }
    src += "  }\n";
    let shape: Vec<usize> = inits.iter().map(|v| v.len()).collect();
    let hot: Vec<(usize, usize, i32)> =
        layers.iter().flat_map(|l| l.effects.iter().flatten().map(move |&(p, v)| (l.leaf, p, v))).collect();
    let cond = random_cond(rng, &shape, &hot, 3);
    src += &format!("  event top: {};\n  root Sys;\n}}\n", cond.render());
    RandomModel { src, inits, layers, cond, ids }
}

/// Brute force over every subset of events: minimal subsets that make the
/// condition reachable, and the exact probability of the fault vectors that
/// do.
pub fn brute_force(m: &RandomModel) -> (Vec<Vec<String>>, f64) {
    let n = m.ids.len();
    let probs = m.probs();
    let mut hits: Vec<u32> = Vec::new();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let set: BTreeSet<&str> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| m.ids[i].as_str()).collect();
        if m.reach(&set) {
            hits.push(mask);
            let w: f64 = (0..n)
                .map(|i| if mask & (1 << i) != 0 { probs[m.ids[i].as_str()] } else { 1.0 - probs[m.ids[i].as_str()] })
                .product();
            total += w;
        }
    }
    let minimal: Vec<u32> = hits.iter().copied().filter(|&h| !hits.iter().any(|&o| o != h && o & h == o)).collect();
    let mut sets: Vec<Vec<String>> = minimal
        .iter()
        .map(|&h| {
            let mut v: Vec<String> = (0..n).filter(|i| h & (1 << i) != 0).map(|i| m.ids[i].clone()).collect();
            v.sort();
            v
        })
        .collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    (sets, total)
}

pub fn nondegenerate_models(seed: u64, count: usize) -> Vec<RandomModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let m = random_model(&mut rng);
        if !m.reach(&BTreeSet::new()) {
            out.push(m);
        }
    }
    out
}
