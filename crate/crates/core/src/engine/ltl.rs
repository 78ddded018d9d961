//! LTL in negation normal form and its translation to a generalized Büchi
//! automaton with the declarative tableau of Gerth, Peled, Vardi and Wolper.

use super::EngineError;
use crate::expr::{Expr, Ltl};
use std::collections::{BTreeSet, HashMap};

/// Negation normal form over interned atoms. `Lit(i, false)` is `!atom_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nnf {
    True,
    False,
    Lit(usize, bool),
    And(Box<Nnf>, Box<Nnf>),
    Or(Box<Nnf>, Box<Nnf>),
    Next(Box<Nnf>),
    Until(Box<Nnf>, Box<Nnf>),
    Release(Box<Nnf>, Box<Nnf>),
}

impl Nnf {
    /// Converts `f` (negated when `negate`) interning atoms into `atoms`.
    pub fn from_ltl(f: &Ltl, negate: bool, atoms: &mut Vec<Expr>) -> Nnf {
        let b = Box::new;
        match (f, negate) {
            (Ltl::True, false) | (Ltl::False, true) => Nnf::True,
            (Ltl::True, true) | (Ltl::False, false) => Nnf::False,
            (Ltl::Atom(Expr::Bool(v)), n) => {
                if *v != n {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            (Ltl::Atom(e), n) => {
                let i = match atoms.iter().position(|a| a == e) {
                    Some(i) => i,
                    None => {
                        atoms.push(e.clone());
                        atoms.len() - 1
                    }
                };
                Nnf::Lit(i, !n)
            }
            (Ltl::Not(a), n) => Nnf::from_ltl(a, !n, atoms),
            (Ltl::And(x, y), false) | (Ltl::Or(x, y), true) => {
                Nnf::And(b(Nnf::from_ltl(x, negate, atoms)), b(Nnf::from_ltl(y, negate, atoms)))
            }
            (Ltl::Or(x, y), false) | (Ltl::And(x, y), true) => {
                Nnf::Or(b(Nnf::from_ltl(x, negate, atoms)), b(Nnf::from_ltl(y, negate, atoms)))
            }
            (Ltl::Implies(x, y), false) => Nnf::Or(b(Nnf::from_ltl(x, true, atoms)), b(Nnf::from_ltl(y, false, atoms))),
            (Ltl::Implies(x, y), true) => Nnf::And(b(Nnf::from_ltl(x, false, atoms)), b(Nnf::from_ltl(y, true, atoms))),
            (Ltl::Next(a), n) => Nnf::Next(b(Nnf::from_ltl(a, n, atoms))),
            (Ltl::Globally(a), false) | (Ltl::Finally(a), true) => {
                Nnf::Release(b(Nnf::False), b(Nnf::from_ltl(a, negate, atoms)))
            }
            (Ltl::Finally(a), false) | (Ltl::Globally(a), true) => {
                Nnf::Until(b(Nnf::True), b(Nnf::from_ltl(a, negate, atoms)))
            }
            (Ltl::Until(x, y), false) => {
                Nnf::Until(b(Nnf::from_ltl(x, false, atoms)), b(Nnf::from_ltl(y, false, atoms)))
            }
            (Ltl::Until(x, y), true) => {
                Nnf::Release(b(Nnf::from_ltl(x, true, atoms)), b(Nnf::from_ltl(y, true, atoms)))
            }
            (Ltl::Release(x, y), false) => {
                Nnf::Release(b(Nnf::from_ltl(x, false, atoms)), b(Nnf::from_ltl(y, false, atoms)))
            }
            (Ltl::Release(x, y), true) => {
                Nnf::Until(b(Nnf::from_ltl(x, true, atoms)), b(Nnf::from_ltl(y, true, atoms)))
            }
        }
    }
}

/// Interned subformula with child ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Form {
    True,
    False,
    Lit(usize, bool),
    And(usize, usize),
    Or(usize, usize),
    Next(usize),
    Until(usize, usize),
    Release(usize, usize),
}

#[derive(Default)]
struct Arena {
    forms: Vec<Form>,
    index: HashMap<Form, usize>,
}

impl Arena {
    fn intern(&mut self, f: &Nnf) -> usize {
        let form = match f {
            Nnf::True => Form::True,
            Nnf::False => Form::False,
            Nnf::Lit(a, p) => Form::Lit(*a, *p),
            Nnf::And(x, y) => Form::And(self.intern(x), self.intern(y)),
            Nnf::Or(x, y) => Form::Or(self.intern(x), self.intern(y)),
            Nnf::Next(x) => Form::Next(self.intern(x)),
            Nnf::Until(x, y) => Form::Until(self.intern(x), self.intern(y)),
            Nnf::Release(x, y) => Form::Release(self.intern(x), self.intern(y)),
        };
        if let Some(&i) = self.index.get(&form) {
            return i;
        }
        self.forms.push(form);
        self.index.insert(form, self.forms.len() - 1);
        self.forms.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutNode {
    /// Literals the current letter must satisfy.
    pub label: Vec<(usize, bool)>,
    pub succ: Vec<usize>,
    pub initial: bool,
    /// Bit `j` set when the node belongs to acceptance set `j`.
    pub accept: u64,
}

/// Generalized Büchi automaton with state-based labels: a run reads letter
/// `i` in its `i`-th node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    pub nodes: Vec<AutNode>,
    pub acceptance_sets: usize,
}

const INIT: usize = usize::MAX;

struct Pending {
    incoming: BTreeSet<usize>,
    new: BTreeSet<usize>,
    old: BTreeSet<usize>,
    next: BTreeSet<usize>,
}

impl Automaton {
    pub fn build(f: &Nnf, cap: usize) -> Result<Automaton, EngineError> {
        let mut arena = Arena::default();
        let root = arena.intern(f);
        let forms = arena.forms.clone();
        let lit_id = |a: usize, p: bool| arena.index.get(&Form::Lit(a, p)).copied();

        struct Done {
            incoming: BTreeSet<usize>,
            old: BTreeSet<usize>,
        }
        let mut done: Vec<Done> = Vec::new();
        let mut by_key: HashMap<(BTreeSet<usize>, BTreeSet<usize>), usize> = HashMap::new();
        let mut stack =
            vec![Pending { incoming: [INIT].into(), new: [root].into(), old: BTreeSet::new(), next: BTreeSet::new() }];
        let mut work = 0usize;
        while let Some(mut n) = stack.pop() {
            work += 1;
            if work > cap.saturating_mul(64) {
                return Err(EngineError::AutomatonCap(done.len()));
            }
            let Some(eta) = n.new.pop_first() else {
                let key = (n.old.clone(), n.next.clone());
                if let Some(&i) = by_key.get(&key) {
                    done[i].incoming.extend(n.incoming);
                    continue;
                }
                if done.len() >= cap {
                    return Err(EngineError::AutomatonCap(done.len()));
                }
                let id = done.len();
                by_key.insert(key, id);
                done.push(Done { incoming: n.incoming, old: n.old });
                stack.push(Pending { incoming: [id].into(), new: n.next, old: BTreeSet::new(), next: BTreeSet::new() });
                continue;
            };
            if n.old.contains(&eta) {
                stack.push(n);
                continue;
            }
            match forms[eta] {
                Form::False => {}
                Form::True => {
                    n.old.insert(eta);
                    stack.push(n);
                }
                Form::Lit(a, p) => {
                    if lit_id(a, !p).is_some_and(|neg| n.old.contains(&neg)) {
                        continue;
                    }
                    n.old.insert(eta);
                    stack.push(n);
                }
                Form::And(x, y) => {
                    n.old.insert(eta);
                    for c in [x, y] {
                        if !n.old.contains(&c) {
                            n.new.insert(c);
                        }
                    }
                    stack.push(n);
                }
                Form::Next(x) => {
                    n.old.insert(eta);
                    n.next.insert(x);
                    stack.push(n);
                }
                Form::Or(x, y) | Form::Until(x, y) | Form::Release(x, y) => {
                    n.old.insert(eta);
                    let (new1, next1, new2): (Vec<usize>, Option<usize>, Vec<usize>) = match forms[eta] {
                        Form::Or(..) => (vec![x], None, vec![y]),
                        Form::Until(..) => (vec![x], Some(eta), vec![y]),
                        _ => (vec![y], Some(eta), vec![x, y]),
                    };
                    let mut n1 = Pending {
                        incoming: n.incoming.clone(),
                        new: n.new.clone(),
                        old: n.old.clone(),
                        next: n.next.clone(),
                    };
                    for c in new1 {
                        if !n1.old.contains(&c) {
                            n1.new.insert(c);
                        }
                    }
                    n1.next.extend(next1);
                    for c in new2 {
                        if !n.old.contains(&c) {
                            n.new.insert(c);
                        }
                    }
                    stack.push(n);
                    stack.push(n1);
                }
            }
        }

        let untils: Vec<(usize, usize)> = forms
            .iter()
            .enumerate()
            .filter_map(|(i, f)| match f {
                Form::Until(_, y) => Some((i, *y)),
                _ => None,
            })
            .collect();
        if untils.len() > 64 {
            return Err(EngineError::AutomatonCap(done.len()));
        }
        let mut nodes: Vec<AutNode> = done
            .iter()
            .map(|d| {
                let label = d
                    .old
                    .iter()
                    .filter_map(|&i| match forms[i] {
                        Form::Lit(a, p) => Some((a, p)),
                        _ => None,
                    })
                    .collect();
                let mut accept = 0u64;
                for (j, (u, y)) in untils.iter().enumerate() {
                    if !d.old.contains(u) || d.old.contains(y) {
                        accept |= 1 << j;
                    }
                }
                AutNode { label, succ: Vec::new(), initial: d.incoming.contains(&INIT), accept }
            })
            .collect();
        for (j, d) in done.iter().enumerate() {
            for &i in &d.incoming {
                if i != INIT {
                    nodes[i].succ.push(j);
                }
            }
        }
        for n in &mut nodes {
            n.succ.sort_unstable();
            n.succ.dedup();
        }
        Ok(Automaton { nodes, acceptance_sets: untils.len() })
    }

    /// Counter range of the degeneralized automaton.
    pub fn counters(&self) -> usize {
        self.acceptance_sets.max(1)
    }

    pub fn accepting(&self, q: usize, c: usize) -> bool {
        self.acceptance_sets == 0 || (c == 0 && self.nodes[q].accept & 1 != 0)
    }

    pub fn next_counter(&self, q: usize, c: usize) -> usize {
        if self.acceptance_sets == 0 {
            0
        } else if self.nodes[q].accept & (1 << c) != 0 {
            (c + 1) % self.acceptance_sets
        } else {
            c
        }
    }
}

/// Evaluates an NNF formula on a lasso of atom valuations
/// (`vals[i][a]` is atom `a` at position `i`).
pub(crate) fn eval_lasso(f: &Nnf, vals: &[Vec<bool>], loop_start: usize) -> bool {
    let n = vals.len();
    let succ = |i: usize| if i + 1 < n { i + 1 } else { loop_start };
    fn go(f: &Nnf, vals: &[Vec<bool>], succ: &dyn Fn(usize) -> usize) -> Vec<bool> {
        let n = vals.len();
        match f {
            Nnf::True => vec![true; n],
            Nnf::False => vec![false; n],
            Nnf::Lit(a, p) => vals.iter().map(|v| v[*a] == *p).collect(),
            Nnf::And(x, y) => {
                let (a, b) = (go(x, vals, succ), go(y, vals, succ));
                a.iter().zip(&b).map(|(p, q)| *p && *q).collect()
            }
            Nnf::Or(x, y) => {
                let (a, b) = (go(x, vals, succ), go(y, vals, succ));
                a.iter().zip(&b).map(|(p, q)| *p || *q).collect()
            }
            Nnf::Next(x) => {
                let a = go(x, vals, succ);
                (0..n).map(|i| a[succ(i)]).collect()
            }
            Nnf::Until(x, y) | Nnf::Release(x, y) => {
                let until = matches!(f, Nnf::Until(..));
                let (a, b) = (go(x, vals, succ), go(y, vals, succ));
                let mut v = vec![!until; n];
                loop {
                    let mut changed = false;
                    for i in (0..n).rev() {
                        let nv = if until { b[i] || (a[i] && v[succ(i)]) } else { b[i] && (a[i] || v[succ(i)]) };
                        if nv != v[i] {
                            v[i] = nv;
                            changed = true;
                        }
                    }
                    if !changed {
                        break v;
                    }
                }
            }
        }
    }
    if n == 0 {
        return false;
    }
    go(f, vals, &succ)[0]
}
