//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code)]

pub mod contracts;
pub mod fta;

use depforge_core::dsl::{parse_expr, parse_model, SourceFile};
use depforge_core::engine::{FaultMode, System, Trace};
use depforge_core::expr::{Const, Expr, Ltl, ValueType};
use depforge_core::instance::{instantiate, select_configuration, InstanceModel};
use depforge_core::model::ArchitectureModel;
use rand::seq::IndexedRandom;
use rand::Rng;
use std::collections::{BTreeMap, HashMap, VecDeque};

pub fn parse(src: &str) -> ArchitectureModel {
    parse_model(&[SourceFile::new("test.dep", src)]).unwrap_or_else(|d| panic!("{d:?}"))
}

pub fn instance(src: &str) -> InstanceModel {
    let m = parse(src);
    let cfg = select_configuration(&m, None).unwrap();
    instantiate(&m, &cfg).unwrap()
}

pub fn system(src: &str) -> System {
    System::from_instance(&instance(src), "").unwrap()
}

pub fn expr(s: &str) -> Expr {
    parse_expr(s).unwrap()
}

/// Explicit transition system with atom valuations per state.
pub struct Kripke {
    pub init: Vec<usize>,
    pub succ: Vec<Vec<usize>>,
    pub label: Vec<Vec<bool>>,
}

impl Kripke {
    /// Reachable part of `sys` under `mode`, labelled with `atoms`.
    pub fn of_system(sys: &System, mode: &FaultMode, atoms: &[Expr]) -> Kripke {
        let allowed = sys.event_mask(mode).unwrap();
        let compiled: Vec<_> = atoms.iter().map(|a| sys.compile_condition(a).unwrap()).collect();
        let mut index = HashMap::new();
        let mut states = Vec::new();
        let mut queue = VecDeque::new();
        let mut init = Vec::new();
        for s in sys.initial_states() {
            let id = *index.entry(s.clone()).or_insert_with(|| {
                states.push(s.clone());
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            init.push(id);
        }
        let mut succ: Vec<Vec<usize>> = Vec::new();
        let mut buf = Vec::new();
        while let Some(v) = queue.pop_front() {
            buf.clear();
            sys.successors(&states[v], allowed, &mut buf);
            let mut out = Vec::new();
            for t in buf.drain(..) {
                let id = match index.get(&t) {
                    Some(&i) => i,
                    None => {
                        states.push(t.clone());
                        index.insert(t, states.len() - 1);
                        queue.push_back(states.len() - 1);
                        states.len() - 1
                    }
                };
                out.push(id);
            }
            if succ.len() <= v {
                succ.resize(v + 1, Vec::new());
            }
            succ[v] = out;
        }
        succ.resize(states.len(), Vec::new());
        let label = states.iter().map(|s| compiled.iter().map(|c| c.holds(s)).collect()).collect();
        Kripke { init, succ, label }
    }

    /// Every word over `n` boolean atoms: one state per letter, all edges.
    pub fn universal(n: usize) -> Kripke {
        let m = 1usize << n;
        Kripke {
            init: (0..m).collect(),
            succ: (0..m).map(|_| (0..m).collect()).collect(),
            label: (0..m).map(|l| (0..n).map(|b| l & (1 << b) != 0).collect()).collect(),
        }
    }
}

/// Formula over atom indices in the core operators X, U and boolean
/// connectives.
#[derive(Debug, Clone, PartialEq)]
enum F {
    True,
    Atom(usize),
    Not(Box<F>),
    And(Box<F>, Box<F>),
    X(Box<F>),
    U(Box<F>, Box<F>),
}

fn lower(f: &Ltl, atoms: &[Expr]) -> F {
    let b = Box::new;
    let not = |x: F| F::Not(b(x));
    let or = |x: F, y: F| F::Not(b(F::And(b(F::Not(b(x))), b(F::Not(b(y))))));
    match f {
        Ltl::True => F::True,
        Ltl::False => not(F::True),
        Ltl::Atom(e) => F::Atom(atoms.iter().position(|a| a == e).expect("atom listed")),
        Ltl::Not(a) => not(lower(a, atoms)),
        Ltl::And(x, y) => F::And(b(lower(x, atoms)), b(lower(y, atoms))),
        Ltl::Or(x, y) => or(lower(x, atoms), lower(y, atoms)),
        Ltl::Implies(x, y) => or(not(lower(x, atoms)), lower(y, atoms)),
        Ltl::Next(a) => F::X(b(lower(a, atoms))),
        Ltl::Finally(a) => F::U(b(F::True), b(lower(a, atoms))),
        Ltl::Globally(a) => not(F::U(b(F::True), b(not(lower(a, atoms))))),
        Ltl::Until(x, y) => F::U(b(lower(x, atoms)), b(lower(y, atoms))),
        Ltl::Release(x, y) => not(F::U(b(not(lower(x, atoms))), b(not(lower(y, atoms))))),
    }
}

/// Atoms of `f` in first-occurrence order.
pub fn atoms_of(f: &Ltl) -> Vec<Expr> {
    let mut out: Vec<Expr> = Vec::new();
    f.visit_atoms(&mut |e| {
        if !out.contains(e) {
            out.push(e.clone());
        }
    });
    out
}

/// Elementary next-formulas of the closure: `X a` and the `X (a U b)` of
/// every until.
fn elementary(f: &F, out: &mut Vec<F>) {
    match f {
        F::True | F::Atom(_) => {}
        F::Not(a) => elementary(a, out),
        F::And(a, c) => {
            elementary(a, out);
            elementary(c, out);
        }
        F::X(a) => {
            if !out.contains(f) {
                out.push(f.clone());
            }
            elementary(a, out);
        }
        F::U(a, c) => {
            let x = F::X(Box::new(f.clone()));
            if !out.contains(&x) {
                out.push(x);
            }
            elementary(a, out);
            elementary(c, out);
        }
    }
}

fn untils(f: &F, out: &mut Vec<F>) {
    match f {
        F::True | F::Atom(_) => {}
        F::Not(a) | F::X(a) => untils(a, out),
        F::And(a, c) => {
            untils(a, out);
            untils(c, out);
        }
        F::U(a, c) => {
            if !out.contains(f) {
                out.push(f.clone());
            }
            untils(a, out);
            untils(c, out);
        }
    }
}

fn eval(f: &F, lab: &[bool], v: &[bool], el: &[F]) -> bool {
    match f {
        F::True => true,
        F::Atom(i) => lab[*i],
        F::Not(a) => !eval(a, lab, v, el),
        F::And(a, c) => eval(a, lab, v, el) && eval(c, lab, v, el),
        F::X(_) => v[el.iter().position(|e| e == f).unwrap()],
        F::U(a, c) => {
            let k = el.iter().position(|e| matches!(e, F::X(x) if **x == *f)).unwrap();
            eval(c, lab, v, el) || (eval(a, lab, v, el) && v[k])
        }
    }
}

/// True when some infinite path of `k` satisfies `f`, decided by the
/// closure tableau with fair-SCC search.
pub fn exists_path(k: &Kripke, f: &Ltl, atoms: &[Expr]) -> bool {
    let f = lower(f, atoms);
    let mut el = Vec::new();
    elementary(&f, &mut el);
    let mut us = Vec::new();
    untils(&f, &mut us);
    let nv = 1usize << el.len();
    let bits = |m: usize| (0..el.len()).map(|i| m & (1 << i) != 0).collect::<Vec<bool>>();
    let vals: Vec<Vec<bool>> = (0..nv).map(bits).collect();
    let id = |s: usize, m: usize| s * nv + m;
    let n = k.succ.len() * nv;
    let consistent = |s2: usize, m: usize, m2: usize| {
        el.iter().enumerate().all(|(i, e)| {
            let F::X(inner) = e else { unreachable!() };
            vals[m][i] == eval(inner, &k.label[s2], &vals[m2], &el)
        })
    };
    let post = |v: usize| -> Vec<usize> {
        let (s, m) = (v / nv, v % nv);
        let mut out = Vec::new();
        for &s2 in &k.succ[s] {
            for m2 in 0..nv {
                if consistent(s2, m, m2) {
                    out.push(id(s2, m2));
                }
            }
        }
        out
    };
    let fair = |v: usize, u: &F| {
        let (s, m) = (v / nv, v % nv);
        let F::U(_, c) = u else { unreachable!() };
        !eval(u, &k.label[s], &vals[m], &el) || eval(c, &k.label[s], &vals[m], &el)
    };
    let mut reach = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in &k.init {
        for m in 0..nv {
            if eval(&f, &k.label[s], &vals[m], &el) && !reach[id(s, m)] {
                reach[id(s, m)] = true;
                queue.push_back(id(s, m));
            }
        }
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    while let Some(v) = queue.pop_front() {
        adj[v] = post(v);
        for &t in &adj[v] {
            if !reach[t] {
                reach[t] = true;
                queue.push_back(t);
            }
        }
    }
    // Tarjan's algorithm, iterative.
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    for root in (0..n).filter(|&v| reach[v]) {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on[w] = true;
                    call.push((w, 0));
                } else if on[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(p, _)) = call.last() {
                low[p] = low[p].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                let nontrivial = comp.len() > 1 || adj[v].contains(&v);
                if nontrivial && us.iter().all(|u| comp.iter().any(|&w| fair(w, u))) {
                    return true;
                }
            }
        }
    }
    false
}

/// Does `f` hold on every path of `sys` under `mode`?
pub fn oracle_holds(sys: &System, f: &Ltl, mode: &FaultMode) -> bool {
    let atoms = atoms_of(f);
    let k = Kripke::of_system(sys, mode, &atoms);
    !exists_path(&k, &Ltl::not(f.clone()), &atoms)
}

/// Is `f` valid over all words on the given boolean atoms?
pub fn oracle_valid(f: &Ltl, atoms: &[Expr]) -> bool {
    let k = Kripke::universal(atoms.len());
    !exists_path(&k, &Ltl::not(f.clone()), atoms)
}

/// Direct evaluation of `f` at position 0 of a lasso given atom truth per
/// position.
pub fn eval_lasso(f: &Ltl, at: &dyn Fn(&Expr, usize) -> bool, len: usize, loop_start: usize) -> bool {
    fn go(f: &Ltl, at: &dyn Fn(&Expr, usize) -> bool, len: usize, ls: usize) -> Vec<bool> {
        let next = |i: usize| if i + 1 < len { i + 1 } else { ls };
        let until = |a: &[bool], b: &[bool]| {
            let mut v = vec![false; len];
            for _ in 0..=2 * len {
                for i in (0..len).rev() {
                    v[i] = b[i] || (a[i] && v[next(i)]);
                }
            }
            v
        };
        match f {
            Ltl::True => vec![true; len],
            Ltl::False => vec![false; len],
            Ltl::Atom(e) => (0..len).map(|i| at(e, i)).collect(),
            Ltl::Not(a) => go(a, at, len, ls).into_iter().map(|x| !x).collect(),
            Ltl::And(a, b) => zip(go(a, at, len, ls), go(b, at, len, ls), |x, y| x && y),
            Ltl::Or(a, b) => zip(go(a, at, len, ls), go(b, at, len, ls), |x, y| x || y),
            Ltl::Implies(a, b) => zip(go(a, at, len, ls), go(b, at, len, ls), |x, y| !x || y),
            Ltl::Next(a) => {
                let v = go(a, at, len, ls);
                (0..len).map(|i| v[next(i)]).collect()
            }
            Ltl::Until(a, b) => until(&go(a, at, len, ls), &go(b, at, len, ls)),
            Ltl::Finally(a) => until(&vec![true; len], &go(a, at, len, ls)),
            Ltl::Globally(a) => {
                let na: Vec<bool> = go(a, at, len, ls).into_iter().map(|x| !x).collect();
                until(&vec![true; len], &na).into_iter().map(|x| !x).collect()
            }
            Ltl::Release(a, b) => {
                let na: Vec<bool> = go(a, at, len, ls).into_iter().map(|x| !x).collect();
                let nb: Vec<bool> = go(b, at, len, ls).into_iter().map(|x| !x).collect();
                until(&na, &nb).into_iter().map(|x| !x).collect()
            }
        }
    }
    fn zip(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
        a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
    }
    go(f, at, len, loop_start)[0]
}

/// Evaluates `f` on a lasso witness of `sys`.
pub fn trace_satisfies(sys: &System, trace: &Trace, f: &Ltl) -> bool {
    let states: Vec<_> = trace.steps.iter().map(|s| sys.state_of(s).unwrap()).collect();
    let at = |e: &Expr, i: usize| sys.compile_condition(e).unwrap().holds(&states[i]);
    eval_lasso(f, &at, states.len(), trace.loop_start.expect("lasso"))
}

/// Random single-leaf machine with a free input, two registers and an
/// optional latching fault. At most 144 joint states.
pub fn random_machine(rng: &mut impl Rng) -> (String, bool) {
    const GUARDS: [&str; 7] = ["", "i", "!i", "x == 1", "y", "x < 2 && i", "x != 0 || !y"];
    const UPDATES: [&str; 6] = ["x = x + 1;", "x = 0;", "y = !y;", "y = i;", "x = x - 1;", "y = x == 2;"];
    const STATES: [&str; 3] = ["A", "B", "C"];
    let mut t = String::new();
    for _ in 0..rng.random_range(1..=6) {
        let (s, d) = (STATES.choose(rng).unwrap(), STATES.choose(rng).unwrap());
        let g = GUARDS.choose(rng).unwrap();
        let guard = if g.is_empty() { String::new() } else { format!(" when {g}") };
        let ups: Vec<&str> = UPDATES.iter().filter(|_| rng.random_bool(0.3)).copied().collect();
        let upd = if ups.is_empty() { String::new() } else { format!(" do {{ {} }}", ups.join(" ")) };
        t.push_str(&format!("      transition {s} -> {d}{guard}{upd};\n"));
    }
    let faulty = rng.random_bool(0.5);
    let em = if faulty {
        let v = rng.random_range(0..3);
        "    error_model E {\n      normal Ok;\n      error Bad;\n      initial Ok;\n      \
         fault f: Ok -> Bad probability 0.1;\n      effect Bad: x stuck_at V;\n    }\n"
            .replace('V', &v.to_string())
    } else {
        String::new()
    };
    let src = format!(
        "model R {{\n  block M {{\n    in i: bool;\n    out x: 0..2 = 0;\n    out y: bool;\n    behavior {{\n      \
         states A, B, C;\n      initial A;\n{t}    }}\n{em}  }}\n  root M;\n}}\n"
    );
    (src, faulty)
}

/// Random formula with at most `temporal` temporal operators.
pub fn random_formula(rng: &mut impl Rng, atoms: &[&str], temporal: usize) -> Ltl {
    fn go(rng: &mut impl Rng, atoms: &[&str], budget: &mut usize, depth: usize) -> Ltl {
        let leaf = depth >= 4 || rng.random_bool(0.3);
        if leaf {
            return Ltl::atom(parse_expr(atoms.choose(rng).unwrap()).unwrap());
        }
        let temporal_ok = *budget > 0;
        let choice = rng.random_range(0..if temporal_ok { 9 } else { 4 });
        if choice >= 4 {
            *budget -= 1;
        }
        let sub = |rng: &mut _, budget: &mut usize| go(rng, atoms, budget, depth + 1);
        match choice {
            0 => Ltl::not(sub(rng, budget)),
            1 => Ltl::and(sub(rng, budget), sub(rng, budget)),
            2 => Ltl::or(sub(rng, budget), sub(rng, budget)),
            3 => Ltl::implies(sub(rng, budget), sub(rng, budget)),
            4 => Ltl::next(sub(rng, budget)),
            5 => Ltl::globally(sub(rng, budget)),
            6 => Ltl::finally(sub(rng, budget)),
            7 => Ltl::until(sub(rng, budget), sub(rng, budget)),
            _ => Ltl::release(sub(rng, budget), sub(rng, budget)),
        }
    }
    let mut budget = temporal;
    go(rng, atoms, &mut budget, 0)
}

/// Direct evaluation of a ground expression.
pub fn eval_expr(e: &Expr, env: &dyn Fn(&str) -> Const) -> Const {
    use depforge_core::expr::{BinOp, UnOp};
    let int = |c: Const| match c {
        Const::Int(i) => i,
        Const::Bool(b) => b as i64,
        Const::Label(l) => panic!("label {l} used as a number"),
    };
    let boolean = |c: Const| match c {
        Const::Bool(b) => b,
        other => panic!("{other} used as a boolean"),
    };
    match e {
        Expr::Bool(b) => Const::Bool(*b),
        Expr::Int(i) => Const::Int(*i),
        Expr::Label(l) => Const::Label(l.clone()),
        Expr::Ref(p) => env(&p.to_string()),
        Expr::Unary(UnOp::Not, a) => Const::Bool(!boolean(eval_expr(a, env))),
        Expr::Unary(UnOp::Neg, a) => Const::Int(-int(eval_expr(a, env))),
        Expr::Binary(op, a, b) => {
            let (x, y) = (eval_expr(a, env), eval_expr(b, env));
            match op {
                BinOp::Eq => Const::Bool(x == y),
                BinOp::Ne => Const::Bool(x != y),
                BinOp::And => Const::Bool(boolean(x) && boolean(y)),
                BinOp::Or => Const::Bool(boolean(x) || boolean(y)),
                BinOp::Implies => Const::Bool(!boolean(x) || boolean(y)),
                BinOp::Lt => Const::Bool(int(x) < int(y)),
                BinOp::Le => Const::Bool(int(x) <= int(y)),
                BinOp::Gt => Const::Bool(int(x) > int(y)),
                BinOp::Ge => Const::Bool(int(x) >= int(y)),
                BinOp::Add => Const::Int(int(x) + int(y)),
                BinOp::Sub => Const::Int(int(x) - int(y)),
                BinOp::Mul => Const::Int(int(x) * int(y)),
                BinOp::Div => {
                    let d = int(y);
                    Const::Int(if d == 0 { 0 } else { int(x) / d })
                }
            }
        }
        Expr::Quant { .. } => panic!("quantifiers are expanded by instantiation"),
    }
}

/// Validity over a typed vocabulary: the letters are the atom valuations
/// that some assignment of the referenced variables realizes.
pub fn typed_valid(f: &Ltl, vocab: &BTreeMap<String, ValueType>) -> bool {
    let atoms = atoms_of(f);
    let mut names: Vec<String> = Vec::new();
    for a in &atoms {
        a.visit_refs(&mut |p| {
            let n = p.to_string();
            if vocab.contains_key(&n) && !names.contains(&n) {
                names.push(n);
            }
        });
    }
    let domains: Vec<Vec<Const>> =
        names.iter().map(|n| vocab[n].values().into_iter().map(|v| vocab[n].decode(v)).collect()).collect();
    let mut letters: Vec<Vec<bool>> = Vec::new();
    let mut idx = vec![0usize; names.len()];
    loop {
        let env = |n: &str| match names.iter().position(|x| x == n) {
            Some(k) => domains[k][idx[k]].clone(),
            // Unresolved names are enumeration labels.
            None => Const::Label(n.to_string()),
        };
        let l: Vec<bool> = atoms.iter().map(|a| eval_expr(a, &env) == Const::Bool(true)).collect();
        if !letters.contains(&l) {
            letters.push(l);
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    let m = letters.len();
    let k = Kripke { init: (0..m).collect(), succ: (0..m).map(|_| (0..m).collect()).collect(), label: letters };
    !exists_path(&k, &Ltl::not(f.clone()), &atoms)
}
