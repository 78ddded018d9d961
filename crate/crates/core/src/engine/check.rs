use super::cexpr::{compile_bool, CExpr, SlotTable};
use super::ltl::{eval_lasso, Automaton, Nnf};
use super::system::{State, System};
use super::{EngineError, FaultMode, Limits, Outcome, Verdict};
use crate::expr::{Const, Expr, Ltl, ValueType};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};

/// Free variables of a validity question with their domains.
pub type Vocabulary = BTreeMap<String, ValueType>;

/// An ultimately periodic word: after the last letter the word continues at
/// `loop_start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct WordWitness {
    pub letters: Vec<BTreeMap<String, Const>>,
    pub loop_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Validity {
    Valid,
    /// A word on which the formula is false.
    Invalid {
        counterexample: WordWitness,
    },
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

struct VocabTable<'a>(&'a [(String, ValueType)]);

impl SlotTable for VocabTable<'_> {
    fn lookup(&self, name: &str) -> Option<(usize, &ValueType)> {
        self.0.iter().position(|(n, _)| n == name).map(|i| (i, &self.0[i].1))
    }
}

impl WordWitness {
    /// One line per letter; the loop start is marked.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, l) in self.letters.iter().enumerate() {
            let vals: Vec<String> = l.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mark = if i == self.loop_start { "  <- loop start" } else { "" };
            out.push_str(&format!("step {i}: {}{mark}\n", vals.join(" ")));
        }
        out
    }

    /// Evaluates `f` on this word.
    pub fn satisfies(&self, f: &Ltl, vocab: &Vocabulary) -> Result<bool, EngineError> {
        let vars: Vec<(String, ValueType)> = vocab.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let table = VocabTable(&vars);
        let mut atoms = Vec::new();
        let nnf = Nnf::from_ltl(f, false, &mut atoms);
        let compiled = atoms.iter().map(|a| compile_bool(a, &table)).collect::<Result<Vec<_>, _>>()?;
        let mut vals = Vec::new();
        for letter in &self.letters {
            let mut raw = vec![0i32; vars.len()];
            for (i, (n, ty)) in vars.iter().enumerate() {
                let c = letter.get(n).ok_or_else(|| EngineError::UnknownName(n.clone()))?;
                raw[i] = ty.encode(c).ok_or_else(|| EngineError::Type(format!("{c} is not a value of {ty}")))? as i32;
            }
            vals.push(compiled.iter().map(|c| c.holds(&raw)).collect());
        }
        if self.loop_start >= self.letters.len() {
            return Err(EngineError::Replay("loop start is past the end of the word".into()));
        }
        Ok(eval_lasso(&nnf, &vals, self.loop_start))
    }
}

/// A lazily explored graph with Büchi acceptance on vertices.
trait Graph {
    fn initial(&mut self) -> Result<Vec<u32>, EngineError>;
    fn post(&mut self, v: u32) -> Result<Vec<u32>, EngineError>;
    fn accepting(&self, v: u32) -> bool;
}

const WHITE: u8 = 0;
const CYAN: u8 = 1;
const BLUE: u8 = 2;

/// Nested depth-first search in the formulation of Schwoon and Esparza.
/// Returns an accepting lasso as its vertex sequence and loop start.
fn ndfs(g: &mut impl Graph) -> Result<Option<(Vec<u32>, usize)>, EngineError> {
    let mut color: Vec<u8> = Vec::new();
    let mut red: Vec<bool> = Vec::new();
    fn grow(color: &mut Vec<u8>, red: &mut Vec<bool>, v: u32) {
        if color.len() <= v as usize {
            color.resize(v as usize + 1, WHITE);
            red.resize(v as usize + 1, false);
        }
    }
    let lasso = |stack: &[(u32, Vec<u32>, usize)], tail: &[u32], target: u32| {
        let mut path: Vec<u32> = stack.iter().map(|f| f.0).collect();
        path.extend_from_slice(tail);
        let start = path.iter().position(|&v| v == target).unwrap_or(0);
        (path, start)
    };
    for init in g.initial()? {
        grow(&mut color, &mut red, init);
        if color[init as usize] != WHITE {
            continue;
        }
        color[init as usize] = CYAN;
        let mut stack = vec![(init, g.post(init)?, 0usize)];
        while let Some(top) = stack.last_mut() {
            if top.2 < top.1.len() {
                let (s, t) = (top.0, top.1[top.2]);
                top.2 += 1;
                grow(&mut color, &mut red, t);
                if color[t as usize] == CYAN && (g.accepting(s) || g.accepting(t)) {
                    return Ok(Some(lasso(&stack, &[], t)));
                }
                if color[t as usize] == WHITE {
                    color[t as usize] = CYAN;
                    let post = g.post(t)?;
                    stack.push((t, post, 0));
                }
                continue;
            }
            let s = top.0;
            if g.accepting(s) {
                let mut rstack = vec![(s, g.post(s)?, 0usize)];
                while let Some(rt) = rstack.last_mut() {
                    if rt.2 >= rt.1.len() {
                        rstack.pop();
                        continue;
                    }
                    let t = rt.1[rt.2];
                    rt.2 += 1;
                    grow(&mut color, &mut red, t);
                    if color[t as usize] == CYAN {
                        let tail: Vec<u32> = rstack.iter().skip(1).map(|f| f.0).collect();
                        return Ok(Some(lasso(&stack, &tail, t)));
                    }
                    if color[t as usize] == BLUE && !red[t as usize] {
                        red[t as usize] = true;
                        let post = g.post(t)?;
                        rstack.push((t, post, 0));
                    }
                }
                red[s as usize] = true;
            }
            color[s as usize] = BLUE;
            stack.pop();
        }
    }
    Ok(None)
}

/// Interns joint states and caches their successors and atom valuations.
struct StateStore<'a> {
    sys: &'a System,
    allowed: u64,
    cap: usize,
    states: Vec<State>,
    index: HashMap<State, u32>,
    succ: Vec<Option<Vec<u32>>>,
}

impl<'a> StateStore<'a> {
    fn new(sys: &'a System, allowed: u64, cap: usize) -> Self {
        StateStore { sys, allowed, cap, states: Vec::new(), index: HashMap::new(), succ: Vec::new() }
    }

    fn intern(&mut self, s: State) -> Result<u32, EngineError> {
        if let Some(&i) = self.index.get(&s) {
            return Ok(i);
        }
        if self.states.len() >= self.cap {
            return Err(EngineError::StateCap(self.cap));
        }
        let i = self.states.len() as u32;
        self.states.push(s.clone());
        self.index.insert(s, i);
        self.succ.push(None);
        Ok(i)
    }

    fn initial(&mut self) -> Result<Vec<u32>, EngineError> {
        self.sys.initial_states().into_iter().map(|s| self.intern(s)).collect()
    }

    fn post(&mut self, i: u32) -> Result<Vec<u32>, EngineError> {
        if let Some(v) = &self.succ[i as usize] {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        self.sys.successors(&self.states[i as usize], self.allowed, &mut out);
        let ids = out.into_iter().map(|s| self.intern(s)).collect::<Result<Vec<_>, _>>()?;
        self.succ[i as usize] = Some(ids.clone());
        Ok(ids)
    }
}

/// Product of the joint system with the automaton of the negated formula,
/// degeneralized with a round-robin counter.
struct Product<'a> {
    store: StateStore<'a>,
    aut: Automaton,
    atoms: Vec<CExpr>,
    vals: Vec<Vec<bool>>,
    keys: Vec<(u32, u32, u8)>,
    index: HashMap<(u32, u32, u8), u32>,
}

impl Product<'_> {
    fn label_holds(&mut self, s: u32, q: usize) -> bool {
        while self.vals.len() <= s as usize {
            let st = &self.store.states[self.vals.len()];
            self.vals.push(self.atoms.iter().map(|a| a.holds(st)).collect());
        }
        let v = &self.vals[s as usize];
        self.aut.nodes[q].label.iter().all(|&(a, p)| v[a] == p)
    }

    fn vertex(&mut self, key: (u32, u32, u8)) -> u32 {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.keys.push(key);
        self.index.insert(key, self.keys.len() as u32 - 1);
        self.keys.len() as u32 - 1
    }
}

impl Graph for Product<'_> {
    fn initial(&mut self) -> Result<Vec<u32>, EngineError> {
        let mut out = Vec::new();
        for s in self.store.initial()? {
            for q in 0..self.aut.nodes.len() {
                if self.aut.nodes[q].initial && self.label_holds(s, q) {
                    out.push(self.vertex((s, q as u32, 0)));
                }
            }
        }
        Ok(out)
    }

    fn post(&mut self, v: u32) -> Result<Vec<u32>, EngineError> {
        let (s, q, c) = self.keys[v as usize];
        let c2 = self.aut.next_counter(q as usize, c as usize) as u8;
        let mut out = Vec::new();
        for t in self.store.post(s)? {
            for k in 0..self.aut.nodes[q as usize].succ.len() {
                let q2 = self.aut.nodes[q as usize].succ[k];
                if self.label_holds(t, q2) {
                    out.push(self.vertex((t, q2 as u32, c2)));
                }
            }
        }
        Ok(out)
    }

    fn accepting(&self, v: u32) -> bool {
        let (_, q, c) = self.keys[v as usize];
        self.aut.accepting(q as usize, c as usize)
    }
}

fn automaton_for_negation(f: &Ltl, cap: usize) -> Result<(Automaton, Vec<Expr>), EngineError> {
    let mut atoms = Vec::new();
    let nnf = Nnf::from_ltl(f, true, &mut atoms);
    let aut = Automaton::build(&nnf, cap)?;
    if aut.counters() > u8::MAX as usize {
        return Err(EngineError::AutomatonCap(aut.nodes.len()));
    }
    Ok((aut, atoms))
}

/// Checks a ground LTL formula on every execution of `sys` under `mode`.
/// A violation carries a lasso counterexample.
pub fn check_ltl(sys: &System, f: &Ltl, mode: &FaultMode, limits: Limits) -> Result<Verdict, EngineError> {
    let allowed = sys.event_mask(mode)?;
    let (aut, atoms) = automaton_for_negation(f, limits.automaton_cap)?;
    let atoms = atoms.iter().map(|a| sys.compile_condition(a)).collect::<Result<Vec<_>, _>>()?;
    let mut p = Product {
        store: StateStore::new(sys, allowed, limits.state_cap),
        aut,
        atoms,
        vals: Vec::new(),
        keys: Vec::new(),
        index: HashMap::new(),
    };
    let found = ndfs(&mut p)?;
    let states = p.store.states.len();
    Ok(match found {
        None => Verdict { result: Outcome::Holds, witness: None, states },
        Some((path, start)) => {
            let seq: Vec<State> = path.iter().map(|&v| p.store.states[p.keys[v as usize].0 as usize].clone()).collect();
            Verdict { result: Outcome::Violated, witness: Some(sys.trace(&seq, Some(start))), states }
        }
    })
}

/// Breadth-first search for a state satisfying `cond`; returns the shortest
/// path to it, if any, and the number of states explored.
pub(crate) fn search_reachable(
    sys: &System,
    cond: &CExpr,
    allowed: u64,
    cap: usize,
) -> Result<(Option<Vec<State>>, usize), EngineError> {
    let mut store = StateStore::new(sys, allowed, cap);
    let mut parent: Vec<u32> = Vec::new();
    let mut queue = VecDeque::new();
    let path_to = |store: &StateStore, parent: &[u32], mut v: u32| {
        let mut p = vec![store.states[v as usize].clone()];
        while parent[v as usize] != v {
            v = parent[v as usize];
            p.push(store.states[v as usize].clone());
        }
        p.reverse();
        p
    };
    for i in store.initial()? {
        if parent.len() <= i as usize {
            parent.resize(i as usize + 1, u32::MAX);
        }
        if parent[i as usize] != u32::MAX {
            continue;
        }
        parent[i as usize] = i;
        if cond.holds(&store.states[i as usize]) {
            let p = path_to(&store, &parent, i);
            return Ok((Some(p), store.states.len()));
        }
        queue.push_back(i);
    }
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        out.clear();
        sys.successors(&store.states[v as usize], allowed, &mut out);
        for s in out.drain(..) {
            let t = store.intern(s)?;
            if parent.len() <= t as usize {
                parent.resize(t as usize + 1, u32::MAX);
            }
            if parent[t as usize] != u32::MAX {
                continue;
            }
            parent[t as usize] = v;
            if cond.holds(&store.states[t as usize]) {
                let p = path_to(&store, &parent, t);
                return Ok((Some(p), store.states.len()));
            }
            queue.push_back(t);
        }
    }
    Ok((None, store.states.len()))
}

/// Is a state satisfying `cond` reachable under `mode`? A positive answer
/// carries a shortest finite witness.
pub fn check_reachable(sys: &System, cond: &Expr, mode: &FaultMode, limits: Limits) -> Result<Verdict, EngineError> {
    let allowed = sys.event_mask(mode)?;
    let c = sys.compile_condition(cond)?;
    let (path, states) = search_reachable(sys, &c, allowed, limits.state_cap)?;
    Ok(match path {
        Some(p) => Verdict { result: Outcome::Reachable, witness: Some(sys.trace(&p, None)), states },
        None => Verdict { result: Outcome::Unreachable, witness: None, states },
    })
}

/// Upper bound on assignments tried when deciding whether a node label is
/// satisfiable.
const LABEL_SEARCH_CAP: u64 = 1 << 20;

/// Automaton graph restricted to nodes with satisfiable labels.
struct LabelGraph {
    aut: Automaton,
    /// Witness assignment per node, `None` when unsatisfiable.
    sat: Vec<Option<Vec<i32>>>,
    keys: Vec<(u32, u8)>,
    index: HashMap<(u32, u8), u32>,
}

impl LabelGraph {
    fn vertex(&mut self, key: (u32, u8)) -> u32 {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.keys.push(key);
        self.index.insert(key, self.keys.len() as u32 - 1);
        self.keys.len() as u32 - 1
    }
}

impl Graph for LabelGraph {
    fn initial(&mut self) -> Result<Vec<u32>, EngineError> {
        let qs: Vec<usize> =
            (0..self.aut.nodes.len()).filter(|&q| self.aut.nodes[q].initial && self.sat[q].is_some()).collect();
        Ok(qs.into_iter().map(|q| self.vertex((q as u32, 0))).collect())
    }

    fn post(&mut self, v: u32) -> Result<Vec<u32>, EngineError> {
        let (q, c) = self.keys[v as usize];
        let c2 = self.aut.next_counter(q as usize, c as usize) as u8;
        let succ: Vec<usize> =
            self.aut.nodes[q as usize].succ.iter().copied().filter(|&q2| self.sat[q2].is_some()).collect();
        Ok(succ.into_iter().map(|q2| self.vertex((q2 as u32, c2))).collect())
    }

    fn accepting(&self, v: u32) -> bool {
        let (q, c) = self.keys[v as usize];
        self.aut.accepting(q as usize, c as usize)
    }
}

/// Finds an assignment satisfying every literal, varying only the slots the
/// literals read; the rest stay at their domain minimum.
fn satisfy(
    label: &[(usize, bool)],
    atoms: &[CExpr],
    vars: &[(String, ValueType)],
) -> Result<Option<Vec<i32>>, EngineError> {
    let mut base: Vec<i32> = vars.iter().map(|(_, t)| t.default_raw() as i32).collect();
    let mut slots = Vec::new();
    for &(a, _) in label {
        atoms[a].slots(&mut slots);
    }
    let domains: Vec<Vec<i64>> = slots.iter().map(|&s| vars[s].1.values()).collect();
    let total = domains.iter().try_fold(1u64, |acc, d| acc.checked_mul(d.len() as u64)).unwrap_or(u64::MAX);
    if total > LABEL_SEARCH_CAP {
        return Err(EngineError::AutomatonCap(total.min(usize::MAX as u64) as usize));
    }
    if domains.iter().any(|d| d.is_empty()) {
        return Ok(None);
    }
    let mut idx = vec![0usize; slots.len()];
    loop {
        for (k, &s) in slots.iter().enumerate() {
            base[s] = domains[k][idx[k]] as i32;
        }
        if label.iter().all(|&(a, p)| atoms[a].holds(&base) == p) {
            return Ok(Some(base));
        }
        let mut k = idx.len();
        loop {
            if k == 0 {
                return Ok(None);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Decides whether `f` holds on every word over `vocab`. A counterexample is
/// an ultimately periodic word violating `f`.
pub fn ltl_valid(f: &Ltl, vocab: &Vocabulary, limits: Limits) -> Result<Validity, EngineError> {
    let vars: Vec<(String, ValueType)> = vocab.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let table = VocabTable(&vars);
    let (aut, atoms) = automaton_for_negation(f, limits.automaton_cap)?;
    let atoms = atoms.iter().map(|a| compile_bool(a, &table)).collect::<Result<Vec<_>, _>>()?;
    let sat = aut.nodes.iter().map(|n| satisfy(&n.label, &atoms, &vars)).collect::<Result<Vec<_>, _>>()?;
    let mut g = LabelGraph { aut, sat, keys: Vec::new(), index: HashMap::new() };
    Ok(match ndfs(&mut g)? {
        None => Validity::Valid,
        Some((path, start)) => {
            let letters = path
                .iter()
                .map(|&v| {
                    let q = g.keys[v as usize].0 as usize;
                    let raw = g.sat[q].as_ref().expect("vertices have satisfiable labels");
                    vars.iter().zip(raw).map(|((n, t), &r)| (n.clone(), t.decode(r as i64))).collect()
                })
                .collect();
            Validity::Invalid { counterexample: WordWitness { letters, loop_start: start } }
        }
    })
}
