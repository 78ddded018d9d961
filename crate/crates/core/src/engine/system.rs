use super::cexpr::{compile_as, compile_bool, CExpr, SlotTable};
use super::machine::{inject_faults, ExtendedMachine};
use super::witness::{Snapshot, Trace};
use super::{EngineError, FaultMode};
use crate::expr::{Const, Expr, ValueType};
use crate::instance::{InstanceModel, InstancePort};
use crate::model::{Direction, Effect, Trigger};
use std::collections::HashMap;

/// A joint state: one `i32` per slot followed by two words of raised-event
/// flags.
pub type State = Box<[i32]>;

#[derive(Debug, Clone)]
struct NominalTransition {
    source: i32,
    target: i32,
    guard: Option<CExpr>,
    updates: Vec<(usize, CExpr)>,
}

#[derive(Debug, Clone)]
struct Leaf {
    key: String,
    mode_slot: usize,
    states: Vec<String>,
    initial: i32,
    transitions: Vec<NominalTransition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrorKind {
    Event(u32),
    Repair,
}

#[derive(Debug, Clone)]
struct ErrorTransitionC {
    source: i32,
    target: i32,
    kind: ErrorKind,
    guard: Option<CExpr>,
}

#[derive(Debug, Clone)]
struct Layer {
    slot: usize,
    initial: i32,
    transitions: Vec<ErrorTransitionC>,
    /// Stuck-at overrides per layer state.
    effects: Vec<Vec<(usize, i32)>>,
}

/// The synchronous product of a set of extended machines with their
/// connections applied.
#[derive(Debug, Clone)]
pub struct System {
    names: HashMap<String, usize>,
    slot_names: Vec<String>,
    slot_types: Vec<ValueType>,
    /// Every visible name (ports, variables, layers) with its slot, sorted.
    visible: Vec<(String, usize)>,
    leaves: Vec<Leaf>,
    layers: Vec<Layer>,
    inputs: Vec<usize>,
    init_regs: Vec<(usize, i32)>,
    /// (observed, nominal) register pairs for every stuck-at target. The
    /// nominal copy keeps evolving while an effect masks the observed one.
    shadows: Vec<(usize, usize)>,
    events: Vec<String>,
    /// Per event: the leaf/layer path used to report local effects.
    event_layers: Vec<usize>,
}

impl SlotTable for System {
    fn lookup(&self, name: &str) -> Option<(usize, &ValueType)> {
        self.names.get(name).map(|&s| (s, &self.slot_types[s]))
    }
}

/// Resolves a leaf's own registers to their nominal copies.
struct OwnView<'a> {
    sys: &'a System,
    own: HashMap<&'a str, usize>,
}

impl SlotTable for OwnView<'_> {
    fn lookup(&self, name: &str) -> Option<(usize, &ValueType)> {
        match self.own.get(name) {
            Some(&s) => Some((s, &self.sys.slot_types[s])),
            None => self.sys.lookup(name),
        }
    }
}

fn encode(ty: &ValueType, c: &Const, what: &str) -> Result<i32, EngineError> {
    ty.encode(c).map(|v| v as i32).ok_or_else(|| EngineError::Type(format!("{c} is not a value of {ty} ({what})")))
}

impl System {
    /// Single extended machine; all of its in-ports are free inputs.
    pub fn from_machine(m: &ExtendedMachine) -> Result<System, EngineError> {
        System::build(std::slice::from_ref(m), &[], &[])
    }

    /// Joint system of the sub-tree rooted at `scope` (`""` for the whole
    /// instance). In-ports of the scope root and unconnected in-ports are
    /// free inputs.
    pub fn from_instance(inst: &InstanceModel, scope: &str) -> Result<System, EngineError> {
        let root = inst.find(scope).ok_or_else(|| EngineError::Model(format!("no component instance `{scope}`")))?;
        let mut all = Vec::new();
        collect(root, &mut all);
        let machines = all.iter().filter(|c| c.is_leaf()).map(|c| inject_faults(c)).collect::<Result<Vec<_>, _>>()?;
        let composite_ports: Vec<InstancePort> =
            all.iter().filter(|c| !c.is_leaf()).flat_map(|c| c.ports.iter().cloned()).collect();
        let conns: Vec<(String, String)> =
            all.iter().flat_map(|c| c.connections.iter()).map(|c| (c.source.clone(), c.target.clone())).collect();
        System::build(&machines, &composite_ports, &conns)
    }

    pub fn build(
        machines: &[ExtendedMachine],
        composite_ports: &[InstancePort],
        connections: &[(String, String)],
    ) -> Result<System, EngineError> {
        let mut sys = System {
            names: HashMap::new(),
            slot_names: Vec::new(),
            slot_types: Vec::new(),
            visible: Vec::new(),
            leaves: Vec::new(),
            layers: Vec::new(),
            inputs: Vec::new(),
            init_regs: Vec::new(),
            shadows: Vec::new(),
            events: Vec::new(),
            event_layers: Vec::new(),
        };
        let new_slot = |sys: &mut System, name: String, ty: ValueType, visible: bool| -> usize {
            let s = sys.slot_names.len();
            sys.slot_names.push(name.clone());
            sys.slot_types.push(ty);
            if visible {
                sys.names.insert(name, s);
            }
            s
        };

        let mut drivers: HashMap<&str, &str> = HashMap::new();
        for (s, t) in connections {
            if drivers.insert(t, s).is_some() {
                return Err(EngineError::Model(format!("`{t}` is driven by more than one connection")));
            }
        }

        // Modes.
        for m in machines {
            let key = m.mode_key();
            let ty = ValueType::Enum { labels: m.nominal.states.clone() };
            let slot = new_slot(&mut sys, format!("{key}#mode"), ty, false);
            let initial = m
                .nominal
                .states
                .iter()
                .position(|s| *s == m.nominal.initial)
                .ok_or_else(|| EngineError::Model(format!("initial state of `{key}` does not exist")))?;
            sys.leaves.push(Leaf {
                key,
                mode_slot: slot,
                states: m.nominal.states.clone(),
                initial: initial as i32,
                transitions: Vec::new(),
            });
        }
        // Registers: leaf out-ports and variables.
        for m in machines {
            for p in m.ports.iter().filter(|p| p.direction == Direction::Out) {
                if drivers.contains_key(p.global.as_str()) {
                    return Err(EngineError::Model(format!("out-port `{}` of a leaf cannot be driven", p.global)));
                }
                let init = match &p.init {
                    Some(c) => encode(&p.ty, c, &p.global)?,
                    None => p.ty.default_raw() as i32,
                };
                let s = new_slot(&mut sys, p.global.clone(), p.ty.clone(), true);
                sys.init_regs.push((s, init));
            }
            for v in &m.nominal.variables {
                let init = encode(&v.ty, &v.init, &v.name)?;
                let s = new_slot(&mut sys, v.name.clone(), v.ty.clone(), true);
                sys.init_regs.push((s, init));
            }
        }
        // Error layers.
        for m in machines {
            for (i, l) in m.layers.iter().enumerate() {
                let name = m.layer_name(i);
                let s = new_slot(&mut sys, name, l.state_type(), true);
                let initial =
                    l.states.iter().position(|x| x.name == l.initial).ok_or_else(|| {
                        EngineError::Model(format!("initial error state of `{}` does not exist", l.name))
                    })?;
                sys.layers.push(Layer {
                    slot: s,
                    initial: initial as i32,
                    transitions: Vec::new(),
                    effects: Vec::new(),
                });
            }
        }
        // Free inputs: undriven in-ports, and undriven composite out-ports.
        let leaf_ports = machines.iter().flat_map(|m| m.ports.iter().filter(|p| p.direction == Direction::In));
        let all_other: Vec<&InstancePort> = leaf_ports.chain(composite_ports.iter()).collect();
        for p in &all_other {
            if !drivers.contains_key(p.global.as_str()) {
                let s = new_slot(&mut sys, p.global.clone(), p.ty.clone(), true);
                sys.inputs.push(s);
            }
        }
        // Aliases for driven ports.
        let types: HashMap<&str, &ValueType> = machines
            .iter()
            .flat_map(|m| m.ports.iter())
            .chain(composite_ports.iter())
            .map(|p| (p.global.as_str(), &p.ty))
            .collect();
        for p in &all_other {
            if !drivers.contains_key(p.global.as_str()) {
                continue;
            }
            let mut cur = p.global.as_str();
            let mut hops = 0;
            while let Some(&d) = drivers.get(cur) {
                cur = d;
                hops += 1;
                if hops > drivers.len() {
                    return Err(EngineError::Model(format!("connection cycle through `{}`", p.global)));
                }
            }
            let slot = *sys
                .names
                .get(cur)
                .ok_or_else(|| EngineError::Model(format!("connection source `{cur}` is not a port in scope")))?;
            if types.get(cur).copied() != Some(&p.ty) {
                return Err(EngineError::Type(format!("connection `{cur}` -> `{}` joins different types", p.global)));
            }
            sys.names.insert(p.global.clone(), slot);
        }
        for (s, t) in connections {
            if !types.contains_key(s.as_str()) || !types.contains_key(t.as_str()) {
                return Err(EngineError::Model(format!("connection `{s}` -> `{t}` leaves the checked scope")));
            }
        }

        // Nominal copies of stuck-at targets.
        let mut own_views: Vec<HashMap<String, usize>> = Vec::new();
        for m in machines {
            let mut own = HashMap::new();
            for l in &m.layers {
                for group in &l.effects {
                    for e in &group.effects {
                        let Effect::StuckAt { target, .. } = e else { continue };
                        if own.contains_key(target) {
                            continue;
                        }
                        let obs = *sys.names.get(target).ok_or_else(|| EngineError::UnknownName(target.clone()))?;
                        let init = sys.init_regs.iter().find(|(s, _)| *s == obs).map(|&(_, v)| v).ok_or_else(|| {
                            EngineError::Model(format!("stuck-at target `{target}` is not a register of its component"))
                        })?;
                        let ty = sys.slot_types[obs].clone();
                        let sh = new_slot(&mut sys, format!("{target}#nominal"), ty, false);
                        sys.init_regs.push((sh, init));
                        sys.shadows.push((obs, sh));
                        own.insert(target.clone(), sh);
                    }
                }
            }
            own_views.push(own);
        }

        // Compile nominal transitions and error layers.
        let mut layer_idx = 0;
        for (li, m) in machines.iter().enumerate() {
            let view = OwnView { sys: &sys, own: own_views[li].iter().map(|(k, v)| (k.as_str(), *v)).collect() };
            let idx = |name: &str| -> Result<i32, EngineError> {
                m.nominal
                    .states
                    .iter()
                    .position(|s| s == name)
                    .map(|i| i as i32)
                    .ok_or_else(|| EngineError::Model(format!("unknown state `{name}` in `{}`", m.mode_key())))
            };
            let mut ts = Vec::new();
            for t in &m.nominal.transitions {
                let guard = t.guard.as_ref().map(|g| compile_bool(g, &view)).transpose()?;
                let mut updates = Vec::new();
                for u in &t.updates {
                    let (slot, _) = view.lookup(&u.target).ok_or_else(|| EngineError::UnknownName(u.target.clone()))?;
                    let c = compile_as(&u.value, &view.sys.slot_types[slot].clone(), &view)?;
                    updates.push((slot, c));
                }
                ts.push(NominalTransition { source: idx(&t.source)?, target: idx(&t.target)?, guard, updates });
            }
            drop(view);
            sys.leaves[li].transitions = ts;

            for l in &m.layers {
                let sidx = |name: &str| -> Result<i32, EngineError> {
                    l.states
                        .iter()
                        .position(|s| s.name == name)
                        .map(|i| i as i32)
                        .ok_or_else(|| EngineError::Model(format!("unknown error state `{name}` in `{}`", l.name)))
                };
                let mut ts = Vec::new();
                for t in &l.transitions {
                    let kind = match &t.trigger {
                        Trigger::Repair { .. } => ErrorKind::Repair,
                        other => {
                            let id = super::machine::qualify(&m.path, other.name());
                            if sys.events.contains(&id) {
                                return Err(EngineError::Model(format!("basic event `{id}` declared twice")));
                            }
                            sys.events.push(id);
                            sys.event_layers.push(layer_idx);
                            ErrorKind::Event(sys.events.len() as u32 - 1)
                        }
                    };
                    let guard = t.guard.as_ref().map(|g| compile_bool(g, &sys)).transpose()?;
                    ts.push(ErrorTransitionC { source: sidx(&t.source)?, target: sidx(&t.target)?, kind, guard });
                }
                let mut effects = vec![Vec::new(); l.states.len()];
                for group in &l.effects {
                    let st = sidx(&group.state)? as usize;
                    for e in &group.effects {
                        if let Effect::StuckAt { target, value } = e {
                            let slot =
                                *sys.names.get(target).ok_or_else(|| EngineError::UnknownName(target.clone()))?;
                            let v = encode(&sys.slot_types[slot], value, target)?;
                            effects[st].push((slot, v));
                        }
                    }
                }
                sys.layers[layer_idx].transitions = ts;
                sys.layers[layer_idx].effects = effects;
                layer_idx += 1;
            }
        }
        if sys.events.len() > 64 {
            return Err(EngineError::Model(format!(
                "{} basic events in one system; at most 64 are supported",
                sys.events.len()
            )));
        }
        let mut visible: Vec<(String, usize)> = sys.names.iter().map(|(k, v)| (k.clone(), *v)).collect();
        visible.sort();
        sys.visible = visible;
        Ok(sys)
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }

    pub fn slot_count(&self) -> usize {
        self.slot_names.len()
    }

    /// Names of the error layer that owns each basic event.
    pub fn event_layer_name(&self, event: usize) -> &str {
        &self.slot_names[self.layers[self.event_layers[event]].slot]
    }

    /// Current error state (label) of the layer owning `event` in `s`.
    pub fn event_layer_state(&self, event: usize, s: &[i32]) -> String {
        let slot = self.layers[self.event_layers[event]].slot;
        match self.slot_types[slot].decode(s[slot] as i64) {
            Const::Label(l) => l,
            other => other.to_string(),
        }
    }

    pub fn compile_condition(&self, e: &Expr) -> Result<CExpr, EngineError> {
        compile_bool(e, self)
    }

    /// Activation mask for a fault mode.
    pub fn event_mask(&self, mode: &FaultMode) -> Result<u64, EngineError> {
        Ok(match mode {
            FaultMode::AllInactive => 0,
            FaultMode::Free => {
                if self.events.len() == 64 {
                    u64::MAX
                } else {
                    (1u64 << self.events.len()) - 1
                }
            }
            FaultMode::Only(set) => {
                let mut m = 0;
                for id in set {
                    let i = self
                        .events
                        .iter()
                        .position(|e| e == id)
                        .ok_or_else(|| EngineError::UnknownEvent(id.clone()))?;
                    m |= 1 << i;
                }
                m
            }
        })
    }

    fn flags(&self, s: &[i32]) -> u64 {
        let n = self.slot_names.len();
        (s[n] as u32 as u64) | ((s[n + 1] as u32 as u64) << 32)
    }

    fn set_flags(&self, s: &mut [i32], f: u64) {
        let n = self.slot_names.len();
        s[n] = f as u32 as i32;
        s[n + 1] = (f >> 32) as u32 as i32;
    }

    /// Bit set of basic events raised so far in `s`.
    pub fn raised(&self, s: &[i32]) -> u64 {
        self.flags(s)
    }

    /// Qualified name of error layer `i`.
    pub(crate) fn layer_name(&self, i: usize) -> &str {
        &self.slot_names[self.layers[i].slot]
    }

    pub(crate) fn layer_states(&self, i: usize) -> Vec<String> {
        match &self.slot_types[self.layers[i].slot] {
            ValueType::Enum { labels } => labels.clone(),
            _ => Vec::new(),
        }
    }

    pub(crate) fn layer_initial(&self, i: usize) -> usize {
        self.layers[i].initial as usize
    }

    /// Source, target and guard of transition `t` of layer `i`, in
    /// declaration order.
    pub(crate) fn layer_transition(&self, i: usize, t: usize) -> (usize, usize, Option<&CExpr>) {
        let tr = &self.layers[i].transitions[t];
        (tr.source as usize, tr.target as usize, tr.guard.as_ref())
    }

    /// Layers whose states decide `c` when nothing else moves: `c` may read
    /// layer states, registers that no behavior updates, and stuck-at
    /// targets. Free inputs and updated registers are refused.
    pub(crate) fn static_layers(&self, c: &CExpr) -> Result<Vec<usize>, EngineError> {
        let mut slots = Vec::new();
        c.slots(&mut slots);
        let mut out = Vec::new();
        for s in slots {
            if let Some(i) = self.layers.iter().position(|l| l.slot == s) {
                out.push(i);
                continue;
            }
            let name = &self.slot_names[s];
            if self.inputs.contains(&s) {
                return Err(EngineError::Model(format!("`{name}` is a free input")));
            }
            let nominal = self.shadows.iter().find(|(o, _)| *o == s).map_or(s, |&(_, sh)| sh);
            let updated =
                self.leaves.iter().flat_map(|l| &l.transitions).flat_map(|t| &t.updates).any(|(u, _)| *u == nominal);
            if updated {
                return Err(EngineError::Model(format!("`{name}` is updated by nominal behavior")));
            }
            for (i, l) in self.layers.iter().enumerate() {
                if l.effects.iter().flatten().any(|&(t, _)| t == s) {
                    out.push(i);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Value of `c` in the initial state with the given layers moved to the
    /// given states.
    pub(crate) fn eval_with_layers(&self, c: &CExpr, states: &[(usize, usize)]) -> bool {
        let mut s = self.initial_base();
        for &(i, st) in states {
            s[self.layers[i].slot] = st as i32;
        }
        self.apply_effects(&mut s);
        c.holds(&s)
    }

    fn apply_effects(&self, s: &mut [i32]) {
        for &(obs, sh) in &self.shadows {
            s[obs] = s[sh];
        }
        for l in &self.layers {
            for &(slot, v) in &l.effects[s[l.slot] as usize] {
                s[slot] = v;
            }
        }
    }

    /// Writes every combination of free-input values into copies of `base`.
    fn with_inputs(&self, base: &[i32], out: &mut Vec<State>) {
        let domains: Vec<Vec<i64>> = self.inputs.iter().map(|&s| self.slot_types[s].values()).collect();
        let mut idx = vec![0usize; domains.len()];
        loop {
            let mut s: State = base.into();
            for (k, &slot) in self.inputs.iter().enumerate() {
                s[slot] = domains[k][idx[k]] as i32;
            }
            out.push(s);
            if !odometer(&mut idx, |k| domains[k].len()) {
                break;
            }
        }
    }

    /// Initial modes, registers and layer states, before inputs are set.
    fn initial_base(&self) -> Vec<i32> {
        let mut base = vec![0i32; self.slot_names.len() + 2];
        for l in &self.leaves {
            base[l.mode_slot] = l.initial;
        }
        for &(s, v) in &self.init_regs {
            base[s] = v;
        }
        for l in &self.layers {
            base[l.slot] = l.initial;
        }
        self.apply_effects(&mut base);
        base
    }

    pub fn initial_states(&self) -> Vec<State> {
        let base = self.initial_base();
        let mut out = Vec::new();
        self.with_inputs(&base, &mut out);
        out
    }

    /// Appends the distinct successors of `s` to `out`; only events in
    /// `allowed` may be raised.
    pub fn successors(&self, s: &[i32], allowed: u64, out: &mut Vec<State>) {
        let start = out.len();
        let raised = self.flags(s);
        let nominal: Vec<Vec<Option<usize>>> = self
            .leaves
            .iter()
            .map(|l| {
                let mode = s[l.mode_slot];
                let en: Vec<Option<usize>> = l
                    .transitions
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.source == mode && t.guard.as_ref().is_none_or(|g| g.holds(s)))
                    .map(|(i, _)| Some(i))
                    .collect();
                if en.is_empty() {
                    vec![None]
                } else {
                    en
                }
            })
            .collect();
        let errors: Vec<Vec<Option<usize>>> = self
            .layers
            .iter()
            .map(|l| {
                let cur = s[l.slot];
                let mut v = vec![None];
                for (i, t) in l.transitions.iter().enumerate() {
                    if t.source != cur {
                        continue;
                    }
                    if let ErrorKind::Event(e) = t.kind {
                        let bit = 1u64 << e;
                        if allowed & bit == 0 || raised & bit != 0 {
                            continue;
                        }
                    }
                    if t.guard.as_ref().is_none_or(|g| g.holds(s)) {
                        v.push(Some(i));
                    }
                }
                v
            })
            .collect();
        let mut ni = vec![0usize; nominal.len()];
        loop {
            let mut ei = vec![0usize; errors.len()];
            loop {
                let mut n: Vec<i32> = s.to_vec();
                for (k, l) in self.leaves.iter().enumerate() {
                    if let Some(t) = nominal[k][ni[k]] {
                        let t = &l.transitions[t];
                        n[l.mode_slot] = t.target;
                        for (slot, e) in &t.updates {
                            n[*slot] = clamp(e.eval(s), &self.slot_types[*slot]);
                        }
                    }
                }
                let mut flags = raised;
                for (k, l) in self.layers.iter().enumerate() {
                    if let Some(t) = errors[k][ei[k]] {
                        let t = &l.transitions[t];
                        n[l.slot] = t.target;
                        if let ErrorKind::Event(e) = t.kind {
                            flags |= 1 << e;
                        }
                    }
                }
                self.set_flags(&mut n, flags);
                self.apply_effects(&mut n);
                self.with_inputs(&n, out);
                if !odometer(&mut ei, |k| errors[k].len()) {
                    break;
                }
            }
            if !odometer(&mut ni, |k| nominal[k].len()) {
                break;
            }
        }
        let mut tail: Vec<State> = out.drain(start..).collect();
        tail.sort_unstable();
        tail.dedup();
        out.extend(tail);
    }

    pub fn snapshot(&self, s: &[i32], step: usize) -> Snapshot {
        let modes = self.leaves.iter().map(|l| (l.key.clone(), l.states[s[l.mode_slot] as usize].clone())).collect();
        let values =
            self.visible.iter().map(|(n, slot)| (n.clone(), self.slot_types[*slot].decode(s[*slot] as i64))).collect();
        let f = self.flags(s);
        let raised =
            self.events.iter().enumerate().filter(|(i, _)| f & (1 << i) != 0).map(|(_, e)| e.clone()).collect();
        let nominal = self
            .shadows
            .iter()
            .filter(|&&(obs, sh)| s[obs] != s[sh])
            .map(|&(obs, sh)| (self.slot_names[obs].clone(), self.slot_types[sh].decode(s[sh] as i64)))
            .collect();
        Snapshot { step, modes, values, nominal, raised }
    }

    pub fn trace(&self, states: &[State], loop_start: Option<usize>) -> Trace {
        Trace { steps: states.iter().enumerate().map(|(i, s)| self.snapshot(s, i)).collect(), loop_start }
    }

    /// Rebuilds the joint state described by a snapshot.
    pub fn state_of(&self, snap: &Snapshot) -> Result<State, EngineError> {
        let mut s = vec![0i32; self.slot_names.len() + 2];
        for l in &self.leaves {
            let m = snap
                .modes
                .get(&l.key)
                .ok_or_else(|| EngineError::Replay(format!("step {}: missing mode of `{}`", snap.step, l.key)))?;
            s[l.mode_slot] = l
                .states
                .iter()
                .position(|x| x == m)
                .ok_or_else(|| EngineError::Replay(format!("step {}: unknown mode `{m}`", snap.step)))?
                as i32;
        }
        let mut seen = vec![false; self.slot_names.len()];
        for l in &self.leaves {
            seen[l.mode_slot] = true;
        }
        for (name, slot) in &self.visible {
            let c = snap
                .values
                .get(name)
                .ok_or_else(|| EngineError::Replay(format!("step {}: missing value of `{name}`", snap.step)))?;
            let v = self.slot_types[*slot]
                .encode(c)
                .ok_or_else(|| EngineError::Replay(format!("step {}: bad value {c} for `{name}`", snap.step)))?
                as i32;
            if seen[*slot] && s[*slot] != v {
                return Err(EngineError::Replay(format!("step {}: connected ports disagree at `{name}`", snap.step)));
            }
            s[*slot] = v;
            seen[*slot] = true;
        }
        for &(obs, sh) in &self.shadows {
            s[sh] = match snap.nominal.get(&self.slot_names[obs]) {
                Some(c) => self.slot_types[sh].encode(c).ok_or_else(|| {
                    EngineError::Replay(format!(
                        "step {}: bad nominal value {c} for `{}`",
                        snap.step, self.slot_names[obs]
                    ))
                })? as i32,
                None => s[obs],
            };
        }
        let mut f = 0u64;
        for e in &snap.raised {
            let i = self
                .events
                .iter()
                .position(|x| x == e)
                .ok_or_else(|| EngineError::Replay(format!("step {}: unknown event `{e}`", snap.step)))?;
            f |= 1 << i;
        }
        self.set_flags(&mut s, f);
        Ok(s.into())
    }

    /// Checks that a trace is an execution of this system under `mode`.
    pub fn replay(&self, trace: &Trace, mode: &FaultMode) -> Result<(), EngineError> {
        let allowed = self.event_mask(mode)?;
        let states = trace.steps.iter().map(|s| self.state_of(s)).collect::<Result<Vec<_>, _>>()?;
        let Some(first) = states.first() else {
            return Err(EngineError::Replay("empty trace".into()));
        };
        if !self.initial_states().contains(first) {
            return Err(EngineError::Replay("step 0 is not an initial state".into()));
        }
        let mut succ = Vec::new();
        let check = |from: &State, to: &State, i: usize, succ: &mut Vec<State>| {
            succ.clear();
            self.successors(from, allowed, succ);
            if succ.contains(to) {
                Ok(())
            } else {
                Err(EngineError::Replay(format!("step {i} does not follow from step {}", i - 1)))
            }
        };
        for i in 1..states.len() {
            check(&states[i - 1], &states[i], i, &mut succ)?;
        }
        if let Some(l) = trace.loop_start {
            if l >= states.len() {
                return Err(EngineError::Replay(format!("loop start {l} is past the end")));
            }
            check(&states[states.len() - 1], &states[l], states.len(), &mut succ)
                .map_err(|_| EngineError::Replay(format!("the last step does not lead back to step {l}")))?;
        }
        Ok(())
    }
}

fn collect<'a>(c: &'a crate::instance::ComponentInstance, out: &mut Vec<&'a crate::instance::ComponentInstance>) {
    out.push(c);
    for ch in &c.children {
        collect(ch, out);
    }
}

/// Out-of-domain updates saturate at the domain bounds.
fn clamp(v: i64, ty: &ValueType) -> i32 {
    match ty {
        ValueType::Bool => (v != 0) as i32,
        ValueType::Int { lo, hi } => v.clamp(*lo, *hi) as i32,
        ValueType::Enum { labels } => v.clamp(0, labels.len() as i64 - 1) as i32,
    }
}

/// Advances a mixed-radix counter; false once it wraps around.
fn odometer(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < radix(k) {
            return true;
        }
        idx[k] = 0;
    }
    false
}
