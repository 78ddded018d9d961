//! Stochastic activity networks built from rate-annotated error models, and
//! their Monte-Carlo simulation.
//!
//! Every error layer state becomes a place and every rate-bearing transition
//! a timed activity. Vulnerability guards and the failure condition become
//! predicates over places by enumerating the layer states they depend on.

use crate::engine::{EngineError, System};
use crate::instance::{InstanceModel, TopLevelEvent};
use crate::model::{CiaProperty, Effect, Likelihood, Trigger};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use thiserror::Error;

/// Most layer-state combinations enumerated for one predicate.
const MAX_COMBINATIONS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize, JsonSchema)]
pub enum SanError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("`{0}` has a per-demand probability, not a rate; use fault tree analysis for it")]
    ProbabilityFault(String),
    #[error("`{0}` has no rate")]
    MissingRate(String),
    #[error("condition of `{event}` cannot be expressed over error states: {reason}")]
    NotStatic { event: String, reason: String },
    #[error("condition of `{0}` depends on too many error layers")]
    TooManyLayers(String),
    #[error("mission time must be positive, got {0}")]
    MissionTime(f64),
    #[error("at least 100 trials are required, got {0}")]
    TooFewTrials(u64),
    #[error("instantaneous activities livelock at time {time} in trial {trial}")]
    Livelock { trial: u64, time: f64 },
    #[error("invalid network: {0}")]
    Invalid(String),
}

/// Boolean predicate over markings; `Marked(p)` holds when place `p` holds
/// at least one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    True,
    False,
    Marked(String),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    fn or(mut v: Vec<Predicate>) -> Predicate {
        match v.len() {
            0 => Predicate::False,
            1 => v.pop().unwrap_or(Predicate::False),
            _ => Predicate::Or(v),
        }
    }

    fn and(mut v: Vec<Predicate>) -> Predicate {
        match v.len() {
            0 => Predicate::True,
            1 => v.pop().unwrap_or(Predicate::True),
            _ => Predicate::And(v),
        }
    }

    fn negate(self) -> Predicate {
        match self {
            Predicate::True => Predicate::False,
            Predicate::False => Predicate::True,
            Predicate::Not(p) => *p,
            p => Predicate::Not(Box::new(p)),
        }
    }

    fn places<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::Marked(p) => out.push(p),
            Predicate::Not(p) => p.places(out),
            Predicate::And(v) | Predicate::Or(v) => v.iter().for_each(|p| p.places(out)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Place {
    pub name: String,
    pub initial: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimedActivity {
    pub name: String,
    /// Per hour.
    pub rate: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub enabling: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Case {
    pub probability: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InstantaneousActivity {
    pub name: String,
    pub cases: Vec<Case>,
    pub enabling: Predicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    InstantOfTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RewardVariable {
    pub name: String,
    pub predicate: Predicate,
    pub kind: RewardKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StochasticActivityNetwork {
    pub places: Vec<Place>,
    pub timed_activities: Vec<TimedActivity>,
    pub instantaneous_activities: Vec<InstantaneousActivity>,
    pub reward_variables: Vec<RewardVariable>,
}

/// Place name of an error-layer state.
fn place_name(layer: &str, state: &str) -> String {
    format!("{layer}.{state}")
}

/// (layer, state) pairs, one per layer of a combination.
type Combination = [(usize, usize)];

/// Disjunction over the combinations of `layers` states that satisfy `holds`.
fn case_split(sys: &System, layers: &[usize], holds: &dyn Fn(&Combination) -> bool) -> Option<Predicate> {
    let sizes: Vec<usize> = layers.iter().map(|&l| sys.layer_states(l).len()).collect();
    sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n).filter(|&v| v <= MAX_COMBINATIONS))?;
    let mut terms = Vec::new();
    let mut all = true;
    let mut idx = vec![0usize; layers.len()];
    loop {
        let combo: Vec<(usize, usize)> = layers.iter().copied().zip(idx.iter().copied()).collect();
        if holds(&combo) {
            let names = combo
                .iter()
                .map(|&(l, s)| Predicate::Marked(place_name(sys.layer_name(l), &sys.layer_states(l)[s])))
                .collect();
            terms.push(Predicate::and(names));
        } else {
            all = false;
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    Some(if all { Predicate::True } else { Predicate::or(terms) })
}

/// Transforms the instance into a SAN whose `system_ok` reward is the
/// negation of the failure condition.
pub fn to_san(inst: &InstanceModel, failure: &TopLevelEvent) -> Result<StochasticActivityNetwork, SanError> {
    let sys = System::from_instance(inst, "")?;
    let mut places = Vec::new();
    let mut timed = Vec::new();
    let mut cia: HashMap<CiaProperty, Vec<String>> = HashMap::new();

    let mut layer = 0;
    for leaf in inst.leaves() {
        for em in &leaf.error_models {
            let name = sys.layer_name(layer).to_string();
            let states = sys.layer_states(layer);
            let initial = sys.layer_initial(layer);
            for (i, s) in states.iter().enumerate() {
                places.push(Place { name: place_name(&name, s), initial: (i == initial) as u32 });
            }
            for group in &em.effects {
                for e in &group.effects {
                    if let Effect::CiaLoss { property } = e {
                        let p = place_name(&name, &group.state);
                        let v = cia.entry(*property).or_default();
                        if !v.contains(&p) {
                            v.push(p);
                        }
                    }
                }
            }
            for (ti, t) in em.transitions.iter().enumerate() {
                let id = leaf.event_id(t.trigger.name());
                let rate = match &t.trigger {
                    Trigger::Repair { rate: Some(r), .. } => *r,
                    Trigger::Repair { rate: None, .. } => return Err(SanError::MissingRate(id)),
                    other => match other.likelihood() {
                        Some(Likelihood::Rate(r)) => r,
                        Some(Likelihood::Probability(_)) => return Err(SanError::ProbabilityFault(id)),
                        None => return Err(SanError::MissingRate(id)),
                    },
                };
                let (src, dst, guard) = sys.layer_transition(layer, ti);
                let enabling = match guard {
                    None => Predicate::True,
                    Some(g) => {
                        let deps = sys
                            .static_layers(g)
                            .map_err(|e| SanError::NotStatic { event: id.clone(), reason: e.to_string() })?;
                        case_split(&sys, &deps, &|combo| sys.eval_with_layers(g, combo))
                            .ok_or_else(|| SanError::TooManyLayers(id.clone()))?
                    }
                };
                timed.push(TimedActivity {
                    name: id,
                    rate,
                    inputs: vec![place_name(&name, &states[src])],
                    outputs: vec![place_name(&name, &states[dst])],
                    enabling,
                });
            }
            layer += 1;
        }
    }

    let cond = sys.compile_condition(&failure.condition)?;
    let deps = sys
        .static_layers(&cond)
        .map_err(|e| SanError::NotStatic { event: failure.name.clone(), reason: e.to_string() })?;
    let failed = case_split(&sys, &deps, &|combo| sys.eval_with_layers(&cond, combo))
        .ok_or_else(|| SanError::TooManyLayers(failure.name.clone()))?;
    let mut rewards =
        vec![RewardVariable { name: "system_ok".into(), predicate: failed.negate(), kind: RewardKind::InstantOfTime }];
    for prop in CiaProperty::ALL {
        if let Some(lost) = cia.get(&prop) {
            let any = Predicate::or(lost.iter().map(|p| Predicate::Marked(p.clone())).collect());
            rewards.push(RewardVariable {
                name: format!("{}_ok", prop.keyword()),
                predicate: any.negate(),
                kind: RewardKind::InstantOfTime,
            });
        }
    }
    let san = StochasticActivityNetwork {
        places,
        timed_activities: timed,
        instantaneous_activities: Vec::new(),
        reward_variables: rewards,
    };
    san.check()?;
    Ok(san)
}

/// Predicate compiled to place indices.
#[derive(Debug, Clone)]
enum CPred {
    True,
    False,
    Marked(usize),
    Not(Box<CPred>),
    And(Vec<CPred>),
    Or(Vec<CPred>),
}

impl CPred {
    fn holds(&self, m: &[u32]) -> bool {
        match self {
            CPred::True => true,
            CPred::False => false,
            CPred::Marked(p) => m[*p] > 0,
            CPred::Not(p) => !p.holds(m),
            CPred::And(v) => v.iter().all(|p| p.holds(m)),
            CPred::Or(v) => v.iter().any(|p| p.holds(m)),
        }
    }
}

struct CActivity {
    rate: f64,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    enabling: CPred,
}

struct CInstant {
    /// (cumulative probability, inputs, outputs) per case.
    cases: Vec<(f64, Vec<usize>, Vec<usize>)>,
    inputs: Vec<usize>,
    enabling: CPred,
}

/// Index form of a network, ready for simulation.
struct Compiled {
    initial: Vec<u32>,
    timed: Vec<CActivity>,
    instant: Vec<CInstant>,
    rewards: Vec<CPred>,
}

fn enabled(inputs: &[usize], pred: &CPred, m: &[u32]) -> bool {
    inputs.iter().all(|&p| m[p] > 0) && pred.holds(m)
}

fn fire(inputs: &[usize], outputs: &[usize], m: &mut [u32]) {
    for &p in inputs {
        m[p] -= 1;
    }
    for &p in outputs {
        m[p] += 1;
    }
}

impl StochasticActivityNetwork {
    /// Number of places plus number of activities.
    pub fn size(&self) -> usize {
        self.places.len() + self.timed_activities.len() + self.instantaneous_activities.len()
    }

    pub fn check(&self) -> Result<(), SanError> {
        let names: HashSet<&str> = self.places.iter().map(|p| p.name.as_str()).collect();
        if names.len() != self.places.len() {
            return Err(SanError::Invalid("duplicate place names".into()));
        }
        let known = |p: &str| -> Result<(), SanError> {
            if names.contains(p) {
                Ok(())
            } else {
                Err(SanError::Invalid(format!("unknown place `{p}`")))
            }
        };
        let pred_ok = |pr: &Predicate| -> Result<(), SanError> {
            let mut v = Vec::new();
            pr.places(&mut v);
            v.into_iter().try_for_each(known)
        };
        for a in &self.timed_activities {
            if !(a.rate > 0.0 && a.rate.is_finite()) {
                return Err(SanError::Invalid(format!("activity `{}` has rate {}", a.name, a.rate)));
            }
            a.inputs.iter().chain(&a.outputs).try_for_each(|p| known(p))?;
            pred_ok(&a.enabling)?;
        }
        for a in &self.instantaneous_activities {
            if a.cases.is_empty() {
                return Err(SanError::Invalid(format!("activity `{}` has no cases", a.name)));
            }
            let sum: f64 = a.cases.iter().map(|c| c.probability).sum();
            if a.cases.iter().any(|c| !(c.probability > 0.0 && c.probability <= 1.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(SanError::Invalid(format!(
                    "case probabilities of `{}` must be in (0, 1] and sum to 1",
                    a.name
                )));
            }
            for c in &a.cases {
                c.inputs.iter().chain(&c.outputs).try_for_each(|p| known(p))?;
            }
            pred_ok(&a.enabling)?;
        }
        for r in &self.reward_variables {
            pred_ok(&r.predicate)?;
        }
        Ok(())
    }

    fn compile(&self) -> Result<Compiled, SanError> {
        self.check()?;
        let index: HashMap<&str, usize> = self.places.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let ids = |v: &[String]| v.iter().map(|p| index[p.as_str()]).collect::<Vec<_>>();
        fn pred(p: &Predicate, index: &HashMap<&str, usize>) -> CPred {
            match p {
                Predicate::True => CPred::True,
                Predicate::False => CPred::False,
                Predicate::Marked(n) => CPred::Marked(index[n.as_str()]),
                Predicate::Not(a) => CPred::Not(Box::new(pred(a, index))),
                Predicate::And(v) => CPred::And(v.iter().map(|a| pred(a, index)).collect()),
                Predicate::Or(v) => CPred::Or(v.iter().map(|a| pred(a, index)).collect()),
            }
        }
        Ok(Compiled {
            initial: self.places.iter().map(|p| p.initial).collect(),
            timed: self
                .timed_activities
                .iter()
                .map(|a| CActivity {
                    rate: a.rate,
                    inputs: ids(&a.inputs),
                    outputs: ids(&a.outputs),
                    enabling: pred(&a.enabling, &index),
                })
                .collect(),
            instant: self
                .instantaneous_activities
                .iter()
                .map(|a| {
                    let mut acc = 0.0;
                    let cases = a
                        .cases
                        .iter()
                        .map(|c| {
                            acc += c.probability;
                            (acc, ids(&c.inputs), ids(&c.outputs))
                        })
                        .collect();
                    // An activity is enabled when every case can fire.
                    let mut inputs: Vec<usize> = a.cases.iter().flat_map(|c| ids(&c.inputs)).collect();
                    inputs.sort_unstable();
                    inputs.dedup();
                    CInstant { cases, inputs, enabling: pred(&a.enabling, &index) }
                })
                .collect(),
            rewards: self.reward_variables.iter().map(|r| pred(&r.predicate, &index)).collect(),
        })
    }

    /// Markings reachable by firing activities in any order, ignoring time.
    pub fn reachable_markings(&self) -> Result<Vec<Vec<u32>>, SanError> {
        let c = self.compile()?;
        let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
        let mut queue = VecDeque::from([c.initial.clone()]);
        seen.insert(c.initial.clone());
        while let Some(m) = queue.pop_front() {
            let mut next = Vec::new();
            for a in &c.timed {
                if enabled(&a.inputs, &a.enabling, &m) {
                    let mut n = m.clone();
                    fire(&a.inputs, &a.outputs, &mut n);
                    next.push(n);
                }
            }
            for a in &c.instant {
                if enabled(&a.inputs, &a.enabling, &m) {
                    for (_, i, o) in &a.cases {
                        let mut n = m.clone();
                        fire(i, o, &mut n);
                        next.push(n);
                    }
                }
            }
            for n in next {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        Ok(seen.into_iter().collect())
    }
}

/// Point estimate and 95% normal-approximation interval of one reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReliabilityEstimate {
    pub reward_name: String,
    /// Hours.
    pub mission_time: f64,
    pub trials: u64,
    pub point_estimate: f64,
    pub ci95: (f64, f64),
    pub seed: u64,
}

impl ReliabilityEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.ci95.0 <= v && v <= self.ci95.1
    }
}

/// One trial up to `mission`; returns the final marking.
fn run_trial(c: &Compiled, mission: f64, seed: u64, trial: u64) -> Result<Vec<u32>, SanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut m = c.initial.clone();
    let mut t = 0.0;
    loop {
        let mut visited: HashSet<Vec<u32>> = HashSet::new();
        while let Some(a) = c.instant.iter().find(|a| enabled(&a.inputs, &a.enabling, &m)) {
            if !visited.insert(m.clone()) {
                return Err(SanError::Livelock { trial, time: t });
            }
            let u: f64 = rng.random();
            let case = a.cases.iter().find(|(cum, ..)| u < *cum).or(a.cases.last());
            if let Some((_, i, o)) = case {
                fire(i, o, &mut m);
            }
        }
        let rates: Vec<f64> =
            c.timed.iter().map(|a| if enabled(&a.inputs, &a.enabling, &m) { a.rate } else { 0.0 }).collect();
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return Ok(m);
        }
        let dt = Exp::new(total).map_err(|e| SanError::Invalid(e.to_string()))?.sample(&mut rng);
        t += dt;
        if t > mission {
            return Ok(m);
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = rates.iter().rposition(|&r| r > 0.0).unwrap_or(0);
        for (i, &r) in rates.iter().enumerate() {
            if r > 0.0 && pick < r {
                chosen = i;
                break;
            }
            pick -= r;
        }
        let a = &c.timed[chosen];
        fire(&a.inputs, &a.outputs, &mut m);
    }
}

/// Estimates every reward variable at `mission_time`. Trial `i` draws from
/// stream `i` of a generator seeded with `seed`, so results do not depend
/// on scheduling.
pub fn simulate(
    san: &StochasticActivityNetwork,
    mission_time: f64,
    trials: u64,
    seed: u64,
) -> Result<Vec<ReliabilityEstimate>, SanError> {
    if !(mission_time > 0.0 && mission_time.is_finite()) {
        return Err(SanError::MissionTime(mission_time));
    }
    if trials < 100 {
        return Err(SanError::TooFewTrials(trials));
    }
    let c = san.compile()?;
    let n = c.rewards.len();
    let counts = (0..trials)
        .into_par_iter()
        .map(|i| {
            let m = run_trial(&c, mission_time, seed, i)?;
            Ok::<_, SanError>(c.rewards.iter().map(|r| r.holds(&m) as u64).collect::<Vec<u64>>())
        })
        .try_reduce(|| vec![0u64; n], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))?;
    Ok(san
        .reward_variables
        .iter()
        .zip(counts)
        .map(|(r, k)| {
            let p = k as f64 / trials as f64;
            let half = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
            ReliabilityEstimate {
                reward_name: r.name.clone(),
                mission_time,
                trials,
                point_estimate: p,
                ci95: ((p - half).max(0.0), (p + half).min(1.0)),
                seed,
            }
        })
        .collect())
}

/// CSV rows `reward,T,trials,estimate,ci_lo,ci_hi,seed`.
pub fn estimates_to_csv(estimates: &[ReliabilityEstimate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["reward", "T", "trials", "estimate", "ci_lo", "ci_hi", "seed"]);
    for e in estimates {
        let _ = w.write_record([
            e.reward_name.clone(),
            e.mission_time.to_string(),
            e.trials.to_string(),
            e.point_estimate.to_string(),
            e.ci95.0.to_string(),
            e.ci95.1.to_string(),
            e.seed.to_string(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}
