use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, Span};
use crate::expr::{BinOp, Const, Expr, Ltl, Path, Quantifier, Segment, UnOp, ValueType};
use crate::model::*;
use std::collections::BTreeMap;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Default)]
pub(crate) struct FileAst {
    pub imports: Vec<(String, Span)>,
    pub model_name: Option<(String, Span)>,
    pub items: Vec<Item>,
    pub end_span: Span,
}

#[derive(Debug, Clone)]
pub(crate) enum Item {
    Block(BlockDef),
    Requirement(Requirement),
    Configuration(Configuration),
    Event(TopLevelEventDecl),
    Check(CheckDecl),
    Root(String, Span),
}

type PResult<T> = Result<T, ()>;

struct Parser<'a> {
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
    depth: usize,
}

pub(crate) fn parse_file(file: &str, text: &str) -> (FileAst, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let toks = lex(file, text, &mut diags);
    let mut p = Parser { file, toks, pos: 0, diags, depth: 0 };
    let ast = p.file_ast();
    (ast, p.diags)
}

/// Parses a standalone boolean/integer expression (e.g. a CLI condition).
pub fn parse_expr(text: &str) -> Result<Expr, Vec<Diagnostic>> {
    standalone(text, |p| p.expr())
}

/// Parses a standalone LTL formula.
pub fn parse_ltl(text: &str) -> Result<Ltl, Vec<Diagnostic>> {
    standalone(text, |p| p.ltl())
}

fn standalone<T>(text: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> Result<T, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let toks = lex("<input>", text, &mut diags);
    let mut p = Parser { file: "<input>", toks, pos: 0, diags, depth: 0 };
    let r = f(&mut p);
    if r.is_ok() && !matches!(p.peek(), Tok::Eof) {
        let t = p.peek().describe();
        p.err_here(format!("unexpected {t} after end of input"));
    }
    match r {
        Ok(v) if p.diags.is_empty() => Ok(v),
        _ => {
            if p.diags.is_empty() {
                p.err_here("invalid input");
            }
            Err(p.diags)
        }
    }
}

fn is_cmp(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&mut self, span: Span, msg: impl Into<String>) {
        if self.diags.last().is_some_and(|d| d.span == span && d.file == self.file) {
            return;
        }
        self.diags.push(Diagnostic::error(self.file, span, msg));
    }

    fn err_here(&mut self, msg: impl Into<String>) {
        let s = self.span();
        self.err(s, msg);
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<Span> {
        if self.peek() == &t {
            Ok(self.bump().span)
        } else {
            let found = self.peek().describe();
            self.err_here(format!("expected {}, found {found}", t.describe()));
            Err(())
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            let found = self.peek().describe();
            self.err_here(format!("expected `{kw}`, found {found}"));
            Err(())
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            other => {
                self.err_here(format!("expected identifier, found {}", other.describe()));
                Err(())
            }
        }
    }

    fn name(&mut self) -> PResult<String> {
        self.ident().map(|(s, _)| s)
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => {
                self.err_here(format!("expected integer, found {}", other.describe()));
                Err(())
            }
        }
    }

    fn number(&mut self) -> PResult<f64> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v as f64)
            }
            Tok::Float(x) => {
                self.bump();
                Ok(x)
            }
            other => {
                self.err_here(format!("expected number, found {}", other.describe()));
                Err(())
            }
        }
    }

    /// Skips to the end of the current item: past a `;` or up to a `}` at
    /// the current nesting level.
    fn recover(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        return;
                    }
                }
                Tok::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                _ => {}
            }
            self.bump();
        }
    }

    /// Parses `{ member* }`, recovering per member and reporting an unclosed
    /// brace at its opening position.
    fn braced<S>(
        &mut self,
        what: &str,
        state: &mut S,
        mut member: impl FnMut(&mut Self, &mut S) -> PResult<()>,
    ) -> PResult<()> {
        let open = self.expect(Tok::LBrace)?;
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(());
                }
                Tok::Eof => {
                    self.diags.push(Diagnostic::error(self.file, open, format!("unclosed `{{` of {what}")));
                    return Err(());
                }
                _ => {
                    if member(self, state).is_err() {
                        self.recover();
                    }
                }
            }
        }
    }

    fn file_ast(&mut self) -> FileAst {
        let mut ast = FileAst::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "import" => {
                    self.bump();
                    let sp = self.span();
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            ast.imports.push((s, sp));
                            if self.expect(Tok::Semi).is_err() {
                                self.recover();
                            }
                        }
                        other => {
                            self.err_here(format!("expected import path string, found {}", other.describe()));
                            self.recover();
                        }
                    }
                }
                Tok::Ident(kw) if kw == "model" => {
                    let kw_span = self.bump().span;
                    let Ok((name, span)) = self.ident() else {
                        self.recover();
                        continue;
                    };
                    if ast.model_name.is_some() {
                        self.err(kw_span, "duplicate model declaration");
                    }
                    ast.model_name = Some((name, span));
                    let mut items = Vec::new();
                    let _ = self.braced("model", &mut items, |p, items| {
                        let it = p.item()?;
                        items.push(it);
                        Ok(())
                    });
                    ast.items.extend(items);
                }
                Tok::RBrace => {
                    self.err_here("unmatched `}`");
                    self.bump();
                }
                _ => match self.item() {
                    Ok(it) => ast.items.push(it),
                    Err(()) => {
                        self.recover();
                        if matches!(self.peek(), Tok::RBrace) {
                            self.bump();
                        }
                    }
                },
            }
        }
        ast.end_span = self.span();
        ast
    }

    fn item(&mut self) -> PResult<Item> {
        let (kw, span) = match self.peek().clone() {
            Tok::Ident(s) => (s, self.span()),
            other => {
                self.err_here(format!("expected a declaration, found {}", other.describe()));
                return Err(());
            }
        };
        match kw.as_str() {
            "block" => self.block().map(Item::Block),
            "requirement" => self.requirement().map(Item::Requirement),
            "configuration" => self.configuration().map(Item::Configuration),
            "event" => {
                self.bump();
                let name = self.name()?;
                self.expect(Tok::Colon)?;
                let condition = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Item::Event(TopLevelEventDecl { name, condition }))
            }
            "check" => self.check().map(Item::Check),
            "root" => {
                self.bump();
                let (name, sp) = self.ident()?;
                self.eat(&Tok::Semi);
                Ok(Item::Root(name, sp))
            }
            _ => {
                self.err(span, format!("unknown declaration `{kw}`"));
                Err(())
            }
        }
    }

    fn block(&mut self) -> PResult<BlockDef> {
        self.expect_kw("block")?;
        let name = self.name()?;
        let mut b = BlockDef { name: name.clone(), ..Default::default() };
        let mut behavior_seen = false;
        self.braced(&format!("block `{name}`"), &mut b, |p, b| p.member(b, &mut behavior_seen))?;
        Ok(b)
    }

    fn member(&mut self, b: &mut BlockDef, behavior_seen: &mut bool) -> PResult<()> {
        let span = self.span();
        let kw = match self.peek().clone() {
            Tok::Ident(s) => s,
            other => {
                self.err_here(format!("expected a block member, found {}", other.describe()));
                return Err(());
            }
        };
        match kw.as_str() {
            "param" => {
                self.bump();
                let name = self.name()?;
                let bounds = if self.eat(&Tok::Colon) {
                    let lo = self.int()?;
                    self.expect(Tok::DotDot)?;
                    let hi = self.int()?;
                    Some((lo, hi))
                } else {
                    None
                };
                let default = if self.eat(&Tok::Assign) { Some(self.int()?) } else { None };
                self.expect(Tok::Semi)?;
                b.parameters.push(Parameter { name, bounds, default });
            }
            "in" | "out" => {
                self.bump();
                let direction = if kw == "in" { Direction::In } else { Direction::Out };
                let name = self.name()?;
                self.expect(Tok::Colon)?;
                let ty = self.value_type()?;
                let multiplicity = if self.eat(&Tok::LBracket) {
                    let e = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    Some(e)
                } else {
                    None
                };
                let init = if self.eat(&Tok::Assign) { Some(self.constant()?) } else { None };
                self.expect(Tok::Semi)?;
                b.ports.push(PortDef { name, direction, ty, multiplicity, init });
            }
            "sub" => {
                self.bump();
                let name = self.name()?;
                self.expect(Tok::Colon)?;
                let block = self.name()?;
                let mut bindings = Vec::new();
                if self.eat(&Tok::LParen) {
                    loop {
                        let pn = self.name()?;
                        self.expect(Tok::Assign)?;
                        let e = self.expr()?;
                        bindings.push((pn, e));
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                let multiplicity = if self.eat(&Tok::LBracket) {
                    let e = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    Some(e)
                } else {
                    None
                };
                self.expect(Tok::Semi)?;
                b.subcomponents.push(SubcomponentDef { name, block, bindings, multiplicity });
            }
            "connect" => {
                self.bump();
                let forall = if self.is_kw("all") && matches!(self.peek_at(2), Tok::Colon) {
                    self.bump();
                    let v = self.name()?;
                    self.expect(Tok::Colon)?;
                    Some(v)
                } else {
                    None
                };
                let source = self.port_ref()?;
                self.expect(Tok::Arrow)?;
                let target = self.port_ref()?;
                self.expect(Tok::Semi)?;
                b.connections.push(Connection { forall, source, target });
            }
            "allocate" => {
                self.bump();
                let node = self.name()?;
                self.expect(Tok::Semi)?;
                if b.allocation.is_some() {
                    self.err(span, "duplicate allocation");
                    return Err(());
                }
                b.allocation = Some(node);
            }
            "contract" => {
                self.bump();
                let name = self.name()?;
                let mut c = Contract { name, assumption: Ltl::True, guarantee: Ltl::True };
                self.braced("contract", &mut c, |p, c| {
                    if p.eat_kw("assume") {
                        p.expect(Tok::Colon)?;
                        c.assumption = p.ltl()?;
                    } else if p.eat_kw("guarantee") {
                        p.expect(Tok::Colon)?;
                        c.guarantee = p.ltl()?;
                    } else {
                        let t = p.peek().describe();
                        p.err_here(format!("expected `assume` or `guarantee`, found {t}"));
                        return Err(());
                    }
                    p.expect(Tok::Semi)?;
                    Ok(())
                })?;
                b.contracts.push(c);
            }
            "behavior" => {
                self.bump();
                if *behavior_seen {
                    self.err(span, "duplicate behavior section");
                }
                *behavior_seen = true;
                let mut sm = StateMachine {
                    variables: Vec::new(),
                    states: Vec::new(),
                    initial: String::new(),
                    transitions: Vec::new(),
                };
                self.braced("behavior", &mut sm, |p, sm| p.behavior_member(sm))?;
                if sm.initial.is_empty() {
                    if let Some(first) = sm.states.first() {
                        sm.initial = first.clone();
                    }
                }
                b.behavior = Some(sm);
            }
            "error_model" => {
                self.bump();
                let name = self.name()?;
                let mut em = ErrorModel {
                    name,
                    states: Vec::new(),
                    initial: String::new(),
                    transitions: Vec::new(),
                    effects: Vec::new(),
                };
                self.braced("error model", &mut em, |p, em| p.error_member(em))?;
                if em.initial.is_empty() {
                    if let Some(first) = em.states.first() {
                        em.initial = first.name.clone();
                    }
                }
                b.error_models.push(em);
            }
            _ => {
                self.err(span, format!("unknown block member `{kw}`"));
                return Err(());
            }
        }
        Ok(())
    }

    fn behavior_member(&mut self, sm: &mut StateMachine) -> PResult<()> {
        if self.eat_kw("var") {
            let name = self.name()?;
            self.expect(Tok::Colon)?;
            let ty = self.value_type()?;
            self.expect(Tok::Assign)?;
            let init = self.constant()?;
            self.expect(Tok::Semi)?;
            sm.variables.push(VarDecl { name, ty, init });
        } else if self.eat_kw("states") {
            loop {
                sm.states.push(self.name()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
        } else if self.eat_kw("initial") {
            sm.initial = self.name()?;
            self.expect(Tok::Semi)?;
        } else if self.eat_kw("transition") {
            let source = self.name()?;
            self.expect(Tok::Arrow)?;
            let target = self.name()?;
            let guard = if self.eat_kw("when") { Some(self.expr()?) } else { None };
            let mut updates = Vec::new();
            if self.eat_kw("do") {
                self.braced("update list", &mut updates, |p, ups| {
                    let target = p.name()?;
                    p.expect(Tok::Assign)?;
                    let value = p.expr()?;
                    p.expect(Tok::Semi)?;
                    ups.push(Assignment { target, value });
                    Ok(())
                })?;
            }
            self.expect(Tok::Semi)?;
            sm.transitions.push(Transition { source, target, guard, updates });
        } else {
            let t = self.peek().describe();
            self.err_here(format!("expected `var`, `states`, `initial` or `transition`, found {t}"));
            return Err(());
        }
        Ok(())
    }

    fn likelihood(&mut self) -> PResult<Option<Likelihood>> {
        if self.eat_kw("probability") {
            Ok(Some(Likelihood::Probability(self.number()?)))
        } else if self.eat_kw("rate") {
            Ok(Some(Likelihood::Rate(self.number()?)))
        } else {
            Ok(None)
        }
    }

    fn error_member(&mut self, em: &mut ErrorModel) -> PResult<()> {
        let span = self.span();
        let kw = match self.peek().clone() {
            Tok::Ident(s) => s,
            other => {
                self.err_here(format!("expected an error-model member, found {}", other.describe()));
                return Err(());
            }
        };
        self.bump();
        match kw.as_str() {
            "normal" | "error" | "failure" => {
                let kind = match kw.as_str() {
                    "normal" => StateKind::Normal,
                    "error" => StateKind::Error,
                    _ => StateKind::Failure,
                };
                loop {
                    let name = self.name()?;
                    em.states.push(ErrorState { name, kind });
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            "initial" => em.initial = self.name()?,
            "fault" | "threat" | "repair" => {
                let name = self.name()?;
                let agent = if kw == "threat" {
                    self.expect_kw("by")?;
                    Some(self.name()?)
                } else {
                    None
                };
                self.expect(Tok::Colon)?;
                let source = self.name()?;
                self.expect(Tok::Arrow)?;
                let target = self.name()?;
                let likelihood = self.likelihood()?;
                let guard = if self.eat_kw("when") { Some(self.expr()?) } else { None };
                let trigger = match kw.as_str() {
                    "fault" => match likelihood {
                        Some(l) => Trigger::InternalFault { name, likelihood: l },
                        None => {
                            self.err(span, "fault needs `probability P` or `rate R`");
                            return Err(());
                        }
                    },
                    "threat" => Trigger::Threat { name, agent: agent.unwrap_or_default(), likelihood },
                    _ => match likelihood {
                        None => Trigger::Repair { name, rate: None },
                        Some(Likelihood::Rate(r)) => Trigger::Repair { name, rate: Some(r) },
                        Some(Likelihood::Probability(_)) => {
                            self.err(span, "repairs take a `rate`, not a probability");
                            return Err(());
                        }
                    },
                };
                em.transitions.push(ErrorTransition { source, target, trigger, guard });
            }
            "effect" => {
                let state = self.name()?;
                self.expect(Tok::Colon)?;
                let effect = if self.eat_kw("loss") {
                    let (k, sp) = self.ident()?;
                    let property = match k.as_str() {
                        "confidentiality" => CiaProperty::Confidentiality,
                        "integrity" => CiaProperty::Integrity,
                        "availability" => CiaProperty::Availability,
                        _ => {
                            self.err(sp, format!("unknown CIA property `{k}`"));
                            return Err(());
                        }
                    };
                    Effect::CiaLoss { property }
                } else {
                    let target = self.name()?;
                    self.expect_kw("stuck_at")?;
                    let value = self.constant()?;
                    Effect::StuckAt { target, value }
                };
                match em.effects.iter_mut().find(|g| g.state == state) {
                    Some(g) => g.effects.push(effect),
                    None => em.effects.push(StateEffects { state, effects: vec![effect] }),
                }
            }
            _ => {
                self.err(span, format!("unknown error-model member `{kw}`"));
                return Err(());
            }
        }
        self.expect(Tok::Semi)?;
        Ok(())
    }

    fn requirement(&mut self) -> PResult<Requirement> {
        self.expect_kw("requirement")?;
        let id = self.name()?;
        let text = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            other => {
                self.err_here(format!("expected requirement text string, found {}", other.describe()));
                return Err(());
            }
        };
        let mut r = Requirement { id, text, satisfied_by: Vec::new(), parent: None };
        if matches!(self.peek(), Tok::LBrace) {
            self.braced("requirement", &mut r, |p, r| {
                if p.eat_kw("satisfied_by") {
                    loop {
                        let mut name = p.name()?;
                        if p.eat(&Tok::Dot) {
                            name = format!("{name}.{}", p.name()?);
                        }
                        r.satisfied_by.push(name);
                        if !p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                } else if p.eat_kw("parent") {
                    r.parent = Some(p.name()?);
                } else {
                    let t = p.peek().describe();
                    p.err_here(format!("expected `satisfied_by` or `parent`, found {t}"));
                    return Err(());
                }
                p.expect(Tok::Semi)?;
                Ok(())
            })?;
        }
        self.eat(&Tok::Semi);
        Ok(r)
    }

    fn configuration(&mut self) -> PResult<Configuration> {
        self.expect_kw("configuration")?;
        let name = self.name()?;
        let mut bindings = BTreeMap::new();
        self.braced("configuration", &mut bindings, |p, bindings| {
            let (param, sp) = p.ident()?;
            p.expect(Tok::Assign)?;
            let v = p.int()?;
            p.expect(Tok::Semi)?;
            if bindings.insert(param.clone(), v).is_some() {
                p.err(sp, format!("parameter `{param}` bound twice"));
            }
            Ok(())
        })?;
        Ok(Configuration { name, bindings })
    }

    fn fault_mode(&mut self) -> PResult<FaultModeDecl> {
        if self.eat_kw("faults") {
            let (k, sp) = self.ident()?;
            match k.as_str() {
                "free" => Ok(FaultModeDecl::Free),
                "inactive" => Ok(FaultModeDecl::Inactive),
                _ => {
                    self.err(sp, "expected `free` or `inactive`");
                    Err(())
                }
            }
        } else {
            Ok(FaultModeDecl::Inactive)
        }
    }

    fn component_path(&mut self) -> PResult<String> {
        if matches!(self.peek(), Tok::Semi) {
            return Ok(String::new());
        }
        let p = self.path()?;
        Ok(p.to_string())
    }

    fn check(&mut self) -> PResult<CheckDecl> {
        self.expect_kw("check")?;
        let name = self.name()?;
        self.expect(Tok::Colon)?;
        let (kw, sp) = self.ident()?;
        let kind = match kw.as_str() {
            "refinement" => CheckKind::Refinement { component: self.component_path()? },
            "verify" => CheckKind::LeafVerification { component: self.component_path()? },
            "ltl" => {
                let formula = self.ltl()?;
                CheckKind::Ltl { formula, faults: self.fault_mode()? }
            }
            "fta" => {
                let event = self.name()?;
                self.expect_kw("max_order")?;
                let max_order = self.int()?.max(0) as usize;
                self.expect(Tok::Le)?;
                let threshold = self.number()?;
                CheckKind::FtaTopProbability { event, max_order, threshold }
            }
            "reliability" => {
                let event = self.name()?;
                self.expect(Tok::Ge)?;
                let threshold = self.number()?;
                self.expect_kw("at")?;
                let mission_time = self.number()?;
                self.expect_kw("trials")?;
                let trials = self.int()?.max(0) as u64;
                CheckKind::Reliability { event, threshold, mission_time, trials }
            }
            "reachable" | "unreachable" => {
                let condition = self.expr()?;
                CheckKind::Reachability { condition, faults: self.fault_mode()?, expect_reachable: kw == "reachable" }
            }
            _ => {
                self.err(sp, format!("unknown check kind `{kw}`"));
                return Err(());
            }
        };
        self.expect(Tok::Semi)?;
        Ok(CheckDecl { name, kind })
    }

    fn value_type(&mut self) -> PResult<ValueType> {
        if self.eat_kw("bool") {
            return Ok(ValueType::Bool);
        }
        if self.eat(&Tok::LBrace) {
            let mut labels = Vec::new();
            loop {
                labels.push(self.name()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
            return Ok(ValueType::Enum { labels });
        }
        if matches!(self.peek(), Tok::Int(_) | Tok::Minus) {
            let lo = self.int()?;
            self.expect(Tok::DotDot)?;
            let hi = self.int()?;
            return Ok(ValueType::Int { lo, hi });
        }
        let t = self.peek().describe();
        self.err_here(format!("expected a type (`bool`, `lo..hi` or `{{labels}}`), found {t}"));
        Err(())
    }

    fn constant(&mut self) -> PResult<Const> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Const::Bool(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Const::Bool(false))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Const::Label(s))
            }
            Tok::Int(_) | Tok::Minus => Ok(Const::Int(self.int()?)),
            other => {
                self.err_here(format!("expected a constant, found {}", other.describe()));
                Err(())
            }
        }
    }

    fn port_ref(&mut self) -> PResult<PortRef> {
        let first = self.name()?;
        let first_idx = self.opt_index()?;
        if self.eat(&Tok::Dot) {
            let port = self.name()?;
            let port_index = self.opt_index()?;
            Ok(PortRef { sub: Some(first), sub_index: first_idx, port, port_index })
        } else {
            Ok(PortRef { sub: None, sub_index: None, port: first, port_index: first_idx })
        }
    }

    fn opt_index(&mut self) -> PResult<Option<Expr>> {
        if self.eat(&Tok::LBracket) {
            let e = self.expr()?;
            self.expect(Tok::RBracket)?;
            Ok(Some(e))
        } else {
            Ok(None)
        }
    }

    fn path(&mut self) -> PResult<Path> {
        let mut segs = Vec::new();
        loop {
            let name = self.name()?;
            let index = self.opt_index()?.map(Box::new);
            segs.push(Segment { name, index });
            if !(matches!(self.peek(), Tok::Dot) && matches!(self.peek_at(1), Tok::Ident(_))) {
                break;
            }
            self.bump();
        }
        Ok(Path(segs))
    }

    fn enter(&mut self) -> PResult<()> {
        if self.depth >= MAX_DEPTH {
            self.err_here("expression nested too deeply");
            return Err(());
        }
        self.depth += 1;
        Ok(())
    }

    // ---- expressions -------------------------------------------------------

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.expr_implies();
        self.depth -= 1;
        r
    }

    fn expr_implies(&mut self) -> PResult<Expr> {
        let l = self.expr_or()?;
        if self.eat(&Tok::Arrow) {
            let r = self.expr()?;
            return Ok(Expr::bin(BinOp::Implies, l, r));
        }
        Ok(l)
    }

    fn expr_or(&mut self) -> PResult<Expr> {
        let mut l = self.expr_and()?;
        while self.eat(&Tok::OrOr) {
            let r = self.expr_and()?;
            l = Expr::bin(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn expr_and(&mut self) -> PResult<Expr> {
        let mut l = self.expr_not()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.expr_not()?;
            l = Expr::bin(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn expr_not(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Bang) {
            self.enter()?;
            let e = self.expr_not();
            self.depth -= 1;
            return Ok(Expr::not(e?));
        }
        self.expr_cmp(None)
    }

    /// Comparison level. `first` is an already-parsed leftmost primary.
    fn expr_cmp(&mut self, first: Option<Expr>) -> PResult<Expr> {
        let l = self.expr_add(first)?;
        if let Some(op) = is_cmp(self.peek()) {
            self.bump();
            let r = self.expr_add(None)?;
            return Ok(Expr::bin(op, l, r));
        }
        Ok(l)
    }

    fn expr_add(&mut self, first: Option<Expr>) -> PResult<Expr> {
        let mut l = self.expr_mul(first)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let r = self.expr_mul(None)?;
            l = Expr::bin(op, l, r);
        }
        Ok(l)
    }

    fn expr_mul(&mut self, first: Option<Expr>) -> PResult<Expr> {
        let mut l = match first {
            Some(e) => e,
            None => self.expr_unary()?,
        };
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let r = self.expr_unary()?;
            l = Expr::bin(op, l, r);
        }
        Ok(l)
    }

    fn expr_unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            if let Tok::Int(v) = *self.peek() {
                self.bump();
                return Ok(Expr::Int(-v));
            }
            self.enter()?;
            let e = self.expr_unary();
            self.depth -= 1;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e?)));
        }
        self.expr_primary()
    }

    fn expr_primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(s) if (s == "forall" || s == "exists") && matches!(self.peek_at(1), Tok::LParen) => {
                self.bump();
                self.bump();
                let var = self.name()?;
                self.expect(Tok::Lt)?;
                let bound = self.expr_add(None)?;
                self.expect(Tok::Colon)?;
                let body = self.expr()?;
                self.expect(Tok::RParen)?;
                let kind = if s == "forall" { Quantifier::Forall } else { Quantifier::Exists };
                Ok(Expr::Quant { kind, var, bound: Box::new(bound), body: Box::new(body) })
            }
            Tok::Ident(_) => Ok(Expr::Ref(self.path()?)),
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => {
                self.err_here(format!("expected an expression, found {}", other.describe()));
                Err(())
            }
        }
    }

    // ---- LTL ---------------------------------------------------------------

    pub(crate) fn ltl(&mut self) -> PResult<Ltl> {
        self.enter()?;
        let r = self.ltl_implies();
        self.depth -= 1;
        r
    }

    fn ltl_implies(&mut self) -> PResult<Ltl> {
        let l = self.ltl_or()?;
        if self.eat(&Tok::Arrow) {
            let r = self.ltl()?;
            return Ok(Ltl::implies(l, r));
        }
        Ok(l)
    }

    fn ltl_or(&mut self) -> PResult<Ltl> {
        let mut l = self.ltl_and()?;
        while self.eat(&Tok::OrOr) {
            let r = self.ltl_and()?;
            l = Ltl::or(l, r);
        }
        Ok(l)
    }

    fn ltl_and(&mut self) -> PResult<Ltl> {
        let mut l = self.ltl_until()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.ltl_until()?;
            l = Ltl::and(l, r);
        }
        Ok(l)
    }

    fn ltl_until(&mut self) -> PResult<Ltl> {
        let l = self.ltl_unary()?;
        if self.is_kw("U") || self.is_kw("R") {
            let until = self.is_kw("U");
            self.bump();
            self.enter()?;
            let r = self.ltl_until();
            self.depth -= 1;
            let r = r?;
            return Ok(if until { Ltl::until(l, r) } else { Ltl::release(l, r) });
        }
        Ok(l)
    }

    fn ltl_unary(&mut self) -> PResult<Ltl> {
        let op = match self.peek() {
            Tok::Bang => Some('!'),
            Tok::Ident(s) if s == "G" || s == "F" || s == "X" => s.chars().next(),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            self.enter()?;
            let a = self.ltl_unary();
            self.depth -= 1;
            let a = a?;
            return Ok(match op {
                '!' => Ltl::not(a),
                'G' => Ltl::globally(a),
                'F' => Ltl::finally(a),
                _ => Ltl::next(a),
            });
        }
        self.ltl_primary()
    }

    fn continues_expr(&self) -> bool {
        is_cmp(self.peek()).is_some() || matches!(self.peek(), Tok::Plus | Tok::Minus | Tok::Star | Tok::Slash)
    }

    fn ltl_primary(&mut self) -> PResult<Ltl> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" || s == "false" => {
                let is_true = s == "true";
                if matches!(self.peek_at(1), t if is_cmp(t).is_some()) {
                    return Ok(Ltl::Atom(self.expr_cmp(None)?));
                }
                self.bump();
                Ok(if is_true { Ltl::True } else { Ltl::False })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.ltl()?;
                self.expect(Tok::RParen)?;
                if self.continues_expr() {
                    if let Ltl::Atom(e) = inner {
                        return Ok(Ltl::Atom(self.expr_cmp(Some(e))?));
                    }
                    self.err_here("arithmetic or comparison applied to a temporal formula");
                    return Err(());
                }
                Ok(inner)
            }
            _ => Ok(Ltl::Atom(self.expr_cmp(None)?)),
        }
    }
}
