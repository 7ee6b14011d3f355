//! Deterministic finite-domain constraint solving.
//!
//! Instances are relational structures over the same signature as the
//! template; a solution is a homomorphism. The engine keeps domains as
//! 64-bit masks (template domains are capped at 64 elements), enforces
//! arc consistency — binary constraints via per-value support masks,
//! higher arities via tuple scans — and branches with the
//! minimum-remaining-values rule, indices and values ascending, so runs
//! are reproducible. An optional root split distributes the first branch
//! over worker threads without changing the reported order.

use std::collections::{btree_map, BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::identities::IdentitySystem;
use crate::structures::{Relation, RelStructure};
use crate::{Error, Result};

/// What `solve` should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Stop at the first solution (in deterministic search order).
    First,
    /// Collect every solution.
    All,
    /// Count solutions without materializing them.
    Count,
}

/// Solver output, tagged by mode; solutions map variable labels to
/// template element labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Solutions {
    First(Option<BTreeMap<String, String>>),
    All(Vec<BTreeMap<String, String>>),
    Count(u64),
}

impl Solutions {
    /// The number of solutions found (for `First`, 0 or 1).
    pub fn count(&self) -> u64 {
        match self {
            Solutions::First(s) => s.is_some() as u64,
            Solutions::All(v) => v.len() as u64,
            Solutions::Count(n) => *n,
        }
    }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Binary {
    x: usize,
    y: usize,
    /// sup_xy[a] = mask of y-values compatible with x = a.
    sup_xy: Vec<u64>,
    /// sup_yx[b] = mask of x-values compatible with y = b.
    sup_yx: Vec<u64>,
}

#[derive(Clone)]
struct Nary {
    scope: Vec<usize>,
    tuples: Arc<Vec<Vec<u8>>>,
}

/// A compiled constraint network. Internal to the crate: the public entry
/// points are [`solve`] and the witness search in [`crate::identities`].
#[derive(Clone)]
pub(crate) struct Engine {
    dom_size: usize,
    domains: Vec<u64>,
    binaries: Vec<Binary>,
    naries: Vec<Nary>,
    /// watchers[var] = constraint ids (binaries first, then naries).
    watchers: Vec<Vec<u32>>,
    /// Set when a pin or unary restriction already wiped a domain.
    trivially_empty: bool,
}

/// Search control returned by the solution callback.
enum Flow {
    Continue,
    Stop,
}

impl Engine {
    pub(crate) fn new(n_vars: usize, dom_size: usize) -> Engine {
        assert!(dom_size <= 64, "engine domains are capped at 64 values");
        let full = if dom_size == 64 {
            u64::MAX
        } else {
            (1u64 << dom_size) - 1
        };
        Engine {
            dom_size,
            domains: vec![full; n_vars],
            binaries: Vec::new(),
            naries: Vec::new(),
            watchers: vec![Vec::new(); n_vars],
            trivially_empty: dom_size == 0 && n_vars > 0,
        }
    }

    /// Intersects a variable's domain with a mask.
    pub(crate) fn restrict(&mut self, var: usize, mask: u64) {
        self.domains[var] &= mask;
        if self.domains[var] == 0 {
            self.trivially_empty = true;
        }
    }

    /// Pins a variable to a single value.
    pub(crate) fn pin(&mut self, var: usize, value: u8) {
        self.restrict(var, 1u64 << value);
    }

    /// Adds a binary constraint given the allowed value pairs.
    pub(crate) fn add_binary_pairs(&mut self, x: usize, y: usize, allowed: &[(u8, u8)]) {
        debug_assert_ne!(x, y);
        let mut sup_xy = vec![0u64; self.dom_size];
        let mut sup_yx = vec![0u64; self.dom_size];
        for &(a, b) in allowed {
            sup_xy[a as usize] |= 1u64 << b;
            sup_yx[b as usize] |= 1u64 << a;
        }
        let id = self.binaries.len() as u32;
        self.watchers[x].push(id);
        self.watchers[y].push(id);
        self.binaries.push(Binary { x, y, sup_xy, sup_yx });
    }

    /// Adds a general constraint over distinct variables with an explicit
    /// list of allowed tuples.
    pub(crate) fn add_nary(&mut self, scope: Vec<usize>, tuples: Arc<Vec<Vec<u8>>>) {
        debug_assert!(scope.len() >= 3, "use binary/unary forms for small scopes");
        debug_assert!(
            scope.iter().collect::<BTreeSet<_>>().len() == scope.len(),
            "n-ary scopes must not repeat variables"
        );
        let id = (self.binaries.len() + self.naries.len()) as u32;
        for &v in &scope {
            self.watchers[v].push(id);
        }
        self.naries.push(Nary { scope, tuples });
    }

    /// Enforces arc consistency from the given seed constraints; returns
    /// false when some domain empties.
    fn propagate(&mut self, seed: impl Iterator<Item = u32>) -> bool {
        let n_bin = self.binaries.len();
        let total = n_bin + self.naries.len();
        let mut in_queue = vec![false; total];
        let mut queue: VecDeque<u32> = VecDeque::new();
        for c in seed {
            if !in_queue[c as usize] {
                in_queue[c as usize] = true;
                queue.push_back(c);
            }
        }
        while let Some(c) = queue.pop_front() {
            in_queue[c as usize] = false;
            let mut changed_vars: Vec<usize> = Vec::new();
            if (c as usize) < n_bin {
                let b = &self.binaries[c as usize];
                let (x, y) = (b.x, b.y);
                let mut ymask = 0u64;
                let mut dx = self.domains[x];
                while dx != 0 {
                    let a = dx.trailing_zeros() as usize;
                    dx &= dx - 1;
                    ymask |= b.sup_xy[a];
                }
                let new_y = self.domains[y] & ymask;
                if new_y != self.domains[y] {
                    self.domains[y] = new_y;
                    if new_y == 0 {
                        return false;
                    }
                    changed_vars.push(y);
                }
                let mut xmask = 0u64;
                let mut dy = self.domains[y];
                while dy != 0 {
                    let v = dy.trailing_zeros() as usize;
                    dy &= dy - 1;
                    xmask |= b.sup_yx[v];
                }
                let new_x = self.domains[x] & xmask;
                if new_x != self.domains[x] {
                    self.domains[x] = new_x;
                    if new_x == 0 {
                        return false;
                    }
                    changed_vars.push(x);
                }
            } else {
                let nc = &self.naries[c as usize - n_bin];
                let mut masks = vec![0u64; nc.scope.len()];
                'tuples: for t in nc.tuples.iter() {
                    for (i, &v) in nc.scope.iter().enumerate() {
                        if self.domains[v] & (1u64 << t[i]) == 0 {
                            continue 'tuples;
                        }
                    }
                    for (i, &val) in t.iter().enumerate() {
                        masks[i] |= 1u64 << val;
                    }
                }
                for (i, &v) in nc.scope.iter().enumerate() {
                    let new = self.domains[v] & masks[i];
                    if new != self.domains[v] {
                        self.domains[v] = new;
                        if new == 0 {
                            return false;
                        }
                        changed_vars.push(v);
                    }
                }
            }
            for v in changed_vars {
                for &w in &self.watchers[v] {
                    if w != c && !in_queue[w as usize] {
                        in_queue[w as usize] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        true
    }

    /// Minimum-remaining-values variable choice; ties break to the smallest
    /// index. Returns None when every domain is a singleton.
    fn pick_branch_var(&self) -> Option<usize> {
        let mut best: Option<(u32, usize)> = None;
        for (v, &d) in self.domains.iter().enumerate() {
            let size = d.count_ones();
            if size >= 2 && best.map_or(true, |(s, _)| size < s) {
                best = Some((size, v));
                if size == 2 {
                    break;
                }
            }
        }
        best.map(|(_, v)| v)
    }

    fn dfs(&mut self, on_solution: &mut dyn FnMut(&[u64]) -> Flow) -> Flow {
        let Some(var) = self.pick_branch_var() else {
            return on_solution(&self.domains);
        };
        let dom = self.domains[var];
        let seed = self.watchers[var].clone();
        let mut bit = dom;
        while bit != 0 {
            let v = bit.trailing_zeros();
            bit &= bit - 1;
            let saved = self.domains.clone();
            self.domains[var] = 1u64 << v;
            if self.propagate(seed.iter().copied())
                && matches!(self.dfs(on_solution), Flow::Stop)
            {
                return Flow::Stop;
            }
            self.domains = saved;
        }
        Flow::Continue
    }

    /// Runs the search. `jobs > 1` splits the first branch variable's
    /// values across threads; results are merged in value order, so the
    /// outcome is identical to the sequential run.
    pub(crate) fn run(&mut self, mode: Mode, jobs: usize) -> EngineOutcome {
        if self.trivially_empty {
            return match mode {
                Mode::First => EngineOutcome::First(None),
                Mode::All => EngineOutcome::All(Vec::new()),
                Mode::Count => EngineOutcome::Count(0),
            };
        }
        let all_constraints = 0..(self.binaries.len() + self.naries.len()) as u32;
        if !self.propagate(all_constraints) {
            return match mode {
                Mode::First => EngineOutcome::First(None),
                Mode::All => EngineOutcome::All(Vec::new()),
                Mode::Count => EngineOutcome::Count(0),
            };
        }
        let branch = self.pick_branch_var();
        if jobs > 1 && branch.is_some() {
            let var = branch.unwrap();
            let values: Vec<u32> = {
                let mut v = Vec::new();
                let mut d = self.domains[var];
                while d != 0 {
                    v.push(d.trailing_zeros());
                    d &= d - 1;
                }
                v
            };
            // One sub-engine per value, solved on a bounded thread pool.
            let results: Vec<EngineOutcome> = run_parallel(
                values
                    .iter()
                    .map(|&v| {
                        let mut sub = self.clone();
                        sub.domains[var] = 1u64 << v;
                        sub
                    })
                    .collect(),
                var,
                mode,
                jobs,
            );
            return merge_outcomes(results, mode);
        }
        self.run_sequential(mode)
    }

    fn run_sequential(&mut self, mode: Mode) -> EngineOutcome {
        match mode {
            Mode::First => {
                let mut found: Option<Vec<u8>> = None;
                self.dfs(&mut |doms| {
                    found = Some(extract(doms));
                    Flow::Stop
                });
                EngineOutcome::First(found)
            }
            Mode::All => {
                let mut all: Vec<Vec<u8>> = Vec::new();
                self.dfs(&mut |doms| {
                    all.push(extract(doms));
                    Flow::Continue
                });
                EngineOutcome::All(all)
            }
            Mode::Count => {
                let mut n = 0u64;
                self.dfs(&mut |_| {
                    n += 1;
                    Flow::Continue
                });
                EngineOutcome::Count(n)
            }
        }
    }
}

/// Raw engine results: assignments as value vectors indexed by variable.
pub(crate) enum EngineOutcome {
    First(Option<Vec<u8>>),
    All(Vec<Vec<u8>>),
    Count(u64),
}

fn extract(domains: &[u64]) -> Vec<u8> {
    domains
        .iter()
        .map(|d| {
            debug_assert_eq!(d.count_ones(), 1);
            d.trailing_zeros() as u8
        })
        .collect()
}

/// Solves one sub-engine per branch value on at most `jobs` threads,
/// propagating the pinned branch variable first. Result order follows the
/// input order regardless of scheduling.
fn run_parallel(
    mut subs: Vec<Engine>,
    branch_var: usize,
    mode: Mode,
    jobs: usize,
) -> Vec<EngineOutcome> {
    let n = subs.len();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<EngineOutcome>> = Vec::new();
    slots.resize_with(n, || None);
    let slot_cells: Vec<std::sync::Mutex<Option<EngineOutcome>>> =
        slots.into_iter().map(std::sync::Mutex::new).collect();
    let subs_cells: Vec<std::sync::Mutex<Option<Engine>>> =
        subs.drain(..).map(|e| std::sync::Mutex::new(Some(e))).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let mut engine = subs_cells[i].lock().unwrap().take().unwrap();
                let outcome = if engine.propagate(engine.watchers[branch_var].clone().into_iter())
                {
                    engine.run_sequential(mode)
                } else {
                    match mode {
                        Mode::First => EngineOutcome::First(None),
                        Mode::All => EngineOutcome::All(Vec::new()),
                        Mode::Count => EngineOutcome::Count(0),
                    }
                };
                *slot_cells[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slot_cells
        .into_iter()
        .map(|c| c.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

fn merge_outcomes(results: Vec<EngineOutcome>, mode: Mode) -> EngineOutcome {
    match mode {
        Mode::First => EngineOutcome::First(results.into_iter().find_map(|r| match r {
            EngineOutcome::First(s) => s,
            _ => unreachable!(),
        })),
        Mode::All => EngineOutcome::All(
            results
                .into_iter()
                .flat_map(|r| match r {
                    EngineOutcome::All(v) => v,
                    _ => unreachable!(),
                })
                .collect(),
        ),
        Mode::Count => EngineOutcome::Count(
            results
                .iter()
                .map(|r| match r {
                    EngineOutcome::Count(n) => *n,
                    _ => unreachable!(),
                })
                .sum(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Public solve over relational structures
// ---------------------------------------------------------------------------

/// Compiles an instance/template pair into an [`Engine`], applying a
/// precoloring. Full template relations are skipped (they constrain
/// nothing); scopes with repeated variables are filtered accordingly.
pub(crate) fn compile(
    instance: &RelStructure,
    template: &RelStructure,
    pre: &BTreeMap<String, String>,
) -> Result<Engine> {
    let dom = template.domain().len();
    if dom > 64 {
        return Err(Error::TooLarge(format!(
            "template domains are limited to 64 elements, got {dom}"
        )));
    }
    let n_vars = instance.domain().len();
    let mut engine = Engine::new(n_vars, dom);

    for (var, value) in pre {
        let Some(v) = instance.element_index(var) else {
            return Err(Error::Incompatible(format!(
                "precoloring mentions unknown instance element {var:?}"
            )));
        };
        let Some(x) = template.element_index(value) else {
            return Err(Error::Incompatible(format!(
                "precoloring uses unknown template element {value:?}"
            )));
        };
        engine.pin(v as usize, x);
    }

    let mut seen: BTreeSet<(&str, &Vec<u8>)> = BTreeSet::new();
    let mut shared: BTreeMap<(String, Vec<usize>), Arc<Vec<Vec<u8>>>> = BTreeMap::new();
    for (name, rel) in instance.relations() {
        let Some(trel) = template.relation(name) else {
            return Err(Error::Incompatible(format!(
                "instance relation {name:?} is missing from the template"
            )));
        };
        if trel.arity != rel.arity {
            return Err(Error::Incompatible(format!(
                "relation {name:?} has arity {} in the instance but {} in the template",
                rel.arity, trel.arity
            )));
        }
        if dom > 0 && trel.tuples.len() == dom.pow(rel.arity as u32) {
            continue; // full relation: vacuous
        }
        for scope_tuple in &rel.tuples {
            if !seen.insert((name.as_str(), scope_tuple)) {
                continue;
            }
            add_constraint(&mut engine, name, scope_tuple, trel, &mut shared);
        }
    }
    Ok(engine)
}

/// Adds one instance tuple as a constraint, reducing repeated variables.
fn add_constraint(
    engine: &mut Engine,
    name: &str,
    scope_tuple: &[u8],
    trel: &Relation,
    shared: &mut BTreeMap<(String, Vec<usize>), Arc<Vec<Vec<u8>>>>,
) {
    // Positions of the first occurrence of each distinct variable.
    let mut distinct: Vec<usize> = Vec::new(); // positions kept
    let mut repeat_of: Vec<Option<usize>> = Vec::new(); // position -> earlier position
    for (i, v) in scope_tuple.iter().enumerate() {
        match scope_tuple[..i].iter().position(|w| w == v) {
            Some(j) => repeat_of.push(Some(j)),
            None => {
                distinct.push(i);
                repeat_of.push(None);
            }
        }
    }
    let project = |t: &Vec<u8>| -> Option<Vec<u8>> {
        for (i, r) in repeat_of.iter().enumerate() {
            if let Some(j) = r {
                if t[i] != t[*j] {
                    return None;
                }
            }
        }
        Some(distinct.iter().map(|&i| t[i]).collect())
    };
    match distinct.len() {
        0 => unreachable!("relations have positive arity"),
        1 => {
            let var = scope_tuple[distinct[0]] as usize;
            let mut mask = 0u64;
            for t in &trel.tuples {
                if let Some(p) = project(t) {
                    mask |= 1u64 << p[0];
                }
            }
            engine.restrict(var, mask);
        }
        2 => {
            let (x, y) = (
                scope_tuple[distinct[0]] as usize,
                scope_tuple[distinct[1]] as usize,
            );
            let pairs: Vec<(u8, u8)> = trel
                .tuples
                .iter()
                .filter_map(|t| project(t).map(|p| (p[0], p[1])))
                .collect();
            engine.add_binary_pairs(x, y, &pairs);
        }
        _ => {
            let scope: Vec<usize> = distinct.iter().map(|&i| scope_tuple[i] as usize).collect();
            let key = (name.to_string(), distinct.clone());
            let tuples = shared
                .entry(key)
                .or_insert_with(|| {
                    Arc::new(trel.tuples.iter().filter_map(project).collect::<Vec<_>>())
                })
                .clone();
            engine.add_nary(scope, tuples);
        }
    }
}

/// Finds homomorphisms from `instance` to `template` extending the partial
/// map `pre`. See [`Mode`] for what is returned.
pub fn solve(
    instance: &RelStructure,
    template: &RelStructure,
    pre: &BTreeMap<String, String>,
    mode: Mode,
) -> Result<Solutions> {
    solve_jobs(instance, template, pre, mode, 1)
}

/// [`solve`] with a worker-thread count for the root split.
pub fn solve_jobs(
    instance: &RelStructure,
    template: &RelStructure,
    pre: &BTreeMap<String, String>,
    mode: Mode,
    jobs: usize,
) -> Result<Solutions> {
    let mut engine = compile(instance, template, pre)?;
    let outcome = engine.run(mode, jobs.max(1));
    let to_map = |assignment: &Vec<u8>| -> BTreeMap<String, String> {
        assignment
            .iter()
            .enumerate()
            .map(|(v, &x)| {
                (
                    instance.domain()[v].clone(),
                    template.domain()[x as usize].clone(),
                )
            })
            .collect()
    };
    Ok(match outcome {
        EngineOutcome::First(s) => Solutions::First(s.as_ref().map(to_map)),
        EngineOutcome::All(mut v) => {
            v.sort();
            v.dedup();
            Solutions::All(v.iter().map(to_map).collect())
        }
        EngineOutcome::Count(n) => Solutions::Count(n),
    })
}

// ---------------------------------------------------------------------------
// pp-formulas
// ---------------------------------------------------------------------------

/// Primitive-positive formulas: existentially quantified conjunctions of
/// relation atoms and equalities, plus the constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PpFormula {
    True,
    False,
    /// `(atom NAME x1 x2 ...)`
    Atom { relation: String, args: Vec<String> },
    /// `(eq x y)`
    Eq(String, String),
    /// `(and f1 f2 ...)`
    And(Vec<PpFormula>),
    /// `(exists x1 [x2 ...] f)`
    Exists(Vec<String>, Box<PpFormula>),
}

/// Parses the s-expression surface syntax, e.g.
/// `(exists y (and (atom NOT x y) (atom 3OR x y y)))`.
pub fn parse_pp(text: &str) -> Result<PpFormula> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let f = parse_expr(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::Parse(format!(
            "trailing input after formula: {:?}",
            tokens[pos]
        )));
    }
    Ok(f)
}

fn tokenize(text: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    if tokens.is_empty() {
        return Err(Error::Parse("empty formula".into()));
    }
    Ok(tokens)
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<PpFormula> {
    let Some(tok) = tokens.get(*pos) else {
        return Err(Error::Parse("unexpected end of formula".into()));
    };
    if tok != "(" {
        *pos += 1;
        return match tok.as_str() {
            "true" => Ok(PpFormula::True),
            "false" => Ok(PpFormula::False),
            other => Err(Error::Parse(format!(
                "expected a formula, found {other:?}"
            ))),
        };
    }
    *pos += 1; // consume '('
    let Some(head) = tokens.get(*pos) else {
        return Err(Error::Parse("unexpected end after '('".into()));
    };
    let head = head.clone();
    *pos += 1;
    let formula = match head.as_str() {
        "atom" => {
            let mut parts = Vec::new();
            while tokens.get(*pos).map(|t| t != ")").unwrap_or(false) {
                parts.push(tokens[*pos].clone());
                *pos += 1;
            }
            if parts.is_empty() {
                return Err(Error::Parse("atom needs a relation name".into()));
            }
            let relation = parts.remove(0);
            if parts.is_empty() {
                return Err(Error::Parse(format!(
                    "atom {relation:?} needs at least one argument"
                )));
            }
            PpFormula::Atom {
                relation,
                args: parts,
            }
        }
        "eq" | "=" => {
            let mut parts = Vec::new();
            while tokens.get(*pos).map(|t| t != ")").unwrap_or(false) {
                parts.push(tokens[*pos].clone());
                *pos += 1;
            }
            if parts.len() != 2 {
                return Err(Error::Parse("eq takes exactly two variables".into()));
            }
            PpFormula::Eq(parts[0].clone(), parts[1].clone())
        }
        "and" => {
            let mut sub = Vec::new();
            while tokens.get(*pos).map(|t| t != ")").unwrap_or(false) {
                sub.push(parse_expr(tokens, pos)?);
            }
            PpFormula::And(sub)
        }
        "exists" => {
            let mut vars = Vec::new();
            while tokens
                .get(*pos)
                .map(|t| t != ")" && t != "(" && t != "true" && t != "false")
                .unwrap_or(false)
            {
                vars.push(tokens[*pos].clone());
                *pos += 1;
            }
            if vars.is_empty() {
                return Err(Error::Parse("exists needs at least one variable".into()));
            }
            let body = parse_expr(tokens, pos)?;
            PpFormula::Exists(vars, Box::new(body))
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown formula head {other:?}"
            )))
        }
    };
    match tokens.get(*pos) {
        Some(t) if t == ")" => {
            *pos += 1;
            Ok(formula)
        }
        _ => Err(Error::Parse(format!("missing ')' after {head:?}"))),
    }
}

/// Flattened core of a formula after renaming bound variables apart:
/// atoms plus equalities, or trivially false.
struct Flattened {
    atoms: Vec<(String, Vec<String>)>,
    eqs: Vec<(String, String)>,
    is_false: bool,
    /// All variables in order of first appearance (free ones first).
    vars: Vec<String>,
}

fn flatten(
    formula: &PpFormula,
    scope: &BTreeMap<String, String>,
    fresh: &mut usize,
    out: &mut Flattened,
) -> Result<()> {
    match formula {
        PpFormula::True => Ok(()),
        PpFormula::False => {
            out.is_false = true;
            Ok(())
        }
        PpFormula::Atom { relation, args } => {
            let mut named = Vec::with_capacity(args.len());
            for a in args {
                let Some(n) = scope.get(a) else {
                    return Err(Error::Parse(format!(
                        "variable {a:?} is neither free nor bound"
                    )));
                };
                if !out.vars.contains(n) {
                    out.vars.push(n.clone());
                }
                named.push(n.clone());
            }
            out.atoms.push((relation.clone(), named));
            Ok(())
        }
        PpFormula::Eq(a, b) => {
            for v in [a, b] {
                let Some(n) = scope.get(v) else {
                    return Err(Error::Parse(format!(
                        "variable {v:?} is neither free nor bound"
                    )));
                };
                if !out.vars.contains(n) {
                    out.vars.push(n.clone());
                }
            }
            out.eqs.push((scope[a].clone(), scope[b].clone()));
            Ok(())
        }
        PpFormula::And(subs) => {
            for s in subs {
                flatten(s, scope, fresh, out)?;
            }
            Ok(())
        }
        PpFormula::Exists(vars, body) => {
            let mut inner = scope.clone();
            for v in vars {
                let name = format!("?b{}", *fresh);
                *fresh += 1;
                inner.insert(v.clone(), name);
            }
            flatten(body, &inner, fresh, out)
        }
    }
}

/// Evaluates a pp-formula over a template: the relation it defines on the
/// given free variables, as sorted label tuples.
pub fn eval_pp_formula(
    formula: &PpFormula,
    free: &[String],
    template: &RelStructure,
) -> Result<Vec<Vec<String>>> {
    if free.iter().collect::<BTreeSet<_>>().len() != free.len() {
        return Err(Error::Parse("free variable listed twice".into()));
    }
    let scope: BTreeMap<String, String> = free.iter().map(|v| (v.clone(), v.clone())).collect();
    let mut flat = Flattened {
        atoms: Vec::new(),
        eqs: Vec::new(),
        is_false: false,
        vars: free.to_vec(),
    };
    let mut fresh = 0;
    flatten(formula, &scope, &mut fresh, &mut flat)?;
    if flat.is_false {
        return Ok(Vec::new());
    }

    // Merge equality classes; each variable maps to a representative.
    let var_id: BTreeMap<&str, usize> = flat
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..flat.vars.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for (a, b) in &flat.eqs {
        let (ra, rb) = (
            find(&mut parent, var_id[a.as_str()]),
            find(&mut parent, var_id[b.as_str()]),
        );
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let rep: Vec<usize> = (0..flat.vars.len())
        .map(|i| find(&mut parent, i))
        .collect();
    let class_names: Vec<String> = {
        let mut seen = BTreeSet::new();
        let mut names = Vec::new();
        for &r in &rep {
            if seen.insert(r) {
                names.push(format!("?v{r}"));
            }
        }
        names
    };
    let class_name = |v: usize| format!("?v{}", rep[v]);

    let mut grouped: BTreeMap<String, (usize, Vec<Vec<String>>)> = BTreeMap::new();
    for (relname, args) in &flat.atoms {
        let Some(trel) = template.relation(relname) else {
            return Err(Error::Incompatible(format!(
                "formula uses unknown relation {relname:?}"
            )));
        };
        if trel.arity != args.len() {
            return Err(Error::Incompatible(format!(
                "atom {relname:?} has {} arguments but the relation has arity {}",
                args.len(),
                trel.arity
            )));
        }
        let tuple: Vec<String> = args.iter().map(|a| class_name(var_id[a.as_str()])).collect();
        let entry = grouped
            .entry(relname.clone())
            .or_insert_with(|| (trel.arity, Vec::new()));
        entry.1.push(tuple);
    }
    let instance = RelStructure::new(
        class_names,
        grouped
            .into_iter()
            .map(|(name, (arity, tuples))| (name, arity, tuples))
            .collect(),
    )?;

    let solutions = match solve(&instance, template, &BTreeMap::new(), Mode::All)? {
        Solutions::All(v) => v,
        _ => unreachable!(),
    };
    let mut rows: BTreeSet<Vec<String>> = BTreeSet::new();
    for sol in solutions {
        rows.insert(
            free.iter()
                .map(|f| sol[&class_name(var_id[f.as_str()])].clone())
                .collect(),
        );
    }
    Ok(rows.into_iter().collect())
}

/// Replaces every atom of the named relation by a defining pp-formula with
/// the given parameter list, renaming the definition's bound variables
/// apart so no capture can occur.
pub fn pp_substitute(
    formula: &PpFormula,
    name: &str,
    params: &[String],
    body: &PpFormula,
) -> Result<PpFormula> {
    if params.iter().collect::<BTreeSet<_>>().len() != params.len() {
        return Err(Error::Parse("substitution parameters must be distinct".into()));
    }
    check_free_vars_within(body, &params.iter().cloned().collect::<BTreeSet<_>>())?;
    let mut fresh = 0usize;
    substitute_rec(formula, name, params, body, &mut fresh)
}

fn check_free_vars_within(body: &PpFormula, allowed: &BTreeSet<String>) -> Result<()> {
    fn walk(f: &PpFormula, bound: &BTreeSet<String>, allowed: &BTreeSet<String>) -> Result<()> {
        match f {
            PpFormula::True | PpFormula::False => Ok(()),
            PpFormula::Atom { args, .. } => {
                for a in args {
                    if !bound.contains(a) && !allowed.contains(a) {
                        return Err(Error::Parse(format!(
                            "definition uses {a:?} outside its parameters"
                        )));
                    }
                }
                Ok(())
            }
            PpFormula::Eq(a, b) => {
                for v in [a, b] {
                    if !bound.contains(v) && !allowed.contains(v) {
                        return Err(Error::Parse(format!(
                            "definition uses {v:?} outside its parameters"
                        )));
                    }
                }
                Ok(())
            }
            PpFormula::And(subs) => subs.iter().try_for_each(|s| walk(s, bound, allowed)),
            PpFormula::Exists(vars, inner) => {
                let mut b2 = bound.clone();
                b2.extend(vars.iter().cloned());
                walk(inner, &b2, allowed)
            }
        }
    }
    walk(body, &BTreeSet::new(), allowed)
}

fn substitute_rec(
    formula: &PpFormula,
    name: &str,
    params: &[String],
    body: &PpFormula,
    fresh: &mut usize,
) -> Result<PpFormula> {
    Ok(match formula {
        PpFormula::True => PpFormula::True,
        PpFormula::False => PpFormula::False,
        PpFormula::Eq(a, b) => PpFormula::Eq(a.clone(), b.clone()),
        PpFormula::Atom { relation, args } if relation == name => {
            if args.len() != params.len() {
                return Err(Error::Incompatible(format!(
                    "atom {name:?} has {} arguments but the definition takes {}",
                    args.len(),
                    params.len()
                )));
            }
            let mapping: BTreeMap<&str, &str> = params
                .iter()
                .zip(args.iter())
                .map(|(p, a)| (p.as_str(), a.as_str()))
                .collect();
            instantiate(body, &mapping, fresh)
        }
        PpFormula::Atom { relation, args } => PpFormula::Atom {
            relation: relation.clone(),
            args: args.clone(),
        },
        PpFormula::And(subs) => PpFormula::And(
            subs.iter()
                .map(|s| substitute_rec(s, name, params, body, fresh))
                .collect::<Result<Vec<_>>>()?,
        ),
        PpFormula::Exists(vars, inner) => PpFormula::Exists(
            vars.clone(),
            Box::new(substitute_rec(inner, name, params, body, fresh)?),
        ),
    })
}

/// Instantiates a definition body: parameters map to argument variables and
/// bound variables get fresh names.
fn instantiate(
    body: &PpFormula,
    mapping: &BTreeMap<&str, &str>,
    fresh: &mut usize,
) -> PpFormula {
    match body {
        PpFormula::True => PpFormula::True,
        PpFormula::False => PpFormula::False,
        PpFormula::Atom { relation, args } => PpFormula::Atom {
            relation: relation.clone(),
            args: args
                .iter()
                .map(|a| mapping.get(a.as_str()).unwrap_or(&a.as_str()).to_string())
                .collect(),
        },
        PpFormula::Eq(a, b) => PpFormula::Eq(
            mapping.get(a.as_str()).unwrap_or(&a.as_str()).to_string(),
            mapping.get(b.as_str()).unwrap_or(&b.as_str()).to_string(),
        ),
        PpFormula::And(subs) => {
            PpFormula::And(subs.iter().map(|s| instantiate(s, mapping, fresh)).collect())
        }
        PpFormula::Exists(vars, inner) => {
            let mut mapping2: BTreeMap<&str, &str> = mapping.clone();
            let renamed: Vec<String> = vars
                .iter()
                .map(|_| {
                    let n = format!("?s{}", *fresh);
                    *fresh += 1;
                    n
                })
                .collect();
            // The fresh names live as long as this call; rebuild the body
            // with a map borrowing from `renamed`.
            for (v, r) in vars.iter().zip(renamed.iter()) {
                mapping2.insert(v.as_str(), r.as_str());
            }
            let new_inner = instantiate(inner, &mapping2, fresh);
            PpFormula::Exists(renamed, Box::new(new_inner))
        }
    }
}

// ---------------------------------------------------------------------------
// Indicator instances
// ---------------------------------------------------------------------------

/// Builds the indicator instance of an identity system over a template.
///
/// Variables are the equivalence classes of arity-tuples over the template
/// domain, merged whenever some identity forces two tuples to take equal
/// values; each template relation contributes its componentwise power.
/// Returns the instance together with the idempotence pins (diagonal
/// classes mapped to their element), empty when the system is not
/// idempotent. Homomorphisms extending the pins are exactly the witness
/// tables. Errors when the materialized instance would exceed the
/// documented caps (255 classes, two million tuples per relation).
pub fn indicator_instance(
    template: &RelStructure,
    system: &IdentitySystem,
) -> Result<(RelStructure, BTreeMap<String, String>)> {
    let n = template.domain().len();
    let k = system.arity;
    if n == 0 {
        return Err(Error::InvalidStructure(
            "indicator instances need a nonempty domain".into(),
        ));
    }
    let tuple_count = (n as u64).checked_pow(k as u32).ok_or_else(|| {
        Error::TooLarge("indicator tuple space overflows".into())
    })?;
    if tuple_count > 1u64 << 20 {
        return Err(Error::TooLarge(format!(
            "indicator instance over {n}^{k} tuples is too large to materialize"
        )));
    }
    let classes = merge_identity_classes(n, system)?;

    let class_count = classes.class_reps.len();
    if class_count > 255 {
        return Err(Error::TooLarge(format!(
            "indicator instance has {class_count} variables; \
             materialized instances are limited to 255"
        )));
    }

    // Class labels: the lexicographically least member tuple.
    let labels: Vec<String> = classes
        .class_reps
        .iter()
        .map(|&rep| tuple_label(&index_to_tuple(rep, n, k), template))
        .collect();
    let mut sorted_labels = labels.clone();
    sorted_labels.sort_by(|a, b| crate::complex::shortlex(a, b));
    let label_pos: BTreeMap<&str, u8> = sorted_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u8))
        .collect();
    let class_to_elem: Vec<u8> = (0..class_count)
        .map(|c| label_pos[labels[c].as_str()])
        .collect();

    let mut relations: BTreeMap<String, Relation> = BTreeMap::new();
    for (name, rel) in template.relations() {
        let m = rel.tuples.len() as u64;
        let size = m.checked_pow(k as u32);
        if size.map_or(true, |s| s > 2_000_000) {
            return Err(Error::TooLarge(format!(
                "indicator relation {name:?} would need {m}^{k} tuples"
            )));
        }
        let tuples_vec: Vec<&Vec<u8>> = rel.tuples.iter().collect();
        let mut out: BTreeSet<Vec<u8>> = BTreeSet::new();
        let mut choice = vec![0usize; k];
        if !tuples_vec.is_empty() {
            loop {
                let mut inst_tuple = Vec::with_capacity(rel.arity);
                for c in 0..rel.arity {
                    let mut idx = 0usize;
                    for &t in choice.iter() {
                        idx = idx * n + tuples_vec[t][c] as usize;
                    }
                    inst_tuple.push(class_to_elem[classes.class_of[idx] as usize]);
                }
                out.insert(inst_tuple);
                let mut i = k;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    choice[i] += 1;
                    if choice[i] < tuples_vec.len() {
                        break;
                    }
                    choice[i] = 0;
                }
                if choice.iter().all(|&x| x == 0) {
                    break;
                }
            }
        }
        relations.insert(
            name.clone(),
            Relation {
                arity: rel.arity,
                tuples: out,
            },
        );
    }
    let instance = RelStructure::from_parts(sorted_labels, relations);

    let mut pins = BTreeMap::new();
    if system.idempotent {
        for b in 0..n {
            let diag: Vec<u8> = vec![b as u8; k];
            let idx = tuple_to_index(&diag, n);
            let class = classes.class_of[idx] as usize;
            pins.insert(
                labels[class].clone(),
                template.domain()[b].clone(),
            );
        }
    }
    Ok((instance, pins))
}

/// Union-find closure of the identity-forced identifications on arity
/// tuples over a domain of size `n`.
pub(crate) struct TupleClasses {
    /// class_of[tuple index] = class id (0-based, dense).
    pub class_of: Vec<u32>,
    /// class id -> least member tuple index.
    pub class_reps: Vec<usize>,
}

pub(crate) fn merge_identity_classes(n: usize, system: &IdentitySystem) -> Result<TupleClasses> {
    let k = system.arity;
    let total = n.pow(k as u32);
    let mut parent: Vec<u32> = (0..total as u32).collect();
    fn find(parent: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }
    for identity in &system.identities {
        let m = system.var_count;
        let assignments = (n as u64).checked_pow(m as u32).ok_or_else(|| {
            Error::TooLarge("identity variable space overflows".into())
        })?;
        if assignments > 1u64 << 22 {
            return Err(Error::TooLarge(
                "identity has too many variable assignments to close over".into(),
            ));
        }
        let mut assign = vec![0u8; m];
        loop {
            let left: Vec<u8> = identity.left.iter().map(|&v| assign[v as usize]).collect();
            let right: Vec<u8> = identity.right.iter().map(|&v| assign[v as usize]).collect();
            let (a, b) = (
                find(&mut parent, tuple_to_index(&left, n) as u32),
                find(&mut parent, tuple_to_index(&right, n) as u32),
            );
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
            let mut i = m;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                assign[i] += 1;
                if (assign[i] as usize) < n {
                    break;
                }
                assign[i] = 0;
            }
            if assign.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    let mut class_ids: BTreeMap<u32, u32> = BTreeMap::new();
    let mut class_reps: Vec<usize> = Vec::new();
    let mut class_of = vec![0u32; total];
    for idx in 0..total {
        let root = find(&mut parent, idx as u32);
        let id = *class_ids.entry(root).or_insert_with(|| {
            class_reps.push(root as usize);
            (class_reps.len() - 1) as u32
        });
        class_of[idx] = id;
    }
    Ok(TupleClasses {
        class_of,
        class_reps,
    })
}

pub(crate) fn tuple_to_index(tuple: &[u8], n: usize) -> usize {
    tuple.iter().fold(0, |acc, &x| acc * n + x as usize)
}

pub(crate) fn index_to_tuple(mut idx: usize, n: usize, k: usize) -> Vec<u8> {
    let mut t = vec![0u8; k];
    for i in (0..k).rev() {
        t[i] = (idx % n) as u8;
        idx /= n;
    }
    t
}

/// Renders a tuple of template elements as `(a,b,...)`.
pub(crate) fn tuple_label(tuple: &[u8], template: &RelStructure) -> String {
    let parts: Vec<&str> = tuple.iter().map(|&i| template.label(i)).collect();
    format!("({})", parts.join(","))
}

/// Convenience for tests and examples: evaluate with an entry API that
/// avoids exposing [`btree_map`] plumbing.
pub fn precoloring<S: Into<String>>(pairs: Vec<(S, S)>) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for (k, v) in pairs {
        match m.entry(k.into()) {
            btree_map::Entry::Vacant(e) => {
                e.insert(v.into());
            }
            btree_map::Entry::Occupied(_) => {}
        }
    }
    m
}
