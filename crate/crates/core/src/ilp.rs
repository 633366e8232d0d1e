//! Exact solver for small binary integer programs.
//!
//! Programs have 0/1 variables, an integer linear objective and integer linear
//! constraints. [`solve`] runs a depth-first branch and bound with bound
//! propagation; [`brute_force`] enumerates every assignment and serves as the
//! reference. Both explore assignments in the same fixed order (variables in
//! declaration order, 1 before 0 when maximizing, 0 before 1 when minimizing)
//! and only replace the incumbent on strict improvement, so on programs with
//! several optima they agree on the assignment, not just the objective.

use std::fmt::{self, Write as _};

use thiserror::Error;

/// Default upper bound on the number of variables [`solve`] accepts.
pub const DEFAULT_MAX_VARS: usize = 256;
/// Upper bound on the number of variables [`brute_force`] accepts.
pub const BRUTE_FORCE_MAX_VARS: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IlpError {
    #[error(
        "program has {vars} variables, limit is {limit}; decompose the instance \
         (e.g. per connected component) or raise the limit"
    )]
    TooManyVariables { vars: usize, limit: usize },
    #[error("constraint references undeclared variable {0}")]
    UnknownVariable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    /// Distinct variables with nonzero coefficients, sorted by variable.
    pub terms: Vec<(Var, i64)>,
    pub cmp: Comparator,
    pub rhs: i64,
}

impl Constraint {
    fn holds(&self, assignment: &[bool]) -> bool {
        let lhs: i64 = self
            .terms
            .iter()
            .filter(|(v, _)| assignment[v.0])
            .map(|(_, a)| a)
            .sum();
        match self.cmp {
            Comparator::Le => lhs <= self.rhs,
            Comparator::Ge => lhs >= self.rhs,
            Comparator::Eq => lhs == self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryProgram {
    sense: Sense,
    names: Vec<String>,
    objective: Vec<i64>,
    constraints: Vec<Constraint>,
}

impl BinaryProgram {
    pub fn new(sense: Sense) -> Self {
        BinaryProgram {
            sense,
            names: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, objective: i64) -> Var {
        self.names.push(name.into());
        self.objective.push(objective);
        Var(self.names.len() - 1)
    }

    /// Adds `sum(coef * var) cmp rhs`. Repeated variables are merged and zero
    /// coefficients dropped.
    pub fn add_constraint(
        &mut self,
        terms: impl IntoIterator<Item = (Var, i64)>,
        cmp: Comparator,
        rhs: i64,
    ) -> Result<(), IlpError> {
        let mut merged: Vec<(Var, i64)> = Vec::new();
        for (v, a) in terms {
            if v.0 >= self.names.len() {
                return Err(IlpError::UnknownVariable(v.0));
            }
            merged.push((v, a));
        }
        merged.sort_by_key(|t| t.0);
        merged.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        merged.retain(|t| t.1 != 0);
        self.constraints.push(Constraint {
            terms: merged,
            cmp,
            rhs,
        });
        Ok(())
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    pub fn objective_coef(&self, v: Var) -> i64 {
        self.objective[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn evaluate(&self, assignment: &[bool]) -> i64 {
        self.objective
            .iter()
            .zip(assignment)
            .filter(|(_, &x)| x)
            .map(|(c, _)| c)
            .sum()
    }

    pub fn is_feasible(&self, assignment: &[bool]) -> bool {
        assignment.len() == self.num_vars() && self.constraints.iter().all(|c| c.holds(assignment))
    }

    /// Variables with a zero objective coefficient that appear in no constraint.
    fn unreferenced(&self) -> Vec<bool> {
        let mut referenced: Vec<bool> = self.objective.iter().map(|&c| c != 0).collect();
        for c in &self.constraints {
            for (v, _) in &c.terms {
                referenced[v.0] = true;
            }
        }
        referenced.into_iter().map(|r| !r).collect()
    }

    /// Value tried first for each variable.
    fn preferred_values(&self) -> Vec<bool> {
        let first = self.sense == Sense::Maximize;
        self.unreferenced()
            .into_iter()
            .map(|unref| if unref { false } else { first })
            .collect()
    }

    /// LP-format text for inspection with external tools. Not a stable format.
    pub fn to_lp_string(&self) -> String {
        let label = |v: Var| {
            let clean: String = self.names[v.0]
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            format!("x{}_{}", v.0, clean)
        };
        let term_str = |terms: &mut dyn Iterator<Item = (Var, i64)>| {
            let mut s = String::new();
            for (v, a) in terms {
                let sign = if a < 0 { '-' } else { '+' };
                write!(s, " {sign} {} {}", a.abs(), label(v)).expect("write to string");
            }
            if s.is_empty() {
                s.push_str(" 0");
            }
            s
        };
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Maximize => "Maximize\n",
            Sense::Minimize => "Minimize\n",
        });
        let mut obj = (0..self.num_vars())
            .map(Var)
            .filter(|v| self.objective[v.0] != 0)
            .map(|v| (v, self.objective[v.0]));
        writeln!(out, " obj:{}", term_str(&mut obj)).expect("write to string");
        out.push_str("Subject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let mut terms = c.terms.iter().copied();
            writeln!(out, " c{i}:{} {} {}", term_str(&mut terms), c.cmp, c.rhs)
                .expect("write to string");
        }
        out.push_str("Binary\n");
        for v in 0..self.num_vars() {
            writeln!(out, " {}", label(Var(v))).expect("write to string");
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub status: Status,
    /// All-false when infeasible.
    pub assignment: Vec<bool>,
    pub objective_value: i64,
}

impl Solution {
    pub fn value(&self, v: Var) -> bool {
        self.assignment[v.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    fn infeasible(n: usize) -> Self {
        Solution {
            status: Status::Infeasible,
            assignment: vec![false; n],
            objective_value: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    pub max_vars: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_vars: DEFAULT_MAX_VARS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Search nodes entered.
    pub nodes: u64,
    /// Complete assignments examined (brute force) or incumbents found (solve).
    pub leaves: u64,
}

pub fn solve(program: &BinaryProgram) -> Result<Solution, IlpError> {
    solve_with(program, &SolverConfig::default()).map(|(s, _)| s)
}

pub fn solve_with(
    program: &BinaryProgram,
    config: &SolverConfig,
) -> Result<(Solution, SolveStats), IlpError> {
    if program.num_vars() > config.max_vars {
        return Err(IlpError::TooManyVariables {
            vars: program.num_vars(),
            limit: config.max_vars,
        });
    }
    let mut search = Search::new(program);
    let solution = search.run();
    Ok((solution, search.stats))
}

pub fn brute_force(program: &BinaryProgram) -> Result<Solution, IlpError> {
    brute_force_with_stats(program).map(|(s, _)| s)
}

/// Exhaustive search over all `2^n` assignments in the solver's branching order.
pub fn brute_force_with_stats(program: &BinaryProgram) -> Result<(Solution, SolveStats), IlpError> {
    let n = program.num_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(IlpError::TooManyVariables {
            vars: n,
            limit: BRUTE_FORCE_MAX_VARS,
        });
    }
    let preferred = program.preferred_values();
    let mut stats = SolveStats::default();
    let mut best: Option<(i64, Vec<bool>)> = None;
    let mut assignment = vec![false; n];
    for k in 0u64..(1u64 << n) {
        for (i, x) in assignment.iter_mut().enumerate() {
            let flip = (k >> (n - 1 - i)) & 1 == 1;
            *x = preferred[i] != flip;
        }
        stats.leaves += 1;
        if !program.is_feasible(&assignment) {
            continue;
        }
        let value = program.evaluate(&assignment);
        let better = match &best {
            None => true,
            Some((b, _)) => improves(program.sense, value, *b),
        };
        if better {
            best = Some((value, assignment.clone()));
        }
    }
    stats.nodes = stats.leaves;
    let solution = match best {
        Some((objective_value, assignment)) => Solution {
            status: Status::Optimal,
            assignment,
            objective_value,
        },
        None => Solution::infeasible(n),
    };
    Ok((solution, stats))
}

fn improves(sense: Sense, candidate: i64, incumbent: i64) -> bool {
    match sense {
        Sense::Maximize => candidate > incumbent,
        Sense::Minimize => candidate < incumbent,
    }
}

const FREE: i8 = -1;

/// Per-constraint running sums over the current partial assignment.
#[derive(Clone, Copy)]
struct Row {
    fixed: i64,
    /// Sum of negative coefficients of free variables.
    free_neg: i64,
    /// Sum of positive coefficients of free variables.
    free_pos: i64,
}

struct Search<'p> {
    program: &'p BinaryProgram,
    preferred: Vec<bool>,
    values: Vec<i8>,
    rows: Vec<Row>,
    occurrences: Vec<Vec<(usize, i64)>>,
    trail: Vec<usize>,
    fixed_obj: i64,
    free_obj_pos: i64,
    free_obj_neg: i64,
    best: Option<(i64, Vec<bool>)>,
    stats: SolveStats,
    queue: Vec<usize>,
    queued: Vec<bool>,
    scratch_used: Vec<bool>,
}

impl<'p> Search<'p> {
    fn new(program: &'p BinaryProgram) -> Self {
        let n = program.num_vars();
        let mut occurrences = vec![Vec::new(); n];
        let rows = program
            .constraints
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let mut row = Row {
                    fixed: 0,
                    free_neg: 0,
                    free_pos: 0,
                };
                for &(v, a) in &c.terms {
                    occurrences[v.0].push((ci, a));
                    if a > 0 {
                        row.free_pos += a;
                    } else {
                        row.free_neg += a;
                    }
                }
                row
            })
            .collect();
        let free_obj_pos = program.objective.iter().filter(|&&c| c > 0).sum();
        let free_obj_neg = program.objective.iter().filter(|&&c| c < 0).sum();
        Search {
            program,
            preferred: program.preferred_values(),
            values: vec![FREE; n],
            rows,
            occurrences,
            trail: Vec::new(),
            fixed_obj: 0,
            free_obj_pos,
            free_obj_neg,
            best: None,
            stats: SolveStats::default(),
            queue: Vec::new(),
            queued: vec![false; program.constraints.len()],
            scratch_used: vec![false; n],
        }
    }

    fn run(&mut self) -> Solution {
        let n = self.program.num_vars();
        // Constraints with no terms are decided up front.
        let mut ok = (0..self.rows.len()).all(|ci| self.row_feasible(ci));
        if ok {
            for (v, unref) in self.program.unreferenced().into_iter().enumerate() {
                if unref {
                    self.assign(v, false);
                }
            }
            for ci in 0..self.rows.len() {
                self.enqueue(ci);
            }
            ok = self.propagate();
        }
        if ok {
            self.descend(0);
        }
        match self.best.take() {
            Some((objective_value, assignment)) => Solution {
                status: Status::Optimal,
                assignment,
                objective_value,
            },
            None => Solution::infeasible(n),
        }
    }

    fn descend(&mut self, from: usize) {
        self.stats.nodes += 1;
        if self.pruned_by_bound() {
            return;
        }
        let Some(var) = (from..self.values.len()).find(|&v| self.values[v] == FREE) else {
            let assignment: Vec<bool> = self.values.iter().map(|&x| x == 1).collect();
            debug_assert!(self.program.is_feasible(&assignment));
            self.stats.leaves += 1;
            self.best = Some((self.fixed_obj, assignment));
            return;
        };
        let first = self.preferred[var];
        for value in [first, !first] {
            let mark = self.trail.len();
            self.assign(var, value);
            if self.propagate() {
                self.descend(var + 1);
            }
            self.undo_to(mark);
        }
    }

    /// True when no completion of the current partial assignment can strictly
    /// beat the incumbent.
    fn pruned_by_bound(&mut self) -> bool {
        let Some(incumbent) = self.best.as_ref().map(|(v, _)| *v) else {
            return false;
        };
        match self.program.sense {
            Sense::Maximize => {
                let bound = self.fixed_obj + self.free_obj_pos;
                bound <= incumbent || bound - self.packing_savings_max() <= incumbent
            }
            Sense::Minimize => {
                let bound = self.fixed_obj + self.free_obj_neg;
                bound >= incumbent || bound + self.covering_cost_min() >= incumbent
            }
        }
    }

    /// Objective that cannot be realized because of `<=` rows with positive
    /// coefficients. Rows are taken greedily with pairwise disjoint free
    /// variables, so their reductions add up.
    fn packing_savings_max(&mut self) -> i64 {
        let mut savings = 0;
        self.scratch_used.iter_mut().for_each(|u| *u = false);
        let mut items: Vec<(i64, i64)> = Vec::new();
        for (ci, c) in self.program.constraints.iter().enumerate() {
            if c.cmp == Comparator::Ge || self.rows[ci].free_neg != 0 {
                continue;
            }
            let capacity = c.rhs - self.rows[ci].fixed;
            items.clear();
            let mut disjoint = true;
            for &(v, a) in &c.terms {
                if self.values[v.0] != FREE {
                    continue;
                }
                if self.scratch_used[v.0] {
                    disjoint = false;
                    break;
                }
                let gain = self.program.objective[v.0];
                if gain > 0 {
                    items.push((a, gain));
                }
            }
            if !disjoint || items.is_empty() {
                continue;
            }
            // Largest number of these variables that fits the capacity.
            items.sort_unstable_by_key(|&(a, _)| a);
            let mut used = 0;
            let mut fit = 0;
            for &(a, _) in &items {
                if used + a > capacity {
                    break;
                }
                used += a;
                fit += 1;
            }
            if fit == items.len() {
                continue;
            }
            let total: i64 = items.iter().map(|&(_, g)| g).sum();
            let mut gains: Vec<i64> = items.iter().map(|&(_, g)| g).collect();
            gains.sort_unstable_by(|a, b| b.cmp(a));
            savings += total - gains[..fit].iter().sum::<i64>();
            for &(v, _) in &c.terms {
                if self.values[v.0] == FREE {
                    self.scratch_used[v.0] = true;
                }
            }
        }
        savings
    }

    /// Minimum extra cost forced by `>=` rows with positive coefficients over
    /// variables of non-negative cost, summed over disjoint rows.
    fn covering_cost_min(&mut self) -> i64 {
        let mut extra = 0;
        self.scratch_used.iter_mut().for_each(|u| *u = false);
        let mut items: Vec<(i64, i64)> = Vec::new();
        for (ci, c) in self.program.constraints.iter().enumerate() {
            if c.cmp == Comparator::Le || self.rows[ci].free_neg != 0 {
                continue;
            }
            let demand = c.rhs - self.rows[ci].fixed;
            if demand <= 0 {
                continue;
            }
            items.clear();
            let mut usable = true;
            for &(v, a) in &c.terms {
                if self.values[v.0] != FREE {
                    continue;
                }
                let cost = self.program.objective[v.0];
                if self.scratch_used[v.0] || cost < 0 {
                    usable = false;
                    break;
                }
                items.push((a, cost));
            }
            if !usable || items.is_empty() {
                continue;
            }
            // Fewest variables that can meet the demand.
            items.sort_unstable_by_key(|x| std::cmp::Reverse(x.0));
            let mut covered = 0;
            let mut need = 0;
            for &(a, _) in &items {
                if covered >= demand {
                    break;
                }
                covered += a;
                need += 1;
            }
            let mut costs: Vec<i64> = items.iter().map(|&(_, c)| c).collect();
            costs.sort_unstable();
            extra += costs[..need].iter().sum::<i64>();
            for &(v, _) in &c.terms {
                if self.values[v.0] == FREE {
                    self.scratch_used[v.0] = true;
                }
            }
        }
        extra
    }

    fn assign(&mut self, var: usize, value: bool) {
        debug_assert_eq!(self.values[var], FREE);
        self.values[var] = i8::from(value);
        self.trail.push(var);
        let c = self.program.objective[var];
        if c > 0 {
            self.free_obj_pos -= c;
        } else {
            self.free_obj_neg -= c;
        }
        if value {
            self.fixed_obj += c;
        }
        for k in 0..self.occurrences[var].len() {
            let (ci, a) = self.occurrences[var][k];
            let row = &mut self.rows[ci];
            if a > 0 {
                row.free_pos -= a;
            } else {
                row.free_neg -= a;
            }
            if value {
                row.fixed += a;
            }
            self.enqueue(ci);
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().expect("trail longer than mark");
            let value = self.values[var] == 1;
            self.values[var] = FREE;
            let c = self.program.objective[var];
            if c > 0 {
                self.free_obj_pos += c;
            } else {
                self.free_obj_neg += c;
            }
            if value {
                self.fixed_obj -= c;
            }
            for &(ci, a) in &self.occurrences[var] {
                let row = &mut self.rows[ci];
                if a > 0 {
                    row.free_pos += a;
                } else {
                    row.free_neg += a;
                }
                if value {
                    row.fixed -= a;
                }
            }
        }
        for ci in self.queue.drain(..) {
            self.queued[ci] = false;
        }
    }

    fn enqueue(&mut self, ci: usize) {
        if !self.queued[ci] {
            self.queued[ci] = true;
            self.queue.push(ci);
        }
    }

    fn row_feasible(&self, ci: usize) -> bool {
        let row = self.rows[ci];
        let c = &self.program.constraints[ci];
        let lo = row.fixed + row.free_neg;
        let hi = row.fixed + row.free_pos;
        match c.cmp {
            Comparator::Le => lo <= c.rhs,
            Comparator::Ge => hi >= c.rhs,
            Comparator::Eq => lo <= c.rhs && hi >= c.rhs,
        }
    }

    /// Fixes variables forced by row bounds until a fixed point. Returns false
    /// on a conflict; the queue is cleared either way.
    fn propagate(&mut self) -> bool {
        while let Some(ci) = self.queue.pop() {
            self.queued[ci] = false;
            if !self.row_feasible(ci) {
                for ci in self.queue.drain(..) {
                    self.queued[ci] = false;
                }
                return false;
            }
            let c = &self.program.constraints[ci];
            let row = self.rows[ci];
            let upper_slack = match c.cmp {
                Comparator::Ge => None,
                _ => Some(c.rhs - (row.fixed + row.free_neg)),
            };
            let lower_slack = match c.cmp {
                Comparator::Le => None,
                _ => Some(row.fixed + row.free_pos - c.rhs),
            };
            let mut forced: Vec<(usize, bool)> = Vec::new();
            for &(v, a) in &c.terms {
                if self.values[v.0] != FREE {
                    continue;
                }
                // Setting v to 1 moves the row minimum up by a (a > 0); setting
                // it to 0 moves the row minimum up by -a (a < 0). Mirror for max.
                if let Some(slack) = upper_slack {
                    if a.abs() > slack {
                        forced.push((v.0, a < 0));
                        continue;
                    }
                }
                if let Some(slack) = lower_slack {
                    if a.abs() > slack {
                        forced.push((v.0, a > 0));
                    }
                }
            }
            for (v, value) in forced {
                if self.values[v] == FREE {
                    self.assign(v, value);
                } else if (self.values[v] == 1) != value {
                    for ci in self.queue.drain(..) {
                        self.queued[ci] = false;
                    }
                    return false;
                }
            }
        }
        true
    }
}
