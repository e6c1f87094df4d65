//! Depth-first branch and bound over pairwise orderings.
//!
//! A node is the polyhedral cell of the region where a set of pairs has a
//! fixed strict order. Feasibility of a cell is decided exactly by projecting
//! onto it ([`ProjectionQp`]); points found along the way witness which sides
//! of the remaining pairs are reachable. A pair with only one reachable side
//! is resolved without branching, so the node bound is the interval of counts
//! consistent with the resolved pairs.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use nalgebra::DVector;

use super::instance::{
    Direction, Indicator, MipInstance, MipSolution, Objective, PairBound, Region, SolveStatus,
};
use super::qp::{ProjectionQp, QpStatus};
use super::Budget;

const POOL_CAP: usize = 24;
const PERMANENT_TIE: f64 = 1e-13;

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub budget: Budget,
    /// Stop as soon as the incumbent count reaches this value (`<=` for
    /// min, `>=` for max). Nodes that cannot reach it are pruned.
    pub target: Option<usize>,
    /// Candidate points tried as initial incumbents.
    pub seeds: Vec<DVector<f64>>,
}

/// Indicators fixed because the certified gap bound has a definite sign.
/// Open node, the branch that produced it, and its bound.
type Frame = (Rc<Node>, Option<(usize, i8)>, usize);

pub fn root_presolve(inst: &MipInstance) -> MipInstance {
    let mut out = inst.clone();
    let count = inst.indicator_count();
    if out.fixed.len() != count {
        out.fixed = vec![None; count];
    }
    if let Some(bounds) = &inst.gap_bounds {
        for (k, b) in bounds.iter().enumerate() {
            if out.fixed[k].is_some() {
                continue;
            }
            if b.owner_over_other < 0.0 {
                out.fixed[k] = Some(true);
            } else if b.other_over_owner < 0.0 {
                out.fixed[k] = Some(false);
            }
        }
    }
    out
}

/// Number of indicators fixed by presolve.
pub fn fixed_count(inst: &MipInstance) -> usize {
    inst.fixed.iter().filter(|f| f.is_some()).count()
}

struct Problem<'a> {
    inst: &'a MipInstance,
    n: usize,
    pairs: Vec<(usize, usize)>,
    /// Owner slots referencing each pair with the state meaning "other above owner".
    refs: Vec<[(usize, i8); 2]>,
    ref_len: Vec<u8>,
    /// Per owner slot: (pair, state meaning other above owner).
    blocks: Vec<Vec<(usize, i8)>>,
    strength: Vec<f64>,
    root_state: Vec<i8>,
    permanent: Vec<bool>,
    margin: f64,
    kappa: usize,
    members: usize,
}

#[derive(Clone)]
struct Node {
    qp: ProjectionQp,
    state: Vec<i8>,
    above: Vec<u32>,
    open: Vec<u32>,
    /// Points of the cell with their scores.
    pool: Vec<(DVector<f64>, DVector<f64>)>,
}

struct Best {
    count: usize,
    point: DVector<f64>,
}

enum Probe {
    Done,
    Infeasible,
    Pruned,
}

impl<'a> Problem<'a> {
    fn new(inst: &'a MipInstance) -> Self {
        let n = inst.n();
        let owners = inst.objective.owners();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut refs = Vec::new();
        let mut ref_len = Vec::new();
        let mut blocks = Vec::with_capacity(owners.len());
        for (slot, &owner) in owners.iter().enumerate() {
            let mut block = Vec::with_capacity(n.saturating_sub(1));
            for other in (0..n).filter(|&o| o != owner) {
                let key = (owner.min(other), owner.max(other));
                let p = *index.entry(key).or_insert_with(|| {
                    pairs.push(key);
                    refs.push([(0, 0); 2]);
                    ref_len.push(0u8);
                    pairs.len() - 1
                });
                let sign: i8 = if other == key.0 { 1 } else { -1 };
                refs[p][ref_len[p] as usize] = (slot, sign);
                ref_len[p] += 1;
                block.push((p, sign));
            }
            blocks.push(block);
        }
        let row_scale = (0..n)
            .map(|j| inst.scores.row(j).norm())
            .fold(0.0f64, f64::max)
            .max(1.0);
        let mut root_state = vec![0i8; pairs.len()];
        let mut strength = vec![0.0; pairs.len()];
        let permanent: Vec<bool> = pairs
            .iter()
            .map(|&(a, b)| (inst.scores.row(a) - inst.scores.row(b)).norm() <= PERMANENT_TIE * row_scale)
            .collect();
        for p in 0..pairs.len() {
            if permanent[p] {
                // exact ties resolve to the lower row index
                root_state[p] = 1;
            }
        }
        let fixed_ok = inst.fixed.len() == inst.indicator_count();
        for (slot, block) in blocks.iter().enumerate() {
            for (j, &(p, sign)) in block.iter().enumerate() {
                let k = slot * (n - 1) + j;
                if fixed_ok {
                    if let Some(f) = inst.fixed[k] {
                        if root_state[p] == 0 {
                            root_state[p] = if f { sign } else { -sign };
                        }
                    }
                }
                if let Some(bounds) = &inst.gap_bounds {
                    let PairBound {
                        owner_over_other,
                        other_over_owner,
                    } = bounds[k];
                    strength[p] = f64::max(strength[p], owner_over_other.abs().max(other_over_owner.abs()));
                }
            }
        }
        let (kappa, members) = match &inst.objective {
            Objective::Rank { .. } => (0, 1),
            Objective::GroupCount { members, kappa } => (*kappa, members.len()),
        };
        Problem {
            inst,
            n,
            pairs,
            refs,
            ref_len,
            blocks,
            strength,
            root_state,
            permanent,
            margin: inst.margin,
            kappa,
            members,
        }
    }

    fn diff(&self, p: usize) -> DVector<f64> {
        let (a, b) = self.pairs[p];
        (self.inst.scores.row(a) - self.inst.scores.row(b)).transpose()
    }

    fn refs(&self, p: usize) -> &[(usize, i8)] {
        &self.refs[p][..self.ref_len[p] as usize]
    }

    fn root(&self) -> Node {
        let dim = self.inst.dim();
        let qp = match &self.inst.region {
            Region::Ball { center, radius_sq } => {
                ProjectionQp::new(center.clone()).with_cap(radius_sq + 1e-12 * (1.0 + radius_sq))
            }
            Region::SoftSimplex { min_sum, max_sum } => {
                let mut qp = ProjectionQp::new(DVector::from_element(dim, 1.0 / dim as f64));
                let mut rows: Vec<(DVector<f64>, f64)> = (0..dim)
                    .map(|k| {
                        let mut e = DVector::zeros(dim);
                        e[k] = 1.0;
                        (e, 0.0)
                    })
                    .collect();
                rows.push((DVector::from_element(dim, 1.0), *min_sum));
                rows.push((DVector::from_element(dim, -1.0), -*max_sum));
                qp.add_constraints(rows);
                qp
            }
        };
        let slots = self.blocks.len();
        let mut node = Node {
            qp,
            state: vec![0; self.pairs.len()],
            above: vec![0; slots],
            open: vec![0; slots],
            pool: Vec::new(),
        };
        for (slot, block) in self.blocks.iter().enumerate() {
            node.open[slot] = block.len() as u32;
        }
        for p in 0..self.pairs.len() {
            if self.root_state[p] != 0 {
                self.set(&mut node, p, self.root_state[p]);
            }
        }
        node
    }

    fn set(&self, node: &mut Node, p: usize, side: i8) {
        debug_assert_eq!(node.state[p], 0);
        node.state[p] = side;
        for &(slot, sign) in self.refs(p) {
            node.open[slot] -= 1;
            if side == sign {
                node.above[slot] += 1;
            }
        }
    }

    /// `(lo, hi)` range of the count over the node.
    fn range(&self, node: &Node) -> (usize, usize) {
        match self.inst.objective {
            Objective::Rank { .. } => {
                let lo = node.above[0] as usize;
                (lo, lo + node.open[0] as usize)
            }
            Objective::GroupCount { .. } => {
                let mut sure = 0;
                let mut possible = 0;
                for s in 0..self.blocks.len() {
                    let lo = 1 + node.above[s] as usize;
                    let hi = lo + node.open[s] as usize;
                    if hi <= self.kappa {
                        sure += 1;
                    }
                    if lo <= self.kappa {
                        possible += 1;
                    }
                }
                let floor = self.kappa.saturating_sub(self.n - self.members);
                let cap = self.kappa.min(self.members);
                let lo = sure.max(floor).min(cap);
                let hi = possible.min(cap).max(lo);
                (lo, hi)
            }
        }
    }

    fn bound(&self, node: &Node) -> usize {
        let (lo, hi) = self.range(node);
        match self.inst.direction {
            Direction::Min => lo,
            Direction::Max => hi,
        }
    }

    fn slot_undetermined(&self, node: &Node, slot: usize) -> bool {
        match self.inst.objective {
            Objective::Rank { .. } => true,
            Objective::GroupCount { .. } => {
                let lo = 1 + node.above[slot] as usize;
                let hi = lo + node.open[slot] as usize;
                lo <= self.kappa && hi > self.kappa
            }
        }
    }

    fn cheap_eval(&self) -> bool {
        matches!(self.inst.objective, Objective::Rank { .. })
    }

    fn relevant(&self, node: &Node, p: usize) -> bool {
        node.state[p] == 0 && self.refs(p).iter().any(|&(s, _)| self.slot_undetermined(node, s))
    }

    /// Count at `v` when every pair is strictly ordered by at least half
    /// the margin; `None` for points on or near a tie.
    fn evaluate(&self, s: &DVector<f64>) -> Option<usize> {
        let half = 0.5 * self.margin;
        let mut above = vec![0usize; self.blocks.len()];
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let side = if self.permanent[p] {
                1
            } else {
                let t = s[a] - s[b];
                if t.abs() < half {
                    return None;
                }
                if t > 0.0 {
                    1
                } else {
                    -1
                }
            };
            for &(slot, sign) in self.refs(p) {
                if side == sign {
                    above[slot] += 1;
                }
            }
        }
        Some(match self.inst.objective {
            Objective::Rank { .. } => above[0],
            Objective::GroupCount { .. } => above.iter().filter(|&&a| a < self.kappa).count(),
        })
    }

    fn side_at(&self, s: &DVector<f64>, p: usize) -> i8 {
        let (a, b) = self.pairs[p];
        let t = s[a] - s[b];
        if t >= 0.5 * self.margin {
            1
        } else if t <= -0.5 * self.margin {
            -1
        } else {
            0
        }
    }

    fn constraint(&self, p: usize, side: i8) -> (DVector<f64>, f64) {
        let mut d = self.diff(p);
        if side < 0 {
            d.neg_mut();
        }
        (d, self.margin)
    }

    fn scores_at(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inst.scores * v
    }

    fn in_cell(&self, node: &Node, s: &DVector<f64>) -> bool {
        // only pairs that carry constraints need checking: resolved pairs
        // either carry one or are implied by the cell
        node.state.iter().enumerate().all(|(p, &st)| {
            st == 0 || self.permanent[p] || self.side_at(s, p) == st
        })
    }
}

struct Search<'a> {
    pb: Problem<'a>,
    opts: &'a SolveOptions,
    best: Option<Best>,
    nodes: u64,
    start: Instant,
    target_pruned: bool,
}

impl<'a> Search<'a> {
    fn offer(&mut self, v: &DVector<f64>, s: &DVector<f64>) {
        if let Some(c) = self.pb.evaluate(s) {
            let better = match &self.best {
                None => true,
                Some(b) => self.pb.inst.direction.better(c, b.count),
            };
            if better {
                self.best = Some(Best {
                    count: c,
                    point: v.clone(),
                });
            }
        }
    }

    fn reached_target(&self) -> bool {
        match (self.opts.target, &self.best) {
            (Some(t), Some(b)) => match self.pb.inst.direction {
                Direction::Min => b.count <= t,
                Direction::Max => b.count >= t,
            },
            _ => false,
        }
    }

    /// Whether a node with this bound can still improve on the incumbent
    /// and reach the target.
    fn promising(&mut self, bound: usize) -> bool {
        let dir = self.pb.inst.direction;
        if let Some(t) = self.opts.target {
            let can_reach = match dir {
                Direction::Min => bound <= t,
                Direction::Max => bound >= t,
            };
            if !can_reach {
                self.target_pruned = true;
                return false;
            }
        }
        match &self.best {
            None => true,
            Some(b) => dir.better(bound, b.count),
        }
    }

    fn push_point(&mut self, node: &mut Node, v: DVector<f64>) {
        let s = self.pb.scores_at(&v);
        self.offer(&v, &s);
        self.pool_point(node, v, s);
    }

    fn pool_point(&mut self, node: &mut Node, v: DVector<f64>, s: DVector<f64>) {
        if node.pool.len() >= POOL_CAP {
            node.pool.remove(0);
        }
        node.pool.push((v, s));
    }

    /// Resolves every relevant pair that has a single reachable side.
    fn probe(&mut self, node: &mut Node) -> Probe {
        let probe = self.probe_pairs(node);
        if matches!(probe, Probe::Done) && !self.pb.cheap_eval() {
            // group counts cost a pass over every pair, so only the points
            // the pool kept are scored
            for (v, s) in &node.pool {
                self.offer(v, s);
            }
        }
        probe
    }

    fn probe_pairs(&mut self, node: &mut Node) -> Probe {
        let cheap_eval = self.pb.cheap_eval();
        let pb_pairs = self.pb.pairs.len();
        for p in 0..pb_pairs {
            if !self.pb.relevant(node, p) {
                continue;
            }
            let mut seen_pos = false;
            let mut seen_neg = false;
            for (_, s) in &node.pool {
                match self.pb.side_at(s, p) {
                    1 => seen_pos = true,
                    -1 => seen_neg = true,
                    _ => {}
                }
                if seen_pos && seen_neg {
                    break;
                }
            }
            if seen_pos && seen_neg {
                continue;
            }
            let mut feasible = [seen_pos, seen_neg];
            for (k, side) in [(0usize, 1i8), (1, -1)] {
                if feasible[k] {
                    continue;
                }
                let mut qp = node.qp.clone();
                let (a, b) = self.pb.constraint(p, side);
                if qp.add_constraint(a, b) == QpStatus::Feasible {
                    feasible[k] = true;
                    let v = qp.point().clone();
                    if cheap_eval {
                        self.push_point(node, v);
                        if self.reached_target() {
                            return Probe::Done;
                        }
                    } else {
                        let s = self.pb.scores_at(&v);
                        self.pool_point(node, v, s);
                    }
                }
            }
            match feasible {
                [true, true] => {}
                [true, false] => self.pb.set(node, p, 1),
                [false, true] => self.pb.set(node, p, -1),
                [false, false] => return Probe::Infeasible,
            }
            if !feasible[0] || !feasible[1] {
                let bound = self.pb.bound(node);
                if !self.promising(bound) {
                    return Probe::Pruned;
                }
            }
        }
        Probe::Done
    }

    /// Finds a point of the cell that is strictly ordered on every pair.
    fn generic_point(&mut self, node: &Node) -> Option<DVector<f64>> {
        let mut qp = node.qp.clone();
        for _ in 0..6 {
            let v = qp.point().clone();
            let s = self.pb.scores_at(&v);
            let mut rows = Vec::new();
            for p in 0..self.pb.pairs.len() {
                if self.pb.permanent[p] {
                    continue;
                }
                if self.pb.side_at(&s, p) == 0 {
                    let side = match node.state[p] {
                        0 => {
                            let (a, b) = self.pb.pairs[p];
                            if s[a] >= s[b] {
                                1
                            } else {
                                -1
                            }
                        }
                        st => st,
                    };
                    rows.push(self.pb.constraint(p, side));
                }
            }
            if rows.is_empty() {
                return Some(v);
            }
            if qp.add_constraints(rows) != QpStatus::Feasible {
                return None;
            }
        }
        None
    }

    fn choose_branch(&self, node: &Node) -> Option<(usize, i8)> {
        let v = node.qp.point();
        let s = self.pb.scores_at(v);
        let mut best: Option<(usize, f64, f64)> = None;
        for p in 0..self.pb.pairs.len() {
            if !self.pb.relevant(node, p) {
                continue;
            }
            let (a, b) = self.pb.pairs[p];
            let norm = self.pb.diff(p).norm().max(f64::MIN_POSITIVE);
            let closeness = (s[a] - s[b]).abs() / norm;
            let strength = self.pb.strength[p];
            let take = match best {
                None => true,
                Some((_, c, st)) => closeness < c || (closeness == c && strength > st),
            };
            if take {
                best = Some((p, closeness, strength));
            }
        }
        best.map(|(p, _, _)| (p, self.preferred_side(node, p)))
    }

    fn preferred_side(&self, node: &Node, p: usize) -> i8 {
        let dir = self.pb.inst.direction;
        let refs = self.pb.refs(p);
        let (_, sign) = refs
            .iter()
            .copied()
            .find(|&(s, _)| self.pb.slot_undetermined(node, s))
            .unwrap_or(refs[0]);
        // `sign` puts the other row above this owner
        match (&self.pb.inst.objective, dir) {
            (Objective::Rank { .. }, Direction::Min) => -sign,
            (Objective::Rank { .. }, Direction::Max) => sign,
            (Objective::GroupCount { .. }, Direction::Max) => -sign,
            (Objective::GroupCount { .. }, Direction::Min) => sign,
        }
    }

    fn out_of_budget(&self) -> bool {
        self.nodes >= self.opts.budget.max_nodes || self.start.elapsed() >= self.opts.budget.max_time
    }

    fn run(&mut self) -> (SolveStatus, usize) {
        let mut root = self.pb.root();
        if !root.qp.is_feasible() {
            return (SolveStatus::Infeasible, self.pb.bound(&root));
        }
        let seeds = self.opts.seeds.clone();
        for v in seeds {
            if v.len() == self.pb.inst.dim() && self.pb.inst.region.contains(&v, 1e-12) {
                let s = self.pb.scores_at(&v);
                if self.pb.in_cell(&root, &s) {
                    self.push_point(&mut root, v);
                }
            }
        }
        let v0 = root.qp.point().clone();
        self.push_point(&mut root, v0);
        let root_bound = self.pb.bound(&root);
        let mut stack: Vec<Frame> = vec![(Rc::new(root), None, root_bound)];
        while let Some((parent, branch, parent_bound)) = stack.pop() {
            if self.reached_target() {
                return (SolveStatus::Cutoff, self.global_bound(&stack, Some(parent_bound)));
            }
            if self.out_of_budget() {
                return (SolveStatus::BudgetExhausted, self.global_bound(&stack, Some(parent_bound)));
            }
            if !self.promising(parent_bound) {
                continue;
            }
            self.nodes += 1;
            let mut node = match branch {
                None => Rc::try_unwrap(parent).unwrap_or_else(|rc| (*rc).clone()),
                Some((p, side)) => {
                    let mut child = (*parent).clone();
                    let (a, b) = self.pb.constraint(p, side);
                    if child.qp.add_constraint(a, b) != QpStatus::Feasible {
                        continue;
                    }
                    self.pb.set(&mut child, p, side);
                    child.pool.retain(|(_, s)| self.pb.side_at(s, p) == side);
                    let v = child.qp.point().clone();
                    self.push_point(&mut child, v);
                    child
                }
            };
            match self.probe(&mut node) {
                Probe::Infeasible | Probe::Pruned => continue,
                Probe::Done => {}
            }
            if self.reached_target() {
                continue;
            }
            let bound = self.pb.bound(&node);
            if !self.promising(bound) {
                continue;
            }
            let (lo, hi) = self.pb.range(&node);
            if lo == hi {
                if let Some(v) = self.generic_point(&node) {
                    self.push_point(&mut node, v);
                    continue;
                }
            }
            let Some((p, side)) = self.choose_branch(&node).or_else(|| self.fallback_branch(&node)) else {
                continue;
            };
            let node = Rc::new(node);
            stack.push((Rc::clone(&node), Some((p, -side)), bound));
            stack.push((node, Some((p, side)), bound));
        }
        if self.reached_target() {
            return (SolveStatus::Cutoff, self.best.as_ref().map_or(0, |b| b.count));
        }
        if self.target_pruned {
            return (SolveStatus::Unreachable, self.global_bound(&[], None));
        }
        match &self.best {
            None => (SolveStatus::Infeasible, root_bound),
            Some(b) => (SolveStatus::Optimal, b.count),
        }
    }

    /// Any open pair not ordered strictly at the node point.
    fn fallback_branch(&self, node: &Node) -> Option<(usize, i8)> {
        let s = self.pb.scores_at(node.qp.point());
        (0..self.pb.pairs.len())
            .find(|&p| node.state[p] == 0 && self.pb.side_at(&s, p) == 0)
            .map(|p| (p, 1))
    }

    fn global_bound(&self, stack: &[Frame], current: Option<usize>) -> usize {
        let dir = self.pb.inst.direction;
        let mut bound = self.best.as_ref().map(|b| b.count);
        let beyond_target = match (self.target_pruned, self.opts.target) {
            (true, Some(t)) => Some(match dir {
                Direction::Min => t + 1,
                Direction::Max => t.saturating_sub(1),
            }),
            _ => None,
        };
        for b in stack.iter().map(|e| e.2).chain(current).chain(beyond_target) {
            bound = Some(match bound {
                None => b,
                Some(x) => match dir {
                    Direction::Min => x.min(b),
                    Direction::Max => x.max(b),
                },
            });
        }
        bound.unwrap_or(0)
    }
}

/// Solves the instance to optimality or until the budget runs out.
pub fn solve(inst: &MipInstance, opts: &SolveOptions) -> MipSolution {
    let start = Instant::now();
    let mut search = Search {
        pb: Problem::new(inst),
        opts,
        best: None,
        nodes: 0,
        start,
        target_pruned: false,
    };
    let (status, bound) = search.run();
    let wall = start.elapsed().as_secs_f64();
    let nodes = search.nodes;
    match search.best {
        None => MipSolution {
            status: if status == SolveStatus::BudgetExhausted || status == SolveStatus::Unreachable {
                status
            } else {
                SolveStatus::Infeasible
            },
            count: 0,
            objective_value: f64::NAN,
            bound,
            indicators: Vec::new(),
            top: Vec::new(),
            continuous: DVector::zeros(inst.dim()),
            node_count: nodes,
            wall_time_secs: wall,
        },
        Some(best) => {
            let pb = &search.pb;
            let s = pb.scores_at(&best.point);
            let (indicators, top) = assignment(pb, &s);
            let continuous = match inst.region {
                Region::SoftSimplex { .. } => {
                    let sum = best.point.sum();
                    best.point.map(|a| a.max(0.0) / sum)
                }
                Region::Ball { .. } => best.point,
            };
            MipSolution {
                status,
                count: best.count,
                objective_value: inst.objective_value(best.count, &continuous),
                bound,
                indicators,
                top,
                continuous,
                node_count: nodes,
                wall_time_secs: wall,
            }
        }
    }
}

fn assignment(pb: &Problem<'_>, s: &DVector<f64>) -> (Vec<bool>, Vec<bool>) {
    let mut indicators = Vec::with_capacity(pb.blocks.len() * (pb.n - 1));
    let mut top = Vec::new();
    for block in &pb.blocks {
        let mut above = 0;
        for &(p, sign) in block {
            let side = if pb.permanent[p] || s[pb.pairs[p].0] >= s[pb.pairs[p].1] {
                1
            } else {
                -1
            };
            let other_above = side == sign;
            above += other_above as usize;
            indicators.push(other_above);
        }
        if pb.kappa > 0 {
            top.push(above < pb.kappa);
        }
    }
    (indicators, top)
}

/// Bound on the count after fixing the given indicators, or `None` when
/// the fixings leave no strictly ordered point in the region.
pub fn node_bound(inst: &MipInstance, fixings: &[(usize, bool)]) -> Option<usize> {
    let opts = SolveOptions::default();
    let mut search = Search {
        pb: Problem::new(inst),
        opts: &opts,
        best: None,
        nodes: 0,
        start: Instant::now(),
        target_pruned: false,
    };
    let mut node = search.pb.root();
    let inds: Vec<Indicator> = inst.indicators();
    let n = inst.n();
    for &(k, value) in fixings {
        let slot = k / (n - 1);
        let j = k % (n - 1);
        let (p, sign) = search.pb.blocks[slot][j];
        let side = if value { sign } else { -sign };
        debug_assert_eq!(inds[k].owner, inst.objective.owners()[slot]);
        match node.state[p] {
            0 => {
                let (a, b) = search.pb.constraint(p, side);
                if node.qp.add_constraint(a, b) != QpStatus::Feasible {
                    return None;
                }
                search.pb.set(&mut node, p, side);
            }
            st if st != side => return None,
            _ => {}
        }
    }
    if !node.qp.is_feasible() {
        return None;
    }
    let v = node.qp.point().clone();
    search.push_point(&mut node, v);
    search.best = None;
    match search.probe(&mut node) {
        Probe::Infeasible => None,
        _ => Some(search.pb.bound(&node)),
    }
}
