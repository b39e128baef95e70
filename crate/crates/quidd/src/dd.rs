//! The decision-diagram node manager.
//!
//! A [`Manager`] owns every node of every diagram built through it: a slot
//! arena of nodes, a unique table that hash-conses each `(variable, then,
//! else)` triple to a single canonical node, the shared [`TerminalTable`] of
//! complex values, and the memo cache for the recursive [`Manager::apply`]
//! combinator. Handles returned to callers are plain copyable references into
//! the arena; two handles denote the same function exactly when they hold the
//! same node, which makes semantic equality a pointer comparison.
//!
//! Reduction invariants maintained everywhere:
//!   1. no two distinct live nodes are structurally identical;
//!   2. no internal node has equal then/else children;
//!   3. a parent's variable strictly precedes its children's variables in the
//!      interleaved order `R0 < C0 < R1 < C1 < ...`, terminals last.
//!
//! A manager and its handles are confined to one logical thread; distinct
//! managers are fully independent.

use std::cell::RefCell;
use std::fmt;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::numerics::{ComplexValue, PrecisionConfig, TerminalTable};

/// Row or column bit of a matrix index. Vectors use column variables only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariableLabel {
    pub kind: VarKind,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Row,
    Col,
}

impl VariableLabel {
    pub fn row(index: u32) -> Self {
        VariableLabel {
            kind: VarKind::Row,
            index,
        }
    }

    pub fn col(index: u32) -> Self {
        VariableLabel {
            kind: VarKind::Col,
            index,
        }
    }

    /// Position in the interleaved order `R0 < C0 < R1 < C1 < ...`.
    pub fn position(&self) -> u64 {
        2 * self.index as u64
            + match self.kind {
                VarKind::Row => 0,
                VarKind::Col => 1,
            }
    }
}

impl PartialOrd for VariableLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VariableLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.position().cmp(&other.position())
    }
}

impl fmt::Display for VariableLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::Row => write!(f, "R{}", self.index),
            VarKind::Col => write!(f, "C{}", self.index),
        }
    }
}

/// Terminals sort after every variable.
const TERMINAL_POS: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Terminal {
        term: u32,
    },
    Internal {
        var: VariableLabel,
        then_child: NodeId,
        else_child: NodeId,
    },
}

/// A rooted diagram in some manager. Copyable; validity is tied to the
/// owning manager (and to the root set of any explicit garbage collection).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiagramHandle {
    mgr: u64,
    node: NodeId,
}

/// Node counts of one diagram: distinct reachable internal and terminal nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStats {
    pub internal: usize,
    pub terminal: usize,
    pub total: usize,
}

/// The binary operation applied at terminal pairs by [`Manager::apply`].
///
/// Built-in operations are memoized in the manager cache. Custom closures
/// are memoized across calls only when given a stable tag; untagged closures
/// still memoize within a single call.
pub enum TerminalOp<'a> {
    Add,
    Mul,
    Div,
    Custom {
        tag: Option<u32>,
        f: &'a dyn Fn(&ComplexValue, &ComplexValue) -> ComplexValue,
    },
}

impl TerminalOp<'_> {
    fn cache_tag(&self) -> Option<u32> {
        match self {
            TerminalOp::Add => Some(0),
            TerminalOp::Mul => Some(1),
            TerminalOp::Div => Some(2),
            TerminalOp::Custom { tag, .. } => tag.map(|t| t.checked_add(16).expect("tag overflow")),
        }
    }

    fn eval(&self, a: &ComplexValue, b: &ComplexValue) -> ComplexValue {
        match self {
            TerminalOp::Add => a.add(b),
            TerminalOp::Mul => a.mul(b),
            TerminalOp::Div => a.div(b),
            TerminalOp::Custom { f, .. } => f(a, b),
        }
    }
}

static NEXT_MANAGER_ID: AtomicU64 = AtomicU64::new(1);

pub struct Manager {
    id: u64,
    cfg: PrecisionConfig,
    pub(crate) inner: RefCell<Inner>,
}

pub(crate) struct Inner {
    cfg: PrecisionConfig,
    slots: Vec<Option<Node>>,
    free: Vec<u32>,
    unique: FxHashMap<(VariableLabel, NodeId, NodeId), NodeId>,
    pub(crate) table: TerminalTable,
    term_nodes: FxHashMap<u32, NodeId>,
    apply_cache: FxHashMap<(u32, NodeId, NodeId), NodeId>,
    zero: NodeId,
    one: NodeId,
    /// Total recursive apply entries; the Grover driver uses deltas of this
    /// counter to compare per-iteration work.
    apply_steps: u64,
}

impl Inner {
    pub(crate) fn node(&self, n: NodeId) -> Node {
        self.slots[n.idx()].expect("dangling node reference (collected?)")
    }

    pub(crate) fn position(&self, n: NodeId) -> u64 {
        match self.node(n) {
            Node::Terminal { .. } => TERMINAL_POS,
            Node::Internal { var, .. } => var.position(),
        }
    }

    pub(crate) fn value(&self, n: NodeId) -> Option<ComplexValue> {
        match self.node(n) {
            Node::Terminal { term } => Some(self.table.get(term).clone()),
            Node::Internal { .. } => None,
        }
    }

    pub(crate) fn term_index(&self, n: NodeId) -> Option<u32> {
        match self.node(n) {
            Node::Terminal { term } => Some(term),
            Node::Internal { .. } => None,
        }
    }

    pub(crate) fn zero(&self) -> NodeId {
        self.zero
    }

    pub(crate) fn one(&self) -> NodeId {
        self.one
    }

    pub(crate) fn config(&self) -> PrecisionConfig {
        *self.table.config()
    }

    pub(crate) fn bump_steps(&mut self) {
        self.apply_steps += 1;
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        if let Some(i) = self.free.pop() {
            self.slots[i as usize] = Some(node);
            NodeId(i)
        } else {
            self.slots.push(Some(node));
            NodeId((self.slots.len() - 1) as u32)
        }
    }

    /// Canonical terminal node for a value.
    pub(crate) fn term_node(&mut self, v: ComplexValue) -> NodeId {
        let term = self.table.intern(v);
        if let Some(&n) = self.term_nodes.get(&term) {
            return n;
        }
        let n = self.alloc(Node::Terminal { term });
        self.term_nodes.insert(term, n);
        n
    }

    /// Canonical internal node; collapses equal children (reduction rule 2)
    /// and hash-conses through the unique table (rule 1). The caller must
    /// respect the variable order; `debug_assert`s guard it.
    pub(crate) fn mk(&mut self, var: VariableLabel, then_child: NodeId, else_child: NodeId) -> NodeId {
        if then_child == else_child {
            return then_child;
        }
        debug_assert!(var.position() < self.position(then_child));
        debug_assert!(var.position() < self.position(else_child));
        if let Some(&n) = self.unique.get(&(var, then_child, else_child)) {
            return n;
        }
        let n = self.alloc(Node::Internal {
            var,
            then_child,
            else_child,
        });
        self.unique.insert((var, then_child, else_child), n);
        n
    }

    /// Children of `n` with respect to `var`: the cofactor pair
    /// `(else, then)`. A node whose top variable lies below `var` is constant
    /// in `var`, so both cofactors are `n` itself.
    pub(crate) fn cofactors(&self, n: NodeId, var: VariableLabel) -> (NodeId, NodeId) {
        match self.node(n) {
            Node::Internal {
                var: v,
                then_child,
                else_child,
            } if v == var => (else_child, then_child),
            _ => {
                debug_assert!(self.position(n) > var.position());
                (n, n)
            }
        }
    }

    pub(crate) fn apply_rec(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: &TerminalOp,
        local: &mut FxHashMap<(NodeId, NodeId), NodeId>,
    ) -> NodeId {
        self.apply_steps += 1;
        // Absorbing/identity elements of the built-in ops.
        match op {
            TerminalOp::Add => {
                if a == self.zero {
                    return b;
                }
                if b == self.zero {
                    return a;
                }
            }
            TerminalOp::Mul => {
                if a == self.zero || b == self.zero {
                    return self.zero;
                }
                if a == self.one {
                    return b;
                }
                if b == self.one {
                    return a;
                }
            }
            TerminalOp::Div => {
                if b == self.one {
                    return a;
                }
            }
            TerminalOp::Custom { .. } => {}
        }
        if let (Some(ta), Some(tb)) = (self.term_index(a), self.term_index(b)) {
            let v = op.eval(&self.table.get(ta).clone(), &self.table.get(tb).clone());
            return self.term_node(v);
        }
        let tag = op.cache_tag();
        if let Some(t) = tag {
            if let Some(&r) = self.apply_cache.get(&(t, a, b)) {
                return r;
            }
        } else if let Some(&r) = local.get(&(a, b)) {
            return r;
        }
        let pa = self.position(a);
        let pb = self.position(b);
        // The three recursive rules: expand whichever operand's top variable
        // comes first in the order; expand both on a tie.
        let (var, a1, a0, b1, b0) = if pa < pb {
            let Node::Internal {
                var,
                then_child,
                else_child,
            } = self.node(a)
            else {
                unreachable!()
            };
            (var, then_child, else_child, b, b)
        } else if pa > pb {
            let Node::Internal {
                var,
                then_child,
                else_child,
            } = self.node(b)
            else {
                unreachable!()
            };
            (var, a, a, then_child, else_child)
        } else {
            let Node::Internal {
                var,
                then_child: at,
                else_child: ae,
            } = self.node(a)
            else {
                unreachable!()
            };
            let (be, bt) = self.cofactors(b, var);
            (var, at, ae, bt, be)
        };
        let t = self.apply_rec(a1, b1, op, local);
        let e = self.apply_rec(a0, b0, op, local);
        let r = self.mk(var, t, e);
        if let Some(tg) = tag {
            self.apply_cache.insert((tg, a, b), r);
        } else {
            local.insert((a, b), r);
        }
        r
    }

    /// Rebuilds `n` with every terminal value passed through `f`.
    pub(crate) fn map_terminals(
        &mut self,
        n: NodeId,
        f: &dyn Fn(&ComplexValue) -> ComplexValue,
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&n) {
            return r;
        }
        let r = match self.node(n) {
            Node::Terminal { term } => {
                let v = f(&self.table.get(term).clone());
                self.term_node(v)
            }
            Node::Internal {
                var,
                then_child,
                else_child,
            } => {
                let t = self.map_terminals(then_child, f, memo);
                let e = self.map_terminals(else_child, f, memo);
                self.mk(var, t, e)
            }
        };
        memo.insert(n, r);
        r
    }

    /// Rebuilds `n` with variables relabeled through `f`, which must be
    /// strictly monotone on the diagram's support.
    pub(crate) fn relabel(
        &mut self,
        n: NodeId,
        f: &dyn Fn(VariableLabel) -> VariableLabel,
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&n) {
            return r;
        }
        let r = match self.node(n) {
            Node::Terminal { .. } => n,
            Node::Internal {
                var,
                then_child,
                else_child,
            } => {
                let t = self.relabel(then_child, f, memo);
                let e = self.relabel(else_child, f, memo);
                self.mk(f(var), t, e)
            }
        };
        memo.insert(n, r);
        r
    }
}

impl Manager {
    pub fn new(cfg: PrecisionConfig) -> Result<Self> {
        cfg.validate()?;
        let mut inner = Inner {
            cfg,
            slots: Vec::new(),
            free: Vec::new(),
            unique: FxHashMap::default(),
            table: TerminalTable::new(cfg),
            term_nodes: FxHashMap::default(),
            apply_cache: FxHashMap::default(),
            zero: NodeId(0),
            one: NodeId(0),
            apply_steps: 0,
        };
        inner.zero = inner.term_node(cfg.zero());
        inner.one = inner.term_node(cfg.one());
        Ok(Manager {
            id: NEXT_MANAGER_ID.fetch_add(1, Ordering::Relaxed),
            cfg,
            inner: RefCell::new(inner),
        })
    }

    pub fn config(&self) -> PrecisionConfig {
        self.cfg
    }

    pub(crate) fn handle(&self, node: NodeId) -> DiagramHandle {
        DiagramHandle { mgr: self.id, node }
    }

    pub(crate) fn check(&self, h: DiagramHandle) -> Result<NodeId> {
        if h.mgr == self.id {
            Ok(h.node)
        } else {
            Err(Error::ManagerMismatch)
        }
    }

    fn expect(&self, h: DiagramHandle) -> NodeId {
        self.check(h).expect("handle from a different manager")
    }

    /// Terminal diagram carrying (the interned representative of) `value`.
    pub fn make_terminal(&self, value: ComplexValue) -> DiagramHandle {
        let n = self.inner.borrow_mut().term_node(value);
        self.handle(n)
    }

    /// Terminal diagram from double literals, rounded to this manager's
    /// precision.
    pub fn constant(&self, re: f64, im: f64) -> DiagramHandle {
        let cfg = self.config();
        self.make_terminal(cfg.complex(re, im))
    }

    pub fn zero(&self) -> DiagramHandle {
        self.handle(self.inner.borrow().zero)
    }

    pub fn one(&self) -> DiagramHandle {
        self.handle(self.inner.borrow().one)
    }

    /// Canonical internal node over `var`. Fails unless `var` strictly
    /// precedes the top variables of both children.
    pub fn make_internal(
        &self,
        var: VariableLabel,
        then_child: DiagramHandle,
        else_child: DiagramHandle,
    ) -> Result<DiagramHandle> {
        let t = self.check(then_child)?;
        let e = self.check(else_child)?;
        let mut g = self.inner.borrow_mut();
        for child in [t, e] {
            if g.position(child) <= var.position() {
                return Err(Error::OrderingViolation(format!(
                    "{} does not precede the top variable of its child",
                    var
                )));
            }
        }
        let n = g.mk(var, t, e);
        Ok(self.handle(n))
    }

    /// Pointwise combination of two diagrams under `op`, with the recursion
    /// driven by the variable order and results hash-consed into reduced
    /// canonical form.
    pub fn apply(
        &self,
        a: DiagramHandle,
        b: DiagramHandle,
        op: &TerminalOp,
    ) -> Result<DiagramHandle> {
        let an = self.check(a)?;
        let bn = self.check(b)?;
        let mut g = self.inner.borrow_mut();
        let mut local = FxHashMap::default();
        let r = g.apply_rec(an, bn, op, &mut local);
        Ok(self.handle(r))
    }

    /// The value stored at the root, if the diagram is a single terminal.
    pub fn terminal_value(&self, d: DiagramHandle) -> Option<ComplexValue> {
        let n = self.expect(d);
        self.inner.borrow().value(n)
    }

    pub fn top_var(&self, d: DiagramHandle) -> Option<VariableLabel> {
        let n = self.expect(d);
        match self.inner.borrow().node(n) {
            Node::Terminal { .. } => None,
            Node::Internal { var, .. } => Some(var),
        }
    }

    /// Matrix/vector element at the given binary row/column index.
    /// `row_bits[i]` assigns `R_i`, `col_bits[i]` assigns `C_i`; variables
    /// absent from the diagram's support may be omitted.
    pub fn eval(&self, d: DiagramHandle, row_bits: &[bool], col_bits: &[bool]) -> ComplexValue {
        let mut n = self.expect(d);
        let g = self.inner.borrow();
        loop {
            match g.node(n) {
                Node::Terminal { term } => return g.table.get(term).clone(),
                Node::Internal {
                    var,
                    then_child,
                    else_child,
                } => {
                    let bits = match var.kind {
                        VarKind::Row => row_bits,
                        VarKind::Col => col_bits,
                    };
                    let bit = *bits
                        .get(var.index as usize)
                        .unwrap_or_else(|| panic!("eval: no bit supplied for {}", var));
                    n = if bit { then_child } else { else_child };
                }
            }
        }
    }

    /// Same diagram with every `R_i`/`C_i` moved to `R_(i+offset)`/`C_(i+offset)`.
    pub fn shift_variables(&self, d: DiagramHandle, offset: u32) -> DiagramHandle {
        let n = self.expect(d);
        if offset == 0 {
            return d;
        }
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let r = g.relabel(
            n,
            &|v| VariableLabel {
                kind: v.kind,
                index: v.index + offset,
            },
            &mut memo,
        );
        self.handle(r)
    }

    /// Counts distinct reachable internal and terminal nodes.
    pub fn node_stats(&self, d: DiagramHandle) -> NodeStats {
        let root = self.expect(d);
        let g = self.inner.borrow();
        let mut seen = FxHashMap::default();
        let mut stack = vec![root];
        let mut internal = 0usize;
        let mut terminal = 0usize;
        while let Some(n) = stack.pop() {
            if seen.insert(n, ()).is_some() {
                continue;
            }
            match g.node(n) {
                Node::Terminal { .. } => terminal += 1,
                Node::Internal {
                    then_child,
                    else_child,
                    ..
                } => {
                    internal += 1;
                    stack.push(then_child);
                    stack.push(else_child);
                }
            }
        }
        NodeStats {
            internal,
            terminal,
            total: internal + terminal,
        }
    }

    /// Distinct terminal values reachable from `d`, as table indices.
    pub fn terminal_set(&self, d: DiagramHandle) -> Vec<u32> {
        let root = self.expect(d);
        let g = self.inner.borrow();
        let mut seen = FxHashMap::default();
        let mut stack = vec![root];
        let mut terms = Vec::new();
        while let Some(n) = stack.pop() {
            if seen.insert(n, ()).is_some() {
                continue;
            }
            match g.node(n) {
                Node::Terminal { term } => terms.push(term),
                Node::Internal {
                    then_child,
                    else_child,
                    ..
                } => {
                    stack.push(then_child);
                    stack.push(else_child);
                }
            }
        }
        terms.sort_unstable();
        terms
    }

    pub fn terminal_value_of(&self, index: u32) -> ComplexValue {
        self.inner.borrow().table.get(index).clone()
    }

    pub fn table_len(&self) -> usize {
        self.inner.borrow().table.len()
    }

    pub fn table_bytes(&self) -> usize {
        self.inner.borrow().table.approx_bytes()
    }

    /// Live node count across the whole manager.
    pub fn live_nodes(&self) -> usize {
        let g = self.inner.borrow();
        g.slots.len() - g.free.len()
    }

    /// Cumulative recursive `apply` entries (includes the derived linear
    /// algebra operations).
    pub fn apply_steps(&self) -> u64 {
        self.inner.borrow().apply_steps
    }

    /// Drops all memoized apply results. Semantically invisible: subsequent
    /// operations return identical nodes, only timing changes.
    pub fn clear_caches(&self) {
        self.inner.borrow_mut().apply_cache.clear();
    }

    /// Mark-and-sweep from the given roots. Frees every node not reachable
    /// from `roots` and clears the apply cache. Handles not covered by
    /// `roots` become dangling; the terminal value table is never shrunk, so
    /// terminal indices stay stable. Returns the number of freed nodes.
    pub fn collect_garbage(&self, roots: &[DiagramHandle]) -> usize {
        let mut g = self.inner.borrow_mut();
        let mut live = vec![false; g.slots.len()];
        let mut stack: Vec<NodeId> = roots.iter().map(|h| self.expect(*h)).collect();
        while let Some(n) = stack.pop() {
            if live[n.idx()] {
                continue;
            }
            live[n.idx()] = true;
            if let Node::Internal {
                then_child,
                else_child,
                ..
            } = g.node(n)
            {
                stack.push(then_child);
                stack.push(else_child);
            }
        }
        // zero/one terminals are pinned: apply shortcuts depend on them.
        for pinned in [g.zero, g.one] {
            live[pinned.idx()] = true;
        }
        let mut freed = 0;
        for i in 0..g.slots.len() {
            if g.slots[i].is_some() && !live[i] {
                g.slots[i] = None;
                g.free.push(i as u32);
                freed += 1;
            }
        }
        if freed > 0 {
            g.unique.clear();
            g.term_nodes.clear();
            for i in 0..g.slots.len() {
                if let Some(node) = g.slots[i] {
                    match node {
                        Node::Terminal { term } => {
                            g.term_nodes.insert(term, NodeId(i as u32));
                        }
                        Node::Internal {
                            var,
                            then_child,
                            else_child,
                        } => {
                            g.unique.insert((var, then_child, else_child), NodeId(i as u32));
                        }
                    }
                }
            }
        }
        g.apply_cache.clear();
        freed
    }

    /// Structural audit: every reachable node satisfies the reduction rules
    /// and the ordering invariant. Test support.
    pub fn audit(&self, d: DiagramHandle) -> std::result::Result<(), String> {
        let root = self.expect(d);
        let g = self.inner.borrow();
        let mut seen = FxHashMap::default();
        let mut shapes: FxHashMap<(VariableLabel, NodeId, NodeId), NodeId> = FxHashMap::default();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if seen.insert(n, ()).is_some() {
                continue;
            }
            if let Node::Internal {
                var,
                then_child,
                else_child,
            } = g.node(n)
            {
                if then_child == else_child {
                    return Err(format!("node {n:?} violates reduction rule 2"));
                }
                if g.position(then_child) <= var.position()
                    || g.position(else_child) <= var.position()
                {
                    return Err(format!("node {n:?} violates the variable order"));
                }
                if let Some(prev) = shapes.insert((var, then_child, else_child), n) {
                    return Err(format!("nodes {prev:?} and {n:?} are structurally identical"));
                }
                stack.push(then_child);
                stack.push(else_child);
            }
        }
        Ok(())
    }

    /// DOT-format dump for debugging and documentation.
    pub fn write_dot(&self, d: DiagramHandle, out: &mut dyn Write) -> io::Result<()> {
        let root = self.expect(d);
        let g = self.inner.borrow();
        writeln!(out, "digraph quidd {{")?;
        writeln!(out, "  rankdir=TB;")?;
        let mut seen = FxHashMap::default();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if seen.insert(n, ()).is_some() {
                continue;
            }
            match g.node(n) {
                Node::Terminal { term } => {
                    writeln!(
                        out,
                        "  n{} [shape=box, label=\"{}\"];",
                        n.0,
                        g.table.get(term)
                    )?;
                }
                Node::Internal {
                    var,
                    then_child,
                    else_child,
                } => {
                    writeln!(out, "  n{} [shape=circle, label=\"{}\"];", n.0, var)?;
                    writeln!(out, "  n{} -> n{} [style=solid];", n.0, then_child.0)?;
                    writeln!(out, "  n{} -> n{} [style=dashed];", n.0, else_child.0)?;
                    stack.push(then_child);
                    stack.push(else_child);
                }
            }
        }
        writeln!(out, "}}")
    }
}
