//! Linear algebra over diagrams: tensor product, matrix and matrix-vector
//! multiplication, pointwise operations, transposes, inner products,
//! measurement, and the tensor-size predictor.
//!
//! Matrices span `R0..R(n-1)` and `C0..C(n-1)`; vectors live on column
//! variables only. Matrix multiplication contracts the left operand's column
//! variables against the right operand's row variables level by level. When a
//! summation level is absent from both operands the partial result is simply
//! doubled, which is what keeps multiplication of compressed operands from
//! ever expanding them: a run of `i` skipped levels contributes a factor of
//! `2^i` to the terminal products instead of `2^i` recursive branches.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use crate::dd::TerminalOp;
use crate::dd::{DiagramHandle, Manager, NodeId, VarKind, VariableLabel};
use crate::error::{Error, Result};
use crate::numerics::ComplexValue;

/// A `2^n x 2^n` matrix as a diagram over interleaved row/column variables.
#[derive(Debug, Clone, Copy)]
pub struct QuiddMatrix {
    handle: DiagramHandle,
    qubits: u32,
}

/// A `2^n` vector as a diagram over column variables only.
#[derive(Debug, Clone, Copy)]
pub struct QuiddVector {
    handle: DiagramHandle,
    qubits: u32,
}

impl QuiddMatrix {
    pub(crate) fn new(handle: DiagramHandle, qubits: u32) -> Self {
        QuiddMatrix { handle, qubits }
    }

    pub fn handle(&self) -> DiagramHandle {
        self.handle
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }
}

impl QuiddVector {
    pub(crate) fn new(handle: DiagramHandle, qubits: u32) -> Self {
        QuiddVector { handle, qubits }
    }

    pub fn handle(&self) -> DiagramHandle {
        self.handle
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }
}

/// Result of applying a measurement operator to a state.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub post_state: QuiddVector,
    pub probability: f64,
}

fn qubit_level(mgr_pos: u64) -> u32 {
    (mgr_pos / 2).min(u32::MAX as u64) as u32
}

impl Manager {
    // ------------------------------------------------------------------
    // Constructors
    // ------------------------------------------------------------------

    /// Builds a matrix by evaluating `f(row, col)` on every element.
    /// Intended for small operands (custom gates, reference transforms);
    /// cost is `4^n` evaluations before reduction.
    pub fn matrix_from_fn(&self, qubits: u32, f: &dyn Fn(u64, u64) -> ComplexValue) -> QuiddMatrix {
        assert!(qubits <= 13, "matrix_from_fn is capped at 13 qubits");
        fn rec(
            g: &mut crate::dd::Inner,
            level: u32,
            qubits: u32,
            r: u64,
            c: u64,
            f: &dyn Fn(u64, u64) -> ComplexValue,
        ) -> NodeId {
            if level == qubits {
                let v = f(r, c);
                return g.term_node(v);
            }
            let e00 = rec(g, level + 1, qubits, r << 1, c << 1, f);
            let e01 = rec(g, level + 1, qubits, r << 1, (c << 1) | 1, f);
            let e10 = rec(g, level + 1, qubits, (r << 1) | 1, c << 1, f);
            let e11 = rec(g, level + 1, qubits, (r << 1) | 1, (c << 1) | 1, f);
            let hi = g.mk(VariableLabel::col(level), e11, e10);
            let lo = g.mk(VariableLabel::col(level), e01, e00);
            g.mk(VariableLabel::row(level), hi, lo)
        }
        let mut g = self.inner.borrow_mut();
        let root = rec(&mut g, 0, qubits, 0, 0, f);
        drop(g);
        QuiddMatrix::new(self.handle(root), qubits)
    }

    /// Builds a vector by evaluating `f(index)` on every element.
    pub fn vector_from_fn(&self, qubits: u32, f: &dyn Fn(u64) -> ComplexValue) -> QuiddVector {
        assert!(qubits <= 26, "vector_from_fn is capped at 26 qubits");
        fn rec(
            g: &mut crate::dd::Inner,
            level: u32,
            qubits: u32,
            i: u64,
            f: &dyn Fn(u64) -> ComplexValue,
        ) -> NodeId {
            if level == qubits {
                let v = f(i);
                return g.term_node(v);
            }
            let e0 = rec(g, level + 1, qubits, i << 1, f);
            let e1 = rec(g, level + 1, qubits, (i << 1) | 1, f);
            g.mk(VariableLabel::col(level), e1, e0)
        }
        let mut g = self.inner.borrow_mut();
        let root = rec(&mut g, 0, qubits, 0, f);
        drop(g);
        QuiddVector::new(self.handle(root), qubits)
    }

    pub fn matrix_from_dense(&self, qubits: u32, rows: &[Vec<(f64, f64)>]) -> QuiddMatrix {
        let dim = 1usize << qubits;
        assert_eq!(rows.len(), dim, "row count must be 2^qubits");
        let cfg = self.config();
        self.matrix_from_fn(qubits, &|r, c| {
            let (re, im) = rows[r as usize][c as usize];
            cfg.complex(re, im)
        })
    }

    pub fn vector_from_dense(&self, qubits: u32, elems: &[(f64, f64)]) -> QuiddVector {
        assert_eq!(elems.len(), 1usize << qubits);
        let cfg = self.config();
        self.vector_from_fn(qubits, &|i| {
            let (re, im) = elems[i as usize];
            cfg.complex(re, im)
        })
    }

    /// The `2^n x 2^n` identity, built structurally in `O(n)` nodes.
    pub fn identity_matrix(&self, qubits: u32) -> QuiddMatrix {
        let mut g = self.inner.borrow_mut();
        let zero = g.zero();
        let mut sub = g.one();
        for level in (0..qubits).rev() {
            let hi = g.mk(VariableLabel::col(level), sub, zero);
            let lo = g.mk(VariableLabel::col(level), zero, sub);
            sub = g.mk(VariableLabel::row(level), hi, lo);
        }
        drop(g);
        QuiddMatrix::new(self.handle(sub), qubits)
    }

    /// Computational basis state `|bits>`; `bits[0]` is the most significant
    /// index bit. Built structurally, so any width is cheap.
    pub fn basis_vector(&self, bits: &[bool]) -> QuiddVector {
        let mut g = self.inner.borrow_mut();
        let zero = g.zero();
        let mut sub = g.one();
        for (level, &bit) in bits.iter().enumerate().rev() {
            let level = level as u32;
            sub = if bit {
                g.mk(VariableLabel::col(level), sub, zero)
            } else {
                g.mk(VariableLabel::col(level), zero, sub)
            };
        }
        drop(g);
        QuiddVector::new(self.handle(sub), bits.len() as u32)
    }

    /// Diagonal matrix with `v` on the diagonal.
    pub fn diag_matrix(&self, v: &QuiddVector) -> Result<QuiddMatrix> {
        let root = self.check(v.handle)?;
        fn rec(
            g: &mut crate::dd::Inner,
            n: NodeId,
            level: u32,
            qubits: u32,
            memo: &mut FxHashMap<(NodeId, u32), NodeId>,
        ) -> NodeId {
            if level == qubits {
                return n;
            }
            if let Some(&r) = memo.get(&(n, level)) {
                return r;
            }
            let zero = g.zero();
            let (v0, v1) = g.cofactors(n, VariableLabel::col(level));
            let d0 = rec(g, v0, level + 1, qubits, memo);
            let d1 = rec(g, v1, level + 1, qubits, memo);
            let hi = g.mk(VariableLabel::col(level), d1, zero);
            let lo = g.mk(VariableLabel::col(level), zero, d0);
            let r = g.mk(VariableLabel::row(level), hi, lo);
            memo.insert((n, level), r);
            r
        }
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let root = rec(&mut g, root, 0, v.qubits, &mut memo);
        drop(g);
        Ok(QuiddMatrix::new(self.handle(root), v.qubits))
    }

    // ------------------------------------------------------------------
    // Tensor product
    // ------------------------------------------------------------------

    /// `a (x) b`: shift `b`'s variables past `a`'s, then multiply pointwise.
    pub fn tensor(&self, a: &QuiddMatrix, b: &QuiddMatrix) -> Result<QuiddMatrix> {
        let h = self.tensor_handles(a.handle, b.handle, a.qubits)?;
        Ok(QuiddMatrix::new(h, a.qubits + b.qubits))
    }

    pub fn tensor_vec(&self, a: &QuiddVector, b: &QuiddVector) -> Result<QuiddVector> {
        let h = self.tensor_handles(a.handle, b.handle, a.qubits)?;
        Ok(QuiddVector::new(h, a.qubits + b.qubits))
    }

    fn tensor_handles(
        &self,
        a: DiagramHandle,
        b: DiagramHandle,
        a_qubits: u32,
    ) -> Result<DiagramHandle> {
        let shifted = self.shift_variables(b, a_qubits);
        self.apply(a, shifted, &TerminalOp::Mul)
    }

    // ------------------------------------------------------------------
    // Pointwise operations
    // ------------------------------------------------------------------

    pub fn add_mat(&self, a: &QuiddMatrix, b: &QuiddMatrix) -> Result<QuiddMatrix> {
        self.same_size(a.qubits, b.qubits)?;
        Ok(QuiddMatrix::new(
            self.apply(a.handle, b.handle, &TerminalOp::Add)?,
            a.qubits,
        ))
    }

    pub fn add_vec(&self, a: &QuiddVector, b: &QuiddVector) -> Result<QuiddVector> {
        self.same_size(a.qubits, b.qubits)?;
        Ok(QuiddVector::new(
            self.apply(a.handle, b.handle, &TerminalOp::Add)?,
            a.qubits,
        ))
    }

    /// Element-wise product. With a diagonal operator stored as its diagonal
    /// vector this is how diagonal gates are applied to states.
    pub fn elementwise_mul(&self, a: &QuiddVector, b: &QuiddVector) -> Result<QuiddVector> {
        self.same_size(a.qubits, b.qubits)?;
        Ok(QuiddVector::new(
            self.apply(a.handle, b.handle, &TerminalOp::Mul)?,
            a.qubits,
        ))
    }

    pub fn elementwise_mul_mat(&self, a: &QuiddMatrix, b: &QuiddMatrix) -> Result<QuiddMatrix> {
        self.same_size(a.qubits, b.qubits)?;
        Ok(QuiddMatrix::new(
            self.apply(a.handle, b.handle, &TerminalOp::Mul)?,
            a.qubits,
        ))
    }

    /// Scalar multiplication: apply against a single-terminal diagram.
    pub fn scalar_mul_vec(&self, c: &ComplexValue, a: &QuiddVector) -> Result<QuiddVector> {
        let t = self.make_terminal(c.clone());
        Ok(QuiddVector::new(
            self.apply(a.handle, t, &TerminalOp::Mul)?,
            a.qubits,
        ))
    }

    pub fn scalar_mul_mat(&self, c: &ComplexValue, a: &QuiddMatrix) -> Result<QuiddMatrix> {
        let t = self.make_terminal(c.clone());
        Ok(QuiddMatrix::new(
            self.apply(a.handle, t, &TerminalOp::Mul)?,
            a.qubits,
        ))
    }

    fn same_size(&self, a: u32, b: u32) -> Result<()> {
        if a == b {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("{a} vs {b} qubits")))
        }
    }

    // ------------------------------------------------------------------
    // Matrix multiplication
    // ------------------------------------------------------------------

    pub fn matmul(&self, a: &QuiddMatrix, b: &QuiddMatrix) -> Result<QuiddMatrix> {
        self.same_size(a.qubits, b.qubits)?;
        let an = self.check(a.handle)?;
        let bn = self.check(b.handle)?;
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let r = mat_mult(&mut g, an, bn, 0, a.qubits, &mut memo);
        drop(g);
        Ok(QuiddMatrix::new(self.handle(r), a.qubits))
    }

    /// Matrix-vector product. The raw recursion leaves the result on row
    /// variables; the final relabeling moves it back onto column variables
    /// so the output is a valid vector again.
    pub fn matmul_vec(&self, a: &QuiddMatrix, v: &QuiddVector) -> Result<QuiddVector> {
        self.same_size(a.qubits, v.qubits)?;
        let an = self.check(a.handle)?;
        let vn = self.check(v.handle)?;
        let mut g = self.inner.borrow_mut();
        // The vector's column variables are the contraction index, which the
        // multiply expects on the right operand's row variables.
        let mut relab = FxHashMap::default();
        let vr = g.relabel(vn, &|v| VariableLabel::row(v.index), &mut relab);
        let mut memo = FxHashMap::default();
        let r = mat_mult(&mut g, an, vr, 0, a.qubits, &mut memo);
        relab.clear();
        let rc = g.relabel(r, &|v| VariableLabel::col(v.index), &mut relab);
        drop(g);
        Ok(QuiddVector::new(self.handle(rc), a.qubits))
    }

    // ------------------------------------------------------------------
    // Transpose family
    // ------------------------------------------------------------------

    pub fn transpose(&self, a: &QuiddMatrix) -> Result<QuiddMatrix> {
        let an = self.check(a.handle)?;
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let r = transpose_rec(&mut g, an, &mut memo);
        drop(g);
        Ok(QuiddMatrix::new(self.handle(r), a.qubits))
    }

    pub fn conjugate_transpose(&self, a: &QuiddMatrix) -> Result<QuiddMatrix> {
        let t = self.transpose(a)?;
        let tn = self.check(t.handle)?;
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let r = g.map_terminals(tn, &|v| v.conj(), &mut memo);
        drop(g);
        Ok(QuiddMatrix::new(self.handle(r), a.qubits))
    }

    pub fn conjugate_vec(&self, v: &QuiddVector) -> Result<QuiddVector> {
        let vn = self.check(v.handle)?;
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let r = g.map_terminals(vn, &|x| x.conj(), &mut memo);
        drop(g);
        Ok(QuiddVector::new(self.handle(r), v.qubits))
    }

    // ------------------------------------------------------------------
    // Inner product and measurement
    // ------------------------------------------------------------------

    /// `<u|v>`, conjugating the left operand.
    pub fn inner_product(&self, u: &QuiddVector, v: &QuiddVector) -> Result<ComplexValue> {
        self.same_size(u.qubits, v.qubits)?;
        let un = self.check(u.handle)?;
        let vn = self.check(v.handle)?;
        let mut g = self.inner.borrow_mut();
        let mut memo = FxHashMap::default();
        let uc = g.map_terminals(un, &|x| x.conj(), &mut memo);
        // Treat conj(u) as a 1 x 2^n matrix (columns = index) and v as a
        // 2^n x 1 matrix (rows = index): the multiply contracts completely.
        let mut relab = FxHashMap::default();
        let vr = g.relabel(vn, &|v| VariableLabel::row(v.index), &mut relab);
        let mut mm = FxHashMap::default();
        let r = mat_mult(&mut g, uc, vr, 0, u.qubits, &mut mm);
        let val = g
            .value(r)
            .expect("fully contracted product must be a terminal");
        Ok(val)
    }

    /// Projective measurement: post-state `M|psi> / sqrt(p)` with
    /// `p = <psi|M'M|psi>`.
    pub fn measure(&self, state: &QuiddVector, m: &QuiddMatrix) -> Result<MeasurementOutcome> {
        self.same_size(state.qubits, m.qubits)?;
        let w = self.matmul_vec(m, state)?;
        let p_val = self.inner_product(&w, &w)?;
        let (p_re, p_im) = p_val.to_f64_pair();
        debug_assert!(p_im.abs() < 1e-9);
        let probability = p_re.clamp(0.0, 1.0);
        if p_re < 1e-12 {
            return Err(Error::ZeroProbability);
        }
        let norm = self.make_terminal(p_val.sqrt_real());
        let post = self.apply(w.handle, norm, &TerminalOp::Div)?;
        Ok(MeasurementOutcome {
            post_state: QuiddVector::new(post, state.qubits),
            probability,
        })
    }

    // ------------------------------------------------------------------
    // Size prediction
    // ------------------------------------------------------------------

    /// Node total of `f1 (x) f2 (x) ... (x) fk` predicted without building
    /// the product: each factor's internal nodes are replicated once per
    /// distinct terminal of the prefix before it, and the final terminal
    /// count is the size of the iterated all-pairs product of terminal
    /// values under the manager's merge predicate.
    pub fn predicted_tensor_nodes(&self, factors: &[DiagramHandle]) -> Result<usize> {
        assert!(!factors.is_empty(), "predicted_tensor_nodes: empty list");
        for f in factors {
            self.check(*f)?;
        }
        let mut internal = self.node_stats(factors[0]).internal;
        let mut prefix: BTreeSet<u32> = self.terminal_set(factors[0]).into_iter().collect();
        for f in &factors[1..] {
            internal += self.node_stats(*f).internal * prefix.len();
            let f_terms = self.terminal_set(*f);
            let mut g = self.inner.borrow_mut();
            let mut next = BTreeSet::new();
            for &i in &prefix {
                for &j in &f_terms {
                    let prod = g.table.get(i).clone().mul(g.table.get(j));
                    next.insert(g.table.intern(prod));
                }
            }
            prefix = next;
        }
        Ok(internal + prefix.len())
    }

    // ------------------------------------------------------------------
    // Dense conversion (small operands; tests, reporting, custom gates)
    // ------------------------------------------------------------------

    pub fn to_dense_vector(&self, v: &QuiddVector) -> Vec<(f64, f64)> {
        assert!(v.qubits <= 26, "dense conversion capped at 26 qubits");
        let n = v.qubits as usize;
        (0u64..1 << n)
            .map(|i| {
                let bits: Vec<bool> = (0..n).map(|q| (i >> (n - 1 - q)) & 1 == 1).collect();
                self.eval(v.handle, &[], &bits).to_f64_pair()
            })
            .collect()
    }

    pub fn to_dense_matrix(&self, m: &QuiddMatrix) -> Vec<Vec<(f64, f64)>> {
        assert!(m.qubits <= 13, "dense conversion capped at 13 qubits");
        let n = m.qubits as usize;
        (0u64..1 << n)
            .map(|r| {
                let rbits: Vec<bool> = (0..n).map(|q| (r >> (n - 1 - q)) & 1 == 1).collect();
                (0u64..1 << n)
                    .map(|c| {
                        let cbits: Vec<bool> =
                            (0..n).map(|q| (c >> (n - 1 - q)) & 1 == 1).collect();
                        self.eval(m.handle, &rbits, &cbits).to_f64_pair()
                    })
                    .collect()
            })
            .collect()
    }

    /// True when the diagram's support contains no row variables.
    pub fn is_col_supported(&self, d: DiagramHandle) -> bool {
        let root = match self.check(d) {
            Ok(n) => n,
            Err(_) => return false,
        };
        let g = self.inner.borrow();
        let mut stack = vec![root];
        let mut seen = FxHashMap::default();
        while let Some(n) = stack.pop() {
            if seen.insert(n, ()).is_some() {
                continue;
            }
            if let crate::dd::Node::Internal {
                var,
                then_child,
                else_child,
            } = g.node(n)
            {
                if var.kind == VarKind::Row {
                    return false;
                }
                stack.push(then_child);
                stack.push(else_child);
            }
        }
        true
    }
}

/// The recursive multiply: contracts `a`'s column variables against `b`'s row
/// variables over qubit levels `level..qubits`. When both operands are
/// terminals the remaining summation levels are all skipped, contributing the
/// `2^(qubits-level)` factor to the terminal product.
fn mat_mult(
    g: &mut crate::dd::Inner,
    a: NodeId,
    b: NodeId,
    level: u32,
    qubits: u32,
    memo: &mut FxHashMap<(NodeId, NodeId, u32), NodeId>,
) -> NodeId {
    g.bump_steps();
    let la = qubit_level(g.position(a)).min(qubits);
    let lb = qubit_level(g.position(b)).min(qubits);
    let next = la.min(lb);
    if next >= qubits {
        // Both operands constant over every remaining level.
        let va = g.value(a).expect("terminal");
        let vb = g.value(b).expect("terminal");
        let prod = va.mul(&vb).mul_pow2(qubits - level);
        return g.term_node(prod);
    }
    if let Some(&r) = memo.get(&(a, b, level)) {
        return r;
    }
    let r = if next > level {
        // Levels level..next are skipped in both operands: each contributes
        // a factor of two to the contraction.
        let sub = mat_mult(g, a, b, next, qubits, memo);
        let cfg = g.config();
        let two_k = g.term_node(cfg.real(1.0).mul_pow2(next - level));
        let mut local = FxHashMap::default();
        g.apply_rec(sub, two_k, &TerminalOp::Mul, &mut local)
    } else {
        let row = VariableLabel::row(level);
        let col = VariableLabel::col(level);
        let (a0, a1) = g.cofactors(a, row);
        let (a00, a01) = g.cofactors(a0, col);
        let (a10, a11) = g.cofactors(a1, col);
        let (b0, b1) = g.cofactors(b, row);
        let (b00, b01) = g.cofactors(b0, col);
        let (b10, b11) = g.cofactors(b1, col);
        let mut dot = |g: &mut crate::dd::Inner, x0: NodeId, y0: NodeId, x1: NodeId, y1: NodeId| {
            let p0 = mat_mult(g, x0, y0, level + 1, qubits, memo);
            let p1 = mat_mult(g, x1, y1, level + 1, qubits, memo);
            let mut local = FxHashMap::default();
            g.apply_rec(p0, p1, &TerminalOp::Add, &mut local)
        };
        let c00 = dot(g, a00, b00, a01, b10);
        let c01 = dot(g, a00, b01, a01, b11);
        let c10 = dot(g, a10, b00, a11, b10);
        let c11 = dot(g, a10, b01, a11, b11);
        let hi = g.mk(col, c11, c10);
        let lo = g.mk(col, c01, c00);
        g.mk(row, hi, lo)
    };
    memo.insert((a, b, level), r);
    r
}

/// `result(r, c) = f(c, r)`, rebuilt level by level so the interleaved
/// variable order is preserved.
fn transpose_rec(
    g: &mut crate::dd::Inner,
    f: NodeId,
    memo: &mut FxHashMap<NodeId, NodeId>,
) -> NodeId {
    if g.value(f).is_some() {
        return f;
    }
    if let Some(&r) = memo.get(&f) {
        return r;
    }
    let level = qubit_level(g.position(f));
    let row = VariableLabel::row(level);
    let col = VariableLabel::col(level);
    let (f0, f1) = g.cofactors(f, row);
    let (f00, f01) = g.cofactors(f0, col);
    let (f10, f11) = g.cofactors(f1, col);
    let t00 = transpose_rec(g, f00, memo);
    let t01 = transpose_rec(g, f01, memo);
    let t10 = transpose_rec(g, f10, memo);
    let t11 = transpose_rec(g, f11, memo);
    let hi = g.mk(col, t11, t01);
    let lo = g.mk(col, t10, t00);
    let r = g.mk(row, hi, lo);
    memo.insert(f, r);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PrecisionConfig;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn mgr() -> Manager {
        Manager::new(PrecisionConfig::double()).unwrap()
    }

    fn hadamard(m: &Manager) -> QuiddMatrix {
        let cfg = m.config();
        m.matrix_from_fn(1, &|r, c| {
            if r == 1 && c == 1 {
                cfg.real(-FRAC_1_SQRT_2)
            } else {
                cfg.real(FRAC_1_SQRT_2)
            }
        })
    }

    fn dense_of(m: &Manager, a: &QuiddMatrix) -> Vec<Vec<Complex64>> {
        m.to_dense_matrix(a)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(re, im)| Complex64::new(re, im))
                    .collect()
            })
            .collect()
    }

    fn dense_vec_of(m: &Manager, v: &QuiddVector) -> Vec<Complex64> {
        m.to_dense_vector(v)
            .into_iter()
            .map(|(re, im)| Complex64::new(re, im))
            .collect()
    }

    fn dense_matmul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    fn random_matrix(m: &Manager, rng: &mut ChaCha8Rng, qubits: u32) -> QuiddMatrix {
        let vals: Vec<f64> = vec![0.0, 0.5, -0.5, 1.0, -1.0, 0.25];
        let dim = 1usize << qubits;
        let data: Vec<Vec<(f64, f64)>> = (0..dim)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        (
                            vals[rng.gen_range(0..vals.len())],
                            vals[rng.gen_range(0..vals.len())],
                        )
                    })
                    .collect()
            })
            .collect();
        m.matrix_from_dense(qubits, &data)
    }

    fn random_vector(m: &Manager, rng: &mut ChaCha8Rng, qubits: u32) -> QuiddVector {
        let vals: Vec<f64> = vec![0.0, 0.5, -0.5, 1.0, -1.0, 0.25];
        let data: Vec<(f64, f64)> = (0..1usize << qubits)
            .map(|_| {
                (
                    vals[rng.gen_range(0..vals.len())],
                    vals[rng.gen_range(0..vals.len())],
                )
            })
            .collect();
        m.vector_from_dense(qubits, &data)
    }

    #[test]
    fn hadamard_structure_matches_known_form() {
        let m = mgr();
        let h = hadamard(&m);
        let s = m.node_stats(h.handle());
        assert_eq!((s.internal, s.terminal, s.total), (2, 2, 4));
    }

    #[test]
    fn tensor_of_hadamards_block_pattern() {
        let m = mgr();
        let h = hadamard(&m);
        let hh = m.tensor(&h, &h).unwrap();
        assert_eq!(hh.qubits(), 2);
        let at = |r: u64, c: u64| {
            let rb = [(r >> 1) & 1 == 1, r & 1 == 1];
            let cb = [(c >> 1) & 1 == 1, c & 1 == 1];
            m.eval(hh.handle(), &rb, &cb).to_f64_pair().0
        };
        assert!((at(0b00, 0b00) - 0.5).abs() < 1e-15);
        assert!((at(0b11, 0b11) - 0.5).abs() < 1e-15);
        assert!((at(0b01, 0b01) + 0.5).abs() < 1e-15);
        assert!((at(0b10, 0b11) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn tensor_with_identity_vector_repeats_blocks() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vector(&m, &mut rng, 2);
        let one_qubit_zero = m.basis_vector(&[false]);
        let iv = m.tensor_vec(&one_qubit_zero, &v).unwrap();
        let dense_v = dense_vec_of(&m, &v);
        let dense_iv = dense_vec_of(&m, &iv);
        for i in 0..4 {
            assert_eq!(dense_iv[i], dense_v[i]);
            assert_eq!(dense_iv[i + 4], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn tensor_basis_states() {
        let m = mgr();
        let zero = m.basis_vector(&[false]);
        let one = m.basis_vector(&[true]);
        let v = m.tensor_vec(&zero, &one).unwrap();
        assert_eq!(
            dense_vec_of(&m, &v),
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0)
            ]
        );
    }

    #[test]
    fn matmul_hadamard2_on_basis() {
        let m = mgr();
        let h = hadamard(&m);
        let h2 = m.tensor(&h, &h).unwrap();
        let v = m.basis_vector(&[false, false]);
        let r = m.matmul_vec(&h2, &v).unwrap();
        assert!(m.is_col_supported(r.handle()));
        let dense = dense_vec_of(&m, &r);
        for amp in dense {
            assert!((amp - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn matmul_identity_is_identity() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for qubits in 1..=4 {
            let v = random_vector(&m, &mut rng, qubits);
            let id = m.identity_matrix(qubits);
            let r = m.matmul_vec(&id, &v).unwrap();
            assert_eq!(r.handle(), v.handle(), "I*v must be v, canonically");
        }
    }

    #[test]
    fn matmul_matches_dense_product() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..12 {
            let a = random_matrix(&m, &mut rng, 3);
            let b = random_matrix(&m, &mut rng, 3);
            let ab = m.matmul(&a, &b).unwrap();
            let expect = dense_matmul(&dense_of(&m, &a), &dense_of(&m, &b));
            let got = dense_of(&m, &ab);
            for i in 0..8 {
                for j in 0..8 {
                    assert!(
                        (got[i][j] - expect[i][j]).norm() < 1e-12,
                        "({i},{j}): {} vs {}",
                        got[i][j],
                        expect[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn matvec_matches_dense_product() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..12 {
            let a = random_matrix(&m, &mut rng, 3);
            let v = random_vector(&m, &mut rng, 3);
            let av = m.matmul_vec(&a, &v).unwrap();
            assert!(m.is_col_supported(av.handle()));
            let da = dense_of(&m, &a);
            let dv = dense_vec_of(&m, &v);
            let got = dense_vec_of(&m, &av);
            for i in 0..8 {
                let expect: Complex64 = (0..8).map(|k| da[i][k] * dv[k]).sum();
                assert!((got[i] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn add_and_scalar_match_dense() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v = random_vector(&m, &mut rng, 3);
        let w = random_vector(&m, &mut rng, 3);
        let zero = m.vector_from_fn(3, &|_| m.config().zero());
        assert_eq!(m.add_vec(&v, &zero).unwrap().handle(), v.handle());

        let sum = m.add_vec(&v, &w).unwrap();
        let two_v = m.scalar_mul_vec(&m.config().real(2.0), &v).unwrap();
        let dv = dense_vec_of(&m, &v);
        let dw = dense_vec_of(&m, &w);
        let dsum = dense_vec_of(&m, &sum);
        let dtwo = dense_vec_of(&m, &two_v);
        for i in 0..8 {
            assert!((dsum[i] - (dv[i] + dw[i])).norm() < 1e-14);
            assert!((dtwo[i] - dv[i] * 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn elementwise_mul_negates_marked_amplitude() {
        let m = mgr();
        let cfg = m.config();
        // conditional-phase-shift diagonal on 2 qubits: (-1, 1, 1, 1)
        let cps = m.vector_from_fn(2, &|i| if i == 0 { cfg.real(-1.0) } else { cfg.one() });
        let v = m.vector_from_fn(2, &|_| cfg.real(0.5));
        let r = m.elementwise_mul(&cps, &v).unwrap();
        assert_eq!(
            dense_vec_of(&m, &r),
            vec![
                Complex64::new(-0.5, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.5, 0.0)
            ]
        );
    }

    #[test]
    fn transpose_involution_and_semantics() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..8 {
            let a = random_matrix(&m, &mut rng, 3);
            let t = m.transpose(&a).unwrap();
            let tt = m.transpose(&t).unwrap();
            assert_eq!(tt.handle(), a.handle());
            let da = dense_of(&m, &a);
            let dt = dense_of(&m, &t);
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(dt[i][j], da[j][i]);
                }
            }
        }
    }

    #[test]
    fn conjugate_transpose_of_real_symmetric_is_identity_map() {
        let m = mgr();
        let h = hadamard(&m);
        let hn = m.tensor(&h, &h).unwrap();
        let ct = m.conjugate_transpose(&hn).unwrap();
        assert_eq!(ct.handle(), hn.handle());
    }

    #[test]
    fn conjugate_transpose_conjugates_terminals() {
        let m = mgr();
        let cfg = m.config();
        let d = m.matrix_from_fn(1, &|r, c| {
            if r == c {
                if r == 0 {
                    cfg.one()
                } else {
                    cfg.complex(0.0, 1.0)
                }
            } else {
                cfg.zero()
            }
        });
        let ct = m.conjugate_transpose(&d).unwrap();
        let dd = dense_of(&m, &ct);
        assert_eq!(dd[1][1], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn inner_product_basics() {
        let m = mgr();
        let b00 = m.basis_vector(&[false, false]);
        let ip = m.inner_product(&b00, &b00).unwrap();
        assert_eq!(ip.to_f64_pair(), (1.0, 0.0));

        // an equal superposition has unit norm
        let cfg = m.config();
        let sup = m.vector_from_fn(5, &|_| cfg.real(2f64.powf(-2.5)));
        let ip = m.inner_product(&sup, &sup).unwrap();
        assert!((ip.to_f64_pair().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inner_product_matches_dense_dot() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let u = random_vector(&m, &mut rng, 3);
            let v = random_vector(&m, &mut rng, 3);
            let ip = m.inner_product(&u, &v).unwrap();
            let du = dense_vec_of(&m, &u);
            let dv = dense_vec_of(&m, &v);
            let expect: Complex64 = (0..8).map(|i| du[i].conj() * dv[i]).sum();
            let (re, im) = ip.to_f64_pair();
            assert!((Complex64::new(re, im) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn measure_projector_basics() {
        let m = mgr();
        let cfg = m.config();
        // |0> measured with projector onto |0>: probability 1, state |0>.
        let zero_state = m.basis_vector(&[false]);
        let p0 = m.matrix_from_fn(1, &|r, c| {
            if r == 0 && c == 0 {
                cfg.one()
            } else {
                cfg.zero()
            }
        });
        let out = m.measure(&zero_state, &p0).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-12);
        assert_eq!(out.post_state.handle(), zero_state.handle());

        // H|0> measured with projector onto |1>: probability 1/2, state |1>.
        let h = hadamard(&m);
        let plus = m.matmul_vec(&h, &zero_state).unwrap();
        let p1 = m.matrix_from_fn(1, &|r, c| {
            if r == 1 && c == 1 {
                cfg.one()
            } else {
                cfg.zero()
            }
        });
        let out = m.measure(&plus, &p1).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-12);
        let dense = dense_vec_of(&m, &out.post_state);
        assert!((dense[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);

        // measuring an impossible branch errors
        let err = m.measure(&zero_state, &p1);
        assert!(matches!(err, Err(Error::ZeroProbability)));
    }

    #[test]
    fn measure_matches_dense_probability() {
        let m = mgr();
        let cfg = m.config();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let raw = random_vector(&m, &mut rng, 3);
        let n2 = m.inner_product(&raw, &raw).unwrap().to_f64_pair().0;
        let v = m.scalar_mul_vec(&cfg.real(1.0 / n2.sqrt()), &raw).unwrap();
        // projector onto qubit 0 = 1 (most significant index bit)
        let proj = m.matrix_from_fn(3, &|r, c| {
            if r == c && r >= 4 {
                cfg.one()
            } else {
                cfg.zero()
            }
        });
        let out = m.measure(&v, &proj).unwrap();
        let dv = dense_vec_of(&m, &v);
        let expect: f64 = (4..8).map(|i| dv[i].norm_sqr()).sum();
        assert!((out.probability - expect).abs() < 1e-12);
        let n = m
            .inner_product(&out.post_state, &out.post_state)
            .unwrap()
            .to_f64_pair()
            .0;
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_product_identity() {
        // (A (x) B)(u (x) v) == (A u) (x) (B v)
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..6 {
            let a = random_matrix(&m, &mut rng, 2);
            let b = random_matrix(&m, &mut rng, 1);
            let u = random_vector(&m, &mut rng, 2);
            let v = random_vector(&m, &mut rng, 1);
            let ab = m.tensor(&a, &b).unwrap();
            let uv = m.tensor_vec(&u, &v).unwrap();
            let lhs = m.matmul_vec(&ab, &uv).unwrap();
            let au = m.matmul_vec(&a, &u).unwrap();
            let bv = m.matmul_vec(&b, &v).unwrap();
            let rhs = m.tensor_vec(&au, &bv).unwrap();
            assert_eq!(lhs.handle(), rhs.handle());
        }
    }

    #[test]
    fn predicted_tensor_nodes_single_factor() {
        let m = mgr();
        let h = hadamard(&m);
        let stats = m.node_stats(h.handle());
        let pred = m.predicted_tensor_nodes(&[h.handle()]).unwrap();
        assert_eq!(pred, stats.total);
    }

    #[test]
    fn predicted_tensor_nodes_matches_hadamard_walls() {
        let m = mgr();
        let h = hadamard(&m);
        for n in 2..=8u32 {
            let factors: Vec<_> = (0..n).map(|_| h.handle()).collect();
            let pred = m.predicted_tensor_nodes(&factors).unwrap();
            let mut wall = h;
            for _ in 1..n {
                wall = m.tensor(&wall, &h).unwrap();
            }
            let actual = m.node_stats(wall.handle()).total;
            assert_eq!(pred, actual, "n={n}");
            assert_eq!(actual, 4 * n as usize);
        }
    }

    #[test]
    fn predicted_tensor_nodes_single_terminal_factors() {
        let m = mgr();
        let cfg = m.config();
        let ones = m.vector_from_fn(1, &|_| cfg.one());
        let factors: Vec<_> = (0..5).map(|_| ones.handle()).collect();
        let pred = m.predicted_tensor_nodes(&factors).unwrap();
        // all-ones factors have no internal nodes and the single terminal 1
        assert_eq!(pred, 1);
    }

    #[test]
    fn predicted_tensor_nodes_random_factors_exact() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..20 {
            let len = rng.gen_range(2..=6);
            let as_vectors = rng.gen_bool(0.5);
            let mut handles = Vec::new();
            let mut acc_vec: Option<QuiddVector> = None;
            let mut acc_mat: Option<QuiddMatrix> = None;
            for _ in 0..len {
                let q = rng.gen_range(1..=2);
                if as_vectors {
                    let v = random_vector(&m, &mut rng, q);
                    handles.push(v.handle());
                    acc_vec = Some(match acc_vec {
                        None => v,
                        Some(a) => m.tensor_vec(&a, &v).unwrap(),
                    });
                } else {
                    let a = random_matrix(&m, &mut rng, q);
                    handles.push(a.handle());
                    acc_mat = Some(match acc_mat {
                        None => a,
                        Some(x) => m.tensor(&x, &a).unwrap(),
                    });
                }
            }
            let actual = if as_vectors {
                m.node_stats(acc_vec.unwrap().handle()).total
            } else {
                m.node_stats(acc_mat.unwrap().handle()).total
            };
            let pred = m.predicted_tensor_nodes(&handles).unwrap();
            assert_eq!(pred, actual);
        }
    }

    #[test]
    fn persistent_terminals_give_affine_growth() {
        // tensor powers of a fixed factor with terminals in {0} u c*U_k grow
        // linearly: zero fit residual after the first two points
        let m = mgr();
        let cfg = m.config();
        let h = hadamard(&m);
        let x = m.matrix_from_fn(1, &|r, c| if r != c { cfg.one() } else { cfg.zero() });
        for factor in [h, x] {
            let mut totals = Vec::new();
            let mut acc = factor;
            for _ in 2..=20u32 {
                acc = m.tensor(&acc, &factor).unwrap();
                totals.push(m.node_stats(acc.handle()).total as i64);
            }
            let slope = totals[1] - totals[0];
            for w in totals.windows(2) {
                assert_eq!(w[1] - w[0], slope);
            }
        }
    }

    #[test]
    fn zero_result_collapses_to_zero_terminal() {
        let m = mgr();
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let v = random_vector(&m, &mut rng, 3);
        let neg = m.scalar_mul_vec(&m.config().real(-1.0), &v).unwrap();
        let sum = m.add_vec(&v, &neg).unwrap();
        assert_eq!(sum.handle(), m.zero());
    }
}
