//! Dense tensors over a single base dimension `n`, with the symmetrization and
//! contraction primitives the coefficient formulas are written in.
//!
//! Everything here is deliberately small and dense: base ranks stay ≤ 8 and
//! `n ≤ 5`, so an explicit `Vec` with row-major strides beats any sparse or
//! symmetry-packed scheme on both speed and auditability. Two entry types are
//! provided: scalar complex entries ([`Tensor`]) and fiber-endomorphism entries
//! ([`FiberTensor`], a `d_f×d_f` complex matrix per base multi-index).

use crate::{C64, CMat, Error, Result};

/// Dense complex tensor with `rank` slots, each of dimension `n`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub rank: usize,
    pub data: Vec<C64>,
}

#[inline]
fn offset(n: usize, idx: &[usize]) -> usize {
    let mut o = 0;
    for &i in idx {
        debug_assert!(i < n);
        o = o * n + i;
    }
    o
}

/// Iterate over all multi-indices of the given rank in row-major order.
pub fn for_each_index(n: usize, rank: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; rank];
    loop {
        f(&idx);
        // increment little-endian on the last slot
        let mut k = rank;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
        if rank == 0 {
            return;
        }
    }
}

impl Tensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Tensor { n, rank, data: vec![C64::new(0.0, 0.0); n.pow(rank as u32)] }
    }

    /// Rank-0 tensor holding a single scalar.
    pub fn scalar(c: C64) -> Self {
        Tensor { n: 1, rank: 0, data: vec![c] }
    }

    pub fn scalar_value(&self) -> C64 {
        assert_eq!(self.rank, 0, "scalar_value on rank-{} tensor", self.rank);
        self.data[0]
    }

    /// Kronecker delta δ_{μν}.
    pub fn delta(n: usize) -> Self {
        let mut t = Tensor::zeros(n, 2);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn from_fn(n: usize, rank: usize, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut t = Tensor::zeros(n, rank);
        for_each_index(n, rank, |idx| {
            let o = offset(n, idx);
            t.data[o] = f(idx);
        });
        t
    }

    pub fn from_vector(v: &[C64]) -> Self {
        Tensor { n: v.len(), rank: 1, data: v.to_vec() }
    }

    pub fn from_matrix(m: &CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        Tensor::from_fn(n, 2, |idx| m[(idx[0], idx[1])])
    }

    pub fn to_matrix(&self) -> CMat {
        assert_eq!(self.rank, 2);
        CMat::from_fn(self.n, self.n, |r, c| self.data[r * self.n + c])
    }

    #[inline]
    pub fn at(&self, idx: &[usize]) -> C64 {
        debug_assert_eq!(idx.len(), self.rank);
        self.data[offset(self.n, idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: C64) {
        let o = offset(self.n, idx);
        self.data[o] = v;
    }

    #[inline]
    pub fn add_at(&mut self, idx: &[usize], v: C64) {
        let o = offset(self.n, idx);
        self.data[o] += v;
    }

    pub fn scale(&self, c: C64) -> Self {
        Tensor { n: self.n, rank: self.rank, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn add(&self, o: &Tensor) -> Self {
        assert_eq!((self.n, self.rank), (o.n, o.rank), "tensor shape mismatch in add");
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Tensor) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn axpy(&mut self, c: C64, o: &Tensor) {
        assert_eq!((self.n, self.rank), (o.n, o.rank), "tensor shape mismatch in axpy");
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += c * b;
        }
    }

    /// Outer product; `self`'s slots come first.
    pub fn outer(&self, o: &Tensor) -> Self {
        let n = if self.rank > 0 { self.n } else { o.n };
        if self.rank > 0 && o.rank > 0 {
            assert_eq!(self.n, o.n, "outer product dimension mismatch");
        }
        let mut t = Tensor::zeros(n, self.rank + o.rank);
        let on = o.data.len();
        for (i, a) in self.data.iter().enumerate() {
            for (j, b) in o.data.iter().enumerate() {
                t.data[i * on + j] = a * b;
            }
        }
        t
    }

    /// Reorder slots: output slot `k` takes input slot `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank);
        let mut t = Tensor::zeros(self.n, self.rank);
        let mut sidx = vec![0usize; self.rank];
        for_each_index(self.n, self.rank, |idx| {
            for k in 0..self.rank {
                sidx[perm[k]] = idx[k];
            }
            t.data[offset(self.n, idx)] = self.data[offset(self.n, &sidx)];
        });
        t
    }

    /// Contract one slot with the first slot of a rank-2 tensor:
    /// `out[.., s, ..] = Σ_a self[.., a, ..] m[a, s]` with `s` in the same
    /// position. Chaining these keeps large networks at O(n^{rank+1})
    /// instead of one exponential multi-index sweep.
    pub fn contract_slot(&self, slot: usize, m: &Tensor) -> Self {
        assert!(slot < self.rank && m.rank == 2 && m.n == self.n);
        let n = self.n;
        let mut out = Tensor::zeros(n, self.rank);
        let mut jdx = vec![0usize; self.rank];
        for_each_index(n, self.rank, |idx| {
            jdx.copy_from_slice(idx);
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..n {
                jdx[slot] = a;
                acc += self.data[offset(n, &jdx)] * m.at(&[a, idx[slot]]);
            }
            out.data[offset(n, idx)] = acc;
        });
        out
    }

    /// Contract one slot against a rank-1 tensor, dropping the slot.
    pub fn contract_slot_vec(&self, slot: usize, v: &Tensor) -> Self {
        assert!(slot < self.rank && v.rank == 1 && v.n == self.n);
        let n = self.n;
        let mut out = Tensor::zeros(n, self.rank - 1);
        let mut full = vec![0usize; self.rank];
        for_each_index(n, self.rank - 1, |idx| {
            full[..slot].copy_from_slice(&idx[..slot]);
            full[slot + 1..].copy_from_slice(&idx[slot..]);
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..n {
                full[slot] = a;
                acc += self.data[offset(n, &full)] * v.at(&[a]);
            }
            out.data[offset(n, idx)] = acc;
        });
        out
    }

    /// Trace over two slots, producing a tensor of rank − 2.
    pub fn trace_pair(&self, a: usize, b: usize) -> Self {
        assert!(a != b && a < self.rank && b < self.rank);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut out = Tensor::zeros(self.n, self.rank - 2);
        for_each_index(self.n, self.rank - 2, |idx| {
            let mut full = Vec::with_capacity(self.rank);
            let mut it = idx.iter();
            for k in 0..self.rank {
                if k == lo || k == hi {
                    full.push(0);
                } else {
                    full.push(*it.next().unwrap());
                }
            }
            let mut s = C64::new(0.0, 0.0);
            for m in 0..self.n {
                full[lo] = m;
                full[hi] = m;
                s += self.data[offset(self.n, &full)];
            }
            out.data[offset(self.n, idx)] = s;
        });
        out
    }

    /// Symmetrize over the given slots (normalized: mean over the orbit).
    ///
    /// Computed orbit-wise in two passes instead of summing |slots|!
    /// permutations, so the cost stays O(n^rank · rank log rank) even for
    /// full-rank symmetrizations of rank-8 tensors.
    pub fn symmetrize(&self, slots: &[usize]) -> Self {
        if slots.len() < 2 {
            return self.clone();
        }
        let n = self.n;
        let mut sum: Vec<C64> = vec![C64::new(0.0, 0.0); self.data.len()];
        let mut cnt: Vec<u32> = vec![0; self.data.len()];
        let mut canon = vec![0usize; self.rank];
        let mut vals = vec![0usize; slots.len()];
        for_each_index(n, self.rank, |idx| {
            for (k, &s) in slots.iter().enumerate() {
                vals[k] = idx[s];
            }
            vals.sort_unstable();
            canon.copy_from_slice(idx);
            for (k, &s) in slots.iter().enumerate() {
                canon[s] = vals[k];
            }
            let co = offset(n, &canon);
            sum[co] += self.data[offset(n, idx)];
            cnt[co] += 1;
        });
        let mut out = Tensor::zeros(n, self.rank);
        for_each_index(n, self.rank, |idx| {
            for (k, &s) in slots.iter().enumerate() {
                vals[k] = idx[s];
            }
            vals.sort_unstable();
            canon.copy_from_slice(idx);
            for (k, &s) in slots.iter().enumerate() {
                canon[s] = vals[k];
            }
            let co = offset(n, &canon);
            out.data[offset(n, idx)] = sum[co] / (cnt[co] as f64);
        });
        out
    }

    /// Antisymmetrize over exactly two slots: ½(T_{...a...b...} − T_{...b...a...}).
    pub fn antisymmetrize_pair(&self, a: usize, b: usize) -> Self {
        let mut perm: Vec<usize> = (0..self.rank).collect();
        perm.swap(a, b);
        let swapped = self.permute(&perm);
        self.sub(&swapped).scale(C64::new(0.5, 0.0))
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn all_close(&self, o: &Tensor, tol: f64) -> bool {
        self.n == o.n && self.rank == o.rank && self.sub(o).norm_inf() <= tol
    }

    /// Change frame on every slot: T'_{i₁…} = Q_{i₁j₁}⋯Q_{iᵣjᵣ} T_{j₁…}.
    ///
    /// Applied one slot at a time, so the cost is rank·n^(rank+1) rather
    /// than n^(2·rank).
    pub fn rotate(&self, q: &crate::RMat) -> Self {
        assert_eq!(q.nrows(), self.n);
        assert_eq!(q.ncols(), self.n);
        let mut cur = self.clone();
        for slot in 0..self.rank {
            let mut next = Tensor::zeros(self.n, self.rank);
            let mut src = vec![0usize; self.rank];
            for_each_index(self.n, self.rank, |idx| {
                src.copy_from_slice(idx);
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..self.n {
                    src[slot] = j;
                    acc += q[(idx[slot], j)] * cur.data[offset(self.n, &src)];
                }
                next.data[offset(self.n, idx)] = acc;
            });
            cur = next;
        }
        cur
    }
}

/// Dense tensor with a `d_f×d_f` complex endomorphism at each base multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberTensor {
    pub n: usize,
    pub rank: usize,
    pub df: usize,
    pub data: Vec<CMat>,
}

impl FiberTensor {
    pub fn zeros(n: usize, rank: usize, df: usize) -> Self {
        FiberTensor {
            n,
            rank,
            df,
            data: vec![CMat::zeros(df, df); n.pow(rank as u32)],
        }
    }

    /// Scalar tensor times the fiber identity.
    pub fn from_scalar(t: &Tensor, df: usize) -> Self {
        let id = CMat::identity(df, df);
        FiberTensor {
            n: t.n,
            rank: t.rank,
            df,
            data: t.data.iter().map(|c| &id * *c).collect(),
        }
    }

    /// Rank-0 fiber tensor holding a single endomorphism.
    pub fn from_endo(m: &CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        FiberTensor { n: 1, rank: 0, df: m.nrows(), data: vec![m.clone()] }
    }

    pub fn endo_value(&self) -> CMat {
        assert_eq!(self.rank, 0);
        self.data[0].clone()
    }

    #[inline]
    pub fn at(&self, idx: &[usize]) -> &CMat {
        &self.data[offset(self.n, idx)]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: &[usize]) -> &mut CMat {
        let o = offset(self.n, idx);
        &mut self.data[o]
    }

    pub fn scale(&self, c: C64) -> Self {
        FiberTensor {
            n: self.n,
            rank: self.rank,
            df: self.df,
            data: self.data.iter().map(|m| m * c).collect(),
        }
    }

    pub fn add(&self, o: &FiberTensor) -> Self {
        assert_eq!((self.n, self.rank, self.df), (o.n, o.rank, o.df), "fiber tensor shape mismatch");
        FiberTensor {
            n: self.n,
            rank: self.rank,
            df: self.df,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &FiberTensor) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn axpy(&mut self, c: C64, o: &FiberTensor) {
        assert_eq!((self.n, self.rank, self.df), (o.n, o.rank, o.df), "fiber tensor shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b * c;
        }
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank);
        let mut t = FiberTensor::zeros(self.n, self.rank, self.df);
        let mut sidx = vec![0usize; self.rank];
        for_each_index(self.n, self.rank, |idx| {
            for k in 0..self.rank {
                sidx[perm[k]] = idx[k];
            }
            t.data[offset(self.n, idx)] = self.data[offset(self.n, &sidx)].clone();
        });
        t
    }

    /// Symmetrize base slots; fiber entries are averaged as matrices.
    pub fn symmetrize(&self, slots: &[usize]) -> Self {
        if slots.len() < 2 {
            return self.clone();
        }
        let n = self.n;
        let mut sum: Vec<CMat> = vec![CMat::zeros(self.df, self.df); self.data.len()];
        let mut cnt: Vec<u32> = vec![0; self.data.len()];
        let mut canon = vec![0usize; self.rank];
        let mut vals = vec![0usize; slots.len()];
        for_each_index(n, self.rank, |idx| {
            for (k, &s) in slots.iter().enumerate() {
                vals[k] = idx[s];
            }
            vals.sort_unstable();
            canon.copy_from_slice(idx);
            for (k, &s) in slots.iter().enumerate() {
                canon[s] = vals[k];
            }
            let co = offset(n, &canon);
            sum[co] += &self.data[offset(n, idx)];
            cnt[co] += 1;
        });
        let mut out = FiberTensor::zeros(n, self.rank, self.df);
        for_each_index(n, self.rank, |idx| {
            for (k, &s) in slots.iter().enumerate() {
                vals[k] = idx[s];
            }
            vals.sort_unstable();
            canon.copy_from_slice(idx);
            for (k, &s) in slots.iter().enumerate() {
                canon[s] = vals[k];
            }
            let co = offset(n, &canon);
            out.data[offset(n, idx)] = &sum[co] / C64::new(cnt[co] as f64, 0.0);
        });
        out
    }

    pub fn antisymmetrize_pair(&self, a: usize, b: usize) -> Self {
        let mut perm: Vec<usize> = (0..self.rank).collect();
        perm.swap(a, b);
        let swapped = self.permute(&perm);
        self.sub(&swapped).scale(C64::new(0.5, 0.0))
    }

    pub fn trace_pair(&self, a: usize, b: usize) -> Self {
        assert!(a != b && a < self.rank && b < self.rank);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut out = FiberTensor::zeros(self.n, self.rank - 2, self.df);
        for_each_index(self.n, self.rank - 2, |idx| {
            let mut full = Vec::with_capacity(self.rank);
            let mut it = idx.iter();
            for k in 0..self.rank {
                if k == lo || k == hi {
                    full.push(0);
                } else {
                    full.push(*it.next().unwrap());
                }
            }
            let mut s = CMat::zeros(self.df, self.df);
            for m in 0..self.n {
                full[lo] = m;
                full[hi] = m;
                s += &self.data[offset(self.n, &full)];
            }
            out.data[offset(self.n, idx)] = s;
        });
        out
    }

    /// Scalar contraction of one base slot, as [`Tensor::contract_slot`].
    pub fn contract_slot(&self, slot: usize, m: &Tensor) -> Self {
        assert!(slot < self.rank && m.rank == 2 && m.n == self.n);
        let n = self.n;
        let mut out = FiberTensor::zeros(n, self.rank, self.df);
        let mut jdx = vec![0usize; self.rank];
        for_each_index(n, self.rank, |idx| {
            jdx.copy_from_slice(idx);
            let mut acc = CMat::zeros(self.df, self.df);
            for a in 0..n {
                jdx[slot] = a;
                acc += &self.data[offset(n, &jdx)] * m.at(&[a, idx[slot]]);
            }
            out.data[offset(n, idx)] = acc;
        });
        out
    }

    pub fn norm_inf(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|m| m.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn all_close(&self, o: &FiberTensor, tol: f64) -> bool {
        self.n == o.n && self.rank == o.rank && self.df == o.df && self.sub(o).norm_inf() <= tol
    }

    /// Change frame on every base slot; fiber entries transform as scalars.
    pub fn rotate_base(&self, q: &crate::RMat) -> Self {
        assert_eq!(q.nrows(), self.n);
        assert_eq!(q.ncols(), self.n);
        let mut cur = self.clone();
        for slot in 0..self.rank {
            let mut next = FiberTensor::zeros(self.n, self.rank, self.df);
            let mut src = vec![0usize; self.rank];
            for_each_index(self.n, self.rank, |idx| {
                src.copy_from_slice(idx);
                let mut acc = CMat::zeros(self.df, self.df);
                for j in 0..self.n {
                    src[slot] = j;
                    acc += &cur.data[offset(self.n, &src)] * C64::new(q[(idx[slot], j)], 0.0);
                }
                next.data[offset(self.n, idx)] = acc;
            });
            cur = next;
        }
        cur
    }
}

/// One operand of [`contract`]: scalar-entried or fiber-entried.
#[derive(Clone, Copy)]
pub enum Operand<'a> {
    S(&'a Tensor),
    F(&'a FiberTensor),
}

impl<'a> Operand<'a> {
    fn rank(&self) -> usize {
        match self {
            Operand::S(t) => t.rank,
            Operand::F(t) => t.rank,
        }
    }
    fn dim(&self) -> usize {
        match self {
            Operand::S(t) => t.n,
            Operand::F(t) => t.n,
        }
    }
}

/// Einstein-summation contraction over named slots.
///
/// `spec` is of the form `"abcd,ce->abde"`: one subscript letter per slot,
/// letters repeated across operands are summed, and the output slots are
/// listed after `->` (an absent arrow means rank-0 output). Fiber operands
/// multiply as endomorphisms in operand order, which is how the coefficient
/// formulas order their gauge-curvature factors; scalar operands commute.
///
/// This is the single place index bookkeeping happens; every formula in
/// `perturbation`/`coefficients` is written against it and cross-checked in
/// tests by an independent loop-level transcription.
pub fn contract(spec: &str, ops: &[Operand<'_>], df: usize) -> Result<FiberTensor> {
    let (inputs, output) = parse_spec(spec)?;
    if inputs.len() != ops.len() {
        return Err(Error::InvalidArgument(format!(
            "contract spec `{spec}` has {} operands, got {}",
            inputs.len(),
            ops.len()
        )));
    }
    let mut n = 0usize;
    for (i, op) in ops.iter().enumerate() {
        if inputs[i].len() != op.rank() {
            return Err(Error::DimensionMismatch(format!(
                "operand {i} of `{spec}`: spec rank {} vs tensor rank {}",
                inputs[i].len(),
                op.rank()
            )));
        }
        if op.rank() > 0 {
            if n == 0 {
                n = op.dim();
            } else if op.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "operand {i} of `{spec}`: dim {} vs {}",
                    op.dim(),
                    n
                )));
            }
        }
    }
    if n == 0 {
        n = 1;
    }
    // letter -> axis id, in order of first appearance
    let mut letters: Vec<char> = Vec::new();
    for inp in inputs.iter().chain(std::iter::once(&output)) {
        for &c in inp {
            if !letters.contains(&c) {
                letters.push(c);
            }
        }
    }
    for &c in &output {
        if !inputs.iter().any(|inp| inp.contains(&c)) {
            return Err(Error::InvalidArgument(format!(
                "contract spec `{spec}`: output letter `{c}` not present in inputs"
            )));
        }
    }
    let nl = letters.len();
    if n.pow(nl as u32) > 200_000_000 {
        return Err(Error::InvalidArgument(format!(
            "contract spec `{spec}` with n={n} enumerates too many index assignments"
        )));
    }
    let pos_of = |c: char| letters.iter().position(|&x| x == c).unwrap();
    let in_slots: Vec<Vec<usize>> =
        inputs.iter().map(|inp| inp.iter().map(|&c| pos_of(c)).collect()).collect();
    let out_slots: Vec<usize> = output.iter().map(|&c| pos_of(c)).collect();

    let mut out = FiberTensor::zeros(n, output.len(), df);
    let mut assign = vec![0usize; nl];
    let mut op_idx: Vec<Vec<usize>> = inputs.iter().map(|i| vec![0usize; i.len()]).collect();
    let mut out_idx = vec![0usize; output.len()];
    loop {
        // product over operands under this assignment
        let mut scal = C64::new(1.0, 0.0);
        let mut fib: Option<CMat> = None;
        for (k, op) in ops.iter().enumerate() {
            for (slot, &axis) in in_slots[k].iter().enumerate() {
                op_idx[k][slot] = assign[axis];
            }
            match op {
                Operand::S(t) => scal *= t.at(&op_idx[k]),
                Operand::F(t) => {
                    let m = t.at(&op_idx[k]);
                    fib = Some(match fib {
                        None => m.clone(),
                        Some(acc) => acc * m,
                    });
                }
            }
        }
        for (slot, &axis) in out_slots.iter().enumerate() {
            out_idx[slot] = assign[axis];
        }
        let cell = out.at_mut(&out_idx);
        match &fib {
            None => {
                for d in 0..df {
                    cell[(d, d)] += scal;
                }
            }
            Some(m) => {
                debug_assert_eq!(m.nrows(), df, "fiber dimension mismatch in contract");
                *cell += m * scal;
            }
        }
        // advance assignment
        let mut k = nl;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            assign[k] += 1;
            if assign[k] < n {
                break;
            }
            assign[k] = 0;
        }
        if nl == 0 {
            return Ok(out);
        }
    }
}

/// Scalar-only variant of [`contract`].
pub fn contract_scalar(spec: &str, ops: &[&Tensor]) -> Result<Tensor> {
    let wrapped: Vec<Operand<'_>> = ops.iter().map(|t| Operand::S(t)).collect();
    let f = contract(spec, &wrapped, 1)?;
    Ok(Tensor { n: f.n, rank: f.rank, data: f.data.iter().map(|m| m[(0, 0)]).collect() })
}

fn parse_spec(spec: &str) -> Result<(Vec<Vec<char>>, Vec<char>)> {
    let (lhs, rhs) = match spec.split_once("->") {
        Some((l, r)) => (l, r),
        None => (spec, ""),
    };
    let inputs: Vec<Vec<char>> = lhs.split(',').map(|s| s.trim().chars().collect()).collect();
    let output: Vec<char> = rhs.trim().chars().collect();
    for inp in inputs.iter().chain(std::iter::once(&output)) {
        for &c in inp {
            if !c.is_ascii_lowercase() {
                return Err(Error::InvalidArgument(format!(
                    "contract spec `{spec}`: subscripts must be ascii lowercase"
                )));
            }
        }
    }
    let mut seen = Vec::new();
    for &c in &output {
        if seen.contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "contract spec `{spec}`: repeated output letter `{c}`"
            )));
        }
        seen.push(c);
    }
    Ok((inputs, output))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn symmetrize_matches_permutation_average() {
        let n = 3;
        let t = Tensor::from_fn(n, 3, |i| c((i[0] * 9 + i[1] * 3 + i[2]) as f64 + 0.5));
        let s = t.symmetrize(&[0, 1, 2]);
        // brute-force average over all 6 permutations
        let perms: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut brute = Tensor::zeros(n, 3);
        for p in perms {
            brute = brute.add(&t.permute(&p));
        }
        brute = brute.scale(c(1.0 / 6.0));
        assert!(s.all_close(&brute, 1e-14));
    }

    #[test]
    fn partial_symmetrize_leaves_other_slots() {
        let n = 2;
        let t = Tensor::from_fn(n, 3, |i| c((i[0] * 4 + i[1] * 2 + i[2]) as f64));
        let s = t.symmetrize(&[1, 2]);
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let want = 0.5 * (t.at(&[a, b, d]).re + t.at(&[a, d, b]).re);
                    assert!((s.at(&[a, b, d]).re - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn permute_roundtrip() {
        let t = Tensor::from_fn(3, 4, |i| c((i[0] + 10 * i[1] + 100 * i[2] + 1000 * i[3]) as f64));
        let p = [2usize, 0, 3, 1];
        let mut inv = [0usize; 4];
        for (k, &v) in p.iter().enumerate() {
            inv[v] = k;
        }
        let back = t.permute(&p).permute(&inv);
        assert!(back.all_close(&t, 0.0));
    }

    #[test]
    fn permute_definition() {
        // output slot k carries input slot perm[k]
        let t = Tensor::from_fn(2, 2, |i| c((i[0] * 2 + i[1]) as f64));
        let tt = t.permute(&[1, 0]);
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(tt.at(&[a, b]), t.at(&[b, a]));
            }
        }
    }

    #[test]
    fn contract_matrix_product() {
        let a = Tensor::from_fn(3, 2, |i| c((i[0] * 3 + i[1]) as f64 + 1.0));
        let b = Tensor::from_fn(3, 2, |i| c((i[0] as f64) - 2.0 * (i[1] as f64)));
        let ab = contract_scalar("ij,jk->ik", &[&a, &b]).unwrap();
        let ma = a.to_matrix();
        let mb = b.to_matrix();
        let want = Tensor::from_matrix(&(ma * mb));
        assert!(ab.all_close(&want, 1e-12));
    }

    #[test]
    fn contract_full_trace() {
        let a = Tensor::from_fn(4, 2, |i| c((i[0] * 4 + i[1]) as f64));
        let tr = contract_scalar("ii", &[&a]).unwrap();
        assert_eq!(tr.rank, 0);
        assert!((tr.scalar_value().re - (0.0 + 5.0 + 10.0 + 15.0)).abs() < 1e-14);
    }

    #[test]
    fn contract_orders_fiber_factors() {
        // two non-commuting endomorphism-valued rank-1 tensors: order must be operand order
        let df = 2;
        let mut x = FiberTensor::zeros(1, 1, df);
        let mut y = FiberTensor::zeros(1, 1, df);
        let mx = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        let my = CMat::from_row_slice(2, 2, &[c(0.0), c(0.0), c(1.0), c(0.0)]);
        *x.at_mut(&[0]) = mx.clone();
        *y.at_mut(&[0]) = my.clone();
        let xy = contract("a,a->", &[Operand::F(&x), Operand::F(&y)], df).unwrap();
        let yx = contract("a,a->", &[Operand::F(&y), Operand::F(&x)], df).unwrap();
        assert!((xy.endo_value() - mx.clone() * my.clone()).norm() < 1e-14);
        assert!((yx.endo_value() - my * mx).norm() < 1e-14);
    }

    #[test]
    fn trace_pair_matches_contract() {
        let t = Tensor::from_fn(3, 4, |i| c((i[0] + 2 * i[1] + 3 * i[2] + 5 * i[3]) as f64));
        let tp = t.trace_pair(1, 3);
        let cs = contract_scalar("ajbj->ab", &[&t]).unwrap();
        assert!(tp.all_close(&cs, 1e-13));
    }

    #[test]
    fn antisymmetrize_pair_kills_symmetric() {
        let t = Tensor::from_fn(3, 2, |i| c((i[0] + i[1]) as f64));
        let a = t.antisymmetrize_pair(0, 1);
        assert!(a.norm_inf() < 1e-15);
    }

    #[test]
    fn fiber_symmetrize_and_scalar_embedding_commute() {
        let t = Tensor::from_fn(3, 3, |i| c((i[0] * 9 + i[1] * 3 + i[2]) as f64));
        let f = FiberTensor::from_scalar(&t, 2);
        let a = FiberTensor::from_scalar(&t.symmetrize(&[0, 2]), 2);
        let b = f.symmetrize(&[0, 2]);
        assert!(a.all_close(&b, 1e-14));
    }
}
