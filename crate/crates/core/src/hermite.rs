//! Generalized Hermite polynomials of the Gaussian weight carried by the
//! flat-space heat kernel, and the two-time variant linking derivatives taken
//! at different proper-time arguments.
//!
//! With `Λ(s)` the difference quadratic form of the weight, the rank-k
//! polynomial is read off the generating identity
//! `exp{½ξΛ(ξ+2u)} = Σ_k (1/k!) ξ^{⊗k}·ℋ_k(u)`, which closes to
//!
//! ```text
//! ℋ_{μ₁…μ_k}(u) = Σ_j (2j−1)!! C(k,2j) sym[ Λ^{⊗j} ⊗ (Λu)^{⊗(k−2j)} ] .
//! ```
//!
//! The two-time family factorizes through the same objects,
//! `Ξ(ξ,η) = ℋ(ξ,s₁) ℋ(η,s₂) exp{ξΛ(s₂)η}`, and is built from that
//! factorized form; the closed displays of the low orders serve as test
//! vectors only.

use crate::matfun::KernelSet;
use crate::tensor::Tensor;
use crate::{C64, CMat};

#[inline]
fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// (2j−1)!! = (2j)!/(2^j j!), the pairings of 2j slots.
fn odd_double_factorial(j: usize) -> f64 {
    (1..=j).map(|i| (2 * i - 1) as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Λu as a rank-1 tensor.
fn lambda_u(lambda: &CMat, u: &[f64]) -> Tensor {
    let n = lambda.nrows();
    assert_eq!(u.len(), n, "displacement length must equal the base dimension");
    let mut w = Tensor::zeros(n, 1);
    for i in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += lambda[(i, j)] * u[j];
        }
        w.data[i] = acc;
    }
    w
}

/// Rank-k Hermite polynomial `ℋ_{μ₁…μ_k}(u)` for the quadratic form `Λ`.
///
/// Fully symmetric by construction; `k = 0` gives the scalar 1.
pub fn hermite(k: usize, lambda: &CMat, u: &[f64]) -> Tensor {
    let n = lambda.nrows();
    if k == 0 {
        return Tensor::scalar(c(1.0));
    }
    let lam = Tensor::from_matrix(lambda);
    let w = lambda_u(lambda, u);
    let mut out = Tensor::zeros(n, k);
    for j in 0..=(k / 2) {
        let mut term = Tensor::scalar(c(1.0));
        for _ in 0..j {
            term = term.outer(&lam);
        }
        for _ in 0..(k - 2 * j) {
            term = term.outer(&w);
        }
        let coeff = odd_double_factorial(j) * binomial(k, 2 * j);
        let slots: Vec<usize> = (0..k).collect();
        out.axpy(c(coeff), &term.symmetrize(&slots));
    }
    out
}

/// Coincidence limit `[ℋ_k]`: zero for odd k, `(2m−1)!! Λ_{(μ₁μ₂}…Λ_{μ₂ₘ₋₁μ₂ₘ)}`
/// for k = 2m (coefficients 1, 3, 15 at m = 1, 2, 3).
pub fn hermite_diag(k: usize, lambda: &CMat) -> Tensor {
    let n = lambda.nrows();
    if k == 0 {
        return Tensor::scalar(c(1.0));
    }
    if k % 2 == 1 {
        return Tensor::zeros(n, k);
    }
    let m = k / 2;
    let lam = Tensor::from_matrix(lambda);
    let mut term = Tensor::scalar(c(1.0));
    for _ in 0..m {
        term = term.outer(&lam);
    }
    let slots: Vec<usize> = (0..k).collect();
    term.symmetrize(&slots).scale(c(odd_double_factorial(m)))
}

/// Two-time Hermite polynomial `Ξ_{ν₁…ν_m μ₁…μ_n}(s₁,s₂)` evaluated at `u`,
/// with the ν-block (first `m` slots) carrying the earlier time and the
/// μ-block (last `n` slots) the later one.
///
/// Assembled from the factorized form: k cross links `Λ(s₂)` joining one
/// ν-slot to one μ-slot, times `ℋ_{m−k}(s₁)` and `ℋ_{n−k}(s₂)`, each block
/// symmetrized separately,
///
/// ```text
/// Ξ_{(m,n)} = Σ_k k! C(m,k) C(n,k) ·
///             sym_ν sym_μ [ Λ(s₂)^{⊗k}_{νμ} ⊗ ℋ_{m−k}(s₁) ⊗ ℋ_{n−k}(s₂) ] .
/// ```
pub fn xi(m: usize, n: usize, ker1: &KernelSet, ker2: &KernelSet, u: &[f64]) -> Tensor {
    assert_eq!(ker1.n, ker2.n, "kernel sets must share the base dimension");
    assert!(
        ker1.s <= ker2.s + 1e-12,
        "first argument must be the earlier time"
    );
    let dim = ker1.n;
    let rank = m + n;
    if rank == 0 {
        return Tensor::scalar(c(1.0));
    }
    let lam2 = Tensor::from_matrix(&ker2.lambda);
    let mut out = Tensor::zeros(dim, rank);
    for k in 0..=m.min(n) {
        let h1 = hermite(m - k, &ker1.lambda, u);
        let h2 = hermite(n - k, &ker2.lambda, u);
        // raw slot order: [cross₁ν cross₁μ … crossₖν crossₖμ | h1 slots | h2 slots]
        let mut term = Tensor::scalar(c(1.0));
        for _ in 0..k {
            term = term.outer(&lam2);
        }
        term = term.outer(&h1).outer(&h2);
        // route cross ν-legs and h1 into the ν-block, the rest into the μ-block
        let mut perm = vec![0usize; rank];
        for i in 0..k {
            perm[i] = 2 * i; // ν-block, cross leg
            perm[m + i] = 2 * i + 1; // μ-block, cross leg
        }
        for i in 0..(m - k) {
            perm[k + i] = 2 * k + i;
        }
        for i in 0..(n - k) {
            perm[m + k + i] = 2 * k + (m - k) + i;
        }
        let placed = term.permute(&perm);
        let nu_slots: Vec<usize> = (0..m).collect();
        let mu_slots: Vec<usize> = (m..rank).collect();
        let coeff = (1..=k).map(|i| i as f64).product::<f64>() * binomial(m, k) * binomial(n, k);
        out.axpy(c(coeff), &placed.symmetrize(&nu_slots).symmetrize(&mu_slots));
    }
    out
}
