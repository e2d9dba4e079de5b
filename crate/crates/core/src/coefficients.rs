//! Assembly of the resummed kernel quantities: the Gaussian prefactor `U₀`,
//! the diagonal and off-diagonal coefficients `b₂`, `b₃`, `b₄`, the resummed
//! diagonal coefficients `ã₀`, `ã₁`, `ã₂`, and the truncated kernel itself.
//!
//! The layer below ([`crate::perturbation`], [`crate::hermite`]) produces
//! time-dependent coefficient tensors and Hermite polynomials; this module
//! pairs them under proper-time quadrature.  Quantities quadratic in the
//! curvature are assembled along two independent routes wherever a second
//! closed-form display exists:
//!
//! * the single-time part of `b₄` is computed both as the direct
//!   coefficient×Hermite pairing and through the `B`/`a⁽ⁱ⁾` tensors paired
//!   with contracted curvatures ([`a_tensors`]);
//! * the double-time part of `b₄` is computed both from the product
//!   coefficients paired with two-time Hermite values and through the
//!   `d⁽ⁱ⁾` pairing tensors contracted with uncontracted curvature pairs
//!   ([`d_tensors`]).
//!
//! The primary value always comes from the first route; the second is kept
//! as a part so tests and the CLI can measure route agreement.  The linear
//! (in curvature) block of the diagonal `b₂` uses the `J`-tensor form,
//! whose antisymmetric gauge block has an exact closed form.

use std::fmt;

use serde_json::{json, Value};

use crate::geometry::{vvm_sqrt, CurvatureJets};
use crate::hermite::{hermite, xi};
use crate::matfun::{kernels, prefactor_j, QuadratureRule, SkewForm, SpectralF};
use crate::perturbation::{a_tensors, d_tensors, product_coefficients, v_coefficients, D5Strategy};
use crate::tensor::{contract, contract_scalar, FiberTensor, Operand, Tensor};
use crate::{C64, CMat, Error, Result};

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Which coefficient a [`CoefficientValue`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientLabel {
    B2,
    B3,
    B4,
    A0Tilde,
    A1Tilde,
    A2Tilde,
}

impl CoefficientLabel {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientLabel::B2 => "b2",
            CoefficientLabel::B3 => "b3",
            CoefficientLabel::B4 => "b4",
            CoefficientLabel::A0Tilde => "a0_tilde",
            CoefficientLabel::A1Tilde => "a1_tilde",
            CoefficientLabel::A2Tilde => "a2_tilde",
        }
    }
}

impl fmt::Display for CoefficientLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One assembled coefficient: the fiber endomorphism plus everything needed
/// to reproduce it (evaluation point, quadrature order, strategy choice for
/// the underdetermined double-time contraction kernel).
///
/// `parts` itemizes contributions by name; route duplicates carry a
/// `_pairing` suffix and are diagnostics, not summands of `value`.
#[derive(Clone, Debug)]
pub struct CoefficientValue {
    pub label: CoefficientLabel,
    pub t: f64,
    pub u: Vec<f64>,
    pub value: CMat,
    pub quad_order: usize,
    pub d5_strategy: Option<D5Strategy>,
    pub parts: Vec<(String, CMat)>,
}

impl CoefficientValue {
    pub fn part(&self, name: &str) -> Option<&CMat> {
        self.parts.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    /// Structured record of the full result, parts included.
    pub fn record(&self) -> Value {
        let mat = |m: &CMat| {
            let rows_re: Vec<Vec<f64>> =
                (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
            let rows_im: Vec<Vec<f64>> =
                (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect();
            (rows_re, rows_im)
        };
        let (value_re, value_im) = mat(&self.value);
        let parts: Value = self
            .parts
            .iter()
            .map(|(k, v)| {
                let (re, im) = mat(v);
                (k.clone(), json!({ "re": re, "im": im }))
            })
            .collect::<serde_json::Map<_, _>>()
            .into();
        json!({
            "label": self.label.name(),
            "t": self.t,
            "u": self.u,
            "quadrature_order": self.quad_order,
            "d5_strategy": self.d5_strategy.map(D5Strategy::name),
            "value_re": value_re,
            "value_im": value_im,
            "parts": parts,
        })
    }

    fn rescaled(&self, label: CoefficientLabel, c: C64) -> CoefficientValue {
        CoefficientValue {
            label,
            t: self.t,
            u: self.u.clone(),
            value: &self.value * c,
            quad_order: self.quad_order,
            d5_strategy: self.d5_strategy,
            parts: self.parts.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }
}

/// Truncated kernel value `U₀(t,u)·Σ_{k≤K} t^{k/2} b_k(t,u)`.
///
/// The parallel-transport factor along the geodesic is NOT included: the
/// output is the kernel in the frame where the fiber connection is
/// radially trivial, which is also the gauge in which the coefficients are
/// polynomial.  Consumers comparing against another gauge must conjugate by
/// their own transport factor.
#[derive(Clone, Debug)]
pub struct KernelEvaluation {
    pub t: f64,
    pub u: Vec<f64>,
    /// Truncation order `K`: contributions `t^{k/2} b_k` with `k ≤ K`.
    pub truncation: usize,
    /// Gaussian prefactor `U₀(t,u)`.
    pub u0: C64,
    /// `partial_sums[k] = Σ_{j≤k} t^{j/2} b_j(t,u)`, so the last entry is
    /// the bracket multiplying `U₀`.
    pub partial_sums: Vec<CMat>,
    /// Fourth-order truncated van Vleck square root, when requested.
    pub van_vleck_sqrt: Option<f64>,
    /// `U₀ · [Δ^{1/2}] · partial_sums[K]`.
    pub value: CMat,
}

/// `U₀(t,u) = (4πt)^{−n/2} J(t) exp{−¼ uᵀM(t)u}`.
pub fn u0(t: f64, u: &[f64], f: &SkewForm) -> Result<C64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let n = f.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "u has {} entries, field dim is {n}",
            u.len()
        )));
    }
    let ks = kernels(t, t, f)?;
    let mut q = C64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            q += ks.m[(a, b)] * cr(u[a] * u[b]);
        }
    }
    let pref = cr((4.0 * std::f64::consts::PI * t).powf(-(n as f64) / 2.0) * prefactor_j(t, f));
    Ok(pref * (-q * cr(0.25)).exp())
}

/// The three tensors multiplying the curvature monomials in the linear
/// block of the diagonal `b₂`.
///
/// `j1` pairs as `j1[α,β,μ,ν]·R^μ{}_α{}^ν{}_β`, `j2`/`j3` pair the Ricci
/// and gauge curvatures.  `j2` is exactly `δ/6`.  `j3` comes out of the
/// proper-time quadrature; `j3_closed` is the equivalent closed form
/// `−½(1/(t·iF) − coth(t·iF))`, evaluated spectrally with a series branch
/// for small eigenvalues.  The two must agree to quadrature accuracy.
#[derive(Clone, Debug)]
pub struct JTensors {
    pub j1: Tensor,
    pub j2: Tensor,
    pub j3: Tensor,
    pub j3_closed: Tensor,
}

/// `1/x − coth x`, stable across the removable singularity.
fn inv_minus_coth(x: f64) -> f64 {
    if x.abs() < 0.25 {
        let x2 = x * x;
        // Laurent tail of coth; truncation error below 1e−12 at the cutoff
        -x * (1.0 / 3.0
            - x2 * (1.0 / 45.0
                - x2 * (2.0 / 945.0 - x2 * (1.0 / 4725.0 - x2 * (2.0 / 93555.0)))))
    } else {
        1.0 / x - 1.0 / x.tanh()
    }
}

pub fn j_tensors(t: f64, f: &SkewForm, rule: &QuadratureRule) -> Result<JTensors> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let n = f.dim();
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    rule.foreach(|x, w| nodes.push((x, w)));

    let mut j1 = Tensor::zeros(n, 4);
    let mut j3 = Tensor::zeros(n, 2);
    for &(tau, w) in &nodes {
        let ks = kernels(t * tau, t, f)?;
        let bc = &ks.bcal;
        let ac = &ks.acal;
        let gm = (&ks.gamma + ks.gamma.transpose()) * cr(0.5);
        for a in 0..n {
            for b in 0..n {
                for m in 0..n {
                    for v in 0..n {
                        // −⅓ ℬ^{αβ} Γ_{(μν)} + ⅙(𝒜_μ^{(α}𝒜^{β)}_ν + 3𝒜_{(μ}^{α}𝒜_{ν)}^{β})
                        let sym_ab =
                            0.5 * (ac[(m, a)] * ac[(b, v)] + ac[(m, b)] * ac[(a, v)]);
                        let sym_mv =
                            0.5 * (ac[(m, a)] * ac[(v, b)] + ac[(v, a)] * ac[(m, b)]);
                        let val = -bc[(a, b)] * gm[(m, v)] / cr(3.0)
                            + (sym_ab + cr(3.0) * sym_mv) / cr(6.0);
                        j1.add_at(&[a, b, m, v], val * cr(w));
                    }
                }
            }
        }
        for m in 0..n {
            for v in 0..n {
                j3.add_at(&[m, v], cr(-0.5 * w) * (ac[(m, v)] - ac[(v, m)]));
            }
        }
    }

    let j2 = Tensor::delta(n).scale(cr(1.0 / 6.0));
    let spec = SpectralF::new(f);
    let closed = spec.apply(|lam| -0.5 * inv_minus_coth(t * lam));
    let j3_closed = Tensor::from_matrix(&closed).antisymmetrize_pair(0, 1);

    Ok(JTensors { j1, j2, j3, j3_closed })
}

/// Linear-in-curvature block of the diagonal `b₂`, itemized:
/// `(J₁·Riemann, J₂·Ricci, J₃·𝓡)`.  The first two are scalars on the
/// fiber; the gauge block uses the closed form of `J₃`.
fn b21_diag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
) -> Result<(C64, C64, CMat)> {
    let jt = j_tensors(t, f, rule)?;
    let con = jets.derive_contractions();
    let riem_lin =
        contract_scalar("abmv,mavb->", &[&jt.j1, &jets.riemann])?.scalar_value();
    let ricci_lin = contract_scalar("mv,mv->", &[&jt.j2, &con.ricci])?.scalar_value();
    let mut gauge_lin = CMat::zeros(jets.fiber_dim, jets.fiber_dim);
    for (m, c) in jets.gauge.data.iter().zip(&jt.j3_closed.data) {
        gauge_lin += m * *c;
    }
    Ok((riem_lin, ricci_lin, gauge_lin))
}

/// Diagonal `b₂ = (R/6)·I + J₁·Riemann + J₂·Ricci + J₃·𝓡`.
pub fn b2_diag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
) -> Result<CoefficientValue> {
    jets.validate()?;
    check_dims(jets, f, t)?;
    let df = jets.fiber_dim;
    let eye = CMat::identity(df, df);
    let con = jets.derive_contractions();
    let (riem_lin, ricci_lin, gauge_lin) = b21_diag(jets, f, t, rule)?;
    let scalar = &eye * cr(con.scalar / 6.0);
    let riem = &eye * riem_lin;
    let ricci = &eye * ricci_lin;
    let value = &scalar + &riem + &ricci + &gauge_lin;
    Ok(CoefficientValue {
        label: CoefficientLabel::B2,
        t,
        u: vec![0.0; jets.dim],
        value,
        quad_order: rule.order,
        d5_strategy: None,
        parts: vec![
            ("scalar".into(), scalar),
            ("riemann_linear".into(), riem),
            ("ricci_linear".into(), ricci),
            ("gauge_linear".into(), gauge_lin),
        ],
    })
}

/// Odd diagonal coefficients vanish identically; `b₃` is returned as the
/// hard-coded zero rather than an (expensive) cancelling quadrature.
pub fn b3_diag(dim: usize, fiber_dim: usize, t: f64) -> CoefficientValue {
    CoefficientValue {
        label: CoefficientLabel::B3,
        t,
        u: vec![0.0; dim],
        value: CMat::zeros(fiber_dim, fiber_dim),
        quad_order: 0,
        d5_strategy: None,
        parts: Vec::new(),
    }
}

fn check_dims(jets: &CurvatureJets, f: &SkewForm, t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    if f.dim() != jets.dim {
        return Err(Error::DimensionMismatch(format!(
            "field dim {} does not match jets dim {}",
            f.dim(),
            jets.dim
        )));
    }
    Ok(())
}

fn check_point(jets: &CurvatureJets, u: &[f64]) -> Result<()> {
    if u.len() != jets.dim {
        return Err(Error::DimensionMismatch(format!(
            "u has {} entries, base dim is {}",
            u.len(),
            jets.dim
        )));
    }
    Ok(())
}

fn fiber_is_zero(t: &FiberTensor) -> bool {
    t.data.iter().all(|m| m.iter().all(|c| c.re == 0.0 && c.im == 0.0))
}

/// Full pairing of a fiber-valued coefficient tensor with a same-shape
/// scalar polynomial tensor.
fn pair_full(coeff: &FiberTensor, poly: &Tensor) -> CMat {
    debug_assert_eq!((coeff.n, coeff.rank), (poly.n, poly.rank));
    let mut acc = CMat::zeros(coeff.df, coeff.df);
    for (m, c) in coeff.data.iter().zip(&poly.data) {
        acc += m * *c;
    }
    acc
}

/// Single-time block `t^{1−k/2} ∫₀¹ Σ_r coeff_r(tτ)·ℋ_r(tτ, u) dτ` of the
/// order-`k` coefficient (the constant term of the order-2 correction is
/// excluded; callers place it).
fn single_time_sum(
    order: usize,
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<CMat> {
    let df = jets.fiber_dim;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    rule.foreach(|x, w| nodes.push((x, w)));
    let mut acc = CMat::zeros(df, df);
    for &(tau, w) in &nodes {
        let ks = kernels(t * tau, t, f)?;
        let vc = v_coefficients(order, jets, &ks, u)?;
        let mut node = CMat::zeros(df, df);
        for (rank, coeff) in [
            (1, &vc.n1),
            (2, &vc.p2),
            (3, &vc.w3),
            (4, &vc.q4),
            (5, &vc.y5),
            (6, &vc.s6),
        ] {
            if fiber_is_zero(coeff) {
                continue;
            }
            node += pair_full(coeff, &hermite(rank, &ks.lambda, u));
        }
        acc += node * cr(w);
    }
    Ok(acc * cr(t.powf(1.0 - order as f64 / 2.0)))
}

/// Double-time block `∫₀¹dτ₂∫₀^{τ₂}dτ₁ Σ_{n,k} C₍ₙ,ₖ₎·Ξ₍ₙ,ₖ₎` of the
/// order-4 coefficient.
fn double_time_sum(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<CMat> {
    let df = jets.fiber_dim;
    let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
    rule.foreach_simplex(|t1, t2, w| nodes.push((t1, t2, w)));
    let mut acc = CMat::zeros(df, df);
    for &(tau1, tau2, w) in &nodes {
        let k1 = kernels(t * tau1, t, f)?;
        let k2 = kernels(t * tau2, t, f)?;
        let pc = product_coefficients(jets, &k1, &k2, u)?;
        let mut node = CMat::zeros(df, df);
        for nd in 0..=4 {
            for kd in 1..=4 {
                if let Some(coeff) = pc.get(nd, kd) {
                    if fiber_is_zero(coeff) {
                        continue;
                    }
                    node += pair_full(coeff, &xi(nd, kd, &k1, &k2, u));
                }
            }
        }
        acc += node * cr(w);
    }
    Ok(acc)
}

/// Single-time block of `b₄` through the `B`/`a⁽ⁱ⁾` display: the kernels
/// are integrated first, then paired with contracted curvatures.
fn b42_pairing_route(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
) -> Result<CMat> {
    let n = jets.dim;
    let df = jets.fiber_dim;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    rule.foreach(|x, w| nodes.push((x, w)));

    let mut b_int = CMat::zeros(n, n);
    let mut a_int: [Tensor; 7] = [
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 6),
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 6),
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 4),
    ];
    for &(tau, w) in &nodes {
        let ks = kernels(t * tau, t, f)?;
        b_int += &ks.bcal * cr(w);
        let at = a_tensors(&ks);
        for (acc, term) in a_int.iter_mut().zip([
            &at.a1, &at.a2, &at.a3, &at.a4, &at.a5, &at.a6, &at.a7,
        ]) {
            acc.axpy(cr(w), term);
        }
    }
    let inv_t = cr(1.0 / t);
    let bt = Tensor::from_matrix(&b_int).scale(inv_t);
    let [a1, a2, a3, a4, a5, a6, a7] = a_int.map(|a| a.scale(inv_t));

    let con = jets.derive_contractions();
    let riem = &jets.riemann;
    let ric = &con.ricci;
    let sc = |spec: &str, ops: &[&Tensor]| -> Result<C64> {
        Ok(contract_scalar(spec, ops)?.scalar_value())
    };

    let mut s = C64::new(0.0, 0.0);
    s += sc("ab,mvla,mvlb->", &[&bt, riem, riem])? / cr(60.0);
    s += sc("lagb,mlva,mgvb->", &[&a1, riem, riem])?;
    s += sc("ambgvd,eamb,egvd->", &[&a2, riem, riem])?;
    s += sc("ab,mv,mavb->", &[&bt, ric, riem])? / cr(60.0);
    s += sc("ambg,av,mbvg->", &[&a3, ric, riem])?;
    s -= sc("ab,ma,mb->", &[&bt, ric, ric])? / cr(30.0);
    s += sc("abmgvd,abmgvd->", &[&a5, &jets.grad2_riemann])?;
    s += sc("abmv,abmv->", &[&a6, &con.grad2_ricci])?;
    s += sc("ab,ab->", &[&bt, &con.lap_ricci])? / cr(40.0);
    s += sc("ab,ab->", &[&bt, &con.grad2_scalar])? * cr(3.0 / 40.0);

    let gauge = &jets.gauge;
    let mut out = CMat::identity(df, df) * s;
    out += contract("ambg,va,mbvg->", &[Operand::S(&a4), Operand::F(gauge), Operand::S(riem)], df)?
        .endo_value();
    out += contract("ab,va,vb->", &[Operand::S(&bt), Operand::F(gauge), Operand::F(gauge)], df)?
        .endo_value()
        * cr(0.25);
    out += contract("abmv,abmv->", &[Operand::S(&a7), Operand::F(&jets.grad2_gauge)], df)?
        .endo_value();
    out += contract("ab,ab->", &[Operand::S(&bt), Operand::F(&con.grad_div_gauge)], df)?
        .endo_value()
        * cr(0.25);
    Ok(out)
}

/// Double-time block of `b₄` through the `d⁽ⁱ⁾` pairing tensors contracted
/// with uncontracted curvature pairs.
fn b43_pairing_route(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
    strategy: D5Strategy,
) -> Result<CMat> {
    let n = jets.dim;
    let df = jets.fiber_dim;
    let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
    rule.foreach_simplex(|t1, t2, w| nodes.push((t1, t2, w)));

    let mut d_int: [Tensor; 6] = [
        Tensor::zeros(n, 8),
        Tensor::zeros(n, 6),
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 6),
        Tensor::zeros(n, 4),
        Tensor::zeros(n, 4),
    ];
    for &(tau1, tau2, w) in &nodes {
        let k1 = kernels(t * tau1, t, f)?;
        let k2 = kernels(t * tau2, t, f)?;
        let dt = d_tensors(&k1, &k2, strategy)?;
        for (acc, term) in
            d_int.iter_mut().zip([&dt.d1, &dt.d2, &dt.d3, &dt.d4, &dt.d5, &dt.d6])
        {
            acc.axpy(cr(w), term);
        }
    }
    let [d1, d2, d3, d4, d5, d6] = d_int;

    let con = jets.derive_contractions();
    let riem = &jets.riemann;
    let ric = &con.ricci;
    let gauge = &jets.gauge;

    let mut s = C64::new(0.0, 0.0);
    s += contract_scalar("abmvgdrs,abmv,gdrs->", &[&d1, riem, riem])?.scalar_value();
    s += contract_scalar("mvabrs,mv,abrs->", &[&d2, ric, riem])?.scalar_value();
    s += contract_scalar("mvab,mv,ab->", &[&d3, ric, ric])?.scalar_value();

    let mut out = CMat::identity(df, df) * s;
    out += contract("mvabrs,mv,abrs->", &[Operand::S(&d4), Operand::F(gauge), Operand::S(riem)], df)?
        .endo_value();
    out += contract("mvab,mv,ab->", &[Operand::S(&d5), Operand::F(gauge), Operand::S(ric)], df)?
        .endo_value();
    out += contract("mvab,mv,ab->", &[Operand::S(&d6), Operand::F(gauge), Operand::F(gauge)], df)?
        .endo_value();
    Ok(out)
}

/// Off-diagonal `b₂ = R/6 + ∫₀¹[N·ℋ₁ + P·ℋ₂ + W·ℋ₃ + Q·ℋ₄](tτ)dτ`.
pub fn b2_offdiag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<CoefficientValue> {
    jets.validate()?;
    check_dims(jets, f, t)?;
    check_point(jets, u)?;
    let df = jets.fiber_dim;
    let con = jets.derive_contractions();
    let scalar = CMat::identity(df, df) * cr(con.scalar / 6.0);
    let hermite_block = single_time_sum(2, jets, f, t, u, rule)?;
    let value = &scalar + &hermite_block;
    Ok(CoefficientValue {
        label: CoefficientLabel::B2,
        t,
        u: u.to_vec(),
        value,
        quad_order: rule.order,
        d5_strategy: None,
        parts: vec![("scalar".into(), scalar), ("hermite_block".into(), hermite_block)],
    })
}

/// Off-diagonal `b₃`: the order-3 coefficient×Hermite quadrature with its
/// `t^{−1/2}` prefactor.  Odd in `u`, hence zero at `u = 0`.
pub fn b3_offdiag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<CoefficientValue> {
    jets.validate()?;
    check_dims(jets, f, t)?;
    check_point(jets, u)?;
    let value = single_time_sum(3, jets, f, t, u, rule)?;
    Ok(CoefficientValue {
        label: CoefficientLabel::B3,
        t,
        u: u.to_vec(),
        value,
        quad_order: rule.order,
        d5_strategy: None,
        parts: Vec::new(),
    })
}

/// Shared `b₄` assembly: scalar square, scalar cross term, single-time and
/// double-time blocks, in that order.
fn b4_assembly(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<(CMat, Vec<(String, CMat)>)> {
    let df = jets.fiber_dim;
    let con = jets.derive_contractions();
    let eye = CMat::identity(df, df);
    let scalar_square = &eye * cr(con.scalar * con.scalar / 72.0);
    let b21 = single_time_sum(2, jets, f, t, u, rule)?;
    let scalar_cross = b21 * cr(con.scalar / 6.0);
    let single_time = single_time_sum(4, jets, f, t, u, rule)?;
    let double_time = double_time_sum(jets, f, t, u, rule)?;
    let value = &scalar_square + &scalar_cross + &single_time + &double_time;
    let parts = vec![
        ("scalar_square".into(), scalar_square),
        ("scalar_cross".into(), scalar_cross),
        ("single_time".into(), single_time),
        ("double_time".into(), double_time),
    ];
    Ok((value, parts))
}

/// Diagonal `b₄`, with the two route duplicates of its quadratic blocks
/// appended to `parts` (`single_time_pairing`, `double_time_pairing`).
/// The value itself uses the direct routes only; `strategy` affects just
/// the `double_time_pairing` diagnostic and the metadata.
pub fn b4_diag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
    strategy: D5Strategy,
) -> Result<CoefficientValue> {
    jets.validate()?;
    check_dims(jets, f, t)?;
    let u = vec![0.0; jets.dim];
    let (value, mut parts) = b4_assembly(jets, f, t, &u, rule)?;
    parts.push(("single_time_pairing".into(), b42_pairing_route(jets, f, t, rule)?));
    parts.push(("double_time_pairing".into(), b43_pairing_route(jets, f, t, rule, strategy)?));
    Ok(CoefficientValue {
        label: CoefficientLabel::B4,
        t,
        u,
        value,
        quad_order: rule.order,
        d5_strategy: Some(strategy),
        parts,
    })
}

/// Off-diagonal `b₄`: scalar terms plus single-time Hermite pairings plus
/// the double-time simplex block.
pub fn b4_offdiag(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    rule: &QuadratureRule,
) -> Result<CoefficientValue> {
    jets.validate()?;
    check_dims(jets, f, t)?;
    check_point(jets, u)?;
    let (value, parts) = b4_assembly(jets, f, t, u, rule)?;
    Ok(CoefficientValue {
        label: CoefficientLabel::B4,
        t,
        u: u.to_vec(),
        value,
        quad_order: rule.order,
        d5_strategy: None,
        parts,
    })
}

/// `ã₀(t) = J(t)·I`.
pub fn a0_tilde(t: f64, f: &SkewForm, fiber_dim: usize) -> Result<CoefficientValue> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let value = CMat::identity(fiber_dim, fiber_dim) * cr(prefactor_j(t, f));
    Ok(CoefficientValue {
        label: CoefficientLabel::A0Tilde,
        t,
        u: vec![0.0; f.dim()],
        value,
        quad_order: 0,
        d5_strategy: None,
        parts: Vec::new(),
    })
}

/// `ã₁(t) = J(t)·b₂^{diag}(t)`, parts rescaled alongside.
pub fn a1_tilde(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
) -> Result<CoefficientValue> {
    let b2 = b2_diag(jets, f, t, rule)?;
    Ok(b2.rescaled(CoefficientLabel::A1Tilde, cr(prefactor_j(t, f))))
}

/// `ã₂(t) = J(t)·b₄^{diag}(t)`, parts rescaled alongside.
pub fn a2_tilde(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    rule: &QuadratureRule,
    strategy: D5Strategy,
) -> Result<CoefficientValue> {
    let b4 = b4_diag(jets, f, t, rule, strategy)?;
    Ok(b4.rescaled(CoefficientLabel::A2Tilde, cr(prefactor_j(t, f))))
}

/// Truncated kernel `U₀·Σ_{k≤K} t^{k/2}b_k` at displacement `u`, with
/// `b₀ = 1` and `b₁ = 0` (there is no order-1 correction operator).
///
/// See [`KernelEvaluation`] for what the value does and does not contain.
pub fn evaluate_kernel(
    jets: &CurvatureJets,
    f: &SkewForm,
    t: f64,
    u: &[f64],
    truncation: usize,
    rule: &QuadratureRule,
    include_van_vleck: bool,
) -> Result<KernelEvaluation> {
    if truncation > 4 {
        return Err(Error::InvalidArgument(format!(
            "coefficients exist through order 4, got truncation {truncation}"
        )));
    }
    jets.validate()?;
    check_dims(jets, f, t)?;
    check_point(jets, u)?;
    let df = jets.fiber_dim;
    let eye = CMat::identity(df, df);
    let mut partial_sums = vec![eye.clone()];
    let mut current = eye;
    for k in 1..=truncation {
        let bk = match k {
            1 => CMat::zeros(df, df),
            2 => b2_offdiag(jets, f, t, u, rule)?.value,
            3 => b3_offdiag(jets, f, t, u, rule)?.value,
            4 => b4_offdiag(jets, f, t, u, rule)?.value,
            _ => unreachable!(),
        };
        current += bk * cr(t.powf(k as f64 / 2.0));
        partial_sums.push(current.clone());
    }
    let u0_val = u0(t, u, f)?;
    let van_vleck = include_van_vleck.then(|| vvm_sqrt(jets, u));
    let value = &partial_sums[truncation] * (u0_val * cr(van_vleck.unwrap_or(1.0)));
    Ok(KernelEvaluation {
        t,
        u: u.to_vec(),
        truncation,
        u0: u0_val,
        partial_sums,
        van_vleck_sqrt: van_vleck,
        value,
    })
}

/// Numerical-conditioning diagnostics of the kernel algebra at `(t, F)`.
///
/// There is no pass/fail threshold: the quantities quantify how stiff the
/// quadratures become as `t·F` grows.  `psi_growth` is the largest
/// eigenvalue magnitude of the backward transport `Ψ(t)` (the coefficient
/// tensors contain `Ψ`-dressed blocks that this factor amplifies while `J`
/// decays), `lambda_edge_norm` is `‖Λ(t·τ_min)‖` at the first quadrature
/// node (`Λ ~ 1/(2tτ)` as `τ → 0`, the stiff edge the rule must resolve).
#[derive(Clone, Debug)]
pub struct ConditioningReport {
    pub t: f64,
    pub tf_max: f64,
    pub j_value: f64,
    pub psi_growth: f64,
    pub m_norm: f64,
    pub lambda_edge_norm: f64,
}

pub fn conditioning(t: f64, f: &SkewForm, rule: &QuadratureRule) -> Result<ConditioningReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let spec = SpectralF::new(f);
    let tf_max = spec.eigenvalues().iter().fold(0.0f64, |a, &l| a.max((t * l).abs()));
    let tau_min = rule.nodes.first().copied().unwrap_or(0.5);
    let edge = kernels(t * tau_min, t, f)?;
    let full = kernels(t, t, f)?;
    Ok(ConditioningReport {
        t,
        tf_max,
        j_value: prefactor_j(t, f),
        psi_growth: (2.0 * tf_max).exp(),
        m_norm: full.m.norm(),
        lambda_edge_norm: edge.lambda.norm(),
    })
}
