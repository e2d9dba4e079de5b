//! Curvature data at a point: jets of the Riemann tensor and of the bundle
//! curvature, their validation and random generation, the contraction table
//! every coefficient formula draws from, and the classical small-time
//! reference coefficients used to anchor the resummed expansion.
//!
//! All index algebra happens in an orthonormal frame at the expansion point,
//! so the metric is the identity and raising or lowering a base index is a
//! no-op. The Ricci convention is fixed once and for all as
//! `Ric_{mn} = R^a_{man}`; with it the scalar curvature of the round sphere
//! is positive and the first heat coefficient is `R/6`.

use crate::matfun::SkewForm;
use crate::tensor::{FiberTensor, Tensor};
use crate::{C64, CMat, Error, RMat, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Absolute tolerance below which a symmetry defect does not count as a
/// violation.
pub const TOL_VALIDATE: f64 = 1e-12;

/// Convention stamp written into every serialized jet document.
pub const CONVENTION: &str = "ricci=R^a_{mab}; frame=orthonormal";

#[inline]
fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// One violated invariant: which symmetry failed and the largest defect.
#[derive(Debug, Clone)]
pub struct Violation {
    pub invariant: String,
    pub residual: f64,
}

/// Result of [`CurvatureJets::validate`]; empty means every algebraic
/// invariant holds within [`TOL_VALIDATE`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, invariant: &str, residual: f64) {
        if residual > TOL_VALIDATE {
            self.violations.push(Violation { invariant: invariant.to_string(), residual });
        }
    }
}

/// Jets of the curvatures at a single point, the complete input of every
/// coefficient computation.
///
/// Base-index arrays are real (stored with zero imaginary parts); gauge data
/// are complex `d_f × d_f` matrices attached to an antisymmetric base index
/// pair. Derivative indices always lead:
///
/// * `riemann[a,b,m,n]       = R_{abmn}`
/// * `grad_riemann[c,a,b,m,n] = ∇_c R_{abmn}`
/// * `grad2_riemann[c,d,a,b,m,n] = ∇_c ∇_d R_{abmn}`
/// * `gauge[m,n]             = 𝓡_{mn}` (fiber matrix)
/// * `grad_gauge[c,m,n]      = ∇_c 𝓡_{mn}`
/// * `grad2_gauge[c,d,m,n]   = ∇_c ∇_d 𝓡_{mn}`
///
/// `grad2_riemann` may hold an arbitrary (unsymmetrized) array in its two
/// derivative slots; the generator emits it symmetrized there, and consumers
/// apply whatever derivative symmetrization their formula calls for.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureJets {
    pub dim: usize,
    pub fiber_dim: usize,
    pub riemann: Tensor,
    pub grad_riemann: Tensor,
    pub grad2_riemann: Tensor,
    pub gauge: FiberTensor,
    pub grad_gauge: FiberTensor,
    pub grad2_gauge: FiberTensor,
}

/// Cyclic mean over the last three slots of the four-index group starting at
/// `b`: (T_{aβμν} + T_{aμνβ} + T_{aνβμ})/3. Vanishes iff the first Bianchi
/// identity holds on that group (given the pair symmetries).
fn cyclic_mean(t: &Tensor, b: usize) -> Tensor {
    let r = t.rank;
    let mut p1: Vec<usize> = (0..r).collect();
    p1[b + 1] = b + 3;
    p1[b + 2] = b + 1;
    p1[b + 3] = b + 2;
    let mut p2: Vec<usize> = (0..r).collect();
    p2[b + 1] = b + 2;
    p2[b + 2] = b + 3;
    p2[b + 3] = b + 1;
    t.add(&t.permute(&p1)).add(&t.permute(&p2)).scale(c(1.0 / 3.0))
}

/// Project the four slots starting at `b` onto the algebraic symmetry class
/// of the Riemann tensor: antisymmetric in each pair, symmetric under pair
/// exchange, cyclic sum over the last three slots zero.
///
/// For input with the pair symmetries the cyclic part is totally
/// antisymmetric, so subtracting it leaves the pair symmetries intact.
fn riemann_class(t: &Tensor, b: usize) -> Tensor {
    let r = t.rank;
    let x = t.antisymmetrize_pair(b, b + 1).antisymmetrize_pair(b + 2, b + 3);
    let mut ex: Vec<usize> = (0..r).collect();
    ex.swap(b, b + 2);
    ex.swap(b + 1, b + 3);
    let x = x.add(&x.permute(&ex)).scale(c(0.5));
    let cyc = cyclic_mean(&x, b);
    x.sub(&cyc)
}

/// Residuals of the Riemann symmetry class on the four slots starting at `b`,
/// reported as (first-pair antisymmetry, second-pair antisymmetry,
/// pair exchange, first Bianchi).
fn riemann_class_residuals(t: &Tensor, b: usize) -> (f64, f64, f64, f64) {
    let r = t.rank;
    let mut sw1: Vec<usize> = (0..r).collect();
    sw1.swap(b, b + 1);
    let mut sw2: Vec<usize> = (0..r).collect();
    sw2.swap(b + 2, b + 3);
    let mut ex: Vec<usize> = (0..r).collect();
    ex.swap(b, b + 2);
    ex.swap(b + 1, b + 3);
    let a1 = t.add(&t.permute(&sw1)).norm_inf();
    let a2 = t.add(&t.permute(&sw2)).norm_inf();
    let pe = t.sub(&t.permute(&ex)).norm_inf();
    let bi = cyclic_mean(t, b).norm_inf();
    (a1, a2, pe, bi)
}

fn fiber_antisymmetry_residual(t: &FiberTensor, a: usize, b: usize) -> f64 {
    let mut sw: Vec<usize> = (0..t.rank).collect();
    sw.swap(a, b);
    t.add(&t.permute(&sw)).norm_inf()
}

fn max_imag(t: &Tensor) -> f64 {
    t.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

impl CurvatureJets {
    /// All-zero jets of the given shape.
    pub fn zero(dim: usize, fiber_dim: usize) -> Result<Self> {
        if dim < 2 || fiber_dim < 1 {
            return Err(Error::InvalidArgument(format!(
                "jets need dim >= 2 and fiber_dim >= 1, got ({dim}, {fiber_dim})"
            )));
        }
        Ok(CurvatureJets {
            dim,
            fiber_dim,
            riemann: Tensor::zeros(dim, 4),
            grad_riemann: Tensor::zeros(dim, 5),
            grad2_riemann: Tensor::zeros(dim, 6),
            gauge: FiberTensor::zeros(dim, 2, fiber_dim),
            grad_gauge: FiberTensor::zeros(dim, 3, fiber_dim),
            grad2_gauge: FiberTensor::zeros(dim, 4, fiber_dim),
        })
    }

    /// Check shapes (hard error) and algebraic invariants (report entries).
    ///
    /// Shape mismatches are structural defects of the container, not symmetry
    /// violations, so they surface as `Err` rather than report entries.
    pub fn validate(&self) -> Result<ValidationReport> {
        let n = self.dim;
        let df = self.fiber_dim;
        let shape_ok = self.riemann.n == n
            && self.riemann.rank == 4
            && self.grad_riemann.n == n
            && self.grad_riemann.rank == 5
            && self.grad2_riemann.n == n
            && self.grad2_riemann.rank == 6
            && self.gauge.n == n
            && self.gauge.rank == 2
            && self.gauge.df == df
            && self.grad_gauge.n == n
            && self.grad_gauge.rank == 3
            && self.grad_gauge.df == df
            && self.grad2_gauge.n == n
            && self.grad2_gauge.rank == 4
            && self.grad2_gauge.df == df;
        if !shape_ok {
            return Err(Error::DimensionMismatch(format!(
                "jet arrays do not match dim={n}, fiber_dim={df}"
            )));
        }

        let mut rep = ValidationReport::default();
        for (name, t, b) in [
            ("riemann", &self.riemann, 0usize),
            ("grad-riemann", &self.grad_riemann, 1),
            ("grad2-riemann", &self.grad2_riemann, 2),
        ] {
            let (a1, a2, pe, bi) = riemann_class_residuals(t, b);
            rep.check(&format!("{name}: pair-antisymmetry (first pair)"), a1);
            rep.check(&format!("{name}: pair-antisymmetry (second pair)"), a2);
            rep.check(&format!("{name}: pair-exchange symmetry"), pe);
            rep.check(&format!("{name}: first Bianchi"), bi);
            rep.check(&format!("{name}: real entries"), max_imag(t));
        }
        rep.check("gauge: pair-antisymmetry", fiber_antisymmetry_residual(&self.gauge, 0, 1));
        rep.check(
            "grad-gauge: pair-antisymmetry",
            fiber_antisymmetry_residual(&self.grad_gauge, 1, 2),
        );
        rep.check(
            "grad2-gauge: pair-antisymmetry",
            fiber_antisymmetry_residual(&self.grad2_gauge, 2, 3),
        );
        Ok(rep)
    }

    /// Draw random jets satisfying every invariant, deterministically in the
    /// seed.
    ///
    /// Riemann-type arrays start from uniform entries in [-1, 1) and are
    /// projected onto the Riemann symmetry class (pair antisymmetries, pair
    /// exchange, no cyclic part); derivative jets get the same projection on
    /// their curvature slots plus symmetrization of the two derivative slots.
    /// Only index symmetries are imposed, no differential identities. With
    /// `reality` set, every gauge matrix is anti-Hermitian.
    pub fn random_jets(dim: usize, fiber_dim: usize, seed: u64, reality: bool) -> Result<Self> {
        if dim < 2 || fiber_dim < 1 {
            return Err(Error::InvalidArgument(format!(
                "random jets need dim >= 2 and fiber_dim >= 1, got ({dim}, {fiber_dim})"
            )));
        }
        let n = dim;
        let df = fiber_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let raw4 = Tensor::from_fn(n, 4, |_| c(rng.gen_range(-1.0..1.0)));
        let riemann = riemann_class(&raw4, 0);
        let raw5 = Tensor::from_fn(n, 5, |_| c(rng.gen_range(-1.0..1.0)));
        let grad_riemann = riemann_class(&raw5, 1);
        let raw6 = Tensor::from_fn(n, 6, |_| c(rng.gen_range(-1.0..1.0)));
        let grad2_riemann = riemann_class(&raw6.symmetrize(&[0, 1]), 2);

        let draw_matrix = |rng: &mut ChaCha8Rng| -> CMat {
            let m = CMat::from_fn(df, df, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            if reality {
                // anti-Hermitian projection: (G - G†)/2
                (&m - m.adjoint()) * c(0.5)
            } else {
                m
            }
        };

        let mut gauge = FiberTensor::zeros(n, 2, df);
        for m in 0..n {
            for v in (m + 1)..n {
                let g = draw_matrix(&mut rng);
                *gauge.at_mut(&[m, v]) = g.clone();
                *gauge.at_mut(&[v, m]) = -g;
            }
        }
        let mut grad_gauge = FiberTensor::zeros(n, 3, df);
        for a in 0..n {
            for m in 0..n {
                for v in (m + 1)..n {
                    let g = draw_matrix(&mut rng);
                    *grad_gauge.at_mut(&[a, m, v]) = g.clone();
                    *grad_gauge.at_mut(&[a, v, m]) = -g;
                }
            }
        }
        let mut grad2_gauge = FiberTensor::zeros(n, 4, df);
        for a in 0..n {
            for b in a..n {
                for m in 0..n {
                    for v in (m + 1)..n {
                        let g = draw_matrix(&mut rng);
                        *grad2_gauge.at_mut(&[a, b, m, v]) = g.clone();
                        *grad2_gauge.at_mut(&[a, b, v, m]) = -g.clone();
                        *grad2_gauge.at_mut(&[b, a, m, v]) = g.clone();
                        *grad2_gauge.at_mut(&[b, a, v, m]) = -g;
                    }
                }
            }
        }

        Ok(CurvatureJets {
            dim,
            fiber_dim,
            riemann,
            grad_riemann,
            grad2_riemann,
            gauge,
            grad_gauge,
            grad2_gauge,
        })
    }

    /// Change the orthonormal frame by `q` on every base index.
    pub fn rotate(&self, q: &RMat) -> Self {
        CurvatureJets {
            dim: self.dim,
            fiber_dim: self.fiber_dim,
            riemann: self.riemann.rotate(q),
            grad_riemann: self.grad_riemann.rotate(q),
            grad2_riemann: self.grad2_riemann.rotate(q),
            gauge: self.gauge.rotate_base(q),
            grad_gauge: self.grad_gauge.rotate_base(q),
            grad2_gauge: self.grad2_gauge.rotate_base(q),
        }
    }

    /// The complete table of contracted curvatures.
    ///
    /// Every contraction used anywhere downstream is computed here, with the
    /// fixed convention `Ric_{mn} = R^a_{man}` and trivial index raising.
    pub fn derive_contractions(&self) -> Contractions {
        let ricci = self.riemann.trace_pair(0, 2);
        let scalar = ricci.trace_pair(0, 1).scalar_value().re;
        let grad_ricci = self.grad_riemann.trace_pair(1, 3);
        let grad_scalar = grad_ricci.trace_pair(1, 2);
        let grad2_ricci = self.grad2_riemann.trace_pair(2, 4);
        let lap_ricci = grad2_ricci.trace_pair(0, 1);
        let grad2_scalar = grad2_ricci.trace_pair(2, 3);
        let lap_scalar = grad2_scalar.trace_pair(0, 1).scalar_value().re;
        let div_gauge = self.grad_gauge.trace_pair(0, 1);
        let grad_div_gauge = self.grad2_gauge.trace_pair(1, 2);
        Contractions {
            ricci,
            scalar,
            grad_ricci,
            grad_scalar,
            grad2_ricci,
            lap_ricci,
            grad2_scalar,
            lap_scalar,
            div_gauge,
            grad_div_gauge,
        }
    }

    /// Heat coefficients of the unresummed expansion at this point: `a0 = 1`,
    /// `a1 = R/6`, and the standard `a2` combination
    ///
    /// ```text
    /// a2 = ΔR/30 + R²/72 − Ric·Ric/180 + Riem·Riem/180
    ///      + 𝓡·𝓡/12 + 𝓡·iF/6 − F·F/12 ,
    /// ```
    ///
    /// each term contracted over all base indices; matrix-valued terms act on
    /// the fiber, scalar terms multiply the identity.
    pub fn classical_coefficients(&self, f: &SkewForm) -> Result<(CMat, CMat, CMat)> {
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "field dim {} does not match jets dim {}",
                f.dim(),
                self.dim
            )));
        }
        let n = self.dim;
        let df = self.fiber_dim;
        let con = self.derive_contractions();
        let eye = CMat::identity(df, df);

        let riem2: C64 = self.riemann.data.iter().map(|z| z * z).sum();
        let ric2: C64 = con.ricci.data.iter().map(|z| z * z).sum();
        let mut f2 = 0.0;
        let mut gauge2 = CMat::zeros(df, df);
        let mut gauge_f = CMat::zeros(df, df);
        for m in 0..n {
            for v in 0..n {
                let fmv = f.mat()[(m, v)];
                f2 += fmv * fmv;
                let r = self.gauge.at(&[m, v]);
                gauge2 += r * r;
                gauge_f += r * C64::new(0.0, fmv);
            }
        }

        let a0 = eye.clone();
        let a1 = &eye * c(con.scalar / 6.0);
        let scalar_part = con.lap_scalar / 30.0 + con.scalar * con.scalar / 72.0
            - ric2.re / 180.0
            + riem2.re / 180.0
            - f2 / 12.0;
        let a2 = &eye * c(scalar_part) + gauge2 * c(1.0 / 12.0) + gauge_f * c(1.0 / 6.0);
        Ok((a0, a1, a2))
    }

    fn real_tensor_json(t: &Tensor) -> Value {
        Value::Array(t.data.iter().map(|z| json!(z.re)).collect())
    }

    fn fiber_tensor_json(t: &FiberTensor) -> Value {
        Value::Array(
            t.data
                .iter()
                .map(|m| {
                    Value::Array(
                        (0..m.nrows())
                            .map(|r| {
                                Value::Array(
                                    (0..m.ncols())
                                        .map(|cc| json!([m[(r, cc)].re, m[(r, cc)].im]))
                                        .collect(),
                                )
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    /// Serialize to the interchange document: flat row-major real arrays for
    /// base tensors, nested rows of `[re, im]` pairs for fiber matrices, and
    /// the convention stamp.
    pub fn to_json(&self) -> Value {
        json!({
            "convention": CONVENTION,
            "dim": self.dim,
            "fiber_dim": self.fiber_dim,
            "riemann": Self::real_tensor_json(&self.riemann),
            "grad_riemann": Self::real_tensor_json(&self.grad_riemann),
            "grad2_riemann": Self::real_tensor_json(&self.grad2_riemann),
            "gauge": Self::fiber_tensor_json(&self.gauge),
            "grad_gauge": Self::fiber_tensor_json(&self.grad_gauge),
            "grad2_gauge": Self::fiber_tensor_json(&self.grad2_gauge),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("jets serialize")
    }

    fn real_tensor_from_json(v: &Value, n: usize, rank: usize, field: &str) -> Result<Tensor> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::InvalidArgument(format!("{field}: expected an array")))?;
        let want = n.pow(rank as u32);
        if arr.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "{field}: expected {want} entries, got {}",
                arr.len()
            )));
        }
        let mut t = Tensor::zeros(n, rank);
        for (i, x) in arr.iter().enumerate() {
            let re = x
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument(format!("{field}: non-numeric entry")))?;
            t.data[i] = c(re);
        }
        Ok(t)
    }

    fn fiber_tensor_from_json(
        v: &Value,
        n: usize,
        rank: usize,
        df: usize,
        field: &str,
    ) -> Result<FiberTensor> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::InvalidArgument(format!("{field}: expected an array")))?;
        let want = n.pow(rank as u32);
        if arr.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "{field}: expected {want} entries, got {}",
                arr.len()
            )));
        }
        let mut t = FiberTensor::zeros(n, rank, df);
        for (i, mv) in arr.iter().enumerate() {
            let rows = mv
                .as_array()
                .filter(|r| r.len() == df)
                .ok_or_else(|| Error::InvalidArgument(format!("{field}: bad fiber matrix")))?;
            let mut m = CMat::zeros(df, df);
            for (r, rowv) in rows.iter().enumerate() {
                let row = rowv
                    .as_array()
                    .filter(|x| x.len() == df)
                    .ok_or_else(|| Error::InvalidArgument(format!("{field}: bad fiber row")))?;
                for (cc, ev) in row.iter().enumerate() {
                    let pair = ev
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| Error::InvalidArgument(format!("{field}: bad complex entry")))?;
                    let re = pair[0].as_f64().ok_or_else(|| {
                        Error::InvalidArgument(format!("{field}: non-numeric complex part"))
                    })?;
                    let im = pair[1].as_f64().ok_or_else(|| {
                        Error::InvalidArgument(format!("{field}: non-numeric complex part"))
                    })?;
                    m[(r, cc)] = C64::new(re, im);
                }
            }
            t.data[i] = m;
        }
        Ok(t)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let conv = v["convention"].as_str().unwrap_or("");
        if conv != CONVENTION {
            return Err(Error::InvalidArgument(format!(
                "unsupported convention {conv:?}, expected {CONVENTION:?}"
            )));
        }
        let dim = v["dim"]
            .as_u64()
            .ok_or_else(|| Error::InvalidArgument("missing dim".into()))? as usize;
        let df = v["fiber_dim"]
            .as_u64()
            .ok_or_else(|| Error::InvalidArgument("missing fiber_dim".into()))?
            as usize;
        if dim < 2 || df < 1 {
            return Err(Error::InvalidArgument(format!("bad shape ({dim}, {df})")));
        }
        Ok(CurvatureJets {
            dim,
            fiber_dim: df,
            riemann: Self::real_tensor_from_json(&v["riemann"], dim, 4, "riemann")?,
            grad_riemann: Self::real_tensor_from_json(&v["grad_riemann"], dim, 5, "grad_riemann")?,
            grad2_riemann: Self::real_tensor_from_json(
                &v["grad2_riemann"],
                dim,
                6,
                "grad2_riemann",
            )?,
            gauge: Self::fiber_tensor_from_json(&v["gauge"], dim, 2, df, "gauge")?,
            grad_gauge: Self::fiber_tensor_from_json(&v["grad_gauge"], dim, 3, df, "grad_gauge")?,
            grad2_gauge: Self::fiber_tensor_from_json(
                &v["grad2_gauge"],
                dim,
                4,
                df,
                "grad2_gauge",
            )?,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s)?;
        Self::from_json(&v)
    }
}

/// Every contracted curvature the coefficient formulas use. Produced only by
/// [`CurvatureJets::derive_contractions`] so a single convention is
/// guaranteed throughout.
#[derive(Debug, Clone)]
pub struct Contractions {
    /// `Ric_{mn} = R^a_{man}`, rank 2.
    pub ricci: Tensor,
    /// Scalar curvature `R = Ric^m_m`.
    pub scalar: f64,
    /// `∇_c Ric_{mn}`, rank 3 (derivative slot first).
    pub grad_ricci: Tensor,
    /// `∇_c R`, rank 1.
    pub grad_scalar: Tensor,
    /// `∇_c ∇_d Ric_{mn}`, rank 4.
    pub grad2_ricci: Tensor,
    /// `Δ Ric_{mn} = ∇^a ∇_a Ric_{mn}`, rank 2.
    pub lap_ricci: Tensor,
    /// `∇_c ∇_d R`, rank 2.
    pub grad2_scalar: Tensor,
    /// `Δ R`.
    pub lap_scalar: f64,
    /// `∇_m 𝓡^m_n`, fiber-valued rank 1.
    pub div_gauge: FiberTensor,
    /// `∇_c ∇_m 𝓡^m_n`, fiber-valued rank 2.
    pub grad_div_gauge: FiberTensor,
}

/// Leading small-time forms of the universal tensor functions multiplying the
/// curvature monomials in the first three resummed coefficients.
///
/// The trailing digit of the name is the coefficient order, the two digits
/// before the underscore enumerate the monomial, matching the layout
///
/// * order 0: `f0`, scalar;
/// * order 1: `f11_1[a,b,m,n]` (pairs with `R_{abmn}`), `f12_1[m,n]`
///   (pairs with `𝓡_{mn}`);
/// * order 2: `f11_2[a,b,m,n,s,r]` (with `∇_(a∇_b) R_{mnsr}`),
///   `f12_2[a,b,m,n]` (with `∇_(a∇_b) 𝓡_{mn}`),
///   `f21_2[a,b,g,d,m,n,s,r]` (with `R_{abgd} R_{mnsr}`),
///   `f22_2[a,b,m,n]` (with `𝓡_{ab} 𝓡_{mn}`),
///   `f23_2[a,b,m,n,s,r]` (with `𝓡_{ab} R_{mnsr}`).
///
/// Each value is exact through the printed order in `t·F`; the jets argument
/// only fixes the base dimension.
pub fn reference_small_t(name: &str, jets: &CurvatureJets, f: &SkewForm, t: f64) -> Result<Tensor> {
    if f.dim() != jets.dim {
        return Err(Error::DimensionMismatch(format!(
            "field dim {} does not match jets dim {}",
            f.dim(),
            jets.dim
        )));
    }
    let n = jets.dim;
    let fm = f.mat();
    let ifc = |a: usize, b: usize| C64::new(0.0, fm[(a, b)]);
    let d = |a: usize, b: usize| if a == b { c(1.0) } else { c(0.0) };

    let t_out = match name {
        "f0" => {
            let mut f2 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    f2 += fm[(a, b)] * fm[(a, b)];
                }
            }
            Tensor::scalar(c(1.0 - t * t * f2 / 12.0))
        }
        "f11_1" => {
            // (1/6) δ^a_[m δ^b_n]
            Tensor::from_fn(n, 4, |i| d(i[0], i[2]) * d(i[1], i[3]))
                .antisymmetrize_pair(2, 3)
                .scale(c(1.0 / 6.0))
        }
        "f12_1" => {
            // (1/6) t iF^{mn}
            Tensor::from_fn(n, 2, |i| ifc(i[0], i[1])).scale(c(t / 6.0))
        }
        "f11_2" => {
            // (1/30) g^{ab} δ^m_[s δ^n_r]
            Tensor::from_fn(n, 6, |i| d(i[0], i[1]) * d(i[2], i[4]) * d(i[3], i[5]))
                .antisymmetrize_pair(4, 5)
                .scale(c(1.0 / 30.0))
        }
        "f12_2" => {
            // −(1/15) t iF^(a_[n δ^b)_m]
            Tensor::from_fn(n, 4, |i| ifc(i[0], i[3]) * d(i[1], i[2]))
                .antisymmetrize_pair(2, 3)
                .symmetrize(&[0, 1])
                .scale(c(-t / 15.0))
        }
        "f21_2" => {
            // (1/180) g_{m[a} g_{b]n} g^{s[g} g^{d]r}
            let t1 = Tensor::from_fn(n, 8, |i| {
                d(i[4], i[0]) * d(i[1], i[5]) * d(i[6], i[2]) * d(i[3], i[7])
            })
            .antisymmetrize_pair(0, 1)
            .antisymmetrize_pair(2, 3)
            .scale(c(1.0 / 180.0));
            // −(1/180) δ^[g_[a g_{b][n} g^{d][r} δ^s]_m]
            let t2 = Tensor::from_fn(n, 8, |i| {
                d(i[2], i[0]) * d(i[1], i[5]) * d(i[3], i[7]) * d(i[6], i[4])
            })
            .antisymmetrize_pair(2, 3)
            .antisymmetrize_pair(0, 1)
            .antisymmetrize_pair(5, 4)
            .antisymmetrize_pair(7, 6)
            .scale(c(-1.0 / 180.0));
            // (1/72) δ^g_[a δ^d_b] δ^s_[m δ^r_n]
            let t3 = Tensor::from_fn(n, 8, |i| {
                d(i[2], i[0]) * d(i[3], i[1]) * d(i[6], i[4]) * d(i[7], i[5])
            })
            .antisymmetrize_pair(0, 1)
            .antisymmetrize_pair(4, 5)
            .scale(c(1.0 / 72.0));
            t1.add(&t2).add(&t3)
        }
        "f22_2" => {
            // (1/12) δ^a_[m δ^b_n]
            Tensor::from_fn(n, 4, |i| d(i[0], i[2]) * d(i[1], i[3]))
                .antisymmetrize_pair(2, 3)
                .scale(c(1.0 / 12.0))
        }
        "f23_2" => {
            // −(1/36) t iF^{ab} δ^m_[s δ^n_r]
            let t1 = Tensor::from_fn(n, 6, |i| ifc(i[0], i[1]) * d(i[2], i[4]) * d(i[3], i[5]))
                .antisymmetrize_pair(4, 5)
                .scale(c(-t / 36.0));
            // −(1/30) t iF^{mn} δ^a_[s δ^b_r]
            let t2 = Tensor::from_fn(n, 6, |i| ifc(i[2], i[3]) * d(i[0], i[4]) * d(i[1], i[5]))
                .antisymmetrize_pair(4, 5)
                .scale(c(-t / 30.0));
            // (1/9) δ^[m_[s t iF^{n][a} δ^b]_r]
            let t3 = Tensor::from_fn(n, 6, |i| d(i[2], i[4]) * ifc(i[3], i[0]) * d(i[1], i[5]))
                .antisymmetrize_pair(2, 3)
                .antisymmetrize_pair(0, 1)
                .antisymmetrize_pair(4, 5)
                .scale(c(t / 9.0));
            t1.add(&t2).add(&t3)
        }
        _ => return Err(Error::UnknownName(name.to_string())),
    };
    Ok(t_out)
}

/// Van Vleck square root `Δ^{1/2}(u)` truncated at fourth order in `u`:
///
/// ```text
/// 1 + (1/12) Ric_{ab} u^a u^b − (1/24) ∇_a Ric_{bc} u^a u^b u^c
///   + (1/80) ∇_a ∇_b Ric_{cd} u⁴ + (1/288) Ric_{ab} Ric_{cd} u⁴
///   + (1/360) R_{manb} R^m_c{}^n_d u⁴ .
/// ```
pub fn vvm_sqrt(jets: &CurvatureJets, u: &[f64]) -> f64 {
    let n = jets.dim;
    assert_eq!(u.len(), n, "displacement length must equal the base dimension");
    let con = jets.derive_contractions();
    // the five invariant sums, accumulated separately
    let mut ric_uu = 0.0;
    let mut dric_uuu = 0.0;
    let mut ddric_u4 = 0.0;
    let mut riem_u4 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let uab = u[a] * u[b];
            ric_uu += con.ricci.at(&[a, b]).re * uab;
            for e in 0..n {
                let uabe = uab * u[e];
                dric_uuu += con.grad_ricci.at(&[a, b, e]).re * uabe;
                for g in 0..n {
                    ddric_u4 += con.grad2_ricci.at(&[a, b, e, g]).re * uabe * u[g];
                }
            }
        }
    }
    for m in 0..n {
        for v in 0..n {
            let mut w = 0.0;
            for a in 0..n {
                for b in 0..n {
                    w += jets.riemann.at(&[m, a, v, b]).re * u[a] * u[b];
                }
            }
            riem_u4 += w * w;
        }
    }
    1.0 + ric_uu / 12.0 - dric_uuu / 24.0 + ddric_u4 / 80.0 + ric_uu * ric_uu / 288.0
        + riem_u4 / 360.0
}
