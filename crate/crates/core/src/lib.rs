//! Small-time heat-kernel coefficients of a Laplace-type operator twisted by a
//! covariantly constant U(1) curvature two-form `F`, evaluated non-perturbatively
//! in `F` on a flat fiber bundle over a curved base.
//!
//! The library is organized around the objects that appear in the closed-form
//! expansion of the kernel diagonal:
//!
//! * [`geometry`] — curvature jets at a point, validation, random generation,
//!   contractions, the classical (`F = 0`) reference coefficients.
//! * [`matfun`] — analytic matrix functions of the skew form `F` (`Ω`, `Ψ`, `M`,
//!   `Λ`, ...), the scalar prefactor `J`, and Gauss–Legendre quadrature
//!   including the nested simplex rule.
//! * [`hermite`] — generalized Hermite tensor polynomials of one and two proper
//!   times.
//! * [`perturbation`] — the constant curvature tensors of the perturbative
//!   operators and every assembled time-dependent coefficient tensor.
//! * [`coefficients`] — assembly of the kernel prefactor `U₀`, the diagonal and
//!   off-diagonal coefficients `b₂`, `b₃`, `b₄`, and the resummed `ã₀`, `ã₁`, `ã₂`.
//! * [`oracle`] — an independent exact polynomial×Gaussian operator calculus
//!   that brute-forces the same coefficients from the semigroup definition;
//!   used by the test suite to pin down every transcription.
//!
//! All tensors live in an orthonormal frame at a single base point, so index
//! placement is trivial and contractions use the identity metric throughout.

pub mod coefficients;
pub mod geometry;
pub mod hermite;
pub mod matfun;
pub mod oracle;
pub mod perturbation;
pub mod tensor;

mod error;
pub use error::{Error, Result};

/// Complex scalar used everywhere in the kernel algebra.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix (base-space `n×n` kernels and fiber `d_f×d_f` endomorphisms).
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense real matrix (the skew form `F` and real symmetric kernels).
pub type RMat = nalgebra::DMatrix<f64>;
