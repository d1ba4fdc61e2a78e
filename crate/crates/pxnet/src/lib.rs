//! Probit regression for undirected binary networks with exchangeable latent
//! errors.
//!
//! The model puts a latent Gaussian vector behind the observed relations,
//! `y_ij = 1[x_ij' beta + eps_ij > 0]`, where the errors are exchangeable over
//! actor relabelings. Exchangeability forces the error covariance into the
//! two-parameter form `Omega(rho) = S1 + rho * S2`, letting a single
//! correlation parameter absorb the excess dependence among relations that
//! share an actor.
//!
//! The crate provides:
//! - structured algebra for exchangeable covariance matrices ([`excov`]),
//! - a block-coordinate EM estimator of `(beta, rho)` ([`bcem`]),
//! - marginal prediction of held-out relations ([`predict`]),
//! - data generators and simulation-study runners ([`simulate`]),
//! - small-scale exact-likelihood references ([`oracle`]),
//! - a cross-validation benchmark harness ([`crossval`]).

pub mod bcem;
pub mod crossval;
pub mod error;
pub mod excov;
pub mod netdata;
pub mod normal;
pub mod oracle;
pub mod predict;
pub mod probit;
pub mod relindex;
pub mod simulate;

pub use error::{PxError, Result};
