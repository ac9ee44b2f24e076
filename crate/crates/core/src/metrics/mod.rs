//! Distances and moment functionals on weighted point clouds.
//!
//! The weighted distance is `W(mu, nu) = sup |<f, mu - nu>|` over test
//! functions `f = (1 + |v|^2) g` with `g` bounded by 1 and 1-Lipschitz.

mod bipartite;
mod dyadic;
mod lp;
mod moments;
pub mod network_simplex;
mod ot;
mod witness;

pub use bipartite::BipartiteNetwork;
pub use dyadic::{dyadic_upper_bound, DyadicBound, DyadicPartition};
pub use lp::{wasserstein_lp, wasserstein_lp_with, DualWitness, LpOptions, WassersteinLp, DEFAULT_LP_CAP};
pub use moments::{correlation_check, lambda_k, moment_weight, reweight, CorrelationCheck};
pub use ot::w1_ot;
pub use witness::{wasserstein_lower_witness, LowerWitness};
