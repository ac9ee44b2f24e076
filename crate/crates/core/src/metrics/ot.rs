use crate::error::{check_dim, KacError, Result};
use crate::measure::WeightedPointCloud;

use super::bipartite::BipartiteNetwork;

/// Optimal transport cost with ground cost `|x - y|` between nonnegative
/// clouds of equal mass.
///
/// # Errors
///
/// Signed input, empty clouds, masses differing by more than `1e-9`, or
/// solver failure.
pub fn w1_ot(mu: &WeightedPointCloud, nu: &WeightedPointCloud) -> Result<f64> {
    check_dim(mu.dim(), nu.dim())?;
    if !mu.is_nonnegative() || !nu.is_nonnegative() {
        return Err(KacError::SignedMeasure);
    }
    let (a, b) = (mu.without_zero_atoms(), nu.without_zero_atoms());
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-9 {
        return Err(KacError::MassMismatch(ma, mb));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    // Remove the residual imbalance so the flow problem is exactly balanced.
    let scale = ma / mb;
    let mut supply: Vec<f64> = a.weights().to_vec();
    supply.extend(b.weights().iter().map(|w| -w * scale));
    let net = BipartiteNetwork::new(a.dim(), a.points_flat(), b.points_flat(), None);
    Ok(net.solve(&supply)?.cost)
}
