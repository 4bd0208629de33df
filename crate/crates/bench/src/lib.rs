//! Fixtures shared by the criterion benches.

use roughvol::neuralnet::{Network, NetworkMeta, HIDDEN_LAYERS};
use roughvol::params::ModelKind;

/// Untrained flat-curve rHeston network with the production layer sizes
/// and realistic input scaling. Timing does not depend on the weights.
pub fn rheston_network(seed: u64) -> Network {
    let raw = Network::glorot(6, &HIDDEN_LAYERS, seed);
    let n = raw.dims().len() - 1;
    let mut lo: Vec<f64> = ModelKind::RHeston.default_box().ranges.iter().map(|r| r.0).collect();
    let mut hi: Vec<f64> = ModelKind::RHeston.default_box().ranges.iter().map(|r| r.1).collect();
    lo.extend([0.01, 0.003, 0.4]);
    hi.extend([0.16, 2.5, 1.5]);
    Network::from_parts(
        raw.dims().to_vec(),
        (0..n).map(|l| raw.weights(l).to_vec()).collect(),
        (0..n).map(|l| raw.biases(l).to_vec()).collect(),
        lo,
        hi,
        NetworkMeta {
            model: Some(ModelKind::RHeston),
            ..NetworkMeta::default()
        },
    )
    .expect("consistent shapes")
}
