//! Criterion benchmarks for the per-update hot paths; see `benches/`.

use onlinefl_core::sim::{gaussian_clusters, Dataset};
use onlinefl_core::Batch;

/// A digits-sized synthetic batch (784 features, 10 classes).
pub fn digit_batch(n: usize) -> (Dataset, Batch) {
    let data = gaussian_clusters(10, 784, n, 1.0, 11).expect("valid cluster spec");
    let idx: Vec<usize> = (0..n).collect();
    let batch = data.batch(&idx).expect("indices in range");
    (data, batch)
}
