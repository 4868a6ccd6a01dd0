//! Simulated fleet, staleness models, data partitioning and generators.

mod dataset;
mod device;
mod fleet;
mod idx;
mod partition;
mod staleness;
mod stream;

pub use dataset::{gaussian_clusters, Dataset};
pub use device::{lognormal_noise, DeviceProfile, DeviceState, TaskOutcome, ThermalParams};
pub use fleet::{load_fleet, offline_sweep, parse_fleet, test_fleet, training_fleet, FleetFile};
pub use idx::{bundled_digits, load_idx, load_idx_dir, parse_idx};
pub use partition::{partition_iid, partition_noniid, UserShard};
pub use staleness::{next_staleness, StalenessDraw, StalenessModel};
pub use stream::{DriftConfig, DriftingStream};
