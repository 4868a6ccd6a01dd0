use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Indices into a dataset held by one simulated user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserShard {
    pub user_id: usize,
    pub indices: Vec<usize>,
}

impl UserShard {
    pub fn label_counts(&self, labels: &[usize], num_classes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_classes];
        for &i in &self.indices {
            counts[labels[i]] += 1;
        }
        counts
    }
}

/// Label-sorted shards, two per user. The last shard absorbs any remainder.
pub fn partition_noniid(labels: &[usize], num_users: usize, seed: u64) -> Result<Vec<UserShard>> {
    if num_users == 0 || num_users > labels.len() / 2 {
        return Err(Error::InvalidArgument(format!(
            "{num_users} users cannot each hold two shards of {} examples",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let shards = 2 * num_users;
    let size = labels.len() / shards;
    let bounds = |s: usize| {
        let end = if s + 1 == shards {
            labels.len()
        } else {
            (s + 1) * size
        };
        s * size..end
    };
    let mut perm: Vec<usize> = (0..shards).collect();
    perm.shuffle(&mut rng::stream(seed, "partition/noniid"));
    Ok((0..num_users)
        .map(|u| {
            let (a, b) = (
                perm[2 * u].min(perm[2 * u + 1]),
                perm[2 * u].max(perm[2 * u + 1]),
            );
            let mut indices = order[bounds(a)].to_vec();
            indices.extend_from_slice(&order[bounds(b)]);
            UserShard {
                user_id: u,
                indices,
            }
        })
        .collect())
}

/// Seeded shuffle split into equal contiguous parts; the last part absorbs
/// any remainder.
pub fn partition_iid(len: usize, num_users: usize, seed: u64) -> Result<Vec<UserShard>> {
    if num_users == 0 || num_users > len {
        return Err(Error::InvalidArgument(format!(
            "{num_users} users cannot split {len} examples"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, "partition/iid"));
    let size = len / num_users;
    Ok((0..num_users)
        .map(|u| {
            let end = if u + 1 == num_users {
                len
            } else {
                (u + 1) * size
            };
            UserShard {
                user_id: u,
                indices: order[u * size..end].to_vec(),
            }
        })
        .collect())
}
