use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng;

/// Row-major labelled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 || num_classes < 2 {
            return Err(Error::InvalidArgument(
                "dataset needs dim ≥ 1 and ≥ 2 classes".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                what: "dataset features",
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let sub = self.subset(indices);
        Batch::new(sub.features, sub.dim, sub.labels)
    }

    /// The first `per_class` examples of every class, in index order.
    pub fn take_per_class(&self, per_class: usize) -> Dataset {
        let mut seen = vec![0usize; self.num_classes];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let y = self.labels[i];
                seen[y] += 1;
                seen[y] <= per_class
            })
            .collect();
        self.subset(&keep)
    }

    /// Splits off the first `n` rows; the rest form the second part.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Isotropic Gaussian blobs: class centers drawn N(0, separation²) per
/// coordinate, samples N(center, 1). Labels cycle so classes stay balanced.
pub fn gaussian_clusters(
    num_classes: usize,
    dim: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut r = rng::stream(seed, "clusters/centers");
    let centers: Vec<f64> = (0..num_classes * dim)
        .map(|_| separation * r.sample::<f64, _>(StandardNormal))
        .collect();
    let mut r = rng::stream(seed, "clusters/samples");
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % num_classes;
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut r);
            features.push(centers[y * dim + j] + z);
        }
        labels.push(y);
    }
    Dataset::new(features, labels, dim, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_and_counts() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 1, 1], 2, 2).unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.features, vec![4.0, 5.0, 0.0, 1.0]);
        assert_eq!(s.labels, vec![1, 0]);
        assert_eq!(d.label_counts(), vec![1, 2]);
        assert_eq!(d.take_per_class(1).labels, vec![0, 1]);
        assert!(Dataset::new(vec![0.0], vec![3], 1, 2).is_err());
    }

    #[test]
    fn clusters_are_balanced_and_seeded() {
        let a = gaussian_clusters(4, 3, 40, 3.0, 1).unwrap();
        assert_eq!(a.label_counts(), vec![10; 4]);
        assert_eq!(a, gaussian_clusters(4, 3, 40, 3.0, 1).unwrap());
        assert_ne!(a, gaussian_clusters(4, 3, 40, 3.0, 2).unwrap());
    }
}
