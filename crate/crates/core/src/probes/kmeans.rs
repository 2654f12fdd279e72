use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy, check_inputs, same_layout, ProbeError, ProbeMethod, ProbeParams, ProbeResult};
use crate::codes::{build_code_table, NeuralCode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iterations: 300,
            tolerance: 1e-4,
            seed,
        }
    }
}

/// Lloyd centroids over codes viewed as 0/1 real vectors, each cluster tagged
/// with the label most frequent among its training members.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub cluster_labels: Vec<usize>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub inertia: f64,
}

/// Indices of the set bits of a code.
fn ones(code: &NeuralCode) -> Vec<u32> {
    let mut out = Vec::with_capacity(code.count_ones() as usize);
    for (w, &word) in code.words().iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            out.push(w as u32 * 64 + bits.trailing_zeros());
            bits &= bits - 1;
        }
    }
    out
}

fn sq_dist(point: &[u32], centroid: &[f64], centroid_sq: f64) -> f64 {
    let dot: f64 = point.iter().map(|&i| centroid[i as usize]).sum();
    (point.len() as f64 - 2.0 * dot + centroid_sq).max(0.0)
}

fn nearest(point: &[u32], centroids: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, (c, &n)) in centroids.iter().zip(norms).enumerate() {
        let d = sq_dist(point, c, n);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn norms(centroids: &[Vec<f64>]) -> Vec<f64> {
    centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect()
}

fn kmeans_pp(points: &[Vec<u32>], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dense = |p: &[u32]| {
        let mut v = vec![0.0; dim];
        for &i in p {
            v[i as usize] = 1.0;
        }
        v
    };
    let mut centroids = vec![dense(&points[rng.random_range(0..points.len())])];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| {
            let c = &centroids[0];
            sq_dist(p, c, c.iter().map(|v| v * v).sum())
        })
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = dense(&points[pick]);
        let cn: f64 = c.iter().map(|v| v * v).sum();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c, cn));
        }
        centroids.push(c);
    }
    centroids
}

impl KMeansModel {
    pub fn fit(
        codes: &[NeuralCode],
        labels: &[usize],
        config: &KMeansConfig,
    ) -> Result<Self, ProbeError> {
        check_inputs(codes, labels, "k-means needs training codes")?;
        if config.k == 0 {
            return Err(ProbeError::Param("k must be positive".into()));
        }
        let distinct = build_code_table(codes).num_distinct();
        if config.k > distinct {
            return Err(ProbeError::DegenerateClustering {
                k: config.k,
                distinct,
            });
        }
        let dim = codes[0].len();
        let points: Vec<Vec<u32>> = codes.iter().map(ones).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut centroids = kmeans_pp(&points, dim, config.k, &mut rng);
        let mut assignments = vec![0usize; points.len()];
        let mut iterations = 0;

        while iterations < config.max_iterations {
            iterations += 1;
            let cn = norms(&centroids);
            for (p, a) in points.iter().zip(assignments.iter_mut()) {
                *a = nearest(p, &centroids, &cn).0;
            }
            let mut sums = vec![vec![0.0; dim]; config.k];
            let mut counts = vec![0usize; config.k];
            for (p, &a) in points.iter().zip(&assignments) {
                counts[a] += 1;
                for &i in p {
                    sums[a][i as usize] += 1.0;
                }
            }
            let mut max_shift = 0.0f64;
            for j in 0..config.k {
                if counts[j] == 0 {
                    // Empty cluster keeps its previous centroid.
                    continue;
                }
                let inv = 1.0 / counts[j] as f64;
                let mut shift = 0.0;
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    let next = s * inv;
                    shift += (next - *c) * (next - *c);
                    *c = next;
                }
                max_shift = max_shift.max(shift.sqrt());
            }
            if max_shift < config.tolerance {
                break;
            }
        }

        let cn = norms(&centroids);
        let mut inertia = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (j, d) = nearest(p, &centroids, &cn);
            *a = j;
            inertia += d;
        }

        let classes = labels.iter().max().copied().unwrap_or(0) + 1;
        let mut global = vec![0usize; classes];
        let mut per_cluster = vec![vec![0usize; classes]; config.k];
        for (&a, &y) in assignments.iter().zip(labels) {
            per_cluster[a][y] += 1;
            global[y] += 1;
        }
        let majority = |counts: &[usize]| {
            (0..counts.len())
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .unwrap_or(0)
        };
        let global_label = majority(&global);
        let cluster_labels = per_cluster
            .iter()
            .map(|counts| {
                if counts.iter().all(|&c| c == 0) {
                    global_label
                } else {
                    majority(counts)
                }
            })
            .collect();

        Ok(Self {
            centroids,
            cluster_labels,
            assignments,
            iterations,
            inertia,
        })
    }

    pub fn assign(&self, code: &NeuralCode) -> usize {
        let cn = norms(&self.centroids);
        nearest(&ones(code), &self.centroids, &cn).0
    }

    pub fn predict(&self, codes: &[NeuralCode]) -> Vec<usize> {
        let cn = norms(&self.centroids);
        codes
            .iter()
            .map(|c| self.cluster_labels[nearest(&ones(c), &self.centroids, &cn).0])
            .collect()
    }
}

/// Clusters the training codes into `config.k` groups, labels each group by
/// its majority training label, and scores train and test codes against
/// those labels (test codes go to their nearest centroid).
pub fn kmeans_accuracy(
    train_codes: &[NeuralCode],
    train_labels: &[usize],
    test_codes: &[NeuralCode],
    test_labels: &[usize],
    config: &KMeansConfig,
) -> Result<ProbeResult, ProbeError> {
    check_inputs(test_codes, test_labels, "k-means needs test codes")?;
    same_layout(train_codes, test_codes)?;
    let model = KMeansModel::fit(train_codes, train_labels, config)?;
    let train_pred: Vec<usize> = model
        .assignments
        .iter()
        .map(|&a| model.cluster_labels[a])
        .collect();
    let test_pred = model.predict(test_codes);
    Ok(ProbeResult {
        method: ProbeMethod::KMeans,
        train_accuracy: accuracy(&train_pred, train_labels),
        test_accuracy: accuracy(&test_pred, test_labels),
        hyperparams: ProbeParams::KMeans {
            k: config.k,
            iterations: model.iterations,
            seed: config.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(bits: &[bool]) -> NeuralCode {
        NeuralCode::from_bits(bits, &[bits.len()]).unwrap()
    }

    /// Two blobs: first half of bits on (plus one noisy bit) vs second half on.
    fn blobs(n: usize) -> (Vec<NeuralCode>, Vec<usize>) {
        let mut codes = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let mut bits = vec![false; 32];
            for (j, b) in bits.iter_mut().enumerate() {
                *b = (j < 16) == (label == 0);
            }
            bits[(i / 2) % 32] ^= true;
            codes.push(code(&bits));
            labels.push(label);
        }
        (codes, labels)
    }

    #[test]
    fn separable_blobs_are_perfect() {
        let (codes, labels) = blobs(40);
        let r = kmeans_accuracy(&codes, &labels, &codes, &labels, &KMeansConfig::new(2, 3)).unwrap();
        assert_eq!(r.train_accuracy, 1.0);
        assert_eq!(r.test_accuracy, 1.0);
    }

    #[test]
    fn single_cluster_scores_majority_frequency() {
        let codes = vec![code(&[true, false, true]); 10];
        let labels = vec![0, 1, 1, 2, 1, 0, 1, 1, 2, 1];
        let r = kmeans_accuracy(&codes, &labels, &codes, &labels, &KMeansConfig::new(1, 0)).unwrap();
        assert!((r.train_accuracy - 0.6).abs() < 1e-15);
        assert!((r.test_accuracy - 0.6).abs() < 1e-15);
    }

    #[test]
    fn too_many_clusters_is_degenerate() {
        let codes = vec![code(&[true, false]), code(&[false, true]), code(&[true, false])];
        let err = kmeans_accuracy(&codes, &[0, 1, 0], &codes, &[0, 1, 0], &KMeansConfig::new(3, 0));
        assert!(matches!(err, Err(ProbeError::DegenerateClustering { k: 3, distinct: 2 })));
    }

    #[test]
    fn deterministic_for_seed() {
        let (codes, labels) = blobs(30);
        let cfg = KMeansConfig::new(3, 11);
        let a = KMeansModel::fit(&codes, &labels, &cfg).unwrap();
        let b = KMeansModel::fit(&codes, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lloyd_reaches_fixed_point() {
        let (codes, labels) = blobs(24);
        let m = KMeansModel::fit(&codes, &labels, &KMeansConfig::new(4, 5)).unwrap();
        // Every point sits with its nearest centroid and every centroid is the mean of its members.
        for (c, &a) in codes.iter().zip(&m.assignments) {
            assert_eq!(m.assign(c), a);
        }
        for j in 0..4 {
            let members: Vec<_> = codes.iter().zip(&m.assignments).filter(|(_, &a)| a == j).collect();
            if members.is_empty() {
                continue;
            }
            for bit in 0..32 {
                let mean = members.iter().filter(|(c, _)| c.bit(bit)).count() as f64 / members.len() as f64;
                assert!((mean - m.centroids[j][bit]).abs() < 1e-4);
            }
        }
    }

    proptest! {
        #[test]
        fn never_below_majority_frequency(raw in proptest::collection::vec((0u8..16, 0usize..3), 8..40), seed in 0u64..50) {
            let codes: Vec<_> = raw.iter().map(|(v, _)| code(&[v & 1 == 1, v & 2 == 2, v & 4 == 4, v & 8 == 8])).collect();
            let labels: Vec<usize> = raw.iter().map(|&(_, y)| y).collect();
            let distinct = build_code_table(&codes).num_distinct();
            let k = distinct.min(3);
            let r = kmeans_accuracy(&codes, &labels, &codes, &labels, &KMeansConfig::new(k, seed)).unwrap();
            let mut counts = [0usize; 3];
            for &y in &labels { counts[y] += 1; }
            let majority = *counts.iter().max().unwrap() as f64 / labels.len() as f64;
            prop_assert!(r.train_accuracy + 1e-12 >= majority);
        }
    }
}
