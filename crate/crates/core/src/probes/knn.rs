use super::{accuracy, check_inputs, same_layout, ProbeError, ProbeMethod, ProbeParams, ProbeResult};
use crate::codes::{hamming_words, NeuralCode};

pub const DEFAULT_K: usize = 5;

/// `k` nearest training codes under Hamming distance, ordered by
/// `(distance, index)`.
fn nearest_k(train: &[NeuralCode], query: &NeuralCode, k: usize) -> Vec<(u32, usize)> {
    let mut best: Vec<(u32, usize)> = Vec::with_capacity(k + 1);
    for (i, t) in train.iter().enumerate() {
        let d = hamming_words(t.words(), query.words());
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    best
}

/// Majority vote; a tie goes to the label whose closest voter is nearer,
/// then to the smaller label.
fn vote(neighbors: &[(u32, usize)], labels: &[usize]) -> usize {
    let mut tally: Vec<(usize, usize, u32)> = Vec::new(); // (label, count, nearest distance)
    for &(d, i) in neighbors {
        let y = labels[i];
        match tally.iter_mut().find(|t| t.0 == y) {
            Some(t) => {
                t.1 += 1;
                t.2 = t.2.min(d);
            }
            None => tally.push((y, 1, d)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .expect("at least one neighbor")
}

pub fn knn_predict(
    train_codes: &[NeuralCode],
    train_labels: &[usize],
    queries: &[NeuralCode],
    k: usize,
) -> Result<Vec<usize>, ProbeError> {
    check_inputs(train_codes, train_labels, "k-NN needs training codes")?;
    same_layout(train_codes, queries)?;
    if k == 0 || k > train_codes.len() {
        return Err(ProbeError::Param(format!(
            "k = {k} must lie in 1..={}",
            train_codes.len()
        )));
    }
    if queries.iter().any(|q| q.layout() != train_codes[0].layout()) {
        return Err(ProbeError::LayoutMismatch);
    }
    Ok(queries
        .iter()
        .map(|q| vote(&nearest_k(train_codes, q, k), train_labels))
        .collect())
}

/// Exact k-NN under Hamming distance. Training accuracy classifies the
/// training codes against themselves, so each point is its own first neighbor.
pub fn knn_accuracy(
    train_codes: &[NeuralCode],
    train_labels: &[usize],
    eval_codes: &[NeuralCode],
    eval_labels: &[usize],
    k: usize,
) -> Result<ProbeResult, ProbeError> {
    check_inputs(eval_codes, eval_labels, "k-NN needs evaluation codes")?;
    let train_pred = knn_predict(train_codes, train_labels, train_codes, k)?;
    let eval_pred = knn_predict(train_codes, train_labels, eval_codes, k)?;
    Ok(ProbeResult {
        method: ProbeMethod::Knn,
        train_accuracy: accuracy(&train_pred, train_labels),
        test_accuracy: accuracy(&eval_pred, eval_labels),
        hyperparams: ProbeParams::Knn { k },
    })
}
