use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Unweighted mean of per-class precision over all classes.
    pub precision: f64,
    /// Unweighted mean of per-class recall over all classes.
    pub recall: f64,
}

/// Accuracy and macro precision/recall over `num_classes` classes. A class
/// with no predicted (actual) samples contributes 0 precision (recall).
pub fn evaluate_predictions(
    labels: &[u8],
    predictions: &[usize],
    num_classes: usize,
) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if labels.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&l, &p) in labels.iter().zip(predictions) {
        let l = l as usize;
        actual[l] += 1;
        if p < num_classes {
            predicted[p] += 1;
        }
        if l == p {
            tp[l] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let k = num_classes as f64;
    Ok(Metrics {
        accuracy: tp.iter().sum::<usize>() as f64 / labels.len() as f64,
        precision: (0..num_classes)
            .map(|c| ratio(tp[c], predicted[c]))
            .sum::<f64>()
            / k,
        recall: (0..num_classes)
            .map(|c| ratio(tp[c], actual[c]))
            .sum::<f64>()
            / k,
    })
}

pub fn evaluate(model: &Network<f32>, test_set: &Dataset) -> Result<Metrics> {
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut preds = Vec::with_capacity(test_set.len());
    let all: Vec<usize> = (0..test_set.len()).collect();
    for chunk in all.chunks(512) {
        preds.extend(model.predict(&test_set.tensor::<f32>(chunk))?);
    }
    evaluate_predictions(test_set.labels(), &preds, test_set.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_sample_case() {
        let m = evaluate_predictions(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
    }

    #[test]
    fn perfect_and_constant() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let m = evaluate_predictions(&labels, &preds, 10).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, 1.0, 1.0));
        let m = evaluate_predictions(&labels, &[3; 100], 10).unwrap();
        assert_eq!(m.accuracy, 0.1);
        assert!((m.precision - 0.01).abs() < 1e-15);
        assert!((m.recall - 0.1).abs() < 1e-15);
        assert!(evaluate_predictions(&[], &[], 10).is_err());
    }
}
