//! Classification metrics: overall accuracy, average (per-class) accuracy,
//! and Cohen's kappa, all derived from a truth x prediction confusion
//! matrix over class ids 1..=K.

use crate::error::{data_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// Row = truth, column = prediction; `counts[(t-1)*k + (p-1)]`.
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[u16], truth: &[u16], k: usize) -> Result<Self> {
        if pred.is_empty() || truth.is_empty() {
            return Err(data_err!("metrics on empty label sequences"));
        }
        if pred.len() != truth.len() {
            return Err(data_err!(
                "label length mismatch: {} predictions vs {} truths",
                pred.len(),
                truth.len()
            ));
        }
        let mut counts = vec![0usize; k * k];
        for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            if p == 0 || p as usize > k || t == 0 || t as usize > k {
                return Err(data_err!("sample {i}: labels ({p}, {t}) outside 1..={k}"));
            }
            counts[(t as usize - 1) * k + (p as usize - 1)] += 1;
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    fn row_sum(&self, t: usize) -> usize {
        self.counts[t * self.k..(t + 1) * self.k].iter().sum()
    }

    fn col_sum(&self, p: usize) -> usize {
        (0..self.k).map(|t| self.counts[t * self.k + p]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Metrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Recall per class; `None` where the class is absent from the truth.
    pub per_class: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

pub fn metrics_from_confusion(cm: ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(data_err!("metrics on an empty confusion matrix"));
    }
    let k = cm.k;
    let correct: usize = (0..k).map(|i| cm.counts[i * k + i]).sum();
    let oa = correct as f64 / total as f64;

    let mut per_class = Vec::with_capacity(k);
    let mut aa_sum = 0.0;
    let mut aa_n = 0usize;
    for t in 0..k {
        let support = cm.row_sum(t);
        if support == 0 {
            log::warn!("class {} absent from truth; excluded from AA", t + 1);
            per_class.push(None);
        } else {
            let rec = cm.counts[t * k + t] as f64 / support as f64;
            aa_sum += rec;
            aa_n += 1;
            per_class.push(Some(rec));
        }
    }
    if aa_n == 0 {
        return Err(data_err!("no class present in truth"));
    }
    let aa = aa_sum / aa_n as f64;

    let po = oa;
    let pe: f64 = (0..k)
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (total as f64 * total as f64);
    let kappa = if (1.0 - pe).abs() < 1e-15 { 1.0 } else { (po - pe) / (1.0 - pe) };
    Ok(Metrics { oa, aa, kappa, per_class, confusion: cm })
}

pub fn metrics(pred: &[u16], truth: &[u16], k: usize) -> Result<Metrics> {
    metrics_from_confusion(ConfusionMatrix::from_labels(pred, truth, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_matrix(m: &[&[usize]]) -> ConfusionMatrix {
        let k = m.len();
        let counts = m.iter().flat_map(|r| r.iter().copied()).collect();
        ConfusionMatrix { k, counts }
    }

    #[test]
    fn perfect_predictions_all_one() {
        let truth = vec![1u16, 2, 3, 1, 2, 3];
        let m = metrics(&truth, &truth, 3).unwrap();
        assert_eq!(m.oa, 1.0);
        assert_eq!(m.aa, 1.0);
        assert_eq!(m.kappa, 1.0);
    }

    #[test]
    fn hand_worked_two_class_matrix() {
        // C = [[50,10],[10,30]]: OA = 80/100, AA = (50/60 + 30/40)/2,
        // p_e = (60*60 + 40*40)/100^2 = 0.52, kappa = 0.28/0.48
        let m = metrics_from_confusion(from_matrix(&[&[50, 10], &[10, 30]])).unwrap();
        assert!((m.oa - 0.8).abs() < 1e-12);
        assert!((m.aa - (50.0 / 60.0 + 30.0 / 40.0) / 2.0).abs() < 1e-12);
        assert!((m.kappa - 0.28 / 0.48).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_balanced_truth_zero_kappa() {
        let truth = vec![1u16, 1, 2, 2];
        let pred = vec![1u16, 1, 1, 1];
        let m = metrics(&pred, &truth, 2).unwrap();
        assert!((m.kappa - 0.0).abs() < 1e-12);
        assert_eq!(m.oa, 0.5);
    }

    #[test]
    fn absent_class_excluded_from_aa() {
        // class 3 never appears in the truth
        let truth = vec![1u16, 1, 2, 2];
        let pred = vec![1u16, 2, 2, 3];
        let m = metrics(&pred, &truth, 3).unwrap();
        assert_eq!(m.per_class[2], None);
        assert!((m.aa - (0.5 + 0.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_errors() {
        assert!(metrics(&[], &[], 2).is_err());
    }

    #[test]
    fn out_of_range_label_errors() {
        assert!(metrics(&[3], &[1], 2).is_err());
        assert!(metrics(&[1], &[0], 2).is_err());
    }

    #[test]
    fn ranges_and_kappa_bound() {
        let m = metrics_from_confusion(from_matrix(&[&[5, 9, 1], &[2, 7, 4], &[8, 0, 3]]))
            .unwrap();
        assert!((0.0..=1.0).contains(&m.oa));
        assert!((0.0..=1.0).contains(&m.aa));
        assert!((-1.0..=1.0).contains(&m.kappa));
        assert!(m.kappa <= m.oa + 1e-15);
    }

    #[test]
    fn permutation_invariance() {
        let truth = vec![1u16, 1, 2, 3, 3, 3, 2, 1];
        let pred = vec![1u16, 2, 2, 3, 1, 3, 3, 1];
        let m1 = metrics(&pred, &truth, 3).unwrap();
        // swap class ids 1 <-> 3 consistently
        let map = |l: u16| match l {
            1 => 3,
            3 => 1,
            x => x,
        };
        let truth2: Vec<u16> = truth.iter().map(|&l| map(l)).collect();
        let pred2: Vec<u16> = pred.iter().map(|&l| map(l)).collect();
        let m2 = metrics(&pred2, &truth2, 3).unwrap();
        assert!((m1.oa - m2.oa).abs() < 1e-15);
        assert!((m1.aa - m2.aa).abs() < 1e-15);
        assert!((m1.kappa - m2.kappa).abs() < 1e-15);
    }
}
