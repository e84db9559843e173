//! Classification, overlap and regression metrics.
//!
//! A rate whose denominator is zero is reported as 0 and named in the
//! report's `undefined` list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion::new(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn_ + other.fn_,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    /// Names of metrics whose denominator was zero.
    pub undefined: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

pub fn classification_metrics(c: &Confusion) -> Result<BinaryMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyInput("confusion counts are all zero".into()));
    }
    let mut undefined = Vec::new();
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let acc = (tp + tn) / c.total() as f64;
    let pre = ratio(tp, tp + fp, "pre", &mut undefined);
    let rec = ratio(tp, tp + fn_, "rec", &mut undefined);
    let f1 = ratio(2.0 * pre * rec, pre + rec, "f1", &mut undefined);
    Ok(BinaryMetrics {
        acc,
        pre,
        rec,
        f1,
        undefined,
    })
}

/// 1-based ranks with ties given their average rank.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// ROC AUC from the Mann-Whitney statistic (ties count one half) and average
/// precision `sum_k (R_k - R_{k-1}) P_k` over distinct score thresholds.
pub fn auc_ap(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUC/AP need both classes present".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    let auc = u / (pos as f64 * neg as f64);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            seen += 1;
            tp += labels[order[i]] as usize;
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok((auc, ap))
}

/// `2|P & G| / (|P| + |G|)`; two empty masks score 1.
pub fn dice(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "mask sizes differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let p = pred.iter().filter(|&&v| v).count();
    let g = gt.iter().filter(|&&v| v).count();
    if p + g == 0 {
        return Ok(1.0);
    }
    let both = pred.iter().zip(gt).filter(|(&a, &b)| a && b).count();
    Ok(2.0 * both as f64 / (p + g) as f64)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("mae of nothing".into()));
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    /// One-vs-rest confusion per class (empty for regression).
    pub confusion: Vec<Confusion>,
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub auc: f64,
    pub ap: f64,
    pub dsc: Option<f64>,
    pub mae: Option<f64>,
    /// Metrics that hit a zero denominator or a missing class, as
    /// `"<metric>[class <k>]"`.
    pub undefined: Vec<String>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full report from per-sample class scores. Accuracy is the fraction of
/// argmax hits; precision, recall, F1, AUC and AP are one-vs-rest macro
/// averages.
pub fn multiclass_report(scores: &[Vec<f64>], labels: &[usize]) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} score rows but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let classes = scores[0].len();
    if classes < 2 || scores.iter().any(|r| r.len() != classes) {
        return Err(Error::Shape("score rows need one equal-length entry per class (>= 2)".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let predicted: Vec<usize> = scores.iter().map(|r| argmax(r)).collect();
    let n = labels.len();
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut undefined = Vec::new();
    let mut confusion = Vec::with_capacity(classes);
    let (mut pre, mut rec, mut f1, mut auc, mut ap) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut ranked = 0usize;
    for k in 0..classes {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p == k, l == k) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        let m = classification_metrics(&c)?;
        undefined.extend(m.undefined.iter().map(|u| format!("{u}[class {k}]")));
        pre += m.pre;
        rec += m.rec;
        f1 += m.f1;
        confusion.push(c);
        let col: Vec<f64> = scores.iter().map(|r| r[k]).collect();
        let truth: Vec<bool> = labels.iter().map(|&l| l == k).collect();
        match auc_ap(&col, &truth) {
            Ok((a, p)) => {
                auc += a;
                ap += p;
                ranked += 1;
            }
            Err(Error::Undefined(_)) => {
                undefined.push(format!("auc[class {k}]"));
                undefined.push(format!("ap[class {k}]"));
            }
            Err(e) => return Err(e),
        }
    }
    let kf = classes as f64;
    let (auc, ap) = if ranked == 0 {
        (0.0, 0.0)
    } else {
        (auc / ranked as f64, ap / ranked as f64)
    };
    Ok(MetricsReport {
        samples: n,
        confusion,
        acc: correct as f64 / n as f64,
        pre: pre / kf,
        rec: rec / kf,
        f1: f1 / kf,
        auc,
        ap,
        dsc: None,
        mae: None,
        undefined,
    })
}

/// Report for a regression task: only MAE is meaningful.
pub fn regression_report(preds: &[f64], targets: &[f64]) -> Result<MetricsReport> {
    let m = mae(preds, targets)?;
    Ok(MetricsReport {
        samples: preds.len(),
        confusion: Vec::new(),
        acc: 0.0,
        pre: 0.0,
        rec: 0.0,
        f1: 0.0,
        auc: 0.0,
        ap: 0.0,
        dsc: None,
        mae: Some(m),
        undefined: ["acc", "pre", "rec", "f1", "auc", "ap"].map(String::from).to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn confusion_fixture() {
        let m = classification_metrics(&Confusion::new(2, 6, 1, 1)).unwrap();
        assert_eq!(m.acc, 0.8);
        assert_eq!(m.pre, 2.0 / 3.0);
        assert_eq!(m.rec, 2.0 / 3.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn perfect_predictor() {
        let m = classification_metrics(&Confusion::new(5, 5, 0, 0)).unwrap();
        assert_eq!((m.acc, m.pre, m.rec, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let m = classification_metrics(&Confusion::new(0, 4, 0, 2)).unwrap();
        assert_eq!(m.pre, 0.0);
        assert!(m.undefined.contains(&"pre".to_string()));
        assert!(matches!(
            classification_metrics(&Confusion::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn auc_ap_fixtures() {
        assert_eq!(auc_ap(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), (1.0, 1.0));
        assert_eq!(auc_ap(&[0.5; 4], &[true, false, true, false]).unwrap().0, 0.5);
        let (auc, ap) = auc_ap(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap();
        assert_eq!(auc, 0.5);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(auc_ap(&[0.1, 0.2], &[true, true]), Err(Error::Undefined(_))));
    }

    #[test]
    fn dice_fixtures() {
        let a = [true, true, false, false];
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &[false, false, true, true]).unwrap(), 0.0);
        let p = [true, true, true, true, false, false];
        let g = [false, false, true, true, true, true];
        assert_eq!(dice(&p, &g).unwrap(), 0.5);
        assert_eq!(dice(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert!(dice(&[true], &[true, false]).is_err());
    }

    #[test]
    fn mae_fixtures() {
        assert_eq!(mae(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 1.5);
        assert!(matches!(mae(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(mae(&[1.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn multiclass_self_consistency() {
        let scores = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.2, 0.6],
            vec![0.5, 0.4, 0.1],
        ];
        let r = multiclass_report(&scores, &[0, 1, 2, 0]).unwrap();
        assert_eq!(r.acc, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.auc, 1.0);
        for c in &r.confusion {
            assert_eq!(c.total(), 4);
        }
        let r = multiclass_report(&scores, &[1, 1, 2, 0]).unwrap();
        assert_eq!(r.acc, 0.75);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_enumeration(
            data in proptest::collection::vec((0u8..20, any::<bool>()), 2..100)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 19.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let (auc, ap) = auc_ap(&scores, &labels).unwrap();
            prop_assert!((auc - brute_auc(&scores, &labels)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn metric_identities(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let c = Confusion::new(tp, tn, fp, fn_);
            prop_assume!(c.total() > 0);
            let m = classification_metrics(&c).unwrap();
            prop_assert_eq!(m.acc, (tp + tn) as f64 / c.total() as f64);
            for v in [m.acc, m.pre, m.rec, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if m.undefined.is_empty() {
                let h = 2.0 / (1.0 / m.pre + 1.0 / m.rec);
                prop_assert!((m.f1 - h).abs() < 1e-12);
            }
        }

        #[test]
        fn dice_and_mae_symmetric(
            a in proptest::collection::vec(any::<bool>(), 1..40),
            b in proptest::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let g: Vec<bool> = a.iter().rev().copied().collect();
            prop_assert_eq!(dice(&a, &g).unwrap(), dice(&g, &a).unwrap());
            let c: Vec<f64> = b.iter().map(|v| v * 0.5 + 1.0).collect();
            prop_assert_eq!(mae(&b, &c).unwrap(), mae(&c, &b).unwrap());
            prop_assert!(mae(&b, &c).unwrap() >= 0.0);
            prop_assert_eq!(mae(&b, &b).unwrap(), 0.0);
        }
    }
}
