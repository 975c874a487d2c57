//! Share divergence, F1 scores, confusion matrices and comparison reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Alternative, ChoiceRecord};
use crate::error::{Error, Result};
use crate::predict::PredictionSet;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Probability per alternative, in Train, Swissmetro, Car order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareVector(pub [f64; 3]);

impl ShareVector {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("{p:?} is not a probability vector")));
        }
        Ok(ShareVector(p))
    }

    pub fn get(&self, alt: Alternative) -> f64 {
        self.0[alt.index()]
    }

    /// Adds `epsilon` to every entry and renormalises.
    pub fn smoothed(&self, epsilon: f64) -> [f64; 3] {
        let total: f64 = self.0.iter().sum::<f64>() + 3.0 * epsilon;
        self.0.map(|x| (x + epsilon) / total)
    }
}

/// Empirical frequencies of the labels.
pub fn shares(labels: &[Alternative]) -> Result<ShareVector> {
    if labels.is_empty() {
        return Err(Error::Input("cannot compute shares of an empty sequence".into()));
    }
    let mut counts = [0usize; 3];
    for a in labels {
        counts[a.index()] += 1;
    }
    Ok(ShareVector(counts.map(|c| c as f64 / labels.len() as f64)))
}

/// `(KL(p||q) + KL(q||p)) / 2`, natural log, on epsilon-smoothed vectors.
pub fn js_divergence(p: &ShareVector, q: &ShareVector, epsilon: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    let (p, q) = (p.smoothed(epsilon), q.smoothed(epsilon));
    let kl =
        |a: &[f64; 3], b: &[f64; 3]| -> f64 { (0..3).filter(|j| a[*j] > 0.0).map(|j| a[j] * (a[j] / b[j]).ln()).sum() };
    (0.5 * (kl(&p, &q) + kl(&q, &p))).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Weighting {
    Macro,
    /// Class weights are the share of records predicted as that class.
    #[default]
    WeightedByPredicted,
    /// Class weights are the share of records truly in that class.
    WeightedByTrue,
}

/// Rows are the truth, columns the prediction.
pub type ConfusionMatrix = [[usize; 3]; 3];

fn check_lengths(truths: &[Alternative], predictions: &[Alternative]) -> Result<()> {
    if truths.len() != predictions.len() {
        return Err(Error::Input(format!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    Ok(())
}

pub fn confusion_matrix(truths: &[Alternative], predictions: &[Alternative]) -> Result<ConfusionMatrix> {
    check_lengths(truths, predictions)?;
    let mut m = [[0usize; 3]; 3];
    for (t, p) in truths.iter().zip(predictions) {
        m[t.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision, recall and F1; every 0/0 is taken as 0.
pub fn class_scores(m: &ConfusionMatrix) -> [ClassScores; 3] {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    std::array::from_fn(|j| {
        let tp = m[j][j];
        let predicted: usize = (0..3).map(|i| m[i][j]).sum();
        let actual: usize = m[j].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores { precision, recall, f1 }
    })
}

pub fn f1_from_confusion(m: &ConfusionMatrix, weighting: F1Weighting) -> f64 {
    let scores = class_scores(m);
    let n: usize = m.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let weight = |j: usize| -> f64 {
        match weighting {
            F1Weighting::Macro => 1.0 / 3.0,
            F1Weighting::WeightedByPredicted => (0..3).map(|i| m[i][j]).sum::<usize>() as f64 / n as f64,
            F1Weighting::WeightedByTrue => m[j].iter().sum::<usize>() as f64 / n as f64,
        }
    };
    (0..3).map(|j| weight(j) * scores[j].f1).sum()
}

pub fn f1_scores(truths: &[Alternative], predictions: &[Alternative], weighting: F1Weighting) -> Result<f64> {
    Ok(f1_from_confusion(&confusion_matrix(truths, predictions)?, weighting))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub predicted_shares: ShareVector,
    pub true_shares: ShareVector,
    pub divergence: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub weighted_f1_by_true: f64,
    pub confusion: ConfusionMatrix,
    pub evaluated: usize,
    pub failed: usize,
}

/// Scores one prediction set against the truths. Predictions must cover
/// exactly the truth records; records whose prediction failed are counted
/// and left out of every metric.
pub fn evaluate(set: &PredictionSet, truths: &[ChoiceRecord], epsilon: f64) -> Result<MetricsReport> {
    let by_key: HashMap<_, _> = set.predictions.iter().map(|p| (p.record, p)).collect();
    if by_key.len() != set.predictions.len() {
        return Err(Error::Input(format!(
            "{}: duplicate record in predictions",
            set.manifest.method
        )));
    }
    if set.predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "{}: {} predictions for {} test records",
            set.manifest.method,
            set.predictions.len(),
            truths.len()
        )));
    }
    let mut t = Vec::with_capacity(truths.len());
    let mut p = Vec::with_capacity(truths.len());
    let mut failed = 0;
    for r in truths {
        let pred = by_key.get(&r.key).ok_or_else(|| {
            Error::Input(format!(
                "{}: no prediction for test record {}",
                set.manifest.method, r.key
            ))
        })?;
        match pred.predicted {
            Some(a) => {
                t.push(r.chosen);
                p.push(a);
            }
            None => failed += 1,
        }
    }
    if t.is_empty() {
        return Err(Error::Input(format!(
            "{}: every prediction failed",
            set.manifest.method
        )));
    }
    let confusion = confusion_matrix(&t, &p)?;
    let predicted_shares = shares(&p)?;
    let true_shares = shares(&t)?;
    Ok(MetricsReport {
        method: set.manifest.method.clone(),
        divergence: js_divergence(&predicted_shares, &true_shares, epsilon),
        predicted_shares,
        true_shares,
        macro_f1: f1_from_confusion(&confusion, F1Weighting::Macro),
        weighted_f1: f1_from_confusion(&confusion, F1Weighting::WeightedByPredicted),
        weighted_f1_by_true: f1_from_confusion(&confusion, F1Weighting::WeightedByTrue),
        confusion,
        evaluated: t.len(),
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ground_truth: ShareVector,
    pub records: usize,
    pub epsilon: f64,
    pub rows: Vec<MetricsReport>,
}

/// Plot data: shares per method and confusion matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub alternatives: Vec<String>,
    pub ground_truth: [f64; 3],
    pub methods: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub method: String,
    pub shares: [f64; 3],
    pub confusion: ConfusionMatrix,
}

/// Evaluates each named set on the same truths, in input order.
pub fn comparison_report(
    sets: &[(String, PredictionSet)],
    truths: &[ChoiceRecord],
    epsilon: f64,
) -> Result<ComparisonReport> {
    let truth_labels: Vec<Alternative> = truths.iter().map(|r| r.chosen).collect();
    let mut rows = Vec::with_capacity(sets.len());
    for (name, set) in sets {
        let mut row = evaluate(set, truths, epsilon)?;
        row.method = name.clone();
        rows.push(row);
    }
    Ok(ComparisonReport {
        ground_truth: shares(&truth_labels)?,
        records: truths.len(),
        epsilon,
        rows,
    })
}

impl ComparisonReport {
    /// Aligned text table: shares in percent, divergence and both F1 scores.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(0)
            .max("Ground truth".len());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>10}  {:>7}  {:>10}  {:>8}  {:>11}  {:>6}",
            "Method", "Train", "Swissmetro", "Car", "Divergence", "Macro F1", "Weighted F1", "Failed"
        );
        let pct = |v: &ShareVector, j: usize| format!("{:.1}%", 100.0 * v.0[j]);
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>10}  {:>7}  {:>10}  {:>8}  {:>11}  {:>6}",
            "Ground truth",
            pct(&self.ground_truth, 0),
            pct(&self.ground_truth, 1),
            pct(&self.ground_truth, 2),
            "-",
            "-",
            "-",
            "-"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7}  {:>10}  {:>7}  {:>10.4}  {:>8.4}  {:>11.4}  {:>6}",
                r.method,
                pct(&r.predicted_shares, 0),
                pct(&r.predicted_shares, 1),
                pct(&r.predicted_shares, 2),
                r.divergence,
                r.macro_f1,
                r.weighted_f1,
                r.failed
            );
        }
        s
    }

    pub fn plot_data(&self) -> PlotData {
        PlotData {
            alternatives: Alternative::ALL.iter().map(|a| a.to_string()).collect(),
            ground_truth: self.ground_truth.0,
            methods: self
                .rows
                .iter()
                .map(|r| PlotSeries {
                    method: r.method.clone(),
                    shares: r.predicted_shares.0,
                    confusion: r.confusion,
                })
                .collect(),
        }
    }
}

/// Rendered confusion matrix with truth rows and predicted columns.
pub fn render_confusion(m: &ConfusionMatrix) -> String {
    let mut s = format!("{:<12}{:>8}{:>12}{:>8}\n", "truth\\pred", "Train", "Swissmetro", "Car");
    for (i, alt) in Alternative::ALL.iter().enumerate() {
        let _ = writeln!(s, "{:<12}{:>8}{:>12}{:>8}", alt.to_string(), m[i][0], m[i][1], m[i][2]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use crate::predict::{Aggregation, Prediction, PredictionManifest};
    use proptest::prelude::*;
    use Alternative::*;

    fn sv(p: [f64; 3]) -> ShareVector {
        ShareVector::new(p).unwrap()
    }

    #[test]
    fn printed_shares_divergence() {
        let p = sv([0.06, 0.533, 0.407]);
        let q = sv([0.02, 0.775, 0.205]);
        assert!((js_divergence(&p, &q, DEFAULT_EPSILON) - 0.13653231218386813).abs() < 1e-12);
        assert!((js_divergence(&p, &q, 0.0) - 0.13653370383777283).abs() < 1e-12);
    }

    #[test]
    fn divergence_finite_with_empty_bins() {
        let d = js_divergence(&sv([0.0, 0.0, 1.0]), &sv([1.0, 0.0, 0.0]), DEFAULT_EPSILON);
        assert!(d.is_finite() && d > 1.0);
    }

    #[test]
    fn shares_examples() {
        assert_eq!(shares(&[Car, Car]).unwrap(), sv([0.0, 0.0, 1.0]));
        let s = shares(&[Train, Swissmetro, Swissmetro, Car, Car, Car, Car]).unwrap();
        assert!((s.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(shares(&[]).is_err());
    }

    #[test]
    fn six_record_hand_case() {
        let t = [Train, Train, Swissmetro, Swissmetro, Car, Car];
        let p = [Train, Train, Swissmetro, Car, Car, Car];
        assert!((f1_scores(&t, &p, F1Weighting::Macro).unwrap() - 37.0 / 45.0).abs() < 1e-12);
        assert!((f1_scores(&t, &p, F1Weighting::WeightedByPredicted).unwrap() - 38.0 / 45.0).abs() < 1e-12);
        assert!((f1_scores(&t, &p, F1Weighting::WeightedByTrue).unwrap() - 37.0 / 45.0).abs() < 1e-12);
    }

    #[test]
    fn f1_extremes_and_errors() {
        let t = [Train, Swissmetro, Car];
        for w in [
            F1Weighting::Macro,
            F1Weighting::WeightedByPredicted,
            F1Weighting::WeightedByTrue,
        ] {
            assert_eq!(f1_scores(&t, &t, w).unwrap(), 1.0);
        }
        assert_eq!(
            f1_scores(&t, &[Swissmetro, Car, Train], F1Weighting::Macro).unwrap(),
            0.0
        );
        assert!(matches!(
            f1_scores(&t, &t[..2], F1Weighting::Macro),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn confusion_properties() {
        let t = [Train, Train, Swissmetro, Car, Car, Swissmetro, Train];
        let p = [Train, Car, Swissmetro, Car, Swissmetro, Swissmetro, Swissmetro];
        let m = confusion_matrix(&t, &p).unwrap();
        let mt = confusion_matrix(&p, &t).unwrap();
        assert_eq!(m.iter().flatten().sum::<usize>(), 7);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j], mt[j][i]);
            }
        }
        let d = confusion_matrix(&t, &t).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| i == j || d[i][j] == 0)));
    }

    fn alt() -> impl Strategy<Value = Alternative> {
        (0usize..3).prop_map(|i| Alternative::ALL[i])
    }

    fn share() -> impl Strategy<Value = ShareVector> {
        proptest::array::uniform3(0.0f64..1.0).prop_filter_map("nonzero", |a| {
            let s: f64 = a.iter().sum();
            (s > 1e-9).then(|| ShareVector(a.map(|x| x / s)))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn divergence_laws(p in share(), q in share()) {
            let d = js_divergence(&p, &q, DEFAULT_EPSILON);
            prop_assert!(d >= 0.0);
            prop_assert!((d - js_divergence(&q, &p, DEFAULT_EPSILON)).abs() <= 1e-12);
            prop_assert_eq!(js_divergence(&p, &p, DEFAULT_EPSILON), 0.0);
            if p.smoothed(DEFAULT_EPSILON) != q.smoothed(DEFAULT_EPSILON) {
                prop_assert!(d > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn macro_f1_permutation_invariant(pairs in proptest::collection::vec((alt(), alt()), 1..60), perm in Just([2usize, 0, 1])) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let relabel = |a: &Alternative| Alternative::ALL[perm[a.index()]];
            let t2: Vec<_> = t.iter().map(relabel).collect();
            let p2: Vec<_> = p.iter().map(relabel).collect();
            let a = f1_scores(&t, &p, F1Weighting::Macro).unwrap();
            let b = f1_scores(&t2, &p2, F1Weighting::Macro).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn perfect_f1_iff_perfect_accuracy(pairs in proptest::collection::vec((alt(), alt()), 1..40)) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let m = confusion_matrix(&t, &p).unwrap();
            let acc = (0..3).map(|i| m[i][i]).sum::<usize>() as f64 / t.len() as f64;
            for w in [F1Weighting::Macro, F1Weighting::WeightedByPredicted, F1Weighting::WeightedByTrue] {
                let f = f1_from_confusion(&m, w);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
                if acc == 1.0 && w != F1Weighting::Macro {
                    prop_assert!((f - 1.0).abs() < 1e-12);
                }
                if (f - 1.0).abs() < 1e-12 {
                    prop_assert_eq!(acc, 1.0);
                }
            }
        }
    }

    fn set(
        method: &str,
        records: &[ChoiceRecord],
        pred: impl Fn(&ChoiceRecord) -> Option<Alternative>,
    ) -> PredictionSet {
        PredictionSet {
            manifest: PredictionManifest {
                method: method.into(),
                oracle: "none".into(),
                seed: 0,
                params_digest: None,
                basis_digest: None,
                template: "none".into(),
                repeats: 1,
                aggregation: Aggregation::SingleDraw,
            },
            predictions: records
                .iter()
                .map(|r| Prediction {
                    record: r.key,
                    predicted: pred(r),
                    personas: vec![],
                    prompts: vec![],
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn comparison_report_rows_and_agreement() {
        let truths: Vec<ChoiceRecord> = fixtures::panels(30, 1).iter().flat_map(|p| p.records()).collect();
        let sets = vec![
            ("perfect".to_string(), set("a", &truths, |r| Some(r.chosen))),
            ("all car".to_string(), set("b", &truths, |_| Some(Car))),
            (
                "half failed".to_string(),
                set("c", &truths, |r| (r.key.respondent.0 % 2 == 0).then_some(r.chosen)),
            ),
        ];
        let rep = comparison_report(&sets, &truths, DEFAULT_EPSILON).unwrap();
        let names: Vec<_> = rep.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["perfect", "all car", "half failed"]);
        assert_eq!(rep.rows[0].divergence, 0.0);
        assert_eq!((rep.rows[0].macro_f1, rep.rows[0].weighted_f1), (1.0, 1.0));
        assert_eq!(rep.rows[1].predicted_shares, sv([0.0, 0.0, 1.0]));
        assert_eq!((rep.rows[2].failed, rep.rows[2].evaluated), (15, 15));
        let table = rep.render_table();
        assert!(table.lines().nth(2).unwrap().starts_with("perfect"));
        assert!(table.contains(&format!("{:.4}", rep.rows[1].divergence)));
        let plot = rep.plot_data();
        for (row, series) in rep.rows.iter().zip(&plot.methods) {
            assert_eq!(
                (row.predicted_shares.0, row.confusion),
                (series.shares, series.confusion)
            );
        }
        let json: ComparisonReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(json, rep);
    }

    #[test]
    fn mismatched_test_sets_rejected() {
        let truths: Vec<ChoiceRecord> = fixtures::panels(10, 1).iter().flat_map(|p| p.records()).collect();
        let other = set("x", &truths[..9], |r| Some(r.chosen));
        assert!(matches!(
            evaluate(&other, &truths, DEFAULT_EPSILON),
            Err(Error::Input(_))
        ));
        let mut shifted = set("y", &truths, |r| Some(r.chosen));
        shifted.predictions[0].record.seq += 5;
        assert!(matches!(
            evaluate(&shifted, &truths, DEFAULT_EPSILON),
            Err(Error::Input(_))
        ));
    }
}
