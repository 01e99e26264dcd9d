//! Evaluation logs of abstaining classifiers.
//!
//! A record holds an input `x`, an abstention flag `r` and the score `s`
//! of the prediction, which is only observed when the classifier did not
//! abstain (`r = 0`). Missing scores are `None`, never a sentinel value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Declared bounds of the scoring rule. Accuracy lives in `[0, 1]`, the
/// Brier score in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ScoreRange<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidScoreRange { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: T::zero(), hi: T::one() }
    }

    pub fn brier() -> Self {
        Self { lo: -T::one(), hi: T::one() }
    }

    pub fn contains(&self, s: T) -> bool {
        s >= self.lo && s <= self.hi
    }
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord<T> {
    pub x: Vec<T>,
    pub abstained: bool,
    pub score: Option<T>,
}

impl<T: Scalar> EvalRecord<T> {
    /// The abstention indicator as 0/1.
    pub fn r(&self) -> u8 {
        self.abstained as u8
    }
}

/// Unvalidated input row: features, abstention flag as read, optional score.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow<T> {
    pub x: Vec<T>,
    pub r: i64,
    pub s: Option<T>,
}

impl<T> RawRow<T> {
    pub fn new(x: Vec<T>, r: i64, s: Option<T>) -> Self {
        Self { x, r, s }
    }
}

/// A validated evaluation set for one abstaining classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset<T> {
    records: Vec<EvalRecord<T>>,
    score_range: ScoreRange<T>,
    dim: usize,
}

fn check_observation<T: Scalar>(row: usize, r: i64, s: Option<T>, range: &ScoreRange<T>) -> Result<bool> {
    let abstained = match r {
        0 => false,
        1 => true,
        other => return Err(Error::InvalidAbstentionFlag { row, found: other }),
    };
    match (abstained, s) {
        (true, Some(_)) => Err(Error::PresentScoreOnAbstention { row }),
        (false, None) => Err(Error::MissingScoreOnPrediction { row }),
        (false, Some(v)) if !v.is_finite() => Err(Error::NonFinite { row }),
        (false, Some(v)) if !range.contains(v) => Err(Error::ScoreOutOfRange {
            row,
            score: v.to_f64_lossy(),
            lo: range.lo.to_f64_lossy(),
            hi: range.hi.to_f64_lossy(),
        }),
        _ => Ok(abstained),
    }
}

fn check_features<T: Scalar>(row: usize, x: &[T], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch { row, expected: dim, found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row });
    }
    Ok(())
}

/// Validates raw rows into a dataset. The feature dimension is taken from
/// the first row; row indices in errors are 0-based.
pub fn validate_dataset<T: Scalar>(rows: Vec<RawRow<T>>, score_range: ScoreRange<T>) -> Result<EvalDataset<T>> {
    let dim = rows.first().ok_or(Error::EmptyDataset)?.x.len();
    if dim == 0 {
        return Err(Error::DimensionMismatch { row: 0, expected: 1, found: 0 });
    }
    let mut records = Vec::with_capacity(rows.len());
    for (row, raw) in rows.into_iter().enumerate() {
        check_features(row, &raw.x, dim)?;
        let abstained = check_observation(row, raw.r, raw.s, &score_range)?;
        records.push(EvalRecord { x: raw.x, abstained, score: raw.s });
    }
    Ok(EvalDataset { records, score_range, dim })
}

impl<T: Scalar> EvalDataset<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn score_range(&self) -> ScoreRange<T> {
        self.score_range
    }

    pub fn records(&self) -> &[EvalRecord<T>] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &EvalRecord<T>> {
        self.records.iter()
    }

    /// The first `n` rows as a dataset of their own.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { records: self.records[..n.min(self.len())].to_vec(), score_range: self.score_range, dim: self.dim })
    }

    pub fn abstention_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.records.iter().map(|r| r.abstained)
    }

    pub fn into_raw(self) -> Vec<RawRow<T>> {
        self.records.into_iter().map(|r| RawRow { r: r.r() as i64, x: r.x, s: r.score }).collect()
    }
}

/// Per-row observation of one arm in a paired evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmObservation<T> {
    pub abstained: bool,
    pub score: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

/// Two abstaining classifiers evaluated on the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset<T> {
    x: Vec<Vec<T>>,
    arm_a: Vec<ArmObservation<T>>,
    arm_b: Vec<ArmObservation<T>>,
    score_range: ScoreRange<T>,
    dim: usize,
}

/// Unvalidated paired row: features, then `(r, s)` for each arm.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPairedRow<T> {
    pub x: Vec<T>,
    pub r_a: i64,
    pub s_a: Option<T>,
    pub r_b: i64,
    pub s_b: Option<T>,
}

pub fn validate_paired<T: Scalar>(rows: Vec<RawPairedRow<T>>, score_range: ScoreRange<T>) -> Result<PairedDataset<T>> {
    let dim = rows.first().ok_or(Error::EmptyDataset)?.x.len();
    if dim == 0 {
        return Err(Error::DimensionMismatch { row: 0, expected: 1, found: 0 });
    }
    let n = rows.len();
    let mut x = Vec::with_capacity(n);
    let mut arm_a = Vec::with_capacity(n);
    let mut arm_b = Vec::with_capacity(n);
    for (row, raw) in rows.into_iter().enumerate() {
        check_features(row, &raw.x, dim)?;
        let ra = check_observation(row, raw.r_a, raw.s_a, &score_range)?;
        let rb = check_observation(row, raw.r_b, raw.s_b, &score_range)?;
        x.push(raw.x);
        arm_a.push(ArmObservation { abstained: ra, score: raw.s_a });
        arm_b.push(ArmObservation { abstained: rb, score: raw.s_b });
    }
    Ok(PairedDataset { x, arm_a, arm_b, score_range, dim })
}

impl<T: Scalar> PairedDataset<T> {
    /// Assembles a paired dataset from already-validated columns.
    pub fn from_parts(
        x: Vec<Vec<T>>,
        arm_a: Vec<ArmObservation<T>>,
        arm_b: Vec<ArmObservation<T>>,
        score_range: ScoreRange<T>,
    ) -> Result<Self> {
        if arm_a.len() != arm_b.len() || x.len() != arm_a.len() {
            return Err(Error::ArmLengthMismatch { a: arm_a.len(), b: arm_b.len() });
        }
        let rows = x
            .into_iter()
            .zip(arm_a.iter().zip(arm_b.iter()))
            .map(|(x, (a, b))| RawPairedRow {
                x,
                r_a: a.abstained as i64,
                s_a: a.score,
                r_b: b.abstained as i64,
                s_b: b.score,
            })
            .collect();
        validate_paired(rows, score_range)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn score_range(&self) -> ScoreRange<T> {
        self.score_range
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.x
    }

    pub fn observations(&self, arm: Arm) -> &[ArmObservation<T>] {
        match arm {
            Arm::A => &self.arm_a,
            Arm::B => &self.arm_b,
        }
    }

    /// Single-classifier view of one arm.
    pub fn arm(&self, arm: Arm) -> EvalDataset<T> {
        let records = self
            .x
            .iter()
            .zip(self.observations(arm))
            .map(|(x, o)| EvalRecord { x: x.clone(), abstained: o.abstained, score: o.score })
            .collect();
        EvalDataset { records, score_range: self.score_range, dim: self.dim }
    }

    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = n.min(self.len());
        Ok(Self {
            x: self.x[..n].to_vec(),
            arm_a: self.arm_a[..n].to_vec(),
            arm_b: self.arm_b[..n].to_vec(),
            score_range: self.score_range,
            dim: self.dim,
        })
    }

    pub fn into_raw(self) -> Vec<RawPairedRow<T>> {
        self.x
            .into_iter()
            .zip(self.arm_a.into_iter().zip(self.arm_b))
            .map(|(x, (a, b))| RawPairedRow {
                x,
                r_a: a.abstained as i64,
                s_a: a.score,
                r_b: b.abstained as i64,
                s_b: b.score,
            })
            .collect()
    }
}

/// Observable summary of an evaluation log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary<T> {
    pub n: usize,
    pub coverage: T,
    /// Mean score on revealed predictions; `None` when every row abstained.
    pub selective_score: Option<T>,
    pub abstention_count: usize,
}

pub fn summarize<T: Scalar>(ds: &EvalDataset<T>) -> DatasetSummary<T> {
    let n = ds.len();
    let mut abstention_count = 0usize;
    let mut score_sum = T::zero();
    for rec in ds.iter() {
        match rec.score {
            Some(s) if !rec.abstained => score_sum = score_sum + s,
            _ => abstention_count += 1,
        }
    }
    let revealed = n - abstention_count;
    DatasetSummary {
        n,
        coverage: T::from_count(revealed) / T::from_count(n),
        selective_score: (revealed > 0).then(|| score_sum / T::from_count(revealed)),
        abstention_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(x: &[f64], r: i64, s: Option<f64>) -> RawRow<f64> {
        RawRow::new(x.to_vec(), r, s)
    }

    #[test]
    fn score_on_abstention_is_rejected() {
        let err = validate_dataset(vec![row(&[0.1, 0.2], 1, Some(0.5))], ScoreRange::unit());
        assert_eq!(err, Err(Error::PresentScoreOnAbstention { row: 0 }));
    }

    #[test]
    fn empty_is_rejected() {
        let err = validate_dataset::<f64>(vec![], ScoreRange::unit());
        assert_eq!(err, Err(Error::EmptyDataset));
    }

    #[test]
    fn minimal_valid_dataset() {
        let ds = validate_dataset(vec![row(&[0.0, 0.0], 0, Some(1.0)), row(&[1.0, 1.0], 1, None)], ScoreRange::unit())
            .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn other_validation_errors() {
        let unit = ScoreRange::<f64>::unit();
        assert_eq!(validate_dataset(vec![row(&[0.0], 0, None)], unit), Err(Error::MissingScoreOnPrediction { row: 0 }));
        assert_eq!(
            validate_dataset(vec![row(&[0.0], 0, Some(1.0)), row(&[0.0, 1.0], 1, None)], unit),
            Err(Error::DimensionMismatch { row: 1, expected: 1, found: 2 })
        );
        assert_eq!(
            validate_dataset(vec![row(&[0.0], 2, None)], unit),
            Err(Error::InvalidAbstentionFlag { row: 0, found: 2 })
        );
        assert!(matches!(
            validate_dataset(vec![row(&[0.0], 0, Some(1.5))], unit),
            Err(Error::ScoreOutOfRange { row: 0, .. })
        ));
        assert!(validate_dataset(vec![row(&[0.0], 0, Some(-0.5))], ScoreRange::brier()).is_ok());
    }

    #[test]
    fn summary_counts() {
        let ds = validate_dataset(
            vec![row(&[0.0], 0, Some(1.0)), row(&[1.0], 0, Some(0.0)), row(&[2.0], 1, None)],
            ScoreRange::unit(),
        )
        .unwrap();
        let s = summarize(&ds);
        assert!((s.coverage - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.selective_score, Some(0.5));
        assert_eq!(s.abstention_count, 1);
    }

    #[test]
    fn all_abstained_summary() {
        let ds = validate_dataset(vec![row(&[0.0], 1, None), row(&[1.0], 1, None)], ScoreRange::unit()).unwrap();
        let s = summarize(&ds);
        assert_eq!(s.coverage, 0.0);
        assert_eq!(s.selective_score, None);
    }

    #[test]
    fn works_in_f32() {
        let ds = validate_dataset(
            vec![RawRow::new(vec![0.5f32], 0, Some(1.0f32)), RawRow::new(vec![0.1f32], 1, None)],
            ScoreRange::unit(),
        )
        .unwrap();
        assert_eq!(summarize(&ds).coverage, 0.5f32);
    }

    #[test]
    fn paired_arm_view() {
        let pds = validate_paired(
            vec![
                RawPairedRow { x: vec![0.0], r_a: 0, s_a: Some(1.0), r_b: 1, s_b: None },
                RawPairedRow { x: vec![1.0], r_a: 1, s_a: None, r_b: 0, s_b: Some(0.0) },
            ],
            ScoreRange::unit(),
        )
        .unwrap();
        let a = pds.arm(Arm::A);
        let b = pds.arm(Arm::B);
        assert_eq!(summarize(&a).selective_score, Some(1.0));
        assert_eq!(summarize(&b).selective_score, Some(0.0));
        assert!(validate_paired(
            vec![RawPairedRow { x: vec![0.0], r_a: 0, s_a: None, r_b: 1, s_b: None }],
            ScoreRange::unit()
        )
        .is_err());
    }

    fn arb_rows() -> impl Strategy<Value = Vec<RawRow<f64>>> {
        prop::collection::vec((prop::collection::vec(-5.0..5.0f64, 2), prop::bool::ANY, 0.0..=1.0f64), 1..60)
            .prop_map(|rows| rows.into_iter().map(|(x, r, s)| RawRow::new(x, r as i64, (!r).then_some(s))).collect())
    }

    proptest! {
        #[test]
        fn coverage_is_a_count_fraction(rows in arb_rows()) {
            let n = rows.len();
            let ds = validate_dataset(rows, ScoreRange::unit()).unwrap();
            let s = summarize(&ds);
            prop_assert!((0.0..=1.0).contains(&s.coverage));
            let revealed = s.coverage * n as f64;
            prop_assert!((revealed - revealed.round()).abs() < 1e-9);
            prop_assert_eq!(s.selective_score.is_some(), s.abstention_count < n);
        }

        #[test]
        fn summary_is_permutation_invariant(rows in arb_rows(), rot in 0usize..60) {
            let ds = validate_dataset(rows.clone(), ScoreRange::unit()).unwrap();
            let mut shuffled = rows;
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let ds2 = validate_dataset(shuffled, ScoreRange::unit()).unwrap();
            let (a, b) = (summarize(&ds), summarize(&ds2));
            prop_assert_eq!(a.abstention_count, b.abstention_count);
            prop_assert_eq!(a.coverage, b.coverage);
            match (a.selective_score, b.selective_score) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
