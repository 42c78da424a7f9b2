//! Panoptic quality (DQ, SQ, PQ, mPQ) and multi-class R² of counts.
//!
//! A ground-truth and a predicted instance of the same class match when their
//! IoU is strictly greater than 0.5, which makes matches unique without any
//! assignment step. Per class:
//!
//! ```text
//! DQ = TP / (TP + FP/2 + FN/2)      SQ = mean IoU over TP      PQ = DQ * SQ
//! ```
//!
//! A class with no instance on either side is undefined and left out of mPQ.
//! All floating sums go through [`sorted_sum`] so results do not depend on
//! image or instance order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::PanopticResult;
use crate::tensorio::{CountVector, Pixel, CLASS_NAMES, MAX_CLASS_ID, NUM_CLASSES};

/// Minimum IoU (exclusive) for a true positive.
pub const MATCH_IOU: f64 = 0.5;

/// Order-independent sum.
pub(crate) fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn iou(a: &[Pixel], b: &[Pixel]) -> f64 {
    let a: HashSet<Pixel> = a.iter().copied().collect();
    let b: HashSet<Pixel> = b.iter().copied().collect();
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: u16,
    pub pred: u16,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub class_id: u8,
    /// Sorted by ground-truth index.
    pub pairs: Vec<MatchedPair>,
    pub false_negatives: Vec<u16>,
    pub false_positives: Vec<u16>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_(&self) -> usize {
        self.false_negatives.len()
    }
}

fn ids_of_class(r: &PanopticResult, class_id: u8) -> BTreeSet<u16> {
    r.per_instance_class
        .iter()
        .filter(|&(_, &c)| c == class_id)
        .map(|(&id, _)| id)
        .collect()
}

/// Matches the instances of one class between ground truth and prediction.
pub fn match_instances(
    gt: &PanopticResult,
    pred: &PanopticResult,
    class_id: u8,
) -> Result<MatchResult> {
    if gt.dims() != pred.dims() {
        return Err(Error::ShapeMismatch(format!(
            "ground truth is {:?}, prediction is {:?}",
            gt.dims(),
            pred.dims()
        )));
    }
    let gt_ids = ids_of_class(gt, class_id);
    let pred_ids = ids_of_class(pred, class_id);

    let mut gt_area: HashMap<u16, usize> = HashMap::new();
    let mut pred_area: HashMap<u16, usize> = HashMap::new();
    let mut inter: BTreeMap<(u16, u16), usize> = BTreeMap::new();
    for (&g, &p) in gt.instances.labels().iter().zip(pred.instances.labels()) {
        let g_in = g != 0 && gt_ids.contains(&g);
        let p_in = p != 0 && pred_ids.contains(&p);
        if g_in {
            *gt_area.entry(g).or_default() += 1;
        }
        if p_in {
            *pred_area.entry(p).or_default() += 1;
        }
        if g_in && p_in {
            *inter.entry((g, p)).or_default() += 1;
        }
    }

    let mut pairs = Vec::new();
    let mut used_gt = BTreeSet::new();
    let mut used_pred = BTreeSet::new();
    for (&(g, p), &n) in &inter {
        let union = gt_area[&g] + pred_area[&p] - n;
        let v = n as f64 / union as f64;
        if v > MATCH_IOU {
            // uniqueness is a theorem for IoU > 0.5
            assert!(used_gt.insert(g), "ground-truth instance {g} matched twice");
            assert!(used_pred.insert(p), "predicted instance {p} matched twice");
            pairs.push(MatchedPair {
                gt: g,
                pred: p,
                iou: v,
            });
        }
    }
    Ok(MatchResult {
        class_id,
        pairs,
        false_negatives: gt_ids.difference(&used_gt).copied().collect(),
        false_positives: pred_ids.difference(&used_pred).copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
}

/// Running TP/FP/FN and TP IoUs for one class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PqTally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    ious: Vec<f64>,
}

impl PqTally {
    pub fn add(&mut self, m: &MatchResult) {
        self.tp += m.tp();
        self.fp += m.fp();
        self.fn_ += m.fn_();
        self.ious.extend(m.pairs.iter().map(|p| p.iou));
    }

    pub fn iou_sum(&self) -> f64 {
        sorted_sum(self.ious.clone())
    }

    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    /// `None` when the class has no instances at all.
    pub fn quality(&self) -> Option<PanopticQuality> {
        if !self.is_defined() {
            return None;
        }
        let tp = self.tp as f64;
        let dq = tp / (tp + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64);
        let sq = if self.tp == 0 {
            0.0
        } else {
            self.iou_sum() / tp
        };
        Some(PanopticQuality {
            dq,
            sq,
            pq: dq * sq,
        })
    }
}

/// DQ, SQ and PQ of a single match; `None` if the class is absent on both sides.
pub fn pq_class(m: &MatchResult) -> Option<PanopticQuality> {
    let mut t = PqTally::default();
    t.add(m);
    t.quality()
}

/// How per-image statistics combine into per-class PQ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PqAggregation {
    /// Pool TP/FP/FN and IoUs over all images, then compute PQ once.
    #[default]
    Pooled,
    /// Mean of per-image PQ over images where the class is defined.
    PerImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanopticReport {
    pub aggregation: PqAggregation,
    /// Indexed by `class_id - 1`.
    pub tallies: Vec<PqTally>,
    pub quality: [Option<PanopticQuality>; NUM_CLASSES],
    /// `None` when every class is undefined.
    pub mpq: Option<f64>,
}

impl PanopticReport {
    pub fn undefined_classes(&self) -> Vec<u8> {
        (1..=MAX_CLASS_ID)
            .filter(|&c| self.quality[c as usize - 1].is_none())
            .collect()
    }
}

/// Multi-class panoptic quality over a set of `(ground truth, prediction)` images.
pub fn mpq(
    images: &[(PanopticResult, PanopticResult)],
    aggregation: PqAggregation,
) -> Result<PanopticReport> {
    if images.is_empty() {
        return Err(Error::EmptyInput("mPQ needs at least one image"));
    }
    let mut tallies = vec![PqTally::default(); NUM_CLASSES];
    let mut per_image: Vec<Vec<PanopticQuality>> = vec![Vec::new(); NUM_CLASSES];
    for (gt, pred) in images {
        for class_id in 1..=MAX_CLASS_ID {
            let m = match_instances(gt, pred, class_id)?;
            let k = class_id as usize - 1;
            tallies[k].add(&m);
            if let Some(q) = pq_class(&m) {
                per_image[k].push(q);
            }
        }
    }
    let quality: [Option<PanopticQuality>; NUM_CLASSES] =
        std::array::from_fn(|k| match aggregation {
            PqAggregation::Pooled => tallies[k].quality(),
            // means of per-image DQ, SQ and PQ; PQ is then not DQ * SQ
            PqAggregation::PerImage => {
                let v = &per_image[k];
                let mean = |f: fn(&PanopticQuality) -> f64| {
                    sorted_sum(v.iter().map(f).collect()) / v.len() as f64
                };
                (!v.is_empty()).then(|| PanopticQuality {
                    dq: mean(|q| q.dq),
                    sq: mean(|q| q.sq),
                    pq: mean(|q| q.pq),
                })
            }
        });
    let defined: Vec<f64> = quality.iter().flatten().map(|q| q.pq).collect();
    let mpq = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(PanopticReport {
        aggregation,
        tallies,
        quality,
        mpq,
    })
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
///
/// With zero variance in `truth`, returns `Some(1.0)` for an exact prediction
/// and `None` (undefined) otherwise.
pub fn r2_class(truth: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} true values vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::EmptyInput("R² needs at least two samples"));
    }
    let n = truth.len() as f64;
    let mean = sorted_sum(truth.to_vec()) / n;
    let ss_res = sorted_sum(
        truth
            .iter()
            .zip(pred)
            .map(|(y, p)| (y - p) * (y - p))
            .collect(),
    );
    let ss_tot = sorted_sum(truth.iter().map(|y| (y - mean) * (y - mean)).collect());
    if ss_tot == 0.0 {
        return Ok((ss_res == 0.0).then_some(1.0));
    }
    Ok(Some(1.0 - ss_res / ss_tot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R2Aggregation {
    /// Mean of per-class R² over defined classes.
    #[default]
    PerClass,
    /// One R² over all (image, class) entries.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub aggregation: R2Aggregation,
    /// Indexed by `class_id - 1`; `None` where undefined.
    pub per_class: [Option<f64>; NUM_CLASSES],
    pub r2_t: Option<f64>,
}

/// Per-class and overall R² of predicted against true counts.
pub fn multi_r2(
    truth: &[CountVector],
    pred: &[CountVector],
    aggregation: R2Aggregation,
) -> Result<R2Report> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} true count rows vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::EmptyInput("R² needs at least two images"));
    }
    let mut per_class = [None; NUM_CLASSES];
    for (k, slot) in per_class.iter_mut().enumerate() {
        let t: Vec<f64> = truth.iter().map(|c| c.0[k]).collect();
        let p: Vec<f64> = pred.iter().map(|c| c.0[k]).collect();
        *slot = r2_class(&t, &p)?;
    }
    let r2_t = match aggregation {
        R2Aggregation::PerClass => {
            let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        }
        R2Aggregation::Pooled => {
            let t: Vec<f64> = truth.iter().flat_map(|c| c.0).collect();
            let p: Vec<f64> = pred.iter().flat_map(|c| c.0).collect();
            r2_class(&t, &p)?
        }
    };
    Ok(R2Report {
        aggregation,
        per_class,
        r2_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u8,
    pub name: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub iou_sum: f64,
    pub dq: Option<f64>,
    pub sq: Option<f64>,
    pub pq: Option<f64>,
    pub r2: Option<f64>,
}

/// Serializable evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: usize,
    pub pq_aggregation: PqAggregation,
    pub r2_aggregation: Option<R2Aggregation>,
    pub classes: Vec<ClassMetrics>,
    pub mpq: Option<f64>,
    pub r2_t: Option<f64>,
    /// Classes with no instances in ground truth or prediction.
    pub undefined_classes: Vec<u8>,
    /// Classes whose R² is undefined (constant true counts, inexact prediction).
    pub r2_undefined_classes: Vec<u8>,
}

impl MetricsReport {
    pub fn new(images: usize, panoptic: &PanopticReport, r2: Option<&R2Report>) -> Self {
        let classes = (0..NUM_CLASSES)
            .map(|k| {
                let t = &panoptic.tallies[k];
                let q = panoptic.quality[k];
                ClassMetrics {
                    class_id: k as u8 + 1,
                    name: CLASS_NAMES[k].to_string(),
                    tp: t.tp,
                    fp: t.fp,
                    fn_: t.fn_,
                    iou_sum: t.iou_sum(),
                    dq: q.map(|q| q.dq),
                    sq: q.map(|q| q.sq),
                    pq: q.map(|q| q.pq),
                    r2: r2.and_then(|r| r.per_class[k]),
                }
            })
            .collect();
        MetricsReport {
            images,
            pq_aggregation: panoptic.aggregation,
            r2_aggregation: r2.map(|r| r.aggregation),
            classes,
            mpq: panoptic.mpq,
            r2_t: r2.and_then(|r| r.r2_t),
            undefined_classes: panoptic.undefined_classes(),
            r2_undefined_classes: r2
                .map(|r| {
                    (1..=MAX_CLASS_ID)
                        .filter(|&c| r.per_class[c as usize - 1].is_none())
                        .collect()
                })
                .unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::assign_classes;
    use crate::tensorio::{ClassMap, InstanceMap};

    fn result(h: usize, w: usize, inst: Vec<u16>, cls: Vec<u8>) -> PanopticResult {
        assign_classes(
            &InstanceMap::from_vec(h, w, inst).unwrap(),
            &ClassMap::from_vec(h, w, cls).unwrap(),
        )
        .unwrap()
    }

    /// 2x2 ground-truth block of class 2 in a 2x3 image.
    fn block() -> PanopticResult {
        result(2, 3, vec![1, 1, 0, 1, 1, 0], vec![2, 2, 0, 2, 2, 0])
    }

    #[test]
    fn iou_examples() {
        let a = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &[(5, 5)]), 0.0);
        assert_eq!(iou(&a, &[(0, 0), (1, 0)]), 0.5);
        assert_eq!(iou(&[], &[]), 0.0);
    }

    #[test]
    fn identical_prediction_all_tp() {
        let gt = block();
        let m = match_instances(&gt, &gt, 2).unwrap();
        assert_eq!(
            m.pairs,
            vec![MatchedPair {
                gt: 1,
                pred: 1,
                iou: 1.0
            }]
        );
        assert!(m.false_positives.is_empty() && m.false_negatives.is_empty());
        assert_eq!(
            pq_class(&m),
            Some(PanopticQuality {
                dq: 1.0,
                sq: 1.0,
                pq: 1.0
            })
        );
    }

    #[test]
    fn half_overlap_is_not_a_match() {
        let pred = result(2, 3, vec![7, 0, 0, 7, 0, 0], vec![2, 0, 0, 2, 0, 0]);
        let m = match_instances(&block(), &pred, 2).unwrap();
        assert_eq!((m.tp(), m.fp(), m.fn_()), (0, 1, 1));
        assert_eq!(
            pq_class(&m),
            Some(PanopticQuality {
                dq: 0.0,
                sq: 0.0,
                pq: 0.0
            })
        );
    }

    #[test]
    fn three_quarter_overlap() {
        let pred = result(2, 3, vec![4, 4, 0, 4, 0, 0], vec![2, 2, 0, 2, 0, 0]);
        let m = match_instances(&block(), &pred, 2).unwrap();
        assert_eq!(
            m.pairs,
            vec![MatchedPair {
                gt: 1,
                pred: 4,
                iou: 0.75
            }]
        );
        assert_eq!(
            pq_class(&m),
            Some(PanopticQuality {
                dq: 1.0,
                sq: 0.75,
                pq: 0.75
            })
        );
    }

    #[test]
    fn other_classes_ignored_and_undefined() {
        let m = match_instances(&block(), &block(), 3).unwrap();
        assert_eq!(pq_class(&m), None);
        // same pixels, different class: FN + FP
        let pred = result(2, 3, vec![1, 1, 0, 1, 1, 0], vec![5, 5, 0, 5, 5, 0]);
        let m = match_instances(&block(), &pred, 2).unwrap();
        assert_eq!((m.tp(), m.fp(), m.fn_()), (0, 0, 1));
    }

    #[test]
    fn dimension_mismatch() {
        let other = result(1, 1, vec![0], vec![0]);
        assert!(match_instances(&block(), &other, 1).is_err());
    }

    #[test]
    fn mpq_examples() {
        let gt = result(1, 6, vec![1, 0, 2, 0, 3, 3], vec![1, 0, 2, 0, 4, 4]);
        let r = mpq(&[(gt.clone(), gt.clone())], PqAggregation::Pooled).unwrap();
        assert_eq!(r.mpq, Some(1.0));
        assert_eq!(r.undefined_classes(), vec![3, 5, 6]);

        let empty = result(1, 6, vec![0; 6], vec![0; 6]);
        let r = mpq(&[(gt, empty)], PqAggregation::Pooled).unwrap();
        assert_eq!(r.mpq, Some(0.0));
        assert_eq!(r.undefined_classes(), vec![3, 5, 6]);

        assert!(mpq(&[], PqAggregation::Pooled).is_err());
    }

    #[test]
    fn per_image_aggregation_differs_from_pooled() {
        // image 1: class 1 found; image 2: class 1 missed
        let a = result(1, 2, vec![1, 0], vec![1, 0]);
        let none = result(1, 2, vec![0, 0], vec![0, 0]);
        let imgs = [(a.clone(), a.clone()), (a, none)];
        // pooled: TP 1, FN 1 -> DQ 2/3; per image: (1 + 0) / 2
        assert_eq!(
            mpq(&imgs, PqAggregation::Pooled).unwrap().mpq,
            Some(2.0 / 3.0)
        );
        assert_eq!(mpq(&imgs, PqAggregation::PerImage).unwrap().mpq, Some(0.5));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_class(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), Some(1.0));
        assert_eq!(r2_class(&[1., 2., 3.], &[2., 2., 2.]).unwrap(), Some(0.0));
        assert_eq!(r2_class(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), Some(-3.0));
        assert_eq!(r2_class(&[4., 4.], &[4., 4.]).unwrap(), Some(1.0));
        assert_eq!(r2_class(&[4., 4.], &[4., 5.]).unwrap(), None);
        assert!(r2_class(&[1.], &[1.]).is_err());
        assert!(r2_class(&[1., 2.], &[1.]).is_err());
    }

    #[test]
    fn multi_r2_examples() {
        let truth = vec![
            CountVector([1., 0., 3., 2., 0., 5.]),
            CountVector([2., 1., 1., 3., 1., 4.]),
            CountVector([0., 5., 2., 7., 3., 0.]),
        ];
        let perfect = multi_r2(&truth, &truth, R2Aggregation::PerClass).unwrap();
        assert_eq!(perfect.r2_t, Some(1.0));
        assert_eq!(
            multi_r2(&truth, &truth, R2Aggregation::Pooled)
                .unwrap()
                .r2_t,
            Some(1.0)
        );

        let mut mean = [0.0; 6];
        for c in &truth {
            for (m, v) in mean.iter_mut().zip(c.0) {
                *m += v / 3.0;
            }
        }
        let means = vec![CountVector(mean); 3];
        let r = multi_r2(&truth, &means, R2Aggregation::PerClass).unwrap();
        for v in r.per_class {
            assert!(v.unwrap().abs() < 1e-12);
        }
        assert!(r.r2_t.unwrap().abs() < 1e-12);

        assert!(multi_r2(&truth[..1], &truth[..1], R2Aggregation::PerClass).is_err());
        assert!(multi_r2(&truth, &truth[..2], R2Aggregation::PerClass).is_err());
    }

    #[test]
    fn constant_class_r2() {
        let truth = vec![
            CountVector([1., 0., 0., 0., 0., 0.]),
            CountVector([3., 0., 0., 0., 0., 2.]),
        ];
        let mut pred = truth.clone();
        pred[0].0[5] = 1.0;
        let r = multi_r2(&truth, &pred, R2Aggregation::PerClass).unwrap();
        // classes 2..=5 constant and exact, class 6 varies
        assert_eq!(r.per_class[..5], [Some(1.0); 5]);
        assert_eq!(r.per_class[5], Some(1.0 - 1.0 / 2.0));
        pred[1].0[1] = 1.0;
        let r = multi_r2(&truth, &pred, R2Aggregation::PerClass).unwrap();
        assert_eq!(r.per_class[1], None);
    }

    #[test]
    fn report_serializes_tallies() {
        let gt = block();
        let p = mpq(&[(gt.clone(), gt)], PqAggregation::Pooled).unwrap();
        let rep = MetricsReport::new(1, &p, None);
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["mpq"], 1.0);
        assert_eq!(v["classes"][1]["tp"], 1);
        assert_eq!(v["classes"][1]["fn"], 0);
        assert_eq!(v["classes"][0]["pq"], serde_json::Value::Null);
        assert_eq!(v["undefined_classes"], serde_json::json!([1, 3, 4, 5, 6]));
    }
}
