//! Forward values of the four training loss terms and their weighted sum.
//!
//! Reductions are means: cross entropies average over pixels, the count loss
//! averages over the six classes. Probabilities are clamped to
//! [`PROB_CLAMP`] before taking logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::SEG_CHANNELS;
use crate::tensorio::{ClassMap, CountVector, DirectionMap, ProbTensor, NUM_CLASSES};

pub const PROB_CLAMP: f64 = 1e-12;
pub const DICE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_ce: f64,
    pub w_dice: f64,
    pub w_dir: f64,
    pub w_l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_ce: 1.0,
            w_dice: 4.0,
            w_dir: 2.0,
            w_l2: 0.005,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_ce, self.w_dice, self.w_dir, self.w_l2];
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "loss weights must be finite and >= 0, got {w:?}"
            )))
        }
    }
}

impl std::str::FromStr for LossWeights {
    type Err = Error;

    /// Parses `a,b,c,d`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("bad weights `{s}`: {e}")))?;
        let [w_ce, w_dice, w_dir, w_l2] = parts[..] else {
            return Err(Error::InvalidConfig(format!(
                "expected 4 comma-separated weights, got `{s}`"
            )));
        };
        let w = LossWeights {
            w_ce,
            w_dice,
            w_dir,
            w_l2,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub dice: f64,
    pub dir_ce: f64,
    pub l2: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn from_terms(ce: f64, dice: f64, dir_ce: f64, l2: f64, weights: LossWeights) -> Self {
        let total =
            weights.w_ce * ce + weights.w_dice * dice + weights.w_dir * dir_ce + weights.w_l2 * l2;
        LossBreakdown {
            ce,
            dice,
            dir_ce,
            l2,
            total,
            weights,
        }
    }
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {a:?}, ground truth is {b:?}"
        )));
    }
    Ok(())
}

fn check_channels(t: &ProbTensor, expected: usize) -> Result<()> {
    if t.channels() != expected {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} channels, expected {expected}",
            t.channels()
        )));
    }
    Ok(())
}

fn nll(p: f64) -> f64 {
    -p.max(PROB_CLAMP).ln()
}

/// Mean per-pixel cross entropy of the 7-channel segmentation output.
pub fn seg_cross_entropy(pred: &ProbTensor, gt: &ClassMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    check_channels(pred, SEG_CHANNELS)?;
    pred.check_normalized()?;
    let n = gt.labels().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = gt
        .grid()
        .iter()
        .map(|((r, c), k)| nll(pred.get(r, c, k as usize)))
        .sum();
    Ok(sum / n as f64)
}

/// Soft Dice loss over foreground classes present in `gt`, averaged per class.
///
/// Returns 0 when `gt` has no foreground.
pub fn dice_loss(pred: &ProbTensor, gt: &ClassMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    check_channels(pred, SEG_CHANNELS)?;
    let mut inter = [0.0; SEG_CHANNELS];
    let mut pred_sum = [0.0; SEG_CHANNELS];
    let mut gt_sum = [0.0; SEG_CHANNELS];
    for ((r, c), k) in gt.grid().iter() {
        let px = pred.pixel(r, c);
        for ch in 1..SEG_CHANNELS {
            pred_sum[ch] += px[ch];
        }
        if k != 0 {
            inter[k as usize] += px[k as usize];
            gt_sum[k as usize] += 1.0;
        }
    }
    let per_class: Vec<f64> = (1..=NUM_CLASSES)
        .filter(|&ch| gt_sum[ch] > 0.0)
        .map(|ch| 1.0 - (2.0 * inter[ch] + DICE_EPS) / (pred_sum[ch] + gt_sum[ch] + DICE_EPS))
        .collect();
    if per_class.is_empty() {
        return Ok(0.0);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Mean cross entropy of the direction output over foreground pixels.
pub fn dir_cross_entropy(pred: &ProbTensor, gt: &DirectionMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    check_channels(pred, gt.n_directions() as usize)?;
    pred.check_normalized()?;
    let (h, w) = gt.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..h {
        for c in 0..w {
            if let Some(d) = gt.get(r, c) {
                sum += nll(pred.get(r, c, d as usize));
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean squared error over the six counts.
pub fn count_l2(pred: &CountVector, gt: &CountVector) -> Result<f64> {
    pred.check_finite()?;
    gt.check_finite()?;
    let sum: f64 = pred
        .0
        .iter()
        .zip(&gt.0)
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok(sum / NUM_CLASSES as f64)
}

/// Everything the four terms need for one image.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub seg_pred: &'a ProbTensor,
    pub seg_gt: &'a ClassMap,
    pub dir_pred: &'a ProbTensor,
    pub dir_gt: &'a DirectionMap,
    pub count_pred: &'a CountVector,
    pub count_gt: &'a CountVector,
}

pub fn total_loss(inputs: &LossInputs<'_>, weights: LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    Ok(LossBreakdown::from_terms(
        seg_cross_entropy(inputs.seg_pred, inputs.seg_gt)?,
        dice_loss(inputs.seg_pred, inputs.seg_gt)?,
        dir_cross_entropy(inputs.dir_pred, inputs.dir_gt)?,
        count_l2(inputs.count_pred, inputs.count_gt)?,
        weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class_map() -> ClassMap {
        ClassMap::from_vec(2, 3, vec![0, 1, 1, 2, 6, 0]).unwrap()
    }

    fn one_hot_seg(gt: &ClassMap) -> ProbTensor {
        let (h, w) = gt.dims();
        ProbTensor::one_hot(h, w, 7, |r, c| gt.get(r, c) as usize)
    }

    #[test]
    fn seg_ce_examples() {
        let gt = class_map();
        assert!(seg_cross_entropy(&one_hot_seg(&gt), &gt).unwrap() <= 1e-12);
        let uniform = ProbTensor::filled(2, 3, 7, 1.0 / 7.0);
        let ce = seg_cross_entropy(&uniform, &gt).unwrap();
        assert!((ce - 7f64.ln()).abs() < 1e-12);
        assert!((ce - 1.945910).abs() < 1e-6);
        // zero probability on the true class everywhere
        let wrong = ProbTensor::one_hot(2, 3, 7, |r, c| (gt.get(r, c) as usize + 1) % 7);
        let ce = seg_cross_entropy(&wrong, &gt).unwrap();
        assert!((ce - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn seg_ce_rejects_bad_input() {
        let gt = class_map();
        assert!(matches!(
            seg_cross_entropy(&ProbTensor::filled(2, 3, 7, 0.2), &gt),
            Err(Error::NotNormalized { .. })
        ));
        assert!(seg_cross_entropy(&ProbTensor::filled(3, 2, 7, 1.0 / 7.0), &gt).is_err());
        assert!(seg_cross_entropy(&ProbTensor::filled(2, 3, 4, 0.25), &gt).is_err());
    }

    #[test]
    fn dice_examples() {
        let gt = class_map();
        assert!(dice_loss(&one_hot_seg(&gt), &gt).unwrap() < 1e-5);

        // nothing predicted for class 6
        let miss = ProbTensor::one_hot(2, 3, 7, |r, c| match gt.get(r, c) {
            6 => 0,
            k => k as usize,
        });
        let d = dice_loss(&miss, &gt).unwrap();
        // mean of (0, 0, ~1) over present classes 1, 2, 6
        assert!((d - 1.0 / 3.0).abs() < 1e-5, "{d}");

        let half_gt = ClassMap::from_vec(1, 2, vec![1, 1]).unwrap();
        let half = ProbTensor::one_hot(1, 2, 7, |_, c| if c == 0 { 1 } else { 0 });
        let d = dice_loss(&half, &half_gt).unwrap();
        let want = 1.0 - (2.0 + DICE_EPS) / (3.0 + DICE_EPS);
        assert_eq!(d, want);
        assert!((d - 1.0 / 3.0).abs() < 1e-6);

        assert_eq!(
            dice_loss(
                &ProbTensor::filled(2, 2, 7, 1.0 / 7.0),
                &ClassMap::new(2, 2)
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn dir_ce_examples() {
        let mut gt = DirectionMap::new(2, 2, 4).unwrap();
        gt.set(0, 0, Some(0));
        gt.set(0, 1, Some(3));
        gt.set(1, 1, Some(2));
        let correct = ProbTensor::one_hot(2, 2, 4, |r, c| gt.get(r, c).unwrap_or(1) as usize);
        assert_eq!(dir_cross_entropy(&correct, &gt).unwrap(), 0.0);
        let uniform = ProbTensor::filled(2, 2, 4, 0.25);
        let ce = dir_cross_entropy(&uniform, &gt).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!((ce - 1.386294).abs() < 1e-6);
        let empty = DirectionMap::new(2, 2, 4).unwrap();
        assert_eq!(
            dir_cross_entropy(&ProbTensor::one_hot(2, 2, 4, |_, _| 3), &empty).unwrap(),
            0.0
        );
        assert!(dir_cross_entropy(&ProbTensor::filled(2, 2, 8, 0.125), &gt).is_err());
    }

    #[test]
    fn count_l2_examples() {
        let gt = CountVector([1., 2., 3., 4., 5., 6.]);
        assert_eq!(count_l2(&gt, &gt).unwrap(), 0.0);
        assert_eq!(
            count_l2(&CountVector(gt.0.map(|v| v + 1.0)), &gt).unwrap(),
            1.0
        );
        assert_eq!(
            count_l2(
                &CountVector::zeros(),
                &CountVector([0., 6., 0., 0., 0., 0.])
            )
            .unwrap(),
            6.0
        );
        assert!(count_l2(&CountVector([f64::NAN; 6]), &gt).is_err());
    }

    #[test]
    fn weighted_total() {
        let b = LossBreakdown::from_terms(1.0, 0.5, 1.0, 100.0, LossWeights::default());
        assert_eq!(b.total, 5.5);
        let zero = LossWeights {
            w_ce: 0.0,
            w_dice: 0.0,
            w_dir: 0.0,
            w_l2: 0.0,
        };
        assert_eq!(
            LossBreakdown::from_terms(3.0, 1.0, 2.0, 1e6, zero).total,
            0.0
        );
    }

    #[test]
    fn weights_parse() {
        let w: LossWeights = "1,4,2,0.005".parse().unwrap();
        assert_eq!(w, LossWeights::default());
        assert!("1,2,3".parse::<LossWeights>().is_err());
        assert!("1,2,3,-1".parse::<LossWeights>().is_err());
        assert!("1,x,3,4".parse::<LossWeights>().is_err());
    }

    #[test]
    fn perfect_inputs_total_near_zero() {
        let gt = class_map();
        let mut dgt = DirectionMap::new(2, 3, 4).unwrap();
        for ((r, c), k) in gt.grid().iter() {
            if k != 0 {
                dgt.set(r, c, Some((r + c) as u8 % 4));
            }
        }
        let dpred = ProbTensor::one_hot(2, 3, 4, |r, c| dgt.get(r, c).unwrap_or(0) as usize);
        let counts = CountVector([0., 1., 0., 0., 0., 1.]);
        let seg = one_hot_seg(&gt);
        let inputs = LossInputs {
            seg_pred: &seg,
            seg_gt: &gt,
            dir_pred: &dpred,
            dir_gt: &dgt,
            count_pred: &counts,
            count_gt: &counts,
        };
        let b = total_loss(&inputs, LossWeights::default()).unwrap();
        assert!(b.total < 1e-4, "{b:?}");
        assert!(b.ce <= 1e-5 && b.dice <= 1e-5 && b.dir_ce <= 1e-5 && b.l2 == 0.0);
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn terms_nonnegative_and_one_hot_minimal(
            labels in prop::collection::vec(0u8..7, 12),
            logits in prop::collection::vec(-4.0f64..4.0, 12 * 7),
        ) {
            let gt = ClassMap::from_vec(3, 4, labels).unwrap();
            let vals: Vec<f64> = logits.chunks(7).flat_map(softmax).collect();
            let pred = ProbTensor::from_vec(3, 4, 7, vals).unwrap();
            let ce = seg_cross_entropy(&pred, &gt).unwrap();
            let dice = dice_loss(&pred, &gt).unwrap();
            prop_assert!(ce.is_finite() && ce > 0.0);
            prop_assert!((0.0..=1.0 + 1e-6).contains(&dice));
            prop_assert!(ce > seg_cross_entropy(&one_hot_seg(&gt), &gt).unwrap());
        }

        #[test]
        fn lowering_true_probability_raises_ce(p in 0.05f64..0.95, q in 0.01f64..0.049) {
            let gt = ClassMap::from_vec(1, 1, vec![3]).unwrap();
            let mk = |t: f64| {
                let rest = (1.0 - t) / 6.0;
                ProbTensor::from_vec(1, 1, 7, (0..7).map(|k| if k == 3 { t } else { rest }).collect()).unwrap()
            };
            let hi = seg_cross_entropy(&mk(p), &gt).unwrap();
            let lo = seg_cross_entropy(&mk(p - q), &gt).unwrap();
            prop_assert!(lo > hi);
        }

        #[test]
        fn dice_permutation_invariant(labels in prop::collection::vec(0u8..7, 8), logits in prop::collection::vec(-3.0f64..3.0, 8 * 7), shift in 1usize..8) {
            let vals: Vec<f64> = logits.chunks(7).flat_map(softmax).collect();
            let gt = ClassMap::from_vec(1, 8, labels.clone()).unwrap();
            let pred = ProbTensor::from_vec(1, 8, 7, vals.clone()).unwrap();
            let mut pl = labels.clone();
            pl.rotate_left(shift);
            let mut pv = vals.clone();
            pv.rotate_left(shift * 7);
            let gt2 = ClassMap::from_vec(1, 8, pl).unwrap();
            let pred2 = ProbTensor::from_vec(1, 8, 7, pv).unwrap();
            let (a, b) = (dice_loss(&pred, &gt).unwrap(), dice_loss(&pred2, &gt2).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn total_linear_in_each_term(t in prop::array::uniform4(0.0f64..10.0), d in 0.0f64..5.0) {
            let w = LossWeights::default();
            let base = LossBreakdown::from_terms(t[0], t[1], t[2], t[3], w).total;
            let bumped = LossBreakdown::from_terms(t[0], t[1] + d, t[2], t[3], w).total;
            prop_assert!((bumped - base - 4.0 * d).abs() < 1e-9);
        }
    }
}
