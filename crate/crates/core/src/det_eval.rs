//! Hierarchy-aware detection evaluation.
//!
//! For every level of the taxonomy, each detection's leaf scores are folded
//! up to that level, non-maximum suppression is re-run on the level scores,
//! ground-truth labels are mapped to their ancestors, and COCO-style AP
//! (101-point interpolation, averaged over IoU thresholds) is computed per
//! class. The box geometry never changes across levels; only the scores and
//! therefore the surviving set of boxes do.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationMode, Aggregator, DISTRIBUTION_TOL};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Axis-aligned box `(x, y, width, height)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, width, height]: [f64; 4]) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.width, self.height]
            .iter()
            .all(|v| v.is_finite())
            && self.width > 0.0
            && self.height > 0.0
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.width.total_cmp(&other.width))
            .then(self.height.total_cmp(&other.height))
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let iy = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub image_id: String,
    pub bbox: BBox,
    pub leaf_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub image_id: String,
    pub bbox: BBox,
    pub leaf_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub nms_iou: f64,
    pub score_floor: f64,
    pub max_dets_per_image: usize,
    /// Suppress across classes instead of within each class.
    pub class_agnostic_nms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            nms_iou: 0.5,
            score_floor: 0.05,
            max_dets_per_image: 100,
            class_agnostic_nms: false,
        }
    }
}

impl EvalConfig {
    /// Single-threshold protocol, e.g. AP50.
    pub fn at_iou(threshold: f64) -> Self {
        Self {
            iou_thresholds: vec![threshold],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("iou_thresholds is empty".into()));
        }
        if self
            .iou_thresholds
            .iter()
            .any(|t| !(*t > 0.0 && *t <= 1.0))
        {
            return Err(Error::Config("iou_thresholds must lie in (0, 1]".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("iou_thresholds must be sorted ascending".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!(
                "nms_iou must lie in (0, 1], got {}",
                self.nms_iou
            )));
        }
        if !(0.0..1.0).contains(&self.score_floor) {
            return Err(Error::Config(format!(
                "score_floor must lie in [0, 1), got {}",
                self.score_floor
            )));
        }
        if self.max_dets_per_image == 0 {
            return Err(Error::Config("max_dets_per_image must be positive".into()));
        }
        Ok(())
    }
}

/// Greedy non-maximum suppression.
///
/// Visits boxes by descending score (ties: lower input index first), keeps a
/// box unless its IoU with an already kept box exceeds `iou_thresh`. Returns
/// kept input indices in visiting order.
pub fn nms(boxes: &[(BBox, f64)], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].1.total_cmp(&boxes[a].1).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(&boxes[k].0, &boxes[i].0) <= iou_thresh)
        {
            kept.push(i);
        }
    }
    kept
}

fn check_scores(d: &DetBox, t: &Taxonomy, mode: AggregationMode) -> Result<()> {
    if d.leaf_scores.len() != t.num_leaves() {
        return Err(Error::DataMismatch(format!(
            "detection on image `{}` has {} scores, taxonomy has {} leaves",
            d.image_id,
            d.leaf_scores.len(),
            t.num_leaves()
        )));
    }
    crate::aggregation::check_unit_interval(&d.leaf_scores)?;
    if mode == AggregationMode::Sum {
        let total: f64 = d.leaf_scores.iter().sum();
        if total > 1.0 + DISTRIBUTION_TOL {
            return Err(Error::NotADistribution(format!(
                "sum aggregation needs leaf scores summing to at most 1, got {total}"
            )));
        }
    }
    if !d.bbox.is_valid() {
        return Err(Error::InvalidData(format!(
            "detection on image `{}` has a degenerate box {:?}",
            d.image_id, d.bbox
        )));
    }
    Ok(())
}

/// Leaf scores of one detection folded up to `level`.
///
/// Under [`AggregationMode::Sum`] the scores may leave mass for background
/// (total at most 1); they are summed as-is.
pub fn aggregate_scores_to_level(
    d: &DetBox,
    t: &Taxonomy,
    level: usize,
    mode: AggregationMode,
) -> Result<Vec<f64>> {
    check_scores(d, t, mode)?;
    Aggregator::new(t, mode)?.to_level(&d.leaf_scores, level)
}

/// A detection as seen at one level of the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDetection {
    pub bbox: BBox,
    pub class: usize,
    pub score: f64,
    /// Index of the originating box in the input slice.
    pub source: usize,
}

fn canonical_order(dets: &[&DetBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (dets[a], dets[b]);
        da.image_id
            .cmp(&db.image_id)
            .then_with(|| da.bbox.total_cmp(&db.bbox))
            .then_with(|| {
                da.leaf_scores
                    .iter()
                    .zip(&db.leaf_scores)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    order
}

/// `rank_of[source]` is the detection's position in canonical order.
fn suppress(cands: Vec<LevelDetection>, rank_of: &[usize], cfg: &EvalConfig) -> Vec<LevelDetection> {
    let mut by_class: BTreeMap<usize, Vec<LevelDetection>> = BTreeMap::new();
    for c in cands {
        let key = if cfg.class_agnostic_nms { 0 } else { c.class };
        by_class.entry(key).or_default().push(c);
    }
    let mut kept = Vec::new();
    for group in by_class.into_values() {
        let boxes: Vec<(BBox, f64)> = group.iter().map(|c| (c.bbox, c.score)).collect();
        for i in nms(&boxes, cfg.nms_iou) {
            kept.push(group[i].clone());
        }
    }
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(rank_of[a.source].cmp(&rank_of[b.source]))
            .then(a.class.cmp(&b.class))
    });
    kept.truncate(cfg.max_dets_per_image);
    kept
}

fn level_nms_with(
    dets: &[&DetBox],
    agg: &Aggregator<'_>,
    cfg: &EvalConfig,
) -> Result<Vec<Vec<LevelDetection>>> {
    let t = agg.taxonomy();
    let order = canonical_order(dets);
    let mut rank_of = vec![0; dets.len()];
    for (rank, &i) in order.iter().enumerate() {
        rank_of[i] = rank;
    }
    let mut per_box_levels = Vec::with_capacity(dets.len());
    for &i in &order {
        per_box_levels.push(agg.all_levels(&dets[i].leaf_scores)?);
    }
    let mut out = Vec::with_capacity(t.levels());
    for l in 0..t.levels() {
        let mut cands = Vec::new();
        for (rank, &i) in order.iter().enumerate() {
            for (class, &score) in per_box_levels[rank][l].iter().enumerate() {
                if score >= cfg.score_floor && score > 0.0 {
                    cands.push(LevelDetection {
                        bbox: dets[i].bbox,
                        class,
                        score,
                        source: i,
                    });
                }
            }
        }
        out.push(suppress(cands, &rank_of, cfg));
    }
    Ok(out)
}

/// Per-level post-processing of one image's detections.
///
/// Returns, for each level (leaf first), the surviving `(box, class, score)`
/// triples ordered by descending score. Detections are put into a canonical
/// order first, so the result does not depend on input order.
pub fn multi_level_nms(
    dets: &[DetBox],
    t: &Taxonomy,
    mode: AggregationMode,
    cfg: &EvalConfig,
) -> Result<Vec<Vec<LevelDetection>>> {
    cfg.validate()?;
    for d in dets {
        check_scores(d, t, mode)?;
    }
    let agg = Aggregator::new(t, mode)?;
    let refs: Vec<&DetBox> = dets.iter().collect();
    level_nms_with(&refs, &agg, cfg)
}

/// COCO-style 101-point interpolated average precision.
///
/// `matches` lists detections of one class by descending score, `true` for a
/// true positive. Returns `None` when there is neither ground truth nor a
/// detection (the class does not take part in the mean).
pub fn average_precision(matches: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return if matches.is_empty() { None } else { Some(0.0) };
    }
    if matches.is_empty() {
        return Some(0.0);
    }
    let mut recall = Vec::with_capacity(matches.len());
    let mut precision = Vec::with_capacity(matches.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &m in matches {
        if m {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut total = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < level);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    Some(total / 101.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelEvalReport {
    pub mode: AggregationMode,
    /// mAP at each level, leaf first.
    pub per_level_map: Vec<f64>,
    /// Per level: class index -> AP (averaged over IoU thresholds).
    pub per_class_ap: Vec<BTreeMap<usize, f64>>,
    pub config: EvalConfig,
}

/// One scored detection of a single class, ready for matching.
struct Scored<'a> {
    image: &'a str,
    bbox: BBox,
    score: f64,
    /// Position in the image's canonical post-NMS list, for stable ties.
    rank: usize,
}

fn class_ap(
    dets: &mut [Scored<'_>],
    gts: &HashMap<&str, Vec<BBox>>,
    n_gt: usize,
    thresholds: &[f64],
) -> Option<f64> {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image.cmp(b.image))
            .then(a.rank.cmp(&b.rank))
    });
    let mut total = 0.0;
    for &thr in thresholds {
        let mut used: HashMap<&str, Vec<bool>> = gts
            .iter()
            .map(|(k, v)| (*k, vec![false; v.len()]))
            .collect();
        let matches: Vec<bool> = dets
            .iter()
            .map(|d| {
                let (Some(boxes), Some(taken)) = (gts.get(d.image), used.get_mut(d.image)) else {
                    return false;
                };
                let mut best: Option<(usize, f64)> = None;
                for (g, gb) in boxes.iter().enumerate() {
                    if taken[g] {
                        continue;
                    }
                    let o = iou(&d.bbox, gb);
                    if o >= thr && best.is_none_or(|(_, b)| o > b) {
                        best = Some((g, o));
                    }
                }
                match best {
                    Some((g, _)) => {
                        taken[g] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        total += average_precision(&matches, n_gt)?;
    }
    Some(total / thresholds.len() as f64)
}

/// mAP at every level of the hierarchy.
pub fn multi_level_map(
    dets: &[DetBox],
    gts: &[GtBox],
    t: &Taxonomy,
    mode: AggregationMode,
    cfg: &EvalConfig,
) -> Result<LevelEvalReport> {
    cfg.validate()?;
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    for g in gts {
        if g.leaf_label >= t.num_leaves() {
            return Err(Error::DataMismatch(format!(
                "ground truth on image `{}` has leaf label {} but taxonomy has {} leaves",
                g.image_id,
                g.leaf_label,
                t.num_leaves()
            )));
        }
        if !g.bbox.is_valid() {
            return Err(Error::InvalidData(format!(
                "ground truth on image `{}` has a degenerate box {:?}",
                g.image_id, g.bbox
            )));
        }
    }
    for d in dets {
        check_scores(d, t, mode)?;
    }

    let agg = Aggregator::new(t, mode)?;
    let mut by_image: BTreeMap<&str, Vec<&DetBox>> = BTreeMap::new();
    for d in dets {
        by_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    // image -> per level kept detections
    let mut kept: BTreeMap<&str, Vec<Vec<LevelDetection>>> = BTreeMap::new();
    for (img, list) in &by_image {
        kept.insert(img, level_nms_with(list, &agg, cfg)?);
    }

    let mut per_level_map = Vec::with_capacity(t.levels());
    let mut per_class_ap = Vec::with_capacity(t.levels());
    for l in 0..t.levels() {
        let level = l + 1;
        let num_classes = t.level_size(level)?;
        let mut gt_by_class: Vec<HashMap<&str, Vec<BBox>>> = vec![HashMap::new(); num_classes];
        let mut n_gt = vec![0usize; num_classes];
        for g in gts {
            let c = t.map_leaf_to_level(g.leaf_label, level)?;
            gt_by_class[c]
                .entry(g.image_id.as_str())
                .or_default()
                .push(g.bbox);
            n_gt[c] += 1;
        }
        let mut det_by_class: Vec<Vec<Scored<'_>>> = (0..num_classes).map(|_| Vec::new()).collect();
        for (img, levels) in &kept {
            for (rank, d) in levels[l].iter().enumerate() {
                det_by_class[d.class].push(Scored {
                    image: img,
                    bbox: d.bbox,
                    score: d.score,
                    rank,
                });
            }
        }

        let mut aps = BTreeMap::new();
        let mut sum = 0.0;
        let mut counted = 0usize;
        for (c, mut dets_c) in det_by_class.into_iter().enumerate() {
            if let Some(ap) = class_ap(&mut dets_c, &gt_by_class[c], n_gt[c], &cfg.iou_thresholds) {
                aps.insert(c, ap);
                if n_gt[c] > 0 {
                    sum += ap;
                    counted += 1;
                }
            }
        }
        per_level_map.push(if counted == 0 { 0.0 } else { sum / counted as f64 });
        per_class_ap.push(aps);
    }

    Ok(LevelEvalReport {
        mode,
        per_level_map,
        per_class_ap,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyNode;

    fn seven_node() -> Taxonomy {
        Taxonomy::from_nodes(vec![
            TaxonomyNode::new("root", None, 3),
            TaxonomyNode::new("m0", Some("root"), 2),
            TaxonomyNode::new("m1", Some("root"), 2),
            TaxonomyNode::new("a", Some("m0"), 1),
            TaxonomyNode::new("b", Some("m0"), 1),
            TaxonomyNode::new("c", Some("m1"), 1),
            TaxonomyNode::new("d", Some("m1"), 1),
        ])
        .unwrap()
    }

    fn det(img: &str, b: [f64; 4], scores: [f64; 4]) -> DetBox {
        DetBox {
            image_id: img.into(),
            bbox: b.into(),
            leaf_scores: scores.to_vec(),
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou(&a, &BBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
        let b = BBox::new(1.0, 0.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn nms_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[(a, 0.3)], 0.5), vec![0]);
        assert_eq!(nms(&[(a, 0.9), (a, 0.8)], 0.5), vec![0]);
        // B overlaps A at IoU 0.6: widths chosen so inter/union = 0.6
        let b = BBox::new(2.5, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 0.6).abs() < 1e-12);
        let c = BBox::new(50.0, 50.0, 10.0, 10.0);
        assert_eq!(nms(&[(a, 0.9), (b, 0.8), (c, 0.7)], 0.5), vec![0, 2]);
        assert_eq!(nms(&[(b, 0.8), (c, 0.7), (a, 0.9)], 0.5), vec![2, 1]);
        // equal scores: lower index wins
        assert_eq!(nms(&[(a, 0.5), (a, 0.5)], 0.5), vec![0]);
        assert!(nms(&[], 0.5).is_empty());
    }

    #[test]
    fn level_scores() {
        let t = seven_node();
        let d = det("i", [0.0, 0.0, 1.0, 1.0], [0.4, 0.4, 0.0, 0.0]);
        assert_eq!(
            aggregate_scores_to_level(&d, &t, 1, AggregationMode::Union).unwrap(),
            d.leaf_scores
        );
        let u = aggregate_scores_to_level(&d, &t, 2, AggregationMode::Union).unwrap();
        assert!((u[0] - 0.64).abs() < 1e-15);
        let s = aggregate_scores_to_level(&d, &t, 2, AggregationMode::Sum).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-15);
        assert!(matches!(
            aggregate_scores_to_level(&d, &t, 4, AggregationMode::Sum),
            Err(Error::LevelOutOfRange { .. })
        ));
        let heavy = det("i", [0.0, 0.0, 1.0, 1.0], [0.9, 0.9, 0.0, 0.0]);
        assert!(matches!(
            aggregate_scores_to_level(&heavy, &t, 2, AggregationMode::Sum),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn sibling_boxes_merge_at_parent() {
        let t = seven_node();
        let b = [10.0, 10.0, 20.0, 20.0];
        let dets = vec![det("i", b, [0.6, 0.0, 0.0, 0.0]), det("i", b, [0.0, 0.55, 0.0, 0.0])];
        let cfg = EvalConfig::at_iou(0.5);
        let levels = multi_level_nms(&dets, &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(levels[0].len(), 2);
        assert_eq!(levels[1].len(), 1);
        assert_eq!(levels[1][0].score, 0.6);
        assert_eq!(levels[1][0].source, 0);
        assert_eq!(levels[2].len(), 1);

        let agnostic = EvalConfig {
            class_agnostic_nms: true,
            ..cfg.clone()
        };
        let levels = multi_level_nms(&dets, &t, AggregationMode::Union, &agnostic).unwrap();
        assert_eq!(levels[0].len(), 1);
    }

    #[test]
    fn single_and_empty() {
        let t = seven_node();
        let cfg = EvalConfig::default();
        let one = vec![det("i", [0.0, 0.0, 4.0, 4.0], [0.3, 0.2, 0.0, 0.0])];
        let levels = multi_level_nms(&one, &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(levels[2].len(), 1);
        assert!((levels[2][0].score - (1.0 - 0.7 * 0.8)).abs() < 1e-15);
        let none = multi_level_nms(&[], &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(none.len(), 3);
        assert!(none.iter().all(Vec::is_empty));
    }

    #[test]
    fn max_dets_and_floor() {
        let t = seven_node();
        let cfg = EvalConfig {
            max_dets_per_image: 2,
            score_floor: 0.1,
            ..EvalConfig::default()
        };
        let dets: Vec<_> = (0..4)
            .map(|i| det("i", [i as f64 * 100.0, 0.0, 10.0, 10.0], [0.05 + 0.2 * i as f64, 0.0, 0.0, 0.0]))
            .collect();
        let levels = multi_level_nms(&dets, &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(levels[0].len(), 2);
        assert_eq!(levels[0][0].source, 3);
        assert_eq!(levels[0][1].source, 2);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true], 2), Some(1.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[false, true], 1), Some(0.5));
        assert_eq!(average_precision(&[], 0), None);
        assert_eq!(average_precision(&[false], 0), Some(0.0));
        // one of two GT found by the top detection: recall 0..0.5 at precision 1
        let ap = average_precision(&[true, false], 2).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_confused_detectors() {
        let t = seven_node();
        let mut gts = Vec::new();
        let mut perfect = Vec::new();
        let mut confused = Vec::new();
        for i in 0..8 {
            let img = format!("img{i}");
            let leaf = i % 4;
            let b = [5.0, 5.0, 30.0 + i as f64, 20.0];
            gts.push(GtBox {
                image_id: img.clone(),
                bbox: b.into(),
                leaf_label: leaf,
            });
            let mut s = [0.0; 4];
            s[leaf] = 0.9;
            perfect.push(det(&img, b, s));
            let mut s = [0.0; 4];
            s[leaf ^ 1] = 0.9;
            confused.push(det(&img, b, s));
        }
        let cfg = EvalConfig::default();
        let r = multi_level_map(&perfect, &gts, &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(r.per_level_map, vec![1.0, 1.0, 1.0]);
        let r = multi_level_map(&confused, &gts, &t, AggregationMode::Union, &cfg).unwrap();
        assert_eq!(r.per_level_map[0], 0.0);
        assert_eq!(r.per_level_map[1], 1.0);
        assert_eq!(r.per_level_map[2], 1.0);
        assert!(matches!(
            multi_level_map(&perfect, &[], &t, AggregationMode::Union, &cfg),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        let bad = EvalConfig {
            iou_thresholds: vec![0.75, 0.5],
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvalConfig {
            iou_thresholds: vec![],
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvalConfig {
            score_floor: 1.0,
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg: EvalConfig = serde_json::from_str(r#"{"iou_thresholds": [0.5]}"#).unwrap();
        assert_eq!(cfg.nms_iou, 0.5);
        assert_eq!(cfg.max_dets_per_image, 100);
    }

    #[test]
    fn mismatched_scores() {
        let t = seven_node();
        let d = DetBox {
            image_id: "i".into(),
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            leaf_scores: vec![0.5; 3],
        };
        let g = GtBox {
            image_id: "i".into(),
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            leaf_label: 0,
        };
        assert!(matches!(
            multi_level_map(&[d], std::slice::from_ref(&g), &t, AggregationMode::Union, &EvalConfig::default()),
            Err(Error::DataMismatch(_))
        ));
        let g_bad = GtBox { leaf_label: 9, ..g };
        assert!(matches!(
            multi_level_map(&[], &[g_bad], &t, AggregationMode::Union, &EvalConfig::default()),
            Err(Error::DataMismatch(_))
        ));
    }
}
