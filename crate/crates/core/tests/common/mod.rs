//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use hierloss::det_eval::{BBox, DetBox, GtBox};
use hierloss::{Taxonomy, TaxonomyNode};
use rand::Rng;

pub const SEVEN_NODE_JSON: &str = include_str!("../fixtures/seven_node.json");

/// root (L3) -> m0 {a, b}, m1 {c, d}; leaves indexed a=0, b=1, c=2, d=3.
pub fn seven_node() -> Taxonomy {
    Taxonomy::from_json_str(SEVEN_NODE_JSON).unwrap()
}

/// Group of each leaf in the seven-node fixture.
pub fn seven_node_group(leaf: usize) -> usize {
    leaf / 2
}

/// Random tree with `levels` levels, 1..=max_children children per node.
pub fn random_taxonomy<R: Rng>(rng: &mut R, levels: usize, max_children: usize) -> Taxonomy {
    let mut nodes = vec![TaxonomyNode::new("n", None, levels)];
    let mut frontier = vec!["n".to_string()];
    for level in (1..levels).rev() {
        let mut next = Vec::new();
        for parent in &frontier {
            for c in 0..rng.gen_range(1..=max_children) {
                let id = format!("{parent}.{c}");
                nodes.push(TaxonomyNode::new(id.clone(), Some(parent), level));
                next.push(id);
            }
        }
        frontier = next;
    }
    Taxonomy::from_nodes(nodes).unwrap()
}

/// Parent at `level + 1` of every node at `level`, read from the node list.
pub fn parents_by_id(t: &Taxonomy, level: usize) -> Vec<usize> {
    let ids = t.level_ids(level).unwrap();
    let above = t.level_ids(level + 1).unwrap();
    ids.iter()
        .map(|id| {
            let node = t.nodes().iter().find(|n| &n.id == id).unwrap();
            let parent = node.parent.as_ref().unwrap();
            above.iter().position(|a| a == parent).unwrap()
        })
        .collect()
}

/// `1 - prod(1 - p)` over each parent's children.
pub fn complement_product(values: &[f64], parents: &[usize], num_parents: usize) -> Vec<f64> {
    let mut miss = vec![1.0; num_parents];
    for (v, &p) in values.iter().zip(parents) {
        miss[p] *= 1.0 - v;
    }
    miss.into_iter().map(|m| 1.0 - m).collect()
}

pub fn clamped_ln(x: f64) -> f64 {
    x.max(1e-12).ln()
}

/// Reference single-level detection pipeline: per-image class-wise greedy
/// NMS, score floor, per-image cap, greedy IoU matching and 101-point AP.
pub struct ReferenceMap {
    pub nms_iou: f64,
    pub score_floor: f64,
    pub max_dets: usize,
    pub thresholds: Vec<f64>,
}

fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let iy = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.width * a.height + b.width * b.height - inter)
}

fn ref_ap(tp: &[bool], n_gt: usize) -> f64 {
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    let mut hits = 0.0;
    for (i, &m) in tp.iter().enumerate() {
        if m {
            hits += 1.0;
        }
        prec.push(hits / (i + 1) as f64);
        rec.push(hits / n_gt as f64);
    }
    let mut ap = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let best = rec
            .iter()
            .zip(&prec)
            .filter(|(rc, _)| **rc >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        ap += best;
    }
    ap / 101.0
}

impl ReferenceMap {
    pub fn map(&self, dets: &[DetBox], gts: &[GtBox], num_classes: usize) -> f64 {
        let mut images: Vec<&str> = dets.iter().map(|d| d.image_id.as_str()).collect();
        images.sort();
        images.dedup();
        // (class, image, bbox, score)
        let mut kept: Vec<(usize, String, BBox, f64)> = Vec::new();
        for img in images {
            let mut per_image = Vec::new();
            for c in 0..num_classes {
                let mut cands: Vec<(BBox, f64)> = dets
                    .iter()
                    .filter(|d| d.image_id == img)
                    .map(|d| (d.bbox, d.leaf_scores[c]))
                    .filter(|&(_, s)| s >= self.score_floor && s > 0.0)
                    .collect();
                cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                let mut keep: Vec<(BBox, f64)> = Vec::new();
                for (b, s) in cands {
                    if keep.iter().all(|(k, _)| ref_iou(k, &b) <= self.nms_iou) {
                        keep.push((b, s));
                    }
                }
                per_image.extend(keep.into_iter().map(|(b, s)| (c, b, s)));
            }
            per_image.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
            per_image.truncate(self.max_dets);
            kept.extend(per_image.into_iter().map(|(c, b, s)| (c, img.to_string(), b, s)));
        }

        let mut total = 0.0;
        let mut classes = 0;
        for c in 0..num_classes {
            let class_gts: Vec<&GtBox> = gts.iter().filter(|g| g.leaf_label == c).collect();
            if class_gts.is_empty() {
                continue;
            }
            let mut class_dets: Vec<&(usize, String, BBox, f64)> =
                kept.iter().filter(|k| k.0 == c).collect();
            class_dets.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap());
            let mut ap_sum = 0.0;
            for &thr in &self.thresholds {
                let mut used: HashMap<usize, bool> = HashMap::new();
                let tp: Vec<bool> = class_dets
                    .iter()
                    .map(|(_, img, b, _)| {
                        let mut best: Option<(usize, f64)> = None;
                        for (gi, g) in class_gts.iter().enumerate() {
                            if &g.image_id != img || used.contains_key(&gi) {
                                continue;
                            }
                            let o = ref_iou(b, &g.bbox);
                            if o >= thr && best.is_none_or(|(_, bo)| o > bo) {
                                best = Some((gi, o));
                            }
                        }
                        match best {
                            Some((gi, _)) => {
                                used.insert(gi, true);
                                true
                            }
                            None => false,
                        }
                    })
                    .collect();
                ap_sum += ref_ap(&tp, class_gts.len());
            }
            total += ap_sum / self.thresholds.len() as f64;
            classes += 1;
        }
        total / classes as f64
    }
}
