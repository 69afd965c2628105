//! Brute-force Hamming search over packed codes plus retrieval metrics.

use ndarray::Array2;
use serde::Serialize;
use std::path::Path;

use crate::codec::PackedCodeSet;
use crate::error::{Error, Result};

/// Multi-hot relevance labels; query i and db item j are relevant iff their
/// label rows share at least one active class.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub query_labels: Array2<u8>,
    pub db_labels: Array2<u8>,
}

impl GroundTruth {
    pub fn new(query_labels: Array2<u8>, db_labels: Array2<u8>) -> Result<GroundTruth> {
        if query_labels.ncols() != db_labels.ncols() {
            return Err(Error::Dimension(format!(
                "label class counts differ: {} vs {}",
                query_labels.ncols(),
                db_labels.ncols()
            )));
        }
        Ok(GroundTruth {
            query_labels,
            db_labels,
        })
    }

    pub fn relevant(&self, query: usize, db: usize) -> bool {
        self.query_labels
            .row(query)
            .iter()
            .zip(self.db_labels.row(db).iter())
            .any(|(&a, &b)| a == 1 && b == 1)
    }

    /// Total relevant db items for one query.
    pub fn relevant_count(&self, query: usize) -> usize {
        (0..self.db_labels.nrows())
            .filter(|&j| self.relevant(query, j))
            .count()
    }
}

/// Database indices sorted by ascending Hamming distance to query `qi`;
/// ties broken by ascending database index.
pub fn rank(queries: &PackedCodeSet, qi: usize, db: &PackedCodeSet) -> Result<Vec<usize>> {
    if queries.bits() != db.bits() {
        return Err(Error::Dimension(format!(
            "code widths differ: {} vs {}",
            queries.bits(),
            db.bits()
        )));
    }
    let mut order: Vec<usize> = (0..db.count()).collect();
    let dist: Vec<u32> = order.iter().map(|&j| queries.hamming(qi, db, j)).collect();
    order.sort_by_key(|&j| (dist[j], j));
    Ok(order)
}

pub fn rank_all(queries: &PackedCodeSet, db: &PackedCodeSet) -> Result<Vec<Vec<usize>>> {
    (0..queries.count()).map(|qi| rank(queries, qi, db)).collect()
}

/// AP@k per query = sum over relevant ranks i<=k of rel(i)*Precision(i),
/// divided by min(R, k). Queries with R = 0 are excluded from the mean.
pub fn map_at_k(ranks: &[Vec<usize>], gt: &GroundTruth, k: usize) -> Result<f64> {
    let per_query = average_precisions(ranks, gt, k);
    let valid: Vec<f64> = per_query.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::UndefinedMetric(
            "every query has zero relevant database items".into(),
        ));
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

/// Per-query AP@k; None marks queries with no relevant db items.
pub fn average_precisions(ranks: &[Vec<usize>], gt: &GroundTruth, k: usize) -> Vec<Option<f64>> {
    ranks
        .iter()
        .enumerate()
        .map(|(qi, order)| {
            let total_relevant = gt.relevant_count(qi);
            if total_relevant == 0 {
                return None;
            }
            let mut hits = 0usize;
            let mut ap = 0.0f64;
            for (pos, &j) in order.iter().take(k).enumerate() {
                if gt.relevant(qi, j) {
                    hits += 1;
                    ap += hits as f64 / (pos + 1) as f64;
                }
            }
            Some(ap / total_relevant.min(k) as f64)
        })
        .collect()
}

/// Mean fraction of relevant items in each query's top k.
pub fn precision_at_k(ranks: &[Vec<usize>], gt: &GroundTruth, k: usize) -> Result<f64> {
    if ranks.is_empty() || k == 0 {
        return Err(Error::UndefinedMetric("empty query set or k = 0".into()));
    }
    let mut total = 0.0f64;
    for (qi, order) in ranks.iter().enumerate() {
        let take = order.len().min(k);
        if take == 0 {
            return Err(Error::UndefinedMetric("empty database".into()));
        }
        let hits = order
            .iter()
            .take(take)
            .filter(|&&j| gt.relevant(qi, j))
            .count();
        total += hits as f64 / take as f64;
    }
    Ok(total / ranks.len() as f64)
}

/// Mean precision of the Hamming ball of the given radius around each
/// query; an empty ball contributes precision 0.
pub fn precision_at_radius(
    queries: &PackedCodeSet,
    db: &PackedCodeSet,
    gt: &GroundTruth,
    radius: u32,
) -> Result<f64> {
    if queries.count() == 0 {
        return Err(Error::UndefinedMetric("empty query set".into()));
    }
    if queries.bits() != db.bits() {
        return Err(Error::Dimension(format!(
            "code widths differ: {} vs {}",
            queries.bits(),
            db.bits()
        )));
    }
    let mut total = 0.0f64;
    for qi in 0..queries.count() {
        let mut retrieved = 0usize;
        let mut hits = 0usize;
        for j in 0..db.count() {
            if queries.hamming(qi, db, j) <= radius {
                retrieved += 1;
                if gt.relevant(qi, j) {
                    hits += 1;
                }
            }
        }
        if retrieved > 0 {
            total += hits as f64 / retrieved as f64;
        }
    }
    Ok(total / queries.count() as f64)
}

pub const PR_LEVELS: usize = 100;

/// Precision averaged across queries at 100 evenly spaced recall levels
/// (1/100 .. 1), with max-precision-to-the-right interpolation. Queries
/// without relevant items are skipped.
pub fn pr_curve(ranks: &[Vec<usize>], gt: &GroundTruth) -> Result<Vec<(f64, f64)>> {
    let mut sums = vec![0.0f64; PR_LEVELS];
    let mut counted = 0usize;
    for (qi, order) in ranks.iter().enumerate() {
        let total_relevant = gt.relevant_count(qi);
        if total_relevant == 0 {
            continue;
        }
        counted += 1;
        // precision at each rank where recall increases
        let mut hits = 0usize;
        let mut recall_prec: Vec<(f64, f64)> = Vec::with_capacity(total_relevant);
        for (pos, &j) in order.iter().enumerate() {
            if gt.relevant(qi, j) {
                hits += 1;
                recall_prec.push((
                    hits as f64 / total_relevant as f64,
                    hits as f64 / (pos + 1) as f64,
                ));
            }
        }
        // interpolated precision: max precision at any recall >= level
        let mut best = 0.0f64;
        let mut interp = vec![0.0f64; recall_prec.len()];
        for (idx, &(_, p)) in recall_prec.iter().enumerate().rev() {
            best = best.max(p);
            interp[idx] = best;
        }
        for (level_idx, slot) in sums.iter_mut().enumerate() {
            let level = (level_idx + 1) as f64 / PR_LEVELS as f64;
            let found = recall_prec
                .iter()
                .position(|&(r, _)| r >= level - 1e-12)
                .map(|idx| interp[idx])
                .unwrap_or(0.0);
            *slot += found;
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric(
            "every query has zero relevant database items".into(),
        ));
    }
    Ok(sums
        .iter()
        .enumerate()
        .map(|(i, &s)| ((i + 1) as f64 / PR_LEVELS as f64, s / counted as f64))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalReport {
    pub map_at_k: f64,
    pub k: usize,
    pub p_at_k: f64,
    pub p_at_h2: f64,
    pub pr_points: Vec<(f64, f64)>,
    pub per_query: Option<Vec<Option<f64>>>,
}

/// Runs the full evaluation: ranking, MAP@k, P@k, P@H<=2, and P-R curve.
pub fn evaluate(
    queries: &PackedCodeSet,
    db: &PackedCodeSet,
    gt: &GroundTruth,
    k: usize,
    keep_per_query: bool,
) -> Result<RetrievalReport> {
    if gt.query_labels.nrows() != queries.count() || gt.db_labels.nrows() != db.count() {
        return Err(Error::Dimension(format!(
            "label rows ({}, {}) do not match code counts ({}, {})",
            gt.query_labels.nrows(),
            gt.db_labels.nrows(),
            queries.count(),
            db.count()
        )));
    }
    let ranks = rank_all(queries, db)?;
    let per_query = average_precisions(&ranks, gt, k);
    Ok(RetrievalReport {
        map_at_k: map_at_k(&ranks, gt, k)?,
        k,
        p_at_k: precision_at_k(&ranks, gt, k)?,
        p_at_h2: precision_at_radius(queries, db, gt, 2)?,
        pr_points: pr_curve(&ranks, gt)?,
        per_query: keep_per_query.then_some(per_query),
    })
}

impl RetrievalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_pr_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("recall,precision\n");
        for &(r, p) in &self.pr_points {
            out.push_str(&format!("{r},{p}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
