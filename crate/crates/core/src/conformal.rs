//! Calibrated prediction intervals for edge weights.
//!
//! Four methods: the identical-interval baseline (`Basic`), raw quantile
//! regression intervals (`QR`), split-conformal corrected quantile
//! intervals (`CQR`), and width-reweighted conformal intervals (`CQR-ERC`).
//!
//! All functions are pure over immutable inputs and trivially parallel
//! across calibration permutations.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gae::EdgePrediction;
use crate::graph::Graph;
use crate::numerics::check_alpha;

/// Width floor for the ERC score denominator; keeps degenerate zero-width
/// quantile pairs from blowing up the reweighting.
pub const ERC_WIDTH_FLOOR: f64 = 1e-6;

/// Interval construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Basic,
    Qr,
    Cqr,
    CqrErc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Basic, Method::Qr, Method::Cqr, Method::CqrErc];

    pub fn label(self) -> &'static str {
        match self {
            Method::Basic => "Basic",
            Method::Qr => "QR",
            Method::Cqr => "CQR",
            Method::CqrErc => "CQR-ERC",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(Method::Basic),
            "qr" => Ok(Method::Qr),
            "cqr" => Ok(Method::Cqr),
            "cqr-erc" | "erc" | "cqrerc" => Ok(Method::CqrErc),
            other => Err(CoreError::Config(format!(
                "unknown method {other:?} (basic, qr, cqr, cqr-erc)"
            ))),
        }
    }
}

/// Conformity scores over the calibration edges, in calibration-edge order.
#[derive(Debug, Clone)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(CoreError::Validation(
                "conformity scores must be finite".into(),
            ));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// Per-edge prediction intervals with the calibration metadata that
/// produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalSet {
    pub method: Method,
    pub alpha: f64,
    /// Conformal correction; absent for Basic/QR.
    pub q: Option<f64>,
    /// Basic-baseline scaling; absent for the other methods.
    pub lambda: Option<f64>,
    edges: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalSet {
    fn from_rows(
        method: Method,
        alpha: f64,
        q: Option<f64>,
        lambda: Option<f64>,
        mut rows: Vec<(usize, f64, f64)>,
    ) -> Self {
        rows.sort_by_key(|r| r.0);
        Self {
            method,
            alpha,
            q,
            lambda,
            edges: rows.iter().map(|r| r.0).collect(),
            lo: rows.iter().map(|r| r.1).collect(),
            hi: rows.iter().map(|r| r.2).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// `(lo, hi)` for an edge index; error when not covered.
    pub fn lookup(&self, edge: usize) -> Result<(f64, f64)> {
        let i = self
            .edges
            .binary_search(&edge)
            .map_err(|_| CoreError::Missing(format!("interval for edge {edge}")))?;
        Ok((self.lo[i], self.hi[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.edges
            .iter()
            .zip(self.lo.iter())
            .zip(self.hi.iter())
            .map(|((&e, &l), &h)| (e, l, h))
    }

    /// Inclusive membership; an inverted (empty) interval contains nothing.
    pub fn covers(&self, edge: usize, value: f64) -> Result<bool> {
        let (lo, hi) = self.lookup(edge)?;
        Ok(lo <= value && value <= hi)
    }

    /// Interval length `hi - lo` per edge, in edge order.
    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(self.hi.iter()).map(|(l, h)| h - l).collect()
    }

    /// Merge interval sets covering disjoint edge sets (for composing
    /// degenerate known-weight intervals with predicted test intervals).
    pub fn union(&self, other: &IntervalSet) -> Result<IntervalSet> {
        let mut rows: Vec<(usize, f64, f64)> = self.iter().map(|(e, l, h)| (e, l, h)).collect();
        for (e, l, h) in other.iter() {
            if self.edges.binary_search(&e).is_ok() {
                return Err(CoreError::Validation(format!(
                    "interval union overlaps on edge {e}"
                )));
            }
            rows.push((e, l, h));
        }
        Ok(IntervalSet::from_rows(
            self.method,
            self.alpha,
            self.q,
            self.lambda,
            rows,
        ))
    }

    /// Zero-width intervals at the observed weights of the given edges
    /// (edges whose weight is known need no prediction).
    pub fn degenerate_known(
        g: &Graph,
        edges: &[usize],
        method: Method,
        alpha: f64,
    ) -> Result<IntervalSet> {
        let rows = edges
            .iter()
            .map(|&e| {
                let w = g.require_weight(e)?;
                Ok((e, w, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IntervalSet::from_rows(method, alpha, None, None, rows))
    }

    /// CSV serialization: `edge_src,edge_dst,lo,hi,method,alpha`.
    pub fn to_csv(&self, g: &Graph) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["edge_src", "edge_dst", "lo", "hi", "method", "alpha"])?;
        for (e, lo, hi) in self.iter() {
            let (u, v) = g.edge(e);
            w.write_record([
                u.to_string(),
                v.to_string(),
                lo.to_string(),
                hi.to_string(),
                self.method.label().to_string(),
                self.alpha.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CoreError::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn gather_true_weights(g: &Graph, edges: &[usize]) -> Result<Vec<f64>> {
    edges.iter().map(|&e| g.require_weight(e)).collect()
}

/// CQR conformity scores on the calibration edges:
/// `V_e = max(lo_e - W_e, W_e - hi_e)`. Negative inside the interval,
/// positive outside.
pub fn cqr_scores(pred: &EdgePrediction, g: &Graph, calib: &[usize]) -> Result<ScoreVector> {
    let weights = gather_true_weights(g, calib)?;
    let mut scores = Vec::with_capacity(calib.len());
    for (&e, &w) in calib.iter().zip(&weights) {
        let (_, lo, hi) = pred.lookup(e)?;
        scores.push((lo - w).max(w - hi));
    }
    ScoreVector::new(scores)
}

/// ERC conformity scores: the CQR score divided by the per-edge interval
/// width `|hi - lo|`, floored at [`ERC_WIDTH_FLOOR`].
pub fn erc_scores(pred: &EdgePrediction, g: &Graph, calib: &[usize]) -> Result<ScoreVector> {
    let weights = gather_true_weights(g, calib)?;
    let mut scores = Vec::with_capacity(calib.len());
    for (&e, &w) in calib.iter().zip(&weights) {
        let (_, lo, hi) = pred.lookup(e)?;
        let u = (hi - lo).abs().max(ERC_WIDTH_FLOOR);
        scores.push(((lo - w) / u).max((w - hi) / u));
    }
    ScoreVector::new(scores)
}

/// Finite-sample conformal quantile: the k-th smallest score with
/// `k = ceil((n + 1) (1 - alpha))`. Returns positive infinity when
/// `k > n` (intervals become unbounded).
pub fn conformal_quantile(scores: &ScoreVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = scores.len();
    if n == 0 {
        return Err(CoreError::Validation(
            "cannot calibrate on an empty score vector".into(),
        ));
    }
    let k = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    if k > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.as_slice().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(sorted[k - 1])
}

/// CQR intervals on the test edges: `[lo_e - q, hi_e + q]`.
pub fn cqr_intervals(
    pred: &EdgePrediction,
    q: f64,
    test: &[usize],
    alpha: f64,
) -> Result<IntervalSet> {
    let rows = test
        .iter()
        .map(|&e| {
            let (_, lo, hi) = pred.lookup(e)?;
            Ok((e, lo - q, hi + q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalSet::from_rows(
        Method::Cqr,
        alpha,
        Some(q),
        None,
        rows,
    ))
}

/// ERC intervals on the test edges: `[lo_e - q u_e, hi_e + q u_e]` with
/// `u_e` the floored interval width.
pub fn erc_intervals(
    pred: &EdgePrediction,
    q: f64,
    test: &[usize],
    alpha: f64,
) -> Result<IntervalSet> {
    let rows = test
        .iter()
        .map(|&e| {
            let (_, lo, hi) = pred.lookup(e)?;
            let u = (hi - lo).abs().max(ERC_WIDTH_FLOOR);
            Ok((e, lo - q * u, hi + q * u))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalSet::from_rows(
        Method::CqrErc,
        alpha,
        Some(q),
        None,
        rows,
    ))
}

/// Raw quantile-regression intervals: the model's `(lo, hi)` uncorrected.
pub fn qr_intervals(pred: &EdgePrediction, test: &[usize], alpha: f64) -> Result<IntervalSet> {
    let rows = test
        .iter()
        .map(|&e| {
            let (_, lo, hi) = pred.lookup(e)?;
            Ok((e, lo, hi))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalSet::from_rows(Method::Qr, alpha, None, None, rows))
}

/// Summary statistics of the training weights that parameterize the Basic
/// baseline interval.
fn train_weight_stats(g: &Graph, train: &[usize]) -> Result<(f64, f64, f64)> {
    if train.is_empty() {
        return Err(CoreError::Validation(
            "Basic baseline needs a nonempty training set".into(),
        ));
    }
    let weights = gather_true_weights(g, train)?;
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, min, max))
}

/// Identical-interval baseline: every edge gets
/// `[mean + lambda (min - mean), mean + lambda (max - mean)]` over the
/// training weights.
pub fn basic_intervals(
    g: &Graph,
    train: &[usize],
    lambda: f64,
    edges: &[usize],
    alpha: f64,
) -> Result<IntervalSet> {
    if lambda < 0.0 {
        return Err(CoreError::Config(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let (mean, min, max) = train_weight_stats(g, train)?;
    let lo = mean + lambda * (min - mean);
    let hi = mean + lambda * (max - mean);
    let rows = edges.iter().map(|&e| (e, lo, hi)).collect();
    Ok(IntervalSet::from_rows(
        Method::Basic,
        alpha,
        None,
        Some(lambda),
        rows,
    ))
}

/// Evaluation preset of the Basic baseline: the identical interval
/// `[0, mean]` over the training weights.
pub fn basic_zero_to_mean_intervals(
    g: &Graph,
    train: &[usize],
    edges: &[usize],
    alpha: f64,
) -> Result<IntervalSet> {
    let (mean, _, _) = train_weight_stats(g, train)?;
    let rows = edges.iter().map(|&e| (e, 0.0, mean)).collect();
    Ok(IntervalSet::from_rows(
        Method::Basic,
        alpha,
        None,
        None,
        rows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn pred_for(edges: &[usize], triples: &[(f64, f64, f64)]) -> EdgePrediction {
        let rows = edges
            .iter()
            .zip(triples)
            .map(|(&e, &(m, l, h))| (e, m, l, h))
            .collect();
        EdgePrediction::new(rows)
    }

    fn graph_with_weights(weights: &[f64]) -> Graph {
        // simple chain with one edge per weight
        let n = weights.len() + 1;
        let edges: Vec<(usize, usize)> = (0..weights.len()).map(|i| (i, i + 1)).collect();
        Graph::new(
            n,
            Matrix::zeros(n, 2),
            edges,
            weights.iter().map(|&w| Some(w)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cqr_score_unit_cases() {
        // interval [2, 5]: outside above, inside, outside below
        let g = graph_with_weights(&[6.0, 3.0, 1.0]);
        let pred = pred_for(&[0, 1, 2], &[(0.0, 2.0, 5.0); 3]);
        let v = cqr_scores(&pred, &g, &[0, 1, 2]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, -1.0, 1.0]);
    }

    #[test]
    fn erc_score_unit_case() {
        let g = graph_with_weights(&[6.0]);
        let pred = pred_for(&[0], &[(0.0, 2.0, 5.0)]);
        let v = erc_scores(&pred, &g, &[0]).unwrap();
        assert!((v.as_slice()[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn erc_score_zero_width_uses_floor() {
        let g = graph_with_weights(&[3.0]);
        let pred = pred_for(&[0], &[(0.0, 3.0, 3.0)]);
        let v = erc_scores(&pred, &g, &[0]).unwrap();
        assert!(v.as_slice()[0].is_finite());
        assert_eq!(v.as_slice()[0], 0.0 / ERC_WIDTH_FLOOR);
    }

    #[test]
    fn quantile_k_arithmetic() {
        // scores 1..=99, alpha 0.05: k = ceil(100 * 0.95) = 95
        let scores = ScoreVector::new((1..=99).map(|i| i as f64).collect()).unwrap();
        assert_eq!(conformal_quantile(&scores, 0.05).unwrap(), 95.0);
    }

    #[test]
    fn quantile_small_case_brute_force() {
        let scores = ScoreVector::new(vec![3.0, 1.0, 2.0]).unwrap();
        // k = ceil(4 * 0.5) = 2 -> second smallest = 2
        assert_eq!(conformal_quantile(&scores, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn quantile_overflows_to_infinity() {
        let scores = ScoreVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        // k = ceil(4 * 0.95) = 4 > 3
        assert_eq!(conformal_quantile(&scores, 0.05).unwrap(), f64::INFINITY);
    }

    #[test]
    fn quantile_empty_is_error() {
        let scores = ScoreVector::new(vec![]).unwrap();
        assert!(conformal_quantile(&scores, 0.5).is_err());
    }

    #[test]
    fn cqr_interval_construction() {
        let pred = pred_for(&[0], &[(0.0, 2.0, 5.0)]);
        let set = cqr_intervals(&pred, 1.0, &[0], 0.05).unwrap();
        assert_eq!(set.lookup(0).unwrap(), (1.0, 6.0));
    }

    #[test]
    fn q_zero_equals_qr() {
        let pred = pred_for(&[0, 1], &[(0.0, 2.0, 5.0), (0.0, -1.0, 4.0)]);
        let cqr = cqr_intervals(&pred, 0.0, &[0, 1], 0.05).unwrap();
        let qr = qr_intervals(&pred, &[0, 1], 0.05).unwrap();
        for e in [0usize, 1] {
            assert_eq!(cqr.lookup(e).unwrap(), qr.lookup(e).unwrap());
        }
    }

    #[test]
    fn basic_interval_arithmetic() {
        let g = graph_with_weights(&[1.0, 2.0, 3.0]);
        let train = [0, 1, 2];
        // lambda 0.5 over weights {1,2,3}: [1.5, 2.5]
        let set = basic_intervals(&g, &train, 0.5, &[0], 0.05).unwrap();
        assert_eq!(set.lookup(0).unwrap(), (1.5, 2.5));
        // lambda 0 collapses to the mean
        let set = basic_intervals(&g, &train, 0.0, &[0], 0.05).unwrap();
        assert_eq!(set.lookup(0).unwrap(), (2.0, 2.0));
        // lambda 1 spans min..max
        let set = basic_intervals(&g, &train, 1.0, &[0], 0.05).unwrap();
        assert_eq!(set.lookup(0).unwrap(), (1.0, 3.0));
        // negative lambda rejected
        assert!(basic_intervals(&g, &train, -0.1, &[0], 0.05).is_err());
    }

    #[test]
    fn zero_to_mean_preset() {
        let g = graph_with_weights(&[2.0, 4.0]);
        let set = basic_zero_to_mean_intervals(&g, &[0, 1], &[0, 1], 0.05).unwrap();
        assert_eq!(set.lookup(1).unwrap(), (0.0, 3.0));
    }

    // CQR width = QR width + 2q, exactly, on dyadic inputs.
    #[test]
    fn width_identity_exact() {
        let pred = pred_for(
            &[0, 1, 2],
            &[(0.0, 2.25, 5.5), (0.0, -1.5, 0.75), (0.0, 0.0, 4.0)],
        );
        let q = 0.75;
        let qr = qr_intervals(&pred, &[0, 1, 2], 0.05).unwrap();
        let cqr = cqr_intervals(&pred, q, &[0, 1, 2], 0.05).unwrap();
        for ((_, ql, qh), (_, cl, ch)) in qr.iter().zip(cqr.iter()) {
            assert_eq!(ch - cl, (qh - ql) + 2.0 * q);
        }
    }

    // With all widths equal to a power of two the ERC path reproduces CQR
    // bit for bit: scores scale by the common width and intervals coincide.
    #[test]
    fn erc_reduces_to_cqr_on_equal_widths() {
        let width = 4.0;
        let g = graph_with_weights(&[3.0, 7.5, 0.5, 5.0]);
        let triples: Vec<(f64, f64, f64)> = [1.0, 4.0, 2.0, 0.0]
            .iter()
            .map(|&lo| (0.0, lo, lo + width))
            .collect();
        let pred = pred_for(&[0, 1, 2, 3], &triples);
        let calib = [0, 1, 2, 3];
        let alpha = 0.5;

        let v_cqr = cqr_scores(&pred, &g, &calib).unwrap();
        let v_erc = erc_scores(&pred, &g, &calib).unwrap();
        for (a, b) in v_cqr.as_slice().iter().zip(v_erc.as_slice()) {
            assert_eq!(*a / width, *b);
        }
        let q_cqr = conformal_quantile(&v_cqr, alpha).unwrap();
        let q_erc = conformal_quantile(&v_erc, alpha).unwrap();
        let i_cqr = cqr_intervals(&pred, q_cqr, &calib, alpha).unwrap();
        let i_erc = erc_intervals(&pred, q_erc, &calib, alpha).unwrap();
        for ((_, al, ah), (_, bl, bh)) in i_cqr.iter().zip(i_erc.iter()) {
            assert_eq!(al, bl);
            assert_eq!(ah, bh);
        }
    }

    proptest! {
        // q is nondecreasing in coverage level 1 - alpha.
        #[test]
        fn quantile_monotone_in_coverage(
            scores in proptest::collection::vec(-50.0f64..50.0, 3..200),
            a1 in 0.01f64..0.99,
            a2 in 0.01f64..0.99,
        ) {
            let (lo_alpha, hi_alpha) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let v = ScoreVector::new(scores).unwrap();
            // lower alpha -> higher coverage -> q at least as large
            let q_hi_cov = conformal_quantile(&v, lo_alpha).unwrap();
            let q_lo_cov = conformal_quantile(&v, hi_alpha).unwrap();
            prop_assert!(q_hi_cov >= q_lo_cov);
        }

        // Width identity within float tolerance on arbitrary inputs.
        #[test]
        fn width_identity_tolerance(
            lo in -10.0f64..10.0,
            span in 0.0f64..10.0,
            q in -2.0f64..5.0,
        ) {
            let pred = pred_for(&[0], &[(0.0, lo, lo + span)]);
            let qr = qr_intervals(&pred, &[0], 0.1).unwrap();
            let cqr = cqr_intervals(&pred, q, &[0], 0.1).unwrap();
            let (ql, qh) = qr.lookup(0).unwrap();
            let (cl, ch) = cqr.lookup(0).unwrap();
            prop_assert!(((ch - cl) - ((qh - ql) + 2.0 * q)).abs() < 1e-9);
        }
    }
}
