//! Window-and-rank comparison of two eigenvalue lists.
//!
//! The for-all-intervals clause is finitized: only intervals whose endpoints
//! are eigenvalues inside the window are tested. For finite lists this is
//! exhaustive, since rank counts change only at eigenvalues.

use serde::{Deserialize, Serialize};

use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSpectrum {
    pub tag: String,
    /// Eigenvalues inside the window.
    pub eigenvalues: Vec<f64>,
}

/// Eigenvalues merged within the clustering tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub window: (f64, f64),
    pub cluster_tol: f64,
    pub spectra: [TaggedSpectrum; 2],
    pub clusters: [Vec<Cluster>; 2],
    /// `(i, j)`: cluster `i` of the first list paired with cluster `j` of the second.
    pub pairing: Vec<(usize, usize)>,
    pub paired_distances: Vec<f64>,
    /// Unpaired clusters of each list.
    pub unpaired: [Vec<usize>; 2],
    /// Largest paired distance, and for unpaired clusters the distance to the
    /// nearest eigenvalue of the other full list. Infinite (written `"inf"`)
    /// when a cluster has no counterpart at all.
    #[serde(with = "extended_real")]
    pub hausdorff_like: f64,
    pub rank_check: bool,
    pub offending_interval: Option<(f64, f64)>,
}

/// JSON has no infinity; write it as a string.
pub(crate) mod extended_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            v if v.is_finite() => s.serialize_f64(v),
            v if v > 0.0 => s.serialize_str("inf"),
            v if v < 0.0 => s.serialize_str("-inf"),
            _ => s.serialize_str("nan"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number or inf, got {other}"))),
            },
        }
    }
}

fn cluster(values: &[f64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((sum, n, last)) if v - *last <= tol => {
                *sum += v;
                *n += 1;
                *last = v;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter().map(|(s, n, _)| Cluster { center: s / n as f64, multiplicity: n }).collect()
}

fn nearest(values: &[f64], x: f64) -> f64 {
    values.iter().map(|v| (v - x).abs()).fold(f64::INFINITY, f64::min)
}

fn count(values: &[f64], lo: f64, hi: f64) -> usize {
    values.partition_point(|&v| v <= hi) - values.partition_point(|&v| v < lo)
}

/// Order-preserving matching of `min(|a|, |b|)` pairs minimizing the largest
/// distance, then the total distance.
fn pair(a: &[f64], b: &[f64]) -> Vec<(usize, usize)> {
    let (na, nb) = (a.len(), b.len());
    let swap = na > nb;
    let (s, l) = if swap { (b, a) } else { (a, b) };
    let (ns, nl) = (s.len(), l.len());
    if ns == 0 {
        return Vec::new();
    }
    // cost[i][j]: best matching of s[..i] into l[..j] with all of s[..i] used.
    let inf = (f64::INFINITY, f64::INFINITY);
    let mut cost = vec![vec![inf; nl + 1]; ns + 1];
    let mut take = vec![vec![false; nl + 1]; ns + 1];
    for c in cost[0].iter_mut() {
        *c = (0.0, 0.0);
    }
    let better = |x: (f64, f64), y: (f64, f64)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1);
    for i in 1..=ns {
        for j in i..=nl {
            let skip = cost[i][j - 1];
            let prev = cost[i - 1][j - 1];
            let d = (s[i - 1] - l[j - 1]).abs();
            let used = (prev.0.max(d), prev.1 + d);
            if j > i && !better(used, skip) {
                cost[i][j] = skip;
            } else {
                cost[i][j] = used;
                take[i][j] = true;
            }
        }
    }
    let mut out = Vec::with_capacity(ns);
    let (mut i, mut j) = (ns, nl);
    while i > 0 {
        if take[i][j] {
            out.push((i - 1, j - 1));
            i -= 1;
        }
        j -= 1;
    }
    out.reverse();
    if swap {
        out.into_iter().map(|(x, y)| (y, x)).collect()
    } else {
        out
    }
}

fn window_values(s: &SpectrumResult, (lo, hi): (f64, f64)) -> Vec<f64> {
    s.eigenvalues.iter().copied().filter(|v| (lo..=hi).contains(v)).collect()
}

/// Every interval `L = [p, q]` with `p ≤ q` taken from eigenvalues in the
/// window must satisfy `rank_L(T_i) ≤ rank_K(T_j)` with `K = L ± tol`,
/// ranks counted on the full lists.
fn rank_violation(a: &[f64], b: &[f64], wa: &[f64], wb: &[f64], tol: f64) -> Option<(f64, f64)> {
    let mut ends: Vec<f64> = wa.iter().chain(wb).copied().collect();
    ends.sort_by(f64::total_cmp);
    ends.dedup();
    // Shortest intervals first, so the reported witness is minimal.
    for width in 0..ends.len() {
        for i in 0..ends.len() - width {
            let (p, q) = (ends[i], ends[i + width]);
            if count(a, p, q) > count(b, p - tol, q + tol) || count(b, p, q) > count(a, p - tol, q + tol) {
                return Some((p, q));
            }
        }
    }
    None
}

pub fn compare_spectra(a: &SpectrumResult, b: &SpectrumResult, window: (f64, f64), cluster_tol: f64) -> Result<ComparisonReport> {
    if !(window.0 <= window.1) || !(cluster_tol >= 0.0) {
        return Err(Error::Precondition(format!("invalid window {window:?} or cluster tolerance {cluster_tol}")));
    }
    for s in [a, b] {
        if s.eigenvalues.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Precondition(format!("{} eigenvalues are not sorted", s.method)));
        }
    }
    let (wa, wb) = (window_values(a, window), window_values(b, window));
    let (ca, cb) = (cluster(&wa, cluster_tol), cluster(&wb, cluster_tol));
    let centers = |c: &[Cluster]| c.iter().map(|c| c.center).collect::<Vec<_>>();
    let (xa, xb) = (centers(&ca), centers(&cb));
    let pairing = pair(&xa, &xb);
    let paired_distances: Vec<f64> = pairing.iter().map(|&(i, j)| (xa[i] - xb[j]).abs()).collect();
    let unpaired_of = |n: usize, side: usize| -> Vec<usize> {
        (0..n).filter(|k| !pairing.iter().any(|p| if side == 0 { p.0 == *k } else { p.1 == *k })).collect()
    };
    let unpaired = [unpaired_of(xa.len(), 0), unpaired_of(xb.len(), 1)];
    let mut hausdorff_like = paired_distances.iter().copied().fold(0.0, f64::max);
    for &i in &unpaired[0] {
        hausdorff_like = hausdorff_like.max(nearest(&b.eigenvalues, xa[i]));
    }
    for &j in &unpaired[1] {
        hausdorff_like = hausdorff_like.max(nearest(&a.eigenvalues, xb[j]));
    }
    let offending_interval = rank_violation(&a.eigenvalues, &b.eigenvalues, &wa, &wb, cluster_tol);
    Ok(ComparisonReport {
        window,
        cluster_tol,
        spectra: [
            TaggedSpectrum { tag: a.method.clone(), eigenvalues: wa },
            TaggedSpectrum { tag: b.method.clone(), eigenvalues: wb },
        ],
        clusters: [ca, cb],
        pairing,
        paired_distances,
        unpaired,
        hausdorff_like,
        rank_check: offending_interval.is_none(),
        offending_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(tag: &str, v: &[f64]) -> SpectrumResult {
        SpectrumResult::new(tag, 0.1, Vec::new(), v.to_vec(), vec![0.0; v.len()])
    }

    #[test]
    fn identical_lists() {
        let a = spec("a", &[0.1, 0.5, 0.5, 0.9]);
        let r = compare_spectra(&a, &a, (0.0, 1.0), 1e-9).unwrap();
        assert_eq!(r.hausdorff_like, 0.0);
        assert!(r.rank_check);
        assert_eq!(r.clusters[0][1].multiplicity, 2);
        assert_eq!(r.pairing, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn small_offset() {
        let eps = 3e-4;
        let a = spec("a", &[0.2, 0.4, 0.7]);
        let b = spec("b", &[0.2 + eps, 0.4 + eps, 0.7 + eps]);
        let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-3).unwrap();
        assert!((r.hausdorff_like - eps).abs() < 1e-15);
        assert!(r.rank_check);
        // A tolerance below the offset breaks the rank clause.
        let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-4).unwrap();
        assert!(!r.rank_check);
        assert!(r.offending_interval.is_some());
    }

    #[test]
    fn unequal_counts_report_offending_interval() {
        let a = spec("a", &[0.2, 0.4]);
        let b = spec("b", &[0.2, 0.3, 0.4]);
        let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-6).unwrap();
        assert!(!r.rank_check);
        assert_eq!(r.offending_interval, Some((0.3, 0.3)));
        assert_eq!(r.unpaired[1], vec![1]);
        assert!((r.hausdorff_like - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_trivially_consistent() {
        let a = spec("a", &[2.0]);
        let b = spec("b", &[]);
        let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-6).unwrap();
        assert_eq!(r.hausdorff_like, 0.0);
        assert!(r.rank_check);
        let r = compare_spectra(&a, &b, (0.0, 3.0), 1e-6).unwrap();
        assert_eq!(r.hausdorff_like, f64::INFINITY);
        assert!(!r.rank_check);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains(r#""hausdorff_like":"inf""#));
        let back: ComparisonReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let a = spec("a", &[0.3, 0.2]);
        assert!(compare_spectra(&a, &a, (0.0, 1.0), 1e-6).is_err());
    }

    fn sorted(v: Vec<f64>) -> Vec<f64> {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v
    }

    proptest! {
        #[test]
        fn rank_check_is_symmetric(a in prop::collection::vec(0.0f64..1.0, 0..8), b in prop::collection::vec(0.0f64..1.0, 0..8),
                                   tol in 0.0f64..0.1) {
            let (a, b) = (spec("a", &sorted(a)), spec("b", &sorted(b)));
            let ab = compare_spectra(&a, &b, (0.2, 0.8), tol).unwrap();
            let ba = compare_spectra(&b, &a, (0.2, 0.8), tol).unwrap();
            prop_assert_eq!(ab.rank_check, ba.rank_check);
        }

        #[test]
        fn pairing_preserves_order(a in prop::collection::vec(0.0f64..1.0, 0..8), b in prop::collection::vec(0.0f64..1.0, 0..8)) {
            let (a, b) = (spec("a", &sorted(a)), spec("b", &sorted(b)));
            let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-3).unwrap();
            prop_assert_eq!(r.pairing.len(), r.clusters[0].len().min(r.clusters[1].len()));
            for w in r.pairing.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
            }
        }

        #[test]
        fn uniform_shift_below_tolerance_passes(v in prop::collection::vec(0.1f64..0.9, 1..8), eps in 0.0f64..1e-3) {
            let v = sorted(v);
            let a = spec("a", &v);
            let b = spec("b", &v.iter().map(|x| x + eps).collect::<Vec<_>>());
            let r = compare_spectra(&a, &b, (0.0, 1.0), 1e-3).unwrap();
            prop_assert!(r.rank_check);
            prop_assert!(r.hausdorff_like <= eps + 1e-12);
        }
    }
}
