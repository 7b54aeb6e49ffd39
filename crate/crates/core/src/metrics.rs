//! Evaluation measures over a ranked id list.
//!
//! * precision@k: fraction of the top `k` results sharing at least
//!   `ceil(|query tags| / 4)` tags with the query.
//! * fairness ratio@k: `count(second) / (count(first) + count(second))` over
//!   the top `k`; results outside both groups are ignored, results in both
//!   count once in each tally. `0.5` is optimal.
//! * entropy@k: Shannon entropy (natural log) of the group-count
//!   distribution, bounded by `ln G`.
//! * Student-t confidence intervals over per-query values.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::catalog::{Catalog, EmbeddingItem};
use crate::error::{Error, Result};

/// Default result size for evaluation and tuning.
pub const DEFAULT_K: usize = 10;

/// Precision value plus the cutoff actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionAtK {
    /// `None` when the query has no tags or there are no results.
    pub value: Option<f64>,
    /// `min(k, results.len())`.
    pub effective_k: usize,
    /// True when fewer than `k` results were available.
    pub clamped: bool,
}

/// Minimum number of shared tags for a result to count as relevant.
pub fn tag_match_threshold(query_tags: usize) -> usize {
    query_tags.div_ceil(4)
}

fn shared_tags(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.intersection(b).count()
}

fn top<S: AsRef<str>>(ids: &[S], k: usize) -> &[S] {
    &ids[..k.min(ids.len())]
}

pub fn precision_at_k<S: AsRef<str>>(
    query: &EmbeddingItem,
    results: &[S],
    catalog: &Catalog,
    k: usize,
) -> Result<PrecisionAtK> {
    let head = top(results, k);
    let effective_k = head.len();
    let clamped = effective_k < k;
    if query.tags.is_empty() || effective_k == 0 {
        return Ok(PrecisionAtK { value: None, effective_k, clamped });
    }
    let need = tag_match_threshold(query.tags.len());
    let mut hits = 0usize;
    for id in head {
        let item = catalog.item(id.as_ref())?;
        if shared_tags(&query.tags, &item.tags) >= need {
            hits += 1;
        }
    }
    Ok(PrecisionAtK { value: Some(hits as f64 / effective_k as f64), effective_k, clamped })
}

/// Per-group membership counts over the top `k`, in mapping order.
pub fn group_counts<S: AsRef<str>>(results: &[S], catalog: &Catalog, k: usize) -> Result<Vec<(String, usize)>> {
    let groups = catalog.mapping().groups();
    let mut counts = alloc::vec![0usize; groups.len()];
    for id in top(results, k) {
        let item = catalog.item(id.as_ref())?;
        for (c, g) in counts.iter_mut().zip(groups) {
            if item.in_group(g) {
                *c += 1;
            }
        }
    }
    Ok(groups.iter().cloned().zip(counts).collect())
}

/// Share of `groups.1` among results in either group; `None` if neither
/// group appears in the top `k`.
pub fn fairness_ratio_at_k<S: AsRef<str>>(
    results: &[S],
    catalog: &Catalog,
    k: usize,
    groups: (&str, &str),
) -> Result<Option<f64>> {
    let mapping = catalog.mapping();
    mapping.require(groups.0)?;
    mapping.require(groups.1)?;
    if groups.0 == groups.1 {
        return Err(Error::InvalidParameter(String::from("fairness ratio needs two distinct groups")));
    }
    let (mut first, mut second) = (0usize, 0usize);
    for id in top(results, k) {
        let item = catalog.item(id.as_ref())?;
        first += usize::from(item.in_group(groups.0));
        second += usize::from(item.in_group(groups.1));
    }
    let total = first + second;
    Ok((total > 0).then(|| second as f64 / total as f64))
}

/// Shannon entropy (nats) of a count vector; `None` if all counts are zero.
pub fn entropy(counts: &[usize]) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log(p)
        })
        .sum();
    // -0.0 for a single populated group.
    Some(h.max(0.0))
}

pub fn entropy_at_k<S: AsRef<str>>(results: &[S], catalog: &Catalog, k: usize) -> Result<Option<f64>> {
    if catalog.mapping().groups().len() < 2 {
        return Err(Error::InvalidParameter(String::from("entropy needs at least two groups")));
    }
    let counts: Vec<usize> = group_counts(results, catalog, k)?.into_iter().map(|(_, c)| c).collect();
    Ok(entropy(&counts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEvaluation {
    pub query_id: String,
    pub k: usize,
    pub p_at_k: Option<f64>,
    pub fr_at_k: Option<f64>,
    pub entropy_at_k: Option<f64>,
    pub group_counts: Vec<(String, usize)>,
    pub clamped: bool,
}

/// Evaluates one result list. The fairness ratio uses `pair`, or the first
/// two declared groups when `pair` is `None`; it is left undefined when
/// fewer than two groups are declared.
pub fn evaluate_query<S: AsRef<str>>(
    query: &EmbeddingItem,
    results: &[S],
    catalog: &Catalog,
    k: usize,
    pair: Option<(&str, &str)>,
) -> Result<QueryEvaluation> {
    let precision = precision_at_k(query, results, catalog, k)?;
    let groups = catalog.mapping().groups();
    let pair = pair.or_else(|| (groups.len() >= 2).then(|| (groups[0].as_str(), groups[1].as_str())));
    let fr_at_k = match pair {
        Some(p) => fairness_ratio_at_k(results, catalog, k, p)?,
        None => None,
    };
    let counts = group_counts(results, catalog, k)?;
    let entropy_at_k =
        if groups.len() >= 2 { entropy(&counts.iter().map(|(_, c)| *c).collect::<Vec<_>>()) } else { None };
    Ok(QueryEvaluation {
        query_id: query.id.to_string(),
        k,
        p_at_k: precision.value,
        fr_at_k,
        entropy_at_k,
        group_counts: counts,
        clamped: precision.clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub n: usize,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Order-independent mean: values are summed in sorted order.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

/// `mean +- t_{(1+c)/2, n-1} * sd / sqrt(n)` with the sample standard
/// deviation.
pub fn t_confidence_interval(samples: &[f64], confidence: f64) -> Result<ConfidenceInterval> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("confidence {confidence} is outside (0, 1)")));
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { id: String::from("<samples>"), index });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Ok(ConfidenceInterval { mean: sorted[0], half_width: 0.0, confidence, n });
    }
    let m = sorted.iter().sum::<f64>() / n as f64;
    let ss: f64 = sorted.iter().map(|x| (x - m) * (x - m)).sum();
    let sd = libm::sqrt(ss / (n - 1) as f64);
    let half_width = if sd == 0.0 {
        0.0
    } else {
        student_t_quantile(0.5 * (1.0 + confidence), (n - 1) as f64) * sd / libm::sqrt(n as f64)
    };
    Ok(ConfidenceInterval { mean: m, half_width, confidence, n })
}

/// Continued fraction for the regularized incomplete beta function
/// (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF of Student's t, by bracketing and bisection.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0 && df > 0.0);
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    if p == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while student_t_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GroupMapping;
    use alloc::vec;

    fn catalog() -> Catalog {
        let mapping =
            GroupMapping::new(["man", "woman", "child"], [("man", "man"), ("woman", "woman"), ("kid", "child")])
                .unwrap();
        let mut emb = Vec::new();
        let mut tags = Vec::new();
        let spec: [(&str, &[&str]); 8] = [
            ("q", &["gym", "weights", "man", "sport"]),
            ("r1", &["gym", "coffee"]),
            ("r2", &["dog"]),
            ("m1", &["man", "gym"]),
            ("m2", &["man"]),
            ("w1", &["woman", "gym"]),
            ("both", &["man", "woman"]),
            ("k1", &["kid"]),
        ];
        for (id, t) in spec {
            emb.push((id.to_string(), vec![0.0]));
            tags.push((id.to_string(), t.to_vec()));
        }
        emb.push(("bare".to_string(), vec![0.0]));
        Catalog::from_records(emb, tags, mapping).unwrap()
    }

    #[test]
    fn precision_threshold_boundary() {
        let cat = catalog();
        let q = cat.item("q").unwrap();
        assert_eq!(tag_match_threshold(4), 1);
        assert_eq!(tag_match_threshold(5), 2);
        assert_eq!(tag_match_threshold(1), 1);
        let p = precision_at_k(q, &["r1", "r2"], &cat, 2).unwrap();
        assert_eq!(p.value, Some(0.5));
        assert!(!p.clamped);
        let p = precision_at_k(q, &["r1", "r2"], &cat, 10).unwrap();
        assert_eq!((p.value, p.effective_k, p.clamped), (Some(0.5), 2, true));
        let bare = cat.item("bare").unwrap();
        assert_eq!(precision_at_k(bare, &["r1"], &cat, 1).unwrap().value, None);
        assert!(precision_at_k(q, &["nope"], &cat, 1).is_err());
    }

    #[test]
    fn identical_tags_give_full_precision() {
        let cat = catalog();
        let m1 = cat.item("m1").unwrap();
        let ids = vec!["m1"; 10];
        assert_eq!(precision_at_k(m1, &ids, &cat, 10).unwrap().value, Some(1.0));
    }

    #[test]
    fn fairness_ratio_counts() {
        let cat = catalog();
        let pair = ("man", "woman");
        assert_eq!(fairness_ratio_at_k(&["m1", "m2", "m1"], &cat, 10, pair).unwrap(), Some(0.0));
        assert_eq!(fairness_ratio_at_k(&["m1", "w1"], &cat, 10, pair).unwrap(), Some(0.5));
        assert_eq!(fairness_ratio_at_k(&["r1", "k1"], &cat, 10, pair).unwrap(), None);
        // "both" counts once in each tally.
        assert_eq!(fairness_ratio_at_k(&["both", "m1"], &cat, 10, pair).unwrap(), Some(1.0 / 3.0));
        assert!(fairness_ratio_at_k(&["m1"], &cat, 1, ("man", "alien")).is_err());
        assert!(fairness_ratio_at_k(&["m1"], &cat, 1, ("man", "man")).is_err());
    }

    #[test]
    fn four_of_nine() {
        let mapping = GroupMapping::new(["man", "woman"], [("man", "man"), ("woman", "woman")]).unwrap();
        let ids: Vec<String> = (0..10).map(|i| alloc::format!("i{i}")).collect();
        let tags: Vec<(String, Vec<&str>)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                (
                    id.clone(),
                    vec![if i < 4 {
                        "woman"
                    } else if i < 9 {
                        "man"
                    } else {
                        "tree"
                    }],
                )
            })
            .collect();
        let cat = Catalog::from_records(ids.iter().map(|id| (id.clone(), vec![0.0])), tags, mapping).unwrap();
        let fr = fairness_ratio_at_k(&ids, &cat, 10, ("man", "woman")).unwrap().unwrap();
        assert!((fr - 4.0 / 9.0).abs() < 1e-15);
        let rev = fairness_ratio_at_k(&ids, &cat, 10, ("woman", "man")).unwrap().unwrap();
        assert_eq!(fr + rev, 1.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[5, 5]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(entropy(&[10, 0]), Some(0.0));
        assert_eq!(entropy(&[0, 0]), None);
        // -(0.2 ln 0.2 + 0.3 ln 0.3 + 0.5 ln 0.5)
        assert!((entropy(&[2, 3, 5]).unwrap() - 1.0296530140645737).abs() < 1e-12);
        let cat = catalog();
        let h = entropy_at_k(&["m1", "w1", "k1", "r1"], &cat, 10).unwrap().unwrap();
        assert!((h - libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluation_record() {
        let cat = catalog();
        let q = cat.item("q").unwrap();
        let ev = evaluate_query(q, &["m1", "w1", "r2"], &cat, 10, None).unwrap();
        assert_eq!(ev.p_at_k, Some(2.0 / 3.0));
        assert_eq!(ev.fr_at_k, Some(0.5));
        assert_eq!(ev.group_counts, vec![("man".into(), 1), ("woman".into(), 1), ("child".into(), 0)]);
        assert!(ev.clamped);
    }

    #[test]
    fn confidence_intervals() {
        let ci = t_confidence_interval(&[0.6; 5], 0.95).unwrap();
        assert_eq!((ci.mean, ci.half_width), (0.6, 0.0));
        let ci = t_confidence_interval(&[0.5, 0.6, 0.7], 0.95).unwrap();
        assert!((ci.mean - 0.6).abs() < 1e-12);
        assert!((ci.half_width - 0.2484).abs() < 1e-3);
        assert!(matches!(t_confidence_interval(&[1.0], 0.95), Err(Error::TooFewSamples { .. })));
        assert!(t_confidence_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn t_quantile_table_values() {
        // Two-sided 95% critical values from standard tables.
        for (df, t) in [(1.0, 12.706), (2.0, 4.303), (10.0, 2.228), (30.0, 2.042), (100.0, 1.984)] {
            assert!((student_t_quantile(0.975, df) - t).abs() < 1e-3, "df={df}");
        }
        assert_eq!(student_t_quantile(0.5, 3.0), 0.0);
        assert!((student_t_quantile(0.025, 2.0) + 4.303).abs() < 1e-3);
    }
}
