//! End-to-end experiments: query selection, train/test split, tuning on the
//! train queries and evaluation of the tuned lambda on the test queries.
//!
//! All randomness derives from `ExperimentSpec::seed`: each stage draws its
//! own seed with [`derive_seed`]. Queries are processed on the rayon pool;
//! results are collected in query order, so reports do not depend on thread
//! scheduling.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use fairrank_core::metrics::{mean, t_confidence_interval};
use fairrank_core::tuning::{evaluate_pool, query_pool, CurvePoint, DEFAULT_DEGRADATION, DEFAULT_GRID_SIZE};
use fairrank_core::{
    best_lambda_for_query, build_representations, evaluate_query, matched_fairness_lambda, Catalog, EmbeddingItem,
    Kernel, MatchedLambda, Metric, QueryEvaluation, RepresentationSet, RerankConfig, TuningConfig, TuningResult,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;

pub const STAGE_SPLIT: u64 = 1;
/// Representations for the `i`-th sampling fraction use stage `STAGE_REPS + i`.
pub const STAGE_REPS: u64 = 16;

/// Seed for one stage of a run, derived from the root seed.
pub fn derive_seed(root: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stage);
    rng.next_u64()
}

/// Which catalog items may serve as queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryFilter {
    /// Items with at least one group-mapped tag.
    AnyGroup,
    /// Items carrying any of these tags.
    AnyTag(Vec<String>),
    /// Members of one group.
    Group(String),
}

impl QueryFilter {
    pub fn matches(&self, item: &EmbeddingItem) -> bool {
        match self {
            QueryFilter::AnyGroup => !item.groups.is_empty(),
            QueryFilter::AnyTag(tags) => tags.iter().any(|t| item.tags.contains(&fairrank_core::normalize_tag(t))),
            QueryFilter::Group(g) => item.in_group(g),
        }
    }
}

/// Ids of the matching items, sorted.
pub fn select_queries(catalog: &Catalog, filter: &QueryFilter) -> Result<Vec<String>> {
    if let QueryFilter::Group(g) = filter {
        catalog.mapping().require(g)?;
    }
    let ids: Vec<String> = catalog.iter().filter(|it| filter.matches(it)).map(|it| it.id.clone()).collect();
    if ids.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Uniform sample of `train_size` queries without replacement; the rest form
/// the test set. Both halves keep the input order.
pub fn split_queries(queries: &[String], train_size: usize, seed: u64) -> Result<Split> {
    if train_size == 0 || train_size > queries.len() {
        return Err(Error::InvalidExperiment(format!("train size {train_size} must be in 1..={}", queries.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; queries.len()];
    for i in rand::seq::index::sample(&mut rng, queries.len(), train_size) {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = queries.iter().zip(in_train).partition(|(_, t)| *t);
    Ok(Split {
        train: train.into_iter().map(|(q, _)| q.clone()).collect(),
        test: test.into_iter().map(|(q, _)| q.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    KnnOnly,
    ClassicMmr,
    Fmmr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::KnnOnly => "knn",
            Method::ClassicMmr => "mmr",
            Method::Fmmr => "fmmr",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" | "knn_only" => Ok(Method::KnnOnly),
            "mmr" | "classic_mmr" => Ok(Method::ClassicMmr),
            "fmmr" => Ok(Method::Fmmr),
            _ => Err(Error::InvalidExperiment(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub query_filter: QueryFilter,
    pub train_size: usize,
    pub k: usize,
    pub pool_size: usize,
    pub metric: Metric,
    pub methods: Vec<Method>,
    pub sampling_fractions: Vec<f64>,
    pub degradation: f64,
    pub grid_size: usize,
    /// Adds a classic-MMR row whose lambda matches the train-set fr@k of the
    /// first FMMR row.
    pub matched_mmr: bool,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            query_filter: QueryFilter::AnyGroup,
            train_size: 100,
            k: 10,
            pool_size: 50,
            metric: Metric::Euclidean,
            methods: vec![Method::KnnOnly, Method::ClassicMmr, Method::Fmmr],
            sampling_fractions: vec![1.0],
            degradation: DEFAULT_DEGRADATION,
            grid_size: DEFAULT_GRID_SIZE,
            matched_mmr: false,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn tuning_config(&self, catalog: &Catalog) -> Result<TuningConfig> {
        let mut cfg = TuningConfig::for_catalog(catalog)?;
        cfg.grid_size = self.grid_size;
        cfg.degradation = self.degradation;
        cfg.k = self.k;
        cfg.pool_size = self.pool_size;
        cfg.metric = self.metric;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidExperiment("no methods selected".into()));
        }
        if self.methods.contains(&Method::Fmmr) && self.sampling_fractions.is_empty() {
            return Err(Error::InvalidExperiment("fmmr needs at least one sampling fraction".into()));
        }
        if self.matched_mmr && !self.methods.contains(&Method::Fmmr) {
            return Err(Error::InvalidExperiment("matching needs an fmmr row".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidExperiment(format!("confidence {} is outside (0, 1)", self.confidence)));
        }
        Ok(())
    }
}

fn resolve<'a>(catalog: &'a Catalog, ids: &[String]) -> Result<Vec<&'a EmbeddingItem>> {
    ids.iter().map(|id| catalog.item(id).map_err(Error::from)).collect()
}

/// Tunes every query in parallel and averages the per-query lambdas.
pub fn tune_queries(
    queries: &[&EmbeddingItem],
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    cfg: &TuningConfig,
    kernel: Kernel,
) -> Result<TuningResult> {
    let outcomes: Vec<_> = queries.par_iter().map(|q| best_lambda_for_query(q, catalog, reps, cfg, kernel)).collect();
    for (q, outcome) in queries.iter().zip(&outcomes) {
        match outcome {
            Err(fairrank_core::Error::UntaggedQuery(_)) | Ok(_) => {}
            Err(e) => return Err(Error::in_query(&q.id)(e.clone())),
        }
    }
    Ok(TuningResult::from_outcomes(outcomes)?)
}

/// Evaluates every query at `(lambda, kernel)`, or on the plain KNN pool
/// when `rerank` is `None`.
pub fn evaluate_queries(
    queries: &[&EmbeddingItem],
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    cfg: &TuningConfig,
    rerank: Option<(f64, Kernel)>,
) -> Result<Vec<QueryEvaluation>> {
    let pair = cfg.objective.pair();
    let rerank_cfg = rerank
        .map(|(lambda, kernel)| {
            RerankConfig::new(lambda, cfg.k, kernel)
                .map(|c| c.with_metric(cfg.metric).with_normalization(cfg.normalize))
        })
        .transpose()?;
    queries
        .par_iter()
        .map(|q| {
            let pool = query_pool(q, catalog, cfg.pool_size, cfg.metric)?;
            match &rerank_cfg {
                Some(rc) => evaluate_pool(q, &pool, catalog, reps, rc, pair).map(|(_, ev)| ev),
                None => evaluate_query(q, &pool.top_ids(cfg.k), catalog, cfg.k, pair),
            }
            .map_err(Error::in_query(&q.id))
        })
        .collect()
}

/// Mean and confidence half-width of the defined values of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: Option<f64>,
    pub half_width: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>, confidence: f64) -> Result<Self> {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        let half_width =
            if defined.len() >= 2 { Some(t_confidence_interval(&defined, confidence)?.half_width) } else { None };
        Ok(Self { mean: mean(&defined), half_width, n: defined.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub label: String,
    pub fraction: Option<f64>,
    pub lambda: f64,
    pub p_at_k: Summary,
    pub fr_at_k: Summary,
    pub entropy_at_k: Summary,
    pub queries: usize,
    /// Test queries whose p@k at `lambda` falls below `(1 - d)` times their
    /// p@k at lambda = 1; `None` for the plain KNN row.
    pub constraint_violations: Option<usize>,
    pub tuning: Option<TuningResult>,
    pub matched: Option<MatchedLambda>,
    pub evaluations: Vec<QueryEvaluation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub k: usize,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// One line per (row, test query).
    pub fn per_query_tsv(&self) -> String {
        let k = self.k;
        let mut out = format!("method\tfraction\tquery\tlambda\tp@{k}\tfr@{k}\tentropy@{k}\n");
        for row in &self.rows {
            for ev in &row.evaluations {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    row.label,
                    fmt_opt(row.fraction),
                    ev.query_id,
                    row.lambda,
                    fmt_opt(ev.p_at_k),
                    fmt_opt(ev.fr_at_k),
                    fmt_opt(ev.entropy_at_k)
                )
                .unwrap();
            }
        }
        out
    }

    /// One line per (tuned row, train query).
    pub fn tuning_tsv(&self) -> String {
        let k = self.k;
        let mut out = format!("method\tfraction\tquery\tlambda\tbinding\tp@{k}(1)\tp@{k}\tfr@{k}\n");
        for row in &self.rows {
            for t in row.tuning.iter().flat_map(|t| &t.per_query) {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    row.label,
                    fmt_opt(row.fraction),
                    t.query_id,
                    t.lambda,
                    t.constraint_binding,
                    fmt_opt(t.baseline.p_at_k),
                    fmt_opt(t.chosen.p_at_k),
                    fmt_opt(t.chosen.fr_at_k)
                )
                .unwrap();
            }
        }
        out
    }

    /// Aligned aggregate table over the test queries.
    pub fn aggregate_table(&self) -> String {
        let k = self.k;
        let header = [
            "method",
            "fraction",
            "lambda",
            &format!("p@{k}"),
            &format!("fr@{k}"),
            &format!("entropy@{k}"),
            "n",
            "violations",
        ]
        .map(String::from);
        let mut cells = vec![header.to_vec()];
        for row in &self.rows {
            cells.push(vec![
                row.label.clone(),
                row.fraction.map_or_else(|| "-".into(), |f| format!("{f}")),
                format!("{:.4}", row.lambda),
                fmt_summary(&row.p_at_k),
                fmt_summary(&row.fr_at_k),
                fmt_summary(&row.entropy_at_k),
                row.queries.to_string(),
                row.constraint_violations.map_or_else(|| "-".into(), |v| v.to_string()),
            ]);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = format!("# seed {} | train {} | test {}\n", self.seed, self.train.len(), self.test.len());
        for r in &cells {
            let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Writes `report.txt`, `per_query.tsv` and `tuning.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_file(&dir.join("report.txt"), &self.aggregate_table())?;
        io::write_file(&dir.join("per_query.tsv"), &self.per_query_tsv())?;
        io::write_file(&dir.join("tuning.tsv"), &self.tuning_tsv())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn fmt_summary(s: &Summary) -> String {
    match (s.mean, s.half_width) {
        (Some(m), Some(h)) => format!("{m:.4} ± {h:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "NA".into(),
    }
}

struct Context<'a> {
    catalog: &'a Catalog,
    spec: &'a ExperimentSpec,
    cfg: TuningConfig,
    train: Vec<&'a EmbeddingItem>,
    test: Vec<&'a EmbeddingItem>,
    test_baseline: Vec<QueryEvaluation>,
}

impl Context<'_> {
    fn row(
        &self,
        method: Method,
        label: &str,
        fraction: Option<f64>,
        reps: Option<&RepresentationSet>,
        rerank: Option<(f64, Kernel)>,
    ) -> Result<ReportRow> {
        let evaluations = evaluate_queries(&self.test, self.catalog, reps, &self.cfg, rerank)?;
        let c = self.spec.confidence;
        let floor = 1.0 - self.cfg.degradation;
        let constraint_violations = rerank.map(|_| {
            evaluations
                .iter()
                .zip(&self.test_baseline)
                .filter(|(e, b)| matches!((e.p_at_k, b.p_at_k), (Some(p), Some(p1)) if p < floor * p1 - 1e-12))
                .count()
        });
        Ok(ReportRow {
            method,
            label: label.to_string(),
            fraction,
            lambda: rerank.map_or(1.0, |(l, _)| l),
            p_at_k: Summary::of(evaluations.iter().map(|e| e.p_at_k), c)?,
            fr_at_k: Summary::of(evaluations.iter().map(|e| e.fr_at_k), c)?,
            entropy_at_k: Summary::of(evaluations.iter().map(|e| e.entropy_at_k), c)?,
            queries: evaluations.len(),
            constraint_violations,
            tuning: None,
            matched: None,
            evaluations,
        })
    }

    fn tuned_row(
        &self,
        method: Method,
        label: &str,
        fraction: Option<f64>,
        reps: Option<&RepresentationSet>,
        kernel: Kernel,
    ) -> Result<ReportRow> {
        let tuning = tune_queries(&self.train, self.catalog, reps, &self.cfg, kernel)?;
        let mut row = self.row(method, label, fraction, reps, Some((tuning.overall_lambda, kernel)))?;
        row.tuning = Some(tuning);
        Ok(row)
    }

    fn train_mean_fr(&self, reps: Option<&RepresentationSet>, lambda: f64, kernel: Kernel) -> Result<Option<f64>> {
        let evs = evaluate_queries(&self.train, self.catalog, reps, &self.cfg, Some((lambda, kernel)))?;
        Ok(mean(&evs.iter().filter_map(|e| e.fr_at_k).collect::<Vec<_>>()))
    }
}

/// Runs the full protocol on an in-memory catalog.
///
/// Rows appear in the order knn, mmr, one fmmr row per sampling fraction,
/// and finally the matched mmr row when requested.
pub fn run_experiment(catalog: &Catalog, spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let cfg = spec.tuning_config(catalog)?;
    let queries = select_queries(catalog, &spec.query_filter)?;
    let split = split_queries(&queries, spec.train_size, derive_seed(spec.seed, STAGE_SPLIT))?;
    let test = resolve(catalog, &split.test)?;
    let test_baseline = evaluate_queries(&test, catalog, None, &cfg, None)?;
    let ctx = Context { catalog, spec, cfg, train: resolve(catalog, &split.train)?, test, test_baseline };

    let mut rows = Vec::new();
    if spec.methods.contains(&Method::KnnOnly) {
        rows.push(ctx.row(Method::KnnOnly, "knn", None, None, None)?);
    }
    if spec.methods.contains(&Method::ClassicMmr) {
        rows.push(ctx.tuned_row(Method::ClassicMmr, "mmr", None, None, Kernel::ClassicMmr)?);
    }
    let mut first_fmmr: Option<(RepresentationSet, f64)> = None;
    if spec.methods.contains(&Method::Fmmr) {
        for (i, &fraction) in spec.sampling_fractions.iter().enumerate() {
            let reps = build_representations(catalog, fraction, derive_seed(spec.seed, STAGE_REPS + i as u64))?;
            let row = ctx.tuned_row(Method::Fmmr, "fmmr", Some(fraction), Some(&reps), Kernel::Fmmr)?;
            if first_fmmr.is_none() {
                first_fmmr = Some((reps, row.lambda));
            }
            rows.push(row);
        }
    }
    if spec.matched_mmr {
        let (reps, lambda) = first_fmmr.expect("validated: fmmr row present");
        let target = ctx
            .train_mean_fr(Some(&reps), lambda, Kernel::Fmmr)?
            .ok_or_else(|| Error::InvalidExperiment("fmmr fr@k is undefined on every train query".into()))?;
        let matched = matched_fairness_lambda(&ctx.train, catalog, &ctx.cfg, target)?;
        let mut row =
            ctx.row(Method::ClassicMmr, "mmr-matched", None, None, Some((matched.lambda, Kernel::ClassicMmr)))?;
        row.matched = Some(matched);
        rows.push(row);
    }
    Ok(Report { k: spec.k, seed: spec.seed, train: split.train, test: split.test, rows })
}

/// Mean of a curve statistic over the chosen points of a tuning run.
pub fn chosen_mean(tuning: &TuningResult, stat: impl Fn(&CurvePoint) -> Option<f64>) -> Option<f64> {
    mean(&tuning.per_query.iter().filter_map(|t| stat(&t.chosen)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_covering() {
        let qs: Vec<String> = (0..20).map(|i| format!("q{i:02}")).collect();
        let s = split_queries(&qs, 7, 3).unwrap();
        assert_eq!(s.train.len(), 7);
        assert_eq!(s.test.len(), 13);
        let mut all: Vec<_> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort();
        assert_eq!(all, qs);
        assert_eq!(split_queries(&qs, 7, 3).unwrap(), s);
        assert_ne!(split_queries(&qs, 7, 4).unwrap(), s);
        assert!(split_queries(&qs, 21, 3).is_err());
        assert!(split_queries(&qs, 0, 3).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(5, STAGE_SPLIT), derive_seed(5, STAGE_REPS));
        assert_eq!(derive_seed(5, STAGE_SPLIT), derive_seed(5, STAGE_SPLIT));
        assert_ne!(derive_seed(5, STAGE_SPLIT), derive_seed(6, STAGE_SPLIT));
    }

    #[test]
    fn method_names() {
        for m in [Method::KnnOnly, Method::ClassicMmr, Method::Fmmr] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("classic_mmr".parse::<Method>().unwrap(), Method::ClassicMmr);
        assert!("x".parse::<Method>().is_err());
    }

    #[test]
    fn summary_handles_small_samples() {
        let s = Summary::of([Some(0.5), None], 0.95).unwrap();
        assert_eq!((s.mean, s.half_width, s.n), (Some(0.5), None, 1));
        let s = Summary::of([Some(0.5), Some(0.6), Some(0.7)], 0.95).unwrap();
        assert!((s.half_width.unwrap() - 0.2484).abs() < 1e-3);
    }
}
