//! Invariants of the constrained grid search.

use fairrank_core::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Corpus {
    catalog: Catalog,
    reps: RepresentationSet,
}

/// Items carry one or two topic tags and optionally a group tag; every item
/// has at least one tag so each can serve as a query.
fn corpus() -> impl Strategy<Value = Corpus> {
    (8usize..30, 1usize..=4).prop_flat_map(|(n, dim)| {
        prop::collection::vec(
            (prop::collection::vec(-4.0f64..4.0, dim), 0usize..4, prop::option::of(0usize..4), 0usize..3),
            n,
        )
        .prop_map(move |rows| {
            let mapping = GroupMapping::new(["g0", "g1"], [("g0", "g0"), ("g1", "g1")]).unwrap();
            let mut embeddings = Vec::new();
            let mut tags = Vec::new();
            for (i, (mut v, t1, t2, g)) in rows.into_iter().enumerate() {
                let id = format!("i{i:02}");
                // Keep both groups non-empty and give them distinct locations.
                let g = if i < 2 { i } else { g };
                if g < 2 {
                    v[0] += if g == 0 { -3.0 } else { 3.0 };
                }
                let mut t = vec![format!("t{t1}")];
                t.extend(t2.map(|x| format!("t{x}")));
                if g < 2 {
                    t.push(format!("g{g}"));
                }
                embeddings.push((id.clone(), v));
                tags.push((id, t));
            }
            let catalog = Catalog::from_records(embeddings, tags, mapping).unwrap();
            let reps = build_representations(&catalog, 1.0, 0).unwrap();
            Corpus { catalog, reps }
        })
    })
}

fn config(catalog: &Catalog, degradation: f64) -> TuningConfig {
    let mut cfg = TuningConfig::for_catalog(catalog).unwrap();
    cfg.grid_size = 10;
    cfg.k = 4;
    cfg.pool_size = 10;
    cfg.degradation = degradation;
    cfg
}

fn badness(pt: &CurvePoint) -> f64 {
    (pt.fr_at_k.unwrap_or(f64::NAN) - 0.5).abs()
}

fn kernels(c: &Corpus) -> [(Kernel, Option<&RepresentationSet>); 2] {
    [(Kernel::ClassicMmr, None), (Kernel::Fmmr, Some(&c.reps))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn chosen_lambda_satisfies_constraint(c in corpus(), d in 0.0f64..=1.0, q in 0usize..8) {
        let query = c.catalog.iter().nth(q % c.catalog.len()).unwrap();
        let cfg = config(&c.catalog, d);
        for (kernel, reps) in kernels(&c) {
            let t = best_lambda_for_query(query, &c.catalog, reps, &cfg, kernel).unwrap();
            let p1 = t.baseline.p_at_k.unwrap();
            if t.constraint_binding {
                prop_assert_eq!(t.lambda, 1.0);
                prop_assert_eq!(t.chosen, t.baseline);
            } else {
                prop_assert!(cfg.grid().contains(&t.lambda));
                prop_assert!(t.chosen.p_at_k.unwrap() >= (1.0 - d) * p1 - 1e-12);
                // No feasible grid point is strictly fairer.
                for pt in &t.curve {
                    if pt.p_at_k.unwrap() >= (1.0 - d) * p1 - 1e-12 && pt.fr_at_k.is_some() {
                        prop_assert!(badness(pt) >= badness(&t.chosen) - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn looser_budget_never_hurts_fairness(c in corpus(), d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0, q in 0usize..8) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let query = c.catalog.iter().nth(q % c.catalog.len()).unwrap();
        for (kernel, reps) in kernels(&c) {
            let a = best_lambda_for_query(query, &c.catalog, reps, &config(&c.catalog, lo), kernel).unwrap();
            let b = best_lambda_for_query(query, &c.catalog, reps, &config(&c.catalog, hi), kernel).unwrap();
            if !a.constraint_binding {
                prop_assert!(!b.constraint_binding);
                prop_assert!(badness(&b.chosen) <= badness(&a.chosen) + 1e-12);
            }
        }
    }

    #[test]
    fn full_budget_is_unconstrained_optimum(c in corpus(), q in 0usize..8) {
        let query = c.catalog.iter().nth(q % c.catalog.len()).unwrap();
        let cfg = config(&c.catalog, 1.0);
        for (kernel, reps) in kernels(&c) {
            let t = best_lambda_for_query(query, &c.catalog, reps, &cfg, kernel).unwrap();
            let scored: Vec<&CurvePoint> = t.curve.iter().filter(|p| p.fr_at_k.is_some()).collect();
            if scored.is_empty() {
                prop_assert!(t.constraint_binding);
                continue;
            }
            let min = scored.iter().map(|p| badness(p)).fold(f64::INFINITY, f64::min);
            let expect = scored.iter().rev().find(|p| badness(p) <= min + 1e-12).unwrap().lambda;
            prop_assert_eq!(t.lambda, expect);
        }
    }

    #[test]
    fn single_query_overall_equals_its_own(c in corpus(), q in 0usize..8, d in 0.0f64..=1.0) {
        let query = c.catalog.iter().nth(q % c.catalog.len()).unwrap();
        let cfg = config(&c.catalog, d);
        let own = best_lambda_for_query(query, &c.catalog, Some(&c.reps), &cfg, Kernel::Fmmr).unwrap();
        let all = tune(&[query], &c.catalog, Some(&c.reps), &cfg, Kernel::Fmmr).unwrap();
        prop_assert_eq!(all.overall_lambda, own.lambda);
        prop_assert_eq!(&all.per_query[0], &own);
    }
}

/// Two groups on a line; the query's own group is nearest, so relevance
/// and fairness pull in opposite directions.
fn line_corpus() -> Catalog {
    let mut embeddings = Vec::new();
    let mut tags = Vec::new();
    for i in 0..6 {
        embeddings.push((format!("a{i}"), vec![i as f64 * 0.1]));
        tags.push((format!("a{i}"), vec!["topic", "g0"]));
        embeddings.push((format!("b{i}"), vec![10.0 + i as f64 * 0.1]));
        tags.push((format!("b{i}"), vec!["other", "g1"]));
    }
    let mapping = GroupMapping::new(["g0", "g1"], [("g0", "g0"), ("g1", "g1")]).unwrap();
    Catalog::from_records(embeddings, tags, mapping).unwrap()
}

#[test]
fn zero_budget_keeps_baseline_precision() {
    let cat = line_corpus();
    let reps = build_representations(&cat, 1.0, 0).unwrap();
    let mut cfg = config(&cat, 0.0);
    cfg.k = 4;
    let q = cat.item("a0").unwrap();
    let t = best_lambda_for_query(q, &cat, Some(&reps), &cfg, Kernel::Fmmr).unwrap();
    assert_eq!(t.baseline.p_at_k, Some(1.0));
    assert_eq!(t.chosen.p_at_k, Some(1.0));
    assert_eq!(t.baseline.fr_at_k, Some(0.0));

    cfg.degradation = 0.5;
    let t = best_lambda_for_query(q, &cat, Some(&reps), &cfg, Kernel::Fmmr).unwrap();
    assert_eq!(t.chosen.p_at_k, Some(0.5));
    assert_eq!(t.chosen.fr_at_k, Some(0.5));
    assert!(t.lambda < 1.0);
}

#[test]
fn overall_lambda_is_mean_of_per_query() {
    let cat = line_corpus();
    let reps = build_representations(&cat, 1.0, 0).unwrap();
    let cfg = config(&cat, 0.5);
    let queries: Vec<&EmbeddingItem> = cat.iter().collect();
    let res = tune(&queries, &cat, Some(&reps), &cfg, Kernel::Fmmr).unwrap();
    let mean = res.per_query.iter().map(|t| t.lambda).sum::<f64>() / res.per_query.len() as f64;
    assert!((res.overall_lambda - mean).abs() < 1e-12);
    assert_eq!(res.per_query.len(), 12);
}
