use fairrank::core::{knn_for_item, Metric};
use fairrank::{generate_synthetic, select_queries, Error, QueryFilter, SyntheticSpec};

#[test]
fn group_lists_follow_the_assignment_log() {
    let spec = SyntheticSpec { groupless_count: 20, ..SyntheticSpec::two_groups(40, 8, 10.0) };
    let corpus = generate_synthetic(&spec, 4).unwrap();
    assert_eq!(corpus.catalog.len(), 100);
    for (g, name) in ["g0", "g1"].iter().enumerate() {
        let listed: Vec<&str> = corpus.catalog.items_in_group(name).unwrap().iter().map(|it| it.id.as_str()).collect();
        let logged: Vec<&str> = corpus.members(g).collect();
        assert_eq!(listed.len(), 40);
        assert_eq!(listed, logged);
    }
}

#[test]
fn query_selection_counts_grouped_items() {
    let spec = SyntheticSpec { groupless_count: 40, ..SyntheticSpec::two_groups(30, 8, 10.0) };
    let corpus = generate_synthetic(&spec, 9).unwrap();
    let ids = select_queries(&corpus.catalog, &QueryFilter::AnyGroup).unwrap();
    let logged: Vec<&str> = corpus.log.iter().filter(|a| a.group.is_some()).map(|a| a.id.as_str()).collect();
    assert_eq!(ids.len(), 60);
    assert_eq!(ids, logged);
    let none = select_queries(&corpus.catalog, &QueryFilter::AnyTag(vec!["absent".into()]));
    assert!(matches!(none, Err(Error::EmptySelection)));
    let topic = select_queries(&corpus.catalog, &QueryFilter::AnyTag(vec!["Topic0-1".into()])).unwrap();
    assert_eq!(topic.len(), 100);
    assert!(select_queries(&corpus.catalog, &QueryFilter::Group("g9".into())).is_err());
}

#[test]
fn zero_groupless_means_everything_is_grouped() {
    let corpus = generate_synthetic(&SyntheticSpec::two_groups(50, 8, 10.0), 1).unwrap();
    assert!(corpus.catalog.iter().all(|it| it.groups.len() == 1));
    assert!(corpus.log.iter().all(|a| a.group.is_some()));
}

#[test]
fn nearest_neighbour_purity_at_separation_ten() {
    for seed in 0..3 {
        let corpus = generate_synthetic(&SyntheticSpec::two_groups(50, 8, 10.0), seed).unwrap();
        let cat = &corpus.catalog;
        let pure = cat
            .iter()
            .filter(|it| {
                let nn = knn_for_item(cat, &it.id, 1, Metric::Euclidean).unwrap();
                cat.item(&nn.candidates()[0].id).unwrap().groups == it.groups
            })
            .count();
        assert!(pure as f64 / cat.len() as f64 >= 0.99, "seed {seed}: purity {pure}/100");
    }
}

#[test]
fn generation_is_seeded() {
    let spec = SyntheticSpec::desk_scale();
    let a = generate_synthetic(&spec, 7).unwrap();
    assert_eq!(a.catalog, generate_synthetic(&spec, 7).unwrap().catalog);
    assert_ne!(a.catalog, generate_synthetic(&spec, 8).unwrap().catalog);
}

#[test]
fn topics_drive_precision_tags() {
    let corpus = generate_synthetic(&SyntheticSpec::desk_scale(), 2).unwrap();
    let item = corpus.catalog.item("item-0000").unwrap();
    let tags: Vec<&str> = item.tags.iter().map(String::as_str).collect();
    assert_eq!(tags, ["g0", "topic0-0", "topic0-1", "topic0-2", "topic0-3"]);
    let groupless = corpus.catalog.item("item-0499").unwrap();
    assert!(groupless.groups.is_empty());
    assert_eq!(groupless.tags.len(), 4);
}
