mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use taxoforge::config::{HttpPolicy, Rank};
use taxoforge::fetch::HttpClient;
use taxoforge::mock::{MockResponse, MockServer, TaxonomyFixture};
use taxoforge::taxonomy::{LivingStatus, SpeciesApi, TaxonomyError};

fn client() -> HttpClient {
    HttpClient::new(HttpPolicy {
        retries_5xx: 0,
        backoff_base_ms: 1,
        ..HttpPolicy::default()
    })
}

fn anseriformes() -> TaxonomyFixture {
    TaxonomyFixture::load(&common::fixture("taxonomy_anseriformes.json")).unwrap()
}

#[test]
fn anseriformes_has_21_families() {
    let server = MockServer::start();
    let base = server.serve_taxonomy("/v1/species/", anseriformes());
    let api = SpeciesApi::new(&base, 500).unwrap();
    let kids = api.fetch_children(&client(), 1108).unwrap();
    assert_eq!(kids.len(), 21);
    assert_eq!(kids[0].key, 2986);
    assert_eq!(kids[0].scientific_name, "Anatidae");
    assert_eq!(kids[0].rank, Rank::Family);
    assert!(kids.iter().all(|k| k.parent_key == Some(1108)));
    assert_eq!(server.hits("/v1/species/1108/children?limit=500&offset=0"), 1);
}

#[test]
fn leaf_has_no_children() {
    let server = MockServer::start();
    let base = server.serve_taxonomy("/v1/species/", anseriformes());
    let api = SpeciesApi::new(&base, 500).unwrap();
    assert!(api.fetch_children(&client(), 2498027).unwrap().is_empty());
}

#[test]
fn three_pages_of_two() {
    let mut fx = TaxonomyFixture::default();
    fx.add(1, "Root", "ORDER", None);
    for k in 0..6 {
        fx.add(10 + k, &format!("Fam{k}"), "FAMILY", Some(1));
    }
    let server = MockServer::start();
    let base = server.serve_taxonomy("/api/", fx);
    let api = SpeciesApi::new(&base, 2).unwrap();
    let kids = api.fetch_children(&client(), 1).unwrap();
    let keys: Vec<u64> = kids.iter().map(|k| k.key).collect();
    assert_eq!(keys, [10, 11, 12, 13, 14, 15]);
    for off in [0, 2, 4] {
        assert_eq!(server.hits(&format!("/api/1/children?limit=2&offset={off}")), 1);
    }
}

/// class -> 2 orders -> {2, 3} species
fn eight_node_tree() -> TaxonomyFixture {
    let mut fx = TaxonomyFixture::default();
    fx.add(1, "Aves", "CLASS", None)
        .add(2, "Anseriformes", "ORDER", Some(1))
        .add(3, "Passeriformes", "ORDER", Some(1))
        .add(20, "Anas crecca", "SPECIES", Some(2))
        .add(21, "Anas acuta", "SPECIES", Some(2))
        .add(30, "Parus major", "SPECIES", Some(3))
        .add(31, "Turdus merula", "SPECIES", Some(3))
        .add(32, "Corvus corax", "SPECIES", Some(3));
    fx
}

#[test]
fn eight_node_tree_gives_five_species() {
    let server = MockServer::start();
    let base = server.serve_taxonomy("/api/", eight_node_tree());
    let api = SpeciesApi::new(&base, 500).unwrap();
    let entries = api.collect_species(&client(), 1, Rank::Species, Rank::Order, None).unwrap();
    let got: Vec<(u64, &str, &str)> = entries
        .iter()
        .map(|e| (e.species_key, e.species_name.as_str(), e.group_name.as_str()))
        .collect();
    assert_eq!(
        got,
        [
            (20, "Anas crecca", "Anseriformes"),
            (21, "Anas acuta", "Anseriformes"),
            (30, "Parus major", "Passeriformes"),
            (31, "Turdus merula", "Passeriformes"),
            (32, "Corvus corax", "Passeriformes"),
        ]
    );
    assert!(entries.iter().all(|e| e.status == LivingStatus::Unknown));
    // every node fetched once as a record root or listed once as children
    for key in [1, 2, 3] {
        assert_eq!(server.hits(&format!("/api/{key}/children?limit=500&offset=0")), 1);
    }
    for key in [20, 21, 30, 31, 32] {
        assert_eq!(server.hits(&format!("/api/{key}/children?limit=500&offset=0")), 0);
    }
}

#[test]
fn root_species_needs_group() {
    let server = MockServer::start();
    let base = server.serve_taxonomy("/api/", eight_node_tree());
    let api = SpeciesApi::new(&base, 500).unwrap();
    let err = api.collect_species(&client(), 30, Rank::Species, Rank::Order, None).unwrap_err();
    assert!(matches!(err, TaxonomyError::GroupMissing(30)));
    let ok = api
        .collect_species(&client(), 30, Rank::Species, Rank::Order, Some("Passeriformes"))
        .unwrap();
    assert_eq!(ok.len(), 1);
    assert_eq!(ok[0].group_name, "Passeriformes");
}

#[test]
fn species_without_group_ancestor() {
    let mut fx = TaxonomyFixture::default();
    fx.add(1, "Aves", "CLASS", None).add(5, "Orphan", "SPECIES", Some(1));
    let server = MockServer::start();
    let base = server.serve_taxonomy("/api/", fx);
    let api = SpeciesApi::new(&base, 500).unwrap();
    let err = api.collect_species(&client(), 1, Rank::Species, Rank::Order, None).unwrap_err();
    assert!(matches!(err, TaxonomyError::GroupMissing(5)));
}

#[test]
fn skipped_rank_still_grouped() {
    // order -> species directly under a family-less genus
    let mut fx = TaxonomyFixture::default();
    fx.add(1, "Aves", "CLASS", None)
        .add(2, "Gruiformes", "ORDER", Some(1))
        .add(3, "Grus", "GENUS", Some(2))
        .add(4, "Grus grus", "SPECIES", Some(3));
    let server = MockServer::start();
    let base = server.serve_taxonomy("/api/", fx);
    let api = SpeciesApi::new(&base, 500).unwrap();
    let e = api.collect_species(&client(), 1, Rank::Species, Rank::Order, None).unwrap();
    assert_eq!(e[0].group_name, "Gruiformes");
}

#[test]
fn status_from_profiles() {
    let server = MockServer::start();
    let base = server.serve_taxonomy("/v1/species/", anseriformes());
    let api = SpeciesApi::new(&base, 500).unwrap();
    let c = client();
    assert_eq!(api.resolve_status(&c, 2498027).unwrap(), LivingStatus::Alive);
    assert_eq!(api.resolve_status(&c, 2498112).unwrap(), LivingStatus::Extinct);
    assert_eq!(api.resolve_status(&c, 2986).unwrap(), LivingStatus::Unknown);
}

#[test]
fn http_errors_propagate() {
    let server = MockServer::start();
    let api = SpeciesApi::new(&server.url("/nothing/"), 500).unwrap();
    let err = api.fetch_children(&client(), 1).unwrap_err();
    match err {
        TaxonomyError::Http(e) => assert_eq!(e.status(), Some(404)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_body_is_decode_error() {
    let server = MockServer::start();
    server.route(
        "/api/1/children?limit=500&offset=0",
        MockResponse::json(&serde_json::json!({"results": 3})),
    );
    let api = SpeciesApi::new(&server.url("/api/"), 500).unwrap();
    assert!(matches!(api.fetch_children(&client(), 1), Err(TaxonomyError::Decode { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Random trees: every page size returns the single-page result, each
    /// node's children are requested once, and all grouped species appear.
    #[test]
    fn traversal_properties(shape in proptest::collection::vec((1usize..4, 0usize..5), 1..4), page in 1u32..6) {
        let mut fx = TaxonomyFixture::default();
        fx.add(1, "Root", "CLASS", None);
        let mut expected = Vec::new();
        let mut key = 100;
        for (oi, (genera, per_genus)) in shape.iter().enumerate() {
            let order = 10 + oi as u64;
            fx.add(order, &format!("Order{oi}"), "ORDER", Some(1));
            for _ in 0..*genera {
                key += 1;
                let genus = key;
                fx.add(genus, &format!("Genus{genus}"), "GENUS", Some(order));
                for _ in 0..*per_genus {
                    key += 1;
                    fx.add(key, &format!("Sp{key}"), "SPECIES", Some(genus));
                    expected.push((key, format!("Order{oi}")));
                }
            }
        }
        let server = MockServer::start();
        let base = server.serve_taxonomy("/api/", fx.clone());
        let c = client();
        let small = SpeciesApi::new(&base, page).unwrap();
        let big = SpeciesApi::new(&base, 500).unwrap();
        let a = small.collect_species(&c, 1, Rank::Species, Rank::Order, None).unwrap();
        let b = big.collect_species(&c, 1, Rank::Species, Rank::Order, None).unwrap();
        prop_assert_eq!(&a, &b);
        let got: Vec<(u64, String)> = a.iter().map(|e| (e.species_key, e.group_name.clone())).collect();
        prop_assert_eq!(got, expected);

        let mut first_pages: HashMap<u64, usize> = HashMap::new();
        for line in server.request_log() {
            if line.contains(&format!("/children?limit={page}&offset=0")) {
                let k: u64 = line.trim_start_matches("/api/").split('/').next().unwrap().parse().unwrap();
                *first_pages.entry(k).or_default() += 1;
            }
        }
        prop_assert!(first_pages.values().all(|&n| n == 1));
    }
}
