mod common;

use std::fs;
use std::sync::atomic::AtomicBool;

use common::*;
use taxoforge::classify::ConstantBackend;
use taxoforge::config::Config;
use taxoforge::crawl::{crawl_species, run_crawl, CrawlJob, CrawlOptions, ImageSink};
use taxoforge::fetch::HttpClient;
use taxoforge::imaging::{average_hash, decode};
use taxoforge::layout::{self, Dataset};
use taxoforge::mock::MockResponse;
use taxoforge::store::{replay, StateStore, LOG_FILE_NAME};
use taxoforge::taxonomy::{LivingStatus, SpeciesEntry};

fn entry(name: &str, group: &str) -> SpeciesEntry {
    SpeciesEntry {
        species_key: 7,
        species_name: name.into(),
        group_name: group.into(),
        status: LivingStatus::Alive,
    }
}

#[test]
fn budget_caps_accepted_images() {
    let world = CrawlWorld::new(&[("Anseriformes", 2), ("Passeriformes", 2)], 3);
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 2, 2);
    let summary = crawl_once(&config, &accept_all(), &CrawlOptions::default());
    assert_eq!(summary.species_total, 4);
    assert_eq!(summary.species_done, 4);
    assert!(!summary.interrupted);
    assert_eq!(summary.report.accepted, 8);
    assert_eq!(summary.report.attempted, 8);
    let stats = layout::stats(&config.dataset_root).unwrap();
    assert_eq!((stats.pictures, stats.categories), (8, 2));
    assert_eq!(stats.avg_pictures.to_string(), "4.00");
    let sets = layout::category_sets(&[config.dataset_root.clone()]).unwrap();
    assert_eq!(sets[0], ["anseriformes", "passeriformes"].map(String::from).into());
}

#[test]
fn rerun_after_completion_does_nothing() {
    let world = CrawlWorld::new(&[("Anseriformes", 2)], 2);
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 5, 1);
    crawl_once(&config, &accept_all(), &CrawlOptions::default());
    let before = image_checksums(&config.dataset_root);
    let hits = world.server.request_log().len();
    let again = crawl_once(&config, &accept_all(), &CrawlOptions::default());
    assert_eq!(again.species_this_run, 0);
    assert_eq!(again.report.attempted, 0);
    assert_eq!(image_checksums(&config.dataset_root), before);
    assert_eq!(world.server.request_log().len(), hits);
}

#[test]
fn two_engines_sharing_a_url() {
    let world = CrawlWorld::new(&[("Anseriformes", 1)], 2);
    let (_, name, _) = world.species[0].clone();
    let dir = tempfile::tempdir().unwrap();
    let mut config = world.config(&dir.path().join("ds"), 10, 1);
    // second engine lists the first engine's first image plus nothing else
    world.server.route(
        &format!("/mirror?q={}&start=0", form_encode(&name)),
        MockResponse::html(format!("<img src=\"/img/{}/0.png\">", world.species[0].0)),
    );
    world.server.route(&format!("/mirror?q={}&start=20", form_encode(&name)), MockResponse::html(""));
    config.engines.push(taxoforge::config::EngineSpec {
        name: "mirror".into(),
        url_template: world.server.url("/mirror?q={query}&start={offset}"),
        page_size: 20,
    });
    let summary = crawl_once(&config, &accept_all(), &CrawlOptions::default());
    assert_eq!(summary.report.accepted, 2);
    assert!(summary.report.duplicates >= 1);
    assert_eq!(layout::stats(&config.dataset_root).unwrap().pictures, 2);
}

/// The same picture under three URLs: original, byte-identical copy and a
/// 2x pixel-replicated upscale.
fn dedup_world() -> (CrawlWorld, Config, tempfile::TempDir) {
    let world = CrawlWorld::new(&[], 0);
    let img = block_image(0x8142_2418_1824_4281, 64, 48);
    let png = encode(&img, image::ImageFormat::Png);
    let big = encode(&upscale(&img, 2), image::ImageFormat::Png);
    world.server.route("/a.png", MockResponse::ok("image/png", png.clone()));
    world.server.route("/copy.png", MockResponse::ok("image/png", png));
    world.server.route("/big.png", MockResponse::ok("image/png", big));
    world.route_page(
        "Anas crecca",
        0,
        "<img src=\"/a.png\"><img src=\"/copy.png\"><img src=\"/big.png\">",
    );
    world.route_page("Anas crecca", 20, "");
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 10, 1);
    (world, config, dir)
}

#[test]
fn dedup_same_image_three_urls() {
    let (_world, config, _dir) = dedup_world();
    let client = HttpClient::new(config.http.clone());
    let store = StateStore::in_memory();
    let dataset = Dataset::new(&config.dataset_root);
    let classifier = accept_all();
    let sink = ImageSink {
        config: &config,
        client: &client,
        dataset: &dataset,
        classifier: &classifier,
    };
    let e = entry("Anas crecca", "Anseriformes");
    let mut job = CrawlJob::new(e.clone(), 10);
    let mut txn = store.begin();
    let report = crawl_species(
        &mut job,
        &config.engines,
        |u| client.get(u),
        |u| sink.process(&mut txn, &e, u),
        &AtomicBool::new(false),
    );
    txn.commit(7).unwrap();
    assert_eq!(report.accepted, 1);
    assert_eq!(report.duplicates, 2);
    assert_eq!(report.attempted, 3);
    assert_eq!(layout::stats(&config.dataset_root).unwrap().pictures, 1);
    assert_eq!(store.snapshot().urls.len(), 3);
    assert_eq!(store.snapshot().hashes.len(), 1);
}

#[test]
fn reject_backend_leaves_dataset_empty() {
    let world = CrawlWorld::new(&[("Anseriformes", 2)], 3);
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 2, 1);
    let summary = crawl_once(&config, &ConstantBackend::new("bird", 0.1), &CrawlOptions::default());
    assert_eq!(summary.report.accepted, 0);
    assert_eq!(summary.report.rejected, 6);
    assert_eq!(summary.species_done, 2);
    assert_eq!(layout::stats(&config.dataset_root).unwrap().pictures, 0);
    // gate temp files never linger
    let staging = config.dataset_root.join(".staging");
    assert!(!staging.exists() || fs::read_dir(staging).unwrap().next().is_none());
}

#[test]
fn outputs_are_bounded_baseline_jpeg_and_gifs_rejected() {
    let world = CrawlWorld::new(&[], 0);
    let big = encode(&block_image(0x0123_4567_89AB_CDEF, 1200, 800), image::ImageFormat::Jpeg);
    let tall = encode(&block_image(0x1111_2222_3333_4444, 300, 1001), image::ImageFormat::Png);
    let small = encode(&block_image(0x5555_AAAA_5555_AAAA, 40, 30), image::ImageFormat::Bmp);
    world.server.route("/big.jpg", MockResponse::ok("image/jpeg", big));
    world.server.route("/tall.png", MockResponse::ok("image/png", tall));
    world.server.route("/small.bmp", MockResponse::ok("image/bmp", small));
    world.server.route("/anim.gif", MockResponse::ok("image/gif", animated_gif(3)));
    world.server.route("/text", MockResponse::ok("text/plain", b"hello".to_vec()));
    world.route_page(
        "Anas crecca",
        0,
        r#"<img src="/big.jpg"><img src="/anim.gif"><img src="/tall.png"><img src="/text"><img src="/small.bmp"><img src="/gone.png">"#,
    );
    world.route_page("Anas crecca", 20, "");
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 10, 1);
    let client = HttpClient::new(config.http.clone());
    let store = StateStore::in_memory();
    let dataset = Dataset::new(&config.dataset_root);
    let classifier = accept_all();
    let sink = ImageSink {
        config: &config,
        client: &client,
        dataset: &dataset,
        classifier: &classifier,
    };
    let e = entry("Anas crecca", "Anseriformes");
    let mut txn = store.begin();
    let report = crawl_species(
        &mut CrawlJob::new(e.clone(), 10),
        &config.engines,
        |u| client.get(u),
        |u| sink.process(&mut txn, &e, u),
        &AtomicBool::new(false),
    );
    txn.commit(7).unwrap();
    assert_eq!((report.accepted, report.rejected, report.errors), (3, 2, 1));

    let mut dims = Vec::new();
    for f in layout::image_files(&config.dataset_root.join("anseriformes")).unwrap() {
        let bytes = fs::read(&f).unwrap();
        let (marker, w, h) = jpeg_frame(&bytes).expect("jpeg frame header");
        assert_eq!(marker, 0xC0, "{} is not baseline", f.display());
        assert!(w.max(h) <= 500);
        dims.push((w, h));
    }
    dims.sort();
    assert_eq!(dims, [(40, 30), (150, 500), (500, 333)]);
}

#[test]
fn extinct_species_are_not_crawled() {
    let world = CrawlWorld::new(&[("Dinornithiformes", 1), ("Anseriformes", 1)], 2);
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 5, 1);
    let client = HttpClient::new(config.http.clone());
    fs::create_dir_all(&config.dataset_root).unwrap();
    let store = StateStore::open(&config.dataset_root.join(LOG_FILE_NAME)).unwrap();
    let mut species = taxoforge::crawl::fetch_species(&config, &client).unwrap();
    species[0].status = LivingStatus::Extinct;
    store.add_species(&species).unwrap();
    let summary = run_crawl(
        &config,
        &client,
        &store,
        &accept_all(),
        &store.species(),
        &AtomicBool::new(false),
        &CrawlOptions::default(),
    )
    .unwrap();
    assert_eq!(summary.species_done, 2);
    assert_eq!(summary.species_this_run, 1);
    let q = form_encode(&world.species[0].1);
    assert_eq!(world.server.hits(&format!("/search?q={q}&start=0")), 0);
    assert!(store.species().iter().all(|s| s.done));
    assert_eq!(replay(&config.dataset_root.join(LOG_FILE_NAME)).unwrap().cursor, 2);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let world = CrawlWorld::new(&[("Anseriformes", 3), ("Passeriformes", 3)], 3);
    let dir = tempfile::tempdir().unwrap();
    let full = world.config(&dir.path().join("full"), 2, 1);
    crawl_once(&full, &accept_all(), &CrawlOptions::default());

    let resumed = world.config(&dir.path().join("resumed"), 2, 1);
    let first = crawl_once(&resumed, &accept_all(), &CrawlOptions { stop_after: Some(2) });
    assert!(first.interrupted);
    assert_eq!(first.species_done, 2);
    let second = crawl_once(&resumed, &accept_all(), &CrawlOptions::default());
    assert_eq!(second.species_this_run, 4);
    assert!(!second.interrupted);

    let a = image_checksums(&full.dataset_root);
    assert_eq!(a.len(), 12);
    assert_eq!(a, image_checksums(&resumed.dataset_root));
    let snap = replay(&resumed.dataset_root.join(LOG_FILE_NAME)).unwrap();
    assert_eq!(snap.cursor, 6);
    assert_eq!(snap.done_count(), 6);
}

#[test]
fn unregistered_images_removed_on_restart() {
    let world = CrawlWorld::new(&[("Anseriformes", 1)], 2);
    let dir = tempfile::tempdir().unwrap();
    let config = world.config(&dir.path().join("ds"), 5, 1);
    crawl_once(&config, &accept_all(), &CrawlOptions::default());
    let stray_hash = average_hash(&decode(&block_png(0x00FF_00FF_00FF_00FF, 16, 16)).unwrap());
    let stray = config
        .dataset_root
        .join("anseriformes")
        .join(format!("{}_0.jpg", stray_hash.to_hex()));
    fs::write(&stray, b"partial").unwrap();
    let summary = crawl_once(&config, &accept_all(), &CrawlOptions::default());
    assert_eq!(summary.removed_orphans, 1);
    assert!(!stray.exists());
    assert_eq!(layout::stats(&config.dataset_root).unwrap().pictures, 2);
}
