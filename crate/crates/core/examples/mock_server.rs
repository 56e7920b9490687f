//! Local stand-in for the species API and one image search engine.
//!
//! ```text
//! cargo run -p taxoforge --example mock_server -- crates/core/tests/fixtures/taxonomy_anseriformes.json 3
//! ```
//!
//! Serves the taxonomy fixture under `/v1/species/`, a gallery page per
//! species with the given number of generated images, and prints a config
//! that crawls it into `./mock-dataset`. Runs until Ctrl-C.

use std::io::Cursor;
use std::sync::mpsc;

use image::{Rgb, RgbImage};
use taxoforge::mock::{MockResponse, MockServer, TaxonomyFixture};
use taxoforge::rng::Prng;

fn picture(seed: u64) -> Vec<u8> {
    let mut rng = Prng::new(seed);
    let cells: Vec<[u8; 3]> = (0..64)
        .map(|_| {
            let v = rng.next_u64();
            [v as u8, (v >> 8) as u8, (v >> 16) as u8]
        })
        .collect();
    let img = RgbImage::from_fn(160, 120, |x, y| Rgb(cells[(y * 8 / 120 * 8 + x * 8 / 160) as usize]));
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .expect("png encodes");
    out
}

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: mock_server <taxonomy.json> [images-per-species]");
        std::process::exit(2);
    };
    let images: u64 = args.next().map(|n| n.parse().expect("image count")).unwrap_or(3);
    let fixture = TaxonomyFixture::load(path.as_ref()).expect("readable fixture");
    let root = fixture
        .taxa
        .iter()
        .find(|t| t.parent_key.is_none())
        .map(|t| t.key)
        .expect("fixture has a root taxon");

    let server = MockServer::start();
    for t in fixture.taxa.iter().filter(|t| t.rank == "SPECIES") {
        let q: String = url::form_urlencoded::byte_serialize(t.scientific_name.as_bytes()).collect();
        let mut html = String::from("<html><body>");
        for i in 0..images {
            let img = format!("/img/{}/{i}.png", t.key);
            server.route(&img, MockResponse::ok("image/png", picture(t.key * 1000 + i)));
            html.push_str(&format!("<img src=\"{img}\">"));
        }
        html.push_str("</body></html>");
        server.route(&format!("/search?q={q}&start=0"), MockResponse::html(html));
        server.route(&format!("/search?q={q}&start=20"), MockResponse::html("<html></html>"));
    }
    let api = server.serve_taxonomy("/v1/species/", fixture);

    let config = serde_json::json!({
        "api_base": api,
        "root_taxon": root,
        "group_rank": "ORDER",
        "leaf_rank": "SPECIES",
        "engines": [{"name": "mock", "url_template": server.url("/search?q={query}&start={offset}"), "page_size": 20}],
        "dataset_root": "mock-dataset",
        "per_species_budget": images,
    });
    println!("{}", serde_json::to_string_pretty(&config).unwrap());
    eprintln!("serving on {}; Ctrl-C to stop", server.base());

    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .expect("signal handler");
    let _ = rx.recv();
}
