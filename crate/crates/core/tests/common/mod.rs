#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use sha2::{Digest, Sha256};
use taxoforge::config::Config;
use taxoforge::mock::{MockResponse, MockServer, TaxonomyFixture};
use taxoforge::rng::Prng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn encode(img: &RgbImage, format: image::ImageFormat) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), format).unwrap();
    out
}

/// Image whose 8x8 grid of blocks is black or white per bit of `pattern`
/// (MSB = top-left), so its average hash is `pattern` unless every bit is set.
pub fn block_image(pattern: u64, width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let (i, j) = (y * 8 / height, x * 8 / width);
        let bit = (pattern >> (63 - (i * 8 + j))) & 1;
        let v = if bit == 1 { 255 } else { 0 };
        Rgb([v, v, v])
    })
}

pub fn block_png(pattern: u64, width: u32, height: u32) -> Vec<u8> {
    encode(&block_image(pattern, width, height), image::ImageFormat::Png)
}

/// Each pixel replicated `factor` times on both axes.
pub fn upscale(img: &RgbImage, factor: u32) -> RgbImage {
    RgbImage::from_fn(img.width() * factor, img.height() * factor, |x, y| {
        *img.get_pixel(x / factor, y / factor)
    })
}

/// Patterns that are neither all-zero nor all-one, so they hash to themselves.
pub fn distinct_patterns(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = Prng::new(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let p = rng.next_u64();
        if p != 0 && p != u64::MAX && !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Relative path to content checksum of every regular file under `root`,
/// skipping dot-entries.
pub fn tree_checksums(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        let Ok(rd) = fs::read_dir(dir) else { return };
        for entry in rd.flatten() {
            let path = entry.path();
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_hex(&fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Dataset images only: `<category>/<file>.jpg`.
pub fn image_checksums(root: &Path) -> BTreeMap<String, String> {
    tree_checksums(root)
        .into_iter()
        .filter(|(k, _)| k.contains('/') && k.ends_with(".jpg"))
        .collect()
}

pub fn form_encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

/// A self-contained crawl setup: taxonomy, one gallery engine and distinct
/// images per species, all served from one mock server.
pub struct CrawlWorld {
    pub server: MockServer,
    pub api_base: String,
    /// (key, name, order)
    pub species: Vec<(u64, String, String)>,
}

impl CrawlWorld {
    /// `orders` of (order name, species count); each species gets
    /// `images` distinct PNGs on a single result page.
    pub fn new(orders: &[(&str, usize)], images: usize) -> Self {
        let server = MockServer::start();
        let mut fx = TaxonomyFixture::default();
        fx.add(212, "Aves", "CLASS", None);
        let mut species = Vec::new();
        for (oi, (order, count)) in orders.iter().enumerate() {
            let order_key = 1000 + oi as u64;
            fx.add(order_key, order, "ORDER", Some(212));
            for si in 0..*count {
                let key = 100_000 + oi as u64 * 100 + si as u64;
                let name = format!("{order} species{si:02}");
                fx.add(key, &name, "SPECIES", Some(order_key));
                fx.set_profiles(key, vec![Some(false)]);
                species.push((key, name, order.to_string()));
            }
        }
        let api_base = server.serve_taxonomy("/api/", fx);
        let world = CrawlWorld {
            server,
            api_base,
            species,
        };
        for (key, name, _) in &world.species {
            let patterns = distinct_patterns(*key, images);
            let mut html = String::from("<html><body>");
            for (i, p) in patterns.iter().enumerate() {
                let path = format!("/img/{key}/{i}.png");
                world
                    .server
                    .route(&path, MockResponse::ok("image/png", block_png(*p, 96, 64)));
                html.push_str(&format!("<img src=\"{path}\">"));
            }
            html.push_str("</body></html>");
            world.route_page(name, 0, &html);
            world.route_page(name, 20, "<html></html>");
        }
        world
    }

    pub fn route_page(&self, query: &str, offset: u64, html: &str) {
        let path = format!("/search?q={}&start={offset}", form_encode(query));
        self.server.route(&path, MockResponse::html(html));
    }

    pub fn engine_template(&self) -> String {
        self.server.url("/search?q={query}&start={offset}")
    }

    pub fn config(&self, dataset_root: &Path, budget: u32, workers: usize) -> Config {
        Config::from_json(&self.config_json(dataset_root, budget, workers)).unwrap()
    }

    pub fn config_json(&self, dataset_root: &Path, budget: u32, workers: usize) -> String {
        serde_json::json!({
            "api_base": self.api_base,
            "root_taxon": 212,
            "group_rank": "ORDER",
            "leaf_rank": "SPECIES",
            "engines": [{"name": "gallery", "url_template": self.engine_template(), "page_size": 20}],
            "dataset_root": dataset_root,
            "per_species_budget": budget,
            "workers": workers,
            "http": {"max_redirects": 5, "retries_5xx": 0, "backoff_base_ms": 1, "timeout_ms": 5000},
        })
        .to_string()
    }
}

/// Walks JPEG marker segments up to start-of-scan and returns the
/// start-of-frame marker byte (0xC0 for baseline) and the frame size.
pub fn jpeg_frame(bytes: &[u8]) -> Option<(u8, u16, u16)> {
    if bytes.len() < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8 {
        return None;
    }
    let mut i = 2;
    while i + 4 <= bytes.len() {
        if bytes[i] != 0xFF {
            return None;
        }
        let marker = bytes[i + 1];
        let len = u16::from_be_bytes([bytes[i + 2], bytes[i + 3]]) as usize;
        if (0xC0..=0xCF).contains(&marker) && ![0xC4, 0xC8, 0xCC].contains(&marker) {
            let h = u16::from_be_bytes([bytes[i + 5], bytes[i + 6]]);
            let w = u16::from_be_bytes([bytes[i + 7], bytes[i + 8]]);
            return Some((marker, w, h));
        }
        if marker == 0xDA {
            return None;
        }
        i += 2 + len;
    }
    None
}

pub fn animated_gif(frames: usize) -> Vec<u8> {
    use image::codecs::gif::GifEncoder;
    use image::{Delay, Frame, RgbaImage};
    let mut out = Vec::new();
    {
        let mut enc = GifEncoder::new(&mut out);
        for f in 0..frames {
            let img = RgbaImage::from_pixel(16, 16, image::Rgba([(f * 60) as u8, 0, 0, 255]));
            enc.encode_frame(Frame::from_parts(img, 0, 0, Delay::from_numer_denom_ms(100, 1))).unwrap();
        }
    }
    out
}

/// Crawls once with the given config, collecting species first.
pub fn crawl_once(
    config: &Config,
    classifier: &dyn taxoforge::classify::Classifier,
    options: &taxoforge::crawl::CrawlOptions,
) -> taxoforge::crawl::CrawlSummary {
    use std::sync::atomic::AtomicBool;
    use taxoforge::crawl::{prepare_species, run_crawl};
    use taxoforge::fetch::HttpClient;
    use taxoforge::store::{StateStore, LOG_FILE_NAME};
    fs::create_dir_all(&config.dataset_root).unwrap();
    let client = HttpClient::new(config.http.clone());
    let store = StateStore::open(&config.dataset_root.join(LOG_FILE_NAME)).unwrap();
    let species = prepare_species(config, &client, &store).unwrap();
    let stop = AtomicBool::new(false);
    run_crawl(config, &client, &store, classifier, &species, &stop, options).unwrap()
}

pub fn accept_all() -> taxoforge::classify::ConstantBackend {
    taxoforge::classify::ConstantBackend::new("bird", 1.0)
}

/// Writes `n` small `.jpg` files per category with contents derived from
/// `salt`, plus a non-image file that evaluation must leave alone.
pub fn make_tree(root: &Path, categories: &[(&str, usize)], salt: u64) {
    for (cat, n) in categories {
        let dir = root.join(cat);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..*n {
            fs::write(dir.join(format!("{i:03}.jpg")), format!("{salt}:{cat}:{i}")).unwrap();
        }
        fs::write(dir.join("notes.txt"), cat.as_bytes()).unwrap();
    }
}

/// Classifier that is right on exactly `correct` of the first `total`
/// calls, the right ones chosen by a seeded shuffle. Wrong answers put
/// the truth nowhere in the ranking.
pub struct ScriptedClassifier {
    plan: Vec<bool>,
    calls: std::sync::Mutex<usize>,
}

impl ScriptedClassifier {
    pub fn new(seed: u64, correct: usize, total: usize) -> Self {
        let mut plan: Vec<bool> = (0..total).map(|i| i < correct).collect();
        Prng::new(seed).shuffle(&mut plan);
        ScriptedClassifier {
            plan,
            calls: std::sync::Mutex::new(0),
        }
    }
}

impl taxoforge::classify::Classifier for ScriptedClassifier {
    fn classify(
        &self,
        image: &Path,
    ) -> Result<taxoforge::classify::Classification, taxoforge::classify::BackendFailure> {
        let mut calls = self.calls.lock().unwrap();
        let right = self.plan.get(*calls).copied().unwrap_or(false);
        *calls += 1;
        let truth = image.parent().unwrap().file_name().unwrap().to_string_lossy().into_owned();
        let label = if right { truth } else { "__wrong__".to_string() };
        taxoforge::classify::Classification::new(vec![(label, 1.0)])
    }
}

/// Provider handing out one scripted classifier per repeat with the given
/// number of correct answers out of `total`.
pub struct ScriptedProvider {
    pub seed: u64,
    pub correct: Vec<usize>,
    pub total: usize,
}

impl taxoforge::eval::ModelProvider for ScriptedProvider {
    fn needs_training(&self) -> bool {
        false
    }

    fn prepare(
        &mut self,
        req: &taxoforge::eval::TrainRequest<'_>,
    ) -> Result<Box<dyn taxoforge::classify::Classifier>, taxoforge::eval::EvalError> {
        let c = self.correct[req.repeat as usize];
        Ok(Box::new(ScriptedClassifier::new(self.seed + req.repeat as u64, c, self.total)))
    }
}
