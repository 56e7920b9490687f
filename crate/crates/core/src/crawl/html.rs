use std::collections::HashSet;

use scraper::{Html, Selector};
use url::Url;

/// `src` of every `<img>` in document order, resolved against `base_url`.
/// Repeats keep their first occurrence; unresolvable or non-HTTP sources
/// are skipped.
pub fn parse_image_urls(html: &[u8], base_url: &Url) -> Vec<Url> {
    let text = String::from_utf8_lossy(html);
    let doc = Html::parse_document(&text);
    let selector = Selector::parse("img[src]").expect("static selector");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for el in doc.select(&selector) {
        let Some(src) = el.value().attr("src") else { continue };
        let src = src.trim();
        if src.is_empty() {
            continue;
        }
        let Ok(url) = base_url.join(src) else { continue };
        if !matches!(url.scheme(), "http" | "https") {
            continue;
        }
        if seen.insert(url.as_str().to_string()) {
            out.push(url);
        }
    }
    out
}
