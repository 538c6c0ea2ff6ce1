//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LEVELS: [&str; 5] = ["VERY_UNLIKELY", "UNLIKELY", "POSSIBLE", "LIKELY", "VERY_LIKELY"];

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub id: String,
    pub private: bool,
    pub split: &'static str,
    /// Level index 0..=4 for adult, racy, medical, spoofed, violent.
    pub sens: [usize; 5],
    pub people_prob: f64,
    pub people_count: u32,
    pub outdoor_prob: f64,
}

/// Images whose label follows a fixed linear rule over the eight features,
/// thresholded at the median so both classes are equally common, then
/// flipped with probability `noise`. Splits cycle 7/1/2 by index.
pub fn synthetic_images(n: usize, seed: u64, noise: f64) -> Vec<SyntheticImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut imgs: Vec<(SyntheticImage, f64)> = (0..n)
        .map(|i| {
            let sens = [0; 5].map(|_: usize| rng.random_range(0..5usize));
            let people_prob: f64 = rng.random();
            let people_count = if people_prob > 0.5 { rng.random_range(1..6) } else { 0 };
            let outdoor_prob: f64 = rng.random();
            let enc = |k: usize| k as f64 / 4.0;
            let score = 2.0 * enc(sens[0]) + 1.5 * enc(sens[1]) + 0.5 * enc(sens[2])
                + 1.0 * enc(sens[4])
                + 1.2 * people_prob
                + 0.15 * people_count as f64
                - 0.4 * outdoor_prob;
            let split = match i % 10 {
                0..=6 => "train",
                7 => "val",
                _ => "test",
            };
            let img = SyntheticImage {
                id: format!("img_{i:05}"),
                private: false,
                split,
                sens,
                people_prob,
                people_count,
                outdoor_prob,
            };
            (img, score)
        })
        .collect();
    let mut scores: Vec<f64> = imgs.iter().map(|(_, s)| *s).collect();
    scores.sort_by(f64::total_cmp);
    let median = scores[n / 2];
    for (img, score) in &mut imgs {
        img.private = (*score >= median) ^ (rng.random::<f64>() < noise);
    }
    imgs.into_iter().map(|(img, _)| img).collect()
}

pub fn manifest_csv(imgs: &[SyntheticImage], with_splits: bool) -> String {
    let mut s = String::from("image_id,label,split\n");
    for img in imgs {
        let label = if img.private { "private" } else { "public" };
        let split = if with_splits { img.split } else { "" };
        let _ = writeln!(s, "{},{label},{split}", img.id);
    }
    s
}

pub fn privacy_csv(imgs: &[SyntheticImage]) -> String {
    let mut s = String::from(
        "image_id,adult,racy,medical,spoofed,violent,people_prob,people_count,outdoor_prob\n",
    );
    for img in imgs {
        let levels: Vec<&str> = img.sens.iter().map(|&k| LEVELS[k]).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            img.id,
            levels.join(","),
            img.people_prob,
            img.people_count,
            img.outdoor_prob
        );
    }
    s
}

/// Deep store with `dim` noisy columns, the first of which leaks the label.
pub fn deep_csv(imgs: &[SyntheticImage], tag: &str, dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = format!("#source_tag={tag},dim={dim}\nimage_id");
    for j in 0..dim {
        let _ = write!(s, ",v{j}");
    }
    s.push('\n');
    for img in imgs {
        s.push_str(&img.id);
        for j in 0..dim {
            let mut v: f64 = rng.random_range(-1.0..1.0);
            if j == 0 && img.private {
                v += 0.5;
            }
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Writes manifest, privacy and one deep store for `imgs` into `dir`.
pub fn write_dataset(dir: &Path, imgs: &[SyntheticImage]) {
    write(dir, "manifest.csv", &manifest_csv(imgs, true));
    write(dir, "privacy_features.csv", &privacy_csv(imgs));
    write(dir, "rn18.csv", &deep_csv(imgs, "rn18", 6, 99));
}

pub fn base_config(extra: &str) -> String {
    format!(
        r#"seed = 11
out_dir = "out"

[data]
manifest = "manifest.csv"
privacy_features = "privacy_features.csv"
deep_features = ["rn18.csv"]

[train]
learning_rate = 0.5
epochs = 200
{extra}"#
    )
}

pub fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_privlens"));
    cmd.args(args)
        .env_remove("PRIVLENS_SAFESEARCH_URL")
        .env_remove("PRIVLENS_SAFESEARCH_KEY");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Decides the mock response for one image reference.
pub type Behavior = fn(&str) -> (u16, String);

/// Refs containing `fail` are always rate limited, `deny` gets 401, `boom`
/// gets 500; others receive levels derived from the reference bytes.
pub fn standard_behavior(image_ref: &str) -> (u16, String) {
    if image_ref.contains("fail") {
        return (429, "{}".into());
    }
    if image_ref.contains("deny") {
        return (401, "{}".into());
    }
    if image_ref.contains("boom") {
        return (500, "{}".into());
    }
    let h: usize = image_ref.bytes().map(usize::from).sum();
    let level = |k: usize| LEVELS[(h + k) % 5];
    let body = format!(
        r#"{{"responses":[{{"safeSearchAnnotation":{{"adult":"{}","racy":"{}","medical":"{}","spoof":"{}","violence":"{}"}}}}]}}"#,
        level(0),
        level(1),
        level(2),
        level(3),
        level(4)
    );
    (200, body)
}

/// Minimal HTTP/1.1 server counting every request it answers.
pub struct MockServer {
    pub url: String,
    calls: Arc<AtomicUsize>,
    per_ref: Arc<Mutex<HashMap<String, usize>>>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/images:annotate", listener.local_addr().unwrap());
        let calls = Arc::new(AtomicUsize::new(0));
        let per_ref = Arc::new(Mutex::new(HashMap::new()));
        let (c, p) = (calls.clone(), per_ref.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (c, p) = (c.clone(), p.clone());
                thread::spawn(move || handle(stream, behavior, &c, &p));
            }
        });
        MockServer { url, calls, per_ref }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, image_ref: &str) -> usize {
        self.per_ref.lock().unwrap().get(image_ref).copied().unwrap_or(0)
    }
}

fn handle(
    stream: TcpStream,
    behavior: Behavior,
    calls: &AtomicUsize,
    per_ref: &Mutex<HashMap<String, usize>>,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    loop {
        let mut content_length = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
        let image_ref = json["requests"][0]["image"]["source"]["imageUri"]
            .as_str()
            .unwrap_or("")
            .to_string();
        calls.fetch_add(1, Ordering::SeqCst);
        *per_ref.lock().unwrap().entry(image_ref.clone()).or_default() += 1;
        let (status, payload) = behavior(&image_ref);
        let resp = format!(
            "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if stream.write_all(resp.as_bytes()).is_err() {
            return;
        }
    }
}
