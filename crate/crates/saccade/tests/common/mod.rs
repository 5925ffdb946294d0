#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use saccade::idx::{encode_images, encode_labels, write_file, IdxImages};

/// Class `k` is a bright 6x6 block at one of ten fixed spots, jittered by
/// the image index, over a faint checkerboard.
pub fn synthetic_digits(n: usize, side: usize, offset: usize) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = (i + offset) % 10;
        let (r0, c0) = (2 + (k / 5) * 12 + (i * 7 + offset) % 3, 1 + (k % 5) * 5 + (i * 3) % 2);
        for r in 0..side {
            for c in 0..side {
                let inside = (r0..r0 + 6).contains(&r) && (c0..(c0 + 6).min(side)).contains(&c);
                pixels.push(if inside { 250 } else { ((r + c) % 2 * 20) as u8 });
            }
        }
        labels.push(k as u8);
    }
    (pixels, labels)
}

/// Writes an MNIST-layout dataset directory (`<root>/<name>/...-ubyte`).
pub fn write_idx_dataset(root: &Path, name: &str, n_train: usize, n_test: usize) {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for (stem, n, off) in [("train", n_train, 0), ("t10k", n_test, 3)] {
        let (pixels, labels) = synthetic_digits(n, 28, off);
        let images = IdxImages { rows: 28, cols: 28, pixels };
        write_file(&dir.join(format!("{stem}-images-idx3-ubyte")), &encode_images(&images)).unwrap();
        write_file(&dir.join(format!("{stem}-labels-idx1-ubyte")), &encode_labels(&labels)).unwrap();
    }
}

/// A small FER2013-format CSV with every usage represented.
pub fn write_fer(root: &Path, rows: usize) {
    let dir = root.join("fer2013");
    std::fs::create_dir_all(&dir).unwrap();
    let mut text = String::from("emotion,pixels,Usage\n");
    for i in 0..rows {
        let usage = match i % 5 {
            0 => "PublicTest",
            1 => "PrivateTest",
            _ => "Training",
        };
        let label = i % 7;
        let px: Vec<String> = (0..48 * 48)
            .map(|p| (((p / 48) * 5 + (p % 48) * label + i) % 256).to_string())
            .collect();
        text.push_str(&format!("{label},{},{usage}\n", px.join(" ")));
    }
    std::fs::write(dir.join("fer2013.csv"), text).unwrap();
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saccade"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("SACCADE_DATA").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Settings that keep a training run to a second or two.
pub fn small_overrides(root: &Path, out: &Path) -> Vec<String> {
    [
        format!("data_root={}", root.display()),
        format!("output_dir={}", out.display()),
        "hidden=16".into(),
        "glimpses=3".into(),
        "max_epochs=2".into(),
        "batch_size=32".into(),
        "test_limit=40".into(),
    ]
    .into()
}

pub fn set_args(pairs: &[String]) -> Vec<String> {
    pairs.iter().flat_map(|p| ["--set".to_string(), p.clone()]).collect()
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}
