#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fednoniid")
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .env_remove("FEDNONIID_DATA_DIR")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes an IDX image/label pair of `n` 28x28 images with pseudo-random
/// pixels and cycling labels.
pub fn write_idx(dir: &Path, stem: &str, n: usize, seed: u32) {
    let mut images = vec![0, 0, 8, 3];
    for d in [n as u32, 28, 28] {
        images.extend_from_slice(&d.to_be_bytes());
    }
    let mut x = seed.wrapping_mul(2_654_435_761).wrapping_add(1);
    for _ in 0..n * 784 {
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        images.push((x >> 24) as u8);
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    labels.extend((0..n).map(|i| (i % 10) as u8));
    fs::write(dir.join(format!("{stem}images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{stem}labels-idx1-ubyte")), labels).unwrap();
}

/// A data directory holding an MNIST-layout fixture with `train` training
/// and `test` test samples; identical sets when `same` is true.
pub fn mnist_fixture(root: &Path, train: usize, test: usize, same: bool) -> PathBuf {
    let dir = root.join("data/MNIST");
    fs::create_dir_all(&dir).unwrap();
    write_idx(&dir, "train-", train, 1);
    if same {
        write_idx(&dir, "t10k-", train, 1);
    } else {
        write_idx(&dir, "t10k-", test, 2);
    }
    root.join("data")
}

pub fn write_config(root: &Path, name: &str, data: &Path, body: &str) -> PathBuf {
    let path = root.join(name);
    let text = format!(
        "paths:\n  data_dir: {}\n  out_dir: {}\n{body}",
        data.display(),
        root.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

pub fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    v.sort();
    v
}
