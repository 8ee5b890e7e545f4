#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use empdyn_core::dataset::EvalGrid;
use empdyn_core::simulate::{Sampling, TruthSpec};

pub fn empdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_empdyn"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and returns stderr, asserting the exit status.
pub fn expect_status(args: &[&str], code: i32) -> String {
    let out = empdyn(args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(out.status.code(), Some(code), "{args:?}\n{stderr}");
    stderr
}

pub fn ok(args: &[&str]) {
    expect_status(args, 0);
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn write_spec(dir: &Path, name: &str, spec: &TruthSpec) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec(spec).unwrap()).unwrap();
    path
}

pub fn sparse_spec(lambdas: Vec<f64>, n_min: usize, n_max: usize, sigma2: f64) -> TruthSpec {
    TruthSpec::new(lambdas, Sampling::Sparse { n_min, n_max }).with_sigma2(sigma2)
}

pub fn dense_spec(lambdas: Vec<f64>, m_obs: usize) -> TruthSpec {
    TruthSpec::new(lambdas, Sampling::Dense { m_obs })
}

/// `simulate`, `fit`, `dynamics` and `pace` into `out`, on the domain [0, 1].
pub fn run_pipeline(spec: &Path, n: usize, seed: u64, out: &Path, extra: &[&str]) {
    let out_s = path_str(out);
    let n = n.to_string();
    let seed = seed.to_string();
    let spec_s = path_str(spec);
    ok(&["simulate", "--spec", spec_s, "--n", &n, "--seed", &seed, "--output-dir", out_s]);
    let data = out.join("data.csv");
    let data_s = path_str(&data);
    let mut fit = vec!["fit", "--input", data_s, "--output-dir", out_s, "--domain", "0,1"];
    fit.extend_from_slice(extra);
    ok(&fit);
    ok(&["dynamics", "--output-dir", out_s]);
    ok(&["pace", "--input", data_s, "--output-dir", out_s, "--domain", "0,1"]);
}

/// Named columns of an output CSV; text fields read as NaN.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in reader.records() {
        for (col, field) in columns.iter_mut().zip(record.unwrap().iter()) {
            col.push(field.parse().unwrap_or(f64::NAN));
        }
    }
    (header, columns)
}

pub fn column<'a>(table: &'a (Vec<String>, Vec<Vec<f64>>), name: &str) -> &'a [f64] {
    let i = table.0.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    &table.1[i]
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Indices of grid points in the central `fraction` of the domain.
pub fn central(grid: &EvalGrid, fraction: f64) -> Vec<usize> {
    grid.indices_within(grid.domain().central(fraction)).collect()
}

pub fn sup_over(idx: &[usize], a: &[f64], b: &[f64]) -> f64 {
    idx.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

pub fn sup_abs(idx: &[usize], a: &[f64]) -> f64 {
    idx.iter().map(|&i| a[i].abs()).fold(0.0, f64::max)
}

pub fn l2_distance(grid: &EvalGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.norm(&d)
}

/// `b` with its sign flipped if that brings it closer to `a`.
pub fn align(grid: &EvalGrid, a: &[f64], b: &[f64]) -> Vec<f64> {
    if grid.inner(a, b) < 0.0 {
        b.iter().map(|v| -v).collect()
    } else {
        b.to_vec()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Every file under `dir`, as relative paths with contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
