use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sitebias");

fn sitebias(catalog: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .env("SITEBIAS_CATALOG", catalog)
        .args(["--cell-area-km2", "255000"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_asc(path: &Path, f: impl Fn(f64, f64) -> f64) {
    let mut s = String::from("ncols 180\nnrows 90\nxllcorner -180\nyllcorner -90\ncellsize 2\nNODATA_value -9999\n");
    for row in 0..90 {
        let lat = 89.0 - 2.0 * row as f64;
        let line: Vec<String> = (0..180).map(|c| f(lat, -179.0 + 2.0 * c as f64).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_asc(&dir.path().join("tree_cover.asc"), |lat, lon| (lat + 90.0) * 0.5 + (lon / 40.0).sin());
        write_asc(&dir.path().join("potveg.asc"), |lat, _| if lat.abs() < 23.0 { 1.0 } else { 3.0 });
        let mut sites = String::from("site_id,lat,lon,label\n");
        for i in 0..40 {
            sites.push_str(&format!("s{i},{},{},plot {i}\n", -10.0 + i as f64, -60.0 + 2.5 * i as f64));
        }
        fs::write(dir.path().join("sites.csv"), sites).unwrap();
        Self { dir }
    }

    fn catalog(&self) -> std::path::PathBuf {
        self.dir.path().join("catalog")
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn run(&self, args: &[&str]) -> Output {
        sitebias(&self.catalog(), args)
    }

    fn ingest_all(&self) {
        for (var, kind, stat) in [("tree_cover", "continuous", "mean"), ("potveg", "categorical", "majority")] {
            let raster = self.path(&format!("{var}.asc"));
            let o = self.run(&["ingest", "--raster", &raster, "--variable", var, "--kind", kind, "--stat", stat]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
}

#[test]
fn ingest_reports_cells_and_rejects_duplicates() {
    let fx = Fixture::new();
    let raster = fx.path("tree_cover.asc");
    let args = ["ingest", "--raster", &raster, "--variable", "tree_cover", "--kind", "continuous", "--stat", "mean"];
    let o = fx.run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let n: usize = out
        .trim()
        .strip_prefix("registered tree_cover: ")
        .and_then(|s| s.strip_suffix(" cells"))
        .unwrap_or_else(|| panic!("unexpected output {out:?}"))
        .parse()
        .unwrap();
    assert!(n > 1000);

    let again = fx.run(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("already exists"));

    let list = fx.run(&["variables", "--json"]);
    let v: Value = serde_json::from_slice(&list.stdout).unwrap();
    assert_eq!(v["variables"][0]["cell_count"], n);
}

#[test]
fn usage_errors_exit_2() {
    let fx = Fixture::new();
    let o = fx.run(&["ingest", "--variable", "x", "--kind", "continuous", "--stat", "mean"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--raster"));
    let o = fx.run(&["analyze", "--collection", "a.csv", "--variable", "v", "--mask", "nocolon", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let fx = Fixture::new();
    fx.ingest_all();
    let out = fx.path("out");
    let sites = fx.path("sites.csv");
    let o = fx.run(&["analyze", "--collection", &sites, "--variable", "missing", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing"));
    let o = fx.run(&["analyze", "--collection", &sites, "--variable", "tree_cover", "--mask", "potveg:9", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
    assert!(!Path::new(&out).join("result.json").exists());
    let o = fx.run(&["report", "--analysis", &fx.path("nowhere"), "--format", "svg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_writes_outputs_with_defaults() {
    let fx = Fixture::new();
    fx.ingest_all();
    let out = fx.path("run");
    let o = fx.run(&["analyze", "--collection", &fx.path("sites.csv"), "--variable", "tree_cover", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("indicator (intersection):"));
    assert!(text.contains("percentile:"));
    assert!(text.contains("biased:"));
    for f in ["result.json", "bins.csv", "cells.csv", "map.json"] {
        assert!(Path::new(&out).join(f).is_file(), "{f}");
    }
    let r: Value = serde_json::from_slice(&fs::read(Path::new(&out).join("result.json")).unwrap()).unwrap();
    assert_eq!(r["request"]["samples"], 1000);
    assert_eq!(r["null"]["replicates"], 1000);
    assert_eq!(r["collection"]["collection_id"], "sites");
    assert_eq!(r["collection"]["site_count"], 40);
}

#[test]
fn mask_narrows_the_extent() {
    let fx = Fixture::new();
    fx.ingest_all();
    let (global, tropics) = (fx.path("g"), fx.path("t"));
    let sites = fx.path("sites.csv");
    let base = ["analyze", "--collection", &sites, "--variable", "tree_cover", "--samples", "100", "--json"];
    let g = fx.run(&[&base[..], &["--out", &global]].concat());
    let t = fx.run(&[&base[..], &["--out", &tropics, "--mask", "potveg:1,2"]].concat());
    assert!(g.status.success() && t.status.success(), "{}", stderr(&t));
    let read = |d: &str| -> Value { serde_json::from_slice(&fs::read(Path::new(d).join("result.json")).unwrap()).unwrap() };
    let (rg, rt) = (read(&global), read(&tropics));
    assert_eq!(rt["extent"]["extent_id"], "mask:potveg:1,2");
    assert!(rt["extent"]["cell_count"].as_u64() < rg["extent"]["cell_count"].as_u64());
    let summary: Value = serde_json::from_slice(&t.stdout).unwrap();
    assert_eq!(summary["indicator"], rt["indicator"]);
    assert_eq!(summary["schema_version"], 1);

    let bbox = fx.path("b");
    let b = fx.run(&[&base[..], &["--out", &bbox, "--bbox", "-30,-90,30,0"]].concat());
    assert!(b.status.success(), "{}", stderr(&b));
    assert_eq!(read(&bbox)["extent"]["extent_id"], "bbox:-30,-90,30,0");
}

#[test]
fn reports_from_a_finished_analysis() {
    let fx = Fixture::new();
    fx.ingest_all();
    let out = fx.path("run");
    let o = fx.run(&["analyze", "--collection", &fx.path("sites.csv"), "--variable", "tree_cover", "--samples", "200", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&fs::read(Path::new(&out).join("result.json")).unwrap()).unwrap();

    let charts = fx.path("charts");
    let o = fx.run(&["report", "--analysis", &out, "--format", "svg", "--out", &charts]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["collection_histogram.svg", "population_histogram.svg", "null_distribution.svg"] {
        let svg = fs::read_to_string(Path::new(&charts).join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let null_svg = fs::read_to_string(Path::new(&charts).join("null_distribution.svg")).unwrap();
    let marker = null_svg.split("data-indicator=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(marker.parse::<f64>().unwrap(), r["indicator"].as_f64().unwrap());
    let bars = null_svg.matches("class=\"bar\"").count();
    assert_eq!(bars, 20);

    let o = fx.run(&["report", "--analysis", &out, "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bins = fs::read_to_string(Path::new(&out).join("bins.csv")).unwrap();
    let mut lines = bins.lines();
    assert_eq!(lines.next().unwrap(), "bin,lower,upper,category,p_sample,p_population,score,class");
    assert_eq!(lines.count(), r["bins"].as_array().unwrap().len());
    let null = fs::read_to_string(Path::new(&out).join("null.csv")).unwrap();
    let total: u64 = null.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 200);
}
