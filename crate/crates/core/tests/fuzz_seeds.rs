//! Replays the checked-in fuzz corpus seeds through the same properties the
//! fuzz targets assert, so the seeds stay meaningful on stable toolchains.

use std::fs;
use std::path::PathBuf;

use annealnet::config::{parse_ini, ExperimentConfig};
use annealnet::engine::NoiseModel;
use annealnet::gibbs::TestFunction;
use annealnet::harness::SweepAxis;
use annealnet::objectives::parse_objective;
use annealnet::record::{read_series_csv, write_series_csv};
use annealnet::spec::SpecString;
use annealnet::topology::GraphModel;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds in {}", dir.display());
    paths.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for data in seeds("config_ini") {
        let text = std::str::from_utf8(&data).unwrap();
        if let Ok(doc) = parse_ini(text) {
            let again = parse_ini(&doc.to_canonical_string()).unwrap();
            assert_eq!(doc.sections.len(), again.sections.len());
            if ExperimentConfig::from_ini(&doc).is_ok() {
                accepted += 1;
            }
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn spec_string_seeds() {
    for data in seeds("spec_strings") {
        let (&n, rest) = data.split_first().unwrap();
        let s = std::str::from_utf8(rest).unwrap();
        if let Ok(spec) = SpecString::parse(s) {
            assert_eq!(SpecString::parse(&spec.to_string()).unwrap(), spec);
        }
        if let Ok(obj) = parse_objective(s) {
            let _ = obj.eval(&vec![0.5; obj.dim()]);
        }
        let _ = GraphModel::parse(s, 1 + (n as usize % 16));
        if let Ok(noise) = NoiseModel::parse(s) {
            assert_eq!(NoiseModel::parse(&noise.descriptor()).unwrap(), noise);
        }
        if let Ok(f) = TestFunction::parse(s) {
            let _ = f.eval(&[0.0, 1.0, -1.0]);
        }
    }
}

#[test]
fn series_seeds() {
    let mut accepted = 0;
    for data in seeds("series_csv") {
        if let Ok(table) = read_series_csv(data.as_slice()) {
            let mut buf = Vec::new();
            write_series_csv(&mut buf, &table.config_hash, table.coords, &table.rows).unwrap();
            assert_eq!(
                read_series_csv(buf.as_slice()).unwrap().rows.len(),
                table.rows.len()
            );
            accepted += 1;
        }
    }
    assert_eq!(accepted, 2);
}

#[test]
fn sweep_axis_seeds() {
    for data in seeds("sweep_axis") {
        if let Ok(axis) = SweepAxis::parse(std::str::from_utf8(&data).unwrap()) {
            assert!(!axis.values.is_empty());
        }
    }
}
