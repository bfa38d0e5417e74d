use std::fs;

use ndarray::array;
use sphereflow_cli::dataset::{parse_csv, parse_idx_images, DatasetSource};
use sphereflow_cli::CliError;

fn idx_fixture() -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for d in [2u32, 2, 2] {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(&[0, 51, 102, 255, 255, 0, 0, 0]);
    b
}

#[test]
fn idx_fixture_gives_two_vectors_of_four() {
    let bytes = idx_fixture();
    assert_eq!(bytes.len(), 24);
    let (x, shape) = parse_idx_images(&bytes, "f").unwrap();
    assert_eq!(shape, (2, 2));
    assert_eq!(x, array![[0.0, 0.2, 0.4, 1.0], [1.0, 0.0, 0.0, 0.0]]);
}

#[test]
fn idx_shape_errors_report_offsets() {
    let mut bytes = idx_fixture();
    bytes.pop();
    match parse_idx_images(&bytes, "f").unwrap_err() {
        CliError::Format { offset, msg, .. } => {
            assert_eq!(offset, 23);
            assert!(msg.contains("truncated"), "{msg}");
        }
        e => panic!("{e}"),
    }
    let mut bad = idx_fixture();
    bad[3] = 1;
    assert!(matches!(
        parse_idx_images(&bad, "f").unwrap_err(),
        CliError::Format { offset: 3, .. }
    ));
}

#[test]
fn csv_plain_matrix() {
    let (x, labels) = parse_csv("1.0,2.0\n3.0,4.0", "t", None).unwrap();
    assert_eq!(x, array![[1.0, 2.0], [3.0, 4.0]]);
    assert!(labels.is_none());
}

#[test]
fn csv_nan_reports_line() {
    let e = parse_csv("a,b\n1,2\n3,4\nnan,1\n", "bad.csv", None).unwrap_err();
    assert!(matches!(e, CliError::Parse { line: 4, .. }), "{e}");
    assert!(e.to_string().starts_with("bad.csv:4:"), "{e}");
}

#[test]
fn builtin_two_moons_is_seeded() {
    let src = DatasetSource::from_arg("builtin:two_moons:n=1000,noise=0.05,seed=7", None).unwrap();
    let a = src.load().unwrap();
    let b = src.load().unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.data.dim(), (1000, 2));
    assert_eq!(a.labels.as_ref().unwrap().len(), 1000);
}

#[test]
fn idx_file_with_labels_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("images.idx");
    let lab = dir.path().join("labels.idx");
    fs::write(&img, idx_fixture()).unwrap();
    fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 2, 4, 9]).unwrap();
    let h = DatasetSource::from_arg(img.to_str().unwrap(), Some(&lab))
        .unwrap()
        .load()
        .unwrap();
    assert_eq!(h.data.dim(), (2, 4));
    assert_eq!(h.labels, Some(vec![4, 9]));
    assert_eq!(h.image_shape, Some((2, 2)));
    assert_eq!(h.value_range, (0.0, 1.0));
    assert_eq!(h.inputs.len(), 2);

    fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 1, 4]).unwrap();
    let e = DatasetSource::from_arg(img.to_str().unwrap(), Some(&lab))
        .unwrap()
        .load()
        .unwrap_err();
    assert!(e.to_string().contains("1 labels for 2 rows"), "{e}");
}

#[test]
fn csv_file_with_label_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "x0,x1,label\n0.5,1.5,0\n-1,2,1\n").unwrap();
    let h = DatasetSource::from_arg(p.to_str().unwrap(), None)
        .unwrap()
        .load()
        .unwrap();
    assert_eq!(h.labels, Some(vec![0, 1]));
    assert_eq!(h.value_range, (-1.0, 2.0));
    assert!(h.provenance.starts_with("csv:"));
}
