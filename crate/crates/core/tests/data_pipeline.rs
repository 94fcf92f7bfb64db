use std::io::Write;

use qfusion::data::npy::{self, U8Array};
use qfusion::data::{batch_iter, load_archive, write_synthetic_archive, Split};
use qfusion::Error;

fn write_archive(path: &std::path::Path, members: &[(&str, U8Array)]) {
    let mut zip = zip::ZipWriter::new(std::fs::File::create(path).unwrap());
    for (name, arr) in members {
        zip.start_file(format!("{name}.npy"), zip::write::SimpleFileOptions::default()).unwrap();
        zip.write_all(&npy::write(arr)).unwrap();
    }
    zip.finish().unwrap();
}

fn split_members(n: usize, pixel: impl Fn(usize) -> u8) -> Vec<(String, U8Array)> {
    ["train", "val", "test"]
        .iter()
        .flat_map(|s| {
            [
                (
                    format!("{s}_images"),
                    U8Array {
                        shape: vec![n, 28, 28],
                        data: (0..n * 784).map(&pixel).collect(),
                    },
                ),
                (
                    format!("{s}_labels"),
                    U8Array {
                        shape: vec![n, 1],
                        data: (0..n).map(|i| (i % 2) as u8).collect(),
                    },
                ),
            ]
        })
        .collect()
}

#[test]
fn synthetic_archive_loads_with_requested_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.npz");
    write_synthetic_archive(&path, [2, 2, 2], 0).unwrap();
    let data = load_archive(&path).unwrap();
    for split in Split::ALL {
        assert_eq!(data.get(split).len(), 2);
    }
    assert_eq!(load_archive(&path).unwrap(), data, "loading is idempotent");
}

#[test]
fn pixel_extremes_map_to_unit_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.npz");
    let members = split_members(3, |i| [0u8, 255, 128][i % 3]);
    let refs: Vec<(&str, U8Array)> = members.iter().map(|(n, a)| (n.as_str(), a.clone())).collect();
    write_archive(&path, &refs);
    let data = load_archive(&path).unwrap();
    let img = data.train.image(0);
    assert_eq!(img[0], -1.0);
    assert_eq!(img[1], 1.0);
    assert!((img[2] - 0.003_921_568_627_450_98).abs() < 1e-15);
    for s in Split::ALL {
        let d = data.get(s);
        for i in 0..d.len() {
            assert!(d.image(i).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert_eq!(d.labels(), &[0, 1, 0]);
    }
}

#[test]
fn missing_member_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.npz");
    let members = split_members(2, |_| 7);
    let refs: Vec<(&str, U8Array)> = members
        .iter()
        .filter(|(n, _)| n != "test_labels")
        .map(|(n, a)| (n.as_str(), a.clone()))
        .collect();
    write_archive(&path, &refs);
    match load_archive(&path) {
        Err(Error::Load { msg, .. }) => assert!(msg.contains("test_labels"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_shapes_and_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.npz");
    let mut members = split_members(2, |_| 7);
    members[2].1.shape = vec![2, 14, 56];
    let refs: Vec<(&str, U8Array)> = members.iter().map(|(n, a)| (n.as_str(), a.clone())).collect();
    write_archive(&path, &refs);
    match load_archive(&path) {
        Err(Error::Load { msg, .. }) => assert!(msg.contains("val_images"), "{msg}"),
        other => panic!("{other:?}"),
    }

    let mut members = split_members(2, |_| 7);
    members[1].1.data[0] = 3;
    let refs: Vec<(&str, U8Array)> = members.iter().map(|(n, a)| (n.as_str(), a.clone())).collect();
    write_archive(&path, &refs);
    assert!(matches!(load_archive(&path), Err(Error::Load { .. })));

    std::fs::write(&path, b"not a zip").unwrap();
    assert!(matches!(load_archive(&path), Err(Error::Load { .. })));
    assert!(matches!(load_archive(&dir.path().join("absent.npz")), Err(Error::Load { .. })));
}

#[test]
fn shuffling_preserves_the_label_multiset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.npz");
    write_synthetic_archive(&path, [37, 2, 2], 4).unwrap();
    let data = load_archive(&path).unwrap();
    let mut before = data.train.labels().to_vec();
    for epoch in 0..3 {
        let order = batch_iter(&data.train, 16, 9, epoch).unwrap().concat();
        let (_, mut after) = data.train.gather(&order);
        after.sort_unstable();
        before.sort_unstable();
        assert_eq!(after, before);
    }
}
