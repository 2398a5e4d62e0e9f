use std::fs;

use bindesc::bad::{self, BadModel};
use bindesc::bad_train::random_model;
use bindesc::dataset::{load_brown, load_patch_dir, save_patch_dir, write_brown};
use bindesc::descriptor::{read_dump, write_dump};
use bindesc::hashsift::{self, random_projection_model};
use bindesc::synthetic::{brown_like, downsample, separable_toy, ViewJitter};
use bindesc::{BinaryDescriptor, BoxPairFeature, Error, GrayImage, LabeledPatchSet64, Patch};
use tempfile::TempDir;

/// Pixel of patch `i` at (x, y) in a hand-built mosaic.
fn pixel(i: usize, x: usize, y: usize) -> u8 {
    ((i * 7 + x * 3 + y * 5) % 256) as u8
}

#[test]
fn brown_loader_reads_hand_built_mosaics() {
    let tmp = TempDir::new().unwrap();
    let count = 300; // one full mosaic and a partial one
    for m in 0..2 {
        let img = image::GrayImage::from_fn(1024, 1024, |px, py| {
            let (px, py) = (px as usize, py as usize);
            let i = m * 256 + (py / 64) * 16 + px / 64;
            image::Luma([if i < count {
                pixel(i, px % 64, py % 64)
            } else {
                0
            }])
        });
        img.save(tmp.path().join(format!("patches{m:04}.bmp")))
            .unwrap();
    }
    let info: String = (0..count).map(|i| format!("{} 0\n", i / 3)).collect();
    fs::write(tmp.path().join("info.txt"), info).unwrap();

    let set = load_brown::<f64>(tmp.path()).unwrap();
    assert_eq!(set.len(), count);
    assert_eq!(set.distinct_labels(), 100);
    for i in [0, 17, 255, 256, 299] {
        assert_eq!(set.label(i), (i / 3) as u64);
        let (x, y) = (5, 9);
        let mean = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(dx, dy)| f64::from(pixel(i, 2 * x + dx, 2 * y + dy)))
            .sum::<f64>()
            / 4.0;
        assert_eq!(set.patch(i).get(x, y), mean, "patch {i}");
    }
}

#[test]
fn brown_write_then_load_round_trips() {
    let tmp = TempDir::new().unwrap();
    let (images, labels) = brown_like(70, 4, &ViewJitter::default(), 11);
    write_brown(tmp.path(), &images, &labels).unwrap();
    let set = load_brown::<f32>(tmp.path()).unwrap();
    assert_eq!(set.labels(), &labels[..]);
    for (p, img) in set.patches().iter().zip(&images) {
        assert_eq!(*p, downsample::<f32>(img));
    }
}

#[test]
fn brown_loader_reports_missing_mosaics() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("info.txt"), "1 0\n2 0\n").unwrap();
    assert!(load_brown::<f64>(tmp.path()).is_err());
    assert!(matches!(
        load_brown::<f64>(tmp.path().join("absent")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn patch_dir_round_trips_integer_patches() {
    let tmp = TempDir::new().unwrap();
    let set: LabeledPatchSet64 = separable_toy(6, 4).unwrap();
    save_patch_dir(tmp.path(), &set).unwrap();
    let back = load_patch_dir::<f64>(tmp.path()).unwrap();
    assert_eq!(back, set);
}

#[test]
fn patch_dir_rejects_wrong_sizes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("a");
    fs::create_dir(&dir).unwrap();
    image::GrayImage::new(16, 16)
        .save(dir.join("x.png"))
        .unwrap();
    assert!(load_patch_dir::<f64>(tmp.path()).is_err());
}

#[test]
fn model_files_round_trip() {
    let tmp = TempDir::new().unwrap();
    let mut features = random_model(20, 3).unwrap().features().to_vec();
    features[0] = BoxPairFeature::new(0, 0, 31, 31, 5, -12.345678901234).unwrap();
    features[1] = BoxPairFeature::new(3, 4, 5, 6, 1, 0.1 + 0.2).unwrap();
    let bm = BadModel::new(features).unwrap();
    let p = tmp.path().join("m.bad");
    bad::save_model(&bm, &p).unwrap();
    assert_eq!(bad::load_model(&p).unwrap(), bm);

    let hm = random_projection_model::<f64>(24, 0.25, true, 5).unwrap();
    let p = tmp.path().join("m.hash");
    hashsift::save_model(&hm, &p).unwrap();
    assert_eq!(hashsift::load_model::<f64>(&p).unwrap(), hm);
}

#[test]
fn dump_round_trips_descriptors() {
    let tmp = TempDir::new().unwrap();
    let descs: Vec<BinaryDescriptor> = (0..9)
        .map(|i| BinaryDescriptor::from_bits((0..13).map(|k| (i * k) % 3 == 1)))
        .collect();
    let p = tmp.path().join("d.desc");
    write_dump(&p, 13, &descs).unwrap();
    assert_eq!(read_dump(&p).unwrap(), (13, descs));
}

#[test]
fn described_corpus_survives_disk() {
    // describing a corpus read back from disk equals describing it in memory
    let tmp = TempDir::new().unwrap();
    let (images, labels) = brown_like(10, 2, &ViewJitter::default(), 2);
    write_brown(tmp.path(), &images, &labels).unwrap();
    let set = load_brown::<f32>(tmp.path()).unwrap();
    let m = random_model(64, 1).unwrap();
    let in_memory: Vec<BinaryDescriptor> = images
        .iter()
        .map(|i| bad::describe(&downsample::<f32>(i), &m))
        .collect();
    assert_eq!(bad::describe_batch(set.patches(), &m), in_memory);
    let p: Patch<f32> =
        Patch::from_gray(&GrayImage::from_fn(32, 32, |x, _| x as u8).unwrap()).unwrap();
    assert_eq!(p.get(7, 3), 7.0);
}
