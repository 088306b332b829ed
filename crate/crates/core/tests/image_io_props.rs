use proptest::prelude::*;
use threshseg::image_io::{
    contour_overlay, decode_image, default_palette, load_label_map, normalize, write_label_map,
    LabelMap, RawImage,
};

fn label_map() -> impl Strategy<Value = LabelMap> {
    (2usize..20, 2usize..20, 2usize..12).prop_flat_map(|(w, h, n)| {
        proptest::collection::vec(0..n as u16, w * h)
            .prop_map(move |labels| LabelMap::new(w, h, n, labels).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn label_map_round_trips(map in label_map()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let palette = default_palette(map.phases);
        write_label_map(&map, &palette, &path).unwrap();
        prop_assert_eq!(load_label_map(&path, &palette).unwrap(), map);
    }

    #[test]
    fn normalize_is_monotone(max in 1u8..=255, samples in proptest::collection::vec(any::<u8>(), 16)) {
        let samples: Vec<u8> = samples.into_iter().map(|s| s % (max as u16 + 1) as u8).collect();
        let img = RawImage::new(4, 4, 1, max, samples.clone()).unwrap();
        let f = normalize(&img).unwrap();
        for (i, &a) in samples.iter().enumerate() {
            for (j, &b) in samples.iter().enumerate() {
                if a < b {
                    prop_assert!(f.values()[i] < f.values()[j]);
                }
            }
            if a == 0 { prop_assert_eq!(f.values()[i], 0.0); }
            if a == max { prop_assert_eq!(f.values()[i], 1.0); }
        }
    }

    #[test]
    fn overlay_touches_only_boundary_pixels(map in label_map(), gray in any::<u8>()) {
        let (w, h) = (map.width, map.height);
        let img = RawImage::new(w, h, 1, 255, vec![gray; w * h]).unwrap();
        let out = contour_overlay(&img, &map).unwrap();
        for y in 0..h {
            for x in 0..w {
                let here = map.labels[y * w + x];
                let mut boundary = false;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        boundary |= map.labels[yy as usize * w + xx as usize] != here;
                    }
                }
                let px = &out.samples[3 * (y * w + x)..3 * (y * w + x) + 3];
                if !boundary {
                    prop_assert_eq!(px, &[gray, gray, gray][..]);
                }
            }
        }
    }
}

#[test]
fn decodes_ppm_with_comments() {
    let mut bytes = b"P6\n# made by hand\n2 2\n# max\n255\n".to_vec();
    bytes.extend([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]);
    let img = decode_image(&bytes).unwrap();
    assert_eq!((img.width, img.height, img.channels), (2, 2, 3));
    let f = normalize(&img).unwrap();
    assert_eq!(f.pixel(3), &[1.0, 1.0, 1.0]);
}
