use petal_core::angle::{azimuth, wrap_360};
use petal_core::features::{
    aggregate_street, normalize, satellite_feature, split_street_columns, FeatureMap, NormStatus,
    PetalFeature, ViewTag, ZoneRowMap,
};
use petal_core::geometry::{build_lut, pixel_geometry, PetalLut, PetalSpec};
use petal_core::matchmaker::{
    best_orientation, circular_correlate, circular_correlate_fft, prior_curve, PriorConfig,
    SimilarityCurve,
};
use petal_core::metrics::{angle_loss, contrastive_metric, summarize, EvalRecord};
use petal_core::synthworld::{generate_scene, render_street, sample_pose, SceneConfig, StreetLayout};
use proptest::prelude::*;
use std::sync::OnceLock;

fn kitti_lut() -> &'static PetalLut {
    static LUT: OnceLock<PetalLut> = OnceLock::new();
    LUT.get_or_init(|| {
        build_lut(&PetalSpec::new(0, 10.0, vec![8.0, 20.0, 34.0, 48.0], 0.78344).unwrap()).unwrap()
    })
}

fn feature(n_a: usize, c: usize, z: usize, values: Vec<f64>) -> PetalFeature {
    let mut f = PetalFeature::zeros(n_a, c, z, 360.0 / n_a as f64, ViewTag::Satellite);
    f.data = values;
    f
}

fn feature_strategy() -> impl Strategy<Value = (PetalFeature, PetalFeature)> {
    (4usize..=72, 1usize..=4, 1usize..=3).prop_flat_map(|(n, c, z)| {
        let len = n * c * z;
        (
            prop::collection::vec(-1.0f64..1.0, len),
            prop::collection::vec(-1.0f64..1.0, len),
        )
            .prop_map(move |(a, b)| (feature(n, c, z, a), feature(n, c, z, b)))
    })
}

// accepted (petal, zone) pairs of one offset
fn cells_of(lut: &PetalLut, dy: i32, dx: i32) -> Vec<(usize, usize)> {
    let mut out = vec![];
    for i in 0..lut.n_a() {
        for j in 0..lut.n_z() {
            if lut.contains(i, j, dy, dx) {
                out.push((i, j));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fft_matches_direct((street, sat) in feature_strategy()) {
        let a = circular_correlate(&street, &sat).unwrap();
        let b = circular_correlate_fft(&street, &sat).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn correlation_follows_rotation((street, sat) in feature_strategy(), k in 0i64..200) {
        let base = circular_correlate(&street, &sat).unwrap();
        let rotated = circular_correlate(&street, &sat.rotate(k)).unwrap();
        let n = base.len() as i64;
        for w in 0..n {
            let expect = base.values[(w + k).rem_euclid(n) as usize];
            prop_assert!((rotated.values[w as usize] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_prior_leaves_argmax(values in prop::collection::vec(-1.0f64..1.0, 8..200), p in 0.0f64..360.0, d in 1.0f64..30.0) {
        let bw = 360.0 / values.len() as f64;
        let curve = SimilarityCurve { values, bin_width: bw };
        let prior = PriorConfig { rho_p: 0.0, ..PriorConfig::new(p, d) };
        prop_assert_eq!(best_orientation(&curve, Some(&prior)).unwrap().index, curve.argmax());
    }

    #[test]
    fn strong_curves_ignore_prior(values in prop::collection::vec(0.0f64..1.0, 8..120), p in 0.0f64..360.0, d in 1.0f64..30.0) {
        let bw = 360.0 / values.len() as f64;
        let curve = SimilarityCurve { values, bin_width: bw };
        let top = curve.argmax();
        let gap = curve.values.iter().enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, v)| curve.values[top] - v)
            .fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 1e-6);
        let prior = PriorConfig::new(p, d);
        let peak = prior_curve(&prior, curve.len(), bw).unwrap().values.iter().copied().fold(0.0, f64::max);
        let alpha = 1.01 * peak / gap + 1.0;
        let scaled = SimilarityCurve { values: curve.values.iter().map(|v| alpha * v).collect(), bin_width: bw };
        prop_assert_eq!(best_orientation(&scaled, Some(&prior)).unwrap().index, top);
    }

    #[test]
    fn normalize_is_idempotent_and_scale_free(values in prop::collection::vec(-5.0f64..5.0, 12), alpha in 1e-3f64..1e3) {
        let f = feature(4, 1, 3, values);
        prop_assume!(f.norm() > 1e-9);
        let (u, status) = normalize(&f);
        prop_assert_eq!(status, NormStatus::Unit);
        prop_assert!((u.norm() - 1.0).abs() < 1e-12);
        let (uu, _) = normalize(&u);
        let scaled = feature(4, 1, 3, f.data.iter().map(|v| v * alpha).collect());
        let (us, _) = normalize(&scaled);
        for k in 0..12 {
            prop_assert!((uu.data[k] - u.data[k]).abs() < 1e-12);
            prop_assert!((us.data[k] - u.data[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn angle_loss_symmetric_and_periodic(a in -720.0f64..720.0, b in -720.0f64..720.0) {
        let l = angle_loss(a, b);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert!((l - angle_loss(b, a)).abs() < 1e-9);
        prop_assert!((l - angle_loss(a + 360.0, b)).abs() < 1e-9);
    }

    #[test]
    fn contrastive_shift_invariant(scores in prop::collection::vec(-1.0f64..1.0, 1..40), c in -10.0f64..10.0, pos in 0usize..40) {
        let pos = pos % scores.len();
        let base = contrastive_metric(&scores, pos, 0.05).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        prop_assert!((contrastive_metric(&shifted, pos, 0.05).unwrap() - base).abs() < 1e-9);
        prop_assert!(base >= -1e-12);
    }

    #[test]
    fn recall_monotone_in_threshold(errs in prop::collection::vec((0.0f64..30.0, 0.0f64..180.0), 1..50), mut ts in prop::collection::vec(0.0f64..40.0, 1..6)) {
        ts.sort_by(f64::total_cmp);
        let recs: Vec<EvalRecord> = errs.iter().enumerate()
            .map(|(i, &(d, a))| EvalRecord::new(i as u64, (0.0, 0.0), 0.0, (d, 0.0), a, 1.0))
            .collect();
        let r = summarize(&recs, &ts, &ts).unwrap();
        for s in [&r.loc, &r.lat, &r.lon, &r.orientation] {
            for w in s.recall.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }
    }

    #[test]
    fn pooling_ignores_slot_order(seed in 0u64..1000, perm_seed in 0u64..1000) {
        // shuffle the true samples of every cell, padding stays in place
        let spec = PetalSpec::new(0, 30.0, vec![3.0, 6.0], 1.0).unwrap();
        let lut = build_lut(&spec).unwrap();
        let mut shuffled = lut.clone();
        let mut state = perm_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        for k in 0..shuffled.offsets.len() {
            let n = shuffled.counts[k];
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.offsets[k].swap(i, j);
            }
        }
        let cfg = SceneConfig { map_side: 32, blob_sigma: (2.0, 4.0), line_count: 2, shift_max_m: 2.0, ground_res: 1.0, seed, ..SceneConfig::default() };
        let map = generate_scene(&cfg).unwrap();
        let a = satellite_feature(&map, (16, 16), &lut).unwrap();
        let b = satellite_feature(&map, (16, 16), &shuffled).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn street_roundtrip_reaches_unit_correlation(seed in 0u64..10_000) {
        let cfg = SceneConfig { map_side: 64, blob_sigma: (3.0, 6.0), line_count: 2, shift_max_m: 8.0, ground_res: 1.0, quantize: true, seed, ..SceneConfig::default() };
        let lut = build_lut(&PetalSpec::new(0, 10.0, vec![4.0, 9.0, 14.0], 1.0).unwrap()).unwrap();
        let scene = generate_scene(&cfg).unwrap();
        let mut gt = sample_pose(&cfg).unwrap();
        // whole-petal orientation so the street is an exact rotation
        gt.gt_theta = (gt.gt_theta / 10.0).round() * 10.0 % 360.0;
        let layout = StreetLayout { rows_per_zone: 2, cols_per_petal: 5, fov: 360.0 };
        let street = render_street(&scene, &gt, &lut, &layout, 0.0, seed).unwrap();
        let rows = ZoneRowMap::equal_bands(street.height, 3).unwrap();
        let sf = aggregate_street(&split_street_columns(&street, 10.0, 360.0).unwrap(), &rows).unwrap();
        let anchor = (gt.gt_location.0 as i64, gt.gt_location.1 as i64);
        let sat = satellite_feature(&scene, anchor, &lut).unwrap();
        let k = (gt.gt_theta / 10.0).round() as i64;
        let rotated = sat.rotate(k);
        for (x, y) in sf.data.iter().zip(&rotated.data) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        let curve = circular_correlate(&normalize(&sf).0, &normalize(&sat).0).unwrap();
        prop_assert_eq!(curve.argmax(), k as usize);
        prop_assert!((curve.values[k as usize] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn lut_covers_whole_disc_and_contains_interior_pixels() {
    let lut = kitti_lut();
    let spec = &lut.spec;
    let r = spec.outer_radius_px();
    let h = lut.half_extent;
    for dy in -h..=h {
        for dx in -h..=h {
            let d = ((dy * dy + dx * dx) as f64).sqrt();
            let cells = cells_of(lut, dy, dx);
            if dy == 0 && dx == 0 {
                assert!(cells.is_empty());
                continue;
            }
            if d <= r {
                assert!(!cells.is_empty(), "({dy},{dx}) at {d:.2} px is uncovered");
            }
            // independent corner test for full containment
            let corners = [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]
                .map(|(oy, ox)| (dy as f64 + oy, dx as f64 + ox));
            let angles = corners.map(|(y, x)| wrap_360(x.atan2(y).to_degrees()));
            let dists = corners.map(|(y, x)| y.hypot(x));
            for i in 0..spec.n_a {
                let (lo, hi) = spec.petal_range_deg(i);
                if !angles.iter().all(|&a| a > lo && a < hi) {
                    continue;
                }
                for j in 0..spec.n_z() {
                    let (zlo, zhi) = spec.zone_range_px(j);
                    if dists.iter().all(|&q| q > zlo && q < zhi) {
                        assert!(lut.contains(i, j, dy, dx), "({dy},{dx}) inside petal {i} zone {j}");
                        assert!(cells.iter().all(|&(p, _)| p == i), "({dy},{dx}) leaks out of petal {i}");
                    }
                }
            }
        }
    }
}

#[test]
fn lut_rotates_with_the_lattice() {
    let lut = kitti_lut();
    let n = lut.n_a();
    for quarter in 1..4 {
        let k = quarter * n / 4;
        for i in 0..n {
            for j in 0..lut.n_z() {
                let mut rotated: Vec<[i32; 2]> = lut
                    .samples(i, j)
                    .iter()
                    .map(|&[dy, dx]| {
                        let (mut y, mut x) = (dy, dx);
                        for _ in 0..quarter {
                            // +90 deg in azimuth: south -> east
                            (y, x) = (-x, y);
                        }
                        [y, x]
                    })
                    .collect();
                let mut target = lut.samples((i + k) % n, j).to_vec();
                rotated.sort();
                target.sort();
                assert_eq!(rotated, target, "petal {i} zone {j} by {quarter} quarter turns");
            }
        }
    }
    let g = pixel_geometry(0, 5);
    assert!((azimuth(0.0, 5.0) - 90.0).abs() < 1e-12);
    assert!(g.angle_range.0 < 90.0 && g.angle_range.1 > 90.0);
}

#[test]
fn lut_is_a_pure_function_of_its_spec() {
    let spec = kitti_lut().spec.clone();
    assert_eq!(build_lut(&spec).unwrap().to_bytes(), kitti_lut().to_bytes());
    let back = PetalLut::read_from(kitti_lut().to_bytes().as_slice()).unwrap();
    assert_eq!(&back, kitti_lut());
}

#[test]
fn feature_map_file_roundtrip() {
    let map = generate_scene(&SceneConfig { map_side: 32, blob_sigma: (2.0, 4.0), shift_max_m: 2.0, ..SceneConfig::default() }).unwrap();
    let back = FeatureMap::read_from(map.to_bytes().as_slice()).unwrap();
    assert_eq!(back.data, map.data);
    assert_eq!((back.channels, back.height, back.width), (map.channels, map.height, map.width));
    // the header carries ground_res as f32
    assert_eq!(back.ground_res, map.ground_res.map(|r| r as f32 as f64));
    assert_eq!(back.to_bytes(), map.to_bytes());
}
