use std::f64::consts::PI;

use polaron_core::patches::{default_patch_count, weight_table, Hemisphere};
use polaron_core::{build_fermi_ball, build_patch_set, gamma_set, index_set, pair_count, Momentum, Potential};
use proptest::prelude::*;

fn brute_ball(kf: f64) -> Vec<[i64; 3]> {
    let r = kf.ceil() as i64 + 1;
    let mut v = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                if ((x * x + y * y + z * z) as f64) <= kf * kf + 1e-9 {
                    v.push([x, y, z]);
                }
            }
        }
    }
    v
}

#[test]
fn small_balls_have_known_sizes() {
    assert_eq!(build_fermi_ball(1.0).unwrap().n(), 7);
    assert_eq!(build_fermi_ball(2f64.sqrt()).unwrap().n(), 19);
    assert_eq!(build_fermi_ball(2.0).unwrap().n(), 33);
    assert_eq!(build_fermi_ball(0.0).unwrap().n(), 1);
}

#[test]
fn ball_matches_brute_force_count_and_energy() {
    for kf in [3.0, 4.5, 7.3] {
        let ball = build_fermi_ball(kf).unwrap();
        let pts = brute_ball(kf);
        assert_eq!(ball.n(), pts.len());
        let e: i64 = pts.iter().map(|p| p.iter().map(|c| c * c).sum::<i64>()).sum();
        assert_eq!(ball.energy_pw(), e);
    }
}

#[test]
fn ball_volume_approaches_continuum() {
    let n = build_fermi_ball(20.0).unwrap().n() as f64;
    let vol = 4.0 / 3.0 * PI * 8000.0;
    assert!((n / vol - 1.0).abs() < 0.01);
}

#[test]
fn negative_kf_is_rejected() {
    assert!(build_fermi_ball(-1.0).is_err());
    assert!(build_fermi_ball(f64::NAN).is_err());
}

#[test]
fn patch_count_is_even_rounding() {
    for n in [7usize, 19, 33, 257, 33_401, 268_297] {
        let m = default_patch_count(n);
        assert_eq!(m % 2, 0);
        assert!(m >= 2);
        let target = (n as f64).powf(16.0 / 45.0);
        assert!((m as f64 - target).abs() <= 1.0 + 1e-12, "n={n} m={m} target={target}");
    }
}

#[test]
fn odd_patch_count_is_rejected() {
    assert!(build_patch_set(5, 10.0, 4169, 2.0 / 15.0, 0.0).is_err());
    assert!(build_patch_set(0, 10.0, 4169, 2.0 / 15.0, 0.0).is_err());
}

#[test]
fn patches_tile_the_sphere_without_corridors() {
    let ball = build_fermi_ball(10.0).unwrap();
    let m = default_patch_count(ball.n());
    let ps = build_patch_set(m, 10.0, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    assert_eq!(ps.patches().len(), m);
    assert!((ps.total_area() - 4.0 * PI).abs() < 1e-9);
    for p in build_fermi_ball(12.0).unwrap().modes() {
        assert!(ps.patch_of(*p).is_some(), "{p}");
    }
}

#[test]
fn antipodal_points_land_in_mirrored_patches() {
    let ps = build_patch_set(12, 10.0, 4169, 2.0 / 15.0, 0.0).unwrap();
    for p in build_fermi_ball(9.0).unwrap().modes() {
        if p.to_array()[2] == 0 {
            continue;
        }
        let a = ps.patch_of(*p).unwrap();
        let b = ps.patch_of(-*p).unwrap();
        assert_eq!((a - 1 + 6) % 12 + 1, b, "{p}");
    }
}

/// Pair count by a direct scan of a box, independent of the shell enumeration.
fn brute_pairs(kf: f64, ps: &polaron_core::PatchSet, alpha: usize, k: Momentum, hemi: Hemisphere) -> u64 {
    let r2 = (kf * kf + 1e-9).floor() as i64;
    let box_r = kf.ceil() as i64 + 3;
    let mut n = 0;
    for x in -box_r..=box_r {
        for y in -box_r..=box_r {
            for z in -box_r..=box_r {
                let p = Momentum::new(x, y, z);
                if p.norm_sq() <= r2 {
                    continue;
                }
                let h = match hemi {
                    Hemisphere::North => p - k,
                    Hemisphere::South => p + k,
                };
                if h.norm_sq() <= r2 && ps.patch_of(p) == Some(alpha) && ps.patch_of(h) == Some(alpha) {
                    n += 1;
                }
            }
        }
    }
    n
}

#[test]
fn pair_counts_match_box_scan() {
    let kf = 6.0;
    let ball = build_fermi_ball(kf).unwrap();
    let m = default_patch_count(ball.n());
    let ps = build_patch_set(m, kf, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    for k in [Momentum::new(0, 0, 1), Momentum::new(1, 0, 0), Momentum::new(0, -1, 0)] {
        let idx = index_set(&ps, k);
        for (alpha, hemi) in idx.all() {
            let w = pair_count(&ball, &ps, alpha, k).unwrap();
            assert_eq!(w.hemisphere, hemi);
            assert_eq!(w.count_sq, brute_pairs(kf, &ps, alpha, k, hemi), "k={k} alpha={alpha}");
            assert!((w.n * w.n - w.count_sq as f64).abs() < 1e-12 * w.count_sq as f64);
        }
    }
}

#[test]
fn pair_count_outside_index_set_errors() {
    let ball = build_fermi_ball(6.0).unwrap();
    let ps = build_patch_set(8, 6.0, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    let k = Momentum::new(0, 0, 1);
    let idx = index_set(&ps, k);
    let outside = (1..=8).find(|a| idx.hemisphere_of(*a).is_none());
    if let Some(a) = outside {
        assert!(pair_count(&ball, &ps, a, k).is_err());
    }
}

#[test]
fn weight_table_sum_tracks_area_law() {
    let kf = 20.0;
    let ball = build_fermi_ball(kf).unwrap();
    let m = default_patch_count(ball.n());
    let ps = build_patch_set(m, kf, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    let v = Potential::unit_shell(1.0).unwrap();
    let gamma = gamma_set(&v).unwrap();
    let table = weight_table(&ball, &ps, &gamma, None);
    for k in &gamma {
        let sum: f64 = table.for_k(*k).map(|w| w.count_sq as f64).sum();
        // north and south caps each contribute pi kF^2 |k|; thresholds and patch
        // boundaries only remove pairs
        let law = 2.0 * PI * kf * kf * k.norm();
        let ratio = sum / law;
        assert!(ratio > 0.6 && ratio < 1.05, "k={k} ratio={ratio}");
    }
}

proptest! {
    #[test]
    fn index_set_respects_hemisphere_sign(x in -3i64..=3, y in -3i64..=3, z in -3i64..=3) {
        prop_assume!(x != 0 || y != 0 || z != 0);
        let ps = build_patch_set(10, 8.0, 2109, 2.0 / 15.0, 0.0).unwrap();
        let k = Momentum::new(x, y, z);
        let idx = index_set(&ps, k);
        let tau = ps.threshold();
        for a in &idx.north {
            prop_assert!(k.dot(ps.patch(*a).center) >= tau);
        }
        for a in &idx.south {
            prop_assert!(k.dot(ps.patch(*a).center) <= -tau);
        }
        let neg = index_set(&ps, -k);
        prop_assert_eq!(&neg.north, &idx.south);
        prop_assert_eq!(&neg.south, &idx.north);
    }
}
