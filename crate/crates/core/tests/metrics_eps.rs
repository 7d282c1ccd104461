use mpibench_core::metrics::{
    eps_metrics, eps_metrics_uncached, psnr, reference_set, ssim3d, ShiftGrid, DEFAULT_DATA_RANGE,
};
use mpibench_core::simdata::{random_volume, rasterize_phantom, GridSpec, PhantomSpec, DEFAULT_SUPERSAMPLE};
use proptest::prelude::*;

fn cone() -> (PhantomSpec, GridSpec) {
    (PhantomSpec::shape_cone(), GridSpec::default())
}

#[test]
fn shifted_reference_is_recovered() {
    let (spec, grid) = cone();
    let x = rasterize_phantom(&spec, &grid, [1.0, -0.5, 0.0], DEFAULT_SUPERSAMPLE)
        .unwrap()
        .volume;
    let rep = eps_metrics(&x, &spec, &grid, &ShiftGrid::default(), DEFAULT_DATA_RANGE).unwrap();
    assert_eq!(rep.eps_psnr, f64::INFINITY);
    assert_eq!(rep.psnr_shift, [1.0, -0.5, 0.0]);
    assert_eq!(rep.eps_ssim, 1.0);
    assert_eq!(rep.ssim_shift, [1.0, -0.5, 0.0]);
    assert_eq!(rep.psnr_per_shift.len(), 2197);
}

#[test]
fn zero_volume_matches_direct_recomputation() {
    let (spec, grid) = cone();
    let shifts = ShiftGrid::default();
    let x = grid.empty_volume();
    let rep = eps_metrics(&x, &spec, &grid, &shifts, DEFAULT_DATA_RANGE).unwrap();
    let r = rasterize_phantom(&spec, &grid, rep.psnr_shift, DEFAULT_SUPERSAMPLE)
        .unwrap()
        .volume;
    let mean_sq = r.values.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    let direct = 10.0 * (DEFAULT_DATA_RANGE * DEFAULT_DATA_RANGE / mean_sq).log10();
    assert!((rep.eps_psnr - direct).abs() < 1e-9, "{} vs {direct}", rep.eps_psnr);
    // every other shift leaves at least as much mass inside the grid
    let best_mass: f64 = r.values.iter().map(|v| v * v).sum();
    for &s in shifts.shifts().iter().step_by(97) {
        let other = rasterize_phantom(&spec, &grid, s, DEFAULT_SUPERSAMPLE).unwrap().volume;
        assert!(other.values.iter().map(|v| v * v).sum::<f64>() >= best_mass - 1e-9);
    }
}

#[test]
fn unshifted_scores_match_direct_metrics() {
    let (spec, grid) = cone();
    let refs = reference_set(&spec, &grid, &ShiftGrid::default()).unwrap();
    let x = random_volume(&grid, 60.0, 11);
    let rep = refs.evaluate(&x, DEFAULT_DATA_RANGE).unwrap();
    let r0 = rasterize_phantom(&spec, &grid, [0.0; 3], DEFAULT_SUPERSAMPLE)
        .unwrap()
        .volume;
    assert_eq!(rep.unshifted_psnr, psnr(&x, &r0, DEFAULT_DATA_RANGE).unwrap());
    assert_eq!(rep.unshifted_ssim, ssim3d(&x, &r0, DEFAULT_DATA_RANGE).unwrap());
    assert!(rep.eps_psnr >= rep.unshifted_psnr);
    assert!(rep.eps_ssim >= rep.unshifted_ssim);
    let (p, s) = refs.eps_psnr(&x, DEFAULT_DATA_RANGE).unwrap();
    assert_eq!((p, s), (rep.eps_psnr, rep.psnr_shift));
}

#[test]
fn cached_and_uncached_agree_bitwise() {
    let (spec, grid) = cone();
    let shifts = ShiftGrid::new(1.0, 0.5).unwrap();
    for seed in 0..3 {
        let x = random_volume(&grid, 50.0, seed);
        let a = eps_metrics(&x, &spec, &grid, &shifts, DEFAULT_DATA_RANGE).unwrap();
        let b = eps_metrics_uncached(&x, &spec, &grid, &shifts, DEFAULT_DATA_RANGE).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.psnr_per_shift), bits(&b.psnr_per_shift));
        assert_eq!(bits(&a.ssim_per_shift), bits(&b.ssim_per_shift));
        assert_eq!(a, b);
    }
}

#[test]
fn enlarging_the_shift_set_never_lowers_scores() {
    let (spec, grid) = cone();
    let small = ShiftGrid::new(1.0, 0.5).unwrap();
    let large = ShiftGrid::default();
    for seed in 0..4 {
        let mut x = rasterize_phantom(&spec, &grid, [0.5, 1.5, -2.0], DEFAULT_SUPERSAMPLE)
            .unwrap()
            .volume;
        let noise = random_volume(&grid, 5.0, seed);
        for (v, n) in x.values.iter_mut().zip(&noise.values) {
            *v += n;
        }
        let a = eps_metrics(&x, &spec, &grid, &small, DEFAULT_DATA_RANGE).unwrap();
        let b = eps_metrics(&x, &spec, &grid, &large, DEFAULT_DATA_RANGE).unwrap();
        assert!(b.eps_psnr >= a.eps_psnr);
        assert!(b.eps_ssim >= a.eps_ssim);
        assert_eq!(a.unshifted_psnr, b.unshifted_psnr);
    }
}

#[test]
fn report_json_round_trip() {
    let (spec, grid) = cone();
    let x = rasterize_phantom(&spec, &grid, [0.0; 3], DEFAULT_SUPERSAMPLE)
        .unwrap()
        .volume;
    let rep = eps_metrics(&x, &spec, &grid, &ShiftGrid::new(0.5, 0.5).unwrap(), 100.0).unwrap();
    let text = serde_json::to_string(&rep).unwrap();
    assert!(text.contains("\"eps_psnr\":\"inf\""));
    assert!(text.contains("\"data_range\":100.0"));
    let back: mpibench_core::metrics::QualityReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rep);
}

proptest! {
    #[test]
    fn shift_grid_is_symmetric(m in 0usize..6, step in prop::sample::select(vec![0.25, 0.5, 1.0, 0.1])) {
        let g = ShiftGrid::new(m as f64 * step, step).unwrap();
        let shifts = g.shifts();
        prop_assert_eq!(shifts.len(), (2 * m + 1).pow(3));
        for s in &shifts {
            let neg = [-s[0], -s[1], -s[2]];
            prop_assert!(shifts.iter().any(|t| t == &neg), "missing {:?}", neg);
        }
    }

    #[test]
    fn ssim_bounded_and_symmetric(seed in 0u64..1000, hi in 1.0f64..200.0) {
        let grid = GridSpec { shape: [8, 9, 7], fov: [8.0, 9.0, 7.0], origin: [0.0; 3] };
        let a = random_volume(&grid, hi, seed);
        let b = random_volume(&grid, hi, seed + 1);
        let s = ssim3d(&a, &b, 100.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        let t = ssim3d(&b, &a, 100.0).unwrap();
        prop_assert!((s - t).abs() < 1e-12);
    }
}
