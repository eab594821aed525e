use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use otfs_radar::estimator::{
    build_dictionary, matched_filter_direct, matched_filter_fast, matched_filter_naive, DdEstimate,
};
use otfs_radar::grid::{scene_to_taps, taps_to_scene, QuantizeMode, SystemConfig, Tap, TapChannel};
use otfs_radar::metrics::{frame_duration_report, image_snr, pslr};
use otfs_radar::modem::{
    apply_channel_dd, heisenberg, isfft, otfs_time_domain_link, sfft, wigner, DdFrame,
};
use proptest::prelude::*;

fn max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn scale(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(1.0, f64::max)
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Grid dimensions `(M, N)` and a frame of that shape.
fn frame(max: usize) -> impl Strategy<Value = (usize, usize, DdFrame)> {
    (2..=max, 1..=max).prop_flat_map(|(m, n)| {
        prop::collection::vec(complex(), m * n).prop_map(move |v| {
            (
                m,
                n,
                DdFrame::new(Array2::from_shape_vec((n, m), v).unwrap()),
            )
        })
    })
}

/// Up to four taps on distinct bins, delays at most `max_delay`.
fn channel(m: usize, n: usize, max_delay: usize) -> impl Strategy<Value = TapChannel> {
    prop::collection::vec((0..n, 0..=max_delay.min(m - 1), complex()), 0..4).prop_map(|v| {
        let unique: BTreeMap<(usize, usize), Complex64> =
            v.into_iter().map(|(k, l, g)| ((k, l), g)).collect();
        TapChannel::new(
            unique
                .into_iter()
                .map(|((k, l), g)| Tap::new(k, l, g))
                .collect(),
        )
        .unwrap()
    })
}

fn frame_and_channel() -> impl Strategy<Value = (SystemConfig, DdFrame, TapChannel)> {
    frame(6).prop_flat_map(|(m, n, x)| {
        let cfg = SystemConfig::unit(m, n).unwrap();
        channel(m, n, cfg.cp_length_samples).prop_map(move |h| (cfg, x.clone(), h))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transforms_round_trip((m, n, x) in frame(8)) {
        let cfg = SystemConfig::unit(m, n).unwrap();
        let tf = isfft(&x, &cfg).unwrap();
        prop_assert!((tf.energy() - x.energy()).abs() <= 1e-12 * x.energy().max(1.0));
        let back = sfft(&tf, &cfg).unwrap();
        prop_assert!(max_diff(&back.grid, &x.grid) <= 1e-12 * scale(&x.grid));
        let tf2 = wigner(&heisenberg(&tf, &cfg).unwrap(), &cfg).unwrap();
        prop_assert!(max_diff(&tf2.grid, &tf.grid) <= 1e-12 * scale(&x.grid));
    }

    #[test]
    fn channel_paths_agree((cfg, x, h) in frame_and_channel()) {
        let dd = apply_channel_dd(&x, &h, &cfg, None).unwrap();
        let time = otfs_time_domain_link(&x, &h, &cfg, None).unwrap();
        prop_assert!(max_diff(&dd.grid, &time.grid) < 1e-9);
    }

    #[test]
    fn channel_is_linear_in_the_frame(
        (cfg, x, h) in frame_and_channel(),
        a in complex(),
    ) {
        let scaled = DdFrame::new(x.grid.mapv(|v| v * a));
        let y = apply_channel_dd(&x, &h, &cfg, None).unwrap();
        let ys = apply_channel_dd(&scaled, &h, &cfg, None).unwrap();
        prop_assert!(max_diff(&ys.grid, &y.grid.mapv(|v| v * a)) < 1e-10);
    }

    #[test]
    fn matched_filters_agree((cfg, x, h) in frame_and_channel()) {
        let y = apply_channel_dd(&x, &h, &cfg, None).unwrap();
        let naive = matched_filter_naive(&y, &build_dictionary(&x, &cfg).unwrap()).unwrap();
        let direct = matched_filter_direct(&y, &x, &cfg).unwrap();
        let fast = matched_filter_fast(&y, &x, &cfg).unwrap();
        let s = scale(&naive.grid);
        prop_assert!(max_diff(&naive.grid, &direct.grid) < 1e-10 * s);
        prop_assert!(max_diff(&naive.grid, &fast.grid) < 1e-10 * s);
    }

    #[test]
    fn matched_filter_is_linear_in_the_observation(
        (cfg, x, h) in frame_and_channel(),
        a in complex(),
    ) {
        let y = apply_channel_dd(&x, &h, &cfg, None).unwrap();
        let scaled = DdFrame::new(y.grid.mapv(|v| v * a));
        let e = matched_filter_fast(&y, &x, &cfg).unwrap();
        let es = matched_filter_fast(&scaled, &x, &cfg).unwrap();
        prop_assert!(max_diff(&es.grid, &e.grid.mapv(|v| v * a)) < 1e-10 * scale(&e.grid));
    }

    #[test]
    fn pslr_and_image_snr_ignore_global_scaling(
        (m, n, x) in frame(8),
        a in complex().prop_filter("nonzero", |a| a.norm() > 1e-3),
    ) {
        let cfg = SystemConfig::unit(m, n).unwrap();
        let est = DdEstimate::from_normalized(x.grid.clone(), &cfg);
        let scaled = DdEstimate::from_normalized(x.grid.mapv(|v| v * a), &cfg);
        let mags = |e: &DdEstimate| e.grid.iter().map(|v| v.norm()).collect::<Vec<_>>();
        let (p0, p1) = (pslr(&mags(&est)).unwrap(), pslr(&mags(&scaled)).unwrap());
        prop_assert!((p0 - p1).abs() < 1e-9 || (p0.is_infinite() && p1.is_infinite()));
        prop_assert_eq!(est.argmax(), scaled.argmax());
        let bin = est.argmax();
        prop_assert!((image_snr(&est, bin) - image_snr(&scaled, bin)).abs() < 1e-9);
    }

    #[test]
    fn frame_duration_identity(m in 1usize..2048, n in 1usize..512, frac in 0.0..1.0f64) {
        let mut cfg = SystemConfig::automotive();
        cfg.num_delay_bins = m;
        cfg.num_doppler_bins = n;
        cfg.cp_length_samples = (frac * m as f64) as usize;
        let fd = frame_duration_report(&cfg);
        prop_assert_eq!(fd.otfs_samples + (n - 1) * cfg.cp_length_samples, fd.ofdm_samples);
        prop_assert_eq!(fd.saved_samples, fd.ofdm_samples - fd.otfs_samples);
    }

    #[test]
    fn integer_taps_survive_the_scene_round_trip(
        taps in prop::collection::btree_set((0usize..64, 0usize..256), 1..6),
    ) {
        let cfg = SystemConfig::automotive();
        let channel = TapChannel::new(taps.iter().map(|&(k, l)| Tap::unit(k, l)).collect()).unwrap();
        let scene = taps_to_scene(&channel, &cfg);
        let q = scene_to_taps(&scene, &cfg, QuantizeMode::Exact).unwrap();
        prop_assert_eq!(q.channel.taps(), channel.taps());
    }
}
