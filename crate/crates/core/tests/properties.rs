//! Property-based invariants: FFT linearity and energy conservation, token
//! scan bijectivity, keypoint-similarity monotonicity, and clutter-removal
//! zero-mean output.

use num_complex::Complex64;
use proptest::prelude::*;

use millimamba::dsp::{fft_1d, remove_clutter};
use millimamba::encoder::{scan_index, scan_unindex, EncoderConfig, EncoderKind};
use millimamba::objective::{oks, OksParams};
use millimamba::radar_sim::{CubeDims, RadarCube, View};

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_is_linear(
        n in prop::sample::select(vec![4usize, 8, 12, 16, 64]),
        alpha_re in -2.0f64..2.0,
        alpha_im in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Vec<Complex64> {
            (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
        };
        let (x, y) = (draw(), draw());
        let alpha = Complex64::new(alpha_re, alpha_im);
        let combo: Vec<Complex64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
        let fx = fft_1d(&x, n).unwrap();
        let fy = fft_1d(&y, n).unwrap();
        let fc = fft_1d(&combo, n).unwrap();
        for ((a, b), c) in fx.iter().zip(&fy).zip(&fc) {
            let want = alpha * a + b;
            prop_assert!((c - want).norm() < 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn fft_conserves_energy(x in complex_vec(16)) {
        // Unnormalized forward transform: sum |X|^2 = N * sum |x|^2.
        let y = fft_1d(&x, 16).unwrap();
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ey - 16.0 * ex).abs() < 1e-9 * (1.0 + 16.0 * ex));
    }

    #[test]
    fn scan_order_is_bijective(
        frames in 1usize..4,
        views in 1usize..3,
        height4 in 1usize..4,
        width4 in 1usize..5,
        serpentine in any::<bool>(),
    ) {
        let cfg = EncoderConfig {
            views,
            frames,
            c_f: 8,
            height: 4 * height4,
            width: 4 * width4,
            doppler: 8,
            layers: 1,
            d_state: 4,
            expand: 2,
            conv_kernel: 4,
            serpentine,
            kind: EncoderKind::Mamba,
        };
        let n = cfg.n_tokens();
        let mut seen = vec![false; n];
        for f in 0..frames {
            for v in 0..views {
                for a in 0..height4 {
                    for r in 0..width4 {
                        let idx = scan_index(&cfg, f, v, a, r);
                        prop_assert!(idx < n);
                        prop_assert!(!seen[idx]);
                        seen[idx] = true;
                        prop_assert_eq!(scan_unindex(&cfg, idx), (f, v, a, r));
                    }
                }
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn oks_never_increases_as_a_joint_moves_away(
        gx in 0.0f64..1.0,
        gy in 0.0f64..1.0,
        dx in -0.5f64..0.5,
        dy in -0.5f64..0.5,
        stretch in 1.0f64..5.0,
    ) {
        let params = OksParams::uniform(2, 0.079, 1.0);
        let gt = [[gx, gy], [0.5, 0.5]];
        let vis = [1u8, 1];
        let near = [[gx + dx, gy + dy], [0.5, 0.5]];
        let far = [[gx + stretch * dx, gy + stretch * dy], [0.5, 0.5]];
        let s_near = oks(&near, &gt, &vis, &params).unwrap();
        let s_far = oks(&far, &gt, &vis, &params).unwrap();
        prop_assert!(s_far <= s_near + 1e-12);
        prop_assert!((0.0..=1.0).contains(&s_near));
    }

    #[test]
    fn clutter_removal_output_has_zero_chirp_mean(
        seed in any::<u64>(),
        chirps in prop::sample::select(vec![2usize, 4, 8]),
    ) {
        use rand::{Rng, SeedableRng};
        let dims = CubeDims { antennas: 2, chirps, adc: 3 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut cube = RadarCube::zeros(dims, 0, View::Vertical);
        for s in cube.samples.iter_mut() {
            *s = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let out = remove_clutter(&cube);
        for a in 0..dims.antennas {
            for n in 0..dims.adc {
                let mean: Complex64 = (0..chirps).map(|c| out.at(a, c, n)).sum::<Complex64>()
                    / chirps as f64;
                prop_assert!(mean.norm() < 1e-12);
            }
        }
    }
}
