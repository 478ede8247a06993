use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{Calendar, GridSpec};

fn series(h: usize, w: usize, mask: Vec<bool>, data: Vec<f32>) -> FieldSeries {
    let n = data.len() / (h * w);
    FieldSeries::from_raw_clipped(GridSpec::quarter_degree(h, w), mask, Calendar::default().stamps(n), data).unwrap()
}

fn random_pair(seed: u64, h: usize, w: usize, days: usize) -> (FieldSeries, FieldSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.8)).collect();
    let a: Vec<f32> = (0..h * w * days).map(|_| rng.gen_range(0.0..30.0f32)).collect();
    let b: Vec<f32> = (0..h * w * days).map(|_| rng.gen_range(0.0..30.0f32)).collect();
    (series(h, w, mask.clone(), a), series(h, w, mask, b))
}

#[test]
fn psnr_oracle() {
    let exact = 40.0 - 10.0 * 25f64.log10();
    assert!((psnr(100.0, 25.0) - exact).abs() < 1e-9);
    assert!((psnr(100.0, 25.0) - 26.0206).abs() < 1e-4);
    assert_eq!(psnr(10.0, 0.0), f64::INFINITY);
    assert!(psnr(10.0, 2.0) < psnr(10.0, 1.0));
}

#[test]
fn two_bin_kl_oracle() {
    let kl = kl_from_probs(&[0.5, 0.5], &[0.25, 0.75]);
    assert!((kl - 0.1438).abs() < 1e-4, "{kl}");
    assert!((kl - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-15);
}

#[test]
fn kl_is_asymmetric() {
    let (p, q) = ([0.5, 0.5], [0.9, 0.1]);
    assert!((kl_from_probs(&p, &q) - kl_from_probs(&q, &p)).abs() > 1e-3);
}

#[test]
fn identical_inputs_are_perfect() {
    let (a, _) = random_pair(1, 12, 10, 6);
    let r = evaluate(&a, &a, peak_of(&a), DEFAULT_KL_BINS, DEFAULT_KL_EPSILON).unwrap();
    assert_eq!(r.pooled.rmse, 0.0);
    assert_eq!(r.pooled.psnr, f64::INFINITY);
    assert!((r.pooled.mssim - 1.0).abs() < 1e-12);
    assert!((r.pooled.corr.unwrap() - 1.0).abs() < 1e-12);
    assert!(r.kl_map.values.iter().all(|&v| v.abs() < 1e-12));
    assert!(r.kl_daily.iter().all(|&v| v.abs() < 1e-12));
    assert!(r.corr_map.values.iter().zip(&r.corr_map.defined).all(|(&v, &d)| !d || (v - 1.0).abs() < 1e-12));
}

#[test]
fn scaled_prediction_keeps_correlation() {
    let (a, _) = random_pair(2, 8, 8, 5);
    let doubled = a.map_fields(|f| {
        let mut g = f.clone();
        g.values.iter_mut().for_each(|v| *v *= 2.0);
        Ok(g)
    });
    let doubled = doubled.unwrap();
    let m = pooled_metrics(&doubled, &a, 30.0).unwrap();
    assert!((m.corr.unwrap() - 1.0).abs() < 1e-12);
    assert!(m.rmse > 0.0);
}

#[test]
fn constant_series_has_undefined_correlation() {
    let mask = vec![true; 4];
    let obs = series(2, 2, mask.clone(), vec![1.0, 2.0, 3.0, 4.0, 2.0, 3.0, 4.0, 5.0]);
    let pred = series(2, 2, mask, vec![3.0, 2.0, 3.0, 4.0, 3.0, 1.0, 4.0, 1.0]);
    let m = gridwise_maps(&pred, &obs).unwrap();
    // cell 0 prediction is constant in time
    assert_eq!(m.corr.get(0, 0), None);
    assert!(m.corr.get(0, 1).is_some());
    assert_eq!(m.rmse.n_defined(), 4);
    let flat = series(1, 2, vec![true; 2], vec![2.0, 2.0]);
    assert_eq!(pooled_metrics(&flat, &flat, 2.0).unwrap().corr, None);
}

#[test]
fn two_day_hand_rmse() {
    let obs = series(1, 1, vec![true], vec![2.0, 2.0]);
    let pred = series(1, 1, vec![true], vec![1.0, 3.0]);
    let m = gridwise_maps(&pred, &obs).unwrap();
    assert!((m.rmse.get(0, 0).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn pooled_and_gridwise_match_brute_force() {
    for seed in 0..5 {
        let (p, o) = random_pair(10 + seed, 9, 7, 11);
        let m = pooled_metrics(&p, &o, 30.0).unwrap();
        let maps = gridwise_maps(&p, &o).unwrap();
        let (mut se, mut n) = (0.0, 0.0);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let mut cell_rmse = Vec::new();
        for k in 0..63 {
            if !o.mask()[k] {
                continue;
            }
            let mut cse = 0.0;
            for t in 0..11 {
                let (a, b) = (p.day(t)[k] as f64, o.day(t)[k] as f64);
                se += (a - b).powi(2);
                cse += (a - b).powi(2);
                n += 1.0;
                xs.push(a);
                ys.push(b);
            }
            cell_rmse.push((cse / 11.0).sqrt());
        }
        assert!((m.rmse - (se / n).sqrt()).abs() < 1e-12);
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|b| (b - my).powi(2)).sum();
        assert!((m.corr.unwrap() - cov / (vx * vy).sqrt()).abs() < 1e-12);
        let brute = cell_rmse.iter().sum::<f64>() / cell_rmse.len() as f64;
        assert!((maps.rmse.mean().unwrap() - brute).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&m.mssim));
    }
}

#[test]
fn rmse_and_corr_are_symmetric() {
    let (p, o) = random_pair(3, 6, 6, 8);
    let a = pooled_metrics(&p, &o, 30.0).unwrap();
    let b = pooled_metrics(&o, &p, 30.0).unwrap();
    assert!((a.rmse - b.rmse).abs() < 1e-12);
    assert!((a.corr.unwrap() - b.corr.unwrap()).abs() < 1e-12);
}

#[test]
fn daily_kl_ignores_cell_permutation() {
    let obs = series(1, 4, vec![true; 4], vec![0.0, 5.0, 10.0, 20.0]);
    let pred = series(1, 4, vec![true; 4], vec![20.0, 0.0, 5.0, 10.0]);
    assert!(kl_daily(&pred, &obs, 10, 1e-10).unwrap()[0].abs() < 1e-12);
}

#[test]
fn two_bin_histogram_case() {
    // Two bins over [0, 10]: obs 2/2 split, pred 1/3 split.
    let obs = series(1, 4, vec![true; 4], vec![1.0, 2.0, 8.0, 10.0]);
    let pred = series(1, 4, vec![true; 4], vec![1.0, 6.0, 7.0, 9.0]);
    let kl = kl_daily(&pred, &obs, 2, 1e-10).unwrap()[0];
    assert!((kl - 0.1438).abs() < 1e-4, "{kl}");
    assert!(kl_daily(&pred, &obs, 1, 1e-10).is_err());
}

#[test]
fn climatology_and_spatial_mean() {
    let mask = vec![true, true, false];
    let s = series(1, 3, mask, vec![0.0, 2.0, 99.0, 2.0, 4.0, 99.0]);
    assert_eq!(daily_spatial_mean(&s), vec![1.0, 3.0]);
    let c = climatology(&s).unwrap();
    assert_eq!(c.values, vec![1.0, 3.0, 0.0]);
    let constant = series(2, 2, vec![true; 4], vec![4.5; 12]);
    assert!(climatology(&constant).unwrap().values.iter().all(|&v| v == 4.5));
    assert_eq!(daily_spatial_mean(&constant), vec![4.5; 3]);
}

#[test]
fn prediction_is_remasked_to_observations() {
    let obs = series(1, 2, vec![true, false], vec![1.0, 0.0]);
    let pred = series(1, 2, vec![true; 2], vec![1.0, 40.0]);
    let m = pooled_metrics(&pred, &obs, 1.0).unwrap();
    assert_eq!(m.rmse, 0.0);
}

#[test]
fn exports() {
    let (p, o) = random_pair(4, 4, 5, 3);
    let r = evaluate(&p, &o, 30.0, 10, 1e-10).unwrap();
    let csv = r.metrics_csv();
    assert!(csv.starts_with("name,value\nrmse,"));
    assert!(csv.contains("corr_pooled,") && csv.contains("corr_gridwise_mean,"));
    let map_csv = r.rmse_map.to_csv();
    assert_eq!(map_csv.lines().count(), 1 + o.n_valid());
    let pgm = r.rmse_map.to_pgm();
    assert!(pgm.starts_with(b"P5\n5 4\n255\n"));
    assert_eq!(pgm.len(), b"P5\n5 4\n255\n".len() + 20);
    assert_eq!(r.daily_csv().lines().count(), 4);
    let table = comparison_csv(&[("x".into(), r.pooled)]);
    assert!(table.starts_with("model,rmse,psnr,mssim,corr\nx,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kl_is_nonnegative(a in prop::collection::vec(0.0f64..50.0, 2..40), b in prop::collection::vec(0.0f64..50.0, 2..40), bins in 2usize..20) {
        prop_assert!(kl_samples(&a, &b, bins, 1e-10) >= -1e-12);
    }

    #[test]
    fn psnr_decreases_with_mse(m1 in 1e-6f64..1e3, d in 1e-6f64..1e3) {
        prop_assert!(psnr(50.0, m1 + d) < psnr(50.0, m1));
    }
}
