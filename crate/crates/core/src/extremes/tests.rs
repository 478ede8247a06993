use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::robustness::random_values;
use super::*;
use crate::grid::{Calendar, GridSpec};
use crate::models::AnyModel;
use crate::training::Predictor;
use crate::Architecture;

fn one_cell(values: &[f32], days_per_year: u16) -> FieldSeries {
    let cal = Calendar { start_year: 2001, first_doy: 1, days_per_year };
    FieldSeries::new(GridSpec::quarter_degree(1, 1), vec![true], cal.stamps(values.len()), values.to_vec()).unwrap()
}

fn random_grid(seed: u64, h: usize, w: usize, days: usize) -> FieldSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = (0..h * w).map(|k| k % 5 != 0).collect();
    let data: Vec<f32> = (0..h * w * days).map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..40.0) }).collect();
    let cal = Calendar { start_year: 2000, first_doy: 152, days_per_year: 30 };
    FieldSeries::from_raw_clipped(GridSpec::quarter_degree(h, w), mask, cal.stamps(days), data).unwrap()
}

#[test]
fn hand_scanned_indices() {
    let s = one_cell(&[0.0, 0.5, 3.0, 0.0, 0.0, 0.0, 2.0], 7);
    let x = extreme_indices(&s, DRY_THRESHOLD, HEAVY_THRESHOLD).unwrap();
    assert_eq!(x.cdd.get(0, 0), Some(3.0));
    assert_eq!(x.r20.get(0, 0), Some(0.0));
    assert_eq!(x.rx1day.get(0, 0), Some(3.0));
    let s = one_cell(&[25.0, 5.0, 30.0, 19.9], 4);
    assert_eq!(extreme_indices(&s, 1.0, 20.0).unwrap().r20.get(0, 0), Some(2.0));
    assert_eq!(scan_year(&[20.0, 1.0], 1.0, 20.0), YearIndices { cdd: 0, r20: 0, rx1day: 20.0 });
}

#[test]
fn all_zero_year() {
    let s = one_cell(&[0.0; 10], 10);
    let x = extreme_indices(&s, 1.0, 20.0).unwrap();
    assert_eq!(x.cdd.get(0, 0), Some(10.0));
    assert_eq!(x.rx1day.get(0, 0), Some(0.0));
    assert_eq!(x.n_years, 1);
}

#[test]
fn indices_average_over_years() {
    // year 1: cdd 2, r20 1, max 25; year 2: cdd 3, r20 0, max 5
    let s = one_cell(&[0.0, 0.0, 25.0, 0.0, 0.0, 0.0, 0.0, 5.0], 4);
    let x = extreme_indices(&s, 1.0, 20.0).unwrap();
    assert_eq!(x.n_years, 2);
    assert_eq!(x.cdd.get(0, 0), Some(2.5));
    assert_eq!(x.r20.get(0, 0), Some(0.5));
    assert_eq!(x.rx1day.get(0, 0), Some(15.0));
}

#[test]
fn empty_series_is_rejected() {
    let s = one_cell(&[], 5);
    assert!(extreme_indices(&s, 1.0, 20.0).is_err());
}

#[test]
fn indices_match_brute_force_on_many_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let per = rng.gen_range(1..12u16);
        let n = rng.gen_range(1..40usize);
        let vals: Vec<f32> = (0..n)
            .map(|_| match rng.gen_range(0..4) {
                0 => 0.0,
                1 => rng.gen_range(0.0..1.5),
                2 => rng.gen_range(18.0..22.0),
                _ => rng.gen_range(0.0..60.0),
            })
            .collect();
        let x = extreme_indices(&one_cell(&vals, per), 1.0, 20.0).unwrap();
        let (mut cdd, mut r20, mut rx, mut years) = (0.0, 0.0, 0.0, 0.0);
        for chunk in vals.chunks(per as usize) {
            let mut best = 0;
            for i in 0..chunk.len() {
                let mut j = i;
                while j < chunk.len() && (chunk[j] as f64) < 1.0 {
                    j += 1;
                }
                best = best.max(j - i);
            }
            cdd += best as f64;
            r20 += chunk.iter().filter(|&&v| v as f64 > 20.0).count() as f64;
            rx += chunk.iter().fold(0.0f64, |m, &v| m.max(v as f64));
            years += 1.0;
        }
        assert_eq!(x.cdd.get(0, 0), Some(cdd / years));
        assert_eq!(x.r20.get(0, 0), Some(r20 / years));
        assert_eq!(x.rx1day.get(0, 0), Some(rx / years));
        assert!(x.cdd.get(0, 0).unwrap() <= per as f64);
    }
}

#[test]
fn detection_hand_confusion() {
    // TP=2, FP=1, FN=1, TN=6
    let obs: Vec<f32> = vec![25.0, 30.0, 0.0, 21.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let pred: Vec<f32> = vec![20.0, 22.0, 20.5, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let s = detection_scores_for(&pred, &obs);
    assert_eq!(s.confusion, Confusion { tp: 2, fp: 1, fn_: 1, tn: 6 });
    assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((s.accuracy - 0.8).abs() < 1e-15);
}

fn detection_scores_for(pred: &[f32], obs: &[f32]) -> DetectionScores {
    let spec = GridSpec::quarter_degree(1, pred.len());
    let mk = |v: &[f32]| FieldSeries::new(spec, vec![true; v.len()], Calendar::default().stamps(1), v.to_vec()).unwrap();
    extreme_detection_scores(&mk(pred), &mk(obs), DETECTION_THRESHOLD).unwrap()
}

#[test]
fn detection_edge_cases() {
    let s = detection_scores_for(&[20.0, 1.0], &[20.0, 1.0]);
    assert_eq!(s.f1, Some(1.0));
    assert_eq!(s.accuracy, 1.0);
    let s = detection_scores_for(&[25.0, 1.0], &[2.0, 1.0]);
    assert_eq!(s.f1, None);
    assert!(detection_csv(&[("m".into(), s)]).contains("m,undefined,0.5,0,1,0,1"));
}

fn sample_skewness(a: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| skew_normal_sample(a, &mut rng)).collect();
    let m = x.iter().sum::<f64>() / n as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n as f64;
    m3 / m2.powf(1.5)
}

#[test]
fn skew_normal_moments() {
    let s0 = sample_skewness(0.0, 1_000_000, 1);
    assert!(s0.abs() < 0.01, "{s0}");
    let s5 = sample_skewness(5.0, 1_000_000, 2);
    let theory = skew_normal_skewness(5.0);
    assert!((s5 - theory).abs() < 0.02, "{s5} vs {theory}");
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    assert_eq!(skew_normal_sample(5.0, &mut a), skew_normal_sample(5.0, &mut b));
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[test]
fn temporal_random_keeps_cell_moments_before_clipping() {
    let r = random_grid(5, 6, 5, 60);
    let cfg = SkewNoiseConfig::new(SkewMode::Temporal, 11);
    let raw = random_values(&r, &cfg).unwrap();
    let nc = r.n_cells();
    for k in r.valid_cells() {
        let col: Vec<f64> = (0..r.n_days()).map(|t| raw[t * nc + k]).collect();
        let (m, s) = moments(&col);
        let (rm, rs) = moments(&r.cell_series(k));
        assert!((m - rm).abs() < 1e-9 && (s - rs).abs() < 1e-9);
    }
    let out = random_series(&r, &cfg).unwrap();
    assert!(out.data().iter().all(|&v| v >= 0.0));
    for k in 0..nc {
        if !r.mask()[k] {
            assert!(out.cell_series(k).iter().all(|&v| v == 0.0));
        }
    }
    assert_eq!(out, random_series(&r, &cfg).unwrap());
    assert_ne!(out, random_series(&r, &SkewNoiseConfig::new(SkewMode::Temporal, 12)).unwrap());
}

#[test]
fn spatial_random_keeps_daily_moments_before_clipping() {
    let r = random_grid(6, 8, 8, 12);
    let cfg = SkewNoiseConfig::new(SkewMode::Spatial, 4);
    let raw = random_values(&r, &cfg).unwrap();
    let cells = r.valid_cells();
    let nc = r.n_cells();
    for t in 0..r.n_days() {
        let a: Vec<f64> = cells.iter().map(|&k| raw[t * nc + k]).collect();
        let b: Vec<f64> = cells.iter().map(|&k| r.day(t)[k] as f64).collect();
        let ((ma, sa), (mb, sb)) = (moments(&a), moments(&b));
        assert!((ma - mb).abs() < 1e-9 && (sa - sb).abs() < 1e-9);
    }
    assert_eq!(random_series(&r, &cfg).unwrap(), random_series(&r, &cfg).unwrap());
}

#[test]
fn zero_variance_reference_gives_constant() {
    assert_eq!(standardize_rescale(&[1.0, -2.0, 0.5], 3.0, 0.0), vec![3.0; 3]);
    let s = one_cell(&[4.0; 6], 6);
    let out = temporal_random_series(&s, 5.0, 1).unwrap();
    assert!(out.data().iter().all(|&v| v == 4.0));
    let day = FieldSeries::new(GridSpec::quarter_degree(2, 2), vec![true; 4], Calendar::default().stamps(1), vec![2.0; 4]).unwrap();
    assert!(spatial_random_series(&day, 5.0, 1).unwrap().data().iter().all(|&v| v == 2.0));
    assert!("spatial".parse::<SkewMode>().is_ok() && "other".parse::<SkewMode>().is_err());
}

#[test]
fn identical_real_and_random_inputs_give_equal_correlation() {
    let obs = random_grid(7, 8, 8, 6);
    let input = random_grid(8, 8, 8, 6);
    let model = Predictor { model: AnyModel::init_seeded(Architecture::MaunetLight, 3), data_scale: 10.0 };
    let r = robustness_report(&model, &input, &[("same".into(), input.clone())], &obs).unwrap();
    assert_eq!(r.random[0].1, r.real);
    assert!(!r.random_is_worse());
    assert!(r.to_csv().starts_with("input_kind,mean_gridwise_corr\nraw_input,"));
}
