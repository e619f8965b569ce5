use fdwls::varmodel::{objective, weight, FitStatus};
use fdwls::{fit_power_of_mean, VarianceConfig, VarianceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_residuals(mu: &[f64], c1: f64, c2: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    mu.iter()
        .map(|u| {
            let e = (c1 * u).abs().powf(c2).sqrt();
            if rng.random_bool(0.5) {
                e
            } else {
                -e
            }
        })
        .collect()
}

#[test]
fn recovers_exact_power_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for (c1, c2) in [(0.5, 1.0), (2.0, 1.0), (1.0, 2.0), (3.0, 0.5), (0.2, 3.0)] {
        let mu: Vec<f64> = (0..60).map(|_| rng.random_range(-4.0..4.0)).collect();
        let e = exact_residuals(&mu, c1, c2, &mut rng);
        let m = fit_power_of_mean(&mu, &e, &VarianceConfig::default()).unwrap();
        assert!((m.c2 - c2).abs() < 1e-4, "c2 {} vs {c2}", m.c2);
        assert!(
            (m.c1().unwrap() - c1).abs() < 1e-4,
            "c1 {:?} vs {c1}",
            m.c1()
        );
    }
}

#[test]
fn objective_not_beaten_by_search_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let cfg = VarianceConfig::default();
    for _ in 0..30 {
        let n = rng.random_range(3..40);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let e: Vec<f64> = mu.iter().map(|u| u * rng.random_range(-1.0..1.0)).collect();
        let m = fit_power_of_mean(&mu, &e, &cfg).unwrap();
        let best = objective(&mu, &e, m.a, m.c2, m.mean_floor);
        for k in 0..=400 {
            let c2 = k as f64 * 0.01;
            let floor = m.mean_floor;
            let num: f64 = mu
                .iter()
                .zip(&e)
                .map(|(u, e)| e * e * u.abs().max(floor).powf(c2))
                .sum();
            let den: f64 = mu.iter().map(|u| u.abs().max(floor).powf(2.0 * c2)).sum();
            let t = objective(&mu, &e, num / den, c2, floor);
            assert!(
                best <= t * (1.0 + 1e-10) + 1e-300,
                "grid {c2}: {t} < {best}"
            );
        }
    }
}

#[test]
fn brute_force_oracle_on_three_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..10 {
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..3.0)).collect();
        let e: Vec<f64> = mu
            .iter()
            .map(|u| u.powf(0.8) * rng.random_range(0.5..1.5))
            .collect();
        let m = fit_power_of_mean(&mu, &e, &VarianceConfig::default()).unwrap();
        let t_fit = objective(&mu, &e, m.a, m.c2, m.mean_floor);
        // exhaustive search over (a, c2) in [0.01, 10] x [0, 4]
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=2000 {
            let a = 0.01 + (10.0 - 0.01) * i as f64 / 2000.0;
            for j in 0..=400 {
                let c2 = 4.0 * j as f64 / 400.0;
                let t = objective(&mu, &e, a, c2, m.mean_floor);
                if t < best.0 {
                    best = (t, a, c2);
                }
            }
        }
        assert!(t_fit <= best.0 + 1e-12, "fit {t_fit} vs grid {}", best.0);
        if m.a <= 10.0 {
            assert!(
                (m.a - best.1).abs() < 0.05 + 0.02 * m.a,
                "a {} vs {}",
                m.a,
                best.1
            );
        }
    }
}

#[test]
fn homoscedastic_residuals() {
    let mu: Vec<f64> = (0..25).map(|i| 0.3 + 0.2 * i as f64).collect();
    let e: Vec<f64> = (0..25)
        .map(|i| if i % 3 == 0 { -1.2 } else { 1.2 })
        .collect();
    let m = fit_power_of_mean(&mu, &e, &VarianceConfig::default()).unwrap();
    assert!(m.c2 < 1e-4);
    assert!((m.a - 1.44).abs() < 1e-4);
    assert_eq!(m.status, FitStatus::Fitted);
}

#[test]
fn all_means_zero_fall_back() {
    let m = fit_power_of_mean(
        &[0.0; 5],
        &[0.1, 0.2, -0.3, 0.1, 0.0],
        &VarianceConfig::default(),
    )
    .unwrap();
    assert_eq!(m.status, FitStatus::HomoscedasticFallback);
    assert_eq!(m.c2, 0.0);
    assert_eq!(m.mean_floor, 1e-6);
}

fn model(a: f64, c2: f64) -> VarianceModel {
    VarianceModel {
        c2,
        a,
        mean_floor: 1e-6,
        weight_cap_ratio: 1e4,
        median_weight: 1.0 / 9.0,
        status: FitStatus::Fitted,
    }
}

#[test]
fn weight_formula_floor_and_clamp() {
    assert!((weight(&model(1.0, 2.0), 3.0) - 1.0 / 9.0).abs() < 1e-15);
    let flat = model(4.0, 0.0);
    for u in [-3.0, 0.0, 1e9] {
        assert_eq!(flat.raw_weight(u), 0.25);
    }
    let m = model(1.0, 2.0);
    assert!((m.raw_weight(0.0) - 1e12).abs() < 1.0);
    let capped = m.weight(0.0);
    assert!((capped - m.median_weight * 1e4).abs() < 1e-9);
    assert!(m.weight(1e9) >= m.median_weight / 1e4);
}

#[test]
fn weights_positive_finite_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for _ in 0..200 {
        let m = model(rng.random_range(0.01..10.0), rng.random_range(0.0..4.0));
        let u: f64 = rng.random_range(-1e3..1e3);
        let w = m.weight(u);
        assert!(w > 0.0 && w.is_finite());
        let (a, b) = (rng.random_range(0.01..5.0), rng.random_range(0.01..5.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if m.c2 > 0.0 {
            assert!(m.weight(lo) >= m.weight(hi));
        }
    }
}

#[test]
fn reparametrization_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let mu: Vec<f64> = (0..30).map(|_| rng.random_range(0.5..3.0)).collect();
    let e: Vec<f64> = mu
        .iter()
        .map(|u| u.powf(1.3) * rng.random_range(-1.0..1.0))
        .collect();
    let m = fit_power_of_mean(&mu, &e, &VarianceConfig::default()).unwrap();
    let c1 = m.c1().unwrap();
    for u in [1e-3, 0.5, 2.0, 17.0] {
        let lhs = (c1 * u).abs().powf(m.c2);
        let rhs = m.a * u.powf(m.c2);
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
    }
}
