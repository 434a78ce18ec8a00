use super::nuts::{Hamiltonian, Point};
use super::*;

fn std_normal(dim: usize) -> FnDensity<impl Fn(&[f64], &mut [f64]) -> f64 + Sync> {
    FnDensity::new(dim, |x: &[f64], g: &mut [f64]| {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = -xi;
        }
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    })
}

fn names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).collect()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn short(seed: u64) -> NutsConfig {
    NutsConfig { n_iter: 3000, n_warmup: 1000, seed, ..NutsConfig::default() }
}

#[test]
fn standard_normal_moments() {
    let target = std_normal(5);
    let draws = nuts_sample(&target, names(5), &short(7)).unwrap();
    assert_eq!(draws.n_chains(), 2);
    assert_eq!(draws.n_draws(), 2000);
    assert_eq!(draws.n_divergent(), 0);
    for i in 0..5 {
        let all: Vec<f64> = draws.column(i).concat();
        let (m, sd) = moments(&all);
        assert!(m.abs() <= 0.05, "mean[{i}] = {m}");
        assert!((sd - 1.0).abs() <= 0.05, "sd[{i}] = {sd}");
    }
}

#[test]
fn slice_variant_standard_normal() {
    let target = std_normal(3);
    let cfg = NutsConfig { variant: SamplingVariant::Slice, ..short(8) };
    let draws = nuts_sample(&target, names(3), &cfg).unwrap();
    assert_eq!(draws.n_divergent(), 0);
    for i in 0..3 {
        let (m, sd) = moments(&draws.column(i).concat());
        assert!(m.abs() <= 0.08, "mean[{i}] = {m}");
        assert!((sd - 1.0).abs() <= 0.08, "sd[{i}] = {sd}");
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let target = std_normal(4);
    let cfg = NutsConfig { n_iter: 400, n_warmup: 200, seed: 3, ..NutsConfig::default() };
    let a = nuts_sample(&target, names(4), &cfg).unwrap();
    let b = nuts_sample(&target, names(4), &cfg).unwrap();
    assert_eq!(a, b);
    let c = nuts_sample(&target, names(4), &NutsConfig { seed: 4, ..cfg.clone() }).unwrap();
    assert_ne!(a.chains[0].draws, c.chains[0].draws);
    // A chain run alone matches the same chain inside the batch.
    let solo = run_chain(&target, None, &cfg, 1).unwrap();
    assert_eq!(solo, a.chains[1]);
    assert_ne!(a.chains[0].draws, a.chains[1].draws);
}

#[test]
fn ill_scaled_gaussian_adapts_mass_matrix() {
    let var = [1.0, 1e4];
    let target = FnDensity::new(2, move |x: &[f64], g: &mut [f64]| {
        let mut lp = 0.0;
        for i in 0..2 {
            g[i] = -x[i] / var[i];
            lp -= 0.5 * x[i] * x[i] / var[i];
        }
        lp
    });
    let draws = nuts_sample(&target, names(2), &short(11)).unwrap();
    let c = &draws.chains[0];
    let ratio = c.inv_mass[1] / c.inv_mass[0];
    assert!(ratio > 3e3 && ratio < 3e4, "inverse mass ratio {ratio}");
    let (_, sd) = moments(&draws.column(1).concat());
    assert!((sd - 100.0).abs() < 8.0, "sd = {sd}");
}

/// Kolmogorov-Smirnov distance between a sample and `N(0, sd²)`.
fn ks_normal(sample: &[f64], sd: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, sd).unwrap();
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let len = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = n.cdf(x);
            (f - i as f64 / len).abs().max(((i + 1) as f64 / len - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn marginals_pass_kolmogorov_smirnov() {
    // Correlated 2-d Gaussian, correlation 0.9, marginal sds 1 and 2.
    let (s1, s2, r) = (1.0f64, 2.0f64, 0.9f64);
    let det = s1 * s1 * s2 * s2 * (1.0 - r * r);
    let prec = [s2 * s2 / det, -r * s1 * s2 / det, s1 * s1 / det];
    let target = FnDensity::new(2, move |x: &[f64], g: &mut [f64]| {
        g[0] = -(prec[0] * x[0] + prec[1] * x[1]);
        g[1] = -(prec[1] * x[0] + prec[2] * x[1]);
        0.5 * (x[0] * g[0] + x[1] * g[1])
    });
    let draws = nuts_sample(&target, names(2), &short(5)).unwrap();
    // 1% critical value for 4,000 pooled draws.
    let crit = 1.628 / (4000f64).sqrt();
    for (i, sd) in [(0, s1), (1, s2)] {
        let d = ks_normal(&draws.column(i).concat(), sd);
        assert!(d < crit, "KS[{i}] = {d} >= {crit}");
    }
}

#[test]
fn leapfrog_conserves_energy_at_tiny_steps() {
    let target = FnDensity::new(2, |x: &[f64], g: &mut [f64]| {
        g[0] = -(2.0 * x[0] + 0.5 * x[1]);
        g[1] = -(0.5 * x[0] + 1.0 * x[1]);
        0.5 * (x[0] * g[0] + x[1] * g[1])
    });
    let inv_mass = [1.0, 0.5];
    let ham = Hamiltonian { target: &target, inv_mass: &inv_mass };
    let mut z = Point::new(&target, vec![1.0, -0.5]);
    z.p = vec![0.3, 0.8];
    let h0 = ham.energy(&z);
    let mut worst: f64 = 0.0;
    for _ in 0..1024 {
        ham.leapfrog(&mut z, 1e-4);
        worst = worst.max((ham.energy(&z) - h0).abs());
    }
    assert!(worst <= 1e-6, "drift {worst}");
}

#[test]
fn quartic_target_stays_finite() {
    let target = FnDensity::new(1, |x: &[f64], g: &mut [f64]| {
        g[0] = -4.0 * x[0].powi(3);
        -x[0].powi(4)
    });
    let cfg = NutsConfig { n_iter: 300, n_warmup: 150, seed: 2, divergence_threshold: 1000.0, ..NutsConfig::default() };
    let draws = nuts_sample(&target, names(1), &cfg).unwrap();
    assert!(draws.chains.iter().all(|c| c.draws.iter().all(|d| d[0].is_finite())));
}

#[test]
fn infinite_target_reports_init_failure() {
    let target = FnDensity::new(2, |_: &[f64], _: &mut [f64]| f64::NEG_INFINITY);
    let err = nuts_sample(&target, names(2), &short(1)).unwrap_err();
    assert!(err.to_string().contains("100 retries"), "{err}");
}

#[test]
fn init_retries_escape_a_bad_region() {
    // Support is x > 0; the default init lands outside half the time.
    let target = FnDensity::new(1, |x: &[f64], g: &mut [f64]| {
        if x[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        g[0] = 1.0 / x[0] - 1.0;
        x[0].ln() - x[0]
    });
    let cfg = NutsConfig { n_iter: 2000, n_warmup: 1000, seed: 9, ..NutsConfig::default() };
    let draws = nuts_sample(&target, names(1), &cfg).unwrap();
    let (m, _) = moments(&draws.column(0).concat());
    assert!((m - 2.0).abs() < 0.15, "Gamma(2,1) mean {m}");
}

#[test]
fn config_validation() {
    assert!(NutsConfig { n_warmup: 10, n_iter: 10, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig { target_accept: 1.0, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig { n_chains: 0, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig::default().validate().is_ok());
    let target = std_normal(2);
    assert!(nuts_sample(&target, names(3), &short(1)).is_err());
}

#[test]
fn log_and_csv_have_expected_shape() {
    let target = std_normal(2);
    let cfg = NutsConfig { n_iter: 60, n_warmup: 30, ..NutsConfig::default() };
    let draws = nuts_sample(&target, names(2), &cfg).unwrap();
    let mut log = Vec::new();
    draws.write_log(&mut log).unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&log).unwrap().lines().collect();
    assert_eq!(lines.len(), 120);
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["chain"], 0);
    assert_eq!(v["warmup"], true);
    let mut csv = Vec::new();
    draws.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("chain,draw,lp,divergent,x0,x1\n"));
    assert_eq!(text.lines().count(), 61);
    let back = PosteriorDraws::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.names, draws.names);
    for (a, b) in back.chains.iter().zip(&draws.chains) {
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.log_density, b.log_density);
        assert_eq!(a.divergent, b.divergent);
    }
    assert!(PosteriorDraws::read_csv("chain,lp\n".as_bytes()).is_err());
}
