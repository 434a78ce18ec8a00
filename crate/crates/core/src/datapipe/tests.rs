use super::*;
use crate::gmrf::{CarArParams, CarArState};
use crate::graph::SpatialGraph;
use crate::model::{ModelSpec, ParamBlock};
use crate::richards::RichardsParams;

fn series(region: &str, start: NaiveDate, daily: &[i64], pop: f64) -> RawSeries {
    let mut cum = 0;
    let days = daily
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            cum += d;
            DailyRecord { date: start + Duration::days(k as i64), cumulative_cases: cum, cumulative_swabs: Some(10 * cum) }
        })
        .collect();
    RawSeries { region: region.into(), population: pop, days }
}

#[test]
fn wave_lengths() {
    assert_eq!(week_blocks(&WaveWindow::wave_one(), WeekAnchor::Calendar).len(), 22);
    assert_eq!(week_blocks(&WaveWindow::wave_two(), WeekAnchor::Calendar).len(), 24);
    assert_eq!(week_blocks(&WaveWindow::wave_one(), WeekAnchor::WindowStart).len(), 21);
    assert_eq!(week_blocks(&WaveWindow::wave_two(), WeekAnchor::WindowStart).len(), 23);
    let blocks = week_blocks(&WaveWindow::wave_one(), WeekAnchor::Calendar);
    // 24 Feb is day 55, inside the block of days 50..56.
    assert_eq!(blocks[0], (ymd(2020, 2, 24), ymd(2020, 2, 25)));
    assert_eq!(blocks[1], (ymd(2020, 2, 26), ymd(2020, 3, 3)));
    assert_eq!(*blocks.last().unwrap(), (ymd(2020, 7, 15), ymd(2020, 7, 19)));
    let days: i64 = blocks.iter().map(|(a, b)| (*b - *a).num_days() + 1).sum();
    assert_eq!(days, 147);
}

#[test]
fn constant_cumulative_gives_zero_counts() {
    let w = WaveWindow::wave_one();
    let s = RawSeries {
        region: "a".into(),
        population: 1e6,
        days: w.days().map(|date| DailyRecord { date, cumulative_cases: 500, cumulative_swabs: Some(9000) }).collect(),
    };
    let mut prior = s.clone();
    prior.days.insert(0, DailyRecord { date: w.start - Duration::days(1), cumulative_cases: 500, cumulative_swabs: Some(9000) });
    let out = aggregate_weekly(&[prior], &w, &AggregateOptions::default()).unwrap();
    assert!(out.panel.counts[0].iter().all(|&c| c == 0));
    assert!(out.panel.covariates[0].iter().all(|c| c[0] == 0.0));
    assert!((out.panel.offset_log[0] - 10f64.ln()).abs() < 1e-15);
}

#[test]
fn known_weekly_sums() {
    // Daily new cases k + 1 on day k of a 21-day window-anchored panel.
    let start = ymd(2021, 3, 1);
    let daily: Vec<i64> = (0..23).map(|k| k + 1).collect();
    let s = series("a", start, &daily, 2e5);
    let w = WaveWindow::new(start, start + Duration::days(22)).unwrap();
    let opts = AggregateOptions { anchor: WeekAnchor::WindowStart, ..AggregateOptions::default() };
    let out = aggregate_weekly(&[s.clone()], &w, &opts).unwrap();
    // 1..7, 8..14, 15..21; days 22-23 form a dropped partial block.
    assert_eq!(out.panel.counts[0], vec![28, 77, 126]);
    assert_eq!(out.panel.covariates[0][1][0], 770.0);
    assert_eq!(out.week_starts, vec![start, start + Duration::days(7), start + Duration::days(14)]);
    // Conservation under calendar weeks (all days kept).
    let cal = aggregate_weekly(&[s], &w, &AggregateOptions::default()).unwrap();
    let total: u64 = cal.panel.counts[0].iter().sum();
    assert_eq!(total as i64, daily.iter().sum::<i64>());
}

#[test]
fn corrections_are_clamped_or_rejected() {
    let start = ymd(2021, 1, 4);
    let mut daily = vec![10i64; 21];
    daily[9] = -75; // second week nets 6 * 10 - 75 = -15
    let s = series("a", start, &daily, 1e5);
    let w = WaveWindow::new(start, start + Duration::days(20)).unwrap();
    let opts = AggregateOptions { anchor: WeekAnchor::WindowStart, ..AggregateOptions::default() };
    let out = aggregate_weekly(&[s.clone()], &w, &opts).unwrap();
    assert_eq!(out.panel.counts[0], vec![70, 0, 70]);
    assert_eq!(out.clamped, vec![("a".to_string(), 1)]);
    assert_eq!(s.decreases(), vec![start + Duration::days(9)]);
    let mut big = daily.clone();
    big[9] = -500;
    let err = aggregate_weekly(&[series("a", start, &big, 1e5)], &w, &opts).unwrap_err();
    assert!(err.to_string().contains("drops"), "{err}");
}

#[test]
fn missing_region_window_is_an_error() {
    let s = series("late", ymd(2022, 1, 1), &[1; 10], 1e5);
    assert!(aggregate_weekly(&[s], &WaveWindow::wave_one(), &AggregateOptions::default()).is_err());
}

#[test]
fn daily_csv_merges_provinces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("daily.csv");
    std::fs::write(
        &path,
        "data,stato,denominazione_regione,totale_casi,tamponi\n\
         2020-02-24T18:00:00,ITA,P.A. Trento,1,10\n\
         2020-02-24T18:00:00,ITA,P.A. Bolzano,2,20\n\
         2020-02-24T18:00:00,ITA,Lazio,3,30\n\
         2020-02-25T18:00:00,ITA,P.A. Trento,4,40\n\
         2020-02-25T18:00:00,ITA,P.A. Bolzano,5,50\n\
         2020-02-25T18:00:00,ITA,Lazio,6,60\n",
    )
    .unwrap();
    let raw = read_daily_csv(&path, &italy::PROVINCE_MERGE).unwrap();
    assert_eq!(raw.len(), 2);
    assert_eq!(raw[0].region, "Trentino-Alto Adige");
    assert_eq!(raw[0].days[0].cumulative_cases, 3);
    assert_eq!(raw[0].days[1].cumulative_cases, 9);
    assert_eq!(raw[0].days[1].cumulative_swabs, Some(90));
    assert_eq!(raw[1].days[1].cumulative_cases, 6);
    let pop_path = dir.path().join("pop.csv");
    std::fs::write(&pop_path, "region,population\nTrentino-Alto Adige,1000000\nLazio,5000000\n").unwrap();
    let mut raw = raw;
    attach_populations(&mut raw, &read_population_csv(&pop_path).unwrap()).unwrap();
    assert_eq!(raw[1].population, 5e6);
}

#[test]
fn panel_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    let mut p = CountPanel::new(
        vec!["x".into(), "y".into()],
        vec![vec![1, 2, 3], vec![4, 5, 6]],
        vec![(2.5f64).ln(), (0.4f64).ln()],
    )
    .unwrap();
    p.covariates = vec![vec![vec![10.0], vec![20.0], vec![30.0]], vec![vec![1.0], vec![2.0], vec![3.5]]];
    p.covariate_names = vec!["swabs".into()];
    write_panel_csv(&path, &p).unwrap();
    let back = read_panel_csv(&path).unwrap();
    assert_eq!(back.counts, p.counts);
    assert_eq!(back.covariates, p.covariates);
    for (a, b) in back.offset_log.iter().zip(&p.offset_log) {
        assert!((a - b).abs() < 1e-12);
    }
    std::fs::write(&path, "region,week,count,population,swabs\nx,1,1,100,\nx,3,1,100,\n").unwrap();
    assert!(read_panel_csv(&path).is_err());
    std::fs::write(&path, "region,week,count,population,swabs\nx,1,1,100,\nx,2,1,100,5\n").unwrap();
    assert!(read_panel_csv(&path).is_err());
}

#[test]
fn align_reorders_regions() {
    let p = CountPanel::new(vec!["b".into(), "a".into()], vec![vec![1, 1], vec![2, 2]], vec![0.0, 1.0]).unwrap();
    let q = align_regions(&p, &["a".to_string(), "b".to_string()]).unwrap();
    assert_eq!(q.counts, vec![vec![2, 2], vec![1, 1]]);
    assert_eq!(q.offset_log, vec![1.0, 0.0]);
    assert!(align_regions(&p, &["a".to_string(), "c".to_string()]).is_err());
}

fn flat_panel(g: usize, t: usize) -> CountPanel {
    CountPanel::new((0..g).map(|i| format!("r{i}")).collect(), vec![vec![0; t]; g], vec![0.0; g]).unwrap()
}

#[test]
fn holdout_masks() {
    let p = flat_panel(4, 22);
    let m = make_holdout(&p, 0.15, 9).unwrap();
    assert!(m.masked.iter().all(|w| w.len() == 3));
    assert_eq!(m, make_holdout(&p, 0.15, 9).unwrap());
    assert_ne!(m, make_holdout(&p, 0.15, 10).unwrap());
    let held = m.held_out();
    let obs = m.observed();
    for g in 0..4 {
        for t in 0..22 {
            assert_ne!(held[g][t], obs[g][t]);
        }
    }
    let masked = m.apply(&p).unwrap();
    assert_eq!(masked.n_observed(), 4 * 19);
    assert!(make_holdout(&p, 0.01, 1).is_err());
    assert!(make_holdout(&p, 0.6, 1).is_err());
}

fn truth(b: f64, r: f64, beta: Vec<f64>) -> ParamBlock<f64> {
    ParamBlock {
        gamma: vec![RichardsParams { b, r, h: 0.5, p: 5.0, s: 1.0 }],
        beta,
        car: CarArState { phi: vec![], params: CarArParams { alpha: 0.5, rho: 0.5, tau: 2.0 } },
    }
}

#[test]
fn flat_trend_gives_iid_poisson() {
    use rand::SeedableRng;
    let (g, t) = (2, 400);
    let mut template = flat_panel(g, t);
    template.offset_log = vec![0.0, 2f64.ln()];
    template.covariates = vec![vec![vec![1.0]; t]; g];
    template.covariate_names = vec!["x".into()];
    let spec = ModelSpec::for_panel(&template).unwrap();
    let mut params = truth(3.0, 1e-12, vec![0.2]);
    params.car.phi = vec![vec![0.0; g]; t];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = simulate_with_phi(&template, &params, &spec, &mut rng).unwrap();
    let lam = 3.0 * 0.2f64.exp();
    for (gi, e) in [(0, 1.0), (1, 2.0)] {
        let mean = p.counts[gi].iter().sum::<u64>() as f64 / t as f64;
        let se = (e * lam / t as f64).sqrt();
        assert!((mean - e * lam).abs() < 4.0 * se, "region {gi}: {mean} vs {}", e * lam);
    }
    let again = simulate_with_phi(&template, &params, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(p, again);
}

#[test]
fn simulated_panels_are_reproducible_and_overflow_checked() {
    use rand::SeedableRng;
    let template = flat_panel(3, 10);
    let spec = ModelSpec::for_panel(&template).unwrap();
    let graph = SpatialGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    let a = simulate_panel(&template, &truth(0.1, 50.0, vec![]), &spec, &graph, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    let b = simulate_panel(&template, &truth(0.1, 50.0, vec![]), &spec, &graph, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.truth.car.phi.len(), 10);
    let huge = truth(1e13, 1.0, vec![]);
    assert!(simulate_panel(&template, &huge, &spec, &graph, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
}

#[test]
fn doubling_exposure_doubles_counts() {
    use rand::SeedableRng;
    let (g, t) = (2, 20);
    let mut template = flat_panel(g, t);
    let spec = ModelSpec::for_panel(&template).unwrap();
    let mut params = truth(0.5, 200.0, vec![]);
    params.car.phi = vec![vec![0.1, -0.1]; t];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reps = 200;
    let mut base = 0.0;
    for _ in 0..reps {
        base += simulate_with_phi(&template, &params, &spec, &mut rng).unwrap().counts.iter().flatten().sum::<u64>() as f64;
    }
    template.offset_log = vec![2f64.ln(); g];
    let mut doubled = 0.0;
    for _ in 0..reps {
        doubled +=
            simulate_with_phi(&template, &params, &spec, &mut rng).unwrap().counts.iter().flatten().sum::<u64>() as f64;
    }
    let ratio = doubled / base;
    assert!((ratio - 2.0).abs() < 0.02, "{ratio}");
}
