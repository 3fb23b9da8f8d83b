use sparseload::eval::report::{read_report, write_report};
use sparseload::model::{fit_forecast_model, ModelOptions};
use sparseload::eval::{run_backtest, BacktestOptions, Method};
use sparseload::series::ConsumptionSeries;
use sparseload::synth::{generate_null_panel, generate_sparse_ar, SparseArSpec};

fn options(methods: &[Method], windows: &[usize]) -> BacktestOptions {
    BacktestOptions {
        methods: methods.to_vec(),
        window_sizes: windows.to_vec(),
        max_test_points: Some(30),
        ..Default::default()
    }
}

fn noisy_panel(users: usize, len: usize, seed: u64) -> Vec<ConsumptionSeries> {
    generate_null_panel(users, len, 1.0, seed)
        .unwrap()
        .into_iter()
        .map(|mut s| {
            for (i, v) in s.values.iter_mut().enumerate() {
                *v += 5.0 + ((i % 24) as f64 / 4.0).sin();
            }
            s
        })
        .collect()
}

#[test]
fn noiseless_ar1_is_forecast_exactly() {
    // y_t = 3 - y_{t-1} alternates between 1 and 2.
    let values: Vec<f64> = (0..800).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
    let series = ConsumptionSeries::new("m", 0, values).unwrap();
    let mut opts = options(&[Method::Ar1], &[720]);
    opts.detrend = false;
    let report = run_backtest(&[series], &opts).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.records.len(), 30);
    assert!(report.records.iter().all(|r| r.sq_err < 1e-20));
}

#[test]
fn averaging_and_last_week_ignore_window_size() {
    let panel = noisy_panel(3, 1300, 4);
    let report = run_backtest(&panel, &options(&[Method::Averaging, Method::LastWeek], &[720, 960, 1200])).unwrap();
    for s in &panel {
        for m in [Method::Averaging, Method::LastWeek] {
            let seq = |w| {
                report
                    .records_for(&s.meter_id, m, w)
                    .map(|r| (r.test, r.predicted, r.abs_err, r.sq_err, r.pct_err))
                    .collect::<Vec<_>>()
            };
            assert_eq!(seq(720).len(), 30);
            assert_eq!(seq(720), seq(960));
            assert_eq!(seq(720), seq(1200));
        }
    }
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let panel = noisy_panel(4, 800, 8);
    let mut opts = options(&[Method::Averaging, Method::Ar1, Method::ExpSmoothing, Method::Lasso, Method::LassoPair], &[720]);
    opts.max_lag = 48;
    opts.max_test_points = Some(4);
    opts.threads = Some(1);
    let serial = run_backtest(&panel, &opts).unwrap();
    let again = run_backtest(&panel, &opts).unwrap();
    opts.threads = Some(3);
    let parallel = run_backtest(&panel, &opts).unwrap();
    assert_eq!(serial.summary_doc(), again.summary_doc());
    assert_eq!(serial.records, again.records);
    assert_eq!(serial.records, parallel.records);
    assert_eq!(serial.summary_doc(), parallel.summary_doc());
    assert_eq!(serial.pairings.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    write_report(&serial, dir.path()).unwrap();
    let back = read_report(dir.path()).unwrap();
    assert_eq!(back.records, serial.records);
    assert_eq!(back.summary, serial.summary);
    assert_eq!(back.users, serial.users);
}

#[test]
fn short_series_fails_alone() {
    let mut panel = noisy_panel(2, 800, 1);
    panel.push(ConsumptionSeries::new("short", 0, vec![1.0; 300]).unwrap());
    let report = run_backtest(&panel, &options(&[Method::Averaging, Method::Ar1], &[720])).unwrap();
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.user == "short"));
    let s = report.method_summary(Method::Ar1, 720).unwrap();
    assert_eq!((s.users, s.failed_users), (2, 1));
}

#[test]
fn weekday_calendar_uses_five_day_weeks() {
    // 2024-01-01 was a Monday.
    let start = 1_704_067_200 / 3600;
    let values: Vec<f64> = (0..24 * 7 * 12).map(|i| 1.0 + (i % 24) as f64).collect();
    let series = ConsumptionSeries::new("m", start, values).unwrap();
    let mut opts = options(&[Method::LastWeek], &[720]);
    opts.weekday_only = true;
    let report = run_backtest(&[series], &opts).unwrap();
    assert!(report.failures.is_empty());
    assert!(report.records.iter().all(|r| r.abs_err == 0.0));
}

#[test]
fn lasso_beats_ar1_on_planted_sparse_panel() {
    let users = 10;
    let panel: Vec<ConsumptionSeries> = (0..users)
        .map(|u| {
            let spec = SparseArSpec {
                support: vec![1, 24],
                coefficients: vec![0.3, 0.6],
                intercept: 1.0,
                noise_sd: 0.3,
                length: 800,
                seed: 100 + u as u64,
                daily_profile: Some((0..24).map(|h| 1.0 + 0.5 * (h as f64 / 24.0 * std::f64::consts::TAU).sin()).collect()),
                start: 0,
            };
            generate_sparse_ar(&spec, &format!("u{u:02}")).unwrap()
        })
        .collect();
    let mut opts = options(&[Method::Ar1, Method::Lasso], &[720]);
    opts.max_lag = 48;
    let report = run_backtest(&panel, &opts).unwrap();
    assert!(report.failures.is_empty());
    let median_ape = |user: &str, m: Method| {
        report
            .users
            .iter()
            .find(|u| u.user == user && u.method == m)
            .and_then(|u| u.median_ape)
            .unwrap()
    };
    let better = panel
        .iter()
        .filter(|s| median_ape(&s.meter_id, Method::Lasso) < median_ape(&s.meter_id, Method::Ar1))
        .count();
    assert!(better * 10 >= users * 8, "{better} of {users}");
}

#[test]
fn saved_model_reproduces_backtest_forecast() {
    let panel = noisy_panel(2, 800, 21);
    let mut opts = options(&[Method::Lasso], &[720]);
    opts.max_lag = 48;
    opts.max_test_points = Some(2);
    let report = run_backtest(&panel, &opts).unwrap();
    let model_opts = ModelOptions {
        max_lag: 48,
        ..Default::default()
    };
    for r in &report.records {
        let series = panel.iter().find(|s| s.meter_id == r.user).unwrap();
        let model = fit_forecast_model(series, r.test - 720..r.test, &model_opts).unwrap();
        assert!((model.predict_next(series).unwrap() - r.predicted).abs() < 1e-12);
    }
}
