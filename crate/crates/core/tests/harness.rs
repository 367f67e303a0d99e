use ssrn_core::harness::{
    dump_signals, format_results, run_point, run_sweep, sweep_metadata, trace_signals,
    ScenarioConfig, SrnSettings, SweepAxis, System, SIGNALS_CSV_HEADER,
};
use ssrn_core::srn::TrainSettings;
use ssrn_core::Error;

fn tiny_srn() -> SrnSettings {
    SrnSettings {
        d_model: 8,
        n_heads: 2,
        ff_width: 8,
        train: TrainSettings {
            epochs: 2,
            frames_per_epoch: 8,
            batch_size: 4,
            holdout_frames: 4,
            ..TrainSettings::default()
        },
        ..SrnSettings::default()
    }
}

fn quick(frames: usize) -> ScenarioConfig {
    ScenarioConfig {
        frames,
        k: 48,
        srn: None,
        ..ScenarioConfig::default()
    }
}

#[test]
fn zero_noise_single_user_is_exact() {
    let config = ScenarioConfig {
        noiseless: true,
        ..quick(20)
    };
    let rows = run_point(&config).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].system, System::Baseline);
    assert!(rows[0].symbol_mse <= 1e-18, "{}", rows[0].symbol_mse);
    assert_eq!(rows[0].clamp_count, 0);
}

#[test]
fn rows_cover_every_user_and_system() {
    let config = ScenarioConfig {
        m: 3,
        sf: 6,
        density: 0.5,
        srn: Some(tiny_srn()),
        ..quick(6)
    };
    let rows = run_point(&config).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| (r.user, r.system)).collect();
    let mut unique = keys.clone();
    unique.sort_by_key(|&(u, s)| (u, s == System::Srn));
    unique.dedup();
    assert_eq!(unique.len(), 6);
    assert!(rows
        .iter()
        .all(|r| r.symbol_mse >= 0.0 && r.frames == 6 && r.m == 3));
}

#[test]
fn same_seed_same_rows() {
    let config = ScenarioConfig {
        srn: Some(tiny_srn()),
        ..quick(10)
    };
    let strip = |mut rows: Vec<ssrn_core::ResultRow>| {
        rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        rows
    };
    assert_eq!(
        strip(run_point(&config).unwrap()),
        strip(run_point(&config).unwrap())
    );
    let other = ScenarioConfig {
        seed: 99,
        ..config.clone()
    };
    assert_ne!(
        strip(run_point(&config).unwrap()),
        strip(run_point(&other).unwrap())
    );
}

#[test]
fn baseline_rows_do_not_depend_on_the_refiner() {
    let with = ScenarioConfig {
        srn: Some(tiny_srn()),
        ..quick(10)
    };
    let without = ScenarioConfig {
        srn: None,
        ..with.clone()
    };
    let a = run_point(&with).unwrap();
    let b = run_point(&without).unwrap();
    assert_eq!(a[0].symbol_mse, b[0].symbol_mse);
    assert_eq!(a[0].clamp_count, b[0].clamp_count);
}

#[test]
fn noiseless_user_sweep_is_exact() {
    let base = ScenarioConfig {
        sf: 10,
        density: 0.25,
        noiseless: true,
        ..quick(10)
    };
    let rows = run_sweep(&base, SweepAxis::M, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.symbol_mse <= 1e-18));
}

#[test]
fn sweep_rows_follow_value_order_and_seeds_are_order_independent() {
    let base = quick(10);
    let forward = run_sweep(&base, SweepAxis::EsN0Db, &[5.0, 20.0]).unwrap();
    let backward = run_sweep(&base, SweepAxis::EsN0Db, &[20.0, 5.0]).unwrap();
    assert_eq!(forward[0].es_n0_db, 5.0);
    assert_eq!(forward[0].symbol_mse, backward[1].symbol_mse);
    assert_eq!(forward[1].symbol_mse, backward[0].symbol_mse);
}

#[test]
fn sweep_errors_name_the_axis_value() {
    let base = ScenarioConfig { m: 3, ..quick(5) };
    let err = run_sweep(&base, SweepAxis::Sf, &[4.0, 2.0]).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().starts_with("sf = 2:"), "{err}");
    assert!(run_sweep(&base, SweepAxis::Sf, &[])
        .unwrap_err()
        .is_config());
    assert!(run_sweep(&base, SweepAxis::M, &[1.5])
        .unwrap_err()
        .is_config());
}

#[test]
fn infeasible_scenarios_fail_as_configuration_errors() {
    let c = ScenarioConfig {
        m: 7,
        sf: 6,
        ..quick(5)
    };
    assert!(matches!(run_point(&c), Err(Error::Config(_))));
    let c = ScenarioConfig {
        pilot_fraction: 0.0,
        ..quick(5)
    };
    assert!(run_point(&c).unwrap_err().is_config());
}

#[test]
fn results_csv_layout() {
    let base = quick(4);
    let rows = run_sweep(&base, SweepAxis::Sf, &[1.0, 2.0]).unwrap();
    let text = format_results(&sweep_metadata(&base, SweepAxis::Sf, &[1.0, 2.0]), &rows);
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "sf,es_n0_db,m,user,system,symbol_mse,evm_db,clamp_count,frames,wall_time_s"
    );
    let data: Vec<_> = lines.collect();
    assert_eq!(data.len(), 2);
    assert!(data[0].starts_with("1,15,1,0,baseline,"));
    let mse = data[0].split(',').nth(5).unwrap();
    let mantissa = mse.split('e').next().unwrap().replace(['.', '-'], "");
    assert!(mantissa.len() >= 9, "{mse}");
    assert!(text.contains("# sweep.axis = sf\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn signal_dump_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("signals.csv");
    let config = ScenarioConfig {
        sf: 1,
        srn: Some(tiny_srn()),
        ..quick(4)
    };
    dump_signals(&config, 2, 0, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), SIGNALS_CSV_HEADER);
    assert_eq!(
        SIGNALS_CSV_HEADER,
        "k,x_re,x_im,r_eq_re,r_eq_im,xhat_re,xhat_im"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 48);
    assert!(rows.iter().all(|r| r.len() == 7));

    let missing = dir.path().join("no/such/dir/signals.csv");
    match dump_signals(&config, 0, 0, &missing) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("{other:?}"),
    }
    assert!(dump_signals(&config, 4, 0, &path).unwrap_err().is_config());
}

#[test]
fn noiseless_trace_reproduces_the_sent_symbols() {
    let config = ScenarioConfig {
        noiseless: true,
        ..quick(3)
    };
    let trace = trace_signals(&config, 1, 0).unwrap();
    assert!(trace.x_hat.is_none());
    for (x, r) in trace.x.iter().zip(&trace.r_eq) {
        assert!((x - r).norm() <= 1e-9);
    }
}
