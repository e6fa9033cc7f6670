use std::ffi::{c_char, CString};
use std::ptr;

use hetpref_ffi::*;

fn last_error() -> String {
    unsafe {
        let len = hp_last_error(ptr::null_mut(), 0);
        let mut buf = vec![0 as c_char; len + 1];
        assert_eq!(hp_last_error(buf.as_mut_ptr(), buf.len()), len);
        let bytes: Vec<u8> = buf[..len].iter().map(|&c| c as u8).collect();
        String::from_utf8(bytes).unwrap()
    }
}

fn simulated(n: usize, seed: u64) -> *mut HpDataset {
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { hp_dataset_simulate(n, seed, &mut data) }, HpStatus::Ok);
    data
}

fn fitted(data: *const HpDataset) -> *mut HpFit {
    let mut fit = ptr::null_mut();
    let cfg = HpFitConfig {
        restarts: 3,
        ..hp_fit_config_default()
    };
    assert_eq!(unsafe { hp_fit(data, &cfg, &mut fit) }, HpStatus::Ok, "{}", last_error());
    fit
}

#[test]
fn fit_infer_and_query_match_the_library() {
    unsafe {
        let data = simulated(400, 3);
        let (mut n, mut d1, mut d2) = (0, 0, 0);
        assert_eq!(hp_dataset_shape(data, &mut n, &mut d1, &mut d2), HpStatus::Ok);
        assert_eq!((n, d1, d2), (400, 3, 2));

        let fit = fitted(data);
        let mut summary = std::mem::zeroed::<HpFitSummary>();
        assert_eq!(hp_fit_summary(fit, &mut summary), HpStatus::Ok);
        assert_eq!(summary.iterations_run, 2000);

        let (mut theta, mut gamma) = ([0.0; 3], [0.0; 2]);
        assert_eq!(hp_fit_params(fit, theta.as_mut_ptr(), 3, gamma.as_mut_ptr(), 2), HpStatus::Ok);

        let spec = hetpref::sim::SimSpec {
            n: 400,
            seed: 3,
            ..Default::default()
        };
        let direct_data = hetpref::sim::generate(&spec).unwrap();
        let direct = hetpref::alternating_fit(
            &direct_data,
            &hetpref::FitConfig {
                restarts: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(theta.to_vec(), direct.params.theta);
        assert_eq!(gamma.to_vec(), direct.params.gamma);
        assert_eq!(summary.final_loss, direct.final_loss);

        let mut artifact = ptr::null_mut();
        assert_eq!(hp_infer(data, fit, &mut artifact), HpStatus::Ok);
        let direct_artifact = hetpref::infer(&direct.params, &direct_data).unwrap();

        let phi = hetpref::sim::phi(0.5, 0.25);
        let mut ci = std::mem::zeroed::<HpInterval>();
        assert_eq!(hp_reward_ci(artifact, phi.as_ptr(), 3, 0.05, &mut ci), HpStatus::Ok);
        let expected = hetpref::reward_ci(&direct_artifact, &hetpref::QueryFeatures::new(phi.to_vec()), 0.05).unwrap();
        assert_eq!((ci.lower, ci.upper, ci.point), (expected.lower, expected.upper, expected.point));

        let mut lcb = 0.0;
        assert_eq!(hp_pessimistic_reward(artifact, phi.as_ptr(), 3, 0.05, &mut lcb), HpStatus::Ok);
        assert_eq!(lcb, ci.lower);

        let other = hetpref::sim::phi(1.0, 1.0);
        let mut t = std::mem::zeroed::<HpTestResult>();
        assert_eq!(
            hp_reward_diff_test(artifact, other.as_ptr(), phi.as_ptr(), 3, 0.05, HpVarianceMode::DependentUpperBound, &mut t),
            HpStatus::Ok
        );
        let expected = if t.interval.lower > 0.0 {
            HpVerdict::Win
        } else if t.interval.upper < 0.0 {
            HpVerdict::Loss
        } else {
            HpVerdict::Tie
        };
        assert_eq!(t.verdict, expected);

        // the second row dominates in every direction the estimate supports
        let phis = [0.0, 0.0, 0.0, theta[0], theta[1], theta[2]];
        let mut chosen = usize::MAX;
        assert_eq!(
            hp_bon_select(artifact, phis.as_ptr(), 2, 3, ptr::null(), ptr::null(), HpVariant::Bon, 0.0, 0.05, &mut chosen),
            HpStatus::Ok
        );
        assert_eq!(chosen, 1);

        hp_artifact_free(artifact);
        hp_fit_free(fit);
        hp_dataset_free(data);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    let art_path = CString::new(dir.path().join("a.json").to_str().unwrap()).unwrap();
    unsafe {
        let data = simulated(200, 1);
        assert_eq!(hp_dataset_write(data, data_path.as_ptr()), HpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(hp_dataset_read(data_path.as_ptr(), &mut back), HpStatus::Ok);
        let mut n = 0;
        assert_eq!(hp_dataset_shape(back, &mut n, ptr::null_mut(), ptr::null_mut()), HpStatus::Ok);
        assert_eq!(n, 200);

        let fit = fitted(back);
        let mut artifact = ptr::null_mut();
        assert_eq!(hp_infer(back, fit, &mut artifact), HpStatus::Ok);
        assert_eq!(hp_artifact_write(artifact, art_path.as_ptr()), HpStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(hp_artifact_read(art_path.as_ptr(), &mut loaded), HpStatus::Ok);
        let (mut t1, mut g1, mut t2, mut g2) = ([0.0; 3], [0.0; 2], [0.0; 3], [0.0; 2]);
        hp_artifact_params(artifact, t1.as_mut_ptr(), 3, g1.as_mut_ptr(), 2);
        hp_artifact_params(loaded, t2.as_mut_ptr(), 3, g2.as_mut_ptr(), 2);
        assert_eq!((t1, g1), (t2, g2));

        for p in [loaded, artifact] {
            hp_artifact_free(p);
        }
        hp_fit_free(fit);
        hp_dataset_free(back);
        hp_dataset_free(data);
    }
}

#[test]
fn dataset_from_arrays() {
    let psi0 = [1.0, 1.0];
    let psi = [0.5, -0.5];
    let z = [1.0, 0.0, -1.0, 2.0];
    let y = [1u8, 0];
    unsafe {
        let mut data = ptr::null_mut();
        let s = hp_dataset_new(2, 2, 1, psi0.as_ptr(), psi.as_ptr(), z.as_ptr(), y.as_ptr(), &mut data);
        assert_eq!(s, HpStatus::Ok);
        let (mut n, mut d1, mut d2) = (0, 0, 0);
        hp_dataset_shape(data, &mut n, &mut d1, &mut d2);
        assert_eq!((n, d1, d2), (2, 2, 1));
        hp_dataset_free(data);

        let bad_y = [1u8, 2];
        let s = hp_dataset_new(2, 2, 1, psi0.as_ptr(), psi.as_ptr(), z.as_ptr(), bad_y.as_ptr(), &mut data);
        assert_eq!(s, HpStatus::InvalidArgument);
        assert!(!last_error().is_empty());
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(hp_normal_quantile(0.975, &mut out), HpStatus::Ok);
        assert!((out - 1.959963984540054).abs() < 1e-12);
        assert_eq!(last_error(), "");

        assert_eq!(hp_normal_quantile(1.5, &mut out), HpStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(hp_normal_quantile(0.5, ptr::null_mut()), HpStatus::NullPointer);

        let mut fit = ptr::null_mut();
        assert_eq!(hp_fit(ptr::null(), ptr::null(), &mut fit), HpStatus::NullPointer);
        assert!(last_error().contains("dataset"));

        let missing = CString::new("/nonexistent/data.csv").unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(hp_dataset_read(missing.as_ptr(), &mut data), HpStatus::Io);
        assert!(data.is_null());

        let data = simulated(100, 2);
        let cfg = HpFitConfig {
            eta1: 1e307,
            eta2: 1e307,
            ..hp_fit_config_default()
        };
        assert_eq!(hp_fit(data, &cfg, &mut fit), HpStatus::Numerical);
        let cfg = HpFitConfig {
            max_iters: 0,
            ..hp_fit_config_default()
        };
        assert_eq!(hp_fit(data, &cfg, &mut fit), HpStatus::InvalidArgument);

        let fit = fitted(data);
        let mut theta = [0.0; 2];
        let mut gamma = [0.0; 2];
        assert_eq!(
            hp_fit_params(fit, theta.as_mut_ptr(), 2, gamma.as_mut_ptr(), 2),
            HpStatus::DimensionMismatch
        );
        let mut artifact = ptr::null_mut();
        assert_eq!(hp_infer(data, fit, &mut artifact), HpStatus::Ok);
        let mut ci = std::mem::zeroed::<HpInterval>();
        let short = [1.0, 2.0];
        assert_eq!(hp_reward_ci(artifact, short.as_ptr(), 2, 0.05, &mut ci), HpStatus::DimensionMismatch);
        let mut chosen = 0;
        assert_eq!(
            hp_bon_select(artifact, ptr::null(), 0, 3, ptr::null(), ptr::null(), HpVariant::Pbon, 0.0, 0.05, &mut chosen),
            HpStatus::InvalidArgument
        );
        hp_artifact_free(artifact);
        hp_fit_free(fit);
        hp_dataset_free(data);
        hp_dataset_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hetpref.h");
    let text = std::fs::read_to_string(header).unwrap();
    assert!(text.contains("enum hp_status_t hp_fit("));
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        return;
    };
    assert!(status.success());
}

#[test]
fn c_demo_links_and_runs() {
    let manifest = env!("CARGO_MANIFEST_DIR");
    if std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    // integration tests only build the rlib
    let built = std::process::Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "-p", "hetpref-ffi"])
        .status()
        .unwrap();
    assert!(built.success());
    let deps = std::env::current_exe().unwrap();
    let lib = deps.parent().unwrap().parent().unwrap().join("libhetpref_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("demo");
    let status = std::process::Command::new("cc")
        .arg("-I")
        .arg(format!("{manifest}/include"))
        .arg(format!("{manifest}/examples/demo.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("reward "));
}
