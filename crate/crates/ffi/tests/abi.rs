//! Exercises the exported C ABI the way a foreign caller would: raw
//! pointers, status codes, explicit frees. A second test compiles and runs
//! an actual C program against the generated header and shared library.

use std::ffi::CString;

use tsadkit_ffi::*;

const IOPS: [f64; 16] = [
    25.5, 24.0, 21.0, 26.0, 21.0, 18.5, 14.5, 13.0, 18.5, 17.5, 22.5, 21.5, 7.0, 20.0, 19.5, 26.0,
];

#[test]
fn series_stats_and_zscores_through_the_abi() {
    unsafe {
        let mut handle: *mut TsadSeries = std::ptr::null_mut();
        assert_eq!(
            tsad_series_new(IOPS.as_ptr(), IOPS.len(), &mut handle),
            TsadStatus::Ok
        );
        let mut len = 0usize;
        assert_eq!(tsad_series_len(handle, &mut len), TsadStatus::Ok);
        assert_eq!(len, 16);

        let mut stats = std::mem::zeroed::<TsadStats>();
        assert_eq!(tsad_series_stats(handle, &mut stats), TsadStatus::Ok);
        assert_eq!(stats.mean, 19.75);
        assert!((stats.variance - 24.19).abs() < 0.01);
        assert_eq!(stats.degenerate, 0);

        let mut z = [0.0f64; 16];
        assert_eq!(
            tsad_series_zscores(handle, z.as_mut_ptr(), z.len()),
            TsadStatus::Ok
        );
        assert!((z[12] + 2.59).abs() < 0.01);
        assert_eq!(
            tsad_series_zscores(handle, z.as_mut_ptr(), 3),
            TsadStatus::InvalidArgument
        );
        tsad_series_free(handle);

        // invalid constructions
        let mut bad: *mut TsadSeries = std::ptr::null_mut();
        assert_eq!(
            tsad_series_new(std::ptr::null(), 4, &mut bad),
            TsadStatus::NullPointer
        );
        let nan = [f64::NAN];
        assert_eq!(
            tsad_series_new(nan.as_ptr(), 1, &mut bad),
            TsadStatus::InvalidArgument
        );
        tsad_series_free(std::ptr::null_mut()); // harmless
    }
}

#[test]
fn preference_math_through_the_abi() {
    unsafe {
        let mut score = 0.0;
        assert_eq!(
            tsad_composite_score(20.0, 40.0, 20.0, 70.0, 1, 0.5, &mut score),
            TsadStatus::Ok
        );
        assert_eq!(score, 75.0);
        assert_eq!(
            tsad_composite_score(30.0, 0.0, 0.0, 0.0, 0, 0.5, &mut score),
            TsadStatus::InvalidArgument
        );

        let mut alpha = 0.0;
        assert_eq!(tsad_soft_label(60.0, 60.0, 0.1, &mut alpha), TsadStatus::Ok);
        assert_eq!(alpha, 0.5);
        assert_eq!(
            tsad_soft_label(60.0, 60.0, 0.0, &mut alpha),
            TsadStatus::InvalidArgument
        );

        let mut loss = 0.0;
        assert_eq!(
            tsad_preference_loss(-10.0, -10.0, 0.25, 0.1, &mut loss),
            TsadStatus::Ok
        );
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(
            tsad_preference_loss(f64::NAN, 0.0, 0.5, 0.1, &mut loss),
            TsadStatus::InvalidArgument
        );
    }
}

#[test]
fn parsing_through_the_abi() {
    unsafe {
        let text = CString::new("{\"answer\": \"Anomalous\", \"summary\": \"x\"}").unwrap();
        let mut label = TsadAdLabel::Unparsed;
        assert_eq!(
            tsad_parse_ad_label(text.as_ptr(), &mut label),
            TsadStatus::Ok
        );
        assert_eq!(label, TsadAdLabel::Anomalous);

        let text = CString::new("next 3 predictions:1. 10 2. 20 3. 30").unwrap();
        let mut values: *mut f64 = std::ptr::null_mut();
        let mut len = 0usize;
        assert_eq!(
            tsad_parse_numeric_list(
                text.as_ptr(),
                TsadNumericTask::Forecast,
                &mut values,
                &mut len
            ),
            TsadStatus::Ok
        );
        assert_eq!(len, 3);
        assert_eq!(std::slice::from_raw_parts(values, len), &[10.0, 20.0, 30.0]);
        tsad_values_free(values, len);

        let prose = CString::new("nothing numeric here").unwrap();
        assert_eq!(
            tsad_parse_numeric_list(
                prose.as_ptr(),
                TsadNumericTask::Forecast,
                &mut values,
                &mut len
            ),
            TsadStatus::ParseFailure
        );
        assert_eq!(len, 0);
    }

    let mut metrics = TsadConfusionMetrics {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        fpr: 0.0,
    };
    assert_eq!(
        unsafe { tsad_confusion_metrics(50, 40, 5, 5, &mut metrics) },
        TsadStatus::Ok
    );
    assert_eq!(metrics.accuracy, 90.00);
    assert_eq!(metrics.f1, 90.91);
    assert_eq!(metrics.fpr, 11.11);

    let version = unsafe { std::ffi::CStr::from_ptr(tsad_version()) };
    assert!(!version.to_str().unwrap().is_empty());
}

/// Compile and run a small C client against the generated header and the
/// cdylib, proving the artifact is consumable outside Rust.
#[test]
fn c_client_compiles_and_runs() {
    let manifest_dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest_dir.join("include");
    assert!(
        header_dir.join("tsadkit.h").exists(),
        "cbindgen header missing"
    );
    // `cargo test` does not emit the cdylib artifact; build it explicitly
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let build = std::process::Command::new(cargo)
        .args(["build", "-p", "tsadkit-ffi"])
        .current_dir(&manifest_dir)
        .output()
        .expect("cargo available");
    assert!(
        build.status.success(),
        "cdylib build failed: {}",
        String::from_utf8_lossy(&build.stderr)
    );
    // workspace target dir: crates/ffi -> crates -> workspace root
    let profile_dir =
        std::path::PathBuf::from(std::env::var("CARGO_TARGET_DIR").unwrap_or_else(|_| {
            manifest_dir
                .parent()
                .unwrap()
                .parent()
                .unwrap()
                .join("target")
                .display()
                .to_string()
        }))
        .join("debug");
    let lib = profile_dir.join("libtsadkit_ffi.so");
    assert!(lib.exists(), "cdylib not built at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let c_source = dir.path().join("client.c");
    std::fs::write(
        &c_source,
        r#"
#include <stdio.h>
#include <stdlib.h>
#include "tsadkit.h"

int main(void) {
    double values[] = {25.5, 24.0, 21.0, 26.0, 21.0, 18.5, 14.5, 13.0,
                       18.5, 17.5, 22.5, 21.5, 7.0, 20.0, 19.5, 26.0};
    TsadSeries *series = NULL;
    if (tsad_series_new(values, 16, &series) != TsadStatus_Ok) return 1;
    TsadStats stats;
    if (tsad_series_stats(series, &stats) != TsadStatus_Ok) return 2;
    if (stats.mean != 19.75) return 3;
    tsad_series_free(series);

    double alpha = 0.0;
    if (tsad_soft_label(60.0, 60.0, 0.1, &alpha) != TsadStatus_Ok) return 4;
    if (alpha != 0.5) return 5;

    TsadConfusionMetrics metrics;
    if (tsad_confusion_metrics(50, 40, 5, 5, &metrics) != TsadStatus_Ok) return 6;
    if (metrics.f1 != 90.91) return 7;
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("client");
    let compile = std::process::Command::new("cc")
        .arg(&c_source)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&profile_dir)
        .arg("-ltsadkit_ffi")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("cc not available");
    assert!(
        compile.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "C client exited {:?}",
        run.status.code()
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
