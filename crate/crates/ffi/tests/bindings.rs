use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dopplerga::clstm::{save_model, ModelState, NetworkConfig};
use dopplerga::pipeline::estimate_recording;
use dopplerga::signal_io::AudioRecording;
use dopplerga_ffi::*;

fn small_model(dir: &Path) -> (PathBuf, ModelState) {
    let cfg = NetworkConfig { timesteps: 5, width: 10, hidden_channels: (2, 2), kernel_widths: (3, 3), seed: 9, ..Default::default() };
    let m = ModelState::new(cfg).unwrap();
    let path = dir.join("m.dgm");
    save_model(&path, &m).unwrap();
    (path, m)
}

fn tone(fs: u32, seconds: f64) -> Vec<f64> {
    let n = (fs as f64 * seconds) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            (2.0 * std::f64::consts::PI * 180.0 * t).sin() * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * 2.0 * t).sin())
        })
        .collect()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dg_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn estimate_matches_core_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = small_model(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let samples = tone(8000, 2.0);

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { dg_model_load(cpath.as_ptr(), &mut handle) }, DgStatus::Ok);
    assert!(!handle.is_null());
    assert_eq!(unsafe { dg_model_frames_needed(handle) }, 50);

    let mut est = f64::NAN;
    let st = unsafe { dg_estimate_samples(handle, samples.as_ptr(), samples.len(), 8000, &mut est) };
    assert_eq!(st, DgStatus::Ok, "{}", last_error());
    assert!(last_error().is_empty());
    let want = estimate_recording(&model, AudioRecording::new(samples.clone(), 8000).unwrap()).unwrap();
    assert_eq!(est.to_bits(), want.to_bits());

    let mut feats = ptr::null_mut();
    assert_eq!(unsafe { dg_features_from_samples(samples.as_ptr(), samples.len(), 8000, &mut feats) }, DgStatus::Ok);
    let n = unsafe { dg_features_len(feats) };
    assert_eq!(n, (8000 - 400) / 40 + 1);
    let mut vals = [0.0; 4];
    let mut valid = 0u8;
    assert_eq!(unsafe { dg_features_get(feats, 10, vals.as_mut_ptr(), &mut valid) }, DgStatus::Ok);
    assert_eq!(valid, 1);
    // Instantaneous frequency is in radians per sample at 4 kHz.
    assert!((vals[1] - 2.0 * std::f64::consts::PI * 180.0 / 4000.0).abs() < 0.02, "inst freq {}", vals[1]);
    assert_eq!(unsafe { dg_features_get(feats, n, vals.as_mut_ptr(), ptr::null_mut()) }, DgStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let mut est2 = f64::NAN;
    assert_eq!(unsafe { dg_estimate_features(handle, feats, &mut est2) }, DgStatus::Ok);
    assert_eq!(est2.to_bits(), want.to_bits());

    unsafe {
        dg_features_free(feats);
        dg_model_free(handle);
    }
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = small_model(dir.path());
    let mut handle = ptr::null_mut();

    let missing = CString::new(dir.path().join("none.dgm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dg_model_load(missing.as_ptr(), &mut handle) }, DgStatus::Io);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    let junk = dir.path().join("junk.dgm");
    std::fs::write(&junk, b"not a model").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dg_model_load(junk.as_ptr(), &mut handle) }, DgStatus::Format);
    assert_eq!(unsafe { dg_model_load(ptr::null(), &mut handle) }, DgStatus::NullPointer);

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dg_model_load(cpath.as_ptr(), &mut handle) }, DgStatus::Ok);

    // 0.3 s at 4 kHz gives 21 frames, below the 50 the model needs.
    let short = tone(4000, 0.3);
    let mut est = 0.0;
    let st = unsafe { dg_estimate_samples(handle, short.as_ptr(), short.len(), 4000, &mut est) };
    assert_eq!(st, DgStatus::TooShort);
    assert!(last_error().contains("needs 50"), "{}", last_error());

    let tiny = tone(4000, 0.05);
    let st = unsafe { dg_estimate_samples(handle, tiny.as_ptr(), tiny.len(), 4000, &mut est) };
    assert_eq!(st, DgStatus::TooShort);

    let bad = [0.0, f64::NAN, 0.0];
    let mut feats = ptr::null_mut();
    assert_eq!(unsafe { dg_features_from_samples(bad.as_ptr(), 3, 4000, &mut feats) }, DgStatus::InvalidArgument);
    assert_eq!(unsafe { dg_features_from_samples(short.as_ptr(), short.len(), 0, &mut feats) }, DgStatus::InvalidArgument);
    assert_eq!(unsafe { dg_estimate_samples(handle, ptr::null(), 10, 4000, &mut est) }, DgStatus::NullPointer);
    assert_eq!(unsafe { dg_estimate_features(handle, ptr::null(), &mut est) }, DgStatus::NullPointer);

    unsafe {
        dg_model_free(handle);
        dg_model_free(ptr::null_mut());
        dg_features_free(ptr::null_mut());
    }
    assert_eq!(unsafe { dg_features_len(ptr::null()) }, 0);
    assert!(unsafe { CStr::from_ptr(dg_version()) }.to_str().unwrap().starts_with("0."));
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dopplerga.h")).unwrap()
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for sym in [
        "typedef struct DgModel DgModel;",
        "typedef struct DgFeatures DgFeatures;",
        "DG_STATUS_OK = 0",
        "DG_STATUS_TOO_SHORT = 5",
        "dg_model_load(const char *path, struct DgModel **out)",
        "dg_model_free",
        "dg_features_from_samples",
        "dg_features_get",
        "dg_estimate_samples",
        "dg_estimate_features",
        "const char *dg_last_error(void)",
    ] {
        assert!(h.contains(sym), "header lacks `{sym}`");
    }
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else { return };
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi_c");
    std::fs::create_dir_all(&out).unwrap();
    let src = out.join("main.c");
    std::fs::write(
        &src,
        "#include \"dopplerga.h\"\n#include <stdio.h>\nint main(void) {\n  DgModel *m = NULL;\n  \
         DgStatus s = dg_model_load(\"/nonexistent.dgm\", &m);\n  printf(\"%d %s\\n\", (int)s, dg_version());\n  \
         return s == DG_STATUS_IO && m == NULL ? 0 : 1;\n}\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc).args(["-fsyntax-only", "-Wall", "-Werror", "-I"]).arg(&include).arg(&src).status().unwrap();
    assert!(status.success(), "header does not compile");

    // Link against the static library when it sits next to the test binary.
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libdopplerga_ffi.a").exists() {
        return;
    }
    let exe = out.join("probe");
    let status = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(lib_dir.join("libdopplerga_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
}

fn which_cc() -> Result<String, ()> {
    for c in ["cc", "gcc", "clang"] {
        if Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(c.to_string());
        }
    }
    Err(())
}
