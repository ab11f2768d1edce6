use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use beats_ffi::*;

fn last_error() -> String {
    let p = beats_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(beats_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn sinkhorn_matches_marginals() {
    let cost = [0.3, 1.0, 0.2, 0.9, 0.1, 0.4, 0.5, 0.7, 0.0, 0.6, 0.8, 0.2];
    let mut plan = [0.0; 12];
    let (mut iters, mut residual) = (0usize, 0.0);
    let status = unsafe { beats_sinkhorn(cost.as_ptr(), 3, 4, 0.1, 1e-9, 1000, plan.as_mut_ptr(), &mut iters, &mut residual) };
    assert_eq!(status, BeatsStatus::Ok);
    assert!(iters > 0 && residual < 1e-9);
    for i in 0..3 {
        let row: f64 = plan[i * 4..i * 4 + 4].iter().sum();
        assert!((row - 1.0 / 3.0).abs() < 1e-9);
    }
    for j in 0..4 {
        let col: f64 = (0..3).map(|i| plan[i * 4 + j]).sum();
        assert!((col - 0.25).abs() < 1e-9);
    }
    assert!(beats_last_error().is_null());
}

#[test]
fn sinkhorn_reports_bad_input() {
    let cost = [0.0, f64::NAN, 1.0, 0.0];
    let mut plan = [0.0; 4];
    let s = unsafe { beats_sinkhorn(cost.as_ptr(), 2, 2, 0.1, 1e-6, 100, plan.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, BeatsStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let s = unsafe { beats_sinkhorn(ptr::null(), 2, 2, 0.1, 1e-6, 100, plan.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, BeatsStatus::NullPointer);
    assert!(last_error().contains("cost"));

    let cost = [0.0, 5.0, 1.0, 3.0];
    let s = unsafe { beats_sinkhorn(cost.as_ptr(), 2, 2, 0.01, 1e-14, 1, plan.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, BeatsStatus::Numeric);
    assert!(last_error().contains("no convergence"));
}

#[test]
fn exact_ot_picks_the_cheapest_matching() {
    let cost = [5.0, 1.0, 9.0, 1.0, 7.0, 9.0, 9.0, 9.0, 0.0];
    let mut plan = [0.0; 9];
    let mut value = 0.0;
    assert_eq!(unsafe { beats_exact_ot(cost.as_ptr(), 3, plan.as_mut_ptr(), &mut value) }, BeatsStatus::Ok);
    assert!((value - 2.0 / 3.0).abs() < 1e-12);
    let third = 1.0 / 3.0;
    assert_eq!(plan, [0.0, third, 0.0, third, 0.0, 0.0, 0.0, 0.0, third]);

    let big = vec![0.0; 49];
    let mut plan = vec![0.0; 49];
    assert_eq!(unsafe { beats_exact_ot(big.as_ptr(), 7, plan.as_mut_ptr(), ptr::null_mut()) }, BeatsStatus::InvalidArgument);
}

#[test]
fn otk_pool_ignores_row_order() {
    let features = [0.1, 0.9, -0.4, 0.3, 0.7, -0.2, 0.5, 0.5, -0.6];
    let swapped = [0.5, 0.5, -0.6, 0.1, 0.9, -0.4, 0.3, 0.7, -0.2];
    let refs = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let (mut a, mut b) = ([0.0; 6], [0.0; 6]);
    unsafe {
        assert_eq!(beats_otk_pool(features.as_ptr(), 3, 3, refs.as_ptr(), 2, 0.1, 1e-9, 500, a.as_mut_ptr()), BeatsStatus::Ok);
        assert_eq!(beats_otk_pool(swapped.as_ptr(), 3, 3, refs.as_ptr(), 2, 0.1, 1e-9, 500, b.as_mut_ptr()), BeatsStatus::Ok);
    }
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn joint_loss_validates_weights() {
    let mut loss = 0.0;
    assert_eq!(unsafe { beats_joint_loss(0.2, 0.6, 0.2, 1.0, 2.0, 3.0, &mut loss) }, BeatsStatus::Ok);
    assert!((loss - 2.0).abs() < 1e-12);
    assert_eq!(unsafe { beats_joint_loss(0.5, 0.6, 0.2, 1.0, 2.0, 3.0, &mut loss) }, BeatsStatus::InvalidArgument);
    assert!(last_error().contains("weights"));
    assert_eq!(unsafe { beats_joint_loss(0.2, 0.6, 0.2, 1.0, 2.0, 3.0, ptr::null_mut()) }, BeatsStatus::NullPointer);
}

#[test]
fn waveform_handles_round_trip_through_wav() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("a.wav").to_str().unwrap());
    let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.03).sin() * 0.8).collect();
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(beats_waveform_new(samples.as_ptr(), samples.len(), 8000, &mut w), BeatsStatus::Ok);
        assert_eq!(beats_waveform_write(w, path.as_ptr()), BeatsStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(beats_waveform_read(path.as_ptr(), &mut r), BeatsStatus::Ok);
        assert_eq!(beats_waveform_len(r), 500);
        assert_eq!(beats_waveform_sample_rate(r), 8000);
        let back = std::slice::from_raw_parts(beats_waveform_samples(r), 500);
        for (a, b) in samples.iter().zip(back) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
        beats_waveform_free(w);
        beats_waveform_free(r);
        beats_waveform_free(ptr::null_mut());
        assert_eq!(beats_waveform_len(ptr::null()), 0);

        let missing = cstr(dir.path().join("missing.wav").to_str().unwrap());
        assert_eq!(beats_waveform_read(missing.as_ptr(), &mut r), BeatsStatus::Io);
        std::fs::write(dir.path().join("junk.wav"), b"not a wav file at all").unwrap();
        let junk = cstr(dir.path().join("junk.wav").to_str().unwrap());
        assert_eq!(beats_waveform_read(junk.as_ptr(), &mut r), BeatsStatus::Format);

        let loud = [2.0];
        assert_eq!(beats_waveform_new(loud.as_ptr(), 1, 8000, &mut w), BeatsStatus::InvalidArgument);
    }
}

#[test]
fn dataset_and_model_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let data = cstr(dir.path().join("data").to_str().unwrap());
    let mut sum = [0 as std::ffi::c_char; 65];
    unsafe {
        assert_eq!(beats_generate_dataset(data.as_ptr(), 4, sum.as_mut_ptr(), sum.len()), BeatsStatus::Ok);
        let hex = CStr::from_ptr(sum.as_ptr()).to_str().unwrap().to_owned();
        assert_eq!(hex.len(), 64);
        let mut short = [0 as std::ffi::c_char; 10];
        assert_eq!(beats_generate_dataset(data.as_ptr(), 4, short.as_mut_ptr(), 10), BeatsStatus::InvalidArgument);

        let wav = cstr(dir.path().join("data/wav/question-000.wav").to_str().unwrap());
        let mut w = ptr::null_mut();
        assert_eq!(beats_waveform_read(wav.as_ptr(), &mut w), BeatsStatus::Ok, "{}", last_error());

        let mut m = ptr::null_mut();
        assert_eq!(beats_model_new(cstr("beats_otk").as_ptr(), 3, &mut m), BeatsStatus::Ok, "{}", last_error());
        let english = cstr("can-you open the door");
        let (mut probs, mut label) = ([0.0; 3], 9u32);
        assert_eq!(beats_model_predict(m, w, english.as_ptr(), probs.as_mut_ptr(), &mut label), BeatsStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(label < 3);

        let saved = PathBuf::from(dir.path()).join("m.json");
        let saved = cstr(saved.to_str().unwrap());
        assert_eq!(beats_model_save(m, saved.as_ptr()), BeatsStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(beats_model_load(saved.as_ptr(), &mut loaded), BeatsStatus::Ok);
        let mut again = [0.0; 3];
        assert_eq!(beats_model_predict(loaded, w, english.as_ptr(), again.as_mut_ptr(), ptr::null_mut()), BeatsStatus::Ok);
        assert_eq!(probs, again);

        let unknown = cstr("open the flux-capacitor");
        assert_eq!(beats_model_predict(m, w, unknown.as_ptr(), again.as_mut_ptr(), ptr::null_mut()), BeatsStatus::InvalidArgument);
        assert_eq!(beats_model_new(cstr("gpt").as_ptr(), 0, &mut loaded), BeatsStatus::InvalidArgument);

        beats_model_free(m);
        beats_model_free(loaded);
        beats_waveform_free(w);
    }
}

#[test]
fn errors_are_per_thread() {
    let mut loss = 0.0;
    assert_eq!(unsafe { beats_joint_loss(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, &mut loss) }, BeatsStatus::InvalidArgument);
    let other = std::thread::spawn(|| beats_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(!last_error().is_empty());
}
