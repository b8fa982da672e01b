use std::ffi::{CStr, CString};
use std::ptr;

use cfkit_ffi::*;

fn last_error() -> String {
    let p = cfk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid() -> *mut CfkRatings {
    let (mut us, mut is, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..8usize {
        for i in 0..6usize {
            us.push(u);
            is.push(i);
            vs.push(1.0 + ((u * 3 + i * 5) % 5) as f64);
        }
    }
    let mut r = ptr::null_mut();
    let st = unsafe { cfk_ratings_from_triples(8, 6, us.as_ptr(), is.as_ptr(), vs.as_ptr(), us.len(), &mut r) };
    assert_eq!(st, CfkStatus::Ok);
    r
}

#[test]
fn train_predict_round_trip() {
    let r = grid();
    let (mut nu, mut ni, mut n) = (0, 0, 0);
    assert_eq!(unsafe { cfk_ratings_shape(r, &mut nu, &mut ni, &mut n) }, CfkStatus::Ok);
    assert_eq!((nu, ni, n), (8, 6, 48));

    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cfk_train_als(r, 3, 0.1, 10, &mut model) }, CfkStatus::Ok);
    let mut rank = 0;
    assert_eq!(unsafe { cfk_model_rank(model, &mut rank) }, CfkStatus::Ok);
    assert_eq!(rank, 3);

    let users = [0usize, 7, 3];
    let items = [0usize, 5, 2];
    let mut before = [0.0; 3];
    assert_eq!(
        unsafe { cfk_model_predict(model, users.as_ptr(), items.as_ptr(), 3, before.as_mut_ptr()) },
        CfkStatus::Ok
    );
    assert!(before.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cfk_model_save(model, path.as_ptr()) }, CfkStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { cfk_model_load(path.as_ptr(), &mut loaded) }, CfkStatus::Ok);
    let mut after = [0.0; 3];
    unsafe { cfk_model_predict(loaded, users.as_ptr(), items.as_ptr(), 3, after.as_mut_ptr()) };
    assert_eq!(before, after);

    unsafe {
        cfk_model_free(model);
        cfk_model_free(loaded);
        cfk_ratings_free(r);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let r = grid();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cfk_train_svd(r, 0, &mut model) }, CfkStatus::Config);
    assert!(last_error().contains("rank"), "{}", last_error());
    assert!(model.is_null());

    assert_eq!(unsafe { cfk_train_svd(ptr::null(), 2, &mut model) }, CfkStatus::NullPointer);
    assert_eq!(unsafe { cfk_train_svd(r, 2, &mut model) }, CfkStatus::Ok);
    assert!(cfk_last_error().is_null());

    let (u, i) = (99usize, 0usize);
    let mut out = 0.0;
    assert_eq!(unsafe { cfk_model_predict(model, &u, &i, 1, &mut out) }, CfkStatus::Key);

    let missing = CString::new("/no/such/ratings.csv").unwrap();
    let mut rr = ptr::null_mut();
    assert_eq!(unsafe { cfk_ratings_load(missing.as_ptr(), &mut rr) }, CfkStatus::Io);

    let bad = [1usize];
    let val = [7.0];
    assert_eq!(
        unsafe { cfk_ratings_from_triples(2, 2, bad.as_ptr(), bad.as_ptr(), val.as_ptr(), 1, &mut rr) },
        CfkStatus::Range
    );
    unsafe {
        cfk_model_free(model);
        cfk_ratings_free(r);
        cfk_ratings_free(ptr::null_mut());
    }
}

#[test]
fn preset_fit_predict_and_rmse() {
    let r = grid();
    let name = CString::new("item-pcc-normal-60").unwrap();
    let users = [0usize, 1, 2];
    let items = [0usize, 1, 2];
    let mut preds = [0.0; 3];
    let st = unsafe {
        cfk_preset_fit_predict(r, name.as_ptr(), 1, users.as_ptr(), items.as_ptr(), 3, preds.as_mut_ptr())
    };
    assert_eq!(st, CfkStatus::Ok);
    let unknown = CString::new("nope").unwrap();
    let st = unsafe {
        cfk_preset_fit_predict(r, unknown.as_ptr(), 1, users.as_ptr(), items.as_ptr(), 3, preds.as_mut_ptr())
    };
    assert_eq!(st, CfkStatus::Config);
    assert!(last_error().contains("unknown preset"));

    let mut e = 0.0;
    let t = [1.0, 2.0, 3.0];
    let p = [1.0, 2.0, 5.0];
    assert_eq!(unsafe { cfk_rmse(p.as_ptr(), t.as_ptr(), 3, &mut e) }, CfkStatus::Ok);
    assert!((e - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    unsafe { cfk_ratings_free(r) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cfkit.h")).unwrap();
    for f in [
        "cfk_last_error",
        "cfk_ratings_load",
        "cfk_ratings_from_triples",
        "cfk_ratings_free",
        "cfk_ratings_shape",
        "cfk_train_svd",
        "cfk_train_als",
        "cfk_train_funksvd",
        "cfk_model_free",
        "cfk_model_rank",
        "cfk_model_predict",
        "cfk_model_save",
        "cfk_model_load",
        "cfk_preset_fit_predict",
        "cfk_rmse",
        "typedef struct CfkRatings CfkRatings",
        "CFK_STATUS_NULL_POINTER = 1",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
}
