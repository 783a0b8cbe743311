use std::ffi::{CStr, CString};
use std::ptr;

use reln::layers::{init_params, save_model, LayerSpec, ModelSpec};
use reln::liealg::AlgebraKind;
use reln::tasks::{gen_sp4_dataset, write_dataset};
use reln_ffi::*;

fn last_error() -> String {
    let p = reln_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn algebra(name: &str) -> *mut RelnAlgebra {
    let name = CString::new(name).unwrap();
    let mut alg = ptr::null_mut();
    assert_eq!(unsafe { reln_algebra_new(name.as_ptr(), 0, &mut alg) }, RelnStatus::Ok);
    alg
}

#[test]
fn algebra_round_trip_and_form() {
    let alg = algebra("so3");
    let (mut k, mut n) = (0, 0);
    unsafe {
        assert_eq!(reln_algebra_dims(alg, &mut k, &mut n), RelnStatus::Ok);
        assert_eq!((k, n), (3, 3));
        let v = [0.3, -1.2, 2.5];
        let w = [1.0, 0.5, -0.25];
        let mut m = [0.0; 9];
        assert_eq!(reln_algebra_hat(alg, v.as_ptr(), 3, m.as_mut_ptr(), 9), RelnStatus::Ok);
        let mut back = [0.0; 3];
        assert_eq!(reln_algebra_vee(alg, m.as_ptr(), 9, back.as_mut_ptr(), 3), RelnStatus::Ok);
        assert_eq!(back, v);
        let mut b = 0.0;
        assert_eq!(reln_algebra_form(alg, v.as_ptr(), w.as_ptr(), 3, &mut b), RelnStatus::Ok);
        let dot: f64 = v.iter().zip(&w).map(|(a, c)| a * c).sum();
        assert!((b + 12.0 * dot).abs() < 1e-12);
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let mut e3 = [0.0; 3];
        assert_eq!(reln_algebra_bracket(alg, e1.as_ptr(), e2.as_ptr(), e3.as_mut_ptr(), 3), RelnStatus::Ok);
        assert_eq!(e3, [0.0, 0.0, 1.0]);
        reln_algebra_free(alg);
    }
}

#[test]
fn errors_set_status_and_message() {
    let name = CString::new("so7").unwrap();
    let mut alg = ptr::null_mut();
    assert_eq!(unsafe { reln_algebra_new(name.as_ptr(), 0, &mut alg) }, RelnStatus::InvalidArgument);
    assert!(alg.is_null());
    assert!(last_error().contains("so7"));
    assert_eq!(unsafe { reln_algebra_new(ptr::null(), 0, &mut alg) }, RelnStatus::NullPointer);
    let mut k = 0;
    assert_eq!(unsafe { reln_algebra_dims(ptr::null(), &mut k, &mut k) }, RelnStatus::NullPointer);

    let alg = algebra("sp4");
    let mut out = [0.0; 15];
    let v = [0.0; 10];
    assert_eq!(unsafe { reln_algebra_hat(alg, v.as_ptr(), 10, out.as_mut_ptr(), 15) }, RelnStatus::Shape);
    let not_sp4 = [1.0; 16];
    let mut coords = [0.0; 10];
    assert_eq!(
        unsafe { reln_algebra_vee(alg, not_sp4.as_ptr(), 16, coords.as_mut_ptr(), 10) },
        RelnStatus::InvalidArgument
    );
    unsafe {
        reln_algebra_free(alg);
        reln_algebra_free(ptr::null_mut());
        reln_model_free(ptr::null_mut());
        reln_dataset_free(ptr::null_mut());
    }

    let missing = CString::new("/nonexistent/model.rlnm").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { reln_model_load(missing.as_ptr(), &mut model) }, RelnStatus::Io);
}

#[test]
fn model_and_dataset_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(
        AlgebraKind::Sp4,
        2,
        vec![LayerSpec::linear(2, 4), LayerSpec::relu(4), LayerSpec::invariant(4)],
    )
    .with_head(vec![8], 1);
    let model = init_params(&spec, 3).unwrap();
    let model_path = dir.path().join("m.rlnm");
    save_model(&model, &model_path).unwrap();
    let ds = gen_sp4_dataset(20, 0.4, 5).unwrap();
    let data_path = dir.path().join("d.rlnd");
    write_dataset(&ds, &data_path).unwrap();

    let mpath = CString::new(model_path.to_str().unwrap()).unwrap();
    let dpath = CString::new(data_path.to_str().unwrap()).unwrap();
    let (mut m, mut d) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(reln_model_load(mpath.as_ptr(), &mut m), RelnStatus::Ok);
        assert_eq!(reln_dataset_load(dpath.as_ptr(), &mut d), RelnStatus::Ok);
        let (mut set, mut k, mut c, mut o, mut p) = (0, 0, 0, 0, 0);
        assert_eq!(reln_model_shape(m, &mut set, &mut k, &mut c, &mut o, &mut p), RelnStatus::Ok);
        assert_eq!((set, k, c, o, p), (1, 10, 2, 1, model.num_params()));
        let mut len = 0;
        assert_eq!(reln_dataset_len(d, &mut len), RelnStatus::Ok);
        assert_eq!(len, 20);

        let x = ds.features(&[0, 1, 2]);
        let flat: Vec<f64> = x.iter().copied().collect();
        let mut y = [0.0; 3];
        assert_eq!(reln_model_predict(m, flat.as_ptr(), flat.len(), 3, y.as_mut_ptr(), 3), RelnStatus::Ok);
        assert_eq!(y.to_vec(), model.predict(&x).unwrap().iter().copied().collect::<Vec<_>>());
        assert_eq!(reln_model_predict(m, flat.as_ptr(), flat.len(), 2, y.as_mut_ptr(), 2), RelnStatus::Shape);

        let mut rep = RelnEvalReport::default();
        assert_eq!(reln_evaluate(m, d, 5, 0.5, 1, &mut rep), RelnStatus::Ok);
        assert_eq!(rep.conjugations, 5);
        assert!(rep.invariance_error <= 1e-10);
        assert!((rep.mse_conjugated - rep.mse_id).abs() <= 1e-9 * rep.mse_id);

        let copy = CString::new(dir.path().join("copy.rlnm").to_str().unwrap()).unwrap();
        assert_eq!(reln_model_save(m, copy.as_ptr()), RelnStatus::Ok);
        assert_eq!(std::fs::read(dir.path().join("copy.rlnm")).unwrap(), std::fs::read(&model_path).unwrap());

        std::fs::write(dir.path().join("bad.rlnm"), b"RLNM\x01\0\0\0").unwrap();
        let bad = CString::new(dir.path().join("bad.rlnm").to_str().unwrap()).unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(reln_model_load(bad.as_ptr(), &mut other), RelnStatus::Format);

        reln_model_free(m);
        reln_dataset_free(d);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(reln_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/reln.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    // Compile the header as C when a compiler is around.
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/reln.h"))
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
