use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ntubal_ffi::*;

fn new_tensor(shape: &[usize], data: Option<&[f64]>) -> *mut NtTensor {
    let mut out = ptr::null_mut();
    let status = unsafe {
        nt_tensor_new(shape.as_ptr(), shape.len(), data.map_or(ptr::null(), |d| d.as_ptr()), &mut out)
    };
    assert_eq!(status, NtStatus::Ok);
    out
}

fn data_of(t: *const NtTensor) -> Vec<f64> {
    let n = unsafe { nt_tensor_numel(t) };
    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { nt_tensor_copy_data(t, buf.as_mut_ptr(), n) }, NtStatus::Ok);
    buf
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(nt_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn tensor_lifecycle() {
    let data: Vec<f64> = (0..24).map(f64::from).collect();
    let t = new_tensor(&[2, 3, 4], Some(&data));
    unsafe {
        assert_eq!(nt_tensor_order(t), 3);
        assert_eq!(nt_tensor_numel(t), 24);
        let mut shape = [0usize; 3];
        assert_eq!(nt_tensor_shape(t, shape.as_mut_ptr(), 3), NtStatus::Ok);
        assert_eq!(shape, [2, 3, 4]);
        assert_eq!(*nt_tensor_data(t).add(5), 5.0);

        let mut c = ptr::null_mut();
        assert_eq!(nt_tensor_clone(t, &mut c), NtStatus::Ok);
        assert_eq!(data_of(c), data);
        nt_tensor_free(c);
        nt_tensor_free(t);
        nt_tensor_free(ptr::null_mut());
        assert_eq!(nt_tensor_order(ptr::null()), 0);
    }
    let z = new_tensor(&[2, 2, 2], None);
    assert!(data_of(z).iter().all(|&v| v == 0.0));
    unsafe { nt_tensor_free(z) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let shape = [2usize, 0, 3];
    let status = unsafe { nt_tensor_new(shape.as_ptr(), 3, ptr::null(), &mut out) };
    assert_eq!(status, NtStatus::ShapeMismatch);
    assert!(out.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { nt_tensor_new(ptr::null(), 3, ptr::null(), &mut out) }, NtStatus::NullPointer);

    let t = new_tensor(&[2, 2, 2], None);
    let mut small = [0usize; 2];
    assert_eq!(unsafe { nt_tensor_shape(t, small.as_mut_ptr(), 2) }, NtStatus::BufferTooSmall);

    let alpha = [0.5, 0.5];
    let tau = [1.0, 1.0];
    let status = unsafe {
        nt_lrtc_solve(t, t, alpha.as_ptr(), tau.as_ptr(), 2, ptr::null(), &mut out, ptr::null_mut())
    };
    assert_eq!(status, NtStatus::InvalidArgument);
    assert!(last_error().contains("pair"), "{}", last_error());

    let path = CString::new("/nonexistent/dir/x.ntub").unwrap();
    assert_eq!(unsafe { nt_tensor_read(path.as_ptr(), &mut out) }, NtStatus::Io);
    unsafe { nt_tensor_free(t) };
}

#[test]
fn file_roundtrip_and_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.ntub").to_str().unwrap()).unwrap();
    let data: Vec<f64> = (0..12).map(|i| f64::from(i) * 0.25 - 1.0).collect();
    let t = new_tensor(&[3, 2, 2], Some(&data));
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(nt_tensor_write(t, path.as_ptr()), NtStatus::Ok);
        assert_eq!(nt_tensor_read(path.as_ptr(), &mut back), NtStatus::Ok);
    }
    assert_eq!(data_of(back), data);

    let junk = dir.path().join("junk.ntub");
    std::fs::write(&junk, b"NOTATENSOR").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nt_tensor_read(junk.as_ptr(), &mut out) }, NtStatus::Format);
    unsafe {
        nt_tensor_free(t);
        nt_tensor_free(back);
    }
}

#[test]
fn rank_wstnn_and_tsvd() {
    let shape = [6usize, 5, 4];
    let mut x = ptr::null_mut();
    assert_eq!(unsafe { nt_gen_cp(shape.as_ptr(), 3, 2, 11, 0, &mut x) }, NtStatus::Ok);

    let mut rank = [0usize; 3];
    assert_eq!(unsafe { nt_n_tubal_rank(x, 0.01, rank.as_mut_ptr(), 3) }, NtStatus::Ok);
    assert_eq!(rank, [2, 2, 2]);

    let alpha = [1.0, 0.0, 0.0];
    let mut v = 0.0;
    assert_eq!(unsafe { nt_wstnn(x, alpha.as_ptr(), 3, &mut v) }, NtStatus::Ok);
    assert!(v > 0.0);

    let (mut u, mut s, mut w) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { nt_t_svd(x, &mut u, &mut s, &mut w) }, NtStatus::Ok);
    let mut dims = [0usize; 3];
    unsafe {
        assert_eq!(nt_tensor_shape(s, dims.as_mut_ptr(), 3), NtStatus::Ok);
        assert_eq!(dims, shape);
        for t in [x, u, s, w] {
            nt_tensor_free(t);
        }
    }
}

#[test]
fn solvers_through_the_abi() {
    let shape = [10usize, 10, 10];
    let mut x = ptr::null_mut();
    assert_eq!(unsafe { nt_gen_cp(shape.as_ptr(), 3, 1, 3, 0, &mut x) }, NtStatus::Ok);
    let truth = data_of(x);
    let mut state = 99u64;
    let mask_data: Vec<f64> = (0..1000)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (state >> 33) % 10 < 2 { 0.0 } else { 1.0 }
        })
        .collect();
    let mask = new_tensor(&shape, Some(&mask_data));

    let alpha = [1.0 / 3.0; 3];
    let tau = [10.0; 3];
    let params = nt_lrtc_default_params();
    let mut xhat = ptr::null_mut();
    let mut info = NtSolveInfo::default();
    let status =
        unsafe { nt_lrtc_solve(x, mask, alpha.as_ptr(), tau.as_ptr(), 3, &params, &mut xhat, &mut info) };
    assert_eq!(status, NtStatus::Ok, "{}", last_error());
    assert_eq!(info.converged, 1);
    assert_eq!(info.constraint_residual, 0.0);
    let rec = data_of(xhat);
    let err: f64 = rec.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        / truth.iter().map(|v| v * v).sum::<f64>();
    assert!(err < 1e-3, "{err}");

    let (mut low, mut sparse) = (ptr::null_mut(), ptr::null_mut());
    let status = unsafe {
        nt_trpca_solve(x, alpha.as_ptr(), tau.as_ptr(), 3, 0.0, ptr::null(), &mut low, &mut sparse, &mut info)
    };
    assert_eq!(status, NtStatus::Ok, "{}", last_error());
    assert!(info.iterations > 0);
    unsafe {
        for t in [x, mask, xhat, low, sparse] {
            nt_tensor_free(t);
        }
    }
}

#[test]
fn default_params() {
    let p = nt_lrtc_default_params();
    assert_eq!((p.gamma, p.beta_max, p.max_iter, p.rel_tol), (1.1, 1e10, 500, 1e-4));
    assert_eq!(nt_trpca_default_params().gamma, 1.2);
}

/// Compiles `tests/c/smoke.c` against the generated header and the static
/// library, then runs it.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<this test> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libntubal_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
