use std::ffi::{CStr, CString};
use std::ptr;

use pama_ffi::*;

fn last_error() -> String {
    let p = pama_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// A 20×16 rank-one sign pattern observed on every entry twice.
fn problem() -> *mut PamaProblem {
    let (n, m) = (20, 16);
    let (mut rows, mut cols, mut signs) = (vec![], vec![], vec![]);
    for _ in 0..2 {
        for i in 0..n {
            for j in 0..m {
                rows.push(i);
                cols.push(j);
                signs.push(if (i < 10) == (j < 8) { 1 } else { -1 });
            }
        }
    }
    let mut out = ptr::null_mut();
    let status = unsafe {
        pama_problem_new_onebit(
            n,
            m,
            rows.len(),
            rows.as_ptr(),
            cols.as_ptr(),
            signs.as_ptr(),
            PamaNoise::Logistic,
            0.0,
            &mut out,
        )
    };
    assert_eq!(status, PamaStatus::Ok);
    assert!(!out.is_null());
    out
}

fn config(solver: PamaSolver, lambda: f64) -> PamaSolveConfig {
    let mut cfg = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { pama_solve_config_default(cfg.as_mut_ptr()) }, PamaStatus::Ok);
    let mut cfg = unsafe { cfg.assume_init() };
    cfg.solver = solver;
    cfg.lambda = lambda;
    cfg.rank = 4;
    cfg.seed = 3;
    cfg
}

#[test]
fn both_solvers_round_trip_factors() {
    let p = problem();
    let mut scale = 0.0;
    assert_eq!(unsafe { pama_problem_lambda_scale(p, &mut scale) }, PamaStatus::Ok);
    // The sign matrix keeps one label per index: 20 entries of ±1 a column.
    assert!((scale - 20f64.sqrt()).abs() < 1e-12);
    for solver in [PamaSolver::Pama, PamaSolver::Palm] {
        let cfg = config(solver, 0.3 * scale);
        let mut res = ptr::null_mut();
        assert_eq!(
            unsafe { pama_solve(p, &cfg, &mut res) },
            PamaStatus::Ok,
            "{}",
            last_error()
        );
        let (mut n, mut m, mut r) = (0, 0, 0);
        assert_eq!(unsafe { pama_result_dims(res, &mut n, &mut m, &mut r) }, PamaStatus::Ok);
        assert_eq!((n, m, r), (20, 16, 4));
        let (mut iters, mut obj, mut rank, mut stop) = (0, 0.0, 0, PamaStop::MaxIterations);
        assert_eq!(
            unsafe { pama_result_summary(res, &mut iters, &mut obj, &mut rank, &mut stop) },
            PamaStatus::Ok
        );
        assert!(iters >= 1 && obj.is_finite() && rank <= 4);
        let mut u = vec![f64::NAN; n * r];
        let mut v = vec![f64::NAN; m * r];
        assert_eq!(
            unsafe { pama_result_copy_u(res, u.as_mut_ptr(), u.len()) },
            PamaStatus::Ok
        );
        assert_eq!(
            unsafe { pama_result_copy_v(res, v.as_mut_ptr(), v.len()) },
            PamaStatus::Ok
        );
        // The product must reproduce the block sign pattern.
        let x = |i: usize, j: usize| (0..r).map(|k| u[k * n + i] * v[k * m + j]).sum::<f64>();
        assert!(
            x(0, 0) > 0.0 && x(0, 15) < 0.0 && x(19, 0) < 0.0 && x(19, 15) > 0.0,
            "{solver:?}"
        );
        unsafe { pama_result_free(res) };
    }
    unsafe { pama_problem_free(p) };
}

#[test]
fn errors_carry_status_and_message() {
    let p = problem();
    let mut res = ptr::null_mut();
    let bad = config(PamaSolver::Pama, -1.0);
    assert_eq!(unsafe { pama_solve(p, &bad, &mut res) }, PamaStatus::InvalidParameter);
    assert!(res.is_null());
    assert!(last_error().contains("lambda"), "{}", last_error());

    assert_eq!(
        unsafe { pama_solve(ptr::null(), &bad, &mut res) },
        PamaStatus::NullPointer
    );

    let good = config(PamaSolver::Pama, 1.0);
    assert_eq!(unsafe { pama_solve(p, &good, &mut res) }, PamaStatus::Ok);
    let mut small = [0.0; 3];
    assert_eq!(
        unsafe { pama_result_copy_u(res, small.as_mut_ptr(), small.len()) },
        PamaStatus::BufferTooSmall
    );
    unsafe { pama_result_free(res) };

    let rows = [0usize];
    let cols = [99usize];
    let signs = [1i8];
    let mut q = ptr::null_mut();
    let status = unsafe {
        pama_problem_new_onebit(
            3,
            3,
            1,
            rows.as_ptr(),
            cols.as_ptr(),
            signs.as_ptr(),
            PamaNoise::Logistic,
            0.0,
            &mut q,
        )
    };
    assert_eq!(status, PamaStatus::Dimension);
    let status = unsafe {
        pama_problem_new_onebit(
            3,
            3,
            1,
            rows.as_ptr(),
            rows.as_ptr(),
            signs.as_ptr(),
            PamaNoise::Laplace,
            -2.0,
            &mut q,
        )
    };
    assert_eq!(status, PamaStatus::InvalidParameter);
    assert!(q.is_null());
    unsafe { pama_problem_free(p) };
}

#[test]
fn text_problems_and_prox() {
    let text = CString::new("2 2\n3\n0 0 1\n1 1 -1\n0 1 1\n").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { pama_problem_from_text(text.as_ptr(), PamaNoise::Laplace, 2.0, &mut p) },
        PamaStatus::Ok
    );
    unsafe { pama_problem_free(p) };
    let broken = CString::new("2 2\n5\n0 0 1\n").unwrap();
    assert_eq!(
        unsafe { pama_problem_from_text(broken.as_ptr(), PamaNoise::Logistic, 0.0, &mut p) },
        PamaStatus::Parse
    );

    let mut x = 0.0;
    // Soft threshold: max(s − ν, 0).
    assert_eq!(
        unsafe { pama_prox_theta(PamaTheta::Abs, 0.0, 0.0, 1.0, 3.0, &mut x) },
        PamaStatus::Ok
    );
    assert_eq!(x, 2.0);
    // Ridge shrinkage: s / (1 + 2ν).
    assert_eq!(
        unsafe { pama_prox_theta(PamaTheta::Square, 0.0, 0.0, 0.5, 2.0, &mut x) },
        PamaStatus::Ok
    );
    assert_eq!(x, 1.0);
    assert_eq!(
        unsafe { pama_prox_theta(PamaTheta::Scad, 0.5, 1.0, 1.0, 1.0, &mut x) },
        PamaStatus::InvalidParameter
    );
    unsafe { pama_problem_free(ptr::null_mut()) };
    unsafe { pama_result_free(ptr::null_mut()) };
    assert!(!unsafe { CStr::from_ptr(pama_version()) }.to_bytes().is_empty());
}
