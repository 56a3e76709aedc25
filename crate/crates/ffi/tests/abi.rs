use std::ffi::{c_char, CString};
use std::ptr;

use driftmdp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { dm_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn instance_lifecycle_and_queries() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(dm_instance_generate_drift(2, 2, 200, 2.0, 1.0, 9, &mut inst), DmStatus::Ok);
        assert_eq!(dm_instance_horizon(inst), 200);
        let (mut br, mut bp) = (0.0, 0.0);
        assert_eq!(dm_instance_budgets(inst, &mut br, &mut bp), DmStatus::Ok);
        assert!((br - 2.0).abs() < 0.1 && (bp - 1.0).abs() < 0.1, "{br} {bp}");
        let mut d = 0.0;
        assert_eq!(dm_snapshot_diameter(inst, 1, &mut d), DmStatus::Ok);
        assert!((1.0..=6.0).contains(&d));
        let mut rho = 0.0;
        assert_eq!(dm_snapshot_optimal_gain(inst, 200, 1e-8, &mut rho), DmStatus::Ok);
        assert!((0.0..=1.0).contains(&rho));
        assert_eq!(dm_snapshot_diameter(inst, 201, &mut d), DmStatus::InvalidArgument);
        assert!(last_error().contains("outside"));
        dm_instance_free(inst);
    }
}

#[test]
fn runs_copy_out_their_regret_curve() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(dm_instance_generate_stationary(3, 2, 300, 1, &mut inst), DmStatus::Ok);
        for borl in [false, true] {
            let mut run = ptr::null_mut();
            let status = if borl {
                dm_run_borl(inst, 0.1, 4, &mut run)
            } else {
                dm_run_swucrl(inst, 40, 0.2, 0.1, 4, &mut run)
            };
            assert_eq!(status, DmStatus::Ok);
            let n = dm_run_len(run);
            assert_eq!(n, 300);
            let mut small = vec![0.0; 10];
            assert_eq!(dm_run_cum_regret(run, small.as_mut_ptr(), small.len()), DmStatus::BufferTooSmall);
            let mut curve = vec![f64::NAN; n];
            assert_eq!(dm_run_cum_regret(run, curve.as_mut_ptr(), n), DmStatus::Ok);
            assert!(curve.iter().all(|x| x.is_finite()));
            dm_run_free(run);
        }
        dm_instance_free(inst);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        assert_eq!(dm_instance_generate_stationary(0, 2, 10, 1, ptr::null_mut()), DmStatus::NullPointer);
        let mut inst = ptr::null_mut();
        assert_eq!(dm_instance_generate_stationary(0, 2, 10, 1, &mut inst), DmStatus::InvalidArgument);
        assert!(inst.is_null());
        let path = CString::new("/nonexistent/instance.toml").unwrap();
        assert_eq!(dm_instance_load(path.as_ptr(), &mut inst), DmStatus::Io);
        assert!(!last_error().is_empty());
        assert_eq!(dm_instance_horizon(ptr::null()), 0);
        dm_instance_free(ptr::null_mut());
        dm_run_free(ptr::null_mut());
        let needed = dm_last_error_message(ptr::null_mut(), 0);
        assert!(needed > 0);
    }
}

#[test]
fn switching_replay_values() {
    let mut values = [0.0; 4];
    let mut d = 0.0;
    unsafe {
        assert_eq!(dm_prop3_replay(4, values.as_mut_ptr(), &mut d), DmStatus::Ok);
    }
    assert_eq!(values, [0.8, 0.2, 1.0, 0.0]);
    assert!((d - 5.0).abs() < 1e-9);
}

#[test]
fn planner_on_a_point_model() {
    // Two states, one action: 0 -> 1 -> 0 with rewards 1 and 0, lazily mixed.
    let r = [1.0, 0.0];
    let p = [0.5, 0.5, 0.5, 0.5];
    let beta = [0.0, 0.0];
    let (mut policy, mut bias) = ([9usize; 2], [0.0; 2]);
    let (mut gain, mut converged) = (0.0, 0);
    let status = unsafe {
        dm_evi_solve(
            2,
            1,
            r.as_ptr(),
            r.as_ptr(),
            p.as_ptr(),
            beta.as_ptr(),
            1e-9,
            1000,
            policy.as_mut_ptr(),
            &mut gain,
            bias.as_mut_ptr(),
            &mut converged,
        )
    };
    assert_eq!(status, DmStatus::Ok);
    assert_eq!(converged, 1);
    assert_eq!(policy, [0, 0]);
    assert!((gain - 0.5).abs() < 1e-9);
    assert!((bias[0] - bias[1] - 1.0).abs() < 1e-9);

    let bad = [0.7, 0.7, 0.5, 0.5];
    let status = unsafe {
        dm_evi_solve(
            2,
            1,
            r.as_ptr(),
            r.as_ptr(),
            bad.as_ptr(),
            beta.as_ptr(),
            1e-9,
            1000,
            policy.as_mut_ptr(),
            &mut gain,
            bias.as_mut_ptr(),
            &mut converged,
        )
    };
    assert_ne!(status, DmStatus::Ok);
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/driftmdp.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
