use std::ffi::{CStr, CString};
use std::ptr;

use p2aircomp_ffi::*;

fn last_error() -> String {
    let p = p2_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_and_status_names() {
    let v = unsafe { CStr::from_ptr(p2_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let name = |s: i32| {
        unsafe { CStr::from_ptr(p2_status_name(s)) }
            .to_str()
            .unwrap()
            .to_owned()
    };
    assert_eq!(name(P2Status::Ok as i32), "ok");
    assert_eq!(name(P2Status::BufferTooSmall as i32), "buffer too small");
    assert_eq!(name(99), "unknown status");
}

#[test]
fn key_bundle_lifecycle() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(p2_keys_sample(5, 4, 7, &mut b), P2Status::Ok);
        let (mut k, mut d) = (0usize, 0usize);
        assert_eq!(p2_keys_shape(b, &mut k, &mut d), P2Status::Ok);
        assert_eq!((k, d), (5, 4));

        let mut sums = [0.0f64; 4];
        for c in 0..k {
            let mut key = [0.0f64; 4];
            assert_eq!(p2_keys_copy(b, c, key.as_mut_ptr(), 4), P2Status::Ok);
            for (s, x) in sums.iter_mut().zip(key) {
                assert!((-0.5..0.5).contains(&x));
                *s += x;
            }
        }
        for s in sums {
            assert!(
                (s - s.round()).abs() < 1e-12,
                "key sum {s} is not an integer"
            );
        }

        let (mut passed, mut residual) = (false, f64::NAN);
        assert_eq!(p2_keys_verify(b, &mut passed, &mut residual), P2Status::Ok);
        assert!(passed);
        assert!(residual < 1e-12);

        let mut needed = 0usize;
        assert_eq!(
            p2_keys_to_json(b, ptr::null_mut(), 0, &mut needed),
            P2Status::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(
            p2_keys_to_json(b, buf.as_mut_ptr(), needed, ptr::null_mut()),
            P2Status::Ok
        );
        let mut back = ptr::null_mut();
        assert_eq!(p2_keys_from_json(buf.as_ptr(), &mut back), P2Status::Ok);
        let mut k0 = [0.0; 4];
        let mut k0_back = [0.0; 4];
        p2_keys_copy(b, 0, k0.as_mut_ptr(), 4);
        p2_keys_copy(back, 0, k0_back.as_mut_ptr(), 4);
        assert_eq!(k0, k0_back);

        assert_eq!(
            p2_keys_copy(b, 5, k0.as_mut_ptr(), 4),
            P2Status::InvalidArgument
        );
        assert_eq!(
            p2_keys_copy(b, 0, k0.as_mut_ptr(), 3),
            P2Status::InvalidArgument
        );
        p2_keys_free(b);
        p2_keys_free(back);
        p2_keys_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes_with_messages() {
    unsafe {
        assert_eq!(
            p2_keys_sample(1, 4, 0, ptr::null_mut()),
            P2Status::NullPointer
        );
        assert!(last_error().contains("out is null"));

        let mut b = ptr::null_mut();
        assert_eq!(p2_keys_sample(1, 4, 0, &mut b), P2Status::InvalidArgument);
        assert!(b.is_null());

        let bad = CString::new("{not json").unwrap();
        assert_eq!(
            p2_keys_from_json(bad.as_ptr(), &mut b),
            P2Status::Serialization
        );

        let mut v = 0.0;
        assert_eq!(p2_mod1(f64::NAN, &mut v), P2Status::Domain);
        assert_eq!(
            p2_delta_derivative(0.0, -1.0, &mut v),
            P2Status::InvalidArgument
        );

        let mut cfg = ptr::null_mut();
        assert_eq!(
            p2_config_reference(9, 0.1, false, &mut cfg),
            P2Status::InvalidArgument
        );
        assert!(last_error().contains("unknown scheme 9"));
    }
}

#[test]
fn error_message_is_thread_local() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(p2_mod1(f64::INFINITY, &mut v), P2Status::Domain);
    }
    let other = std::thread::spawn(|| p2_last_error_message().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(!p2_last_error_message().is_null());
}

#[test]
fn rounds_through_the_boundary_match_the_library() {
    use p2aircomp::protocol::{run_round, NoiseScheme, ProtocolConfig};
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(
            p2_config_reference(P2Scheme::P2Modulo as i32, 0.0, true, &mut cfg),
            P2Status::Ok
        );
        let mut round = ptr::null_mut();
        assert_eq!(p2_round_run(cfg, 11, &mut round), P2Status::Ok);

        let (mut mse, mut sigma, mut ok) = (0.0, 0.0, false);
        assert_eq!(
            p2_round_summary(round, &mut mse, &mut sigma, &mut ok),
            P2Status::Ok
        );
        let direct =
            run_round(&ProtocolConfig::reference(NoiseScheme::P2Modulo, true), 11).unwrap();
        assert_eq!(mse, direct.mse_per_dim());
        assert_eq!(sigma, direct.sigma_eff);
        assert!(ok);

        let mut dim = 0;
        p2_round_dim(round, &mut dim);
        let mut w_hat = vec![0.0; dim];
        assert_eq!(
            p2_round_copy_estimate(round, w_hat.as_mut_ptr(), dim),
            P2Status::Ok
        );
        assert_eq!(w_hat, direct.w_hat);
        let mut w = vec![0.0; dim];
        assert_eq!(
            p2_round_copy_truth(round, w.as_mut_ptr(), dim),
            P2Status::Ok
        );
        assert_eq!(w, direct.w_true);

        let mut needed = 0;
        p2_config_to_json(cfg, ptr::null_mut(), 0, &mut needed);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(
            p2_config_to_json(cfg, buf.as_mut_ptr(), needed, ptr::null_mut()),
            P2Status::Ok
        );
        let mut cfg2 = ptr::null_mut();
        assert_eq!(p2_config_from_json(buf.as_ptr(), &mut cfg2), P2Status::Ok);
        let mut round2 = ptr::null_mut();
        p2_round_run(cfg2, 11, &mut round2);
        let mut mse2 = 0.0;
        p2_round_summary(round2, &mut mse2, &mut sigma, &mut ok);
        assert_eq!(mse, mse2);

        p2_round_free(round);
        p2_round_free(round2);
        p2_config_free(cfg);
        p2_config_free(cfg2);
    }
}

#[test]
fn analytics_entry_points() {
    unsafe {
        let s = [0.0, 0.1, -0.2];
        let mut series = P2Series::default();
        assert_eq!(
            p2_delta(s.as_ptr(), s.len(), 0.2, &mut series),
            P2Status::Ok
        );
        let direct =
            p2aircomp::analytics::delta_pointwise(&s, 0.2, p2aircomp::analytics::Truncation::Auto)
                .unwrap();
        assert_eq!(series.value, direct.value);
        assert_eq!(series.truncation_l, direct.truncation_l);
        assert!(series.tail_bound <= 1e-12);

        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            p2_delta_bounds(1.0 / 3.0, 0.2, 3, &mut lo, &mut hi),
            P2Status::Ok
        );
        assert!(lo <= series.value && series.value <= hi);

        let mut mc = P2McEstimate::default();
        assert_eq!(
            p2_mc_mse(s.as_ptr(), s.len(), 0.2, 100_000, 3, &mut mc),
            P2Status::Ok
        );
        assert_eq!(mc.trials, 100_000);
        assert!((mc.mean - series.value).abs() < 5.0 * mc.std_error);
        assert_eq!(
            p2_mc_mse(s.as_ptr(), s.len(), 0.2, 10, 3, &mut mc),
            P2Status::InvalidArgument
        );

        let mut l = f64::NAN;
        assert_eq!(
            p2_leakage(P2Scheme::P2Modulo as i32, 0.0, 10, 0.1, &mut l),
            P2Status::Ok
        );
        assert_eq!(l, 0.0);
        assert_eq!(
            p2_leakage(P2Scheme::Independent as i32, 0.1, 10, 0.1, &mut l),
            P2Status::Ok
        );
        let direct = p2aircomp::analytics::leakage_gaussian(
            p2aircomp::protocol::NoiseScheme::Independent { sigma: 0.1 },
            10,
            0.1,
        )
        .unwrap();
        assert_eq!(l, direct.leakage_nats_per_dim);
        assert!(l > 0.0);

        let support = [0u32, 1];
        let (mut mi, mut outcomes) = (f64::NAN, 0u64);
        assert_eq!(
            p2_oracle_server_leakage(5, 3, support.as_ptr(), 2, &mut mi, &mut outcomes),
            P2Status::Ok
        );
        assert_eq!(mi, 0.0);
        assert!(outcomes > 0);
    }
}
