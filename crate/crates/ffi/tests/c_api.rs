use std::ffi::CString;
use std::path::Path;
use std::process::Command;
use std::ptr;

use npwnet_ffi::*;

fn last_error() -> String {
    let needed = unsafe { npw_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; needed];
    unsafe { npw_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn planted(seed: u64) -> (*mut NpwNetwork, Vec<usize>) {
    let (pi, theta) = ([0.5, 0.5], [-1.0, 1.0]);
    let mut net = ptr::null_mut();
    let mut labels = vec![0usize; 80];
    let status = unsafe {
        npw_simulate(80, 2, pi.as_ptr(), theta.as_ptr(), NpwWeightMode::Normal, seed, &mut net, labels.as_mut_ptr())
    };
    assert_eq!(status, NpwStatus::Ok, "{}", last_error());
    (net, labels)
}

#[test]
fn network_round_trip() {
    let (i, j, w) = ([0usize, 1, 0], [1usize, 2, 2], [0.5, -1.0, 2.0]);
    let mut net = ptr::null_mut();
    let status = unsafe { npw_network_new(4, i.as_ptr(), j.as_ptr(), w.as_ptr(), 3, &mut net) };
    assert_eq!(status, NpwStatus::Ok);
    unsafe {
        assert_eq!(npw_network_node_count(net), 4);
        assert_eq!(npw_network_edge_count(net), 3);
        let mut d = 0;
        assert_eq!(npw_network_degree(net, 0, &mut d), NpwStatus::Ok);
        assert_eq!(d, 2);
        assert_eq!(npw_network_degree(net, 3, &mut d), NpwStatus::Ok);
        assert_eq!(d, 0);
        assert_eq!(npw_network_degree(net, 9, &mut d), NpwStatus::InvalidArgument);
        npw_network_free(net);
    }
}

#[test]
fn self_loops_are_rejected_with_message() {
    let (i, j, w) = ([1usize], [1usize], [1.0]);
    let mut net = ptr::null_mut();
    let status = unsafe { npw_network_new(3, i.as_ptr(), j.as_ptr(), w.as_ptr(), 1, &mut net) };
    assert_eq!(status, NpwStatus::Network);
    assert!(net.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(
            npw_network_new(3, ptr::null(), ptr::null(), ptr::null(), 2, ptr::null_mut()),
            NpwStatus::NullPointer
        );
        assert_eq!(npw_network_node_count(ptr::null()), 0);
        assert_eq!(npw_fit_result_k(ptr::null()), 0);
        let mut x = 0.0;
        assert_eq!(npw_fit_result_icl(ptr::null(), &mut x), NpwStatus::NullPointer);
        npw_network_free(ptr::null_mut());
        npw_fit_result_free(ptr::null_mut());
    }
}

#[test]
fn fit_and_read_back() {
    let (net, truth) = planted(3);
    let mut cfg = npw_fit_config_default(2);
    cfg.weight_mode = NpwWeightMode::Normal;
    cfg.restarts = 2;
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(npw_fit(net, &cfg, &mut res), NpwStatus::Ok, "{}", last_error());
        assert_eq!(npw_fit_result_k(res), 2);
        assert_eq!(npw_fit_result_n(res), 80);
        assert!(npw_fit_result_converged(res));

        let mut theta = [0.0; 1];
        assert_eq!(npw_fit_result_theta(res, theta.as_mut_ptr(), 1), NpwStatus::BufferTooSmall);
        let mut theta = [0.0; 2];
        assert_eq!(npw_fit_result_theta(res, theta.as_mut_ptr(), 2), NpwStatus::Ok);
        let mut pi = [0.0; 2];
        assert_eq!(npw_fit_result_pi(res, pi.as_mut_ptr(), 2), NpwStatus::Ok);
        assert!((pi[0] + pi[1] - 1.0).abs() < 1e-9);

        let mut gamma = vec![0.0; 160];
        assert_eq!(npw_fit_result_gamma(res, gamma.as_mut_ptr(), gamma.len()), NpwStatus::Ok);
        for row in gamma.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-8);
        }

        let mut labels = vec![0usize; 80];
        assert_eq!(npw_fit_result_labels(res, labels.as_mut_ptr(), 80), NpwStatus::Ok);
        let mut ri = 0.0;
        assert_eq!(npw_rand_index(truth.as_ptr(), labels.as_ptr(), 80, &mut ri), NpwStatus::Ok);
        assert!(ri > 0.9, "rand index {ri}");

        let len = npw_fit_result_elbo_trace_len(res);
        let mut trace = vec![0.0; len];
        assert_eq!(npw_fit_result_elbo_trace(res, trace.as_mut_ptr(), len), NpwStatus::Ok);
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));

        let mut icl = 0.0;
        assert_eq!(npw_fit_result_icl(res, &mut icl), NpwStatus::Ok);
        assert!(icl.is_finite() && icl < trace[len - 1]);

        npw_fit_result_free(res);
        npw_network_free(net);
    }
}

#[test]
fn invalid_config_is_a_fit_error() {
    let (net, _) = planted(4);
    let mut cfg = npw_fit_config_default(2);
    cfg.restarts = 0;
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(npw_fit(net, &cfg, &mut res), NpwStatus::Fit);
        assert!(res.is_null());
        npw_network_free(net);
    }
    assert!(last_error().contains("restart"));
}

#[test]
fn simulation_is_seeded() {
    let (a, la) = planted(11);
    let (b, lb) = planted(11);
    unsafe {
        assert_eq!(npw_network_edge_count(a), npw_network_edge_count(b));
        npw_network_free(a);
        npw_network_free(b);
    }
    assert_eq!(la, lb);
}

#[test]
fn reads_edge_lists() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    std::fs::write(&path, "i,j,w\n0,1,1.5\n1,2,2.5\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(npw_network_read_edge_list(c.as_ptr(), &mut net), NpwStatus::Ok);
        assert_eq!(npw_network_node_count(net), 3);
        npw_network_free(net);
    }
    std::fs::write(&path, "i,j,w\n0,1,1.5\na,b,c\n").unwrap();
    unsafe {
        assert_eq!(npw_network_read_edge_list(c.as_ptr(), &mut net), NpwStatus::Io);
    }
    assert!(last_error().contains("line 3"), "{}", last_error());
}

#[test]
fn error_message_truncates() {
    let (i, j, w) = ([0usize], [0usize], [1.0]);
    let mut net = ptr::null_mut();
    unsafe { npw_network_new(2, i.as_ptr(), j.as_ptr(), w.as_ptr(), 1, &mut net) };
    let full = last_error();
    let mut buf = [1 as std::ffi::c_char; 4];
    let needed = unsafe { npw_last_error_message(buf.as_mut_ptr(), 4) };
    assert_eq!(needed, full.len() + 1);
    assert_eq!(buf[3], 0);
}

#[test]
fn header_declares_every_export_and_parses_as_c() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/npwnet.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    if Command::new("cc").arg("--version").output().is_ok() {
        let status = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header_path).status().unwrap();
        assert!(status.success());
    }
}
