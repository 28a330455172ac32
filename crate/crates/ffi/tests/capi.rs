use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use topoleak_ffi::*;

fn last_error() -> String {
    let p = tl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn path_graph(n: usize) -> *mut TlGraph {
    let edges: Vec<usize> = (0..n - 1).flat_map(|i| [i, i + 1]).collect();
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { tl_graph_from_edges(n, edges.as_ptr(), n - 1, &mut g) },
        TlStatus::Ok
    );
    g
}

#[test]
fn generate_and_inspect_graph() {
    let mut g = ptr::null_mut();
    let st = unsafe { tl_graph_generate(TlTopology::PowerLaw, 30, 60, 2.5, 11, true, &mut g) };
    assert_eq!(st, TlStatus::Ok);
    unsafe {
        assert_eq!((tl_graph_node_count(g), tl_graph_edge_count(g)), (30, 60));
        let total: usize = (0..30)
            .map(|i| {
                let mut d = 0;
                assert_eq!(tl_graph_degree(g, i, &mut d), TlStatus::Ok);
                d
            })
            .sum();
        assert_eq!(total, 120);
        let mut d = 0;
        assert_eq!(tl_graph_degree(g, 30, &mut d), TlStatus::InvalidParameter);
        assert!(last_error().contains("out of range"));
        tl_graph_free(g);
    }
}

#[test]
fn edge_list_round_trip() {
    let text = CString::new("0 1\n1 2\n2 3\n").unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(tl_graph_read_edge_list(text.as_ptr(), &mut g), TlStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(tl_graph_write_edge_list(g, &mut s), TlStatus::Ok);
        let again = CStr::from_ptr(s).to_owned();
        tl_string_free(s);
        let mut h = ptr::null_mut();
        assert_eq!(tl_graph_read_edge_list(again.as_ptr(), &mut h), TlStatus::Ok);
        assert_eq!(tl_graph_edge_count(h), 3);
        tl_graph_free(g);
        tl_graph_free(h);

        let bad = CString::new("0 0\n").unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(tl_graph_read_edge_list(bad.as_ptr(), &mut g), TlStatus::Parse);
        assert!(g.is_null());
    }
}

#[test]
fn corrupt_selection_and_partition() {
    let g = path_graph(5);
    unsafe {
        let mut len = 0;
        assert_eq!(
            tl_select_corrupt(g, 0.2, false, ptr::null_mut(), 0, &mut len),
            TlStatus::BufferTooSmall
        );
        assert_eq!(len, 1);
        let mut buf = [0usize; 5];
        assert_eq!(
            tl_select_corrupt(g, 0.2, false, buf.as_mut_ptr(), 5, &mut len),
            TlStatus::Ok
        );
        // Degree 2 ties break towards the smallest id.
        assert_eq!(&buf[..len], &[1]);

        let corrupt = [2usize];
        let mut p = ptr::null_mut();
        assert_eq!(tl_partition_new(g, corrupt.as_ptr(), 1, &mut p), TlStatus::Ok);
        assert_eq!(tl_partition_component_count(p), 2);
        let mut nodes = [0usize; 5];
        assert_eq!(
            tl_partition_component(p, 1, nodes.as_mut_ptr(), 5, &mut len),
            TlStatus::Ok
        );
        assert_eq!(&nodes[..len], &[3, 4]);
        assert_eq!(
            tl_partition_component(p, 2, nodes.as_mut_ptr(), 5, &mut len),
            TlStatus::InvalidParameter
        );
        tl_partition_free(p);
        tl_graph_free(g);
    }
}

#[test]
fn leakage_and_similarity() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(tl_mi_exact(1, &mut v), TlStatus::Ok);
        assert!(v.is_infinite() && v > 0.0);
        assert_eq!(tl_mi_exact(4, &mut v), TlStatus::Ok);
        assert!((v - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert_eq!(tl_mi_asymptotic(4, &mut v), TlStatus::Ok);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);

        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(
            tl_ksg_mi(x.as_ptr(), x.as_ptr(), 0, 3, &mut v),
            TlStatus::InvalidParameter
        );

        let img: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        assert_eq!(tl_ssim(img.as_ptr(), img.as_ptr(), 4, 4, &mut v), TlStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn consensus_reaches_the_mean() {
    let g = path_graph(6);
    let mut values: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let mut rounds = 0;
    unsafe {
        assert_eq!(
            tl_consensus_average(g, values.as_mut_ptr(), 2, 1e-10, 100_000, &mut rounds),
            TlStatus::Ok
        );
        assert!(rounds > 0);
        for row in values.chunks_exact(2) {
            assert!((row[0] - 5.0).abs() < 1e-8 && (row[1] - 6.0).abs() < 1e-8, "{row:?}");
        }
        let mut values = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(
            tl_consensus_average(g, values.as_mut_ptr(), 1, 1e-12, 1, &mut rounds),
            TlStatus::ConsensusNotConverged
        );
        tl_graph_free(g);
    }
}

#[test]
fn null_handles_are_rejected() {
    unsafe {
        assert_eq!(tl_graph_node_count(ptr::null()), 0);
        let mut d = 0;
        assert_eq!(tl_graph_degree(ptr::null(), 0, &mut d), TlStatus::NullPointer);
        assert_eq!(tl_mi_exact(3, ptr::null_mut()), TlStatus::NullPointer);
        assert_eq!(
            tl_graph_generate(TlTopology::Poisson, 10, 5, 0.0, 1, false, ptr::null_mut()),
            TlStatus::NullPointer
        );
        tl_graph_free(ptr::null_mut());
        tl_partition_free(ptr::null_mut());
        tl_string_free(ptr::null_mut());
    }
}

#[test]
fn generation_failure_maps_to_status() {
    let mut g = ptr::null_mut();
    // More edges than a simple graph on 4 nodes can hold.
    let st = unsafe { tl_graph_generate(TlTopology::Poisson, 4, 7, 0.0, 1, false, &mut g) };
    assert_ne!(st, TlStatus::Ok);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_api_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/topoleak.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "tl_last_error",
        "tl_string_free",
        "tl_graph_generate",
        "tl_graph_from_edges",
        "tl_graph_read_edge_list",
        "tl_graph_write_edge_list",
        "tl_graph_free",
        "tl_select_corrupt",
        "tl_partition_new",
        "tl_partition_component",
        "tl_partition_free",
        "tl_mi_exact",
        "tl_mi_asymptotic",
        "tl_ksg_mi",
        "tl_ssim",
        "tl_consensus_average",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct TlGraph TlGraph;"));

    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
