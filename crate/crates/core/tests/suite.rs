// SPDX-License-Identifier: Apache-2.0

mod common;

use std::time::Duration;

use rome::bench::find_benchmark;
use rome::vcode::Workfile;

#[test]
fn shipped_suite_definitions() {
    let suite = common::suite();
    let ids: Vec<&str> = suite.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids.len(), 6);
    for id in ["mux_64to1", "decoder_5to32", "barrel_shifter_32", "systolic_4x4", "uart_8bit", "aes_128"] {
        assert!(ids.contains(&id), "missing {id}");
    }
    let dec = find_benchmark(&suite, "decoder_5to32").unwrap();
    let steps: Vec<&str> = dec.plan.submodules.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(steps, ["decoder2to4", "decoder3to8", "decoder5to32"]);
    assert!(dec.plan.ends_with_top());

    let uart = find_benchmark(&suite, "uart_8bit").unwrap();
    let last = uart.plan.submodules.last().unwrap();
    assert_eq!((last.name.as_str(), last.description.as_str()), ("uart_top", "Top-level UART"));
    for def in &suite {
        assert!(def.plan.top.testbench.is_file(), "{}", def.id);
        assert!(!def.nh_prompt.trim().is_empty(), "{}", def.id);
        for s in &def.plan.submodules {
            if let Some(tb) = &s.unit_testbench {
                assert!(tb.is_file(), "{}: {}", def.id, tb.display());
            }
        }
    }
}

/// The reference designs pass every shipped testbench, and a unit swapped
/// for a faulty one is caught.
#[test]
fn testbenches_accept_reference_designs() {
    let sim = common::simulator();
    let dir = tempfile::tempdir().unwrap();
    let timeout = Duration::from_secs(120);
    for def in common::suite() {
        let path = dir.path().join(&def.id).join("prev_submods.v");
        let mut wf = Workfile::new(&path);
        for u in common::reference(&def.id) {
            wf.insert(u);
        }
        std::fs::create_dir_all(dir.path().join(&def.id)).unwrap();
        wf.save().unwrap();
        let mut benches: Vec<_> = def.plan.submodules.iter().filter_map(|s| s.unit_testbench.clone()).collect();
        benches.push(def.plan.top.testbench.clone());
        for tb in benches {
            let out = sim.test_unit(&path, &tb, timeout).unwrap();
            assert!(out.passed(), "{} with {}: {:?}\n{}", def.id, tb.display(), out.verdict, out.stdout);
        }
    }

    let suite = common::suite();
    let dec = find_benchmark(&suite, "decoder_5to32").unwrap();
    let path = dir.path().join("broken/prev_submods.v");
    let mut wf = Workfile::new(&path);
    for u in common::reference("decoder_5to32") {
        wf.insert(u);
    }
    let mut bad = common::reference_unit("decoder_5to32", "decoder2to4");
    bad.body = bad.body.replace("4'b0001 << in", "4'b0010 << in");
    wf.insert(bad);
    std::fs::create_dir_all(dir.path().join("broken")).unwrap();
    wf.save().unwrap();
    let out = sim.test_unit(&path, &dec.plan.top.testbench, timeout).unwrap();
    assert!(!out.passed());
    assert!(out.stdout.contains("TEST FAILED"), "{}", out.stdout);
}
