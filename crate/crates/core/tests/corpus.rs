// SPDX-License-Identifier: Apache-2.0

mod common;

use rome::vcode::{extract_units, filter_target, VcodeError};

fn names(fixture: &str) -> Vec<String> {
    let raw = common::read(&common::fixtures().join("llm_outputs").join(format!("{fixture}.txt")));
    extract_units(&raw).into_iter().map(|u| u.name).collect()
}

#[test]
fn extraction_per_fixture() {
    let expected: &[(&str, &[&str])] = &[
        ("attributes", &["reg_bit"]),
        ("block_comment_keywords", &["nand_gate"]),
        ("completion_continuation", &["mux2_1", "tb"]),
        ("crlf_line_endings", &["mux2_1"]),
        ("empty", &[]),
        ("endmodule_label", &["inv"]),
        ("endmodule_trailing_comment", &["buf1"]),
        ("escaped_quote_in_string", &["quoter"]),
        ("fenced_no_lang", &["decoder2to4"]),
        ("fenced_single", &["mux2_1"]),
        ("fenced_systemverilog_tag", &["counter"]),
        ("fenced_v_tag", &["mux2_1"]),
        ("generate_block", &["parity"]),
        ("identifier_contains_module", &["top_wrap"]),
        ("indented_code", &["mux2_1"]),
        ("line_comment_keywords", &["xor_gate"]),
        ("multi_fence_blocks", &["mux2_1", "mux4_1"]),
        ("multi_module", &["mux2_1", "mux4_1"]),
        ("multiline_header", &["fifo_ctrl"]),
        ("no_trailing_newline", &["mux2_1"]),
        ("non_ansi_ports", &["and_gate"]),
        ("numbered_explanation", &["mux2_1"]),
        ("parameterized", &["counter"]),
        ("prose_after", &["mux2_1"]),
        ("prose_before", &["mux2_1"]),
        ("prose_both_fenced", &["decoder2to4"]),
        ("prose_only", &[]),
        ("stray_module_keyword", &["decoder2to4"]),
        ("string_keywords", &["reporter"]),
        ("tabs_indentation", &["or_gate"]),
        ("testbench_appended", &["mux2_1", "tb_mux2_1"]),
        ("testbench_first", &["tb_mux2_1", "mux2_1"]),
        ("testbench_same_fence", &["mux2_1", "tb_mux2_1"]),
        ("three_modules_and_tb", &["mux2_1", "mux4_1", "decoder2to4", "tb_mux2_1"]),
        ("timescale_and_define", &["adder"]),
        ("truncated_output", &["mux2_1"]),
        ("unclosed_fence", &["decoder2to4"]),
    ];
    for (fixture, want) in expected {
        assert_eq!(names(fixture), *want, "{fixture}");
    }
}

#[test]
fn prose_is_dropped() {
    let raw = common::read(&common::fixtures().join("llm_outputs/prose_both_fenced.txt"));
    let unit = &extract_units(&raw)[0];
    assert!(unit.body.starts_with("module decoder2to4("));
    assert!(unit.body.ends_with("endmodule"));
    assert!(!unit.body.contains("```"));
    assert!(!unit.body.contains("one-hot"));
}

#[test]
fn target_selection_skips_testbenches() {
    let raw = common::read(&common::fixtures().join("llm_outputs/testbench_first.txt"));
    let units = extract_units(&raw);
    let sel = filter_target(&units, "mux2_1").unwrap();
    assert_eq!(sel.unit.name, "mux2_1");
    assert!(sel.mismatch.is_none());

    let sel = filter_target(&units, "mux_2to1").unwrap();
    assert_eq!(sel.unit.name, "mux2_1");
    assert!(sel.mismatch.is_some());

    let tb_only = extract_units(&common::read(&common::fixtures().join("llm_outputs/completion_continuation.txt")));
    assert_eq!(filter_target(&tb_only, "other").unwrap().unit.name, "mux2_1");
    assert!(matches!(filter_target(&[], "mux2_1"), Err(VcodeError::Empty)));
}
