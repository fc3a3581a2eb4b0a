// SPDX-License-Identifier: Apache-2.0

//! Regenerates the replay transcripts and golden prompts under
//! `tests/fixtures`. Each transcript is produced by running the real engine
//! against a scripted model wrapped in a recorder, so prompts and digests
//! always match what the engine renders.
//!
//! Run from the workspace root: `cargo run --example record_fixtures`.

use std::path::{Path, PathBuf};

use rome::bench::{find_benchmark, load_suite, BenchmarkDef};
use rome::engine::{self, EngineConfig, PromptingMode, RunRecord};
use rome::llm::{Recorder, ScriptedClient};
use rome::plan::HierarchyPlan;
use rome::prompts::{step_prompt, PromptMode};
use rome::sim::Simulator;
use rome::vcode::{extract_units, VerilogUnit, Workfile};

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn reference(bench: &str) -> Vec<VerilogUnit> {
    let path = crate_dir().join("tests/fixtures/reference").join(format!("{bench}.v"));
    extract_units(&std::fs::read_to_string(&path).expect("reference design"))
}

fn unit<'a>(units: &'a [VerilogUnit], name: &str) -> &'a VerilogUnit {
    units.iter().find(|u| u.name == name).expect("reference unit")
}

/// What a completion model emits after the open header `module name(`.
fn completion(u: &VerilogUnit) -> String {
    let prefix = format!("module {}(", u.name);
    u.body.strip_prefix(&prefix).expect("reference headers are `module name(`").to_string()
}

fn chat(intro: &str, code: &str) -> String {
    format!("{intro}\n\n```verilog\n{code}\n```\n")
}

fn record(
    bench: &BenchmarkDef,
    mode: PromptingMode,
    prompt_mode: PromptMode,
    responses: Vec<String>,
    out: &Path,
    sim: &Simulator,
) -> RunRecord {
    if out.exists() {
        std::fs::remove_file(out).expect("remove old transcript");
    }
    let ws = tempfile::tempdir().expect("temp workspace");
    let mut config = EngineConfig::new(mode, ws.path().join("run"));
    config.prompt_mode = prompt_mode;
    let script = ScriptedClient::new("scripted", responses);
    let mut client = Recorder::new(script, out).expect("transcript");
    let record = engine::run(&config, bench, &mut client, sim).expect("engine run");
    let left = client.into_inner().remaining();
    assert_eq!(left, 0, "{}: {left} scripted responses unused", out.display());
    println!(
        "{}: success={} attempts={:?}",
        out.display(),
        record.success,
        record.per_module_attempts
    );
    record
}

fn main() {
    let root = crate_dir().join("../..");
    let suite = load_suite(&root.join("suites/rome")).expect("suite");
    let sim = Simulator::detect().expect("simulator");
    assert!(sim.available(), "no simulator on PATH");
    let replay = crate_dir().join("tests/fixtures/replay");
    std::fs::create_dir_all(replay.join("mux_64to1")).unwrap();
    std::fs::create_dir_all(replay.join("decoder_5to32")).unwrap();
    std::fs::create_dir_all(replay.join("feedback")).unwrap();
    std::fs::create_dir_all(replay.join("conversational")).unwrap();
    std::fs::write(replay.join("RECORDED_WITH"), format!("{}\n", sim.name())).unwrap();
    let c = PromptMode::Completion;

    // Decoder, completion mode: HDHP passes every step first time.
    let dec = find_benchmark(&suite, "decoder_5to32").unwrap();
    let du = reference("decoder_5to32");
    let r = record(
        dec,
        PromptingMode::Hdhp,
        c,
        vec![
            completion(unit(&du, "decoder2to4")),
            // Completion models run on past the module; the stop sequence trims it.
            format!("{}\n\nmodule tb_decoder3to8;\nendmodule\n", completion(unit(&du, "decoder3to8"))),
            completion(unit(&du, "decoder5to32")),
        ],
        &replay.join("decoder_5to32/hdhp.ndjson"),
        &sim,
    );
    assert!(r.success);

    let dec_flat = "input en, input [4:0] in, output [31:0] out);\n  assign out = en ? (32'd1 << in) : 32'd0;\nendmodule\n";
    let dec_no_enable = "input en, input [4:0] in, output [31:0] out);\n  assign out = 32'd1 << in;\nendmodule\n";
    let dec_off_by_one = "input en, input [4:0] in, output [31:0] out);\n  assign out = en ? (32'd1 << (in + 5'd1)) : 32'd0;\nendmodule\n";
    let r = record(dec, PromptingMode::Nh, c, vec![dec_flat.into()], &replay.join("decoder_5to32/nh.ndjson"), &sim);
    assert!(r.success);
    for it in [3, 7] {
        let failing = (0..10)
            .map(|i| if i % 2 == 0 { dec_no_enable } else { dec_off_by_one }.to_string())
            .collect();
        let r = record(dec, PromptingMode::Nh, c, failing, &replay.join(format!("decoder_5to32/nh-{it}.ndjson")), &sim);
        assert!(!r.success);
    }

    // Multiplexer, completion mode: mux8_1 first fails to compile, then passes.
    let mux = find_benchmark(&suite, "mux_64to1").unwrap();
    let mu = reference("mux_64to1");
    let mux8_broken = completion(unit(&mu, "mux8_1")).replace("out(lo));", "out(lo))");
    let mut script: Vec<String> = ["mux2_1", "mux4_1"].iter().map(|n| completion(unit(&mu, n))).collect();
    script.push(mux8_broken.clone());
    script.extend(["mux8_1", "mux16_1", "mux32_1", "mux64_1"].iter().map(|n| completion(unit(&mu, n))));
    let r = record(mux, PromptingMode::Hdhp, c, script, &replay.join("mux_64to1/hdhp.ndjson"), &sim);
    assert!(r.success && r.per_module_attempts["mux8_1"] == 2);

    let mux_flat = "input [5:0] sel, input [63:0] in, output out);\n  assign out = in[sel];\nendmodule\n";
    let mux_plus_one = "input [5:0] sel, input [63:0] in, output out);\n  assign out = in[sel + 6'd1];\nendmodule\n";
    let mux_reversed = "input [5:0] sel, input [63:0] in, output out);\n  assign out = in[6'd63 - sel];\nendmodule\n";
    let failing: Vec<String> = (0..10)
        .map(|i| if i % 2 == 0 { mux_plus_one } else { mux_reversed }.to_string())
        .collect();
    let r = record(mux, PromptingMode::Nh, c, failing, &replay.join("mux_64to1/nh.ndjson"), &sim);
    assert!(!r.success);
    let r = record(
        mux,
        PromptingMode::Nh,
        c,
        vec![mux_plus_one.into(), mux_flat.into()],
        &replay.join("mux_64to1/nh-4.ndjson"),
        &sim,
    );
    assert!(r.success);

    // Multiplexer, completion mode: mux8_1 never passes.
    let wrong_logic = completion(unit(&mu, "mux8_1")).replace("sel[2] ? hi : lo", "sel[2] ? lo : hi");
    let wrong_name = format!("module mux_8to1({}", completion(unit(&mu, "mux8_1")));
    let variants = [
        mux8_broken,
        wrong_logic,
        // Renamed module: the open header is closed early and a new one begins.
        format!("input [2:0] sel, input [7:0] in, output reg out);\nendmodule\n{wrong_name}"),
        "input [2:0] sel, input [7:0] in, output reg out);\n  always @(*) out = in[sel]\n".to_string(),
    ];
    let mut script: Vec<String> = ["mux2_1", "mux4_1"].iter().map(|n| completion(unit(&mu, n))).collect();
    script.extend((0..10).map(|i| variants[i % variants.len()].clone()));
    let r = record(mux, PromptingMode::Hdhp, c, script, &replay.join("feedback/mux_hdhp_exhausted.ndjson"), &sim);
    assert!(!r.success && r.per_module_attempts["mux8_1"] == 10);

    // Conversational mode: decoder HDHP with prose, fences and a stray testbench.
    let chatty = PromptMode::Conversational;
    let tb = "module tb_decoder3to8;\n  reg en;\n  reg [2:0] in;\n  wire [7:0] out;\n  decoder3to8 dut(.en(en), .in(in), .out(out));\n  initial begin\n    en = 1; in = 3'd5;\n    #1 $display(\"%b\", out);\n  end\nendmodule";
    let r = record(
        dec,
        PromptingMode::Hdhp,
        chatty,
        vec![
            chat("Here is the 2-to-4 decoder:", &unit(&du, "decoder2to4").body),
            format!(
                "{}\nYou can check it with this testbench:\n\n```verilog\n{tb}\n```\n",
                chat("The 3-to-8 decoder uses two 2-to-4 decoders:", &unit(&du, "decoder3to8").body)
            ),
            chat("Finally, the 5-to-32 decoder:", &unit(&du, "decoder5to32").body),
        ],
        &replay.join("conversational/decoder_hdhp.ndjson"),
        &sim,
    );
    assert!(r.success);

    // Conversational mode: multiplexer PGHP. The model's plan lists the top
    // itself last; that item is dropped and the top comes from integration.
    let plan = "Sure. A 64-to-1 multiplexer can be built from these submodules:\n\n\
                1. 2-to-1 multiplexer (mux2_1)\n\
                2. 4-to-1 multiplexer (mux4_1)\n\
                3. 8-to-1 multiplexer (mux8_1)\n\
                4. 16-to-1 multiplexer (mux16_1)\n\
                5. 32-to-1 multiplexer (mux32_1)\n\
                6. 64-to-1 multiplexer (mux64_1)\n\n\
                Each stage combines two copies of the previous one.\n";
    let mut script = vec![plan.to_string()];
    script.extend(
        ["mux2_1", "mux4_1", "mux8_1", "mux16_1", "mux32_1", "mux64_1"]
            .iter()
            .map(|n| chat(&format!("Here is {n}:"), &unit(&mu, n).body)),
    );
    let r = record(mux, PromptingMode::Pghp, chatty, script, &replay.join("conversational/mux_pghp.ndjson"), &sim);
    assert!(r.success);

    write_goldens(dec, &du);
}

/// Completion-mode relay prompts for every decoder step, rendered against
/// a workfile holding the reference submodules.
fn write_goldens(dec: &BenchmarkDef, units: &[VerilogUnit]) {
    let dir = crate_dir().join("tests/fixtures/golden");
    std::fs::create_dir_all(&dir).unwrap();
    let plan: &HierarchyPlan = &dec.plan;
    let mut wf = Workfile::new(dir.join("unused.v"));
    for (i, spec) in plan.submodules.iter().enumerate() {
        let p = step_prompt(plan, i, &wf, PromptMode::Completion).expect("render");
        let text = p.completion_text().expect("completion prompt");
        let path = dir.join(format!("decoder_step{}.txt", i + 1));
        std::fs::write(&path, text).unwrap();
        println!("{}", path.display());
        wf.insert(unit(units, &spec.name).clone());
    }
}
