mod common;

use std::path::Path;
use std::process::{Command, Output};

use peakvol_core::raycast::FrameBuffer;
use peakvol_core::volume::{load_volume, phantom_material_tf};
use peakvol_service::cli::exit;

fn peakvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peakvol"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn decode_png(path: &Path) -> FrameBuffer {
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    let (w, h) = (info.width as usize, info.height as usize);
    let mut fb = FrameBuffer::new(w, h);
    for (i, px) in buf[..w * h * 4].chunks_exact(4).enumerate() {
        fb.set_pixel(i % w, i / w, [px[0], px[1], px[2], px[3]]);
    }
    fb
}

#[test]
fn phantom_render_shows_three_materials_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let tf = dir.path().join("materials.json");
    std::fs::write(&tf, phantom_material_tf().to_json()).unwrap();
    let meta = dir.path().join("phantom.meta");
    let o = peakvol(&["phantom", "--size", "64", "--out", meta.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_volume(&meta).unwrap().dims(), [64; 3]);

    let outs = ["a.png", "b.png"].map(|n| dir.path().join(n));
    for out in &outs {
        let o = peakvol(&[
            "render",
            "--volume",
            meta.to_str().unwrap(),
            "--tf",
            tf.to_str().unwrap(),
            "--clip",
            "0,0,-1,0",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&outs[0]).unwrap(), std::fs::read(&outs[1]).unwrap());

    let frame = decode_png(&outs[0]);
    for (region, mean, count) in common::region_means(&frame, 64) {
        assert!(count > 100, "{region:?} has {count} pixels");
        assert!(common::dominant(mean, common::expected_channel(region)), "{region:?}: {mean:?}");
    }
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.png");
    let out = out.to_str().unwrap();
    let missing = peakvol(&["render", "--phantom", "16", "--tf", "/nonexistent/tf.json", "--out", out]);
    assert_eq!(code(&missing), exit::INPUT_MISSING);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("tf.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"peaks": [{"center": 0.5, "width": 0, "height": 1, "color": [1,0,0], "enabled": true}], "selected": null}"#).unwrap();
    let invalid = peakvol(&["render", "--phantom", "16", "--tf", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&invalid), exit::INPUT_INVALID);

    let tf = dir.path().join("tf.json");
    std::fs::write(&tf, phantom_material_tf().to_json()).unwrap();
    let unwritable = peakvol(&["render", "--phantom", "16", "--tf", tf.to_str().unwrap(), "--out", "/nonexistent/dir/x.png"]);
    assert_eq!(code(&unwritable), exit::OUTPUT);

    let no_volume = peakvol(&["render", "--volume", "/nonexistent.meta", "--tf", tf.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&no_volume), exit::INPUT_MISSING);

    assert_eq!(code(&peakvol(&["render", "--tf", "x"])), exit::USAGE);
    assert_eq!(code(&peakvol(&["render", "--phantom", "16", "--tf", "x", "--out", out, "--eye", "1,2"])), exit::USAGE);
    assert_eq!(code(&peakvol(&["frobnicate"])), exit::USAGE);
    assert_eq!(code(&peakvol(&["--help"])), exit::OK);
    assert_eq!(code(&peakvol(&["serve", "--phantom", "16", "--frame-cap", "500"])), exit::USAGE);
}

#[test]
fn simulate_records_a_trace_without_sending() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"[{"t": 0, "device": "NavPad"}, {"t": 0.5, "device": "NavPad", "buttons": ["ADD"]}, {"t": 1, "device": "NavPad"}]"#,
    )
    .unwrap();
    let trace = dir.path().join("out.trace");
    let o = peakvol(&[
        "simulate",
        "--script",
        script.to_str().unwrap(),
        "--rate",
        "10",
        "--record",
        trace.to_str().unwrap(),
        "--dry-run",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = peakvol_service::trace::read_trace(&trace).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(peakvol(&["simulate", "--script", "/nonexistent.json"]).status.code(), Some(exit::INPUT_MISSING));
    assert_eq!(
        peakvol(&["simulate", "--script", script.to_str().unwrap(), "--rate", "5000", "--dry-run"]).status.code(),
        Some(exit::USAGE)
    );
}
