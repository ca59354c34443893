mod common;

use std::fs;

use changeseg::filtering::Verdict;
use changeseg::pipeline::synth::{self, write_scene};
use changeseg::pipeline::{
    load_person_boxes, load_scene, segment, write_result, Config, PipelineError, SceneManifest, SEGMENTS_HEADER,
};

fn small_scene(dir: &std::path::Path) -> synth::WrittenScene {
    let spec = common::box_on_table(3, 160, 120);
    write_scene(&synth::render(&spec).unwrap(), dir).unwrap()
}

#[test]
fn written_scene_loads_back_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = common::box_on_table(3, 160, 120);
    let scene = synth::render(&spec).unwrap();
    let written = write_scene(&scene, tmp.path()).unwrap();
    let cfg = Config::default();
    let loaded = load_scene(&written.scene_a, &cfg.normals).unwrap();
    assert_eq!(loaded.label.as_deref(), Some("A"));
    let direct = scene.frames_a(&cfg.normals).unwrap();
    assert_eq!(loaded.frames.len(), direct.len());
    for (l, d) in loaded.frames.iter().zip(&direct) {
        assert_eq!(l.depth(), d.depth());
        assert_eq!(l.color(), d.color());
        assert_eq!(l.intrinsics(), d.intrinsics());
        let dr = (l.pose().rotation() - d.pose().rotation()).abs().max();
        assert!(dr < 1e-12, "{dr}");
    }
}

#[test]
fn end_to_end_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let written = small_scene(&tmp.path().join("scene"));
    let cfg = Config::default();
    let a = load_scene(&written.scene_a, &cfg.normals).unwrap();
    let b = load_scene(&written.scene_b, &cfg.normals).unwrap();
    let r = segment(&a.frames, &b.frames, &[], &cfg).unwrap();
    assert_eq!(r.accepted().count(), 1);

    let out = tmp.path().join("out");
    write_result(&out, &a.frames, &r, true, true).unwrap();
    let table = fs::read_to_string(out.join("segments.txt")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some(SEGMENTS_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), r.records.len());
    for (row, rec) in rows.iter().zip(&r.records) {
        assert_eq!(row.len(), 9);
        assert_eq!(row[0].parse::<u32>().unwrap(), rec.id);
        assert_eq!(row[1].parse::<Verdict>().unwrap(), rec.verdict);
        assert_eq!(row[4].parse::<usize>().unwrap(), rec.pixels);
    }

    // Mask pixels count each segment's members exactly once.
    let mut counts = vec![0usize; r.records.len() + 1];
    for i in 0..a.frames.len() {
        let img = image::open(out.join(format!("mask_{i:03}.png"))).unwrap();
        let img = img.as_luma16().expect("16-bit mask");
        for p in img.pixels() {
            counts[p.0[0] as usize] += 1;
        }
    }
    for rec in &r.records {
        assert_eq!(counts[rec.id as usize], rec.pixels);
    }

    let ply = fs::read(out.join("cloud.ply")).unwrap();
    let header_end = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    let header = std::str::from_utf8(&ply[..header_end]).unwrap();
    assert!(header.starts_with("ply\nformat binary_little_endian 1.0\n"));
    let count: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    let with_depth: usize = a
        .frames
        .iter()
        .map(|f| f.depth().as_slice().iter().filter(|&&z| z > 0.0).count())
        .sum();
    assert_eq!(count, with_depth);
    assert_eq!(ply.len() - header_end, count * 15);

    for name in ["edges", "p_s", "p_o", "prior", "moving", "labels"] {
        assert!(out.join("debug").join(format!("{name}_000.png")).exists(), "{name}");
    }
}

#[test]
fn person_box_over_object_rejects_it() {
    let tmp = tempfile::tempdir().unwrap();
    let written = small_scene(tmp.path());
    let cfg = Config::default();
    let a = load_scene(&written.scene_a, &cfg.normals).unwrap();
    let b = load_scene(&written.scene_b, &cfg.normals).unwrap();
    let plain = segment(&a.frames, &b.frames, &[], &cfg).unwrap();
    let (seg, _) = plain.accepted().next().unwrap();
    let m = seg.members[seg.members.len() / 2];
    let persons = tmp.path().join("persons.txt");
    fs::write(
        &persons,
        format!("# frame x0 y0 x1 y1 confidence\n{} {} {} {} {} 0.9\n", m.frame, m.pixel.x, m.pixel.y, m.pixel.x, m.pixel.y),
    )
    .unwrap();
    let boxes = load_person_boxes(&persons, &a.frame_sizes()).unwrap();
    let r = segment(&a.frames, &b.frames, &boxes, &cfg).unwrap();
    assert_eq!(r.accepted().count(), 0);
    assert!(r.records.iter().any(|x| x.verdict == Verdict::RejectedPerson));

    // Disabling the filter accepts everything, people included.
    let mut open = cfg.clone();
    open.filtering.enabled = false;
    let r = segment(&a.frames, &b.frames, &boxes, &open).unwrap();
    assert!(r.records.iter().all(|x| x.verdict == Verdict::Accepted));
}

#[test]
fn persons_outside_the_frame_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("persons.txt");
    fs::write(&p, "0 0 0 160 10 0.5\n").unwrap();
    let err = load_person_boxes(&p, &[(160, 120)]).unwrap_err();
    assert!(matches!(err, PipelineError::Persons { .. }), "{err}");
    assert!(err.to_string().contains("persons.txt"));
}

#[test]
fn empty_background_is_a_usage_error() {
    let spec = common::box_on_table(3, 80, 60);
    let scene = synth::render(&spec).unwrap();
    let a = scene.frames_a(&Config::default().normals).unwrap();
    let err = segment(&a, &[], &[], &Config::default()).unwrap_err();
    assert!(err.is_usage());
}

#[test]
fn load_errors_name_the_offending_file() {
    let tmp = tempfile::tempdir().unwrap();
    let written = small_scene(tmp.path());
    let normals = Config::default().normals;
    let text = fs::read_to_string(&written.scene_a).unwrap();
    let mut manifest: SceneManifest = toml::from_str(&text).unwrap();

    // Skewed rotation.
    let mut bad = manifest.clone();
    bad.frames[1].rotation[1] += 0.01;
    let path = tmp.path().join("skewed.toml");
    fs::write(&path, toml::to_string(&bad).unwrap()).unwrap();
    let err = load_scene(&path, &normals).unwrap_err().to_string();
    assert!(err.contains("skewed.toml") && err.contains("frame 1") && err.contains("orthonormal"), "{err}");

    // Missing image.
    manifest.frames[0].depth = "nowhere.png".into();
    let path = tmp.path().join("missing.toml");
    fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
    let err = load_scene(&path, &normals).unwrap_err().to_string();
    assert!(err.contains("nowhere.png"), "{err}");

    // 8-bit depth.
    manifest.frames[0].depth = "color_a_000.png".into();
    fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
    let err = load_scene(&path, &normals).unwrap_err().to_string();
    assert!(err.contains("color_a_000.png") && err.contains("16-bit"), "{err}");

    // Unknown key.
    let path = tmp.path().join("typo.toml");
    fs::write(&path, text.replacen("[[frame]]", "[[frames]]", 1)).unwrap();
    let err = load_scene(&path, &normals).unwrap_err().to_string();
    assert!(err.contains("typo.toml"), "{err}");
}

#[test]
fn single_current_frame_runs_without_moving_evidence() {
    let mut spec = common::box_on_table(4, 160, 120);
    spec.views.remove(0);
    spec.views.remove(1);
    let scene = synth::render(&spec).unwrap();
    assert_eq!(scene.a.len(), 1);
    let cfg = Config::default();
    let a = scene.frames_a(&cfg.normals).unwrap();
    let b = scene.frames_b(&cfg.normals).unwrap();
    let r = segment(&a, &b, &[], &cfg).unwrap();
    assert!(r.debug.moving[0].as_slice().iter().all(|&m| m == 0.0));
    assert_eq!(r.constraints_total, 0);
    assert!(r.records.iter().all(|x| x.scores.junk == 0.0));
    assert_eq!(r.accepted().count(), 1);
}
