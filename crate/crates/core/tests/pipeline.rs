use std::path::{Path, PathBuf};
use std::process::Command;

use copb::config::RunConfig;
use copb::io::{read_jsonl, DayRecord};
use copb::llm::{ChatMessage, FnBackend, LlmError, StepKey};
use copb::model::{validate_sequence, GeoPoint, Persona};
use copb::pipeline::{self, CliError, Run};
use copb::workflow::{AblationFlags, DialogueEntry, LogTag};

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/demo").join(name)
}

fn run_in(out: &Path, jobs: usize, strict: bool) -> Run {
    let cfg = RunConfig::load(&demo("config.json")).unwrap();
    Run::new(Some(cfg), None, jobs, strict, Some(out.to_path_buf()))
}

fn personas(n: usize) -> Vec<Persona> {
    (1..=n)
        .map(|i| Persona {
            id: format!("p{i}"),
            attributes: [("age".to_string(), "30-40".to_string())].into(),
            home: GeoPoint::new(39.87, 116.30 + 0.01 * i as f64).unwrap(),
            home_region: "south".into(),
            work: Some(GeoPoint::new(39.85, 116.33).unwrap()),
        })
        .collect()
}

/// Two-event days whose sleep end encodes the transcript turn, so any drift in turn
/// bookkeeping shows up in the output.
fn policy(_m: &[ChatMessage], key: &StepKey<'_>) -> Result<String, LlmError> {
    Ok(match key.tag {
        "attitude" => "⟨Preference⟩: [quiet mornings]".into(),
        "routine" => "⟨Routine⟩: [office on weekdays]".into(),
        "pbc" => "⟨Perceived likelihood⟩: [sleep:0.8, go home:0.6]".into(),
        "intention" => if key.turn.is_multiple_of(2) { "sleep" } else { "go home" }.into(),
        _ if key.turn.is_multiple_of(2) => format!("(00:00, 07:{:02})", key.turn),
        _ => "(08:00, 23:59)".into(),
    })
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn scripted_demo_day_and_idempotent_resume() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, false);
    let s = pipeline::cmd_generate(&run, &demo("personas.jsonl"), None).unwrap();
    assert_eq!((s.generated, s.failed), (1, 0));
    let recs: Vec<DayRecord> = read_jsonl(&run.path(pipeline::SEQUENCES_FILE)).unwrap();
    let got: Vec<(String, String, String)> =
        recs[0].events.iter().map(|e| (e.start.clone(), e.end.clone(), e.intention.clone())).collect();
    let want = [
        ("00:00", "08:33", "sleep"),
        ("09:47", "17:49", "go to work"),
        ("18:45", "19:49", "eat"),
        ("20:01", "20:35", "do shopping"),
        ("21:40", "23:59", "go home"),
    ];
    assert_eq!(got, want.map(|(a, b, c)| (a.into(), b.into(), c.into())));

    let before = (read(&run.path(pipeline::SEQUENCES_FILE)), read(&run.path(pipeline::DIALOGUES_FILE)));
    let again = pipeline::cmd_generate(&run, &demo("personas.jsonl"), None).unwrap();
    assert_eq!((again.generated, again.resumed, again.backend_calls), (0, 1, 0));
    assert_eq!(
        before,
        (read(&run.path(pipeline::SEQUENCES_FILE)), read(&run.path(pipeline::DIALOGUES_FILE)))
    );
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let full = tempfile::tempdir().unwrap();
    let ps = personas(3);
    let backend = FnBackend(policy);
    let run = run_in(full.path(), 2, false);
    let s = pipeline::generate_with(&run, &ps, 3, &backend).unwrap();
    assert_eq!(s.generated, 9);
    let seqs = read(&run.path(pipeline::SEQUENCES_FILE));
    let logs = read(&run.path(pipeline::DIALOGUES_FILE));

    // Drop p3 entirely and the last two days of p2, as if the run had stopped early.
    let part = tempfile::tempdir().unwrap();
    let keep = |persona: &str, day: u32| persona == "p1" || (persona == "p2" && day == 0);
    let recs: Vec<DayRecord> = read_jsonl(&run.path(pipeline::SEQUENCES_FILE)).unwrap();
    let entries: Vec<DialogueEntry> = read_jsonl(&run.path(pipeline::DIALOGUES_FILE)).unwrap();
    let r: Vec<_> = recs.into_iter().filter(|x| keep(&x.persona_id, x.day)).collect();
    let e: Vec<_> = entries.into_iter().filter(|x| keep(&x.persona_id, x.day)).collect();
    copb::io::write_jsonl(&part.path().join(pipeline::SEQUENCES_FILE), &r).unwrap();
    copb::io::write_jsonl(&part.path().join(pipeline::DIALOGUES_FILE), &e).unwrap();

    let resumed = run_in(part.path(), 1, false);
    let s = pipeline::generate_with(&resumed, &ps, 3, &backend).unwrap();
    assert_eq!((s.generated, s.resumed), (5, 4));
    assert_eq!(seqs, read(&resumed.path(pipeline::SEQUENCES_FILE)));
    assert_eq!(logs, read(&resumed.path(pipeline::DIALOGUES_FILE)));
}

#[test]
fn failures_isolated_unless_strict() {
    let failing = FnBackend(|m: &[ChatMessage], key: &StepKey<'_>| {
        if key.persona_id == "p2" {
            Err(LlmError::Transport { attempts: 4, message: "connection refused".into() })
        } else {
            policy(m, key)
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, false);
    let s = pipeline::generate_with(&run, &personas(3), 2, &failing).unwrap();
    assert_eq!((s.generated, s.failed, s.not_attempted), (4, 1, 1));
    assert_eq!(s.outcome().unwrap_err().exit_code(), 1);
    let failures: Vec<pipeline::FailureRecord> = read_jsonl(&run.path(pipeline::FAILURES_FILE)).unwrap();
    assert_eq!((failures[0].persona_id.as_str(), &failures[0].kind), ("p2", &pipeline::FailureKind::Backend));

    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, true);
    let s = pipeline::generate_with(&run, &personas(3), 2, &failing).unwrap();
    assert!(s.strict_stop);
    assert_eq!((s.generated, s.not_attempted), (2, 3));
    assert_eq!(s.outcome().unwrap_err().exit_code(), 3);
}

#[test]
fn ablation_changes_only_the_ablated_tags() {
    let counts = |flags: AblationFlags| {
        let dir = tempfile::tempdir().unwrap();
        let mut run = run_in(dir.path(), 1, false);
        run.config.as_mut().unwrap().ablation = flags;
        pipeline::generate_with(&run, &personas(2), 2, &FnBackend(policy)).unwrap().logged_exchanges
    };
    let full = counts(AblationFlags::default());
    assert_eq!(full[&LogTag::Attitude], 2);
    assert_eq!(full[&LogTag::Pbc], 8);
    for (flags, dropped) in [
        (AblationFlags::without_attitude(), LogTag::Attitude),
        (AblationFlags::without_norms(), LogTag::Routine),
        (AblationFlags::without_pbc(), LogTag::Pbc),
    ] {
        let mut expect = full.clone();
        expect.remove(&dropped);
        assert_eq!(counts(flags), expect, "{dropped:?}");
    }
}

#[test]
fn map_is_deterministic_token_free_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 4, false);
    pipeline::cmd_generate(&run, &demo("personas.jsonl"), None).unwrap();
    let seqs = run.path(pipeline::SEQUENCES_FILE);
    let s = pipeline::cmd_map(&run, &demo("personas.jsonl"), &seqs, None).unwrap();
    assert_eq!((s.trajectories, s.replicas, s.backend_calls, s.backend_tokens), (20, 20, 0, 0));
    assert_eq!(s.hops_beyond_radius, 0);
    let first = read(&run.path(pipeline::TRAJECTORIES_FILE));
    let s3 = pipeline::cmd_map(&run, &demo("personas.jsonl"), &seqs, Some(3)).unwrap();
    assert_eq!(s3.trajectories, 3);
    pipeline::cmd_map(&run, &demo("personas.jsonl"), &seqs, None).unwrap();
    assert_eq!(first, read(&run.path(pipeline::TRAJECTORIES_FILE)));

    let recs: Vec<DayRecord> = read_jsonl(&run.path(pipeline::TRAJECTORIES_FILE)).unwrap();
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.replica, Some(i as u32));
        validate_sequence(&r.to_sequence().unwrap()).unwrap();
        assert_eq!(r.events[0].poi_id.as_deref(), Some("home:p1"));
        assert_eq!(r.events[1].poi_id.as_deref(), Some("work:p1"));
    }
    let distinct: std::collections::BTreeSet<_> = recs.iter().map(|r| r.events[2].poi_id.clone()).collect();
    assert!(distinct.len() > 1, "replicas should not all pick the same restaurant");
}

#[test]
fn personas_deterministic_and_empty() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = pipeline::cmd_personas(&run_in(a.path(), 1, false), 25).unwrap();
    let pb = pipeline::cmd_personas(&run_in(b.path(), 1, false), 25).unwrap();
    assert_eq!(pa, pb);
    assert!(pa.iter().all(|p| p.work.is_some()));
    let e = pipeline::cmd_personas(&run_in(a.path(), 1, false), 0).unwrap();
    assert!(e.is_empty());
    assert_eq!(std::fs::read_to_string(a.path().join(pipeline::PERSONAS_FILE)).unwrap(), "");
}

#[test]
fn evaluate_writes_report_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, false);
    pipeline::cmd_generate(&run, &demo("personas.jsonl"), None).unwrap();
    pipeline::cmd_map(&run, &demo("personas.jsonl"), &run.path(pipeline::SEQUENCES_FILE), None).unwrap();
    let t = run.path(pipeline::TRAJECTORIES_FILE);
    let inputs = pipeline::EvaluateInputs {
        generated: t.clone(),
        reference: t,
        generated_personas: Some(demo("personas.jsonl")),
        reference_personas: Some(demo("personas.jsonl")),
        cell_size_km: None,
    };
    let r = pipeline::cmd_evaluate(&run, &inputs).unwrap();
    assert_eq!(r.config.itd_err_grouping, "profile_attributes");
    assert_eq!(r.config.grid, run.config.as_ref().unwrap().grid);
    let csv = std::fs::read_to_string(run.path(pipeline::HEATMAP_FILE)).unwrap();
    assert!(csv.starts_with("row,col,gen_freq,ref_freq,diff"));
    let json: serde_json::Value = serde_json::from_slice(&read(&run.path(pipeline::REPORT_FILE))).unwrap();
    assert_eq!(json["metrics"]["odSim"], 0.0);
}

#[test]
fn fit_gravity_histogram_and_shortfall() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, false);
    let mut recs = Vec::new();
    // 150 two-point days with displacements spread over (0.1, 10] km.
    for i in 0..150u32 {
        let d = 0.2 + 9.7 * (i as f64 / 150.0);
        let dlat = (d / copb::model::EARTH_RADIUS_KM).to_degrees();
        let n = if i % 3 == 0 { 3 } else { 2 };
        let mut line = format!(
            r#"{{"persona_id":"p{i}","day":0,"events":[{{"start":"00:00","end":"08:00","intention":"sleep","lat":39.9,"lon":116.4}},{{"start":"09:00","end":"17:00","intention":"go to work","lat":{},"lon":116.4}}"#,
            39.9 + dlat
        );
        if n == 3 {
            line.push_str(r#",{"start":"18:00","end":"23:59","intention":"go home","lat":39.9,"lon":116.4}"#);
        }
        line.push_str("]}\n");
        recs.push(line);
    }
    let path = dir.path().join("seed.jsonl");
    std::fs::write(&path, recs.concat()).unwrap();
    let r = pipeline::cmd_fit_gravity(&run, &path, None, None).unwrap();
    let total: f64 = r.intention_counts.histogram.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!((r.intention_counts.histogram[&3] - 50.0 / 150.0).abs() < 1e-12);
    assert!(run.path(pipeline::COUNTS_FILE).exists());

    std::fs::write(&path, recs[..10].concat()).unwrap();
    let e = pipeline::cmd_fit_gravity(&run, &path, None, None).unwrap_err();
    assert!(matches!(e, CliError::Failed(ref m) if m.contains("at least 100")), "{e}");
}

#[test]
fn build_dataset_from_generated_logs() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_in(dir.path(), 1, false);
    pipeline::generate_with(&run, &personas(4), 2, &FnBackend(policy)).unwrap();
    let m = pipeline::cmd_build_dataset(&run, &[run.path(pipeline::DIALOGUES_FILE)], 3, None).unwrap();
    assert_eq!(m.counts.values().sum::<usize>(), 12);
    let e = pipeline::cmd_build_dataset(&run, &[run.path(pipeline::DIALOGUES_FILE)], 100, None).unwrap_err();
    assert!(e.to_string().contains("tag a"), "{e}");
}

fn copb(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_copb")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = demo("config.json");
    let cfg = cfg.to_str().unwrap();
    let personas = demo("personas.jsonl");
    let personas = personas.to_str().unwrap();

    let ok = copb(&["--config", cfg, "--out", out, "generate", "--personas", personas]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(summary["generated"], 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"backend": {"kind": "scripted", "transcript_path": "x"}, "pois": "nope.csv", "profile_distribution": "nope.json"}"#).unwrap();
    let e = copb(&["--config", bad.to_str().unwrap(), "personas"]);
    assert_eq!(e.status.code(), Some(2));

    // Day 1 has no transcript entries: the backend fails.
    let lenient = copb(&["--config", cfg, "--out", out, "generate", "--personas", personas, "--days", "2"]);
    assert_eq!(lenient.status.code(), Some(1));
    let strict =
        copb(&["--config", cfg, "--out", out, "--strict", "generate", "--personas", personas, "--days", "2"]);
    assert_eq!(strict.status.code(), Some(3));

    let ablated = tempfile::tempdir().unwrap();
    let a = copb(&[
        "--config",
        cfg,
        "--out",
        ablated.path().to_str().unwrap(),
        "generate",
        "--personas",
        personas,
        "--without-pbc",
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(summary["logged_exchanges"].get("c").is_none());
}
