use std::fs;
use std::path::{Path, PathBuf};

use vartrack::config::{ExperimentConfig, FreqTrackerSpec, TrackerSpec};
use vartrack::experiment::{run_experiment, Status};
use vartrack::formats::{
    read_family_jsonl, read_message_log, verify_family, write_family_jsonl, write_message_log,
    FamilyLine, MessageLine,
};
use vartrack::HarnessError;
use vartrack_core::counter::DetTracker;
use vartrack_core::engine::run_simulation;
use vartrack_core::freq::{CountMinSketch, FreqMode};
use vartrack_core::hard_instances::{flip_family, switch_family, FlipFamilySpec, SwitchFamilySpec};
use vartrack_core::stream::{make_generator, StreamKind, StreamSpec};
use vartrack_core::Eps;

fn eps(n: i64, d: i64) -> Eps {
    Eps::new(n, d).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config(
    name: &str,
    kind: StreamKind,
    n: usize,
    k: usize,
    tracker: TrackerSpec,
    e: Eps,
    trials: usize,
) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(name, StreamSpec::new(kind, n, k, 0), tracker, e);
    c.trials = trials;
    c.seed = 11;
    c
}

#[test]
fn deterministic_walk_experiment_passes() {
    let c = config(
        "det-walk",
        StreamKind::UnbiasedWalk,
        10_000,
        4,
        TrackerSpec::Det,
        eps(1, 4),
        10,
    );
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.trials.len(), 10);
    for name in [
        "det_error_guarantee",
        "det_message_bound",
        "playback_fidelity",
        "trace_determinism",
        "broadcast_accounting",
    ] {
        let results: Vec<_> = report.result(name).collect();
        assert_eq!(results.len(), 10, "{name}");
        assert!(results.iter().all(|r| r.status == Status::Pass), "{name}");
    }
    assert!(report
        .trials
        .iter()
        .all(|t| t.failure_rate == 0.0 && t.max_relative_error <= 0.25));
}

#[test]
fn block_variability_reports_measured_and_bound() {
    let c = config(
        "partition",
        StreamKind::Monotone,
        2_000,
        1,
        TrackerSpec::PartitionOnly,
        eps(1, 2),
        1,
    );
    let report = run_experiment(&c).unwrap();
    for name in [
        "block_length_bounds",
        "block_message_bound",
        "block_envelope",
    ] {
        assert!(
            report.result(name).all(|r| r.status == Status::Pass),
            "{name}"
        );
    }
    let r = report.result("block_variability").next().unwrap();
    let o = r.outcome.as_ref().unwrap();
    assert_eq!((o.relation, o.bound.as_str()), (">=", "1/5"));
    assert!(o.detail.as_ref().unwrap().contains("blocks below 1/5"));
    // single-update blocks on a monotone stream sit at 1/f, well under 1/5
    assert_eq!(r.status, Status::Fail);
    assert!(!report.passed);
}

#[test]
fn reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut c = config(
        "rand",
        StreamKind::BiasedWalk { mu: 0.5 },
        3_000,
        4,
        TrackerSpec::Rand,
        eps(1, 4),
        4,
    );
    for d in &dirs {
        c.outputs = Some(d.path().to_path_buf());
        run_experiment(&c).unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
    for f in [
        "trace_0.csv",
        "trace_3.csv",
        "messages_2.jsonl",
        "blocks_1.csv",
        "variability_0.csv",
    ] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
    }
    // report.json embeds the output path; compare everything else
    let strip = |d: &tempfile::TempDir| {
        let mut v: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
        v["config"]["outputs"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&dirs[0]), strip(&dirs[1]));
}

#[test]
fn parallel_and_sequential_agree() {
    let mut c = config(
        "rand",
        StreamKind::UnbiasedWalk,
        2_000,
        2,
        TrackerSpec::Rand,
        eps(1, 2),
        6,
    );
    let par = run_experiment(&c).unwrap();
    c.parallel = false;
    let seq = run_experiment(&c).unwrap();
    assert_eq!(par.trials, seq.trials);
    assert_eq!(par.checks, seq.checks);
}

#[test]
fn trials_use_distinct_seeds() {
    let c = config(
        "walks",
        StreamKind::UnbiasedWalk,
        500,
        1,
        TrackerSpec::Det,
        eps(1, 2),
        3,
    );
    let report = run_experiment(&c).unwrap();
    let seeds: std::collections::HashSet<_> =
        report.trials.iter().map(|t| t.seeds.stream).collect();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn unknown_and_inapplicable_checks_are_rejected() {
    let mut c = config(
        "x",
        StreamKind::Monotone,
        100,
        1,
        TrackerSpec::Det,
        eps(1, 2),
        1,
    );
    c.checks = vec!["no_such_check".into()];
    assert!(matches!(
        run_experiment(&c),
        Err(HarnessError::UnknownCheck(_))
    ));
    c.checks = vec!["single_site_guarantee".into()];
    assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = config(
        "x",
        StreamKind::Monotone,
        100,
        2,
        TrackerSpec::SingleSite,
        eps(1, 2),
        1,
    );
    assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
    c.tracker = TrackerSpec::Det;
    c.trials = 0;
    assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
    let freq = FreqTrackerSpec {
        mode: FreqMode::CrPrecis,
        universe: 16,
        insert_prob: 0.6,
    };
    let c = config(
        "x",
        StreamKind::Monotone,
        100,
        2,
        TrackerSpec::Freq(freq),
        eps(1, 1),
        1,
    );
    assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(
        "det",
        StreamKind::NearlyMonotone { beta: 2.0 },
        1_000,
        2,
        TrackerSpec::Det,
        eps(1, 4),
        2,
    );
    c.outputs = Some(dir.path().join("nested/out"));
    run_experiment(&c).unwrap();
    let out = dir.path().join("nested/out");
    let trace = fs::read_to_string(out.join("trace_1.csv")).unwrap();
    assert!(trace.starts_with("t,f,f_hat,v,messages_cumulative,bits_cumulative,within_bound"));
    assert_eq!(trace.lines().count(), 1_001);
    let blocks = fs::read_to_string(out.join("blocks_0.csv")).unwrap();
    assert!(blocks.starts_with("j,n_j,n_j_next,r,messages,v_j"));
    let v = fs::read_to_string(out.join("variability_0.csv")).unwrap();
    assert!(v.starts_with("t,v_increment,v_cumulative"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let mut c = config(
        "det",
        StreamKind::Monotone,
        100,
        1,
        TrackerSpec::Det,
        eps(1, 2),
        1,
    );
    c.outputs = Some(file.path().join("below-a-file"));
    assert!(matches!(run_experiment(&c), Err(HarnessError::Io { .. })));
}

#[test]
fn frequency_experiment_runs() {
    let freq = FreqTrackerSpec {
        mode: FreqMode::ExactCounters,
        universe: 8,
        insert_prob: 0.6,
    };
    let c = config(
        "freq",
        StreamKind::Monotone,
        200,
        3,
        TrackerSpec::Freq(freq),
        eps(1, 4),
        5,
    );
    let report = run_experiment(&c).unwrap();
    assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
    assert!(report
        .result("freq_error_guarantee")
        .all(|r| r.status == Status::Pass));
}

#[test]
fn single_site_experiment_runs() {
    let c = config(
        "single",
        StreamKind::UnbiasedWalk,
        5_000,
        1,
        TrackerSpec::SingleSite,
        eps(1, 10),
        3,
    );
    let report = run_experiment(&c).unwrap();
    assert!(report.passed);
    assert!(report
        .result("single_site_message_bound")
        .all(|r| r.status == Status::Pass));
}

#[test]
fn config_fixture_resolves_its_replay_file() {
    let c = ExperimentConfig::load(&fixtures().join("configs/det_zero_crossing.json")).unwrap();
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.trials[0].timesteps, 3_000);
    assert!(report.passed);
    assert_eq!(report.checks.len(), 4);
}

#[test]
fn message_log_round_trips() {
    let stream = make_generator(&StreamSpec::new(StreamKind::UnbiasedWalk, 2_000, 4, 5)).unwrap();
    let trace = run_simulation(&DetTracker { eps: eps(1, 4) }, &stream).unwrap();
    let mut buf = Vec::new();
    write_message_log(&mut buf, &trace.log).unwrap();
    let lines = read_message_log(buf.as_slice()).unwrap();
    let expected: Vec<MessageLine> = trace.log.iter().map(MessageLine::from).collect();
    assert_eq!(lines, expected);
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), trace.log.len());
}

#[test]
fn flip_family_file_verifies() {
    let fam = flip_family(&FlipFamilySpec { m: 2, n: 8, r: 2 }, 28).unwrap();
    let mut buf = Vec::new();
    write_family_jsonl(&mut buf, &fam).unwrap();
    let mut lines = read_family_jsonl(buf.as_slice()).unwrap();
    let verdict = verify_family(&lines, None).unwrap();
    assert!(verdict.ok());
    assert_eq!(verdict.sequences, 28);

    lines[3].variability = "1/1".into();
    // same r, so line 5 stays self-consistent and only duplicates line 4
    lines[5].switches = lines[4].switches.clone();
    let verdict = verify_family(&lines, None).unwrap();
    assert_eq!(verdict.variability_mismatches, vec![3]);
    assert_eq!(verdict.duplicate_pairs, vec![(4, 5)]);
    assert!(!verdict.ok());
}

#[test]
fn switch_family_file_keeps_start_values() {
    let spec = SwitchFamilySpec {
        eps: eps(1, 4),
        v: 24.into(),
        n: 400,
        count: 20,
        seed: 9,
        p_override: None,
    };
    let fam = switch_family(&spec).unwrap();
    assert!(
        fam.sequences.iter().any(|s| s.values[0] != s.m),
        "expect some sequences to start at m + 3"
    );
    let mut buf = Vec::new();
    write_family_jsonl(&mut buf, &fam.sequences).unwrap();
    let lines = read_family_jsonl(buf.as_slice()).unwrap();
    for (line, seq) in lines.iter().zip(&fam.sequences) {
        assert_eq!(line.to_sequence().unwrap(), *seq);
    }
    let verdict = verify_family(&lines, Some(eps(1, 4))).unwrap();
    assert!(verdict.variability_mismatches.is_empty());
    assert!(verdict.match_rate.unwrap() < 0.5);

    // lines without f0 default to a start at m
    let legacy: FamilyLine = serde_json::from_str(r#"{"index":0,"m":2,"n":8,"switches":[1,2],"variability":"21/10","clamped_variability":"8/5"}"#).unwrap();
    assert_eq!(legacy.to_sequence().unwrap().values[..3], [2, 5, 2]);
}

#[derive(serde::Deserialize)]
struct SketchFixture {
    sketch: CountMinSketch,
    updates: Vec<(u64, i8)>,
    true_counts: Vec<i64>,
    queries: std::collections::BTreeMap<String, i64>,
}

#[test]
fn count_min_matches_reference_fixture() {
    let text = fs::read_to_string(fixtures().join("sketches/cms_u100_w108.json")).unwrap();
    let fx: SketchFixture = serde_json::from_str(&text).unwrap();
    let s = &fx.sketch;
    let mut cms = CountMinSketch::with_hash(s.universe, s.width, s.a, s.b, s.prime).unwrap();
    for &(item, sign) in &fx.updates {
        cms.update(item, sign).unwrap();
    }
    assert_eq!(cms, fx.sketch);
    for (item, &expected) in &fx.queries {
        let item: u64 = item.parse().unwrap();
        assert_eq!(cms.query(item).unwrap(), expected);
        // one row never underestimates a non-negative workload
        assert!(expected >= fx.true_counts[item as usize]);
    }
    let round: CountMinSketch =
        serde_json::from_str(&serde_json::to_string(&cms).unwrap()).unwrap();
    assert_eq!(round, cms);
}
