mod common;

use common::rng;
use engagement::mindstate::{StateKind, StateOfMind};
use engagement::report::{
    aggregate, agreement_rate, emit_report, parse_feedback, parse_timeline_document, FeedbackRecord, ReportFormat,
    SessionReport, SessionTimeline,
};
use engagement::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const LABELS: [&str; 6] = ["confusion", "satisfaction", "disappointment", "frustration", "neutral", "joy"];

fn timeline(labels: &[&str]) -> SessionTimeline {
    SessionTimeline {
        session: "lecture-1".into(),
        states: labels
            .iter()
            .enumerate()
            .map(|(i, l)| StateOfMind {
                label: l.to_string(),
                score: 0.5,
                start: 6.0 * i as f64,
                kind: if LABELS[..4].contains(l) { StateKind::Complex } else { StateKind::FallbackBasic },
            })
            .collect(),
        residual_frames: 1,
        dropped_frames: 0,
        source: Some("session.jsonl".into()),
    }
}

fn record(candidate: usize, agree: Option<bool>, intervals: Option<Vec<bool>>) -> FeedbackRecord {
    FeedbackRecord { session: "lecture-1".into(), candidate: format!("c{candidate}"), agree, intervals, note: None }
}

fn report_of(n: usize) -> SessionReport {
    aggregate(&timeline(&vec!["satisfaction"; n]))
}

#[test]
fn random_timeline_matches_tally() {
    let mut r = rng(77);
    let labels: Vec<&str> = (0..100).map(|_| LABELS[r.random_range(0..LABELS.len())]).collect();
    let report = aggregate(&timeline(&labels));

    let mut tally = [0usize; LABELS.len()];
    for l in &labels {
        tally[LABELS.iter().position(|x| x == l).unwrap()] += 1;
    }
    let total: usize = report.counts.iter().map(|c| c.count).sum();
    assert_eq!(total, 100);
    for c in &report.counts {
        let k = LABELS.iter().position(|x| *x == c.label).unwrap();
        assert_eq!(c.count, tally[k]);
        assert_eq!(c.proportion, tally[k] as f64 / 100.0);
    }
    assert_eq!(report.counts.len(), tally.iter().filter(|&&n| n > 0).count());
    let max = *tally.iter().max().unwrap();
    let first_max = labels.iter().find(|l| tally[LABELS.iter().position(|x| x == *l).unwrap()] == max).unwrap();
    assert_eq!(report.dominant.as_deref(), Some(*first_max));
    assert!((report.counts.iter().map(|c| c.proportion).sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn empty_timeline_is_flagged() {
    let report = aggregate(&timeline(&[]));
    assert!(report.empty);
    assert!(report.dominant.is_none());
    assert!(!report.warnings.is_empty());
}

#[test]
fn cohort_agreement() {
    let report = report_of(5);
    let fb: Vec<FeedbackRecord> = (0..40).map(|i| record(i, Some(i < 30), None)).collect();
    assert_eq!(agreement_rate(&report, &fb).unwrap(), 0.75);
    let all: Vec<FeedbackRecord> = (0..40).map(|i| record(i, Some(true), None)).collect();
    assert_eq!(agreement_rate(&report, &all).unwrap(), 1.0);
}

#[test]
fn mixed_interval_flags_match_flat_count() {
    let mut r = rng(3);
    let report = report_of(8);
    let fb: Vec<FeedbackRecord> = (0..25)
        .map(|i| {
            if r.random_bool(0.3) {
                record(i, Some(r.random_bool(0.5)), None)
            } else {
                let n = r.random_range(1..=8);
                record(i, None, Some((0..n).map(|_| r.random_bool(0.6)).collect()))
            }
        })
        .collect();
    let flat: Vec<bool> = fb.iter().flat_map(|f| f.intervals.clone().unwrap_or_else(|| vec![f.agree.unwrap()])).collect();
    let want = flat.iter().filter(|&&b| b).count() as f64 / flat.len() as f64;
    assert_eq!(agreement_rate(&report, &fb).unwrap(), want);
}

#[test]
fn agreement_errors() {
    let report = report_of(3);
    assert!(matches!(agreement_rate(&report, &[]), Err(Error::Data(_))));
    let mut other = record(0, Some(true), None);
    other.session = "lecture-2".into();
    assert!(matches!(agreement_rate(&report, &[other]), Err(Error::Usage(_))));
    let too_many = record(0, None, Some(vec![true; 4]));
    assert!(matches!(agreement_rate(&report, &[too_many]), Err(Error::Data(_))));
}

#[test]
fn feedback_lines_report_their_position() {
    let text = "{\"session\":\"lecture-1\",\"candidate\":\"a\",\"agree\":true}\n\n{\"session\":\"lecture-1\"}\n";
    let err = parse_feedback(text).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn csv_has_one_row_per_window() {
    let csv = emit_report(&aggregate(&timeline(&["satisfaction", "neutral", "confusion"])), ReportFormat::Csv);
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rows.headers().unwrap(), vec!["start_time", "label", "score", "kind"]);
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 3);
    assert_eq!(&records[1][3], "fallback-basic");
    assert_eq!(&records[2][0], "12");
}

#[test]
fn json_round_trip_is_lossless() {
    let mut report = aggregate(&timeline(&["satisfaction", "satisfaction", "confusion"]));
    report.agreement_rate = Some(0.5);
    let text = emit_report(&report, ReportFormat::Json);
    let back: SessionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(parse_timeline_document(&text).unwrap(), report.timeline);
    let bare = serde_json::to_string(&report.timeline).unwrap();
    assert_eq!(parse_timeline_document(&bare).unwrap(), report.timeline);
}

proptest! {
    #[test]
    fn agreement_ignores_record_order(flags in prop::collection::vec((any::<bool>(), prop::option::of(prop::collection::vec(any::<bool>(), 1..6))), 1..30), seed in any::<u64>()) {
        let report = report_of(6);
        let mut fb: Vec<FeedbackRecord> = flags.into_iter().enumerate().map(|(i, (a, iv))| record(i, Some(a), iv)).collect();
        let before = agreement_rate(&report, &fb).unwrap();
        fb.shuffle(&mut rng(seed));
        prop_assert_eq!(agreement_rate(&report, &fb).unwrap(), before);
    }

    #[test]
    fn aggregate_conserves_count(picks in prop::collection::vec(0usize..LABELS.len(), 0..60)) {
        let labels: Vec<&str> = picks.iter().map(|&i| LABELS[i]).collect();
        let report = aggregate(&timeline(&labels));
        prop_assert_eq!(report.counts.iter().map(|c| c.count).sum::<usize>(), labels.len());
        if !labels.is_empty() {
            prop_assert!((report.counts.iter().map(|c| c.proportion).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
