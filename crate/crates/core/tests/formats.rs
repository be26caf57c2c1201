use std::path::{Path, PathBuf};

use narrative_core::analytics::{load_di, AnalyticsError, CorrelationMatrix, DiKind, PearsonError};
use narrative_core::chain::{read_chains, write_chains, CausalChain};
use narrative_core::corpus::{
    load_corpus, write_corpus, CorpusError, IngestMode, TopicPair, TopicVocabulary,
};
use narrative_core::extraction::{extract_all, read_pairs, write_pairs, ClueTable};
use narrative_core::index::{read_indices, write_indices, MonthlyIndexSeries};
use narrative_core::month::{Month, MonthSeries};
use narrative_core::report::heatmap_svg;
use narrative_core::synthetic::{generate, write_di, write_planted, SyntheticSpec};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/synthetic")
        .join(name)
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bundled_data_matches_generator() {
    let spec = SyntheticSpec::default();
    let corpus = generate(&spec);
    let mut buf = Vec::new();
    write_corpus(&corpus.records, &mut buf).unwrap();
    assert_eq!(
        buf,
        std::fs::read(bundled("corpus.csv")).unwrap(),
        "regenerate with the gen_synthetic example"
    );
    buf.clear();
    write_di(&corpus.di, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(bundled("di.csv")).unwrap());
    buf.clear();
    write_planted(&corpus.planted, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(bundled("planted.csv")).unwrap());
    let topics = TopicVocabulary::load(&bundled("topics.txt")).unwrap();
    assert_eq!(topics, TopicVocabulary::default_thirteen());
}

#[test]
fn corpus_loads_deterministically() {
    let vocab = TopicVocabulary::default_thirteen();
    let a = load_corpus(&bundled("corpus.csv"), &vocab, IngestMode::Strict).unwrap();
    let b = load_corpus(&bundled("corpus.csv"), &vocab, IngestMode::Strict).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.records.len(), 400);
    assert!(a
        .records
        .iter()
        .enumerate()
        .all(|(i, r)| r.id == i as u64 + 1));
    assert_eq!(a.records, generate(&SyntheticSpec::default()).records);
}

#[test]
fn corpus_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = TopicVocabulary::default_thirteen();
    let head = "date,topic,condition,text\n";
    let good = "2020-01-05,Number of Visitors,○,Visitors increased.\n";

    let p = write(
        dir.path(),
        "unknown.csv",
        &format!("{head}{good}2020-01-06,Weather,□,Rain.\n"),
    );
    match load_corpus(&p, &vocab, IngestMode::Strict).unwrap_err() {
        CorpusError::UnknownTopic { line, topic, .. } => {
            assert_eq!((line, topic.as_str()), (3, "Weather"))
        }
        e => panic!("{e}"),
    }
    let lenient = load_corpus(&p, &vocab, IngestMode::Lenient).unwrap();
    assert_eq!(lenient.records.len(), 1);
    assert_eq!(lenient.skipped, 1);

    let p = write(
        dir.path(),
        "date.csv",
        &format!("{head}2020-13-01,Number of Visitors,○,x\n"),
    );
    assert!(matches!(
        load_corpus(&p, &vocab, IngestMode::Strict),
        Err(CorpusError::InvalidDate { line: 2, .. })
    ));

    let p = write(
        dir.path(),
        "mark.csv",
        &format!("{head}2020-01-01,Number of Visitors,!,x\n"),
    );
    assert!(matches!(
        load_corpus(&p, &vocab, IngestMode::Strict),
        Err(CorpusError::InvalidCondition { .. })
    ));

    let p = write(
        dir.path(),
        "empty.csv",
        &format!("{head}2020-01-01,Number of Visitors,○,  \n"),
    );
    assert!(matches!(
        load_corpus(&p, &vocab, IngestMode::Strict),
        Err(CorpusError::EmptyText { .. })
    ));

    let p = write(
        dir.path(),
        "cols.csv",
        &format!("{head}2020-01-01,Number of Visitors,○\n"),
    );
    assert!(matches!(
        load_corpus(&p, &vocab, IngestMode::Strict),
        Err(CorpusError::ColumnCount { found: 3, .. })
    ));

    let p = write(dir.path(), "header.csv", "when,topic,condition,text\n");
    assert!(matches!(
        load_corpus(&p, &vocab, IngestMode::Strict),
        Err(CorpusError::Header { .. })
    ));

    assert!(matches!(
        load_corpus(&dir.path().join("absent.csv"), &vocab, IngestMode::Strict),
        Err(CorpusError::Io { .. })
    ));
}

#[test]
fn pairs_and_chains_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&SyntheticSpec::default());
    let pairs = extract_all(&corpus.records, &ClueTable::english());
    let p = dir.path().join("pairs.csv");
    write_pairs(&pairs, std::fs::File::create(&p).unwrap()).unwrap();
    assert_eq!(read_pairs(&p).unwrap(), pairs);

    let chains = vec![CausalChain {
        front: 3,
        rear: 17,
        front_topic: "Customer Behavior".into(),
        rear_topic: "Number of Visitors".into(),
        front_date: chrono::NaiveDate::from_ymd_opt(2021, 2, 3).unwrap(),
        rear_date: chrono::NaiveDate::from_ymd_opt(2021, 5, 9).unwrap(),
        lag_days: 95,
        similarity: 0.1 + 0.2 + 0.6,
    }];
    let c = dir.path().join("chains.csv");
    write_chains(&chains, std::fs::File::create(&c).unwrap()).unwrap();
    assert_eq!(read_chains(&c).unwrap(), chains);
}

#[test]
fn indices_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let months: Vec<Month> =
        Month::range_inclusive(Month::new(2020, 11).unwrap(), Month::new(2021, 3).unwrap());
    let series: Vec<MonthlyIndexSeries> = [("A", "B"), ("B", "A")]
        .iter()
        .enumerate()
        .map(|(k, (f, r))| MonthlyIndexSeries {
            topic_pair: TopicPair::new(*f, *r),
            values: months
                .iter()
                .enumerate()
                .map(|(i, m)| (*m, (i + k) as f64 / 3.0))
                .collect(),
        })
        .collect();
    let p = dir.path().join("indices.csv");
    write_indices(&series, std::fs::File::create(&p).unwrap()).unwrap();
    assert_eq!(read_indices(&p).unwrap(), series);
}

fn thirteen_matrix() -> CorrelationMatrix {
    let vocab = TopicVocabulary::default_thirteen();
    let cells = vocab
        .ordered_pairs()
        .into_iter()
        .enumerate()
        .map(|(i, tp)| {
            let v = if i % 40 == 7 {
                Err(PearsonError::ZeroVariance)
            } else {
                Ok((i as f64 / 77.0).sin())
            };
            (tp, v)
        })
        .collect();
    CorrelationMatrix {
        di_kind: DiKind::CumulativeLagging,
        topics: vocab.topics().to_vec(),
        cells,
    }
}

#[test]
fn correlation_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = thirteen_matrix();
    let p = dir.path().join("correlation.csv");
    m.write_csv(std::fs::File::create(&p).unwrap()).unwrap();
    let back = CorrelationMatrix::read_csv(&p, DiKind::CumulativeLagging).unwrap();
    assert_eq!(back.topics, m.topics);
    assert_eq!(back.defined_cells(), m.defined_cells());
    assert_eq!(back.cells.len(), 156);
}

#[test]
fn heatmap_annotates_every_defined_cell() {
    let m = thirteen_matrix();
    let svg = heatmap_svg(&m).unwrap();
    let defined = m.defined_cells().len();
    assert_eq!(defined, 152);
    let annotations = svg
        .lines()
        .filter(|l| l.contains("font-size=\"12\""))
        .filter(|l| l.contains("<text"))
        .count();
    assert_eq!(annotations, defined);
    assert_eq!(svg.matches("fill=\"#e6e6e6\"").count(), 4);
    assert!(svg.contains("Cumulative Lagging"), "title names the DI");
    assert!(!svg.contains(">-0.00<"));
    for tp in m.topics.iter() {
        assert!(svg.contains(&tp.replace('&', "&amp;")));
    }
}

#[test]
fn di_gaps_and_ranges_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let gap = write(
        dir.path(),
        "gap.csv",
        "month,leading,coincident,lagging\n2020-01,50,50,50\n2020-03,50,50,50\n",
    );
    match load_di(&gap).unwrap_err() {
        AnalyticsError::Gap { missing, .. } => assert_eq!(missing, Month::new(2020, 2).unwrap()),
        e => panic!("{e}"),
    }
    let range = write(
        dir.path(),
        "range.csv",
        "month,leading,coincident,lagging\n2020-01,50,101,50\n",
    );
    assert!(matches!(
        load_di(&range).unwrap_err(),
        AnalyticsError::Range {
            kind: DiKind::Coincident,
            ..
        }
    ));

    let ok = load_di(&bundled("di.csv")).unwrap();
    let months: Vec<&MonthSeries> = ok.iter().map(|s| &s.values).collect();
    assert_eq!(months[0].len(), 24);
    assert!(months.iter().all(|m| m.keys().eq(months[0].keys())));
}
