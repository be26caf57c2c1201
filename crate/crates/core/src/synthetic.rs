//! Seeded synthetic corpora with planted cross-topic links.
//!
//! Every record reads `Due to <cause>, <effect>.` (or a leading-clue
//! variant) with random pseudo-word expressions. A planted link is a pair of
//! records in different topics, the earlier one's effect text equal to the
//! later one's cause text. Random expressions share almost no character
//! 3-grams, so under the builtin provider only planted links clear the
//! default threshold.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{DiKind, DiSeries};
use crate::corpus::{Condition, SurveyRecord, TopicVocabulary};
use crate::month::{Month, MonthRange, MonthSeries};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub vocabulary: TopicVocabulary,
    pub start: Month,
    pub months: u32,
    pub records: usize,
    pub planted: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 20_240_101,
            vocabulary: TopicVocabulary::default_thirteen(),
            start: Month::new(2021, 1).expect("valid month"),
            months: 24,
            records: 400,
            planted: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedLink {
    pub front_record: u64,
    pub rear_record: u64,
    pub front_topic: String,
    pub rear_topic: String,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<SurveyRecord>,
    pub planted: Vec<PlantedLink>,
    pub di: [DiSeries; 3],
    pub range: MonthRange,
}

struct Draft {
    date: NaiveDate,
    topic: String,
    text: String,
    plant: Option<(usize, bool)>,
}

fn word(rng: &mut ChaCha8Rng) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    let len = rng.gen_range(3..=8);
    (0..len)
        .map(|_| LETTERS[rng.gen_range(0..LETTERS.len())] as char)
        .collect()
}

fn phrase(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let n = rng.gen_range(4..=6);
        let p = (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ");
        if used.insert(p.clone()) {
            return p;
        }
    }
}

fn causal_text(cause: &str, effect: &str) -> String {
    format!("Due to {cause}, {effect}.")
}

fn conditions() -> [Option<Condition>; 6] {
    [
        None,
        Some(Condition::MuchBetter),
        Some(Condition::Better),
        Some(Condition::Unchanged),
        Some(Condition::Worse),
        Some(Condition::MuchWorse),
    ]
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    assert!(spec.vocabulary.len() >= 2, "need at least two topics");
    assert!(spec.months >= 1);
    assert!(
        spec.records >= 2 * spec.planted,
        "too few records for the planted links"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut used = HashSet::new();
    let first_day = spec.start.first_day();
    let last = (1..spec.months).fold(spec.start, |m, _| m.succ());
    let span_days = (last.succ().first_day() - first_day).num_days();
    assert!(span_days >= 2);
    let topics = spec.vocabulary.topics();

    let mut drafts = Vec::with_capacity(spec.records);
    for link in 0..spec.planted {
        let front_topic = topics.choose(&mut rng).expect("non-empty").clone();
        let rear_topic = loop {
            let t = topics.choose(&mut rng).expect("non-empty");
            if *t != front_topic {
                break t.clone();
            }
        };
        let d1 = rng.gen_range(0..span_days - 1);
        let d2 = rng.gen_range(d1 + 1..span_days);
        let shared = phrase(&mut rng, &mut used);
        let front_text = causal_text(&phrase(&mut rng, &mut used), &shared);
        let rear_text = causal_text(&shared, &phrase(&mut rng, &mut used));
        drafts.push(Draft {
            date: first_day + Duration::days(d1),
            topic: front_topic,
            text: front_text,
            plant: Some((link, true)),
        });
        drafts.push(Draft {
            date: first_day + Duration::days(d2),
            topic: rear_topic,
            text: rear_text,
            plant: Some((link, false)),
        });
    }
    while drafts.len() < spec.records {
        let topic = topics.choose(&mut rng).expect("non-empty").clone();
        let date = first_day + Duration::days(rng.gen_range(0..span_days));
        let text = match rng.gen_range(0..10) {
            0 => format!("{}.", phrase(&mut rng, &mut used)),
            1 => format!(
                "{}. For this reason, {}.",
                phrase(&mut rng, &mut used),
                phrase(&mut rng, &mut used)
            ),
            _ => causal_text(&phrase(&mut rng, &mut used), &phrase(&mut rng, &mut used)),
        };
        drafts.push(Draft {
            date,
            topic,
            text,
            plant: None,
        });
    }
    drafts.shuffle(&mut rng);
    drafts.sort_by_key(|d| d.date);

    let marks = conditions();
    let mut records = Vec::with_capacity(drafts.len());
    let mut fronts = vec![0u64; spec.planted];
    let mut rears = vec![0u64; spec.planted];
    for (i, d) in drafts.iter().enumerate() {
        let id = i as u64 + 1;
        if let Some((link, is_front)) = d.plant {
            if is_front {
                fronts[link] = id;
            } else {
                rears[link] = id;
            }
        }
        records.push(SurveyRecord {
            id,
            date: d.date,
            topic: d.topic.clone(),
            condition: *marks.choose(&mut rng).expect("non-empty"),
            text: d.text.clone(),
        });
    }
    let mut planted: Vec<PlantedLink> = (0..spec.planted)
        .map(|link| {
            let (f, r) = (fronts[link], rears[link]);
            let front = &records[f as usize - 1];
            let rear = &records[r as usize - 1];
            let text = front
                .text
                .split_once(", ")
                .map(|(_, e)| e.trim_end_matches('.').to_string())
                .expect("planted text shape");
            PlantedLink {
                front_record: f,
                rear_record: r,
                front_topic: front.topic.clone(),
                rear_topic: rear.topic.clone(),
                text,
            }
        })
        .collect();
    planted.sort_by_key(|p| (p.rear_record, p.front_record));

    let range = MonthRange::new(spec.start, last);
    let di = synthetic_di(&mut rng, range);
    SyntheticCorpus {
        records,
        planted,
        di,
        range,
    }
}

/// Integer-valued DI series with a slow cycle plus noise, clamped to [0, 100].
fn synthetic_di(rng: &mut ChaCha8Rng, range: MonthRange) -> [DiSeries; 3] {
    let kinds = [DiKind::Leading, DiKind::Coincident, DiKind::Lagging];
    let months = range.months();
    kinds.map(|kind| {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let values: MonthSeries = months
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let cycle = 30.0 * (i as f64 / 6.0 + phase).sin();
                let noise: f64 = rng.gen_range(-12.0..12.0);
                (m, (50.0 + cycle + noise).round().clamp(0.0, 100.0))
            })
            .collect();
        DiSeries { kind, values }
    })
}

/// DI table in the `month,leading,coincident,lagging` format.
pub fn write_di<W: std::io::Write>(di: &[DiSeries; 3], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(crate::analytics::DI_HEADER)?;
    for (m, lead) in &di[0].values {
        w.write_record([
            m.to_string(),
            lead.to_string(),
            di[1].values[m].to_string(),
            di[2].values[m].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_planted<W: std::io::Write>(planted: &[PlantedLink], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "front_record",
        "rear_record",
        "front_topic",
        "rear_topic",
        "text",
    ])?;
    for p in planted {
        w.write_record([
            p.front_record.to_string().as_str(),
            &p.rear_record.to_string(),
            &p.front_topic,
            &p.rear_topic,
            &p.text,
        ])?;
    }
    w.flush()?;
    Ok(())
}
