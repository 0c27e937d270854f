//! Seeded random cases and agreement checks against the reference
//! semantics. Each check returns a [`Report`] instead of panicking so that
//! callers can print a verdict line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use pbac_core::{
    build_store, merge_restrictive, merge_union, Eip, IpTuple, Purpose, PurposeSet, Reservation, ReservationStore, StoreKind,
    TopicFilter, TopicName, UnreservedPolicy,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tuple;

#[derive(Debug, Default)]
pub struct Report {
    pub cases: usize,
    pub comparisons: usize,
    pub mismatches: usize,
    pub first: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.mismatches == 0
    }

    fn compare<T: PartialEq + std::fmt::Debug>(&mut self, got: T, want: T, context: impl FnOnce() -> String) {
        self.comparisons += 1;
        if got != want {
            self.mismatches += 1;
            if self.first.is_none() {
                self.first = Some(format!("{}: got {got:?}, want {want:?}", context()));
            }
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} cases, {} comparisons, {} mismatches",
            self.cases, self.comparisons, self.mismatches
        );
        if let Some(first) = &self.first {
            let _ = write!(s, "; first: {first}");
        }
        s
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick_set<R: Rng>(rng: &mut R, universe: &[String], max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max);
    let mut out: Vec<String> = (0..n).map(|_| universe.choose(rng).unwrap().clone()).collect();
    out.sort();
    out.dedup();
    out
}

pub fn random_tuple<R: Rng>(rng: &mut R, universe: &[String], max: usize) -> Tuple {
    Tuple {
        aip: pick_set(rng, universe, max),
        pip: pick_set(rng, universe, max),
    }
}

pub fn to_library(t: &Tuple) -> IpTuple {
    IpTuple::new(
        PurposeSet::parse_all(t.aip.iter().map(String::as_str)).unwrap(),
        PurposeSet::parse_all(t.pip.iter().map(String::as_str)).unwrap(),
    )
}

fn purpose(p: &str) -> Purpose {
    Purpose::parse(p).unwrap()
}

/// Random filter: up to `max_levels` levels of literals or `+`, then an
/// optional trailing `#`.
pub fn random_filter<R: Rng>(rng: &mut R, literals: &[&str], max_levels: usize) -> String {
    let n = rng.random_range(0..=max_levels);
    let mut levels: Vec<String> = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                "+".to_owned()
            } else {
                literals.choose(rng).unwrap().to_string()
            }
        })
        .collect();
    if n == 0 || rng.random_bool(0.35) {
        levels.push("#".to_owned());
    }
    levels.join("/")
}

/// `is_compatible` against closure-and-membership evaluation.
pub fn compatibility(seed: u64, n: usize) -> Report {
    let universe = super::paths(&["a", "b", "c", "d"], 4);
    let mut rng = rng(seed);
    let mut report = Report::default();
    for _ in 0..n {
        let t = random_tuple(&mut rng, &universe, 4);
        let ap = universe.choose(&mut rng).unwrap();
        let got = to_library(&t).is_compatible(&purpose(ap));
        report.compare(got, t.compatible(ap), || format!("{ap} vs {t:?}"));
        report.cases += 1;
    }
    report
}

/// `merge_restrictive` against the conjunction of input predicates, and
/// `merge_union` against compatibility with the pooled sets.
pub fn merges(seed: u64, n: usize) -> (Report, Report) {
    let universe = super::paths(&["a", "b", "c"], 3);
    let mut rng = rng(seed);
    let (mut restrictive, mut union) = (Report::default(), Report::default());
    for _ in 0..n {
        let k = rng.random_range(1..=4);
        let tuples: Vec<Tuple> = (0..k).map(|_| random_tuple(&mut rng, &universe, 4)).collect();
        let lib: Vec<IpTuple> = tuples.iter().map(to_library).collect();
        let r = merge_restrictive(&lib).unwrap();
        let u = merge_union(&lib).unwrap();
        let refs: Vec<&Tuple> = tuples.iter().collect();
        for p in &universe {
            let lp = purpose(p);
            let want = tuples.iter().all(|t| t.compatible(p));
            restrictive.compare(r.is_compatible(&lp), want, || format!("{p} vs {tuples:?}"));
            union.compare(u.is_compatible(&lp), super::union_compatible(&refs, p), || {
                format!("{p} vs {tuples:?}")
            });
        }
        restrictive.cases += 1;
        union.cases += 1;
    }
    (restrictive, union)
}

/// `matches`, `covers` and `overlaps` against enumeration of every topic of
/// depth at most four over three symbols.
pub fn topic_algebra(seed: u64, n: usize) -> Report {
    let alphabet = ["a", "b", "c"];
    let universe = super::paths(&alphabet, 4);
    let mut rng = rng(seed);
    let mut report = Report::default();
    for _ in 0..n {
        let a = random_filter(&mut rng, &alphabet, 3);
        let b = random_filter(&mut rng, &alphabet, 3);
        let (fa, fb) = (TopicFilter::parse(&a).unwrap(), TopicFilter::parse(&b).unwrap());
        let ra = super::filter_regex(&a);
        for t in &universe {
            let topic = TopicName::parse(t).unwrap();
            report.compare(fa.matches(&topic), ra.is_match(t), || format!("matches({a}, {t})"));
        }
        report.compare(fa.covers(&fb), super::covers(&a, &b, &universe), || format!("covers({a}, {b})"));
        report.compare(fb.covers(&fa), super::covers(&b, &a, &universe), || format!("covers({b}, {a})"));
        report.compare(fa.overlaps(&fb), super::overlaps(&a, &b, &universe), || format!("overlaps({a}, {b})"));
        report.cases += 1;
    }
    report
}

/// Shape of a randomized filter-EIP experiment.
#[derive(Clone, Copy, Debug)]
pub struct EipScale {
    /// Literals used by generated filters.
    pub literals: &'static [&'static str],
    /// Level alphabet of the enumerated topic universe. Must contain a
    /// symbol absent from `literals` to stand in for unmentioned levels.
    pub topic_alphabet: &'static [&'static str],
    pub topic_depth: usize,
    /// Non-`#` levels per generated filter.
    pub filter_levels: usize,
    pub max_reservations: usize,
    pub queries_per_store: usize,
}

impl EipScale {
    pub const BASE: EipScale = EipScale {
        literals: &["a"],
        topic_alphabet: &["a", "b"],
        topic_depth: 3,
        filter_levels: 2,
        max_reservations: 8,
        queries_per_store: 4,
    };

    pub const WIDE: EipScale = EipScale {
        literals: &["a", "b"],
        topic_alphabet: &["a", "b", "c"],
        topic_depth: 4,
        filter_levels: 3,
        max_reservations: 8,
        queries_per_store: 3,
    };
}

fn random_store<R: Rng>(rng: &mut R, scale: &EipScale, purposes: &[String]) -> Vec<(String, Tuple)> {
    let n = rng.random_range(0..=scale.max_reservations);
    let mut out: Vec<(String, Tuple)> = Vec::new();
    for _ in 0..n {
        let f = random_filter(rng, scale.literals, scale.filter_levels);
        let t = random_tuple(rng, purposes, 2);
        // last write wins, as in the store
        out.retain(|(g, _)| *g != f);
        out.push((f, t));
    }
    out
}

/// `filter_eip` and `any_topic_admits` against enumeration of the topics
/// each query filter can match.
pub fn filter_eip(seed: u64, stores: usize, scale: EipScale) -> Report {
    let purposes = super::paths(&["m", "o"], 2);
    let topics = super::paths(scale.topic_alphabet, scale.topic_depth);
    let mut rng = rng(seed);
    let mut report = Report::default();
    for _ in 0..stores {
        let reservations = random_store(&mut rng, &scale, &purposes);
        let store = build_store(
            StoreKind::Tree,
            false,
            reservations
                .iter()
                .map(|(f, t)| Reservation {
                    filter: TopicFilter::parse(f).unwrap(),
                    tuple: Arc::new(to_library(t)),
                }),
        );
        let oracle = super::Verdicts::new(&reservations);
        for _ in 0..scale.queries_per_store {
            let q = random_filter(&mut rng, scale.literals, scale.filter_levels);
            let fq = TopicFilter::parse(&q).unwrap();
            let inside = super::matched(&q, &topics);
            let open = store.filter_eip(&fq, UnreservedPolicy::AllowAll);
            let closed = store.filter_eip(&fq, UnreservedPolicy::DenyAll);
            for p in &purposes {
                let lp = purpose(p);
                let ctx = || format!("{q} for {p} over {reservations:?}");
                report.compare(
                    open.admits(Some(&lp), false),
                    oracle.filter_admits(&inside, p, false),
                    ctx,
                );
                report.compare(
                    closed.admits(Some(&lp), true),
                    oracle.filter_admits(&inside, p, true),
                    ctx,
                );
                for strict in [false, true] {
                    report.compare(
                        store.any_topic_admits(&fq, Some(&lp), strict),
                        oracle.filter_partially_admits(&inside, p, strict),
                        ctx,
                    );
                }
            }
        }
        report.cases += 1;
    }
    report
}

fn verdicts(eip: &Eip, purposes: &[Purpose]) -> Vec<Option<bool>> {
    match eip {
        Eip::Unrestricted => vec![None; purposes.len()],
        Eip::Restricted(t) => purposes.iter().map(|p| Some(t.is_compatible(p))).collect(),
    }
}

/// Flat, tree and cached stores driven through identical random
/// interleavings of writes and queries.
pub fn store_equivalence(seeds: std::ops::Range<u64>, ops: usize) -> Report {
    let literals = ["a", "b"];
    let purpose_texts = super::paths(&["m", "o"], 2);
    let purposes: Vec<Purpose> = purpose_texts.iter().map(|p| purpose(p)).collect();
    let topics: Vec<TopicName> = super::paths(&["a", "b", "c"], 3)
        .iter()
        .map(|t| TopicName::parse(t).unwrap())
        .collect();
    let mut report = Report::default();

    for seed in seeds {
        let mut rng = rng(seed);
        let mut stores: Vec<Box<dyn ReservationStore>> = vec![
            build_store(StoreKind::Flat, false, []),
            build_store(StoreKind::Tree, false, []),
            build_store(StoreKind::Tree, true, []),
            build_store(StoreKind::Flat, true, []),
        ];
        let names: Vec<String> = stores.iter().map(|s| s.describe()).collect();
        for step in 0..ops {
            let f = TopicFilter::parse(&random_filter(&mut rng, &literals, 3)).unwrap();
            if rng.random_bool(0.7) {
                let t = to_library(&random_tuple(&mut rng, &purpose_texts, 2));
                for s in stores.iter_mut() {
                    s.set_reservation(f.clone(), t.clone());
                }
            } else {
                for s in stores.iter_mut() {
                    s.remove_reservation(&f);
                }
            }

            let topic = topics.choose(&mut rng).unwrap();
            let query = TopicFilter::parse(&random_filter(&mut rng, &literals, 3)).unwrap();
            let reference = &stores[0];
            let want_len = reference.len();
            let want_combined = verdicts(&reference.combined_eip(topic), &purposes);
            let want_open = verdicts(&reference.filter_eip(&query, UnreservedPolicy::AllowAll), &purposes);
            let want_closed = verdicts(&reference.filter_eip(&query, UnreservedPolicy::DenyAll), &purposes);
            let want_overlap: BTreeSet<String> = reference
                .overlapping(&query)
                .iter()
                .map(|(f, _)| f.as_str().to_owned())
                .collect();
            for (s, name) in stores.iter().zip(&names).skip(1) {
                let ctx = |what: &str| format!("seed {seed} step {step} {name} {what}");
                report.compare(s.len(), want_len, || ctx("len"));
                report.compare(verdicts(&s.combined_eip(topic), &purposes), want_combined.clone(), || {
                    ctx(topic.as_str())
                });
                report.compare(
                    verdicts(&s.filter_eip(&query, UnreservedPolicy::AllowAll), &purposes),
                    want_open.clone(),
                    || ctx(query.as_str()),
                );
                report.compare(
                    verdicts(&s.filter_eip(&query, UnreservedPolicy::DenyAll), &purposes),
                    want_closed.clone(),
                    || ctx(query.as_str()),
                );
                let got: BTreeSet<String> = s.overlapping(&query).iter().map(|(f, _)| f.as_str().to_owned()).collect();
                report.compare(got, want_overlap.clone(), || ctx("overlapping"));
            }
        }
        report.cases += 1;
    }
    report
}
