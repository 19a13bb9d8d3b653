mod common;

use std::collections::BTreeMap;

use common::Fixture;
use devalign_core::linguistic::{
    aggregate_blimp, blimp_verdicts, parse_blimp_jsonl, Level, MinimalPair, Phenomenon, PhenomenonMap, ScoreOptions,
    Tally, BAD, DEFAULT_PHENOMENA_TOML, GOOD,
};
use devalign_core::trace::Task;
use devalign_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn map() -> PhenomenonMap {
    PhenomenonMap::from_toml(DEFAULT_PHENOMENA_TOML).unwrap()
}

/// `n` pairs cycling through every phenomenon.
fn pairs(n: usize) -> Vec<MinimalPair> {
    let map = map();
    (0..n)
        .map(|i| {
            let p = Phenomenon::ALL[i % Phenomenon::ALL.len()];
            let uid = map.uids(p)[0].to_string();
            MinimalPair::new(format!("{uid}/{i}"), uid, p, &map, format!("good {i}"), format!("bad {i}")).unwrap()
        })
        .collect()
}

fn fixture(pairs: &[MinimalPair], logprobs: &[(f64, f64)]) -> Fixture {
    let mut fx = Fixture::new();
    for (p, &(g, b)) in pairs.iter().zip(logprobs) {
        fx.lp(Task::Blimp, &p.item_id, GOOD, g).lp(Task::Blimp, &p.item_id, BAD, b);
    }
    fx
}

#[test]
fn eighty_of_a_hundred_is_exactly_point_eight() {
    let ps = pairs(100);
    let lps: Vec<(f64, f64)> = (0..100).map(|i| if i % 5 == 4 { (-12.0, -11.0) } else { (-10.0, -12.5) }).collect();
    let fx = fixture(&ps, &lps);
    let view = fx.set.view(common::MODEL, common::STEP).unwrap();
    let verdicts = blimp_verdicts(&view, &ps, ScoreOptions::default()).unwrap();
    let score = aggregate_blimp(&ps, &verdicts).unwrap();
    assert_eq!(score.n_correct, 80);
    assert_eq!(score.overall_accuracy, 0.8);
    assert_eq!(format!("{:.3}", score.overall_accuracy), "0.800");
}

#[test]
fn ties_count_as_wrong() {
    let ps = pairs(3);
    let fx = fixture(&ps, &[(-10.0, -10.0), (-10.0, -12.5), (-12.5, -10.0)]);
    let view = fx.set.view(common::MODEL, common::STEP).unwrap();
    assert_eq!(blimp_verdicts(&view, &ps, ScoreOptions::default()).unwrap(), vec![false, true, false]);
}

#[test]
fn missing_records_and_unknown_uids_are_errors() {
    let ps = pairs(2);
    let fx = fixture(&ps[..1], &[(-1.0, -2.0)]);
    let view = fx.set.view(common::MODEL, common::STEP).unwrap();
    assert!(matches!(
        blimp_verdicts(&view, &ps, ScoreOptions::default()),
        Err(Error::MissingLogProb { .. })
    ));
    let line = r#"{"sentence_good":"a","sentence_bad":"b","UID":"no_such_paradigm","pairID":"0"}"#;
    assert!(matches!(
        parse_blimp_jsonl(line, &map(), std::path::Path::new("x.jsonl")),
        Err(Error::UnknownPhenomenon(_))
    ));
    assert!(Phenomenon::parse("grammar_vibes").is_err());
}

#[test]
fn dual_level_phenomena_count_twice() {
    let m = map();
    assert_eq!(m.levels(Phenomenon::Binding).unwrap(), &[Level::Syntax, Level::Semantics]);
    assert_eq!(m.levels(Phenomenon::ControlRaising).unwrap(), &[Level::Syntax, Level::Semantics]);
}

/// Level tallies rebuilt from the phenomenon tallies and the level map alone.
fn levels_from_phenomena(per: &BTreeMap<Phenomenon, Tally>, map: &PhenomenonMap) -> BTreeMap<Level, Tally> {
    let mut out: BTreeMap<Level, Tally> = BTreeMap::new();
    for (p, t) in per {
        for l in map.levels(*p).unwrap() {
            let e = out.entry(*l).or_default();
            e.correct += t.correct;
            e.total += t.total;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdicts_ignore_a_constant_shift(seed in any::<u64>(), n in 1usize..60) {
        let ps = pairs(n);
        let mut rng = common::rng(seed);
        let lps: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let g = -rng.gen_range(1.0..40.0f64).round();
                let b = if rng.gen_bool(0.1) { g } else { -rng.gen_range(1.0..40.0f64).round() };
                (g, b)
            })
            .collect();
        let shifted: Vec<(f64, f64)> = lps.iter().map(|(g, b)| (g + 7.3, b + 7.3)).collect();
        let a = fixture(&ps, &lps);
        let b = fixture(&ps, &shifted);
        let va = blimp_verdicts(&a.set.view(common::MODEL, common::STEP).unwrap(), &ps, ScoreOptions::default()).unwrap();
        let vb = blimp_verdicts(&b.set.view(common::MODEL, common::STEP).unwrap(), &ps, ScoreOptions::default()).unwrap();
        prop_assert_eq!(va, vb);
    }

    #[test]
    fn per_level_is_reproducible_from_per_phenomenon(verdicts in prop::collection::vec(any::<bool>(), 1..200)) {
        let ps = pairs(verdicts.len());
        let score = aggregate_blimp(&ps, &verdicts).unwrap();
        prop_assert_eq!(&levels_from_phenomena(&score.per_phenomenon, &map()), &score.per_level);
        let correct = verdicts.iter().filter(|v| **v).count();
        prop_assert_eq!(score.overall_accuracy, correct as f64 / verdicts.len() as f64);
        for (level, t) in &score.per_level {
            let members: Vec<&Tally> = score
                .per_phenomenon
                .iter()
                .filter(|(p, _)| map().levels(**p).unwrap().contains(level))
                .map(|(_, t)| t)
                .collect();
            let weighted: f64 = members.iter().map(|m| m.accuracy() * m.total as f64).sum::<f64>()
                / members.iter().map(|m| m.total as f64).sum::<f64>();
            prop_assert!((t.accuracy() - weighted).abs() < 1e-12);
        }
    }
}
