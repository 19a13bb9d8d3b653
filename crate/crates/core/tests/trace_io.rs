mod common;

use devalign_core::trace::{cosine_similarity, EmbeddingRecord, LogProbRecord, Task, TextFormat, TraceError, TraceSet};
use devalign_core::StatsError;
use proptest::prelude::*;

fn format_strategy() -> impl Strategy<Value = TextFormat> {
    prop_oneof![
        Just(TextFormat::Digit),
        Just(TextFormat::WordLower),
        Just(TextFormat::WordMixed),
        Just(TextFormat::Plain),
    ]
}

fn task_strategy() -> impl Strategy<Value = Task> {
    prop_oneof![
        Just(Task::Blimp),
        Just(Task::TypicalitySurprisal),
        Just(Task::Rpm),
        Just(Task::Analogy),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

/// Two checkpoints, Pythia schedule, arbitrary texts and values. Duplicate
/// keys are dropped before insertion so every generated set is valid.
fn records() -> impl Strategy<Value = (Vec<EmbeddingRecord>, Vec<LogProbRecord>)> {
    let emb = (
        0u64..2,
        0u32..4,
        "[a-zA-Z0-9 é\"\\\\]{0,8}",
        format_strategy(),
        prop::collection::vec(finite(), 1..6),
    )
        .prop_map(|(step, layer, text, text_format, vector)| EmbeddingRecord {
            model_id: "pythia-70m".into(),
            checkpoint_step: step,
            tokens_seen: step * 2_000_000,
            layer,
            text,
            text_format,
            vector,
        });
    let lp = (
        0u64..2,
        task_strategy(),
        "[a-z0-9:_/-]{1,6}",
        "[a-z0-9]{1,4}",
        ".{0,12}",
        finite(),
        1u32..50,
    )
        .prop_map(|(step, task, item_id, condition, text, total_logprob, n_tokens)| LogProbRecord {
            model_id: "pythia-70m".into(),
            checkpoint_step: step,
            tokens_seen: step * 2_000_000,
            task,
            item_id,
            condition,
            text,
            total_logprob,
            n_tokens,
        });
    (prop::collection::vec(emb, 0..12), prop::collection::vec(lp, 0..12)).prop_map(|(mut e, mut l)| {
        let mut seen = std::collections::HashSet::new();
        e.retain(|r| seen.insert((r.checkpoint_step, r.layer, r.text.clone(), r.text_format)));
        let mut seen = std::collections::HashSet::new();
        l.retain(|r| seen.insert((r.checkpoint_step, r.task, r.item_id.clone(), r.condition.clone())));
        (e, l)
    })
}

fn serialize(set: &TraceSet) -> Vec<u8> {
    let mut buf = Vec::new();
    set.write_to(&mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn write_ingest_round_trip_is_lossless_and_byte_stable((embs, lps) in records()) {
        let mut set = TraceSet::new();
        for e in &embs {
            set.insert_embedding(e.clone()).unwrap();
        }
        for l in &lps {
            set.insert_logprob(l.clone()).unwrap();
        }
        let bytes = serialize(&set);
        let back = TraceSet::from_reader(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.embeddings(), &embs[..]);
        prop_assert_eq!(back.logprobs(), &lps[..]);
        prop_assert_eq!(serialize(&back), bytes);

        for e in &embs {
            let view = back.view(&e.model_id, e.checkpoint_step).unwrap();
            prop_assert_eq!(view.embedding(e.layer, e.text_format, &e.text), Some(e));
        }
        for l in &lps {
            let view = back.view(&l.model_id, l.checkpoint_step).unwrap();
            prop_assert_eq!(view.logprob(l.task, &l.item_id, &l.condition), Some(l));
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        a in prop::collection::vec(-100.0..100.0f64, 1..40),
        k in prop_oneof![1e-6..1e-3f64, 0.1..10.0f64, 1e3..1e6f64],
        seed in any::<u64>(),
    ) {
        prop_assume!(a.iter().any(|v| *v != 0.0));
        let mut rng = common::rng(seed);
        let b = common::gaussian_vec(&mut rng, a.len());
        let scaled: Vec<f64> = a.iter().map(|v| v * k).collect();
        let base = cosine_similarity(&a, &b).unwrap();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - base).abs() <= 1e-12);
        prop_assert_eq!(cosine_similarity(&b, &a).unwrap(), base);
        prop_assert!((-1.0..=1.0).contains(&base));
    }
}

#[test]
fn cosine_examples() {
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let want = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    assert!((got - want).abs() < 1e-15);
    assert!((got - common::cosine_oracle(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])).abs() < 1e-15);
    assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(StatsError::ZeroVector));
    assert!(matches!(
        cosine_similarity(&[1.0], &[1.0, 2.0]),
        Err(StatsError::LengthMismatch { .. })
    ));
}

#[test]
fn three_valid_lines_ingest_as_three_records() {
    let src = concat!(
        r#"{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":0,"text":"1","format":"digit","vec":[1.0,0.5]}"#,
        "\n",
        r#"{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":0,"text":"2","format":"digit","vec":[0.5,1.0],"extra":true}"#,
        "\n\n",
        r#"{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":1,"text":"one","format":"word_lower","vec":[3]}"#,
        "\n",
    );
    let set = TraceSet::from_reader(src.as_bytes()).unwrap();
    assert_eq!(set.len(), 3);
    assert_eq!(set.embeddings().len(), 3);
}

#[test]
fn bad_lines_name_their_line_number() {
    let good = r#"{"kind":"lp","model":"m","step":2,"tokens":4000000,"task":"blimp","item":"a","cond":"good","text":"x","logprob":-3.5,"ntok":3}"#;
    let nan = r#"{"kind":"emb","model":"m","step":2,"tokens":4000000,"layer":0,"text":"1","format":"digit","vec":[NaN]}"#;
    let err = TraceSet::from_reader(format!("{good}\n{nan}\n").as_bytes()).unwrap_err();
    assert!(matches!(err, TraceError::NonFinite { line: 2, .. }), "{err}");
    assert!(err.to_string().contains("line 2"));

    let err = TraceSet::from_reader(format!("{good}\n{good}\n").as_bytes()).unwrap_err();
    assert!(matches!(err, TraceError::Duplicate { line: 2, .. }), "{err}");

    let other_tokens = good.replace("4000000", "5").replace("\"a\"", "\"b\"");
    let err = TraceSet::from_reader(format!("{good}\n{other_tokens}\n").as_bytes()).unwrap_err();
    assert!(matches!(err, TraceError::InconsistentTokens { line: 2, .. }), "{err}");

    let err = TraceSet::from_reader("{\"kind\":\"emb\"\n".as_bytes()).unwrap_err();
    assert!(matches!(err, TraceError::Malformed { line: 1, .. }), "{err}");
}

#[test]
fn ingest_from_file_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "not json\n").unwrap();
    let err = TraceSet::ingest(&path).unwrap_err();
    assert!(err.to_string().contains("bad.jsonl"), "{err}");
}
