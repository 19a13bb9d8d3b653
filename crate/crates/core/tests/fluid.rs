mod common;

use std::collections::BTreeMap;

use common::Fixture;
use devalign_core::fluid::{
    analogy_accuracy, analogy_candidate_scores, analogy_prompt_accuracy, generate_rpm_items, parse_analogy_choice,
    parse_rendered_context, parse_rpm_items, render_rpm_candidates, render_rpm_prompt, score_rpm, score_rpm_with,
    write_rpm_items, AnalogyItem, AnalogyMethod, Cell, RenderOptions, Rule, RpmItem,
};
use devalign_core::trace::{Task, TextFormat};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn generator_is_deterministic() {
    assert_eq!(generate_rpm_items(5, 42), generate_rpm_items(5, 42));
    assert_ne!(generate_rpm_items(5, 42), generate_rpm_items(5, 43));
}

#[test]
fn thousand_items_pass_the_independent_checker() {
    for item in generate_rpm_items(1000, 7) {
        common::check_rpm_item(&item).unwrap();
        item.validate().unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn every_seed_yields_a_valid_item(seed in any::<u64>()) {
        let item = &generate_rpm_items(1, seed)[0];
        prop_assert!(common::check_rpm_item(item).is_ok(), "{:?}", common::check_rpm_item(item));
    }
}

#[test]
fn constant_rule_answers_repeat_their_row() {
    let items = generate_rpm_items(400, 3);
    let mut seen = 0;
    for item in &items {
        let rules = item.rules.unwrap();
        if rules.shape == Rule::Constant && rules.size == Rule::Constant && rules.color == Rule::Constant {
            assert_eq!(item.answer(), item.context[6]);
            assert_eq!(item.answer(), item.context[7]);
            seen += 1;
        }
    }
    assert!(seen > 0, "no all-constant item among 400");
}

#[test]
fn rendering_uses_one_decimal_tuples_and_round_trips() {
    assert_eq!(Cell::new(3, 6, 8).to_string(), "(3, 0.6, 0.8)");
    let mut item = generate_rpm_items(1, 1).remove(0);
    let answer = item.answer_index;
    item.candidates[answer] = Cell::new(3, 6, 8);
    let texts = render_rpm_candidates(&item, &RenderOptions::default());
    assert_eq!(texts.len(), 8);
    assert!(texts[answer].ends_with("(3, 0.6, 0.8)"));

    for item in generate_rpm_items(200, 9) {
        let prompt = render_rpm_prompt(&item, &RenderOptions::default());
        assert_eq!(parse_rendered_context(&prompt).unwrap(), item.context);
        let texts = render_rpm_candidates(&item, &RenderOptions::default());
        for (i, a) in texts.iter().enumerate() {
            for (j, b) in texts.iter().enumerate().skip(i + 1) {
                let (ci, cj) = (item.candidates[i], item.candidates[j]);
                if ci.shape == cj.shape && ci.size == cj.size {
                    // differ only in color: same text up to the final tuple's last field
                    let cut = a.rfind(", ").unwrap();
                    assert_eq!(a[..cut], b[..cut]);
                    assert_ne!(a[cut..], b[cut..]);
                }
            }
        }
    }
}

#[test]
fn item_files_round_trip() {
    let items = generate_rpm_items(20, 4);
    let mut buf = Vec::new();
    write_rpm_items(&items, &mut buf).unwrap();
    let line = std::str::from_utf8(&buf).unwrap().lines().next().unwrap().to_string();
    assert!(line.starts_with(r#"{"item":"rpm-00000","context":[["#), "{line}");
    assert_eq!(parse_rpm_items(buf.as_slice()).unwrap(), items);
}

fn rpm_fixture(items: &[RpmItem], score: impl Fn(&RpmItem, usize) -> f64) -> Fixture {
    let mut fx = Fixture::new();
    for item in items {
        for k in 0..8 {
            fx.lp(Task::Rpm, &item.item_id, &k.to_string(), score(item, k));
        }
    }
    fx
}

#[test]
fn planted_answers_score_perfectly_and_shift_is_harmless() {
    let items = generate_rpm_items(300, 12);
    let planted = rpm_fixture(&items, |item, k| if k == item.answer_index { -5.0 } else { -9.0 - k as f64 });
    let view = planted.set.view(common::MODEL, common::STEP).unwrap();
    let score = score_rpm(&view, &items).unwrap();
    assert_eq!(score.accuracy, 1.0);
    assert_eq!(score.n_tied, 0);

    let mut rng = common::rng(8);
    let raw: Vec<Vec<f64>> = items.iter().map(|_| (0..8).map(|_| -rng.gen_range(1.0..30.0)).collect()).collect();
    let idx = |item: &RpmItem| items.iter().position(|i| i.item_id == item.item_id).unwrap();
    let a = rpm_fixture(&items, |item, k| raw[idx(item)][k]);
    let b = rpm_fixture(&items, |item, k| raw[idx(item)][k] + 7.3);
    let va = score_rpm(&a.set.view(common::MODEL, common::STEP).unwrap(), &items).unwrap();
    let vb = score_rpm(&b.set.view(common::MODEL, common::STEP).unwrap(), &items).unwrap();
    assert_eq!(va.verdicts, vb.verdicts);
}

#[test]
fn ties_go_to_the_lowest_index_and_are_flagged() {
    let items = generate_rpm_items(1, 2);
    let s = score_rpm_with(&items, |_, _| Ok(-1.0)).unwrap();
    assert_eq!(s.verdicts[0].chosen, 0);
    assert!(s.verdicts[0].tied);
    let fx = rpm_fixture(&items, |_, k| -(k as f64));
    let mut view_items = items.clone();
    view_items[0].item_id = "missing".into();
    assert!(score_rpm(&fx.set.view(common::MODEL, common::STEP).unwrap(), &view_items).is_err());
}

#[test]
fn random_log_probs_give_chance_accuracy() {
    let items = generate_rpm_items(10_000, 77);
    let mut rng = common::rng(78);
    let s = score_rpm_with(&items, |_, _| Ok(-rng.gen_range(0.0..50.0))).unwrap();
    assert!((s.accuracy - 0.125).abs() <= 0.01, "{}", s.accuracy);
}

struct AnalogyWorld {
    fx: Fixture,
    items: Vec<AnalogyItem>,
    vectors: BTreeMap<String, Vec<f64>>,
}

fn random_analogies(n: usize, seed: u64) -> AnalogyWorld {
    let mut rng = common::rng(seed);
    let mut fx = Fixture::new();
    let mut vectors = BTreeMap::new();
    let mut items = Vec::new();
    for i in 0..n {
        let dim = rng.gen_range(3..8);
        let mut word = |name: String, rng: &mut rand_chacha::ChaCha8Rng| {
            let v = common::gaussian_vec(rng, dim);
            fx.emb(0, TextFormat::Plain, &name, v.clone());
            vectors.insert(name.clone(), v);
            name
        };
        let a = word(format!("a{i}"), &mut rng);
        let b = word(format!("b{i}"), &mut rng);
        let k = rng.gen_range(2..6);
        let candidates = (0..k)
            .map(|j| (word(format!("c{i}_{j}"), &mut rng), word(format!("d{i}_{j}"), &mut rng)))
            .collect();
        items.push(AnalogyItem {
            item_id: format!("sat-{i}"),
            a,
            b,
            candidates,
            answer: rng.gen_range(0..k),
        });
    }
    AnalogyWorld { fx, items, vectors }
}

#[test]
fn vector_methods_match_their_formulas_on_two_hundred_items() {
    let w = random_analogies(200, 31);
    let view = w.fx.set.view(common::MODEL, common::STEP).unwrap();
    let methods = [AnalogyMethod::CosAdd, AnalogyMethod::CosMul, AnalogyMethod::ConcatCos];
    let mut correct = [0usize; 3];
    for item in &w.items {
        let oracle: Vec<[f64; 3]> = item
            .candidates
            .iter()
            .map(|(c, d)| {
                common::analogy_oracle(&w.vectors[&item.a], &w.vectors[&item.b], &w.vectors[c], &w.vectors[d])
            })
            .collect();
        for (m, method) in methods.iter().enumerate() {
            let got = analogy_candidate_scores(&view, item, *method, 0).unwrap();
            let want: Vec<f64> = oracle.iter().map(|o| o[m]).collect();
            for (g, o) in got.iter().zip(&want) {
                assert!((g - o).abs() <= 1e-10, "{method} {}: {g} vs {o}", item.item_id);
            }
            assert_eq!(common::first_argmax(&got), common::first_argmax(&want));
            correct[m] += usize::from(common::first_argmax(&want) == item.answer);
        }
    }
    for (m, method) in methods.iter().enumerate() {
        let acc = analogy_accuracy(&view, &w.items, *method, 0).unwrap();
        assert_eq!(acc.n_correct, correct[m], "{method}");
        assert_eq!(acc.method, method.as_str());
    }
}

#[test]
fn planted_geometries_pick_the_planted_candidate() {
    let mut fx = Fixture::new();
    let put = |fx: &mut Fixture, w: &str, v: [f64; 4]| {
        fx.emb(0, TextFormat::Plain, w, v.to_vec());
    };
    // concat: A = B and C = D in the same direction, distractors orthogonal
    put(&mut fx, "same", [1.0, 0.0, 0.0, 0.0]);
    put(&mut fx, "twin", [2.0, 0.0, 0.0, 0.0]);
    put(&mut fx, "x", [0.0, 1.0, 0.0, 0.0]);
    put(&mut fx, "y", [0.0, 0.0, 1.0, 0.0]);
    put(&mut fx, "z", [0.0, 0.0, 0.0, 1.0]);
    let parallel = AnalogyItem {
        item_id: "par".into(),
        a: "same".into(),
        b: "same".into(),
        candidates: vec![("x".into(), "y".into()), ("twin".into(), "twin".into()), ("y".into(), "z".into())],
        answer: 1,
    };
    // offset: king - man + woman = queen
    put(&mut fx, "man", [1.0, 0.0, 0.2, 0.0]);
    put(&mut fx, "woman", [1.0, 1.0, 0.2, 0.0]);
    put(&mut fx, "king", [1.0, 0.0, 0.2, 1.0]);
    put(&mut fx, "queen", [1.0, 1.0, 0.2, 1.0]);
    put(&mut fx, "prince", [0.3, -1.0, 0.9, 0.4]);
    let offset = AnalogyItem {
        item_id: "royal".into(),
        a: "man".into(),
        b: "woman".into(),
        candidates: vec![("king".into(), "prince".into()), ("king".into(), "queen".into())],
        answer: 1,
    };
    let view = fx.set.view(common::MODEL, common::STEP).unwrap();
    let s = analogy_candidate_scores(&view, &parallel, AnalogyMethod::ConcatCos, 0).unwrap();
    assert_eq!(common::first_argmax(&s), 1);
    let s = analogy_candidate_scores(&view, &offset, AnalogyMethod::CosAdd, 0).unwrap();
    assert_eq!(common::first_argmax(&s), 1);
    assert!((s[1] - 1.0).abs() < 1e-12);
}

#[test]
fn surprisal_and_prompt_choices() {
    let item = AnalogyItem {
        item_id: "q1".into(),
        a: "puppy".into(),
        b: "dog".into(),
        candidates: vec![("kitten".into(), "cat".into()), ("calf".into(), "cow".into()), ("egg".into(), "hen".into())],
        answer: 0,
    };
    let mut fx = Fixture::new();
    for (k, lp) in [-11.0, -12.0, -15.0].into_iter().enumerate() {
        fx.lp(Task::Analogy, "q1", &k.to_string(), lp);
    }
    let view = fx.set.view(common::MODEL, common::STEP).unwrap();
    let acc = analogy_accuracy(&view, std::slice::from_ref(&item), AnalogyMethod::Surprisal, 0).unwrap();
    assert_eq!(acc.accuracy, 1.0);

    assert_eq!(parse_analogy_choice(&item, "2"), Some(1));
    assert_eq!(parse_analogy_choice(&item, "  Kitten : Cat. "), Some(0));
    assert_eq!(parse_analogy_choice(&item, "9"), None);
    assert_eq!(parse_analogy_choice(&item, "kitten and cow"), None);
    assert_eq!(parse_analogy_choice(&item, "calf:cow or egg:hen"), None);
    let mut completions = BTreeMap::new();
    completions.insert("q1".to_string(), vec!["1".to_string(), "calf is to cow".to_string(), "no idea".to_string()]);
    let p = analogy_prompt_accuracy(std::slice::from_ref(&item), &completions).unwrap();
    assert_eq!((p.n_items, p.n_correct), (2, 1));
}
