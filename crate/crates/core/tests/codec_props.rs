mod common;

use common::{random_convex_quad, rng};
use geovl::codec::{
    canonical_response, parse_choice, parse_detections, parse_hbox, render_detections, render_hbox, Choice, CodecError,
    DiagnosticKind, ParseOptions, ResponseMode,
};
use geovl::geometry::{CategorySet, HBox, LabeledDetection};
use proptest::prelude::*;

fn detections() -> impl Strategy<Value = Vec<LabeledDetection>> {
    let cats = prop::sample::select(vec!["plane", "ship", "tennis-court", "small vehicle", "bridge"]);
    prop::collection::vec((any::<u64>(), cats, 20.0..2000.0f64, 20.0..2000.0f64), 0..20).prop_map(|items| {
        let dets: Vec<LabeledDetection> = items
            .into_iter()
            .map(|(seed, c, x, y)| LabeledDetection::new(c, random_convex_quad(&mut rng(seed), x, y, 4.0, 20.0)))
            .collect();
        canonical_response(&dets)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn round_trip(dets in detections(), json in any::<bool>()) {
        let mode = if json { ResponseMode::Json } else { ResponseMode::Plain };
        let text = render_detections(&dets, mode).unwrap();
        let parsed = parse_detections(&text, &ParseOptions::default()).unwrap();
        if !dets.is_empty() {
            prop_assert_eq!(parsed.mode, mode);
        }
        prop_assert_eq!(parsed.response.detections, dets);
    }

    #[test]
    fn canonical_response_is_idempotent(dets in detections()) {
        prop_assert_eq!(canonical_response(&dets), dets);
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_detections(&text, &ParseOptions::default());
        let _ = parse_choice(&text);
        let _ = parse_hbox(&text);
    }

    #[test]
    fn hbox_round_trip(x in 0u32..2000, y in 0u32..2000, w in 1u32..500, h in 1u32..500) {
        let b = HBox::new(x.into(), y.into(), (x + w).into(), (y + h).into()).unwrap();
        prop_assert_eq!(parse_hbox(&render_hbox(&b)).unwrap(), b);
    }
}

#[test]
fn unknown_categories_are_flagged_not_dropped() {
    let set = CategorySet::new(["plane"]).unwrap();
    let opts = ParseOptions {
        categories: Some(&set),
        ..Default::default()
    };
    let p = parse_detections("plane: (0,0,4,0,4,4,0,4)\nufo: (9,9,19,9,19,19,9,19)", &opts).unwrap();
    assert_eq!(p.response.detections.len(), 2);
    assert_eq!(p.diagnostics.len(), 1);
    assert_eq!(p.diagnostics[0].kind, DiagnosticKind::UnknownCategory);
    let strict = ParseOptions { strict: true, ..opts };
    assert!(matches!(
        parse_detections("ufo: (9,9,19,9,19,19,9,19)", &strict),
        Err(CodecError::StrictParseError(_))
    ));
}

#[test]
fn fenced_json_is_accepted() {
    let text = "```json\n[{\"label\": \"ship\", \"poly\": [0,0,8,0,8,8,0,8]}]\n```";
    let p = parse_detections(text, &ParseOptions::default()).unwrap();
    assert_eq!(p.mode, ResponseMode::Json);
    assert_eq!(p.response.detections.len(), 1);
}

#[test]
fn choice_phrasings() {
    let cases: [(&str, Choice); 50] = [
        ("A", Choice::A),
        ("B.", Choice::B),
        ("(C)", Choice::C),
        ("D)", Choice::D),
        ("  b  ", Choice::B),
        ("The answer is A.", Choice::A),
        ("The answer is B", Choice::B),
        ("the answer is (C).", Choice::C),
        ("Answer: D", Choice::D),
        ("answer: a", Choice::A),
        ("Answer - B", Choice::B),
        ("My answer would be C.", Choice::C),
        ("The correct answer should be D", Choice::D),
        ("Option A", Choice::A),
        ("option B is correct", Choice::B),
        ("I choose option C.", Choice::C),
        ("Choice: D", Choice::D),
        ("The choice is A", Choice::A),
        ("[B]", Choice::B),
        ("(C) 12", Choice::C),
        ("D. 7", Choice::D),
        ("A: three", Choice::A),
        ("B) five ships", Choice::B),
        ("C. There are six planes.", Choice::C),
        ("I think it's D.", Choice::D),
        ("It is B.", Choice::B),
        ("Looking at the top-left region, I count 4 ships, so C.", Choice::C),
        ("Based on the zoomed view the answer is D: 9", Choice::D),
        ("answer=A", Choice::A),
        ("Answer: (B) 5", Choice::B),
        ("C\n", Choice::C),
        ("\nD.\n", Choice::D),
        ("The answer is option A", Choice::A),
        ("the correct option is B", Choice::B),
        ("Final answer: C", Choice::C),
        ("answer is [D]", Choice::D),
        ("B, because there are five.", Choice::B),
        ("I would pick C.", Choice::C),
        ("D is correct.", Choice::D),
        ("A.", Choice::A),
        ("Option (B)", Choice::B),
        ("choice C", Choice::C),
        ("The best option is D.", Choice::D),
        ("answer: b.", Choice::B),
        ("(A) 3", Choice::A),
        ("C: 4", Choice::C),
        ("So the count is 6, which is D.", Choice::D),
        ("There are 2 planes. Answer: A", Choice::A),
        ("B\nThere are 7 vehicles.", Choice::B),
        ("correct answer: C", Choice::C),
    ];
    let hits = cases
        .iter()
        .filter(|(t, want)| parse_choice(t).ok() == Some(*want))
        .count();
    let misses: Vec<&str> = cases
        .iter()
        .filter(|(t, want)| parse_choice(t).ok() != Some(*want))
        .map(|(t, _)| *t)
        .collect();
    assert!(hits >= 48, "{hits}/50 parsed; misses: {misses:?}");
}
