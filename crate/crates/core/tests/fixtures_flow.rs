use std::path::{Path, PathBuf};

use revsent::corpus::{clean_text, deduplicate, ingest};
use revsent::lexicon::{assign_label, load_lexicon, score_text, LabelRule};
use revsent::textenc::{build_vocab, encode_padded, OOV_INDEX};
use revsent::SentimentLabel;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn chatgpt_export_ingests_with_drops() {
    let got = ingest(fixture("chatgpt.csv"), "chatgpt").unwrap();
    assert_eq!(got.dropped_empty, 1);
    assert_eq!(got.reviews.len(), 32);
    let (unique, dups) = deduplicate(got.reviews);
    assert_eq!(dups, 1);
    assert_eq!(unique.len(), 31);
    // emoji-only review survives ingest but cleans to nothing
    assert!(unique.iter().any(|r| clean_text(&r.text).is_empty()));
}

#[test]
fn starter_lexicon_labels() {
    let lex = load_lexicon(fixture("starter_lexicon.tsv")).unwrap();
    assert!(lex.len() >= 50);
    let rule = LabelRule::default();
    let label = |raw: &str| assign_label(score_text(&clean_text(raw), &lex), &rule);
    assert_eq!(
        label("Great app, the answers are accurate and helpful!"),
        SentimentLabel::Positive
    );
    assert_eq!(label("not good at math"), SentimentLabel::Negative);
    assert_eq!(
        label("I don't like the new layout"),
        SentimentLabel::Neutral
    );
    assert_eq!(label("okay app, nothing special"), SentimentLabel::Neutral);
    assert_eq!(label("Horrible customer support"), SentimentLabel::Negative);
}

#[test]
fn vocabulary_over_both_apps() {
    let texts: Vec<String> = ["chatgpt.csv", "deepseek.csv"]
        .iter()
        .flat_map(|f| ingest(fixture(f), f).unwrap().reviews)
        .map(|r| clean_text(&r.text))
        .collect();
    let vocab = build_vocab(&texts, 5000).unwrap();
    let seq = encode_padded("the app is zzzz", &vocab, 6);
    assert_eq!(seq.ids.len(), 6);
    assert_eq!(seq.ids[3], OOV_INDEX);
    assert_eq!(seq.length, 4);
}
