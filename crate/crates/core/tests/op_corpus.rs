mod common;

use common::*;
use proptest::prelude::*;
use termnorm::ontology::{build_op_corpus, Ontology};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn corpus_matches_llt_table(seed in any::<u64>()) {
        if let Err(e) = op_corpus_case(seed) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn toy_corpus() {
    assert!(toy_op_corpus_ok());
    let corpus = build_op_corpus(&toy_ontology());
    let ids: Vec<&str> = corpus.samples.iter().map(|s| s.sample_id.as_str()).collect();
    assert_eq!(ids, ["10001", "10002", "10003"]);
    assert!(corpus.samples.iter().all(|s| s.source_llt_id.as_deref() == Some(s.sample_id.as_str())));
}

#[test]
fn tsv_round_trip_keeps_corpus() {
    let mut rng = termnorm::rng::DetRng::new(4);
    let o = random_ontology(&mut rng, 8, 3, 5);
    let back = Ontology::parse(&o.to_tsv(), std::path::Path::new("x.tsv")).unwrap();
    assert_eq!(back, o);
    assert_eq!(build_op_corpus(&back), build_op_corpus(&o));
}
