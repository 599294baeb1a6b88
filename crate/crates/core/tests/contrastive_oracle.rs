mod common;

use common::*;
use proptest::prelude::*;
use termnorm::contrastive::{coder_samples, coder_samples_with, sapbert_dataset_pairs, sapbert_op_pairs, CoderOptions, Polarity};
use termnorm::rng::DetRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coder_matches_enumeration(seed in any::<u64>()) {
        let mut rng = DetRng::new(seed);
        let o = random_ontology(&mut rng, 4, 2, 3);
        let d = random_dataset(&mut rng, &o, 12);
        let got = coder_samples(&d, &o).unwrap();
        let (pairs, triples, skipped) = coder_oracle(&d, &o);
        prop_assert_eq!(sorted(&got.pairs), sorted(&pairs));
        prop_assert_eq!(sorted(&got.triples), sorted(&triples));
        prop_assert_eq!(got.skipped_missing_hlt, skipped);
    }

    #[test]
    fn sapbert_matches_enumeration(seed in any::<u64>()) {
        let mut rng = DetRng::new(seed);
        let o = random_ontology(&mut rng, 4, 2, 4);
        let d = random_dataset(&mut rng, &o, 12);
        prop_assert_eq!(sorted(&sapbert_dataset_pairs(&d, &o).unwrap()), sorted(&sapbert_dataset_oracle(&d, &o)));
        prop_assert_eq!(sorted(&sapbert_op_pairs(&o)), sorted(&sapbert_op_oracle(&o)));
    }

    #[test]
    fn negative_cap_keeps_a_subset(seed in any::<u64>(), cap in 0usize..3) {
        let mut rng = DetRng::new(seed);
        let o = random_ontology(&mut rng, 4, 2, 3);
        let d = random_dataset(&mut rng, &o, 12);
        let full = coder_samples(&d, &o).unwrap();
        let capped = coder_samples_with(&d, &o, &CoderOptions { max_negatives_per_positive: Some(cap), seed }).unwrap();
        let pos = |ps: &[termnorm::contrastive::PairSample]| ps.iter().filter(|p| p.polarity == Polarity::Positive).count();
        let npos = pos(&full.pairs);
        prop_assert_eq!(pos(&capped.pairs), npos);
        let nneg_full = full.pairs.len() - npos;
        prop_assert_eq!(capped.pairs.len() - npos, nneg_full.min(cap * npos));
        let mut it = full.pairs.iter();
        for p in &capped.pairs {
            prop_assert!(it.any(|q| q == p));
        }
    }
}

#[test]
fn worked_example_verbatim() {
    let out = coder_samples(&worked_example(), &toy_ontology()).unwrap();
    let pairs: Vec<(&str, &str, Polarity)> =
        out.pairs.iter().map(|p| (p.left.as_str(), p.right.as_str(), p.polarity)).collect();
    assert_eq!(
        pairs,
        [
            ("weak knees", "zap me of all energy", Polarity::Positive),
            ("weak knees", "feel like crap", Polarity::Negative),
            ("zap me of all energy", "feel like crap", Polarity::Negative),
        ]
    );
    let triples: Vec<String> = out.triples.iter().map(|t| format!("{} {} {}", t.left, t.relation, t.right)).collect();
    assert_eq!(triples, ["weak knees RO feel like crap", "zap me of all energy RO feel like crap"]);
}
