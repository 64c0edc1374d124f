use std::collections::BTreeSet;

use proptest::prelude::*;
use umls_augment::lexicon::{
    build_lexicon, normalize_term, BuildConfig, ConceptLexicon, ConceptRow, SemanticFilter, SemanticTypeRow,
};

const TYPES: [(&str, &str); 5] = [
    ("T109", "Organic Chemical"),
    ("T195", "Antibiotic"),
    ("T121", "Pharmacologic Substance"),
    ("T184", "Sign or Symptom"),
    ("T047", "Disease or Syndrome"),
];

fn rows() -> impl Strategy<Value = (Vec<ConceptRow>, Vec<SemanticTypeRow>)> {
    let conso = prop::collection::vec((0u32..30, "[A-Za-z][A-Za-z0-9 .-]{0,12}", prop::bool::weighted(0.9)), 1..60);
    let sty = prop::collection::vec((0u32..30, 0usize..TYPES.len()), 1..60);
    (conso, sty).prop_map(|(c, s)| {
        let conso = c
            .into_iter()
            .map(|(cui, term, eng)| ConceptRow {
                cui: format!("C{cui:07}"),
                language: if eng { "ENG".into() } else { "SPA".into() },
                source_vocab: "RXNORM".into(),
                term,
                suppress: 'N',
            })
            .collect();
        let sty = s
            .into_iter()
            .map(|(cui, t)| SemanticTypeRow {
                cui: format!("C{cui:07}"),
                tui: TYPES[t].0.into(),
                sty_name: TYPES[t].1.into(),
            })
            .collect();
        (conso, sty)
    })
}

fn config(names: &[&str]) -> BuildConfig {
    BuildConfig { filter: SemanticFilter::new(names.iter().copied()).unwrap(), ..Default::default() }
}

fn terms(lex: &Option<ConceptLexicon>) -> BTreeSet<String> {
    lex.as_ref().map(|l| l.entries().keys().cloned().collect()).unwrap_or_default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn cache_round_trip((conso, sty) in rows()) {
        if let Ok(lex) = build_lexicon(conso, sty, BuildConfig::default()) {
            let mut buf = Vec::new();
            lex.write_cache(&mut buf).unwrap();
            let back = ConceptLexicon::read_cache(buf.as_slice()).unwrap();
            prop_assert_eq!(back.content_hash(), lex.content_hash());
            prop_assert_eq!(back, lex);
        }
    }

    #[test]
    fn widening_the_filter_never_loses_terms((conso, sty) in rows(), extra in 3usize..5) {
        let narrow = build_lexicon(conso.clone(), sty.clone(), config(&["Organic Chemical", "Antibiotic"])).ok();
        let names: Vec<&str> = TYPES.iter().take(extra + 1).map(|t| t.1).collect();
        let wide = build_lexicon(conso, sty, config(&names)).ok();
        prop_assert!(terms(&narrow).is_subset(&terms(&wide)));
    }

    #[test]
    fn row_order_does_not_matter((conso, sty) in rows(), seed in any::<u64>()) {
        let a = build_lexicon(conso.clone(), sty.clone(), BuildConfig::default());
        let mut c2 = conso;
        let mut s2 = sty;
        // Deterministic shuffle from the seed.
        let mut x = seed | 1;
        for i in (1..c2.len()).rev() {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            c2.swap(i, (x % (i as u64 + 1)) as usize);
        }
        s2.reverse();
        let b = build_lexicon(c2, s2, BuildConfig::default());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.content_hash(), b.content_hash()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one ordering built a lexicon and the other did not"),
        }
    }

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,30}") {
        let once = normalize_term(&s);
        prop_assert_eq!(normalize_term(&once), once);
    }
}
