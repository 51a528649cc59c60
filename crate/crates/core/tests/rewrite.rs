use proptest::prelude::*;

use taxopref::eval::weak_pref;
use taxopref::fixtures;
use taxopref::formula::{Formula, Statement};
use taxopref::oracle::{
    check_equivalence, check_equivalence_with, enumerate_domain, formula_extension,
    random_instance, InstanceLimits, PairSet,
};
use taxopref::rewrite::{
    apply_s, apply_sequence, apply_t, canonicalize, compose, Canonical, Fault, RewriteConfig,
    RewriteError,
};

fn ext(f: &Formula) -> PairSet {
    let d = enumerate_domain(&f.schema, usize::MAX).unwrap();
    formula_extension(f, &d)
}

fn stmt_ext(f: &Formula, s: &Statement, domain: &[taxopref::TTuple]) -> PairSet {
    formula_extension(&Formula::new(f.schema.clone(), vec![s.clone()]), domain)
}

/// Whether some statement of `f` has the same extension as `text`.
fn has_statement(f: &Formula, text: &str) -> bool {
    let d = enumerate_domain(&f.schema, usize::MAX).unwrap();
    let want = formula_extension(&Formula::parse(f.schema.clone(), text).unwrap(), &d);
    f.statements.iter().any(|s| stmt_ext(f, s, &d) == want)
}

#[test]
fn canonical_examples() {
    for (w, c) in [
        ("SS", "S"),
        ("TT", "T"),
        ("TSTS", "TS"),
        ("TSTST", "TST"),
        ("STSTST", "STST"),
        ("STSTS", "STS"),
        ("SSSTTT", "ST"),
        ("", ""),
    ] {
        assert_eq!(canonicalize(w).unwrap().as_str(), c, "{w}");
    }
    assert!(matches!(canonicalize("TSx"), Err(RewriteError::InvalidCharacter('x', 2))));
    assert_eq!(Canonical::ALL.len(), 8);
    assert_eq!(Canonical::Empty.to_string(), "ε");
}

#[test]
fn wines_t_adds_transitive_statements() {
    let s = fixtures::wines_schema();
    let f = fixtures::wines_formula(&s);
    let g = apply_t(&f).unwrap();
    assert!(has_statement(&g, "Amarone > red"));
    assert!(has_statement(&g, "Siena > Langhe & young"));
    assert!(g.statements.iter().any(|st| st.id.contains('*')));
    let r = fixtures::wines_relation(&s);
    let (d, ff) = (&r.tuples()[3], &r.tuples()[5]);
    assert!(!weak_pref(&f, d, ff));
    assert!(weak_pref(&g, d, ff));
}

#[test]
fn time_t_matches_expected_closure() {
    let s = fixtures::time_schema();
    let f = fixtures::time_formula(&s);
    let g = apply_t(&f).unwrap();
    assert_eq!(g.statements.len(), 6);
    for text in [
        "summer > spring",
        "may > jul",
        "summer > jul",
        "may > spring",
        "may > jun",
        "summer > jun",
    ] {
        assert!(has_statement(&g, text), "missing {text}");
    }
    assert!(!has_statement(&g, "jul21 > jun"));
    let p13 = compose(&s, &f.statements[0], &f.statements[2]);
    assert_eq!(p13.id, "P1*P3");
    let d = enumerate_domain(&s, usize::MAX).unwrap();
    let want = formula_extension(&Formula::parse(s.clone(), "summer > jul").unwrap(), &d);
    assert_eq!(stmt_ext(&f, &p13, &d), want);
}

#[test]
fn t_leaves_uncombinable_statement_alone() {
    let s = fixtures::time_schema();
    let f = Formula::parse(s, "summer > winter").unwrap();
    assert_eq!(apply_t(&f).unwrap().statements, f.statements);
}

#[test]
fn wines_ts_refines_p1() {
    let s = fixtures::wines_schema();
    let f = fixtures::wines_formula(&s);
    let g = apply_sequence(&f, "TS").unwrap();
    let p7 = g
        .statements
        .iter()
        .find(|st| st.id == "P1!P2")
        .expect("refined P1");
    assert_eq!(p7.display(&s).to_string(), "Wine<=white > Wine<=red & !Wine<=Amarone");
    assert!(g.statement("P1").is_none());
}

#[test]
fn s_without_conflicts_or_with_opposites_is_identity() {
    let s = fixtures::time_schema();
    let f = Formula::parse(s.clone(), "summer > winter ; spring > autumn").unwrap();
    assert_eq!(apply_s(&f).unwrap().statements, f.statements);
    let g = Formula::parse(s, "summer > winter ; winter > summer").unwrap();
    assert_eq!(apply_s(&g).unwrap().statements, g.statements);
}

#[test]
fn empty_sequence_is_identity() {
    let s = fixtures::wines_schema();
    let f = fixtures::wines_formula(&s);
    assert_eq!(apply_sequence(&f, "").unwrap().to_string(), f.to_string());
    assert_eq!(apply_sequence(&f, "ε").unwrap().to_string(), f.to_string());
}

#[test]
fn time_ts_and_sts_relations() {
    let s = fixtures::time_schema();
    let f = fixtures::time_formula(&s);
    let t = |v: &str| s.tuple(&[v]).unwrap();
    let ts = apply_sequence(&f, "TS").unwrap();
    let sts = apply_sequence(&f, "STS").unwrap();
    assert!(weak_pref(&ts, &t("jul21"), &t("jul10")));
    assert!(!weak_pref(&ts, &t("jul21"), &t("may")));
    assert!(weak_pref(&sts, &t("jul21"), &t("may")));
    assert!(has_statement(&apply_sequence(&f, "ST").unwrap(), "jul21 > spring"));
    // The two sequences are incomparable on this input.
    let (a, b) = (ext(&ts), ext(&sts));
    assert!(!a.is_subset(&b) && !b.is_subset(&a));
}

#[test]
fn fixtures_are_oracle_equivalent() {
    let w = fixtures::wines_schema();
    let t = fixtures::time_schema();
    for f in [fixtures::wines_formula(&w), fixtures::cycle_formula(&w), fixtures::time_formula(&t)] {
        for c in Canonical::ALL {
            let rep = check_equivalence(&f, c.as_str(), usize::MAX).unwrap();
            assert!(rep.ok(), "{rep}");
        }
    }
}

#[test]
fn injected_fault_is_detected() {
    let s = fixtures::wines_schema();
    let f = fixtures::wines_formula(&s);
    let cfg = RewriteConfig { fault: Some(Fault::DropRefined) };
    let rep = check_equivalence_with(&f, "TS", usize::MAX, cfg).unwrap();
    assert!(!rep.ok());
    let bad = rep.stages.last().unwrap();
    assert!(bad.mismatches > 0 && !bad.sample.is_empty() && bad.sample.len() <= 10);
}

fn small() -> InstanceLimits {
    InstanceLimits {
        max_nodes_pair: 15,
        ..Default::default()
    }
}

/// First sweep instance (within `limit` seeds) satisfying `pred`.
fn witness(limit: u64, mut pred: impl FnMut(&Formula) -> bool) -> Option<u64> {
    (0..limit).find(|&s| pred(&random_instance(s, small())))
}

#[test]
fn sequences_ending_in_s_can_be_non_transitive() {
    for word in ["S", "TS", "STS"] {
        let found = witness(2000, |f| {
            !ext(&apply_sequence(f, word).unwrap()).strict_part().is_transitive()
        });
        assert!(found.is_some(), "no non-transitive witness for {word}");
    }
}

/// First default-size instance (within `limit` seeds) satisfying `pred`.
fn wide_witness(limit: u64, mut pred: impl FnMut(&Formula) -> bool) -> Option<u64> {
    (0..limit).find(|&s| pred(&random_instance(s, InstanceLimits::default())))
}

#[test]
fn st_is_not_minimal() {
    // STS is always contained in ST; some inputs make it strictly smaller.
    let found = wide_witness(200, |f| {
        let st = ext(&apply_sequence(f, "ST").unwrap());
        let sts = ext(&apply_sequence(f, "STS").unwrap());
        assert!(sts.is_subset(&st));
        st != sts
    });
    assert!(found.is_some());
}

#[test]
fn tst_and_stst_are_incomparable() {
    let pair = |f: &Formula| {
        (
            ext(&apply_sequence(f, "TST").unwrap()),
            ext(&apply_sequence(f, "STST").unwrap()),
        )
    };
    let a = wide_witness(200, |f| {
        let (x, y) = pair(f);
        !x.is_subset(&y)
    });
    // The other direction is rarer under the sweep distribution.
    let b = (6500..6700).find(|&s| {
        let (x, y) = pair(&random_instance(s, InstanceLimits::default()));
        !y.is_subset(&x)
    });
    assert!(a.is_some() && b.is_some(), "{a:?} {b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonical_form_is_stable(word in "[TS]{0,12}", suffix in "[TS]{0,4}") {
        let c = canonicalize(&word).unwrap();
        prop_assert!(Canonical::ALL.contains(&c));
        prop_assert_eq!(canonicalize(c.as_str()).unwrap(), c);
        prop_assert!(!c.as_str().contains("TT") && !c.as_str().contains("SS"));
        let joined = canonicalize(&format!("{word}{suffix}")).unwrap();
        prop_assert_eq!(canonicalize(&format!("{}{suffix}", c.as_str())).unwrap(), joined);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn containment_chains(seed in any::<u64>()) {
        let f = random_instance(seed, small());
        let e = |w: &str| ext(&apply_sequence(&f, w).unwrap());
        let tstst = ext(&apply_t(&apply_sequence(&f, "TSTS").unwrap()).unwrap());
        prop_assert!(tstst.is_subset(&e("TST")));
        prop_assert!(e("TST").is_subset(&e("T")));
        let ststst = ext(&apply_t(&apply_sequence(&f, "STSTS").unwrap()).unwrap());
        prop_assert!(ststst.is_subset(&e("STST")));
        prop_assert!(e("STST").is_subset(&e("ST")));
        for c in Canonical::ALL.into_iter().filter(|c| c.ends_with_t()) {
            let x = e(c.as_str());
            prop_assert!(x.is_transitive());
            prop_assert!(x.strict_part().is_transitive());
        }
    }

    #[test]
    fn rewriting_is_deterministic(seed in any::<u64>()) {
        let f = random_instance(seed, small());
        for c in Canonical::ALL {
            let a = apply_sequence(&f, c.as_str()).unwrap();
            let b = apply_sequence(&f, c.as_str()).unwrap();
            prop_assert_eq!(a.to_dsl_with_ids(), b.to_dsl_with_ids());
        }
    }
}
