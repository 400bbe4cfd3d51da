mod common;

use std::collections::BTreeSet;

use common::fixture_kb;
use smf_core::converge::{
    classify_outcome, converge, explain, render_convergence, OutcomeKind, View,
};
use smf_core::kb::{serialize_kb, validate_kb};
use smf_core::reasoner::{self, AncestorEntry};

fn views(a: &str, b: &str) -> (View, View) {
    (
        View::new(a, "resnet").unwrap(),
        View::new(b, "alexnet").unwrap(),
    )
}

/// (abstraction, properties, relationships as "subj pred obj")
fn components(a: &str, b: &str) -> (Option<String>, BTreeSet<String>, BTreeSet<String>) {
    let kb = fixture_kb();
    let (v1, v2) = views(a, b);
    let c = converge(&v1, &v2, &kb);
    let rels = c
        .relationships
        .iter()
        .map(|r| {
            format!(
                "{} {} {}",
                r.subject_individual, r.predicate, r.object_individual
            )
        })
        .collect();
    (c.abstraction, c.properties, rels)
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn fixture_is_clean() {
    let kb = fixture_kb();
    assert!(validate_kb(&kb).findings.is_empty());
    assert_eq!(serialize_kb(&kb), serialize_kb(&kb));
    assert_eq!(smf_core::kb::parse_kb(&serialize_kb(&kb)).unwrap(), kb);
}

#[test]
fn unified_examples() {
    assert_eq!(
        components("table lamp", "dining table"),
        (Some("Furniture".into()), set(&[]), set(&[]))
    );
    assert_eq!(
        components("CD player", "radio"),
        (Some("ListeningDevice".into()), set(&[]), set(&[]))
    );
    assert_eq!(
        components("ox", "plow"),
        (None, set(&[]), set(&["ox help_farm_with plow"]))
    );
    assert_eq!(
        components("backpack", "purse"),
        (Some("CarryingDevice".into()), set(&[]), set(&[]))
    );
    assert_eq!(
        components("crib", "quilt"),
        (None, set(&[]), set(&["quilt lays_on_furniture crib"]))
    );
    assert_eq!(
        components("ice cream", "mashed potato"),
        (Some("FoodFamily".into()), set(&["is_edible"]), set(&[]))
    );
    assert_eq!(
        components("strawberry", "ice cream"),
        (None, set(&["is_edible"]), set(&[]))
    );
    assert_eq!(
        components("orangutan", "langur").0.as_deref(),
        Some("Primate")
    );
    assert_eq!(
        components("desktop computer", "desk").0.as_deref(),
        Some("PhysicalObject")
    );
}

#[test]
fn explanation_strings() {
    let kb = fixture_kb();
    let cases = [
        (
            "desk",
            "desktop computer",
            "desk is a kind of furniture and desktop computer is a kind of computing device",
        ),
        (
            "table lamp",
            "dining table",
            "table lamp is a kind of furniture and dining table is a kind of table",
        ),
        (
            "CD player",
            "radio",
            "CD player is a kind of listening device and radio is a kind of listening device",
        ),
        (
            "ox",
            "plow",
            "ox is a kind of bovine family and plow is a kind of farming device",
        ),
        (
            "backpack",
            "purse",
            "backpack is a kind of carrying device and purse is a kind of carrying device",
        ),
        (
            "crib",
            "quilt",
            "crib is a kind of bed and quilt is a kind of bedding",
        ),
        (
            "ice cream",
            "mashed potato",
            "ice cream is a kind of sweets and mashed potato is a kind of prepared potatoes",
        ),
    ];
    for (a, b, expected) in cases {
        let (v1, v2) = views(a, b);
        assert_eq!(explain(&v1, &v2, &kb).unwrap().rendered, expected);
    }
}

#[test]
fn rendered_convergence() {
    let kb = fixture_kb();
    let (v1, v2) = views("ice cream", "mashed potato");
    let c = converge(&v1, &v2, &kb);
    assert_eq!(
        render_convergence(&c, &kb).unwrap(),
        ["is edible", "food family"]
    );
    let (v1, v2) = views("crib", "quilt");
    let c = converge(&v1, &v2, &kb);
    assert_eq!(
        render_convergence(&c, &kb).unwrap(),
        ["quilt lays on furniture crib"]
    );
}

#[test]
fn reasoner_examples() {
    let kb = fixture_kb();
    let desk = reasoner::ancestors("desk", &kb).unwrap();
    let expected: Vec<AncestorEntry> = [
        ("Desk", 0),
        ("Furniture", 1),
        ("PhysicalObject", 2),
        ("Thing", 3),
    ]
    .iter()
    .map(|(c, d)| AncestorEntry {
        class: c.to_string(),
        depth: *d,
    })
    .collect();
    assert_eq!(desk.entries(), expected.as_slice());
    assert_eq!(
        reasoner::match_view_with_individual("banana", &kb),
        Some("banana")
    );
    assert_eq!(reasoner::match_view_with_individual("unicorn", &kb), None);
    assert_eq!(
        reasoner::match_view_with_individual("desktop_computer", &kb),
        Some("desktop_computer")
    );
    assert!(reasoner::get_properties("ice_cream", &kb)
        .unwrap()
        .contains_key("is_edible"));
    assert!(reasoner::is_subclass("Primate", "Animal", &kb).unwrap());
    assert!(!reasoner::is_subclass("Furniture", "Animal", &kb).unwrap());
    let ox = reasoner::ancestors("ox", &kb).unwrap();
    let quilt = reasoner::ancestors("quilt", &kb).unwrap();
    assert_eq!(reasoner::lowest_level_ancestor(&ox, &quilt), None);
}

#[test]
fn outcome_kinds() {
    let kb = fixture_kb();
    let kind = |a: &str, b: &str| {
        let (v1, v2) = views(a, b);
        let o = classify_outcome(&v1, &v2, &kb);
        (o.kind, o.explained)
    };
    assert_eq!(kind("typewriter", "typewriter"), (OutcomeKind::Same, false));
    assert_eq!(kind("lion", "arctic fox"), (OutcomeKind::Disunited, false));
    assert_eq!(kind("quilt", "desk"), (OutcomeKind::Disunited, true));
    assert_eq!(
        kind("typewriter", "spider monkey"),
        (OutcomeKind::Unified, true)
    );
}

#[test]
fn converge_is_symmetric_on_fixture() {
    let kb = fixture_kb();
    let names: Vec<&str> = kb.individuals().keys().map(String::as_str).collect();
    for a in &names {
        for b in &names {
            let (v1, v2) = views(a, b);
            let ab = converge(&v1, &v2, &kb);
            let ba = converge(&v2, &v1, &kb);
            assert_eq!(ab.properties, ba.properties);
            assert_eq!(ab.is_empty(), ba.is_empty());
            let und = |c: &smf_core::converge::Convergence| -> BTreeSet<(String, String, String)> {
                c.relationships
                    .iter()
                    .map(|r| {
                        (
                            r.subject_individual.clone(),
                            r.predicate.clone(),
                            r.object_individual.clone(),
                        )
                    })
                    .collect()
            };
            assert_eq!(und(&ab), und(&ba));
        }
    }
}
