mod common;

use common::{fixture_kb, fixture_text};
use smf_core::converge::View;
use smf_core::planner::{
    condition_from_views, parse_domain, plan, relationship_facts, validate_plan, Fact,
};

fn views(a: &str, b: &str) -> (View, View) {
    (
        View::new(a, "resnet").unwrap(),
        View::new(b, "alexnet").unwrap(),
    )
}

#[test]
fn table4_plan() {
    let problem = parse_domain(&fixture_text("table4.domain"))
        .unwrap()
        .merge(parse_domain(&fixture_text("table4.problem")).unwrap());
    let found = plan(&problem).unwrap().unwrap();
    assert_eq!(found.render(), "1 GOTO_P2_P1\n2 GRAB-TYPEWRITER_P2\n");
    assert!(validate_plan(&problem, &found));
}

#[test]
fn table3_conditions() {
    let kb = fixture_kb();
    let (a, b) = views("orangutan", "langur");
    assert_eq!(
        condition_from_views(&a, &b, "P1", &kb),
        Some(Fact::new("at", ["primate", "P1"]))
    );
    let (a, b) = views("typewriter", "typewriter");
    assert_eq!(
        condition_from_views(&a, &b, "P2", &kb),
        Some(Fact::new("at", ["typewriter", "P2"]))
    );
    let (a, b) = views("desk", "unicorn");
    assert_eq!(condition_from_views(&a, &b, "P3", &kb), None);

    let (a, b) = views("typewriter", "spider monkey");
    let goal = relationship_facts(&a, &b, &kb);
    assert_eq!(
        goal,
        [
            Fact::new("has", ["spider_monkey", "typewriter"]),
            Fact::new("has", ["primate", "typewriter"]),
            Fact::new("has", ["animal", "typewriter"]),
        ]
    );
}

#[test]
fn quilt_generalizes_to_bedding() {
    let kb = fixture_kb();
    let (a, b) = views("crib", "quilt");
    let facts = relationship_facts(&a, &b, &kb);
    assert!(facts.contains(&Fact::new("lays_on_furniture", ["bedding", "crib"])));
    assert_eq!(facts[0], Fact::new("lays_on_furniture", ["quilt", "crib"]));
}
