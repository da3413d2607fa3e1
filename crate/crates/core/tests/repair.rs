mod common;

use std::collections::BTreeSet;

use common::scenarios::{repair_with as run, rule, seeded, FIX_GET, FIX_ITEM, FIX_LIST, PRUNED_ALL, SEEDED};
use proptest::prelude::*;
use serde_json::json;
use speckernel::engine::{LlmClient, ScriptedBackend};
use speckernel::indexer::DefinitionDatabase;
use speckernel::repair::{match_errors, repair_spec, FixedTarget, RepairCtx};
use speckernel::syzlang::{parse_spec, render_spec, validate_with, ErrorCode, SpecFile, ValidateOptions};

fn errors(spec: &SpecFile) -> usize {
    validate_with(spec, &ValidateOptions::default()).len()
}

#[test]
fn seeded_spec_has_three_errors_on_three_targets() {
    let spec = seeded();
    let errs = validate_with(&spec, &ValidateOptions::default());
    let codes: BTreeSet<ErrorCode> = errs.iter().map(|e| e.code).collect();
    assert_eq!(errs.len(), 3);
    assert_eq!(
        codes,
        BTreeSet::from([
            ErrorCode::UnknownConstant,
            ErrorCode::NonConstantArrayLength,
            ErrorCode::IllegalRange
        ])
    );
    assert_eq!(match_errors(&spec, &errs).len(), 3);
}

#[test]
fn three_errors_on_two_targets_group_in_two() {
    let text = SEEDED
        .replace("array[x_item, count]", "array[x_item, 4]")
        .replace("\tid int32\n", "\tid int16[9:1]\n");
    let mut spec = parse_spec(&text).unwrap();
    spec.constants = seeded().constants;
    let errs = validate_with(&spec, &ValidateOptions::default());
    assert_eq!(errs.len(), 3, "{errs:?}");
    let m = match_errors(&spec, &errs);
    assert_eq!(
        m.keys().map(String::as_str).collect::<Vec<_>>(),
        ["ioctl$x_get", "x_item"]
    );
    assert_eq!(m["x_item"].len(), 2);
}

#[test]
fn scripted_fixes_converge() {
    let r = run(vec![
        rule("ioctl$x_get", &[FIX_GET]),
        rule("x_list", &[FIX_LIST]),
        rule("x_item", &[FIX_ITEM]),
    ]);
    assert_eq!(r.report.final_error_count, 0);
    assert_eq!(errors(&r.spec), 0);
    assert!(r.report.pruned.is_empty());
    let fixed: BTreeSet<&str> = r.report.fixed.iter().map(|f| f.target.as_str()).collect();
    assert_eq!(fixed, BTreeSet::from(["ioctl$x_get", "x_list", "x_item"]));
    assert!(r.report.fixed.iter().all(|f| f.rounds <= 3));
    assert_eq!(r.report.queries, 3);
    assert!(render_spec(&r.spec).contains(FIX_LIST));
}

#[test]
fn second_attempt_fix_takes_two_rounds() {
    let bad_item = "x_item {\n\tid int32\n\tlevel int8[0:999]\n}";
    let r = run(vec![
        rule("ioctl$x_get", &[FIX_GET]),
        rule("x_list", &[FIX_LIST]),
        rule("x_item", &[bad_item, FIX_ITEM]),
    ]);
    let item = r.report.fixed.iter().find(|f| f.target == "x_item").unwrap();
    assert_eq!(
        item,
        &FixedTarget {
            target: "x_item".into(),
            rounds: 2
        }
    );
    assert_eq!(r.report.final_error_count, 0);
}

#[test]
fn scripted_non_fixes_are_pruned() {
    let r = run(vec![
        rule(
            "ioctl$x_get",
            &["ioctl$x_get(fd fd_x, cmd const[X_STILL_NOPE], arg ptr[out, int32])"],
        ),
        rule(
            "x_list",
            &["x_list {\n\tcount int32\n\tdevices array[x_item, count]\n}"],
        ),
        rule("x_item", &["x_item {\n\tid int32\n\tlevel int8[0:300]\n}"]),
    ]);
    assert!(r.report.fixed.is_empty());
    let pruned: BTreeSet<&str> = r.report.pruned.iter().map(|p| p.target.as_str()).collect();
    assert_eq!(pruned, BTreeSet::from(["ioctl$x_get", "x_list", "x_item"]));
    assert_eq!(r.report.queries, 9);
    assert_eq!(render_spec(&r.spec), PRUNED_ALL);
    assert_eq!(errors(&r.spec), 0);
    for gone in ["ioctl$x_list(", "ioctl$x_set(", "x_item {"] {
        assert!(r.pruned_text.contains(gone), "{gone}");
    }
}

#[test]
fn unfixable_constant_alone_is_pruned() {
    let r = run(vec![
        rule(
            "ioctl$x_get",
            &["ioctl$x_get(fd fd_x, cmd const[X_NOPE], arg ptr[out, int32])"],
        ),
        rule("x_list", &[FIX_LIST]),
        rule("x_item", &[FIX_ITEM]),
    ]);
    assert_eq!(r.report.pruned.len(), 1);
    assert_eq!(r.report.pruned[0].target, "ioctl$x_get");
    assert_eq!(r.report.fixed.len(), 2);
    assert!(r.spec.syscall("ioctl$x_get").is_none());
    assert!(r.spec.syscall("ioctl$x_set").is_some());
    assert_eq!(errors(&r.spec), 0);
}

#[test]
fn malformed_replies_count_as_failed_rounds() {
    let script = json!({"rules": [{"stage": "repair", "response": "not json at all"}]}).to_string();
    let client = LlmClient::new(Box::new(ScriptedBackend::from_json(&script).unwrap()));
    let db = DefinitionDatabase::default();
    let ctx = RepairCtx::new(&client, &db, ValidateOptions::default());
    let r = repair_spec(&seeded(), &ctx).unwrap();
    assert_eq!(r.report.pruned.len(), 3);
    assert_eq!(errors(&r.spec), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any mix of fixing and non-fixing replies ends clean, and no target is
    /// both fixed and pruned.
    #[test]
    fn repair_postcondition(get_ok in any::<bool>(), list_ok in any::<bool>(), item_ok in 0u8..3) {
        let bad_get = "ioctl$x_get(fd fd_x, cmd const[X_NOPE], arg ptr[out, int32])";
        let bad_list = "x_list {\n\tcount int32\n\tdevices array[x_item, count]\n}";
        let bad_item = "x_item {\n\tid int32\n\tlevel int8[0:300]\n}";
        let item: Vec<&str> = match item_ok {
            0 => vec![bad_item],
            1 => vec![FIX_ITEM],
            _ => vec![bad_item, bad_item, FIX_ITEM],
        };
        let r = run(vec![
            rule("ioctl$x_get", &[if get_ok { FIX_GET } else { bad_get }]),
            rule("x_list", &[if list_ok { FIX_LIST } else { bad_list }]),
            rule("x_item", &item),
        ]);
        prop_assert_eq!(r.report.final_error_count, 0);
        prop_assert_eq!(errors(&r.spec), 0);
        let fixed: BTreeSet<_> = r.report.fixed.iter().map(|f| f.target.clone()).collect();
        let pruned: BTreeSet<_> = r.report.pruned.iter().map(|p| p.target.clone()).collect();
        prop_assert!(fixed.is_disjoint(&pruned));
        prop_assert!(r.report.fixed.iter().all(|f| f.rounds >= 1 && f.rounds <= 3));
        prop_assert_eq!(fixed.len() + pruned.len(), 3);
    }
}
