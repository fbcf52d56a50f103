//! Scenario parsing, name resolution and report contents.

use anh_core::attacks::{AttackConfig, AttackError, AttackKind};
use anh_core::scenario::{build_chain, run, RunOptions, Scenario, ScenarioError};
use anh_core::types::TokenAmount;

fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_json(text)
}

fn build(text: &str) -> Result<(), ScenarioError> {
    build_chain(&parse(text)?, None, None).map(|_| ())
}

#[test]
fn syntax_errors_carry_a_location() {
    match parse("{\n  \"seed\": 1,\n  oops\n}") {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse(r#"{"seed": 1, "genesis": {}, "surprise": true}"#),
        Err(ScenarioError::Parse { .. })
    ));
}

#[test]
fn names_and_labels_must_resolve() {
    let base = r#"{"seed": 1, "genesis": {"A": 5000}, "blocks": [[BODY]]}"#;
    let with = |body: &str| base.replace("BODY", body);
    let located = |body: &str, needle: &str| match build(&with(body)) {
        Err(ScenarioError::BadTx {
            block: 0,
            index: 0,
            msg,
        }) => assert!(msg.contains(needle), "{msg}"),
        other => panic!("{other:?}"),
    };
    located(
        r#"{"kind": "transfer", "from": "A", "to": "Z", "value": 1}"#,
        "unknown account `Z`",
    );
    located(
        r#"{"kind": "create", "from": "A", "contract": "nope"}"#,
        "nope",
    );
    assert!(matches!(
        build(&with(
            r#"{"label": "x", "kind": "transfer", "from": "A", "to": "A", "value": 1},
               {"label": "x", "kind": "transfer", "from": "A", "to": "A", "value": 1}"#
        )),
        Err(ScenarioError::DuplicateLabel(_))
    ));
    assert!(matches!(
        build(
            r#"{"seed": 1, "genesis": {"A": 1}, "contracts": {"c": "JUMP nowhere"}, "blocks": []}"#
        ),
        Err(ScenarioError::BadCode { .. })
    ));
}

#[test]
fn rejected_transactions_keep_their_labels() {
    let text = r#"{
        "seed": 1,
        "genesis": {"A": 5000},
        "accounts": ["B"],
        "blocks": [[{"label": "broke", "kind": "transfer", "from": "B", "to": "A", "value": 1}]],
        "queries": [{"query": {"transfer_succeeded": {"tx": "broke"}}}]
    }"#;
    let scenario = parse(text).unwrap();
    let chain = build_chain(&scenario, None, None).unwrap();
    assert_eq!(chain.blocks[0].rejected.len(), 1);
    assert!(chain.labels.tx("broke").is_ok());
    assert!(matches!(
        chain.labels.position("broke"),
        Err(ScenarioError::RejectedLabel(_))
    ));
    let report = run(&scenario, &RunOptions::default()).unwrap();
    assert!(report.queries[0].outcome.ok().is_none());
}

#[test]
fn scenarios_round_trip_through_json() {
    for scenario in anh_core::random::scenario_batch(3, 5, 40) {
        let again = Scenario::from_json(&scenario.to_json()).unwrap();
        assert_eq!(again.to_json(), scenario.to_json());
    }
}

#[test]
fn attack_configs_are_validated() {
    let config = |kind, burn, victim| AttackConfig {
        kind,
        count: 1,
        burn,
        victim,
        q: TokenAmount(1),
    };
    let someone = anh_core::keys::Keypair::named("v", 0).account();
    assert_eq!(config(AttackKind::TxDos, 0, None).validate(), Ok(()));
    assert_eq!(
        config(AttackKind::ExecDos, 0, None).validate(),
        Err(AttackError::ZeroBurn)
    );
    assert_eq!(
        config(AttackKind::TargetedExecDos, 5, None).validate(),
        Err(AttackError::VictimMismatch)
    );
    assert_eq!(
        config(AttackKind::ExecDos, 5, Some(someone)).validate(),
        Err(AttackError::VictimMismatch)
    );
    assert_eq!(
        config(AttackKind::TargetedExecDos, 5, Some(someone)).validate(),
        Ok(())
    );
}
