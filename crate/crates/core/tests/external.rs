mod common;

use common::{chat_reply, home_in_request, stays_content, MockEndpoint};
use mobsim::generator::external::generate_external;
use mobsim::generator::{population, Backend, UserStatus};
use mobsim::guidance::{make_target, GuidanceConfig, GuidanceParams, SharedDataType};
use mobsim::optimizer::{Environment, PromptEnvironment};
use mobsim::strategist::external::build_action_space_external;
use mobsim::strategist::PromptRewriter;
use mobsim::strategist::rules::{analyze_gaps, build_action_space, StrategistConfig};
use mobsim::{GridSpec, PromptSet};

fn prompts(n: usize) -> PromptSet {
    PromptSet::new(5, population::default_prompts(n, 2, &GridSpec::default(), 3)).unwrap()
}

#[test]
fn every_user_gets_a_trajectory_from_a_healthy_endpoint() {
    let mock = MockEndpoint::start(|_, body| chat_reply(&stays_content(home_in_request(body))));
    let ps = prompts(4);
    let out = generate_external(&ps, &GridSpec::default(), &mock.config(2));
    assert!(out.all_ok());
    assert_eq!(out.results.len(), 4);
    for (u, r) in &out.results {
        let t = r.trajectory.as_ref().unwrap();
        assert_eq!(t.user_id.as_ref(), Some(u));
        assert_eq!(t.stays.len(), 6);
        assert_eq!(t.stays[3].start_slot, 48);
        assert_eq!(t.stays[0].cell, ps.prompts[u].params.home_cell);
    }
    assert_eq!(mock.hits(), 4);
}

#[test]
fn requests_carry_model_messages_and_token() {
    let mock = MockEndpoint::start(|_, body| chat_reply(&stays_content(home_in_request(body))));
    let ps = prompts(1);
    let out = Backend::External(mock.config(0)).generate(&ps, &GridSpec::default());
    assert!(out.all_ok());
    let body: serde_json::Value = serde_json::from_str(&mock.bodies()[0]).unwrap();
    assert_eq!(body["model"], "mock");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
    let doc = ps.prompts.values().next().unwrap();
    assert!(body["messages"][1]["content"].as_str().unwrap().contains(&doc.persona));
}

#[test]
fn malformed_replies_are_retried_until_valid() {
    let mock = MockEndpoint::start(|n, body| {
        if n < 2 {
            chat_reply("Sure! Here is the schedule you asked for.")
        } else {
            chat_reply(&stays_content(home_in_request(body)))
        }
    });
    let out = generate_external(&prompts(1), &GridSpec::default(), &mock.config(2));
    assert!(out.all_ok());
    assert_eq!(mock.hits(), 3);
}

#[test]
fn rate_limits_and_server_errors_are_retried() {
    let mock = MockEndpoint::start(|n, body| match n {
        0 => (429, "slow down".into()),
        1 => (503, "busy".into()),
        _ => chat_reply(&stays_content(home_in_request(body))),
    });
    let out = generate_external(&prompts(1), &GridSpec::default(), &mock.config(3));
    assert!(out.all_ok());
    assert_eq!(mock.hits(), 3);
}

#[test]
fn persistent_malformed_replies_end_as_parse_failure() {
    let mock = MockEndpoint::start(|_, _| chat_reply("[{\"day\": \"monday\"}]"));
    let out = generate_external(&prompts(1), &GridSpec::default(), &mock.config(2));
    let r = out.results.values().next().unwrap();
    assert!(matches!(r.status, UserStatus::ParseFailure(_)), "{:?}", r.status);
    assert!(r.trajectory.is_none());
    assert_eq!(mock.hits(), 3);
}

#[test]
fn persistent_server_errors_end_as_backend_error() {
    let mock = MockEndpoint::start(|_, _| (500, "down".into()));
    let out = generate_external(&prompts(2), &GridSpec::default(), &mock.config(1));
    assert_eq!(out.results.len(), 2);
    for r in out.results.values() {
        assert!(matches!(r.status, UserStatus::BackendError(_)), "{:?}", r.status);
    }
    assert_eq!(mock.hits(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = MockEndpoint::start(|_, _| (401, "no".into()));
    let out = generate_external(&prompts(1), &GridSpec::default(), &mock.config(3));
    assert!(matches!(out.results.values().next().unwrap().status, UserStatus::BackendError(_)));
    assert_eq!(mock.hits(), 1);
}

#[test]
fn one_failing_user_does_not_sink_the_batch() {
    let mock = MockEndpoint::start(|_, body| {
        let home = home_in_request(body);
        let first = population::default_prompts(3, 2, &GridSpec::default(), 3)[0].params.home_cell;
        if home == (first.x, first.y) {
            (500, "down".into())
        } else {
            chat_reply(&stays_content(home))
        }
    });
    let out = generate_external(&prompts(3), &GridSpec::default(), &mock.config(0));
    assert_eq!(out.failures().len(), 1);
    assert_eq!(out.trajectories().len(), 2);
}

const STRATEGY_REPLY: &str = "1. Population Diagnosis\nToo wide.\n\n\
2. Population Groups Table\n\
| Group Name | Range | Description | Target proportion % |\n\
|---|---|---|---|\n\
| Homebodies | < 2 km | Stay near home | 40 |\n\
| Locals | 2-10 km | Neighborhood routines | 40 |\n\
| Travelers | > 10 km | Long trips | 20 |\n\n\
3. Adjustment Strategy\n\
**Homebodies**: Stronger home/work anchors at night.\n\
**Locals**: Increasing routine or location stability.\n\
**Travelers**: Reducing excessive spatial dispersion.\n";

fn gap_fixture() -> (mobsim::strategist::rules::GapReport, StrategistConfig) {
    let g = GridSpec::default();
    let reference = Backend::Synthetic.generate(&prompts(30), &g).trajectories();
    let target = make_target(&reference, SharedDataType::Sd1, &g).unwrap();
    let cfg = GuidanceConfig::new(target, &GuidanceParams::default()).unwrap();
    let mut sim_ps = prompts(30);
    sim_ps.seed = 77;
    let sim = Backend::Synthetic.generate(&sim_ps, &g).trajectories();
    let sc = StrategistConfig::default();
    (analyze_gaps(&cfg, &sim, &g, &sc).unwrap(), sc)
}

#[test]
fn strategist_reads_groups_from_the_endpoint() {
    let mock = MockEndpoint::start(|_, _| chat_reply(STRATEGY_REPLY));
    let (gap, sc) = gap_fixture();
    let acts = build_action_space_external(&gap, &mock.config(0), &sc, &GridSpec::default());
    let radius: Vec<_> = acts.iter().filter(|a| a.measure_id == mobsim::guidance::MeasureId::Radius).collect();
    assert_eq!(radius.len(), 3);
    assert_eq!(radius[0].group.upper, Some(2000.0));
    assert!(radius[2].directive_text.contains("Reducing excessive spatial dispersion"));
    let ids: Vec<u32> = acts.iter().map(|a| a.id.0).collect();
    assert_eq!(ids, (0..acts.len() as u32).collect::<Vec<_>>());
}

#[test]
fn strategist_falls_back_to_rules_when_the_endpoint_fails() {
    let mock = MockEndpoint::start(|_, _| (500, "down".into()));
    let (gap, sc) = gap_fixture();
    let external = build_action_space_external(&gap, &mock.config(0), &sc, &GridSpec::default());
    let rules = build_action_space(&gap, &sc);
    let strip = |v: &[mobsim::strategist::AdjustmentAction]| {
        v.iter()
            .map(|a| (a.measure_id, a.group.clone(), a.param_deltas.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&external), strip(&rules));
}

/// Apply the first non-identity rule action to a 20-user root, rewriting
/// through `rewriter`; returns the root, the child and the directive.
fn rewritten_child(rewriter: PromptRewriter) -> (PromptSet, PromptSet, String) {
    let (gaps, sc) = gap_fixture();
    let action = build_action_space(&gaps, &sc).into_iter().find(|a| !a.is_identity()).unwrap();
    let grid = GridSpec::default();
    let root = PromptSet::new(5, population::default_prompts(20, 2, &grid, 11)).unwrap();
    let reference = Backend::Synthetic.generate(&root, &grid).trajectories();
    let target = make_target(&reference, SharedDataType::Sd1, &grid).unwrap();
    let cfg = GuidanceConfig::new(target, &GuidanceParams::default()).unwrap();
    let mut env = PromptEnvironment::new(root.clone(), grid, cfg, Backend::Synthetic, &[action.clone()], 100.0, 1)
        .unwrap()
        .with_rewriter(rewriter);
    let rid = env.root();
    let next = env.transition(&rid, action.id).unwrap();
    let child = env.prompts(&next).unwrap().as_ref().clone();
    (root, child, action.directive_text)
}

#[test]
fn rewriter_replaces_constraints_of_modified_users() {
    let mock = MockEndpoint::start(|_, _| chat_reply("```json\n[\"Keep trips short\", \"Return home at night\"]\n```"));
    let (root, child, directive) = rewritten_child(PromptRewriter::new(mock.config(0)));
    let modified: Vec<_> = root.prompts.keys().filter(|u| root.prompts[*u] != child.prompts[*u]).collect();
    assert!(!modified.is_empty());
    assert_eq!(mock.hits(), modified.len());
    for u in modified {
        assert_eq!(child.prompts[u].constraints, ["Keep trips short", "Return home at night"]);
    }
    let body: serde_json::Value = serde_json::from_str(&mock.bodies()[0]).unwrap();
    assert!(body["messages"][1]["content"].as_str().unwrap().contains(&directive));
}

#[test]
fn failed_rewrites_keep_the_appended_directive() {
    let mock = MockEndpoint::start(|n, _| if n % 2 == 0 { (400, "no".into()) } else { chat_reply("[\"Stay local\"]") });
    let (root, child, directive) = rewritten_child(PromptRewriter::new(mock.config(0)));
    let mut appended = 0;
    for (u, doc) in &child.prompts {
        let before = &root.prompts[u].constraints;
        if doc.constraints == ["Stay local"] {
            continue;
        }
        if doc.constraints.len() == before.len() + 1 {
            assert_eq!(doc.constraints.last(), Some(&directive));
            appended += 1;
        } else {
            assert_eq!(&doc.constraints, before);
        }
    }
    assert!(appended > 0);
}
