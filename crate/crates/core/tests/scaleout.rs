mod common;

use std::collections::BTreeSet;

use mobsim::generator::population;
use mobsim::scaleout::{extend, read_profiles_csv, write_profiles_csv, FeatureEncoder};
use mobsim::{AttrValue, GridSpec, PromptSet, UserId, UserProfile};

fn population_of(n: usize) -> (Vec<UserProfile>, Vec<mobsim::PromptDoc>) {
    let docs = population::default_prompts(n, 2, &GridSpec::default(), 17);
    (docs.iter().map(|d| d.profile.clone()).collect(), docs)
}

#[test]
fn quarter_subset_covers_everyone_exactly_once() {
    let (full, docs) = population_of(1200);
    let subset: Vec<_> = docs.iter().step_by(4).cloned().collect();
    assert_eq!(subset.len(), 300);
    let ps = PromptSet::new(3, subset.clone()).unwrap();
    let ext = extend(&ps, &full).unwrap();
    assert_eq!(ext.m, 4);
    assert_eq!(ext.greedy_assigned, 1200);
    let keys: BTreeSet<&UserId> = ext.assignment.keys().collect();
    let ids: BTreeSet<&UserId> = full.iter().map(|p| &p.id).collect();
    assert_eq!(keys, ids);
    assert_eq!(ext.prompts.len(), 1200);
    let per_source = common::oracle::tally(ext.assignment.values().cloned());
    assert_eq!(per_source.len(), 300);
    assert!(per_source.values().all(|n| *n == 4));
    for (u, doc) in &ext.prompts.prompts {
        assert_eq!(&doc.profile.id, u);
        let src = &ps.prompts[&ext.assignment[u]];
        assert_eq!(doc.constraints, src.constraints);
        assert_eq!(doc.params.jump_kappa_m, src.params.jump_kappa_m);
        assert_eq!(Some(doc.params.home_cell), population::home_of(&doc.profile));
    }
}

#[test]
fn uneven_sizes_fall_back_to_best_match() {
    let (full, docs) = population_of(10);
    let ps = PromptSet::new(3, docs[..3].to_vec()).unwrap();
    let ext = extend(&ps, &full).unwrap();
    assert_eq!(ext.m, 3);
    assert_eq!(ext.greedy_assigned, 9);
    assert_eq!(ext.assignment.len(), 10);
    // the first prompt in line claims its own user, the most similar one
    assert_eq!(ext.assignment[&docs[0].profile.id], docs[0].profile.id);
}

#[test]
fn subset_users_must_belong_to_the_population() {
    let (full, docs) = population_of(5);
    let mut stranger = docs[0].clone();
    stranger.profile.id = UserId("nobody".into());
    let ps = PromptSet::new(3, vec![stranger]).unwrap();
    assert!(extend(&ps, &full).is_err());
    let mut dup = full.clone();
    dup.push(full[0].clone());
    assert!(extend(&PromptSet::new(3, docs[..1].to_vec()).unwrap(), &dup).is_err());
}

#[test]
fn encoder_mixes_one_hot_and_scaled_numbers() {
    let mk = |id: &str, occ: &str, x: f64| UserProfile {
        id: UserId(id.into()),
        attributes: vec![
            ("occupation".into(), AttrValue::Categorical(occ.into())),
            ("home_x".into(), AttrValue::Numeric(x)),
        ],
    };
    let ps = [mk("a", "office", 0.0), mk("b", "student", 10.0), mk("c", "office", 5.0)];
    let enc = FeatureEncoder::fit(&ps).unwrap();
    assert_eq!(enc.dimension(), 3);
    let v = enc.encode(&ps[2]).unwrap().v;
    let n = (1.0f64 + 0.25).sqrt();
    let want = [1.0 / n, 0.0, 0.5 / n];
    for (a, b) in v.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(enc.encode(&mk("d", "office", 0.0)).is_ok());
}

#[test]
fn profile_csv_round_trip() {
    let (full, _) = population_of(7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profiles.csv");
    write_profiles_csv(&path, &full).unwrap();
    assert_eq!(read_profiles_csv(&path).unwrap(), full);
}
