//! Extension of prompts optimized on a subset to a full population by
//! profile similarity.
//!
//! Profiles are encoded as one-hot categorical plus min-max scaled numeric
//! features (scales fitted on the full population) and compared by cosine
//! similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::population::home_of;
use crate::types::{AttrValue, PromptSet, UserId, UserProfile};

#[derive(Clone, Debug, PartialEq)]
enum Feature {
    Categorical(Vec<String>),
    Numeric { min: f64, max: f64 },
}

/// Fixed-schema profile encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEncoder {
    keys: Vec<String>,
    features: Vec<Feature>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileVector {
    pub user: UserId,
    pub v: Vec<f64>,
}

fn check_schema(keys: &[String], p: &UserProfile) -> Result<()> {
    let got: Vec<&str> = p.keys();
    if got.len() != keys.len() || got.iter().zip(keys).any(|(a, b)| *a != b) {
        return Err(Error::DimensionMismatch(format!(
            "profile {} has attributes {:?}, expected {:?}",
            p.id, got, keys
        )));
    }
    Ok(())
}

impl FeatureEncoder {
    /// Fit on a population; every profile must share the first profile's
    /// attribute keys, in order.
    pub fn fit(profiles: &[UserProfile]) -> Result<Self> {
        let first = profiles.first().ok_or(Error::EmptyInput("profiles"))?;
        let keys: Vec<String> = first.keys().into_iter().map(str::to_owned).collect();
        for p in profiles {
            check_schema(&keys, p)?;
        }
        let mut features = Vec::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            let numeric = profiles.iter().all(|p| matches!(p.attributes[i].1, AttrValue::Numeric(_)));
            if numeric {
                let vals = profiles.iter().map(|p| match p.attributes[i].1 {
                    AttrValue::Numeric(v) => v,
                    AttrValue::Categorical(_) => unreachable!(),
                });
                let (min, max) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                if !(min.is_finite() && max.is_finite()) {
                    return Err(Error::InvalidParams(format!("attribute {k} has non-finite values")));
                }
                features.push(Feature::Numeric { min, max });
            } else {
                let levels: BTreeSet<String> = profiles.iter().map(|p| p.attributes[i].1.to_string()).collect();
                features.push(Feature::Categorical(levels.into_iter().collect()));
            }
        }
        Ok(FeatureEncoder { keys, features })
    }

    pub fn dimension(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                Feature::Categorical(l) => l.len(),
                Feature::Numeric { .. } => 1,
            })
            .sum()
    }

    /// Unit-norm feature vector; zero vectors are rejected.
    pub fn encode(&self, p: &UserProfile) -> Result<ProfileVector> {
        check_schema(&self.keys, p)?;
        let mut v = Vec::with_capacity(self.dimension());
        for (f, (_, val)) in self.features.iter().zip(&p.attributes) {
            match f {
                Feature::Categorical(levels) => {
                    let s = val.to_string();
                    v.extend(levels.iter().map(|l| if *l == s { 1.0 } else { 0.0 }));
                }
                Feature::Numeric { min, max } => {
                    let x = match val {
                        AttrValue::Numeric(x) => *x,
                        AttrValue::Categorical(s) => s.parse().map_err(|_| {
                            Error::DimensionMismatch(format!("profile {}: {s:?} is not numeric", p.id))
                        })?,
                    };
                    v.push(if max > min { ((x - min) / (max - min)).clamp(0.0, 1.0) } else { 0.5 });
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParams(format!("profile {} encodes to a zero vector", p.id)));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(ProfileVector { user: p.id.clone(), v })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extension {
    pub prompts: PromptSet,
    /// Source (subset) user of every full-population user.
    pub assignment: BTreeMap<UserId, UserId>,
    pub m: usize,
    /// Users placed by the greedy pass, before remainder handling.
    pub greedy_assigned: usize,
}

/// Assign every full-population user one optimized prompt.
///
/// With `m = round(|full| / |subset|)`, subset prompts in descending
/// revision order (ties by id) each claim their `m` most similar
/// unassigned users (ties by user id); users left over take the prompt of
/// their most similar subset user.
pub fn extend(optimized: &PromptSet, full: &[UserProfile]) -> Result<Extension> {
    if optimized.is_empty() {
        return Err(Error::EmptyInput("optimized prompt set"));
    }
    let ids: BTreeSet<&UserId> = full.iter().map(|p| &p.id).collect();
    if ids.len() != full.len() {
        return Err(Error::InvalidParams("duplicate user ids in the full population".into()));
    }
    if let Some(u) = optimized.prompts.keys().find(|u| !ids.contains(u)) {
        return Err(Error::InvalidParams(format!("subset user {u} is not in the full population")));
    }
    let enc = FeatureEncoder::fit(full)?;
    let subset: Vec<ProfileVector> = optimized
        .prompts
        .values()
        .map(|d| enc.encode(&d.profile))
        .collect::<Result<_>>()?;
    let people: Vec<ProfileVector> = full.iter().map(|p| enc.encode(p)).collect::<Result<_>>()?;
    // sims[j][i]: subset prompt j vs full user i
    let sims: Vec<Vec<f64>> = subset
        .par_iter()
        .map(|s| people.iter().map(|p| dot(&s.v, &p.v)).collect())
        .collect();

    let m = ((full.len() as f64 / subset.len() as f64).round() as usize).max(1);
    let mut order: Vec<usize> = (0..subset.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = optimized.prompts[&subset[a].user].revision;
        let rb = optimized.prompts[&subset[b].user].revision;
        rb.cmp(&ra).then(subset[a].user.cmp(&subset[b].user))
    });
    let mut owner: Vec<Option<usize>> = vec![None; people.len()];
    for &j in &order {
        let mut free: Vec<usize> = (0..people.len()).filter(|i| owner[*i].is_none()).collect();
        free.sort_by(|&a, &b| sims[j][b].total_cmp(&sims[j][a]).then(people[a].user.cmp(&people[b].user)));
        for i in free.into_iter().take(m) {
            owner[i] = Some(j);
        }
    }
    let greedy_assigned = owner.iter().filter(|o| o.is_some()).count();
    for i in 0..people.len() {
        if owner[i].is_none() {
            let best = (0..subset.len())
                .max_by(|&a, &b| {
                    sims[a][i]
                        .total_cmp(&sims[b][i])
                        .then(subset[b].user.cmp(&subset[a].user))
                })
                .expect("subset non-empty");
            owner[i] = Some(best);
        }
    }

    let mut prompts = BTreeMap::new();
    let mut assignment = BTreeMap::new();
    for (i, p) in full.iter().enumerate() {
        let src = &subset[owner[i].expect("assigned")].user;
        let mut doc = optimized.prompts[src].clone();
        doc.profile = p.clone();
        if let Some(home) = home_of(p) {
            doc.params.home_cell = home;
        }
        prompts.insert(p.id.clone(), doc);
        assignment.insert(p.id.clone(), src.clone());
    }
    Ok(Extension {
        prompts: PromptSet {
            seed: optimized.seed,
            prompts,
        },
        assignment,
        m,
        greedy_assigned,
    })
}

/// Read `id,key1,key2,...` profiles. Cells that parse as numbers become
/// numeric attributes.
pub fn read_profiles_csv(path: &Path) -> Result<Vec<UserProfile>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::Parse {
            line: 1,
            msg: "profile header must start with `id`".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = UserId(rec.get(0).unwrap_or_default().to_owned());
        if id.0.is_empty() {
            return Err(Error::Parse {
                line: i + 2,
                msg: "empty id".into(),
            });
        }
        let attributes = headers
            .iter()
            .zip(rec.iter())
            .skip(1)
            .map(|(k, v)| {
                let val = match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => AttrValue::Numeric(x),
                    _ => AttrValue::Categorical(v.to_owned()),
                };
                (k.to_owned(), val)
            })
            .collect();
        out.push(UserProfile { id, attributes });
    }
    Ok(out)
}

pub fn write_profiles_csv(path: &Path, profiles: &[UserProfile]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    let keys: Vec<&str> = profiles.first().map(|p| p.keys()).unwrap_or_default();
    let mut header = vec!["id"];
    header.extend(keys.iter());
    w.write_record(&header)?;
    for p in profiles {
        let mut row = vec![p.id.0.clone()];
        row.extend(p.attributes.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
