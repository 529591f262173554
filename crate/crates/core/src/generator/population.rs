//! Seeded default population: a small categorical profile schema
//! (age band × occupation × home district) and matching generator knobs.

use rand::seq::SliceRandom;
use rand::Rng;

use super::GeneratorParams;
use crate::grid::{Cell, GridSpec};
use crate::rng;
use crate::types::{AttrValue, PromptDoc, UserId, UserProfile};

pub const AGE_BANDS: [&str; 5] = ["18-24", "25-34", "35-49", "50-64", "65+"];
pub const OCCUPATIONS: [&str; 5] = ["office", "service", "student", "retired", "field"];
/// District name and the home-area center in cell coordinates.
pub const DISTRICTS: [(&str, u32, u32); 4] = [
    ("north", 10_000, 10_040),
    ("south", 10_000, 9_960),
    ("east", 10_040, 10_000),
    ("west", 9_960, 10_000),
];
/// Half-width, in cells, of the square a district's homes are drawn from.
const DISTRICT_SPREAD: u32 = 12;

pub const BASE_TEXT: &str = "Simulate the daily movements of the person described below \
over the requested number of days. Report every stay as a grid cell with its start slot \
and duration.";

fn activity_for(occupation: &str) -> Vec<f64> {
    let mut a = vec![0.05; 24];
    let set = |a: &mut Vec<f64>, hours: std::ops::Range<usize>, w: f64| {
        for h in hours {
            a[h] = w;
        }
    };
    match occupation {
        "student" => {
            set(&mut a, 7..9, 0.8);
            set(&mut a, 9..15, 0.5);
            set(&mut a, 15..23, 1.0);
        }
        "retired" => {
            set(&mut a, 7..10, 0.5);
            set(&mut a, 10..17, 1.0);
            set(&mut a, 17..21, 0.4);
        }
        "service" => {
            set(&mut a, 6..10, 0.7);
            set(&mut a, 10..20, 1.0);
            set(&mut a, 20..23, 0.6);
        }
        _ => {
            set(&mut a, 6..7, 0.3);
            set(&mut a, 7..10, 1.0);
            set(&mut a, 10..17, 0.6);
            set(&mut a, 17..20, 1.0);
            set(&mut a, 20..23, 0.5);
        }
    }
    a
}

/// Default knobs for one occupation.
pub fn default_params_for(
    occupation: &str,
    home_cell: Cell,
    num_days: u32,
    _grid: &GridSpec,
) -> GeneratorParams {
    let (rho, kappa) = match occupation {
        "field" => (0.35, 400_000.0),
        "retired" => (0.25, 400_000.0),
        "student" => (0.33, 400_000.0),
        _ => (0.3, 400_000.0),
    };
    GeneratorParams {
        jump_beta: 1.75,
        jump_kappa_m: kappa,
        dur_beta: 0.8,
        dur_kappa_slots: 12.0,
        explore_rho: rho,
        explore_gamma: 0.21,
        home_bias: 0.8,
        home_cell,
        activity: activity_for(occupation),
        num_days,
    }
}

/// `n` profiles with ids `u0001`, `u0002`, ...
pub fn synthesize_profiles(n: usize, seed: u64) -> Vec<(UserProfile, Cell)> {
    (0..n)
        .map(|i| {
            let id = UserId(format!("u{:04}", i + 1));
            let mut r = rng::stream(seed, &format!("profile/{id}"));
            let age = *AGE_BANDS.choose(&mut r).expect("non-empty");
            let occ = *OCCUPATIONS.choose(&mut r).expect("non-empty");
            let &(district, cx, cy) = DISTRICTS.choose(&mut r).expect("non-empty");
            let s = DISTRICT_SPREAD;
            let home = Cell::new(
                r.gen_range(cx - s..=cx + s),
                r.gen_range(cy - s..=cy + s),
            );
            let profile = UserProfile {
                id,
                attributes: vec![
                    ("age_band".into(), AttrValue::Categorical(age.into())),
                    ("occupation".into(), AttrValue::Categorical(occ.into())),
                    ("district".into(), AttrValue::Categorical(district.into())),
                    ("home_x".into(), AttrValue::Numeric(home.x as f64)),
                    ("home_y".into(), AttrValue::Numeric(home.y as f64)),
                ],
            };
            (profile, home)
        })
        .collect()
}

fn persona(profile: &UserProfile) -> String {
    let get = |k: &str| profile.get(k).map(|v| v.to_string()).unwrap_or_default();
    format!(
        "A {} year old {} worker living in the {} district.",
        get("age_band"),
        get("occupation"),
        get("district")
    )
    .replace("student worker", "student")
    .replace("retired worker", "retiree")
}

/// Prompt for an existing profile, with defaults chosen from its occupation.
pub fn prompt_for(profile: UserProfile, home: Cell, num_days: u32, grid: &GridSpec) -> PromptDoc {
    let occ = profile
        .get("occupation")
        .map(|v| v.to_string())
        .unwrap_or_else(|| "office".into());
    PromptDoc {
        persona: persona(&profile),
        params: default_params_for(&occ, home, num_days, grid),
        profile,
        base_text: BASE_TEXT.into(),
        constraints: Vec::new(),
        revision: 0,
    }
}

/// Seeded default population of `n` prompts.
pub fn default_prompts(n: usize, num_days: u32, grid: &GridSpec, seed: u64) -> Vec<PromptDoc> {
    synthesize_profiles(n, seed)
        .into_iter()
        .map(|(p, home)| prompt_for(p, home, num_days, grid))
        .collect()
}

/// Home cell of a profile, from its `home_x` / `home_y` attributes.
pub fn home_of(profile: &UserProfile) -> Option<Cell> {
    let num = |k: &str| match profile.get(k) {
        Some(AttrValue::Numeric(v)) if *v >= 0.0 && v.fract() == 0.0 => Some(*v as u32),
        Some(AttrValue::Categorical(s)) => s.parse().ok(),
        _ => None,
    };
    Some(Cell::new(num("home_x")?, num("home_y")?))
}
