//! Action space proposed by a chat-completion endpoint.
//!
//! For every objective the endpoint receives a diagnosis request with the
//! simulated and target quantiles, and must answer with a markdown groups
//! table (`Group Name | Range | Description | Target proportion %`)
//! followed by one strategy per group. Strategy text is kept verbatim as
//! the directive; parameter changes are read off a fixed phrase table.
//! Objectives whose reply cannot be parsed fall back to the rule-based
//! actions.

use super::rules::{build_action_space, GapReport, ObjectiveGap, StrategistConfig, Summary};
use super::{ActionId, AdjustmentAction, GroupPredicate, ParamDelta};
use crate::endpoint::{CallOutcome, ChatClient, EndpointConfig};
use crate::generator::ParamField;
use crate::grid::GridSpec;
use crate::guidance::MeasureId;

/// Display unit of a measure in prompts and replies, with its size in
/// internal units.
fn unit(m: MeasureId, grid: &GridSpec) -> (&'static str, f64) {
    match m {
        MeasureId::Radius
        | MeasureId::TravelDistance
        | MeasureId::DistanceBeta
        | MeasureId::DistanceKappa => ("km", 1000.0),
        MeasureId::StayDuration | MeasureId::DurationBeta | MeasureId::DurationKappa => {
            ("hours", grid.slots_per_day as f64 / 24.0)
        }
        MeasureId::Zeta | MeasureId::ZetaTotal => ("", 1.0),
    }
}

fn describe(m: MeasureId) -> &'static str {
    match m {
        MeasureId::Radius => "Radius of gyration: the spatial extent of an individual's activity space.",
        MeasureId::TravelDistance | MeasureId::DistanceBeta | MeasureId::DistanceKappa => {
            "Travel distance: the length of each trip between consecutive locations."
        }
        MeasureId::StayDuration | MeasureId::DurationBeta | MeasureId::DurationKappa => {
            "Stay duration: how long an individual remains at each visited location."
        }
        MeasureId::Zeta | MeasureId::ZetaTotal => {
            "Visitation frequency exponent: how strongly visits concentrate on a few favourite locations."
        }
    }
}

fn fmt_summary(s: &Summary, scale: f64) -> String {
    match s {
        Summary::Quantiles { levels, values } => levels
            .iter()
            .zip(values)
            .map(|(u, v)| format!("p{:.0}={:.3}", u * 100.0, v / scale))
            .collect::<Vec<_>>()
            .join(", "),
        Summary::Scalar { value } => format!("{:.4}", value / scale),
    }
}

pub const SYSTEM_PROMPT: &str = "You are an expert in human mobility modeling, urban science and \
LLM-based synthetic population simulation. You interpret heavy-tailed spatial distributions and \
diagnose behavioral biases in synthetic mobility data.";

/// Diagnosis request for one objective.
pub fn render_prompt(o: &ObjectiveGap, sc: &StrategistConfig, grid: &GridSpec) -> String {
    let m = o.measure_id;
    let (u, scale) = unit(m, grid);
    let unit_note = if u.is_empty() { String::new() } else { format!(" (in {u})") };
    let sim = o
        .simulated
        .as_ref()
        .map(|s| fmt_summary(s, scale))
        .unwrap_or_else(|| "unavailable".into());
    format!(
        "BACKGROUND\n\
Simulated trajectories are produced from per-person prompts and compared with real mobility data. \
The goal is to make the simulation more realistic by adjusting persona design and behavioral rules.\n\n\
DEFINITION\n{desc}\n\n\
INPUT DATA{unit_note}\n\
Simulated: {sim}\n\
Target: {tgt}\n\
Gap notes:\n{notes}\n\n\
TASK 1 - Population-level diagnosis\n\
Briefly explain what the differences suggest about the simulated population's behavior.\n\n\
TASK 2 - Population groups\n\
Define {n} groups that partition individuals by {name}, from small to large. \
For each group give a name, a range with clear thresholds{unit_note}, a one-sentence description \
and a target proportion (%) for a realistic population.\n\n\
TASK 3 - Adjustment strategy\n\
For each group, give one concrete adjustment for the prompts of its members, for example \
stronger home/work anchors, reducing excessive spatial dispersion, increasing routine or location \
stability, or adjusting exploration probability.\n\n\
OUTPUT FORMAT\n\
1. Population Diagnosis\n\
2. Population Groups Table as markdown with columns: \
| Group Name | Range | Description | Target proportion % |\n\
3. Adjustment Strategy, one paragraph per group starting with the group name.\n",
        desc = describe(m),
        tgt = fmt_summary(&o.target, scale),
        notes = o.descriptors.iter().map(|d| format!("- {d}\n")).collect::<String>(),
        n = sc.groups,
        name = m.name().replace('_', " "),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedGroup {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub description: String,
    pub share: f64,
    pub strategy: Option<String>,
}

fn cells(line: &str) -> Vec<String> {
    line.trim()
        .trim_matches('|')
        .split('|')
        .map(|c| c.trim().trim_matches('*').trim().to_string())
        .collect()
}

fn numbers(s: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars().chain(std::iter::once(' ')) {
        if ch.is_ascii_digit() || (ch == '.' && !cur.is_empty()) {
            cur.push(ch);
        } else if ch == ',' && !cur.is_empty() {
            // thousands separator
        } else if !cur.is_empty() {
            if let Ok(v) = cur.trim_end_matches('.').parse() {
                out.push(v);
            }
            cur.clear();
        }
    }
    out
}

/// Parse a range cell like `2-10 km`, `< 2 km`, `>= 50 km`, `20+ km` into
/// internal units.
pub fn parse_range(s: &str, m: MeasureId, grid: &GridSpec) -> Option<(Option<f64>, Option<f64>)> {
    let t = s
        .to_lowercase()
        .replace(['–', '—', '~'], "-")
        .replace('≥', ">=")
        .replace('≤', "<=");
    let (_, default_scale) = unit(m, grid);
    let scale = if t.contains("km") {
        1000.0
    } else if t.contains("min") {
        grid.slots_per_day as f64 / 1440.0
    } else if t.contains('h') && default_scale != 1000.0 && default_scale != 1.0 {
        grid.slots_per_day as f64 / 24.0
    } else if t.contains("slot") {
        1.0
    } else if t.contains('m') && default_scale == 1000.0 {
        1.0
    } else {
        default_scale
    };
    let n: Vec<f64> = numbers(&t).into_iter().map(|v| v * scale).collect();
    let below = t.starts_with('<') || t.contains("under") || t.contains("below") || t.contains("less than");
    let above = t.starts_with('>')
        || t.trim_end_matches(|c: char| c.is_alphabetic() || c.is_whitespace()).ends_with('+')
        || t.contains("above")
        || t.contains("over")
        || t.contains("more than");
    match n.as_slice() {
        [a] if below => Some((None, Some(*a))),
        [a] if above => Some((Some(*a), None)),
        [a, b, ..] if a < b => Some((Some(*a), Some(*b))),
        _ => None,
    }
}

/// Parse the groups table and per-group strategies. Errors when no usable
/// table row exists.
pub fn parse_reply(reply: &str, m: MeasureId, grid: &GridSpec) -> Result<Vec<ParsedGroup>, String> {
    let lines: Vec<&str> = reply.lines().collect();
    let header = lines
        .iter()
        .position(|l| l.trim_start().starts_with('|') && l.to_lowercase().contains("group"))
        .ok_or("no groups table")?;
    let head = cells(lines[header]);
    let col = |keys: &[&str]| {
        head.iter()
            .position(|h| keys.iter().any(|k| h.to_lowercase().contains(k)))
    };
    let name_c = col(&["group"]).ok_or("no group column")?;
    let range_c = col(&["range"]).ok_or("no range column")?;
    let share_c = col(&["proportion", "share", "%"]).ok_or("no proportion column")?;
    let desc_c = col(&["descr"]);

    let mut groups = Vec::new();
    let mut end = header + 1;
    for (i, l) in lines.iter().enumerate().skip(header + 1) {
        let l = l.trim();
        if !l.starts_with('|') {
            end = i;
            break;
        }
        end = i + 1;
        let c = cells(l);
        if c.iter().all(|x| x.chars().all(|ch| matches!(ch, '-' | ':' | ' '))) {
            continue;
        }
        let get = |k: usize| c.get(k).cloned().unwrap_or_default();
        let Some((lower, upper)) = parse_range(&get(range_c), m, grid) else {
            continue;
        };
        let Some(share) = numbers(&get(share_c)).first().copied() else {
            continue;
        };
        groups.push(ParsedGroup {
            name: get(name_c),
            lower,
            upper,
            description: desc_c.map(get).unwrap_or_default(),
            share: share / 100.0,
            strategy: None,
        });
    }
    if groups.is_empty() {
        return Err("groups table has no parseable rows".into());
    }

    // strategy paragraphs: a block starts at a line naming a group
    let rest = &lines[end.min(lines.len())..];
    let mut current: Option<usize> = None;
    let mut texts: Vec<Vec<String>> = vec![Vec::new(); groups.len()];
    for l in rest {
        let low = l.to_lowercase();
        let hit = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.name.is_empty() && low.contains(&g.name.to_lowercase()))
            .max_by_key(|(_, g)| g.name.len())
            .map(|(i, _)| i);
        if let Some(i) = hit {
            current = Some(i);
        }
        if let Some(i) = current {
            let cleaned = l.trim().trim_start_matches(['#', '-', '*', ' ']).trim_end_matches('*').trim();
            if !cleaned.is_empty() {
                texts[i].push(cleaned.to_string());
            }
        }
    }
    for (g, t) in groups.iter_mut().zip(texts) {
        if !t.is_empty() {
            g.strategy = Some(t.join(" "));
        }
    }
    Ok(groups)
}

const RAISE_EXPLORATION: [&str; 6] = [
    "increase exploration",
    "increasing exploration",
    "increase the exploration",
    "higher exploration",
    "more exploration",
    "increase visits to new",
];

/// Parameter changes named by a strategy text.
pub fn infer_deltas(text: &str, step: f64) -> Vec<ParamDelta> {
    let t = text.to_lowercase();
    let mut out: Vec<ParamDelta> = Vec::new();
    let mut push = |field, factor| {
        if !out.iter().any(|d: &ParamDelta| d.field == field) {
            out.push(ParamDelta { field, factor });
        }
    };
    if t.contains("excessive spatial dispersion") {
        push(ParamField::JumpKappaM, 1.0 - step);
    }
    if t.contains("expanding the activity space") || t.contains("expand the activity space") {
        push(ParamField::JumpKappaM, 1.0 + step);
    }
    if t.contains("home/work anchor") || t.contains("stronger home") || t.contains("home anchor") {
        push(ParamField::HomeBias, 1.0 + step);
    }
    if t.contains("exploration probability") {
        let up = RAISE_EXPLORATION.iter().any(|p| t.contains(p));
        push(ParamField::ExploreRho, if up { 1.0 + step } else { 1.0 - step });
    }
    if t.contains("routine") || t.contains("location stability") {
        push(ParamField::ExploreRho, 1.0 - step);
    }
    out
}

fn actions_from(groups: Vec<ParsedGroup>, m: MeasureId, sc: &StrategistConfig) -> Vec<AdjustmentAction> {
    groups
        .into_iter()
        .map(|g| {
            let directive = g
                .strategy
                .clone()
                .filter(|s| !s.trim().is_empty())
                .unwrap_or_else(|| format!("{}: {}", g.name, g.description));
            AdjustmentAction {
                id: ActionId(0),
                measure_id: m,
                group: GroupPredicate { measure: m, lower: g.lower, upper: g.upper },
                param_deltas: infer_deltas(&directive, sc.step),
                directive_text: directive,
                target_share: g.share.clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Ask the endpoint for groups and strategies per objective, falling back
/// to the rule-based actions of any objective whose reply is unusable.
pub fn build_action_space_external(
    gap: &GapReport,
    endpoint: &EndpointConfig,
    sc: &StrategistConfig,
    grid: &GridSpec,
) -> Vec<AdjustmentAction> {
    let client = ChatClient::new(endpoint.clone());
    let mut out: Vec<AdjustmentAction> = Vec::new();
    for o in &gap.objectives {
        if o.skipped.is_some() {
            continue;
        }
        let m = o.measure_id;
        let reply = client.call(SYSTEM_PROMPT, &render_prompt(o, sc, grid), |c| {
            let groups = parse_reply(c, m, grid)?;
            let acts = actions_from(groups, m, sc);
            if acts.iter().any(|a| a.validate().is_err()) {
                return Err("reply defines an invalid group".to_string());
            }
            Ok(acts)
        });
        let acts = match reply {
            CallOutcome::Ok(a) => a,
            CallOutcome::ParseFailure(e) | CallOutcome::BackendError(e) => {
                log::warn!("strategy reply for {m} unusable ({e}); using rule-based actions");
                let single = GapReport { objectives: vec![o.clone()] };
                build_action_space(&single, sc)
            }
        };
        for a in acts {
            if out.iter().any(|b| b.measure_id == a.measure_id && b.group == a.group) {
                continue;
            }
            out.push(a);
        }
    }
    for (i, a) in out.iter_mut().enumerate() {
        a.id = ActionId(i as u32);
    }
    out
}
