//! Optional per-user prompt rewriting through a chat-completion endpoint.
//!
//! By default a transition appends the action's directive to each selected
//! user's constraints. With a rewriter, the endpoint instead receives the
//! user's prompt and the directive and returns the full revised constraint
//! list. Users whose call fails keep the appended directive.

use crate::endpoint::{run_bounded, CallOutcome, ChatClient, EndpointConfig};
use crate::types::{PromptDoc, PromptSet, UserId};

pub const SYSTEM_PROMPT: &str = "You revise the behavioral constraints of one simulated person so \
that their generated mobility follows an adjustment directive. Keep constraints that still apply, \
merge or drop those the directive overrides, and keep each constraint to one sentence. Answer with \
a JSON array of strings only.";

pub fn render_request(doc: &PromptDoc, directive: &str) -> String {
    let current = if doc.constraints.is_empty() {
        "(none)".to_string()
    } else {
        doc.constraints.iter().map(|c| format!("- {c}\n")).collect()
    };
    format!(
        "PERSON\n{}\n\nCURRENT CONSTRAINTS\n{current}\nDIRECTIVE\n{directive}\n",
        doc.render()
    )
}

/// Parse a reply into a constraint list. Text around the array, such as a
/// code fence, is ignored.
pub fn parse_constraints(content: &str) -> Result<Vec<String>, String> {
    let start = content.find('[').ok_or("no JSON array in reply")?;
    let end = content.rfind(']').ok_or("no JSON array in reply")?;
    if end < start {
        return Err("no JSON array in reply".into());
    }
    let v: Vec<String> =
        serde_json::from_str(&content[start..=end]).map_err(|e| format!("bad constraint array: {e}"))?;
    let v: Vec<String> = v.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if v.is_empty() {
        return Err("empty constraint list".into());
    }
    Ok(v)
}

pub struct PromptRewriter {
    client: ChatClient,
}

impl PromptRewriter {
    pub fn new(cfg: EndpointConfig) -> Self {
        PromptRewriter {
            client: ChatClient::new(cfg),
        }
    }

    /// Replace the constraints of `users` in `ps` with the endpoint's
    /// revision of `base` under `directive`. Returns the users that kept the
    /// constraints already in `ps`.
    pub fn rewrite(&self, ps: &mut PromptSet, base: &PromptSet, users: &[UserId], directive: &str) -> Vec<UserId> {
        let limit = self.client.config().max_in_flight;
        let replies = run_bounded(users, limit, |u| {
            let doc = &base.prompts[u];
            self.client.call(SYSTEM_PROMPT, &render_request(doc, directive), parse_constraints)
        });
        let mut kept = Vec::new();
        for (u, reply) in users.iter().zip(replies) {
            match reply {
                CallOutcome::Ok(c) => {
                    ps.prompts.get_mut(u).expect("member of the prompt set").constraints = c;
                }
                CallOutcome::ParseFailure(e) | CallOutcome::BackendError(e) => {
                    log::warn!("rewrite for {u} failed, keeping the appended directive: {e}");
                    kept.push(u.clone());
                }
            }
        }
        kept
    }
}
