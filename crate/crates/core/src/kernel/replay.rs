//! Human-readable rendering of a recorded trace.

use similar::TextDiff;

use super::trace::{TraceEvent, TraceKind};

/// One line per event, with a unified diff under every source change.
pub fn render_replay(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.summary());
        out.push('\n');
        if e.action_kind != TraceKind::SelfUpdate {
            continue;
        }
        let unit = e.unit_touched.as_deref().unwrap_or("?");
        let before = e.source_before.as_deref().unwrap_or("");
        let after = e.source_after.as_deref().unwrap_or("");
        if e.error_text.is_some() {
            out.push_str("    (patch rejected; registry unchanged)\n");
        }
        let diff = TextDiff::from_lines(before, after);
        let text = diff
            .unified_diff()
            .context_radius(2)
            .header(&format!("a/{unit}"), &format!("b/{unit}"))
            .to_string();
        for line in text.lines() {
            out.push_str("    ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_shows_changed_lines() {
        let e = TraceEvent {
            step: 3,
            depth: 0,
            action_kind: TraceKind::SelfUpdate,
            unit_touched: Some("solver".into()),
            score_before: None,
            score_after: None,
            error_text: None,
            cost_delta: 0.0,
            timestamp: 3,
            version: 1,
            detail: None,
            source_before: Some("fn solver(a, t) {\n    cot(a, t)\n}\n".into()),
            source_after: Some("fn solver(a, t) {\n    search(t)\n}\n".into()),
        };
        let text = render_replay(&[e]);
        assert!(text.contains("-    cot(a, t)"), "{text}");
        assert!(text.contains("+    search(t)"), "{text}");
        assert!(text.contains("--- a/solver"));
    }
}
