//! Renders a saved session trace as a numbered list of reasoning steps.

use cogrec_core::engine::unescape_line;

use crate::explain::SessionRecord;

fn first_line(text: &str) -> &str {
    text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
}

/// One step per notable trace event; cycles without one are skipped.
pub fn render(record: &SessionRecord) -> String {
    let mut out = format!("Session {} for user {}\n", record.session, record.user);
    let mut n = 0;
    let mut cycle = String::new();
    let mut step = |out: &mut String, cycle: &str, text: String| {
        n += 1;
        out.push_str(&format!("{n:>3}. [cycle {cycle}] {text}\n"));
    };
    for line in &record.trace {
        let (kind, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match kind {
            "CYCLE" => cycle = rest.to_string(),
            "FIRE" if rest.starts_with("chunk-") => step(&mut out, &cycle, format!("learned rule fires: {rest}")),
            "FIRE" if rest.starts_with("propose-candidates") => step(&mut out, &cycle, "perception: candidate generation proposed".into()),
            "SELECT" if !rest.starts_with("select-item") => step(&mut out, &cycle, format!("apply {rest}")),
            "IMPASSE" => {
                let (kind, id) = rest.rsplit_once(' ').unwrap_or((rest, ""));
                let label = kind.split('{').next().unwrap_or(kind);
                let options = kind.matches("select-item").count();
                step(&mut out, &cycle, format!("{label} impasse {id} among {options} operators"));
            }
            "QUERY" => {
                let q = unescape_line(rest);
                let n_candidates = q.lines().skip_while(|l| !l.starts_with("CANDIDATES:")).skip(1).take_while(|l| l.starts_with("- ")).count();
                step(&mut out, &cycle, format!("structured query to the model with {n_candidates} candidates"));
            }
            "RESPONSE" => {
                let r = unescape_line(rest);
                let pick = r.lines().find_map(|l| l.trim().strip_prefix("RECOMMEND:")).map(str::trim).unwrap_or("?");
                step(&mut out, &cycle, format!("model recommends {pick}: {}", first_line(&r)));
            }
            "REJECT" => step(&mut out, &cycle, format!("answer rejected: {}", unescape_line(rest))),
            "CHUNK" => step(&mut out, &cycle, format!("chunking: {}", unescape_line(rest))),
            "FALLBACK" => step(&mut out, &cycle, format!("fallback ranking: {}", unescape_line(rest))),
            "RECOMMEND" => step(&mut out, &cycle, format!("recommend #{}", unescape_line(rest))),
            _ => {}
        }
    }
    if let Some(top) = record.items.first() {
        out.push_str(&format!("Final recommendation: {} ({})\n", top.title, top.item));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::RecommendedItem;

    #[test]
    fn renders_the_notable_events() {
        let record = SessionRecord {
            session: "s".into(),
            user: "1".into(),
            items: vec![RecommendedItem { rank: 1, item: "6".into(), title: "Blade Runner 2049".into(), resolution: "model".into() }],
            impasses: 1,
            chunks_learned: 1,
            truncated: false,
            calls: vec![],
            trace: vec![
                "CYCLE 2".into(),
                "PROPOSE select-item(item=<v6>) +".into(),
                "IMPASSE tie{select-item(item=<v6>), select-item(item=<v7>)} s-c2".into(),
                "QUERY TASK: resolve-impasse\\nCANDIDATES:\\n- v6 \"A\"\\n- v7 \"B\"\\n\\nIMPASSE:".into(),
                "RESPONSE Cyberpunk wins.\\nRECOMMEND: v6\\nBECAUSE:\\n- item.genre = cyberpunk".into(),
                "CHUNK chunk-s-c2 added from impasse s-c2".into(),
                "FIRE chunk-s-c2(<i>=<v6>)".into(),
                "RECOMMEND 1 6 \"Blade Runner 2049\" via model".into(),
            ],
            explanations: vec![],
        };
        let text = render(&record);
        let expected = "Session s for user 1\n  1. [cycle 2] tie impasse s-c2 among 2 operators\n  2. [cycle 2] structured query to the model with 2 candidates\n  3. [cycle 2] model recommends v6: Cyberpunk wins.\n  4. [cycle 2] chunking: chunk-s-c2 added from impasse s-c2\n  5. [cycle 2] learned rule fires: chunk-s-c2(<i>=<v6>)\n  6. [cycle 2] recommend #1 6 \"Blade Runner 2049\" via model\nFinal recommendation: Blade Runner 2049 (6)\n";
        assert_eq!(text, expected);
    }
}
