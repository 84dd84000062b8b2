//! Line-oriented execution trace.
//!
//! ```text
//! CYCLE 3
//! FIRE chunk-u7-c3(<g>=cyberpunk, <i>=<vA>, <s>=<s1>, <u>=<u1>)
//! PROPOSE select-item(item=<vA>) = 0.8
//! SELECT select-item(item=<vA>)
//! IMPASSE tie{select-item(item=<vA>), select-item(item=<vB>)}
//! WM+ (<s1> ^recommended <vA>)
//! WM- (<s1> ^candidate-item <vA>)
//! ```
//!
//! The agent adds QUERY, RESPONSE, CHUNK, FALLBACK and RECOMMEND lines.
//! Free text is kept on one line by escaping newlines as `\n`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::matcher::Binding;
use super::preference::{ImpasseKind, OperatorKey, PreferenceKind};
use crate::wm::{JournalEntry, JournalOp};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    enabled: bool,
    lines: Vec<String>,
}

/// Escapes newlines and backslashes so the text fits on one trace line.
pub fn escape_line(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

/// Inverse of [`escape_line`].
pub fn unescape_line(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace { enabled, lines: Vec::new() }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn take(&mut self) -> Vec<String> {
        core::mem::take(&mut self.lines)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    /// Appends `KIND text`, escaping the text.
    pub fn event(&mut self, kind: &str, text: &str) {
        if self.enabled {
            self.lines.push(format!("{} {}", kind, escape_line(text)));
        }
    }

    pub fn cycle(&mut self, n: u64) {
        if self.enabled {
            self.lines.push(format!("CYCLE {}", n));
        }
    }

    pub fn fire(&mut self, rule: &str, binding: &Binding) {
        if self.enabled {
            self.lines.push(format!("FIRE {}({})", rule, binding));
        }
    }

    pub fn propose(&mut self, op: &OperatorKey, pref: &PreferenceKind) {
        if self.enabled {
            self.lines.push(format!("PROPOSE {} {}", op, pref));
        }
    }

    pub fn select(&mut self, op: &OperatorKey) {
        if self.enabled {
            self.lines.push(format!("SELECT {}", op));
        }
    }

    pub fn impasse(&mut self, id: &str, kind: &ImpasseKind) {
        if self.enabled {
            self.lines.push(format!("IMPASSE {} {}", kind, id));
        }
    }

    pub fn deltas(&mut self, entries: &[JournalEntry]) {
        if self.enabled {
            for e in entries {
                let sign = match e.op {
                    JournalOp::Add => "WM+",
                    JournalOp::Remove => "WM-",
                };
                self.lines.push(format!("{} {}", sign, e.wme));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_round_trips() {
        let text = "line one\nline \\two\r";
        let e = escape_line(text);
        assert!(!e.contains('\n'));
        assert_eq!(unescape_line(&e), text);
    }

    #[test]
    fn disabled_trace_stays_empty() {
        let mut t = Trace::new(false);
        t.cycle(1);
        t.event("QUERY", "x");
        assert!(t.lines().is_empty());
    }
}
