//! The closed IF-THEN grammar that bootstrap prompts ask the model to use.
//!
//! ```text
//! line     := "IF" clause ("AND" clause)* "THEN" consequent
//! clause   := "user" "LIKES" atom
//!           | "user" "LIKES-ITEM" title
//!           | "item" "HAS" attr atom
//! consequent := "RECOMMEND-GENRE" atom          (or RECOMMEND-<attr> for any schema attribute)
//!             | "RECOMMEND-ITEM" title
//!             | "PROPOSE" op-name (attr "=" value)*
//! ```
//!
//! Keywords are case-insensitive. Leading list markers (`-`, `*`, `1.`)
//! are ignored, as are blank lines and lines starting with `#` or `---`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{validate, DslError};
use crate::production::{
    ActionPattern, AttrTerm, AttrTest, Condition, ConditionPattern, ConditionTest, IdTest, PreferenceSpec, Production,
    Provenance,
};
use crate::schema::DomainSchema;
use crate::symbol::{Atom, SymbolValue, Variable};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IfThenOutcome {
    pub productions: Vec<Production>,
    pub rejected: Vec<RejectedLine>,
}

#[derive(Clone, Debug, PartialEq)]
enum Word {
    Bare(String),
    Quoted(String),
}

impl Word {
    fn text(&self) -> &str {
        match self {
            Word::Bare(s) | Word::Quoted(s) => s,
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Word::Bare(s) if s.eq_ignore_ascii_case(kw))
    }
}

fn closing_quote(open: char) -> Option<char> {
    match open {
        '"' => Some('"'),
        '\'' => Some('\''),
        '\u{2018}' => Some('\u{2019}'),
        '\u{201C}' => Some('\u{201D}'),
        _ => None,
    }
}

fn words(line: &str) -> Result<Vec<Word>, String> {
    let mut out = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() || c == ',' {
            chars.next();
            continue;
        }
        if let Some(close) = closing_quote(c) {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            for (_, c) in chars.by_ref() {
                if c == close {
                    closed = true;
                    break;
                }
                s.push(c);
            }
            if !closed {
                return Err(format!("unterminated quote at byte {}", start));
            }
            out.push(Word::Quoted(s));
            continue;
        }
        if c == '=' {
            chars.next();
            out.push(Word::Bare("=".into()));
            continue;
        }
        let mut s = String::new();
        while let Some(&(_, c)) = chars.peek() {
            if c.is_whitespace() || c == '=' || c == ',' || closing_quote(c).is_some() && s.is_empty() {
                break;
            }
            s.push(c);
            chars.next();
        }
        let trimmed = s.trim_end_matches(['.', ';']);
        out.push(Word::Bare(trimmed.to_string()));
    }
    Ok(out)
}

fn strip_marker(line: &str) -> &str {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")).or_else(|| t.strip_prefix("\u{2022} ")) {
        return rest.trim_start();
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    t
}

/// Variables used by the generated conditions.
struct Builder<'s> {
    schema: &'s DomainSchema,
    conditions: Vec<Condition>,
    user_linked: bool,
    item_linked: bool,
    history: usize,
}

fn var(name: &str) -> Variable {
    Variable::new(name)
}

fn cond(id: &str, attr: &str, value: ConditionTest) -> Condition {
    Condition::positive(ConditionPattern {
        id: IdTest::Bind(var(id)),
        attr: AttrTest::Equals(Atom::new(attr)),
        value,
    })
}

fn bind(name: &str) -> ConditionTest {
    ConditionTest::VariableBind(var(name))
}

fn atom(text: &str) -> ConditionTest {
    ConditionTest::Equals(SymbolValue::atom(text))
}

impl<'s> Builder<'s> {
    fn new(schema: &'s DomainSchema) -> Self {
        Builder {
            schema,
            conditions: alloc::vec![cond("s", "state-is-valid", atom("true"))],
            user_linked: false,
            item_linked: false,
            history: 0,
        }
    }

    fn link_user(&mut self) {
        if !self.user_linked {
            self.conditions.push(cond("s", "user", bind("u")));
            self.user_linked = true;
        }
    }

    fn link_item(&mut self) {
        if !self.item_linked {
            self.conditions.push(cond("s", "candidate-item", bind("i")));
            self.item_linked = true;
        }
    }

    fn value_attribute(&self, value: &str) -> Result<Atom, String> {
        self.schema
            .attribute_of(value)
            .cloned()
            .ok_or_else(|| format!("'{}' is not a value of any schema attribute", value))
    }

    fn clause(&mut self, w: &[Word]) -> Result<(), String> {
        match w {
            [subj, kw, value] if subj.is_keyword("user") && kw.is_keyword("LIKES") => {
                let attr = self.value_attribute(value.text())?;
                self.link_user();
                let likes = format!("likes-{}", attr);
                self.conditions.push(cond("u", &likes, atom(value.text())));
                Ok(())
            }
            [subj, kw, title] if subj.is_keyword("user") && kw.is_keyword("LIKES-ITEM") => {
                self.link_user();
                if self.history == 0 {
                    self.conditions.push(cond("u", "history", bind("h")));
                }
                self.history += 1;
                let seen = format!("seen{}", self.history);
                self.conditions.push(cond("h", "item", bind(&seen)));
                self.conditions.push(cond(&seen, "title", atom(title.text())));
                Ok(())
            }
            [subj, kw, attr, value] if subj.is_keyword("item") && kw.is_keyword("HAS") => {
                if !self.schema.contains(attr.text(), value.text()) {
                    return Err(format!("'{} {}' is not in the schema", attr.text(), value.text()));
                }
                self.link_item();
                self.conditions.push(cond("i", attr.text(), atom(value.text())));
                Ok(())
            }
            _ => Err(format!("unrecognized clause '{}'", join(w))),
        }
    }

    fn propose(&mut self, op_name: &str, params: Vec<(AttrTerm, SymbolValue)>) -> Vec<ActionPattern> {
        let mut actions = alloc::vec![
            ActionPattern::ProposeOperator { state: var("s"), op: var("o"), preference: PreferenceSpec::Acceptable },
            ActionPattern::MakeWme {
                id: var("o"),
                attr: AttrTerm::Const(Atom::new("name")),
                value: SymbolValue::atom(op_name),
            },
        ];
        for (attr, value) in params {
            actions.push(ActionPattern::MakeWme { id: var("o"), attr, value });
        }
        actions
    }

    fn select_item(&mut self) -> Vec<ActionPattern> {
        self.link_item();
        self.propose("select-item", alloc::vec![(AttrTerm::Const(Atom::new("item")), SymbolValue::var("i"))])
    }

    fn consequent(&mut self, w: &[Word]) -> Result<Vec<ActionPattern>, String> {
        let Some(head) = w.first() else { return Err("missing consequent after THEN".into()) };
        let Word::Bare(kw) = head else { return Err("consequent must start with a keyword".into()) };
        let upper = kw.to_ascii_uppercase();
        if upper == "RECOMMEND-ITEM" {
            let [_, title] = w else { return Err("RECOMMEND-ITEM takes one title".into()) };
            self.link_item();
            self.conditions.push(cond("i", "title", atom(title.text())));
            return Ok(self.select_item());
        }
        if upper == "PROPOSE" {
            let Some(name) = w.get(1) else { return Err("PROPOSE needs an operator name".into()) };
            let mut params = Vec::new();
            let mut rest = &w[2..];
            while !rest.is_empty() {
                let [attr, eq, value, tail @ ..] = rest else {
                    return Err("PROPOSE parameters must be attr = value".into());
                };
                if !eq.is_keyword("=") {
                    return Err("PROPOSE parameters must be attr = value".into());
                }
                let v = if value.is_keyword("item") {
                    self.link_item();
                    SymbolValue::var("i")
                } else {
                    SymbolValue::atom(value.text())
                };
                params.push((AttrTerm::Const(Atom::new(attr.text())), v));
                rest = tail;
            }
            return Ok(self.propose(name.text(), params));
        }
        if let Some(attr) = upper.strip_prefix("RECOMMEND-") {
            let attr = attr.to_ascii_lowercase();
            if !self.schema.has_attribute(&attr) {
                return Err(format!("'{}' is not a schema attribute", attr));
            }
            let [_, value] = w else { return Err(format!("{} takes one value", kw)) };
            if !self.schema.contains(&attr, value.text()) {
                return Err(format!("'{}' is not a {} value", value.text(), attr));
            }
            self.link_item();
            self.conditions.push(cond("i", &attr, atom(value.text())));
            return Ok(self.select_item());
        }
        Err(format!("unknown consequent '{}'", kw))
    }
}

fn join(w: &[Word]) -> String {
    let parts: Vec<&str> = w.iter().map(Word::text).collect();
    parts.join(" ")
}

fn parse_line(line: &str, schema: &DomainSchema) -> Result<Production, String> {
    let w = words(line)?;
    if !w.first().is_some_and(|x| x.is_keyword("IF")) {
        return Err("line does not start with IF".into());
    }
    let then = w.iter().position(|x| x.is_keyword("THEN")).ok_or("missing THEN")?;
    let antecedent = &w[1..then];
    if antecedent.is_empty() {
        return Err("no clause between IF and THEN".into());
    }
    let mut b = Builder::new(schema);
    for clause in antecedent.split(|x| x.is_keyword("AND")) {
        b.clause(clause)?;
    }
    let actions = b.consequent(&w[then + 1..])?;
    let mut p = Production::new("if-then", b.conditions, actions);
    p.provenance = Provenance::Bootstrap;
    dedup_conditions(&mut p);
    validate(&p).map_err(|e| e.to_string())?;
    Ok(p)
}

fn dedup_conditions(p: &mut Production) {
    let mut seen: Vec<Condition> = Vec::new();
    p.conditions.retain(|c| {
        if seen.contains(c) {
            false
        } else {
            seen.push(c.clone());
            true
        }
    });
}

/// Parses a model response in the IF-THEN grammar. Productions are named
/// `if-then-<n>` in acceptance order; callers usually rename them.
pub fn parse_if_then_rules(text: &str, schema: &DomainSchema) -> Result<IfThenOutcome, DslError> {
    let mut out = IfThenOutcome::default();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_marker(raw);
        if line.is_empty() || line.starts_with('#') || line.starts_with("---") {
            continue;
        }
        match parse_line(line, schema) {
            Ok(mut p) => {
                p.name = format!("if-then-{}", out.productions.len() + 1);
                out.productions.push(p);
            }
            Err(reason) => out.rejected.push(RejectedLine { line: i + 1, text: raw.to_string(), reason }),
        }
    }
    if out.productions.is_empty() && !out.rejected.is_empty() {
        return Err(DslError::AllLinesRejected { rejected: out.rejected });
    }
    Ok(out)
}
