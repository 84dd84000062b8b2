use alloc::string::String;
use core::fmt::Write;

use crate::production::{ActionPattern, AttrTerm, AttrTest, ConditionTest, IdTest, PreferenceSpec, Production, Provenance};
use crate::symbol::{is_bare_symbol, write_atom, write_quoted, SymbolValue};

const INDENT: &str = "    ";

fn write_value(out: &mut String, v: &SymbolValue) {
    match v {
        SymbolValue::Identifier(id) => {
            out.push('@');
            if is_bare_symbol(id.as_str()) {
                out.push_str(id.as_str());
            } else {
                let _ = write_quoted(out, id.as_str());
            }
        }
        SymbolValue::Atom(a) => {
            let _ = write_atom(out, a.as_str());
        }
        SymbolValue::Number(n) => {
            let _ = write!(out, "{}", n);
        }
        SymbolValue::Variable(v) => {
            let _ = write!(out, "{}", v);
        }
    }
}

fn write_attr(out: &mut String, attr: &AttrTerm) {
    out.push('^');
    match attr {
        AttrTerm::Var(v) => {
            let _ = write!(out, "{}", v);
        }
        AttrTerm::Const(a) => {
            let _ = write_atom(out, a.as_str());
        }
    }
}

fn write_name(out: &mut String, name: &str) {
    let reserved = matches!(name, "IF" | "state" | "sp");
    if is_bare_symbol(name) && !reserved {
        out.push_str(name);
    } else {
        let _ = write_quoted(out, name);
    }
}

/// Canonical text: header line, one condition per line, `-->` on its own
/// line, one action per line. Output depends only on the production.
pub fn serialize_production(p: &Production) -> String {
    let mut out = String::from("sp { ");
    write_name(&mut out, &p.name);
    match &p.provenance {
        Provenance::Manual => {}
        Provenance::Bootstrap => out.push_str(" :bootstrap"),
        Provenance::Chunked(id) => {
            out.push_str(" :chunk ");
            let _ = write_atom(&mut out, id);
        }
    }
    if p.creation_cycle != 0 {
        let _ = write!(out, " :cycle {}", p.creation_cycle);
    }
    out.push('\n');

    for c in &p.conditions {
        out.push_str(INDENT);
        if c.negated {
            out.push('-');
        }
        out.push('(');
        if c.state {
            out.push_str("state ");
        }
        match &c.pattern.id {
            IdTest::Bind(v) => {
                let _ = write!(out, "{}", v);
            }
            IdTest::Equals(id) => write_value(&mut out, &SymbolValue::Identifier(id.clone())),
        }
        out.push(' ');
        match &c.pattern.attr {
            AttrTest::Bind(v) => write_attr(&mut out, &AttrTerm::Var(v.clone())),
            AttrTest::Equals(a) => write_attr(&mut out, &AttrTerm::Const(a.clone())),
        }
        out.push(' ');
        match &c.pattern.value {
            ConditionTest::Equals(v) => write_value(&mut out, v),
            ConditionTest::VariableBind(v) => {
                let _ = write!(out, "{}", v);
            }
            ConditionTest::Relational(op, n) => {
                let _ = write!(out, "{{ {} {} }}", op.symbol(), n);
            }
        }
        out.push_str(")\n");
    }

    out.push_str(INDENT);
    out.push_str("-->\n");

    for a in &p.actions {
        out.push_str(INDENT);
        match a {
            ActionPattern::MakeWme { id, attr, value } | ActionPattern::RemoveWme { id, attr, value } => {
                let _ = write!(out, "({} ", id);
                write_attr(&mut out, attr);
                out.push(' ');
                write_value(&mut out, value);
                if matches!(a, ActionPattern::RemoveWme { .. }) {
                    out.push_str(" -");
                }
                out.push_str(")\n");
            }
            ActionPattern::ProposeOperator { state, op, preference } => {
                let _ = write!(out, "({} ^operator {} ", state, op);
                match preference {
                    PreferenceSpec::Acceptable => out.push('+'),
                    PreferenceSpec::Reject => out.push('-'),
                    PreferenceSpec::Best => out.push('>'),
                    PreferenceSpec::Numeric(n) => {
                        let _ = write!(out, "= {}", n);
                    }
                }
                out.push_str(")\n");
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Serializes several productions separated by blank lines.
pub fn serialize_rules<'a>(rules: impl IntoIterator<Item = &'a Production>) -> String {
    let mut out = String::new();
    for (i, p) in rules.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&serialize_production(p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_production;

    #[test]
    fn arrow_on_its_own_line() {
        let p = parse_production(
            "sp { p-new (<s> ^state-is-valid true) (<s> ^user <u>) (<u> ^preference ?g) (<s> ^candidate-item ?i) (?i ^genre ?g) --> (<s> ^operator <o> +) (<o> ^name select-item) (<o> ^item ?i) }",
        )
        .unwrap();
        let text = serialize_production(&p);
        assert!(text.lines().any(|l| l.trim() == "-->"));
        assert_eq!(
            text,
            "sp { p-new\n    (<s> ^state-is-valid true)\n    (<s> ^user <u>)\n    (<u> ^preference <g>)\n    (<s> ^candidate-item <i>)\n    (<i> ^genre <g>)\n    -->\n    (<s> ^operator <o> +)\n    (<o> ^name select-item)\n    (<o> ^item <i>)\n}\n"
        );
        assert_eq!(serialize_production(&p), text);
        assert_eq!(parse_production(&text).unwrap(), p);
    }

    #[test]
    fn quoting_and_identifiers_round_trip() {
        let src = "sp { \"odd name\" :bootstrap :cycle 4 (<s> ^title |Blade Runner 2049|) (<s> ^item @vA) (<s> ^n {<> -0.5}) --> (<s> ^seen \"x y\" -) }";
        let p = parse_production(src).unwrap();
        let text = serialize_production(&p);
        assert_eq!(parse_production(&text).unwrap(), p);
    }
}
