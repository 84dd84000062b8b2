use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::lexer::{tokenize, Tok, Token};
use super::{validate, DslError};
use crate::production::{
    ActionPattern, AttrTerm, AttrTest, Condition, ConditionPattern, ConditionTest, IdTest, PreferenceSpec, Production,
    Provenance, RelOp,
};
use crate::symbol::{Atom, Identifier, SymbolValue, Variable};

/// Name given to blocks written without one.
pub const UNNAMED: &str = "unnamed";

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn new(src: &str) -> Result<Self, DslError> {
        let toks = tokenize(src)?;
        let eof = end_position(src);
        Ok(Parser { toks, pos: 0, eof })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn error(&self, expected: &str) -> DslError {
        let (line, col) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self.eof,
        };
        let found = match self.toks.get(self.pos) {
            Some(t) => t.tok.describe(),
            None => "end of input".to_string(),
        };
        DslError::Syntax { line, col, expected: format!("{}, found {}", expected, found) }
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), DslError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn is_symbol(&self, text: &str) -> bool {
        matches!(self.peek(), Some(Tok::Symbol(s)) if s == text)
    }

    fn block(&mut self) -> Result<Production, DslError> {
        if !self.is_symbol("sp") {
            return Err(self.error("'sp'"));
        }
        self.pos += 1;
        self.expect(&Tok::LBrace, "'{'")?;

        let starts_body = |t: Option<&Tok>| matches!(t, Some(Tok::LParen) | Some(Tok::Minus));
        let mut name = String::from(UNNAMED);
        let if_keyword = self.is_symbol("IF") && starts_body(self.peek_at(1));
        if !if_keyword {
            match self.peek() {
                Some(Tok::Symbol(s)) if !s.starts_with(':') => {
                    name = s.clone();
                    self.pos += 1;
                }
                Some(Tok::Str(s)) => {
                    name = s.clone();
                    self.pos += 1;
                }
                _ => {}
            }
        }

        let mut provenance = Provenance::Manual;
        let mut creation_cycle = 0;
        loop {
            let flag = match self.peek() {
                Some(Tok::Symbol(s)) if s.starts_with(':') => s.clone(),
                _ => break,
            };
            self.pos += 1;
            match flag.as_str() {
                ":bootstrap" => provenance = Provenance::Bootstrap,
                ":manual" => provenance = Provenance::Manual,
                ":chunk" => match self.next() {
                    Some(Tok::Symbol(s)) | Some(Tok::Str(s)) => provenance = Provenance::Chunked(s),
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("impasse id after ':chunk'"));
                    }
                },
                ":cycle" => match self.peek() {
                    Some(Tok::Number(n)) if *n >= 0.0 && libm::trunc(*n) == *n && *n <= u64::MAX as f64 => {
                        creation_cycle = *n as u64;
                        self.pos += 1;
                    }
                    _ => return Err(self.error("non-negative integer after ':cycle'")),
                },
                _ => {
                    self.pos -= 1;
                    return Err(self.error("one of :bootstrap, :manual, :chunk, :cycle"));
                }
            }
        }
        if self.is_symbol("IF") {
            self.pos += 1;
        }

        let mut conditions = Vec::new();
        while self.peek() != Some(&Tok::Arrow) {
            if self.at_end() {
                return Err(self.error("'-->'"));
            }
            self.condition(&mut conditions)?;
        }
        if conditions.is_empty() {
            return Err(self.error("at least one condition before '-->'"));
        }
        self.pos += 1;

        let mut actions = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if self.at_end() {
                return Err(self.error("'}'"));
            }
            self.action(&mut actions)?;
        }
        if actions.is_empty() {
            return Err(self.error("at least one action after '-->'"));
        }
        self.pos += 1;

        Ok(Production { name, conditions, actions, provenance, creation_cycle })
    }

    fn variable(&mut self, what: &str) -> Result<Variable, DslError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = Variable::new(v);
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.error(what)),
        }
    }

    fn attribute(&mut self) -> Result<AttrTest, DslError> {
        self.expect(&Tok::Caret, "'^'")?;
        match self.next() {
            Some(Tok::Symbol(s)) | Some(Tok::Str(s)) => Ok(AttrTest::Equals(Atom::from(s))),
            Some(Tok::Var(v)) => Ok(AttrTest::Bind(Variable::from(v))),
            _ => {
                self.pos -= 1;
                Err(self.error("attribute name or variable after '^'"))
            }
        }
    }

    fn constant(&mut self) -> Option<SymbolValue> {
        let v = match self.peek()? {
            Tok::Symbol(s) | Tok::Str(s) => SymbolValue::Atom(Atom::new(s)),
            Tok::Ident(i) => SymbolValue::Identifier(Identifier::new(i)),
            Tok::Number(n) => SymbolValue::Number(*n),
            _ => return None,
        };
        self.pos += 1;
        Some(v)
    }

    fn condition(&mut self, out: &mut Vec<Condition>) -> Result<(), DslError> {
        let negated = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        self.expect(&Tok::LParen, "'(' or '-->'")?;
        let mut state = false;
        if self.is_symbol("state") {
            state = true;
            self.pos += 1;
        }
        let id = match self.peek() {
            Some(Tok::Var(v)) => IdTest::Bind(Variable::new(v)),
            Some(Tok::Ident(i)) if !state => IdTest::Equals(Identifier::new(i)),
            _ => return Err(self.error("identifier variable or @identifier")),
        };
        self.pos += 1;

        let first = out.len();
        loop {
            let attr = self.attribute()?;
            let value = match self.peek() {
                Some(Tok::Var(v)) => {
                    let v = Variable::new(v);
                    self.pos += 1;
                    ConditionTest::VariableBind(v)
                }
                Some(Tok::LBrace) => {
                    self.pos += 1;
                    let op = match self.next() {
                        Some(Tok::Less) => RelOp::Less,
                        Some(Tok::LessEq) => RelOp::LessEq,
                        Some(Tok::Greater) => RelOp::Greater,
                        Some(Tok::GreaterEq) => RelOp::GreaterEq,
                        Some(Tok::NotEq) => RelOp::NotEq,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("relational operator"));
                        }
                    };
                    let n = match self.next() {
                        Some(Tok::Number(n)) => n,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("number"));
                        }
                    };
                    self.expect(&Tok::RBrace, "'}'")?;
                    ConditionTest::Relational(op, n)
                }
                _ => match self.constant() {
                    Some(c) => ConditionTest::Equals(c),
                    None => return Err(self.error("value test")),
                },
            };
            if negated && out.len() > first {
                return Err(self.error("')' (a negated condition tests one attribute)"));
            }
            out.push(Condition {
                negated,
                state: state && out.len() == first,
                pattern: ConditionPattern { id: id.clone(), attr, value },
            });
            match self.peek() {
                Some(Tok::RParen) => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(Tok::Caret) => {}
                _ => return Err(self.error("'^' or ')'")),
            }
        }
    }

    fn action(&mut self, out: &mut Vec<ActionPattern>) -> Result<(), DslError> {
        self.expect(&Tok::LParen, "'(' or '}'")?;
        let id = self.variable("variable at the start of an action")?;
        loop {
            let attr = match self.attribute()? {
                AttrTest::Bind(v) => AttrTerm::Var(v),
                AttrTest::Equals(a) => AttrTerm::Const(a),
            };
            let value = match self.peek() {
                Some(Tok::Var(v)) => {
                    let v = Variable::new(v);
                    self.pos += 1;
                    SymbolValue::Variable(v)
                }
                _ => match self.constant() {
                    Some(c) => c,
                    None => return Err(self.error("value")),
                },
            };
            let pref = match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    Some(PreferenceSpec::Acceptable)
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    Some(PreferenceSpec::Reject)
                }
                Some(Tok::Greater) => {
                    self.pos += 1;
                    Some(PreferenceSpec::Best)
                }
                Some(Tok::Equals) => {
                    self.pos += 1;
                    match self.next() {
                        Some(Tok::Number(n)) => Some(PreferenceSpec::Numeric(n)),
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("number after '='"));
                        }
                    }
                }
                _ => None,
            };
            let is_operator = attr == AttrTerm::Const(Atom::new("operator"));
            let action = match (is_operator, value, pref) {
                (true, SymbolValue::Variable(op), pref) => ActionPattern::ProposeOperator {
                    state: id.clone(),
                    op,
                    preference: pref.unwrap_or(PreferenceSpec::Acceptable),
                },
                (_, value, None) | (_, value, Some(PreferenceSpec::Acceptable)) => {
                    ActionPattern::MakeWme { id: id.clone(), attr, value }
                }
                (_, value, Some(PreferenceSpec::Reject)) => ActionPattern::RemoveWme { id: id.clone(), attr, value },
                (_, _, Some(_)) => {
                    return Err(self.error("'>' and '=' preferences only on ^operator <var>"));
                }
            };
            out.push(action);
            match self.peek() {
                Some(Tok::RParen) => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(Tok::Caret) => {}
                _ => return Err(self.error("'^', preference or ')'")),
            }
        }
    }
}

fn end_position(src: &str) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for c in src.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Parses and validates exactly one `sp { ... }` block.
pub fn parse_production(text: &str) -> Result<Production, DslError> {
    let mut p = Parser::new(text)?;
    let prod = p.block()?;
    if !p.at_end() {
        return Err(p.error("end of input after the rule"));
    }
    validate(&prod)?;
    Ok(prod)
}

/// Parses and validates every block in a rules file.
pub fn parse_rules(text: &str) -> Result<Vec<Production>, DslError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while !p.at_end() {
        let prod = p.block()?;
        validate(&prod)?;
        out.push(prod);
    }
    Ok(out)
}

fn wme_id(tok: Option<Tok>) -> Option<Identifier> {
    match tok? {
        Tok::Var(s) | Tok::Ident(s) | Tok::Symbol(s) => Some(Identifier::from(s)),
        _ => None,
    }
}

/// Parses working-memory literals such as `(<s1> ^user <u1>)`; one element
/// may list several `^attr value` pairs. Angle-bracketed names are identifiers.
pub fn parse_wmes(text: &str) -> Result<Vec<(Identifier, Atom, SymbolValue)>, DslError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while !p.at_end() {
        p.expect(&Tok::LParen, "'('")?;
        let id = match wme_id(p.next()) {
            Some(id) => id,
            None => {
                p.pos -= 1;
                return Err(p.error("identifier"));
            }
        };
        loop {
            let attr = match p.attribute()? {
                AttrTest::Equals(a) => a,
                AttrTest::Bind(_) => {
                    p.pos -= 1;
                    return Err(p.error("constant attribute"));
                }
            };
            let value = match p.next() {
                Some(Tok::Var(v)) | Some(Tok::Ident(v)) => SymbolValue::Identifier(Identifier::from(v)),
                Some(Tok::Symbol(s)) | Some(Tok::Str(s)) => SymbolValue::Atom(Atom::from(s)),
                Some(Tok::Number(n)) => SymbolValue::Number(n),
                _ => {
                    p.pos -= 1;
                    return Err(p.error("value"));
                }
            };
            out.push((id.clone(), attr, value));
            match p.next() {
                Some(Tok::RParen) => break,
                Some(Tok::Caret) => p.pos -= 1,
                _ => {
                    p.pos -= 1;
                    return Err(p.error("'^' or ')'"));
                }
            }
        }
    }
    Ok(out)
}

/// Parses a single working-memory literal.
pub fn parse_wme_literal(text: &str) -> Result<(Identifier, Atom, SymbolValue), DslError> {
    let mut all = parse_wmes(text)?;
    if all.len() != 1 {
        return Err(DslError::Syntax { line: 1, col: 1, expected: "exactly one (id ^attr value) element".into() });
    }
    Ok(all.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ValidationError;

    pub(crate) const P_NEW: &str = "sp {
   IF(< s > ^state-is-valid true)
     (< s > ^user < u >)
     (< u > ^preference ?g)
     (< s > ^candidate-item ?i)
     (?i ^genre ?g)
   -->
     (< s > ^operator < o > +)
     (< o > ^name select-item)
     (< o > ^item ?i)
}";

    #[test]
    fn parses_the_chunked_rule_listing() {
        let p = parse_production(P_NEW).unwrap();
        assert_eq!(p.conditions.len(), 5);
        assert_eq!(p.actions.len(), 3);
        assert_eq!(p.name, UNNAMED);
        let mut vars: Vec<&str> = Vec::new();
        for c in &p.conditions {
            if let IdTest::Bind(v) = &c.pattern.id {
                vars.push(v.as_str());
            }
            if let ConditionTest::VariableBind(v) = &c.pattern.value {
                vars.push(v.as_str());
            }
        }
        let ops = p.operator_templates();
        for t in &ops {
            vars.push(t.op.as_str());
        }
        vars.sort();
        vars.dedup();
        assert_eq!(vars, ["g", "i", "o", "s", "u"]);
        assert_eq!(
            p.actions[0],
            ActionPattern::ProposeOperator {
                state: Variable::new("s"),
                op: Variable::new("o"),
                preference: PreferenceSpec::Acceptable
            }
        );
    }

    #[test]
    fn minimal_rule() {
        let p = parse_production("sp { r1 (state <s> ^x 1) --> (<s> ^y 2) }").unwrap();
        assert_eq!(p.name, "r1");
        assert_eq!(p.conditions.len(), 1);
        assert!(p.conditions[0].state);
        assert_eq!(
            p.actions,
            [ActionPattern::MakeWme {
                id: Variable::new("s"),
                attr: AttrTerm::Const(Atom::new("y")),
                value: SymbolValue::Number(2.0)
            }]
        );
    }

    #[test]
    fn flags_and_relational_tests() {
        let p = parse_production(
            "sp { c1 :chunk imp-3 :cycle 12 (<s> ^score {>= 0.5}) -(<s> ^done yes) --> (<s> ^operator <o> = 0.8) (<o> ^name halt) }",
        )
        .unwrap();
        assert_eq!(p.provenance, Provenance::Chunked("imp-3".into()));
        assert_eq!(p.creation_cycle, 12);
        assert_eq!(p.conditions[0].pattern.value, ConditionTest::Relational(RelOp::GreaterEq, 0.5));
        assert!(p.conditions[1].negated);
    }

    #[test]
    fn multi_attribute_conditions_split() {
        let p = parse_production("sp { r (<s> ^a 1 ^b <x>) --> (<s> ^c <x> ^d 2) }").unwrap();
        assert_eq!(p.conditions.len(), 2);
        assert_eq!(p.actions.len(), 2);
    }

    #[test]
    fn negated_multi_attribute_is_rejected() {
        assert!(matches!(
            parse_production("sp { r (<s> ^a 1) -(<s> ^b 1 ^c 2) --> (<s> ^d 1) }"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_production("sp { r\n  (<s> ^a 1)\n  --> (<s> ^b) }") {
            Err(DslError::Syntax { line, col, .. }) => assert_eq!((line, col), (3, 14)),
            other => panic!("unexpected {:?}", other),
        }
        assert!(matches!(parse_production(""), Err(DslError::Syntax { line: 1, col: 1, .. })));
    }

    #[test]
    fn unbound_action_variable() {
        assert!(matches!(
            parse_production("sp { r (<s> ^a 1) --> (<x> ^b 1) }"),
            Err(DslError::Validation(ValidationError::UnboundVariable(_)))
        ));
    }

    #[test]
    fn wme_literals() {
        let w = parse_wmes("(<s1> ^user <u1>)\n(<u1> ^preference cyberpunk ^age 31)").unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].2, SymbolValue::id("u1"));
        assert_eq!(w[1].2, SymbolValue::atom("cyberpunk"));
        assert_eq!(w[2].2, SymbolValue::Number(31.0));
        assert!(parse_wme_literal("(<a> ^b c) (<a> ^b d)").is_err());
    }

    #[test]
    fn rules_file_with_comments() {
        let text = "# chunked from impasse i1 at cycle 3\nsp { a (<s> ^x 1) --> (<s> ^y 1) }\n\nsp { b (<s> ^x 2) --> (<s> ^y 2) }";
        assert_eq!(parse_rules(text).unwrap().len(), 2);
    }
}
