//! Production rules: conditions over working memory, actions that change it
//! or propose operators.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::symbol::{Atom, Identifier, SymbolValue, Variable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelOp {
    Less,
    LessEq,
    Greater,
    GreaterEq,
    NotEq,
}

impl RelOp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            RelOp::Less => lhs < rhs,
            RelOp::LessEq => lhs <= rhs,
            RelOp::Greater => lhs > rhs,
            RelOp::GreaterEq => lhs >= rhs,
            RelOp::NotEq => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Less => "<",
            RelOp::LessEq => "<=",
            RelOp::Greater => ">",
            RelOp::GreaterEq => ">=",
            RelOp::NotEq => "<>",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum IdTest {
    Bind(Variable),
    Equals(Identifier),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttrTest {
    Bind(Variable),
    Equals(Atom),
}

/// Test applied to the value slot of a condition.
#[derive(Clone, Debug)]
pub enum ConditionTest {
    /// Matches a constant (never a variable).
    Equals(SymbolValue),
    VariableBind(Variable),
    /// Only Number-valued elements can satisfy a relational test.
    Relational(RelOp, f64),
}

impl PartialEq for ConditionTest {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ConditionTest::Equals(a), ConditionTest::Equals(b)) => a == b,
            (ConditionTest::VariableBind(a), ConditionTest::VariableBind(b)) => a == b,
            (ConditionTest::Relational(o1, n1), ConditionTest::Relational(o2, n2)) => {
                o1 == o2 && n1.to_bits() == n2.to_bits()
            }
            _ => false,
        }
    }
}

impl Eq for ConditionTest {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionPattern {
    pub id: IdTest,
    pub attr: AttrTest,
    pub value: ConditionTest,
}

/// One condition; `negated` conditions succeed when no element matches.
///
/// `state` records whether the text used the `(state <s> ...)` keyword; it
/// has no effect on matching.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condition {
    pub negated: bool,
    pub state: bool,
    pub pattern: ConditionPattern,
}

impl Condition {
    pub fn positive(pattern: ConditionPattern) -> Self {
        Condition { negated: false, state: false, pattern }
    }

    pub fn negative(pattern: ConditionPattern) -> Self {
        Condition { negated: true, state: false, pattern }
    }
}

/// Preference attached to an `^operator` action.
#[derive(Clone, Debug)]
pub enum PreferenceSpec {
    /// `+`
    Acceptable,
    /// `-`
    Reject,
    /// `>`: better than every other candidate in the same cycle.
    Best,
    /// `= n`
    Numeric(f64),
}

impl PartialEq for PreferenceSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PreferenceSpec::Numeric(a), PreferenceSpec::Numeric(b)) => a.to_bits() == b.to_bits(),
            (a, b) => core::mem::discriminant(a) == core::mem::discriminant(b),
        }
    }
}

impl Eq for PreferenceSpec {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionPattern {
    MakeWme { id: Variable, attr: AttrTerm, value: SymbolValue },
    /// `(<id> ^attr value -)`: retract the element if present.
    RemoveWme { id: Variable, attr: AttrTerm, value: SymbolValue },
    /// `(<s> ^operator <o> pref)`; the operator's `^name` and parameters are
    /// the `MakeWme` actions whose id is `op`.
    ProposeOperator { state: Variable, op: Variable, preference: PreferenceSpec },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttrTerm {
    Var(Variable),
    Const(Atom),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Manual,
    Bootstrap,
    Chunked(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Manual => f.write_str("manual"),
            Provenance::Bootstrap => f.write_str("bootstrap"),
            Provenance::Chunked(impasse) => write!(f, "chunked({})", impasse),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub name: String,
    pub conditions: Vec<Condition>,
    pub actions: Vec<ActionPattern>,
    pub provenance: Provenance,
    pub creation_cycle: u64,
}

/// An operator as assembled from one `ProposeOperator` action and its
/// `^name`/parameter actions.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTemplate {
    pub op: Variable,
    pub name: SymbolValue,
    pub params: Vec<(AttrTerm, SymbolValue)>,
    pub preference: PreferenceSpec,
}

impl Production {
    pub fn new(name: &str, conditions: Vec<Condition>, actions: Vec<ActionPattern>) -> Self {
        Production {
            name: String::from(name),
            conditions,
            actions,
            provenance: Provenance::Manual,
            creation_cycle: 0,
        }
    }

    /// The variable tested by the first condition.
    pub fn root_variable(&self) -> Option<&Variable> {
        match self.conditions.first().map(|c| &c.pattern.id) {
            Some(IdTest::Bind(v)) => Some(v),
            _ => None,
        }
    }

    /// Apply rules test `(<root> ^operator <o>)`; they only fire while an
    /// operator is selected.
    pub fn is_apply_rule(&self) -> bool {
        let Some(root) = self.root_variable() else { return false };
        self.conditions.iter().any(|c| {
            !c.negated
                && c.pattern.id == IdTest::Bind(root.clone())
                && c.pattern.attr == AttrTest::Equals(Atom::new("operator"))
        })
    }

    pub fn operator_variables(&self) -> Vec<&Variable> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                ActionPattern::ProposeOperator { op, .. } => Some(op),
                _ => None,
            })
            .collect()
    }

    /// Groups each operator proposal with its name and parameters.
    pub fn operator_templates(&self) -> Vec<OperatorTemplate> {
        let mut out = Vec::new();
        for action in &self.actions {
            if let ActionPattern::ProposeOperator { op, preference, .. } = action {
                let mut name = None;
                let mut params = Vec::new();
                for other in &self.actions {
                    if let ActionPattern::MakeWme { id, attr, value } = other {
                        if id == op {
                            if *attr == AttrTerm::Const(Atom::new("name")) && name.is_none() {
                                name = Some(value.clone());
                            } else {
                                params.push((attr.clone(), value.clone()));
                            }
                        }
                    }
                }
                if let Some(name) = name {
                    out.push(OperatorTemplate {
                        op: op.clone(),
                        name,
                        params,
                        preference: preference.clone(),
                    });
                }
            }
        }
        out
    }

    /// Constant attributes tested by positive conditions.
    pub fn tested_attributes(&self) -> Vec<&Atom> {
        let mut attrs: Vec<&Atom> = self
            .conditions
            .iter()
            .filter(|c| !c.negated)
            .filter_map(|c| match &c.pattern.attr {
                AttrTest::Equals(a) => Some(a),
                AttrTest::Bind(_) => None,
            })
            .collect();
        attrs.sort();
        attrs.dedup();
        attrs
    }
}
