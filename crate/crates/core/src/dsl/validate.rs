use alloc::collections::BTreeSet;
use alloc::string::String;

use crate::production::{ActionPattern, AttrTerm, AttrTest, ConditionTest, IdTest, Production};
use crate::symbol::{Atom, SymbolValue, Variable};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("production has no conditions")]
    EmptyConditions,
    #[error("production has no actions")]
    EmptyActions,
    #[error("first condition must be a positive test on a state variable")]
    BadRoot,
    #[error("condition {0} is not connected to the state variable")]
    DisconnectedCondition(usize),
    #[error("variable {0} is used in an action but never bound")]
    UnboundVariable(String),
    #[error("operator {0} has no ^name")]
    MissingOperatorName(String),
    #[error("operator variable {0} must be fresh (not bound by a condition)")]
    OperatorNotFresh(String),
    #[error("operator must be proposed on the state variable, not {0}")]
    OperatorNotOnState(String),
    #[error("a production named {0} already exists")]
    DuplicateName(String),
}

fn display(v: &Variable) -> String {
    use alloc::string::ToString;
    v.to_string()
}

/// Checks that a production can be matched and fired without runtime
/// variable errors: conditions reach out from the state variable, and every
/// action variable is bound by a positive condition or created fresh.
pub fn validate(p: &Production) -> Result<(), ValidationError> {
    if p.conditions.is_empty() {
        return Err(ValidationError::EmptyConditions);
    }
    if p.actions.is_empty() {
        return Err(ValidationError::EmptyActions);
    }
    let root = match (&p.conditions[0].negated, &p.conditions[0].pattern.id) {
        (false, IdTest::Bind(v)) => v.clone(),
        _ => return Err(ValidationError::BadRoot),
    };

    let mut reached: BTreeSet<Variable> = BTreeSet::new();
    reached.insert(root.clone());
    let mut connected = alloc::vec![false; p.conditions.len()];
    loop {
        let mut changed = false;
        for (i, c) in p.conditions.iter().enumerate() {
            if connected[i] {
                continue;
            }
            let IdTest::Bind(id) = &c.pattern.id else { continue };
            if !reached.contains(id) {
                continue;
            }
            connected[i] = true;
            changed = true;
            if !c.negated {
                if let AttrTest::Bind(v) = &c.pattern.attr {
                    reached.insert(v.clone());
                }
                if let ConditionTest::VariableBind(v) = &c.pattern.value {
                    reached.insert(v.clone());
                }
            }
        }
        if !changed {
            break;
        }
    }
    if let Some(i) = connected.iter().position(|c| !c) {
        return Err(ValidationError::DisconnectedCondition(i));
    }
    // Variables bound by positive conditions; `reached` equals this set once
    // every condition is connected.
    let bound = reached;

    let mut fresh: BTreeSet<Variable> = BTreeSet::new();
    for a in &p.actions {
        match a {
            ActionPattern::ProposeOperator { state, op, .. } => {
                if bound.contains(op) {
                    return Err(ValidationError::OperatorNotFresh(display(op)));
                }
                if *state != root {
                    return Err(ValidationError::OperatorNotOnState(display(state)));
                }
                fresh.insert(op.clone());
            }
            ActionPattern::MakeWme { value: SymbolValue::Variable(v), .. } if !bound.contains(v) => {
                fresh.insert(v.clone());
            }
            _ => {}
        }
    }
    for a in &p.actions {
        match a {
            ActionPattern::MakeWme { id, attr, .. } => {
                if !bound.contains(id) && !fresh.contains(id) {
                    return Err(ValidationError::UnboundVariable(display(id)));
                }
                if let AttrTerm::Var(v) = attr {
                    if !bound.contains(v) {
                        return Err(ValidationError::UnboundVariable(display(v)));
                    }
                }
            }
            ActionPattern::RemoveWme { id, attr, value } => {
                for v in [Some(id), attr_var(attr), value_var(value)].into_iter().flatten() {
                    if !bound.contains(v) {
                        return Err(ValidationError::UnboundVariable(display(v)));
                    }
                }
            }
            ActionPattern::ProposeOperator { state, .. } => {
                if !bound.contains(state) {
                    return Err(ValidationError::UnboundVariable(display(state)));
                }
            }
        }
    }

    let name_attr = AttrTerm::Const(Atom::new("name"));
    for op in p.operator_variables() {
        let named = p.actions.iter().any(|a| {
            matches!(a, ActionPattern::MakeWme { id, attr, value } if id == op && *attr == name_attr && !value.is_variable())
        });
        if !named {
            return Err(ValidationError::MissingOperatorName(display(op)));
        }
    }
    Ok(())
}

fn attr_var(a: &AttrTerm) -> Option<&Variable> {
    match a {
        AttrTerm::Var(v) => Some(v),
        AttrTerm::Const(_) => None,
    }
}

fn value_var(v: &SymbolValue) -> Option<&Variable> {
    match v {
        SymbolValue::Variable(v) => Some(v),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_production, DslError};

    fn err(src: &str) -> ValidationError {
        match parse_production(src) {
            Err(DslError::Validation(e)) => e,
            other => panic!("expected a validation error, got {:?}", other),
        }
    }

    #[test]
    fn floating_condition() {
        assert_eq!(
            err("sp { r (<s> ^a 1) (<x> ^b 2) --> (<s> ^c 1) }"),
            ValidationError::DisconnectedCondition(1)
        );
    }

    #[test]
    fn out_of_order_conditions_still_connect() {
        assert!(parse_production("sp { r (<s> ^a <x>) (<y> ^c 1) (<x> ^b <y>) --> (<s> ^d <y>) }").is_ok());
    }

    #[test]
    fn negated_root_is_rejected() {
        assert_eq!(err("sp { r -(<s> ^a 1) --> (<s> ^c 1) }"), ValidationError::BadRoot);
    }

    #[test]
    fn negation_local_variable_cannot_reach_actions() {
        assert_eq!(
            err("sp { r (<s> ^a 1) -(<s> ^b <z>) --> (<s> ^c 1) (<z> ^d 1 -) }"),
            ValidationError::UnboundVariable("<z>".into())
        );
    }

    #[test]
    fn operator_needs_a_name_and_fresh_variable() {
        assert_eq!(
            err("sp { r (<s> ^a 1) --> (<s> ^operator <o> +) }"),
            ValidationError::MissingOperatorName("<o>".into())
        );
        assert_eq!(
            err("sp { r (<s> ^a <o>) --> (<s> ^operator <o> +) (<o> ^name x) }"),
            ValidationError::OperatorNotFresh("<o>".into())
        );
    }

    #[test]
    fn fresh_identifier_from_make_action() {
        assert!(parse_production("sp { r (<s> ^a 1) --> (<s> ^obj <n>) (<n> ^kind new) }").is_ok());
    }
}
