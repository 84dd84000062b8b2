//! Generators and reference implementations shared by integration tests.
//! Included by path from other crates' test targets as well.

#![allow(dead_code)]

use std::collections::BTreeMap;

use cogrec_core::engine::{match_all, ProceduralMemory};
use cogrec_core::production::{
    ActionPattern, AttrTerm, AttrTest, Condition, ConditionPattern, ConditionTest, IdTest, PreferenceSpec, Production,
    Provenance, RelOp,
};
use cogrec_core::symbol::{Atom, Identifier, SymbolValue, Variable};
use cogrec_core::wm::WorkingMemory;
use rand::seq::SliceRandom;
use rand::Rng;

pub const IDS: [&str; 5] = ["s1", "o1", "o2", "o3", "o4"];
pub const ATTRS: [&str; 4] = ["a", "b", "c", "d"];
pub const ATOMS: [&str; 3] = ["x", "y", "z"];
pub const NUMBERS: [f64; 3] = [1.0, 2.0, 3.0];
pub const RELOPS: [RelOp; 5] = [RelOp::Less, RelOp::LessEq, RelOp::Greater, RelOp::GreaterEq, RelOp::NotEq];

fn small_value<R: Rng>(rng: &mut R) -> SymbolValue {
    match rng.gen_range(0..3) {
        0 => SymbolValue::id(IDS.choose(rng).unwrap()),
        1 => SymbolValue::atom(ATOMS.choose(rng).unwrap()),
        _ => SymbolValue::Number(*NUMBERS.choose(rng).unwrap()),
    }
}

/// Up to `max` random elements over a small vocabulary so joins hit often.
pub fn random_wm<R: Rng>(rng: &mut R, max: usize) -> WorkingMemory {
    let mut wm = WorkingMemory::new();
    let n = rng.gen_range(0..=max);
    for _ in 0..n {
        let id = Identifier::new(IDS.choose(rng).unwrap());
        let attr = Atom::new(ATTRS.choose(rng).unwrap());
        wm.add(id, attr, small_value(rng)).unwrap();
    }
    wm
}

fn pick_var<R: Rng>(rng: &mut R, bound: &[Variable]) -> Variable {
    bound.choose(rng).unwrap().clone()
}

fn fresh_var(next: &mut usize) -> Variable {
    *next += 1;
    Variable::new(&format!("v{}", next))
}

/// A valid production with 1 to 4 conditions over the small vocabulary.
pub fn random_rule<R: Rng>(rng: &mut R, name: &str) -> Production {
    let root = Variable::new("s");
    let mut bound = vec![root.clone()];
    let mut next = 0usize;
    let mut conditions = Vec::new();
    let n = rng.gen_range(1..=4);
    for i in 0..n {
        let negated = i > 0 && rng.gen_bool(0.2);
        let id = if i == 0 { IdTest::Bind(root.clone()) } else { IdTest::Bind(pick_var(rng, &bound)) };
        let mut new_vars = Vec::new();
        let attr = if rng.gen_bool(0.8) {
            AttrTest::Equals(Atom::new(ATTRS.choose(rng).unwrap()))
        } else if rng.gen_bool(0.5) && bound.len() > 1 {
            AttrTest::Bind(pick_var(rng, &bound))
        } else {
            let v = fresh_var(&mut next);
            new_vars.push(v.clone());
            AttrTest::Bind(v)
        };
        let value = match rng.gen_range(0..4) {
            0 => ConditionTest::Equals(small_value(rng)),
            1 => ConditionTest::Relational(*RELOPS.choose(rng).unwrap(), *NUMBERS.choose(rng).unwrap()),
            2 => ConditionTest::VariableBind(pick_var(rng, &bound)),
            _ => {
                let v = fresh_var(&mut next);
                new_vars.push(v.clone());
                ConditionTest::VariableBind(v)
            }
        };
        if !negated {
            bound.extend(new_vars);
        }
        conditions.push(Condition { negated, state: false, pattern: ConditionPattern { id, attr, value } });
    }
    let target = pick_var(rng, &bound);
    let actions = vec![ActionPattern::MakeWme {
        id: Variable::new("s"),
        attr: AttrTerm::Const(Atom::new("seen")),
        value: SymbolValue::Variable(target),
    }];
    Production::new(name, conditions, actions)
}

pub fn random_rule_set<R: Rng>(rng: &mut R, max: usize) -> ProceduralMemory {
    let mut pm = ProceduralMemory::new();
    let n = rng.gen_range(1..=max);
    for i in 0..n {
        pm.register(random_rule(rng, &format!("r{}", i))).expect("generated rules are valid");
    }
    pm
}

pub type PlainBinding = BTreeMap<String, SymbolValue>;

fn bind(b: &mut PlainBinding, var: &Variable, value: SymbolValue) -> bool {
    match b.get(var.as_str()) {
        Some(existing) => *existing == value,
        None => {
            b.insert(var.as_str().to_string(), value);
            true
        }
    }
}

/// Reference unification of one condition, written without the engine's helpers.
fn unify(c: &ConditionPattern, id: &Identifier, attr: &Atom, value: &SymbolValue, b: &mut PlainBinding) -> bool {
    let id_ok = match &c.id {
        IdTest::Equals(x) => x == id,
        IdTest::Bind(v) => bind(b, v, SymbolValue::Identifier(id.clone())),
    };
    if !id_ok {
        return false;
    }
    let attr_ok = match &c.attr {
        AttrTest::Equals(a) => a == attr,
        AttrTest::Bind(v) => bind(b, v, SymbolValue::Atom(attr.clone())),
    };
    if !attr_ok {
        return false;
    }
    match &c.value {
        ConditionTest::Equals(x) => x == value,
        ConditionTest::VariableBind(v) => bind(b, v, value.clone()),
        ConditionTest::Relational(op, n) => match value {
            SymbolValue::Number(x) => match op {
                RelOp::Less => *x < *n,
                RelOp::LessEq => *x <= *n,
                RelOp::Greater => *x > *n,
                RelOp::GreaterEq => *x >= *n,
                RelOp::NotEq => *x != *n,
            },
            _ => false,
        },
    }
}

/// Every binding of `p` by trying every element for every positive
/// condition in source order, then rejecting bindings a negation matches.
pub fn brute_force(p: &Production, wm: &WorkingMemory) -> Vec<PlainBinding> {
    let triples: Vec<(Identifier, Atom, SymbolValue)> =
        wm.iter().map(|w| (w.id.clone(), w.attr.clone(), w.value.clone())).collect();
    let positives: Vec<&Condition> = p.conditions.iter().filter(|c| !c.negated).collect();
    let negatives: Vec<&Condition> = p.conditions.iter().filter(|c| c.negated).collect();
    let mut partial = vec![PlainBinding::new()];
    for c in positives {
        let mut next = Vec::new();
        for b in &partial {
            for (id, attr, value) in &triples {
                let mut nb = b.clone();
                if unify(&c.pattern, id, attr, value, &mut nb) {
                    next.push(nb);
                }
            }
        }
        partial = next;
    }
    let mut out: Vec<PlainBinding> = partial
        .into_iter()
        .filter(|b| {
            negatives.iter().all(|c| {
                !triples.iter().any(|(id, attr, value)| {
                    let mut local = b.clone();
                    unify(&c.pattern, id, attr, value, &mut local)
                })
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// (rule, binding) pairs from the brute-force reference.
pub fn brute_force_all(pm: &ProceduralMemory, wm: &WorkingMemory) -> Vec<(String, PlainBinding)> {
    let mut out = Vec::new();
    for p in pm.productions() {
        for b in brute_force(p, wm) {
            out.push((p.name.clone(), b));
        }
    }
    out.sort();
    out
}

/// (rule, binding) pairs from the indexed matcher.
pub fn indexed_all(pm: &ProceduralMemory, wm: &WorkingMemory) -> Vec<(String, PlainBinding)> {
    let mut out: Vec<(String, PlainBinding)> = match_all(pm, wm)
        .into_iter()
        .map(|m| {
            let b = m.binding.iter().map(|(k, v)| (k.as_str().to_string(), v.clone())).collect();
            (m.name().to_string(), b)
        })
        .collect();
    out.sort();
    out
}

/// One matcher instance: a rule set of at most 30 and memory of at most 80.
pub fn matcher_instance<R: Rng>(rng: &mut R) -> (ProceduralMemory, WorkingMemory) {
    (random_rule_set(rng, 30), random_wm(rng, 80))
}

const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789-_";

fn random_symbol<R: Rng>(rng: &mut R) -> String {
    let mut s = String::new();
    s.push((b'a' + rng.gen_range(0..26)) as char);
    for _ in 0..rng.gen_range(0..6) {
        s.push(*NAME_CHARS.choose(rng).unwrap() as char);
    }
    s
}

/// Strings that need quoting: spaces, quotes, escapes, unicode.
fn random_text<R: Rng>(rng: &mut R) -> String {
    const PIECES: [&str; 10] = ["Blade Runner", "2049", "a\"b", "back\\slash", "tab\there", "line\nbreak", "é", "", "x y", "<v>"];
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_number<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(-100..100) as f64,
        1 => rng.gen_range(-1000.0..1000.0),
        2 => rng.gen::<f64>() * 1e-9,
        _ => rng.gen_range(0..10) as f64 / 4.0,
    }
}

fn random_constant<R: Rng>(rng: &mut R) -> SymbolValue {
    match rng.gen_range(0..5) {
        0 => SymbolValue::Atom(Atom::from(random_symbol(rng))),
        1 => SymbolValue::Atom(Atom::from(random_text(rng))),
        2 => SymbolValue::Identifier(Identifier::from(random_symbol(rng))),
        3 => SymbolValue::Identifier(Identifier::from(random_text(rng))),
        _ => SymbolValue::Number(random_number(rng)),
    }
}

fn random_attr_const<R: Rng>(rng: &mut R) -> Atom {
    if rng.gen_bool(0.8) {
        Atom::from(random_symbol(rng))
    } else {
        Atom::from(random_text(rng))
    }
}

/// A valid production exercising every construct of the text format.
pub fn random_production<R: Rng>(rng: &mut R) -> Production {
    let root = Variable::from(random_symbol(rng));
    let mut bound = vec![root.clone()];
    let mut conditions = Vec::new();
    let n = rng.gen_range(1..=6);
    for i in 0..n {
        let negated = i > 0 && rng.gen_bool(0.2);
        let state = rng.gen_bool(0.1);
        let id = IdTest::Bind(if i == 0 { root.clone() } else { bound.choose(rng).unwrap().clone() });
        let mut new_vars = Vec::new();
        let attr = if rng.gen_bool(0.85) {
            AttrTest::Equals(random_attr_const(rng))
        } else {
            let v = Variable::from(random_symbol(rng));
            new_vars.push(v.clone());
            AttrTest::Bind(v)
        };
        let value = match rng.gen_range(0..3) {
            0 => ConditionTest::Equals(random_constant(rng)),
            1 => ConditionTest::Relational(*RELOPS.choose(rng).unwrap(), random_number(rng)),
            _ => {
                let v = Variable::from(random_symbol(rng));
                new_vars.push(v.clone());
                ConditionTest::VariableBind(v)
            }
        };
        if !negated {
            bound.extend(new_vars);
        }
        conditions.push(Condition { negated, state, pattern: ConditionPattern { id, attr, value } });
    }
    // Mixed `@id` conditions on the root keep the first condition a variable test.
    if rng.gen_bool(0.2) {
        conditions.push(Condition::positive(ConditionPattern {
            id: IdTest::Bind(root.clone()),
            attr: AttrTest::Equals(Atom::new("focus")),
            value: ConditionTest::Equals(SymbolValue::Identifier(Identifier::from(random_symbol(rng)))),
        }));
    }

    let mut actions = Vec::new();
    let m = rng.gen_range(1..=4);
    for _ in 0..m {
        match rng.gen_range(0..4) {
            0 => {
                let op = Variable::new("op-fresh");
                if actions.iter().any(|a| matches!(a, ActionPattern::ProposeOperator { .. })) {
                    continue;
                }
                let preference = match rng.gen_range(0..4) {
                    0 => PreferenceSpec::Acceptable,
                    1 => PreferenceSpec::Reject,
                    2 => PreferenceSpec::Best,
                    _ => PreferenceSpec::Numeric(random_number(rng)),
                };
                actions.push(ActionPattern::ProposeOperator { state: root.clone(), op: op.clone(), preference });
                actions.push(ActionPattern::MakeWme {
                    id: op.clone(),
                    attr: AttrTerm::Const(Atom::new("name")),
                    value: SymbolValue::Atom(Atom::from(random_symbol(rng))),
                });
                if rng.gen_bool(0.6) {
                    actions.push(ActionPattern::MakeWme {
                        id: op,
                        attr: AttrTerm::Const(Atom::new("item")),
                        value: SymbolValue::Variable(bound.choose(rng).unwrap().clone()),
                    });
                }
            }
            1 => actions.push(ActionPattern::RemoveWme {
                id: bound.choose(rng).unwrap().clone(),
                attr: AttrTerm::Const(random_attr_const(rng)),
                value: SymbolValue::Variable(bound.choose(rng).unwrap().clone()),
            }),
            2 => actions.push(ActionPattern::MakeWme {
                id: bound.choose(rng).unwrap().clone(),
                attr: AttrTerm::Var(bound.choose(rng).unwrap().clone()),
                value: random_constant(rng),
            }),
            _ => actions.push(ActionPattern::MakeWme {
                id: bound.choose(rng).unwrap().clone(),
                attr: AttrTerm::Const(random_attr_const(rng)),
                value: if rng.gen_bool(0.5) {
                    SymbolValue::Variable(bound.choose(rng).unwrap().clone())
                } else {
                    random_constant(rng)
                },
            }),
        }
    }
    if actions.is_empty() {
        actions.push(ActionPattern::MakeWme {
            id: root.clone(),
            attr: AttrTerm::Const(Atom::new("done")),
            value: SymbolValue::atom("true"),
        });
    }
    let name = if rng.gen_bool(0.8) { random_symbol(rng) } else { random_text(rng) };
    let mut p = Production::new(&name, conditions, actions);
    p.provenance = match rng.gen_range(0..3) {
        0 => Provenance::Manual,
        1 => Provenance::Bootstrap,
        _ => Provenance::Chunked(if rng.gen_bool(0.7) { random_symbol(rng) } else { random_text(rng) }),
    };
    if rng.gen_bool(0.3) {
        p.creation_cycle = rng.gen_range(1..10_000);
    }
    p
}

/// The worked tie: a cyberpunk fan, three sci-fi candidates, only one of
/// them cyberpunk.
pub const TIE_SNAPSHOT: &str = "(<s1> ^state-is-valid true) (<s1> ^goal <g1>) (<g1> ^type recommend) \
    (<s1> ^user <u1>) (<u1> ^preference cyberpunk) \
    (<s1> ^candidate-item <vA>) (<vA> ^title \"Blade Runner 2049\") (<vA> ^genre cyberpunk) (<vA> ^genre sci-fi) \
    (<s1> ^candidate-item <vB>) (<vB> ^title \"Interstellar\") (<vB> ^genre sci-fi) \
    (<s1> ^candidate-item <vC>) (<vC> ^title \"Arrival\") (<vC> ^genre sci-fi)";

/// The learned rule for that tie, as written in the design notes.
pub const P_NEW: &str = "sp {
   IF(<s> ^state-is-valid true)
     (<s> ^user <u>)
     (<u> ^preference ?g)
     (<s> ^candidate-item ?i)
     (?i ^genre ?g)
   -->
     (<s> ^operator <o> +)
     (<o> ^name select-item)
     (<o> ^item ?i)
}";

pub fn wm_from(text: &str) -> WorkingMemory {
    let mut wm = WorkingMemory::new();
    for (id, attr, value) in cogrec_core::dsl::parse_wmes(text).unwrap() {
        wm.add(id, attr, value).unwrap();
    }
    wm
}

pub fn select_item(item: &str) -> cogrec_core::engine::OperatorKey {
    cogrec_core::engine::OperatorKey::new("select-item", vec![(Atom::new("item"), SymbolValue::id(item))])
}

/// Snapshot, tie impasse and schema of the worked example.
pub fn tie_fixture() -> (WorkingMemory, cogrec_core::engine::Impasse, cogrec_core::schema::DomainSchema) {
    use cogrec_core::engine::{Impasse, ImpasseKind};
    let wm = wm_from(TIE_SNAPSHOT);
    let impasse = Impasse {
        id: "u1-c2".into(),
        kind: ImpasseKind::Tie(vec![select_item("vA"), select_item("vB"), select_item("vC")]),
        cycle: 2,
        context: wm.snapshot(),
        goal: Identifier::new("g1"),
        state: Identifier::new("s1"),
    };
    let mut schema = cogrec_core::schema::DomainSchema::new(1);
    for g in ["cyberpunk", "sci-fi", "western", "drama"] {
        schema.insert("genre", g);
    }
    schema.insert("director", "villeneuve");
    (wm, impasse, schema)
}

/// A catalog holding the three candidates of [`tie_fixture`].
pub fn tie_catalog() -> std::sync::Arc<cogrec_core::data::Catalog> {
    use cogrec_core::data::{Catalog, ItemMeta};
    let items = vec![
        ItemMeta::new("A", "Blade Runner 2049").with("genre", "cyberpunk").with("genre", "sci-fi"),
        ItemMeta::new("B", "Interstellar").with("genre", "sci-fi"),
        ItemMeta::new("C", "Arrival").with("genre", "sci-fi"),
    ];
    std::sync::Arc::new(Catalog::infer(1, items).unwrap())
}

/// Ways to break a valid answer, each of which must be refused.
pub const CORRUPTIONS: [&str; 10] = [
    "unknown-item-id",
    "unknown-item-title",
    "ungrounded-user-fact",
    "ungrounded-item-fact",
    "unknown-attribute",
    "missing-recommend",
    "missing-because",
    "empty-because",
    "malformed-fact",
    "foreign-subject",
];

/// Applies corruption `kind` to a valid `answer`, with `n` varying the details.
pub fn corrupt(answer: &str, kind: &str, n: usize) -> String {
    let lines: Vec<&str> = answer.lines().collect();
    let recommend = lines.iter().position(|l| l.trim_start().starts_with("RECOMMEND")).expect("answer has RECOMMEND");
    let because = lines.iter().position(|l| l.trim_start().starts_with("BECAUSE")).expect("answer has BECAUSE");
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    match kind {
        "unknown-item-id" => out[recommend] = format!("RECOMMEND: vZ{}", n),
        "unknown-item-title" => out[recommend] = format!("RECOMMEND: \"Not A Listed Film {}\"", n),
        "ungrounded-user-fact" => out.insert(because + 1, format!("- user.preference = western-{}", n)),
        "ungrounded-item-fact" => out.insert(because + 1, format!("- item.genre = drama{}", n % 3)),
        "unknown-attribute" => out.insert(because + 1, format!("- item.budget{} = huge", n)),
        "missing-recommend" => {
            out.remove(recommend);
        }
        "missing-because" => {
            out.truncate(because);
        }
        "empty-because" => {
            out.truncate(because);
            out.push("BECAUSE:".into());
        }
        "malformed-fact" => out.insert(because + 1, format!("- the user really likes {} things", n)),
        "foreign-subject" => out.insert(because + 1, format!("- director.genre = x{}", n)),
        other => panic!("unknown corruption {}", other),
    }
    out.join("\n")
}
