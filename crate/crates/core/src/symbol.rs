//! Symbols shared by working memory, productions and the bridge.
//!
//! Every string-like symbol is a cheaply clonable `Arc<str>`. Equality first
//! checks pointer identity so symbols cloned from the same source compare in
//! O(1), and falls back to a byte comparison otherwise.

use alloc::string::String;
use alloc::sync::Arc;
use core::cmp::Ordering;
use core::fmt;

macro_rules! symbol_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(text: &str) -> Self {
                Self(Arc::from(text))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl PartialEq for $name {
            fn eq(&self, other: &Self) -> bool {
                Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
            }
        }

        impl Eq for $name {}

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                if Arc::ptr_eq(&self.0, &other.0) {
                    Ordering::Equal
                } else {
                    self.0.cmp(&other.0)
                }
            }
        }

        impl From<&str> for $name {
            fn from(text: &str) -> Self {
                Self::new(text)
            }
        }

        impl From<String> for $name {
            fn from(text: String) -> Self {
                Self(Arc::from(text))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }
    };
}

symbol_newtype!(
    /// A case-sensitive string constant such as `sci-fi` or `recommend`.
    Atom
);
symbol_newtype!(
    /// An opaque object identifier such as `u1` or `vA`.
    Identifier
);
symbol_newtype!(
    /// A rule variable. `<g>` and `?g` both name the variable `g`.
    Variable
);

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", &*self.0)
    }
}

/// A value in a triple or a rule term.
///
/// `Variable` is legal only inside productions; working memory rejects it.
/// Numbers compare by bit pattern, so `0.0 != -0.0` and a NaN equals itself
/// only when the payloads match.
#[derive(Clone, Debug)]
pub enum SymbolValue {
    Identifier(Identifier),
    Atom(Atom),
    Number(f64),
    Variable(Variable),
}

impl SymbolValue {
    pub fn atom(text: &str) -> Self {
        SymbolValue::Atom(Atom::new(text))
    }

    pub fn id(text: &str) -> Self {
        SymbolValue::Identifier(Identifier::new(text))
    }

    pub fn var(name: &str) -> Self {
        SymbolValue::Variable(Variable::new(name))
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, SymbolValue::Variable(_))
    }

    pub fn as_identifier(&self) -> Option<&Identifier> {
        match self {
            SymbolValue::Identifier(id) => Some(id),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&Atom> {
        match self {
            SymbolValue::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            SymbolValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            SymbolValue::Identifier(_) => 0,
            SymbolValue::Atom(_) => 1,
            SymbolValue::Number(_) => 2,
            SymbolValue::Variable(_) => 3,
        }
    }
}

impl PartialEq for SymbolValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SymbolValue {}

impl PartialOrd for SymbolValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SymbolValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (SymbolValue::Identifier(a), SymbolValue::Identifier(b)) => a.cmp(b),
            (SymbolValue::Atom(a), SymbolValue::Atom(b)) => a.cmp(b),
            // total_cmp reports Equal exactly when the bit patterns match.
            (SymbolValue::Number(a), SymbolValue::Number(b)) => a.total_cmp(b),
            (SymbolValue::Variable(a), SymbolValue::Variable(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl From<Identifier> for SymbolValue {
    fn from(id: Identifier) -> Self {
        SymbolValue::Identifier(id)
    }
}

impl From<Atom> for SymbolValue {
    fn from(atom: Atom) -> Self {
        SymbolValue::Atom(atom)
    }
}

impl From<f64> for SymbolValue {
    fn from(n: f64) -> Self {
        SymbolValue::Number(n)
    }
}

/// Renders in the working-memory dump notation: identifiers in angle
/// brackets, atoms bare (quoted when they would not re-read as one token),
/// numbers in their shortest decimal form.
impl fmt::Display for SymbolValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolValue::Identifier(id) => write!(f, "<{}>", id),
            SymbolValue::Atom(a) => write_atom(f, a.as_str()),
            SymbolValue::Number(n) => write!(f, "{}", n),
            SymbolValue::Variable(v) => write!(f, "{}", v),
        }
    }
}

/// Characters allowed inside a bare (unquoted) symbol after its first character.
pub(crate) fn is_symbol_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ':' | '/' | '*' | '!' | '&' | '%')
}

/// True when `text` can be written without quotes and still lexes as one bare symbol.
pub fn is_bare_symbol(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_symbol_char)
}

pub(crate) fn write_atom(f: &mut impl fmt::Write, text: &str) -> fmt::Result {
    if is_bare_symbol(text) {
        f.write_str(text)
    } else {
        write_quoted(f, text)
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, text: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in text.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            other => f.write_char(other)?,
        }
    }
    f.write_char('"')
}
