//! Interaction data, item metadata and the evaluation protocol: k-core
//! filtering, chronological leave-one-out splits and the head/tail item
//! partition.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::schema::DomainSchema;
use crate::symbol::Atom;

/// Minimum interactions per user and per item kept by [`preprocess`].
pub const MIN_INTERACTIONS: usize = 10;

/// Share of items, by interaction count, that form the head.
pub const HEAD_FRACTION: f64 = 0.2;

macro_rules! entity_id {
    ($name:ident) => {
        /// Dataset key. Numeric keys order numerically and sort before
        /// non-numeric ones.
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(text: &str) -> Self {
                $name(Arc::from(text))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                natural_cmp(&self.0, &other.0)
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }

        impl From<u64> for $name {
            fn from(n: u64) -> Self {
                $name::new(&alloc::format!("{}", n))
            }
        }
    };
}

entity_id!(UserId);
entity_id!(ItemId);

fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<UserId>, item: impl Into<ItemId>, rating: f64, timestamp: i64) -> Self {
        Interaction { user: user.into(), item: item.into(), rating, timestamp }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemMeta {
    pub id: ItemId,
    pub title: String,
    pub attributes: BTreeMap<Atom, BTreeSet<Atom>>,
}

impl ItemMeta {
    pub fn new(id: impl Into<ItemId>, title: &str) -> Self {
        ItemMeta { id: id.into(), title: String::from(title), attributes: BTreeMap::new() }
    }

    pub fn with(mut self, attr: &str, value: &str) -> Self {
        self.attributes.entry(Atom::new(attr)).or_default().insert(Atom::new(value));
        self
    }

    /// All (attribute, value) pairs in attribute then value order.
    pub fn pairs(&self) -> impl Iterator<Item = (&Atom, &Atom)> {
        self.attributes.iter().flat_map(|(a, vs)| vs.iter().map(move |v| (a, v)))
    }

    pub fn values(&self) -> impl Iterator<Item = &Atom> {
        self.attributes.values().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("no interactions survive filtering")]
    EmptyAfterFilter,
    #[error("item {item} uses attribute '{attr}' outside the schema")]
    UnknownAttribute { item: String, attr: String },
    #[error("duplicate title '{0}'")]
    DuplicateTitle(String),
}

/// Item metadata indexed by id and title, with its schema.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    pub schema: DomainSchema,
    items: BTreeMap<ItemId, ItemMeta>,
    by_title: BTreeMap<String, ItemId>,
}

impl Catalog {
    /// Builds a catalog, checking every attribute against `schema`. Titles
    /// must be unique because rules refer to items by title.
    pub fn new(schema: DomainSchema, items: Vec<ItemMeta>) -> Result<Self, DataError> {
        let mut c = Catalog { schema, items: BTreeMap::new(), by_title: BTreeMap::new() };
        for item in items {
            for attr in item.attributes.keys() {
                if !c.schema.has_attribute(attr.as_str()) {
                    return Err(DataError::UnknownAttribute { item: String::from(item.id.as_str()), attr: String::from(attr.as_str()) });
                }
            }
            if c.by_title.insert(item.title.clone(), item.id.clone()).is_some() {
                return Err(DataError::DuplicateTitle(item.title.clone()));
            }
            c.items.insert(item.id.clone(), item);
        }
        Ok(c)
    }

    /// Derives the schema from the items' own attributes.
    pub fn infer(version: u32, items: Vec<ItemMeta>) -> Result<Self, DataError> {
        let mut schema = DomainSchema::new(version);
        for item in &items {
            for (a, v) in item.pairs() {
                schema.insert(a.as_str(), v.as_str());
            }
        }
        Catalog::new(schema, items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &ItemId) -> Option<&ItemMeta> {
        self.items.get(id)
    }

    pub fn by_title(&self, title: &str) -> Option<&ItemMeta> {
        self.by_title.get(title).and_then(|id| self.items.get(id))
    }

    /// Items in id order.
    pub fn items(&self) -> impl Iterator<Item = &ItemMeta> {
        self.items.values()
    }
}

fn count_users_items(data: &[Interaction]) -> (BTreeMap<&UserId, usize>, BTreeMap<&ItemId, usize>) {
    let mut users: BTreeMap<&UserId, usize> = BTreeMap::new();
    let mut items: BTreeMap<&ItemId, usize> = BTreeMap::new();
    for x in data {
        *users.entry(&x.user).or_default() += 1;
        *items.entry(&x.item).or_default() += 1;
    }
    (users, items)
}

/// Repeats "drop users below the threshold, then items below it" until
/// nothing changes, so both thresholds hold at once.
pub fn preprocess_with(interactions: Vec<Interaction>, min: usize) -> Result<Vec<Interaction>, DataError> {
    let mut data = interactions;
    loop {
        let before = data.len();
        let (users, _) = count_users_items(&data);
        let keep_users: BTreeSet<UserId> = users.into_iter().filter(|&(_, n)| n >= min).map(|(u, _)| u.clone()).collect();
        data.retain(|x| keep_users.contains(&x.user));
        let (_, items) = count_users_items(&data);
        let keep_items: BTreeSet<ItemId> = items.into_iter().filter(|&(_, n)| n >= min).map(|(i, _)| i.clone()).collect();
        data.retain(|x| keep_items.contains(&x.item));
        if data.len() == before {
            break;
        }
    }
    if data.is_empty() {
        return Err(DataError::EmptyAfterFilter);
    }
    Ok(data)
}

pub fn preprocess(interactions: Vec<Interaction>) -> Result<Vec<Interaction>, DataError> {
    preprocess_with(interactions, MIN_INTERACTIONS)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

impl DatasetStats {
    pub fn of(data: &[Interaction]) -> Self {
        let (users, items) = count_users_items(data);
        DatasetStats { users: users.len(), items: items.len(), interactions: data.len() }
    }

    /// Fraction of the user-item matrix without an interaction.
    pub fn sparsity(&self) -> f64 {
        let cells = self.users as f64 * self.items as f64;
        if cells == 0.0 {
            return 0.0;
        }
        1.0 - self.interactions as f64 / cells
    }
}

/// One user's chronological history split into train prefix and target.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub user: UserId,
    pub train: Vec<Interaction>,
    pub test: Interaction,
}

impl Split {
    pub fn train_items(&self) -> BTreeSet<ItemId> {
        self.train.iter().map(|x| x.item.clone()).collect()
    }
}

/// Holds out each user's last interaction by (timestamp, item id). Users
/// with fewer than two interactions are skipped.
pub fn split_leave_one_out(interactions: &[Interaction]) -> Vec<Split> {
    let mut by_user: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for x in interactions {
        by_user.entry(x.user.clone()).or_default().push(x.clone());
    }
    let mut out = Vec::new();
    for (user, mut history) in by_user {
        if history.len() < 2 {
            continue;
        }
        history.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.item.cmp(&b.item)));
        let test = history.pop().expect("at least two interactions");
        out.push(Split { user, train: history, test });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadTail {
    pub head: BTreeSet<ItemId>,
    pub tail: BTreeSet<ItemId>,
}

impl HeadTail {
    pub fn is_head(&self, item: &ItemId) -> bool {
        self.head.contains(item)
    }
}

/// Sorts items by interaction count descending, ties by id, and puts the
/// first `ceil(0.2 * |items|)` in the head.
pub fn head_tail_partition(interactions: &[Interaction]) -> HeadTail {
    let (_, counts) = count_users_items(interactions);
    let mut items: Vec<(&ItemId, usize)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n_head = libm::ceil(HEAD_FRACTION * items.len() as f64) as usize;
    let head = items[..n_head].iter().map(|(i, _)| (*i).clone()).collect();
    let tail = items[n_head..].iter().map(|(i, _)| (*i).clone()).collect();
    HeadTail { head, tail }
}
