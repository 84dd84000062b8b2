//! Seeded synthetic movie-like data: a catalog with genre, theme and
//! director attributes, Zipf-skewed item popularity and users whose
//! histories follow a few latent favourite values.

use std::collections::BTreeSet;

use cogrec_core::data::{Catalog, DataError, Interaction, ItemMeta};
use cogrec_core::DomainSchema;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub genres: usize,
    pub themes: usize,
    pub directors: usize,
    /// Each item has one genre, plus a second with probability 1/2.
    pub max_genres_per_item: usize,
    /// Favourite genres per user; one favourite theme and director each.
    pub favourite_genres: usize,
    pub min_history: usize,
    pub max_history: usize,
    /// Share of interactions drawn by popularity alone.
    pub noise: f64,
    pub zipf_exponent: f64,
    /// Weight multiplier per favourite value an item carries.
    pub affinity: f64,
    /// Situations in the repeated-session stream.
    pub templates: usize,
    pub rounds: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 500,
            items: 400,
            genres: 12,
            themes: 10,
            directors: 40,
            max_genres_per_item: 2,
            favourite_genres: 2,
            min_history: 15,
            max_history: 35,
            noise: 0.2,
            zipf_exponent: 0.9,
            affinity: 6.0,
            templates: 20,
            rounds: 10,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("users", self.users),
            ("items", self.items),
            ("genres", self.genres),
            ("themes", self.themes),
            ("directors", self.directors),
            ("max_genres_per_item", self.max_genres_per_item),
            ("favourite_genres", self.favourite_genres),
            ("templates", self.templates),
            ("rounds", self.rounds),
        ];
        for (name, n) in positive {
            if n == 0 {
                return Err(format!("synthetic.{name} must be >= 1"));
            }
        }
        if self.favourite_genres > self.genres {
            return Err("synthetic.favourite_genres exceeds synthetic.genres".into());
        }
        if self.min_history < 2 || self.min_history > self.max_history {
            return Err("synthetic history bounds need 2 <= min_history <= max_history".into());
        }
        if self.max_history >= self.items {
            return Err("synthetic.max_history must be below synthetic.items".into());
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err("synthetic.noise must be within [0, 1]".into());
        }
        if !(self.zipf_exponent >= 0.0 && self.affinity >= 1.0) {
            return Err("synthetic.zipf_exponent must be >= 0 and synthetic.affinity >= 1".into());
        }
        if self.templates > self.users {
            return Err("synthetic.templates cannot exceed synthetic.users".into());
        }
        Ok(())
    }
}

pub fn genre(i: usize) -> String {
    format!("genre-{i:02}")
}

pub fn theme(i: usize) -> String {
    format!("theme-{i:02}")
}

pub fn director(i: usize) -> String {
    format!("director-{i:02}")
}

pub fn schema(config: &SyntheticConfig) -> DomainSchema {
    let mut s = DomainSchema::new(1);
    for i in 0..config.genres {
        s.insert("genre", &genre(i));
    }
    for i in 0..config.themes {
        s.insert("theme", &theme(i));
    }
    for i in 0..config.directors {
        s.insert("director", &director(i));
    }
    s
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub catalog: Catalog,
    /// Interactions of user `u` are timestamped `u * 1000 + step`.
    pub interactions: Vec<Interaction>,
    /// Popularity weight per item, indexed by item number.
    pub popularity: Vec<f64>,
}

fn item_values(item: &ItemMeta) -> BTreeSet<String> {
    item.values().map(|v| v.as_str().to_string()).collect()
}

pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticData, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut items = Vec::with_capacity(config.items);
    for i in 0..config.items {
        let mut meta = ItemMeta::new(i as u64 + 1, &format!("Feature {:04}", i + 1));
        let first = rng.gen_range(0..config.genres);
        meta = meta.with("genre", &genre(first));
        for _ in 1..config.max_genres_per_item {
            if rng.gen_bool(0.5) {
                meta = meta.with("genre", &genre(rng.gen_range(0..config.genres)));
            }
        }
        meta = meta.with("theme", &theme(rng.gen_range(0..config.themes)));
        meta = meta.with("director", &director(rng.gen_range(0..config.directors)));
        items.push(meta);
    }

    let mut ranks: Vec<usize> = (0..config.items).collect();
    ranks.shuffle(&mut rng);
    let popularity: Vec<f64> = ranks.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent)).collect();
    let values: Vec<BTreeSet<String>> = items.iter().map(item_values).collect();

    let mut interactions = Vec::new();
    for u in 0..config.users {
        let mut genres: Vec<usize> = (0..config.genres).collect();
        genres.shuffle(&mut rng);
        let mut favourites: BTreeSet<String> = genres[..config.favourite_genres].iter().map(|&g| genre(g)).collect();
        favourites.insert(theme(rng.gen_range(0..config.themes)));
        favourites.insert(director(rng.gen_range(0..config.directors)));

        let taste: Vec<f64> = values
            .iter()
            .zip(&popularity)
            .map(|(vs, p)| p * config.affinity.powi(vs.intersection(&favourites).count() as i32))
            .collect();
        let len = rng.gen_range(config.min_history..=config.max_history);
        let mut seen = BTreeSet::new();
        for step in 0..len {
            let weights = if rng.gen_bool(config.noise) { &popularity } else { &taste };
            let masked: Vec<f64> = weights.iter().enumerate().map(|(i, w)| if seen.contains(&i) { 0.0 } else { *w }).collect();
            let dist = WeightedIndex::new(&masked).expect("unseen items remain");
            let i = dist.sample(&mut rng);
            seen.insert(i);
            interactions.push(Interaction::new(u as u64 + 1, i as u64 + 1, 4.0, (u * 1000 + step) as i64));
        }
    }

    let catalog = Catalog::new(schema(config), items)?;
    Ok(SyntheticData { catalog, interactions, popularity })
}

/// Order of the repeated-session stream: `rounds` passes over the
/// `templates` situations, each pass in its own seeded order.
pub fn situation_stream(templates: usize, rounds: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_57e4);
    let mut out = Vec::with_capacity(templates * rounds);
    for round in 0..rounds {
        let mut order: Vec<usize> = (0..templates).collect();
        order.shuffle(&mut rng);
        out.extend(order.into_iter().map(|t| (t, round)));
    }
    out
}

pub fn stream_session_name(template: usize, round: usize) -> String {
    format!("t{template}-r{round}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cogrec_core::data::{head_tail_partition, preprocess};

    #[test]
    fn generation_is_seeded() {
        let c = SyntheticConfig { users: 30, items: 120, ..SyntheticConfig::default() };
        let a = generate(&c, 3).unwrap();
        let b = generate(&c, 3).unwrap();
        let other = generate(&c, 4).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_ne!(a.interactions, other.interactions);
        assert_eq!(a.catalog.len(), 120);
    }

    #[test]
    fn histories_have_no_repeats_and_respect_bounds() {
        let c = SyntheticConfig { users: 40, items: 150, ..SyntheticConfig::default() };
        let d = generate(&c, 1).unwrap();
        for u in 1..=40u64 {
            let items: Vec<_> = d.interactions.iter().filter(|x| x.user.as_str() == u.to_string()).map(|x| &x.item).collect();
            let distinct: BTreeSet<_> = items.iter().collect();
            assert_eq!(items.len(), distinct.len());
            assert!((c.min_history..=c.max_history).contains(&items.len()));
        }
    }

    #[test]
    fn default_data_survives_filtering_with_a_skewed_head() {
        let d = generate(&SyntheticConfig::default(), 7).unwrap();
        let kept = preprocess(d.interactions.clone()).unwrap();
        let ht = head_tail_partition(&kept);
        let head_share = kept.iter().filter(|x| ht.is_head(&x.item)).count() as f64 / kept.len() as f64;
        assert!(head_share > 0.4, "head share {head_share}");
    }

    #[test]
    fn stream_visits_every_situation_once_per_round() {
        let s = situation_stream(20, 10, 7);
        assert_eq!(s.len(), 200);
        for round in 0..10 {
            let seen: BTreeSet<usize> = s[round * 20..(round + 1) * 20].iter().map(|&(t, r)| {
                assert_eq!(r, round);
                t
            }).collect();
            assert_eq!(seen.len(), 20);
        }
        assert_ne!(s[..20], s[20..40].iter().map(|&(t, _)| (t, 0)).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn validation_catches_bad_bounds() {
        assert!(SyntheticConfig::default().validate().is_ok());
        assert!(SyntheticConfig { min_history: 1, ..SyntheticConfig::default() }.validate().is_err());
        assert!(SyntheticConfig { noise: 1.5, ..SyntheticConfig::default() }.validate().is_err());
    }
}
