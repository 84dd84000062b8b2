//! The case-study fixture: a viewer of science fiction and mysteries, with
//! a taste for cyberpunk, choosing among three science-fiction candidates.

use cogrec_core::data::{Catalog, Interaction, ItemMeta, UserId};

pub const CASE_STUDY_USER: u64 = 1;
pub const CASE_STUDY_EXPECTED: &str = "Blade Runner 2049";

pub struct CaseStudy {
    pub catalog: Catalog,
    /// The user's history, oldest first.
    pub interactions: Vec<Interaction>,
    pub user: UserId,
}

fn film(id: u64, title: &str, genres: &[&str], director: &str) -> ItemMeta {
    genres.iter().fold(ItemMeta::new(id, title), |m, g| m.with("genre", g)).with("director", director)
}

pub fn case_study() -> CaseStudy {
    let items = vec![
        film(1, "Blade Runner", &["sci-fi", "cyberpunk"], "scott"),
        film(2, "The Matrix", &["sci-fi", "cyberpunk"], "wachowski"),
        film(3, "Memento", &["mystery"], "nolan"),
        film(4, "Minority Report", &["sci-fi", "mystery"], "spielberg"),
        film(5, "Se7en", &["mystery", "thriller"], "fincher"),
        film(6, "Blade Runner 2049", &["sci-fi", "cyberpunk", "mystery"], "villeneuve"),
        film(7, "Interstellar", &["sci-fi", "drama"], "nolan"),
        film(8, "Arrival", &["sci-fi", "drama"], "villeneuve"),
        film(9, "Notting Hill", &["romance", "comedy"], "michell"),
        film(10, "Toy Story", &["animation", "comedy"], "lasseter"),
        film(11, "The Godfather", &["crime", "drama"], "coppola"),
    ];
    let catalog = Catalog::infer(1, items).expect("fixture titles are unique");
    let interactions =
        [1u64, 2, 3, 4, 5].iter().enumerate().map(|(t, &i)| Interaction::new(CASE_STUDY_USER, i, 5.0, t as i64 + 1)).collect();
    CaseStudy { catalog, interactions, user: UserId::from(CASE_STUDY_USER) }
}
