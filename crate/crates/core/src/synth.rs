//! Templated GAP-style snippets for desk-scale runs and tests.
//!
//! Each snippet names two people of the same gender and then refers to one
//! of them with a pronoun placed after both names. The referent is usually
//! the nearer (later) name, occasionally the farther one, and sometimes
//! neither. Which name is reported as `A` is a coin flip, so gold labels are
//! split evenly between `A` and `B`. Genders alternate by row index.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gap_data::{GapExample, Label};

/// Probability that the pronoun refers to the nearer name.
pub const P_NEARER: f64 = 0.9;
/// Probability that it refers to neither name.
pub const P_NEITHER: f64 = 0.05;

const FEMALE: [&str; 24] = [
    "Alice", "Maria", "Julia", "Anna", "Sophie", "Clara", "Helen", "Laura", "Emma", "Grace", "Irene", "Nora",
    "Olivia", "Rachel", "Sarah", "Teresa", "Ursula", "Vera", "Wendy", "Yvonne", "Zoe", "Diana", "Fiona", "Paula",
];
const MALE: [&str; 24] = [
    "Bob", "David", "Peter", "Thomas", "George", "Henry", "Victor", "Oscar", "Martin", "Samuel", "Walter", "Louis",
    "Arthur", "Bernard", "Carl", "Edward", "Frank", "Hugo", "Ivan", "Jack", "Kevin", "Leon", "Mark", "Neil",
];
const SURNAMES: [&str; 16] = [
    "Smith", "Garcia", "Novak", "Larsen", "Okafor", "Moreau", "Keller", "Rossi", "Tanaka", "Hughes", "Silva",
    "Berg", "Walsh", "Jensen", "Costa", "Meyer",
];
const PLACES: [&str; 8] = ["museum", "station", "harbour", "library", "theatre", "market", "studio", "college"];
const THINGS: [&str; 8] = ["album", "report", "novel", "bridge", "garden", "film", "exhibition", "campaign"];
const CITIES: [&str; 6] = ["Lisbon", "Oslo", "Dublin", "Vienna", "Toronto", "Lyon"];
const VERBS: [&str; 6] = ["finished", "planned", "described", "praised", "rebuilt", "announced"];

/// Pieces of a template: literal text, the two names, or the pronoun.
enum Part {
    Lit(String),
    First,
    Second,
    Pronoun,
}

/// Pronoun forms for one gender: subject, object, possessive.
fn forms(feminine: bool) -> [&'static str; 3] {
    if feminine {
        ["she", "her", "her"]
    } else {
        ["he", "him", "his"]
    }
}

fn template(rng: &mut ChaCha8Rng) -> (Vec<Part>, usize) {
    use Part::*;
    let place = *PLACES.choose(rng).expect("non-empty");
    let thing = *THINGS.choose(rng).expect("non-empty");
    let city = *CITIES.choose(rng).expect("non-empty");
    let verb = *VERBS.choose(rng).expect("non-empty");
    // The second field selects the pronoun form.
    match rng.random_range(0..5) {
        0 => (
            vec![
                First,
                Lit(" met ".into()),
                Second,
                Lit(format!(" at the {place} in {city}, and ")),
                Pronoun,
                Lit(format!(" {verb} the {thing} soon after.")),
            ],
            0,
        ),
        1 => (
            vec![
                First,
                Lit(" worked with ".into()),
                Second,
                Lit(" for many years. Later ".into()),
                Pronoun,
                Lit(format!(" {verb} a {thing} in {city}.")),
            ],
            0,
        ),
        2 => (
            vec![
                Lit("After ".into()),
                First,
                Lit(" introduced ".into()),
                Second,
                Lit(format!(" to the {place}, everyone admired ")),
                Pronoun,
                Lit(format!(" for the {thing}.")),
            ],
            1,
        ),
        3 => (
            vec![
                First,
                Lit(format!(" visited the {place} with ")),
                Second,
                Lit(format!(". The {thing} that ")),
                Pronoun,
                Lit(format!(" {verb} was shown in {city}.")),
            ],
            0,
        ),
        _ => (
            vec![
                Lit(format!("In {city}, ")),
                First,
                Lit(" wrote to ".into()),
                Second,
                Lit(" about ".into()),
                Pronoun,
                Lit(format!(" {thing} at the {place}.")),
            ],
            2,
        ),
    }
}

fn full_name(rng: &mut ChaCha8Rng, pool: &[&str], taken: &str) -> String {
    loop {
        let first = *pool.choose(rng).expect("non-empty");
        if taken.contains(first) {
            continue;
        }
        return if rng.random_bool(0.4) {
            format!("{first} {}", SURNAMES.choose(rng).expect("non-empty"))
        } else {
            first.to_string()
        };
    }
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Gold label for one snippet given which name is nearer.
fn draw_gold(rng: &mut ChaCha8Rng, a_is_nearer: bool) -> Label {
    let u: f64 = rng.random();
    let (nearer, farther) = if a_is_nearer { (Label::A, Label::B) } else { (Label::B, Label::A) };
    if u < P_NEARER {
        nearer
    } else if u < 1.0 - P_NEITHER {
        farther
    } else {
        Label::Neither
    }
}

fn example(i: usize, rng: &mut ChaCha8Rng) -> GapExample {
    let feminine = i % 2 == 1;
    let pool: &[&str] = if feminine { &FEMALE } else { &MALE };
    let first = full_name(rng, pool, "");
    let second = full_name(rng, pool, &first);
    let (parts, form) = template(rng);
    let pronoun_form = forms(feminine)[form];

    let mut text = String::new();
    let mut len = 0usize;
    let (mut first_at, mut second_at, mut p_at) = (0, 0, 0);
    let mut pronoun = String::new();
    for part in parts {
        let piece = match part {
            Part::Lit(s) => s,
            Part::First => {
                first_at = len;
                first.clone()
            }
            Part::Second => {
                second_at = len;
                second.clone()
            }
            Part::Pronoun => {
                p_at = len;
                pronoun = if text.ends_with(". ") {
                    capitalise(pronoun_form)
                } else {
                    pronoun_form.to_string()
                };
                pronoun.clone()
            }
        };
        len += piece.chars().count();
        text.push_str(&piece);
    }

    // The second name is always the nearer one.
    let a_is_nearer = rng.random_bool(0.5);
    let gold = draw_gold(rng, a_is_nearer);
    let ((a_text, a_offset), (b_text, b_offset)) = if a_is_nearer {
        ((second, second_at), (first, first_at))
    } else {
        ((first, first_at), (second, second_at))
    };
    let title = match rng.random_range(0..3) {
        0 => a_text.clone(),
        1 => b_text.clone(),
        _ => full_name(rng, pool, &format!("{a_text} {b_text}")),
    };
    GapExample {
        id: format!("synth-{i:04}"),
        text,
        pronoun,
        pronoun_offset: p_at,
        a_text,
        a_offset,
        b_text,
        b_offset,
        url: format!("http://en.wikipedia.org/wiki/{}", title.replace(' ', "_")),
        gold: Some(gold),
    }
}

/// `n` labelled snippets, deterministic in `seed`.
pub fn generate(n: usize, seed: u64) -> Vec<GapExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| example(i, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gap_data::{gender_of, validate, Gender};

    #[test]
    fn snippets_are_valid_and_balanced() {
        let data = generate(100, 7);
        assert!(validate(&data).is_empty(), "{:?}", validate(&data));
        let fem = data.iter().filter(|e| gender_of(e).unwrap() == Gender::Feminine).count();
        assert_eq!(fem, 50);
        assert_eq!(data, generate(100, 7));
        assert_ne!(data, generate(100, 8));
    }

    #[test]
    fn pronoun_follows_both_names() {
        for e in generate(200, 3) {
            assert!(e.pronoun_offset > e.a_offset && e.pronoun_offset > e.b_offset, "{}", e.id);
        }
    }

    #[test]
    fn gold_distribution_matches_design() {
        let data = generate(10_000, 11);
        let share = |l: Label| data.iter().filter(|e| e.gold == Some(l)).count() as f64 / data.len() as f64;
        assert!((share(Label::A) - 0.475).abs() < 0.02);
        assert!((share(Label::B) - 0.475).abs() < 0.02);
        assert!((share(Label::Neither) - P_NEITHER).abs() < 0.01);
        let nearer = data
            .iter()
            .filter(|e| {
                let a_near = e.a_offset > e.b_offset;
                matches!((e.gold, a_near), (Some(Label::A), true) | (Some(Label::B), false))
            })
            .count() as f64
            / data.len() as f64;
        assert!((nearer - P_NEARER).abs() < 0.015);
    }
}
