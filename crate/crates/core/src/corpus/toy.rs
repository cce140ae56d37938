//! Seeded generator for a small English→German/French parallel corpus.
//!
//! Sentences follow a handful of clause shapes over a fixed lexicon. Each
//! side also sprinkles independent discourse particles that have no
//! counterpart, so reference coverage sits below 1 the way it does for
//! natural text.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Language, ParallelPair};

#[derive(Clone, Copy)]
enum Gender {
    M,
    F,
    N,
}

struct Noun {
    en: &'static str,
    de: &'static str,
    de_gender: Gender,
    fr: &'static str,
    fr_fem: bool,
}

const fn n(en: &'static str, de: &'static str, de_gender: Gender, fr: &'static str, fr_fem: bool) -> Noun {
    Noun { en, de, de_gender, fr, fr_fem }
}

const NOUNS: &[Noun] = &[
    n("dog", "Hund", Gender::M, "chien", false),
    n("cat", "Katze", Gender::F, "chat", false),
    n("house", "Haus", Gender::N, "maison", true),
    n("tree", "Baum", Gender::M, "arbre", false),
    n("garden", "Garten", Gender::M, "jardin", false),
    n("book", "Buch", Gender::N, "livre", false),
    n("child", "Kind", Gender::N, "enfant", false),
    n("teacher", "Lehrer", Gender::M, "professeur", false),
    n("city", "Stadt", Gender::F, "ville", true),
    n("river", "Fluss", Gender::M, "fleuve", false),
    n("window", "Fenster", Gender::N, "fenetre", true),
    n("table", "Tisch", Gender::M, "table", true),
    n("letter", "Brief", Gender::M, "lettre", true),
    n("car", "Auto", Gender::N, "voiture", true),
    n("bird", "Vogel", Gender::M, "oiseau", false),
    n("woman", "Frau", Gender::F, "femme", true),
    n("man", "Mann", Gender::M, "homme", false),
    n("school", "Schule", Gender::F, "ecole", true),
    n("door", "Tur", Gender::F, "porte", true),
    n("flower", "Blume", Gender::F, "fleur", true),
    n("bread", "Brot", Gender::N, "pain", false),
    n("street", "Strasse", Gender::F, "rue", true),
    n("friend", "Freund", Gender::M, "ami", false),
    n("doctor", "Arzt", Gender::M, "medecin", false),
];

const ADJECTIVES: &[(&str, &str, &str)] = &[
    ("old", "alt", "vieux"),
    ("small", "klein", "petit"),
    ("big", "gross", "grand"),
    ("red", "rot", "rouge"),
    ("quiet", "still", "calme"),
    ("new", "neu", "nouveau"),
    ("green", "grun", "vert"),
    ("dark", "dunkel", "sombre"),
];

const VERBS: &[(&str, &str, &str)] = &[
    ("sees", "sieht", "voit"),
    ("finds", "findet", "trouve"),
    ("likes", "mag", "aime"),
    ("paints", "malt", "peint"),
    ("visits", "besucht", "visite"),
    ("follows", "folgt", "suit"),
    ("watches", "beobachtet", "regarde"),
    ("carries", "tragt", "porte"),
];

const PLACES: &[(&str, &str, &str)] = &[
    ("near", "bei", "pres"),
    ("behind", "hinter", "derriere"),
    ("under", "unter", "sous"),
    ("beside", "neben", "aupres"),
];

const TIMES: &[(&str, &str, &str)] = &[
    ("today", "heute", "aujourd'hui"),
    ("yesterday", "gestern", "hier"),
    ("often", "oft", "souvent"),
    ("tomorrow", "morgen", "demain"),
];

const PARTICLES_EN: &[&str] = &["well", "indeed", "surely"];
const PARTICLES_DE: &[&str] = &["ja", "doch", "halt", "eben"];
const PARTICLES_FR: &[&str] = &["donc", "bien", "alors", "quand"];
const PARTICLE_RATE: f64 = 0.5;

fn de_article(g: Gender) -> &'static str {
    match g {
        Gender::M => "der",
        Gender::F => "die",
        Gender::N => "das",
    }
}

fn de_adjective(stem: &str) -> String {
    format!("{stem}e")
}

fn fr_article(fem: bool) -> &'static str {
    if fem { "la" } else { "le" }
}

/// A noun phrase as (english, german, french) token lists.
fn noun_phrase(rng: &mut ChaCha8Rng) -> [Vec<String>; 3] {
    let noun = NOUNS.choose(rng).expect("lexicon is not empty");
    let mut en = vec!["the".to_string()];
    let mut de = vec![de_article(noun.de_gender).to_string()];
    let mut fr = vec![fr_article(noun.fr_fem).to_string()];
    let adj = if rng.random_bool(0.6) { ADJECTIVES.choose(rng) } else { None };
    if let Some(&(a_en, a_de, _)) = adj {
        en.push(a_en.into());
        de.push(de_adjective(a_de));
    }
    en.push(noun.en.into());
    de.push(noun.de.into());
    fr.push(noun.fr.into());
    if let Some(&(_, _, a_fr)) = adj {
        fr.push(a_fr.into());
    }
    [en, de, fr]
}

fn sprinkle(words: &mut Vec<String>, pool: &[&str], rng: &mut ChaCha8Rng) {
    if rng.random_bool(PARTICLE_RATE) {
        let pos = rng.random_range(1..=words.len());
        words.insert(pos, pool.choose(rng).expect("pool is not empty").to_string());
    }
}

fn sentence(rng: &mut ChaCha8Rng) -> [Vec<String>; 3] {
    let [mut en, mut de, mut fr] = noun_phrase(rng);
    let &(v_en, v_de, v_fr) = VERBS.choose(rng).expect("lexicon is not empty");
    let [o_en, o_de, o_fr] = noun_phrase(rng);
    let time = if rng.random_bool(0.5) { TIMES.choose(rng) } else { None };
    en.push(v_en.into());
    de.push(v_de.into());
    fr.push(v_fr.into());
    if let Some(&(_, t_de, _)) = time {
        de.push(t_de.into());
    }
    en.extend(o_en);
    de.extend(o_de);
    fr.extend(o_fr);
    if rng.random_bool(0.6) {
        let &(p_en, p_de, p_fr) = PLACES.choose(rng).expect("lexicon is not empty");
        let [l_en, l_de, l_fr] = noun_phrase(rng);
        en.push(p_en.into());
        en.extend(l_en);
        de.push(p_de.into());
        de.extend(l_de);
        fr.push(p_fr.into());
        fr.extend(l_fr);
    }
    if let Some(&(t_en, _, t_fr)) = time {
        en.push(t_en.into());
        fr.push(t_fr.into());
    }
    sprinkle(&mut en, PARTICLES_EN, rng);
    sprinkle(&mut de, PARTICLES_DE, rng);
    sprinkle(&mut fr, PARTICLES_FR, rng);
    [en, de, fr]
}

/// Generates `n` pairs: the first half English→German, the rest
/// English→French.
pub fn toy_corpus(seed: u64, n: usize) -> Vec<ParallelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let german = n.div_ceil(2);
    (0..n)
        .map(|i| {
            let [en, de, fr] = sentence(&mut rng);
            let (target, lang) = if i < german { (de, Language::De) } else { (fr, Language::Fr) };
            ParallelPair::new(en.join(" "), target.join(" "), Language::En, lang)
                .expect("generated sentences are never empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_split_by_direction() {
        let a = toy_corpus(3, 10);
        assert_eq!(a, toy_corpus(3, 10));
        assert_ne!(a, toy_corpus(4, 10));
        assert!(a[..5].iter().all(|p| p.target_lang == Language::De));
        assert!(a[5..].iter().all(|p| p.target_lang == Language::Fr));
        assert!(a.iter().all(|p| p.target.split_whitespace().count() >= 5));
    }
}
