//! Syntactic views and a deterministic rule-based provider.
//!
//! The rule-based parser is a heuristic stand-in for a dependency parser:
//! clauses are split at conjunctions and clause punctuation; inside a clause
//! the first noun phrase before the first verb is the subject, the first
//! non-prepositional noun phrase after it is the direct object (or the
//! attribute, after a copula).

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::text::{words, CharSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pos {
    Pronoun,
    PossessivePronoun,
    ProperNoun,
    Noun,
    Verb,
    Determiner,
    Preposition,
    Conjunction,
    Adverb,
    Punct,
    Number,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Subject,
    DirectObject,
    Attribute,
    Other,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Subject, Role::DirectObject, Role::Attribute, Role::Other];

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[Role::ALL.iter().position(|r| *r == self).expect("listed")] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NerTag {
    Person,
    Org,
    Gpe,
    Other,
}

impl NerTag {
    pub const ALL: [NerTag; 4] = [NerTag::Person, NerTag::Org, NerTag::Gpe, NerTag::Other];

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[NerTag::ALL.iter().position(|r| *r == self).expect("listed")] = 1.0;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub text: String,
    pub span: CharSpan,
    pub pos: Pos,
    pub role: Role,
    pub sentence: usize,
    pub ner: NerTag,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseView {
    pub tokens: Vec<ParsedToken>,
}

impl ParseView {
    /// Sentence indices must start at zero and never decrease.
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut prev = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.sentence < prev || (i == 0 && t.sentence != 0) {
                return Err(FeatureError::BadParse(format!(
                    "token {i} has sentence {} after {prev}",
                    t.sentence
                )));
            }
            prev = t.sentence;
        }
        Ok(())
    }

    /// Indices of tokens overlapping `span`.
    pub fn covering(&self, span: CharSpan) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.span.overlaps(&span))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sentence_count(&self) -> usize {
        self.tokens.last().map(|t| t.sentence + 1).unwrap_or(0)
    }
}

/// Anything able to produce a [`ParseView`] for raw text.
pub trait SyntaxProvider: Send + Sync {
    fn parse(&self, text: &str) -> Result<ParseView, FeatureError>;
}

const PRONOUNS: &[&str] = &[
    "he", "him", "she", "hers", "it", "they", "them", "i", "me", "you", "we", "us", "himself", "herself",
    "themselves", "theirs",
];
const POSSESSIVES: &[&str] = &["his", "its", "their", "my", "your", "our"];
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "these", "those", "some", "any", "each", "every", "no", "another", "both",
];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "to", "for", "with", "from", "by", "of", "about", "into", "onto", "over", "under", "during",
    "between", "through", "against", "without", "within", "among", "upon", "like", "near", "across", "behind",
    "toward", "towards", "beside", "around",
];
const CONJUNCTIONS: &[&str] = &[
    "and", "but", "or", "because", "while", "when", "although", "though", "since", "until", "unless", "whereas",
    "so", "if", "where", "who", "whom", "whose", "which", "that", "then", "after", "before", "as", "nor", "yet",
];
const COPULAS: &[&str] = &[
    "is", "was", "were", "are", "be", "been", "being", "am", "became", "becomes", "become", "remained", "remains",
    "seemed", "seems",
];
const VERBS: &[&str] = &[
    "has", "had", "have", "did", "does", "do", "will", "would", "could", "should", "can", "may", "might", "must",
    "said", "says", "say", "told", "tells", "tell", "met", "meets", "meet", "saw", "sees", "see", "called", "calls",
    "asked", "asks", "wanted", "wants", "knew", "knows", "know", "thought", "thinks", "took", "takes", "gave",
    "gives", "made", "makes", "went", "goes", "left", "leaves", "won", "wins", "wrote", "writes", "found", "finds",
    "joined", "joins", "married", "marries", "visited", "visits", "thanked", "thanks", "loves", "likes", "helps",
    "hired", "hires", "sang", "sings", "ran", "runs", "began", "begins", "came", "comes", "brought", "brings",
    "taught", "teaches", "felt", "feels", "kept", "keeps", "heard", "hears", "held", "holds", "led", "leads",
    "lost", "loses", "paid", "pays", "sent", "sends", "spoke", "speaks", "stood", "stands", "understood", "read",
    "built", "bought", "caught", "chose", "drew", "drove", "fell", "fought", "forgot", "forgave", "grew", "hid",
    "hit", "hurt", "let", "meant", "put", "rose", "sat", "set", "shot", "slept", "sold", "spent", "struck", "swam",
    "threw", "woke", "wore", "arrives", "arrived", "confides", "realizes", "believes", "lives", "looked", "couldn",
    "smiled", "laughed", "waved", "danced", "admires", "praises", "greeted", "greets", "trusts", "warned", "warns",
    "phoned", "emailed", "interviewed", "recommended", "replaced", "succeeded", "defeated", "coached", "mentored",
];
const ORG_WORDS: &[&str] = &[
    "Inc", "Corp", "Corporation", "Company", "University", "College", "School", "Club", "Party", "FC", "Records",
    "Band", "Association", "Society", "Institute", "Council", "Ministry", "Bank", "Group", "Studios", "Agency",
];
const GPE_WORDS: &[&str] = &[
    "France", "England", "London", "Paris", "America", "Canada", "Germany", "Berlin", "Italy", "Rome", "Spain",
    "Madrid", "China", "Japan", "Tokyo", "India", "Australia", "Sydney", "Ireland", "Dublin", "Scotland", "Wales",
    "Boston", "Chicago", "Texas", "California", "York", "Russia", "Moscow", "Mexico", "Brazil", "Egypt", "Africa",
    "Europe", "Asia", "Britain", "Poland", "Sweden", "Norway", "Denmark", "Austria", "Vienna", "Greece", "Athens",
];
const ABBREVIATIONS: &[&str] = &["Mr", "Mrs", "Ms", "Dr", "St", "Jr", "Sr", "Prof", "Mt", "vs", "Gen", "Col", "Lt"];

/// Heuristic parser with no external model.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedParser;

fn lower_in(word: &str, list: &[&str]) -> bool {
    let lw = word.to_lowercase();
    list.contains(&lw.as_str())
}

fn classify(word: &str, next: Option<&str>) -> Pos {
    let first = word.chars().next().expect("non-empty word");
    if !first.is_alphanumeric() {
        return Pos::Punct;
    }
    if word.chars().all(|c| c.is_ascii_digit()) {
        return Pos::Number;
    }
    let lw = word.to_lowercase();
    if lw == "her" {
        // "her" before a noun is a determiner-like possessive.
        let noun_next = next.is_some_and(|n| {
            n.chars().next().is_some_and(char::is_alphanumeric)
                && !lower_in(n, PREPOSITIONS)
                && !lower_in(n, CONJUNCTIONS)
                && !lower_in(n, VERBS)
                && !lower_in(n, COPULAS)
                && !lower_in(n, DETERMINERS)
        });
        return if noun_next { Pos::PossessivePronoun } else { Pos::Pronoun };
    }
    if lower_in(word, PRONOUNS) {
        return Pos::Pronoun;
    }
    if lower_in(word, POSSESSIVES) {
        return Pos::PossessivePronoun;
    }
    if lower_in(word, DETERMINERS) {
        return Pos::Determiner;
    }
    if lower_in(word, PREPOSITIONS) {
        return Pos::Preposition;
    }
    if lower_in(word, CONJUNCTIONS) {
        return Pos::Conjunction;
    }
    if lower_in(word, COPULAS) || lower_in(word, VERBS) {
        return Pos::Verb;
    }
    if first.is_uppercase() {
        return Pos::ProperNoun;
    }
    if lw.len() > 3 && lw.ends_with("ed") {
        return Pos::Verb;
    }
    if lw.len() > 3 && lw.ends_with("ly") {
        return Pos::Adverb;
    }
    Pos::Noun
}

fn is_nominal(p: Pos) -> bool {
    matches!(p, Pos::Pronoun | Pos::ProperNoun | Pos::Noun)
}

impl SyntaxProvider for RuleBasedParser {
    fn parse(&self, text: &str) -> Result<ParseView, FeatureError> {
        let raw = words(text);
        let mut tokens: Vec<ParsedToken> = Vec::with_capacity(raw.len());
        let mut sentence = 0;
        let mut end_pending = false;
        for (i, (w, span)) in raw.iter().enumerate() {
            if end_pending {
                sentence += 1;
                end_pending = false;
            }
            let pos = classify(w, raw.get(i + 1).map(|(n, _)| *n));
            if matches!(*w, "." | "!" | "?") {
                let prev = i.checked_sub(1).map(|j| raw[j].0);
                let abbreviation = prev.is_some_and(|p| {
                    ABBREVIATIONS.contains(&p) || (p.chars().count() == 1 && p.chars().all(char::is_uppercase))
                });
                if !abbreviation && i + 1 < raw.len() {
                    end_pending = true;
                }
            }
            tokens.push(ParsedToken {
                text: w.to_string(),
                span: *span,
                pos,
                role: Role::Other,
                sentence,
                ner: NerTag::Other,
            });
        }
        assign_roles(&mut tokens);
        assign_entities(&mut tokens);
        Ok(ParseView { tokens })
    }
}

fn is_clause_break(t: &ParsedToken) -> bool {
    t.pos == Pos::Conjunction || matches!(t.text.as_str(), "," | ";" | ":" | "(" | ")" | "." | "!" | "?" | "\"")
}

/// Noun phrases as token index ranges: runs of proper nouns, runs of common
/// nouns, or a single pronoun.
fn noun_phrases(tokens: &[ParsedToken], range: std::ops::Range<usize>) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        let p = tokens[i].pos;
        if !is_nominal(p) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if p != Pos::Pronoun {
            while j < range.end && tokens[j].pos == p {
                j += 1;
            }
        }
        out.push(i..j);
        i = j;
    }
    out
}

fn assign_roles(tokens: &mut [ParsedToken]) {
    let mut start = 0;
    while start < tokens.len() {
        let mut end = start;
        while end < tokens.len() && !is_clause_break(&tokens[end]) {
            end += 1;
        }
        let verb = (start..end).find(|&k| tokens[k].pos == Pos::Verb);
        let mut have_subject = false;
        let mut have_object = false;
        for np in noun_phrases(tokens, start..end) {
            let after_prep = np.start > start && tokens[np.start - 1].pos == Pos::Preposition
                || (np.start > start + 1
                    && matches!(tokens[np.start - 1].pos, Pos::Determiner | Pos::PossessivePronoun)
                    && tokens[np.start - 2].pos == Pos::Preposition);
            let role = match verb {
                _ if after_prep => Role::Other,
                Some(v) if np.start < v => {
                    if have_subject {
                        Role::Other
                    } else {
                        have_subject = true;
                        Role::Subject
                    }
                }
                Some(v) if !have_object => {
                    have_object = true;
                    if lower_in(&tokens[v].text, COPULAS) {
                        Role::Attribute
                    } else {
                        Role::DirectObject
                    }
                }
                None if !have_subject => {
                    have_subject = true;
                    Role::Subject
                }
                _ => Role::Other,
            };
            for t in &mut tokens[np] {
                t.role = role;
            }
        }
        start = end + 1;
    }
}

fn assign_entities(tokens: &mut [ParsedToken]) {
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].pos != Pos::ProperNoun {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < tokens.len() && tokens[j].pos == Pos::ProperNoun {
            j += 1;
        }
        let run = &tokens[i..j];
        let tag = if run.iter().any(|t| ORG_WORDS.contains(&t.text.as_str())) {
            NerTag::Org
        } else if run.iter().any(|t| GPE_WORDS.contains(&t.text.as_str())) {
            NerTag::Gpe
        } else {
            NerTag::Person
        };
        for t in &mut tokens[i..j] {
            t.ner = tag;
        }
        i = j;
    }
}
