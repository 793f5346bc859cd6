//! Grammar-based decomposition of spatial referring expressions into a
//! (target, anchor, relation) instruction.
//!
//! Relation phrases are matched longest-first against a fixed lexicon; the
//! single noun before the phrase is the target and the single noun after it
//! is the anchor. Anything outside the grammar yields a typed [`ParseError`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationClass {
    HorizontalProximity,
    VerticalProximity,
    Support,
    Allocentric,
}

impl RelationClass {
    pub const ALL: [RelationClass; 4] = [
        RelationClass::HorizontalProximity,
        RelationClass::VerticalProximity,
        RelationClass::Support,
        RelationClass::Allocentric,
    ];

    pub fn relations(self) -> &'static [Relation] {
        match self {
            RelationClass::HorizontalProximity => &[Relation::Near, Relation::Far],
            RelationClass::VerticalProximity => &[Relation::Above, Relation::Below],
            RelationClass::Support => &[Relation::SupportedBy, Relation::Supporting],
            RelationClass::Allocentric => &[
                Relation::Left,
                Relation::Right,
                Relation::Front,
                Relation::Behind,
            ],
        }
    }
}

/// Spatial relation; the variant is the subtype and determines its class.
///
/// Serialized as `{"class": "Support", "subtype": "SupportedBy"}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "RelationRepr", try_from = "RelationRepr")]
pub enum Relation {
    Near,
    Far,
    Above,
    Below,
    SupportedBy,
    Supporting,
    Left,
    Right,
    Front,
    Behind,
}

#[derive(Serialize, Deserialize)]
struct RelationRepr {
    class: RelationClass,
    subtype: String,
}

impl From<Relation> for RelationRepr {
    fn from(r: Relation) -> Self {
        RelationRepr {
            class: r.class(),
            subtype: r.name().to_string(),
        }
    }
}

impl TryFrom<RelationRepr> for Relation {
    type Error = String;
    fn try_from(r: RelationRepr) -> Result<Self, String> {
        let rel = Relation::from_name(&r.subtype)
            .ok_or_else(|| format!("unknown relation subtype {:?}", r.subtype))?;
        if rel.class() != r.class {
            return Err(format!(
                "subtype {} does not belong to class {:?}",
                r.subtype, r.class
            ));
        }
        Ok(rel)
    }
}

impl Relation {
    pub const ALL: [Relation; 10] = [
        Relation::Near,
        Relation::Far,
        Relation::Above,
        Relation::Below,
        Relation::SupportedBy,
        Relation::Supporting,
        Relation::Left,
        Relation::Right,
        Relation::Front,
        Relation::Behind,
    ];

    pub fn class(self) -> RelationClass {
        match self {
            Relation::Near | Relation::Far => RelationClass::HorizontalProximity,
            Relation::Above | Relation::Below => RelationClass::VerticalProximity,
            Relation::SupportedBy | Relation::Supporting => RelationClass::Support,
            Relation::Left | Relation::Right | Relation::Front | Relation::Behind => {
                RelationClass::Allocentric
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Near => "Near",
            Relation::Far => "Far",
            Relation::Above => "Above",
            Relation::Below => "Below",
            Relation::SupportedBy => "SupportedBy",
            Relation::Supporting => "Supporting",
            Relation::Left => "Left",
            Relation::Right => "Right",
            Relation::Front => "Front",
            Relation::Behind => "Behind",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(name))
    }

    /// Phrase used when generating queries.
    pub fn primary_phrase(self) -> &'static str {
        match self {
            Relation::Near => "closest to",
            Relation::Far => "farthest from",
            Relation::Above => "above",
            Relation::Below => "under",
            Relation::SupportedBy => "on",
            Relation::Supporting => "supporting",
            Relation::Left => "left of",
            Relation::Right => "right of",
            Relation::Front => "in front of",
            Relation::Behind => "behind",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.class(), self.name())
    }
}

const LEXICON: &[(&str, Relation)] = &[
    ("on", Relation::SupportedBy),
    ("on top of", Relation::SupportedBy),
    ("supported by", Relation::SupportedBy),
    ("sitting on", Relation::SupportedBy),
    ("resting on", Relation::SupportedBy),
    ("lying on", Relation::SupportedBy),
    ("supporting", Relation::Supporting),
    ("holding up", Relation::Supporting),
    ("beneath it holding", Relation::Supporting),
    ("above", Relation::Above),
    ("over", Relation::Above),
    ("hovering over", Relation::Above),
    ("below", Relation::Below),
    ("under", Relation::Below),
    ("beneath", Relation::Below),
    ("underneath", Relation::Below),
    ("near", Relation::Near),
    ("next to", Relation::Near),
    ("closest to", Relation::Near),
    ("nearest to", Relation::Near),
    ("close to", Relation::Near),
    ("beside", Relation::Near),
    ("far from", Relation::Far),
    ("farthest from", Relation::Far),
    ("furthest from", Relation::Far),
    ("far away from", Relation::Far),
    ("left of", Relation::Left),
    ("to the left of", Relation::Left),
    ("on the left of", Relation::Left),
    ("right of", Relation::Right),
    ("to the right of", Relation::Right),
    ("on the right of", Relation::Right),
    ("in front of", Relation::Front),
    ("behind", Relation::Behind),
    ("in back of", Relation::Behind),
];

/// Phrase to relation table.
pub fn relation_lexicon() -> BTreeMap<String, Relation> {
    LEXICON
        .iter()
        .map(|(p, r)| (p.to_string(), *r))
        .collect()
}

/// Built-in noun vocabulary (canonical forms).
pub const NOUNS: [&str; 50] = [
    "book", "chair", "table", "mug", "laptop", "box", "lamp", "vase", "plant", "bottle", "bowl",
    "ball", "pillow", "couch", "shelf", "desk", "stool", "crate", "basket", "clock", "television",
    "monitor", "keyboard", "phone", "cabinet", "bed", "door", "window", "picture", "bag", "shoe",
    "hat", "toy", "apple", "banana", "orange", "kettle", "plate", "fork", "knife", "spoon",
    "speaker", "radio", "candle", "pot", "jar", "towel", "blanket", "carpet", "bench",
];

const FILLERS: &[&str] = &[
    "the", "a", "an", "that", "which", "is", "are", "can", "could", "you", "please", "find",
    "locate", "show", "me", "where", "point", "to", "select", "there",
];

pub const TEMPLATES: [&str; 6] = [
    "the {t} that is {r} the {a}",
    "can you find the {t} that is {r} the {a}?",
    "the {t} {r} the {a}",
    "find the {t} {r} the {a}",
    "where is the {t} that is {r} the {a}?",
    "please locate the {t} {r} the {a}",
];

/// Parsed query: which object to find, relative to which reference, how.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub target: String,
    pub anchor: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no relation phrase found")]
    NoRelation,
    #[error("ambiguous query: {0}")]
    Ambiguous(String),
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("no target object before the relation phrase")]
    MissingTarget,
    #[error("no anchor object after the relation phrase")]
    MissingAnchor,
    #[error("target and anchor are both {0:?}, which only proximity relations allow")]
    SelfReference(String),
}

impl ParseError {
    /// Stable short tag for reports.
    pub fn tag(&self) -> &'static str {
        match self {
            ParseError::NoRelation => "NoRelation",
            ParseError::Ambiguous(_) => "Ambiguous",
            ParseError::UnknownConcept(_) => "UnknownConcept",
            ParseError::MissingTarget => "MissingTarget",
            ParseError::MissingAnchor => "MissingAnchor",
            ParseError::SelfReference(_) => "SelfReference",
        }
    }
}

/// Query grammar: relation lexicon, noun set and synonym table.
#[derive(Debug, Clone)]
pub struct Parser {
    phrases: Vec<(Vec<String>, Relation)>,
    nouns: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
}

impl Default for Parser {
    fn default() -> Self {
        Self::with_vocabulary(&Vocabulary::default())
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Parser {
    /// Built-in nouns with the vocabulary's synonyms.
    pub fn with_vocabulary(vocab: &Vocabulary) -> Self {
        let mut phrases: Vec<(Vec<String>, Relation)> = LEXICON
            .iter()
            .map(|(p, r)| (tokenize(p), *r))
            .collect();
        // longest phrases first so the first hit at a position is the longest
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Self {
            phrases,
            nouns: NOUNS.iter().map(|n| n.to_string()).collect(),
            synonyms: vocab.synonyms.clone(),
        }
    }

    /// Adds extra canonical nouns (e.g. scene categories).
    pub fn with_nouns<I, S>(mut self, nouns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.nouns
            .extend(nouns.into_iter().map(|n| n.as_ref().to_lowercase()));
        self
    }

    pub fn nouns(&self) -> impl Iterator<Item = &str> {
        self.nouns.iter().map(String::as_str)
    }

    fn canonical_noun(&self, token: &str) -> Option<String> {
        let c = self.synonyms.get(token).map(String::as_str).unwrap_or(token);
        self.nouns.contains(c).then(|| c.to_string())
    }

    fn concept(&self, tokens: &[String], missing: ParseError) -> Result<String, ParseError> {
        let content: Vec<&String> = tokens
            .iter()
            .filter(|t| !FILLERS.contains(&t.as_str()))
            .collect();
        let mut found = Vec::new();
        for t in &content {
            match self.canonical_noun(t) {
                Some(n) => found.push(n),
                None => return Err(ParseError::UnknownConcept(t.to_string())),
            }
        }
        match found.len() {
            0 => Err(missing),
            1 => Ok(found.pop().expect("one noun")),
            _ => Err(ParseError::Ambiguous(format!(
                "several objects named together: {}",
                found.join(", ")
            ))),
        }
    }

    pub fn parse(&self, text: &str) -> Result<Instruction, ParseError> {
        let tokens = tokenize(text);
        let mut matches: Vec<(usize, usize, Relation)> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.phrases.iter().find(|(p, _)| {
                i + p.len() <= tokens.len() && tokens[i..i + p.len()] == p[..]
            });
            match hit {
                Some((p, r)) => {
                    matches.push((i, i + p.len(), *r));
                    i += p.len();
                }
                None => i += 1,
            }
        }
        let (start, end, relation) = match matches.as_slice() {
            [] => return Err(ParseError::NoRelation),
            [only] => *only,
            many => {
                let names: Vec<String> = many
                    .iter()
                    .map(|(s, e, r)| format!("{:?} ({})", tokens[*s..*e].join(" "), r.name()))
                    .collect();
                return Err(ParseError::Ambiguous(format!(
                    "multiple relation phrases: {}",
                    names.join(", ")
                )));
            }
        };
        let target = self.concept(&tokens[..start], ParseError::MissingTarget)?;
        let anchor = self.concept(&tokens[end..], ParseError::MissingAnchor)?;
        if target == anchor && relation.class() != RelationClass::HorizontalProximity {
            return Err(ParseError::SelfReference(target));
        }
        Ok(Instruction {
            target,
            anchor,
            relation,
        })
    }

    /// Renders an instruction with `template_id` and an explicit phrase.
    pub fn generate_with_phrase(
        instruction: &Instruction,
        template_id: usize,
        phrase: &str,
    ) -> String {
        TEMPLATES[template_id]
            .replace("{t}", &instruction.target)
            .replace("{a}", &instruction.anchor)
            .replace("{r}", phrase)
    }
}

/// Parses with the default grammar.
pub fn parse_query(text: &str) -> Result<Instruction, ParseError> {
    Parser::default().parse(text)
}

/// Renders an instruction with the relation's primary phrase.
///
/// # Panics
/// If `template_id >= TEMPLATES.len()`.
pub fn generate_query(instruction: &Instruction, template_id: usize) -> String {
    Parser::generate_with_phrase(
        instruction,
        template_id,
        instruction.relation.primary_phrase(),
    )
}
