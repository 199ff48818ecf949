use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Deref;

use super::DiffError;

/// Punctuation marks split off from their neighbouring word by [`tokenize`].
pub const DETACHED_PUNCTUATION: [char; 4] = ['.', ',', '?', '!'];

/// An ordered sequence of word tokens.
///
/// Tokens are never empty and never contain whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new<I, S>(tokens: I) -> Result<Self, DiffError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for (index, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(DiffError::InvalidToken {
                    index,
                    token: token.clone(),
                });
            }
            if token.chars().any(char::is_whitespace) {
                return Err(DiffError::InvalidToken {
                    index,
                    token: token.clone(),
                });
            }
        }
        Ok(Self(tokens))
    }

    /// Builds a sequence from whitespace-separated text without any punctuation handling.
    pub fn from_words(text: &str) -> Self {
        Self(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    /// Concatenates sequences in the given order.
    pub fn concat<'a, I>(parts: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        Self(
            parts
                .into_iter()
                .flat_map(|p| p.0.iter().cloned())
                .collect(),
        )
    }

    pub fn lowercased(&self) -> Self {
        Self(self.0.iter().map(|t| t.to_lowercase()).collect())
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl AsRef<[String]> for TokenSeq {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = DiffError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        TokenSeq::new(tokens)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

/// Lowercases, splits on whitespace and detaches `.`, `,`, `?` and `!` into their own tokens.
///
/// A punctuation mark is only detached at the edges of a word, so decimals and
/// abbreviations such as `3.5` keep their inner dots.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let mut core = word.as_str();
        let mut leading = Vec::new();
        while let Some(c) = core
            .chars()
            .next()
            .filter(|c| DETACHED_PUNCTUATION.contains(c))
        {
            leading.push(c.to_string());
            core = &core[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = core
            .chars()
            .last()
            .filter(|c| DETACHED_PUNCTUATION.contains(c))
        {
            trailing.push(c.to_string());
            core = &core[..core.len() - c.len_utf8()];
        }
        out.extend(leading);
        if !core.is_empty() {
            out.push(core.to_owned());
        }
        out.extend(trailing.into_iter().rev());
    }
    TokenSeq(out)
}

/// Which context occurrence an ADD span binds to when it appears more than once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrence {
    First,
    #[default]
    Last,
}

/// Token equivalence used for alignment and context lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub lowercase: bool,
    /// Compare singular and plural forms (`flights`/`flight`, `cities`/`city`).
    pub plural_stem: bool,
    pub occurrence: Occurrence,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            lowercase: true,
            plural_stem: true,
            occurrence: Occurrence::Last,
        }
    }
}

impl MatchPolicy {
    /// Exact surface comparison.
    pub const EXACT: MatchPolicy = MatchPolicy {
        lowercase: false,
        plural_stem: false,
        occurrence: Occurrence::Last,
    };

    /// The comparison key of a token under this policy.
    pub fn normalize(&self, token: &str) -> String {
        let mut key = if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_owned()
        };
        if self.plural_stem {
            if key.len() > 3 && key.ends_with("ies") {
                key.truncate(key.len() - 3);
                key.push('y');
            } else if key.len() > 1 && key.ends_with('s') {
                key.pop();
            }
        }
        key
    }

    pub fn matches(&self, a: &str, b: &str) -> bool {
        if !self.lowercase && !self.plural_stem {
            return a == b;
        }
        self.normalize(a) == self.normalize(b)
    }

    pub fn normalize_all(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.normalize(t)).collect()
    }
}

/// One conversation at a given turn: chronological context turns plus the current question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub context_turns: Vec<TokenSeq>,
    pub question: TokenSeq,
    pub gold_rewrite: Option<TokenSeq>,
    pub turn_index: usize,
}

impl Interaction {
    pub fn new(
        context_turns: Vec<TokenSeq>,
        question: TokenSeq,
        gold_rewrite: Option<TokenSeq>,
    ) -> Result<Self, DiffError> {
        if question.is_empty() {
            return Err(DiffError::EmptyQuestion);
        }
        let turn_index = context_turns.len() + 1;
        Ok(Self {
            context_turns,
            question,
            gold_rewrite,
            turn_index,
        })
    }

    /// Context turns concatenated chronologically, no separators.
    pub fn flattened_context(&self) -> TokenSeq {
        TokenSeq::concat(&self.context_turns)
    }

    pub fn context_turn_lengths(&self) -> Vec<usize> {
        self.context_turns.iter().map(|t| t.len()).collect()
    }
}
