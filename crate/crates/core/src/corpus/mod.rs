//! Message ingestion, tokenization and user-level filtering.

mod load;
mod tokenize;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use load::{
    load_demographics, load_messages, DemographicRow, DemographicsTable, LoadedMessages,
    MessageFormat, RowError,
};
pub use tokenize::{default_emoticons, default_stopwords, Tokenizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub user_id: String,
    pub text: String,
    /// Seconds since the epoch.
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unknown,
}

impl Gender {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "1" | "woman" => Gender::Female,
            "m" | "male" | "0" | "man" => Gender::Male,
            _ => Gender::Unknown,
        }
    }

    /// 0/1 indicator (female = 1); `None` when unknown.
    pub fn indicator(self) -> Option<f64> {
        match self {
            Gender::Female => Some(1.0),
            Gender::Male => Some(0.0),
            Gender::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedMessage {
    pub timestamp: Option<i64>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub user_id: String,
    pub age: Option<f64>,
    pub gender: Gender,
    /// Token multiset.
    pub tokens: HashMap<String, u32>,
    pub total_token_count: u64,
    /// Sorted ascending.
    pub message_timestamps: Vec<i64>,
    /// Non-empty messages in input order.
    pub messages: Vec<TokenizedMessage>,
}

impl UserRecord {
    pub fn from_messages(
        user_id: String,
        age: Option<f64>,
        gender: Gender,
        messages: Vec<TokenizedMessage>,
    ) -> Self {
        let mut tokens: HashMap<String, u32> = HashMap::new();
        let mut total = 0u64;
        let mut stamps = Vec::new();
        for m in &messages {
            for t in &m.tokens {
                *tokens.entry(t.clone()).or_default() += 1;
            }
            total += m.tokens.len() as u64;
            if let Some(ts) = m.timestamp {
                stamps.push(ts);
            }
        }
        stamps.sort_unstable();
        Self {
            user_id,
            age,
            gender,
            tokens,
            total_token_count: total,
            message_timestamps: stamps,
            messages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_words: u64,
    /// `None` disables the age ceiling.
    pub max_age: Option<f64>,
    pub require_demographics: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_words: 1000,
            max_age: Some(65.0),
            require_demographics: false,
        }
    }
}

impl FilterConfig {
    pub fn permissive() -> Self {
        Self {
            min_words: 0,
            max_age: None,
            require_demographics: false,
        }
    }
}

/// Per-rule drop counts. Each dropped user is attributed to the first rule it
/// fails, in field order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total_users: usize,
    pub kept: usize,
    pub dropped_excluded: usize,
    pub dropped_min_words: usize,
    pub dropped_max_age: usize,
    pub dropped_missing_demographics: usize,
    pub empty_messages: usize,
}

impl FilterSummary {
    pub fn dropped(&self) -> usize {
        self.dropped_excluded
            + self.dropped_min_words
            + self.dropped_max_age
            + self.dropped_missing_demographics
    }
}

/// Users sorted by id; immutable once built.
#[derive(Debug, Clone)]
pub struct UserCorpus {
    pub users: Vec<UserRecord>,
    pub filter_config: FilterConfig,
}

impl UserCorpus {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.iter().map(|u| u.user_id.clone()).collect()
    }

    pub fn has_timestamps(&self) -> bool {
        self.users.iter().any(|u| !u.message_timestamps.is_empty())
    }

    pub fn get(&self, user_id: &str) -> Option<&UserRecord> {
        self.users
            .binary_search_by(|u| u.user_id.as_str().cmp(user_id))
            .ok()
            .map(|i| &self.users[i])
    }

    /// Corpus restricted to the given users (order of `self` preserved).
    pub fn subset(&self, keep: impl Fn(&UserRecord) -> bool) -> Self {
        Self {
            users: self.users.iter().filter(|u| keep(u)).cloned().collect(),
            filter_config: self.filter_config.clone(),
        }
    }
}

/// Group messages by user, tokenize and apply the user filters.
pub fn build_corpus(
    messages: &[Message],
    demographics: &DemographicsTable,
    cfg: &FilterConfig,
    tokenizer: &Tokenizer,
) -> (UserCorpus, FilterSummary) {
    let tokenized: Vec<Vec<String>> = messages
        .par_iter()
        .map(|m| tokenizer.tokenize(&m.text))
        .collect();

    let mut summary = FilterSummary::default();
    let mut grouped: BTreeMap<&str, Vec<TokenizedMessage>> = BTreeMap::new();
    for (m, tokens) in messages.iter().zip(tokenized) {
        let entry = grouped.entry(m.user_id.as_str()).or_default();
        if tokens.is_empty() {
            summary.empty_messages += 1;
            continue;
        }
        entry.push(TokenizedMessage {
            timestamp: m.timestamp,
            tokens,
        });
    }

    summary.total_users = grouped.len();
    let mut users = Vec::new();
    for (uid, msgs) in grouped {
        let demo = demographics.get(uid);
        let age = demo.and_then(|d| d.age);
        let gender = demo.map_or(Gender::Unknown, |d| d.gender);
        if demo.and_then(|d| d.include) == Some(false) {
            summary.dropped_excluded += 1;
            continue;
        }
        let record = UserRecord::from_messages(uid.to_string(), age, gender, msgs);
        if record.total_token_count < cfg.min_words {
            summary.dropped_min_words += 1;
            continue;
        }
        if let (Some(max), Some(a)) = (cfg.max_age, age) {
            if a > max {
                summary.dropped_max_age += 1;
                continue;
            }
        }
        if cfg.require_demographics && (age.is_none() || gender == Gender::Unknown) {
            summary.dropped_missing_demographics += 1;
            continue;
        }
        users.push(record);
    }
    summary.kept = users.len();
    (
        UserCorpus {
            users,
            filter_config: cfg.clone(),
        },
        summary,
    )
}
