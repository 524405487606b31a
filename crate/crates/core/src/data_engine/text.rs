//! Rule-based prompt cleaning.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;

use super::DataError;

/// Removes bracketed task tags such as `[refer]` and puts a natural-language
/// prompt in place of a leading one.
#[derive(Debug, Clone)]
pub struct DescriptorStripper {
    pools: BTreeMap<String, Vec<String>>,
    pattern: Regex,
}

impl Default for DescriptorStripper {
    fn default() -> Self {
        let pools = [
            ("grounding", "Locate the region described by the following expression:"),
            ("refer", "Output the bounding box of the object described as follows:"),
            ("identify", "Identify the object in the given region:"),
        ]
        .into_iter()
        .map(|(t, p)| (t.to_string(), vec![p.to_string()]))
        .collect();
        Self::new(pools).expect("built-in pools are valid")
    }
}

impl DescriptorStripper {
    /// `pools` maps each tag (without brackets, case-insensitive) to its prompts.
    pub fn new(pools: BTreeMap<String, Vec<String>>) -> Result<Self, DataError> {
        if pools.is_empty() {
            return Err(DataError::Config("descriptor tag list is empty".into()));
        }
        let mut lowered = BTreeMap::new();
        for (tag, prompts) in pools {
            let tag = tag.trim().to_lowercase();
            if tag.is_empty() || prompts.is_empty() || prompts.iter().any(|p| p.trim().is_empty()) {
                return Err(DataError::Config(format!(
                    "descriptor tag {tag:?} needs a non-empty prompt pool"
                )));
            }
            lowered.insert(tag, prompts);
        }
        let alt = lowered.keys().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
        let pattern = Regex::new(&format!(r"(?i)\[\s*({alt})\s*\]")).expect("escaped alternation");
        if let Some(p) = lowered.values().flatten().find(|p| pattern.is_match(p)) {
            return Err(DataError::Config(format!("prompt {p:?} contains a descriptor tag")));
        }
        Ok(Self {
            pools: lowered,
            pattern,
        })
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    /// Strips tags, injecting the first pool prompt of the leading tag.
    pub fn strip(&self, text: &str) -> String {
        self.strip_impl(text, |pool| &pool[0])
    }

    /// Same as [`strip`](Self::strip) with the prompt drawn uniformly from the pool.
    pub fn strip_with<R: Rng>(&self, text: &str, rng: &mut R) -> String {
        self.strip_impl(text, |pool| &pool[rng.random_range(0..pool.len())])
    }

    fn strip_impl<'a>(&'a self, text: &str, mut pick: impl FnMut(&'a [String]) -> &'a String) -> String {
        let trimmed = text.trim_start();
        let leading = self
            .pattern
            .captures(trimmed)
            .filter(|c| c.get(0).is_some_and(|m| m.start() == 0))
            .map(|c| c[1].to_lowercase());
        if leading.is_none() && !self.pattern.is_match(text) {
            return text.to_string();
        }
        let mut body = text.to_string();
        while self.pattern.is_match(&body) {
            body = self.pattern.replace_all(&body, " ").into_owned();
        }
        let body = normalize_spaces(&body);
        match leading {
            Some(tag) => {
                let prompt = pick(&self.pools[&tag]);
                if body.is_empty() {
                    prompt.clone()
                } else {
                    format!("{prompt} {body}")
                }
            }
            None => body,
        }
    }
}

fn normalize_spaces(s: &str) -> String {
    static RUNS: OnceLock<Regex> = OnceLock::new();
    let runs = RUNS.get_or_init(|| Regex::new(r"[ \t]+").unwrap());
    runs.replace_all(s, " ").trim().to_string()
}

/// Whole-word typo substitutions.
#[derive(Debug, Clone, Default)]
pub struct TypoTable {
    map: BTreeMap<String, String>,
    pattern: Option<Regex>,
}

impl TypoTable {
    /// Rejects tables whose replacements contain a typo key as a whole word,
    /// since those would not be stable under repeated cleaning.
    pub fn new(map: BTreeMap<String, String>) -> Result<Self, DataError> {
        if map.is_empty() {
            return Ok(Self::default());
        }
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        for k in &keys {
            if k.trim().is_empty() || k.chars().any(char::is_whitespace) {
                return Err(DataError::InvalidTypoTable(format!("key {k:?} must be a single word")));
            }
        }
        let alt = keys.iter().map(|k| regex::escape(k)).collect::<Vec<_>>().join("|");
        let pattern = Regex::new(&format!(r"\b(?:{alt})\b")).map_err(|e| DataError::InvalidTypoTable(e.to_string()))?;
        for (k, v) in &map {
            if v.trim().is_empty() {
                return Err(DataError::InvalidTypoTable(format!("empty replacement for {k:?}")));
            }
            if pattern.is_match(v) {
                return Err(DataError::InvalidTypoTable(format!(
                    "replacement {v:?} contains a typo key"
                )));
            }
        }
        Ok(Self {
            map,
            pattern: Some(pattern),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn apply(&self, s: &str) -> String {
        match &self.pattern {
            Some(p) => p
                .replace_all(s, |c: &regex::Captures<'_>| self.map[&c[0]].clone())
                .into_owned(),
            None => s.to_string(),
        }
    }
}

fn collapse_punct(s: &str) -> String {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    let p = PUNCT.get_or_init(|| Regex::new(r"\.{2,}|!{2,}|\?{2,}|,{2,}|;{2,}|:{2,}").unwrap());
    p.replace_all(s, |c: &regex::Captures<'_>| {
        let m = &c[0];
        if m.starts_with('.') && m.len() >= 3 {
            "...".to_string()
        } else {
            m[..1].to_string()
        }
    })
    .into_owned()
}

/// Collapses space runs, squeezes repeated punctuation (keeping `...`), and
/// applies the typo table. Repeated until stable, so the result is a fixpoint.
pub fn clean_text(text: &str, typos: &TypoTable) -> String {
    let mut cur = text.to_string();
    for _ in 0..8 {
        let next = normalize_spaces(&collapse_punct(&typos.apply(&cur)));
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}
