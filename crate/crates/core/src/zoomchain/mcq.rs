use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::Choice;

use super::ZoomError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub question: String,
    pub options: [String; 4],
    pub answer: Choice,
}

impl McqItem {
    /// Question followed by one `X. option` line per choice.
    pub fn prompt(&self) -> String {
        let mut s = self.question.clone();
        for (c, o) in Choice::ALL.iter().zip(&self.options) {
            s.push_str(&format!("\n{c}. {o}"));
        }
        s.push_str("\nAnswer with the option letter.");
        s
    }

    pub fn gold(&self) -> &str {
        &self.options[self.answer.index()]
    }
}

fn key(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Shuffles gold and three distractors under `seed` and labels them A to D.
pub fn convert_to_mcq(question: &str, gold: &str, distractors: &[String], seed: u64) -> Result<McqItem, ZoomError> {
    if distractors.len() != 3 {
        return Err(ZoomError::Validation(format!(
            "expected 3 distractors, got {}",
            distractors.len()
        )));
    }
    let mut all: Vec<&str> = std::iter::once(gold)
        .chain(distractors.iter().map(String::as_str))
        .collect();
    if all.iter().any(|o| o.trim().is_empty()) {
        return Err(ZoomError::Validation("empty option".into()));
    }
    let mut keys: Vec<String> = all.iter().map(|o| key(o)).collect();
    keys.sort_unstable();
    keys.dedup();
    if keys.len() != 4 {
        return Err(ZoomError::Validation(format!("options are not unique: {all:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let pos = all.iter().position(|o| *o == gold).expect("gold is among the options");
    Ok(McqItem {
        question: question.to_string(),
        options: [all[0], all[1], all[2], all[3]].map(str::to_string),
        answer: Choice::ALL[pos],
    })
}

/// Near-numeric distractors for a count: gold +1, -1, +2, -2, +3, -3,
/// keeping positive values, first three.
pub fn counting_distractors(gold: &str) -> Result<Vec<String>, ZoomError> {
    let g: i64 = gold
        .trim()
        .parse()
        .map_err(|_| ZoomError::Validation(format!("{gold:?} is not a count")))?;
    Ok([1, -1, 2, -2, 3, -3]
        .iter()
        .map(|d| g + d)
        .filter(|v| *v > 0)
        .take(3)
        .map(|v| v.to_string())
        .collect())
}
