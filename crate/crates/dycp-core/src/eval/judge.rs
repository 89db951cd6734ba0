//! Answer-quality judging plumbing: prompt construction, rating parsing,
//! and the exact-match check.
//!
//! No model is called from here — this module only builds the prompt a
//! judge model would receive and parses the reply format back. Runs that
//! involve an actual judge happen outside this crate.

use regex::Regex;
use std::sync::OnceLock;

use crate::error::{DycpError, Result};

/// A fully rendered judge prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgePrompt {
    pub text: String,
}

const PREAMBLE: &str = "You are an impartial judge. You will be shown Conversation History, \
User Question, Gold Response and Model Response.";

const RATING_INSTRUCTION: &str = "Please evaluate whether the Model Response accurately answers \
the User Question, referencing the proper information from the Conversation History, and using \
the Gold Response as a reference. Begin your evaluation by providing a short explanation, then \
you must rate Model Response on an integer rating of 1 to 100 by strictly following this \
format: [[rating]].";

/// Renders the evaluation prompt with its four context slots, in order:
/// conversation history, user question, gold response, model response.
pub fn build_judge_prompt(
    history_text: &str,
    question: &str,
    gold: &str,
    response: &str,
) -> JudgePrompt {
    let text = format!(
        "{PREAMBLE}\n\n\
         Conversation History:\n{history_text}\n\n\
         User Question:\n{question}\n\n\
         Gold Response:\n{gold}\n\n\
         Model Response:\n{response}\n\n\
         {RATING_INSTRUCTION}"
    );
    JudgePrompt { text }
}

/// Extracts the integer rating from a judge reply.
///
/// Judges answer the `[[rating]]` instruction in two ways in practice:
/// keeping the tag and appending the number (`… [[rating]] 95`) or
/// substituting the number into the brackets (`… [[95]]`). Both are
/// accepted; when several occur, the last one wins. The value must lie
/// in 1..=100.
pub fn parse_rating(text: &str) -> Result<u32> {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    let re = PATTERN.get_or_init(|| {
        Regex::new(r"\[\[rating\]\]\s*:?\s*(\d{1,3})|\[\[(\d{1,3})\]\]").unwrap()
    });
    let mut last: Option<u32> = None;
    for caps in re.captures_iter(text) {
        let digits = caps.get(1).or_else(|| caps.get(2)).unwrap().as_str();
        last = Some(digits.parse().expect("1-3 digits fit in u32"));
    }
    match last {
        Some(r) if (1..=100).contains(&r) => Ok(r),
        Some(r) => Err(DycpError::RatingParse(format!("rating {r} outside 1..=100"))),
        None => Err(DycpError::RatingParse("no rating found".into())),
    }
}

/// The exact-match criterion used for answer scoring: does the prediction
/// contain the gold string? Comparison is case-insensitive; no other
/// normalization is applied.
pub fn em_contains(prediction: &str, gold: &str) -> bool {
    prediction.to_lowercase().contains(&gold.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_contains_all_slots_in_order() {
        let p = build_judge_prompt("HIST", "QUES", "GOLD", "RESP");
        assert!(p.text.starts_with("You are an impartial judge."));
        let hist = p.text.find("HIST").unwrap();
        let ques = p.text.find("QUES").unwrap();
        let gold = p.text.find("GOLD").unwrap();
        let resp = p.text.find("RESP").unwrap();
        assert!(hist < ques && ques < gold && gold < resp);
        assert!(p.text.contains("Conversation History:\nHIST"));
        assert!(p.text.ends_with("format: [[rating]]."));
    }

    #[test]
    fn parses_tag_then_number() {
        assert_eq!(parse_rating("solid answer. [[rating]] 100").unwrap(), 100);
        assert_eq!(parse_rating("weak. [[rating]]: 30").unwrap(), 30);
    }

    #[test]
    fn parses_number_in_brackets() {
        assert_eq!(parse_rating("Rating: [[95]]").unwrap(), 95);
        assert_eq!(parse_rating("[[1]]").unwrap(), 1);
    }

    #[test]
    fn last_occurrence_wins() {
        assert_eq!(parse_rating("draft [[rating]] 40 … final [[rating]] 75").unwrap(), 75);
        assert_eq!(parse_rating("[[10]] then on reflection [[20]]").unwrap(), 20);
    }

    #[test]
    fn out_of_range_and_missing_are_errors() {
        assert!(parse_rating("no rating here").is_err());
        assert!(parse_rating("[[0]]").is_err());
        assert!(parse_rating("[[rating]] 999").is_err());
    }

    #[test]
    fn em_is_case_insensitive_substring() {
        assert!(em_contains("The trip was in December 2023.", "december 2023"));
        assert!(!em_contains("The trip was in November 2023.", "December 2022"));
        assert!(em_contains("TOPIC-3", "topic-3"));
    }
}
