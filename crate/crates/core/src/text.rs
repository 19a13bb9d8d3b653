//! Small text helpers: English number words and option normalisation.

use crate::trace::TextFormat;

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Lower-case English spelling for `0..=999`.
pub fn number_word(n: u32) -> Option<String> {
    match n {
        0..=19 => Some(ONES[n as usize].to_string()),
        20..=99 => {
            let tens = TENS[(n / 10) as usize];
            Some(match n % 10 {
                0 => tens.to_string(),
                u => format!("{tens}-{}", ONES[u as usize]),
            })
        }
        100..=999 => {
            let head = format!("{} hundred", ONES[(n / 100) as usize]);
            Some(match n % 100 {
                0 => head,
                rest => format!("{head} {}", number_word(rest)?),
            })
        }
        _ => None,
    }
}

/// Surface text for `n` in a number format; `None` for `Plain` or words past 999.
pub fn render_number(n: u32, format: TextFormat) -> Option<String> {
    match format {
        TextFormat::Digit => Some(n.to_string()),
        TextFormat::WordLower => number_word(n),
        TextFormat::WordMixed => number_word(n).map(|w| capitalise(&w)),
        TextFormat::Plain => None,
    }
}

fn capitalise(w: &str) -> String {
    let mut chars = w.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Case-folded, punctuation-free, whitespace-collapsed form used to match
/// free-text completions against option labels.
pub fn normalize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// `"a"` or `"an"` by the leading letter.
pub fn indefinite_article(word: &str) -> &'static str {
    match word.trim_start().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}
