//! Utterance normalization: lower-casing, punctuation stripping and digit spelling.

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [(u64, &str); 4] = [
    (1_000_000_000_000, "trillion"),
    (1_000_000_000, "billion"),
    (1_000_000, "million"),
    (1_000, "thousand"),
];

/// Splits raw text into lower-case words.
///
/// Everything that is not a letter, an ASCII digit or a word-internal
/// apostrophe separates words. Digit runs are spelled out.
pub fn normalize_utterance(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current: Vec<char> = Vec::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        let c = if c == '\u{2019}' || c == '\u{2018}' { '\'' } else { c };
        if c.is_alphabetic() || c.is_ascii_digit() || c == '\'' {
            current.push(c);
        } else {
            flush(&mut current, &mut words);
        }
    }
    flush(&mut current, &mut words);
    words
}

/// Breaks a run of letters, digits and apostrophes into words.
fn flush(run: &mut Vec<char>, words: &mut Vec<String>) {
    let mut i = 0;
    while i < run.len() {
        let c = run[i];
        if c.is_ascii_digit() {
            let start = i;
            while i < run.len() && run[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = run[start..i].iter().collect();
            words.extend(spell_number(&digits));
        } else if c.is_alphabetic() {
            let mut word = String::new();
            while i < run.len() {
                let c = run[i];
                if c.is_alphabetic() {
                    word.push(c);
                    i += 1;
                } else if c == '\''
                    && i + 1 < run.len()
                    && run[i + 1].is_alphabetic()
                    && !word.is_empty()
                {
                    word.push(c);
                    i += 1;
                } else {
                    break;
                }
            }
            words.push(word);
        } else {
            i += 1;
        }
    }
    run.clear();
}

/// Spells an ASCII digit string as English number words.
///
/// Numbers with a leading zero, or too large for the scale table, are read
/// digit by digit.
pub fn spell_number(digits: &str) -> Vec<String> {
    let digit_by_digit = || {
        digits
            .bytes()
            .map(|b| ONES[(b - b'0') as usize].to_string())
            .collect()
    };
    if digits.len() > 1 && digits.starts_with('0') {
        return digit_by_digit();
    }
    match digits.parse::<u64>() {
        Ok(n) if n < 1_000_000_000_000_000 => {
            let mut out = Vec::new();
            spell(n, &mut out);
            out.into_iter().map(str::to_string).collect()
        }
        _ => digit_by_digit(),
    }
}

fn spell(n: u64, out: &mut Vec<&'static str>) {
    if n < 20 {
        out.push(ONES[n as usize]);
        return;
    }
    for &(scale, name) in &SCALES {
        if n >= scale {
            spell(n / scale, out);
            out.push(name);
            if n % scale != 0 {
                spell(n % scale, out);
            }
            return;
        }
    }
    if n >= 100 {
        out.push(ONES[(n / 100) as usize]);
        out.push("hundred");
        if n % 100 != 0 {
            spell(n % 100, out);
        }
        return;
    }
    out.push(TENS[(n / 10) as usize]);
    if n % 10 != 0 {
        out.push(ONES[(n % 10) as usize]);
    }
}
