//! Real linear combinations of Pauli words, e.g. `0.5*XX - 1.2*ZI + IY`.
//!
//! ```text
//! expr  := ['+'|'-'] term (('+'|'-') term)*
//! term  := [coeff '*'] word
//! word  := [IXYZ]{n}
//! ```
//!
//! Whitespace is ignored. The first letter of a word acts on the most significant qubit.

use std::collections::BTreeMap;
use std::fmt;

use lindsim::linalg::{self, c, CMatrix, ONE, ZERO};
use lindsim::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct PauliSumExpr {
    n_qubits: usize,
    /// Canonical: sorted by word, like terms merged, zeros dropped.
    terms: Vec<(f64, String)>,
}

impl PauliSumExpr {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, String)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl fmt::Display for PauliSumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0*{}", "I".repeat(self.n_qubits));
        }
        for (i, (coef, word)) in self.terms.iter().enumerate() {
            let sign = if *coef < 0.0 { "-" } else { "+" };
            match (i, sign) {
                (0, "+") => {}
                (0, _) => write!(f, "-")?,
                _ => write!(f, " {sign} ")?,
            }
            write!(f, "{}*{}", coef.abs(), word)?;
        }
        Ok(())
    }
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    text: &'a str,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).copied()
    }

    fn here(&self) -> usize {
        self.peek().map(|(p, _)| p).unwrap_or(self.text.len())
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> (usize, String) {
        let start = self.here();
        let mut out = String::new();
        while let Some((_, ch)) = self.peek() {
            if !pred(ch) {
                break;
            }
            out.push(ch);
            self.pos += 1;
        }
        (start, out)
    }
}

fn is_number_char(ch: char) -> bool {
    ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E'
}

pub fn parse_pauli_sum(text: &str, n_qubits: usize) -> Result<PauliSumExpr, Error> {
    if n_qubits == 0 {
        return Err(parse_error(0, "number of qubits must be positive"));
    }
    let mut cur = Cursor {
        chars: text.char_indices().filter(|(_, ch)| !ch.is_whitespace()).collect(),
        pos: 0,
        text,
    };
    if cur.chars.is_empty() {
        return Err(parse_error(0, "empty expression"));
    }
    let mut merged: BTreeMap<String, f64> = BTreeMap::new();
    let mut sign = 1.0;
    if let Some((_, ch @ ('+' | '-'))) = cur.peek() {
        sign = if ch == '-' { -1.0 } else { 1.0 };
        cur.pos += 1;
    }
    loop {
        let term_start = cur.here();
        let coef = match cur.peek() {
            None | Some((_, '+' | '-')) => return Err(parse_error(term_start, "empty term")),
            Some((_, ch)) if ch.is_ascii_digit() || ch == '.' => {
                // Exponent signs belong to the number, not the expression.
                let mut digits = cur.take_while(is_number_char).1;
                while digits.ends_with(['e', 'E']) {
                    match cur.peek() {
                        Some((_, s @ ('+' | '-'))) => {
                            digits.push(s);
                            cur.pos += 1;
                            digits.push_str(&cur.take_while(|c| c.is_ascii_digit()).1);
                        }
                        _ => break,
                    }
                }
                let value: f64 = digits
                    .parse()
                    .map_err(|_| parse_error(term_start, format!("invalid coefficient '{digits}'")))?;
                if !value.is_finite() {
                    return Err(parse_error(term_start, "coefficient is not finite"));
                }
                match cur.peek() {
                    Some((_, '*')) => cur.pos += 1,
                    Some((p, ch)) => return Err(parse_error(p, format!("expected '*' after coefficient, found '{ch}'"))),
                    None => return Err(parse_error(text.len(), "expected '*' after coefficient")),
                }
                value
            }
            _ => 1.0,
        };
        let (word_start, word) = cur.take_while(|ch| matches!(ch, 'I' | 'X' | 'Y' | 'Z'));
        if word.is_empty() {
            return Err(match cur.peek() {
                Some((p, ch)) if !matches!(ch, '+' | '-') => parse_error(p, format!("unexpected character '{ch}'")),
                _ => parse_error(word_start, "missing Pauli word"),
            });
        }
        if word.len() != n_qubits {
            return Err(parse_error(
                word_start,
                format!("word '{word}' has length {}, expected {n_qubits}", word.len()),
            ));
        }
        *merged.entry(word).or_insert(0.0) += sign * coef;
        match cur.peek() {
            None => break,
            Some((_, '+')) => sign = 1.0,
            Some((_, '-')) => sign = -1.0,
            Some((p, ch)) => return Err(parse_error(p, format!("unexpected character '{ch}'"))),
        }
        cur.pos += 1;
    }
    Ok(PauliSumExpr {
        n_qubits,
        terms: merged.into_iter().filter(|(_, v)| *v != 0.0).map(|(w, v)| (v, w)).collect(),
    })
}

pub fn pauli_matrix(letter: char) -> CMatrix {
    let i = c(0.0, 1.0);
    match letter {
        'I' => linalg::identity(2),
        'X' => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'Y' => CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        'Z' => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("not a Pauli letter: {letter}"),
    }
}

/// `Σ c_i P_i` as a dense `2^n × 2^n` matrix.
pub fn materialize(expr: &PauliSumExpr) -> CMatrix {
    let d = 1usize << expr.n_qubits;
    expr.terms.iter().fold(CMatrix::zeros(d, d), |acc, (coef, word)| {
        let op = word
            .chars()
            .fold(CMatrix::identity(1, 1), |m, ch| linalg::kron(&m, &pauli_matrix(ch)));
        acc + op * c(*coef, 0.0)
    })
}
