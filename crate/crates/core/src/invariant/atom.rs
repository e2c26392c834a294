//! Grammar for the structured invariant fragment.
//!
//! ```text
//! linear  := side REL side
//! side    := ['+'|'-'] product (('+'|'-') product)*
//! product := factor ('*' factor)*        at most one variable factor
//! factor  := NUMBER | VAR
//! class   := VAR '.getClass()' '==' QUALIFIED '.class'
//! oneof   := VAR 'one of' '{' literal (',' literal)* '}'
//! ```
//!
//! Decimal numbers are exact rationals `m / 10^d`; the whole comparison is
//! rescaled to integers when `d <= MAX_DECIMALS`.

use super::{collapse_whitespace, InvariantAtom, Relation, Term, ORIG_PREFIX};

const MAX_DECIMALS: u32 = 6;
// Keeps negation and gcd arithmetic well inside i64.
const MAX_MAGNITUDE: i128 = 1 << 53;
const LITERALS: [&str; 3] = ["null", "true", "false"];

/// Parses one invariant line. Never fails: unsupported text is opaque.
pub fn parse_atom(text: &str) -> InvariantAtom {
    let text = collapse_whitespace(text);
    parse_class_equality(&text)
        .or_else(|| parse_one_of(&text))
        .or_else(|| parse_linear(&text))
        .unwrap_or_else(|| InvariantAtom::opaque(&text))
}

fn parse_class_equality(text: &str) -> Option<InvariantAtom> {
    let (lhs, rhs) = text.split_once(" == ")?;
    let (lhs, rhs) = (lhs.trim(), rhs.trim());
    let (expr, lit) = match (lhs.strip_suffix(".getClass()"), rhs.strip_suffix(".class")) {
        (Some(e), Some(l)) => (e, l),
        _ => (rhs.strip_suffix(".getClass()")?, lhs.strip_suffix(".class")?),
    };
    if !is_variable_text(expr) || !is_qualified_name(lit) {
        return None;
    }
    Some(InvariantAtom::ClassEquality {
        expression: expr.to_string(),
        class_literal: lit.to_string(),
    })
}

fn parse_one_of(text: &str) -> Option<InvariantAtom> {
    let (expr, rest) = text.split_once(" one of ")?;
    let expr = expr.trim();
    if !is_variable_text(expr) {
        return None;
    }
    let body = rest.trim().strip_prefix('{')?.strip_suffix('}')?;
    let values = split_literals(body)?;
    if values.is_empty() {
        return None;
    }
    Some(InvariantAtom::OneOf {
        expression: expr.to_string(),
        values,
    })
}

/// Splits a comma-separated literal list, honouring double-quoted strings.
fn split_literals(body: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut escaped = false;
    for c in body.chars() {
        if in_str {
            cur.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                cur.push(c);
            }
            ',' => {
                let v = cur.trim();
                if v.is_empty() {
                    return None;
                }
                out.push(v.to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if in_str {
        return None;
    }
    let v = cur.trim();
    if !v.is_empty() {
        out.push(v.to_string());
    } else if !out.is_empty() {
        return None;
    }
    Some(out)
}

fn is_qualified_name(s: &str) -> bool {
    !s.is_empty()
        && s.split('.').all(|part| {
            let mut chars = part.chars();
            matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_' || c == '$')
                && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        })
}

fn is_variable_text(s: &str) -> bool {
    let mut lx = Lexer::new(s);
    lx.variable().is_some() && lx.at_end()
}

/// Exact decimal `mantissa / 10^digits`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Decimal {
    mantissa: i128,
    digits: u32,
}

impl Decimal {
    const ONE: Decimal = Decimal {
        mantissa: 1,
        digits: 0,
    };

    fn rescale(self, digits: u32) -> Option<i128> {
        let factor = 10i128.checked_pow(digits.checked_sub(self.digits)?)?;
        self.mantissa.checked_mul(factor)
    }

    fn mul(self, other: Decimal) -> Option<Decimal> {
        let d = Decimal {
            mantissa: self.mantissa.checked_mul(other.mantissa)?,
            digits: self.digits + other.digits,
        };
        (d.digits <= MAX_DECIMALS && d.mantissa.abs() <= MAX_MAGNITUDE).then_some(d)
    }

    fn neg(self) -> Decimal {
        Decimal {
            mantissa: -self.mantissa,
            ..self
        }
    }

    fn add(self, other: Decimal) -> Option<Decimal> {
        let digits = self.digits.max(other.digits);
        let m = self.rescale(digits)?.checked_add(other.rescale(digits)?)?;
        (m.abs() <= MAX_MAGNITUDE).then_some(Decimal {
            mantissa: m,
            digits,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Decimal),
    Var(String),
    Plus,
    Minus,
    Star,
    Rel(Relation),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn tokens(mut self) -> Option<Vec<Token>> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else {
                return Some(out);
            };
            let tok = match c {
                '+' => {
                    self.pos += 1;
                    Token::Plus
                }
                '-' => {
                    self.pos += 1;
                    Token::Minus
                }
                '*' => {
                    self.pos += 1;
                    Token::Star
                }
                '=' | '!' | '<' | '>' => Token::Rel(self.relation()?),
                c if c.is_ascii_digit() => Token::Num(self.number()?),
                _ => Token::Var(self.variable()?),
            };
            out.push(tok);
        }
    }

    fn relation(&mut self) -> Option<Relation> {
        let rest = self.rest();
        let (rel, len) = if rest.starts_with("==>") {
            return None;
        } else if rest.starts_with("==") {
            (Relation::Eq, 2)
        } else if rest.starts_with("!=") {
            (Relation::Ne, 2)
        } else if rest.starts_with("<=") {
            (Relation::Le, 2)
        } else if rest.starts_with(">=") {
            (Relation::Ge, 2)
        } else if rest.starts_with('<') {
            (Relation::Lt, 1)
        } else if rest.starts_with('>') {
            (Relation::Gt, 1)
        } else {
            return None;
        };
        self.pos += len;
        Some(rel)
    }

    fn number(&mut self) -> Option<Decimal> {
        let rest = self.rest();
        let int_len = rest.bytes().take_while(u8::is_ascii_digit).count();
        let mut len = int_len;
        let mut digits = 0;
        let mut mantissa_text = rest[..int_len].to_string();
        let after = &rest[int_len..];
        if let Some(frac) = after.strip_prefix('.') {
            let frac_len = frac.bytes().take_while(u8::is_ascii_digit).count();
            if frac_len == 0 {
                return None;
            }
            let frac_digits = frac[..frac_len].trim_end_matches('0');
            mantissa_text.push_str(frac_digits);
            digits = frac_digits.len() as u32;
            len += 1 + frac_len;
        }
        // exponents, suffixes and implicit products are outside the grammar
        if matches!(rest[len..].chars().next(), Some(c) if c.is_alphanumeric() || c == '_' || c == '$' || c == '.')
        {
            return None;
        }
        if digits > MAX_DECIMALS {
            return None;
        }
        let mantissa: i128 = mantissa_text.parse().ok()?;
        if mantissa > MAX_MAGNITUDE {
            return None;
        }
        self.pos += len;
        Some(Decimal { mantissa, digits })
    }

    /// Reads a program variable such as `this.items[..]`, `size(a[])` or
    /// `orig(x)`. Pre-state references are renamed with [`ORIG_PREFIX`].
    fn variable(&mut self) -> Option<String> {
        let start = self.pos;
        let first = self.peek()?;
        if !(first.is_alphabetic() || first == '_' || first == '$') {
            return None;
        }
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '$' || c == '.' {
                name.push(c);
                self.pos += c.len_utf8();
            } else if c == '[' {
                let seg = self.balanced('[', ']')?;
                name.push_str(seg);
            } else if c == '(' {
                let seg = self.balanced('(', ')')?;
                let inner = &seg[1..seg.len() - 1];
                if name == "orig" {
                    let mut inner_lx = Lexer::new(inner.trim());
                    let v = inner_lx.variable()?;
                    if !inner_lx.at_end() {
                        return None;
                    }
                    name = format!("{ORIG_PREFIX}{v}");
                } else {
                    name.push('(');
                    name.push_str(&collapse_whitespace(inner));
                    name.push(')');
                }
            } else {
                break;
            }
        }
        if name.ends_with('.') || self.pos == start || LITERALS.contains(&name.as_str()) {
            return None;
        }
        Some(name)
    }

    fn balanced(&mut self, open: char, close: char) -> Option<&'a str> {
        let start = self.pos;
        let mut depth = 0usize;
        for (i, c) in self.rest().char_indices() {
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    self.pos += i + 1;
                    return Some(&self.src[start..self.pos]);
                }
            }
        }
        None
    }
}

/// Linear combination accumulated in first-occurrence order.
#[derive(Default)]
struct Linear {
    terms: Vec<(String, Decimal)>,
    constant: Decimal,
}

impl Linear {
    fn add_term(&mut self, var: String, coeff: Decimal) -> Option<()> {
        match self.terms.iter_mut().find(|(v, _)| *v == var) {
            Some((_, c)) => *c = c.add(coeff)?,
            None => self.terms.push((var, coeff)),
        }
        Some(())
    }
}

fn parse_side(tokens: &[Token], sign: i128, acc: &mut Linear) -> Option<()> {
    let mut i = 0;
    let mut first = true;
    while i < tokens.len() {
        let mut neg = false;
        match tokens[i] {
            Token::Plus => i += 1,
            Token::Minus => {
                neg = true;
                i += 1;
            }
            _ if first => {}
            _ => return None,
        }
        first = false;
        // product
        let mut coeff = Decimal::ONE;
        let mut var: Option<String> = None;
        loop {
            match tokens.get(i)? {
                Token::Num(d) => coeff = coeff.mul(*d)?,
                Token::Var(v) => {
                    if var.is_some() {
                        return None;
                    }
                    var = Some(v.clone());
                }
                _ => return None,
            }
            i += 1;
            if tokens.get(i) == Some(&Token::Star) {
                i += 1;
            } else {
                break;
            }
        }
        if neg != (sign < 0) {
            coeff = coeff.neg();
        }
        match var {
            Some(v) => acc.add_term(v, coeff)?,
            None => acc.constant = acc.constant.add(coeff)?,
        }
    }
    (!first).then_some(())
}

fn parse_linear(text: &str) -> Option<InvariantAtom> {
    let tokens = Lexer::new(text).tokens()?;
    let mut rels = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t {
            Token::Rel(r) => Some((i, *r)),
            _ => None,
        });
    let (at, relation) = rels.next()?;
    if rels.next().is_some() {
        return None;
    }
    // lhs - rhs <rel> 0
    let mut acc = Linear::default();
    parse_side(&tokens[..at], 1, &mut acc)?;
    parse_side(&tokens[at + 1..], -1, &mut acc)?;

    let digits = acc
        .terms
        .iter()
        .map(|(_, c)| c.digits)
        .chain([acc.constant.digits])
        .max()
        .unwrap_or(0);
    let to_int = |d: Decimal| -> Option<i64> {
        let v = d.rescale(digits)?;
        (v.abs() <= MAX_MAGNITUDE).then_some(v as i64)
    };
    let mut terms = Vec::with_capacity(acc.terms.len());
    for (var, c) in &acc.terms {
        let c = to_int(*c)?;
        if c != 0 {
            terms.push(Term::new(c, var.clone()));
        }
    }
    let constant = -to_int(acc.constant)?;
    Some(InvariantAtom::LinearComparison {
        terms,
        relation,
        constant,
    })
}
