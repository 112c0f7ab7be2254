use std::sync::Arc;

use super::ast::{Feature, Guard, Policy, ProbExpr, TransitionRule};
use super::dim::Dimension;
use super::error::PdslError;
use super::sig::Signature;

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    AndAnd,
    OrOr,
    EqEq,
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<(Token, Pos)>, PdslError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump(&mut chars);
            }
            '(' => {
                bump(&mut chars);
                out.push((Token::LParen, pos));
            }
            ')' => {
                bump(&mut chars);
                out.push((Token::RParen, pos));
            }
            ',' => {
                bump(&mut chars);
                out.push((Token::Comma, pos));
            }
            '+' => {
                bump(&mut chars);
                out.push((Token::Plus, pos));
            }
            '-' => {
                bump(&mut chars);
                out.push((Token::Minus, pos));
            }
            '&' => {
                bump(&mut chars);
                if chars.peek() == Some(&'&') {
                    bump(&mut chars);
                    out.push((Token::AndAnd, pos));
                } else {
                    return Err(syntax(pos, "expected `&&`"));
                }
            }
            '|' => {
                bump(&mut chars);
                if chars.peek() == Some(&'|') {
                    bump(&mut chars);
                    out.push((Token::OrOr, pos));
                } else {
                    return Err(syntax(pos, "expected `||`"));
                }
            }
            '=' => {
                bump(&mut chars);
                if chars.peek() == Some(&'=') {
                    bump(&mut chars);
                    out.push((Token::EqEq, pos));
                } else {
                    return Err(syntax(pos, "expected `==`"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut raw = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() || d == '.' {
                        raw.push(bump(&mut chars));
                    } else if d == 'e' || d == 'E' {
                        raw.push(bump(&mut chars));
                        if let Some(&s) = chars.peek() {
                            if s == '+' || s == '-' {
                                raw.push(bump(&mut chars));
                            }
                        }
                    } else {
                        break;
                    }
                }
                let value: f64 = raw
                    .parse()
                    .map_err(|_| syntax(pos, &format!("invalid number `{raw}`")))?;
                out.push((Token::Number(value), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut name = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        name.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                out.push((Token::Ident(name), pos));
            }
            other => return Err(syntax(pos, &format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

fn syntax(pos: Pos, message: &str) -> PdslError {
    PdslError::Syntax { line: pos.line, col: pos.col, message: message.to_string() }
}

struct Parser<'s> {
    tokens: Vec<(Token, Pos)>,
    i: usize,
    sig: &'s Signature,
    end: Pos,
}

impl<'s> Parser<'s> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.tokens.get(self.i).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.i).map(|(t, _)| t.clone());
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), PdslError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(syntax(pos, &format!("expected {what}, found {t:?}"))),
            None => Err(syntax(pos, &format!("expected {what}, found end of input"))),
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), PdslError> {
        let pos = self.pos();
        match self.next() {
            Some(Token::Ident(w)) if w == word => Ok(()),
            Some(t) => Err(syntax(pos, &format!("expected `{word}`, found {t:?}"))),
            None => Err(syntax(pos, &format!("expected `{word}`, found end of input"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, PdslError> {
        let pos = self.pos();
        match self.next() {
            Some(Token::Ident(w)) => Ok(w),
            Some(t) => Err(syntax(pos, &format!("expected {what}, found {t:?}"))),
            None => Err(syntax(pos, &format!("expected {what}, found end of input"))),
        }
    }

    fn parse_rules(&mut self) -> Result<Vec<TransitionRule>, PdslError> {
        let mut rules = Vec::new();
        while self.peek().is_some() {
            rules.push(self.parse_rule()?);
        }
        Ok(rules)
    }

    fn parse_rule(&mut self) -> Result<TransitionRule, PdslError> {
        self.expect_keyword("if")?;
        self.expect(Token::LParen, "`(`")?;
        let guard = self.parse_guard()?;
        self.expect_keyword("and")?;
        self.expect_keyword("a")?;
        self.expect(Token::EqEq, "`==`")?;
        let from = self.sig.actions.label(&self.expect_ident("an action label")?)?;
        self.expect(Token::RParen, "`)`")?;
        self.expect_keyword("then")?;
        let to = self.sig.actions.label(&self.expect_ident("an action label")?)?;
        Ok(TransitionRule::new(from, guard, to))
    }

    fn parse_guard(&mut self) -> Result<Guard, PdslError> {
        let mut g = self.parse_term()?;
        while self.peek() == Some(&Token::OrOr) {
            self.next();
            g = Guard::or(g, self.parse_term()?);
        }
        Ok(g)
    }

    fn parse_term(&mut self) -> Result<Guard, PdslError> {
        let mut g = self.parse_atom()?;
        while self.peek() == Some(&Token::AndAnd) {
            self.next();
            g = Guard::and(g, self.parse_atom()?);
        }
        Ok(g)
    }

    fn parse_atom(&mut self) -> Result<Guard, PdslError> {
        let pos = self.pos();
        match self.peek() {
            Some(Token::Ident(w)) if w == "flp" => {
                self.next();
                self.expect(Token::LParen, "`(`")?;
                let p = self.parse_prob()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(Guard::flip(p))
            }
            Some(Token::LParen) => {
                self.next();
                let g = self.parse_guard()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(g)
            }
            _ => Err(syntax(pos, "expected `flp(...)` or `(`")),
        }
    }

    fn parse_prob(&mut self) -> Result<ProbExpr, PdslError> {
        let pos = self.pos();
        match self.peek() {
            Some(Token::Ident(w)) if w == "lgs" => {
                self.next();
                self.expect(Token::LParen, "`(`")?;
                let feature = self.parse_feature()?;
                self.expect(Token::Comma, "`,`")?;
                let x0 = self.parse_signed_number()?;
                self.expect(Token::Comma, "`,`")?;
                let k = self.parse_signed_number()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(ProbExpr::logistic(feature, x0, k))
            }
            Some(Token::Number(_)) | Some(Token::Minus) => {
                let r = self.parse_signed_number()?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(syntax(pos, &format!("flip probability {r} outside [0, 1]")));
                }
                Ok(ProbExpr::Const(r))
            }
            _ => Err(syntax(pos, "expected a probability or `lgs(...)`")),
        }
    }

    fn parse_signed_number(&mut self) -> Result<f64, PdslError> {
        let pos = self.pos();
        let negate = if self.peek() == Some(&Token::Minus) {
            self.next();
            true
        } else {
            false
        };
        match self.next() {
            Some(Token::Number(n)) => Ok(if negate { -n } else { n }),
            Some(t) => Err(syntax(pos, &format!("expected a number, found {t:?}"))),
            None => Err(syntax(pos, "expected a number, found end of input")),
        }
    }

    fn parse_feature(&mut self) -> Result<Feature, PdslError> {
        let mut f = self.parse_primary()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    f = Feature::add(f, self.parse_primary()?);
                }
                Some(Token::Minus) => {
                    self.next();
                    f = Feature::sub(f, self.parse_primary()?);
                }
                _ => return Ok(f),
            }
        }
    }

    fn parse_primary(&mut self) -> Result<Feature, PdslError> {
        let pos = self.pos();
        match self.next() {
            Some(Token::Number(n)) => Ok(Feature::Const(n, Dimension::DIMENSIONLESS)),
            Some(Token::Minus) => match self.next() {
                Some(Token::Number(n)) => Ok(Feature::Const(-n, Dimension::DIMENSIONLESS)),
                _ => Err(syntax(pos, "expected a number after `-`")),
            },
            Some(Token::LParen) => {
                let f = self.parse_feature()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(f)
            }
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    self.next();
                    let mut args = vec![self.parse_feature()?];
                    while self.peek() == Some(&Token::Comma) {
                        self.next();
                        args.push(self.parse_feature()?);
                    }
                    self.expect(Token::RParen, "`)`")?;
                    Ok(Feature::app(name, args))
                } else {
                    Ok(Feature::var(name))
                }
            }
            Some(t) => Err(syntax(pos, &format!("expected a feature, found {t:?}"))),
            None => Err(syntax(pos, "expected a feature, found end of input")),
        }
    }
}

/// Parses the one-rule-per-line policy text format against a signature.
/// Action labels are resolved through the signature's action set and every
/// feature is dimension-checked.
pub fn parse_policy(text: &str, sig: &Arc<Signature>) -> Result<Policy, PdslError> {
    let tokens = lex(text)?;
    let lines = text.lines().count().max(1);
    let mut parser = Parser { tokens, i: 0, sig, end: Pos { line: lines, col: 1 } };
    let rules = parser.parse_rules()?;
    Policy::new(sig.clone(), rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdsl::print::serialize_policy;
    use crate::pdsl::sig::{ActionSet, FuncDef, FunctionRegistry};

    fn sig() -> Arc<Signature> {
        let funcs = FunctionRegistry::new(vec![FuncDef::new(
            "distTrv",
            vec![Dimension::VELOCITY, Dimension::ACCELERATION],
            Dimension::LENGTH,
            |args| args[0] * args[0] / (2.0 * args[1].abs()),
        )]);
        Signature::new(
            vec![
                ("v".into(), Dimension::VELOCITY),
                ("vmax".into(), Dimension::VELOCITY),
                ("adec".into(), Dimension::ACCELERATION),
                ("dstop".into(), Dimension::LENGTH),
            ],
            ActionSet::new(["ACC", "CON", "DEC"]).unwrap(),
            funcs,
        )
    }

    #[test]
    fn parses_smallest_program() {
        let sig = sig();
        let p = parse_policy("if (flp(0.1) and a == ACC) then CON", &sig).unwrap();
        assert_eq!(p.rules().len(), 1);
        assert_eq!(p.rules()[0].from, sig.actions.label("ACC").unwrap());
        assert_eq!(p.rules()[0].to, sig.actions.label("CON").unwrap());
        assert_eq!(p.rules()[0].guard, Guard::flip(ProbExpr::Const(0.1)));
    }

    #[test]
    fn round_trips_logistic_rule() {
        let sig = sig();
        let text = "if (flp(lgs(v - vmax, -0.4, 1.3)) and a == ACC) then CON\n";
        let p = parse_policy(text, &sig).unwrap();
        assert_eq!(serialize_policy(&p), text);
    }

    #[test]
    fn serializes_parsed_text_in_normal_form() {
        let sig = sig();
        let messy = "if ( flp( lgs( distTrv(v, adec) - dstop,2.8,0.8 ) )and a==CON )then DEC";
        let p = parse_policy(messy, &sig).unwrap();
        assert_eq!(
            serialize_policy(&p),
            "if (flp(lgs(distTrv(v, adec) - dstop, 2.8, 0.8)) and a == CON) then DEC\n"
        );
    }

    #[test]
    fn round_trips_every_production() {
        let sig = sig();
        let text = concat!(
            "if (flp(0.25) and a == ACC) then CON\n",
            "if (flp(lgs(v - vmax, -0.4, 1.3)) && flp(0.5) and a == ACC) then DEC\n",
            "if (flp(lgs(dstop, 1.6, -0.09)) || flp(0.1) && flp(0.9) and a == CON) then DEC\n",
            "if ((flp(0.1) || flp(0.2)) && flp(lgs(v + vmax, 20, 0.5)) and a == CON) then ACC\n",
            "if (flp(lgs(distTrv(v, adec) - dstop, 2.8, 0.8)) and a == DEC) then CON\n",
            "if (flp(lgs(3 - 0.5 + 2, 2, 0.8)) and a == DEC) then ACC\n",
        );
        let p = parse_policy(text, &sig).unwrap();
        let printed = serialize_policy(&p);
        assert_eq!(printed, text);
        // And the printed form parses back to the same AST.
        let p2 = parse_policy(&printed, &sig).unwrap();
        assert_eq!(p.rules(), p2.rules());
    }

    #[test]
    fn precedence_of_and_over_or() {
        let sig = sig();
        let p = parse_policy("if (flp(0.1) || flp(0.2) && flp(0.3) and a == ACC) then CON", &sig)
            .unwrap();
        match &p.rules()[0].guard {
            Guard::Or(l, r) => {
                assert_eq!(**l, Guard::flip(ProbExpr::Const(0.1)));
                assert!(matches!(**r, Guard::And(..)));
            }
            g => panic!("expected top-level Or, got {g:?}"),
        }
    }

    #[test]
    fn reports_syntax_position() {
        let sig = sig();
        let err = parse_policy("if (flp(0.1) and a == ACC) then CON\nif (flp(,", &sig).unwrap_err();
        match err {
            PdslError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col >= 9);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn rejects_unknown_action_and_bad_dimension() {
        let sig = sig();
        assert!(matches!(
            parse_policy("if (flp(0.1) and a == FLY) then CON", &sig),
            Err(PdslError::UnknownAction { .. })
        ));
        assert!(matches!(
            parse_policy("if (flp(lgs(v - dstop, 0, 1)) and a == ACC) then CON", &sig),
            Err(PdslError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn numbers_round_trip_at_full_precision() {
        let sig = sig();
        let x0 = -0.123456789012345678;
        let k = 1.0 / 3.0;
        let text = format!("if (flp(lgs(v - vmax, {x0}, {k})) and a == ACC) then CON\n");
        let p = parse_policy(&text, &sig).unwrap();
        match &p.rules()[0].guard {
            Guard::Flip(ProbExpr::Logistic { x0: px0, k: pk, .. }) => {
                assert_eq!(*px0, x0);
                assert_eq!(*pk, k);
            }
            g => panic!("unexpected guard {g:?}"),
        }
        assert_eq!(serialize_policy(&p), text);
    }
}
