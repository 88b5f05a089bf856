//! Tokenizer and recursive-descent parser for model text.
//!
//! ```text
//! model := block ("+" block)*
//! block := kind "(" [arg ("," arg)*] ")" | "cp" "(" model "," model ")"
//! arg   := name "=" value
//! value := number | "?" | model | name
//! ```
//!
//! `#` starts a comment that runs to the end of the line. A bare `name`
//! value is only meaningful in the `fn` slot of a non-Markov block.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{BlockExpr, BlockKind, ModelExpr, ParamValue, CHANGEPOINT_KEYWORD};
use crate::blocks::FnRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Plus,
    LParen,
    RParen,
    Comma,
    Equals,
    Question,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Ident => "identifier",
            TokenKind::Number => "number",
            TokenKind::Plus => "'+'",
            TokenKind::LParen => "'('",
            TokenKind::RParen => "')'",
            TokenKind::Comma => "','",
            TokenKind::Equals => "'='",
            TokenKind::Question => "'?'",
            TokenKind::Eof => "end of input",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}{}", expected_suffix(expected))]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub col: usize,
    pub expected: Vec<TokenKind>,
}

fn expected_suffix(expected: &[TokenKind]) -> String {
    match expected {
        [] => String::new(),
        [one] => format!(" (expected {one})"),
        many => {
            let list: Vec<String> = many.iter().map(ToString::to_string).collect();
            format!(" (expected one of {})", list.join(", "))
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Lexer<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, buf: &mut String, pred: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            buf.push(c);
            self.bump();
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, line: usize, col: usize) -> Result<Token, ParseError> {
        let mut text = String::new();
        if self.peek() == Some('-') {
            text.push('-');
            self.bump();
        }
        self.take_while(&mut text, |c| c.is_ascii_digit());
        if self.peek() == Some('.') {
            text.push('.');
            self.bump();
            self.take_while(&mut text, |c| c.is_ascii_digit());
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            text.push('e');
            self.bump();
            if let Some(c @ ('+' | '-')) = self.peek() {
                text.push(c);
                self.bump();
            }
            self.take_while(&mut text, |c| c.is_ascii_digit());
        }
        let err = |message: String| ParseError {
            message,
            line,
            col,
            expected: vec![],
        };
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Token {
                kind: TokenKind::Number,
                lexeme: text,
                line,
                col,
            }),
            Ok(_) => Err(err(format!("number `{text}` is out of range"))),
            Err(_) => Err(err(format!("malformed number `{text}`"))),
        }
    }
}

/// Splits model text into tokens, ending with an end-of-input token.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia();
        let (line, col) = (lx.line, lx.col);
        let Some(c) = lx.peek() else {
            out.push(Token {
                kind: TokenKind::Eof,
                lexeme: String::new(),
                line,
                col,
            });
            return Ok(out);
        };
        let single = |kind| Token {
            kind,
            lexeme: c.to_string(),
            line,
            col,
        };
        let tok = match c {
            '+' => single(TokenKind::Plus),
            '(' => single(TokenKind::LParen),
            ')' => single(TokenKind::RParen),
            ',' => single(TokenKind::Comma),
            '=' => single(TokenKind::Equals),
            '?' => single(TokenKind::Question),
            'a'..='z' => {
                let mut text = String::new();
                lx.take_while(&mut text, |c| {
                    matches!(c, 'a'..='z' | '0'..='9' | '_' | '-')
                });
                out.push(Token {
                    kind: TokenKind::Ident,
                    lexeme: text,
                    line,
                    col,
                });
                continue;
            }
            '0'..='9' | '.' | '-' => {
                out.push(lx.number(line, col)?);
                continue;
            }
            other => {
                return Err(ParseError {
                    message: format!("unrecognized character `{other}`"),
                    line,
                    col,
                    expected: vec![],
                })
            }
        };
        lx.bump();
        out.push(tok);
    }
}

/// Parses and validates model text against the built-in function registry.
pub fn parse(src: &str) -> Result<ModelExpr, ParseError> {
    parse_with(src, FnRegistry::builtin())
}

/// Parses model text; non-Markov function names are checked against
/// `registry`.
pub fn parse_with(src: &str, registry: &FnRegistry) -> Result<ModelExpr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        registry,
    };
    let model = p.model()?;
    p.expect(TokenKind::Eof, &[TokenKind::Plus, TokenKind::Eof])?;
    Ok(model)
}

struct Parser<'r> {
    tokens: Vec<Token>,
    pos: usize,
    registry: &'r FnRegistry,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_kind_at(&self, offset: usize) -> TokenKind {
        self.tokens
            .get(self.pos + offset)
            .map_or(TokenKind::Eof, |t| t.kind)
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(tok: &Token, message: impl Into<String>, expected: &[TokenKind]) -> ParseError {
        ParseError {
            message: message.into(),
            line: tok.line,
            col: tok.col,
            expected: expected.to_vec(),
        }
    }

    fn unexpected(&self, expected: &[TokenKind]) -> ParseError {
        let tok = self.peek();
        let found = match tok.kind {
            TokenKind::Eof => "unexpected end of input".to_string(),
            _ => format!("unexpected `{}`", tok.lexeme),
        };
        Self::error_at(tok, found, expected)
    }

    fn expect(&mut self, kind: TokenKind, expected: &[TokenKind]) -> Result<Token, ParseError> {
        if self.peek().kind == kind {
            Ok(self.advance())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn model(&mut self) -> Result<ModelExpr, ParseError> {
        let mut terms = vec![self.block()?];
        while self.peek().kind == TokenKind::Plus {
            self.advance();
            terms.push(self.block()?);
        }
        Ok(ModelExpr::sum(terms))
    }

    fn block(&mut self) -> Result<BlockExpr, ParseError> {
        let head = self.expect(TokenKind::Ident, &[TokenKind::Ident])?;
        let block = if head.lexeme == CHANGEPOINT_KEYWORD {
            self.expect(TokenKind::LParen, &[TokenKind::LParen])?;
            let left = self.model()?;
            self.expect(TokenKind::Comma, &[TokenKind::Plus, TokenKind::Comma])?;
            let right = self.model()?;
            self.expect(TokenKind::RParen, &[TokenKind::Plus, TokenKind::RParen])?;
            BlockExpr::changepoint(left, right)
        } else {
            let kind: BlockKind = head
                .lexeme
                .parse()
                .map_err(|e: crate::ast::UnknownBlockKind| Self::error_at(&head, e.to_string(), &[]))?;
            self.expect(TokenKind::LParen, &[TokenKind::LParen])?;
            let mut params = BTreeMap::new();
            if self.peek().kind != TokenKind::RParen {
                loop {
                    let name = self.expect(TokenKind::Ident, &[TokenKind::Ident, TokenKind::RParen])?;
                    self.expect(TokenKind::Equals, &[TokenKind::Equals])?;
                    let value = self.value()?;
                    if params.insert(name.lexeme.clone(), value).is_some() {
                        return Err(Self::error_at(
                            &name,
                            format!("duplicate parameter `{}`", name.lexeme),
                            &[],
                        ));
                    }
                    if self.peek().kind == TokenKind::Comma {
                        self.advance();
                    } else {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RParen, &[TokenKind::Comma, TokenKind::RParen])?;
            BlockExpr::Basic { kind, params }
        };
        if let Some(message) = block.local_violations(self.registry).into_iter().next() {
            return Err(Self::error_at(&head, message, &[]));
        }
        Ok(block)
    }

    fn value(&mut self) -> Result<ParamValue, ParseError> {
        match self.peek().kind {
            TokenKind::Number => {
                let tok = self.advance();
                Ok(ParamValue::Literal(
                    tok.lexeme.parse().expect("lexer only emits valid numbers"),
                ))
            }
            TokenKind::Question => {
                self.advance();
                Ok(ParamValue::PriorDraw)
            }
            TokenKind::Ident if self.peek_kind_at(1) == TokenKind::LParen => {
                Ok(ParamValue::SubModel(self.model()?))
            }
            TokenKind::Ident => Ok(ParamValue::NamedFunction(self.advance().lexeme)),
            _ => Err(self.unexpected(&[
                TokenKind::Number,
                TokenKind::Question,
                TokenKind::Ident,
            ])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.lexeme))
            .collect()
    }

    #[test]
    fn tokenizes_zero() {
        use TokenKind::*;
        assert_eq!(
            kinds("zero()"),
            [
                (Ident, "zero".into()),
                (LParen, "(".into()),
                (RParen, ")".into()),
                (Eof, String::new())
            ]
        );
    }

    #[test]
    fn tokenizes_named_number() {
        use TokenKind::*;
        let toks: Vec<TokenKind> = kinds("rw(scale=0.1)").into_iter().map(|t| t.0).collect();
        assert_eq!(toks, [Ident, LParen, Ident, Equals, Number, RParen, Eof]);
        assert_eq!(kinds("rw(scale=0.1)")[4].1, "0.1");
    }

    #[test]
    fn bad_character_position() {
        let e = tokenize("rw(scale=$)").unwrap_err();
        assert_eq!((e.line, e.col), (1, 10));
        let e = tokenize("zero()\n  + Rw()").unwrap_err();
        assert_eq!((e.line, e.col), (2, 5));
    }

    #[test]
    fn numbers() {
        for (src, v) in [("-1.5", -1.5), ("2e-3", 2e-3), (".5", 0.5), ("7", 7.0), ("1E+2", 100.0)] {
            let t = &tokenize(src).unwrap()[0];
            assert_eq!(t.kind, TokenKind::Number);
            assert_eq!(t.lexeme.parse::<f64>().unwrap(), v);
        }
        assert!(tokenize("1e999").unwrap_err().message.contains("out of range"));
        assert!(tokenize("-").is_err());
        assert!(tokenize("1e").is_err());
    }

    #[test]
    fn comments_and_whitespace() {
        let m = parse("# a model\nnoise(  # observation\n  loc = rw()\n)\n").unwrap();
        assert_eq!(m.print_canonical(), "noise(loc=rw())");
    }

    #[test]
    fn stochastic_volatility() {
        let m = parse("noise(loc=zero(), scale=grw())").unwrap();
        let [BlockExpr::Basic { kind, params }] = m.terms() else {
            panic!("one term")
        };
        assert_eq!(*kind, BlockKind::Noise);
        assert_eq!(
            params["scale"],
            ParamValue::SubModel(ModelExpr::single(BlockExpr::basic(BlockKind::Grw)))
        );
    }

    #[test]
    fn multiple_seasonality() {
        let m = parse(
            "seasonal(period=7) + seasonal(period=30) + cp(seasonal(period=7), seasonal(period=30))",
        )
        .unwrap();
        assert_eq!(m.terms().len(), 3);
        assert!(matches!(m.terms()[2], BlockExpr::Changepoint { .. }));
    }

    #[test]
    fn changepoint_rule_is_enforced() {
        let e = parse("cp(rw()+rw(), rw()+rw())").unwrap_err();
        assert_eq!(e.message, "changepoint requires one single-block side");
        assert_eq!((e.line, e.col), (1, 1));
    }

    #[test]
    fn sums_inside_slots() {
        let m = parse("noise(loc=rw() + trend(a0=1), scale=0.5)").unwrap();
        let BlockExpr::Basic { params, .. } = &m.terms()[0] else {
            panic!()
        };
        let ParamValue::SubModel(loc) = &params["loc"] else {
            panic!()
        };
        assert_eq!(loc.terms().len(), 2);
    }

    #[test]
    fn function_slot() {
        let m = parse("nonmarkov(fn=optim-null, s=2)").unwrap();
        assert_eq!(m.print_canonical(), "nonmarkov(fn=optim-null, s=2)");
        let e = parse("nonmarkov(fn=nothing)").unwrap_err();
        assert_eq!(e.message, "function `nothing` is not registered");
    }

    #[test]
    fn syntax_errors_carry_expectations() {
        let e = parse("rw(").unwrap_err();
        assert_eq!((e.line, e.col), (1, 4));
        assert!(e.expected.contains(&TokenKind::RParen));
        let e = parse("rw() rw()").unwrap_err();
        assert_eq!(e.col, 6);
        assert_eq!(e.expected, [TokenKind::Plus, TokenKind::Eof]);
        let e = parse("rw(scale=)").unwrap_err();
        assert_eq!(e.col, 10);
        let e = parse("walk()").unwrap_err();
        assert_eq!(e.message, "unknown block kind `walk`");
        let e = parse("rw(scale=1, scale=2)").unwrap_err();
        assert_eq!((e.col, e.message.as_str()), (13, "duplicate parameter `scale`"));
        let e = parse("").unwrap_err();
        assert_eq!(e.expected, [TokenKind::Ident]);
    }

    #[test]
    fn validation_errors_point_at_block() {
        let e = parse("zero() +\n  rw(scale=-1)").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
        assert!(e.message.contains("nonnegative"));
    }

    #[test]
    fn error_display() {
        let e = parse("rw(").unwrap_err();
        assert_eq!(
            e.to_string(),
            "1:4: unexpected end of input (expected one of identifier, ')')"
        );
    }
}
