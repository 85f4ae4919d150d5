use super::{BinOp, Expr, ExprError, Token, TokenKind};

const UNARY_BP: u8 = 5;

/// Pratt parser over a token stream produced by [`super::tokenize`].
pub fn parse(tokens: &[Token]) -> Result<Expr, ExprError> {
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.expr(0)?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            offset: t.offset,
            message: format!("unexpected `{}`", t.text),
        });
    }
    Ok(expr)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

fn infix_bp(op: char) -> Option<(u8, u8, BinOp)> {
    Some(match op {
        '+' => (1, 2, BinOp::Add),
        '-' => (1, 2, BinOp::Sub),
        '*' => (3, 4, BinOp::Mul),
        '/' => (3, 4, BinOp::Div),
        '^' => (7, 6, BinOp::Pow),
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn end_offset(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.offset + t.text.len())
            .unwrap_or(0)
    }

    fn expect(&mut self, want: &TokenKind, what: &str) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if &t.kind == want => Ok(()),
            Some(t) => Err(ExprError::Syntax {
                offset: t.offset,
                message: format!("expected {what}, found `{}`", t.text),
            }),
            None => Err(ExprError::Syntax {
                offset: self.end_offset(),
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        while let Some(t) = self.peek() {
            let TokenKind::Op(op) = t.kind else { break };
            let Some((lbp, rbp, bin)) = infix_bp(op) else { break };
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(rbp)?;
            lhs = Expr::binary(bin, lhs, rhs);
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let Some(t) = self.next() else {
            return Err(ExprError::Syntax {
                offset: self.end_offset(),
                message: "unexpected end of input".into(),
            });
        };
        match &t.kind {
            TokenKind::Number(v) => Ok(Expr::Num(*v)),
            TokenKind::Var(i) => Ok(Expr::Var(*i)),
            TokenKind::Op('-') => Ok(Expr::Neg(Box::new(self.expr(UNARY_BP)?))),
            TokenKind::LParen => {
                let inner = self.expr(0)?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Func(func) => {
                let func = *func;
                self.expect(&TokenKind::LParen, "`(` after function name")?;
                let mut args = vec![self.expr(0)?];
                while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Comma)) {
                    self.pos += 1;
                    args.push(self.expr(0)?);
                }
                self.expect(&TokenKind::RParen, "`)`")?;
                if args.len() != func.arity() {
                    return Err(ExprError::Arity {
                        offset: t.offset,
                        func: func.name(),
                        expected: func.arity(),
                        found: args.len(),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(ExprError::Syntax {
                offset: t.offset,
                message: format!("unexpected `{}`", t.text),
            }),
        }
    }
}
