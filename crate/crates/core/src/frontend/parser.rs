//! Recursive-descent parser for MiniMuli source text.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;

/// Parses a whole compilation unit.
///
/// Checks syntax and class-name uniqueness. Name resolution happens when
/// the class table is built.
pub fn parse(source: &str) -> Result<Program, FrontendError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let program = parser.program()?;
    let mut seen = std::collections::HashMap::new();
    for class in &program.classes {
        if let Some(first) = seen.insert(class.name.clone(), class.span) {
            return Err(FrontendError::DuplicateClass {
                name: class.name.clone(),
                span: class.span,
                first,
            });
        }
    }
    Ok(program)
}

/// Parses a single expression; used by tests and tooling.
pub fn parse_expr(source: &str) -> Result<Expr, FrontendError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    parser.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let found = match self.peek() {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            other => other.to_string(),
        };
        Err(FrontendError::Syntax {
            span: self.span(),
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            let label = tok.to_string();
            self.error(&[label.as_str()])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut classes = Vec::new();
        while *self.peek() != Tok::Eof {
            classes.push(self.class_decl()?);
        }
        if classes.is_empty() {
            return self.error(&["`class`", "`interface`", "`abstract`"]);
        }
        Ok(Program { classes })
    }

    fn class_decl(&mut self) -> PResult<ClassDecl> {
        let span = self.span();
        let is_abstract = self.eat(&Tok::Abstract);
        let kind = match self.peek() {
            Tok::Class => ClassKind::Class,
            Tok::Interface => ClassKind::Interface,
            _ => return self.error(&["`class`", "`interface`"]),
        };
        self.advance();
        let name = self.ident()?;
        let extends = if self.eat(&Tok::Extends) {
            Some(self.ident()?)
        } else {
            None
        };
        let mut implements = Vec::new();
        if self.eat(&Tok::Implements) {
            implements.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                implements.push(self.ident()?);
            }
        }
        self.expect(Tok::LBrace)?;
        let mut members = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if *self.peek() == Tok::Eof {
                return self.error(&["`}`", "member declaration"]);
            }
            members.push(self.member()?);
        }
        Ok(ClassDecl {
            name,
            kind,
            is_abstract,
            extends,
            implements,
            members,
            span,
        })
    }

    fn type_name(&mut self) -> PResult<TypeName> {
        let ty = match self.peek().clone() {
            Tok::KwInt => TypeName::Int,
            Tok::KwBoolean => TypeName::Boolean,
            Tok::KwString => TypeName::String,
            Tok::Void => TypeName::Void,
            Tok::Ident(n) => TypeName::Named(n),
            _ => return self.error(&["type"]),
        };
        self.advance();
        Ok(ty)
    }

    fn member(&mut self) -> PResult<Member> {
        let span = self.span();
        let is_abstract = self.eat(&Tok::Abstract);
        let ty = self.type_name()?;
        let name = self.ident()?;
        if *self.peek() == Tok::LParen {
            self.advance();
            let mut params = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    let ty = self.type_name()?;
                    let name = self.ident()?;
                    params.push(Param { ty, name });
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            let body = if self.eat(&Tok::Semi) {
                None
            } else if *self.peek() == Tok::LBrace {
                Some(self.block()?)
            } else {
                return self.error(&["`{`", "`;`"]);
            };
            return Ok(Member::Method(MethodDecl {
                is_abstract,
                ret: ty,
                name,
                params,
                body,
                span,
            }));
        }
        if is_abstract {
            return self.error(&["`(`"]);
        }
        if *self.peek() == Tok::Free {
            return Err(FrontendError::FreeField { name, span });
        }
        self.expect(Tok::Semi)?;
        Ok(Member::Field(FieldDecl { ty, name, span }))
    }

    fn block(&mut self) -> PResult<Block> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if *self.peek() == Tok::Eof {
                return self.error(&["`}`", "statement"]);
            }
            stmts.push(self.stmt()?);
        }
        Ok(Block { stmts })
    }

    fn starts_declaration(&self) -> bool {
        match self.peek() {
            Tok::KwInt | Tok::KwBoolean | Tok::KwString => true,
            Tok::Ident(_) => matches!(self.peek_at(1), Tok::Ident(_)),
            _ => false,
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let kind = match self.peek() {
            Tok::If => {
                self.advance();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_block = self.block()?;
                let else_block = if self.eat(&Tok::Else) {
                    Some(self.block()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                }
            }
            Tok::Return => {
                self.advance();
                let value = if self.eat(&Tok::Semi) {
                    None
                } else {
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    Some(e)
                };
                StmtKind::Return(value)
            }
            Tok::Fail => {
                self.advance();
                self.expect(Tok::LParen)?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::Fail
            }
            Tok::Println => {
                self.advance();
                self.expect(Tok::LParen)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::Println(e)
            }
            _ if self.starts_declaration() => {
                let ty = self.type_name()?;
                let name = self.ident()?;
                let init = if self.eat(&Tok::Free) {
                    LocalInit::Free
                } else if self.eat(&Tok::Assign) {
                    LocalInit::Expr(self.expr()?)
                } else {
                    LocalInit::None
                };
                if *self.peek() != Tok::Semi {
                    return self.error(&["`;`", "`=`", "`free`"]);
                }
                self.advance();
                StmtKind::Local { ty, name, init }
            }
            _ => {
                let e = self.expr()?;
                if self.eat(&Tok::Assign) {
                    if !matches!(e.kind, ExprKind::Var(_) | ExprKind::Field { .. }) {
                        return Err(FrontendError::Syntax {
                            span: e.span,
                            found: "expression".into(),
                            expected: vec!["variable or field on the left of `=`".into()],
                        });
                    }
                    let value = self.expr()?;
                    self.expect(Tok::Semi)?;
                    StmtKind::Assign { target: e, value }
                } else {
                    self.expect(Tok::Semi)?;
                    StmtKind::Expr(e)
                }
            }
        };
        Ok(Stmt { kind, span })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.equality()
    }

    fn binary_level(
        &mut self,
        next: fn(&mut Self) -> PResult<Expr>,
        ops: &[(Tok, BinOp)],
    ) -> PResult<Expr> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (tok, op) in ops {
                if self.peek() == tok {
                    let span = self.span();
                    self.advance();
                    let rhs = next(self)?;
                    lhs = Expr::new(
                        ExprKind::Binary {
                            op: *op,
                            lhs: Box::new(lhs),
                            rhs: Box::new(rhs),
                        },
                        span,
                    );
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn equality(&mut self) -> PResult<Expr> {
        self.binary_level(
            Self::relational,
            &[
                (Tok::EqEq, BinOp::Eq),
                (Tok::NotEq, BinOp::Ne),
                (Tok::HashEq, BinOp::StructEq),
            ],
        )
    }

    fn relational(&mut self) -> PResult<Expr> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::Instanceof => {
                    let span = self.span();
                    self.advance();
                    let ty = self.ident()?;
                    lhs = Expr::new(
                        ExprKind::InstanceOf {
                            expr: Box::new(lhs),
                            ty,
                        },
                        span,
                    );
                    continue;
                }
                _ => return Ok(lhs),
            };
            let span = self.span();
            self.advance();
            let rhs = self.additive()?;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
    }

    fn additive(&mut self) -> PResult<Expr> {
        self.binary_level(
            Self::multiplicative,
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
        )
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        self.binary_level(Self::unary, &[(Tok::Star, BinOp::Mul)])
    }

    fn is_cast(&self) -> bool {
        *self.peek() == Tok::LParen
            && matches!(self.peek_at(1), Tok::Ident(_))
            && *self.peek_at(2) == Tok::RParen
            && matches!(
                self.peek_at(3),
                Tok::Ident(_)
                    | Tok::Int(_)
                    | Tok::Str(_)
                    | Tok::LParen
                    | Tok::This
                    | Tok::New
                    | Tok::True
                    | Tok::False
                    | Tok::Null
                    | Tok::Bang
            )
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = match self.peek() {
            Tok::Minus => Some(UnaryOp::Neg),
            Tok::Bang => Some(UnaryOp::Not),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let expr = self.unary()?;
            return Ok(Expr::new(
                ExprKind::Unary {
                    op,
                    expr: Box::new(expr),
                },
                span,
            ));
        }
        if self.is_cast() {
            self.advance();
            let ty = self.ident()?;
            self.expect(Tok::RParen)?;
            let expr = self.unary()?;
            return Ok(Expr::new(
                ExprKind::Cast {
                    ty,
                    expr: Box::new(expr),
                },
                span,
            ));
        }
        self.postfix()
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                if !self.eat(&Tok::Comma) {
                    return self.error(&["`,`", "`)`"]);
                }
            }
        }
        Ok(args)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Dot {
            let span = self.span();
            self.advance();
            let name = self.ident()?;
            e = if *self.peek() == Tok::LParen {
                let args = self.args()?;
                Expr::new(
                    ExprKind::Call {
                        target: Some(Box::new(e)),
                        name,
                        args,
                    },
                    span,
                )
            } else {
                Expr::new(
                    ExprKind::Field {
                        target: Box::new(e),
                        name,
                    },
                    span,
                )
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                ExprKind::Int(v)
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            Tok::True => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::Null => {
                self.advance();
                ExprKind::Null
            }
            Tok::This => {
                self.advance();
                ExprKind::This
            }
            Tok::Ident(name) => {
                self.advance();
                if *self.peek() == Tok::LParen {
                    let args = self.args()?;
                    ExprKind::Call {
                        target: None,
                        name,
                        args,
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            Tok::New => {
                self.advance();
                let class = self.ident()?;
                let args = self.args()?;
                ExprKind::New { class, args }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            _ => return self.error(&["expression"]),
        };
        Ok(Expr::new(kind, span))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_class() {
        let p = parse("class A { int i; }").unwrap();
        assert_eq!(p.classes.len(), 1);
        let a = &p.classes[0];
        assert_eq!(a.name, "A");
        let fields: Vec<_> = a.fields().map(|f| (f.name.as_str(), f.ty.clone())).collect();
        assert_eq!(fields, vec![("i", TypeName::Int)]);
    }

    #[test]
    fn shape_search_body() {
        let src = "class Main { void search() { Shape s free; \
                   if (s.getArea() == 16) { println(s.toString()); } else { fail(); } } }";
        let p = parse(src).unwrap();
        let m = p.classes[0].methods().next().unwrap();
        let body = &m.body.as_ref().unwrap().stmts;
        assert!(matches!(
            &body[0].kind,
            StmtKind::Local { init: LocalInit::Free, name, .. } if name == "s"
        ));
        let StmtKind::If { cond, then_block, else_block } = &body[1].kind else {
            panic!("expected if");
        };
        assert!(matches!(cond.kind, ExprKind::Binary { op: BinOp::Eq, .. }));
        assert!(matches!(then_block.stmts[0].kind, StmtKind::Println(_)));
        assert!(matches!(else_block.as_ref().unwrap().stmts[0].kind, StmtKind::Fail));
    }

    #[test]
    fn symbolic_declarations() {
        let p = parse("class M { void f() { int x free; int z = x + 5; } }").unwrap();
        let m = p.classes[0].methods().next().unwrap();
        let body = &m.body.as_ref().unwrap().stmts;
        assert!(matches!(body[0].kind, StmtKind::Local { init: LocalInit::Free, .. }));
        let StmtKind::Local { init: LocalInit::Expr(e), .. } = &body[1].kind else {
            panic!()
        };
        assert!(matches!(e.kind, ExprKind::Binary { op: BinOp::Add, .. }));
    }

    #[test]
    fn precedence_and_casts() {
        let e = parse_expr("1 + 2 * 3 == x").unwrap();
        let ExprKind::Binary { op: BinOp::Eq, lhs, .. } = e.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Add, rhs, .. } = lhs.kind else { panic!() };
        assert!(matches!(rhs.kind, ExprKind::Binary { op: BinOp::Mul, .. }));

        let e = parse_expr("(Square) o").unwrap();
        assert!(matches!(e.kind, ExprKind::Cast { ref ty, .. } if ty == "Square"));
        // a parenthesised variable followed by an operator is not a cast
        let e = parse_expr("(a) + b").unwrap();
        assert!(matches!(e.kind, ExprKind::Binary { op: BinOp::Add, .. }));
        let e = parse_expr("a #= b").unwrap();
        assert!(matches!(e.kind, ExprKind::Binary { op: BinOp::StructEq, .. }));
        let e = parse_expr("o instanceof Rectangle").unwrap();
        assert!(matches!(e.kind, ExprKind::InstanceOf { .. }));
    }

    #[test]
    fn syntax_error_reports_position_and_expected() {
        let err = parse("class A {\n  int i\n}").unwrap_err();
        match err {
            FrontendError::Syntax { span, expected, .. } => {
                assert_eq!((span.line, span.col), (3, 1));
                assert!(expected.contains(&"`;`".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_class_rejected() {
        assert!(matches!(
            parse("class A {} class A {}"),
            Err(FrontendError::DuplicateClass { .. })
        ));
    }

    #[test]
    fn free_field_rejected() {
        assert!(matches!(
            parse("class A { int i free; }"),
            Err(FrontendError::FreeField { .. })
        ));
    }
}
