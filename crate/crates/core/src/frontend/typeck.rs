//! Static checking and resolution. Produces a typed tree in which every
//! expression carries its static type, every field access names the field
//! it resolves to through the receiver's static type, and every local has
//! a frame slot.

use std::collections::HashMap;

use super::ast::{self, BinOp, ExprKind, LocalInit, Span, StmtKind, TypeName, UnaryOp};
use super::FrontendError;
use crate::classes::{ClassTable, FieldId, MethodImpl, MethodKey, Ty, TypeId};
use crate::sym::{ArithOp, Rel};

#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    pub kind: TExprKind,
    pub ty: Ty,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TExprKind {
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
    This,
    Local(u16),
    Field {
        target: Box<TExpr>,
        field: FieldId,
    },
    /// Virtual call; the receiver's dynamic type picks the body.
    Call {
        target: Box<TExpr>,
        method: MethodKey,
        args: Vec<TExpr>,
    },
    New {
        class: TypeId,
        args: Vec<TExpr>,
    },
    Neg(Box<TExpr>),
    Not(Box<TExpr>),
    Arith {
        op: ArithOp,
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
    },
    Concat {
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
    },
    Compare {
        rel: Rel,
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
    },
    RefEq {
        negated: bool,
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
    },
    StructEq {
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
    },
    Cast {
        target: TypeId,
        statically_valid: bool,
        expr: Box<TExpr>,
    },
    InstanceOf {
        target: TypeId,
        statically_valid: bool,
        expr: Box<TExpr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TInit {
    /// `T x;` gets zero, false or null.
    Default,
    Free,
    Expr(TExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TStmt {
    Local {
        slot: u16,
        ty: Ty,
        init: TInit,
    },
    AssignLocal {
        slot: u16,
        value: TExpr,
    },
    AssignField {
        target: TExpr,
        field: FieldId,
        value: TExpr,
    },
    If {
        cond: TExpr,
        then_block: Vec<TStmt>,
        else_block: Vec<TStmt>,
    },
    Return(Option<TExpr>),
    Fail,
    Println(TExpr),
    Expr(TExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalInfo {
    pub name: String,
    pub ty: Ty,
}

#[derive(Debug, Clone)]
pub struct TypedMethod {
    pub owner: TypeId,
    pub key: MethodKey,
    pub ret: Ty,
    pub num_params: usize,
    /// Slot 0 is `this`, then parameters, then declared locals.
    pub locals: Vec<LocalInfo>,
    pub body: Vec<TStmt>,
}

#[derive(Debug, Clone)]
pub struct CheckedProgram {
    pub table: ClassTable,
    pub methods: HashMap<(TypeId, MethodKey), TypedMethod>,
    pub program: ast::Program,
}

impl CheckedProgram {
    pub fn method(&self, owner: TypeId, key: &MethodKey) -> Option<&TypedMethod> {
        self.methods.get(&(owner, key.clone()))
    }
}

pub fn typecheck(program: &ast::Program, table: ClassTable) -> Result<CheckedProgram, FrontendError> {
    let mut methods = HashMap::new();
    for decl in &program.classes {
        let owner = table.lookup(&decl.name).expect("class table built from this program");
        for m in decl.methods() {
            let Some(body) = &m.body else { continue };
            let key = MethodKey::new(m.name.clone(), m.params.len());
            let sig = table.class(owner).method(&key).expect("signature registered");
            debug_assert_eq!(sig.imp, MethodImpl::Source);
            let mut cx = MethodChecker {
                table: &table,
                owner,
                ret: sig.ret,
                locals: vec![LocalInfo {
                    name: "this".into(),
                    ty: Ty::Ref(owner),
                }],
                scopes: vec![HashMap::new()],
            };
            for (name, ty) in sig.param_names.iter().zip(&sig.params) {
                cx.declare(name, *ty, m.span)?;
            }
            let body = cx.block(body)?;
            if sig.ret != Ty::Void && !terminates(&body) {
                return Err(FrontendError::Type {
                    span: m.span,
                    message: format!("method `{}` may finish without returning a value", key),
                });
            }
            methods.insert(
                (owner, key.clone()),
                TypedMethod {
                    owner,
                    key,
                    ret: sig.ret,
                    num_params: sig.params.len(),
                    locals: cx.locals,
                    body,
                },
            );
        }
    }
    Ok(CheckedProgram {
        table,
        methods,
        program: program.clone(),
    })
}

fn terminates(stmts: &[TStmt]) -> bool {
    stmts.iter().any(|s| match s {
        TStmt::Return(_) | TStmt::Fail => true,
        TStmt::If {
            then_block,
            else_block,
            ..
        } => terminates(then_block) && terminates(else_block),
        _ => false,
    })
}

struct MethodChecker<'a> {
    table: &'a ClassTable,
    owner: TypeId,
    ret: Ty,
    locals: Vec<LocalInfo>,
    scopes: Vec<HashMap<String, u16>>,
}

type TResult<T> = Result<T, FrontendError>;

fn terr<T>(span: Span, message: impl Into<String>) -> TResult<T> {
    Err(FrontendError::Type {
        span,
        message: message.into(),
    })
}

impl MethodChecker<'_> {
    fn name(&self, ty: Ty) -> String {
        self.table.type_name(ty)
    }

    fn declare(&mut self, name: &str, ty: Ty, span: Span) -> TResult<u16> {
        if name == "this" || self.resolve_local(name).is_some() {
            return terr(span, format!("variable `{name}` is already defined"));
        }
        let slot = self.locals.len() as u16;
        self.locals.push(LocalInfo {
            name: name.to_string(),
            ty,
        });
        self.scopes.last_mut().unwrap().insert(name.to_string(), slot);
        Ok(slot)
    }

    fn resolve_local(&self, name: &str) -> Option<u16> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn resolve_type(&self, name: &TypeName, span: Span) -> TResult<Ty> {
        Ok(match name {
            TypeName::Int => Ty::Int,
            TypeName::Boolean => Ty::Bool,
            TypeName::String => Ty::Str,
            TypeName::Void => Ty::Void,
            TypeName::Named(n) => Ty::Ref(self.class_named(n, span)?),
        })
    }

    fn class_named(&self, n: &str, span: Span) -> TResult<TypeId> {
        self.table.lookup(n).ok_or_else(|| FrontendError::UnknownType {
            name: n.to_string(),
            span,
        })
    }

    fn assignable(&self, to: Ty, from: Ty) -> bool {
        match (to, from) {
            _ if to == from => to != Ty::Void,
            (Ty::Ref(_) | Ty::Str, Ty::Null) => true,
            (Ty::Ref(sup), Ty::Ref(sub)) => self.table.is_subtype(sub, sup),
            _ => false,
        }
    }

    fn expect_assignable(&self, to: Ty, e: &TExpr) -> TResult<()> {
        if self.assignable(to, e.ty) {
            Ok(())
        } else {
            terr(
                e.span,
                format!("expected `{}`, found `{}`", self.name(to), self.name(e.ty)),
            )
        }
    }

    fn block(&mut self, block: &ast::Block) -> TResult<Vec<TStmt>> {
        self.scopes.push(HashMap::new());
        let out = block.stmts.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        out
    }

    fn stmt(&mut self, stmt: &ast::Stmt) -> TResult<TStmt> {
        let span = stmt.span;
        Ok(match &stmt.kind {
            StmtKind::Local { ty, name, init } => {
                let ty = self.resolve_type(ty, span)?;
                if ty == Ty::Void {
                    return terr(span, format!("variable `{name}` cannot be void"));
                }
                let init = match init {
                    LocalInit::None => TInit::Default,
                    LocalInit::Free => {
                        if ty == Ty::Str {
                            return terr(span, "String variables cannot be free");
                        }
                        TInit::Free
                    }
                    LocalInit::Expr(e) => {
                        let e = self.expr(e)?;
                        self.expect_assignable(ty, &e)?;
                        TInit::Expr(e)
                    }
                };
                let slot = self.declare(name, ty, span)?;
                TStmt::Local { slot, ty, init }
            }
            StmtKind::Assign { target, value } => {
                let value = self.expr(value)?;
                match &target.kind {
                    ExprKind::Var(name) if self.resolve_local(name).is_some() => {
                        let slot = self.resolve_local(name).unwrap();
                        self.expect_assignable(self.locals[slot as usize].ty, &value)?;
                        TStmt::AssignLocal { slot, value }
                    }
                    _ => {
                        let target = self.expr(target)?;
                        let TExprKind::Field { target, field } = target.kind else {
                            return terr(span, "left side of `=` must be a variable or field");
                        };
                        self.expect_assignable(self.table.field(field).ty, &value)?;
                        TStmt::AssignField {
                            target: *target,
                            field,
                            value,
                        }
                    }
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let cond = self.expr(cond)?;
                if cond.ty != Ty::Bool {
                    return terr(cond.span, "condition must be boolean");
                }
                TStmt::If {
                    cond,
                    then_block: self.block(then_block)?,
                    else_block: match else_block {
                        Some(b) => self.block(b)?,
                        None => Vec::new(),
                    },
                }
            }
            StmtKind::Return(value) => match (value, self.ret) {
                (None, Ty::Void) => TStmt::Return(None),
                (None, _) => return terr(span, "missing return value"),
                (Some(_), Ty::Void) => return terr(span, "void method cannot return a value"),
                (Some(e), ret) => {
                    let e = self.expr(e)?;
                    self.expect_assignable(ret, &e)?;
                    TStmt::Return(Some(e))
                }
            },
            StmtKind::Fail => TStmt::Fail,
            StmtKind::Println(e) => {
                let e = self.expr(e)?;
                if e.ty == Ty::Void {
                    return terr(e.span, "cannot print a void value");
                }
                TStmt::Println(e)
            }
            StmtKind::Expr(e) => TStmt::Expr(self.expr(e)?),
        })
    }

    fn this(&self, span: Span) -> TExpr {
        TExpr {
            kind: TExprKind::This,
            ty: Ty::Ref(self.owner),
            span,
        }
    }

    fn field_access(&self, target: TExpr, name: &str, span: Span) -> TResult<TExpr> {
        let Ty::Ref(static_ty) = target.ty else {
            return terr(span, format!("`{}` has no fields", self.name(target.ty)));
        };
        let Some(field) = self.table.lookup_field(static_ty, name) else {
            return terr(
                span,
                format!("type `{}` has no field `{name}`", self.table.name(static_ty)),
            );
        };
        Ok(TExpr {
            kind: TExprKind::Field {
                target: Box::new(target),
                field: field.id,
            },
            ty: field.ty,
            span,
        })
    }

    fn type_test_validity(&self, operand: Ty, target: TypeId) -> bool {
        match operand {
            Ty::Ref(s) => self.table.is_subtype(target, s) || self.table.is_subtype(s, target),
            _ => true,
        }
    }

    fn expr(&mut self, e: &ast::Expr) -> TResult<TExpr> {
        let span = e.span;
        let (kind, ty) = match &e.kind {
            ExprKind::Int(v) => (TExprKind::Int(*v), Ty::Int),
            ExprKind::Bool(b) => (TExprKind::Bool(*b), Ty::Bool),
            ExprKind::Str(s) => (TExprKind::Str(s.clone()), Ty::Str),
            ExprKind::Null => (TExprKind::Null, Ty::Null),
            ExprKind::This => return Ok(self.this(span)),
            ExprKind::Var(name) => {
                if let Some(slot) = self.resolve_local(name) {
                    (TExprKind::Local(slot), self.locals[slot as usize].ty)
                } else if self.table.lookup_field(self.owner, name).is_some() {
                    return self.field_access(self.this(span), name, span);
                } else {
                    return terr(span, format!("unknown variable `{name}`"));
                }
            }
            ExprKind::Field { target, name } => {
                let target = self.expr(target)?;
                return self.field_access(target, name, span);
            }
            ExprKind::Call { target, name, args } => {
                let target = match target {
                    Some(t) => self.expr(t)?,
                    None => self.this(span),
                };
                let Ty::Ref(static_ty) = target.ty else {
                    return terr(
                        span,
                        format!("cannot call `{name}` on `{}`", self.name(target.ty)),
                    );
                };
                let key = MethodKey::new(name.clone(), args.len());
                let Some((_, sig)) = self.table.lookup_method(static_ty, &key) else {
                    return terr(
                        span,
                        format!("type `{}` has no method `{key}`", self.table.name(static_ty)),
                    );
                };
                let (params, ret) = (sig.params.clone(), sig.ret);
                let mut targs = Vec::new();
                for (arg, param) in args.iter().zip(params) {
                    let arg = self.expr(arg)?;
                    self.expect_assignable(param, &arg)?;
                    targs.push(arg);
                }
                (
                    TExprKind::Call {
                        target: Box::new(target),
                        method: key,
                        args: targs,
                    },
                    ret,
                )
            }
            ExprKind::New { class, args } => {
                let class = self.class_named(class, span)?;
                if !self.table.is_instantiable(class) {
                    return terr(
                        span,
                        format!("cannot instantiate abstract type `{}`", self.table.name(class)),
                    );
                }
                let fields = self.table.all_fields(class);
                if fields.len() != args.len() {
                    return terr(
                        span,
                        format!(
                            "`new {}` takes {} field initializers, found {}",
                            self.table.name(class),
                            fields.len(),
                            args.len()
                        ),
                    );
                }
                let mut targs = Vec::new();
                for (arg, f) in args.iter().zip(fields) {
                    let arg = self.expr(arg)?;
                    self.expect_assignable(self.table.field(f).ty, &arg)?;
                    targs.push(arg);
                }
                (TExprKind::New { class, args: targs }, Ty::Ref(class))
            }
            ExprKind::Unary { op, expr } => {
                let inner = self.expr(expr)?;
                match (op, inner.ty) {
                    (UnaryOp::Neg, Ty::Int) => (TExprKind::Neg(Box::new(inner)), Ty::Int),
                    (UnaryOp::Not, Ty::Bool) => (TExprKind::Not(Box::new(inner)), Ty::Bool),
                    (UnaryOp::Neg, t) => return terr(span, format!("cannot negate `{}`", self.name(t))),
                    (UnaryOp::Not, t) => return terr(span, format!("cannot apply `!` to `{}`", self.name(t))),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let lhs = self.expr(lhs)?;
                let rhs = self.expr(rhs)?;
                self.binary(*op, lhs, rhs, span)?
            }
            ExprKind::Cast { ty, expr } => {
                let target = self.class_named(ty, span)?;
                let inner = self.expr(expr)?;
                if !inner.ty.is_reference() {
                    return terr(span, format!("cannot cast `{}`", self.name(inner.ty)));
                }
                (
                    TExprKind::Cast {
                        target,
                        statically_valid: self.type_test_validity(inner.ty, target),
                        expr: Box::new(inner),
                    },
                    Ty::Ref(target),
                )
            }
            ExprKind::InstanceOf { expr, ty } => {
                let target = self.class_named(ty, span)?;
                let inner = self.expr(expr)?;
                if !inner.ty.is_reference() {
                    return terr(span, format!("`instanceof` on `{}`", self.name(inner.ty)));
                }
                (
                    TExprKind::InstanceOf {
                        target,
                        statically_valid: self.type_test_validity(inner.ty, target),
                        expr: Box::new(inner),
                    },
                    Ty::Bool,
                )
            }
        };
        Ok(TExpr { kind, ty, span })
    }

    fn binary(&self, op: BinOp, lhs: TExpr, rhs: TExpr, span: Span) -> TResult<(TExprKind, Ty)> {
        let (l, r) = (lhs.ty, rhs.ty);
        let mismatch = || {
            terr(
                span,
                format!(
                    "operator `{}` cannot be applied to `{}` and `{}`",
                    op.symbol(),
                    self.name(l),
                    self.name(r)
                ),
            )
        };
        let (lhs, rhs) = (Box::new(lhs), Box::new(rhs));
        Ok(match op {
            BinOp::Add if l == Ty::Str || r == Ty::Str => {
                if l == Ty::Void || r == Ty::Void {
                    return mismatch();
                }
                (TExprKind::Concat { lhs, rhs }, Ty::Str)
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul => {
                if (l, r) != (Ty::Int, Ty::Int) {
                    return mismatch();
                }
                let op = match op {
                    BinOp::Add => ArithOp::Add,
                    BinOp::Sub => ArithOp::Sub,
                    _ => ArithOp::Mul,
                };
                (TExprKind::Arith { op, lhs, rhs }, Ty::Int)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                if (l, r) != (Ty::Int, Ty::Int) {
                    return mismatch();
                }
                let rel = match op {
                    BinOp::Lt => Rel::Lt,
                    BinOp::Le => Rel::Le,
                    BinOp::Gt => Rel::Gt,
                    _ => Rel::Ge,
                };
                (TExprKind::Compare { rel, lhs, rhs }, Ty::Bool)
            }
            BinOp::Eq | BinOp::Ne => {
                let negated = op == BinOp::Ne;
                if (l, r) == (Ty::Int, Ty::Int) {
                    let rel = if negated { Rel::Ne } else { Rel::Eq };
                    (TExprKind::Compare { rel, lhs, rhs }, Ty::Bool)
                } else if l.is_reference() && r.is_reference() {
                    (TExprKind::RefEq { negated, lhs, rhs }, Ty::Bool)
                } else if (l, r) == (Ty::Bool, Ty::Bool) {
                    return terr(span, "equality on booleans is not supported; use a condition");
                } else {
                    return mismatch();
                }
            }
            BinOp::StructEq => {
                if !matches!(l, Ty::Ref(_)) || !matches!(r, Ty::Ref(_)) {
                    return terr(span, "`#=` requires two reference-typed operands");
                }
                (TExprKind::StructEq { lhs, rhs }, Ty::Bool)
            }
        })
    }
}
