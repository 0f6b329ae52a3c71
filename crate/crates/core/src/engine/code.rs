//! Lowering of typed method bodies to a small stack code. Choice points
//! resume in the middle of expressions, so execution state has to be plain
//! data (a pc and an operand stack) that can be copied and restored.

use std::collections::HashMap;
use std::rc::Rc;

use crate::classes::{FieldId, MethodKey, Ty, TypeId};
use crate::frontend::typeck::{CheckedProgram, TExpr, TExprKind, TInit, TStmt, TypedMethod};
use crate::sym::{ArithOp, Rel};

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    PushInt(i64),
    PushBool(bool),
    PushStr(Rc<str>),
    PushNull,
    Load(u16),
    Store(u16),
    /// Bind a local to a fresh logic variable or free object.
    Free(u16, Ty),
    /// Bind a local to the zero value of its type.
    Default(u16, Ty),
    GetField(FieldId),
    /// Stack: object, value.
    PutField(FieldId),
    New(TypeId, usize),
    Arith(ArithOp),
    Neg,
    Not,
    Concat,
    Compare(Rel),
    RefEq { negated: bool },
    StructEq,
    Cast { target: TypeId, valid: bool },
    InstanceOf { target: TypeId, valid: bool },
    Invoke(Rc<MethodKey>, usize),
    JumpIfFalse(usize),
    Jump(usize),
    Return,
    ReturnVoid,
    Fail,
    Println,
    Pop,
}

#[derive(Debug)]
pub struct Code {
    /// `Class.method`, for diagnostics and fingerprints.
    pub name: String,
    pub instrs: Vec<Instr>,
    pub num_locals: usize,
    pub num_params: usize,
    pub local_names: Vec<String>,
}

pub type CodeMap = HashMap<(TypeId, MethodKey), Rc<Code>>;

pub fn compile_program(program: &CheckedProgram) -> CodeMap {
    program
        .methods
        .iter()
        .map(|(key, m)| {
            let name = format!("{}.{}", program.table.name(m.owner), m.key.name);
            (key.clone(), Rc::new(compile_method(name, m)))
        })
        .collect()
}

pub fn compile_method(name: String, method: &TypedMethod) -> Code {
    let mut c = Compiler { instrs: Vec::new() };
    c.block(&method.body);
    if method.ret == Ty::Void {
        c.emit(Instr::ReturnVoid);
    }
    Code {
        name,
        instrs: c.instrs,
        num_locals: method.locals.len(),
        num_params: method.num_params,
        local_names: method.locals.iter().map(|l| l.name.clone()).collect(),
    }
}

struct Compiler {
    instrs: Vec<Instr>,
}

impl Compiler {
    fn emit(&mut self, i: Instr) -> usize {
        self.instrs.push(i);
        self.instrs.len() - 1
    }

    fn patch(&mut self, at: usize) {
        let target = self.instrs.len();
        match &mut self.instrs[at] {
            Instr::JumpIfFalse(t) | Instr::Jump(t) => *t = target,
            other => unreachable!("patching {other:?}"),
        }
    }

    fn block(&mut self, stmts: &[TStmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &TStmt) {
        match s {
            TStmt::Local { slot, ty, init } => match init {
                TInit::Default => {
                    self.emit(Instr::Default(*slot, *ty));
                }
                TInit::Free => {
                    self.emit(Instr::Free(*slot, *ty));
                }
                TInit::Expr(e) => {
                    self.expr(e);
                    self.emit(Instr::Store(*slot));
                }
            },
            TStmt::AssignLocal { slot, value } => {
                self.expr(value);
                self.emit(Instr::Store(*slot));
            }
            TStmt::AssignField {
                target,
                field,
                value,
            } => {
                self.expr(target);
                self.expr(value);
                self.emit(Instr::PutField(*field));
            }
            TStmt::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expr(cond);
                let to_else = self.emit(Instr::JumpIfFalse(0));
                self.block(then_block);
                if else_block.is_empty() {
                    self.patch(to_else);
                } else {
                    let to_end = self.emit(Instr::Jump(0));
                    self.patch(to_else);
                    self.block(else_block);
                    self.patch(to_end);
                }
            }
            TStmt::Return(None) => {
                self.emit(Instr::ReturnVoid);
            }
            TStmt::Return(Some(e)) => {
                self.expr(e);
                self.emit(Instr::Return);
            }
            TStmt::Fail => {
                self.emit(Instr::Fail);
            }
            TStmt::Println(e) => {
                self.expr(e);
                self.emit(Instr::Println);
            }
            TStmt::Expr(e) => {
                self.expr(e);
                if e.ty != Ty::Void {
                    self.emit(Instr::Pop);
                }
            }
        }
    }

    fn binary(&mut self, lhs: &TExpr, rhs: &TExpr, op: Instr) {
        self.expr(lhs);
        self.expr(rhs);
        self.emit(op);
    }

    fn expr(&mut self, e: &TExpr) {
        match &e.kind {
            TExprKind::Int(v) => {
                self.emit(Instr::PushInt(*v));
            }
            TExprKind::Bool(b) => {
                self.emit(Instr::PushBool(*b));
            }
            TExprKind::Str(s) => {
                self.emit(Instr::PushStr(Rc::from(s.as_str())));
            }
            TExprKind::Null => {
                self.emit(Instr::PushNull);
            }
            TExprKind::This => {
                self.emit(Instr::Load(0));
            }
            TExprKind::Local(slot) => {
                self.emit(Instr::Load(*slot));
            }
            TExprKind::Field { target, field } => {
                self.expr(target);
                self.emit(Instr::GetField(*field));
            }
            TExprKind::Call {
                target,
                method,
                args,
            } => {
                self.expr(target);
                for a in args {
                    self.expr(a);
                }
                self.emit(Instr::Invoke(Rc::new(method.clone()), args.len()));
            }
            TExprKind::New { class, args } => {
                for a in args {
                    self.expr(a);
                }
                self.emit(Instr::New(*class, args.len()));
            }
            TExprKind::Neg(inner) => {
                self.expr(inner);
                self.emit(Instr::Neg);
            }
            TExprKind::Not(inner) => {
                self.expr(inner);
                self.emit(Instr::Not);
            }
            TExprKind::Arith { op, lhs, rhs } => self.binary(lhs, rhs, Instr::Arith(*op)),
            TExprKind::Concat { lhs, rhs } => self.binary(lhs, rhs, Instr::Concat),
            TExprKind::Compare { rel, lhs, rhs } => self.binary(lhs, rhs, Instr::Compare(*rel)),
            TExprKind::RefEq { negated, lhs, rhs } => {
                self.binary(lhs, rhs, Instr::RefEq { negated: *negated })
            }
            TExprKind::StructEq { lhs, rhs } => self.binary(lhs, rhs, Instr::StructEq),
            TExprKind::Cast {
                target,
                statically_valid,
                expr,
            } => {
                self.expr(expr);
                self.emit(Instr::Cast {
                    target: *target,
                    valid: *statically_valid,
                });
            }
            TExprKind::InstanceOf {
                target,
                statically_valid,
                expr,
            } => {
                self.expr(expr);
                self.emit(Instr::InstanceOf {
                    target: *target,
                    valid: *statically_valid,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile;

    #[test]
    fn if_else_jumps() {
        let p = compile(
            "class M { int f(int x) { if (x > 0) { return 1; } else { return 2; } } }",
        )
        .unwrap();
        let code = compile_program(&p);
        let m = p.table.lookup("M").unwrap();
        let f = &code[&(m, MethodKey::new("f", 1))];
        assert_eq!(
            f.instrs,
            vec![
                Instr::Load(1),
                Instr::PushInt(0),
                Instr::Compare(Rel::Gt),
                Instr::JumpIfFalse(7),
                Instr::PushInt(1),
                Instr::Return,
                Instr::Jump(9),
                Instr::PushInt(2),
                Instr::Return,
            ]
        );
        assert_eq!(f.name, "M.f");
    }

    #[test]
    fn void_methods_end_with_return() {
        let p = compile("class M { void f() { int x free; println(x); } }").unwrap();
        let code = compile_program(&p);
        let m = p.table.lookup("M").unwrap();
        let f = &code[&(m, MethodKey::new("f", 0))];
        assert_eq!(f.instrs.last(), Some(&Instr::ReturnVoid));
        assert_eq!(f.instrs[0], Instr::Free(1, Ty::Int));
        assert_eq!(f.local_names[1], "x");
    }
}
