//! Pretty-printer. Output reparses to a structurally identical tree.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for (i, class) in program.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_class(&mut out, class);
    }
    out
}

fn print_class(out: &mut String, class: &ClassDecl) {
    if class.is_abstract {
        out.push_str("abstract ");
    }
    out.push_str(match class.kind {
        ClassKind::Class => "class ",
        ClassKind::Interface => "interface ",
    });
    out.push_str(&class.name);
    if let Some(parent) = &class.extends {
        let _ = write!(out, " extends {parent}");
    }
    if !class.implements.is_empty() {
        let _ = write!(out, " implements {}", class.implements.join(", "));
    }
    out.push_str(" {\n");
    for member in &class.members {
        match member {
            Member::Field(f) => {
                let _ = writeln!(out, "    {} {};", f.ty, f.name);
            }
            Member::Method(m) => {
                out.push_str("    ");
                if m.is_abstract {
                    out.push_str("abstract ");
                }
                let params: Vec<String> =
                    m.params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
                let _ = write!(out, "{} {}({})", m.ret, m.name, params.join(", "));
                match &m.body {
                    None => out.push_str(";\n"),
                    Some(body) => {
                        out.push(' ');
                        print_block(out, body, 1);
                        out.push('\n');
                    }
                }
            }
        }
    }
    out.push_str("}\n");
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_block(out: &mut String, block: &Block, level: usize) {
    out.push_str("{\n");
    for stmt in &block.stmts {
        print_stmt(out, stmt, level + 1);
    }
    indent(out, level);
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, level: usize) {
    indent(out, level);
    match &stmt.kind {
        StmtKind::Local { ty, name, init } => {
            let _ = write!(out, "{ty} {name}");
            match init {
                LocalInit::None => {}
                LocalInit::Free => out.push_str(" free"),
                LocalInit::Expr(e) => {
                    let _ = write!(out, " = {}", print_expr(e));
                }
            }
            out.push_str(";\n");
        }
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{} = {};", print_expr(target), print_expr(value));
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = write!(out, "if ({}) ", print_expr(cond));
            print_block(out, then_block, level);
            if let Some(else_block) = else_block {
                out.push_str(" else ");
                print_block(out, else_block, level);
            }
            out.push('\n');
        }
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "return {};", print_expr(e));
        }
        StmtKind::Fail => out.push_str("fail();\n"),
        StmtKind::Println(e) => {
            let _ = writeln!(out, "println({});", print_expr(e));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{};", print_expr(e));
        }
    }
}

const PREC_UNARY: u8 = 5;
const PREC_ATOM: u8 = 6;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::InstanceOf { .. } => 2,
        ExprKind::Unary { .. } | ExprKind::Cast { .. } => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

fn wrap(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", print_expr(e))
    } else {
        print_expr(e)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn print_args(args: &[Expr]) -> String {
    args.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => escape(s),
        ExprKind::Null => "null".into(),
        ExprKind::This => "this".into(),
        ExprKind::Var(name) => name.clone(),
        ExprKind::Field { target, name } => {
            format!("{}.{}", wrap(target, precedence(target) < PREC_ATOM), name)
        }
        ExprKind::Call { target, name, args } => match target {
            None => format!("{name}({})", print_args(args)),
            Some(t) => format!(
                "{}.{name}({})",
                wrap(t, precedence(t) < PREC_ATOM),
                print_args(args)
            ),
        },
        ExprKind::New { class, args } => format!("new {class}({})", print_args(args)),
        ExprKind::Unary { op, expr } => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "!",
            };
            format!("{sym}{}", wrap(expr, precedence(expr) < PREC_UNARY))
        }
        ExprKind::Cast { ty, expr } => {
            // `(T) -x` would reparse as a subtraction
            let parens = precedence(expr) < PREC_UNARY
                || matches!(expr.kind, ExprKind::Unary { op: UnaryOp::Neg, .. });
            format!("({ty}) {}", wrap(expr, parens))
        }
        ExprKind::InstanceOf { expr, ty } => {
            format!("{} instanceof {ty}", wrap(expr, precedence(expr) < 2))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            format!(
                "{} {} {}",
                wrap(lhs, precedence(lhs) < p),
                op.symbol(),
                wrap(rhs, precedence(rhs) <= p)
            )
        }
    }
}
