//! Shared test support: corpus access, random generators and independent
//! oracles (a brute-force constraint checker, a concrete interpreter and a
//! structural-equality checker).
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use minimuli::classes::{ClassTable, MethodImpl, MethodKey, Ty, TypeId};
use minimuli::constraints::{Assignment, Constraint, SimpleContext};
use minimuli::frontend::ast::{BinOp, Expr, ExprKind, Program, StmtKind};
use minimuli::frontend::typeck::{TExpr, TExprKind, TInit, TStmt};
use minimuli::frontend::CheckedProgram;
use minimuli::sym::{Addr, ArithOp, Heap, Rel, SymInt, Value, VarId};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------- corpus

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// `(file name, source)` for every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "muli"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub fn corpus_file(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap()
}

/// Parameterless source methods of the driver classes, as `Class.method`.
pub fn entries(program: &CheckedProgram) -> Vec<String> {
    let mut out: Vec<String> = program
        .methods
        .values()
        .filter(|m| m.num_params == 0)
        .filter(|m| matches!(program.table.name(m.owner), "Main" | "Demo"))
        .map(|m| format!("{}.{}", program.table.name(m.owner), m.key.name))
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------- random hierarchies

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Interface,
    Abstract,
    Concrete,
}

#[derive(Debug, Clone)]
pub struct GenType {
    pub name: String,
    pub kind: Kind,
    pub extends: Option<usize>,
    pub implements: Vec<usize>,
    pub declares_m: bool,
}

/// A random hierarchy of `T0..Tn` where every class path has a body for
/// `int m()`, rendered as guest source.
pub fn random_hierarchy(rng: &mut impl Rng, max_types: usize) -> (Vec<GenType>, String) {
    let n = rng.gen_range(1..=max_types);
    let mut types: Vec<GenType> = Vec::new();
    for i in 0..n {
        let roll = rng.gen_range(0..10);
        let kind = match roll {
            0..=1 => Kind::Interface,
            2..=3 => Kind::Abstract,
            _ => Kind::Concrete,
        };
        let interfaces: Vec<usize> = (0..i).filter(|&j| types[j].kind == Kind::Interface).collect();
        let classes: Vec<usize> = (0..i).filter(|&j| types[j].kind != Kind::Interface).collect();
        let mut implements: Vec<usize> = interfaces
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.4))
            .collect();
        // the grammar gives an interface at most one super-interface
        implements.truncate(if kind == Kind::Interface { 1 } else { 2 });
        let extends = if kind != Kind::Interface && !classes.is_empty() && rng.gen_bool(0.7) {
            Some(*classes.choose(rng).unwrap())
        } else {
            None
        };
        let declares_m = match kind {
            Kind::Interface => rng.gen_bool(0.5),
            _ if extends.is_none() => true,
            _ => rng.gen_bool(0.5),
        };
        types.push(GenType {
            name: format!("T{i}"),
            kind,
            extends,
            implements,
            declares_m,
        });
    }
    let mut src = String::new();
    for (i, t) in types.iter().enumerate() {
        match t.kind {
            Kind::Interface => src.push_str("interface "),
            Kind::Abstract => src.push_str("abstract class "),
            Kind::Concrete => src.push_str("class "),
        }
        src.push_str(&t.name);
        if let Some(p) = t.extends {
            let _ = write!(src, " extends {}", types[p].name);
        }
        if !t.implements.is_empty() {
            let names: Vec<&str> = t.implements.iter().map(|j| types[*j].name.as_str()).collect();
            let kw = if t.kind == Kind::Interface { "extends" } else { "implements" };
            let _ = write!(src, " {kw} {}", names.join(", "));
        }
        src.push_str(" {\n");
        if t.declares_m {
            if t.kind == Kind::Interface {
                src.push_str("    int m();\n");
            } else {
                let _ = writeln!(src, "    int m() {{ return {i}; }}");
            }
        }
        src.push_str("}\n");
    }
    (types, src)
}

// ------------------------------------------------ random constraint stores

pub struct RandomStore {
    pub constraints: Vec<Constraint>,
    pub ctx: SimpleContext,
    pub objects: Vec<Addr>,
    pub vars: Vec<VarId>,
}

pub fn var(i: u32) -> SymInt {
    SymInt::Var {
        id: VarId(i),
        name: format!("_v{i}").into(),
    }
}

fn random_term(rng: &mut impl Rng, vars: u32, depth: u32) -> SymInt {
    if depth == 0 || rng.gen_bool(0.5) {
        if vars > 0 && rng.gen_bool(0.7) {
            var(rng.gen_range(0..vars))
        } else {
            SymInt::Const(rng.gen_range(-6..=6))
        }
    } else {
        let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul].choose(rng).unwrap();
        SymInt::apply(op, random_term(rng, vars, depth - 1), random_term(rng, vars, depth - 1))
    }
}

const RELS: [Rel; 6] = [Rel::Eq, Rel::Ne, Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge];

pub fn random_store(
    rng: &mut impl Rng,
    max_objects: u32,
    max_types: u32,
    max_vars: u32,
    domain: (i128, i128),
) -> RandomStore {
    let n_types = rng.gen_range(1..=max_types);
    let n_objects = rng.gen_range(0..=max_objects);
    let n_vars = rng.gen_range(0..=max_vars);
    let universe: BTreeSet<TypeId> = (1..=n_types).map(TypeId).collect();
    let mut concrete = BTreeMap::new();
    for o in 0..n_objects {
        if rng.gen_bool(0.25) {
            concrete.insert(Addr(o), TypeId(rng.gen_range(1..=n_types)));
        }
    }
    let mut constraints = Vec::new();
    for _ in 0..rng.gen_range(0..=6) {
        let pick = rng.gen_range(0..10);
        if n_objects > 0 && pick < 3 {
            let allowed = universe.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            constraints.push(Constraint::TypeSet {
                obj: Addr(rng.gen_range(0..n_objects)),
                allowed,
            });
        } else if n_objects > 1 && pick < 5 {
            let a = rng.gen_range(0..n_objects);
            let mut b = rng.gen_range(0..n_objects);
            if a == b {
                b = (b + 1) % n_objects;
            }
            constraints.push(Constraint::TypeEq {
                a: Addr(a),
                b: Addr(b),
                negated: rng.gen_bool(0.4),
            });
        } else {
            constraints.push(Constraint::Arith {
                rel: *RELS.choose(rng).unwrap(),
                lhs: random_term(rng, n_vars, 2),
                rhs: random_term(rng, n_vars, 1),
            });
        }
    }
    RandomStore {
        constraints,
        ctx: SimpleContext {
            domain,
            var_domains: BTreeMap::new(),
            concrete,
            universe,
        },
        objects: (0..n_objects).map(Addr).collect(),
        vars: (0..n_vars).map(VarId).collect(),
    }
}

/// Straightforward recursive evaluation, kept apart from the library's.
pub fn eval_term(t: &SymInt, ints: &BTreeMap<VarId, i128>) -> Option<i128> {
    Some(match t {
        SymInt::Const(c) => *c,
        SymInt::Var { id, .. } => *ints.get(id)?,
        SymInt::Bin(op, a, b) => {
            let (x, y) = (eval_term(a, ints)?, eval_term(b, ints)?);
            match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
            }
        }
    })
}

fn rel_holds(rel: Rel, a: i128, b: i128) -> bool {
    match rel {
        Rel::Eq => a == b,
        Rel::Ne => a != b,
        Rel::Lt => a < b,
        Rel::Le => a <= b,
        Rel::Gt => a > b,
        Rel::Ge => a >= b,
    }
}

pub fn satisfied(c: &Constraint, a: &Assignment) -> bool {
    match c {
        Constraint::Arith { rel, lhs, rhs } => {
            match (eval_term(lhs, &a.ints), eval_term(rhs, &a.ints)) {
                (Some(x), Some(y)) => rel_holds(*rel, x, y),
                _ => false,
            }
        }
        Constraint::TypeSet { obj, allowed } => allowed.contains(&a.types[obj]),
        Constraint::TypeEq { a: x, b: y, negated } => (a.types[x] == a.types[y]) != *negated,
    }
}

/// Every complete assignment over the store's objects and variables,
/// visited depth first; stops as soon as `visit` returns true.
pub fn any_assignment(s: &RandomStore, visit: &mut dyn FnMut(&Assignment) -> bool) -> bool {
    fn go(
        s: &RandomStore,
        idx: usize,
        a: &mut Assignment,
        visit: &mut dyn FnMut(&Assignment) -> bool,
    ) -> bool {
        if idx < s.objects.len() {
            let o = s.objects[idx];
            let choices: Vec<TypeId> = match s.ctx.concrete.get(&o) {
                Some(t) => vec![*t],
                None => s.ctx.universe.iter().copied().collect(),
            };
            for t in choices {
                a.types.insert(o, t);
                if go(s, idx + 1, a, visit) {
                    return true;
                }
            }
            a.types.remove(&o);
            return false;
        }
        let k = idx - s.objects.len();
        if k < s.vars.len() {
            let v = s.vars[k];
            for x in s.ctx.domain.0..=s.ctx.domain.1 {
                a.ints.insert(v, x);
                if go(s, idx + 1, a, visit) {
                    return true;
                }
            }
            a.ints.remove(&v);
            return false;
        }
        visit(a)
    }
    go(s, 0, &mut Assignment::default(), visit)
}

/// Exhaustive satisfiability. Type constraints never mention integers and
/// arithmetic never mentions objects, so the two halves are searched
/// separately.
pub fn brute_force_consistent(s: &RandomStore) -> bool {
    let (arith, typed): (Vec<Constraint>, Vec<Constraint>) = s
        .constraints
        .iter()
        .cloned()
        .partition(|c| matches!(c, Constraint::Arith { .. }));
    let types_only = RandomStore {
        constraints: typed,
        ctx: s.ctx.clone(),
        objects: s.objects.clone(),
        vars: vec![],
    };
    let ints_only = RandomStore {
        constraints: arith,
        ctx: s.ctx.clone(),
        objects: vec![],
        vars: s.vars.clone(),
    };
    [types_only, ints_only].iter().all(|part| {
        any_assignment(part, &mut |a| part.constraints.iter().all(|c| satisfied(c, a)))
    })
}

/// All complete assignments satisfying the store, in enumeration order.
pub fn brute_force_solutions(s: &RandomStore) -> BTreeSet<Assignment> {
    let mut out = BTreeSet::new();
    any_assignment(s, &mut |a| {
        if s.constraints.iter().all(|c| satisfied(c, a)) {
            out.insert(a.clone());
        }
        false
    });
    out
}

// --------------------------------------------------------- operand swap

fn swap_expr(e: &mut Expr) {
    match &mut e.kind {
        ExprKind::Binary { op, lhs, rhs } => {
            swap_expr(lhs);
            swap_expr(rhs);
            if *op == BinOp::StructEq {
                std::mem::swap(lhs, rhs);
            }
        }
        ExprKind::Field { target, .. } => swap_expr(target),
        ExprKind::Call { target, args, .. } => {
            if let Some(t) = target {
                swap_expr(t);
            }
            args.iter_mut().for_each(swap_expr);
        }
        ExprKind::New { args, .. } => args.iter_mut().for_each(swap_expr),
        ExprKind::Unary { expr, .. }
        | ExprKind::Cast { expr, .. }
        | ExprKind::InstanceOf { expr, .. } => swap_expr(expr),
        _ => {}
    }
}

fn swap_block(stmts: &mut [minimuli::frontend::ast::Stmt]) {
    for s in stmts {
        match &mut s.kind {
            StmtKind::Local { init, .. } => {
                if let minimuli::frontend::ast::LocalInit::Expr(e) = init {
                    swap_expr(e);
                }
            }
            StmtKind::Assign { target, value } => {
                swap_expr(target);
                swap_expr(value);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                swap_expr(cond);
                swap_block(&mut then_block.stmts);
                if let Some(b) = else_block {
                    swap_block(&mut b.stmts);
                }
            }
            StmtKind::Return(Some(e)) | StmtKind::Println(e) | StmtKind::Expr(e) => swap_expr(e),
            StmtKind::Return(None) | StmtKind::Fail => {}
        }
    }
}

/// Swap the operands of every `#=` in the program.
pub fn swap_struct_eq(program: &mut Program) {
    for class in &mut program.classes {
        for member in &mut class.members {
            if let minimuli::frontend::ast::Member::Method(m) = member {
                if let Some(body) = &mut m.body {
                    swap_block(&mut body.stmts);
                }
            }
        }
    }
}

// ------------------------------------------- structural equality checker

/// Decide structural equality of two references in a labeled heap: same
/// concrete type and pairwise equal fields, recursing through references.
/// `None` when some value is not determined by the assignment.
pub fn structurally_equal(
    table: &ClassTable,
    heap: &Heap,
    a: &Assignment,
    x: Option<Addr>,
    y: Option<Addr>,
) -> Option<bool> {
    let mut assumed = BTreeSet::new();
    eq_refs(table, heap, a, x, y, &mut assumed)
}

fn type_of(heap: &Heap, a: &Assignment, addr: Addr) -> Option<TypeId> {
    heap.get(addr).concrete.or_else(|| a.types.get(&addr).copied())
}

fn eq_refs(
    table: &ClassTable,
    heap: &Heap,
    a: &Assignment,
    x: Option<Addr>,
    y: Option<Addr>,
    assumed: &mut BTreeSet<(Addr, Addr)>,
) -> Option<bool> {
    let (x, y) = match (x, y) {
        (None, None) => return Some(true),
        (Some(x), Some(y)) => (x, y),
        _ => return Some(false),
    };
    if x == y || !assumed.insert((x, y)) {
        return Some(true);
    }
    let (tx, ty) = (type_of(heap, a, x)?, type_of(heap, a, y)?);
    if tx != ty {
        return Some(false);
    }
    for f in table.all_fields(tx) {
        let vx = heap.read_field(x, f)?;
        let vy = heap.read_field(y, f)?;
        let same = match (vx, vy) {
            (Value::Int(i), Value::Int(j)) => eval_term(i, &a.ints)? == eval_term(j, &a.ints)?,
            (Value::Bool(p), Value::Bool(q)) => {
                let env = |v: VarId| a.ints.get(&v).copied();
                p.eval(&env).ok()? == q.eval(&env).ok()?
            }
            (Value::Ref(p), Value::Ref(q)) => eq_refs(table, heap, a, Some(*p), Some(*q), assumed)?,
            (Value::Ref(p), Value::Null) => eq_refs(table, heap, a, Some(*p), None, assumed)?,
            (Value::Null, Value::Ref(q)) => eq_refs(table, heap, a, None, Some(*q), assumed)?,
            (Value::Null, Value::Null) => true,
            (Value::Str(p), Value::Str(q)) => p == q,
            _ => false,
        };
        if !same {
            return Some(false);
        }
    }
    Some(true)
}

// --------------------------------------------------- random programs

/// A generated program with the names of its free variables.
#[derive(Debug, Clone)]
pub struct GenProgram {
    pub source: String,
    pub free_ints: Vec<&'static str>,
    /// Static type of the free object `o`, if declared.
    pub free_object: Option<String>,
    /// Whether the root class declares the int field `f`.
    pub has_field: bool,
    /// Names of the instantiable generated types.
    pub concrete: Vec<String>,
}

struct ProgGen<'r, R: Rng> {
    rng: &'r mut R,
    ints: Vec<String>,
    has_obj: bool,
    has_field: bool,
    types: Vec<String>,
    concrete: Vec<String>,
    fresh: usize,
}

impl<R: Rng> ProgGen<'_, R> {
    fn k(&mut self) -> i32 {
        self.rng.gen_range(0..=3)
    }

    fn iexpr(&mut self, depth: u32) -> String {
        let pick = self.rng.gen_range(0..10);
        if depth == 0 || pick < 4 {
            if !self.ints.is_empty() && self.rng.gen_bool(0.7) {
                return self.ints.choose(self.rng).unwrap().clone();
            }
            if self.has_obj && self.has_field && self.rng.gen_bool(0.3) {
                return "o.f".into();
            }
            return self.k().to_string();
        }
        if self.has_obj && pick < 6 {
            let arg = self.iexpr(depth - 1);
            return format!("o.m({arg})");
        }
        let op = ["+", "-", "*"].choose(self.rng).unwrap();
        let l = self.iexpr(depth - 1);
        let r = self.iexpr(depth - 1);
        format!("({l} {op} {r})")
    }

    fn cond(&mut self) -> String {
        if self.has_obj && self.rng.gen_bool(0.25) {
            let t = self.types.choose(self.rng).unwrap().clone();
            return format!("o instanceof {t}");
        }
        if self.has_obj && self.has_field && !self.concrete.is_empty() && self.rng.gen_bool(0.4) {
            let t = self.concrete.choose(self.rng).unwrap().clone();
            let k = self.k();
            return format!("o #= new {t}({k})");
        }
        let rel = ["==", "!=", "<", "<=", ">", ">="].choose(self.rng).unwrap();
        let l = self.iexpr(2);
        let r = self.iexpr(1);
        format!("{l} {rel} {r}")
    }

    fn stmt(&mut self, out: &mut String) {
        match self.rng.gen_range(0..10) {
            0..=2 => {
                let c = self.cond();
                let e = self.iexpr(2);
                let _ = writeln!(out, "        if ({c}) {{ return {e}; }}");
            }
            3 => {
                let c = self.cond();
                let _ = writeln!(out, "        if ({c}) {{ fail(); }}");
            }
            4..=5 => {
                let e = self.iexpr(2);
                let _ = writeln!(out, "        println({e});");
            }
            6..=7 => {
                let e = self.iexpr(2);
                let name = format!("t{}", self.fresh);
                self.fresh += 1;
                let _ = writeln!(out, "        int {name} = {e};");
                self.ints.push(name);
            }
            _ if self.has_obj => {
                let t = self.types.choose(self.rng).unwrap().clone();
                let name = format!("c{}", self.fresh);
                self.fresh += 1;
                let k = self.k();
                let _ = writeln!(out, "        {t} {name} = ({t}) o;");
                let _ = writeln!(out, "        println({name}.m({k}));");
            }
            _ => {
                let c = self.cond();
                let a = self.iexpr(1);
                let b = self.iexpr(1);
                let _ = writeln!(
                    out,
                    "        if ({c}) {{ println({a}); }} else {{ println({b}); }}"
                );
            }
        }
    }
}

fn method_body(rng: &mut impl Rng, idx: usize, has_field: bool) -> String {
    let k = rng.gen_range(0..=3);
    let choices = if has_field { 6 } else { 4 };
    match rng.gen_range(0..choices) {
        0 => format!("return a + {k};"),
        1 => format!("return a * {};", idx + 1),
        2 => format!("if (a > {k}) {{ return a; }} return {idx};"),
        3 => format!("if (a == {k}) {{ fail(); }} return a - {idx};"),
        4 => format!("return f + a + {idx};"),
        _ => format!("if (f > a) {{ return f; }} return a - {k};"),
    }
}

/// A small random program over a hierarchy of at most `max_types` types
/// with up to two free ints (`x`, `y`) and at most one free object `o`.
pub fn random_program(rng: &mut impl Rng, max_types: usize) -> GenProgram {
    // root R: interface, abstract class or class; every concrete type
    // reaches a body for `int m(int a)`
    let root_kind = rng.gen_range(0..3);
    let has_field = root_kind != 0;
    let mut src = String::new();
    let mut types = vec!["R".to_string()];
    let mut concrete = Vec::new();
    // whether a type (by index) provides a body for m along its class chain
    let mut has_body = vec![false];
    let mut is_class = vec![root_kind != 0];
    match root_kind {
        0 => src.push_str("interface R {\n    int m(int a);\n}\n"),
        1 => {
            src.push_str("abstract class R {\n    int f;\n    abstract int m(int a);\n}\n");
        }
        _ => {
            let body = method_body(rng, 0, true);
            let _ = writeln!(src, "class R {{\n    int f;\n    int m(int a) {{ {body} }}\n}}");
            has_body[0] = true;
            concrete.push("R".to_string());
        }
    }
    let n = rng.gen_range(1..=max_types.max(1));
    for i in 1..n {
        let name = format!("S{i}");
        let classes: Vec<usize> = (0..i).filter(|&j| is_class[j]).collect();
        // under a class root every class descends from R
        let parent = if root_kind != 0 || rng.gen_bool(0.8) {
            classes.choose(rng).copied()
        } else {
            None
        };
        let header = match parent {
            Some(p) => format!("class {name} extends {}", types[p]),
            None => format!("class {name} implements R"),
        };
        let inherited = parent.is_some_and(|p| has_body[p]);
        let own = !inherited || rng.gen_bool(0.5);
        let _ = writeln!(src, "{header} {{");
        if own {
            let body = method_body(rng, i, has_field);
            let _ = writeln!(src, "    int m(int a) {{ {body} }}");
        }
        src.push_str("}\n");
        types.push(name.clone());
        concrete.push(name);
        has_body.push(true);
        is_class.push(true);
    }
    if concrete.is_empty() {
        // an abstract or interface root needs at least one implementation
        let body = method_body(rng, 9, false);
        let header = if root_kind == 0 { "class S9 implements R" } else { "class S9 extends R" };
        let _ = writeln!(src, "{header} {{\n    int m(int a) {{ {body} }}\n}}");
        types.push("S9".into());
        concrete.push("S9".into());
    }

    let mut free_ints = Vec::new();
    if rng.gen_bool(0.8) {
        free_ints.push("x");
    }
    if rng.gen_bool(0.5) {
        free_ints.push("y");
    }
    let has_obj = rng.gen_bool(0.6);
    let mut body = String::new();
    for v in &free_ints {
        let _ = writeln!(body, "        int {v} free;");
    }
    if has_obj {
        body.push_str("        R o free;\n");
    }
    let mut g = ProgGen {
        rng,
        ints: free_ints.iter().map(|s| s.to_string()).collect(),
        has_obj,
        has_field,
        types: types.clone(),
        concrete: concrete.clone(),
        fresh: 0,
    };
    for _ in 0..g.rng.gen_range(1..=4) {
        g.stmt(&mut body);
    }
    let last = g.iexpr(2);
    let _ = writeln!(body, "        return {last};");
    let _ = write!(src, "class Main {{\n    int run() {{\n{body}    }}\n}}\n");
    GenProgram {
        source: src,
        free_ints,
        free_object: has_obj.then(|| "R".to_string()),
        has_field,
        concrete,
    }
}

// ------------------------------------------------- concrete interpreter

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CVal {
    Int(i128),
    Bool(bool),
    Ref(usize),
    Null,
    Str(String),
    Void,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CResult {
    Return(String),
    Exception(String),
    Fail,
}

enum Abrupt {
    Return(CVal),
    Throw(&'static str),
    Fail,
}

struct CObj {
    ty: TypeId,
    fields: HashMap<minimuli::classes::FieldId, CVal>,
}

/// Values for the free declarations of one concrete run.
#[derive(Debug, Clone, Default)]
pub struct FreeValues {
    pub ints: HashMap<String, i128>,
    pub object_type: Option<TypeId>,
    /// Int fields of the free object, by field name.
    pub fields: HashMap<String, i128>,
}

/// Plain interpreter over the typed tree: every free declaration takes its
/// value from `FreeValues`, and calls dispatch by walking the superclass
/// chain of the receiver's concrete type.
pub struct Concrete<'p> {
    prog: &'p CheckedProgram,
    heap: Vec<CObj>,
    free: FreeValues,
    pub output: Vec<String>,
}

impl<'p> Concrete<'p> {
    pub fn run(prog: &'p CheckedProgram, entry_class: &str, entry: &str, free: FreeValues) -> (CResult, Vec<String>) {
        let mut c = Concrete {
            prog,
            heap: Vec::new(),
            free,
            output: Vec::new(),
        };
        let t = prog.table.lookup(entry_class).unwrap();
        let this = c.alloc_default(t);
        let result = match c.invoke(&MethodKey::new(entry, 0), CVal::Ref(this), vec![]) {
            Ok(v) => CResult::Return(c.show(&v)),
            Err(Abrupt::Throw(e)) => CResult::Exception(e.to_string()),
            Err(Abrupt::Fail) => CResult::Fail,
            Err(Abrupt::Return(_)) => unreachable!(),
        };
        (result, c.output)
    }

    fn alloc_default(&mut self, t: TypeId) -> usize {
        let fields = self
            .prog
            .table
            .all_fields(t)
            .into_iter()
            .map(|f| {
                let v = match self.prog.table.field(f).ty {
                    Ty::Int => CVal::Int(0),
                    Ty::Bool => CVal::Bool(false),
                    _ => CVal::Null,
                };
                (f, v)
            })
            .collect();
        self.heap.push(CObj { ty: t, fields });
        self.heap.len() - 1
    }

    fn show(&self, v: &CVal) -> String {
        match v {
            CVal::Int(i) => i.to_string(),
            CVal::Bool(b) => b.to_string(),
            CVal::Ref(a) => format!("{}@{a}", self.prog.table.name(self.heap[*a].ty)),
            CVal::Null => "null".into(),
            CVal::Str(s) => s.clone(),
            CVal::Void => "void".into(),
        }
    }

    /// The class whose body runs: nearest class on the superclass chain
    /// that has a source body or a builtin.
    fn find_body(&self, t: TypeId, key: &MethodKey) -> TypeId {
        let mut cur = Some(t);
        while let Some(c) = cur {
            let def = self.prog.table.class(c);
            if def.methods.iter().any(|m| &m.key == key && m.imp != MethodImpl::Abstract) {
                return c;
            }
            cur = def.superclass;
        }
        panic!("no body for {key}")
    }

    fn invoke(&mut self, key: &MethodKey, this: CVal, args: Vec<CVal>) -> Result<CVal, Abrupt> {
        let CVal::Ref(addr) = this else {
            return Err(Abrupt::Throw("NullPointerException"));
        };
        let owner = self.find_body(self.heap[addr].ty, key);
        let sig = self.prog.table.class(owner).method(key).unwrap();
        match sig.imp {
            MethodImpl::BuiltinEquals => {
                return Ok(CVal::Bool(matches!(args[0], CVal::Ref(b) if b == addr)));
            }
            MethodImpl::BuiltinToString => panic!("builtin toString is not modelled"),
            _ => {}
        }
        let m = self.prog.method(owner, key).unwrap();
        let mut locals = vec![CVal::Void; m.locals.len().max(1)];
        locals[0] = this;
        for (i, a) in args.into_iter().enumerate() {
            locals[i + 1] = a;
        }
        match self.block(&m.body, &mut locals, &m.locals) {
            Ok(()) => Ok(CVal::Void),
            Err(Abrupt::Return(v)) => Ok(v),
            Err(e) => Err(e),
        }
    }

    fn block(
        &mut self,
        stmts: &[TStmt],
        locals: &mut Vec<CVal>,
        info: &[minimuli::frontend::typeck::LocalInfo],
    ) -> Result<(), Abrupt> {
        for s in stmts {
            match s {
                TStmt::Local { slot, ty, init } => {
                    let v = match init {
                        TInit::Default => match ty {
                            Ty::Int => CVal::Int(0),
                            Ty::Bool => CVal::Bool(false),
                            _ => CVal::Null,
                        },
                        TInit::Expr(e) => self.expr(e, locals)?,
                        TInit::Free => {
                            let name = &info[*slot as usize].name;
                            match ty {
                                Ty::Int => CVal::Int(self.free.ints[name]),
                                Ty::Ref(_) => {
                                    let t = self.free.object_type.expect("object type chosen");
                                    let a = self.alloc_default(t);
                                    for f in self.prog.table.all_fields(t) {
                                        let def = self.prog.table.field(f);
                                        if let Some(v) = self.free.fields.get(&def.name) {
                                            self.heap[a].fields.insert(f, CVal::Int(*v));
                                        }
                                    }
                                    CVal::Ref(a)
                                }
                                other => panic!("free {other:?} not modelled"),
                            }
                        }
                    };
                    locals[*slot as usize] = v;
                }
                TStmt::AssignLocal { slot, value } => {
                    let v = self.expr(value, locals)?;
                    locals[*slot as usize] = v;
                }
                TStmt::AssignField { target, field, value } => {
                    let t = self.expr(target, locals)?;
                    let v = self.expr(value, locals)?;
                    let CVal::Ref(a) = t else {
                        return Err(Abrupt::Throw("NullPointerException"));
                    };
                    self.heap[a].fields.insert(*field, v);
                }
                TStmt::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    let CVal::Bool(b) = self.expr(cond, locals)? else { unreachable!() };
                    if b {
                        self.block(then_block, locals, info)?;
                    } else {
                        self.block(else_block, locals, info)?;
                    }
                }
                TStmt::Return(None) => return Err(Abrupt::Return(CVal::Void)),
                TStmt::Return(Some(e)) => {
                    let v = self.expr(e, locals)?;
                    return Err(Abrupt::Return(v));
                }
                TStmt::Fail => return Err(Abrupt::Fail),
                TStmt::Println(e) => {
                    let v = self.expr(e, locals)?;
                    let line = self.show(&v);
                    self.output.push(line);
                }
                TStmt::Expr(e) => {
                    self.expr(e, locals)?;
                }
            }
        }
        Ok(())
    }

    fn int(&mut self, e: &TExpr, locals: &mut Vec<CVal>) -> Result<i128, Abrupt> {
        match self.expr(e, locals)? {
            CVal::Int(i) => Ok(i),
            other => panic!("expected int, got {other:?}"),
        }
    }

    fn struct_eq(&self, a: &CVal, b: &CVal, seen: &mut BTreeSet<(usize, usize)>) -> bool {
        match (a, b) {
            (CVal::Ref(x), CVal::Ref(y)) => {
                if x == y || !seen.insert((*x, *y)) {
                    return true;
                }
                let (ox, oy) = (&self.heap[*x], &self.heap[*y]);
                ox.ty == oy.ty
                    && self
                        .prog
                        .table
                        .all_fields(ox.ty)
                        .iter()
                        .all(|f| self.struct_eq(&ox.fields[f], &oy.fields[f], seen))
            }
            (x, y) => x == y,
        }
    }

    fn expr(&mut self, e: &TExpr, locals: &mut Vec<CVal>) -> Result<CVal, Abrupt> {
        Ok(match &e.kind {
            TExprKind::Int(v) => CVal::Int(*v as i128),
            TExprKind::Bool(b) => CVal::Bool(*b),
            TExprKind::Str(s) => CVal::Str(s.clone()),
            TExprKind::Null => CVal::Null,
            TExprKind::This => locals[0].clone(),
            TExprKind::Local(s) => locals[*s as usize].clone(),
            TExprKind::Field { target, field } => match self.expr(target, locals)? {
                CVal::Ref(a) => self.heap[a].fields[field].clone(),
                _ => return Err(Abrupt::Throw("NullPointerException")),
            },
            TExprKind::Call { target, method, args } => {
                let t = self.expr(target, locals)?;
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.expr(a, locals)?);
                }
                self.invoke(method, t, vals)?
            }
            TExprKind::New { class, args } => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.expr(a, locals)?);
                }
                let fields = self.prog.table.all_fields(*class).into_iter().zip(vals).collect();
                self.heap.push(CObj { ty: *class, fields });
                CVal::Ref(self.heap.len() - 1)
            }
            TExprKind::Neg(x) => CVal::Int(-self.int(x, locals)?),
            TExprKind::Not(x) => match self.expr(x, locals)? {
                CVal::Bool(b) => CVal::Bool(!b),
                _ => unreachable!(),
            },
            TExprKind::Arith { op, lhs, rhs } => {
                let (a, b) = (self.int(lhs, locals)?, self.int(rhs, locals)?);
                CVal::Int(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                })
            }
            TExprKind::Concat { lhs, rhs } => {
                let a = self.expr(lhs, locals)?;
                let b = self.expr(rhs, locals)?;
                CVal::Str(format!("{}{}", self.show(&a), self.show(&b)))
            }
            TExprKind::Compare { rel, lhs, rhs } => {
                let (a, b) = (self.int(lhs, locals)?, self.int(rhs, locals)?);
                CVal::Bool(rel_holds(*rel, a, b))
            }
            TExprKind::RefEq { negated, lhs, rhs } => {
                let a = self.expr(lhs, locals)?;
                let b = self.expr(rhs, locals)?;
                CVal::Bool((a == b) != *negated)
            }
            TExprKind::StructEq { lhs, rhs } => {
                let a = self.expr(lhs, locals)?;
                let b = self.expr(rhs, locals)?;
                CVal::Bool(self.struct_eq(&a, &b, &mut BTreeSet::new()))
            }
            TExprKind::Cast {
                target,
                statically_valid,
                expr,
            } => {
                let v = self.expr(expr, locals)?;
                match v {
                    _ if !statically_valid => return Err(Abrupt::Throw("ClassCastException")),
                    CVal::Ref(a) if !self.prog.table.is_subtype(self.heap[a].ty, *target) => {
                        return Err(Abrupt::Throw("ClassCastException"))
                    }
                    v => v,
                }
            }
            TExprKind::InstanceOf {
                target,
                statically_valid,
                expr,
            } => {
                let v = self.expr(expr, locals)?;
                CVal::Bool(match v {
                    CVal::Ref(a) => *statically_valid && self.prog.table.is_subtype(self.heap[a].ty, *target),
                    _ => false,
                })
            }
        })
    }
}

/// Strip the `_` prefix and numeric suffix from an engine variable name.
pub fn var_hint(name: &str) -> &str {
    name.trim_start_matches('_').trim_end_matches(|c: char| c.is_ascii_digit())
}
