//! Immutable class table and the hierarchy queries used for dispatch on
//! free objects and for type operations.
//!
//! Type ids follow declaration order, with the built-in root `Object` at
//! index 0. Every set of types is a `BTreeSet<TypeId>`, so iteration order
//! is declaration order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::frontend::ast::{self, ClassKind, Span, TypeName};
use crate::frontend::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TypeId(pub u32);

impl TypeId {
    pub const OBJECT: TypeId = TypeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A field is identified by its declaring class, so hidden fields stay
/// distinct from the fields that hide them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId {
    pub owner: TypeId,
    pub index: u32,
}

/// Methods are keyed by name and arity; overloading by parameter type is
/// not supported.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodKey {
    pub name: String,
    pub arity: usize,
}

impl MethodKey {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        MethodKey {
            name: name.into(),
            arity,
        }
    }

    pub fn to_string_key() -> Self {
        MethodKey::new("toString", 0)
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Static types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ty {
    Int,
    Bool,
    Str,
    Ref(TypeId),
    /// Type of the `null` literal.
    Null,
    Void,
}

impl Ty {
    pub fn is_reference(self) -> bool {
        matches!(self, Ty::Ref(_) | Ty::Null)
    }

    pub fn is_primitive(self) -> bool {
        matches!(self, Ty::Int | Ty::Bool)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodImpl {
    Abstract,
    Source,
    /// `TypeName{field=value,...}` rendering.
    BuiltinToString,
    /// Reference equality.
    BuiltinEquals,
}

impl MethodImpl {
    pub fn has_body(self) -> bool {
        !matches!(self, MethodImpl::Abstract)
    }
}

#[derive(Debug, Clone)]
pub struct MethodSig {
    pub key: MethodKey,
    pub params: Vec<Ty>,
    pub param_names: Vec<String>,
    pub ret: Ty,
    pub imp: MethodImpl,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct FieldDef {
    pub id: FieldId,
    pub name: String,
    pub ty: Ty,
}

#[derive(Debug, Clone)]
pub struct ClassDef {
    pub id: TypeId,
    pub name: String,
    pub kind: ClassKind,
    pub is_abstract: bool,
    pub superclass: Option<TypeId>,
    pub interfaces: Vec<TypeId>,
    pub fields: Vec<FieldDef>,
    pub methods: Vec<MethodSig>,
    pub span: Span,
}

impl ClassDef {
    pub fn method(&self, key: &MethodKey) -> Option<&MethodSig> {
        self.methods.iter().find(|m| &m.key == key)
    }

    /// Non-abstract class kind.
    pub fn is_instantiable(&self) -> bool {
        self.kind == ClassKind::Class && !self.is_abstract
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassError {
    #[error("unknown type id {0}")]
    UnknownType(u32),
    #[error("no implementation of `{method}` reachable from `{ty}`")]
    UnknownMethod { ty: String, method: String },
    #[error("`{ty}` does not declare its own body for `{method}`")]
    NotAnOwner { ty: String, method: String },
}

#[derive(Debug, Clone)]
pub struct ClassTable {
    classes: Vec<ClassDef>,
    by_name: HashMap<String, TypeId>,
    /// Direct supertypes (superclass first, then interfaces).
    parents: Vec<Vec<TypeId>>,
    /// Strict transitive subtypes.
    subtypes: Vec<BTreeSet<TypeId>>,
    /// Strict transitive supertypes.
    ancestors: Vec<BTreeSet<TypeId>>,
}

fn herr(span: Span, message: impl Into<String>) -> FrontendError {
    FrontendError::Hierarchy {
        span,
        message: message.into(),
    }
}

impl ClassTable {
    pub fn build(program: &ast::Program) -> Result<ClassTable, FrontendError> {
        let mut by_name = HashMap::new();
        by_name.insert("Object".to_string(), TypeId::OBJECT);
        for (i, decl) in program.classes.iter().enumerate() {
            if by_name.insert(decl.name.clone(), TypeId(i as u32 + 1)).is_some() {
                return Err(FrontendError::DuplicateClass {
                    name: decl.name.clone(),
                    span: decl.span,
                    first: Span::default(),
                });
            }
        }

        let resolve = |name: &TypeName, span: Span| -> Result<Ty, FrontendError> {
            Ok(match name {
                TypeName::Int => Ty::Int,
                TypeName::Boolean => Ty::Bool,
                TypeName::String => Ty::Str,
                TypeName::Void => Ty::Void,
                TypeName::Named(n) => Ty::Ref(*by_name.get(n).ok_or_else(|| {
                    FrontendError::UnknownType {
                        name: n.clone(),
                        span,
                    }
                })?),
            })
        };
        let resolve_class = |n: &str, span: Span| -> Result<TypeId, FrontendError> {
            by_name
                .get(n)
                .copied()
                .ok_or_else(|| FrontendError::UnknownType {
                    name: n.to_string(),
                    span,
                })
        };

        let mut classes = vec![ClassDef {
            id: TypeId::OBJECT,
            name: "Object".into(),
            kind: ClassKind::Class,
            is_abstract: false,
            superclass: None,
            interfaces: vec![],
            fields: vec![],
            methods: vec![
                MethodSig {
                    key: MethodKey::to_string_key(),
                    params: vec![],
                    param_names: vec![],
                    ret: Ty::Str,
                    imp: MethodImpl::BuiltinToString,
                    span: Span::default(),
                },
                MethodSig {
                    key: MethodKey::new("equals", 1),
                    params: vec![Ty::Ref(TypeId::OBJECT)],
                    param_names: vec!["other".into()],
                    ret: Ty::Bool,
                    imp: MethodImpl::BuiltinEquals,
                    span: Span::default(),
                },
            ],
            span: Span::default(),
        }];

        for (i, decl) in program.classes.iter().enumerate() {
            let id = TypeId(i as u32 + 1);
            let is_interface = decl.kind == ClassKind::Interface;
            if is_interface && decl.is_abstract {
                return Err(herr(decl.span, "interfaces are implicitly abstract"));
            }
            if is_interface && !decl.implements.is_empty() {
                return Err(herr(
                    decl.span,
                    format!("interface `{}` cannot use `implements`; use `extends`", decl.name),
                ));
            }
            let superclass = match (&decl.extends, is_interface) {
                (Some(n), false) => Some(resolve_class(n, decl.span)?),
                (None, false) => Some(TypeId::OBJECT),
                (_, true) => None,
            };
            let mut interfaces = Vec::new();
            if is_interface {
                if let Some(n) = &decl.extends {
                    interfaces.push(resolve_class(n, decl.span)?);
                }
            }
            for n in &decl.implements {
                let t = resolve_class(n, decl.span)?;
                if interfaces.contains(&t) {
                    return Err(herr(decl.span, format!("`{n}` listed twice")));
                }
                interfaces.push(t);
            }

            let mut fields = Vec::new();
            for f in decl.fields() {
                if is_interface {
                    return Err(herr(f.span, "interfaces cannot declare fields"));
                }
                let ty = resolve(&f.ty, f.span)?;
                if ty == Ty::Void {
                    return Err(herr(f.span, format!("field `{}` cannot be void", f.name)));
                }
                if fields.iter().any(|x: &FieldDef| x.name == f.name) {
                    return Err(herr(f.span, format!("duplicate field `{}`", f.name)));
                }
                fields.push(FieldDef {
                    id: FieldId {
                        owner: id,
                        index: fields.len() as u32,
                    },
                    name: f.name.clone(),
                    ty,
                });
            }

            let mut methods: Vec<MethodSig> = Vec::new();
            for m in decl.methods() {
                let key = MethodKey::new(m.name.clone(), m.params.len());
                if methods.iter().any(|x| x.key == key) {
                    return Err(herr(m.span, format!("duplicate method `{key}`")));
                }
                let imp = match (&m.body, m.is_abstract, is_interface) {
                    (Some(_), _, true) => {
                        return Err(herr(m.span, "interface methods cannot have a body"))
                    }
                    (None, _, true) => MethodImpl::Abstract,
                    (Some(_), true, false) => {
                        return Err(herr(m.span, "abstract methods cannot have a body"))
                    }
                    (None, false, false) => {
                        return Err(herr(m.span, "method without body must be declared abstract"))
                    }
                    (None, true, false) => {
                        if !decl.is_abstract {
                            return Err(herr(
                                m.span,
                                format!(
                                    "class `{}` declares abstract method `{key}` but is not abstract",
                                    decl.name
                                ),
                            ));
                        }
                        MethodImpl::Abstract
                    }
                    (Some(_), false, false) => MethodImpl::Source,
                };
                let mut params = Vec::new();
                let mut param_names: Vec<String> = Vec::new();
                for p in &m.params {
                    let ty = resolve(&p.ty, m.span)?;
                    if ty == Ty::Void {
                        return Err(herr(m.span, format!("parameter `{}` cannot be void", p.name)));
                    }
                    if param_names.contains(&p.name) {
                        return Err(herr(m.span, format!("duplicate parameter `{}`", p.name)));
                    }
                    params.push(ty);
                    param_names.push(p.name.clone());
                }
                methods.push(MethodSig {
                    key,
                    params,
                    param_names,
                    ret: resolve(&m.ret, m.span)?,
                    imp,
                    span: m.span,
                });
            }

            classes.push(ClassDef {
                id,
                name: decl.name.clone(),
                kind: decl.kind,
                is_abstract: is_interface || decl.is_abstract,
                superclass,
                interfaces,
                fields,
                methods,
                span: decl.span,
            });
        }

        // kind checks on supertypes
        for c in &classes[1..] {
            if let Some(s) = c.superclass {
                if classes[s.index()].kind == ClassKind::Interface {
                    return Err(herr(
                        c.span,
                        format!("class `{}` cannot extend interface `{}`", c.name, classes[s.index()].name),
                    ));
                }
            }
            for i in &c.interfaces {
                if classes[i.index()].kind != ClassKind::Interface {
                    return Err(herr(
                        c.span,
                        format!("`{}` is not an interface", classes[i.index()].name),
                    ));
                }
            }
        }

        let n = classes.len();
        let parents: Vec<Vec<TypeId>> = classes
            .iter()
            .map(|c| {
                let mut p: Vec<TypeId> = c.superclass.into_iter().collect();
                p.extend(c.interfaces.iter().copied());
                if p.is_empty() && c.id != TypeId::OBJECT {
                    p.push(TypeId::OBJECT);
                }
                p
            })
            .collect();

        // acyclicity via DFS colouring
        fn visit(
            t: usize,
            parents: &[Vec<TypeId>],
            state: &mut [u8],
        ) -> Result<(), usize> {
            match state[t] {
                1 => return Err(t),
                2 => return Ok(()),
                _ => {}
            }
            state[t] = 1;
            for p in &parents[t] {
                visit(p.index(), parents, state)?;
            }
            state[t] = 2;
            Ok(())
        }
        let mut state = vec![0u8; n];
        for t in 0..n {
            if let Err(at) = visit(t, &parents, &mut state) {
                return Err(herr(
                    classes[at].span,
                    format!("cyclic inheritance involving `{}`", classes[at].name),
                ));
            }
        }

        let mut ancestors = vec![BTreeSet::new(); n];
        fn collect(t: usize, parents: &[Vec<TypeId>], acc: &mut BTreeSet<TypeId>) {
            for p in &parents[t] {
                if acc.insert(*p) {
                    collect(p.index(), parents, acc);
                }
            }
        }
        for (t, anc) in ancestors.iter_mut().enumerate() {
            collect(t, &parents, anc);
        }
        let mut subtypes = vec![BTreeSet::new(); n];
        for (t, anc) in ancestors.iter().enumerate() {
            for a in anc {
                subtypes[a.index()].insert(TypeId(t as u32));
            }
        }

        let mut table = ClassTable {
            classes,
            by_name,
            parents,
            subtypes,
            ancestors,
        };
        table.check_signatures()?;
        table.synthesize_to_string();
        table.check_implementations()?;
        Ok(table)
    }

    /// Every declaration of a method key visible from a type must agree on
    /// parameter and return types. This also rejects diamond conflicts
    /// arriving through several interfaces.
    fn check_signatures(&self) -> Result<(), FrontendError> {
        for c in &self.classes {
            let mut seen: HashMap<&MethodKey, &MethodSig> = HashMap::new();
            let lineage = std::iter::once(c.id).chain(self.ancestors[c.id.index()].iter().copied());
            for t in lineage {
                for m in &self.classes[t.index()].methods {
                    if let Some(prev) = seen.get(&m.key) {
                        if prev.params != m.params || prev.ret != m.ret {
                            return Err(herr(
                                c.span,
                                format!(
                                    "conflicting declarations of `{}` visible from `{}`",
                                    m.key, c.name
                                ),
                            ));
                        }
                    } else {
                        seen.insert(&m.key, m);
                    }
                }
            }
        }
        Ok(())
    }

    /// Each concrete class that does not inherit a source-level `toString`
    /// owns a built-in one, since the rendering differs per type.
    fn synthesize_to_string(&mut self) {
        let key = MethodKey::to_string_key();
        for t in 1..self.classes.len() {
            if !self.classes[t].is_instantiable() || self.classes[t].method(&key).is_some() {
                continue;
            }
            let inherits_source = self
                .superclass_chain(TypeId(t as u32))
                .any(|s| {
                    self.classes[s.index()]
                        .method(&key)
                        .is_some_and(|m| m.imp == MethodImpl::Source)
                });
            if !inherits_source {
                let template = self.classes[0].method(&key).cloned().unwrap();
                self.classes[t].methods.push(template);
            }
        }
    }

    fn check_implementations(&self) -> Result<(), FrontendError> {
        for c in &self.classes {
            if !c.is_instantiable() {
                continue;
            }
            for key in self.visible_methods(c.id) {
                if self.dispatch_target(c.id, &key).is_none() {
                    return Err(herr(
                        c.span,
                        format!("class `{}` must implement `{}`", c.name, key),
                    ));
                }
            }
        }
        Ok(())
    }

    fn visible_methods(&self, t: TypeId) -> BTreeSet<MethodKey> {
        std::iter::once(t)
            .chain(self.ancestors[t.index()].iter().copied())
            .flat_map(|a| self.classes[a.index()].methods.iter().map(|m| m.key.clone()))
            .collect()
    }

    fn check(&self, t: TypeId) -> Result<(), ClassError> {
        if t.index() < self.classes.len() {
            Ok(())
        } else {
            Err(ClassError::UnknownType(t.0))
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn class(&self, t: TypeId) -> &ClassDef {
        &self.classes[t.index()]
    }

    pub fn name(&self, t: TypeId) -> &str {
        &self.classes[t.index()].name
    }

    pub fn lookup(&self, name: &str) -> Option<TypeId> {
        self.by_name.get(name).copied()
    }

    pub fn is_instantiable(&self, t: TypeId) -> bool {
        self.classes[t.index()].is_instantiable()
    }

    pub fn parents(&self, t: TypeId) -> &[TypeId] {
        &self.parents[t.index()]
    }

    pub fn ancestors(&self, t: TypeId) -> &BTreeSet<TypeId> {
        &self.ancestors[t.index()]
    }

    /// `sub` is `sup` or one of its transitive subtypes.
    pub fn is_subtype(&self, sub: TypeId, sup: TypeId) -> bool {
        sub == sup || self.ancestors[sub.index()].contains(&sup)
    }

    pub fn superclass_chain(&self, t: TypeId) -> impl Iterator<Item = TypeId> + '_ {
        std::iter::successors(Some(t), move |c| self.classes[c.index()].superclass)
    }

    /// All strict transitive subtypes, classes and interfaces alike.
    pub fn subtypes(&self, t: TypeId) -> Result<BTreeSet<TypeId>, ClassError> {
        self.check(t)?;
        Ok(self.subtypes[t.index()].clone())
    }

    /// Instantiable candidates for a receiver of static type `t`: the
    /// non-abstract strict subtypes, plus `t` itself when it is
    /// instantiable.
    pub fn relevant_types(&self, t: TypeId) -> Result<BTreeSet<TypeId>, ClassError> {
        Ok(self
            .cone(t)?
            .into_iter()
            .filter(|c| self.is_instantiable(*c))
            .collect())
    }

    /// `t` together with all its subtypes.
    pub fn cone(&self, t: TypeId) -> Result<BTreeSet<TypeId>, ClassError> {
        let mut set = self.subtypes(t)?;
        set.insert(t);
        Ok(set)
    }

    /// Class whose body runs when `key` is invoked on an instance of `t`.
    pub fn dispatch_target(&self, t: TypeId, key: &MethodKey) -> Option<TypeId> {
        self.superclass_chain(t).find(|c| {
            self.classes[c.index()]
                .method(key)
                .is_some_and(|m| m.imp.has_body())
        })
    }

    /// The owners of the method bodies that instantiable candidates
    /// dispatch to. Types that merely inherit a body are represented by the
    /// ancestor they inherit it from.
    pub fn implementations(
        &self,
        candidates: &BTreeSet<TypeId>,
        key: &MethodKey,
    ) -> Result<BTreeSet<TypeId>, ClassError> {
        let mut owners = BTreeSet::new();
        for &c in candidates {
            self.check(c)?;
            if !self.is_instantiable(c) {
                continue;
            }
            let owner = self
                .dispatch_target(c, key)
                .ok_or_else(|| ClassError::UnknownMethod {
                    ty: self.name(c).to_string(),
                    method: key.to_string(),
                })?;
            owners.insert(owner);
        }
        Ok(owners)
    }

    /// Instantiable members of `universe` whose dispatch of `key` lands on
    /// the body declared in `owner`.
    pub fn instance_types_for(
        &self,
        owner: TypeId,
        key: &MethodKey,
        universe: &BTreeSet<TypeId>,
    ) -> Result<BTreeSet<TypeId>, ClassError> {
        self.check(owner)?;
        if !self
            .class(owner)
            .method(key)
            .is_some_and(|m| m.imp.has_body())
        {
            return Err(ClassError::NotAnOwner {
                ty: self.name(owner).to_string(),
                method: key.to_string(),
            });
        }
        Ok(universe
            .iter()
            .copied()
            .filter(|&c| self.is_instantiable(c) && self.dispatch_target(c, key) == Some(owner))
            .collect())
    }

    /// Static method resolution: the declaring type and signature of `key`
    /// as seen from `t`.
    pub fn lookup_method(&self, t: TypeId, key: &MethodKey) -> Option<(TypeId, &MethodSig)> {
        let mut queue = std::collections::VecDeque::from([t]);
        let mut seen = BTreeSet::new();
        while let Some(c) = queue.pop_front() {
            if !seen.insert(c) {
                continue;
            }
            if let Some(m) = self.classes[c.index()].method(key) {
                return Some((c, m));
            }
            queue.extend(self.parents[c.index()].iter().copied());
        }
        None
    }

    /// Field resolution by static type; hiding follows the superclass chain.
    pub fn lookup_field(&self, t: TypeId, name: &str) -> Option<&FieldDef> {
        self.superclass_chain(t)
            .find_map(|c| self.classes[c.index()].fields.iter().find(|f| f.name == name))
    }

    pub fn field(&self, id: FieldId) -> &FieldDef {
        &self.classes[id.owner.index()].fields[id.index as usize]
    }

    /// Every field of an instance of `t`, root class first.
    pub fn all_fields(&self, t: TypeId) -> Vec<FieldId> {
        let chain: Vec<TypeId> = self.superclass_chain(t).collect();
        chain
            .iter()
            .rev()
            .flat_map(|c| self.classes[c.index()].fields.iter().map(|f| f.id))
            .collect()
    }

    pub fn type_name(&self, ty: Ty) -> String {
        match ty {
            Ty::Int => "int".into(),
            Ty::Bool => "boolean".into(),
            Ty::Str => "String".into(),
            Ty::Null => "null".into(),
            Ty::Void => "void".into(),
            Ty::Ref(t) => self.name(t).to_string(),
        }
    }

    /// `{A, B}` rendering of a type set.
    pub fn set_names(&self, set: &BTreeSet<TypeId>) -> String {
        let names: Vec<&str> = set.iter().map(|t| self.name(*t)).collect();
        format!("{{{}}}", names.join(","))
    }
}
