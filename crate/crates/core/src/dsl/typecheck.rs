//! Static typing over {Scalar, Vec3, Mat3} and lowering to a slot-resolved tree.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ast::{BinOp, Body, CmpOp, Expr, LawAst, Stmt};
use super::builtins::{resolve, Builtin, Type};
use super::printer::{print_expr, print_law};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BodyKind {
    Elastic,
    Plastic,
}

impl fmt::Display for BodyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BodyKind::Elastic => "elastic",
            BodyKind::Plastic => "plastic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("type error in {body} body at `{expr}`: {message}")]
    Mismatch {
        body: BodyKind,
        expr: String,
        message: String,
    },
    #[error("{body} body must return Mat3 but returns {found}")]
    ReturnType { body: BodyKind, found: Type },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    AddSS,
    AddVV,
    AddMM,
    SubSS,
    SubVV,
    SubMM,
    MulSS,
    MulSV,
    MulVS,
    MulSM,
    MulMS,
    MulMM,
    MulMV,
    DivSS,
    DivVS,
    DivMS,
}

#[derive(Debug, Clone)]
pub(crate) struct CExpr {
    pub id: u32,
    pub kind: CKind,
}

#[derive(Debug, Clone)]
pub(crate) enum CKind {
    Const(f64),
    Identity,
    Slot(usize),
    Neg(Box<CExpr>),
    Bin(Op, Box<CExpr>, Box<CExpr>),
    Call(Builtin, Vec<CExpr>),
    If {
        op: CmpOp,
        lhs: Box<CExpr>,
        rhs: Box<CExpr>,
        then: Box<CExpr>,
        otherwise: Box<CExpr>,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum CStmt {
    Let(usize, CExpr),
    Svd([usize; 3], CExpr),
}

#[derive(Debug, Clone)]
pub(crate) struct CBody {
    pub stmts: Vec<CStmt>,
    pub ret: CExpr,
    pub slots: usize,
}

/// Type annotation for one subexpression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u32,
    pub body: BodyKind,
    pub ty: Type,
    pub text: String,
}

/// A law whose bodies both typecheck to Mat3, ready for evaluation.
#[derive(Debug, Clone)]
pub struct TypedLaw {
    pub ast: LawAst,
    pub(crate) elastic: CBody,
    pub(crate) plastic: CBody,
    annotations: Vec<Annotation>,
    digest: String,
}

impl TypedLaw {
    pub fn param_count(&self) -> usize {
        self.ast.params.len()
    }

    pub fn elastic_type(&self) -> Type {
        Type::Mat3
    }

    pub fn plastic_type(&self) -> Type {
        Type::Mat3
    }

    /// One entry per subexpression, indexed by node id.
    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub(crate) fn node_text(&self, id: u32) -> &str {
        self.annotations
            .get(id as usize)
            .map(|a| a.text.as_str())
            .unwrap_or("?")
    }

    /// Canonical source as printed from the AST.
    pub fn canonical_source(&self) -> String {
        print_law(&self.ast)
    }

    /// SHA-256 of the canonical source, hex encoded.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

struct Checker {
    body: BodyKind,
    next_id: u32,
    scope: HashMap<String, (usize, Type)>,
    slots: usize,
    annotations: Vec<Annotation>,
}

impl Checker {
    fn mismatch(&self, e: &Expr, message: String) -> TypeError {
        TypeError::Mismatch { body: self.body, expr: print_expr(e), message }
    }

    fn annotate(&mut self, e: &Expr, ty: Type) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.annotations.push(Annotation { id, body: self.body, ty, text: print_expr(e) });
        id
    }

    fn expr(&mut self, e: &Expr) -> Result<(CExpr, Type), TypeError> {
        use Type::*;
        let (kind, ty) = match e {
            Expr::Num(v) => (CKind::Const(*v), Scalar),
            Expr::Var(n) if n == "I" => (CKind::Identity, Mat3),
            Expr::Var(n) => {
                let &(slot, ty) = self
                    .scope
                    .get(n)
                    .ok_or_else(|| self.mismatch(e, format!("unbound identifier `{n}`")))?;
                (CKind::Slot(slot), ty)
            }
            Expr::Neg(inner) => {
                let (c, t) = self.expr(inner)?;
                (CKind::Neg(Box::new(c)), t)
            }
            Expr::Binary(op, a, b) => {
                let (ca, ta) = self.expr(a)?;
                let (cb, tb) = self.expr(b)?;
                let (o, t) = match (op, ta, tb) {
                    (BinOp::Add, Scalar, Scalar) => (Op::AddSS, Scalar),
                    (BinOp::Add, Vec3, Vec3) => (Op::AddVV, Vec3),
                    (BinOp::Add, Mat3, Mat3) => (Op::AddMM, Mat3),
                    (BinOp::Sub, Scalar, Scalar) => (Op::SubSS, Scalar),
                    (BinOp::Sub, Vec3, Vec3) => (Op::SubVV, Vec3),
                    (BinOp::Sub, Mat3, Mat3) => (Op::SubMM, Mat3),
                    (BinOp::Mul, Scalar, Scalar) => (Op::MulSS, Scalar),
                    (BinOp::Mul, Scalar, Vec3) => (Op::MulSV, Vec3),
                    (BinOp::Mul, Vec3, Scalar) => (Op::MulVS, Vec3),
                    (BinOp::Mul, Scalar, Mat3) => (Op::MulSM, Mat3),
                    (BinOp::Mul, Mat3, Scalar) => (Op::MulMS, Mat3),
                    (BinOp::Mul, Mat3, Mat3) => (Op::MulMM, Mat3),
                    (BinOp::Mul, Mat3, Vec3) => (Op::MulMV, Vec3),
                    (BinOp::Div, Scalar, Scalar) => (Op::DivSS, Scalar),
                    (BinOp::Div, Vec3, Scalar) => (Op::DivVS, Vec3),
                    (BinOp::Div, Mat3, Scalar) => (Op::DivMS, Mat3),
                    _ => {
                        return Err(self.mismatch(
                            e,
                            format!("cannot apply `{}` to {ta} and {tb}", op.symbol()),
                        ))
                    }
                };
                (CKind::Bin(o, Box::new(ca), Box::new(cb)), t)
            }
            Expr::Call(name, args) => {
                let mut cargs = Vec::with_capacity(args.len());
                let mut tys = Vec::with_capacity(args.len());
                for a in args {
                    let (c, t) = self.expr(a)?;
                    cargs.push(c);
                    tys.push(t);
                }
                let (b, out) = resolve(name, &tys).map_err(|m| self.mismatch(e, m))?;
                let out = out.ok_or_else(|| {
                    self.mismatch(e, "svd must be destructured as `let (U, S, V) = svd(...)`".into())
                })?;
                (CKind::Call(b, cargs), out)
            }
            Expr::If { cond, then, otherwise } => {
                let (cl, tl) = self.expr(&cond.lhs)?;
                let (cr, tr) = self.expr(&cond.rhs)?;
                if tl != Scalar || tr != Scalar {
                    return Err(self.mismatch(e, format!("comparison needs Scalar operands, got {tl} and {tr}")));
                }
                let (ct, tt) = self.expr(then)?;
                let (co, to) = self.expr(otherwise)?;
                if tt != to {
                    return Err(self.mismatch(e, format!("branches have different types: {tt} and {to}")));
                }
                (
                    CKind::If {
                        op: cond.op,
                        lhs: Box::new(cl),
                        rhs: Box::new(cr),
                        then: Box::new(ct),
                        otherwise: Box::new(co),
                    },
                    tt,
                )
            }
        };
        let id = self.annotate(e, ty);
        Ok((CExpr { id, kind }, ty))
    }

    fn bind(&mut self, name: &str, ty: Type) -> usize {
        let slot = self.slots;
        self.slots += 1;
        self.scope.insert(name.to_string(), (slot, ty));
        slot
    }

    fn body(&mut self, b: &Body) -> Result<CBody, TypeError> {
        let mut stmts = Vec::with_capacity(b.stmts.len());
        for s in &b.stmts {
            match s {
                Stmt::Let(name, e) => {
                    let (c, t) = self.expr(e)?;
                    let slot = self.bind(name, t);
                    stmts.push(CStmt::Let(slot, c));
                }
                Stmt::LetSvd(names, e) => {
                    let Expr::Call(fname, args) = e else {
                        return Err(self.mismatch(e, "destructuring `let` requires an svd(...) call".into()));
                    };
                    if fname != "svd" || args.len() != 1 {
                        return Err(self.mismatch(e, "destructuring `let` requires an svd(...) call".into()));
                    }
                    let (arg, t) = self.expr(&args[0])?;
                    if t != Type::Mat3 {
                        return Err(self.mismatch(e, format!("`svd` expects (Mat3) but got ({t})")));
                    }
                    let id = self.annotate(e, Type::Mat3);
                    let su = self.bind(&names[0], Type::Mat3);
                    let ss = self.bind(&names[1], Type::Vec3);
                    let sv = self.bind(&names[2], Type::Mat3);
                    let call = CExpr { id, kind: CKind::Call(Builtin::Svd, vec![arg]) };
                    stmts.push(CStmt::Svd([su, ss, sv], call));
                }
            }
        }
        let (ret, t) = self.expr(&b.ret)?;
        if t != Type::Mat3 {
            return Err(TypeError::ReturnType { body: self.body, found: t });
        }
        Ok(CBody { stmts, ret, slots: self.slots })
    }
}

/// Typechecks both bodies and lowers them for evaluation.
pub fn typecheck(ast: LawAst) -> Result<TypedLaw, TypeError> {
    let mut annotations = Vec::new();
    let mut next_id = 0;
    let mut bodies = Vec::with_capacity(2);
    for (kind, body) in [(BodyKind::Elastic, &ast.elastic), (BodyKind::Plastic, &ast.plastic)] {
        let mut scope = HashMap::new();
        scope.insert("F".to_string(), (0usize, Type::Mat3));
        for (i, p) in ast.params.iter().enumerate() {
            scope.insert(p.name.clone(), (i + 1, Type::Scalar));
        }
        let mut ck = Checker {
            body: kind,
            next_id,
            scope,
            slots: 1 + ast.params.len(),
            annotations: std::mem::take(&mut annotations),
        };
        let cb = ck.body(body)?;
        next_id = ck.next_id;
        annotations = ck.annotations;
        bodies.push(cb);
    }
    let plastic = bodies.pop().expect("two bodies");
    let elastic = bodies.pop().expect("two bodies");
    let digest = hex::encode(Sha256::digest(print_law(&ast).as_bytes()));
    Ok(TypedLaw { ast, elastic, plastic, annotations, digest })
}
