//! Tree-walking interpreter over typed laws.

use thiserror::Error;

use super::ast::CmpOp;
use super::builtins::Builtin;
use super::typecheck::{BodyKind, CBody, CExpr, CKind, CStmt, Op, TypedLaw};
use crate::linalg::{svd3, Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value in {body} body at node {node} `{expr}`")]
    NonFinite { body: BodyKind, node: u32, expr: String },
    #[error("domain error in {body} body at node {node} `{expr}`: {reason}")]
    Domain {
        body: BodyKind,
        node: u32,
        expr: String,
        reason: String,
    },
    #[error("law takes {expected} parameters but {got} were supplied")]
    ParamCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy)]
enum Value<T> {
    S(T),
    V(Vec3<T>),
    M(Mat3<T>),
}

impl<T: Real> Value<T> {
    fn is_finite(&self) -> bool {
        match self {
            Value::S(s) => s.is_finite(),
            Value::V(v) => v.is_finite(),
            Value::M(m) => m.is_finite(),
        }
    }

    #[inline]
    fn s(self) -> T {
        match self {
            Value::S(s) => s,
            _ => unreachable!("typechecked scalar"),
        }
    }

    #[inline]
    fn v(self) -> Vec3<T> {
        match self {
            Value::V(v) => v,
            _ => unreachable!("typechecked vector"),
        }
    }

    #[inline]
    fn m(self) -> Mat3<T> {
        match self {
            Value::M(m) => m,
            _ => unreachable!("typechecked matrix"),
        }
    }
}

enum Fault {
    NonFinite(u32),
    Domain(u32, String),
}

/// Reusable evaluation context. Holds a slot buffer so repeated calls do not allocate.
pub struct Evaluator<'a, T> {
    law: &'a TypedLaw,
    slots: Vec<Value<T>>,
    checked: bool,
}

impl<'a, T: Real> Evaluator<'a, T> {
    pub fn new(law: &'a TypedLaw) -> Self {
        let n = law.elastic.slots.max(law.plastic.slots);
        Evaluator { law, slots: vec![Value::S(T::zero()); n], checked: false }
    }

    pub fn law(&self) -> &TypedLaw {
        self.law
    }

    /// Kirchhoff stress for deformation gradient `f`.
    pub fn elastic(&mut self, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, EvalError> {
        self.run(BodyKind::Elastic, f, theta)
    }

    /// Plastically corrected deformation gradient.
    pub fn plastic(&mut self, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, EvalError> {
        self.run(BodyKind::Plastic, f, theta)
    }

    fn run(&mut self, kind: BodyKind, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, EvalError> {
        let law = self.law;
        if theta.len() != law.param_count() {
            return Err(EvalError::ParamCount { expected: law.param_count(), got: theta.len() });
        }
        let body = match kind {
            BodyKind::Elastic => &law.elastic,
            BodyKind::Plastic => &law.plastic,
        };
        // Fast path checks only the result; on failure rerun with per-node checks to locate it.
        self.checked = false;
        let out = self.body(body, f, theta);
        let fault = match out {
            Ok(m) if m.is_finite() => return Ok(m),
            Ok(_) => {
                self.checked = true;
                match self.body(body, f, theta) {
                    Err(fault) => fault,
                    Ok(_) => Fault::NonFinite(body.ret.id),
                }
            }
            Err(fault) => fault,
        };
        Err(match fault {
            Fault::NonFinite(node) => EvalError::NonFinite {
                body: kind,
                node,
                expr: law.node_text(node).to_string(),
            },
            Fault::Domain(node, reason) => EvalError::Domain {
                body: kind,
                node,
                expr: law.node_text(node).to_string(),
                reason,
            },
        })
    }

    fn body(&mut self, body: &CBody, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, Fault> {
        self.slots[0] = Value::M(*f);
        for (i, &p) in theta.iter().enumerate() {
            self.slots[i + 1] = Value::S(p);
        }
        for st in &body.stmts {
            match st {
                CStmt::Let(slot, e) => {
                    let v = self.expr(e)?;
                    self.slots[*slot] = v;
                }
                CStmt::Svd([su, ss, sv], call) => {
                    let CKind::Call(_, args) = &call.kind else {
                        unreachable!("svd statement holds a call")
                    };
                    let m = self.expr(&args[0])?.m();
                    let d = svd3(&m).map_err(|_| Fault::NonFinite(call.id))?;
                    self.slots[*su] = Value::M(d.u);
                    self.slots[*ss] = Value::V(d.s);
                    self.slots[*sv] = Value::M(d.v);
                }
            }
        }
        Ok(self.expr(&body.ret)?.m())
    }

    fn expr(&self, e: &CExpr) -> Result<Value<T>, Fault> {
        let v = match &e.kind {
            CKind::Const(c) => Value::S(T::lit(*c)),
            CKind::Identity => Value::M(Mat3::identity()),
            CKind::Slot(i) => self.slots[*i],
            CKind::Neg(a) => match self.expr(a)? {
                Value::S(s) => Value::S(-s),
                Value::V(v) => Value::V(-v),
                Value::M(m) => Value::M(-m),
            },
            CKind::Bin(op, a, b) => {
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                binary(*op, a, b)
            }
            CKind::Call(b, args) => self.call(e.id, *b, args)?,
            CKind::If { op, lhs, rhs, then, otherwise } => {
                let l = self.expr(lhs)?.s();
                let r = self.expr(rhs)?.s();
                let take = match op {
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Gt => l > r,
                    CmpOp::Ge => l >= r,
                    CmpOp::Eq => l == r,
                    CmpOp::Ne => l != r,
                };
                if take {
                    self.expr(then)?
                } else {
                    self.expr(otherwise)?
                }
            }
        };
        if self.checked && !v.is_finite() {
            return Err(Fault::NonFinite(e.id));
        }
        Ok(v)
    }

    fn call(&self, id: u32, b: Builtin, args: &[CExpr]) -> Result<Value<T>, Fault> {
        let arg = |i: usize| self.expr(&args[i]);
        let domain = |msg: &str| Fault::Domain(id, msg.to_string());
        Ok(match b {
            Builtin::Svd => unreachable!("svd only appears in destructuring lets"),
            Builtin::Det => Value::S(arg(0)?.m().determinant()),
            Builtin::Trace => Value::S(arg(0)?.m().trace()),
            Builtin::NormFro => Value::S(arg(0)?.m().frobenius_norm()),
            Builtin::Transpose => Value::M(arg(0)?.m().transpose()),
            Builtin::Inverse => Value::M(
                arg(0)?
                    .m()
                    .try_inverse()
                    .ok_or_else(|| domain("inverse of singular matrix"))?,
            ),
            Builtin::Dev => Value::M(arg(0)?.m().deviatoric()),
            Builtin::DevV => {
                let v = arg(0)?.v();
                Value::V(v - Vec3::splat(v.sum() / T::lit(3.0)))
            }
            Builtin::Diag => Value::M(Mat3::from_diagonal(&arg(0)?.v())),
            Builtin::Outer => Value::M(Mat3::outer(&arg(0)?.v(), &arg(1)?.v())),
            Builtin::Log => {
                let x = arg(0)?.s();
                if x <= T::zero() {
                    return Err(domain("log of non-positive value"));
                }
                Value::S(x.ln())
            }
            Builtin::Sqrt => {
                let x = arg(0)?.s();
                if x < T::zero() {
                    return Err(domain("sqrt of negative value"));
                }
                Value::S(x.sqrt())
            }
            Builtin::Exp => Value::S(arg(0)?.s().exp()),
            Builtin::Abs => Value::S(arg(0)?.s().abs()),
            Builtin::Pow => Value::S(arg(0)?.s().powf(arg(1)?.s())),
            Builtin::Min => Value::S(arg(0)?.s().min(arg(1)?.s())),
            Builtin::Max => Value::S(arg(0)?.s().max(arg(1)?.s())),
            Builtin::Clamp => {
                let (x, lo, hi) = (arg(0)?.s(), arg(1)?.s(), arg(2)?.s());
                Value::S(x.max(lo).min(hi))
            }
            Builtin::VLog => {
                let v = arg(0)?.v();
                if v.0.iter().any(|&c| c <= T::zero()) {
                    return Err(domain("vlog of non-positive component"));
                }
                Value::V(v.map(T::ln))
            }
            Builtin::VExp => Value::V(arg(0)?.v().map(T::exp)),
            Builtin::VSum => Value::S(arg(0)?.v().sum()),
            Builtin::VNorm => Value::S(arg(0)?.v().norm()),
            Builtin::VMax => {
                let s = arg(1)?.s();
                Value::V(arg(0)?.v().map(|c| c.max(s)))
            }
        })
    }
}

#[inline]
fn binary<T: Real>(op: Op, a: Value<T>, b: Value<T>) -> Value<T> {
    match op {
        Op::AddSS => Value::S(a.s() + b.s()),
        Op::AddVV => Value::V(a.v() + b.v()),
        Op::AddMM => Value::M(a.m() + b.m()),
        Op::SubSS => Value::S(a.s() - b.s()),
        Op::SubVV => Value::V(a.v() - b.v()),
        Op::SubMM => Value::M(a.m() - b.m()),
        Op::MulSS => Value::S(a.s() * b.s()),
        Op::MulSV => Value::V(b.v() * a.s()),
        Op::MulVS => Value::V(a.v() * b.s()),
        Op::MulSM => Value::M(b.m() * a.s()),
        Op::MulMS => Value::M(a.m() * b.s()),
        Op::MulMM => Value::M(a.m() * b.m()),
        Op::MulMV => Value::V(a.m() * b.v()),
        Op::DivSS => Value::S(a.s() / b.s()),
        Op::DivVS => Value::V(a.v() / b.s()),
        Op::DivMS => Value::M(a.m() / b.s()),
    }
}

pub fn eval_elastic<T: Real>(law: &TypedLaw, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, EvalError> {
    Evaluator::new(law).elastic(f, theta)
}

pub fn eval_plastic<T: Real>(law: &TypedLaw, f: &Mat3<T>, theta: &[T]) -> Result<Mat3<T>, EvalError> {
    Evaluator::new(law).plastic(f, theta)
}
