use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// A declared continuous parameter of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lo: f64,
    pub hi: f64,
    pub log_scale: bool,
}

impl ParamSpec {
    /// Checks `lo < hi`, `lo <= init <= hi` and positivity for log-scale bounds.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.init.is_finite() && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(format!("parameter `{}` has non-finite bounds", self.name));
        }
        if self.lo >= self.hi {
            return Err(format!("parameter `{}`: min must be below max", self.name));
        }
        if self.init < self.lo || self.init > self.hi {
            return Err(format!("parameter `{}`: init outside [min, max]", self.name));
        }
        if self.log_scale && self.lo <= 0.0 {
            return Err(format!("parameter `{}`: log-scale requires min > 0", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    If {
        cond: Box<Cond>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

impl Expr {
    /// Number of expression nodes, counting both sides of a condition.
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Var(_) => 0,
            Expr::Neg(e) => e.node_count(),
            Expr::Binary(_, a, b) => a.node_count() + b.node_count(),
            Expr::Call(_, args) => args.iter().map(Expr::node_count).sum(),
            Expr::If {
                cond,
                then,
                otherwise,
            } => cond.lhs.node_count() + cond.rhs.node_count() + then.node_count() + otherwise.node_count(),
        }
    }

    pub(crate) fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::If {
                cond,
                then,
                otherwise,
            } => {
                cond.lhs.collect_vars(out);
                cond.rhs.collect_vars(out);
                then.collect_vars(out);
                otherwise.collect_vars(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Let(String, Expr),
    /// `let (U, S, V) = svd(...)`
    LetSvd([String; 3], Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub stmts: Vec<Stmt>,
    pub ret: Expr,
}

impl Body {
    pub fn node_count(&self) -> usize {
        self.stmts
            .iter()
            .map(|s| match s {
                Stmt::Let(_, e) | Stmt::LetSvd(_, e) => e.node_count(),
            })
            .sum::<usize>()
            + self.ret.node_count()
    }

    /// Identifiers read by this body that it does not bind itself.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut used = BTreeSet::new();
        let mut bound = BTreeSet::new();
        for s in &self.stmts {
            let mut u = BTreeSet::new();
            match s {
                Stmt::Let(name, e) => {
                    e.collect_vars(&mut u);
                    used.extend(u.into_iter().filter(|n| !bound.contains(n)));
                    bound.insert(name.clone());
                }
                Stmt::LetSvd(names, e) => {
                    e.collect_vars(&mut u);
                    used.extend(u.into_iter().filter(|n| !bound.contains(n)));
                    bound.extend(names.iter().cloned());
                }
            }
        }
        let mut u = BTreeSet::new();
        self.ret.collect_vars(&mut u);
        used.extend(u.into_iter().filter(|n| !bound.contains(n)));
        used
    }
}

/// Parsed constitutive law: parameter declarations plus elastic and plastic bodies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawAst {
    pub params: Vec<ParamSpec>,
    pub elastic: Body,
    pub plastic: Body,
    pub source_text: String,
}

/// Structural equality; the original source text is ignored.
impl PartialEq for LawAst {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.elastic == other.elastic && self.plastic == other.plastic
    }
}

impl LawAst {
    pub fn node_count(&self) -> usize {
        self.elastic.node_count() + self.plastic.node_count()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Parameters referenced by the given body, in declaration order.
    pub fn params_used_by(&self, body: &Body) -> Vec<ParamSpec> {
        let free = body.free_names();
        self.params
            .iter()
            .filter(|p| free.contains(&p.name))
            .cloned()
            .collect()
    }

    /// Drops parameters no body references.
    pub fn prune_unused_params(&mut self) {
        let mut free = self.elastic.free_names();
        free.extend(self.plastic.free_names());
        self.params.retain(|p| free.contains(&p.name));
    }
}
