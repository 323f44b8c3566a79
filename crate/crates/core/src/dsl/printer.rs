//! Canonical pretty-printer; its output parses back to an equal AST.

use std::fmt::Write;

use super::ast::{BinOp, Body, Expr, LawAst, ParamSpec, Stmt};

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::If { .. } => 0,
        _ => 4,
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_child(out: &mut String, e: &Expr, min_prec: u8) {
    if prec(e) < min_prec {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(v) => out.push_str(&num(*v)),
        Expr::Var(n) => out.push_str(n),
        Expr::Neg(inner) => {
            out.push('-');
            write_child(out, inner, 3);
        }
        Expr::Binary(op, a, b) => {
            let p = prec(e);
            write_child(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            // left-associative: an equal-precedence right child needs parens
            write_child(out, b, p + 1);
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a);
            }
            out.push(')');
        }
        Expr::If { cond, then, otherwise } => {
            out.push_str("if ");
            write_child(out, &cond.lhs, 1);
            let _ = write!(out, " {} ", cond.op.symbol());
            write_child(out, &cond.rhs, 1);
            out.push_str(" then ");
            write_child(out, then, 1);
            out.push_str(" else ");
            write_child(out, otherwise, 1);
        }
    }
}

pub fn print_param(p: &ParamSpec) -> String {
    format!(
        "param {} init={} min={} max={}{}",
        p.name,
        num(p.init),
        num(p.lo),
        num(p.hi),
        if p.log_scale { " log" } else { "" }
    )
}

pub fn print_body(b: &Body) -> String {
    let mut s = String::from("{\n");
    for st in &b.stmts {
        match st {
            Stmt::Let(n, e) => {
                let _ = writeln!(s, "  let {n} = {};", print_expr(e));
            }
            Stmt::LetSvd([u, sv, v], e) => {
                let _ = writeln!(s, "  let ({u}, {sv}, {v}) = {};", print_expr(e));
            }
        }
    }
    let _ = writeln!(s, "  return {}", print_expr(&b.ret));
    s.push('}');
    s
}

pub fn print_law(law: &LawAst) -> String {
    let mut s = String::new();
    for p in &law.params {
        s.push_str(&print_param(p));
        s.push('\n');
    }
    let _ = writeln!(s, "elastic {}", print_body(&law.elastic));
    let _ = writeln!(s, "plastic {}", print_body(&law.plastic));
    s
}
