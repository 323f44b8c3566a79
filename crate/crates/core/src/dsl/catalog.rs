//! Classical laws expressed in the DSL.

use super::ast::LawAst;
use super::parser::parse_law;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Elastic,
    Plastic,
}

/// One body of a classical law together with the parameters it declares.
/// Plastic pieces may read `mu` and `lam` declared by the elastic side.
#[derive(Debug, Clone, Copy)]
pub struct LawPiece {
    pub name: &'static str,
    pub kind: PieceKind,
    pub params: &'static str,
    pub body: &'static str,
}

const MODULI: &str = "param mu init=1000.0 min=1.0 max=1000000000.0 log
param lam init=1000.0 min=1.0 max=1000000000.0 log
";

pub const FIXED_COROTATED: LawPiece = LawPiece {
    name: "fixed_corotated",
    kind: PieceKind::Elastic,
    params: MODULI,
    body: "{
  let (U, S, V) = svd(F);
  let R = U * transpose(V);
  let J = det(F);
  return 2 * mu * (F - R) * transpose(F) + lam * J * (J - 1) * I
}",
};

pub const NEO_HOOKEAN: LawPiece = LawPiece {
    name: "neo_hookean",
    kind: PieceKind::Elastic,
    params: MODULI,
    body: "{
  return mu * (F * transpose(F) - I) + lam * log(det(F)) * I
}",
};

pub const STVK_HENCKY: LawPiece = LawPiece {
    name: "stvk_hencky",
    kind: PieceKind::Elastic,
    params: MODULI,
    body: "{
  let (U, S, V) = svd(F);
  let e = vlog(vmax(S, 0.0001));
  return U * diag(2 * mu * e) * transpose(U) + lam * vsum(e) * I
}",
};

pub const IDENTITY_PLASTIC: LawPiece = LawPiece {
    name: "identity_plastic",
    kind: PieceKind::Plastic,
    params: "",
    body: "{
  return F
}",
};

pub const VON_MISES: LawPiece = LawPiece {
    name: "von_mises",
    kind: PieceKind::Plastic,
    params: "param yield init=100.0 min=1.0 max=1000000.0 log\n",
    body: "{
  let (U, S, V) = svd(F);
  let e = vlog(vmax(S, 0.0001));
  let ed = dev(e);
  let n = vnorm(ed);
  let dg = n - yield / (2 * mu);
  return if dg <= 0 then F else U * diag(vexp(e - dg / n * ed)) * transpose(V)
}",
};

pub const DRUCKER_PRAGER: LawPiece = LawPiece {
    name: "drucker_prager",
    kind: PieceKind::Plastic,
    params: "param alpha init=0.2 min=0.01 max=2.0 log\n",
    body: "{
  let (U, S, V) = svd(F);
  let e = vlog(vmax(S, 0.0001));
  let tr = vsum(e);
  let ed = dev(e);
  let n = vnorm(ed);
  let dg = n + (3 * lam + 2 * mu) / (2 * mu) * tr * alpha;
  return if tr >= 0 then U * transpose(V) else if dg <= 0 then F else U * diag(vexp(e - dg / n * ed)) * transpose(V)
}",
};

pub fn elastic_pieces() -> [LawPiece; 3] {
    [FIXED_COROTATED, NEO_HOOKEAN, STVK_HENCKY]
}

pub fn plastic_pieces() -> [LawPiece; 3] {
    [IDENTITY_PLASTIC, VON_MISES, DRUCKER_PRAGER]
}

/// Source text for a law built from one elastic and one plastic piece.
pub fn compose_source(elastic: &LawPiece, plastic: &LawPiece) -> String {
    format!(
        "{}{}elastic {}\nplastic {}\n",
        elastic.params, plastic.params, elastic.body, plastic.body
    )
}

/// Catalog entry name paired with its full law source. Elastic entries use
/// identity plasticity; plastic entries use Hencky elasticity, except identity
/// plasticity which pairs with fixed corotated.
pub fn catalog_sources() -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    for e in elastic_pieces() {
        out.push((e.name, compose_source(&e, &IDENTITY_PLASTIC)));
    }
    for p in plastic_pieces() {
        let host = if p.name == IDENTITY_PLASTIC.name { FIXED_COROTATED } else { STVK_HENCKY };
        out.push((p.name, compose_source(&host, &p)));
    }
    out
}

pub fn builtin_catalog() -> Vec<(String, LawAst)> {
    catalog_sources()
        .into_iter()
        .map(|(name, src)| {
            let ast = parse_law(&src).unwrap_or_else(|e| panic!("catalog law {name}: {e}"));
            (name.to_string(), ast)
        })
        .collect()
}

pub fn catalog_law(name: &str) -> Option<LawAst> {
    builtin_catalog().into_iter().find(|(n, _)| n == name).map(|(_, a)| a)
}
