use rhai::{ASTNode, Engine, Expr, Stmt, AST};
use std::collections::{BTreeMap, BTreeSet};

use super::{LogicUnit, Rejection};

/// Language keywords that parse as calls but are not registered functions.
const KEYWORD_CALLS: &[&str] = &[
    "Fn",
    "call",
    "curry",
    "is_def_fn",
    "is_def_var",
    "is_shared",
    "type_of",
    "print",
    "debug",
    "eval",
];

pub(super) fn native_names(engine: &Engine) -> BTreeSet<String> {
    engine
        .collect_fn_metadata(None, |info| Some(info.metadata.name.to_string()), true)
        .into_iter()
        .collect()
}

/// Compiles a full unit set into one program.
///
/// Each unit must define a function with its own name (with the role's
/// arity), no function may be defined by two units, and every plain call must
/// resolve to a script function or a host function.
pub(super) fn compile_units(
    engine: &Engine,
    natives: &BTreeSet<String>,
    units: &BTreeMap<String, LogicUnit>,
) -> Result<AST, (Rejection, String)> {
    let mut merged = AST::empty();
    let mut owners: BTreeMap<String, String> = BTreeMap::new();
    let mut compiled = Vec::with_capacity(units.len());
    for unit in units.values() {
        if unit.source.trim().is_empty() {
            return Err((
                Rejection::EmptySource,
                format!("unit `{}` has empty source", unit.name),
            ));
        }
        let ast = engine.compile(&unit.source).map_err(|e| {
            (
                Rejection::RejectedCompile,
                format!("unit `{}`: {e}", unit.name),
            )
        })?;
        let fns: Vec<(String, usize)> = ast
            .iter_functions()
            .map(|f| (f.name.to_string(), f.params.len()))
            .collect();
        let entry = fns.iter().find(|(n, _)| *n == unit.name);
        match (entry, unit.role_tag.arity()) {
            (None, _) => {
                return Err((
                    Rejection::RejectedValidation,
                    format!("unit `{0}` must define fn {0}", unit.name),
                ))
            }
            (Some((_, got)), Some(want)) if *got != want => {
                return Err((
                    Rejection::RejectedValidation,
                    format!(
                        "fn {} takes {got} parameters, {} units take {want}",
                        unit.name, unit.role_tag
                    ),
                ))
            }
            _ => {}
        }
        for (name, _) in fns.iter().filter(|(n, _)| !n.starts_with("anon$")) {
            if let Some(other) = owners.insert(name.clone(), unit.name.clone()) {
                if other != unit.name {
                    return Err((
                        Rejection::RejectedValidation,
                        format!("fn {name} is defined by both `{other}` and `{}`", unit.name),
                    ));
                }
            }
        }
        compiled.push((unit.name.as_str(), ast));
    }
    for (unit, ast) in &compiled {
        if let Some(name) = unresolved_call(ast, &owners, natives) {
            return Err((
                Rejection::RejectedCompile,
                format!("unit `{unit}` calls undefined function `{name}`"),
            ));
        }
        merged = merged.merge(ast);
    }
    Ok(merged)
}

fn unresolved_call(
    ast: &AST,
    script: &BTreeMap<String, String>,
    natives: &BTreeSet<String>,
) -> Option<String> {
    let mut missing = None;
    ast.walk(&mut |path: &[ASTNode]| {
        let name = match path.last() {
            Some(ASTNode::Expr(Expr::FnCall(f, _)))
                if f.op_token.is_none() && f.namespace.is_empty() =>
            {
                f.name.as_str()
            }
            Some(ASTNode::Stmt(Stmt::FnCall(f, _)))
                if f.op_token.is_none() && f.namespace.is_empty() =>
            {
                f.name.as_str()
            }
            Some(ASTNode::Expr(Expr::MethodCall(f, _))) => f.name.as_str(),
            _ => return true,
        };
        if script.contains_key(name) || natives.contains(name) || KEYWORD_CALLS.contains(&name) {
            true
        } else {
            missing = Some(name.to_string());
            false
        }
    });
    missing
}
