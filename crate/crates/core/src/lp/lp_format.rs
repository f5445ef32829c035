//! CPLEX-style LP text export.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::model::{Direction, LinearModel, Param, Sense, VarKind};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.()".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn param_name(p: Param) -> String {
    match p {
        Param::Commit { t, unit } => format!("x_hat(t{t},g{unit})"),
        Param::Wind { t } => format!("w(t{t})"),
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    let mut first = true;
    let mut col = 0;
    for (name, c) in terms {
        let sign = if c < 0.0 { "-" } else { "+" };
        let piece = if first && c >= 0.0 {
            format!(" {} {}", fmt_num(c.abs()), name)
        } else {
            format!(" {sign} {} {}", fmt_num(c.abs()), name)
        };
        col += piece.len();
        if col > 200 {
            out.push_str("\n   ");
            col = piece.len();
        }
        out.push_str(&piece);
        first = false;
    }
    if first {
        out.push_str(" 0");
    }
}

/// Renders the model as LP text. Rows that still carry parameters list them
/// in a comment and are written with the parameters at zero.
pub fn to_lp_string(model: &LinearModel) -> String {
    let mut out = String::new();
    let names: Vec<String> = model.vars.iter().map(|v| sanitize(&v.name)).collect();
    let _ = writeln!(out, "\\ model: {}", model.name);
    if model.obj_constant != 0.0 {
        let _ = writeln!(out, "\\ objective constant: {}", model.obj_constant);
    }
    out.push_str(match model.direction {
        Direction::Minimize => "Minimize\n",
        Direction::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(
        &mut out,
        model.objective.iter().map(|(v, c)| (names[v.0].clone(), *c)),
    );
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        if !row.params.is_empty() {
            out.push_str("\\ params:");
            for (p, c) in &row.params {
                let _ = write!(out, " {c:+} {}", param_name(*p));
            }
            out.push('\n');
        }
        let _ = write!(out, " {}:", sanitize(&row.tag));
        write_terms(
            &mut out,
            row.terms.iter().map(|(v, c)| (names[v.0].clone(), *c)),
        );
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {sense} {}", fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (def, name) in model.vars.iter().zip(&names) {
        if def.kind == VarKind::Binary {
            continue;
        }
        match (def.lb.is_finite(), def.ub.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(def.lb), fmt_num(def.ub));
            }
            (true, false) => {
                if def.lb != 0.0 {
                    let _ = writeln!(out, " {name} >= {}", fmt_num(def.lb));
                }
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", fmt_num(def.ub));
            }
        }
    }
    let binaries: Vec<&String> = model
        .vars
        .iter()
        .zip(&names)
        .filter(|(d, _)| d.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            out.push(' ');
            out.push_str(
                &chunk
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &LinearModel, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, to_lp_string(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::model::RowFamily;

    #[test]
    fn renders_sections() {
        let mut m = LinearModel::new("demo", Direction::Minimize);
        let x = m.binary("x[0]");
        let p = m.continuous("p", 0.0, f64::INFINITY);
        let q = m.continuous("q", -1.0, 2.0);
        m.add_objective(p, 3.0);
        m.add_objective(x, -1.5);
        m.add_row(
            "cap",
            RowFamily::MaxOutput,
            vec![(p, 1.0), (x, -10.0)],
            vec![],
            Sense::Le,
            0.0,
        );
        m.add_row("lim", RowFamily::Bound, vec![(q, 1.0)], vec![], Sense::Ge, -0.5);
        let text = to_lp_string(&m);
        assert!(text.contains("Minimize\n obj: 3 p - 1.5 x_0_\n"), "{text}");
        assert!(text.contains(" cap: - 10 x_0_ + 1 p <= 0\n"), "{text}");
        assert!(text.contains(" -1 <= q <= 2\n"));
        assert!(text.contains("Binaries\n x_0_\n"));
        assert!(text.ends_with("End\n"));
    }
}
