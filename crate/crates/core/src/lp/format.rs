use std::fmt::Write as _;

use super::{LpModel, Sense};

/// Renders a model in CPLEX LP text format for cross-checking with external solvers.
pub fn write_lp_format(model: &LpModel) -> String {
    let names: Vec<String> = model
        .variables()
        .iter()
        .enumerate()
        .map(|(j, v)| sanitize(&v.name, j))
        .collect();
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    write_terms(
        &mut out,
        model
            .objective()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, &c)| (j, c)),
        &names,
    );
    out.push_str("\nSubject To\n");
    for (i, con) in model.constraints().iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_terms(&mut out, con.coeffs.iter().map(|&(v, a)| (v.index(), a)), &names);
        let op = match con.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, " {op} {}", num(con.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables().iter().zip(&names) {
        let _ = match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => writeln!(out, " {name} free"),
            (true, false) => writeln!(out, " {name} >= {}", num(v.lower)),
            (false, true) => writeln!(out, " -inf <= {name} <= {}", num(v.upper)),
            (true, true) => writeln!(out, " {} <= {name} <= {}", num(v.lower), num(v.upper)),
        };
    }
    out.push_str("End\n");
    out
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>, names: &[String]) {
    let mut any = false;
    for (j, a) in terms {
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", num(a.abs()), names[j]);
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn sanitize(name: &str, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("x{index}_{cleaned}")
    } else {
        cleaned
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        let z = m.add_var("z", f64::NEG_INFINITY, f64::INFINITY);
        m.set_objective(x, -1.0);
        m.add_constraint(vec![(x, 1.0), (z, -2.5)], Sense::Le, 3.0);
        let text = write_lp_format(&m);
        assert!(text.starts_with("Minimize\n obj: - 1.0 x\n"));
        assert!(text.contains(" c0: + 1.0 x - 2.5 z <= 3.0\n"));
        assert!(text.contains(" 0.0 <= x <= 1.0\n"));
        assert!(text.contains(" z free\n"));
        assert!(text.ends_with("End\n"));
    }
}
