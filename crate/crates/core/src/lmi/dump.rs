//! Plain-text dump of a conic program for debugging with external solvers.
//!
//! Format: the header `SDPBLOCKS v1`, then one line per nonzero upper
//! triangle entry of every coefficient matrix,
//! `<constraint> <row> <col> <coefficient> <variable>`, where the variable
//! is a coordinate label such as `P(0,1)`, `param:R_inv(0,0)` or `CONST`.
//! Margins are listed as `MARGIN` lines, equalities as `EQ` lines and the
//! objective as `OBJ` lines.

use std::fmt::Write;

use super::program::{ConicProgram, Sense};

fn param_label(prog: &ConicProgram, coord: usize) -> String {
    for p in &prog.params {
        if (p.offset..p.offset + p.kind.len()).contains(&coord) {
            let (i, j) = p.kind.entry(coord - p.offset);
            return format!("param:{}({i},{j})", p.name);
        }
    }
    format!("param:{coord}")
}

fn token(name: &str) -> String {
    name.replace(char::is_whitespace, "_")
}

pub fn dump_sdpblocks(prog: &ConicProgram) -> String {
    let mut out = String::from("SDPBLOCKS v1\n");
    let num = |v: f64| format!("{v:e}");
    for c in &prog.psd {
        let name = token(&c.name);
        let mut emit = |m: &crate::Mat, var: &str| {
            for i in 0..m.nrows() {
                for j in i..m.ncols() {
                    if m[(i, j)] != 0.0 {
                        let _ = writeln!(out, "{name} {i} {j} {} {var}", num(m[(i, j)]));
                    }
                }
            }
        };
        emit(&c.map.constant, "CONST");
        for (k, f) in &c.map.var_terms {
            emit(f, &token(&prog.coord_label(*k)));
        }
        for (k, h) in &c.map.param_terms {
            emit(h, &param_label(prog, *k));
        }
        if c.margin != 0.0 {
            let _ = writeln!(out, "MARGIN {name} {}", num(c.margin));
        }
    }
    for e in &prog.eqs {
        let name = token(&e.name);
        for (k, a) in &e.var_terms {
            let _ = writeln!(out, "EQ {name} {} {}", num(*a), token(&prog.coord_label(*k)));
        }
        for (k, a) in &e.param_terms {
            let _ = writeln!(out, "EQ {name} {} {}", num(*a), param_label(prog, *k));
        }
        if e.constant != 0.0 {
            let _ = writeln!(out, "EQ {name} {} CONST", num(e.constant));
        }
    }
    let sense = match prog.objective.sense {
        Sense::Minimize => "min",
        Sense::Maximize => "max",
    };
    let o = &prog.objective;
    let _ = writeln!(out, "OBJ {sense} {} CONST", num(o.constant));
    for (k, v) in &o.linear {
        let _ = writeln!(out, "OBJ {sense} {} {}", num(*v), token(&prog.coord_label(*k)));
    }
    for (k, v) in &o.param_linear {
        let _ = writeln!(out, "OBJ {sense} {} {}", num(*v), param_label(prog, *k));
    }
    for (i, k, v) in &o.bilinear {
        let _ = writeln!(
            out,
            "OBJ {sense} {} {}*{}",
            num(*v),
            token(&prog.coord_label(*i)),
            token(&prog.coord_label(*k))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::program::{BlockKind, ProgramBuilder};
    use crate::Mat;

    #[test]
    fn dump_lists_nonzeros() {
        let mut b = ProgramBuilder::new("toy", Sense::Minimize);
        let p = b.var("P", BlockKind::Sym(2));
        b.psd("P>=I", "Z", 0.0, |e| e.var(p) - Mat::identity(2, 2)).unwrap();
        b.objective(|e| e.var(p).trace()).unwrap();
        let text = dump_sdpblocks(&b.build());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "SDPBLOCKS v1");
        assert!(lines.contains(&"P>=I 0 0 -1e0 CONST"));
        assert!(lines.contains(&"P>=I 0 1 1e0 P(0,1)"));
        assert!(lines.contains(&"P>=I 1 1 1e0 P(1,1)"));
        // Two constants, three coordinates, one objective constant, two traces.
        assert_eq!(lines.len(), 1 + 2 + 3 + 1 + 2);
        for l in &lines[1..6] {
            assert_eq!(l.split_whitespace().count(), 5);
        }
    }
}
