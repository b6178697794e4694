//! Plain-text deformation files.
//!
//! ```text
//! twowell-deformation 1
//! n 8
//! shape + 4 1 0 0 clamped
//! a 1.4142135623730951
//! lambda 0.5
//! c 0 0
//! nodes 357
//! -32 16 -45.25 22.6
//! ...
//! ```
//!
//! Node lines are `i j ux uy`, ghosts included. Floats use shortest round-trip
//! formatting, so write/read is bit-exact.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::energy::{Sign, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::{Constraint, Deformation, Ends, LatticeDomain, Role, Shape};
use crate::linalg::Vec2;

const MAGIC: &str = "twowell-deformation 1";

pub fn write_deformation(u: &Deformation, wells: &WellSystem) -> String {
    let dom = u.domain();
    let s = dom.shape();
    let mut out = String::new();
    let c = u.translation();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "n {}", dom.n()).unwrap();
    let ends = match s.ends {
        Ends::Clamped => "clamped",
        Ends::Free => "free",
    };
    writeln!(out, "shape {} {} {} {} {} {}", s.sign.as_char(), s.d, s.l, s.center[0], s.center[1], ends).unwrap();
    writeln!(out, "a {}", wells.a).unwrap();
    writeln!(out, "lambda {}", u.lambda()).unwrap();
    writeln!(out, "c {} {}", c.x, c.y).unwrap();
    writeln!(out, "nodes {}", dom.num_nodes()).unwrap();
    for (k, &(i, j)) in dom.nodes().iter().enumerate() {
        let p = u.position(k);
        writeln!(out, "{i} {j} {} {}", p.x, p.y).unwrap();
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

fn keyed<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (no, l) = lines.next().ok_or_else(|| parse_err(0, format!("unexpected end of file, expected `{key}`")))?;
    let mut toks = l.split_whitespace();
    if toks.next() != Some(key) {
        return Err(parse_err(no, format!("expected `{key}`")));
    }
    Ok((no, toks.collect()))
}

/// Parse a deformation file. Boundary constraints of clamped domains are restored
/// from `a`, `λ` and `c`; a boundary node off its prescribed value is a structural error.
pub fn read_deformation(text: &str) -> Result<(Deformation, WellSystem)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((no, _)) => return Err(parse_err(no, "missing header line")),
        None => return Err(parse_err(0, "empty file")),
    }
    let (no, t) = keyed(&mut lines, "n")?;
    let n: u32 = num(t.first().copied(), no, "n")?;
    let (no, t) = keyed(&mut lines, "shape")?;
    if t.len() != 6 {
        return Err(parse_err(no, "shape needs: sign d l cx cy ends"));
    }
    let sign = Sign::parse(t[0]).ok_or_else(|| parse_err(no, "bad sign"))?;
    let d: f64 = num(Some(t[1]), no, "d")?;
    let l: f64 = num(Some(t[2]), no, "l")?;
    let cx: f64 = num(Some(t[3]), no, "center x")?;
    let cy: f64 = num(Some(t[4]), no, "center y")?;
    let ends = match t[5] {
        "clamped" => Ends::Clamped,
        "free" => Ends::Free,
        _ => return Err(parse_err(no, "ends must be `clamped` or `free`")),
    };
    let (no, t) = keyed(&mut lines, "a")?;
    let a: f64 = num(t.first().copied(), no, "a")?;
    let (no, t) = keyed(&mut lines, "lambda")?;
    let lambda: f64 = num(t.first().copied(), no, "lambda")?;
    let (no, t) = keyed(&mut lines, "c")?;
    let c = Vec2::new(num(t.first().copied(), no, "c.x")?, num(t.get(1).copied(), no, "c.y")?);
    let (no, t) = keyed(&mut lines, "nodes")?;
    let count: usize = num(t.first().copied(), no, "node count")?;

    let wells = WellSystem::new(a)?;
    let shape = Shape { d, l, sign, center: [cx, cy], ends };
    let dom = Arc::new(LatticeDomain::new(shape, n)?);
    if count != dom.num_nodes() {
        return Err(Error::Structural(format!("file lists {count} nodes, domain has {}", dom.num_nodes())));
    }
    let mut positions: Vec<Option<Vec2>> = vec![None; dom.num_nodes()];
    for (no, l) in lines {
        let mut t = l.split_whitespace();
        let i: i32 = num(t.next(), no, "i")?;
        let j: i32 = num(t.next(), no, "j")?;
        let x: f64 = num(t.next(), no, "ux")?;
        let y: f64 = num(t.next(), no, "uy")?;
        if t.next().is_some() {
            return Err(parse_err(no, "trailing tokens"));
        }
        let k = dom.index_of(i, j);
        if k == crate::lattice::NONE {
            return Err(Error::Structural(format!("line {no}: node ({i}, {j}) is not in the domain")));
        }
        if positions[k as usize].replace(Vec2::new(x, y)).is_some() {
            return Err(Error::Structural(format!("line {no}: duplicate node ({i}, {j})")));
        }
    }
    let positions = positions
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.ok_or_else(|| Error::Structural(format!("missing position for node {:?}", dom.nodes()[k]))))
        .collect::<Result<Vec<_>>>()?;
    let mut u = Deformation::from_positions(dom.clone(), positions)?;
    if ends == Ends::Clamped {
        let stored = u.positions().to_vec();
        u.apply_boundary(&wells, lambda, c)?;
        for k in 0..dom.num_nodes() {
            if u.constraints()[k] != Constraint::Free && (u.position(k) - stored[k]).norm() > 1e-9 * (1.0 + stored[k].norm()) {
                let side = if matches!(dom.role(k), Role::LeftBc | Role::LeftGhost) { "left" } else { "right" };
                return Err(Error::Structural(format!(
                    "node {:?} does not match the {side} boundary data",
                    dom.nodes()[k]
                )));
            }
        }
    } else {
        u.set_lambda(lambda);
        u.set_translation(c);
    }
    Ok((u, wells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat2;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bit_exact() {
        let wells = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut u = Deformation::from_fn(dom, |x| {
            wells.f_lambda(0.3) * x + Vec2::new(rng.random::<f64>() * 1e-3, rng.random::<f64>() / 3.0)
        });
        u.apply_boundary(&wells, 0.3, Vec2::new(0.1, 1.0 / 3.0)).unwrap();
        let text = write_deformation(&u, &wells);
        let (v, w2) = read_deformation(&text).unwrap();
        assert_eq!(w2.a, wells.a);
        assert_eq!(v.translation(), u.translation());
        assert_eq!(v.lambda(), u.lambda());
        for k in 0..u.positions().len() {
            assert_eq!(v.position(k).x.to_bits(), u.position(k).x.to_bits());
            assert_eq!(v.position(k).y.to_bits(), u.position(k).y.to_bits());
        }
        assert_eq!(v.constraints(), u.constraints());
    }

    #[test]
    fn missing_node_is_structural() {
        let wells = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(2).unwrap());
        let u = Deformation::affine(dom, Mat2::identity(), Vec2::zeros());
        let text = write_deformation(&u, &wells);
        let cut: Vec<&str> = text.lines().collect();
        let truncated = cut[..cut.len() - 1].join("\n");
        assert!(matches!(read_deformation(&truncated), Err(Error::Structural(_))));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(read_deformation("hello"), Err(Error::Parse { .. })));
        let bad = "twowell-deformation 1\nn eight\n";
        assert!(matches!(read_deformation(bad), Err(Error::Parse { line: 2, .. })));
    }
}
