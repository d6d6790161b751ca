//! TSPLIB / CVRPLIB keyword format, `EUC_2D` only.

use std::fmt::Write as _;

use super::{InstanceError, Metric, ProblemKind, Provenance, RawNodes, RoutingInstance};

/// Upper bound on DIMENSION; larger headers are rejected before allocation.
const MAX_DIMENSION: usize = 1_000_000;

fn perr(line: usize, message: impl Into<String>) -> InstanceError {
    InstanceError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct Header {
    name: Option<String>,
    kind: Option<ProblemKind>,
    dimension: Option<usize>,
    edge_weight: Option<String>,
    capacity: Option<f64>,
}

/// Splits `KEY : VALUE`, `KEY: VALUE` or `KEY VALUE`.
fn split_keyword(line: &str) -> (&str, &str) {
    match line.find(':') {
        Some(i) => (line[..i].trim(), line[i + 1..].trim()),
        None => match line.find(char::is_whitespace) {
            Some(i) => (line[..i].trim(), line[i..].trim()),
            None => (line, ""),
        },
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, InstanceError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(line, format!("expected {what}")))
}

fn finite(v: f64, line: usize) -> Result<f64, InstanceError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(perr(line, "non-finite number"))
    }
}

/// Reads `dim` `id value...` rows into `slots` (indexed by id − 1).
fn read_rows<'a, I, const W: usize>(
    lines: &mut std::iter::Peekable<I>,
    dim: usize,
    section: &str,
    header_line: usize,
    slots: &mut [Option<[f64; W]>],
) -> Result<(), InstanceError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let mut last_line = header_line;
    for k in 0..dim {
        let Some((no, raw)) = lines.next() else {
            return Err(perr(
                last_line + 1,
                format!("{section}: expected {dim} rows, input ended after {k}"),
            ));
        };
        last_line = no;
        let mut toks = raw.split_whitespace();
        let id_tok = toks.next();
        let id: usize = match id_tok.and_then(|t| t.parse().ok()) {
            Some(id) => id,
            None => {
                return Err(perr(
                    no,
                    format!("{section}: expected {dim} rows, found `{}` after {k}", raw.trim()),
                ))
            }
        };
        if id == 0 || id > dim {
            return Err(perr(no, format!("{section}: node id {id} outside 1..={dim}")));
        }
        let mut vals = [0.0; W];
        for v in vals.iter_mut() {
            *v = finite(parse_num(toks.next(), no, "a number")?, no)?;
        }
        if toks.next().is_some() {
            return Err(perr(no, format!("{section}: trailing tokens")));
        }
        if slots[id - 1].replace(vals).is_some() {
            return Err(perr(no, format!("{section}: node id {id} repeated")));
        }
    }
    Ok(())
}

/// Parses a TSPLIB (`TYPE: TSP`) or CVRPLIB (`TYPE: CVRP`) document.
///
/// Coordinates are normalized into the unit square with one common scale
/// factor; the raw values are kept for `EUC_2D` integer-rounded costing.
pub fn parse_instance_file(text: &str) -> Result<RoutingInstance, InstanceError> {
    let mut header = Header::default();
    let mut coords: Option<Vec<Option<[f64; 2]>>> = None;
    let mut demands: Option<Vec<Option<[f64; 1]>>> = None;
    let mut depots: Option<Vec<usize>> = None;

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    while let Some((no, line)) = lines.next() {
        let (key, value) = split_keyword(line.trim());
        let key_upper = key.to_ascii_uppercase();
        match key_upper.as_str() {
            "EOF" => break,
            "NAME" => header.name = Some(value.to_string()),
            "COMMENT" => {}
            "TYPE" => {
                header.kind = Some(match value.to_ascii_uppercase().as_str() {
                    "TSP" => ProblemKind::Tsp,
                    "CVRP" => ProblemKind::Cvrp,
                    other => return Err(InstanceError::Unsupported(format!("TYPE {other}"))),
                })
            }
            "DIMENSION" => {
                let d: usize = parse_num(Some(value), no, "an integer DIMENSION")?;
                if !(1..=MAX_DIMENSION).contains(&d) {
                    return Err(perr(no, format!("DIMENSION {d} out of range")));
                }
                header.dimension = Some(d);
            }
            "EDGE_WEIGHT_TYPE" => {
                let v = value.to_ascii_uppercase();
                if v != "EUC_2D" {
                    return Err(InstanceError::Unsupported(format!("EDGE_WEIGHT_TYPE {v}")));
                }
                header.edge_weight = Some(v);
            }
            "CAPACITY" => {
                let c: f64 = finite(parse_num(Some(value), no, "a numeric CAPACITY")?, no)?;
                if c <= 0.0 {
                    return Err(perr(no, "CAPACITY must be positive"));
                }
                header.capacity = Some(c);
            }
            "NODE_COORD_SECTION" => {
                let dim = header.dimension.ok_or_else(|| perr(no, "NODE_COORD_SECTION before DIMENSION"))?;
                let mut slots = vec![None; dim];
                read_rows(&mut lines, dim, "NODE_COORD_SECTION", no, &mut slots)?;
                coords = Some(slots);
            }
            "DEMAND_SECTION" => {
                let dim = header.dimension.ok_or_else(|| perr(no, "DEMAND_SECTION before DIMENSION"))?;
                let mut slots = vec![None; dim];
                read_rows(&mut lines, dim, "DEMAND_SECTION", no, &mut slots)?;
                demands = Some(slots);
            }
            "DEPOT_SECTION" => {
                let mut ids = Vec::new();
                loop {
                    let Some((dno, dline)) = lines.next() else {
                        return Err(perr(no, "DEPOT_SECTION not terminated by -1"));
                    };
                    let v: i64 = parse_num(dline.split_whitespace().next(), dno, "a depot id")?;
                    if v == -1 {
                        break;
                    }
                    let dim = header.dimension.unwrap_or(0);
                    if v < 1 || v as usize > dim {
                        return Err(perr(dno, format!("depot id {v} outside 1..={dim}")));
                    }
                    ids.push(v as usize);
                }
                depots = Some(ids);
            }
            k if k.ends_with("_SECTION") => {
                return Err(InstanceError::Unsupported(k.to_string()));
            }
            _ => {}
        }
    }

    let kind = header.kind.ok_or_else(|| InstanceError::Unsupported("missing TYPE".into()))?;
    if header.edge_weight.is_none() {
        return Err(InstanceError::Unsupported("missing EDGE_WEIGHT_TYPE".into()));
    }
    let dim = header.dimension.ok_or_else(|| perr(0, "missing DIMENSION"))?;
    let mut raw_coords: Vec<[f64; 2]> = coords
        .ok_or_else(|| perr(0, "missing NODE_COORD_SECTION"))?
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| perr(0, format!("node {} has no coordinates", i + 1))))
        .collect::<Result<_, _>>()?;
    if dim < 2 {
        return Err(InstanceError::Domain(format!("DIMENSION {dim} is below 2")));
    }

    let (mut raw_demands, capacity) = match kind {
        ProblemKind::Tsp => (Vec::new(), 0.0),
        ProblemKind::Cvrp => {
            let cap = header.capacity.ok_or_else(|| perr(0, "CVRP without CAPACITY"))?;
            let d: Vec<f64> = demands
                .ok_or_else(|| perr(0, "CVRP without DEMAND_SECTION"))?
                .into_iter()
                .enumerate()
                .map(|(i, d)| d.map(|[v]| v).ok_or_else(|| perr(0, format!("node {} has no demand", i + 1))))
                .collect::<Result<_, _>>()?;
            if d.iter().any(|v| *v < 0.0 || *v > cap) {
                return Err(InstanceError::Domain("demand outside [0, CAPACITY]".into()));
            }
            (d, cap)
        }
    };

    if kind == ProblemKind::Cvrp {
        let depots = depots.ok_or_else(|| perr(0, "CVRP without DEPOT_SECTION"))?;
        let depot = match depots.as_slice() {
            [d] => d - 1,
            _ => {
                return Err(InstanceError::Unsupported(format!(
                    "{} depots (exactly one supported)",
                    depots.len()
                )))
            }
        };
        if raw_demands[depot] != 0.0 {
            return Err(InstanceError::Domain("depot demand must be 0".into()));
        }
        raw_coords.swap(0, depot);
        raw_demands.swap(0, depot);
    }

    let (lo, scale) = bounding_square(&raw_coords);
    let coords = raw_coords
        .iter()
        .map(|p| {
            if scale > 0.0 {
                [
                    ((p[0] - lo[0]) / scale).clamp(0.0, 1.0),
                    ((p[1] - lo[1]) / scale).clamp(0.0, 1.0),
                ]
            } else {
                [0.5, 0.5]
            }
        })
        .collect();

    let inst = RoutingInstance {
        id: header.name.filter(|n| !n.is_empty()).unwrap_or_else(|| "instance".into()),
        kind,
        coords,
        demands: raw_demands.iter().map(|d| d / capacity).collect(),
        capacity: 1.0,
        metric: Metric::TsplibRounded,
        raw: RawNodes {
            coords: raw_coords,
            demands: raw_demands,
            capacity,
            offset: lo,
            scale,
        },
        provenance: Provenance::File { path: String::new() },
    };
    inst.check()?;
    Ok(inst)
}

fn bounding_square(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, (hi[0] - lo[0]).max(hi[1] - lo[1]))
}

/// Writes `inst` in keyword format using its raw coordinates. `f64` values
/// are printed in shortest round-trip form, so parsing restores them exactly.
pub fn serialize_instance(inst: &RoutingInstance) -> String {
    let mut s = String::new();
    let n = inst.scale();
    let _ = writeln!(s, "NAME : {}", inst.id);
    let _ = writeln!(s, "TYPE : {}", inst.kind.as_str().to_ascii_uppercase());
    let _ = writeln!(s, "DIMENSION : {n}");
    let _ = writeln!(s, "EDGE_WEIGHT_TYPE : EUC_2D");
    if inst.kind == ProblemKind::Cvrp {
        let _ = writeln!(s, "CAPACITY : {}", inst.raw.capacity);
    }
    s.push_str("NODE_COORD_SECTION\n");
    for (i, p) in inst.raw.coords.iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?}", i + 1, p[0], p[1]);
    }
    if inst.kind == ProblemKind::Cvrp {
        s.push_str("DEMAND_SECTION\n");
        for (i, d) in inst.raw.demands.iter().enumerate() {
            let _ = writeln!(s, "{} {}", i + 1, d);
        }
        s.push_str("DEPOT_SECTION\n1\n-1\n");
    }
    s.push_str("EOF\n");
    s
}
