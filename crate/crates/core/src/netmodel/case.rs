//! Reader and writer for a MATPOWER-style (version 2) case-file subset.
//!
//! Supported statements are `mpc.baseMVA = <num>;` and the `mpc.bus`,
//! `mpc.gen` and `mpc.branch` matrices; other `mpc.<field> = ...` blocks
//! (e.g. `gencost`) are skipped. Any other statement is rejected so that
//! files relying on MATLAB post-processing (unit conversions) are not
//! silently misread. All values must already be in MW / MVAr / per-unit.
//!
//! Row layouts accept either the full MATPOWER column order or a compact
//! form:
//!
//! | table  | compact columns                        | MATPOWER columns used              |
//! |--------|----------------------------------------|------------------------------------|
//! | bus    | id type Pd Qd Gs Bs Vm                 | 1-6, Vm (8)                        |
//! | gen    | bus Pg Qg Vg                           | 1-3, Vg (6), status (8)            |
//! | branch | from to r x b rateA status             | 1-6, ratio (9), angle (10), status (11) |

use std::fmt::Write as _;
use std::path::Path;

use super::{Branch, Bus, BusKind, Generator, Network};
use crate::error::{Error, Result};

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    bus: Vec<(usize, Vec<f64>)>,
    gen: Vec<(usize, Vec<f64>)>,
    branch: Vec<(usize, Vec<f64>)>,
}

enum Block {
    Bus,
    Gen,
    Branch,
    Skip,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_row(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("invalid number '{t}'"))))
        .collect()
}

fn lex(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    let mut block: Option<Block> = None;

    for (idx, full) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut rest = strip_comment(full).trim();
        if rest.is_empty() {
            continue;
        }
        if block.is_none() {
            if rest.starts_with("function") {
                continue;
            }
            let Some(stmt) = rest.strip_prefix("mpc.") else {
                return Err(perr(lineno, format!("unsupported statement '{rest}'")));
            };
            let Some((name, value)) = stmt.split_once('=') else {
                return Err(perr(lineno, "expected an assignment"));
            };
            let name = name.trim();
            let value = value.trim();
            if let Some(after) = value.strip_prefix('[') {
                block = Some(match name {
                    "bus" => Block::Bus,
                    "gen" => Block::Gen,
                    "branch" => Block::Branch,
                    _ => Block::Skip,
                });
                rest = after.trim();
                if rest.is_empty() {
                    continue;
                }
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    let v = v
                        .parse::<f64>()
                        .map_err(|_| perr(lineno, format!("invalid baseMVA '{v}'")))?;
                    raw.base_mva = Some(v);
                }
                continue;
            }
        }

        // Inside a matrix block.
        let (data, closed) = match rest.find(']') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        for segment in data.split(';') {
            if segment.trim().is_empty() {
                continue;
            }
            match block {
                Some(Block::Bus) => raw.bus.push((lineno, parse_row(segment, lineno)?)),
                Some(Block::Gen) => raw.gen.push((lineno, parse_row(segment, lineno)?)),
                Some(Block::Branch) => raw.branch.push((lineno, parse_row(segment, lineno)?)),
                _ => {}
            }
        }
        if closed {
            block = None;
        }
    }
    if block.is_some() {
        return Err(perr(text.lines().count(), "unterminated matrix"));
    }
    Ok(raw)
}

fn as_index(v: f64, line: usize, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 0.0 {
        return Err(perr(line, format!("{what} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

/// Parses case-file text into a validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network> {
    let raw = lex(text)?;
    let base_mva = raw.base_mva.ok_or_else(|| perr(0, "missing mpc.baseMVA"))?;
    if raw.bus.is_empty() {
        return Err(perr(0, "missing mpc.bus"));
    }

    let mut buses = Vec::with_capacity(raw.bus.len());
    for (line, row) in &raw.bus {
        let vm_col = match row.len() {
            7 => 6,
            n if n >= 8 => 7,
            n => return Err(perr(*line, format!("bus row needs 7 or at least 8 columns, got {n}"))),
        };
        let kind = BusKind::from_code(as_index(row[1], *line, "bus type")? as u8)
            .ok_or_else(|| perr(*line, format!("unsupported bus type {}", row[1])))?;
        buses.push(Bus {
            id: as_index(row[0], *line, "bus id")?,
            kind,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
            vm: row[vm_col],
        });
    }
    let index_of = |id: usize, line: usize| -> Result<usize> {
        buses
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| perr(line, format!("reference to unknown bus {id}")))
    };
    {
        let mut ids: Vec<usize> = buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate bus id".into()));
        }
    }

    let mut generators = Vec::with_capacity(raw.gen.len());
    for (line, row) in &raw.gen {
        let (vg, status) = match row.len() {
            4 => (row[3], 1.0),
            n if n >= 6 => (row[5], if n >= 8 { row[7] } else { 1.0 }),
            n => return Err(perr(*line, format!("gen row needs 4 or at least 6 columns, got {n}"))),
        };
        generators.push(Generator {
            bus: index_of(as_index(row[0], *line, "gen bus")?, *line)?,
            pg: row[1],
            qg: row[2],
            vg,
            in_service: status > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(raw.branch.len());
    for (line, row) in &raw.branch {
        let status = match row.len() {
            7 => row[6],
            n if n >= 11 => {
                let (ratio, angle) = (row[8], row[9]);
                if !(ratio == 0.0 || ratio == 1.0) || angle != 0.0 {
                    return Err(perr(*line, "tap-changing and phase-shifting transformers are not supported"));
                }
                row[10]
            }
            n => return Err(perr(*line, format!("branch row needs 7 or at least 11 columns, got {n}"))),
        };
        let a = index_of(as_index(row[0], *line, "branch from")?, *line)?;
        let b = index_of(as_index(row[1], *line, "branch to")?, *line)?;
        if a == b {
            return Err(Error::Validation(format!("branch on line {line} is a self-loop")));
        }
        let (from, to) = if a < b { (a, b) } else { (b, a) };
        branches.push(Branch {
            from,
            to,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            rate_a: row[5],
            in_service: status > 0.0,
            controllable: false,
            gamma_min: 0.0,
            gamma_max: 1.0,
        });
    }

    Network::new(base_mva, buses, generators, branches)
}

/// Reads and parses a case file from disk.
pub fn read_case(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

/// Serializes a network in the full MATPOWER column layout.
///
/// Controllability is not part of the case format; it lives in the sidecar.
pub fn write_case(net: &Network, name: &str) -> String {
    let mut out = String::new();
    let buses = net.buses();
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", net.base_mva);
    let _ = writeln!(out, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(out, "mpc.bus = [");
    for b in buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t0\t0\t1\t0\t0;",
            b.id,
            b.kind.code(),
            b.pd,
            b.qd,
            b.gs,
            b.bs,
            b.vm
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(out, "mpc.gen = [");
    for g in net.generators() {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t0\t0;",
            buses[g.bus].id,
            g.pg,
            g.qg,
            g.vg,
            net.base_mva,
            u8::from(g.in_service)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax");
    let _ = writeln!(out, "mpc.branch = [");
    for br in net.branches() {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t{}\t-360\t360;",
            buses[br.from].id,
            buses[br.to].id,
            br.r,
            br.x,
            br.b_charging,
            br.rate_a,
            u8::from(br.in_service)
        );
    }
    let _ = writeln!(out, "];");
    out
}
