//! Line-oriented network description format.
//!
//! ```text
//! # comment
//! [intersection]
//! id = I0_0
//! control = signalized        # or `unsignalized`
//! zone = Z0_0
//!
//! [lane]
//! id = L1
//! length = 150                # meters
//! speed_limit = 13.9          # m/s
//! downstream = I0_0           # optional; omitted for exit lanes
//!
//! [movement]
//! id = M1
//! from = L1
//! to = L2
//! turn = left                 # left | straight | right
//!
//! [conflict]
//! movement = M1
//! with = M4 M7                # whitespace-separated; must be mirrored
//!
//! [phase]                     # phases of one intersection, in cycle order
//! intersection = I0_0
//! duration = 15               # seconds
//! movements = M1 M2           # may be empty (all-red)
//!
//! [route]
//! id = R1
//! lanes = L1 L2 L9
//! weight = 2                  # optional, default 1
//! ```
//!
//! Every section is a flat record; keys may appear in any order but only
//! once. Ids are ASCII identifiers (`[A-Za-z0-9_.-]+`).

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{
    ConflictSpec, IntersectionSpec, LaneSpec, MovementSpec, Network, NetworkSpec, PhaseSpec,
    RouteSpec, Turn,
};
use crate::error::NetworkError;

struct Field {
    value: String,
    line: usize,
    column: usize,
}

struct Record {
    kind: String,
    line: usize,
    fields: HashMap<String, Field>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

impl Record {
    fn take(&mut self, key: &str) -> Result<Field, NetworkError> {
        self.fields.remove(key).ok_or_else(|| {
            syntax(
                self.line,
                1,
                format!("[{}] section is missing key `{key}`", self.kind),
            )
        })
    }

    fn take_opt(&mut self, key: &str) -> Option<Field> {
        self.fields.remove(key)
    }

    fn finish(self) -> Result<(), NetworkError> {
        // Report the earliest unknown key so the error is deterministic.
        match self.fields.into_iter().min_by_key(|(_, f)| (f.line, f.column)) {
            Some((k, f)) => Err(syntax(
                f.line,
                1,
                format!("unknown key `{k}` in [{}] section", self.kind),
            )),
            None => Ok(()),
        }
    }
}

fn number(f: &Field, key: &str) -> Result<f64, NetworkError> {
    f.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(f.line, f.column, format!("`{key}` expects a number, got `{}`", f.value)))
}

fn list(f: &Field) -> Vec<String> {
    f.value.split_whitespace().map(str::to_string).collect()
}

fn single(f: &Field, key: &str) -> Result<String, NetworkError> {
    let mut parts = f.value.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some(v), None) => Ok(v.to_string()),
        _ => Err(syntax(
            f.line,
            f.column,
            format!("`{key}` expects a single identifier, got `{}`", f.value),
        )),
    }
}

fn tokenize(text: &str) -> Result<Vec<Record>, NetworkError> {
    let mut records: Vec<Record> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(syntax(line_no, indent + 1, "unterminated section header"));
            };
            let name = name.trim();
            match name {
                "intersection" | "lane" | "movement" | "conflict" | "phase" | "route" => {}
                other => {
                    return Err(syntax(
                        line_no,
                        indent + 2,
                        format!("unknown section `[{other}]`"),
                    ))
                }
            }
            records.push(Record {
                kind: name.to_string(),
                line: line_no,
                fields: HashMap::new(),
            });
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(syntax(line_no, indent + 1, "expected `key = value`"));
        };
        let key = content[..eq].trim();
        if key.is_empty() {
            return Err(syntax(line_no, indent + 1, "empty key"));
        }
        let after = &content[eq + 1..];
        let value_offset = eq + 1 + (after.len() - after.trim_start().len());
        let value = after.trim().to_string();
        let Some(record) = records.last_mut() else {
            return Err(syntax(line_no, indent + 1, "key outside of any section"));
        };
        let column = raw[..value_offset].chars().count() + 1;
        if record.fields.contains_key(key) {
            return Err(syntax(line_no, indent + 1, format!("duplicate key `{key}`")));
        }
        record.fields.insert(
            key.to_string(),
            Field {
                value,
                line: line_no,
                column,
            },
        );
    }
    Ok(records)
}

/// Parses a network description document and validates it.
pub fn parse_network(text: &str) -> Result<Network, NetworkError> {
    let mut spec = NetworkSpec::default();
    for mut rec in tokenize(text)? {
        match rec.kind.as_str() {
            "intersection" => {
                let id = single(&rec.take("id")?, "id")?;
                let control = rec.take("control")?;
                let signalized = match control.value.as_str() {
                    "signalized" => true,
                    "unsignalized" => false,
                    other => {
                        return Err(syntax(
                            control.line,
                            control.column,
                            format!("control must be `signalized` or `unsignalized`, got `{other}`"),
                        ))
                    }
                };
                let zone = single(&rec.take("zone")?, "zone")?;
                spec.intersections.push(IntersectionSpec {
                    id,
                    signalized,
                    zone,
                });
            }
            "lane" => {
                let id = single(&rec.take("id")?, "id")?;
                let length = number(&rec.take("length")?, "length")?;
                let speed_limit = number(&rec.take("speed_limit")?, "speed_limit")?;
                let downstream = match rec.take_opt("downstream") {
                    Some(f) => Some(single(&f, "downstream")?),
                    None => None,
                };
                spec.lanes.push(LaneSpec {
                    id,
                    length,
                    speed_limit,
                    downstream,
                });
            }
            "movement" => {
                let id = single(&rec.take("id")?, "id")?;
                let from = single(&rec.take("from")?, "from")?;
                let to = single(&rec.take("to")?, "to")?;
                let turn_field = rec.take("turn")?;
                let turn = Turn::parse(&turn_field.value).ok_or_else(|| {
                    syntax(
                        turn_field.line,
                        turn_field.column,
                        format!("turn must be left, straight or right, got `{}`", turn_field.value),
                    )
                })?;
                spec.movements.push(MovementSpec { id, from, to, turn });
            }
            "conflict" => {
                let movement = single(&rec.take("movement")?, "movement")?;
                let with = list(&rec.take("with")?);
                spec.conflicts.push(ConflictSpec { movement, with });
            }
            "phase" => {
                let intersection = single(&rec.take("intersection")?, "intersection")?;
                let duration = number(&rec.take("duration")?, "duration")?;
                let movements = list(&rec.take("movements")?);
                spec.phases.push(PhaseSpec {
                    intersection,
                    duration,
                    movements,
                });
            }
            "route" => {
                let id = single(&rec.take("id")?, "id")?;
                let lanes = list(&rec.take("lanes")?);
                let weight = match rec.take_opt("weight") {
                    Some(f) => number(&f, "weight")?,
                    None => 1.0,
                };
                spec.routes.push(RouteSpec { id, lanes, weight });
            }
            _ => unreachable!("section names are checked while tokenizing"),
        }
        rec.finish()?;
    }
    Network::from_spec(&spec)
}

/// Writes the canonical text form; `parse_network(&serialize_network(n)) == n`.
pub fn serialize_network(net: &Network) -> String {
    let spec = net.to_spec();
    let mut out = String::new();
    out.push_str("# mtc network description v1\n");
    for i in &spec.intersections {
        let control = if i.signalized { "signalized" } else { "unsignalized" };
        let _ = write!(
            out,
            "\n[intersection]\nid = {}\ncontrol = {control}\nzone = {}\n",
            i.id, i.zone
        );
    }
    for p in &spec.phases {
        let _ = write!(
            out,
            "\n[phase]\nintersection = {}\nduration = {}\nmovements = {}\n",
            p.intersection,
            p.duration,
            p.movements.join(" ")
        );
    }
    for l in &spec.lanes {
        let _ = write!(
            out,
            "\n[lane]\nid = {}\nlength = {}\nspeed_limit = {}\n",
            l.id, l.length, l.speed_limit
        );
        if let Some(d) = &l.downstream {
            let _ = writeln!(out, "downstream = {d}");
        }
    }
    for m in &spec.movements {
        let _ = write!(
            out,
            "\n[movement]\nid = {}\nfrom = {}\nto = {}\nturn = {}\n",
            m.id, m.from, m.to, m.turn
        );
    }
    for c in &spec.conflicts {
        let _ = write!(
            out,
            "\n[conflict]\nmovement = {}\nwith = {}\n",
            c.movement,
            c.with.join(" ")
        );
    }
    for r in &spec.routes {
        let _ = write!(out, "\n[route]\nid = {}\nlanes = {}\n", r.id, r.lanes.join(" "));
        if r.weight != 1.0 {
            let _ = writeln!(out, "weight = {}", r.weight);
        }
    }
    out
}
