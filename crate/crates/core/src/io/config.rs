//! Flat `key = value` run configuration with optional `[section]` headers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cases::{CaseKind, CaseSpec};
use crate::error::{MhdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Converge,
    TransientFit,
    Oracle,
    Compare,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "run" => Ok(Command::Run),
            "converge" => Ok(Command::Converge),
            "transient-fit" | "transient_fit" => Ok(Command::TransientFit),
            "oracle" => Ok(Command::Oracle),
            "compare" => Ok(Command::Compare),
            other => Err(format!("unknown command '{other}'")),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Run => "run",
            Command::Converge => "converge",
            Command::TransientFit => "transient-fit",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
        })
    }
}

/// How the constrained transient fit treats the offset `s0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetPolicy {
    Fitted,
    /// Pinned to the last probe sample.
    Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub case: CaseSpec,
    pub orders: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub log_level: String,
    /// Interior points per direction of the coarse oracle grid.
    pub oracle_n: usize,
    pub oracle_dt: f64,
    /// End time of transient runs.
    pub t_end: f64,
    pub slice_n: usize,
    pub x_station: f64,
    pub offset_policy: OffsetPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Run,
            case: CaseSpec::default(),
            orders: vec![2, 4, 6, 8],
            output_dir: PathBuf::from("out"),
            seed: 1,
            log_level: "info".into(),
            oracle_n: 255,
            oracle_dt: 1e-3,
            t_end: 2.0,
            slice_n: 33,
            x_station: 0.0,
            offset_policy: OffsetPolicy::Fitted,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["command", "output_dir", "seed", "log_level"]),
    ("case", &["case", "ha", "re", "rm", "r_w", "delta", "wall_layers"]),
    ("mesh", &["elements", "n", "l", "grade"]),
    (
        "time",
        &[
            "dt",
            "bdf_order",
            "adaptive_dt",
            "cfl",
            "t_max",
            "steady_tol",
            "t_end",
            "dealias",
        ],
    ),
    ("converge", &["orders"]),
    ("oracle", &["oracle_n", "oracle_dt"]),
    ("fit", &["s0"]),
    ("output", &["slice_n", "x_station"]),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| MhdError::Parse {
        line,
        message: format!("cannot parse '{v}' for key '{key}'"),
    })
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(MhdError::Parse {
            line,
            message: format!("'{v}' is not a boolean for key '{key}'"),
        }),
    }
}

/// `4x10x10` element counts.
pub fn parse_elements(v: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = v
        .split(['x', 'X'])
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    <[usize; 3]>::try_from(parts).ok()
}

/// Comma-separated list of polynomial orders.
pub fn parse_orders(v: &str) -> Option<Vec<usize>> {
    v.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn invalid(field: &str, message: impl Into<String>) -> MhdError {
    MhdError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut kind_set = false;
        let mut delta_set = false;
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| MhdError::Parse {
                    line,
                    message: format!("malformed section header '{body}'"),
                })?;
                let name = name.trim().to_ascii_lowercase();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(MhdError::Parse {
                        line,
                        message: format!("unknown section '{name}'"),
                    });
                }
                section = name;
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| MhdError::Parse {
                line,
                message: format!("expected 'key = value', found '{body}'"),
            })?;
            let key = k.trim().to_ascii_lowercase();
            let v = v.trim();
            match section_of(&key) {
                None => {
                    return Err(MhdError::Parse {
                        line,
                        message: format!("unknown key '{}'", k.trim()),
                    })
                }
                Some(s) if !section.is_empty() && s != section => {
                    return Err(MhdError::Parse {
                        line,
                        message: format!("key '{}' belongs to section [{s}], not [{section}]", k.trim()),
                    })
                }
                _ => {}
            }
            let c = &mut cfg.case;
            match key.as_str() {
                "command" => cfg.command = v.parse().map_err(|message| MhdError::Parse { line, message })?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "seed" => cfg.seed = value(line, &key, v)?,
                "log_level" => cfg.log_level = v.to_string(),
                "case" => {
                    c.kind = v.parse::<CaseKind>().map_err(|e| MhdError::Parse {
                        line,
                        message: e.to_string(),
                    })?;
                    kind_set = true;
                }
                "ha" => c.ha = value(line, &key, v)?,
                "re" => c.re = value(line, &key, v)?,
                "rm" => c.rm = value(line, &key, v)?,
                "r_w" => c.r_w_solid = value(line, &key, v)?,
                "delta" => {
                    c.delta = value(line, &key, v)?;
                    delta_set = true;
                }
                "wall_layers" => c.wall_layers = value(line, &key, v)?,
                "elements" => {
                    c.counts = parse_elements(v).ok_or_else(|| MhdError::Parse {
                        line,
                        message: format!("elements must look like 4x10x10, found '{v}'"),
                    })?
                }
                "n" => c.order = value(line, &key, v)?,
                "l" => c.length = value(line, &key, v)?,
                "grade" => c.grade = flag(line, &key, v)?,
                "dt" => c.dt = value(line, &key, v)?,
                "bdf_order" => c.bdf_order = value(line, &key, v)?,
                "adaptive_dt" => c.adaptive_dt = flag(line, &key, v)?,
                "cfl" => c.cfl_target = value(line, &key, v)?,
                "t_max" => c.t_max = value(line, &key, v)?,
                "steady_tol" => c.steady_tol = value(line, &key, v)?,
                "dealias" => c.dealias = flag(line, &key, v)?,
                "t_end" => cfg.t_end = value(line, &key, v)?,
                "orders" => {
                    cfg.orders = parse_orders(v).ok_or_else(|| MhdError::Parse {
                        line,
                        message: format!("orders must be a comma-separated list, found '{v}'"),
                    })?
                }
                "oracle_n" => cfg.oracle_n = value(line, &key, v)?,
                "oracle_dt" => cfg.oracle_dt = value(line, &key, v)?,
                "s0" => {
                    cfg.offset_policy = match v {
                        "fitted" => OffsetPolicy::Fitted,
                        "probe" => OffsetPolicy::Probe,
                        _ => {
                            return Err(MhdError::Parse {
                                line,
                                message: format!("s0 must be 'fitted' or 'probe', found '{v}'"),
                            })
                        }
                    }
                }
                "slice_n" => cfg.slice_n = value(line, &key, v)?,
                "x_station" => cfg.x_station = value(line, &key, v)?,
                _ => unreachable!("key table and match arms disagree on '{key}'"),
            }
        }
        if kind_set && !delta_set && cfg.case.kind == CaseKind::ConductingWall {
            cfg.case.delta = CaseSpec::new(CaseKind::ConductingWall, cfg.case.ha).delta;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.case.ha > 0.0 && self.case.ha.is_finite()) {
            return Err(invalid("Ha", "Ha must be positive"));
        }
        self.case.validate()?;
        if self.case.order < 1 {
            return Err(invalid("N", "N must be at least 1"));
        }
        if self.case.counts.iter().any(|&c| c == 0) {
            return Err(invalid("elements", "element counts must be positive"));
        }
        if self.command == Command::Converge {
            if self.orders.is_empty() {
                return Err(invalid("orders", "orders must be nonempty"));
            }
            if self.orders.windows(2).any(|w| w[0] >= w[1]) || self.orders[0] < 1 {
                return Err(invalid("orders", "orders must be positive and strictly ascending"));
            }
        }
        if self.oracle_n < 3 {
            return Err(invalid("oracle_n", "oracle_n must be at least 3"));
        }
        for (name, v) in [("oracle_dt", self.oracle_dt), ("t_end", self.t_end)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{name} must be positive")));
            }
        }
        if self.slice_n < 2 {
            return Err(invalid("slice_n", "slice_n must be at least 2"));
        }
        Ok(())
    }

    /// Serialized form that parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let c = &self.case;
        let orders: Vec<String> = self.orders.iter().map(|o| o.to_string()).collect();
        format!(
            "[run]\ncommand = {}\noutput_dir = {}\nseed = {}\nlog_level = {}\n\n\
             [case]\ncase = {}\nHa = {:?}\nRe = {:?}\nRm = {:?}\nr_w = {:?}\ndelta = {:?}\nwall_layers = {}\n\n\
             [mesh]\nelements = {}x{}x{}\nN = {}\nL = {:?}\ngrade = {}\n\n\
             [time]\ndt = {:?}\nbdf_order = {}\nadaptive_dt = {}\ncfl = {:?}\nt_max = {:?}\nsteady_tol = {:?}\nt_end = {:?}\ndealias = {}\n\n\
             [converge]\norders = {}\n\n[oracle]\noracle_n = {}\noracle_dt = {:?}\n\n[fit]\ns0 = {}\n\n\
             [output]\nslice_n = {}\nx_station = {:?}\n",
            self.command,
            self.output_dir.display(),
            self.seed,
            self.log_level,
            c.kind.name(),
            c.ha,
            c.re,
            c.rm,
            c.r_w_solid,
            c.delta,
            c.wall_layers,
            c.counts[0],
            c.counts[1],
            c.counts[2],
            c.order,
            c.length,
            c.grade,
            c.dt,
            c.bdf_order,
            c.adaptive_dt,
            c.cfl_target,
            c.t_max,
            c.steady_tol,
            self.t_end,
            c.dealias,
            orders.join(","),
            self.oracle_n,
            self.oracle_dt,
            match self.offset_policy {
                OffsetPolicy::Fitted => "fitted",
                OffsetPolicy::Probe => "probe",
            },
            self.slice_n,
            self.x_station,
        )
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    RunConfig::parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_shercliff() {
        let cfg = RunConfig::parse("case = shercliff\nHa = 10\nN = 6\nelements = 4x10x10\n").unwrap();
        assert_eq!(cfg.case.kind, CaseKind::Shercliff);
        assert_eq!(cfg.case.ha, 10.0);
        assert_eq!(cfg.case.order, 6);
        assert_eq!(cfg.case.counts, [4, 10, 10]);
    }

    #[test]
    fn negative_hartmann_number() {
        match RunConfig::parse("case = hunt\nHa = -1\n") {
            Err(MhdError::Validation { field, message }) => {
                assert_eq!(field, "Ha");
                assert_eq!(message, "Ha must be positive");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn converge_orders() {
        let cfg = RunConfig::parse("[run]\ncommand = converge\n[converge]\norders = 2,4,6,8\n").unwrap();
        assert_eq!(cfg.command, Command::Converge);
        assert_eq!(cfg.orders, vec![2, 4, 6, 8]);
        assert!(matches!(
            RunConfig::parse("command = converge\norders = 4,2\n"),
            Err(MhdError::Validation { field, .. }) if field == "orders"
        ));
    }

    #[test]
    fn unknown_key_reports_line() {
        match RunConfig::parse("# comment\nHa = 10\n\nbogus = 3\n") {
            Err(MhdError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("[mesh]\nHa = 1\n"),
            Err(MhdError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("Ha = ten\n"),
            Err(MhdError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("[nope]\n"),
            Err(MhdError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn conducting_case_gets_a_wall() {
        let cfg = RunConfig::parse("case = conducting_wall\nr_w = 100\n").unwrap();
        assert!(cfg.case.delta > 0.0);
    }

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig::parse(
            "command = converge\ncase = hunt\nHa = 12.5\nelements = 2x8x8\norders = 2,4,6\nt_end = 1.25\ns0 = probe\n",
        )
        .unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
