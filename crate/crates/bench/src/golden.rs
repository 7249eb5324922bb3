//! Golden digest files.
//!
//! One line per model configuration:
//! `<canonical key> => <committed digest> <final state digest> <count>`,
//! digests in lowercase hex. Lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use timewarp::{Digests, PholdConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GoldenEntry {
    pub committed_digest: u64,
    pub final_state_digest: u64,
    pub committed_count: u64,
}

impl GoldenEntry {
    /// Compares against a run; the maximum committed timestamp is not stored.
    pub fn diff(&self, d: &Digests) -> Vec<String> {
        let mut out = Vec::new();
        if self.committed_digest != d.committed_digest {
            out.push(format!(
                "committed_digest: got {:016x}, golden {:016x}",
                d.committed_digest, self.committed_digest
            ));
        }
        if self.final_state_digest != d.final_state_digest {
            out.push(format!(
                "final_state_digest: got {:016x}, golden {:016x}",
                d.final_state_digest, self.final_state_digest
            ));
        }
        if self.committed_count != d.committed_count {
            out.push(format!(
                "committed_count: got {}, golden {}",
                d.committed_count, self.committed_count
            ));
        }
        out
    }
}

pub type GoldenSet = BTreeMap<String, GoldenEntry>;

pub fn format_line(cfg: &PholdConfig, d: &Digests) -> String {
    format!(
        "{} => {:016x} {:016x} {}",
        cfg.canonical_key(),
        d.committed_digest,
        d.final_state_digest,
        d.committed_count
    )
}

pub fn parse(text: &str) -> Result<GoldenSet> {
    let mut set = GoldenSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || anyhow!("golden line {}: {line:?}", n + 1);
        let (key, values) = line.split_once(" => ").ok_or_else(err)?;
        let mut it = values.split_whitespace();
        let mut next = || it.next().ok_or_else(err);
        let entry = GoldenEntry {
            committed_digest: u64::from_str_radix(next()?, 16).map_err(|_| err())?,
            final_state_digest: u64::from_str_radix(next()?, 16).map_err(|_| err())?,
            committed_count: next()?.parse().map_err(|_| err())?,
        };
        set.insert(key.to_string(), entry);
    }
    Ok(set)
}

pub fn load(path: &Path) -> Result<GoldenSet> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&text)
}

/// Diffs against the stored entry for `cfg`; `None` if there is none.
pub fn check(set: &GoldenSet, cfg: &PholdConfig, d: &Digests) -> Option<Vec<String>> {
    set.get(&cfg.canonical_key()).map(|g| g.diff(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let cfg = PholdConfig::default();
        let d = Digests {
            committed_digest: 0xab,
            final_state_digest: u64::MAX,
            committed_count: 12,
            ..Digests::default()
        };
        let line = format_line(&cfg, &d);
        assert!(line.contains("=> 00000000000000ab ffffffffffffffff 12"));
        let set = parse(&format!("# comment\n\n{line}\n")).unwrap();
        assert_eq!(check(&set, &cfg, &d), Some(vec![]));
        let other = PholdConfig {
            seed: 2,
            ..cfg.clone()
        };
        assert_eq!(check(&set, &other, &d), None);
        let off = Digests {
            committed_count: 13,
            ..d
        };
        assert_eq!(check(&set, &cfg, &off).unwrap().len(), 1);
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse("no arrow here").is_err());
        assert!(parse("k => zz 00 1").is_err());
        assert!(parse("k => 00 00").is_err());
    }
}
