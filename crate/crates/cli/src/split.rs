//! Unit selection rules for `--split`.

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Split {
    All,
    First(usize),
    Last(usize),
    /// Units up to and including the named one.
    UpTo(String),
    /// Units strictly after the named one.
    After(String),
}

impl std::str::FromStr for Split {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "all" {
            return Ok(Split::All);
        }
        let bad = || CliError::input(format!("invalid --split {s:?}: expected all, first:<k>, last:<k>, upto:<unit_id> or after:<unit_id>"));
        let (rule, arg) = s.split_once(':').ok_or_else(bad)?;
        if arg.is_empty() {
            return Err(bad());
        }
        match rule {
            "first" => Ok(Split::First(arg.parse().map_err(|_| bad())?)),
            "last" => Ok(Split::Last(arg.parse().map_err(|_| bad())?)),
            "upto" => Ok(Split::UpTo(arg.to_string())),
            "after" => Ok(Split::After(arg.to_string())),
            _ => Err(bad()),
        }
    }
}

impl Split {
    /// Positions of the selected units among `ids` (in file order).
    pub fn select(&self, ids: &[&str]) -> Result<Vec<usize>, CliError> {
        let find = |id: &str| {
            ids.iter()
                .position(|u| *u == id)
                .ok_or_else(|| CliError::input(format!("--split names unit {id:?}, which is not in the data")))
        };
        let n = ids.len();
        Ok(match self {
            Split::All => (0..n).collect(),
            Split::First(k) => (0..(*k).min(n)).collect(),
            Split::Last(k) => (n.saturating_sub(*k)..n).collect(),
            Split::UpTo(id) => (0..=find(id)?).collect(),
            Split::After(id) => (find(id)? + 1..n).collect(),
        })
    }
}
