//! Flat `key = value` configuration with command-line overrides. Every key
//! must be consumed by the command; leftovers are reported as unknown.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Config {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// ignored; a key may appear only once.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got '{raw}'", no + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", no + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", no + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize(key), value.into());
    }

    pub fn set_opt(&mut self, key: &str, value: Option<&String>) {
        if let Some(v) = value {
            self.set(key, v.clone());
        }
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("bad value '{v}' for '{key}': {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(v) => parse_bool(&v).ok_or_else(|| CliError::Config(format!("bad boolean '{v}' for '{key}'"))),
        }
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| CliError::Config(format!("bad entry '{s}' in '{key}': {e}")))
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Errors if any key was not consumed.
    pub fn finish(self) -> Result<(), CliError> {
        if self.values.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.values.keys().map(String::as_str).collect();
            Err(CliError::Config(format!("unknown configuration key(s): {}", keys.join(", "))))
        }
    }
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// `N` for a square grid or `HxW`.
pub fn parse_size(v: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("bad size '{v}', expected N or HxW"));
    let (h, w) = match v.split_once(['x', 'X']) {
        Some((h, w)) => (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?),
        None => {
            let n = v.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Either a comma list or `log:min:max:count` for a log-spaced grid.
pub fn parse_sweep(v: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("bad lambda sweep '{v}': {why}"));
    let values: Vec<f64> = if let Some(spec) = v.strip_prefix("log:") {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(bad("expected log:min:max:count"));
        };
        let lo: f64 = lo.parse().map_err(|_| bad("min"))?;
        let hi: f64 = hi.parse().map_err(|_| bad("max"))?;
        let n: usize = n.parse().map_err(|_| bad("count"))?;
        if n == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(bad("need 0 < min <= max and count >= 1"));
        }
        if n == 1 {
            vec![lo]
        } else {
            let step = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| lo * (step * i as f64).exp()).collect()
        }
    } else {
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(s)))
            .collect::<Result<_, _>>()?
    };
    if values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(bad("strengths must be positive"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_files_and_overrides() {
        let mut c = Config::parse("# run\nlambda = 4\nrho-rel=0.1 # inline\n\nfamily = lmrf\n").unwrap();
        c.set("lambda", "8");
        assert_eq!(c.take::<f64>("lambda").unwrap(), Some(8.0));
        assert_eq!(c.take::<f64>("rho_rel").unwrap(), Some(0.1));
        assert_eq!(c.take_str("family").as_deref(), Some("lmrf"));
        assert_eq!(c.take_or("iters", 5usize).unwrap(), 5);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let mut c = Config::parse("lamda = 3\n").unwrap();
        assert_eq!(c.take::<f64>("lambda").unwrap(), None);
        let err = c.finish().unwrap_err();
        assert!(err.to_string().contains("lamda"));
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        assert!(Config::parse("just words\n").is_err());
        let mut c = Config::parse("iters = many").unwrap();
        assert!(c.take::<usize>("iters").is_err());
    }

    #[test]
    fn bools_sizes_sweeps() {
        let mut c = Config::parse("rst = off\nprecondition = yes\nbad = maybe").unwrap();
        assert!(!c.take_bool("rst", true).unwrap());
        assert!(c.take_bool("precondition", false).unwrap());
        assert!(c.take_bool("bad", false).is_err());
        assert_eq!(parse_size("64").unwrap(), (64, 64));
        assert_eq!(parse_size("32x48").unwrap(), (32, 48));
        assert!(parse_size("0x3").is_err());
        assert_eq!(parse_sweep("1,2.5").unwrap(), vec![1.0, 2.5]);
        let s = parse_sweep("log:1:16:5").unwrap();
        assert_eq!(s.len(), 5);
        assert!((s[2] - 4.0).abs() < 1e-12 && (s[4] - 16.0).abs() < 1e-12);
        assert!(parse_sweep("log:1:16").is_err());
        assert!(parse_sweep("1,-2").is_err());
    }
}
