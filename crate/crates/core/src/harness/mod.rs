pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod trace;

use std::str::FromStr;

use scenario::{Scenario, ScenarioError};

/// One `param=values` axis of a batch matrix, e.g. `n=4,7,10` or `sigma=16..256:16`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<u64>,
}

pub const SWEEPABLE: [&str; 4] = ["n", "f", "beta", "sigma"];

impl FromStr for Sweep {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Sweep, ScenarioError> {
        let (param, axis) = s.split_once('=').ok_or(ScenarioError::Syntax { line: 0 })?;
        let param = param.trim();
        if !SWEEPABLE.contains(&param) {
            return Err(ScenarioError::UnknownKey(param.to_string()));
        }
        let bad = || ScenarioError::BadValue {
            key: param.to_string(),
            value: axis.to_string(),
        };
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| bad());
        let values = match axis.split_once("..") {
            Some((a, rest)) => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, st)) => (num(b)?, num(st)?),
                    None => (num(rest)?, 1),
                };
                let a = num(a)?;
                if step == 0 || b < a {
                    return Err(bad());
                }
                (a..=b).step_by(step as usize).collect()
            }
            None => axis.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        };
        if values.is_empty() {
            return Err(bad());
        }
        Ok(Sweep {
            param: param.to_string(),
            values,
        })
    }
}

/// Cartesian product of the sweeps applied to `base`, labelled like
/// `n=7,sigma=64`. Sweeping `n` without `f` sets `f` to the largest
/// tolerable value.
pub fn expand(base: &Scenario, sweeps: &[Sweep]) -> Result<Vec<(String, Scenario)>, ScenarioError> {
    let sets_f = sweeps.iter().any(|s| s.param == "f");
    let mut out = vec![(String::new(), base.clone())];
    for sw in sweeps {
        let mut next = Vec::with_capacity(out.len() * sw.values.len());
        for (label, sc) in &out {
            for v in &sw.values {
                let mut sc = sc.clone();
                sc.set(&sw.param, &v.to_string())?;
                if sw.param == "n" && !sets_f {
                    sc.f = Scenario::max_f(sc.n);
                }
                let sep = if label.is_empty() { "" } else { "," };
                next.push((format!("{label}{sep}{}={v}", sw.param), sc));
            }
        }
        out = next;
    }
    for (_, sc) in &out {
        sc.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_ranges() {
        assert_eq!("n=4,7,10".parse::<Sweep>().unwrap().values, vec![4, 7, 10]);
        assert_eq!(
            "sigma=16..64:16".parse::<Sweep>().unwrap().values,
            vec![16, 32, 48, 64]
        );
        assert_eq!("beta=1..3".parse::<Sweep>().unwrap().values, vec![1, 2, 3]);
        assert!("rounds=1,2".parse::<Sweep>().is_err());
        assert!("n=7..4".parse::<Sweep>().is_err());
        assert!("n=4..8:0".parse::<Sweep>().is_err());
    }

    #[test]
    fn expands_matrix_with_derived_f() {
        let base = Scenario::new(4, 1, 1);
        let sweeps = ["n=4,7,10".parse().unwrap(), "beta=2,8".parse().unwrap()];
        let runs = expand(&base, &sweeps).unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[2].0, "n=7,beta=2");
        assert_eq!((runs[2].1.n, runs[2].1.f, runs[2].1.beta), (7, 2, 2));
        assert_eq!(runs[5].1.f, 3);
    }
}
