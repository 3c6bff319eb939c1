//! Scenario files: flat `key=value` lines, `#` comments, and one
//! `fault=node:time:strategy[:param]` line per injected fault.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::adversary::Strategy;
use crate::netsim::{SimConfig, Time};
use crate::toy::NodeConfig;
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultKind {
    Crash,
    Byzantine(Strategy),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub node: NodeId,
    pub time: Time,
    pub kind: FaultKind,
}

impl FromStr for Fault {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Fault, ScenarioError> {
        let bad = || ScenarioError::BadValue {
            key: "fault".into(),
            value: s.into(),
        };
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 3 {
            return Err(bad());
        }
        let node = parts[0].parse().map_err(|_| bad())?;
        let time = parts[1].parse().map_err(|_| bad())?;
        let param = || -> Result<u64, ScenarioError> {
            match parts.get(3) {
                Some(p) if parts.len() == 4 => p.parse().map_err(|_| bad()),
                _ => Err(bad()),
            }
        };
        let kind = match parts[2] {
            "crash" if parts.len() == 3 => FaultKind::Crash,
            "silent" if parts.len() == 3 => FaultKind::Byzantine(Strategy::Silent),
            "delay" => FaultKind::Byzantine(Strategy::Delay(param()?)),
            "equivocate" => FaultKind::Byzantine(Strategy::Equivocate(param()?)),
            "bad_link" => FaultKind::Byzantine(Strategy::BadLink(param()?)),
            _ => return Err(bad()),
        };
        Ok(Fault { node, time, kind })
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.node, self.time)?;
        match self.kind {
            FaultKind::Crash => f.write_str("crash"),
            FaultKind::Byzantine(Strategy::Silent) => f.write_str("silent"),
            FaultKind::Byzantine(Strategy::Delay(d)) => write!(f, "delay:{d}"),
            FaultKind::Byzantine(Strategy::Equivocate(r)) => write!(f, "equivocate:{r}"),
            FaultKind::Byzantine(Strategy::BadLink(r)) => write!(f, "bad_link:{r}"),
            FaultKind::Byzantine(Strategy::Custom(_)) => f.write_str("custom"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    /// Stop once every correct node has this many blocks.
    pub rounds: u64,
    pub gst: Time,
    pub delta: Time,
    pub pre_gst_delay_max: Time,
    pub beta: usize,
    pub sigma: usize,
    pub header_mode: bool,
    pub fd: bool,
    pub fd_threshold: Time,
    pub permute_every: u64,
    pub tx_interval: Time,
    pub heartbeat: bool,
    pub max_time: Time,
    pub ema_window: u32,
    pub timer_init: Option<Time>,
    pub timer_min: Option<Time>,
    pub timer_max: Time,
    pub bbc_timeout: Option<Time>,
    pub ab_timeout: Option<Time>,
    /// Allows more than f faults; the oracle is then skipped.
    pub beyond_f: bool,
    pub faults: Vec<Fault>,
}

impl Scenario {
    pub fn new(n: usize, f: usize, seed: u64) -> Scenario {
        Scenario {
            n,
            f,
            seed,
            rounds: 100,
            gst: 0,
            delta: 5,
            pre_gst_delay_max: 100,
            beta: 4,
            sigma: 16,
            header_mode: false,
            fd: false,
            fd_threshold: 0,
            permute_every: 0,
            tx_interval: 0,
            heartbeat: false,
            max_time: 2_000_000,
            ema_window: 9,
            timer_init: None,
            timer_min: None,
            timer_max: 4096,
            bbc_timeout: None,
            ab_timeout: None,
            beyond_f: false,
            faults: Vec::new(),
        }
    }

    /// Largest f tolerated by n nodes.
    pub fn max_f(n: usize) -> usize {
        n.saturating_sub(1) / 3
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::new(4, 1, 0);
        let mut f_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ScenarioError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            f_given |= k == "f";
            sc.set(k, v)?;
        }
        if !f_given {
            sc.f = Scenario::max_f(sc.n);
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        fn p<T: FromStr>(key: &str, value: &str) -> Result<T, ScenarioError> {
            value.parse().map_err(|_| ScenarioError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        match key {
            "n" => self.n = p(key, value)?,
            "f" => self.f = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "rounds" => self.rounds = p(key, value)?,
            "gst" => self.gst = p(key, value)?,
            "delta" => self.delta = p(key, value)?,
            "pre_gst_delay_max" => self.pre_gst_delay_max = p(key, value)?,
            "beta" => self.beta = p(key, value)?,
            "sigma" => self.sigma = p(key, value)?,
            "header_mode" => self.header_mode = p(key, value)?,
            "fd" => self.fd = p(key, value)?,
            "fd_threshold" => self.fd_threshold = p(key, value)?,
            "permute_every" => self.permute_every = p(key, value)?,
            "tx_interval" => self.tx_interval = p(key, value)?,
            "heartbeat" => self.heartbeat = p(key, value)?,
            "max_time" => self.max_time = p(key, value)?,
            "ema_window" => self.ema_window = p(key, value)?,
            "timer_init" => self.timer_init = Some(p(key, value)?),
            "timer_min" => self.timer_min = Some(p(key, value)?),
            "timer_max" => self.timer_max = p(key, value)?,
            "bbc_timeout" => self.bbc_timeout = Some(p(key, value)?),
            "ab_timeout" => self.ab_timeout = Some(p(key, value)?),
            "beyond_f" => self.beyond_f = p(key, value)?,
            "fault" => self.faults.push(value.parse()?),
            _ => return Err(ScenarioError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.sim_config()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.rounds == 0 {
            return Err(ScenarioError::Invalid("rounds must be positive".into()));
        }
        if self.n < 2 {
            return Err(ScenarioError::Invalid("need at least 2 nodes".into()));
        }
        if let Some(x) = self.faults.iter().find(|x| x.node >= self.n) {
            return Err(ScenarioError::Invalid(format!(
                "fault on unknown node {}",
                x.node
            )));
        }
        let faulty: BTreeSet<NodeId> = self.faults.iter().map(|x| x.node).collect();
        if faulty.len() > self.f && !self.beyond_f {
            return Err(ScenarioError::Invalid(format!(
                "{} faulty nodes exceed f={} (set beyond_f=true to allow)",
                faulty.len(),
                self.f
            )));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n: self.n,
            f: self.f,
            seed: self.seed,
            gst: self.gst,
            delta: self.delta,
            pre_gst_delay_max: self.pre_gst_delay_max,
        }
    }

    pub fn node_config(&self) -> NodeConfig {
        let mut c = NodeConfig::new(self.n, self.f, self.delta);
        c.beta = self.beta;
        c.sigma = self.sigma;
        c.header_mode = self.header_mode;
        c.fd = self.fd;
        c.fd_threshold = self.fd_threshold;
        c.permute_every = self.permute_every;
        c.tx_interval = self.tx_interval;
        c.heartbeat = self.heartbeat;
        c.ema_window = self.ema_window;
        c.timer_max = self.timer_max;
        if let Some(t) = self.timer_init {
            c.timer_init = t;
        }
        if let Some(t) = self.timer_min {
            c.timer_min = t;
        }
        if let Some(t) = self.bbc_timeout {
            c.bbc_timeout = t;
        }
        if let Some(t) = self.ab_timeout {
            c.ab_timeout = t;
        }
        c
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "n={}\nf={}\nseed={}\nrounds={}\ngst={}\ndelta={}\npre_gst_delay_max={}\nbeta={}\nsigma={}\n\
             header_mode={}\nfd={}\nfd_threshold={}\npermute_every={}\ntx_interval={}\nheartbeat={}\n\
             max_time={}\nema_window={}\ntimer_max={}\nbeyond_f={}\n",
            self.n,
            self.f,
            self.seed,
            self.rounds,
            self.gst,
            self.delta,
            self.pre_gst_delay_max,
            self.beta,
            self.sigma,
            self.header_mode,
            self.fd,
            self.fd_threshold,
            self.permute_every,
            self.tx_interval,
            self.heartbeat,
            self.max_time,
            self.ema_window,
            self.timer_max,
            self.beyond_f
        );
        for (k, v) in [
            ("timer_init", self.timer_init),
            ("timer_min", self.timer_min),
            ("bbc_timeout", self.bbc_timeout),
            ("ab_timeout", self.ab_timeout),
        ] {
            if let Some(v) = v {
                s.push_str(&format!("{k}={v}\n"));
            }
        }
        for x in &self.faults {
            s.push_str(&format!("fault={x}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_faults() {
        let sc = Scenario::parse(
            "# comment\nn=7\nseed=3\nrounds=50\nheader_mode=true\nfault=2:100:crash\nfault=5:0:equivocate:4 # trailing\n",
        )
        .unwrap();
        assert_eq!((sc.n, sc.f, sc.seed, sc.rounds), (7, 2, 3, 50));
        assert!(sc.header_mode);
        assert_eq!(sc.faults[0].kind, FaultKind::Crash);
        assert_eq!(
            sc.faults[1].kind,
            FaultKind::Byzantine(Strategy::Equivocate(4))
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Scenario::parse("n"),
            Err(ScenarioError::Syntax { line: 1 })
        ));
        assert!(matches!(
            Scenario::parse("bogus=1"),
            Err(ScenarioError::UnknownKey(_))
        ));
        assert!(matches!(
            Scenario::parse("n=x"),
            Err(ScenarioError::BadValue { .. })
        ));
        assert!(matches!(
            Scenario::parse("n=4\nf=2"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(Scenario::parse("fault=0:0:warp").is_err());
        assert!(Scenario::parse("fault=0:0:delay").is_err());
        assert!(Scenario::parse("fault=0:0:crash\nfault=1:0:silent").is_err());
        assert!(Scenario::parse("fault=0:0:crash\nfault=1:0:silent\nbeyond_f=true").is_ok());
    }

    #[test]
    fn text_roundtrip() {
        let mut sc = Scenario::new(10, 3, 9);
        sc.timer_init = Some(7);
        sc.faults.push("1:5:delay:30".parse().unwrap());
        sc.faults.push("2:0:bad_link:3".parse().unwrap());
        assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc);
    }
}
