//! Parsing of `--data` and `--model` arguments.

use std::collections::BTreeMap;
use std::time::Duration;

use ale_core::models::generate::Family;
use ale_core::{
    fit_regression_tree, generate_synthetic, load_csv, BridgeConfig, CsvOptions, Dataset, ExprModel, ExternalModel,
    GeneratorSpec, Predictor, TreeParams,
};
use anyhow::{anyhow, bail, Context, Result};

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// `gen:<family>,key=value,...`
    Generated { family: Family, n: usize },
    /// Any other value is a CSV path; `csv:` prefix optional.
    Csv(String),
}

fn key_values(s: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {part:?}"))?;
        if out.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
            bail!("option {k:?} given twice");
        }
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(kv: &mut BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match kv.remove(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| anyhow!("bad value for {key}: {v:?} ({e})")),
    }
}

fn reject_leftovers(kv: &BTreeMap<String, String>, what: &str) -> Result<()> {
    if let Some(k) = kv.keys().next() {
        bail!("unknown option {k:?} for {what}");
    }
    Ok(())
}

impl DataSource {
    pub fn parse(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("gen:") else {
            let path = s.strip_prefix("csv:").unwrap_or(s);
            if path.is_empty() {
                bail!("empty data path");
            }
            return Ok(DataSource::Csv(path.to_owned()));
        };
        let (name, opts) = rest.split_once(',').unwrap_or((rest, ""));
        let mut kv = key_values(opts)?;
        let n = take(&mut kv, "n", 200usize)?;
        let family = match name.trim() {
            "example1" => {
                let Family::Example1 { lo, hi, jitter } = Family::example1() else { unreachable!() };
                Family::Example1 {
                    lo: take(&mut kv, "lo", lo)?,
                    hi: take(&mut kv, "hi", hi)?,
                    jitter: take(&mut kv, "jitter", jitter)?,
                }
            }
            "example2" => {
                let Family::Example2 { lo, hi, jitter, noise } = Family::example2() else { unreachable!() };
                Family::Example2 {
                    lo: take(&mut kv, "lo", lo)?,
                    hi: take(&mut kv, "hi", hi)?,
                    jitter: take(&mut kv, "jitter", jitter)?,
                    noise: take(&mut kv, "noise", noise)?,
                }
            }
            "gaussian-pair" => Family::GaussianPair { rho: take(&mut kv, "rho", 0.0)? },
            "product-cube" => Family::ProductCube { d: take(&mut kv, "d", 3usize)? },
            other => bail!("unknown generator {other:?}; expected example1, example2, gaussian-pair or product-cube"),
        };
        reject_leftovers(&kv, name)?;
        Ok(DataSource::Generated { family, n })
    }

    /// Noise-free response of a generated family.
    pub fn truth(&self) -> Option<String> {
        match self {
            DataSource::Generated { family, .. } => Some(family.truth()),
            DataSource::Csv(_) => None,
        }
    }

    pub fn load(&self, seed: u64, response: Option<&str>) -> Result<Dataset> {
        match self {
            DataSource::Generated { family, n } => {
                if response.is_some() {
                    bail!("--response conflicts with a generated dataset, whose response is always \"y\"");
                }
                Ok(generate_synthetic(&GeneratorSpec { family: family.clone(), n: *n, seed })?)
            }
            DataSource::Csv(path) => {
                let opts = CsvOptions { response: response.map(str::to_owned), ..CsvOptions::default() };
                load_csv(path, &opts).with_context(|| format!("reading {path}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Expr(String),
    Tree(TreeParams),
    Bridge(BridgeConfig),
}

impl ModelSource {
    /// `expr:<text>`, `tree[:max_leaves=..,min_leaf=..]` or
    /// `bridge:[batch=..,timeout=..,in_flight=..,header=Name:Value,](cmd=<command>|url=<url>)`.
    /// The `cmd=`/`url=` option must come last and runs to the end of the string.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(text) = s.strip_prefix("expr:") {
            return Ok(ModelSource::Expr(text.to_owned()));
        }
        if s == "tree" || s.starts_with("tree:") {
            let mut kv = key_values(s.strip_prefix("tree:").unwrap_or(""))?;
            let d = TreeParams::default();
            let p = TreeParams {
                max_leaves: take(&mut kv, "max_leaves", d.max_leaves)?,
                min_leaf: take(&mut kv, "min_leaf", d.min_leaf)?,
            };
            reject_leftovers(&kv, "tree")?;
            return Ok(ModelSource::Tree(p));
        }
        if let Some(rest) = s.strip_prefix("bridge:") {
            return parse_bridge(rest).map(ModelSource::Bridge);
        }
        bail!("unknown model {s:?}; expected expr:<expression>, tree:<options> or bridge:<options>")
    }

    /// Builds the model. Trees are fitted on `data`.
    pub fn build(&self, data: Option<&Dataset>) -> Result<Box<dyn Predictor>> {
        match self {
            ModelSource::Expr(text) => {
                let m = match data {
                    Some(d) => ExprModel::parse_with_names(text, d.columns())?,
                    None => ExprModel::parse(text)?,
                };
                if let Some(d) = data {
                    if m.expr().arity() > d.d() {
                        bail!("expression uses x{} but the data has {} columns", m.expr().arity(), d.d());
                    }
                }
                Ok(Box::new(m))
            }
            ModelSource::Tree(p) => {
                let d = data.ok_or_else(|| anyhow!("a tree model needs --data to fit on"))?;
                Ok(Box::new(fit_regression_tree(d, *p)?))
            }
            ModelSource::Bridge(cfg) => {
                let mut m = ExternalModel::new(cfg.clone())?;
                if let Some(d) = data {
                    m = m.with_columns(d.columns().to_vec());
                }
                Ok(Box::new(m))
            }
        }
    }

    /// The expression a model declares as its own truth, if any.
    pub fn truth(&self) -> Option<String> {
        match self {
            ModelSource::Expr(t) => Some(t.clone()),
            _ => None,
        }
    }
}

fn parse_bridge(s: &str) -> Result<BridgeConfig> {
    let (opts, target) = match (s.find("cmd="), s.find("url=")) {
        (Some(i), _) if s[..i].is_empty() || s[..i].ends_with(',') => (&s[..i], &s[i..]),
        (_, Some(i)) if s[..i].is_empty() || s[..i].ends_with(',') => (&s[..i], &s[i..]),
        _ => bail!("bridge needs cmd=<command> or url=<endpoint> as its last option"),
    };
    let mut cfg = if let Some(cmd) = target.strip_prefix("cmd=") {
        let mut words = cmd.split_whitespace().map(str::to_owned);
        let program = words.next().ok_or_else(|| anyhow!("empty bridge command"))?;
        BridgeConfig::subprocess(program, words.collect())
    } else {
        BridgeConfig::http(target.trim_start_matches("url=").trim())
    };
    let mut kv = key_values(opts)?;
    cfg.batch_size = take(&mut kv, "batch", cfg.batch_size)?;
    cfg.timeout = Duration::from_secs_f64(take(&mut kv, "timeout", cfg.timeout.as_secs_f64())?);
    cfg.max_in_flight = take(&mut kv, "in_flight", cfg.max_in_flight)?;
    if let Some(h) = kv.remove("header") {
        let (name, value) = h.split_once(':').ok_or_else(|| anyhow!("header must look like Name:Value"))?;
        match &mut cfg.transport {
            ale_core::Transport::Http { header, .. } => {
                *header = Some((name.trim().to_owned(), value.trim().to_owned()))
            }
            ale_core::Transport::Subprocess { .. } => bail!("header applies only to url= bridges"),
        }
    }
    reject_leftovers(&kv, "bridge")?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ale_core::Transport;

    #[test]
    fn generated_sources() {
        assert_eq!(
            DataSource::parse("gen:gaussian-pair,n=500,rho=0.5").unwrap(),
            DataSource::Generated { family: Family::GaussianPair { rho: 0.5 }, n: 500 }
        );
        assert_eq!(
            DataSource::parse("gen:example1").unwrap(),
            DataSource::Generated { family: Family::example1(), n: 200 }
        );
        assert!(DataSource::parse("gen:example1,m=3").is_err());
        assert!(DataSource::parse("gen:nope").is_err());
        assert_eq!(DataSource::parse("csv:a.csv").unwrap(), DataSource::Csv("a.csv".into()));
    }

    #[test]
    fn model_sources() {
        assert_eq!(ModelSource::parse("expr:x1 + x2^2").unwrap(), ModelSource::Expr("x1 + x2^2".into()));
        assert_eq!(ModelSource::parse("tree").unwrap(), ModelSource::Tree(TreeParams::default()));
        assert_eq!(
            ModelSource::parse("tree:max_leaves=7").unwrap(),
            ModelSource::Tree(TreeParams { max_leaves: 7, min_leaf: 1 })
        );
        let ModelSource::Bridge(b) =
            ModelSource::parse("bridge:batch=256,timeout=5,cmd=ale serve --model expr:x1,x2").unwrap()
        else {
            panic!()
        };
        assert_eq!(b.batch_size, 256);
        assert_eq!(
            b.transport,
            Transport::Subprocess {
                program: "ale".into(),
                args: vec!["serve".into(), "--model".into(), "expr:x1,x2".into()]
            }
        );
        assert!(ModelSource::parse("bridge:batch=0,cmd=x").is_err());
        assert!(ModelSource::parse("bridge:batch=2").is_err());
        let ModelSource::Bridge(h) = ModelSource::parse("bridge:in_flight=3,header=X-Key:abc,url=http://h/p").unwrap()
        else {
            panic!()
        };
        assert_eq!(h.max_in_flight, 3);
        assert_eq!(
            h.transport,
            Transport::Http { url: "http://h/p".into(), header: Some(("X-Key".into(), "abc".into())) }
        );
    }
}
