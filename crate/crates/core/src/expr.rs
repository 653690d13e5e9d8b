//! Small arithmetic expressions in `t` and the Brownian coordinates.
//!
//! Payoffs (`Sigma_0`, `psi`) and strategy positions are written as
//! expressions such as `10 + 0.1*t + 0.2*B1` or `sin(2*pi()*t)`. The
//! variables are `t`, `B` (alias of `B1`) and `B1..Bd`; comparisons
//! evaluate to `1` or `0`, which doubles as a node predicate.

use std::fmt;
use std::sync::Arc;

use fasteval::{Compiler, Evaler};

use crate::error::{Error, Result};

struct Compiled {
    slab: fasteval::Slab,
    instr: fasteval::Instruction,
}

#[derive(Clone)]
pub struct Expr {
    source: String,
    compiled: Arc<Compiled>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let parser = fasteval::Parser::new();
        let mut slab = fasteval::Slab::new();
        let instr = parser
            .parse(source, &mut slab.ps)
            .map_err(|e| Error::Expression(format!("`{source}`: {e}")))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let expr = Expr {
            source: source.to_string(),
            compiled: Arc::new(Compiled { slab, instr }),
        };
        Ok(expr)
    }

    pub fn constant(value: f64) -> Self {
        Self::parse(&format!("{value:e}")).expect("a float literal always parses")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at time `t` and Brownian position `b`.
    pub fn eval(&self, t: f64, b: &[f64]) -> Result<f64> {
        let mut unknown = None;
        let mut lookup = |name: &str, args: Vec<f64>| -> Option<f64> {
            if !args.is_empty() {
                return None;
            }
            let v = match name {
                "t" => Some(t),
                "B" => b.first().copied(),
                "pi" => Some(std::f64::consts::PI),
                _ => name
                    .strip_prefix('B')
                    .and_then(|i| i.parse::<usize>().ok())
                    .filter(|i| *i >= 1)
                    .and_then(|i| b.get(i - 1).copied()),
            };
            if v.is_none() {
                unknown = Some(name.to_string());
            }
            v
        };
        let c = &self.compiled;
        let out = c.instr.eval(&c.slab, &mut lookup);
        match out {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::Expression(format!(
                "`{}` evaluated to {v} at t={t}, B={b:?}",
                self.source
            ))),
            Err(e) => Err(Error::Expression(match unknown {
                Some(name) => format!("`{}`: unknown variable `{name}`", self.source),
                None => format!("`{}`: {e}", self.source),
            })),
        }
    }
}
