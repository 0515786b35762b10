use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkTag {
    Identity,
    LeakyRelu,
}

/// Coordinatewise link function: 1-Lipschitz, `zeta`-expansive, fixes 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkRaw")]
pub struct LinkFn {
    pub tag: LinkTag,
    pub zeta: f64,
}

#[derive(Deserialize)]
struct LinkRaw {
    tag: LinkTag,
    #[serde(default)]
    zeta: Option<f64>,
}

impl TryFrom<LinkRaw> for LinkFn {
    type Error = Error;
    fn try_from(raw: LinkRaw) -> Result<Self> {
        match raw.tag {
            LinkTag::Identity => match raw.zeta {
                Some(z) if z != 1.0 => Err(Error::invalid("identity link forces zeta = 1")),
                _ => Ok(LinkFn::identity()),
            },
            LinkTag::LeakyRelu => LinkFn::leaky_relu(
                raw.zeta
                    .ok_or_else(|| Error::invalid("leaky_relu link needs zeta"))?,
            ),
        }
    }
}

impl LinkFn {
    pub fn identity() -> Self {
        LinkFn { tag: LinkTag::Identity, zeta: 1.0 }
    }

    pub fn leaky_relu(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::invalid(format!("zeta must lie in (0, 1], got {zeta}")));
        }
        let link = LinkFn { tag: LinkTag::LeakyRelu, zeta };
        link.probe()?;
        Ok(link)
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self.tag {
            LinkTag::Identity => x,
            LinkTag::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    self.zeta * x
                }
            }
        }
    }

    /// Derivative, taking the right derivative at the kink.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.tag {
            LinkTag::Identity => 1.0,
            LinkTag::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    self.zeta
                }
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        self.tag == LinkTag::Identity
    }

    /// Checks Lipschitz and expansiveness on a deterministic grid of pairs.
    pub fn probe(&self) -> Result<()> {
        if self.apply(0.0) != 0.0 {
            return Err(Error::invalid("link must fix the origin"));
        }
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.37).collect();
        for &x in &grid {
            for &y in &grid {
                let d = (self.apply(x) - self.apply(y)).abs();
                let r = (x - y).abs();
                if d > r * (1.0 + 1e-12) || d < self.zeta * r * (1.0 - 1e-12) {
                    return Err(Error::invalid(format!(
                        "link violates its Lipschitz/expansiveness bounds at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }
}
