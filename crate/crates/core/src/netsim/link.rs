use serde::{Deserialize, Serialize};

/// Radio or wire technology of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Dsrc,
    Wifi,
    Cellular,
    Wired,
}

pub const DSRC_RATE_BPS: f64 = 27.0e6;
pub const DSRC_LATENCY_S: f64 = 200.0e-6;
/// Not given by the radio's published parameters; configurable per link.
pub const DSRC_DEFAULT_RANGE_M: f64 = 300.0;
pub const WIFI_RATE_BPS: f64 = 54.0e6;
pub const WIFI_RANGE_M: f64 = 140.0;
pub const CELLULAR_RATE_BPS: f64 = 2.0e6;
pub const CELLULAR_LATENCY_RANGE_S: (f64, f64) = (1.5, 3.5);
pub const WIRED_RATE_BPS: f64 = 1.0e9;
pub const WIRED_LATENCY_S: f64 = 1.0e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub kind: LinkKind,
    pub data_rate_bps: f64,
    pub latency_s: f64,
    /// `None` for links with no range limit.
    pub range_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("frame must be at least one byte")]
    EmptyFrame,
    #[error("receiver out of range")]
    OutOfRange,
}

impl LinkModel {
    pub fn dsrc() -> Self {
        LinkModel {
            kind: LinkKind::Dsrc,
            data_rate_bps: DSRC_RATE_BPS,
            latency_s: DSRC_LATENCY_S,
            range_m: Some(DSRC_DEFAULT_RANGE_M),
        }
    }

    /// Wi-Fi has no stated latency; 0 unless overridden.
    pub fn wifi() -> Self {
        LinkModel {
            kind: LinkKind::Wifi,
            data_rate_bps: WIFI_RATE_BPS,
            latency_s: 0.0,
            range_m: Some(WIFI_RANGE_M),
        }
    }

    /// `latency_s` is per hop and should come from
    /// [`CELLULAR_LATENCY_RANGE_S`].
    pub fn cellular(latency_s: f64) -> Self {
        LinkModel {
            kind: LinkKind::Cellular,
            data_rate_bps: CELLULAR_RATE_BPS,
            latency_s,
            range_m: None,
        }
    }

    pub fn wired() -> Self {
        LinkModel {
            kind: LinkKind::Wired,
            data_rate_bps: WIRED_RATE_BPS,
            latency_s: WIRED_LATENCY_S,
            range_m: None,
        }
    }

    /// Hops a frame takes: cellular goes sender → base station → receiver.
    pub fn hops(&self) -> u32 {
        if self.kind == LinkKind::Cellular {
            2
        } else {
            1
        }
    }

    /// `hops · (latency + 8·size / rate)`.
    pub fn transmit(&self, size_bytes: usize) -> Result<f64, LinkError> {
        if size_bytes == 0 {
            return Err(LinkError::EmptyFrame);
        }
        let one_hop = self.latency_s + (8 * size_bytes) as f64 / self.data_rate_bps;
        Ok(self.hops() as f64 * one_hop)
    }

    /// [`transmit`](Self::transmit), failing if the endpoints are farther
    /// apart than the link's range.
    pub fn transmit_between(&self, a: (f64, f64), b: (f64, f64), size_bytes: usize) -> Result<f64, LinkError> {
        if let Some(range) = self.range_m {
            if distance(a, b) > range {
                return Err(LinkError::OutOfRange);
            }
        }
        self.transmit(size_bytes)
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
