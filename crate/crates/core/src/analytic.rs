//! Closed-form bandwidth, latency-tolerance and reuse calculators.
//!
//! All arithmetic is carried out on exact rationals over decimal units
//! (1 GB/s = 10^9 B/s). Values are converted to `f64` only for display.

use num_rational::Ratio;
use thiserror::Error;

use crate::units::{Bandwidth, Bytes, Nanos};

pub type Exact = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("service time is zero: payload and header are both empty")]
    ZeroServiceTime,
    #[error("reuse factor must be at least 1")]
    ReuseBelowOne,
    #[error("payload must be at least one byte")]
    EmptyPayload,
}

/// Peak compute against the memory system that feeds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RooflinePoint {
    peak_ops_per_s: u64,
    mem_bandwidth: Bandwidth,
    element_size: Bytes,
}

impl RooflinePoint {
    pub fn new(
        peak_ops_per_s: u64,
        mem_bandwidth: Bandwidth,
        element_size: Bytes,
    ) -> Result<Self, AnalyticError> {
        if peak_ops_per_s == 0 {
            return Err(AnalyticError::NonPositive("peak_ops_per_s"));
        }
        if mem_bandwidth.0 == 0 {
            return Err(AnalyticError::NonPositive("mem_bandwidth"));
        }
        if element_size.0 == 0 {
            return Err(AnalyticError::NonPositive("element_size"));
        }
        Ok(Self {
            peak_ops_per_s,
            mem_bandwidth,
            element_size,
        })
    }

    pub fn peak_ops_per_s(&self) -> u64 {
        self.peak_ops_per_s
    }

    pub fn mem_bandwidth(&self) -> Bandwidth {
        self.mem_bandwidth
    }

    pub fn element_size(&self) -> Bytes {
        self.element_size
    }

    /// Operations per second the memory system can feed with no reuse.
    pub fn bw_limited_op_rate(&self) -> Exact {
        Exact::new(
            i128::from(self.mem_bandwidth.0),
            i128::from(self.element_size.0),
        )
    }

    /// Times each fetched element must be reused to sustain peak throughput.
    pub fn required_reuse(&self) -> Exact {
        Exact::from_integer(i128::from(self.peak_ops_per_s)) / self.bw_limited_op_rate()
    }

    /// Attainable op rate for a given reuse factor (the roofline).
    pub fn sustainable_ops(&self, reuse: Exact) -> Result<Exact, AnalyticError> {
        if reuse < Exact::from_integer(1) {
            return Err(AnalyticError::ReuseBelowOne);
        }
        let fed = reuse * self.bw_limited_op_rate();
        Ok(fed.min(Exact::from_integer(i128::from(self.peak_ops_per_s))))
    }
}

/// A link moving fixed-size transfers against a fixed access latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferScenario {
    pub link_bandwidth: Bandwidth,
    pub access_latency: Nanos,
    pub granularity: Bytes,
    pub header_bytes: Bytes,
}

impl TransferScenario {
    pub fn new(
        link_bandwidth: Bandwidth,
        access_latency: Nanos,
        granularity: Bytes,
        header_bytes: Bytes,
    ) -> Result<Self, AnalyticError> {
        if link_bandwidth.0 == 0 {
            return Err(AnalyticError::NonPositive("link_bandwidth"));
        }
        Ok(Self {
            link_bandwidth,
            access_latency,
            granularity,
            header_bytes,
        })
    }

    /// Link occupancy of one transfer in nanoseconds (exact).
    pub fn service_time(&self) -> Exact {
        let bytes = i128::from(self.granularity.0) + i128::from(self.header_bytes.0);
        Exact::new(bytes * 1_000_000_000, i128::from(self.link_bandwidth.0))
    }

    /// Little's-law concurrency needed to keep the link busy across one access latency.
    pub fn required_inflight(&self) -> Result<u64, AnalyticError> {
        let service = self.service_time();
        if service == Exact::from_integer(0) {
            return Err(AnalyticError::ZeroServiceTime);
        }
        let ratio = Exact::from_integer(i128::from(self.access_latency.0)) / service;
        Ok((ratio.ceil().to_integer() as u64).max(1))
    }

    /// Useful bytes per second when `inflight` transfers are outstanding.
    pub fn littles_law_bandwidth(&self, inflight: u64) -> Exact {
        let link = Exact::new(
            i128::from(self.link_bandwidth.0) * i128::from(self.granularity.0),
            i128::from(self.granularity.0 + self.header_bytes.0).max(1),
        );
        if self.access_latency.0 == 0 {
            return link;
        }
        let offered = Exact::new(
            i128::from(inflight) * i128::from(self.granularity.0) * 1_000_000_000,
            i128::from(self.access_latency.0),
        );
        offered.min(link)
    }
}

/// Fraction of link bytes that carry payload: `payload / (payload + header)`.
pub fn packet_efficiency(payload: Bytes, header: Bytes) -> Result<Exact, AnalyticError> {
    if payload.0 == 0 {
        return Err(AnalyticError::EmptyPayload);
    }
    Ok(Exact::new(
        i128::from(payload.0),
        i128::from(payload.0) + i128::from(header.0),
    ))
}

/// `1 - packet_efficiency`, i.e. `header / (payload + header)`.
pub fn packet_overhead(payload: Bytes, header: Bytes) -> Result<Exact, AnalyticError> {
    Ok(Exact::from_integer(1) - packet_efficiency(payload, header)?)
}

pub fn to_f64(x: Exact) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// One line of the reference-number table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRow {
    pub quantity: String,
    pub inputs: String,
    pub value: f64,
    pub unit: &'static str,
    pub target: f64,
    /// Relative tolerance the value must meet against `target`.
    pub tolerance: f64,
}

impl AnalyticRow {
    pub fn rel_error(&self) -> f64 {
        if self.target == 0.0 {
            return self.value.abs();
        }
        (self.value - self.target).abs() / self.target.abs()
    }

    pub fn passes(&self) -> bool {
        self.rel_error() <= self.tolerance + 1e-12
    }
}

const GB: u64 = 1_000_000_000;
const TERA: u64 = 1_000_000_000_000;

/// The reference figures: latency tolerance, reuse factors, no-reuse op rates,
/// and packet overheads, each paired with its published value.
pub fn reference_table() -> Vec<AnalyticRow> {
    let mut rows = Vec::new();
    let pcie = TransferScenario::new(Bandwidth(16 * GB), Nanos(64_000), Bytes(512), Bytes(0))
        .expect("valid");
    rows.push(AnalyticRow {
        quantity: "service_time".into(),
        inputs: "16GB/s, 512B, header 0B".into(),
        value: to_f64(pcie.service_time()),
        unit: "ns",
        target: 32.0,
        tolerance: 0.0,
    });
    rows.push(AnalyticRow {
        quantity: "required_inflight".into(),
        inputs: "16GB/s, 64us, 512B, header 0B".into(),
        value: pcie.required_inflight().expect("non-zero") as f64,
        unit: "requests",
        target: 2000.0,
        tolerance: 0.0,
    });

    let a100_fp16 = 312 * TERA;
    let p100_fp32 = 10_600_000_000_000;
    let reuse = |peak: u64, bw: u64, elem: u64| {
        RooflinePoint::new(peak, Bandwidth(bw), Bytes(elem))
            .expect("valid")
            .required_reuse()
    };
    rows.push(AnalyticRow {
        quantity: "required_reuse".into(),
        inputs: "312TFLOP/s FP16, 300GB/s, 2B".into(),
        value: to_f64(reuse(a100_fp16, 300 * GB, 2)),
        unit: "x",
        target: 2080.0,
        tolerance: 0.0,
    });
    rows.push(AnalyticRow {
        quantity: "required_reuse".into(),
        inputs: "312TFLOP/s FP16, 32GB/s, 2B".into(),
        value: to_f64(reuse(a100_fp16, 32 * GB, 2)),
        unit: "x",
        target: 19500.0,
        tolerance: 0.0,
    });
    rows.push(AnalyticRow {
        quantity: "required_reuse".into(),
        inputs: "312TFLOP/s FP16, 1555GB/s, 2B".into(),
        value: to_f64(reuse(a100_fp16, 1555 * GB, 2)),
        unit: "x",
        target: 400.0,
        tolerance: 0.01,
    });
    rows.push(AnalyticRow {
        quantity: "required_reuse".into(),
        inputs: "10.6TFLOP/s FP32, 732GB/s, 4B".into(),
        value: to_f64(reuse(p100_fp32, 732 * GB, 4)),
        unit: "x",
        target: 56.9,
        tolerance: 0.025,
    });

    let op_rate = |bw: u64, elem: u64| {
        to_f64(
            RooflinePoint::new(1, Bandwidth(bw), Bytes(elem))
                .expect("valid")
                .bw_limited_op_rate(),
        )
    };
    rows.push(AnalyticRow {
        quantity: "bw_limited_op_rate".into(),
        inputs: "1555GB/s, 2B".into(),
        value: op_rate(1555 * GB, 2),
        unit: "ops/s",
        target: 777e9,
        tolerance: 0.001,
    });
    rows.push(AnalyticRow {
        quantity: "bw_limited_op_rate".into(),
        inputs: "1555GB/s, 4B".into(),
        value: op_rate(1555 * GB, 4),
        unit: "ops/s",
        target: 389e9,
        tolerance: 0.001,
    });
    rows.push(AnalyticRow {
        quantity: "bw_limited_op_rate".into(),
        inputs: "732GB/s, 4B".into(),
        value: op_rate(732 * GB, 4),
        unit: "ops/s",
        target: 186e9,
        tolerance: 0.025,
    });

    let overhead = |p: u64, h: u64| to_f64(packet_overhead(Bytes(p), Bytes(h)).expect("p > 0"));
    rows.push(AnalyticRow {
        quantity: "packet_overhead".into(),
        inputs: "payload 4096B, header 16B".into(),
        value: overhead(4096, 16) * 100.0,
        unit: "%",
        target: 0.4,
        tolerance: 0.03,
    });
    rows.push(AnalyticRow {
        quantity: "packet_overhead".into(),
        inputs: "payload 32B, header 16B".into(),
        value: overhead(32, 16) * 100.0,
        unit: "%",
        target: 33.3,
        tolerance: 0.002,
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xfer(bw: u64, lat: u64, g: u64, h: u64) -> TransferScenario {
        TransferScenario::new(Bandwidth(bw), Nanos(lat), Bytes(g), Bytes(h)).unwrap()
    }

    fn roof(peak: u64, bw: u64, elem: u64) -> RooflinePoint {
        RooflinePoint::new(peak, Bandwidth(bw), Bytes(elem)).unwrap()
    }

    #[test]
    fn service_time_examples() {
        assert_eq!(xfer(16 * GB, 0, 512, 0).service_time(), Exact::from_integer(32));
        assert_eq!(xfer(16 * GB, 0, 4096, 0).service_time(), Exact::from_integer(256));
        assert_eq!(xfer(7, 0, 0, 0).service_time(), Exact::from_integer(0));
    }

    #[test]
    fn required_inflight_examples() {
        assert_eq!(xfer(16 * GB, 64_000, 512, 0).required_inflight(), Ok(2000));
        assert_eq!(xfer(16 * GB, 64_000, 4096, 0).required_inflight(), Ok(250));
        // latency equal to one service time
        assert_eq!(xfer(16 * GB, 32, 512, 0).required_inflight(), Ok(1));
        assert_eq!(xfer(16 * GB, 0, 512, 0).required_inflight(), Ok(1));
        assert_eq!(
            xfer(16 * GB, 64_000, 0, 0).required_inflight(),
            Err(AnalyticError::ZeroServiceTime)
        );
    }

    #[test]
    fn op_rate_and_reuse_examples() {
        assert_eq!(roof(1, 1555 * GB, 2).bw_limited_op_rate(), Exact::new(1_555_000_000_000, 2));
        assert_eq!(roof(1, 300 * GB, 2).bw_limited_op_rate(), Exact::from_integer(150_000_000_000));
        assert_eq!(roof(1, 4096, 4096).bw_limited_op_rate(), Exact::from_integer(1));

        assert_eq!(roof(312 * TERA, 300 * GB, 2).required_reuse(), Exact::from_integer(2080));
        assert_eq!(roof(312 * TERA, 32 * GB, 2).required_reuse(), Exact::from_integer(19500));
        let a100 = to_f64(roof(312 * TERA, 1555 * GB, 2).required_reuse());
        assert!((a100 - 401.286).abs() < 1e-3, "{a100}");
        assert_eq!(roof(150, 300, 2).required_reuse(), Exact::from_integer(1));
    }

    #[test]
    fn packet_efficiency_examples() {
        let small = packet_overhead(Bytes(4096), Bytes(16)).unwrap();
        assert_eq!(small, Exact::new(16, 4112));
        assert_eq!(format!("{:.2}", to_f64(small) * 100.0), "0.39");
        let cacheline = packet_overhead(Bytes(32), Bytes(16)).unwrap();
        assert_eq!(cacheline, Exact::new(1, 3));
        assert_eq!(packet_efficiency(Bytes(77), Bytes(0)).unwrap(), Exact::from_integer(1));
        assert_eq!(packet_efficiency(Bytes(0), Bytes(16)), Err(AnalyticError::EmptyPayload));
    }

    #[test]
    fn sustainable_ops_examples() {
        let p100 = roof(10_600_000_000_000, 732 * GB, 4);
        assert_eq!(
            p100.sustainable_ops(Exact::from_integer(1)).unwrap(),
            Exact::from_integer(183_000_000_000)
        );
        let a100 = roof(312 * TERA, 1555 * GB, 2);
        assert_eq!(
            a100.sustainable_ops(Exact::from_integer(400)).unwrap(),
            Exact::from_integer(311_000_000_000_000)
        );
        assert_eq!(
            a100.sustainable_ops(Exact::from_integer(1_000_000)).unwrap(),
            Exact::from_integer(312 * TERA as i128)
        );
        assert_eq!(
            a100.sustainable_ops(Exact::new(1, 2)),
            Err(AnalyticError::ReuseBelowOne)
        );
    }

    #[test]
    fn constructors_reject_non_positive_fields() {
        assert!(RooflinePoint::new(0, Bandwidth(1), Bytes(1)).is_err());
        assert!(RooflinePoint::new(1, Bandwidth(0), Bytes(1)).is_err());
        assert!(RooflinePoint::new(1, Bandwidth(1), Bytes(0)).is_err());
        assert!(TransferScenario::new(Bandwidth(0), Nanos(1), Bytes(1), Bytes(0)).is_err());
    }

    #[test]
    fn reference_table_meets_its_own_tolerances() {
        for row in reference_table() {
            assert!(row.passes(), "{row:?} rel_error {}", row.rel_error());
        }
    }

    proptest! {
        #[test]
        fn required_inflight_monotonicity(
            bw in 1u64..100_000_000_000,
            lat in 0u64..1_000_000,
            g in 1u64..65_536,
            h in 0u64..64,
            dg in 0u64..4096,
            dlat in 0u64..10_000,
            dbw in 0u64..1_000_000_000,
        ) {
            let base = xfer(bw, lat, g, h).required_inflight().unwrap();
            prop_assert!(xfer(bw, lat, g + dg, h).required_inflight().unwrap() <= base);
            prop_assert!(xfer(bw, lat + dlat, g, h).required_inflight().unwrap() >= base);
            prop_assert!(xfer(bw + dbw, lat, g, h).required_inflight().unwrap() >= base);
        }

        #[test]
        fn reuse_times_rate_is_peak(peak in 1u64..1_000_000_000_000_000, bw in 1u64..10_000_000_000_000, elem in 1u64..16) {
            let r = roof(peak, bw, elem);
            prop_assert_eq!(r.required_reuse() * r.bw_limited_op_rate(), Exact::from_integer(i128::from(peak)));
        }

        #[test]
        fn efficiency_increases_with_payload(p in 1u64..1_000_000, dp in 1u64..1_000_000, h in 1u64..128) {
            let a = packet_efficiency(Bytes(p), Bytes(h)).unwrap();
            let b = packet_efficiency(Bytes(p + dp), Bytes(h)).unwrap();
            prop_assert!(b > a);
            prop_assert!(b <= Exact::from_integer(1));
        }

        #[test]
        fn service_time_round_trip(bw in 1u64..100_000_000_000, g in 0u64..1_000_000, h in 0u64..64) {
            let s = xfer(bw, 0, g, h);
            let bytes = s.service_time() * Exact::from_integer(i128::from(bw)) / Exact::from_integer(1_000_000_000);
            prop_assert_eq!(bytes, Exact::from_integer(i128::from(g + h)));
        }
    }
}
