//! Metric families shared by the integration tests.
#![allow(dead_code)]

use berwald_core::metric::MetricFamily;
use berwald_core::spec_file::parse_metric_spec;

pub const EUCLIDEAN: &str = "family = riemannian; dim = 2; a = [[1, 0], [0, 1]];";
pub const CONFORMAL: &str = "family = riemannian; dim = 2; a = [[exp(0.2*x1), 0], [0, exp(0.2*x1)]];";
pub const MINKOWSKI_RANDERS: &str = "family = randers; dim = 2; b = [0.3, 0];";
pub const FRAME_RANDERS: &str =
    "family = frame_minkowski; dim = 2; frame = [[1, 0], [0, exp(x1)]]; minkowski_b = [0.3, 0];";
pub const NON_GB_RANDERS: &str = "family = randers; dim = 2; b = [0.3 + 0.2*sin(x1), 0];";
pub const FRAME_RANDERS_3D: &str = "family = frame_minkowski; dim = 3; \
    frame = [[1, 0, 0], [0, exp(x1), 0], [0, 0, 1 + 0.5*x2]]; minkowski_b = [0.2, 0.1, 0];";
pub const TILTED_RANDERS: &str =
    "family = randers; dim = 2; a = [[2 + sin(x2), 0.3*x1], [0.3*x1, 1.5]]; b = [0.2*cos(x1), 0.1 + 0.1*x2];";

pub fn family(text: &str) -> MetricFamily {
    parse_metric_spec(text).expect("test family parses")
}

/// The five two-dimensional families of the acceptance suite, by name.
pub fn five_families() -> Vec<(&'static str, MetricFamily)> {
    vec![
        ("euclidean", family(EUCLIDEAN)),
        ("conformal", family(CONFORMAL)),
        ("minkowski_randers", family(MINKOWSKI_RANDERS)),
        ("frame_randers", family(FRAME_RANDERS)),
        ("nongb_randers", family(NON_GB_RANDERS)),
    ]
}
