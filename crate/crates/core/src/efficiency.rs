//! Parameter counts, expressiveness and the optimal partition size.
//!
//! With embedding size `D = K·C` the non-shared model has
//! `T = |E|D + |R|D + K·C³` parameters and expressiveness `E = |R|·D·C`
//! (one `C × C` linear map per partition and relation). Their ratio
//!
//! ```text
//! P = E / T = |R|·C / (|E| + |R| + C²)
//! ```
//!
//! does not depend on `D` or `K` and peaks at `C = √(|E| + |R|)`.

use alloc::format;
use alloc::string::String;
use core::fmt;

use crate::error::{Error, Result};

fn check_split(d: u64, k: u64, c: u64) -> Result<()> {
    if k == 0 || c == 0 || d != k * c {
        return Err(Error::Config(format!("embedding size D={d} must equal K*C={k}*{c}")));
    }
    Ok(())
}

/// Core parameters: `C³` for one shared core, `K·C³` otherwise.
pub fn core_count(k: u64, c: u64, shared_core: bool) -> u64 {
    let one = c * c * c;
    if shared_core {
        one
    } else {
        k * one
    }
}

/// `|E|·D + |R|·D + (1 or K)·C³`.
pub fn param_count(num_entities: u64, num_relations: u64, d: u64, k: u64, c: u64, shared_core: bool) -> Result<u64> {
    check_split(d, k, c)?;
    Ok((num_entities + num_relations) * d + core_count(k, c, shared_core))
}

/// `|R|·D·C`.
pub fn expressiveness(num_relations: u64, d: u64, c: u64) -> u64 {
    num_relations * d * c
}

/// `P` as a function of `C` alone.
pub fn partition_efficiency(num_entities: u64, num_relations: u64, c: u64) -> f64 {
    (num_relations * c) as f64 / (num_entities + num_relations + c * c) as f64
}

/// Expressiveness over the non-shared parameter count.
pub fn efficiency(num_entities: u64, num_relations: u64, d: u64, k: u64, c: u64) -> Result<f64> {
    let t = param_count(num_entities, num_relations, d, k, c, false)?;
    Ok(expressiveness(num_relations, d, c) as f64 / t as f64)
}

/// Whether `P(a) > P(b)`, compared exactly by cross-multiplication.
fn more_efficient(n: u128, a: u128, b: u128) -> bool {
    a * (n + b * b) > b * (n + a * a)
}

fn isqrt(n: u64) -> u64 {
    let mut r = libm::sqrt(n as f64) as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Floor or ceiling of `√(|E| + |R|)`, whichever has the larger `P`
/// (floor on ties), before clamping to `D`.
pub fn unclamped_partition_size(num_entities: u64, num_relations: u64) -> u64 {
    let n = num_entities + num_relations;
    let lo = isqrt(n).max(1);
    let hi = if lo * lo == n { lo } else { lo + 1 };
    if more_efficient(n as u128, hi as u128, lo as u128) {
        hi
    } else {
        lo
    }
}

/// `min(⌊√(|E| + |R|)⌉, D)` with the rounding above.
pub fn optimal_partition_size(num_entities: u64, num_relations: u64, d: u64) -> u64 {
    unclamped_partition_size(num_entities, num_relations).min(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub num_entities: u64,
    pub num_relations: u64,
    pub d: u64,
    pub k: u64,
    pub c: u64,
    pub shared_core: bool,
    /// Parameter count under `shared_core`.
    pub total: u64,
    pub total_shared: u64,
    pub total_non_shared: u64,
    /// Core parameters under `shared_core`.
    pub core: u64,
    pub expressiveness: u64,
    /// `expressiveness / total_non_shared`.
    pub efficiency: f64,
    /// Best partition size before clamping to `D`.
    pub c_opt: u64,
    pub c_star: u64,
}

impl EfficiencyReport {
    pub fn new(num_entities: u64, num_relations: u64, d: u64, k: u64, c: u64, shared_core: bool) -> Result<Self> {
        if num_entities == 0 || num_relations == 0 {
            return Err(Error::Config("need at least one entity and one relation".into()));
        }
        let total_shared = param_count(num_entities, num_relations, d, k, c, true)?;
        let total_non_shared = param_count(num_entities, num_relations, d, k, c, false)?;
        Ok(Self {
            num_entities,
            num_relations,
            d,
            k,
            c,
            shared_core,
            total: if shared_core { total_shared } else { total_non_shared },
            total_shared,
            total_non_shared,
            core: core_count(k, c, shared_core),
            expressiveness: expressiveness(num_relations, d, c),
            efficiency: efficiency(num_entities, num_relations, d, k, c)?,
            c_opt: unclamped_partition_size(num_entities, num_relations),
            c_star: optimal_partition_size(num_entities, num_relations, d),
        })
    }

    pub const RECORD_HEADER: &'static str =
        "entities\trelations\tD\tK\tC\tshared\ttotal\ttotal_shared\ttotal_non_shared\tcore\texpressiveness\tefficiency\tc_opt\tc_star";

    pub fn record(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6e}\t{}\t{}",
            self.num_entities,
            self.num_relations,
            self.d,
            self.k,
            self.c,
            self.shared_core,
            self.total,
            self.total_shared,
            self.total_non_shared,
            self.core,
            self.expressiveness,
            self.efficiency,
            self.c_opt,
            self.c_star
        )
    }
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 14] = [
            ("entities", format!("{}", self.num_entities)),
            ("relations", format!("{}", self.num_relations)),
            ("D", format!("{}", self.d)),
            ("K", format!("{}", self.k)),
            ("C", format!("{}", self.c)),
            ("shared_core", format!("{}", self.shared_core)),
            ("total", format!("{}", self.total)),
            ("total_shared", format!("{}", self.total_shared)),
            ("total_non_shared", format!("{}", self.total_non_shared)),
            ("core", format!("{}", self.core)),
            ("expressiveness", format!("{}", self.expressiveness)),
            ("efficiency", format!("{:.6e}", self.efficiency)),
            ("c_opt", format!("{}", self.c_opt)),
            ("c_star", format!("{}", self.c_star)),
        ];
        for (i, (key, value)) in rows.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{key:<17}{value:>14}")?;
        }
        Ok(())
    }
}
