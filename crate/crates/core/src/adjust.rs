//! The Moore-Penrose intercept functional of a log-linear design and the
//! adjusted count vectors of the estimator family.
//!
//! For a full-rank design `X`, the first row `z` of `(XᵀX)⁻¹Xᵀ` expresses the
//! intercept as `λ₀ = Σ zᵢ log mᵢ`, i.e. `m₀ = Π mᵢ^zᵢ`. Cells with negative
//! `zᵢ` sit in the denominator of the missing-cell estimate; the Chapman
//! adjustment adds `−zᵢ` to exactly those counts.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::patterns::{build_design, CountTable, ModelSpec};

/// Entries of `z` within this distance of zero are treated as zero.
pub const Z_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ZVector {
    model: ModelSpec,
    z: Vec<f64>,
    z_neg: Vec<f64>,
}

impl ZVector {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Intercept row of the Moore-Penrose inverse, canonical cell order.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Negative part of `z`; entries above `−1e−9` are exactly zero.
    pub fn z_neg(&self) -> &[f64] {
        &self.z_neg
    }
}

pub fn z_vector(model: &ModelSpec) -> Result<ZVector> {
    let x = build_design(model).matrix().clone();
    let cols = x.ncols();
    let qr = x.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rank = r
        .diagonal()
        .iter()
        .filter(|v| v.abs() > 1e-10 * scale)
        .count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    // z = Q R⁻ᵀ e₁
    let mut e1 = DVector::zeros(cols);
    e1[0] = 1.0;
    let w = r
        .transpose()
        .solve_lower_triangular(&e1)
        .ok_or(Error::RankDeficient { rank, cols })?;
    // entries are small-denominator rationals; snapping removes QR round-off
    let z: Vec<f64> = (qr.q() * w).iter().map(|&v| snapped(v)).collect();
    let z_neg = z
        .iter()
        .map(|&v| if v < -Z_TOLERANCE { v } else { 0.0 })
        .collect();
    Ok(ZVector {
        model: model.clone(),
        z,
        z_neg,
    })
}

/// Counts `n − z₍<0₎`: denominator cells grow by `|zᵢ|`, all others unchanged.
pub fn chapman_adjusted_counts(n: &CountTable, model: &ModelSpec) -> Result<CountTable> {
    check_dims(n, model)?;
    let z = z_vector(model)?;
    let values = n
        .values()
        .iter()
        .zip(z.z_neg())
        .map(|(v, zn)| v - zn)
        .collect();
    CountTable::new(n.k(), values)
}

fn check_dims(n: &CountTable, model: &ModelSpec) -> Result<()> {
    if n.k() != model.k() {
        return Err(Error::DimensionMismatch {
            table: n.k(),
            model: model.k(),
        });
    }
    Ok(())
}

/// Pseudo-counts that each estimator feeds to the maximum-likelihood fit.
///
/// The Firth-type estimator has no fixed adjustment (its correction depends on
/// the current fit), so it is rejected here.
pub fn adjusted_counts(
    estimator: Estimator,
    n: &CountTable,
    model: &ModelSpec,
) -> Result<CountTable> {
    check_dims(n, model)?;
    let k = n.k();
    let unsupported = |detail| Error::Unsupported {
        estimator: estimator.name(),
        k,
        detail,
    };
    let v = n.values();
    match estimator {
        Estimator::Ml | Estimator::Lp => Ok(n.clone()),
        Estimator::EvansBonett => {
            let add = 0.5f64.powi(k as i32 - 1);
            CountTable::new(k, v.iter().map(|x| x + add).collect())
        }
        Estimator::ChapmanDse | Estimator::Bailey if k != 2 => {
            Err(unsupported(" (two sources only)"))
        }
        Estimator::ChapmanDse => CountTable::new(2, vec![v[0] + 1.0, v[1], v[2]]),
        Estimator::Bailey => {
            if v[2] < 1.0 {
                return Err(Error::Table(format!(
                    "Bailey adjustment needs n01 >= 1, got {}",
                    v[2]
                )));
            }
            CountTable::new(2, vec![v[0] + 1.0, v[1], v[2] - 1.0])
        }
        Estimator::RivestLevesque => {
            // two sources: coincides with Chapman
            if k == 2 {
                return CountTable::new(2, vec![v[0] + 1.0, v[1], v[2]]);
            }
            if k != 3 {
                return Err(unsupported(
                    " (adjusted counts are defined for two or three sources)",
                ));
            }
            // independence: +1/3 to pairs, +1/6 to singles; otherwise +2/3 to pairs
            let independence = model.is_independence();
            let values = n
                .patterns()
                .zip(v)
                .map(|(p, x)| match (p.count_ones(), independence) {
                    (2, true) => x + 1.0 / 3.0,
                    (2, false) => x + 2.0 / 3.0,
                    (1, true) => x + 1.0 / 6.0,
                    _ => *x,
                })
                .collect();
            CountTable::new(3, values)
        }
        Estimator::ChapmanMse => chapman_adjusted_counts(n, model),
        Estimator::Cfk => Err(unsupported(" (the Firth-type fit adjusts internally)")),
    }
}

/// Closest fraction `p/q` with `q <= max_den` to `x`, if one lies within
/// `1e−9`. Used for display only.
pub fn snap_rational(x: f64, max_den: i64) -> Option<(i64, i64)> {
    (1..=max_den).find_map(|q| {
        let p = (x * q as f64).round();
        ((x - p / q as f64).abs() < Z_TOLERANCE).then_some((p as i64, q))
    })
}

/// `x` replaced by its snapped fraction value (and `-0` by `0`) when one exists.
pub fn snapped(x: f64) -> f64 {
    match snap_rational(x, 1000) {
        Some((0, _)) => 0.0,
        Some((p, q)) => p as f64 / q as f64,
        None => x,
    }
}
