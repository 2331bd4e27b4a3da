//! Harmonic energy under the flowed metrics `g_t`.

use rayon::prelude::*;

use super::{harmonic_energy, relative_gap, SigmaMap, SurfaceGrid, TargetMetric};
use crate::error::{Error, Result};
use crate::extrapolate::linear_to_zero;
use crate::manifold::{interpolation_weights, SymForm};
use crate::otto_flow::OttoFlow;
use crate::transport::{w2_exact, DiscreteMeasure};

/// Coarse Wasserstein-speed check at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedOptions {
    pub t: f64,
    /// Samples per axis of the surface grid.
    pub subsample: usize,
    /// Half-width, in grid steps, of the centered difference along each axis.
    pub step: usize,
}

/// Subsampled energy from `g_t` and from `W_2` speeds of heat measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedEstimate {
    pub t: f64,
    pub pullback: f64,
    pub wasserstein: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformedEnergy {
    pub t: Vec<f64>,
    /// `E[phi, g_t]` per schedule entry.
    pub energy: Vec<f64>,
    /// `E[phi, g]`.
    pub base: f64,
    /// Linear extrapolation of `energy` to `t = 0`.
    pub extrapolated: f64,
    /// `|extrapolated - base| / base`.
    pub gap: f64,
    pub speed: Option<SpeedEstimate>,
}

impl DeformedEnergy {
    /// Rows `t,energy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy\n");
        for (t, e) in self.t.iter().zip(&self.energy) {
            s.push_str(&format!("{t:.17e},{e:.17e}\n"));
        }
        s
    }
}

/// `E[phi, g_t]` along `schedule`, with an optional `W_2` speed estimate.
pub fn deformed_energy_flow(
    flow: &OttoFlow<'_>,
    grid: &SurfaceGrid,
    map: &SigmaMap,
    schedule: &[f64],
    speed: Option<SpeedOptions>,
) -> Result<DeformedEnergy> {
    let m = flow.manifold();
    let verts = map.image_vertices();
    let base = harmonic_energy(m, grid, map, TargetMetric::Base)?;
    let mut energy = Vec::with_capacity(schedule.len());
    let field_at = |t: f64| -> Result<Vec<Option<SymForm>>> {
        let mut field = vec![None; m.n()];
        for g in flow.flowed_metric_at(t, &verts)? {
            field[g.z] = Some(g.g);
        }
        Ok(field)
    };
    for &t in schedule {
        energy.push(harmonic_energy(m, grid, map, TargetMetric::Field(&field_at(t)?))?);
    }
    let extrapolated = linear_to_zero(schedule, &energy)?;
    let gap = if base > 0.0 { (extrapolated - base).abs() / base } else { extrapolated.abs() };
    let speed = match speed {
        Some(opts) => Some(speed_estimate(flow, grid, map, &field_at(opts.t)?, opts)?),
        None => None,
    };
    Ok(DeformedEnergy { t: schedule.to_vec(), energy, base, extrapolated, gap, speed })
}

fn speed_estimate(
    flow: &OttoFlow<'_>,
    grid: &SurfaceGrid,
    map: &SigmaMap,
    field: &[Option<SymForm>],
    opts: SpeedOptions,
) -> Result<SpeedEstimate> {
    let m = flow.manifold();
    let h = flow.heat();
    let n = grid.m();
    let t = opts.t;
    if opts.subsample == 0 || opts.subsample > n || opts.step == 0 || 2 * opts.step >= n {
        return Err(Error::InvalidParameter(format!(
            "speed subsample {} / step {} do not fit a {n}^2 grid",
            opts.subsample, opts.step
        )));
    }
    let measure = |k: usize| -> Result<DiscreteMeasure> {
        let w = interpolation_weights(m, map.vertex(k), &map.offset(k))?;
        DiscreteMeasure::from_density(m, &h.heat_kernel_mixture(t, &w)?)
    };
    let span = 2.0 * opts.step as f64 * grid.spacing();
    let samples: Vec<usize> = (0..opts.subsample)
        .flat_map(|j| (0..opts.subsample).map(move |i| (i, j)))
        .map(|(i, j)| grid.index((i * n / opts.subsample) as isize, (j * n / opts.subsample) as isize))
        .collect();
    let weight = (n * n) as f64 / (opts.subsample * opts.subsample) as f64;
    let parts: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|&k| {
            let v = map.vertex(k);
            let g = field[v].ok_or_else(|| Error::InvalidParameter(format!("no metric at vertex {v}")))?;
            let (mut pb, mut ws) = (0.0, 0.0);
            for a in 0..2 {
                let (kp, km) = (walk(grid, k, a, opts.step as isize), walk(grid, k, a, -(opts.step as isize)));
                let lp = m.log_at(v, map.point(kp));
                let lm = m.log_at(v, map.point(km));
                let d = [(lp[0] - lm[0]) / span, (lp[1] - lm[1]) / span];
                pb += g[0] * d[0] * d[0] + 2.0 * g[1] * d[0] * d[1] + g[2] * d[1] * d[1];
                let w = w2_exact(m, &measure(kp)?, &measure(km)?)?.distance / span;
                ws += w * w;
            }
            let s = 0.5 * weight * grid.area(k) * grid.inverse_metric(k);
            Ok((s * pb, s * ws))
        })
        .collect::<Result<_>>()?;
    let pullback = parts.iter().map(|p| p.0).sum();
    let wasserstein = parts.iter().map(|p| p.1).sum();
    Ok(SpeedEstimate { t, pullback, wasserstein, gap: relative_gap(pullback, wasserstein) })
}

fn walk(grid: &SurfaceGrid, k: usize, a: usize, s: isize) -> usize {
    let m = grid.m();
    let (i, j) = ((k % m) as isize, (k / m) as isize);
    if a == 0 {
        grid.index(i + s, j)
    } else {
        grid.index(i, j + s)
    }
}
