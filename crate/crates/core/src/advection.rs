//! Piacsek-Williams style flux-form advection of U, V and W.
//!
//! Each cell's source terms are built from its 3x3x3 neighborhood with a
//! fixed evaluation order of 21 additions/subtractions and 32 multiplications:
//!
//! ```text
//! shared interface velocities (6 add, 2 mul):
//!   ax_lo = u[x-1] + u[0]          ax_hi = u[0] + u[x+1]
//!   ay_lo = v[y-1] + v[0]          ay_hi = v[0] + v[y+1]
//!   az_lo = 0.5 * (w[z-1] + w[0])  az_hi = 0.5 * (w[0] + w[z+1])
//! per field f in {u, v, w} (5 add/sub, 10 mul each):
//!   f_x = tcx * (f[x-1] * ax_lo - f[x+1] * ax_hi)
//!   f_y = tcy * (f[y-1] * ay_lo - f[y+1] * ay_hi)
//!   f_z = (tzc1[k] * f[z-1]) * az_lo - (tzc2[k] * f[z+1]) * az_hi
//!   s_f = (f_x + f_y) + f_z
//! ```
//!
//! Every execution path calls [`compute_cell`], so results agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryRule, Field3, GridDims};
use crate::scalar::Scalar;

/// Floating-point operations per cell.
pub const FLOPS_PER_CELL: u64 = 53;
pub const ADDSUB_PER_CELL: u64 = 21;
pub const MUL_PER_CELL: u64 = 32;

/// Static operation counts of [`compute_cell`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopProfile {
    pub total: u64,
    pub addsub: u64,
    pub mul: u64,
}

pub fn flop_profile() -> FlopProfile {
    FlopProfile {
        total: FLOPS_PER_CELL,
        addsub: ADDSUB_PER_CELL,
        mul: MUL_PER_CELL,
    }
}

/// The depth-one neighborhood of one cell for all three fields.
///
/// Values are indexed by offsets in -1..=1 along x, y and z; see [`patch_index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilPatch<T> {
    pub u: [T; 27],
    pub v: [T; 27],
    pub w: [T; 27],
}

/// Position of offset `(dx, dy, dz)` inside a 27-value neighborhood.
#[inline]
pub const fn patch_index(dx: isize, dy: isize, dz: isize) -> usize {
    ((dx + 1) * 9 + (dy + 1) * 3 + (dz + 1)) as usize
}

const CENTER: usize = patch_index(0, 0, 0);
const XM: usize = patch_index(-1, 0, 0);
const XP: usize = patch_index(1, 0, 0);
const YM: usize = patch_index(0, -1, 0);
const YP: usize = patch_index(0, 1, 0);
const ZM: usize = patch_index(0, 0, -1);
const ZP: usize = patch_index(0, 0, 1);

impl<T: Scalar> StencilPatch<T> {
    pub fn zeros() -> Self {
        StencilPatch {
            u: [T::zero(); 27],
            v: [T::zero(); 27],
            w: [T::zero(); 27],
        }
    }

    pub fn uniform(value: T) -> Self {
        StencilPatch {
            u: [value; 27],
            v: [value; 27],
            w: [value; 27],
        }
    }
}

/// Grid-spacing factors for the three directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvectionCoefficients {
    pub tcx: f64,
    pub tcy: f64,
    /// Lower-interface vertical factor per z level.
    pub tzc1: Vec<f64>,
    /// Upper-interface vertical factor per z level.
    pub tzc2: Vec<f64>,
}

impl AdvectionCoefficients {
    /// Every factor set to 0.25.
    pub fn uniform(nz: usize) -> Self {
        AdvectionCoefficients {
            tcx: 0.25,
            tcy: 0.25,
            tzc1: vec![0.25; nz],
            tzc2: vec![0.25; nz],
        }
    }

    pub fn validate(&self, nz: usize) -> Result<()> {
        if self.tzc1.len() != nz || self.tzc2.len() != nz {
            return Err(Error::Config(format!(
                "vertical coefficients have lengths {}/{}, grid has {nz} levels",
                self.tzc1.len(),
                self.tzc2.len()
            )));
        }
        let finite = [self.tcx, self.tcy]
            .iter()
            .chain(&self.tzc1)
            .chain(&self.tzc2)
            .all(|c| c.is_finite());
        if !finite {
            return Err(Error::Config(
                "advection coefficients must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Source terms for all three fields of one cell, in the documented order.
#[inline]
pub fn compute_cell<T: Scalar>(
    patch: &StencilPatch<T>,
    coeff: &AdvectionCoefficients,
    k: usize,
) -> [T; 3] {
    let tcx = T::from_f64(coeff.tcx);
    let tcy = T::from_f64(coeff.tcy);
    let tzc1 = T::from_f64(coeff.tzc1[k]);
    let tzc2 = T::from_f64(coeff.tzc2[k]);
    let half = T::from_f64(0.5);

    let (u, v, w) = (&patch.u, &patch.v, &patch.w);
    let ax_lo = u[XM] + u[CENTER];
    let ax_hi = u[CENTER] + u[XP];
    let ay_lo = v[YM] + v[CENTER];
    let ay_hi = v[CENTER] + v[YP];
    let az_lo = half * (w[ZM] + w[CENTER]);
    let az_hi = half * (w[CENTER] + w[ZP]);

    let term = |f: &[T; 27]| {
        let fx = tcx * (f[XM] * ax_lo - f[XP] * ax_hi);
        let fy = tcy * (f[YM] * ay_lo - f[YP] * ay_hi);
        let fz = (tzc1 * f[ZM]) * az_lo - (tzc2 * f[ZP]) * az_hi;
        (fx + fy) + fz
    };
    [term(u), term(v), term(w)]
}

/// Gathers the neighborhood of `(i, j, k)` under `rule`.
pub fn gather_patch<T: Scalar>(
    fields: [&Field3<T>; 3],
    i: usize,
    j: usize,
    k: usize,
    rule: BoundaryRule,
) -> StencilPatch<T> {
    let d = fields[0].dims();
    let mut patch = StencilPatch::zeros();
    for dx in -1..=1isize {
        let ii = rule.lateral(i, dx, d.x);
        for dy in -1..=1isize {
            let jj = rule.lateral(j, dy, d.y);
            for dz in -1..=1isize {
                let kk = rule.vertical(k, dz, d.z);
                let at = patch_index(dx, dy, dz);
                patch.u[at] = fields[0].get(ii, jj, kk);
                patch.v[at] = fields[1].get(ii, jj, kk);
                patch.w[at] = fields[2].get(ii, jj, kk);
            }
        }
    }
    patch
}

/// Source-term fields SU, SV, SW.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms<T> {
    pub su: Field3<T>,
    pub sv: Field3<T>,
    pub sw: Field3<T>,
}

impl<T: Scalar> SourceTerms<T> {
    pub fn zeros(dims: GridDims) -> Self {
        SourceTerms {
            su: Field3::zeros(dims),
            sv: Field3::zeros(dims),
            sw: Field3::zeros(dims),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.su.dims()
    }

    pub fn fields(&self) -> [&Field3<T>; 3] {
        [&self.su, &self.sv, &self.sw]
    }

    pub fn fields_mut(&mut self) -> [&mut Field3<T>; 3] {
        [&mut self.su, &mut self.sv, &mut self.sw]
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.su.bit_eq(&other.su) && self.sv.bit_eq(&other.sv) && self.sw.bit_eq(&other.sw)
    }

    /// Stores one cell's three source terms.
    #[inline]
    pub fn set_cell(&mut self, i: usize, j: usize, k: usize, values: [T; 3]) {
        self.su.set(i, j, k, values[0]);
        self.sv.set(i, j, k, values[1]);
        self.sw.set(i, j, k, values[2]);
    }
}

pub(crate) fn check_inputs<T: Scalar>(
    u: &Field3<T>,
    v: &Field3<T>,
    w: &Field3<T>,
    coeff: &AdvectionCoefficients,
) -> Result<GridDims> {
    let d = u.dims();
    if v.dims() != d || w.dims() != d {
        return Err(Error::Domain(format!(
            "field dims differ: {} / {} / {}",
            d,
            v.dims(),
            w.dims()
        )));
    }
    d.validate()?;
    coeff.validate(d.z)?;
    Ok(d)
}

/// Reference triple loop over every cell.
pub fn naive_advect<T: Scalar>(
    u: &Field3<T>,
    v: &Field3<T>,
    w: &Field3<T>,
    coeff: &AdvectionCoefficients,
    rule: BoundaryRule,
) -> Result<SourceTerms<T>> {
    let d = check_inputs(u, v, w, coeff)?;
    let mut out = SourceTerms::zeros(d);
    for i in 0..d.x {
        for j in 0..d.y {
            for k in 0..d.z {
                if rule.zero_level(k) {
                    continue;
                }
                let patch = gather_patch([u, v, w], i, j, k, rule);
                out.set_cell(i, j, k, compute_cell(&patch, coeff, k));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::generate_fields;
    use crate::scalar::Counted;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-line evaluation with named neighbors, written out per field.
    fn straight_line(p: &StencilPatch<f64>, c: &AdvectionCoefficients, k: usize) -> [f64; 3] {
        let at = |f: &[f64; 27], dx: isize, dy: isize, dz: isize| f[patch_index(dx, dy, dz)];
        let (u, v, w) = (&p.u, &p.v, &p.w);
        let u_w = at(u, -1, 0, 0);
        let u_c = at(u, 0, 0, 0);
        let u_e = at(u, 1, 0, 0);
        let v_s = at(v, 0, -1, 0);
        let v_c = at(v, 0, 0, 0);
        let v_n = at(v, 0, 1, 0);
        let w_b = at(w, 0, 0, -1);
        let w_c = at(w, 0, 0, 0);
        let w_t = at(w, 0, 0, 1);
        let east_west = [u_w + u_c, u_c + u_e];
        let south_north = [v_s + v_c, v_c + v_n];
        let bottom_top = [0.5 * (w_b + w_c), 0.5 * (w_c + w_t)];
        let mut out = [0.0; 3];
        for (n, f) in [u, v, w].into_iter().enumerate() {
            let x_part = c.tcx * (at(f, -1, 0, 0) * east_west[0] - at(f, 1, 0, 0) * east_west[1]);
            let y_part =
                c.tcy * (at(f, 0, -1, 0) * south_north[0] - at(f, 0, 1, 0) * south_north[1]);
            let lower = c.tzc1[k] * at(f, 0, 0, -1);
            let upper = c.tzc2[k] * at(f, 0, 0, 1);
            let z_part = lower * bottom_top[0] - upper * bottom_top[1];
            out[n] = x_part + y_part + z_part;
        }
        out
    }

    fn random_patch(seed: u64) -> StencilPatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = StencilPatch::zeros();
        for f in [&mut p.u, &mut p.v, &mut p.w] {
            for x in f.iter_mut() {
                *x = rng.gen_range(-1.0..=1.0);
            }
        }
        p
    }

    #[test]
    fn zero_and_uniform_patches_vanish() {
        let c = AdvectionCoefficients::uniform(4);
        assert_eq!(compute_cell(&StencilPatch::<f64>::zeros(), &c, 1), [0.0; 3]);
        for value in [1.0, -0.37, 123.5] {
            let out = compute_cell(&StencilPatch::uniform(value), &c, 2);
            assert_eq!(out, [0.0; 3]);
        }
    }

    #[test]
    fn matches_straight_line_oracle_bitwise() {
        let mut c = AdvectionCoefficients::uniform(3);
        c.tzc1 = vec![0.3, 0.21, 0.17];
        c.tzc2 = vec![0.11, 0.29, 0.4];
        for seed in [7u64, 8, 9, 10] {
            let p = random_patch(seed);
            for k in 0..3 {
                let got = compute_cell(&p, &c, k);
                let want = straight_line(&p, &c, k);
                for n in 0..3 {
                    assert_eq!(
                        got[n].to_bits(),
                        want[n].to_bits(),
                        "seed {seed} k {k} field {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn instrumented_cell_counts_53_ops() {
        let p = random_patch(3);
        let counted = StencilPatch {
            u: p.u.map(Counted),
            v: p.v.map(Counted),
            w: p.w.map(Counted),
        };
        let c = AdvectionCoefficients::uniform(3);
        Counted::<f64>::reset();
        let out = compute_cell(&counted, &c, 1);
        let tally = Counted::<f64>::tally();
        assert_eq!(tally.addsub, 21);
        assert_eq!(tally.mul, 32);
        assert_eq!(tally.total(), 53);
        let plain = compute_cell(&p, &c, 1);
        assert_eq!(out.map(|x| x.0), plain);

        let profile = flop_profile();
        assert_eq!((profile.total, profile.addsub, profile.mul), (53, 21, 32));
        assert_eq!(profile.addsub + profile.mul, profile.total);
    }

    fn dims(x: usize, y: usize, z: usize) -> GridDims {
        GridDims::new(x, y, z).unwrap()
    }

    #[test]
    fn zero_fields_give_zero_terms() {
        let d = dims(4, 4, 4);
        let z = Field3::<f64>::zeros(d);
        let c = AdvectionCoefficients::uniform(4);
        let out = naive_advect(&z, &z, &z, &c, BoundaryRule::default()).unwrap();
        assert!(out.bit_eq(&SourceTerms::zeros(d)));
    }

    #[test]
    fn uniform_fields_give_zero_terms() {
        let d = dims(5, 4, 6);
        let f = Field3::filled(d, 0.75);
        let c = AdvectionCoefficients::uniform(6);
        for rule in [BoundaryRule::PeriodicXyZeroFloor, BoundaryRule::Clamp] {
            let out = naive_advect(&f, &f, &f, &c, rule).unwrap();
            for s in out.fields() {
                assert!(s.data().iter().all(|x| *x == 0.0));
            }
        }
    }

    /// Recomputes a cell from neighbors fetched with explicit wraparound.
    fn brute_cell(
        fields: &[Field3<f64>; 3],
        c: &AdvectionCoefficients,
        i: usize,
        j: usize,
        k: usize,
    ) -> [f64; 3] {
        let d = fields[0].dims();
        if k == 0 {
            return [0.0; 3];
        }
        let mut p = StencilPatch::zeros();
        for dx in -1..=1isize {
            for dy in -1..=1isize {
                for dz in -1..=1isize {
                    let ii = ((i as isize + dx + d.x as isize) % d.x as isize) as usize;
                    let jj = ((j as isize + dy + d.y as isize) % d.y as isize) as usize;
                    let kk = (k as isize + dz).min(d.z as isize - 1) as usize;
                    let at = patch_index(dx, dy, dz);
                    p.u[at] = fields[0].get(ii, jj, kk);
                    p.v[at] = fields[1].get(ii, jj, kk);
                    p.w[at] = fields[2].get(ii, jj, kk);
                }
            }
        }
        straight_line(&p, c, k)
    }

    #[test]
    fn naive_matches_per_cell_gather() {
        let d = dims(4, 4, 4);
        let f = generate_fields(d, 1);
        let c = AdvectionCoefficients::uniform(4);
        let out = naive_advect(&f[0], &f[1], &f[2], &c, BoundaryRule::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let want = brute_cell(&f, &c, i, j, k);
                    let got = [
                        out.su.get(i, j, k),
                        out.sv.get(i, j, k),
                        out.sw.get(i, j, k),
                    ];
                    for n in 0..3 {
                        assert_eq!(got[n].to_bits(), want[n].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn bottom_level_is_zero_by_default() {
        let d = dims(5, 5, 5);
        let f = generate_fields(d, 4);
        let c = AdvectionCoefficients::uniform(5);
        let out = naive_advect(&f[0], &f[1], &f[2], &c, BoundaryRule::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(out.su.get(i, j, 0), 0.0);
                assert_eq!(out.sw.get(i, j, 0), 0.0);
            }
        }
        let clamped = naive_advect(&f[0], &f[1], &f[2], &c, BoundaryRule::Clamp).unwrap();
        assert!((0..5).any(|i| clamped.su.get(i, 0, 0) != 0.0));
    }

    #[test]
    fn perturbation_stays_local() {
        let d = dims(7, 6, 5);
        let f = generate_fields(d, 11);
        let c = AdvectionCoefficients::uniform(5);
        let rule = BoundaryRule::default();
        let base = naive_advect(&f[0], &f[1], &f[2], &c, rule).unwrap();
        let (pi, pj, pk) = (3, 2, 2);
        for field in 0..3 {
            let mut g = f.clone();
            let old = g[field].get(pi, pj, pk);
            g[field].set(pi, pj, pk, old + 0.5);
            let out = naive_advect(&g[0], &g[1], &g[2], &c, rule).unwrap();
            for i in 0..d.x {
                for j in 0..d.y {
                    for k in 0..d.z {
                        let near =
                            i.abs_diff(pi) <= 1 && j.abs_diff(pj) <= 1 && k.abs_diff(pk) <= 1;
                        if near {
                            continue;
                        }
                        for (a, b) in out.fields().iter().zip(base.fields()) {
                            assert_eq!(a.get(i, j, k).to_bits(), b.get(i, j, k).to_bits());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let d = dims(6, 5, 4);
        let f = generate_fields(d, 5);
        let c = AdvectionCoefficients::uniform(4);
        let a = naive_advect(&f[0], &f[1], &f[2], &c, BoundaryRule::default()).unwrap();
        let b = naive_advect(&f[0], &f[1], &f[2], &c, BoundaryRule::default()).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = Field3::<f64>::zeros(dims(4, 4, 4));
        let b = Field3::<f64>::zeros(dims(4, 4, 5));
        let c = AdvectionCoefficients::uniform(4);
        assert!(matches!(
            naive_advect(&a, &a, &b, &c, BoundaryRule::default()),
            Err(Error::Domain(_))
        ));
        let short = AdvectionCoefficients::uniform(3);
        assert!(matches!(
            naive_advect(&a, &a, &a, &short, BoundaryRule::default()),
            Err(Error::Config(_))
        ));
    }
}
