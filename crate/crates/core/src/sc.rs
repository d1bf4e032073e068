//! Successive-cancellation conditional densities.
//!
//! Given one realized input block, the conditional density of the output at
//! a polarization path, given the realized values of all preceding outputs,
//! follows a two-branch recursion on the block halves:
//!
//! - branch "0": the plus combination of the two (independent) child
//!   conditionals, a scaled convolution;
//! - branch "1": the minus combination additionally conditioned on the
//!   realized plus value, a normalized slice of the rotated product density.
//!
//! Realized node values follow the same butterfly recursion as the sample
//! transform, so the conditioning values are exactly the realized transform
//! intermediates of the trial's own leaves.

use crate::density::{
    scaled_convolve, trapezoid, GridDensity, DENSITY_FLOOR, MAX_POINTS, MIN_POINTS, TRIM_REL,
};
use crate::error::{Error, Result};
use crate::transform::{PathSpec, TransformPlan};

/// Residual conditional mass below which a conditioning value is treated as
/// numerically impossible and the trial must be resampled.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// One node of the SC recursion: the conditional density of this node's
/// variable given everything conditioned so far, and the value the variable
/// actually took in the trial (used when conditioning further).
#[derive(Debug, Clone)]
pub struct ScNode {
    pub depth: usize,
    pub conditional_density: GridDensity,
    pub realized_value: f64,
}

/// Plus branch: density of `lambda X1 + sqrt(1-lambda^2) X2`.
pub fn branch_plus(f1: &GridDensity, f2: &GridDensity, lambda: f64) -> Result<GridDensity> {
    scaled_convolve(f1, f2, lambda)
}

/// Minus branch given the realized plus value `p`: the normalized density
/// `g(m) ~ f1(lambda p + s m) * f2(s p - lambda m)`, `s = sqrt(1-lambda^2)`,
/// the change of variables coming from orthogonality of the kernel.
pub fn branch_minus_given(
    f1: &GridDensity,
    f2: &GridDensity,
    lambda: f64,
    p: f64,
) -> Result<GridDensity> {
    crate::density::check_lambda(lambda)?;
    let s = (1.0 - lambda * lambda).sqrt();

    // Support of m from each factor's support.
    let (lo1, hi1) = ((f1.lo() - lambda * p) / s, (f1.hi() - lambda * p) / s);
    let (lo2, hi2) = ((s * p - f2.hi()) / lambda, (s * p - f2.lo()) / lambda);
    let lo = lo1.max(lo2);
    let hi = hi1.min(hi2);
    if !(hi > lo) {
        return Err(Error::DegenerateCondition { mass: 0.0 });
    }

    // Feature scales of the two factors seen through the rotation.
    let dx = (f1.dx() / s).min(f2.dx() / lambda);
    let n = (((hi - lo) / dx).ceil() as usize + 1).clamp(MIN_POINTS, MAX_POINTS);
    let dx = (hi - lo) / (n - 1) as f64;

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let m = lo + dx * i as f64;
        values.push(f1.eval(lambda * p + s * m) * f2.eval(s * p - lambda * m));
    }
    let mass = trapezoid(dx, &values);
    if !(mass > DEGENERATE_MASS) {
        return Err(Error::DegenerateCondition { mass: mass.max(0.0) });
    }

    // Trim the slice like any other produced density.
    let max = values.iter().cloned().fold(0.0, f64::max);
    let thr = (TRIM_REL * max).max(DENSITY_FLOOR);
    let first = values.iter().position(|&v| v > thr).unwrap_or(0).saturating_sub(1);
    let last = (values.iter().rposition(|&v| v > thr).unwrap_or(n - 1) + 1).min(n - 1);
    if last + 1 - first >= MIN_POINTS {
        let trimmed = values[first..=last].to_vec();
        GridDensity::from_unnormalized(lo + dx * first as f64, dx, trimmed)
    } else {
        GridDensity::from_unnormalized(lo, dx, values)
    }
}

/// Conditional density of the path's output variable given the realized
/// values of all preceding outputs, for the trial described by
/// `leaf_samples` (i.i.d. draws from `leaf_density`, length `2^n`).
pub fn sc_conditional_density(
    plan: &TransformPlan,
    path: &PathSpec,
    leaf_density: &GridDensity,
    leaf_samples: &[f64],
) -> Result<GridDensity> {
    if path.depth() != plan.depth() {
        return Err(Error::invalid_input(format!(
            "path depth {} does not match plan depth {}",
            path.depth(),
            plan.depth()
        )));
    }
    if leaf_samples.len() != plan.len() {
        return Err(Error::invalid_input(format!(
            "expected {} leaf samples, got {}",
            plan.len(),
            leaf_samples.len()
        )));
    }
    let node = sc_node(path.bits(), leaf_density, leaf_samples, plan.lambda())?;
    Ok(node.conditional_density)
}

/// Recursive single-path evaluation. The last path bit selects the branch at
/// the top of the block; the leading bits address the same sub-path inside
/// both halves.
fn sc_node(
    bits: &[u8],
    leaf: &GridDensity,
    block: &[f64],
    lambda: f64,
) -> Result<ScNode> {
    if bits.is_empty() {
        return Ok(ScNode {
            depth: 0,
            conditional_density: leaf.clone(),
            realized_value: block[0],
        });
    }
    let (head, last) = bits.split_at(bits.len() - 1);
    let half = block.len() / 2;
    let left = sc_node(head, leaf, &block[..half], lambda)?;
    let right = sc_node(head, leaf, &block[half..], lambda)?;
    combine(&left, &right, lambda, last[0])
}

fn combine(left: &ScNode, right: &ScNode, lambda: f64, bit: u8) -> Result<ScNode> {
    let s = (1.0 - lambda * lambda).sqrt();
    let plus_value = lambda * left.realized_value + s * right.realized_value;
    let minus_value = s * left.realized_value - lambda * right.realized_value;
    let depth = left.depth + 1;
    if bit == 0 {
        Ok(ScNode {
            depth,
            conditional_density: branch_plus(
                &left.conditional_density,
                &right.conditional_density,
                lambda,
            )?,
            realized_value: plus_value,
        })
    } else {
        Ok(ScNode {
            depth,
            conditional_density: branch_minus_given(
                &left.conditional_density,
                &right.conditional_density,
                lambda,
                plus_value,
            )?,
            realized_value: minus_value,
        })
    }
}

/// One depth-first sweep producing the conditional densities of *all*
/// `2^n` paths for a single trial, in output-index order.
pub fn sc_all_conditionals(
    lambda: f64,
    leaf_density: &GridDensity,
    leaf_samples: &[f64],
) -> Result<Vec<ScNode>> {
    if !leaf_samples.len().is_power_of_two() {
        return Err(Error::invalid_input("leaf count must be a power of two"));
    }
    crate::density::check_lambda(lambda)?;
    sweep(leaf_density, leaf_samples, lambda)
}

fn sweep(leaf: &GridDensity, block: &[f64], lambda: f64) -> Result<Vec<ScNode>> {
    if block.len() == 1 {
        return Ok(vec![ScNode {
            depth: 0,
            conditional_density: leaf.clone(),
            realized_value: block[0],
        }]);
    }
    let half = block.len() / 2;
    let left = sweep(leaf, &block[..half], lambda)?;
    let right = sweep(leaf, &block[half..], lambda)?;
    let mut out = Vec::with_capacity(block.len());
    for (l, r) in left.iter().zip(&right) {
        out.push(combine(l, r, lambda, 0)?);
        out.push(combine(l, r, lambda, 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{l1_distance, make_gaussian, make_mixture, GaussianSpec, MixtureSpec};
    use crate::rng::{Stream, StreamId};

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn gauss(var: f64, points: usize) -> GridDensity {
        make_gaussian(GaussianSpec { mean: 0.0, variance: var }, 8.0, points).unwrap()
    }

    #[test]
    fn plus_branch_keeps_gaussian() {
        let g = gauss(1.0, 1024);
        let out = branch_plus(&g, &g, INV_SQRT2).unwrap();
        assert!(l1_distance(&out, &g) < 1e-3);

        let f2 = gauss(3.0, 1024);
        let out = branch_plus(&g, &f2, INV_SQRT2).unwrap();
        assert!((out.variance() - 2.0).abs() < 1e-2);
    }

    #[test]
    fn minus_branch_gaussian_cases() {
        let g = gauss(1.0, 1024);
        // Independence of rotated coordinates: the conditional is standard
        // Gaussian whatever the conditioning value.
        for p in [-1.0, 0.0, 2.5] {
            let out = branch_minus_given(&g, &g, INV_SQRT2, p).unwrap();
            assert!(l1_distance(&out, &g) < 1e-3, "p = {p}");
        }
        // Unequal variances: conditional variance 2 V1 V2 / (V1 + V2) at p = 0.
        let f2 = gauss(4.0, 1024);
        let out = branch_minus_given(&g, &f2, INV_SQRT2, 0.0).unwrap();
        assert!((out.variance() - 1.6).abs() < 1e-2);
        assert!(out.mean().abs() < 1e-6);
        // Conditional mean moves with p for unequal input variances.
        let out_p = branch_minus_given(&g, &f2, INV_SQRT2, 2.0).unwrap();
        assert!(out_p.mean().abs() > 0.1);
    }

    #[test]
    fn minus_branch_degenerate_condition() {
        let g = gauss(1.0, 256);
        let err = branch_minus_given(&g, &g, INV_SQRT2, 1e6).unwrap_err();
        assert!(matches!(err, Error::DegenerateCondition { .. }));
    }

    #[test]
    fn depth_one_paths_match_definitions() {
        let leaf = make_mixture(&MixtureSpec::symmetric_bimodal(2.0, 0.5, 0.25).unwrap(), 512).unwrap();
        let plan = TransformPlan::new(INV_SQRT2, 1).unwrap();
        let samples = [0.7, -1.3];

        // Bit 0: plus branch, independent of the samples.
        let d0 = sc_conditional_density(&plan, &"0".parse().unwrap(), &leaf, &samples).unwrap();
        let expect = branch_plus(&leaf, &leaf, INV_SQRT2).unwrap();
        assert!(l1_distance(&d0, &expect) < 1e-12);

        // Bit 1: minus branch conditioned on the realized plus value.
        let d1 = sc_conditional_density(&plan, &"1".parse().unwrap(), &leaf, &samples).unwrap();
        let p = INV_SQRT2 * samples[0] + INV_SQRT2 * samples[1];
        let expect = branch_minus_given(&leaf, &leaf, INV_SQRT2, p).unwrap();
        assert!(l1_distance(&d1, &expect) < 1e-12);
    }

    #[test]
    fn sweep_matches_single_path_and_transform() {
        let leaf = make_mixture(&MixtureSpec::symmetric_bimodal(1.5, 0.4, 0.25).unwrap(), 384).unwrap();
        let n = 3;
        let plan = TransformPlan::new(INV_SQRT2, n).unwrap();
        let mut rng = Stream::new(11, StreamId::Leaf, 0, 0);
        let samples = leaf.sample(&mut rng, plan.len());

        let nodes = sc_all_conditionals(INV_SQRT2, &leaf, &samples).unwrap();
        assert_eq!(nodes.len(), plan.len());

        // Realized values are exactly the transform of the samples.
        let eta = plan.apply(&samples).unwrap();
        for (node, e) in nodes.iter().zip(&eta) {
            assert!((node.realized_value - e).abs() < 1e-12);
        }

        // Each sweep entry agrees with the dedicated single-path recursion.
        for path in PathSpec::all(n).unwrap() {
            let single = sc_conditional_density(&plan, &path, &leaf, &samples).unwrap();
            let idx = (path.index() - 1) as usize;
            assert!(l1_distance(&single, &nodes[idx].conditional_density) < 1e-12);
        }
    }

    #[test]
    fn gaussian_closure_along_paths() {
        // Gaussian leaves: every conditional stays the same Gaussian and the
        // entropy sequence is constant.
        let leaf = gauss(1.0, 512);
        let mut rng = Stream::new(3, StreamId::Leaf, 0, 0);
        let samples = leaf.sample(&mut rng, 8);
        let nodes = sc_all_conditionals(INV_SQRT2, &leaf, &samples).unwrap();
        let h0 = leaf.entropy();
        for node in &nodes {
            assert!(l1_distance(&node.conditional_density, &leaf) < 1e-3);
            assert!((node.conditional_density.entropy() - h0).abs() < 2e-3);
        }
    }

    #[test]
    fn conditional_variance_and_fisher_bounds() {
        // Source xi = mixture + G_a: every conditional has variance >= a and
        // Fisher information <= 1/a.
        let a = 0.25;
        let leaf = make_mixture(&MixtureSpec::symmetric_bimodal(2.0, 0.5, a).unwrap(), 768).unwrap();
        let mut rng = Stream::new(17, StreamId::Leaf, 1, 0);
        let samples = leaf.sample(&mut rng, 16);
        let nodes = sc_all_conditionals(INV_SQRT2, &leaf, &samples).unwrap();
        for node in &nodes {
            let v = node.conditional_density.variance();
            let j = node.conditional_density.fisher_information();
            assert!(v >= a - 0.02, "V = {v}");
            assert!(j <= 1.0 / a + 0.2, "J = {j}");
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let leaf = gauss(1.0, 256);
        let plan = TransformPlan::new(INV_SQRT2, 2).unwrap();
        let path: PathSpec = "01".parse().unwrap();
        assert!(sc_conditional_density(&plan, &path, &leaf, &[0.0; 3]).is_err());
        let bad_path: PathSpec = "011".parse().unwrap();
        assert!(sc_conditional_density(&plan, &bad_path, &leaf, &[0.0; 4]).is_err());
    }
}
