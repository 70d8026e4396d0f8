//! Bone-length constrained refinement of triangulated joints.
//!
//! Minimizes
//!
//! ```text
//! Σ‖X − W‖² + λ_b Σ (‖X_j − X_parent(j)‖ − L_j)² + λ_s Σ ‖X_{t+1} − X_t‖²
//! ```
//!
//! over joint positions `X` with Levenberg-Marquardt. The normal equations
//! are block tridiagonal in time (one `3J × 3J` block per frame); without
//! the smoothness term every frame is solved on its own.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::Motion3;
use crate::scalar::Real;
use crate::skeleton::Skeleton;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub bone_weight: f64,
    pub smooth_weight: f64,
    pub max_iters: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub tol: f64,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            bone_weight: 100.0,
            smooth_weight: 1.0,
            max_iters: 50,
            tol: 1e-8,
            damping: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bone_weight >= 0.0
            && self.smooth_weight >= 0.0
            && self.max_iters >= 1
            && self.tol > 0.0
            && self.damping > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("fit config out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport<T: Real> {
    pub motion: Motion3<T>,
    /// Cost of the start point followed by every accepted iterate.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Distance of every joint to its parent; zero for the root.
pub fn bone_lengths<T: Real>(frame: &[Vector3<T>], skeleton: &Skeleton) -> Vec<T> {
    skeleton
        .parent
        .iter()
        .enumerate()
        .map(|(j, &p)| if p == j { T::zero() } else { (frame[j] - frame[p]).norm() })
        .collect()
}

fn bones(skeleton: &Skeleton) -> impl Iterator<Item = (usize, usize)> + '_ {
    skeleton.parent.iter().enumerate().filter(|(j, p)| j != *p).map(|(j, &p)| (j, p))
}

/// `‖X_j − X_p‖ − L_j` for every non-root joint, in joint order.
pub fn bone_residuals<T: Real>(frame: &[Vector3<T>], skeleton: &Skeleton) -> Vec<T> {
    bones(skeleton)
        .map(|(j, p)| (frame[j] - frame[p]).norm() - T::of(skeleton.rest_bone_lengths[j]))
        .collect()
}

/// Jacobian of [`bone_residuals`] with respect to the flattened frame
/// (`3J` columns). Rows of zero-length bones are zero.
pub fn bone_jacobian<T: Real>(frame: &[Vector3<T>], skeleton: &Skeleton) -> DMatrix<T> {
    let n = frame.len() * 3;
    let rows: Vec<_> = bones(skeleton).collect();
    let mut jac = DMatrix::zeros(rows.len(), n);
    for (r, &(j, p)) in rows.iter().enumerate() {
        let d = frame[j] - frame[p];
        let len = d.norm();
        if len > T::zero() {
            let u = d / len;
            for k in 0..3 {
                jac[(r, 3 * j + k)] = u[k];
                jac[(r, 3 * p + k)] = -u[k];
            }
        }
    }
    jac
}

/// Objective value of `x` given observations `w`.
pub fn fit_cost<T: Real>(x: &Motion3<T>, w: &Motion3<T>, skeleton: &Skeleton, cfg: &FitConfig) -> f64 {
    let mut data = 0.0;
    let mut bone = 0.0;
    let mut smooth = 0.0;
    for t in 0..x.frames() {
        let f = x.frame(t);
        for (a, b) in f.iter().zip(w.frame(t)) {
            data += (a - b).norm_squared().to_f64_lossy();
        }
        if cfg.bone_weight > 0.0 {
            bone += bone_residuals(f, skeleton).iter().map(|r| r.to_f64_lossy().powi(2)).sum::<f64>();
        }
        if cfg.smooth_weight > 0.0 && t + 1 < x.frames() {
            for (a, b) in x.frame(t + 1).iter().zip(f) {
                smooth += (a - b).norm_squared().to_f64_lossy();
            }
        }
    }
    data + cfg.bone_weight * bone + cfg.smooth_weight * smooth
}

/// Normal-equation blocks and right-hand sides at `x` (damping excluded).
fn normal_equations<T: Real>(
    x: &Motion3<T>,
    w: &Motion3<T>,
    skeleton: &Skeleton,
    cfg: &FitConfig,
) -> (Vec<DMatrix<T>>, Vec<DVector<T>>) {
    let (frames, joints) = (x.frames(), x.joints());
    let n = 3 * joints;
    let bw = T::of(cfg.bone_weight);
    let sw = T::of(cfg.smooth_weight);
    let mut blocks = Vec::with_capacity(frames);
    let mut rhs = Vec::with_capacity(frames);
    for t in 0..frames {
        let f = x.frame(t);
        let mut a = DMatrix::<T>::identity(n, n);
        let mut g = DVector::<T>::zeros(n);
        for (j, (p, q)) in f.iter().zip(w.frame(t)).enumerate() {
            for k in 0..3 {
                g[3 * j + k] = q[k] - p[k];
            }
        }
        if cfg.bone_weight > 0.0 {
            let jac = bone_jacobian(f, skeleton);
            let r = DVector::from_vec(bone_residuals(f, skeleton));
            a += jac.tr_mul(&jac) * bw;
            g -= jac.tr_mul(&r) * bw;
        }
        if cfg.smooth_weight > 0.0 {
            let neighbours = usize::from(t > 0) + usize::from(t + 1 < frames);
            for i in 0..n {
                a[(i, i)] += sw * T::of(neighbours as f64);
            }
            for j in 0..joints {
                let mut pull = Vector3::zeros();
                if t > 0 {
                    pull += x.at(t - 1, j) - f[j];
                }
                if t + 1 < frames {
                    pull += x.at(t + 1, j) - f[j];
                }
                for k in 0..3 {
                    g[3 * j + k] += sw * pull[k];
                }
            }
        }
        blocks.push(a);
        rhs.push(g);
    }
    (blocks, rhs)
}

/// Solves the block-tridiagonal system whose off-diagonal blocks are all
/// `off · I`.
fn solve_block_tridiagonal<T: Real>(diag: &[DMatrix<T>], rhs: &[DVector<T>], off: T) -> Option<Vec<DVector<T>>> {
    let frames = diag.len();
    if off == T::zero() {
        return diag
            .iter()
            .zip(rhs)
            .map(|(a, g)| a.clone().cholesky().map(|c| c.solve(g)))
            .collect();
    }
    let n = diag[0].nrows();
    let mut c_prime: Vec<DMatrix<T>> = Vec::with_capacity(frames);
    let mut d_prime: Vec<DVector<T>> = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut m = diag[t].clone();
        let mut g = rhs[t].clone();
        if t > 0 {
            m -= &c_prime[t - 1] * off;
            g -= &d_prime[t - 1] * off;
        }
        let chol = m.cholesky()?;
        c_prime.push(chol.solve(&(DMatrix::identity(n, n) * off)));
        d_prime.push(chol.solve(&g));
    }
    let mut out = vec![DVector::zeros(n); frames];
    out[frames - 1] = d_prime[frames - 1].clone();
    for t in (0..frames - 1).rev() {
        out[t] = &d_prime[t] - &c_prime[t] * &out[t + 1];
    }
    Some(out)
}

/// Fits joint positions to `w` under soft bone-length and smoothness terms.
pub fn fit_skeleton<T: Real>(w: &Motion3<T>, skeleton: &Skeleton, cfg: &FitConfig) -> Result<FitReport<T>> {
    cfg.validate()?;
    if w.joints() != skeleton.joint_count() {
        return Err(Error::ShapeMismatch(format!(
            "motion has {} joints, skeleton {}",
            w.joints(),
            skeleton.joint_count()
        )));
    }
    if !w.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut x = w.clone();
    let mut cost = fit_cost(&x, w, skeleton, cfg);
    let mut costs = vec![cost];
    let mut lambda = cfg.damping;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let off = T::of(-cfg.smooth_weight);
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let (mut blocks, rhs) = normal_equations(&x, w, skeleton, cfg);
        let mut accepted = false;
        while lambda < 1e12 {
            for b in blocks.iter_mut() {
                for i in 0..b.nrows() {
                    b[(i, i)] += T::of(lambda);
                }
            }
            let step = solve_block_tridiagonal(&blocks, &rhs, off);
            for b in blocks.iter_mut() {
                for i in 0..b.nrows() {
                    b[(i, i)] -= T::of(lambda);
                }
            }
            if let Some(step) = step {
                let mut candidate = x.clone();
                for (t, d) in step.iter().enumerate() {
                    for (j, p) in candidate.frame_mut(t).iter_mut().enumerate() {
                        *p += Vector3::new(d[3 * j], d[3 * j + 1], d[3 * j + 2]);
                    }
                }
                let c = fit_cost(&candidate, w, skeleton, cfg);
                if !c.is_finite() {
                    return Err(Error::NonFiniteCost);
                }
                if c <= cost {
                    let decrease = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    x = candidate;
                    cost = c;
                    costs.push(c);
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    converged = decrease < cfg.tol;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No damping level improves the cost: a local minimum to
            // working precision.
            converged = true;
        }
    }
    Ok(FitReport {
        motion: x,
        costs,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_motion, MotionKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noisy(m: &Motion3<f64>, sigma: f64, seed: u64) -> Motion3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        let mut out = m.clone();
        for p in out.coords_mut() {
            *p += Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
        }
        out
    }

    fn rmse(a: &Motion3<f64>, b: &Motion3<f64>) -> f64 {
        let s: f64 = a.coords().iter().zip(b.coords()).map(|(p, q)| (p - q).norm_squared()).sum();
        (s / a.coords().len() as f64).sqrt()
    }

    fn max_bone_deviation(m: &Motion3<f64>, sk: &Skeleton) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..m.frames() {
            for (j, l) in bone_lengths(m.frame(t), sk).iter().enumerate() {
                let rest = sk.rest_bone_lengths[j];
                if sk.parent[j] != j {
                    worst = worst.max((l - rest).abs() / rest);
                }
            }
        }
        worst
    }

    #[test]
    fn fk_frames_have_rest_lengths() {
        let sk = Skeleton::toy8();
        let m = generate_motion(&sk, MotionKind::Walker, 20, 3, 30.0).unwrap();
        for t in 0..20 {
            let l = bone_lengths(m.frame(t), &sk);
            for (j, v) in l.iter().enumerate() {
                let want = if sk.parent[j] == j { 0.0 } else { sk.rest_bone_lengths[j] };
                assert!((v - want).abs() < 1e-6);
            }
        }
        let same = vec![Vector3::new(1.0, 2.0, 3.0); 8];
        assert!(bone_lengths(&same, &sk).iter().all(|l| *l == 0.0));
    }

    #[test]
    fn bone_lengths_match_direct_distance() {
        let sk = Skeleton::smpl22();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame: Vec<Vector3<f64>> = (0..22)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let l = bone_lengths(&frame, &sk);
        for j in 0..22 {
            let p = sk.parent[j];
            let dx = frame[j][0] - frame[p][0];
            let dy = frame[j][1] - frame[p][1];
            let dz = frame[j][2] - frame[p][2];
            assert!((l[j] - (dx * dx + dy * dy + dz * dz).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let sk = Skeleton::toy8();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let frame: Vec<Vector3<f64>> = (0..8)
                .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)))
                .collect();
            let jac = bone_jacobian(&frame, &sk);
            let h = 1e-6;
            for c in 0..24 {
                let mut plus = frame.clone();
                let mut minus = frame.clone();
                plus[c / 3][c % 3] += h;
                minus[c / 3][c % 3] -= h;
                let rp = bone_residuals(&plus, &sk);
                let rm = bone_residuals(&minus, &sk);
                for r in 0..rp.len() {
                    let fd = (rp[r] - rm[r]) / (2.0 * h);
                    let an = jac[(r, c)];
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "row {r} col {c}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn zero_weights_fit_is_identity() {
        let sk = Skeleton::toy8();
        let m = noisy(&generate_motion(&sk, MotionKind::Squat, 10, 1, 30.0).unwrap(), 0.02, 1);
        let cfg = FitConfig {
            bone_weight: 0.0,
            smooth_weight: 0.0,
            ..FitConfig::default()
        };
        let out = fit_skeleton(&m, &sk, &cfg).unwrap();
        assert_eq!(out.motion, m);
    }

    #[test]
    fn exact_skeleton_is_a_fixed_point() {
        let sk = Skeleton::toy8();
        let m = generate_motion(&sk, MotionKind::Circle, 10, 2, 30.0).unwrap();
        let cfg = FitConfig {
            smooth_weight: 0.0,
            ..FitConfig::default()
        };
        let out = fit_skeleton(&m, &sk, &cfg).unwrap();
        assert!(out.motion.max_abs_diff(&m) < 1e-6);
    }

    #[test]
    fn noisy_input_is_improved() {
        let sk = Skeleton::toy8();
        for (seed, smooth) in [(1, 1.0), (2, 0.0)] {
            let gt = generate_motion(&sk, MotionKind::Walker, 30, seed, 30.0).unwrap();
            let w = noisy(&gt, 0.01, seed + 10);
            let cfg = FitConfig {
                smooth_weight: smooth,
                ..FitConfig::default()
            };
            let out = fit_skeleton(&w, &sk, &cfg).unwrap();
            assert!(rmse(&out.motion, &gt) < rmse(&w, &gt));
            assert!(max_bone_deviation(&out.motion, &sk) < 0.01);
            assert!(out.costs.windows(2).all(|c| c[1] <= c[0]));
        }
    }

    #[test]
    fn stretched_bone_approaches_rest_length_as_weight_grows() {
        let sk = Skeleton::new(
            "pair",
            &["a", "b"],
            &[0, 0],
            &[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]],
            &[1],
            crate::skeleton::GaitRoles {
                left_leg: 1,
                right_leg: 1,
                left_arm: None,
                right_arm: None,
                spine: None,
            },
        )
        .unwrap();
        let w = Motion3::new(1, 2, vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)], 30.0).unwrap();
        let mut previous = f64::INFINITY;
        for bw in [1.0, 10.0, 100.0, 1000.0] {
            let cfg = FitConfig {
                bone_weight: bw,
                smooth_weight: 0.0,
                max_iters: 200,
                ..FitConfig::default()
            };
            let out = fit_skeleton(&w, &sk, &cfg).unwrap();
            let err = (bone_lengths::<f64>(out.motion.frame(0), &sk)[1] - 0.5).abs();
            // Closed form for a symmetric pair: stretch shrinks by 1/(1 + 2λ).
            assert!((err - 0.5 / (1.0 + 2.0 * bw)).abs() < 1e-6, "λ={bw}: {err}");
            assert!(err < previous);
            previous = err;
        }
    }

    #[test]
    fn banded_and_dense_solves_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let frames = 5;
        let off = -0.7;
        let diag: Vec<DMatrix<f64>> = (0..frames)
            .map(|_| {
                let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                m.tr_mul(&m) + DMatrix::identity(n, n) * 3.0
            })
            .collect();
        let rhs: Vec<DVector<f64>> = (0..frames).map(|_| DVector::from_fn(n, |_, _| rng.random())).collect();
        let got = solve_block_tridiagonal(&diag, &rhs, off).unwrap();
        let mut dense = DMatrix::zeros(n * frames, n * frames);
        let mut b = DVector::zeros(n * frames);
        for t in 0..frames {
            dense.view_mut((t * n, t * n), (n, n)).copy_from(&diag[t]);
            b.rows_mut(t * n, n).copy_from(&rhs[t]);
            if t + 1 < frames {
                for i in 0..n {
                    dense[(t * n + i, (t + 1) * n + i)] = off;
                    dense[((t + 1) * n + i, t * n + i)] = off;
                }
            }
        }
        let x = dense.lu().solve(&b).unwrap();
        for (t, g) in got.iter().enumerate() {
            assert!((x.rows(t * n, n) - g).amax() < 1e-10);
        }
    }
}
