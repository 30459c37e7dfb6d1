mod common;

use cq_core::cones::{
    build_linearized_cone, cone_member, dual_cone_member, kernel_basis, sample_cone_directions,
    LinearizedCone,
};
use cq_core::linalg::{dot, singular_values};
use cq_core::model::{
    active_set, critical_active_set, evaluate_point, ActiveSet, ConstraintKind, PointData,
};
use cq_core::rank::{
    check_crc, check_rcrcq, dual_basis_image_check, dual_vectors, gradient_rows, numerical_rank,
    rank_of, NeighborhoodSampler, RankVerdict, SamplerConfig, DEFAULT_TOL_RANK,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cones() -> Vec<(&'static str, LinearizedCone)> {
    common::with_constraints()
        .into_iter()
        .map(|c| {
            let pd = evaluate_point(&c.system, &c.point).unwrap();
            (c.name, build_linearized_cone(&pd, &active_set(&pd, 1e-8)))
        })
        .collect()
}

fn matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..5, 1usize..5).prop_flat_map(|(m, n)| {
        prop::collection::vec(-2.0f64..2.0, m * n)
            .prop_map(move |v| DMatrix::from_row_slice(m, n, &v))
    })
}

/// Rows drawn from a random low-rank product, so deficiency is common.
fn low_rank_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(m, n, k)| {
        (
            prop::collection::vec(-2.0f64..2.0, m * k),
            prop::collection::vec(-2.0f64..2.0, k * n),
        )
            .prop_map(move |(a, b)| {
                DMatrix::from_row_slice(m, k, &a) * DMatrix::from_row_slice(k, n, &b)
            })
    })
}

fn small_cone() -> impl Strategy<Value = LinearizedCone> {
    (1usize..4, 0usize..2, 0usize..4).prop_flat_map(|(n, me, mi)| {
        (
            prop::collection::vec(-1.0f64..1.0, me * n),
            prop::collection::vec(-1.0f64..1.0, mi * n),
        )
            .prop_map(move |(e, i)| LinearizedCone {
                eq_rows: DMatrix::from_row_slice(me, n, &e),
                ineq_rows: DMatrix::from_row_slice(mi, n, &i),
                eq_provenance: (0..me).collect(),
                ineq_provenance: (me..me + mi).collect(),
                base_point: vec![0.0; n],
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn active_set_grows_with_tolerance(values in prop::collection::vec(-1e-3f64..1e-3, 1..6), t1 in 1e-9f64..1e-4, t2 in 1e-9f64..1e-4) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let m = values.len();
        let pd = PointData {
            point: vec![0.0],
            values,
            jacobian: DMatrix::zeros(m, 1),
            kinds: vec![ConstraintKind::Inequality; m],
            objective_value: None,
            objective_gradient: None,
        };
        let small = active_set(&pd, lo);
        let large = active_set(&pd, hi);
        prop_assert!(small.indices.iter().all(|i| large.contains(*i)));
    }

    #[test]
    fn rank_ignores_scaling_of_orthogonal_rows(
        a in matrix(),
        zero_rows in 0usize..3,
        row in 0usize..8,
        exponent in prop::sample::select(vec![-6i32, -3, 3, 6]),
    ) {
        // orthonormal rows from a QR factor, padded with zero rows
        let q = a.transpose().qr().q().transpose();
        prop_assume!(singular_values(&a).first().copied().unwrap_or(0.0) > 1e-3);
        let k = rank_of(&a, 1e-6);
        let mut rows = DMatrix::zeros(k + zero_rows, q.ncols());
        rows.view_mut((0, 0), (k, q.ncols())).copy_from(&q.rows(0, k));
        let before = numerical_rank(&rows, DEFAULT_TOL_RANK).rank;
        prop_assert_eq!(before, k);
        let mut scaled = rows.clone();
        scaled.row_mut(row % rows.nrows()).scale_mut(10f64.powi(exponent));
        prop_assert_eq!(numerical_rank(&scaled, DEFAULT_TOL_RANK).rank, before);
    }

    #[test]
    fn pivot_rows_are_well_conditioned(a in matrix()) {
        let r = numerical_rank(&a, DEFAULT_TOL_RANK);
        prop_assert_eq!(r.pivot_indices.len(), r.rank);
        if r.rank > 0 {
            let sub = DMatrix::from_fn(r.rank, a.ncols(), |i, j| a[(r.pivot_indices[i], j)]);
            let smin = *singular_values(&sub).last().unwrap();
            prop_assert!(smin > DEFAULT_TOL_RANK * r.singular_values[0]);
        }
    }

    #[test]
    fn kernel_basis_is_orthogonal_to_rows(a in low_rank_matrix()) {
        let basis = kernel_basis(&a, DEFAULT_TOL_RANK);
        let smax = singular_values(&a).first().copied().unwrap_or(0.0);
        prop_assert_eq!(basis.ncols(), a.ncols() - rank_of(&a, DEFAULT_TOL_RANK));
        for j in 0..basis.ncols() {
            let image = &a * basis.column(j);
            prop_assert!(image.norm() <= DEFAULT_TOL_RANK * smax + 1e-15, "{}", image.norm());
        }
    }

    #[test]
    fn cone_membership_is_closed_under_scaling_and_sums(c in small_cone(), seed in 0u64..1000) {
        let sample = sample_cone_directions(&c, 6, seed, 1e-10);
        for d in &sample.directions {
            prop_assert!(cone_member(&c, d, 1e-8));
            for f in [0.0, 0.5, 2.0, 10.0] {
                let s: Vec<f64> = d.iter().map(|v| f * v).collect();
                prop_assert!(cone_member(&c, &s, 1e-8));
            }
        }
        for a in &sample.directions {
            for b in &sample.directions {
                let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                prop_assert!(cone_member(&c, &s, 1e-8));
            }
        }
    }

    #[test]
    fn dual_members_are_nonpositive_on_the_cone(c in small_cone(), seed in 0u64..1000, v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let v = &v[..c.dimension()];
        let sample = sample_cone_directions(&c, 8, seed, 1e-10);
        if let Some(coef) = dual_cone_member(&c, v, 1e-10) {
            for (i, l) in &coef.lambda {
                if c.ineq_provenance.contains(i) {
                    prop_assert!(*l >= 0.0);
                }
            }
            // members of the polar cone are non-positive on Γ
            for d in &sample.directions {
                prop_assert!(dot(v, d) <= 1e-8, "<v,d> = {}", dot(v, d));
            }
        }
    }
}

#[test]
fn farkas_consistency_on_bundled_cones() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, c) in cones() {
        let sample = sample_cone_directions(&c, 16, 42, 1e-10);
        for _ in 0..100 {
            let v: Vec<f64> = (0..c.dimension())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            if dual_cone_member(&c, &v, 1e-10).is_some() {
                for d in &sample.directions {
                    assert!(dot(&v, d) <= 1e-8, "{name}: <v,d> = {}", dot(&v, d));
                }
            }
        }
    }
}

#[test]
fn corpus_gradient_ranks_ignore_row_scaling() {
    for c in common::corpus() {
        if c.functions.is_empty() {
            continue;
        }
        let sampler = NeighborhoodSampler::new(c.point.clone(), SamplerConfig::default());
        for s in sampler.points().iter().step_by(7) {
            let rows = gradient_rows(&c.functions, &s.point, true).unwrap();
            let before = rank_of(&rows, DEFAULT_TOL_RANK);
            for i in 0..rows.nrows() {
                for f in [1e-6, 1e6] {
                    let mut scaled = rows.clone();
                    scaled.row_mut(i).scale_mut(f);
                    assert_eq!(
                        rank_of(&scaled, DEFAULT_TOL_RANK),
                        before,
                        "{} row {i} factor {f:e}",
                        c.name
                    );
                }
            }
        }
    }
}

#[test]
fn critical_set_lies_in_active_set() {
    for c in common::with_constraints() {
        let pd = evaluate_point(&c.system, &c.point).unwrap();
        let aset: ActiveSet = active_set(&pd, 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d: Vec<f64> = (0..c.point.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let crit = critical_active_set(&pd, &aset, &d, 1e-8);
            assert!(
                crit.critical.iter().all(|i| aset.contains(*i)),
                "{}",
                c.name
            );
        }
    }
}

#[test]
fn jacobian_is_a_first_order_model() {
    for c in common::with_constraints() {
        let pd = evaluate_point(&c.system, &c.point).unwrap();
        let n = c.point.len();
        for i in 0..c.system.num_constraints() {
            for j in 0..n {
                for eps in [1e-3, 1e-4, 1e-5] {
                    let mut x = c.point.clone();
                    x[j] += eps;
                    let h = c.system.constraint(i).evaluate(&x).unwrap();
                    let err = (h - pd.values[i] - eps * pd.jacobian[(i, j)]).abs();
                    assert!(err <= 2.0 * eps * eps, "{} constraint {i}: {err:e}", c.name);
                }
            }
        }
    }
}

#[test]
fn certified_crc_implies_dual_basis_image() {
    for c in common::corpus() {
        if c.functions.is_empty() {
            continue;
        }
        let sampler = NeighborhoodSampler::new(c.point.clone(), SamplerConfig::default());
        let report = check_crc(&c.functions, &c.point, &sampler, DEFAULT_TOL_RANK).unwrap();
        if report.verdict != RankVerdict::CertifiedBySampling || report.rank() == 0 {
            continue;
        }
        let rows = gradient_rows(&c.functions, &c.point, true).unwrap();
        let pivots = &report.center.pivot_indices;
        let pivot_rows = DMatrix::from_fn(pivots.len(), rows.ncols(), |i, j| rows[(pivots[i], j)]);
        let v = dual_vectors(&pivot_rows, DEFAULT_TOL_RANK).unwrap();
        for s in sampler.points() {
            let at = gradient_rows(&c.functions, &s.point, true).unwrap();
            let at = DMatrix::from_fn(pivots.len(), at.ncols(), |i, j| at[(pivots[i], j)]);
            assert!(
                dual_basis_image_check(&at, &v, DEFAULT_TOL_RANK),
                "{} at {:?}",
                c.name,
                s.point
            );
        }
    }
}

#[test]
fn one_refuted_subset_refutes_rcrcq() {
    for c in common::with_constraints() {
        let pd = evaluate_point(&c.system, &c.point).unwrap();
        let aset = active_set(&pd, 1e-8);
        let sampler = NeighborhoodSampler::new(c.point.clone(), SamplerConfig::default());
        let r = check_rcrcq(&c.system, &c.point, &aset, &sampler, DEFAULT_TOL_RANK).unwrap();
        if r.subsets.iter().any(|s| s.verdict == RankVerdict::Refuted) {
            assert_eq!(r.verdict, RankVerdict::Refuted, "{}", c.name);
        }
    }
}
