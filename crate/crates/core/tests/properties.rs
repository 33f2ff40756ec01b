use std::f64::consts::PI;

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spindoe::geometry::{geodesic_angle, kabsch, Rotation, UnitVector3};
use spindoe::hashing::DotPattern;
use spindoe::pattern::{hash_space_nn_objective, random_pattern};
use spindoe::spin::{propagate_orientation, quatera_fit, OrientationSample};

fn unit() -> impl Strategy<Value = UnitVector3> {
    (-1.0f64..1.0, 0.0..2.0 * PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        UnitVector3::new(s * phi.cos(), s * phi.sin(), z).unwrap()
    })
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (unit(), 0.0..PI).prop_map(|(axis, angle)| Rotation::from_axis_angle(&axis, angle))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kabsch_recovers_rotations(r in rotation(), seed in any::<u64>()) {
        let p = random_pattern(8, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let moved: Vec<UnitVector3> = p.dots().iter().map(|d| r.rotate(d)).collect();
        let got = kabsch(p.dots(), &moved).unwrap();
        prop_assert!(geodesic_angle(&got, &r) < 1e-9);
    }

    #[test]
    fn objective_ignores_global_rotation(r in rotation(), seed in any::<u64>()) {
        let p = random_pattern(10, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let q = DotPattern::new(p.dots().iter().map(|d| r.rotate(d)).collect()).unwrap();
        let (a, b) = (hash_space_nn_objective(&p).unwrap(), hash_space_nn_objective(&q).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn spin_fit_is_exact_below_nyquist(
        q0 in rotation(),
        axis in unit(),
        rps in 0.5f64..174.0,
        n in 3usize..30,
        t0 in -5.0f64..5.0,
    ) {
        let omega: Vector3<f64> = axis.into_vector() * (2.0 * PI * rps);
        let samples: Vec<OrientationSample> = (0..n)
            .map(|i| {
                let t = t0 + i as f64 / 350.0;
                OrientationSample::new(t, propagate_orientation(&q0, &omega, t - t0))
            })
            .collect();
        let est = quatera_fit(&samples).unwrap();
        prop_assert!((est.omega_vector() - omega).norm() / omega.norm() < 1e-6);
    }
}
