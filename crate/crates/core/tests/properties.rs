use gedamage::damage::{return_map, ReturnMapOptions};
use gedamage::materials::{degradation_factor, internal_energy, pk1_stress, ClosedFormParams, MaterialModel};
use gedamage::tensor::Tensor2;
use gedamage::verify::random_data_driven;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rotation(axis: [f64; 3], angle: f64) -> Tensor2<f64> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt().max(1e-12);
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Tensor2([
        c + x * x * t,
        x * y * t - z * s,
        x * z * t + y * s,
        y * x * t + z * s,
        c + y * y * t,
        y * z * t - x * s,
        z * x * t - y * s,
        z * y * t + x * s,
        c + z * z * t,
    ])
}

fn matmul(a: &Tensor2<f64>, b: &Tensor2<f64>) -> Tensor2<f64> {
    Tensor2::from_fn(|k| (0..3).map(|m| a.get(k / 3, m) * b.get(m, k % 3)).sum())
}

fn deformation() -> impl Strategy<Value = Tensor2<f64>> {
    prop::array::uniform9(-0.25..0.25f64)
        .prop_map(|h| Tensor2::from_fn(|k| if k % 4 == 0 { 1.0 } else { 0.0 } + h[k]))
        .prop_filter("det F >= 0.3", |f| f.det() >= 0.3)
}

fn model(seed: u64, data_driven: bool) -> MaterialModel {
    if data_driven {
        MaterialModel::DataDriven(random_data_driven(&mut ChaCha8Rng::seed_from_u64(seed), 0.5))
    } else {
        MaterialModel::ClosedForm(ClosedFormParams::from_young(210.0, 0.3, 0.002, 0.1).with_nonlocal(1.0, 1000.0))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_objective(
        f in deformation(),
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in -3.0..3.0f64,
        kappa in 0.0..1.0f64,
        seed in 0u64..1000,
        data_driven in any::<bool>(),
    ) {
        let m = model(seed, data_driven);
        let q = rotation(axis, angle);
        let a = internal_energy(&f, kappa, &[0.0; 3], kappa, &m).unwrap();
        let b = internal_energy(&matmul(&q, &f), kappa, &[0.0; 3], kappa, &m).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn kirchhoff_stress_is_symmetric(f in deformation(), kappa in 0.0..1.0f64, seed in 0u64..1000, data_driven in any::<bool>()) {
        let m = model(seed, data_driven);
        let p = pk1_stress(&f, kappa, &[0.0; 3], kappa, &m).unwrap();
        let tau = matmul(&p, &f.transpose());
        let asym = (tau - tau.transpose()).norm();
        prop_assert!(asym <= 1e-9 * tau.norm().max(1.0), "asymmetry {asym}");
    }

    #[test]
    fn degradation_is_bounded_and_non_increasing(a in 0.0..50.0f64, b in 0.0..50.0f64, eta in 0.0..100.0f64, kd in 0.0..5.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (f_lo, f_hi) = (degradation_factor(lo, eta, kd), degradation_factor(hi, eta, kd));
        prop_assert!(f_hi <= f_lo && f_lo <= 1.0 && f_hi >= 0.0);
        if lo <= kd {
            prop_assert_eq!(f_lo, 1.0);
        }
    }

    #[test]
    fn return_map_is_idempotent_and_non_decreasing(
        f in deformation(),
        kappa_n in 0.0..1.0f64,
        dphi in -1e-3..1e-3f64,
        g in prop::array::uniform3(-0.5..0.5f64),
        seed in 0u64..1000,
        data_driven in any::<bool>(),
    ) {
        let m = model(seed, data_driven);
        let opts = ReturnMapOptions::default();
        let phi = kappa_n + dphi;
        let first = return_map(&f, phi, &g, kappa_n, &m, opts).unwrap();
        prop_assert!(first.kappa_next >= kappa_n);
        prop_assert!(first.delta_lambda >= 0.0);
        let again = return_map(&f, phi, &g, first.kappa_next, &m, opts).unwrap();
        prop_assert!((again.kappa_next - first.kappa_next).abs() <= 1e-9 * first.kappa_next.abs().max(1.0));
        prop_assert!(again.delta_lambda <= 1e-9);
    }
}
