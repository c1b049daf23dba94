use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;

use bubbledyn::cli::Scenario;
use bubbledyn::dynamics::{eom_flat, Model};
use bubbledyn::gas::{potential_energy, BubbleGasState, EnergyModel, GasLaw};
use bubbledyn::potential::added_mass;
use bubbledyn::reference::{analytic_potential, SingleBubbleState};
use bubbledyn::shapes::{Configuration, Mat3, ShapeFamily, ShapeParams, SurfaceMesh, Vec3};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn ellipsoid() -> impl Strategy<Value = ShapeParams> {
    (vec3(1.0), 0.6..1.6f64, 0.6..1.6f64, 0.6..1.6f64, vec3(PI)).prop_map(|(c, a, b, d, angles)| {
        let rot = nalgebra::Rotation3::from_euler_angles(angles.x, angles.y, angles.z);
        let s = rot.matrix() * Mat3::from_diagonal(&Vec3::new(a, b, d)) * rot.matrix().transpose();
        ShapeParams::ellipsoid(c, (s + s.transpose()) * 0.5).unwrap()
    })
}

fn shape() -> impl Strategy<Value = ShapeParams> {
    prop_oneof![
        (vec3(1.0), 0.3..2.0f64).prop_map(|(c, r)| ShapeParams::sphere(c, r).unwrap()),
        ellipsoid(),
    ]
}

fn rates(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
}

fn unit_gas() -> BubbleGasState {
    BubbleGasState::new(4.0 / 3.0 * PI, GasLaw::polytropic(1.0, 1.4).unwrap()).unwrap()
}

fn model(level: usize, n: usize) -> Model {
    Model::new(
        1.0,
        EnergyModel {
            p_infinity: 1.0,
            surface_tension: 0.07,
            gases: vec![unit_gas(); n],
        },
        level,
    )
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_velocity_is_linear(
        (m, a1, a2) in shape().prop_flat_map(|m| { let d = m.dim(); (Just(m), rates(d), rates(d)) }),
        (a, b) in (-2.0..2.0f64, -2.0..2.0f64),
        y in vec3(1.0).prop_filter("nonzero", |y| y.norm() > 0.1),
    ) {
        let p = m.map_reference(&y.normalize());
        let mix: Vec<f64> = a1.iter().zip(&a2).map(|(x, z)| a * x + b * z).collect();
        let lhs = m.normal_velocity(&mix, &p.point, &p.normal);
        let rhs = a * m.normal_velocity(&a1, &p.point, &p.normal) + b * m.normal_velocity(&a2, &p.point, &p.normal);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sphere_normal_velocity_energy_identity(r in 0.3..2.0f64, c_dot in vec3(1.0), r_dot in -1.0..1.0f64) {
        let m = ShapeParams::sphere(Vec3::new(0.2, 0.0, -0.1), r).unwrap();
        let mesh = SurfaceMesh::for_shape(&m, 3, 0);
        let mdot = [c_dot.x, c_dot.y, c_dot.z, r_dot];
        let (mut integral, mut peak) = (0.0, 0.0f64);
        for p in &mesh.panels {
            let v = m.normal_velocity(&mdot, &p.point, &p.normal);
            integral += v * v * p.weight;
            peak = peak.max(v.abs());
        }
        let exact = 4.0 * PI * r * r / 3.0 * c_dot.norm_squared() + 4.0 * PI * r * r * r_dot * r_dot;
        prop_assert!((integral - exact).abs() <= 1e-3 * exact);
        prop_assert!(peak > 0.0);
    }

    #[test]
    fn flux_matches_volume_rate(
        (m, mdot) in shape().prop_flat_map(|m| { let d = m.dim(); (Just(m), rates(d)) }),
    ) {
        let mesh = SurfaceMesh::for_shape(&m, 3, 0);
        let flux: f64 = mesh.panels.iter().map(|p| m.normal_velocity(&mdot, &p.point, &p.normal) * p.weight).sum();
        let rate: f64 = m.measures().d_volume_dm.iter().zip(&mdot).map(|(g, v)| g * v).sum();
        let scale: f64 = m.measures().d_volume_dm.iter().zip(&mdot).map(|(g, v)| (g * v).abs()).sum();
        prop_assert!((flux - rate).abs() <= 2e-3 * scale, "{} vs {}", flux, rate);
    }

    #[test]
    fn analytic_potential_meets_neumann_data(
        r in 0.3..2.0f64, c in vec3(2.0), c_dot in vec3(1.0), r_dot in -1.0..1.0f64,
        y in vec3(1.0).prop_filter("nonzero", |y| y.norm() > 0.1),
    ) {
        let s = SingleBubbleState::new(c, c_dot, r, r_dot).unwrap();
        let n = y.normalize();
        let f = analytic_potential(&s, &(c + n * r)).unwrap();
        let data = c_dot.dot(&n) + r_dot;
        prop_assert!((f.gradient.dot(&n) - data).abs() <= 1e-12 * (1.0 + c_dot.norm() + r_dot.abs()));
    }

    #[test]
    fn gas_pressure_is_density_squared_energy_slope(k in 0.1..10.0f64, gamma in 1.0..2.0f64, log_s in -3.0..3.0f64) {
        let law = GasLaw::polytropic(k, gamma).unwrap();
        let s = 10f64.powf(log_s);
        let h = 1e-5 * s;
        let slope = (law.free_energy(s + h).unwrap() - law.free_energy(s - h).unwrap()) / (2.0 * h);
        let p = law.pressure(s).unwrap();
        prop_assert!((s * s * slope - p).abs() <= 1e-6 * p);
    }

    #[test]
    fn potential_energy_ignores_translation(m in shape(), shift in vec3(3.0)) {
        let em = EnergyModel { p_infinity: 1.0, surface_tension: 0.07, gases: vec![unit_gas()] };
        let u = potential_energy(&em, &Configuration::unbounded(vec![m.clone()])).unwrap();
        prop_assert!(u.gradient[..3].iter().all(|g| *g == 0.0));
        let mut q = m.coords();
        for i in 0..3 { q[i] += shift[i]; }
        let moved = potential_energy(&em, &Configuration::unbounded(vec![m.with_coords(&q).unwrap()])).unwrap();
        prop_assert!((moved.value - u.value).abs() <= 1e-12 * u.value.abs());
    }

    #[test]
    fn scenario_canonical_form_round_trips(
        rho in 0.1..10.0f64, p in 0.0..10.0f64, r in 0.1..3.0f64, c in vec3(5.0),
        vel in vec3(1.0), gamma in 1.0..2.0f64, level in 0usize..4, dt in 0.001..0.5f64,
    ) {
        let text = format!(r#"{{
  "schema_version": 1,
  "liquid": {{ "density": {rho:?}, "p_infinity": {p:?} }},
  "bubbles": [
    {{
      "shape": {{ "kind": "sphere", "center": [{:?}, {:?}, {:?}], "radius": {r:?} }},
      "velocity": {{ "center_rate": [{:?}, {:?}, {:?}], "radius_rate": 0.0 }},
      "gas": {{ "kind": "polytropic", "K": 1.0, "gamma": {gamma:?} }},
      "mass": 1.5
    }}
  ],
  "solver": {{ "mesh_level": {level} }},
  "time": {{ "t_end": 1.0, "output_dt": {dt:?} }}
}}"#, c.x, c.y, c.z, vel.x, vel.y, vel.z);
        let s = Scenario::parse(&text).unwrap();
        let again = Scenario::parse(&s.to_canonical_json()).unwrap();
        prop_assert_eq!(&s, &again);
        prop_assert_eq!(s.to_canonical_json(), again.to_canonical_json());
    }
}

fn two_spheres(a: Vec3, ra: f64, b: Vec3, rb: f64) -> Configuration {
    Configuration::unbounded(vec![
        ShapeParams::sphere(a, ra).unwrap(),
        ShapeParams::sphere(b, rb).unwrap(),
    ])
}

/// Swaps the two 4-blocks of an 8-vector or 8x8 matrix index.
fn swap(i: usize) -> usize {
    (i + 4) % 8
}

fn separated_pair() -> impl Strategy<Value = (Vec3, f64, Vec3, f64)> {
    (vec3(1.0), 0.5..1.2f64, vec3(1.0), 0.5..1.2f64, 0.3..1.5f64).prop_map(
        |(dir, ra, b, rb, gap)| {
            let d = if dir.norm() > 0.1 {
                dir.normalize()
            } else {
                Vec3::x()
            };
            (b + d * (ra + rb + gap), ra, b, rb)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn added_mass_is_spd_and_nearly_reciprocal((a, ra, b, rb) in separated_pair()) {
        let am = added_mass(&two_spheres(a, ra, b, rb), 1, 1.0).unwrap();
        prop_assert!(am.min_eigenvalue > 0.0);
        prop_assert!(am.reciprocity_error < 0.05, "{}", am.reciprocity_error);
        prop_assert!(am.full.iter().all(|x| x.is_finite()));
        prop_assert_eq!(&am.full, &am.full.transpose());
    }

    #[test]
    fn added_mass_scales_cubically((a, ra, b, rb) in separated_pair(), lambda in 0.3..3.0f64) {
        let base = added_mass(&two_spheres(a, ra, b, rb), 1, 1.0).unwrap().full;
        let scaled = added_mass(&two_spheres(a * lambda, ra * lambda, b * lambda, rb * lambda), 1, 1.0).unwrap().full;
        let err = (scaled - base.clone() * lambda.powi(3)).abs().max();
        prop_assert!(err <= 1e-9 * lambda.powi(3) * base.abs().max());
    }

    #[test]
    fn equal_spheres_are_swap_symmetric(d in vec3(1.0).prop_filter("nonzero", |d| d.norm() > 0.1), r in 0.5..1.0f64, gap in 0.3..1.0f64) {
        let half = d.normalize() * (r + 0.5 * gap);
        let am = added_mass(&two_spheres(half, r, -half, r), 1, 1.0).unwrap().full;
        let mirrored = added_mass(&two_spheres(-half, r, half, r), 1, 1.0).unwrap().full;
        let scale = am.abs().max();
        for i in 0..8 {
            for j in 0..8 {
                prop_assert!((am[(i, j)] - mirrored[(swap(i), swap(j))]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn relabeling_bubbles_permutes_accelerations(
        (a, ra, b, rb) in separated_pair(),
        v in rates(8),
    ) {
        let m = model(1, 2);
        let forward = eom_flat(&m, &two_spheres(a, ra, b, rb), &v).unwrap().qddot;
        let swapped_v: Vec<f64> = (0..8).map(|i| v[swap(i)]).collect();
        let backward = eom_flat(&m, &two_spheres(b, rb, a, ra), &swapped_v).unwrap().qddot;
        // the Jacobian differences are anchored on bubble 0, so relabeling
        // moves the finite-difference truncation error between the blocks
        let scale = max_abs(&forward);
        for i in 0..8 {
            prop_assert!((forward[i] - backward[swap(i)]).abs() <= 1e-7 * scale, "{:?} vs {:?}", forward, backward);
        }
    }
}

fn added_mass_at(config: &Configuration, q: &[f64]) -> DMatrix<f64> {
    added_mass(&config.with_coords(q).unwrap(), 1, 1.0)
        .unwrap()
        .full
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// `d/dt(dL/dq') - dL/dq` with `L = q'^T A q' / 2 - U`, every derivative of
    /// `A` taken by central differences of the assembled matrix, vanishes on
    /// the accelerations the model produces.
    #[test]
    fn accelerations_satisfy_euler_lagrange((a, ra, b, rb) in separated_pair(), v in rates(8)) {
        let m = model(1, 2);
        let config = two_spheres(a, ra, b, rb);
        let qddot = eom_flat(&m, &config, &v).unwrap().qddot;
        let q = config.coords();
        let h = 1e-5;
        let at = |dir: &[f64], t: f64| -> Vec<f64> { q.iter().zip(dir).map(|(x, d)| x + t * d).collect() };
        let a0 = added_mass_at(&config, &q);
        let a_dot = (added_mass_at(&config, &at(&v, h)) - added_mass_at(&config, &at(&v, -h))) / (2.0 * h);
        let vq = nalgebra::DVector::from_column_slice(&v);
        let mut lhs = &a0 * nalgebra::DVector::from_column_slice(&qddot) + a_dot * &vq;
        let grad_u = potential_energy(&m.energy, &config).unwrap().gradient;
        for i in 0..8 {
            let mut e = vec![0.0; 8];
            e[i] = 1.0;
            let d_a = (added_mass_at(&config, &at(&e, h)) - added_mass_at(&config, &at(&e, -h))) / (2.0 * h);
            lhs[i] += grad_u[i] - 0.5 * vq.dot(&(d_a * &vq));
        }
        let scale = max_abs(&grad_u) + (&a0 * nalgebra::DVector::from_column_slice(&qddot)).amax();
        prop_assert!(lhs.amax() <= 1e-5 * scale, "residual {} vs scale {}", lhs.amax(), scale);
    }
}
