use owc_core::allocate::{AllocationProblem, Objective};
use owc_core::linkbudget::{check_exclusive, NoiseModel};
use owc_core::metrics::{build_channel_matrix, BandwidthConvention, ChannelMatrix};
use owc_core::raytrace::{impulse_response, BounceConfig, Resolution};
use owc_core::scene::builtin::builtin_scenario;
use owc_core::scene::schema::parse_scenario;
use owc_core::scene::Wavelength;
use owc_core::{ScenarioF32, Real};

fn desk(order: u8) -> BounceConfig<f64> {
    BounceConfig::new(Resolution::Desk, order)
}

#[test]
fn single_and_double_precision_agree() {
    let s = builtin_scenario("conference_table").unwrap();
    let s32: ScenarioF32 = s.cast();
    let mut compared = 0;
    for (ap, user, branch) in (0..s.units.len()).flat_map(|a| (0..3).flat_map(move |u| (0..4).map(move |b| (a, u, b)))) {
        let ir64 = impulse_response(&s.room, &s.units[ap], &s.users[user], branch, desk(1)).unwrap();
        let ir32 = impulse_response(&s32.room, &s32.units[ap], &s32.users[user], branch, desk(1).cast()).unwrap();
        let (e64, e32) = (ir64.energy(), ir32.energy().to_f64_lossy());
        if e64 == 0.0 {
            assert_eq!(e32, 0.0);
            continue;
        }
        assert!(((e32 - e64) / e64).abs() < 1e-4, "{e32} vs {e64}");
        compared += 1;
    }
    assert!(compared >= 3, "{compared}");
}

#[test]
fn traced_matrix_allocates_every_user_to_its_own_channel() {
    let s = builtin_scenario("cocktail1").unwrap();
    let m: ChannelMatrix<f64> = build_channel_matrix(&s, desk(1), BandwidthConvention::Optical).unwrap();
    assert_eq!(m.links.len(), 10 * 4 * 8);
    for objective in [Objective::DbSum, Objective::LinearSum] {
        let p = AllocationProblem::new(&m, &s.noise, objective, &Wavelength::ALL).unwrap();
        let exact = p.solve_exact().unwrap();
        let greedy = p.solve_greedy().unwrap();
        assert_eq!(exact.users.len(), 10);
        let chans = p.channels_of(&exact).unwrap();
        check_exclusive(&chans).unwrap();
        assert_eq!(p.evaluate(&chans).unwrap().objective_value.to_bits(), exact.objective_value.to_bits());
        assert!(exact.objective_value >= greedy.objective_value);
    }
}

#[test]
fn restricted_bands_are_respected() {
    let s = builtin_scenario("conference_table").unwrap();
    let mut s3 = s.clone();
    s3.users.truncate(4);
    let m = build_channel_matrix(&s3, desk(0), BandwidthConvention::Optical).unwrap();
    let noise = NoiseModel::new(s.noise.noise_density, s.noise.receiver_bandwidth);
    let p = AllocationProblem::new(&m, &noise, Objective::DbSum, &[Wavelength::Green]).unwrap();
    let a = p.solve_exact().unwrap();
    assert!(a.users.iter().all(|u| u.wavelength == Wavelength::Green));
}

#[test]
fn canonical_json_is_a_fixed_point() {
    let text = r#"{"name": "demo", "users": [{"id": 4, "pos": [1.5, 2.5, 1]}, {"id": 2, "pos": [3, 7, 1]}],
                   "receiver": {"noise_density_pa_sqrthz": 4.47, "bandwidth_hz": 5e9},
                   "rate_overrides": [{"id": 2, "rate_bps": 3.2e9}]}"#;
    let s = parse_scenario(text).unwrap();
    let canonical = s.to_canonical_json();
    let again = parse_scenario(&canonical).unwrap();
    assert_eq!(again, s);
    assert_eq!(again.to_canonical_json(), canonical);
    assert_eq!(s.noise.noise_density, 4.47e-12);
    assert_eq!(s.rate_overrides[&2], 3.2e9);
}
