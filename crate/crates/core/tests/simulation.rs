use myodyn::config::ToolConfig;
use myodyn::joint::{self, JointState};
use myodyn::train::{dynamics_residual_at, Kinematics, Normalizers};
use proptest::prelude::*;

/// Tonic co-contraction with a slow flexor ramp, started moving so that `q`
/// and `q̇` stay positive: the passive curve jumps at q = 0 and
/// force-velocity has a slope break at q̇ = 0.
fn ramp_run(cfg: &ToolConfig, dt: f64) -> joint::Trajectory {
    let s = cfg.subject().unwrap();
    let n = s.params.len();
    let excitation = |t: f64| {
        let ramp = 0.05 * (1.0 - (-2.0 * t).exp());
        (0..n).map(|i| if i < 2 { 0.05 + ramp } else { 0.05 }).collect::<Vec<f64>>()
    };
    joint::simulate(excitation, &s.model, &s.params, &s.shape, 0.1, 0.5, dt, 1.0).unwrap()
}

#[test]
fn rk4_self_convergence_is_fourth_order() {
    let cfg = ToolConfig::default();
    let runs: Vec<_> = [2e-3, 1e-3, 5e-4, 2.5e-4].iter().map(|&dt| ramp_run(&cfg, dt)).collect();
    assert!(runs[3].states.iter().all(|st| st.q > 0.0 && st.qdot > 0.0));
    let end: Vec<f64> = runs.iter().map(|r| r.states.last().unwrap().q).collect();
    let ratio = |i: usize| (end[i] - end[i + 1]).abs() / (end[i + 1] - end[i + 2]).abs();
    assert!((12.0..=20.0).contains(&ratio(1)), "ratio {}", ratio(1));
    // Approaches 16 from above as the step shrinks.
    assert!(ratio(1) < ratio(0), "{} then {}", ratio(0), ratio(1));
}

/// Ratio on the default cyclic trial, which crosses q = 0 and q̇ = 0
/// repeatedly: the kinks in the muscle curves cap the observed order well
/// below four.
#[test]
fn cyclic_run_crossing_curve_kinks_loses_fourth_order() {
    let cfg = ToolConfig::default();
    let s = cfg.subject().unwrap();
    let profile = &cfg.data.profile;
    let end = |dt: f64| {
        let traj = joint::simulate(|t| profile.excitation(t, 0.0), &s.model, &s.params, &s.shape, 0.1, 0.0, dt, 1.0).unwrap();
        traj.states.last().unwrap().q
    };
    let (a, b, c) = (end(4e-3), end(2e-3), end(1e-3));
    let ratio = (a - b).abs() / (b - c).abs();
    assert!((ratio - 0.7407).abs() < 1e-3, "ratio {ratio}");
}

/// The passive curve jumps by F0m·e⁻⁵ at l̄ = 1, which every muscle reaches at
/// q = 0, and force-velocity has one-sided slopes 4.3 and 26.7 at v̄ = 0.
/// Stencils straddling a zero crossing or a turning point see those kinks;
/// all others close the equation of motion.
#[test]
fn synthesized_trial_satisfies_equation_of_motion_with_differenced_angles() {
    let cfg = ToolConfig::default();
    let (trial, manifest) = cfg.synthesize(4, 1.0).unwrap();
    let s = &manifest.subject;
    let dt = trial.dt();
    let q = &trial.angles;
    let (mut smooth, mut straddling) = (0.0f64, 0.0f64);
    let mut crossings = 0;
    for i in 1..trial.len() - 1 {
        let qdot = (q[i + 1] - q[i - 1]) / (2.0 * dt);
        let qddot = (q[i + 1] - 2.0 * q[i] + q[i - 1]) / (dt * dt);
        let state = JointState { q: q[i], qdot };
        let (tau, _) = joint::joint_torque(&trial.envelopes[i], state, &s.params, &s.shape, &s.model).unwrap();
        let rho = joint::dynamics_residual(state, qddot, tau, &s.model).abs();
        let lo = q[i - 1].min(q[i]).min(q[i + 1]);
        let hi = q[i - 1].max(q[i]).max(q[i + 1]);
        let turning = (q[i] - q[i - 1]) * (q[i + 1] - q[i]) <= 0.0;
        if (lo <= 0.0 && hi > 0.0) || turning {
            crossings += 1;
            straddling = straddling.max(rho);
        } else {
            smooth = smooth.max(rho);
        }
    }
    assert!(crossings > 0);
    assert!(smooth < 1e-4, "worst residual away from q = 0: {smooth}");
    assert!(straddling > 1e-3, "{straddling}");
}

#[test]
fn recorded_accelerations_close_the_residual() {
    let cfg = ToolConfig::default();
    let s = cfg.subject().unwrap();
    let profile = &cfg.data.profile;
    let traj = joint::simulate(|t| profile.excitation(t, 1.1), &s.model, &s.params, &s.shape, 0.0, 0.0, 1e-3, 2.0).unwrap();
    let norms = Normalizers::new(&s.model, &cfg.trainable().unwrap());
    let mut doubled = s.params.clone();
    for p in &mut doubled {
        p.f0m *= 2.0;
    }
    let mut broken = 0.0;
    for i in 0..traj.len() {
        let k = Kinematics {
            q: traj.states[i].q,
            q_dot: traj.states[i].qdot,
            q_ddot: traj.accelerations[i],
        };
        let e = &traj.excitations[i];
        let (rho, forces) = dynamics_residual_at(k, e, &s.params, &s.shape, &s.model, &norms).unwrap();
        assert!(rho.abs() < 1e-12, "step {i}: {rho}");
        assert_eq!(forces, traj.forces[i]);
        broken += dynamics_residual_at(k, e, &doubled, &s.shape, &s.model, &norms).unwrap().0.powi(2);
    }
    assert!(broken > 0.0);
}

#[test]
fn noise_free_synthesis_is_deterministic() {
    let cfg = ToolConfig::default();
    assert!(cfg.data.profile.snr_db.is_infinite());
    let (a, ma) = cfg.synthesize(7, 1.0).unwrap();
    let (b, mb) = cfg.synthesize(7, 1.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    let (c, _) = cfg.synthesize(8, 1.0).unwrap();
    assert_ne!(a.angles, c.angles);
}

#[test]
fn zero_amplitude_profile_rests_at_equilibrium() {
    let mut cfg = ToolConfig::default();
    cfg.data.profile.amplitudes = vec![0.0; 5];
    let s = cfg.subject().unwrap();
    let traj = joint::simulate(|t| cfg.data.profile.excitation(t, 0.0), &s.model, &s.params, &s.shape, 0.0, 0.0, 1e-3, 1.0).unwrap();
    assert!(traj.states.iter().all(|st| st.q == 0.0 && st.qdot == 0.0));
    // Reference lengths put every fibre at its optimal length at q = 0.
    assert!(traj.forces.iter().flatten().all(|f| *f == 0.0));
}

/// Frequency of the largest DFT magnitude of the mean-removed series,
/// scanned on a fine grid.
fn peak_frequency(x: &[f64], dt: f64) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut best = (0.0, 0.0);
    for k in 1..=400 {
        let f = k as f64 * 0.005;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * f * i as f64 * dt;
            re += (v - mean) * w.cos();
            im -= (v - mean) * w.sin();
        }
        let mag = re.hypot(im);
        if mag > best.1 {
            best = (f, mag);
        }
    }
    best.0
}

#[test]
fn movement_speed_moves_the_spectral_peak() {
    let cfg = ToolConfig::default();
    let f = cfg.data.profile.frequency;
    let (fast, _) = cfg.synthesize(1, 1.0).unwrap();
    let (slow, _) = cfg.synthesize(1, 0.8).unwrap();
    let pf = peak_frequency(&fast.angles, fast.dt());
    let ps = peak_frequency(&slow.angles, slow.dt());
    assert!((pf - f).abs() < 0.03, "{pf}");
    assert!((ps - 0.8 * f).abs() < 0.03, "{ps}");
}

#[test]
fn manifest_truth_lies_inside_trainer_bounds() {
    for names in [vec!["FCR", "FCU", "ECRL", "ECRB", "ECU"], vec!["FCR", "ECU"], vec!["ECRB"]] {
        let cfg = ToolConfig::default().select(&names).unwrap();
        let (_, manifest) = cfg.synthesize(3, 1.0).unwrap();
        let bounds = cfg.trainable().unwrap();
        for (i, p) in manifest.subject.params.iter().enumerate() {
            assert!(bounds.f0m[i].lo < p.f0m && p.f0m < bounds.f0m[i].hi);
            assert!(bounds.l0m[i].lo < p.l0m && p.l0m < bounds.l0m[i].hi);
        }
        for (b, a) in bounds.shape.iter().zip(&manifest.subject.shape) {
            assert!(b.lo < *a && *a < b.hi);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torque_contribution_is_linear_in_max_isometric_force(
        q in -0.6f64..0.6,
        qdot in -1.0f64..1.0,
        e in proptest::collection::vec(0.0f64..0.3, 5),
        muscle in 0usize..5,
        scale in 0.5f64..2.0,
    ) {
        let s = ToolConfig::default().subject().unwrap();
        let state = JointState { q, qdot };
        let (_, base) = joint::joint_torque(&e, state, &s.params, &s.shape, &s.model).unwrap();
        let mut scaled = s.params.clone();
        scaled[muscle].f0m *= scale;
        let (_, forces) = joint::joint_torque(&e, state, &scaled, &s.shape, &s.model).unwrap();
        for n in 0..5 {
            let expect = if n == muscle { base[n] * scale } else { base[n] };
            prop_assert!((forces[n] - expect).abs() <= 1e-12 * expect.abs().max(1e-9));
        }
    }
}
