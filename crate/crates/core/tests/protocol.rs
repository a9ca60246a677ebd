use proptest::prelude::*;
use spinchain_control::controller::{
    replay, run_control, ControlSettings, MaskPolicy, SchedulerState, SwitchEvent, SwitchPolicy,
};
use spinchain_control::model::{
    sample_ensemble, smooth_pulse, ChainSpec, ControlFrame, DisorderSpec, EnsembleStream, PulseMetadata, PulseSchedule,
};

fn settings(t_max: f64) -> ControlSettings {
    ControlSettings { t_max, ..Default::default() }
}

#[test]
fn two_spins_need_a_single_target() {
    let chain = ChainSpec::uniform(2, 1.0).unwrap();
    let out = run_control(&[chain], &settings(5.0), vec![]).unwrap();
    assert!(out.completed);
    assert_eq!(out.schedule.switch_times.len(), 1);
    assert!(out.peak(1).0 >= 0.999);
}

#[test]
fn completed_run_switches_once_per_target_and_respects_bounds() {
    let n = 5;
    let chain = ChainSpec::uniform(n, 1.0).unwrap();
    let s = settings(40.0);
    let out = run_control(&[chain], &s, vec![]).unwrap();
    assert!(out.completed);
    assert_eq!(out.schedule.switch_times.len(), n - 1);
    assert_eq!(out.schedule.frames.len(), out.rows.len());
    assert!(out.rows.windows(2).all(|w| w[1].target >= w[0].target));
    assert!(out.schedule.frames.iter().all(|f| f.max_magnitude() <= s.beta + 1e-9));
    assert!(out.peak(n - 1).0 > 0.95);
    for (k, row) in out.rows.iter().enumerate() {
        assert_eq!(row.target, out.schedule.target_at(k));
    }
}

#[test]
fn reduced_mask_keeps_outside_sites_free() {
    let n = 9;
    let chain = ChainSpec::uniform(n, 1.0).unwrap();
    let s = ControlSettings { mask: MaskPolicy::Reduced, mu: 0.2, t_max: 6.0, ..Default::default() };
    let out = run_control(&[chain], &s, vec![]).unwrap();
    for (k, f) in out.schedule.frames.iter().enumerate() {
        let mask = MaskPolicy::Reduced.mask(out.schedule.target_at(k), n).unwrap();
        for (site, g) in f.fields.iter().enumerate() {
            if !mask[site] {
                assert_eq!(*g, [0.0, 0.0]);
            }
        }
    }
}

#[test]
fn ensemble_of_one_ordered_chain_reproduces_single_run() {
    let n = 5;
    let s = settings(40.0);
    let single = run_control(&[ChainSpec::uniform(n, 1.0).unwrap()], &s, vec![]).unwrap();
    let spec = DisorderSpec { n, base: 1.0, lo: 1.0, hi: 1.0, seed: 17, count: 1 };
    let ensemble = run_control(&sample_ensemble(&spec).unwrap(), &s, vec![17]).unwrap();
    assert_eq!(single.rows, ensemble.rows);
    assert_eq!(single.schedule.frames, ensemble.schedule.frames);
}

#[test]
fn identical_members_behave_like_one_chain() {
    let chain = ChainSpec::new(vec![1.05, 0.95, 1.0]).unwrap();
    let s = settings(20.0);
    let single = run_control(std::slice::from_ref(&chain), &s, vec![]).unwrap();
    assert!(single.completed);
    for m in [2, 4] {
        let copies = vec![chain.clone(); m];
        let many = run_control(&copies, &s, vec![]).unwrap();
        assert_eq!(single.rows, many.rows);
        assert_eq!(many.members.len(), m);
        assert!(many.members.iter().all(|r| r == &single.members[0]));
    }
}

#[test]
fn replay_reproduces_training_trajectories() {
    let spec = DisorderSpec { n: 5, base: 1.0, lo: 0.9, hi: 1.1, seed: 3, count: 3 };
    let chains = sample_ensemble(&spec).unwrap();
    let s = settings(40.0);
    let trained = run_control(&chains, &s, vec![3]).unwrap();
    let replayed = replay(&chains, &trained.schedule, &s).unwrap();
    assert_eq!(trained.rows, replayed.rows);
    assert_eq!(trained.members, replayed.members);
    assert!(replayed.completed);
}

#[test]
fn short_window_smoothing_costs_little_entanglement() {
    let chain = ChainSpec::uniform(6, 1.0).unwrap();
    let s = settings(40.0);
    let out = run_control(std::slice::from_ref(&chain), &s, vec![]).unwrap();
    let smoothed = smooth_pulse(&out.schedule, 3).unwrap();
    let again = replay(std::slice::from_ref(&chain), &smoothed, &s).unwrap();
    assert!(out.peak(5).0 - again.peak(5).0 < 0.02, "{:?} vs {:?}", out.peak(5), again.peak(5));
}

#[test]
fn ensembles_are_reproducible_and_streams_independent() {
    let spec = DisorderSpec { n: 8, base: 1.0, lo: 0.8, hi: 1.2, seed: 99, count: 6 };
    let a = sample_ensemble(&spec).unwrap();
    assert_eq!(a, sample_ensemble(&spec).unwrap());
    let shorter = sample_ensemble(&DisorderSpec { count: 2, ..spec.clone() }).unwrap();
    assert_eq!(&a[..2], &shorter[..]);
    let train = sample_ensemble(&spec.with_stream(EnsembleStream::Train)).unwrap();
    let test = sample_ensemble(&spec.with_stream(EnsembleStream::Test)).unwrap();
    assert_ne!(train, test);
    assert!(a.iter().flat_map(|c| c.couplings()).all(|&j| (0.8..=1.2).contains(&j)));
}

fn pulse(values: &[[f64; 2]]) -> PulseSchedule {
    let mut s = PulseSchedule::new(PulseMetadata { n: 2, ..Default::default() });
    s.frames = values.iter().map(|&v| ControlFrame { fields: vec![v, [-v[1], v[0]]], duration: 1e-3 }).collect();
    s
}

proptest! {
    #[test]
    fn smoothing_is_linear(
        p in prop::collection::vec(prop::array::uniform2(-70.0f64..70.0), 1..40),
        q_seed in prop::collection::vec(prop::array::uniform2(-70.0f64..70.0), 40),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        w in 0i64..5,
    ) {
        let window = 2 * w + 1;
        let q = &q_seed[..p.len()];
        let combo: Vec<[f64; 2]> = p.iter().zip(q).map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]]).collect();
        let sp = smooth_pulse(&pulse(&p), window).unwrap();
        let sq = smooth_pulse(&pulse(q), window).unwrap();
        let sc = smooth_pulse(&pulse(&combo), window).unwrap();
        for k in 0..p.len() {
            for site in 0..2 {
                for axis in 0..2 {
                    let lhs = sc.frames[k].fields[site][axis];
                    let rhs = a * sp.frames[k].fields[site][axis] + b * sq.frames[k].fields[site][axis];
                    prop_assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn scheduler_never_moves_backwards(values in prop::collection::vec(-1.0f64..1.2, 1..3000), n in 2usize..7) {
        let policy = SwitchPolicy { window: 20, ..Default::default() };
        let mut s = SchedulerState::new(n, policy).unwrap();
        let mut last = s.target();
        for (k, &v) in values.iter().enumerate() {
            s.advance(v, (k + 1) as f64 * 1e-3, k);
            prop_assert!(s.target() >= last);
            last = s.target();
        }
        prop_assert!(s.switch_times().len() <= n - 1);
        prop_assert!(s.target() < n);
    }

    #[test]
    fn saturating_signal_completes_with_one_switch_per_target(n in 2usize..8, level in 0.1f64..0.9) {
        let policy = SwitchPolicy { window: 10, ..Default::default() };
        let mut s = SchedulerState::new(n, policy).unwrap();
        let mut k = 0;
        while !s.is_completed() {
            let event = s.advance(level, (k + 1) as f64, k);
            prop_assert!(event != SwitchEvent::Completed || s.is_completed());
            k += 1;
            prop_assert!(k < 1000);
        }
        prop_assert_eq!(s.switch_times().len(), n - 1);
    }
}
