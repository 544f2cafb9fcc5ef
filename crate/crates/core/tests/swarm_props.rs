use num_complex::Complex64;
use proptest::prelude::*;
use qswarm::frame::{Frame, SwarmSnapshot};
use qswarm::lattice::{Boundary, Lattice, LatticeSpec};
use qswarm::swarm::{SampleType, Swarm};

fn lattice(n: usize) -> std::sync::Arc<Lattice> {
    Lattice::new(LatticeSpec::one_d(n, 1.0, Boundary::Periodic).unwrap())
}

fn swarm_with(counts: &[[u32; 4]]) -> Swarm {
    let mut s = Swarm::empty(0, &lattice(counts.len()), 1.0);
    for (cell, c) in counts.iter().enumerate() {
        for (k, &n) in c.iter().enumerate() {
            s.add(SampleType::from_index(k), cell, n as f64);
        }
    }
    s
}

fn counts() -> impl Strategy<Value = Vec<[u32; 4]>> {
    prop::collection::vec(prop::array::uniform4(0u32..1000), 2..20)
}

proptest! {
    #[test]
    fn type_algebra(k in -8i64..8, j in 0usize..4) {
        let t = SampleType::from_index(j);
        prop_assert_eq!(t.shift(k).shift(-k), t);
        prop_assert_eq!(t.shift(4 * k), t);
        prop_assert_eq!(t.shift(k).unit(), t.unit() * Complex64::i().powi(k as i32));
    }

    #[test]
    fn cancel_pairs_keeps_amplitudes_exactly(c in counts()) {
        let mut s = swarm_with(&c);
        let before = s.amplitudes();
        s.cancel_pairs();
        prop_assert_eq!(s.amplitudes(), before);
        for cell in 0..s.cell_count() {
            prop_assert_eq!(s.counts[0].values[cell].min(s.counts[2].values[cell]), 0.0);
            prop_assert_eq!(s.counts[1].values[cell].min(s.counts[3].values[cell]), 0.0);
        }
    }

    #[test]
    fn rotation_multiplies_by_powers_of_i(c in counts(), k in -5i64..5) {
        let mut s = swarm_with(&c);
        let before = s.amplitudes();
        s.rotate_types(k);
        let phase = Complex64::i().powi(k as i32);
        for (a, b) in s.amplitudes().iter().zip(&before) {
            prop_assert_eq!(*a, b * phase);
        }
    }

    #[test]
    fn snapshots_round_trip(c in counts(), time in 0.0f64..100.0) {
        let s = swarm_with(&c);
        let text = SwarmSnapshot::of(&s, time).to_string();
        let back: SwarmSnapshot = text.parse().unwrap();
        let r = back.to_swarm(s.lattice()).unwrap();
        prop_assert_eq!(r.amplitudes(), s.amplitudes());
        prop_assert_eq!(back.time, time);
    }

    #[test]
    fn frames_round_trip(values in prop::collection::vec(0.0f64..1e6, 2..40), time in 0.0f64..1e3) {
        let f = Frame::new(vec![values.len()], time, values).unwrap();
        let back: Frame = f.to_string().parse().unwrap();
        prop_assert_eq!(back, f);
    }
}
