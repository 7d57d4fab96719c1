mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustfed_core::participation::{decide_round, register_clients, Status};
use trustfed_core::smoothing::SmoothedTrust;
use trustfed_core::ClientId;

fn replay(trust: &[Vec<f64>], tau: f64, m: usize) -> Vec<oracles::TraceStep> {
    let n = trust[0].len();
    let ids: Vec<ClientId> = (0..n as u32).map(ClientId).collect();
    let mut statuses = register_clients(&ids).unwrap();
    let mut steps = Vec::new();
    for round in trust {
        let smoothed: SmoothedTrust = ids.iter().copied().zip(round.iter().copied()).collect();
        let (decision, next) = decide_round(&statuses, &smoothed, tau, m).unwrap();
        statuses = next;
        let as_vec = |s: &std::collections::BTreeSet<ClientId>| s.iter().map(|c| c.0 as usize).collect::<Vec<_>>();
        steps.push(oracles::TraceStep {
            omitted_now: as_vec(&decision.omitted_now),
            readmitted_now: as_vec(&decision.readmitted_now),
            active: as_vec(&decision.active_set),
        });
        let omitted = statuses.values().filter(|s| s.status == Status::Omitted).count();
        assert_eq!(omitted + decision.active_set.len(), n);
    }
    steps
}

#[test]
fn random_trajectories_match_state_machine_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let n = rng.random_range(1..=10);
        let rounds = rng.random_range(1..=30);
        let m = rng.random_range(0..=4);
        // values cluster around tau so crossings and ties are common
        let levels = [0.5, 0.7, 0.74, 0.75, 0.76, 0.8, 0.95];
        let trust: Vec<Vec<f64>> = (0..rounds)
            .map(|_| (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect())
            .collect();
        assert_eq!(replay(&trust, 0.75, m), oracles::oracle_state_trace(&trust, 0.75, m));
    }
}

#[test]
fn counter_reset_trace() {
    // client 0 is pushed out in round 1, then follows 0.8, 0.74, 0.8, 0.8
    let trust = vec![vec![0.1], vec![0.8], vec![0.74], vec![0.8], vec![0.8]];
    let steps = replay(&trust, 0.75, 3);
    assert_eq!(steps, oracles::oracle_state_trace(&trust, 0.75, 3));
    assert_eq!(steps[0].omitted_now, vec![0]);
    for step in &steps[1..4] {
        assert!(step.readmitted_now.is_empty());
    }
    assert_eq!(steps[4].readmitted_now, vec![0]);
}

#[test]
fn zero_cap_never_omits() {
    let trust = vec![vec![0.0, 0.1, 0.2]; 5];
    for step in replay(&trust, 0.75, 0) {
        assert!(step.omitted_now.is_empty());
        assert_eq!(step.active, vec![0, 1, 2]);
    }
}
