use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Fsm, FsmError};

/// Sampling attempts allowed per requested edge before giving up.
pub const GENERATION_ATTEMPTS_PER_EDGE: u64 = 1000;

/// Generates a random directed graph in which every state has at least one
/// incident edge.
///
/// A cursor starts at the highest state id and walks down; while it is
/// non-negative each accepted edge leaves the cursor's state, so every state
/// gets an outgoing edge before free random edges fill the remainder.
///
/// With `n_edges < n_nodes` the cursor cannot reach every state, so an
/// attempt that leaves a state isolated is discarded and the procedure starts
/// over on the same random stream. All attempts share one budget of
/// `1000 · n_edges` draws.
pub fn generate_fsm(n_nodes: usize, n_edges: usize, seed: u64) -> Result<Fsm, FsmError> {
    if n_nodes < 2 {
        return Err(FsmError::InfeasibleGraph(format!(
            "need at least 2 nodes, got {n_nodes}"
        )));
    }
    let max_edges = n_nodes * (n_nodes - 1);
    if n_edges > max_edges {
        return Err(FsmError::InfeasibleGraph(format!(
            "{n_edges} edges requested but {n_nodes} nodes admit at most {max_edges}"
        )));
    }
    let min_edges = n_nodes.div_ceil(2);
    if n_edges < min_edges {
        return Err(FsmError::InfeasibleGraph(format!(
            "{n_edges} edges cannot touch all {n_nodes} nodes (need {min_edges})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = GENERATION_ATTEMPTS_PER_EDGE * n_edges as u64;
    let mut used = 0u64;
    loop {
        let fsm = fill(n_nodes, n_edges, &mut rng, budget, &mut used)?;
        if fsm.validate_structure().is_empty() {
            return Ok(fsm);
        }
        if used >= budget {
            return Err(FsmError::GenerationStalled {
                attempts: used,
                edges: fsm.edge_count(),
                target: n_edges,
            });
        }
    }
}

fn fill(
    n_nodes: usize,
    n_edges: usize,
    rng: &mut ChaCha8Rng,
    budget: u64,
    used: &mut u64,
) -> Result<Fsm, FsmError> {
    let mut fsm = Fsm::empty(n_nodes);
    let mut edges = 0usize;
    let mut non_connected = n_nodes as isize - 1;
    let mut forced = false;
    while edges < n_edges {
        if *used >= budget {
            return Err(FsmError::GenerationStalled {
                attempts: *used,
                edges,
                target: n_edges,
            });
        }
        *used += 1;
        let j = rng.gen_range(0..n_nodes);
        let i = if non_connected >= 0 && non_connected as usize != j {
            forced = true;
            non_connected as usize
        } else {
            rng.gen_range(0..n_nodes)
        };
        if i != j && !fsm.has_edge(i, j) {
            fsm.push_edge(i, j);
            edges += 1;
            if forced {
                non_connected -= 1;
                forced = false;
            }
        }
    }
    Ok(fsm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_one_edge() {
        for seed in 0..50 {
            let fsm = generate_fsm(2, 1, seed).unwrap();
            let lists = fsm.lists().to_vec();
            assert!(lists == vec![vec![1], vec![]] || lists == vec![vec![], vec![0]]);
        }
    }

    #[test]
    fn four_by_four_touches_every_node() {
        for seed in 0..50 {
            let fsm = generate_fsm(4, 4, seed).unwrap();
            assert_eq!(fsm.edge_count(), 4);
            assert!(fsm.validate_structure().is_empty());
        }
    }

    #[test]
    fn dense_six_node_graphs_are_connected() {
        for seed in 0..100 {
            let fsm = generate_fsm(6, 20, seed).unwrap();
            assert_eq!(fsm.edge_count(), 20);
            // brute-force incident-edge check, independent of validate_structure
            for node in 0..6 {
                let touches = (0..6).any(|other| fsm.has_edge(node, other) || fsm.has_edge(other, node));
                assert!(touches, "seed {seed}: node {node} isolated");
            }
        }
    }

    #[test]
    fn complete_graph_is_reachable() {
        let fsm = generate_fsm(5, 20, 3).unwrap();
        assert_eq!(fsm.edge_count(), 20);
        assert!(fsm.validate_structure().is_empty());
    }

    #[test]
    fn sparse_graphs_restart_until_covered() {
        for seed in 0..20 {
            let fsm = generate_fsm(4, 2, seed).unwrap();
            assert_eq!(fsm.edge_count(), 2);
            assert!(fsm.validate_structure().is_empty());
        }
    }

    #[test]
    fn infeasible_requests() {
        assert!(matches!(generate_fsm(1, 0, 0), Err(FsmError::InfeasibleGraph(_))));
        assert!(matches!(generate_fsm(3, 7, 0), Err(FsmError::InfeasibleGraph(_))));
        assert!(matches!(generate_fsm(6, 2, 0), Err(FsmError::InfeasibleGraph(_))));
    }

    #[test]
    fn same_seed_same_graph() {
        assert_eq!(generate_fsm(10, 45, 99).unwrap(), generate_fsm(10, 45, 99).unwrap());
        assert_ne!(generate_fsm(10, 45, 99).unwrap(), generate_fsm(10, 45, 100).unwrap());
    }
}
