//! Randomized capture/release sequences checked against a plain reference queue.

use std::collections::VecDeque;

use proptest::prelude::*;
use sdlc_sim::workflow::{CaptureOutcome, ResourcePool};

#[derive(Debug, Clone)]
enum Op {
    Request(u32),
    /// Release the units of the `n`-th (mod holders) current holder.
    Release(usize),
}

fn ops(capacity: u32) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (1..=capacity).prop_map(Op::Request),
            any::<usize>().prop_map(Op::Release),
        ],
        1..80,
    )
}

/// Reference model: FIFO of (id, units) with head-of-line blocking.
struct Reference {
    capacity: u32,
    busy: u32,
    queue: VecDeque<(u64, u32)>,
    grant_order: Vec<u64>,
}

impl Reference {
    fn drain(&mut self) {
        while let Some(&(id, units)) = self.queue.front() {
            if self.busy + units > self.capacity {
                break;
            }
            self.queue.pop_front();
            self.busy += units;
            self.grant_order.push(id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fifo_grants_and_conservation((capacity, ops) in (1u32..12).prop_flat_map(|c| (Just(c), ops(c)))) {
        let mut pool = ResourcePool::new("p", capacity);
        let mut reference = Reference { capacity, busy: 0, queue: VecDeque::new(), grant_order: vec![] };
        let mut holders: Vec<(u64, u32)> = Vec::new();
        let mut granted_order: Vec<u64> = Vec::new();
        let mut enqueue_order: Vec<u64> = Vec::new();
        let mut next_id = 0u64;

        for op in ops {
            match op {
                Op::Request(units) => {
                    let id = next_id;
                    next_id += 1;
                    reference.queue.push_back((id, units));
                    reference.drain();
                    match pool.request_capture(id, units, 0.0).unwrap() {
                        CaptureOutcome::Granted => {
                            holders.push((id, units));
                            granted_order.push(id);
                        }
                        CaptureOutcome::Queued { position } => {
                            prop_assert_eq!(position, pool.pending().count() - 1);
                            enqueue_order.push(id);
                        }
                    }
                }
                Op::Release(pick) => {
                    if holders.is_empty() {
                        continue;
                    }
                    let (_, units) = holders.remove(pick % holders.len());
                    reference.busy -= units;
                    reference.drain();
                    for g in pool.release(units).unwrap() {
                        holders.push((g.entity, g.units));
                        granted_order.push(g.entity);
                    }
                }
            }
            let held: u32 = holders.iter().map(|h| h.1).sum();
            prop_assert_eq!(pool.busy(), held);
            prop_assert_eq!(pool.busy() + pool.free(), capacity);
            prop_assert!(pool.busy() <= capacity);
            prop_assert_eq!(pool.busy(), reference.busy);
            let pending: Vec<u64> = pool.pending().map(|r| r.entity).collect();
            let expected: Vec<u64> = reference.queue.iter().map(|q| q.0).collect();
            prop_assert_eq!(pending, expected);
        }
        prop_assert_eq!(&granted_order, &reference.grant_order);
        // Queued requests are granted in the order they were enqueued.
        let queued_grants: Vec<u64> = granted_order.iter().copied().filter(|id| enqueue_order.contains(id)).collect();
        let prefix: Vec<u64> = enqueue_order.iter().copied().take(queued_grants.len()).collect();
        prop_assert_eq!(queued_grants, prefix);
    }
}
