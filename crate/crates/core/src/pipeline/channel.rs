use std::collections::VecDeque;

/// Depth of every inter-stage stream.
pub const DEFAULT_STREAM_DEPTH: usize = 16;

/// Bounded FIFO linking two dataflow stages.
///
/// Blocking is simulated: `try_push` and `try_pop` refuse instead of
/// waiting, and the caller retries on a later step.
#[derive(Debug, Clone)]
pub struct StreamChannel<T> {
    buf: VecDeque<T>,
    capacity: usize,
    pushes: u64,
    pops: u64,
    high_water: usize,
}

impl<T> StreamChannel<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "stream capacity must be positive");
        StreamChannel {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            pushes: 0,
            pops: 0,
            high_water: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn try_push(&mut self, value: T) -> Result<(), T> {
        if self.is_full() {
            return Err(value);
        }
        self.buf.push_back(value);
        self.pushes += 1;
        self.high_water = self.high_water.max(self.buf.len());
        Ok(())
    }

    pub fn try_pop(&mut self) -> Option<T> {
        let v = self.buf.pop_front()?;
        self.pops += 1;
        Some(v)
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn pops(&self) -> u64 {
        self.pops
    }

    /// Largest occupancy observed.
    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn refuses_when_full_or_empty() {
        let mut ch = StreamChannel::new(2);
        assert!(ch.try_pop().is_none());
        ch.try_push(1).unwrap();
        ch.try_push(2).unwrap();
        assert_eq!(ch.try_push(3), Err(3));
        assert_eq!(ch.try_pop(), Some(1));
        assert_eq!(ch.high_water(), 2);
    }

    proptest! {
        #[test]
        fn fifo_order_and_conservation(ops in proptest::collection::vec(any::<bool>(), 0..200), cap in 1usize..20) {
            let mut ch = StreamChannel::new(cap);
            let mut next = 0u32;
            let mut expect = 0u32;
            for push in ops {
                if push {
                    if ch.try_push(next).is_ok() {
                        next += 1;
                    }
                } else if let Some(v) = ch.try_pop() {
                    prop_assert_eq!(v, expect);
                    expect += 1;
                }
                prop_assert!(ch.len() <= cap);
                prop_assert!(ch.pops() <= ch.pushes());
            }
            while let Some(v) = ch.try_pop() {
                prop_assert_eq!(v, expect);
                expect += 1;
            }
            prop_assert_eq!(ch.pushes(), ch.pops());
        }
    }
}
