//! Fixed-capacity FIFO of instance subspaces used as negatives.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::subspace::InstanceSubspace;

/// About half an epoch of the default desk dataset (2000 instances): a queue
/// longer than one epoch holds stale copies of the query's own instance.
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

/// Oldest entries are evicted first once `capacity` is reached.
#[derive(Debug, Clone)]
pub struct SubspaceQueue<T> {
    capacity: usize,
    entries: VecDeque<Arc<InstanceSubspace<T>>>,
}

/// Immutable view of the queue at one point in time, oldest first.
pub type Snapshot<T> = Arc<[Arc<InstanceSubspace<T>>]>;

impl<T: Scalar> SubspaceQueue<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn dim(&self) -> Option<usize> {
        self.entries.front().map(|s| s.dim())
    }

    /// Appends in order, then evicts from the front down to capacity.
    ///
    /// Fails without modifying the queue if any subspace disagrees in
    /// dimension with the queue contents or the rest of the batch.
    pub fn enqueue_batch<I>(&mut self, subspaces: I) -> Result<()>
    where
        I: IntoIterator<Item = InstanceSubspace<T>>,
    {
        let batch: Vec<_> = subspaces.into_iter().collect();
        let mut dim = self.dim();
        for s in &batch {
            match dim {
                Some(d) if d != s.dim() => {
                    return Err(Error::DimensionMismatch {
                        context: "subspace queue",
                        expected: d,
                        got: s.dim(),
                    })
                }
                _ => dim = Some(s.dim()),
            }
        }
        // Only the newest `capacity` of the batch can survive.
        let skip = batch.len().saturating_sub(self.capacity);
        for s in batch.into_iter().skip(skip) {
            self.entries.push_back(Arc::new(s));
        }
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn negatives_snapshot(&self) -> Snapshot<T> {
        self.entries.iter().cloned().collect()
    }
}
