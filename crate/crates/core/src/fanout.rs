//! Batch evaluation of the publish-time gate.
//!
//! One published message is checked once per candidate client. With the
//! `parallel` feature, large candidate lists are split across the rayon
//! thread pool; otherwise, and for small lists, evaluation is sequential.

use crate::engine::FilterEngine;
use crate::topic::TopicName;

/// Candidate count from which the parallel path is taken.
pub const PARALLEL_THRESHOLD: usize = 64;

impl FilterEngine {
    /// `on_deliver` for every client in `clients`, in order.
    pub fn gate_deliveries<C>(&self, topic: &TopicName, clients: &[C]) -> Vec<bool>
    where
        C: AsRef<str> + Sync,
    {
        if !self.config().mode.filters_on_publish() {
            return vec![true; clients.len()];
        }
        #[cfg(feature = "parallel")]
        if clients.len() >= PARALLEL_THRESHOLD {
            return self.gate_deliveries_parallel(topic, clients);
        }
        self.gate_deliveries_sequential(topic, clients)
    }

    pub fn gate_deliveries_sequential<C>(&self, topic: &TopicName, clients: &[C]) -> Vec<bool>
    where
        C: AsRef<str>,
    {
        clients
            .iter()
            .map(|c| self.on_deliver(c.as_ref(), topic))
            .collect()
    }

    #[cfg(feature = "parallel")]
    pub fn gate_deliveries_parallel<C>(&self, topic: &TopicName, clients: &[C]) -> Vec<bool>
    where
        C: AsRef<str> + Sync,
    {
        use rayon::prelude::*;
        clients
            .par_iter()
            .map(|c| self.on_deliver(c.as_ref(), topic))
            .collect()
    }
}
