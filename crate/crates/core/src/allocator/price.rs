use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Dual price shared between the nearline solver (single writer) and online
/// decision makers. The price is one 64-bit word, so readers always see a
/// whole value and never block the writer.
#[derive(Debug, Clone)]
pub struct PublishedPrice {
    bits: Arc<AtomicU64>,
}

impl PublishedPrice {
    pub fn new(lambda: f64) -> Self {
        Self { bits: Arc::new(AtomicU64::new(lambda.max(0.0).to_bits())) }
    }

    pub fn publish(&self, lambda: f64) {
        self.bits.store(lambda.max(0.0).to_bits(), Ordering::Release);
    }

    pub fn snapshot(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::Acquire))
    }
}
