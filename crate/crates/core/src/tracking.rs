//! Process-wide accounting of live image-sized buffers.
//!
//! Every [`ComplexImage`](crate::numerics::ComplexImage) and every feature-map
//! tensor of the energy network holds a [`BufferToken`] weighted by the number
//! of `height × width` planes it owns. The counters make memory claims about
//! the sampler and trainer checkable from tests.

use std::sync::atomic::{AtomicUsize, Ordering};

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug)]
pub struct BufferToken {
    planes: usize,
}

impl BufferToken {
    pub fn new(planes: usize) -> Self {
        let now = LIVE.fetch_add(planes, Ordering::Relaxed) + planes;
        PEAK.fetch_max(now, Ordering::Relaxed);
        BufferToken { planes }
    }
}

impl Clone for BufferToken {
    fn clone(&self) -> Self {
        BufferToken::new(self.planes)
    }
}

impl Drop for BufferToken {
    fn drop(&mut self) {
        LIVE.fetch_sub(self.planes, Ordering::Relaxed);
    }
}

/// Number of image planes currently allocated.
pub fn live_planes() -> usize {
    LIVE.load(Ordering::Relaxed)
}

/// Highest value of [`live_planes`] since the last [`reset_peak`].
pub fn peak_planes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

pub fn reset_peak() {
    PEAK.store(LIVE.load(Ordering::Relaxed), Ordering::Relaxed);
}
