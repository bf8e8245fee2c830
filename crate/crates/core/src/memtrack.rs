//! Allocation accounting for the benchmark harness.
//!
//! [`TrackingAllocator`] wraps the system allocator and keeps, per thread, the
//! number of live bytes and their high-water mark. Binaries and test targets
//! that measure memory install it with `#[global_allocator]`. Counting is per
//! thread: kernel buffers are allocated by the calling thread, so dispatching
//! work to a worker pool does not change the measured figures.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};

pub struct TrackingAllocator;

static ACTIVE: AtomicBool = AtomicBool::new(false);

thread_local! {
    static LIVE: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
    static PAUSED: Cell<u32> = const { Cell::new(0) };
}

#[inline]
fn record(delta: isize) {
    let _ = PAUSED.try_with(|paused| {
        if paused.get() > 0 {
            return;
        }
        let _ = LIVE.try_with(|live| {
            let now = live.get() + delta;
            live.set(now);
            let _ = PEAK.try_with(|peak| {
                if now > peak.get() {
                    peak.set(now)
                }
            });
        });
    });
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        record(-(layout.size() as isize));
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            record(new_size as isize - layout.size() as isize);
        }
        p
    }
}

/// Whether [`TrackingAllocator`] is the process's global allocator.
pub fn is_active() -> bool {
    // Force at least one allocation through the global allocator.
    drop(std::hint::black_box(Box::new(0u8)));
    ACTIVE.load(Ordering::Relaxed)
}

/// Live bytes allocated (net of frees) by this thread.
pub fn live_bytes() -> isize {
    LIVE.with(Cell::get)
}

/// Run `f` and return its result with the high-water mark of bytes it held
/// live on this thread above the level at entry. Nested calls are allowed.
pub fn measure_peak<R>(f: impl FnOnce() -> R) -> (R, usize) {
    let base = live_bytes();
    let outer_peak = PEAK.with(Cell::get);
    PEAK.with(|p| p.set(base));
    let out = f();
    let peak = PEAK.with(Cell::get);
    PEAK.with(|p| p.set(outer_peak.max(peak)));
    (out, (peak - base).max(0) as usize)
}

/// Run `f` with accounting suspended on this thread. Used around thread-pool
/// dispatch so scheduler bookkeeping does not show up as kernel memory.
pub fn untracked<R>(f: impl FnOnce() -> R) -> R {
    PAUSED.with(|p| p.set(p.get() + 1));
    let out = f();
    PAUSED.with(|p| p.set(p.get() - 1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_sees_transient_buffers() {
        assert!(is_active());
        let (_, peak) = measure_peak(|| {
            let a = vec![0u8; 1 << 20];
            drop(std::hint::black_box(a));
            let b = vec![0u8; 1 << 10];
            std::hint::black_box(b).len()
        });
        assert!(peak >= 1 << 20 && peak < (1 << 20) + 4096, "{peak}");
    }

    #[test]
    fn nested_measurements_compose() {
        let ((_, inner), outer) = measure_peak(|| {
            let keep = vec![0u8; 4096];
            let r = measure_peak(|| std::hint::black_box(vec![0u8; 8192]).len());
            drop(std::hint::black_box(keep));
            r
        });
        assert!(inner >= 8192 && inner < 8192 + 1024);
        assert!(outer >= 8192 + 4096);
    }

    #[test]
    fn untracked_region_is_invisible() {
        let (_, peak) = measure_peak(|| untracked(|| std::hint::black_box(vec![0u8; 1 << 16]).len()));
        assert!(peak < 1024);
    }
}
