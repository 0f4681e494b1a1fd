//! A step regenerates its noise on the fly: the bytes allocated during one
//! step stay far below the size of a single parameter-sized buffer.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use adalezo::objectives::ProbeObjective;
use adalezo::{LayeredParams, Method, Objective, Optimizer, RunConfig};

struct Counting;

static BYTES: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        BYTES.fetch_add(layout.size(), Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        BYTES.fetch_add(new_size, Ordering::Relaxed);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

#[test]
fn steps_do_not_allocate_parameter_sized_buffers() {
    let d = 1_000_000;
    let obj = ProbeObjective::even(d, 32, 0).unwrap();
    let mut params = LayeredParams::zeros(obj.layer_sizes()).unwrap();
    for method in [Method::Mezo, Method::Adalezo, Method::RandomSparse] {
        let cfg = RunConfig {
            method,
            eta: 1e-6,
            steps: 10,
            ..RunConfig::default()
        };
        let mut opt = Optimizer::new(cfg, params.num_layers()).unwrap();
        opt.step(&mut params, &obj, 0).unwrap();
        let before = BYTES.load(Ordering::Relaxed);
        for t in 1..10 {
            opt.step(&mut params, &obj, t).unwrap();
        }
        let per_step = (BYTES.load(Ordering::Relaxed) - before) / 9;
        assert!(per_step < d * 8 / 100, "{method}: {per_step} bytes per step");
    }
}
