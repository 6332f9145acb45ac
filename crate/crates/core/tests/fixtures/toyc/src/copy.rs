//! Byte copy helper used by the toyc Rust bindings.

use std::ptr;

/// Copies `size` bytes. Callers guarantee both buffers hold `size` bytes.
pub unsafe fn copy_bytes(src: *const u8, dst: *mut u8, size: usize) {
    ptr::copy_nonoverlapping(src, dst, size);
}
