//! Single-producer/single-consumer ring of fixed 1024-byte slots.
//!
//! The ring lives in a plain byte region (heap for in-process use, a
//! memory-mapped file for cross-process use) so the two ends can sit in
//! different processes. Layout:
//!
//! ```text
//! offset  size            field
//! 0       4               magic 4D 4C 4F 53
//! 4       1               version 1
//! 5       3               zero pad
//! 8       4               slot_size u32 LE (1024)
//! 12      4               capacity u32 LE (power of two)
//! 16      8               head u64 LE — written only by the producer
//! 24      8               tail u64 LE — written only by the consumer
//! 32      32              zero pad (header is 64 bytes)
//! 64      capacity*1024   slots
//! ```
//!
//! `head` and `tail` increase monotonically; `slot = counter % capacity`;
//! `head - tail` is the number of published, unconsumed slots and never
//! exceeds `capacity`. The producer publishes a slot with a release store of
//! `head`; the consumer pairs it with an acquire load, so a slot is never
//! observed before its bytes are. Exactly one execution context may hold
//! each end.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

pub const SLOT_SIZE: usize = 1024;
pub const RING_HEADER_LEN: usize = 64;
pub const RING_MAGIC: [u8; 4] = [0x4D, 0x4C, 0x4F, 0x53];
pub const RING_VERSION: u8 = 1;

const HEAD_OFFSET: usize = 16;
const TAIL_OFFSET: usize = 24;

/// Bytes a ring of `capacity` slots occupies, header included.
pub fn ring_region_len(capacity: u32) -> usize {
    RING_HEADER_LEN + capacity as usize * SLOT_SIZE
}

/// A contiguous byte region shared between one producer and one consumer.
///
/// # Safety
///
/// Implementors guarantee `ptr()` stays valid and 8-byte aligned for the
/// lifetime of the value and that `len()` bytes are readable and writable.
pub unsafe trait Backing: Send + Sync {
    fn ptr(&self) -> *mut u8;
    fn len(&self) -> usize;
}

/// Heap-allocated backing for in-process rings and tests.
pub struct HeapBacking {
    words: Box<[u64]>,
}

impl HeapBacking {
    pub fn new(len: usize) -> Self {
        HeapBacking {
            words: vec![0u64; len.div_ceil(8)].into_boxed_slice(),
        }
    }
}

// SAFETY: the boxed slice is stable for the lifetime of the backing and
// u64 storage guarantees 8-byte alignment.
unsafe impl Backing for HeapBacking {
    fn ptr(&self) -> *mut u8 {
        self.words.as_ptr() as *mut u8
    }
    fn len(&self) -> usize {
        self.words.len() * 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("capacity {0} is not a nonzero power of two")]
    BadCapacity(u32),
    #[error("region of {got} bytes too small for capacity {capacity} ({needed} needed)")]
    RegionTooSmall {
        capacity: u32,
        needed: usize,
        got: usize,
    },
    #[error("bad ring header magic {0:02X?}")]
    BadMagic([u8; 4]),
    #[error("unsupported ring version {0}")]
    UnsupportedVersion(u8),
    #[error("ring declares slot size {0}, expected 1024")]
    BadSlotSize(u32),
}

/// Backpressure signal from [`RingProducer::push`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PushError {
    /// `head - tail == capacity`; the ring is unchanged.
    #[error("ring full")]
    Full,
    #[error("frame of {0} bytes exceeds the 1024-byte slot")]
    Oversize(usize),
}

#[derive(Clone)]
struct RingShared {
    backing: Arc<dyn Backing>,
    /// Byte offset of this ring's header inside the backing.
    base: usize,
    capacity: u64,
}

impl RingShared {
    fn header_ptr(&self, off: usize) -> *mut u8 {
        // SAFETY: base + off stays inside the region (checked at init).
        unsafe { self.backing.ptr().add(self.base + off) }
    }

    fn head(&self) -> &AtomicU64 {
        // SAFETY: offset 16 is 8-aligned within an 8-aligned region; the
        // field is only ever accessed through AtomicU64 after init.
        unsafe { &*(self.header_ptr(HEAD_OFFSET) as *const AtomicU64) }
    }

    fn tail(&self) -> &AtomicU64 {
        // SAFETY: as for head.
        unsafe { &*(self.header_ptr(TAIL_OFFSET) as *const AtomicU64) }
    }

    fn slot_ptr(&self, counter: u64) -> *mut u8 {
        let idx = (counter & (self.capacity - 1)) as usize;
        self.header_ptr(RING_HEADER_LEN + idx * SLOT_SIZE)
    }
}

/// Initialize a ring header in `backing` at byte offset `base` and return
/// the connected ends. Used once per ring by whichever side creates the
/// region.
pub fn init_ring(
    backing: Arc<dyn Backing>,
    base: usize,
    capacity: u32,
) -> Result<(RingProducer, RingConsumer), RingError> {
    if capacity == 0 || !capacity.is_power_of_two() {
        return Err(RingError::BadCapacity(capacity));
    }
    let needed = ring_region_len(capacity);
    if backing.len() < base + needed {
        return Err(RingError::RegionTooSmall {
            capacity,
            needed,
            got: backing.len().saturating_sub(base),
        });
    }
    // SAFETY: region bounds checked above; no other handle exists yet.
    unsafe {
        let p = backing.ptr().add(base);
        std::ptr::write_bytes(p, 0, RING_HEADER_LEN);
        std::ptr::copy_nonoverlapping(RING_MAGIC.as_ptr(), p, 4);
        *p.add(4) = RING_VERSION;
        let slot = (SLOT_SIZE as u32).to_le_bytes();
        std::ptr::copy_nonoverlapping(slot.as_ptr(), p.add(8), 4);
        let cap = capacity.to_le_bytes();
        std::ptr::copy_nonoverlapping(cap.as_ptr(), p.add(12), 4);
    }
    let shared = RingShared {
        backing,
        base,
        capacity: capacity as u64,
    };
    Ok((
        RingProducer {
            shared: shared.clone(),
        },
        RingConsumer { shared },
    ))
}

/// Attach to a ring header initialized by another process (or earlier in
/// this one), validating magic, version, and slot size.
pub fn attach_ring(
    backing: Arc<dyn Backing>,
    base: usize,
) -> Result<(RingProducer, RingConsumer), RingError> {
    if backing.len() < base + RING_HEADER_LEN {
        return Err(RingError::RegionTooSmall {
            capacity: 0,
            needed: RING_HEADER_LEN,
            got: backing.len().saturating_sub(base),
        });
    }
    let mut header = [0u8; RING_HEADER_LEN];
    // SAFETY: bounds checked above.
    unsafe {
        std::ptr::copy_nonoverlapping(backing.ptr().add(base), header.as_mut_ptr(), RING_HEADER_LEN)
    };
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != RING_MAGIC {
        return Err(RingError::BadMagic(magic));
    }
    if header[4] != RING_VERSION {
        return Err(RingError::UnsupportedVersion(header[4]));
    }
    let slot_size = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if slot_size as usize != SLOT_SIZE {
        return Err(RingError::BadSlotSize(slot_size));
    }
    let capacity = u32::from_le_bytes(header[12..16].try_into().unwrap());
    if capacity == 0 || !capacity.is_power_of_two() {
        return Err(RingError::BadCapacity(capacity));
    }
    let needed = ring_region_len(capacity);
    if backing.len() < base + needed {
        return Err(RingError::RegionTooSmall {
            capacity,
            needed,
            got: backing.len().saturating_sub(base),
        });
    }
    let shared = RingShared {
        backing,
        base,
        capacity: capacity as u64,
    };
    Ok((
        RingProducer {
            shared: shared.clone(),
        },
        RingConsumer { shared },
    ))
}

/// In-process SPSC ring: heap-backed, ends ready to hand to two threads.
pub fn heap_ring(capacity: u32) -> Result<(RingProducer, RingConsumer), RingError> {
    if capacity == 0 || !capacity.is_power_of_two() {
        return Err(RingError::BadCapacity(capacity));
    }
    let backing = Arc::new(HeapBacking::new(ring_region_len(capacity)));
    init_ring(backing, 0, capacity)
}

/// The writing end. Exactly one execution context may hold it.
pub struct RingProducer {
    shared: RingShared,
}

impl RingProducer {
    /// Copy `frame` into the next slot and publish it. On a full ring the
    /// ring is unchanged and `Full` is returned — backpressure, not failure.
    pub fn push(&mut self, frame: &[u8]) -> Result<(), PushError> {
        if frame.len() > SLOT_SIZE {
            return Err(PushError::Oversize(frame.len()));
        }
        // Only this context writes head, so a relaxed self-read suffices;
        // tail needs acquire to observe the consumer's slot releases.
        let head = self.shared.head().load(Ordering::Relaxed);
        let tail = self.shared.tail().load(Ordering::Acquire);
        if head - tail == self.shared.capacity {
            return Err(PushError::Full);
        }
        // SAFETY: the slot at `head` is outside [tail, head), so the
        // consumer is not reading it; bounds guaranteed by capacity checks.
        unsafe {
            std::ptr::copy_nonoverlapping(frame.as_ptr(), self.shared.slot_ptr(head), frame.len());
        }
        self.shared.head().store(head + 1, Ordering::Release);
        Ok(())
    }

    pub fn capacity(&self) -> u32 {
        self.shared.capacity as u32
    }

    pub fn head(&self) -> u64 {
        self.shared.head().load(Ordering::Relaxed)
    }

    pub fn tail(&self) -> u64 {
        self.shared.tail().load(Ordering::Acquire)
    }

    /// Published but unconsumed slots.
    pub fn in_flight(&self) -> u64 {
        self.head() - self.tail()
    }
}

/// The reading end. Exactly one execution context may hold it.
pub struct RingConsumer {
    shared: RingShared,
}

impl RingConsumer {
    /// Pop the oldest published frame, or `None` when the ring is empty.
    /// The returned bytes are exactly the frame as pushed (the slot's
    /// embedded `payload_len` recovers the frame length).
    pub fn pop(&mut self) -> Option<Vec<u8>> {
        let tail = self.shared.tail().load(Ordering::Relaxed);
        let head = self.shared.head().load(Ordering::Acquire);
        if head == tail {
            return None;
        }
        let slot = self.shared.slot_ptr(tail);
        // SAFETY: the acquire load of head orders this read after the
        // producer's slot write; the slot stays ours until tail advances.
        let frame = unsafe {
            let mut len_bytes = [0u8; 4];
            std::ptr::copy_nonoverlapping(slot.add(8), len_bytes.as_mut_ptr(), 4);
            let payload_len = u32::from_le_bytes(len_bytes) as usize;
            let frame_len = (16 + payload_len).min(SLOT_SIZE);
            let mut frame = vec![0u8; frame_len];
            std::ptr::copy_nonoverlapping(slot, frame.as_mut_ptr(), frame_len);
            frame
        };
        self.shared.tail().store(tail + 1, Ordering::Release);
        Some(frame)
    }

    pub fn capacity(&self) -> u32 {
        self.shared.capacity as u32
    }

    pub fn head(&self) -> u64 {
        self.shared.head().load(Ordering::Acquire)
    }

    pub fn tail(&self) -> u64 {
        self.shared.tail().load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.head() == self.tail()
    }
}
