//! Memory-mapped transport: two SPSC rings in one file so component and
//! agent can live in separate processes.
//!
//! File layout: ring A (component → agent: telemetry, REGISTER, ACKs of
//! config updates) followed immediately by ring B (agent → component:
//! config updates, the registration ACK). Each ring uses the header layout
//! documented in [`crate::channel::ring`]. Both rings share one capacity.

use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::ring::{
    attach_ring, init_ring, ring_region_len, Backing, RingConsumer, RingError, RingProducer,
};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("mmap failed: {0}")]
    Map(std::io::Error),
    #[error("transport file is {got} bytes, expected at least {needed}")]
    FileTooSmall { needed: usize, got: usize },
}

/// Component-side endpoints: produce on ring A, consume ring B.
pub struct ComponentChannel {
    pub tx: RingProducer,
    pub rx: RingConsumer,
}

/// Agent-side endpoints: consume ring A, produce on ring B.
pub struct AgentChannel {
    pub rx: RingConsumer,
    pub tx: RingProducer,
}

/// Heap-backed channel pair for same-process use (tests, examples, local
/// episodes). Ring A and ring B each get their own region.
pub fn in_process_channel(capacity: u32) -> Result<(ComponentChannel, AgentChannel), RingError> {
    let region = Arc::new(super::ring::HeapBacking::new(2 * ring_region_len(capacity)));
    let (a_tx, a_rx) = init_ring(region.clone(), 0, capacity)?;
    let (b_tx, b_rx) = init_ring(region, ring_region_len(capacity), capacity)?;
    Ok((
        ComponentChannel { tx: a_tx, rx: b_rx },
        AgentChannel { rx: a_rx, tx: b_tx },
    ))
}

#[cfg(unix)]
struct MmapBacking {
    ptr: *mut u8,
    len: usize,
}

// SAFETY: the mapping is MAP_SHARED over a regular file, valid and
// page-aligned (hence 8-aligned) until munmap in Drop.
#[cfg(unix)]
unsafe impl Backing for MmapBacking {
    fn ptr(&self) -> *mut u8 {
        self.ptr
    }
    fn len(&self) -> usize {
        self.len
    }
}

#[cfg(unix)]
unsafe impl Send for MmapBacking {}
#[cfg(unix)]
unsafe impl Sync for MmapBacking {}

#[cfg(unix)]
impl Drop for MmapBacking {
    fn drop(&mut self) {
        // SAFETY: ptr/len came from a successful mmap.
        unsafe {
            libc::munmap(self.ptr as *mut libc::c_void, self.len);
        }
    }
}

#[cfg(unix)]
fn map_file(file: &std::fs::File, len: usize) -> Result<MmapBacking, TransportError> {
    use std::os::unix::io::AsRawFd;
    // SAFETY: standard shared file mapping; failure is reported as MAP_FAILED.
    let ptr = unsafe {
        libc::mmap(
            std::ptr::null_mut(),
            len,
            libc::PROT_READ | libc::PROT_WRITE,
            libc::MAP_SHARED,
            file.as_raw_fd(),
            0,
        )
    };
    if ptr == libc::MAP_FAILED {
        return Err(TransportError::Map(std::io::Error::last_os_error()));
    }
    Ok(MmapBacking {
        ptr: ptr as *mut u8,
        len,
    })
}

/// A mapped two-ring transport file. Create on one side, open on the
/// other, then split into exactly one side's endpoints.
#[cfg(unix)]
pub struct Transport {
    backing: Arc<MmapBacking>,
    capacity: u32,
}

#[cfg(unix)]
impl Transport {
    /// Create (or truncate) the transport file and initialize both ring
    /// headers. The creator then takes one side; the peer calls [`open`].
    ///
    /// [`open`]: Transport::open
    pub fn create(path: &Path, capacity: u32) -> Result<Transport, TransportError> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(RingError::BadCapacity(capacity).into());
        }
        let len = 2 * ring_region_len(capacity);
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        file.set_len(len as u64)?;
        let backing = Arc::new(map_file(&file, len)?);
        // Initialize headers, dropping the temporary handles: endpoints are
        // handed out by into_component/into_agent.
        let _ = init_ring(backing.clone(), 0, capacity)?;
        let _ = init_ring(backing.clone(), ring_region_len(capacity), capacity)?;
        Ok(Transport { backing, capacity })
    }

    /// Map an existing transport file created by the peer.
    pub fn open(path: &Path) -> Result<Transport, TransportError> {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let file_len = file.metadata()?.len() as usize;
        if file_len < ring_region_len(1) {
            return Err(TransportError::FileTooSmall {
                needed: ring_region_len(1),
                got: file_len,
            });
        }
        let backing = Arc::new(map_file(&file, file_len)?);
        // Capacity comes from ring A's header; attach validates it.
        let (probe_tx, _) = attach_ring(backing.clone(), 0)?;
        let capacity = probe_tx.capacity();
        let needed = 2 * ring_region_len(capacity);
        if file_len < needed {
            return Err(TransportError::FileTooSmall {
                needed,
                got: file_len,
            });
        }
        Ok(Transport { backing, capacity })
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Take the component side (producer of ring A, consumer of ring B).
    pub fn into_component(self) -> Result<ComponentChannel, TransportError> {
        let (tx, _) = attach_ring(self.backing.clone(), 0)?;
        let (_, rx) = attach_ring(self.backing, ring_region_len(self.capacity))?;
        Ok(ComponentChannel { tx, rx })
    }

    /// Take the agent side (consumer of ring A, producer of ring B).
    pub fn into_agent(self) -> Result<AgentChannel, TransportError> {
        let (_, rx) = attach_ring(self.backing.clone(), 0)?;
        let (tx, _) = attach_ring(self.backing, ring_region_len(self.capacity))?;
        Ok(AgentChannel { rx, tx })
    }
}
