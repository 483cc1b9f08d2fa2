//! Bounded blocking FIFO connecting a stream's ingest side to its function
//! handler.
//!
//! `push` blocks while the queue is full, which is the backpressure
//! mechanism: a stalled handler stops the ingest thread, the ingest thread
//! stops reading its socket, and the kernel's TCP window pushes back on the
//! producer. `close` marks the end of input; queued items are still
//! drained, and only then does `pop` report the end.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};

pub struct BoundedFifo<T> {
    inner: Mutex<FifoInner<T>>,
    not_full: Condvar,
    not_empty: Condvar,
}

struct FifoInner<T> {
    queue: VecDeque<T>,
    capacity: usize,
    closed: bool,
}

impl<T> BoundedFifo<T> {
    /// Capacity must be at least 1.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "fifo capacity must be at least 1");
        Self {
            inner: Mutex::new(FifoInner {
                queue: VecDeque::with_capacity(capacity.min(4096)),
                capacity,
                closed: false,
            }),
            not_full: Condvar::new(),
            not_empty: Condvar::new(),
        }
    }

    /// Appends an item, blocking while the queue is full. Returns the item
    /// back if the queue has been closed.
    pub fn push(&self, item: T) -> Result<(), T> {
        let mut inner = self.inner.lock().unwrap();
        while inner.queue.len() >= inner.capacity && !inner.closed {
            inner = self.not_full.wait(inner).unwrap();
        }
        if inner.closed {
            return Err(item);
        }
        inner.queue.push_back(item);
        drop(inner);
        self.not_empty.notify_one();
        Ok(())
    }

    /// Removes the oldest item, blocking while the queue is empty and open.
    /// Returns `None` once the queue is closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if let Some(item) = inner.queue.pop_front() {
                drop(inner);
                self.not_full.notify_one();
                return Some(item);
            }
            if inner.closed {
                return None;
            }
            inner = self.not_empty.wait(inner).unwrap();
        }
    }

    /// Marks the end of input and wakes all waiters. Idempotent. Items
    /// already queued remain poppable.
    pub fn close(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.closed = true;
        drop(inner);
        self.not_full.notify_all();
        self.not_empty.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().unwrap().closed
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owned consuming iterator over a shared FIFO; each `next` is a blocking
/// `pop`. This is the input iterator handed to stream functions.
pub struct FifoConsumer<T>(pub Arc<BoundedFifo<T>>);

impl<T> Iterator for FifoConsumer<T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        self.0.pop()
    }
}
