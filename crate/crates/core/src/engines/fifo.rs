use std::collections::VecDeque;

/// Queue that refuses pushes beyond its capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedFifo<T> {
    capacity: usize,
    entries: VecDeque<T>,
}

impl<T> BoundedFifo<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "fifo capacity must be positive");
        BoundedFifo {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    /// Hands the value back when full.
    pub fn push(&mut self, v: T) -> Result<(), T> {
        if self.is_full() {
            return Err(v);
        }
        self.entries.push_back(v);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        self.entries.pop_front()
    }

    pub fn front(&self) -> Option<&T> {
        self.entries.front()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn space(&self) -> usize {
        self.capacity - self.entries.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }
}
