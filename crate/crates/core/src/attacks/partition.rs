use std::sync::Mutex;

/// Data the attacker may not train on. Every read is recorded with its
/// purpose so tests can assert when, and why, the partition was touched.
#[derive(Debug)]
pub struct Hidden<T> {
    data: T,
    log: Mutex<Vec<String>>,
}

impl<T> Hidden<T> {
    pub fn new(data: T) -> Self {
        Self {
            data,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn reveal(&self, purpose: &str) -> &T {
        self.log.lock().expect("access log poisoned").push(purpose.to_string());
        &self.data
    }

    pub fn access_log(&self) -> Vec<String> {
        self.log.lock().expect("access log poisoned").clone()
    }
}
