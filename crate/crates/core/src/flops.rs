//! Real floating-point operation counter.
//!
//! Convention: a complex multiply is 6 flops, a complex add is 2, a complex
//! multiply-add is 8, and a real-by-complex multiply is 2.

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Flops(pub u64);

impl Flops {
    pub fn new() -> Self {
        Flops(0)
    }

    #[inline]
    pub fn cma(&mut self, n: usize) {
        self.0 += 8 * n as u64;
    }

    #[inline]
    pub fn cmul(&mut self, n: usize) {
        self.0 += 6 * n as u64;
    }

    #[inline]
    pub fn cadd(&mut self, n: usize) {
        self.0 += 2 * n as u64;
    }

    #[inline]
    pub fn rcmul(&mut self, n: usize) {
        self.0 += 2 * n as u64;
    }

    #[inline]
    pub fn real(&mut self, n: usize) {
        self.0 += n as u64;
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}
