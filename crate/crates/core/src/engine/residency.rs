/// Page residency bitmap. Bits only ever go from absent to resident.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residency {
    words: Vec<u64>,
    len: u64,
    count: u64,
}

impl Residency {
    pub fn new(num_pages: u64) -> Self {
        Residency { words: vec![0; num_pages.div_ceil(64) as usize], len: num_pages, count: 0 }
    }

    pub fn contains(&self, page: u64) -> bool {
        page < self.len && self.words[(page / 64) as usize] >> (page % 64) & 1 == 1
    }

    /// Marks `page` resident; returns whether it was absent.
    pub fn insert(&mut self, page: u64) -> bool {
        assert!(page < self.len, "page {page} out of range");
        let word = &mut self.words[(page / 64) as usize];
        let bit = 1u64 << (page % 64);
        let fresh = *word & bit == 0;
        *word |= bit;
        self.count += u64::from(fresh);
        fresh
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn num_pages(&self) -> u64 {
        self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as u64;
                w &= w - 1;
                Some(i as u64 * 64 + b)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_is_monotone() {
        let mut r = Residency::new(130);
        assert!(r.insert(129));
        assert!(r.insert(0));
        assert!(!r.insert(129));
        assert!(r.contains(0) && r.contains(129) && !r.contains(64) && !r.contains(500));
        assert_eq!(r.count(), 2);
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![0, 129]);
    }
}
