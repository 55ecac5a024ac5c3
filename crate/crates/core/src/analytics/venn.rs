use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Exclusive-region decomposition of three sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Venn3 {
    pub a_only: usize,
    pub b_only: usize,
    pub c_only: usize,
    pub ab: usize,
    pub ac: usize,
    pub bc: usize,
    pub abc: usize,
    pub union: usize,
    /// |a|, |b|, |c|
    pub totals: [usize; 3],
}

impl Venn3 {
    /// Region counts indexed by membership mask (bit 0 = a, 1 = b, 2 = c).
    pub fn from_masks(regions: [usize; 8]) -> Self {
        let v = Venn3 {
            a_only: regions[0b001],
            b_only: regions[0b010],
            c_only: regions[0b100],
            ab: regions[0b011],
            ac: regions[0b101],
            bc: regions[0b110],
            abc: regions[0b111],
            union: regions[1..].iter().sum(),
            totals: [
                regions[0b001] + regions[0b011] + regions[0b101] + regions[0b111],
                regions[0b010] + regions[0b011] + regions[0b110] + regions[0b111],
                regions[0b100] + regions[0b101] + regions[0b110] + regions[0b111],
            ],
        };
        debug_assert!(v.is_consistent());
        v
    }

    /// (region name, count) in a fixed order.
    pub fn regions(&self) -> [(&'static str, usize); 7] {
        [
            ("a_only", self.a_only),
            ("b_only", self.b_only),
            ("c_only", self.c_only),
            ("ab", self.ab),
            ("ac", self.ac),
            ("bc", self.bc),
            ("abc", self.abc),
        ]
    }

    pub fn is_consistent(&self) -> bool {
        let sum: usize = self.regions().iter().map(|(_, n)| n).sum();
        sum == self.union
            && self.totals[0] == self.a_only + self.ab + self.ac + self.abc
            && self.totals[1] == self.b_only + self.ab + self.bc + self.abc
            && self.totals[2] == self.c_only + self.ac + self.bc + self.abc
    }
}

pub fn venn3<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>, c: &BTreeSet<T>) -> Venn3 {
    let mut regions = [0usize; 8];
    for x in a {
        let mask = 0b001 | (b.contains(x) as usize) << 1 | (c.contains(x) as usize) << 2;
        regions[mask] += 1;
    }
    for x in b.iter().filter(|x| !a.contains(x)) {
        regions[0b010 | (c.contains(x) as usize) << 2] += 1;
    }
    regions[0b100] += c.iter().filter(|x| !a.contains(x) && !b.contains(x)).count();
    Venn3::from_masks(regions)
}
