use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Coalitions are stored as 64-bit masks.
pub const MAX_AGENTS: usize = 64;

/// A subset of the agents `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    mask: u64,
    n: u8,
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_AGENTS, "at most {MAX_AGENTS} agents");
        Self { mask: 0, n: n as u8 }
    }

    /// The grand coalition `N`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_AGENTS, "at most {MAX_AGENTS} agents");
        Self {
            mask: full_mask(n),
            n: n as u8,
        }
    }

    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        if n > MAX_AGENTS {
            return Err(Error::contract(format!("{n} agents exceeds {MAX_AGENTS}")));
        }
        if mask & !full_mask(n) != 0 {
            return Err(Error::contract(format!(
                "mask {mask:#x} has members outside 0..{n}"
            )));
        }
        Ok(Self { mask, n: n as u8 })
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut c = Self::empty(n);
        for &i in members {
            if i >= n {
                return Err(Error::contract(format!("agent {i} outside 0..{n}")));
            }
            c.mask |= 1 << i;
        }
        Ok(c)
    }

    pub fn mask(self) -> u64 {
        self.mask
    }

    pub fn n(self) -> usize {
        self.n as usize
    }

    pub fn size(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.mask == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < self.n() && self.mask & (1 << i) != 0
    }

    /// `C ∪ {i}`.
    pub fn with(self, i: usize) -> Self {
        debug_assert!(i < self.n());
        Self {
            mask: self.mask | (1 << i),
            n: self.n,
        }
    }

    /// `C \ {i}`.
    pub fn without(self, i: usize) -> Self {
        Self {
            mask: self.mask & !(1 << i),
            n: self.n,
        }
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.mask;
        (0..self.n()).filter(move |&i| mask & (1 << i) != 0)
    }

    /// `N \ C`.
    pub fn complement(self) -> Self {
        Self {
            mask: !self.mask & full_mask(self.n()),
            n: self.n,
        }
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// Keeps the actions of coalition members and replaces everyone else's with
/// their default action.
pub fn mask_action(
    joint_action: &[Vec<f64>],
    coalition: Coalition,
    defaults: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = joint_action.len();
    if coalition.n() != n {
        return Err(Error::contract(format!(
            "coalition over {} agents applied to {n} actions",
            coalition.n()
        )));
    }
    if defaults.len() != n {
        return Err(Error::dim("mask_action defaults", n, defaults.len()));
    }
    joint_action
        .iter()
        .zip(defaults)
        .enumerate()
        .map(|(i, (a, d))| {
            if a.len() != d.len() {
                return Err(Error::dim("mask_action action width", d.len(), a.len()));
            }
            Ok(if coalition.contains(i) { a.clone() } else { d.clone() })
        })
        .collect()
}
