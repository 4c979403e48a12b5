//! Lattice sites of `Z^d` for `d <= MAX_DIM`.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 6;

/// A point of `Z^d`. Unused trailing coordinates are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn origin(dim: usize) -> Site {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Site {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    pub fn new(coords: &[i32]) -> Result<Site> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "site must have between 1 and {MAX_DIM} coordinates, got {}",
                coords.len()
            )));
        }
        let mut site = Site::origin(coords.len());
        site.coords[..coords.len()].copy_from_slice(coords);
        Ok(site)
    }

    /// Unit vector `+e_axis` (or `-e_axis` when `sign < 0`).
    pub fn unit(dim: usize, axis: usize, sign: i32) -> Site {
        assert!(axis < dim);
        let mut site = Site::origin(dim);
        site.coords[axis] = sign.signum();
        site
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    /// The l1 norm `|x|`.
    pub fn l1(&self) -> u32 {
        self.coords.iter().map(|c| c.unsigned_abs()).sum()
    }

    /// The sup norm.
    pub fn linf(&self) -> u32 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.coords()
            .iter()
            .zip(theta)
            .map(|(&c, &t)| f64::from(c) * t)
            .sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords().iter().map(|&c| f64::from(c)).collect()
    }
}

impl Add for Site {
    type Output = Site;
    #[inline]
    fn add(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Site {
    type Output = Site;
    #[inline]
    fn sub(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Neg for Site {
    type Output = Site;
    #[inline]
    fn neg(mut self) -> Site {
        for c in self.coords.iter_mut() {
            *c = -*c;
        }
        self
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<i32>::deserialize(deserializer)?;
        Site::new(&coords).map_err(serde::de::Error::custom)
    }
}

/// All sites of the box `[-radius, radius]^dim`, in lexicographic order.
pub fn box_sites(dim: usize, radius: i32) -> Vec<Site> {
    let side = (2 * radius + 1) as usize;
    let count = side.pow(dim as u32);
    let mut out = Vec::with_capacity(count);
    let mut coords = vec![-radius; dim];
    for _ in 0..count {
        out.push(Site::new(&coords).expect("dimension checked"));
        for c in coords.iter_mut().rev() {
            if *c < radius {
                *c += 1;
                break;
            }
            *c = -radius;
        }
    }
    out
}

/// All sites with `|x|_1 <= radius`.
pub fn l1_ball(dim: usize, radius: u32) -> Vec<Site> {
    box_sites(dim, radius as i32)
        .into_iter()
        .filter(|s| s.l1() <= radius)
        .collect()
}
