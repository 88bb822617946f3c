//! Hexagonal patches of the triangular lattice.
//!
//! Sites are addressed by axial coordinates `(q, r)`. A patch of shell radius
//! `R` holds every site with `|q|, |r|, |q + r| <= R`, which gives the
//! centered hexagonal numbers 1, 7, 19, 37, ...
//!
//! Sites are numbered row-major: rows in increasing `r`, and within a row in
//! increasing `q`. Site numbers are 1-based throughout the public API, so the
//! 7-site patch has rows of 2, 3, 2 sites and its center is site 4.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// The six nearest-neighbor displacements in axial coordinates.
pub const AXIAL_NEIGHBORS: [(i64, i64); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteCoord {
    pub q: i64,
    pub r: i64,
}

impl SiteCoord {
    pub fn new(q: i64, r: i64) -> Self {
        Self { q, r }
    }

    /// Hexagonal (axial) distance to `other`.
    pub fn distance(&self, other: &SiteCoord) -> i64 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    }

    pub fn is_neighbor(&self, other: &SiteCoord) -> bool {
        self.distance(other) == 1
    }
}

/// A nearest-neighbor bond between sites `i < j` (1-based) with its exchange coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub coupling: f64,
}

/// Impurity placement: couplings of every bond touching `site` become `(1 + alpha) J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impurity {
    pub site: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    shell_radius: usize,
    coupling: f64,
    sites: Vec<SiteCoord>,
    bonds: Vec<Bond>,
    center: usize,
    impurity: Option<Impurity>,
}

/// Number of sites in a patch of the given shell radius, `1 + 3R(R+1)`.
pub fn patch_size(shell_radius: usize) -> usize {
    1 + 3 * shell_radius * (shell_radius + 1)
}

impl Lattice {
    /// Builds the hexagonal patch of `shell_radius` shells around a center site.
    pub fn build_patch(shell_radius: usize, coupling: f64, impurity: Option<Impurity>) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(Error::InvalidParameter(format!("coupling J must be positive, got {coupling}")));
        }
        let radius = shell_radius as i64;
        let mut sites = Vec::with_capacity(patch_size(shell_radius));
        for r in -radius..=radius {
            for q in -radius..=radius {
                if (q + r).abs() <= radius {
                    sites.push(SiteCoord::new(q, r));
                }
            }
        }
        let center = sites.iter().position(|s| s.q == 0 && s.r == 0).expect("patch contains origin") + 1;
        Self::from_sites(shell_radius, coupling, sites, center, impurity)
    }

    /// Builds a lattice from an arbitrary list of sites; nearest neighbors are
    /// detected from the axial coordinates. Used for random sub-lattices in
    /// oracle tests.
    pub fn from_sites(
        shell_radius: usize,
        coupling: f64,
        sites: Vec<SiteCoord>,
        center: usize,
        impurity: Option<Impurity>,
    ) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::InvalidParameter("lattice needs at least one site".into()));
        }
        if center == 0 || center > n {
            return Err(Error::SiteOutOfRange { site: center, n_sites: n });
        }
        if let Some(imp) = impurity {
            if imp.site == 0 || imp.site > n {
                return Err(Error::SiteOutOfRange { site: imp.site, n_sites: n });
            }
            if !imp.alpha.is_finite() {
                return Err(Error::InvalidParameter(format!("impurity strength {}", imp.alpha)));
            }
        }
        let mut bonds = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if sites[a] == sites[b] {
                    return Err(Error::InvalidParameter(format!("duplicate site {:?}", sites[a])));
                }
                if sites[a].is_neighbor(&sites[b]) {
                    bonds.push(Bond { i: a + 1, j: b + 1, coupling });
                }
            }
        }
        let mut lattice = Self { shell_radius, coupling, sites, bonds, center, impurity: None };
        lattice.set_impurity(impurity)?;
        Ok(lattice)
    }

    /// Replaces the impurity and recomputes every bond coupling.
    pub fn set_impurity(&mut self, impurity: Option<Impurity>) -> Result<()> {
        if let Some(imp) = impurity {
            if imp.site == 0 || imp.site > self.n_sites() {
                return Err(Error::SiteOutOfRange { site: imp.site, n_sites: self.n_sites() });
            }
        }
        self.impurity = impurity;
        let j = self.coupling;
        for bond in &mut self.bonds {
            bond.coupling = match impurity {
                Some(imp) if bond.i == imp.site || bond.j == imp.site => (1.0 + imp.alpha) * j,
                _ => j,
            };
        }
        Ok(())
    }

    pub fn with_impurity(&self, impurity: Option<Impurity>) -> Result<Self> {
        let mut out = self.clone();
        out.set_impurity(impurity)?;
        Ok(out)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn shell_radius(&self) -> usize {
        self.shell_radius
    }

    /// Base exchange coupling `J`.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn sites(&self) -> &[SiteCoord] {
        &self.sites
    }

    /// Coordinates of 1-based site `site`.
    pub fn coord(&self, site: usize) -> Option<SiteCoord> {
        site.checked_sub(1).and_then(|k| self.sites.get(k)).copied()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn impurity(&self) -> Option<Impurity> {
        self.impurity
    }

    pub fn nearest_pairs(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(|b| (b.i, b.j)).collect()
    }

    pub fn degree(&self, site: usize) -> usize {
        self.bonds.iter().filter(|b| b.i == site || b.j == site).count()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.bonds.iter().any(|bond| bond.i == i && bond.j == j)
    }

    /// Coupling of the bond between `a` and `b`, if they are nearest neighbors.
    pub fn bond_coupling(&self, a: usize, b: usize) -> Option<f64> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.bonds.iter().find(|bond| bond.i == i && bond.j == j).map(|b| b.coupling)
    }

    /// One line per site (`site,q,r`) followed by one line per bond (`i,j,coupling`).
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (k, s) in self.sites.iter().enumerate() {
            let _ = writeln!(out, "# site {},{},{}", k + 1, s.q, s.r);
        }
        for b in &self.bonds {
            let _ = writeln!(out, "{},{},{}", b.i, b.j, b.coupling);
        }
        out
    }
}
