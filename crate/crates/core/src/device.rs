//! Declarative device description: resonators, couplers with end parities,
//! transmons, lattice repetition and optional reflection metadata.
//!
//! Element values are stored in file units (fF, nH, GHz) so that a
//! load → serialize → load cycle is exact; SI accessors convert on demand.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Plus,
    Minus,
}

impl Parity {
    /// Sign of harmonic `j` (1-based) at this end: 1 at +, (−1)^j at −.
    pub fn sign(self, j: usize) -> f64 {
        match self {
            Parity::Plus => 1.0,
            Parity::Minus => {
                if j % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn flipped(self) -> Parity {
        match self {
            Parity::Plus => Parity::Minus,
            Parity::Minus => Parity::Plus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Plus => "+",
            Parity::Minus => "-",
        }
    }

    fn parse(s: &str, path: &str) -> Result<Parity> {
        match s {
            "+" => Ok(Parity::Plus),
            "-" => Ok(Parity::Minus),
            _ => Err(Error::validation(path, format!("parity must be \"+\" or \"-\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

/// Where the (possibly inactive) transmon paddle loads a resonator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paddle {
    Plus,
    Minus,
    /// Half of the paddle capacitance at each end.
    Split,
    None,
}

impl Paddle {
    fn as_str(self) -> &'static str {
        match self {
            Paddle::Plus => "+",
            Paddle::Minus => "-",
            Paddle::Split => "split",
            Paddle::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub length_m: f64,
    pub l_per_m: f64,
    pub c_per_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorSpec {
    pub c0_ff: f64,
    pub l0_nh: f64,
    pub mode_cutoff: usize,
    pub geometry: Option<Geometry>,
    pub paddle: Paddle,
}

impl ResonatorSpec {
    pub fn new(c0_ff: f64, l0_nh: f64, mode_cutoff: usize) -> Self {
        ResonatorSpec { c0_ff, l0_nh, mode_cutoff, geometry: None, paddle: Paddle::Plus }
    }

    pub fn c0(&self) -> f64 {
        units::ff(self.c0_ff)
    }

    pub fn l0(&self) -> f64 {
        units::nh(self.l0_nh)
    }

    /// Bare fundamental 1/√(L_0 C_0).
    pub fn omega0(&self) -> f64 {
        1.0 / (self.l0() * self.c0()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct End {
    pub site: usize,
    pub parity: Parity,
}

impl End {
    pub fn new(site: usize, parity: Parity) -> Self {
        End { site, parity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplerSpec {
    pub a: End,
    pub b: End,
    pub cc_ff: f64,
    /// Cell distance from `a` to `b`; 0 for intra-cell couplers.
    pub cell_offset: usize,
}

impl CouplerSpec {
    pub fn intra(a: End, b: End, cc_ff: f64) -> Self {
        CouplerSpec { a, b, cc_ff, cell_offset: 0 }
    }

    pub fn inter(a: End, b: End, cc_ff: f64) -> Self {
        CouplerSpec { a, b, cc_ff, cell_offset: 1 }
    }

    pub fn cc(&self) -> f64 {
        units::ff(self.cc_ff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmonSpec {
    pub site: usize,
    pub end: Parity,
    pub cq_ff: f64,
    pub ej0_ghz: f64,
    pub flux: f64,
    pub cc_prime_ff: f64,
    /// Cell hosting the transmon; `None` places it in every cell.
    pub cell: Option<usize>,
    pub label: Option<String>,
}

impl TransmonSpec {
    pub fn cq(&self) -> f64 {
        units::ff(self.cq_ff)
    }

    pub fn cc_prime(&self) -> f64 {
        units::ff(self.cc_prime_ff)
    }

    pub fn ej0(&self) -> f64 {
        units::ghz(self.ej0_ghz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub permutation: Vec<usize>,
    /// `end_swap[s]`: the + end of `s` maps onto the − end of its image.
    pub end_swap: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub resonators: Vec<ResonatorSpec>,
    pub couplers: Vec<CouplerSpec>,
    pub transmons: Vec<TransmonSpec>,
    pub inter_cell_couplers: Vec<CouplerSpec>,
    pub n_cells: usize,
    pub boundary: Boundary,
    pub transmon_loading_everywhere: bool,
    pub paddle_cc_prime_ff: f64,
    pub reflection: Option<Reflection>,
}

/// Capacitive loading of one resonator by a transmon paddle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loading {
    pub paddle: Paddle,
    pub cc_prime: f64,
}

impl Loading {
    pub const NONE: Loading = Loading { paddle: Paddle::None, cc_prime: 0.0 };
}

/// Flat row index for (cell, site, harmonic): cell-major, then site, then
/// harmonic ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub n_cells: usize,
    pub cutoffs: Vec<usize>,
    pub site_offsets: Vec<usize>,
    pub cell_dim: usize,
}

impl IndexMap {
    pub fn new(cutoffs: &[usize], n_cells: usize) -> Self {
        let mut site_offsets = Vec::with_capacity(cutoffs.len());
        let mut acc = 0;
        for &m in cutoffs {
            site_offsets.push(acc);
            acc += m;
        }
        IndexMap { n_cells, cutoffs: cutoffs.to_vec(), site_offsets, cell_dim: acc }
    }

    pub fn n_sites(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn dim(&self) -> usize {
        self.cell_dim * self.n_cells
    }

    /// `j` is the 1-based harmonic number.
    pub fn row(&self, cell: usize, site: usize, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.cutoffs[site]);
        cell * self.cell_dim + self.site_offsets[site] + j - 1
    }

    pub fn triple(&self, row: usize) -> (usize, usize, usize) {
        let cell = row / self.cell_dim;
        let r = row % self.cell_dim;
        let site = match self.site_offsets.binary_search(&r) {
            Ok(mut s) => {
                // zero-width sites cannot occur (M >= 1), but be safe
                while s + 1 < self.site_offsets.len() && self.site_offsets[s + 1] == r {
                    s += 1;
                }
                s
            }
            Err(s) => s - 1,
        };
        (cell, site, r - self.site_offsets[site] + 1)
    }
}

impl DeviceSpec {
    pub fn n_sites(&self) -> usize {
        self.resonators.len()
    }

    pub fn cutoffs(&self) -> Vec<usize> {
        self.resonators.iter().map(|r| r.mode_cutoff).collect()
    }

    pub fn index_map(&self) -> IndexMap {
        IndexMap::new(&self.cutoffs(), self.n_cells)
    }

    pub fn unit_cell_map(&self) -> IndexMap {
        IndexMap::new(&self.cutoffs(), 1)
    }

    /// Active transmon hosted at (cell, site), if any.
    pub fn transmon_at(&self, cell: usize, site: usize) -> Option<(usize, &TransmonSpec)> {
        self.transmons
            .iter()
            .enumerate()
            .find(|(_, t)| t.site == site && t.cell.map_or(true, |c| c == cell))
    }

    pub fn loading(&self, cell: usize, site: usize) -> Loading {
        if let Some((_, t)) = self.transmon_at(cell, site) {
            let paddle = match t.end {
                Parity::Plus => Paddle::Plus,
                Parity::Minus => Paddle::Minus,
            };
            return Loading { paddle, cc_prime: t.cc_prime() };
        }
        if self.transmon_loading_everywhere {
            let paddle = self.resonators[site].paddle;
            if paddle == Paddle::None {
                return Loading::NONE;
            }
            return Loading { paddle, cc_prime: units::ff(self.paddle_cc_prime_ff) };
        }
        Loading::NONE
    }

    /// Loading of the unit cell, failing when cells differ (Bloch analysis
    /// needs identical cells).
    pub fn cell_loading(&self) -> Result<Vec<Loading>> {
        let base: Vec<Loading> = (0..self.n_sites()).map(|s| self.loading(0, s)).collect();
        for cell in 1..self.n_cells {
            for (s, l) in base.iter().enumerate() {
                if self.loading(cell, s) != *l {
                    return Err(Error::Topology(format!(
                        "cell {cell} site {s} carries different transmon loading than cell 0"
                    )));
                }
            }
        }
        Ok(base)
    }

    pub fn with_mode_cutoff(&self, m: usize) -> DeviceSpec {
        let mut d = self.clone();
        for r in &mut d.resonators {
            r.mode_cutoff = m;
            r.geometry = None;
        }
        d
    }

    /// Uniform element values on every resonator, coupler and paddle
    /// (active transmons keep their junction parameters).
    pub fn with_uniform_elements(&self, c0_ff: f64, cc_ff: f64, cc_prime_ff: f64) -> DeviceSpec {
        let mut d = self.clone();
        for r in &mut d.resonators {
            r.c0_ff = c0_ff;
            r.geometry = None;
        }
        for c in d.couplers.iter_mut().chain(d.inter_cell_couplers.iter_mut()) {
            c.cc_ff = cc_ff;
        }
        for t in &mut d.transmons {
            t.cc_prime_ff = cc_prime_ff;
        }
        d.paddle_cc_prime_ff = cc_prime_ff;
        d
    }

    /// Number of coupler ends attached to each site of the unit cell
    /// (inter-cell couplers count on both sides).
    pub fn site_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_sites()];
        for c in self.couplers.iter().chain(self.inter_cell_couplers.iter()) {
            deg[c.a.site] += 1;
            deg[c.b.site] += 1;
        }
        deg
    }

    /// Relabel the ends of `site` (gauge flip).
    fn flip_site(&mut self, site: usize) {
        for c in self.couplers.iter_mut().chain(self.inter_cell_couplers.iter_mut()) {
            if c.a.site == site {
                c.a.parity = c.a.parity.flipped();
            }
            if c.b.site == site {
                c.b.parity = c.b.parity.flipped();
            }
        }
        if let Some(r) = &mut self.reflection {
            let img = r.permutation[site];
            r.end_swap[site] = !r.end_swap[site];
            if img != site {
                r.end_swap[img] = !r.end_swap[img];
            } else {
                r.end_swap[site] = !r.end_swap[site];
            }
        }
        let p = &mut self.resonators[site].paddle;
        *p = match *p {
            Paddle::Minus => Paddle::Plus,
            Paddle::Plus => Paddle::Minus,
            other => other,
        };
        for t in &mut self.transmons {
            if t.site == site {
                t.end = t.end.flipped();
            }
        }
    }

    /// Bring every transmon and paddle onto the + end of its resonator.
    pub fn normalize_parity(&mut self) -> Result<()> {
        for site in 0..self.n_sites() {
            let hosts: Vec<Parity> =
                self.transmons.iter().filter(|t| t.site == site).map(|t| t.end).collect();
            if hosts.iter().any(|&p| p != hosts[0]) {
                return Err(Error::validation(
                    format!("unit_cell.transmons[site={site}]"),
                    "transmons on one resonator must share the same end",
                ));
            }
            let paddle = self.resonators[site].paddle;
            let flip = match hosts.first() {
                Some(p) => *p == Parity::Minus,
                None => paddle == Paddle::Minus,
            };
            if flip {
                self.flip_site(site);
            }
            if self.resonators[site].paddle == Paddle::Minus {
                self.resonators[site].paddle = Paddle::Plus;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::validation("n_cells", "must be a positive integer"));
        }
        if self.resonators.is_empty() {
            return Err(Error::validation("unit_cell.resonators", "at least one resonator required"));
        }
        for (i, r) in self.resonators.iter().enumerate() {
            let p = format!("unit_cell.resonators[{i}]");
            positive(r.c0_ff, &format!("{p}.c0_fF"))?;
            positive(r.l0_nh, &format!("{p}.l0_nH"))?;
            if r.mode_cutoff == 0 {
                return Err(Error::validation(format!("{p}.M"), "mode cutoff must be >= 1"));
            }
            if let Some(g) = r.geometry {
                let w = fundamental_frequency(g.length_m, g.l_per_m, g.c_per_m)
                    .map_err(|e| Error::validation(format!("{p}.geometry"), e.to_string()))?;
                let w_lumped = r.omega0();
                if ((w - w_lumped) / w_lumped).abs() > 1e-12 {
                    return Err(Error::validation(
                        format!("{p}.geometry"),
                        format!(
                            "geometry gives omega0 = {w:e} rad/s but 1/sqrt(L0 C0) = {w_lumped:e} rad/s"
                        ),
                    ));
                }
            }
        }
        let n = self.n_sites();
        for (list, name) in
            [(&self.couplers, "unit_cell.couplers"), (&self.inter_cell_couplers, "inter_cell_couplers")]
        {
            for (i, c) in list.iter().enumerate() {
                let p = format!("{name}[{i}]");
                for (e, tag) in [(c.a, "a"), (c.b, "b")] {
                    if e.site >= n {
                        return Err(Error::DanglingReference {
                            path: format!("{p}.{tag}"),
                            msg: format!("resonator {} does not exist ({} sites)", e.site, n),
                        });
                    }
                }
                positive(c.cc_ff, &format!("{p}.cc_fF"))?;
                if c.cell_offset == 0 && c.a.site == c.b.site {
                    return Err(Error::validation(p, "self-coupling of a resonator is forbidden"));
                }
            }
        }
        for (i, c) in self.couplers.iter().enumerate() {
            if c.cell_offset != 0 {
                return Err(Error::validation(format!("unit_cell.couplers[{i}]"), "intra-cell coupler with cell offset"));
            }
        }
        for (i, c) in self.inter_cell_couplers.iter().enumerate() {
            if c.cell_offset == 0 {
                return Err(Error::validation(format!("inter_cell_couplers[{i}].cell_offset"), "must be >= 1"));
            }
        }
        let mut labels = BTreeMap::new();
        for (i, t) in self.transmons.iter().enumerate() {
            let p = format!("unit_cell.transmons[{i}]");
            if t.site >= n {
                return Err(Error::DanglingReference {
                    path: format!("{p}.site"),
                    msg: format!("resonator {} does not exist ({} sites)", t.site, n),
                });
            }
            positive(t.cq_ff, &format!("{p}.cq_fF"))?;
            positive(t.ej0_ghz, &format!("{p}.ej0_GHz"))?;
            if !(t.cc_prime_ff >= 0.0) || !t.cc_prime_ff.is_finite() {
                return Err(Error::validation(format!("{p}.cc_prime_fF"), "must be >= 0"));
            }
            if !t.flux.is_finite() {
                return Err(Error::validation(format!("{p}.flux"), "must be finite"));
            }
            if let Some(c) = t.cell {
                if c >= self.n_cells {
                    return Err(Error::validation(format!("{p}.cell"), format!("cell {c} >= n_cells")));
                }
            }
            if let Some(l) = &t.label {
                if labels.insert(l.to_lowercase(), i).is_some() {
                    return Err(Error::validation(format!("{p}.label"), format!("duplicate label {l:?}")));
                }
            }
            if self.resonators[t.site].paddle != Paddle::Plus && self.resonators[t.site].paddle != Paddle::Minus {
                return Err(Error::validation(
                    format!("{p}.site"),
                    "resonator hosting a transmon must have a single-ended paddle",
                ));
            }
        }
        for (i, a) in self.transmons.iter().enumerate() {
            for b in &self.transmons[i + 1..] {
                let overlap = a.site == b.site
                    && (a.cell.is_none() || b.cell.is_none() || a.cell == b.cell);
                if overlap {
                    return Err(Error::validation(
                        format!("unit_cell.transmons[{i}]"),
                        "two transmons on the same resonator",
                    ));
                }
            }
        }
        if !(self.paddle_cc_prime_ff >= 0.0) || !self.paddle_cc_prime_ff.is_finite() {
            return Err(Error::validation("paddle_cc_prime_fF", "must be >= 0"));
        }
        if let Some(r) = &self.reflection {
            self.validate_reflection(r)?;
        }
        Ok(())
    }

    fn validate_reflection(&self, r: &Reflection) -> Result<()> {
        let n = self.n_sites();
        if r.permutation.len() != n {
            return Err(Error::validation(
                "reflection_permutation",
                format!("length {} != number of sites {n}", r.permutation.len()),
            ));
        }
        if r.end_swap.len() != n {
            return Err(Error::validation("reflection_end_swap", format!("length must be {n}")));
        }
        for (s, &t) in r.permutation.iter().enumerate() {
            if t >= n || r.permutation[t] != s {
                return Err(Error::validation(
                    format!("reflection_permutation[{s}]"),
                    "permutation must be an involution of unit-cell sites",
                ));
            }
            if r.end_swap[t] != r.end_swap[s] {
                return Err(Error::validation(
                    format!("reflection_end_swap[{s}]"),
                    "end swap must agree between a site and its image",
                ));
            }
            let (a, b) = (&self.resonators[s], &self.resonators[t]);
            if a.c0_ff != b.c0_ff || a.l0_nh != b.l0_nh || a.mode_cutoff != b.mode_cutoff {
                return Err(Error::validation(
                    format!("reflection_permutation[{s}]"),
                    "mapped resonators have different parameters",
                ));
            }
        }
        if !self.reflection_maps_couplers() {
            return Err(Error::validation(
                "reflection_permutation",
                "reflection does not map couplers onto couplers with identical C_c",
            ));
        }
        for cell in 0..self.n_cells {
            for s in 0..n {
                let (la, lb) = (self.loading(cell, s), self.loading(cell, r.permutation[s]));
                let mapped = match (la.paddle, r.end_swap[s]) {
                    (Paddle::Plus, true) => Paddle::Minus,
                    (p, _) => p,
                };
                let same = if la.cc_prime == 0.0 || la.paddle == Paddle::None {
                    lb.cc_prime == 0.0 || lb.paddle == Paddle::None
                } else {
                    mapped == lb.paddle && la.cc_prime == lb.cc_prime
                };
                if !same {
                    return Err(Error::validation(
                        format!("reflection_permutation[{s}]"),
                        format!("paddle loading in cell {cell} is not mapped onto itself"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Image of a coupler end under the reflection.
    pub fn reflect_end(&self, e: End) -> Option<End> {
        let r = self.reflection.as_ref()?;
        let parity = if r.end_swap[e.site] { e.parity.flipped() } else { e.parity };
        Some(End { site: r.permutation[e.site], parity })
    }

    /// True iff the permuted coupler multiset equals the original one
    /// (false without reflection metadata).
    pub fn reflection_maps_couplers(&self) -> bool {
        let Some(r) = &self.reflection else { return false };
        if r.permutation.len() != self.n_sites()
            || r.end_swap.len() != self.n_sites()
            || r.permutation.iter().any(|&t| t >= self.n_sites())
        {
            return false;
        }
        let key = |c: &CouplerSpec, ordered: bool| {
            let (a, b) = if ordered || c.a <= c.b { (c.a, c.b) } else { (c.b, c.a) };
            (a, b, c.cc_ff.to_bits(), c.cell_offset)
        };
        let map = |c: &CouplerSpec| CouplerSpec {
            a: self.reflect_end(c.a).unwrap(),
            b: self.reflect_end(c.b).unwrap(),
            cc_ff: c.cc_ff,
            cell_offset: c.cell_offset,
        };
        for (list, ordered) in [(&self.couplers, false), (&self.inter_cell_couplers, true)] {
            let mut orig: Vec<_> = list.iter().map(|c| key(c, ordered)).collect();
            let mut img: Vec<_> = list.iter().map(|c| key(&map(c), ordered)).collect();
            orig.sort();
            img.sort();
            if orig != img {
                return false;
            }
        }
        true
    }

    /// Transmon index for a case-insensitive label (`q1`, ...) or a plain
    /// index. Unlabelled transmons answer to `q<index+1>`.
    pub fn transmon_by_name(&self, name: &str) -> Option<usize> {
        let lower = name.to_lowercase();
        for (i, t) in self.transmons.iter().enumerate() {
            let label = t.label.clone().unwrap_or_else(|| format!("q{}", i + 1));
            if label.to_lowercase() == lower {
                return Some(i);
            }
        }
        lower.parse::<usize>().ok().filter(|&i| i < self.transmons.len())
    }

    pub fn transmon_name(&self, i: usize) -> String {
        self.transmons[i].label.clone().unwrap_or_else(|| format!("q{}", i + 1))
    }

    pub fn to_json(&self) -> Value {
        let resonators: Vec<Value> = self
            .resonators
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut o = Map::new();
                o.insert("id".into(), json!(i));
                o.insert("c0_fF".into(), json!(r.c0_ff));
                o.insert("l0_nH".into(), json!(r.l0_nh));
                o.insert("M".into(), json!(r.mode_cutoff));
                if let Some(g) = r.geometry {
                    o.insert(
                        "geometry".into(),
                        json!({"length_m": g.length_m, "l_per_m": g.l_per_m, "c_per_m": g.c_per_m}),
                    );
                }
                if r.paddle != Paddle::Plus {
                    o.insert("paddle".into(), json!(r.paddle.as_str()));
                }
                Value::Object(o)
            })
            .collect();
        let coupler = |c: &CouplerSpec, inter: bool| {
            let mut o = Map::new();
            o.insert("a".into(), json!([c.a.site, c.a.parity.as_str()]));
            o.insert("b".into(), json!([c.b.site, c.b.parity.as_str()]));
            o.insert("cc_fF".into(), json!(c.cc_ff));
            if inter && c.cell_offset != 1 {
                o.insert("cell_offset".into(), json!(c.cell_offset));
            }
            Value::Object(o)
        };
        let transmons: Vec<Value> = self
            .transmons
            .iter()
            .map(|t| {
                let mut o = Map::new();
                o.insert("site".into(), json!(t.site));
                o.insert("end".into(), json!(t.end.as_str()));
                o.insert("cq_fF".into(), json!(t.cq_ff));
                o.insert("ej0_GHz".into(), json!(t.ej0_ghz));
                o.insert("flux".into(), json!(t.flux));
                o.insert("cc_prime_fF".into(), json!(t.cc_prime_ff));
                if let Some(c) = t.cell {
                    o.insert("cell".into(), json!(c));
                }
                if let Some(l) = &t.label {
                    o.insert("label".into(), json!(l));
                }
                Value::Object(o)
            })
            .collect();
        let mut top = Map::new();
        top.insert(
            "unit_cell".into(),
            json!({
                "resonators": resonators,
                "couplers": self.couplers.iter().map(|c| coupler(c, false)).collect::<Vec<_>>(),
                "transmons": transmons,
            }),
        );
        top.insert(
            "inter_cell_couplers".into(),
            Value::Array(self.inter_cell_couplers.iter().map(|c| coupler(c, true)).collect()),
        );
        top.insert("n_cells".into(), json!(self.n_cells));
        top.insert(
            "boundary".into(),
            json!(match self.boundary {
                Boundary::Open => "open",
                Boundary::Periodic => "periodic",
            }),
        );
        top.insert("transmon_loading_everywhere".into(), json!(self.transmon_loading_everywhere));
        top.insert("paddle_cc_prime_fF".into(), json!(self.paddle_cc_prime_ff));
        if let Some(r) = &self.reflection {
            top.insert("reflection_permutation".into(), json!(r.permutation));
            top.insert("reflection_end_swap".into(), json!(r.end_swap));
        }
        Value::Object(top)
    }
}

fn positive(x: f64, path: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must be positive and finite, got {x}")))
    }
}

/// ω_0 = π / (L √(l c)).
pub fn fundamental_frequency(length: f64, l_per_m: f64, c_per_m: f64) -> Result<f64> {
    for (v, n) in [(length, "length"), (l_per_m, "l"), (c_per_m, "c")] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{n} must be positive, got {v}")));
        }
    }
    Ok(PI / (length * (l_per_m * c_per_m).sqrt()))
}

/// Parse options for device files.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Unknown keys produce warnings instead of errors.
    pub lenient: bool,
}

pub fn load_device(path: impl AsRef<Path>) -> Result<DeviceSpec> {
    load_device_with(path, LoadOptions::default())
}

pub fn load_device_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<DeviceSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_device(&text, opts).map(|(d, _)| d)
}

/// Parse a device from JSON text; also returns warnings about ignored keys
/// in lenient mode.
pub fn parse_device(text: &str, opts: LoadOptions) -> Result<(DeviceSpec, Vec<String>)> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut warnings = Vec::new();
    let mut device = {
        let mut rd = Reader { lenient: opts.lenient, warnings: &mut warnings };
        rd.device(&root)?
    };
    device.validate()?;
    device.normalize_parity()?;
    device.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((device, warnings))
}

struct Reader<'w> {
    lenient: bool,
    warnings: &'w mut Vec<String>,
}

/// A JSON object whose keys are checked off as they are read.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: String,
    seen: Vec<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &str) -> Result<Self> {
        match v {
            Value::Object(map) => Ok(Obj { map, path: path.to_string(), seen: Vec::new() }),
            _ => Err(Error::validation(path, "expected an object")),
        }
    }

    fn sub(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.map.get(key)
    }

    fn req(&mut self, key: &'static str) -> Result<&'a Value> {
        let p = self.sub(key);
        self.get(key).ok_or_else(|| Error::validation(p, "missing required field"))
    }

    fn f64(&mut self, key: &'static str) -> Result<f64> {
        let p = self.sub(key);
        self.req(key)?.as_f64().ok_or_else(|| Error::validation(p, "expected a number"))
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let p = self.sub(key);
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| Error::validation(p, "expected a number")),
        }
    }

    fn usize(&mut self, key: &'static str) -> Result<usize> {
        let p = self.sub(key);
        as_usize(self.req(key)?, &p)
    }

    fn finish(self, rd: &mut Reader) -> Result<()> {
        for k in self.map.keys() {
            if !self.seen.contains(&k.as_str()) {
                let p = self.sub(k);
                if rd.lenient {
                    rd.warnings.push(format!("ignoring unknown key `{p}`"));
                } else {
                    return Err(Error::validation(p, "unknown key"));
                }
            }
        }
        Ok(())
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::validation(path, "expected a non-negative integer"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::validation(path, "expected an array"))
}

impl Reader<'_> {
    fn device(&mut self, root: &Value) -> Result<DeviceSpec> {
        let mut top = Obj::new(root, "")?;
        let cell_v = top.req("unit_cell")?;
        let mut cell = Obj::new(cell_v, "unit_cell")?;

        let mut resonators = Vec::new();
        let rp = cell.sub("resonators");
        for (i, v) in as_array(cell.req("resonators")?, &rp)?.iter().enumerate() {
            resonators.push(self.resonator(v, &format!("{rp}[{i}]"), i)?);
        }
        let mut couplers = Vec::new();
        if let Some(v) = cell.get("couplers") {
            let cp = cell.sub("couplers");
            for (i, c) in as_array(v, &cp)?.iter().enumerate() {
                couplers.push(self.coupler(c, &format!("{cp}[{i}]"), false)?);
            }
        }
        let mut transmons = Vec::new();
        if let Some(v) = cell.get("transmons") {
            let tp = cell.sub("transmons");
            for (i, t) in as_array(v, &tp)?.iter().enumerate() {
                transmons.push(self.transmon(t, &format!("{tp}[{i}]"))?);
            }
        }
        cell.finish(self)?;

        let mut inter_cell_couplers = Vec::new();
        if let Some(v) = top.get("inter_cell_couplers") {
            for (i, c) in as_array(v, "inter_cell_couplers")?.iter().enumerate() {
                inter_cell_couplers.push(self.coupler(c, &format!("inter_cell_couplers[{i}]"), true)?);
            }
        }
        let n_cells = match top.get("n_cells") {
            None => 1,
            Some(v) => as_usize(v, "n_cells")?,
        };
        let boundary = match top.get("boundary") {
            None => Boundary::Open,
            Some(v) => match v.as_str() {
                Some("open") => Boundary::Open,
                Some("periodic") => Boundary::Periodic,
                _ => return Err(Error::validation("boundary", "expected \"open\" or \"periodic\"")),
            },
        };
        let transmon_loading_everywhere = match top.get("transmon_loading_everywhere") {
            None => false,
            Some(v) => v
                .as_bool()
                .ok_or_else(|| Error::validation("transmon_loading_everywhere", "expected a boolean"))?,
        };
        let paddle_cc_prime_ff = top.f64_or("paddle_cc_prime_fF", 0.0)?;
        let perm = top.get("reflection_permutation");
        let swap = top.get("reflection_end_swap");
        let reflection = match (perm, swap) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(Error::validation("reflection_end_swap", "requires reflection_permutation"))
            }
            (Some(p), s) => {
                let permutation = as_array(p, "reflection_permutation")?
                    .iter()
                    .enumerate()
                    .map(|(i, v)| as_usize(v, &format!("reflection_permutation[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let end_swap = match s {
                    None => vec![false; permutation.len()],
                    Some(s) => as_array(s, "reflection_end_swap")?
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            v.as_bool().ok_or_else(|| {
                                Error::validation(format!("reflection_end_swap[{i}]"), "expected a boolean")
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                };
                Some(Reflection { permutation, end_swap })
            }
        };
        top.finish(self)?;
        Ok(DeviceSpec {
            resonators,
            couplers,
            transmons,
            inter_cell_couplers,
            n_cells,
            boundary,
            transmon_loading_everywhere,
            paddle_cc_prime_ff,
            reflection,
        })
    }

    fn resonator(&mut self, v: &Value, path: &str, position: usize) -> Result<ResonatorSpec> {
        let mut o = Obj::new(v, path)?;
        let id = o.usize("id")?;
        if id != position {
            return Err(Error::validation(
                o.sub("id"),
                format!("resonator ids must be 0..n in order (expected {position}, got {id})"),
            ));
        }
        let c0_ff = o.f64("c0_fF")?;
        let l0_nh = o.f64("l0_nH")?;
        let mode_cutoff = o.usize("M")?;
        let geometry = match o.get("geometry") {
            None => None,
            Some(g) => {
                let mut go = Obj::new(g, &o.sub("geometry"))?;
                let geo = Geometry {
                    length_m: go.f64("length_m")?,
                    l_per_m: go.f64("l_per_m")?,
                    c_per_m: go.f64("c_per_m")?,
                };
                go.finish(self)?;
                Some(geo)
            }
        };
        let paddle = match o.get("paddle") {
            None => Paddle::Plus,
            Some(p) => match p.as_str() {
                Some("+") => Paddle::Plus,
                Some("-") => Paddle::Minus,
                Some("split") => Paddle::Split,
                Some("none") => Paddle::None,
                _ => {
                    return Err(Error::validation(o.sub("paddle"), "expected \"+\", \"-\", \"split\" or \"none\""))
                }
            },
        };
        o.finish(self)?;
        Ok(ResonatorSpec { c0_ff, l0_nh, mode_cutoff, geometry, paddle })
    }

    fn end(&mut self, v: &Value, path: &str) -> Result<End> {
        let arr = as_array(v, path)?;
        if arr.len() != 2 {
            return Err(Error::validation(path, "expected [site, parity]"));
        }
        let site = as_usize(&arr[0], &format!("{path}[0]"))?;
        let parity = Parity::parse(
            arr[1].as_str().ok_or_else(|| Error::validation(format!("{path}[1]"), "expected a string"))?,
            &format!("{path}[1]"),
        )?;
        Ok(End { site, parity })
    }

    fn coupler(&mut self, v: &Value, path: &str, inter: bool) -> Result<CouplerSpec> {
        let mut o = Obj::new(v, path)?;
        let a = self.end(o.req("a")?, &o.sub("a"))?;
        let b = self.end(o.req("b")?, &o.sub("b"))?;
        let cc_ff = o.f64("cc_fF")?;
        let cell_offset = if inter {
            match o.get("cell_offset") {
                None => 1,
                Some(v) => as_usize(v, &o.sub("cell_offset"))?,
            }
        } else {
            0
        };
        o.finish(self)?;
        Ok(CouplerSpec { a, b, cc_ff, cell_offset })
    }

    fn transmon(&mut self, v: &Value, path: &str) -> Result<TransmonSpec> {
        let mut o = Obj::new(v, path)?;
        let site = o.usize("site")?;
        let end = match o.get("end") {
            None => Parity::Plus,
            Some(e) => Parity::parse(
                e.as_str().ok_or_else(|| Error::validation(o.sub("end"), "expected a string"))?,
                &o.sub("end"),
            )?,
        };
        let cq_ff = o.f64("cq_fF")?;
        let ej0_ghz = o.f64("ej0_GHz")?;
        let flux = o.f64("flux")?;
        let cc_prime_ff = o.f64("cc_prime_fF")?;
        let cell = match o.get("cell") {
            None => None,
            Some(c) => Some(as_usize(c, &o.sub("cell"))?),
        };
        let label = match o.get("label") {
            None => None,
            Some(l) => Some(
                l.as_str().ok_or_else(|| Error::validation(o.sub("label"), "expected a string"))?.to_string(),
            ),
        };
        o.finish(self)?;
        Ok(TransmonSpec { site, end, cq_ff, ej0_ghz, flux, cc_prime_ff, cell, label })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fundamental_frequency_scaling() {
        assert!((fundamental_frequency(PI, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let a = fundamental_frequency(0.01, 4e-7, 1.6e-10).unwrap();
        let b = fundamental_frequency(0.02, 4e-7, 1.6e-10).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!(matches!(fundamental_frequency(0.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(fundamental_frequency(1.0, -1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn index_map_order() {
        let m = IndexMap::new(&[2, 3], 2);
        assert_eq!(m.dim(), 10);
        assert_eq!(m.row(0, 0, 1), 0);
        assert_eq!(m.row(0, 1, 1), 2);
        assert_eq!(m.row(1, 0, 2), 6);
        for r in 0..m.dim() {
            let (c, s, j) = m.triple(r);
            assert_eq!(m.row(c, s, j), r);
        }
    }
}
