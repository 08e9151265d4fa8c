//! Multi-particle lattice geometry.
//!
//! An `n`-particle configuration is a point of `Z^{nd}`; the distance in use
//! is the sup (max) norm over all `nd` coordinates. Cubes are products of
//! per-particle boxes `C_{L_i}(u_i)`, enumerated row-major so that matrix
//! indices, boundary scans, and band structure all share one ordering.
//!
//! Besides plain geometry this module carries the two combinatorial gadgets
//! the induction over scales leans on: separability of cube pairs (one
//! cluster of particles projects away from everything else) and the
//! interactive/partially-interactive split of a cube (whether some group of
//! particles is further than the interaction range from the rest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coord = i64;

/// An `n`-particle configuration in `Z^d`, stored particle-major: the
/// coordinate block `[i*d, (i+1)*d)` is particle `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Config {
    n: usize,
    d: usize,
    coords: Vec<Coord>,
}

impl Config {
    pub fn new(n: usize, d: usize, coords: Vec<Coord>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Parameter(format!(
                "configuration needs n >= 1 and d >= 1, got n = {n}, d = {d}"
            )));
        }
        if coords.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates for n = {n}, d = {d}, got {}",
                n * d,
                coords.len()
            )));
        }
        Ok(Self { n, d, coords })
    }

    /// One-particle configuration from a single lattice point.
    pub fn single(point: Vec<Coord>) -> Result<Self> {
        let d = point.len();
        Self::new(1, d, point)
    }

    pub fn from_particles(particles: &[&[Coord]]) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::Parameter("no particles given".into()));
        }
        let d = particles[0].len();
        let mut coords = Vec::with_capacity(n * d);
        for p in particles {
            if p.len() != d {
                return Err(Error::DimensionMismatch(
                    "particles with mixed dimensions".into(),
                ));
            }
            coords.extend_from_slice(p);
        }
        Self::new(n, d, coords)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn particle(&self, i: usize) -> &[Coord] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Max-norm of the configuration as a point of `Z^{nd}`.
    pub fn sup_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Largest pairwise particle distance, `max_{i,j} |x_i - x_j|`.
    pub fn diameter(&self) -> i64 {
        let mut diam = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                diam = diam.max(block_sup_distance(self.particle(i), self.particle(j)));
            }
        }
        diam
    }

    /// Configuration obtained by keeping the listed particles, in order.
    pub fn restrict(&self, particles: &[usize]) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Parameter("empty particle group".into()));
        }
        let mut coords = Vec::with_capacity(particles.len() * self.d);
        for &i in particles {
            if i >= self.n {
                return Err(Error::Region(format!(
                    "particle index {i} out of range for n = {}",
                    self.n
                )));
            }
            coords.extend_from_slice(self.particle(i));
        }
        Self::new(particles.len(), self.d, coords)
    }
}

fn block_sup_distance(a: &[Coord], b: &[Coord]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or(0)
}

/// Sup-norm distance between two configurations of identical shape.
pub fn sup_distance(a: &Config, b: &Config) -> Result<i64> {
    if a.n != b.n || a.d != b.d {
        return Err(Error::DimensionMismatch(format!(
            "configurations of shape ({}, {}) and ({}, {})",
            a.n, a.d, b.n, b.d
        )));
    }
    Ok(block_sup_distance(&a.coords, &b.coords))
}

/// Axis-aligned box in `Z^d` with inclusive bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    lo: Vec<Coord>,
    hi: Vec<Coord>,
}

impl BoundingBox {
    pub fn new(lo: Vec<Coord>, hi: Vec<Coord>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch(
                "box bounds of unequal or zero dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Parameter(format!("empty box: lo {lo:?}, hi {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// Box `[c - r, c + r]^d` around a single-particle block.
    pub fn around(center: &[Coord], radius: i64) -> Result<Self> {
        if radius < 0 {
            return Err(Error::Parameter(format!("negative radius {radius}")));
        }
        Ok(Self {
            lo: center.iter().map(|c| c - radius).collect(),
            hi: center.iter().map(|c| c + radius).collect(),
        })
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[Coord] {
        &self.lo
    }

    pub fn hi(&self) -> &[Coord] {
        &self.hi
    }

    pub fn contains_point(&self, p: &[Coord]) -> bool {
        p.len() == self.d() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.d() == self.d()
            && self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.sup_gap(other) == 0
    }

    /// Sup-metric distance between the two boxes (0 when they intersect).
    pub fn sup_gap(&self, other: &BoundingBox) -> i64 {
        let mut gap = 0;
        for a in 0..self.d() {
            let g = (self.lo[a] - other.hi[a]).max(other.lo[a] - self.hi[a]).max(0);
            gap = gap.max(g);
        }
        gap
    }

    /// Smallest box containing all the given boxes.
    pub fn hull(boxes: &[BoundingBox]) -> Result<Self> {
        let first = boxes
            .first()
            .ok_or_else(|| Error::Parameter("hull of no boxes".into()))?;
        let mut lo = first.lo.clone();
        let mut hi = first.hi.clone();
        for b in &boxes[1..] {
            if b.d() != lo.len() {
                return Err(Error::DimensionMismatch("hull of mixed dimensions".into()));
            }
            for a in 0..lo.len() {
                lo[a] = lo[a].min(b.lo[a]);
                hi[a] = hi[a].max(b.hi[a]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn expand(&self, r: i64) -> Result<Self> {
        Self::new(
            self.lo.iter().map(|c| c - r).collect(),
            self.hi.iter().map(|c| c + r).collect(),
        )
    }

    pub fn site_count(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .product()
    }

    /// Row-major index of a point, if inside.
    pub fn index_of(&self, p: &[Coord]) -> Option<usize> {
        if !self.contains_point(p) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.d() {
            let extent = (self.hi[a] - self.lo[a] + 1) as usize;
            idx = idx * extent + (p[a] - self.lo[a]) as usize;
        }
        Some(idx)
    }

    /// Visits every point in row-major order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[Coord])) {
        let d = self.d();
        let mut p = self.lo.clone();
        let total = self.site_count();
        for idx in 0..total {
            f(idx, &p);
            for a in (0..d).rev() {
                if p[a] < self.hi[a] {
                    p[a] += 1;
                    break;
                }
                p[a] = self.lo[a];
            }
        }
    }
}

/// Product cube `C_{L_1}(u_1) x ... x C_{L_n}(u_n)` in `Z^{nd}`.
///
/// Sites are enumerated row-major over the `nd` axes (particle-major, last
/// coordinate fastest); all matrix representations share this ordering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiParticleCube {
    center: Config,
    radii: Vec<i64>,
}

impl MultiParticleCube {
    pub fn new(center: Config, radii: Vec<i64>) -> Result<Self> {
        if radii.len() != center.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} radii for {} particles",
                radii.len(),
                center.n()
            )));
        }
        if radii.iter().any(|&l| l < 0) {
            return Err(Error::Parameter(format!("negative cube radius in {radii:?}")));
        }
        Ok(Self { center, radii })
    }

    /// Cube with the same radius `l` for every particle.
    pub fn equal_radius(center: Config, l: i64) -> Result<Self> {
        let n = center.n();
        Self::new(center, vec![l; n])
    }

    pub fn center(&self) -> &Config {
        &self.center
    }

    pub fn radii(&self) -> &[i64] {
        &self.radii
    }

    /// The common radius, if all particles share one.
    pub fn uniform_radius(&self) -> Option<i64> {
        let l = self.radii[0];
        self.radii.iter().all(|&r| r == l).then_some(l)
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    pub fn d(&self) -> usize {
        self.center.d()
    }

    fn axes(&self) -> usize {
        self.center.n() * self.center.d()
    }

    fn axis_radius(&self, axis: usize) -> i64 {
        self.radii[axis / self.center.d()]
    }

    fn axis_center(&self, axis: usize) -> Coord {
        self.center.coords()[axis]
    }

    pub fn extent(&self, axis: usize) -> usize {
        (2 * self.axis_radius(axis) + 1) as usize
    }

    /// Row-major stride of an axis; axis 0 has the largest stride, which is
    /// also the half-bandwidth of any hopping matrix on this cube.
    pub fn stride(&self, axis: usize) -> usize {
        (axis + 1..self.axes()).map(|a| self.extent(a)).product()
    }

    pub fn site_count(&self) -> usize {
        (0..self.axes()).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, x: &Config) -> bool {
        if x.n() != self.n() || x.d() != self.d() {
            return false;
        }
        (0..self.axes()).all(|a| (x.coords()[a] - self.axis_center(a)).abs() <= self.axis_radius(a))
    }

    /// Whether `C_r(v)` (equal radius `r`) is contained in this cube.
    pub fn contains_cube(&self, v: &Config, r: i64) -> bool {
        if v.n() != self.n() || v.d() != self.d() || r < 0 {
            return false;
        }
        (0..self.axes())
            .all(|a| (v.coords()[a] - self.axis_center(a)).abs() <= self.axis_radius(a) - r)
    }

    pub fn index_of(&self, x: &Config) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.axes() {
            let offset = (x.coords()[a] - (self.axis_center(a) - self.axis_radius(a))) as usize;
            idx = idx * self.extent(a) + offset;
        }
        Some(idx)
    }

    pub fn site_at(&self, index: usize) -> Result<Config> {
        if index >= self.site_count() {
            return Err(Error::Region(format!(
                "site index {index} outside cube of {} sites",
                self.site_count()
            )));
        }
        let mut rem = index;
        let axes = self.axes();
        let mut coords = vec![0; axes];
        for a in (0..axes).rev() {
            let extent = self.extent(a);
            let offset = rem % extent;
            rem /= extent;
            coords[a] = self.axis_center(a) - self.axis_radius(a) + offset as i64;
        }
        Config::new(self.n(), self.d(), coords)
    }

    /// Visits every site in row-major order without allocating per site.
    pub fn for_each_site(&self, mut f: impl FnMut(usize, &[Coord])) {
        let axes = self.axes();
        let lo: Vec<Coord> = (0..axes)
            .map(|a| self.axis_center(a) - self.axis_radius(a))
            .collect();
        let hi: Vec<Coord> = (0..axes)
            .map(|a| self.axis_center(a) + self.axis_radius(a))
            .collect();
        let mut p = lo.clone();
        let total = self.site_count();
        for idx in 0..total {
            f(idx, &p);
            for a in (0..axes).rev() {
                if p[a] < hi[a] {
                    p[a] += 1;
                    break;
                }
                p[a] = lo[a];
            }
        }
    }

    pub fn sites(&self) -> Vec<Config> {
        let mut out = Vec::with_capacity(self.site_count());
        let (n, d) = (self.n(), self.d());
        self.for_each_site(|_, p| {
            out.push(Config::new(n, d, p.to_vec()).expect("cube sites are well-formed"));
        });
        out
    }

    pub fn center_index(&self) -> usize {
        self.index_of(&self.center).expect("center lies in its own cube")
    }

    /// Per-particle projection box `C_{L_i}(u_i)` in `Z^d`.
    pub fn particle_box(&self, i: usize) -> BoundingBox {
        BoundingBox::around(self.center.particle(i), self.radii[i])
            .expect("cube radii are nonnegative")
    }

    /// Single-particle hull: smallest box of `Z^d` containing every
    /// particle's projection. Disorder sampled on this box covers the cube.
    pub fn support_box(&self) -> BoundingBox {
        let boxes: Vec<BoundingBox> = (0..self.n()).map(|i| self.particle_box(i)).collect();
        BoundingBox::hull(&boxes).expect("nonempty cube")
    }

    /// Indices of the internal boundary: sites with some coordinate on a
    /// face, equivalently sup-distance 1 from the complement.
    pub fn internal_boundary_indices(&self) -> Vec<usize> {
        let axes = self.axes();
        let mut out = Vec::new();
        self.for_each_site(|idx, p| {
            for a in 0..axes {
                if (p[a] - self.axis_center(a)).abs() == self.axis_radius(a) {
                    out.push(idx);
                    break;
                }
            }
        });
        out
    }

    /// Internal and external sup-metric boundaries as site lists.
    ///
    /// The external boundary is exactly the enlarged cube (all radii + 1)
    /// minus the cube itself: corners count, matching the sup metric.
    pub fn boundaries(&self) -> (Vec<Config>, Vec<Config>) {
        let internal: Vec<Config> = {
            let idx = self.internal_boundary_indices();
            idx.iter()
                .map(|&i| self.site_at(i).expect("boundary index is in range"))
                .collect()
        };
        let enlarged = MultiParticleCube::new(
            self.center.clone(),
            self.radii.iter().map(|l| l + 1).collect(),
        )
        .expect("enlarged radii stay nonnegative");
        let mut external = Vec::new();
        let (n, d) = (self.n(), self.d());
        enlarged.for_each_site(|_, p| {
            let inside = (0..self.axes())
                .all(|a| (p[a] - self.axis_center(a)).abs() <= self.axis_radius(a));
            if !inside {
                external.push(Config::new(n, d, p.to_vec()).expect("well-formed site"));
            }
        });
        (internal, external)
    }

    /// Cube around the same center with every radius scaled to `r`.
    pub fn with_uniform_radius(&self, r: i64) -> Result<Self> {
        Self::equal_radius(self.center.clone(), r)
    }
}

/// Nonempty subsets of `{0, .., n-1}` as sorted vectors in lexicographic
/// order: `[0] < [0,1] < [0,1,2] < [0,2] < [1] < ...`.
pub fn subsets_lex(n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for i in start..n {
            cur.push(i);
            out.push(cur.clone());
            rec(i + 1, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Witness that one side of a cube pair separates: the projection cubes of
/// the `group` particles (on the `from_first` side) are disjoint from every
/// other projection cube of either configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationWitness {
    pub from_first: bool,
    pub group: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparabilityVerdict {
    pub separable: bool,
    pub distance_ok: bool,
    pub witness: Option<SeparationWitness>,
}

/// One-sided separability: the first nonempty particle group `J` (in
/// lexicographic subset order) whose radius-`l` projection cubes around
/// `base` are disjoint from the remaining `base` projections and from every
/// projection of `other`. `None` means no group of `base` separates, at any
/// distance — this is the one-sided notion the pair verdict combines with
/// the distance cut.
pub fn separating_group(base: &Config, other: &Config, l: i64) -> Option<Vec<usize>> {
    let n = base.n();
    let base_boxes: Vec<BoundingBox> = (0..n)
        .map(|i| BoundingBox::around(base.particle(i), l).expect("l >= 0"))
        .collect();
    let other_boxes: Vec<BoundingBox> = (0..other.n())
        .map(|i| BoundingBox::around(other.particle(i), l).expect("l >= 0"))
        .collect();
    'subset: for j in subsets_lex(n) {
        let mut member = vec![false; n];
        for &i in &j {
            member[i] = true;
        }
        for &i in &j {
            for k in 0..n {
                if !member[k] && base_boxes[i].intersects(&base_boxes[k]) {
                    continue 'subset;
                }
            }
            for ob in &other_boxes {
                if base_boxes[i].intersects(ob) {
                    continue 'subset;
                }
            }
        }
        return Some(j);
    }
    None
}

/// Decides separability of the cube pair `(C_l(x), C_l(y))`: the centers
/// must be farther than `7 N l` apart and one side must carry a separating
/// group of particles. Both sides are searched, first configuration first.
pub fn is_separable(x: &Config, y: &Config, l: i64, big_n: usize) -> Result<SeparabilityVerdict> {
    if x.n() != y.n() || x.d() != y.d() {
        return Err(Error::DimensionMismatch(
            "separability of configurations with different shapes".into(),
        ));
    }
    if l < 0 || big_n == 0 {
        return Err(Error::Parameter(format!(
            "separability needs l >= 0 and N >= 1, got l = {l}, N = {big_n}"
        )));
    }
    let distance_ok = sup_distance(x, y)? > 7 * big_n as i64 * l;
    if !distance_ok {
        return Ok(SeparabilityVerdict {
            separable: false,
            distance_ok,
            witness: None,
        });
    }
    let witness = separating_group(x, y, l)
        .map(|group| SeparationWitness {
            from_first: true,
            group,
        })
        .or_else(|| {
            separating_group(y, x, l).map(|group| SeparationWitness {
                from_first: false,
                group,
            })
        });
    Ok(SeparabilityVerdict {
        separable: witness.is_some(),
        distance_ok,
        witness,
    })
}

/// Centers `x^(sigma) = (x_{sigma(1)}, .., x_{sigma(n)})` over all maps
/// `sigma` of `{1..n}` into itself, in lexicographic order of `sigma`.
/// Radius-`2nl` cubes around these centers absorb every configuration that
/// fails to separate from `x` beyond the `7Nl` distance cut.
pub fn separability_collection(x: &Config, l: i64) -> Result<Vec<Config>> {
    if l <= 1 {
        return Err(Error::Parameter(format!(
            "separability collection needs l > 1, got {l}"
        )));
    }
    let n = x.n();
    let count = n.pow(n as u32);
    let mut out = Vec::with_capacity(count);
    let mut sigma = vec![0usize; n];
    for _ in 0..count {
        let particles: Vec<&[Coord]> = sigma.iter().map(|&s| x.particle(s)).collect();
        out.push(Config::from_particles(&particles)?);
        for slot in (0..n).rev() {
            sigma[slot] += 1;
            if sigma[slot] < n {
                break;
            }
            sigma[slot] = 0;
        }
    }
    Ok(out)
}

/// Radius of the absorbing cubes paired with [`separability_collection`].
pub fn collection_radius(n: usize, l: i64) -> i64 {
    2 * n as i64 * l
}

/// Whether `y` lies in the union of the collection's cubes around `x`.
pub fn in_collection_union(x: &Config, y: &Config, l: i64) -> Result<bool> {
    for c in separability_collection(x, l)? {
        if sup_distance(&c, y)? <= collection_radius(x.n(), l) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// A split of the particle set with inter-group projection gap beyond the
/// interaction range: the Hamiltonian on such a cube is a sum of two
/// non-interacting blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiSplit {
    /// Group containing particle 0, sorted.
    pub left: Vec<usize>,
    /// Complementary group, sorted.
    pub right: Vec<usize>,
    /// Sup-metric gap between the two groups' projection cubes.
    pub gap: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interactivity {
    FullyInteractive,
    PartiallyInteractive(PiSplit),
}

/// Classifies an equal-radius cube as fully or partially interactive for an
/// interaction of range `r0`: partially interactive iff some group of
/// particles keeps projection distance `> r0` from the rest. The canonical
/// split maximizes the gap; ties go to the lexicographically smallest group
/// containing particle 0.
pub fn classify_interactivity(cube: &MultiParticleCube, r0: i64) -> Result<Interactivity> {
    let n = cube.n();
    if n < 2 {
        return Err(Error::Classification(
            "interactivity needs at least two particles".into(),
        ));
    }
    let l = cube.uniform_radius().ok_or_else(|| {
        Error::Parameter("interactivity classification needs an equal-radius cube".into())
    })?;
    if r0 < 0 {
        return Err(Error::Parameter(format!("negative interaction range {r0}")));
    }
    let boxes: Vec<BoundingBox> = (0..n).map(|i| cube.particle_box(i)).collect();
    let mut pair_gap = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let g = boxes[i].sup_gap(&boxes[j]);
            pair_gap[i][j] = g;
            pair_gap[j][i] = g;
        }
    }
    let _ = l;
    let mut best: Option<PiSplit> = None;
    for group in subsets_lex(n) {
        if !group.contains(&0) || group.len() == n {
            continue;
        }
        let mut member = vec![false; n];
        for &i in &group {
            member[i] = true;
        }
        let gap = (0..n)
            .filter(|i| member[*i])
            .flat_map(|i| (0..n).filter(|j| !member[*j]).map(move |j| (i, j)))
            .map(|(i, j)| pair_gap[i][j])
            .min()
            .expect("both groups nonempty");
        if gap > r0 && best.as_ref().map_or(true, |b| gap > b.gap) {
            let right: Vec<usize> = (0..n).filter(|i| !member[*i]).collect();
            best = Some(PiSplit {
                left: group.clone(),
                right,
                gap,
            });
        }
    }
    Ok(match best {
        Some(split) => Interactivity::PartiallyInteractive(split),
        None => Interactivity::FullyInteractive,
    })
}

/// Factor cubes of a split: projections of the cube onto the two groups.
pub fn split_cubes(
    cube: &MultiParticleCube,
    split: &PiSplit,
) -> Result<(MultiParticleCube, MultiParticleCube)> {
    let left_center = cube.center().restrict(&split.left)?;
    let right_center = cube.center().restrict(&split.right)?;
    let left_radii: Vec<i64> = split.left.iter().map(|&i| cube.radii()[i]).collect();
    let right_radii: Vec<i64> = split.right.iter().map(|&i| cube.radii()[i]).collect();
    Ok((
        MultiParticleCube::new(left_center, left_radii)?,
        MultiParticleCube::new(right_center, right_radii)?,
    ))
}

/// Index bookkeeping for a product cube split into two factors: every full
/// site index maps to its pair of factor indices, so tensor identities can
/// be checked entry by entry in the full enumeration.
#[derive(Clone, Debug)]
pub struct PiIndexMap {
    pub left_cube: MultiParticleCube,
    pub right_cube: MultiParticleCube,
    pub left_of: Vec<usize>,
    pub right_of: Vec<usize>,
}

impl PiIndexMap {
    pub fn new(cube: &MultiParticleCube, split: &PiSplit) -> Result<Self> {
        let (left_cube, right_cube) = split_cubes(cube, split)?;
        let total = cube.site_count();
        let mut left_of = vec![0usize; total];
        let mut right_of = vec![0usize; total];
        let d = cube.d();
        let mut scratch_left = vec![0 as Coord; split.left.len() * d];
        let mut scratch_right = vec![0 as Coord; split.right.len() * d];
        cube.for_each_site(|idx, p| {
            for (slot, &i) in split.left.iter().enumerate() {
                scratch_left[slot * d..(slot + 1) * d].copy_from_slice(&p[i * d..(i + 1) * d]);
            }
            for (slot, &i) in split.right.iter().enumerate() {
                scratch_right[slot * d..(slot + 1) * d].copy_from_slice(&p[i * d..(i + 1) * d]);
            }
            let lc = Config::new(split.left.len(), d, scratch_left.clone())
                .expect("well-formed factor site");
            let rc = Config::new(split.right.len(), d, scratch_right.clone())
                .expect("well-formed factor site");
            left_of[idx] = left_cube.index_of(&lc).expect("factor site in factor cube");
            right_of[idx] = right_cube.index_of(&rc).expect("factor site in factor cube");
        });
        Ok(Self {
            left_cube,
            right_cube,
            left_of,
            right_of,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, d: usize, coords: &[Coord]) -> Config {
        Config::new(n, d, coords.to_vec()).unwrap()
    }

    #[test]
    fn sup_distance_basic() {
        let a = cfg(2, 1, &[0, 5]);
        let b = cfg(2, 1, &[3, -1]);
        assert_eq!(sup_distance(&a, &b).unwrap(), 6);
        let c = cfg(1, 2, &[0, 0]);
        assert!(sup_distance(&a, &c).is_err());
    }

    #[test]
    fn diameter_matches_pairwise_max() {
        let x = cfg(3, 1, &[0, 4, -2]);
        assert_eq!(x.diameter(), 6);
        let y = cfg(2, 2, &[0, 0, 3, -4]);
        assert_eq!(y.diameter(), 4);
    }

    #[test]
    fn cube_cardinality_matches_formula() {
        // |C_L^{(n)}| = (2L+1)^{nd}
        for (n, d, l) in [(1usize, 1usize, 3i64), (2, 1, 2), (2, 2, 1), (3, 1, 1)] {
            let center = Config::new(n, d, vec![0; n * d]).unwrap();
            let cube = MultiParticleCube::equal_radius(center, l).unwrap();
            let expected = ((2 * l + 1) as usize).pow((n * d) as u32);
            assert_eq!(cube.site_count(), expected);
            assert_eq!(cube.sites().len(), expected);
        }
    }

    #[test]
    fn index_roundtrip_and_order() {
        let cube = MultiParticleCube::new(cfg(2, 1, &[0, 10]), vec![2, 1]).unwrap();
        let sites = cube.sites();
        assert_eq!(sites.len(), 15);
        // row-major: last axis fastest
        assert_eq!(sites[0], cfg(2, 1, &[-2, 9]));
        assert_eq!(sites[1], cfg(2, 1, &[-2, 10]));
        assert_eq!(sites[3], cfg(2, 1, &[-1, 9]));
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(cube.index_of(s), Some(i));
            assert_eq!(&cube.site_at(i).unwrap(), s);
        }
        assert_eq!(cube.stride(0), 3);
        assert_eq!(cube.stride(1), 1);
    }

    #[test]
    fn boundaries_one_dimensional_interval() {
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 2).unwrap();
        let (internal, external) = cube.boundaries();
        assert_eq!(internal, vec![cfg(1, 1, &[-2]), cfg(1, 1, &[2])]);
        assert_eq!(external, vec![cfg(1, 1, &[-3]), cfg(1, 1, &[3])]);
    }

    #[test]
    fn boundaries_two_particle_grid() {
        // 3x3 grid: 8 boundary sites, exterior ring of 5^2 - 3^2 = 16.
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 0]), 1).unwrap();
        let (internal, external) = cube.boundaries();
        assert_eq!(internal.len(), 8);
        assert_eq!(external.len(), 16);
        // corners belong to the external boundary in the sup metric
        assert!(external.contains(&cfg(2, 1, &[2, 2])));
    }

    #[test]
    fn radius_zero_cube_is_its_own_boundary() {
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[7]), 0).unwrap();
        assert_eq!(cube.site_count(), 1);
        let (internal, external) = cube.boundaries();
        assert_eq!(internal, vec![cfg(1, 1, &[7])]);
        assert_eq!(external.len(), 2);
    }

    proptest! {
        #[test]
        fn boundary_partition_property(
            n in 1usize..3, d in 1usize..3, l in 0i64..4,
            seed in proptest::collection::vec(-5i64..5, 6)
        ) {
            let center = Config::new(n, d, seed[..n * d].to_vec()).unwrap();
            let cube = MultiParticleCube::equal_radius(center, l).unwrap();
            let (internal, external) = cube.boundaries();
            // internal boundary lies in the cube, external outside at distance 1
            for s in &internal {
                prop_assert!(cube.contains(s));
            }
            let site_set: std::collections::HashSet<_> = cube.sites().into_iter().collect();
            for s in &external {
                prop_assert!(!cube.contains(s));
                let dist = site_set
                    .iter()
                    .map(|t| sup_distance(s, t).unwrap())
                    .min()
                    .unwrap();
                prop_assert_eq!(dist, 1);
            }
            // every interior non-boundary site keeps distance > 1 from outside
            let internal_set: std::collections::HashSet<_> = internal.iter().cloned().collect();
            for s in &site_set {
                let min_axis_slack = (0..n * d)
                    .map(|a| l - (s.coords()[a] - cube.center().coords()[a]).abs())
                    .min()
                    .unwrap();
                prop_assert_eq!(internal_set.contains(s), min_axis_slack == 0);
            }
        }

        #[test]
        fn sup_distance_is_a_metric(
            a in proptest::collection::vec(-20i64..20, 4),
            b in proptest::collection::vec(-20i64..20, 4),
            c in proptest::collection::vec(-20i64..20, 4)
        ) {
            let (x, y, z) = (cfg(2, 2, &a), cfg(2, 2, &b), cfg(2, 2, &c));
            let (dxy, dyz, dxz) = (
                sup_distance(&x, &y).unwrap(),
                sup_distance(&y, &z).unwrap(),
                sup_distance(&x, &z).unwrap(),
            );
            prop_assert!(dxy >= 0);
            prop_assert_eq!(dxy, sup_distance(&y, &x).unwrap());
            prop_assert!(dxz <= dxy + dyz);
            prop_assert_eq!(dxy == 0, x == y);
        }
    }

    #[test]
    fn subsets_lex_order_and_count() {
        let subs = subsets_lex(3);
        assert_eq!(
            subs,
            vec![
                vec![0],
                vec![0, 1],
                vec![0, 1, 2],
                vec![0, 2],
                vec![1],
                vec![1, 2],
                vec![2]
            ]
        );
        assert_eq!(subsets_lex(4).len(), 15);
    }

    #[test]
    fn collection_counts_are_n_to_the_n() {
        let x1 = cfg(1, 1, &[5]);
        assert_eq!(separability_collection(&x1, 2).unwrap().len(), 1);
        let x2 = cfg(2, 1, &[0, 9]);
        let coll = separability_collection(&x2, 2).unwrap();
        assert_eq!(coll.len(), 4);
        // lexicographic in sigma: (x1,x1), (x1,x2), (x2,x1), (x2,x2)
        assert_eq!(coll[0], cfg(2, 1, &[0, 0]));
        assert_eq!(coll[1], cfg(2, 1, &[0, 9]));
        assert_eq!(coll[2], cfg(2, 1, &[9, 0]));
        assert_eq!(coll[3], cfg(2, 1, &[9, 9]));
        assert!(separability_collection(&x2, 1).is_err());
    }

    #[test]
    fn one_particle_separability_is_distance() {
        let x = cfg(1, 1, &[0]);
        let near = cfg(1, 1, &[14]);
        let far = cfg(1, 1, &[15]);
        // N = 2, l = 1: cut at 7 N l = 14
        let v_near = is_separable(&x, &near, 1, 2).unwrap();
        assert!(!v_near.separable && !v_near.distance_ok);
        let v_far = is_separable(&x, &far, 1, 2).unwrap();
        assert!(v_far.separable && v_far.distance_ok);
        assert_eq!(
            v_far.witness,
            Some(SeparationWitness {
                from_first: true,
                group: vec![0]
            })
        );
    }

    #[test]
    fn identical_configurations_never_separate() {
        let x = cfg(2, 1, &[0, 40]);
        let v = is_separable(&x, &x, 3, 2).unwrap();
        assert!(!v.separable && !v.distance_ok && v.witness.is_none());
    }

    /// Brute-force witness check: materialize the projection cubes as site
    /// sets and test the group condition directly.
    fn witness_oracle(base: &Config, other: &Config, l: i64) -> Option<Vec<usize>> {
        let n = base.n();
        let boxes = |c: &Config, i: usize| -> std::collections::HashSet<Vec<Coord>> {
            let b = BoundingBox::around(c.particle(i), l).unwrap();
            let mut set = std::collections::HashSet::new();
            b.for_each_point(|_, p| {
                set.insert(p.to_vec());
            });
            set
        };
        'group: for j in subsets_lex(n) {
            let mut inside: std::collections::HashSet<Vec<Coord>> = Default::default();
            for &i in &j {
                inside.extend(boxes(base, i));
            }
            for i in 0..n {
                if !j.contains(&i) && boxes(base, i).iter().any(|p| inside.contains(p)) {
                    continue 'group;
                }
            }
            for k in 0..other.n() {
                if boxes(other, k).iter().any(|p| inside.contains(p)) {
                    continue 'group;
                }
            }
            return Some(j);
        }
        None
    }

    proptest! {
        #[test]
        fn witness_search_matches_set_oracle(
            xs in proptest::collection::vec(-12i64..12, 2),
            ys in proptest::collection::vec(-12i64..12, 2),
            l in 0i64..4
        ) {
            let x = cfg(2, 1, &xs);
            let y = cfg(2, 1, &ys);
            let got = separating_group(&x, &y, l);
            let want = witness_oracle(&x, &y, l);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn interactivity_examples() {
        // d = 1, L = 10, r0 = 1: distant pair splits, touching pair does not.
        let pi = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 100]), 10).unwrap();
        match classify_interactivity(&pi, 1).unwrap() {
            Interactivity::PartiallyInteractive(split) => {
                assert_eq!(split.left, vec![0]);
                assert_eq!(split.right, vec![1]);
                assert_eq!(split.gap, 80);
            }
            Interactivity::FullyInteractive => panic!("expected PI"),
        }
        let fi = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 1]), 10).unwrap();
        assert_eq!(classify_interactivity(&fi, 1).unwrap(), Interactivity::FullyInteractive);
    }

    #[test]
    fn interactivity_threshold_is_sharp() {
        // gap = u2 - 2L; PI requires gap > r0.
        let (l, r0) = (5i64, 2i64);
        let boundary_fi =
            MultiParticleCube::equal_radius(cfg(2, 1, &[0, 2 * l + r0]), l).unwrap();
        assert_eq!(
            classify_interactivity(&boundary_fi, r0).unwrap(),
            Interactivity::FullyInteractive
        );
        // one step beyond the range: gap = r0 + 1 > r0
        let boundary_pi =
            MultiParticleCube::equal_radius(cfg(2, 1, &[0, 2 * l + r0 + 1]), l).unwrap();
        assert!(matches!(
            classify_interactivity(&boundary_pi, r0).unwrap(),
            Interactivity::PartiallyInteractive(_)
        ));
        let comfortably_pi =
            MultiParticleCube::equal_radius(cfg(2, 1, &[0, 2 * l + r0 + 2]), l).unwrap();
        assert!(matches!(
            classify_interactivity(&comfortably_pi, r0).unwrap(),
            Interactivity::PartiallyInteractive(_)
        ));
    }

    #[test]
    fn interactivity_rejects_single_particle_and_ragged_cubes() {
        let single = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 3).unwrap();
        assert!(matches!(
            classify_interactivity(&single, 1),
            Err(Error::Classification(_))
        ));
        let ragged = MultiParticleCube::new(cfg(2, 1, &[0, 50]), vec![2, 3]).unwrap();
        assert!(matches!(
            classify_interactivity(&ragged, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn canonical_split_prefers_largest_gap_then_lex() {
        // three particles at 0, 100, 205: best split isolates {2} from {0,1}?
        // gaps: {0}|{1,2}: min(100-2L, 205-2L) ; {0,1}|{2}: 105-2L ; {0,2}|{1}: min(100-2L,105-2L)
        let cube = MultiParticleCube::equal_radius(cfg(3, 1, &[0, 100, 205]), 10).unwrap();
        match classify_interactivity(&cube, 1).unwrap() {
            Interactivity::PartiallyInteractive(split) => {
                // {0,1} vs {2}: gap 85 beats {0} vs {1,2}: gap 80
                assert_eq!(split.left, vec![0, 1]);
                assert_eq!(split.right, vec![2]);
                assert_eq!(split.gap, 85);
            }
            _ => panic!("expected PI"),
        }
        // symmetric configuration, tie between {0} and {0,1}-style splits:
        // gaps {0}|{1,2} = {0,1}|{2} -> lex smaller group [0] wins.
        let tie = MultiParticleCube::equal_radius(cfg(3, 1, &[0, 100, 200]), 10).unwrap();
        match classify_interactivity(&tie, 1).unwrap() {
            Interactivity::PartiallyInteractive(split) => {
                assert_eq!(split.left, vec![0]);
                assert_eq!(split.gap, 80);
            }
            _ => panic!("expected PI"),
        }
    }

    #[test]
    fn pi_index_map_covers_product() {
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 30]), 2).unwrap();
        let split = match classify_interactivity(&cube, 1).unwrap() {
            Interactivity::PartiallyInteractive(s) => s,
            _ => panic!("expected PI"),
        };
        let map = PiIndexMap::new(&cube, &split).unwrap();
        assert_eq!(map.left_cube.site_count() * map.right_cube.site_count(), cube.site_count());
        // bijection between full indices and factor index pairs
        let mut seen = std::collections::HashSet::new();
        for i in 0..cube.site_count() {
            assert!(seen.insert((map.left_of[i], map.right_of[i])));
        }
    }

    #[test]
    fn support_box_covers_all_particles() {
        let cube = MultiParticleCube::new(cfg(2, 1, &[0, 10]), vec![2, 3]).unwrap();
        let sb = cube.support_box();
        assert_eq!(sb.lo(), &[-2]);
        assert_eq!(sb.hi(), &[13]);
        for i in 0..cube.n() {
            assert!(sb.contains_box(&cube.particle_box(i)));
        }
    }

    #[test]
    fn contains_cube_respects_margins() {
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 0]), 5).unwrap();
        assert!(cube.contains_cube(&cfg(2, 1, &[2, -2]), 3));
        assert!(!cube.contains_cube(&cfg(2, 1, &[3, 0]), 3));
        assert!(cube.contains_cube(&cfg(2, 1, &[0, 0]), 5));
    }
}
