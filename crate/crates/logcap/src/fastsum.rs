//! Mutual log-kernel potentials `u_j = sum_{l != j} y_l log(z_j - z_l)`.
//!
//! Two backends share one contract: a direct O(n^2) loop and an adaptive
//! quadtree treecode whose multipole expansions are truncated so that
//! `max_j |u_fast - u_direct| <= epsilon * (1 + ||y||_1)` (the documented
//! constant is 1: the expansion order is chosen for a truncation bound of
//! `epsilon / 2` per unit charge, leaving the rest for rounding).
//!
//! Complex evaluation accepts a source cluster for a target only when, in
//! addition to the usual opening criterion, every source in the cluster is
//! guaranteed to satisfy the principal-branch identity
//! `Log(z - z_l) = Log(z - c) + Log(1 - (z_l - c)/(z - c))`. This keeps the
//! hierarchical backend branch-exact against the direct sum, including the
//! imaginary parts; near-horizontal alignments, where no expansion can
//! reproduce the per-term branches, fall back to direct pairs. For purely
//! real point sets the condition is always met and costs nothing. The
//! real-part path ([`PotentialEngine::mutual_real`]) is branch-free, skips
//! the wedge tests entirely, and runs in about `O(n log n)` on any input.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default absolute accuracy target per unit l1 charge.
pub const DEFAULT_EPSILON: f64 = 0.5e-12;

/// Below this point count the hierarchical backend falls through to the
/// direct loop (bitwise identical results); tree overhead dominates there.
pub const DIRECT_CROSSOVER: usize = 512;

/// Opening criterion: a cluster of radius `rho` is admissible for a target at
/// distance `R` when `rho <= THETA * R`.
const THETA: f64 = 0.5;

const MAX_EXPANSION_ORDER: usize = 64;
const LEAF_CAP: usize = 48;
const MAX_DEPTH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummationBackend {
    Direct,
    Hierarchical,
}

impl SummationBackend {
    pub fn as_str(&self) -> &'static str {
        match self {
            SummationBackend::Direct => "direct",
            SummationBackend::Hierarchical => "fast",
        }
    }
}

/// Backend selection plus the accuracy target.
#[derive(Clone, Copy, Debug)]
pub struct SummationConfig {
    pub backend: SummationBackend,
    /// Absolute accuracy per unit l1 charge; the expansion order is derived
    /// from this.
    pub epsilon: f64,
}

impl SummationConfig {
    pub fn direct() -> Self {
        Self {
            backend: SummationBackend::Direct,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn hierarchical() -> Self {
        Self {
            backend: SummationBackend::Hierarchical,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Smallest expansion order whose worst-case truncation is at most
    /// `epsilon / 2` per unit charge.
    pub fn expansion_order(&self) -> Result<usize> {
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return Err(Error::ParameterDomain(format!(
                "summation accuracy must be positive, got {}",
                self.epsilon
            )));
        }
        for p in 4..=MAX_EXPANSION_ORDER {
            let tail = THETA.powi(p as i32 + 1) / ((p as f64 + 1.0) * (1.0 - THETA));
            if tail <= 0.5 * self.epsilon {
                return Ok(p);
            }
        }
        Err(Error::AccuracyUnachievable {
            requested: self.epsilon,
            max_order: MAX_EXPANSION_ORDER,
        })
    }
}

impl Default for SummationConfig {
    fn default() -> Self {
        Self::direct()
    }
}

/// Direct O(n^2) reference evaluation with the principal log branch.
pub fn log_potential_direct(z: &[Complex64], y: &[f64]) -> Result<Vec<Complex64>> {
    validate_input(z, y)?;
    check_distinct(z)?;
    Ok(direct_mutual(z, y))
}

/// Hierarchical evaluation meeting the epsilon contract; falls through to the
/// direct loop below [`DIRECT_CROSSOVER`] points.
pub fn log_potential_fast(
    z: &[Complex64],
    y: &[f64],
    cfg: &SummationConfig,
) -> Result<Vec<Complex64>> {
    let engine = PotentialEngine::new(
        z.to_vec(),
        SummationConfig {
            backend: SummationBackend::Hierarchical,
            epsilon: cfg.epsilon,
        },
    )?;
    engine.mutual(y)
}

fn validate_input(z: &[Complex64], y: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::ParameterDomain("need at least one point".into()));
    }
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: y.len(),
        });
    }
    if z.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) || y.iter().any(|v| !v.is_finite())
    {
        return Err(Error::ParameterDomain(
            "points and charges must be finite".into(),
        ));
    }
    Ok(())
}

fn check_distinct(z: &[Complex64]) -> Result<()> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_unstable_by(|&a, &b| (z[a].re, z[a].im).partial_cmp(&(z[b].re, z[b].im)).unwrap());
    for w in idx.windows(2) {
        if z[w[0]] == z[w[1]] {
            let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::CoincidentPoints { i, j });
        }
    }
    Ok(())
}

fn direct_mutual(z: &[Complex64], y: &[f64]) -> Vec<Complex64> {
    let n = z.len();
    let body = |j: usize| {
        let zj = z[j];
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..n {
            if l != j {
                acc += y[l] * (zj - z[l]).ln();
            }
        }
        acc
    };
    if n >= 2048 {
        (0..n).into_par_iter().map(body).collect()
    } else {
        (0..n).map(body).collect()
    }
}

fn direct_mutual_real(z: &[Complex64], y: &[f64]) -> Vec<f64> {
    let n = z.len();
    let body = |j: usize| {
        let zj = z[j];
        let mut acc = 0.0;
        for l in 0..n {
            if l != j {
                acc += y[l] * 0.5 * (zj - z[l]).norm_sqr().ln();
            }
        }
        acc
    };
    if n >= 2048 {
        (0..n).into_par_iter().map(body).collect()
    } else {
        (0..n).map(body).collect()
    }
}

fn direct_at(z: &[Complex64], y: &[f64], targets: &[Complex64]) -> Vec<Complex64> {
    let body = |x: &Complex64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, zl) in z.iter().enumerate() {
            acc += y[l] * (x - zl).ln();
        }
        acc
    };
    if targets.len() >= 2048 {
        targets.par_iter().map(body).collect()
    } else {
        targets.iter().map(body).collect()
    }
}

const NO_CHILD: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Admissibility {
    No,
    /// Multipole usable, log term translated into the leaf-local polynomial.
    FarLocalLog,
    /// Multipole usable, log term evaluated per target.
    FarDirectLog,
}

struct Node {
    center: Complex64,
    /// Max distance from `center` to a contained point.
    radius: f64,
    /// Power-of-two scale close to `radius`; moments are stored for the
    /// scaled offsets `(z_l - center) / scale`.
    scale: f64,
    /// Max |Re(z_l - center)| and |Im(z_l - center)| over contained points,
    /// for the branch-safety test.
    re_extent: f64,
    im_extent: f64,
    start: u32,
    end: u32,
    children: [u32; 4],
    leaf: bool,
}

struct Tree {
    nodes: Vec<Node>,
    /// Points permuted so that each node owns a contiguous slot range.
    pts: Vec<Complex64>,
    /// Permuted slot of each original index.
    slot_of: Vec<u32>,
    /// Original index of each slot (inverse of `slot_of`).
    orig: Vec<u32>,
    /// Ids of the leaf nodes.
    leaves: Vec<u32>,
}

struct Moments {
    /// Total charge per node.
    a0: Vec<f64>,
    /// `coef[node * order + (p-1)] = -sum_l y_l ((z_l - c)/scale)^p / p`.
    coef: Vec<Complex64>,
}

impl Tree {
    fn build(points: &[Complex64]) -> Self {
        let n = points.len();
        let mut pts: Vec<Complex64> = points.to_vec();
        let mut orig: Vec<u32> = (0..n as u32).collect();

        let (mut re_lo, mut re_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut im_lo, mut im_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            re_lo = re_lo.min(p.re);
            re_hi = re_hi.max(p.re);
            im_lo = im_lo.min(p.im);
            im_hi = im_hi.max(p.im);
        }
        let side = (re_hi - re_lo).max(im_hi - im_lo).max(f64::MIN_POSITIVE);
        let cx = 0.5 * (re_lo + re_hi);
        let cy = 0.5 * (im_lo + im_hi);

        let mut nodes = Vec::with_capacity(2 * n / LEAF_CAP + 16);
        Self::subdivide(
            &mut nodes,
            &mut pts,
            &mut orig,
            0,
            n,
            Complex64::new(cx, cy),
            0.5 * side,
            0,
        );
        let mut slot_of = vec![0u32; n];
        for (slot, &o) in orig.iter().enumerate() {
            slot_of[o as usize] = slot as u32;
        }
        let leaves = nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| node.leaf)
            .map(|(i, _)| i as u32)
            .collect();
        Tree {
            nodes,
            pts,
            slot_of,
            orig,
            leaves,
        }
    }

    /// Builds the subtree over `pts[start..end]`, reordering in place.
    /// Returns the node id. Quadrant boxes steer the splitting only; the
    /// expansion center of every node is the bounding-box center of its own
    /// points, which keeps collinear data exactly collinear with the centers
    /// and the extents tight. Boxes with a single occupied quadrant are
    /// shrunk until the points split or the leaf cap is reached, so every
    /// internal node has at least two children.
    #[allow(clippy::too_many_arguments)]
    fn subdivide(
        nodes: &mut Vec<Node>,
        pts: &mut [Complex64],
        orig: &mut [u32],
        start: usize,
        end: usize,
        box_center: Complex64,
        mut half: f64,
        depth: usize,
    ) -> u32 {
        let count = end - start;
        let mut split_center = box_center;

        // Expansion center from the point bounding box.
        let (mut re_lo, mut re_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut im_lo, mut im_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts.iter().take(end).skip(start) {
            re_lo = re_lo.min(p.re);
            re_hi = re_hi.max(p.re);
            im_lo = im_lo.min(p.im);
            im_hi = im_hi.max(p.im);
        }
        let center = Complex64::new(0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi));

        let mut quads: [Vec<(Complex64, u32)>; 4] = Default::default();
        let mut is_leaf = count <= LEAF_CAP || depth >= MAX_DEPTH;
        if !is_leaf {
            loop {
                for q in quads.iter_mut() {
                    q.clear();
                }
                for i in start..end {
                    let p = pts[i];
                    let q =
                        (p.re > split_center.re) as usize + 2 * ((p.im > split_center.im) as usize);
                    quads[q].push((p, orig[i]));
                }
                let occupied = quads.iter().filter(|q| !q.is_empty()).count();
                if occupied > 1 {
                    break;
                }
                // All points in one quadrant: shrink onto it and retry.
                let q = quads.iter().position(|b| !b.is_empty()).unwrap();
                half *= 0.5;
                split_center += Complex64::new(
                    if q & 1 == 1 { half } else { -half },
                    if q & 2 == 2 { half } else { -half },
                );
                if half < f64::MIN_POSITIVE * 4.0 {
                    is_leaf = true;
                    break;
                }
            }
        }

        let id = nodes.len() as u32;
        nodes.push(Node {
            center,
            radius: 0.0,
            scale: 1.0,
            re_extent: 0.0,
            im_extent: 0.0,
            start: start as u32,
            end: end as u32,
            children: [NO_CHILD; 4],
            leaf: is_leaf,
        });

        if !is_leaf {
            // Write quadrant buckets back contiguously, then recurse.
            let mut pos = start;
            let mut ranges = [(0usize, 0usize); 4];
            for (q, bucket) in quads.iter().enumerate() {
                let s = pos;
                for &(p, o) in bucket {
                    pts[pos] = p;
                    orig[pos] = o;
                    pos += 1;
                }
                ranges[q] = (s, pos);
            }
            drop(quads);
            let h = 0.5 * half;
            for (q, &(s, e)) in ranges.iter().enumerate() {
                if s == e {
                    continue;
                }
                let child_center = split_center
                    + Complex64::new(
                        if q & 1 == 1 { h } else { -h },
                        if q & 2 == 2 { h } else { -h },
                    );
                let child = Self::subdivide(nodes, pts, orig, s, e, child_center, h, depth + 1);
                nodes[id as usize].children[q] = child;
            }
        }

        // Point-based extents around the expansion center.
        let (mut rad2, mut re_ext, mut im_ext) = (0.0f64, 0.0f64, 0.0f64);
        for p in pts.iter().take(end).skip(start) {
            let s = p - center;
            rad2 = rad2.max(s.norm_sqr());
            re_ext = re_ext.max(s.re.abs());
            im_ext = im_ext.max(s.im.abs());
        }
        let radius = rad2.sqrt();
        let node = &mut nodes[id as usize];
        node.radius = radius;
        node.re_extent = re_ext;
        node.im_extent = im_ext;
        node.scale = if radius > 0.0 {
            (2.0f64).powi(radius.log2().ceil() as i32)
        } else {
            1.0
        };
        id
    }

    /// Computes multipole moments for the given charges: leaves from their
    /// points, internal nodes by translating child expansions. Nodes are
    /// created parents-first, so a reverse sweep sees children before
    /// parents.
    #[allow(clippy::needless_range_loop)]
    fn moments(&self, y_slots: &[f64], order: usize, binom: &[Vec<f64>]) -> Moments {
        let nn = self.nodes.len();
        let mut mom = Moments {
            a0: vec![0.0; nn],
            coef: vec![Complex64::new(0.0, 0.0); nn * order],
        };
        let inv_p: Vec<f64> = (0..=order).map(|p| 1.0 / (p.max(1) as f64)).collect();
        let mut upow = vec![Complex64::new(0.0, 0.0); order + 1];
        let mut shifted = vec![Complex64::new(0.0, 0.0); order + 1];

        for id in (0..nn).rev() {
            let node = &self.nodes[id];
            let base = id * order;
            if node.leaf {
                let mut a0 = 0.0;
                let inv_scale = 1.0 / node.scale;
                for slot in node.start as usize..node.end as usize {
                    let w = y_slots[slot];
                    a0 += w;
                    let s = (self.pts[slot] - node.center) * inv_scale;
                    let mut sp = s;
                    for p in 1..=order {
                        mom.coef[base + p - 1] -= w * inv_p[p] * sp;
                        sp *= s;
                    }
                }
                mom.a0[id] = a0;
            } else {
                let mut a0 = 0.0;
                for q in 0..4 {
                    let c = node.children[q];
                    if c == NO_CHILD {
                        continue;
                    }
                    let c = c as usize;
                    let child = &self.nodes[c];
                    let ca0 = mom.a0[c];
                    a0 += ca0;
                    // Shift the child expansion to the parent center.
                    let u = (child.center - node.center) / node.scale;
                    let kappa = child.scale / node.scale;
                    upow[0] = Complex64::new(1.0, 0.0);
                    for p in 1..=order {
                        upow[p] = upow[p - 1] * u;
                    }
                    let cbase = c * order;
                    let mut kp = kappa;
                    for t in 1..=order {
                        shifted[t] = mom.coef[cbase + t - 1] * kp;
                        kp *= kappa;
                    }
                    for l in 1..=order {
                        let mut acc = -ca0 * inv_p[l] * upow[l];
                        let brow = &binom[l - 1];
                        for t in 1..=l {
                            acc += shifted[t] * upow[l - t] * brow[t - 1];
                        }
                        mom.coef[base + l - 1] += acc;
                    }
                }
                mom.a0[id] = a0;
            }
        }
        mom
    }
}

/// Reusable evaluator over a fixed point set: builds the quadtree once and
/// recomputes only moments per charge vector.
pub struct PotentialEngine {
    points: Vec<Complex64>,
    cfg: SummationConfig,
    order: usize,
    tree: Option<Tree>,
    binom: Vec<Vec<f64>>,
}

impl PotentialEngine {
    pub fn new(points: Vec<Complex64>, cfg: SummationConfig) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::ParameterDomain("need at least one point".into()));
        }
        if points
            .iter()
            .any(|p| !p.re.is_finite() || !p.im.is_finite())
        {
            return Err(Error::ParameterDomain("points must be finite".into()));
        }
        check_distinct(&points)?;
        let order = cfg.expansion_order()?;
        let use_tree =
            cfg.backend == SummationBackend::Hierarchical && points.len() > DIRECT_CROSSOVER;
        let tree = use_tree.then(|| Tree::build(&points));
        let binom = if use_tree {
            // binom[l][t] = C(l, t) for l = 0..order-1.
            let mut b: Vec<Vec<f64>> = Vec::with_capacity(order);
            for l in 0..order {
                let mut row = vec![1.0; l + 1];
                for t in 1..l {
                    row[t] = b[l - 1][t - 1] + b[l - 1][t];
                }
                b.push(row);
            }
            b
        } else {
            Vec::new()
        };
        Ok(Self {
            points,
            cfg,
            order,
            tree,
            binom,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn backend_in_use(&self) -> SummationBackend {
        if self.tree.is_some() {
            SummationBackend::Hierarchical
        } else {
            SummationBackend::Direct
        }
    }

    pub fn config(&self) -> &SummationConfig {
        &self.cfg
    }

    fn check_charges(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParameterDomain("charges must be finite".into()));
        }
        Ok(())
    }

    /// `u_j = sum_{l != j} y_l Log(z_j - z_l)` over the engine's own points.
    pub fn mutual(&self, y: &[f64]) -> Result<Vec<Complex64>> {
        self.check_charges(y)?;
        match &self.tree {
            None => Ok(direct_mutual(&self.points, y)),
            Some(tree) => {
                let (mom, y_slots) = self.prepare(tree, y);
                let slot_values = self.eval_leafwise::<false>(tree, &mom, &y_slots);
                let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
                for (slot, v) in slot_values.into_iter().enumerate() {
                    out[tree.orig[slot] as usize] = v;
                }
                Ok(out)
            }
        }
    }

    /// Real parts only: `sum_{l != j} y_l log|z_j - z_l|`. This is the
    /// quantity consumed by the collocation operator; skipping the argument
    /// computation makes the direct path substantially cheaper.
    pub fn mutual_real(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_charges(y)?;
        match &self.tree {
            None => Ok(direct_mutual_real(&self.points, y)),
            Some(tree) => {
                let (mom, y_slots) = self.prepare(tree, y);
                let slot_values = self.eval_leafwise::<true>(tree, &mom, &y_slots);
                let mut out = vec![0.0; y.len()];
                for (slot, v) in slot_values.into_iter().enumerate() {
                    out[tree.orig[slot] as usize] = v.re;
                }
                Ok(out)
            }
        }
    }

    /// Potentials of the engine's charges at arbitrary targets (no
    /// self-exclusion). Targets coinciding with a source produce an infinite
    /// potential, as in the direct sum.
    pub fn potentials_at(&self, y: &[f64], targets: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_charges(y)?;
        match &self.tree {
            None => Ok(direct_at(&self.points, y, targets)),
            Some(tree) => {
                let (mom, y_slots) = self.prepare(tree, y);
                let body = |x: &Complex64| self.walk(tree, &mom, &y_slots, *x, u32::MAX).0;
                Ok(if targets.len() >= 2048 {
                    targets.par_iter().map(body).collect()
                } else {
                    targets.iter().map(body).collect()
                })
            }
        }
    }

    fn prepare(&self, tree: &Tree, y: &[f64]) -> (Moments, Vec<f64>) {
        let mut y_slots = vec![0.0; y.len()];
        for (orig, &slot) in tree.slot_of.iter().enumerate() {
            y_slots[slot as usize] = y[orig];
        }
        let mom = tree.moments(&y_slots, self.order, &self.binom);
        (mom, y_slots)
    }

    /// Admissibility of a far-field expansion: opening criterion plus the
    /// branch-safety wedge. `d = target - center`, `r = |d|`.
    #[inline]
    fn admissible(node: &Node, d: Complex64, r: f64) -> bool {
        if node.radius > THETA * r {
            return false;
        }
        if d.re >= 0.0 {
            return true;
        }
        let tau = node.radius / r;
        d.im.abs() * (1.0 - tau) * r >= node.im_extent * d.re.abs() + node.re_extent * d.im.abs()
    }

    /// Admissibility of a source node for every target inside a leaf at
    /// once. The multipole conditions (opening criterion and branch wedge,
    /// minorized over the leaf disk so they imply the per-target test for
    /// each contained target) decide whether the cluster is usable at all.
    /// When additionally the shifted log term converges and stays on the
    /// principal branch over the whole leaf, the log can be accumulated into
    /// the leaf's local polynomial; otherwise it is evaluated per target.
    /// All conditions are exact for collinear real data.
    #[inline]
    fn pair_admissible(source: &Node, leaf: &Node, branch_exact: bool) -> Admissibility {
        let d0 = leaf.center - source.center;
        let r0 = d0.norm();
        let sep = r0 - leaf.radius;
        if sep <= 0.0 || sep.is_nan() || source.radius > THETA * sep {
            return Admissibility::No;
        }
        let mut local_log = leaf.radius <= THETA * r0;
        // Targets left of the cluster exist whenever the leaf disk reaches
        // past the cluster center line, not only when its center does.
        if branch_exact && d0.re < leaf.radius {
            // Multipole branch wedge, worst case over the leaf disk:
            // |Im d| ((1 - tau)|d| - re_extent) >= im_extent |Re d|.
            let tau = source.radius / sep;
            let bracket = (1.0 - tau) * sep - source.re_extent;
            if bracket < 0.0 {
                return Admissibility::No;
            }
            let im_min = (d0.im.abs() - leaf.radius).max(0.0);
            let re_max = d0.re.abs() + leaf.radius;
            if im_min * bracket < source.im_extent * re_max {
                return Admissibility::No;
            }
            // Branch wedge of the log translation, over the leaf extents.
            let bracket2 = (1.0 - leaf.radius / r0) * r0 - leaf.re_extent;
            if bracket2 < 0.0 || d0.im.abs() * bracket2 < leaf.im_extent * d0.re.abs() {
                local_log = false;
            }
        }
        if local_log {
            Admissibility::FarLocalLog
        } else {
            Admissibility::FarDirectLog
        }
    }

    /// Interaction lists of one target leaf: clusters whose log term joins
    /// the local polynomial, clusters whose log is evaluated per target, and
    /// the leaves evaluated directly (including the target leaf itself).
    fn leaf_lists(
        tree: &Tree,
        leaf_id: u32,
        branch_exact: bool,
        far_local: &mut Vec<u32>,
        far_direct: &mut Vec<u32>,
        near: &mut Vec<u32>,
    ) {
        far_local.clear();
        far_direct.clear();
        near.clear();
        let leaf = &tree.nodes[leaf_id as usize];
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            if id == leaf_id {
                near.push(id);
                continue;
            }
            let node = &tree.nodes[id as usize];
            match Self::pair_admissible(node, leaf, branch_exact) {
                Admissibility::FarLocalLog => far_local.push(id),
                Admissibility::FarDirectLog => far_direct.push(id),
                Admissibility::No => {
                    if node.leaf {
                        near.push(id);
                    } else {
                        for &c in &node.children {
                            if c != NO_CHILD {
                                stack.push(c);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Evaluates the mutual potentials leaf by leaf, cluster-outer and
    /// target-inner so that each coefficient row is reused across the whole
    /// leaf. Returns values in slot order; `REAL_ONLY` skips the argument
    /// computations and fills only the real parts.
    #[allow(clippy::needless_range_loop)]
    fn eval_leafwise<const REAL_ONLY: bool>(
        &self,
        tree: &Tree,
        mom: &Moments,
        y_slots: &[f64],
    ) -> Vec<Complex64> {
        let order = self.order;
        let eval_leaf = |&leaf_id: &u32| -> (u32, Vec<Complex64>) {
            let mut far_local = Vec::with_capacity(256);
            let mut far_direct = Vec::with_capacity(64);
            let mut near = Vec::with_capacity(32);
            Self::leaf_lists(
                tree,
                leaf_id,
                !REAL_ONLY,
                &mut far_local,
                &mut far_direct,
                &mut near,
            );
            let leaf = &tree.nodes[leaf_id as usize];
            let (s0, s1) = (leaf.start as usize, leaf.end as usize);
            let xs = &tree.pts[s0..s1];
            let mut acc = vec![Complex64::new(0.0, 0.0); s1 - s0];

            // Shifted log terms of the local-eligible clusters, gathered
            // into one polynomial in (x - c_leaf) / scale:
            // Log(x - c) = Log(D) - sum_l (-u)^l / l with u = (x - c_leaf)/D.
            let mut log_local = vec![Complex64::new(0.0, 0.0); order + 1];
            for &a in &far_local {
                let node = &tree.nodes[a as usize];
                let a0 = mom.a0[a as usize];
                let dvec = leaf.center - node.center;
                log_local[0] += a0 * dvec.ln();
                let mg = -(leaf.scale / dvec);
                let mut mgp = mg;
                for (l, slot) in log_local.iter_mut().enumerate().skip(1) {
                    *slot -= a0 / l as f64 * mgp;
                    mgp *= mg;
                }
            }

            // Multipole sums of every admissible cluster.
            for &a in far_local.iter().chain(&far_direct) {
                let node = &tree.nodes[a as usize];
                let base = a as usize * order;
                let coef = &mom.coef[base..base + order];
                for (value, &x) in acc.iter_mut().zip(xs) {
                    let d = x - node.center;
                    let v = node.scale / d;
                    let mut s = Complex64::new(0.0, 0.0);
                    for p in (0..order).rev() {
                        s = (s + coef[p]) * v;
                    }
                    if REAL_ONLY {
                        value.re += s.re;
                    } else {
                        *value += s;
                    }
                }
            }
            // Per-target log terms of the clusters that could not be
            // translated safely.
            for &a in &far_direct {
                let node = &tree.nodes[a as usize];
                let a0 = mom.a0[a as usize];
                for (value, &x) in acc.iter_mut().zip(xs) {
                    let d = x - node.center;
                    if REAL_ONLY {
                        value.re += a0 * 0.5 * d.norm_sqr().ln();
                    } else {
                        *value += a0 * d.ln();
                    }
                }
            }
            // One local evaluation per target covers the remaining logs.
            let inv_scale = 1.0 / leaf.scale;
            for (value, &x) in acc.iter_mut().zip(xs) {
                let t = (x - leaf.center) * inv_scale;
                let mut s = log_local[order];
                for l in (0..order).rev() {
                    s = s * t + log_local[l];
                }
                if REAL_ONLY {
                    value.re += s.re;
                } else {
                    *value += s;
                }
            }
            for &a in &near {
                let node = &tree.nodes[a as usize];
                for src in node.start as usize..node.end as usize {
                    let zs = tree.pts[src];
                    let w = y_slots[src];
                    for (i, (value, &x)) in acc.iter_mut().zip(xs).enumerate() {
                        if s0 + i != src {
                            if REAL_ONLY {
                                value.re += w * 0.5 * (x - zs).norm_sqr().ln();
                            } else {
                                *value += w * (x - zs).ln();
                            }
                        }
                    }
                }
            }
            (leaf.start, acc)
        };

        let chunks: Vec<(u32, Vec<Complex64>)> = if self.points.len() >= 8192 {
            tree.leaves.par_iter().map(eval_leaf).collect()
        } else {
            tree.leaves.iter().map(eval_leaf).collect()
        };
        let mut out = vec![Complex64::new(0.0, 0.0); self.points.len()];
        for (start, values) in chunks {
            out[start as usize..start as usize + values.len()].copy_from_slice(&values);
        }
        out
    }

    fn walk(
        &self,
        tree: &Tree,
        mom: &Moments,
        y_slots: &[f64],
        x: Complex64,
        skip_slot: u32,
    ) -> (Complex64, ()) {
        let order = self.order;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            let node = &tree.nodes[id as usize];
            let contains_target = skip_slot >= node.start && skip_slot < node.end;
            if !contains_target {
                let d = x - node.center;
                let r = d.norm();
                if Self::admissible(node, d, r) {
                    let base = id as usize * order;
                    let v = node.scale / d;
                    let mut s = Complex64::new(0.0, 0.0);
                    for p in (0..order).rev() {
                        s = (s + mom.coef[base + p]) * v;
                    }
                    acc += mom.a0[id as usize] * d.ln() + s;
                    continue;
                }
            }
            if node.leaf {
                for slot in node.start..node.end {
                    if slot != skip_slot {
                        acc += y_slots[slot as usize] * (x - tree.pts[slot as usize]).ln();
                    }
                }
            } else {
                for &c in &node.children {
                    if c != NO_CHILD {
                        stack.push(c);
                    }
                }
            }
        }
        (acc, ())
    }
}


#[cfg(test)]
mod count_probe {
    use super::*;

    fn lcg(n: usize, mut state: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            out.push((state >> 11) as f64 / (1u64 << 53) as f64);
        }
        out
    }

    #[test]
    #[ignore]
    fn leafwise_counts() {
        for n in [10_000usize, 100_000] {
            let re = lcg(n, 17);
            let im = lcg(n, 39);
            let z: Vec<Complex64> = re
                .into_iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(a, b))
                .collect();
            let engine = PotentialEngine::new(z, SummationConfig::hierarchical()).unwrap();
            let tree = engine.tree.as_ref().unwrap();
            let mut far_local_w = 0usize;
            let mut far_direct_w = 0usize;
            let mut near_w = 0usize;
            let mut far_local = Vec::new();
            let mut far_direct = Vec::new();
            let mut near = Vec::new();
            for &lid in &tree.leaves {
                PotentialEngine::leaf_lists(
                    tree,
                    lid,
                    true,
                    &mut far_local,
                    &mut far_direct,
                    &mut near,
                );
                let leaf = &tree.nodes[lid as usize];
                let sz = (leaf.end - leaf.start) as usize;
                far_local_w += far_local.len() * sz;
                far_direct_w += far_direct.len() * sz;
                near_w += near
                    .iter()
                    .map(|&a| (tree.nodes[a as usize].end - tree.nodes[a as usize].start) as usize)
                    .sum::<usize>()
                    * sz;
            }
            println!(
                "n={n}: leaves={} far-local/target={:.1} far-direct/target={:.1} near-pairs/target={:.1}",
                tree.leaves.len(),
                far_local_w as f64 / n as f64,
                far_direct_w as f64 / n as f64,
                near_w as f64 / n as f64
            );
        }
    }
}
