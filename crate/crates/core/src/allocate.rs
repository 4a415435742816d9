//! Exclusive assignment of (access point, wavelength) channels to users.
//!
//! Constraint model: binary `x[u,a,w]` with `Σ_{a,w} x[u,a,w] = 1` for every
//! user and `Σ_u x[u,a,w] ≤ 1` for every channel. SINR is not linear in `x`
//! since a user's interference depends on which other channels are in use,
//! so the optimum is found by depth-first branch and bound over users in id
//! order. Each user's receiver branch is whichever gives the highest SINR
//! under the full assignment.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linkbudget::{check_exclusive, incident_photocurrent, sinr_from_parts, to_db, ChannelId, LinkError, NoiseModel};
use crate::metrics::ChannelMatrix;
use crate::real::Real;
use crate::scene::builtin::ReferenceEntry;
use crate::scene::{Scenario, Wavelength};

/// Largest search space `solve_exhaustive` will enumerate.
pub const EXHAUSTIVE_LIMIT: f64 = 1e7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Σ SINR in dB.
    #[default]
    DbSum,
    /// Σ linear SINR.
    LinearSum,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DbSum => "db_sum",
            Self::LinearSum => "linear_sum",
        }
    }

    #[inline]
    fn value<T: Real>(self, sinr_linear: T) -> T {
        match self {
            Self::DbSum => to_db(sinr_linear),
            Self::LinearSum => sinr_linear,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AllocError {
    #[error("allocation needs at least one user")]
    NoUsers,
    #[error(
        "infeasible: {users} users but only {aps} APs × {bands} wavelengths = {} channels",
        .aps * .bands
    )]
    Infeasible { users: usize, aps: usize, bands: usize },
    #[error("search space of {nodes:.3e} assignments exceeds the exhaustive limit of {limit:.0e}")]
    TooLarge { nodes: f64, limit: f64 },
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Precomputed photocurrents and noise for every (user, branch, AP, band).
#[derive(Clone, Debug)]
pub struct AllocationProblem<T> {
    user_ids: Vec<u32>,
    ap_ids: Vec<u32>,
    /// User indices in ascending id order.
    order: Vec<usize>,
    bands: Vec<Wavelength>,
    num_branches: usize,
    objective: Objective,
    /// `[u][b][a][w]` signal photocurrent, A.
    signal: Vec<T>,
    /// `[u][b][a][w]` shot + preamplifier variance when `(a, w)` is the signal, A².
    base: Vec<T>,
    /// `[u][a][w]` interference-free best-branch value, in objective units.
    upper: Vec<T>,
    /// Per `idx(u, b, a, w)`: objective value with every other AP lit on `w`.
    lit: Vec<f64>,
    /// Per `idx(u, b, a, w) * na + a'`: loss from lighting `a'` last.
    last_loss: Vec<f64>,
    /// Strongest DC gain over all branches and APs, per user.
    best_gain: Vec<T>,
}

/// One user's channel, selected branch and SINR.
#[derive(Clone, Debug, PartialEq)]
pub struct UserAssignment<T> {
    pub user_id: u32,
    pub ap_id: u32,
    /// Index into the channel matrix's AP list.
    pub ap: usize,
    pub wavelength: Wavelength,
    /// 0-based.
    pub branch: usize,
    pub sinr_linear: T,
    pub sinr_db: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub leaves: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    /// Ascending user id.
    pub users: Vec<UserAssignment<T>>,
    pub objective_value: T,
    pub objective: Objective,
    pub stats: SearchStats,
}

impl<T: Real> Assignment<T> {
    /// `(user id, AP id, wavelength)` triples, the tie-break key.
    pub fn key(&self) -> Vec<(u32, u32, Wavelength)> {
        self.users.iter().map(|u| (u.user_id, u.ap_id, u.wavelength)).collect()
    }

    pub fn get(&self, user_id: u32) -> Option<&UserAssignment<T>> {
        self.users.iter().find(|u| u.user_id == user_id)
    }
}

impl<T: Real> AllocationProblem<T> {
    /// `bands` restricts which wavelengths may carry data. Every band in the
    /// matrix still contributes illumination shot noise.
    pub fn new(
        channel: &ChannelMatrix<T>,
        noise: &NoiseModel<T>,
        objective: Objective,
        bands: &[Wavelength],
    ) -> Result<Self, AllocError> {
        let nu = channel.num_users();
        let na = channel.num_aps();
        let nb = channel.num_branches;
        let mut bands = bands.to_vec();
        bands.sort();
        bands.dedup();
        if nu == 0 {
            return Err(AllocError::NoUsers);
        }
        if nu > na * bands.len() {
            return Err(AllocError::Infeasible { users: nu, aps: na, bands: bands.len() });
        }
        if nb == 0 {
            return Err(AllocError::Shape("receivers have no branches".into()));
        }

        let mut signal = vec![T::zero(); nu * nb * na * 4];
        for u in 0..nu {
            for b in 0..nb {
                for a in 0..na {
                    for w in Wavelength::ALL {
                        signal[((u * nb + b) * na + a) * 4 + w.index()] = channel.photocurrent(u, b, a, w);
                    }
                }
            }
        }
        let mut base = vec![T::zero(); signal.len()];
        for u in 0..nu {
            for b in 0..nb {
                let row = &signal[(u * nb + b) * na * 4..(u * nb + b + 1) * na * 4];
                for a in 0..na {
                    for w in Wavelength::ALL {
                        let incident =
                            incident_photocurrent(na, ChannelId::new(a, w), noise.ambient, |c| row[c.ap * 4 + c.wavelength.index()]);
                        base[((u * nb + b) * na + a) * 4 + w.index()] = noise.base_noise_var(incident);
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..nu).collect();
        order.sort_by_key(|&u| channel.user_ids[u]);
        let best_gain = (0..nu)
            .map(|u| {
                let mut g = T::zero();
                for b in 0..nb {
                    for a in 0..na {
                        g = g.max(channel.link(u, b, a).dc_gain);
                    }
                }
                g
            })
            .collect();

        let mut p = Self {
            user_ids: channel.user_ids.clone(),
            ap_ids: channel.ap_ids.clone(),
            order,
            bands,
            num_branches: nb,
            objective,
            signal,
            base,
            upper: Vec::new(),
            lit: Vec::new(),
            last_loss: Vec::new(),
            best_gain,
        };
        p.upper = vec![T::zero(); nu * na * 4];
        for u in 0..nu {
            for a in 0..na {
                for w in Wavelength::ALL {
                    let c = ChannelId::new(a, w);
                    let lin = (0..nb).map(|b| p.branch_sinr(u, b, c, None)).fold(T::zero(), T::max);
                    p.upper[(u * na + a) * 4 + w.index()] = objective.value(lin);
                }
            }
        }
        let mut lit_all = vec![0.0; p.signal.len()];
        let mut last_loss = vec![0.0; p.signal.len() * na];
        for u in 0..nu {
            for b in 0..nb {
                for a in 0..na {
                    for w in Wavelength::ALL {
                        let k = p.idx(u, b, a, w);
                        let (s, base) = (p.signal[k], p.base[k]);
                        let others = |skip: usize| {
                            (0..na)
                                .filter(|&x| x != a && x != skip)
                                .map(|x| p.signal[p.idx(u, b, x, w)])
                                .fold(T::zero(), |acc, i| acc + i * i)
                        };
                        let value = |i: T| objective.value(sinr_from_parts(s, base, i)).to_f64_lossy();
                        let lit = value(others(a));
                        lit_all[k] = lit;
                        for x in 0..na {
                            if x != a {
                                let loss = value(others(x)) - lit;
                                last_loss[k * na + x] = if loss > 0.0 { loss } else { 0.0 };
                            }
                        }
                    }
                }
            }
        }
        p.lit = lit_all;
        p.last_loss = last_loss;
        Ok(p)
    }

    /// All four bands, with noise and objective taken from the scenario.
    pub fn from_scenario(scenario: &Scenario<T>, channel: &ChannelMatrix<T>) -> Result<Self, AllocError> {
        Self::new(channel, &scenario.noise, scenario.solver.objective, &Wavelength::ALL)
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_ids.len()
    }

    pub fn bands(&self) -> &[Wavelength] {
        &self.bands
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn ap_ids(&self) -> &[u32] {
        &self.ap_ids
    }

    #[inline]
    fn idx(&self, u: usize, b: usize, a: usize, w: Wavelength) -> usize {
        ((u * self.num_branches + b) * self.ap_ids.len() + a) * 4 + w.index()
    }

    /// Every usable channel in tie-break order: AP id, then wavelength.
    fn channels(&self) -> Vec<ChannelId> {
        let mut aps: Vec<usize> = (0..self.ap_ids.len()).collect();
        aps.sort_by_key(|&a| self.ap_ids[a]);
        aps.into_iter()
            .flat_map(|a| self.bands.iter().map(move |&w| ChannelId::new(a, w)))
            .collect()
    }

    #[inline]
    fn channel_key(&self, c: ChannelId) -> (u32, usize) {
        (self.ap_ids[c.ap], c.wavelength.index())
    }

    /// Lexicographic comparison of two complete or partial assignments over
    /// users in id order; unassigned sorts first.
    fn cmp_keys(&self, x: &[Option<ChannelId>], y: &[Option<ChannelId>]) -> Ordering {
        for &u in &self.order {
            let kx = x[u].map(|c| self.channel_key(c));
            let ky = y[u].map(|c| self.channel_key(c));
            match kx.cmp(&ky) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    /// Linear SINR on branch `b` when user `u` uses channel `c`; `occupied`
    /// marks channels in use (`None` means no interferers).
    #[inline]
    fn branch_sinr(&self, u: usize, b: usize, c: ChannelId, occupied: Option<&[bool]>) -> T {
        let s = self.signal[self.idx(u, b, c.ap, c.wavelength)];
        let mut interference = T::zero();
        if let Some(occ) = occupied {
            for a in 0..self.ap_ids.len() {
                if a != c.ap && occ[a * 4 + c.wavelength.index()] {
                    let i = self.signal[self.idx(u, b, a, c.wavelength)];
                    interference += i * i;
                }
            }
        }
        sinr_from_parts(s, self.base[self.idx(u, b, c.ap, c.wavelength)], interference)
    }

    /// Select-best branch and its linear SINR; ties go to the lower branch.
    #[inline]
    fn user_sinr(&self, u: usize, c: ChannelId, occupied: &[bool]) -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for b in 0..self.num_branches {
            let s = self.branch_sinr(u, b, c, Some(occupied));
            if s > best.1 {
                best = (b, s);
            }
        }
        best
    }

    fn occupancy(&self, chans: &[Option<ChannelId>]) -> Vec<bool> {
        let mut occ = vec![false; self.ap_ids.len() * 4];
        for c in chans.iter().flatten() {
            occ[c.ap * 4 + c.wavelength.index()] = true;
        }
        occ
    }

    /// Objective over assigned users, summed in id order. The single code
    /// path all solvers use for final values.
    fn objective_of(&self, chans: &[Option<ChannelId>], occ: &[bool]) -> T {
        let mut total = T::zero();
        for &u in &self.order {
            if let Some(c) = chans[u] {
                total += self.objective.value(self.user_sinr(u, c, occ).1);
            }
        }
        total
    }

    /// Upper bound on any completion.
    ///
    /// Interference only grows as users are added. Assigned users count at
    /// their current SINR, less a charge for every free co-channel AP that an
    /// open user may still light up. The charge for one AP is the user's loss
    /// from it with every other co-channel AP already lit; the objective is
    /// convex and decreasing in interference, so these charges never exceed
    /// the real combined loss. Only branches that can still be a user's best
    /// are considered, and the smallest charge among them is taken.
    ///
    /// Each open user on a free channel counts at its SINR against the
    /// interferers already committed, less that channel's charge. Open users
    /// first take their best free channel each; if that does not already
    /// fall below `cutoff`, a maximum-weight matching of open users to
    /// distinct free channels replaces it.
    fn bound(&self, chans: &[Option<ChannelId>], occ: &[bool], cutoff: f64) -> Bound {
        let na = self.ap_ids.len();
        let nb = self.num_branches;
        let value = |lin: T| self.objective.value(lin).to_f64_lossy();
        let mut assigned = 0.0;
        let mut charge = vec![0.0; na * 4];
        let mut open = Vec::new();
        for &u in &self.order {
            let Some(c) = chans[u] else {
                open.push(u);
                continue;
            };
            let w = c.wavelength;
            let now: Vec<f64> = (0..nb).map(|b| value(self.branch_sinr(u, b, c, Some(occ)))).collect();
            assigned += now.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // Branches that can still end up best.
            let floor = (0..nb).map(|b| self.lit[self.idx(u, b, c.ap, w)]).fold(f64::NEG_INFINITY, f64::max);
            let live: Vec<usize> =
                (0..nb).filter(|&b| now[b] >= floor).map(|b| self.idx(u, b, c.ap, w) * na).collect();
            for a in 0..na {
                if a == c.ap || occ[a * 4 + w.index()] {
                    continue;
                }
                let least = live.iter().map(|&k| self.last_loss[k + a]).fold(f64::INFINITY, f64::min);
                if least.is_finite() {
                    charge[a * 4 + w.index()] += least;
                }
            }
        }

        let free: Vec<ChannelId> = (0..na)
            .flat_map(|a| self.bands.iter().map(move |&w| ChannelId::new(a, w)))
            .filter(|c| !occ[c.ap * 4 + c.wavelength.index()])
            .collect();
        let mut weights = Vec::with_capacity(open.len() * free.len());
        let mut interference = vec![T::zero(); nb * 4];
        for &u in &open {
            // Summed in AP order, as in `branch_sinr`, so values match it exactly.
            for b in 0..nb {
                for &w in &self.bands {
                    let mut sum = T::zero();
                    for a in 0..na {
                        if occ[a * 4 + w.index()] {
                            let i = self.signal[self.idx(u, b, a, w)];
                            sum += i * i;
                        }
                    }
                    interference[b * 4 + w.index()] = sum;
                }
            }
            for c in &free {
                let w = c.wavelength;
                let best = (0..nb)
                    .map(|b| {
                        let k = self.idx(u, b, c.ap, w);
                        sinr_from_parts(self.signal[k], self.base[k], interference[b * 4 + w.index()])
                    })
                    .fold(T::neg_infinity(), T::max);
                weights.push((value(best) - charge[c.ap * 4 + w.index()]).max(-MATCHING_FLOOR));
            }
        }

        let mut relaxed = 0.0;
        let mut next: Option<(usize, f64)> = None;
        for (&u, row) in open.iter().zip(weights.chunks(free.len().max(1))) {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            relaxed += best;
            if next.is_none_or(|(_, b)| best > b) {
                next = Some((u, best));
            }
        }
        let next = next.map(|(u, _)| u);
        if open.len() < 2 || assigned + relaxed < cutoff {
            return Bound { value: assigned + relaxed, next };
        }
        Bound { value: assigned + max_weight_matching(&weights, open.len(), free.len()), next }
    }

    /// Per-user SINR and objective for a (possibly partial) assignment
    /// indexed like the channel matrix's users.
    pub fn evaluate(&self, chans: &[Option<ChannelId>]) -> Result<Assignment<T>, AllocError> {
        if chans.len() != self.user_ids.len() {
            return Err(AllocError::Shape(format!(
                "assignment covers {} users, problem has {}",
                chans.len(),
                self.user_ids.len()
            )));
        }
        if let Some(c) = chans.iter().flatten().find(|c| c.ap >= self.ap_ids.len()) {
            return Err(AllocError::Shape(format!("AP index {} out of range", c.ap)));
        }
        check_exclusive(chans)?;
        let occ = self.occupancy(chans);
        let users = self
            .order
            .iter()
            .filter_map(|&u| {
                chans[u].map(|c| {
                    let (branch, lin) = self.user_sinr(u, c, &occ);
                    UserAssignment {
                        user_id: self.user_ids[u],
                        ap_id: self.ap_ids[c.ap],
                        ap: c.ap,
                        wavelength: c.wavelength,
                        branch,
                        sinr_linear: lin,
                        sinr_db: to_db(lin),
                    }
                })
            })
            .collect();
        Ok(Assignment {
            users,
            objective_value: self.objective_of(chans, &occ),
            objective: self.objective,
            stats: SearchStats::default(),
        })
    }

    /// Channel vector for an assignment produced from this problem.
    pub fn channels_of(&self, a: &Assignment<T>) -> Result<Vec<Option<ChannelId>>, AllocError> {
        let mut chans = vec![None; self.user_ids.len()];
        for ua in &a.users {
            let u = self
                .user_ids
                .iter()
                .position(|&id| id == ua.user_id)
                .ok_or_else(|| AllocError::Shape(format!("unknown user id {}", ua.user_id)))?;
            let ap = self
                .ap_ids
                .iter()
                .position(|&id| id == ua.ap_id)
                .ok_or_else(|| AllocError::Shape(format!("unknown AP id {}", ua.ap_id)))?;
            chans[u] = Some(ChannelId::new(ap, ua.wavelength));
        }
        Ok(chans)
    }

    /// Evaluates a published allocation; branches are re-selected by SINR.
    pub fn evaluate_reference(&self, entries: &[ReferenceEntry]) -> Result<Assignment<T>, AllocError> {
        let mut chans = vec![None; self.user_ids.len()];
        for e in entries {
            let u = self
                .user_ids
                .iter()
                .position(|&id| id == e.user_id)
                .ok_or_else(|| AllocError::Shape(format!("reference names unknown user {}", e.user_id)))?;
            let ap = self
                .ap_ids
                .iter()
                .position(|&id| id == e.ap_id)
                .ok_or_else(|| AllocError::Shape(format!("reference names unknown AP {}", e.ap_id)))?;
            chans[u] = Some(ChannelId::new(ap, e.wavelength));
        }
        if chans.iter().any(Option::is_none) {
            return Err(AllocError::Shape("reference does not cover every user".into()));
        }
        self.evaluate(&chans)
    }

    fn finish(&self, chans: &[Option<ChannelId>], stats: SearchStats) -> Result<Assignment<T>, AllocError> {
        let mut a = self.evaluate(chans)?;
        a.stats = stats;
        Ok(a)
    }

    /// Users by descending strongest link, each taking the free channel with
    /// the best interference-free SINR.
    pub fn solve_greedy(&self) -> Result<Assignment<T>, AllocError> {
        let chans = self.greedy_channels();
        self.finish(&chans, SearchStats { nodes: self.user_ids.len() as u64, leaves: 1 })
    }

    fn greedy_channels(&self) -> Vec<Option<ChannelId>> {
        let na = self.ap_ids.len();
        let mut users = self.order.clone();
        users.sort_by(|&x, &y| {
            self.best_gain[y]
                .partial_cmp(&self.best_gain[x])
                .unwrap_or(Ordering::Equal)
                .then(self.user_ids[x].cmp(&self.user_ids[y]))
        });
        let candidates = self.channels();
        let mut chans = vec![None; self.user_ids.len()];
        let mut occ = vec![false; na * 4];
        for u in users {
            let mut pick: Option<(ChannelId, T)> = None;
            for &c in &candidates {
                if occ[c.ap * 4 + c.wavelength.index()] {
                    continue;
                }
                let v = self.upper[(u * na + c.ap) * 4 + c.wavelength.index()];
                if pick.is_none_or(|(_, best)| v > best) {
                    pick = Some((c, v));
                }
            }
            let (c, _) = pick.expect("feasibility checked at construction");
            occ[c.ap * 4 + c.wavelength.index()] = true;
            chans[u] = Some(c);
        }
        chans
    }

    /// Full enumeration; refuses search spaces above [`EXHAUSTIVE_LIMIT`].
    pub fn solve_exhaustive(&self) -> Result<Assignment<T>, AllocError> {
        let channels = self.channels();
        let n = self.user_ids.len();
        let space: f64 = (0..n).map(|i| (channels.len() - i) as f64).product();
        if space > EXHAUSTIVE_LIMIT {
            return Err(AllocError::TooLarge { nodes: space, limit: EXHAUSTIVE_LIMIT });
        }
        let mut st = Enumerate {
            p: self,
            channels: &channels,
            chans: vec![None; n],
            occ: vec![false; self.ap_ids.len() * 4],
            best: None,
            stats: SearchStats::default(),
        };
        st.run(0);
        let (_, chans) = st.best.expect("feasible problem has a leaf");
        self.finish(&chans, st.stats)
    }

    /// Provably optimal assignment, ties resolved to the smallest key.
    pub fn solve_exact(&self) -> Result<Assignment<T>, AllocError> {
        let n = self.user_ids.len();
        let seed = self.greedy_channels();
        let seed_value = self.objective_of(&seed, &self.occupancy(&seed));
        let incumbent = AtomicU64::new(ordered_bits(seed_value.to_f64_lossy()));

        let empty = vec![false; self.ap_ids.len() * 4];
        let first = self.bound(&vec![None; n], &empty, f64::INFINITY).next.expect("at least one user");
        let mut top: Vec<(T, ChannelId)> = self
            .channels()
            .into_iter()
            .map(|c| (self.upper[(first * self.ap_ids.len() + c.ap) * 4 + c.wavelength.index()], c))
            .collect();
        // Stable sort keeps tie-break order among equal bounds.
        top.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal));

        let results: Vec<(Option<Found<T>>, SearchStats)> = top
            .par_iter()
            .map(|&(_, c)| {
                let mut s = Search {
                    p: self,
                    incumbent: &incumbent,
                    chans: vec![None; n],
                    occ: vec![false; self.ap_ids.len() * 4],
                    best: None,
                    stats: SearchStats::default(),
                };
                s.branch(0, first, c);
                (s.best, s.stats)
            })
            .collect();

        let mut best: (T, Vec<Option<ChannelId>>) = (seed_value, seed);
        let mut stats = SearchStats::default();
        for (found, st) in results {
            stats.nodes += st.nodes;
            stats.leaves += st.leaves;
            if let Some((v, chans)) = found {
                if self.better(v, &chans, best.0, &best.1) {
                    best = (v, chans);
                }
            }
        }
        self.finish(&best.1, stats)
    }

    #[inline]
    fn better(&self, v: T, chans: &[Option<ChannelId>], best_v: T, best: &[Option<ChannelId>]) -> bool {
        v > best_v || (v == best_v && self.cmp_keys(chans, best) == Ordering::Less)
    }
}

/// Maps an `f64` to a `u64` whose unsigned order matches the float order.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

/// Pruning margin covering rounding in the bound and in `T` arithmetic.
fn slack<T: Real>(x: f64) -> f64 {
    (1e3 * T::epsilon().to_f64_lossy()).max(1e-9) * x.abs().max(1.0)
}

struct Bound {
    value: f64,
    /// Open user to branch on next: the one with the most to gain.
    next: Option<usize>,
}

/// Stand-in for `-∞` weights (zero-signal links in dB) inside the matching.
/// Any matching that needs one is dominated by every finite alternative.
const MATCHING_FLOOR: f64 = 1e30;

/// Value of a maximum-weight matching that gives each of `rows` rows a
/// distinct one of `cols` columns (`rows ≤ cols`). Shortest augmenting path
/// with potentials; `weights` is row-major.
fn max_weight_matching(weights: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert!(rows <= cols && weights.len() == rows * cols);
    let cost = |i: usize, j: usize| -weights[(i - 1) * cols + (j - 1)];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // `p[j]`: row matched to column j (1-based, 0 = free).
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=cols).filter(|&j| p[j] != 0).map(|j| weights[(p[j] - 1) * cols + (j - 1)]).sum()
}

/// Objective value and per-user channel of a complete assignment.
type Found<T> = (T, Vec<Option<ChannelId>>);

struct Search<'a, T> {
    p: &'a AllocationProblem<T>,
    incumbent: &'a AtomicU64,
    chans: Vec<Option<ChannelId>>,
    occ: Vec<bool>,
    best: Option<(T, Vec<Option<ChannelId>>)>,
    stats: SearchStats,
}

impl<T: Real> Search<'_, T> {
    fn threshold(&self) -> f64 {
        let shared = from_ordered_bits(self.incumbent.load(AtomicOrdering::Relaxed));
        let local = self.best.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| v.to_f64_lossy());
        let inc = shared.max(local);
        inc - slack::<T>(inc)
    }

    /// Assigns `c` to user `u` at `depth`, explores below, then undoes it.
    /// Returns the best leaf value seen under this node.
    fn branch(&mut self, depth: usize, u: usize, c: ChannelId) -> Option<T> {
        let slot = c.ap * 4 + c.wavelength.index();
        self.chans[u] = Some(c);
        self.occ[slot] = true;
        self.stats.nodes += 1;
        let cutoff = self.threshold();
        let Bound { value: bound, next } = self.p.bound(&self.chans, &self.occ, cutoff);
        let found = if bound < cutoff {
            None
        } else {
            let found = self.descend(depth + 1, next);
            debug_assert!(
                found.is_none_or(|v| v.to_f64_lossy() <= bound + slack::<T>(bound)),
                "bound {bound} below descendant {found:?}"
            );
            found
        };
        self.occ[slot] = false;
        self.chans[u] = None;
        found
    }

    fn descend(&mut self, depth: usize, next: Option<usize>) -> Option<T> {
        let p = self.p;
        if depth == p.order.len() {
            self.stats.leaves += 1;
            let v = p.objective_of(&self.chans, &self.occ);
            let accept = match &self.best {
                None => true,
                Some((bv, bc)) => p.better(v, &self.chans, *bv, bc),
            };
            if accept {
                self.best = Some((v, self.chans.clone()));
                self.incumbent.fetch_max(ordered_bits(v.to_f64_lossy()), AtomicOrdering::Relaxed);
            }
            return Some(v);
        }
        let u = next.expect("open user below a complete depth");
        let mut cands: Vec<(T, ChannelId)> = p
            .channels()
            .into_iter()
            .filter(|c| !self.occ[c.ap * 4 + c.wavelength.index()])
            .map(|c| (p.objective.value(p.user_sinr(u, c, &self.occ).1), c))
            .collect();
        cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal));
        let mut best: Option<T> = None;
        for (_, c) in cands {
            if let Some(v) = self.branch(depth, u, c) {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
        best
    }
}

struct Enumerate<'a, T> {
    p: &'a AllocationProblem<T>,
    channels: &'a [ChannelId],
    chans: Vec<Option<ChannelId>>,
    occ: Vec<bool>,
    best: Option<(T, Vec<Option<ChannelId>>)>,
    stats: SearchStats,
}

impl<T: Real> Enumerate<'_, T> {
    fn run(&mut self, depth: usize) {
        self.stats.nodes += 1;
        let p = self.p;
        if depth == p.order.len() {
            self.stats.leaves += 1;
            let v = p.objective_of(&self.chans, &self.occ);
            let accept = match &self.best {
                None => true,
                Some((bv, bc)) => p.better(v, &self.chans, *bv, bc),
            };
            if accept {
                self.best = Some((v, self.chans.clone()));
            }
            return;
        }
        let u = p.order[depth];
        for &c in self.channels {
            let slot = c.ap * 4 + c.wavelength.index();
            if self.occ[slot] {
                continue;
            }
            self.occ[slot] = true;
            self.chans[u] = Some(c);
            self.run(depth + 1);
            self.chans[u] = None;
            self.occ[slot] = false;
        }
    }
}

/// Per-user agreement between two assignments of the same problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub user_id: u32,
    pub ours: (u32, usize, Wavelength),
    pub reference: (u32, usize, Wavelength),
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceComparison<T> {
    pub rows: Vec<ComparisonRow>,
    pub match_fraction: f64,
    pub objective_ours: T,
    pub objective_reference: T,
    /// `ours ≥ reference`.
    pub dominates: bool,
}

/// Triple-by-triple comparison with both objectives re-evaluated under `problem`.
pub fn compare_to_reference<T: Real>(
    ours: &Assignment<T>,
    reference: &Assignment<T>,
    problem: &AllocationProblem<T>,
) -> Result<ReferenceComparison<T>, AllocError> {
    let ours = problem.evaluate(&problem.channels_of(ours)?)?;
    let reference = problem.evaluate(&problem.channels_of(reference)?)?;
    let ids = |a: &Assignment<T>| a.users.iter().map(|u| u.user_id).collect::<Vec<_>>();
    if ids(&ours) != ids(&reference) || ours.users.len() != problem.num_users() {
        return Err(AllocError::Shape("assignments cover different users".into()));
    }
    let rows: Vec<ComparisonRow> = ours
        .users
        .iter()
        .zip(&reference.users)
        .map(|(o, r)| {
            let ours = (o.ap_id, o.branch, o.wavelength);
            let reference = (r.ap_id, r.branch, r.wavelength);
            ComparisonRow { user_id: o.user_id, ours, reference, matches: ours == reference }
        })
        .collect();
    let match_fraction = rows.iter().filter(|r| r.matches).count() as f64 / rows.len() as f64;
    Ok(ReferenceComparison {
        match_fraction,
        objective_ours: ours.objective_value,
        objective_reference: reference.objective_value,
        dominates: ours.objective_value >= reference.objective_value,
        rows,
    })
}
