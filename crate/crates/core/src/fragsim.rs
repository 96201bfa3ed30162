//! Event-driven simulation of the (α, c, ν) fragmentation with exact
//! erosion decay and an exact mass cutoff.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::families::DislocationSpec;
use crate::measure::{exact_sum, histogram, Bin, EstimateTag, MeasureEstimate, MomentValue};
use crate::seed::{child_key, ParticleStreams};

use rand::Rng;

pub const DEFAULT_CUTOFF: f64 = 1e-4;
pub const DEFAULT_PARTICLE_LIMIT: usize = 2_000_000;

/// Splitting law, erosion and self-similarity index.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub alpha: f64,
    pub disl: DislocationSpec,
    total_rate: f64,
    exact_remainder: bool,
}

impl Dynamics {
    pub fn new(alpha: f64, disl: &DislocationSpec) -> Result<Self> {
        disl.validate()?;
        disl.require_simulable()?;
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        Ok(Self {
            alpha,
            disl: disl.clone(),
            total_rate: disl.total_mass(),
            exact_remainder: disl.dislocation_loss() == 0.0,
        })
    }

    /// Mass after `dt` of pure erosion.
    #[inline]
    pub fn decay(&self, m: f64, dt: f64) -> f64 {
        let c = self.disl.erosion;
        if c == 0.0 || dt == 0.0 {
            m
        } else if self.alpha == 0.0 {
            m * (-c * dt).exp()
        } else {
            let base = m.powf(-self.alpha) + self.alpha * c * dt;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(-1.0 / self.alpha)
            }
        }
    }

    /// Waiting time until the integrated split rate `∫ m(s)^α ν(D₁) ds`
    /// reaches `e`.
    #[inline]
    fn split_delay(&self, m: f64, e: f64) -> f64 {
        let c = self.disl.erosion;
        let a = self.alpha;
        if a == 0.0 {
            e / self.total_rate
        } else if c == 0.0 {
            e / (self.total_rate * m.powf(a))
        } else {
            let k = a * c;
            (k * e / self.total_rate).exp_m1() / (k * m.powf(a))
        }
    }

    /// Time for erosion to bring `m` down to `eps`.
    #[inline]
    fn crossing_delay(&self, m: f64, eps: f64) -> f64 {
        let c = self.disl.erosion;
        if c == 0.0 || eps <= 0.0 {
            f64::INFINITY
        } else if self.alpha == 0.0 {
            (m / eps).ln() / c
        } else {
            (eps.powf(-self.alpha) - m.powf(-self.alpha)) / (self.alpha * c)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Split,
    Retire,
    ErodeOut,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Split => "split",
            EventKind::Retire => "retire",
            EventKind::ErodeOut => "erode-out",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub parent_mass: f64,
    pub children: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Particle {
    /// Mass at `t_ref`.
    mass: f64,
    t_ref: f64,
    key: u64,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    seq: u64,
    split: bool,
    p: Particle,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // min-heap on (time, insertion order)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Mass accounting since the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Tally {
    pub initial: f64,
    pub retired: f64,
    pub eroded: f64,
    pub lost: f64,
    pub events: u64,
    pub last_retire: f64,
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub cutoff: f64,
    pub particle_limit: usize,
    pub log_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            particle_limit: DEFAULT_PARTICLE_LIMIT,
            log_events: false,
        }
    }
}

impl SimOptions {
    pub fn cutoff(cutoff: f64) -> Self {
        Self {
            cutoff,
            ..Self::default()
        }
    }
}

/// Finite multiset of masses above the cutoff, each with a pending event.
///
/// Every particle draws from its own stream keyed by its genealogy, so the
/// realization of a particle's subtree does not depend on the rest of the
/// system nor on the cutoff.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    dynamics: Dynamics,
    now: f64,
    cutoff: f64,
    limit: usize,
    streams: ParticleStreams,
    queue: BinaryHeap<Pending>,
    seq: u64,
    tally: Tally,
    log: Option<Vec<EventRecord>>,
    buf: Vec<f64>,
}

impl ParticleSystem {
    /// Particle `i` of `masses` gets key `i`.
    pub fn new(masses: &[f64], dynamics: &Dynamics, opts: &SimOptions, seed: u64) -> Result<Self> {
        let keyed: Vec<(f64, u64)> = masses.iter().enumerate().map(|(i, &m)| (m, i as u64)).collect();
        Self::with_keys(&keyed, dynamics, opts, seed)
    }

    pub fn with_keys(masses: &[(f64, u64)], dynamics: &Dynamics, opts: &SimOptions, seed: u64) -> Result<Self> {
        let cutoff = opts.cutoff;
        if !(cutoff >= 0.0 && cutoff.is_finite()) {
            return Err(invalid("cutoff", "must be a finite nonnegative mass"));
        }
        if cutoff == 0.0 && dynamics.alpha < 0.0 {
            return Err(invalid("cutoff", "a zero cutoff never terminates when alpha < 0"));
        }
        if masses.iter().any(|&(m, _)| !(m > 0.0 && m.is_finite())) {
            return Err(invalid("u0", "masses must be finite and positive"));
        }
        let mut sys = Self {
            dynamics: dynamics.clone(),
            now: 0.0,
            cutoff,
            limit: opts.particle_limit,
            streams: ParticleStreams::new(seed),
            queue: BinaryHeap::with_capacity(masses.len()),
            seq: 0,
            tally: Tally::default(),
            log: opts.log_events.then(Vec::new),
            buf: Vec::with_capacity(8),
        };
        for &(m, key) in masses {
            sys.tally.initial += m;
            if m <= cutoff {
                sys.tally.retired += m;
            } else {
                sys.schedule(Particle { mass: m, t_ref: 0.0, key });
            }
        }
        sys.guard()?;
        Ok(sys)
    }

    /// Adds particles born at the current time.
    pub fn immigrate(&mut self, masses: &[(f64, u64)]) -> Result<()> {
        for &(m, key) in masses {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("immigrant", "masses must be finite and positive"));
            }
            self.tally.initial += m;
            if m <= self.cutoff {
                self.tally.retired += m;
            } else {
                self.schedule(Particle {
                    mass: m,
                    t_ref: self.now,
                    key,
                });
            }
        }
        self.guard()
    }

    fn schedule(&mut self, p: Particle) {
        let (dt, split) = next_event(&self.dynamics, &self.streams, p.mass, p.key, self.cutoff);
        self.seq += 1;
        self.queue.push(Pending {
            time: p.t_ref + dt,
            seq: self.seq,
            split,
            p,
        });
    }

    fn guard(&self) -> Result<()> {
        if self.queue.len() > self.limit {
            Err(LabError::GuardBreach {
                count: self.queue.len(),
                limit: self.limit,
            })
        } else {
            Ok(())
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn events(&self) -> &[EventRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// Runs all events with time `≤ t_target`.
    pub fn evolve(&mut self, t_target: f64) -> Result<()> {
        if t_target < self.now {
            return Err(invalid("t_target", "cannot evolve backwards in time"));
        }
        while let Some(top) = self.queue.peek() {
            if top.time > t_target {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.fire(ev);
            self.guard()?;
        }
        if t_target.is_finite() {
            self.now = t_target;
        } else {
            self.now = self.tally.last_retire.max(self.now);
        }
        Ok(())
    }

    fn fire(&mut self, ev: Pending) {
        self.tally.events += 1;
        let p = ev.p;
        if !ev.split {
            // erosion brought the particle down to the cutoff
            self.tally.eroded += p.mass - self.cutoff;
            self.tally.retired += self.cutoff;
            self.tally.last_retire = self.tally.last_retire.max(ev.time);
            if let Some(log) = &mut self.log {
                log.push(EventRecord {
                    time: ev.time,
                    kind: EventKind::ErodeOut,
                    parent_mass: self.cutoff,
                    children: Vec::new(),
                });
            }
            return;
        }
        let m = self.dynamics.decay(p.mass, ev.time - p.t_ref);
        self.tally.eroded += p.mass - m;
        let mut rng = self.streams.rng(p.key);
        let _: f64 = rng.sample(Exp1); // the clock already consumed
        let mut buf = std::mem::take(&mut self.buf);
        self.dynamics.disl.sample(&mut rng, &mut buf);
        let n = buf.len();
        let mut given = 0.0;
        let mut children = self.log.as_ref().map(|_| Vec::with_capacity(n));
        for (j, &s) in buf.iter().enumerate() {
            let child = if self.dynamics.exact_remainder && j + 1 == n {
                (m - given).max(0.0)
            } else {
                m * s
            };
            given += child;
            if let Some(c) = &mut children {
                c.push(child);
            }
            if child <= self.cutoff {
                self.tally.retired += child;
                self.tally.last_retire = self.tally.last_retire.max(ev.time);
                if child > 0.0 {
                    if let Some(log) = &mut self.log {
                        log.push(EventRecord {
                            time: ev.time,
                            kind: EventKind::Retire,
                            parent_mass: m,
                            children: vec![child],
                        });
                    }
                }
            } else {
                self.schedule(Particle {
                    mass: child,
                    t_ref: ev.time,
                    key: child_key(p.key, j),
                });
            }
        }
        self.tally.lost += m - given;
        self.buf = buf;
        if let (Some(log), Some(children)) = (&mut self.log, children) {
            log.push(EventRecord {
                time: ev.time,
                kind: EventKind::Split,
                parent_mass: m,
                children,
            });
        }
    }

    /// Current masses, decreasing.
    pub fn masses(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .queue
            .iter()
            .map(|e| self.dynamics.decay(e.p.mass, self.now - e.p.t_ref))
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Current masses with their genealogical keys, sorted by key.
    pub fn keyed_masses(&self) -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> = self
            .queue
            .iter()
            .map(|e| (e.p.key, self.dynamics.decay(e.p.mass, self.now - e.p.t_ref)))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    /// `initial − current − retired − eroded − lost`, zero up to rounding.
    pub fn bookkeeping_residual(&self) -> f64 {
        let mut eroded_pending = 0.0;
        let mut current = Vec::with_capacity(self.queue.len());
        for e in self.queue.iter() {
            let m = self.dynamics.decay(e.p.mass, self.now - e.p.t_ref);
            current.push(m);
            eroded_pending += e.p.mass - m;
        }
        let t = &self.tally;
        t.initial - exact_sum(current) - t.retired - t.eroded - eroded_pending - t.lost
    }
}

/// Delay to the next event of a particle of mass `m` and whether it is a
/// split (`false`: erosion reaches the cutoff first).
fn next_event(dynamics: &Dynamics, streams: &ParticleStreams, m: f64, key: u64, cutoff: f64) -> (f64, bool) {
    let mut rng = streams.rng(key);
    let e: f64 = rng.sample(Exp1);
    let split = dynamics.split_delay(m, e);
    let cross = dynamics.crossing_delay(m, cutoff);
    if cross < split {
        (cross, false)
    } else {
        (split, true)
    }
}

/// Histogram over `edges` and moments `Σ m^p` of a multiset of masses.
pub fn snapshot_measure(masses: &[f64], edges: &[f64], powers: &[f64]) -> MeasureEstimate {
    let counts = histogram(masses, edges);
    let mut sorted = masses.to_vec();
    sorted.sort_by(f64::total_cmp);
    MeasureEstimate {
        bins: counts
            .iter()
            .enumerate()
            .map(|(i, &w)| Bin {
                lo: edges[i],
                hi: edges[i + 1],
                weight: w,
                se: 0.0,
            })
            .collect(),
        atoms: Vec::new(),
        moments: powers
            .iter()
            .map(|&p| MomentValue {
                p,
                value: exact_sum(sorted.iter().map(|m| m.powf(p))),
                se: 0.0,
            })
            .collect(),
        tag: EstimateTag::Empirical,
    }
}

/// First time at which every fragment of a particle of mass `start_mass`
/// has been retired below `eps` (`α < 0`).
///
/// Walks the genealogical tree depth first with the same per-particle
/// streams as [`ParticleSystem`], so no event queue is needed.
pub fn dust_time_eps(dynamics: &Dynamics, start_mass: f64, eps: f64, seed: u64, key: u64, event_limit: u64) -> Result<f64> {
    if dynamics.alpha >= 0.0 {
        return Err(invalid("alpha", "dust time requires alpha < 0"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    if start_mass <= eps {
        return Ok(0.0);
    }
    let streams = ParticleStreams::new(seed);
    let mut stack = vec![(start_mass, 0.0f64, key)];
    let mut buf = Vec::with_capacity(8);
    let mut tau = 0.0f64;
    let mut events = 0u64;
    while let Some((m, t0, k)) = stack.pop() {
        events += 1;
        if events > event_limit {
            return Err(LabError::GuardBreach {
                count: events as usize,
                limit: event_limit as usize,
            });
        }
        let (dt, split) = next_event(dynamics, &streams, m, k, eps);
        let t = t0 + dt;
        if !split {
            tau = tau.max(t);
            continue;
        }
        let m_now = dynamics.decay(m, dt);
        let mut rng = streams.rng(k);
        let _: f64 = rng.sample(Exp1);
        dynamics.disl.sample(&mut rng, &mut buf);
        let n = buf.len();
        let mut given = 0.0;
        for (j, &s) in buf.iter().enumerate() {
            let child = if dynamics.exact_remainder && j + 1 == n {
                (m_now - given).max(0.0)
            } else {
                m_now * s
            };
            given += child;
            if child <= eps {
                tau = tau.max(t);
            } else {
                stack.push((child, t, child_key(k, j)));
            }
        }
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Welford;

    fn binary(alpha: f64, c: f64) -> Dynamics {
        Dynamics::new(alpha, &DislocationSpec::binary_uniform(c)).unwrap()
    }

    #[test]
    fn rejects_analytic_only_and_zero_cutoff_dust() {
        assert!(Dynamics::new(0.0, &DislocationSpec::brownian_nu()).is_err());
        let d = binary(-1.0, 0.0);
        assert!(ParticleSystem::new(&[1.0], &d, &SimOptions::cutoff(0.0), 1).is_err());
    }

    #[test]
    fn first_split_is_standard_exponential() {
        for alpha in [-1.0, 0.0, 2.0] {
            let d = binary(alpha, 0.0);
            let w: Welford = (0..4000u64)
                .map(|r| {
                    let mut s = ParticleSystem::new(&[1.0], &d, &SimOptions::cutoff(1e-3), r).unwrap();
                    let mut t = 0.0;
                    loop {
                        t += 0.01;
                        s.evolve(t).unwrap();
                        if s.tally().events > 0 {
                            break t;
                        }
                    }
                })
                .collect();
            assert!((w.mean() - 1.0).abs() < 4.0 * w.estimate().se + 0.01, "alpha={alpha}: {}", w.mean());
        }
    }

    #[test]
    fn conservation_with_zero_cutoff() {
        let d = binary(0.0, 0.0);
        let mut s = ParticleSystem::new(&[1.0], &d, &SimOptions::cutoff(0.0), 4).unwrap();
        for t in [0.5, 1.0, 2.0, 3.0] {
            s.evolve(t).unwrap();
            assert!((exact_sum(s.masses()) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bookkeeping_balances_with_erosion_and_loss() {
        let disl = DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.3]), (0.5, vec![0.6, 0.4])], 0.2);
        for alpha in [-0.5, 0.0, 1.0] {
            let d = Dynamics::new(alpha, &disl).unwrap();
            let mut s = ParticleSystem::new(&[1.0, 2.5], &d, &SimOptions::cutoff(1e-3), 8).unwrap();
            for t in [0.3, 1.0, 4.0] {
                s.evolve(t).unwrap();
                assert!(s.bookkeeping_residual().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dfs_dust_time_matches_queue() {
        let d = binary(-1.0, 0.0);
        for r in 0..20 {
            let tau = dust_time_eps(&d, 1.0, 1e-2, r, 0, 1 << 30).unwrap();
            let mut s = ParticleSystem::new(&[1.0], &d, &SimOptions::cutoff(1e-2), r).unwrap();
            s.evolve(f64::INFINITY).unwrap();
            assert!(s.is_empty());
            assert_eq!(tau.to_bits(), s.tally().last_retire.to_bits(), "rep {r}");
        }
        assert_eq!(dust_time_eps(&d, 0.5, 0.5, 1, 0, 10).unwrap(), 0.0);
    }

    #[test]
    fn snapshot_trivia() {
        let empty = snapshot_measure(&[], &[0.1, 1.0], &[1.0]);
        assert_eq!(empty.total_weight(), 0.0);
        assert_eq!(empty.moments[0].value, 0.0);
        let one = snapshot_measure(&[1.0], &[0.1, 2.0], &[3.0]);
        assert_eq!(one.moments[0].value, 1.0);
    }
}
