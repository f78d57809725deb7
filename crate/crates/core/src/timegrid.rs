//! Nested timescales. A tick on level `j` (1-based) is a tuple of `j`
//! zero-based coordinates; its prefix of length `j-1` is the parent tick.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical time stamp (in the unit of level-1 durations).
pub type Time = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tick(pub Vec<u32>);

impl Tick {
    pub fn new(coords: impl Into<Vec<u32>>) -> Self {
        Tick(coords.into())
    }

    /// 1-based timescale level.
    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, k: u32) -> Tick {
        let mut c = self.0.clone();
        c.push(k);
        Tick(c)
    }

    pub fn prefix(&self, len: usize) -> Tick {
        Tick(self.0[..len].to_vec())
    }

    pub fn last(&self) -> u32 {
        *self.0.last().expect("ticks are non-empty")
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl std::str::FromStr for Tick {
    type Err = Error;
    fn from_str(s: &str) -> Result<Tick> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let coords: std::result::Result<Vec<u32>, _> = t.split(',').map(|c| c.trim().parse::<u32>()).collect();
        match coords {
            Ok(c) if !c.is_empty() => Ok(Tick(c)),
            _ => Err(Error::Parse(format!("bad tick `{s}`"))),
        }
    }
}

/// Which ordering decides what information a decision may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpretation {
    /// Ticks sharing a physical time stamp are simultaneous.
    #[default]
    Simultaneous,
    /// Strict dictionary order: slower ticks decide before the faster ticks
    /// they coincide with.
    Sequential,
}

impl Interpretation {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Interpretation::Simultaneous),
            2 => Some(Interpretation::Sequential),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Interpretation::Simultaneous => 1,
            Interpretation::Sequential => 2,
        }
    }
}

/// Children per tick of one level: the same count everywhere, or one count
/// per parent in level order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Branching {
    Uniform(u32),
    PerParent(Vec<u32>),
}

/// Position of a tick inside the grid: 0-based level and index within the
/// level's ordered tick list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TickId {
    pub level: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    ticks: Vec<Tick>,
    start: Vec<Time>,
    duration: Vec<Time>,
    parent: Vec<usize>,
    first_child: Vec<usize>,
    child_count: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    levels: Vec<Level>,
    lookup: HashMap<Tick, TickId>,
    linear: Vec<TickId>,
    linear_pos: Vec<Vec<usize>>,
}

impl TimeGrid {
    /// Uniform grid: `horizon` level-1 ticks, each of unit duration, and
    /// `children[j]` children per tick of level `j+1`.
    pub fn uniform(horizon: u32, children: &[u32]) -> Result<Self> {
        let br: Vec<Branching> = children.iter().map(|&c| Branching::Uniform(c)).collect();
        Self::new(horizon, &br, None)
    }

    /// Builds a grid. `durations` gives the physical length of each level-1
    /// tick (default 1); children split their parent's duration evenly.
    pub fn new(horizon: u32, children: &[Branching], durations: Option<&[Time]>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Parse("grid horizon must be at least 1".into()));
        }
        let durs: Vec<Time> = match durations {
            Some(d) => {
                if d.len() != horizon as usize {
                    return Err(Error::Dimension { what: "level-1 durations".into(), expected: horizon as usize, got: d.len() });
                }
                if d.iter().any(|x| *x <= Time::from_integer(0)) {
                    return Err(Error::Parse("level-1 durations must be positive".into()));
                }
                d.to_vec()
            }
            None => vec![Time::from_integer(1); horizon as usize],
        };
        let mut start = Vec::with_capacity(durs.len());
        let mut t = Time::from_integer(0);
        for d in &durs {
            start.push(t);
            t += *d;
        }
        let mut levels = vec![Level {
            ticks: (0..horizon).map(|i| Tick(vec![i])).collect(),
            start,
            duration: durs,
            parent: Vec::new(),
            first_child: Vec::new(),
            child_count: Vec::new(),
        }];
        for (j, br) in children.iter().enumerate() {
            let prev = &levels[j];
            let np = prev.ticks.len();
            let counts: Vec<usize> = match br {
                Branching::Uniform(c) => vec![*c as usize; np],
                Branching::PerParent(v) => {
                    if v.len() != np {
                        return Err(Error::Dimension { what: format!("children of level {}", j + 1), expected: np, got: v.len() });
                    }
                    v.iter().map(|&c| c as usize).collect()
                }
            };
            if counts.iter().any(|&c| c == 0) {
                return Err(Error::Parse(format!("children counts of level {} must be at least 1", j + 1)));
            }
            let mut next = Level {
                ticks: Vec::new(),
                start: Vec::new(),
                duration: Vec::new(),
                parent: Vec::new(),
                first_child: Vec::new(),
                child_count: Vec::new(),
            };
            let mut fc = Vec::with_capacity(np);
            for p in 0..np {
                fc.push(next.ticks.len());
                let step = prev.duration[p] / Time::from_integer(counts[p] as i64);
                for k in 0..counts[p] {
                    next.ticks.push(prev.ticks[p].child(k as u32));
                    next.start.push(prev.start[p] + step * Time::from_integer(k as i64));
                    next.duration.push(step);
                    next.parent.push(p);
                }
            }
            levels[j].first_child = fc;
            levels[j].child_count = counts;
            levels.push(next);
        }
        let mut lookup = HashMap::new();
        for (l, lv) in levels.iter().enumerate() {
            for (i, t) in lv.ticks.iter().enumerate() {
                lookup.insert(t.clone(), TickId { level: l, index: i });
            }
        }
        let mut grid = TimeGrid { levels, lookup, linear: Vec::new(), linear_pos: Vec::new() };
        let mut linear = Vec::new();
        for i in 0..grid.levels[0].ticks.len() {
            grid.push_subtree(TickId { level: 0, index: i }, &mut linear);
        }
        let mut pos: Vec<Vec<usize>> = grid.levels.iter().map(|l| vec![0; l.ticks.len()]).collect();
        for (k, id) in linear.iter().enumerate() {
            pos[id.level][id.index] = k;
        }
        grid.linear = linear;
        grid.linear_pos = pos;
        Ok(grid)
    }

    fn push_subtree(&self, id: TickId, out: &mut Vec<TickId>) {
        out.push(id);
        if id.level + 1 < self.levels.len() {
            let lv = &self.levels[id.level];
            for c in lv.first_child[id.index]..lv.first_child[id.index] + lv.child_count[id.index] {
                self.push_subtree(TickId { level: id.level + 1, index: c }, out);
            }
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn horizon(&self) -> usize {
        self.levels[0].ticks.len()
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.levels[level].ticks.len()
    }

    pub fn num_ticks(&self) -> usize {
        self.linear.len()
    }

    pub fn tick(&self, id: TickId) -> &Tick {
        &self.levels[id.level].ticks[id.index]
    }

    pub fn id(&self, t: &Tick) -> Result<TickId> {
        self.lookup.get(t).copied().ok_or_else(|| Error::UnknownTick(t.to_string()))
    }

    pub fn contains(&self, t: &Tick) -> bool {
        self.lookup.contains_key(t)
    }

    pub fn start_time(&self, id: TickId) -> Time {
        self.levels[id.level].start[id.index]
    }

    pub fn duration(&self, id: TickId) -> Time {
        self.levels[id.level].duration[id.index]
    }

    /// Position of `id` in the linear (dictionary) order.
    pub fn linear_index(&self, id: TickId) -> usize {
        self.linear_pos[id.level][id.index]
    }

    /// Every tick in dictionary order.
    pub fn linear_ids(&self) -> &[TickId] {
        &self.linear
    }

    pub fn linearize(&self) -> Vec<Tick> {
        self.linear.iter().map(|&id| self.tick(id).clone()).collect()
    }

    pub fn parent_id(&self, id: TickId) -> Option<TickId> {
        (id.level > 0).then(|| TickId { level: id.level - 1, index: self.levels[id.level].parent[id.index] })
    }

    /// Ancestor of `id` on `level` (which must not be finer than `id`).
    pub fn ancestor(&self, mut id: TickId, level: usize) -> TickId {
        while id.level > level {
            id = self.parent_id(id).expect("level > 0");
        }
        id
    }

    /// Children of a non-finest tick, in order.
    pub fn children_ids(&self, id: TickId) -> Vec<TickId> {
        if id.level + 1 >= self.levels.len() {
            return Vec::new();
        }
        let lv = &self.levels[id.level];
        (lv.first_child[id.index]..lv.first_child[id.index] + lv.child_count[id.index])
            .map(|c| TickId { level: id.level + 1, index: c })
            .collect()
    }

    /// Index of `id` within its parent's segment (0 for level-1 ticks'
    /// position relative to the horizon start).
    pub fn position_in_segment(&self, id: TickId) -> usize {
        match self.parent_id(id) {
            Some(p) => id.index - self.levels[p.level].first_child[p.index],
            None => id.index,
        }
    }

    /// Next tick on the same level, crossing into the next segment when the
    /// current one is exhausted; `None` is the end marker.
    pub fn next_id(&self, id: TickId) -> Option<TickId> {
        (id.index + 1 < self.levels[id.level].ticks.len()).then(|| TickId { level: id.level, index: id.index + 1 })
    }

    pub fn prev_id(&self, id: TickId) -> Option<TickId> {
        (id.index > 0).then(|| TickId { level: id.level, index: id.index - 1 })
    }

    pub fn is_last_in_segment(&self, id: TickId) -> bool {
        match self.parent_id(id) {
            Some(p) => self.next_id(id).map_or(true, |n| self.parent_id(n) != Some(p)),
            None => self.next_id(id).is_none(),
        }
    }

    pub fn next_tick(&self, t: &Tick) -> Result<Option<Tick>> {
        let id = self.id(t)?;
        Ok(self.next_id(id).map(|n| self.tick(n).clone()))
    }

    pub fn parent_tick(&self, t: &Tick) -> Result<Tick> {
        let id = self.id(t)?;
        match self.parent_id(id) {
            Some(p) => Ok(self.tick(p).clone()),
            None => Err(Error::NoParent(t.to_string())),
        }
    }

    /// The level-(j+1) ticks governed by the level-j tick `parent`.
    pub fn segment(&self, parent: &Tick) -> Result<Vec<Tick>> {
        let id = self.id(parent)?;
        if id.level + 1 >= self.levels.len() {
            return Err(Error::FinestLevel(parent.to_string()));
        }
        Ok(self.children_ids(id).into_iter().map(|c| self.tick(c).clone()).collect())
    }

    pub fn compare(&self, a: &Tick, b: &Tick, interp: Interpretation) -> Result<Ordering> {
        let (ia, ib) = (self.id(a)?, self.id(b)?);
        Ok(self.compare_ids(ia, ib, interp))
    }

    pub fn compare_ids(&self, a: TickId, b: TickId, interp: Interpretation) -> Ordering {
        match interp {
            // Physical time is nondecreasing along dictionary order and only
            // ties for a tick and its chain of first children.
            Interpretation::Simultaneous => self.start_time(a).cmp(&self.start_time(b)),
            Interpretation::Sequential => self.linear_index(a).cmp(&self.linear_index(b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(c: &[u32]) -> Tick {
        Tick(c.to_vec())
    }

    #[test]
    fn next_tick_carries_into_next_segment() {
        let g = TimeGrid::uniform(2, &[4]).unwrap();
        assert_eq!(g.next_tick(&t(&[0, 1])).unwrap(), Some(t(&[0, 2])));
        assert_eq!(g.next_tick(&t(&[0, 3])).unwrap(), Some(t(&[1, 0])));
        let g1 = TimeGrid::uniform(1, &[]).unwrap();
        assert_eq!(g1.next_tick(&t(&[0])).unwrap(), None);
        assert!(matches!(g.next_tick(&t(&[5, 0])), Err(Error::UnknownTick(_))));
    }

    #[test]
    fn parent_is_prefix() {
        let g = TimeGrid::uniform(4, &[3, 2]).unwrap();
        assert_eq!(g.parent_tick(&t(&[0, 1, 1])).unwrap(), t(&[0, 1]));
        assert_eq!(g.parent_tick(&t(&[0, 0])).unwrap(), t(&[0]));
        assert_eq!(g.parent_tick(&t(&[3, 2, 0])).unwrap(), t(&[3, 2]));
        assert!(matches!(g.parent_tick(&t(&[1])), Err(Error::NoParent(_))));
    }

    #[test]
    fn segments() {
        let g = TimeGrid::uniform(2, &[4, 4]).unwrap();
        assert_eq!(g.segment(&t(&[0])).unwrap(), vec![t(&[0, 0]), t(&[0, 1]), t(&[0, 2]), t(&[0, 3])]);
        assert_eq!(
            g.segment(&t(&[1, 2])).unwrap(),
            vec![t(&[1, 2, 0]), t(&[1, 2, 1]), t(&[1, 2, 2]), t(&[1, 2, 3])]
        );
        assert!(matches!(g.segment(&t(&[1, 2, 0])), Err(Error::FinestLevel(_))));
        let single = TimeGrid::uniform(1, &[1]).unwrap();
        assert_eq!(single.segment(&t(&[0])).unwrap(), vec![t(&[0, 0])]);
    }

    #[test]
    fn compare_under_both_interpretations() {
        let g = TimeGrid::uniform(2, &[2, 2]).unwrap();
        use Interpretation::*;
        assert_eq!(g.compare(&t(&[0]), &t(&[0, 0]), Simultaneous).unwrap(), Ordering::Equal);
        assert_eq!(g.compare(&t(&[0]), &t(&[0, 0]), Sequential).unwrap(), Ordering::Less);
        for i in [Simultaneous, Sequential] {
            assert_eq!(g.compare(&t(&[0, 0, 1]), &t(&[0, 1]), i).unwrap(), Ordering::Less);
        }
    }

    #[test]
    fn linearize_examples() {
        let g = TimeGrid::uniform(2, &[2]).unwrap();
        assert_eq!(g.linearize(), vec![t(&[0]), t(&[0, 0]), t(&[0, 1]), t(&[1]), t(&[1, 0]), t(&[1, 1])]);
        let g = TimeGrid::uniform(3, &[]).unwrap();
        assert_eq!(g.linearize(), vec![t(&[0]), t(&[1]), t(&[2])]);
        let g = TimeGrid::uniform(1, &[2, 2]).unwrap();
        assert_eq!(
            g.linearize(),
            vec![t(&[0]), t(&[0, 0]), t(&[0, 0, 0]), t(&[0, 0, 1]), t(&[0, 1]), t(&[0, 1, 0]), t(&[0, 1, 1])]
        );
    }

    #[test]
    fn per_parent_children_and_durations() {
        let d = [Time::from_integer(4), Time::from_integer(2)];
        let g = TimeGrid::new(2, &[Branching::PerParent(vec![4, 1])], Some(&d)).unwrap();
        assert_eq!(g.level_len(1), 5);
        let id = g.id(&t(&[0, 3])).unwrap();
        assert_eq!(g.start_time(id), Time::from_integer(3));
        let id = g.id(&t(&[1, 0])).unwrap();
        assert_eq!(g.start_time(id), Time::from_integer(4));
        assert!(g.is_last_in_segment(id));
    }

    #[test]
    fn tick_parses_and_prints() {
        let x: Tick = "(0,1,2)".parse().unwrap();
        assert_eq!(x, t(&[0, 1, 2]));
        assert_eq!(x.to_string(), "(0,1,2)");
    }
}
