//! Deterministic, fully observable multi-agent laser grid world.
//!
//! Agents move simultaneously on a rectangular grid. Laser sources emit a
//! beam that kills any agent of a different colour standing in it; an agent
//! of the laser's own colour blocks the beam, making the tiles beyond it
//! safe. Collecting a gem or reaching an exit pays the team `+1`, a death
//! pays `-1` and ends the episode.
//!
//! Agent `k` has colour `k`. Exited agents stay on their exit tile: they keep
//! occupying it and keep blocking beams of their colour.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Largest supported team. Joint actions are indexed in base 5.
pub const MAX_AGENTS: usize = 8;
const MAX_SIDE: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("map contains no grid rows")]
    Empty,
    #[error("line {line}: expected {expected} tokens, found {found}")]
    NonRectangular {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("map has no exit tile")]
    NoExit,
    #[error("agent {0} has more than one start tile")]
    DuplicateStartId(usize),
    #[error("line {line}: unknown token `{token}`")]
    UnknownToken { line: usize, token: String },
    #[error("laser source at ({x}, {y}) points out of the grid")]
    BeamHitsNothing { x: usize, y: usize },
    #[error("line {line}: {reason}")]
    BadDirective { line: usize, reason: String },
    #[error("({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("agent {0} has no start tile and the spawn zone is empty")]
    MissingStart(usize),
    #[error("spawn tile ({x}, {y}) is not plain walkable floor")]
    InvalidSpawn { x: usize, y: usize },
    #[error("map declares no agents")]
    NoAgents,
    #[error("{0} agents exceed the supported maximum of {MAX_AGENTS}")]
    TooManyAgents(usize),
    #[error("{0} gems exceed the supported maximum of 64")]
    TooManyGems(usize),
    #[error("grid side of {0} tiles exceeds {MAX_SIDE}")]
    TooLarge(usize),
    #[error("no collision-free, survivable initial placement exists")]
    NoValidInitialState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("joint action {0} is not available in this state")]
    ActionUnavailable(JointAction),
    #[error("joint action has {found} moves for {expected} agents")]
    WrongArity { expected: usize, found: usize },
    #[error("the episode is already over")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    fn letter(self) -> char {
        match self {
            Direction::North => 'N',
            Direction::East => 'E',
            Direction::South => 'S',
            Direction::West => 'W',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'N' => Some(Direction::North),
            'E' => Some(Direction::East),
            'S' => Some(Direction::South),
            'W' => Some(Direction::West),
            _ => None,
        }
    }
}

/// A single agent's move. The declaration order is the action index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Move {
    North,
    East,
    South,
    West,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::North, Move::East, Move::South, Move::West, Move::Stay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Move::North => Some(Direction::North),
            Move::East => Some(Direction::East),
            Move::South => Some(Direction::South),
            Move::West => Some(Direction::West),
            Move::Stay => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Move::North => "N",
            Move::East => "E",
            Move::South => "S",
            Move::West => "W",
            Move::Stay => "Stay",
        }
    }
}

impl FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "North" | "north" => Ok(Move::North),
            "E" | "East" | "east" => Ok(Move::East),
            "S" | "South" | "south" => Ok(Move::South),
            "W" | "West" | "west" => Ok(Move::West),
            "Stay" | "stay" | "-" => Ok(Move::Stay),
            other => Err(format!("unknown move `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Wall,
    Exit,
    Gem,
    Start(usize),
    LaserSource { color: u8, direction: Direction },
}

impl Tile {
    pub fn is_walkable(self) -> bool {
        !matches!(self, Tile::Wall | Tile::LaserSource { .. })
    }

    fn token(self) -> String {
        match self {
            Tile::Floor => ".".into(),
            Tile::Wall => "@".into(),
            Tile::Exit => "X".into(),
            Tile::Gem => "G".into(),
            Tile::Start(k) => format!("S{k}"),
            Tile::LaserSource { color, direction } => format!("L{color}{}", direction.letter()),
        }
    }
}

/// Which beam tiles count as crossing a laser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CrossingRule {
    /// Newly occupying any tile of the unobstructed beam path.
    #[default]
    AnyBeamTile,
    /// Newly occupying the tile right next to the source.
    SourceAdjacent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Laser {
    pub id: usize,
    pub color: u8,
    pub source: Pos,
    pub direction: Direction,
    /// Tiles the beam covers when nothing blocks it, in propagation order.
    pub path: Vec<Pos>,
}

/// Static description of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub width: usize,
    pub height: usize,
    tiles: Vec<Tile>,
    pub n_agents: usize,
    starts: Vec<Option<Pos>>,
    pub spawn_zone: Vec<Pos>,
    /// Removed (position, move) pairs, in declaration order.
    pub disabled_edges: Vec<(Pos, Move)>,
    pub lasers: Vec<Laser>,
    pub gems: Vec<Pos>,
    pub exits: Vec<Pos>,
    pub crossing_rule: CrossingRule,
}

pub type Positions = SmallVec<[Pos; 4]>;
pub type Flags = SmallVec<[bool; 4]>;

/// Dynamic joint state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub positions: Positions,
    pub alive: Flags,
    pub exited: Flags,
    /// Bit `k` is set once the `k`-th gem (row-major order) is collected.
    pub gems_collected: u64,
    pub step_count: u32,
}

impl WorldState {
    pub fn new(positions: &[Pos]) -> Self {
        let n = positions.len();
        WorldState {
            positions: positions.iter().copied().collect(),
            alive: SmallVec::from_elem(true, n),
            exited: SmallVec::from_elem(false, n),
            gems_collected: 0,
            step_count: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn any_dead(&self) -> bool {
        self.alive.iter().any(|a| !a)
    }

    pub fn all_exited(&self) -> bool {
        self.exited.iter().all(|&e| e)
    }

    pub fn is_terminal(&self) -> bool {
        self.any_dead() || self.all_exited()
    }

    fn is_active(&self, agent: usize) -> bool {
        self.alive[agent] && !self.exited[agent]
    }

    /// Byte-stable identifier that ignores `step_count`. Fields appear in
    /// sorted name order.
    pub fn canonical_key(&self) -> String {
        let flags = |v: &Flags| {
            v.iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect::<String>()
        };
        let pos = self
            .positions
            .iter()
            .map(|p| format!("{}:{}", p.x, p.y))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "alive={};exited={};gems={:x};pos={}",
            flags(&self.alive),
            flags(&self.exited),
            self.gems_collected,
            pos
        )
    }

    /// Compact binary form of [`canonical_key`](Self::canonical_key), for hashing.
    pub fn write_key(&self, out: &mut Vec<u8>) {
        for p in &self.positions {
            out.push(p.x as u8);
            out.push(p.y as u8);
        }
        let mut mask = 0u16;
        for (i, (&a, &e)) in self.alive.iter().zip(&self.exited).enumerate() {
            mask |= (a as u16) << (2 * i);
            mask |= (e as u16) << (2 * i + 1);
        }
        out.extend_from_slice(&mask.to_le_bytes());
        if self.gems_collected != 0 {
            out.extend_from_slice(&self.gems_collected.to_le_bytes());
        }
    }
}

/// One move per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction(pub SmallVec<[Move; 4]>);

impl JointAction {
    pub fn new(moves: &[Move]) -> Self {
        JointAction(moves.iter().copied().collect())
    }

    pub fn stay(n_agents: usize) -> Self {
        JointAction(SmallVec::from_elem(Move::Stay, n_agents))
    }

    pub fn moves(&self) -> &[Move] {
        &self.0
    }

    /// Base-5 index with agent 0 as the most significant digit.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, m| acc * 5 + m.index())
    }

    pub fn from_index(mut index: usize, n_agents: usize) -> Self {
        let mut moves: SmallVec<[Move; 4]> = SmallVec::from_elem(Move::Stay, n_agents);
        for slot in moves.iter_mut().rev() {
            *slot = Move::ALL[index % 5];
            index /= 5;
        }
        JointAction(moves)
    }

    pub fn count(n_agents: usize) -> usize {
        5usize.pow(n_agents as u32)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(m.label())?;
        }
        Ok(())
    }
}

/// An (agent, laser) pair whose agent newly entered the laser's beam path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Crossing {
    pub agent: usize,
    pub laser: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: WorldState,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
    pub crossings: Vec<Crossing>,
}

pub fn parse_map(text: &str) -> Result<MapSpec, MapError> {
    MapSpec::parse(text)
}

enum Directive {
    Spawn(usize, usize),
    Disable(usize, usize, Move),
    Agents(usize),
}

fn parse_directive(line_no: usize, line: &str) -> Result<Option<Directive>, MapError> {
    let bad = |reason: &str| MapError::BadDirective {
        line: line_no,
        reason: reason.to_string(),
    };
    let body = &line[1..];
    if body.is_empty() || body.starts_with(char::is_whitespace) {
        return Ok(None);
    }
    let mut parts = body.split_whitespace();
    let name = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let coord = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(&format!("`{s}` is not a coordinate")))
    };
    match name {
        "spawn" => {
            if args.len() != 2 {
                return Err(bad("expected `#spawn <x> <y>`"));
            }
            Ok(Some(Directive::Spawn(coord(args[0])?, coord(args[1])?)))
        }
        "disable" => {
            if args.len() != 3 {
                return Err(bad("expected `#disable <x> <y> <move>`"));
            }
            let mv: Move = args[2].parse().map_err(|e: String| bad(&e))?;
            if mv == Move::Stay {
                return Err(bad("Stay cannot be disabled"));
            }
            Ok(Some(Directive::Disable(
                coord(args[0])?,
                coord(args[1])?,
                mv,
            )))
        }
        "agents" => {
            if args.len() != 1 {
                return Err(bad("expected `#agents <n>`"));
            }
            let n = args[0]
                .parse::<usize>()
                .map_err(|_| bad("agent count must be an integer"))?;
            Ok(Some(Directive::Agents(n)))
        }
        other => Err(MapError::UnknownToken {
            line: line_no,
            token: format!("#{other}"),
        }),
    }
}

fn parse_tile(line_no: usize, token: &str) -> Result<Tile, MapError> {
    let unknown = || MapError::UnknownToken {
        line: line_no,
        token: token.to_string(),
    };
    match token {
        "." => return Ok(Tile::Floor),
        "@" => return Ok(Tile::Wall),
        "X" => return Ok(Tile::Exit),
        "G" => return Ok(Tile::Gem),
        _ => {}
    }
    if let Some(id) = token.strip_prefix('S') {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        return id.parse().map(Tile::Start).map_err(|_| unknown());
    }
    if let Some(rest) = token.strip_prefix('L') {
        let mut chars = rest.chars();
        let (Some(c), Some(d), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(unknown());
        };
        let color = c.to_digit(10).ok_or_else(unknown)? as u8;
        let direction = Direction::from_letter(d).ok_or_else(unknown)?;
        return Ok(Tile::LaserSource { color, direction });
    }
    Err(unknown())
}

impl FromStr for MapSpec {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapSpec::parse(s)
    }
}

impl MapSpec {
    /// Parses the whitespace-separated map format. Lines starting with `#`
    /// followed by a name are directives; `#` followed by whitespace is a
    /// comment.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut rows: Vec<Vec<Tile>> = Vec::new();
        let mut directives = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                if let Some(d) = parse_directive(line_no, line)? {
                    directives.push((line_no, d));
                }
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| parse_tile(line_no, tok))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(MapError::NonRectangular {
                        line: line_no,
                        expected: first.len(),
                        found: row.len(),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let height = rows.len();
        let width = rows[0].len();
        if width > MAX_SIDE || height > MAX_SIDE {
            return Err(MapError::TooLarge(width.max(height)));
        }
        let tiles: Vec<Tile> = rows.into_iter().flatten().collect();

        let mut spawn_zone = Vec::new();
        let mut disabled_edges = Vec::new();
        let mut declared_agents = None;
        for (line, d) in directives {
            let check = |x: usize, y: usize| {
                if x < width && y < height {
                    Ok(())
                } else {
                    Err(MapError::OutOfBounds {
                        x,
                        y,
                        width,
                        height,
                    })
                }
            };
            match d {
                Directive::Spawn(x, y) => {
                    check(x, y)?;
                    spawn_zone.push(Pos::new(x, y));
                }
                Directive::Disable(x, y, mv) => {
                    check(x, y)?;
                    let edge = (Pos::new(x, y), mv);
                    if !disabled_edges.contains(&edge) {
                        disabled_edges.push(edge);
                    }
                }
                Directive::Agents(n) => {
                    if declared_agents.replace(n).is_some() {
                        return Err(MapError::BadDirective {
                            line,
                            reason: "`#agents` given twice".into(),
                        });
                    }
                }
            }
        }
        spawn_zone.sort();
        spawn_zone.dedup();

        let mut start_tiles: Vec<(usize, Pos)> = Vec::new();
        for (i, t) in tiles.iter().enumerate() {
            if let Tile::Start(k) = *t {
                if start_tiles.iter().any(|&(j, _)| j == k) {
                    return Err(MapError::DuplicateStartId(k));
                }
                start_tiles.push((k, Pos::new(i % width, i / width)));
            }
        }
        let max_start = start_tiles.iter().map(|&(k, _)| k + 1).max().unwrap_or(0);
        let n_agents = match declared_agents {
            Some(n) if n < max_start => {
                return Err(MapError::BadDirective {
                    line: 0,
                    reason: format!(
                        "`#agents {n}` is smaller than the highest start id {}",
                        max_start - 1
                    ),
                })
            }
            Some(n) => n,
            None => max_start,
        };
        let mut starts = vec![None; max_start.max(n_agents)];
        for (k, p) in start_tiles {
            starts[k] = Some(p);
        }

        let mut spec = MapSpec {
            width,
            height,
            tiles,
            n_agents: 0,
            starts,
            spawn_zone,
            disabled_edges,
            lasers: Vec::new(),
            gems: Vec::new(),
            exits: Vec::new(),
            crossing_rule: CrossingRule::default(),
        };
        spec.index_features()?;
        for &p in &spec.spawn_zone {
            if !matches!(spec.tile(p), Tile::Floor | Tile::Start(_)) {
                return Err(MapError::InvalidSpawn { x: p.x, y: p.y });
            }
        }
        spec.with_agents(n_agents)
    }

    fn index_features(&mut self) -> Result<(), MapError> {
        let mut lasers = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x, y);
                match self.tile(p) {
                    Tile::Exit => self.exits.push(p),
                    Tile::Gem => self.gems.push(p),
                    Tile::LaserSource { color, direction } => {
                        let mut path = Vec::new();
                        let mut cur = p;
                        loop {
                            match self.neighbour(cur, direction) {
                                Some(next) if self.tile(next).is_walkable() => {
                                    path.push(next);
                                    cur = next;
                                }
                                Some(_) => break,
                                None if path.is_empty() => {
                                    return Err(MapError::BeamHitsNothing { x, y })
                                }
                                None => break,
                            }
                        }
                        lasers.push(Laser {
                            id: lasers.len(),
                            color,
                            source: p,
                            direction,
                            path,
                        });
                    }
                    _ => {}
                }
            }
        }
        if self.exits.is_empty() {
            return Err(MapError::NoExit);
        }
        if self.gems.len() > 64 {
            return Err(MapError::TooManyGems(self.gems.len()));
        }
        self.lasers = lasers;
        Ok(())
    }

    /// Returns a copy of the map played by `n` agents. Agents without a start
    /// tile spawn in the spawn zone.
    pub fn with_agents(&self, n: usize) -> Result<Self, MapError> {
        if n == 0 {
            return Err(MapError::NoAgents);
        }
        if n > MAX_AGENTS {
            return Err(MapError::TooManyAgents(n));
        }
        let mut spec = self.clone();
        spec.n_agents = n;
        spec.starts.resize(n.max(spec.starts.len()), None);
        for agent in 0..n {
            if spec.starts[agent].is_none() && spec.spawn_zone.is_empty() {
                return Err(MapError::MissingStart(agent));
            }
        }
        let mut found = false;
        spec.for_each_placement(|_| {
            found = true;
            false
        });
        if !found {
            return Err(MapError::NoValidInitialState);
        }
        Ok(spec)
    }

    pub fn with_crossing_rule(mut self, rule: CrossingRule) -> Self {
        self.crossing_rule = rule;
        self
    }

    /// The map with only the first `n` disabled edges kept.
    pub fn variant(&self, n: usize) -> Self {
        let mut spec = self.clone();
        spec.disabled_edges.truncate(n);
        spec
    }

    pub fn tile(&self, p: Pos) -> Tile {
        self.tiles[p.y * self.width + p.x]
    }

    pub fn start(&self, agent: usize) -> Option<Pos> {
        self.starts.get(agent).copied().flatten()
    }

    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    fn neighbour(&self, p: Pos, d: Direction) -> Option<Pos> {
        let (dx, dy) = d.delta();
        let (x, y) = (p.x as isize + dx, p.y as isize + dy);
        self.in_bounds(x, y)
            .then(|| Pos::new(x as usize, y as usize))
    }

    fn gem_index(&self, p: Pos) -> Option<usize> {
        self.gems.iter().position(|&g| g == p)
    }

    /// Beam tiles of every laser given agent positions (index = colour).
    /// A same-colour agent's tile is the last tile of its beam.
    pub fn compute_beams(&self, positions: &[Pos]) -> Vec<Vec<Pos>> {
        self.lasers
            .iter()
            .map(|laser| {
                let blocker = positions.get(laser.color as usize).copied();
                let mut beam = Vec::with_capacity(laser.path.len());
                for &p in &laser.path {
                    beam.push(p);
                    if blocker == Some(p) {
                        break;
                    }
                }
                beam
            })
            .collect()
    }

    fn is_lethal(&self, agent: usize, p: Pos, beams: &[Vec<Pos>]) -> bool {
        self.lasers
            .iter()
            .zip(beams)
            .any(|(laser, beam)| laser.color as usize != agent && beam.contains(&p))
    }

    /// Calls `visit` on every collision-free, survivable initial placement in
    /// lexicographic order until it returns `false`.
    fn for_each_placement(&self, mut visit: impl FnMut(&[Pos]) -> bool) {
        let candidates: Vec<Vec<Pos>> = (0..self.n_agents)
            .map(|a| match self.start(a) {
                Some(p) => vec![p],
                None => self.spawn_zone.clone(),
            })
            .collect();
        let mut current = Vec::with_capacity(self.n_agents);
        self.placements_rec(&candidates, &mut current, &mut visit);
    }

    fn placements_rec(
        &self,
        candidates: &[Vec<Pos>],
        current: &mut Vec<Pos>,
        visit: &mut impl FnMut(&[Pos]) -> bool,
    ) -> bool {
        if current.len() == candidates.len() {
            if self.placement_is_valid(current) {
                return visit(current);
            }
            return true;
        }
        for &p in &candidates[current.len()] {
            if current.contains(&p) {
                continue;
            }
            current.push(p);
            let go_on = self.placements_rec(candidates, current, visit);
            current.pop();
            if !go_on {
                return false;
            }
        }
        true
    }

    fn placement_is_valid(&self, positions: &[Pos]) -> bool {
        let beams = self.compute_beams(positions);
        positions
            .iter()
            .enumerate()
            .all(|(a, &p)| !self.is_lethal(a, p, &beams))
    }

    /// All valid initial states (the set `S0`).
    pub fn initial_states(&self) -> Vec<WorldState> {
        let mut out = Vec::new();
        self.for_each_placement(|p| {
            out.push(WorldState::new(p));
            true
        });
        out
    }

    /// Draws an initial state uniformly among valid placements.
    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        let mut positions: Vec<Pos> = Vec::with_capacity(self.n_agents);
        for _ in 0..10_000 {
            positions.clear();
            for a in 0..self.n_agents {
                let p = match self.start(a) {
                    Some(p) => p,
                    None => self.spawn_zone[rng.gen_range(0..self.spawn_zone.len())],
                };
                positions.push(p);
            }
            let distinct = positions
                .iter()
                .enumerate()
                .all(|(i, p)| !positions[..i].contains(p));
            if distinct && self.placement_is_valid(&positions) {
                return WorldState::new(&positions);
            }
        }
        let all = self.initial_states();
        all[rng.gen_range(0..all.len())].clone()
    }

    fn move_is_legal(&self, from: Pos, mv: Move) -> Option<Pos> {
        let Some(dir) = mv.direction() else {
            return Some(from);
        };
        let to = self.neighbour(from, dir)?;
        if !self.tile(to).is_walkable() || self.disabled_edges.contains(&(from, mv)) {
            return None;
        }
        Some(to)
    }

    /// Legal individual moves of one agent, ignoring the other agents.
    pub fn agent_moves(&self, s: &WorldState, agent: usize) -> SmallVec<[(Move, Pos); 5]> {
        let from = s.positions[agent];
        if !s.is_active(agent) {
            return smallvec::smallvec![(Move::Stay, from)];
        }
        Move::ALL
            .iter()
            .filter_map(|&m| self.move_is_legal(from, m).map(|to| (m, to)))
            .collect()
    }

    /// Joint actions available in `s`, in ascending index order. Empty once the
    /// episode is over.
    pub fn available_actions(&self, s: &WorldState) -> Vec<JointAction> {
        let mut out = Vec::new();
        if s.is_terminal() {
            return out;
        }
        let per_agent: Vec<_> = (0..s.n_agents()).map(|a| self.agent_moves(s, a)).collect();
        let mut moves = SmallVec::<[Move; 4]>::new();
        let mut targets = SmallVec::<[Pos; 4]>::new();
        collect_joint(&per_agent, &s.positions, &mut moves, &mut targets, &mut out);
        out
    }

    pub fn is_available(&self, s: &WorldState, a: &JointAction) -> bool {
        if s.is_terminal() || a.0.len() != s.n_agents() {
            return false;
        }
        let mut targets = SmallVec::<[Pos; 4]>::new();
        for (agent, &m) in a.0.iter().enumerate() {
            if !s.is_active(agent) && m != Move::Stay {
                return false;
            }
            let Some(to) = self.move_is_legal(s.positions[agent], m) else {
                return false;
            };
            if conflicts(&s.positions, &targets, to) {
                return false;
            }
            targets.push(to);
        }
        true
    }

    /// Applies a joint action. `horizon` bounds the episode length; reaching it
    /// without terminating marks the outcome as truncated.
    pub fn step(
        &self,
        s: &WorldState,
        a: &JointAction,
        horizon: Option<u32>,
    ) -> Result<StepOutcome, StepError> {
        if s.is_terminal() {
            return Err(StepError::EpisodeOver);
        }
        if a.0.len() != s.n_agents() {
            return Err(StepError::WrongArity {
                expected: s.n_agents(),
                found: a.0.len(),
            });
        }
        if !self.is_available(s, a) {
            return Err(StepError::ActionUnavailable(a.clone()));
        }
        Ok(self.step_unchecked(s, a, horizon))
    }

    /// [`step`](Self::step) for an action already known to be available.
    pub fn step_unchecked(
        &self,
        s: &WorldState,
        a: &JointAction,
        horizon: Option<u32>,
    ) -> StepOutcome {
        let n = s.n_agents();
        let mut next = s.clone();
        for (agent, &m) in a.0.iter().enumerate() {
            if let Some(to) = self.move_is_legal(s.positions[agent], m) {
                next.positions[agent] = to;
            }
        }
        next.step_count = s.step_count + 1;

        let beams = self.compute_beams(&next.positions);
        let mut died = false;
        for agent in 0..n {
            if s.is_active(agent) && self.is_lethal(agent, next.positions[agent], &beams) {
                next.alive[agent] = false;
                died = true;
            }
        }

        let mut reward = 0.0;
        if died {
            reward = -1.0;
        } else {
            for agent in 0..n {
                if !s.is_active(agent) {
                    continue;
                }
                let p = next.positions[agent];
                if let Some(g) = self.gem_index(p) {
                    if next.gems_collected & (1 << g) == 0 {
                        next.gems_collected |= 1 << g;
                        reward += 1.0;
                    }
                }
                if self.tile(p) == Tile::Exit {
                    next.exited[agent] = true;
                    reward += 1.0;
                }
            }
        }

        let mut crossings = Vec::new();
        for agent in 0..n {
            if !next.alive[agent] || !s.is_active(agent) {
                continue;
            }
            let (before, after) = (s.positions[agent], next.positions[agent]);
            for laser in &self.lasers {
                let watched: &[Pos] = match self.crossing_rule {
                    CrossingRule::AnyBeamTile => &laser.path,
                    CrossingRule::SourceAdjacent => &laser.path[..laser.path.len().min(1)],
                };
                if watched.contains(&after) && !watched.contains(&before) {
                    crossings.push(Crossing {
                        agent,
                        laser: laser.id,
                    });
                }
            }
        }

        let terminal = next.is_terminal();
        let truncated = !terminal && horizon.is_some_and(|h| next.step_count >= h);
        StepOutcome {
            next_state: next,
            reward,
            terminal,
            truncated,
            crossings,
        }
    }

    /// ASCII picture of a state: agents as digits, live beams as `-`/`|`.
    pub fn render(&self, s: &WorldState) -> String {
        let beams = self.compute_beams(&s.positions);
        let mut out = String::new();
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| {
                    let p = Pos::new(x, y);
                    if let Some(a) = s.positions.iter().position(|&q| q == p) {
                        return if s.alive[a] {
                            format!("A{a}")
                        } else {
                            format!("D{a}")
                        };
                    }
                    let lit = self.lasers.iter().zip(&beams).find(|(_, b)| b.contains(&p));
                    match (self.tile(p), lit) {
                        (Tile::Floor | Tile::Start(_), Some((l, _))) => match l.direction {
                            Direction::East | Direction::West => "-".into(),
                            _ => "|".into(),
                        },
                        (t, _) => t.token(),
                    }
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Serializes back to the map file format.
    pub fn to_map_string(&self) -> String {
        let mut out = String::new();
        if self.starts.iter().take(self.n_agents).any(Option::is_none)
            || self.n_agents != self.max_start_id()
        {
            out.push_str(&format!("#agents {}\n", self.n_agents));
        }
        for p in &self.spawn_zone {
            out.push_str(&format!("#spawn {} {}\n", p.x, p.y));
        }
        for (p, m) in &self.disabled_edges {
            out.push_str(&format!("#disable {} {} {}\n", p.x, p.y, m.label()));
        }
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.tile(Pos::new(x, y)).token())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    fn max_start_id(&self) -> usize {
        self.starts
            .iter()
            .rposition(Option::is_some)
            .map_or(0, |i| i + 1)
    }
}

fn conflicts(from: &[Pos], targets: &[Pos], to: Pos) -> bool {
    let agent = targets.len();
    targets
        .iter()
        .enumerate()
        .any(|(other, &t)| t == to || (t == from[agent] && to == from[other]))
}

fn collect_joint(
    per_agent: &[SmallVec<[(Move, Pos); 5]>],
    from: &[Pos],
    moves: &mut SmallVec<[Move; 4]>,
    targets: &mut SmallVec<[Pos; 4]>,
    out: &mut Vec<JointAction>,
) {
    let agent = moves.len();
    if agent == per_agent.len() {
        out.push(JointAction(moves.clone()));
        return;
    }
    for &(m, to) in &per_agent[agent] {
        if conflicts(from, targets, to) {
            continue;
        }
        moves.push(m);
        targets.push(to);
        collect_joint(per_agent, from, moves, targets, out);
        moves.pop();
        targets.pop();
    }
}
