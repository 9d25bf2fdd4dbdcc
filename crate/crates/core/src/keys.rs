//! Direction and speed key vocabularies shared by the expert, the action
//! module and the scorer.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DirectionKey {
    FollowLane,
    ChangeLaneLeft,
    ChangeLaneRight,
    GoStraight,
    TurnLeft,
    TurnRight,
    DeviateLeft,
    DeviateRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpeedKey {
    Keep,
    Accelerate,
    Decelerate,
    Stop,
}

impl DirectionKey {
    pub const ALL: [DirectionKey; 8] = [
        DirectionKey::FollowLane,
        DirectionKey::ChangeLaneLeft,
        DirectionKey::ChangeLaneRight,
        DirectionKey::GoStraight,
        DirectionKey::TurnLeft,
        DirectionKey::TurnRight,
        DirectionKey::DeviateLeft,
        DirectionKey::DeviateRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DirectionKey::FollowLane => "FOLLOW_LANE",
            DirectionKey::ChangeLaneLeft => "CHANGE_LANE_LEFT",
            DirectionKey::ChangeLaneRight => "CHANGE_LANE_RIGHT",
            DirectionKey::GoStraight => "GO_STRAIGHT",
            DirectionKey::TurnLeft => "TURN_LEFT",
            DirectionKey::TurnRight => "TURN_RIGHT",
            DirectionKey::DeviateLeft => "DEVIATE_LEFT",
            DirectionKey::DeviateRight => "DEVIATE_RIGHT",
        }
    }

    /// Junction maneuvers; every other key is for open road.
    pub fn is_junction_key(&self) -> bool {
        matches!(self, DirectionKey::GoStraight | DirectionKey::TurnLeft | DirectionKey::TurnRight)
    }

    pub fn describe(&self) -> &'static str {
        match self {
            DirectionKey::FollowLane => "follow the current lane",
            DirectionKey::ChangeLaneLeft => "change to the left lane",
            DirectionKey::ChangeLaneRight => "change to the right lane",
            DirectionKey::GoStraight => "go straight through the junction",
            DirectionKey::TurnLeft => "turn left",
            DirectionKey::TurnRight => "turn right",
            DirectionKey::DeviateLeft => "shift slightly to the left within the lane",
            DirectionKey::DeviateRight => "shift slightly to the right within the lane",
        }
    }
}

impl SpeedKey {
    pub const ALL: [SpeedKey; 4] = [SpeedKey::Keep, SpeedKey::Accelerate, SpeedKey::Decelerate, SpeedKey::Stop];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpeedKey::Keep => "KEEP",
            SpeedKey::Accelerate => "ACCELERATE",
            SpeedKey::Decelerate => "DECELERATE",
            SpeedKey::Stop => "STOP",
        }
    }

    /// Position in STOP < DECELERATE < KEEP < ACCELERATE.
    pub fn severity_rank(&self) -> u8 {
        match self {
            SpeedKey::Stop => 0,
            SpeedKey::Decelerate => 1,
            SpeedKey::Keep => 2,
            SpeedKey::Accelerate => 3,
        }
    }

    /// The more conservative of two keys.
    pub fn min_rank(self, other: SpeedKey) -> SpeedKey {
        if other.severity_rank() < self.severity_rank() {
            other
        } else {
            self
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            SpeedKey::Keep => "keep the current speed",
            SpeedKey::Accelerate => "accelerate",
            SpeedKey::Decelerate => "decelerate",
            SpeedKey::Stop => "stop",
        }
    }
}

impl fmt::Display for DirectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for SpeedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DirectionKey::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown direction key {s:?}"))
    }
}

impl FromStr for SpeedKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpeedKey::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown speed key {s:?}"))
    }
}

/// Keys found in a policy answer; either class may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionKeys {
    pub direction: Option<DirectionKey>,
    pub speed: Option<SpeedKey>,
}

impl ActionKeys {
    pub fn new(direction: DirectionKey, speed: SpeedKey) -> Self {
        Self { direction: Some(direction), speed: Some(speed) }
    }

    pub fn is_empty(&self) -> bool {
        self.direction.is_none() && self.speed.is_none()
    }

    /// `"DIR, SPEED"` with missing classes omitted.
    pub fn render(&self) -> String {
        let parts: Vec<&str> = [self.direction.map(|d| d.as_str()), self.speed.map(|s| s.as_str())]
            .into_iter()
            .flatten()
            .collect();
        parts.join(", ")
    }
}

fn key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let mut words: Vec<&str> = DirectionKey::ALL.iter().map(|k| k.as_str()).collect();
        words.extend(SpeedKey::ALL.iter().map(|k| k.as_str()));
        // `\b` treats `_` as a word character, so FOLLOW_LANE never matches inside FOLLOW_LANES.
        Regex::new(&format!(r"(?i)\b({})\b", words.join("|"))).unwrap()
    })
}

/// Last occurrence of each key class, matched case-insensitively on word boundaries.
pub fn extract_keys(answer: &str) -> ActionKeys {
    let mut keys = ActionKeys::default();
    for m in key_regex().find_iter(answer) {
        let token = m.as_str();
        if let Ok(d) = token.parse::<DirectionKey>() {
            keys.direction = Some(d);
        } else if let Ok(s) = token.parse::<SpeedKey>() {
            keys.speed = Some(s);
        }
    }
    keys
}
