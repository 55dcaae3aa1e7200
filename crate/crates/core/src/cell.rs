use serde::{Deserialize, Serialize};

/// Three-state occupancy classification of a cell or a quadtree block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    /// `s+`
    Occupied,
    /// `s-`
    Free,
    /// `s0`
    Unknown,
}

impl CellState {
    pub fn symbol(self) -> char {
        match self {
            CellState::Occupied => '#',
            CellState::Free => '.',
            CellState::Unknown => '?',
        }
    }

    /// Two-bit wire code.
    pub fn code(self) -> u8 {
        match self {
            CellState::Occupied => 1,
            CellState::Free => 2,
            CellState::Unknown => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CellState::Unknown),
            1 => Some(CellState::Occupied),
            2 => Some(CellState::Free),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            CellState::Occupied => CellState::Free,
            CellState::Free => CellState::Occupied,
            CellState::Unknown => CellState::Unknown,
        }
    }

    /// One-hot encoding in `[occupied, free, unknown]` order.
    pub fn one_hot(self) -> [f32; 3] {
        match self {
            CellState::Occupied => [1.0, 0.0, 0.0],
            CellState::Free => [0.0, 1.0, 0.0],
            CellState::Unknown => [0.0, 0.0, 1.0],
        }
    }
}
