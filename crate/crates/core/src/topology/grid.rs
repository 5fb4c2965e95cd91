use crate::geometry::Domain;
use crate::vec2::Vec2;

/// Steps a cell stays blocked after a topology change near it.
pub const DEFAULT_BLOCK_STEPS: usize = 10;

/// A blocked world-space rectangle, active while `step < until`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub lo: Vec2,
    pub hi: Vec2,
    pub until: usize,
}

/// Uniform cell partition of the image domain.
///
/// Blocks are stored as world rectangles so they survive a change of cell size.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundGrid {
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    pub block_steps: usize,
    pub blocks: Vec<Block>,
}

impl BackgroundGrid {
    pub fn new(domain: Domain, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut g = BackgroundGrid {
            cell,
            nx: 0,
            ny: 0,
            domain,
            block_steps: DEFAULT_BLOCK_STEPS,
            blocks: Vec::new(),
        };
        g.resize(cell);
        g
    }

    pub fn resize(&mut self, cell: f64) {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        self.cell = cell;
        self.nx = ((self.domain.width / cell).ceil() as usize).max(1);
        self.ny = ((self.domain.height / cell).ceil() as usize).max(1);
    }

    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let f = |v: f64, n: usize| {
            let c = (v / self.cell).floor();
            if c.is_nan() || c < 0.0 {
                0
            } else {
                (c as usize).min(n - 1)
            }
        };
        (f(p.x, self.nx), f(p.y, self.ny))
    }

    pub fn index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.nx + cell.0
    }

    fn cell_centre(&self, cell: (usize, usize)) -> Vec2 {
        Vec2::new(
            (cell.0 as f64 + 0.5) * self.cell,
            (cell.1 as f64 + 0.5) * self.cell,
        )
    }

    /// Block one cell for `duration` steps starting at `step`.
    pub fn block_cell(&mut self, cell: (usize, usize), step: usize, duration: usize) {
        let lo = Vec2::new(cell.0 as f64 * self.cell, cell.1 as f64 * self.cell);
        self.blocks.push(Block {
            lo,
            hi: lo + Vec2::new(self.cell, self.cell),
            until: step + duration,
        });
    }

    /// Block the cell containing `p` and its eight neighbours for the default duration.
    pub fn block_point(&mut self, p: Vec2, step: usize) {
        let r = Vec2::new(1.5 * self.cell, 1.5 * self.cell);
        let c = self.cell_centre(self.cell_of(p));
        self.blocks.push(Block {
            lo: c - r,
            hi: c + r,
            until: step + self.block_steps,
        });
    }

    /// Block every cell touched by the segment `[a, b]` plus one cell of margin.
    pub fn block_segment(&mut self, a: Vec2, b: Vec2, step: usize) {
        let m = Vec2::new(1.5 * self.cell, 1.5 * self.cell);
        let lo = Vec2::new(a.x.min(b.x), a.y.min(b.y)) - m;
        let hi = Vec2::new(a.x.max(b.x), a.y.max(b.y)) + m;
        self.blocks.push(Block {
            lo,
            hi,
            until: step + self.block_steps,
        });
    }

    pub fn is_blocked(&self, cell: (usize, usize), step: usize) -> bool {
        let c = self.cell_centre(cell);
        self.blocks.iter().any(|b| {
            step < b.until && c.x >= b.lo.x && c.x <= b.hi.x && c.y >= b.lo.y && c.y <= b.hi.y
        })
    }

    pub fn is_blocked_point(&self, p: Vec2, step: usize) -> bool {
        self.is_blocked(self.cell_of(p), step)
    }

    /// Forget expired blocks.
    pub fn prune(&mut self, step: usize) {
        self.blocks.retain(|b| step < b.until);
    }

    pub fn is_outer(&self, cell: (usize, usize)) -> bool {
        cell.0 == 0 || cell.1 == 0 || cell.0 + 1 == self.nx || cell.1 + 1 == self.ny
    }
}
