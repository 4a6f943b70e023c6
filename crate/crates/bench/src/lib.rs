//! Fixtures shared by the benchmarks.

use std::path::Path;

use intentgrid_core::{parse_map, GridMap};

/// The shipped 20×20 three-goal map.
pub fn shipped_map() -> GridMap {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../maps/paper_fig6.map");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_map(&text).expect("shipped map parses")
}

/// A `size`×`size` map with a goal in each far corner and a sparse pillar lattice.
pub fn pillar_map(size: usize) -> GridMap {
    let mut text = String::new();
    for y in 0..size {
        for x in 0..size {
            let c = match (x, y) {
                (0, 0) => '1',
                (x, 0) if x == size - 1 => '2',
                (0, y) if y == size - 1 => '3',
                (x, y) if x % 4 == 2 && y % 4 == 2 => '#',
                _ => '.',
            };
            text.push(c);
        }
        text.push('\n');
    }
    parse_map(&text).expect("generated map parses")
}
