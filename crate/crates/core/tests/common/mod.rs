//! Oracles shared by the integration tests.

use std::collections::{HashMap, VecDeque};

use uied::pixelops::BinaryMap;

/// 8-connected components by breadth-first search; labels in raster order.
pub fn bfs_labels(b: &BinaryMap) -> Vec<u32> {
    let (w, h) = (b.width(), b.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !b.foreground()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if b.foreground()[j] && labels[j] == 0 {
                        labels[j] = next;
                        q.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}
