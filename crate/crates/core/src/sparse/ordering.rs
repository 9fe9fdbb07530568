/// Geometric nested-dissection ordering of the cells of a Cartesian grid,
/// returned as `order[new] = cell id` with the first axis fastest in cell ids.
///
/// Periodic axes first peel off the plane of index 0, which cuts the
/// wrap-around couplings; the rest is split recursively along its longest axis.
pub fn grid_nested_dissection(cells: [usize; 3], periodic: [bool; 3]) -> Vec<usize> {
    let id = |i: usize, j: usize, k: usize| i + cells[0] * (j + cells[1] * k);
    let mut order = Vec::with_capacity(cells.iter().product());
    let mut lo = [0usize; 3];
    let mut separators: Vec<usize> = Vec::new();
    for a in 0..3 {
        if periodic[a] && cells[a] > 2 {
            // Cells with index 0 on axis a that are not already in an earlier separator.
            let mut ranges = [(lo[0], cells[0]), (lo[1], cells[1]), (lo[2], cells[2])];
            ranges[a] = (0, 1);
            for k in ranges[2].0..ranges[2].1 {
                for j in ranges[1].0..ranges[1].1 {
                    for i in ranges[0].0..ranges[0].1 {
                        separators.push(id(i, j, k));
                    }
                }
            }
            lo[a] = 1;
        }
    }
    dissect(lo, cells, &id, &mut order);
    // Separators from the last peeled axis come first in `separators`; eliminate them last.
    order.extend(separators);
    order
}

fn dissect(lo: [usize; 3], hi: [usize; 3], id: &dyn Fn(usize, usize, usize) -> usize, order: &mut Vec<usize>) {
    let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    if ext.contains(&0) {
        return;
    }
    let axis = (0..3).max_by_key(|&a| (ext[a], 3 - a)).expect("three axes");
    if ext[axis] <= 2 {
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    order.push(id(i, j, k));
                }
            }
        }
        return;
    }
    let mid = lo[axis] + ext[axis] / 2;
    let mut left_hi = hi;
    left_hi[axis] = mid;
    let mut right_lo = lo;
    right_lo[axis] = mid + 1;
    dissect(lo, left_hi, id, order);
    dissect(right_lo, hi, id, order);
    let mut sep_lo = lo;
    sep_lo[axis] = mid;
    let mut sep_hi = hi;
    sep_hi[axis] = mid + 1;
    for k in sep_lo[2]..sep_hi[2] {
        for j in sep_lo[1]..sep_hi[1] {
            for i in sep_lo[0]..sep_hi[0] {
                order.push(id(i, j, k));
            }
        }
    }
}
