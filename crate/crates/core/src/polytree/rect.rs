use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AxisVertex, BoundaryCell, TreeSpec, Vertex};
use crate::error::{invalid, Result};

/// A finite union of boundary boxes `dS(alpha)`.
///
/// Canonical form: sorted, no duplicates, and no box contained in another.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Vertex>", into = "Vec<Vertex>")]
pub struct RectangularSet {
    boxes: Vec<Vertex>,
}

impl From<Vec<Vertex>> for RectangularSet {
    fn from(boxes: Vec<Vertex>) -> Self {
        RectangularSet::canonical(boxes)
    }
}

impl From<RectangularSet> for Vec<Vertex> {
    fn from(r: RectangularSet) -> Self {
        r.boxes
    }
}

impl RectangularSet {
    /// Validates every box against `tree` and canonicalizes.
    pub fn new(tree: &TreeSpec, boxes: Vec<Vertex>) -> Result<Self> {
        for b in &boxes {
            tree.check_vertex(b)?;
        }
        Ok(Self::canonical(boxes))
    }

    pub fn empty() -> Self {
        RectangularSet::default()
    }

    /// The whole distinguished boundary.
    pub fn full(tree: &TreeSpec) -> Self {
        RectangularSet {
            boxes: vec![tree.root()],
        }
    }

    fn canonical(mut boxes: Vec<Vertex>) -> Self {
        boxes.sort();
        boxes.dedup();
        let keep: Vec<bool> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| !boxes.iter().enumerate().any(|(j, c)| i != j && b.leq(c)))
            .collect();
        let boxes = boxes
            .into_iter()
            .zip(keep)
            .filter_map(|(b, k)| k.then_some(b))
            .collect();
        RectangularSet { boxes }
    }

    pub fn boxes(&self) -> &[Vertex] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn check(&self, tree: &TreeSpec) -> Result<()> {
        self.boxes.iter().try_for_each(|b| tree.check_vertex(b))
    }

    pub fn contains_cell(&self, tree: &TreeSpec, cell: &BoundaryCell) -> bool {
        let leaf = tree.cell_vertex(cell);
        self.boxes.iter().any(|b| leaf.leq(b))
    }

    /// Dense membership indicator over cells, in canonical cell order.
    pub fn cell_mask(&self, tree: &TreeSpec) -> Vec<bool> {
        let mut mask = vec![false; tree.cell_count()];
        for b in &self.boxes {
            for_each_cell_in(tree, &tree.cell_ranges(b), |i| mask[i] = true);
        }
        mask
    }

    /// The exact set of cells covered, without duplicates, in canonical order.
    pub fn cells(&self, tree: &TreeSpec) -> Vec<BoundaryCell> {
        self.cell_mask(tree)
            .into_iter()
            .enumerate()
            .filter(|&(_, m)| m)
            .map(|(i, _)| tree.cell_at(i))
            .collect()
    }

    /// `dS(v)` is a subset of this set.
    pub fn contains_box(&self, tree: &TreeSpec, v: &Vertex) -> bool {
        if self.boxes.iter().any(|b| v.leq(b)) {
            return true;
        }
        let mask = self.cell_mask(tree);
        let mut all = true;
        for_each_cell_in(tree, &tree.cell_ranges(v), |i| all &= mask[i]);
        all
    }
}

/// Calls `f` with the dense cell index of every cell in a product of ranges.
pub(crate) fn for_each_cell_in(
    tree: &TreeSpec,
    ranges: &[std::ops::Range<u64>],
    mut f: impl FnMut(usize),
) {
    let d = ranges.len();
    if ranges.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut cur: Vec<u64> = ranges.iter().map(|r| r.start).collect();
    loop {
        f(tree.cell_index(&BoundaryCell { cell: cur.clone() }));
        let mut j = d;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            cur[j] += 1;
            if cur[j] < ranges[j].end {
                break;
            }
            cur[j] = ranges[j].start;
        }
    }
}

/// `S_b(E)`: the union of boundary shadows of the vertices in `E`.
pub fn boundary_shadow(
    tree: &TreeSpec,
    set: &[Vertex],
) -> Result<(RectangularSet, Vec<BoundaryCell>)> {
    let r = RectangularSet::new(tree, set.to_vec())?;
    let cells = r.cells(tree);
    Ok((r, cells))
}

/// Descriptor for a generated family of rectangular sets.
///
/// Generators: `single-boxes` (`max_level`), `random-unions` (`k`, `count`,
/// `seed`) and `list` (`sets`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub gen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<Vertex>>>,
}

impl FamilySpec {
    pub fn single_boxes(max_level: u32) -> Self {
        FamilySpec {
            gen: "single-boxes".into(),
            max_level: Some(max_level),
            k: None,
            count: None,
            seed: None,
            sets: None,
        }
    }

    pub fn random_unions(k: usize, count: usize, seed: u64) -> Self {
        FamilySpec {
            gen: "random-unions".into(),
            max_level: None,
            k: Some(k),
            count: Some(count),
            seed: Some(seed),
            sets: None,
        }
    }

    pub fn list(sets: Vec<Vec<Vertex>>) -> Self {
        FamilySpec {
            gen: "list".into(),
            max_level: None,
            k: None,
            count: None,
            seed: None,
            sets: Some(sets),
        }
    }
}

pub fn random_vertex(tree: &TreeSpec, rng: &mut impl Rng) -> Vertex {
    let coords = tree
        .depths()
        .iter()
        .map(|&n| {
            let level = rng.random_range(0..n);
            AxisVertex {
                level,
                index: rng.random_range(0..1u64 << level),
            }
        })
        .collect();
    Vertex { coords }
}

/// Deterministic list of canonical rectangular sets.
pub fn rect_family(tree: &TreeSpec, spec: &FamilySpec) -> Result<Vec<RectangularSet>> {
    match spec.gen.as_str() {
        "single-boxes" => {
            let Some(max_level) = spec.max_level else {
                return invalid("single-boxes family needs max_level");
            };
            Ok(tree
                .vertices()
                .filter(|v| v.coords.iter().all(|a| a.level <= max_level))
                .map(|v| RectangularSet { boxes: vec![v] })
                .collect())
        }
        "random-unions" => {
            let (Some(k), Some(count), Some(seed)) = (spec.k, spec.count, spec.seed) else {
                return invalid("random-unions family needs k, count and seed");
            };
            if k == 0 {
                return invalid("random-unions needs k >= 1");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count)
                .map(|_| {
                    RectangularSet::canonical(
                        (0..k).map(|_| random_vertex(tree, &mut rng)).collect(),
                    )
                })
                .collect())
        }
        "list" => {
            let Some(sets) = &spec.sets else {
                return invalid("list family needs sets");
            };
            sets.iter()
                .map(|s| RectangularSet::new(tree, s.clone()))
                .collect()
        }
        other => invalid(format!("unknown family generator '{other}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    #[test]
    fn shadow_of_root_is_everything() {
        let t = TreeSpec::new(vec![3, 2]).unwrap();
        let (_, cells) = boundary_shadow(&t, &[t.root()]).unwrap();
        assert_eq!(cells.len(), t.cell_count());
    }

    #[test]
    fn shadow_of_left_half() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let (_, cells) = boundary_shadow(&t, &[v("1:0")]).unwrap();
        assert_eq!(
            cells,
            vec![BoundaryCell::new(vec![0]), BoundaryCell::new(vec![1])]
        );
    }

    #[test]
    fn overlapping_boxes_counted_once() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        // left half x everything, everything x left half: 8 + 8 - 4
        let (r, cells) = boundary_shadow(&t, &[v("1:0×0:0"), v("0:0×1:0")]).unwrap();
        assert_eq!(r.boxes().len(), 2);
        assert_eq!(cells.len(), 12);
    }

    #[test]
    fn canonical_drops_dominated_boxes() {
        let t = TreeSpec::uniform(1, 4).unwrap();
        let r = RectangularSet::new(&t, vec![v("2:1"), v("1:0"), v("3:7"), v("1:0")]).unwrap();
        assert_eq!(r.boxes(), &[v("1:0"), v("3:7")]);
        assert!(r.contains_box(&t, &v("2:1")));
        assert!(!r.contains_box(&t, &v("1:1")));
    }

    #[test]
    fn contains_box_detects_unions() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let r = RectangularSet::new(&t, vec![v("2:0"), v("2:1")]).unwrap();
        assert!(r.contains_box(&t, &v("1:0")));
    }

    #[test]
    fn families() {
        let t = TreeSpec::uniform(1, 4).unwrap();
        assert_eq!(
            rect_family(&t, &FamilySpec::single_boxes(2)).unwrap().len(),
            7
        );
        assert!(rect_family(&t, &FamilySpec::random_unions(3, 0, 1))
            .unwrap()
            .is_empty());
        let t2 = TreeSpec::uniform(2, 4).unwrap();
        let a = rect_family(&t2, &FamilySpec::random_unions(3, 10, 42)).unwrap();
        let b = rect_family(&t2, &FamilySpec::random_unions(3, 10, 42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let bad = FamilySpec {
            gen: "nope".into(),
            ..FamilySpec::single_boxes(1)
        };
        assert!(matches!(
            rect_family(&t, &bad),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn json_form() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let r = RectangularSet::new(&t, vec![v("1:0×2:3")]).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "[\"1:0×2:3\"]");
        assert_eq!(serde_json::from_str::<RectangularSet>(&s).unwrap(), r);
    }
}
