use proptest::prelude::*;
use proxyhand_core::scene::{
    Affordance, ConstraintKind, Scene, SceneObject, SpatialConstraint, TargetResolution,
};
use proxyhand_core::skeleton::Vec3;

const VIEWER: [f64; 3] = [0.0, 1.2, 1.0];

fn object(id: String, name: &str, p: [f64; 3]) -> SceneObject {
    SceneObject {
        id,
        name: name.into(),
        tags: vec![],
        position: Vec3::new(p[0], p[1], p[2]),
        half_extents: Vec3::new(0.02, 0.02, 0.02),
        affordance: Affordance::Grabbable,
    }
}

fn dist(p: [f64; 3]) -> f64 {
    ((p[0] - VIEWER[0]).powi(2) + (p[1] - VIEWER[1]).powi(2) + (p[2] - VIEWER[2]).powi(2)).sqrt()
}

/// Straightforward restatement of each constraint over index sets.
fn oracle(cubes: &[[f64; 3]], anchor: [f64; 3], constraints: &[ConstraintKind]) -> Vec<usize> {
    let mut set: Vec<usize> = (0..cubes.len()).collect();
    for &kind in constraints {
        let p = |i: usize| cubes[i];
        let all = |pred: &dyn Fn(usize, usize) -> bool, set: &[usize]| -> Vec<usize> {
            set.iter().copied().filter(|&i| set.iter().all(|&j| pred(i, j))).collect()
        };
        set = match kind {
            ConstraintKind::Below => set.into_iter().filter(|&i| p(i)[1] < anchor[1]).collect(),
            ConstraintKind::Above => set.into_iter().filter(|&i| p(i)[1] > anchor[1]).collect(),
            ConstraintKind::ToTheLeftOf => set.into_iter().filter(|&i| p(i)[0] < anchor[0]).collect(),
            ConstraintKind::ToTheRightOf => set.into_iter().filter(|&i| p(i)[0] > anchor[0]).collect(),
            ConstraintKind::InFrontOf => set.into_iter().filter(|&i| p(i)[2] > anchor[2]).collect(),
            ConstraintKind::Behind => set.into_iter().filter(|&i| p(i)[2] < anchor[2]).collect(),
            ConstraintKind::Closest => all(&|i, j| dist(p(i)) <= dist(p(j)), &set),
            ConstraintKind::Farthest => all(&|i, j| dist(p(i)) >= dist(p(j)), &set),
            ConstraintKind::First | ConstraintKind::OnTheLeft => all(&|i, j| p(i)[0] <= p(j)[0], &set),
            ConstraintKind::Last | ConstraintKind::OnTheRight => all(&|i, j| p(i)[0] >= p(j)[0], &set),
            ConstraintKind::InTheMiddle => {
                let n = set.len();
                let rank = |i: usize| set.iter().filter(|&&j| p(j)[0] < p(i)[0]).count();
                set.iter()
                    .copied()
                    .filter(|&i| {
                        let r = rank(i);
                        if n % 2 == 1 {
                            r == n / 2
                        } else {
                            r == n / 2 - 1 || r == n / 2
                        }
                    })
                    .collect()
            }
        };
        if set.is_empty() {
            break;
        }
    }
    set.sort_by(|&a, &b| cubes[a][0].total_cmp(&cubes[b][0]));
    set
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, 0.5f64..1.5, -1.0f64..1.0).prop_map(|(x, y, z)| [x, y, z])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn constraint_resolution_matches_brute_force(
        cubes in proptest::collection::vec(point(), 1..7),
        anchor in point(),
        kinds in proptest::collection::vec(proptest::sample::select(ConstraintKind::ALL.to_vec()), 1..3),
    ) {
        let mut objects: Vec<SceneObject> =
            cubes.iter().enumerate().map(|(i, p)| object(format!("cube_{i}"), "cube", *p)).collect();
        objects.push(object("anchor".into(), "lamp", anchor));
        let scene = Scene::with_viewer(objects, Vec3::new(VIEWER[0], VIEWER[1], VIEWER[2])).unwrap();
        let constraints: Vec<SpatialConstraint> = kinds
            .iter()
            .map(|&k| if k.is_relational() { SpatialConstraint::relative(k, "lamp") } else { SpatialConstraint::ordinal(k) })
            .collect();

        let want = oracle(&cubes, anchor, &kinds);
        let want = match want.len() {
            0 => TargetResolution::None,
            1 => TargetResolution::Unique(format!("cube_{}", want[0])),
            _ => TargetResolution::Ambiguous(want.iter().map(|i| format!("cube_{i}")).collect()),
        };
        prop_assert_eq!(scene.resolve_target("cube", &constraints), want);
    }
}

#[test]
fn unknown_anchor_resolves_to_nothing() {
    let scene = Scene::new(vec![object("c".into(), "cube", [0.0, 1.0, 0.0])]).unwrap();
    let c = [SpatialConstraint::relative(ConstraintKind::ToTheLeftOf, "giraffe")];
    assert_eq!(scene.resolve_target("cube", &c), TargetResolution::None);
}
