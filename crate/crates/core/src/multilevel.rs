//! Nested mesh hierarchy and the telescoping level decomposition.
//!
//! Level dimensions double per level, which does not put coarse nodes on fine
//! nodes (8 → 16 nodes), so transfer between levels interpolates in
//! normalized computational coordinates `u = i/(n_eta-1)`, `v = j/(n_xi-1)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{build_boundary, GeometryParams};
use crate::mesh::{generate_mesh, RelaxOptions, StructuredMesh};
use crate::thermal::ScalarField;

/// Deepest supported hierarchy.
pub const MAX_LEVELS: usize = 12;

/// `(n_eta, n_xi)` per level, coarsest first. Callers keep `levels` at most
/// [`MAX_LEVELS`].
pub fn level_dims(base: (usize, usize), levels: usize) -> Vec<(usize, usize)> {
    (0..levels)
        .map(|l| {
            let f = 1usize << l.min(usize::BITS as usize - 1);
            (base.0.saturating_mul(f), base.1.saturating_mul(f))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    pub params: GeometryParams,
    /// Coarsest first.
    pub levels: Vec<StructuredMesh>,
}

impl MeshHierarchy {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|m| m.dims()).collect()
    }

    pub fn finest(&self) -> &StructuredMesh {
        self.levels.last().expect("hierarchy has at least one level")
    }
}

/// Relaxed body-fitted mesh for every level.
pub fn build_hierarchy(
    params: &GeometryParams,
    levels: usize,
    base_dims: (usize, usize),
    relax: &RelaxOptions,
) -> Result<MeshHierarchy> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(Error::InputDomain(format!("levels must be in 1..={MAX_LEVELS}, got {levels}")));
    }
    if base_dims.0 < 3 || base_dims.1 < 3 {
        return Err(Error::InputDomain(format!(
            "base dimensions must be at least 3x3, got {}x{}",
            base_dims.0, base_dims.1
        )));
    }
    let meshes = level_dims(base_dims, levels)
        .into_iter()
        .enumerate()
        .map(|(l, (n_eta, n_xi))| {
            build_boundary(params, n_xi, n_eta, false)
                .and_then(|b| generate_mesh(&b, relax))
                .map(|r| r.mesh)
                .map_err(|e| e.at_level(l))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeshHierarchy {
        params: *params,
        levels: meshes,
    })
}

/// Source coordinate and weight for target index `k` of `n_to` on a grid of `n_from`.
#[inline]
fn locate(k: usize, n_to: usize, n_from: usize) -> (usize, f64) {
    if n_from == 1 {
        return (0, 0.0);
    }
    let s = (k * (n_from - 1)) as f64 / (n_to - 1) as f64;
    let lo = (s.floor() as usize).min(n_from - 2);
    (lo, s - lo as f64)
}

/// Bilinear interpolation onto a grid at least as large in both directions.
/// The level tag is carried over unchanged.
pub fn prolongate(field: &ScalarField, to_dims: (usize, usize)) -> Result<ScalarField> {
    let (r, c) = field.dims();
    let (tr, tc) = to_dims;
    if tr < r || tc < c {
        return Err(Error::InputDomain(format!(
            "cannot prolongate {r}x{c} onto smaller {tr}x{tc}"
        )));
    }
    if r < 2 || c < 2 {
        return Err(Error::InputDomain(format!("field too small to interpolate: {r}x{c}")));
    }
    let src = &field.values;
    let cols: Vec<(usize, f64)> = (0..tc).map(|j| locate(j, tc, c)).collect();
    let mut out = Array2::zeros((tr, tc));
    for i in 0..tr {
        let (i0, fi) = locate(i, tr, r);
        for (j, &(j0, fj)) in cols.iter().enumerate() {
            let a = src[[i0, j0]] * (1.0 - fj) + src[[i0, j0 + 1]] * fj;
            let b = src[[i0 + 1, j0]] * (1.0 - fj) + src[[i0 + 1, j0 + 1]] * fj;
            out[[i, j]] = a * (1.0 - fi) + b * fi;
        }
    }
    Ok(ScalarField::new(out, field.level))
}

/// `tilde[0]` is the coarsest solution; `tilde[l]` is the level-`l` solution
/// minus the prolongated level-`l-1` solution.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelDecomposition {
    pub tilde: Vec<ScalarField>,
}

impl LevelDecomposition {
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.tilde.iter().map(|f| f.dims()).collect()
    }
}

pub fn decompose(solutions: &[ScalarField]) -> Result<LevelDecomposition> {
    let first = solutions
        .first()
        .ok_or_else(|| Error::Data("no level solutions to decompose".into()))?;
    let mut tilde = vec![first.clone().with_level(0)];
    for (l, pair) in solutions.windows(2).enumerate() {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let lifted = prolongate(coarse, fine.dims()).map_err(|e| {
            Error::Data(format!("level {} does not refine level {l}: {e}", l + 1))
        })?;
        tilde.push(ScalarField::new(&fine.values - &lifted.values, l + 1));
    }
    Ok(LevelDecomposition { tilde })
}

/// Accumulate coarsest first: `acc ← prolongate(acc) + tilde[l]`.
pub fn recompose(dec: &LevelDecomposition) -> Result<ScalarField> {
    let mut parts = dec.tilde.iter();
    let mut acc = parts
        .next()
        .ok_or_else(|| Error::Data("empty decomposition".into()))?
        .clone();
    for part in parts {
        let lifted = prolongate(&acc, part.dims()).map_err(|e| Error::Data(e.to_string()))?;
        acc = ScalarField::new(&lifted.values + &part.values, part.level);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::jacobian_min;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn dims_double_per_level() {
        assert_eq!(level_dims((8, 32), 4), vec![(8, 32), (16, 64), (32, 128), (64, 256)]);
        assert_eq!(level_dims((5, 9), 1), vec![(5, 9)]);
    }

    #[test]
    fn hierarchy_levels_are_valid_meshes() {
        let p = GeometryParams::new(120.0, 12.0, 15.0, 35.0, 50.0);
        let h = build_hierarchy(&p, 3, (8, 32), &RelaxOptions::default()).unwrap();
        assert_eq!(h.dims(), vec![(8, 32), (16, 64), (32, 128)]);
        for m in &h.levels {
            assert!(jacobian_min(m).unwrap() > 0.0);
        }
        let single = build_hierarchy(&p, 1, (8, 32), &RelaxOptions::default()).unwrap();
        assert_eq!(single.dims(), vec![(8, 32)]);
        assert!(build_hierarchy(&p, 0, (8, 32), &RelaxOptions::default()).is_err());
        assert!(build_hierarchy(&p, 2, (2, 32), &RelaxOptions::default()).is_err());
    }

    #[test]
    fn hierarchy_failure_names_level() {
        let p = GeometryParams::new(120.0, 12.0, 15.0, 35.0, 50.0);
        let opts = RelaxOptions { max_iter: 20, ..RelaxOptions::default() };
        match build_hierarchy(&p, 2, (8, 32), &opts) {
            Err(Error::Level { level, .. }) => assert!(level <= 1),
            other => panic!("expected level error, got {other:?}"),
        }
    }

    #[test]
    fn prolongation_examples() {
        let f = ScalarField::new(array![[0.0, 1.0], [2.0, 3.0]], 0);
        let g = prolongate(&f, (3, 3)).unwrap();
        assert_eq!(g.values[[1, 1]], 1.5);
        assert_eq!(g.values[[0, 0]], 0.0);
        assert_eq!(g.values[[2, 2]], 3.0);

        let c = ScalarField::new(Array2::from_elem((4, 6), 7.25), 0);
        let g = prolongate(&c, (9, 17)).unwrap();
        assert!(g.values.iter().all(|&v| (v - 7.25).abs() < 1e-14));

        // bilinear in (u, v) is reproduced
        let lin = |u: f64, v: f64| 1.0 + 2.0 * u - 3.0 * v + 0.5 * u * v;
        let f = ScalarField::new(
            Array2::from_shape_fn((5, 7), |(i, j)| lin(i as f64 / 4.0, j as f64 / 6.0)),
            0,
        );
        let g = prolongate(&f, (11, 20)).unwrap();
        for ((i, j), v) in g.values.indexed_iter() {
            assert!((v - lin(i as f64 / 10.0, j as f64 / 19.0)).abs() < 1e-12);
        }

        assert!(prolongate(&g, (5, 20)).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let v1 = ScalarField::new(Array2::zeros((2, 2)), 0);
        let v2 = ScalarField::new(Array2::ones((3, 3)), 1);
        let dec = decompose(&[v1.clone(), v2.clone()]).unwrap();
        assert_eq!(dec.tilde[1].values, Array2::<f64>::ones((3, 3)));
        assert_eq!(recompose(&dec).unwrap().values, Array2::<f64>::ones((3, 3)));

        let single = decompose(std::slice::from_ref(&v2)).unwrap();
        assert_eq!(single.tilde, vec![v2.clone().with_level(0)]);

        // levels that are exact prolongations collapse to zero residuals
        let base = ScalarField::new(array![[1.0, 4.0, 2.0], [0.0, -1.0, 3.0], [5.0, 5.0, 5.0]], 0);
        let l2 = prolongate(&base, (5, 5)).unwrap();
        let l3 = prolongate(&base, (9, 9)).unwrap();
        let dec = decompose(&[base, l2, l3]).unwrap();
        assert!(dec.tilde[1..].iter().all(|t| t.values.iter().all(|v| v.abs() < 1e-14)));

        let zeros = LevelDecomposition {
            tilde: vec![ScalarField::zeros((2, 3), 0), ScalarField::zeros((4, 6), 1)],
        };
        assert!(recompose(&zeros).unwrap().values.iter().all(|&v| v == 0.0));

        assert!(decompose(&[]).is_err());
        let bad = decompose(&[ScalarField::zeros((4, 4), 0), ScalarField::zeros((3, 8), 1)]);
        assert!(matches!(bad, Err(Error::Data(_))));
    }

    fn arb_levels() -> impl Strategy<Value = Vec<ScalarField>> {
        (1usize..4, 2usize..5, 2usize..5).prop_flat_map(|(l, r, c)| {
            let dims = level_dims((r, c), l);
            dims.into_iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    prop::collection::vec(250.0f64..400.0, a * b).prop_map(move |v| {
                        ScalarField::new(Array2::from_shape_vec((a, b), v).unwrap(), k)
                    })
                })
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        #[test]
        fn telescoping_round_trip(levels in arb_levels()) {
            let dec = decompose(&levels).unwrap();
            let back = recompose(&dec).unwrap();
            prop_assert!(back.max_abs_diff(levels.last().unwrap()) <= 1e-12);
        }

        #[test]
        fn prolongation_is_linear(
            f in prop::collection::vec(-5.0f64..5.0, 12),
            g in prop::collection::vec(-5.0f64..5.0, 12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let ff = ScalarField::new(Array2::from_shape_vec((3, 4), f).unwrap(), 0);
            let gg = ScalarField::new(Array2::from_shape_vec((3, 4), g).unwrap(), 0);
            let comb = ScalarField::new(&ff.values * a + &gg.values * b, 0);
            let lhs = prolongate(&comb, (7, 9)).unwrap();
            let rhs = &prolongate(&ff, (7, 9)).unwrap().values * a + &prolongate(&gg, (7, 9)).unwrap().values * b;
            prop_assert!(lhs.max_abs_diff(&ScalarField::new(rhs, 0)) <= 1e-12);
            for (i, j) in [(0, 0), (0, 8), (6, 0), (6, 8)] {
                let (si, sj) = (i * 2 / 6, j * 3 / 8);
                prop_assert_eq!(prolongate(&ff, (7, 9)).unwrap().values[[i, j]], ff.values[[si, sj]]);
            }
        }
    }
}
