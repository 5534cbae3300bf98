//! Incremental 3D convex hull over input indices.
//!
//! Quickhull with outside sets. Orientation tests use a floating-point filter
//! with an exact rational fallback, so facet classification is never wrong;
//! degenerate inputs (all points affinely dependent) are rejected rather than
//! perturbed. Points exactly coplanar with a hull facet are treated as
//! interior and do not become vertices.

use nalgebra::Point3;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HullError {
    #[error("need at least 4 points for a 3D hull, got {0}")]
    TooFewPoints(usize),
    #[error("points are affinely dependent (collinear or coplanar)")]
    Degenerate,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("internal numerical failure: {0}")]
    Numerical(&'static str),
}

/// Sign of det[b-a, c-a, d-a]: +1 when d lies on the positive side of the
/// oriented plane (a, b, c).
fn orient3d(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> i32 {
    let adx = a.x - d.x;
    let ady = a.y - d.y;
    let adz = a.z - d.z;
    let bdx = b.x - d.x;
    let bdy = b.y - d.y;
    let bdz = b.z - d.z;
    let cdx = c.x - d.x;
    let cdy = c.y - d.y;
    let cdz = c.z - d.z;

    let bdxcdy = bdx * cdy;
    let cdxbdy = cdx * bdy;
    let cdxady = cdx * ady;
    let adxcdy = adx * cdy;
    let adxbdy = adx * bdy;
    let bdxady = bdx * ady;

    let det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady);
    let permanent = (bdxcdy.abs() + cdxbdy.abs()) * adz.abs()
        + (cdxady.abs() + adxcdy.abs()) * bdz.abs()
        + (adxbdy.abs() + bdxady.abs()) * cdz.abs();
    // Shewchuk's static filter bound for orient3d.
    const ERRBOUND: f64 = 7.771_561_172_376_103e-16;
    if det > ERRBOUND * permanent {
        return 1;
    }
    if det < -ERRBOUND * permanent {
        return -1;
    }
    orient3d_exact(a, b, c, d)
}

fn rat(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite coordinate")
}

fn orient3d_exact(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> i32 {
    let adx = rat(a.x) - rat(d.x);
    let ady = rat(a.y) - rat(d.y);
    let adz = rat(a.z) - rat(d.z);
    let bdx = rat(b.x) - rat(d.x);
    let bdy = rat(b.y) - rat(d.y);
    let bdz = rat(b.z) - rat(d.z);
    let cdx = rat(c.x) - rat(d.x);
    let cdy = rat(c.y) - rat(d.y);
    let cdz = rat(c.z) - rat(d.z);

    let det = adz * (&bdx * &cdy - &cdx * &bdy) + bdz * (&cdx * &ady - &adx * &cdy)
        + cdz * (&adx * &bdy - &bdx * &ady);
    if det.is_positive() {
        1
    } else if det.is_negative() {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone)]
struct Facet {
    verts: [usize; 3],
    /// adj[i] is the facet across edge (verts[i], verts[(i+1)%3]).
    adj: [usize; 3],
    outside: Vec<usize>,
    furthest: usize,
    furthest_dist: f64,
    alive: bool,
}

/// Result of a hull computation: the set of input indices that are vertices.
#[derive(Debug, Clone)]
pub struct Hull {
    pub vertex_indices: Vec<usize>,
}

struct Builder<'a> {
    pts: &'a [Point3<f64>],
    facets: Vec<Facet>,
    interior: Point3<f64>,
}

impl<'a> Builder<'a> {
    fn sees(&self, f: usize, p: usize) -> bool {
        let [a, b, c] = self.facets[f].verts;
        orient3d(&self.pts[a], &self.pts[b], &self.pts[c], &self.pts[p]) > 0
    }

    /// Rough distance from p to the facet plane; selection heuristic only.
    fn rough_dist(&self, f: usize, p: usize) -> f64 {
        let [a, b, c] = self.facets[f].verts;
        let n = (self.pts[b] - self.pts[a]).cross(&(self.pts[c] - self.pts[a]));
        n.dot(&(self.pts[p] - self.pts[a]))
    }

    fn push_facet(&mut self, verts: [usize; 3]) -> Result<usize, HullError> {
        // Orient so the interior reference point is on the negative side.
        let [a, b, c] = verts;
        let verts = match orient3d(&self.pts[a], &self.pts[b], &self.pts[c], &self.interior) {
            x if x < 0 => verts,
            x if x > 0 => [a, c, b],
            _ => return Err(HullError::Numerical("facet plane through interior point")),
        };
        self.facets.push(Facet {
            verts,
            adj: [usize::MAX; 3],
            outside: Vec::new(),
            furthest: usize::MAX,
            furthest_dist: f64::NEG_INFINITY,
            alive: true,
        });
        Ok(self.facets.len() - 1)
    }

    fn add_to_outside(&mut self, f: usize, p: usize) {
        let d = self.rough_dist(f, p);
        let fac = &mut self.facets[f];
        fac.outside.push(p);
        if d > fac.furthest_dist {
            fac.furthest_dist = d;
            fac.furthest = p;
        }
    }

    /// Assign each candidate to the first facet in `facet_ids` it strictly
    /// sees. When `fallback_all` is set, candidates seeing none of those are
    /// checked against every alive facet before being dropped as interior;
    /// any facet gaining its first outside point is pushed onto `queue`.
    fn assign_outside(
        &mut self,
        facet_ids: &[usize],
        candidates: Vec<usize>,
        fallback_all: bool,
        queue: &mut Vec<usize>,
    ) {
        for p in candidates {
            let mut placed = false;
            for &f in facet_ids {
                if self.facets[f].alive && self.sees(f, p) {
                    self.add_to_outside(f, p);
                    placed = true;
                    break;
                }
            }
            if !placed && fallback_all {
                for f in 0..self.facets.len() {
                    if self.facets[f].alive && self.sees(f, p) {
                        self.add_to_outside(f, p);
                        if self.facets[f].outside.len() == 1 {
                            queue.push(f);
                        }
                        break;
                    }
                }
            }
        }
    }
}

/// Compute the convex hull of `points`, returning the sorted indices of hull
/// vertices. Exact duplicates contribute only their first occurrence.
pub fn convex_hull_3d(points: &[Point3<f64>]) -> Result<Hull, HullError> {
    for (i, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(HullError::NonFinite(i));
        }
    }
    if points.len() < 4 {
        return Err(HullError::TooFewPoints(points.len()));
    }

    let (i0, i1, i2, i3) = initial_simplex(points)?;
    let interior = Point3::from(
        (points[i0].coords + points[i1].coords + points[i2].coords + points[i3].coords) / 4.0,
    );

    let mut b = Builder { pts: points, facets: Vec::new(), interior };
    let ids = [
        b.push_facet([i0, i1, i2])?,
        b.push_facet([i0, i1, i3])?,
        b.push_facet([i0, i2, i3])?,
        b.push_facet([i1, i2, i3])?,
    ];
    link_simplex(&mut b.facets)?;

    let simplex = [i0, i1, i2, i3];
    let candidates: Vec<usize> = (0..points.len()).filter(|i| !simplex.contains(i)).collect();
    let mut queue: Vec<usize> = Vec::new();
    b.assign_outside(&ids, candidates, false, &mut queue);
    queue.extend(ids.iter().copied().filter(|&f| !b.facets[f].outside.is_empty()));

    while let Some(f) = queue.pop() {
        if !b.facets[f].alive || b.facets[f].outside.is_empty() {
            continue;
        }
        let apex = b.facets[f].furthest;

        // Visible set: BFS over adjacency from f.
        let mut visible = vec![f];
        let mut seen = std::collections::HashSet::new();
        seen.insert(f);
        let mut stack = vec![f];
        while let Some(cur) = stack.pop() {
            for &nb in &b.facets[cur].adj {
                if seen.contains(&nb) || !b.facets[nb].alive {
                    continue;
                }
                if b.sees(nb, apex) {
                    seen.insert(nb);
                    visible.push(nb);
                    stack.push(nb);
                }
            }
        }

        // Horizon: edges of visible facets whose neighbor is not visible.
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new(); // (from, to, outer facet)
        for &v in &visible {
            for e in 0..3 {
                let nb = b.facets[v].adj[e];
                if !seen.contains(&nb) {
                    let a = b.facets[v].verts[e];
                    let t = b.facets[v].verts[(e + 1) % 3];
                    horizon.push((a, t, nb));
                }
            }
        }
        if horizon.is_empty() {
            return Err(HullError::Numerical("empty horizon"));
        }

        // Collect orphaned outside points before retiring facets.
        let mut orphans: Vec<usize> = Vec::new();
        for &v in &visible {
            orphans.append(&mut b.facets[v].outside);
            b.facets[v].alive = false;
        }
        orphans.retain(|&p| p != apex);

        // Build the new cone of facets around the apex.
        let mut apex_edges: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_ids = Vec::with_capacity(horizon.len());
        for &(a, t, outer) in &horizon {
            let nf = b.push_facet([a, t, apex])?;
            new_ids.push(nf);
            // Stitch across the horizon edge to the surviving outer facet.
            let oe = find_undirected_edge(&b.facets[outer].verts, a, t)
                .ok_or(HullError::Numerical("horizon edge not found in outer facet"))?;
            b.facets[outer].adj[oe] = nf;
            let ne = find_undirected_edge(&b.facets[nf].verts, a, t)
                .ok_or(HullError::Numerical("horizon edge lost on new facet"))?;
            b.facets[nf].adj[ne] = outer;
            // Cone-internal edges involving the apex pair up across new facets.
            for e in 0..3 {
                let (x, y) = (b.facets[nf].verts[e], b.facets[nf].verts[(e + 1) % 3]);
                if x == apex || y == apex {
                    let key = if x < y { (x, y) } else { (y, x) };
                    if let Some(&other) = apex_edges.get(&key) {
                        b.facets[nf].adj[e] = other;
                        let os = find_undirected_edge(&b.facets[other].verts, x, y)
                            .ok_or(HullError::Numerical("cone edge lost"))?;
                        b.facets[other].adj[os] = nf;
                    } else {
                        apex_edges.insert(key, nf);
                    }
                }
            }
        }
        for &nf in &new_ids {
            if b.facets[nf].adj.contains(&usize::MAX) {
                return Err(HullError::Numerical("open cone facet"));
            }
        }

        b.assign_outside(&new_ids, orphans, true, &mut queue);
        for &nf in &new_ids {
            if !b.facets[nf].outside.is_empty() {
                queue.push(nf);
            }
        }
    }

    let mut verts: Vec<usize> =
        b.facets.iter().filter(|f| f.alive).flat_map(|f| f.verts).collect();
    verts.sort_unstable();
    verts.dedup();
    Ok(Hull { vertex_indices: verts })
}

/// Slot of the edge {a, t} (either direction) in a facet's vertex cycle.
fn find_undirected_edge(verts: &[usize; 3], a: usize, t: usize) -> Option<usize> {
    (0..3).find(|&e| {
        let (x, y) = (verts[e], verts[(e + 1) % 3]);
        (x == a && y == t) || (x == t && y == a)
    })
}

/// Link the four initial simplex facets: each pair shares exactly one edge.
fn link_simplex(facets: &mut [Facet]) -> Result<(), HullError> {
    for i in 0..4 {
        for e in 0..3 {
            let a = facets[i].verts[e];
            let t = facets[i].verts[(e + 1) % 3];
            let j = (0..4)
                .find(|&j| j != i && facets[j].verts.contains(&a) && facets[j].verts.contains(&t))
                .ok_or(HullError::Numerical("simplex linking failed"))?;
            facets[i].adj[e] = j;
        }
    }
    Ok(())
}

/// Pick four affinely independent points, validated with exact predicates.
fn initial_simplex(points: &[Point3<f64>]) -> Result<(usize, usize, usize, usize), HullError> {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for (i, p) in points.iter().enumerate() {
        for a in 0..3 {
            if p[a] < points[lo[a]][a] {
                lo[a] = i;
            }
            if p[a] > points[hi[a]][a] {
                hi[a] = i;
            }
        }
    }
    let (mut i0, mut i1) = (lo[0], hi[0]);
    let mut best = f64::NEG_INFINITY;
    for a in 0..3 {
        let d = (points[hi[a]] - points[lo[a]]).norm_squared();
        if d > best {
            best = d;
            i0 = lo[a];
            i1 = hi[a];
        }
    }
    if i0 == i1 || !(best > 0.0) {
        return Err(HullError::Degenerate);
    }

    // Third point: farthest from the line (i0, i1).
    let dir = points[i1] - points[i0];
    let mut i2 = usize::MAX;
    let mut best = 0.0;
    for (i, p) in points.iter().enumerate() {
        let d = (p - points[i0]).cross(&dir).norm_squared();
        if d > best {
            best = d;
            i2 = i;
        }
    }
    if i2 == usize::MAX {
        return Err(HullError::Degenerate);
    }

    // Fourth point: farthest from the plane, validated exactly.
    let n = (points[i1] - points[i0]).cross(&(points[i2] - points[i0]));
    let mut i3 = usize::MAX;
    let mut best = 0.0;
    for (i, p) in points.iter().enumerate() {
        let d = n.dot(&(p - points[i0])).abs();
        if d > best {
            best = d;
            i3 = i;
        }
    }
    if i3 == usize::MAX || orient3d(&points[i0], &points[i1], &points[i2], &points[i3]) == 0 {
        return Err(HullError::Degenerate);
    }
    Ok((i0, i1, i2, i3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    #[test]
    fn cube_corners_are_vertices_interior_is_not() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(p(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            ));
        }
        pts.push(p(0.0, 0.0, 0.0));
        pts.push(p(0.25, -0.25, 0.5));
        let hull = convex_hull_3d(&pts).unwrap();
        assert_eq!(hull.vertex_indices, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn tetrahedron_is_its_own_hull() {
        let pts =
            vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0)];
        let hull = convex_hull_3d(&pts).unwrap();
        assert_eq!(hull.vertex_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert_eq!(convex_hull_3d(&[p(0.0, 0.0, 0.0)]).unwrap_err(), HullError::TooFewPoints(1));
        let coplanar = vec![
            p(0.0, 0.0, 0.0),
            p(1.0, 0.0, 0.0),
            p(0.0, 1.0, 0.0),
            p(1.0, 1.0, 0.0),
            p(0.5, 0.5, 0.0),
        ];
        assert_eq!(convex_hull_3d(&coplanar).unwrap_err(), HullError::Degenerate);
        let collinear: Vec<_> =
            (0..6).map(|i| p(i as f64, 2.0 * i as f64, -(i as f64))).collect();
        assert_eq!(convex_hull_3d(&collinear).unwrap_err(), HullError::Degenerate);
    }

    #[test]
    fn sphere_samples_are_all_vertices_interior_points_are_not() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut pts = Vec::new();
        let n_surface = 400;
        for _ in 0..n_surface {
            let v = nalgebra::Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            pts.push(Point3::from(v * 5.0));
        }
        for _ in 0..200 {
            let v = nalgebra::Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let r = rng.gen_range(0.0..4.0);
            pts.push(Point3::from(v * r));
        }
        let hull = convex_hull_3d(&pts).unwrap();
        assert_eq!(hull.vertex_indices, (0..n_surface).collect::<Vec<_>>());
    }

    #[test]
    fn membership_matches_leave_one_in_oracle() {
        // Oracle: i is a hull vertex iff i is a vertex of conv((pts \ {i}) ∪ {i}),
        // computed independently per point from a fresh hull.
        let mut rng = StdRng::seed_from_u64(6);
        let pts: Vec<Point3<f64>> = (0..40)
            .map(|_| {
                p(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let hull = convex_hull_3d(&pts).unwrap();
        for i in 0..pts.len() {
            let mut reordered: Vec<Point3<f64>> =
                (0..pts.len()).filter(|&j| j != i).map(|j| pts[j]).collect();
            reordered.push(pts[i]);
            let h2 = convex_hull_3d(&reordered).unwrap();
            let is_vertex = h2.vertex_indices.contains(&(reordered.len() - 1));
            assert_eq!(hull.vertex_indices.contains(&i), is_vertex, "disagreement at point {i}");
        }
    }

    #[test]
    fn duplicates_keep_first_occurrence_only() {
        let mut pts =
            vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0)];
        pts.push(p(0.0, 0.0, 1.0));
        let hull = convex_hull_3d(&pts).unwrap();
        assert_eq!(hull.vertex_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn exact_predicate_agrees_with_filter_on_clear_cases() {
        let a = p(0.0, 0.0, 0.0);
        let b = p(1.0, 0.0, 0.0);
        let c = p(0.0, 1.0, 0.0);
        assert_eq!(orient3d_exact(&a, &b, &c, &p(0.0, 0.0, 1.0)), orient3d(&a, &b, &c, &p(0.0, 0.0, 1.0)));
        assert_eq!(orient3d_exact(&a, &b, &c, &p(0.0, 0.0, -1.0)), -orient3d_exact(&a, &b, &c, &p(0.0, 0.0, 1.0)));
        assert_eq!(orient3d(&a, &b, &c, &p(0.5, 0.5, 0.0)), 0);
    }
}
