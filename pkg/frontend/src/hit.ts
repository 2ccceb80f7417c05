import type { Ring, SegmentPolygon } from "./types.js";

function inRing(x: number, y: number, ring: Ring): boolean {
  // even-odd crossing test with the half-open vertex rule
  let inside = false;
  const n = ring.length;
  for (let i = 0; i < n; i++) {
    const [x1, y1] = ring[i];
    const [x2, y2] = ring[(i + 1) % n];
    if (y1 === y2) continue;
    const [lo, hi] = y1 < y2 ? [y1, y2] : [y2, y1];
    if (lo <= y && y < hi) {
      const cx = x1 + ((y - y1) * (x2 - x1)) / (y2 - y1);
      if (cx > x) inside = !inside;
    }
  }
  return inside;
}

interface Indexed {
  poly: SegmentPolygon;
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

/** Resolves image points to segment ids via the served boundary polygons. */
export class HitTester {
  private items: Indexed[];

  constructor(polygons: SegmentPolygon[]) {
    this.items = polygons.map((poly) => {
      const xs = poly.ring.map((p) => p[0]);
      const ys = poly.ring.map((p) => p[1]);
      return {
        poly,
        minX: Math.min(...xs),
        minY: Math.min(...ys),
        maxX: Math.max(...xs),
        maxY: Math.max(...ys),
      };
    });
  }

  /** Segment id at image point (x, y), or null outside the image. */
  segmentAt(x: number, y: number): number | null {
    for (const item of this.items) {
      if (x < item.minX || x > item.maxX || y < item.minY || y > item.maxY) continue;
      if (!inRing(x, y, item.poly.ring)) continue;
      let inHole = false;
      for (const hole of item.poly.holes) {
        if (inRing(x, y, hole)) {
          inHole = true;
          break;
        }
      }
      if (!inHole) return item.poly.id;
    }
    return null;
  }

  /** A point guaranteed to lie inside the polygon: the pixel just
   *  south-east of the ring's smallest vertex. */
  static interiorPoint(poly: SegmentPolygon): [number, number] {
    let best = poly.ring[0];
    for (const v of poly.ring) {
      if (v[0] < best[0] || (v[0] === best[0] && v[1] < best[1])) best = v;
    }
    return [best[0] + 0.5, best[1] + 0.5];
  }
}
