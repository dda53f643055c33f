/** World <-> screen transform with pan and zoom-about-cursor.
 *
 * World is meters, +y up; screen is pixels, +y down. `scale` is px/m.
 */

export class Camera {
  scale = 20;
  cx = 0; // world point at the canvas center
  cy = 0;

  fit(bounds: [number, number, number, number], w: number, h: number, marginPx = 40): void {
    const [x0, y0, x1, y1] = bounds;
    const spanX = Math.max(x1 - x0, 1e-6);
    const spanY = Math.max(y1 - y0, 1e-6);
    this.scale = Math.min((w - 2 * marginPx) / spanX, (h - 2 * marginPx) / spanY);
    this.scale = Math.max(this.scale, 1e-6);
    this.cx = (x0 + x1) / 2;
    this.cy = (y0 + y1) / 2;
  }

  toScreen(wx: number, wy: number, w: number, h: number): [number, number] {
    return [w / 2 + (wx - this.cx) * this.scale, h / 2 - (wy - this.cy) * this.scale];
  }

  toWorld(sx: number, sy: number, w: number, h: number): [number, number] {
    return [this.cx + (sx - w / 2) / this.scale, this.cy - (sy - h / 2) / this.scale];
  }

  panByPixels(dx: number, dy: number): void {
    this.cx -= dx / this.scale;
    this.cy += dy / this.scale;
  }

  /** Multiply scale by `factor`, keeping the world point under (sx, sy) fixed. */
  zoomAt(factor: number, sx: number, sy: number, w: number, h: number): void {
    const [wx, wy] = this.toWorld(sx, sy, w, h);
    this.scale = Math.min(Math.max(this.scale * factor, 0.5), 400);
    // re-solve the pan so (wx, wy) still projects to (sx, sy)
    this.cx = wx - (sx - w / 2) / this.scale;
    this.cy = wy + (sy - h / 2) / this.scale;
  }
}
