/** Pan/zoom view transform between screen and image pixel coordinates. */
export class ViewTransform {
  scale = 1;
  offsetX = 0;
  offsetY = 0;

  imageToScreen(x: number, y: number): [number, number] {
    return [x * this.scale + this.offsetX, y * this.scale + this.offsetY];
  }

  screenToImage(sx: number, sy: number): [number, number] {
    return [(sx - this.offsetX) / this.scale, (sy - this.offsetY) / this.scale];
  }

  /** Zoom by a factor keeping the screen point (sx, sy) fixed. */
  zoomAt(factor: number, sx: number, sy: number): void {
    const [ix, iy] = this.screenToImage(sx, sy);
    this.scale *= factor;
    this.offsetX = sx - ix * this.scale;
    this.offsetY = sy - iy * this.scale;
  }

  pan(dx: number, dy: number): void {
    this.offsetX += dx;
    this.offsetY += dy;
  }

  /** Fit an image of the given size into a viewport, centered. */
  fit(imageW: number, imageH: number, viewW: number, viewH: number): void {
    this.scale = Math.min(viewW / imageW, viewH / imageH);
    this.offsetX = (viewW - imageW * this.scale) / 2;
    this.offsetY = (viewH - imageH * this.scale) / 2;
  }
}
